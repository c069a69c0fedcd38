//! Dense complex statevectors. Bit `i` of a basis index is qubit `i`, and
//! ↑ (fermion present) is encoded as 1.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{CMatrix, Real, C};

/// Qubit configuration, indexed by qubit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bitstring {
    bits: Vec<bool>,
}

impl Bitstring {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(n: usize) -> Self {
        Self { bits: vec![false; n] }
    }

    pub fn from_index(index: usize, n: usize) -> Self {
        Self { bits: (0..n).map(|q| (index >> q) & 1 == 1).collect() }
    }

    /// Sites listed in `up` are ↑, all others ↓.
    pub fn from_sites(n: usize, up: &[usize]) -> Self {
        let mut b = Self::zeros(n);
        for &q in up {
            b.bits[q] = true;
        }
        b
    }

    /// Parses `0`/`1` text printed qubit-0-rightmost.
    pub fn parse(s: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for ch in s.trim().chars().rev() {
            match ch {
                '0' => bits.push(false),
                '1' => bits.push(true),
                _ => return Err(Error::Parse(format!("unexpected character {ch:?} in {s:?}"))),
            }
        }
        if bits.is_empty() {
            return Err(Error::Parse("empty bitstring".into()));
        }
        Ok(Self { bits })
    }

    /// Parses ket notation such as `↑↓↓`, written qubit-0-leftmost.
    pub fn from_ket(s: &str) -> Result<Self> {
        let mut bits = Vec::new();
        for ch in s.chars() {
            match ch {
                '↑' | 'u' | 'U' => bits.push(true),
                '↓' | 'd' | 'D' => bits.push(false),
                '|' | '⟩' | '>' | ' ' => {}
                _ => return Err(Error::Parse(format!("unexpected character {ch:?} in ket {s:?}"))),
            }
        }
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, q: usize) -> bool {
        self.bits[q]
    }

    pub fn set(&mut self, q: usize, v: bool) {
        self.bits[q] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn index(&self) -> usize {
        self.bits.iter().enumerate().fold(0, |acc, (q, &b)| if b { acc | (1 << q) } else { acc })
    }

    pub fn count_up(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in self.bits.iter().rev() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Measurement record: bitstring counts plus post-selection bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotTable {
    pub num_qubits: usize,
    pub counts: BTreeMap<Bitstring, u64>,
    pub total_shots: u64,
    pub postselected_shots: u64,
}

impl ShotTable {
    pub fn empty(num_qubits: usize) -> Self {
        Self { num_qubits, counts: BTreeMap::new(), total_shots: 0, postselected_shots: 0 }
    }

    pub fn from_counts(num_qubits: usize, counts: BTreeMap<Bitstring, u64>) -> Self {
        let n: u64 = counts.values().sum();
        Self { num_qubits, counts, total_shots: n, postselected_shots: n }
    }

    /// Keeps only strings with every listed qubit ↑. `total_shots` is retained.
    pub fn postselect(&self, qubits: &[usize]) -> Self {
        let counts: BTreeMap<_, _> = self
            .counts
            .iter()
            .filter(|(b, _)| qubits.iter().all(|&q| b.get(q)))
            .map(|(b, &c)| (b.clone(), c))
            .collect();
        let kept = counts.values().sum();
        Self { num_qubits: self.num_qubits, counts, total_shots: self.total_shots, postselected_shots: kept }
    }

    /// Shot-weighted occupation of each of the first `sites` qubits.
    pub fn occupations(&self, sites: usize) -> Vec<f64> {
        let mut n = vec![0.0; sites];
        if self.postselected_shots == 0 {
            return n;
        }
        for (b, &c) in &self.counts {
            for (q, v) in n.iter_mut().enumerate() {
                if b.get(q) {
                    *v += c as f64;
                }
            }
        }
        let s = self.postselected_shots as f64;
        n.iter_mut().for_each(|v| *v /= s);
        n
    }

    pub fn frequencies(&self) -> BTreeMap<Bitstring, f64> {
        let s = self.postselected_shots.max(1) as f64;
        self.counts.iter().map(|(b, &c)| (b.clone(), c as f64 / s)).collect()
    }
}

/// Complex amplitudes over `num_qubits` qubits. May be unnormalized; the norm
/// then tracks accumulated post-selection success.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T: Real> {
    num_qubits: usize,
    amps: Vec<C<T>>,
}

impl<T: Real> StateVector<T> {
    pub fn init_basis(bits: &Bitstring) -> Self {
        let n = bits.len();
        let mut amps = vec![C::zero(); 1 << n];
        amps[bits.index()] = C::one();
        Self { num_qubits: n, amps }
    }

    /// Equal-weight normalized superposition of distinct basis strings.
    pub fn superposition(terms: &[Bitstring]) -> Result<Self> {
        let first = terms.first().ok_or(Error::ZeroNorm)?;
        let n = first.len();
        let mut amps = vec![C::zero(); 1 << n];
        for t in terms {
            if t.len() != n {
                return Err(Error::Dimension { expected: n, found: t.len() });
            }
            amps[t.index()] += C::one();
        }
        let mut s = Self { num_qubits: n, amps };
        s.normalize()?;
        Ok(s)
    }

    pub fn from_amplitudes(num_qubits: usize, amps: Vec<C<T>>) -> Result<Self> {
        if amps.len() != 1 << num_qubits {
            return Err(Error::Dimension { expected: 1 << num_qubits, found: amps.len() });
        }
        Ok(Self { num_qubits, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C<T>] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C<T>] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C<T>> {
        self.amps
    }

    pub fn norm2(&self) -> T {
        self.amps.iter().fold(T::zero(), |s, a| s + a.norm_sqr())
    }

    pub fn inner(&self, other: &Self) -> Result<C<T>> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension { expected: self.dim(), found: other.dim() });
        }
        Ok(self.amps.iter().zip(&other.amps).fold(C::zero(), |s, (a, b)| s + a.conj() * b))
    }

    /// Rescales to unit norm and returns the previous norm².
    pub fn normalize(&mut self) -> Result<T> {
        let n2 = self.norm2();
        if n2 <= T::zero() || !n2.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let s = T::one() / n2.sqrt();
        self.amps.iter_mut().for_each(|a| *a = a.scale(s));
        Ok(n2)
    }

    pub fn normalized(&self) -> Result<Self> {
        let mut s = self.clone();
        s.normalize()?;
        Ok(s)
    }

    pub fn scale(&mut self, f: C<T>) {
        self.amps.iter_mut().for_each(|a| *a *= f);
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.num_qubits {
            return Err(Error::QubitRange { qubit: q, num_qubits: self.num_qubits });
        }
        Ok(())
    }

    /// Applies a `2^k × 2^k` operator to `targets`; bit `j` of the operator's
    /// local index addresses `targets[j]`. Non-unitary operators are allowed.
    pub fn apply(&mut self, op: &CMatrix<T>, targets: &[usize]) -> Result<()> {
        let k = targets.len();
        let d = 1usize << k;
        if op.nrows() != d || op.ncols() != d {
            return Err(Error::Dimension { expected: d, found: op.nrows().max(op.ncols()) });
        }
        let mut mask = 0usize;
        for &t in targets {
            self.check_qubit(t)?;
            if mask & (1 << t) != 0 {
                return Err(Error::DuplicateTarget(t));
            }
            mask |= 1 << t;
        }
        let offsets: Vec<usize> =
            (0..d).map(|l| (0..k).filter(|&j| (l >> j) & 1 == 1).fold(0, |o, j| o | (1 << targets[j]))).collect();
        let mut buf = vec![C::zero(); d];
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            for (l, &o) in offsets.iter().enumerate() {
                buf[l] = self.amps[base | o];
            }
            for (r, &o) in offsets.iter().enumerate() {
                let mut acc = C::zero();
                for (l, b) in buf.iter().enumerate() {
                    acc += op[(r, l)] * b;
                }
                self.amps[base | o] = acc;
            }
        }
        Ok(())
    }

    /// Zeroes the branch opposite to `up` on `qubit`. Returns the kept
    /// branch's share of the input norm²; the state is not renormalized.
    pub fn project(&mut self, qubit: usize, up: bool) -> Result<T> {
        self.check_qubit(qubit)?;
        let before = self.norm2();
        if before <= T::zero() {
            return Err(Error::ZeroNorm);
        }
        for (i, a) in self.amps.iter_mut().enumerate() {
            if ((i >> qubit) & 1 == 1) != up {
                *a = C::zero();
            }
        }
        Ok(self.norm2() / before)
    }

    /// ⟨Z_q⟩ on the normalized state, with ↑ = +1.
    pub fn expect_z(&self, qubit: usize) -> Result<T> {
        self.check_qubit(qubit)?;
        let n2 = self.norm2();
        if n2 <= T::zero() {
            return Err(Error::ZeroNorm);
        }
        let z = self.amps.iter().enumerate().fold(T::zero(), |s, (i, a)| {
            if (i >> qubit) & 1 == 1 {
                s + a.norm_sqr()
            } else {
                s - a.norm_sqr()
            }
        });
        Ok(z / n2)
    }

    /// Appends `k` qubits in ↑ above the existing ones.
    pub fn with_ancillas(&self, k: usize) -> Self {
        let dim = self.amps.len();
        let mut amps = vec![C::zero(); dim << k];
        let off = ((1usize << k) - 1) * dim;
        amps[off..off + dim].copy_from_slice(&self.amps);
        Self { num_qubits: self.num_qubits + k, amps }
    }

    /// Drops the top `k` qubits, keeping the all-↑ slice of those qubits.
    pub fn ancilla_up_slice(&self, k: usize) -> Self {
        let n = self.num_qubits - k;
        let dim = 1usize << n;
        let off = ((1usize << k) - 1) * dim;
        Self { num_qubits: n, amps: self.amps[off..off + dim].to_vec() }
    }

    /// Multinomial draw of `shots` bitstrings from |amplitude|²/norm².
    pub fn sample(&self, shots: u64, seed: u64) -> Result<ShotTable> {
        let mut table = ShotTable::empty(self.num_qubits);
        if shots == 0 {
            return Ok(table);
        }
        let w: Vec<f64> = self.amps.iter().map(|a| a.norm_sqr().f64()).collect();
        let dist = WeightedIndex::new(&w).map_err(|_| Error::ZeroNorm)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hist = vec![0u64; w.len()];
        for _ in 0..shots {
            hist[dist.sample(&mut rng)] += 1;
        }
        for (i, &c) in hist.iter().enumerate() {
            if c > 0 {
                table.counts.insert(Bitstring::from_index(i, self.num_qubits), c);
            }
        }
        table.total_shots = shots;
        table.postselected_shots = shots;
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::c;
    use proptest::prelude::*;

    type S = StateVector<f64>;

    fn x_gate() -> CMatrix<f64> {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    fn random_state(n: usize, vals: &[f64]) -> S {
        let amps = (0..1 << n).map(|i| C::new(vals[2 * i], vals[2 * i + 1])).collect();
        S::from_amplitudes(n, amps).unwrap()
    }

    fn random_unitary(d: usize, vals: &[f64]) -> CMatrix<f64> {
        let m = CMatrix::from_fn(d, d, |i, j| C::new(vals[2 * (i * d + j)], vals[2 * (i * d + j) + 1]));
        m.qr().q()
    }

    #[test]
    fn basis_encoding() {
        assert_eq!(S::init_basis(&Bitstring::zeros(6)).amplitudes()[0], C::one());
        let b = Bitstring::from_ket("↓↓↑↓↓↓").unwrap();
        assert_eq!(b.index(), 4);
        let b = Bitstring::from_ket("↑↑↑↑↓↓↓↓").unwrap();
        assert_eq!(b.index(), 15);
        let s = S::init_basis(&b);
        assert_eq!(s.amplitudes()[15], C::one());
        assert_eq!(s.norm2(), 1.0);
    }

    #[test]
    fn bitstring_text_roundtrip() {
        let b = Bitstring::parse("001000").unwrap();
        assert_eq!(b.index(), 8);
        assert_eq!(b.to_string(), "001000");
        assert!(Bitstring::parse("01x").is_err());
    }

    #[test]
    fn x_on_qubit0() {
        let mut s = S::init_basis(&Bitstring::zeros(3));
        s.apply(&x_gate(), &[0]).unwrap();
        assert_eq!(s.amplitudes()[1], C::one());
    }

    #[test]
    fn loss_matrix_halves_down_amplitude() {
        let phi = 2f64.ln();
        let r = CMatrix::from_row_slice(2, 2, &[c((-phi).exp(), 0.), c(0., 0.), c(0., 0.), c(1., 0.)]);
        let mut s = S::init_basis(&Bitstring::zeros(1));
        s.apply(&r, &[0]).unwrap();
        assert!((s.amplitudes()[0].re - 0.5).abs() < 1e-15);
        assert!((s.norm2() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn apply_errors() {
        let mut s = S::init_basis(&Bitstring::zeros(2));
        assert_eq!(s.apply(&CMatrix::identity(4, 4), &[0, 0]), Err(Error::DuplicateTarget(0)));
        assert!(matches!(s.apply(&CMatrix::identity(2, 2), &[0, 1]), Err(Error::Dimension { .. })));
        assert!(matches!(s.apply(&x_gate(), &[5]), Err(Error::QubitRange { .. })));
    }

    #[test]
    fn two_qubit_apply_matches_kron() {
        // Operator on targets [2, 0] of a 3-qubit register against an explicit
        // permutation-and-kron construction.
        let vals: Vec<f64> = (0..64).map(|i| ((i * 37 % 17) as f64 - 8.0) / 7.0).collect();
        let op = CMatrix::from_fn(4, 4, |i, j| C::new(vals[i * 4 + j], vals[16 + i * 4 + j]));
        let psi = random_state(3, &vals);
        let mut a = psi.clone();
        a.apply(&op, &[2, 0]).unwrap();
        let full = CMatrix::from_fn(8, 8, |r, cidx| {
            let loc = |i: usize| ((i >> 2) & 1) | ((i & 1) << 1);
            if (r >> 1) & 1 != (cidx >> 1) & 1 {
                C::zero()
            } else {
                op[(loc(r), loc(cidx))]
            }
        });
        let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
        let w = full * v;
        for i in 0..8 {
            assert!((w[i] - a.amplitudes()[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn projection_examples() {
        let mut s = S::init_basis(&Bitstring::new(vec![true]));
        assert_eq!(s.project(0, true).unwrap(), 1.0);
        let h = 0.5f64.sqrt();
        let mut s = S::from_amplitudes(1, vec![C::new(h, 0.), C::new(h, 0.)]).unwrap();
        let p = s.project(0, true).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!((s.amplitudes()[1].re - h).abs() < 1e-15);
        assert_eq!(s.amplitudes()[0], C::zero());
    }

    #[test]
    fn expect_z_examples() {
        let up = S::init_basis(&Bitstring::new(vec![true]));
        let down = S::init_basis(&Bitstring::new(vec![false]));
        assert_eq!(up.expect_z(0).unwrap(), 1.0);
        assert_eq!(down.expect_z(0).unwrap(), -1.0);
        let plus = S::superposition(&[Bitstring::new(vec![true]), Bitstring::new(vec![false])]).unwrap();
        assert!(plus.expect_z(0).unwrap().abs() < 1e-15);
        let zero = S::from_amplitudes(1, vec![C::zero(); 2]).unwrap();
        assert_eq!(zero.expect_z(0), Err(Error::ZeroNorm));
    }

    #[test]
    fn inner_orthogonal() {
        let up = S::init_basis(&Bitstring::new(vec![true]));
        let down = S::init_basis(&Bitstring::new(vec![false]));
        assert_eq!(up.inner(&down).unwrap(), C::zero());
        assert!(up.inner(&S::init_basis(&Bitstring::zeros(2))).is_err());
    }

    #[test]
    fn ancilla_roundtrip() {
        let psi = S::superposition(&[Bitstring::parse("01").unwrap(), Bitstring::parse("10").unwrap()]).unwrap();
        let ext = psi.with_ancillas(2);
        assert_eq!(ext.num_qubits(), 4);
        assert_eq!(ext.expect_z(3).unwrap(), 1.0);
        assert_eq!(ext.expect_z(2).unwrap(), 1.0);
        assert_eq!(ext.ancilla_up_slice(2), psi);
    }

    #[test]
    fn sampling_basis_and_determinism() {
        let s = S::init_basis(&Bitstring::parse("101").unwrap());
        let t = s.sample(1000, 3).unwrap();
        assert_eq!(t.counts.len(), 1);
        assert_eq!(t.counts[&Bitstring::parse("101").unwrap()], 1000);
        let plus = S::superposition(&[Bitstring::parse("0").unwrap(), Bitstring::parse("1").unwrap()]).unwrap();
        assert_eq!(plus.sample(5000, 11).unwrap(), plus.sample(5000, 11).unwrap());
        assert!(plus.sample(0, 1).unwrap().counts.is_empty());
    }

    #[test]
    fn sampling_binomial_band() {
        let plus = S::superposition(&[Bitstring::parse("0").unwrap(), Bitstring::parse("1").unwrap()]).unwrap();
        let t = plus.sample(1_000_000, 2024).unwrap();
        let up = t.counts[&Bitstring::parse("1").unwrap()] as f64;
        let sigma = (1e6f64 * 0.25).sqrt();
        assert!((up - 500_000.0).abs() < 5.0 * sigma);
    }

    #[test]
    fn sampling_frequency_band_skewed() {
        // p = cos²(0.4) on ↓, checked at 10^6 shots.
        let (a, b) = (0.4f64.cos(), 0.4f64.sin());
        let s = S::from_amplitudes(1, vec![C::new(a, 0.), C::new(0., b)]).unwrap();
        let t = s.sample(1_000_000, 9).unwrap();
        let p = a * a;
        let f = t.counts[&Bitstring::parse("0").unwrap()] as f64 / 1e6;
        assert!((f - p).abs() < 5.0 * (p * (1.0 - p) / 1e6).sqrt());
    }

    #[test]
    fn postselect_table() {
        let mut counts = BTreeMap::new();
        counts.insert(Bitstring::parse("10").unwrap(), 30);
        counts.insert(Bitstring::parse("01").unwrap(), 70);
        let t = ShotTable::from_counts(2, counts).postselect(&[1]);
        assert_eq!(t.total_shots, 100);
        assert_eq!(t.postselected_shots, 30);
        assert_eq!(t.occupations(1), vec![0.0]);
    }

    #[test]
    fn single_precision_state() {
        let mut s = StateVector::<f32>::init_basis(&Bitstring::zeros(2));
        let x = CMatrix::<f32>::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        s.apply(&x, &[1]).unwrap();
        assert_eq!(s.amplitudes()[2], C::one());
    }

    proptest! {
        #[test]
        fn unitary_apply_preserves_norm(vals in prop::collection::vec(-1.0f64..1.0, 128), q in 0usize..3) {
            let psi = random_state(4, &vals);
            let u = random_unitary(4, &vals[..32]);
            let mut a = psi.clone();
            a.apply(&u, &[q, (q + 1) % 4]).unwrap();
            prop_assert!((a.norm2() - psi.norm2()).abs() <= 1e-12 * psi.norm2());
        }

        #[test]
        fn projections_partition(vals in prop::collection::vec(-1.0f64..1.0, 64), q in 0usize..4) {
            let psi = random_state(4, &vals);
            prop_assume!(psi.norm2() > 1e-6);
            let mut up = psi.clone();
            let mut down = psi.clone();
            let pu = up.project(q, true).unwrap();
            let pd = down.project(q, false).unwrap();
            prop_assert!((pu + pd - 1.0).abs() < 1e-12);
            if pu > 0.0 {
                let _ = up.project(q, false).unwrap();
                prop_assert!(up.norm2() == 0.0);
            }
        }

        #[test]
        fn apply_is_linear(vals in prop::collection::vec(-1.0f64..1.0, 96), ar in -2.0f64..2.0, bi in -2.0f64..2.0) {
            let a = random_state(3, &vals[..16]);
            let b = random_state(3, &vals[16..32]);
            let op = CMatrix::from_fn(4, 4, |i, j| C::new(vals[32 + i * 4 + j], vals[48 + i * 4 + j]));
            let (al, be) = (C::new(ar, 0.3), C::new(0.1, bi));
            let comb: Vec<_> = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| al * x + be * y).collect();
            let mut lhs = S::from_amplitudes(3, comb).unwrap();
            lhs.apply(&op, &[1, 2]).unwrap();
            let (mut fa, mut fb) = (a.clone(), b.clone());
            fa.apply(&op, &[1, 2]).unwrap();
            fb.apply(&op, &[1, 2]).unwrap();
            for i in 0..8 {
                let rhs = al * fa.amplitudes()[i] + be * fb.amplitudes()[i];
                prop_assert!((lhs.amplitudes()[i] - rhs).norm() < 1e-12);
            }
        }

        #[test]
        fn cauchy_schwarz(vals in prop::collection::vec(-1.0f64..1.0, 64)) {
            let a = random_state(4, &vals[..32]);
            let b = random_state(4, &vals[32..]);
            let ip = a.inner(&b).unwrap();
            prop_assert!(ip.norm_sqr() <= a.norm2() * b.norm2() * (1.0 + 1e-12));
            let aa = a.inner(&a).unwrap();
            prop_assert!(aa.im.abs() < 1e-15 && aa.re >= 0.0);
        }
    }
}
