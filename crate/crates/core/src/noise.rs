//! Independent per-qubit readout flips and subspace-restricted mitigation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevector::{Bitstring, ShotTable};

const COND_LIMIT: f64 = 1e12;

/// `p01[q]`: P(read 1 | true 0); `p10[q]`: P(read 0 | true 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub p01: Vec<f64>,
    pub p10: Vec<f64>,
}

impl ReadoutModel {
    pub fn uniform(n: usize, p01: f64, p10: f64) -> Self {
        Self { p01: vec![p01; n], p10: vec![p10; n] }
    }

    pub fn num_qubits(&self) -> usize {
        self.p01.len()
    }

    pub fn is_noiseless(&self) -> bool {
        self.p01.iter().chain(&self.p10).all(|&p| p == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p01.len() != self.p10.len() {
            return Err(Error::Dimension { expected: self.p01.len(), found: self.p10.len() });
        }
        if self.p01.iter().chain(&self.p10).any(|&p| !(0.0..0.5).contains(&p)) {
            return Err(Error::Argument("readout flip probabilities must lie in [0, 0.5)".into()));
        }
        Ok(())
    }

    /// P(read `obs` | true `truth`) on qubit `q`.
    pub fn confusion(&self, q: usize, obs: bool, truth: bool) -> f64 {
        match (truth, obs) {
            (false, false) => 1.0 - self.p01[q],
            (false, true) => self.p01[q],
            (true, false) => self.p10[q],
            (true, true) => 1.0 - self.p10[q],
        }
    }

    /// Tensor-product confusion element for whole bitstrings.
    pub fn transition(&self, obs: &Bitstring, truth: &Bitstring) -> f64 {
        (0..obs.len()).map(|q| self.confusion(q, obs.get(q), truth.get(q))).product()
    }

    fn check_width(&self, n: usize) -> Result<()> {
        self.validate()?;
        if self.num_qubits() != n {
            return Err(Error::Dimension { expected: n, found: self.num_qubits() });
        }
        Ok(())
    }
}

/// Flips every recorded shot's bits independently under `model`.
pub fn corrupt(table: &ShotTable, model: &ReadoutModel, seed: u64) -> Result<ShotTable> {
    model.check_width(table.num_qubits)?;
    if model.is_noiseless() {
        return Ok(table.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<Bitstring, u64> = BTreeMap::new();
    for (b, &c) in &table.counts {
        for _ in 0..c {
            let mut out = b.clone();
            for q in 0..b.len() {
                let p = if b.get(q) { model.p10[q] } else { model.p01[q] };
                if rng.random::<f64>() < p {
                    out.set(q, !b.get(q));
                }
            }
            *counts.entry(out).or_insert(0) += 1;
        }
    }
    Ok(ShotTable {
        num_qubits: table.num_qubits,
        counts,
        total_shots: table.total_shots,
        postselected_shots: table.postselected_shots,
    })
}

/// Mitigated quasi-probabilities over the observed bitstrings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiDistribution {
    pub probs: BTreeMap<Bitstring, f64>,
    pub subspace_dim: usize,
    pub condition: f64,
    /// Diagonal-only correction was used because the subspace system was singular.
    pub fallback: bool,
}

impl QuasiDistribution {
    pub fn sum(&self) -> f64 {
        self.probs.values().sum()
    }

    /// Keeps strings with every listed qubit ↑ and renormalizes; returns the
    /// kept mass before renormalization.
    pub fn postselect(&self, qubits: &[usize]) -> (Self, f64) {
        let kept: BTreeMap<_, _> =
            self.probs.iter().filter(|(b, _)| qubits.iter().all(|&q| b.get(q))).map(|(b, &p)| (b.clone(), p)).collect();
        let mass: f64 = kept.values().sum();
        let probs = if mass != 0.0 { kept.into_iter().map(|(b, p)| (b, p / mass)).collect() } else { kept };
        (Self { probs, ..self.clone() }, mass)
    }

    pub fn occupations(&self, sites: usize) -> Vec<f64> {
        let mut n = vec![0.0; sites];
        for (b, &p) in &self.probs {
            for (q, v) in n.iter_mut().enumerate() {
                if b.get(q) {
                    *v += p;
                }
            }
        }
        let s = self.sum();
        if s != 0.0 {
            n.iter_mut().for_each(|v| *v /= s);
        }
        n
    }
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Solves the confusion system restricted to the observed strings, with
/// columns renormalized over the subspace so the solution sums to one.
pub fn mitigate(table: &ShotTable, model: &ReadoutModel) -> Result<QuasiDistribution> {
    model.check_width(table.num_qubits)?;
    if table.postselected_shots == 0 || table.counts.is_empty() {
        return Err(Error::Argument("cannot mitigate an empty table".into()));
    }
    let keys: Vec<Bitstring> = table.counts.keys().cloned().collect();
    let total = table.postselected_shots as f64;
    let f = DVector::from_iterator(keys.len(), keys.iter().map(|b| table.counts[b] as f64 / total));
    let k = keys.len();
    let mut a = DMatrix::from_fn(k, k, |i, j| model.transition(&keys[i], &keys[j]));
    for j in 0..k {
        let s: f64 = a.column(j).sum();
        a.column_mut(j).iter_mut().for_each(|v| *v /= s);
    }
    let solved = a.clone().try_inverse().map(|inv| {
        let cond = norm1(&a) * norm1(&inv);
        (inv * &f, cond)
    });
    let (x, condition, fallback) = match solved {
        Some((x, cond)) if cond.is_finite() && cond < COND_LIMIT => (x, cond, false),
        other => {
            let cond = other.map(|(_, c)| c).unwrap_or(f64::INFINITY);
            let mut x = DVector::from_iterator(k, (0..k).map(|i| f[i] / a[(i, i)]));
            let s = x.sum();
            x /= s;
            (x, cond, true)
        }
    };
    let probs = keys.into_iter().zip(x.iter().copied()).collect();
    Ok(QuasiDistribution { probs, subspace_dim: k, condition, fallback })
}

/// `Σ_b |p(b) − q(b)|` over the union of supports.
pub fn l1_distance(p: &BTreeMap<Bitstring, f64>, q: &BTreeMap<Bitstring, f64>) -> f64 {
    let mut d = 0.0;
    for (b, &v) in p {
        d += (v - q.get(b).copied().unwrap_or(0.0)).abs();
    }
    for (b, &v) in q {
        if !p.contains_key(b) {
            d += v.abs();
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(entries: &[(&str, u64)]) -> ShotTable {
        let counts = entries.iter().map(|(s, c)| (Bitstring::parse(s).unwrap(), *c)).collect();
        ShotTable::from_counts(entries[0].0.len(), counts)
    }

    #[test]
    fn zero_noise_is_identity() {
        let t = table(&[("01", 40), ("10", 60)]);
        let m = ReadoutModel::uniform(2, 0.0, 0.0);
        assert_eq!(corrupt(&t, &m, 1).unwrap(), t);
        let q = mitigate(&t, &m).unwrap();
        assert_eq!(q.probs, t.frequencies());
        assert!(!q.fallback);
    }

    #[test]
    fn flip_rate_binomial_band() {
        let t = table(&[("1", 1_000_000)]);
        let m = ReadoutModel { p01: vec![0.0], p10: vec![0.02] };
        let noisy = corrupt(&t, &m, 77).unwrap();
        let up = noisy.counts[&Bitstring::parse("1").unwrap()] as f64;
        let sigma = (1e6f64 * 0.02 * 0.98).sqrt();
        assert!((up - 980_000.0).abs() < 5.0 * sigma);
    }

    #[test]
    fn near_half_flips_approach_uniform() {
        let t = table(&[("000", 200_000)]);
        let m = ReadoutModel::uniform(3, 0.499, 0.499);
        let noisy = corrupt(&t, &m, 5).unwrap();
        for (_, &c) in &noisy.counts {
            assert!(((c as f64) / 200_000.0 - 0.125).abs() < 0.01);
        }
    }

    #[test]
    fn single_qubit_closed_form() {
        let (p01, p10) = (0.03, 0.05);
        let t = table(&[("1", 620), ("0", 380)]);
        let q = mitigate(&t, &ReadoutModel { p01: vec![p01], p10: vec![p10] }).unwrap();
        let want = (0.62 - p01) / (1.0 - p01 - p10);
        assert!((q.probs[&Bitstring::parse("1").unwrap()] - want).abs() < 1e-12);
        assert!((q.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subspace_never_exceeds_observed() {
        let t = table(&[("0000", 10), ("0101", 5), ("1111", 1)]);
        let q = mitigate(&t, &ReadoutModel::uniform(4, 0.02, 0.02)).unwrap();
        assert_eq!(q.subspace_dim, 3);
        assert!((q.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mitigation_improves_with_shots() {
        let truth: BTreeMap<Bitstring, f64> = [("0011", 0.5), ("0110", 0.3), ("1100", 0.2)]
            .iter()
            .map(|(s, p)| (Bitstring::parse(s).unwrap(), *p))
            .collect();
        let m = ReadoutModel::uniform(4, 0.02, 0.02);
        let mut last = f64::INFINITY;
        for (k, shots) in [1_000u64, 10_000, 100_000].into_iter().enumerate() {
            let counts = truth.iter().map(|(b, p)| (b.clone(), (p * shots as f64) as u64)).collect();
            let noisy = corrupt(&ShotTable::from_counts(4, counts), &m, 100 + k as u64).unwrap();
            let d = l1_distance(&mitigate(&noisy, &m).unwrap().probs, &truth);
            assert!(d < last, "{shots}: {d} !< {last}");
            last = d;
        }
    }

    #[test]
    fn rejects_bad_models() {
        let t = table(&[("01", 1)]);
        assert!(corrupt(&t, &ReadoutModel::uniform(3, 0.01, 0.01), 0).is_err());
        assert!(mitigate(&t, &ReadoutModel::uniform(2, 0.6, 0.01)).is_err());
        assert!(mitigate(&ShotTable::empty(2), &ReadoutModel::uniform(2, 0.01, 0.01)).is_err());
    }

    #[test]
    fn quasi_postselect() {
        let t = table(&[("10", 25), ("11", 25), ("00", 50)]);
        let q = mitigate(&t, &ReadoutModel::uniform(2, 0.0, 0.0)).unwrap();
        let (kept, mass) = q.postselect(&[1]);
        assert!((mass - 0.5).abs() < 1e-15);
        assert!((kept.sum() - 1.0).abs() < 1e-15);
        assert_eq!(kept.occupations(1), vec![0.5]);
    }
}
