//! Density profiles, centre of mass, time averages and the overlap-weighted
//! eigenstate density.

use nalgebra::ComplexField;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::EvolutionTrace;
use crate::models::{hamiltonian_dense, ModelSpec};
use crate::scalar::{CMatrix, Real, C};
use crate::statevector::{ShotTable, StateVector};

/// Site occupations `n_i`, `i = 0..L−1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile<T> {
    pub values: Vec<T>,
}

impl<T: Real> DensityProfile<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> T {
        self.values.iter().fold(T::zero(), |s, &v| s + v)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// `n_i = (⟨Z_i⟩ + 1)/2` on the normalized state for the first `sites` qubits.
pub fn density<T: Real>(state: &StateVector<T>, sites: usize) -> Result<DensityProfile<T>> {
    if sites > state.num_qubits() {
        return Err(Error::QubitRange { qubit: sites, num_qubits: state.num_qubits() });
    }
    let n2 = state.norm2();
    if n2 <= T::zero() {
        return Err(Error::ZeroNorm);
    }
    let mut n = vec![T::zero(); sites];
    for (i, a) in state.amplitudes().iter().enumerate() {
        let p = a.norm_sqr();
        for (q, v) in n.iter_mut().enumerate() {
            if (i >> q) & 1 == 1 {
                *v += p;
            }
        }
    }
    Ok(DensityProfile::new(n.into_iter().map(|v| v / n2).collect()))
}

/// Normalized centre of mass `Σ i n_i / Σ n_i`.
pub fn center_of_mass<T: Real>(profile: &DensityProfile<T>) -> Result<T> {
    let s = profile.sum();
    if profile.is_empty() || s == T::zero() {
        return Err(Error::Argument("centre of mass of an empty profile".into()));
    }
    Ok(raw_center_of_mass(profile) / s)
}

/// Unnormalized `Σ i n_i`.
pub fn raw_center_of_mass<T: Real>(profile: &DensityProfile<T>) -> T {
    profile.values.iter().enumerate().fold(T::zero(), |s, (i, &v)| s + T::lit(i as f64) * v)
}

/// Shot estimate of the normalized centre of mass over the first `sites`
/// qubits and its standard error.
pub fn center_of_mass_sampled(table: &ShotTable, sites: usize) -> Result<(f64, f64)> {
    let total = table.postselected_shots as f64;
    if total == 0.0 {
        return Err(Error::Argument("no post-selected shots".into()));
    }
    // Per-shot Σ i b_i and Σ b_i; the ratio of means is linearized for the error.
    let (mut sx, mut sn, mut sxx, mut snn, mut sxn) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (b, &c) in &table.counts {
        let x: f64 = (0..sites).filter(|&q| b.get(q)).map(|q| q as f64).sum();
        let n = (0..sites).filter(|&q| b.get(q)).count() as f64;
        let w = c as f64;
        sx += w * x;
        sn += w * n;
        sxx += w * x * x;
        snn += w * n * n;
        sxn += w * x * n;
    }
    let (mx, mn) = (sx / total, sn / total);
    if mn == 0.0 {
        return Err(Error::Argument("no particles in the sampled strings".into()));
    }
    let r = mx / mn;
    let (vx, vn, cxn) = (sxx / total - mx * mx, snn / total - mn * mn, sxn / total - mx * mn);
    let var = (vx - 2.0 * r * cxn + r * r * vn) / (mn * mn);
    Ok((r, (var.max(0.0) / total).sqrt()))
}

/// `n̄_i = (1/N) Σ_{k=1..N} n_i(k δt)` over the first `steps` recorded steps.
pub fn time_averaged_density<T: Real>(trace: &EvolutionTrace<T>, steps: usize) -> Result<DensityProfile<T>> {
    if steps == 0 || trace.densities.len() < steps + 1 {
        return Err(Error::Argument(format!(
            "trace has {} recorded steps, {steps} requested",
            trace.densities.len().saturating_sub(1)
        )));
    }
    let l = trace.densities[0].len();
    let mut avg = vec![T::zero(); l];
    for d in &trace.densities[1..=steps] {
        for (a, &v) in avg.iter_mut().zip(d) {
            *a += v;
        }
    }
    let n = T::lit(steps as f64);
    Ok(DensityProfile::new(avg.into_iter().map(|v| v / n).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapWeighted<T> {
    pub profile: DensityProfile<T>,
    /// Eigenvalue clusters with more than one member.
    pub degenerate_clusters: usize,
    /// Clusters whose eigenspace is smaller than the cluster.
    pub defective_clusters: usize,
    pub warnings: Vec<String>,
}

fn cluster<T: Real>(mut ev: Vec<C<T>>, tol: T) -> Vec<Vec<C<T>>> {
    ev.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap_or(std::cmp::Ordering::Equal));
    let mut used = vec![false; ev.len()];
    let mut out = Vec::new();
    for i in 0..ev.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let mut group = vec![ev[i]];
        for j in i + 1..ev.len() {
            if !used[j] && (ev[j] - ev[i]).modulus() <= tol {
                used[j] = true;
                group.push(ev[j]);
            }
        }
        out.push(group);
    }
    out
}

/// `n′(i) = C Σ_j |⟨ψ0|ψ_j⟩| ⟨ψ_j|n_i|ψ_j⟩` over unit-norm right eigenvectors,
/// with `C` fixing `Σ_i n′(i) = L/2`.
///
/// The Hamiltonian is diagonalized per magnetization sector. Near-equal
/// eigenvalues are clustered and each cluster contributes an orthonormal
/// basis of the null space of `H − λ̄`; clusters whose null space is smaller
/// than the cluster are reported as defective.
pub fn overlap_weighted_density<T: Real>(spec: &ModelSpec<T>, psi0: &StateVector<T>) -> Result<OverlapWeighted<T>> {
    let h = hamiltonian_dense(spec)?;
    let l = spec.l;
    if psi0.num_qubits() != l {
        return Err(Error::Dimension { expected: l, found: psi0.num_qubits() });
    }
    let psi = psi0.normalized()?;
    let scale = h.iter().fold(T::one(), |m, z| m.max(z.modulus()));
    let cluster_tol = T::lit(1e-6) * scale;
    let null_tol = T::lit(1e-7) * scale;
    let mut raw = vec![T::zero(); l];
    let mut weight_sum = T::zero();
    let (mut degenerate, mut defective) = (0, 0);
    let mut warnings = Vec::new();
    for m in 0..=l {
        let idx: Vec<usize> = (0..1usize << l).filter(|i| i.count_ones() as usize == m).collect();
        let support = idx.iter().fold(T::zero(), |s, &i| s + psi.amplitudes()[i].norm_sqr());
        if support <= T::eps() {
            continue;
        }
        let d = idx.len();
        let hs = CMatrix::from_fn(d, d, |a, b| h[(idx[a], idx[b])]);
        let ev = hs
            .clone()
            .try_schur(T::eps(), 0)
            .and_then(|s| s.eigenvalues())
            .ok_or_else(|| Error::Argument("Schur decomposition failed".into()))?;
        for group in cluster(ev.iter().copied().collect(), cluster_tol) {
            let k = group.len();
            let lambda = group.iter().fold(C::zero(), |s, &z| s + z).unscale(T::lit(k as f64));
            let shifted = &hs - CMatrix::identity(d, d).map(|z: C<T>| z * lambda);
            let svd = shifted.try_svd(false, true, T::eps(), 0).ok_or(Error::Svd)?;
            let vt = svd.v_t.ok_or(Error::Svd)?;
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap());
            let null: Vec<usize> =
                order.iter().copied().take(k).filter(|&r| svd.singular_values[r] <= null_tol).collect();
            if k > 1 {
                degenerate += 1;
            }
            if null.len() < k {
                defective += 1;
                warnings.push(format!(
                    "sector {m}: eigenvalue {:.6}{:+.6}i has {} eigenvector(s) for multiplicity {k}",
                    lambda.re.f64(),
                    lambda.im.f64(),
                    null.len()
                ));
            }
            for r in null {
                // Right singular vector = conjugated row of V†; unit norm already.
                let v: Vec<C<T>> = (0..d).map(|a| vt[(r, a)].conj()).collect();
                let ov = idx.iter().zip(&v).fold(C::zero(), |s, (&i, x)| s + psi.amplitudes()[i].conj() * x);
                let w = ov.modulus();
                weight_sum += w;
                for (a, &i) in idx.iter().enumerate() {
                    let p = v[a].norm_sqr();
                    for (q, acc) in raw.iter_mut().enumerate() {
                        if (i >> q) & 1 == 1 {
                            *acc += w * p;
                        }
                    }
                }
            }
        }
    }
    let total = raw.iter().fold(T::zero(), |s, &v| s + v);
    if total <= T::zero() || weight_sum <= T::zero() {
        return Err(Error::ZeroNorm);
    }
    let c = T::lit(l as f64 / 2.0) / total;
    let values: Vec<T> = raw.into_iter().map(|v| v * c).collect();
    for (i, &v) in values.iter().enumerate() {
        if v > T::one() + T::lit(1e-8) {
            warnings.push(format!("site {i}: n' = {:.6} exceeds 1", v.f64()));
        }
    }
    Ok(OverlapWeighted {
        profile: DensityProfile::new(values),
        degenerate_clusters: degenerate,
        defective_clusters: defective,
        warnings,
    })
}
