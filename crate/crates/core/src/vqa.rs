//! Fixed-depth U3 + CX ansatz trained to reproduce a post-selected evolution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nalgebra::ComplexField;

use crate::error::{Error, Result};
use crate::evolution::evolve_exact_state;
use crate::models::TrotterPlan;
use crate::scalar::{CMatrix, Real, C};
use crate::statevector::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub num_qubits: usize,
    pub num_layers: usize,
}

impl AnsatzSpec {
    pub fn new(num_qubits: usize, num_layers: usize) -> Result<Self> {
        if num_qubits == 0 {
            return Err(Error::Argument("ansatz needs at least one qubit".into()));
        }
        Ok(Self { num_qubits, num_layers })
    }

    /// Three angles per qubit for the leading column and for every layer.
    pub fn num_params(&self) -> usize {
        3 * self.num_qubits * (self.num_layers + 1)
    }

    /// CX `(control, target)` sequence of one layer: a forward pass over even
    /// then odd neighbour pairs, then the same pairs with the roles swapped.
    pub fn ladder(&self) -> Vec<(usize, usize)> {
        let n = self.num_qubits;
        let pairs: Vec<(usize, usize)> = (0..n.saturating_sub(1))
            .step_by(2)
            .chain((1..n.saturating_sub(1)).step_by(2))
            .map(|j| (j, j + 1))
            .collect();
        pairs.iter().copied().chain(pairs.iter().map(|&(a, b)| (b, a))).collect()
    }

    pub fn entanglers_per_layer(&self) -> usize {
        2 * self.num_qubits.saturating_sub(1)
    }
}

/// `[[cos θ/2, −e^{iλ} sin θ/2], [e^{iφ} sin θ/2, e^{i(φ+λ)} cos θ/2]]`.
pub fn u3<T: Real>(theta: T, phi: T, lambda: T) -> CMatrix<T> {
    let half = theta / T::lit(2.0);
    let (s, c) = (half.sin(), half.cos());
    let e = |a: T| C::new(a.cos(), a.sin());
    CMatrix::from_row_slice(2, 2, &[C::new(c, T::zero()), -e(lambda) * s, e(phi) * s, e(phi + lambda) * c])
}

fn cx<T: Real>(psi: &mut StateVector<T>, control: usize, target: usize) {
    let amps = psi.amplitudes_mut();
    let (cm, tm) = (1usize << control, 1usize << target);
    for i in 0..amps.len() {
        if i & cm != 0 && i & tm == 0 {
            amps.swap(i, i | tm);
        }
    }
}

fn rotation_column<T: Real>(psi: &mut StateVector<T>, angles: &[T]) -> Result<()> {
    for (q, a) in angles.chunks(3).enumerate() {
        psi.apply(&u3(a[0], a[1], a[2]), &[q])?;
    }
    Ok(())
}

/// Leading rotation column, then `num_layers` × (rotation column, CX ladder).
pub fn ansatz_apply<T: Real>(spec: &AnsatzSpec, params: &[T], psi0: &StateVector<T>) -> Result<StateVector<T>> {
    if params.len() != spec.num_params() {
        return Err(Error::ParamCount { expected: spec.num_params(), found: params.len() });
    }
    if psi0.num_qubits() != spec.num_qubits {
        return Err(Error::Dimension { expected: spec.num_qubits, found: psi0.num_qubits() });
    }
    let col = 3 * spec.num_qubits;
    let mut psi = psi0.clone();
    rotation_column(&mut psi, &params[..col])?;
    let ladder = spec.ladder();
    for layer in params[col..].chunks(col) {
        rotation_column(&mut psi, layer)?;
        for &(c, t) in &ladder {
            cx(&mut psi, c, t);
        }
    }
    Ok(psi)
}

/// Exact post-selected evolution: normalized final state and `√(success)`.
pub fn target_apply<T: Real>(
    plan: &TrotterPlan<T>,
    psi0: &StateVector<T>,
    steps: usize,
) -> Result<(StateVector<T>, T)> {
    let (psi, s) = evolve_exact_state(plan, psi0, steps)?;
    Ok((psi, s.sqrt()))
}

/// `Q = 1 − |⟨ansatz(ψ0), target⟩|` with the target normalized first.
pub fn cost<T: Real>(spec: &AnsatzSpec, params: &[T], psi0: &StateVector<T>, target: &StateVector<T>) -> Result<T> {
    let out = ansatz_apply(spec, params, psi0)?;
    let t = target.normalized()?;
    let q = T::one() - out.inner(&t)?.modulus();
    Ok(q.max(T::zero()))
}

/// The unnormalized form, `1 − a |⟨ansatz(ψ0), target⟩|` for a target of
/// norm `a` (the success amplitude), given the normalized cost `q`.
pub fn cost_raw<T: Real>(q: T, success_amplitude: T) -> T {
    T::one() - success_amplitude * (T::one() - q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Total cost evaluations, gradient evaluations included.
    pub budget: usize,
    pub restarts: usize,
    /// L-BFGS history length.
    pub memory: usize,
    pub fd_step: f64,
    /// Stop once the best cost falls below this.
    pub tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { budget: 5000, restarts: 4, memory: 10, fd_step: 1e-5, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub params: Vec<f64>,
    pub best_cost: f64,
    /// Best-so-far cost after every evaluation.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub restarts_used: usize,
    pub seed: u64,
}

struct Evaluator<'a, F> {
    f: &'a F,
    budget: usize,
    history: Vec<f64>,
    best: f64,
    best_x: Vec<f64>,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Evaluator<'_, F> {
    fn remaining(&self) -> usize {
        self.budget - self.history.len()
    }

    fn record(&mut self, x: &[f64], v: f64) {
        if v < self.best {
            self.best = v;
            self.best_x = x.to_vec();
        }
        self.history.push(self.best);
    }

    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.remaining() == 0 {
            return None;
        }
        let v = (self.f)(x);
        self.record(x, v);
        Some(v)
    }

    /// Evaluates as many points as the budget allows, in parallel; `None` if
    /// the batch was cut short.
    fn eval_batch(&mut self, xs: &[Vec<f64>]) -> Option<Vec<f64>> {
        let k = xs.len().min(self.remaining());
        let vals: Vec<f64> = xs[..k].par_iter().map(|x| (self.f)(x)).collect();
        for (x, &v) in xs.iter().zip(&vals) {
            self.record(x, v);
        }
        (k == xs.len()).then_some(vals)
    }

    fn gradient(&mut self, x: &[f64], h: f64) -> Option<Vec<f64>> {
        let mut pts = Vec::with_capacity(2 * x.len());
        for i in 0..x.len() {
            for s in [h, -h] {
                let mut p = x.to_vec();
                p[i] += s;
                pts.push(p);
            }
        }
        let v = self.eval_batch(&pts)?;
        Some(v.chunks(2).map(|c| (c[0] - c[1]) / (2.0 * h)).collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central finite-difference gradient at `x`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let (mut p, mut m) = (x.to_vec(), x.to_vec());
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

/// L-BFGS over finite-difference gradients with Armijo backtracking. A run
/// ends on convergence, on a failed line search or after five iterations of
/// negligible progress; the next restart then draws fresh angles in `[−π, π]`.
pub fn minimize<F: Fn(&[f64]) -> f64 + Sync>(
    f: &F,
    dim: usize,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<TrainingReport> {
    if cfg.budget == 0 || cfg.restarts == 0 {
        return Err(Error::Argument("budget and restarts must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ev = Evaluator { f, budget: cfg.budget, history: Vec::new(), best: f64::INFINITY, best_x: Vec::new() };
    let mut restarts_used = 0;
    let pi = std::f64::consts::PI;
    'outer: for _ in 0..cfg.restarts {
        if ev.remaining() == 0 || ev.best <= cfg.tol {
            break;
        }
        restarts_used += 1;
        let mut flat = 0;
        let mut x: Vec<f64> = (0..dim).map(|_| rng.random_range(-pi..pi)).collect();
        let Some(mut c) = ev.eval(&x) else { break };
        let Some(mut g) = ev.gradient(&x, cfg.fd_step) else {
            break;
        };
        let (mut ss, mut ys): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (Vec::new(), Vec::new());
        while ev.remaining() > 0 && ev.best > cfg.tol {
            // Two-loop recursion.
            let mut q = g.clone();
            let mut alpha = Vec::with_capacity(ss.len());
            for (s, y) in ss.iter().zip(&ys).rev() {
                let a = dot(s, &q) / dot(y, s);
                q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
                alpha.push(a);
            }
            let gamma = match (ss.last(), ys.last()) {
                (Some(s), Some(y)) => dot(s, y) / dot(y, y),
                _ => 0.1 / dot(&g, &g).sqrt().max(1e-12),
            };
            q.iter_mut().for_each(|v| *v *= gamma);
            for ((s, y), a) in ss.iter().zip(&ys).zip(alpha.iter().rev()) {
                let b = dot(y, &q) / dot(y, s);
                q.iter_mut().zip(s).for_each(|(qi, si)| *qi += si * (a - b));
            }
            let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
            if dot(&g, &d) >= 0.0 {
                d = g.iter().map(|v| -v).collect();
                ss.clear();
                ys.clear();
            }
            let slope = dot(&g, &d);
            let mut t = 1.0;
            let accepted = loop {
                let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                let Some(cn) = ev.eval(&xn) else { break 'outer };
                if cn <= c + 1e-4 * t * slope {
                    break Some((xn, cn));
                }
                t *= 0.5;
                if t < 1e-10 || ev.remaining() == 0 {
                    break None;
                }
            };
            let Some((xn, cn)) = accepted else { break };
            let Some(gn) = ev.gradient(&xn, cfg.fd_step) else {
                break 'outer;
            };
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
            if dot(&s, &y) > 1e-16 {
                ss.push(s);
                ys.push(y);
                if ss.len() > cfg.memory {
                    ss.remove(0);
                    ys.remove(0);
                }
            }
            flat = if c - cn < 1e-10 * c.max(1e-300) { flat + 1 } else { 0 };
            x = xn;
            c = cn;
            g = gn;
            if flat >= 5 || dot(&g, &g).sqrt() < 1e-10 {
                break;
            }
        }
    }
    let evaluations = ev.history.len();
    Ok(TrainingReport { params: ev.best_x, best_cost: ev.best, history: ev.history, evaluations, restarts_used, seed })
}

/// Trains `spec` so that `ansatz(ψ0)` matches the normalized `target`.
pub fn optimize(
    spec: &AnsatzSpec,
    psi0: &StateVector<f64>,
    target: &StateVector<f64>,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<TrainingReport> {
    let t = target.normalized()?;
    if t.num_qubits() != spec.num_qubits {
        return Err(Error::Dimension { expected: spec.num_qubits, found: t.num_qubits() });
    }
    // Validate once so the closure can unwrap.
    cost(spec, &vec![0.0; spec.num_params()], psi0, &t)?;
    let f = |x: &[f64]| cost(spec, x, psi0, &t).unwrap_or(1.0);
    minimize(&f, spec.num_params(), cfg, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{trotter_plan, ModelSpec, Scheme};
    use crate::scalar::{max_abs_diff, unitarity_defect};
    use crate::statevector::Bitstring;
    use proptest::prelude::*;

    fn zero_state(n: usize) -> StateVector<f64> {
        StateVector::init_basis(&Bitstring::zeros(n))
    }

    #[test]
    fn u3_examples() {
        assert!(max_abs_diff(&u3(0.0, 0.0, 0.0), &CMatrix::identity(2, 2)) < 1e-15);
        let pi = std::f64::consts::PI;
        let x =
            CMatrix::from_row_slice(2, 2, &[C::new(0.0, 0.0), C::new(1.0, 0.0), C::new(1.0, 0.0), C::new(0.0, 0.0)]);
        assert!(max_abs_diff(&u3(pi, 0.0, pi), &x) < 1e-15);
    }

    #[test]
    fn ladder_counts() {
        let s = AnsatzSpec::new(9, 1).unwrap();
        assert_eq!(s.ladder().len(), 16);
        assert_eq!(s.entanglers_per_layer(), 3 * 6 - 2);
        assert_eq!(&s.ladder()[..4], &[(0, 1), (2, 3), (4, 5), (6, 7)]);
        assert_eq!(s.ladder()[4], (1, 2));
        assert_eq!(s.ladder()[8], (1, 0));
        assert_eq!(AnsatzSpec::new(5, 4).unwrap().num_params(), 75);
    }

    #[test]
    fn zero_params_fix_all_zero_state() {
        let spec = AnsatzSpec::new(4, 3).unwrap();
        let out = ansatz_apply(&spec, &vec![0.0; spec.num_params()], &zero_state(4)).unwrap();
        assert!((out.amplitudes()[0].re - 1.0).abs() < 1e-15);
        assert!(ansatz_apply(&spec, &[0.0; 3], &zero_state(4)).is_err());
    }

    #[test]
    fn two_qubit_layer_matches_dense_product() {
        let spec = AnsatzSpec::new(2, 1).unwrap();
        let p: Vec<f64> = (0..12).map(|k| 0.3 + 0.41 * k as f64).collect();
        let kron = |a: &CMatrix<f64>, b: &CMatrix<f64>| b.kronecker(a); // qubit 0 is the low bit
        let col0 = kron(&u3(p[0], p[1], p[2]), &u3(p[3], p[4], p[5]));
        let col1 = kron(&u3(p[6], p[7], p[8]), &u3(p[9], p[10], p[11]));
        let o = C::new(1.0, 0.0);
        let z = C::new(0.0, 0.0);
        // CX(0→1) then CX(1→0) in the qubit-0-low index order.
        let cx01 = CMatrix::from_row_slice(4, 4, &[o, z, z, z, z, z, z, o, z, z, o, z, z, o, z, z]);
        let cx10 = CMatrix::from_row_slice(4, 4, &[o, z, z, z, z, o, z, z, z, z, z, o, z, z, o, z]);
        let m = &cx10 * &cx01 * col1 * col0;
        let amps = vec![C::new(0.6, 0.0), C::new(0.0, 0.8), z, z];
        let psi = StateVector::from_amplitudes(2, amps.clone()).unwrap();
        let out = ansatz_apply(&spec, &p, &psi).unwrap();
        let want = m * nalgebra::DVector::from_vec(amps);
        for (a, b) in out.amplitudes().iter().zip(want.iter()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn cost_examples() {
        let spec = AnsatzSpec::new(2, 1).unwrap();
        let p: Vec<f64> = (0..12).map(|k| 0.1 * k as f64).collect();
        let psi0 = zero_state(2);
        let target = ansatz_apply(&spec, &p, &psi0).unwrap();
        assert!(cost(&spec, &p, &psi0, &target).unwrap() < 1e-14);
        let mut phased = target.clone();
        phased.scale(C::new(0.0, 3.0));
        assert!(cost(&spec, &p, &psi0, &phased).unwrap() < 1e-14);
        let zeros = vec![0.0; 12];
        let orth = StateVector::init_basis(&Bitstring::parse("11").unwrap());
        assert!((cost(&spec, &zeros, &psi0, &orth).unwrap() - 1.0).abs() < 1e-15);
        assert!((cost_raw(0.0, 0.5) - 0.5).abs() < 1e-15);
    }

    fn basis_state(n: usize, s: &str) -> StateVector<f64> {
        let b = Bitstring::from_ket(s).unwrap();
        StateVector::init_basis(&Bitstring::new((0..n).map(|q| q < b.len() && b.get(q)).collect()))
    }

    #[test]
    fn target_delegates_to_exact_evolution() {
        let spec = ModelSpec::hn(4, 1.0, 0.5);
        let plan = trotter_plan(&spec, 0.1, Scheme::Global).unwrap();
        let psi =
            StateVector::superposition(&[Bitstring::from_ket("↓↑↓↓").unwrap(), Bitstring::from_ket("↓↓↑↓").unwrap()])
                .unwrap();
        let (t, a) = target_apply(&plan, &psi, 10).unwrap();
        let (e, s) = evolve_exact_state(&plan, &psi, 10).unwrap();
        assert_eq!(t, e);
        assert!((a * a - s).abs() < 1e-15);
        let herm = trotter_plan(&ModelSpec::hn(4, 1.0, 0.0), 0.1, Scheme::Global).unwrap();
        let (_, a) = target_apply(&herm, &psi, 5).unwrap();
        assert!((a - 1.0).abs() < 1e-10);
        let ssh = trotter_plan(&ModelSpec::nhssh(4, 2.0, 1.5), 0.1, Scheme::Local).unwrap();
        let start = basis_state(4, "↑↑↓↓");
        let (t, _) = target_apply(&ssh, &start, 3).unwrap();
        assert_eq!(t, evolve_exact_state(&ssh, &start, 3).unwrap().0);
    }

    #[test]
    fn random_params_start_far_from_hn_target() {
        let plan = trotter_plan(&ModelSpec::hn(4, 1.0, 0.5), 0.1, Scheme::Global).unwrap();
        let psi =
            StateVector::superposition(&[Bitstring::from_ket("↓↑↓↓").unwrap(), Bitstring::from_ket("↓↓↑↓").unwrap()])
                .unwrap();
        let (t, _) = target_apply(&plan, &psi, 10).unwrap();
        let (t5, p5) = (t.with_ancillas(1), psi.with_ancillas(1));
        let spec = AnsatzSpec::new(5, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut above = 0;
        for _ in 0..20 {
            let x: Vec<f64> = (0..spec.num_params()).map(|_| rng.random_range(-3.14..3.14)).collect();
            above += (cost(&spec, &x, &p5, &t5).unwrap() > 0.3) as usize;
        }
        assert!(above >= 15, "{above}/20");
    }

    /// Fidelity gradient from the two-term shift rule, converted to dQ.
    fn shift_rule_gradient(spec: &AnsatzSpec, x: &[f64], psi0: &StateVector<f64>, t: &StateVector<f64>) -> Vec<f64> {
        let fid = |p: &[f64]| ansatz_apply(spec, p, psi0).unwrap().inner(t).unwrap().norm_sqr();
        let f0 = fid(x);
        let s = std::f64::consts::FRAC_PI_2;
        (0..x.len())
            .map(|i| {
                let (mut a, mut b) = (x.to_vec(), x.to_vec());
                a[i] += s;
                b[i] -= s;
                let df = (fid(&a) - fid(&b)) / 2.0;
                -df / (2.0 * f0.sqrt())
            })
            .collect()
    }

    #[test]
    fn fd_gradient_matches_shift_rule() {
        let spec = AnsatzSpec::new(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let psi0 = zero_state(3);
        let planted: Vec<f64> = (0..spec.num_params()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t = ansatz_apply(&spec, &planted, &psi0).unwrap();
        let x: Vec<f64> = (0..spec.num_params()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let g = fd_gradient(|p| cost(&spec, p, &psi0, &t).unwrap(), &x, 1e-5);
        let o = shift_rule_gradient(&spec, &x, &psi0, &t);
        for (a, b) in g.iter().zip(&o) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn planted_recovery() {
        let spec = AnsatzSpec::new(3, 2).unwrap();
        let psi0 = zero_state(3);
        let cfg = OptimizerConfig { budget: 20_000, ..Default::default() };
        let mut ok = 0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let planted: Vec<f64> = (0..spec.num_params()).map(|_| rng.random_range(-3.14..3.14)).collect();
            let t = ansatz_apply(&spec, &planted, &psi0).unwrap();
            let r = optimize(&spec, &psi0, &t, &cfg, seed).unwrap();
            ok += (r.best_cost <= 1e-6) as usize;
        }
        assert!(ok >= 16, "{ok}/20 planted seeds recovered");
    }

    #[test]
    fn budget_and_history_contract() {
        let spec = AnsatzSpec::new(3, 2).unwrap();
        let psi0 = zero_state(3);
        let t = basis_state(3, "↑↓↑");
        let cfg = OptimizerConfig { budget: 777, tol: 0.0, ..Default::default() };
        let r = optimize(&spec, &psi0, &t, &cfg, 5).unwrap();
        assert_eq!(r.history.len(), 777);
        assert_eq!(r.evaluations, 777);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*r.history.last().unwrap(), r.best_cost);
        assert!((cost(&spec, &r.params, &psi0, &t).unwrap() - r.best_cost).abs() < 1e-15);
        let again = optimize(&spec, &psi0, &t, &cfg, 5).unwrap();
        assert_eq!(r, again);
    }

    proptest! {
        #[test]
        fn u3_is_unitary(t in -10.0f64..10.0, p in -10.0f64..10.0, l in -10.0f64..10.0) {
            prop_assert!(unitarity_defect(&u3(t, p, l)) < 1e-14);
        }

        #[test]
        fn ansatz_preserves_norm_and_cost_bounds(vals in prop::collection::vec(-6.0f64..6.0, 36)) {
            let spec = AnsatzSpec::new(3, 3).unwrap();
            let psi0 = basis_state(3, "↑↓↓");
            let out = ansatz_apply(&spec, &vals, &psi0).unwrap();
            prop_assert!((out.norm2() - 1.0).abs() < 1e-12);
            let q = cost(&spec, &vals, &psi0, &basis_state(3, "↓↓↑")).unwrap();
            prop_assert!((0.0..=1.0).contains(&q));
        }
    }
}
