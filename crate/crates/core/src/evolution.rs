//! Exact, sampled and exact-diagonalization time evolution.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{expm, hamiltonian_dense, LayerOp, ModelSpec, TrotterPlan};
use crate::noise::{corrupt, mitigate, ReadoutModel};
use crate::observables::density;
use crate::scalar::{CMatrix, Real, C};
use crate::statevector::{ShotTable, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    Exact,
    Sampled,
    /// Dense `exp(−iHt)` reference; `success_prob` holds `‖ψ(t)‖²/‖ψ0‖²`.
    Ed,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Exact => "EXACT",
            Mode::Sampled => "SAMPLED",
            Mode::Ed => "ED",
        })
    }
}

/// Recorded at `t_k = k δt`, `k = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionTrace<T: Real> {
    pub mode: Mode,
    pub dt: T,
    pub times: Vec<T>,
    pub densities: Vec<Vec<T>>,
    pub success_prob: Vec<T>,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
    /// Full-register tables (ancillas included) before post-selection, one per time.
    pub tables: Vec<ShotTable>,
    /// Times with no surviving shots; their densities are zero.
    pub empty_steps: Vec<usize>,
    /// Normalized physical state after the last step (exact and ED modes).
    pub final_state: Option<StateVector<T>>,
}

impl<T: Real> EvolutionTrace<T> {
    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn num_sites(&self) -> usize {
        self.densities.first().map_or(0, |d| d.len())
    }

    /// Long format: `step,time,site,density,success_prob`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,time,site,density,success_prob\n");
        for (k, (t, row)) in self.times.iter().zip(&self.densities).enumerate() {
            for (i, n) in row.iter().enumerate() {
                let _ = writeln!(out, "{k},{:.12},{i},{:.12e},{:.12e}", t.f64(), n.f64(), self.success_prob[k].f64());
            }
        }
        out
    }
}

/// `exp(−iHT) ψ0` from the dense Hamiltonian, unnormalized.
pub fn evolve_ed<T: Real>(spec: &ModelSpec<T>, psi0: &StateVector<T>, t: T) -> Result<StateVector<T>> {
    if t < T::zero() {
        return Err(Error::Argument("evolution time must be non-negative".into()));
    }
    let h = hamiltonian_dense(spec)?;
    check_physical(psi0, spec.l)?;
    let u = expm(&h.map(|z| z * C::new(T::zero(), -t)));
    apply_dense(&u, psi0)
}

fn apply_dense<T: Real>(m: &CMatrix<T>, psi: &StateVector<T>) -> Result<StateVector<T>> {
    let v = m * nalgebra::DVector::from_column_slice(psi.amplitudes());
    StateVector::from_amplitudes(psi.num_qubits(), v.iter().copied().collect())
}

fn check_physical<T: Real>(psi: &StateVector<T>, l: usize) -> Result<()> {
    if psi.num_qubits() != l {
        return Err(Error::Dimension { expected: l, found: psi.num_qubits() });
    }
    Ok(())
}

/// ED reference on the Trotter grid: `ψ_k = exp(−iHδt)^k ψ0`.
pub fn ed_trace<T: Real>(spec: &ModelSpec<T>, psi0: &StateVector<T>, dt: T, steps: usize) -> Result<EvolutionTrace<T>> {
    let h = hamiltonian_dense(spec)?;
    check_physical(psi0, spec.l)?;
    let u = expm(&h.map(|z| z * C::new(T::zero(), -dt)));
    let n0 = psi0.norm2();
    let mut psi = psi0.clone();
    let mut trace = empty_trace(Mode::Ed, dt);
    for k in 0..=steps {
        if k > 0 {
            psi = apply_dense(&u, &psi)?;
        }
        trace.times.push(dt * T::lit(k as f64));
        trace.densities.push(density(&psi, spec.l)?.values);
        trace.success_prob.push(psi.norm2() / n0);
    }
    trace.final_state = Some(psi.normalized()?);
    Ok(trace)
}

fn empty_trace<T: Real>(mode: Mode, dt: T) -> EvolutionTrace<T> {
    EvolutionTrace {
        mode,
        dt,
        times: Vec::new(),
        densities: Vec::new(),
        success_prob: Vec::new(),
        shots: None,
        seed: None,
        tables: Vec::new(),
        empty_steps: Vec::new(),
        final_state: None,
    }
}

fn with_ancilla(targets: &[usize], ancilla: usize) -> Vec<usize> {
    let mut t = targets.to_vec();
    t.push(ancilla);
    t
}

/// One Trotter step on the register with per-block projection. Returns the
/// post-selected physical state (unnormalized) and the step's success
/// probability relative to `psi`.
fn exact_step<T: Real>(plan: &TrotterPlan<T>, psi: &StateVector<T>) -> Result<(StateVector<T>, T)> {
    let mut reg = psi.with_ancillas(plan.ancilla_count);
    let mut p = T::one();
    for layer in &plan.layers {
        match &layer.op {
            LayerOp::Unitary(m) => reg.apply(m, &layer.targets)?,
            LayerOp::Dilated { ancilla, register, .. } => {
                reg.apply(register, &with_ancilla(&layer.targets, *ancilla))?;
                p *= reg.project(*ancilla, true)?;
            }
        }
    }
    Ok((reg.ancilla_up_slice(plan.ancilla_count), p))
}

/// Exact post-selected trajectory, renormalized after every step.
pub fn evolve_exact<T: Real>(plan: &TrotterPlan<T>, psi0: &StateVector<T>, steps: usize) -> Result<EvolutionTrace<T>> {
    plan.validate()?;
    check_physical(psi0, plan.num_physical)?;
    let mut psi = psi0.normalized()?;
    let mut trace = empty_trace(Mode::Exact, plan.dt);
    let mut success = T::one();
    trace.times.push(T::zero());
    trace.densities.push(density(&psi, plan.num_physical)?.values);
    trace.success_prob.push(success);
    for k in 1..=steps {
        let (next, p) = exact_step(plan, &psi)?;
        if !(p > T::zero()) || next.norm2() <= T::zero() {
            return Err(Error::ZeroSuccess { step: k, prob: p.f64() });
        }
        success *= p;
        psi = next.normalized()?;
        trace.times.push(plan.dt * T::lit(k as f64));
        trace.densities.push(density(&psi, plan.num_physical)?.values);
        trace.success_prob.push(success);
    }
    trace.final_state = Some(psi);
    Ok(trace)
}

/// Normalized final state and cumulative success probability.
pub fn evolve_exact_state<T: Real>(
    plan: &TrotterPlan<T>,
    psi0: &StateVector<T>,
    steps: usize,
) -> Result<(StateVector<T>, T)> {
    let trace = evolve_exact(plan, psi0, steps)?;
    let s = *trace.success_prob.last().unwrap();
    Ok((trace.final_state.unwrap(), s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledNoise {
    /// Width must equal the full register (physical plus ancillas).
    pub model: ReadoutModel,
    pub mitigate: bool,
}

/// Shot-based run. Each step's register state is prepared from the exact
/// post-selected state of the previous step, and the shots that survived
/// the previous step's post-selection are drawn from it. Surviving counts
/// therefore shrink step by step, as they would on hardware.
pub fn evolve_sampled<T: Real>(
    plan: &TrotterPlan<T>,
    psi0: &StateVector<T>,
    steps: usize,
    shots: u64,
    seed: u64,
    noise: Option<&SampledNoise>,
) -> Result<EvolutionTrace<T>> {
    plan.validate()?;
    check_physical(psi0, plan.num_physical)?;
    if shots == 0 {
        return Err(Error::Argument("shots must be at least 1".into()));
    }
    let nq = plan.num_qubits();
    if let Some(n) = noise {
        n.model.validate()?;
        if n.model.num_qubits() != nq {
            return Err(Error::Dimension { expected: nq, found: n.model.num_qubits() });
        }
    }
    let l = plan.num_physical;
    let ancillas = plan.ancillas();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = empty_trace(Mode::Sampled, plan.dt);
    trace.shots = Some(shots);
    trace.seed = Some(seed);
    let mut psi = psi0.normalized()?;
    let mut alive = shots;
    for k in 0..=steps {
        let (sample_seed, noise_seed): (u64, u64) = (rng.random(), rng.random());
        trace.times.push(plan.dt * T::lit(k as f64));
        // Φ_k: full register before projection; exact continuation state.
        let mut reg = psi.with_ancillas(plan.ancilla_count);
        if k > 0 {
            for layer in &plan.layers {
                match &layer.op {
                    LayerOp::Unitary(m) => reg.apply(m, &layer.targets)?,
                    LayerOp::Dilated { ancilla, register, .. } => {
                        reg.apply(register, &with_ancilla(&layer.targets, *ancilla))?
                    }
                }
            }
            let (next, p) = exact_step(plan, &psi)?;
            if p > T::zero() && next.norm2() > T::zero() {
                psi = next.normalized()?;
            }
        }
        let mut table = if alive > 0 { reg.sample(alive, sample_seed)? } else { ShotTable::empty(nq) };
        table.total_shots = shots;
        if let Some(n) = noise {
            table = corrupt(&table, &n.model, noise_seed)?;
        }
        let kept = table.postselect(&ancillas);
        alive = kept.postselected_shots;
        trace.success_prob.push(T::lit(alive as f64 / shots as f64));
        let row = if alive == 0 {
            trace.empty_steps.push(k);
            vec![0.0; l]
        } else {
            match noise {
                Some(n) if n.mitigate => {
                    let q = mitigate(&table, &n.model)?;
                    let (post, mass) = q.postselect(&ancillas);
                    if mass > 0.0 {
                        post.occupations(l)
                    } else {
                        kept.occupations(l)
                    }
                }
                _ => kept.occupations(l),
            }
        };
        trace.densities.push(row.into_iter().map(T::lit).collect());
        trace.tables.push(table);
    }
    Ok(trace)
}

/// Surviving shots over total shots at the final recorded time.
pub fn postselection_fraction<T: Real>(trace: &EvolutionTrace<T>) -> Result<f64> {
    if trace.mode != Mode::Sampled {
        return Err(Error::Argument("post-selection fraction needs a sampled trace".into()));
    }
    let t = trace.tables.last().ok_or_else(|| Error::Argument("trace has no tables".into()))?;
    let shots = trace.shots.unwrap_or(t.total_shots) as f64;
    let ancillas: Vec<usize> = (trace.num_sites()..t.num_qubits).collect();
    Ok(t.postselect(&ancillas).postselected_shots as f64 / shots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{trotter_plan, Scheme};
    use crate::statevector::Bitstring;

    fn ket(s: &str) -> Bitstring {
        Bitstring::from_ket(s).unwrap()
    }

    fn sym6() -> StateVector<f64> {
        StateVector::superposition(&[ket("↓↓↑↓↓↓"), ket("↓↓↓↑↓↓")]).unwrap()
    }

    #[test]
    fn ed_zero_time_and_unitary_limit() {
        let spec = ModelSpec::hn(6, 1.0, 0.0);
        let psi = sym6();
        let out = evolve_ed(&spec, &psi, 0.0).unwrap();
        for (a, b) in out.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
        let out = evolve_ed(&spec, &psi, 2.3).unwrap();
        assert!((out.norm2() - 1.0).abs() < 1e-10);
        assert!(evolve_ed(&spec, &psi, -1.0).is_err());
    }

    #[test]
    fn ed_skin_concentrates_on_site_zero() {
        let spec = ModelSpec::hn(6, 1.0, 0.5);
        // At T=1 the packet is still passing site 1; site 0 leads from T≈1.5.
        let d = density(&evolve_ed(&spec, &sym6(), 1.0).unwrap(), 6).unwrap();
        assert!(d.argmax() <= 1);
        assert!(crate::observables::center_of_mass(&d).unwrap() < 1.5);
        let d = density(&evolve_ed(&spec, &sym6(), 2.0).unwrap(), 6).unwrap();
        assert_eq!(d.argmax(), 0);
        assert!((d.values[0] - 0.816).abs() < 1e-3);
    }

    #[test]
    fn hermitian_plan_has_unit_success() {
        let spec = ModelSpec::hn(6, 1.0, 0.0);
        let plan = trotter_plan(&spec, 0.1, Scheme::Global).unwrap();
        let trace = evolve_exact(&plan, &sym6(), 10).unwrap();
        for s in &trace.success_prob {
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn step_matches_dense_product() {
        let spec = ModelSpec::nhssh(4, 2.0, 1.5);
        let plan = trotter_plan(&spec, 0.1, Scheme::Local).unwrap();
        let op = plan.step_operator().unwrap();
        let psi = StateVector::<f64>::init_basis(&ket("↑↑↓↓"));
        let (next, p) = exact_step(&plan, &psi).unwrap();
        let direct = apply_dense(&op, &psi).unwrap();
        for (a, b) in next.amplitudes().iter().zip(direct.amplitudes()) {
            assert!((a - b).norm() < 1e-10);
        }
        assert!((p - direct.norm2()).abs() < 1e-10);
    }

    #[test]
    fn success_non_increasing_and_times_grid() {
        let spec = ModelSpec::hn(4, 1.0, 0.5);
        let plan = trotter_plan(&spec, 0.1, Scheme::Global).unwrap();
        let psi = StateVector::init_basis(&ket("↓↑↓↓"));
        let trace = evolve_exact(&plan, &psi, 8).unwrap();
        assert!(trace.success_prob.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!(trace.times.windows(2).all(|w| w[1] > w[0]));
        assert!(trace.densities.iter().flatten().all(|&n| (-1e-12..=1.0 + 1e-12).contains(&n)));
    }

    #[test]
    fn sampled_seed_reproducible() {
        let spec = ModelSpec::hn(4, 1.0, 0.5);
        let plan = trotter_plan(&spec, 0.1, Scheme::Global).unwrap();
        let psi = StateVector::<f64>::init_basis(&ket("↓↑↓↓"));
        let a = evolve_sampled(&plan, &psi, 3, 2000, 9, None).unwrap();
        let b = evolve_sampled(&plan, &psi, 3, 2000, 9, None).unwrap();
        assert_eq!(a.tables, b.tables);
        let c = evolve_sampled(&plan, &psi, 3, 2000, 10, None).unwrap();
        assert_ne!(a.tables, c.tables);
    }

    #[test]
    fn sampled_unitary_fraction_is_one() {
        let spec = ModelSpec::hn(4, 1.0, 0.0);
        let plan = trotter_plan(&spec, 0.1, Scheme::Global).unwrap();
        let psi = StateVector::<f64>::init_basis(&ket("↓↑↓↓"));
        let t = evolve_sampled(&plan, &psi, 4, 500, 1, None).unwrap();
        assert_eq!(postselection_fraction(&t).unwrap(), 1.0);
        let exact = evolve_exact(&plan, &psi, 2).unwrap();
        assert!(postselection_fraction(&exact).is_err());
    }

    #[test]
    fn sampled_rejects_bad_inputs() {
        let spec = ModelSpec::hn(4, 1.0, 0.5);
        let plan = trotter_plan(&spec, 0.1, Scheme::Global).unwrap();
        let psi = StateVector::<f64>::init_basis(&ket("↓↑↓↓"));
        assert!(evolve_sampled(&plan, &psi, 1, 0, 1, None).is_err());
        let bad = SampledNoise { model: ReadoutModel::uniform(4, 0.01, 0.01), mitigate: true };
        assert!(evolve_sampled(&plan, &psi, 1, 10, 1, Some(&bad)).is_err());
        let wrong = StateVector::<f64>::init_basis(&ket("↓↑↓"));
        assert!(evolve_exact(&plan, &wrong, 1).is_err());
    }

    #[test]
    fn csv_layout() {
        let spec = ModelSpec::hn(2, 1.0, 0.2);
        let t = ed_trace(&spec, &StateVector::init_basis(&ket("↑↓")), 0.5, 1).unwrap();
        let csv = t.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "step,time,site,density,success_prob");
        assert_eq!(lines.len(), 1 + 2 * 2);
        assert!(lines[1].starts_with("0,0.000000000000,0,1.0"));
    }
}
