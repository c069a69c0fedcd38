use std::collections::BTreeMap;
use std::fmt::Write as _;

use clap::Args;
use nhskin::models::{trotter_plan, ModelSpec};
use nhskin::observables::density;
use nhskin::vqa::{ansatz_apply, cost_raw, optimize, target_apply, AnsatzSpec, OptimizerConfig, TrainingReport};
use nhskin::{Bitstring, State64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::KvConfig;
use crate::evolve::resolve_model;
use crate::{default_initial, out_dir, parse_initial, to_json, write, write_manifest, CliError, Common, Summary};

#[derive(Debug, Clone, Args)]
pub struct VqaArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long = "J")]
    pub j: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    #[arg(long = "U", allow_hyphen_values = true)]
    pub u: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub initial: Option<String>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the trained circuit's density next to the target's.
    #[arg(long)]
    pub replay: bool,
    /// Recover a planted 3-qubit, 2-layer circuit; exits 1 if Q > 1e-6.
    #[arg(long = "self-test")]
    pub self_test: bool,
}

#[derive(Serialize)]
struct Report<'a> {
    target: String,
    ansatz: AnsatzSpec,
    optimizer: OptimizerConfig,
    seed: u64,
    evaluations: usize,
    restarts_used: usize,
    best_q: f64,
    raw_q: f64,
    fidelity: f64,
    success_amplitude: f64,
    replay_max_deviation: Option<f64>,
    history: &'a [f64],
}

const SELF_TEST_TOL: f64 = 1e-6;
const PLANT_OFFSET: u64 = 1000;

fn params_csv(r: &TrainingReport) -> String {
    let mut s = String::from("index,value\n");
    for (i, p) in r.params.iter().enumerate() {
        let _ = writeln!(s, "{i},{p:.17e}");
    }
    s
}

pub fn run(a: &VqaArgs) -> Result<Summary, CliError> {
    let cfg = KvConfig::load(a.common.config.as_deref())?;
    let mut resolved = BTreeMap::new();
    let self_test = cfg.switch("self-test", a.self_test)?;
    let seed = cfg.resolve("seed", a.seed, 0u64)?;
    let replay = cfg.switch("replay", a.replay)?;
    let default_budget = if self_test { 20_000 } else { 5000 };
    let opt = OptimizerConfig {
        budget: cfg.resolve("budget", a.budget, default_budget)?,
        restarts: cfg.resolve("restarts", a.restarts, OptimizerConfig::default().restarts)?,
        ..Default::default()
    };
    let dir = out_dir(&cfg, a.common.out.clone(), "out/vqa")?;
    for (k, v) in [
        ("self-test", self_test.to_string()),
        ("seed", seed.to_string()),
        ("replay", replay.to_string()),
        ("budget", opt.budget.to_string()),
        ("restarts", opt.restarts.to_string()),
        ("out", dir.display().to_string()),
    ] {
        resolved.insert(k.to_string(), v);
    }

    // (label, ansatz, ψ0, target, success amplitude, physical sites)
    let (label, spec, psi0, target, amp, sites) = if self_test {
        let layers = cfg.resolve("layers", a.layers, 2usize)?;
        let spec = AnsatzSpec::new(3, layers)?;
        let psi0 = State64::init_basis(&Bitstring::zeros(3));
        // Offset so the planted angles never coincide with the first restart.
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(PLANT_OFFSET));
        let planted: Vec<f64> =
            (0..spec.num_params()).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
        let target = ansatz_apply(&spec, &planted, &psi0)?;
        resolved.insert("layers".into(), layers.to_string());
        ("planted".to_string(), spec, psi0, target, 1.0, 3)
    } else {
        let m = resolve_model(
            &cfg,
            a.model.clone(),
            a.length,
            a.j,
            a.gamma,
            a.u,
            a.dt,
            a.steps,
            a.scheme.clone(),
            (4, 10),
            &mut resolved,
        )?;
        let layers = cfg.resolve("layers", a.layers, 4usize)?;
        let l = m.spec.l;
        let initial = cfg.resolve::<String>("initial", a.initial.clone(), default_initial(l))?;
        let phys = parse_initial(&initial, l)?;
        let plan = trotter_plan(&m.spec, m.dt, m.scheme)?;
        let (t, amp) = target_apply(&plan, &phys, m.steps)?;
        // The circuit acts on the full register, ancillas included.
        let k = plan.ancilla_count;
        let spec = AnsatzSpec::new(plan.num_qubits(), layers)?;
        resolved.insert("layers".into(), layers.to_string());
        resolved.insert("initial".into(), initial);
        (describe(&m.spec, m.steps), spec, phys.with_ancillas(k), t.with_ancillas(k), amp, l)
    };

    let r = optimize(&spec, &psi0, &target, &opt, seed)?;
    let mut replay_dev = None;
    let mut files = Vec::new();
    if replay {
        let out = ansatz_apply(&spec, &r.params, &psi0)?;
        let got = density(&out, sites)?.values;
        let want = density(&target.normalized()?, sites)?.values;
        let mut s = String::from("site,target,ansatz,abs_diff\n");
        let mut dev = 0.0f64;
        for i in 0..sites {
            let d = (got[i] - want[i]).abs();
            dev = dev.max(d);
            let _ = writeln!(s, "{i},{:.12e},{:.12e},{d:.12e}", want[i], got[i]);
        }
        write(&dir, "replay.csv", &s, &mut files)?;
        replay_dev = Some(dev);
    }
    let fidelity = (1.0 - r.best_cost).powi(2);
    let report = Report {
        target: label.clone(),
        ansatz: spec,
        optimizer: opt,
        seed,
        evaluations: r.evaluations,
        restarts_used: r.restarts_used,
        best_q: r.best_cost,
        raw_q: cost_raw(r.best_cost, amp),
        fidelity,
        success_amplitude: amp,
        replay_max_deviation: replay_dev,
        history: &r.history,
    };
    write(&dir, "report.json", &to_json(&report), &mut files)?;
    write(&dir, "params.csv", &params_csv(&r), &mut files)?;
    write_manifest(&dir, "vqa", &resolved, &mut files)?;

    let mut lines = vec![
        format!(
            "vqa {label}: {} qubits, {} layers, {} parameters",
            spec.num_qubits,
            spec.num_layers,
            spec.num_params()
        ),
        format!("best Q {:.3e} after {} evaluations, {} restarts", r.best_cost, r.evaluations, r.restarts_used),
        format!("fidelity {fidelity:.6}  raw Q {:.6}", report.raw_q),
    ];
    if let Some(d) = replay_dev {
        lines.push(format!("replay max density deviation {d:.3e}"));
    }
    let mut exit_code = 0;
    if self_test {
        let pass = r.best_cost <= SELF_TEST_TOL;
        lines.push(format!("self-test {}", if pass { "passed" } else { "FAILED" }));
        exit_code = if pass { 0 } else { 1 };
    }
    Ok(Summary { lines, files, exit_code })
}

fn describe(spec: &ModelSpec<f64>, steps: usize) -> String {
    format!("{} L={} J={} gamma={} U={} steps={steps}", spec.kind, spec.l, spec.j, spec.gamma, spec.u_int)
}
