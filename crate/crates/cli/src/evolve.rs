use std::collections::BTreeMap;
use std::fmt::Write as _;

use clap::Args;
use nhskin::evolution::{ed_trace, evolve_exact, evolve_sampled, postselection_fraction, SampledNoise};
use nhskin::models::{trotter_plan, ModelKind, ModelSpec, Scheme};
use nhskin::noise::ReadoutModel;
use nhskin::observables::{center_of_mass, center_of_mass_sampled, raw_center_of_mass, DensityProfile};
use nhskin::Trace64;

use crate::config::KvConfig;
use crate::{default_initial, out_dir, parse_initial, write, write_manifest, CliError, Common, Summary};

#[derive(Debug, Clone, Args)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub common: Common,
    /// hn | nhssh | hn-int
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
    /// exact | sample | ed
    #[arg(long)]
    pub mode: Option<String>,
    /// global | local; defaults to the model's natural scheme.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Site-0-leftmost basis strings joined by `+`.
    #[arg(long)]
    pub initial: Option<String>,
    #[arg(long = "readout-p01")]
    pub readout_p01: Option<f64>,
    #[arg(long = "readout-p10")]
    pub readout_p10: Option<f64>,
    #[arg(long)]
    pub mitigate: bool,
}

pub(crate) fn parse_scheme(s: &str) -> Result<Scheme, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "global" => Ok(Scheme::Global),
        "local" => Ok(Scheme::Local),
        _ => Err(CliError::Config(format!("unknown scheme {s:?}"))),
    }
}

pub(crate) fn natural_scheme(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Nhssh => "local",
        _ => "global",
    }
}

/// Model parameters shared by `evolve` and `vqa`.
pub(crate) struct ModelChoice {
    pub spec: ModelSpec<f64>,
    pub scheme: Scheme,
    pub dt: f64,
    pub steps: usize,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn resolve_model(
    cfg: &KvConfig,
    model: Option<String>,
    length: Option<usize>,
    j: Option<f64>,
    gamma: Option<f64>,
    u: Option<f64>,
    dt: Option<f64>,
    steps: Option<usize>,
    scheme: Option<String>,
    defaults: (usize, usize),
    resolved: &mut BTreeMap<String, String>,
) -> Result<ModelChoice, CliError> {
    let kind: ModelKind = cfg.resolve::<String>("model", model, "hn".into())?.parse()?;
    let l = cfg.resolve("length", length, defaults.0)?;
    let j = cfg.resolve("J", j, 1.0)?;
    let gamma = cfg.resolve("gamma", gamma, 0.5)?;
    let u = cfg.resolve("U", u, 0.0)?;
    let dt = cfg.resolve("dt", dt, 0.1)?;
    let steps = cfg.resolve("steps", steps, defaults.1)?;
    let scheme_s = cfg.resolve::<String>("scheme", scheme, natural_scheme(kind).into())?;
    let spec = match kind {
        ModelKind::Hn => ModelSpec::hn(l, j, gamma),
        ModelKind::Nhssh => ModelSpec::nhssh(l, j, gamma),
        ModelKind::HnInt => ModelSpec::hn_int(l, j, gamma, u),
    };
    spec.validate()?;
    if !(dt > 0.0) {
        return Err(CliError::Config("dt must be positive".into()));
    }
    for (k, v) in [
        ("model", kind.to_string()),
        ("length", l.to_string()),
        ("J", j.to_string()),
        ("gamma", gamma.to_string()),
        ("U", u.to_string()),
        ("dt", dt.to_string()),
        ("steps", steps.to_string()),
        ("scheme", scheme_s.clone()),
    ] {
        resolved.insert(k.into(), v);
    }
    Ok(ModelChoice { spec, scheme: parse_scheme(&scheme_s)?, dt, steps })
}

fn observables_csv(trace: &Trace64, sampled: Option<(&[usize], usize)>) -> Result<String, CliError> {
    let mut out = String::from("step,time,x_c,x_c_raw,success_prob,x_c_stderr\n");
    for (k, row) in trace.densities.iter().enumerate() {
        let p = DensityProfile::new(row.clone());
        let xc = if trace.empty_steps.contains(&k) { f64::NAN } else { center_of_mass(&p)? };
        let se = match sampled {
            Some((anc, l)) if !trace.empty_steps.contains(&k) => {
                center_of_mass_sampled(&trace.tables[k].postselect(anc), l)
                    .map(|(_, s)| format!("{s:.12e}"))
                    .unwrap_or_default()
            }
            _ => String::new(),
        };
        let _ = writeln!(
            out,
            "{k},{:.12},{xc:.12},{:.12},{:.12e},{se}",
            trace.times[k],
            raw_center_of_mass(&p),
            trace.success_prob[k]
        );
    }
    Ok(out)
}

pub fn run(a: &EvolveArgs) -> Result<Summary, CliError> {
    let cfg = KvConfig::load(a.common.config.as_deref())?;
    let mut resolved = BTreeMap::new();
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
        (6, 10),
        &mut resolved,
    )?;
    let l = m.spec.l;
    let mode = cfg.resolve::<String>("mode", a.mode.clone(), "exact".into())?.to_ascii_lowercase();
    let initial = cfg.resolve::<String>("initial", a.initial.clone(), default_initial(l))?;
    let psi0 = parse_initial(&initial, l)?;
    resolved.insert("mode".into(), mode.clone());
    resolved.insert("initial".into(), initial);
    let dir = out_dir(&cfg, a.common.out.clone(), "out/evolve")?;
    resolved.insert("out".into(), dir.display().to_string());

    let mut lines = Vec::new();
    let (trace, sampled_meta) = match mode.as_str() {
        "ed" => (ed_trace(&m.spec, &psi0, m.dt, m.steps)?, None),
        "exact" => (evolve_exact(&trotter_plan(&m.spec, m.dt, m.scheme)?, &psi0, m.steps)?, None),
        "sample" | "sampled" => {
            let plan = trotter_plan(&m.spec, m.dt, m.scheme)?;
            let seed =
                cfg.resolve_opt("seed", a.seed)?.ok_or_else(|| CliError::Config("sampled mode needs --seed".into()))?;
            let shots = cfg.resolve("shots", a.shots, 160_000u64)?;
            let p01 = cfg.resolve("readout-p01", a.readout_p01, 0.0)?;
            let p10 = cfg.resolve("readout-p10", a.readout_p10, 0.0)?;
            let mitigate = cfg.switch("mitigate", a.mitigate)?;
            for (k, v) in [
                ("seed", seed.to_string()),
                ("shots", shots.to_string()),
                ("readout-p01", p01.to_string()),
                ("readout-p10", p10.to_string()),
                ("mitigate", mitigate.to_string()),
            ] {
                resolved.insert(k.into(), v);
            }
            let noise = (p01 > 0.0 || p10 > 0.0 || mitigate)
                .then(|| SampledNoise { model: ReadoutModel::uniform(plan.num_qubits(), p01, p10), mitigate });
            let t = evolve_sampled(&plan, &psi0, m.steps, shots, seed, noise.as_ref())?;
            lines.push(format!("post-selected fraction {:.6}", postselection_fraction(&t)?));
            if !t.empty_steps.is_empty() {
                lines.push(format!("no surviving shots at steps {:?}", t.empty_steps));
            }
            (t, Some(plan.ancillas()))
        }
        other => return Err(CliError::Config(format!("unknown mode {other:?}; expected exact, sample or ed"))),
    };

    let mut files = Vec::new();
    write(&dir, "trace.csv", &trace.to_csv(), &mut files)?;
    let obs = observables_csv(&trace, sampled_meta.as_deref().map(|a| (a, l)))?;
    write(&dir, "observables.csv", &obs, &mut files)?;
    write_manifest(&dir, "evolve", &resolved, &mut files)?;

    let last = trace.densities.last().cloned().unwrap_or_default();
    let xc = center_of_mass(&DensityProfile::new(last.clone())).unwrap_or(f64::NAN);
    lines.insert(0, format!("{} {} L={l} steps={} dt={}", trace.mode, m.spec.kind, m.steps, m.dt));
    lines.push(format!("final x_c {xc:.6}  success {:.6e}", trace.success_prob.last().copied().unwrap_or(f64::NAN)));
    lines.push(format!("final n_i {:?}", last.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()));
    Ok(Summary { lines, files, exit_code: 0 })
}
