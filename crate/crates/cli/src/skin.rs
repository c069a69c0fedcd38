use std::collections::BTreeMap;
use std::fmt::Write as _;

use clap::Args;
use nhskin::fermiskin::{
    density_from_overlap, fit_fermi_dirac, hn_basis, mode_decomposition, skin_deform, slater_density_bruteforce,
};
use serde::Serialize;

use crate::config::KvConfig;
use crate::{out_dir, to_json, write, write_manifest, CliError, Common, Summary};

#[derive(Debug, Clone, Args)]
pub struct SkinArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "L")]
    pub l: Option<usize>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    /// Compare against the Slater-determinant brute force (small L only).
    #[arg(long = "check-oracle")]
    pub check_oracle: bool,
}

#[derive(Debug, Serialize)]
struct FitReport {
    l: usize,
    n: usize,
    kappa: f64,
    beta_eff: f64,
    mu: f64,
    residual: f64,
    beta_over_kappa: Option<f64>,
    capped: bool,
    extended: bool,
    condition: f64,
    threshold: f64,
    oracle_max_deviation: Option<f64>,
}

pub fn run(a: &SkinArgs) -> Result<Summary, CliError> {
    let cfg = KvConfig::load(a.common.config.as_deref())?;
    let l = cfg.resolve("L", a.l, 8usize)?;
    let n = cfg.resolve("N", a.n, 7usize.min(l))?;
    let kappa = cfg.resolve("kappa", a.kappa, 10f64.ln())?;
    let check = cfg.switch("check-oracle", a.check_oracle)?;
    if n == 0 || n > l {
        return Err(CliError::Config(format!("need 1 <= N <= L, got N={n}, L={l}")));
    }
    let dir = out_dir(&cfg, a.common.out.clone(), "out/fermi-skin")?;
    let mut resolved = BTreeMap::new();
    for (k, v) in [
        ("L", l.to_string()),
        ("N", n.to_string()),
        ("kappa", kappa.to_string()),
        ("check-oracle", check.to_string()),
        ("out", dir.display().to_string()),
    ] {
        resolved.insert(k.to_string(), v);
    }

    let basis = skin_deform(&hn_basis(l, n)?, kappa);
    let dens = density_from_overlap(&basis, n)?;
    let modes = mode_decomposition(&basis, n)?;
    let fit = fit_fermi_dirac(&dens.n_x)?;
    let oracle = if check {
        let s = slater_density_bruteforce(&basis, n)?;
        Some(s.iter().zip(&dens.n_x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    } else {
        None
    };

    let mut d = String::from("x,n_x");
    for nu in 1..=n {
        let _ = write!(d, ",n_{nu}");
    }
    d.push('\n');
    for x in 0..l {
        let _ = write!(d, "{},{:.12e}", x + 1, dens.n_x[x]);
        for m in &modes.mode_densities {
            let _ = write!(d, ",{:.12e}", m[x]);
        }
        d.push('\n');
    }
    let mut sp = String::from("nu,b_nu\n");
    for (i, b) in modes.b.iter().enumerate() {
        let _ = writeln!(sp, "{},{b:.12e}", i + 1);
    }
    let report = FitReport {
        l,
        n,
        kappa,
        beta_eff: fit.beta,
        mu: fit.mu,
        residual: fit.residual,
        beta_over_kappa: (kappa != 0.0).then(|| fit.beta / kappa),
        capped: fit.capped,
        extended: dens.extended,
        condition: dens.condition,
        threshold: dens.threshold,
        oracle_max_deviation: oracle,
    };

    let mut files = Vec::new();
    write(&dir, "density.csv", &d, &mut files)?;
    write(&dir, "spectrum.csv", &sp, &mut files)?;
    write(&dir, "fit.json", &to_json(&report), &mut files)?;
    write_manifest(&dir, "fermi-skin", &resolved, &mut files)?;

    let mut lines = vec![
        format!("fermi-skin L={l} N={n} kappa={kappa}"),
        format!("condition {:.3e}{}", dens.condition, if dens.extended { " (extended precision)" } else { "" }),
        format!(
            "fit beta_eff {:.6} mu {:.6} residual {:.3e}{}",
            fit.beta,
            fit.mu,
            fit.residual,
            if fit.capped { " (beta at cap)" } else { "" }
        ),
    ];
    if let Some(r) = report.beta_over_kappa {
        lines.push(format!("beta_eff/kappa {r:.4}"));
    }
    if let Some(dev) = oracle {
        lines.push(format!("oracle max deviation {dev:.3e}"));
    }
    Ok(Summary { lines, files, exit_code: 0 })
}
