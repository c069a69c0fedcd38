//! Command implementations behind the `nhskin` binary.
//!
//! Each command resolves its configuration (flags over an optional
//! `key = value` file over defaults), writes CSV/JSON artifacts into the
//! output directory and finishes with a `manifest.json` that echoes the
//! resolved configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub mod config;
pub mod evolve;
pub mod skin;
pub mod train;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] nhskin::Error),
}

#[derive(Debug, Parser)]
#[command(name = "nhskin", version, about = "Non-Hermitian skin-effect dynamics on dilated circuits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trotter or dense evolution of a spin chain; writes a density trace.
    Evolve(evolve::EvolveArgs),
    /// Fermi-skin density, overlap spectrum and Fermi-Dirac fit.
    FermiSkin(skin::SkinArgs),
    /// Train the layered ansatz against a post-selected evolution.
    Vqa(train::VqaArgs),
}

/// Options every command accepts.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// `key = value` file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// What a command wants to say on stdout.
#[derive(Debug, Clone, Default)]
pub struct Summary {
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
    /// Non-zero for self-tests that did not meet their target.
    pub exit_code: i32,
}

pub fn run(cli: Cli) -> Result<Summary, CliError> {
    match cli.command {
        Command::Evolve(a) => evolve::run(&a),
        Command::FermiSkin(a) => skin::run(&a),
        Command::Vqa(a) => train::run(&a),
    }
}

pub(crate) fn out_dir(config: &config::KvConfig, flag: Option<PathBuf>, default: &str) -> Result<PathBuf, CliError> {
    let dir: PathBuf = config.resolve("out", flag, PathBuf::from(default))?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

pub(crate) fn write(dir: &Path, name: &str, body: &str, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let p = dir.join(name);
    std::fs::write(&p, body).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    files.push(p);
    Ok(())
}

pub(crate) fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    created_unix: u64,
    config: &'a BTreeMap<String, String>,
    outputs: Vec<String>,
}

/// Writes `manifest.json`; the only artifact that carries a timestamp.
pub(crate) fn write_manifest(
    dir: &Path,
    command: &str,
    resolved: &BTreeMap<String, String>,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let created_unix =
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let outputs = files.iter().filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect();
    let m = Manifest { command, version: env!("CARGO_PKG_VERSION"), created_unix, config: resolved, outputs };
    write(dir, "manifest.json", &to_json(&m), files)
}

/// Parses `a+b+…` with each term written site-0-leftmost in `0`/`1` or
/// `↑`/`↓`, returning the equal-weight superposition.
pub fn parse_initial(s: &str, sites: usize) -> Result<nhskin::State64, CliError> {
    let mut terms = Vec::new();
    for t in s.split('+') {
        let ket: String = t
            .trim()
            .chars()
            .map(|c| match c {
                '1' => '↑',
                '0' => '↓',
                other => other,
            })
            .collect();
        let b = nhskin::Bitstring::from_ket(&ket)?;
        if b.len() != sites {
            return Err(CliError::Config(format!("initial term {t:?} has {} sites, expected {sites}", b.len())));
        }
        terms.push(b);
    }
    Ok(nhskin::State64::superposition(&terms)?)
}

/// Half the sites up on the left: `↑…↑↓…↓`.
pub(crate) fn default_initial(sites: usize) -> String {
    (0..sites).map(|i| if i < sites / 2 { '1' } else { '0' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_superposition_syntax() {
        let s = parse_initial("001000+000100", 6).unwrap();
        let d = nhskin::observables::density(&s, 6).unwrap();
        assert!((d.values[2] - 0.5).abs() < 1e-15 && (d.values[3] - 0.5).abs() < 1e-15);
        let s = parse_initial("↑↓", 2).unwrap();
        assert_eq!(s.amplitudes()[1].re, 1.0);
        assert!(parse_initial("0010", 6).is_err());
        assert!(parse_initial("00x000", 6).is_err());
        assert_eq!(default_initial(8), "11110000");
    }
}
