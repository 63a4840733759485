//! `hardy-nls` command-line front end.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use hardy_nls::io::write_json;
use hardy_nls::{Error, Result};

use config::{resolve, Flags, OUT_ENV};

#[derive(Debug, Parser)]
#[command(name = "hardy-nls", version, about = "Ground states, spectra and dynamics for NLS with an inverse-square potential")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Shoot for the ground state and write the profile.
    GroundState(Flags),
    /// Classify a log-spaced range of shooting parameters.
    ClassifyScan(Flags),
    /// Linearized spectrum, kernel identities and the dichotomy pair.
    Spectrum(Flags),
    /// Time evolution from the ground state or a perturbation of it.
    Evolve(Flags),
    /// Evolution plus a check of the localized virial identity.
    VirialCheck(Flags),
    /// Random trials against the Gagliardo-Nirenberg constant.
    GnCheck(Flags),
}

impl Command {
    fn parts(&self) -> (&'static str, &Flags) {
        match self {
            Command::GroundState(f) => ("ground-state", f),
            Command::ClassifyScan(f) => ("classify-scan", f),
            Command::Spectrum(f) => ("spectrum", f),
            Command::Evolve(f) => ("evolve", f),
            Command::VirialCheck(f) => ("virial-check", f),
            Command::GnCheck(f) => ("gn-check", f),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        2
    } else if e.is_io() {
        4
    } else {
        3
    }
}

fn kind(code: u8) -> &'static str {
    match code {
        2 => "validation",
        4 => "io",
        _ => "convergence",
    }
}

fn execute(name: &str, flags: &Flags, out: &mut Option<PathBuf>) -> Result<serde_json::Value> {
    let cfg = resolve(name, flags)?;
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    let dir = cfg.out_dir(&root);
    std::fs::create_dir_all(&dir)?;
    write_json(&dir.join("config.json"), &cfg)?;
    *out = Some(dir.clone());
    if matches!(name, "evolve" | "virial-check") {
        cfg.params()?.require_dynamics()?;
    }
    match name {
        "ground-state" => commands::ground_state(&cfg, &dir),
        "classify-scan" => commands::classify_scan(&cfg, &dir),
        "spectrum" => commands::spectrum(&cfg, &dir),
        "evolve" => commands::evolve(&cfg, &dir),
        "virial-check" => commands::virial_check(&cfg, &dir),
        "gn-check" => commands::gn_check(&cfg, &dir),
        _ => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, flags) = cli.command.parts();
    let mut out = None;
    match execute(name, flags, &mut out) {
        Ok(summary) => {
            // a closed pipe is not an error of the computation
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = exit_code(&e);
            let diag = json!({"command": name, "kind": kind(code), "error": e.to_string()});
            if let Some(dir) = &out {
                // best effort; the message also goes to stderr
                let _ = write_json(&dir.join("error.json"), &diag);
            }
            let _ = writeln!(std::io::stderr(), "{}", serde_json::to_string_pretty(&diag).unwrap_or_default());
            ExitCode::from(code)
        }
    }
}
