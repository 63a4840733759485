use std::path::Path;

use serde_json::{json, Value};

use hardy_nls::groundstate::{
    gn_equality_family, gn_random_trials, monotonicity_report, AssemblyOptions, GroundStateProfile,
};
use hardy_nls::io::{fmt_f64, read_profile, write_csv, write_json, write_profile, write_text, write_timeseries};
use hardy_nls::nls_sim::{run_perturbed, Direction, DynamicsContext, RunOutput};
use hardy_nls::shooting::{
    bisect_ground_state_with, log_spaced, scan_bracket, scan_structure, standard_bracket, BisectionResult,
    ShootingOptions,
};
use hardy_nls::spectral::{analyze, dichotomy_eigenpair};
use hardy_nls::{Error, Result};

use crate::config::RunConfig;

fn shooting_options(cfg: &RunConfig) -> ShootingOptions {
    ShootingOptions {
        rtol: cfg.shooting.rtol,
        ..Default::default()
    }
}

pub fn solve_ground_state(cfg: &RunConfig) -> Result<(BisectionResult, GroundStateProfile)> {
    let params = cfg.params()?;
    let opts = shooting_options(cfg);
    let bracket = match cfg.shooting.bracket {
        Some(b) => b,
        None => standard_bracket(&params, &opts)?,
    };
    let bis = bisect_ground_state_with(bracket, &params, cfg.shooting.tol_b, &opts)?;
    let assembly = AssemblyOptions {
        grid: cfg.grid.spec()?,
        rtol: cfg.shooting.rtol,
        ..Default::default()
    };
    let profile = GroundStateProfile::assemble(&bis, &params, &assembly)?;
    Ok((bis, profile))
}

/// The profile named in the config, or a fresh one.
fn profile_for(cfg: &RunConfig) -> Result<GroundStateProfile> {
    match &cfg.profile {
        Some(dir) => {
            let profile = read_profile(dir)?;
            let want = cfg.params()?;
            if profile.params != want {
                return Err(Error::InvalidArgument(format!(
                    "profile in {} was computed for (d, p, a) = ({}, {}, {}), config asks for ({}, {}, {})",
                    dir.display(),
                    profile.params.d(),
                    profile.params.p(),
                    profile.params.a(),
                    want.d(),
                    want.p(),
                    want.a()
                )));
            }
            Ok(profile)
        }
        None => Ok(solve_ground_state(cfg)?.1),
    }
}

pub fn ground_state(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let (bis, profile) = solve_ground_state(cfg)?;
    let mono = monotonicity_report(&profile);
    write_profile(out, &profile)?;
    write_json(&out.join("bisection.json"), &bis)?;
    write_json(&out.join("monotonicity.json"), &mono)?;
    let summary = json!({
        "b0": profile.b0,
        "c0": profile.c0,
        "mass": profile.mass,
        "kinetic_a": profile.kinetic_a,
        "lp_norm": profile.lp_norm,
        "energy": profile.energy,
        "C_GN": profile.c_gn,
        "bracket_width": bis.bracket_width,
        "iterations": bis.iterations,
        "seam_mismatch": profile.seam_mismatch,
        "monotonicity_violations": mono.total_violations(),
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn classify_scan(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let params = cfg.params()?;
    let opts = shooting_options(cfg);
    let grid = log_spaced(cfg.scan.b_min, cfg.scan.b_max, cfg.scan.count);
    let scan = scan_bracket(&grid, &params, &opts);
    let mut text = String::from("b,tag,r_event\n");
    for (b, c) in &scan {
        let (tag, r) = match c {
            Ok(c) => (c.tag.as_str(), c.r_event.unwrap_or(f64::NAN)),
            Err(_) => ("Error", f64::NAN),
        };
        text.push_str(&format!("{},{},{}\n", fmt_f64(*b), tag, fmt_f64(r)));
    }
    write_text(&out.join("scan.csv"), &text)?;
    let (flips, monotone) = scan_structure(&scan);
    let decided: Vec<(f64, &str)> = scan
        .iter()
        .filter_map(|(b, c)| c.as_ref().ok().map(|c| (*b, c.tag.as_str())))
        .filter(|(_, t)| *t != "Undecided")
        .collect();
    let brackets: Vec<[f64; 2]> = decided
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| [w[0].0, w[1].0])
        .collect();
    let summary = json!({
        "count": scan.len(),
        "errors": scan.iter().filter(|(_, c)| c.is_err()).count(),
        "flips": flips,
        "monotone": monotone,
        "flip_brackets": brackets,
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn spectrum(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let profile = profile_for(cfg)?;
    let spec = analyze(&profile, cfg.eigen_count)?;
    write_json(&out.join("spectrum.json"), &spec.report)?;
    let r = profile.grid.r();
    let g = profile.params.gamma();
    let scale: Vec<f64> = r.iter().map(|r| r.powf(-g)).collect();
    for (name, modes) in [("l1_modes.csv", &spec.l1_modes), ("l2_modes.csv", &spec.l2_modes)] {
        let mut header = vec!["r".to_string()];
        header.extend((0..modes.len()).map(|k| format!("mode{k}")));
        let h: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let rows = (0..r.len()).map(|i| {
            let mut row = vec![r[i]];
            row.extend(modes.iter().map(|m| m.vector[i] * scale[i]));
            row
        });
        write_csv(&out.join(name), &h, rows)?;
    }
    let dich = &spec.dichotomy;
    let rows = (0..r.len()).map(|i| {
        [
            r[i],
            dich.vplus.0[i] * scale[i],
            dich.vplus.1[i] * scale[i],
            dich.vminus.0[i] * scale[i],
            dich.vminus.1[i] * scale[i],
        ]
    });
    write_csv(&out.join("dichotomy.csv"), &["r", "vplus_1", "vplus_2", "vminus_1", "vminus_2"], rows)?;
    Ok(serde_json::to_value(&spec.report)?)
}

fn run(cfg: &RunConfig, profile: &GroundStateProfile) -> Result<(DynamicsContext, Option<f64>, RunOutput)> {
    let ctx = DynamicsContext::new(profile)?;
    let spec = cfg.evolution.run_spec();
    let dich = match spec.direction {
        Some(_) => Some(dichotomy_eigenpair(profile)?),
        None => None,
    };
    let out = run_perturbed(&ctx, dich.as_ref(), &spec)?;
    Ok((ctx, dich.map(|d| d.e0), out))
}

fn run_echo(cfg: &RunConfig) -> Value {
    let e = &cfg.evolution;
    json!({
        "d": cfg.problem.d,
        "p": cfg.problem.p,
        "a": cfg.problem.a,
        "dt": e.dt,
        "T": e.t_end,
        "delta": e.delta,
        "direction": e.direction,
        "R": e.radius,
        "record_every": e.record_every,
    })
}

const PLOT: &str = "set datafile separator ','
set key autotitle columnhead
set xlabel 't'
set multiplot layout 2,1
set logscale y
plot 'timeseries.csv' using 1:4 with lines
unset logscale y
plot 'timeseries.csv' using 1:7 with lines
unset multiplot
";

pub fn evolve(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let profile = profile_for(cfg)?;
    let (ctx, e0, run) = run(cfg, &profile)?;
    write_timeseries(&out.join("timeseries.csv"), &run.records)?;
    write_json(&out.join("run.json"), &run_echo(cfg))?;
    if cfg.output.plot {
        write_text(&out.join("plot.gp"), PLOT)?;
    }
    let (mass_drift, energy_drift) = run.drifts();
    let rate = match run.spec.direction {
        Some(_) => run.dist_rate(ctx.delta0).ok().map(|f| json!({"rate": f.rate, "residual": f.residual, "samples": f.samples})),
        None => None,
    };
    let summary = json!({
        "e0": e0,
        "sign": run.sign,
        "projection": [run.projection.0, run.projection.1],
        "kinetic_q": ctx.kinetic_q,
        "delta0": ctx.delta0,
        "initial_kinetic": run.records.first().map(|r| r.kinetic),
        "max_dist": run.records.iter().map(|r| r.dist).fold(0.0, f64::max),
        "mass_drift": mass_drift,
        "energy_drift": energy_drift,
        "rate_fit": rate,
        "modulation_speed_ratio": run.modulation_speed_ratio(),
        "left_modulation": run.left_modulation,
        "aborted": run.aborted,
    });
    write_json(&out.join("summary.json"), &summary)?;
    if let Some(msg) = &run.aborted {
        return Err(Error::NoConvergence {
            what: format!("evolution ({msg})"),
            iterations: run.records.len(),
            residual: f64::NAN,
        });
    }
    Ok(summary)
}

/// Centered second differences of `V_R` against `(2pd-8) d + A_R` below
/// the ground state and `(8-2pd) d + A_R` above it.
pub fn virial_check(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let mut cfg = cfg.clone();
    if cfg.evolution.direction.is_none() {
        cfg.evolution.direction = Some(Direction::UnstableMinus);
    }
    let profile = profile_for(&cfg)?;
    let (ctx, e0, run) = run(&cfg, &profile)?;
    write_timeseries(&out.join("timeseries.csv"), &run.records)?;
    write_json(&out.join("run.json"), &run_echo(&cfg))?;
    let p = ctx.params.p();
    let d = ctx.params.dim();
    let coef = 2.0 * p * d - 8.0;
    let tau = cfg.evolution.dt * cfg.evolution.record_every as f64;
    let recs = &run.records;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    let mut ar_ratio: f64 = 0.0;
    let even = |i: usize, j: usize| ((recs[j].t - recs[i].t).abs() - tau).abs() <= 1e-9 * tau;
    for k in 1..recs.len().saturating_sub(1) {
        // the last record may follow a shorter interval
        if !(even(k - 1, k) && even(k, k + 1)) {
            continue;
        }
        let vtt = (recs[k + 1].v_r - 2.0 * recs[k].v_r + recs[k - 1].v_r) / (tau * tau);
        let r = &recs[k];
        let side = if r.kinetic < ctx.kinetic_q { 1.0 } else { -1.0 };
        let pred = side * coef * r.dist + r.a_r;
        rows.push([r.t, vtt, pred, r.a_r, r.dist]);
        if r.dist > 1e-6 {
            worst = worst.max(((vtt - pred) / pred).abs());
            ar_ratio = ar_ratio.max(r.a_r.abs() / r.dist);
        }
    }
    write_csv(&out.join("virial.csv"), &["t", "Vtt", "predicted", "AR", "dist"], &rows)?;
    let summary = json!({
        "e0": e0,
        "R": cfg.evolution.radius,
        "samples": rows.len(),
        "max_relative_error": worst,
        "max_ar_over_dist": ar_ratio,
        "within_5_percent": worst < 0.05,
        "aborted": run.aborted,
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn gn_check(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let profile = profile_for(cfg)?;
    let trials = gn_random_trials(&profile, cfg.gn.trials, cfg.gn.seed)?;
    let mut text = String::from("index,family,J,ratio\n");
    for t in &trials {
        let fam = serde_json::to_value(t.family)?;
        text.push_str(&format!(
            "{},{},{},{}\n",
            t.index,
            fam.as_str().unwrap_or("unknown"),
            fmt_f64(t.j),
            fmt_f64(t.ratio)
        ));
    }
    write_text(&out.join("gn.csv"), &text)?;
    let members = [(1.0, 1.0), (2.0, 0.5), (0.5, 2.0), (-1.0, 1.3), (3.0, 0.8)];
    let family = gn_equality_family(&profile, &members)?;
    let summary = json!({
        "C_GN": profile.gn_constant(),
        "trials": trials.len(),
        "max_ratio": trials.iter().map(|t| t.ratio).fold(f64::NEG_INFINITY, f64::max),
        "violations": trials.iter().filter(|t| t.ratio > 1.0 + 1e-6).count(),
        "equality_family_max_deviation": family.iter().cloned().fold(0.0, f64::max),
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
