mod common;

use std::fs;
use std::path::PathBuf;

use hardy_nls::grid::GridSpec;
use hardy_nls::groundstate::{AssemblyOptions, GroundStateProfile};
use hardy_nls::io::{read_csv, read_profile, write_profile, write_timeseries, TIMESERIES_HEADER};
use hardy_nls::nls_sim::{run_perturbed, Direction, DynamicsContext, RunSpec};
use hardy_nls::shooting::{bisect_ground_state, standard_bracket, ShootingOptions};
use hardy_nls::spectral::analyze;
use hardy_nls::{Error, Params};

use common::{canonical_bisection, canonical_params};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hardy-nls-{name}-{}", std::process::id()));
    fs::remove_dir_all(&dir).ok();
    dir
}

fn coarse(params: &Params, b: &hardy_nls::shooting::BisectionResult) -> GroundStateProfile {
    let opts = AssemblyOptions {
        grid: GridSpec::with_nodes(1e-6, 30.0, 2001).unwrap(),
        ..Default::default()
    };
    GroundStateProfile::assemble(b, params, &opts).unwrap()
}

#[test]
fn profile_survives_a_round_trip() {
    let prof = coarse(&canonical_params(), canonical_bisection());
    let dir = scratch("profile");
    write_profile(&dir, &prof).unwrap();
    let back = read_profile(&dir).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back.q), bits(&prof.q));
    assert_eq!(bits(&back.qr), bits(&prof.qr));
    assert_eq!(bits(&back.q1), bits(&prof.q1));
    assert_eq!(back.b0.to_bits(), prof.b0.to_bits());
    assert_eq!(back.energy.to_bits(), prof.energy.to_bits());
    assert_eq!(back.params, prof.params);

    // a perturbed radius no longer matches the recorded grid
    let path = dir.join("profile.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[5].split(',').map(str::to_string).collect();
    let r: f64 = cells[0].parse().unwrap();
    cells[0] = format!("{:.16e}", r * (1.0 + 1e-12));
    lines[5] = cells.join(",");
    fs::write(&path, lines.join("\n")).unwrap();
    assert!(matches!(read_profile(&dir), Err(Error::Format(_))));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn coarse_pipeline_reaches_the_growth_rate() {
    let prof = coarse(&canonical_params(), canonical_bisection());
    let spec = analyze(&prof, 3).unwrap();
    assert_eq!(spec.report.neg_count, 1);
    assert!((spec.dichotomy.e0 - 6.4042).abs() < 0.01, "{}", spec.dichotomy.e0);

    let ctx = DynamicsContext::new(&prof).unwrap();
    let run = RunSpec {
        t_end: 0.8,
        direction: Some(Direction::UnstablePlus),
        ..Default::default()
    };
    let out = run_perturbed(&ctx, Some(&spec.dichotomy), &run).unwrap();
    assert!(out.aborted.is_none());
    let fit = out.dist_rate(ctx.delta0).unwrap();
    assert!((-fit.rate / spec.dichotomy.e0 - 1.0).abs() < 0.2, "{}", fit.rate);
    let (mass, energy) = out.drifts();
    assert!(mass < 1e-10 && energy < 1e-8, "{mass} {energy}");
    assert!(out.records[0].kinetic > ctx.kinetic_q);

    let dir = scratch("series");
    let path = dir.join("timeseries.csv");
    write_timeseries(&path, &out.records).unwrap();
    let (header, rows) = read_csv(&path).unwrap();
    assert_eq!(header, TIMESERIES_HEADER);
    assert_eq!(rows.len(), out.records.len());
    for (row, rec) in rows.iter().zip(&out.records) {
        assert_eq!(row[3].to_bits(), rec.dist.to_bits());
    }
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn reversed_run_grows_backward_in_time() {
    let prof = coarse(&canonical_params(), canonical_bisection());
    let spec = analyze(&prof, 2).unwrap();
    let ctx = DynamicsContext::new(&prof).unwrap();
    let run = RunSpec {
        t_end: 0.8,
        direction: Some(Direction::StablePlus),
        reverse: true,
        ..Default::default()
    };
    let out = run_perturbed(&ctx, Some(&spec.dichotomy), &run).unwrap();
    assert!(out.records.windows(2).all(|w| w[1].t < w[0].t));
    // d = A e^{-e0 t} with t < 0, so the fitted rate is +e0
    let fit = out.dist_rate(ctx.delta0).unwrap();
    assert!((fit.rate / spec.dichotomy.e0 - 1.0).abs() < 0.2, "{}", fit.rate);
}

#[test]
fn standing_wave_stays_put_on_a_coarse_grid() {
    let prof = coarse(&canonical_params(), canonical_bisection());
    let ctx = DynamicsContext::new(&prof).unwrap();
    let run = RunSpec {
        t_end: 0.5,
        ..Default::default()
    };
    let out = run_perturbed(&ctx, None, &run).unwrap();
    assert!(out.records.iter().all(|r| r.dist < 1e-10));
    // the only error left is the Crank-Nicolson phase lag
    let lag = (2.0 * (0.5 * run.dt).atan() - run.dt) / run.dt;
    for r in &out.records {
        let theta = r.theta.unwrap();
        assert!((theta - lag * r.t).abs() < 1e-12, "{} {theta}", r.t);
    }
}

fn spot_check(d: u32, p: f64, a: f64) {
    let params = Params::new(d, p, a).unwrap();
    assert!(params.dynamics_admissible());
    let bracket = standard_bracket(&params, &ShootingOptions::default()).unwrap();
    let bis = bisect_ground_state(bracket, &params, 1e-10).unwrap();
    assert!(bis.bracket_width < 1e-10);
    let prof = coarse(&params, &bis);
    let spec = analyze(&prof, 2).unwrap();
    assert_eq!(spec.report.neg_count, 1);
    assert!(spec.dichotomy.e0 > 0.0);
    assert!(spec.report.ell1_eigenvalues[0] > 0.0);
    let (lhs, rhs, err) = spec.report.q1_identity;
    assert!(err < 1e-2, "{lhs} {rhs}");
}

#[test]
fn spot_check_d4() {
    spot_check(4, 1.2, -0.5);
}

#[test]
fn spot_check_d5() {
    spot_check(5, 1.0, -1.0);
}

#[test]
fn inadmissible_parameters_refuse_dynamics() {
    let params = Params::new(3, 1.2, -0.1).unwrap();
    assert!(!params.dynamics_admissible());
    let bracket = standard_bracket(&params, &ShootingOptions::default()).unwrap();
    let bis = bisect_ground_state(bracket, &params, 1e-8).unwrap();
    let prof = coarse(&params, &bis);
    assert!(DynamicsContext::new(&prof).unwrap_err().is_validation());
}
