mod common;

use common::{canonical_bisection, canonical_params, canonical_profile, extrapolated};
use hardy_nls::groundstate::{AssemblyOptions, GroundStateProfile};
use hardy_nls::shooting::{bisect_ground_state, standard_bracket, ShootingOptions};
use hardy_nls::Params;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn relaxation_matches_shooting_canonical() {
    let o = extrapolated(&canonical_params(), 0.005, 30.0);
    assert!(o.residual < 1e-10, "residual {}", o.residual);
    let prof = canonical_profile();
            assert!(rel(o.b0, canonical_bisection().b0) < 1e-3);
    assert!(rel(o.mass, prof.mass) < 1e-3);
    assert!(rel(o.energy, prof.energy) < 1e-3);
    assert!(rel(o.kinetic, prof.kinetic_a) < 1e-3);
}

fn check_other(d: u32, p: f64, a: f64) {
    let params = Params::new(d, p, a).unwrap();
    let o = extrapolated(&params, 0.005, 30.0);
    let bracket = standard_bracket(&params, &ShootingOptions::default()).unwrap();
    let bis = bisect_ground_state(bracket, &params, 1e-10).unwrap();
    let prof = GroundStateProfile::assemble(&bis, &params, &AssemblyOptions::default()).unwrap();
    assert!(rel(o.b0, bis.b0) < 1e-3);
    assert!(rel(o.mass, prof.mass) < 1e-3);
    assert!(rel(o.energy, prof.energy) < 1e-3);
}

#[test]
fn relaxation_matches_shooting_d4() {
    check_other(4, 1.2, -0.5);
}

#[test]
fn relaxation_matches_shooting_d5() {
    check_other(5, 1.0, -1.0);
}

