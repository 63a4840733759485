//! Ground-state profile on a radial grid, its norms and the
//! Gagliardo–Nirenberg functional.
//!
//! Assembly matches two integrations at `r_match`: the outward shooting
//! trajectory for `b` and an inward integration started on the exact
//! decaying tail `c T(r)` at `r_max`. A short Newton solve on `(b, c)`
//! removes the seam mismatch left by the bisection. The outward trajectory
//! alone is not usable far out, because any error in `b` grows like `e^{2r}`
//! relative to Q.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, RadialGrid};
use crate::integrator::{integrate, Tolerances};
use crate::ode::{energy_h, h1_reduced, rhs, OdeState, Params};
use crate::shooting::{
    integrate_sampled, origin_expansion_with, BisectionResult, OriginOrder, ShootingOptions, Trajectory,
};
use crate::special::tail_shape;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AssemblyOptions {
    pub grid: GridSpec,
    /// Matching radius (snapped to the nearest grid node).
    pub r_match: f64,
    /// Allowed relative seam mismatch before the Newton refinement.
    pub seam_tol: f64,
    pub rtol: f64,
    /// Refine `(b, c)` so the seam closes to round-off.
    pub refine: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions {
            grid: GridSpec::default(),
            r_match: 4.0,
            seam_tol: 1e-6,
            rtol: 1e-12,
            refine: true,
        }
    }
}

/// Squared norms: `mass = ||f||_2^2`, `kinetic_a = ||f||_{H^1_a}^2`,
/// `lp_norm = ||f||_{p+2}^{p+2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub mass: f64,
    pub kinetic_a: f64,
    pub lp_norm: f64,
    pub energy: f64,
}

/// A radial function given through `P = r^gamma f` and `P_r` on a grid.
#[derive(Debug, Clone)]
pub struct RadialFunction {
    pub pv: Vec<f64>,
    pub pr: Vec<f64>,
}

impl RadialFunction {
    /// Samples `f` and `f'` and converts to reduced form.
    pub fn from_physical<F>(grid: &RadialGrid, params: &Params, f: F) -> Self
    where
        F: Fn(f64) -> (f64, f64),
    {
        let g = params.gamma();
        let mut pv = Vec::with_capacity(grid.len());
        let mut pr = Vec::with_capacity(grid.len());
        for &r in grid.r() {
            let (v, dv) = f(r);
            let rg = r.powf(g);
            pv.push(rg * v);
            pr.push(rg * (dv + g * v / r));
        }
        RadialFunction { pv, pr }
    }

    /// Samples a function already given in reduced form.
    pub fn from_reduced<F>(grid: &RadialGrid, f: F) -> Self
    where
        F: Fn(f64) -> (f64, f64),
    {
        let (pv, pr) = grid.r().iter().map(|&r| f(r)).unzip();
        RadialFunction { pv, pr }
    }
}

pub fn norms(grid: &RadialGrid, params: &Params, f: &RadialFunction) -> Norms {
    let area = params.sphere_area();
    let k = params.d_eff() - 1.0;
    let p = params.p();
    let gp = params.gamma() * p;
    let r = grid.r();
    let m: Vec<f64> = r.iter().zip(&f.pv).map(|(r, v)| v * v * r.powf(k)).collect();
    let kin: Vec<f64> = r.iter().zip(&f.pr).map(|(r, v)| v * v * r.powf(k)).collect();
    let lp: Vec<f64> = r
        .iter()
        .zip(&f.pv)
        .map(|(r, v)| v.abs().powf(p + 2.0) * r.powf(k - gp))
        .collect();
    let mass = area * grid.integrate(&m);
    let kinetic_a = area * grid.integrate(&kin);
    let lp_norm = area * grid.integrate(&lp);
    Norms {
        mass,
        kinetic_a,
        lp_norm,
        energy: 0.5 * kinetic_a - lp_norm / (p + 2.0),
    }
}

/// `J = lp / (mass^{(4-p(d-2))/4} kinetic^{pd/4})`.
pub fn j_from_norms(n: &Norms, params: &Params) -> f64 {
    let p = params.p();
    let d = params.dim();
    n.lp_norm / (n.mass.powf((4.0 - p * (d - 2.0)) / 4.0) * n.kinetic_a.powf(p * d / 4.0))
}

/// Gagliardo–Nirenberg functional of a grid function.
pub fn evaluate_j(grid: &RadialGrid, params: &Params, f: &RadialFunction) -> Result<f64> {
    let n = norms(grid, params, f);
    if !(n.mass > 0.0 && n.kinetic_a > 0.0) {
        return Err(Error::InvalidArgument("J is undefined for the zero function".into()));
    }
    Ok(j_from_norms(&n, params))
}

#[derive(Debug, Clone)]
pub struct GroundStateProfile {
    pub params: Params,
    pub grid: RadialGrid,
    pub q: Vec<f64>,
    pub qr: Vec<f64>,
    pub q1: Vec<f64>,
    pub b0: f64,
    pub c0: f64,
    pub mass: f64,
    pub kinetic_a: f64,
    pub lp_norm: f64,
    pub energy: f64,
    pub c_gn: f64,
    pub r_match: f64,
    /// Relative seam mismatch with the bisection parameter.
    pub seam_mismatch: f64,
}

fn forward(
    b: f64,
    params: &Params,
    opts: &ShootingOptions,
    nodes: &[f64],
) -> Result<Vec<[f64; 5]>> {
    let origin = origin_expansion_with(b, opts.r0, params, opts.order)?;
    let r_end = *nodes.last().unwrap();
    let (traj, vals) = integrate_sampled(&origin, r_end, params, opts, nodes)?;
    if vals.len() != nodes.len() {
        return Err(Error::Integration {
            r: traj.last().r,
            reason: format!("outward trajectory for b = {b} stopped before the seam"),
        });
    }
    Ok(vals)
}

/// Inward integration from `r_max` on the tail `c T(r)`; values at `nodes`
/// (increasing, all `>= r_match`) as `(q, qr)`.
fn inward(c: f64, params: &Params, rtol: f64, nodes: &[f64]) -> Result<Vec<(f64, f64)>> {
    let r_far = *nodes.last().unwrap();
    let r_m = nodes[0];
    let (t, dt) = tail_shape(params.dim(), params.nu(), r_far);
    let tol = Tolerances {
        rtol,
        atol: 1e-300,
        h_max: 0.25,
        ..Default::default()
    };
    let mut out = vec![(0.0, 0.0); nodes.len()];
    let n = nodes.len();
    out[n - 1] = (c * t, c * dt);
    let mut idx = n as isize - 2;
    integrate(
        |r, y: &[f64; 2]| {
            let (a, b) = rhs(&OdeState::new(r, y[0], y[1]), params);
            [a, b]
        },
        r_far,
        [c * t, c * dt],
        r_m,
        &tol,
        |step| {
            while idx >= 0 && nodes[idx as usize] >= step.x1 {
                let r = nodes[idx as usize];
                let y = if r == step.x1 { step.y1 } else { step.eval(r) };
                out[idx as usize] = (y[0], y[1]);
                idx -= 1;
            }
            ControlFlow::Continue(())
        },
    )?;
    Ok(out)
}

impl GroundStateProfile {
    /// Builds the profile from a converged bisection.
    pub fn assemble(
        bisection: &BisectionResult,
        params: &Params,
        opts: &AssemblyOptions,
    ) -> Result<Self> {
        let grid = opts.grid.build()?;
        let radii = grid.r().to_vec();
        let r = &radii[..];
        let im = grid.locate(opts.r_match).max(1);
        let im = if (r[im + 1] - opts.r_match).abs() < (r[im] - opts.r_match).abs() {
            im + 1
        } else {
            im
        };
        let inner_nodes = &r[..=im];
        let outer_nodes = &r[im..];
        let sopts = ShootingOptions {
            rtol: opts.rtol,
            r0: grid.r_min().min(ShootingOptions::default().r0),
            order: OriginOrder::Corrected,
            stop_at_tail: false,
            ..Default::default()
        };

        let seam_at = |b: f64, c: f64| -> Result<(Vec<[f64; 5]>, Vec<(f64, f64)>, [f64; 2])> {
            let f = forward(b, params, &sopts, inner_nodes)?;
            let g = inward(c, params, opts.rtol, outer_nodes)?;
            let lf = *f.last().unwrap();
            let scale = lf[1].abs();
            let m = [(lf[1] - g[0].0) / scale, (lf[2] - g[0].1) / scale];
            Ok((f, g, m))
        };

        // match q alone with the bisection b to measure the seam mismatch
        let mut b = bisection.b0;
        let f0 = forward(b, params, &sopts, inner_nodes)?;
        let (tm, _) = tail_shape(params.dim(), params.nu(), r[im]);
        let mut c = f0.last().unwrap()[1] / tm;
        for _ in 0..20 {
            let g = inward(c, params, opts.rtol, outer_nodes)?;
            let g2 = inward(c * (1.0 + 1e-7), params, opts.rtol, outer_nodes)?;
            let res = g[0].0 - f0.last().unwrap()[1];
            let der = (g2[0].0 - g[0].0) / (1e-7 * c);
            let dc = res / der;
            c -= dc;
            if dc.abs() < 1e-14 * c.abs() {
                break;
            }
        }
        let (_, _, m) = seam_at(b, c)?;
        let seam_mismatch = m[1].abs() / (f0.last().unwrap()[2] / f0.last().unwrap()[1]).abs();
        if seam_mismatch > opts.seam_tol {
            return Err(Error::Seam {
                r: r[im],
                mismatch: seam_mismatch,
                tol: opts.seam_tol,
            });
        }

        if opts.refine {
            let mut converged = false;
            let mut last_norm = f64::INFINITY;
            for _ in 0..12 {
                let (_, _, f) = seam_at(b, c)?;
                let norm = f[0].abs().max(f[1].abs());
                last_norm = norm;
                if norm < 1e-13 {
                    converged = true;
                    break;
                }
                let db = 1e-7 * b;
                let dc = 1e-7 * c;
                let (_, _, fb) = seam_at(b + db, c)?;
                let (_, _, fc) = seam_at(b, c + dc)?;
                let j = [
                    [(fb[0] - f[0]) / db, (fc[0] - f[0]) / dc],
                    [(fb[1] - f[1]) / db, (fc[1] - f[1]) / dc],
                ];
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                let sb = (f[0] * j[1][1] - f[1] * j[0][1]) / det;
                let sc = (j[0][0] * f[1] - j[1][0] * f[0]) / det;
                b -= sb;
                c -= sc;
                if sb.abs() < 1e-15 * b && sc.abs() < 1e-15 * c.abs() {
                    converged = true;
                    break;
                }
            }
            if !converged && last_norm > 1e-10 {
                return Err(Error::no_conv("seam refinement", 12, last_norm));
            }
        }

        let (f, g, _) = seam_at(b, c)?;
        let n = r.len();
        let mut q = vec![0.0; n];
        let mut qr = vec![0.0; n];
        let mut q1 = vec![0.0; n];
        let gm = params.gamma();
        let p = params.p();
        for (i, v) in f.iter().enumerate().take(im) {
            q[i] = v[1];
            qr[i] = v[2];
            q1[i] = r[i].powf(-gm) * ((2.0 / p - gm) * v[3] + v[4]);
        }
        for (k, (a, da)) in g.iter().enumerate() {
            let i = im + k;
            q[i] = *a;
            qr[i] = *da;
            q1[i] = 2.0 / p * a + r[i] * da;
        }
        let mut prof = GroundStateProfile {
            params: *params,
            grid,
            q,
            qr,
            q1,
            b0: b,
            c0: c,
            mass: 0.0,
            kinetic_a: 0.0,
            lp_norm: 0.0,
            energy: 0.0,
            c_gn: 0.0,
            r_match: r[im],
            seam_mismatch,
        };
        prof.refresh_norms();
        Ok(prof)
    }

    /// Recomputes the cached norms and `C_GN` from the arrays.
    pub fn refresh_norms(&mut self) {
        let n = self.compute_norms();
        self.mass = n.mass;
        self.kinetic_a = n.kinetic_a;
        self.lp_norm = n.lp_norm;
        self.energy = n.energy;
        self.c_gn = j_from_norms(&n, &self.params);
    }

    pub fn compute_norms(&self) -> Norms {
        norms(&self.grid, &self.params, &self.reduced_function())
    }

    pub fn gn_constant(&self) -> f64 {
        j_from_norms(&self.compute_norms(), &self.params)
    }

    /// `P = r^gamma Q` on the grid.
    pub fn reduced(&self) -> Vec<f64> {
        let g = self.params.gamma();
        self.grid.r().iter().zip(&self.q).map(|(r, q)| r.powf(g) * q).collect()
    }

    /// `W = r P_r` on the grid.
    pub fn reduced_w(&self) -> Vec<f64> {
        let g = self.params.gamma();
        self.grid
            .r()
            .iter()
            .zip(self.q.iter().zip(&self.qr))
            .map(|(r, (q, qr))| r.powf(g) * (r * qr + g * q))
            .collect()
    }

    /// `r^gamma Q1`.
    pub fn reduced_q1(&self) -> Vec<f64> {
        let g = self.params.gamma();
        self.grid.r().iter().zip(&self.q1).map(|(r, q)| r.powf(g) * q).collect()
    }

    pub fn reduced_function(&self) -> RadialFunction {
        let pv = self.reduced();
        let pr = self
            .reduced_w()
            .iter()
            .zip(self.grid.r())
            .map(|(w, r)| w / r)
            .collect();
        RadialFunction { pv, pr }
    }

    fn reduced_p_rr(&self, r: f64, pv: f64, pr: f64) -> f64 {
        let k = self.params.d_eff() - 1.0;
        let gp = self.params.gamma() * self.params.p();
        -(k / r) * pr + pv - r.powf(-gp) * pv.abs().powf(self.params.p()) * pv
    }

    /// `(P, P_r)` at any `x > 0`: origin law below the grid, tail law
    /// above it, quintic Hermite interpolation in between.
    pub fn eval_reduced(&self, x: f64) -> (f64, f64) {
        let params = &self.params;
        if x < self.grid.r_min() {
            let p = params.p();
            let gm = params.gamma();
            let beta = params.beta();
            let m = 2.0 - gm * p;
            let pm1 = 2.0 * (2.0 + beta);
            let pm2 = m * (m + beta);
            let b = self.b0;
            let bp = b.powf(p);
            let v = b + b * x * x / pm1 - b * bp * x.powf(m) / pm2;
            let dv = 2.0 * b * x / pm1 - m * b * bp * x.powf(m - 1.0) / pm2;
            return (v, dv);
        }
        if x > self.grid.r_max() {
            let (t, dt) = tail_shape(params.dim(), params.nu(), x);
            let g = params.gamma();
            let xg = x.powf(g);
            return (self.c0 * xg * t, self.c0 * xg * (dt + g * t / x));
        }
        let i = self.grid.locate(x);
        let r = self.grid.r();
        let g = params.gamma();
        let node = |j: usize| {
            let rg = r[j].powf(g);
            let v = rg * self.q[j];
            let dv = rg * (self.qr[j] + g * self.q[j] / r[j]);
            (v, dv, self.reduced_p_rr(r[j], v, dv))
        };
        let (y0, d0, s0) = node(i);
        let (y1, d1, s1) = node(i + 1);
        let h = r[i + 1] - r[i];
        let t = (x - r[i]) / h;
        hermite5(t, h, [y0, d0, s0], [y1, d1, s1])
    }

    /// Profile nodes inside `window` as a trajectory, for tail fits.
    pub fn tail_trajectory(&self, window: (f64, f64)) -> Trajectory {
        let samples = self
            .grid
            .r()
            .iter()
            .enumerate()
            .filter(|(_, &r)| r >= window.0 && r <= window.1)
            .map(|(i, &r)| OdeState::new(r, self.q[i], self.qr[i]))
            .collect();
        Trajectory {
            samples,
            events: vec![],
            params: self.params,
            valid: true,
        }
    }

    pub fn sidecar(&self) -> ProfileSidecar {
        ProfileSidecar {
            d: self.params.d(),
            p: self.params.p(),
            a: self.params.a(),
            beta: self.params.beta(),
            b0: self.b0,
            c0: self.c0,
            mass: self.mass,
            kinetic_a: self.kinetic_a,
            lp_norm: self.lp_norm,
            energy: self.energy,
            C_GN: self.c_gn,
            grid: self.grid.spec(),
            r_match: self.r_match,
            seam_mismatch: self.seam_mismatch,
        }
    }
}

/// Quintic Hermite on `[0, 1]` with value, first and second derivative at
/// both ends (derivatives with respect to the physical variable, spacing h).
fn hermite5(t: f64, h: f64, a: [f64; 3], b: [f64; 3]) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h20 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h21 = 0.5 * (t3 - 2.0 * t4 + t5);
    let v = h00 * a[0] + h * h10 * a[1] + h * h * h20 * a[2] + h01 * b[0] + h * h11 * b[1]
        + h * h * h21 * b[2];
    let d00 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
    let d10 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
    let d20 = 0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4);
    let d01 = 30.0 * t2 - 60.0 * t3 + 30.0 * t4;
    let d11 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
    let d21 = 0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4);
    let dv = (d00 * a[0] + d01 * b[0]) / h
        + d10 * a[1]
        + h * d20 * a[2]
        + d11 * b[1]
        + h * d21 * b[2];
    (v, dv)
}

/// JSON sidecar of a profile file.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSidecar {
    pub d: u32,
    pub p: f64,
    pub a: f64,
    pub beta: f64,
    pub b0: f64,
    pub c0: f64,
    pub mass: f64,
    pub kinetic_a: f64,
    pub lp_norm: f64,
    pub energy: f64,
    pub C_GN: f64,
    pub grid: GridSpec,
    pub r_match: f64,
    #[serde(default)]
    pub seam_mismatch: f64,
}

/// `c Q(lambda r)` in reduced form on the profile grid.
pub fn scaled_ground_state(profile: &GroundStateProfile, c: f64, lambda: f64) -> RadialFunction {
    let g = profile.params.gamma();
    let s0 = c * lambda.powf(-g);
    let s1 = c * lambda.powf(1.0 - g);
    RadialFunction::from_reduced(&profile.grid, |r| {
        let (v, dv) = profile.eval_reduced(lambda * r);
        (s0 * v, s1 * dv)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub violations: usize,
    pub first_violation: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub checks: Vec<Check>,
    /// Q value where the bracket of H1' vanishes.
    pub threshold_q: f64,
    /// Radius where Q crosses the threshold.
    pub threshold_r: Option<f64>,
    /// Radius where the differenced H1 changes sign.
    pub h1_turn_r: Option<f64>,
    /// Radius where Q1 vanishes.
    pub q1_zero_r: Option<f64>,
}

impl MonotonicityReport {
    pub fn total_violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }
}

fn check<F>(name: &str, r: &[f64], range: std::ops::Range<usize>, ok: F) -> Check
where
    F: Fn(usize) -> bool,
{
    let mut violations = 0;
    let mut first = None;
    for i in range {
        if !ok(i) {
            violations += 1;
            first.get_or_insert(r[i]);
        }
    }
    Check {
        name: name.to_string(),
        violations,
        first_violation: first,
    }
}

fn sign_changes(v: &[f64]) -> Vec<usize> {
    v.windows(2)
        .enumerate()
        .filter(|(_, w)| (w[0] > 0.0) != (w[1] > 0.0))
        .map(|(i, _)| i)
        .collect()
}

pub fn monotonicity_report(profile: &GroundStateProfile) -> MonotonicityReport {
    let params = &profile.params;
    let r = profile.grid.r();
    let n = r.len();
    let pv = profile.reduced();
    let w = profile.reduced_w();
    let h: Vec<f64> = (0..n)
        .map(|i| energy_h(&OdeState::new(r[i], profile.q[i], profile.qr[i]), params))
        .collect();
    let h1: Vec<f64> = (0..n).map(|i| h1_reduced(r[i], pv[i], w[i], params)).collect();
    // Q1/Q - 2/p = r Q_r / Q
    let ratio: Vec<f64> = (0..n).map(|i| r[i] * profile.qr[i] / profile.q[i]).collect();
    let mut checks = vec![
        check("Q > 0", r, 0..n, |i| profile.q[i] > 0.0),
        check("Qr < 0", r, 0..n, |i| profile.qr[i] < 0.0),
        check("H strictly decreasing", r, 0..n - 1, |i| h[i + 1] < h[i]),
        check("H1 > 0 on the interior", r, 1..n - 1, |i| h1[i] > 0.0),
        check("Q1/Q strictly decreasing", r, 0..n - 1, |i| ratio[i + 1] < ratio[i]),
    ];
    let dh1: Vec<f64> = h1.windows(2).map(|w| w[1] - w[0]).collect();
    let turns = sign_changes(&dh1);
    checks.push(Check {
        name: "H1' changes sign exactly once".into(),
        violations: (turns.len() as isize - 1).unsigned_abs(),
        first_violation: if turns.len() == 1 { None } else { turns.get(1).map(|&i| r[i]) },
    });
    let q1_zeros = sign_changes(&profile.q1);
    checks.push(Check {
        name: "Q1 changes sign exactly once".into(),
        violations: (q1_zeros.len() as isize - 1).unsigned_abs(),
        first_violation: None,
    });
    let thr = params.h1_threshold();
    let threshold_r = (0..n - 1).find(|&i| profile.q[i] >= thr && profile.q[i + 1] < thr).map(|i| {
        let t = (profile.q[i] - thr) / (profile.q[i] - profile.q[i + 1]);
        r[i] + t * (r[i + 1] - r[i])
    });
    let h1_turn_r = turns.first().map(|&i| r[i + 1]);
    let q1_zero_r = q1_zeros.first().map(|&i| {
        let t = profile.q1[i] / (profile.q1[i] - profile.q1[i + 1]);
        r[i] + t * (r[i + 1] - r[i])
    });
    if let (Some(a), Some(b)) = (threshold_r, h1_turn_r) {
        let i = profile.grid.locate(a);
        let h = r[(i + 2).min(n - 1)] - r[i.saturating_sub(1)];
        checks.push(Check {
            name: "H1' turns where Q crosses the threshold".into(),
            violations: usize::from((a - b).abs() > h),
            first_violation: None,
        });
    }
    MonotonicityReport {
        checks,
        threshold_q: thr,
        threshold_r,
        h1_turn_r,
        q1_zero_r,
    }
}

/// One randomized evaluation of the Gagliardo–Nirenberg functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnTrial {
    pub index: usize,
    pub family: GnFamily,
    pub j: f64,
    /// `J / C_GN`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GnFamily {
    /// Signed sum of up to three centred Gaussians.
    Gaussians,
    /// A Gaussian bump centred away from the origin.
    Shell,
    /// `(1 + m r^2)^{-k}`.
    Algebraic,
    /// A rescaled ground state plus a small Gaussian.
    NearOptimal,
}

/// `J(f)` for `count` random smooth radial `f`, reproducible from `seed`.
pub fn gn_random_trials(profile: &GroundStateProfile, count: usize, seed: u64) -> Result<Vec<GnTrial>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let params = &profile.params;
    let grid = &profile.grid;
    let cgn = profile.gn_constant();
    let mut out = Vec::with_capacity(count);
    for index in 0..count {
        let family = match index % 4 {
            0 => GnFamily::Gaussians,
            1 => GnFamily::Shell,
            2 => GnFamily::Algebraic,
            _ => GnFamily::NearOptimal,
        };
        let f = match family {
            GnFamily::Gaussians => {
                let terms: Vec<(f64, f64)> = (0..rng.gen_range(1..=3))
                    .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.05..5.0)))
                    .collect();
                RadialFunction::from_physical(grid, params, |r| {
                    terms.iter().fold((0.0, 0.0), |(v, dv), (c, l)| {
                        let e = c * (-l * r * r).exp();
                        (v + e, dv - 2.0 * l * r * e)
                    })
                })
            }
            GnFamily::Shell => {
                let c: f64 = rng.gen_range(0.5..5.0);
                let l: f64 = rng.gen_range(0.2..4.0);
                RadialFunction::from_physical(grid, params, |r| {
                    let e = (-l * (r - c) * (r - c)).exp();
                    (e, -2.0 * l * (r - c) * e)
                })
            }
            GnFamily::Algebraic => {
                let m: f64 = rng.gen_range(0.1..3.0);
                let k: f64 = rng.gen_range(2.0..5.0);
                RadialFunction::from_physical(grid, params, |r| {
                    let b = 1.0 + m * r * r;
                    (b.powf(-k), -2.0 * k * m * r * b.powf(-k - 1.0))
                })
            }
            GnFamily::NearOptimal => {
                let c: f64 = rng.gen_range(0.5..2.0);
                let lambda: f64 = rng.gen_range(0.7..1.5);
                let eps: f64 = rng.gen_range(-0.05..0.05);
                let l: f64 = rng.gen_range(0.2..2.0);
                let base = scaled_ground_state(profile, c, lambda);
                let g = params.gamma();
                let pv = grid
                    .r()
                    .iter()
                    .zip(&base.pv)
                    .map(|(r, v)| v + eps * r.powf(g) * (-l * r * r).exp())
                    .collect();
                let pr = grid
                    .r()
                    .iter()
                    .zip(&base.pr)
                    .map(|(r, v)| {
                        let e = (-l * r * r).exp();
                        v + eps * r.powf(g) * e * (g / r - 2.0 * l * r)
                    })
                    .collect();
                RadialFunction { pv, pr }
            }
        };
        let j = evaluate_j(grid, params, &f)?;
        out.push(GnTrial {
            index,
            family,
            j,
            ratio: j / cgn,
        });
    }
    Ok(out)
}

/// Relative deviation of `J(c Q(λ·))` from `C_GN` for each `(c, λ)`.
pub fn gn_equality_family(profile: &GroundStateProfile, members: &[(f64, f64)]) -> Result<Vec<f64>> {
    let cgn = profile.gn_constant();
    members
        .iter()
        .map(|&(c, l)| {
            if !(c != 0.0 && l > 0.0 && c.is_finite() && l.is_finite()) {
                return Err(Error::InvalidArgument(format!("bad scaling ({c}, {l})")));
            }
            let f = scaled_ground_state(profile, c, l);
            Ok((evaluate_j(&profile.grid, &profile.params, &f)? - cgn).abs() / cgn)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_reproduces_quintics() {
        let f = |x: f64| (1.0 + x * (0.5 + x * (-2.0 + x * (0.3 + x * (1.1 - 0.7 * x)))), 0.0);
        let df = |x: f64| 0.5 + x * (-4.0 + x * (0.9 + x * (4.4 - 3.5 * x)));
        let d2f = |x: f64| -4.0 + x * (1.8 + x * (13.2 - 14.0 * x));
        let (x0, h) = (0.3, 0.4);
        let a = [f(x0).0, df(x0), d2f(x0)];
        let b = [f(x0 + h).0, df(x0 + h), d2f(x0 + h)];
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            let (v, dv) = hermite5(t, h, a, b);
            assert!((v - f(x0 + t * h).0).abs() < 1e-13);
            assert!((dv - df(x0 + t * h)).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_norms() {
        // f = e^{-r^2} in d = 3: mass = pi^{3/2} / 2^{3/2}
        let params = Params::new(3, 2.0, -0.1).unwrap();
        let grid = GridSpec::with_nodes(1e-6, 30.0, 16001).unwrap().build().unwrap();
        let f = RadialFunction::from_physical(&grid, &params, |r| {
            let e = (-r * r).exp();
            (e, -2.0 * r * e)
        });
        let n = norms(&grid, &params, &f);
        let pi = std::f64::consts::PI;
        assert!((n.mass - (pi / 2.0).powf(1.5)).abs() < 1e-10, "{:e}", n.mass - (pi / 2.0).powf(1.5));
        // kinetic = int |grad f|^2 + a int f^2/r^2
        let grad = 3.0 * (pi / 2.0).powf(1.5);
        let hardy = -0.1 * 4.0 * pi * (pi / 2.0).sqrt() / 2.0;
        assert!((n.kinetic_a - (grad + hardy)).abs() < 1e-9, "{}", n.kinetic_a - grad - hardy);
        // doubling quadruples the mass
        let f2 = RadialFunction {
            pv: f.pv.iter().map(|v| 2.0 * v).collect(),
            pr: f.pr.iter().map(|v| 2.0 * v).collect(),
        };
        assert!((norms(&grid, &params, &f2).mass - 4.0 * n.mass).abs() < 1e-12);
        let z = RadialFunction {
            pv: vec![0.0; grid.len()],
            pr: vec![0.0; grid.len()],
        };
        assert!(evaluate_j(&grid, &params, &z).is_err());
    }
}
