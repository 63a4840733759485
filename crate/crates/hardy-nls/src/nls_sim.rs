//! Radial time evolution near the ground state.
//!
//! Fields are stored in reduced form `P = r^γ u` on the profile grid, where
//! the operator `-Δ + a/r^2` becomes the flux-form Laplacian of the
//! spectral module. The stepper is Crank–Nicolson with the
//! Delfour–Fortin–Payre difference quotient for the nonlinearity, so the
//! discrete mass and energy are invariants of the scheme. The reference
//! state is the discrete ground state, which the scheme keeps exactly
//! stationary up to phase.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groundstate::GroundStateProfile;
use crate::linalg::thomas;
use crate::ode::Params;
use crate::spectral::{assemble_sector, discrete_ground_state, Dichotomy};

/// Fixed-point iterations allowed per step and their tolerance.
pub const FIXED_POINT_MAX: usize = 8;
pub const FIXED_POINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexField {
    pub t: f64,
    /// Reduced values `r^γ u(r_i)`.
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn conj(&self) -> ComplexField {
        ComplexField {
            t: self.t,
            values: self.values.iter().map(|z| z.conj()).collect(),
        }
    }
}

/// Everything the stepper and the diagnostics share.
#[derive(Debug, Clone)]
pub struct DynamicsContext {
    pub params: Params,
    pub r: Vec<f64>,
    /// Cell volumes for the reduced measure `r^{d'-1} dr`.
    pub weight: Vec<f64>,
    flux: Vec<f64>,
    robin: f64,
    diag: Vec<f64>,
    pub area: f64,
    pub gamma: f64,
    pot_scale: Vec<f64>,
    /// Discrete ground state, reduced.
    pub q: Vec<f64>,
    /// Profile `Q1`, reduced; used as the second direction of the
    /// mass-energy projection.
    pub q1: Vec<f64>,
    /// `(K_a + W) Q`, the dual form of `(L_a + 1) Q`.
    la1_q: Vec<f64>,
    ka_q: Vec<f64>,
    /// Nonlinear coefficient `r^{-γp} |Q|^p` at the ground state.
    g_q: Vec<f64>,
    qq: f64,
    pub kinetic_q: f64,
    pub mass_q: f64,
    pub energy_q: f64,
    /// Modulation validity radius `δ0`.
    pub delta0: f64,
}

impl DynamicsContext {
    pub fn new(profile: &GroundStateProfile) -> Result<Self> {
        profile.params.require_dynamics()?;
        let free = assemble_sector(profile, 0, 0.0)?;
        let qh = discrete_ground_state(profile)?;
        let q = free.to_reduced(&qh);
        let p = profile.params.p();
        let n = free.r.len();
        let flux: Vec<f64> = free.stiffness.off.iter().map(|k| -k).collect();
        let robin = {
            let mut s = free.stiffness.diag[n - 1];
            s -= flux[n - 2];
            s
        };
        let mut ctx = DynamicsContext {
            params: profile.params,
            pot_scale: free.r.iter().map(|r| r.powf(-free.gamma * p)).collect(),
            r: free.r.clone(),
            weight: free.weight.clone(),
            flux,
            robin,
            diag: free.stiffness.diag.clone(),
            area: free.area,
            gamma: free.gamma,
            q: q.clone(),
            q1: profile.reduced_q1(),
            la1_q: Vec::new(),
            ka_q: Vec::new(),
            g_q: Vec::new(),
            qq: 0.0,
            kinetic_q: 0.0,
            mass_q: 0.0,
            energy_q: 0.0,
            delta0: 0.0,
        };
        let kq = ctx.apply_k(&q);
        ctx.la1_q = kq.iter().zip(&ctx.weight).zip(&q).map(|((k, w), x)| k + w * x).collect();
        ctx.g_q = q.iter().zip(&ctx.pot_scale).map(|(x, c)| c * dfp_quotient(x * x, x * x, p)).collect();
        ctx.ka_q = kq;
        ctx.qq = ctx.area * q.iter().zip(&ctx.la1_q).map(|(a, b)| a * b).sum::<f64>();
        let qf = ctx.real_field(&q);
        let (m, e) = ctx.conserved(&qf);
        ctx.mass_q = m;
        ctx.energy_q = e;
        ctx.kinetic_q = ctx.kinetic(&qf);
        ctx.delta0 = 1e-2 * ctx.kinetic_q;
        Ok(ctx)
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Field with real reduced values `v` at `t = 0`.
    pub fn real_field(&self, v: &[f64]) -> ComplexField {
        ComplexField {
            t: 0.0,
            values: v.iter().map(|x| Complex64::new(*x, 0.0)).collect(),
        }
    }

    /// The discrete ground state as a field.
    pub fn ground_state(&self) -> ComplexField {
        self.real_field(&self.q)
    }

    /// Physical values `u(r_i)`.
    pub fn physical(&self, f: &ComplexField) -> Vec<Complex64> {
        f.values.iter().zip(&self.r).map(|(z, r)| z * r.powf(-self.gamma)).collect()
    }

    fn apply_k(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let mut out = vec![0.0; n];
        for (e, k) in self.flux.iter().enumerate() {
            let f = k * (v[e + 1] - v[e]);
            out[e] -= f;
            out[e + 1] += f;
        }
        out[n - 1] += self.robin * v[n - 1];
        out
    }

    fn apply_kc(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = v.len();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (e, k) in self.flux.iter().enumerate() {
            let f = (v[e + 1] - v[e]) * *k;
            out[e] -= f;
            out[e + 1] += f;
        }
        out[n - 1] += v[n - 1] * self.robin;
        out
    }

    /// `||u||^2` in the homogeneous `a`-Sobolev norm.
    pub fn kinetic(&self, f: &ComplexField) -> f64 {
        let k = self.apply_kc(&f.values);
        self.area * f.values.iter().zip(&k).map(|(a, b)| (a.conj() * b).re).sum::<f64>()
    }

    /// Discrete mass and energy, the invariants of the scheme.
    pub fn conserved(&self, f: &ComplexField) -> (f64, f64) {
        let p = self.params.p();
        let mass = self.area * f.values.iter().zip(&self.weight).map(|(z, w)| w * z.norm_sqr()).sum::<f64>();
        let pot: f64 = f
            .values
            .iter()
            .zip(&self.weight)
            .zip(&self.pot_scale)
            .map(|((z, w), s)| w * s * z.norm_sqr().powf(0.5 * (p + 2.0)))
            .sum();
        let energy = 0.5 * self.kinetic(f) - self.area * pot / (p + 2.0);
        (mass, energy)
    }

    /// `d(f) = | ||f||^2 - ||Q||^2 |` in the homogeneous norm.
    pub fn dist(&self, f: &ComplexField) -> f64 {
        (self.kinetic(f) - self.kinetic_q).abs()
    }

    /// One Crank–Nicolson step of length `dt`.
    pub fn step(&self, f: &ComplexField, dt: f64) -> Result<ComplexField> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if f.values.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values on a grid of {}",
                f.values.len(),
                self.len()
            )));
        }
        let p = self.params.p();
        let n = self.len();
        let u = &f.values;
        let s0: Vec<f64> = u.iter().map(|z| z.norm_sqr()).collect();
        let ku = self.apply_kc(u);
        let h = 0.5 * dt;
        let i = Complex64::new(0.0, 1.0);
        let off: Vec<Complex64> = self.flux.iter().map(|k| i * (-h * k)).collect();
        let solve = |g: &[f64]| -> Vec<Complex64> {
            let diag: Vec<Complex64> = (0..n)
                .map(|j| Complex64::new(self.weight[j], h * (self.diag[j] - self.weight[j] * g[j])))
                .collect();
            let rhs: Vec<Complex64> = (0..n)
                .map(|j| u[j] * self.weight[j] - i * h * (ku[j] - u[j] * (self.weight[j] * g[j])))
                .collect();
            thomas(&off, &diag, &off, &rhs)
        };
        let mut g: Vec<f64> = s0.iter().zip(&self.pot_scale).map(|(s, c)| c * dfp_quotient(*s, *s, p)).collect();
        let mut next = solve(&g);
        let wnorm = |v: &[Complex64]| v.iter().zip(&self.weight).map(|(z, w)| w * z.norm_sqr()).sum::<f64>().sqrt();
        let scale = wnorm(&next);
        if scale == 0.0 {
            return Ok(ComplexField { t: f.t + dt, values: next });
        }
        let mut change = f64::INFINITY;
        for _ in 0..FIXED_POINT_MAX {
            for j in 0..n {
                g[j] = self.pot_scale[j] * dfp_quotient(s0[j], next[j].norm_sqr(), p);
            }
            let cand = solve(&g);
            let diff: Vec<Complex64> = cand.iter().zip(&next).map(|(a, b)| a - b).collect();
            change = wnorm(&diff) / scale;
            next = cand;
            if change <= FIXED_POINT_TOL {
                let out = ComplexField { t: f.t + dt, values: next };
                if !out.is_finite() {
                    return Err(Error::Integration {
                        r: f.t,
                        reason: "non-finite field".into(),
                    });
                }
                return Ok(out);
            }
        }
        Err(Error::no_conv("Crank-Nicolson fixed point", FIXED_POINT_MAX, change))
    }

    /// Phase factor of one step for the ground state, `e^{iω dt}` with
    /// `tan(ω dt / 2) = dt / 2`.
    pub fn step_phase(&self, dt: f64) -> f64 {
        2.0 * (0.5 * dt).atan()
    }

    /// The same step written for `w` in `P = e^{iωt}(Q + w)`.
    ///
    /// Algebraically identical to [`step`](Self::step) once the residual of
    /// the discrete ground-state equation, which sits at the rounding
    /// floor, is taken as zero. Then `w = 0` stays exactly zero and rounding
    /// enters relative to `w`. This matters because `Q` is linearly unstable
    /// and amplifies any seed by `e^{e0 t}`.
    pub fn step_perturbation(&self, w: &[Complex64], dt: f64) -> Result<Vec<Complex64>> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if w.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "perturbation has {} values on a grid of {}",
                w.len(),
                self.len()
            )));
        }
        let p = self.params.p();
        let n = self.len();
        let h = 0.5 * dt;
        let i = Complex64::new(0.0, 1.0);
        let eta = Complex64::from_polar(1.0, self.step_phase(dt));
        let back = eta.conj();
        let ds0: Vec<f64> = w.iter().zip(&self.q).map(|(z, q)| 2.0 * q * z.re + z.norm_sqr()).collect();
        let kw = self.apply_kc(w);
        let off: Vec<Complex64> = self.flux.iter().map(|k| i * (-h * k)).collect();
        let force = i * h * (eta + 1.0);
        let solve = |dg: &[f64]| -> Vec<Complex64> {
            let mut diag = Vec::with_capacity(n);
            let mut rhs = Vec::with_capacity(n);
            for j in 0..n {
                let wg = self.weight[j] * (self.g_q[j] + dg[j]);
                diag.push(Complex64::new(self.weight[j], h * (self.diag[j] - wg)));
                let lin = w[j] * self.weight[j] - i * h * (kw[j] - w[j] * wg);
                let src = force * (self.weight[j] * dg[j] * self.q[j]);
                rhs.push(back * (lin + src));
            }
            thomas(&off, &diag, &off, &rhs)
        };
        let dg_at = |next: Option<&[Complex64]>| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    let q2 = self.q[j] * self.q[j];
                    let ds1 = match next {
                        Some(v) => 2.0 * self.q[j] * v[j].re + v[j].norm_sqr(),
                        None => ds0[j],
                    };
                    self.pot_scale[j] * dfp_shift(q2, ds0[j], ds1, p)
                })
                .collect()
        };
        let mut next = solve(&dg_at(None));
        let wnorm = |v: &[Complex64]| v.iter().zip(&self.weight).map(|(z, w)| w * z.norm_sqr()).sum::<f64>().sqrt();
        let scale = self
            .q
            .iter()
            .zip(&next)
            .zip(&self.weight)
            .map(|((q, z), wt)| wt * (z + q).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let mut change = f64::INFINITY;
        for _ in 0..FIXED_POINT_MAX {
            let cand = solve(&dg_at(Some(&next)));
            let diff: Vec<Complex64> = cand.iter().zip(&next).map(|(a, b)| a - b).collect();
            change = wnorm(&diff) / scale;
            next = cand;
            if change <= FIXED_POINT_TOL {
                if next.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                    return Err(Error::Integration {
                        r: 0.0,
                        reason: "non-finite field".into(),
                    });
                }
                return Ok(next);
            }
        }
        Err(Error::no_conv("Crank-Nicolson fixed point", FIXED_POINT_MAX, change))
    }

    /// `||Q + w||^2 - ||Q||^2` without cancellation.
    pub fn kinetic_excess(&self, w: &[Complex64]) -> f64 {
        let kw = self.apply_kc(w);
        let cross: f64 = w.iter().zip(&self.ka_q).map(|(z, k)| z.re * k).sum();
        let quad: f64 = w.iter().zip(&kw).map(|(a, b)| (a.conj() * b).re).sum();
        self.area * (2.0 * cross + quad)
    }

    /// `<(L_a + 1) f, g>` for real `g` given through its dual `(K_a+W) g`:
    /// returns `sum conj(f) (K_a+W) Q` as a complex number.
    fn pairing_with_q(&self, f: &ComplexField) -> Complex64 {
        f.values.iter().zip(&self.la1_q).map(|(z, c)| z.conj() * *c).sum::<Complex64>() * self.area
    }

    /// Writes `f = e^{iθ}((1+α)Q + ũ)` with `ũ` orthogonal to `Q` and
    /// `iQ` in the `(L_a+1)` pairing.
    pub fn modulation_decompose(&self, f: &ComplexField) -> Result<ModulationState> {
        let dist = self.dist(f);
        if !(dist < self.delta0) {
            return Err(Error::Modulation(format!(
                "distance {dist:.3e} is outside the modulation radius {:.3e}",
                self.delta0
            )));
        }
        let z = self.pairing_with_q(f);
        if z.norm() == 0.0 {
            return Err(Error::Modulation("field is orthogonal to the ground state".into()));
        }
        // e^{iθ} z must be real and positive; one Newton polish on
        // Im(e^{iθ} z) = 0 from the argument
        let mut theta = -z.arg();
        for _ in 0..2 {
            let e = Complex64::from_polar(1.0, theta) * z;
            if e.re <= 0.0 {
                return Err(Error::Modulation("phase Newton left the positive branch".into()));
            }
            theta -= e.im / e.re;
        }
        let rot = Complex64::from_polar(1.0, -theta);
        let alpha = (Complex64::from_polar(1.0, theta) * z).re / self.qq - 1.0;
        let u_tilde: Vec<Complex64> = f
            .values
            .iter()
            .zip(&self.q)
            .map(|(v, q)| v * rot - (1.0 + alpha) * q)
            .collect();
        Ok(ModulationState {
            theta,
            alpha,
            u_tilde,
            dist,
        })
    }

    /// The two orthogonality pairings of `ũ` with `Q` and `iQ`.
    pub fn orthogonality(&self, m: &ModulationState) -> (f64, f64) {
        let z: Complex64 = m.u_tilde.iter().zip(&self.la1_q).map(|(u, c)| u.conj() * *c).sum::<Complex64>() * self.area;
        // <u, Q> = Re(conj(u) Q), <u, iQ> = Re(conj(u) i Q) = -Im(conj(u) Q)
        (z.re, -z.im)
    }

    /// `e^{iθ}((1+α)Q + ũ)`.
    pub fn recompose(&self, m: &ModulationState, t: f64) -> ComplexField {
        let rot = Complex64::from_polar(1.0, m.theta);
        ComplexField {
            t,
            values: m
                .u_tilde
                .iter()
                .zip(&self.q)
                .map(|(u, q)| rot * ((1.0 + m.alpha) * q + u))
                .collect(),
        }
    }

    /// `R(v)` pointwise on physical values; `v` is reduced.
    pub fn remainder_r(&self, v: &[Complex64]) -> Vec<Complex64> {
        let p = self.params.p();
        let i = Complex64::new(0.0, 1.0);
        v.iter()
            .zip(&self.q)
            .zip(&self.r)
            .map(|((vr, qr), r)| {
                let s = r.powf(-self.gamma);
                let q = qr * s;
                let vv = vr * s;
                let w = vv + q;
                let full = w * w.norm().powf(p);
                let qp = q.abs().powf(p);
                i * (full - q * qp - (p + 1.0) * qp * vv.re - i * qp * vv.im)
            })
            .collect()
    }

    /// `V_R`, `∂_t V_R` and `A_R` for the field.
    pub fn virial(&self, f: &ComplexField, cutoff: &Cutoff, radius: f64) -> VirialPoint {
        let d = self.params.dim();
        let p = self.params.p();
        let phi: Vec<f64> = self.r.iter().map(|r| cutoff.scaled(*r, radius)[0]).collect();
        let u = &f.values;
        let v = self.area * u.iter().zip(&self.weight).zip(&phi).map(|((z, w), ph)| w * ph * z.norm_sqr()).sum::<f64>();
        let mut vdot = 0.0;
        for (e, k) in self.flux.iter().enumerate() {
            vdot += k * (phi[e + 1] - phi[e]) * (u[e].conj() * u[e + 1]).im;
        }
        vdot *= 2.0 * self.area;
        // A_R: only |x| > R contributes
        let a = self.params.a();
        let phys = self.physical(f);
        let edges: Vec<f64> = self.r.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let n = self.r.len();
        let mut a_r = 0.0;
        for j in 0..n {
            let r = self.r[j];
            if r <= radius {
                continue;
            }
            let lo = edges[j - 1];
            let hi = if j + 1 < n { edges[j] } else { r };
            let vol = (hi.powf(d) - lo.powf(d)) / d;
            let der = cutoff.scaled(r, radius);
            let (p1, p2, p3, p4) = (der[1], der[2], der[3], der[4]);
            let lap = p2 + (d - 1.0) * p1 / r;
            let g1 = p3 + (d - 1.0) * (p2 / r - p1 / (r * r));
            let g2 = p4 + (d - 1.0) * (p3 / r - 2.0 * p2 / (r * r) + 2.0 * p1 / (r * r * r));
            let bilap = g2 + (d - 1.0) * g1 / r;
            // centered derivative of u
            let ur = if j + 1 < n {
                (phys[j + 1] - phys[j - 1]) / (self.r[j + 1] - self.r[j - 1])
            } else {
                (phys[j] - phys[j - 1]) / (self.r[j] - self.r[j - 1])
            };
            let m2 = phys[j].norm_sqr();
            let integrand = (4.0 * p2 - 8.0) * ur.norm_sqr()
                + 2.0 * p / (p + 2.0) * (-lap + 2.0 * d) * m2.powf(0.5 * (p + 2.0))
                - bilap * m2
                + 4.0 * a * (r * p1 - 2.0 * r * r) / r.powi(4) * m2;
            a_r += vol * integrand;
        }
        VirialPoint {
            v,
            vdot,
            a_r: self.area * a_r,
        }
    }
}

/// `(F(b) - F(a)) / (b - a)` for `F(s) = 2/(p+2) s^{(p+2)/2}`, with the
/// series form when `a` and `b` are close.
fn dfp_quotient(a: f64, b: f64, p: f64) -> f64 {
    let m = 0.5 * (a + b);
    if m <= 0.0 {
        return 0.0;
    }
    let d = b - a;
    let e = 0.5 * p;
    if d.abs() <= 1e-4 * m {
        m.powf(e) + e * (e - 1.0) * m.powf(e - 2.0) * d * d / 24.0
    } else {
        2.0 / (p + 2.0) * (b.powf(e + 1.0) - a.powf(e + 1.0)) / d
    }
}

/// `quotient(q2 + a, q2 + b) - quotient(q2, q2)` for small shifts.
fn dfp_shift(q2: f64, a: f64, b: f64, p: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        return 0.0;
    }
    let s0 = q2 + a;
    let s1 = q2 + b;
    let m = 0.5 * (s0 + s1);
    let d = b - a;
    let e = 0.5 * p;
    if q2 > 0.0 && m > 0.0 && d.abs() <= 1e-4 * m {
        let dm = 0.5 * (a + b);
        let lift = q2.powf(e) * (e * (dm / q2).ln_1p()).exp_m1();
        lift + e * (e - 1.0) * m.powf(e - 2.0) * d * d / 24.0
    } else {
        dfp_quotient(s0, s1, p) - dfp_quotient(q2, q2, p)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulationState {
    pub theta: f64,
    pub alpha: f64,
    pub u_tilde: Vec<Complex64>,
    pub dist: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirialPoint {
    pub v: f64,
    pub vdot: f64,
    pub a_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffKind {
    /// `r^2` up to 1, a septic-in-curvature blend on `[1, 2]` and a
    /// constant beyond.
    Plateau,
    /// `(1 - S) r^2` with the quintic smoothstep `S` on `[1, 2]`, zero
    /// beyond. Its curvature exceeds 2 near `r = 2`.
    Smoothstep,
}

/// Radial cutoff `φ` for the localized virial.
#[derive(Debug, Clone, Copy)]
pub struct Cutoff {
    kind: CutoffKind,
}

// φ on s = r - 1 ∈ [0, 1] for the plateau profile, from
// φ'' = 2 - 2 S(s) - 420 s^3 (1-s)^3
const PLATEAU: [f64; 9] = [1.0, 2.0, 1.0, 0.0, 0.0, -22.0, 43.0, -212.0 / 7.0, 7.5];

fn poly_derivs(c: &[f64], x: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    let mut coef = c.to_vec();
    for slot in out.iter_mut() {
        *slot = coef.iter().rev().fold(0.0, |acc, a| acc * x + a);
        coef = coef.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect();
        if coef.is_empty() {
            break;
        }
    }
    out
}

impl Cutoff {
    /// Rejects profiles whose curvature exceeds 2 anywhere.
    pub fn new(kind: CutoffKind) -> Result<Self> {
        let c = Cutoff { kind };
        let worst = (0..=4000)
            .map(|k| c.derivs(k as f64 * 2.5 / 4000.0)[2])
            .fold(f64::NEG_INFINITY, f64::max);
        if worst > 2.0 + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "cutoff {kind:?} has curvature {worst:.4} > 2"
            )));
        }
        Ok(c)
    }

    pub fn kind(&self) -> CutoffKind {
        self.kind
    }

    /// `[φ, φ', φ'', φ''', φ'''']` at `r`.
    pub fn derivs(&self, r: f64) -> [f64; 5] {
        if r <= 1.0 {
            return [r * r, 2.0 * r, 2.0, 0.0, 0.0];
        }
        match self.kind {
            CutoffKind::Plateau => {
                if r >= 2.0 {
                    [poly_derivs(&PLATEAU, 1.0)[0], 0.0, 0.0, 0.0, 0.0]
                } else {
                    poly_derivs(&PLATEAU, r - 1.0)
                }
            }
            CutoffKind::Smoothstep => {
                if r >= 2.0 {
                    return [0.0; 5];
                }
                let s = poly_derivs(&[0.0, 0.0, 0.0, 10.0, -15.0, 6.0], r - 1.0);
                let g = [r * r, 2.0 * r, 2.0, 0.0, 0.0];
                // (1 - S) g by Leibniz
                let one_minus = [1.0 - s[0], -s[1], -s[2], -s[3], -s[4]];
                let binom = [[1.0, 0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0, 0.0], [1.0, 3.0, 3.0, 1.0, 0.0], [1.0, 4.0, 6.0, 4.0, 1.0]];
                let mut out = [0.0; 5];
                for (k, o) in out.iter_mut().enumerate() {
                    for j in 0..=k {
                        *o += binom[k][j] * one_minus[j] * g[k - j];
                    }
                }
                out
            }
        }
    }

    /// Derivatives of `φ_R(r) = R^2 φ(r/R)`.
    pub fn scaled(&self, r: f64, radius: f64) -> [f64; 5] {
        let d = self.derivs(r / radius);
        [
            radius * radius * d[0],
            radius * d[1],
            d[2],
            d[3] / radius,
            d[4] / (radius * radius),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    StableMinus,
    StablePlus,
    UnstablePlus,
    UnstableMinus,
}

impl Direction {
    pub fn is_stable(&self) -> bool {
        matches!(self, Direction::StableMinus | Direction::StablePlus)
    }

    /// Whether the initial homogeneous norm should exceed that of `Q`.
    pub fn above(&self) -> bool {
        matches!(self, Direction::StablePlus | Direction::UnstablePlus)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::StableMinus => "stable_minus",
            Direction::StablePlus => "stable_plus",
            Direction::UnstablePlus => "unstable_plus",
            Direction::UnstableMinus => "unstable_minus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub dt: f64,
    pub t_end: f64,
    pub delta: f64,
    /// `None` evolves the ground state itself.
    pub direction: Option<Direction>,
    pub record_every: usize,
    /// Virial cutoff radius.
    pub radius: f64,
    /// Evolve backward in time through `u(t) -> conj(u(-t))`.
    pub reverse: bool,
    /// Project the initial data onto the mass-energy surface of `Q`.
    pub project: bool,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            dt: 1e-3,
            t_end: 1.0,
            delta: 1e-3,
            direction: None,
            record_every: 10,
            radius: 20.0,
            reverse: false,
            project: true,
        }
    }
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("T must be non-negative, got {}", self.t_end)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be non-negative, got {}", self.delta)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        if !(self.radius > 0.0) {
            return Err(Error::InvalidArgument(format!("R must be positive, got {}", self.radius)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    /// Modulation phase relative to the rotation `e^{it}`, in `(-π, π]`.
    pub theta: Option<f64>,
    pub alpha: Option<f64>,
    pub dist: f64,
    pub kinetic: f64,
    pub mass: f64,
    pub energy: f64,
    pub v_r: f64,
    pub vdot: f64,
    pub a_r: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutput {
    pub spec: RunSpec,
    /// Sign `s` of the perturbation `δ s V`.
    pub sign: f64,
    /// Projection coefficients onto the mass-energy surface.
    pub projection: (f64, f64),
    pub records: Vec<Record>,
    /// Set when the modulation was refused at some recorded time.
    pub left_modulation: bool,
    /// Set when a step failed; the records stop there.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VirialSeries {
    pub radius: f64,
    pub times: Vec<f64>,
    pub v: Vec<f64>,
    pub vdot: Vec<f64>,
    pub a_r: Vec<f64>,
}

impl RunOutput {
    pub fn virial_series(&self) -> VirialSeries {
        VirialSeries {
            radius: self.spec.radius,
            times: self.records.iter().map(|r| r.t).collect(),
            v: self.records.iter().map(|r| r.v_r).collect(),
            vdot: self.records.iter().map(|r| r.vdot).collect(),
            a_r: self.records.iter().map(|r| r.a_r).collect(),
        }
    }

    /// Fit window on `d(u)`: `[δ, δ0/10]`.
    pub fn fit_window(&self, delta0: f64) -> (f64, f64) {
        (self.spec.delta, 0.1 * delta0)
    }

    /// Exponential rate of `d(u)` over the first stretch of records inside
    /// the fit window: positive for decay, negative for growth.
    pub fn dist_rate(&self, delta0: f64) -> Result<RateFit> {
        let (lo, hi) = self.fit_window(delta0);
        let mut t = Vec::new();
        let mut y = Vec::new();
        for r in &self.records {
            if r.dist >= lo && r.dist <= hi {
                t.push(r.t);
                y.push(r.dist);
            } else if !t.is_empty() {
                break;
            }
        }
        if t.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "only {} samples inside the fit window [{lo:.3e}, {hi:.3e}]",
                t.len()
            )));
        }
        let window = (t[0].min(t[t.len() - 1]), t[0].max(t[t.len() - 1]));
        fit_exponential_rate(&t, &y, window)
    }

    /// Largest relative deviation of mass and energy from their initial
    /// values.
    pub fn drifts(&self) -> (f64, f64) {
        let first = match self.records.first() {
            Some(r) => *r,
            None => return (0.0, 0.0),
        };
        self.records.iter().fold((0.0, 0.0), |(m, e), r| {
            (
                f64::max(m, ((r.mass - first.mass) / first.mass).abs()),
                f64::max(e, ((r.energy - first.energy) / first.energy).abs()),
            )
        })
    }

    /// Largest observed `(|α'| + |θ'|) / d` from consecutive records inside
    /// the modulation radius.
    pub fn modulation_speed_ratio(&self) -> Option<f64> {
        self.records
            .windows(2)
            .filter_map(|w| {
                let (a0, a1) = (w[0].alpha?, w[1].alpha?);
                let (t0, t1) = (w[0].theta?, w[1].theta?);
                let dt = (w[1].t - w[0].t).abs();
                let mut dth = t1 - t0;
                if dth > std::f64::consts::PI {
                    dth -= std::f64::consts::TAU;
                } else if dth < -std::f64::consts::PI {
                    dth += std::f64::consts::TAU;
                }
                let d = 0.5 * (w[0].dist + w[1].dist);
                (d > 0.0 && dt > 0.0).then(|| ((a1 - a0).abs() + dth.abs()) / (dt * d))
            })
            .reduce(f64::max)
    }
}

/// Initial data `Q + δ s V` with the sign chosen from the direction and,
/// optionally, a correction `αQ + κQ1` that restores the mass and energy
/// of `Q`.
pub fn initial_data(ctx: &DynamicsContext, dich: Option<&Dichotomy>, spec: &RunSpec) -> Result<(ComplexField, f64, (f64, f64))> {
    let (w0, sign, coef) = initial_perturbation(ctx, dich, spec)?;
    let values = w0.iter().zip(&ctx.q).map(|(z, q)| z + q).collect();
    Ok((ComplexField { t: 0.0, values }, sign, coef))
}

/// The perturbation `u0 - Q` of [`initial_data`].
pub fn initial_perturbation(
    ctx: &DynamicsContext,
    dich: Option<&Dichotomy>,
    spec: &RunSpec,
) -> Result<(Vec<Complex64>, f64, (f64, f64))> {
    let dir = match spec.direction {
        None => return Ok((vec![Complex64::new(0.0, 0.0); ctx.len()], 0.0, (0.0, 0.0))),
        Some(d) => d,
    };
    let dich = dich.ok_or_else(|| Error::InvalidArgument("a perturbed run needs the dichotomy eigenpair".into()))?;
    let (v1, v2) = if dir.is_stable() { &dich.vminus } else { &dich.vplus };
    if v1.len() != ctx.len() || v2.len() != ctx.len() {
        return Err(Error::InvalidArgument("dichotomy vectors do not match the grid".into()));
    }
    let build = |s: f64, a: f64, k: f64| -> Vec<Complex64> {
        (0..ctx.len())
            .map(|j| Complex64::new(spec.delta * s * v1[j] + a * ctx.q[j] + k * ctx.q1[j], spec.delta * s * v2[j]))
            .collect()
    };
    // pick the sign whose homogeneous norm lands on the requested side
    let above = ctx.kinetic_excess(&build(1.0, 0.0, 0.0)) > 0.0;
    let sign = if above == dir.above() { 1.0 } else { -1.0 };
    let mut coef = (0.0, 0.0);
    if spec.project && spec.delta > 0.0 {
        let full = initial_field(ctx, &build(sign, 0.0, 0.0));
        coef = project_to_surface(ctx, &full)?.1;
    }
    Ok((build(sign, coef.0, coef.1), sign, coef))
}

fn initial_field(ctx: &DynamicsContext, w: &[Complex64]) -> ComplexField {
    ComplexField {
        t: 0.0,
        values: w.iter().zip(&ctx.q).map(|(z, q)| z + q).collect(),
    }
}

/// Newton on `(α, κ)` so that `u + αQ + κQ1` has the mass and energy of `Q`.
pub fn project_to_surface(ctx: &DynamicsContext, u: &ComplexField) -> Result<(ComplexField, (f64, f64))> {
    let shifted = |a: f64, k: f64| -> ComplexField {
        ComplexField {
            t: u.t,
            values: u
                .values
                .iter()
                .zip(ctx.q.iter().zip(&ctx.q1))
                .map(|(z, (q, q1))| z + Complex64::new(a * q + k * q1, 0.0))
                .collect(),
        }
    };
    let resid = |f: &ComplexField| -> [f64; 2] {
        let (m, e) = ctx.conserved(f);
        [(m - ctx.mass_q) / ctx.mass_q, (e - ctx.energy_q) / ctx.energy_q.abs()]
    };
    let (mut a, mut k) = (0.0, 0.0);
    for it in 0..30 {
        let f = shifted(a, k);
        let r = resid(&f);
        if r[0].abs().max(r[1].abs()) < 1e-14 {
            return Ok((f, (a, k)));
        }
        let h = 1e-6;
        let ra = resid(&shifted(a + h, k));
        let rk = resid(&shifted(a, k + h));
        let j = [[(ra[0] - r[0]) / h, (rk[0] - r[0]) / h], [(ra[1] - r[1]) / h, (rk[1] - r[1]) / h]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::no_conv("mass-energy projection", it, f64::NAN));
        }
        a -= (r[0] * j[1][1] - r[1] * j[0][1]) / det;
        k -= (j[0][0] * r[1] - j[1][0] * r[0]) / det;
    }
    let f = shifted(a, k);
    let r = resid(&f);
    if r[0].abs().max(r[1].abs()) < 1e-12 {
        return Ok((f, (a, k)));
    }
    Err(Error::no_conv("mass-energy projection", 30, r[0].abs().max(r[1].abs())))
}

fn record(ctx: &DynamicsContext, f: &ComplexField, t: f64, cutoff: &Cutoff, radius: f64, left: &mut bool) -> Record {
    let (mass, energy) = ctx.conserved(f);
    let kinetic = ctx.kinetic(f);
    let vp = ctx.virial(f, cutoff, radius);
    let (theta, alpha) = match ctx.modulation_decompose(f) {
        Ok(m) => {
            let mut th = (m.theta - f.t) % std::f64::consts::TAU;
            if th > std::f64::consts::PI {
                th -= std::f64::consts::TAU;
            } else if th <= -std::f64::consts::PI {
                th += std::f64::consts::TAU;
            }
            (Some(th), Some(m.alpha))
        }
        Err(_) => {
            *left = true;
            (None, None)
        }
    };
    Record {
        t,
        theta,
        alpha,
        dist: (kinetic - ctx.kinetic_q).abs(),
        kinetic,
        mass,
        energy,
        v_r: vp.v,
        vdot: vp.vdot,
        a_r: vp.a_r,
    }
}

/// Evolves from explicit initial data.
pub fn evolve(ctx: &DynamicsContext, u0: &ComplexField, spec: &RunSpec) -> Result<(Vec<Record>, bool, Option<String>)> {
    if u0.values.len() != ctx.len() {
        return Err(Error::InvalidArgument(format!(
            "field has {} values on a grid of {}",
            u0.values.len(),
            ctx.len()
        )));
    }
    let w0: Vec<Complex64> = u0.values.iter().zip(&ctx.q).map(|(z, q)| z - q).collect();
    evolve_perturbation(ctx, &w0, spec)
}

/// Evolves `Q + w0`, stepping the perturbation.
pub fn evolve_perturbation(ctx: &DynamicsContext, w0: &[Complex64], spec: &RunSpec) -> Result<(Vec<Record>, bool, Option<String>)> {
    spec.validate()?;
    let cutoff = Cutoff::new(CutoffKind::Plateau)?;
    let mut w: Vec<Complex64> = if spec.reverse {
        w0.iter().map(|z| z.conj()).collect()
    } else {
        w0.to_vec()
    };
    let sgn = if spec.reverse { -1.0 } else { 1.0 };
    let steps = (spec.t_end / spec.dt).round() as usize;
    let phase = ctx.step_phase(spec.dt);
    let mut left = false;
    let mut records = Vec::with_capacity(steps / spec.record_every + 2);
    let snapshot = |w: &[Complex64], k: usize, left: &mut bool| {
        let t = k as f64 * spec.dt;
        let rot = Complex64::from_polar(1.0, sgn * k as f64 * phase);
        let values = w
            .iter()
            .zip(&ctx.q)
            .map(|(z, q)| {
                let v = if spec.reverse { z.conj() } else { *z };
                rot * (v + q)
            })
            .collect();
        let f = ComplexField { t: sgn * t, values };
        let mut rec = record(ctx, &f, sgn * t, &cutoff, spec.radius, left);
        let excess = ctx.kinetic_excess(w);
        rec.dist = excess.abs();
        rec.kinetic = ctx.kinetic_q + excess;
        rec
    };
    records.push(snapshot(&w, 0, &mut left));
    let mut aborted = None;
    for k in 1..=steps {
        match ctx.step_perturbation(&w, spec.dt) {
            Ok(next) => w = next,
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        }
        if k % spec.record_every == 0 || k == steps {
            records.push(snapshot(&w, k, &mut left));
        }
    }
    Ok((records, left, aborted))
}

/// Perturbation experiment along a dichotomy direction, or the plain
/// ground state when the spec has no direction.
pub fn run_perturbed(ctx: &DynamicsContext, dich: Option<&Dichotomy>, spec: &RunSpec) -> Result<RunOutput> {
    spec.validate()?;
    let (w0, sign, projection) = initial_perturbation(ctx, dich, spec)?;
    let (records, left_modulation, aborted) = evolve_perturbation(ctx, &w0, spec)?;
    Ok(RunOutput {
        spec: *spec,
        sign,
        projection,
        records,
        left_modulation,
        aborted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `log y = log A - rate t`.
    pub rate: f64,
    pub amplitude: f64,
    /// RMS residual of `log y`.
    pub residual: f64,
    pub samples: usize,
}

/// Least squares of `log y` against `t` over `window`.
pub fn fit_exponential_rate(t: &[f64], y: &[f64], window: (f64, f64)) -> Result<RateFit> {
    if t.len() != y.len() {
        return Err(Error::InvalidArgument("t and y differ in length".into()));
    }
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(t, y)| (*t, *y))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two samples in [{}, {}]",
            window.0, window.1
        )));
    }
    if let Some((t, y)) = pts.iter().find(|(_, y)| !(*y > 0.0)) {
        return Err(Error::InvalidArgument(format!("non-positive sample {y} at t = {t}")));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let stt = pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    if stt == 0.0 {
        return Err(Error::InvalidArgument("window holds a single time".into()));
    }
    let slope = pts.iter().map(|p| (p.0 - mt) * (p.1.ln() - ml)).sum::<f64>() / stt;
    let icpt = ml - slope * mt;
    let residual = (pts.iter().map(|p| (p.1.ln() - icpt - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(RateFit {
        rate: -slope,
        amplitude: icpt.exp(),
        residual,
        samples: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::groundstate::AssemblyOptions;
    use crate::shooting::bisect_ground_state;

    fn context() -> DynamicsContext {
        let params = Params::new(3, 2.0, -0.1).unwrap();
        let root = bisect_ground_state((0.1, 10.0), &params, 1e-10).unwrap();
        let opts = AssemblyOptions {
            grid: GridSpec::with_nodes(1e-6, 20.0, 1001).unwrap(),
            ..Default::default()
        };
        let profile = GroundStateProfile::assemble(&root, &params, &opts).unwrap();
        DynamicsContext::new(&profile).unwrap()
    }

    fn bump(ctx: &DynamicsContext, amp: f64) -> Vec<Complex64> {
        ctx.r
            .iter()
            .map(|r| Complex64::new(amp * (-r * r).exp(), 0.5 * amp * r * (-r * r).exp()))
            .collect()
    }

    #[test]
    fn quotient_limits() {
        for p in [1.0, 2.0, 4.0 / 3.0] {
            let s: f64 = 0.7;
            assert!((dfp_quotient(s, s, p) - s.powf(0.5 * p)).abs() < 1e-15);
            let (a, b): (f64, f64) = (0.7, 0.9);
            let direct = 2.0 / (p + 2.0) * (b.powf(0.5 * p + 1.0) - a.powf(0.5 * p + 1.0)) / (b - a);
            assert!((dfp_quotient(a, b, p) - direct).abs() < 1e-14);
            // both branches agree at the switch
            let b = s * (1.0 + 0.99e-4);
            let c = s * (1.0 + 1.01e-4);
            let slope = 0.5 * p * s.powf(0.5 * p - 1.0);
            let jump = (dfp_quotient(s, b, p) - dfp_quotient(s, c, p)).abs();
            assert!(jump < slope * (c - b) + 1e-13, "{jump}");
            for (x, y) in [(1e-9, 3e-9), (0.2, -0.1), (0.0, 0.0)] {
                let d = dfp_shift(0.5, x, y, p);
                let e = dfp_quotient(0.5 + x, 0.5 + y, p) - dfp_quotient(0.5, 0.5, p);
                assert!((d - e).abs() < 1e-14, "{d} {e}");
            }
        }
        assert_eq!(dfp_quotient(0.0, 0.0, 2.0), 0.0);
    }

    #[test]
    fn cutoff_curvature_and_smoothness() {
        let c = Cutoff::new(CutoffKind::Plateau).unwrap();
        assert!(Cutoff::new(CutoffKind::Smoothstep).is_err());
        for k in 0..=3000 {
            let r = k as f64 * 1e-3;
            assert!(c.derivs(r)[2] <= 2.0 + 1e-12);
        }
        for knot in [1.0, 2.0] {
            let lo = c.derivs(knot - 1e-9);
            let hi = c.derivs(knot + 1e-9);
            for j in 0..4 {
                assert!((lo[j] - hi[j]).abs() < 1e-6, "derivative {j} jumps at {knot}");
            }
        }
        let s = c.scaled(5.0, 20.0);
        assert_eq!(s[0], 25.0);
        assert_eq!(s[1], 10.0);
    }

    #[test]
    fn ground_state_is_stationary() {
        let ctx = context();
        let w = vec![Complex64::new(0.0, 0.0); ctx.len()];
        let next = ctx.step_perturbation(&w, 1e-2).unwrap();
        assert!(next.iter().all(|z| z.norm() == 0.0));
        let f = ctx.step(&ctx.ground_state(), 1e-2).unwrap();
        let rot = Complex64::from_polar(1.0, ctx.step_phase(1e-2));
        let err = f
            .values
            .iter()
            .zip(&ctx.q)
            .map(|(z, q)| (z - rot * q).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn steps_conserve_mass_and_energy() {
        let ctx = context();
        let w = bump(&ctx, 0.05);
        let u = ComplexField {
            t: 0.0,
            values: w.iter().zip(&ctx.q).map(|(z, q)| z + q).collect(),
        };
        let (m0, e0) = ctx.conserved(&u);
        let mut f = u.clone();
        let mut v = w.clone();
        for _ in 0..20 {
            f = ctx.step(&f, 5e-3).unwrap();
            v = ctx.step_perturbation(&v, 5e-3).unwrap();
        }
        let (m1, e1) = ctx.conserved(&f);
        assert!(((m1 - m0) / m0).abs() < 1e-12);
        assert!(((e1 - e0) / e0).abs() < 1e-10);
        // the two forms differ only by the ground-state residual
        let rot = Complex64::from_polar(1.0, 20.0 * ctx.step_phase(5e-3));
        let g = ComplexField {
            t: f.t,
            values: v.iter().zip(&ctx.q).map(|(z, q)| rot * (z + q)).collect(),
        };
        let (m2, _) = ctx.conserved(&g);
        assert!(((m2 - m0) / m0).abs() < 1e-10);
        let gap = f.values.iter().zip(&g.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(gap < 1e-5, "{gap}");
        assert!(ctx.step(&f, -1.0).is_err());
        assert!(ctx.step_perturbation(&v[1..], 1e-3).is_err());
    }

    #[test]
    fn kinetic_excess_matches_difference() {
        let ctx = context();
        let w = bump(&ctx, 1e-2);
        let u = ComplexField {
            t: 0.0,
            values: w.iter().zip(&ctx.q).map(|(z, q)| z + q).collect(),
        };
        let direct = ctx.kinetic(&u) - ctx.kinetic_q;
        assert!((ctx.kinetic_excess(&w) - direct).abs() < 1e-10 * ctx.kinetic_q);
    }

    #[test]
    fn modulation_recovers_phase_and_scale() {
        let ctx = context();
        let (theta, alpha) = (0.7, 2e-3);
        let f = ComplexField {
            t: 0.0,
            values: ctx.q.iter().map(|q| Complex64::from_polar((1.0 + alpha) * q, theta)).collect(),
        };
        let m = ctx.modulation_decompose(&f).unwrap();
        assert!((m.theta - theta).abs() < 1e-12);
        assert!((m.alpha - alpha).abs() < 1e-12);
        assert!(m.u_tilde.iter().all(|z| z.norm() < 1e-10));

        let mut g = f.clone();
        for (z, b) in g.values.iter_mut().zip(bump(&ctx, 1e-3)) {
            *z += b;
        }
        let m = ctx.modulation_decompose(&g).unwrap();
        let (a, b) = ctx.orthogonality(&m);
        assert!(a.abs() < 1e-10 && b.abs() < 1e-10, "{a} {b}");
        let back = ctx.recompose(&m, 0.0);
        for (x, y) in back.values.iter().zip(&g.values) {
            assert!((x - y).norm() < 1e-12);
        }

        let far = ctx.real_field(&ctx.q.iter().map(|q| 1.3 * q).collect::<Vec<_>>());
        assert!(matches!(ctx.modulation_decompose(&far), Err(Error::Modulation(_))));
    }

    #[test]
    fn remainder_is_quadratic() {
        let ctx = context();
        let zero = vec![Complex64::new(0.0, 0.0); ctx.len()];
        assert!(ctx.remainder_r(&zero).iter().all(|z| z.norm() < 1e-15));
        let j = ctx.len() / 10;
        let base = bump(&ctx, 1.0);
        let at = |eps: f64| {
            let v: Vec<Complex64> = base.iter().map(|z| z * eps).collect();
            ctx.remainder_r(&v)[j].norm()
        };
        let ratio = at(1e-3) / at(5e-4);
        assert!((ratio - 4.0).abs() < 1e-2, "{ratio}");
        // v = εQ is real: R = i Q^3 ((1+ε)^3 - 1 - 3ε)
        let eps = 0.1;
        let v: Vec<Complex64> = ctx.q.iter().map(|q| Complex64::new(eps * q, 0.0)).collect();
        let q = ctx.q[j] * ctx.r[j].powf(-ctx.gamma);
        let expect = q.powi(3) * ((1.0f64 + eps).powi(3) - 1.0 - 3.0 * eps);
        let got = ctx.remainder_r(&v)[j];
        assert!(got.re.abs() < 1e-15 && (got.im - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn virial_of_ground_state() {
        let ctx = context();
        let c = Cutoff::new(CutoffKind::Plateau).unwrap();
        let v = ctx.virial(&ctx.ground_state(), &c, 5.0);
        assert_eq!(v.vdot, 0.0);
        assert!(v.v > 0.0);
        assert!(v.a_r.abs() < 1e-4, "{}", v.a_r);
        let far = ctx.virial(&ctx.ground_state(), &c, 15.0);
        assert!(far.a_r.abs() < 1e-10);
    }

    #[test]
    fn rate_fit_recovers_exponent() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.02).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * (-6.4 * t).exp()).collect();
        let fit = fit_exponential_rate(&t, &y, (0.1, 0.8)).unwrap();
        assert!((fit.rate - 6.4).abs() < 1e-12);
        assert!((fit.amplitude - 3.0).abs() < 1e-10);
        assert!(fit.residual < 1e-12);
        assert!(fit_exponential_rate(&t, &y, (2.0, 3.0)).is_err());
        let mut bad = y.clone();
        bad[10] = 0.0;
        assert!(fit_exponential_rate(&t, &bad, (0.0, 1.0)).is_err());
        assert!(fit_exponential_rate(&t[1..], &y, (0.0, 1.0)).is_err());
    }

    #[test]
    fn run_spec_validation() {
        assert!(RunSpec::default().validate().is_ok());
        for bad in [
            RunSpec { dt: 0.0, ..Default::default() },
            RunSpec { t_end: f64::NAN, ..Default::default() },
            RunSpec { delta: -1.0, ..Default::default() },
            RunSpec { record_every: 0, ..Default::default() },
            RunSpec { radius: 0.0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidArgument(_))));
        }
    }
}
