//! Problem parameters, the radial ODE and the Pohozaev-type monitors.
//!
//! The stationary equation is
//! `q_rr = -((d-1)/r) q_r + (a/r^2) q + q - |q|^p q`
//! with `d >= 3` and `-((d-2)/2)^2 < a < 0`.
//!
//! Near the origin every regular solution behaves like `b r^{-gamma}` with
//! `gamma = (d-2-beta)/2`. Several routines therefore work with the reduced
//! variable `P = r^gamma q`, which solves a Laplace-type equation in the
//! effective dimension `d' = 2 + beta` with no inverse-square term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct Params {
    d: u32,
    p: f64,
    a: f64,
    beta: f64,
    sigma: f64,
    dynamics_admissible: bool,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    d: u32,
    p: f64,
    a: f64,
}

impl TryFrom<RawParams> for Params {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        Params::new(r.d, r.p, r.a)
    }
}

impl From<Params> for RawParams {
    fn from(p: Params) -> Self {
        RawParams {
            d: p.d,
            p: p.p,
            a: p.a,
        }
    }
}

impl Params {
    /// Validates the shooting range and caches the derived constants.
    pub fn new(d: u32, p: f64, a: f64) -> Result<Self> {
        if d < 3 {
            return Err(Error::InvalidParams(format!("d = {d} must be at least 3")));
        }
        if !(p.is_finite() && a.is_finite()) {
            return Err(Error::InvalidParams("p and a must be finite".into()));
        }
        let df = d as f64;
        let hardy = ((df - 2.0) / 2.0).powi(2);
        if !(a > -hardy && a < 0.0) {
            return Err(Error::InvalidParams(format!(
                "a = {a} must lie in ({}, 0)",
                -hardy
            )));
        }
        let p_crit = 4.0 / (df - 2.0);
        if !(p > 0.0 && p < p_crit) {
            return Err(Error::InvalidParams(format!(
                "p = {p} must lie in (0, {p_crit})"
            )));
        }
        let beta = ((df - 2.0).powi(2) + 4.0 * a).sqrt();
        let sigma = 1.0 - (df - 2.0) * p / 4.0;
        let a_floor = hardy * (-1.0 + p * p / ((p + 1.0) * (p + 1.0)));
        let dynamics_admissible = a > a_floor && p >= 1.0 && p > 4.0 / df;
        Ok(Params {
            d,
            p,
            a,
            beta,
            sigma,
            dynamics_admissible,
        })
    }

    pub fn d(&self) -> u32 {
        self.d
    }
    pub fn dim(&self) -> f64 {
        self.d as f64
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn dynamics_admissible(&self) -> bool {
        self.dynamics_admissible
    }

    /// Origin exponent `gamma = (d-2-beta)/2`, so that `q ~ b r^{-gamma}`.
    pub fn gamma(&self) -> f64 {
        (self.dim() - 2.0 - self.beta) / 2.0
    }

    /// Effective dimension of the reduced equation.
    pub fn d_eff(&self) -> f64 {
        2.0 + self.beta
    }

    /// Bessel order of the linear tail.
    pub fn nu(&self) -> f64 {
        self.beta / 2.0
    }

    /// Surface area of the unit sphere in R^d.
    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.d)
    }

    /// Value of q at which the bracket of H1' changes sign.
    pub fn h1_threshold(&self) -> f64 {
        let p = self.p;
        (2.0 * (p + 2.0) / (4.0 - p * (self.dim() - 2.0))).powf(1.0 / p)
    }

    /// Rejects parameters outside the dynamics range.
    pub fn require_dynamics(&self) -> Result<()> {
        if self.dynamics_admissible {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "(d, p, a) = ({}, {}, {}) is outside the dynamics range",
                self.d, self.p, self.a
            )))
        }
    }
}

pub fn sphere_area(d: u32) -> f64 {
    use std::f64::consts::PI;
    // Gamma(d/2) for integer d
    let half_gamma = if d % 2 == 0 {
        (1..d / 2).map(|k| k as f64).product::<f64>()
    } else {
        let mut g = PI.sqrt();
        let mut x = 0.5;
        while x < d as f64 / 2.0 - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    };
    2.0 * PI.powf(d as f64 / 2.0) / half_gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeState {
    pub r: f64,
    pub q: f64,
    pub qr: f64,
}

impl OdeState {
    pub fn new(r: f64, q: f64, qr: f64) -> Self {
        OdeState { r, q, qr }
    }

    pub fn is_finite(&self) -> bool {
        self.r.is_finite() && self.q.is_finite() && self.qr.is_finite()
    }
}

/// `|q|^p q`, written so that it is exactly odd in q.
#[inline]
pub fn pow_odd(q: f64, p: f64) -> f64 {
    q.abs().powf(p) * q
}

/// Right-hand side `(q_r, q_rr)` of the first-order system.
pub fn rhs(s: &OdeState, params: &Params) -> (f64, f64) {
    let r = s.r;
    let dqr = -((params.dim() - 1.0) / r) * s.qr + (params.a / (r * r)) * s.q + s.q
        - pow_odd(s.q, params.p);
    (s.qr, dqr)
}

/// `H = q_r^2/2 - a q^2/(2 r^2) - q^2/2 + |q|^{p+2}/(p+2)`.
pub fn energy_h(s: &OdeState, params: &Params) -> f64 {
    let p = params.p;
    0.5 * s.qr * s.qr - params.a / (2.0 * s.r * s.r) * s.q * s.q - 0.5 * s.q * s.q
        + s.q.abs().powf(p + 2.0) / (p + 2.0)
}

/// Returns `(H1, H2)`.
pub fn pohozaev(s: &OdeState, params: &Params) -> (f64, f64) {
    let d = params.dim();
    let p = params.p;
    let rd = s.r.powf(d);
    let h1 = 2.0 * rd * energy_h(s, params) + (d - 2.0) * s.r.powf(d - 1.0) * s.q * s.qr;
    let h2 = h1 + p / (p + 2.0) * rd * s.q.abs().powf(p + 2.0);
    (h1, h2)
}

/// Closed form of `H1'(r)`.
pub fn h1_derivative(s: &OdeState, params: &Params) -> f64 {
    let d = params.dim();
    let p = params.p;
    let c = (4.0 - p * (d - 2.0)) / (p + 2.0);
    s.r.powf(d - 1.0) * (c * s.q.abs().powf(p + 2.0) - 2.0 * s.q * s.q)
}

/// Closed form of `(q1/q)'` with `q1 = (2/p) q + r q_r`.
pub fn q1_ratio_derivative(s: &OdeState, params: &Params) -> f64 {
    let (_, h2) = pohozaev(s, params);
    -h2 / (s.r.powf(params.dim() - 1.0) * s.q * s.q)
}

/// `H1` in reduced variables `P = r^gamma q`, `W = r P_r`.
///
/// Equal to [`pohozaev`] but free of the cancellation between the
/// `r^{-2 gamma - 2}` terms near the origin.
pub fn h1_reduced(r: f64, pv: f64, w: f64, params: &Params) -> f64 {
    let beta = params.beta;
    let p = params.p;
    let g = params.gamma();
    let rb = r.powf(beta);
    rb * (w * w + beta * pv * w)
        + rb * r * r * (-pv * pv + 2.0 * r.powf(-g * p) * pv.abs().powf(p + 2.0) / (p + 2.0))
}

/// Physical state from reduced variables.
pub fn from_reduced(r: f64, pv: f64, w: f64, params: &Params) -> OdeState {
    let g = params.gamma();
    let rg = r.powf(-g);
    OdeState {
        r,
        q: rg * pv,
        qr: rg / r * (w - g * pv),
    }
}

/// Reduced variables `(P, W)` from a physical state.
pub fn to_reduced(s: &OdeState, params: &Params) -> (f64, f64) {
    let g = params.gamma();
    let rg = s.r.powf(g);
    (rg * s.q, rg * (s.r * s.qr + g * s.q))
}
