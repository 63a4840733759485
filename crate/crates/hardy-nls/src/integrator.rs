//! Dormand-Prince 5(4) with the standard fourth-order dense output.
//!
//! The driver hands every accepted step to a callback, which can sample the
//! continuous extension, look for events and stop the integration.

use std::ops::ControlFlow;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Step-size control settings.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Largest allowed |h|.
    pub h_max: f64,
    /// Initial |h|; zero picks one from the span.
    pub h_init: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-10,
            atol: 1e-20,
            h_max: f64::INFINITY,
            h_init: 0.0,
            max_steps: 2_000_000,
        }
    }
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
pub struct Step<const N: usize> {
    pub x0: f64,
    pub x1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    cont: [[f64; N]; 5],
}

impl<const N: usize> Step<N> {
    /// Dense output at `x` (meaningful for x between x0 and x1).
    pub fn eval(&self, x: f64) -> [f64; N] {
        let h = self.x1 - self.x0;
        let th = (x - self.x0) / h;
        let th1 = 1.0 - th;
        let c = &self.cont;
        let mut y = [0.0; N];
        for i in 0..N {
            y[i] = c[0][i] + th * (c[1][i] + th1 * (c[2][i] + th * (c[3][i] + th1 * c[4][i])));
        }
        y
    }
}

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Finish {
    Reached,
    Stopped,
}

#[derive(Debug, Clone)]
pub struct Outcome<const N: usize> {
    pub finish: Finish,
    pub x: f64,
    pub y: [f64; N],
    pub steps: usize,
    pub rejected: usize,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] += h * s;
    }
    out
}

/// Integrates `y' = f(x, y)` from `x0` to `x_end` (either direction).
///
/// `on_step` sees every accepted step; returning `Break` stops the run.
/// Step-size underflow or non-finite values end with an error carrying the
/// last accepted abscissa.
pub fn integrate<const N: usize, F, C>(
    f: F,
    x0: f64,
    y0: [f64; N],
    x_end: f64,
    tol: &Tolerances,
    mut on_step: C,
) -> Result<Outcome<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    C: FnMut(&Step<N>) -> ControlFlow<()>,
{
    let span = x_end - x0;
    let dir = if span >= 0.0 { 1.0 } else { -1.0 };
    let mut x = x0;
    let mut y = y0;
    if span == 0.0 {
        return Ok(Outcome {
            finish: Finish::Reached,
            x,
            y,
            steps: 0,
            rejected: 0,
        });
    }
    let mut h = if tol.h_init > 0.0 {
        tol.h_init
    } else {
        (1e-3 * span.abs()).min(1e-2)
    };
    h = h.min(tol.h_max).min(span.abs());
    let mut k1 = f(x, &y);
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut last_accepted_rejected = false;

    loop {
        if steps + rejected >= tol.max_steps {
            return Err(Error::Integration {
                r: x,
                reason: format!("step budget {} exhausted", tol.max_steps),
            });
        }
        let remaining = (x_end - x) * dir;
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h <= 1e-14 * x.abs().max(1e-300) || h < 1e-300 {
            return Err(Error::Integration {
                r: x,
                reason: "step size underflow".into(),
            });
        }
        let hs = h * dir;
        let k2 = f(x + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]));
        let k3 = f(x + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(
            x + C4 * hs,
            &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = f(
            x + C5 * hs,
            &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            x + hs,
            &axpy(
                &y,
                hs,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y1 = axpy(
            &y,
            hs,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let x1 = if last { x_end } else { x + hs };
        let k7 = f(x1, &y1);

        let mut err = 0.0;
        let mut finite = true;
        for i in 0..N {
            let e = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(y1[i].abs());
            err += (e / sc).powi(2);
            finite &= y1[i].is_finite() && k7[i].is_finite();
        }
        err = (err / N as f64).sqrt();
        if !finite {
            err = f64::INFINITY;
        }

        if err <= 1.0 {
            let mut cont = [[0.0; N]; 5];
            for i in 0..N {
                let dy = y1[i] - y[i];
                let bspl = hs * k1[i] - dy;
                cont[0][i] = y[i];
                cont[1][i] = dy;
                cont[2][i] = bspl;
                cont[3][i] = dy - hs * k7[i] - bspl;
                cont[4][i] = hs
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                        + D7 * k7[i]);
            }
            let step = Step {
                x0: x,
                x1,
                y0: y,
                y1,
                cont,
            };
            steps += 1;
            x = x1;
            y = y1;
            k1 = k7;
            if on_step(&step).is_break() {
                return Ok(Outcome {
                    finish: Finish::Stopped,
                    x,
                    y,
                    steps,
                    rejected,
                });
            }
            if last {
                return Ok(Outcome {
                    finish: Finish::Reached,
                    x,
                    y,
                    steps,
                    rejected,
                });
            }
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 5.0);
            if last_accepted_rejected {
                fac = fac.min(1.0);
            }
            last_accepted_rejected = false;
            h = (h * fac).min(tol.h_max);
        } else {
            rejected += 1;
            last_accepted_rejected = true;
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h *= fac;
        }
    }
}

/// Locates a sign change of `g` inside a step by bisection on the dense
/// output. `g0` and `g1` are the values at the step ends (opposite signs).
pub fn locate<const N: usize, G>(step: &Step<N>, g: G, xtol: f64) -> (f64, [f64; N])
where
    G: Fn(f64, &[f64; N]) -> f64,
{
    let mut lo = step.x0;
    let mut hi = step.x1;
    let glo = g(lo, &step.y0);
    for _ in 0..200 {
        if (hi - lo).abs() <= xtol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let gm = g(mid, &step.eval(mid));
        if gm == 0.0 {
            hi = mid;
            break;
        }
        if (gm > 0.0) == (glo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (hi, step.eval(hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth_to_tolerance() {
        let tol = Tolerances {
            rtol: 1e-11,
            ..Default::default()
        };
        let out = integrate(|_, y: &[f64; 1]| [y[0]], 0.0, [1.0], 3.0, &tol, |_| {
            ControlFlow::Continue(())
        })
        .unwrap();
        assert_eq!(out.finish, Finish::Reached);
        assert!((out.y[0] - 3f64.exp()).abs() / 3f64.exp() < 1e-9);
    }

    #[test]
    fn dense_output_matches_solution() {
        let tol = Tolerances {
            rtol: 1e-10,
            ..Default::default()
        };
        let mut worst = 0.0f64;
        integrate(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            [0.0, 1.0],
            10.0,
            &tol,
            |s| {
                for k in 1..10 {
                    let x = s.x0 + (s.x1 - s.x0) * k as f64 / 10.0;
                    let y = s.eval(x);
                    worst = worst.max((y[0] - x.sin()).abs()).max((y[1] - x.cos()).abs());
                }
                ControlFlow::Continue(())
            },
        )
        .unwrap();
        assert!(worst < 1e-8, "dense error {worst}");
    }

    #[test]
    fn backward_direction() {
        let tol = Tolerances::default();
        let out = integrate(|_, y: &[f64; 1]| [-y[0]], 2.0, [1.0], 0.0, &tol, |_| {
            ControlFlow::Continue(())
        })
        .unwrap();
        assert!((out.y[0] - 2f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn event_location() {
        let tol = Tolerances::default();
        let mut found = None;
        integrate(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            [1.0, 0.0],
            3.0,
            &tol,
            |s| {
                if s.y0[0] > 0.0 && s.y1[0] <= 0.0 {
                    found = Some(locate(s, |_, y| y[0], 1e-13).0);
                    return ControlFlow::Break(());
                }
                ControlFlow::Continue(())
            },
        )
        .unwrap();
        let x = found.unwrap();
        assert!((x - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn stops_on_request() {
        let tol = Tolerances::default();
        let out = integrate(|_, _y: &[f64; 1]| [1.0], 0.0, [0.0], 10.0, &tol, |_| {
            ControlFlow::Break(())
        })
        .unwrap();
        assert_eq!(out.finish, Finish::Stopped);
        assert!(out.x < 10.0);
    }
}
