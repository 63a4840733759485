//! Shooting from the singular origin.
//!
//! For `r < 1` the equation is integrated in `s = ln r` for the reduced pair
//! `P = r^gamma q`, `W = r P_r`:
//!
//! ```text
//! P_s = W
//! W_s = -beta W + r^2 P - r^{2 - gamma p} |P|^p P
//! ```
//!
//! which is regular as `s -> -inf`. From `r = 1` on the physical pair
//! `(q, q_r)` is integrated in `r`.

use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate, locate, Step, Tolerances};
use crate::ode::{from_reduced, pow_odd, rhs, OdeState, Params};
use crate::special::{tail_leading, tail_shape};

/// Order of the local solution used to start the integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OriginOrder {
    /// `q = b r^{-gamma}` exactly.
    Leading,
    /// Adds the `r^{2-gamma}` and `r^{2-gamma-gamma p}` terms.
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginData {
    pub b: f64,
    pub r0: f64,
    pub q0: f64,
    pub qr0: f64,
    pv: f64,
    w: f64,
    pv_b: f64,
    w_b: f64,
}

impl OriginData {
    /// Start values for `-b`; exact negation of every field.
    pub fn mirrored(&self) -> OriginData {
        OriginData {
            b: -self.b,
            q0: -self.q0,
            qr0: -self.qr0,
            pv: -self.pv,
            w: -self.w,
            ..*self
        }
    }

    /// Reduced start values `(P, W)`.
    pub fn reduced(&self) -> (f64, f64) {
        (self.pv, self.w)
    }
}

/// Leading-order start, `q0 = b r0^{-gamma}`, `qr0 = -gamma b r0^{-gamma-1}`.
pub fn origin_expansion(b: f64, r0: f64, params: &Params) -> Result<OriginData> {
    origin_expansion_with(b, r0, params, OriginOrder::Leading)
}

pub fn origin_expansion_with(
    b: f64,
    r0: f64,
    params: &Params,
    order: OriginOrder,
) -> Result<OriginData> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidArgument(format!("b = {b} must be positive")));
    }
    if !(r0 > 0.0 && r0 <= 0.1) {
        return Err(Error::InvalidArgument(format!("r0 = {r0} must lie in (0, 0.1]")));
    }
    let (pv, w, pv_b, w_b) = match order {
        OriginOrder::Leading => (b, 0.0, 1.0, 0.0),
        OriginOrder::Corrected => {
            let p = params.p();
            let g = params.gamma();
            let beta = params.beta();
            let m = 2.0 - g * p;
            let pm1 = 2.0 * (2.0 + beta);
            let pm2 = m * (m + beta);
            let r2 = r0 * r0;
            let rm = r0.powf(m);
            let bp = b.powf(p);
            let pv = b + b * r2 / pm1 - b * bp * rm / pm2;
            let w = 2.0 * b * r2 / pm1 - m * b * bp * rm / pm2;
            let pv_b = 1.0 + r2 / pm1 - (p + 1.0) * bp * rm / pm2;
            let w_b = 2.0 * r2 / pm1 - m * (p + 1.0) * bp * rm / pm2;
            (pv, w, pv_b, w_b)
        }
    };
    let s = from_reduced(r0, pv, w, params);
    Ok(OriginData {
        b,
        r0,
        q0: s.q,
        qr0: s.qr,
        pv,
        w,
        pv_b,
        w_b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    QZero,
    QrZero,
    Escaped,
    TailEntered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub r: f64,
    pub q: f64,
    pub qr: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<OdeState>,
    pub events: Vec<Event>,
    pub params: Params,
    /// False when the integrator gave up (step-size underflow).
    pub valid: bool,
}

impl Trajectory {
    pub fn terminal_event(&self) -> Option<&Event> {
        self.events.last()
    }

    pub fn last(&self) -> &OdeState {
        self.samples.last().expect("trajectory has at least its start")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ShootingOptions {
    pub rtol: f64,
    pub atol: f64,
    pub r0: f64,
    pub order: OriginOrder,
    pub r_max: f64,
    pub tail_threshold: f64,
    pub escape: f64,
    /// Event localisation tolerance in r.
    pub event_tol: f64,
    pub stop_at_tail: bool,
    /// Largest step in the outer (plain r) phase.
    pub h_max_outer: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions {
            rtol: 1e-10,
            atol: 1e-20,
            r0: 1e-6,
            order: OriginOrder::Corrected,
            r_max: 30.0,
            tail_threshold: 1e-4,
            escape: 1e8,
            event_tol: 1e-12,
            stop_at_tail: true,
            h_max_outer: 0.25,
        }
    }
}

impl ShootingOptions {
    fn tolerances(&self, h_max: f64) -> Tolerances {
        Tolerances {
            rtol: self.rtol,
            atol: self.atol,
            h_max,
            ..Default::default()
        }
    }
}

/// Values of a run at requested radii: `(r, q, qr, P, W)`.
pub type NodeValue = [f64; 5];

struct RunOutput {
    traj: Trajectory,
    nodes: Vec<NodeValue>,
}

fn inner_rhs(params: &Params) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] + '_ {
    let beta = params.beta();
    let p = params.p();
    let m = 2.0 - params.gamma() * p;
    move |s, y| {
        let r2 = (2.0 * s).exp();
        let rm = (m * s).exp();
        [y[1], -beta * y[1] + r2 * y[0] - rm * pow_odd(y[0], p)]
    }
}

fn outer_rhs(params: &Params) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] + '_ {
    move |r, y| {
        let (a, b) = rhs(&OdeState::new(r, y[0], y[1]), params);
        [a, b]
    }
}

#[derive(Clone, Copy)]
enum Phase {
    Inner,
    Outer,
}

struct Detector<'a> {
    params: &'a Params,
    opts: &'a ShootingOptions,
}

impl Detector<'_> {
    fn physical(&self, phase: Phase, x: f64, y: &[f64; 2]) -> OdeState {
        match phase {
            Phase::Inner => from_reduced(x.exp(), y[0], y[1], self.params),
            Phase::Outer => OdeState::new(x, y[0], y[1]),
        }
    }

    /// Sign functions for the q and q_r crossings.
    fn g_q(&self, _phase: Phase, y: &[f64; 2]) -> f64 {
        y[0]
    }

    fn g_qr(&self, phase: Phase, y: &[f64; 2]) -> f64 {
        match phase {
            Phase::Inner => y[1] - self.params.gamma() * y[0],
            Phase::Outer => y[1],
        }
    }

    fn size(&self, y: &[f64; 2]) -> f64 {
        y[0].abs() + y[1].abs()
    }

    fn in_trap(&self, s: &OdeState) -> bool {
        let ratio = s.qr / s.q;
        s.q.abs() + s.qr.abs() < self.opts.tail_threshold && ratio > -1.5 && ratio < -0.5
    }

    /// Earliest event inside an accepted step, if any.
    fn scan(&self, phase: Phase, step: &Step<2>) -> Option<(EventKind, f64, [f64; 2])> {
        let xtol = match phase {
            Phase::Inner => self.opts.event_tol / step.x1.exp(),
            Phase::Outer => self.opts.event_tol,
        };
        let mut best: Option<(EventKind, f64, [f64; 2])> = None;
        let mut consider = |kind, x: f64, y: [f64; 2]| {
            if best.map_or(true, |(_, bx, _)| x < bx) {
                best = Some((kind, x, y));
            }
        };
        let crossed = |g0: f64, g1: f64| g1 == 0.0 || (g0 > 0.0) != (g1 > 0.0);

        let (a0, a1) = (self.g_q(phase, &step.y0), self.g_q(phase, &step.y1));
        if crossed(a0, a1) {
            let (x, y) = locate(step, |_, y| self.g_q(phase, y), xtol);
            consider(EventKind::QZero, x, y);
        }
        let (b0, b1) = (self.g_qr(phase, &step.y0), self.g_qr(phase, &step.y1));
        if crossed(b0, b1) {
            let (x, y) = locate(step, |_, y| self.g_qr(phase, y), xtol);
            consider(EventKind::QrZero, x, y);
        }
        let esc = self.opts.escape;
        if !step.y1.iter().all(|v| v.is_finite()) || self.size(&step.y1) > esc {
            let (x, y) = if step.y1.iter().all(|v| v.is_finite()) {
                locate(step, |_, y| self.size(y) - esc, xtol)
            } else {
                (step.x1, step.y1)
            };
            consider(EventKind::Escaped, x, y);
        }
        if self.opts.stop_at_tail {
            if let Phase::Outer = phase {
                let end = self.physical(phase, step.x1, &step.y1);
                if self.in_trap(&end) {
                    let thr = self.opts.tail_threshold;
                    let g0 = self.size(&step.y0) - thr;
                    let (x, y) = if g0 > 0.0 {
                        locate(step, |_, y| self.size(y) - thr, xtol)
                    } else {
                        (step.x1, step.y1)
                    };
                    consider(EventKind::TailEntered, x, y);
                }
            }
        }
        best
    }
}

/// Core two-phase integration with event detection and node sampling.
fn run(
    origin: &OriginData,
    r_end: f64,
    params: &Params,
    opts: &ShootingOptions,
    nodes: &[f64],
) -> RunOutput {
    let det = Detector { params, opts };
    let mut samples = vec![OdeState::new(origin.r0, origin.q0, origin.qr0)];
    let mut events = Vec::new();
    let mut out_nodes: Vec<NodeValue> = Vec::with_capacity(nodes.len());
    let mut node_idx = 0;
    while node_idx < nodes.len() && nodes[node_idx] < origin.r0 {
        node_idx += 1;
    }
    let mut valid = true;
    let mut stopped = false;
    let gamma = params.gamma();

    // phase A: s = ln r from ln r0 to min(0, ln r_end)
    let s_end = r_end.min(1.0).ln();
    let mut state_at_switch = [origin.pv, origin.w];
    if origin.r0 < 1.0 {
        let tol = opts.tolerances(f64::INFINITY);
        let res = integrate(
            inner_rhs(params),
            origin.r0.ln(),
            [origin.pv, origin.w],
            s_end,
            &tol,
            |step| {
                let hit = det.scan(Phase::Inner, step);
                let x_stop = hit.map_or(step.x1, |h| h.1);
                while node_idx < nodes.len() && nodes[node_idx].ln() <= x_stop {
                    let r = nodes[node_idx];
                    let y = step.eval(r.ln());
                    let s = from_reduced(r, y[0], y[1], params);
                    out_nodes.push([r, s.q, s.qr, y[0], y[1]]);
                    node_idx += 1;
                }
                match hit {
                    Some((kind, x, y)) => {
                        let s = det.physical(Phase::Inner, x, &y);
                        samples.push(s);
                        events.push(Event {
                            kind,
                            r: s.r,
                            q: s.q,
                            qr: s.qr,
                        });
                        stopped = true;
                        ControlFlow::Break(())
                    }
                    None => {
                        samples.push(det.physical(Phase::Inner, step.x1, &step.y1));
                        ControlFlow::Continue(())
                    }
                }
            },
        );
        match res {
            Ok(o) => state_at_switch = o.y,
            Err(_) => valid = false,
        }
        // the last step lands on s = 0 exactly, so r = 1
        if let Some(last) = samples.last_mut() {
            if !stopped && valid && s_end == 0.0 {
                last.r = 1.0;
            }
        }
    }
    if !valid || stopped || r_end <= 1.0 {
        return RunOutput {
            traj: Trajectory {
                samples,
                events,
                params: *params,
                valid,
            },
            nodes: out_nodes,
        };
    }

    // phase B: plain r
    let r_start = origin.r0.max(1.0);
    let y0 = if origin.r0 < 1.0 {
        [state_at_switch[0], state_at_switch[1] - gamma * state_at_switch[0]]
    } else {
        [origin.q0, origin.qr0]
    };
    let tol = opts.tolerances(opts.h_max_outer);
    let res = integrate(outer_rhs(params), r_start, y0, r_end, &tol, |step| {
        let hit = det.scan(Phase::Outer, step);
        let x_stop = hit.map_or(step.x1, |h| h.1);
        while node_idx < nodes.len() && nodes[node_idx] <= x_stop {
            let r = nodes[node_idx];
            let y = step.eval(r);
            let rg = r.powf(gamma);
            out_nodes.push([r, y[0], y[1], rg * y[0], rg * (r * y[1] + gamma * y[0])]);
            node_idx += 1;
        }
        match hit {
            Some((kind, x, y)) => {
                samples.push(OdeState::new(x, y[0], y[1]));
                events.push(Event {
                    kind,
                    r: x,
                    q: y[0],
                    qr: y[1],
                });
                ControlFlow::Break(())
            }
            None => {
                samples.push(OdeState::new(step.x1, step.y1[0], step.y1[1]));
                ControlFlow::Continue(())
            }
        }
    });
    if res.is_err() {
        valid = false;
    }
    RunOutput {
        traj: Trajectory {
            samples,
            events,
            params: *params,
            valid,
        },
        nodes: out_nodes,
    }
}

/// Integrates from the origin data to `r_max` with the default options.
pub fn integrate_trajectory(
    origin: &OriginData,
    r_max: f64,
    params: &Params,
    tol: f64,
) -> Result<Trajectory> {
    let opts = ShootingOptions {
        event_tol: tol,
        ..Default::default()
    };
    integrate_trajectory_with(origin, r_max, params, &opts)
}

pub fn integrate_trajectory_with(
    origin: &OriginData,
    r_max: f64,
    params: &Params,
    opts: &ShootingOptions,
) -> Result<Trajectory> {
    if !(r_max > origin.r0) {
        return Err(Error::InvalidArgument(format!(
            "r_max = {r_max} must exceed r0 = {}",
            origin.r0
        )));
    }
    Ok(run(origin, r_max, params, opts, &[]).traj)
}

/// Integrates and also returns values at the given increasing radii.
pub fn integrate_sampled(
    origin: &OriginData,
    r_end: f64,
    params: &Params,
    opts: &ShootingOptions,
    nodes: &[f64],
) -> Result<(Trajectory, Vec<NodeValue>)> {
    let out = run(origin, r_end, params, opts, nodes);
    if !out.traj.valid {
        return Err(Error::Integration {
            r: out.traj.last().r,
            reason: "step size underflow".into(),
        });
    }
    Ok((out.traj, out.nodes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tag {
    Splus,
    Sminus,
    Undecided,
}

impl Tag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tag::Splus => "Splus",
            Tag::Sminus => "Sminus",
            Tag::Undecided => "Undecided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub tag: Tag,
    pub r_event: Option<f64>,
    /// `(q, qr)` where the decision was made.
    pub certificate: (f64, f64),
}

fn start(b: f64, params: &Params, opts: &ShootingOptions) -> Result<OriginData> {
    origin_expansion_with(b, opts.r0, params, opts.order)
}

fn classify_trajectory(traj: &Trajectory) -> Result<Classification> {
    let params = &traj.params;
    if !traj.valid {
        return Err(Error::Integration {
            r: traj.last().r,
            reason: "step size underflow".into(),
        });
    }
    match traj.terminal_event() {
        Some(ev) => match ev.kind {
            EventKind::QZero => {
                if !(ev.qr < 0.0) {
                    return Err(Error::Integration {
                        r: ev.r,
                        reason: format!("q crosses zero with qr = {} (not transversal)", ev.qr),
                    });
                }
                Ok(Classification {
                    tag: Tag::Sminus,
                    r_event: Some(ev.r),
                    certificate: (ev.q, ev.qr),
                })
            }
            EventKind::QrZero => {
                let (_, qrr) = rhs(&OdeState::new(ev.r, ev.q, ev.qr), params);
                if !(ev.q > 0.0 && qrr > 0.0) {
                    return Err(Error::Integration {
                        r: ev.r,
                        reason: format!("qr vanishes with q = {}, q_rr = {qrr}", ev.q),
                    });
                }
                Ok(Classification {
                    tag: Tag::Splus,
                    r_event: Some(ev.r),
                    certificate: (ev.q, ev.qr),
                })
            }
            EventKind::TailEntered => Ok(Classification {
                tag: Tag::Undecided,
                r_event: None,
                certificate: (ev.q, ev.qr),
            }),
            EventKind::Escaped => Err(Error::Integration {
                r: ev.r,
                reason: "trajectory escaped before any event".into(),
            }),
        },
        None => {
            let s = traj.last();
            Ok(Classification {
                tag: Tag::Undecided,
                r_event: None,
                certificate: (s.q, s.qr),
            })
        }
    }
}

/// Classifies `b > 0` into S+, S- or the tail trap.
pub fn classify(b: f64, params: &Params, opts: &ShootingOptions) -> Result<Classification> {
    let origin = start(b, params, opts)?;
    let traj = integrate_trajectory_with(&origin, opts.r_max, params, opts)?;
    classify_trajectory(&traj)
}

/// Classification used inside bisection: no tail stop, `r_max` doubled up
/// to three times, then the sign of `q + q_r` decides.
pub fn classify_resolved(b: f64, params: &Params, opts: &ShootingOptions) -> Result<Tag> {
    let mut o = ShootingOptions {
        stop_at_tail: false,
        ..*opts
    };
    let origin = start(b, params, opts)?;
    for attempt in 0..4 {
        let traj = integrate_trajectory_with(&origin, o.r_max, params, &o)?;
        let c = classify_trajectory(&traj)?;
        if c.tag != Tag::Undecided {
            return Ok(c.tag);
        }
        if attempt == 3 {
            let s = traj.last();
            return Ok(if s.q + s.qr > 0.0 {
                Tag::Splus
            } else {
                Tag::Sminus
            });
        }
        o.r_max *= 2.0;
    }
    unreachable!()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BisectionResult {
    pub b0: f64,
    pub bracket_width: f64,
    pub iterations: usize,
    pub lower_tag: Tag,
    pub upper_tag: Tag,
    pub b_lo: f64,
    pub b_hi: f64,
    /// Every tested parameter with its tag, in order.
    pub history: Vec<(f64, Tag)>,
}

pub fn bisect_ground_state(bracket: (f64, f64), params: &Params, tol_b: f64) -> Result<BisectionResult> {
    let opts = ShootingOptions {
        rtol: 1e-12,
        ..Default::default()
    };
    bisect_ground_state_with(bracket, params, tol_b, &opts)
}

pub fn bisect_ground_state_with(
    bracket: (f64, f64),
    params: &Params,
    tol_b: f64,
    opts: &ShootingOptions,
) -> Result<BisectionResult> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidArgument(format!("bad bracket ({lo}, {hi})")));
    }
    if !(tol_b > 0.0) {
        return Err(Error::InvalidArgument("tol_b must be positive".into()));
    }
    let tlo = classify_resolved(lo, params, opts)?;
    let thi = classify_resolved(hi, params, opts)?;
    let mut history = vec![(lo, tlo), (hi, thi)];
    if tlo != Tag::Splus || thi != Tag::Sminus {
        return Err(Error::Bracket(format!(
            "endpoints classify as {} and {}, need Splus below and Sminus above",
            tlo.as_str(),
            thi.as_str()
        )));
    }
    let mut iterations = 0;
    while hi - lo > tol_b {
        if iterations >= 200 {
            return Err(Error::no_conv("bisection", iterations, hi - lo));
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let t = classify_resolved(mid, params, opts)?;
        history.push((mid, t));
        match t {
            Tag::Splus => lo = mid,
            _ => hi = mid,
        }
        iterations += 1;
    }
    Ok(BisectionResult {
        b0: 0.5 * (lo + hi),
        bracket_width: hi - lo,
        iterations,
        lower_tag: Tag::Splus,
        upper_tag: Tag::Sminus,
        b_lo: lo,
        b_hi: hi,
        history,
    })
}

/// Widens `(0.1, 10)` until it brackets the flip.
pub fn standard_bracket(params: &Params, opts: &ShootingOptions) -> Result<(f64, f64)> {
    let mut lo = 0.1;
    let mut hi = 10.0;
    for _ in 0..8 {
        if classify_resolved(lo, params, opts)? == Tag::Splus {
            break;
        }
        lo /= 10.0;
    }
    for _ in 0..8 {
        if classify_resolved(hi, params, opts)? == Tag::Sminus {
            break;
        }
        hi *= 10.0;
    }
    Ok((lo, hi))
}

/// Independent classification of every grid point.
pub fn scan_bracket(
    b_grid: &[f64],
    params: &Params,
    opts: &ShootingOptions,
) -> Vec<(f64, Result<Classification>)> {
    b_grid
        .par_iter()
        .map(|&b| (b, classify(b, params, opts)))
        .collect()
}

/// Number of tag flips between consecutive decided entries, and whether an
/// Sminus ever precedes an Splus.
pub fn scan_structure(scan: &[(f64, Result<Classification>)]) -> (usize, bool) {
    let tags: Vec<Tag> = scan
        .iter()
        .filter_map(|(_, c)| c.as_ref().ok().map(|c| c.tag))
        .filter(|t| *t != Tag::Undecided)
        .collect();
    let flips = tags.windows(2).filter(|w| w[0] != w[1]).count();
    let first_minus = tags.iter().position(|t| *t == Tag::Sminus);
    let monotone = match first_minus {
        Some(i) => tags[i..].iter().all(|t| *t == Tag::Sminus),
        None => true,
    };
    (flips, monotone)
}

pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
            .collect(),
    }
}

/// Model used to fit the exponential tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailModel {
    /// `c r^{-(d-1)/2} e^{-r}`.
    Leading,
    /// Exact decaying solution of the linearized equation,
    /// `c sqrt(2/pi) r^{1-d/2} K_{beta/2}(r)`, with the same normalisation at infinity.
    Bessel,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailFit {
    pub c0: f64,
    /// RMS of the log residuals.
    pub residual: f64,
    /// `qr/q + 1` at the window ends.
    pub ratio_start: f64,
    pub ratio_end: f64,
    pub samples: usize,
    pub mismatch: bool,
}

/// Fits `q ~ c0 T(r)` over the window; `T` per the model.
pub fn fit_tail_constant(traj: &Trajectory, window: (f64, f64), model: TailModel) -> Result<TailFit> {
    let d = traj.params.dim();
    let nu = traj.params.nu();
    let pts: Vec<&OdeState> = traj
        .samples
        .iter()
        .filter(|s| s.r >= window.0 && s.r <= window.1)
        .collect();
    if pts.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "only {} samples in the fit window",
            pts.len()
        )));
    }
    let sign = pts[0].q.signum();
    if pts.iter().any(|s| s.q.signum() != sign || s.q == 0.0) {
        return Err(Error::InvalidArgument("q changes sign in the fit window".into()));
    }
    let logs: Vec<f64> = pts
        .iter()
        .map(|s| {
            let t = match model {
                TailModel::Leading => tail_leading(d, s.r).0,
                TailModel::Bessel => tail_shape(d, nu, s.r).0,
            };
            (s.q.abs() / t).ln()
        })
        .collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let residual = (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / logs.len() as f64).sqrt();
    let first = pts[0];
    let last = pts[pts.len() - 1];
    let ratio_start = first.qr / first.q + 1.0;
    let ratio_end = last.qr / last.q + 1.0;
    let mismatch = residual > 1e-2 || ratio_end.abs() > 0.5;
    Ok(TailFit {
        c0: sign * mean.exp(),
        residual,
        ratio_start,
        ratio_end,
        samples: pts.len(),
        mismatch,
    })
}

/// Why a variational run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QbEnd {
    QZero,
    TailEntered,
    RMax,
}

#[derive(Debug, Clone)]
pub struct QbTrajectory {
    /// `(r, q, qr, qt, qt_r)` at accepted steps.
    pub samples: Vec<[f64; 5]>,
    pub zero_radii: Vec<f64>,
    pub zero_count: usize,
    pub end: QbEnd,
}

/// Co-integrates `q~ = dq/db` along the trajectory of `b`.
pub fn variational_qb(b: f64, params: &Params, opts: &ShootingOptions) -> Result<QbTrajectory> {
    let origin = start(b, params, opts)?;
    let beta = params.beta();
    let p = params.p();
    let gamma = params.gamma();
    let m = 2.0 - gamma * p;
    let d = params.dim();
    let a = params.a();
    let det = Detector { params, opts };

    let mut samples = Vec::new();
    let mut zeros = Vec::new();
    let mut end = QbEnd::RMax;
    let xtol = opts.event_tol;

    let inner = |s: f64, y: &[f64; 4]| {
        let r2 = (2.0 * s).exp();
        let rm = (m * s).exp();
        let ap = y[0].abs().powf(p);
        [
            y[1],
            -beta * y[1] + r2 * y[0] - rm * ap * y[0],
            y[3],
            -beta * y[3] + r2 * y[2] - (p + 1.0) * rm * ap * y[2],
        ]
    };
    let phys = |s: f64, y: &[f64; 4]| {
        let r = s.exp();
        let a = from_reduced(r, y[0], y[1], params);
        let t = from_reduced(r, y[2], y[3], params);
        [r, a.q, a.qr, t.q, t.qr]
    };
    let y0 = [origin.pv, origin.w, origin.pv_b, origin.w_b];
    samples.push(phys(origin.r0.ln(), &y0));
    let tol = opts.tolerances(f64::INFINITY);
    let mut stopped = false;
    let o = integrate(inner, origin.r0.ln(), y0, 0.0, &tol, |step| {
        let (t0, t1) = (step.y0[2], step.y1[2]);
        if (t0 > 0.0) != (t1 > 0.0) {
            let mut lo = step.x0;
            let mut hi = step.x1;
            while hi - lo > xtol / step.x1.exp() {
                let mid = 0.5 * (lo + hi);
                if (step.eval(mid)[2] > 0.0) == (t0 > 0.0) {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            zeros.push(hi.exp());
        }
        if (step.y0[0] > 0.0) != (step.y1[0] > 0.0) {
            stopped = true;
            end = QbEnd::QZero;
        }
        samples.push(phys(step.x1, &step.y1));
        if stopped {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    if stopped {
        return Ok(QbTrajectory {
            zero_count: zeros.len(),
            samples,
            zero_radii: zeros,
            end,
        });
    }
    let y = o.y;
    let yb = [y[0], y[1] - gamma * y[0], y[2], y[3] - gamma * y[2]];
    let outer = |r: f64, y: &[f64; 4]| {
        let ap = y[0].abs().powf(p);
        let lin = |q: f64, qr: f64| -((d - 1.0) / r) * qr + (a / (r * r)) * q + q;
        [
            y[1],
            lin(y[0], y[1]) - ap * y[0],
            y[3],
            lin(y[2], y[3]) - (p + 1.0) * ap * y[2],
        ]
    };
    let tol = opts.tolerances(opts.h_max_outer);
    integrate(outer, 1.0, yb, opts.r_max, &tol, |step| {
        let (t0, t1) = (step.y0[2], step.y1[2]);
        if (t0 > 0.0) != (t1 > 0.0) {
            let mut lo = step.x0;
            let mut hi = step.x1;
            while hi - lo > xtol {
                let mid = 0.5 * (lo + hi);
                if (step.eval(mid)[2] > 0.0) == (t0 > 0.0) {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            zeros.push(hi);
        }
        samples.push([step.x1, step.y1[0], step.y1[1], step.y1[2], step.y1[3]]);
        if (step.y0[0] > 0.0) != (step.y1[0] > 0.0) {
            end = QbEnd::QZero;
            return ControlFlow::Break(());
        }
        if opts.stop_at_tail && det.in_trap(&OdeState::new(step.x1, step.y1[0], step.y1[1])) {
            end = QbEnd::TailEntered;
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    })?;
    Ok(QbTrajectory {
        zero_count: zeros.len(),
        samples,
        zero_radii: zeros,
        end,
    })
}

/// Largest deviation of `r^gamma q` between starts at `r0` and `r0/2`,
/// sampled up to `r = 0.1`.
pub fn origin_self_consistency(b: f64, params: &Params, opts: &ShootingOptions) -> Result<f64> {
    let nodes = [0.01, 0.03, 0.1];
    let o1 = start(b, params, opts)?;
    let half = ShootingOptions {
        r0: opts.r0 / 2.0,
        ..*opts
    };
    let o2 = start(b, params, &half)?;
    let (_, n1) = integrate_sampled(&o1, 0.1, params, opts, &nodes)?;
    let (_, n2) = integrate_sampled(&o2, 0.1, params, &half, &nodes)?;
    Ok(n1
        .iter()
        .zip(&n2)
        .map(|(a, b)| ((a[3] - b[3]) / a[3]).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canon() -> Params {
        Params::new(3, 2.0, -0.1).unwrap()
    }

    #[test]
    fn leading_order_examples() {
        let p = canon();
        let o = origin_expansion(1.0, 1e-3, &p).unwrap();
        assert!((o.q0 - 2.1779).abs() < 1e-3, "{}", o.q0);
        assert!((o.qr0 + 245.4).abs() < 0.1, "{}", o.qr0);
        let o2 = origin_expansion(2.0, 1e-3, &p).unwrap();
        assert_eq!(o2.q0, 2.0 * o.q0);
        assert_eq!(o2.qr0, 2.0 * o.qr0);
    }

    #[test]
    fn origin_rejects_bad_input() {
        let p = canon();
        assert!(origin_expansion(0.0, 1e-3, &p).is_err());
        assert!(origin_expansion(-1.0, 1e-3, &p).is_err());
        assert!(origin_expansion(1.0, 0.2, &p).is_err());
        assert!(origin_expansion(1.0, 0.0, &p).is_err());
    }

    #[test]
    fn corrected_start_is_close_to_leading() {
        let p = canon();
        let a = origin_expansion_with(2.0, 1e-6, &p, OriginOrder::Leading).unwrap();
        let b = origin_expansion_with(2.0, 1e-6, &p, OriginOrder::Corrected).unwrap();
        assert!(((a.q0 - b.q0) / a.q0).abs() < 1e-9);
        assert!(b.q0 > 0.0 && b.qr0 < 0.0);
    }

    #[test]
    fn far_parameters_classify() {
        let p = canon();
        let o = ShootingOptions::default();
        assert_eq!(classify(0.1, &p, &o).unwrap().tag, Tag::Splus);
        assert_eq!(classify(10.0, &p, &o).unwrap().tag, Tag::Sminus);
    }

    #[test]
    fn bracket_precondition() {
        let p = canon();
        assert!(matches!(
            bisect_ground_state((0.1, 0.2), &p, 1e-6),
            Err(Error::Bracket(_))
        ));
    }

    #[test]
    fn empty_scan() {
        let p = canon();
        assert!(scan_bracket(&[], &p, &ShootingOptions::default()).is_empty());
    }

    #[test]
    fn synthetic_tail_fits() {
        let p = canon();
        let mk = |f: &dyn Fn(f64) -> (f64, f64)| Trajectory {
            samples: (0..=100)
                .map(|i| {
                    let r = 5.0 + 0.1 * i as f64;
                    let (q, qr) = f(r);
                    OdeState::new(r, q, qr)
                })
                .collect(),
            events: vec![],
            params: p,
            valid: true,
        };
        let good = mk(&|r| {
            let q = 2.5 / r * (-r).exp();
            (q, -q * (1.0 + 1.0 / r))
        });
        let fit = fit_tail_constant(&good, (5.0, 15.0), TailModel::Leading).unwrap();
        assert!((fit.c0 - 2.5).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert!(!fit.mismatch);
        let bad = mk(&|r| {
            let q = (-2.0 * r).exp() / r;
            (q, -q * (2.0 + 1.0 / r))
        });
        let fit = fit_tail_constant(&bad, (5.0, 15.0), TailModel::Leading).unwrap();
        assert!(fit.residual > 1.0);
        assert!(fit.mismatch);
        let flip = mk(&|r| ((r - 10.0).sin(), 1.0));
        assert!(fit_tail_constant(&flip, (5.0, 15.0), TailModel::Leading).is_err());
    }

    #[test]
    fn log_spacing() {
        let g = log_spaced(0.1, 10.0, 3);
        assert!((g[1] - 1.0).abs() < 1e-14);
        assert!(log_spaced(1.0, 2.0, 0).is_empty());
    }
}
