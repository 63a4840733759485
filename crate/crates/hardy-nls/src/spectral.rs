//! Linearized operators around the ground state.
//!
//! In sector `ℓ` the operator `-Δ + (a+μ_ℓ)/r^2 + 1 - c Q^p` acts on
//! `v = r^{γ_ℓ} q`, where `q ~ r^{-γ_ℓ}` is the regular behaviour at the
//! origin. In `v` the operator is a Laplacian in dimension `2 + β_ℓ`
//! without the inverse-square term, so a flux-form finite-volume
//! discretization gives a symmetric pencil `K v = λ W v` with `W` the
//! diagonal cell volumes. The origin needs no boundary row (zero flux);
//! at `r_max` a Robin row pins `q_r/q = -1 - (d-1)/(2 r_max)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::groundstate::GroundStateProfile;
use crate::ode::Params;
use crate::linalg::{dot, BandMatrix, Block2Tridiag, SymTridiag};

#[derive(Debug, Clone)]
pub struct SectorOperator {
    pub ell: u32,
    pub mu: f64,
    pub coeff: f64,
    /// `γ_ℓ`; eigenfunctions behave like `r^{-γ_ℓ}` at the origin.
    pub gamma: f64,
    pub d_eff: f64,
    /// Flux part including the Robin row.
    pub stiffness: SymTridiag,
    /// Full matrix `K`.
    pub matrix: SymTridiag,
    /// Cell volumes `W`.
    pub weight: Vec<f64>,
    /// Edge fluxes `k_{i+1/2}`, Robin coefficient on the last row and the
    /// cell potential `w_i V_i`; `K` is rebuilt from these in [`apply_dual`].
    flux: Vec<f64>,
    robin: f64,
    cell_potential: Vec<f64>,
    pub r: Vec<f64>,
    /// Surface area of the unit sphere, so `<u, v> = area u^T W v`.
    pub area: f64,
}

impl SectorOperator {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// `K v`, the operator in dual (weighted) form.
    ///
    /// Evaluated as differences of edge fluxes, which avoids the
    /// cancellation of `diag v_i + off v_{i±1}` where cells are tiny.
    pub fn apply_dual(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let mut out: Vec<f64> = self.cell_potential.iter().zip(v).map(|(c, x)| c * x).collect();
        for (e, k) in self.flux.iter().enumerate() {
            let f = k * (v[e + 1] - v[e]);
            out[e] -= f;
            out[e + 1] += f;
        }
        out[n - 1] += self.robin * v[n - 1];
        out
    }

    /// `W^{-1} K v`, the operator itself.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.apply_dual(v)
            .iter()
            .zip(&self.weight)
            .map(|(k, w)| k / w)
            .collect()
    }

    /// `<u, v>` including the sphere area.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.area * u.iter().zip(v).zip(&self.weight).map(|((a, b), w)| a * b * w).sum::<f64>()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// Norm of a vector given in dual form, `||W^{-1} f||`.
    pub fn dual_norm(&self, f: &[f64]) -> f64 {
        (self.area * f.iter().zip(&self.weight).map(|(a, w)| a * a / w).sum::<f64>()).sqrt()
    }

    /// `<A u, u>`.
    pub fn form(&self, u: &[f64]) -> f64 {
        self.area * dot(u, &self.apply_dual(u))
    }

    /// Reduced values `v = r^{γ_ℓ} q`.
    pub fn to_reduced(&self, q: &[f64]) -> Vec<f64> {
        self.r.iter().zip(q).map(|(r, x)| r.powf(self.gamma) * x).collect()
    }

    /// Physical values `q = r^{-γ_ℓ} v`.
    pub fn to_physical(&self, v: &[f64]) -> Vec<f64> {
        self.r.iter().zip(v).map(|(r, x)| r.powf(-self.gamma) * x).collect()
    }
}

/// Discretizes sector `ell` with potential multiplier `coeff` on the
/// profile's grid.
pub fn assemble_sector(profile: &GroundStateProfile, ell: u32, coeff: f64) -> Result<SectorOperator> {
    assemble_sector_with(profile, ell, coeff, &profile.q)
}

/// Same as [`assemble_sector`] with the potential built from physical
/// values `q` instead of the profile's `Q`.
pub fn assemble_sector_with(profile: &GroundStateProfile, ell: u32, coeff: f64, q: &[f64]) -> Result<SectorOperator> {
    SectorOperator::from_grid(&profile.grid, &profile.params, ell, coeff, q)
}

impl SectorOperator {
    /// Sector `ell` of `-Δ + a/r^2 + 1 - coeff |q|^p` on `grid`.
    pub fn from_grid(grid: &RadialGrid, params: &Params, ell: u32, coeff: f64, q: &[f64]) -> Result<Self> {
        if q.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "potential has {} values on a grid of {}",
                q.len(),
                grid.len()
            )));
        }
        let d = params.dim();
        let mu = match ell {
            0 => 0.0,
            1 => d - 1.0,
            _ => return Err(Error::InvalidArgument(format!("sector ell = {ell} is not supported"))),
        };
        let beta = ((d - 2.0).powi(2) + 4.0 * (params.a() + mu)).sqrt();
        let gamma = (d - 2.0 - beta) / 2.0;
        let d_eff = 2.0 + beta;
        let r = grid.r().to_vec();
        let n = r.len();
        let flux = grid.flux(d_eff);
        let weight = grid.box_weights(d_eff);
        let mut diag = vec![0.0; n];
        for (e, k) in flux.iter().enumerate() {
            diag[e] += k;
            diag[e + 1] += k;
        }
        let rn = r[n - 1];
        let kappa = -1.0 - (d - 1.0) / (2.0 * rn) + gamma / rn;
        let robin = -rn.powf(d_eff - 1.0) * kappa;
        diag[n - 1] += robin;
        let stiffness = SymTridiag {
            diag,
            off: flux.iter().map(|k| -k).collect(),
        };
        let p = params.p();
        let potential: Vec<f64> = q.iter().map(|q| 1.0 - coeff * q.abs().powf(p)).collect();
        let cell_potential: Vec<f64> = weight.iter().zip(&potential).map(|(w, v)| w * v).collect();
        let matrix = SymTridiag {
            diag: stiffness.diag.iter().zip(&cell_potential).map(|(k, c)| k + c).collect(),
            off: stiffness.off.clone(),
        };
        Ok(SectorOperator {
            ell,
            mu,
            coeff,
            gamma,
            d_eff,
            stiffness,
            matrix,
            weight,
            flux,
            robin,
            cell_potential,
            r,
            area: params.sphere_area(),
        })
    }

    /// Ground state of the discrete problem, `K0 P = W |q|^p P` with `K0` the
    /// free operator, by Newton from the profile. Returns physical values.
    ///
    /// Operators built on it have `Q_h` as an exact kernel of the discrete
    /// `L2`, which keeps the zero eigenvalue of `JL` from splitting into a
    /// spurious real pair.
    pub fn discrete_ground_state(profile: &GroundStateProfile) -> Result<Vec<f64>> {
        let p = profile.params.p();
        let free = assemble_sector(profile, 0, 0.0)?;
        let mut pv = profile.reduced();
        let scale: Vec<f64> = free.r.iter().map(|r| r.powf(-free.gamma * p)).collect();
        let mut last = f64::INFINITY;
        for it in 0..30 {
            let pot: Vec<f64> = pv.iter().zip(&scale).map(|(x, s)| s * x.abs().powf(p)).collect();
            let f: Vec<f64> = free
                .apply_dual(&pv)
                .iter()
                .zip(&free.weight)
                .zip(pv.iter().zip(&pot))
                .map(|((k, w), (x, u))| k - w * u * x)
                .collect();
            let res = free.dual_norm(&f) / free.norm(&pv);
            // the floor is set by rounding of P amplified at the smallest cells
            if res < 1e-13 || (res > 0.5 * last && res < 1e-6) {
                return Ok(free.to_physical(&pv));
            }
            last = res;
            let jac = SymTridiag {
                diag: free
                    .matrix
                    .diag
                    .iter()
                    .zip(&free.weight)
                    .zip(&pot)
                    .map(|((k, w), u)| k - (p + 1.0) * w * u)
                    .collect(),
                off: free.matrix.off.clone(),
            };
            let dx = jac.solve(&f);
            for (x, d) in pv.iter_mut().zip(&dx) {
                *x -= d;
            }
            if !pv.iter().all(|x| x.is_finite()) {
                return Err(Error::no_conv("discrete ground state", it, f64::NAN));
            }
        }
        Err(Error::no_conv("discrete ground state", 30, last))
    }
}

/// Ground state of the discrete problem, `K0 P = W |q|^p P` with `K0` the
/// free operator, by Newton from the profile. Returns physical values.
///
/// Operators built on it have `Q_h` as an exact kernel of the discrete
/// `L2`, which keeps the zero eigenvalue of `JL` from splitting into a
/// spurious real pair.
pub fn discrete_ground_state(profile: &GroundStateProfile) -> Result<Vec<f64>> {
    let p = profile.params.p();
    let free = assemble_sector(profile, 0, 0.0)?;
    let mut pv = profile.reduced();
    let scale: Vec<f64> = free.r.iter().map(|r| r.powf(-free.gamma * p)).collect();
    let mut last = f64::INFINITY;
    for it in 0..30 {
        let pot: Vec<f64> = pv.iter().zip(&scale).map(|(x, s)| s * x.abs().powf(p)).collect();
        let f: Vec<f64> = free
            .apply_dual(&pv)
            .iter()
            .zip(&free.weight)
            .zip(pv.iter().zip(&pot))
            .map(|((k, w), (x, u))| k - w * u * x)
            .collect();
        let res = free.dual_norm(&f) / free.norm(&pv);
        // the floor is set by rounding of P amplified at the smallest cells
        if res < 1e-13 || (res > 0.5 * last && res < 1e-6) {
            return Ok(free.to_physical(&pv));
        }
        last = res;
        let jac = SymTridiag {
            diag: free
                .matrix
                .diag
                .iter()
                .zip(&free.weight)
                .zip(&pot)
                .map(|((k, w), u)| k - (p + 1.0) * w * u)
                .collect(),
            off: free.matrix.off.clone(),
        };
        let dx = jac.solve(&f);
        for (x, d) in pv.iter_mut().zip(&dx) {
            *x -= d;
        }
        if !pv.iter().all(|x| x.is_finite()) {
            return Err(Error::no_conv("discrete ground state", it, f64::NAN));
        }
    }
    Err(Error::no_conv("discrete ground state", 30, last))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenPair {
    pub value: f64,
    /// Reduced eigenvector, unit norm.
    pub vector: Vec<f64>,
    pub residual: f64,
}

fn w_orthogonalize(x: &mut [f64], basis: &[EigenPair], w: &[f64]) {
    for b in basis {
        let c = x.iter().zip(&b.vector).zip(w).map(|((a, v), w)| a * v * w).sum::<f64>()
            / b.vector.iter().zip(w).map(|(v, w)| v * v * w).sum::<f64>();
        for (xi, vi) in x.iter_mut().zip(&b.vector) {
            *xi -= c * vi;
        }
    }
}

/// The `k` lowest eigenpairs: Sturm bisection for the values, shifted
/// inverse iteration with deflation for the vectors.
pub fn eig_lowest(op: &SectorOperator, k: usize) -> Result<Vec<EigenPair>> {
    let w = &op.weight;
    let n = op.len();
    let lower = op
        .matrix
        .diag
        .iter()
        .zip(&op.stiffness.diag)
        .zip(w)
        .map(|((m, s), w)| (m - s) / w)
        .fold(f64::INFINITY, f64::min)
        - 1.0;
    let mut found: Vec<EigenPair> = Vec::with_capacity(k);
    for j in 0..k.min(n) {
        let mut lo = lower;
        let mut hi = lower.abs().max(1.0);
        while op.matrix.count_below(hi, w) <= j {
            hi = hi * 2.0 + 1.0;
            if hi > 1e30 {
                return Err(Error::no_conv("eigenvalue bracketing", j, hi));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-15 * mid.abs().max(1.0) || mid <= lo || mid >= hi {
                break;
            }
            if op.matrix.count_below(mid, w) > j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let lam = 0.5 * (lo + hi);
        let shift = lam - 1e-10 * lam.abs().max(1.0);
        let shifted = op.matrix.shifted(shift, w);
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7 + j * 13) % 17) as f64).collect();
        let mut value = lam;
        let mut residual = f64::INFINITY;
        let tol = 1e-9 * lam.abs().max(1.0);
        let mut iters = 0;
        while iters < 50 {
            iters += 1;
            let rhs: Vec<f64> = x.iter().zip(w).map(|(a, b)| a * b).collect();
            let mut y = shifted.solve(&rhs);
            w_orthogonalize(&mut y, &found, w);
            let nrm = op.norm(&y);
            for v in y.iter_mut() {
                *v /= nrm;
            }
            value = op.form(&y);
            let kx = op.apply_dual(&y);
            let res: Vec<f64> = kx.iter().zip(&y).zip(w).map(|((k, v), w)| k - value * w * v).collect();
            residual = op.dual_norm(&res);
            x = y;
            if residual < tol {
                break;
            }
        }
        if !(residual < 1e3 * tol) {
            return Err(Error::no_conv("inverse iteration", iters, residual));
        }
        // fix the sign: positive at the origin end
        let s = if x[0] < 0.0 { -1.0 } else { 1.0 };
        for v in x.iter_mut() {
            *v *= s;
        }
        found.push(EigenPair {
            value,
            vector: x,
            residual,
        });
    }
    Ok(found)
}

/// Eigenvalue count below zero.
pub fn negative_count(op: &SectorOperator) -> usize {
    op.matrix.count_below(0.0, &op.weight)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstrainedMin {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Minimum of `<A v, v>/<v, v>` over `v` with `<v, c> = 0`, where the
/// constraint is passed in dual form `W c`.
///
/// The minimiser solves `(K - λW) v = W c`; the secular function
/// `g(λ) = c^T W (K - λW)^{-1} W c` increases between consecutive
/// eigenvalues, and its root in `(λ1, λ2)` is the constrained minimum.
pub fn coercivity_min(op: &SectorOperator, constraint_dual: &[f64]) -> Result<ConstrainedMin> {
    let w = &op.weight;
    let ev = eig_lowest(op, 2)?;
    let (l1, l2) = (ev[0].value, ev[1].value);
    let g = |lam: f64| {
        let v = op.matrix.shifted(lam, w).solve(constraint_dual);
        (dot(constraint_dual, &v), v)
    };
    let gap = l2 - l1;
    let mut lo = l1 + 1e-12 * gap.max(1e-300);
    let mut hi = l2 - 1e-12 * gap.max(1e-300);
    let (glo, _) = g(lo);
    let (ghi, _) = g(hi);
    if glo >= 0.0 {
        // constraint orthogonal to the first mode
        return Ok(ConstrainedMin {
            value: l1,
            vector: ev[0].vector.clone(),
        });
    }
    if ghi <= 0.0 {
        return Ok(ConstrainedMin {
            value: l2,
            vector: ev[1].vector.clone(),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-14 * mid.abs().max(1.0) {
            break;
        }
        if g(mid).0 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lam = 0.5 * (lo + hi);
    let (_, mut v) = g(lam);
    let nrm = op.norm(&v);
    for x in v.iter_mut() {
        *x /= nrm;
    }
    Ok(ConstrainedMin {
        value: lam,
        vector: v,
    })
}

/// `(L_a + 1) Q` in dual form, the constraint of the coercivity bounds.
pub fn constraint_la1_q(profile: &GroundStateProfile) -> Result<Vec<f64>> {
    let free = assemble_sector(profile, 0, 0.0)?;
    let pv = profile.reduced();
    Ok(free.apply_dual(&pv))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dichotomy {
    pub e0: f64,
    /// `e0` from the composed `N x N` problem, when that iteration converges.
    pub e0_composed: Option<f64>,
    /// `V+ = (v1, v2)` and `V- = (v1m, v2m)`, reduced components.
    pub vplus: (Vec<f64>, Vec<f64>),
    pub vminus: (Vec<f64>, Vec<f64>),
    pub normalization: f64,
    pub residual_plus: f64,
    pub residual_minus: f64,
    /// `<L V+, V+>` and `<L V-, V->`.
    pub degeneracy: (f64, f64),
}

/// Composed problem `-L2 L1 v = λ v` by shifted inverse iteration on the
/// pentadiagonal pencil `-(K2 W^{-1} K1) v = λ W v`.
fn composed_eigenvalue(l1: &SectorOperator, l2: &SectorOperator, sigma: f64, start: &[f64]) -> Result<f64> {
    let n = l1.len();
    let w = &l1.weight;
    let at = |k: &SymTridiag, i: usize, j: usize| -> f64 {
        if i == j {
            k.diag[i]
        } else if j == i + 1 {
            k.off[i]
        } else if i == j + 1 {
            k.off[j]
        } else {
            0.0
        }
    };
    // M = K2 W^{-1} K1 + sigma W
    let mut m = BandMatrix::zeros(n, 2, 2);
    for i in 0..n {
        for l in i.saturating_sub(1)..=(i + 1).min(n - 1) {
            let s = at(&l2.matrix, i, l) / w[l];
            for j in l.saturating_sub(1)..=(l + 1).min(n - 1) {
                m.add(i, j, s * at(&l1.matrix, l, j));
            }
        }
        m.add(i, i, sigma * w[i]);
    }
    let lu = m.factor().ok_or_else(|| Error::no_conv("composed factorisation", 0, f64::NAN))?;
    let mut x = start.to_vec();
    let mut lam = f64::NAN;
    for it in 0..200 {
        let rhs: Vec<f64> = x.iter().zip(w).map(|(a, b)| -a * b).collect();
        let y = lu.solve(&rhs);
        let next = sigma + l1.inner(&x, &x) / l1.inner(&x, &y);
        let nrm = l1.norm(&y);
        x = y.iter().map(|v| v / nrm).collect();
        if (next - lam).abs() < 1e-13 * next.abs() {
            return Ok(next);
        }
        lam = next;
        if !lam.is_finite() {
            return Err(Error::no_conv("composed eigenvalue", it, lam));
        }
    }
    Err(Error::no_conv("composed eigenvalue", 200, lam))
}

/// Left generalized kernel of `JL`: `(Q, 0)` and `(0, x)` with `x = -L1^{-1} Q`.
/// Removing the matching right components keeps the shifted iteration
/// away from the double zero eigenvalue.
struct KernelDeflation {
    q: Vec<f64>,
    x: Vec<f64>,
    qx: f64,
}

impl KernelDeflation {
    fn new(l1: &SectorOperator, q: &[f64]) -> Self {
        let rhs: Vec<f64> = q.iter().zip(&l1.weight).map(|(a, w)| -a * w).collect();
        let x = l1.matrix.solve(&rhs);
        let qx = l1.inner(q, &x);
        KernelDeflation { q: q.to_vec(), x, qx }
    }

    fn project(&self, l1: &SectorOperator, v1: &mut [f64], v2: &mut [f64]) {
        let beta = l1.inner(v1, &self.q) / self.qx;
        let alpha = l1.inner(v2, &self.x) / self.qx;
        for (a, b) in v1.iter_mut().zip(&self.x) {
            *a -= beta * b;
        }
        for (a, b) in v2.iter_mut().zip(&self.q) {
            *a -= alpha * b;
        }
    }
}

/// Block residual `||JL V - λ V|| / ||V||`.
fn jl_residual(l1: &SectorOperator, l2: &SectorOperator, v1: &[f64], v2: &[f64], lam: f64) -> f64 {
    let w = &l1.weight;
    let a: Vec<f64> = l2.apply_dual(v2).iter().zip(v1).zip(w).map(|((k, x), w)| k - lam * w * x).collect();
    let b: Vec<f64> = l1.apply_dual(v1).iter().zip(v2).zip(w).map(|((k, x), w)| -k - lam * w * x).collect();
    let num = (l1.dual_norm(&a).powi(2) + l1.dual_norm(&b).powi(2)).sqrt();
    let den = (l1.inner(v1, v1) + l1.inner(v2, v2)).sqrt();
    num / den
}

const REFINE: usize = 1;

struct BlockEigen {
    value: f64,
    v1: Vec<f64>,
    v2: Vec<f64>,
    residual: f64,
}

fn block_matrix(l1: &SectorOperator, l2: &SectorOperator, sigma: f64) -> Block2Tridiag {
    // unknowns (v1_i, v2_i); rows ((K2 v2)_i - sigma w_i v1_i, -(K1 v1)_i - sigma w_i v2_i)
    let n = l1.len();
    let w = &l1.weight;
    let off = |i: usize| [[0.0, l2.matrix.off[i]], [-l1.matrix.off[i], 0.0]];
    Block2Tridiag {
        lower: (0..n - 1).map(off).collect(),
        diag: (0..n)
            .map(|i| [[-sigma * w[i], l2.matrix.diag[i]], [-l1.matrix.diag[i], -sigma * w[i]]])
            .collect(),
        upper: (0..n - 1).map(off).collect(),
    }
}

/// Shift-invert iteration on `JL` with the generalized kernel deflated.
fn block_eigenpair(
    l1: &SectorOperator,
    l2: &SectorOperator,
    defl: &KernelDeflation,
    sigma0: f64,
) -> Result<BlockEigen> {
    let n = l1.len();
    let w = &l1.weight;
    let mut v1 = vec![1.0; n];
    let mut v2 = vec![1.0; n];
    let mut sigma = sigma0;
    let mut lam = f64::NAN;
    for stage in 0..2 {
        let mat = block_matrix(l1, l2, sigma);
        let lu = mat
            .factor()
            .ok_or_else(|| Error::no_conv("block factorisation", stage, f64::NAN))?;
        let iters = if stage == 0 { 300 } else { 20 };
        for _ in 0..iters {
            defl.project(l1, &mut v1, &mut v2);
            let rhs: Vec<[f64; 2]> = (0..n).map(|i| [w[i] * v1[i], w[i] * v2[i]]).collect();
            let mut y = lu.solve(&rhs);
            for _ in 0..REFINE {
                let y1: Vec<f64> = y.iter().map(|v| v[0]).collect();
                let y2: Vec<f64> = y.iter().map(|v| v[1]).collect();
                let a1 = l2.apply_dual(&y2);
                let a2 = l1.apply_dual(&y1);
                let r: Vec<[f64; 2]> = (0..n)
                    .map(|i| {
                        [
                            rhs[i][0] - (a1[i] - sigma * w[i] * y1[i]),
                            rhs[i][1] - (-a2[i] - sigma * w[i] * y2[i]),
                        ]
                    })
                    .collect();
                for (yi, d) in y.iter_mut().zip(lu.solve(&r)) {
                    yi[0] += d[0];
                    yi[1] += d[1];
                }
            }
            let y1: Vec<f64> = y.iter().map(|v| v[0]).collect();
            let y2: Vec<f64> = y.iter().map(|v| v[1]).collect();
            let zz = l1.inner(&v1, &v1) + l1.inner(&v2, &v2);
            let zy = l1.inner(&v1, &y1) + l1.inner(&v2, &y2);
            let next = sigma + zz / zy;
            let nrm = (l1.inner(&y1, &y1) + l1.inner(&y2, &y2)).sqrt();
            v1 = y1.iter().map(|x| x / nrm).collect();
            v2 = y2.iter().map(|x| x / nrm).collect();
            let done = (next - lam).abs() < 1e-14 * next.abs();
            lam = next;
            if done {
                break;
            }
        }
        if !lam.is_finite() {
            break;
        }
        sigma = lam * (1.0 + 1e-10);
    }
    let residual = jl_residual(l1, l2, &v1, &v2, lam);
    Ok(BlockEigen {
        value: lam,
        v1,
        v2,
        residual,
    })
}

/// Real eigenvalue pair `±e0` of `JL` with `JL(v1, v2) = (L2 v2, -L1 v1)`.
///
/// The operators are built on the discrete ground state, so the discrete
/// `L2` has an exact kernel.
pub fn dichotomy_eigenpair(profile: &GroundStateProfile) -> Result<Dichotomy> {
    let p = profile.params.p();
    let qh = discrete_ground_state(profile)?;
    let l1 = assemble_sector_with(profile, 0, p + 1.0, &qh)?;
    let l2 = assemble_sector_with(profile, 0, 1.0, &qh)?;
    let q = l1.to_reduced(&qh);
    dichotomy_from(&l1, &l2, &q)
}

/// Dichotomy pair for given `L1`, `L2` whose `L2` kernel is `q` (reduced).
pub fn dichotomy_from(l1: &SectorOperator, l2: &SectorOperator, q: &[f64]) -> Result<Dichotomy> {
    let defl = KernelDeflation::new(l1, q);
    let mut best: Option<BlockEigen> = None;
    let mut last_res = f64::NAN;
    for k in 0..8 {
        let sigma = 2f64.powi(k);
        let b = block_eigenpair(l1, l2, &defl, sigma)?;
        last_res = b.residual;
        if b.value > 1e-6 && b.residual < 1e-5 {
            best = Some(b);
            break;
        }
    }
    let BlockEigen {
        value: e0,
        mut v1,
        mut v2,
        ..
    } = best.ok_or_else(|| Error::no_conv("dichotomy eigenvalue", 8, last_res))?;
    let e0_composed = composed_eigenvalue(l1, l2, e0 * e0 * (1.0 + 1e-6), &v1)
        .ok()
        .filter(|x| *x > 0.0)
        .map(f64::sqrt);
    // sign convention: v1 positive near the origin
    if v1[0] < 0.0 {
        v1.iter_mut().for_each(|x| *x = -*x);
        v2.iter_mut().for_each(|x| *x = -*x);
    }
    let pairing = |a1: &[f64], a2: &[f64], b1: &[f64], b2: &[f64]| {
        l1.area * (dot(&l1.apply_dual(a1), b1) + dot(&l2.apply_dual(a2), b2))
    };
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<f64>>();
    let n0 = pairing(&v1, &v2, &v1, &neg(&v2));
    let s = 1.0 / n0.abs().sqrt();
    let vp1: Vec<f64> = v1.iter().map(|x| s * x).collect();
    let vp2: Vec<f64> = v2.iter().map(|x| s * x).collect();
    let flip = if n0 < 0.0 { -1.0 } else { 1.0 };
    let vm1: Vec<f64> = vp1.iter().map(|x| flip * x).collect();
    let vm2: Vec<f64> = vp2.iter().map(|x| -flip * x).collect();
    let normalization = pairing(&vp1, &vp2, &vm1, &vm2);
    let residual_plus = jl_residual(l1, l2, &vp1, &vp2, e0);
    let residual_minus = jl_residual(l1, l2, &vm1, &vm2, -e0);
    let degeneracy = (pairing(&vp1, &vp2, &vp1, &vp2), pairing(&vm1, &vm2, &vm1, &vm2));
    Ok(Dichotomy {
        e0,
        e0_composed,
        vplus: (vp1, vp2),
        vminus: (vm1, vm2),
        normalization,
        residual_plus,
        residual_minus,
        degeneracy,
    })
}

/// `||L2 Q||/||Q||` and `||L1 Q1 + 2Q||/||Q||`.
pub fn kernel_residuals(profile: &GroundStateProfile) -> Result<BTreeMap<String, f64>> {
    let p = profile.params.p();
    let l1 = assemble_sector(profile, 0, p + 1.0)?;
    let l2 = assemble_sector(profile, 0, 1.0)?;
    let pv = profile.reduced();
    let p1 = profile.reduced_q1();
    let qn = l1.norm(&pv);
    let mut out = BTreeMap::new();
    out.insert("L2Q".to_string(), l2.dual_norm(&l2.apply_dual(&pv)) / qn);
    let r: Vec<f64> = l1
        .apply_dual(&p1)
        .iter()
        .zip(&pv)
        .zip(&l1.weight)
        .map(|((k, q), w)| k + 2.0 * w * q)
        .collect();
    out.insert("L1Q1+2Q".to_string(), l1.dual_norm(&r) / qn);
    Ok(out)
}

/// `(<L1 Q1, Q1>, (d - 4/p) mass, relative error)`.
pub fn q1_quadratic_identity(profile: &GroundStateProfile) -> Result<(f64, f64, f64)> {
    let params = &profile.params;
    let l1 = assemble_sector(profile, 0, params.p() + 1.0)?;
    let p1 = profile.reduced_q1();
    let pv = profile.reduced();
    let lhs = l1.form(&p1);
    let mass = l1.inner(&pv, &pv);
    let rhs = (params.dim() - 4.0 / params.p()) * mass;
    Ok((lhs, rhs, (lhs - rhs).abs() / mass))
}

/// `(<L1 Q, Q>, -p int Q^{p+2})` with the same discrete quadrature.
pub fn l1_q_form(profile: &GroundStateProfile) -> Result<(f64, f64)> {
    let params = &profile.params;
    let p = params.p();
    let l1 = assemble_sector(profile, 0, p + 1.0)?;
    let pv = profile.reduced();
    let lhs = l1.form(&pv);
    let qp2: Vec<f64> = profile.q.iter().zip(&pv).map(|(q, v)| q.abs().powf(p) * v).collect();
    Ok((lhs, -p * l1.inner(&qp2, &pv)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridInfo {
    #[serde(rename = "N")]
    pub n: usize,
    pub r_min: f64,
    pub r_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Negative eigenvalues of L1 in the radial sector.
    pub neg_count: usize,
    /// Lowest eigenvalues of L1 (ℓ = 0).
    pub eigenvalues: Vec<f64>,
    pub l2_eigenvalues: Vec<f64>,
    pub l2_kernel_cosine: f64,
    /// Lowest eigenvalues of the L1-type operator in sector ℓ = 1.
    pub ell1_eigenvalues: Vec<f64>,
    pub coercivity: BTreeMap<String, f64>,
    pub kernel_residuals: BTreeMap<String, f64>,
    pub q1_identity: (f64, f64, f64),
    pub e0: f64,
    pub e0_composed: Option<f64>,
    pub normalization: f64,
    pub dichotomy_residuals: (f64, f64),
    pub degeneracy: (f64, f64),
    pub grid: GridInfo,
}

/// Everything the spectral checks need, plus the eigenvectors.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub report: SpectrumReport,
    pub l1_modes: Vec<EigenPair>,
    pub l2_modes: Vec<EigenPair>,
    pub dichotomy: Dichotomy,
}

pub fn analyze(profile: &GroundStateProfile, count: usize) -> Result<Spectrum> {
    let p = profile.params.p();
    let l1 = assemble_sector(profile, 0, p + 1.0)?;
    let l2 = assemble_sector(profile, 0, 1.0)?;
    let l1b = assemble_sector(profile, 1, p + 1.0)?;
    let l1_modes = eig_lowest(&l1, count)?;
    let l2_modes = eig_lowest(&l2, count)?;
    let ell1 = eig_lowest(&l1b, count)?;
    let pv = profile.reduced();
    let cosine = l2.inner(&l2_modes[0].vector, &pv).abs() / (l2.norm(&l2_modes[0].vector) * l2.norm(&pv));
    let c = constraint_la1_q(profile)?;
    let mut coercivity = BTreeMap::new();
    coercivity.insert("L1".to_string(), coercivity_min(&l1, &c)?.value);
    coercivity.insert("L2".to_string(), coercivity_min(&l2, &c)?.value);
    coercivity.insert("L1_unconstrained".to_string(), l1_modes[0].value);
    let dich = dichotomy_eigenpair(profile)?;
    let report = SpectrumReport {
        neg_count: negative_count(&l1),
        eigenvalues: l1_modes.iter().map(|e| e.value).collect(),
        l2_eigenvalues: l2_modes.iter().map(|e| e.value).collect(),
        l2_kernel_cosine: cosine,
        ell1_eigenvalues: ell1.iter().map(|e| e.value).collect(),
        coercivity,
        kernel_residuals: kernel_residuals(profile)?,
        q1_identity: q1_quadratic_identity(profile)?,
        e0: dich.e0,
        e0_composed: dich.e0_composed,
        normalization: dich.normalization,
        dichotomy_residuals: (dich.residual_plus, dich.residual_minus),
        degeneracy: dich.degeneracy,
        grid: GridInfo {
            n: profile.grid.len(),
            r_min: profile.grid.r_min(),
            r_max: profile.grid.r_max(),
        },
    };
    Ok(Spectrum {
        report,
        l1_modes,
        l2_modes,
        dichotomy: dich,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn setup(coeff: f64, ell: u32) -> SectorOperator {
        let params = Params::new(3, 2.0, -0.1).unwrap();
        let grid = GridSpec::with_nodes(1e-4, 20.0, 801).unwrap().build().unwrap();
        let q: Vec<f64> = grid.r().iter().map(|r| 3.0 * (-r * r / 2.0).exp()).collect();
        SectorOperator::from_grid(&grid, &params, ell, coeff, &q).unwrap()
    }

    #[test]
    fn free_operator_is_bounded_below_by_one() {
        for ell in [0, 1] {
            let op = setup(0.0, ell);
            assert_eq!(op.matrix.count_below(1.0, &op.weight), 0);
            let ev = eig_lowest(&op, 1).unwrap();
            assert!(ev[0].value > 1.0);
        }
    }

    #[test]
    fn flux_form_matches_matrix() {
        let op = setup(3.0, 0);
        let v: Vec<f64> = op.r.iter().map(|r| (1.0 + r).recip()).collect();
        let a = op.apply_dual(&v);
        let b = op.matrix.apply(&v);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()), "{x} {y}");
        }
    }

    #[test]
    fn weighted_symmetry() {
        let op = setup(3.0, 0);
        let u: Vec<f64> = (0..op.len()).map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0) * (-op.r[i]).exp()).collect();
        let v: Vec<f64> = (0..op.len()).map(|i| ((i * 53 % 97) as f64 / 48.0 - 1.0) * (-op.r[i]).exp()).collect();
        let au = op.apply(&u);
        let av = op.apply(&v);
        let lhs = op.inner(&au, &v);
        let rhs = op.inner(&u, &av);
        let scale = op.norm(&au) * op.norm(&v) + op.norm(&u) * op.norm(&av);
        assert!((lhs - rhs).abs() <= 1e-12 * scale, "{lhs} {rhs}");
    }

    #[test]
    fn eigenpairs_are_orthonormal_and_sorted() {
        let op = setup(3.0, 0);
        let ev = eig_lowest(&op, 3).unwrap();
        assert!(ev[0].value < 0.0);
        assert!(ev.windows(2).all(|w| w[0].value < w[1].value));
        for (i, a) in ev.iter().enumerate() {
            for (j, b) in ev.iter().enumerate() {
                let ip = op.inner(&a.vector, &b.vector);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-8, "{i} {j} {ip}");
            }
            assert_eq!(op.matrix.count_below(a.value + 1e-9, &op.weight), i + 1);
        }
    }

    #[test]
    fn constrained_minimum_sits_between_eigenvalues() {
        let op = setup(3.0, 0);
        let ev = eig_lowest(&op, 2).unwrap();
        let c: Vec<f64> = op.r.iter().zip(&op.weight).map(|(r, w)| w * (-r).exp()).collect();
        let m = coercivity_min(&op, &c).unwrap();
        assert!(m.value > ev[0].value && m.value <= ev[1].value);
        // the minimiser satisfies the constraint
        assert!(dot(&m.vector, &c).abs() < 1e-8 * op.norm(&m.vector));
        // constraint along the first mode leaves the second eigenvalue
        let c1: Vec<f64> = ev[0].vector.iter().zip(&op.weight).map(|(v, w)| v * w).collect();
        let m1 = coercivity_min(&op, &c1).unwrap();
        assert!((m1.value - ev[1].value).abs() < 1e-6 * ev[1].value.abs().max(1.0));
    }

    #[test]
    fn unsupported_sector() {
        let params = Params::new(3, 2.0, -0.1).unwrap();
        let grid = GridSpec::with_nodes(1e-4, 20.0, 101).unwrap().build().unwrap();
        let q = vec![0.0; grid.len()];
        assert!(SectorOperator::from_grid(&grid, &params, 2, 1.0, &q).is_err());
        assert!(SectorOperator::from_grid(&grid, &params, 0, 1.0, &q[1..]).is_err());
    }
}
