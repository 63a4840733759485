//! Radial grids and the two quadratures built on them.
//!
//! The grid is geometric on `[r_min, 1]` and uniform on `[1, r_max]`, with
//! matching spacing at `r = 1`. Both parts have an even number of intervals
//! so that composite Simpson applies on each, and refining doubles both
//! counts, which keeps the coarse nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub r_min: f64,
    pub r_max: f64,
    /// Intervals on the geometric part.
    pub n_geo: usize,
    /// Intervals on the uniform part.
    pub n_uni: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::with_nodes(1e-6, 30.0, 8000).expect("default grid")
    }
}

impl GridSpec {
    /// Splits roughly `n` nodes so the spacings agree at `r = 1`.
    pub fn with_nodes(r_min: f64, r_max: f64, n: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_min < 1.0 && r_max > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "grid needs 0 < r_min < 1 < r_max, got [{r_min}, {r_max}]"
            )));
        }
        if n < 9 {
            return Err(Error::InvalidArgument(format!("grid needs at least 9 nodes, got {n}")));
        }
        let intervals = (n - 1) as f64;
        let lg = (1.0 / r_min).ln();
        let share = lg / (lg + (r_max - 1.0));
        let even = |x: f64| (((x / 2.0).round() as usize).max(2)) * 2;
        let n_geo = even(intervals * share);
        let n_uni = even(intervals - n_geo as f64);
        Ok(GridSpec {
            r_min,
            r_max,
            n_geo,
            n_uni,
        })
    }

    pub fn nodes(&self) -> usize {
        self.n_geo + self.n_uni + 1
    }

    /// Halves every spacing.
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            n_geo: 2 * self.n_geo,
            n_uni: 2 * self.n_uni,
            ..*self
        }
    }

    pub fn build(&self) -> Result<RadialGrid> {
        if self.n_geo % 2 != 0 || self.n_uni % 2 != 0 || self.n_geo == 0 || self.n_uni == 0 {
            return Err(Error::InvalidArgument(
                "grid interval counts must be even and positive".into(),
            ));
        }
        let mut r = Vec::with_capacity(self.nodes());
        let lmin = self.r_min.ln();
        for i in 0..self.n_geo {
            r.push((lmin * (1.0 - i as f64 / self.n_geo as f64)).exp());
        }
        r[0] = self.r_min;
        let h = (self.r_max - 1.0) / self.n_uni as f64;
        for i in 0..self.n_uni {
            r.push(1.0 + h * i as f64);
        }
        r.push(self.r_max);
        Ok(RadialGrid { r, spec: *self })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    r: Vec<f64>,
    spec: GridSpec,
}

impl RadialGrid {
    /// Rebuilds a grid from stored radii, which must match the spec.
    pub fn from_radii(r: Vec<f64>, spec: GridSpec) -> Result<Self> {
        let g = spec.build()?;
        if g.r.len() != r.len() {
            return Err(Error::Format(format!(
                "grid has {} radii, spec implies {}",
                r.len(),
                g.r.len()
            )));
        }
        for (a, b) in g.r.iter().zip(&r) {
            if (a - b).abs() > 1e-12 * b.abs() {
                return Err(Error::Format(format!("radius {b} does not match the grid spec")));
            }
        }
        Ok(RadialGrid { r, spec })
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }
    pub fn len(&self) -> usize {
        self.r.len()
    }
    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
    pub fn spec(&self) -> GridSpec {
        self.spec
    }
    pub fn r_min(&self) -> f64 {
        self.r[0]
    }
    pub fn r_max(&self) -> f64 {
        *self.r.last().unwrap()
    }
    /// Index of the node at `r = 1`.
    pub fn seam(&self) -> usize {
        self.spec.n_geo
    }

    /// Index of the interval containing `x` (clamped to the grid).
    pub fn locate(&self, x: f64) -> usize {
        match self.r.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.r.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.r.len() - 2),
        }
    }

    /// Cell edges `r_{i+1/2}` (midpoints), length `N-1`.
    pub fn edges(&self) -> Vec<f64> {
        self.r.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Box weights `int_cell r^{k-1} dr` with cells bounded by the edges;
    /// the first cell starts at 0, the last ends at `r_max`.
    pub fn box_weights(&self, k: f64) -> Vec<f64> {
        let e = self.edges();
        let n = self.r.len();
        let mut w = Vec::with_capacity(n);
        let m = |x: f64| x.powf(k) / k;
        for i in 0..n {
            let lo = if i == 0 { 0.0 } else { m(e[i - 1]) };
            let hi = if i == n - 1 { m(self.r[n - 1]) } else { m(e[i]) };
            w.push(hi - lo);
        }
        w
    }

    /// Box weights for `int_cell r^{k-1} r^{-s} dr` (requires `k > s`).
    pub fn box_weights_singular(&self, k: f64, s: f64) -> Vec<f64> {
        self.box_weights(k - s)
    }

    /// Flux coefficients `r_{i+1/2}^{k-1} / (r_{i+1} - r_i)`.
    pub fn flux(&self, k: f64) -> Vec<f64> {
        self.r
            .windows(2)
            .map(|w| (0.5 * (w[0] + w[1])).powf(k - 1.0) / (w[1] - w[0]))
            .collect()
    }

    /// High-order integral of sampled `f(r_i)` over `(0, inf)`.
    ///
    /// Composite Simpson in `ln r` on the geometric part and in `r` on the
    /// uniform part. Below `r_min` the integrand is continued as a power law
    /// fitted to the first two nodes; beyond `r_max` as an exponential.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.r.len());
        let ng = self.spec.n_geo;
        let nu = self.spec.n_uni;
        let r = &self.r;
        let simpson = |vals: &dyn Fn(usize) -> f64, n: usize, h: f64| {
            let mut s = vals(0) + vals(n);
            for i in 1..n {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * vals(i);
            }
            s * h / 3.0
        };
        let dxi = -self.spec.r_min.ln() / ng as f64;
        let geo = simpson(&|i| f[i] * r[i], ng, dxi);
        let h = (self.spec.r_max - 1.0) / nu as f64;
        let uni = simpson(&|i| f[ng + i], nu, h);
        // power law below r_min
        let mut inner = 0.0;
        if f[0] != 0.0 && f[1] != 0.0 && (f[0] > 0.0) == (f[1] > 0.0) {
            let kappa = (f[1] / f[0]).ln() / (r[1] / r[0]).ln();
            if kappa > -1.0 {
                inner = f[0] * r[0] / (kappa + 1.0);
            }
        }
        let n = r.len();
        let mut outer = 0.0;
        let (fa, fb) = (f[n - 2], f[n - 1]);
        if fa != 0.0 && fb != 0.0 && (fa > 0.0) == (fb > 0.0) && fb.abs() < fa.abs() {
            let lam = (fa / fb).ln() / (r[n - 1] - r[n - 2]);
            outer = fb / lam;
        }
        inner + geo + uni + outer
    }

    /// Box-rule integral `sum_i w_i f_i` with weights for dimension `k`.
    pub fn integrate_box(&self, weights: &[f64], f: &[f64]) -> f64 {
        weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }
}
