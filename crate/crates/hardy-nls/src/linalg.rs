//! Small dense-band linear algebra: tridiagonal solves, Sturm counts and a
//! general banded LU with partial pivoting.

use std::ops::{Add, Div, Mul, Sub};

/// Symmetric tridiagonal matrix: `diag[i]`, `off[i]` couples `i` and `i+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// `x^T A x`.
    pub fn form(&self, x: &[f64]) -> f64 {
        dot(x, &self.apply(x))
    }

    /// `A - sigma diag(w)`.
    pub fn shifted(&self, sigma: f64, w: &[f64]) -> SymTridiag {
        SymTridiag {
            diag: self.diag.iter().zip(w).map(|(d, w)| d - sigma * w).collect(),
            off: self.off.clone(),
        }
    }

    /// Number of eigenvalues of the pencil `(A, diag(w))` below `sigma`.
    pub fn count_below(&self, sigma: f64, w: &[f64]) -> usize {
        let mut count = 0;
        let mut d = 0.0;
        for i in 0..self.len() {
            let a = self.diag[i] - sigma * w[i];
            d = if i == 0 {
                a
            } else {
                let prev = if d == 0.0 { f64::EPSILON * self.diag[i - 1].abs().max(1e-300) } else { d };
                a - self.off[i - 1] * self.off[i - 1] / prev
            };
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let sub: Vec<f64> = self.off.clone();
        thomas(&sub, &self.diag, &self.off, rhs)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Thomas algorithm for `sub[i-1] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]`.
///
/// No pivoting; fine for the diagonally dominant or definite systems used
/// here. Generic so the same code serves real and complex systems.
pub fn thomas<T>(sub: &[T], diag: &[T], sup: &[T], rhs: &[T]) -> Vec<T>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<Output = T> + Div<Output = T>,
{
    let n = diag.len();
    assert!(n > 0 && rhs.len() == n && sub.len() + 1 == n && sup.len() + 1 == n);
    // c[i] multiplies x[i+1], so only n-1 of them exist
    let mut c = Vec::with_capacity(n - 1);
    let mut d = Vec::with_capacity(n);
    if n > 1 {
        c.push(sup[0] / diag[0]);
    }
    d.push(rhs[0] / diag[0]);
    for i in 1..n {
        let m = diag[i] - sub[i - 1] * c[i - 1];
        if i + 1 < n {
            c.push(sup[i] / m);
        }
        d.push((rhs[i] - sub[i - 1] * d[i - 1]) / m);
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] = x[i] - c[i] * x[i + 1];
    }
    x
}

/// General band matrix with `kl` sub- and `ku` super-diagonals, stored
/// row-wise with room for the fill-in of partial pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = kl + ku + kl + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    // column j of row i lives at offset j + kl - i
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku + self.kl {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "({i}, {j}) outside the band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "({i}, {j}) outside the band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            *yi = (lo..=hi).map(|j| self.get(i, j) * x[j]).sum();
        }
        y
    }

    /// In-place LU with partial pivoting.
    pub fn factor(mut self) -> Option<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let uw = self.ku + self.kl;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return None;
            }
            piv[k] = p;
            let jmax = (k + uw).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.get(k, j);
                    let b = self.get(p, j);
                    let ka = self.idx(k, j);
                    let kb = self.idx(p, j);
                    self.data[ka] = b;
                    self.data[kb] = a;
                }
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last {
                let ii = self.idx(i, k);
                let m = self.data[ii] / pivot;
                self.data[ii] = m;
                if m != 0.0 {
                    for j in k + 1..=jmax {
                        let kj = self.idx(k, j);
                        let ij = self.idx(i, j);
                        self.data[ij] -= m * self.data[kj];
                    }
                }
            }
        }
        Some(BandLu { m: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.m.n;
        let kl = self.m.kl;
        let uw = self.m.ku + self.m.kl;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let last = (k + kl).min(n - 1);
            for i in k + 1..=last {
                x[i] -= self.m.data[self.m.idx(i, k)] * x[k];
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + uw).min(n - 1);
            let mut s = x[k];
            for j in k + 1..=jmax {
                s -= self.m.data[self.m.idx(k, j)] * x[j];
            }
            x[k] = s / self.m.data[self.m.idx(k, k)];
        }
        x
    }
}

type M2 = [[f64; 2]; 2];

fn m2_mul(a: &M2, b: &M2) -> M2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

fn m2_vec(a: &M2, x: [f64; 2]) -> [f64; 2] {
    [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
}

fn m2_inv(a: &M2) -> Option<M2> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

/// Block tridiagonal matrix with 2x2 blocks: row `i` reads
/// `lower[i-1] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`.
#[derive(Debug, Clone)]
pub struct Block2Tridiag {
    pub lower: Vec<M2>,
    pub diag: Vec<M2>,
    pub upper: Vec<M2>,
}

impl Block2Tridiag {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = m2_vec(&self.diag[i], x[i]);
                if i > 0 {
                    let t = m2_vec(&self.lower[i - 1], x[i - 1]);
                    y = [y[0] + t[0], y[1] + t[1]];
                }
                if i + 1 < n {
                    let t = m2_vec(&self.upper[i], x[i + 1]);
                    y = [y[0] + t[0], y[1] + t[1]];
                }
                y
            })
            .collect()
    }

    /// Block Thomas factorisation, no pivoting between blocks.
    pub fn factor(&self) -> Option<Block2Lu> {
        let n = self.len();
        let mut inv = Vec::with_capacity(n);
        let mut cp: Vec<M2> = Vec::with_capacity(n);
        for i in 0..n {
            let mut m = self.diag[i];
            if i > 0 {
                let t = m2_mul(&self.lower[i - 1], &cp[i - 1]);
                for r in 0..2 {
                    for c in 0..2 {
                        m[r][c] -= t[r][c];
                    }
                }
            }
            let mi = m2_inv(&m)?;
            if i + 1 < n {
                cp.push(m2_mul(&mi, &self.upper[i]));
            }
            inv.push(mi);
        }
        Some(Block2Lu {
            lower: self.lower.clone(),
            inv,
            cp,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Block2Lu {
    lower: Vec<M2>,
    inv: Vec<M2>,
    cp: Vec<M2>,
}

impl Block2Lu {
    pub fn solve(&self, b: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let n = self.inv.len();
        let mut d: Vec<[f64; 2]> = Vec::with_capacity(n);
        for i in 0..n {
            let mut r = b[i];
            if i > 0 {
                let t = m2_vec(&self.lower[i - 1], d[i - 1]);
                r = [r[0] - t[0], r[1] - t[1]];
            }
            d.push(m2_vec(&self.inv[i], r));
        }
        for i in (0..n - 1).rev() {
            let t = m2_vec(&self.cp[i], d[i + 1]);
            d[i] = [d[i][0] - t[0], d[i][1] - t[1]];
        }
        d
    }
}
