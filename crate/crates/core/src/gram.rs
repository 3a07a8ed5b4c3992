//! Normal-equation accumulators used to score many candidate supports cheaply.
//!
//! Rows enter through their design vector `x_i` and a shifted target
//! `t_i = y_i - x_i' beta_ref`. Working with residuals of a reference fit
//! keeps `sum t_i^2` on the scale of the objective, which limits cancellation
//! in `rss = t't - b' G^{-1} b`. Every score produced here is screening only;
//! accepted supports are re-solved with the pivoted QR in `linalg`.

use crate::linalg::Dataset;

const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct Gram {
    p: usize,
    g: Vec<f64>,
    b: Vec<f64>,
    tt: f64,
    rows: usize,
}

impl Gram {
    pub fn new(p: usize) -> Self {
        Self { p, g: vec![0.0; p * p], b: vec![0.0; p], tt: 0.0, rows: 0 }
    }

    /// Accumulates the rows in `rows` with targets `t`.
    pub fn from_rows(data: &Dataset, t: &[f64], rows: impl IntoIterator<Item = usize>) -> Self {
        let mut gram = Self::new(data.width());
        for i in rows {
            gram.add(data.design_row(i), t[i]);
        }
        gram
    }

    pub fn add(&mut self, x: &[f64], t: f64) {
        self.update(x, t, 1.0);
        self.rows += 1;
    }

    pub fn remove(&mut self, x: &[f64], t: f64) {
        self.update(x, t, -1.0);
        self.rows -= 1;
    }

    #[inline]
    fn update(&mut self, x: &[f64], t: f64, sign: f64) {
        let p = self.p;
        for a in 0..p {
            let sa = sign * x[a];
            for c in 0..=a {
                self.g[a * p + c] += sa * x[c];
            }
            self.b[a] += sa * t;
        }
        self.tt += sign * t * t;
    }

    /// Adds `c * x` to the right-hand side only (a linear term in the
    /// objective that does not enter the normal matrix).
    pub fn add_linear(&mut self, x: &[f64], c: f64) {
        for (bj, xj) in self.b.iter_mut().zip(x) {
            *bj += c * xj;
        }
    }

    /// Lower Cholesky factor of the normal matrix written into `l`.
    fn factor(&self, l: &mut Vec<f64>) -> bool {
        let p = self.p;
        if self.rows < p {
            return false;
        }
        l.clear();
        l.extend_from_slice(&self.g);
        let scale = (0..p).map(|a| self.g[a * p + a]).fold(0.0, f64::max);
        if scale <= 0.0 {
            return false;
        }
        for j in 0..p {
            let mut s = l[j * p + j];
            for c in 0..j {
                s -= l[j * p + c] * l[j * p + c];
            }
            if s <= PIVOT_TOLERANCE * scale {
                return false;
            }
            let d = s.sqrt();
            l[j * p + j] = d;
            for a in j + 1..p {
                let mut s = l[a * p + j];
                for c in 0..j {
                    s -= l[a * p + c] * l[j * p + c];
                }
                l[a * p + j] = s / d;
            }
        }
        true
    }

    /// Minimal residual sum of squares of the accumulated rows, or `None`
    /// when the normal matrix is numerically singular.
    pub fn rss(&self, scratch: &mut Vec<f64>) -> Option<f64> {
        if !self.factor(scratch) {
            return None;
        }
        let p = self.p;
        let l = scratch.as_slice();
        // ||L^{-1} b||^2
        let mut buf = [0.0f64; 16];
        let mut heap = Vec::new();
        let z: &mut [f64] = if p <= buf.len() {
            &mut buf[..p]
        } else {
            heap.resize(p, 0.0);
            &mut heap
        };
        let mut explained = 0.0;
        for a in 0..p {
            let mut s = self.b[a];
            for c in 0..a {
                s -= l[a * p + c] * z[c];
            }
            z[a] = s / l[a * p + a];
            explained += z[a] * z[a];
        }
        Some((self.tt - explained).max(0.0))
    }

    /// Factorization of the normal matrix, or `None` when it is singular.
    pub fn cholesky(&self) -> Option<Cholesky> {
        let mut l = Vec::new();
        self.factor(&mut l).then_some(Cholesky { p: self.p, l })
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn target_ss(&self) -> f64 {
        self.tt
    }

    /// `G^{-1} b`, or `None` when the normal matrix is singular.
    pub fn solve(&self) -> Option<Vec<f64>> {
        let mut l = Vec::new();
        if !self.factor(&mut l) {
            return None;
        }
        let p = self.p;
        let mut z = self.b.clone();
        for a in 0..p {
            for c in 0..a {
                z[a] -= l[a * p + c] * z[c];
            }
            z[a] /= l[a * p + a];
        }
        for a in (0..p).rev() {
            for c in a + 1..p {
                z[a] -= l[c * p + a] * z[c];
            }
            z[a] /= l[a * p + a];
        }
        Some(z)
    }
}

/// Lower Cholesky factor `G = L L'`.
#[derive(Debug, Clone)]
pub(crate) struct Cholesky {
    p: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Solves `L z = x` in place and returns `||z||^2`.
    pub fn forward(&self, z: &mut [f64]) -> f64 {
        let (p, l) = (self.p, &self.l);
        let mut norm = 0.0;
        for a in 0..p {
            for c in 0..a {
                z[a] -= l[a * p + c] * z[c];
            }
            z[a] /= l[a * p + a];
            norm += z[a] * z[a];
        }
        norm
    }

    /// Solves `L' z = w` in place.
    pub fn backward(&self, z: &mut [f64]) {
        let (p, l) = (self.p, &self.l);
        for a in (0..p).rev() {
            for c in a + 1..p {
                z[a] -= l[c * p + a] * z[c];
            }
            z[a] /= l[a * p + a];
        }
    }

    /// `x' G^{-1} x`.
    pub fn leverage(&self, x: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        scratch.extend_from_slice(x);
        self.forward(scratch)
    }
}
