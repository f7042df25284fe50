//! Natural cubic spline with level-crossing and maximum search.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    m: Vec<f64>,
}

impl NaturalSpline {
    pub const MIN_POINTS: usize = 4;

    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
        }
        let n = x.len();
        if n < Self::MIN_POINTS {
            return Err(Error::InsufficientPoints { needed: Self::MIN_POINTS, got: n });
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(invalid("spline data must be finite"));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("spline abscissae must be strictly increasing"));
        }

        // Tridiagonal system for the interior second derivatives (Thomas algorithm).
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut upper = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            upper[i] = h[i + 1];
            rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
        }
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        for i in (0..k).rev() {
            let next = if i + 1 < k { m[i + 2] } else { 0.0 };
            m[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
        }
        Ok(NaturalSpline { x: x.to_vec(), y: y.to_vec(), m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    fn interval(&self, t: f64) -> usize {
        match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            p => (p - 1).min(self.x.len() - 2),
        }
    }

    /// Cubic coefficients of interval `i` in powers of `(t - x_i)`.
    fn coeffs(&self, i: usize) -> [f64; 4] {
        let h = self.x[i + 1] - self.x[i];
        let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.m[i], self.m[i + 1]);
        [y0, (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0, m0 / 2.0, (m1 - m0) / (6.0 * h)]
    }

    fn eval_in(&self, i: usize, t: f64) -> f64 {
        let [a, b, c, d] = self.coeffs(i);
        let s = t - self.x[i];
        a + s * (b + s * (c + s * d))
    }

    /// Value at `t`; outside the knots the end cubics are extended.
    pub fn eval(&self, t: f64) -> f64 {
        self.eval_in(self.interval(t), t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let [_, b, c, d] = self.coeffs(i);
        let s = t - self.x[i];
        b + s * (2.0 * c + 3.0 * s * d)
    }

    /// Interior stationary points of interval `i`, sorted.
    fn critical_points(&self, i: usize) -> Vec<f64> {
        let [_, b, c, d] = self.coeffs(i);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let mut out = Vec::new();
        // 3d s^2 + 2c s + b = 0
        let (qa, qb, qc) = (3.0 * d, 2.0 * c, b);
        let scale = qa.abs().max(qb.abs()).max(qc.abs());
        if scale == 0.0 {
            return out;
        }
        if qa.abs() <= 1e-14 * scale {
            if qb != 0.0 {
                out.push(-qc / qb);
            }
        } else {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let q = -0.5 * (qb + qb.signum() * disc.sqrt());
                if q != 0.0 {
                    out.push(q / qa);
                    out.push(qc / q);
                } else {
                    out.push(0.0);
                }
            }
        }
        let mut pts: Vec<f64> = out.into_iter().map(|s| x0 + s).filter(|&t| t > x0 && t < x1).collect();
        pts.sort_by(f64::total_cmp);
        pts
    }

    /// All `t` in the knot span with `s(t) = level`, ascending.
    ///
    /// Each interval is split at its stationary points into monotone pieces,
    /// and every sign change is bisected to round-off.
    pub fn roots(&self, level: f64) -> Vec<f64> {
        let mut roots: Vec<f64> = Vec::new();
        let push = |r: f64, roots: &mut Vec<f64>| {
            if roots.last().is_none_or(|&last| r - last > 1e-12 * (1.0 + r.abs())) {
                roots.push(r);
            }
        };
        for i in 0..self.x.len() - 1 {
            let mut edges = vec![self.x[i]];
            edges.extend(self.critical_points(i));
            edges.push(self.x[i + 1]);
            for w in edges.windows(2) {
                let (mut lo, mut hi) = (w[0], w[1]);
                let mut flo = self.eval_in(i, lo) - level;
                let fhi = self.eval_in(i, hi) - level;
                if flo == 0.0 {
                    push(lo, &mut roots);
                    continue;
                }
                if fhi == 0.0 {
                    push(hi, &mut roots);
                    continue;
                }
                if flo.signum() == fhi.signum() {
                    continue;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let fm = self.eval_in(i, mid) - level;
                    if fm == 0.0 {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if fm.signum() == flo.signum() {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                push(0.5 * (lo + hi), &mut roots);
            }
        }
        roots
    }

    /// Location and value of the largest spline value on the knot span.
    pub fn argmax(&self) -> (f64, f64) {
        let mut best = (self.x[0], self.y[0]);
        for i in 0..self.x.len() - 1 {
            for t in self.critical_points(i).into_iter().chain([self.x[i + 1]]) {
                let v = self.eval_in(i, t);
                if v > best.1 {
                    best = (t, v);
                }
            }
        }
        best
    }
}
