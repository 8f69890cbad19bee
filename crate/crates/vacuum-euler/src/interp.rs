//! Cubic Hermite interpolation on nonuniform grids.
//!
//! Node slopes come from five-point finite-difference stencils (exact through
//! quartics). The default constructor then applies a Fritsch–Carlson-style
//! limiter that bounds each slope by the adjacent secants: on locally
//! monotone data the slope is confined to `[0, 3*min(secants)]` of the shared
//! sign, which keeps the interpolant monotone per interval (and therefore
//! sign-preserving near the vacuum interface); at data extrema the magnitude
//! is merely capped by `3*max(secants)` so smooth interior maxima keep their
//! fourth-order accuracy. [`CubicInterpolant::new_unlimited`] skips the
//! limiter, which makes evaluation exactly linear in the data — the smoothing
//! operator requires that.
//!
//! Slopes are computed from local differences `y - y_i` and evaluation is
//! cancellation-structured (`y_i + s*(...)`), so constant data reproduces
//! bit-exactly no matter how many times a field is pushed through resampling.

use crate::calculus::fd_weights;

pub struct CubicInterpolant<'a> {
    x: &'a [f64],
    y: &'a [f64],
    d: Vec<f64>,
}

fn stencil_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    for (i, di) in d.iter_mut().enumerate() {
        let lo = i.saturating_sub(2).min(n - 5);
        let w = fd_weights(&x[lo..lo + 5], x[i], 1);
        // differencing against y[i] makes constant data give slope 0 exactly
        *di = (0..5).map(|k| w[k] * (y[lo + k] - y[i])).sum();
    }
    d
}

impl<'a> CubicInterpolant<'a> {
    /// Builds the interpolant. `x` must be strictly increasing with at least
    /// 4 nodes and `y` the matching samples (checked by callers that own
    /// validated grids; debug-asserted here).
    pub fn new(x: &'a [f64], y: &'a [f64]) -> Self {
        debug_assert!(x.len() >= 4 && x.len() == y.len());
        let n = x.len();
        let mut d = stencil_slopes(x, y);
        // Secant-based limiting.
        let secant = |i: usize| (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
        for (i, di) in d.iter_mut().enumerate() {
            let (sl, sr) = (
                if i > 0 { Some(secant(i - 1)) } else { None },
                if i + 1 < n { Some(secant(i)) } else { None },
            );
            *di = match (sl, sr) {
                (Some(a), Some(b)) if a > 0.0 && b > 0.0 => di.clamp(0.0, 3.0 * a.min(b)),
                (Some(a), Some(b)) if a < 0.0 && b < 0.0 => di.clamp(3.0 * a.max(b), 0.0),
                (Some(a), Some(b)) => {
                    let cap = 3.0 * a.abs().max(b.abs());
                    di.clamp(-cap, cap)
                }
                (Some(a), None) | (None, Some(a)) => {
                    if a > 0.0 {
                        di.clamp(0.0, 3.0 * a)
                    } else if a < 0.0 {
                        di.clamp(3.0 * a, 0.0)
                    } else {
                        0.0
                    }
                }
                (None, None) => unreachable!(),
            };
        }
        CubicInterpolant { x, y, d }
    }

    /// Same stencil slopes without the limiter. Evaluation is then exactly
    /// linear in `y`, at the cost of possible over/undershoot on steep data.
    pub fn new_unlimited(x: &'a [f64], y: &'a [f64]) -> Self {
        debug_assert!(x.len() >= 4 && x.len() == y.len());
        let d = stencil_slopes(x, y);
        CubicInterpolant { x, y, d }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    fn eval_in(&self, i: usize, xq: f64) -> f64 {
        let h = self.x[i + 1] - self.x[i];
        let s = xq - self.x[i];
        let delta = (self.y[i + 1] - self.y[i]) / h;
        let c2 = (3.0 * delta - 2.0 * self.d[i] - self.d[i + 1]) / h;
        let c3 = (self.d[i] + self.d[i + 1] - 2.0 * delta) / (h * h);
        self.y[i] + s * (self.d[i] + s * (c2 + s * c3))
    }

    fn interval_of(&self, xq: f64) -> usize {
        match self.x.binary_search_by(|v| v.partial_cmp(&xq).unwrap()) {
            Ok(i) => i.min(self.x.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.x.len() - 2),
        }
    }

    /// Evaluates at one point; queries are clamped to the node range.
    pub fn eval(&self, xq: f64) -> f64 {
        let xq = xq.clamp(self.x[0], *self.x.last().unwrap());
        if xq == self.x[0] {
            return self.y[0];
        }
        self.eval_in(self.interval_of(xq), xq)
    }

    /// Evaluates at a nondecreasing sequence of points with a moving cursor.
    pub fn eval_sorted(&self, xs: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(xs.len());
        let mut i = 0usize;
        let last = self.x.len() - 2;
        for &xq in xs {
            let xq = xq.clamp(self.x[0], *self.x.last().unwrap());
            while i < last && self.x[i + 1] < xq {
                i += 1;
            }
            if xq == self.x[i] {
                out.push(self.y[i]);
            } else {
                out.push(self.eval_in(i, xq));
            }
        }
        out
    }

    /// Evaluates with zero extension outside the node range (used for the
    /// pressure head extended past the interface).
    pub fn eval_ext_zero(&self, xq: f64) -> f64 {
        if xq < self.x[0] || xq > *self.x.last().unwrap() {
            0.0
        } else {
            self.eval(xq)
        }
    }
}
