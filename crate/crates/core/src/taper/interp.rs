//! Shape-preserving piecewise cubic Hermite interpolation (Fritsch–Carlson).

use alloc::vec::Vec;

#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneCubic {
    /// `x` must be strictly increasing with at least two points.
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len());
        let n = x.len();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
        let mut m = alloc::vec![0.0; n];
        m[0] = delta[0];
        m[n - 1] = delta[n - 2];
        for k in 1..n - 1 {
            // central difference on a possibly non-uniform grid
            m[k] = (y[k + 1] - y[k - 1]) / (x[k + 1] - x[k - 1]);
        }
        for k in 0..n - 1 {
            if delta[k] == 0.0 {
                m[k] = 0.0;
                m[k + 1] = 0.0;
                continue;
            }
            if k > 0 && delta[k - 1].signum() != delta[k].signum() {
                m[k] = 0.0;
            }
            let a = m[k] / delta[k];
            let b = m[k + 1] / delta[k];
            if a < 0.0 {
                m[k] = 0.0;
            }
            if b < 0.0 {
                m[k + 1] = 0.0;
            }
            let s = a * a + b * b;
            if s > 9.0 {
                let t = 3.0 / crate::math::sqrt(s);
                m[k] = t * a * delta[k];
                m[k + 1] = t * b * delta[k];
            }
        }
        // a sign change at the last interior node is only seen from the left
        for k in 1..n - 1 {
            if delta[k - 1].signum() != delta[k].signum() {
                m[k] = 0.0;
            }
        }
        MonotoneCubic {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    fn locate(&self, t: f64) -> usize {
        match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(k) => k.min(self.x.len() - 2),
            Err(k) => k.clamp(1, self.x.len() - 1) - 1,
        }
    }

    /// Value and derivative at `t` (extrapolates the end cubics).
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let k = self.locate(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (y0, y1, m0, m1) = (self.y[k], self.y[k + 1], self.m[k] * h, self.m[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1;
        let d = ((6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * m0 + (-6.0 * s2 + 6.0 * s) * y1 + (3.0 * s2 - 2.0 * s) * m1) / h;
        (v, d)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.eval(t).1
    }
}
