//! Monotone cubic (Fritsch-Carlson) interpolation on the uniform grid.
//!
//! Used to evaluate target curves off-grid during graph-parametrization
//! solves and to resample edges. Componentwise application to a planar curve
//! is shape preserving and C1.

/// Piecewise cubic Hermite interpolant of scalar data on `x_j = j / m`.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    values: Vec<f64>,
    slopes: Vec<f64>,
    m: usize,
}

impl MonotoneCubic {
    pub fn new(values: &[f64]) -> Self {
        let m = values.len() - 1;
        let h = 1.0 / m as f64;
        let d: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let mut slopes = vec![0.0; m + 1];
        slopes[0] = d[0];
        slopes[m] = d[m - 1];
        for j in 1..m {
            if d[j - 1] * d[j] > 0.0 {
                // Harmonic mean keeps the interpolant monotone on monotone data.
                slopes[j] = 2.0 / (1.0 / d[j - 1] + 1.0 / d[j]);
            } else {
                slopes[j] = 0.0;
            }
        }
        // Fritsch-Carlson limiter.
        for j in 0..m {
            if d[j] == 0.0 {
                slopes[j] = 0.0;
                slopes[j + 1] = 0.0;
            } else {
                let a = slopes[j] / d[j];
                let b = slopes[j + 1] / d[j];
                let r = a * a + b * b;
                if r > 9.0 {
                    let t = 3.0 / r.sqrt();
                    slopes[j] = t * a * d[j];
                    slopes[j + 1] = t * b * d[j];
                }
            }
        }
        Self { values: values.to_vec(), slopes, m }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).1
    }

    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let m = self.m as f64;
        let xc = x.clamp(0.0, 1.0);
        let j = ((xc * m) as usize).min(self.m - 1);
        let h = 1.0 / m;
        let t = (xc - j as f64 * h) / h;
        let (y0, y1) = (self.values[j], self.values[j + 1]);
        let (s0, s1) = (self.slopes[j] * h, self.slopes[j + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * s0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * s1;
        let dvalue = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * s0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * s1)
            / h;
        (value, dvalue)
    }
}

/// Componentwise monotone cubic interpolant of a planar curve.
#[derive(Debug, Clone)]
pub struct CurveInterpolant {
    pub x: MonotoneCubic,
    pub y: MonotoneCubic,
}

impl CurveInterpolant {
    pub fn new(samples: &[crate::geom::Vec2]) -> Self {
        let xs: Vec<f64> = samples.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = samples.iter().map(|p| p.y).collect();
        Self { x: MonotoneCubic::new(&xs), y: MonotoneCubic::new(&ys) }
    }

    pub fn eval(&self, t: f64) -> crate::geom::Vec2 {
        crate::geom::Vec2::new(self.x.eval(t), self.y.eval(t))
    }

    pub fn derivative(&self, t: f64) -> crate::geom::Vec2 {
        crate::geom::Vec2::new(self.x.derivative(t), self.y.derivative(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_linear_data_exactly() {
        let vals: Vec<f64> = (0..=10).map(|j| 0.3 * j as f64 / 10.0 - 1.0).collect();
        let c = MonotoneCubic::new(&vals);
        for q in 0..=100 {
            let x = q as f64 / 100.0;
            assert!((c.eval(x) - (0.3 * x - 1.0)).abs() < 1e-14);
            assert!((c.derivative(x) - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolates_nodes() {
        let vals: Vec<f64> = (0..=16)
            .map(|j| ((j as f64 / 16.0) * 7.0).sin())
            .collect();
        let c = MonotoneCubic::new(&vals);
        for (j, &v) in vals.iter().enumerate() {
            assert!((c.eval(j as f64 / 16.0) - v).abs() < 1e-13);
        }
    }

    #[test]
    fn monotone_on_monotone_data() {
        let vals: Vec<f64> = (0..=12).map(|j| (j as f64).powi(2)).collect();
        let c = MonotoneCubic::new(&vals);
        let mut prev = c.eval(0.0);
        for q in 1..=600 {
            let v = c.eval(q as f64 / 600.0);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn convergence_on_smooth_data() {
        let f = |x: f64| (2.5 * x).sin() + 0.3 * x;
        let err = |m: usize| {
            let vals: Vec<f64> = (0..=m).map(|j| f(j as f64 / m as f64)).collect();
            let c = MonotoneCubic::new(&vals);
            (0..1000)
                .map(|q| {
                    let x = q as f64 / 1000.0;
                    (c.eval(x) - f(x)).abs()
                })
                .fold(0.0_f64, f64::max)
        };
        // The monotonicity limiter costs accuracy near extrema; second order
        // is what remains there.
        assert!(err(64) < 1e-3);
        assert!(err(128) < err(64) / 3.0);
    }
}
