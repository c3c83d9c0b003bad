//! C^2 quintic cut-off functions.

/// `S(t) = 6t^5 - 15t^4 + 10t^3` clamped to `[0, 1]`, with `S'` and `S''`.
pub fn smoothstep(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let t2 = t * t;
    (
        t2 * t * (10.0 + t * (-15.0 + 6.0 * t)),
        30.0 * t2 * (1.0 - t) * (1.0 - t),
        60.0 * t * (1.0 - t) * (1.0 - 2.0 * t),
    )
}

/// Cut-off rising from 0 at `a` to 1 at `b`, with first and second derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ramp {
    pub a: f64,
    pub b: f64,
}

impl Ramp {
    pub fn new(a: f64, b: f64) -> Self {
        assert!(b > a);
        Ramp { a, b }
    }

    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let w = self.b - self.a;
        let (s, s1, s2) = smoothstep((x - self.a) / w);
        (s, s1 / w, s2 / (w * w))
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    /// True where the first or second derivative may be nonzero.
    pub fn in_band(&self, x: f64) -> bool {
        x > self.a && x < self.b
    }
}

/// Junction cut-off: 0 for `xi <= ell + 1`, 1 for `xi >= ell + 2`.
pub fn junction_ramp(ell: f64) -> Ramp {
    Ramp::new(ell + 1.0, ell + 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_differences() {
        let r = Ramp::new(0.2, 0.7);
        for k in 1..50 {
            let x = 0.2 + 0.5 * k as f64 / 50.0;
            let d = 1e-5;
            let (v, v1, v2) = r.eval(x);
            let (p, p1, _) = r.eval(x + d);
            let (m, m1, _) = r.eval(x - d);
            assert!((v1 - (p - m) / (2.0 * d)).abs() < 1e-6);
            assert!((v2 - (p1 - m1) / (2.0 * d)).abs() < 1e-5);
            assert!((0.0..=1.0).contains(&v));
        }
        assert_eq!(r.eval(0.2), (0.0, 0.0, 0.0));
        assert_eq!(r.eval(0.7), (1.0, 0.0, 0.0));
    }
}
