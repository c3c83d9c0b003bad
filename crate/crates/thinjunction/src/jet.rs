//! Truncated Taylor jets in one variable.
//!
//! A jet of order `k` stores `c[j] = f^(j)(x0) / j!` for `j <= k`. Arithmetic
//! propagates derivatives exactly, so composite functions of `x` (radius
//! profiles, Chebyshev interpolants, normalised radii) can be differentiated
//! to any order up to [`MAX_ORDER`].

use std::ops::{Add, Mul, Neg, Sub};

pub const MAX_ORDER: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub order: usize,
    pub c: [f64; MAX_ORDER + 1],
}

impl Jet {
    pub fn constant(v: f64, order: usize) -> Self {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        let mut c = [0.0; MAX_ORDER + 1];
        c[0] = v;
        Jet { order, c }
    }

    /// The independent variable `x` expanded around `x0`.
    pub fn variable(x0: f64, order: usize) -> Self {
        let mut j = Jet::constant(x0, order);
        if order >= 1 {
            j.c[1] = 1.0;
        }
        j
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// `d^j f / dx^j` at the expansion point.
    pub fn deriv(&self, j: usize) -> f64 {
        if j > self.order {
            return 0.0;
        }
        self.c[j] * factorial(j)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut r = *self;
        for v in r.c.iter_mut().take(self.order + 1) {
            *v *= s;
        }
        r
    }

    pub fn add_scalar(&self, s: f64) -> Self {
        let mut r = *self;
        r.c[0] += s;
        r
    }

    pub fn recip(&self) -> Self {
        let a0 = self.c[0];
        assert!(a0 != 0.0, "reciprocal of a jet with zero value");
        let mut r = Jet::constant(1.0 / a0, self.order);
        for n in 1..=self.order {
            let mut s = 0.0;
            for j in 1..=n {
                s += self.c[j] * r.c[n - j];
            }
            r.c[n] = -s / a0;
        }
        r
    }

    pub fn sqrt(&self) -> Self {
        let a0 = self.c[0];
        assert!(a0 > 0.0, "sqrt of a non-positive jet");
        let mut r = Jet::constant(a0.sqrt(), self.order);
        for n in 1..=self.order {
            let mut s = self.c[n];
            for j in 1..n {
                s -= r.c[j] * r.c[n - j];
            }
            r.c[n] = s / (2.0 * r.c[0]);
        }
        r
    }

    pub fn powi(&self, p: u32) -> Self {
        let mut r = Jet::constant(1.0, self.order);
        for _ in 0..p {
            r = r * *self;
        }
        r
    }

    /// Real power `x^a` for a positive base.
    pub fn powf(&self, a: f64) -> Self {
        let a0 = self.c[0];
        assert!(a0 > 0.0, "powf of a non-positive jet");
        let mut r = Jet::constant(a0.powf(a), self.order);
        // (x^a)' x = a x' x^a  =>  recurrence on Taylor coefficients
        for n in 1..=self.order {
            let mut s = 0.0;
            for j in 1..=n {
                s += (a * j as f64 - (n - j) as f64) * self.c[j] * r.c[n - j];
            }
            r.c[n] = s / (n as f64 * a0);
        }
        r
    }

    pub fn exp(&self) -> Self {
        let mut r = Jet::constant(self.c[0].exp(), self.order);
        for n in 1..=self.order {
            let mut s = 0.0;
            for j in 1..=n {
                s += j as f64 * self.c[j] * r.c[n - j];
            }
            r.c[n] = s / n as f64;
        }
        r
    }

    /// Shift the series: derivative of the jet, one order lower.
    pub fn derivative(&self) -> Self {
        let order = self.order.saturating_sub(1);
        let mut r = Jet::constant(0.0, order);
        for j in 0..=order {
            if j + 1 <= self.order {
                r.c[j] = (j + 1) as f64 * self.c[j + 1];
            }
        }
        r
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |a, k| a * k as f64)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let order = self.order.min(o.order);
        let mut r = Jet::constant(0.0, order);
        for j in 0..=order {
            r.c[j] = self.c[j] + o.c[j];
        }
        r
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let order = self.order.min(o.order);
        let mut r = Jet::constant(0.0, order);
        for n in 0..=order {
            let mut s = 0.0;
            for j in 0..=n {
                s += self.c[j] * o.c[n - j];
            }
            r.c[n] = s;
        }
        r
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.scale(s)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, s: f64) -> Jet {
        self.add_scalar(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_and_reciprocal() {
        let x = Jet::variable(0.7, 4);
        let f = x * x * x; // x^3
        assert!((f.deriv(1) - 3.0 * 0.49).abs() < 1e-14);
        assert!((f.deriv(3) - 6.0).abs() < 1e-14);
        let g = (x + 1.0).recip();
        // d^2/dx^2 (1+x)^-1 = 2 (1+x)^-3
        assert!((g.deriv(2) - 2.0 / 1.7f64.powi(3)).abs() < 1e-13);
    }

    #[test]
    fn sqrt_and_powf_agree() {
        let x = Jet::variable(2.0, 5);
        let a = (x * x + 1.0).sqrt();
        let b = (x * x + 1.0).powf(0.5);
        for j in 0..=5 {
            assert!((a.deriv(j) - b.deriv(j)).abs() < 1e-12, "order {j}");
        }
        let e = x.exp();
        assert!((e.deriv(4) - 2f64.exp()).abs() < 1e-12);
    }
}
