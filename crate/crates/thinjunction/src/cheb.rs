//! Chebyshev series on intervals and piecewise concatenations of them.

use crate::jet::Jet;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChebSeries {
    pub a: f64,
    pub b: f64,
    pub coeffs: Vec<f64>,
}

/// Chebyshev-Lobatto points `cos(pi j/(n-1))` mapped to [a, b], ascending.
pub fn lobatto_points(n: usize, a: f64, b: f64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let t = -(PI * j as f64 / (n - 1) as f64).cos();
            0.5 * (a + b) + 0.5 * (b - a) * t
        })
        .collect()
}

impl ChebSeries {
    pub fn zero(a: f64, b: f64) -> Self {
        ChebSeries { a, b, coeffs: vec![0.0] }
    }

    /// Interpolate values given at `lobatto_points(n, a, b)` (ascending).
    pub fn from_values(a: f64, b: f64, vals: &[f64]) -> Self {
        let n = vals.len();
        if n == 1 {
            return ChebSeries { a, b, coeffs: vec![vals[0]] };
        }
        let m = n - 1;
        // vals are ordered by ascending t = -cos(pi j/m); in the standard
        // ordering x_j = cos(pi j/m) that is index m - j.
        let f = |j: usize| vals[m - j];
        let mut coeffs = vec![0.0; n];
        for (k, ck) in coeffs.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..=m {
                let w = if j == 0 || j == m { 0.5 } else { 1.0 };
                s += w * f(j) * (PI * (j * k) as f64 / m as f64).cos();
            }
            *ck = 2.0 * s / m as f64;
        }
        coeffs[0] *= 0.5;
        coeffs[m] *= 0.5;
        ChebSeries { a, b, coeffs }
    }

    pub fn fit(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> Self {
        let pts = lobatto_points(n, a, b);
        let vals: Vec<f64> = pts.iter().map(|&x| f(x)).collect();
        Self::from_values(a, b, &vals)
    }

    /// Double the number of points until the trailing coefficients fall below
    /// `tol` relative to the largest one (or `max_n` is reached).
    pub fn fit_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_n: usize) -> Self {
        let mut n = 17;
        loop {
            let s = Self::fit(f, a, b, n);
            let scale = s.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1e-300);
            let tail = s.coeffs[n - 4..].iter().fold(0.0f64, |m, c| m.max(c.abs()));
            if tail <= tol * scale.max(1.0) || n >= max_n {
                return s.trimmed(1e-17 * scale.max(1.0));
            }
            n = 2 * n - 1;
        }
    }

    pub fn trimmed(mut self, tol: f64) -> Self {
        while self.coeffs.len() > 1 && self.coeffs.last().unwrap().abs() <= tol {
            self.coeffs.pop();
        }
        self
    }

    fn to_t(&self, x: f64) -> f64 {
        (2.0 * x - self.a - self.b) / (self.b - self.a)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = self.to_t(x);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coeffs[0]
    }

    pub fn eval_jet(&self, x: &Jet) -> Jet {
        let t = x.add_scalar(-(self.a + self.b) / 2.0).scale(2.0 / (self.b - self.a));
        let mut b1 = Jet::constant(0.0, x.order);
        let mut b2 = Jet::constant(0.0, x.order);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = (t * b1).scale(2.0) - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coeffs[0]
    }

    pub fn derivative(&self) -> Self {
        let n = self.coeffs.len();
        if n <= 1 {
            return ChebSeries::zero(self.a, self.b);
        }
        let mut d = vec![0.0; n];
        for k in (1..n).rev() {
            let next = if k + 1 < n { d[k + 1] } else { 0.0 };
            d[k - 1] = next + 2.0 * k as f64 * self.coeffs[k];
        }
        d[0] *= 0.5;
        d.pop();
        let s = 2.0 / (self.b - self.a);
        ChebSeries {
            a: self.a,
            b: self.b,
            coeffs: d.into_iter().map(|v| v * s).collect(),
        }
    }

    /// Antiderivative vanishing at `a`.
    pub fn integral(&self) -> Self {
        let n = self.coeffs.len();
        let c = |k: usize| if k < n { self.coeffs[k] } else { 0.0 };
        let mut out = vec![0.0; n + 1];
        for (k, slot) in out.iter_mut().enumerate().skip(1) {
            let prev = if k == 1 { 2.0 * c(0) } else { c(k - 1) };
            *slot = (prev - c(k + 1)) / (2.0 * k as f64);
        }
        let s = 0.5 * (self.b - self.a);
        let mut r = ChebSeries {
            a: self.a,
            b: self.b,
            coeffs: out.into_iter().map(|v| v * s).collect(),
        };
        let va = r.eval(self.a);
        r.coeffs[0] -= va;
        r
    }

    pub fn add_scaled(&self, o: &ChebSeries, s: f64) -> Self {
        let n = self.coeffs.len().max(o.coeffs.len());
        let mut c = vec![0.0; n];
        for (k, v) in c.iter_mut().enumerate() {
            *v = self.coeffs.get(k).copied().unwrap_or(0.0) + s * o.coeffs.get(k).copied().unwrap_or(0.0);
        }
        ChebSeries { a: self.a, b: self.b, coeffs: c }
    }
}

/// Piecewise Chebyshev function on [breaks[0], breaks[last]].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseCheb {
    pub pieces: Vec<ChebSeries>,
}

impl PiecewiseCheb {
    pub fn zero(breaks: &[f64]) -> Self {
        PiecewiseCheb {
            pieces: breaks.windows(2).map(|w| ChebSeries::zero(w[0], w[1])).collect(),
        }
    }

    pub fn fit_adaptive(f: &dyn Fn(f64) -> f64, breaks: &[f64], tol: f64) -> Self {
        Self::fit_adaptive_pieces(&|x, _| f(x), breaks, tol)
    }

    /// Like [`fit_adaptive`](Self::fit_adaptive) but `f` also receives the
    /// piece index, so one-sided limits at breakpoints are well defined.
    pub fn fit_adaptive_pieces(f: &dyn Fn(f64, usize) -> f64, breaks: &[f64], tol: f64) -> Self {
        PiecewiseCheb {
            pieces: breaks
                .windows(2)
                .enumerate()
                .map(|(k, w)| ChebSeries::fit_adaptive(&|x| f(x, k), w[0], w[1], tol, 257))
                .collect(),
        }
    }

    pub fn piece_index(&self, x: f64) -> usize {
        let n = self.pieces.len();
        for (k, p) in self.pieces.iter().enumerate() {
            if x < p.b || k == n - 1 {
                return k;
            }
        }
        n - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.pieces[self.piece_index(x)].eval(x)
    }

    pub fn eval_jet(&self, x: &Jet) -> Jet {
        self.pieces[self.piece_index(x.value())].eval_jet(x)
    }

    pub fn derivative(&self) -> Self {
        PiecewiseCheb {
            pieces: self.pieces.iter().map(|p| p.derivative()).collect(),
        }
    }

    /// Continuous antiderivative vanishing at the left end.
    pub fn integral(&self) -> Self {
        let mut acc = 0.0;
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for p in &self.pieces {
            let mut q = p.integral();
            q.coeffs[0] += acc;
            acc = q.eval(q.b);
            pieces.push(q);
        }
        PiecewiseCheb { pieces }
    }

    pub fn add_scaled(&self, o: &PiecewiseCheb, s: f64) -> Self {
        PiecewiseCheb {
            pieces: self.pieces.iter().zip(&o.pieces).map(|(p, q)| p.add_scaled(q, s)).collect(),
        }
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let mut r = self.clone();
        for p in &mut r.pieces {
            p.coeffs[0] += c;
        }
        r
    }

    pub fn breaks(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pieces.iter().map(|p| p.a).collect();
        b.push(self.pieces.last().unwrap().b);
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_derivative_integral_roundtrip() {
        let s = ChebSeries::fit_adaptive(&|x: f64| (3.0 * x).sin() + x * x, 0.0, 1.0, 1e-15, 257);
        let d = s.derivative();
        let i = s.integral();
        for &x in &[0.0, 0.13, 0.5, 0.91, 1.0] {
            assert!((s.eval(x) - ((3.0 * x).sin() + x * x)).abs() < 1e-14);
            assert!((d.eval(x) - (3.0 * (3.0 * x).cos() + 2.0 * x)).abs() < 1e-11);
            let exact = (1.0 - (3.0 * x).cos()) / 3.0 + x * x * x / 3.0;
            assert!((i.eval(x) - exact).abs() < 1e-14);
        }
        let j = s.eval_jet(&Jet::variable(0.4, 3));
        assert!((j.deriv(2) - (-9.0 * (1.2f64).sin() + 2.0)).abs() < 1e-10);
    }

    #[test]
    fn piecewise_integral_is_continuous() {
        let f = |_x: f64, k: usize| if k == 0 { 1.0 } else { 2.0 };
        let p = PiecewiseCheb::fit_adaptive_pieces(&f, &[0.0, 0.5, 1.0], 1e-15);
        let q = p.integral();
        assert!((q.eval(1.0) - 1.5).abs() < 1e-14);
        assert!((q.eval(0.5) - 0.5).abs() < 1e-14);
    }
}
