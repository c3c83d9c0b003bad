//! Dense univariate and sparse trivariate polynomials with exact derivatives.

use crate::jet::{factorial, Jet};
use serde::{Deserialize, Serialize};

/// `p(x) = sum c[k] x^k`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly1 {
    pub c: Vec<f64>,
}

impl Poly1 {
    pub fn new(c: Vec<f64>) -> Self {
        Poly1 { c }
    }

    pub fn constant(v: f64) -> Self {
        Poly1 { c: vec![v] }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
    }

    pub fn derivative(&self) -> Poly1 {
        if self.c.len() <= 1 {
            return Poly1::constant(0.0);
        }
        Poly1 {
            c: self.c.iter().enumerate().skip(1).map(|(k, &a)| k as f64 * a).collect(),
        }
    }

    pub fn eval_jet(&self, x: &Jet) -> Jet {
        let mut acc = Jet::constant(0.0, x.order);
        for &a in self.c.iter().rev() {
            acc = acc * *x + a;
        }
        acc
    }

    /// `q(x) = p((x - shift) / scale)` expanded in powers of `x`.
    pub fn compose_affine(&self, shift: f64, scale: f64) -> Poly1 {
        let mut out = vec![0.0; self.c.len().max(1)];
        // (x - shift)^k = sum_j binom(k, j) x^j (-shift)^(k-j)
        for (k, &a) in self.c.iter().enumerate() {
            let w = a / scale.powi(k as i32);
            for (j, o) in out.iter_mut().enumerate().take(k + 1) {
                *o += w * crate::jet::binomial(k, j) * (-shift).powi((k - j) as i32);
            }
        }
        Poly1 { c: out }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub c: f64,
    pub e: [u32; 3],
}

/// Sparse polynomial in three variables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Poly3 {
    pub terms: Vec<Term>,
}

impl Poly3 {
    pub fn zero() -> Self {
        Poly3 { terms: vec![] }
    }

    pub fn constant(c: f64) -> Self {
        Poly3::from_terms(&[(c, [0, 0, 0])])
    }

    pub fn from_terms(t: &[(f64, [u32; 3])]) -> Self {
        let mut p = Poly3 {
            terms: t.iter().map(|&(c, e)| Term { c, e }).collect(),
        };
        p.normalize();
        p
    }

    /// Merge equal monomials and drop zeros; ordering is canonical.
    pub fn normalize(&mut self) {
        self.terms.sort_by(|a, b| a.e.cmp(&b.e));
        let mut out: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match out.last_mut() {
                Some(last) if last.e == t.e => last.c += t.c,
                _ => out.push(t),
            }
        }
        out.retain(|t| t.c != 0.0);
        self.terms = out;
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.e.iter().sum::<u32>()).max().unwrap_or(0)
    }

    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms.iter().map(|t| t.e[var]).max().unwrap_or(0)
    }

    pub fn eval(&self, p: [f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.c * p[0].powi(t.e[0] as i32) * p[1].powi(t.e[1] as i32) * p[2].powi(t.e[2] as i32))
            .sum()
    }

    /// `d^n / d(var)^n`.
    pub fn deriv(&self, var: usize, n: u32) -> Poly3 {
        let mut terms = Vec::new();
        for t in &self.terms {
            if t.e[var] < n {
                continue;
            }
            let mut e = t.e;
            let mut c = t.c;
            for k in 0..n {
                c *= (t.e[var] - k) as f64;
            }
            e[var] -= n;
            terms.push(Term { c, e });
        }
        let mut p = Poly3 { terms };
        p.normalize();
        p
    }

    pub fn gradient(&self, p: [f64; 3]) -> [f64; 3] {
        [
            self.deriv(0, 1).eval(p),
            self.deriv(1, 1).eval(p),
            self.deriv(2, 1).eval(p),
        ]
    }

    pub fn add(&self, o: &Poly3) -> Poly3 {
        let mut p = Poly3 {
            terms: self.terms.iter().chain(o.terms.iter()).copied().collect(),
        };
        p.normalize();
        p
    }

    pub fn scale(&self, s: f64) -> Poly3 {
        let mut p = Poly3 {
            terms: self.terms.iter().map(|t| Term { c: t.c * s, e: t.e }).collect(),
        };
        p.normalize();
        p
    }

    /// Reorder variables: new variable `k` is old variable `perm[k]`.
    pub fn permute(&self, perm: [usize; 3]) -> Poly3 {
        let mut p = Poly3 {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    c: t.c,
                    e: [t.e[perm[0]], t.e[perm[1]], t.e[perm[2]]],
                })
                .collect(),
        };
        p.normalize();
        p
    }

    /// Terms whose combined degree in variables 1 and 2 equals `k`.
    pub fn transverse_part(&self, k: u32) -> Poly3 {
        let mut p = Poly3 {
            terms: self.terms.iter().filter(|t| t.e[1] + t.e[2] == k).copied().collect(),
        };
        p.normalize();
        p
    }

    /// Homogeneous part of total degree `k`.
    pub fn homogeneous_part(&self, k: u32) -> Poly3 {
        let mut p = Poly3 {
            terms: self.terms.iter().filter(|t| t.e.iter().sum::<u32>() == k).copied().collect(),
        };
        p.normalize();
        p
    }

    /// Evaluate with variable 0 a jet and variables 1, 2 fixed numbers.
    pub fn eval_jet0(&self, x: &Jet, y: f64, z: f64) -> Jet {
        let deg = self.degree_in(0) as usize;
        let mut pows = vec![Jet::constant(1.0, x.order)];
        for k in 1..=deg {
            let next = pows[k - 1] * *x;
            pows.push(next);
        }
        let mut acc = Jet::constant(0.0, x.order);
        for t in &self.terms {
            let w = t.c * y.powi(t.e[1] as i32) * z.powi(t.e[2] as i32);
            acc = acc + pows[t.e[0] as usize] * w;
        }
        acc
    }

    /// Coefficient polynomial in variable 0 of the monomial `y^a z^b`.
    pub fn coefficient_in_0(&self, a: u32, b: u32) -> Poly1 {
        let deg = self.degree_in(0) as usize;
        let mut c = vec![0.0; deg + 1];
        for t in &self.terms {
            if t.e[1] == a && t.e[2] == b {
                c[t.e[0] as usize] += t.c;
            }
        }
        Poly1::new(c)
    }
}

/// `int_{|y|<h} y1^a y2^b dy` over a disk of radius `h`.
pub fn disk_moment(a: u32, b: u32, h: f64) -> f64 {
    if a % 2 == 1 || b % 2 == 1 {
        return 0.0;
    }
    let n = (a + b) as i32;
    angular_moment(a, b) * h.powi(n + 2) / (n as f64 + 2.0)
}

/// `int_{|y|=h} y1^a y2^b dl` over a circle of radius `h`.
pub fn circle_moment(a: u32, b: u32, h: f64) -> f64 {
    if a % 2 == 1 || b % 2 == 1 {
        return 0.0;
    }
    angular_moment(a, b) * h.powi((a + b) as i32 + 1)
}

/// `int_0^{2pi} cos^a t sin^b t dt` for even `a`, `b`.
fn angular_moment(a: u32, b: u32) -> f64 {
    // 2 B((a+1)/2, (b+1)/2) with half-integer Gamma values
    let g = |k: u32| -> f64 {
        // Gamma(k/2 + 1/2) / sqrt(pi) for even k = (k-1)!! / 2^(k/2)
        let mut v = 1.0;
        let mut j = 1;
        while j < k {
            v *= j as f64 / 2.0;
            j += 2;
        }
        v
    };
    let m = (a + b) / 2; // Gamma(m + 1) = m!
    2.0 * std::f64::consts::PI * g(a) * g(b) / factorial(m as usize)
}
