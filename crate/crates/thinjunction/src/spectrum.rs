//! Neumann eigenpairs of the Laplacian on a disk and quadrature on disks.

use crate::bessel;
use crate::quad::gauss_legendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const DEFAULT_MODES: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Cos,
    Sin,
}

/// `Theta(r, t) = J_n(kappa r / h) cos(n t)` or `sin(n t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub lambda: f64,
    /// Zero of `J_n'`; zero for the constant mode.
    pub kappa: f64,
    pub n: usize,
    /// Radial index, 1-based; 0 for the constant mode.
    pub m: usize,
    pub parity: Parity,
    pub norm2: f64,
    /// Sup of `|Theta|` over the disk.
    pub sup: f64,
}

impl Mode {
    fn angular(&self, t: f64) -> (f64, f64) {
        let nt = self.n as f64 * t;
        match self.parity {
            Parity::Cos => (nt.cos(), -(self.n as f64) * nt.sin()),
            Parity::Sin => (nt.sin(), self.n as f64 * nt.cos()),
        }
    }

    pub fn eval_polar(&self, r: f64, t: f64) -> f64 {
        if self.m == 0 {
            return 1.0;
        }
        bessel::j(self.n, self.lambda * r) * self.angular(t).0
    }

    pub fn eval(&self, a: f64, b: f64) -> f64 {
        self.eval_polar(a.hypot(b), b.atan2(a))
    }

    /// Value and Cartesian gradient.
    pub fn eval_grad(&self, a: f64, b: f64) -> (f64, [f64; 2]) {
        if self.m == 0 {
            return (1.0, [0.0, 0.0]);
        }
        let r = a.hypot(b);
        if r < 1e-14 {
            // only n = 1 has a nonzero gradient at the centre
            let g = if self.n == 1 { 0.5 * self.lambda } else { 0.0 };
            let v = if self.n == 0 { 1.0 } else { 0.0 };
            let grad = match self.parity {
                Parity::Cos => [g, 0.0],
                Parity::Sin => [0.0, g],
            };
            return (v, grad);
        }
        let t = b.atan2(a);
        let (c, s) = (a / r, b / r);
        let jr = bessel::j(self.n, self.lambda * r);
        let djr = self.lambda * bessel::jp(self.n, self.lambda * r);
        let (ang, dang) = self.angular(t);
        let dr = djr * ang;
        let dt_over_r = jr * dang / r;
        (jr * ang, [dr * c - dt_over_r * s, dr * s + dt_over_r * c])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskSpectrum {
    pub h: f64,
    pub modes: Vec<Mode>,
}

/// The first `count + 1` Neumann modes of the disk of radius `h`, the
/// constant mode first.
pub fn neumann_spectrum(h: f64, count: usize) -> DiskSpectrum {
    assert!(h > 0.0 && count >= 1);
    let mut limit = 10.0;
    loop {
        let nmax = limit as usize + 1;
        let per_n: Vec<Vec<f64>> = (0..=nmax)
            .into_par_iter()
            .map(|n| bessel::jp_zeros_below(n, limit, usize::MAX))
            .collect();
        let mut cand: Vec<(f64, usize, usize, Parity)> = Vec::new();
        for (n, roots) in per_n.iter().enumerate() {
            for (k, &kappa) in roots.iter().enumerate() {
                cand.push((kappa, n, k + 1, Parity::Cos));
                if n > 0 {
                    cand.push((kappa, n, k + 1, Parity::Sin));
                }
            }
        }
        if cand.len() < count {
            limit *= 1.5;
            continue;
        }
        cand.sort_by(|x, y| {
            x.0.partial_cmp(&y.0)
                .unwrap()
                .then(x.1.cmp(&y.1))
                .then((x.3 == Parity::Sin).cmp(&(y.3 == Parity::Sin)))
        });
        cand.truncate(count);
        let mut modes = vec![Mode {
            lambda: 0.0,
            kappa: 0.0,
            n: 0,
            m: 0,
            parity: Parity::Cos,
            norm2: PI * h * h,
            sup: 1.0,
        }];
        for (kappa, n, m, parity) in cand {
            let nf = n as f64;
            let jk = bessel::j(n, kappa);
            let ang = if n == 0 { 2.0 * PI } else { PI };
            let norm2 = 0.5 * h * h * (1.0 - nf * nf / (kappa * kappa)) * jk * jk * ang;
            modes.push(Mode {
                lambda: kappa / h,
                kappa,
                n,
                m,
                parity,
                norm2,
                sup: radial_sup(n, kappa),
            });
        }
        return DiskSpectrum { h, modes };
    }
}

/// `max_{0<=s<=1} |J_n(kappa s)|`, sampled and polished at the peak.
fn radial_sup(n: usize, kappa: f64) -> f64 {
    let k = 400;
    let (mut best, mut arg) = (0.0f64, 0.0);
    for i in 0..=k {
        let s = i as f64 / k as f64;
        let v = bessel::j(n, kappa * s).abs();
        if v > best {
            best = v;
            arg = s;
        }
    }
    // golden-section refinement around the sampled maximum
    let (mut a, mut b) = ((arg - 1.0 / k as f64).max(0.0), (arg + 1.0 / k as f64).min(1.0));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if bessel::j(n, kappa * c).abs() > bessel::j(n, kappa * d).abs() {
            b = d;
        } else {
            a = c;
        }
    }
    best.max(bessel::j(n, kappa * 0.5 * (a + b)).abs())
}

impl DiskSpectrum {
    /// First nonzero eigenvalue.
    pub fn lambda1(&self) -> f64 {
        self.modes[1].lambda
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

/// Gauss-Legendre in `r` (times the Jacobian `r`) and uniform in the angle.
#[derive(Clone, Debug)]
pub struct DiskQuadrature {
    pub h: f64,
    /// `(r, t, weight)`.
    pub nodes: Vec<(f64, f64, f64)>,
    /// Polynomial degree in `r` integrated exactly.
    pub radial_degree: usize,
    /// Highest angular frequency integrated exactly.
    pub angular_degree: usize,
}

impl DiskQuadrature {
    pub fn new(h: f64, nr: usize, nt: usize) -> Self {
        let (x, w) = gauss_legendre(nr);
        let mut nodes = Vec::with_capacity(nr * nt);
        let dt = 2.0 * PI / nt as f64;
        for (&s, &ws) in x.iter().zip(&w) {
            let r = 0.5 * h * (s + 1.0);
            let wr = 0.5 * h * ws * r;
            for k in 0..nt {
                nodes.push((r, k as f64 * dt, wr * dt));
            }
        }
        DiskQuadrature {
            h,
            nodes,
            radial_degree: 2 * nr - 2,
            angular_degree: nt - 1,
        }
    }

    pub fn default_for(h: f64) -> Self {
        Self::new(h, 48, 96)
    }

    pub fn integrate(&self, g: &dyn Fn(f64, f64) -> f64) -> f64 {
        neumaier(self.nodes.iter().map(|&(r, t, w)| w * g(r, t)))
    }
}

/// Compensated summation.
pub fn neumaier(it: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in it {
        let t = s + v;
        c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        s = t;
    }
    s + c
}

/// Coefficients `a_p = int g Theta_p / |Theta_p|^2`; `g` takes polar `(r, t)`.
pub fn project(spec: &DiskSpectrum, g: &(dyn Fn(f64, f64) -> f64 + Sync)) -> Vec<f64> {
    let q = DiskQuadrature::default_for(spec.h);
    let vals: Vec<f64> = q.nodes.iter().map(|&(r, t, _)| g(r, t)).collect();
    spec.modes
        .par_iter()
        .map(|m| {
            let s = neumaier(q.nodes.iter().zip(&vals).map(|(&(r, t, w), v)| w * v * m.eval_polar(r, t)));
            s / m.norm2
        })
        .collect()
}
