//! Zero-mean Neumann Poisson problems on a disk.
//!
//! `-Lap u = g` in the disk of radius `h`, `-du/dr = b` on the rim, with
//! `int u = 0`. Fourier modes in the angle, and for each mode `n` an
//! expansion `U_n(s) = sum_j c_j T_{2j+p}(s)` in `s = r/h` with `p = n mod 2`,
//! collocated at the positive Chebyshev-Lobatto points.

use crate::jet::Jet;
use crate::quad::{gauss_legendre, trapezoid_periodic};
use crate::spectrum::{neumaier, Parity};
use nalgebra::{DMatrix, DVector, LU, Dyn};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;
use thiserror::Error;

pub const MAX_N: usize = 24;
pub const N_THETA: usize = 64;
pub const N_RADIAL: usize = 32;
const LOBATTO: usize = 2 * N_RADIAL;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiskError {
    #[error("incompatible Neumann data: int g - circle int b = {defect:e} (scale {scale:e})")]
    Incompatible { defect: f64, scale: f64 },
}

/// Radial coefficients of one angular mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeCoeffs {
    pub n: usize,
    pub parity: Parity,
    pub c: Vec<f64>,
}

impl ModeCoeffs {
    pub fn p(&self) -> usize {
        self.n % 2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskField {
    pub h: f64,
    pub modes: Vec<ModeCoeffs>,
}

/// Sample grid of the solver: interior collocation radii (as `s = r/h`,
/// descending) and the angles.
pub fn sample_grid() -> (Vec<f64>, Vec<f64>) {
    let s = (1..N_RADIAL).map(|j| (PI * j as f64 / (LOBATTO - 1) as f64).cos()).collect();
    let t = (0..N_THETA).map(|k| 2.0 * PI * k as f64 / N_THETA as f64).collect();
    (s, t)
}

/// `T_k(s)` and `T_k'(s)` for `k < count`, with `s` a jet.
pub fn cheb_with_derivative(count: usize, s: &Jet) -> (Vec<Jet>, Vec<Jet>) {
    let one = Jet::constant(1.0, s.order);
    let mut t = vec![one, *s];
    // second kind: T_k' = k U_{k-1}
    let mut u = vec![one, s.scale(2.0)];
    while t.len() < count {
        let k = t.len();
        t.push((*s * t[k - 1]).scale(2.0) - t[k - 2]);
        u.push((*s * u[k - 1]).scale(2.0) - u[k - 2]);
    }
    t.truncate(count);
    let dt = (0..count)
        .map(|k| if k == 0 { Jet::constant(0.0, s.order) } else { u[k - 1].scale(k as f64) })
        .collect();
    (t, dt)
}

/// Evaluation of a mode sum with jet-valued coefficients and radius.
///
/// Returns `(u, du/ds, du/dtheta)` as jets in whatever variable `s` and the
/// coefficients depend on.
pub fn eval_modes_jet<'a>(
    modes: impl Iterator<Item = (usize, Parity, &'a [Jet])>,
    s: &Jet,
    theta: f64,
) -> (Jet, Jet, Jet) {
    let o = s.order;
    let (mut v, mut ds, mut dt) = (Jet::constant(0.0, o), Jet::constant(0.0, o), Jet::constant(0.0, o));
    let (t, tp) = cheb_with_derivative(LOBATTO, s);
    for (n, parity, c) in modes {
        let p = n % 2;
        let (mut rv, mut rd) = (Jet::constant(0.0, o), Jet::constant(0.0, o));
        for (j, cj) in c.iter().enumerate() {
            rv = rv + *cj * t[2 * j + p];
            rd = rd + *cj * tp[2 * j + p];
        }
        let nt = n as f64 * theta;
        let (a, da) = match parity {
            Parity::Cos => (nt.cos(), -(n as f64) * nt.sin()),
            Parity::Sin => (nt.sin(), n as f64 * nt.cos()),
        };
        v = v + rv.scale(a);
        ds = ds + rd.scale(a);
        dt = dt + rv.scale(da);
    }
    (v, ds, dt)
}

/// Cartesian gradient from polar partials; `r > 0`.
pub fn polar_to_cartesian(dr: f64, dtheta: f64, r: f64, theta: f64) -> [f64; 2] {
    let (c, s) = (theta.cos(), theta.sin());
    [dr * c - dtheta * s / r, dr * s + dtheta * c / r]
}

/// Radius used in place of the centre when a gradient is requested there.
pub const CENTRE_OFFSET: f64 = 1e-9;

impl DiskField {
    pub fn zero(h: f64) -> Self {
        DiskField { h, modes: vec![] }
    }

    fn jet_modes(&self) -> Vec<(usize, Parity, Vec<Jet>)> {
        self.modes
            .iter()
            .map(|m| (m.n, m.parity, m.c.iter().map(|&c| Jet::constant(c, MAX_JET)).collect()))
            .collect()
    }

    /// `(U, U_s, U_ss, U_theta)` at `(s, theta)`.
    pub fn eval_s_jet(&self, s: f64, theta: f64) -> (f64, f64, f64, f64) {
        let jm = self.jet_modes();
        let (v, _, dt) = eval_modes_jet(jm.iter().map(|(n, p, c)| (*n, *p, c.as_slice())), &Jet::variable(s, 2), theta);
        (v.value(), v.deriv(1), v.deriv(2), dt.value())
    }

    pub fn eval_polar(&self, r: f64, theta: f64) -> f64 {
        let jm = self.jet_modes();
        let s = Jet::constant(r / self.h, 0);
        eval_modes_jet(jm.iter().map(|(n, p, c)| (*n, *p, c.as_slice())), &s, theta).0.value()
    }

    pub fn eval(&self, a: f64, b: f64) -> f64 {
        self.eval_polar(a.hypot(b), b.atan2(a))
    }

    /// Value and Cartesian gradient at `(a, b)`.
    pub fn eval_grad(&self, a: f64, b: f64) -> (f64, [f64; 2]) {
        let jm = self.jet_modes();
        let r = a.hypot(b);
        let theta = b.atan2(a);
        let re = r.max(CENTRE_OFFSET * self.h);
        let s = Jet::constant(re / self.h, 0);
        let (v, ds, dt) = eval_modes_jet(jm.iter().map(|(n, p, c)| (*n, *p, c.as_slice())), &s, theta);
        let g = polar_to_cartesian(ds.value() / self.h, dt.value(), re, theta);
        if r < CENTRE_OFFSET * self.h {
            return (self.eval_polar(0.0, 0.0), g);
        }
        (v.value(), g)
    }

    /// `U_0` radial coefficients, if present.
    pub fn radial0(&self) -> Option<&[f64]> {
        self.modes.iter().find(|m| m.n == 0).map(|m| m.c.as_slice())
    }

    /// `int u` over the disk.
    pub fn integral(&self) -> f64 {
        match self.radial0() {
            Some(c) => 2.0 * PI * self.h * self.h * radial_moment(c),
            None => 0.0,
        }
    }

    /// `(1/|disk|) int u`.
    pub fn mean(&self) -> f64 {
        self.integral() / (PI * self.h * self.h)
    }

    /// `int u dl` over the rim.
    pub fn circle_integral(&self) -> f64 {
        // T_k(1) = 1
        match self.radial0() {
            Some(c) => 2.0 * PI * self.h * c.iter().sum::<f64>(),
            None => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.c.iter().all(|&c| c == 0.0))
    }
}

const MAX_JET: usize = 2;

/// `int_0^1 T_{2j}(s) s ds` for the even basis.
fn even_moments() -> &'static Vec<f64> {
    static M: OnceLock<Vec<f64>> = OnceLock::new();
    M.get_or_init(|| {
        let (x, w) = gauss_legendre(48);
        (0..N_RADIAL)
            .map(|j| {
                x.iter()
                    .zip(&w)
                    .map(|(&t, &wt)| {
                        let s = 0.5 * (t + 1.0);
                        0.5 * wt * s * (2.0 * j as f64 * s.acos()).cos()
                    })
                    .sum()
            })
            .collect()
    })
}

/// `int_0^1 U_0(s) s ds`.
pub fn radial_moment(c: &[f64]) -> f64 {
    c.iter().zip(even_moments()).map(|(a, m)| a * m).sum()
}

/// LU factors of the collocation operator for each angular index.
fn operators() -> &'static Vec<LU<f64, Dyn, Dyn>> {
    static OPS: OnceLock<Vec<LU<f64, Dyn, Dyn>>> = OnceLock::new();
    OPS.get_or_init(|| (0..=MAX_N).map(|n| build_operator(n).lu()).collect())
}

fn build_operator(n: usize) -> DMatrix<f64> {
    let p = n % 2;
    let size = if n == 0 { N_RADIAL + 1 } else { N_RADIAL };
    let mut a = DMatrix::<f64>::zeros(size, size);
    let nn = (n * n) as f64;
    // row 0: U'(1)
    for j in 0..N_RADIAL {
        let k = (2 * j + p) as f64;
        a[(0, j)] = k * k;
    }
    let (svals, _) = sample_grid();
    for (row, &s) in svals.iter().enumerate() {
        let (t, tp) = cheb_with_derivative(LOBATTO, &Jet::variable(s, 1));
        for j in 0..N_RADIAL {
            let k = 2 * j + p;
            let tv = t[k].value();
            let d1 = tp[k].value();
            let d2 = tp[k].deriv(1);
            a[(row + 1, j)] = s * s * d2 + s * d1 - nn * tv;
        }
        if n == 0 {
            // multiplier enters like a constant source
            a[(row + 1, N_RADIAL)] = s * s;
        }
    }
    if n == 0 {
        for (j, m) in even_moments().iter().enumerate() {
            a[(N_RADIAL, j)] = *m;
        }
    }
    a
}

/// `cos(n t_k)` and `sin(n t_k)` on the angular grid.
fn trig_table() -> &'static (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    static T: OnceLock<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = OnceLock::new();
    T.get_or_init(|| {
        let (_, th) = sample_grid();
        let c = (0..=MAX_N).map(|n| th.iter().map(|t| (n as f64 * t).cos()).collect()).collect();
        let s = (0..=MAX_N).map(|n| th.iter().map(|t| (n as f64 * t).sin()).collect()).collect();
        (c, s)
    })
}

/// Weights `w_j` with `int_0^1 G(s) s ds = sum_j w_j G(s_j)` for even `G`
/// sampled at the interior grid radii (exact for the even interpolant).
fn radial_weights() -> &'static Vec<f64> {
    static W: OnceLock<Vec<f64>> = OnceLock::new();
    W.get_or_init(|| {
        let (svals, _) = sample_grid();
        let m = svals.len();
        let mut a = DMatrix::<f64>::zeros(m, m);
        for (i, &s) in svals.iter().enumerate() {
            for j in 0..m {
                a[(i, j)] = (2.0 * j as f64 * s.acos()).cos();
            }
        }
        // w^T = mom^T A^{-1}  <=>  A^T w = mom
        let mom = DVector::from_iterator(m, even_moments().iter().take(m).copied());
        let w = a.transpose().lu().solve(&mom).expect("interpolation matrix is nonsingular");
        w.iter().copied().collect()
    })
}

/// Solve from samples: `g[j][k]` at `(s_j, theta_k)` of [`sample_grid`] and
/// `b[k]` at `theta_k`.
pub fn solve_disk_sampled(h: f64, g: &[Vec<f64>], b: &[f64]) -> Result<DiskField, DiskError> {
    let (svals, _) = sample_grid();
    let rw = radial_weights();
    let g0: Vec<f64> = g.iter().map(|row| row.iter().sum::<f64>() / N_THETA as f64).collect();
    let b0 = b.iter().sum::<f64>() / N_THETA as f64;
    let int_g = 2.0 * PI * h * h * g0.iter().zip(rw).map(|(a, w)| a * w).sum::<f64>();
    let int_b = 2.0 * PI * h * b0;
    let abs_g: f64 = g0.iter().zip(rw).map(|(a, w)| (a * w).abs()).sum();
    let scale = 2.0 * PI * h * h * abs_g + 2.0 * PI * h * b.iter().map(|v| v.abs()).sum::<f64>() / N_THETA as f64;
    let defect = int_g - int_b;
    if defect.abs() > 1e-9 * scale + 1e-11 {
        return Err(DiskError::Incompatible { defect, scale });
    }
    // size of a solution driven by this data; modes far below it are noise
    let gmax = g.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-14 * (gmax * h * h + bmax * h);
    let ops = operators();
    let (ct, st) = trig_table();
    let mut modes = Vec::new();
    for n in 0..=MAX_N {
        for parity in [Parity::Cos, Parity::Sin] {
            if n == 0 && parity == Parity::Sin {
                continue;
            }
            let w = if n == 0 { 1.0 } else { 2.0 } / N_THETA as f64;
            let tab = if parity == Parity::Cos { &ct[n] } else { &st[n] };
            let dot = |row: &[f64]| w * row.iter().zip(tab).map(|(v, a)| v * a).sum::<f64>();
            let gn: Vec<f64> = g.iter().map(|row| dot(row)).collect();
            let bn = dot(b);
            let scale_n = gn.iter().fold(bn.abs(), |m, v| m.max(v.abs()));
            if scale_n < 1e-300 {
                continue;
            }
            let size = if n == 0 { N_RADIAL + 1 } else { N_RADIAL };
            let mut rhs = DVector::<f64>::zeros(size);
            rhs[0] = -h * bn;
            for (row, (&s, &gv)) in svals.iter().zip(&gn).enumerate() {
                rhs[row + 1] = -h * h * s * s * gv;
            }
            let sol = ops[n].solve(&rhs).expect("collocation operator is nonsingular");
            let c: Vec<f64> = sol.iter().take(N_RADIAL).copied().collect();
            if c.iter().all(|v| v.abs() <= floor) {
                continue;
            }
            modes.push(ModeCoeffs { n, parity, c });
        }
    }
    Ok(DiskField { h, modes })
}

/// Solve with `g(r, theta)` and `b(theta)` given as functions.
pub fn solve_disk_neumann(
    h: f64,
    g: &dyn Fn(f64, f64) -> f64,
    b: &dyn Fn(f64) -> f64,
) -> Result<DiskField, DiskError> {
    let (svals, thetas) = sample_grid();
    let gs: Vec<Vec<f64>> = svals.iter().map(|&s| thetas.iter().map(|&t| g(h * s, t)).collect()).collect();
    let bs: Vec<f64> = thetas.iter().map(|&t| b(t)).collect();
    solve_disk_sampled(h, &gs, &bs)
}

/// `int g` over the disk and `int b` over the rim for function data, by the
/// periodic trapezoid rule and Gauss-Legendre in `r`.
pub fn compatibility_defect(h: f64, g: &dyn Fn(f64, f64) -> f64, b: &dyn Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_legendre(40);
    let ig = neumaier(x.iter().zip(&w).map(|(&t, &wt)| {
        let r = 0.5 * h * (t + 1.0);
        0.5 * h * wt * r * trapezoid_periodic(&|th| g(r, th), N_THETA)
    }));
    ig - h * trapezoid_periodic(b, N_THETA)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_closed_form() {
        let (h, c) = (0.37, 1.3);
        let u = solve_disk_neumann(h, &|_, _| 2.0 * c / h, &|_| c).unwrap();
        let mut worst = 0.0f64;
        for k in 0..=20 {
            let r = h * k as f64 / 20.0;
            let exact = -(c / (2.0 * h)) * r * r + c * h / 4.0;
            worst = worst.max((u.eval_polar(r, 0.3) - exact).abs() / (c * h / 4.0));
        }
        assert!(worst < 1e-8, "rel err {worst}");
        assert!(u.mean().abs() < 1e-12);
    }

    #[test]
    fn incompatible_data_is_rejected() {
        match solve_disk_neumann(0.5, &|_, _| 1.0, &|_| 0.0) {
            Err(DiskError::Incompatible { defect, .. }) => assert!((defect - PI * 0.25).abs() < 1e-12),
            other => panic!("expected incompatibility, got {other:?}"),
        }
        assert!(solve_disk_neumann(0.5, &|_, _| 0.0, &|_| 0.0).unwrap().is_zero());
    }

    fn smooth_data() -> (f64, impl Fn(f64, f64) -> f64, impl Fn(f64) -> f64) {
        let h = 0.3;
        let g = move |r: f64, t: f64| {
            let (a, b) = (r * t.cos(), r * t.sin());
            1.0 + a + 3.0 * a * b - b * b + (2.0 * a).sin()
        };
        // compatibility fixes the rim mean
        let ig = compatibility_defect(h, &g, &|_| 0.0);
        let b0 = ig / (2.0 * PI * h);
        let b = move |t: f64| b0 + 0.4 * (2.0 * t).cos() - 0.2 * t.sin() + 0.1 * (3.0 * t).sin();
        (h, g, b)
    }

    #[test]
    fn strong_residual_and_neumann_trace() {
        let (h, g, b) = smooth_data();
        let u = solve_disk_neumann(h, &g, &b).unwrap();
        assert!(u.mean().abs() < 1e-12);
        for &(s, t) in &[(0.1, 0.2), (0.45, 1.9), (0.77, 4.0), (0.93, 5.5)] {
            let (_, us, uss, _) = u.eval_s_jet(s, t);
            // angular second derivative by central differences of the smooth field
            let d = 1e-4;
            let utt = (u.eval_s_jet(s, t + d).0 - 2.0 * u.eval_s_jet(s, t).0 + u.eval_s_jet(s, t - d).0) / (d * d);
            let r = h * s;
            let lap = (uss + us / s) / (h * h) + utt / (r * r);
            assert!((lap + g(r, t)).abs() < 1e-5, "residual {}", lap + g(r, t));
        }
        for k in 0..16 {
            let t = 0.4 * k as f64;
            let (_, us, _, _) = u.eval_s_jet(1.0, t);
            assert!((-us / h - b(t)).abs() < 1e-8);
        }
    }

    /// Second-order polar finite differences, `nr` radial cells and `nt`
    /// angles, one dense solve per angular mode.
    fn polar_fd(h: f64, g: &dyn Fn(f64, f64) -> f64, b: &dyn Fn(f64) -> f64, nr: usize, nt: usize) -> Vec<Vec<f64>> {
        let dr = h / nr as f64;
        let dth = 2.0 * PI / nt as f64;
        let th: Vec<f64> = (0..nt).map(|k| k as f64 * dth).collect();
        let mut out = vec![vec![0.0; nt]; nr + 1];
        for n in 0..=nt / 2 {
            for par in 0..2 {
                if par == 1 && (n == 0 || 2 * n == nt) {
                    continue;
                }
                let ang = |t: f64| if par == 0 { (n as f64 * t).cos() } else { (n as f64 * t).sin() };
                let w = if n == 0 || 2 * n == nt { 1.0 } else { 2.0 } / nt as f64;
                let lam = (2.0 - 2.0 * (n as f64 * dth).cos()) / (dth * dth);
                let gn: Vec<f64> = (0..=nr)
                    .map(|j| w * th.iter().map(|&t| g(j as f64 * dr, t) * ang(t)).sum::<f64>())
                    .collect();
                let bn = w * th.iter().map(|&t| b(t) * ang(t)).sum::<f64>();
                let size = nr + 2; // nodes 0..nr plus a multiplier
                let mut a = DMatrix::<f64>::zeros(size, size);
                let mut rhs = DVector::<f64>::zeros(size);
                // centre
                if n == 0 {
                    a[(0, 0)] = 4.0 / (dr * dr);
                    a[(0, 1)] = -4.0 / (dr * dr);
                    rhs[0] = gn[0];
                } else {
                    a[(0, 0)] = 1.0;
                }
                for j in 1..=nr {
                    let r = j as f64 * dr;
                    let cm = 1.0 / (dr * dr) - 1.0 / (2.0 * r * dr);
                    let cp = 1.0 / (dr * dr) + 1.0 / (2.0 * r * dr);
                    a[(j, j)] = 2.0 / (dr * dr) + lam / (r * r);
                    a[(j, j - 1)] -= cm;
                    rhs[j] = gn[j];
                    if j < nr {
                        a[(j, j + 1)] -= cp;
                    } else {
                        // ghost node: U_{nr+1} = U_{nr-1} - 2 dr b
                        a[(j, j - 1)] -= cp;
                        rhs[j] -= cp * 2.0 * dr * bn;
                    }
                }
                if n == 0 {
                    // multiplier column and trapezoid mean row
                    for j in 0..=nr {
                        a[(j, nr + 1)] = 1.0;
                        let wt = if j == nr { 0.5 } else { 1.0 };
                        a[(nr + 1, j)] = wt * j as f64 * dr;
                    }
                } else {
                    a[(nr + 1, nr + 1)] = 1.0;
                }
                let u = a.lu().solve(&rhs).unwrap();
                for j in 0..=nr {
                    for (k, &t) in th.iter().enumerate() {
                        out[j][k] += u[j] * ang(t);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn agrees_with_polar_finite_differences() {
        let (h, g, b) = smooth_data();
        let u = solve_disk_neumann(h, &g, &b).unwrap();
        let coarse = polar_fd(h, &g, &b, 128, 128);
        let fine = polar_fd(h, &g, &b, 256, 256);
        let (mut diff, mut size) = (0.0f64, 0.0f64);
        for j in 0..=128 {
            for k in 0..128 {
                let rich = (4.0 * fine[2 * j][2 * k] - coarse[j][k]) / 3.0;
                let r = h * j as f64 / 128.0;
                let t = 2.0 * PI * k as f64 / 128.0;
                diff = diff.max((u.eval_polar(r, t) - rich).abs());
                size = size.max(rich.abs());
            }
        }
        assert!(diff / size < 1e-6, "relative difference {}", diff / size);
    }
}
