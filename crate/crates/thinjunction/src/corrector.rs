//! Regular correctors `u_k(x, xi)` on each cylinder and the edge sources of
//! the higher-order graph problems.
//!
//! For every `x` the corrector solves a zero-mean Neumann problem on the disk
//! `|xi| < h(x)`. It is sampled at Chebyshev nodes in `x` on each radius
//! piece and its disk coefficients are interpolated, so `x`-derivatives at
//! fixed `xi` follow exactly from the interpolant.

use crate::cheb::{lobatto_points, ChebSeries};
use crate::config::{ConfigError, ProblemSpec, RadiusProfile};
use crate::disk::{self, eval_modes_jet, DiskError, DiskField, ModeCoeffs, N_RADIAL, N_THETA};
use crate::graph::{EdgeRhs, GraphFunction};
use crate::jet::Jet;
use crate::poly::disk_moment;
use crate::quad::gauss_legendre;
use crate::spectrum::Parity;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

const NODE_TOL: f64 = 1e-8;
const BASE_NODES: usize = 33;
const MAX_NODES: usize = 129;

#[derive(Debug, Error)]
pub enum CorrectorError {
    #[error("edge {edge}, x = {x}: {source}")]
    Disk { edge: usize, x: f64, source: DiskError },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// One angular mode with `x`-dependent radial coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSeries {
    pub n: usize,
    pub parity: Parity,
    pub c: Vec<ChebSeries>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceCorrector {
    pub a: f64,
    pub b: f64,
    pub nodes: usize,
    pub modes: Vec<ModeSeries>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorFamily {
    pub k: u32,
    pub h: [RadiusProfile; 3],
    pub edges: [Vec<PieceCorrector>; 3],
}

type JetModes = Vec<(usize, Parity, Vec<Jet>)>;

impl CorrectorFamily {
    pub fn zero(spec: &ProblemSpec, k: u32) -> Self {
        CorrectorFamily {
            k,
            h: spec.h.clone(),
            edges: std::array::from_fn(|i| {
                spec.h[i]
                    .breaks()
                    .windows(2)
                    .map(|w| PieceCorrector { a: w[0], b: w[1], nodes: 0, modes: vec![] })
                    .collect()
            }),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.edges.iter().all(|e| e.iter().all(|p| p.modes.is_empty()))
    }

    pub fn piece_index(&self, i: usize, x: f64) -> usize {
        self.h[i].piece_index(x)
    }

    fn coeff_jets(&self, i: usize, piece: usize, x: &Jet) -> JetModes {
        self.edges[i][piece]
            .modes
            .iter()
            .map(|m| (m.n, m.parity, m.c.iter().map(|c| c.eval_jet(x)).collect()))
            .collect()
    }

    /// `x`-jets of `(u, du/ds, du/dtheta)` at fixed `xi = (r, theta)`.
    fn jets_at(&self, i: usize, piece: usize, x: &Jet, r: f64, theta: f64) -> (Jet, Jet, Jet) {
        let cj = self.coeff_jets(i, piece, x);
        let s = self.h[i].eval_jet_on_piece(piece, x).recip().scale(r);
        eval_modes_jet(cj.iter().map(|(n, p, c)| (*n, *p, c.as_slice())), &s, theta)
    }

    /// `u` as a jet in `x` at fixed transverse point `(a, b)`.
    pub fn eval_jet_on_piece(&self, i: usize, piece: usize, x: &Jet, a: f64, b: f64) -> Jet {
        if self.edges[i][piece].modes.is_empty() {
            return Jet::constant(0.0, x.order);
        }
        self.jets_at(i, piece, x, a.hypot(b), b.atan2(a)).0
    }

    pub fn eval_jet(&self, i: usize, x: &Jet, a: f64, b: f64) -> Jet {
        self.eval_jet_on_piece(i, self.piece_index(i, x.value()), x, a, b)
    }

    pub fn eval(&self, i: usize, x: f64, a: f64, b: f64) -> f64 {
        self.eval_jet(i, &Jet::constant(x, 0), a, b).value()
    }

    /// `d^n u / dx^n` for `n = 0..=order` at fixed `(a, b)`.
    pub fn x_derivs(&self, i: usize, x: f64, a: f64, b: f64, order: usize) -> Vec<f64> {
        let j = self.eval_jet(i, &Jet::variable(x, order), a, b);
        (0..=order).map(|k| j.deriv(k)).collect()
    }

    /// `(u, du/dx, [du/da, du/db])`.
    pub fn eval_full(&self, i: usize, x: f64, a: f64, b: f64) -> (f64, f64, [f64; 2]) {
        let piece = self.piece_index(i, x);
        if self.edges[i][piece].modes.is_empty() {
            return (0.0, 0.0, [0.0, 0.0]);
        }
        let h = self.h[i].eval(x);
        let r = a.hypot(b);
        let theta = b.atan2(a);
        let re = r.max(disk::CENTRE_OFFSET * h);
        let (v, ds, dt) = self.jets_at(i, piece, &Jet::variable(x, 1), re, theta);
        let g = disk::polar_to_cartesian(ds.value() / h, dt.value(), re, theta);
        (v.value(), v.deriv(1), g)
    }

    /// The disk field `u(x, .)`.
    pub fn disk_field(&self, i: usize, x: f64) -> DiskField {
        let piece = self.piece_index(i, x);
        let h = self.h[i].eval(x);
        DiskField {
            h,
            modes: self.edges[i][piece]
                .modes
                .iter()
                .map(|m| ModeCoeffs { n: m.n, parity: m.parity, c: m.c.iter().map(|c| c.eval(x)).collect() })
                .collect(),
        }
    }

    /// The disk field `d^j u / dx^j (x, .)` at fixed `xi`; requires `h` to be
    /// locally constant at `x`, as it is near both ends.
    pub fn x_derivative_field(&self, i: usize, x: f64, j: usize) -> DiskField {
        let piece = self.piece_index(i, x);
        assert!(self.h[i].deriv_on_piece(piece, x, 1) == 0.0, "radius varies at x = {x}");
        let h = self.h[i].eval(x);
        DiskField {
            h,
            modes: self.edges[i][piece]
                .modes
                .iter()
                .map(|m| ModeCoeffs {
                    n: m.n,
                    parity: m.parity,
                    c: m.c
                        .iter()
                        .map(|c| {
                            let mut d = c.clone();
                            for _ in 0..j {
                                d = d.derivative();
                            }
                            d.eval(x)
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Radial `x`-jets at fixed `r = s h(x)` for each mode and each `s`.
    fn radial_jets(
        &self,
        i: usize,
        piece: usize,
        x: f64,
        svals: &[f64],
        order: usize,
        only_mean: bool,
    ) -> Vec<Vec<(usize, Parity, Jet)>> {
        let xj = Jet::variable(x, order);
        let cj: JetModes = self.edges[i][piece]
            .modes
            .iter()
            .filter(|m| !only_mean || m.n == 0)
            .map(|m| (m.n, m.parity, m.c.iter().map(|c| c.eval_jet(&xj)).collect()))
            .collect();
        let h = self.h[i].deriv_on_piece(piece, x, 0);
        let inv_h = self.h[i].eval_jet_on_piece(piece, &xj).recip();
        svals
            .iter()
            .map(|&s| {
                let sj = inv_h.scale(s * h);
                let (t, _) = disk::cheb_with_derivative(2 * N_RADIAL, &sj);
                cj.iter()
                    .map(|(n, par, c)| {
                        let p = n % 2;
                        let mut acc = Jet::constant(0.0, order);
                        for (j, cj) in c.iter().enumerate() {
                            acc = acc + *cj * t[2 * j + p];
                        }
                        (*n, *par, acc)
                    })
                    .collect()
            })
            .collect()
    }

    /// `int_{rim} du/dx dl` at `x` (derivative at fixed `xi`).
    pub fn rim_dx_integral(&self, i: usize, piece: usize, x: f64) -> f64 {
        let h = self.h[i].deriv_on_piece(piece, x, 0);
        self.radial_jets(i, piece, x, &[1.0], 1, true)[0]
            .iter()
            .map(|(_, _, j)| 2.0 * PI * h * j.deriv(1))
            .sum()
    }

    /// `int_{disk} d^2u/dx^2` at `x` (derivatives at fixed `xi`).
    pub fn disk_dxx_integral(&self, i: usize, piece: usize, x: f64) -> f64 {
        if !self.edges[i][piece].modes.iter().any(|m| m.n == 0) {
            return 0.0;
        }
        let h = self.h[i].deriv_on_piece(piece, x, 0);
        let (gx, gw) = gauss_legendre(40);
        let svals: Vec<f64> = gx.iter().map(|t| 0.5 * (t + 1.0)).collect();
        let jets = self.radial_jets(i, piece, x, &svals, 2, true);
        let acc: f64 = jets
            .iter()
            .zip(&gw)
            .zip(&svals)
            .map(|((js, w), s)| 0.5 * w * s * js.iter().map(|(_, _, j)| j.deriv(2)).sum::<f64>())
            .sum();
        2.0 * PI * h * h * acc
    }
}

/// Disk data of the order-`k` problem at `x` on a radius piece, sampled on
/// the solver grid.
fn disk_data(
    spec: &ProblemSpec,
    i: usize,
    piece: usize,
    x: f64,
    k: u32,
    omega: &GraphFunction,
    prev: &CorrectorFamily,
    fk: &crate::poly::Poly3,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (svals, thetas) = disk::sample_grid();
    let h = spec.h[i].deriv_on_piece(piece, x, 0);
    let hp = spec.h[i].deriv_on_piece(piece, x, 1);
    let w = omega.jet_on_piece(i, piece, &Jet::variable(x, 2));
    let eta = crate::config::eta_value(k - 2, hp);
    let ang = |n: usize, p: Parity, t: f64| match p {
        Parity::Cos => (n as f64 * t).cos(),
        Parity::Sin => (n as f64 * t).sin(),
    };
    let has_prev = !prev.edges[i][piece].modes.is_empty();
    let interior = if has_prev { prev.radial_jets(i, piece, x, &svals, 2, false) } else { vec![vec![]; svals.len()] };
    let g: Vec<Vec<f64>> = svals
        .iter()
        .zip(&interior)
        .map(|(&s, rj)| {
            thetas
                .iter()
                .map(|&t| {
                    let r = h * s;
                    let uxx: f64 = rj.iter().map(|(n, p, j)| j.deriv(2) * ang(*n, *p, t)).sum();
                    w.deriv(2) + uxx + fk.eval([x, r * t.cos(), r * t.sin()])
                })
                .collect()
        })
        .collect();
    let rim = if has_prev { prev.radial_jets(i, piece, x, &[1.0], 1, false).remove(0) } else { vec![] };
    let b: Vec<f64> = thetas
        .iter()
        .map(|&t| {
            let ux: f64 = rim.iter().map(|(n, p, j)| j.deriv(1) * ang(*n, *p, t)).sum();
            let phi = if eta != 0.0 { spec.phi[i].eval([x, h * t.cos(), h * t.sin()]) } else { 0.0 };
            -hp * (w.deriv(1) + ux) + eta * phi
        })
        .collect();
    debug_assert_eq!(b.len(), N_THETA);
    (g, b)
}

/// Build `u_k` from `omega_{k-2}` and `u_{k-2}`; zero for `k < 2`.
pub fn build_u_k(
    spec: &ProblemSpec,
    k: u32,
    omega_km2: &GraphFunction,
    u_km2: &CorrectorFamily,
) -> Result<CorrectorFamily, CorrectorError> {
    let mut fam = CorrectorFamily::zero(spec, k);
    if k < 2 {
        return Ok(fam);
    }
    for i in 0..3 {
        let fk = spec.taylor_source_axis(i, k - 2)?;
        let breaks = spec.h[i].breaks();
        for (piece, w) in breaks.windows(2).enumerate() {
            let solve_at = |x: f64| -> Result<DiskField, CorrectorError> {
                let (g, b) = disk_data(spec, i, piece, x, k, omega_km2, u_km2, &fk);
                let h = spec.h[i].deriv_on_piece(piece, x, 0);
                disk::solve_disk_sampled(h, &g, &b).map_err(|source| CorrectorError::Disk { edge: i, x, source })
            };
            let mut n = BASE_NODES;
            loop {
                let xs = lobatto_points(n, w[0], w[1]);
                let fields: Result<Vec<DiskField>, CorrectorError> = xs.par_iter().map(|&x| solve_at(x)).collect();
                let pc = interpolate_piece(w[0], w[1], &fields?);
                // compare against direct solves between nodes
                let probes = [0.5 * (xs[0] + xs[1]), 0.5 * (xs[n / 2] + xs[n / 2 + 1]), 0.5 * (xs[n - 2] + xs[n - 1])];
                let mut err = 0.0f64;
                let mut scale = 0.0f64;
                for &x in &probes {
                    let direct = solve_at(x)?;
                    for m in &direct.modes {
                        let interp = pc.modes.iter().find(|s| s.n == m.n && s.parity == m.parity);
                        for (j, c) in m.c.iter().enumerate() {
                            let v = interp.map(|s| s.c[j].eval(x)).unwrap_or(0.0);
                            err = err.max((c - v).abs());
                            scale = scale.max(c.abs());
                        }
                    }
                }
                if err <= NODE_TOL * scale.max(1e-300) || scale == 0.0 || n >= MAX_NODES {
                    fam.edges[i][piece] = pc;
                    break;
                }
                n = 2 * n - 1;
            }
        }
    }
    Ok(fam)
}

fn interpolate_piece(a: f64, b: f64, fields: &[DiskField]) -> PieceCorrector {
    let mut keys: Vec<(usize, Parity)> = Vec::new();
    let mut global = 0.0f64;
    for f in fields {
        for m in &f.modes {
            global = global.max(m.c.iter().fold(0.0f64, |s, c| s.max(c.abs())));
        }
    }
    for f in fields {
        for m in &f.modes {
            let big = m.c.iter().any(|c| c.abs() > 1e-14 * global);
            if big && !keys.contains(&(m.n, m.parity)) {
                keys.push((m.n, m.parity));
            }
        }
    }
    keys.sort_by_key(|(n, p)| (*n, *p == Parity::Sin));
    let modes = keys
        .into_iter()
        .map(|(n, parity)| {
            let c = (0..N_RADIAL)
                .map(|j| {
                    let vals: Vec<f64> = fields
                        .iter()
                        .map(|f| {
                            f.modes.iter().find(|m| m.n == n && m.parity == parity).map(|m| m.c[j]).unwrap_or(0.0)
                        })
                        .collect();
                    ChebSeries::from_values(a, b, &vals).trimmed(1e-16 * global)
                })
                .collect();
            ModeSeries { n, parity, c }
        })
        .collect();
    PieceCorrector { a, b, nodes: fields.len(), modes }
}

/// Edge source of the order-`k` graph problem:
/// `int f_k - eta_k int_rim phi + int d^2u_k/dx^2 + h' int_rim du_k/dx`.
pub fn build_rhs_k(spec: &ProblemSpec, k: u32, u_k: &CorrectorFamily) -> Result<EdgeRhs, ConfigError> {
    let fk: Vec<_> = (0..3).map(|i| spec.taylor_source_axis(i, k)).collect::<Result<_, _>>()?;
    Ok(EdgeRhs::from_fn(spec, &|i, x, piece| {
        let h = spec.h[i].deriv_on_piece(piece, x, 0);
        let hp = spec.h[i].deriv_on_piece(piece, x, 1);
        let mut v = disk_integral_of_poly(&fk[i], x, h);
        let eta = crate::config::eta_value(k, hp);
        if eta != 0.0 {
            v -= eta * crate::graph::circle_integral(&|a, b| spec.phi[i].eval([x, a, b]), h);
        }
        if !u_k.edges[i][piece].modes.is_empty() {
            v += u_k.disk_dxx_integral(i, piece, x);
            if hp != 0.0 {
                v += hp * u_k.rim_dx_integral(i, piece, x);
            }
        }
        v
    }))
}

/// `int_{|xi|<h} p(x, xi) dxi` by exact moments.
pub fn disk_integral_of_poly(p: &crate::poly::Poly3, x: f64, h: f64) -> f64 {
    p.terms.iter().map(|t| t.c * x.powi(t.e[0] as i32) * disk_moment(t.e[1], t.e[2], h)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cheb::PiecewiseCheb;
    use crate::graph::{assemble_rhs0, solve_limit, solve_omega_k, TransmissionData};
    use crate::poly::Poly3;
    use crate::spectrum::DiskQuadrature;

    #[test]
    fn constant_data_gives_zero_u2() {
        let spec = ProblemSpec::uniform(0.3, 0.25, Poly3::constant(1.0));
        let w0 = solve_limit(&spec, &assemble_rhs0(&spec));
        let u2 = build_u_k(&spec, 2, &w0, &CorrectorFamily::zero(&spec, 0)).unwrap();
        for i in 0..3 {
            assert!(u2.eval(i, 0.4, 0.1, -0.05).abs() < 1e-10);
        }
    }

    #[test]
    fn transverse_linear_source_matches_closed_form() {
        // f = x2 on edge 0: -Lap u3 = xi_a with zero Neumann data,
        // u3 = (3 h^2 r - r^3)/8 cos(t)
        let spec = ProblemSpec::uniform(0.3, 0.25, Poly3::from_terms(&[(1.0, [0, 1, 0])]));
        let w1 = solve_limit(&spec, &EdgeRhs::zero(&spec));
        let u3 = build_u_k(&spec, 3, &w1, &CorrectorFamily::zero(&spec, 1)).unwrap();
        let h: f64 = 0.25;
        for &(r, t) in &[(0.05, 0.3), (0.2, 2.0), (0.25, 4.0)] {
            let (a, b) = (r * f64::cos(t), r * f64::sin(t));
            let exact = (3.0 * h * h * r - r.powi(3)) / 8.0 * t.cos();
            assert!((u3.eval(0, 0.5, a, b) - exact).abs() < 1e-12);
        }
    }

    fn tapered() -> ProblemSpec {
        let mut spec = ProblemSpec::uniform(0.3, 0.25, Poly3::from_terms(&[(1.0, [0, 0, 0]), (0.5, [1, 1, 0])]));
        spec.h[0] = RadiusProfile::taper(0.25, 0.18, 0.2, 0.8);
        spec.phi[0] = Poly3::from_terms(&[(0.3, [1, 0, 1]), (0.2, [0, 0, 0])]);
        spec.order = 4;
        spec
    }

    #[test]
    fn variable_radius_chain_is_compatible_and_zero_mean() {
        let spec = tapered();
        let w0 = solve_limit(&spec, &assemble_rhs0(&spec));
        let u2 = build_u_k(&spec, 2, &w0, &CorrectorFamily::zero(&spec, 0)).unwrap();
        assert!(!u2.is_zero());
        for j in 0..50 {
            let x = (j as f64 + 0.5) / 50.0;
            for i in 0..3 {
                assert!(u2.disk_field(i, x).mean().abs() < 1e-10);
            }
        }
        let rhs2 = build_rhs_k(&spec, 2, &u2).unwrap();
        let w2 = solve_omega_k(&spec, &rhs2, &TransmissionData::new(0.01, -0.02, 0.003));
        // the order-4 disk problems must be solvable with this omega_2
        let u4 = build_u_k(&spec, 4, &w2, &u2).unwrap();
        assert!(u4.disk_field(0, 0.5).mean().abs() < 1e-10);
    }

    #[test]
    fn rhs_integral_form_matches_derivative_form() {
        // int u_xx + h' int_rim u_x = -(h' int_rim u)' since int u = 0 for all x
        let spec = tapered();
        let w0 = solve_limit(&spec, &assemble_rhs0(&spec));
        let u2 = build_u_k(&spec, 2, &w0, &CorrectorFamily::zero(&spec, 0)).unwrap();
        let breaks = spec.h[0].breaks();
        let q = PiecewiseCheb::fit_adaptive_pieces(
            &|x, k| spec.h[0].deriv_on_piece(k, x, 1) * rim_integral(&u2, 0, k, x),
            &breaks,
            1e-14,
        )
        .derivative();
        for &x in &[0.3, 0.5, 0.7] {
            let k = spec.h[0].piece_index(x);
            let hp = spec.h[0].deriv_on_piece(k, x, 1);
            let lhs = u2.disk_dxx_integral(0, k, x) + hp * u2.rim_dx_integral(0, k, x);
            assert!((lhs + q.eval(x)).abs() < 1e-8, "{lhs} vs {}", -q.eval(x));
        }
    }

    fn rim_integral(u: &CorrectorFamily, i: usize, piece: usize, x: f64) -> f64 {
        let f = u.disk_field(i, x);
        let _ = piece;
        f.circle_integral()
    }

    #[test]
    fn disk_moments_match_quadrature() {
        let p = Poly3::from_terms(&[(1.0, [1, 2, 0]), (-2.0, [0, 2, 2]), (0.5, [0, 0, 0])]);
        let q = DiskQuadrature::new(0.3, 20, 32);
        let num = q.integrate(&|r, t| p.eval([0.7, r * t.cos(), r * t.sin()]));
        assert!((disk_integral_of_poly(&p, 0.7, 0.3) - num).abs() < 1e-15);
    }

    #[test]
    fn first_order_rhs_is_source_integral() {
        let spec = ProblemSpec::uniform(0.3, 0.25, Poly3::from_terms(&[(1.0, [0, 1, 0]), (2.0, [1, 0, 1])]));
        let rhs = build_rhs_k(&spec, 1, &CorrectorFamily::zero(&spec, 1)).unwrap();
        for i in 0..3 {
            assert!(rhs.eval(i, 0.6).abs() < 1e-14);
        }
    }
}
