//! Inner problems on the junction domain: the box with three semi-infinite
//! cylindrical outlets, truncated at `xi_i = R` with natural conditions on
//! the cut.
//!
//! Solutions are normalized so that the mean over the outlet-1 end disk is
//! zero. Plateaus are cross-section means at stations `R-3, R-2, R-1`.

use crate::config::{global_to_local, ProblemSpec};
use crate::corrector::{disk_integral_of_poly, CorrectorFamily};
use crate::cutoff::{junction_ramp, Ramp};
use crate::disk::DiskField;
use crate::fem;
use crate::graph::GraphFunction;
use crate::jet::factorial;
use crate::mesh::{area_preserving_radius, junction_geometry, Locator, MeshParams, Tag, TetMesh};
use crate::poly::{circle_moment, Poly3};
use crate::sparse::{pcg_two_level, CgStats, CoarseSpace, Constraint, Csr, SolveError};
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

pub const CG_TOL: f64 = 1e-10;
pub const CG_MAX_ITER: usize = 200_000;
/// Tetrahedral rule degree for loads and integrals.
pub const QUAD_DEGREE: usize = 5;
/// Default truncation: this many units past the box face.
pub const DEFAULT_EXTENT: f64 = 6.0;

#[derive(Debug, Error)]
pub enum JunctionError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("solvability defect {defect:e} exceeds tolerance {tol:e}")]
    Unsolvable { defect: f64, tol: f64 },
    #[error("plateau at outlet {outlet} not converged (station difference {diff:e}); increase the truncation length")]
    Plateau { outlet: usize, diff: f64 },
}

pub struct TruncatedJunction {
    pub ell: f64,
    pub h0: [f64; 3],
    pub r_trunc: f64,
    pub params: MeshParams,
    pub mesh: TetMesh,
    pub stiffness: Csr,
    pub locator: Locator,
    pub coarse: CoarseSpace,
}

impl TruncatedJunction {
    /// Truncation lengths must exceed this to fit the plateau stations.
    pub fn min_truncation(ell: f64) -> f64 {
        ell + 3.0
    }

    pub fn new(ell: f64, h0: [f64; 3], r_trunc: f64, params: &MeshParams) -> Self {
        assert!(r_trunc > Self::min_truncation(ell), "truncation must leave room for the plateau stations");
        let mesh = TetMesh::build(&junction_geometry(ell, h0, r_trunc, params), params);
        let stiffness = fem::stiffness(&mesh);
        let locator = Locator::new(&mesh);
        let diam = 2.0 * h0.iter().fold(0.0f64, |a, &b| a.max(b));
        let coarse = mesh.axial_coarse_space(diam);
        TruncatedJunction { ell, h0, r_trunc, params: params.clone(), mesh, stiffness, locator, coarse }
    }

    pub fn for_spec(spec: &ProblemSpec, r_trunc: f64, params: &MeshParams) -> Self {
        Self::new(spec.ell, spec.h0(), r_trunc, params)
    }

    /// Largest deviation of the polygonal section from the circle.
    pub fn polygon_radius_error(&self, i: usize) -> f64 {
        let n = self.params.segments;
        let rho = area_preserving_radius(self.h0[i], n);
        (rho - self.h0[i]).max(self.h0[i] - rho * (PI / n as f64).cos())
    }

    /// `2 pi h / |polygon|` for every outlet.
    pub fn perimeter_ratio(&self) -> f64 {
        crate::mesh::perimeter_ratio(self.params.segments)
    }

    pub fn radius_error_bound(&self, i: usize) -> f64 {
        self.h0[i] * (1.0 - (PI / self.params.segments as f64).cos())
    }

    pub fn plateau_stations(&self) -> [f64; 3] {
        [self.r_trunc - 3.0, self.r_trunc - 2.0, self.r_trunc - 1.0]
    }

    /// Cross-section mean of a nodal field at the station nearest `s`.
    pub fn section_mean(&self, u: &[f64], i: usize, s: f64) -> f64 {
        let c = &self.mesh.cylinders[i];
        c.section_mean(&self.mesh, c.nearest_station(s), u)
    }

    pub fn end_mean(&self, u: &[f64], i: usize) -> f64 {
        let c = &self.mesh.cylinders[i];
        c.section_mean(&self.mesh, c.stations.len() - 1, u)
    }

    pub fn plateaus(&self, u: &[f64]) -> [[f64; 3]; 3] {
        let st = self.plateau_stations();
        std::array::from_fn(|i| std::array::from_fn(|k| self.section_mean(u, i, st[k])))
    }

    /// Least-squares slope of section means over the plateau stations.
    pub fn far_slope(&self, u: &[f64], i: usize) -> f64 {
        let c = &self.mesh.cylinders[i];
        let [a, _, b] = self.plateau_stations();
        let pts: Vec<(f64, f64)> = c
            .stations
            .iter()
            .enumerate()
            .filter(|(_, &s)| s >= a - 1e-9 && s <= b + 1e-9)
            .map(|(k, &s)| (s, c.section_mean(&self.mesh, k, u)))
            .collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let sy: f64 = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let num: f64 = pts.iter().map(|p| (p.0 - sx) * (p.1 - sy)).sum();
        let den: f64 = pts.iter().map(|p| (p.0 - sx).powi(2)).sum();
        num / den
    }

    /// Flux `int d u / d xi_i` through the last cross-section of outlet `i`.
    pub fn end_flux(&self, u: &[f64], i: usize) -> f64 {
        let c = &self.mesh.cylinders[i];
        let n = c.stations.len() - 1;
        let d = c.stations[n] - c.stations[n - 1];
        let area = c.section_area(&self.mesh, n);
        area * (c.section_mean(&self.mesh, n, u) - c.section_mean(&self.mesh, n - 1, u)) / d
    }

    /// Outlet whose cylinder contains `xi`, if any.
    pub fn outlet_of(&self, xi: [f64; 3]) -> Option<usize> {
        (0..3).find(|&i| xi[i] > self.ell)
    }

    /// Pure Neumann solve of `A u = b`, normalized on the outlet-1 end.
    fn solve_load(&self, b: &[f64]) -> Result<(Vec<f64>, CgStats), JunctionError> {
        let (mut u, stats) = pcg_two_level(&self.stiffness, b, &Constraint::ZeroMean, CG_TOL, CG_MAX_ITER, Some(&self.coarse))?;
        let m = self.end_mean(&u, 0);
        u.iter_mut().for_each(|v| *v -= m);
        Ok((u, stats))
    }

    /// P1 interpolation of a nodal field.
    pub fn interpolate(&self, u: &[f64], xi: [f64; 3]) -> Option<f64> {
        self.locator.interpolate(&self.mesh, u, xi)
    }

    /// P1 value and gradient at `xi`.
    pub fn interpolate_grad(&self, u: &[f64], xi: [f64; 3]) -> Option<(f64, [f64; 3])> {
        self.locator.locate(&self.mesh, xi).map(|(t, l)| {
            let v = self.mesh.tets[t];
            ((0..4).map(|k| l[k] * u[v[k]]).sum(), fem::gradient(&self.mesh, u, t))
        })
    }

    /// P1 value and interpolated recovered gradient `g` (see
    /// [`fem::recover_gradient`]) at `xi`.
    pub fn interpolate_recovered(&self, u: &[f64], g: &[[f64; 3]], xi: [f64; 3]) -> Option<(f64, [f64; 3])> {
        self.locator.locate(&self.mesh, xi).map(|(t, l)| {
            let v = self.mesh.tets[t];
            let mut out = [0.0; 3];
            for k in 0..4 {
                for d in 0..3 {
                    out[d] += l[k] * g[v[k]][d];
                }
            }
            ((0..4).map(|k| l[k] * u[v[k]]).sum(), out)
        })
    }

    pub fn node_count(&self) -> usize {
        self.mesh.nodes.len()
    }
}

/// Data of the order-`k` inner problem for the decaying part.
#[derive(Clone, Debug)]
pub struct InnerRhs {
    pub k: u32,
    pub ell: f64,
    pub h0: [f64; 3],
    /// `d^j omega_{k-j} / dx^j (0)` at index `j - 1`, `j = 1..=k`.
    pub omega_d: [Vec<f64>; 3],
    /// `d^j u_{k-j} / dx^j (0, .)` at index `j`, `j = 0..=k-2`.
    pub u_fields: [Vec<DiskField>; 3],
    /// `(xi, grad)^{k-2} f(0) / (k-2)!` in global fast variables.
    pub source: Poly3,
    /// `xi_i^{k-2} / (k-2)! d^{k-2} phi / dx^{k-2} (0, .)` in local variables.
    pub lateral: [Poly3; 3],
    ramp: Ramp,
}

impl InnerRhs {
    pub fn zero(k: u32, ell: f64, h0: [f64; 3]) -> Self {
        InnerRhs {
            k,
            ell,
            h0,
            omega_d: std::array::from_fn(|_| vec![0.0; k as usize]),
            u_fields: std::array::from_fn(|_| Vec::new()),
            source: Poly3::zero(),
            lateral: std::array::from_fn(|_| Poly3::zero()),
            ramp: junction_ramp(ell),
        }
    }

    pub fn ramp(&self) -> Ramp {
        self.ramp
    }

    /// Matching polynomial `Psi_k` on outlet `i` at local `(s, a, b)`:
    /// value, `d/ds` and transverse gradient.
    pub fn psi(&self, i: usize, s: f64, a: f64, b: f64) -> (f64, f64, [f64; 2]) {
        let (mut v, mut ds, mut g) = (0.0, 0.0, [0.0; 2]);
        for (jm1, &w) in self.omega_d[i].iter().enumerate() {
            let j = jm1 + 1;
            v += s.powi(j as i32) / factorial(j) * w;
            ds += s.powi(jm1 as i32) / factorial(jm1) * w;
        }
        for (j, u) in self.u_fields[i].iter().enumerate() {
            if u.is_zero() {
                continue;
            }
            let (uv, ug) = u.eval_grad(a, b);
            let c = s.powi(j as i32) / factorial(j);
            v += c * uv;
            g[0] += c * ug[0];
            g[1] += c * ug[1];
            if j >= 1 {
                ds += s.powi(j as i32 - 1) / factorial(j - 1) * uv;
            }
        }
        (v, ds, g)
    }

    /// Volume source of the decaying problem.
    pub fn volume(&self, xi: [f64; 3]) -> f64 {
        let fk = if self.source.is_zero() { 0.0 } else { self.source.eval(xi) };
        match (0..3).find(|&i| xi[i] > self.ell) {
            None => fk,
            Some(i) => {
                let [s, a, b] = global_to_local(i, xi);
                let (c, c1, c2) = self.ramp.eval(s);
                let mut v = (1.0 - c) * fk;
                if c1 != 0.0 || c2 != 0.0 {
                    let (p, dp, _) = self.psi(i, s, a, b);
                    v += p * c2 + 2.0 * dp * c1;
                }
                v
            }
        }
    }

    /// Lateral data `B~` on outlet `i`.
    pub fn boundary(&self, i: usize, xi: [f64; 3]) -> f64 {
        if self.lateral[i].is_zero() {
            return 0.0;
        }
        let [s, a, b] = global_to_local(i, xi);
        (1.0 - self.ramp.value(s)) * self.lateral[i].eval([s, a, b])
    }

    pub fn is_zero(&self) -> bool {
        self.omega_d.iter().all(|w| w.iter().all(|&v| v == 0.0))
            && self.u_fields.iter().all(|u| u.iter().all(|f| f.is_zero()))
            && self.source.is_zero()
            && self.lateral.iter().all(|p| p.is_zero())
    }

    /// Semi-analytic `int F~ - sum int B~` on the untruncated domain: exact
    /// moments across sections and Gauss-Legendre along the outlets.
    pub fn solvability_integral(&self) -> f64 {
        let ell = self.ell;
        let mut total = box_integral(&self.source, ell);
        let (xs, ws) = crate::quad::gauss_legendre(24);
        for i in 0..3 {
            let h = self.h0[i];
            let src = self.source.permute(local_perm(i));
            // sections from ell to ell+1 (no ramp), then the ramp band
            for (lo, hi) in [(ell, ell + 1.0), (ell + 1.0, ell + 2.0)] {
                for (x, w) in xs.iter().zip(&ws) {
                    let s = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x;
                    let wt = 0.5 * (hi - lo) * w;
                    let (c, c1, c2) = self.ramp.eval(s);
                    let mut sec = (1.0 - c) * disk_integral_of_poly(&src, s, h);
                    if c1 != 0.0 || c2 != 0.0 {
                        // the u-parts of Psi are mean-free on the section
                        let (mut p, mut dp) = (0.0, 0.0);
                        for (jm1, &wd) in self.omega_d[i].iter().enumerate() {
                            let j = jm1 + 1;
                            p += s.powi(j as i32) / factorial(j) * wd;
                            dp += s.powi(jm1 as i32) / factorial(jm1) * wd;
                        }
                        sec += PI * h * h * (p * c2 + 2.0 * dp * c1);
                    }
                    let lat: f64 = self.lateral[i]
                        .terms
                        .iter()
                        .map(|t| t.c * s.powi(t.e[0] as i32) * circle_moment(t.e[1], t.e[2], h))
                        .sum();
                    sec -= (1.0 - c) * lat;
                    total += wt * sec;
                }
            }
        }
        total
    }
}

/// Permutation taking global variables to local ones of cylinder `i`.
fn local_perm(i: usize) -> [usize; 3] {
    let (a, b) = crate::config::transverse_axes(i);
    [i, a, b]
}

/// `int_{(-l, l)^3} p`, exact.
pub fn box_integral(p: &Poly3, ell: f64) -> f64 {
    let m = |e: u32| if e % 2 == 1 { 0.0 } else { 2.0 * ell.powi(e as i32 + 1) / (e as f64 + 1.0) };
    p.terms.iter().map(|t| t.c * m(t.e[0]) * m(t.e[1]) * m(t.e[2])).sum()
}

/// Inner data at order `k` from the regular hierarchy: `omegas[m]` is
/// `omega_m` for `m < k`, `us[m]` is `u_m` for `m <= k`.
pub fn build_inner_rhs(spec: &ProblemSpec, k: u32, omegas: &[GraphFunction], us: &[CorrectorFamily]) -> InnerRhs {
    let mut r = InnerRhs::zero(k, spec.ell, spec.h0());
    for i in 0..3 {
        r.omega_d[i] = (1..=k as usize).map(|j| omegas[k as usize - j].deriv(i, 0.0, j)).collect();
        if k >= 2 {
            r.u_fields[i] = (0..=k as usize - 2)
                .map(|j| {
                    let u = &us[k as usize - j];
                    if u.is_zero() {
                        DiskField::zero(spec.h0()[i])
                    } else {
                        u.x_derivative_field(i, 0.0, j)
                    }
                })
                .collect();
        }
    }
    if k >= 2 {
        r.source = spec.f.homogeneous_part(k - 2);
        r.lateral = std::array::from_fn(|i| {
            let mut p = Poly3 { terms: spec.phi[i].terms.iter().filter(|t| t.e[0] == k - 2).copied().collect() };
            p.normalize();
            p
        });
    }
    r
}

/// `|int F~ - sum int B~|` by mesh quadrature.
pub fn check_solvability(tj: &TruncatedJunction, rhs: &InnerRhs) -> f64 {
    signed_defect(tj, rhs).abs()
}

fn signed_defect(tj: &TruncatedJunction, rhs: &InnerRhs) -> f64 {
    let vol = fem::integrate(&tj.mesh, &|x| rhs.volume(x), &|_| true, QUAD_DEGREE);
    let bnd = fem::integrate_boundary(&tj.mesh, &|t| matches!(t, Tag::Lateral(_)), &|t, x| lateral_eval(tj, rhs, t, x), QUAD_DEGREE);
    vol - bnd
}

/// Lateral data rescaled by circle over polygon perimeter, so that its
/// total matches the one on the round outlet.
fn lateral_eval(tj: &TruncatedJunction, rhs: &InnerRhs, t: Tag, x: [f64; 3]) -> f64 {
    match t {
        Tag::Lateral(i) => tj.perimeter_ratio() * rhs.boundary(i, x),
        _ => 0.0,
    }
}

/// Nodal solution of an inner problem with plateau metadata.
#[derive(Clone, Debug, Serialize)]
pub struct JunctionField {
    #[serde(skip)]
    pub values: Vec<f64>,
    /// Section means per outlet at the plateau stations.
    pub plateaus: [[f64; 3]; 3],
    pub iterations: usize,
    pub residual: f64,
    pub defect: f64,
}

impl JunctionField {
    pub fn plateau(&self, i: usize) -> f64 {
        self.plateaus[i][2]
    }

    /// Difference between the last two plateau stations.
    pub fn cauchy(&self, i: usize) -> f64 {
        (self.plateaus[i][2] - self.plateaus[i][1]).abs()
    }

    pub fn check_plateaus(&self, tol: f64) -> Result<(), JunctionError> {
        for i in 0..3 {
            if self.cauchy(i) > tol {
                return Err(JunctionError::Plateau { outlet: i, diff: self.cauchy(i) });
            }
        }
        Ok(())
    }
}

fn assemble_load(tj: &TruncatedJunction, vol: &fem::Field3<'_>, lateral: &dyn Fn(Tag, [f64; 3]) -> f64) -> Vec<f64> {
    let mut b = fem::volume_load(&tj.mesh, vol, QUAD_DEGREE);
    let bl = fem::boundary_load(&tj.mesh, &|t| matches!(t, Tag::Lateral(_)), lateral, QUAD_DEGREE);
    b.iter_mut().zip(&bl).for_each(|(x, y)| *x -= y);
    b
}

/// Decaying solution `N^_k`: weak solution normalized on the outlet-1 end.
pub fn solve_decaying(tj: &TruncatedJunction, rhs: &InnerRhs, tol: f64) -> Result<JunctionField, JunctionError> {
    let defect = signed_defect(tj, rhs);
    if defect.abs() > tol {
        return Err(JunctionError::Unsolvable { defect: defect.abs(), tol });
    }
    if rhs.is_zero() {
        let values = vec![0.0; tj.node_count()];
        return Ok(JunctionField { plateaus: [[0.0; 3]; 3], values, iterations: 0, residual: 0.0, defect });
    }
    let b = assemble_load(tj, &|x| rhs.volume(x), &|t, x| lateral_eval(tj, rhs, t, x));
    let (values, st) = tj.solve_load(&b)?;
    Ok(JunctionField { plateaus: tj.plateaus(&values), values, iterations: st.iterations, residual: st.residual, defect })
}

/// Special solution growing linearly into outlets 1 and `outlet`.
#[derive(Clone, Debug, Serialize)]
pub struct SpecialSolution {
    pub outlet: usize,
    /// Coefficients of `xi_i chi_i` in the lift, per outlet.
    pub lift: [f64; 3],
    pub remainder: JunctionField,
    /// Fitted slopes of the full solution over the plateau stations.
    pub slopes: [f64; 3],
    /// Outward fluxes through the outlet cuts.
    pub fluxes: [f64; 3],
    #[serde(skip)]
    ramp: Option<Ramp>,
}

impl SpecialSolution {
    pub fn constants(&self) -> [f64; 3] {
        [self.remainder.plateau(0), self.remainder.plateau(1), self.remainder.plateau(2)]
    }

    pub fn flux_balance(&self) -> f64 {
        self.fluxes.iter().sum()
    }

    pub fn lift_value(&self, xi: [f64; 3]) -> f64 {
        let r = self.ramp.expect("ramp");
        (0..3).filter(|&i| self.lift[i] != 0.0).map(|i| self.lift[i] * xi[i] * r.value(xi[i])).sum()
    }

    pub fn lift_grad(&self, xi: [f64; 3]) -> [f64; 3] {
        let r = self.ramp.expect("ramp");
        std::array::from_fn(|i| {
            let (c, c1, _) = r.eval(xi[i]);
            self.lift[i] * (c + xi[i] * c1)
        })
    }

    /// `Delta` of the lift: the source of the decaying remainder.
    pub fn lift_laplacian(&self, xi: [f64; 3]) -> f64 {
        let r = self.ramp.expect("ramp");
        (0..3)
            .filter(|&i| self.lift[i] != 0.0 && xi[i] > r.a)
            .map(|i| {
                let (_, c1, c2) = r.eval(xi[i]);
                self.lift[i] * (2.0 * c1 + xi[i] * c2)
            })
            .sum()
    }

    /// Full solution at the mesh nodes.
    pub fn nodal(&self, tj: &TruncatedJunction) -> Vec<f64> {
        tj.mesh.nodes.iter().zip(&self.remainder.values).map(|(&p, r)| self.lift_value(p) + r).collect()
    }

    pub fn eval(&self, tj: &TruncatedJunction, xi: [f64; 3]) -> Option<f64> {
        tj.interpolate(&self.remainder.values, xi).map(|v| v + self.lift_value(xi))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Specials {
    /// Solutions growing into outlets 2 and 3.
    pub n: [SpecialSolution; 2],
}

impl Specials {
    /// `C_m^{(j)}` for `m, j` in `{2, 3}`.
    pub fn c(&self, m: usize, j: usize) -> f64 {
        self.n[m - 2].constants()[j - 1]
    }
}

fn lift_coeffs(h0: [f64; 3], outlet: usize) -> [f64; 3] {
    let mut c = [0.0; 3];
    c[0] = -1.0 / (PI * h0[0] * h0[0]);
    c[outlet] = 1.0 / (PI * h0[outlet] * h0[outlet]);
    c
}

/// Special solutions via a lift and a decaying remainder.
pub fn solve_special(tj: &TruncatedJunction) -> Result<Specials, JunctionError> {
    let make = |outlet: usize| -> Result<SpecialSolution, JunctionError> {
        let mut s = SpecialSolution {
            outlet,
            lift: lift_coeffs(tj.h0, outlet),
            remainder: JunctionField { values: vec![], plateaus: [[0.0; 3]; 3], iterations: 0, residual: 0.0, defect: 0.0 },
            slopes: [0.0; 3],
            fluxes: [0.0; 3],
            ramp: Some(junction_ramp(tj.ell)),
        };
        let lifted = s.clone();
        let src = move |x: [f64; 3]| lifted.lift_laplacian(x);
        let defect = fem::integrate(&tj.mesh, &src, &|_| true, QUAD_DEGREE);
        let b = fem::volume_load(&tj.mesh, &src, QUAD_DEGREE);
        let (values, st) = tj.solve_load(&b)?;
        let total: Vec<f64> = tj.mesh.nodes.iter().zip(&values).map(|(&p, r)| s.lift_value(p) + r).collect();
        s.slopes = std::array::from_fn(|i| tj.far_slope(&total, i));
        s.fluxes = std::array::from_fn(|i| tj.end_flux(&total, i));
        s.remainder = JunctionField { plateaus: tj.plateaus(&values), values, iterations: st.iterations, residual: st.residual, defect };
        Ok(s)
    };
    Ok(Specials { n: [make(1)?, make(2)?] })
}

/// Special solutions from flux data on the outlet cuts, with no lift; a
/// cross-check of [`solve_special`]. Normalized to `-xi_1 / (pi h_1^2)` on
/// the outlet-1 cut.
pub fn solve_special_end_flux(tj: &TruncatedJunction, outlet: usize) -> Result<Vec<f64>, JunctionError> {
    let c = lift_coeffs(tj.h0, outlet);
    let b = fem::boundary_load(&tj.mesh, &|t| matches!(t, Tag::End(_)), &|t, _| if let Tag::End(i) = t { c[i] } else { 0.0 }, 2);
    let (mut u, _) = tj.solve_load(&b)?;
    let shift = c[0] * tj.r_trunc;
    u.iter_mut().for_each(|v| *v += shift);
    Ok(u)
}

/// `(delta^{(2)}, delta^{(3)})` from the Green identity with the special
/// solutions. The lift enters through its nodal interpolant, which keeps
/// the identity consistent with the discrete plateaus.
pub fn compute_delta(tj: &TruncatedJunction, rhs: &InnerRhs, sp: &Specials) -> [f64; 2] {
    if rhs.is_zero() {
        return [0.0, 0.0];
    }
    let (a, b) = (sp.n[0].nodal(tj), sp.n[1].nodal(tj));
    compute_delta_nodal(tj, rhs, [&a, &b])
}

/// Same as [`compute_delta`] with nodal special solutions (no lift).
pub fn compute_delta_nodal(tj: &TruncatedJunction, rhs: &InnerRhs, specials: [&[f64]; 2]) -> [f64; 2] {
    let lat = |t: Tag| matches!(t, Tag::Lateral(_));
    std::array::from_fn(|m| {
        fem::integrate_product(&tj.mesh, specials[m], &|x| rhs.volume(x), QUAD_DEGREE)
            - fem::integrate_boundary_product(&tj.mesh, specials[m], &lat, &|t, x| lateral_eval(tj, rhs, t, x), QUAD_DEGREE)
    })
}

/// Flux constant `d_k^*` of the order-`k` graph problem.
pub fn compute_dstar(spec: &ProblemSpec, k: u32) -> Result<f64, crate::config::ConfigError> {
    if k == 0 {
        return Ok(0.0);
    }
    let ell = spec.ell;
    let mut d = 0.0;
    for i in 0..3 {
        let h = spec.h0()[i];
        for j in 1..=k {
            let fk = spec.taylor_source_axis(i, k - j)?.deriv(0, j - 1);
            d += ell.powi(j as i32) / factorial(j as usize) * disk_integral_of_poly(&fk, 0.0, h);
        }
        let dphi = spec.phi[i].deriv(0, k - 1);
        let circ: f64 = dphi
            .terms
            .iter()
            .filter(|t| t.e[0] == 0)
            .map(|t| t.c * circle_moment(t.e[1], t.e[2], h))
            .sum();
        d -= ell.powi(k as i32) / factorial(k as usize) * circ;
    }
    d -= box_integral(&spec.f.homogeneous_part(k - 1), ell);
    Ok(d)
}

/// Inner term `N_k = sum Psi_k chi_i + omega_k^{(1)}(0) + N^_k`.
#[derive(Clone, Debug)]
pub struct InnerTerm {
    pub k: u32,
    pub rhs: InnerRhs,
    pub base: f64,
    pub field: JunctionField,
    /// `omega_k^{(i)}(0)` for the far-field comparison.
    pub omega0: [f64; 3],
    zero_field: bool,
    /// Recovered nodal gradient of the decaying part.
    grad: Vec<[f64; 3]>,
}

impl InnerTerm {
    /// Constant term, e.g. `N_0 = omega_0^{(1)}(0)`.
    pub fn constant(k: u32, ell: f64, h0: [f64; 3], value: f64) -> Self {
        InnerTerm {
            k,
            rhs: InnerRhs::zero(k, ell, h0),
            base: value,
            field: JunctionField { values: vec![], plateaus: [[0.0; 3]; 3], iterations: 0, residual: 0.0, defect: 0.0 },
            omega0: [value; 3],
            zero_field: true,
            grad: vec![],
        }
    }

    pub fn has_field(&self) -> bool {
        !self.zero_field
    }

    /// Value and gradient in fast variables. Past the truncation the
    /// decaying part is continued by its plateau.
    pub fn eval(&self, tj: Option<&TruncatedJunction>, xi: [f64; 3]) -> Option<(f64, [f64; 3])> {
        let ell = self.rhs.ell;
        let outlet = (0..3).find(|&i| xi[i] > ell);
        let (nv, ng) = if self.zero_field {
            (0.0, [0.0; 3])
        } else {
            let tj = tj?;
            match outlet {
                Some(i) if xi[i] >= tj.r_trunc => (self.field.plateau(i), [0.0; 3]),
                _ => tj.interpolate_recovered(&self.field.values, &self.grad, xi)?,
            }
        };
        let (mut v, mut g) = (self.base + nv, ng);
        if let Some(i) = outlet {
            let [s, a, b] = global_to_local(i, xi);
            let (c, c1, _) = self.rhs.ramp().eval(s);
            if c != 0.0 {
                let (p, dp, pg) = self.rhs.psi(i, s, a, b);
                v += p * c;
                let (ia, ib) = crate::config::transverse_axes(i);
                g[i] += dp * c + p * c1;
                g[ia] += pg[0] * c;
                g[ib] += pg[1] * c;
            }
        }
        Some((v, g))
    }

    /// Far field `G_k = omega_k^{(i)}(0) + Psi_k` on outlet `i`: value, `d/ds`
    /// and transverse gradient.
    pub fn far_field(&self, i: usize, s: f64, a: f64, b: f64) -> (f64, f64, [f64; 2]) {
        let (p, dp, g) = self.rhs.psi(i, s, a, b);
        (self.omega0[i] + p, dp, g)
    }

    /// Section means of `N_k - G_k` at the plateau stations.
    pub fn far_defect(&self, i: usize) -> [f64; 3] {
        std::array::from_fn(|k| self.field.plateaus[i][k] + self.base - self.omega0[i])
    }
}

pub fn assemble_n(tj: &TruncatedJunction, k: u32, omega_k: &GraphFunction, rhs: InnerRhs, field: JunctionField) -> InnerTerm {
    let omega0 = [omega_k.value(0, 0.0), omega_k.value(1, 0.0), omega_k.value(2, 0.0)];
    let zero_field = field.values.iter().all(|&v| v == 0.0);
    // the P1 gradient is poor where the field carries the lifted far field
    let grad = if zero_field { vec![] } else { fem::recover_gradient(&tj.mesh, &field.values) };
    InnerTerm { k, rhs, base: omega0[0], field, omega0, zero_field, grad }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{assemble_rhs0, solve_limit};
    use std::sync::OnceLock;

    fn coarse() -> &'static TruncatedJunction {
        static TJ: OnceLock<TruncatedJunction> = OnceLock::new();
        TJ.get_or_init(|| {
            let p = MeshParams { segments: 24, core: 0.5, axial: 0.4 };
            TruncatedJunction::new(0.3, [0.25, 0.25, 0.25], 0.3 + 5.0, &p)
        })
    }

    fn x1_spec() -> ProblemSpec {
        ProblemSpec::uniform(0.3, 0.25, Poly3::from_terms(&[(1.0, [1, 0, 0])]))
    }

    #[test]
    fn dstar_closed_form() {
        let spec = ProblemSpec::uniform(0.3, 0.25, Poly3::constant(1.0));
        let d1 = compute_dstar(&spec, 1).unwrap();
        assert!((d1 - (0.3 * 3.0 * PI * 0.0625 - 0.216)).abs() < 1e-14);
        assert!((d1 + 0.039285).abs() < 1e-6);
        assert_eq!(compute_dstar(&spec, 0).unwrap(), 0.0);
        let zero = ProblemSpec::uniform(0.3, 0.25, Poly3::zero());
        assert!((1..5).all(|k| compute_dstar(&zero, k).unwrap() == 0.0));
    }

    #[test]
    fn solvability_is_kirchhoff_at_first_order() {
        let tj = coarse();
        let spec = x1_spec();
        let w0 = solve_limit(&spec, &assemble_rhs0(&spec));
        let us = vec![CorrectorFamily::zero(&spec, 0), CorrectorFamily::zero(&spec, 1)];
        let mut rhs = build_inner_rhs(&spec, 1, &[w0], &us);
        assert!(check_solvability(tj, &rhs) < 1e-10);
        assert!(rhs.solvability_integral().abs() < 1e-10);
        rhs.omega_d[0][0] += 0.1;
        let d = check_solvability(tj, &rhs);
        assert!((d - 0.1 * PI * 0.0625).abs() < 1e-10, "{d}");
        assert!((rhs.solvability_integral() - 0.1 * PI * 0.0625).abs() < 1e-10);
    }

    #[test]
    fn zero_data_gives_zero_field() {
        let tj = coarse();
        let rhs = InnerRhs::zero(1, 0.3, [0.25; 3]);
        let f = solve_decaying(tj, &rhs, 1e-6).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
        assert!(check_solvability(tj, &rhs) == 0.0);
    }

    #[test]
    fn special_solution_far_field() {
        let tj = coarse();
        let sp = solve_special(tj).unwrap();
        let slope = 1.0 / (PI * 0.0625);
        let n2 = &sp.n[0];
        assert!((n2.slopes[0] + slope).abs() < 1e-3 * slope);
        assert!((n2.slopes[1] - slope).abs() < 1e-3 * slope);
        assert!(n2.slopes[2].abs() < 1e-3 * slope);
        assert!(n2.flux_balance().abs() < 1e-6);
        // equal radii: C_2^(3) and C_3^(2) coincide by symmetry
        assert!((sp.c(2, 3) - sp.c(3, 2)).abs() < 1e-6);
        // the end-flux construction agrees with the lifted one up to the mesh error
        let nodal = n2.nodal(tj);
        let alt = solve_special_end_flux(tj, 1).unwrap();
        for i in 0..3 {
            let a = tj.section_mean(&nodal, i, tj.r_trunc - 2.0);
            let b = tj.section_mean(&alt, i, tj.r_trunc - 2.0);
            assert!((a - b).abs() < 2e-2 * (1.0 + a.abs()), "outlet {i}: {a} vs {b}");
        }
    }

    #[test]
    fn delta_matches_plateau_for_x1_data() {
        let tj = coarse();
        let spec = x1_spec();
        let w0 = solve_limit(&spec, &assemble_rhs0(&spec));
        let us = vec![CorrectorFamily::zero(&spec, 0), CorrectorFamily::zero(&spec, 1)];
        let rhs = build_inner_rhs(&spec, 1, &[w0], &us);
        let f = solve_decaying(tj, &rhs, 1e-8).unwrap();
        let sp = solve_special(tj).unwrap();
        let d = compute_delta(tj, &rhs, &sp);
        for m in 0..2 {
            let p = f.plateau(m + 1);
            assert!(p.abs() > 1e-4);
            assert!((d[m] - p).abs() < 2e-2 * p.abs(), "{} vs {p}", d[m]);
        }
        // outlets 2 and 3 are symmetric for f = x_1, up to mesh orientation
        assert!((d[0] - d[1]).abs() < 1e-3 * d[0].abs());
    }
}
