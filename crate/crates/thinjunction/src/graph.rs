//! The one-dimensional problems on the three-edge star graph.
//!
//! On edge `i` we solve `-pi (h_i^2 w')' = F_i` on (0, 1) with `w(1) = 0`,
//! vertex values `w_1(0) = w_2(0) - d2 = w_3(0) - d3` and the flux condition
//! `sum_i pi h_i(0)^2 w_i'(0) = dstar`. Every edge reduces to a double
//! integral plus one unknown flux, leaving a 3x3 linear problem that is solved
//! in closed form.

use crate::cheb::PiecewiseCheb;
use crate::config::ProblemSpec;
use crate::jet::Jet;
use crate::quad::gauss_legendre;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const FIT_TOL: f64 = 1e-15;

/// Right-hand side `F_i(x)` on each edge, one Chebyshev piece per radius piece.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRhs {
    pub edges: [PiecewiseCheb; 3],
}

impl EdgeRhs {
    pub fn zero(spec: &ProblemSpec) -> Self {
        EdgeRhs {
            edges: std::array::from_fn(|i| PiecewiseCheb::zero(&spec.h[i].breaks())),
        }
    }

    /// Fit `f(i, x, piece)` on the radius breakpoints of each edge.
    pub fn from_fn(spec: &ProblemSpec, f: &(dyn Fn(usize, f64, usize) -> f64 + Sync)) -> Self {
        EdgeRhs {
            edges: std::array::from_fn(|i| {
                PiecewiseCheb::fit_adaptive_pieces(&|x, k| f(i, x, k), &spec.h[i].breaks(), FIT_TOL)
            }),
        }
    }

    pub fn eval(&self, i: usize, x: f64) -> f64 {
        self.edges[i].eval(x)
    }

    pub fn scaled_sum(&self, a: f64, o: &EdgeRhs, b: f64) -> EdgeRhs {
        EdgeRhs {
            edges: std::array::from_fn(|i| {
                let mut p = self.edges[i].clone();
                for q in &mut p.pieces {
                    q.coeffs.iter_mut().for_each(|c| *c *= a);
                }
                p.add_scaled(&o.edges[i], b)
            }),
        }
    }
}

/// Jumps at the vertex and the prescribed total flux.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransmissionData {
    pub delta2: f64,
    pub delta3: f64,
    pub dstar: f64,
}

impl TransmissionData {
    pub fn new(delta2: f64, delta3: f64, dstar: f64) -> Self {
        TransmissionData { delta2, delta3, dstar }
    }

    /// Jump of edge `i` relative to edge 0.
    pub fn jump(&self, i: usize) -> f64 {
        [0.0, self.delta2, self.delta3][i]
    }
}

/// A function on the graph, one piecewise Chebyshev series per edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFunction {
    pub edges: [PiecewiseCheb; 3],
    #[serde(skip)]
    d1: Option<Box<[PiecewiseCheb; 3]>>,
}

impl GraphFunction {
    pub fn new(edges: [PiecewiseCheb; 3]) -> Self {
        let d1 = Box::new(std::array::from_fn(|i| edges[i].derivative()));
        GraphFunction { edges, d1: Some(d1) }
    }

    pub fn zero(spec: &ProblemSpec) -> Self {
        Self::new(std::array::from_fn(|i| PiecewiseCheb::zero(&spec.h[i].breaks())))
    }

    pub fn value(&self, i: usize, x: f64) -> f64 {
        self.edges[i].eval(x)
    }

    pub fn d1(&self, i: usize, x: f64) -> f64 {
        match &self.d1 {
            Some(d) => d[i].eval(x),
            None => self.edges[i].derivative().eval(x),
        }
    }

    /// `d^n w_i / dx^n` at `x`.
    pub fn deriv(&self, i: usize, x: f64, n: usize) -> f64 {
        match n {
            0 => self.value(i, x),
            1 => self.d1(i, x),
            _ => self.edges[i].eval_jet(&Jet::variable(x, n)).deriv(n),
        }
    }

    /// Values of `w, w', ..., w^(n)` at `x`.
    pub fn derivs(&self, i: usize, x: f64, n: usize) -> Vec<f64> {
        let j = self.edges[i].eval_jet(&Jet::variable(x, n));
        (0..=n).map(|k| j.deriv(k)).collect()
    }

    pub fn eval_jet(&self, i: usize, x: &Jet) -> Jet {
        self.edges[i].eval_jet(x)
    }

    /// Jet on a given radius piece, for one-sided values at breakpoints.
    pub fn jet_on_piece(&self, i: usize, piece: usize, x: &Jet) -> Jet {
        self.edges[i].pieces[piece].eval_jet(x)
    }

    pub fn flux(&self, spec: &ProblemSpec) -> f64 {
        (0..3).map(|i| PI * spec.h[i].eval(0.0).powi(2) * self.d1(i, 0.0)).sum()
    }

    pub fn combine(&self, a: f64, o: &GraphFunction, b: f64) -> GraphFunction {
        GraphFunction::new(std::array::from_fn(|i| {
            let mut p = self.edges[i].clone();
            for q in &mut p.pieces {
                q.coeffs.iter_mut().for_each(|c| *c *= a);
            }
            p.add_scaled(&o.edges[i], b)
        }))
    }
}

/// Source of the limit problem: `pi h^2 f(axis) - circle integral of phi`.
pub fn assemble_rhs0(spec: &ProblemSpec) -> EdgeRhs {
    EdgeRhs::from_fn(spec, &|i, x, k| {
        let h = spec.h[i].deriv_on_piece(k, x, 0);
        let fx = spec.f_local(i).eval([x, 0.0, 0.0]);
        PI * h * h * fx - circle_integral(&|a, b| spec.phi[i].eval([x, a, b]), h)
    })
}

/// `int_{|y| = h} g dl` by the periodic trapezoid rule.
pub fn circle_integral(g: &dyn Fn(f64, f64) -> f64, h: f64) -> f64 {
    const N: usize = 64;
    h * crate::quad::trapezoid_periodic(&|t| g(h * t.cos(), h * t.sin()), N)
}

/// Solve with the jump conditions imposed directly.
fn solve_direct(spec: &ProblemSpec, rhs: &EdgeRhs, td: &TransmissionData) -> GraphFunction {
    // On each edge: A(x) = int_x^1 p, B(x) = int_x^1 Q p, with p = 1/(pi h^2)
    // and Q = int_0^x F; then w = B - c A where c is the edge flux.
    let mut a_fn = Vec::with_capacity(3);
    let mut b_fn = Vec::with_capacity(3);
    for i in 0..3 {
        let breaks = spec.h[i].breaks();
        let p = PiecewiseCheb::fit_adaptive_pieces(
            &|x, k| 1.0 / (PI * spec.h[i].deriv_on_piece(k, x, 0).powi(2)),
            &breaks,
            FIT_TOL,
        );
        let q = rhs.edges[i].integral();
        let qp = PiecewiseCheb::fit_adaptive_pieces(
            &|x, k| q.pieces[k].eval(x) * p.pieces[k].eval(x),
            &breaks,
            FIT_TOL,
        );
        a_fn.push(tail_integral(&p));
        b_fn.push(tail_integral(&qp));
    }
    let a0: Vec<f64> = a_fn.iter().map(|a| a.eval(0.0)).collect();
    let b0: Vec<f64> = b_fn.iter().map(|b| b.eval(0.0)).collect();
    let num: f64 = (0..3).map(|i| (b0[i] - td.jump(i)) / a0[i]).sum::<f64>() - td.dstar;
    let den: f64 = a0.iter().map(|a| 1.0 / a).sum();
    let v = num / den;
    GraphFunction::new(std::array::from_fn(|i| {
        let c = (b0[i] - v - td.jump(i)) / a0[i];
        b_fn[i].add_scaled(&a_fn[i], -c)
    }))
}

/// `x -> int_x^1 g`.
fn tail_integral(g: &PiecewiseCheb) -> PiecewiseCheb {
    let ig = g.integral();
    let total = ig.eval(1.0);
    ig.add_scaled(&ig, -2.0).add_constant(total)
}

/// Limit problem: continuity and zero total flux at the vertex.
pub fn solve_limit(spec: &ProblemSpec, rhs: &EdgeRhs) -> GraphFunction {
    solve_direct(spec, rhs, &TransmissionData::default())
}

/// Higher-order problem with jumps and prescribed flux.
///
/// The jumps are removed by `w_i = v_i + d_i (1 - x)`, giving a continuous
/// problem for `v` with modified source and flux.
pub fn solve_omega_k(spec: &ProblemSpec, rhs: &EdgeRhs, td: &TransmissionData) -> GraphFunction {
    let (rhs_c, flux) = substituted_data(spec, rhs, td);
    let v = solve_direct(spec, &rhs_c, &TransmissionData::new(0.0, 0.0, flux));
    GraphFunction::new(std::array::from_fn(|i| {
        let d = td.jump(i);
        let mut e = v.edges[i].clone();
        if d != 0.0 {
            let lin = PiecewiseCheb::fit_adaptive(&|x| d * (1.0 - x), &spec.h[i].breaks(), FIT_TOL);
            e = e.add_scaled(&lin, 1.0);
        }
        e
    }))
}

/// Source and flux of the continuous problem after removing the jumps.
fn substituted_data(spec: &ProblemSpec, rhs: &EdgeRhs, td: &TransmissionData) -> (EdgeRhs, f64) {
    let corr = EdgeRhs::from_fn(spec, &|i, x, k| {
        let h = spec.h[i].deriv_on_piece(k, x, 0);
        let hp = spec.h[i].deriv_on_piece(k, x, 1);
        -2.0 * PI * td.jump(i) * h * hp
    });
    let flux = td.dstar + (1..3).map(|i| td.jump(i) * PI * spec.h[i].eval(0.0).powi(2)).sum::<f64>();
    (rhs.scaled_sum(1.0, &corr, 1.0), flux)
}

/// Test functions for the weak form: `ts[t](i, x) -> (psi, psi')`.
fn test_function(t: usize, i: usize, x: f64) -> (f64, f64) {
    if t < 3 {
        let k = (t + 1) as i32;
        return ((1.0 - x).powi(k), -(k as f64) * (1.0 - x).powi(k - 1));
    }
    let edge = (t - 3) / 9;
    let j = (t - 3) % 9;
    if edge != i {
        return (0.0, 0.0);
    }
    // x (1 - x) T_j(2x - 1)
    let s = 2.0 * x - 1.0;
    let tj = Jet::variable(s, 1);
    let cheb = cheb_t(j, &tj);
    let b = x * (1.0 - x);
    (b * cheb.value(), (1.0 - 2.0 * x) * cheb.value() + b * 2.0 * cheb.deriv(1))
}

fn cheb_t(j: usize, s: &Jet) -> Jet {
    let mut t0 = Jet::constant(1.0, s.order);
    if j == 0 {
        return t0;
    }
    let mut t1 = *s;
    for _ in 1..j {
        let t2 = (*s * t1).scale(2.0) - t0;
        t0 = t1;
        t1 = t2;
    }
    t1
}

pub const WEAK_TEST_COUNT: usize = 30;

/// Largest defect of the integral identity over a fixed set of 30 test
/// functions vanishing at `x = 1` and continuous at the vertex.
pub fn weak_residual(spec: &ProblemSpec, sol: &GraphFunction, rhs: &EdgeRhs, td: &TransmissionData) -> f64 {
    let (rhs_c, flux) = substituted_data(spec, rhs, td);
    let (gx, gw) = gauss_legendre(40);
    let mut worst = 0.0f64;
    for t in 0..WEAK_TEST_COUNT {
        let mut lhs = 0.0;
        let mut load = 0.0;
        for i in 0..3 {
            let d = td.jump(i);
            let br = spec.h[i].breaks();
            for (k, w) in br.windows(2).enumerate() {
                let (m, r) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                for (&s, &wt) in gx.iter().zip(&gw) {
                    let x = m + r * s;
                    let h = spec.h[i].deriv_on_piece(k, x, 0);
                    let (psi, dpsi) = test_function(t, i, x);
                    // v = w - d (1 - x)
                    let dv = sol.d1(i, x) + d;
                    lhs += wt * r * PI * h * h * dv * dpsi;
                    load += wt * r * rhs_c.edges[i].pieces[k].eval(x) * psi;
                }
            }
        }
        let psi0 = test_function(t, 0, 0.0).0;
        worst = worst.max((lhs - load + flux * psi0).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RadiusProfile;
    use crate::poly::{circle_moment, Poly3};
    use nalgebra::{DMatrix, DVector};

    fn sup_err(g: &GraphFunction, i: usize, f: &dyn Fn(f64) -> f64) -> f64 {
        (0..=200).map(|j| j as f64 / 200.0).map(|x| (g.value(i, x) - f(x)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn parabola_on_unit_radius() {
        let spec = ProblemSpec::uniform(0.3, 0.25, Poly3::constant(2.0));
        let mut spec = spec;
        spec.h = std::array::from_fn(|_| RadiusProfile::constant(1.0));
        let rhs = assemble_rhs0(&spec);
        assert!((rhs.eval(1, 0.4) - 2.0 * PI).abs() < 1e-13);
        let w = solve_limit(&spec, &rhs);
        for i in 0..3 {
            assert!(sup_err(&w, i, &|x| 1.0 - x * x) < 1e-12);
        }
    }

    #[test]
    fn lateral_load_enters_with_circumference() {
        let mut spec = ProblemSpec::uniform(0.3, 0.25, Poly3::zero());
        spec.phi[1] = Poly3::constant(0.7);
        let rhs = assemble_rhs0(&spec);
        assert!((rhs.eval(1, 0.3) + 2.0 * PI * 0.25 * 0.7).abs() < 1e-13);
        assert!(rhs.eval(0, 0.3).abs() < 1e-15);
    }

    #[test]
    fn circle_trapezoid_matches_moments() {
        let g = |a: f64, b: f64| 3.0 * a * a * b * b - a.powi(4) + 0.5;
        let h = 0.37;
        let exact = 3.0 * circle_moment(2, 2, h) - circle_moment(4, 0, h) + 0.5 * circle_moment(0, 0, h);
        assert!((circle_integral(&g, h) - exact).abs() < 1e-14);
    }

    #[test]
    fn jumps_and_flux_closed_forms() {
        let mut spec = ProblemSpec::uniform(0.3, 0.25, Poly3::zero());
        spec.h = std::array::from_fn(|_| RadiusProfile::constant(1.0));
        let z = EdgeRhs::zero(&spec);
        let w = solve_omega_k(&spec, &z, &TransmissionData::new(3.0, 3.0, 0.0));
        assert!(sup_err(&w, 0, &|x| 2.0 * x - 2.0) < 1e-12);
        assert!(sup_err(&w, 1, &|x| 1.0 - x) < 1e-12);
        assert!(sup_err(&w, 2, &|x| 1.0 - x) < 1e-12);
        let w = solve_omega_k(&spec, &z, &TransmissionData::new(0.0, 0.0, 3.0 * PI));
        for i in 0..3 {
            assert!(sup_err(&w, i, &|x| x - 1.0) < 1e-12);
        }
    }

    fn tapered_spec() -> ProblemSpec {
        let mut spec = ProblemSpec::uniform(0.3, 0.25, Poly3::from_terms(&[(1.0, [1, 0, 0]), (0.5, [0, 2, 0])]));
        spec.h[0] = RadiusProfile::taper(0.25, 0.18, 0.2, 0.8);
        spec.h[2] = RadiusProfile::taper(0.2, 0.27, 0.3, 0.6);
        spec.phi[2] = Poly3::from_terms(&[(1.0, [1, 1, 0]), (0.3, [0, 0, 0])]);
        spec
    }

    #[test]
    fn substitution_agrees_with_direct_jumps_and_weak_form() {
        let spec = tapered_spec();
        let rhs = assemble_rhs0(&spec);
        let td = TransmissionData::new(0.3, -0.7, 0.05);
        let a = solve_omega_k(&spec, &rhs, &td);
        let b = solve_direct(&spec, &rhs, &td);
        for i in 0..3 {
            assert!(sup_err(&a, i, &|x| b.value(i, x)) < 1e-11);
            assert!(a.value(i, 1.0).abs() < 1e-12);
        }
        assert!((a.value(1, 0.0) - a.value(0, 0.0) - 0.3).abs() < 1e-11);
        assert!((a.value(2, 0.0) - a.value(0, 0.0) + 0.7).abs() < 1e-11);
        assert!((a.flux(&spec) - 0.05).abs() < 1e-10);
        assert!(weak_residual(&spec, &a, &rhs, &td) < 1e-10);
        // a bump on edge 0 must be detected
        let mut bumped = a.edges.clone();
        let bump = PiecewiseCheb::fit_adaptive(&|x| x * (1.0 - x), &spec.h[0].breaks(), 1e-15);
        bumped[0] = bumped[0].add_scaled(&bump, 1.0);
        let bumped = GraphFunction::new(bumped);
        assert!(weak_residual(&spec, &bumped, &rhs, &td) > 1e-3);
    }

    /// Vertex-centred finite volumes on a uniform grid, all edges coupled.
    fn fd_graph(spec: &ProblemSpec, rhs: &EdgeRhs, td: &TransmissionData, n: usize) -> Vec<Vec<f64>> {
        let dx = 1.0 / n as f64;
        let m = 3 * (n - 1) + 1; // interior nodes of each edge, then the vertex
        let idx = |i: usize, j: usize| i * (n - 1) + (j - 1);
        let vtx = m - 1;
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::zeros(m);
        let coef = |i: usize, x: f64| PI * spec.h[i].eval(x).powi(2);
        for i in 0..3 {
            for j in 1..n {
                let r = idx(i, j);
                let x = j as f64 * dx;
                let (cl, cr) = (coef(i, x - 0.5 * dx), coef(i, x + 0.5 * dx));
                a[(r, r)] += (cl + cr) / (dx * dx);
                if j + 1 < n {
                    a[(r, idx(i, j + 1))] -= cr / (dx * dx);
                }
                if j > 1 {
                    a[(r, idx(i, j - 1))] -= cl / (dx * dx);
                } else {
                    a[(r, vtx)] -= cl / (dx * dx);
                    b[r] += cl * td.jump(i) / (dx * dx);
                }
                b[r] += rhs.eval(i, x);
            }
            // half cell at the vertex
            let c = coef(i, 0.5 * dx) / dx;
            a[(vtx, vtx)] += c;
            a[(vtx, idx(i, 1))] -= c;
            b[vtx] += 0.5 * dx * rhs.eval(i, 0.0) - c * td.jump(i);
        }
        b[vtx] -= td.dstar;
        let u = a.lu().solve(&b).unwrap();
        (0..3)
            .map(|i| {
                let mut e = vec![u[vtx] + td.jump(i)];
                e.extend((1..n).map(|j| u[idx(i, j)]));
                e.push(0.0);
                e
            })
            .collect()
    }

    #[test]
    fn finite_difference_graph_converges_at_second_order() {
        let spec = tapered_spec();
        let rhs = assemble_rhs0(&spec);
        let td = TransmissionData::new(0.2, 0.1, -0.03);
        let w = solve_omega_k(&spec, &rhs, &td);
        let err = |n: usize| {
            let u = fd_graph(&spec, &rhs, &td, n);
            let mut e = 0.0f64;
            for i in 0..3 {
                for j in 0..=n {
                    e = e.max((u[i][j] - w.value(i, j as f64 / n as f64)).abs());
                }
            }
            e
        };
        let (e1, e2) = (err(80), err(160));
        let order = (e1 / e2).log2();
        assert!(order > 1.9, "observed order {order} ({e1:e} -> {e2:e})");
    }

    #[test]
    fn linear_source_closed_form() {
        let mut spec = ProblemSpec::uniform(0.3, 0.25, Poly3::from_terms(&[(1.0, [1, 0, 0])]));
        spec.h = std::array::from_fn(|_| RadiusProfile::constant(1.0));
        let w = solve_limit(&spec, &assemble_rhs0(&spec));
        assert!(sup_err(&w, 0, &|x| -x.powi(3) / 6.0 + x / 9.0 + 1.0 / 18.0) < 1e-12);
        assert!(sup_err(&w, 1, &|x| (1.0 - x) / 18.0) < 1e-12);
        assert!(w.flux(&spec).abs() < 1e-12);
    }
}
