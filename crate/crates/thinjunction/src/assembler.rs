//! The partial sum `U^(m)` of the expansion: regular terms along the
//! cylinders, boundary layers at the far ends and inner terms at the
//! junction, glued by cut-offs. Also the term-wise residuals left by
//! substituting the partial sum into the equation and the Neumann data.

use crate::config::{global_to_local, transverse_axes, ConfigError, ProblemSpec};
use crate::corrector::{build_rhs_k, build_u_k, CorrectorError, CorrectorFamily};
use crate::cutoff::{junction_ramp, Ramp};
use crate::graph::{assemble_rhs0, solve_limit, solve_omega_k, EdgeRhs, GraphFunction, TransmissionData};
use crate::jet::factorial;
use crate::junction::{
    assemble_n, build_inner_rhs, check_solvability, compute_delta, compute_dstar, solve_decaying, solve_special, InnerTerm,
    JunctionError, Specials, TruncatedJunction,
};
use crate::layer::{build_pi, BoundaryLayerTerm, LayerError};
use crate::quad::gauss_legendre;
use crate::spectrum::neumann_spectrum;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

/// Relative tolerance on the inner solvability defect.
pub const SOLVABILITY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ExpansionError {
    #[error(transparent)]
    Corrector(#[from] CorrectorError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Junction(#[from] JunctionError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error("order {0} needs the junction mesh")]
    NoJunction(u32),
    #[error("inner problem of order {k} is not solvable: defect {defect:e}")]
    Unsolvable { k: u32, defect: f64 },
    #[error("point {0:?} is outside the domain")]
    Outside([f64; 3]),
    #[error("residual formulas need m >= 2, got {0}")]
    OrderTooLow(u32),
    #[error("order {m} exceeds the built hierarchy ({built})")]
    OrderTooHigh { m: u32, built: u32 },
}

/// Cut-offs in the slow variable (`chi_l` at `x_i / eps^alpha`, `chi_delta`
/// at `x_i`) and in the fast variable (the junction ramp).
#[derive(Clone, Copy, Debug)]
pub struct CutoffFamily {
    pub ell: f64,
    pub alpha: f64,
    pub delta: f64,
    pub chi_ell: Ramp,
    pub chi_delta: Ramp,
    pub junction: Ramp,
}

impl CutoffFamily {
    pub fn new(ell: f64, alpha: f64, delta: f64) -> Self {
        CutoffFamily {
            ell,
            alpha,
            delta,
            chi_ell: Ramp::new(2.0 * ell, 3.0 * ell),
            chi_delta: Ramp::new(1.0 - 2.0 * delta, 1.0 - delta),
            junction: junction_ramp(ell),
        }
    }

    pub fn from_spec(spec: &ProblemSpec) -> Self {
        Self::new(spec.ell, spec.alpha, spec.delta_cut)
    }

    /// `chi_l(x / eps^alpha)` and its first two `x`-derivatives.
    pub fn chi_ell_x(&self, x: f64, eps: f64) -> (f64, f64, f64) {
        let s = eps.powf(-self.alpha);
        let (v, d1, d2) = self.chi_ell.eval(x * s);
        (v, d1 * s, d2 * s * s)
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct JunctionConstants {
    /// `(delta^{(2)}, delta^{(3)})` per order, from the Green identity.
    pub delta: Vec<[f64; 2]>,
    /// Plateaus of the decaying solutions at outlets 2 and 3.
    pub plateau: Vec<[f64; 2]>,
    pub dstar: Vec<f64>,
    /// `C_m^{(j)}` at `[m - 2][j - 2]`.
    pub c: [[f64; 2]; 2],
    /// Spectral gaps `j'_{11} / h_i(0)` of the outlet sections.
    pub gamma: [f64; 3],
    /// Inner solvability defects per order (index `k`, up to `m + 1`).
    pub solvability: Vec<f64>,
}

/// Every term of the expansion up to order `m`.
pub struct Hierarchy {
    pub spec: ProblemSpec,
    pub order: u32,
    pub omegas: Vec<GraphFunction>,
    pub edge_rhs: Vec<EdgeRhs>,
    pub transmission: Vec<TransmissionData>,
    pub us: Vec<CorrectorFamily>,
    pub pis: Vec<[BoundaryLayerTerm; 3]>,
    pub inner: Vec<InnerTerm>,
    pub constants: JunctionConstants,
    pub junction: Option<TruncatedJunction>,
    pub specials: Option<Specials>,
}

fn zero_layers(spec: &ProblemSpec, k: u32) -> [BoundaryLayerTerm; 3] {
    std::array::from_fn(|i| BoundaryLayerTerm::zero(i, k, spec.h[i].eval(1.0)))
}

impl Hierarchy {
    /// Build orders `0..=m`. Orders above zero need the truncated junction.
    pub fn build(spec: &ProblemSpec, m: u32, junction: Option<TruncatedJunction>) -> Result<Self, ExpansionError> {
        let h0 = spec.h0();
        let rhs0 = assemble_rhs0(spec);
        let w0 = solve_limit(spec, &rhs0);
        let gamma = std::array::from_fn(|i| neumann_spectrum(h0[i], 2).lambda1());
        let mut h = Hierarchy {
            spec: spec.clone(),
            order: m,
            inner: vec![InnerTerm::constant(0, spec.ell, h0, w0.value(0, 0.0))],
            omegas: vec![w0],
            edge_rhs: vec![rhs0],
            transmission: vec![TransmissionData::default()],
            us: vec![CorrectorFamily::zero(spec, 0)],
            pis: vec![zero_layers(spec, 0)],
            constants: JunctionConstants { delta: vec![[0.0; 2]], plateau: vec![[0.0; 2]], dstar: vec![0.0], gamma, solvability: vec![0.0], ..Default::default() },
            junction,
            specials: None,
        };
        for k in 1..=m {
            h.push_order(k)?;
        }
        if m >= 1 {
            // the order-(m+1) inner problem checks the flux constant of order m
            let u = h.next_corrector(m + 1)?;
            let mut us = h.us.clone();
            us.push(u);
            let rhs = build_inner_rhs(spec, m + 1, &h.omegas, &us);
            let tj = h.junction.as_ref().ok_or(ExpansionError::NoJunction(m + 1))?;
            h.constants.solvability.push(check_solvability(tj, &rhs));
        }
        Ok(h)
    }

    fn next_corrector(&self, k: u32) -> Result<CorrectorFamily, ExpansionError> {
        if k < 2 {
            return Ok(CorrectorFamily::zero(&self.spec, k));
        }
        Ok(build_u_k(&self.spec, k, &self.omegas[k as usize - 2], &self.us[k as usize - 2])?)
    }

    fn push_order(&mut self, k: u32) -> Result<(), ExpansionError> {
        let spec = self.spec.clone();
        let u_k = self.next_corrector(k)?;
        let edge = build_rhs_k(&spec, k, &u_k)?;
        self.us.push(u_k);
        let rhs = build_inner_rhs(&spec, k, &self.omegas, &self.us);
        let tj = self.junction.as_ref().ok_or(ExpansionError::NoJunction(k))?;
        let defect = check_solvability(tj, &rhs);
        let scale = 1.0 + rhs.omega_d.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
        if defect > SOLVABILITY_TOL * scale {
            return Err(ExpansionError::Unsolvable { k, defect });
        }
        let dstar = compute_dstar(&spec, k)?;
        let delta = if rhs.is_zero() {
            [0.0; 2]
        } else {
            if self.specials.is_none() {
                let sp = solve_special(tj)?;
                self.constants.c = [[sp.c(2, 2), sp.c(2, 3)], [sp.c(3, 2), sp.c(3, 3)]];
                self.specials = Some(sp);
            }
            compute_delta(tj, &rhs, self.specials.as_ref().unwrap())
        };
        let td = TransmissionData::new(delta[0], delta[1], dstar);
        let w = solve_omega_k(&spec, &edge, &td);
        let u = &self.us[k as usize];
        let pis = [build_pi(&spec, 0, k, u, &w)?, build_pi(&spec, 1, k, u, &w)?, build_pi(&spec, 2, k, u, &w)?];
        let field = solve_decaying(tj, &rhs, SOLVABILITY_TOL * scale)?;
        self.constants.plateau.push([field.plateau(1), field.plateau(2)]);
        self.constants.delta.push(delta);
        self.constants.dstar.push(dstar);
        self.constants.solvability.push(defect);
        let n = assemble_n(tj, k, &w, rhs, field);
        self.inner.push(n);
        self.omegas.push(w);
        self.edge_rhs.push(edge);
        self.transmission.push(td);
        self.pis.push(pis);
        Ok(())
    }

    pub fn sum(&self, m: u32, eps: f64) -> Result<ExpansionSum<'_>, ExpansionError> {
        if m > self.order {
            return Err(ExpansionError::OrderTooHigh { m, built: self.order });
        }
        Ok(ExpansionSum { h: self, m, eps, cut: CutoffFamily::from_spec(&self.spec) })
    }
}

/// Where a point of the thin domain lies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Zone {
    Junction,
    Cylinder(usize),
}

/// `U^(m)` at a fixed `eps`.
pub struct ExpansionSum<'a> {
    pub h: &'a Hierarchy,
    pub m: u32,
    pub eps: f64,
    pub cut: CutoffFamily,
}

/// Relative slack for polygonal cross-sections.
const SECTION_SLACK: f64 = 1.02;

impl<'a> ExpansionSum<'a> {
    fn spec(&self) -> &ProblemSpec {
        &self.h.spec
    }

    pub fn zone(&self, x: [f64; 3]) -> Result<Zone, ExpansionError> {
        let half = self.eps * self.spec().ell;
        if let Some(i) = (0..3).find(|&i| x[i] > half) {
            let [s, a, b] = global_to_local(i, x);
            let r = self.eps * self.spec().h[i].eval(s.min(1.0));
            if s <= 1.0 + 1e-12 && a.hypot(b) <= SECTION_SLACK * r {
                return Ok(Zone::Cylinder(i));
            }
            return Err(ExpansionError::Outside(x));
        }
        if x.iter().all(|v| v.abs() <= half * (1.0 + 1e-9)) {
            Ok(Zone::Junction)
        } else {
            Err(ExpansionError::Outside(x))
        }
    }

    /// `sum_k eps^k N_k(x / eps)`: value and `x`-gradient.
    pub fn inner_part(&self, x: [f64; 3]) -> (f64, [f64; 3]) {
        let e = self.eps;
        let xi = x.map(|v| v / e);
        let tj = self.h.junction.as_ref();
        let (mut v, mut g) = (0.0, [0.0; 3]);
        for k in 0..=self.m as usize {
            let (nv, ng) = self.h.inner[k].eval(tj, xi).expect("inner point outside the junction mesh");
            let w = e.powi(k as i32);
            v += w * nv;
            for d in 0..3 {
                g[d] += w * ng[d] / e;
            }
        }
        (v, g)
    }

    /// `sum_k eps^k (u_k + omega_k)` on cylinder `i`: value, `d/dx_i` and the
    /// transverse gradient, at local `(s, a, b)` with physical `a, b`.
    pub fn regular_part(&self, i: usize, s: f64, a: f64, b: f64) -> (f64, f64, [f64; 2]) {
        let e = self.eps;
        let (xa, xb) = (a / e, b / e);
        let (mut v, mut d, mut g) = (0.0, 0.0, [0.0; 2]);
        for k in 0..=self.m as usize {
            let w = e.powi(k as i32);
            let om = &self.h.omegas[k];
            v += w * om.value(i, s);
            d += w * om.d1(i, s);
            if !self.h.us[k].is_zero() {
                let (uv, ud, ug) = self.h.us[k].eval_full(i, s, xa, xb);
                v += w * uv;
                d += w * ud;
                g[0] += w * ug[0] / e;
                g[1] += w * ug[1] / e;
            }
        }
        (v, d, g)
    }

    /// `sum_k eps^k chi_delta Pi_k` on cylinder `i`.
    pub fn layer_part(&self, i: usize, s: f64, a: f64, b: f64) -> (f64, f64, [f64; 2]) {
        let e = self.eps;
        let (c, c1, _) = self.cut.chi_delta.eval(s);
        if c == 0.0 && c1 == 0.0 {
            return (0.0, 0.0, [0.0; 2]);
        }
        let (mut v, mut d, mut g) = (0.0, 0.0, [0.0; 2]);
        for k in 2..=self.m as usize {
            let p = &self.h.pis[k][i];
            if p.is_zero() {
                continue;
            }
            let w = e.powi(k as i32);
            let (pv, pd, pg) = p.eval_grad((1.0 - s) / e, a / e, b / e);
            v += w * c * pv;
            d += w * (c1 * pv - c * pd / e);
            g[0] += w * c * pg[0] / e;
            g[1] += w * c * pg[1] / e;
        }
        (v, d, g)
    }

    /// Value and gradient of `U^(m)` at `x`.
    pub fn evaluate(&self, x: [f64; 3]) -> Result<(f64, [f64; 3]), ExpansionError> {
        match self.zone(x)? {
            Zone::Junction => Ok(self.inner_part(x)),
            Zone::Cylinder(i) => {
                let [s, a, b] = global_to_local(i, x);
                let (ia, ib) = transverse_axes(i);
                let (c, c1, _) = self.cut.chi_ell_x(s, self.eps);
                let (rv, rd, rg) = self.regular_part(i, s, a, b);
                let (lv, ld, lg) = self.layer_part(i, s, a, b);
                let mut g = [0.0; 3];
                let mut v = c * rv + lv;
                g[i] = c * rd + ld;
                g[ia] = c * rg[0] + lg[0];
                g[ib] = c * rg[1] + lg[1];
                if c < 1.0 {
                    let (nv, ng) = self.inner_part(x);
                    v += (1.0 - c) * nv;
                    for d in 0..3 {
                        g[d] += (1.0 - c) * ng[d];
                    }
                    g[i] += c1 * (rv - nv);
                }
                Ok((v, g))
            }
        }
    }

    fn require_m2(&self) -> Result<(), ExpansionError> {
        if self.m < 2 {
            return Err(ExpansionError::OrderTooLow(self.m));
        }
        Ok(())
    }

    /// Interior residual `R_j` (`j = 1..=7`) at `x`.
    pub fn residual_term(&self, x: [f64; 3], j: usize) -> Result<f64, ExpansionError> {
        self.require_m2()?;
        let zone = self.zone(x)?;
        let Zone::Cylinder(i) = zone else {
            return Ok(if j == 5 { self.r5(x, 0.0) } else { 0.0 });
        };
        let [s, a, b] = global_to_local(i, x);
        let chi = self.cut.chi_ell_x(s, self.eps);
        Ok(match j {
            1 => self.r1(i, s, a, b, chi.0),
            2 => self.r2(x, i, chi),
            3 => self.r3(i, s, a, b),
            4 => self.r4(i, s, a, b, chi.0),
            5 => self.r5(x, chi.0),
            6 => self.r6(i, s, a, b, chi.1),
            7 => self.r7(i, s, a, b, chi.2),
            _ => panic!("interior residual selector {j} not in 1..=7"),
        })
    }

    fn r1(&self, i: usize, s: f64, a: f64, b: f64, chi: f64) -> f64 {
        if chi == 0.0 {
            return 0.0;
        }
        let e = self.eps;
        let mut r = 0.0;
        for k in (self.m - 1) as usize..=self.m as usize {
            let mut t = self.h.omegas[k].deriv(i, s, 2);
            if !self.h.us[k].is_zero() {
                t += self.h.us[k].x_derivs(i, s, a / e, b / e, 2)[2];
            }
            r += e.powi(k as i32) * t;
        }
        chi * r
    }

    fn r2(&self, x: [f64; 3], i: usize, chi: (f64, f64, f64)) -> f64 {
        // chi_ell_x returns x-derivatives: eps^{-alpha} chi' and eps^{-2alpha} chi''
        let (_, c1, c2) = chi;
        if c1 == 0.0 && c2 == 0.0 {
            return 0.0;
        }
        let e = self.eps;
        let xi = x.map(|v| v / e);
        let [s, a, b] = global_to_local(i, xi);
        let tj = self.h.junction.as_ref();
        let mut r = 0.0;
        for k in 1..=self.m as usize {
            let n = &self.h.inner[k];
            let (nv, ng) = n.eval(tj, xi).expect("band point outside the junction mesh");
            let (gv, gd, _) = n.far_field(i, s, a, b);
            r += e.powi(k as i32) * (-2.0 * c1 * (ng[i] - gd) / e - c2 * (nv - gv));
        }
        r
    }

    fn r3(&self, i: usize, s: f64, a: f64, b: f64) -> f64 {
        let (_, c1, c2) = self.cut.chi_delta.eval(s);
        if c1 == 0.0 && c2 == 0.0 {
            return 0.0;
        }
        let e = self.eps;
        let mut r = 0.0;
        for k in 2..=self.m as usize {
            let p = &self.h.pis[k][i];
            if p.is_zero() {
                continue;
            }
            let (pv, pd, _) = p.eval_grad((1.0 - s) / e, a / e, b / e);
            r += e.powi(k as i32) * (-2.0 * c1 * pd / e + c2 * pv);
        }
        r
    }

    /// Transverse Taylor remainder of `f` past order `m - 2`.
    fn r4(&self, i: usize, s: f64, a: f64, b: f64, chi: f64) -> f64 {
        if chi == 0.0 {
            return 0.0;
        }
        let e = self.eps;
        let fl = self.spec().f_local(i);
        let xi = [s, a / e, b / e];
        let taylor: f64 = (0..=self.m - 2).map(|k| e.powi(k as i32) * fl.transverse_part(k).eval(xi)).sum();
        chi * (fl.eval([s, a, b]) - taylor)
    }

    /// Taylor remainder of `f` at the origin past order `m - 2`.
    fn r5(&self, x: [f64; 3], chi: f64) -> f64 {
        if chi == 1.0 {
            return 0.0;
        }
        let f = &self.spec().f;
        let taylor: f64 = (0..=self.m - 2).map(|k| f.homogeneous_part(k).eval(x)).sum();
        (1.0 - chi) * (f.eval(x) - taylor)
    }

    /// `d^n/dx^n (u_k + omega_k)(y, xi_bar)` for `n = 0..=order`.
    fn regular_derivs(&self, k: usize, i: usize, y: f64, xa: f64, xb: f64, order: usize) -> Vec<f64> {
        let mut d = self.h.omegas[k].derivs(i, y, order);
        if !self.h.us[k].is_zero() {
            let u = self.h.us[k].x_derivs(i, y, xa, xb, order);
            d.iter_mut().zip(&u).for_each(|(p, q)| *p += q);
        }
        d
    }

    /// `int_0^x ((x - y)/eps^a)^p / p! d^{p+q}/dy^{p+q}(u_k + omega_k) dy`.
    fn remainder_integral(&self, k: usize, i: usize, x: f64, xa: f64, xb: f64, p: usize, q: usize) -> f64 {
        let ea = self.eps.powf(self.cut.alpha);
        let (gx, gw) = gauss_legendre(12);
        let mut acc = 0.0;
        for (t, w) in gx.iter().zip(&gw) {
            let y = 0.5 * x * (1.0 + t);
            let d = self.regular_derivs(k, i, y, xa, xb, p + q)[p + q];
            acc += 0.5 * x * w * ((x - y) / ea).powi(p as i32) / factorial(p) * d;
        }
        acc
    }

    fn r6(&self, i: usize, s: f64, a: f64, b: f64, c1x: f64) -> f64 {
        if c1x == 0.0 {
            return 0.0;
        }
        let (e, al, m) = (self.eps, self.cut.alpha, self.m as usize);
        let (xa, xb) = (a / e, b / e);
        // back to d chi / d zeta
        let c1 = c1x * e.powf(al);
        let top = self.regular_derivs(m, i, s, xa, xb, 1)[1];
        let mut br = e.powf((1.0 - al) * m as f64) * top;
        for k in 0..m {
            let n = m - k - 1;
            br += e.powf((1.0 - al) * k as f64 - al) * self.remainder_integral(k, i, s, xa, xb, n, 2);
        }
        e.powf(al * (m as f64 - 1.0)) * 2.0 * c1 * br
    }

    fn r7(&self, i: usize, s: f64, a: f64, b: f64, c2x: f64) -> f64 {
        if c2x == 0.0 {
            return 0.0;
        }
        let (e, al, m) = (self.eps, self.cut.alpha, self.m as usize);
        let (xa, xb) = (a / e, b / e);
        let c2 = c2x * e.powf(2.0 * al);
        let mut br = 0.0;
        for k in 0..=m {
            let n = m - k;
            br += e.powf((1.0 - al) * k as f64 - al) * self.remainder_integral(k, i, s, xa, xb, n, 1);
        }
        e.powf(al * (m as f64 - 1.0)) * c2 * br
    }

    /// `2 chi' d/dx (reg - far field) + chi'' (reg - far field)` with the
    /// far field as Taylor polynomials at the vertex: the sum of `R_6` and
    /// `R_7` computed directly.
    pub fn commutator_direct(&self, x: [f64; 3]) -> Result<(f64, f64), ExpansionError> {
        let Zone::Cylinder(i) = self.zone(x)? else { return Ok((0.0, 0.0)) };
        let [s, a, b] = global_to_local(i, x);
        let (e, m) = (self.eps, self.m as usize);
        let (_, c1, c2) = self.cut.chi_ell_x(s, e);
        let (xa, xb) = (a / e, b / e);
        let (mut dv, mut dd) = (0.0, 0.0);
        for k in 0..=m {
            let n = m - k;
            let at0 = self.regular_derivs(k, i, 0.0, xa, xb, n + 1);
            let here = self.regular_derivs(k, i, s, xa, xb, 1);
            let tv: f64 = (0..=n).map(|j| s.powi(j as i32) / factorial(j) * at0[j]).sum();
            let td: f64 = (1..=n).map(|j| s.powi(j as i32 - 1) / factorial(j - 1) * at0[j]).sum();
            dv += e.powi(k as i32) * (here[0] - tv);
            dd += e.powi(k as i32) * (here[1] - td);
        }
        Ok((2.0 * c1 * dd, c2 * dv))
    }

    /// Sum of the interior residuals at `x`.
    pub fn residual(&self, x: [f64; 3]) -> Result<f64, ExpansionError> {
        (1..=7).map(|j| self.residual_term(x, j)).sum()
    }

    /// Lateral residual `R_8` or `R_9` at a point of the lateral surface of
    /// cylinder `i`.
    pub fn boundary_residual(&self, x: [f64; 3], j: usize) -> Result<f64, ExpansionError> {
        self.require_m2()?;
        let Zone::Cylinder(i) = self.zone(x)? else { return Err(ExpansionError::Outside(x)) };
        let [s, a, b] = global_to_local(i, x);
        let (e, m) = (self.eps, self.m as usize);
        let (xa, xb) = (a / e, b / e);
        let chi = self.cut.chi_ell_x(s, e).0;
        let phi = &self.spec().phi[i];
        match j {
            8 => {
                if chi == 0.0 {
                    return Ok(0.0);
                }
                let hp = self.spec().h[i].deriv(s, 1);
                let tau = (e * hp).powi(2);
                let mut br = 0.0;
                if hp != 0.0 {
                    for k in m - 1..=m {
                        br -= e.powi(k as i32) * hp * self.regular_derivs(k, i, s, xa, xb, 1)[1];
                    }
                }
                let q = (m + 1) / 2;
                if tau != 0.0 && !phi.is_zero() {
                    let qf = q as f64;
                    let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
                    let coef = sign * factorial(2 * q) * qf / ((1.0 - 2.0 * qf) * factorial(q).powi(2) * 4f64.powi(q as i32));
                    let (gx, gw) = gauss_legendre(16);
                    let integral: f64 = gx
                        .iter()
                        .zip(&gw)
                        .map(|(t, w)| {
                            let tt = 0.5 * tau * (1.0 + t);
                            0.5 * tau * w * ((tau - tt) / (e * e)).powi(q as i32 - 1) * (1.0 + tt).powf(0.5 - qf)
                        })
                        .sum();
                    br += e.powi(2 * q as i32) * coef / (e * e) * phi.eval([s, xa, xb]) * integral;
                }
                Ok(e / (1.0 + tau).sqrt() * chi * br)
            }
            9 => {
                if chi == 1.0 || phi.is_zero() {
                    return Ok(0.0);
                }
                let al = self.cut.alpha;
                let ea = e.powf(al);
                let dphi = phi.deriv(0, (m - 1) as u32);
                let (gx, gw) = gauss_legendre(12);
                let integral: f64 = gx
                    .iter()
                    .zip(&gw)
                    .map(|(t, w)| {
                        let y = 0.5 * s * (1.0 + t);
                        0.5 * s * w * ((s - y) / ea).powi(m as i32 - 2) * dphi.eval([y, xa, xb])
                    })
                    .sum();
                Ok(e.powf(1.0 + al * (m as f64 - 1.0)) * (1.0 - chi) * e.powf(-al) / factorial(m - 2) * integral)
            }
            _ => panic!("boundary residual selector {j} not in {{8, 9}}"),
        }
    }
}

/// Points of the thin domain for sup estimates: uniform along every
/// cylinder, extra ones in both cut-off bands, and some in the box.
pub fn sample_interior(spec: &ProblemSpec, eps: f64, n: usize, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    let cut = CutoffFamily::from_spec(spec);
    let half = eps * spec.ell;
    let ea = eps.powf(spec.alpha);
    let bands = [(half, 1.0), (cut.chi_ell.a * ea, cut.chi_ell.b * ea), (cut.chi_delta.a, cut.chi_delta.b)];
    let mut pts = Vec::new();
    for i in 0..3 {
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            let count = if b == 0 { n } else { n / 3 };
            for _ in 0..count {
                let s = rng.gen_range(lo.max(half)..hi);
                let r = 0.98 * eps * spec.h[i].eval(s) * rng.gen_range(0.0f64..1.0).sqrt();
                let t = rng.gen_range(0.0..std::f64::consts::TAU);
                pts.push(crate::config::local_to_global(i, s, r * t.cos(), r * t.sin()));
            }
        }
    }
    for _ in 0..n / 3 {
        pts.push(std::array::from_fn(|_| rng.gen_range(-half..half)));
    }
    pts
}

/// Points on the lateral surfaces, denser in the matching band.
pub fn sample_lateral(spec: &ProblemSpec, eps: f64, n: usize, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    let cut = CutoffFamily::from_spec(spec);
    let half = eps * spec.ell;
    let ea = eps.powf(spec.alpha);
    let mut pts = Vec::new();
    for i in 0..3 {
        for (lo, hi, count) in [(half, 1.0, n), (cut.chi_ell.a * ea, cut.chi_ell.b * ea, n / 3)] {
            for _ in 0..count {
                let s = rng.gen_range(lo.max(half)..hi);
                let r = eps * spec.h[i].eval(s);
                let t = rng.gen_range(0.0..std::f64::consts::TAU);
                pts.push(crate::config::local_to_global(i, s, r * t.cos(), r * t.sin()));
            }
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RadiusProfile;
    use crate::mesh::MeshParams;
    use crate::poly::Poly3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn coarse_junction(spec: &ProblemSpec) -> TruncatedJunction {
        let p = MeshParams { segments: 24, core: 0.5, axial: 0.4 };
        TruncatedJunction::for_spec(spec, spec.ell + 5.0, &p)
    }

    fn taper_spec() -> ProblemSpec {
        let h = [RadiusProfile::taper(0.25, 0.18, 0.3, 0.8), RadiusProfile::constant(0.2), RadiusProfile::constant(0.22)];
        let f = Poly3::from_terms(&[(1.0, [0, 0, 0]), (0.5, [1, 0, 0]), (0.3, [0, 1, 1])]);
        let phi = [Poly3::from_terms(&[(0.2, [1, 1, 0])]), Poly3::zero(), Poly3::from_terms(&[(0.1, [0, 0, 0])])];
        let mut s = ProblemSpec::new(0.3, h, f, phi);
        s.order = 3;
        s
    }

    fn taper() -> &'static Hierarchy {
        static H: OnceLock<Hierarchy> = OnceLock::new();
        H.get_or_init(|| {
            let spec = taper_spec();
            Hierarchy::build(&spec, 3, Some(coarse_junction(&spec))).unwrap()
        })
    }

    fn random_point(rng: &mut ChaCha8Rng, spec: &ProblemSpec, eps: f64, i: usize, lo: f64, hi: f64) -> [f64; 3] {
        let s = rng.gen_range(lo..hi);
        let r = 0.95 * eps * spec.h[i].eval(s) * rng.gen_range(0.0f64..1.0).sqrt();
        let t = rng.gen_range(0.0..std::f64::consts::TAU);
        crate::config::local_to_global(i, s, r * t.cos(), r * t.sin())
    }

    #[test]
    fn solvability_holds_at_every_order() {
        let h = taper();
        for (k, d) in h.constants.solvability.iter().enumerate() {
            assert!(*d < 1e-6, "order {k}: {d:e}");
        }
        assert_eq!(h.constants.solvability.len(), 5);
    }

    #[test]
    fn flat_region_is_regular_limit() {
        let h = taper();
        let eps = 0.05;
        let u = h.sum(0, eps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..3 {
            for _ in 0..20 {
                let lo = 3.0 * 0.3 * eps.powf(0.8);
                let x = random_point(&mut rng, &h.spec, eps, i, lo, 0.79);
                let (v, _) = u.evaluate(x).unwrap();
                let s = x[i];
                assert!((v - h.omegas[0].value(i, s)).abs() < 1e-14);
            }
        }
        // junction: constant N_0
        let (v, g) = u.evaluate([0.001, -0.002, 0.003]).unwrap();
        assert_eq!(v, h.omegas[0].value(0, 0.0));
        assert_eq!(g, [0.0; 3]);
    }

    #[test]
    fn band_blend_is_pointwise() {
        let h = taper();
        let eps = 0.1;
        let u = h.sum(1, eps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (lo, hi) = (2.0 * 0.3 * eps.powf(0.8), 3.0 * 0.3 * eps.powf(0.8));
        for _ in 0..20 {
            let i = rng.gen_range(0..3);
            let x = random_point(&mut rng, &h.spec, eps, i, lo, hi);
            let c = u.cut.chi_ell.value(x[i] / eps.powf(0.8));
            let reg = h.omegas[0].value(i, x[i]) + eps * h.omegas[1].value(i, x[i]);
            let xi = x.map(|v| v / eps);
            let tj = h.junction.as_ref();
            let inner = h.inner[0].eval(tj, xi).unwrap().0 + eps * h.inner[1].eval(tj, xi).unwrap().0;
            let (v, _) = u.evaluate(x).unwrap();
            assert!((v - (c * reg + (1.0 - c) * inner)).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let h = taper();
        let eps = 0.1;
        let u = h.sum(3, eps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 100 {
            let i = rng.gen_range(0..3);
            let x = random_point(&mut rng, &h.spec, eps, i, 0.04, 0.985);
            // stay off P1 kinks of the inner field
            if x[i] / eps < 1.0 + 0.3 + 2.0 && u.cut.chi_ell_x(x[i], eps).0 < 1.0 {
                continue;
            }
            let (_, g) = u.evaluate(x).unwrap();
            let d = 1e-5 * eps;
            for k in 0..3 {
                let mut p = x;
                let mut q = x;
                p[k] += d;
                q[k] -= d;
                let fd = (u.evaluate(p).unwrap().0 - u.evaluate(q).unwrap().0) / (2.0 * d);
                let scale = g.iter().fold(1.0f64, |a, b| a.max(b.abs()));
                assert!((fd - g[k]).abs() <= 1e-6 * scale, "axis {k}: {fd} vs {}", g[k]);
            }
            checked += 1;
        }
    }

    #[test]
    fn cutoff_supports_are_exact() {
        let h = taper();
        let eps = 0.1;
        let u = h.sum(3, eps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (lo, hi) = (2.0 * 0.3 * eps.powf(0.8), 3.0 * 0.3 * eps.powf(0.8));
        for _ in 0..200 {
            let i = rng.gen_range(0..3);
            let x = random_point(&mut rng, &h.spec, eps, i, 0.031, 0.999);
            let s = x[i];
            let r2 = u.residual_term(x, 2).unwrap();
            let r3 = u.residual_term(x, 3).unwrap();
            if s <= lo || s >= hi {
                assert_eq!(r2, 0.0);
            }
            if s <= 0.8 || s >= 0.9 {
                assert_eq!(r3, 0.0);
            }
        }
        assert_eq!(u.residual_term([0.0; 3], 2).unwrap(), 0.0);
    }

    #[test]
    fn literal_commutators_match_direct_form() {
        let h = taper();
        for eps in [0.2, 0.1] {
            for m in [2, 3] {
                let u = h.sum(m, eps).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(5);
                let (lo, hi) = (2.0 * 0.3 * eps.powf(0.8), 3.0 * 0.3 * eps.powf(0.8));
                for _ in 0..20 {
                    let i = rng.gen_range(0..3);
                    let x = random_point(&mut rng, &h.spec, eps, i, lo, hi);
                    let (d6, d7) = u.commutator_direct(x).unwrap();
                    let r6 = u.residual_term(x, 6).unwrap();
                    let r7 = u.residual_term(x, 7).unwrap();
                    assert!((r6 - d6).abs() < 1e-9 * (1.0 + d6.abs()), "{r6} vs {d6}");
                    assert!((r7 - d7).abs() < 1e-9 * (1.0 + d7.abs()), "{r7} vs {d7}");
                }
            }
        }
    }

    #[test]
    fn lateral_residuals_match_direct_form() {
        let h = taper();
        let spec = &h.spec;
        for eps in [0.2, 0.1] {
            for m in [2u32, 3] {
                let u = h.sum(m, eps).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(6);
                for _ in 0..20 {
                    let i = rng.gen_range(0..3);
                    let s: f64 = rng.gen_range(0.05..0.95);
                    let t: f64 = rng.gen_range(0.0..6.2);
                    let r = eps * spec.h[i].eval(s);
                    let x = crate::config::local_to_global(i, s, r * t.cos(), r * t.sin());
                    let (xa, xb) = (t.cos() * spec.h[i].eval(s), t.sin() * spec.h[i].eval(s));
                    // R_9 directly: eps (1 - chi) (phi - Taylor of phi at x = 0)
                    let chi = u.cut.chi_ell_x(s, eps).0;
                    let p = &spec.phi[i];
                    let tay: f64 = (0..=m - 2).map(|j| s.powi(j as i32) / factorial(j as usize) * p.deriv(0, j).eval([0.0, xa, xb])).sum();
                    let d9 = eps * (1.0 - chi) * (p.eval([s, xa, xb]) - tay);
                    let r9 = u.boundary_residual(x, 9).unwrap();
                    assert!((r9 - d9).abs() < 1e-12, "{r9} vs {d9}");
                    // R_8 directly, through the truncated series of sqrt(1 + tau)
                    let hp = spec.h[i].deriv(s, 1);
                    let tau = (eps * hp).powi(2);
                    let q = (m + 1) / 2;
                    let partial: f64 = (0..q).map(|j| crate::config::eta_value(2 * j, eps * hp)).sum();
                    let mut br = p.eval([s, xa, xb]) * ((1.0 + tau).sqrt() - partial);
                    for k in m - 1..=m {
                        let k = k as usize;
                        let du = if h.us[k].is_zero() { 0.0 } else { h.us[k].eval_full(i, s, xa, xb).1 };
                        br -= eps.powi(k as i32) * hp * (du + h.omegas[k].d1(i, s));
                    }
                    let d8 = eps / (1.0 + tau).sqrt() * chi * br;
                    let r8 = u.boundary_residual(x, 8).unwrap();
                    assert!((r8 - d8).abs() < 1e-12 * (1.0 + d8.abs()), "{r8} vs {d8}");
                }
            }
        }
    }

    #[test]
    fn taylor_remainders_match_ray_integral() {
        let h = taper();
        let eps = 0.1;
        let u = h.sum(2, eps).unwrap();
        let f = &h.spec.f;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = [rng.gen_range(-0.03..0.03), rng.gen_range(-0.03..0.03), rng.gen_range(-0.03..0.03)];
            // f(x) - f(0) = int_0^1 (x, grad f(t x)) dt
            let (gx, gw) = gauss_legendre(8);
            let ray: f64 = gx
                .iter()
                .zip(&gw)
                .map(|(t, w)| {
                    let tt = 0.5 * (1.0 + t);
                    let g = f.gradient(x.map(|v| tt * v));
                    0.5 * w * (g[0] * x[0] + g[1] * x[1] + g[2] * x[2])
                })
                .sum();
            assert!((u.residual_term(x, 5).unwrap() - ray).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_data_gives_zero_expansion() {
        let spec = ProblemSpec::uniform(0.3, 0.25, Poly3::zero());
        let h = Hierarchy::build(&spec, 2, Some(coarse_junction(&spec))).unwrap();
        assert!(h.specials.is_none());
        let u = h.sum(2, 0.1).unwrap();
        for x in [[0.5, 0.01, 0.0], [0.0, 0.0, 0.0], [0.0, 0.95, 0.005]] {
            assert_eq!(u.evaluate(x).unwrap(), (0.0, [0.0; 3]));
            assert_eq!(u.residual(x).unwrap(), 0.0);
        }
    }
}
