//! Problem instances: geometry, coefficients and data, with JSON I/O.
//!
//! Cylinder `i` (0-based) runs along coordinate axis `i`. Its transverse
//! axes are the other two coordinates in increasing order, so a point of
//! cylinder `i` has local coordinates `(x_i, xi_a, xi_b)`. Lateral loads are
//! polynomials in these local coordinates.

use crate::jet::Jet;
use crate::poly::{Poly1, Poly3};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error("order {k} exceeds the derivative cap {cap}")]
    OrderTooHigh { k: u32, cap: u32 },
}

/// Transverse axes of cylinder `i`, in increasing order.
pub fn transverse_axes(i: usize) -> (usize, usize) {
    match i {
        0 => (1, 2),
        1 => (0, 2),
        2 => (0, 1),
        _ => panic!("cylinder index {i} out of range"),
    }
}

/// Global point from local cylinder coordinates.
pub fn local_to_global(i: usize, axial: f64, a: f64, b: f64) -> [f64; 3] {
    let (ia, ib) = transverse_axes(i);
    let mut p = [0.0; 3];
    p[i] = axial;
    p[ia] = a;
    p[ib] = b;
    p
}

/// Local cylinder coordinates `(axial, a, b)` of a global point.
pub fn global_to_local(i: usize, p: [f64; 3]) -> [f64; 3] {
    let (ia, ib) = transverse_axes(i);
    [p[i], p[ia], p[ib]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusPiece {
    pub interval: [f64; 2],
    /// Polynomial coefficients in the global variable `x`.
    pub coeffs: Vec<f64>,
}

/// Piecewise polynomial radius `h(x)` on [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RadiusProfile {
    pub pieces: Vec<RadiusPiece>,
}

impl RadiusProfile {
    pub fn constant(h: f64) -> Self {
        RadiusProfile {
            pieces: vec![RadiusPiece { interval: [0.0, 1.0], coeffs: vec![h] }],
        }
    }

    /// `h0` on [0, x0], a cubic Hermite blend on [x0, x1], `h1` on [x1, 1].
    pub fn taper(h0: f64, h1: f64, x0: f64, x1: f64) -> Self {
        // h0 + (h1 - h0)(3t^2 - 2t^3), t = (x - x0)/(x1 - x0)
        let d = h1 - h0;
        let mid = Poly1::new(vec![h0, 0.0, 3.0 * d, -2.0 * d]).compose_affine(x0, x1 - x0);
        RadiusProfile {
            pieces: vec![
                RadiusPiece { interval: [0.0, x0], coeffs: vec![h0] },
                RadiusPiece { interval: [x0, x1], coeffs: mid.c },
                RadiusPiece { interval: [x1, 1.0], coeffs: vec![h1] },
            ],
        }
    }

    pub fn breaks(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pieces.iter().map(|p| p.interval[0]).collect();
        b.push(self.pieces.last().map(|p| p.interval[1]).unwrap_or(1.0));
        b
    }

    pub fn piece_index(&self, x: f64) -> usize {
        let n = self.pieces.len();
        self.pieces
            .iter()
            .position(|p| x < p.interval[1])
            .unwrap_or(n - 1)
            .min(n - 1)
    }

    fn poly(&self, k: usize) -> Poly1 {
        Poly1::new(self.pieces[k].coeffs.clone())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.poly(self.piece_index(x)).eval(x)
    }

    /// `d^n h / dx^n` at `x`.
    pub fn deriv(&self, x: f64, n: usize) -> f64 {
        self.deriv_on_piece(self.piece_index(x), x, n)
    }

    pub fn deriv_on_piece(&self, k: usize, x: f64, n: usize) -> f64 {
        let mut p = self.poly(k);
        for _ in 0..n {
            p = p.derivative();
        }
        p.eval(x)
    }

    pub fn eval_jet(&self, x: &Jet) -> Jet {
        self.poly(self.piece_index(x.value())).eval_jet(x)
    }

    pub fn eval_jet_on_piece(&self, k: usize, x: &Jet) -> Jet {
        self.poly(k).eval_jet(x)
    }

    pub fn is_constant(&self) -> bool {
        let h0 = self.eval(0.0);
        self.pieces
            .iter()
            .all(|p| p.coeffs.iter().skip(1).all(|&c| c == 0.0) && p.coeffs.first().copied() == Some(h0))
    }

    pub fn max(&self) -> f64 {
        (0..=1000).map(|j| self.eval(j as f64 / 1000.0)).fold(f64::MIN, f64::max)
    }

    pub fn validate(&self, name: &str) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(format!("{name}: {m}")));
        if self.pieces.is_empty() {
            return bad("radius profile has no pieces".into());
        }
        if self.pieces[0].interval[0] != 0.0 || self.pieces.last().unwrap().interval[1] != 1.0 {
            return bad("radius profile must cover [0, 1]".into());
        }
        for w in self.pieces.windows(2) {
            if w[0].interval[1] != w[1].interval[0] {
                return bad("radius pieces are not contiguous".into());
            }
        }
        for p in &self.pieces {
            if !(p.interval[1] > p.interval[0]) || p.coeffs.is_empty() {
                return bad("empty radius piece".into());
            }
        }
        let min = (0..=1000).map(|j| self.eval(j as f64 / 1000.0)).fold(f64::MAX, f64::min);
        if !(min > 0.0) {
            return bad(format!("radius must be positive (min sample {min})"));
        }
        for k in 1..self.pieces.len() {
            let x = self.pieces[k].interval[0];
            let dv = (self.deriv_on_piece(k - 1, x, 0) - self.deriv_on_piece(k, x, 0)).abs();
            let dd = (self.deriv_on_piece(k - 1, x, 1) - self.deriv_on_piece(k, x, 1)).abs();
            if dv > 1e-12 || dd > 1e-10 {
                return bad(format!("radius is not C1 at x = {x}"));
            }
        }
        let flat = |p: &RadiusPiece| p.coeffs.iter().skip(1).all(|&c| c == 0.0);
        if !flat(&self.pieces[0]) || !flat(self.pieces.last().unwrap()) {
            return bad("radius must be constant near x = 0 and x = 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AneurysmShape {
    /// The cube (-ell, ell)^3 in fast variables.
    Box,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub schema: u32,
    pub epsilon: f64,
    pub ell: f64,
    pub alpha: f64,
    pub delta_cut: f64,
    pub order: u32,
    pub h: [RadiusProfile; 3],
    /// Source in global coordinates.
    pub f: Poly3,
    /// Lateral loads in local coordinates `(x_i, xi_a, xi_b)`.
    pub phi: [Poly3; 3],
    pub aneurysm: AneurysmShape,
}

impl ProblemSpec {
    /// Box junction with the default small parameters.
    pub fn new(ell: f64, h: [RadiusProfile; 3], f: Poly3, phi: [Poly3; 3]) -> Self {
        ProblemSpec {
            schema: SCHEMA_VERSION,
            epsilon: 0.1,
            ell,
            alpha: 0.8,
            delta_cut: 0.1,
            order: 2,
            h,
            f,
            phi,
            aneurysm: AneurysmShape::Box,
        }
    }

    /// Three equal straight cylinders, no lateral load.
    pub fn uniform(ell: f64, h: f64, f: Poly3) -> Self {
        let r = RadiusProfile::constant(h);
        Self::new(ell, [r.clone(), r.clone(), r], f, [Poly3::zero(), Poly3::zero(), Poly3::zero()])
    }

    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        let spec: ProblemSpec = serde_json::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.schema != SCHEMA_VERSION {
            return Err(ConfigError::Invalid(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        if !(self.ell > 0.0 && self.ell < 1.0 / 3.0) {
            return inv("ℓ ∉ (0,1/3)");
        }
        if !(self.alpha > 2.0 / 3.0 && self.alpha < 1.0) {
            return inv("α ∉ (2/3,1)");
        }
        if !(self.epsilon > 0.0) {
            return inv("ε must be positive");
        }
        if !(self.delta_cut > 0.0 && self.delta_cut < 0.25) {
            return inv("δ ∉ (0,1/4)");
        }
        for (i, h) in self.h.iter().enumerate() {
            h.validate(&format!("h[{i}]"))?;
        }
        match self.aneurysm {
            AneurysmShape::Box => {
                if self.h.iter().any(|h| h.eval(0.0) >= self.ell) {
                    return inv("attachment disk exceeds face");
                }
            }
        }
        Ok(())
    }

    /// Highest Taylor order available for `f` and `phi`.
    pub fn derivative_cap(&self) -> u32 {
        self.order + 3
    }

    /// Volume of the junction body in fast variables.
    pub fn aneurysm_volume(&self) -> f64 {
        match self.aneurysm {
            AneurysmShape::Box => (2.0 * self.ell).powi(3),
        }
    }

    pub fn h0(&self) -> [f64; 3] {
        [self.h[0].eval(0.0), self.h[1].eval(0.0), self.h[2].eval(0.0)]
    }

    /// `f` in local coordinates of cylinder `i`: variable 0 is `x_i`.
    pub fn f_local(&self, i: usize) -> Poly3 {
        let (a, b) = transverse_axes(i);
        self.f.permute([i, a, b])
    }

    /// Transverse Taylor coefficient `f_k` on cylinder `i` as a polynomial in
    /// `(x_i, xi_a, xi_b)`.
    pub fn taylor_source_axis(&self, i: usize, k: u32) -> Result<Poly3, ConfigError> {
        if k > self.derivative_cap() {
            return Err(ConfigError::OrderTooHigh { k, cap: self.derivative_cap() });
        }
        Ok(self.f_local(i).transverse_part(k))
    }

    /// Coefficient of `eps^k` in the expansion of `sqrt(1 + eps^2 h'^2)`.
    pub fn eta(&self, i: usize, k: u32, x: f64) -> f64 {
        eta_value(k, self.h[i].deriv(x, 1))
    }

    pub fn has_lateral_load(&self) -> bool {
        self.phi.iter().any(|p| !p.is_zero())
    }
}

/// `eta_k` for a given slope `h'`; `eta_0 = 1`.
pub fn eta_value(k: u32, hp: f64) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let j = (k / 2) as usize;
    let kf = crate::jet::factorial(k as usize);
    let jf = crate::jet::factorial(j);
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    sign * kf * hp.abs().powi(k as i32) / ((1.0 - k as f64) * jf * jf * 4f64.powi(j as i32))
}

pub fn load_spec(path: &Path) -> Result<ProblemSpec, ConfigError> {
    let s = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    ProblemSpec::from_json_str(&s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taper_is_c1_and_flat_at_ends() {
        let h = RadiusProfile::taper(0.25, 0.18, 0.2, 0.8);
        h.validate("h").unwrap();
        assert!((h.eval(0.5) - 0.215).abs() < 1e-12);
        assert!(h.deriv(0.1, 1) == 0.0 && h.deriv(0.9, 1) == 0.0);
    }

    #[test]
    fn eta_even_and_odd() {
        assert_eq!(eta_value(1, 3.0), 0.0);
        assert_eq!(eta_value(0, 3.0), 1.0);
        assert!((eta_value(2, 1.0) - 0.5).abs() < 1e-15);
        // sqrt(1+t) = 1 + t/2 - t^2/8 + ...
        assert!((eta_value(4, 1.0) + 0.125).abs() < 1e-15);
    }

    #[test]
    fn json_roundtrip() {
        let s = ProblemSpec::uniform(0.3, 0.25, Poly3::from_terms(&[(1.0, [1, 0, 0])]));
        let back = ProblemSpec::from_json_str(&s.to_json()).unwrap();
        assert_eq!(s, back);
    }
}
