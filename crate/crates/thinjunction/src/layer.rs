//! Exponentially decaying correctors at the far ends of the cylinders,
//! expanded in Neumann modes of the end cross-section.

use crate::config::ProblemSpec;
use crate::corrector::CorrectorFamily;
use crate::graph::GraphFunction;
use crate::spectrum::{neumann_spectrum, project, DiskSpectrum, DEFAULT_MODES};
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LayerError {
    #[error("trace has nonzero mean coefficient {0:e}; the regular part is not mean-free at the end")]
    NonzeroMean(f64),
}

pub const MEAN_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct BoundaryLayerTerm {
    pub edge: usize,
    pub k: u32,
    pub spectrum: DiskSpectrum,
    /// Coefficients against `spectrum.modes`; the constant one is dropped.
    pub coeffs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecayCertificate {
    pub bound: f64,
    pub observed: f64,
}

impl BoundaryLayerTerm {
    pub fn zero(edge: usize, k: u32, h: f64) -> Self {
        let spectrum = neumann_spectrum(h, DEFAULT_MODES);
        let coeffs = vec![0.0; spectrum.len()];
        BoundaryLayerTerm { edge, k, spectrum, coeffs }
    }

    /// Term whose value on the base `xi* = 0` is the projection of `trace`
    /// (polar arguments).
    pub fn from_trace(edge: usize, k: u32, h: f64, trace: &(dyn Fn(f64, f64) -> f64 + Sync)) -> Result<Self, LayerError> {
        let spectrum = neumann_spectrum(h, DEFAULT_MODES);
        let mut coeffs = project(&spectrum, trace);
        let scale = 1.0 + coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if coeffs[0].abs() > MEAN_TOL * scale {
            return Err(LayerError::NonzeroMean(coeffs[0]));
        }
        coeffs[0] = 0.0;
        Ok(BoundaryLayerTerm { edge, k, spectrum, coeffs })
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Value at distance `s` from the end and local transverse point `(a, b)`.
    pub fn eval(&self, s: f64, a: f64, b: f64) -> f64 {
        self.spectrum
            .modes
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, &c)| c != 0.0)
            .map(|(m, &c)| c * m.eval(a, b) * (-m.lambda * s).exp())
            .sum()
    }

    /// Value, derivative in `s`, transverse gradient.
    pub fn eval_grad(&self, s: f64, a: f64, b: f64) -> (f64, f64, [f64; 2]) {
        let (mut v, mut ds, mut g) = (0.0, 0.0, [0.0; 2]);
        for (m, &c) in self.spectrum.modes.iter().zip(&self.coeffs) {
            if c == 0.0 {
                continue;
            }
            let e = c * (-m.lambda * s).exp();
            let (t, tg) = m.eval_grad(a, b);
            v += e * t;
            ds -= m.lambda * e * t;
            g[0] += e * tg[0];
            g[1] += e * tg[1];
        }
        (v, ds, g)
    }

    /// Second derivative in `s`.
    pub fn eval_dss(&self, s: f64, a: f64, b: f64) -> f64 {
        self.spectrum
            .modes
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, &c)| c != 0.0)
            .map(|(m, &c)| c * m.lambda * m.lambda * m.eval(a, b) * (-m.lambda * s).exp())
            .sum()
    }

    pub fn decay_rate(&self) -> f64 {
        self.spectrum.lambda1()
    }

    pub fn decay_certificate(&self, s: f64) -> DecayCertificate {
        let amp: f64 = self.spectrum.modes.iter().zip(&self.coeffs).map(|(m, c)| c.abs() * m.sup).sum();
        let bound = amp * (-self.decay_rate() * s).exp();
        let h = self.spectrum.h;
        let mut observed = 0.0f64;
        for ir in 0..=8 {
            let r = h * ir as f64 / 8.0;
            for it in 0..64 {
                let t = 2.0 * PI * it as f64 / 64.0;
                observed = observed.max(self.eval(s, r * t.cos(), r * t.sin()).abs());
            }
        }
        DecayCertificate { bound, observed }
    }

    /// l2 norm of the last five coefficients: a truncation gauge.
    pub fn tail_estimate(&self) -> f64 {
        let n = self.coeffs.len();
        self.coeffs[n.saturating_sub(5)..].iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Boundary-layer term at the end of edge `i` cancelling the trace of the
/// regular part `omega_k + u_k` on the end disk.
pub fn build_pi(spec: &ProblemSpec, i: usize, k: u32, u_k: &CorrectorFamily, omega_k: &GraphFunction) -> Result<BoundaryLayerTerm, LayerError> {
    let h = spec.h[i].eval(1.0);
    if k < 2 || u_k.is_zero() {
        return Ok(BoundaryLayerTerm::zero(i, k, h));
    }
    let w1 = omega_k.value(i, 1.0);
    BoundaryLayerTerm::from_trace(i, k, h, &|r, t| -u_k.eval(i, 1.0, r * t.cos(), r * t.sin()) - w1)
}
