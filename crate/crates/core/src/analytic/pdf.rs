//! Conditional densities of the observation and of the postcompensated
//! observation, per unit area of the complex plane.

use std::f64::consts::PI;
use std::sync::Arc;

use log::trace;
use num_complex::Complex64;

use super::harmonics::Harmonics;
use super::model::RingModel;
use crate::detection::ThresholdSet;
use crate::error::{Error, Result};

/// Raw values below this are logged when clamped.
pub const NEGATIVE_LOG_LEVEL: f64 = -1e-4;

/// Density value, clamped at zero, with the raw truncated-series value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdfEval {
    pub value: f64,
    pub raw: f64,
}

impl PdfEval {
    fn from_raw(raw: f64) -> Self {
        if raw < NEGATIVE_LOG_LEVEL {
            trace!("negative truncated density {raw:e} clamped");
        }
        PdfEval {
            value: raw.max(0.0),
            raw,
        }
    }
}

/// `f_Y(y | x)` for a symbol `x` with `|x|` equal to the harmonics' input
/// amplitude: `[f_R(r)/(2π) + (1/π) Σ_m Re{C_m(r) e^{jm(θ-θ0)}}] / r`.
pub fn pdf_y(y: Complex64, x: Complex64, harmonics: &dyn Harmonics) -> Result<PdfEval> {
    let r0 = harmonics.input_amplitude();
    if (x.norm() - r0).abs() > 1e-9 * r0.max(1e-300) {
        return Err(Error::HarmonicsMismatch(format!(
            "symbol amplitude {} but harmonics built for {r0}",
            x.norm()
        )));
    }
    let r = y.norm();
    if r == 0.0 {
        // the polar density vanishes linearly at the origin; use the limit
        let s2 = harmonics.params().noise_variance();
        let raw = (-r0 * r0 / s2).exp() / (PI * s2);
        return Ok(PdfEval::from_raw(raw));
    }
    let theta0 = if r0 > 0.0 { x.arg() } else { 0.0 };
    let mut c = vec![Complex64::new(0.0, 0.0); harmonics.max_order()];
    harmonics.coefficients_into(r, &mut c);
    let step = Complex64::from_polar(1.0, y.arg() - theta0);
    let mut z = step;
    let mut series = 0.0;
    for cm in &c {
        series += (cm * z).re;
        z *= step;
    }
    let polar = harmonics.amplitude_density(r) / (2.0 * PI) + series / PI;
    Ok(PdfEval::from_raw(polar / r))
}

/// Density of the postcompensated observation `ỹ = y e^{-jθ_c(|y|, r̂)}`,
/// where `r̂` is the ring chosen by `thresholds` at `|ỹ| = |y|`.
///
/// `models[k]` belongs to ring `k`; `own` is the ring of `x`.
pub fn pdf_y_tilde(
    y_tilde: Complex64,
    x: Complex64,
    own: usize,
    models: &[Arc<RingModel>],
    thresholds: &ThresholdSet,
) -> Result<PdfEval> {
    if thresholds.ring_count() != models.len() || own >= models.len() {
        return Err(Error::Dimension("thresholds, models and ring index disagree".into()));
    }
    let r = y_tilde.norm();
    let detected = thresholds.ring_of_radius(r);
    let theta = models[detected].correction_angle(r);
    let y = y_tilde * Complex64::from_polar(1.0, theta);
    pdf_y(y, x, models[own].as_ref())
}
