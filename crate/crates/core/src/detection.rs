//! Radius thresholds, phase postcompensation, and the two detectors.

use std::f64::consts::PI;
use std::sync::Arc;

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::harmonics::Harmonics;
use crate::analytic::model::RingModel;
use crate::analytic::rice::ln_rice_density;
use crate::constellation::RingLayout;
use crate::error::{Error, Result};
use crate::numeric::{bisect, Bisection};

const THRESHOLD_ITERATIONS: usize = 200;

/// Decision radii `μ_0 = 0 < μ_1 < … < μ_K = ∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    mu: Vec<f64>,
}

impl ThresholdSet {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.len() < 2 {
            return Err(Error::Dimension("a threshold set needs at least two entries".into()));
        }
        if mu[0] != 0.0 || mu[mu.len() - 1] != f64::INFINITY {
            return Err(Error::InvalidParameter(
                "thresholds must start at 0 and end at infinity".into(),
            ));
        }
        if mu.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("thresholds must be strictly increasing".into()));
        }
        Ok(ThresholdSet { mu })
    }

    pub fn values(&self) -> &[f64] {
        &self.mu
    }

    pub fn ring_count(&self) -> usize {
        self.mu.len() - 1
    }

    /// Lower and upper radius of ring `k`'s decision band.
    pub fn band(&self, k: usize) -> (f64, f64) {
        (self.mu[k], self.mu[k + 1])
    }

    /// Ring whose band `(μ_k, μ_{k+1}]` contains `r`; a radius exactly on a
    /// threshold goes to the inner ring.
    pub fn ring_of_radius(&self, r: f64) -> usize {
        let inner = &self.mu[1..self.mu.len() - 1];
        inner.partition_point(|&m| m < r)
    }
}

/// MAP thresholds between adjacent rings with priors `l_k / M`.
///
/// Each interior threshold solves
/// `ln(l_k f(μ | r_k)) = ln(l_{k+1} f(μ | r_{k+1}))` by bisection on
/// `(r_k, r_{k+1})`. Without a sign change the midpoint is used and a warning
/// is logged.
pub fn map_thresholds(layout: &RingLayout, sigma2: f64) -> Result<ThresholdSet> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    let k = layout.ring_count();
    let mut mu = Vec::with_capacity(k + 1);
    mu.push(0.0);
    for i in 0..k.saturating_sub(1) {
        let (a, b) = (&layout.rings[i], &layout.rings[i + 1]);
        let (wa, wb) = ((a.len() as f64).ln(), (b.len() as f64).ln());
        let diff = |r: f64| wa + ln_rice_density(r, a.radius, sigma2) - wb - ln_rice_density(r, b.radius, sigma2);
        let lo = a.radius.max(1e-300 * b.radius);
        let root = match bisect(lo, b.radius, THRESHOLD_ITERATIONS, diff) {
            Bisection::Root(r) => r,
            Bisection::NoSignChange => {
                let mid = 0.5 * (a.radius + b.radius);
                warn!(
                    "no sign change for threshold between rings {i} and {}; using midpoint {mid}",
                    i + 1
                );
                mid
            }
        };
        mu.push(root);
    }
    mu.push(f64::INFINITY);
    ThresholdSet::new(mu)
}

/// `θ_c(R, r̂) = -arg C_1(R, r̂)`.
pub fn correction_angle(r: f64, harmonics: &dyn Harmonics) -> f64 {
    harmonics.correction_angle(r)
}

/// Which detector to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    TwoStage,
    MaxLikelihood,
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_stage" | "ts" => Ok(DetectorKind::TwoStage),
            "ml" | "max_likelihood" => Ok(DetectorKind::MaxLikelihood),
            other => Err(Error::InvalidParameter(format!("unknown detector '{other}'"))),
        }
    }
}

/// Anything mapping an observation to a symbol index.
pub trait Detector: Send + Sync {
    fn detect(&self, y: Complex64) -> usize;
}

/// Checks that `models[k]` describes ring `k` of `layout`.
pub fn check_models(layout: &RingLayout, models: &[Arc<RingModel>]) -> Result<()> {
    if models.len() != layout.ring_count() {
        return Err(Error::Dimension(format!(
            "{} ring models for {} rings",
            models.len(),
            layout.ring_count()
        )));
    }
    let params = models[0].params();
    for (ring, model) in layout.rings.iter().zip(models) {
        let r0 = model.input_amplitude();
        if (r0 - ring.radius).abs() > 1e-9 * ring.radius.max(1e-300) {
            return Err(Error::HarmonicsMismatch(format!(
                "model for amplitude {r0} used for ring of radius {}",
                ring.radius
            )));
        }
        if model.params() != params {
            return Err(Error::HarmonicsMismatch(
                "ring models built for different channels".into(),
            ));
        }
    }
    Ok(())
}

/// Radius decision, amplitude-dependent rotation, nearest-phase decision.
#[derive(Debug, Clone)]
pub struct TwoStageDetector {
    layout: RingLayout,
    thresholds: ThresholdSet,
    models: Vec<Arc<RingModel>>,
}

impl TwoStageDetector {
    pub fn new(layout: RingLayout, thresholds: ThresholdSet, models: Vec<Arc<RingModel>>) -> Result<Self> {
        check_models(&layout, &models)?;
        if thresholds.ring_count() != layout.ring_count() {
            return Err(Error::Dimension("threshold count does not match ring count".into()));
        }
        Ok(TwoStageDetector {
            layout,
            thresholds,
            models,
        })
    }

    pub fn layout(&self) -> &RingLayout {
        &self.layout
    }

    pub fn thresholds(&self) -> &ThresholdSet {
        &self.thresholds
    }

    pub fn models(&self) -> &[Arc<RingModel>] {
        &self.models
    }

    /// Detected ring and the compensated observation `ỹ = y e^{-jθ_c}`.
    pub fn compensate(&self, y: Complex64) -> (usize, Complex64) {
        let r = y.norm();
        let k = self.thresholds.ring_of_radius(r);
        let theta = self.models[k].correction_angle(r);
        (k, y * Complex64::from_polar(1.0, -theta))
    }

    /// Inverse of [`Self::compensate`]; the rotation preserves `|y|`.
    pub fn decompensate(&self, y_tilde: Complex64) -> Complex64 {
        let r = y_tilde.norm();
        let k = self.thresholds.ring_of_radius(r);
        y_tilde * Complex64::from_polar(1.0, self.models[k].correction_angle(r))
    }
}

impl Detector for TwoStageDetector {
    fn detect(&self, y: Complex64) -> usize {
        let (k, yt) = self.compensate(y);
        let ring = &self.layout.rings[k];
        if ring.len() == 1 {
            return ring.start;
        }
        ring.start + ring.nearest_phase(yt.arg())
    }
}

/// Pointwise maximum-likelihood detector.
#[derive(Debug, Clone)]
pub struct MlDetector {
    layout: RingLayout,
    models: Vec<Arc<RingModel>>,
    sigma2: f64,
}

impl MlDetector {
    pub fn new(layout: RingLayout, models: Vec<Arc<RingModel>>) -> Result<Self> {
        check_models(&layout, &models)?;
        let sigma2 = models[0].noise_variance();
        Ok(MlDetector { layout, models, sigma2 })
    }

    /// `ln f_Y(y | x_i)` for every symbol, up to the common `-ln(2π|y|)`.
    pub fn log_likelihoods(&self, y: Complex64) -> Vec<f64> {
        let r = y.norm();
        let theta = y.arg();
        let mut out = Vec::with_capacity(self.layout.order());
        let mut moments = Vec::new();
        for (ring, model) in self.layout.rings.iter().zip(&self.models) {
            let radial = ln_rice_density(r, ring.radius, self.sigma2);
            let n = model.max_order();
            moments.resize(n, Complex64::new(0.0, 0.0));
            model.moments_into(r, &mut moments);
            for &phase in &ring.phases {
                let step = Complex64::from_polar(1.0, theta - phase);
                let mut z = step;
                let mut acc = 0.0;
                for c in &moments {
                    acc += (c * z).re;
                    z *= step;
                }
                let angular = (1.0 + 2.0 * acc).max(1e-300);
                out.push(radial + angular.ln());
            }
        }
        out
    }
}

impl Detector for MlDetector {
    fn detect(&self, y: Complex64) -> usize {
        let ll = self.log_likelihoods(y);
        let mut best = 0;
        for (i, &v) in ll.iter().enumerate() {
            if v > ll[best] {
                best = i;
            }
        }
        best
    }
}

/// Convenience for the stage-2 arc width of a uniform ring.
pub fn sector_half_width(points: usize) -> f64 {
    PI / points as f64
}
