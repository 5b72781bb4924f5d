//! Discrete memoryless fiber channel with nonlinear phase noise.
//!
//! The input `x` accumulates amplifier noise span by span; the phase rotation
//! is proportional to the path energy `Σ |x + Z_i|^2`:
//!
//! ```text
//! Y = (x + Z_N) e^{-jΦ},   Φ = (γL/N) Σ_{i=1..N} |x + Z_i|^2,
//! Z_i = N_1 + … + N_i,     N_i ~ CN(0, 2σ0²)
//! ```

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of amplified spans.
pub const DEFAULT_SPANS: usize = 100;

/// Physical constants of the link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Kerr nonlinearity γ in 1/(W·km).
    pub gamma: f64,
    /// Spontaneous emission factor.
    pub n_sp: f64,
    /// Planck's constant in J·s.
    pub planck: f64,
    /// Optical carrier frequency in Hz.
    pub carrier_hz: f64,
    /// Fiber loss in 1/km.
    pub loss_per_km: f64,
    /// Optical bandwidth in Hz.
    pub bandwidth_hz: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            gamma: 1.2,
            n_sp: 1.41,
            planck: 6.626e-34,
            carrier_hz: 1.936e14,
            loss_per_km: 0.0578,
            bandwidth_hz: 42.7e9,
        }
    }
}

impl PhysicalConstants {
    /// Additive noise spectral density `N0 = n_sp h ν α` in W/(km·Hz).
    pub fn noise_density(&self) -> f64 {
        self.n_sp * self.planck * self.carrier_hz * self.loss_per_km
    }
}

/// Channel configuration: constants, fiber length and span count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    #[serde(flatten)]
    pub constants: PhysicalConstants,
    pub length_km: f64,
    pub spans: usize,
}

impl ChannelParams {
    pub fn new(length_km: f64, spans: usize) -> Result<Self> {
        Self::with_constants(PhysicalConstants::default(), length_km, spans)
    }

    pub fn with_constants(constants: PhysicalConstants, length_km: f64, spans: usize) -> Result<Self> {
        let p = ChannelParams {
            constants,
            length_km,
            spans,
        };
        p.validate()?;
        Ok(p)
    }

    /// Same link without the Kerr effect.
    pub fn linear(mut self) -> Self {
        self.constants.gamma = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.constants;
        let fields = [
            ("gamma", c.gamma),
            ("n_sp", c.n_sp),
            ("planck", c.planck),
            ("carrier_hz", c.carrier_hz),
            ("loss_per_km", c.loss_per_km),
            ("bandwidth_hz", c.bandwidth_hz),
            ("length_km", self.length_km),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if self.spans == 0 {
            return Err(Error::InvalidParameter("span count must be at least 1".into()));
        }
        Ok(())
    }

    /// Total additive noise variance `σ² = E|Z|² = 2 N0 Δν L` in W.
    pub fn noise_variance(&self) -> f64 {
        noise_variance(&self.constants, self.length_km)
    }

    /// Per-span, per-dimension noise variance `σ0² = σ² / (2N)`.
    pub fn span_variance(&self) -> f64 {
        self.noise_variance() / (2.0 * self.spans as f64)
    }

    /// Total nonlinear phase per unit power, `γL` in 1/W.
    pub fn nonlinear_scale(&self) -> f64 {
        self.constants.gamma * self.length_km
    }
}

/// `σ² = 2 n_sp h ν α Δν L`.
pub fn noise_variance(constants: &PhysicalConstants, length_km: f64) -> f64 {
    2.0 * constants.noise_density() * constants.bandwidth_hz * length_km
}

/// One channel use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSample {
    pub y: Complex64,
    /// Realised nonlinear phase Φ in radians.
    pub nonlinear_phase: f64,
}

/// Draws one observation for input `x`.
pub fn sample_channel<R: Rng + ?Sized>(x: Complex64, params: &ChannelParams, rng: &mut R) -> ChannelSample {
    let sigma0 = params.span_variance().sqrt();
    let mut z = Complex64::new(0.0, 0.0);
    let mut energy = 0.0;
    for _ in 0..params.spans {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        z += Complex64::new(sigma0 * re, sigma0 * im);
        energy += (x + z).norm_sqr();
    }
    let phi = params.nonlinear_scale() / params.spans as f64 * energy;
    ChannelSample {
        y: (x + z) * Complex64::from_polar(1.0, -phi),
        nonlinear_phase: phi,
    }
}

/// `E[Φ] = γL (|x|² + σ0² (N + 1))`, from `E|x + Z_i|² = |x|² + 2 i σ0²`.
pub fn mean_nlpn(x: Complex64, params: &ChannelParams) -> f64 {
    params.nonlinear_scale() * (x.norm_sqr() + params.span_variance() * (params.spans as f64 + 1.0))
}

/// dBm to W.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// W to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}
