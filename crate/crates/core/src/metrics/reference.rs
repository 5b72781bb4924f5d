//! Reference curves: square 16-QAM under TS detection and ideal ML
//! detection in additive Gaussian noise.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::quadrature::{sep_two_stage, QuadratureConfig};
use crate::analytic::model::{exact_models, ModelGrid};
use crate::channel::ChannelParams;
use crate::constellation::RingLayout;
use crate::detection::map_thresholds;
use crate::error::{Error, Result};
use crate::numeric::GaussLegendre;

/// Square 16-QAM with average power `power`, grouped ring-major (4/8/4).
pub fn qam16_layout(power: f64) -> Result<RingLayout> {
    let a = (power / 10.0).sqrt();
    let levels = [-3.0, -1.0, 1.0, 3.0];
    let points: Vec<Complex64> = levels
        .iter()
        .flat_map(|&i| levels.iter().map(move |&q| Complex64::new(i * a, q * a)))
        .collect();
    RingLayout::from_points(&points, 1e-9)
}

/// 16-QAM SEP under two-stage detection on the NLPN channel.
pub fn sep_qam16_ts(power: f64, params: &ChannelParams, grid: &ModelGrid, cfg: &QuadratureConfig) -> Result<f64> {
    let layout = qam16_layout(power)?;
    let thresholds = map_thresholds(&layout, params.noise_variance())?;
    let models = exact_models(&layout.radii(), params, grid)?;
    Ok(sep_two_stage(&layout, &thresholds, &models, cfg))
}

/// Gaussian tail `Q(x)` from Craig's integral `(1/π)∫_0^{π/2} e^{-x²/(2 sin²θ)} dθ`.
pub fn gaussian_q(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - gaussian_q(-x);
    }
    if x == 0.0 {
        return 0.5;
    }
    let rule = GaussLegendre::cached(96);
    rule.integrate(0.0, 0.5 * PI, |t| {
        let s = t.sin();
        (-x * x / (2.0 * s * s)).exp()
    }) / PI
}

/// SEP of `m`-PSK with ML detection in AWGN (Craig's form).
pub fn sep_psk_awgn(m: usize, snr: f64) -> f64 {
    if m < 2 {
        return 0.0;
    }
    let s2 = (PI / m as f64).sin().powi(2);
    let upper = PI * (m as f64 - 1.0) / m as f64;
    let rule = GaussLegendre::cached(96);
    // split at π/2 where the integrand peaks
    let f = |t: f64| {
        let s = t.sin();
        (-snr * s2 / (s * s)).exp()
    };
    let mid = 0.5 * PI;
    let total = if upper > mid {
        rule.integrate(0.0, mid, f) + rule.integrate(mid, upper, f)
    } else {
        rule.integrate(0.0, upper, f)
    };
    total / PI
}

/// SEP of square `m`-QAM with ML detection in AWGN.
pub fn sep_square_qam_awgn(m: usize, power: f64, sigma2: f64) -> f64 {
    let side = (m as f64).sqrt();
    let a = (3.0 * power / (2.0 * (m as f64 - 1.0))).sqrt();
    let p = 2.0 * (1.0 - 1.0 / side) * gaussian_q(a / (sigma2 / 2.0).sqrt());
    1.0 - (1.0 - p) * (1.0 - p)
}

/// AWGN-ML reference for `m` points at power `power`: square QAM when `m` is
/// a perfect square, PSK otherwise.
pub fn sep_awgn_ml(m: usize, power: f64, sigma2: f64) -> Result<f64> {
    if m < 2 || !(sigma2 > 0.0) || !(power > 0.0) {
        return Err(Error::InvalidParameter(
            "reference needs M ≥ 2 and positive power and noise".into(),
        ));
    }
    let side = (m as f64).sqrt().round() as usize;
    if side * side == m {
        Ok(sep_square_qam_awgn(m, power, sigma2))
    } else {
        Ok(sep_psk_awgn(m, power / sigma2))
    }
}
