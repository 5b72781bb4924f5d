//! Per-ring interpolated model of the conditional phase statistics.
//!
//! The moments `E[e^{-jm(Θ-θ0)} | R]` rotate quickly with `R` because the mean
//! nonlinear phase grows with the received energy. After demodulating by the
//! correction angle, `d_m(R) = E[e^{-jm(Θ-θ0)} | R] e^{jmθ_c(R)}` is slowly
//! varying and is stored as natural cubic splines together with the unwrapped
//! `θ_c(R)`. Detection, densities and error probabilities all evaluate through
//! this model.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exact::{ExactHarmonics, SpanKernel, DEFAULT_TRUNCATION};
use super::harmonics::Harmonics;
use super::rice::rice_density;
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::numeric::{SplineBank, SplineWeights};

/// Extent and density of the radius grid, in units of the per-dimension
/// noise standard deviation `σ/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelGrid {
    pub half_width: f64,
    pub points_per_sd: f64,
}

impl ModelGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite())
            || !(self.points_per_sd > 0.0 && self.points_per_sd.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "model grid needs a positive width and density, got {} and {}",
                self.half_width, self.points_per_sd
            )));
        }
        Ok(())
    }
}

impl Default for ModelGrid {
    fn default() -> Self {
        ModelGrid {
            half_width: 10.0,
            points_per_sd: 8.0,
        }
    }
}

/// Interpolated phase statistics of one input amplitude.
#[derive(Debug, Clone)]
pub struct RingModel {
    r0: f64,
    params: ChannelParams,
    sigma2: f64,
    max_order: usize,
    // series 0: unwrapped θ_c; then (Re d_m, Im d_m) for m = 1..=max_order
    bank: SplineBank,
}

impl RingModel {
    /// Samples `source` on the grid and builds the interpolants.
    pub fn from_harmonics(source: &dyn Harmonics, grid: &ModelGrid) -> Result<Self> {
        grid.validate()?;
        let params = *source.params();
        let sigma2 = params.noise_variance();
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidParameter(
                "ring model needs a positive noise variance".into(),
            ));
        }
        let r0 = source.input_amplitude();
        let s = (sigma2 / 2.0).sqrt();
        let lo = (r0 - grid.half_width * s).max(0.0);
        let hi = r0 + grid.half_width * s;
        let knots = (((hi - lo) / s) * grid.points_per_sd).ceil() as usize + 1;
        let knots = knots.max(4);
        let max_order = source.max_order();
        let series = 1 + 2 * max_order;
        let mut values = vec![0.0; knots * series];
        let mut buf = vec![Complex64::new(0.0, 0.0); max_order];
        let step = (hi - lo) / (knots - 1) as f64;
        let mut prev_angle: Option<f64> = None;
        for i in 0..knots {
            let r = lo + step * i as f64;
            let raw = source.correction_angle(r);
            let angle = match prev_angle {
                None => raw,
                Some(p) => p + wrap_angle(raw - p),
            };
            prev_angle = Some(angle);
            let row = &mut values[i * series..(i + 1) * series];
            row[0] = angle;
            if max_order > 0 {
                source.moments_into(r, &mut buf);
                let rot = Complex64::from_polar(1.0, angle);
                let mut turn = rot;
                for (m, c) in buf.iter().enumerate() {
                    let d = c * turn;
                    if !d.re.is_finite() || !d.im.is_finite() {
                        return Err(Error::Numerical(format!("non-finite moment at r = {r}, m = {}", m + 1)));
                    }
                    row[1 + 2 * m] = d.re;
                    row[2 + 2 * m] = d.im;
                    turn *= rot;
                }
            }
        }
        Ok(RingModel {
            r0,
            params,
            sigma2,
            max_order,
            bank: SplineBank::new(lo, hi, knots, series, values),
        })
    }

    /// Exact finite-span model for amplitude `r0`.
    pub fn exact(kernel: Arc<SpanKernel>, r0: f64, grid: &ModelGrid) -> Result<Self> {
        let h = ExactHarmonics::new(kernel, r0, DEFAULT_TRUNCATION)?;
        Self::from_harmonics(&h, grid)
    }

    pub fn noise_variance(&self) -> f64 {
        self.sigma2
    }

    /// Radius range of the interpolation grid.
    pub fn domain(&self) -> (f64, f64) {
        self.bank.domain()
    }

    pub fn weights(&self, r: f64) -> SplineWeights {
        self.bank.weights(r)
    }

    /// Unwrapped correction angle at the given spline weights.
    #[inline]
    pub fn angle_at(&self, w: &SplineWeights) -> f64 {
        self.bank.eval(w, 0)
    }

    /// Demodulated moment `d_m` for `m ≥ 1`.
    #[inline]
    pub fn demodulated_at(&self, w: &SplineWeights, m: usize) -> Complex64 {
        Complex64::new(self.bank.eval(w, 2 * m - 1), self.bank.eval(w, 2 * m))
    }

    /// Probability that the compensated phase falls outside a centred arc of
    /// half-width `π/l`, given `R = r`.
    pub fn phase_error(&self, r: f64, points: usize) -> f64 {
        if points <= 1 {
            return 0.0;
        }
        let w = self.bank.weights(r);
        let l = points as f64;
        let mut acc = 0.0;
        for m in 1..=self.max_order {
            let mf = m as f64;
            let sn = (mf * PI / l).sin();
            if sn.abs() < 1e-15 {
                continue;
            }
            acc += sn / mf * self.bank.eval(&w, 2 * m - 1);
        }
        (1.0 - 1.0 / l - 2.0 / PI * acc).max(0.0)
    }
}

/// Exact models for a list of ring radii, built in parallel.
pub fn exact_models(radii: &[f64], params: &ChannelParams, grid: &ModelGrid) -> Result<Vec<Arc<RingModel>>> {
    let kernel = SpanKernel::new(params)?;
    radii
        .par_iter()
        .map(|&r| RingModel::exact(kernel.clone(), r, grid).map(Arc::new))
        .collect()
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

impl Harmonics for RingModel {
    fn input_amplitude(&self) -> f64 {
        self.r0
    }

    fn max_order(&self) -> usize {
        self.max_order
    }

    fn params(&self) -> &ChannelParams {
        &self.params
    }

    fn coefficients_into(&self, r: f64, out: &mut [Complex64]) {
        self.moments_into(r, out);
        let f = rice_density(r, self.r0, self.sigma2);
        out.iter_mut().for_each(|c| *c *= f);
    }

    fn moments_into(&self, r: f64, out: &mut [Complex64]) {
        let w = self.bank.weights(r);
        let back = Complex64::from_polar(1.0, -self.angle_at(&w));
        let mut turn = back;
        for (m, slot) in out.iter_mut().enumerate() {
            *slot = if m < self.max_order {
                let v = self.demodulated_at(&w, m + 1) * turn;
                turn *= back;
                v
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
    }

    fn first_coefficient(&self, r: f64) -> Complex64 {
        let mut out = [Complex64::new(0.0, 0.0)];
        self.coefficients_into(r, &mut out);
        out[0]
    }

    fn correction_angle(&self, r: f64) -> f64 {
        self.angle_at(&self.bank.weights(r))
    }

    fn amplitude_density(&self, r: f64) -> f64 {
        rice_density(r, self.r0, self.sigma2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::dbm_to_watts;

    #[test]
    fn interpolated_moments_track_exact_values_between_knots() {
        let params = ChannelParams::new(7000.0, 100).unwrap();
        let kernel = SpanKernel::new(&params).unwrap();
        let r0 = dbm_to_watts(-2.0).sqrt();
        let exact = ExactHarmonics::new(kernel.clone(), r0, DEFAULT_TRUNCATION).unwrap();
        let model = RingModel::from_harmonics(&exact, &ModelGrid::default()).unwrap();
        let s = (params.noise_variance() / 2.0).sqrt();
        let n = exact.max_order();
        let mut a = vec![Complex64::new(0.0, 0.0); n];
        let mut b = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..41 {
            let r = r0 + (k as f64 - 20.0) * 0.2137 * s;
            exact.moments_into(r, &mut a);
            model.moments_into(r, &mut b);
            for m in 0..n {
                assert!((a[m] - b[m]).norm() < 2e-5, "r={r} m={}: {} vs {}", m + 1, a[m], b[m]);
            }
            let ca = exact.correction_angle(r);
            assert!(wrap_angle(ca - model.correction_angle(r)).abs() < 1e-6);
        }
    }

    #[test]
    fn phase_error_of_single_point_ring_is_zero() {
        let params = ChannelParams::new(3000.0, 50).unwrap();
        let model = RingModel::exact(SpanKernel::new(&params).unwrap(), 0.01, &ModelGrid::default()).unwrap();
        assert_eq!(model.phase_error(0.01, 1), 0.0);
        let e4 = model.phase_error(0.01, 4);
        let e8 = model.phase_error(0.01, 8);
        assert!(e4 >= 0.0 && e4 < e8 && e8 < 1.0);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
        assert!((wrap_angle(2.0 * PI + 0.1) - 0.1).abs() < 1e-12);
    }
}
