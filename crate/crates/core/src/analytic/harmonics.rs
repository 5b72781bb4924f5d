//! Fourier-in-phase representation of the conditional observation density.
//!
//! In polar coordinates the joint density of `(R, Θ)` given an input of
//! amplitude `r0` and phase `θ0` is
//!
//! ```text
//! f(r, θ) = f_R(r)/(2π) + (1/π) Σ_{m≥1} Re{ C_m(r, r0) e^{jm(θ-θ0)} },
//! C_m(r, r0) = f_R(r) E[e^{-jm(Θ-θ0)} | R = r].
//! ```
//!
//! [`Harmonics`] abstracts over where the `C_m` come from: the exact
//! evaluator in [`super::exact`], or a [`PhaseHarmonics`] table filled either
//! from that evaluator or by Monte-Carlo estimation.

use std::fmt::Debug;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rice::{rice_density, rice_tail};
use crate::channel::{sample_channel, ChannelParams};
use crate::error::{Error, Result};
use crate::numeric::{bisect, Bisection, MonotoneCubic};

/// Source of harmonic coefficients for one input amplitude.
pub trait Harmonics: Send + Sync + Debug {
    /// Input amplitude `r0` the coefficients are conditioned on.
    fn input_amplitude(&self) -> f64;
    /// Number of stored harmonics; `C_m` for larger `m` is taken as zero.
    fn max_order(&self) -> usize;
    fn params(&self) -> &ChannelParams;
    /// Writes `C_1(r), …, C_len(r)` into `out`.
    fn coefficients_into(&self, r: f64, out: &mut [Complex64]);

    fn first_coefficient(&self, r: f64) -> Complex64 {
        let mut out = [Complex64::new(0.0, 0.0)];
        self.coefficients_into(r, &mut out);
        out[0]
    }

    /// `θ_c(r) = -arg C_1(r, r0)`.
    fn correction_angle(&self, r: f64) -> f64 {
        let c = self.first_coefficient(r);
        if c.norm() == 0.0 {
            0.0
        } else {
            -c.arg()
        }
    }

    /// Rice amplitude density `f_{R|R0=r0}(r)`.
    fn amplitude_density(&self, r: f64) -> f64 {
        rice_density(r, self.input_amplitude(), self.params().noise_variance())
    }

    /// Circular moments `E[e^{-jm(Θ-θ0)} | R = r] = C_m / f_R`, zero where the
    /// density vanishes.
    fn moments_into(&self, r: f64, out: &mut [Complex64]) {
        self.coefficients_into(r, out);
        let f = self.amplitude_density(r);
        for c in out.iter_mut() {
            *c = if f > 0.0 { *c / f } else { Complex64::new(0.0, 0.0) };
        }
    }

    fn coefficients(&self, r: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.max_order()];
        self.coefficients_into(r, &mut out);
        out
    }
}

/// One harmonics source per constellation ring, innermost first.
pub type HarmonicsSet = Vec<Arc<dyn Harmonics>>;

/// Checks that a harmonics source was built for `r0` under `params`.
pub fn check_consistent(h: &dyn Harmonics, r0: f64, params: &ChannelParams) -> Result<()> {
    let tol = 1e-9 * r0.max(1e-12);
    if (h.input_amplitude() - r0).abs() > tol {
        return Err(Error::HarmonicsMismatch(format!(
            "built for r0 = {}, requested {}",
            h.input_amplitude(),
            r0
        )));
    }
    if h.params() != params {
        return Err(Error::HarmonicsMismatch("channel parameters differ".into()));
    }
    Ok(())
}

/// How a [`PhaseHarmonics`] table was filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarmonicsMethod {
    Exact,
    MonteCarlo,
}

/// Tabulated `C_m(r_g, r0)` on a radius grid, interpolated with monotone
/// cubics on real and imaginary parts separately and clamped at the grid
/// edges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseHarmonics {
    pub input_amplitude: f64,
    pub r_grid: Vec<f64>,
    /// Row-major `|r_grid| × max_order`.
    pub coefficients: Vec<Complex64>,
    pub max_order: usize,
    pub method: HarmonicsMethod,
    /// Monte-Carlo sample count, zero for exact tables.
    pub sample_count: usize,
    pub params: ChannelParams,
    #[serde(skip)]
    interpolants: Option<Arc<Vec<(MonotoneCubic, MonotoneCubic)>>>,
}

impl PhaseHarmonics {
    pub fn from_table(
        input_amplitude: f64,
        r_grid: Vec<f64>,
        coefficients: Vec<Complex64>,
        max_order: usize,
        method: HarmonicsMethod,
        sample_count: usize,
        params: ChannelParams,
    ) -> Result<Self> {
        if r_grid.len() < 2 {
            return Err(Error::InvalidParameter(
                "harmonics grid needs at least two radii".into(),
            ));
        }
        if r_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "harmonics grid must be strictly increasing".into(),
            ));
        }
        if coefficients.len() != r_grid.len() * max_order {
            return Err(Error::Dimension(format!(
                "expected {} coefficients, got {}",
                r_grid.len() * max_order,
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Numerical("non-finite harmonic coefficient".into()));
        }
        let mut table = PhaseHarmonics {
            input_amplitude,
            r_grid,
            coefficients,
            max_order,
            method,
            sample_count,
            params,
            interpolants: None,
        };
        table.build_interpolants();
        Ok(table)
    }

    /// Rebuilds interpolants, e.g. after deserialisation.
    pub fn build_interpolants(&mut self) {
        let g = self.r_grid.len();
        let interps = (0..self.max_order)
            .map(|m| {
                let re: Vec<f64> = (0..g).map(|i| self.coefficients[i * self.max_order + m].re).collect();
                let im: Vec<f64> = (0..g).map(|i| self.coefficients[i * self.max_order + m].im).collect();
                (
                    MonotoneCubic::new(self.r_grid.clone(), re),
                    MonotoneCubic::new(self.r_grid.clone(), im),
                )
            })
            .collect();
        self.interpolants = Some(Arc::new(interps));
    }

    pub fn coefficient_at_grid(&self, g: usize, m: usize) -> Complex64 {
        self.coefficients[g * self.max_order + (m - 1)]
    }

    /// Samples any harmonics source onto `r_grid`.
    pub fn tabulate(source: &dyn Harmonics, r_grid: Vec<f64>, max_order: Option<usize>) -> Result<Self> {
        let m = max_order.unwrap_or(source.max_order()).min(source.max_order()).max(1);
        let mut coefficients = vec![Complex64::new(0.0, 0.0); r_grid.len() * m];
        for (row, &r) in coefficients.chunks_mut(m).zip(&r_grid) {
            source.coefficients_into(r, row);
        }
        Self::from_table(
            source.input_amplitude(),
            r_grid,
            coefficients,
            m,
            HarmonicsMethod::Exact,
            0,
            *source.params(),
        )
    }
}

impl Harmonics for PhaseHarmonics {
    fn input_amplitude(&self) -> f64 {
        self.input_amplitude
    }

    fn max_order(&self) -> usize {
        self.max_order
    }

    fn params(&self) -> &ChannelParams {
        &self.params
    }

    fn coefficients_into(&self, r: f64, out: &mut [Complex64]) {
        let interps = self
            .interpolants
            .as_ref()
            .expect("interpolants are built on construction");
        for (m, slot) in out.iter_mut().enumerate() {
            *slot = match interps.get(m) {
                Some((re, im)) => Complex64::new(re.eval(r), im.eval(r)),
                None => Complex64::new(0.0, 0.0),
            };
        }
    }
}

/// Default radius grid covering `r0 ± span` standard deviations of the
/// per-dimension noise, truncated at zero.
pub fn default_grid(r0: f64, sigma2: f64, points: usize, span: f64) -> Vec<f64> {
    let s = (sigma2 / 2.0).sqrt();
    let lo = (r0 - span * s).max(0.0);
    let hi = r0 + span * s;
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Settings for [`estimate_harmonics`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub n_samples: usize,
    pub max_order: usize,
    /// Number of equal-probability radius bins under the Rice law.
    pub bins: usize,
    pub min_per_bin: usize,
    /// Independent RNG streams the samples are split into.
    pub shards: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            n_samples: 1_000_000,
            max_order: 64,
            bins: 200,
            min_per_bin: 100,
            shards: 16,
        }
    }
}

/// Monte-Carlo estimate of `C_m(r, r0)` on `r_grid`.
///
/// Samples the channel from `x = r0`, bins the observations in radius with
/// equal-probability bins under the Rice law, takes per-bin circular moments
/// `E[e^{-jmΘ}]`, scales them by the Rice density at each bin's mean radius
/// and interpolates onto `r_grid`.
pub fn estimate_harmonics(
    r0: f64,
    params: &ChannelParams,
    r_grid: Vec<f64>,
    config: &EstimatorConfig,
    seed: u64,
) -> Result<PhaseHarmonics> {
    if config.n_samples < 100_000 {
        return Err(Error::InsufficientSamples(format!(
            "at least 1e5 samples required, got {}",
            config.n_samples
        )));
    }
    if config.max_order == 0 {
        return Err(Error::InvalidParameter("max_order must be at least 1".into()));
    }
    let sigma2 = params.noise_variance();
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(
            "estimation needs a positive noise variance".into(),
        ));
    }
    let mut bins = config.bins.max(2);
    // widen bins until each is expected to hold enough samples
    while bins > 2 && config.n_samples / bins < config.min_per_bin {
        bins /= 2;
    }
    let edges = equal_probability_edges(r0, sigma2, bins);
    let m_max = config.max_order;
    let shards = config.shards.max(1);
    let x = Complex64::new(r0, 0.0);

    struct Acc {
        count: Vec<usize>,
        r_sum: Vec<f64>,
        moments: Vec<Complex64>,
    }
    let per_shard = |shard: usize| -> Acc {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(shard as u64 + 1);
        let n = config.n_samples / shards + usize::from(shard < config.n_samples % shards);
        let mut acc = Acc {
            count: vec![0; bins],
            r_sum: vec![0.0; bins],
            moments: vec![Complex64::new(0.0, 0.0); bins * m_max],
        };
        for _ in 0..n {
            let y = sample_channel(x, params, &mut rng).y;
            let r = y.norm();
            let b = edges.partition_point(|&e| e <= r).saturating_sub(1).min(bins - 1);
            acc.count[b] += 1;
            acc.r_sum[b] += r;
            let base = Complex64::from_polar(1.0, -y.arg());
            let mut p = base;
            for m in 0..m_max {
                acc.moments[b * m_max + m] += p;
                p *= base;
            }
        }
        acc
    };
    let parts: Vec<Acc> = (0..shards).into_par_iter().map(per_shard).collect();
    let mut total = Acc {
        count: vec![0; bins],
        r_sum: vec![0.0; bins],
        moments: vec![Complex64::new(0.0, 0.0); bins * m_max],
    };
    for p in parts {
        for b in 0..bins {
            total.count[b] += p.count[b];
            total.r_sum[b] += p.r_sum[b];
        }
        for (t, v) in total.moments.iter_mut().zip(p.moments) {
            *t += v;
        }
    }
    if let Some(b) = (0..bins).find(|&b| total.count[b] < config.min_per_bin) {
        return Err(Error::InsufficientSamples(format!(
            "bin {b} holds {} samples (< {})",
            total.count[b], config.min_per_bin
        )));
    }
    let centers: Vec<f64> = (0..bins).map(|b| total.r_sum[b] / total.count[b] as f64).collect();
    // Anchor the tails at zero density so interpolation decays outside the bins.
    let mut knots = Vec::with_capacity(bins + 2);
    let lo_anchor = (centers[0] - (centers[1] - centers[0])).max(0.0);
    if lo_anchor < centers[0] {
        knots.push(lo_anchor);
    }
    knots.extend(&centers);
    knots.push(centers[bins - 1] + (centers[bins - 1] - centers[bins - 2]));
    let has_lo = knots.len() == bins + 2;

    let mut coefficients = vec![Complex64::new(0.0, 0.0); r_grid.len() * m_max];
    for m in 0..m_max {
        let mut re = Vec::with_capacity(knots.len());
        let mut im = Vec::with_capacity(knots.len());
        if has_lo {
            re.push(0.0);
            im.push(0.0);
        }
        for b in 0..bins {
            let f = rice_density(centers[b], r0, sigma2);
            let mean = total.moments[b * m_max + m] / total.count[b] as f64;
            re.push(f * mean.re);
            im.push(f * mean.im);
        }
        re.push(0.0);
        im.push(0.0);
        let ire = MonotoneCubic::new(knots.clone(), re);
        let iim = MonotoneCubic::new(knots.clone(), im);
        for (g, &r) in r_grid.iter().enumerate() {
            coefficients[g * m_max + m] = Complex64::new(ire.eval(r), iim.eval(r));
        }
    }
    PhaseHarmonics::from_table(
        r0,
        r_grid,
        coefficients,
        m_max,
        HarmonicsMethod::MonteCarlo,
        config.n_samples,
        *params,
    )
}

/// Radii splitting the Rice law into `bins` equally likely intervals;
/// returns `bins + 1` edges with the last one infinite.
pub fn equal_probability_edges(r0: f64, sigma2: f64, bins: usize) -> Vec<f64> {
    let s = (sigma2 / 2.0).sqrt();
    let hi = r0 + 40.0 * s;
    let mut edges = vec![0.0];
    for b in 1..bins {
        let target = 1.0 - b as f64 / bins as f64;
        let root = match bisect(0.0, hi, 200, |r| rice_tail(r, r0, sigma2) - target) {
            Bisection::Root(r) => r,
            Bisection::NoSignChange => hi,
        };
        edges.push(root);
    }
    edges.push(f64::INFINITY);
    edges
}
