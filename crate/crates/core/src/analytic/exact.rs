//! Deterministic harmonic coefficients for the finite-span channel.
//!
//! Conditioned on the end point `W = x + Z_N`, each quadrature of the noise
//! path `Z_1..Z_{N-1}` is a discrete Brownian bridge. The bridge covariance is
//! `σ0² T⁻¹` with `T` the Dirichlet second-difference matrix, whose
//! eigenpairs are known in closed form, so the characteristic function
//! `E[e^{jmΦ} | W = w]` of the path energy reduces to a handful of sums over
//! the eigenvalues. The coefficient
//!
//! ```text
//! C_m(R, r0) = ∫ g(R, ψ) e^{-jmψ} E[e^{jmΦ} | W = R e^{jψ}] dψ
//! ```
//!
//! is then a one-dimensional integral over the end-point phase `ψ`, done with
//! composite Gauss–Legendre on the window where the integrand is non-negligible.

use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use num_complex::Complex64;

use super::harmonics::Harmonics;
use super::rice::rice_density;
use super::special::bessel_i0e;
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::numeric::GaussLegendre;

/// Hard cap on the number of harmonics.
pub const MAX_ORDER_CAP: usize = 4096;

/// Default truncation: drop harmonics whose modulus stays below this
/// fraction of the peak amplitude density.
pub const DEFAULT_TRUNCATION: f64 = 1e-12;

const PSI_NODES: usize = 16;

/// Per-order sums over the bridge eigenvalues.
#[derive(Debug, Clone, Copy)]
struct OrderTerms {
    /// `t = m γL / N`
    t: f64,
    /// `-Σ ln(1 - 2jtλ_k)`
    log_det: Complex64,
    /// `Σ α_k² / d_k`
    aa: Complex64,
    /// `Σ α_k β_k / d_k`
    ab: Complex64,
    /// `Σ β_k² / d_k`
    bb: Complex64,
}

/// Channel-dependent precomputation shared by all input amplitudes.
#[derive(Debug)]
pub struct SpanKernel {
    params: ChannelParams,
    sigma2: f64,
    step: f64,
    lambdas: Vec<f64>,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    orders: RwLock<Vec<OrderTerms>>,
}

impl SpanKernel {
    pub fn new(params: &ChannelParams) -> Result<Arc<Self>> {
        params.validate()?;
        let sigma2 = params.noise_variance();
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidParameter(
                "harmonic coefficients need a positive noise variance".into(),
            ));
        }
        let n = params.spans;
        let nf = n as f64;
        let sigma0_sq = params.span_variance();
        let mut lambdas = Vec::with_capacity(n.saturating_sub(1));
        let mut alphas = Vec::with_capacity(n.saturating_sub(1));
        let mut betas = Vec::with_capacity(n.saturating_sub(1));
        let norm = (2.0 / nf).sqrt();
        for k in 1..n {
            let theta = k as f64 * PI / nf;
            let s = (0.5 * theta).sin();
            lambdas.push(sigma0_sq / (4.0 * s * s));
            let (mut a, mut b) = (0.0, 0.0);
            for i in 1..n {
                let q = norm * (i as f64 * theta).sin();
                let frac = i as f64 / nf;
                a += q * (1.0 - frac);
                b += q * frac;
            }
            alphas.push(a);
            betas.push(b);
        }
        Ok(Arc::new(SpanKernel {
            params: *params,
            sigma2,
            step: params.nonlinear_scale() / nf,
            lambdas,
            alphas,
            betas,
            orders: RwLock::new(Vec::new()),
        }))
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn noise_variance(&self) -> f64 {
        self.sigma2
    }

    fn compute_order(&self, m: usize) -> OrderTerms {
        let t = m as f64 * self.step;
        let mut log_det = Complex64::new(0.0, 0.0);
        let mut aa = Complex64::new(0.0, 0.0);
        let mut ab = Complex64::new(0.0, 0.0);
        let mut bb = Complex64::new(0.0, 0.0);
        for ((&lam, &a), &b) in self.lambdas.iter().zip(&self.alphas).zip(&self.betas) {
            let d = Complex64::new(1.0, -2.0 * t * lam);
            let inv = d.inv();
            log_det -= d.ln();
            aa += a * a * inv;
            ab += a * b * inv;
            bb += b * b * inv;
        }
        OrderTerms { t, log_det, aa, ab, bb }
    }

    /// Order terms for `m = 1..=max_order`.
    fn orders(&self, max_order: usize) -> Vec<OrderTerms> {
        {
            let guard = self.orders.read().expect("order cache poisoned");
            if guard.len() >= max_order {
                return guard[..max_order].to_vec();
            }
        }
        let mut guard = self.orders.write().expect("order cache poisoned");
        while guard.len() < max_order {
            let m = guard.len() + 1;
            let terms = self.compute_order(m);
            guard.push(terms);
        }
        guard[..max_order].to_vec()
    }
}

/// Exact coefficients `C_m(R, r0)` for one input amplitude, evaluated on
/// demand at any radius.
#[derive(Debug, Clone)]
pub struct ExactHarmonics {
    kernel: Arc<SpanKernel>,
    r0: f64,
    orders: Vec<OrderTerms>,
}

impl ExactHarmonics {
    /// Builds the evaluator, choosing the truncation order so that every
    /// dropped coefficient is below `truncation` times the peak amplitude
    /// density.
    pub fn new(kernel: Arc<SpanKernel>, r0: f64, truncation: f64) -> Result<Self> {
        if !(r0 >= 0.0) || !r0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "input amplitude must be nonnegative, got {r0}"
            )));
        }
        let mut h = ExactHarmonics {
            kernel,
            r0,
            orders: Vec::new(),
        };
        if r0 == 0.0 {
            return Ok(h);
        }
        let s = (h.kernel.sigma2 / 2.0).sqrt();
        let probes: Vec<f64> = (-6..=6).map(|k| r0 + k as f64 * s).filter(|&r| r > 0.0).collect();
        let peak = probes
            .iter()
            .map(|&r| rice_density(r, r0, h.kernel.sigma2))
            .fold(0.0, f64::max);
        let threshold = truncation * peak;
        let mut below = 0;
        let mut m = 0;
        let mut chunk = 16;
        'outer: while m < MAX_ORDER_CAP {
            let upto = (m + chunk).min(MAX_ORDER_CAP);
            let orders = h.kernel.orders(upto);
            for order in &orders[m..upto] {
                m += 1;
                let largest = probes.iter().map(|&r| h.single(r, m, order).norm()).fold(0.0, f64::max);
                if largest < threshold {
                    below += 1;
                    if below >= 2 {
                        break 'outer;
                    }
                } else {
                    below = 0;
                }
            }
            chunk *= 2;
        }
        let keep = m.saturating_sub(below);
        h.orders = h.kernel.orders(keep.max(1));
        Ok(h)
    }

    pub fn kernel(&self) -> &Arc<SpanKernel> {
        &self.kernel
    }

    /// `C_m(r)` without the Gaussian radial factor `(r/πσ²) e^{-(r-r0)²/σ²}`.
    fn reduced(&self, r: f64, m: usize, order: &OrderTerms) -> Complex64 {
        let sigma2 = self.kernel.sigma2;
        let r0 = self.r0;
        let kappa = 2.0 * r * r0 / sigma2;
        let delta = Complex64::new(0.0, 2.0 * order.t * r0 * r) * order.ab;
        let phase = Complex64::new(0.0, order.t) * (r * r * (1.0 + order.bb) + r0 * r0 * order.aa);
        (order.log_det + phase).exp() * psi_integral(kappa, delta, m)
    }

    fn radial_factor(&self, r: f64) -> f64 {
        let sigma2 = self.kernel.sigma2;
        let d = r - self.r0;
        r / (PI * sigma2) * (-d * d / sigma2).exp()
    }

    fn single(&self, r: f64, m: usize, order: &OrderTerms) -> Complex64 {
        self.reduced(r, m, order) * self.radial_factor(r)
    }
}

impl Harmonics for ExactHarmonics {
    fn input_amplitude(&self) -> f64 {
        self.r0
    }

    fn max_order(&self) -> usize {
        self.orders.len()
    }

    fn params(&self) -> &ChannelParams {
        &self.kernel.params
    }

    fn coefficients_into(&self, r: f64, out: &mut [Complex64]) {
        let n = out.len().min(self.orders.len());
        if r <= 0.0 || self.r0 == 0.0 {
            out.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            return;
        }
        let radial = self.radial_factor(r);
        for (m, (slot, order)) in out[..n].iter_mut().zip(&self.orders).enumerate() {
            *slot = self.reduced(r, m + 1, order) * radial;
        }
        out[n..].iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
    }

    fn moments_into(&self, r: f64, out: &mut [Complex64]) {
        let n = out.len().min(self.orders.len());
        if r <= 0.0 || self.r0 == 0.0 {
            out.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            return;
        }
        let kappa = 2.0 * r * self.r0 / self.kernel.sigma2;
        let norm = 1.0 / (2.0 * PI * bessel_i0e(kappa));
        for (m, (slot, order)) in out[..n].iter_mut().zip(&self.orders).enumerate() {
            *slot = self.reduced(r, m + 1, order) * norm;
        }
        out[n..].iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
    }

    fn first_coefficient(&self, r: f64) -> Complex64 {
        if r <= 0.0 || self.r0 == 0.0 || self.orders.is_empty() {
            return Complex64::new(0.0, 0.0);
        }
        self.single(r, 1, &self.orders[0])
    }

    fn correction_angle(&self, r: f64) -> f64 {
        if self.r0 == 0.0 || self.orders.is_empty() {
            return 0.0;
        }
        // the phase does not depend on the radial Gaussian, so no underflow in the tails
        let r = r.max(1e-6 * self.r0);
        -self.reduced(r, 1, &self.orders[0]).arg()
    }
}

/// `2 ∫_0^π exp(κ(cos ψ - 1) + δ cos ψ) cos(mψ) dψ`, i.e. `2π e^{-κ} I_m(κ + δ)`.
fn psi_integral(kappa: f64, delta: Complex64, m: usize) -> Complex64 {
    let re_c = kappa + delta.re;
    // beyond the window the envelope is below e^{-36} of its peak
    let window = if re_c > 18.0 {
        2.0 * (18.0 / re_c).sqrt().min(1.0).asin()
    } else {
        PI
    };
    let phase_span = delta.im.abs() * (1.0 - window.cos()) + m as f64 * window;
    let envelope = (re_c.max(0.0) * (1.0 - window.cos())).sqrt();
    let panels = 1 + (phase_span / 6.0).ceil() as usize + (envelope / 4.0).ceil() as usize;
    let rule = psi_rule();
    let width = window / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let a = p as f64 * width;
        let half = 0.5 * width;
        let mid = a + half;
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let psi = mid + half * x;
            let c = psi.cos();
            let mag = (kappa * (c - 1.0) + delta.re * c).exp();
            let (s, co) = (delta.im * c).sin_cos();
            let weight = w * half * mag * (m as f64 * psi).cos();
            acc += Complex64::new(weight * co, weight * s);
        }
    }
    2.0 * acc
}

fn psi_rule() -> &'static GaussLegendre {
    static RULE: std::sync::OnceLock<GaussLegendre> = std::sync::OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(PSI_NODES))
}
