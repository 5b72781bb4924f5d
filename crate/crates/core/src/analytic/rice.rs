//! Rice amplitude law of `|r0 + Z|` with `Z ~ CN(0, σ²)`.

use super::special::{bessel_i0e, marcum_q1};
use crate::error::{Error, Result};

/// `f(r) = (2r/σ²) exp(-(r² + r0²)/σ²) I0(2 r r0 / σ²)`.
pub fn rice_pdf(r: f64, r0: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    Ok(rice_density(r, r0, sigma2))
}

/// Unchecked density; `sigma2 > 0` is the caller's responsibility.
pub(crate) fn rice_density(r: f64, r0: f64, sigma2: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let d = r - r0;
    2.0 * r / sigma2 * (-d * d / sigma2).exp() * bessel_i0e(2.0 * r * r0 / sigma2)
}

/// Natural log of the Rice density, finite wherever the density is positive.
pub(crate) fn ln_rice_density(r: f64, r0: f64, sigma2: f64) -> f64 {
    if r <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let d = r - r0;
    (2.0 * r / sigma2).ln() - d * d / sigma2 + bessel_i0e(2.0 * r * r0 / sigma2).ln()
}

/// `Pr[R > r]` for the Rice law.
pub(crate) fn rice_tail(r: f64, r0: f64, sigma2: f64) -> f64 {
    if r <= 0.0 {
        return 1.0;
    }
    if r.is_infinite() {
        return 0.0;
    }
    let scale = (2.0 / sigma2).sqrt();
    marcum_q1(scale * r0, scale * r)
}
