//! Modified Bessel functions of the first kind and the first-order Marcum
//! Q-function.

use std::f64::consts::PI;

/// Below this argument the power series is used; above it the asymptotic
/// expansion converges to machine precision.
const SERIES_LIMIT: f64 = 30.0;

/// `I0(x)`. Overflows to `inf` for `x` beyond ~713; use [`bessel_i0e`] there.
pub fn bessel_i0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= SERIES_LIMIT {
        i0_series(ax)
    } else {
        bessel_i0e(ax) * ax.exp()
    }
}

/// Exponentially scaled `e^{-|x|} I0(x)`, finite for every finite `x`.
pub fn bessel_i0e(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= SERIES_LIMIT {
        i0_series(ax) * (-ax).exp()
    } else {
        i0e_asymptotic(ax)
    }
}

/// `ln I0(x)` without overflow.
pub fn ln_bessel_i0(x: f64) -> f64 {
    let ax = x.abs();
    bessel_i0e(ax).ln() + ax
}

fn i0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term < sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

fn i0e_asymptotic(x: f64) -> f64 {
    // e^{-x} I0(x) ~ 1/sqrt(2πx) Σ ((2k-1)!!)^2 / (k! (8x)^k)
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let kf = k as f64;
        let next = term * (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * x);
        if next > term {
            break;
        }
        term = next;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum / (2.0 * PI * x).sqrt()
}

/// Scaled Bessel values `e^{-x} I_k(x)` for `k = 0..=k_max`, `x >= 0`,
/// via Miller's backward recurrence normalised by `e^{-x} I0(x)`.
pub fn bessel_ik_scaled(x: f64, k_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; k_max + 1];
    if x < 1e-30 {
        // leading-order series; the recurrence would overflow
        let mut term = (-x).exp();
        for (k, v) in out.iter_mut().enumerate() {
            if k > 0 {
                term *= 0.5 * x / k as f64;
            }
            *v = term;
        }
        return out;
    }
    let start = k_max + 20 + (12.0 * x.sqrt()) as usize + (x.min(1e3) as usize) / 8;
    let mut next = 0.0;
    let mut cur = 1e-300;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * cur + next;
        next = cur;
        cur = prev;
        if k - 1 <= k_max {
            out[k - 1] = cur;
        }
        if cur > 1e250 {
            next *= 1e-250;
            cur *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
        if k <= k_max {
            out[k] = next;
        }
    }
    let norm = bessel_i0e(x) / out[0];
    for v in out.iter_mut() {
        *v *= norm;
    }
    out
}

/// First-order Marcum Q-function `Q1(a, b) = Pr[|a + G| > b]` where `G` is a
/// complex Gaussian with unit variance per dimension.
pub fn marcum_q1(a: f64, b: f64) -> f64 {
    assert!(a >= 0.0 && b >= 0.0, "Marcum Q1 needs nonnegative arguments");
    if b == 0.0 {
        return 1.0;
    }
    if b.is_infinite() {
        return 0.0;
    }
    if a == 0.0 {
        return (-0.5 * b * b).exp();
    }
    let x = a * b;
    let lead = (-0.5 * (a - b) * (a - b)).exp();
    if lead == 0.0 {
        return if b > a { 0.0 } else { 1.0 };
    }
    // terms e^{-(a-b)^2/2} (ratio)^k e^{-x} I_k(x) decay once k exceeds ~sqrt(80 x)
    let k_max = (9.0 * x.sqrt()) as usize + 40;
    let bessel = bessel_ik_scaled(x, k_max);
    if b > a {
        let ratio = a / b;
        let mut sum = 0.0;
        let mut pow = 1.0;
        for &ik in &bessel {
            let term = pow * ik;
            sum += term;
            if term < 1e-18 * sum.max(1e-300) && pow < 0.5 {
                break;
            }
            pow *= ratio;
        }
        (lead * sum).clamp(0.0, 1.0)
    } else {
        let ratio = b / a;
        let mut sum = 0.0;
        let mut pow = ratio;
        for &ik in &bessel[1..] {
            let term = pow * ik;
            sum += term;
            if term < 1e-18 * sum.max(1e-300) && pow < 0.5 {
                break;
            }
            pow *= ratio;
        }
        (1.0 - lead * sum).clamp(0.0, 1.0)
    }
}
