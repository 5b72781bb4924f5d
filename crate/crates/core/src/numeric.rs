//! Small numerical building blocks: Gauss–Legendre rules, cubic splines,
//! monotone (Fritsch–Carlson) interpolation and bracketed root finding.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;
use std::sync::{Mutex, OnceLock};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, refined by Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Shared, lazily built rule of order `n`.
    pub fn cached(n: usize) -> Arc<GaussLegendre> {
        static RULES: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let rules = RULES.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = rules.lock().expect("quadrature rule cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| Arc::new(GaussLegendre::new(n)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Iterator over `(x, w)` mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Composite Gauss–Legendre integration of `f` over `[a, b]` split at the
/// given (unsorted, possibly out of range) breakpoints.
pub fn integrate_panels<F: FnMut(f64) -> f64>(a: f64, b: f64, breaks: &[f64], rule: &GaussLegendre, mut f: F) -> f64 {
    if b <= a {
        return 0.0;
    }
    let edges = panel_edges(a, b, breaks);
    edges.windows(2).map(|w| rule.integrate(w[0], w[1], &mut f)).sum()
}

/// Sorted, deduplicated panel edges of `[a, b]` including interior breaks.
pub fn panel_edges(a: f64, b: f64, breaks: &[f64]) -> Vec<f64> {
    let mut edges = Vec::with_capacity(breaks.len() + 2);
    edges.push(a);
    edges.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    edges.push(b);
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * y.abs().max(1e-300));
    edges
}

/// Natural cubic spline through `(x_i, y_i)` with exact antiderivative.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    // second derivatives at the knots
    m: Vec<f64>,
    // antiderivative at the knots, starting at zero
    cumulative: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n, "spline needs at least two knots");
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the natural-spline tridiagonal system.
            let mut c_prime = vec![0.0; n];
            let mut d_prime = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let a = h0 / 6.0;
                let b = (h0 + h1) / 3.0;
                let c = h1 / 6.0;
                let d = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
                let denom = b - a * c_prime[i - 1];
                c_prime[i] = c / denom;
                d_prime[i] = (d - a * d_prime[i - 1]) / denom;
            }
            for i in (1..n - 1).rev() {
                m[i] = d_prime[i] - c_prime[i] * m[i + 1];
            }
        }
        let mut cumulative = vec![0.0; n];
        for i in 0..n - 1 {
            let h = x[i + 1] - x[i];
            let seg = 0.5 * h * (y[i] + y[i + 1]) - h * h * h * (m[i] + m[i + 1]) / 24.0;
            cumulative[i + 1] = cumulative[i] + seg;
        }
        CubicSpline { x, y, m, cumulative }
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    /// Integral of the spline from the first knot to `t`, clamped to the
    /// knot range.
    pub fn integral_to(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return 0.0;
        }
        if t >= self.x[n - 1] {
            return self.cumulative[n - 1];
        }
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let u = t - self.x[i];
        let b = u / h;
        // antiderivative of the segment polynomial from x_i to x_i + u
        let lin = self.y[i] * (u - 0.5 * u * b) + self.y[i + 1] * 0.5 * u * b;
        let a_term = {
            // ∫ (a^3 - a) da-form, expressed in u
            let a0: f64 = 1.0;
            let a1 = 1.0 - b;
            // ∫_{x_i}^{t} (a^3 - a) dx = -h ∫_{a0}^{a1} (a^3 - a) da
            -h * ((a1.powi(4) / 4.0 - a1 * a1 / 2.0) - (a0.powi(4) / 4.0 - a0 * a0 / 2.0))
        };
        let b_term = h * (b.powi(4) / 4.0 - b * b / 2.0);
        self.cumulative[i] + lin + (a_term * self.m[i] + b_term * self.m[i + 1]) * h * h / 6.0
    }

    pub fn total(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }
}

/// Many natural cubic splines sharing one uniform grid.
///
/// Locating the interval and the basis weights is done once per abscissa via
/// [`SplineBank::weights`], after which every series evaluates in O(1).
/// Abscissae outside the grid are clamped to its ends.
#[derive(Debug, Clone)]
pub struct SplineBank {
    lo: f64,
    step: f64,
    knots: usize,
    series: usize,
    // knot-major: values[i * series + s]
    values: Vec<f64>,
    second: Vec<f64>,
}

/// Basis weights of one abscissa in a [`SplineBank`].
#[derive(Debug, Clone, Copy)]
pub struct SplineWeights {
    index: usize,
    a: f64,
    b: f64,
    ca: f64,
    cb: f64,
}

impl SplineBank {
    /// `values` is knot-major with `series` entries per knot.
    pub fn new(lo: f64, hi: f64, knots: usize, series: usize, values: Vec<f64>) -> Self {
        assert!(
            knots >= 2 && hi > lo,
            "spline bank needs an increasing grid of at least two knots"
        );
        assert_eq!(values.len(), knots * series);
        let step = (hi - lo) / (knots - 1) as f64;
        let mut second = vec![0.0; knots * series];
        if knots > 2 && series > 0 {
            // uniform natural spline: m[i-1] + 4 m[i] + m[i+1] = 6 Δ²y / h²
            let n = knots;
            let mut c_prime = vec![0.0; n];
            for i in 1..n - 1 {
                c_prime[i] = 1.0 / (4.0 - c_prime[i - 1]);
            }
            let scale = 6.0 / (step * step);
            let mut d_prime = vec![0.0; n * series];
            for i in 1..n - 1 {
                for s in 0..series {
                    let d = scale
                        * (values[(i + 1) * series + s] - 2.0 * values[i * series + s] + values[(i - 1) * series + s]);
                    d_prime[i * series + s] = (d - d_prime[(i - 1) * series + s]) * c_prime[i];
                }
            }
            for i in (1..n - 1).rev() {
                for s in 0..series {
                    second[i * series + s] = d_prime[i * series + s] - c_prime[i] * second[(i + 1) * series + s];
                }
            }
        }
        SplineBank {
            lo,
            step,
            knots,
            series,
            values,
            second,
        }
    }

    pub fn series(&self) -> usize {
        self.series
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.lo + self.step * (self.knots - 1) as f64)
    }

    pub fn knot(&self, i: usize) -> f64 {
        self.lo + self.step * i as f64
    }

    pub fn knot_value(&self, i: usize, series: usize) -> f64 {
        self.values[i * self.series + series]
    }

    pub fn weights(&self, t: f64) -> SplineWeights {
        let u = ((t - self.lo) / self.step).clamp(0.0, (self.knots - 1) as f64);
        let index = (u.floor() as usize).min(self.knots - 2);
        let b = u - index as f64;
        let a = 1.0 - b;
        let h2 = self.step * self.step / 6.0;
        SplineWeights {
            index,
            a,
            b,
            ca: (a * a * a - a) * h2,
            cb: (b * b * b - b) * h2,
        }
    }

    #[inline]
    pub fn eval(&self, w: &SplineWeights, series: usize) -> f64 {
        let i0 = w.index * self.series + series;
        let i1 = i0 + self.series;
        w.a * self.values[i0] + w.b * self.values[i1] + w.ca * self.second[i0] + w.cb * self.second[i1]
    }
}

/// Monotone piecewise cubic Hermite interpolant (Fritsch–Carlson slopes).
/// Never overshoots the data, which matters for noisy tabulated values.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n, "interpolant needs at least two knots");
        let secants: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for i in 1..n - 1 {
            let (s0, s1) = (secants[i - 1], secants[i]);
            if s0 * s1 <= 0.0 {
                slopes[i] = 0.0;
            } else {
                // weighted harmonic mean
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                slopes[i] = (w1 + w2) / (w1 / s0 + w2 / s1);
            }
        }
        MonotoneCubic { x, y, slopes }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let t = t.clamp(self.x[0], self.x[n - 1]);
        let i = match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.slopes[i] + h01 * self.y[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

/// Outcome of a bracketed bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bisection {
    Root(f64),
    /// The function has the same sign at both ends of the bracket.
    NoSignChange,
}

/// Bisection for a root of `f` on `[lo, hi]`, at most `max_iter` halvings.
pub fn bisect<F: FnMut(f64) -> f64>(mut lo: f64, mut hi: f64, max_iter: usize, mut f: F) -> Bisection {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Bisection::Root(lo);
    }
    if f_hi == 0.0 {
        return Bisection::Root(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Bisection::NoSignChange;
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Bisection::Root(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Bisection::Root(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(8);
        // degree 15 is the limit for 8 nodes
        let v = rule.integrate(-1.0, 2.0, |x| x.powi(15) - 3.0 * x.powi(4));
        let exact = (2f64.powi(16) - 1.0) / 16.0 - 3.0 * (32.0 + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-9 * exact.abs());
        let w: f64 = rule.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_high_order_is_accurate() {
        let rule = GaussLegendre::new(128);
        let v = rule.integrate(0.0, PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn spline_integral_matches_quadrature() {
        let x: Vec<f64> = (0..=60).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|&t| (-0.5 * (t - 3.0).powi(2)).exp()).collect();
        let s = CubicSpline::new(x, y);
        let exact = GaussLegendre::new(64).integrate(0.0, 2.37, |t| (-0.5 * (t - 3.0).powi(2)).exp());
        assert!((s.integral_to(2.37) - exact).abs() < 1e-5);
        assert!((s.eval(2.37) - (-0.5 * 0.63f64.powi(2)).exp()).abs() < 1e-4);
        assert_eq!(s.integral_to(-1.0), 0.0);
        assert!((s.integral_to(100.0) - s.total()).abs() < 1e-15);
    }

    #[test]
    fn spline_bank_matches_single_splines() {
        let n = 17;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * 0.25).collect();
        let f = |x: f64| (1.3 * x).sin();
        let g = |x: f64| x * x * (-0.2 * x).exp();
        let mut vals = Vec::new();
        for &x in &xs {
            vals.push(f(x));
            vals.push(g(x));
        }
        let bank = SplineBank::new(0.0, 4.0, n, 2, vals);
        let sf = CubicSpline::new(xs.clone(), xs.iter().map(|&x| f(x)).collect());
        let sg = CubicSpline::new(xs.clone(), xs.iter().map(|&x| g(x)).collect());
        for k in 0..50 {
            let t = 0.08 * k as f64;
            let w = bank.weights(t);
            assert!((bank.eval(&w, 0) - sf.eval(t)).abs() < 1e-12);
            assert!((bank.eval(&w, 1) - sg.eval(t)).abs() < 1e-12);
        }
        let w = bank.weights(10.0);
        assert!((bank.eval(&w, 0) - f(4.0)).abs() < 1e-12);
    }

    #[test]
    fn monotone_cubic_does_not_overshoot() {
        let x = vec![0.0, 1.0, 2.0, 3.0];
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let p = MonotoneCubic::new(x, y);
        for i in 0..=300 {
            let v = p.eval(i as f64 * 0.01);
            assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        }
        assert_eq!(p.eval(1.5), 0.5);
    }

    #[test]
    fn bisection_finds_root_and_reports_missing_sign_change() {
        match bisect(0.0, 2.0, 200, |x| x * x - 2.0) {
            Bisection::Root(r) => assert!((r - 2f64.sqrt()).abs() < 1e-14),
            Bisection::NoSignChange => panic!("expected root"),
        }
        assert_eq!(bisect(0.0, 1.0, 10, |x| x + 1.0), Bisection::NoSignChange);
    }
}
