//! Exact univariate Gaussian information quantities and the numerical
//! quadrature oracle used to audit them.
//!
//! All quantities are in nats. The closed forms here are paired with
//! quadrature routines so that every identity the rest of the crate relies
//! on (per-factor KL decomposition, mixture mutual information) can be
//! checked by an independent numerical route.

use crate::error::{Error, Result};
use crate::sum::pairwise_sum;
use std::f64::consts::PI;

/// A univariate Gaussian N(mean, variance).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian1 {
    mean: f64,
    variance: f64,
}

impl Gaussian1 {
    /// Constructs N(mean, variance). The variance must be strictly positive
    /// and both parameters finite.
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::Domain(format!("non-finite mean {mean}")));
        }
        if !variance.is_finite() || variance <= 0.0 {
            return Err(Error::Domain(format!(
                "variance must be finite and strictly positive, got {variance}"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn standard() -> Self {
        Self {
            mean: 0.0,
            variance: 1.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Log density at `z`.
    pub fn ln_pdf(&self, z: f64) -> f64 {
        let d = z - self.mean;
        -0.5 * ((2.0 * PI * self.variance).ln() + d * d / self.variance)
    }
}

/// KL(p ‖ q) between two univariate Gaussians, in nats.
///
/// ln(σ_q/σ_p) + (σ_p² + (μ_p − μ_q)²) / (2 σ_q²) − 1/2
pub fn kl_univariate(p: &Gaussian1, q: &Gaussian1) -> f64 {
    let dm = p.mean - q.mean;
    0.5 * (q.variance / p.variance).ln() + (p.variance + dm * dm) / (2.0 * q.variance) - 0.5
}

/// Differential entropy of N(·, variance): ½ ln(2πe·variance), in nats.
pub fn entropy_univariate(variance: f64) -> Result<f64> {
    if !variance.is_finite() || variance <= 0.0 {
        return Err(Error::Domain(format!(
            "variance must be finite and strictly positive, got {variance}"
        )));
    }
    Ok(0.5 * (2.0 * PI * std::f64::consts::E * variance).ln())
}

/// A finite mixture of univariate Gaussians with normalized weights.
#[derive(Debug, Clone)]
pub struct GaussianMixture1 {
    components: Vec<Gaussian1>,
    weights: Vec<f64>,
}

impl GaussianMixture1 {
    /// Weights must be non-negative and sum to 1 within 1e-12.
    pub fn new(components: Vec<Gaussian1>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("mixture needs at least one component".into()));
        }
        if components.len() != weights.len() {
            return Err(Error::Domain(format!(
                "{} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self {
            components,
            weights,
        })
    }

    /// Equal-weight mixture, the empirical aggregate posterior of a snapshot.
    pub fn equal_weights(components: Vec<Gaussian1>) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(Error::Domain("mixture needs at least one component".into()));
        }
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        // Nudge the last weight so the sum is exactly 1 in floating point.
        let head = pairwise_sum(&weights[..n - 1]);
        weights[n - 1] = 1.0 - head;
        Self::new(components, weights)
    }

    pub fn components(&self) -> &[Gaussian1] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Log of the mixture density at `z`, via log-sum-exp.
    pub fn ln_pdf(&self, z: f64) -> f64 {
        let mut max = f64::NEG_INFINITY;
        let terms: Vec<f64> = self
            .components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| {
                let t = if *w > 0.0 {
                    w.ln() + c.ln_pdf(z)
                } else {
                    f64::NEG_INFINITY
                };
                if t > max {
                    max = t;
                }
                t
            })
            .collect();
        if max == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }
}

/// Integration scheme for the quadrature oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadScheme {
    /// Adaptive composite Simpson with an absolute tolerance; `order` is the
    /// maximum bisection depth.
    AdaptiveSimpson,
    /// Fixed-order Gauss–Hermite; the reported tolerance is the difference
    /// against the half-order rule.
    GaussHermite,
}

/// Parameters of the quadrature oracle.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureSpec {
    scheme: QuadScheme,
    order: usize,
    half_width: f64,
    abs_tol: f64,
}

impl QuadratureSpec {
    /// `order` is the Gauss–Hermite order or the Simpson recursion limit
    /// (must be ≥ 16); `half_width` is the integration half-width in
    /// component standard deviations (must be ≥ 8).
    pub fn new(scheme: QuadScheme, order: usize, half_width: f64, abs_tol: f64) -> Result<Self> {
        if order < 16 {
            return Err(Error::Domain(format!("quadrature order {order} < 16")));
        }
        if !(half_width >= 8.0) {
            return Err(Error::Domain(format!(
                "half-width {half_width} < 8 standard deviations"
            )));
        }
        if !(abs_tol > 0.0) {
            return Err(Error::Domain(format!(
                "tolerance must be positive, got {abs_tol}"
            )));
        }
        Ok(Self {
            scheme,
            order,
            half_width,
            abs_tol,
        })
    }

    pub fn scheme(&self) -> QuadScheme {
        self.scheme
    }

    pub fn abs_tol(&self) -> f64 {
        self.abs_tol
    }
}

impl Default for QuadratureSpec {
    /// Adaptive Simpson over ±10σ with absolute tolerance 1e-9.
    fn default() -> Self {
        Self {
            scheme: QuadScheme::AdaptiveSimpson,
            order: 48,
            half_width: 10.0,
            abs_tol: 1e-9,
        }
    }
}

/// A quadrature value together with the tolerance actually achieved.
#[derive(Debug, Clone, Copy)]
pub struct QuadValue {
    pub value: f64,
    pub tolerance: f64,
}

struct SimpsonState<'f> {
    f: &'f dyn Fn(f64) -> f64,
    err: f64,
}

fn simpson_segment(h: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)] // recursion carries the shared endpoint evaluations
fn adaptive_simpson_rec(
    st: &mut SimpsonState,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = (st.f)(lm);
    let frm = (st.f)(rm);
    let left = simpson_segment(m - a, fa, flm, fm);
    let right = simpson_segment(b - m, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        st.err += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    adaptive_simpson_rec(st, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_simpson_rec(st, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Number of equal bootstrap panels before the adaptive recursion. A single
/// starting panel can terminate early when a narrow feature falls between
/// the first five sample points; a fixed subdivision makes the level-one
/// error estimates trustworthy.
const SIMPSON_PANELS: usize = 32;

/// Integrates `f` over `[a, b]` with panelized adaptive Simpson; returns the
/// value and an accumulated error estimate.
fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
) -> (f64, f64) {
    let mut st = SimpsonState { f, err: 0.0 };
    let panel_tol = tol / SIMPSON_PANELS as f64;
    let width = (b - a) / SIMPSON_PANELS as f64;
    let mut parts = Vec::with_capacity(SIMPSON_PANELS);
    for i in 0..SIMPSON_PANELS {
        let pa = a + i as f64 * width;
        let pb = if i + 1 == SIMPSON_PANELS {
            b
        } else {
            pa + width
        };
        let fa = f(pa);
        let m = 0.5 * (pa + pb);
        let fm = f(m);
        let fb = f(pb);
        let whole = simpson_segment(pb - pa, fa, fm, fb);
        parts.push(adaptive_simpson_rec(
            &mut st, pa, pb, fa, fm, fb, whole, panel_tol, max_depth,
        ));
    }
    (pairwise_sum(&parts), st.err)
}

/// Gauss–Hermite nodes and weights of the given order via Golub–Welsch.
fn gauss_hermite_rule(order: usize) -> (Vec<f64>, Vec<f64>) {
    use nalgebra::DMatrix;
    let n = order;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let v = (i as f64 / 2.0).sqrt();
        jac[(i - 1, i)] = v;
        jac[(i, i - 1)] = v;
    }
    let eig = nalgebra::SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let w0 = eig.eigenvectors[(0, i)];
            (node, PI.sqrt() * w0 * w0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// E_{z ~ N(mean, variance)}[f(z)] by Gauss–Hermite of the given order.
fn gauss_hermite_expectation(
    f: &dyn Fn(f64) -> f64,
    mean: f64,
    variance: f64,
    order: usize,
) -> f64 {
    let (nodes, weights) = gauss_hermite_rule(order);
    let sd = variance.sqrt();
    let scale = 1.0 / PI.sqrt();
    let terms: Vec<f64> = nodes
        .iter()
        .zip(&weights)
        .map(|(x, w)| scale * w * f(mean + std::f64::consts::SQRT_2 * sd * x))
        .collect();
    pairwise_sum(&terms)
}

/// Integration window covering every component of `p` (and optionally `q`)
/// out to `half_width` standard deviations.
fn coverage_interval(p: &GaussianMixture1, q: Option<&Gaussian1>, half_width: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut extend = |g: &Gaussian1| {
        let sd = g.std_dev();
        lo = lo.min(g.mean() - half_width * sd);
        hi = hi.max(g.mean() + half_width * sd);
    };
    for c in p.components() {
        extend(c);
    }
    if let Some(g) = q {
        extend(g);
    }
    (lo, hi)
}

fn finish_quad(value: f64, err: f64, spec: &QuadratureSpec) -> Result<QuadValue> {
    if !value.is_finite() {
        return Err(Error::Numeric {
            achieved: f64::INFINITY,
            requested: spec.abs_tol,
        });
    }
    if err > 10.0 * spec.abs_tol {
        return Err(Error::Numeric {
            achieved: err,
            requested: spec.abs_tol,
        });
    }
    let tolerance = err.max(spec.abs_tol);
    // KL integrands are non-negative; clamp quadrature noise around zero.
    let value = if value < 0.0 && value >= -tolerance {
        0.0
    } else {
        value
    };
    Ok(QuadValue { value, tolerance })
}

/// KL(p ‖ q) of a Gaussian mixture against a single Gaussian, by quadrature.
pub fn mixture_kl_quadrature(
    p: &GaussianMixture1,
    q: &Gaussian1,
    spec: &QuadratureSpec,
) -> Result<QuadValue> {
    let integrand = |z: f64| {
        let lp = p.ln_pdf(z);
        if lp == f64::NEG_INFINITY {
            return 0.0;
        }
        let pd = lp.exp();
        if pd == 0.0 {
            0.0
        } else {
            pd * (lp - q.ln_pdf(z))
        }
    };
    match spec.scheme {
        QuadScheme::AdaptiveSimpson => {
            let (a, b) = coverage_interval(p, Some(q), spec.half_width);
            let (v, err) = adaptive_simpson(&integrand, a, b, spec.abs_tol, spec.order);
            finish_quad(v, err, spec)
        }
        QuadScheme::GaussHermite => {
            // E_p[ln p − ln q] as a weighted sum of per-component expectations.
            let g = |z: f64| p.ln_pdf(z) - q.ln_pdf(z);
            let eval = |order: usize| {
                let terms: Vec<f64> = p
                    .components()
                    .iter()
                    .zip(p.weights())
                    .map(|(c, w)| w * gauss_hermite_expectation(&g, c.mean(), c.variance(), order))
                    .collect();
                pairwise_sum(&terms)
            };
            let full = eval(spec.order);
            let half = eval((spec.order / 2).max(16));
            finish_quad(full, (full - half).abs(), spec)
        }
    }
}

/// Mutual information of the component index against z under the mixture:
/// the weighted average of KL(component ‖ mixture), by quadrature.
///
/// Bounded above by ln(number of components) for equal weights.
pub fn mixture_mi(p: &GaussianMixture1, spec: &QuadratureSpec) -> Result<QuadValue> {
    let mut values = Vec::with_capacity(p.components().len());
    let mut tol = 0.0f64;
    for (c, w) in p.components().iter().zip(p.weights()) {
        if *w == 0.0 {
            values.push(0.0);
            continue;
        }
        let integrand = |z: f64| {
            let lc = c.ln_pdf(z);
            let cd = lc.exp();
            if cd == 0.0 {
                0.0
            } else {
                cd * (lc - p.ln_pdf(z))
            }
        };
        let qv = match spec.scheme {
            QuadScheme::AdaptiveSimpson => {
                let sd = c.std_dev();
                let a = c.mean() - spec.half_width * sd;
                let b = c.mean() + spec.half_width * sd;
                let (v, err) = adaptive_simpson(&integrand, a, b, spec.abs_tol, spec.order);
                finish_quad(v, err, spec)?
            }
            QuadScheme::GaussHermite => {
                let g = |z: f64| c.ln_pdf(z) - p.ln_pdf(z);
                let full = gauss_hermite_expectation(&g, c.mean(), c.variance(), spec.order);
                let half =
                    gauss_hermite_expectation(&g, c.mean(), c.variance(), (spec.order / 2).max(16));
                finish_quad(full, (full - half).abs(), spec)?
            }
        };
        tol += w * qv.tolerance;
        values.push(w * qv.value.max(0.0));
    }
    let value = pairwise_sum(&values);
    Ok(QuadValue {
        value: value.max(0.0),
        tolerance: tol.max(spec.abs_tol),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn n(mean: f64, variance: f64) -> Gaussian1 {
        Gaussian1::new(mean, variance).unwrap()
    }

    #[test]
    fn kl_identity_is_zero() {
        assert_eq!(kl_univariate(&n(0.0, 1.0), &n(0.0, 1.0)), 0.0);
    }

    #[test]
    fn kl_shifted_mean() {
        assert_abs_diff_eq!(
            kl_univariate(&n(1.0, 1.0), &n(0.0, 1.0)),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn kl_scaled_variance() {
        // ln(1/2) + 2 − 1/2
        let expect = 0.5f64.ln() + 2.0 - 0.5;
        assert_abs_diff_eq!(
            kl_univariate(&n(0.0, 4.0), &n(0.0, 1.0)),
            expect,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(expect, 0.80685, epsilon = 5e-6);
    }

    #[test]
    fn kl_rejects_bad_variance() {
        assert!(Gaussian1::new(0.0, 0.0).is_err());
        assert!(Gaussian1::new(0.0, -1.0).is_err());
        assert!(Gaussian1::new(0.0, f64::NAN).is_err());
        assert!(Gaussian1::new(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn entropy_closed_form() {
        let zero_var = 1.0 / (2.0 * PI * std::f64::consts::E);
        assert_abs_diff_eq!(entropy_univariate(zero_var).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(entropy_univariate(1.0).unwrap(), 1.41894, epsilon = 5e-6);
        assert_abs_diff_eq!(
            entropy_univariate(4.0).unwrap(),
            entropy_univariate(1.0).unwrap() + 0.5 * 4.0f64.ln(),
            epsilon = 1e-12
        );
        assert!(entropy_univariate(0.0).is_err());
    }

    #[test]
    fn entropy_matches_quadrature() {
        // −∫ p ln p for a couple of variances.
        for &v in &[0.3, 1.0, 7.5] {
            let g = n(0.4, v);
            let f = |z: f64| {
                let lp = g.ln_pdf(z);
                -lp.exp() * lp
            };
            let sd = v.sqrt();
            let (val, _) = adaptive_simpson(&f, 0.4 - 12.0 * sd, 0.4 + 12.0 * sd, 1e-11, 48);
            assert_abs_diff_eq!(val, entropy_univariate(v).unwrap(), epsilon = 1e-8);
        }
    }

    #[test]
    fn mixture_kl_single_component_matches_closed_form() {
        let spec = QuadratureSpec::default();
        let p = GaussianMixture1::equal_weights(vec![n(0.0, 1.0)]).unwrap();
        let q = n(0.0, 1.0);
        let qv = mixture_kl_quadrature(&p, &q, &spec).unwrap();
        assert!(qv.value.abs() <= qv.tolerance);

        let p = GaussianMixture1::equal_weights(vec![n(1.0, 1.0)]).unwrap();
        let qv = mixture_kl_quadrature(&p, &q, &spec).unwrap();
        assert_abs_diff_eq!(qv.value, 0.5, epsilon = 1e-8);
    }

    #[test]
    fn gauss_hermite_agrees_with_simpson() {
        let simpson = QuadratureSpec::default();
        let gh = QuadratureSpec::new(QuadScheme::GaussHermite, 96, 10.0, 1e-6).unwrap();
        let p = GaussianMixture1::equal_weights(vec![n(-1.0, 1.0), n(1.0, 1.0)]).unwrap();
        let q = n(0.0, 2.0);
        let a = mixture_kl_quadrature(&p, &q, &simpson).unwrap();
        let b = mixture_kl_quadrature(&p, &q, &gh).unwrap();
        assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-6);
        let ma = mixture_mi(&p, &simpson).unwrap();
        let mb = mixture_mi(&p, &gh).unwrap();
        assert_abs_diff_eq!(ma.value, mb.value, epsilon = 1e-6);
    }

    #[test]
    fn mixture_mi_identical_components_is_zero() {
        let spec = QuadratureSpec::default();
        let p = GaussianMixture1::equal_weights(vec![n(0.5, 2.0); 4]).unwrap();
        let qv = mixture_mi(&p, &spec).unwrap();
        assert!(qv.value <= qv.tolerance);
    }

    #[test]
    fn mixture_mi_far_components_approach_ln2() {
        let spec = QuadratureSpec::default();
        let p = GaussianMixture1::equal_weights(vec![n(-10.0, 1.0), n(10.0, 1.0)]).unwrap();
        let qv = mixture_mi(&p, &spec).unwrap();
        assert_abs_diff_eq!(qv.value, std::f64::consts::LN_2, epsilon = 1e-4);
    }

    #[test]
    fn mixture_mi_bounded_by_ln_m() {
        let spec = QuadratureSpec::default();
        let p = GaussianMixture1::equal_weights(vec![n(-1.0, 1.0), n(1.0, 1.0)]).unwrap();
        let qv = mixture_mi(&p, &spec).unwrap();
        assert!(qv.value > 0.0);
        assert!(qv.value < std::f64::consts::LN_2 + qv.tolerance);
    }

    #[test]
    fn decomposition_identity_at_one_factor() {
        // mixture_mi + mixture_kl == average component KL, both by quadrature.
        let spec = QuadratureSpec::default();
        let comps = vec![n(-1.0, 1.0), n(1.0, 1.0)];
        let q = n(0.0, 2.0);
        let p = GaussianMixture1::equal_weights(comps.clone()).unwrap();
        let lhs_terms: Vec<f64> = comps.iter().map(|c| kl_univariate(c, &q)).collect();
        let lhs = pairwise_sum(&lhs_terms) / 2.0;
        assert_abs_diff_eq!(lhs, 0.34657, epsilon = 5e-6);
        let mi = mixture_mi(&p, &spec).unwrap().value;
        let marg = mixture_kl_quadrature(&p, &q, &spec).unwrap().value;
        assert_abs_diff_eq!(lhs, mi + marg, epsilon = 1e-6);
    }

    #[test]
    fn quadrature_spec_invariants() {
        assert!(QuadratureSpec::new(QuadScheme::AdaptiveSimpson, 8, 10.0, 1e-9).is_err());
        assert!(QuadratureSpec::new(QuadScheme::AdaptiveSimpson, 32, 4.0, 1e-9).is_err());
        assert!(QuadratureSpec::new(QuadScheme::GaussHermite, 32, 10.0, 1e-8).is_ok());
    }

    #[test]
    fn mixture_weight_validation() {
        assert!(GaussianMixture1::new(vec![n(0.0, 1.0)], vec![0.5]).is_err());
        assert!(GaussianMixture1::new(vec![n(0.0, 1.0)], vec![-1.0]).is_err());
        assert!(GaussianMixture1::new(vec![], vec![]).is_err());
        assert!(GaussianMixture1::new(vec![n(0.0, 1.0), n(1.0, 1.0)], vec![0.25, 0.75]).is_ok());
    }
}
