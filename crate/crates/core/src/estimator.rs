//! Per-factor mutual information estimation.
//!
//! Fits the best factorized Gaussian q*(z) to the aggregate posterior of a
//! snapshot, averages exact univariate KL divergences against it to obtain
//! per-factor MI estimates, and (optionally) audits the decomposition
//!
//!   E_x KL(q(z_h|x) ‖ r(z_h)) = I(x; z_h) + KL(q(z_h) ‖ r(z_h))
//!
//! with both right-hand terms computed by independent quadrature.
//!
//! The estimator includes the −1/2 constant of the Gaussian KL closed form,
//! so a prior-matching snapshot reports exactly zero per factor.

use crate::error::{Error, Result};
use crate::gaussian::{
    kl_univariate, mixture_kl_quadrature, mixture_mi, Gaussian1, GaussianMixture1, QuadratureSpec,
};
use crate::snapshot::EncoderSnapshot;
use crate::sum::{pairwise_mean, pairwise_sum};
use serde::{Deserialize, Serialize};

/// Factorized Gaussian fit to the aggregate posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct QStar {
    variances: Vec<f64>,
    means: Vec<f64>,
    mean_fitted: bool,
}

impl QStar {
    pub fn new(variances: Vec<f64>, means: Vec<f64>, mean_fitted: bool) -> Result<Self> {
        if variances.len() != means.len() {
            return Err(Error::Usage(
                "variances and means must have equal length".into(),
            ));
        }
        if variances.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Domain(
                "q* variances must be finite and positive".into(),
            ));
        }
        Ok(Self {
            variances,
            means,
            mean_fitted,
        })
    }

    pub fn num_factors(&self) -> usize {
        self.variances.len()
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn mean_fitted(&self) -> bool {
        self.mean_fitted
    }

    pub fn factor(&self, h: usize) -> Gaussian1 {
        Gaussian1::new(self.means[h], self.variances[h]).expect("QStar invariant")
    }
}

/// Fits q* in closed form.
///
/// With `fit_mean` off (the default): σ*_h² = mean(σ_h² + μ_h²), the
/// minimizer of the average KL over zero-mean factorized Gaussians. With
/// `fit_mean` on, the factor mean is the sample mean of μ_h and the variance
/// is centered accordingly.
pub fn solve_q_star(snapshot: &EncoderSnapshot, fit_mean: bool) -> QStar {
    let h = snapshot.num_factors();
    let m = snapshot.num_samples();
    let mut variances = Vec::with_capacity(h);
    let mut means = Vec::with_capacity(h);
    let mut buf = vec![0.0f64; m];
    for j in 0..h {
        let mean_j = if fit_mean {
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = snapshot.mu(i, j);
            }
            pairwise_mean(&buf)
        } else {
            0.0
        };
        for (i, slot) in buf.iter_mut().enumerate() {
            let s = snapshot.sigma(i, j);
            let d = snapshot.mu(i, j) - mean_j;
            *slot = s * s + d * d;
        }
        variances.push(pairwise_mean(&buf));
        means.push(mean_j);
    }
    QStar::new(variances, means, fit_mean).expect("closed-form q* is always valid")
}

/// Per-factor MI estimates: averages of exact univariate KL against q*.
pub fn estimate_factor_mi(snapshot: &EncoderSnapshot, q_star: &QStar) -> Result<Vec<f64>> {
    let h = snapshot.num_factors();
    if q_star.num_factors() != h {
        return Err(Error::Usage(format!(
            "q* has {} factors but snapshot has {h}",
            q_star.num_factors()
        )));
    }
    let m = snapshot.num_samples();
    let mut out = Vec::with_capacity(h);
    let mut buf = vec![0.0f64; m];
    for j in 0..h {
        let reference = q_star.factor(j);
        for (i, slot) in buf.iter_mut().enumerate() {
            let sd = snapshot.sigma(i, j);
            let p = Gaussian1::new(snapshot.mu(i, j), sd * sd)
                .map_err(|e| Error::Validation(format!("sample {i}, factor {j}: {e}")))?;
            *slot = kl_univariate(&p, &reference);
        }
        out.push(pairwise_mean(&buf));
    }
    Ok(out)
}

/// Total MI: fixed-order pairwise sum of the per-factor estimates.
pub fn estimate_total_mi(per_factor: &[f64]) -> f64 {
    pairwise_sum(per_factor)
}

/// One row of the decomposition audit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AuditRow {
    pub index: usize,
    /// Average exact KL(component ‖ reference).
    pub lhs: f64,
    /// Quadrature MI of the empirical mixture.
    pub mixture_mi: f64,
    /// Quadrature KL(mixture ‖ reference).
    pub marginal_kl: f64,
    /// lhs − (mixture_mi + marginal_kl); bounded by quadrature tolerance.
    pub residual: f64,
}

/// Audits the per-factor decomposition against the given references, one
/// Gaussian per factor (the prior, or q* for the tight variant).
pub fn decomposition_audit(
    snapshot: &EncoderSnapshot,
    references: &[Gaussian1],
    spec: &QuadratureSpec,
) -> Result<Vec<AuditRow>> {
    let h = snapshot.num_factors();
    if references.len() != h {
        return Err(Error::Usage(format!(
            "{} references for {h} factors",
            references.len()
        )));
    }
    let m = snapshot.num_samples();
    let mut rows = Vec::with_capacity(h);
    for (j, reference) in references.iter().enumerate() {
        let mut components = Vec::with_capacity(m);
        let mut kls = Vec::with_capacity(m);
        for i in 0..m {
            let sd = snapshot.sigma(i, j);
            let g = Gaussian1::new(snapshot.mu(i, j), sd * sd)
                .map_err(|e| Error::Validation(format!("sample {i}, factor {j}: {e}")))?;
            kls.push(kl_univariate(&g, reference));
            components.push(g);
        }
        let lhs = pairwise_mean(&kls);
        let mixture = GaussianMixture1::equal_weights(components)?;
        let mi = mixture_mi(&mixture, spec)?;
        let marg = mixture_kl_quadrature(&mixture, reference, spec)?;
        rows.push(AuditRow {
            index: j,
            lhs,
            mixture_mi: mi.value,
            marginal_kl: marg.value,
            residual: lhs - (mi.value + marg.value),
        });
    }
    Ok(rows)
}

/// Per-factor entry of a [`MiReport`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FactorRow {
    pub index: usize,
    pub mi_nats: f64,
    pub sigma_star_sq: f64,
    /// Position in the descending-MI ranking (0 = most informative).
    pub rank: usize,
    pub influential: bool,
}

/// Full analysis output. Serializes to the report JSON/CSV interchange
/// schema; all information quantities are in nats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiReport {
    pub threshold: f64,
    pub fit_mean: bool,
    pub factors: Vec<FactorRow>,
    pub total_mi_nats: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<Vec<AuditRow>>,
}

impl MiReport {
    pub fn per_factor_mi(&self) -> Vec<f64> {
        self.factors.iter().map(|f| f.mi_nats).collect()
    }

    /// Factor indices sorted by MI descending, ties by ascending index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut by_rank: Vec<(usize, usize)> =
            self.factors.iter().map(|f| (f.rank, f.index)).collect();
        by_rank.sort_unstable();
        by_rank.into_iter().map(|(_, i)| i).collect()
    }

    pub fn influential_mask(&self) -> Vec<bool> {
        self.factors.iter().map(|f| f.influential).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// CSV form: one row per factor, same fields as the JSON schema.
    pub fn to_csv(&self) -> String {
        use crate::snapshot::format_sig17;
        let mut out = String::from("index,mi_nats,sigma_star_sq,rank,influential\n");
        for f in &self.factors {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                f.index,
                format_sig17(f.mi_nats),
                format_sig17(f.sigma_star_sq),
                f.rank,
                f.influential
            ));
        }
        out
    }
}

/// Ranks indices by value descending, ties broken by ascending index.
pub(crate) fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// End-to-end analysis: fit q*, estimate per-factor and total MI, rank,
/// threshold, and optionally audit the decomposition against q*.
pub fn analyze(
    snapshot: &EncoderSnapshot,
    threshold: f64,
    fit_mean: bool,
    with_audit: bool,
) -> Result<MiReport> {
    if !(threshold >= 0.0) {
        return Err(Error::Usage(format!(
            "threshold must be >= 0, got {threshold}"
        )));
    }
    let violations = crate::snapshot::validate_snapshot(snapshot);
    if !violations.is_empty() {
        let msg = violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::Validation(msg));
    }
    let q_star = solve_q_star(snapshot, fit_mean);
    let per_factor = estimate_factor_mi(snapshot, &q_star)?;
    let total = estimate_total_mi(&per_factor);
    let ranking = rank_descending(&per_factor);
    let mut rank_of = vec![0usize; per_factor.len()];
    for (r, &idx) in ranking.iter().enumerate() {
        rank_of[idx] = r;
    }
    let factors: Vec<FactorRow> = (0..per_factor.len())
        .map(|j| FactorRow {
            index: j,
            mi_nats: per_factor[j],
            sigma_star_sq: q_star.variances()[j],
            rank: rank_of[j],
            influential: per_factor[j] > threshold,
        })
        .collect();
    let audit = if with_audit {
        let refs: Vec<Gaussian1> = (0..per_factor.len()).map(|j| q_star.factor(j)).collect();
        Some(decomposition_audit(
            snapshot,
            &refs,
            &QuadratureSpec::default(),
        )?)
    } else {
        None
    };
    Ok(MiReport {
        threshold,
        fit_mean,
        factors,
        total_mi_nats: total,
        audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshot::EncoderSnapshot;
    use approx::assert_abs_diff_eq;

    fn snap(m: usize, h: usize, mu: Vec<f64>, sigma: Vec<f64>) -> EncoderSnapshot {
        EncoderSnapshot::new(m, h, mu, sigma, "test").unwrap()
    }

    #[test]
    fn q_star_prior_matching() {
        let s = snap(3, 2, vec![0.0; 6], vec![1.0; 6]);
        let q = solve_q_star(&s, false);
        assert_eq!(q.variances(), &[1.0, 1.0]);
        assert_eq!(q.means(), &[0.0, 0.0]);
    }

    #[test]
    fn q_star_two_sample_closed_form() {
        let s = snap(2, 1, vec![1.0, -1.0], vec![1.0, 1.0]);
        let q = solve_q_star(&s, false);
        assert_abs_diff_eq!(q.variances()[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn q_star_single_sample() {
        let s = snap(1, 1, vec![0.0], vec![2.0]);
        let q = solve_q_star(&s, false);
        assert_abs_diff_eq!(q.variances()[0], 4.0, epsilon = 1e-15);
    }

    #[test]
    fn q_star_mean_fitted_centers() {
        let s = snap(2, 1, vec![3.0, 5.0], vec![1.0, 1.0]);
        let q = solve_q_star(&s, true);
        assert_abs_diff_eq!(q.means()[0], 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.variances()[0], 1.0 + 1.0, epsilon = 1e-15);
    }

    #[test]
    fn factor_mi_examples() {
        let s = snap(3, 1, vec![0.0; 3], vec![1.0; 3]);
        let q = solve_q_star(&s, false);
        let mi = estimate_factor_mi(&s, &q).unwrap();
        assert_abs_diff_eq!(mi[0], 0.0, epsilon = 1e-15);

        let s = snap(2, 1, vec![1.0, -1.0], vec![1.0, 1.0]);
        let q = solve_q_star(&s, false);
        let mi = estimate_factor_mi(&s, &q).unwrap();
        assert_abs_diff_eq!(mi[0], 0.5 * std::f64::consts::LN_2, epsilon = 1e-15);

        let s = snap(1, 1, vec![0.0], vec![2.0]);
        let q = solve_q_star(&s, false);
        let mi = estimate_factor_mi(&s, &q).unwrap();
        assert_abs_diff_eq!(mi[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn factor_mi_dimension_mismatch() {
        let s = snap(1, 2, vec![0.0, 0.0], vec![1.0, 1.0]);
        let q = QStar::new(vec![1.0], vec![0.0], false).unwrap();
        assert!(matches!(estimate_factor_mi(&s, &q), Err(Error::Usage(_))));
    }

    #[test]
    fn total_mi_sums() {
        assert_eq!(estimate_total_mi(&[0.0, 0.0, 0.0]), 0.0);
        #[allow(clippy::approx_constant)] // pinned 5-digit example values
        {
            assert_abs_diff_eq!(
                estimate_total_mi(&[0.34657, 0.34657]),
                0.69314,
                epsilon = 1e-10
            );
        }
        let mut v = vec![0.0; 128];
        v[17] = 24.3;
        assert_eq!(estimate_total_mi(&v), 24.3);
    }

    #[test]
    fn log_ratio_identity_for_same_snapshot_q_star() {
        // With q* from the same snapshot (zero-mean), the quadratic term
        // averages to exactly 1/2, so I_est,h reduces to mean ln(σ*_h/σ_h).
        let mu = vec![0.3, -1.2, 2.0, 0.7, -0.4, 1.5];
        let sigma = vec![0.5, 1.5, 0.8, 1.1, 0.9, 2.0];
        let s = snap(3, 2, mu, sigma);
        let q = solve_q_star(&s, false);
        let mi = estimate_factor_mi(&s, &q).unwrap();
        #[allow(clippy::needless_range_loop)] // j indexes three parallel views
        for j in 0..2 {
            let logs: Vec<f64> = (0..3)
                .map(|i| (q.variances()[j].sqrt() / s.sigma(i, j)).ln())
                .collect();
            let direct = pairwise_mean(&logs);
            assert_abs_diff_eq!(mi[j], direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn audit_trivial_snapshot() {
        let s = snap(2, 1, vec![0.0, 0.0], vec![1.0, 1.0]);
        let refs = vec![Gaussian1::standard()];
        let rows = decomposition_audit(&s, &refs, &QuadratureSpec::default()).unwrap();
        assert_abs_diff_eq!(rows[0].lhs, 0.0, epsilon = 1e-12);
        assert!(rows[0].mixture_mi.abs() < 1e-8);
        assert!(rows[0].marginal_kl.abs() < 1e-8);
        assert!(rows[0].residual.abs() < 1e-8);
    }

    #[test]
    fn audit_prior_vs_q_star_reference() {
        let s = snap(2, 1, vec![1.0, -1.0], vec![1.0, 1.0]);
        let spec = QuadratureSpec::default();
        let prior = decomposition_audit(&s, &[Gaussian1::standard()], &spec).unwrap();
        assert_abs_diff_eq!(prior[0].lhs, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(
            prior[0].mixture_mi + prior[0].marginal_kl,
            0.5,
            epsilon = 1e-6
        );

        let qs = decomposition_audit(&s, &[Gaussian1::new(0.0, 2.0).unwrap()], &spec).unwrap();
        assert_abs_diff_eq!(qs[0].lhs, 0.5 * std::f64::consts::LN_2, epsilon = 1e-12);
        // The q* reference is the tighter one: smaller marginal KL.
        assert!(qs[0].marginal_kl < prior[0].marginal_kl);
        assert!(qs[0].residual.abs() < 1e-6);
    }

    #[test]
    fn analyze_prior_matching() {
        let s = snap(4, 3, vec![0.0; 12], vec![1.0; 12]);
        let r = analyze(&s, 0.5, false, false).unwrap();
        assert_eq!(r.per_factor_mi(), vec![0.0; 3]);
        assert_eq!(r.influential_mask(), vec![false; 3]);
        assert_eq!(r.total_mi_nats, 0.0);
    }

    #[test]
    fn analyze_threshold_masks_paper_values() {
        let mi = [3.1, 0.8, 2.1, 0.01];
        let ranking = rank_descending(&mi);
        assert_eq!(ranking, vec![0, 2, 1, 3]);
        let mask: Vec<bool> = mi.iter().map(|&v| v > 0.5).collect();
        assert_eq!(mask, vec![true, true, true, false]);
    }

    #[test]
    fn analyze_two_sample_report() {
        let s = snap(2, 1, vec![1.0, -1.0], vec![1.0, 1.0]);
        let r = analyze(&s, 0.5, false, false).unwrap();
        assert_abs_diff_eq!(r.factors[0].mi_nats, 0.34657, epsilon = 5e-6);
        assert_abs_diff_eq!(r.total_mi_nats, r.factors[0].mi_nats, epsilon = 0.0);
        assert_eq!(r.ranking(), vec![0]);
    }

    #[test]
    fn analyze_rejects_negative_threshold() {
        let s = snap(1, 1, vec![0.0], vec![1.0]);
        assert!(matches!(
            analyze(&s, -0.1, false, false),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn analyze_rejects_invalid_snapshot() {
        let s = snap(1, 1, vec![0.0], vec![-1.0]);
        assert!(matches!(
            analyze(&s, 0.5, false, false),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn analyze_permutation_equivariant() {
        let mu = vec![0.5, -0.1, 2.0, 1.5, 0.2, -2.0, 0.1, 0.9, -0.7];
        let sigma = vec![0.5, 1.0, 0.8, 1.2, 0.9, 0.4, 1.1, 0.6, 1.3];
        let s = snap(3, 3, mu, sigma);
        let perm = [2usize, 0, 1];
        let sp = s.permute_factors(&perm).unwrap();
        let r = analyze(&s, 0.1, false, false).unwrap();
        let rp = analyze(&sp, 0.1, false, false).unwrap();
        for (new_col, &old_col) in perm.iter().enumerate() {
            assert_eq!(
                rp.factors[new_col].mi_nats.to_bits(),
                r.factors[old_col].mi_nats.to_bits()
            );
            assert_eq!(
                rp.factors[new_col].influential,
                r.factors[old_col].influential
            );
        }
    }

    #[test]
    fn report_json_round_trip() {
        let s = snap(2, 2, vec![1.0, 0.0, -1.0, 0.0], vec![1.0; 4]);
        let r = analyze(&s, 0.5, false, true).unwrap();
        let text = r.to_json();
        let back = MiReport::from_json(&text).unwrap();
        assert_eq!(back.to_json(), text);
        assert!(text.contains("mi_nats"));
        assert!(text.contains("audit"));
    }
}
