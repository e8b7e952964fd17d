//! Factor ranking/selection, information-theoretic lower bounds, and the
//! truncation/classification sweeps built on them.
//!
//! Two bounds are exposed:
//!
//! * reconstruction: E(x − x̂)² ≥ (1/2πe)·e^{2(H(x) − I(x;z))}, applied
//!   coordinate-wise with each coordinate's marginal entropy and the total
//!   retained MI (a conservative relaxation of the scalar statement);
//! * classification: P_e ≥ (H(y) − I − 1)/ln|Y|, the weakened Fano form,
//!   clamped at zero so vacuous bounds are explicit rather than negative.

use crate::error::{Error, Result};
use crate::estimator::{rank_descending, MiReport};
use crate::oracle::{optimal_truncated_mse, sample_labeled, LabelRule, LinearWorld};
use crate::snapshot::format_sig17;
use crate::sum::{pairwise_mean, pairwise_sum};
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};

/// How a mask was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskOrigin {
    Threshold(f64),
    TopK(usize),
    Explicit,
}

/// Split of the factors into kept (major) and dropped (minor) sets.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMask {
    pub keep: Vec<bool>,
    pub origin: MaskOrigin,
}

impl FactorMask {
    pub fn num_kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

/// Selection rule for [`select_influential`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionRule {
    /// Keep factors with MI strictly above the threshold.
    Threshold(f64),
    /// Keep the k factors of highest MI.
    TopK(usize),
    /// Keep the top ⌈f·H⌉ factors.
    TopFraction(f64),
}

/// Indices sorted by MI descending; ties broken by ascending index.
pub fn rank_factors(mi: &[f64]) -> Vec<usize> {
    rank_descending(mi)
}

/// Builds a keep-mask from a selection rule.
pub fn select_influential(mi: &[f64], rule: SelectionRule) -> Result<FactorMask> {
    let h = mi.len();
    match rule {
        SelectionRule::Threshold(t) => {
            if !(t >= 0.0) {
                return Err(Error::Usage(format!("threshold must be >= 0, got {t}")));
            }
            Ok(FactorMask {
                keep: mi.iter().map(|&v| v > t).collect(),
                origin: MaskOrigin::Threshold(t),
            })
        }
        SelectionRule::TopK(k) => {
            if k < 1 || k > h {
                return Err(Error::Usage(format!(
                    "top-k must satisfy 1 <= k <= {h}, got {k}"
                )));
            }
            Ok(top_k_mask(mi, k))
        }
        SelectionRule::TopFraction(f) => {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Usage(format!("fraction must be in [0, 1], got {f}")));
            }
            let k = (f * h as f64).ceil() as usize;
            if k == 0 {
                return Ok(FactorMask {
                    keep: vec![false; h],
                    origin: MaskOrigin::TopK(0),
                });
            }
            Ok(top_k_mask(mi, k.min(h)))
        }
    }
}

fn top_k_mask(mi: &[f64], k: usize) -> FactorMask {
    let ranking = rank_descending(mi);
    let mut keep = vec![false; mi.len()];
    for &idx in ranking.iter().take(k) {
        keep[idx] = true;
    }
    FactorMask {
        keep,
        origin: MaskOrigin::TopK(k),
    }
}

/// Which inequality a [`BoundResult`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundKind {
    Mse,
    Fano,
}

/// A lower bound together with the inputs it was computed from.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundResult {
    pub kind: BoundKind,
    pub value: f64,
    /// H(x) for MSE bounds, H(y) for Fano bounds, in nats.
    pub entropy: f64,
    pub mi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<u32>,
}

/// MSE lower bound: (1/2πe)·e^{2(entropy_x − mi)}, in squared data units.
pub fn mse_lower_bound(entropy_x: f64, mi: f64) -> Result<BoundResult> {
    if !(mi >= 0.0) {
        return Err(Error::Usage(format!("mi must be >= 0, got {mi}")));
    }
    let value = (2.0 * (entropy_x - mi)).exp() / (2.0 * PI * E);
    Ok(BoundResult {
        kind: BoundKind::Mse,
        value,
        entropy: entropy_x,
        mi,
        num_classes: None,
    })
}

/// Weakened Fano error bound: max(0, (H(y) − mi − 1)/ln|Y|).
pub fn fano_bound(label_entropy: f64, num_classes: u32, mi: f64) -> Result<BoundResult> {
    if num_classes < 2 {
        return Err(Error::Usage(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    if !(mi >= 0.0) {
        return Err(Error::Usage(format!("mi must be >= 0, got {mi}")));
    }
    if !(label_entropy >= 0.0) {
        return Err(Error::Usage(format!(
            "label entropy must be >= 0, got {label_entropy}"
        )));
    }
    let value = ((label_entropy - mi - 1.0) / (num_classes as f64).ln()).max(0.0);
    Ok(BoundResult {
        kind: BoundKind::Fano,
        value,
        entropy: label_entropy,
        mi,
        num_classes: Some(num_classes),
    })
}

/// One row of a truncation or classification sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    /// Number of factors kept.
    pub k: usize,
    pub mi_retained_nats: f64,
    /// Measured MSE (truncation) or error rate (classification).
    pub measured: f64,
    pub bound: f64,
}

/// Serializes sweep rows to the CSV interchange form.
pub fn sweep_rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("fraction,k,mi_retained_nats,measured,bound\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            format_sig17(r.fraction),
            r.k,
            format_sig17(r.mi_retained_nats),
            format_sig17(r.measured),
            format_sig17(r.bound)
        ));
    }
    out
}

pub fn sweep_rows_to_json(rows: &[SweepRow]) -> String {
    let mut s = serde_json::to_string_pretty(rows).expect("sweep serialization");
    s.push('\n');
    s
}

fn retained_mi(mi: &[f64], mask: &FactorMask) -> f64 {
    let kept: Vec<f64> = mi
        .iter()
        .zip(&mask.keep)
        .filter_map(|(&v, &k)| k.then_some(v))
        .collect();
    pairwise_sum(&kept)
}

/// Reconstruction sweep: for each fraction, keep the top factors by MI,
/// measure the best-linear-decoder MSE, and compute the coordinate-wise sum
/// of the scalar MSE bound.
pub fn truncation_sweep(
    world: &LinearWorld,
    report: &MiReport,
    fractions: &[f64],
) -> Result<Vec<SweepRow>> {
    if report.factors.len() != world.latent_dim() {
        return Err(Error::Usage(format!(
            "report has {} factors but world has {}",
            report.factors.len(),
            world.latent_dim()
        )));
    }
    let mi = report.per_factor_mi();
    let mut rows = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let mask = select_influential(&mi, SelectionRule::TopFraction(f))?;
        let kept_mi = retained_mi(&mi, &mask);
        let measured = optimal_truncated_mse(world, &mask.keep)?;
        let bound_terms: Vec<f64> = (0..world.data_dim())
            .map(|i| {
                let var = world.data_cov()[(i, i)];
                let entropy = 0.5 * (2.0 * PI * E * var).ln();
                mse_lower_bound(entropy, kept_mi).map(|b| b.value)
            })
            .collect::<Result<_>>()?;
        rows.push(SweepRow {
            fraction: f,
            k: mask.num_kept(),
            mi_retained_nats: kept_mi,
            measured,
            bound: pairwise_sum(&bound_terms),
        });
    }
    Ok(rows)
}

/// Class-conditional Gaussian classifier on kept latent means with a shared
/// diagonal covariance. A stand-in for a learned predictor: deterministic,
/// seedable, and enough to exercise the Fano bound.
struct PlugInClassifier {
    priors: Vec<f64>,
    means: Vec<Vec<f64>>, // class × kept-dim
    inv_var: Vec<f64>,    // kept-dim, shared
}

impl PlugInClassifier {
    fn fit(
        features: &[f64],
        labels: &[usize],
        dims: &[usize],
        width: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let m = labels.len();
        let k = dims.len();
        let mut counts = vec![0usize; num_classes];
        for &l in labels {
            counts[l] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Evaluation(format!(
                "class {empty} has no training samples"
            )));
        }
        let mut means = vec![vec![0.0; k]; num_classes];
        for (i, &l) in labels.iter().enumerate() {
            for (j, &d) in dims.iter().enumerate() {
                means[l][j] += features[i * width + d];
            }
        }
        for (c, mean) in means.iter_mut().enumerate() {
            for v in mean.iter_mut() {
                *v /= counts[c] as f64;
            }
        }
        let mut pooled = vec![0.0; k];
        for (i, &l) in labels.iter().enumerate() {
            for (j, &d) in dims.iter().enumerate() {
                let r = features[i * width + d] - means[l][j];
                pooled[j] += r * r;
            }
        }
        let inv_var = pooled
            .iter()
            .map(|&v| 1.0 / (v / m as f64).max(1e-12))
            .collect();
        let priors = counts.iter().map(|&c| c as f64 / m as f64).collect();
        Ok(Self {
            priors,
            means,
            inv_var,
        })
    }

    fn predict(&self, features: &[f64], row: usize, dims: &[usize], width: usize) -> usize {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (c, mean) in self.means.iter().enumerate() {
            let mut score = self.priors[c].ln();
            for (j, &d) in dims.iter().enumerate() {
                let r = features[row * width + d] - mean[j];
                score -= 0.5 * r * r * self.inv_var[j];
            }
            if score > best_score {
                best_score = score;
                best = c;
            }
        }
        best
    }
}

/// Classification sweep: per fraction, train the plug-in classifier on kept
/// latent means, measure held-out error, and compute the Fano bound from the
/// empirical label entropy and retained MI.
pub fn classification_sweep(
    world: &LinearWorld,
    rule: LabelRule,
    report: &MiReport,
    fractions: &[f64],
    m_eval: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if report.factors.len() != world.latent_dim() {
        return Err(Error::Usage(format!(
            "report has {} factors but world has {}",
            report.factors.len(),
            world.latent_dim()
        )));
    }
    if m_eval == 0 {
        return Err(Error::Usage("m_eval must be >= 1".into()));
    }
    let h = world.latent_dim();
    let num_classes = rule.num_classes();
    let (train_x, train_y) = sample_labeled(world, m_eval, seed, rule)?;
    let (test_x, test_y) = sample_labeled(world, m_eval, seed ^ 0xa5a5_5a5a_dead_beef, rule)?;

    let mut class_counts = vec![0usize; num_classes];
    for &l in &train_y {
        class_counts[l] += 1;
    }
    let entropy_terms: Vec<f64> = class_counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / train_y.len() as f64;
            -p * p.ln()
        })
        .collect();
    let label_entropy = pairwise_sum(&entropy_terms);

    let mi = report.per_factor_mi();
    let mut rows = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let mask = select_influential(&mi, SelectionRule::TopFraction(f))?;
        let dims: Vec<usize> = (0..h).filter(|&j| mask.keep[j]).collect();
        let kept_mi = retained_mi(&mi, &mask);
        let errors: Vec<f64> = if dims.is_empty() {
            // No features: predict the majority class.
            let majority = class_counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(c, _)| c)
                .unwrap();
            test_y.iter().map(|&l| f64::from(l != majority)).collect()
        } else {
            let clf = PlugInClassifier::fit(&train_x, &train_y, &dims, h, num_classes)?;
            test_y
                .iter()
                .enumerate()
                .map(|(i, &l)| f64::from(clf.predict(&test_x, i, &dims, h) != l))
                .collect()
        };
        let error_rate = pairwise_mean(&errors);
        let bound = fano_bound(label_entropy, num_classes as u32, kept_mi)?.value;
        rows.push(SweepRow {
            fraction: f,
            k: dims.len(),
            mi_retained_nats: kept_mi,
            measured: error_rate,
            bound,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::analyze;
    use crate::oracle::{make_world, sample_snapshot, EncoderSpec};
    use approx::assert_abs_diff_eq;

    #[test]
    fn rank_examples() {
        assert_eq!(rank_factors(&[0.5, 2.0, 1.0]), vec![1, 2, 0]);
        assert_eq!(rank_factors(&[1.0, 1.0, 1.0]), vec![0, 1, 2]);
        assert_eq!(rank_factors(&[3.1, 0.8, 2.1]), vec![0, 2, 1]);
    }

    #[test]
    fn select_threshold_paper_values() {
        let mask =
            select_influential(&[3.1, 0.8, 2.1, 0.01], SelectionRule::Threshold(0.5)).unwrap();
        assert_eq!(mask.keep, vec![true, true, true, false]);
    }

    #[test]
    fn select_top_fraction_edges() {
        let mi = [0.5, 2.0, 1.0];
        let empty = select_influential(&mi, SelectionRule::TopFraction(0.0)).unwrap();
        assert_eq!(empty.num_kept(), 0);
        let all = select_influential(&mi, SelectionRule::TopFraction(1.0)).unwrap();
        assert_eq!(all.num_kept(), 3);
        let top2 = select_influential(&mi, SelectionRule::TopK(2)).unwrap();
        assert_eq!(top2.keep, vec![false, true, true]);
    }

    #[test]
    fn select_threshold_zero_keeps_positive_mi() {
        let mask =
            select_influential(&[0.0, 0.3, 0.0, 1.0], SelectionRule::Threshold(0.0)).unwrap();
        assert_eq!(mask.keep, vec![false, true, false, true]);
    }

    #[test]
    fn mse_bound_examples() {
        let entropy = 0.5 * (2.0 * PI * E).ln();
        let tight = mse_lower_bound(entropy, 0.5 * std::f64::consts::LN_2).unwrap();
        assert_abs_diff_eq!(tight.value, 0.5, epsilon = 1e-12);
        let vacuous = mse_lower_bound(entropy, 0.0).unwrap();
        assert_abs_diff_eq!(vacuous.value, 1.0, epsilon = 1e-12);
        let tiny = mse_lower_bound(entropy, 50.0).unwrap();
        assert!(tiny.value < 1e-40);
        assert!(mse_lower_bound(entropy, -0.1).is_err());
    }

    #[test]
    fn fano_bound_examples() {
        let h4 = 4.0f64.ln();
        let b = fano_bound(h4, 4, 0.0).unwrap();
        assert_abs_diff_eq!(b.value, (h4 - 1.0) / h4, epsilon = 1e-12);
        assert_abs_diff_eq!(b.value, 0.27865, epsilon = 5e-6);
        assert_eq!(fano_bound(h4, 4, h4).unwrap().value, 0.0);
        // ln 2 < 1, so the weakened form is vacuous for 2 classes.
        assert_eq!(fano_bound(2.0f64.ln(), 2, 0.0).unwrap().value, 0.0);
        assert!(fano_bound(h4, 1, 0.0).is_err());
    }

    fn diagonal_world() -> crate::oracle::LinearWorld {
        make_world(
            4,
            4,
            4,
            &[4.0, 3.0, 2.0, 1.0],
            0.0,
            &EncoderSpec::diagonal(),
            7,
        )
        .unwrap()
    }

    #[test]
    fn truncation_sweep_diagonal_world() {
        let w = diagonal_world();
        let snap = sample_snapshot(&w, 20_000, 3).unwrap();
        let report = analyze(&snap, 0.5, false, false).unwrap();
        let rows = truncation_sweep(&w, &report, &[1.0, 0.5, 0.25, 0.0]).unwrap();
        assert_abs_diff_eq!(rows[0].measured, 2.71667, epsilon = 1e-5);
        assert_abs_diff_eq!(rows[3].measured, 10.0, epsilon = 1e-12);
        assert_eq!(rows[3].mi_retained_nats, 0.0);
        // MSE strictly increases as the fraction shrinks.
        for pair in rows.windows(2) {
            assert!(pair[1].measured > pair[0].measured);
            assert!(pair[1].mi_retained_nats <= pair[0].mi_retained_nats);
        }
        // Every row satisfies the bound.
        for r in &rows {
            assert!(r.measured >= r.bound - 1e-9, "row {r:?}");
        }
    }

    #[test]
    fn classification_sweep_chance_and_skill() {
        let w = make_world(
            4,
            4,
            4,
            &[4.0, 3.0, 2.0, 1.0],
            0.01,
            &EncoderSpec::diagonal(),
            7,
        )
        .unwrap();
        let snap = sample_snapshot(&w, 20_000, 3).unwrap();
        let report = analyze(&snap, 0.5, false, false).unwrap();
        let rows =
            classification_sweep(&w, LabelRule::Quadrant, &report, &[1.0, 0.0], 5_000, 17).unwrap();
        // Full mask: far below chance; empty mask: chance level.
        assert!(rows[0].measured < 0.40);
        assert!((rows[1].measured - 0.75).abs() < 0.02);
        for r in &rows {
            assert!(r.measured >= r.bound - 1e-9, "row {r:?}");
        }
    }

    #[test]
    fn sweep_csv_shape() {
        let rows = vec![SweepRow {
            fraction: 1.0,
            k: 4,
            mi_retained_nats: 2.0,
            measured: 3.0,
            bound: 0.5,
        }];
        let csv = sweep_rows_to_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "fraction,k,mi_retained_nats,measured,bound"
        );
        assert_eq!(lines.next().unwrap().split(',').count(), 5);
    }
}
