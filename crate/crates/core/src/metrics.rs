//! Evaluation metrics for incremental classifiers: accuracy, mean NLL,
//! one-vs-rest macro ROC AUC, and mean successive-prediction KL.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::loss::{kl_divergence, LOG_CLAMP};
use crate::scalar::Scalar;

/// Per-prefix predicted distributions for one trajectory plus its label.
#[derive(Debug, Clone)]
pub struct EvalRecord<T: Scalar> {
    preds: Vec<Array1<T>>,
    label: usize,
}

impl<T: Scalar> EvalRecord<T> {
    pub fn new(preds: Vec<Array1<T>>, label: usize) -> Result<Self> {
        if preds.is_empty() {
            return Err(Error::InvalidInput("record must have at least one prediction".into()));
        }
        let k = preds[0].len();
        if label == 0 || label > k {
            return Err(Error::InvalidInput(format!("label {label} outside [1..{k}]")));
        }
        let tol = T::from_f64_lossy(1e-9);
        for (t, p) in preds.iter().enumerate() {
            if p.len() != k {
                return Err(Error::Dimension(format!(
                    "prediction {} has {} classes, expected {k}",
                    t + 1,
                    p.len()
                )));
            }
            let sum: T = p.iter().copied().sum();
            if (sum - T::one()).abs() > tol || p.iter().any(|&v| v < T::zero()) {
                return Err(Error::InvalidInput(format!(
                    "prediction {} is not a probability vector",
                    t + 1
                )));
            }
        }
        Ok(Self { preds, label })
    }

    pub fn preds(&self) -> &[Array1<T>] {
        &self.preds
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn num_classes(&self) -> usize {
        self.preds[0].len()
    }

    /// Prediction at a requested prefix length; trajectories shorter than the
    /// request are evaluated at their last available prefix. `None` means the
    /// full sequence.
    pub fn pred_at(&self, prefix_len: Option<usize>) -> &Array1<T> {
        match prefix_len {
            None => &self.preds[self.preds.len() - 1],
            Some(p) => {
                let idx = p.clamp(1, self.preds.len());
                &self.preds[idx - 1]
            }
        }
    }
}

fn require_nonempty<T: Scalar>(records: &[EvalRecord<T>]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidInput("records must be nonempty".into()));
    }
    Ok(())
}

/// Index (1-based) of the largest entry; ties break toward the lowest class.
fn argmax<T: Scalar>(p: &Array1<T>) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best + 1
}

/// Fraction of records whose argmax prediction at the given prefix matches
/// the label.
pub fn accuracy<T: Scalar>(records: &[EvalRecord<T>], prefix_len: Option<usize>) -> Result<T> {
    require_nonempty(records)?;
    let hits = records
        .iter()
        .filter(|r| argmax(r.pred_at(prefix_len)) == r.label())
        .count();
    Ok(T::from_usize_lossy(hits) / T::from_usize_lossy(records.len()))
}

/// Empirical mean of `-log p(y_true)` at the given prefix.
pub fn mean_nll<T: Scalar>(records: &[EvalRecord<T>], prefix_len: Option<usize>) -> Result<T> {
    require_nonempty(records)?;
    let clamp_floor = T::from_f64_lossy(LOG_CLAMP).max(T::min_positive_value());
    let total: T = records
        .iter()
        .map(|r| -r.pred_at(prefix_len)[r.label() - 1].max(clamp_floor).ln())
        .sum();
    Ok(total / T::from_usize_lossy(records.len()))
}

/// One-vs-rest macro ROC AUC outcome.
#[derive(Debug, Clone)]
pub struct RocAucReport<T: Scalar> {
    pub macro_auc: T,
    /// Per-class AUC; `None` for classes lacking both positives and
    /// negatives (skipped from the macro average).
    pub per_class: Vec<Option<T>>,
    /// 1-based indices of the skipped classes.
    pub skipped: Vec<usize>,
}

/// One-vs-rest macro-averaged ROC AUC at the given prefix, with ties counted
/// half. The score for class `k` is the probability assigned to `k`.
pub fn roc_auc_ovr_macro<T: Scalar>(
    records: &[EvalRecord<T>],
    prefix_len: Option<usize>,
) -> Result<RocAucReport<T>> {
    require_nonempty(records)?;
    let k = records[0].num_classes();
    let mut per_class = Vec::with_capacity(k);
    let mut skipped = Vec::new();
    let mut macro_sum = T::zero();
    let mut included = 0usize;
    for class in 1..=k {
        let mut scored: Vec<(T, bool)> = records
            .iter()
            .map(|r| (r.pred_at(prefix_len)[class - 1], r.label() == class))
            .collect();
        let positives = scored.iter().filter(|(_, pos)| *pos).count();
        let negatives = scored.len() - positives;
        if positives == 0 || negatives == 0 {
            per_class.push(None);
            skipped.push(class);
            continue;
        }
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
        // Pairwise ranking probability via tie groups: a positive earns full
        // credit for each negative strictly below it and half credit for each
        // negative sharing its score. Exact counts keep this bit-identical to
        // the all-pairs computation.
        let mut numerator = T::zero();
        let half = T::from_f64_lossy(0.5);
        let mut neg_below = 0usize;
        let mut i = 0;
        while i < scored.len() {
            let mut j = i;
            let mut pos_in_group = 0usize;
            let mut neg_in_group = 0usize;
            while j < scored.len() && scored[j].0 == scored[i].0 {
                if scored[j].1 {
                    pos_in_group += 1;
                } else {
                    neg_in_group += 1;
                }
                j += 1;
            }
            numerator += T::from_usize_lossy(pos_in_group * neg_below)
                + half * T::from_usize_lossy(pos_in_group * neg_in_group);
            neg_below += neg_in_group;
            i = j;
        }
        let auc = numerator / T::from_usize_lossy(positives * negatives);
        per_class.push(Some(auc));
        macro_sum += auc;
        included += 1;
    }
    if included == 0 {
        return Err(Error::UndefinedMetric(
            "no class has both positive and negative examples".into(),
        ));
    }
    Ok(RocAucReport {
        macro_auc: macro_sum / T::from_usize_lossy(included),
        per_class,
        skipped,
    })
}

/// Average `KL[p_{t+1} ‖ p_t]` over all successive prefix pairs of all
/// records. Records of length 1 contribute no pairs; with no pairs at all
/// the mean is 0.
pub fn mean_successive_kl<T: Scalar>(records: &[EvalRecord<T>]) -> Result<T> {
    require_nonempty(records)?;
    let mut total = T::zero();
    let mut pairs = 0usize;
    for r in records {
        for w in r.preds().windows(2) {
            total += kl_divergence(&w[1], &w[0]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        Ok(T::zero())
    } else {
        Ok(total / T::from_usize_lossy(pairs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    const LN_2: f64 = std::f64::consts::LN_2;

    fn rec(preds: Vec<Array1<f64>>, label: usize) -> EvalRecord<f64> {
        EvalRecord::new(preds, label).unwrap()
    }

    #[test]
    fn accuracy_perfect_and_tied() {
        let perfect = vec![
            rec(vec![arr1(&[1.0, 0.0])], 1),
            rec(vec![arr1(&[0.0, 1.0])], 2),
        ];
        assert_eq!(accuracy(&perfect, None).unwrap(), 1.0);

        // Uniform predictions tie-break to class 1; labels are all class 2.
        let tied = vec![
            rec(vec![arr1(&[0.5, 0.5])], 2),
            rec(vec![arr1(&[0.5, 0.5])], 2),
        ];
        assert_eq!(accuracy(&tied, None).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_hand_counted_mix() {
        // Hand enumeration: records 1 and 3 correct, 2 and 4 wrong.
        let records = vec![
            rec(vec![arr1(&[0.9, 0.1])], 1),
            rec(vec![arr1(&[0.9, 0.1])], 2),
            rec(vec![arr1(&[0.2, 0.8])], 2),
            rec(vec![arr1(&[0.6, 0.4])], 2),
        ];
        assert_eq!(accuracy(&records, None).unwrap(), 0.5);
    }

    #[test]
    fn accuracy_short_trajectory_uses_last_prefix() {
        let records = vec![rec(vec![arr1(&[0.1, 0.9])], 2)];
        assert_eq!(accuracy(&records, Some(5)).unwrap(), 1.0);
    }

    #[test]
    fn nll_uniform_is_ln_k() {
        let records = vec![rec(vec![arr1(&[0.25; 4])], 3)];
        assert!((mean_nll(&records, None).unwrap() - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nll_perfect_predictor_is_zero() {
        let records = vec![rec(vec![arr1(&[1.0, 0.0])], 1)];
        assert!(mean_nll(&records, None).unwrap() <= 1e-10);
    }

    #[test]
    fn nll_hand_computed_mean() {
        // Calculator oracle: (-ln 0.8 - ln 0.5 - ln 0.1) / 3.
        let records = vec![
            rec(vec![arr1(&[0.8, 0.2])], 1),
            rec(vec![arr1(&[0.5, 0.5])], 2),
            rec(vec![arr1(&[0.1, 0.9])], 1),
        ];
        let expected = -(0.8f64.ln() + 0.5f64.ln() + 0.1f64.ln()) / 3.0;
        assert!((mean_nll(&records, None).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn auc_perfect_separation() {
        let records = vec![
            rec(vec![arr1(&[0.9, 0.1])], 1),
            rec(vec![arr1(&[0.2, 0.8])], 2),
            rec(vec![arr1(&[0.8, 0.2])], 1),
        ];
        assert_eq!(roc_auc_ovr_macro(&records, None).unwrap().macro_auc, 1.0);
    }

    #[test]
    fn auc_all_ties_is_half() {
        let records = vec![
            rec(vec![arr1(&[0.5, 0.5])], 1),
            rec(vec![arr1(&[0.5, 0.5])], 2),
        ];
        assert_eq!(roc_auc_ovr_macro(&records, None).unwrap().macro_auc, 0.5);
    }

    #[test]
    fn auc_mixed_ranking_hand_value() {
        // K=2, class-1 scores (0.9, 0.8, 0.3) with labels (1, 2, 1):
        // brute force over positive-negative pairs gives 0.5 per class.
        let records = vec![
            rec(vec![arr1(&[0.9, 0.1])], 1),
            rec(vec![arr1(&[0.8, 0.2])], 2),
            rec(vec![arr1(&[0.3, 0.7])], 1),
        ];
        let report = roc_auc_ovr_macro(&records, None).unwrap();
        assert_eq!(report.per_class[0], Some(0.5));
        assert_eq!(report.per_class[1], Some(0.5));
        assert_eq!(report.macro_auc, 0.5);
    }

    #[test]
    fn auc_skips_unrepresented_classes() {
        let records = vec![
            rec(vec![arr1(&[0.7, 0.2, 0.1])], 1),
            rec(vec![arr1(&[0.1, 0.8, 0.1])], 2),
        ];
        let report = roc_auc_ovr_macro(&records, None).unwrap();
        assert_eq!(report.skipped, vec![3]);
        assert_eq!(report.per_class[2], None);
    }

    #[test]
    fn auc_undefined_with_single_class() {
        let records = vec![rec(vec![arr1(&[0.7, 0.3])], 1)];
        assert!(matches!(
            roc_auc_ovr_macro(&records, None),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn successive_kl_examples() {
        let constant = vec![rec(vec![arr1(&[0.4, 0.6]), arr1(&[0.4, 0.6])], 1)];
        assert_eq!(mean_successive_kl(&constant).unwrap(), 0.0);

        let degenerate = vec![rec(vec![arr1(&[0.5, 0.5]), arr1(&[1.0, 0.0])], 1)];
        assert!((mean_successive_kl(&degenerate).unwrap() - LN_2).abs() < 1e-12);

        // Two-record hand mean: first contributes KL[(1,0)||(0.5,0.5)] = ln 2,
        // second contributes 0; three pairs total.
        let records = vec![
            rec(vec![arr1(&[0.5, 0.5]), arr1(&[1.0, 0.0])], 1),
            rec(vec![arr1(&[0.3, 0.7]), arr1(&[0.3, 0.7]), arr1(&[0.3, 0.7])], 2),
        ];
        let expected = LN_2 / 3.0;
        assert!((mean_successive_kl(&records).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn metrics_invariant_to_record_order() {
        let a = vec![
            rec(vec![arr1(&[0.9, 0.1])], 1),
            rec(vec![arr1(&[0.8, 0.2])], 2),
            rec(vec![arr1(&[0.3, 0.7])], 1),
        ];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(accuracy(&a, None).unwrap(), accuracy(&b, None).unwrap());
        assert_eq!(mean_nll(&a, None).unwrap(), mean_nll(&b, None).unwrap());
        assert_eq!(
            roc_auc_ovr_macro(&a, None).unwrap().macro_auc,
            roc_auc_ovr_macro(&b, None).unwrap().macro_auc
        );
    }
}
