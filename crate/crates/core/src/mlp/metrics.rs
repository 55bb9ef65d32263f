use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::LabeledExample;

use super::model::MlpModel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub total: usize,
    pub true_positives: usize,
    pub true_negatives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub accuracy: f64,
    pub mse: f64,
    /// `None` when the denominator is zero.
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Negative iff the output strictly exceeds the threshold.
pub fn classify(model: &MlpModel, features: &[f64], threshold: f64) -> Result<bool> {
    Ok(model.forward(features)? > threshold)
}

pub fn scores(model: &MlpModel, examples: &[&LabeledExample]) -> Result<Vec<f64>> {
    let inputs: Vec<&[f64]> = examples.iter().map(|e| e.features.as_slice()).collect();
    model.predict(&inputs)
}

pub fn labels(examples: &[&LabeledExample]) -> Vec<bool> {
    examples.iter().map(|e| e.label).collect()
}

pub fn evaluate(model: &MlpModel, examples: &[&LabeledExample], threshold: f64) -> Result<EvalMetrics> {
    evaluate_scores(&scores(model, examples)?, &labels(examples), threshold)
}

pub fn evaluate_scores(scores: &[f64], labels: &[bool], threshold: f64) -> Result<EvalMetrics> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "cannot evaluate {} scores against {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (mut tp, mut tn, mut fp, mut fneg) = (0, 0, 0, 0);
    let mut sq = 0.0;
    for (s, &l) in scores.iter().zip(labels) {
        let t = if l { 1.0 } else { 0.0 };
        sq += (s - t) * (s - t);
        match (*s > threshold, l) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
        }
    }
    let total = scores.len();
    Ok(EvalMetrics {
        total,
        true_positives: tp,
        true_negatives: tn,
        false_positives: fp,
        false_negatives: fneg,
        accuracy: (tp + tn) as f64 / total as f64,
        mse: sq / total as f64,
        recall: ratio(tp, tp + fneg),
        specificity: ratio(tn, tn + fp),
        precision: ratio(tp, tp + fp),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: Option<f64>,
}

/// `n` evenly spaced thresholds from 0 to 1 inclusive.
pub fn threshold_grid(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn rates(scores: &[f64], labels: &[bool], threshold: f64) -> (usize, usize, usize, usize) {
    let (mut tp, mut fp) = (0, 0);
    for (s, &l) in scores.iter().zip(labels) {
        if *s > threshold {
            if l {
                tp += 1
            } else {
                fp += 1
            }
        }
    }
    let pos = labels.iter().filter(|l| **l).count();
    (tp, fp, pos, labels.len() - pos)
}

pub fn roc_curve(scores: &[f64], labels: &[bool], thresholds: &[f64]) -> Vec<RocPoint> {
    thresholds
        .iter()
        .map(|&t| {
            let (tp, fp, pos, neg) = rates(scores, labels, t);
            RocPoint {
                threshold: t,
                fpr: ratio(fp, neg).unwrap_or(0.0),
                tpr: ratio(tp, pos).unwrap_or(0.0),
            }
        })
        .collect()
}

pub fn precision_recall_curve(scores: &[f64], labels: &[bool], thresholds: &[f64]) -> Vec<PrPoint> {
    thresholds
        .iter()
        .map(|&t| {
            let (tp, fp, pos, _) = rates(scores, labels, t);
            PrPoint {
                threshold: t,
                recall: ratio(tp, pos).unwrap_or(0.0),
                precision: ratio(tp, tp + fp),
            }
        })
        .collect()
}

/// Thresholds at every distinct score plus one below all scores, so the
/// curves are exact staircases.
pub fn exact_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = scores.to_vec();
    t.sort_by(|a, b| a.total_cmp(b));
    t.dedup();
    let below = t.first().map(|v| v - 1.0).unwrap_or(0.0);
    t.insert(0, below);
    t
}

/// Trapezoid area under the ROC points after sorting by false positive rate.
pub fn roc_auc(points: &[RocPoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

/// Exact ROC AUC from the sorted-score staircase.
pub fn auc_exact(scores: &[f64], labels: &[bool]) -> f64 {
    roc_auc(&roc_curve(scores, labels, &exact_thresholds(scores)))
}

/// Largest precision among thresholds reaching at least `recall`.
pub fn precision_at_recall(scores: &[f64], labels: &[bool], recall: f64) -> Option<f64> {
    precision_recall_curve(scores, labels, &exact_thresholds(scores))
        .into_iter()
        .filter(|p| p.recall >= recall)
        .filter_map(|p| p.precision)
        .max_by(|a, b| a.total_cmp(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn strict_threshold_rule() {
        let mut one = MlpModel::zeros(&[1, 1]).unwrap();
        one.layers[0].biases[0] = (0.7f64 / 0.3).ln();
        assert!(classify(&one, &[0.0], 0.5).unwrap());
        assert!(!classify(&one, &[0.0], 0.9).unwrap());
        one.layers[0].biases[0] = 0.0;
        assert!(!classify(&one, &[0.0], 0.5).unwrap());
    }

    #[test]
    fn confusion_by_hand() {
        let labels = [true, true, true, true, false, false, false, false, false, true];
        let scores = [0.9, 0.8, 0.7, 0.6, 0.1, 0.2, 0.3, 0.95, 0.99, 0.4];
        let m = evaluate_scores(&scores, &labels, 0.5).unwrap();
        assert_eq!((m.true_positives, m.true_negatives, m.false_positives, m.false_negatives), (4, 3, 2, 1));
        assert!((m.accuracy - 0.7).abs() < 1e-15);
        assert!((m.recall.unwrap() - 0.8).abs() < 1e-15);
        assert!((m.specificity.unwrap() - 0.6).abs() < 1e-15);
        assert!((m.precision.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_classifiers() {
        let labels = [true, false, true, false];
        let perfect = evaluate_scores(&[0.9, 0.1, 0.8, 0.2], &labels, 0.5).unwrap();
        assert_eq!((perfect.accuracy, perfect.false_positives, perfect.false_negatives), (1.0, 0, 0));
        let all_pos = evaluate_scores(&[0.9; 4], &labels, 0.5).unwrap();
        assert_eq!((all_pos.recall, all_pos.specificity), (Some(1.0), Some(0.0)));
        let none_pos = evaluate_scores(&[0.1; 4], &labels, 0.5).unwrap();
        assert_eq!(none_pos.precision, None);
        assert!(evaluate_scores(&[], &[], 0.5).is_err());
    }

    #[test]
    fn four_point_curves_by_brute_force() {
        let scores = [0.2, 0.4, 0.6, 0.8];
        let labels = [false, true, false, true];
        let roc = roc_curve(&scores, &labels, &exact_thresholds(&scores));
        let pts: Vec<(f64, f64)> = roc.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(pts, vec![(1.0, 1.0), (0.5, 1.0), (0.5, 0.5), (0.0, 0.5), (0.0, 0.0)]);
        assert!((roc_auc(&roc) - 0.75).abs() < 1e-15);
        let pr = precision_recall_curve(&scores, &labels, &exact_thresholds(&scores));
        let pts: Vec<(f64, Option<f64>)> = pr.iter().map(|p| (p.recall, p.precision)).collect();
        assert_eq!(pts, vec![(1.0, Some(0.5)), (1.0, Some(2.0 / 3.0)), (0.5, Some(0.5)), (0.5, Some(1.0)), (0.0, None)]);
    }

    #[test]
    fn grid_curve_endpoints_and_perfect_auc() {
        let scores = [0.05, 0.3, 0.7, 0.97];
        let labels = [false, false, true, true];
        let roc = roc_curve(&scores, &labels, &threshold_grid(101));
        assert_eq!((roc[0].fpr, roc[0].tpr), (1.0, 1.0));
        assert_eq!((roc[100].fpr, roc[100].tpr), (0.0, 0.0));
        assert!(roc.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(roc_auc(&roc), 1.0);
        assert_eq!(auc_exact(&scores, &labels), 1.0);
        let pr = precision_recall_curve(&scores, &labels, &threshold_grid(101));
        // Above the highest negative score the perfect classifier has no false positives.
        let above: Vec<_> = pr.iter().filter(|p| p.threshold >= 0.3 && p.recall > 0.0).collect();
        assert!(above.iter().all(|p| p.precision == Some(1.0)));
        assert!(above.iter().any(|p| p.recall == 1.0));
        for w in roc.windows(2) {
            assert!(w[1].fpr <= w[0].fpr && w[1].tpr <= w[0].tpr);
        }
    }

    #[test]
    fn random_scores_have_no_skill() {
        let mut rng = stream(5, 0, 0);
        let labels: Vec<bool> = (0..10_000).map(|i| i % 2 == 0).collect();
        let scores: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        assert!((auc_exact(&scores, &labels) - 0.5).abs() < 0.05);
        assert!((roc_auc(&roc_curve(&scores, &labels, &threshold_grid(101))) - 0.5).abs() < 0.05);
        for p in precision_recall_curve(&scores, &labels, &threshold_grid(101)) {
            if p.recall > 0.05 {
                assert!((p.precision.unwrap() - 0.5).abs() < 0.05);
            }
        }
    }

    #[test]
    fn threshold_sweep_consistency_and_order_invariance() {
        let mut rng = stream(6, 0, 0);
        let labels: Vec<bool> = (0..500).map(|_| rng.random::<bool>()).collect();
        let scores: Vec<f64> = labels.iter().map(|l| if *l { 0.3 } else { 0.0 } + 0.7 * rng.random::<f64>()).collect();
        let grid = threshold_grid(101);
        let roc = roc_curve(&scores, &labels, &grid);
        for (i, t) in grid.iter().enumerate().step_by(10) {
            let m = evaluate_scores(&scores, &labels, *t).unwrap();
            assert_eq!(m.recall.unwrap(), roc[i].tpr);
            assert_eq!(m.false_positives as f64 / (m.false_positives + m.true_negatives) as f64, roc[i].fpr);
        }
        let mut idx: Vec<usize> = (0..500).collect();
        idx.reverse();
        let s2: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l2: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        let (a, b) = (evaluate_scores(&s2, &l2, 0.5).unwrap(), evaluate_scores(&scores, &labels, 0.5).unwrap());
        assert_eq!((a.true_positives, a.true_negatives, a.accuracy, a.precision), (b.true_positives, b.true_negatives, b.accuracy, b.precision));
        assert!((a.mse - b.mse).abs() < 1e-15);
        assert_eq!(auc_exact(&s2, &l2), auc_exact(&scores, &labels));
    }
}
