//! Bag- and instance-level evaluation, attention concentration, and
//! pseudo-bag mislabel counting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pseudobag::PseudoBagAssignment;
use crate::scalar::Scalar;
use crate::shapley::argmax;

/// Bag-level evaluation. `auc` is the one-vs-rest macro average over the
/// classes that have both positive and negative samples; classes without
/// are listed in `auc_undefined_classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BagEval {
    pub acc: f64,
    pub auc: Option<f64>,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<usize>>,
    pub auc_undefined_classes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceEval {
    pub acc: f64,
    pub auc: Option<f64>,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub threshold: f64,
}

/// Mann–Whitney AUC with half credit for ties. `None` when either class is
/// absent.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average 1-based ranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if positive[k] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q))
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

pub fn bag_metrics<T: Scalar>(probs: &[Vec<T>], labels: &[usize]) -> Result<BagEval> {
    if probs.is_empty() {
        return Err(Error::EmptyDataset("no predictions to evaluate".into()));
    }
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let classes = probs[0].len();
    if probs.iter().any(|p| p.len() != classes) {
        return Err(Error::Shape("ragged probability rows".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label: l, classes });
    }

    let mut confusion = vec![vec![0usize; classes]; classes];
    for (p, &y) in probs.iter().zip(labels) {
        confusion[y][argmax(p)] += 1;
    }
    let total = labels.len();
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();

    let mut f1_sum = 0.0;
    let mut aucs = Vec::new();
    let mut undefined = Vec::new();
    for c in 0..classes {
        let tp = confusion[c][c];
        let fn_: usize = confusion[c].iter().sum::<usize>() - tp;
        let fp: usize = (0..classes).map(|r| confusion[r][c]).sum::<usize>() - tp;
        f1_sum += f1(tp, fp, fn_);

        let scores: Vec<f64> = probs.iter().map(|p| p[c].as_f64()).collect();
        let positive: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        match roc_auc(&scores, &positive) {
            Some(a) => aucs.push(a),
            None => undefined.push(c),
        }
    }
    Ok(BagEval {
        acc: correct as f64 / total as f64,
        auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
        macro_f1: f1_sum / classes as f64,
        confusion,
        auc_undefined_classes: undefined,
    })
}

/// Binary instance metrics; an instance is predicted positive when its score
/// is strictly above `threshold`. Undefined ratios are reported as 0.
pub fn instance_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Result<InstanceEval> {
    if scores.is_empty() {
        return Err(Error::EmptyDataset("no instances to evaluate".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s > threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(InstanceEval {
        acc: ratio(tp + tn, scores.len()),
        auc: roc_auc(scores, labels),
        f1,
        precision,
        recall,
        threshold,
    })
}

/// Sum of the `k` largest attention weights (`k` capped at `n`).
pub fn attention_mass<T: Scalar>(attention: &[T], k: usize) -> T {
    let mut sorted = attention.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sorted.into_iter().take(k).sum()
}

/// Number of pseudo bags whose inherited label is wrong, and that count as
/// a fraction of all pseudo bags. A pseudo bag of a positive parent is wrong
/// when it holds no positive instance; negative parents never contribute.
pub fn mislabel_count(
    assignments: &[PseudoBagAssignment],
    instance_labels: &[&[u8]],
) -> Result<(usize, f64)> {
    if assignments.len() != instance_labels.len() {
        return Err(Error::Shape(format!(
            "{} assignments for {} label vectors",
            assignments.len(),
            instance_labels.len()
        )));
    }
    let mut wrong = 0;
    let mut total = 0;
    for (a, labels) in assignments.iter().zip(instance_labels) {
        total += a.groups.len();
        if a.label == 0 {
            continue;
        }
        for g in &a.groups {
            let mut any = false;
            for &j in g {
                any |= *labels.get(j).ok_or_else(|| {
                    Error::Shape(format!("instance {j} has no label in bag {}", a.bag_id))
                })? == 1;
            }
            if !any {
                wrong += 1;
            }
        }
    }
    let frac = if total == 0 {
        0.0
    } else {
        wrong as f64 / total as f64
    };
    Ok((wrong, frac))
}
