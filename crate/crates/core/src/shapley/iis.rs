use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::exact::{exact_shapley, CoalitionValueFn};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IisMethod {
    Attention,
    ShapleyExact,
    ShapleyAccel,
}

/// Which class the value function scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetClass {
    BagLabel,
    Predicted,
    Explicit(usize),
}

impl TargetClass {
    pub fn resolve<T: Scalar>(self, bag_label: usize, probs: &[T]) -> usize {
        match self {
            TargetClass::BagLabel => bag_label,
            TargetClass::Explicit(c) => c,
            TargetClass::Predicted => argmax(probs),
        }
    }
}

pub(crate) fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IisConfig {
    /// High-attention block size per pseudo bag (`|S^h| = mu·M`).
    pub mu: usize,
    /// Coalitions sampled from the low-attention block.
    pub tau: usize,
    /// Pseudo-bag count `M` the ranking is for.
    pub pseudo_bags: usize,
    pub seed: u64,
    pub target: TargetClass,
}

impl Default for IisConfig {
    fn default() -> Self {
        Self {
            mu: 10,
            tau: 3,
            pseudo_bags: 1,
            seed: 0,
            target: TargetClass::BagLabel,
        }
    }
}

impl IisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu == 0 || self.tau == 0 || self.pseudo_bags == 0 {
            return Err(Error::InvalidArgument(format!(
                "mu, tau and pseudo-bag count must be >= 1 (got {}, {}, {})",
                self.mu, self.tau, self.pseudo_bags
            )));
        }
        Ok(())
    }

    pub fn high_block_size(&self, n: usize) -> usize {
        self.mu.saturating_mul(self.pseudo_bags).min(n)
    }
}

/// Per-instance importance with the derived descending ranking.
///
/// `ranking[0..high_count]` is the re-scored high block, the rest keeps
/// attention order. For accelerated Shapley the low block's `scores` are
/// negative offsets strictly below `min(0, high scores)` that preserve the
/// attention order, so `scores` and `ranking` always agree.
#[derive(Clone, Debug, PartialEq)]
pub struct IisVector<T> {
    pub scores: Vec<T>,
    pub method: IisMethod,
    pub ranking: Vec<usize>,
    pub class: Option<usize>,
    pub high_count: usize,
}

impl<T: Scalar> IisVector<T> {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Instances in the high block, in rank order.
    pub fn high_block(&self) -> &[usize] {
        &self.ranking[..self.high_count]
    }
}

/// Indices sorted by descending score, ties by ascending index.
pub fn rank_descending<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

pub fn attention_iis<T: Scalar>(attention: &[T]) -> IisVector<T> {
    IisVector {
        scores: attention.to_vec(),
        method: IisMethod::Attention,
        ranking: rank_descending(attention),
        class: None,
        high_count: attention.len(),
    }
}

/// Exact Shapley values of every instance for the value function's target
/// class, ranked.
pub fn exact_iis<T: Scalar>(value_fn: &mut CoalitionValueFn<'_, T>) -> Result<IisVector<T>> {
    let phi = exact_shapley(value_fn)?;
    Ok(IisVector {
        ranking: rank_descending(&phi),
        high_count: phi.len(),
        scores: phi,
        method: IisMethod::ShapleyExact,
        class: Some(value_fn.target()),
    })
}

/// Draws `tau` coalitions from `low`: size uniform on `0..=|low|`, then a
/// uniform subset of that size. Each coalition is returned sorted.
fn draw_coalitions<R: Rng + ?Sized>(low: &[usize], tau: usize, rng: &mut R) -> Vec<Vec<usize>> {
    (0..tau)
        .map(|_| {
            let size = rng.gen_range(0..=low.len());
            let mut c: Vec<usize> = sample(rng, low.len(), size)
                .into_iter()
                .map(|i| low[i])
                .collect();
            c.sort_unstable();
            c
        })
        .collect()
}

fn insert_sorted(coalition: &[usize], x: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(coalition.len() + 1);
    let pos = coalition.partition_point(|&c| c < x);
    out.extend_from_slice(&coalition[..pos]);
    out.push(x);
    out.extend_from_slice(&coalition[pos..]);
    out
}

/// Class an instance-level evaluation looks for evidence of: the positive
/// class of a binary model, otherwise the most probable non-background
/// class. Class 0 is background.
pub fn evidence_class<T: Scalar>(probs: &[T]) -> usize {
    if probs.len() <= 2 {
        1
    } else {
        1 + argmax(&probs[1..])
    }
}

/// Attention-accelerated Shapley IIS for the value function's target class.
///
/// The top `min(mu·M, n)` instances by attention form `S^h` and are scored
/// by their mean marginal contribution to `tau` coalitions sampled from the
/// remainder `S^l`; `S^l` keeps attention order behind them. The coalitions
/// are shared across `S^h`, so the model is called at most
/// `tau·|S^h| + tau` times.
pub fn accelerated_iis<T: Scalar, R: Rng + ?Sized>(
    value_fn: &mut CoalitionValueFn<'_, T>,
    attention: &[T],
    config: &IisConfig,
    rng: &mut R,
) -> Result<IisVector<T>> {
    let class = value_fn.target();
    let mut out = classwise_iis(value_fn, attention, config, &[class], rng)?;
    Ok(out.pop().expect("one class requested"))
}

/// [`accelerated_iis`] for several classes at once, sharing coalition draws
/// and model calls.
pub fn classwise_iis<T: Scalar, R: Rng + ?Sized>(
    value_fn: &mut CoalitionValueFn<'_, T>,
    attention: &[T],
    config: &IisConfig,
    classes: &[usize],
    rng: &mut R,
) -> Result<Vec<IisVector<T>>> {
    config.validate()?;
    let n = value_fn.embedded().len();
    if attention.len() != n {
        return Err(Error::Shape(format!(
            "attention has {} entries for a bag of {n}",
            attention.len()
        )));
    }
    let n_classes = value_fn.classes();
    if let Some(&c) = classes.iter().find(|&&c| c >= n_classes) {
        return Err(Error::LabelOutOfRange {
            label: c,
            classes: n_classes,
        });
    }

    let by_attention = rank_descending(attention);
    let high_count = config.high_block_size(n);
    let (high, low) = by_attention.split_at(high_count);
    let coalitions = draw_coalitions(low, config.tau, rng);
    let inv_tau = T::one() / T::lit(config.tau as f64);

    // marginal[c][j] accumulates over coalitions for high-block member j.
    let mut marginal = vec![vec![T::zero(); high.len()]; classes.len()];
    for coalition in &coalitions {
        let base = value_fn.probs(coalition).to_vec();
        for (hi, &x) in high.iter().enumerate() {
            let with = value_fn.probs(&insert_sorted(coalition, x));
            for (ci, &c) in classes.iter().enumerate() {
                marginal[ci][hi] = marginal[ci][hi] + (with[c] - base[c]);
            }
        }
    }

    Ok(classes
        .iter()
        .zip(marginal)
        .map(|(&class, sums)| {
            let mut scores = vec![T::zero(); n];
            let high_scores: Vec<T> = sums.into_iter().map(|s| s * inv_tau).collect();
            let floor = high_scores.iter().copied().fold(T::zero(), T::min);
            let mut ranking: Vec<usize> = Vec::with_capacity(n);
            for hi in rank_descending(&high_scores) {
                ranking.push(high[hi]);
            }
            for (&x, &s) in high.iter().zip(&high_scores) {
                scores[x] = s;
            }
            let step = T::one() / T::lit((low.len() + 1) as f64);
            for (r, &x) in low.iter().enumerate() {
                scores[x] = floor - step * T::lit((r + 1) as f64);
                ranking.push(x);
            }
            IisVector {
                scores,
                method: IisMethod::ShapleyAccel,
                ranking,
                class: Some(class),
                high_count,
            }
        })
        .collect())
}
