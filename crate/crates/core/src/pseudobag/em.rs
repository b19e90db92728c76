use rand::seq::SliceRandom;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use super::schedule::{advance_schedule, ScheduleState};
use super::{random_split, reassign_all, PseudoBagAssignment, ReassignOptions, SplitStrategy};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{bag_metrics, mislabel_count};
use crate::milnet::{
    adam_step, backward_bag, forward_bag, loss_ce, predict, ModelDims, ModelParams, OptimizerState,
    Pooling,
};
use crate::rng::{key, substream};
use crate::scalar::Scalar;

/// Hyperparameters of the progressive pseudo-bag EM loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub attn_dim: usize,
    pub pooling: Pooling,
    /// Learning rate of round 0.
    pub lr: f64,
    /// Learning rate of rounds 1 and later.
    pub lr_finetune: f64,
    pub weight_decay: f64,
    /// Epochs without validation improvement that count as convergence.
    pub patience: usize,
    pub max_epochs_per_round: usize,
    pub rounds: usize,
    pub m0: usize,
    pub delta_m: usize,
    pub m_max: usize,
    pub mu: usize,
    pub tau: usize,
    pub strategy: SplitStrategy,
    /// Set by the caller, never read from a config file.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            attn_dim: 64,
            pooling: Pooling::Attention,
            lr: 3e-4,
            lr_finetune: 1e-4,
            weight_decay: 1e-5,
            patience: 20,
            max_epochs_per_round: 200,
            rounds: 10,
            m0: 4,
            delta_m: 4,
            m_max: 8,
            mu: 10,
            tau: 3,
            strategy: SplitStrategy::Shapley,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.embed_dim == 0 || self.attn_dim == 0 {
            return bad("embed_dim and attn_dim must be >= 1");
        }
        if !(self.lr > 0.0
            && self.lr.is_finite()
            && self.lr_finetune > 0.0
            && self.lr_finetune.is_finite())
        {
            return bad("learning rates must be positive and finite");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.patience == 0 || self.max_epochs_per_round == 0 || self.rounds == 0 {
            return bad("patience, max_epochs_per_round and rounds must be >= 1");
        }
        if self.m0 == 0 || self.m0 > self.m_max {
            return bad("need 1 <= m0 <= m_max");
        }
        if self.mu == 0 || self.tau == 0 {
            return bad("mu and tau must be >= 1");
        }
        Ok(())
    }
}

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub round: usize,
    pub epoch: usize,
    pub m_t: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub val_auc: Option<f64>,
    pub val_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_fraction: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub best: ModelParams<T>,
    pub pooling: Pooling,
    pub best_val_score: f64,
    pub best_round: usize,
    pub history: Vec<EpochRecord>,
}

fn validation_score<T: Scalar>(
    params: &ModelParams<T>,
    pooling: Pooling,
    val: &Dataset<T>,
) -> Result<(f64, crate::metrics::BagEval)> {
    let probs = val
        .bags
        .iter()
        .map(|b| predict(params, &b.feats, pooling).map(|p| p.0))
        .collect::<Result<Vec<_>>>()?;
    let eval = bag_metrics(&probs, &val.labels())?;
    Ok((eval.auc.unwrap_or(eval.acc), eval))
}

/// One pass of pseudo-bag gradient training in a seeded shuffle order.
/// Returns the mean loss.
#[allow(clippy::too_many_arguments)]
fn train_epoch<T: Scalar>(
    params: &mut ModelParams<T>,
    opt: &mut OptimizerState<T>,
    pooling: Pooling,
    train: &Dataset<T>,
    assignments: &[PseudoBagAssignment],
    seed: u64,
    round: usize,
    epoch: usize,
) -> Result<f64> {
    let mut items: Vec<(usize, usize)> = assignments
        .iter()
        .enumerate()
        .flat_map(|(b, a)| (0..a.groups.len()).map(move |g| (b, g)))
        .collect();
    items.shuffle(&mut substream(
        seed,
        "shuffle",
        key(&[round as u64, epoch as u64]),
    ));

    let mut total = 0.0;
    for &(b, g) in &items {
        let bag = &train.bags[b];
        let mut rows = assignments[b].groups[g].clone();
        rows.sort_unstable();
        let feats = bag.feats.select_rows(&rows)?;
        let trace = forward_bag(params, &feats, pooling)?;
        let loss = loss_ce(&trace.logits, bag.label)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss diverged at round {round}, epoch {epoch}, bag {} (pseudo bag {g})",
                bag.id
            )));
        }
        total += loss.as_f64();
        let grads = backward_bag(&trace, params, &feats, bag.label)?;
        adam_step(params, &grads, opt)?;
    }
    Ok(total / items.len() as f64)
}

/// Progressive pseudo-bag training with EM rounds.
///
/// Round 0 starts from random pseudo bags; every later round starts from a
/// fresh initialization but with pseudo bags ranked by the previous round's
/// best model. Within a round each epoch re-splits the training bags with the
/// current frozen model (E-step) and then trains one pass over the pseudo
/// bags (M-step). When validation AUC stalls for `patience` epochs the
/// pseudo-bag count grows by `delta_m`; once it sits at `m_max` and stalls
/// again, the round ends. Returns the best validation snapshot over all
/// rounds.
pub fn em_train<T: Scalar>(
    train: &Dataset<T>,
    val: &Dataset<T>,
    cfg: &TrainConfig,
    pool: Option<&ThreadPool>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("training split has no bags".into()));
    }
    if val.is_empty() {
        return Err(Error::EmptyDataset("validation split has no bags".into()));
    }
    train.validate()?;
    val.validate()?;
    if val.feature_dim != train.feature_dim || val.num_classes() != train.num_classes() {
        return Err(Error::Shape("train and validation schemas differ".into()));
    }

    let dims = ModelDims::new(train.feature_dim, train.num_classes())
        .with_hidden(cfg.embed_dim, cfg.attn_dim);
    let labels: Option<Vec<&[u8]>> = train
        .bags
        .iter()
        .map(|b| b.instance_labels.as_deref())
        .collect();

    let mut state = ScheduleState::<T>::new(cfg.m0, cfg.delta_m, cfg.m_max, cfg.rounds)?;
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;
    let mut prev_round_best: Option<ModelParams<T>> = None;

    for round in 0..cfg.rounds {
        state.start_round(round);
        let mut params = ModelParams::init(dims, &mut substream(cfg.seed, "init", round as u64))?;
        let lr = if round == 0 { cfg.lr } else { cfg.lr_finetune };
        let mut opt = OptimizerState::new(&params, T::lit(lr), T::lit(cfg.weight_decay));

        for epoch in 0..cfg.max_epochs_per_round {
            let opts = ReassignOptions {
                mu: cfg.mu,
                tau: cfg.tau,
                seed: cfg.seed,
                stream: key(&[round as u64, epoch as u64]),
            };
            let assignments = match (&prev_round_best, epoch) {
                (None, 0) => {
                    let mut rng = substream(cfg.seed, "initial-split", 0);
                    train
                        .bags
                        .iter()
                        .map(|b| {
                            Ok(PseudoBagAssignment {
                                bag_id: b.id.clone(),
                                label: b.label,
                                groups: random_split(b.len(), state.m_t.min(b.len()), &mut rng)?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                (Some(prev), 0) => reassign_all(
                    prev,
                    cfg.pooling,
                    &train.bags,
                    cfg.strategy,
                    state.m_t,
                    &opts,
                    pool,
                )?,
                _ => reassign_all(
                    &params,
                    cfg.pooling,
                    &train.bags,
                    cfg.strategy,
                    state.m_t,
                    &opts,
                    pool,
                )?,
            };

            let epsilon = labels
                .as_ref()
                .map(|l| mislabel_count(&assignments, l))
                .transpose()?;

            let train_loss = train_epoch(
                &mut params,
                &mut opt,
                cfg.pooling,
                train,
                &assignments,
                cfg.seed,
                round,
                epoch,
            )?;
            let (score, eval) = validation_score(&params, cfg.pooling, val)?;
            history.push(EpochRecord {
                round,
                epoch,
                m_t: state.m_t,
                train_loss,
                val_acc: eval.acc,
                val_auc: eval.auc,
                val_f1: eval.macro_f1,
                epsilon: epsilon.map(|e| e.0),
                epsilon_fraction: epsilon.map(|e| e.1),
            });

            if state.best_score.is_none_or(|b| score > b) {
                state.best_score = Some(score);
                state.best_params = Some(params.clone());
                state.stale_epochs = 0;
            } else {
                state.stale_epochs += 1;
            }
            if state.stale_epochs >= cfg.patience {
                if state.at_cap() {
                    break;
                }
                state = advance_schedule(state, true);
            }
        }

        let round_score = state.best_score.expect("at least one epoch ran");
        let round_params = state.best_params.take().expect("snapshot taken with score");
        if best.as_ref().is_none_or(|(s, _, _)| round_score > *s) {
            best = Some((round_score, round, round_params.clone()));
        }
        prev_round_best = Some(round_params);
    }

    let (best_val_score, best_round, best) = best.expect("at least one round ran");
    Ok(TrainOutcome {
        best,
        pooling: cfg.pooling,
        best_val_score,
        best_round,
        history,
    })
}
