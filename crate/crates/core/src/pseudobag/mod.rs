//! Pseudo-bag partitioning, the progressive pseudo-bag schedule, and the
//! EM training loop.

mod em;
mod schedule;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::dataio::BagRecord;
use crate::error::{Error, Result};
use crate::milnet::{EmbeddedBag, ModelParams, Pooling};
use crate::rng::{key, substream};
use crate::scalar::Scalar;
use crate::shapley::{accelerated_iis, attention_iis, CoalitionValueFn, IisConfig, TargetClass};

pub use em::{em_train, EpochRecord, TrainConfig, TrainOutcome};
pub use schedule::{advance_schedule, ScheduleState};

/// A partition of one bag's instances into pseudo bags that all inherit the
/// parent's label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoBagAssignment {
    pub bag_id: String,
    pub label: usize,
    pub groups: Vec<Vec<usize>>,
}

impl PseudoBagAssignment {
    pub fn m(&self) -> usize {
        self.groups.len()
    }
}

/// How instances are ordered before the modulo interleave.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitStrategy {
    Random,
    Attention,
    Shapley,
}

/// Deals a ranked bag into `M` groups round-robin: the instance at rank `r`
/// joins group `r mod M`. `M` is capped at the bag size so no group is
/// empty; within a group instances keep rank order.
pub fn interleave_split(ranking: &[usize], m: usize) -> Result<Vec<Vec<usize>>> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "pseudo-bag count must be >= 1".into(),
        ));
    }
    if ranking.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty bag".into()));
    }
    let m = m.min(ranking.len());
    let mut groups = vec![Vec::with_capacity(ranking.len() / m + 1); m];
    for (r, &x) in ranking.iter().enumerate() {
        groups[r % m].push(x);
    }
    Ok(groups)
}

/// Interleaves a uniformly random permutation of `0..n`.
pub fn random_split<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    interleave_split(&perm, m)
}

/// Settings for one E-step.
#[derive(Clone, Copy, Debug)]
pub struct ReassignOptions {
    pub mu: usize,
    pub tau: usize,
    pub seed: u64,
    /// Distinguishes E-steps (e.g. a hash of round and epoch) so each gets
    /// fresh draws.
    pub stream: u64,
}

fn assign_bag<T: Scalar>(
    params: &ModelParams<T>,
    pooling: Pooling,
    bag: &BagRecord<T>,
    index: usize,
    strategy: SplitStrategy,
    m: usize,
    opts: &ReassignOptions,
) -> Result<PseudoBagAssignment> {
    let n = bag.len();
    let m_i = m.min(n);
    let mut rng = substream(opts.seed, "estep", key(&[opts.stream, index as u64]));
    let groups = match strategy {
        SplitStrategy::Random => random_split(n, m_i, &mut rng)?,
        // a single group holds the whole bag whatever the ranking
        _ if m_i == 1 => vec![(0..n).collect()],
        SplitStrategy::Attention => {
            let emb = EmbeddedBag::new(params, &bag.feats, pooling)?;
            interleave_split(&attention_iis(&emb.attention()).ranking, m_i)?
        }
        SplitStrategy::Shapley => {
            let emb = EmbeddedBag::new(params, &bag.feats, pooling)?;
            let attention = emb.attention();
            let mut value = CoalitionValueFn::from_embedded(params, emb, bag.label)?;
            let cfg = IisConfig {
                mu: opts.mu,
                tau: opts.tau,
                pseudo_bags: m_i,
                seed: opts.seed,
                target: TargetClass::BagLabel,
            };
            let iis = accelerated_iis(&mut value, &attention, &cfg, &mut rng)?;
            interleave_split(&iis.ranking, m_i)?
        }
    };
    Ok(PseudoBagAssignment {
        bag_id: bag.id.clone(),
        label: bag.label,
        groups,
    })
}

/// E-step: ranks every bag with the frozen model and re-splits it into
/// `min(M, n_i)` pseudo bags. Bags are scored on `pool` when given; each bag
/// draws from its own substream, so the result does not depend on the
/// number of workers.
pub fn reassign_all<T: Scalar>(
    params: &ModelParams<T>,
    pooling: Pooling,
    bags: &[BagRecord<T>],
    strategy: SplitStrategy,
    m: usize,
    opts: &ReassignOptions,
    pool: Option<&ThreadPool>,
) -> Result<Vec<PseudoBagAssignment>> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "pseudo-bag count must be >= 1".into(),
        ));
    }
    let run = |i: usize, b: &BagRecord<T>| {
        assign_bag(params, pooling, b, i, strategy, m, opts)
            .map_err(|e| Error::InvalidArgument(format!("scoring bag {} failed: {e}", b.id)))
    };
    match pool {
        Some(pool) => pool.install(|| {
            bags.par_iter()
                .enumerate()
                .map(|(i, b)| run(i, b))
                .collect()
        }),
        None => bags.iter().enumerate().map(|(i, b)| run(i, b)).collect(),
    }
}
