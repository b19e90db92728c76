use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::milnet::{softmax, EmbeddedBag, FeatureMatrix, ModelParams, Pooling};
use crate::scalar::Scalar;

/// Largest player count [`exact_shapley`] will enumerate.
pub const EXACT_PLAYER_LIMIT: usize = 15;

/// A cooperative game over players `0..num_players()`.
pub trait CoalitionGame<T> {
    fn num_players(&self) -> usize;

    /// Worth of `coalition`, given as ascending player indices.
    fn value(&mut self, coalition: &[usize]) -> T;
}

/// How the worth of the empty coalition is defined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EmptyCoalition {
    /// Classify the zero pooled vector.
    #[default]
    ZeroPooled,
    /// Worth is zero.
    ZeroValue,
}

/// `v(S)` = probability of a target class when only the instances in `S`
/// are pooled by a frozen model. Class probabilities are cached per
/// coalition, so switching the target class never costs another forward
/// call.
pub struct CoalitionValueFn<'a, T> {
    params: &'a ModelParams<T>,
    bag: EmbeddedBag<T>,
    target: usize,
    empty: EmptyCoalition,
    cache: HashMap<Vec<usize>, Vec<T>>,
    evaluations: usize,
}

impl<'a, T: Scalar> CoalitionValueFn<'a, T> {
    pub fn new(
        params: &'a ModelParams<T>,
        feats: &FeatureMatrix<T>,
        pooling: Pooling,
        target: usize,
    ) -> Result<Self> {
        let bag = EmbeddedBag::new(params, feats, pooling)?;
        Self::from_embedded(params, bag, target)
    }

    pub fn from_embedded(
        params: &'a ModelParams<T>,
        bag: EmbeddedBag<T>,
        target: usize,
    ) -> Result<Self> {
        let classes = params.dims().classes;
        if target >= classes {
            return Err(Error::LabelOutOfRange {
                label: target,
                classes,
            });
        }
        Ok(Self {
            params,
            bag,
            target,
            empty: EmptyCoalition::default(),
            cache: HashMap::new(),
            evaluations: 0,
        })
    }

    pub fn with_empty_convention(mut self, empty: EmptyCoalition) -> Self {
        self.empty = empty;
        self
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn set_target(&mut self, target: usize) -> Result<()> {
        let classes = self.params.dims().classes;
        if target >= classes {
            return Err(Error::LabelOutOfRange {
                label: target,
                classes,
            });
        }
        self.target = target;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.params.dims().classes
    }

    /// Distinct model forward calls made so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn embedded(&self) -> &EmbeddedBag<T> {
        &self.bag
    }

    /// Class probabilities for `coalition` (any order; duplicates ignored).
    pub fn probs(&mut self, coalition: &[usize]) -> &[T] {
        let mut key = coalition.to_vec();
        key.sort_unstable();
        key.dedup();
        let (params, bag) = (self.params, &self.bag);
        let evaluations = &mut self.evaluations;
        self.cache.entry(key).or_insert_with_key(|k| {
            *evaluations += 1;
            softmax(&bag.logits(params, k))
        })
    }

    pub fn value_for(&mut self, coalition: &[usize], class: usize) -> T {
        if coalition.is_empty() && self.empty == EmptyCoalition::ZeroValue {
            return T::zero();
        }
        self.probs(coalition)[class]
    }
}

impl<T: Scalar> CoalitionGame<T> for CoalitionValueFn<'_, T> {
    fn num_players(&self) -> usize {
        self.bag.len()
    }

    fn value(&mut self, coalition: &[usize]) -> T {
        let c = self.target;
        self.value_for(coalition, c)
    }
}

/// A game given by an explicit worth for every subset, indexed by bitmask.
#[derive(Clone, Debug)]
pub struct TableGame<T> {
    players: usize,
    values: Vec<T>,
}

impl<T: Scalar> TableGame<T> {
    pub fn new(players: usize, values: Vec<T>) -> Result<Self> {
        if players > EXACT_PLAYER_LIMIT || values.len() != 1 << players {
            return Err(Error::InvalidArgument(format!(
                "table game over {players} players needs {} values",
                1usize << players.min(EXACT_PLAYER_LIMIT)
            )));
        }
        Ok(Self { players, values })
    }

    pub fn from_fn(players: usize, f: impl Fn(&[usize]) -> T) -> Result<Self> {
        let values = (0..1usize << players)
            .map(|mask| f(&members(mask, players)))
            .collect();
        Self::new(players, values)
    }
}

impl<T: Scalar> CoalitionGame<T> for TableGame<T> {
    fn num_players(&self) -> usize {
        self.players
    }

    fn value(&mut self, coalition: &[usize]) -> T {
        self.values[coalition.iter().fold(0, |m, &j| m | 1 << j)]
    }
}

fn members(mask: usize, n: usize) -> Vec<usize> {
    (0..n).filter(|j| mask >> j & 1 == 1).collect()
}

/// `|S|!(n−|S|−1)!/n!` for every `|S|` in `0..n`.
fn coalition_weights(n: usize) -> Vec<f64> {
    let fact: Vec<f64> = (0..=n)
        .scan(1.0, |acc, k| {
            if k > 0 {
                *acc *= k as f64;
            }
            Some(*acc)
        })
        .collect();
    (0..n)
        .map(|s| fact[s] * fact[n - s - 1] / fact[n])
        .collect()
}

/// Exact Shapley values by enumerating all `2^n` coalitions.
pub fn exact_shapley<T: Scalar, G: CoalitionGame<T> + ?Sized>(game: &mut G) -> Result<Vec<T>> {
    let n = game.num_players();
    if n > EXACT_PLAYER_LIMIT {
        return Err(Error::EnumerationLimit {
            players: n,
            limit: EXACT_PLAYER_LIMIT,
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let worth: Vec<T> = (0..1usize << n)
        .map(|mask| game.value(&members(mask, n)))
        .collect();
    let weights: Vec<T> = coalition_weights(n).into_iter().map(T::lit).collect();
    let mut phi = vec![T::zero(); n];
    for (mask, &v) in worth.iter().enumerate() {
        let w = weights.get(mask.count_ones() as usize);
        for (j, p) in phi.iter_mut().enumerate() {
            if mask >> j & 1 == 0 {
                let w = *w.expect("mask lacking a player has size < n");
                *p = *p + w * (worth[mask | 1 << j] - v);
            }
        }
    }
    Ok(phi)
}
