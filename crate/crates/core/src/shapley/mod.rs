//! Instance importance scoring: attention ranking, exact Shapley values by
//! enumeration, and the attention-accelerated Shapley estimator.

mod exact;
mod iis;

pub use exact::{
    exact_shapley, CoalitionGame, CoalitionValueFn, EmptyCoalition, TableGame, EXACT_PLAYER_LIMIT,
};
pub(crate) use iis::argmax;
pub use iis::{
    accelerated_iis, attention_iis, classwise_iis, evidence_class, exact_iis, rank_descending,
    IisConfig, IisMethod, IisVector, TargetClass,
};
