use crate::error::{Error, Result};
use crate::milnet::ModelParams;

/// Progressive pseudo-bag state for one EM round.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleState<T> {
    pub m_t: usize,
    pub delta_m: usize,
    pub m0: usize,
    pub m_max: usize,
    pub round: usize,
    pub total_rounds: usize,
    /// Epochs since the monitored validation score last improved.
    pub stale_epochs: usize,
    pub best_score: Option<f64>,
    pub best_params: Option<ModelParams<T>>,
}

impl<T> ScheduleState<T> {
    pub fn new(m0: usize, delta_m: usize, m_max: usize, total_rounds: usize) -> Result<Self> {
        if m0 == 0 || m0 > m_max {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= M_0 <= M_max, got M_0={m0}, M_max={m_max}"
            )));
        }
        if total_rounds == 0 {
            return Err(Error::InvalidArgument("need at least one round".into()));
        }
        Ok(Self {
            m_t: m0,
            delta_m,
            m0,
            m_max,
            round: 0,
            total_rounds,
            stale_epochs: 0,
            best_score: None,
            best_params: None,
        })
    }

    /// Resets the per-round fields for `round`.
    pub fn start_round(&mut self, round: usize) {
        self.round = round;
        self.m_t = self.m0;
        self.stale_epochs = 0;
        self.best_score = None;
        self.best_params = None;
    }

    pub fn at_cap(&self) -> bool {
        self.m_t >= self.m_max
    }
}

/// On convergence `M_t ← min(M_t + ΔM, M_max)` and the patience counter
/// resets; otherwise the state is returned unchanged.
pub fn advance_schedule<T>(mut state: ScheduleState<T>, converged: bool) -> ScheduleState<T> {
    if converged {
        state.m_t = (state.m_t + state.delta_m).min(state.m_max);
        state.stale_epochs = 0;
    }
    state
}
