//! Model representation and exact inference.

mod cohort;
mod inference;
mod model;

pub use cohort::{AuxValue, Cohort, Reading, VisitSequence};
pub use inference::{
    dataset_loglik, emission_likelihood, forward_backward, forward_filter, viterbi, FilterResult,
    SmoothResult, ViterbiPath, DT_QUANTUM,
};
pub use model::{ChainModel, MaskPreset, TransitionMask, EMISSION_FLOOR};

pub(crate) use inference::{backward_pass, forward_pass, TransitionCache};
