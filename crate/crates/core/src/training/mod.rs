//! Adam-based maximization of the variant ELBOs with alternating
//! adjacency / network phases, plus multi-seed ensembling.

mod adam;
mod trainer;

pub use adam::{adam_step, AdamConfig, OptState};
pub use trainer::{
    ensemble_scores, init_state, train, ModelConfig, Phase, TraceEntry, TrainConfig, TrainTrace,
};
