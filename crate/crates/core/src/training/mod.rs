//! Composite objective (next-token cross-entropy plus slot-sparsity and
//! slot-entropy regularizers) and the loop that optimizes only the memory
//! bank and injection weights.

pub mod losses;
pub mod optim;
mod trainer;

pub use losses::{clm_loss, entropy_loss, sparsity_loss, total_loss, LossBreakdown};
pub use optim::{clip_grad_norm, Adam, AdamConfig};
pub use trainer::{PreparedExample, StepMetrics, Supervision, TrainConfig, Trainer, METRICS_HEADER};
