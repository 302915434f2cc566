//! A trainable gated latent memory bank attached to a frozen causal
//! transformer, plus the synthetic cross-segment recall tasks used to train
//! and evaluate it.

pub mod backbone;
pub mod error;
pub mod harness;
pub mod memory_bank;
pub mod memory_loop;
pub mod numerics;
pub mod tasks;
pub mod training;

pub use backbone::{Backbone, BackboneConfig};
pub use error::{GmemError, Result};
pub use memory_bank::{MemoryBankParams, MemoryConfig, MemoryState, SlotScores, UpdateRule};
pub use memory_loop::{GMemModel, InjectionParams, LoopOptions, MemoryMode, StepOutput};
pub use numerics::Tensor;
