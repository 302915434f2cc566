//! Per-segment memory cycle and its fold over an episode.
//!
//! For each segment: the frozen backbone produces hidden states `H`; they are
//! encoded, used to read the slots, the read is decoded and injected back
//! through a gated residual before the LM head; finally the same encoding of
//! the original `H` is consolidated into the slots for the next segment.
//! The slot matrix is the only path between segments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::Backbone;
use crate::error::{GmemError, Result};
use crate::memory_bank::{
    importance_scores_on_tape, MemoryBankParams, MemoryState, MemoryVars, SlotScores, UpdateRule,
};
use crate::numerics::{normal_tensor, Bound, ParamId, ParamStore, Parameter, Tape, Tensor, Var};

/// Gated residual injection weights: `H + σ([H;D]·W_i + b_i) ⊙ ([H;D]·W_f + b_f)`.
#[derive(Clone, Debug)]
pub struct InjectionParams {
    store: ParamStore,
    fuse_w: ParamId,
    fuse_b: ParamId,
    gate_w: ParamId,
    gate_b: ParamId,
}

impl InjectionParams {
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let std = 1.0 / (2.0 * hidden as f64).sqrt();
        let fuse_w = store.push(Parameter::new("inject.fuse.w", normal_tensor(&mut rng, &[2 * hidden, hidden], std), true));
        let fuse_b = store.push(Parameter::new("inject.fuse.b", Tensor::zeros(&[1, hidden]), true));
        let gate_w = store.push(Parameter::new("inject.gate.w", normal_tensor(&mut rng, &[2 * hidden, hidden], std), true));
        let gate_b = store.push(Parameter::new("inject.gate.b", Tensor::zeros(&[1, hidden]), true));
        InjectionParams {
            store,
            fuse_w,
            fuse_b,
            gate_w,
            gate_b,
        }
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn set_gate_bias(&mut self, value: f64) {
        let p = self.store.get_mut(self.gate_b);
        p.value = Tensor::full(p.value.shape(), value);
    }
}

/// Which memory pathway the loop runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MemoryMode {
    /// Gated consolidation and gated injection.
    #[default]
    On,
    /// Both gates held closed: logits are the backbone's, slots never change.
    Off,
    /// Ungated consolidation, `M_new = M_attended`.
    Overwrite,
}

impl std::str::FromStr for MemoryMode {
    type Err = GmemError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(MemoryMode::On),
            "off" => Ok(MemoryMode::Off),
            "overwrite" | "overwrite-baseline" => Ok(MemoryMode::Overwrite),
            other => Err(GmemError::Config(format!("unknown memory mode '{other}'"))),
        }
    }
}

impl MemoryMode {
    fn update_rule(self) -> UpdateRule {
        match self {
            MemoryMode::Overwrite => UpdateRule::Overwrite,
            _ => UpdateRule::Gated,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoopOptions {
    pub mode: MemoryMode,
    /// Cut gradient flow through the slots every this many segments; 0 keeps
    /// the whole episode connected.
    pub bptt_window: usize,
    /// Restart every segment from the initial slots (no carry-over).
    pub reset_each_segment: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl GateStats {
    fn of(t: &Tensor) -> Self {
        let d = t.data();
        GateStats {
            mean: d.iter().sum::<f64>() / d.len() as f64,
            min: d.iter().cloned().fold(f64::INFINITY, f64::min),
            max: d.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub logits: Tensor,
    pub new_memory: MemoryState,
    pub scores: SlotScores,
    /// `None` when no gate ran (memory off or overwrite rule).
    pub gate_stats: Option<GateStats>,
    pub retrieval_attention: Tensor,
}

#[derive(Clone, Debug)]
pub struct EpisodeOutput {
    pub logits: Vec<Tensor>,
    pub final_memory: MemoryState,
    pub scores: Vec<SlotScores>,
    pub gate_stats: Vec<Option<GateStats>>,
}

/// Tape handles for every trainable and frozen tensor of the model.
pub struct ModelVars {
    pub memory: MemoryVars,
    pub injection: Bound,
    pub backbone: Bound,
}

/// Tape handles produced by one segment.
#[derive(Clone, Copy, Debug)]
pub struct SegmentTrace {
    pub logits: Var,
    /// Raw importance scores `[1×S]`.
    pub scores: Var,
    pub gate: Option<Var>,
    pub retrieval_attention: Var,
    pub new_slots: Var,
}

/// Frozen backbone plus trainable memory bank and injection layer.
#[derive(Clone, Debug)]
pub struct GMemModel {
    pub backbone: Backbone,
    pub memory: MemoryBankParams,
    pub injection: InjectionParams,
}

impl GMemModel {
    pub fn new(backbone: Backbone, memory: MemoryBankParams, injection: InjectionParams) -> Result<Self> {
        if memory.config().model_hidden != backbone.config().hidden {
            return Err(GmemError::Config(format!(
                "memory reads width {} but backbone emits {}",
                memory.config().model_hidden,
                backbone.config().hidden
            )));
        }
        let ratio = memory.param_count() as f64 / backbone.param_count() as f64;
        if ratio >= 0.03 {
            log::warn!(
                "memory bank has {} parameters, {:.1}% of the backbone's {}",
                memory.param_count(),
                100.0 * ratio,
                backbone.param_count()
            );
        }
        Ok(GMemModel {
            backbone,
            memory,
            injection,
        })
    }

    /// Memory-bank parameters as a fraction of backbone parameters.
    pub fn memory_param_ratio(&self) -> f64 {
        self.memory.param_count() as f64 / self.backbone.param_count() as f64
    }

    pub fn trainable_param_count(&self) -> usize {
        self.memory.param_count() + self.injection.store.scalar_count()
    }

    pub fn trainable_stores(&self) -> [&ParamStore; 2] {
        [self.memory.store(), &self.injection.store]
    }

    pub fn trainable_stores_mut(&mut self) -> [&mut ParamStore; 2] {
        [self.memory.store_mut(), &mut self.injection.store]
    }

    pub fn bind(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            memory: self.memory.bind(tape),
            injection: self.injection.store.bind(tape),
            backbone: self.backbone.params().bind(tape),
        }
    }

    /// Backbone hidden states of every segment. They do not depend on any
    /// trainable weight, so callers may compute them once and reuse them.
    pub fn hidden_states(&self, segments: &[Vec<usize>]) -> Result<Vec<Tensor>> {
        segments.iter().map(|s| self.backbone.extract_hidden_states(s)).collect()
    }

    /// One memory cycle on the tape. `hidden` is the segment's backbone
    /// output, `slots` the incoming memory.
    pub fn step_on_tape(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        hidden: Var,
        slots: Var,
        mode: MemoryMode,
    ) -> Result<SegmentTrace> {
        let mem = &self.memory;
        let encoded = mem.encode_on_tape(tape, &vars.memory, hidden)?;
        let read = mem.retrieve_on_tape(tape, &vars.memory, slots, encoded)?;
        let scores = importance_scores_on_tape(tape, read.logits)?;

        if mode == MemoryMode::Off {
            let logits = self.backbone.lm_head_on_tape(tape, &vars.backbone, hidden)?;
            return Ok(SegmentTrace {
                logits,
                scores,
                gate: None,
                retrieval_attention: read.attention,
                new_slots: slots,
            });
        }

        let decoded = mem.decode_on_tape(tape, &vars.memory, read.retrieved)?;
        let joined = tape.concat_last_dim(hidden, decoded)?;
        let inj = &self.injection;
        let fused = tape.affine(joined, vars.injection.var(inj.fuse_w), vars.injection.var(inj.fuse_b))?;
        let gate_pre = tape.affine(joined, vars.injection.var(inj.gate_w), vars.injection.var(inj.gate_b))?;
        let inject_gate = tape.sigmoid(gate_pre);
        let injected = tape.mul(inject_gate, fused)?;
        let enhanced = tape.add(hidden, injected)?;
        let logits = self.backbone.lm_head_on_tape(tape, &vars.backbone, enhanced)?;

        let cons = mem.consolidate_on_tape(tape, &vars.memory, slots, encoded, mode.update_rule())?;
        Ok(SegmentTrace {
            logits,
            scores,
            gate: cons.gate,
            retrieval_attention: read.attention,
            new_slots: cons.new_slots,
        })
    }

    /// Folds [`Self::step_on_tape`] over an episode starting from the
    /// learnable initial slots.
    pub fn episode_on_tape(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        hiddens: &[Tensor],
        options: LoopOptions,
    ) -> Result<Vec<SegmentTrace>> {
        if hiddens.is_empty() {
            return Err(GmemError::Input("episode has no segments".into()));
        }
        let mut slots = vars.memory.initial_slots;
        let mut traces = Vec::with_capacity(hiddens.len());
        for (k, h) in hiddens.iter().enumerate() {
            if options.reset_each_segment {
                slots = vars.memory.initial_slots;
            } else if options.bptt_window > 0 && k > 0 && k % options.bptt_window == 0 {
                slots = tape.detach(slots);
            }
            let hidden = tape.constant(h.clone());
            let trace = self.step_on_tape(tape, vars, hidden, slots, options.mode)?;
            slots = trace.new_slots;
            traces.push(trace);
        }
        Ok(traces)
    }

    /// One cycle on a single segment with an explicit incoming memory.
    pub fn step(&self, tokens: &[usize], memory: &MemoryState, mode: MemoryMode) -> Result<StepOutput> {
        let hidden = self.backbone.extract_hidden_states(tokens)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let h = tape.constant(hidden);
        let m = tape.constant(memory.slots.clone());
        let trace = self.step_on_tape(&mut tape, &vars, h, m, mode)?;
        self.collect_step(&tape, &trace)
    }

    fn collect_step(&self, tape: &Tape, trace: &SegmentTrace) -> Result<StepOutput> {
        Ok(StepOutput {
            logits: tape.value(trace.logits).clone(),
            new_memory: MemoryState {
                slots: tape.value(trace.new_slots).clone(),
            },
            scores: SlotScores::from_raw(tape.value(trace.scores).clone())?,
            gate_stats: trace.gate.map(|g| GateStats::of(tape.value(g))),
            retrieval_attention: tape.value(trace.retrieval_attention).clone(),
        })
    }

    pub fn run_episode(&self, segments: &[Vec<usize>], options: LoopOptions) -> Result<EpisodeOutput> {
        let hiddens = self.hidden_states(segments)?;
        self.run_episode_hidden(&hiddens, options)
    }

    /// [`Self::run_episode`] on precomputed backbone hidden states.
    pub fn run_episode_hidden(&self, hiddens: &[Tensor], options: LoopOptions) -> Result<EpisodeOutput> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let traces = self.episode_on_tape(&mut tape, &vars, hiddens, options)?;
        let mut out = EpisodeOutput {
            logits: Vec::with_capacity(traces.len()),
            final_memory: MemoryState {
                slots: tape.value(traces.last().expect("non-empty").new_slots).clone(),
            },
            scores: Vec::with_capacity(traces.len()),
            gate_stats: Vec::with_capacity(traces.len()),
        };
        for trace in &traces {
            let step = self.collect_step(&tape, trace)?;
            out.logits.push(step.logits);
            out.scores.push(step.scores);
            out.gate_stats.push(step.gate_stats);
        }
        Ok(out)
    }
}
