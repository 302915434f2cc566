use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::losses::{entropy_on_tape, sparsity_on_tape, total_loss, LossBreakdown};
use super::optim::{clip_grad_norm, Adam, AdamConfig};
use crate::error::{GmemError, Result};
use crate::memory_loop::{GMemModel, LoopOptions, MemoryMode, ModelVars};
use crate::numerics::{Tape, Tensor, Var};
use crate::tasks::{check_compatible, SyntheticExample, PAD};

pub const METRICS_HEADER: &str = "step,clm,sparsity,entropy,total,slot_entropy,gate_mean,answer_acc";

/// Which positions the next-token loss supervises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Supervision {
    /// Only the answer tokens of the final segment.
    #[default]
    Answer,
    /// Every next-token position of every segment.
    Lm,
}

impl std::str::FromStr for Supervision {
    type Err = GmemError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "answer" => Ok(Supervision::Answer),
            "lm" => Ok(Supervision::Lm),
            other => Err(GmemError::Config(format!("unknown supervision '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda_s: f64,
    pub lambda_e: f64,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub bptt_window: usize,
    pub supervision: Supervision,
    pub shuffle_seed: u64,
    pub mode: MemoryMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_s: 0.01,
            lambda_e: 0.01,
            adam: AdamConfig::default(),
            clip_norm: 1.0,
            batch_size: 16,
            steps: 2000,
            bptt_window: 0,
            supervision: Supervision::Answer,
            shuffle_seed: 0,
            mode: MemoryMode::On,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        total_loss(0.0, 0.0, 0.0, self.lambda_s, self.lambda_e)?;
        if self.batch_size == 0 {
            return Err(GmemError::Config("batch_size must be >= 1".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(GmemError::Config("learning rate must be positive".into()));
        }
        if self.mode == MemoryMode::Off {
            return Err(GmemError::Config("cannot train with memory off".into()));
        }
        Ok(())
    }
}

/// An example with its backbone hidden states cached and its supervision
/// laid out per segment.
#[derive(Clone, Debug)]
pub struct PreparedExample {
    pub hiddens: Vec<Tensor>,
    /// `(targets, mask)` per segment; segments without supervision have `None`.
    pub supervision: Vec<Option<(Vec<usize>, Vec<bool>)>>,
}

impl PreparedExample {
    pub fn new(model: &GMemModel, ex: &SyntheticExample, supervision: Supervision) -> Result<Self> {
        let hiddens = model.hidden_states(&ex.segments)?;
        let last = ex.segments.len() - 1;
        let sup = ex
            .segments
            .iter()
            .enumerate()
            .map(|(k, seg)| match supervision {
                Supervision::Answer if k == last => Some(ex.answer_targets()),
                Supervision::Answer => None,
                Supervision::Lm if seg.len() >= 2 => {
                    let mut targets = seg[1..].to_vec();
                    targets.push(PAD);
                    let mut mask = vec![true; seg.len()];
                    mask[seg.len() - 1] = false;
                    Some((targets, mask))
                }
                Supervision::Lm => None,
            })
            .collect();
        Ok(PreparedExample { hiddens, supervision: sup })
    }
}

/// Tape handles and counters of one episode's objective.
pub struct EpisodeLoss {
    pub total: Var,
    pub clm: Var,
    pub sparsity: Var,
    pub entropy: Var,
    /// Raw importance scores averaged over segments, `[1×S]`.
    pub scores: Var,
    pub gates: Vec<Var>,
    pub hits: usize,
    pub supervised: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub loss: LossBreakdown,
    pub slot_entropy: f64,
    pub gate_mean: f64,
    pub answer_acc: f64,
}

impl StepMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.loss.clm,
            self.loss.sparsity,
            self.loss.entropy,
            self.loss.total,
            self.slot_entropy,
            self.gate_mean,
            self.answer_acc
        )
    }
}

/// Owns the model, optimizer state and prepared data of one training run.
pub struct Trainer {
    pub model: GMemModel,
    pub adam: Adam,
    pub config: TrainConfig,
    data: Vec<PreparedExample>,
}

impl Trainer {
    pub fn new(model: GMemModel, config: TrainConfig, examples: &[SyntheticExample]) -> Result<Self> {
        config.validate()?;
        if examples.is_empty() {
            return Err(GmemError::Input("training set is empty".into()));
        }
        check_compatible(&model, examples)?;
        let data = examples
            .iter()
            .map(|e| PreparedExample::new(&model, e, config.supervision))
            .collect::<Result<Vec<_>>>()?;
        let stores = model.trainable_stores();
        let adam = Adam::new(config.adam, &stores);
        Ok(Trainer {
            model,
            adam,
            config,
            data,
        })
    }

    /// Number of optimizer updates applied so far.
    pub fn step(&self) -> u64 {
        self.adam.step
    }

    pub fn data_len(&self) -> usize {
        self.data.len()
    }

    fn options(&self) -> LoopOptions {
        LoopOptions {
            mode: self.config.mode,
            bptt_window: self.config.bptt_window,
            reset_each_segment: false,
        }
    }

    /// Records one episode's composite objective on `tape`.
    pub fn episode_loss(
        model: &GMemModel,
        tape: &mut Tape,
        vars: &ModelVars,
        ex: &PreparedExample,
        config: &TrainConfig,
        options: LoopOptions,
    ) -> Result<EpisodeLoss> {
        let traces = model.episode_on_tape(tape, vars, &ex.hiddens, options)?;

        let mut clm: Option<Var> = None;
        let mut supervised = 0;
        let mut hits = 0;
        for (trace, sup) in traces.iter().zip(&ex.supervision) {
            let Some((targets, mask)) = sup else { continue };
            let count = mask.iter().filter(|&&m| m).count();
            if count == 0 {
                continue;
            }
            let logits = tape.value(trace.logits);
            for (t, (&target, &m)) in targets.iter().zip(mask).enumerate() {
                if m && logits.argmax_row(t) == target {
                    hits += 1;
                }
            }
            let ce = tape.cross_entropy(trace.logits, targets, mask)?;
            let weighted = tape.scale(ce, count as f64);
            clm = Some(match clm {
                None => weighted,
                Some(acc) => tape.add(acc, weighted)?,
            });
            supervised += count;
        }
        let clm = clm.ok_or_else(|| GmemError::Input("episode has no supervised positions".into()))?;
        let clm = tape.scale(clm, 1.0 / supervised as f64);

        let mut scores = traces[0].scores;
        for trace in &traces[1..] {
            scores = tape.add(scores, trace.scores)?;
        }
        let scores = tape.scale(scores, 1.0 / traces.len() as f64);
        let sparsity = sparsity_on_tape(tape, scores);
        let entropy = entropy_on_tape(tape, scores)?;
        let ws = tape.scale(sparsity, config.lambda_s);
        let we = tape.scale(entropy, config.lambda_e);
        let total = tape.add(clm, ws)?;
        let total = tape.add(total, we)?;
        Ok(EpisodeLoss {
            total,
            clm,
            sparsity,
            entropy,
            scores,
            gates: traces.iter().filter_map(|t| t.gate).collect(),
            hits,
            supervised,
        })
    }

    /// Episode indices of the batch used at optimizer step `step`: a stream
    /// of per-epoch permutations derived from the shuffle seed, so any step's
    /// batch is known without replaying earlier ones.
    pub fn batch_indices(&self, step: u64) -> Vec<usize> {
        let n = self.data.len();
        let b = self.config.batch_size;
        let start = step as usize * b;
        let mut perm_epoch = usize::MAX;
        let mut perm: Vec<usize> = Vec::new();
        (start..start + b)
            .map(|j| {
                let epoch = j / n;
                if epoch != perm_epoch {
                    perm = (0..n).collect();
                    let seed = self.config.shuffle_seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                    perm_epoch = epoch;
                }
                perm[j % n]
            })
            .collect()
    }

    /// Forward + backward over `indices`; gradients land in the trainable
    /// parameters' `grad` fields (zeroed first), averaged over the batch.
    pub fn accumulate_gradients(&mut self, indices: &[usize]) -> Result<StepMetrics> {
        for store in self.model.trainable_stores_mut() {
            store.zero_grads();
        }
        let options = self.options();
        let scale = 1.0 / indices.len() as f64;
        let mut parts = [0.0f64; 4];
        let mut p_mean: Option<Tensor> = None;
        let mut gate_sum = 0.0;
        let mut gate_count = 0usize;
        let mut hits = 0;
        let mut supervised = 0;

        for &i in indices {
            let mut tape = Tape::new();
            let vars = self.model.bind(&mut tape);
            let ep = Self::episode_loss(&self.model, &mut tape, &vars, &self.data[i], &self.config, options)?;
            let total = tape.value(ep.total).item();
            if !total.is_finite() {
                return Err(GmemError::Numerical(format!(
                    "non-finite loss at step {}: first non-finite tensor is {}",
                    self.adam.step,
                    tape.first_non_finite().unwrap_or_else(|| "the loss itself".into())
                )));
            }
            for (acc, v) in parts.iter_mut().zip([ep.clm, ep.sparsity, ep.entropy, ep.total]) {
                *acc += tape.value(v).item() * scale;
            }
            let p = tape.value(ep.scores).softmax_rows()?;
            match &mut p_mean {
                None => p_mean = Some(p),
                Some(acc) => acc.add_assign(&p)?,
            }
            for &g in &ep.gates {
                let gt = tape.value(g);
                gate_sum += gt.sum();
                gate_count += gt.numel();
            }
            hits += ep.hits;
            supervised += ep.supervised;

            let grads = tape.backward(ep.total)?;
            self.model.memory.store_mut().accumulate_grads(&vars.memory.bound, &grads, scale)?;
            self.model.injection.store_mut().accumulate_grads(&vars.injection, &grads, scale)?;
        }

        let p_mean = p_mean.expect("non-empty batch").scale(scale);
        let slot_entropy = -p_mean.data().iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
        let loss = LossBreakdown {
            clm: parts[0],
            sparsity: parts[1],
            entropy: parts[2],
            total: parts[3],
            lambda_s: self.config.lambda_s,
            lambda_e: self.config.lambda_e,
        };
        Ok(StepMetrics {
            step: self.adam.step,
            loss,
            slot_entropy,
            gate_mean: if gate_count > 0 { gate_sum / gate_count as f64 } else { f64::NAN },
            answer_acc: hits as f64 / supervised.max(1) as f64,
        })
    }

    /// One optimizer update on the next batch.
    pub fn train_step(&mut self) -> Result<StepMetrics> {
        let indices = self.batch_indices(self.adam.step);
        let mut metrics = self.accumulate_gradients(&indices)?;
        let mut stores = self.model.trainable_stores_mut();
        clip_grad_norm(&mut stores, self.config.clip_norm);
        self.adam.update(&mut stores)?;
        for store in self.model.trainable_stores() {
            if let Some(p) = store.iter().find(|p| !p.value.is_finite()) {
                return Err(GmemError::Numerical(format!(
                    "parameter {} became non-finite at step {}",
                    p.name, self.adam.step
                )));
            }
        }
        metrics.step = self.adam.step;
        Ok(metrics)
    }

    /// Runs until `config.steps` updates have been applied, calling
    /// `on_step` after each one.
    pub fn run(&mut self, mut on_step: impl FnMut(&Trainer, &StepMetrics) -> Result<()>) -> Result<Vec<StepMetrics>> {
        let mut log = Vec::new();
        while (self.adam.step as usize) < self.config.steps {
            let m = self.train_step()?;
            on_step(self, &m)?;
            log.push(m);
        }
        Ok(log)
    }

    /// Batch-mean objective of the current weights over `indices`, without
    /// touching gradients.
    pub fn objective(model: &GMemModel, data: &[PreparedExample], config: &TrainConfig) -> Result<f64> {
        let options = LoopOptions {
            mode: config.mode,
            bptt_window: config.bptt_window,
            reset_each_segment: false,
        };
        let mut total = 0.0;
        for ex in data {
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let ep = Self::episode_loss(model, &mut tape, &vars, ex, config, options)?;
            total += tape.value(ep.total).item();
        }
        Ok(total / data.len() as f64)
    }

    pub fn prepared(&self) -> &[PreparedExample] {
        &self.data
    }

    pub fn into_model(self) -> GMemModel {
        self.model
    }
}
