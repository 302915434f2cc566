//! Command implementations behind the `gmem` binary: dataset generation,
//! training with checkpoint/resume, evaluation, gradient checks and the slot
//! ablation. Everything here is deterministic given the config and seeds;
//! wall-clock values only go to `train.log` and the ablation's
//! `train_seconds` column.

pub mod checkpoint;
pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::{Backbone, BackboneConfig};
use crate::error::{GmemError, Result};
use crate::memory_bank::{MemoryBankParams, MemoryConfig};
use crate::memory_loop::{GMemModel, InjectionParams, MemoryMode};
use crate::numerics::gradcheck::{finite_difference_grad, max_normalized_error, ABS_FLOOR, DEFAULT_FD_EPS, REL_TOL};
use crate::numerics::{normal_tensor, Tensor};
use crate::tasks::{self, Dataset, EvalMetrics, SyntheticExample};
use crate::training::optim::Moments;
use crate::training::{Supervision, TrainConfig, Trainer, METRICS_HEADER};

pub use checkpoint::Checkpoint;
pub use config::RunConfig;

pub const CHECKPOINT_FILE: &str = "checkpoint.gmem";
pub const METRICS_FILE: &str = "metrics.csv";
pub const LOG_FILE: &str = "train.log";
pub const EVAL_HEADER: &str = "memory,scope,examples,exact_match,token_f1,slot_entropy,mean_abs_score";
pub const ABLATION_HEADER: &str = "slots,em,f1,train_seconds,param_count";

/// Generates the configured task and writes it to `out`.
pub fn generate(cfg: &RunConfig, out: &Path) -> Result<Dataset> {
    let data = tasks::generate_task(&cfg.task_config())?;
    fs::write(out, data.to_text())?;
    Ok(data)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    Dataset::parse(&text)
}

/// Backbone for a run: seeded, optionally pretrained on the segments of
/// `corpus`, always frozen on return.
pub fn build_backbone(cfg: &RunConfig, corpus: &[SyntheticExample]) -> Result<Backbone> {
    let mut backbone = Backbone::new(cfg.backbone.clone())?;
    if cfg.pretrain_steps > 0 {
        let segments: Vec<Vec<usize>> = corpus.iter().flat_map(|e| e.segments.iter().cloned()).collect();
        let loss = backbone.pretrain(&segments, cfg.pretrain_steps, cfg.pretrain_batch, cfg.pretrain_lr, cfg.pretrain_seed)?;
        log::info!("backbone pretrained for {} steps, final loss {loss:.4}", cfg.pretrain_steps);
    }
    Ok(backbone)
}

/// Fresh model for `cfg` around an existing backbone.
pub fn build_model(cfg: &RunConfig, backbone: Backbone) -> Result<GMemModel> {
    let memory = MemoryBankParams::new(cfg.memory_config())?;
    let injection = InjectionParams::new(cfg.backbone.hidden, cfg.injection_seed);
    GMemModel::new(backbone, memory, injection)
}

/// All weights plus, when given, the optimizer moments.
pub fn checkpoint_of(cfg: &RunConfig, model: &GMemModel, trainer: Option<&Trainer>) -> Checkpoint {
    let mut tensors: Vec<(String, Tensor)> = Vec::new();
    for store in [model.backbone.params(), model.memory.store(), model.injection.store()] {
        tensors.extend(store.iter().map(|p| (p.name.clone(), p.value.clone())));
    }
    if let Some(t) = trainer {
        for m in &t.adam.moments {
            tensors.push((format!("adam.m.{}", m.name), m.m.clone()));
            tensors.push((format!("adam.v.{}", m.name), m.v.clone()));
        }
    }
    Checkpoint {
        step: trainer.map_or(0, |t| t.step()),
        config: cfg.to_text(),
        tensors,
    }
}

fn model_tensors(ck: &Checkpoint, prefix: &str) -> Vec<(String, Tensor)> {
    ck.tensors
        .iter()
        .filter(|(n, _)| n.starts_with(prefix))
        .cloned()
        .collect()
}

/// Rebuilds the model stored in `ck`. The checkpoint's own config decides
/// the architecture.
pub fn model_from_checkpoint(ck: &Checkpoint) -> Result<(RunConfig, GMemModel)> {
    let cfg = RunConfig::parse(&ck.config)?;
    let mut backbone = Backbone::new(cfg.backbone.clone())?;
    backbone.load(&model_tensors(ck, "backbone."))?;
    let mut model = build_model(&cfg, backbone)?;
    model.memory.store_mut().load_values(&model_tensors(ck, "memory."))?;
    model.injection.store_mut().load_values(&model_tensors(ck, "inject."))?;
    Ok((cfg, model))
}

fn restore_optimizer(trainer: &mut Trainer, ck: &Checkpoint) -> Result<()> {
    for Moments { name, m, v } in trainer.adam.moments.iter_mut() {
        let find = |kind: &str| {
            ck.get(&format!("adam.{kind}.{name}"))
                .cloned()
                .ok_or_else(|| GmemError::Format(format!("checkpoint lacks optimizer state for {name}")))
        };
        let (cm, cv) = (find("m")?, find("v")?);
        if cm.shape() != m.shape() || cv.shape() != v.shape() {
            return Err(GmemError::Format(format!("optimizer state for {name} has the wrong shape")));
        }
        *m = cm;
        *v = cv;
    }
    trainer.adam.step = ck.step;
    Ok(())
}

/// Configs that differ only in how long to train or where to write.
fn same_run(a: &RunConfig, b: &RunConfig) -> bool {
    let strip = |c: &RunConfig| {
        let mut c = c.clone();
        c.train.steps = 0;
        c.checkpoint_every = 0;
        c.out_dir = PathBuf::new();
        c
    };
    strip(a) == strip(b)
}

fn train_split(data: &Dataset) -> Result<Vec<SyntheticExample>> {
    let train = data.split("train");
    if train.is_empty() {
        return Err(GmemError::Input("dataset has no training examples".into()));
    }
    Ok(train)
}

/// Summary of a finished `train` invocation.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: GMemModel,
    pub final_step: u64,
    pub checkpoint: PathBuf,
}

/// Trains per `cfg` on the training split of `data`, writing
/// `metrics.csv`, periodic and final checkpoints, and `train.log` into
/// `out_dir`. With `resume`, the model, optimizer moments and step counter
/// come from that checkpoint and metrics rows after its step are rewritten.
pub fn train(cfg: &RunConfig, data: &Dataset, out_dir: &Path, resume: Option<&Path>) -> Result<TrainOutcome> {
    let examples = train_split(data)?;
    fs::create_dir_all(out_dir)?;
    let started = Instant::now();

    let (model, resumed) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let (ck_cfg, model) = model_from_checkpoint(&ck)?;
            if !same_run(&ck_cfg, cfg) {
                return Err(GmemError::Config(format!(
                    "checkpoint {} was written under a different config",
                    path.display()
                )));
            }
            (model, Some(ck))
        }
        None => (build_model(cfg, build_backbone(cfg, &examples)?)?, None),
    };

    let mut trainer = Trainer::new(model, cfg.train.clone(), &examples)?;
    let mut rows: Vec<String> = Vec::new();
    let metrics_path = out_dir.join(METRICS_FILE);
    if let Some(ck) = &resumed {
        restore_optimizer(&mut trainer, ck)?;
        if let Ok(old) = fs::read_to_string(&metrics_path) {
            rows.extend(old.lines().skip(1).filter(|l| {
                l.split(',').next().and_then(|s| s.parse::<u64>().ok()).is_some_and(|s| s <= ck.step)
            }).map(String::from));
        }
    }

    let mut log_file = fs::OpenOptions::new().create(true).append(true).open(out_dir.join(LOG_FILE))?;
    let _ = writeln!(
        log_file,
        "start step={} unix={}",
        trainer.step(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    );

    let every = cfg.checkpoint_every;
    let mut periodic: Vec<(u64, Checkpoint)> = Vec::new();
    trainer.run(|t, m| {
        rows.push(m.csv_row());
        if every > 0 && m.step % every as u64 == 0 && m.step < cfg.train.steps as u64 {
            periodic.push((m.step, checkpoint_of(cfg, &t.model, Some(t))));
        }
        if m.step % 100 == 0 {
            log::info!("step {} loss {:.4} acc {:.3}", m.step, m.loss.total, m.answer_acc);
        }
        Ok(())
    })?;

    for (step, ck) in &periodic {
        ck.save(&out_dir.join(format!("checkpoint-{step}.gmem")))?;
    }
    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(r);
        csv.push('\n');
    }
    fs::write(&metrics_path, csv)?;
    let final_path = out_dir.join(CHECKPOINT_FILE);
    checkpoint_of(cfg, &trainer.model, Some(&trainer)).save(&final_path)?;
    let _ = writeln!(
        log_file,
        "done step={} seconds={:.3}",
        trainer.step(),
        started.elapsed().as_secs_f64()
    );
    Ok(TrainOutcome {
        final_step: trainer.step(),
        model: trainer.into_model(),
        checkpoint: final_path,
    })
}

/// Evaluation of one checkpoint on one split.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub mode: MemoryMode,
    pub metrics: EvalMetrics,
}

fn mode_label(mode: MemoryMode) -> &'static str {
    match mode {
        MemoryMode::On => "on",
        MemoryMode::Off => "off",
        MemoryMode::Overwrite => "overwrite-baseline",
    }
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let m = &self.metrics;
        let label = mode_label(self.mode);
        let mut out = format!("{EVAL_HEADER}\n");
        let _ = writeln!(
            out,
            "{label},all,{},{},{},{},{}",
            m.examples, m.exact_match, m.token_f1, m.slot_entropy, m.mean_abs_score
        );
        for (hop, em) in &m.per_hop {
            let _ = writeln!(out, "{label},hops={hop},,{em},,,");
        }
        out
    }

    pub fn summary(&self) -> String {
        let m = &self.metrics;
        format!(
            "memory {}: {} examples, EM {:.4}, F1 {:.4}, slot entropy {:.4}, mean |s| {:.4}",
            mode_label(self.mode),
            m.examples,
            m.exact_match,
            m.token_f1,
            m.slot_entropy,
            m.mean_abs_score
        )
    }
}

/// Evaluates `model` on the `split` part of `data` under `mode`.
pub fn evaluate(model: &GMemModel, data: &Dataset, split: &str, mode: MemoryMode) -> Result<EvalReport> {
    let examples = data.split(split);
    if examples.is_empty() {
        return Err(GmemError::Input(format!("dataset has no '{split}' examples")));
    }
    tasks::check_compatible(model, &examples)?;
    Ok(EvalReport {
        mode,
        metrics: tasks::evaluate(model, &examples, mode)?,
    })
}

/// Smallest gradient-check configuration.
pub fn gradcheck_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.backbone = BackboneConfig {
        vocab_size: 16,
        hidden: 16,
        layers: 1,
        heads: 2,
        max_seg_len: 8,
        mlp_width: 32,
        seed: 11,
    };
    cfg.memory = MemoryConfig {
        slots: 4,
        mem_dim: 8,
        model_hidden: 16,
        seed: 12,
    };
    cfg.injection_seed = 13;
    cfg.train = TrainConfig {
        lambda_s: 0.1,
        lambda_e: 0.1,
        ..TrainConfig::default()
    };
    cfg
}

/// Max normalized error of one trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckRow {
    pub name: String,
    pub max_error: f64,
    pub passed: bool,
}

/// Two random 2-segment episodes on the smallest config, analytic gradients
/// of the composite loss against central differences for every trainable
/// tensor. `corrupt` perturbs one analytic gradient, to prove the check can
/// fail.
pub fn gradcheck(cfg: &RunConfig, corrupt: bool) -> Result<Vec<GradcheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.memory.seed ^ 0x6772);
    let v = cfg.backbone.vocab_size;
    let t = cfg.backbone.max_seg_len;
    let episodes: Vec<SyntheticExample> = (0..2)
        .map(|_| {
            let segments: Vec<Vec<usize>> = (0..2)
                .map(|_| (0..t).map(|_| rand::Rng::random_range(&mut rng, 0..v)).collect())
                .collect();
            let answer = segments[1][t - 1];
            SyntheticExample {
                segments,
                answer_positions: vec![t - 1],
                answer_tokens: vec![answer],
                meta: Vec::new(),
            }
        })
        .collect();
    let mut model = build_model(cfg, Backbone::new(cfg.backbone.clone())?)?;
    // Larger initial slots keep the consolidation attention away from the
    // uniform point, where some gradients vanish.
    let s = model.memory.get("initial_slots")?.shape().to_vec();
    model
        .memory
        .set("initial_slots", normal_tensor(&mut rng, &s, 0.5))?;
    let train_cfg = TrainConfig {
        supervision: Supervision::Lm,
        ..cfg.train.clone()
    };
    let mut trainer = Trainer::new(model, train_cfg.clone(), &episodes)?;
    trainer.accumulate_gradients(&[0, 1])?;
    let data = trainer.prepared().to_vec();
    let mut model = trainer.into_model();

    let mut rows = Vec::new();
    for which in 0..2 {
        let analytic: Vec<(String, Tensor)> = model.trainable_stores()[which]
            .iter()
            .map(|p| (p.name.clone(), p.grad.clone()))
            .collect();
        let mut store = model.trainable_stores()[which].clone();
        let numeric = finite_difference_grad(
            |s| {
                *model.trainable_stores_mut()[which] = s.clone();
                Trainer::objective(&model, &data, &train_cfg)
            },
            &mut store,
            DEFAULT_FD_EPS,
        )?;
        *model.trainable_stores_mut()[which] = store;
        for ((name, mut a), n) in analytic.into_iter().zip(numeric) {
            let n = n.ok_or_else(|| GmemError::Oracle(format!("no numeric gradient for {name}")))?;
            if corrupt && rows.is_empty() {
                a.data_mut()[0] += 1e-2 + a.data()[0].abs();
            }
            let err = max_normalized_error(&a, &n);
            rows.push(GradcheckRow {
                passed: crate::numerics::gradcheck::grads_match(&a, &n, REL_TOL, ABS_FLOOR),
                name,
                max_error: err,
            });
        }
    }
    Ok(rows)
}

/// `cfg` with the memory, injection and shuffle seeds offset by `seed`.
pub fn with_seed(cfg: &RunConfig, seed: u64) -> RunConfig {
    let mut run = cfg.clone();
    run.memory.seed = cfg.memory.seed.wrapping_add(seed);
    run.injection_seed = cfg.injection_seed.wrapping_add(seed);
    run.train.shuffle_seed = cfg.train.shuffle_seed.wrapping_add(seed);
    run
}

/// Builds a fresh model around `backbone` and trains it for `cfg.train.steps`.
pub fn train_on(cfg: &RunConfig, backbone: Backbone, examples: &[SyntheticExample]) -> Result<GMemModel> {
    let mut trainer = Trainer::new(build_model(cfg, backbone)?, cfg.train.clone(), examples)?;
    trainer.run(|_, _| Ok(()))?;
    Ok(trainer.into_model())
}

/// One row of the slot ablation, averaged over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub slots: usize,
    pub em: f64,
    pub f1: f64,
    pub train_seconds: f64,
    pub param_count: usize,
}

impl AblationRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.3},{}",
            self.slots, self.em, self.f1, self.train_seconds, self.param_count
        )
    }
}

/// Trains one model per slot count (and per seed) with otherwise shared
/// settings; returns rows sorted by slot count. Seeds go through
/// [`with_seed`]; the backbone is shared by all runs.
pub fn ablate_slots(cfg: &RunConfig, data: &Dataset, slots: &[usize], seeds: &[u64]) -> Result<Vec<AblationRow>> {
    if slots.is_empty() || seeds.is_empty() {
        return Err(GmemError::Config("need at least one slot count and one seed".into()));
    }
    let examples = train_split(data)?;
    let test = data.split("test");
    let backbone = build_backbone(cfg, &examples)?;
    let mut sorted = slots.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut rows = Vec::new();
    for &s in &sorted {
        let mut em = 0.0;
        let mut f1 = 0.0;
        let mut secs = 0.0;
        let mut params = 0;
        for &seed in seeds {
            let mut run = with_seed(cfg, seed);
            run.memory.slots = s;
            let start = Instant::now();
            let model = train_on(&run, backbone.clone(), &examples)?;
            secs += start.elapsed().as_secs_f64();
            params = model.memory.param_count();
            let m = tasks::evaluate(&model, &test, MemoryMode::On)?;
            em += m.exact_match;
            f1 += m.token_f1;
        }
        let n = seeds.len() as f64;
        rows.push(AblationRow {
            slots: s,
            em: em / n,
            f1: f1 / n,
            train_seconds: secs / n,
            param_count: params,
        });
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}
