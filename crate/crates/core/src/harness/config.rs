use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::backbone::BackboneConfig;
use crate::error::{GmemError, Result};
use crate::memory_bank::MemoryConfig;
use crate::memory_loop::MemoryMode;
use crate::tasks::{TaskConfig, TaskKind};
use crate::training::{AdamConfig, Supervision, TrainConfig};

/// Every knob of a run, as read from a flat `key = value` file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: TaskConfig,
    pub backbone: BackboneConfig,
    pub pretrain_steps: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch: usize,
    pub pretrain_seed: u64,
    pub memory: MemoryConfig,
    pub injection_seed: u64,
    pub train: TrainConfig,
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
}

/// `(key, default, description)` for every accepted key, in file order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("task", "bridge", "bridge | relation | copy"),
    ("entities", "32", "entity ids, taken from the top of the vocabulary"),
    ("relations", "8", "relation ids"),
    ("hops", "2", "fact-chain length for bridge recall"),
    ("distractors", "4", "distractor facts per fact segment"),
    ("gap", "2", "segments between the first fact segment and the query segment"),
    ("filler_len", "12", "tokens per filler segment"),
    ("train_examples", "2000", "training episodes"),
    ("test_examples", "500", "test episodes"),
    ("data_seed", "1", "task generator seed"),
    ("vocab_size", "64", "backbone vocabulary"),
    ("hidden", "32", "backbone width"),
    ("layers", "2", "backbone blocks"),
    ("heads", "2", "attention heads per block"),
    ("max_seg_len", "16", "longest segment the backbone accepts"),
    ("mlp_width", "128", "backbone feed-forward width"),
    ("backbone_seed", "0", "backbone weight seed"),
    ("pretrain_steps", "2000", "segment-local LM steps on the backbone before freezing (0 = random backbone)"),
    ("pretrain_lr", "0.003", "backbone pretraining learning rate"),
    ("pretrain_batch", "16", "backbone pretraining batch size"),
    ("pretrain_seed", "5", "backbone pretraining sampling seed"),
    ("slots", "16", "memory slots S"),
    ("mem_dim", "4", "memory width D_m"),
    ("memory_seed", "1", "memory bank weight seed"),
    ("injection_seed", "2", "injection weight seed"),
    ("steps", "2000", "optimizer steps"),
    ("batch_size", "16", "episodes per step"),
    ("lr", "0.003", "Adam learning rate"),
    ("beta1", "0.9", "Adam first-moment decay"),
    ("beta2", "0.999", "Adam second-moment decay"),
    ("adam_eps", "1e-8", "Adam epsilon"),
    ("clip_norm", "1.0", "global gradient-norm clip"),
    ("lambda_s", "0.01", "slot sparsity weight"),
    ("lambda_e", "0.01", "slot entropy weight"),
    ("bptt_window", "0", "detach the slots every this many segments (0 = full episode)"),
    ("supervision", "answer", "answer | lm"),
    ("train_memory", "on", "on | overwrite-baseline"),
    ("shuffle_seed", "0", "mini-batch order seed"),
    ("checkpoint_every", "0", "write an intermediate checkpoint every this many steps (0 = final only)"),
    ("out_dir", "out", "output directory for train"),
];

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = RunConfig {
            task: TaskConfig::default(),
            backbone: BackboneConfig::default(),
            pretrain_steps: 0,
            pretrain_lr: 0.0,
            pretrain_batch: 0,
            pretrain_seed: 0,
            memory: MemoryConfig {
                slots: 0,
                mem_dim: 0,
                model_hidden: 0,
                seed: 0,
            },
            injection_seed: 0,
            train: TrainConfig::default(),
            checkpoint_every: 0,
            out_dir: PathBuf::new(),
        };
        for (k, v, _) in KEYS {
            cfg.set(k, v).expect("built-in defaults parse");
        }
        cfg
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| GmemError::Config(format!("bad value '{value}' for key '{key}'")))
}

fn mode_name(mode: MemoryMode) -> &'static str {
    match mode {
        MemoryMode::On => "on",
        MemoryMode::Off => "off",
        MemoryMode::Overwrite => "overwrite-baseline",
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "task" => self.task.kind = v.parse()?,
            "entities" => self.task.entities = parse(key, v)?,
            "relations" => self.task.relations = parse(key, v)?,
            "hops" => self.task.hops = parse(key, v)?,
            "distractors" => self.task.distractors = parse(key, v)?,
            "gap" => self.task.gap = parse(key, v)?,
            "filler_len" => self.task.filler_len = parse(key, v)?,
            "train_examples" => self.task.train_examples = parse(key, v)?,
            "test_examples" => self.task.test_examples = parse(key, v)?,
            "data_seed" => self.task.seed = parse(key, v)?,
            "vocab_size" => self.backbone.vocab_size = parse(key, v)?,
            "hidden" => self.backbone.hidden = parse(key, v)?,
            "layers" => self.backbone.layers = parse(key, v)?,
            "heads" => self.backbone.heads = parse(key, v)?,
            "max_seg_len" => self.backbone.max_seg_len = parse(key, v)?,
            "mlp_width" => self.backbone.mlp_width = parse(key, v)?,
            "backbone_seed" => self.backbone.seed = parse(key, v)?,
            "pretrain_steps" => self.pretrain_steps = parse(key, v)?,
            "pretrain_lr" => self.pretrain_lr = parse(key, v)?,
            "pretrain_batch" => self.pretrain_batch = parse(key, v)?,
            "pretrain_seed" => self.pretrain_seed = parse(key, v)?,
            "slots" => self.memory.slots = parse(key, v)?,
            "mem_dim" => self.memory.mem_dim = parse(key, v)?,
            "memory_seed" => self.memory.seed = parse(key, v)?,
            "injection_seed" => self.injection_seed = parse(key, v)?,
            "steps" => self.train.steps = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "lr" => self.train.adam.lr = parse(key, v)?,
            "beta1" => self.train.adam.beta1 = parse(key, v)?,
            "beta2" => self.train.adam.beta2 = parse(key, v)?,
            "adam_eps" => self.train.adam.eps = parse(key, v)?,
            "clip_norm" => self.train.clip_norm = parse(key, v)?,
            "lambda_s" => self.train.lambda_s = parse(key, v)?,
            "lambda_e" => self.train.lambda_e = parse(key, v)?,
            "bptt_window" => self.train.bptt_window = parse(key, v)?,
            "supervision" => self.train.supervision = v.parse()?,
            "train_memory" => self.train.mode = v.parse()?,
            "shuffle_seed" => self.train.shuffle_seed = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            other => return Err(GmemError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = match key {
            "task" => self.task.kind.name().to_string(),
            "entities" => self.task.entities.to_string(),
            "relations" => self.task.relations.to_string(),
            "hops" => self.task.hops.to_string(),
            "distractors" => self.task.distractors.to_string(),
            "gap" => self.task.gap.to_string(),
            "filler_len" => self.task.filler_len.to_string(),
            "train_examples" => self.task.train_examples.to_string(),
            "test_examples" => self.task.test_examples.to_string(),
            "data_seed" => self.task.seed.to_string(),
            "vocab_size" => self.backbone.vocab_size.to_string(),
            "hidden" => self.backbone.hidden.to_string(),
            "layers" => self.backbone.layers.to_string(),
            "heads" => self.backbone.heads.to_string(),
            "max_seg_len" => self.backbone.max_seg_len.to_string(),
            "mlp_width" => self.backbone.mlp_width.to_string(),
            "backbone_seed" => self.backbone.seed.to_string(),
            "pretrain_steps" => self.pretrain_steps.to_string(),
            "pretrain_lr" => self.pretrain_lr.to_string(),
            "pretrain_batch" => self.pretrain_batch.to_string(),
            "pretrain_seed" => self.pretrain_seed.to_string(),
            "slots" => self.memory.slots.to_string(),
            "mem_dim" => self.memory.mem_dim.to_string(),
            "memory_seed" => self.memory.seed.to_string(),
            "injection_seed" => self.injection_seed.to_string(),
            "steps" => self.train.steps.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "lr" => self.train.adam.lr.to_string(),
            "beta1" => self.train.adam.beta1.to_string(),
            "beta2" => self.train.adam.beta2.to_string(),
            "adam_eps" => self.train.adam.eps.to_string(),
            "clip_norm" => self.train.clip_norm.to_string(),
            "lambda_s" => self.train.lambda_s.to_string(),
            "lambda_e" => self.train.lambda_e.to_string(),
            "bptt_window" => self.train.bptt_window.to_string(),
            "supervision" => match self.train.supervision {
                Supervision::Answer => "answer".to_string(),
                Supervision::Lm => "lm".to_string(),
            },
            "train_memory" => mode_name(self.train.mode).to_string(),
            "shuffle_seed" => self.train.shuffle_seed.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            _ => return None,
        };
        Some(s)
    }

    /// Parses config text on top of the defaults. Later lines win.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| GmemError::Config(format!("line {}: expected 'key = value', got '{raw}'", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| GmemError::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A missing or unreadable file is a config error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GmemError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical text form: every key, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, _, _) in KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k).expect("known key"));
        }
        out
    }

    /// Documented defaults, suitable as a starting config file.
    pub fn defaults_text() -> String {
        let d = RunConfig::default();
        let mut out = String::new();
        for (k, _, doc) in KEYS {
            let _ = writeln!(out, "# {doc}\n{k} = {}", d.get(k).expect("known key"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let mut task = self.task.clone();
        task.vocab_size = self.backbone.vocab_size;
        task.max_seg_len = self.backbone.max_seg_len;
        task.validate()?;
        self.backbone.validate()?;
        self.memory_config().validate()?;
        self.train.validate()?;
        if self.pretrain_steps > 0 && (self.pretrain_batch == 0 || !(self.pretrain_lr > 0.0)) {
            return Err(GmemError::Config("pretraining needs a positive batch and learning rate".into()));
        }
        Ok(())
    }

    /// Task settings with the vocabulary and segment length of the backbone.
    pub fn task_config(&self) -> TaskConfig {
        TaskConfig {
            vocab_size: self.backbone.vocab_size,
            max_seg_len: self.backbone.max_seg_len,
            ..self.task.clone()
        }
    }

    pub fn memory_config(&self) -> MemoryConfig {
        MemoryConfig {
            model_hidden: self.backbone.hidden,
            ..self.memory
        }
    }

    pub fn adam(&self) -> AdamConfig {
        self.train.adam
    }

    pub fn is_copy(&self) -> bool {
        self.task.kind == TaskKind::LongCopy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let d = RunConfig::default();
        assert_eq!(RunConfig::parse(&d.to_text()).unwrap(), d);
        assert_eq!(RunConfig::parse(&RunConfig::defaults_text()).unwrap(), d);
    }

    #[test]
    fn every_key_has_a_getter() {
        let d = RunConfig::default();
        for (k, v, _) in KEYS {
            assert!(!d.get(k).unwrap().is_empty(), "{k}");
            let mut c = d.clone();
            c.set(k, v).unwrap();
            assert_eq!(c, d, "{k}");
        }
    }

    #[test]
    fn comments_and_overrides() {
        let c = RunConfig::parse("# hi\nslots = 8  # fewer\n\nlambda_e=0.05\n").unwrap();
        assert_eq!(c.memory.slots, 8);
        assert_eq!(c.train.lambda_e, 0.05);
    }

    #[test]
    fn rejects_unknown_keys_and_garbage() {
        assert!(matches!(RunConfig::parse("slot = 4"), Err(GmemError::Config(_))));
        assert!(matches!(RunConfig::parse("slots 4"), Err(GmemError::Config(_))));
        assert!(matches!(RunConfig::parse("slots = four"), Err(GmemError::Config(_))));
        assert!(matches!(RunConfig::parse("lambda_s = -1"), Err(GmemError::Config(_))));
    }
}
