//! Seeded synthetic tasks whose answers can only be recovered by carrying
//! information across segment boundaries, and the dataset text format.
//!
//! Token alphabet (ids are assigned from 0 upward):
//! `PAD QUERY SEP MARK ANSWER`, then `relations` relation ids, then filler
//! ids, then the last `entities` ids of the vocabulary are entities.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GmemError, Result};
use crate::memory_loop::{GMemModel, LoopOptions, MemoryMode};
use crate::numerics::Tensor;

pub const PAD: usize = 0;
pub const QUERY: usize = 1;
pub const SEP: usize = 2;
pub const MARK: usize = 3;
pub const ANSWER: usize = 4;
const RESERVED: usize = 5;
const MIN_FILLERS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TaskKind {
    /// Multi-hop chain `A r1 B`, `B r2 C`, ... queried as `A r1 r2 ?`.
    #[default]
    Bridge,
    /// Single-relation lookup with held-out subject/relation pairs at test time.
    Relation,
    /// Reproduce a marked token after a horizon of filler segments.
    LongCopy,
}

impl std::str::FromStr for TaskKind {
    type Err = GmemError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bridge" => Ok(TaskKind::Bridge),
            "relation" => Ok(TaskKind::Relation),
            "copy" | "long_copy" => Ok(TaskKind::LongCopy),
            other => Err(GmemError::Config(format!("unknown task '{other}'"))),
        }
    }
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Bridge => "bridge",
            TaskKind::Relation => "relation",
            TaskKind::LongCopy => "copy",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub vocab_size: usize,
    pub max_seg_len: usize,
    pub entities: usize,
    pub relations: usize,
    pub hops: usize,
    pub distractors: usize,
    /// Segments between the first fact segment and the query segment.
    pub gap: usize,
    pub filler_len: usize,
    pub train_examples: usize,
    pub test_examples: usize,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            kind: TaskKind::Bridge,
            vocab_size: 64,
            max_seg_len: 16,
            entities: 32,
            relations: 8,
            hops: 2,
            distractors: 4,
            gap: 2,
            filler_len: 12,
            train_examples: 2000,
            test_examples: 500,
            seed: 1,
        }
    }
}

/// Where each token class lives in the vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alphabet {
    pub relations: (usize, usize),
    pub fillers: (usize, usize),
    pub entities: (usize, usize),
}

impl Alphabet {
    pub fn is_entity(&self, t: usize) -> bool {
        (self.entities.0..self.entities.1).contains(&t)
    }

    pub fn is_relation(&self, t: usize) -> bool {
        (self.relations.0..self.relations.1).contains(&t)
    }

    pub fn is_filler(&self, t: usize) -> bool {
        (self.fillers.0..self.fillers.1).contains(&t)
    }
}

impl TaskConfig {
    pub fn alphabet(&self) -> Alphabet {
        let rel_end = RESERVED + self.relations;
        let ent_start = self.vocab_size.saturating_sub(self.entities);
        Alphabet {
            relations: (RESERVED, rel_end),
            fillers: (rel_end, ent_start),
            entities: (ent_start, self.vocab_size),
        }
    }

    /// Length of the final segment.
    fn query_len(&self) -> usize {
        match self.kind {
            TaskKind::Bridge => 3 + self.hops + 1,
            TaskKind::Relation => 5,
            TaskKind::LongCopy => 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(GmemError::Config(m));
        if self.hops == 0 {
            return err("hops must be >= 1".into());
        }
        if self.relations == 0 {
            return err("need at least one relation id".into());
        }
        if RESERVED + self.relations + MIN_FILLERS + self.entities > self.vocab_size {
            return err(format!(
                "vocabulary of {} cannot hold {} reserved, {} relation, {} filler and {} entity ids",
                self.vocab_size, RESERVED, self.relations, MIN_FILLERS, self.entities
            ));
        }
        if self.filler_len == 0 || self.filler_len > self.max_seg_len {
            return err(format!("filler_len must be in 1..={}", self.max_seg_len));
        }
        if self.query_len() > self.max_seg_len {
            return err(format!("query segment of {} tokens exceeds max_seg_len", self.query_len()));
        }
        let facts_len = 3 * (1 + self.distractors);
        match self.kind {
            TaskKind::Bridge => {
                if self.gap < self.hops {
                    return err(format!("gap {} is shorter than the {} fact segments", self.gap, self.hops));
                }
                if facts_len > self.max_seg_len {
                    return err(format!("{} distractors do not fit a segment of {}", self.distractors, self.max_seg_len));
                }
                let needed = self.hops + 1 + 2 * self.distractors * self.hops;
                if needed > self.entities {
                    return err(format!("{needed} distinct entities needed, only {} available", self.entities));
                }
            }
            TaskKind::Relation => {
                if self.gap == 0 {
                    return err("relation recall needs gap >= 1".into());
                }
                if facts_len > self.max_seg_len {
                    return err(format!("{} distractors do not fit a segment of {}", self.distractors, self.max_seg_len));
                }
                if 2 * (1 + self.distractors) > self.entities {
                    return err(format!("{} entities cannot supply {} facts", self.entities, 1 + self.distractors));
                }
                if self.entities * self.relations < 5 {
                    return err("too few subject/relation pairs to hold some out".into());
                }
            }
            TaskKind::LongCopy => {
                if self.gap == 0 && self.filler_len + self.query_len() > self.max_seg_len {
                    return err("single-segment copy does not fit max_seg_len".into());
                }
                if self.filler_len < 2 && self.gap > 0 {
                    return err("copy source segment needs filler_len >= 2".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticExample {
    pub segments: Vec<Vec<usize>>,
    /// Indices into the final segment.
    pub answer_positions: Vec<usize>,
    pub answer_tokens: Vec<usize>,
    /// Ordered `key:value` annotations.
    pub meta: Vec<(String, String)>,
}

impl SyntheticExample {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn hops(&self) -> usize {
        self.meta("hops").and_then(|v| v.parse().ok()).unwrap_or(1)
    }

    pub fn split(&self) -> Option<&str> {
        self.meta("split")
    }

    pub fn query_segment(&self) -> &[usize] {
        self.segments.last().map(|s| s.as_slice()).unwrap_or(&[])
    }

    /// Next-token targets and supervision mask of the final segment for
    /// answer-only training: row `p − 1` predicts the answer at `p`.
    pub fn answer_targets(&self) -> (Vec<usize>, Vec<bool>) {
        let q = self.query_segment();
        let mut targets: Vec<usize> = q.iter().skip(1).copied().collect();
        targets.push(PAD);
        let mut mask = vec![false; q.len()];
        for &p in &self.answer_positions {
            mask[p - 1] = true;
        }
        (targets, mask)
    }

    pub fn to_line(&self) -> String {
        let ids = |v: &[usize]| v.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ");
        let segs = self.segments.iter().map(|s| ids(s)).collect::<Vec<_>>().join(";");
        let meta = self.meta.iter().map(|(k, v)| format!("{k}:{v}")).collect::<Vec<_>>().join(",");
        format!(
            "segments={} answer_pos={} answer={} meta={}",
            segs,
            ids(&self.answer_positions),
            ids(&self.answer_tokens),
            meta
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let bad = |m: &str| GmemError::Format(format!("{m} in dataset line '{line}'"));
        let rest = line.strip_prefix("segments=").ok_or_else(|| bad("missing segments="))?;
        let (segs, rest) = rest.split_once(" answer_pos=").ok_or_else(|| bad("missing answer_pos="))?;
        let (pos, rest) = rest.split_once(" answer=").ok_or_else(|| bad("missing answer="))?;
        let (ans, meta) = rest.split_once(" meta=").ok_or_else(|| bad("missing meta="))?;
        let ids = |s: &str| -> Result<Vec<usize>> {
            s.split(' ')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<usize>().map_err(|_| bad("bad integer")))
                .collect()
        };
        let segments = segs.split(';').map(ids).collect::<Result<Vec<_>>>()?;
        let meta = if meta.is_empty() {
            Vec::new()
        } else {
            meta.split(',')
                .map(|kv| {
                    kv.split_once(':')
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .ok_or_else(|| bad("bad meta entry"))
                })
                .collect::<Result<Vec<_>>>()?
        };
        let ex = SyntheticExample {
            segments,
            answer_positions: ids(pos)?,
            answer_tokens: ids(ans)?,
            meta,
        };
        ex.check_shape()?;
        Ok(ex)
    }

    fn check_shape(&self) -> Result<()> {
        let q = self.query_segment();
        if self.segments.iter().any(|s| s.is_empty()) {
            return Err(GmemError::Format("empty segment".into()));
        }
        if self.answer_positions.len() != self.answer_tokens.len() || self.answer_positions.is_empty() {
            return Err(GmemError::Format("answer positions and tokens disagree".into()));
        }
        for (&p, &t) in self.answer_positions.iter().zip(&self.answer_tokens) {
            if p == 0 || p >= q.len() || q[p] != t {
                return Err(GmemError::Format(format!("answer position {p} does not hold token {t}")));
            }
        }
        Ok(())
    }
}

/// A generated dataset, both splits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub examples: Vec<SyntheticExample>,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Vec<SyntheticExample> {
        self.examples.iter().filter(|e| e.split() == Some(name)).cloned().collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let examples = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(SyntheticExample::parse_line)
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { examples })
    }

    pub fn max_token(&self) -> usize {
        self.examples
            .iter()
            .flat_map(|e| e.segments.iter().flatten())
            .copied()
            .max()
            .unwrap_or(0)
    }

    pub fn max_segment_len(&self) -> usize {
        self.examples
            .iter()
            .flat_map(|e| e.segments.iter().map(|s| s.len()))
            .max()
            .unwrap_or(0)
    }
}

/// SplitMix64 step, used to derive independent per-example seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn example_seed(base: u64, split: &str, index: usize) -> u64 {
    let tag = if split == "train" { 0x7472 } else { 0x7465 };
    mix(mix(base ^ tag).wrapping_add(index as u64))
}

fn filler(rng: &mut ChaCha8Rng, alpha: &Alphabet, len: usize) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(alpha.fillers.0..alpha.fillers.1)).collect()
}

fn base_meta(cfg: &TaskConfig, split: &str, seed: u64) -> Vec<(String, String)> {
    vec![
        ("task".into(), cfg.kind.name().into()),
        ("split".into(), split.into()),
        ("hops".into(), cfg.hops.to_string()),
        ("gap".into(), cfg.gap.to_string()),
        ("distractors".into(), cfg.distractors.to_string()),
        ("seed".into(), seed.to_string()),
    ]
}

fn join_ids(v: &[usize]) -> String {
    v.iter().map(|t| t.to_string()).collect::<Vec<_>>().join("/")
}

fn bridge_example(cfg: &TaskConfig, split: &str, seed: u64) -> SyntheticExample {
    let alpha = cfg.alphabet();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (alpha.entities.0..alpha.entities.1).collect();
    pool.shuffle(&mut rng);
    let mut pool = pool.into_iter();
    let chain: Vec<usize> = pool.by_ref().take(cfg.hops + 1).collect();
    let relations: Vec<usize> = (0..cfg.hops)
        .map(|_| rng.random_range(alpha.relations.0..alpha.relations.1))
        .collect();

    let mut segments = Vec::new();
    for hop in 0..cfg.hops {
        let mut facts = vec![[chain[hop], relations[hop], chain[hop + 1]]];
        for _ in 0..cfg.distractors {
            let (x, y) = (pool.next().expect("validated"), pool.next().expect("validated"));
            facts.push([x, rng.random_range(alpha.relations.0..alpha.relations.1), y]);
        }
        facts.shuffle(&mut rng);
        segments.push(facts.concat());
    }
    for _ in cfg.hops..cfg.gap {
        segments.push(filler(&mut rng, &alpha, cfg.filler_len));
    }
    let answer = chain[cfg.hops];
    let mut query = vec![QUERY, chain[0]];
    query.extend_from_slice(&relations);
    query.extend_from_slice(&[ANSWER, answer]);
    let pos = query.len() - 1;
    segments.push(query);

    let mut meta = base_meta(cfg, split, seed);
    meta.push(("bridge".into(), join_ids(&chain[1..cfg.hops])));
    meta.push(("chain".into(), join_ids(&chain)));
    SyntheticExample {
        segments,
        answer_positions: vec![pos],
        answer_tokens: vec![answer],
        meta,
    }
}

/// Subject/relation pairs reserved for the test split.
pub fn held_out_pairs(cfg: &TaskConfig) -> BTreeSet<(usize, usize)> {
    let alpha = cfg.alphabet();
    let mut pairs: Vec<(usize, usize)> = (alpha.entities.0..alpha.entities.1)
        .flat_map(|e| (alpha.relations.0..alpha.relations.1).map(move |r| (e, r)))
        .collect();
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(cfg.seed ^ 0x5e1d)));
    let n_test = (pairs.len() / 5).max(1);
    pairs.into_iter().take(n_test).collect()
}

fn relation_example(cfg: &TaskConfig, split: &str, seed: u64, held: &BTreeSet<(usize, usize)>) -> SyntheticExample {
    let alpha = cfg.alphabet();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entities: Vec<usize> = (alpha.entities.0..alpha.entities.1).collect();
    let relations: Vec<usize> = (alpha.relations.0..alpha.relations.1).collect();
    let want_held = split != "train";

    // Queried pair first: held-out for test, never held-out for train.
    let (subject, relation) = loop {
        let s = *entities.choose(&mut rng).expect("entities");
        let r = *relations.choose(&mut rng).expect("relations");
        if held.contains(&(s, r)) == want_held {
            break (s, r);
        }
    };
    let mut others: Vec<usize> = entities.iter().copied().filter(|&e| e != subject).collect();
    others.shuffle(&mut rng);
    let mut others = others.into_iter();
    let object = others.next().expect("validated");
    let mut facts = vec![[subject, relation, object]];
    while facts.len() < 1 + cfg.distractors {
        let s = others.next().expect("validated");
        let r = loop {
            let r = *relations.choose(&mut rng).expect("relations");
            if want_held || !held.contains(&(s, r)) {
                break r;
            }
        };
        let o = others.next().expect("validated");
        facts.push([s, r, o]);
    }
    facts.shuffle(&mut rng);

    let mut segments = vec![facts.concat()];
    for _ in 1..cfg.gap {
        segments.push(filler(&mut rng, &alpha, cfg.filler_len));
    }
    segments.push(vec![QUERY, subject, relation, ANSWER, object]);
    let mut meta = base_meta(cfg, split, seed);
    meta[2].1 = "1".into();
    meta.push(("pair".into(), format!("{subject}/{relation}")));
    SyntheticExample {
        segments,
        answer_positions: vec![4],
        answer_tokens: vec![object],
        meta,
    }
}

fn copy_example(cfg: &TaskConfig, split: &str, seed: u64) -> SyntheticExample {
    let alpha = cfg.alphabet();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let marked = rng.random_range(alpha.entities.0..alpha.entities.1);
    let mut source = filler(&mut rng, &alpha, cfg.filler_len);
    let at = rng.random_range(0..source.len() - 1);
    source[at] = MARK;
    source[at + 1] = marked;
    let query = [QUERY, MARK, ANSWER, marked];

    let mut segments = Vec::new();
    if cfg.gap == 0 {
        let mut seg = source;
        seg.extend_from_slice(&query);
        segments.push(seg);
    } else {
        segments.push(source);
        for _ in 1..cfg.gap {
            segments.push(filler(&mut rng, &alpha, cfg.filler_len));
        }
        segments.push(query.to_vec());
    }
    let pos = segments.last().expect("non-empty").len() - 1;
    let mut meta = base_meta(cfg, split, seed);
    meta[2].1 = "1".into();
    SyntheticExample {
        segments,
        answer_positions: vec![pos],
        answer_tokens: vec![marked],
        meta,
    }
}

fn generate_split(cfg: &TaskConfig, split: &str, count: usize, held: &BTreeSet<(usize, usize)>) -> Vec<SyntheticExample> {
    (0..count)
        .map(|i| {
            let seed = example_seed(cfg.seed, split, i);
            match cfg.kind {
                TaskKind::Bridge => bridge_example(cfg, split, seed),
                TaskKind::Relation => relation_example(cfg, split, seed, held),
                TaskKind::LongCopy => copy_example(cfg, split, seed),
            }
        })
        .collect()
}

fn generate(cfg: &TaskConfig) -> Result<Dataset> {
    cfg.validate()?;
    let held = if cfg.kind == TaskKind::Relation {
        held_out_pairs(cfg)
    } else {
        BTreeSet::new()
    };
    let mut examples = generate_split(cfg, "train", cfg.train_examples, &held);
    examples.extend(generate_split(cfg, "test", cfg.test_examples, &held));
    Ok(Dataset { examples })
}

pub fn gen_bridge_recall(cfg: &TaskConfig) -> Result<Dataset> {
    generate(&TaskConfig {
        kind: TaskKind::Bridge,
        ..cfg.clone()
    })
}

pub fn gen_relation_recall(cfg: &TaskConfig) -> Result<Dataset> {
    generate(&TaskConfig {
        kind: TaskKind::Relation,
        ..cfg.clone()
    })
}

pub fn gen_long_copy(cfg: &TaskConfig) -> Result<Dataset> {
    generate(&TaskConfig {
        kind: TaskKind::LongCopy,
        ..cfg.clone()
    })
}

pub fn generate_task(cfg: &TaskConfig) -> Result<Dataset> {
    generate(cfg)
}

/// Accuracy summary of a model on a set of examples.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalMetrics {
    pub examples: usize,
    pub exact_match: f64,
    pub token_f1: f64,
    pub per_hop: BTreeMap<usize, f64>,
    /// Entropy of the importance distribution averaged over episodes.
    pub slot_entropy: f64,
    /// Mean `|s_i|` over slots and episodes.
    pub mean_abs_score: f64,
}

/// Harmonic mean of multiset precision and recall.
pub fn token_f1(predicted: &[usize], gold: &[usize]) -> f64 {
    if predicted.is_empty() || gold.is_empty() {
        return if predicted == gold { 1.0 } else { 0.0 };
    }
    let mut counts: BTreeMap<usize, isize> = BTreeMap::new();
    for &g in gold {
        *counts.entry(g).or_default() += 1;
    }
    let mut common = 0;
    for &p in predicted {
        let c = counts.entry(p).or_default();
        if *c > 0 {
            *c -= 1;
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / predicted.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// EM, token F1 and per-hop EM from predicted answer sequences.
pub fn score_predictions(examples: &[SyntheticExample], predictions: &[Vec<usize>]) -> (f64, f64, BTreeMap<usize, f64>) {
    let n = examples.len().max(1) as f64;
    let mut em = 0.0;
    let mut f1 = 0.0;
    let mut hops: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for (ex, pred) in examples.iter().zip(predictions) {
        let hit = if *pred == ex.answer_tokens { 1.0 } else { 0.0 };
        em += hit;
        f1 += token_f1(pred, &ex.answer_tokens);
        let e = hops.entry(ex.hops()).or_default();
        e.0 += hit;
        e.1 += 1.0;
    }
    let per_hop = hops.into_iter().map(|(h, (c, t))| (h, c / t)).collect();
    (em / n, f1 / n, per_hop)
}

/// Greedy argmax answers (teacher-forced on the query segment) for every
/// example, plus the per-episode slot diagnostics.
pub fn predict(model: &GMemModel, examples: &[SyntheticExample], mode: MemoryMode) -> Result<(Vec<Vec<usize>>, Vec<Tensor>)> {
    let mut preds = Vec::with_capacity(examples.len());
    let mut scores = Vec::with_capacity(examples.len());
    let options = LoopOptions {
        mode,
        ..LoopOptions::default()
    };
    for ex in examples {
        let out = model.run_episode(&ex.segments, options)?;
        let logits = out.logits.last().expect("non-empty episode");
        preds.push(ex.answer_positions.iter().map(|&p| logits.argmax_row(p - 1)).collect());
        let mut s = Tensor::zeros(&[1, model.memory.config().slots]);
        for seg in &out.scores {
            s.add_assign(&seg.s)?;
        }
        scores.push(s.scale(1.0 / out.scores.len() as f64));
    }
    Ok((preds, scores))
}

pub fn evaluate(model: &GMemModel, examples: &[SyntheticExample], mode: MemoryMode) -> Result<EvalMetrics> {
    check_compatible(model, examples)?;
    let (preds, scores) = predict(model, examples, mode)?;
    let (exact_match, token_f1, per_hop) = score_predictions(examples, &preds);
    let (slot_entropy, mean_abs_score) = slot_usage(&scores)?;
    Ok(EvalMetrics {
        examples: examples.len(),
        exact_match,
        token_f1,
        per_hop,
        slot_entropy,
        mean_abs_score,
    })
}

/// Entropy of the mean importance distribution and mean absolute raw score.
pub fn slot_usage(episode_scores: &[Tensor]) -> Result<(f64, f64)> {
    let Some(first) = episode_scores.first() else {
        return Ok((0.0, 0.0));
    };
    let mut p_mean = Tensor::zeros(first.shape());
    let mut abs_total = 0.0;
    for s in episode_scores {
        p_mean.add_assign(&s.softmax_rows()?)?;
        abs_total += s.data().iter().map(|v| v.abs()).sum::<f64>() / s.numel() as f64;
    }
    let n = episode_scores.len() as f64;
    let entropy = -p_mean
        .data()
        .iter()
        .map(|&v| v / n)
        .filter(|&v| v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>();
    Ok((entropy, abs_total / n))
}

pub fn check_compatible(model: &GMemModel, examples: &[SyntheticExample]) -> Result<()> {
    let cfg = model.backbone.config();
    for ex in examples {
        for seg in &ex.segments {
            if seg.len() > cfg.max_seg_len {
                return Err(GmemError::Config(format!(
                    "dataset segment of {} tokens exceeds model max_seg_len {}",
                    seg.len(),
                    cfg.max_seg_len
                )));
            }
            if let Some(&t) = seg.iter().find(|&&t| t >= cfg.vocab_size) {
                return Err(GmemError::Config(format!(
                    "dataset token {t} outside model vocabulary {}",
                    cfg.vocab_size
                )));
            }
        }
    }
    Ok(())
}

/// Human-readable one-line summary.
pub fn describe(m: &EvalMetrics) -> String {
    let mut s = format!("examples={} EM={:.4} F1={:.4}", m.examples, m.exact_match, m.token_f1);
    for (h, acc) in &m.per_hop {
        let _ = write!(s, " hop{h}={acc:.4}");
    }
    s
}
