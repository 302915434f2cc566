//! Small causal transformer used as the frozen feature extractor.
//!
//! Pre-LayerNorm blocks with multi-head causal self-attention and a ReLU MLP,
//! learned absolute positions that restart at every segment, and an LM head
//! tied to the token embedding. After construction every parameter is frozen.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{GmemError, Result};
use crate::numerics::{normal_tensor, Bound, ParamId, ParamStore, Parameter, Tape, Tensor, Var};
use crate::training::optim::{Adam, AdamConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_seg_len: usize,
    pub mlp_width: usize,
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            vocab_size: 64,
            hidden: 32,
            layers: 2,
            heads: 2,
            max_seg_len: 16,
            mlp_width: 128,
            seed: 0,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("heads", self.heads),
            ("max_seg_len", self.max_seg_len),
            ("mlp_width", self.mlp_width),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(GmemError::Config(format!("{name} must be positive")));
        }
        if self.hidden % self.heads != 0 {
            return Err(GmemError::Config(format!(
                "hidden size {} is not divisible by head count {}",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct LayerIds {
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Clone, Debug)]
pub struct Backbone {
    config: BackboneConfig,
    params: ParamStore,
    token_emb: ParamId,
    pos_emb: ParamId,
    layers: Vec<LayerIds>,
    lnf_gain: ParamId,
    lnf_bias: ParamId,
}

impl Backbone {
    /// Seeded random weights, frozen.
    pub fn new(config: BackboneConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (v, d, w) = (config.vocab_size, config.hidden, config.mlp_width);
        let mut params = ParamStore::new();
        let mut add = |name: String, t: Tensor| params.push(Parameter::new(name, t, false));

        let token_emb = add("backbone.token_emb".into(), normal_tensor(&mut rng, &[v, d], 0.5));
        let pos_emb = add("backbone.pos_emb".into(), normal_tensor(&mut rng, &[config.max_seg_len, d], 0.25));
        let proj_std = 1.0 / (d as f64).sqrt();
        let out_std = proj_std / (2.0 * config.layers as f64).sqrt();
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = |s: &str| format!("backbone.layer{l}.{s}");
            layers.push(LayerIds {
                ln1_gain: add(p("ln1.gain"), Tensor::full(&[1, d], 1.0)),
                ln1_bias: add(p("ln1.bias"), Tensor::zeros(&[1, d])),
                wq: add(p("attn.wq"), normal_tensor(&mut rng, &[d, d], proj_std)),
                bq: add(p("attn.bq"), Tensor::zeros(&[1, d])),
                wk: add(p("attn.wk"), normal_tensor(&mut rng, &[d, d], proj_std)),
                bk: add(p("attn.bk"), Tensor::zeros(&[1, d])),
                wv: add(p("attn.wv"), normal_tensor(&mut rng, &[d, d], proj_std)),
                bv: add(p("attn.bv"), Tensor::zeros(&[1, d])),
                wo: add(p("attn.wo"), normal_tensor(&mut rng, &[d, d], out_std)),
                bo: add(p("attn.bo"), Tensor::zeros(&[1, d])),
                ln2_gain: add(p("ln2.gain"), Tensor::full(&[1, d], 1.0)),
                ln2_bias: add(p("ln2.bias"), Tensor::zeros(&[1, d])),
                w1: add(p("mlp.w1"), normal_tensor(&mut rng, &[d, w], proj_std)),
                b1: add(p("mlp.b1"), Tensor::zeros(&[1, w])),
                w2: add(p("mlp.w2"), normal_tensor(&mut rng, &[w, d], out_std * (d as f64 / w as f64).sqrt())),
                b2: add(p("mlp.b2"), Tensor::zeros(&[1, d])),
            });
        }
        let lnf_gain = add("backbone.lnf.gain".into(), Tensor::full(&[1, d], 1.0));
        let lnf_bias = add("backbone.lnf.bias".into(), Tensor::zeros(&[1, d]));
        Ok(Backbone {
            config,
            params,
            token_emb,
            pos_emb,
            layers,
            lnf_gain,
            lnf_bias,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Replaces all weights from named tensors (checkpoint restore).
    pub fn load(&mut self, tensors: &[(String, Tensor)]) -> Result<()> {
        self.params.load_values(tensors)?;
        self.params.set_trainable(false);
        Ok(())
    }

    pub fn validate_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            return Err(GmemError::Input("empty token segment".into()));
        }
        if tokens.len() > self.config.max_seg_len {
            return Err(GmemError::Input(format!(
                "segment length {} exceeds maximum {}",
                tokens.len(),
                self.config.max_seg_len
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(GmemError::Input(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Records the forward pass on `tape` and returns the final-layer hidden
    /// states `[T×D]`.
    pub fn hidden_on_tape(&self, tape: &mut Tape, bound: &Bound, tokens: &[usize]) -> Result<Var> {
        self.validate_tokens(tokens)?;
        let t_len = tokens.len();
        let d = self.config.hidden;
        let heads = self.config.heads;
        let head_dim = d / heads;
        let positions: Vec<usize> = (0..t_len).collect();

        let tok = tape.gather_rows(bound.var(self.token_emb), tokens)?;
        let pos = tape.gather_rows(bound.var(self.pos_emb), &positions)?;
        let mut x = tape.add(tok, pos)?;

        for layer in &self.layers {
            let h = self.layernorm(tape, bound, x, layer.ln1_gain, layer.ln1_bias)?;
            let q = tape.affine(h, bound.var(layer.wq), bound.var(layer.bq))?;
            let k = tape.affine(h, bound.var(layer.wk), bound.var(layer.bk))?;
            let v = tape.affine(h, bound.var(layer.wv), bound.var(layer.bv))?;
            let mut heads_out: Option<Var> = None;
            for hd in 0..heads {
                let qh = tape.slice_cols(q, hd * head_dim, head_dim)?;
                let kh = tape.slice_cols(k, hd * head_dim, head_dim)?;
                let vh = tape.slice_cols(v, hd * head_dim, head_dim)?;
                let scores = tape.matmul_t(qh, kh)?;
                let scores = tape.scale(scores, 1.0 / (head_dim as f64).sqrt());
                let att = tape.causal_softmax_rows(scores)?;
                let out = tape.matmul(att, vh)?;
                heads_out = Some(match heads_out {
                    None => out,
                    Some(prev) => tape.concat_last_dim(prev, out)?,
                });
            }
            let heads_out = heads_out.expect("at least one head");
            let attn = tape.affine(heads_out, bound.var(layer.wo), bound.var(layer.bo))?;
            x = tape.add(x, attn)?;

            let h2 = self.layernorm(tape, bound, x, layer.ln2_gain, layer.ln2_bias)?;
            let up = tape.affine(h2, bound.var(layer.w1), bound.var(layer.b1))?;
            let up = tape.relu(up);
            let down = tape.affine(up, bound.var(layer.w2), bound.var(layer.b2))?;
            x = tape.add(x, down)?;
        }
        self.layernorm(tape, bound, x, self.lnf_gain, self.lnf_bias)
    }

    fn layernorm(&self, tape: &mut Tape, bound: &Bound, x: Var, gain: ParamId, bias: ParamId) -> Result<Var> {
        let n = tape.layernorm_rows(x)?;
        let n = tape.mul_row(n, bound.var(gain))?;
        tape.add_row(n, bound.var(bias))
    }

    /// Tied LM head on the tape: `hidden · token_embᵀ`.
    pub fn lm_head_on_tape(&self, tape: &mut Tape, bound: &Bound, hidden: Var) -> Result<Var> {
        let h = tape.value(hidden);
        if h.shape().len() != 2 || h.cols() != self.config.hidden {
            return Err(GmemError::dim(
                "lm_head",
                format!("hidden {:?} vs model width {}", h.shape(), self.config.hidden),
            ));
        }
        tape.matmul_t(hidden, bound.var(self.token_emb))
    }

    /// Final-layer hidden states for one segment.
    pub fn extract_hidden_states(&self, tokens: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let h = self.hidden_on_tape(&mut tape, &bound, tokens)?;
        Ok(tape.value(h).clone())
    }

    pub fn lm_head(&self, hidden: &Tensor) -> Result<Tensor> {
        if hidden.shape().len() != 2 || hidden.cols() != self.config.hidden {
            return Err(GmemError::dim(
                "lm_head",
                format!("hidden {:?} vs model width {}", hidden.shape(), self.config.hidden),
            ));
        }
        hidden.matmul_t(self.params.value(self.token_emb))
    }

    /// Vocabulary logits of the backbone alone.
    pub fn vanilla_logits(&self, tokens: &[usize]) -> Result<Tensor> {
        self.lm_head(&self.extract_hidden_states(tokens)?)
    }

    /// Little-endian bytes of every weight, in parameter order.
    pub fn weight_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.param_count() * 8);
        for p in self.params.iter() {
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn weight_hash(&self) -> String {
        let digest = Sha256::digest(self.weight_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Briefly fits the backbone as a segment-local language model on
    /// `segments`, then freezes it again. Returns the mean loss of the final
    /// 10% of steps.
    pub fn pretrain(&mut self, segments: &[Vec<usize>], steps: usize, batch: usize, lr: f64, seed: u64) -> Result<f64> {
        if steps == 0 {
            return Ok(f64::NAN);
        }
        let usable: Vec<&Vec<usize>> = segments.iter().filter(|s| s.len() >= 2).collect();
        if usable.is_empty() {
            return Err(GmemError::Input("no segment of length >= 2 to pretrain on".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.params.set_trainable(true);
        let mut adam = Adam::new(AdamConfig { lr, ..AdamConfig::default() }, &[&self.params]);
        let tail_start = steps - steps.div_ceil(10);
        let mut tail = Vec::new();
        for step in 0..steps {
            self.params.zero_grads();
            let mut batch_loss = 0.0;
            for _ in 0..batch.max(1) {
                let seg = usable[rand::Rng::random_range(&mut rng, 0..usable.len())];
                let mut tape = Tape::new();
                let bound = self.params.bind(&mut tape);
                let h = self.hidden_on_tape(&mut tape, &bound, seg)?;
                let logits = self.lm_head_on_tape(&mut tape, &bound, h)?;
                let n = seg.len();
                let mut targets = seg[1..].to_vec();
                targets.push(0);
                let mut mask = vec![true; n];
                mask[n - 1] = false;
                let loss = tape.cross_entropy(logits, &targets, &mask)?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    self.params.set_trainable(false);
                    return Err(GmemError::Numerical(format!(
                        "backbone pretraining diverged at step {step}: {}",
                        tape.first_non_finite().unwrap_or_default()
                    )));
                }
                batch_loss += value;
                let grads = tape.backward(loss)?;
                self.params.accumulate_grads(&bound, &grads, 1.0 / batch.max(1) as f64)?;
            }
            crate::training::optim::clip_grad_norm(&mut [&mut self.params], 1.0);
            adam.update(&mut [&mut self.params])?;
            if step >= tail_start {
                tail.push(batch_loss / batch.max(1) as f64);
            }
        }
        self.params.set_trainable(false);
        self.params.zero_grads();
        Ok(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}
