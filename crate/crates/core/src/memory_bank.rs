//! The trainable latent memory bank: slot storage, encoder/decoder
//! projections between model and memory width, slot-to-input consolidation
//! attention with an elementwise update gate, input-to-slot retrieval
//! attention, and the per-slot importance scores fed to the regularizers.
//!
//! Every operation has a tape form (used for training) and a plain tensor
//! form that evaluates the same graph on a throwaway tape.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GmemError, Result};
use crate::numerics::{normal_tensor, Bound, ParamId, ParamStore, Parameter, Tape, Tensor, Var};

/// How consolidation combines old slots with the attended input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum UpdateRule {
    /// `M_new = (1 − g) ⊙ M_old + g ⊙ M_attended`
    #[default]
    Gated,
    /// `M_new = M_attended`, the ungated baseline.
    Overwrite,
}

impl std::str::FromStr for UpdateRule {
    type Err = GmemError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gated" => Ok(UpdateRule::Gated),
            "overwrite" => Ok(UpdateRule::Overwrite),
            other => Err(GmemError::Config(format!("unknown update rule '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryConfig {
    pub slots: usize,
    pub mem_dim: usize,
    /// Width of the backbone hidden states the encoder reads.
    pub model_hidden: usize,
    pub seed: u64,
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 || self.mem_dim == 0 || self.model_hidden == 0 {
            return Err(GmemError::Config(format!(
                "slots ({}), mem_dim ({}) and model width ({}) must all be >= 1",
                self.slots, self.mem_dim, self.model_hidden
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Ids {
    initial_slots: ParamId,
    enc_w1: ParamId,
    enc_b1: ParamId,
    enc_w2: ParamId,
    enc_b2: ParamId,
    dec_w1: ParamId,
    dec_b1: ParamId,
    dec_w2: ParamId,
    dec_b2: ParamId,
    cons_wq: ParamId,
    cons_wk: ParamId,
    cons_wv: ParamId,
    gate_w: ParamId,
    gate_b: ParamId,
    ret_wq: ParamId,
    ret_wk: ParamId,
    ret_wv: ParamId,
}

/// All trainable weights of the memory bank.
#[derive(Clone, Debug)]
pub struct MemoryBankParams {
    config: MemoryConfig,
    store: ParamStore,
    ids: Ids,
}

/// Current slot contents, `[S×D_m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryState {
    pub slots: Tensor,
}

/// Raw per-slot importance scores `s` and their softmax `p`, both `[1×S]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotScores {
    pub s: Tensor,
    pub p: Tensor,
}

impl SlotScores {
    pub fn from_raw(s: Tensor) -> Result<Self> {
        let n = s.numel();
        let s = s.reshape(&[1, n])?;
        let p = s.softmax_rows()?;
        Ok(SlotScores { s, p })
    }
}

/// Tape handles of one binding of [`MemoryBankParams`].
#[derive(Clone, Debug)]
pub struct MemoryVars {
    pub initial_slots: Var,
    enc_w1: Var,
    enc_b1: Var,
    enc_w2: Var,
    enc_b2: Var,
    dec_w1: Var,
    dec_b1: Var,
    dec_w2: Var,
    dec_b2: Var,
    cons_wq: Var,
    cons_wk: Var,
    cons_wv: Var,
    pub gate_w: Var,
    pub gate_b: Var,
    ret_wq: Var,
    ret_wk: Var,
    ret_wv: Var,
    pub bound: Bound,
}

/// Tape outputs of one consolidation.
#[derive(Clone, Copy, Debug)]
pub struct ConsolidationVars {
    pub new_slots: Var,
    pub attended: Var,
    /// `[S×D_m]`; absent for the overwrite rule.
    pub gate: Option<Var>,
    /// `[S×T]` slot-over-input attention.
    pub attention: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct RetrievalVars {
    pub retrieved: Var,
    /// `[T×S]` pre-softmax retrieval scores.
    pub logits: Var,
    pub attention: Var,
}

#[derive(Clone, Debug)]
pub struct Consolidation {
    pub new_state: MemoryState,
    pub attended: Tensor,
    pub gate: Option<Tensor>,
    pub attention: Tensor,
}

#[derive(Clone, Debug)]
pub struct Retrieval {
    pub retrieved: Tensor,
    pub logits: Tensor,
    pub attention: Tensor,
}

impl MemoryBankParams {
    pub fn new(config: MemoryConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (s, m, d) = (config.slots, config.mem_dim, config.model_hidden);
        let mut store = ParamStore::new();
        let mut add = |name: &str, t: Tensor| store.push(Parameter::new(format!("memory.{name}"), t, true));
        let std_m = 1.0 / (m as f64).sqrt();
        let std_d = 1.0 / (d as f64).sqrt();
        let std_2m = 1.0 / (2.0 * m as f64).sqrt();

        let ids = Ids {
            initial_slots: add("initial_slots", normal_tensor(&mut rng, &[s, m], 0.02)),
            enc_w1: add("encoder.w1", normal_tensor(&mut rng, &[d, m], std_d)),
            enc_b1: add("encoder.b1", Tensor::zeros(&[1, m])),
            enc_w2: add("encoder.w2", normal_tensor(&mut rng, &[m, m], std_m)),
            enc_b2: add("encoder.b2", Tensor::zeros(&[1, m])),
            dec_w1: add("decoder.w1", normal_tensor(&mut rng, &[m, m], std_m)),
            dec_b1: add("decoder.b1", Tensor::zeros(&[1, m])),
            dec_w2: add("decoder.w2", normal_tensor(&mut rng, &[m, d], std_m)),
            dec_b2: add("decoder.b2", Tensor::zeros(&[1, d])),
            cons_wq: add("consolidate.wq", normal_tensor(&mut rng, &[m, m], std_m)),
            cons_wk: add("consolidate.wk", normal_tensor(&mut rng, &[m, m], std_m)),
            cons_wv: add("consolidate.wv", normal_tensor(&mut rng, &[m, m], std_m)),
            gate_w: add("gate.w", normal_tensor(&mut rng, &[2 * m, m], std_2m)),
            gate_b: add("gate.b", Tensor::zeros(&[1, m])),
            ret_wq: add("retrieve.wq", normal_tensor(&mut rng, &[m, m], std_m)),
            ret_wk: add("retrieve.wk", normal_tensor(&mut rng, &[m, m], std_m)),
            ret_wv: add("retrieve.wv", normal_tensor(&mut rng, &[m, m], std_m)),
        };
        Ok(MemoryBankParams { config, store, ids })
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn param_count(&self) -> usize {
        self.store.scalar_count()
    }

    pub fn initial_state(&self) -> MemoryState {
        MemoryState {
            slots: self.store.value(self.ids.initial_slots).clone(),
        }
    }

    fn id(&self, name: &str) -> Result<ParamId> {
        self.store
            .find(&format!("memory.{name}"))
            .ok_or_else(|| GmemError::Contract(format!("no memory parameter named {name}")))
    }

    /// Overwrites one weight tensor by its short name (e.g. `"gate.b"`).
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self.id(name)?;
        let p = self.store.get_mut(id);
        if p.value.shape() != value.shape() {
            return Err(GmemError::dim(
                "MemoryBankParams::set",
                format!("{name} is {:?}, got {:?}", p.value.shape(), value.shape()),
            ));
        }
        p.value = value;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        Ok(self.store.value(self.id(name)?))
    }

    pub fn bind(&self, tape: &mut Tape) -> MemoryVars {
        let bound = self.store.bind(tape);
        let i = &self.ids;
        MemoryVars {
            initial_slots: bound.var(i.initial_slots),
            enc_w1: bound.var(i.enc_w1),
            enc_b1: bound.var(i.enc_b1),
            enc_w2: bound.var(i.enc_w2),
            enc_b2: bound.var(i.enc_b2),
            dec_w1: bound.var(i.dec_w1),
            dec_b1: bound.var(i.dec_b1),
            dec_w2: bound.var(i.dec_w2),
            dec_b2: bound.var(i.dec_b2),
            cons_wq: bound.var(i.cons_wq),
            cons_wk: bound.var(i.cons_wk),
            cons_wv: bound.var(i.cons_wv),
            gate_w: bound.var(i.gate_w),
            gate_b: bound.var(i.gate_b),
            ret_wq: bound.var(i.ret_wq),
            ret_wk: bound.var(i.ret_wk),
            ret_wv: bound.var(i.ret_wv),
            bound,
        }
    }

    fn check_cols(&self, tape: &Tape, v: Var, want: usize, op: &'static str) -> Result<()> {
        let t = tape.value(v);
        if t.shape().len() != 2 || t.cols() != want {
            return Err(GmemError::dim(op, format!("input {:?}, expected last dim {}", t.shape(), want)));
        }
        Ok(())
    }

    /// `[T×D] → [T×D_m]`: `tanh(H·W1 + b1)·W2 + b2`.
    pub fn encode_on_tape(&self, tape: &mut Tape, vars: &MemoryVars, hidden: Var) -> Result<Var> {
        self.check_cols(tape, hidden, self.config.model_hidden, "encode")?;
        let a = tape.affine(hidden, vars.enc_w1, vars.enc_b1)?;
        let a = tape.tanh(a);
        tape.affine(a, vars.enc_w2, vars.enc_b2)
    }

    /// `[T×D_m] → [T×D]`: `tanh(R·W1 + b1)·W2 + b2`.
    pub fn decode_on_tape(&self, tape: &mut Tape, vars: &MemoryVars, retrieved: Var) -> Result<Var> {
        self.check_cols(tape, retrieved, self.config.mem_dim, "decode")?;
        let a = tape.affine(retrieved, vars.dec_w1, vars.dec_b1)?;
        let a = tape.tanh(a);
        tape.affine(a, vars.dec_w2, vars.dec_b2)
    }

    /// Slots query the encoded input; the gate blends the attended result
    /// into the old slots.
    pub fn consolidate_on_tape(
        &self,
        tape: &mut Tape,
        vars: &MemoryVars,
        old_slots: Var,
        encoded: Var,
        rule: UpdateRule,
    ) -> Result<ConsolidationVars> {
        self.check_state(tape.value(old_slots))?;
        self.check_cols(tape, encoded, self.config.mem_dim, "consolidate")?;
        let q = tape.matmul(old_slots, vars.cons_wq)?;
        let k = tape.matmul(encoded, vars.cons_wk)?;
        let v = tape.matmul(encoded, vars.cons_wv)?;
        let scores = tape.matmul_t(q, k)?;
        let scores = tape.scale(scores, 1.0 / (self.config.mem_dim as f64).sqrt());
        let attention = tape.softmax_rows(scores)?;
        let attended = tape.matmul(attention, v)?;
        match rule {
            UpdateRule::Overwrite => Ok(ConsolidationVars {
                new_slots: attended,
                attended,
                gate: None,
                attention,
            }),
            UpdateRule::Gated => {
                let joined = tape.concat_last_dim(old_slots, attended)?;
                let pre = tape.affine(joined, vars.gate_w, vars.gate_b)?;
                let gate = tape.sigmoid(pre);
                let keep = tape.one_minus(gate);
                let kept = tape.mul(keep, old_slots)?;
                let written = tape.mul(gate, attended)?;
                let new_slots = tape.add(kept, written)?;
                Ok(ConsolidationVars {
                    new_slots,
                    attended,
                    gate: Some(gate),
                    attention,
                })
            }
        }
    }

    /// Encoded positions query the slots.
    pub fn retrieve_on_tape(&self, tape: &mut Tape, vars: &MemoryVars, slots: Var, encoded: Var) -> Result<RetrievalVars> {
        self.check_state(tape.value(slots))?;
        self.check_cols(tape, encoded, self.config.mem_dim, "retrieve")?;
        let q = tape.matmul(encoded, vars.ret_wq)?;
        let k = tape.matmul(slots, vars.ret_wk)?;
        let v = tape.matmul(slots, vars.ret_wv)?;
        let scores = tape.matmul_t(q, k)?;
        let logits = tape.scale(scores, 1.0 / (self.config.mem_dim as f64).sqrt());
        let attention = tape.softmax_rows(logits)?;
        let retrieved = tape.matmul(attention, v)?;
        Ok(RetrievalVars {
            retrieved,
            logits,
            attention,
        })
    }

    fn check_state(&self, slots: &Tensor) -> Result<()> {
        if slots.shape() != [self.config.slots, self.config.mem_dim] {
            return Err(GmemError::dim(
                "memory state",
                format!(
                    "slots {:?}, expected [{}x{}]",
                    slots.shape(),
                    self.config.slots,
                    self.config.mem_dim
                ),
            ));
        }
        Ok(())
    }

    pub fn encode(&self, hidden: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let h = tape.constant(hidden.clone());
        let e = self.encode_on_tape(&mut tape, &vars, h)?;
        Ok(tape.value(e).clone())
    }

    pub fn decode(&self, retrieved: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let r = tape.constant(retrieved.clone());
        let d = self.decode_on_tape(&mut tape, &vars, r)?;
        Ok(tape.value(d).clone())
    }

    pub fn consolidate(&self, old: &MemoryState, encoded: &Tensor, rule: UpdateRule) -> Result<Consolidation> {
        if encoded.numel() == 0 {
            return Err(GmemError::Input("consolidation needs at least one encoded position".into()));
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let m = tape.constant(old.slots.clone());
        let e = tape.constant(encoded.clone());
        let out = self.consolidate_on_tape(&mut tape, &vars, m, e, rule)?;
        Ok(Consolidation {
            new_state: MemoryState {
                slots: tape.value(out.new_slots).clone(),
            },
            attended: tape.value(out.attended).clone(),
            gate: out.gate.map(|g| tape.value(g).clone()),
            attention: tape.value(out.attention).clone(),
        })
    }

    pub fn retrieve(&self, state: &MemoryState, encoded: &Tensor) -> Result<Retrieval> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let m = tape.constant(state.slots.clone());
        let e = tape.constant(encoded.clone());
        let out = self.retrieve_on_tape(&mut tape, &vars, m, e)?;
        Ok(Retrieval {
            retrieved: tape.value(out.retrieved).clone(),
            logits: tape.value(out.logits).clone(),
            attention: tape.value(out.attention).clone(),
        })
    }
}

/// Mean pre-softmax retrieval score of each slot over the query positions,
/// as a `[1×S]` row on the tape.
pub fn importance_scores_on_tape(tape: &mut Tape, retrieval_logits: Var) -> Result<Var> {
    tape.mean_rows(retrieval_logits)
}

pub fn importance_scores(retrieval_logits: &Tensor) -> Result<SlotScores> {
    if retrieval_logits.shape().len() != 2 {
        return Err(GmemError::dim("importance_scores", format!("{:?}", retrieval_logits.shape())));
    }
    SlotScores::from_raw(retrieval_logits.mean_rows()?)
}
