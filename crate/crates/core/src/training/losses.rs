use crate::error::{GmemError, Result};
use crate::memory_bank::SlotScores;
use crate::numerics::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub clm: f64,
    pub sparsity: f64,
    pub entropy: f64,
    pub total: f64,
    pub lambda_s: f64,
    pub lambda_e: f64,
}

/// Mean negative log-likelihood of `targets` at the masked rows of `logits`.
pub fn clm_loss(logits: &Tensor, targets: &[usize], mask: &[bool]) -> Result<f64> {
    if logits.rows() < 2 {
        return Err(GmemError::Input("next-token loss needs at least two positions".into()));
    }
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let loss = tape.cross_entropy(l, targets, mask)?;
    Ok(tape.value(loss).item())
}

/// `(1/S) Σ |s_i|`.
pub fn sparsity_loss(scores: &SlotScores) -> f64 {
    let s = scores.s.data();
    s.iter().map(|v| v.abs()).sum::<f64>() / s.len() as f64
}

/// `Σ p_i ln p_i` with `0 ln 0 = 0`; lies in `[−ln S, 0]`.
pub fn entropy_loss(scores: &SlotScores) -> f64 {
    scores
        .p
        .data()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum()
}

pub fn total_loss(clm: f64, sparsity: f64, entropy: f64, lambda_s: f64, lambda_e: f64) -> Result<LossBreakdown> {
    if lambda_s < 0.0 || lambda_e < 0.0 || !lambda_s.is_finite() || !lambda_e.is_finite() {
        return Err(GmemError::Config(format!(
            "loss weights must be non-negative, got lambda_s={lambda_s} lambda_e={lambda_e}"
        )));
    }
    Ok(LossBreakdown {
        clm,
        sparsity,
        entropy,
        total: clm + lambda_s * sparsity + lambda_e * entropy,
        lambda_s,
        lambda_e,
    })
}

/// Tape form of the sparsity term on a `[1×S]` raw-score row.
pub fn sparsity_on_tape(tape: &mut Tape, scores: Var) -> Var {
    let a = tape.abs(scores);
    tape.mean(a)
}

/// Tape form of the negative entropy of `softmax(scores)`.
pub fn entropy_on_tape(tape: &mut Tape, scores: Var) -> Result<Var> {
    let p = tape.softmax_rows(scores)?;
    let log_p = tape.log_softmax_rows(scores)?;
    let plogp = tape.mul(p, log_p)?;
    Ok(tape.sum(plogp))
}
