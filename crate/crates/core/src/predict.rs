//! Interaction heads and the supervised and disagreement losses.

use rand::Rng;

use crate::autodiff::{Tensor, Trace, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::train::xavier_init;

/// Number of output classes; binary interaction occurrence.
pub const CLASSES: usize = 2;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside logs.
pub const PROB_EPS: f64 = 1e-12;

/// Intra-view two-layer head (`w_l`, `w_p`) and inter-view head (`w_r`).
#[derive(Clone, Debug)]
pub struct PredictorParams {
    pub w_l: ParamId,
    pub b_l: ParamId,
    pub w_p: ParamId,
    pub b_p: ParamId,
    pub w_r: ParamId,
    pub b_r: ParamId,
}

impl PredictorParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        d_g: usize,
        d_hid: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(PredictorParams {
            w_l: store.add("pred.w_l", xavier_init(&[d_hid, d_g], rng)?),
            b_l: store.add("pred.b_l", Tensor::zeros(vec![d_hid])),
            w_p: store.add("pred.w_p", xavier_init(&[CLASSES, d_hid], rng)?),
            b_p: store.add("pred.b_p", Tensor::zeros(vec![CLASSES])),
            w_r: store.add("pred.w_r", xavier_init(&[CLASSES, d_g], rng)?),
            b_r: store.add("pred.b_r", Tensor::zeros(vec![CLASSES])),
        })
    }
}

/// `a ⊙ b` for two embedding vectors.
pub fn link_embedding(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::shape("link_embedding", &[a.len()], &[b.len()]));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
}

/// Row-stacked `x_i ⊙ x_j` for each pair, `[pairs, width]`.
pub fn pair_products(t: &mut Trace, x: Var, pairs: &[(usize, usize)]) -> Result<Var> {
    let left: Vec<usize> = pairs.iter().map(|&(i, _)| i).collect();
    let right: Vec<usize> = pairs.iter().map(|&(_, j)| j).collect();
    let a = t.gather_rows(x, &left)?;
    let b = t.gather_rows(x, &right)?;
    t.mul(a, b)
}

/// `p = σ(W_p · ReLU(W_l l + b_l) + b_p)` per row of `links`. `hidden`
/// post-processes the ReLU output (dropout during training).
pub fn predict_intra(
    t: &mut Trace,
    bound: &Bound,
    params: &PredictorParams,
    links: Var,
    hidden: impl FnOnce(&mut Trace, Var) -> Result<Var>,
) -> Result<Var> {
    let z = t.matmul_t(links, bound[params.w_l])?;
    let z = t.add_bias(z, bound[params.b_l])?;
    let h = t.relu(z)?;
    let h = hidden(t, h)?;
    let o = t.matmul_t(h, bound[params.w_p])?;
    let o = t.add_bias(o, bound[params.b_p])?;
    t.sigmoid(o)
}

/// `r = σ(W_r (g_i ⊙ g_j) + b_r)` per row of `links`.
pub fn predict_inter(t: &mut Trace, bound: &Bound, params: &PredictorParams, links: Var) -> Result<Var> {
    let o = t.matmul_t(links, bound[params.w_r])?;
    let o = t.add_bias(o, bound[params.b_r])?;
    t.sigmoid(o)
}

fn one_hot(labels: &[u8]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(labels.len() * CLASSES);
    for &y in labels {
        match y {
            0 => data.extend([1.0, 0.0]),
            1 => data.extend([0.0, 1.0]),
            other => {
                return Err(Error::InvalidArgument(format!("label {other} is not 0 or 1")));
            }
        }
    }
    Tensor::matrix(labels.len(), CLASSES, data)
}

/// Σ over samples of the class-averaged binary cross-entropy of `q`
/// against one-hot `target`.
fn cross_entropy(t: &mut Trace, q: Var, target: &Tensor) -> Result<Var> {
    if t.shape(q) != target.shape() {
        return Err(Error::shape("cross_entropy", t.shape(q), target.shape()));
    }
    let q = t.clamp(q, PROB_EPS, 1.0 - PROB_EPS)?;
    let log_q = t.ln(q)?;
    let neg_q = t.scale(q, -1.0)?;
    let one_minus = t.add_scalar(neg_q, 1.0)?;
    let log_not_q = t.ln(one_minus)?;
    let y = t.constant(target.clone());
    let not_y = t.constant(target.map(|v| 1.0 - v));
    let a = t.mul(y, log_q)?;
    let b = t.mul(not_y, log_not_q)?;
    let ll = t.add(a, b)?;
    let total = t.sum(ll)?;
    t.scale(total, -1.0 / CLASSES as f64)
}

/// `ℒ_s = Σ_i CE(r_i, y_i) + CE(p_i, y_i)` over labeled links.
pub fn supervised_loss(t: &mut Trace, p: Var, r: Var, labels: &[u8]) -> Result<Var> {
    let target = one_hot(labels)?;
    let a = cross_entropy(t, r, &target)?;
    let b = cross_entropy(t, p, &target)?;
    t.add(a, b)
}

/// Clamps then rescales each row to sum to one.
fn renormalize(t: &mut Trace, q: Var) -> Result<Var> {
    let q = t.clamp(q, PROB_EPS, 1.0 - PROB_EPS)?;
    let ones = t.constant(Tensor::ones(vec![CLASSES, CLASSES]));
    let totals = t.matmul(q, ones)?;
    t.div(q, totals)
}

/// `ℒ_d = Σ_j KL(p̂_j ‖ r̂_j)` over unlabeled links.
pub fn disagreement_loss(t: &mut Trace, p: Var, r: Var) -> Result<Var> {
    if t.shape(p) != t.shape(r) {
        return Err(Error::shape("disagreement_loss", t.shape(p), t.shape(r)));
    }
    if t.value(p).is_empty() {
        return Ok(t.constant(Tensor::scalar(0.0)));
    }
    let p = renormalize(t, p)?;
    let r = renormalize(t, r)?;
    let lp = t.ln(p)?;
    let lr = t.ln(r)?;
    let diff = t.sub(lp, lr)?;
    let terms = t.mul(p, diff)?;
    t.sum(terms)
}

/// `ℒ = ℒ_s + α ℒ_c + β ℒ_d`.
pub fn total_loss(t: &mut Trace, ls: Var, lc: Var, ld: Var, alpha: f64, beta: f64) -> Result<Var> {
    let c = t.scale(lc, alpha)?;
    let d = t.scale(ld, beta)?;
    let s = t.add(ls, c)?;
    t.add(s, d)
}
