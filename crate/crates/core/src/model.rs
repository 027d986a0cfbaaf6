//! The full two-view model: molecule encoder, GCN, critic and heads.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{SparseMatrix, Tensor, Trace, Var};
use crate::contrastive::{contrastive_loss, Discriminator, PairBatch};
use crate::data::LabeledPair;
use crate::error::{Error, Result};
use crate::interview::{encode_batch, AtomVocab, InterviewParams, MoleculeBatch};
use crate::intraview::{gcn_encode, normalize_adjacency, DdiNetwork, GcnParams};
use crate::params::{Bound, ParamStore};
use crate::predict::{
    disagreement_loss, pair_products, predict_inter, predict_intra, supervised_loss, total_loss,
    PredictorParams,
};
use crate::smiles::MolecularGraph;

/// Layer widths and depths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub d_h: usize,
    pub d_g: usize,
    /// GCN hidden width.
    pub d_u: usize,
    /// Predictor hidden width.
    pub d_hid: usize,
    pub bampn_layers: usize,
    pub gcn_layers: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            d_h: 256,
            d_g: 256,
            d_u: 256,
            d_hid: 256,
            bampn_layers: 3,
            gcn_layers: 2,
        }
    }
}

/// All learnable tensors and the handles into them.
#[derive(Clone, Debug)]
pub struct MiracleModel {
    pub dims: Dims,
    pub store: ParamStore,
    pub interview: InterviewParams,
    pub gcn: GcnParams,
    pub disc: Discriminator,
    pub predictor: PredictorParams,
}

impl MiracleModel {
    /// Xavier-initialized weights and zero biases, registered in a fixed order.
    pub fn init<R: Rng + ?Sized>(dims: Dims, vocab: AtomVocab, rng: &mut R) -> Result<Self> {
        let mut store = ParamStore::new();
        let interview =
            InterviewParams::init(&mut store, vocab, dims.d_h, dims.d_g, dims.bampn_layers, rng)?;
        let gcn = GcnParams::init(&mut store, dims.d_g, dims.d_u, dims.gcn_layers, rng)?;
        let disc = Discriminator::init(&mut store, dims.d_g, rng)?;
        let predictor = PredictorParams::init(&mut store, dims.d_g, dims.d_hid, rng)?;
        Ok(MiracleModel {
            dims,
            store,
            interview,
            gcn,
            disc,
            predictor,
        })
    }

    pub fn vocab(&self) -> &AtomVocab {
        &self.interview.atoms.vocab
    }
}

/// Fixed graph inputs for one dataset: deduplicated molecules, the
/// training interaction network and its normalized adjacency.
#[derive(Clone, Debug)]
pub struct GraphContext {
    molecules: MoleculeBatch,
    drug_to_molecule: Vec<usize>,
    pub network: DdiNetwork,
    a_hat: Arc<SparseMatrix>,
}

impl GraphContext {
    /// `train_edges` must hold training positives only.
    pub fn new(graphs: &[MolecularGraph], train_edges: &[(usize, usize)]) -> Result<Self> {
        let mut unique: Vec<&MolecularGraph> = Vec::new();
        let mut drug_to_molecule = Vec::with_capacity(graphs.len());
        for g in graphs {
            let k = match unique.iter().position(|u| *u == g) {
                Some(k) => k,
                None => {
                    unique.push(g);
                    unique.len() - 1
                }
            };
            drug_to_molecule.push(k);
        }
        let owned: Vec<MolecularGraph> = unique.into_iter().cloned().collect();
        let network = DdiNetwork::new(graphs.len(), train_edges)?;
        let a_hat = Arc::new(normalize_adjacency(&network));
        Ok(GraphContext {
            molecules: MoleculeBatch::new(&owned)?,
            drug_to_molecule,
            network,
            a_hat,
        })
    }

    pub fn drug_count(&self) -> usize {
        self.drug_to_molecule.len()
    }

    pub fn molecule_count(&self) -> usize {
        self.molecules.molecule_count()
    }
}

/// Training applies dropout from its own RNG stream; inference never does.
pub enum Mode<'a> {
    Inference,
    Train { dropout: f64, rng: &'a mut ChaCha8Rng },
}

impl Mode<'_> {
    fn hidden(&mut self, t: &mut Trace, v: Var) -> Result<Var> {
        match self {
            Mode::Inference => Ok(v),
            Mode::Train { dropout, rng } => t.dropout(v, *dropout, true, *rng),
        }
    }
}

/// Inter-view `G` and intra-view `D`, both `[drugs, d_g]`.
pub fn embed(
    t: &mut Trace,
    bound: &Bound,
    model: &MiracleModel,
    ctx: &GraphContext,
    mode: &mut Mode,
    allow_unknown: bool,
) -> Result<(Var, Var)> {
    let per_molecule = encode_batch(t, bound, &model.interview, &ctx.molecules, allow_unknown)?;
    let g = t.gather_rows(per_molecule, &ctx.drug_to_molecule)?;
    let d = gcn_encode(t, bound, &model.gcn, &ctx.a_hat, g, |t, v| mode.hidden(t, v))?;
    Ok((g, d))
}

/// Everything one objective evaluation needs besides the model.
pub struct Objective<'a> {
    pub labeled: &'a [LabeledPair],
    pub unlabeled: &'a [(usize, usize)],
    pub pairs: &'a PairBatch,
    pub alpha: f64,
    pub beta: f64,
}

/// Handles of the total loss and its parts.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub supervised: Var,
    pub contrastive: Var,
    pub disagreement: Var,
    pub pos_scores: Var,
    pub neg_scores: Var,
}

/// `ℒ = ℒ_s + α ℒ_c + β ℒ_d` on one trace.
pub fn objective(
    t: &mut Trace,
    bound: &Bound,
    model: &MiracleModel,
    ctx: &GraphContext,
    obj: &Objective,
    mode: &mut Mode,
) -> Result<LossVars> {
    if obj.labeled.is_empty() {
        return Err(Error::InvalidArgument("no labeled training pairs".into()));
    }
    let (g, d) = embed(t, bound, model, ctx, mode, false)?;
    let (contrastive, pos_scores, neg_scores) =
        contrastive_loss(t, bound, &model.disc, g, d, obj.pairs)?;

    let pr = &model.predictor;
    let heads = |t: &mut Trace, mode: &mut Mode, pairs: &[(usize, usize)]| -> Result<(Var, Var)> {
        let ld = pair_products(t, d, pairs)?;
        let p = predict_intra(t, bound, pr, ld, |t, v| mode.hidden(t, v))?;
        let lg = pair_products(t, g, pairs)?;
        let r = predict_inter(t, bound, pr, lg)?;
        Ok((p, r))
    };
    let pairs: Vec<(usize, usize)> = obj.labeled.iter().map(|p| (p.i, p.j)).collect();
    let labels: Vec<u8> = obj.labeled.iter().map(|p| p.label).collect();
    let (p, r) = heads(t, mode, &pairs)?;
    let supervised = supervised_loss(t, p, r, &labels)?;
    let disagreement = if obj.unlabeled.is_empty() {
        t.constant(Tensor::scalar(0.0))
    } else {
        let (pu, ru) = heads(t, mode, obj.unlabeled)?;
        disagreement_loss(t, pu, ru)?
    };
    let total = total_loss(t, supervised, contrastive, disagreement, obj.alpha, obj.beta)?;
    Ok(LossVars {
        total,
        supervised,
        contrastive,
        disagreement,
        pos_scores,
        neg_scores,
    })
}

/// Interaction probability (class-1 component of `p`) for each pair.
/// Only the intra-view head is evaluated.
pub fn predict_pairs(
    model: &MiracleModel,
    ctx: &GraphContext,
    pairs: &[(usize, usize)],
    allow_unknown: bool,
) -> Result<Vec<f64>> {
    let n = ctx.drug_count();
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= n || j >= n || i == j) {
        return Err(Error::InvalidArgument(format!(
            "pair ({i}, {j}) is not two distinct drugs among {n}"
        )));
    }
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let mut t = Trace::new();
    let bound = model.store.bind_constant(&mut t);
    let (_, d) = embed(&mut t, &bound, model, ctx, &mut Mode::Inference, allow_unknown)?;
    let links = pair_products(&mut t, d, pairs)?;
    let p = predict_intra(&mut t, &bound, &model.predictor, links, |_, v| Ok(v))?;
    let probs = t.select_col(p, 1)?;
    Ok(t.value(probs).data().to_vec())
}

/// Inference-mode `(G, D)` as plain tensors.
pub fn embeddings(model: &MiracleModel, ctx: &GraphContext, allow_unknown: bool) -> Result<(Tensor, Tensor)> {
    let mut t = Trace::new();
    let bound = model.store.bind_constant(&mut t);
    let (g, d) = embed(&mut t, &bound, model, ctx, &mut Mode::Inference, allow_unknown)?;
    Ok((t.value(g).clone(), t.value(d).clone()))
}

/// Mean critic score over positive pairs minus that over negatives.
pub fn critic_margin(model: &MiracleModel, ctx: &GraphContext, pairs: &PairBatch) -> Result<f64> {
    if pairs.negatives.is_empty() {
        return Err(Error::InvalidArgument("margin needs negative pairs".into()));
    }
    let mut t = Trace::new();
    let bound = model.store.bind_constant(&mut t);
    let (g, d) = embed(&mut t, &bound, model, ctx, &mut Mode::Inference, false)?;
    let (_, pos, neg) = contrastive_loss(&mut t, &bound, &model.disc, g, d, pairs)?;
    let mean = |v: Var| t.value(v).sum() / t.value(v).len() as f64;
    Ok(mean(pos) - mean(neg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrastive::{sample_pairs, NegativeCount};
    use crate::smiles::parse_smiles;
    use rand::SeedableRng;

    fn tiny() -> (MiracleModel, GraphContext) {
        let graphs: Vec<_> = ["CCO", "c1ccccc1", "CCO", "CN"]
            .iter()
            .map(|s| parse_smiles(s).unwrap())
            .collect();
        let dims = Dims {
            d_h: 4,
            d_g: 3,
            d_u: 5,
            d_hid: 4,
            bampn_layers: 2,
            gcn_layers: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = MiracleModel::init(dims, AtomVocab::from_graphs(&graphs), &mut rng).unwrap();
        let ctx = GraphContext::new(&graphs, &[(0, 1), (2, 3)]).unwrap();
        (model, ctx)
    }

    #[test]
    fn duplicate_molecules_share_an_encoding() {
        let (model, ctx) = tiny();
        assert_eq!(ctx.molecule_count(), 3);
        let (g, d) = embeddings(&model, &ctx, false).unwrap();
        assert_eq!(g.shape(), &[4, 3]);
        assert_eq!(g.row(0), g.row(2));
        assert_ne!(d.row(0), d.row(2));
    }

    #[test]
    fn predictions_are_symmetric_and_repeatable() {
        let (model, ctx) = tiny();
        let a = predict_pairs(&model, &ctx, &[(0, 3), (1, 2)], false).unwrap();
        let b = predict_pairs(&model, &ctx, &[(3, 0), (2, 1)], false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, predict_pairs(&model, &ctx, &[(0, 3), (1, 2)], false).unwrap());
        assert!(predict_pairs(&model, &ctx, &[(1, 1)], false).is_err());
        assert!(predict_pairs(&model, &ctx, &[(0, 9)], false).is_err());
    }

    #[test]
    fn objective_parts_combine() {
        let (model, ctx) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs = sample_pairs(&ctx.network, 1, NegativeCount::default(), &mut rng).unwrap();
        let labeled = [
            LabeledPair { i: 0, j: 1, label: 1 },
            LabeledPair { i: 0, j: 3, label: 0 },
        ];
        let obj = Objective {
            labeled: &labeled,
            unlabeled: &[(2, 3)],
            pairs: &pairs,
            alpha: 100.0,
            beta: 0.8,
        };
        let mut t = Trace::new();
        let b = model.store.bind_constant(&mut t);
        let l = objective(&mut t, &b, &model, &ctx, &obj, &mut Mode::Inference).unwrap();
        let v = |x: Var| t.value(x).data()[0];
        let want = v(l.supervised) + 100.0 * v(l.contrastive) + 0.8 * v(l.disagreement);
        assert!((v(l.total) - want).abs() < 1e-12);
        assert!(v(l.disagreement) > 0.0);
    }
}
