//! Inter-view encoder: bond-aware message passing over a molecule's atoms,
//! highway-style gated updates, and an attentive readout to one drug vector.
//!
//! Weights are stored `[out, in]` and applied to row-stacked atom states as
//! `H · Wᵀ`, so each row follows the per-atom formulas directly.

use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{SparseMatrix, Tensor, Trace, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::smiles::{element_symbol, to_channels, BondChannelAdjacency, BondType, MolecularGraph};
use crate::train::xavier_init;

/// Sorted set of atomic numbers with one embedding row each.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct AtomVocab {
    numbers: Vec<u8>,
}

impl AtomVocab {
    pub fn new(mut numbers: Vec<u8>) -> Self {
        numbers.sort_unstable();
        numbers.dedup();
        AtomVocab { numbers }
    }

    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a MolecularGraph>) -> Self {
        let numbers = graphs
            .into_iter()
            .flat_map(|g| g.atoms.iter().map(|a| a.atomic_number))
            .collect();
        AtomVocab::new(numbers)
    }

    pub fn index(&self, atomic_number: u8) -> Option<usize> {
        self.numbers.binary_search(&atomic_number).ok()
    }

    pub fn len(&self) -> usize {
        self.numbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numbers.is_empty()
    }

    pub fn numbers(&self) -> &[u8] {
        &self.numbers
    }
}

/// Learnable `[vocab, d_h]` table keyed by atomic number.
#[derive(Clone, Debug)]
pub struct AtomEmbeddingTable {
    pub table: ParamId,
    pub vocab: AtomVocab,
}

/// One message passing layer: a `d_h x d_h` matrix per bond type and the
/// fuse / transform / carry gates over `[h_prev; h_msg]`.
#[derive(Clone, Debug)]
pub struct BampnLayer {
    pub w_bond: [ParamId; 4],
    pub w_fuse: ParamId,
    pub b_fuse: ParamId,
    pub w_transform: ParamId,
    pub b_transform: ParamId,
    pub w_carry: ParamId,
    pub b_carry: ParamId,
}

#[derive(Clone, Debug)]
pub struct ReadoutParams {
    pub w_att: ParamId,
    pub b_att: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
}

#[derive(Clone, Debug)]
pub struct InterviewParams {
    pub atoms: AtomEmbeddingTable,
    pub layers: Vec<BampnLayer>,
    pub readout: ReadoutParams,
}

fn bias(store: &mut ParamStore, name: String, n: usize) -> ParamId {
    store.add(name, Tensor::zeros(vec![n]))
}

impl BampnLayer {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        d_h: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let names = ["single", "double", "triple", "aromatic"];
        let mut w_bond = Vec::with_capacity(4);
        for n in names {
            w_bond.push(store.add(format!("{prefix}.w_bond.{n}"), xavier_init(&[d_h, d_h], rng)?));
        }
        let mut gate = |store: &mut ParamStore, g: &str| -> Result<(ParamId, ParamId)> {
            let w = store.add(format!("{prefix}.w_{g}"), xavier_init(&[d_h, 2 * d_h], rng)?);
            let b = bias(store, format!("{prefix}.b_{g}"), d_h);
            Ok((w, b))
        };
        let (w_fuse, b_fuse) = gate(store, "fuse")?;
        let (w_transform, b_transform) = gate(store, "transform")?;
        let (w_carry, b_carry) = gate(store, "carry")?;
        Ok(BampnLayer {
            w_bond: w_bond.try_into().expect("four bond types"),
            w_fuse,
            b_fuse,
            w_transform,
            b_transform,
            w_carry,
            b_carry,
        })
    }
}

impl InterviewParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        vocab: AtomVocab,
        d_h: usize,
        d_g: usize,
        layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidArgument(
                "at least one message passing layer is required".into(),
            ));
        }
        if vocab.is_empty() {
            return Err(Error::InvalidArgument("empty atom vocabulary".into()));
        }
        let table = store.add("atom_embedding", xavier_init(&[vocab.len(), d_h], rng)?);
        let layers = (0..layers)
            .map(|l| BampnLayer::init(store, &format!("bampn.{l}"), d_h, rng))
            .collect::<Result<Vec<_>>>()?;
        let readout = ReadoutParams {
            w_att: store.add("readout.w_att", xavier_init(&[d_g, 2 * d_h], rng)?),
            b_att: bias(store, "readout.b_att".into(), d_g),
            w_out: store.add("readout.w_out", xavier_init(&[d_g, d_h], rng)?),
            b_out: bias(store, "readout.b_out".into(), d_g),
        };
        Ok(InterviewParams {
            atoms: AtomEmbeddingTable { table, vocab },
            layers,
            readout,
        })
    }
}

/// Per-channel adjacency recorded as trace constants; `None` for bond types
/// absent from the molecule.
pub struct ChannelVars([Option<Var>; 4]);

impl ChannelVars {
    pub fn new(t: &mut Trace, channels: &BondChannelAdjacency) -> Self {
        ChannelVars(std::array::from_fn(|c| {
            let a = &channels.channels()[c];
            (a.sum() > 0.0).then(|| t.constant(a.clone()))
        }))
    }
}

/// Candidate states `h̃_i = Σ_{j ∈ C(i)} W_{c_ij} h_j`, one dense product
/// `A_c · H · W_cᵀ` per bond channel, summed over channels.
pub fn message(
    t: &mut Trace,
    bound: &Bound,
    layer: &BampnLayer,
    h_prev: Var,
    channels: &BondChannelAdjacency,
) -> Result<Var> {
    let vars = ChannelVars::new(t, channels);
    message_with(t, bound, layer, h_prev, channels.atom_count(), &vars)
}

pub fn message_with(
    t: &mut Trace,
    bound: &Bound,
    layer: &BampnLayer,
    h_prev: Var,
    atom_count: usize,
    channels: &ChannelVars,
) -> Result<Var> {
    let shape = t.shape(h_prev).to_vec();
    if shape.len() != 2 || shape[0] != atom_count {
        return Err(Error::shape("message", &shape, &[atom_count, atom_count]));
    }
    let mut total: Option<Var> = None;
    for kind in BondType::ALL {
        let Some(adj) = channels.0[kind.channel()] else {
            continue;
        };
        let spread = t.matmul(adj, h_prev)?;
        let msg = t.matmul_t(spread, bound[layer.w_bond[kind.channel()]])?;
        total = Some(match total {
            Some(acc) => t.add(acc, msg)?,
            None => msg,
        });
    }
    match total {
        Some(v) => Ok(v),
        None => Ok(t.constant(Tensor::zeros(shape))),
    }
}

/// `h = T(ĥ) ⊙ F(ĥ) + C(ĥ) ⊙ h_prev` with `ĥ = [h_prev; h̃]`,
/// `F = tanh`, `T = C = sigmoid`.
pub fn gated_update(
    t: &mut Trace,
    bound: &Bound,
    layer: &BampnLayer,
    h_prev: Var,
    h_tilde: Var,
) -> Result<Var> {
    if t.shape(h_prev) != t.shape(h_tilde) {
        return Err(Error::shape("gated_update", t.shape(h_prev), t.shape(h_tilde)));
    }
    let hat = t.concat(h_prev, h_tilde)?;
    let affine = |t: &mut Trace, w: ParamId, b: ParamId| -> Result<Var> {
        let z = t.matmul_t(hat, bound[w])?;
        t.add_bias(z, bound[b])
    };
    let fz = affine(t, layer.w_fuse, layer.b_fuse)?;
    let fuse = t.tanh(fz)?;
    let tz = affine(t, layer.w_transform, layer.b_transform)?;
    let transform = t.sigmoid(tz)?;
    let cz = affine(t, layer.w_carry, layer.b_carry)?;
    let carry = t.sigmoid(cz)?;
    let new = t.mul(transform, fuse)?;
    let kept = t.mul(carry, h_prev)?;
    t.add(new, kept)
}

/// `g = Σ_i a_i ⊙ (W_o h_i^L + b_o)` with `a_i = tanh(W_a [h_i^0; h_i^L] + b_a)`.
/// Returns a `[1, d_g]` row.
pub fn readout(
    t: &mut Trace,
    bound: &Bound,
    params: &ReadoutParams,
    h0: Var,
    h_last: Var,
) -> Result<Var> {
    let rows = t.value(h0).rows();
    if t.shape(h0) != t.shape(h_last) {
        return Err(Error::shape("readout", t.shape(h0), t.shape(h_last)));
    }
    let both = t.concat(h0, h_last)?;
    let az = t.matmul_t(both, bound[params.w_att])?;
    let az = t.add_bias(az, bound[params.b_att])?;
    let att = t.tanh(az)?;
    let oz = t.matmul_t(h_last, bound[params.w_out])?;
    let out = t.add_bias(oz, bound[params.b_out])?;
    let weighted = t.mul(att, out)?;
    let ones = t.constant(Tensor::ones(vec![1, rows]));
    t.matmul(ones, weighted)
}

/// Atom embedding lookup; unknown elements are an error unless
/// `allow_unknown`, in which case they map to a zero row.
pub fn embed_atoms(
    t: &mut Trace,
    bound: &Bound,
    table: &AtomEmbeddingTable,
    graph: &MolecularGraph,
    allow_unknown: bool,
) -> Result<Var> {
    let numbers: Vec<u8> = graph.atoms.iter().map(|a| a.atomic_number).collect();
    embed_numbers(t, bound, table, &numbers, allow_unknown)
}

fn embed_numbers(
    t: &mut Trace,
    bound: &Bound,
    table: &AtomEmbeddingTable,
    numbers: &[u8],
    allow_unknown: bool,
) -> Result<Var> {
    let index = numbers
        .iter()
        .map(|&z| match table.vocab.index(z) {
            Some(i) => Ok(Some(i)),
            None if allow_unknown => Ok(None),
            None => Err(Error::UnknownAtom {
                atomic_number: z,
                symbol: element_symbol(z),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    t.gather_rows_or_zero(bound[table.table], index)
}

/// Encodes one molecule to a `[1, d_g]` inter-view embedding.
pub fn encode_molecule(
    t: &mut Trace,
    bound: &Bound,
    params: &InterviewParams,
    graph: &MolecularGraph,
    allow_unknown: bool,
) -> Result<Var> {
    let channels = to_channels(graph);
    encode_with_channels(t, bound, params, graph, &channels, allow_unknown)
}

pub fn encode_with_channels(
    t: &mut Trace,
    bound: &Bound,
    params: &InterviewParams,
    graph: &MolecularGraph,
    channels: &BondChannelAdjacency,
    allow_unknown: bool,
) -> Result<Var> {
    if params.layers.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one message passing layer is required".into(),
        ));
    }
    if graph.atoms.is_empty() {
        return Err(Error::InvalidArgument("molecule without atoms".into()));
    }
    let h0 = embed_atoms(t, bound, &params.atoms, graph, allow_unknown)?;
    let vars = ChannelVars::new(t, channels);
    let mut h = h0;
    for layer in &params.layers {
        let msg = message_with(t, bound, layer, h, graph.atom_count(), &vars)?;
        h = gated_update(t, bound, layer, h, msg)?;
    }
    readout(t, bound, &params.readout, h0, h)
}

/// Stacks the embeddings of several molecules into `[count, d_g]`.
pub fn encode_molecules(
    t: &mut Trace,
    bound: &Bound,
    params: &InterviewParams,
    graphs: &[MolecularGraph],
    channels: &[BondChannelAdjacency],
    allow_unknown: bool,
) -> Result<Var> {
    let rows = graphs
        .iter()
        .zip(channels)
        .map(|(g, c)| encode_with_channels(t, bound, params, g, c, allow_unknown))
        .collect::<Result<Vec<_>>>()?;
    t.stack_rows(&rows)
}

/// Many molecules laid out as one disconnected graph: block-diagonal
/// channel adjacencies and an atom-to-molecule membership matrix.
#[derive(Clone, Debug)]
pub struct MoleculeBatch {
    numbers: Vec<u8>,
    channels: [Option<Arc<SparseMatrix>>; 4],
    membership: Arc<SparseMatrix>,
}

impl MoleculeBatch {
    pub fn new(graphs: &[MolecularGraph]) -> Result<Self> {
        if let Some(k) = graphs.iter().position(|g| g.atoms.is_empty()) {
            return Err(Error::InvalidArgument(format!("molecule {k} has no atoms")));
        }
        let total: usize = graphs.iter().map(MolecularGraph::atom_count).sum();
        let mut numbers = Vec::with_capacity(total);
        let mut entries: [Vec<(usize, usize, f64)>; 4] = Default::default();
        let mut members = Vec::with_capacity(total);
        for (m, g) in graphs.iter().enumerate() {
            let offset = numbers.len();
            numbers.extend(g.atoms.iter().map(|a| a.atomic_number));
            members.extend((offset..numbers.len()).map(|a| (m, a, 1.0)));
            for b in &g.bonds {
                let list = &mut entries[b.bond_type.channel()];
                list.push((offset + b.i, offset + b.j, 1.0));
                list.push((offset + b.j, offset + b.i, 1.0));
            }
        }
        let mut channels: [Option<Arc<SparseMatrix>>; 4] = Default::default();
        for (slot, list) in channels.iter_mut().zip(entries) {
            if !list.is_empty() {
                *slot = Some(Arc::new(SparseMatrix::from_triplets(total, total, list)?));
            }
        }
        Ok(MoleculeBatch {
            numbers,
            channels,
            membership: Arc::new(SparseMatrix::from_triplets(graphs.len(), total, members)?),
        })
    }

    pub fn molecule_count(&self) -> usize {
        self.membership.rows()
    }

    pub fn atom_count(&self) -> usize {
        self.numbers.len()
    }
}

/// Encodes every molecule of `batch` at once; same result as stacking
/// [`encode_molecule`] outputs, `[molecules, d_g]`.
pub fn encode_batch(
    t: &mut Trace,
    bound: &Bound,
    params: &InterviewParams,
    batch: &MoleculeBatch,
    allow_unknown: bool,
) -> Result<Var> {
    if params.layers.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one message passing layer is required".into(),
        ));
    }
    let h0 = embed_numbers(t, bound, &params.atoms, &batch.numbers, allow_unknown)?;
    let mut h = h0;
    for layer in &params.layers {
        let mut msg: Option<Var> = None;
        for kind in BondType::ALL {
            let Some(adj) = &batch.channels[kind.channel()] else {
                continue;
            };
            let spread = t.spmm(adj, h)?;
            let m = t.matmul_t(spread, bound[layer.w_bond[kind.channel()]])?;
            msg = Some(match msg {
                Some(acc) => t.add(acc, m)?,
                None => m,
            });
        }
        let msg = match msg {
            Some(v) => v,
            None => t.constant(Tensor::zeros(t.shape(h).to_vec())),
        };
        h = gated_update(t, bound, layer, h, msg)?;
    }
    let r = &params.readout;
    let both = t.concat(h0, h)?;
    let az = t.matmul_t(both, bound[r.w_att])?;
    let az = t.add_bias(az, bound[r.b_att])?;
    let att = t.tanh(az)?;
    let oz = t.matmul_t(h, bound[r.w_out])?;
    let out = t.add_bias(oz, bound[r.b_out])?;
    let weighted = t.mul(att, out)?;
    t.spmm(&batch.membership, weighted)
}
