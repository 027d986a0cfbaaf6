//! Drug-level view: the interaction network and a GCN over it.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{SparseMatrix, Tensor, Trace, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::train::xavier_init;

/// Undirected, unweighted drug interaction graph over drug indices `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DdiNetwork {
    neighbors: Vec<Vec<usize>>,
    edges: usize,
}

impl DdiNetwork {
    /// Builds the graph from unordered pairs. Duplicates collapse; self
    /// pairs and out-of-range endpoints are rejected.
    pub fn new(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in pairs {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) outside a network of {n} drugs"
                )));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self interaction on drug {i}")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        let mut edges = 0;
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
            edges += list.len();
        }
        Ok(DdiNetwork {
            neighbors,
            edges: edges / 2,
        })
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    /// Sorted neighbors of drug `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Each edge once as `(i, j)` with `i < j`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// Dense binary adjacency `A`.
    pub fn adjacency(&self) -> Tensor {
        let n = self.node_count();
        let mut a = Tensor::zeros(vec![n, n]);
        for (i, j) in self.edges() {
            a.data_mut()[i * n + j] = 1.0;
            a.data_mut()[j * n + i] = 1.0;
        }
        a
    }

    /// Drugs at hop distance `1..=k` from `i`, sorted; `i` itself excluded.
    pub fn k_hop(&self, i: usize, k: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        dist[i] = 0;
        let mut queue = VecDeque::from([i]);
        let mut out = Vec::new();
        while let Some(u) = queue.pop_front() {
            if dist[u] == k {
                continue;
            }
            for &v in &self.neighbors[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    out.push(v);
                    queue.push_back(v);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// `Â = K̃^{-1/2} (A + I) K̃^{-1/2}` with `K̃` the row sums of `A + I`.
pub fn normalize_adjacency(net: &DdiNetwork) -> SparseMatrix {
    let n = net.node_count();
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / ((net.degree(i) + 1) as f64).sqrt()).collect();
    let mut entries = Vec::with_capacity(n + 2 * net.edge_count());
    for i in 0..n {
        entries.push((i, i, inv_sqrt[i] * inv_sqrt[i]));
        for &j in net.neighbors(i) {
            entries.push((i, j, inv_sqrt[i] * inv_sqrt[j]));
        }
    }
    SparseMatrix::from_triplets(n, n, entries).expect("indices are in range")
}

/// GCN weights, each stored `[out, in]`; the last layer maps back to `d_g`.
#[derive(Clone, Debug)]
pub struct GcnParams {
    pub weights: Vec<ParamId>,
}

impl GcnParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        d_g: usize,
        hidden: usize,
        layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidArgument("at least one GCN layer is required".into()));
        }
        let weights = (0..layers)
            .map(|l| {
                let d_in = if l == 0 { d_g } else { hidden };
                let d_out = if l + 1 == layers { d_g } else { hidden };
                Ok(store.add(format!("gcn.{l}.w"), xavier_init(&[d_out, d_in], rng)?))
            })
            .collect::<Result<_>>()?;
        Ok(GcnParams { weights })
    }
}

/// `D = Â · ReLU(Â · G · W₀) · W₁`, generalized to any depth. `hidden`
/// post-processes each ReLU output (dropout during training).
pub fn gcn_encode(
    t: &mut Trace,
    bound: &Bound,
    params: &GcnParams,
    a_hat: &Arc<SparseMatrix>,
    g: Var,
    mut hidden: impl FnMut(&mut Trace, Var) -> Result<Var>,
) -> Result<Var> {
    let last = params.weights.len().checked_sub(1).ok_or_else(|| {
        Error::InvalidArgument("at least one GCN layer is required".into())
    })?;
    let mut h = g;
    for (l, &w) in params.weights.iter().enumerate() {
        let hw = t.matmul_t(h, bound[w])?;
        h = t.spmm(a_hat, hw)?;
        if l != last {
            h = t.relu(h)?;
            h = hidden(t, h)?;
        }
    }
    Ok(h)
}
