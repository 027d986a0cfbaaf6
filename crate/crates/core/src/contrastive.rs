//! Cross-view contrastive objective: anchor pairs over the interaction
//! network and a Jensen-Shannon mutual information estimator.

use std::collections::HashSet;

use log::debug;
use rand::seq::index;
use rand::Rng;

use crate::autodiff::{Tensor, Trace, Var};
use crate::error::{Error, Result};
use crate::intraview::DdiNetwork;
use crate::params::{Bound, ParamId, ParamStore};
use crate::train::xavier_init;

/// How many negatives to draw for each anchor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NegativeCount {
    /// As many as the anchor has positives, at most `cap`.
    Balanced { cap: usize },
    Fixed(usize),
}

impl Default for NegativeCount {
    fn default() -> Self {
        NegativeCount::Balanced { cap: 50 }
    }
}

/// Anchor-indexed positive and negative pairs with their loss weights.
///
/// Weights already include the averaging over anchors, so the loss is a
/// plain weighted sum.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairBatch {
    /// `(anchor, j)` with `j` the anchor itself or within `k` hops.
    pub positives: Vec<(usize, usize)>,
    pub pos_weights: Vec<f64>,
    /// `(anchor, j)` with `j` outside the anchor's `k`-hop ball.
    pub negatives: Vec<(usize, usize)>,
    pub neg_weights: Vec<f64>,
}

/// Draws a contrastive batch: every positive pair, plus uniformly chosen
/// negatives without replacement per anchor.
pub fn sample_pairs<R: Rng + ?Sized>(
    net: &DdiNetwork,
    k: usize,
    count: NegativeCount,
    rng: &mut R,
) -> Result<PairBatch> {
    if k == 0 {
        return Err(Error::InvalidArgument("hop order k must be at least 1".into()));
    }
    if matches!(count, NegativeCount::Fixed(0) | NegativeCount::Balanced { cap: 0 }) {
        return Err(Error::InvalidArgument("at least one negative per anchor is required".into()));
    }
    let n = net.node_count();
    let mut batch = PairBatch::default();
    let mut neg_groups: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut saturated = 0;
    for i in 0..n {
        let ball = net.k_hop(i, k);
        let weight = 1.0 / (ball.len() + 1) as f64;
        batch.positives.push((i, i));
        batch.positives.extend(ball.iter().map(|&j| (i, j)));
        batch
            .pos_weights
            .extend(std::iter::repeat_n(weight, ball.len() + 1));

        let want = match count {
            NegativeCount::Balanced { cap } => (ball.len() + 1).min(cap),
            NegativeCount::Fixed(m) => m,
        };
        let mut negs = draw_outside(n, i, &ball, want, rng);
        if negs.is_empty() {
            saturated += 1;
        }
        negs.sort_unstable();
        neg_groups.push(negs);
    }
    if saturated > 0 {
        debug!("{saturated} anchors reach every drug within {k} hops and get no negatives");
    }

    let pos_anchors = n as f64;
    for w in &mut batch.pos_weights {
        *w /= pos_anchors;
    }
    let neg_anchors = neg_groups.iter().filter(|g| !g.is_empty()).count() as f64;
    for (i, negs) in neg_groups.into_iter().enumerate() {
        let w = 1.0 / (negs.len() as f64 * neg_anchors);
        batch.neg_weights.extend(std::iter::repeat_n(w, negs.len()));
        batch.negatives.extend(negs.into_iter().map(|j| (i, j)));
    }
    Ok(batch)
}

/// Up to `want` distinct drugs other than `anchor` and outside the sorted `ball`.
fn draw_outside<R: Rng + ?Sized>(
    n: usize,
    anchor: usize,
    ball: &[usize],
    want: usize,
    rng: &mut R,
) -> Vec<usize> {
    let excluded = |j: usize| j == anchor || ball.binary_search(&j).is_ok();
    let available = n - ball.len() - 1;
    let want = want.min(available);
    if want == 0 {
        return Vec::new();
    }
    if available >= 2 * want {
        // sparse exclusion: rejection sampling stays proportional to `want`
        let mut seen = HashSet::with_capacity(want);
        let mut out = Vec::with_capacity(want);
        while out.len() < want {
            let j = rng.gen_range(0..n);
            if !excluded(j) && seen.insert(j) {
                out.push(j);
            }
        }
        out
    } else {
        let pool: Vec<usize> = (0..n).filter(|&j| !excluded(j)).collect();
        index::sample(rng, pool.len(), want).into_iter().map(|p| pool[p]).collect()
    }
}

/// Bilinear critic `T(g, d) = gᵀ W_d d`.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub w: ParamId,
}

impl Discriminator {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, d_g: usize, rng: &mut R) -> Result<Self> {
        Ok(Discriminator {
            w: store.add("disc.w", xavier_init(&[d_g, d_g], rng)?),
        })
    }
}

/// `gᵀ W d` for plain vectors.
pub fn score(w: &Tensor, g: &[f64], d: &[f64]) -> Result<f64> {
    let (rows, cols) = w.dims2().ok_or_else(|| Error::shape("score", w.shape(), &[0, 0]))?;
    if g.len() != rows || d.len() != cols {
        return Err(Error::shape("score", &[g.len(), d.len()], w.shape()));
    }
    Ok((0..rows)
        .map(|r| g[r] * w.row(r).iter().zip(d).map(|(a, b)| a * b).sum::<f64>())
        .sum())
}

/// Critic scores `g_jᵀ W_d d_i` for every `(i, j)` in `pairs`, as `[len]`.
pub fn score_pairs(
    t: &mut Trace,
    bound: &Bound,
    disc: &Discriminator,
    g: Var,
    d: Var,
    pairs: &[(usize, usize)],
) -> Result<Var> {
    if t.shape(g) != t.shape(d) {
        return Err(Error::shape("score_pairs", t.shape(g), t.shape(d)));
    }
    // rows of D·W_dᵀ are (W_d d_i)ᵀ
    let wd = t.matmul_t(d, bound[disc.w])?;
    let anchors: Vec<usize> = pairs.iter().map(|&(i, _)| i).collect();
    let others: Vec<usize> = pairs.iter().map(|&(_, j)| j).collect();
    let left = t.gather_rows(wd, &anchors)?;
    let right = t.gather_rows(g, &others)?;
    let prod = t.mul(left, right)?;
    t.rowsum(prod)
}

/// `ℒ_c = Σ w·sp(−t) + Σ w'·sp(t')`, the negated Jensen-Shannon MI
/// estimate. Weights come from [`PairBatch`].
pub fn jsd_mi_loss(
    t: &mut Trace,
    pos_scores: Var,
    pos_weights: &[f64],
    neg_scores: Var,
    neg_weights: &[f64],
) -> Result<Var> {
    if pos_weights.is_empty() {
        return Err(Error::InvalidArgument("contrastive loss needs at least one positive pair".into()));
    }
    if t.shape(pos_scores) != [pos_weights.len()] {
        return Err(Error::shape("jsd_mi_loss", t.shape(pos_scores), &[pos_weights.len()]));
    }
    if t.shape(neg_scores) != [neg_weights.len()] {
        return Err(Error::shape("jsd_mi_loss", t.shape(neg_scores), &[neg_weights.len()]));
    }
    let flipped = t.scale(pos_scores, -1.0)?;
    let sp = t.softplus(flipped)?;
    let w = t.constant(Tensor::vector(pos_weights.to_vec()));
    let weighted = t.mul(w, sp)?;
    let pos = t.sum(weighted)?;
    if neg_weights.is_empty() {
        return Ok(pos);
    }
    let sp = t.softplus(neg_scores)?;
    let w = t.constant(Tensor::vector(neg_weights.to_vec()));
    let weighted = t.mul(w, sp)?;
    let neg = t.sum(weighted)?;
    t.add(pos, neg)
}

/// Scores a batch and returns `(ℒ_c, positive scores, negative scores)`.
pub fn contrastive_loss(
    t: &mut Trace,
    bound: &Bound,
    disc: &Discriminator,
    g: Var,
    d: Var,
    batch: &PairBatch,
) -> Result<(Var, Var, Var)> {
    let pos = score_pairs(t, bound, disc, g, d, &batch.positives)?;
    let neg = if batch.negatives.is_empty() {
        t.constant(Tensor::vector(Vec::new()))
    } else {
        score_pairs(t, bound, disc, g, d, &batch.negatives)?
    };
    let loss = jsd_mi_loss(t, pos, &batch.pos_weights, neg, &batch.neg_weights)?;
    Ok((loss, pos, neg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{central_difference, max_relative_error, softplus};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::VecDeque;

    fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> DdiNetwork {
        let pairs: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|_| rng.gen_bool(p))
            .collect();
        DdiNetwork::new(n, &pairs).unwrap()
    }

    fn bfs_distance(net: &DdiNetwork, from: usize, to: usize) -> Option<usize> {
        let mut dist = vec![None; net.node_count()];
        dist[from] = Some(0);
        let mut q = VecDeque::from([from]);
        while let Some(u) = q.pop_front() {
            for &v in net.neighbors(u) {
                if dist[v].is_none() {
                    dist[v] = Some(dist[u].unwrap() + 1);
                    q.push_back(v);
                }
            }
        }
        dist[to]
    }

    fn loss_value(pos: &[f64], pw: &[f64], neg: &[f64], nw: &[f64]) -> f64 {
        let mut t = Trace::new();
        let p = t.constant(Tensor::vector(pos.to_vec()));
        let n = t.constant(Tensor::vector(neg.to_vec()));
        let l = jsd_mi_loss(&mut t, p, pw, n, nw).unwrap();
        t.value(l).data()[0]
    }

    #[test]
    fn triangle_has_no_negatives() {
        let net = DdiNetwork::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let b = sample_pairs(&net, 1, NegativeCount::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(b.positives.len(), 9);
        for i in 0..3 {
            let mine: Vec<_> = b.positives.iter().filter(|p| p.0 == i).map(|p| p.1).collect();
            assert_eq!(mine, vec![i].into_iter().chain((0..3).filter(|&j| j != i)).collect::<Vec<_>>());
        }
        assert!(b.negatives.is_empty());
        assert!(b.pos_weights.iter().all(|&w| (w - 1.0 / 9.0).abs() < 1e-15));
    }

    #[test]
    fn components_supply_each_others_negatives() {
        let net = DdiNetwork::new(4, &[(0, 1), (2, 3)]).unwrap();
        let b = sample_pairs(&net, 1, NegativeCount::Fixed(2), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for &(i, j) in &b.negatives {
            assert_ne!(i / 2, j / 2);
        }
        assert_eq!(b.negatives.len(), 8);
        // each anchor weighs 1/(2 negatives · 4 anchors)
        assert!(b.neg_weights.iter().all(|&w| (w - 0.125).abs() < 1e-15));
    }

    #[test]
    fn zero_hops_or_zero_negatives_rejected() {
        let net = DdiNetwork::new(3, &[(0, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_pairs(&net, 0, NegativeCount::default(), &mut rng).is_err());
        assert!(sample_pairs(&net, 1, NegativeCount::Fixed(0), &mut rng).is_err());
    }

    #[test]
    fn score_examples() {
        let eye = Tensor::identity(3);
        assert_eq!(score(&eye, &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(score(&eye, &[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(score(&eye, &[1.0], &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn all_zero_scores_give_two_ln2() {
        let l = loss_value(&[0.0, 0.0], &[0.5, 0.5], &[0.0], &[1.0]);
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn perfect_discrimination_approaches_zero() {
        let l = loss_value(&[40.0], &[1.0], &[-40.0], &[1.0]);
        assert!(l > 0.0 && l < 1e-15);
        let mut t = Trace::new();
        let p = t.constant(Tensor::vector(vec![]));
        let n = t.constant(Tensor::vector(vec![]));
        assert!(jsd_mi_loss(&mut t, p, &[], n, &[]).is_err());
    }

    #[test]
    fn loss_is_monotone_in_each_score() {
        let pos = [0.3, -1.2, 2.0];
        let pw = [0.2, 0.3, 0.5];
        let neg = [0.1, -0.4];
        let nw = [0.5, 0.5];
        let base = loss_value(&pos, &pw, &neg, &nw);
        for i in 0..pos.len() {
            let mut up = pos;
            up[i] += 0.1;
            assert!(loss_value(&up, &pw, &neg, &nw) < base);
        }
        for i in 0..neg.len() {
            let mut down = neg;
            down[i] -= 0.1;
            assert!(loss_value(&pos, &pw, &down, &nw) < base);
        }
    }

    #[test]
    fn gradients_through_critic_and_both_views() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = random_graph(6, 0.4, &mut rng);
        let batch = sample_pairs(&net, 1, NegativeCount::default(), &mut rng).unwrap();
        let mut store = ParamStore::new();
        let disc = Discriminator::init(&mut store, 3, &mut rng).unwrap();
        let draw = |rng: &mut ChaCha8Rng| {
            Tensor::matrix(6, 3, (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        };
        let (g0, d0) = (draw(&mut rng), draw(&mut rng));
        let value = |s: &ParamStore, g: &Tensor, d: &Tensor| -> Result<f64> {
            let mut t = Trace::new();
            let b = s.bind_constant(&mut t);
            let (gv, dv) = (t.constant(g.clone()), t.constant(d.clone()));
            let (l, ..) = contrastive_loss(&mut t, &b, &disc, gv, dv, &batch)?;
            Ok(t.value(l).data()[0])
        };
        let mut t = Trace::new();
        let b = store.bind(&mut t);
        let (gv, dv) = (t.param(g0.clone()), t.param(d0.clone()));
        let (l, ..) = contrastive_loss(&mut t, &b, &disc, gv, dv, &batch).unwrap();
        let grads = t.backward(l).unwrap();

        let num = central_difference(&g0, 1e-5, |x| value(&store, x, &d0)).unwrap();
        assert!(max_relative_error(grads.get(gv).unwrap(), &num, 1e-6) < 1e-4);
        let num = central_difference(&d0, 1e-5, |x| value(&store, &g0, x)).unwrap();
        assert!(max_relative_error(grads.get(dv).unwrap(), &num, 1e-6) < 1e-4);
        let num = central_difference(store.get(disc.w), 1e-5, |x| {
            let mut s = store.clone();
            *s.get_mut(disc.w) = x.clone();
            value(&s, &g0, &d0)
        })
        .unwrap();
        assert!(max_relative_error(grads.get(b[disc.w]).unwrap(), &num, 1e-6) < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn sampled_pairs_respect_hop_distances(seed in 0u64..1_000_000, k in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = random_graph(20, 0.1, &mut rng);
            let b = sample_pairs(&net, k, NegativeCount::default(), &mut rng).unwrap();
            let pos: HashSet<_> = b.positives.iter().copied().collect();
            for &(i, j) in &b.positives {
                prop_assert!(i == j || bfs_distance(&net, i, j).is_some_and(|d| d <= k));
            }
            for &(i, j) in &b.negatives {
                prop_assert!(bfs_distance(&net, i, j).is_none_or(|d| d > k));
                prop_assert!(!pos.contains(&(i, j)));
            }
            let neg_set: HashSet<_> = b.negatives.iter().copied().collect();
            prop_assert_eq!(neg_set.len(), b.negatives.len());
            for i in 0..20 {
                let deg_k = net.k_hop(i, k).len();
                let w = b.positives.iter().zip(&b.pos_weights).find(|(p, _)| p.0 == i).unwrap().1;
                prop_assert!((w * 20.0 - 1.0 / (deg_k + 1) as f64).abs() < 1e-12);
                let negs = b.negatives.iter().filter(|p| p.0 == i).count();
                prop_assert_eq!(negs, (deg_k + 1).min(20 - deg_k - 1));
            }
        }

        #[test]
        fn bilinear_score_matches_double_loop(seed in 0u64..1_000_000, dim in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = |n: usize| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>();
            let w = Tensor::matrix(dim, dim, v(dim * dim)).unwrap();
            let (g, d) = (v(dim), v(dim));
            let mut want = 0.0;
            for a in 0..dim {
                for b in 0..dim {
                    want += g[a] * w.at(a, b) * d[b];
                }
            }
            prop_assert!((score(&w, &g, &d).unwrap() - want).abs() < 1e-12);

            // the batched trace path agrees with the scalar form
            let mut t = Trace::new();
            let gm = t.constant(Tensor::matrix(1, dim, g.clone()).unwrap());
            let dm = t.constant(Tensor::matrix(1, dim, d.clone()).unwrap());
            let mut store = ParamStore::new();
            let disc = Discriminator { w: store.add("w", w.clone()) };
            let b = store.bind_constant(&mut t);
            let s = score_pairs(&mut t, &b, &disc, gm, dm, &[(0, 0)]).unwrap();
            prop_assert!((t.value(s).data()[0] - want).abs() < 1e-12);
        }

        #[test]
        fn loss_matches_transcription(seed in 0u64..1_000_000, n in 2usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = random_graph(n, 0.3, &mut rng);
            let b = sample_pairs(&net, 1, NegativeCount::default(), &mut rng).unwrap();
            let pos: Vec<f64> = b.positives.iter().map(|_| rng.gen_range(-4.0..4.0)).collect();
            let neg: Vec<f64> = b.negatives.iter().map(|_| rng.gen_range(-4.0..4.0)).collect();

            // mean over anchors of per-anchor weighted sums, written out directly
            let mut pos_term = 0.0;
            for i in 0..n {
                let ball = net.k_hop(i, 1).len() as f64 + 1.0;
                let s: f64 = b.positives.iter().zip(&pos)
                    .filter(|(p, _)| p.0 == i)
                    .map(|(_, &t)| (-softplus(-t)) / ball)
                    .sum();
                pos_term += s;
            }
            pos_term /= n as f64;
            let anchors_with_neg: Vec<usize> = (0..n).filter(|&i| b.negatives.iter().any(|p| p.0 == i)).collect();
            let mut neg_term = 0.0;
            for &i in &anchors_with_neg {
                let count = b.negatives.iter().filter(|p| p.0 == i).count() as f64;
                neg_term += b.negatives.iter().zip(&neg)
                    .filter(|(p, _)| p.0 == i)
                    .map(|(_, &t)| softplus(t) / count)
                    .sum::<f64>();
            }
            if !anchors_with_neg.is_empty() {
                neg_term /= anchors_with_neg.len() as f64;
            }
            let mi = pos_term - neg_term;
            let got = loss_value(&pos, &b.pos_weights, &neg, &b.neg_weights);
            prop_assert!((got + mi).abs() < 1e-12, "{got} vs {}", -mi);
        }
    }
}
