use std::collections::HashSet;
use std::path::Path;

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adam::AdamState;
use super::config::TrainConfig;
use crate::autodiff::{Tensor, Trace};
use crate::contrastive::{sample_pairs, PairBatch};
use crate::data::{ordered, sample_negatives, sample_unlabeled, split, Dataset, DatasetSplit, SplitTag};
use crate::error::{Error, Result};
use crate::interview::AtomVocab;
use crate::metrics::{self, MetricTriple};
use crate::model::{critic_margin, objective, predict_pairs, GraphContext, MiracleModel, Mode, Objective};
use crate::smiles::MolecularGraph;

/// Independent random streams derived from one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Dropout = 2,
    Pairs = 3,
    Unlabeled = 4,
    Split = 5,
    Negatives = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seeded split with balanced, split-disjoint negatives.
pub fn make_split(ds: &Dataset, seed: u64) -> Result<DatasetSplit> {
    let mut s = split(&ds.pairs, &mut stream_rng(seed, Stream::Split))?;
    sample_negatives(
        &mut s,
        &ds.positive_set(),
        ds.drug_count(),
        &mut stream_rng(seed, Stream::Negatives),
    )?;
    s.check_no_leak()?;
    Ok(s)
}

/// One row of the metric history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub loss_s: f64,
    pub loss_c: f64,
    pub loss_d: f64,
    pub val_auroc: f64,
    pub val_auprc: f64,
    pub val_f1: f64,
    pub lr: f64,
}

/// Parameters at the best validation AUROC seen so far.
#[derive(Clone, Debug, PartialEq)]
pub struct BestSnapshot {
    pub epoch: usize,
    pub auroc: f64,
    pub params: Vec<Tensor>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    EpochBudget,
    EarlyStopped,
    /// Loss or gradients became non-finite; parameters hold the last good step.
    Diverged { epoch: usize },
}

/// Full-batch training state; everything needed to continue bit-identically.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: MiracleModel,
    pub adam: AdamState,
    pub ctx: GraphContext,
    pub split: DatasetSplit,
    /// Epochs completed.
    pub epoch: usize,
    pub best: Option<BestSnapshot>,
    /// Epochs since the validation AUROC last improved.
    pub stale: usize,
    pub history: Vec<EpochRecord>,
    pub(crate) dropout_rng: ChaCha8Rng,
    pub(crate) pairs_rng: ChaCha8Rng,
    pub(crate) unlabeled_rng: ChaCha8Rng,
    labeled_train: HashSet<(usize, usize)>,
}

impl Trainer {
    pub fn new(config: TrainConfig, graphs: &[MolecularGraph], split: DatasetSplit) -> Result<Self> {
        config.validate()?;
        let vocab = AtomVocab::from_graphs(graphs);
        let model = MiracleModel::init(config.dims, vocab, &mut stream_rng(config.seed, Stream::Init))?;
        Self::assemble(config, model, graphs, split)
    }

    pub(crate) fn assemble(
        config: TrainConfig,
        model: MiracleModel,
        graphs: &[MolecularGraph],
        split: DatasetSplit,
    ) -> Result<Self> {
        split.check_no_leak()?;
        if split.train.is_empty() {
            return Err(Error::InvalidArgument("training split is empty".into()));
        }
        let n = graphs.len();
        if let Some(p) = SplitTag::ALL
            .iter()
            .flat_map(|&t| split.part(t))
            .find(|p| p.i >= n || p.j >= n || p.i == p.j)
        {
            return Err(Error::InvalidArgument(format!(
                "split pair ({}, {}) is not two distinct drugs among {n}",
                p.i, p.j
            )));
        }
        let ctx = GraphContext::new(graphs, &split.train_positives())?;
        let labeled_train = split.train.iter().map(|p| ordered(p.i, p.j)).collect();
        let seed = config.seed;
        Ok(Trainer {
            adam: AdamState::new(&model.store),
            model,
            ctx,
            split,
            epoch: 0,
            best: None,
            stale: 0,
            history: Vec::new(),
            dropout_rng: stream_rng(seed, Stream::Dropout),
            pairs_rng: stream_rng(seed, Stream::Pairs),
            unlabeled_rng: stream_rng(seed, Stream::Unlabeled),
            labeled_train,
            config,
        })
    }

    /// Draws this epoch's contrastive pairs and unlabeled links.
    fn draw_epoch_samples(&mut self) -> Result<(PairBatch, Vec<(usize, usize)>)> {
        let c = &self.config;
        let pairs = sample_pairs(&self.ctx.network, c.k_hop, c.neg_per_anchor, &mut self.pairs_rng)?;
        let want = (self.split.train.len() as f64 * c.unlabeled_ratio).round() as usize;
        let unlabeled = sample_unlabeled(
            self.ctx.drug_count(),
            &self.labeled_train,
            want,
            &mut self.unlabeled_rng,
        );
        Ok((pairs, unlabeled))
    }

    /// One full-batch epoch: forward, backward, Adam update, validation.
    pub fn step(&mut self) -> Result<EpochRecord> {
        let epoch = self.epoch;
        let lr = self.config.lr_at(epoch);
        let (pairs, unlabeled) = self.draw_epoch_samples()?;

        let mut t = Trace::new();
        t.set_finite_check(false);
        let bound = self.model.store.bind(&mut t);
        let obj = Objective {
            labeled: &self.split.train,
            unlabeled: &unlabeled,
            pairs: &pairs,
            alpha: self.config.alpha,
            beta: self.config.beta,
        };
        let mut mode = Mode::Train {
            dropout: self.config.dropout,
            rng: &mut self.dropout_rng,
        };
        let lv = objective(&mut t, &bound, &self.model, &self.ctx, &obj, &mut mode)?;
        let scalar = |v| t.value(v).data()[0];
        let (loss, loss_s, loss_c, loss_d) =
            (scalar(lv.total), scalar(lv.supervised), scalar(lv.contrastive), scalar(lv.disagreement));
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let grads = t.backward(lv.total)?;
        let grads: Vec<&Tensor> = self
            .model
            .store
            .ids()
            .map(|id| grads.get(bound[id]).expect("every parameter has a gradient"))
            .collect();
        if grads.iter().any(|g| !g.all_finite()) {
            return Err(Error::Diverged { epoch });
        }
        self.adam.step(&mut self.model.store, &grads, lr)?;
        self.epoch += 1;

        let val = match self.evaluate(SplitTag::Val) {
            Ok(m) => m,
            Err(Error::UndefinedMetric(why)) => {
                debug!("validation metrics undefined: {why}");
                MetricTriple {
                    auroc: f64::NAN,
                    auprc: f64::NAN,
                    f1: f64::NAN,
                }
            }
            Err(e) => return Err(e),
        };
        self.track_best(val.auroc);
        let record = EpochRecord {
            epoch,
            loss,
            loss_s,
            loss_c,
            loss_d,
            val_auroc: val.auroc,
            val_auprc: val.auprc,
            val_f1: val.f1,
            lr,
        };
        self.history.push(record);
        Ok(record)
    }

    fn track_best(&mut self, auroc: f64) {
        let improved = match &self.best {
            None => true,
            // an undefined validation metric cannot rank epochs; keep the latest
            Some(_) if auroc.is_nan() => true,
            Some(b) => auroc > b.auroc,
        };
        if improved {
            self.best = Some(BestSnapshot {
                epoch: self.epoch,
                auroc,
                params: self.model.store.values().to_vec(),
            });
            self.stale = 0;
        } else {
            self.stale += 1;
        }
    }

    /// Trains until the epoch budget, early stopping, or divergence.
    pub fn run(&mut self, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<StopReason> {
        while self.epoch < self.config.epochs {
            match self.step() {
                Ok(rec) => on_epoch(&rec),
                Err(Error::Diverged { epoch }) => {
                    warn!("loss diverged at epoch {epoch}; keeping the last finite parameters");
                    return Ok(StopReason::Diverged { epoch });
                }
                Err(e) => return Err(e),
            }
            if self.stale >= self.config.patience {
                return Ok(StopReason::EarlyStopped);
            }
        }
        Ok(StopReason::EpochBudget)
    }

    /// Class-1 probabilities of `p` for the pairs of one partition, with labels.
    pub fn scores(&self, tag: SplitTag) -> Result<(Vec<f64>, Vec<u8>)> {
        let part = self.split.part(tag);
        let pairs: Vec<_> = part.iter().map(|p| (p.i, p.j)).collect();
        let scores = predict_pairs(&self.model, &self.ctx, &pairs, false)?;
        Ok((scores, part.iter().map(|p| p.label).collect()))
    }

    pub fn evaluate(&self, tag: SplitTag) -> Result<MetricTriple> {
        let (s, y) = self.scores(tag)?;
        metrics::evaluate(&s, &y)
    }

    /// Model carrying the best-validation parameters (current ones if none).
    pub fn best_model(&self) -> MiracleModel {
        let mut m = self.model.clone();
        if let Some(b) = &self.best {
            m.store.values_mut().clone_from_slice(&b.params);
        }
        m
    }

    /// Critic margin on a fresh pair sample that leaves the training stream untouched.
    pub fn critic_margin(&self) -> Result<f64> {
        let mut rng = self.pairs_rng.clone();
        let pairs = sample_pairs(&self.ctx.network, self.config.k_hop, self.config.neg_per_anchor, &mut rng)?;
        critic_margin(&self.model, &self.ctx, &pairs)
    }
}

/// Writes `epoch,loss,loss_s,loss_c,loss_d,val_auroc,val_auprc,val_f1,lr`.
pub fn write_history(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let to_err = |e: csv::Error| Error::Format {
        path: path.into(),
        line: 0,
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    if records.is_empty() {
        w.write_record(["epoch", "loss", "loss_s", "loss_c", "loss_d", "val_auroc", "val_auprc", "val_f1", "lr"])
            .map_err(to_err)?;
    }
    for r in records {
        w.serialize(r).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dims;
    use crate::synthetic::toy_network;

    fn small(seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            epochs: 6,
            dims: Dims {
                d_h: 8,
                d_g: 8,
                d_u: 8,
                d_hid: 8,
                ..Dims::default()
            },
            ..TrainConfig::default()
        }
    }

    fn trainer(config: TrainConfig) -> Trainer {
        let ds = toy_network(config.seed).unwrap();
        let split = make_split(&ds, config.seed).unwrap();
        Trainer::new(config, &ds.graphs, split).unwrap()
    }

    #[test]
    fn streams_are_independent() {
        use rand::RngCore;
        let mut a = stream_rng(0, Stream::Pairs);
        let mut b = stream_rng(0, Stream::Unlabeled);
        assert_ne!(a.next_u64(), b.next_u64());
        assert_eq!(stream_rng(3, Stream::Init).next_u64(), stream_rng(3, Stream::Init).next_u64());
    }

    #[test]
    fn same_seed_same_history() {
        let (mut a, mut b) = (trainer(small(2)), trainer(small(2)));
        assert_eq!(a.run(|_| {}).unwrap(), StopReason::EpochBudget);
        b.run(|_| {}).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model.store.values(), b.model.store.values());
        assert_eq!(a.history.len(), 6);
        assert!((a.history[3].lr - 1e-4 * 0.96f64.powi(3)).abs() < 1e-18);
    }

    #[test]
    fn ablation_without_auxiliary_losses_learns() {
        let mut config = small(1);
        config.alpha = 0.0;
        config.beta = 0.0;
        config.lr_init = 1e-2;
        config.lr_decay = 1.0;
        config.epochs = 40;
        let mut tr = trainer(config);
        tr.run(|_| {}).unwrap();
        let h = &tr.history;
        assert!(h.iter().all(|r| r.loss == r.loss_s));
        assert!(h[h.len() - 1].loss < 0.8 * h[0].loss, "{} -> {}", h[0].loss, h[h.len() - 1].loss);
    }

    #[test]
    fn patience_stops_early_and_keeps_best() {
        let mut config = small(4);
        config.patience = 1;
        config.epochs = 50;
        let mut tr = trainer(config);
        let why = tr.run(|_| {}).unwrap();
        assert_eq!(why, StopReason::EarlyStopped);
        let best = tr.best.as_ref().unwrap();
        let top = tr.history.iter().map(|r| r.val_auroc).fold(f64::MIN, f64::max);
        assert_eq!(best.auroc, top);
        assert_eq!(tr.best_model().store.values(), best.params.as_slice());
    }

    #[test]
    fn history_csv_has_a_header_and_rows() {
        let mut tr = trainer(small(0));
        tr.step().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        write_history(&path, &tr.history).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "epoch,loss,loss_s,loss_c,loss_d,val_auroc,val_auprc,val_f1,lr");
        assert_eq!(lines.len(), 2);
    }
}
