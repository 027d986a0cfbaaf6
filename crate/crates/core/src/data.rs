//! Dataset ingestion, train/validation/test splits and negative sampling.

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::smiles::{parse_smiles, MolecularGraph};

/// A drug identifier with its SMILES string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DrugRecord {
    pub id: String,
    pub smiles: String,
}

/// Parseable drugs, their molecular graphs and deduplicated positive pairs.
///
/// Pairs are stored as drug indices `(i, j)` with `i < j`, sorted.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub drugs: Vec<DrugRecord>,
    pub graphs: Vec<MolecularGraph>,
    pub pairs: Vec<(usize, usize)>,
    index: HashMap<String, usize>,
}

/// Canonical unordered key for a pair.
pub fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

impl Dataset {
    /// Parses every SMILES, drops unparseable drugs along with their
    /// interactions, and deduplicates pairs as unordered.
    pub fn from_records(drugs: Vec<DrugRecord>, interactions: &[(String, String)]) -> Result<Self> {
        let mut kept = Vec::with_capacity(drugs.len());
        let mut graphs = Vec::with_capacity(drugs.len());
        let mut index = HashMap::new();
        let mut dropped = HashSet::new();
        for rec in drugs {
            if index.contains_key(&rec.id) || dropped.contains(&rec.id) {
                return Err(Error::InvalidArgument(format!("duplicate drug id {}", rec.id)));
            }
            match parse_smiles(&rec.smiles) {
                Ok(g) => {
                    index.insert(rec.id.clone(), kept.len());
                    kept.push(rec);
                    graphs.push(g);
                }
                Err(e) => {
                    warn!("dropping drug {}: {e}", rec.id);
                    dropped.insert(rec.id);
                }
            }
        }
        if !dropped.is_empty() {
            info!("dropped {} drugs with unparseable SMILES", dropped.len());
        }

        let mut seen = HashSet::new();
        let (mut orphaned, mut unknown, mut selfs) = (0usize, 0usize, 0usize);
        for (a, b) in interactions {
            let (Some(&i), Some(&j)) = (index.get(a), index.get(b)) else {
                if dropped.contains(a) || dropped.contains(b) {
                    orphaned += 1;
                } else {
                    unknown += 1;
                }
                continue;
            };
            if i == j {
                selfs += 1;
                continue;
            }
            seen.insert(ordered(i, j));
        }
        if orphaned > 0 {
            info!("dropped {orphaned} interactions that reference dropped drugs");
        }
        if unknown > 0 {
            warn!("dropped {unknown} interactions that reference unknown drug ids");
        }
        if selfs > 0 {
            warn!("dropped {selfs} self-interaction rows");
        }
        let mut pairs: Vec<_> = seen.into_iter().collect();
        pairs.sort_unstable();
        Ok(Dataset {
            drugs: kept,
            graphs,
            pairs,
            index,
        })
    }

    pub fn drug_count(&self) -> usize {
        self.drugs.len()
    }

    /// Row index of a drug id.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn positive_set(&self) -> HashSet<(usize, usize)> {
        self.pairs.iter().copied().collect()
    }
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Reads a two-column CSV with a header row.
pub fn read_two_columns(path: &Path) -> Result<Vec<(String, String)>> {
    let mut reader = open(path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(Error::Format {
                path: path.into(),
                line,
                message: format!("expected 2 columns, found {}", rec.len()),
            });
        }
        rows.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Format {
        path: path.into(),
        line,
        message: e.to_string(),
    }
}

/// Loads `drug_id,smiles` and `drug_id_a,drug_id_b` files.
pub fn load(drugs_path: &Path, interactions_path: &Path) -> Result<Dataset> {
    let drugs = read_two_columns(drugs_path)?
        .into_iter()
        .map(|(id, smiles)| DrugRecord { id, smiles })
        .collect();
    let interactions = read_two_columns(interactions_path)?;
    let ds = Dataset::from_records(drugs, &interactions)?;
    info!(
        "loaded {} drugs and {} interactions",
        ds.drug_count(),
        ds.pairs.len()
    );
    Ok(ds)
}

/// Writes drugs back out in the input format.
pub fn write_drugs(path: &Path, drugs: &[DrugRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["drug_id", "smiles"]).map_err(|e| csv_error(path, e))?;
    for d in drugs {
        w.write_record([&d.id, &d.smiles]).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Which partition a labeled pair belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub const ALL: [SplitTag; 3] = [SplitTag::Train, SplitTag::Val, SplitTag::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        SplitTag::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

/// A drug pair with its interaction label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct LabeledPair {
    pub i: usize,
    pub j: usize,
    pub label: u8,
}

/// Labeled pairs per partition. Positives come first in each list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct DatasetSplit {
    pub train: Vec<LabeledPair>,
    pub val: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

impl DatasetSplit {
    pub fn part(&self, tag: SplitTag) -> &[LabeledPair] {
        match tag {
            SplitTag::Train => &self.train,
            SplitTag::Val => &self.val,
            SplitTag::Test => &self.test,
        }
    }

    fn part_mut(&mut self, tag: SplitTag) -> &mut Vec<LabeledPair> {
        match tag {
            SplitTag::Train => &mut self.train,
            SplitTag::Val => &mut self.val,
            SplitTag::Test => &mut self.test,
        }
    }

    /// Training positives; the only edges the GCN may see.
    pub fn train_positives(&self) -> Vec<(usize, usize)> {
        self.train
            .iter()
            .filter(|p| p.label == 1)
            .map(|p| (p.i, p.j))
            .collect()
    }

    /// Stable content hash for reproducibility checks.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.hash(&mut h);
        h.finish()
    }

    /// Fails if any validation or test positive is also a training edge.
    pub fn check_no_leak(&self) -> Result<()> {
        let train: HashSet<_> = self.train_positives().into_iter().map(|(i, j)| ordered(i, j)).collect();
        for tag in [SplitTag::Val, SplitTag::Test] {
            if let Some(p) = self
                .part(tag)
                .iter()
                .find(|p| p.label == 1 && train.contains(&ordered(p.i, p.j)))
            {
                return Err(Error::InvalidArgument(format!(
                    "{} positive ({}, {}) leaks into the training graph",
                    tag.as_str(),
                    p.i,
                    p.j
                )));
            }
        }
        Ok(())
    }
}

/// Partitions positives: `⌊P/5⌋` test, then a quarter of the rest to
/// validation, remainder to train.
pub fn split<R: Rng + ?Sized>(pairs: &[(usize, usize)], rng: &mut R) -> Result<DatasetSplit> {
    if pairs.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "at least 5 positive pairs are needed to split, got {}",
            pairs.len()
        )));
    }
    let mut shuffled = pairs.to_vec();
    shuffled.shuffle(rng);
    let n_test = shuffled.len() / 5;
    let n_val = (shuffled.len() - n_test) / 4;
    let label = |&(i, j): &(usize, usize)| LabeledPair { i, j, label: 1 };
    let test = shuffled[..n_test].iter().map(label).collect();
    let val = shuffled[n_test..n_test + n_val].iter().map(label).collect();
    let train = shuffled[n_test + n_val..].iter().map(label).collect();
    Ok(DatasetSplit { train, val, test })
}

/// Adds as many negatives to each partition as it has positives. A
/// negative is never a known positive and never reused across partitions.
pub fn sample_negatives<R: Rng + ?Sized>(
    split: &mut DatasetSplit,
    positives: &HashSet<(usize, usize)>,
    n_drugs: usize,
    rng: &mut R,
) -> Result<()> {
    let total_pairs = n_drugs * n_drugs.saturating_sub(1) / 2;
    let needed: usize = SplitTag::ALL
        .iter()
        .map(|&t| split.part(t).iter().filter(|p| p.label == 1).count())
        .sum();
    let free = total_pairs.saturating_sub(positives.len());
    if free < needed {
        return Err(Error::InvalidArgument(format!(
            "need {needed} negative pairs but only {free} non-interacting pairs exist"
        )));
    }
    let mut used: HashSet<(usize, usize)> = HashSet::with_capacity(needed);
    let dense = free < 2 * needed;
    let mut pool: Vec<(usize, usize)> = if dense {
        let mut all: Vec<_> = (0..n_drugs)
            .flat_map(|i| (i + 1..n_drugs).map(move |j| (i, j)))
            .filter(|p| !positives.contains(p))
            .collect();
        all.shuffle(rng);
        all
    } else {
        Vec::new()
    };
    for tag in SplitTag::ALL {
        let want = split.part(tag).iter().filter(|p| p.label == 1).count();
        let mut drawn = Vec::with_capacity(want);
        while drawn.len() < want {
            let pair = if dense {
                pool.pop().expect("pool holds enough pairs")
            } else {
                let i = rng.gen_range(0..n_drugs);
                let j = rng.gen_range(0..n_drugs);
                if i == j {
                    continue;
                }
                ordered(i, j)
            };
            if positives.contains(&pair) || !used.insert(pair) {
                continue;
            }
            drawn.push(LabeledPair {
                i: pair.0,
                j: pair.1,
                label: 0,
            });
        }
        split.part_mut(tag).extend(drawn);
    }
    Ok(())
}

/// Split plus negatives plus the leak check.
pub fn prepare_split<R: Rng + ?Sized>(ds: &Dataset, rng: &mut R) -> Result<DatasetSplit> {
    let mut s = split(&ds.pairs, rng)?;
    sample_negatives(&mut s, &ds.positive_set(), ds.drug_count(), rng)?;
    s.check_no_leak()?;
    Ok(s)
}

/// `count` distinct unordered pairs outside `exclude`, or fewer when the
/// graph is too dense to supply them.
pub fn sample_unlabeled<R: Rng + ?Sized>(
    n_drugs: usize,
    exclude: &HashSet<(usize, usize)>,
    count: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let total = n_drugs * n_drugs.saturating_sub(1) / 2;
    let available = total.saturating_sub(exclude.len());
    let count = count.min(available);
    if available < 2 * count {
        let mut pool: Vec<_> = (0..n_drugs)
            .flat_map(|i| (i + 1..n_drugs).map(move |j| (i, j)))
            .filter(|p| !exclude.contains(p))
            .collect();
        let (chosen, _) = pool.partial_shuffle(rng, count);
        let mut out = chosen.to_vec();
        out.sort_unstable();
        return out;
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let i = rng.gen_range(0..n_drugs);
        let j = rng.gen_range(0..n_drugs);
        if i == j {
            continue;
        }
        let p = ordered(i, j);
        if !exclude.contains(&p) && seen.insert(p) {
            out.push(p);
        }
    }
    out
}

/// Writes `drug_a,drug_b,label,split`.
pub fn write_split(path: &Path, split: &DatasetSplit, drugs: &[DrugRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["drug_a", "drug_b", "label", "split"])
        .map_err(|e| csv_error(path, e))?;
    for tag in SplitTag::ALL {
        for p in split.part(tag) {
            w.write_record([
                drugs[p.i].id.as_str(),
                drugs[p.j].id.as_str(),
                if p.label == 1 { "1" } else { "0" },
                tag.as_str(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a split written by [`write_split`], resolving ids against `ds`.
pub fn read_split(path: &Path, ds: &Dataset) -> Result<DatasetSplit> {
    let mut reader = open(path)?;
    let mut split = DatasetSplit::default();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Format {
            path: path.into(),
            line,
            message,
        };
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 columns, found {}", rec.len())));
        }
        let id = |s: &str| ds.index_of(s).ok_or_else(|| bad(format!("unknown drug id {s}")));
        let (i, j) = (id(&rec[0])?, id(&rec[1])?);
        let label = match &rec[2] {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(format!("label {other} is not 0 or 1"))),
        };
        let tag = SplitTag::parse(&rec[3]).ok_or_else(|| bad(format!("unknown split tag {}", &rec[3])))?;
        split.part_mut(tag).push(LabeledPair { i, j, label });
    }
    split.check_no_leak()?;
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn rec(id: &str, smiles: &str) -> DrugRecord {
        DrugRecord {
            id: id.into(),
            smiles: smiles.into(),
        }
    }

    fn pair(a: &str, b: &str) -> (String, String) {
        (a.into(), b.into())
    }

    fn chain_pairs(n: usize, m: usize) -> Vec<(usize, usize)> {
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .take(m)
            .collect()
    }

    #[test]
    fn records_load_cleanly() {
        let ds = Dataset::from_records(
            vec![rec("a", "CCO"), rec("b", "c1ccccc1"), rec("c", "O")],
            &[pair("a", "b"), pair("b", "c")],
        )
        .unwrap();
        assert_eq!(ds.drug_count(), 3);
        assert_eq!(ds.pairs, vec![(0, 1), (1, 2)]);
        assert_eq!(ds.index_of("c"), Some(2));
    }

    #[test]
    fn unparseable_drug_and_its_edges_are_dropped() {
        let ds = Dataset::from_records(
            vec![rec("a", "CCO"), rec("bad", "C1"), rec("c", "O")],
            &[pair("a", "bad"), pair("a", "c"), pair("c", "bad")],
        )
        .unwrap();
        assert_eq!(ds.drug_count(), 2);
        assert_eq!(ds.index_of("bad"), None);
        assert_eq!(ds.pairs, vec![(0, 1)]);
    }

    #[test]
    fn reversed_duplicates_and_self_rows_collapse() {
        let ds = Dataset::from_records(
            vec![rec("a", "C"), rec("b", "N")],
            &[pair("a", "b"), pair("b", "a"), pair("a", "a")],
        )
        .unwrap();
        assert_eq!(ds.pairs, vec![(0, 1)]);
        assert!(Dataset::from_records(vec![rec("a", "C"), rec("a", "N")], &[]).is_err());
    }

    #[test]
    fn csv_errors_name_path_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let drugs = dir.path().join("drugs.csv");
        let mut f = File::create(&drugs).unwrap();
        writeln!(f, "drug_id,smiles\na,CCO\nb,CC,extra").unwrap();
        let err = read_two_columns(&drugs).unwrap_err().to_string();
        assert!(err.contains("drugs.csv:3"), "{err}");

        let missing = dir.path().join("nope.csv");
        let err = load(&missing, &drugs).unwrap_err().to_string();
        assert!(err.contains("nope.csv"), "{err}");
    }

    #[test]
    fn hundred_pairs_split_sixty_twenty_twenty() {
        let pairs = chain_pairs(20, 100);
        let s = split(&pairs, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (60, 20, 20));
        let again = split(&pairs, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(s, again);
        let all: HashSet<_> = SplitTag::ALL
            .iter()
            .flat_map(|&t| s.part(t).iter().map(|p| (p.i, p.j)))
            .collect();
        assert_eq!(all.len(), 100);
        assert!(split(&pairs[..4], &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn split_counts_track_ratios() {
        for n in 5..200 {
            let s = split(&chain_pairs(30, n), &mut ChaCha8Rng::seed_from_u64(n as u64)).unwrap();
            let test = n as f64 / 5.0;
            let val = (n as f64 - s.test.len() as f64) / 4.0;
            assert!((s.test.len() as f64 - test).abs() < 1.0);
            assert!((s.val.len() as f64 - val).abs() < 1.0);
            assert_eq!(s.train.len() + s.val.len() + s.test.len(), n);
        }
    }

    #[test]
    fn saturated_graph_has_no_negatives() {
        let pairs = chain_pairs(4, 6);
        let mut s = split(&pairs, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let set: HashSet<_> = pairs.into_iter().collect();
        assert!(sample_negatives(&mut s, &set, 4, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn negatives_are_balanced_and_disjoint() {
        for (n, m, seed) in [(30, 80, 1), (12, 30, 2), (200, 400, 3)] {
            let pairs = chain_pairs(n, m);
            let set: HashSet<_> = pairs.iter().copied().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = split(&pairs, &mut rng).unwrap();
            sample_negatives(&mut s, &set, n, &mut rng).unwrap();
            let mut used = HashSet::new();
            for tag in SplitTag::ALL {
                let part = s.part(tag);
                let pos = part.iter().filter(|p| p.label == 1).count();
                assert_eq!(pos * 2, part.len());
                for p in part.iter().filter(|p| p.label == 0) {
                    assert!(p.i < p.j);
                    assert!(!set.contains(&(p.i, p.j)));
                    assert!(used.insert((p.i, p.j)));
                }
            }
        }
    }

    #[test]
    fn leak_check_catches_shared_edges() {
        let mut s = DatasetSplit::default();
        s.train.push(LabeledPair { i: 0, j: 1, label: 1 });
        s.test.push(LabeledPair { i: 1, j: 0, label: 1 });
        assert!(s.check_no_leak().is_err());
        s.test[0].label = 0;
        assert!(s.check_no_leak().is_ok());
    }

    #[test]
    fn unlabeled_pairs_avoid_exclusions() {
        let exclude: HashSet<_> = chain_pairs(10, 20).into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = sample_unlabeled(10, &exclude, 20, &mut rng);
        assert_eq!(u.len(), 20);
        assert_eq!(u.iter().collect::<HashSet<_>>().len(), 20);
        assert!(u.iter().all(|p| p.0 < p.1 && !exclude.contains(p)));
        // only 25 free pairs remain
        assert_eq!(sample_unlabeled(10, &exclude, 40, &mut rng).len(), 25);
    }

    #[test]
    fn split_file_round_trips() {
        let drugs: Vec<_> = (0..12).map(|i| rec(&format!("D{i}"), "CC")).collect();
        let ds = Dataset::from_records(drugs, &[]).unwrap();
        let pairs = chain_pairs(12, 30);
        let set: HashSet<_> = pairs.iter().copied().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = split(&pairs, &mut rng).unwrap();
        sample_negatives(&mut s, &set, 12, &mut rng).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.csv");
        write_split(&path, &s, &ds.drugs).unwrap();
        let back = read_split(&path, &ds).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.fingerprint(), s.fingerprint());
    }
}
