//! Planted two-community interaction networks for testing.
//!
//! Each drug carries one of ten molecules. Molecules 0–4 form community A
//! and 5–9 community B. Within a community the molecule types sit on a
//! 5-cycle, and two drugs may interact only when their types are adjacent
//! on it. Edges are a uniform sample of those candidate pairs.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, DrugRecord};
use crate::error::{Error, Result};

/// Ten small molecules: aliphatic community first, aromatic second.
pub const MOLECULE_POOL: [&str; 10] = [
    "CCO",
    "CCN",
    "CC(=O)O",
    "CCCCC",
    "COC(C)=O",
    "c1ccccc1",
    "c1ccncc1",
    "Oc1ccccc1",
    "c1ccoc1",
    "Cc1ccc(Cl)cc1",
];

/// Molecule type of drug `i` when drugs are assigned round-robin.
pub fn molecule_of(i: usize) -> usize {
    i % MOLECULE_POOL.len()
}

pub fn community_of(i: usize) -> usize {
    molecule_of(i) / 5
}

/// Whether the planted rule allows an edge between drugs `i` and `j`.
pub fn may_interact(i: usize, j: usize) -> bool {
    let (a, b) = (molecule_of(i), molecule_of(j));
    if i == j || a / 5 != b / 5 {
        return false;
    }
    let (x, y) = (a % 5, b % 5);
    (x + 1) % 5 == y || (y + 1) % 5 == x
}

/// Every pair the rule allows, as `(i, j)` with `i < j`.
pub fn candidate_pairs(n_drugs: usize) -> Vec<(usize, usize)> {
    (0..n_drugs)
        .flat_map(|i| (i + 1..n_drugs).map(move |j| (i, j)))
        .filter(|&(i, j)| may_interact(i, j))
        .collect()
}

/// `n_drugs` drugs with `n_edges` interactions drawn from the rule.
pub fn planted_network(n_drugs: usize, n_edges: usize, seed: u64) -> Result<Dataset> {
    let candidates = candidate_pairs(n_drugs);
    if n_edges > candidates.len() {
        return Err(Error::InvalidArgument(format!(
            "{n_edges} edges requested but the rule allows only {}",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = index::sample(&mut rng, candidates.len(), n_edges).into_vec();
    chosen.sort_unstable();
    let drugs: Vec<DrugRecord> = (0..n_drugs)
        .map(|i| DrugRecord {
            id: format!("D{i:04}"),
            smiles: MOLECULE_POOL[molecule_of(i)].to_string(),
        })
        .collect();
    let interactions: Vec<(String, String)> = chosen
        .into_iter()
        .map(|k| {
            let (i, j) = candidates[k];
            (drugs[i].id.clone(), drugs[j].id.clone())
        })
        .collect();
    Dataset::from_records(drugs, &interactions)
}

/// The 30-drug, 80-edge toy instance.
pub fn toy_network(seed: u64) -> Result<Dataset> {
    planted_network(30, 80, seed)
}

/// Same density as the toy instance at a different size.
pub fn scaled_network(n_drugs: usize, seed: u64) -> Result<Dataset> {
    planted_network(n_drugs, n_drugs * 8 / 3, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_shape() {
        assert_eq!(candidate_pairs(30).len(), 90);
        let ds = toy_network(1).unwrap();
        assert_eq!(ds.drug_count(), 30);
        assert_eq!(ds.pairs.len(), 80);
        for &(i, j) in &ds.pairs {
            assert!(may_interact(i, j));
            assert_eq!(community_of(i), community_of(j));
        }
        let smiles: std::collections::HashSet<_> = ds.drugs.iter().map(|d| d.smiles.as_str()).collect();
        assert_eq!(smiles.len(), 10);
    }

    #[test]
    fn seeds_change_edges_not_drugs() {
        let (a, b) = (toy_network(1).unwrap(), toy_network(2).unwrap());
        assert_eq!(a.drugs, b.drugs);
        assert_ne!(a.pairs, b.pairs);
        assert_eq!(a.pairs, toy_network(1).unwrap().pairs);
    }

    #[test]
    fn scaled_sizes_keep_density() {
        for n in [100, 200, 400] {
            let ds = scaled_network(n, 0).unwrap();
            assert_eq!(ds.drug_count(), n);
            assert_eq!(ds.pairs.len(), n * 8 / 3);
        }
        assert!(planted_network(30, 91, 0).is_err());
    }
}
