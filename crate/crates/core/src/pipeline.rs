//! Multilocus simulation: species tree to per-gene θ matrices.
//!
//! Gene `g` draws all of its randomness (gene tree, then sequences) from a
//! generator seeded with `derive_seed(seed, g)`, so results do not depend on
//! how genes are scheduled across threads.

use rand_distr::{Binomial, Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalescent::sample_gene_with_probs;
use crate::detection::GeneSampleSet;
use crate::error::{Error, Result};
use crate::exact::mixing::x_of_z;
use crate::seed::{derive_seed, rng};
use crate::sequence::{simulate_sequences_with, SequenceSet, ThetaMatrix};
use crate::species::SpeciesTree;

pub fn simulate_gene(species: &SpeciesTree, k: usize, gene: usize, seed: u64) -> Result<SequenceSet> {
    let mut r = rng(derive_seed(seed, gene as u64));
    let tree = sample_gene_with_probs(species, &mut r);
    let mut set = simulate_sequences_with(&tree, k, &mut r)?;
    set.gene = gene;
    Ok(set)
}

pub fn simulate_sequence_sets(species: &SpeciesTree, k: usize, m: usize, seed: u64) -> Result<Vec<SequenceSet>> {
    (0..m).into_par_iter().map(|g| simulate_gene(species, k, g, seed)).collect()
}

pub fn simulate_theta_matrices(species: &SpeciesTree, k: usize, m: usize, seed: u64) -> Result<Vec<ThetaMatrix>> {
    (0..m).into_par_iter().map(|g| simulate_gene(species, k, g, seed).map(|s| s.theta_matrix())).collect()
}

/// θ between leaves `a` and `b` across genes.
pub fn pair_samples(matrices: &[ThetaMatrix], a: usize, b: usize) -> Result<GeneSampleSet> {
    let first = matrices.first().ok_or_else(|| Error::Domain("no genes".into()))?;
    let k = first.k;
    if a >= first.n() || b >= first.n() {
        return Err(Error::Domain(format!("leaf index out of range for {} leaves", first.n())));
    }
    let mut v = Vec::with_capacity(matrices.len());
    for m in matrices {
        if m.k != k {
            return Err(Error::SiteCountMismatch { left: k, right: m.k });
        }
        v.push(m.get(a, b));
    }
    GeneSampleSet::new(k, v)
}

/// How two-leaf samples are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Simulator {
    /// Gene tree plus site-by-site sequence evolution.
    Full,
    /// `θ ~ Binomial(k, X)` with `X` drawn from the coalescence time directly.
    /// Same law as `Full` for two leaves; its cost does not grow with `k`.
    #[default]
    Collapsed,
}

/// `m` independent θ values for two species split at `tau`, from the full
/// sequence simulator.
pub fn simulate_pair(tau: f64, k: usize, m: usize, seed: u64) -> Result<GeneSampleSet> {
    let species = SpeciesTree::two_leaf(tau)?;
    let mats = simulate_theta_matrices(&species, k, m, seed)?;
    pair_samples(&mats, 0, 1)
}

/// `m` independent θ values for two species split at `tau`, drawing the
/// coalescence time and then the binomial count. Gene `g` uses
/// `derive_seed(seed, g)`, but the stream differs from [`simulate_pair`].
pub fn collapsed_pair(tau: f64, k: usize, m: usize, seed: u64) -> Result<GeneSampleSet> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("tau must be positive and finite, got {tau}")));
    }
    let thetas = (0..m)
        .into_par_iter()
        .map(|g| {
            let mut r = rng(derive_seed(seed, g as u64));
            let z: f64 = Exp1.sample(&mut r);
            let p = x_of_z(tau, z).clamp(0.0, 1.0);
            let b = Binomial::new(k as u64, p).map_err(|e| Error::Domain(e.to_string()))?;
            Ok(b.sample(&mut r) as u32)
        })
        .collect::<Result<Vec<u32>>>()?;
    GeneSampleSet::new(k, thetas)
}

pub fn sample_pair(tau: f64, k: usize, m: usize, seed: u64, sim: Simulator) -> Result<GeneSampleSet> {
    match sim {
        Simulator::Full => simulate_pair(tau, k, m, seed),
        Simulator::Collapsed => collapsed_pair(tau, k, m, seed),
    }
}
