//! Multispecies-coalescent and Jukes-Cantor simulation, exact laws of the
//! pairwise difference count θ, and tests that separate a species tree from
//! one with a slightly shorter internal branch using many short genes.

// Domain checks are written as `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coalescent;
pub mod detection;
pub mod error;
pub mod exact;
pub mod io;
pub mod newick;
pub mod pipeline;
pub mod reconstruct;
pub mod seed;
pub mod sequence;
pub mod species;
pub mod stats;
pub mod sweep;
pub mod util;

pub use coalescent::{attach_mutation_probs, sample_gene_tree, GeneTree};
pub use detection::{
    agnostic_two_sample_test, empirical_quantile, mean_test, min_test, oracle_quantile_test, Decision, GeneSampleSet,
    Hypothesis, TestVerdict, TwoSampleVerdict, Which,
};
pub use error::{Error, Result};
pub use exact::{
    hellinger2, hellinger_scaling_scan, mixture_decompose, null_mixing_density, oracle_rates, pmf_theta, tensorize_h2,
    tv, tv_bracket_m, MixingDensity, OracleRates, ScanRow, ThetaPmf,
};
pub use reconstruct::{quantile_distance_estimate, single_linkage_tree, triplet_topology, ClockTree, TripletCall};
pub use sequence::{jc_expected_theta, jc_invert, simulate_sequences, theta, PackedSeq, SequenceSet, ThetaMatrix};
pub use species::SpeciesTree;
pub use sweep::{calibrate_constants, run_sweep, run_trial, SweepConfig, SweepRecord, TestKind};
