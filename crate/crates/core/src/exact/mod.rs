//! Exact distributions of the pairwise difference count θ and divergences between them.

pub mod binomial;
pub mod divergence;
pub mod lemmas;
pub mod mixing;
pub mod pmf;
pub mod quadrature;
pub mod scan;

pub use divergence::{hellinger2, hellinger2_mixture, tensorize_h2, testing_error_floor, tv, tv_bracket_m};
pub use mixing::{mixture_decompose, null_mixing_density, MixingDensity, MixingTag, MixtureDecomposition};
pub use pmf::{pmf_theta, Provenance, ThetaPmf};
pub use scan::{hellinger_scaling_scan, ScanRow};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Probabilities that `θ/k <= p0` under each hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRates {
    pub p0: f64,
    /// Under the null.
    pub w: f64,
    /// Under the signal component.
    pub w1: f64,
    /// Under the alternative.
    pub w_prime: f64,
}

pub fn oracle_rates(f: f64, k: usize) -> Result<OracleRates> {
    let m = mixture_decompose(f)?;
    let p0 = m.p0.support().0;
    let w = pmf_theta(k, &m.p0)?.cdf_fraction(p0);
    let w1 = pmf_theta(k, &m.p1)?.cdf_fraction(p0);
    Ok(OracleRates { p0, w, w1, w_prime: (1.0 - m.sigma_f) * w + m.sigma_f * w1 })
}
