//! Tests that decide whether per-gene θ samples come from the null (split at
//! depth 1) or from the alternative with a shorter internal split.
//!
//! Shorter trees produce fewer substitutions, so the alternative is always the
//! stochastically smaller sample.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};
use crate::util::{ceil_tol, fraction_le};

/// Quantile constant `C` in the `C / sqrt(k)` quantile.
pub const DEFAULT_QUANTILE_C: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    Null,
    Alternative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneSampleSet {
    k: usize,
    thetas: Vec<u32>,
    truth: Option<Hypothesis>,
}

impl GeneSampleSet {
    pub fn new(k: usize, thetas: Vec<u32>) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::Domain("a sample set needs at least one gene".into()));
        }
        if let Some(t) = thetas.iter().find(|&&t| t as usize > k) {
            return Err(Error::Domain(format!("theta {t} exceeds k = {k}")));
        }
        Ok(GeneSampleSet { k, thetas, truth: None })
    }

    pub fn with_truth(mut self, h: Hypothesis) -> Self {
        self.truth = Some(h);
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.thetas.len()
    }

    pub fn thetas(&self) -> &[u32] {
        &self.thetas
    }

    pub fn truth(&self) -> Option<Hypothesis> {
        self.truth
    }

    /// Number of genes with `θ/k <= p`.
    pub fn count_le_fraction(&self, p: f64) -> usize {
        self.thetas.iter().filter(|&&t| fraction_le(t as u64, self.k as u64, p)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Null,
    Alternative,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub decision: Decision,
    pub statistic: f64,
    pub threshold: f64,
    pub split_seed: Option<u64>,
}

/// Which of two datasets a two-sample test flags as the alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    First,
    Second,
    Undecided,
}

impl Which {
    pub fn swapped(self) -> Which {
        match self {
            Which::First => Which::Second,
            Which::Second => Which::First,
            Which::Undecided => Which::Undecided,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleVerdict {
    /// The dataset judged to come from the alternative.
    pub decision: Which,
    /// Per-dataset statistic (first, second).
    pub statistic: (f64, f64),
    pub threshold: Option<f64>,
    pub split_seed: Option<u64>,
}

/// Counts genes with `θ/k <= p0` and declares the alternative when the count
/// reaches the midpoint `m w + (m/2)(w' - w)` between the two expected counts.
pub fn oracle_quantile_test(samples: &GeneSampleSet, p0: f64, w: f64, w_prime: f64) -> Result<TestVerdict> {
    if !(w < w_prime) {
        return Err(Error::Domain(format!("oracle test needs w < w', got w = {w}, w' = {w_prime}")));
    }
    let m = samples.m() as f64;
    let count = samples.count_le_fraction(p0) as f64;
    let threshold = m * w + 0.5 * m * (w_prime - w);
    // Forgive rounding in the threshold arithmetic.
    let decision = if count >= threshold - 1e-9 * threshold.abs().max(1.0) {
        Decision::Alternative
    } else {
        Decision::Null
    };
    Ok(TestVerdict { decision, statistic: count, threshold, split_seed: None })
}

/// Smallest sample value `v` with `#{θ <= v} >= max(1, ceil(q m))`.
pub fn empirical_quantile(samples: &GeneSampleSet, q: f64) -> Result<u32> {
    quantile_of(samples.thetas(), q)
}

pub(crate) fn quantile_of(values: &[u32], q: f64) -> Result<u32> {
    if values.is_empty() {
        return Err(Error::Domain("quantile of an empty sample".into()));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1], got {q}")));
    }
    let rank = (ceil_tol(q * values.len() as f64) as usize).clamp(1, values.len());
    let mut v = values.to_vec();
    let (_, nth, _) = v.select_nth_unstable(rank - 1);
    Ok(*nth)
}

/// Quantile level `min(1, C / sqrt(k))`.
pub fn quantile_level(c: f64, k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        (c / (k as f64).sqrt()).min(1.0)
    }
}

/// Seeded split of `0..n` into halves. The permutation depends only on
/// `(seed, n)`, so two datasets of equal size are split identically and
/// swapping them swaps the verdict.
fn split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng(derive_seed(seed, n as u64)));
    let second = idx.split_off(n / 2);
    (idx, second)
}

/// Two-sample test that needs no knowledge of the null: estimate the
/// `C/sqrt(k)` quantile of each dataset on one half, take the larger, and
/// compare the fraction of the other half falling at or below it.
pub fn agnostic_two_sample_test(
    first: &GeneSampleSet,
    second: &GeneSampleSet,
    c: f64,
    split_seed: u64,
) -> Result<TwoSampleVerdict> {
    if first.k() != second.k() {
        return Err(Error::SiteCountMismatch { left: first.k(), right: second.k() });
    }
    if first.m() < 2 || second.m() < 2 {
        return Err(Error::Domain("each dataset needs at least two genes to split".into()));
    }
    if !(c > 0.0) {
        return Err(Error::Domain(format!("quantile constant must be positive, got {c}")));
    }
    let q = quantile_level(c, first.k());
    let halves = |s: &GeneSampleSet| {
        let (a, b) = split(s.m(), split_seed);
        let pick = |ix: Vec<usize>| ix.into_iter().map(|i| s.thetas()[i]).collect::<Vec<u32>>();
        (pick(a), pick(b))
    };
    let (t1a, t1b) = halves(first);
    let (t2a, t2b) = halves(second);
    let p_hat = quantile_of(&t1a, q)?.max(quantile_of(&t2a, q)?);
    let below = |v: &[u32]| v.iter().filter(|&&t| t <= p_hat).count() as u64;
    let (c1, n1, c2, n2) = (below(&t1b), t1b.len() as u64, below(&t2b), t2b.len() as u64);
    // Compare c1/n1 with c2/n2 exactly.
    let decision = match (c1 * n2).cmp(&(c2 * n1)) {
        std::cmp::Ordering::Less => Which::Second,
        std::cmp::Ordering::Greater => Which::First,
        std::cmp::Ordering::Equal => Which::Undecided,
    };
    let k = first.k().max(1) as f64;
    Ok(TwoSampleVerdict {
        decision,
        statistic: (c1 as f64 / n1 as f64, c2 as f64 / n2 as f64),
        threshold: Some(p_hat as f64 / k),
        split_seed: Some(split_seed),
    })
}

/// Flags the dataset with the smaller mean θ.
pub fn mean_test(first: &GeneSampleSet, second: &GeneSampleSet) -> Result<TwoSampleVerdict> {
    if first.k() != second.k() {
        return Err(Error::SiteCountMismatch { left: first.k(), right: second.k() });
    }
    let sum = |s: &GeneSampleSet| s.thetas().iter().map(|&t| t as u128).sum::<u128>();
    let (s1, s2) = (sum(first), sum(second));
    let (n1, n2) = (first.m() as u128, second.m() as u128);
    let decision = match (s1 * n2).cmp(&(s2 * n1)) {
        std::cmp::Ordering::Less => Which::First,
        std::cmp::Ordering::Greater => Which::Second,
        std::cmp::Ordering::Equal => Which::Undecided,
    };
    Ok(TwoSampleVerdict {
        decision,
        statistic: (s1 as f64 / n1 as f64, s2 as f64 / n2 as f64),
        threshold: None,
        split_seed: None,
    })
}

/// Flags the dataset with the smaller minimum `θ/k`.
pub fn min_test(first: &GeneSampleSet, second: &GeneSampleSet) -> Result<TwoSampleVerdict> {
    let min = |s: &GeneSampleSet| *s.thetas().iter().min().expect("sample sets are non-empty") as u128;
    let (a, b) = (min(first), min(second));
    let (k1, k2) = (first.k().max(1) as u128, second.k().max(1) as u128);
    let decision = match (a * k2).cmp(&(b * k1)) {
        std::cmp::Ordering::Less => Which::First,
        std::cmp::Ordering::Greater => Which::Second,
        std::cmp::Ordering::Equal => Which::Undecided,
    };
    Ok(TwoSampleVerdict {
        decision,
        statistic: (a as f64 / k1 as f64, b as f64 / k2 as f64),
        threshold: None,
        split_seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(k: usize, v: &[u32]) -> GeneSampleSet {
        GeneSampleSet::new(k, v.to_vec()).unwrap()
    }

    #[test]
    fn oracle_threshold_arithmetic() {
        let mut v = vec![10u32; 100];
        for t in v.iter_mut().take(20) {
            *t = 1;
        }
        let s = set(10, &v);
        let r = oracle_quantile_test(&s, 0.5, 0.1, 0.2).unwrap();
        assert_eq!(r.threshold, 15.0);
        assert_eq!(r.statistic, 20.0);
        assert_eq!(r.decision, Decision::Alternative);
        let r = oracle_quantile_test(&set(10, &[10; 100]), 0.5, 0.1, 0.2).unwrap();
        assert_eq!(r.decision, Decision::Null);
        assert!(oracle_quantile_test(&s, 0.5, 0.2, 0.2).is_err());
    }

    #[test]
    fn quantiles() {
        assert_eq!(empirical_quantile(&set(9, &[1, 2, 3, 4]), 0.5).unwrap(), 2);
        assert_eq!(empirical_quantile(&set(9, &[7]), 0.01).unwrap(), 7);
        assert_eq!(empirical_quantile(&set(9, &[3, 1, 2]), 1.0).unwrap(), 3);
        assert_eq!(empirical_quantile(&set(9, &[3, 1, 2]), 1e-9).unwrap(), 1);
        assert!(empirical_quantile(&set(9, &[3]), 0.0).is_err());
        assert!(GeneSampleSet::new(9, vec![]).is_err());
        assert!(GeneSampleSet::new(9, vec![10]).is_err());
    }

    #[test]
    fn agnostic_symmetry_and_shift() {
        let a = set(100, &[60, 61, 62, 63, 64, 65, 66, 67, 68, 69, 70, 71]);
        let r = agnostic_two_sample_test(&a, &a, 1.0, 3).unwrap();
        assert_eq!(r.decision, Which::Undecided);
        // Shifting every value down by one can only tie (when the split hides
        // every copy of the quantile's successor) or flag the shifted set.
        let base: Vec<u32> = (60..72).flat_map(|v| [v, v, v]).collect();
        let a = set(100, &base);
        let shifted = set(100, &base.iter().map(|t| t - 1).collect::<Vec<_>>());
        let mut decided = 0;
        for seed in 0..50 {
            let r = agnostic_two_sample_test(&a, &shifted, 1.0, seed).unwrap();
            assert_ne!(r.decision, Which::First, "seed {seed}");
            decided += (r.decision == Which::Second) as usize;
            let r2 = agnostic_two_sample_test(&shifted, &a, 1.0, seed).unwrap();
            assert_eq!(r2.decision, r.decision.swapped());
        }
        assert!(decided >= 45, "{decided}");
        assert!(agnostic_two_sample_test(&a, &set(99, &[1, 2]), 1.0, 0).is_err());
        assert!(agnostic_two_sample_test(&a, &set(100, &[1]), 1.0, 0).is_err());
    }

    #[test]
    fn mean_and_min() {
        assert_eq!(mean_test(&set(9, &[5, 5, 5]), &set(9, &[4, 4, 4])).unwrap().decision, Which::Second);
        assert_eq!(mean_test(&set(9, &[4, 6]), &set(9, &[5, 5])).unwrap().decision, Which::Undecided);
        assert_eq!(min_test(&set(9, &[3, 8]), &set(9, &[7, 9])).unwrap().decision, Which::First);
        assert_eq!(min_test(&set(9, &[3, 8]), &set(9, &[3, 4])).unwrap().decision, Which::Undecided);
    }

    #[test]
    fn verdict_json() {
        let v = agnostic_two_sample_test(&set(4, &[1, 2, 3, 4]), &set(4, &[0, 1, 2, 3]), 1.0, 9).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert!(s.contains("\"split_seed\":9"), "{s}");
        let t = oracle_quantile_test(&set(4, &[1]), 0.5, 0.1, 0.3).unwrap();
        assert!(serde_json::to_string(&t).unwrap().contains("\"decision\":\"alternative\""));
    }

    proptest! {
        #[test]
        fn agnostic_is_label_symmetric(
            a in proptest::collection::vec(0u32..=50, 2..40),
            b in proptest::collection::vec(0u32..=50, 2..40),
            c in 0.1f64..5.0,
            seed in any::<u64>(),
        ) {
            let (a, b) = (set(50, &a), set(50, &b));
            let x = agnostic_two_sample_test(&a, &b, c, seed).unwrap();
            let y = agnostic_two_sample_test(&b, &a, c, seed).unwrap();
            prop_assert_eq!(x.decision, y.decision.swapped());
            prop_assert_eq!(x, agnostic_two_sample_test(&a, &b, c, seed).unwrap());
        }

        #[test]
        fn oracle_monotone_in_count(
            v in proptest::collection::vec(0u32..=40, 1..60),
            idx in any::<prop::sample::Index>(),
        ) {
            let k = 40;
            let p0 = 0.5;
            let before = oracle_quantile_test(&set(k, &v), p0, 0.3, 0.5).unwrap();
            let mut raised = v.clone();
            let i = idx.index(v.len());
            if raised[i] <= 20 {
                raised[i] = 40;
            }
            let after = oracle_quantile_test(&set(k, &raised), p0, 0.3, 0.5).unwrap();
            if before.decision == Decision::Null {
                prop_assert_eq!(after.decision, Decision::Null);
            }
        }
    }
}
