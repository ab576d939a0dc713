//! Monte-Carlo power sweeps over `(f, k, m)` grids and calibration of the
//! gene-count multipliers.
//!
//! Every trial seeds itself from `(master seed, cell index, replicate)`, so a
//! sweep is reproducible regardless of thread count or scheduling.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{
    agnostic_two_sample_test, mean_test, min_test, oracle_quantile_test, Decision, Which, DEFAULT_QUANTILE_C,
};
use crate::error::{Error, Result};
use crate::exact::{mixture_decompose, oracle_rates, pmf_theta, tv_bracket_m, OracleRates};
use crate::exact::divergence::hellinger2_mixture;
use crate::pipeline::{sample_pair, simulate_theta_matrices, Simulator};
use crate::reconstruct::triplet_topology;
use crate::seed::derive_path;
use crate::species::SpeciesTree;
use crate::stats::{wilson_interval, Z95};
use crate::util::{genes_for_multiplier, genes_for_mu, sites_for};

pub const MAX_K: u64 = 1_000_000;
pub const MAX_SITES: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    OracleQuantile,
    Agnostic,
    Mean,
    Min,
    Triplet,
}

impl TestKind {
    pub fn name(self) -> &'static str {
        match self {
            TestKind::OracleQuantile => "oracle-quantile",
            TestKind::Agnostic => "agnostic",
            TestKind::Mean => "mean",
            TestKind::Min => "min",
            TestKind::Triplet => "triplet",
        }
    }
}

impl std::str::FromStr for TestKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "oracle-quantile" | "oracle" => TestKind::OracleQuantile,
            "agnostic" => TestKind::Agnostic,
            "mean" => TestKind::Mean,
            "min" => TestKind::Min,
            "triplet" => TestKind::Triplet,
            _ => return Err(Error::Config(format!("unknown test '{s}'"))),
        })
    }
}

fn default_quantile_c() -> f64 {
    DEFAULT_QUANTILE_C
}

/// Sweep description, read from JSON.
///
/// Sites come from `kappa` (`k = ceil(f^(2 kappa - 2))`) or from an explicit
/// `k` list; genes come from multipliers `c` (`m = ceil(c / (f^2 sqrt k))`) or
/// exponents `mu` (`m = ceil(f^(-1 - mu))`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub test: TestKind,
    pub f: Vec<f64>,
    #[serde(default)]
    pub kappa: Vec<f64>,
    #[serde(default)]
    pub k: Vec<u64>,
    #[serde(default)]
    pub c: Vec<f64>,
    #[serde(default)]
    pub mu: Vec<f64>,
    pub replicates: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_quantile_c")]
    pub quantile_c: f64,
    /// Fill the `seconds` column with wall time. Off by default so that
    /// reruns produce byte-identical files.
    #[serde(default)]
    pub record_timing: bool,
    /// Two-leaf sampler for the single-pair tests; triplets always use the
    /// full simulator.
    #[serde(default)]
    pub simulator: Simulator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneAxis {
    C,
    Mu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub test: TestKind,
    pub f: f64,
    /// Implied `1 + ln k / (2 ln f)` when `k` was given directly.
    pub kappa: f64,
    pub k: u64,
    pub axis: GeneAxis,
    pub mu_or_c: f64,
    pub m: u64,
}

impl Cell {
    pub fn new(test: TestKind, f: f64, k: u64, m: u64) -> Cell {
        Cell { test, f, kappa: implied_kappa(f, k), k, axis: GeneAxis::C, mu_or_c: f64::NAN, m }
    }
}

pub fn implied_kappa(f: f64, k: u64) -> f64 {
    1.0 + (k as f64).ln() / (2.0 * f.ln())
}

impl SweepConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: SweepConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.cells().map(|_| ())
    }

    /// Grid cells in `f`, then sites, then genes order.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let bad = |m: String| Err(Error::Config(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.f.is_empty() {
            return bad("f grid is empty".into());
        }
        if let Some(f) = self.f.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return bad(format!("f must lie in (0, 1), got {f}"));
        }
        if self.kappa.is_empty() == self.k.is_empty() {
            return bad("give exactly one of kappa or k".into());
        }
        if let Some(k) = self.kappa.iter().find(|k| !(**k > 0.0 && **k < 1.0)) {
            return bad(format!("kappa must lie in (0, 1), got {k}"));
        }
        if self.c.is_empty() == self.mu.is_empty() {
            return bad("give exactly one of c or mu".into());
        }
        if let Some(c) = self.c.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return bad(format!("c must be positive, got {c}"));
        }
        if let Some(m) = self.mu.iter().find(|m| !(**m > 0.0 && **m < 1.0)) {
            return bad(format!("mu must lie in (0, 1), got {m}"));
        }
        if !(self.quantile_c > 0.0) {
            return bad(format!("quantile_c must be positive, got {}", self.quantile_c));
        }
        let mut out = Vec::new();
        for &f in &self.f {
            let sites: Vec<(f64, u64)> = if self.k.is_empty() {
                self.kappa.iter().map(|&kap| (kap, sites_for(f, kap) as u64)).collect()
            } else {
                self.k.iter().map(|&k| (implied_kappa(f, k), k)).collect()
            };
            for (kappa, k) in sites {
                if k > MAX_K {
                    return bad(format!("k = {k} exceeds the limit of {MAX_K}"));
                }
                let (axis, vals) = if self.c.is_empty() { (GeneAxis::Mu, &self.mu) } else { (GeneAxis::C, &self.c) };
                for &v in vals {
                    let m = match axis {
                        GeneAxis::C => genes_for_multiplier(v, f, k),
                        GeneAxis::Mu => genes_for_mu(f, v),
                    } as u64;
                    if m.saturating_mul(k.max(1)) > MAX_SITES {
                        return bad(format!("m * k = {m} * {k} exceeds {MAX_SITES} sites"));
                    }
                    out.push(Cell { test: self.test, f, kappa, k, axis, mu_or_c: v, m });
                }
            }
        }
        Ok(out)
    }
}

/// Per-cell quantities that every replicate shares.
#[derive(Debug, Clone, Copy)]
pub struct CellContext {
    pub rates: Option<OracleRates>,
    pub quantile_c: f64,
    pub simulator: Simulator,
}

impl CellContext {
    pub fn new(cell: &Cell, quantile_c: f64) -> Result<Self> {
        let rates = match cell.test {
            TestKind::OracleQuantile => Some(oracle_rates(cell.f, cell.k as usize)?),
            _ => None,
        };
        Ok(CellContext { rates, quantile_c, simulator: Simulator::default() })
    }

    pub fn with_simulator(mut self, simulator: Simulator) -> Self {
        self.simulator = simulator;
        self
    }
}

/// One end-to-end replicate: simulate null (split at 1) and alternative
/// (split at `1 - f`) data, apply the test, and report whether it got both
/// right. Undecided counts as failure.
pub fn run_trial(cell: &Cell, ctx: &CellContext, seed: u64) -> Result<bool> {
    let (f, k, m) = (cell.f, cell.k as usize, cell.m as usize);
    let s_null = derive_path(seed, &[0]);
    let s_alt = derive_path(seed, &[1]);
    let s_split = derive_path(seed, &[2]);
    let pair = |tau: f64, k: usize, m: usize, s: u64| sample_pair(tau, k, m, s, ctx.simulator);
    match cell.test {
        TestKind::OracleQuantile => {
            let r = ctx.rates.ok_or_else(|| Error::Config("oracle test needs null and alternative rates".into()))?;
            let null = pair(1.0, k, m, s_null)?;
            let alt = pair(1.0 - f, k, m, s_alt)?;
            let a = oracle_quantile_test(&null, r.p0, r.w, r.w_prime)?;
            let b = oracle_quantile_test(&alt, r.p0, r.w, r.w_prime)?;
            Ok(a.decision == Decision::Null && b.decision == Decision::Alternative)
        }
        TestKind::Agnostic => {
            let null = pair(1.0, k, 2 * m, s_null)?;
            let alt = pair(1.0 - f, k, 2 * m, s_alt)?;
            Ok(agnostic_two_sample_test(&null, &alt, ctx.quantile_c, s_split)?.decision == Which::Second)
        }
        TestKind::Mean => {
            let null = pair(1.0, k, m, s_null)?;
            let alt = pair(1.0 - f, k, m, s_alt)?;
            Ok(mean_test(&null, &alt)?.decision == Which::Second)
        }
        TestKind::Min => {
            let null = pair(1.0, k, m, s_null)?;
            let alt = pair(1.0 - f, k, m, s_alt)?;
            Ok(min_test(&null, &alt)?.decision == Which::Second)
        }
        TestKind::Triplet => {
            let species = SpeciesTree::three_leaf(f, (0, 1))?;
            let mats = simulate_theta_matrices(&species, k, m, s_null)?;
            Ok(triplet_topology(&mats, [0, 1, 2], ctx.quantile_c, s_split)?.closest == Some((0, 1)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub test: String,
    pub f: f64,
    pub kappa: f64,
    pub k: u64,
    pub mu_or_c: f64,
    pub m: u64,
    pub replicates: u64,
    pub successes: u64,
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seconds: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    /// Some cell hit an error; its record carries the message.
    pub partial: bool,
}

/// Success count over `replicates` trials seeded `derive_path(base, [r])`.
pub fn estimate_power(cell: &Cell, ctx: &CellContext, replicates: u64, base_seed: u64) -> Result<u64> {
    let hits: Vec<bool> =
        (0..replicates).into_par_iter().map(|r| run_trial(cell, ctx, derive_path(base_seed, &[r]))).collect::<Result<_>>()?;
    Ok(hits.into_iter().filter(|&h| h).count() as u64)
}

fn record(cell: &Cell, replicates: u64, successes: u64, seconds: f64, error: String) -> SweepRecord {
    let (ci_lo, ci_hi) = wilson_interval(successes, replicates, Z95);
    SweepRecord {
        test: cell.test.name().to_string(),
        f: cell.f,
        kappa: cell.kappa,
        k: cell.k,
        mu_or_c: cell.mu_or_c,
        m: cell.m,
        replicates,
        successes,
        rate: successes as f64 / replicates as f64,
        ci_lo,
        ci_hi,
        seconds,
        error,
    }
}

pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutcome> {
    let cells = config.cells()?;
    let mut records = Vec::with_capacity(cells.len());
    let mut partial = false;
    for (i, cell) in cells.iter().enumerate() {
        let start = Instant::now();
        let result = CellContext::new(cell, config.quantile_c)
            .map(|c| c.with_simulator(config.simulator))
            .and_then(|ctx| estimate_power(cell, &ctx, config.replicates, derive_path(config.master_seed, &[i as u64])));
        let seconds = if config.record_timing { start.elapsed().as_secs_f64() } else { 0.0 };
        let rec = match result {
            Ok(s) => record(cell, config.replicates, s, seconds, String::new()),
            Err(e) => {
                log::warn!("cell {i} failed: {e}");
                partial = true;
                record(cell, config.replicates, 0, seconds, e.to_string())
            }
        };
        log::info!("{} f={} k={} m={}: {}/{}", rec.test, rec.f, rec.k, rec.m, rec.successes, rec.replicates);
        records.push(rec);
    }
    if let Some(path) = &config.output {
        write_records_atomic(&records, path)?;
    }
    Ok(SweepOutcome { records, partial })
}

pub fn write_records<W: std::io::Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes to a temporary file beside `path`, then renames it into place.
pub fn write_records_atomic(records: &[SweepRecord], path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    write_records(records, &mut tmp)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Evidence behind the indistinguishability multiplier `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerCertificate {
    pub c: f64,
    pub m: u64,
    pub h2_single: f64,
    pub tv_upper: f64,
    /// Minimum summed error of any test at this `m`.
    pub error_floor: f64,
}

/// Evidence behind the distinguishability multiplier `c'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCalibration {
    pub c_prime: f64,
    pub m: u64,
    pub successes: u64,
    pub replicates: u64,
    pub power: f64,
    pub steps: u32,
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub test: TestKind,
    pub f: f64,
    pub kappa: f64,
    pub k: u64,
    pub target: f64,
    pub lower: LowerCertificate,
    pub upper: PowerCalibration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub test: TestKind,
    pub replicates: u64,
    pub seed: u64,
    pub max_steps: u32,
    pub quantile_c: f64,
    pub simulator: Simulator,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions { test: TestKind::OracleQuantile, replicates: 200, seed: 0, max_steps: 12, quantile_c: DEFAULT_QUANTILE_C, simulator: Simulator::default() }
    }
}

fn scale(f: f64, k: u64) -> f64 {
    f * f * (k as f64).sqrt()
}

/// Squared Hellinger distance between the null and alternative θ laws.
pub fn single_gene_h2(f: f64, k: u64) -> Result<f64> {
    let mix = mixture_decompose(f)?;
    let p0 = pmf_theta(k as usize, &mix.p0)?;
    let p1 = pmf_theta(k as usize, &mix.p1)?;
    hellinger2_mixture(&p0, &p1, mix.sigma_f)
}

/// Largest multiplier `c` whose gene count keeps the exact total-variation
/// upper bound at or below `1 - target`.
pub fn certify_lower(f: f64, k: u64, target: f64) -> Result<LowerCertificate> {
    let h2 = single_gene_h2(f, k)?;
    let limit = 1.0 - target;
    let ok = |m: u64| tv_bracket_m(h2, m).map(|(_, hi)| hi <= limit);
    if !ok(1)? {
        return Err(Error::Bracket(format!(
            "a single gene already exceeds total variation {limit} (H^2 = {h2:.4}); f = {f} is outside the small-f regime"
        )));
    }
    let (mut lo, mut hi) = (1u64, 2u64);
    while ok(hi)? {
        lo = hi;
        hi = hi.checked_mul(2).ok_or_else(|| Error::Bracket("no upper end for m".into()))?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, tv_upper) = tv_bracket_m(h2, lo)?;
    Ok(LowerCertificate { c: lo as f64 * scale(f, k), m: lo, h2_single: h2, tv_upper, error_floor: 1.0 - tv_upper })
}

/// Smallest multiplier `c'` (to bisection resolution) whose gene count gives
/// empirical power at least `target`. All evaluations reuse the same trial
/// seeds so that the comparison across `c'` is not blurred by resampling.
pub fn calibrate_power(f: f64, k: u64, target: f64, opts: &CalibrationOptions) -> Result<PowerCalibration> {
    let base = |c: f64| Cell { test: opts.test, f, kappa: implied_kappa(f, k), k, axis: GeneAxis::C, mu_or_c: c, m: genes_for_multiplier(c, f, k) as u64 };
    let probe = base(1.0);
    let ctx = CellContext::new(&probe, opts.quantile_c)?.with_simulator(opts.simulator);
    let min_m = if opts.test == TestKind::Triplet { 4 } else { 1 };
    let eval = |c: f64| -> Result<(u64, u64)> {
        let mut cell = base(c);
        cell.m = cell.m.max(min_m);
        if cell.m.saturating_mul(k.max(1)) > MAX_SITES {
            return Err(Error::Bracket(format!("m = {} at c = {c} exceeds the site budget", cell.m)));
        }
        Ok((cell.m, estimate_power(&cell, &ctx, opts.replicates, opts.seed)?))
    };
    let pass = |s: u64| s as f64 >= target * opts.replicates as f64;
    // Bracket: c_lo gives one gene; grow c_hi until it passes.
    let s = scale(f, k);
    let c_lo0 = s * min_m as f64;
    let (m_lo, s_lo) = eval(c_lo0)?;
    if pass(s_lo) {
        return Ok(PowerCalibration {
            c_prime: c_lo0,
            m: m_lo,
            successes: s_lo,
            replicates: opts.replicates,
            power: s_lo as f64 / opts.replicates as f64,
            steps: 0,
            bracket: (c_lo0, c_lo0),
        });
    }
    let mut c_lo = c_lo0;
    let mut c_hi = c_lo0 * 2.0;
    let mut hi_eval = None;
    for _ in 0..40 {
        let (m, succ) = eval(c_hi)?;
        if pass(succ) {
            hi_eval = Some((m, succ));
            break;
        }
        c_lo = c_hi;
        c_hi *= 2.0;
    }
    let (mut m_hi, mut s_hi) = hi_eval.ok_or_else(|| Error::Bracket(format!("power never reached {target} up to c = {c_hi}")))?;
    let bracket = (c_lo, c_hi);
    let mut steps = 0;
    while steps < opts.max_steps {
        let c_mid = (c_lo * c_hi).sqrt();
        let m_mid = genes_for_multiplier(c_mid, f, k) as u64;
        if m_mid <= genes_for_multiplier(c_lo, f, k) as u64 || m_mid >= m_hi {
            break;
        }
        steps += 1;
        let (m, succ) = eval(c_mid)?;
        if pass(succ) {
            c_hi = c_mid;
            m_hi = m;
            s_hi = succ;
        } else {
            c_lo = c_mid;
        }
    }
    Ok(PowerCalibration {
        c_prime: c_hi,
        m: m_hi,
        successes: s_hi,
        replicates: opts.replicates,
        power: s_hi as f64 / opts.replicates as f64,
        steps,
        bracket,
    })
}

pub fn calibrate_constants(f: f64, kappa: f64, target: f64, opts: &CalibrationOptions) -> Result<Calibration> {
    if !(target > 0.5 && target < 1.0) {
        return Err(Error::Domain(format!("target power must lie in (0.5, 1), got {target}")));
    }
    if !(f > 0.0 && f < 1.0) || !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::Domain(format!("need 0 < f, kappa < 1, got f = {f}, kappa = {kappa}")));
    }
    let k = sites_for(f, kappa) as u64;
    if k > MAX_K {
        return Err(Error::Domain(format!("k = {k} exceeds the limit of {MAX_K}")));
    }
    let lower = certify_lower(f, k, target)?;
    let upper = calibrate_power(f, k, target, opts)?;
    Ok(Calibration { test: opts.test, f, kappa, k, target, lower, upper })
}

/// Smallest `m` (by bisection on integers) whose success count reaches
/// `target` of `replicates`, with common trial seeds.
pub fn find_m_star(test: TestKind, f: f64, k: u64, target: f64, replicates: u64, seed: u64, quantile_c: f64) -> Result<u64> {
    let mut cell = Cell::new(test, f, k, 1);
    let ctx = CellContext::new(&cell, quantile_c)?;
    let mut power = |m: u64| -> Result<bool> {
        cell.m = m;
        Ok(estimate_power(&cell, &ctx, replicates, seed)? as f64 >= target * replicates as f64)
    };
    let min_m = if test == TestKind::Triplet { 4 } else { 1 };
    if power(min_m)? {
        return Ok(min_m);
    }
    let (mut lo, mut hi) = (min_m, min_m * 2);
    while !power(hi)? {
        lo = hi;
        hi *= 2;
        if hi.saturating_mul(k.max(1)) > MAX_SITES {
            return Err(Error::Bracket(format!("power stays below {target} up to m = {lo}")));
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if power(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(json: &str) -> Result<SweepConfig> {
        SweepConfig::from_json(json)
    }

    #[test]
    fn grid_cardinality_and_validation() {
        let c = config(r#"{"test":"mean","f":[0.3,0.4],"kappa":[0.2,0.5],"c":[1,2],"replicates":3,"master_seed":1}"#).unwrap();
        assert_eq!(c.cells().unwrap().len(), 8);
        assert!(config(r#"{"test":"mean","f":[0.3],"kappa":[0.5],"c":[1],"replicates":0,"master_seed":1}"#).is_err());
        assert!(config(r#"{"test":"mean","f":[1.3],"kappa":[0.5],"c":[1],"replicates":1,"master_seed":1}"#).is_err());
        assert!(config(r#"{"test":"mean","f":[0.3],"kappa":[0.5],"replicates":1,"master_seed":1}"#).is_err());
        assert!(config(r#"{"test":"mean","f":[0.3],"k":[2000000],"c":[1],"replicates":1,"master_seed":1}"#).is_err());
        assert!(config(r#"{"test":"mean","f":[0.001],"k":[1000000],"c":[1e9],"replicates":1,"master_seed":1}"#).is_err());
        assert!(config(r#"{"test":"bogus","f":[0.3],"kappa":[0.5],"c":[1],"replicates":1,"master_seed":1}"#).is_err());
        let mu = config(r#"{"test":"min","f":[0.1],"kappa":[0.5],"mu":[0.5],"replicates":1,"master_seed":1}"#).unwrap();
        assert_eq!(mu.cells().unwrap()[0].m, 32);
    }

    #[test]
    fn trial_smoke_and_determinism() {
        let cell = Cell::new(TestKind::Mean, 0.5, 1, 1);
        let ctx = CellContext::new(&cell, 1.0).unwrap();
        let a = run_trial(&cell, &ctx, 42).unwrap();
        assert_eq!(a, run_trial(&cell, &ctx, 42).unwrap());
        for t in [TestKind::OracleQuantile, TestKind::Agnostic, TestKind::Min, TestKind::Triplet] {
            let cell = Cell::new(t, 0.5, 4, 4);
            let ctx = CellContext::new(&cell, 1.0).unwrap();
            assert_eq!(run_trial(&cell, &ctx, 5).unwrap(), run_trial(&cell, &ctx, 5).unwrap());
        }
    }

    #[test]
    fn mean_test_with_overwhelming_data() {
        let cell = Cell::new(TestKind::Mean, 0.3, 1, 10_000);
        let ctx = CellContext::new(&cell, 1.0).unwrap();
        assert!(run_trial(&cell, &ctx, 3).unwrap());
    }

    #[test]
    fn sweep_csv_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("s.csv");
        let json = format!(
            r#"{{"test":"agnostic","f":[0.3],"kappa":[0.5],"c":[0.5,2],"replicates":20,"master_seed":9,"output":{:?}}}"#,
            out
        );
        let cfg = config(&json).unwrap();
        let r1 = run_sweep(&cfg).unwrap();
        let b1 = std::fs::read(&out).unwrap();
        let r2 = run_sweep(&cfg).unwrap();
        assert_eq!(b1, std::fs::read(&out).unwrap());
        assert_eq!(r1, r2);
        assert!(!r1.partial);
        let text = String::from_utf8(b1).unwrap();
        assert!(text.starts_with("test,f,kappa,k,mu_or_c,m,replicates,successes,rate,ci_lo,ci_hi,seconds,error\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn unwritable_output_fails() {
        let cfg = config(
            r#"{"test":"mean","f":[0.3],"kappa":[0.5],"c":[1],"replicates":1,"master_seed":1,"output":"/nonexistent/dir/x.csv"}"#,
        )
        .unwrap();
        assert!(run_sweep(&cfg).is_err());
    }

    #[test]
    fn lower_certificate() {
        let cert = certify_lower(0.05, 20, 0.9).unwrap();
        assert!(cert.tv_upper <= 0.1);
        assert!(tv_bracket_m(cert.h2_single, cert.m + 1).unwrap().1 > 0.1);
        assert_eq!(genes_for_multiplier(cert.c, 0.05, 20) as u64, cert.m);
        assert!(matches!(certify_lower(0.9, 2, 0.9), Err(Error::Bracket(_))));
    }

    #[test]
    fn degenerate_f_fails_calibration() {
        let opts = CalibrationOptions { replicates: 20, ..Default::default() };
        assert!(matches!(calibrate_constants(0.9, 0.5, 0.9, &opts), Err(Error::Bracket(_))));
        assert!(calibrate_constants(0.1, 0.5, 0.4, &opts).is_err());
    }

    #[test]
    fn power_calibration_finds_multiplier() {
        let opts = CalibrationOptions { test: TestKind::Mean, replicates: 100, seed: 3, ..Default::default() };
        let r = calibrate_power(0.3, 4, 0.6, &opts).unwrap();
        assert!(r.power >= 0.6);
        assert!(r.steps <= 12);
        assert!(r.bracket.0 <= r.c_prime && r.c_prime <= r.bracket.1);
    }
}
