//! Hellinger scaling table over an `f` grid at fixed `kappa`, with `k = ceil(f^(2 kappa - 2))`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::divergence::mixture_h2_terms;
use super::mixing::mixture_decompose;
use super::pmf::pmf_theta;
use crate::error::{Error, Result};
use crate::util::sites_for;

/// Largest `k` the scan will attempt.
pub const MAX_SCAN_K: f64 = 1e8;

/// Width constant for the band `[p0, p0 + C sqrt(ln k / k)]` that separates the
/// above-`p0` contributions.
pub const DEFAULT_INTERVAL_C: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub f: f64,
    pub kappa: f64,
    pub k: u64,
    pub h2: f64,
    /// `h2 / (f^2 sqrt(k))`.
    pub ratio: f64,
    /// Counts with `p0 <= j/k <= p0 + C sqrt(ln k / k)`.
    pub h2_j0: f64,
    /// Counts above that band.
    pub h2_j1: f64,
    /// Counts with `j/k < p0`.
    pub h2_jprime: f64,
}

pub fn scan_row(f: f64, kappa: f64, interval_c: f64) -> Result<ScanRow> {
    if !(f > 0.0 && f <= 0.2) {
        return Err(Error::Domain(format!("scan f must lie in (0, 0.2], got {f}")));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::Domain(format!("kappa must lie in (0, 1), got {kappa}")));
    }
    let kf = sites_for(f, kappa);
    if kf > MAX_SCAN_K {
        return Err(Error::Domain(format!("k = {kf} exceeds the scan limit of {MAX_SCAN_K}")));
    }
    let k = kf as u64;
    let mix = mixture_decompose(f)?;
    let p0 = pmf_theta(k as usize, &mix.p0)?;
    let p1 = pmf_theta(k as usize, &mix.p1)?;
    let terms = mixture_h2_terms(&p0, &p1, mix.sigma_f)?;
    let edge = mix.p0.support().0;
    let band = interval_c * ((k as f64).ln() / k as f64).sqrt();
    let (mut j0, mut j1, mut jp) = (0.0, 0.0, 0.0);
    for (j, t) in terms.iter().enumerate() {
        let x = j as f64 / k as f64;
        if x < edge {
            jp += t;
        } else if x <= edge + band {
            j0 += t;
        } else {
            j1 += t;
        }
    }
    let h2: f64 = terms.iter().sum();
    Ok(ScanRow { f, kappa, k, h2, ratio: h2 / (f * f * (k as f64).sqrt()), h2_j0: j0, h2_j1: j1, h2_jprime: jp })
}

pub fn hellinger_scaling_scan(kappa: f64, f_grid: &[f64]) -> Result<Vec<ScanRow>> {
    hellinger_scaling_scan_with(kappa, f_grid, DEFAULT_INTERVAL_C)
}

pub fn hellinger_scaling_scan_with(kappa: f64, f_grid: &[f64], interval_c: f64) -> Result<Vec<ScanRow>> {
    f_grid.par_iter().map(|&f| scan_row(f, kappa, interval_c)).collect()
}

pub fn write_scan_csv<W: Write>(rows: &[ScanRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::divergence::hellinger2;

    #[test]
    fn single_row_shape_and_parts() {
        let rows = hellinger_scaling_scan(0.5, &[0.08]).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!(r.k, 13);
        assert!(r.ratio > 0.0);
        assert!((r.h2_j0 + r.h2_j1 + r.h2_jprime - r.h2).abs() < 1e-15);
    }

    #[test]
    fn ratio_form_matches_direct_sum() {
        // Direct H^2 against an independently integrated Q.
        for &(f, k) in &[(0.05, 64usize), (0.02, 400)] {
            let m = mixture_decompose(f).unwrap();
            let p0 = pmf_theta(k, &m.p0).unwrap();
            let q = pmf_theta(k, &m.q).unwrap();
            let p1 = pmf_theta(k, &m.p1).unwrap();
            let direct = hellinger2(&p0, &q).unwrap();
            let ratio = super::super::divergence::hellinger2_mixture(&p0, &p1, m.sigma_f).unwrap();
            assert!((direct - ratio).abs() < 1e-9 * direct.max(1e-3), "f={f} k={k}: {direct} vs {ratio}");
        }
    }

    #[test]
    fn guards() {
        assert!(scan_row(0.3, 0.5, 1.0).is_err());
        assert!(scan_row(0.1, 1.0, 1.0).is_err());
        // f = 1e-5, kappa = 0.05 asks for k ~ 3e9.
        assert!(matches!(scan_row(1e-5, 0.05, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn csv_header() {
        let rows = hellinger_scaling_scan(0.75, &[0.1]).unwrap();
        let mut buf = Vec::new();
        write_scan_csv(&rows, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("f,kappa,k,h2,ratio,h2_j0,h2_j1,h2_jprime\n"));
    }
}
