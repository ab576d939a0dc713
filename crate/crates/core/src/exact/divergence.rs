use super::pmf::ThetaPmf;
use crate::error::{Error, Result};

fn same_k(p: &ThetaPmf, q: &ThetaPmf) -> Result<()> {
    if p.k() != q.k() {
        return Err(Error::Domain(format!("pmfs have k = {} and k = {}", p.k(), q.k())));
    }
    Ok(())
}

/// `sum_j (sqrt p_j - sqrt q_j)^2`, evaluated as `(p - q)^2 / (sqrt p + sqrt q)^2`
/// so that nearly equal pmfs do not cancel.
pub fn hellinger2(p: &ThetaPmf, q: &ThetaPmf) -> Result<f64> {
    same_k(p, q)?;
    let s: f64 = p
        .probs()
        .iter()
        .zip(q.probs())
        .filter(|(a, b)| **a > 0.0 || **b > 0.0)
        .map(|(&a, &b)| {
            let d = a - b;
            let r = a.sqrt() + b.sqrt();
            d * d / (r * r)
        })
        .sum();
    Ok(s.clamp(0.0, 2.0))
}

pub fn tv(p: &ThetaPmf, q: &ThetaPmf) -> Result<f64> {
    same_k(p, q)?;
    let s: f64 = p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * s).clamp(0.0, 1.0))
}

/// `h_b(s) = (sqrt(1 + b (s - 1)) - 1)^2` without cancellation near `s = 1`.
#[inline]
pub(crate) fn h_b_stable(b: f64, s: f64) -> f64 {
    let t = b * (s - 1.0);
    let r = (1.0 + t).sqrt() + 1.0;
    t * t / (r * r)
}

/// Per-count terms of `H^2(P0, (1 - sigma) P0 + sigma P1)`, each
/// `P0[j] h_sigma(P1[j] / P0[j])` with the ratio taken in log space.
pub fn mixture_h2_terms(p0: &ThetaPmf, p1: &ThetaPmf, sigma: f64) -> Result<Vec<f64>> {
    same_k(p0, p1)?;
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::Domain(format!("mixture weight must lie in [0, 1], got {sigma}")));
    }
    Ok(p0
        .ln_probs()
        .iter()
        .zip(p1.ln_probs())
        .zip(p0.probs().iter().zip(p1.probs()))
        .map(|((&l0, &l1), (&a, &b))| {
            if l0 == f64::NEG_INFINITY {
                sigma * b
            } else if l1 == f64::NEG_INFINITY {
                h_b_stable(sigma, 0.0) * a
            } else {
                a * h_b_stable(sigma, (l1 - l0).exp())
            }
        })
        .collect())
}

/// `H^2(P0, Q)` for `Q = (1 - sigma) P0 + sigma P1`.
pub fn hellinger2_mixture(p0: &ThetaPmf, p1: &ThetaPmf, sigma: f64) -> Result<f64> {
    Ok(mixture_h2_terms(p0, p1, sigma)?.iter().sum::<f64>().clamp(0.0, 2.0))
}

fn check_h2_m(h2: f64, m: u64) -> Result<()> {
    if !(0.0..=2.0).contains(&h2) {
        return Err(Error::Domain(format!("squared Hellinger distance must lie in [0, 2], got {h2}")));
    }
    if m == 0 {
        return Err(Error::Domain("gene count m must be at least 1".into()));
    }
    Ok(())
}

/// `H^2` between `m`-fold products: `2 (1 - (1 - h2/2)^m)`.
pub fn tensorize_h2(h2: f64, m: u64) -> Result<f64> {
    check_h2_m(h2, m)?;
    if h2 == 2.0 {
        return Ok(2.0);
    }
    Ok((-2.0 * (m as f64 * (-0.5 * h2).ln_1p()).exp_m1()).clamp(0.0, 2.0))
}

/// Bracket on the total variation between `m`-fold products:
/// `[H_m^2 / 2, sqrt(H_m^2 (1 - H_m^2 / 4))]`.
pub fn tv_bracket_m(h2: f64, m: u64) -> Result<(f64, f64)> {
    let hm = tensorize_h2(h2, m)?;
    Ok((0.5 * hm, (hm * (1.0 - 0.25 * hm)).sqrt().min(1.0)))
}

/// Lower bound on the summed type I and type II errors of any test on `m` genes.
pub fn testing_error_floor(h2: f64, m: u64) -> Result<f64> {
    Ok(1.0 - tv_bracket_m(h2, m)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::pmf::Provenance;

    fn pmf(v: &[f64]) -> ThetaPmf {
        ThetaPmf::new(v.to_vec(), Provenance::Custom).unwrap()
    }

    #[test]
    fn hand_values() {
        let (a, b) = (pmf(&[1.0, 0.0]), pmf(&[0.5, 0.5]));
        assert_eq!(hellinger2(&a, &a).unwrap(), 0.0);
        assert_eq!(tv(&a, &a).unwrap(), 0.0);
        assert_eq!(hellinger2(&a, &pmf(&[0.0, 1.0])).unwrap(), 2.0);
        assert_eq!(tv(&a, &pmf(&[0.0, 1.0])).unwrap(), 1.0);
        let expect = (1.0 - 0.5f64.sqrt()).powi(2) + 0.5;
        assert!((hellinger2(&a, &b).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.585_786).abs() < 1e-6);
        assert_eq!(tv(&a, &b).unwrap(), 0.5);
        assert!(hellinger2(&a, &pmf(&[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn mixture_form_agrees_with_direct() {
        let (p0, p1) = (pmf(&[0.2, 0.3, 0.5]), pmf(&[0.6, 0.4, 0.0]));
        let s = 0.1;
        let q = ThetaPmf::mixture(&p0, &p1, s).unwrap();
        let direct = hellinger2(&p0, &q).unwrap();
        assert!((hellinger2_mixture(&p0, &p1, s).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn tensorization() {
        for m in [1, 5, 100] {
            assert_eq!(tensorize_h2(0.0, m).unwrap(), 0.0);
            assert_eq!(tensorize_h2(2.0, m).unwrap(), 2.0);
        }
        assert!((tensorize_h2(0.37, 1).unwrap() - 0.37).abs() < 1e-15);
        assert_eq!(tv_bracket_m(0.0, 3).unwrap(), (0.0, 0.0));
        assert_eq!(tv_bracket_m(2.0, 1).unwrap(), (1.0, 1.0));
        let (lo, hi) = tv_bracket_m(0.02, 1).unwrap();
        assert!((lo - 0.01).abs() < 1e-15);
        assert!((hi - (0.02f64 * 0.995).sqrt()).abs() < 1e-15);
        assert!((hi - 0.14107).abs() < 1e-5);
        let hm = 2.0 * (1.0 - (1.0 - 0.0005f64).powi(10));
        let (_, hi) = tv_bracket_m(0.001, 10).unwrap();
        assert!((hi - (hm * (1.0 - hm / 4.0)).sqrt()).abs() < 1e-14);
        assert!(hi < 0.1);
        assert!(tensorize_h2(2.1, 1).is_err());
        assert!(tensorize_h2(0.1, 0).is_err());
    }
}
