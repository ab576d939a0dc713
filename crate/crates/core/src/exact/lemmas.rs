//! Analytic helpers used in bounding the Hellinger sum, exposed for numerical checks.

use crate::error::{Error, Result};

/// `h_b(s) = (sqrt(1 + b (s - 1)) - 1)^2`.
pub fn h_b(b: f64, s: f64) -> Result<f64> {
    if !(b > 0.0) || !(s >= 0.0) || 1.0 + b * (s - 1.0) < 0.0 {
        return Err(Error::Domain(format!("h_b needs b > 0, s >= 0 and 1 + b(s-1) >= 0; got b = {b}, s = {s}")));
    }
    Ok(super::divergence::h_b_stable(b, s))
}

fn check_jk(j: u64, k: u64) -> Result<(f64, f64)> {
    if k == 0 || j > k {
        return Err(Error::Domain(format!("need 0 <= j <= k and k >= 1, got j = {j}, k = {k}")));
    }
    let a = j as f64 / k as f64;
    Ok((a, 1.0 - a))
}

fn check_unit(x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain(format!("x must lie in (0, 1), got {x}")));
    }
    Ok(())
}

/// `Phi_j(x) = (j/k) ln x + ((k-j)/k) ln(1-x)`; terms with zero weight are dropped.
pub fn phi(j: u64, k: u64, x: f64) -> Result<f64> {
    let (a, b) = check_jk(j, k)?;
    check_unit(x)?;
    let t1 = if a > 0.0 { a * x.ln() } else { 0.0 };
    let t2 = if b > 0.0 { b * (-x).ln_1p() } else { 0.0 };
    Ok(t1 + t2)
}

pub fn phi_prime(j: u64, k: u64, x: f64) -> Result<f64> {
    let (a, _) = check_jk(j, k)?;
    check_unit(x)?;
    Ok((a - x) / (x * (1.0 - x)))
}

fn check_psi(p: f64, x: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("p must lie in (0, 1), got {p}")));
    }
    if !(x >= 0.0 && x < p) {
        return Err(Error::Domain(format!("x must lie in [0, p) = [0, {p}), got {x}")));
    }
    Ok(())
}

/// `Psi_{j,p}(x) = (j/k) ln(p / (p - x)) + ((k-j)/k) ln((1-p) / (1-p+x))`.
pub fn psi(j: u64, k: u64, p: f64, x: f64) -> Result<f64> {
    let (a, b) = check_jk(j, k)?;
    check_psi(p, x)?;
    Ok(-a * (-x / p).ln_1p() - b * (x / (1.0 - p)).ln_1p())
}

pub fn psi_prime(j: u64, k: u64, p: f64, x: f64) -> Result<f64> {
    let (a, b) = check_jk(j, k)?;
    check_psi(p, x)?;
    Ok(a / (p - x) - b / (1.0 - p + x))
}

pub fn psi_second(j: u64, k: u64, p: f64, x: f64) -> Result<f64> {
    let (a, b) = check_jk(j, k)?;
    check_psi(p, x)?;
    Ok(a / ((p - x) * (p - x)) + b / ((1.0 - p + x) * (1.0 - p + x)))
}

/// Quadratic minorant `(j/k - p) x / (p (1 - p)) + x^2 / 4` of `Psi_{j,p}`.
pub fn psi_taylor_lower(j: u64, k: u64, p: f64, x: f64) -> Result<f64> {
    let (a, _) = check_jk(j, k)?;
    check_psi(p, x)?;
    Ok((a - p) * x / (p * (1.0 - p)) + 0.25 * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_values() {
        assert_eq!(h_b(0.3, 1.0).unwrap(), 0.0);
        assert!((h_b(1.0, 4.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(h_b(0.0, 1.0).is_err());
        assert!(h_b(2.0, 0.0).is_err());
        assert_eq!(psi(3, 10, 0.4, 0.0).unwrap(), 0.0);
        assert!((phi(1, 2, 0.5).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(phi_prime(3, 10, 0.3).unwrap(), 0.0);
        assert!(psi(1, 2, 0.4, 0.4).is_err());
        assert!(phi(3, 2, 0.5).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for &(j, k, p, x) in &[(3u64, 10u64, 0.6, 0.2), (0, 5, 0.3, 0.1), (5, 5, 0.7, 0.5)] {
            let fd = (psi(j, k, p, x + h).unwrap() - psi(j, k, p, x - h).unwrap()) / (2.0 * h);
            assert!((fd - psi_prime(j, k, p, x).unwrap()).abs() < 1e-7);
            let fd2 = (psi_prime(j, k, p, x + h).unwrap() - psi_prime(j, k, p, x - h).unwrap()) / (2.0 * h);
            assert!((fd2 - psi_second(j, k, p, x).unwrap()).abs() < 1e-5);
        }
        let fd = (phi(4, 9, 0.3 + h).unwrap() - phi(4, 9, 0.3 - h).unwrap()) / (2.0 * h);
        assert!((fd - phi_prime(4, 9, 0.3).unwrap()).abs() < 1e-7);
    }
}
