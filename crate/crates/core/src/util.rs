/// Ceiling that forgives the last-ulp error of `powf`, so that
/// `ceil_tol(0.02f64.powf(-1.0))` is 50 and not 51.
pub fn ceil_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `k = ceil(f^(-2 + 2 kappa))`, the site count of the scaling regime.
pub fn sites_for(f: f64, kappa: f64) -> f64 {
    ceil_tol(f.powf(-2.0 + 2.0 * kappa))
}

/// `m = ceil(c / (f^2 sqrt(k)))`, at least one gene.
pub fn genes_for_multiplier(c: f64, f: f64, k: u64) -> f64 {
    ceil_tol(c / (f * f * (k as f64).sqrt())).max(1.0)
}

/// `m = ceil(f^(-1 - mu))`.
pub fn genes_for_mu(f: f64, mu: f64) -> f64 {
    ceil_tol(f.powf(-1.0 - mu)).max(1.0)
}

/// `j / k <= p`, the comparison used for every "theta/k <= p" event.
#[inline]
pub fn fraction_le(j: u64, k: u64, p: f64) -> bool {
    if k == 0 {
        return 0.0 <= p;
    }
    (j as f64) / (k as f64) <= p
}
