//! Exact law of θ as a binomial mixture over a [`MixingDensity`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binomial::ln_binom_pmf;
use super::mixing::{Kind, MixingDensity, MixingTag, Z_SPAN};
use super::quadrature::{default_rule, integrate_adaptive, Tolerance};
use crate::error::{Error, Result};

/// Probabilities must sum to one within this.
pub const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Null,
    Signal,
    Alternative,
    Mixture,
    Binomial,
    Empirical,
    Custom,
}

impl From<MixingTag> for Provenance {
    fn from(t: MixingTag) -> Self {
        match t {
            MixingTag::Null => Provenance::Null,
            MixingTag::Signal => Provenance::Signal,
            MixingTag::Alternative => Provenance::Alternative,
            MixingTag::Custom => Provenance::Custom,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaPmf {
    k: usize,
    probs: Vec<f64>,
    ln_probs: Vec<f64>,
    provenance: Provenance,
    sigma_f: Option<f64>,
}

impl ThetaPmf {
    pub fn new(probs: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let ln_probs = probs.iter().map(|p| p.ln()).collect();
        Self::from_parts(probs, ln_probs, provenance)
    }

    pub fn from_ln(ln_probs: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let probs = ln_probs.iter().map(|l| l.exp()).collect();
        Self::from_parts(probs, ln_probs, provenance)
    }

    fn from_parts(probs: Vec<f64>, ln_probs: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("a pmf needs at least one entry".into()));
        }
        if let Some((j, p)) = probs.iter().enumerate().find(|(_, p)| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::Domain(format!("entry {j} is {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized(total));
        }
        Ok(ThetaPmf { k: probs.len() - 1, probs, ln_probs, provenance, sigma_f: None })
    }

    pub fn binomial(k: usize, p: f64) -> Result<Self> {
        pmf_theta(k, &MixingDensity::point_mass(p)?).map(|mut t| {
            t.provenance = Provenance::Binomial;
            t
        })
    }

    /// Relative frequencies of `samples`, each in `0..=k`.
    pub fn empirical(k: usize, samples: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut counts = vec![0u64; k + 1];
        let mut n = 0u64;
        for s in samples {
            if s > k {
                return Err(Error::Domain(format!("sample {s} exceeds k = {k}")));
            }
            counts[s] += 1;
            n += 1;
        }
        if n == 0 {
            return Err(Error::Domain("no samples".into()));
        }
        Self::new(counts.iter().map(|&c| c as f64 / n as f64).collect(), Provenance::Empirical)
    }

    /// `(1 - w) a + w b`, combined in log space.
    pub fn mixture(a: &ThetaPmf, b: &ThetaPmf, w: f64) -> Result<Self> {
        if a.k != b.k {
            return Err(Error::Domain(format!("mixing pmfs with k = {} and k = {}", a.k, b.k)));
        }
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Domain(format!("mixture weight must lie in [0, 1], got {w}")));
        }
        let (la, lb) = ((1.0 - w).ln(), w.ln());
        let ln = a.ln_probs.iter().zip(&b.ln_probs).map(|(&x, &y)| log_add(la + x, lb + y)).collect();
        let mut out = Self::from_ln(ln, Provenance::Mixture)?;
        out.sigma_f = Some(w);
        Ok(out)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn ln_probs(&self) -> &[f64] {
        &self.ln_probs
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn sigma_f(&self) -> Option<f64> {
        self.sigma_f
    }

    pub fn with_sigma_f(mut self, s: f64) -> Self {
        self.sigma_f = Some(s);
        self
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(j, p)| j as f64 * p).sum()
    }

    /// `P[θ/k <= frac]`, with the comparison done exactly as `j <= frac * k`.
    pub fn cdf_fraction(&self, frac: f64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(j, _)| crate::util::fraction_le(*j as u64, self.k as u64, frac))
            .map(|(_, p)| p)
            .sum()
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Distribution of θ over `k` sites when each site differs independently with
/// probability `X ~ mix`.
pub fn pmf_theta(k: usize, mix: &MixingDensity) -> Result<ThetaPmf> {
    let ln = ln_pmf_theta(k, mix)?;
    ThetaPmf::from_ln(ln, mix.tag().into())
}

/// Entry-wise `ln P[θ = j]`.
pub fn ln_pmf_theta(k: usize, mix: &MixingDensity) -> Result<Vec<f64>> {
    if k == 0 {
        return Ok(vec![0.0]);
    }
    let k64 = k as u64;
    match &mix.kind {
        Kind::PointMass { p } => Ok((0..=k64).map(|j| ln_binom_pmf(j, k64, *p, 1.0 - p)).collect()),
        Kind::Coalescent { tau, z_lo, z_hi } => {
            let (tau, z_lo, z_hi) = (*tau, *z_lo, *z_hi);
            let ln_mass = MixingDensity::ln_z_mass(z_lo, z_hi);
            (0..=k64).into_par_iter().map(|j| ln_entry_z(j, k64, tau, z_lo, z_hi, ln_mass)).collect()
        }
        Kind::Custom { density } => {
            let mass = mix.total_mass()?;
            if (mass - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::NotNormalized(mass));
            }
            let (lo, hi) = mix.support();
            (0..=k64).into_par_iter().map(|j| ln_entry_x(j, k64, lo, hi, density.as_ref())).collect()
        }
    }
}

const SPREAD: [f64; 10] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0];

/// Integrates `exp(g)` over `breaks` after shifting by the largest sampled value,
/// returning the log of the integral. The panel tolerance is relative to a
/// first-pass estimate so that tiny entries keep their precision.
fn ln_integral<G: Fn(f64) -> f64>(g: G, mut breaks: Vec<f64>, lo: f64, hi: f64) -> Result<f64> {
    breaks.retain(|b| b.is_finite() && *b >= lo && *b <= hi);
    breaks.push(lo);
    breaks.push(hi);
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();
    let mut gmax = f64::NEG_INFINITY;
    let rule = default_rule();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        for &t in rule.nodes().iter().step_by(3) {
            gmax = gmax.max(g(0.5 * (a + b) + 0.5 * (b - a) * t));
        }
    }
    if gmax == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let h = |z: f64| (g(z) - gmax).exp();
    let first: f64 = breaks.windows(2).map(|w| rule.integrate(&h, w[0], w[1])).sum();
    if !(first > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let tol = Tolerance { panel_abs: 1e-14 * first, max_depth: 60 };
    let r = integrate_adaptive(h, &breaks, tol)?;
    Ok(gmax + r.value.ln())
}

fn ln_entry_z(j: u64, k: u64, tau: f64, z_lo: f64, z_hi: f64, ln_mass: f64) -> Result<f64> {
    let end = z_hi.min(z_lo + Z_SPAN);
    let g = |z: f64| {
        let a = (-2.0 * (tau + z)).exp();
        let x = -0.75 * (-2.0 * (tau + z)).exp_m1();
        -z - ln_mass + ln_binom_pmf(j, k, x, 0.25 + 0.75 * a)
    };
    let frac = j as f64 / k as f64;
    let mut breaks = Vec::with_capacity(2 * SPREAD.len() + 8);
    let mut d = 0.5;
    while d < Z_SPAN {
        breaks.push(z_lo + d);
        d *= 2.0;
    }
    if frac < 0.75 {
        // Where the binomial kernel peaks, and its width, in z.
        let zs = -0.5 * (-4.0 * frac / 3.0).ln_1p() - tau;
        let sd = (frac.max(0.5 / k as f64) * (1.0 - frac).max(0.5 / k as f64) / k as f64).sqrt() / (1.5 - 2.0 * frac);
        breaks.push(zs);
        for s in SPREAD {
            breaks.push(zs - s * sd);
            breaks.push(zs + s * sd);
        }
    }
    ln_integral(g, breaks, z_lo, end)
}

fn ln_entry_x(j: u64, k: u64, lo: f64, hi: f64, density: &(dyn Fn(f64) -> f64 + Send + Sync)) -> Result<f64> {
    let g = |x: f64| {
        let f = density(x);
        if f > 0.0 {
            f.ln() + ln_binom_pmf(j, k, x, 1.0 - x)
        } else {
            f64::NEG_INFINITY
        }
    };
    let frac = j as f64 / k as f64;
    let sd = (frac.max(0.5 / k as f64) * (1.0 - frac).max(0.5 / k as f64) / k as f64).sqrt();
    let mut breaks: Vec<f64> = (1..16).map(|i| lo + (hi - lo) * i as f64 / 16.0).collect();
    breaks.push(frac);
    for s in SPREAD {
        breaks.push(frac - s * sd);
        breaks.push(frac + s * sd);
    }
    ln_integral(g, breaks, lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::mixing::{mixture_decompose, null_mixing_density};
    use crate::exact::quadrature::GaussLegendre;

    /// Fixed composite 20-point rule on 4000 uniform Z panels; no adaptivity,
    /// no log scaling, no breakpoints. Usable for modest k only.
    fn oracle_entry(j: u64, k: u64, tau: f64, z_hi: f64) -> f64 {
        let rule = GaussLegendre::new(20);
        let end = z_hi.min(Z_SPAN);
        let mass = 1.0 - (-z_hi).exp();
        let n = 4000;
        let h = end / n as f64;
        let (jf, kf) = (j as f64, k as f64);
        let lc = statrs::function::gamma::ln_gamma(kf + 1.0)
            - statrs::function::gamma::ln_gamma(jf + 1.0)
            - statrs::function::gamma::ln_gamma(kf - jf + 1.0);
        let f = |z: f64| {
            let x = 0.75 * (1.0 - (-2.0 * (tau + z)).exp());
            (-z).exp() / mass * (lc + jf * x.ln() + (kf - jf) * (1.0 - x).ln()).exp()
        };
        (0..n).map(|i| rule.integrate(&f, i as f64 * h, (i + 1) as f64 * h)).sum()
    }

    #[test]
    fn trivial_cases() {
        let null = null_mixing_density(1.0).unwrap();
        assert_eq!(pmf_theta(0, &null).unwrap().probs(), &[1.0]);
        let b = ThetaPmf::binomial(2, 0.5).unwrap();
        for (a, e) in b.probs().iter().zip([0.25, 0.5, 0.25]) {
            assert!((a - e).abs() < 1e-15);
        }
        let one = pmf_theta(1, &null).unwrap();
        let mean = 0.75 * (1.0 - (-2f64).exp() / 3.0);
        assert!((one.probs()[1] - mean).abs() < 1e-13);
        assert!((one.probs()[0] - (1.0 - mean)).abs() < 1e-13);
    }

    #[test]
    fn matches_fixed_grid_oracle() {
        for &(k, tau, z_hi) in &[(10u64, 1.0, f64::INFINITY), (50, 0.9, 0.1), (50, 0.98, f64::INFINITY), (200, 1.0, f64::INFINITY)] {
            let mix = MixingDensity::coalescent(tau, 0.0, z_hi, MixingTag::Custom).unwrap();
            let p = pmf_theta(k as usize, &mix).unwrap();
            for j in 0..=k {
                let o = oracle_entry(j, k, tau, z_hi);
                let got = p.probs()[j as usize];
                assert!((got - o).abs() < 1e-12, "k={k} tau={tau} j={j}: {got} vs {o}");
                if o > 1e-250 {
                    assert!((got / o - 1.0).abs() < 1e-8, "relative, k={k} j={j}: {got} vs {o}");
                }
            }
        }
    }

    #[test]
    fn mean_matches_mixing_mean() {
        let null = null_mixing_density(1.0).unwrap();
        for k in [7usize, 100, 3000] {
            let p = pmf_theta(k, &null).unwrap();
            assert!((p.mean() / k as f64 - 0.716_166_179_193_953_3).abs() < 1e-11);
            assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_identity_in_tv() {
        for &f in &[0.02, 0.1] {
            let m = mixture_decompose(f).unwrap();
            for k in [10usize, 50] {
                let q = pmf_theta(k, &m.q).unwrap();
                let mix =
                    ThetaPmf::mixture(&pmf_theta(k, &m.p0).unwrap(), &pmf_theta(k, &m.p1).unwrap(), m.sigma_f).unwrap();
                let tv: f64 = q.probs().iter().zip(mix.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
                assert!(tv < 1e-12, "f={f} k={k}: {tv}");
            }
        }
    }

    #[test]
    fn custom_uniform_density_gives_flat_pmf() {
        // Beta(1,1) mixing makes every count equally likely.
        let u = MixingDensity::custom(0.0, 1.0, |_| 1.0).unwrap();
        let p = pmf_theta(20, &u).unwrap();
        for v in p.probs() {
            assert!((v - 1.0 / 21.0).abs() < 1e-12);
        }
    }

    #[test]
    fn validation() {
        assert!(matches!(ThetaPmf::new(vec![0.5, 0.4], Provenance::Custom), Err(Error::NotNormalized(_))));
        assert!(ThetaPmf::new(vec![1.5, -0.5], Provenance::Custom).is_err());
        assert!(ThetaPmf::empirical(2, [0, 3]).is_err());
        let e = ThetaPmf::empirical(3, [0, 1, 1, 3]).unwrap();
        assert_eq!(e.probs(), &[0.25, 0.5, 0.0, 0.25]);
        assert_eq!(e.cdf_fraction(1.0 / 3.0), 0.75);
    }
}
