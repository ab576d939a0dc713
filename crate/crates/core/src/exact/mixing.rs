//! Distributions of the per-gene success probability `X`.
//!
//! Under the two-leaf coalescent with divergence half-distance `tau`,
//! `X = 3/4 (1 - exp(-2 (tau + Z)))` with `Z ~ Exp(1)` the time to coalescence
//! above the root. Conditioning `Z` to an interval gives the signal component.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::quadrature::{integrate_adaptive, Tolerance};
use crate::error::{Error, Result};

/// Z-space integration is truncated this far past the lower end.
pub const Z_SPAN: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixingTag {
    Null,
    Signal,
    Alternative,
    Custom,
}

type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub(crate) enum Kind {
    Coalescent { tau: f64, z_lo: f64, z_hi: f64 },
    PointMass { p: f64 },
    Custom { density: DensityFn },
}

#[derive(Clone)]
pub struct MixingDensity {
    pub(crate) kind: Kind,
    tag: MixingTag,
    lower: f64,
    upper: f64,
    p_bar: Option<f64>,
    rho: Option<f64>,
}

impl fmt::Debug for MixingDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("MixingDensity");
        match &self.kind {
            Kind::Coalescent { tau, z_lo, z_hi } => d.field("tau", tau).field("z_lo", z_lo).field("z_hi", z_hi),
            Kind::PointMass { p } => d.field("point_mass", p),
            Kind::Custom { .. } => d.field("custom", &true),
        };
        d.field("tag", &self.tag).field("lower", &self.lower).field("upper", &self.upper).finish()
    }
}

/// `3/4 (1 - exp(-2 (tau + z)))`.
#[inline]
pub fn x_of_z(tau: f64, z: f64) -> f64 {
    -0.75 * (-2.0 * (tau + z)).exp_m1()
}

/// Lower edge of the null support, `3/4 (1 - exp(-2 tau))`.
pub fn support_floor(tau: f64) -> f64 {
    x_of_z(tau, 0.0)
}

impl MixingDensity {
    /// `X` with `Z ~ Exp(1)` conditioned on `[z_lo, z_hi]` (`z_hi` may be infinite).
    pub fn coalescent(tau: f64, z_lo: f64, z_hi: f64, tag: MixingTag) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Domain(format!("tau must be positive and finite, got {tau}")));
        }
        if !(z_lo >= 0.0 && z_lo.is_finite() && z_hi > z_lo) {
            return Err(Error::Domain(format!("need 0 <= z_lo < z_hi, got [{z_lo}, {z_hi}]")));
        }
        let lower = x_of_z(tau, z_lo);
        let upper = if z_hi.is_finite() { x_of_z(tau, z_hi) } else { 0.75 };
        let mut out = MixingDensity {
            kind: Kind::Coalescent { tau, z_lo, z_hi },
            tag,
            lower,
            upper,
            p_bar: None,
            rho: None,
        };
        // Density is increasing in x, so the extremes on (lower, p_bar) sit at the ends.
        let p_bar = 0.5 * (lower + upper);
        let lo = out.density_raw(lower);
        let hi = out.density_raw(p_bar);
        out.p_bar = Some(p_bar);
        out.rho = Some(lo.min(1.0 / hi));
        Ok(out)
    }

    pub fn point_mass(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("point mass must lie in [0, 1], got {p}")));
        }
        Ok(MixingDensity { kind: Kind::PointMass { p }, tag: MixingTag::Custom, lower: p, upper: p, p_bar: None, rho: None })
    }

    /// Arbitrary density on `(lower, upper)`; rejected unless it integrates to 1 within 1e-10.
    /// `rho` is estimated on a grid over the lower half of the support.
    pub fn custom<F>(lower: f64, upper: f64, density: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(0.0 <= lower && lower < upper && upper <= 1.0) {
            return Err(Error::Domain(format!("support must satisfy 0 <= lower < upper <= 1, got ({lower}, {upper})")));
        }
        let mut out = MixingDensity {
            kind: Kind::Custom { density: Arc::new(density) },
            tag: MixingTag::Custom,
            lower,
            upper,
            p_bar: None,
            rho: None,
        };
        let mass = out.total_mass()?;
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(mass));
        }
        let p_bar = 0.5 * (lower + upper);
        let n = 1000;
        let (mut fmin, mut fmax) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let x = lower + (p_bar - lower) * (i as f64 + 0.5) / n as f64;
            let v = out.density(x);
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Domain(format!("density is {v} at x = {x}")));
            }
            fmin = fmin.min(v);
            fmax = fmax.max(v);
        }
        out.p_bar = Some(p_bar);
        out.rho = Some(fmin.min(1.0 / fmax));
        Ok(out)
    }

    pub fn with_tag(mut self, tag: MixingTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn tag(&self) -> MixingTag {
        self.tag
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    /// Cutoff below which `rho <= f(x) <= 1/rho` holds. `None` for a point mass.
    pub fn p_bar(&self) -> Option<f64> {
        self.p_bar
    }

    pub fn rho(&self) -> Option<f64> {
        self.rho
    }

    /// `(tau, z_lo, z_hi)` for coalescent densities.
    pub fn coalescent_params(&self) -> Option<(f64, f64, f64)> {
        match self.kind {
            Kind::Coalescent { tau, z_lo, z_hi } => Some((tau, z_lo, z_hi)),
            _ => None,
        }
    }

    pub fn point(&self) -> Option<f64> {
        match self.kind {
            Kind::PointMass { p } => Some(p),
            _ => None,
        }
    }

    /// `ln P[z_lo <= Z <= z_hi]`.
    pub(crate) fn ln_z_mass(z_lo: f64, z_hi: f64) -> f64 {
        // e^{-a} - e^{-b} = e^{-a} (1 - e^{-(b-a)})
        -z_lo + (-(-(z_hi - z_lo)).exp_m1()).ln()
    }

    fn density_raw(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Coalescent { tau, z_lo, z_hi } => {
                let u = 1.0 - 4.0 * x / 3.0;
                if u <= 0.0 {
                    return f64::INFINITY;
                }
                (2.0 / 3.0) * (tau - 0.5 * u.ln() - Self::ln_z_mass(*z_lo, *z_hi)).exp()
            }
            Kind::PointMass { .. } => f64::NAN,
            Kind::Custom { density } => density(x),
        }
    }

    /// Density at `x`; zero off the support. Point masses have no density and return NaN.
    pub fn density(&self, x: f64) -> f64 {
        if matches!(self.kind, Kind::PointMass { .. }) {
            return f64::NAN;
        }
        if x <= self.lower || x >= self.upper {
            return 0.0;
        }
        self.density_raw(x)
    }

    /// `E[g(X)]` by quadrature (in `Z` for coalescent densities).
    pub fn expect<G: Fn(f64) -> f64>(&self, g: G) -> Result<f64> {
        match &self.kind {
            Kind::PointMass { p } => Ok(g(*p)),
            Kind::Coalescent { tau, z_lo, z_hi } => {
                let (tau, z_lo) = (*tau, *z_lo);
                let end = z_hi.min(z_lo + Z_SPAN);
                let ln_mass = Self::ln_z_mass(z_lo, *z_hi);
                let mut breaks = vec![z_lo, end];
                let mut d = 0.5;
                while z_lo + d < end {
                    breaks.push(z_lo + d);
                    d *= 2.0;
                }
                let tol = Tolerance { panel_abs: 1e-15, ..Tolerance::default() };
                let r = integrate_adaptive(|z| (-z - ln_mass).exp() * g(x_of_z(tau, z)), &breaks, tol)?;
                Ok(r.value)
            }
            Kind::Custom { density } => {
                let n = 16;
                let breaks: Vec<f64> =
                    (0..=n).map(|i| self.lower + (self.upper - self.lower) * i as f64 / n as f64).collect();
                let tol = Tolerance { panel_abs: 1e-14, max_depth: 100 };
                Ok(integrate_adaptive(|x| density(x) * g(x), &breaks, tol)?.value)
            }
        }
    }

    pub fn total_mass(&self) -> Result<f64> {
        self.expect(|_| 1.0)
    }

    pub fn mean(&self) -> Result<f64> {
        self.expect(|x| x)
    }
}

/// Null mixing density: two lineages split at `tau`, `Z` unconstrained.
pub fn null_mixing_density(tau: f64) -> Result<MixingDensity> {
    MixingDensity::coalescent(tau, 0.0, f64::INFINITY, MixingTag::Null)
}

/// The alternative `Q` (split at `1 - f`) written as `(1 - sigma_f) P0 + sigma_f P1`.
#[derive(Debug, Clone)]
pub struct MixtureDecomposition {
    pub f: f64,
    /// `P[Z <= f] = 1 - exp(-f)`.
    pub sigma_f: f64,
    /// Width of the signal support below `p0`.
    pub phi_f: f64,
    pub p0: MixingDensity,
    pub p1: MixingDensity,
    pub q: MixingDensity,
}

pub fn mixture_decompose(f: f64) -> Result<MixtureDecomposition> {
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::Domain(format!("f must lie in (0, 1), got {f}")));
    }
    let tau = 1.0 - f;
    let p0 = null_mixing_density(1.0)?;
    let p1 = MixingDensity::coalescent(tau, 0.0, f, MixingTag::Signal)?;
    let q = MixingDensity::coalescent(tau, 0.0, f64::INFINITY, MixingTag::Alternative)?;
    let phi_f = p0.support().0 - p1.support().0;
    Ok(MixtureDecomposition { f, sigma_f: -(-f).exp_m1(), phi_f, p0, p1, q })
}
