//! Adaptive Gauss-Legendre quadrature.
//!
//! Each panel is integrated once whole and once as two halves; the panel is
//! accepted when the two estimates agree to `panel_abs`, otherwise both halves
//! are refined. Callers supply breakpoints so that sharp features (the peak
//! of a binomial kernel, say) start on panel boundaries instead of being
//! straddled by a coarse first panel.

use std::sync::OnceLock;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule on [-1, 1]; nodes found by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let s: f64 = self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(mid + half * x)).sum();
        s * half
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared 20-point rule.
pub fn default_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(20))
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    /// Accept a panel when whole and bisected estimates differ by less than this.
    pub panel_abs: f64,
    pub max_depth: u32,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { panel_abs: 1e-14, max_depth: 60 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Sum of per-panel |whole - halves| discrepancies.
    pub error: f64,
    pub panels: usize,
}

/// Integrates `f` over `[breaks[0], breaks[last]]`, starting from the panels
/// the (sorted, deduplicated here) breakpoints define.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: Tolerance) -> Result<Integral> {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    if pts.len() < 2 {
        return Err(Error::Quadrature("need at least two distinct finite breakpoints".into()));
    }
    let rule = default_rule();
    let mut out = Integral { value: 0.0, error: 0.0, panels: 0 };
    let mut stack: Vec<(f64, f64, f64, u32)> = Vec::new();
    for w in pts.windows(2) {
        stack.push((w[0], w[1], rule.integrate(&f, w[0], w[1]), 0));
        while let Some((a, b, whole, depth)) = stack.pop() {
            let m = 0.5 * (a + b);
            let left = rule.integrate(&f, a, m);
            let right = rule.integrate(&f, m, b);
            let halves = left + right;
            let diff = (halves - whole).abs();
            if !halves.is_finite() {
                return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
            }
            if diff < tol.panel_abs || m <= a || m >= b {
                out.value += halves;
                out.error += diff;
                out.panels += 1;
            } else if depth >= tol.max_depth {
                return Err(Error::Quadrature(format!(
                    "no convergence on [{a}, {b}] after {depth} bisections (discrepancy {diff:e})"
                )));
            } else {
                stack.push((m, b, right, depth + 1));
                stack.push((a, m, left, depth + 1));
            }
        }
    }
    Ok(out)
}
