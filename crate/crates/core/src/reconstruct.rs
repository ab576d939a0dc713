//! Species-tree inference from per-gene θ matrices under a molecular clock.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::detection::{agnostic_two_sample_test, quantile_level, quantile_of, TwoSampleVerdict, Which};
use crate::error::{Error, Result};
use crate::newick::format_number;
use crate::pipeline::pair_samples;
use crate::sequence::{jc_invert, ThetaMatrix};

/// Leaf pairs of a triplet, in comparison order.
pub const TRIPLET_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub first: (usize, usize),
    pub second: (usize, usize),
    pub verdict: TwoSampleVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletCall {
    pub labels: [String; 3],
    /// Positions (into `labels`) of the inferred cherry; `None` when undecided.
    pub closest: Option<(usize, usize)>,
    pub comparisons: Vec<PairComparison>,
}

impl TripletCall {
    pub fn closest_labels(&self) -> Option<(&str, &str)> {
        self.closest.map(|(a, b)| (self.labels[a].as_str(), self.labels[b].as_str()))
    }
}

/// Runs the agnostic two-sample test on every pair of leaf pairs; the closest
/// pair is the one flagged as the alternative (fewer substitutions) in both of
/// its comparisons. Anything short of that is undecided.
pub fn triplet_topology(matrices: &[ThetaMatrix], leaves: [usize; 3], c: f64, split_seed: u64) -> Result<TripletCall> {
    let first = matrices.first().ok_or_else(|| Error::Domain("no genes".into()))?;
    if first.n() < 3 {
        return Err(Error::Domain(format!("triplet inference needs 3 leaves, got {}", first.n())));
    }
    if matrices.len() < 4 {
        return Err(Error::Domain(format!("triplet inference needs at least 4 genes, got {}", matrices.len())));
    }
    if leaves.iter().any(|&l| l >= first.n()) || leaves[0] == leaves[1] || leaves[0] == leaves[2] || leaves[1] == leaves[2] {
        return Err(Error::Domain(format!("bad leaf selection {leaves:?}")));
    }
    let samples: Vec<_> = TRIPLET_PAIRS
        .iter()
        .map(|&(a, b)| pair_samples(matrices, leaves[a], leaves[b]))
        .collect::<Result<_>>()?;
    let mut wins = [0usize; 3];
    let mut comparisons = Vec::with_capacity(3);
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let verdict = agnostic_two_sample_test(&samples[i], &samples[j], c, split_seed)?;
        match verdict.decision {
            Which::First => wins[i] += 1,
            Which::Second => wins[j] += 1,
            Which::Undecided => {}
        }
        comparisons.push(PairComparison { first: TRIPLET_PAIRS[i], second: TRIPLET_PAIRS[j], verdict });
    }
    let closest = wins.iter().position(|&w| w == 2).map(|i| TRIPLET_PAIRS[i]);
    let labels = leaves.map(|l| first.labels[l].clone());
    Ok(TripletCall { labels, closest, comparisons })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub labels: Vec<String>,
    /// Symmetric, zero diagonal; saturated pairs hold `inf`.
    pub d: Vec<Vec<f64>>,
    pub saturated: Vec<(usize, usize)>,
}

/// `d_ab = jc_invert(q-quantile of θ_ab / k)` with `q = min(1, C / sqrt(k))`.
///
/// A low quantile tracks the lower edge of the per-gene distance distribution,
/// so this estimates twice the divergence time, not the mean gene-tree
/// distance (which carries an extra coalescent term above the root).
pub fn quantile_distance_estimate(matrices: &[ThetaMatrix], c: f64) -> Result<DistanceEstimate> {
    let first = matrices.first().ok_or_else(|| Error::Domain("no genes".into()))?;
    if first.k == 0 {
        return Err(Error::Domain("distance estimation needs k >= 1".into()));
    }
    let (n, k) = (first.n(), first.k);
    let q = quantile_level(c, k);
    let mut d = vec![vec![0.0; n]; n];
    let mut saturated = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let s = pair_samples(matrices, a, b)?;
            let v = quantile_of(s.thetas(), q)?;
            let est = match jc_invert(v as f64 / k as f64) {
                Ok(x) => x,
                Err(Error::Saturated(_)) => {
                    saturated.push((a, b));
                    f64::INFINITY
                }
                Err(e) => return Err(e),
            };
            d[a][b] = est;
            d[b][a] = est;
        }
    }
    Ok(DistanceEstimate { labels: first.labels.clone(), d, saturated })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockNode {
    pub children: Option<(usize, usize)>,
    pub leaf: Option<usize>,
    pub height: f64,
}

/// Rooted binary tree with node heights; leaves at height zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockTree {
    pub labels: Vec<String>,
    pub nodes: Vec<ClockNode>,
    pub root: usize,
}

impl ClockTree {
    pub fn to_newick(&self) -> String {
        let mut out = String::new();
        self.write(self.root, None, &mut out);
        out.push(';');
        out
    }

    fn write(&self, v: usize, parent_height: Option<f64>, out: &mut String) {
        let node = &self.nodes[v];
        match (node.children, node.leaf) {
            (Some((a, b)), _) => {
                out.push('(');
                self.write(a, Some(node.height), out);
                out.push(',');
                self.write(b, Some(node.height), out);
                out.push(')');
            }
            (None, Some(l)) => out.push_str(&self.labels[l]),
            (None, None) => unreachable!("node without children or leaf"),
        }
        if let Some(h) = parent_height {
            out.push(':');
            out.push_str(&format_number(h - node.height));
        }
    }

    /// Leaf sets below each internal node.
    pub fn clusters(&self) -> BTreeSet<BTreeSet<usize>> {
        let mut out = BTreeSet::new();
        self.collect(self.root, &mut out);
        out
    }

    fn collect(&self, v: usize, out: &mut BTreeSet<BTreeSet<usize>>) -> BTreeSet<usize> {
        match (self.nodes[v].children, self.nodes[v].leaf) {
            (Some((a, b)), _) => {
                let mut s = self.collect(a, out);
                s.extend(self.collect(b, out));
                out.insert(s.clone());
                s
            }
            (None, Some(l)) => BTreeSet::from([l]),
            (None, None) => BTreeSet::new(),
        }
    }

    /// Twice the height of each pair's most recent common ancestor.
    pub fn induced_distances(&self) -> Vec<Vec<f64>> {
        let n = self.labels.len();
        let mut d = vec![vec![0.0; n]; n];
        for (v, node) in self.nodes.iter().enumerate() {
            if let Some((a, b)) = node.children {
                let la = self.collect(a, &mut BTreeSet::new());
                let lb = self.collect(b, &mut BTreeSet::new());
                for &x in &la {
                    for &y in &lb {
                        d[x][y] = 2.0 * self.nodes[v].height;
                        d[y][x] = 2.0 * self.nodes[v].height;
                    }
                }
            }
        }
        d
    }

    /// Leaves at zero and no child above its parent.
    pub fn is_ultrametric(&self) -> bool {
        self.nodes.iter().all(|n| match n.children {
            None => n.height == 0.0,
            Some((a, b)) => self.nodes[a].height <= n.height && self.nodes[b].height <= n.height,
        })
    }
}

/// Single-linkage clustering; a join between clusters happens at half the
/// smallest cross-cluster distance. Ties merge the lowest-indexed clusters
/// first, and tied heights give zero-length branches.
pub fn single_linkage_tree(d: &[Vec<f64>], labels: &[String]) -> Result<ClockTree> {
    let n = d.len();
    if n == 0 || labels.len() != n {
        return Err(Error::Domain(format!("{n}x{n} matrix with {} labels", labels.len())));
    }
    for a in 0..n {
        if d[a].len() != n {
            return Err(Error::Domain("distance matrix must be square".into()));
        }
        if d[a][a] != 0.0 {
            return Err(Error::Domain(format!("nonzero diagonal at {a}")));
        }
        for b in 0..n {
            let v = d[a][b];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!("distance {}-{} is {v}", labels[a], labels[b])));
            }
            if v != d[b][a] {
                return Err(Error::Domain(format!("matrix is not symmetric at ({}, {})", labels[a], labels[b])));
            }
        }
    }
    let mut nodes: Vec<ClockNode> = (0..n).map(|i| ClockNode { children: None, leaf: Some(i), height: 0.0 }).collect();
    // Active clusters: (node id, members).
    let mut active: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    while active.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..active.len() {
            for j in i + 1..active.len() {
                let m = active[i].1.iter().flat_map(|&x| active[j].1.iter().map(move |&y| d[x][y])).fold(f64::INFINITY, f64::min);
                if m < best.0 {
                    best = (m, i, j);
                }
            }
        }
        let (dist, i, j) = best;
        let (b_id, b_mem) = active.remove(j);
        let (a_id, a_mem) = active.remove(i);
        let height = (0.5 * dist).max(nodes[a_id].height).max(nodes[b_id].height);
        let id = nodes.len();
        nodes.push(ClockNode { children: Some((a_id, b_id)), leaf: None, height });
        let mut members = a_mem;
        members.extend(b_mem);
        active.insert(i, (id, members));
    }
    Ok(ClockTree { labels: labels.to_vec(), root: active[0].0, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::simulate_theta_matrices;
    use crate::species::SpeciesTree;

    fn labels(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    #[test]
    fn hand_traced_linkage() {
        let d = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 2.0], vec![2.0, 2.0, 0.0]];
        let t = single_linkage_tree(&d, &labels(3)).unwrap();
        assert_eq!(t.to_newick(), "((1:0.5,2:0.5):0.5,3:1);");
        assert_eq!(t.nodes[t.root].height, 1.0);
        assert!(t.is_ultrametric());
        assert_eq!(t.induced_distances(), d);
        let two = single_linkage_tree(&[vec![0.0, 2.0], vec![2.0, 0.0]], &labels(2)).unwrap();
        assert_eq!(two.nodes[two.root].height, 1.0);
        assert!(single_linkage_tree(&[vec![0.0, 2.0], vec![1.0, 0.0]], &labels(2)).is_err());
    }

    #[test]
    fn exact_on_species_tree_distances() {
        let s = SpeciesTree::from_newick("(((a:1,b:1):2,c:3):1,(d:2.5,e:2.5):1.5);").unwrap();
        let n = s.n_leaves();
        let d: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| if a == b { 0.0 } else { s.path_length(a, b) }).collect()).collect();
        let t = single_linkage_tree(&d, &s.leaf_labels()).unwrap();
        assert_eq!(t.clusters(), s.clusters());
        assert_eq!(t.induced_distances(), d);
    }

    #[test]
    fn quantile_estimate_basics() {
        let m = ThetaMatrix::from_rows(10, labels(2), vec![vec![0, 0], vec![0, 0]]).unwrap();
        let e = quantile_distance_estimate(&[m], 1.0).unwrap();
        assert_eq!(e.d[0][1], 0.0);
        let m = ThetaMatrix::from_rows(4, labels(2), vec![vec![0, 3], vec![3, 0]]).unwrap();
        let e = quantile_distance_estimate(&[m.clone(), m], 1.0).unwrap();
        assert_eq!(e.saturated, vec![(0, 1)]);
        assert!(e.d[0][1].is_infinite());
    }

    #[test]
    fn identical_pairs_are_undecided() {
        let row = |t: u32| ThetaMatrix::from_rows(50, labels(3), vec![vec![0, t, t], vec![t, 0, t], vec![t, t, 0]]).unwrap();
        let mats: Vec<_> = [30, 31, 32, 33, 34, 35].iter().map(|&t| row(t)).collect();
        let call = triplet_topology(&mats, [0, 1, 2], 1.0, 1).unwrap();
        assert_eq!(call.closest, None);
        assert!(triplet_topology(&mats[..3], [0, 1, 2], 1.0, 1).is_err());
    }

    #[test]
    fn recovers_cherry_with_ample_data() {
        let s = SpeciesTree::three_leaf(0.3, (1, 2)).unwrap();
        let mats = simulate_theta_matrices(&s, 200, 400, 8).unwrap();
        let call = triplet_topology(&mats, [0, 1, 2], 1.0, 8).unwrap();
        assert_eq!(call.closest_labels(), Some(("2", "3")));
        let json = serde_json::to_string(&call).unwrap();
        assert!(json.contains("\"closest\":[1,2]"));
    }
}
