//! Rooted binary species trees with divergence times and per-branch rates.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::newick::{self, NewickNode};

/// A node of the species tree. The branch "above" a node is the population
/// that lives between `time` and the parent's time; above the root that
/// population extends to infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesNode {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Divergence time before present, in coalescent units. Leaves are at 0.
    pub time: f64,
    /// Mutation rate on the branch above this node.
    pub rate: f64,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesTree {
    nodes: Vec<SpeciesNode>,
    root: usize,
    /// Leaf node ids, in leaf-index order.
    leaves: Vec<usize>,
    postorder: Vec<usize>,
}

impl SpeciesTree {
    /// Builds and validates a tree from an arena. Leaf indices follow the
    /// order in which leaves appear in `nodes`.
    pub fn from_nodes(nodes: Vec<SpeciesNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidTree("no nodes".into()));
        }
        let roots: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].parent.is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidTree(format!("expected one root, found {}", roots.len())));
        }
        let root = roots[0];
        for (i, n) in nodes.iter().enumerate() {
            if !(n.rate > 0.0 && n.rate.is_finite()) {
                return Err(Error::InvalidTree(format!("node {i}: rate must be positive, got {}", n.rate)));
            }
            if !n.time.is_finite() {
                return Err(Error::InvalidTree(format!("node {i}: time must be finite")));
            }
            match n.children.len() {
                0 => {
                    if n.time != 0.0 {
                        return Err(Error::InvalidTree(format!("leaf {i} has nonzero time {}", n.time)));
                    }
                    if n.label.is_none() {
                        return Err(Error::InvalidTree(format!("leaf {i} has no label")));
                    }
                }
                2 => {}
                c => return Err(Error::InvalidTree(format!("node {i} has {c} children; tree must be binary"))),
            }
            for &c in &n.children {
                if c >= nodes.len() || nodes[c].parent != Some(i) {
                    return Err(Error::InvalidTree(format!("inconsistent parent/child link {i} -> {c}")));
                }
                if nodes[c].time >= n.time {
                    return Err(Error::InvalidTree(format!(
                        "parent time {} must exceed child time {}",
                        n.time, nodes[c].time
                    )));
                }
            }
        }
        let mut postorder = Vec::with_capacity(nodes.len());
        let mut stack = vec![(root, false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                postorder.push(v);
            } else {
                stack.push((v, true));
                for &c in nodes[v].children.iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        if postorder.len() != nodes.len() {
            return Err(Error::InvalidTree("nodes unreachable from the root".into()));
        }
        let leaves: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].children.is_empty()).collect();
        let labels: BTreeSet<&str> = leaves.iter().filter_map(|&l| nodes[l].label.as_deref()).collect();
        if labels.len() != leaves.len() {
            return Err(Error::InvalidTree("duplicate leaf labels".into()));
        }
        Ok(SpeciesTree { nodes, root, leaves, postorder })
    }

    /// One species, no divergence.
    pub fn single_leaf() -> Self {
        let nodes = vec![SpeciesNode { parent: None, children: vec![], time: 0.0, rate: 1.0, label: Some("1".into()) }];
        Self::from_nodes(nodes).expect("valid")
    }

    /// Two species diverging at `tau`, so that `d_12 = 2 tau` with unit rates.
    pub fn two_leaf(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Domain(format!("divergence time must be positive, got {tau}")));
        }
        let leaf = |l: &str| SpeciesNode { parent: Some(2), children: vec![], time: 0.0, rate: 1.0, label: Some(l.into()) };
        Self::from_nodes(vec![
            leaf("1"),
            leaf("2"),
            SpeciesNode { parent: None, children: vec![0, 1], time: tau, rate: 1.0, label: None },
        ])
    }

    /// Three species: the leaves `closest` (0-based leaf indices) split at
    /// `1 - f`, the remaining one splits off at `1`. Labels are "1", "2", "3".
    pub fn three_leaf(f: f64, closest: (usize, usize)) -> Result<Self> {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Domain(format!("f must lie in (0,1), got {f}")));
        }
        let (a, b) = closest;
        if a == b || a > 2 || b > 2 {
            return Err(Error::Domain(format!("bad closest pair ({a},{b})")));
        }
        let other = 3 - a - b;
        let mut nodes: Vec<SpeciesNode> = (0..3)
            .map(|i| SpeciesNode { parent: None, children: vec![], time: 0.0, rate: 1.0, label: Some((i + 1).to_string()) })
            .collect();
        nodes.push(SpeciesNode { parent: Some(4), children: vec![a.min(b), a.max(b)], time: 1.0 - f, rate: 1.0, label: None });
        nodes.push(SpeciesNode { parent: None, children: vec![3, other], time: 1.0, rate: 1.0, label: None });
        nodes[a].parent = Some(3);
        nodes[b].parent = Some(3);
        nodes[other].parent = Some(4);
        Self::from_nodes(nodes)
    }

    /// Reads a species tree from Newick. Branch lengths are in coalescent
    /// units and must make the tree ultrametric; the root length is ignored.
    pub fn from_newick(s: &str) -> Result<Self> {
        let parsed = newick::parse(s)?;
        let mut nodes = Vec::new();
        let (root, _) = Self::push_newick(&parsed, None, &mut nodes)?;
        debug_assert_eq!(root, nodes.len() - 1);
        Self::from_nodes(nodes)
    }

    fn push_newick(n: &NewickNode, parent: Option<usize>, nodes: &mut Vec<SpeciesNode>) -> Result<(usize, f64)> {
        let rate = n.nu.unwrap_or(1.0);
        if n.is_leaf() {
            let id = nodes.len();
            nodes.push(SpeciesNode { parent, children: vec![], time: 0.0, rate, label: n.label.clone() });
            return Ok((id, 0.0));
        }
        let mut kids = Vec::new();
        let mut height: Option<f64> = None;
        for c in &n.children {
            let (cid, ch) = Self::push_newick(c, None, nodes)?;
            let len = c.length.ok_or_else(|| {
                Error::InvalidTree(format!("branch above {} has no length", c.label.as_deref().unwrap_or("internal node")))
            })?;
            if len <= 0.0 {
                return Err(Error::InvalidTree(format!("branch lengths must be positive, got {len}")));
            }
            let h = ch + len;
            match height {
                None => height = Some(h),
                Some(h0) if (h - h0).abs() <= 1e-9 * h0.max(1.0) => {}
                Some(h0) => {
                    return Err(Error::InvalidTree(format!("tree is not ultrametric ({h0} vs {h})")));
                }
            }
            kids.push(cid);
        }
        let id = nodes.len();
        for &c in &kids {
            nodes[c].parent = Some(id);
        }
        let time = height.unwrap_or(0.0);
        nodes.push(SpeciesNode { parent, children: kids, time, rate, label: n.label.clone() });
        Ok((id, time))
    }

    pub fn to_newick(&self) -> String {
        self.newick_node(self.root).to_newick()
    }

    fn newick_node(&self, v: usize) -> NewickNode {
        let n = &self.nodes[v];
        NewickNode {
            label: n.label.clone(),
            length: n.parent.map(|p| self.nodes[p].time - n.time),
            nu: (n.rate != 1.0).then_some(n.rate),
            children: n.children.iter().map(|&c| self.newick_node(c)).collect(),
        }
    }

    pub fn nodes(&self) -> &[SpeciesNode] {
        &self.nodes
    }

    pub fn node(&self, v: usize) -> &SpeciesNode {
        &self.nodes[v]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Node id of leaf `i`.
    pub fn leaf_node(&self, i: usize) -> usize {
        self.leaves[i]
    }

    pub fn leaf_labels(&self) -> Vec<String> {
        self.leaves.iter().map(|&l| self.nodes[l].label.clone().unwrap_or_default()).collect()
    }

    /// Children before parents.
    pub fn postorder(&self) -> &[usize] {
        &self.postorder
    }

    /// Upper end of the population above `v`; `f64::INFINITY` for the root.
    pub fn population_end(&self, v: usize) -> f64 {
        self.nodes[v].parent.map_or(f64::INFINITY, |p| self.nodes[p].time)
    }

    /// Whether `anc` is `v` or one of its ancestors.
    pub fn is_ancestor_or_self(&self, anc: usize, mut v: usize) -> bool {
        loop {
            if v == anc {
                return true;
            }
            match self.nodes[v].parent {
                Some(p) => v = p,
                None => return false,
            }
        }
    }

    /// Most recent common ancestor of leaves `a` and `b` (leaf indices).
    pub fn mrca(&self, a: usize, b: usize) -> usize {
        let mut v = self.leaves[a];
        let target = self.leaves[b];
        while !self.is_ancestor_or_self(v, target) {
            v = self.nodes[v].parent.expect("root is a common ancestor");
        }
        v
    }

    /// Path length `d_ab = sum over path edges of nu_e t_e`.
    pub fn path_length(&self, a: usize, b: usize) -> f64 {
        let lca = self.mrca(a, b);
        let climb = |mut v: usize| {
            let mut d = 0.0;
            while v != lca {
                let n = &self.nodes[v];
                let p = n.parent.expect("below the mrca");
                d += n.rate * (self.nodes[p].time - n.time);
                v = p;
            }
            d
        };
        climb(self.leaves[a]) + climb(self.leaves[b])
    }

    /// Leaf-index sets below each internal node; identifies the rooted topology.
    pub fn clusters(&self) -> BTreeSet<BTreeSet<usize>> {
        let leaf_index = |v: usize| self.leaves.iter().position(|&l| l == v).expect("leaf");
        let mut below: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.nodes.len()];
        let mut out = BTreeSet::new();
        for &v in &self.postorder {
            if self.nodes[v].children.is_empty() {
                below[v].insert(leaf_index(v));
            } else {
                let mut s = BTreeSet::new();
                for &c in &self.nodes[v].children {
                    s.extend(below[c].iter().copied());
                }
                below[v] = s.clone();
                out.insert(s);
            }
        }
        out
    }

    /// Copy of the tree with leaf labels permuted: leaf `i` gets label of leaf `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_leaves() {
            return Err(Error::Domain("permutation length differs from leaf count".into()));
        }
        let labels = self.leaf_labels();
        let mut nodes = self.nodes.clone();
        for (i, &l) in self.leaves.iter().enumerate() {
            nodes[l].label = Some(labels[perm[i]].clone());
        }
        Self::from_nodes(nodes)
    }
}
