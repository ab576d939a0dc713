//! Gene trees under the multispecies coalescent.
//!
//! Looking backward in time, within every species-tree branch each pair of
//! lineages coalesces at rate 1. Lineages leaving two sibling branches are
//! pooled in the parent population, and above the root coalescence runs until
//! a single lineage is left.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::seed::{self, SimRng};
use crate::species::SpeciesTree;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneEdge {
    /// Elapsed time on the edge, in coalescent units.
    pub length: f64,
    /// Rate-weighted length, the sum of `nu * dt` over traversed populations.
    pub expected_substitutions: f64,
    /// `1 - exp(-expected_substitutions)`.
    pub mutation_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneNode {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Coalescence time (0 for leaves).
    pub time: f64,
    /// Species-tree node whose population holds this gene node.
    pub population: usize,
    /// Species leaf index for sampled lineages.
    pub leaf: Option<usize>,
    /// Edge to the parent, filled by [`attach_mutation_probs`].
    pub edge: Option<GeneEdge>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneTree {
    nodes: Vec<GeneNode>,
    root: usize,
    /// Gene node id per species leaf index.
    leaves: Vec<usize>,
    labels: Vec<String>,
}

impl GeneTree {
    pub fn nodes(&self) -> &[GeneNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_node(&self, i: usize) -> usize {
        self.leaves[i]
    }

    /// Species leaf labels, in leaf-index order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn has_mutation_probs(&self) -> bool {
        self.nodes.iter().enumerate().all(|(i, n)| i == self.root || n.edge.is_some())
    }

    /// Parents before children.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.nodes[v].children.iter().rev().copied());
        }
        out
    }

    /// Coalescence time of the lineages sampled from leaves `a` and `b`.
    pub fn coalescence_time(&self, a: usize, b: usize) -> f64 {
        let ancestors = |mut v: usize| {
            let mut s = vec![v];
            while let Some(p) = self.nodes[v].parent {
                s.push(p);
                v = p;
            }
            s
        };
        let up_a = ancestors(self.leaves[a]);
        let up_b: BTreeSet<usize> = ancestors(self.leaves[b]).into_iter().collect();
        let lca = up_a.into_iter().find(|v| up_b.contains(v)).expect("common root");
        self.nodes[lca].time
    }

    /// Leaf-index sets below each internal node.
    pub fn clusters(&self) -> BTreeSet<BTreeSet<usize>> {
        let mut out = BTreeSet::new();
        let mut below: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.nodes.len()];
        for &v in self.preorder().iter().rev() {
            let n = &self.nodes[v];
            if let Some(l) = n.leaf {
                below[v].insert(l);
            } else {
                let s: BTreeSet<usize> = n.children.iter().flat_map(|&c| below[c].iter().copied()).collect();
                below[v] = s.clone();
                out.insert(s);
            }
        }
        out
    }

    /// Gene tree for a two-species tree whose two lineages coalesce at `time`.
    /// Used to pin the coalescence time (e.g. `tau + z` for a fixed `z`).
    pub fn cherry(species: &SpeciesTree, time: f64) -> Result<GeneTree> {
        if species.n_leaves() != 2 {
            return Err(Error::Domain("cherry gene trees need a two-leaf species tree".into()));
        }
        let root_pop = species.root();
        if time < species.node(root_pop).time {
            return Err(Error::Embedding(format!(
                "coalescence at {time} precedes the divergence at {}",
                species.node(root_pop).time
            )));
        }
        let leaf = |i: usize| GeneNode {
            parent: Some(2),
            children: vec![],
            time: 0.0,
            population: species.leaf_node(i),
            leaf: Some(i),
            edge: None,
        };
        Ok(GeneTree {
            nodes: vec![
                leaf(0),
                leaf(1),
                GeneNode { parent: None, children: vec![0, 1], time, population: root_pop, leaf: None, edge: None },
            ],
            root: 2,
            leaves: vec![0, 1],
            labels: species.leaf_labels(),
        })
    }

    #[cfg(test)]
    pub(crate) fn edges_mut(&mut self) -> impl Iterator<Item = &mut GeneEdge> {
        self.nodes.iter_mut().filter_map(|n| n.edge.as_mut())
    }

    /// Checks that every node sits inside its population's time interval and
    /// every edge climbs the species tree.
    pub fn validate_embedding(&self, species: &SpeciesTree) -> Result<()> {
        if self.leaves.len() != species.n_leaves() {
            return Err(Error::Embedding(format!(
                "gene tree has {} leaves, species tree {}",
                self.leaves.len(),
                species.n_leaves()
            )));
        }
        for (i, &g) in self.leaves.iter().enumerate() {
            let n = &self.nodes[g];
            if n.population != species.leaf_node(i) || n.time != 0.0 {
                return Err(Error::Embedding(format!("leaf {i} not sampled at time 0 in its species")));
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.population >= species.nodes().len() {
                return Err(Error::Embedding(format!("node {i}: unknown population {}", n.population)));
            }
            let lo = species.node(n.population).time;
            let hi = species.population_end(n.population);
            if !(n.time >= lo && n.time <= hi) {
                return Err(Error::Embedding(format!(
                    "node {i} at time {} lies outside its population [{lo}, {hi}]",
                    n.time
                )));
            }
            if n.leaf.is_none() && n.children.len() != 2 {
                return Err(Error::Embedding(format!("internal node {i} is not binary")));
            }
            if let Some(p) = n.parent {
                let pn = &self.nodes[p];
                if pn.time < n.time {
                    return Err(Error::Embedding(format!("node {i} is older than its parent")));
                }
                if !species.is_ancestor_or_self(pn.population, n.population) {
                    return Err(Error::Embedding(format!("edge above node {i} descends the species tree")));
                }
            } else if i != self.root {
                return Err(Error::Embedding(format!("node {i} has no parent but is not the root")));
            }
        }
        Ok(())
    }
}

/// Samples a gene tree with a fresh generator seeded from `seed`.
pub fn sample_gene_tree(species: &SpeciesTree, seed: u64) -> GeneTree {
    sample_gene_tree_with(species, &mut seed::rng(seed))
}

/// Samples a gene tree by iterated exponential races inside each branch.
pub fn sample_gene_tree_with(species: &SpeciesTree, rng: &mut SimRng) -> GeneTree {
    let n_leaves = species.n_leaves();
    let mut nodes: Vec<GeneNode> = Vec::with_capacity(2 * n_leaves.max(1) - 1);
    let mut leaves = vec![usize::MAX; n_leaves];
    // Lineages leaving the bottom (recent end) of each species branch.
    let mut exiting: Vec<Vec<usize>> = vec![Vec::new(); species.nodes().len()];

    for &v in species.postorder() {
        let sp = species.node(v);
        let mut lineages: Vec<usize> = if sp.children.is_empty() {
            let idx = (0..n_leaves).find(|&i| species.leaf_node(i) == v).expect("leaf");
            let id = nodes.len();
            nodes.push(GeneNode { parent: None, children: vec![], time: 0.0, population: v, leaf: Some(idx), edge: None });
            leaves[idx] = id;
            vec![id]
        } else {
            sp.children.iter().flat_map(|&c| std::mem::take(&mut exiting[c])).collect()
        };
        let end = species.population_end(v);
        let mut t = sp.time;
        while lineages.len() >= 2 {
            let l = lineages.len() as f64;
            let rate = l * (l - 1.0) / 2.0;
            let wait: f64 = Exp1.sample(rng);
            let wait = wait / rate;
            if t + wait >= end {
                break;
            }
            t += wait;
            let i = rng.random_range(0..lineages.len());
            let mut j = rng.random_range(0..lineages.len() - 1);
            if j >= i {
                j += 1;
            }
            let (a, b) = (lineages[i], lineages[j]);
            let id = nodes.len();
            nodes.push(GeneNode { parent: None, children: vec![a, b], time: t, population: v, leaf: None, edge: None });
            nodes[a].parent = Some(id);
            nodes[b].parent = Some(id);
            lineages.swap_remove(i.max(j));
            lineages.swap_remove(i.min(j));
            lineages.push(id);
        }
        exiting[v] = lineages;
    }
    let root_lineages = &exiting[species.root()];
    debug_assert_eq!(root_lineages.len(), 1);
    let root = root_lineages[0];
    GeneTree { nodes, root, leaves, labels: species.leaf_labels() }
}

/// Fills `p_e = 1 - exp(-sum nu dt)` on every edge, integrating the rates of
/// the species branches each gene edge passes through.
pub fn attach_mutation_probs(gene: &GeneTree, species: &SpeciesTree) -> Result<GeneTree> {
    gene.validate_embedding(species)?;
    let mut out = gene.clone();
    for i in 0..out.nodes.len() {
        let Some(p) = out.nodes[i].parent else { continue };
        let (t0, t1) = (out.nodes[i].time, out.nodes[p].time);
        let top_pop = out.nodes[p].population;
        let mut pop = out.nodes[i].population;
        let mut subst = 0.0;
        loop {
            let lo = species.node(pop).time.max(t0);
            let hi = species.population_end(pop).min(t1);
            if hi > lo {
                subst += species.node(pop).rate * (hi - lo);
            }
            if pop == top_pop {
                break;
            }
            pop = species.node(pop).parent.expect("validated ancestor chain");
        }
        out.nodes[i].edge = Some(GeneEdge { length: t1 - t0, expected_substitutions: subst, mutation_prob: -(-subst).exp_m1() });
    }
    Ok(out)
}

/// Samples a gene tree and attaches mutation probabilities.
pub fn sample_gene_with_probs(species: &SpeciesTree, rng: &mut SimRng) -> GeneTree {
    let g = sample_gene_tree_with(species, rng);
    attach_mutation_probs(&g, species).expect("sampled trees are embedded")
}
