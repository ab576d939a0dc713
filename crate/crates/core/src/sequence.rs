//! Jukes-Cantor sequence evolution on gene trees and the pairwise
//! substitution count `theta`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};

use crate::coalescent::GeneTree;
use crate::error::{Error, Result};
use crate::seed::{self, SimRng};

const SYMBOLS: [u8; 4] = *b"ACGT";
const LOW_BITS: u64 = 0x5555_5555_5555_5555;
const PER_WORD: usize = 32;

/// DNA sequence with 2-bit symbols (A=0, C=1, G=2, T=3), 32 per word.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PackedSeq {
    len: usize,
    words: Vec<u64>,
}

impl PackedSeq {
    pub fn zeros(len: usize) -> Self {
        PackedSeq { len, words: vec![0; len.div_ceil(PER_WORD)] }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> u8 {
        debug_assert!(i < self.len);
        ((self.words[i / PER_WORD] >> (2 * (i % PER_WORD))) & 3) as u8
    }

    #[inline]
    pub fn set(&mut self, i: usize, s: u8) {
        debug_assert!(i < self.len && s < 4);
        let shift = 2 * (i % PER_WORD);
        let w = &mut self.words[i / PER_WORD];
        *w = (*w & !(3 << shift)) | ((s as u64) << shift);
    }

    pub fn symbols(&self) -> impl Iterator<Item = u8> + '_ {
        (0..self.len).map(|i| self.get(i))
    }
}

impl fmt::Display for PackedSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.symbols().map(|c| SYMBOLS[c as usize] as char).collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for PackedSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PackedSeq({self})")
    }
}

impl FromStr for PackedSeq {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes: Vec<u8> = s.bytes().filter(|b| !b.is_ascii_whitespace()).collect();
        let mut seq = PackedSeq::zeros(bytes.len());
        for (i, b) in bytes.iter().enumerate() {
            let sym = match b.to_ascii_uppercase() {
                b'A' => 0,
                b'C' => 1,
                b'G' => 2,
                b'T' => 3,
                other => return Err(Error::Parse(format!("invalid nucleotide '{}'", other as char))),
            };
            seq.set(i, sym);
        }
        Ok(seq)
    }
}

/// Number of sites at which `a` and `b` differ.
pub fn theta(a: &PackedSeq, b: &PackedSeq) -> Result<usize> {
    if a.len != b.len {
        return Err(Error::LengthMismatch { left: a.len, right: b.len });
    }
    Ok(a.words
        .iter()
        .zip(&b.words)
        .map(|(x, y)| {
            let d = x ^ y;
            ((d | (d >> 1)) & LOW_BITS).count_ones() as usize
        })
        .sum())
}

/// Leaf sequences of one gene.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSet {
    pub gene: usize,
    pub k: usize,
    pub labels: Vec<String>,
    pub seqs: Vec<PackedSeq>,
}

impl SequenceSet {
    pub fn new(gene: usize, labels: Vec<String>, seqs: Vec<PackedSeq>) -> Result<Self> {
        if labels.len() != seqs.len() {
            return Err(Error::Domain("one label per sequence required".into()));
        }
        let k = seqs.first().map_or(0, |s| s.len());
        if let Some(bad) = seqs.iter().find(|s| s.len() != k) {
            return Err(Error::LengthMismatch { left: k, right: bad.len() });
        }
        Ok(SequenceSet { gene, k, labels, seqs })
    }

    pub fn theta_matrix(&self) -> ThetaMatrix {
        let n = self.seqs.len();
        let mut counts = vec![0u32; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let t = theta(&self.seqs[a], &self.seqs[b]).expect("equal lengths") as u32;
                counts[a * n + b] = t;
                counts[b * n + a] = t;
            }
        }
        ThetaMatrix { k: self.k, labels: self.labels.clone(), counts }
    }
}

/// Symmetric matrix of pairwise substitution counts for one gene.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThetaMatrix {
    pub k: usize,
    pub labels: Vec<String>,
    counts: Vec<u32>,
}

impl ThetaMatrix {
    pub fn from_rows(k: usize, labels: Vec<String>, rows: Vec<Vec<u32>>) -> Result<Self> {
        let n = labels.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parse(format!("theta matrix must be {n}x{n}")));
        }
        for a in 0..n {
            if rows[a][a] != 0 {
                return Err(Error::Parse("theta matrix diagonal must be zero".into()));
            }
            for b in 0..n {
                if rows[a][b] != rows[b][a] {
                    return Err(Error::Parse("theta matrix must be symmetric".into()));
                }
                if rows[a][b] as usize > k {
                    return Err(Error::Parse(format!("theta {} exceeds k = {k}", rows[a][b])));
                }
            }
        }
        Ok(ThetaMatrix { k, labels, counts: rows.into_iter().flatten().collect() })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> u32 {
        self.counts[a * self.n() + b]
    }

    pub fn row(&self, a: usize) -> &[u32] {
        let n = self.n();
        &self.counts[a * n..(a + 1) * n]
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Evolves sequences of `k` sites down `gene`, seeded from `seed`.
pub fn simulate_sequences(gene: &GeneTree, k: usize, seed: u64) -> Result<SequenceSet> {
    simulate_sequences_with(gene, k, &mut seed::rng(seed))
}

/// Jukes-Cantor process: uniform root, and on each edge every site mutates
/// with probability `p_e`, a mutation redrawing the state uniformly from all
/// four symbols (so it may redraw the same symbol). Randomness is consumed
/// site by site, parent before child.
pub fn simulate_sequences_with(gene: &GeneTree, k: usize, rng: &mut SimRng) -> Result<SequenceSet> {
    if !gene.has_mutation_probs() {
        return Err(Error::Domain("gene tree has no mutation probabilities attached".into()));
    }
    let order = gene.preorder();
    let nodes = gene.nodes();
    let probs: Vec<f64> = nodes.iter().map(|n| n.edge.map_or(0.0, |e| e.mutation_prob)).collect();
    let parents: Vec<usize> = nodes.iter().map(|n| n.parent.unwrap_or(usize::MAX)).collect();
    let mut seqs: Vec<PackedSeq> = vec![PackedSeq::zeros(k); nodes.len()];
    let mut state = vec![0u8; nodes.len()];
    let root = gene.root();
    for site in 0..k {
        for &v in &order {
            let s = if v == root {
                (rng.next_u32() >> 30) as u8
            } else {
                let inherited = state[parents[v]];
                if rng.random::<f64>() < probs[v] {
                    (rng.next_u32() >> 30) as u8
                } else {
                    inherited
                }
            };
            state[v] = s;
            if s != 0 {
                seqs[v].set(site, s);
            }
        }
    }
    let n = gene.n_leaves();
    let leaf_seqs: Vec<PackedSeq> = (0..n).map(|i| std::mem::replace(&mut seqs[gene.leaf_node(i)], PackedSeq::zeros(0))).collect();
    SequenceSet::new(0, gene.labels().to_vec(), leaf_seqs)
}

/// Expected fraction of differing sites at path length `d`: `(3/4)(1 - e^{-d})`.
pub fn jc_expected_theta(d: f64) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::Domain(format!("path length must be nonnegative, got {d}")));
    }
    Ok(-0.75 * (-d).exp_m1())
}

/// Inverse of [`jc_expected_theta`]: `-ln(1 - 4 theta / 3)`.
pub fn jc_invert(theta_hat: f64) -> Result<f64> {
    if !(theta_hat >= 0.0) {
        return Err(Error::Domain(format!("theta fraction must be nonnegative, got {theta_hat}")));
    }
    if theta_hat >= 0.75 {
        return Err(Error::Saturated(theta_hat));
    }
    Ok(-(-4.0 * theta_hat / 3.0).ln_1p())
}
