//! Parent-vector trees over subclones.
//!
//! A tree on C subclones is encoded as a parent vector: entry c gives the
//! parent label of subclone c, the root (normal clone, label 1) has parent 0,
//! and labels are canonical in the sense that every parent label is smaller
//! than its child's. The sample space of trees is finite and enumerable:
//! there are (C-1)! canonical vectors for each C.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rooted labeled tree over subclones, stored as 1-based parent labels
/// (root first, parent 0).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ParentVector {
    parents: Vec<usize>,
}

impl ParentVector {
    pub fn new(parents: Vec<usize>) -> Result<Self> {
        if parents.is_empty() {
            return Err(Error::InvalidTree("empty parent vector".into()));
        }
        if parents[0] != 0 {
            return Err(Error::InvalidTree(format!(
                "root must have parent 0, got {}",
                parents[0]
            )));
        }
        for (i, &p) in parents.iter().enumerate().skip(1) {
            let c = i + 1;
            if p < 1 || p > i {
                return Err(Error::InvalidTree(format!(
                    "subclone {c} has parent {p}, expected 1..={}",
                    i
                )));
            }
        }
        Ok(ParentVector { parents })
    }

    /// Number of subclones C.
    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Parent label of subclone `c` (1-based); 0 for the root.
    pub fn parent(&self, c: usize) -> usize {
        self.parents[c - 1]
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    /// Number of generations between subclone `c` (1-based) and the root.
    pub fn depth(&self, c: usize) -> Result<usize> {
        if c < 1 || c > self.len() {
            return Err(Error::InvalidTree(format!(
                "subclone index {c} out of range 1..={}",
                self.len()
            )));
        }
        Ok(self.depths()[c - 1])
    }

    /// Depths of all subclones, indexed by label - 1.
    pub fn depths(&self) -> Vec<usize> {
        let mut depths = vec![0usize; self.len()];
        for c in 2..=self.len() {
            depths[c - 1] = depths[self.parent(c) - 1] + 1;
        }
        depths
    }

    pub fn parse(s: &str) -> Result<Self> {
        let parents = s
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidTree(format!("bad parent entry {tok:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        ParentVector::new(parents)
    }
}

impl fmt::Display for ParentVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let strs: Vec<String> = self.parents.iter().map(|p| p.to_string()).collect();
        write!(f, "{}", strs.join(","))
    }
}

impl TryFrom<String> for ParentVector {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        ParentVector::parse(&s)
    }
}

impl From<ParentVector> for String {
    fn from(t: ParentVector) -> String {
        t.to_string()
    }
}

/// Unnormalized log weight of the depth-penalty tree prior, prod (1+eta_c)^-beta.
fn log_tree_weight(tree: &ParentVector, beta: f64) -> f64 {
    tree.depths()
        .iter()
        .map(|&eta| -beta * ((1 + eta) as f64).ln())
        .sum()
}

/// Log prior of `tree` under the depth-penalty prior, normalized over all
/// canonical trees with the same number of subclones.
pub fn log_prior_tree(tree: &ParentVector, beta: f64) -> f64 {
    let c = tree.len();
    let mut norm = f64::NEG_INFINITY;
    for t in enumerate_trees(c) {
        norm = logaddexp(norm, log_tree_weight(&t, beta));
    }
    log_tree_weight(tree, beta) - norm
}

/// Log prior mass of the subclone count under the geometric prior
/// (1-alpha)^(C-1) alpha, renormalized over [c_min, c_max].
pub fn log_prior_c(c: usize, alpha: f64, c_min: usize, c_max: usize) -> Result<f64> {
    if c < c_min || c > c_max {
        return Err(Error::InvalidConfig(format!(
            "C={c} outside [{c_min}, {c_max}]"
        )));
    }
    let log_mass = |c: usize| (c as f64 - 1.0) * (1.0 - alpha).ln() + alpha.ln();
    let mut norm = f64::NEG_INFINITY;
    for ci in c_min..=c_max {
        norm = logaddexp(norm, log_mass(ci));
    }
    Ok(log_mass(c) - norm)
}

pub(crate) fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// All canonical parent vectors with exactly `c` subclones, in lexicographic
/// order.
pub fn enumerate_trees(c: usize) -> Vec<ParentVector> {
    let mut out = Vec::new();
    let mut parents = vec![0usize; c];
    fn rec(parents: &mut Vec<usize>, next: usize, out: &mut Vec<ParentVector>) {
        if next > parents.len() {
            out.push(ParentVector {
                parents: parents.clone(),
            });
            return;
        }
        for p in 1..next {
            parents[next - 1] = p;
            rec(parents, next + 1, out);
        }
    }
    if c == 1 {
        out.push(ParentVector { parents });
    } else {
        rec(&mut parents, 2, &mut out);
    }
    out
}

/// The enumerated sample space of (tree, C) pairs for C in [c_min, c_max],
/// ordered by C ascending then lexicographically on parent vectors.
#[derive(Debug, Clone)]
pub struct TreeSpace {
    pub c_min: usize,
    pub c_max: usize,
    trees: Vec<ParentVector>,
}

impl TreeSpace {
    pub fn enumerate(c_min: usize, c_max: usize) -> Result<Self> {
        if c_min < 2 || c_min > c_max {
            return Err(Error::InvalidConfig(format!(
                "invalid subclone bounds [{c_min}, {c_max}]"
            )));
        }
        if c_max > 9 {
            return Err(Error::InvalidConfig(format!(
                "c_max={c_max} makes the tree space intractably large"
            )));
        }
        let mut trees = Vec::new();
        for c in c_min..=c_max {
            trees.extend(enumerate_trees(c));
        }
        Ok(TreeSpace { c_min, c_max, trees })
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn trees(&self) -> &[ParentVector] {
        &self.trees
    }

    pub fn tree(&self, index: usize) -> &ParentVector {
        &self.trees[index]
    }

    /// Index of a tree in enumeration order, if present.
    pub fn index_of(&self, tree: &ParentVector) -> Option<usize> {
        self.trees.iter().position(|t| t == tree)
    }

    /// Draw an index uniformly over the whole space.
    pub fn propose_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.trees.len())
    }

    /// Log prior mass log p(T, C) of the tree at `index`.
    pub fn log_prior(&self, index: usize, alpha: f64, beta: f64) -> f64 {
        let tree = &self.trees[index];
        let lp_c = log_prior_c(tree.len(), alpha, self.c_min, self.c_max)
            .expect("enumerated tree within bounds");
        lp_c + log_prior_tree(tree, beta)
    }
}
