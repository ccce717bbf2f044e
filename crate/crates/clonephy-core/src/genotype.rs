//! Algebra of mutation-pair genotypes.
//!
//! A genotype for one mutation pair in one subclone is a 2x2 binary matrix:
//! two alleles, each carrying mutation indicators at two proximal loci.
//! Because allele (column) order carries no information, the 16 raw matrices
//! collapse into 10 canonical codes. Short reads over the pair fall into 8
//! observable types (4 complete, 2 left-missing, 2 right-missing); the
//! emission probability of a read type given a genotype is a fixed table.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the ten canonical two-allele, two-locus genotypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct GenotypeCode(u8);

impl TryFrom<u8> for GenotypeCode {
    type Error = Error;
    fn try_from(code: u8) -> Result<Self> {
        GenotypeCode::new(code)
    }
}

impl From<GenotypeCode> for u8 {
    fn from(q: GenotypeCode) -> u8 {
        q.0
    }
}

/// Canonical representatives, listed as (allele 1, allele 2) with each allele
/// written as its two locus indicators.
const REPRESENTATIVES: [[[u8; 2]; 2]; 10] = [
    [[0, 0], [0, 0]], // 1
    [[0, 0], [0, 1]], // 2
    [[0, 0], [1, 0]], // 3
    [[0, 0], [1, 1]], // 4
    [[0, 1], [0, 1]], // 5
    [[0, 1], [1, 0]], // 6
    [[1, 0], [1, 0]], // 7
    [[0, 1], [1, 1]], // 8
    [[1, 0], [1, 1]], // 9
    [[1, 1], [1, 1]], // 10
];

impl GenotypeCode {
    pub const COUNT: usize = 10;

    /// The all-reference genotype carried by the normal subclone.
    pub const WILD_TYPE: GenotypeCode = GenotypeCode(1);

    /// The fully mutated genotype; it admits no further mutation.
    pub const FULL: GenotypeCode = GenotypeCode(10);

    pub fn new(code: u8) -> Result<Self> {
        if (1..=10).contains(&code) {
            Ok(GenotypeCode(code))
        } else {
            Err(Error::InvalidGenotypeCode(code))
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }

    /// Zero-based index into the code tables.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn all() -> impl Iterator<Item = GenotypeCode> + Clone {
        (1..=10).map(GenotypeCode)
    }

    pub fn representative(self) -> GenotypeMatrix {
        GenotypeMatrix {
            z: REPRESENTATIVES[self.index()],
        }
    }

    /// Total number of mutated positions, in 0..=4.
    pub fn num_mutations(self) -> u8 {
        let m = self.representative();
        m.z[0][0] + m.z[0][1] + m.z[1][0] + m.z[1][1]
    }
}

/// Raw 2x2 genotype matrix; `z[j][r]` is the mutation indicator of allele `j`
/// at locus `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenotypeMatrix {
    pub z: [[u8; 2]; 2],
}

impl GenotypeMatrix {
    pub fn new(z: [[u8; 2]; 2]) -> Self {
        debug_assert!(z.iter().flatten().all(|&b| b <= 1));
        GenotypeMatrix { z }
    }

    /// All 16 raw matrices, enumerated deterministically.
    pub fn all_raw() -> impl Iterator<Item = GenotypeMatrix> {
        (0u8..16).map(|bits| {
            GenotypeMatrix::new([
                [(bits >> 3) & 1, (bits >> 2) & 1],
                [(bits >> 1) & 1, bits & 1],
            ])
        })
    }

    /// The same genotype with the two alleles swapped.
    pub fn mirrored(self) -> GenotypeMatrix {
        GenotypeMatrix {
            z: [self.z[1], self.z[0]],
        }
    }

    fn allele_value(self, j: usize) -> u8 {
        2 * self.z[j][0] + self.z[j][1]
    }

    /// Map to the canonical code by sorting alleles lexicographically on
    /// their (locus 1, locus 2) indicators.
    pub fn canonicalize(self) -> GenotypeCode {
        let (a, b) = (self.allele_value(0), self.allele_value(1));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let code = match (lo, hi) {
            (0, 0) => 1,
            (0, 1) => 2,
            (0, 2) => 3,
            (0, 3) => 4,
            (1, 1) => 5,
            (1, 2) => 6,
            (2, 2) => 7,
            (1, 3) => 8,
            (2, 3) => 9,
            (3, 3) => 10,
            _ => unreachable!(),
        };
        GenotypeCode(code)
    }
}

/// One of the eight observable read types over a mutation pair:
/// 00, 01, 10, 11, -0, -1, 0-, 1- in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReadType(u8);

impl ReadType {
    pub const COUNT: usize = 8;

    pub fn new(g: u8) -> Result<Self> {
        if (1..=8).contains(&g) {
            Ok(ReadType(g))
        } else {
            Err(Error::InvalidReadType(g))
        }
    }

    pub fn g(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn all() -> impl Iterator<Item = ReadType> + Clone {
        (1..=8).map(ReadType)
    }

    /// Observed locus values; `None` marks the missing side.
    pub fn loci(self) -> (Option<u8>, Option<u8>) {
        match self.0 {
            1 => (Some(0), Some(0)),
            2 => (Some(0), Some(1)),
            3 => (Some(1), Some(0)),
            4 => (Some(1), Some(1)),
            5 => (None, Some(0)),
            6 => (None, Some(1)),
            7 => (Some(0), None),
            8 => (Some(1), None),
            _ => unreachable!(),
        }
    }

    pub fn is_complete(self) -> bool {
        self.0 <= 4
    }

    pub fn is_left_missing(self) -> bool {
        self.0 == 5 || self.0 == 6
    }

    pub fn is_right_missing(self) -> bool {
        self.0 == 7 || self.0 == 8
    }
}

/// Probability of emitting read type `g` from a raw genotype matrix: each
/// allele is picked with probability 0.5 and matches iff every observed locus
/// agrees, a missing locus matching anything.
pub fn emission_prob_matrix(g: ReadType, m: GenotypeMatrix) -> f64 {
    let (s1, s2) = g.loci();
    let mut p = 0.0;
    for j in 0..2 {
        let match1 = s1.map_or(true, |v| v == m.z[j][0]);
        let match2 = s2.map_or(true, |v| v == m.z[j][1]);
        if match1 && match2 {
            p += 0.5;
        }
    }
    p
}

fn emission_table() -> &'static [[f64; 10]; 8] {
    static TABLE: OnceLock<[[f64; 10]; 8]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [[0.0; 10]; 8];
        for g in ReadType::all() {
            for q in GenotypeCode::all() {
                table[g.index()][q.index()] = emission_prob_matrix(g, q.representative());
            }
        }
        table
    })
}

/// Probability of emitting read type `g` from canonical genotype `q`;
/// always one of 0, 0.5, 1.
#[inline]
pub fn emission_prob(g: ReadType, q: GenotypeCode) -> f64 {
    emission_table()[g.index()][q.index()]
}

/// The full emission table indexed by read-type index then code index; for
/// inner loops that cannot afford per-call wrapping.
#[inline]
pub(crate) fn emission_table_raw() -> &'static [[f64; 10]; 8] {
    emission_table()
}

/// Emission probabilities for every read type given genotype `q`, indexed by
/// read-type index. Row slices borrow from the precomputed table.
#[inline]
pub fn emission_row(q: GenotypeCode) -> [f64; 8] {
    let t = emission_table();
    let mut row = [0.0; 8];
    for (g, slot) in row.iter_mut().enumerate() {
        *slot = t[g][q.index()];
    }
    row
}

/// Single-mutation transitions out of each code: for child code `q'` the
/// entry gives the number of unmutated positions of the parent representative
/// that canonicalize to `q'`. Probabilities are multiplicity / (4 - l).
fn children_table() -> &'static [Vec<(GenotypeCode, u8)>; 10] {
    static TABLE: OnceLock<[Vec<(GenotypeCode, u8)>; 10]> = OnceLock::new();
    TABLE.get_or_init(|| {
        std::array::from_fn(|idx| {
            let parent = GenotypeCode((idx + 1) as u8);
            let rep = parent.representative();
            let mut counts: Vec<(GenotypeCode, u8)> = Vec::new();
            for j in 0..2 {
                for r in 0..2 {
                    if rep.z[j][r] == 0 {
                        let mut m = rep;
                        m.z[j][r] = 1;
                        let child = m.canonicalize();
                        match counts.iter_mut().find(|(q, _)| *q == child) {
                            Some((_, n)) => *n += 1,
                            None => counts.push((child, 1)),
                        }
                    }
                }
            }
            counts.sort_by_key(|(q, _)| *q);
            counts
        })
    })
}

/// Children reachable from `q` by one new mutation, with multiplicities over
/// the `4 - num_mutations(q)` unmutated positions. Errors on the fully
/// mutated code.
pub fn single_mutation_children(q: GenotypeCode) -> Result<&'static [(GenotypeCode, u8)]> {
    if q == GenotypeCode::FULL {
        return Err(Error::FullyMutated);
    }
    Ok(&children_table()[q.index()])
}

/// Multiplicity of the single-mutation transition `parent -> child`, zero if
/// unreachable. The fully mutated code has no children.
#[inline]
pub fn child_multiplicity(parent: GenotypeCode, child: GenotypeCode) -> u8 {
    if parent == GenotypeCode::FULL {
        return 0;
    }
    children_table()[parent.index()]
        .iter()
        .find(|(q, _)| *q == child)
        .map_or(0, |(_, n)| *n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(a: [u8; 2], b: [u8; 2]) -> GenotypeMatrix {
        GenotypeMatrix::new([a, b])
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(mat([0, 0], [0, 0]).canonicalize().code(), 1);
        assert_eq!(mat([1, 0], [0, 0]).canonicalize().code(), 3);
        assert_eq!(mat([1, 1], [0, 1]).canonicalize().code(), 8);
    }

    #[test]
    fn canonicalize_is_mirror_invariant_and_partitions() {
        let mut seen = [0usize; 10];
        for m in GenotypeMatrix::all_raw() {
            let q = m.canonicalize();
            assert_eq!(q, m.mirrored().canonicalize());
            seen[q.index()] += 1;
        }
        // 16 matrices collapse onto 10 codes: 4 symmetric codes correspond to
        // a single matrix, 6 asymmetric codes to a mirror pair.
        assert_eq!(seen.iter().sum::<usize>(), 16);
        assert!(seen.iter().all(|&n| n == 1 || n == 2));
        assert_eq!(seen.iter().filter(|&&n| n == 2).count(), 6);
    }

    #[test]
    fn representatives_are_canonical() {
        for q in GenotypeCode::all() {
            assert_eq!(q.representative().canonicalize(), q);
        }
    }

    #[test]
    fn num_mutations_examples() {
        assert_eq!(GenotypeCode::new(1).unwrap().num_mutations(), 0);
        assert_eq!(GenotypeCode::new(4).unwrap().num_mutations(), 2);
        assert_eq!(GenotypeCode::new(10).unwrap().num_mutations(), 4);
    }

    #[test]
    fn children_examples() {
        let c1 = single_mutation_children(GenotypeCode::new(1).unwrap()).unwrap();
        assert_eq!(c1, &[(GenotypeCode::new(2).unwrap(), 2), (GenotypeCode::new(3).unwrap(), 2)]);

        let c3 = single_mutation_children(GenotypeCode::new(3).unwrap()).unwrap();
        let expect: Vec<(u8, u8)> = vec![(4, 1), (6, 1), (7, 1)];
        assert_eq!(c3.iter().map(|(q, n)| (q.code(), *n)).collect::<Vec<_>>(), expect);

        let c9 = single_mutation_children(GenotypeCode::new(9).unwrap()).unwrap();
        assert_eq!(c9, &[(GenotypeCode::new(10).unwrap(), 1)]);

        assert!(single_mutation_children(GenotypeCode::FULL).is_err());
    }

    #[test]
    fn children_probabilities_sum_to_one_and_raise_mutation_count() {
        for q in GenotypeCode::all() {
            if q == GenotypeCode::FULL {
                continue;
            }
            let free = 4 - q.num_mutations();
            let children = single_mutation_children(q).unwrap();
            let total: u8 = children.iter().map(|(_, n)| n).sum();
            assert_eq!(total, free);
            for (child, _) in children {
                assert_eq!(child.num_mutations(), q.num_mutations() + 1);
            }
        }
    }

    #[test]
    fn children_independent_of_mirror_representative() {
        for m in GenotypeMatrix::all_raw() {
            let q = m.canonicalize();
            if q == GenotypeCode::FULL {
                continue;
            }
            // Recompute the child map from the raw (possibly non-canonical)
            // matrix and check it agrees with the table built from the
            // canonical representative.
            let mut counts: Vec<(GenotypeCode, u8)> = Vec::new();
            for j in 0..2 {
                for r in 0..2 {
                    if m.z[j][r] == 0 {
                        let mut child = m;
                        child.z[j][r] = 1;
                        let cq = child.canonicalize();
                        match counts.iter_mut().find(|(c, _)| *c == cq) {
                            Some((_, n)) => *n += 1,
                            None => counts.push((cq, 1)),
                        }
                    }
                }
            }
            counts.sort_by_key(|(c, _)| *c);
            assert_eq!(counts.as_slice(), single_mutation_children(q).unwrap());
        }
    }

    #[test]
    fn emission_examples() {
        let g = |v: u8| ReadType::new(v).unwrap();
        let q = |v: u8| GenotypeCode::new(v).unwrap();
        assert_eq!(emission_prob(g(1), q(1)), 1.0);
        assert_eq!(emission_prob(g(2), q(2)), 0.5);
        assert_eq!(emission_prob(g(5), q(4)), 0.5);
        assert_eq!(emission_prob(g(6), q(3)), 0.0);
    }

    #[test]
    fn emission_matches_raw_matrix_formula() {
        // Mirror symmetry: the table value at the canonical code equals the
        // direct two-allele formula on any raw matrix mapping to that code.
        for m in GenotypeMatrix::all_raw() {
            for g in ReadType::all() {
                assert_eq!(emission_prob(g, m.canonicalize()), emission_prob_matrix(g, m));
            }
        }
    }

    #[test]
    fn emission_class_sums_are_one() {
        for q in GenotypeCode::all() {
            let row = emission_row(q);
            let complete: f64 = row[0..4].iter().sum();
            let left: f64 = row[4..6].iter().sum();
            let right: f64 = row[6..8].iter().sum();
            assert_eq!(complete, 1.0);
            assert_eq!(left, 1.0);
            assert_eq!(right, 1.0);
        }
    }
}
