//! Probability model: the multinomial read likelihood, the tree-consistent
//! genotype prior, the Beta-Dirichlet weight prior, and the Dirichlet noise
//! prior.
//!
//! All densities are computed in log space. The likelihood is factored into
//! the three conditional multinomials (complete / left-missing /
//! right-missing reads) so the missingness probabilities drop out as
//! data-only constants; a real-valued power on the log likelihood implements
//! the fractional training/test split used by the trans-dimensional move.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::{
    child_multiplicity, emission_row, single_mutation_children, GenotypeCode,
};
use crate::numeric::{
    ln_binomial, ln_factorial, logsumexp, sample_beta, sample_categorical_from_log,
    sample_dirichlet, ln_dirichlet_pdf, LOG_TERM_FLOOR,
};
use crate::phylogeny::ParentVector;

/// Read counts for all samples and mutation pairs: per (t, k) the eight
/// category counts over read types 00, 01, 10, 11, -0, -1, 0-, 1-.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadCounts {
    pub samples: Vec<String>,
    pub pairs: Vec<String>,
    counts: Vec<[u64; 8]>,
}

impl ReadCounts {
    pub fn new(samples: Vec<String>, pairs: Vec<String>, counts: Vec<[u64; 8]>) -> Result<Self> {
        if counts.len() != samples.len() * pairs.len() {
            return Err(Error::Dimension(format!(
                "{} count rows for {} samples x {} pairs",
                counts.len(),
                samples.len(),
                pairs.len()
            )));
        }
        Ok(ReadCounts { samples, pairs, counts })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    #[inline]
    pub fn n(&self, t: usize, k: usize) -> &[u64; 8] {
        &self.counts[t * self.pairs.len() + k]
    }

    pub fn n_mut(&mut self, t: usize, k: usize) -> &mut [u64; 8] {
        let k_total = self.pairs.len();
        &mut self.counts[t * k_total + k]
    }

    /// Read depth N_tk, the total count over the eight categories.
    pub fn depth(&self, t: usize, k: usize) -> u64 {
        self.n(t, k).iter().sum()
    }

    pub fn total_depth(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Pooled counts per read category across all samples and pairs.
    pub fn pooled(&self) -> [u64; 8] {
        let mut m = [0u64; 8];
        for row in &self.counts {
            for (g, &v) in row.iter().enumerate() {
                m[g] += v;
            }
        }
        m
    }
}

/// A full parameter point (Z, w, rho) tied to a tree with C subclones.
///
/// `z` is K rows by C columns of genotype codes with column 1 (index 0)
/// fixed at the wild type; `w` is one row per sample with C+1 entries, index
/// 0 being the background-noise weight and index 1 the normal subclone; `rho`
/// holds the eight noise probabilities, block-normalized over the complete,
/// left-missing and right-missing categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub z: Vec<Vec<GenotypeCode>>,
    pub w: Vec<Vec<f64>>,
    pub rho: [f64; 8],
}

impl ModelState {
    pub fn n_subclones(&self) -> usize {
        self.w[0].len() - 1
    }

    pub fn n_pairs(&self) -> usize {
        self.z.len()
    }

    pub fn n_samples(&self) -> usize {
        self.w.len()
    }

    /// Check every structural invariant against `tree`; used by tests and
    /// debug assertions, not on the sampling hot path.
    pub fn validate(&self, tree: &ParentVector) -> Result<()> {
        let c = tree.len();
        for row in &self.z {
            if row.len() != c {
                return Err(Error::Dimension("Z row width != C".into()));
            }
            if row[0] != GenotypeCode::WILD_TYPE {
                return Err(Error::InvalidTree("normal subclone carries a mutation".into()));
            }
        }
        for w_row in &self.w {
            if w_row.len() != c + 1 {
                return Err(Error::Dimension("w row width != C+1".into()));
            }
            let sum: f64 = w_row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || w_row.iter().any(|&v| v <= 0.0) {
                return Err(Error::InvalidConfig("w row is not an interior simplex point".into()));
            }
        }
        let complete: f64 = self.rho[0..4].iter().sum();
        let left: f64 = self.rho[4..6].iter().sum();
        let right: f64 = self.rho[6..8].iter().sum();
        if (complete - 1.0).abs() > 1e-9 || (left - 1.0).abs() > 1e-9 || (right - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig("rho blocks are not normalized".into()));
        }
        if log_prior_z(&self.z, tree, 1.0) == f64::NEG_INFINITY {
            return Err(Error::InvalidTree("Z is not consistent with the tree".into()));
        }
        Ok(())
    }
}

/// Hyperparameters and MCMC controls.
///
/// `lambda`, `a_p` and `b_p` are optional: when unset they follow the rules
/// lambda = 2K/C (recomputed per tree), a_p = d and b_p = d0 + (C-1) d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparameters {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: Option<f64>,
    pub d: f64,
    pub d0: f64,
    pub d1: f64,
    pub a_p: Option<f64>,
    pub b_p: Option<f64>,
    pub c_min: usize,
    pub c_max: usize,
    pub b_train: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub temperatures: Vec<f64>,
    pub swap_period: usize,
    pub n_inner: usize,
    pub w_step: f64,
    pub rho_step: f64,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            alpha: 0.5,
            beta: 0.5,
            lambda: None,
            d: 0.5,
            d0: 0.03,
            d1: 1.0,
            a_p: None,
            b_p: None,
            c_min: 2,
            c_max: 5,
            b_train: 0.95,
            iterations: 8000,
            burn_in: 3000,
            temperatures: vec![1.0, 0.669_432_950_082_169_7, 0.448_140_474_655_716_46, 0.3],
            swap_period: 1,
            n_inner: 5,
            w_step: 300.0,
            rho_step: 300.0,
            seed: 1,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha={} not in (0,1)", self.alpha));
        }
        if self.beta < 0.0 {
            return bad(format!("beta={} negative", self.beta));
        }
        for (name, v) in [("d", self.d), ("d0", self.d0), ("d1", self.d1)] {
            if v <= 0.0 {
                return bad(format!("{name}={v} must be positive"));
            }
        }
        if let Some(l) = self.lambda {
            if l <= 0.0 {
                return bad(format!("lambda={l} must be positive"));
            }
        }
        for (name, v) in [("a_p", self.a_p), ("b_p", self.b_p)] {
            if let Some(v) = v {
                if v <= 0.0 {
                    return bad(format!("{name}={v} must be positive"));
                }
            }
        }
        if self.c_min < 2 || self.c_min > self.c_max {
            return bad(format!("bad subclone bounds [{}, {}]", self.c_min, self.c_max));
        }
        if !(self.b_train > 0.0 && self.b_train < 1.0) {
            return bad(format!("b_train={} not in (0,1)", self.b_train));
        }
        if self.temperatures.is_empty() || self.temperatures[0] != 1.0 {
            return bad("temperature ladder must start at 1.0".into());
        }
        for pair in self.temperatures.windows(2) {
            if pair[1] >= pair[0] || pair[1] <= 0.0 {
                return bad("temperatures must be strictly descending and positive".into());
            }
        }
        if self.swap_period == 0 || self.n_inner == 0 {
            return bad("swap_period and n_inner must be at least 1".into());
        }
        if self.w_step <= 0.0 || self.rho_step <= 0.0 {
            return bad("proposal steps must be positive".into());
        }
        Ok(())
    }

    /// Mean number of new mutations per generation: explicit value or 2K/C.
    pub fn lambda_for(&self, n_pairs: usize, c: usize) -> f64 {
        self.lambda.unwrap_or(2.0 * n_pairs as f64 / c as f64)
    }

    /// Beta prior shape for the normal-subclone weight.
    pub fn a_p_for(&self) -> f64 {
        self.a_p.unwrap_or(self.d)
    }

    /// Beta prior shape for everything but the normal subclone.
    pub fn b_p_for(&self, c: usize) -> f64 {
        self.b_p.unwrap_or(self.d0 + (c as f64 - 1.0) * self.d)
    }
}

/// Conditional probability of read type `g` (0-based index) for pair `k` in
/// sample `t`: the weighted emission across subclones plus background noise.
#[inline]
pub fn tilde_p(state: &ModelState, t: usize, k: usize, g: usize) -> f64 {
    tilde_p_row(state, t, k)[g]
}

/// All eight conditional read-type probabilities for pair `k` in sample `t`.
#[inline]
pub fn tilde_p_row(state: &ModelState, t: usize, k: usize) -> [f64; 8] {
    let w = &state.w[t];
    let mut p = [0.0f64; 8];
    for g in 0..8 {
        p[g] = w[0] * state.rho[g];
    }
    for (c, &q) in state.z[k].iter().enumerate() {
        let wc = w[c + 1];
        if wc == 0.0 {
            continue;
        }
        let row = emission_row(q);
        for g in 0..8 {
            p[g] += wc * row[g];
        }
    }
    p
}

/// Log likelihood of the counts at the given fractional power.
///
/// Returns power * sum n_tkg ln p_tkg over the three conditional
/// multinomials, dropping data-only constants. A zero-probability category
/// with a positive count yields -inf.
pub fn log_likelihood(counts: &ReadCounts, state: &ModelState, power: f64) -> f64 {
    let mut total = 0.0;
    for t in 0..counts.n_samples() {
        for k in 0..counts.n_pairs() {
            let n = counts.n(t, k);
            if n.iter().all(|&v| v == 0) {
                continue;
            }
            let p = tilde_p_row(state, t, k);
            for g in 0..8 {
                if n[g] > 0 {
                    if p[g] <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    total += n[g] as f64 * p[g].ln().max(LOG_TERM_FLOOR);
                }
            }
        }
    }
    power * total
}

/// Log likelihood restricted to pair `k` for an arbitrary candidate row of
/// genotype codes (power 1).
pub fn row_log_likelihood(counts: &ReadCounts, k: usize, w: &[Vec<f64>], rho: &[f64; 8], row: &[GenotypeCode]) -> f64 {
    let mut emissions = [[0.0f64; 8]; 16];
    debug_assert!(row.len() <= 16);
    for (c, &q) in row.iter().enumerate() {
        emissions[c] = emission_row(q);
    }
    let mut total = 0.0;
    for (t, w_row) in w.iter().enumerate() {
        let n = counts.n(t, k);
        if n.iter().all(|&v| v == 0) {
            continue;
        }
        for g in 0..8 {
            if n[g] == 0 {
                continue;
            }
            let mut p = w_row[0] * rho[g];
            for c in 0..row.len() {
                p += w_row[c + 1] * emissions[c][g];
            }
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            total += n[g] as f64 * p.ln().max(LOG_TERM_FLOOR);
        }
    }
    total
}

/// All genotype-code rows consistent with the tree: the normal subclone is
/// wild type and every other subclone either copies its parent or gains one
/// mutation. Deterministic order (ascending code per subclone, depth-first).
pub fn enumerate_valid_rows(tree: &ParentVector) -> Vec<Vec<GenotypeCode>> {
    let c_total = tree.len();
    let mut rows = Vec::new();
    let mut row = vec![GenotypeCode::WILD_TYPE; c_total];
    fn rec(tree: &ParentVector, row: &mut Vec<GenotypeCode>, c: usize, rows: &mut Vec<Vec<GenotypeCode>>) {
        if c > tree.len() {
            rows.push(row.clone());
            return;
        }
        let parent_code = row[tree.parent(c) - 1];
        row[c - 1] = parent_code;
        rec(tree, row, c + 1, rows);
        if parent_code != GenotypeCode::FULL {
            for &(child, _) in single_mutation_children(parent_code).unwrap() {
                row[c - 1] = child;
                rec(tree, row, c + 1, rows);
            }
        }
    }
    rec(tree, &mut row, 2, &mut rows);
    rows
}

/// Log of the truncated Poisson mass P(X = m | 1 <= X <= upper) with mean
/// `lambda`; the e^-lambda factor cancels between numerator and normalizer.
pub(crate) fn ln_trunc_pois(m: usize, lambda: f64, upper: usize) -> f64 {
    if m < 1 || m > upper {
        return f64::NEG_INFINITY;
    }
    let ln_lambda = lambda.ln();
    let terms: Vec<f64> = (1..=upper)
        .map(|i| i as f64 * ln_lambda - ln_factorial(i))
        .collect();
    m as f64 * ln_lambda - ln_factorial(m) - logsumexp(&terms)
}

/// Log prior density of a tree-consistent genotype matrix.
///
/// Per subclone: a truncated-Poisson mass on the number of new mutations, a
/// uniform choice of which pairs gain them, and per gained pair a uniform
/// position choice aggregated through canonicalization (the probability of a
/// child code is multiplicity / #unmutated positions). Returns -inf for any
/// tree-inconsistent matrix.
pub fn log_prior_z(z: &[Vec<GenotypeCode>], tree: &ParentVector, lambda: f64) -> f64 {
    let c_total = tree.len();
    let n_pairs = z.len();
    for row in z {
        if row.len() != c_total || row[0] != GenotypeCode::WILD_TYPE {
            return f64::NEG_INFINITY;
        }
    }
    let mut total = 0.0;
    for c in 2..=c_total {
        let parent = tree.parent(c);
        let mut avail = 0usize;
        let mut gained = 0usize;
        let mut pos_terms = 0.0;
        for k in 0..n_pairs {
            let qp = z[k][parent - 1];
            let qc = z[k][c - 1];
            let lp = qp.num_mutations();
            if lp < 4 {
                avail += 1;
            }
            if qc == qp {
                continue;
            }
            if qc.num_mutations() != lp + 1 {
                return f64::NEG_INFINITY;
            }
            let mult = child_multiplicity(qp, qc);
            if mult == 0 {
                return f64::NEG_INFINITY;
            }
            gained += 1;
            pos_terms += (mult as f64).ln() - ((4 - lp) as f64).ln();
        }
        if gained == 0 || gained > avail {
            return f64::NEG_INFINITY;
        }
        total += ln_trunc_pois(gained, lambda, avail) - ln_binomial(avail, gained) + pos_terms;
    }
    total
}

/// Log density of one weight row under the Beta-Dirichlet prior: the normal
/// weight w_1 is Beta(a_p, b_p) and the remaining weights, rescaled by
/// 1/(1 - w_1), are Dirichlet(d0, d, ..., d); the change of variables
/// contributes -(C-1) ln(1 - w_1).
pub fn log_prior_w_row(w_row: &[f64], a_p: f64, b_p: f64, d: f64, d0: f64) -> f64 {
    let c = w_row.len() - 1;
    debug_assert!(c >= 1);
    if w_row.iter().any(|&v| v <= 0.0 || v >= 1.0) {
        return f64::NEG_INFINITY;
    }
    let w1 = w_row[1];
    let ln_beta_norm = crate::numeric::ln_gamma(a_p) + crate::numeric::ln_gamma(b_p)
        - crate::numeric::ln_gamma(a_p + b_p);
    let mut lp = (a_p - 1.0) * w1.ln() + (b_p - 1.0) * (1.0 - w1).ln() - ln_beta_norm;
    if c == 1 {
        return lp;
    }
    // Dirichlet density of (w0, w2, .., wC)/(1 - w1) with concentrations
    // (d0, d, .., d), written in terms of ln w_i - ln(1 - w1) so that tiny
    // components cannot round a sibling onto the simplex boundary.
    let ln_scale = (1.0 - w1).ln();
    let total = d0 + (c as f64 - 1.0) * d;
    lp += crate::numeric::ln_gamma(total)
        - crate::numeric::ln_gamma(d0)
        - (c as f64 - 1.0) * crate::numeric::ln_gamma(d);
    lp += (d0 - 1.0) * (w_row[0].ln() - ln_scale);
    for &v in &w_row[2..] {
        lp += (d - 1.0) * (v.ln() - ln_scale);
    }
    lp -= (c as f64 - 1.0) * ln_scale;
    lp
}

/// Log density of the noise vector: independent Dirichlet priors on the
/// complete, left-missing and right-missing blocks.
pub fn log_prior_rho(rho: &[f64; 8], d1: f64) -> f64 {
    ln_dirichlet_pdf(&rho[0..4], &[d1; 4])
        + ln_dirichlet_pdf(&rho[4..6], &[2.0 * d1; 2])
        + ln_dirichlet_pdf(&rho[6..8], &[2.0 * d1; 2])
}

/// Log prior of a full parameter point given its tree (weights, noise and
/// genotype matrix; the tree's own prior is not included).
pub fn log_prior_state(state: &ModelState, tree: &ParentVector, hyper: &Hyperparameters) -> f64 {
    let c = tree.len();
    let lambda = hyper.lambda_for(state.n_pairs(), c);
    let a_p = hyper.a_p_for();
    let b_p = hyper.b_p_for(c);
    let mut lp = log_prior_z(&state.z, tree, lambda) + log_prior_rho(&state.rho, hyper.d1);
    for w_row in &state.w {
        lp += log_prior_w_row(w_row, a_p, b_p, hyper.d, hyper.d0);
    }
    lp
}

/// Draw a tree-consistent genotype matrix from the prior.
pub fn sample_z_prior<R: Rng + ?Sized>(
    tree: &ParentVector,
    n_pairs: usize,
    lambda: f64,
    rng: &mut R,
) -> Result<Vec<Vec<GenotypeCode>>> {
    let c_total = tree.len();
    let mut z = vec![vec![GenotypeCode::WILD_TYPE; c_total]; n_pairs];
    for c in 2..=c_total {
        let parent = tree.parent(c);
        let available: Vec<usize> = (0..n_pairs)
            .filter(|&k| z[k][parent - 1].num_mutations() < 4)
            .collect();
        if available.is_empty() {
            return Err(Error::NoValidGenotype);
        }
        // Truncated Poisson draw over 1..=|available|.
        let ln_lambda = lambda.ln();
        let masses: Vec<f64> = (1..=available.len())
            .map(|i| i as f64 * ln_lambda - ln_factorial(i))
            .collect();
        let gained = 1 + sample_categorical_from_log(&masses, rng);
        for k in 0..n_pairs {
            z[k][c - 1] = z[k][parent - 1];
        }
        let chosen = rand::seq::index::sample(rng, available.len(), gained);
        for idx in chosen.iter() {
            let k = available[idx];
            let qp = z[k][parent - 1];
            let children = single_mutation_children(qp).expect("parent not fully mutated");
            let masses: Vec<f64> = children.iter().map(|&(_, m)| (m as f64).ln()).collect();
            let pick = sample_categorical_from_log(&masses, rng);
            z[k][c - 1] = children[pick].0;
        }
    }
    Ok(z)
}

/// Draw one weight row from the Beta-Dirichlet prior.
pub fn sample_w_row_prior<R: Rng + ?Sized>(
    c: usize,
    a_p: f64,
    b_p: f64,
    d: f64,
    d0: f64,
    rng: &mut R,
) -> Vec<f64> {
    let w1 = sample_beta(a_p, b_p, rng);
    if c == 1 {
        return vec![1.0 - w1, w1];
    }
    let mut conc = vec![d; c];
    conc[0] = d0;
    let u = sample_dirichlet(&conc, rng);
    let scale = 1.0 - w1;
    let mut w = Vec::with_capacity(c + 1);
    w.push(u[0] * scale);
    w.push(w1);
    for &v in &u[1..] {
        w.push(v * scale);
    }
    w
}

/// Draw the noise vector from its block Dirichlet prior.
pub fn sample_rho_prior<R: Rng + ?Sized>(d1: f64, rng: &mut R) -> [f64; 8] {
    let complete = sample_dirichlet(&[d1; 4], rng);
    let left = sample_dirichlet(&[2.0 * d1; 2], rng);
    let right = sample_dirichlet(&[2.0 * d1; 2], rng);
    [
        complete[0], complete[1], complete[2], complete[3],
        left[0], left[1],
        right[0], right[1],
    ]
}

/// Draw a full parameter point from the prior for the given tree.
pub fn sample_state_prior<R: Rng + ?Sized>(
    tree: &ParentVector,
    n_pairs: usize,
    n_samples: usize,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<ModelState> {
    let c = tree.len();
    let lambda = hyper.lambda_for(n_pairs, c);
    let z = sample_z_prior(tree, n_pairs, lambda, rng)?;
    let a_p = hyper.a_p_for();
    let b_p = hyper.b_p_for(c);
    let w = (0..n_samples)
        .map(|_| sample_w_row_prior(c, a_p, b_p, hyper.d, hyper.d0, rng))
        .collect();
    let rho = sample_rho_prior(hyper.d1, rng);
    Ok(ModelState { z, w, rho })
}
