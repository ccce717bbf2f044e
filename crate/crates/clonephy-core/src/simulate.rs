//! Synthetic data generation: ground truth drawn from the prior model (or
//! fixed externally), negative-binomial read depths, multinomial read
//! counts, and the marginal-SNV degradation of pair data.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    sample_rho_prior, sample_z_prior, tilde_p_row, ModelState, ReadCounts,
};
use crate::numeric::{sample_categorical_from_log, sample_dirichlet};
use crate::phylogeny::{enumerate_trees, log_prior_tree, ParentVector};

/// What to simulate: problem size, depth distribution, weight concentration
/// pattern, missingness, and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    pub c: usize,
    pub n_pairs: usize,
    pub n_samples: usize,
    /// Mean read depth; the standard deviation defaults to mean / 5.
    pub depth_mean: f64,
    pub depth_sd: Option<f64>,
    /// Left- and right-missing read fractions, constant over samples/pairs.
    pub v2: f64,
    pub v3: f64,
    /// Base Dirichlet concentrations for the non-background weights; a fresh
    /// random permutation is applied per sample. Defaults per subclone count.
    pub w_base: Option<Vec<f64>>,
    /// Background-noise concentration.
    pub w0_concentration: f64,
    /// Depth-penalty strength of the tree prior the truth is drawn from.
    pub beta: f64,
    /// Mean new mutations per generation; defaults to 2K/C.
    pub lambda: Option<f64>,
    /// Noise prior concentration.
    pub d1: f64,
    pub seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            c: 3,
            n_pairs: 50,
            n_samples: 5,
            depth_mean: 200.0,
            depth_sd: None,
            v2: 0.3,
            v3: 0.3,
            w_base: None,
            w0_concentration: 0.01,
            beta: 0.5,
            lambda: None,
            d1: 1.0,
            seed: 1,
        }
    }
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.c < 2 {
            return bad(format!("c={} must be at least 2", self.c));
        }
        if self.n_pairs == 0 || self.n_samples == 0 {
            return bad("need at least one pair and one sample".into());
        }
        if self.depth_mean <= 0.0 {
            return bad(format!("depth_mean={} must be positive", self.depth_mean));
        }
        let sd = self.depth_sd();
        if sd > 0.0 && sd * sd <= self.depth_mean {
            return bad(format!(
                "depth_sd={} is under-dispersed for mean {}; the negative binomial needs sd^2 > mean",
                sd, self.depth_mean
            ));
        }
        if self.v2 < 0.0 || self.v3 < 0.0 || self.v2 + self.v3 > 1.0 {
            return bad(format!("missing rates v2={} v3={} must be nonnegative with v2+v3 <= 1", self.v2, self.v3));
        }
        if let Some(base) = &self.w_base {
            if base.len() != self.c {
                return bad(format!(
                    "w_base has {} entries for {} subclones",
                    base.len(),
                    self.c
                ));
            }
            if base.iter().any(|&b| b <= 0.0) {
                return bad("w_base entries must be positive".into());
            }
        } else if self.default_w_base().is_none() {
            return bad(format!("no default weight pattern for c={}; pass w_base", self.c));
        }
        if self.w0_concentration <= 0.0 || self.d1 <= 0.0 {
            return bad("concentrations must be positive".into());
        }
        Ok(())
    }

    pub fn depth_sd(&self) -> f64 {
        self.depth_sd.unwrap_or(self.depth_mean / 5.0)
    }

    fn default_w_base(&self) -> Option<Vec<f64>> {
        let base: &[f64] = match self.c {
            2 => &[15.0, 10.0],
            3 => &[15.0, 10.0, 5.0],
            4 => &[15.0, 10.0, 8.0, 5.0],
            5 => &[15.0, 10.0, 8.0, 5.0, 3.0],
            _ => return None,
        };
        Some(base.to_vec())
    }

    pub fn w_base(&self) -> Vec<f64> {
        self.w_base.clone().or_else(|| self.default_w_base()).expect("validated spec")
    }

    fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(2.0 * self.n_pairs as f64 / self.c as f64)
    }
}

/// Simulation ground truth: the tree and the full parameter point, plus the
/// missingness rates used to generate counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub tree: ParentVector,
    pub state: ModelState,
    pub v2: f64,
    pub v3: f64,
    pub spec: SimulationSpec,
}

impl GroundTruth {
    /// Conditional read-type probabilities per (t, k, g).
    pub fn tilde_p_table(&self) -> Vec<Vec<[f64; 8]>> {
        (0..self.state.n_samples())
            .map(|t| {
                (0..self.state.n_pairs())
                    .map(|k| tilde_p_row(&self.state, t, k))
                    .collect()
            })
            .collect()
    }
}

/// Draw the ground truth from the prior model: tree from the depth-penalty
/// prior, genotype matrix from the tree prior, weight rows from a Dirichlet
/// with freshly permuted base concentrations per sample, noise from its
/// block prior.
pub fn gen_truth(spec: &SimulationSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);

    let trees = enumerate_trees(spec.c);
    let masses: Vec<f64> = trees.iter().map(|t| log_prior_tree(t, spec.beta)).collect();
    let tree = trees[sample_categorical_from_log(&masses, &mut rng)].clone();

    let z = sample_z_prior(&tree, spec.n_pairs, spec.lambda(), &mut rng)?;

    let base = spec.w_base();
    let mut w = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let mut permuted = base.clone();
        // Fisher-Yates over the non-background concentrations.
        for i in (1..permuted.len()).rev() {
            let j = rng.random_range(0..=i);
            permuted.swap(i, j);
        }
        let mut conc = Vec::with_capacity(spec.c + 1);
        conc.push(spec.w0_concentration);
        conc.extend(permuted);
        w.push(sample_dirichlet(&conc, &mut rng));
    }

    let rho = sample_rho_prior(spec.d1, &mut rng);
    let state = ModelState { z, w, rho };
    debug_assert!(state.validate(&tree).is_ok());
    Ok(GroundTruth {
        tree,
        state,
        v2: spec.v2,
        v3: spec.v3,
        spec: spec.clone(),
    })
}

/// Negative-binomial depth with the given mean and standard deviation,
/// sampled as a Poisson-Gamma mixture.
fn sample_depth<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> u64 {
    let var = sd * sd;
    if var <= mean {
        // Degenerate request (sd == 0 is used by tests): fall back to Poisson.
        let p: f64 = Poisson::new(mean).expect("positive mean").sample(rng);
        return p as u64;
    }
    let shape = mean * mean / (var - mean);
    let scale = (var - mean) / mean;
    let lambda: f64 = Gamma::new(shape, scale).expect("valid gamma").sample(rng);
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive rate").sample(rng) as u64
}

fn sample_multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64; 8], rng: &mut R) -> [u64; 8] {
    let mut out = [0u64; 8];
    let mut remaining = n;
    let mut mass_left: f64 = probs.iter().sum();
    for g in 0..8 {
        if remaining == 0 {
            break;
        }
        if g == 7 {
            out[7] = remaining;
            break;
        }
        let p = if mass_left > 0.0 { (probs[g] / mass_left).clamp(0.0, 1.0) } else { 0.0 };
        let draw = if p >= 1.0 {
            remaining
        } else if p <= 0.0 {
            0
        } else {
            Binomial::new(remaining, p).expect("valid binomial").sample(rng)
        };
        out[g] = draw;
        remaining -= draw;
        mass_left -= probs[g];
    }
    out
}

/// Generate read counts for the ground truth: negative-binomial depths and
/// multinomial category counts with the missingness split (1-v2-v3, v2, v3).
/// Each (t, k) cell uses its own derived random substream.
pub fn gen_counts(truth: &GroundTruth, spec: &SimulationSpec) -> Result<ReadCounts> {
    spec.validate()?;
    let n_samples = truth.state.n_samples();
    let n_pairs = truth.state.n_pairs();
    let v1 = 1.0 - spec.v2 - spec.v3;
    let mut rows = Vec::with_capacity(n_samples * n_pairs);
    for t in 0..n_samples {
        for k in 0..n_pairs {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(1 + (t * n_pairs + k) as u64);
            let depth = sample_depth(spec.depth_mean, spec.depth_sd(), &mut rng);
            let p_tilde = tilde_p_row(&truth.state, t, k);
            let mut probs = [0.0f64; 8];
            for g in 0..8 {
                let v = if g < 4 { v1 } else if g < 6 { spec.v2 } else { spec.v3 };
                probs[g] = v * p_tilde[g];
            }
            rows.push(sample_multinomial(depth, &probs, &mut rng));
        }
    }
    ReadCounts::new(
        (1..=n_samples).map(|t| format!("s{t}")).collect(),
        (1..=n_pairs).map(|k| format!("p{k}")).collect(),
        rows,
    )
}

/// Generate read counts for a fixed truth with observed per-(t, k) depth
/// and missingness tables, as when replicating a real dataset's design.
pub fn gen_counts_with_tables(
    truth: &GroundTruth,
    depths: &[Vec<u64>],
    v2: &[Vec<f64>],
    v3: &[Vec<f64>],
    seed: u64,
) -> Result<ReadCounts> {
    let n_samples = truth.state.n_samples();
    let n_pairs = truth.state.n_pairs();
    for (name, table) in [("depths", depths.len()), ("v2", v2.len()), ("v3", v3.len())] {
        if table != n_samples {
            return Err(Error::Dimension(format!("{name} table has {table} rows for {n_samples} samples")));
        }
    }
    let mut rows = Vec::with_capacity(n_samples * n_pairs);
    for t in 0..n_samples {
        if depths[t].len() != n_pairs || v2[t].len() != n_pairs || v3[t].len() != n_pairs {
            return Err(Error::Dimension(format!("tables for sample {t} do not have {n_pairs} pairs")));
        }
        for k in 0..n_pairs {
            if v2[t][k] < 0.0 || v3[t][k] < 0.0 || v2[t][k] + v3[t][k] > 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "missing rates at ({t}, {k}) are invalid: {} + {}",
                    v2[t][k], v3[t][k]
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 + (t * n_pairs + k) as u64);
            let p_tilde = tilde_p_row(&truth.state, t, k);
            let v1 = 1.0 - v2[t][k] - v3[t][k];
            let mut probs = [0.0f64; 8];
            for g in 0..8 {
                let v = if g < 4 { v1 } else if g < 6 { v2[t][k] } else { v3[t][k] };
                probs[g] = v * p_tilde[g];
            }
            rows.push(sample_multinomial(depths[t][k], &probs, &mut rng));
        }
    }
    ReadCounts::new(
        (1..=n_samples).map(|t| format!("s{t}")).collect(),
        (1..=n_pairs).map(|k| format!("p{k}")).collect(),
        rows,
    )
}

/// Collapse mutation-pair reads to marginal-SNV reads.
///
/// Every read with an observed first locus is re-bucketed into the
/// right-missing block by its first-locus value; left-missing reads keep
/// only second-locus information and pass through unchanged, so totals are
/// preserved. With `mirror_second_locus` set, complete reads are *also*
/// re-bucketed into the left-missing block by their second-locus value
/// (each complete read then counts once per locus, as two marginal reads).
pub fn marginalize_to_snv(counts: &ReadCounts, mirror_second_locus: bool) -> ReadCounts {
    let mut rows = Vec::with_capacity(counts.n_samples() * counts.n_pairs());
    for t in 0..counts.n_samples() {
        for k in 0..counts.n_pairs() {
            let n = counts.n(t, k);
            let mut out = [0u64; 8];
            // First locus 0: complete 00, 01 and right-missing 0-.
            out[6] = n[0] + n[1] + n[6];
            // First locus 1: complete 10, 11 and right-missing 1-.
            out[7] = n[2] + n[3] + n[7];
            if mirror_second_locus {
                out[4] = n[0] + n[2] + n[4];
                out[5] = n[1] + n[3] + n[5];
            } else {
                out[4] = n[4];
                out[5] = n[5];
            }
            rows.push(out);
        }
    }
    ReadCounts::new(counts.samples.clone(), counts.pairs.clone(), rows).expect("same shape")
}
