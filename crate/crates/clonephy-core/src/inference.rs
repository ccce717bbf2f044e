//! Post-processing of sampler output: point estimates, tree posterior
//! tables, credible intervals, reconstruction error metrics, convergence
//! diagnostics, and the Bayesian chi-squared goodness-of-fit statistic.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::genotype::GenotypeCode;
use crate::model::{tilde_p_row, Hyperparameters, ModelState, ReadCounts};
use crate::phylogeny::ParentVector;
use crate::sampler::{ChainOutput, Draw};

/// Posterior frequency of one (tree, C) value among recorded draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreePosterior {
    pub c: usize,
    pub tree_index: usize,
    pub tree: ParentVector,
    pub count: u64,
    pub probability: f64,
}

/// Point estimates and posterior summaries from one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub samples: Vec<String>,
    pub pairs: Vec<String>,
    pub n_draws: usize,
    pub config: Hyperparameters,
    /// Visited (tree, C) values with draw frequencies, most frequent first.
    pub tree_posterior: Vec<TreePosterior>,
    pub modal_c: usize,
    pub modal_tree_index: usize,
    pub modal_tree: ParentVector,
    /// Whether the modal (tree, C) was tied and broken toward smaller C then
    /// lower tree index.
    pub modal_tie: bool,
    pub map_iteration: usize,
    pub map_state: ModelState,
    /// Representative 2x2 matrices (allele-major) for the MAP genotype codes.
    pub map_z_matrices: Vec<Vec<[[u8; 2]; 2]>>,
    /// Equal-tailed 95% credible intervals for the conditional read-type
    /// probabilities, indexed `[t][k][g]` as (lower, upper); computed from
    /// the draws matching the modal (tree, C).
    pub cred_lower: Vec<Vec<[f64; 8]>>,
    pub cred_upper: Vec<Vec<[f64; 8]>>,
    /// Goodness-of-fit summary, attached when counts are available.
    pub gof: Option<GofReport>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Summarize a chain: modal (tree, C) by draw frequency, MAP parameter point
/// conditional on the mode, and per-(t, k, g) credible intervals.
pub fn summarize(output: &ChainOutput) -> Result<FitReport> {
    if output.draws.is_empty() {
        return Err(Error::EmptyChain);
    }
    let n_draws = output.draws.len();
    let mut counts: std::collections::BTreeMap<(usize, usize), u64> = std::collections::BTreeMap::new();
    for draw in &output.draws {
        *counts.entry((draw.c, draw.tree_index)).or_insert(0) += 1;
    }
    // Most frequent first; ties break toward smaller C then lower tree index
    // via the BTreeMap ordering.
    let mut table: Vec<((usize, usize), u64)> = counts.into_iter().collect();
    table.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let modal_tie = table.len() > 1 && table[0].1 == table[1].1;
    let (modal_c, modal_tree_index) = table[0].0;

    let tree_for = |index: usize| -> &ParentVector {
        &output
            .draws
            .iter()
            .find(|d| d.tree_index == index)
            .expect("visited tree")
            .tree
    };
    let tree_posterior: Vec<TreePosterior> = table
        .iter()
        .map(|&((c, tree_index), count)| TreePosterior {
            c,
            tree_index,
            tree: tree_for(tree_index).clone(),
            count,
            probability: count as f64 / n_draws as f64,
        })
        .collect();

    let matching: Vec<&Draw> = output
        .draws
        .iter()
        .filter(|d| d.c == modal_c && d.tree_index == modal_tree_index)
        .collect();
    let map_draw = matching
        .iter()
        .max_by(|a, b| {
            let pa = a.log_likelihood + a.log_prior_state;
            let pb = b.log_likelihood + b.log_prior_state;
            pa.partial_cmp(&pb).expect("finite log posterior").then(b.iteration.cmp(&a.iteration))
        })
        .expect("non-empty matching draws");

    let n_samples = output.n_samples;
    let n_pairs = output.n_pairs;
    let mut cred_lower = vec![vec![[0.0; 8]; n_pairs]; n_samples];
    let mut cred_upper = vec![vec![[0.0; 8]; n_pairs]; n_samples];
    let mut values = Vec::with_capacity(matching.len());
    for t in 0..n_samples {
        for k in 0..n_pairs {
            let rows: Vec<[f64; 8]> = matching.iter().map(|d| tilde_p_row(&d.state, t, k)).collect();
            for g in 0..8 {
                values.clear();
                values.extend(rows.iter().map(|r| r[g]));
                values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                cred_lower[t][k][g] = quantile(&values, 0.025);
                cred_upper[t][k][g] = quantile(&values, 0.975);
            }
        }
    }

    let map_z_matrices = map_draw
        .state
        .z
        .iter()
        .map(|row| row.iter().map(|q| q.representative().z).collect())
        .collect();

    Ok(FitReport {
        samples: output.samples.clone(),
        pairs: output.pairs.clone(),
        n_draws,
        config: output.hyper.clone(),
        tree_posterior,
        modal_c,
        modal_tree_index,
        modal_tree: tree_for(modal_tree_index).clone(),
        modal_tie,
        map_iteration: map_draw.iteration,
        map_state: map_draw.state.clone(),
        map_z_matrices,
        cred_lower,
        cred_upper,
        gof: None,
    })
}

/// Reconstruction error rates of an estimate against the simulation truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub c_err: u8,
    pub t_err: u8,
    pub z_err: f64,
    pub w_err: f64,
    pub z_err_snv: f64,
    /// Set when estimated and true C differ; errors are then computed over
    /// the best injective matching of the smaller set of subclones into the
    /// larger, charging unmatched true subclones in full.
    pub size_mismatched: bool,
}

/// Multiset of locus-1 mutation indicators across the two alleles; the
/// marginal-SNV view of a genotype.
fn locus1_profile(q: GenotypeCode) -> (u8, u8) {
    let rep = q.representative().z;
    (rep[0][0], rep[1][0])
}

/// Error rates between the truth and the MAP estimate, minimizing over
/// permutations of the non-normal subclones; the same permutation is applied
/// to the weights, the SNV variant re-minimizes independently.
pub fn reconstruction_errors(
    truth_tree: &ParentVector,
    truth_state: &ModelState,
    report: &FitReport,
) -> Result<ErrorMetrics> {
    let est_state = &report.map_state;
    let n_pairs = truth_state.n_pairs();
    let n_samples = truth_state.n_samples();
    if est_state.n_pairs() != n_pairs {
        return Err(Error::Dimension(format!(
            "truth has {n_pairs} pairs, estimate has {}",
            est_state.n_pairs()
        )));
    }
    if est_state.n_samples() != n_samples {
        return Err(Error::Dimension(format!(
            "truth has {n_samples} samples, estimate has {}",
            est_state.n_samples()
        )));
    }
    let c_true = truth_tree.len();
    let c_est = report.modal_c;
    let c_err = u8::from(c_est != c_true);
    let t_err = u8::from(&report.modal_tree != truth_tree);
    let size_mismatched = c_est != c_true;

    // Assign each true non-normal subclone an estimate column (or None when
    // the estimate is smaller); minimize genotype mismatches, charging
    // unmatched true columns in full.
    let true_cols: Vec<usize> = (1..c_true).collect();
    let est_cols: Vec<usize> = (1..c_est).collect();
    let mismatch_count = |assignment: &[Option<usize>]| -> u64 {
        let mut total = 0;
        for (i, &tc) in true_cols.iter().enumerate() {
            match assignment[i] {
                Some(ec) => {
                    for k in 0..n_pairs {
                        total += u64::from(est_state.z[k][ec] != truth_state.z[k][tc]);
                    }
                }
                None => total += n_pairs as u64,
            }
        }
        total
    };
    let snv_mismatch_count = |assignment: &[Option<usize>]| -> u64 {
        let mut total = 0;
        for (i, &tc) in true_cols.iter().enumerate() {
            match assignment[i] {
                Some(ec) => {
                    for k in 0..n_pairs {
                        total += u64::from(
                            locus1_profile(est_state.z[k][ec]) != locus1_profile(truth_state.z[k][tc]),
                        );
                    }
                }
                None => total += n_pairs as u64,
            }
        }
        total
    };

    // Enumerate injective assignments: permutations of the larger side taken
    // in the arity of the smaller.
    let assignments: Vec<Vec<Option<usize>>> = if est_cols.len() >= true_cols.len() {
        est_cols
            .iter()
            .cloned()
            .permutations(true_cols.len())
            .map(|perm| perm.into_iter().map(Some).collect())
            .collect()
    } else {
        // Choose which true columns receive the estimate columns.
        let mut out = Vec::new();
        for slots in (0..true_cols.len()).permutations(est_cols.len()) {
            let mut assignment = vec![None; true_cols.len()];
            for (ec, slot) in est_cols.iter().zip(slots) {
                assignment[slot] = Some(*ec);
            }
            out.push(assignment);
        }
        out
    };

    let best = assignments
        .iter()
        .min_by_key(|a| mismatch_count(a))
        .expect("at least one assignment");
    let denom = (n_pairs * (c_true - 1)) as f64;
    let z_err = mismatch_count(best) as f64 / denom;
    let z_err_snv = assignments
        .iter()
        .map(|a| snv_mismatch_count(a))
        .min()
        .expect("at least one assignment") as f64
        / denom;

    // Weight error under the genotype-minimizing assignment: the normal
    // subclone is fixed, unmatched true subclones are charged their full
    // weight, and the denominator follows the true subclone count.
    let mut w_err = 0.0;
    for t in 0..n_samples {
        w_err += (est_state.w[t][1] - truth_state.w[t][1]).abs();
        for (i, &tc) in true_cols.iter().enumerate() {
            let est_w = best[i].map_or(0.0, |ec| est_state.w[t][ec + 1]);
            w_err += (est_w - truth_state.w[t][tc + 1]).abs();
        }
    }
    w_err /= (n_samples * c_true) as f64;

    Ok(ErrorMetrics {
        c_err,
        t_err,
        z_err,
        w_err,
        z_err_snv,
        size_mismatched,
    })
}

/// Potential scale reduction factor over scalar traces from independent
/// chains; values near 1 indicate convergence.
pub fn psrf(traces: &[Vec<f64>]) -> Result<f64> {
    if traces.len() < 2 {
        return Err(Error::Dimension(format!(
            "PSRF needs at least 2 chains, got {}",
            traces.len()
        )));
    }
    let n = traces.iter().map(|t| t.len()).min().unwrap_or(0);
    if n < 2 {
        return Err(Error::Dimension("PSRF needs chains of length >= 2".into()));
    }
    let m = traces.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = traces.iter().map(|t| t[..n].iter().sum::<f64>() / nf).collect();
    let vars: Vec<f64> = traces
        .iter()
        .zip(&means)
        .map(|(t, &mu)| t[..n].iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (nf - 1.0))
        .collect();
    let grand = means.iter().sum::<f64>() / m;
    let var_between = nf * means.iter().map(|&mu| (mu - grand) * (mu - grand)).sum::<f64>() / (m - 1.0);
    let var_within = vars.iter().sum::<f64>() / m;
    // Indistinguishable chains count as converged outright.
    if var_between == 0.0 {
        return Ok(1.0);
    }
    if var_within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(((var_between / var_within + nf - 1.0) / nf).sqrt())
}

/// Fraction of (t, k, g) cells whose true conditional probability lies
/// inside the reported credible interval.
pub fn coverage_check(truth_p: &[Vec<[f64; 8]>], report: &FitReport) -> Result<f64> {
    if truth_p.len() != report.cred_lower.len()
        || truth_p.first().map(|r| r.len()) != report.cred_lower.first().map(|r| r.len())
    {
        return Err(Error::Dimension("coverage table does not match report".into()));
    }
    let mut inside = 0usize;
    let mut total = 0usize;
    for (t, row) in truth_p.iter().enumerate() {
        for (k, cell) in row.iter().enumerate() {
            for g in 0..8 {
                total += 1;
                if cell[g] >= report.cred_lower[t][k][g] && cell[g] <= report.cred_upper[t][k][g] {
                    inside += 1;
                }
            }
        }
    }
    Ok(inside as f64 / total as f64)
}

/// Bayesian chi-squared goodness-of-fit summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    /// One statistic per posterior draw.
    pub rb: Vec<f64>,
    /// Fraction of draws exceeding the chi-squared(7) 95% quantile.
    pub exceedance: f64,
    pub chi2_95: f64,
    /// Category/draw combinations skipped for zero expected proportion.
    pub skipped_categories: u64,
    /// Paired (theoretical chi-squared(7) quantile, sorted statistic) for
    /// quantile-quantile plotting.
    pub qq: Vec<(f64, f64)>,
}

/// Per-draw chi-squared statistic over the eight pooled read categories.
///
/// Expected proportions combine the draw's conditional probabilities with
/// missingness fractions estimated empirically from the data, since the fit
/// itself never infers them.
pub fn gof_rb(counts: &ReadCounts, draws: &[Draw]) -> Result<GofReport> {
    if draws.is_empty() {
        return Err(Error::EmptyChain);
    }
    let pooled = counts.pooled();
    let total: u64 = pooled.iter().sum();
    if total == 0 {
        return Err(Error::Dimension("goodness of fit needs nonzero read counts".into()));
    }
    let n_samples = counts.n_samples();
    let n_pairs = counts.n_pairs();
    let nf = total as f64;

    // Empirical missingness fractions per cell.
    let mut v_hat = vec![[0.0f64; 3]; n_samples * n_pairs];
    for t in 0..n_samples {
        for k in 0..n_pairs {
            let n = counts.n(t, k);
            let depth: u64 = n.iter().sum();
            if depth == 0 {
                continue;
            }
            let d = depth as f64;
            v_hat[t * n_pairs + k] = [
                n[0..4].iter().sum::<u64>() as f64 / d,
                n[4..6].iter().sum::<u64>() as f64 / d,
                n[6..8].iter().sum::<u64>() as f64 / d,
            ];
        }
    }

    let chi2 = ChiSquared::new(7.0).expect("valid dof");
    let chi2_95 = chi2.inverse_cdf(0.95);
    let mut rb = Vec::with_capacity(draws.len());
    let mut skipped = 0u64;
    for draw in draws {
        let mut q = [0.0f64; 8];
        for t in 0..n_samples {
            for k in 0..n_pairs {
                let depth = counts.depth(t, k);
                if depth == 0 {
                    continue;
                }
                let v = &v_hat[t * n_pairs + k];
                let p = tilde_p_row(&draw.state, t, k);
                let scale = depth as f64 / nf;
                for g in 0..8 {
                    let class = if g < 4 { 0 } else if g < 6 { 1 } else { 2 };
                    q[g] += scale * v[class] * p[g];
                }
            }
        }
        let mut stat = 0.0;
        for g in 0..8 {
            if q[g] <= 0.0 {
                skipped += 1;
                continue;
            }
            let expected = nf * q[g];
            let diff = pooled[g] as f64 - expected;
            stat += diff * diff / expected;
        }
        rb.push(stat);
    }
    let exceed = rb.iter().filter(|&&s| s > chi2_95).count() as f64 / rb.len() as f64;

    let mut sorted = rb.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let qq = sorted
        .iter()
        .enumerate()
        .map(|(i, &obs)| {
            let p = (i as f64 + 0.5) / sorted.len() as f64;
            (chi2.inverse_cdf(p), obs)
        })
        .collect();

    Ok(GofReport {
        rb,
        exceedance: exceed,
        chi2_95,
        skipped_categories: skipped,
        qq,
    })
}
