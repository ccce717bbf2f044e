//! Posterior simulation.
//!
//! Within a fixed tree the sampler runs systematic scans: exact Gibbs draws
//! of each genotype row from its enumerated conditional, then Dirichlet-
//! centered Metropolis-Hastings moves on each sample's weights and on the
//! noise blocks. A ladder of chains at descending inverse temperatures runs
//! these scans in parallel and periodically attempts adjacent state swaps.
//! Trees are updated by a trans-dimensional move: a uniformly proposed
//! (tree, C) brings along a parameter point drawn from its cached training
//! chain (likelihood raised to the training fraction b), and the move is
//! accepted on the held-out test fraction, where the proposal and prior
//! terms cancel.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::{emission_table_raw, GenotypeCode};
use crate::model::{
    enumerate_valid_rows, log_likelihood, log_prior_state, log_prior_w_row,
    sample_state_prior, Hyperparameters, ModelState, ReadCounts,
};
use crate::numeric::{
    ln_dirichlet_pdf, ln_factorial, logsumexp, sample_categorical_from_log, sample_dirichlet,
    LOG_TERM_FLOOR,
};
use crate::phylogeny::{ParentVector, TreeSpace};

/// Additive floor on Dirichlet proposal concentrations.
const PROPOSAL_FLOOR: f64 = 0.01;

/// Burn-in adaptation window (sweeps) and acceptance-rate targets.
const ADAPT_WINDOW: u64 = 50;
const ADAPT_LOW: f64 = 0.20;
const ADAPT_HIGH: f64 = 0.40;

/// Precomputed per-tree data: candidate genotype rows with their prior
/// bookkeeping, and the truncated-Poisson normalizers for this tree's lambda.
#[derive(Debug, Clone)]
pub struct TreeContext {
    pub tree: ParentVector,
    pub log_prior_tc: f64,
    pub lambda: f64,
    pub rows: Vec<Vec<GenotypeCode>>,
    gains: Vec<u16>,
    lt4: Vec<u16>,
    pos_term: Vec<f64>,
    ln_tp_norm: Vec<f64>,
    ln_tp_num: Vec<f64>,
}

impl TreeContext {
    pub fn new(tree: ParentVector, space: &TreeSpace, n_pairs: usize, hyper: &Hyperparameters) -> Self {
        let index = space.index_of(&tree).expect("tree belongs to the space");
        let log_prior_tc = space.log_prior(index, hyper.alpha, hyper.beta);
        let lambda = hyper.lambda_for(n_pairs, tree.len());
        let rows = enumerate_valid_rows(&tree);
        let c_total = tree.len();
        let mut gains = Vec::with_capacity(rows.len());
        let mut lt4 = Vec::with_capacity(rows.len());
        let mut pos_term = Vec::with_capacity(rows.len());
        for row in &rows {
            let mut g_mask = 0u16;
            let mut l_mask = 0u16;
            let mut pos = 0.0;
            for c in 2..=c_total {
                let qp = row[tree.parent(c) - 1];
                let qc = row[c - 1];
                let bit = 1u16 << (c - 2);
                if qp.num_mutations() < 4 {
                    l_mask |= bit;
                }
                if qc != qp {
                    g_mask |= bit;
                    let mult = crate::genotype::child_multiplicity(qp, qc);
                    debug_assert!(mult > 0);
                    pos += (mult as f64).ln() - ((4 - qp.num_mutations()) as f64).ln();
                }
            }
            gains.push(g_mask);
            lt4.push(l_mask);
            pos_term.push(pos);
        }
        let ln_lambda = lambda.ln();
        let mut ln_tp_norm = Vec::with_capacity(n_pairs + 1);
        ln_tp_norm.push(f64::NEG_INFINITY);
        let mut terms = Vec::with_capacity(n_pairs);
        for i in 1..=n_pairs {
            terms.push(i as f64 * ln_lambda - ln_factorial(i));
            ln_tp_norm.push(logsumexp(&terms));
        }
        let ln_tp_num = (0..=n_pairs)
            .map(|m| m as f64 * ln_lambda - ln_factorial(m))
            .collect();
        TreeContext {
            tree,
            log_prior_tc,
            lambda,
            rows,
            gains,
            lt4,
            pos_term,
            ln_tp_norm,
            ln_tp_num,
        }
    }
}

/// Build contexts for every tree in the space.
pub fn build_contexts(space: &TreeSpace, n_pairs: usize, hyper: &Hyperparameters) -> Vec<TreeContext> {
    space
        .trees()
        .iter()
        .map(|t| TreeContext::new(t.clone(), space, n_pairs, hyper))
        .collect()
}

/// Resample genotype row `k` exactly from its conditional: tempered row
/// likelihood times the genotype-prior terms that involve row `k`.
pub fn gibbs_update_row<R: Rng + ?Sized>(
    state: &mut ModelState,
    k: usize,
    ctx: &TreeContext,
    counts: &ReadCounts,
    power: f64,
    rng: &mut R,
) {
    let c_total = ctx.tree.len();
    let n_cols = c_total - 1;
    // Column statistics excluding row k: gained-mutation counts and the
    // number of pairs whose parent entry still has a free position.
    let mut m_excl = [0u32; 16];
    let mut l_excl = [0u32; 16];
    for (kk, row) in state.z.iter().enumerate() {
        if kk == k {
            continue;
        }
        for c in 2..=c_total {
            let qp = row[ctx.tree.parent(c) - 1];
            if qp.num_mutations() < 4 {
                l_excl[c - 2] += 1;
            }
            if row[c - 1] != qp {
                m_excl[c - 2] += 1;
            }
        }
    }

    let em = emission_table_raw();
    let n_samples = counts.n_samples();
    let mut masses = Vec::with_capacity(ctx.rows.len());
    for (r, row) in ctx.rows.iter().enumerate() {
        let gains = ctx.gains[r];
        let lt4 = ctx.lt4[r];
        let mut lp = ctx.pos_term[r];
        for col in 0..n_cols {
            let bit = 1u16 << col;
            let m = m_excl[col] + u32::from(gains & bit != 0);
            let l = l_excl[col] + u32::from(lt4 & bit != 0);
            if m == 0 {
                lp = f64::NEG_INFINITY;
                break;
            }
            debug_assert!(m <= l);
            lp += ctx.ln_tp_num[m as usize] - ctx.ln_tp_norm[l as usize]
                - (ln_factorial(l as usize) - ln_factorial(m as usize) - ln_factorial((l - m) as usize));
        }
        if lp != f64::NEG_INFINITY && power != 0.0 {
            let mut ll = 0.0;
            'outer: for t in 0..n_samples {
                let n = counts.n(t, k);
                let w = &state.w[t];
                for g in 0..8 {
                    if n[g] == 0 {
                        continue;
                    }
                    let mut p = w[0] * state.rho[g];
                    for (c, &q) in row.iter().enumerate() {
                        p += w[c + 1] * em[g][q.index()];
                    }
                    if p <= 0.0 {
                        ll = f64::NEG_INFINITY;
                        break 'outer;
                    }
                    ll += n[g] as f64 * p.ln().max(LOG_TERM_FLOOR);
                }
            }
            lp = if ll == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                lp + power * ll
            };
        }
        masses.push(lp);
    }
    let pick = sample_categorical_from_log(&masses, rng);
    state.z[k].copy_from_slice(&ctx.rows[pick]);
}

/// Log likelihood contribution of sample `t` under an alternative weight row.
fn sample_log_likelihood(counts: &ReadCounts, state: &ModelState, t: usize, w_row: &[f64]) -> f64 {
    let em = emission_table_raw();
    let mut total = 0.0;
    for k in 0..counts.n_pairs() {
        let n = counts.n(t, k);
        if n.iter().all(|&v| v == 0) {
            continue;
        }
        for g in 0..8 {
            if n[g] == 0 {
                continue;
            }
            let mut p = w_row[0] * state.rho[g];
            for (c, &q) in state.z[k].iter().enumerate() {
                p += w_row[c + 1] * em[g][q.index()];
            }
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            total += n[g] as f64 * p.ln().max(LOG_TERM_FLOOR);
        }
    }
    total
}

/// Log likelihood contribution of read categories `lo..hi` under an
/// alternative noise vector.
fn block_log_likelihood(counts: &ReadCounts, state: &ModelState, lo: usize, hi: usize, rho: &[f64; 8]) -> f64 {
    let em = emission_table_raw();
    let mut total = 0.0;
    for t in 0..counts.n_samples() {
        let w = &state.w[t];
        for k in 0..counts.n_pairs() {
            let n = counts.n(t, k);
            for g in lo..hi {
                if n[g] == 0 {
                    continue;
                }
                let mut p = w[0] * rho[g];
                for (c, &q) in state.z[k].iter().enumerate() {
                    p += w[c + 1] * em[g][q.index()];
                }
                if p <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                total += n[g] as f64 * p.ln().max(LOG_TERM_FLOOR);
            }
        }
    }
    total
}

/// Log acceptance ratio for replacing sample `t`'s weight row by `cand`,
/// under a Dirichlet proposal centered at the current row with concentration
/// `kappa`. Exposed for the detailed-balance unit check.
pub fn w_log_acceptance(
    state: &ModelState,
    t: usize,
    cand: &[f64],
    counts: &ReadCounts,
    power: f64,
    kappa: f64,
    a_p: f64,
    b_p: f64,
    d: f64,
    d0: f64,
) -> f64 {
    let current = &state.w[t];
    let prior_cur = log_prior_w_row(current, a_p, b_p, d, d0);
    let prior_cand = log_prior_w_row(cand, a_p, b_p, d, d0);
    if prior_cand == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let fwd_conc: Vec<f64> = current.iter().map(|&w| kappa * w + PROPOSAL_FLOOR).collect();
    let rev_conc: Vec<f64> = cand.iter().map(|&w| kappa * w + PROPOSAL_FLOOR).collect();
    let ll_cur = sample_log_likelihood(counts, state, t, current);
    let ll_cand = sample_log_likelihood(counts, state, t, cand);
    power * (ll_cand - ll_cur) + prior_cand - prior_cur
        + ln_dirichlet_pdf(current, &rev_conc)
        - ln_dirichlet_pdf(cand, &fwd_conc)
}

/// One Metropolis-Hastings update of sample `t`'s weight row.
pub fn mh_update_w<R: Rng + ?Sized>(
    state: &mut ModelState,
    t: usize,
    counts: &ReadCounts,
    power: f64,
    kappa: f64,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> bool {
    let c = state.n_subclones();
    let a_p = hyper.a_p_for();
    let b_p = hyper.b_p_for(c);
    let conc: Vec<f64> = state.w[t].iter().map(|&w| kappa * w + PROPOSAL_FLOOR).collect();
    let cand = sample_dirichlet(&conc, rng);
    let log_acc = w_log_acceptance(state, t, &cand, counts, power, kappa, a_p, b_p, hyper.d, hyper.d0);
    let accept = log_acc >= 0.0 || rng.random::<f64>().ln() < log_acc;
    if accept {
        state.w[t] = cand;
    }
    accept
}

const RHO_BLOCKS: [(usize, usize); 3] = [(0, 4), (4, 6), (6, 8)];

/// Log acceptance ratio for replacing one noise block; exposed for the
/// detailed-balance unit check.
pub fn rho_log_acceptance(
    state: &ModelState,
    block: usize,
    cand_block: &[f64],
    counts: &ReadCounts,
    power: f64,
    kappa: f64,
    d1: f64,
) -> f64 {
    let (lo, hi) = RHO_BLOCKS[block];
    let prior_conc = if block == 0 { vec![d1; 4] } else { vec![2.0 * d1; 2] };
    let cur_block = &state.rho[lo..hi];
    let prior_cur = ln_dirichlet_pdf(cur_block, &prior_conc);
    let prior_cand = ln_dirichlet_pdf(cand_block, &prior_conc);
    if prior_cand == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let fwd_conc: Vec<f64> = cur_block.iter().map(|&v| kappa * v + PROPOSAL_FLOOR).collect();
    let rev_conc: Vec<f64> = cand_block.iter().map(|&v| kappa * v + PROPOSAL_FLOOR).collect();
    let mut cand_rho = state.rho;
    cand_rho[lo..hi].copy_from_slice(cand_block);
    let ll_cur = block_log_likelihood(counts, state, lo, hi, &state.rho);
    let ll_cand = block_log_likelihood(counts, state, lo, hi, &cand_rho);
    power * (ll_cand - ll_cur) + prior_cand - prior_cur
        + ln_dirichlet_pdf(cur_block, &rev_conc)
        - ln_dirichlet_pdf(cand_block, &fwd_conc)
}

/// One Metropolis-Hastings sweep over the three noise blocks; returns the
/// number of accepted blocks.
pub fn mh_update_rho<R: Rng + ?Sized>(
    state: &mut ModelState,
    counts: &ReadCounts,
    power: f64,
    kappa: f64,
    d1: f64,
    rng: &mut R,
) -> u32 {
    let mut accepted = 0;
    for block in 0..3 {
        let (lo, hi) = RHO_BLOCKS[block];
        let conc: Vec<f64> = state.rho[lo..hi].iter().map(|&v| kappa * v + PROPOSAL_FLOOR).collect();
        let cand_block = sample_dirichlet(&conc, rng);
        let log_acc = rho_log_acceptance(state, block, &cand_block, counts, power, kappa, d1);
        if log_acc >= 0.0 || rng.random::<f64>().ln() < log_acc {
            state.rho[lo..hi].copy_from_slice(&cand_block);
            accepted += 1;
        }
    }
    accepted
}

/// Log acceptance ratio of the trans-dimensional move: held-out test
/// likelihood at power temp*(1-b) plus the (tree, C) prior ratio. Proposal
/// terms cancel: the tree proposal is uniform and the parameter proposal is
/// the training posterior, which doubles as the modified prior.
pub fn tree_log_acceptance(
    temp: f64,
    b_train: f64,
    ll_cand: f64,
    ll_cur: f64,
    log_prior_cand_tc: f64,
    log_prior_cur_tc: f64,
) -> f64 {
    temp * (1.0 - b_train) * (ll_cand - ll_cur) + log_prior_cand_tc - log_prior_cur_tc
}

/// Log acceptance ratio for swapping the states of two tempered chains.
pub fn swap_log_acceptance(beta_i: f64, beta_j: f64, ll_i: f64, ll_j: f64) -> f64 {
    (beta_i - beta_j) * (ll_j - ll_i)
}

/// Counts of accepted vs attempted moves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounter {
    pub accepted: u64,
    pub attempted: u64,
}

impl MoveCounter {
    fn add(&mut self, accepted: bool) {
        self.attempted += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }
}

/// One chain of the tempering ladder, with its private random stream and its
/// per-tree cache of training-posterior states.
pub struct LadderChain {
    pub temp: f64,
    pub tree_idx: usize,
    pub state: ModelState,
    /// Full-data log likelihood (power 1) of the current state.
    pub loglik: f64,
    caches: Vec<ModelState>,
    rng: ChaCha8Rng,
    kappa_w: Vec<f64>,
    kappa_rho: f64,
    pub w_moves: MoveCounter,
    pub rho_moves: MoveCounter,
    pub tree_moves: MoveCounter,
    window_w: MoveCounter,
    window_rho: MoveCounter,
}

impl LadderChain {
    pub fn new(
        chain_id: usize,
        temp: f64,
        contexts: &[TreeContext],
        counts: &ReadCounts,
        hyper: &Hyperparameters,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        rng.set_stream(chain_id as u64 + 1);
        let n_pairs = counts.n_pairs();
        let n_samples = counts.n_samples();
        let caches: Vec<ModelState> = contexts
            .iter()
            .map(|ctx| sample_state_prior(&ctx.tree, n_pairs, n_samples, hyper, &mut rng))
            .collect::<Result<_>>()?;
        let priors: Vec<f64> = contexts.iter().map(|c| c.log_prior_tc).collect();
        let tree_idx = sample_categorical_from_log(&priors, &mut rng);
        let state = caches[tree_idx].clone();
        let loglik = log_likelihood(counts, &state, 1.0);
        Ok(LadderChain {
            temp,
            tree_idx,
            state,
            loglik,
            caches,
            rng,
            kappa_w: vec![hyper.w_step; n_samples],
            kappa_rho: hyper.rho_step,
            w_moves: MoveCounter::default(),
            rho_moves: MoveCounter::default(),
            tree_moves: MoveCounter::default(),
            window_w: MoveCounter::default(),
            window_rho: MoveCounter::default(),
        })
    }

    fn scan_state_at(
        state: &mut ModelState,
        ctx: &TreeContext,
        counts: &ReadCounts,
        power: f64,
        kappa_w: &[f64],
        kappa_rho: f64,
        hyper: &Hyperparameters,
        rng: &mut ChaCha8Rng,
    ) -> (u64, u64, u32) {
        for k in 0..counts.n_pairs() {
            gibbs_update_row(state, k, ctx, counts, power, rng);
        }
        let mut w_accepted = 0u64;
        for t in 0..counts.n_samples() {
            w_accepted += u64::from(mh_update_w(state, t, counts, power, kappa_w[t], hyper, rng));
        }
        let rho_accepted = mh_update_rho(state, counts, power, kappa_rho, hyper.d1, rng);
        (w_accepted, counts.n_samples() as u64, rho_accepted)
    }

    /// One full scan of the chain's own state at its temperature, followed
    /// by burn-in step-size adaptation when `adapt` is set.
    pub fn sweep(&mut self, counts: &ReadCounts, contexts: &[TreeContext], hyper: &Hyperparameters, adapt: bool) {
        let ctx = &contexts[self.tree_idx];
        let (w_acc, w_att, rho_acc) = Self::scan_state_at(
            &mut self.state,
            ctx,
            counts,
            self.temp,
            &self.kappa_w,
            self.kappa_rho,
            hyper,
            &mut self.rng,
        );
        self.w_moves.accepted += w_acc;
        self.w_moves.attempted += w_att;
        self.rho_moves.accepted += u64::from(rho_acc);
        self.rho_moves.attempted += 3;
        self.window_w.accepted += w_acc;
        self.window_w.attempted += w_att;
        self.window_rho.accepted += u64::from(rho_acc);
        self.window_rho.attempted += 3;
        if adapt && self.window_w.attempted >= ADAPT_WINDOW {
            let rate = self.window_w.rate();
            if rate < ADAPT_LOW {
                for kappa in self.kappa_w.iter_mut() {
                    *kappa = (*kappa * 1.6).min(1e8);
                }
            } else if rate > ADAPT_HIGH {
                for kappa in self.kappa_w.iter_mut() {
                    *kappa = (*kappa / 1.6).max(4.0);
                }
            }
            let rho_rate = self.window_rho.rate();
            if rho_rate < ADAPT_LOW {
                self.kappa_rho = (self.kappa_rho * 1.6).min(1e8);
            } else if rho_rate > ADAPT_HIGH {
                self.kappa_rho = (self.kappa_rho / 1.6).max(4.0);
            }
            self.window_w = MoveCounter::default();
            self.window_rho = MoveCounter::default();
        }
        self.loglik = log_likelihood(counts, &self.state, 1.0);
    }

    /// One trans-dimensional proposal: pick a tree uniformly, refresh its
    /// cached training chain, and accept on the tempered test likelihood.
    pub fn tree_move(&mut self, counts: &ReadCounts, contexts: &[TreeContext], hyper: &Hyperparameters) -> bool {
        let prop_idx = self.rng.random_range(0..contexts.len());
        let train_power = self.temp * hyper.b_train;
        for _ in 0..hyper.n_inner {
            Self::scan_state_at(
                &mut self.caches[prop_idx],
                &contexts[prop_idx],
                counts,
                train_power,
                &self.kappa_w,
                self.kappa_rho,
                hyper,
                &mut self.rng,
            );
        }
        let cand_ll = log_likelihood(counts, &self.caches[prop_idx], 1.0);
        let log_acc = tree_log_acceptance(
            self.temp,
            hyper.b_train,
            cand_ll,
            self.loglik,
            contexts[prop_idx].log_prior_tc,
            contexts[self.tree_idx].log_prior_tc,
        );
        let accept = log_acc >= 0.0 || self.rng.random::<f64>().ln() < log_acc;
        if accept {
            self.tree_idx = prop_idx;
            self.state = self.caches[prop_idx].clone();
            self.loglik = cand_ll;
        }
        self.tree_moves.add(accept);
        accept
    }
}

/// One parallel-tempering step: every chain scans at its own temperature,
/// then adjacent pairs attempt swaps when the sweep count hits the period.
pub fn pt_sweep(
    chains: &mut [LadderChain],
    counts: &ReadCounts,
    contexts: &[TreeContext],
    hyper: &Hyperparameters,
    sweep_index: usize,
    adapt: bool,
    coord_rng: &mut ChaCha8Rng,
    swap_moves: &mut [MoveCounter],
) {
    chains
        .par_iter_mut()
        .for_each(|chain| chain.sweep(counts, contexts, hyper, adapt));
    if sweep_index % hyper.swap_period == 0 {
        for i in 0..chains.len().saturating_sub(1) {
            let log_acc = swap_log_acceptance(
                chains[i].temp,
                chains[i + 1].temp,
                chains[i].loglik,
                chains[i + 1].loglik,
            );
            let accept = log_acc >= 0.0 || coord_rng.random::<f64>().ln() < log_acc;
            if accept {
                let (a, b) = chains.split_at_mut(i + 1);
                let (ca, cb) = (&mut a[i], &mut b[0]);
                std::mem::swap(&mut ca.tree_idx, &mut cb.tree_idx);
                std::mem::swap(&mut ca.state, &mut cb.state);
                std::mem::swap(&mut ca.loglik, &mut cb.loglik);
            }
            swap_moves[i].add(accept);
        }
    }
}

/// One recorded posterior draw from the cold chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    pub c: usize,
    pub tree_index: usize,
    pub tree: ParentVector,
    pub state: ModelState,
    pub log_likelihood: f64,
    pub log_prior_state: f64,
    pub log_prior_tree: f64,
}

impl Draw {
    pub fn log_posterior(&self) -> f64 {
        self.log_likelihood + self.log_prior_state + self.log_prior_tree
    }
}

/// Per-sweep scalar trace of the cold chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub log_posterior: f64,
    pub c: usize,
    pub tree_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub w: MoveCounter,
    pub rho: MoveCounter,
    pub tree: MoveCounter,
    pub swaps: Vec<MoveCounter>,
}

/// Everything the sampler records: post-burn-in cold-chain draws, the scalar
/// trace, visit counts over (C, tree index), and acceptance counters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainOutput {
    pub n_samples: usize,
    pub n_pairs: usize,
    pub samples: Vec<String>,
    pub pairs: Vec<String>,
    pub hyper: Hyperparameters,
    pub draws: Vec<Draw>,
    pub trace: Vec<TraceRow>,
    pub visited: Vec<(usize, usize, u64)>,
    pub acceptance: AcceptanceStats,
}

/// Run the full posterior simulation for `counts` under `hyper`.
///
/// Deterministic for a fixed seed and ladder, regardless of how the ladder
/// chains are scheduled across threads.
pub fn run(counts: &ReadCounts, hyper: &Hyperparameters) -> Result<ChainOutput> {
    hyper.validate()?;
    let shell = |draws: Vec<Draw>, trace: Vec<TraceRow>, acc: AcceptanceStats, visited| ChainOutput {
        n_samples: counts.n_samples(),
        n_pairs: counts.n_pairs(),
        samples: counts.samples.clone(),
        pairs: counts.pairs.clone(),
        hyper: hyper.clone(),
        draws,
        trace,
        visited,
        acceptance: acc,
    };
    if hyper.iterations == 0 {
        return Ok(shell(Vec::new(), Vec::new(), AcceptanceStats::default(), Vec::new()));
    }
    if counts.n_pairs() == 0 || counts.n_samples() == 0 {
        return Err(Error::Dimension(
            "sampling requires at least one sample and one mutation pair".into(),
        ));
    }

    let space = TreeSpace::enumerate(hyper.c_min, hyper.c_max)?;
    let contexts = build_contexts(&space, counts.n_pairs(), hyper);
    let mut chains = hyper
        .temperatures
        .iter()
        .enumerate()
        .map(|(i, &temp)| LadderChain::new(i, temp, &contexts, counts, hyper))
        .collect::<Result<Vec<_>>>()?;
    let mut coord_rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    coord_rng.set_stream(0);

    let mut swap_moves = vec![MoveCounter::default(); chains.len().saturating_sub(1)];
    let mut draws = Vec::new();
    let mut trace = Vec::new();
    let mut visited: std::collections::BTreeMap<(usize, usize), u64> =
        std::collections::BTreeMap::new();

    for iter in 1..=hyper.iterations {
        let adapt = iter <= hyper.burn_in;
        pt_sweep(&mut chains, counts, &contexts, hyper, iter, adapt, &mut coord_rng, &mut swap_moves);
        chains.par_iter_mut().for_each(|chain| {
            chain.tree_move(counts, &contexts, hyper);
        });

        let cold = &chains[0];
        if iter > hyper.burn_in {
            let ctx = &contexts[cold.tree_idx];
            let lp_state = log_prior_state(&cold.state, &ctx.tree, hyper);
            let draw = Draw {
                iteration: iter,
                c: ctx.tree.len(),
                tree_index: cold.tree_idx,
                tree: ctx.tree.clone(),
                state: cold.state.clone(),
                log_likelihood: cold.loglik,
                log_prior_state: lp_state,
                log_prior_tree: ctx.log_prior_tc,
            };
            trace.push(TraceRow {
                iteration: iter,
                log_posterior: draw.log_posterior(),
                c: draw.c,
                tree_index: draw.tree_index,
            });
            *visited.entry((draw.c, draw.tree_index)).or_insert(0) += 1;
            draws.push(draw);
        }
        if iter % 100 == 0 {
            let cold = &chains[0];
            let ctx = &contexts[cold.tree_idx];
            log::info!(
                "sweep {iter}: logpost {:.3}, C={}, tree#{}, acc(w {:.2} rho {:.2} tree {:.3})",
                cold.loglik + log_prior_state(&cold.state, &ctx.tree, hyper) + ctx.log_prior_tc,
                ctx.tree.len(),
                cold.tree_idx,
                cold.w_moves.rate(),
                cold.rho_moves.rate(),
                cold.tree_moves.rate(),
            );
        }
    }

    let cold = &chains[0];
    let acceptance = AcceptanceStats {
        w: cold.w_moves,
        rho: cold.rho_moves,
        tree: cold.tree_moves,
        swaps: swap_moves,
    };
    let visited: Vec<(usize, usize, u64)> = visited.into_iter().map(|((c, t), n)| (c, t, n)).collect();
    Ok(shell(draws, trace, acceptance, visited))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{log_prior_z, tilde_p_row};
    use rand::SeedableRng;

    fn code(v: u8) -> GenotypeCode {
        GenotypeCode::new(v).unwrap()
    }

    fn pv(parents: &[usize]) -> ParentVector {
        ParentVector::new(parents.to_vec()).unwrap()
    }

    fn small_hyper() -> Hyperparameters {
        Hyperparameters {
            c_min: 2,
            c_max: 3,
            iterations: 200,
            burn_in: 50,
            temperatures: vec![1.0, 0.5],
            ..Hyperparameters::default()
        }
    }

    fn counts_from(samples: usize, rows: Vec<[u64; 8]>) -> ReadCounts {
        let pairs = rows.len() / samples;
        ReadCounts::new(
            (0..samples).map(|t| format!("s{}", t + 1)).collect(),
            (0..pairs).map(|k| format!("p{}", k + 1)).collect(),
            rows,
        )
        .unwrap()
    }

    /// Brute-force row conditional through the plain model functions.
    fn oracle_row_conditional(
        state: &ModelState,
        k: usize,
        tree: &ParentVector,
        counts: &ReadCounts,
        power: f64,
        lambda: f64,
    ) -> Vec<f64> {
        let rows = enumerate_valid_rows(tree);
        let mut logs = Vec::new();
        for row in &rows {
            let mut z = state.z.clone();
            z[k] = row.clone();
            let lp = log_prior_z(&z, tree, lambda);
            let trial = ModelState { z, w: state.w.clone(), rho: state.rho };
            let ll = log_likelihood(counts, &trial, 1.0);
            logs.push(lp + power * ll);
        }
        let norm = logsumexp(&logs);
        logs.iter().map(|l| (l - norm).exp()).collect()
    }

    #[test]
    fn gibbs_matches_enumerated_conditional() {
        let tree = pv(&[0, 1, 1]);
        let hyper = Hyperparameters { c_min: 2, c_max: 3, ..Hyperparameters::default() };
        let space = TreeSpace::enumerate(2, 3).unwrap();
        let counts = counts_from(
            2,
            vec![
                [8, 3, 0, 1, 2, 1, 4, 1],
                [5, 0, 2, 1, 3, 0, 2, 2],
                [2, 2, 2, 2, 1, 1, 1, 1],
                [9, 1, 1, 0, 2, 2, 3, 0],
            ],
        );
        let ctx = TreeContext::new(tree.clone(), &space, counts.n_pairs(), &hyper);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut state = sample_state_prior(&tree, counts.n_pairs(), 2, &hyper, &mut rng).unwrap();
        // Freeze the other row so the conditional is fixed.
        state.z[1] = vec![code(1), code(2), code(3)];
        let power = 0.7;
        let expect = oracle_row_conditional(&state, 0, &tree, &counts, power, ctx.lambda);

        let n = 100_000;
        let mut freq = vec![0usize; ctx.rows.len()];
        for _ in 0..n {
            gibbs_update_row(&mut state, 0, &ctx, &counts, power, &mut rng);
            let idx = ctx.rows.iter().position(|r| r == &state.z[0]).unwrap();
            freq[idx] += 1;
        }
        let tv: f64 = freq
            .iter()
            .zip(&expect)
            .map(|(&f, &p)| (f as f64 / n as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "total variation {tv}");
    }

    #[test]
    fn gibbs_flat_likelihood_recovers_prior_conditional() {
        let tree = pv(&[0, 1, 2]);
        let hyper = Hyperparameters { c_min: 2, c_max: 3, ..Hyperparameters::default() };
        let space = TreeSpace::enumerate(2, 3).unwrap();
        let counts = counts_from(1, vec![[0; 8], [0; 8]]);
        let ctx = TreeContext::new(tree.clone(), &space, 2, &hyper);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut state = sample_state_prior(&tree, 2, 1, &hyper, &mut rng).unwrap();
        state.z[1] = vec![code(1), code(3), code(3)];
        let expect = oracle_row_conditional(&state, 0, &tree, &counts, 1.0, ctx.lambda);

        let n = 100_000;
        let mut freq = vec![0usize; ctx.rows.len()];
        for _ in 0..n {
            gibbs_update_row(&mut state, 0, &ctx, &counts, 1.0, &mut rng);
            let idx = ctx.rows.iter().position(|r| r == &state.z[0]).unwrap();
            freq[idx] += 1;
        }
        let tv: f64 = freq
            .iter()
            .zip(&expect)
            .map(|(&f, &p)| (f as f64 / n as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "total variation {tv}");
    }

    #[test]
    fn gibbs_never_strands_a_subclone() {
        // Row 0 is the only private mutation of subclone 2; every resampled
        // value must keep at least one gained mutation there.
        let tree = pv(&[0, 1]);
        let hyper = Hyperparameters { c_min: 2, c_max: 2, ..Hyperparameters::default() };
        let space = TreeSpace::enumerate(2, 2).unwrap();
        let counts = counts_from(1, vec![[3, 1, 0, 0, 1, 1, 2, 0], [2, 0, 0, 0, 1, 0, 1, 1]]);
        let ctx = TreeContext::new(tree.clone(), &space, 2, &hyper);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = ModelState {
            z: vec![vec![code(1), code(2)], vec![code(1), code(1)]],
            w: vec![vec![0.1, 0.5, 0.4]],
            rho: [0.25, 0.25, 0.25, 0.25, 0.5, 0.5, 0.5, 0.5],
        };
        // Row 1 never gains, so row 0 must always gain.
        for _ in 0..5000 {
            gibbs_update_row(&mut state, 0, &ctx, &counts, 1.0, &mut rng);
            assert_ne!(state.z[0][1], code(1));
            state.validate(&tree).unwrap();
        }
    }

    #[test]
    fn w_acceptance_is_antisymmetric() {
        let tree = pv(&[0, 1, 1]);
        let hyper = Hyperparameters::default();
        let counts = counts_from(1, vec![[5, 1, 2, 0, 1, 1, 3, 1]]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let state = sample_state_prior(&tree, 1, 1, &hyper, &mut rng).unwrap();
        let cand = sample_dirichlet(&[2.0, 5.0, 3.0, 1.0], &mut rng);
        let a_p = hyper.a_p_for();
        let b_p = hyper.b_p_for(3);
        let fwd = w_log_acceptance(&state, 0, &cand, &counts, 0.8, 120.0, a_p, b_p, hyper.d, hyper.d0);
        let mut swapped = state.clone();
        swapped.w[0] = cand.clone();
        let back = w_log_acceptance(&swapped, 0, &state.w[0], &counts, 0.8, 120.0, a_p, b_p, hyper.d, hyper.d0);
        assert!((fwd + back).abs() < 1e-9, "fwd {fwd} back {back}");
    }

    #[test]
    fn rho_acceptance_is_antisymmetric() {
        let tree = pv(&[0, 1]);
        let hyper = Hyperparameters::default();
        let counts = counts_from(1, vec![[5, 1, 2, 0, 1, 1, 3, 1]]);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let state = sample_state_prior(&tree, 1, 1, &hyper, &mut rng).unwrap();
        let cand = sample_dirichlet(&[1.0; 4], &mut rng);
        let fwd = rho_log_acceptance(&state, 0, &cand, &counts, 1.0, 80.0, hyper.d1);
        let mut swapped = state.clone();
        swapped.rho[0..4].copy_from_slice(&cand);
        let back = rho_log_acceptance(&swapped, 0, &state.rho[0..4], &counts, 1.0, 80.0, hyper.d1);
        assert!((fwd + back).abs() < 1e-9, "fwd {fwd} back {back}");
    }

    #[test]
    fn identical_proposal_accepts() {
        let tree = pv(&[0, 1]);
        let hyper = Hyperparameters::default();
        let counts = counts_from(1, vec![[5, 1, 2, 0, 1, 1, 3, 1]]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let state = sample_state_prior(&tree, 1, 1, &hyper, &mut rng).unwrap();
        let a_p = hyper.a_p_for();
        let b_p = hyper.b_p_for(2);
        let acc = w_log_acceptance(&state, 0, &state.w[0].clone(), &counts, 1.0, 50.0, a_p, b_p, hyper.d, hyper.d0);
        assert!(acc.abs() < 1e-12);
        let acc = rho_log_acceptance(&state, 1, &state.rho[4..6].to_vec(), &counts, 1.0, 50.0, hyper.d1);
        assert!(acc.abs() < 1e-12);
        // Proposing the current tree with its current state accepts.
        assert_eq!(tree_log_acceptance(1.0, 0.95, -12.5, -12.5, -3.0, -3.0), 0.0);
        // Equal temperatures always swap.
        assert_eq!(swap_log_acceptance(0.7, 0.7, -100.0, -5.0), 0.0);
    }

    #[test]
    fn prior_sampling_with_zero_depth_data() {
        // With no reads the chain's stationary distribution is the prior:
        // check the Beta marginal of the normal-subclone weight and the
        // Dirichlet block means of rho.
        let tree = pv(&[0, 1]);
        let hyper = Hyperparameters { c_min: 2, c_max: 2, ..Hyperparameters::default() };
        let space = TreeSpace::enumerate(2, 2).unwrap();
        let counts = counts_from(1, vec![[0; 8], [0; 8]]);
        let ctx = TreeContext::new(tree.clone(), &space, 2, &hyper);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut state = sample_state_prior(&tree, 2, 1, &hyper, &mut rng).unwrap();
        let n = 40_000usize;
        let mut sum_w1 = 0.0;
        let mut sum_w1_sq = 0.0;
        let mut sum_rho1 = 0.0;
        let mut sum_rho5 = 0.0;
        for _ in 0..n {
            LadderChain::scan_state_at(&mut state, &ctx, &counts, 1.0, &[60.0], 60.0, &hyper, &mut rng);
            sum_w1 += state.w[0][1];
            sum_w1_sq += state.w[0][1] * state.w[0][1];
            sum_rho1 += state.rho[0];
            sum_rho5 += state.rho[4];
        }
        let a = hyper.a_p_for();
        let b = hyper.b_p_for(2);
        let expect_mean = a / (a + b);
        let expect_var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
        let mean = sum_w1 / n as f64;
        let var = sum_w1_sq / n as f64 - mean * mean;
        assert!((mean - expect_mean).abs() < 0.02, "mean {mean} vs {expect_mean}");
        assert!((var - expect_var).abs() < 0.02, "var {var} vs {expect_var}");
        assert!((sum_rho1 / n as f64 - 0.25).abs() < 0.02);
        assert!((sum_rho5 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn rho_tracks_noise_only_counts() {
        // With the background clone holding all the weight, the posterior
        // mean of each rho block follows the empirical category frequencies.
        let hyper = Hyperparameters { c_min: 2, c_max: 2, ..Hyperparameters::default() };
        let counts = counts_from(1, vec![[400, 100, 300, 200, 150, 50, 120, 80]]);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut state = ModelState {
            z: vec![vec![code(1), code(2)]],
            w: vec![vec![0.9999, 0.00005, 0.00005]],
            rho: [0.25, 0.25, 0.25, 0.25, 0.5, 0.5, 0.5, 0.5],
        };
        let mut mean = [0.0f64; 8];
        let n = 20_000;
        for _ in 0..n {
            mh_update_rho(&mut state, &counts, 1.0, 400.0, hyper.d1, &mut rng);
            for g in 0..8 {
                mean[g] += state.rho[g] / n as f64;
            }
        }
        for (g, expect) in [(0, 0.4), (1, 0.1), (2, 0.3), (3, 0.2), (4, 0.75), (5, 0.25), (6, 0.6), (7, 0.4)] {
            assert!((mean[g] - expect).abs() < 0.03, "rho[{g}] mean {} vs {expect}", mean[g]);
        }
    }

    #[test]
    fn tempering_crosses_likelihood_barrier() {
        // A deliberately bimodal posterior: the variant can sit on locus 2
        // (code 2) or locus 1 (code 3), with the shared noise block covering
        // whichever complete-read category the subclone cannot emit. Two
        // samples with opposed mixing stop the noise from mimicking the
        // subclone in both at once, so the modes are separated by a real
        // likelihood valley. After the short settling phase, a cold chain
        // stays in one mode for the whole budget while the tempered ladder
        // keeps crossing.
        let tree = pv(&[0, 1]);
        let base = Hyperparameters {
            c_min: 2,
            c_max: 2,
            iterations: 1500,
            burn_in: 0,
            swap_period: 1,
            n_inner: 1,
            ..Hyperparameters::default()
        };
        let space = TreeSpace::enumerate(2, 2).unwrap();
        let ctx = TreeContext::new(tree.clone(), &space, 1, &base);
        let counts = counts_from(
            2,
            vec![[250, 225, 30, 8, 0, 0, 0, 0], [250, 30, 225, 8, 0, 0, 0, 0]],
        );
        let settle = 100;

        let run_modes = |temps: Vec<f64>| -> Vec<u8> {
            let hyper = Hyperparameters { temperatures: temps, ..base.clone() };
            let mut chains: Vec<LadderChain> = hyper
                .temperatures
                .iter()
                .enumerate()
                .map(|(i, &t)| LadderChain::new(i, t, std::slice::from_ref(&ctx), &counts, &hyper).unwrap())
                .collect();
            let mut coord = ChaCha8Rng::seed_from_u64(hyper.seed);
            coord.set_stream(0);
            let mut swap_moves = vec![MoveCounter::default(); chains.len() - 1];
            let mut modes = Vec::new();
            for iter in 1..=hyper.iterations {
                pt_sweep(
                    &mut chains,
                    &counts,
                    std::slice::from_ref(&ctx),
                    &hyper,
                    iter,
                    false,
                    &mut coord,
                    &mut swap_moves,
                );
                if iter > settle {
                    modes.push(chains[0].state.z[0][1].code());
                }
            }
            modes
        };

        let single = run_modes(vec![1.0]);
        let tempered = run_modes(vec![1.0, 0.55, 0.3, 0.15]);
        let distinct = |m: &[u8]| {
            let mut v: Vec<u8> = m.to_vec();
            v.sort_unstable();
            v.dedup();
            v.len()
        };
        assert_eq!(distinct(&single), 1, "cold chain should stay in one mode");
        assert!(distinct(&tempered) >= 2, "tempered ladder should visit both modes");
        let flips = tempered.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(flips > 50, "tempered ladder should keep crossing, got {flips} flips");
    }

    #[test]
    fn tree_move_prefers_dominant_test_likelihood() {
        // Data generated from a chain topology at high depth: occupancy of
        // the chain tree should dominate the star tree.
        let hyper = Hyperparameters {
            c_min: 3,
            c_max: 3,
            iterations: 600,
            burn_in: 100,
            temperatures: vec![1.0, 0.5],
            ..Hyperparameters::default()
        };
        let truth_tree = pv(&[0, 1, 2]);
        let truth = ModelState {
            z: vec![
                vec![code(1), code(2), code(2)],
                vec![code(1), code(1), code(3)],
                vec![code(1), code(2), code(4)],
            ],
            w: vec![vec![0.02, 0.28, 0.35, 0.35], vec![0.02, 0.18, 0.10, 0.70]],
            rho: [0.25, 0.25, 0.25, 0.25, 0.5, 0.5, 0.5, 0.5],
        };
        truth.validate(&truth_tree).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        for t in 0..2 {
            for k in 0..3 {
                let p = tilde_p_row(&truth, t, k);
                let mut n = [0u64; 8];
                for _ in 0..4000u32 {
                    let u: f64 = rng.random::<f64>();
                    // Complete reads only, v1 = 1.
                    let mut cum = 0.0;
                    for g in 0..4 {
                        cum += p[g];
                        if u < cum {
                            n[g] += 1;
                            break;
                        }
                    }
                }
                rows.push(n);
            }
        }
        let counts = counts_from(2, rows);
        let out = run(&counts, &hyper).unwrap();
        let chain_idx = 1; // trees for C=3 enumerate as [(0,1,1), (0,1,2)]
        let occupancy = out
            .draws
            .iter()
            .filter(|d| d.tree_index == chain_idx)
            .count() as f64
            / out.draws.len() as f64;
        assert!(occupancy > 0.99, "occupancy {occupancy}");
    }

    #[test]
    fn zero_recorded_draws_is_valid_shell() {
        let counts = counts_from(1, vec![[1, 0, 0, 0, 0, 0, 1, 0]]);
        let hyper = Hyperparameters {
            iterations: 0,
            ..small_hyper()
        };
        let out = run(&counts, &hyper).unwrap();
        assert!(out.draws.is_empty());
        assert!(out.trace.is_empty());

        let hyper = Hyperparameters {
            iterations: 30,
            burn_in: 30,
            ..small_hyper()
        };
        let out = run(&counts, &hyper).unwrap();
        assert!(out.draws.is_empty());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let counts = counts_from(
            2,
            vec![
                [8, 3, 0, 1, 2, 1, 4, 1],
                [5, 0, 2, 1, 3, 0, 2, 2],
                [2, 2, 2, 2, 1, 1, 1, 1],
                [9, 1, 1, 0, 2, 2, 3, 0],
            ],
        );
        let hyper = small_hyper();
        let a = run(&counts, &hyper).unwrap();
        let b = run(&counts, &hyper).unwrap();
        assert_eq!(
            serde_json::to_string(&a.draws).unwrap(),
            serde_json::to_string(&b.draws).unwrap()
        );
        assert_eq!(a.acceptance, b.acceptance);

        let hyper2 = Hyperparameters { seed: 2, ..small_hyper() };
        let c = run(&counts, &hyper2).unwrap();
        assert_ne!(
            serde_json::to_string(&a.draws).unwrap(),
            serde_json::to_string(&c.draws).unwrap()
        );
    }

    #[test]
    fn recorded_draws_satisfy_invariants() {
        let counts = counts_from(
            1,
            vec![[8, 3, 0, 1, 2, 1, 4, 1], [5, 0, 2, 1, 3, 0, 2, 2]],
        );
        let out = run(&counts, &small_hyper()).unwrap();
        assert_eq!(out.draws.len(), 150);
        for draw in &out.draws {
            draw.state.validate(&draw.tree).unwrap();
            assert!(draw.log_likelihood.is_finite());
            assert!(draw.log_prior_state.is_finite());
        }
    }
}
