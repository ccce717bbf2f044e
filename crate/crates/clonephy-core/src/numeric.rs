//! Small numeric helpers shared across modules: log-space accumulation,
//! factorial tables, Dirichlet sampling and density.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// Floor applied to each log-probability term so that subnormal
/// probabilities cannot poison accumulated sums.
pub(crate) const LOG_TERM_FLOOR: f64 = -745.0;

pub(crate) fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

const LN_FACT_TABLE_SIZE: usize = 4096;

fn ln_fact_table() -> &'static Vec<f64> {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE_SIZE);
        t.push(0.0);
        for n in 1..LN_FACT_TABLE_SIZE {
            t.push(t[n - 1] + (n as f64).ln());
        }
        t
    })
}

pub(crate) fn ln_factorial(n: usize) -> f64 {
    let table = ln_fact_table();
    if n < table.len() {
        table[n]
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

pub(crate) fn ln_binomial(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Draw an index from the categorical distribution given by unnormalized
/// log masses. Entries of -inf carry zero mass.
pub(crate) fn sample_categorical_from_log<R: Rng + ?Sized>(log_masses: &[f64], rng: &mut R) -> usize {
    let norm = logsumexp(log_masses);
    assert!(norm > f64::NEG_INFINITY, "categorical with all-zero mass");
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_valid = 0;
    for (i, &lm) in log_masses.iter().enumerate() {
        if lm == f64::NEG_INFINITY {
            continue;
        }
        last_valid = i;
        cum += (lm - norm).exp();
        if u < cum {
            return i;
        }
    }
    last_valid
}

/// Smallest probability kept when normalizing sampled simplex points; keeps
/// prior densities finite without visibly distorting draws.
const SIMPLEX_FLOOR: f64 = 1e-300;

/// Sample a Dirichlet vector by normalizing Gamma draws.
pub(crate) fn sample_dirichlet<R: Rng + ?Sized>(conc: &[f64], rng: &mut R) -> Vec<f64> {
    let mut draws: Vec<f64> = conc
        .iter()
        .map(|&a| {
            let g = Gamma::new(a, 1.0).expect("positive concentration");
            g.sample(rng).max(SIMPLEX_FLOOR)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    for d in draws.iter_mut() {
        *d /= total;
    }
    draws
}

/// Sample Beta(a, b) as a two-component Dirichlet.
pub(crate) fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    sample_dirichlet(&[a, b], rng)[0]
}

/// Dirichlet log density with respect to Lebesgue measure on the
/// (n-1)-dimensional simplex. Returns -inf on the boundary.
pub(crate) fn ln_dirichlet_pdf(x: &[f64], conc: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), conc.len());
    if x.iter().any(|&v| v <= 0.0 || v >= 1.0) {
        return f64::NEG_INFINITY;
    }
    let total: f64 = conc.iter().sum();
    let mut lp = ln_gamma(total);
    for (&xi, &ai) in x.iter().zip(conc) {
        lp += (ai - 1.0) * xi.ln() - ln_gamma(ai);
    }
    lp
}
