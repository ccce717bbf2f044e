//! Command-line surface: simulate | fit | evaluate | gof | diag.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{gof_rb, psrf, reconstruction_errors, summarize};
use crate::io;
use crate::model::Hyperparameters;
use crate::sampler;
use crate::simulate::{gen_counts, gen_truth, marginalize_to_snv, GroundTruth, SimulationSpec};

#[derive(Parser)]
#[command(
    name = "clonephy",
    about = "Reconstruct tumor subclones, proportions, and their phylogeny from mutation-pair read counts",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ground truth and matching read counts.
    Simulate(SimulateArgs),
    /// Run the posterior sampler on a counts file and write the report.
    Fit(FitArgs),
    /// Score a fit report against a simulation truth.
    Evaluate(EvaluateArgs),
    /// Bayesian chi-squared goodness of fit over posterior draws.
    Gof(GofArgs),
    /// Potential scale reduction factor across log-posterior traces.
    Diag(DiagArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of subclones.
    #[arg(long, alias = "C")]
    c: Option<usize>,
    /// Number of mutation pairs.
    #[arg(long, alias = "K")]
    k: Option<usize>,
    /// Number of samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Mean read depth.
    #[arg(long)]
    depth: Option<f64>,
    /// Read depth standard deviation (default: depth / 5).
    #[arg(long)]
    depth_sd: Option<f64>,
    /// Left-missing read fraction.
    #[arg(long)]
    v2: Option<f64>,
    /// Right-missing read fraction.
    #[arg(long)]
    v3: Option<f64>,
    /// Comma-separated Dirichlet base concentrations for the subclone
    /// weights, permuted per sample.
    #[arg(long)]
    w_base: Option<String>,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Optional TOML file with simulation settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Collapse the generated pair counts to marginal-SNV reads.
    #[arg(long)]
    snv_only: bool,
    /// With --snv-only, also emit the second locus as left-missing reads.
    #[arg(long)]
    mirror_second_locus: bool,
    /// Output prefix; writes <out>.counts.tsv and <out>.truth.json.
    #[arg(long, default_value = "sim")]
    out: String,
}

#[derive(Args)]
struct FitArgs {
    /// Input counts TSV.
    #[arg(long)]
    counts: PathBuf,
    /// TOML file with hyperparameters and run controls; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    c_min: Option<usize>,
    #[arg(long)]
    c_max: Option<usize>,
    #[arg(long)]
    b_train: Option<f64>,
    #[arg(long)]
    n_inner: Option<usize>,
    #[arg(long)]
    swap_period: Option<usize>,
    /// Output prefix; writes <out>.report.json, <out>.trace.csv and
    /// <out>.draws.jsonl.
    #[arg(long, default_value = "fit")]
    out: String,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Simulation truth JSON.
    #[arg(long)]
    truth: PathBuf,
    /// Fit report JSON.
    #[arg(long)]
    report: PathBuf,
    /// Output metrics CSV.
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct GofArgs {
    /// Input counts TSV.
    #[arg(long)]
    counts: PathBuf,
    /// Posterior draws JSON-lines file from a fit.
    #[arg(long)]
    draws: PathBuf,
    /// Output CSV with per-draw statistics and quantile pairs.
    #[arg(long, default_value = "gof.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct DiagArgs {
    /// Two or more trace CSV files.
    #[arg(required = true, num_args = 2..)]
    traces: Vec<PathBuf>,
}

/// Written in place of a full report when the sampler recorded no draws.
#[derive(Serialize)]
struct EmptyReport<'a> {
    n_draws: usize,
    samples: &'a [String],
    pairs: &'a [String],
    config: &'a Hyperparameters,
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str::<SimulationSpec>(&text)
                .map_err(|e| Error::InvalidConfig(format!("{path:?}: {e}")))?
        }
        None => SimulationSpec::default(),
    };
    if let Some(c) = args.c {
        spec.c = c;
    }
    if let Some(k) = args.k {
        spec.n_pairs = k;
    }
    if let Some(samples) = args.samples {
        spec.n_samples = samples;
    }
    if let Some(depth) = args.depth {
        spec.depth_mean = depth;
    }
    if args.depth_sd.is_some() {
        spec.depth_sd = args.depth_sd;
    }
    if let Some(v2) = args.v2 {
        spec.v2 = v2;
    }
    if let Some(v3) = args.v3 {
        spec.v3 = v3;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(w_base) = &args.w_base {
        let parsed = w_base
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidConfig(format!("bad w_base entry {tok:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        spec.w_base = Some(parsed);
    }
    spec.validate()?;

    let truth = gen_truth(&spec)?;
    let mut counts = gen_counts(&truth, &spec)?;
    if args.snv_only {
        counts = marginalize_to_snv(&counts, args.mirror_second_locus);
    }
    let counts_path = PathBuf::from(format!("{}.counts.tsv", args.out));
    let truth_path = PathBuf::from(format!("{}.truth.json", args.out));
    let echo = serde_json::to_string(&spec)?;
    io::write_counts(&counts_path, &counts, Some(&format!("spec: {echo}")))?;
    io::write_json(&truth_path, &truth)?;
    println!(
        "wrote {} and {} (C={}, tree {})",
        counts_path.display(),
        truth_path.display(),
        truth.tree.len(),
        truth.tree
    );
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let mut hyper = match &args.config {
        Some(path) => io::read_config(path)?,
        None => Hyperparameters::default(),
    };
    if let Some(seed) = args.seed {
        hyper.seed = seed;
    }
    if let Some(iterations) = args.iterations {
        hyper.iterations = iterations;
    }
    if let Some(burn_in) = args.burn_in {
        hyper.burn_in = burn_in;
    }
    if let Some(c_min) = args.c_min {
        hyper.c_min = c_min;
    }
    if let Some(c_max) = args.c_max {
        hyper.c_max = c_max;
    }
    if let Some(b_train) = args.b_train {
        hyper.b_train = b_train;
    }
    if let Some(n_inner) = args.n_inner {
        hyper.n_inner = n_inner;
    }
    if let Some(swap_period) = args.swap_period {
        hyper.swap_period = swap_period;
    }
    hyper.validate()?;

    let counts = io::read_counts(&args.counts)?;
    let output = sampler::run(&counts, &hyper)?;

    let report_path = PathBuf::from(format!("{}.report.json", args.out));
    let trace_path = PathBuf::from(format!("{}.trace.csv", args.out));
    let draws_path = PathBuf::from(format!("{}.draws.jsonl", args.out));
    let echo = serde_json::to_string(&hyper)?;
    io::write_trace(&trace_path, &output.trace, Some(&format!("config: {echo}")))?;
    io::write_draws(&draws_path, &output.draws)?;

    if output.draws.is_empty() {
        let empty = EmptyReport {
            n_draws: 0,
            samples: &output.samples,
            pairs: &output.pairs,
            config: &hyper,
        };
        io::write_json(&report_path, &empty)?;
        println!("no recorded draws; wrote empty report {}", report_path.display());
        return Ok(());
    }

    let mut report = summarize(&output)?;
    report.gof = Some(gof_rb(&counts, &output.draws)?);
    io::write_json(&report_path, &report)?;
    println!(
        "modal C = {}, modal tree = {} (posterior {:.3}); wrote {}",
        report.modal_c,
        report.modal_tree,
        report.tree_posterior[0].probability,
        report_path.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let truth: GroundTruth = io::read_json(&args.truth)?;
    let report: crate::inference::FitReport = io::read_json(&args.report)?;
    let metrics = reconstruction_errors(&truth.tree, &truth.state, &report)?;
    let echo = serde_json::to_string(&report.config)?;
    io::write_metrics(&args.out, &metrics, Some(&format!("config: {echo}")))?;
    println!(
        "c_err={} t_err={} z_err={:.4} w_err={:.4} z_err_snv={:.4}{}",
        metrics.c_err,
        metrics.t_err,
        metrics.z_err,
        metrics.w_err,
        metrics.z_err_snv,
        if metrics.size_mismatched { " (size-mismatched)" } else { "" }
    );
    Ok(())
}

fn cmd_gof(args: GofArgs) -> Result<()> {
    let counts = io::read_counts(&args.counts)?;
    let draws = io::read_draws(&args.draws)?;
    let gof = gof_rb(&counts, &draws)?;
    io::write_gof(&args.out, &gof)?;
    println!(
        "exceedance of chi2(7) 95% quantile: {:.4} over {} draws",
        gof.exceedance,
        gof.rb.len()
    );
    Ok(())
}

fn cmd_diag(args: DiagArgs) -> Result<()> {
    let traces = args
        .traces
        .iter()
        .map(|p| io::read_trace_log_posterior(p))
        .collect::<Result<Vec<_>>>()?;
    let value = psrf(&traces)?;
    println!("PSRF = {value:.4}");
    Ok(())
}

/// Parse arguments and dispatch; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Gof(args) => cmd_gof(args),
        Command::Diag(args) => cmd_diag(args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::InvalidConfig(_) => 2,
                _ => 3,
            }
        }
    }
}
