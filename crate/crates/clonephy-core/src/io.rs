//! File formats: tab-separated read counts, JSON truth and report
//! documents, JSON-lines posterior draws, CSV traces and metrics, and the
//! TOML configuration file.
//!
//! Lines starting with `#` are comments everywhere; writers use them to echo
//! the effective configuration into each output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{ErrorMetrics, GofReport};
use crate::model::{Hyperparameters, ReadCounts};
use crate::sampler::{Draw, TraceRow};

const COUNTS_HEADER: &str = "sample_id\tpair_id\tn00\tn01\tn10\tn11\tnm0\tnm1\tn0m\tn1m";

/// Write counts as TSV with the eight-category header, one row per
/// (sample, pair), samples outermost.
pub fn write_counts(path: &Path, counts: &ReadCounts, comment: Option<&str>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    if let Some(comment) = comment {
        for line in comment.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    writeln!(out, "{COUNTS_HEADER}")?;
    for (t, sample) in counts.samples.iter().enumerate() {
        for (k, pair) in counts.pairs.iter().enumerate() {
            let n = counts.n(t, k);
            write!(out, "{sample}\t{pair}")?;
            for v in n {
                write!(out, "\t{v}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Parse a counts TSV. Errors carry 1-based line numbers; the table must be
/// rectangular with every (sample, pair) combination appearing exactly once.
pub fn read_counts(path: &Path) -> Result<ReadCounts> {
    let reader = BufReader::new(File::open(path)?);
    let mut samples: Vec<String> = Vec::new();
    let mut pairs: Vec<String> = Vec::new();
    let mut cells: std::collections::BTreeMap<(usize, usize), [u64; 8]> = std::collections::BTreeMap::new();
    let mut header_seen = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !header_seen {
            if trimmed != COUNTS_HEADER {
                return Err(Error::DataFormat {
                    line: lineno,
                    msg: format!("unexpected header, want {COUNTS_HEADER:?}"),
                });
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 10 {
            return Err(Error::DataFormat {
                line: lineno,
                msg: format!("expected 10 tab-separated fields, got {}", fields.len()),
            });
        }
        let sample = fields[0].to_string();
        let pair = fields[1].to_string();
        let t = samples.iter().position(|s| s == &sample).unwrap_or_else(|| {
            samples.push(sample.clone());
            samples.len() - 1
        });
        let k = pairs.iter().position(|p| p == &pair).unwrap_or_else(|| {
            pairs.push(pair.clone());
            pairs.len() - 1
        });
        let mut n = [0u64; 8];
        for (g, field) in fields[2..].iter().enumerate() {
            n[g] = field.parse::<u64>().map_err(|_| Error::DataFormat {
                line: lineno,
                msg: format!("count {field:?} is not a nonnegative integer"),
            })?;
        }
        if cells.insert((t, k), n).is_some() {
            return Err(Error::DataFormat {
                line: lineno,
                msg: format!("duplicate entry for sample {sample:?} pair {pair:?}"),
            });
        }
    }
    if !header_seen {
        return Err(Error::DataFormat { line: 1, msg: "missing header".into() });
    }
    let mut rows = Vec::with_capacity(samples.len() * pairs.len());
    for t in 0..samples.len() {
        for k in 0..pairs.len() {
            match cells.get(&(t, k)) {
                Some(n) => rows.push(*n),
                None => {
                    return Err(Error::DataFormat {
                        line: 0,
                        msg: format!(
                            "ragged table: no row for sample {:?} pair {:?}",
                            samples[t], pairs[k]
                        ),
                    })
                }
            }
        }
    }
    ReadCounts::new(samples, pairs, rows)
}

/// Write any serializable document as pretty JSON; output is deterministic
/// for identical values.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let reader = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(reader)?)
}

/// Posterior draws as JSON lines, one draw per line.
pub fn write_draws(path: &Path, draws: &[Draw]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for draw in draws {
        serde_json::to_writer(&mut out, draw)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_draws(path: &Path) -> Result<Vec<Draw>> {
    let reader = BufReader::new(File::open(path)?);
    let mut draws = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        draws.push(serde_json::from_str(&line)?);
    }
    Ok(draws)
}

/// Scalar trace as CSV: iteration, log posterior, C, tree index.
pub fn write_trace(path: &Path, trace: &[TraceRow], comment: Option<&str>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    if let Some(comment) = comment {
        for line in comment.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    writeln!(out, "iteration,log_posterior,c,tree_index")?;
    for row in trace {
        writeln!(out, "{},{},{},{}", row.iteration, row.log_posterior, row.c, row.tree_index)?;
    }
    Ok(())
}

/// Read the log-posterior column of a trace CSV.
pub fn read_trace_log_posterior(path: &Path) -> Result<Vec<f64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut values = Vec::new();
    let mut header_seen = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::DataFormat {
                line: idx + 1,
                msg: "trace rows need at least two columns".into(),
            });
        }
        values.push(fields[1].parse::<f64>().map_err(|_| Error::DataFormat {
            line: idx + 1,
            msg: format!("bad log-posterior value {:?}", fields[1]),
        })?);
    }
    Ok(values)
}

/// One-line CSV of reconstruction errors.
pub fn write_metrics(path: &Path, metrics: &ErrorMetrics, comment: Option<&str>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    if let Some(comment) = comment {
        for line in comment.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    writeln!(out, "c_err,t_err,z_err,w_err,z_err_snv,size_mismatched")?;
    writeln!(
        out,
        "{},{},{},{},{},{}",
        metrics.c_err, metrics.t_err, metrics.z_err, metrics.w_err, metrics.z_err_snv, metrics.size_mismatched
    )?;
    Ok(())
}

/// Per-draw goodness-of-fit statistics plus paired theoretical quantiles for
/// quantile-quantile plotting.
pub fn write_gof(path: &Path, gof: &GofReport) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "# exceedance = {}, chi2_95 = {}, skipped_categories = {}",
        gof.exceedance, gof.chi2_95, gof.skipped_categories
    )?;
    writeln!(out, "draw,rb,chi2_theoretical_quantile,rb_sorted")?;
    for (i, &rb) in gof.rb.iter().enumerate() {
        let (theo, sorted) = gof.qq[i];
        writeln!(out, "{},{},{},{}", i + 1, rb, theo, sorted)?;
    }
    Ok(())
}

/// Parse a TOML configuration file into hyperparameters; unknown keys are
/// rejected.
pub fn read_config(path: &Path) -> Result<Hyperparameters> {
    let text = std::fs::read_to_string(path)?;
    let hyper: Hyperparameters =
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{path:?}: {e}")))?;
    hyper.validate()?;
    Ok(hyper)
}
