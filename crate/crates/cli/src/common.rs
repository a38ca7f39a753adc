//! Helpers shared by the subcommands.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use attrspace_core::intersect::{AttributeQuery, SearchConfig, Selection, FULL_K};
use attrspace_core::space::{load_space, Format};
use attrspace_core::AttributeSpace;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{CliError, Result};

/// Neighbors per attribute used to score points in reports.
pub const DEFAULT_K_EVAL: usize = 200;

/// Settings shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Context {
    pub seed: u64,
}

pub fn require<T: Clone>(value: &Option<T>, flag: &str) -> Result<T> {
    value.clone().ok_or_else(|| CliError::usage(format!("missing required --{flag}")))
}

pub fn read_space(path: &Path) -> Result<AttributeSpace> {
    if !path.exists() {
        return Err(CliError::Io(io::Error::new(
            io::ErrorKind::NotFound,
            format!("{} does not exist", path.display()),
        )));
    }
    Ok(load_space(path, Format::from_path(path))?)
}

/// Pretty JSON plus a trailing newline, to `path` or stdout.
pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            serde_json::to_writer_pretty(&mut w, value)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        None => {
            let mut out = io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, value)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Splits `aspect=attribute`.
pub fn parse_pair(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(CliError::usage(format!("expected ASPECT=ATTRIBUTE, got {s:?}"))),
    }
}

/// `"full"` for the every-point sentinel, otherwise the number.
pub fn k_json(k: usize) -> Value {
    if k == FULL_K {
        json!("full")
    } else {
        json!(k)
    }
}

pub fn k_display(k: usize) -> String {
    if k == FULL_K {
        "full".into()
    } else {
        k.to_string()
    }
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
pub struct QueryArgs {
    /// Queried attribute as ASPECT=ATTRIBUTE; repeat for each aspect.
    #[arg(long = "target", value_name = "ASPECT=ATTRIBUTE")]
    pub target: Option<Vec<String>>,
    /// Weight of each --target, in the same order.
    #[arg(long = "weight", allow_negative_numbers = true)]
    pub weight: Option<Vec<f64>>,
    /// Named entry of a combinations file instead of --target/--weight.
    #[arg(long)]
    pub combination: Option<String>,
    /// JSON file mapping combination names to targets and weights.
    #[arg(long)]
    pub combinations: Option<PathBuf>,
}

#[derive(Deserialize)]
struct Combination {
    targets: Vec<String>,
    weights: Vec<f64>,
}

impl QueryArgs {
    fn targets_and_weights(&self) -> Result<(Vec<String>, Vec<f64>)> {
        if let Some(name) = &self.combination {
            if self.target.is_some() || self.weight.is_some() {
                return Err(CliError::usage("--combination cannot be mixed with --target/--weight"));
            }
            let path = require(&self.combinations, "combinations")?;
            let table: Map<String, Value> = serde_json::from_value(read_json(&path)?)?;
            let entry = table.get(name).ok_or_else(|| {
                let names: Vec<&str> = table.keys().map(String::as_str).collect();
                CliError::usage(format!("unknown combination {name:?}; available: {}", names.join(", ")))
            })?;
            let c: Combination = serde_json::from_value(entry.clone())?;
            return Ok((c.targets, c.weights));
        }
        let targets = self.target.clone().unwrap_or_default();
        let weights = self.weight.clone().unwrap_or_default();
        if targets.is_empty() {
            return Err(CliError::usage("at least one --target is required"));
        }
        if targets.len() != weights.len() {
            return Err(CliError::usage(format!(
                "{} --target values but {} --weight values; give one weight per target",
                targets.len(),
                weights.len()
            )));
        }
        Ok((targets, weights))
    }

    /// Resolves the query against `space`; also returns the target labels.
    pub fn resolve(&self, space: &AttributeSpace) -> Result<(AttributeQuery, Vec<String>)> {
        let (targets, weights) = self.targets_and_weights()?;
        let pairs = targets.iter().map(|t| parse_pair(t)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        Ok((AttributeQuery::from_names(space, &refs, &weights)?, targets))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionArg {
    Deterministic,
    Stochastic,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
pub struct SearchParams {
    /// Neighbors per attribute; 0 means every point (the interpolation limit).
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of candidates.
    #[arg(long)]
    pub m: Option<usize>,
    /// Maximum update steps per candidate.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Initial pool size as a multiple of --m.
    #[arg(long)]
    pub pool_factor: Option<usize>,
    /// Shortlist size for selection.
    #[arg(long)]
    pub top_c: Option<usize>,
    #[arg(long, value_enum)]
    pub selection: Option<SelectionArg>,
    /// Stop a candidate once a step moves it less than this.
    #[arg(long)]
    pub conv_tol: Option<f64>,
    /// Neighbors per attribute used when reporting quality.
    #[arg(long)]
    pub k_eval: Option<usize>,
}

impl SearchParams {
    pub fn config(&self, seed: u64) -> SearchConfig {
        let d = SearchConfig::default();
        SearchConfig {
            k: match self.k {
                Some(0) => FULL_K,
                Some(k) => k,
                None => d.k,
            },
            m: self.m.unwrap_or(d.m),
            max_iters: self.iters.unwrap_or(d.max_iters),
            pool_factor: self.pool_factor.unwrap_or(d.pool_factor),
            conv_tol: self.conv_tol.unwrap_or(d.conv_tol),
            selection: match self.selection {
                Some(SelectionArg::Stochastic) => Selection::Stochastic,
                _ => Selection::Deterministic,
            },
            top_c: self.top_c.unwrap_or(d.top_c),
            seed,
            keep_trajectories: false,
        }
    }

    pub fn k_eval(&self) -> Result<usize> {
        match self.k_eval.unwrap_or(DEFAULT_K_EVAL) {
            0 => Err(CliError::usage("--k-eval must be at least 1")),
            k => Ok(k),
        }
    }
}

/// `K`, `M` and `S` of a search run plus the other knobs.
pub fn search_metadata(cfg: &SearchConfig, k_eval: usize) -> Value {
    json!({
        "K": k_json(cfg.k),
        "M": cfg.m,
        "S": cfg.max_iters,
        "pool_factor": cfg.pool_factor,
        "top_c": cfg.top_c,
        "selection": cfg.selection,
        "conv_tol": cfg.conv_tol,
        "seed": cfg.seed,
        "k_eval": k_eval,
    })
}
