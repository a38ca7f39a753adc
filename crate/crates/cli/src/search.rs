use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use attrspace_core::intersect::{SearchContext, FULL_K};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::common::{k_display, k_json, read_space, require, search_metadata, write_json, Context, QueryArgs, SearchParams};
use crate::error::{CliError, Result};

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
pub struct SearchArgs {
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub query: QueryArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub params: SearchParams,
    /// Include every candidate's trajectory in the output.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub trajectories: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_search(args: &SearchArgs, ctx: &Context) -> Result<()> {
    let space = read_space(&require(&args.space, "space")?)?;
    let (query, targets) = args.query.resolve(&space)?;
    let mut cfg = args.params.config(ctx.seed);
    cfg.keep_trajectories = args.trajectories.unwrap_or(false);
    let k_eval = args.params.k_eval()?;
    eprintln!("search: K={} M={} S={}", k_display(cfg.k), cfg.m, cfg.max_iters);
    let sc = SearchContext::new(&space, &query)?;
    let r = sc.search(&cfg)?;
    if r.pool_short {
        log::warn!("initial pool holds fewer than M={} points", cfg.m);
    }
    let baseline = sc.interpolation_baseline();
    let chosen = &r.candidates[r.selected];
    let mut out = json!({
        "metadata": search_metadata(&cfg, k_eval),
        "targets": targets,
        "weights": query.weights(),
        "point": r.point,
        "quality": sc.quality(&r.point, k_eval)?,
        "baseline": baseline,
        "baseline_quality": sc.quality(&baseline, k_eval)?,
        "selected": r.selected,
        "start_ordinal": chosen.start_ordinal,
        "start_id": space.id(chosen.start_ordinal),
        "iterations_run": r.iterations_run,
        "converged": r.converged,
        "shortlist": r.shortlist,
        "shortlist_scores": r.shortlist_scores,
        "pool_short": r.pool_short,
    });
    if cfg.keep_trajectories {
        out["candidates"] = serde_json::to_value(&r.candidates)?;
    }
    write_json(args.out.as_deref(), &out)
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
pub struct BaselineArgs {
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub query: QueryArgs,
    /// Neighbors per attribute used when reporting quality.
    #[arg(long)]
    pub k_eval: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_baseline(args: &BaselineArgs, _ctx: &Context) -> Result<()> {
    let space = read_space(&require(&args.space, "space")?)?;
    let (query, targets) = args.query.resolve(&space)?;
    let k_eval = SearchParams {
        k_eval: args.k_eval,
        ..SearchParams::default()
    }
    .k_eval()?;
    let sc = SearchContext::new(&space, &query)?;
    let point = sc.interpolation_baseline();
    let out = json!({
        "metadata": {"k_eval": k_eval},
        "targets": targets,
        "weights": query.weights(),
        "point": point,
        "quality": sc.quality(&point, k_eval)?,
    });
    write_json(args.out.as_deref(), &out)
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub query: QueryArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub params: SearchParams,
    /// Comma-separated K values; `full` or 0 means every point.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<String>>,
    /// Output table; `.csv` writes CSV, anything else JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const DEFAULT_SWEEP: [&str; 6] = ["1", "5", "20", "100", "200", "full"];

/// Parses K values, dropping repeats (with a warning) and keeping the first
/// occurrence order.
pub fn parse_ks(raw: &[String]) -> Result<Vec<usize>> {
    let mut ks = Vec::new();
    for s in raw {
        let k = match s.trim() {
            "full" | "0" => FULL_K,
            t => t
                .parse::<usize>()
                .map_err(|_| CliError::usage(format!("invalid k value {t:?}")))?,
        };
        if ks.contains(&k) {
            log::warn!("duplicate k value {} ignored", k_display(k));
        } else {
            ks.push(k);
        }
    }
    if ks.len() < 2 {
        return Err(CliError::usage("a sweep needs at least two distinct k values"));
    }
    Ok(ks)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub k: Value,
    pub quality: f64,
    pub baseline_quality: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub point: Vec<f64>,
}

pub fn run_sweep(args: &SweepArgs, ctx: &Context) -> Result<()> {
    let space = read_space(&require(&args.space, "space")?)?;
    let (query, targets) = args.query.resolve(&space)?;
    let raw = args
        .ks
        .clone()
        .unwrap_or_else(|| DEFAULT_SWEEP.iter().map(|s| s.to_string()).collect());
    let ks = parse_ks(&raw)?;
    let k_eval = args.params.k_eval()?;
    let sc = SearchContext::new(&space, &query)?;
    let baseline = sc.interpolation_baseline();
    let baseline_quality = sc.quality(&baseline, k_eval)?;
    let mut rows = Vec::with_capacity(ks.len());
    for &k in &ks {
        let mut cfg = args.params.config(ctx.seed);
        cfg.k = k;
        eprintln!("sweep: K={} M={} S={}", k_display(k), cfg.m, cfg.max_iters);
        let r = sc.search(&cfg)?;
        rows.push(SweepRow {
            k: k_json(k),
            quality: sc.quality(&r.point, k_eval)?,
            baseline_quality,
            iterations_run: r.iterations_run,
            converged: r.converged,
            point: r.point,
        });
    }
    match &args.out {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => {
            let mut w = BufWriter::new(File::create(p)?);
            writeln!(w, "k,quality,baseline_quality,iterations_run,converged")?;
            for r in &rows {
                let k = match &r.k {
                    Value::String(s) => s.clone(),
                    v => v.to_string(),
                };
                writeln!(w, "{k},{},{},{},{}", r.quality, r.baseline_quality, r.iterations_run, r.converged)?;
            }
            w.flush()?;
            Ok(())
        }
        out => {
            let mut meta = search_metadata(&args.params.config(ctx.seed), k_eval);
            meta["K"] = Value::Array(ks.iter().map(|&k| k_json(k)).collect());
            write_json(
                out.as_deref(),
                &json!({
                    "metadata": meta,
                    "targets": targets,
                    "weights": query.weights(),
                    "baseline": baseline,
                    "rows": rows,
                }),
            )
        }
    }
}
