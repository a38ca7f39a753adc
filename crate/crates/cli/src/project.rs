use std::path::PathBuf;

use attrspace_core::analyze::{build_analysis, export_analysis, Bandwidth, KdeOptions, Overlay, ProjectionMode};
use attrspace_core::AttributeId;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::common::{parse_pair, read_json, read_space, require, Context};
use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Independent,
    Joint,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
pub struct ProjectArgs {
    #[arg(long)]
    pub space: Option<PathBuf>,
    /// Attributes to project as ASPECT=ATTRIBUTE; all attributes when absent.
    #[arg(long = "attributes", value_delimiter = ',', value_name = "ASPECT=ATTRIBUTE")]
    pub attributes: Option<Vec<String>>,
    /// One projection per attribute, or one shared projection.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Add a kernel density grid to every scatter.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub kde: Option<bool>,
    /// Grid cells per axis.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// `scott` or a fixed bandwidth.
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// Point to overlay, as NAME=FILE where FILE is a search or baseline
    /// result.
    #[arg(long = "overlay", value_name = "NAME=FILE")]
    pub overlay: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_bandwidth(s: &str) -> Result<Bandwidth> {
    if s == "scott" {
        return Ok(Bandwidth::Scott);
    }
    match s.parse::<f64>() {
        Ok(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
        _ => Err(CliError::usage(format!("bandwidth must be `scott` or a positive number, got {s:?}"))),
    }
}

fn read_overlay(spec: &str) -> Result<Overlay> {
    let (name, path) = spec
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("expected NAME=FILE, got {spec:?}")))?;
    let value = read_json(path.as_ref())?;
    let vector: Vec<f64> = serde_json::from_value(
        value
            .get("point")
            .cloned()
            .ok_or_else(|| CliError::usage(format!("{path} has no \"point\" field")))?,
    )?;
    Ok(Overlay {
        name: name.to_string(),
        vector,
    })
}

/// Writes the analysis bundle and returns a summary.
pub fn run(args: &ProjectArgs, _ctx: &Context) -> Result<Value> {
    let out = require(&args.out, "out")?;
    let space = read_space(&require(&args.space, "space")?)?;
    let attributes: Vec<AttributeId> = match &args.attributes {
        None => space.schema().attribute_ids().collect(),
        Some(list) => list
            .iter()
            .map(|s| {
                let (a, t) = parse_pair(s)?;
                space
                    .schema()
                    .resolve(&a, &t)
                    .ok_or_else(|| CliError::usage(format!("unknown attribute {s}")))
            })
            .collect::<Result<_>>()?,
    };
    let mode = match args.mode.unwrap_or(ModeArg::Independent) {
        ModeArg::Independent => ProjectionMode::Independent,
        ModeArg::Joint => ProjectionMode::Joint,
    };
    let kde = if args.kde.unwrap_or(false) {
        let d = KdeOptions::default();
        Some(KdeOptions {
            resolution: args.resolution.unwrap_or(d.resolution),
            bandwidth: args.bandwidth.as_deref().map(parse_bandwidth).transpose()?.unwrap_or(d.bandwidth),
        })
    } else {
        None
    };
    let overlays = args
        .overlay
        .iter()
        .flatten()
        .map(|s| read_overlay(s))
        .collect::<Result<Vec<_>>>()?;
    let bundle = build_analysis(&space, &attributes, mode, kde, &overlays)?;
    export_analysis(&bundle, &out)?;
    Ok(json!({
        "mode": mode,
        "panels": bundle.panels.len(),
        "overlays": overlays.iter().map(|o| &o.name).collect::<Vec<_>>(),
        "out": out,
    }))
}
