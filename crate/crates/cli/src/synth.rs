use std::path::PathBuf;

use attrspace_core::space::{save_space, Format};
use attrspace_core::synth::{build_scenario_detailed, Scenario, ScenarioName};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::common::{read_json, require, Context};
use crate::error::{CliError, Result};

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Preset name: symmetric-overlap, skewed-tails, noise-contaminated or
    /// three-aspect.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Scenario description as JSON, instead of a preset.
    #[arg(long)]
    pub scenario_file: Option<PathBuf>,
    /// Dimension of the three-aspect preset (at least 8).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Override the fraction of relabeled points.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Output file; `.bin`/`.atsp` selects the binary format, anything else JSONL.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn scenario(args: &SynthArgs, ctx: &Context) -> Result<Scenario> {
    let mut sc = match (&args.scenario, &args.scenario_file) {
        (Some(_), Some(_)) => return Err(CliError::usage("give either --scenario or --scenario-file")),
        (None, None) => return Err(CliError::usage("missing required --scenario")),
        (None, Some(path)) => {
            let mut sc: Scenario = serde_json::from_value(read_json(path)?)?;
            sc.seed = ctx.seed;
            sc
        }
        (Some(name), None) if name == "three-aspect" => {
            let dim = args.dim.unwrap_or(8);
            if dim < 8 {
                return Err(CliError::usage("three-aspect needs --dim of at least 8"));
            }
            Scenario::three_aspect(dim, ctx.seed)
        }
        (Some(name), None) => {
            let sc = Scenario::preset(name, ctx.seed)?;
            if args.dim.is_some_and(|d| d != sc.dim) {
                return Err(CliError::usage(format!("preset {name} has fixed dimension {}", sc.dim)));
            }
            sc
        }
    };
    if let Some(noise) = args.noise {
        sc.noise = noise;
    }
    if args.dim.is_some() && sc.name == ScenarioName::Custom && args.dim != Some(sc.dim) {
        return Err(CliError::usage("--dim does not match the scenario file"));
    }
    sc.validate()?;
    Ok(sc)
}

/// Writes the space and returns a summary.
pub fn run(args: &SynthArgs, ctx: &Context) -> Result<Value> {
    let out = require(&args.out, "out")?;
    let sc = scenario(args, ctx)?;
    let built = build_scenario_detailed(&sc)?;
    save_space(&built.space, &out, Format::from_path(&out))?;
    Ok(json!({
        "scenario": sc.name,
        "seed": sc.seed,
        "dim": sc.dim,
        "points": built.space.len(),
        "relabeled": built.relabeled.len(),
        "out": out,
    }))
}
