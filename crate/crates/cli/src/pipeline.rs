//! synth -> train -> search -> project in one working directory. Every stage
//! writes its outputs there and is skipped when they already exist.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::{read_space, write_json, Context};
use crate::config::{merge, ConfigFile};
use crate::error::{CliError, Result};
use crate::project::ProjectArgs;
use crate::search::{BaselineArgs, SearchArgs};
use crate::synth::SynthArgs;
use crate::train::TrainArgs;
use crate::{project, search, synth, train};

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
pub struct PipelineArgs {
    /// Directory for every stage's outputs.
    #[arg(long)]
    pub workdir: Option<PathBuf>,
    /// Preset name, overriding the config's synth section.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Rerun stages whose outputs already exist.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub force: Option<bool>,
}

fn done(paths: &[&Path], force: bool) -> bool {
    !force && paths.iter().all(|p| p.exists())
}

fn stage(name: &str, skipped: bool) {
    eprintln!("pipeline: {name}{}", if skipped { " (up to date)" } else { "" });
}

pub fn run(args: &PipelineArgs, config: &ConfigFile, ctx: &Context) -> Result<()> {
    let workdir = args.workdir.clone().unwrap_or_else(|| PathBuf::from("attrspace-run"));
    fs::create_dir_all(&workdir)?;
    let force = args.force.unwrap_or(false);
    let path = |name: &str| workdir.join(name);

    let mut synth_args: SynthArgs = merge(&SynthArgs::default(), config.section("synth"))?;
    if args.scenario.is_some() {
        synth_args.scenario = args.scenario.clone();
        synth_args.scenario_file = None;
    }
    if synth_args.scenario.is_none() && synth_args.scenario_file.is_none() {
        return Err(CliError::usage("pipeline needs a scenario (--scenario or synth.scenario in the config)"));
    }
    synth_args.out = Some(path("space.jsonl"));
    let skip = done(&[&path("space.jsonl")], force);
    stage("synth", skip);
    if !skip {
        synth::run(&synth_args, ctx)?;
    }

    let mut train_args: TrainArgs = merge(&TrainArgs::default(), config.section("train"))?;
    train_args.data = Some(path("space.jsonl"));
    train_args.out_space = Some(path("latent.jsonl"));
    train_args.out_model = Some(path("model.bin"));
    train_args.out_meta = Some(path("train.json"));
    let skip = done(&[&path("latent.jsonl"), &path("model.bin"), &path("train.json")], force);
    stage("train", skip);
    if !skip {
        train::run(&train_args, ctx)?;
    }

    let mut search_args: SearchArgs = merge(&SearchArgs::default(), config.section("search"))?;
    search_args.space = Some(path("latent.jsonl"));
    search_args.out = Some(path("search.json"));
    if search_args.query.target.is_none() && search_args.query.combination.is_none() {
        let latent = read_space(&path("latent.jsonl"))?;
        let schema = latent.schema();
        search_args.query.target = Some(
            schema
                .aspects()
                .iter()
                .map(|a| format!("{}={}", a.name, a.attributes[0]))
                .collect(),
        );
        search_args.query.weight = Some(vec![1.0; schema.num_aspects()]);
    }
    let baseline_args = BaselineArgs {
        space: search_args.space.clone(),
        query: search_args.query.clone(),
        k_eval: search_args.params.k_eval,
        out: Some(path("baseline.json")),
    };
    let skip = done(&[&path("search.json"), &path("baseline.json")], force);
    stage("search", skip);
    if !skip {
        search::run_search(&search_args, ctx)?;
        search::run_baseline(&baseline_args, ctx)?;
    }

    let mut project_args: ProjectArgs = merge(&ProjectArgs::default(), config.section("project"))?;
    project_args.space = Some(path("latent.jsonl"));
    project_args.out = Some(path("analysis.json"));
    if project_args.attributes.is_none() {
        project_args.attributes = search_args.query.target.clone();
    }
    project_args.overlay = Some(vec![
        format!("baseline={}", path("baseline.json").display()),
        format!("searched={}", path("search.json").display()),
    ]);
    let skip = done(&[&path("analysis.json")], force);
    stage("project", skip);
    if !skip {
        project::run(&project_args, ctx)?;
    }

    write_json(
        None,
        &json!({
            "workdir": workdir,
            "outputs": ["space.jsonl", "latent.jsonl", "model.bin", "train.json", "search.json", "baseline.json", "analysis.json"],
        }),
    )
}
