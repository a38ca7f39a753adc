use std::path::PathBuf;

use attrspace_core::analyze::centers_report;
use attrspace_core::space::{save_space, Format};
use attrspace_core::trainer::{save_model, train, LossWeights, ModelDims, ToyModel, TrainConfig};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::{read_space, require, write_json, Context};
use crate::error::Result;

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Labeled input vectors (JSONL or binary).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Hidden width of the encoder and decoder.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Weight of the reconstruction loss.
    #[arg(long)]
    pub w1: Option<f64>,
    /// Weight of the classification loss.
    #[arg(long)]
    pub w2: Option<f64>,
    /// Weight of the aspect-gap loss.
    #[arg(long)]
    pub w3: Option<f64>,
    /// Scale of the latent perturbation.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Fraction of points held out for the accuracy report.
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Latent space output (every input vector encoded).
    #[arg(long)]
    pub out_space: Option<PathBuf>,
    /// Model parameters output.
    #[arg(long)]
    pub out_model: Option<PathBuf>,
    /// Run metadata output; printed to stdout when absent.
    #[arg(long)]
    pub out_meta: Option<PathBuf>,
}

pub const DEFAULT_LATENT_DIM: usize = 8;
pub const DEFAULT_HIDDEN: usize = 32;

impl TrainArgs {
    pub fn config(&self, seed: u64) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let w = LossWeights::default();
        let cfg = TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            lr: self.lr.unwrap_or(d.lr),
            momentum: self.momentum.unwrap_or(d.momentum),
            seed,
            lambda: self.lambda.unwrap_or(d.lambda),
            weights: LossWeights {
                w1: self.w1.unwrap_or(w.w1),
                w2: self.w2.unwrap_or(w.w2),
                w3: self.w3.unwrap_or(w.w3),
            },
            holdout: self.holdout.unwrap_or(d.holdout),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Ablation tags for loss terms switched off.
pub fn ablation_flags(w: &LossWeights) -> Vec<&'static str> {
    let mut flags = Vec::new();
    if w.w1 == 0.0 {
        flags.push("ablation:no-recon");
    }
    if w.w2 == 0.0 {
        flags.push("ablation:no-cls");
    }
    if w.w3 == 0.0 {
        flags.push("ablation:no-gap");
    }
    flags
}

pub fn run(args: &TrainArgs, ctx: &Context) -> Result<()> {
    let data = require(&args.data, "data")?;
    let cfg = args.config(ctx.seed)?;
    let latent_dim = args.latent_dim.unwrap_or(DEFAULT_LATENT_DIM);
    let hidden = args.hidden.unwrap_or(DEFAULT_HIDDEN);
    eprintln!(
        "train: w1={} w2={} w3={} lambda={:e} lr={:e} momentum={} batch={} epochs={} latent={} hidden={} seed={}",
        cfg.weights.w1,
        cfg.weights.w2,
        cfg.weights.w3,
        cfg.lambda,
        cfg.lr,
        cfg.momentum,
        cfg.batch_size,
        cfg.epochs,
        latent_dim,
        hidden,
        cfg.seed
    );
    let space = read_space(&data)?;
    let dims = ModelDims::for_schema(space.schema(), space.dim(), latent_dim, hidden);
    let model = ToyModel::init(&dims, cfg.seed)?;
    let out = train(&space, model, &cfg)?;

    if let Some(p) = &args.out_space {
        save_space(&out.latent, p, Format::from_path(p))?;
    }
    if let Some(p) = &args.out_model {
        save_model(&out.model, p)?;
    }
    let flags = ablation_flags(&cfg.weights);
    for f in &flags {
        eprintln!("train: {f}");
    }
    let meta = json!({
        "header": {
            "w1": cfg.weights.w1,
            "w2": cfg.weights.w2,
            "w3": cfg.weights.w3,
            "lambda": cfg.lambda,
            "lr": cfg.lr,
            "momentum": cfg.momentum,
            "batch_size": cfg.batch_size,
            "epochs": cfg.epochs,
            "holdout": cfg.holdout,
            "latent_dim": latent_dim,
            "hidden": hidden,
            "seed": cfg.seed,
        },
        "flags": flags,
        "model": dims,
        "final_loss": out.history.last().map(|e| e.loss),
        "accuracy": out.accuracy,
        "centers": centers_report(&out.latent).ok(),
        "history": out.history,
    });
    write_json(args.out_meta.as_deref(), &meta)
}
