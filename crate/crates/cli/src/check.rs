//! Built-in verification suites.

use std::path::PathBuf;

use attrspace_core::intersect::{AttributeQuery, SearchConfig, SearchContext, FULL_K};
use attrspace_core::neighbors::{knn_brute, IndexKind, SpatialIndex};
use attrspace_core::rng::Stream;
use attrspace_core::synth::{build_scenario, Scenario};
use attrspace_core::trainer::{
    draw_noise, grad_check, loss_gap_batch, loss_gap_exact, AspectMemory, Batch, Block, LossWeights, ModelDims,
    ToyModel,
};
use attrspace_core::{AttributeSpace, LabeledPoint, PointMatrix};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::common::{write_json, Context};
use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fault {
    None,
    /// Corrupt one neighbor of every index answer.
    Knn,
    /// Corrupt the decoder gradient.
    Grad,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
pub struct CheckArgs {
    /// Inject a fault to confirm that the matching suite fails.
    #[arg(long, value_enum)]
    pub fault: Option<Fault>,
    /// Number of random nearest-neighbor cases.
    #[arg(long)]
    pub cases: Option<usize>,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Invariant {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn knn_suite(seed: u64, cases: usize, fault: bool) -> Result<Invariant> {
    let dims = [2, 8, 32, 768];
    let mut failures = 0;
    for case in 0..cases {
        let mut s = Stream::derive(seed, case as u64, "check-knn");
        let d = dims[case % dims.len()];
        let n = 1 + s.below(if d == 768 { 400 } else { 2000 });
        let k = 1 + s.below(n + 3);
        let integer = s.below(2) == 0;
        let mut draw = || if integer { (s.below(5) as f64) - 2.0 } else { s.normal() };
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| draw()).collect()).collect();
        let query: Vec<f64> = (0..d).map(|_| draw()).collect();
        let points = PointMatrix::from_rows(&rows)?;
        let want = knn_brute(&points, &query, k)?;
        let index = SpatialIndex::build(points, None, IndexKind::Auto)?;
        let mut got = index.query(&query, k)?;
        if fault {
            got.ordinals[0] = (got.ordinals[0] + 1) % n.max(2);
        }
        if got.ordinals != want.ordinals {
            failures += 1;
        }
    }
    Ok(Invariant {
        name: "knn_equivalence",
        passed: failures == 0,
        detail: format!("{failures} of {cases} cases differ from brute force"),
    })
}

fn grad_suite(seed: u64, fault: bool) -> Result<Invariant> {
    let dims = ModelDims {
        input: 6,
        latent: 4,
        hidden: 8,
        dec_hidden: 8,
        heads: vec![2, 3],
    };
    let patterns = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (0.5, 0.2, 0.3)];
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for m in 0..3u64 {
        let (model, batch, memory, noise) = grad_fixture(seed.wrapping_add(m), &dims)?;
        for p in patterns {
            let w = LossWeights::new(p.0, p.1, p.2)?;
            let fault = fault.then_some(Block::Theta);
            let r = grad_check(&model, &batch, &memory, &w, 1e-3, &noise, 1e-5, 1e-3, fault)?;
            worst = r.blocks.iter().map(|b| b.max_rel_err).fold(worst, f64::max);
            for b in r.failing_blocks() {
                if !failed.contains(&b.to_string()) {
                    failed.push(b.to_string());
                }
            }
        }
    }
    Ok(Invariant {
        name: "gradient_check",
        passed: failed.is_empty(),
        detail: if failed.is_empty() {
            format!("max relative error {worst:.3e}")
        } else {
            format!("failing blocks: {}", failed.join(", "))
        },
    })
}

/// Random model with non-zero classifier heads, a batch of aspect 1, memory
/// for aspect 0, and frozen noise.
pub fn grad_fixture(seed: u64, dims: &ModelDims) -> Result<(ToyModel, Batch, AspectMemory, PointMatrix)> {
    let mut model = ToyModel::init(dims, seed)?;
    let mut s = Stream::derive(seed, 0, "grad-fixture");
    for h in model.heads.iter_mut() {
        h.w.iter_mut().for_each(|w| *w = s.normal());
        h.b.iter_mut().for_each(|b| *b = 0.1 * s.normal());
    }
    let classes = dims.heads[1];
    let inputs = draw_noise(&mut s, 8, dims.input);
    let labels = (0..8).map(|_| s.below(classes)).collect();
    let batch = Batch::new(1, inputs, labels)?;
    let mut memory = AspectMemory::new(dims.heads.len());
    memory.set(0, (0..dims.latent).map(|_| s.normal()).collect());
    let noise = draw_noise(&mut s, 8, dims.latent);
    Ok((model, batch, memory, noise))
}

fn small_three_aspect(seed: u64, per_attribute: usize) -> Result<AttributeSpace> {
    let mut sc = Scenario::three_aspect(8, seed);
    for a in sc.aspects.iter_mut() {
        for t in a.attributes.iter_mut() {
            t.count = per_attribute;
        }
    }
    Ok(build_scenario(&sc)?)
}

fn gap_suite(seed: u64) -> Result<Invariant> {
    let space = small_three_aspect(seed, 200)?;
    let model = ToyModel::init(&ModelDims::for_schema(space.schema(), 8, 4, 8), seed)?;
    let latent = model.encode_space(&space)?;
    let exact = loss_gap_exact(&latent)?;
    let mut memory = AspectMemory::from_centers(latent.aspect_centers()?);
    let mut round = 0.0;
    for a in 0..latent.schema().num_aspects() {
        let (loss, next) = loss_gap_batch(&memory, &latent.points().select(&latent.aspect_ordinals(a)), a)?;
        round += loss;
        memory = next;
    }
    let err = (round - 2.0 * exact).abs();
    Ok(Invariant {
        name: "gap_round_sum",
        passed: err <= 1e-9,
        detail: format!("|round - 2 exact| = {err:.3e}"),
    })
}

fn random_pair_space(seed: u64) -> Result<AttributeSpace> {
    let mut s = Stream::derive(seed, 0, "check-space");
    let d = 2 + s.below(3);
    let mut records = Vec::new();
    for (aspect, attribute, shift) in [("sentiment", "positive", -1.0), ("topic", "sports", 1.0)] {
        for i in 0..(20 + s.below(60)) {
            records.push(LabeledPoint {
                id: format!("{aspect}/{i}"),
                aspect: aspect.into(),
                attribute: attribute.into(),
                vector: (0..d).map(|j| s.normal() + if j == 0 { shift } else { 0.0 }).collect(),
            });
        }
    }
    Ok(AttributeSpace::from_points(None, records)?)
}

fn pair_query(space: &AttributeSpace, seed: u64) -> Result<AttributeQuery> {
    let mut s = Stream::derive(seed, 1, "check-weights");
    let w = [0.1 + s.uniform(), 0.1 + s.uniform()];
    Ok(AttributeQuery::from_names(space, &[("sentiment", "positive"), ("topic", "sports")], &w)?)
}

fn degeneration_suite(seed: u64) -> Result<Invariant> {
    let mut worst = 0.0f64;
    let mut iteration_mismatch = 0;
    for i in 0..10u64 {
        let space = random_pair_space(seed.wrapping_add(i))?;
        let q = pair_query(&space, seed.wrapping_add(i))?;
        let ctx = SearchContext::new(&space, &q)?;
        let cfg = SearchConfig {
            k: FULL_K,
            m: 20,
            seed,
            ..SearchConfig::default()
        };
        let r = ctx.search(&cfg)?;
        let base = ctx.interpolation_baseline();
        worst = r.point.iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        if r.iterations_run != 1 {
            iteration_mismatch += 1;
        }
    }
    Ok(Invariant {
        name: "degeneration",
        passed: worst <= 1e-9 && iteration_mismatch == 0,
        detail: format!("max deviation {worst:.3e}; {iteration_mismatch} runs not converged after one step"),
    })
}

fn translation_suite(seed: u64) -> Result<Invariant> {
    let space = random_pair_space(seed)?;
    let mut s = Stream::derive(seed, 2, "check-offset");
    let offset: Vec<f64> = (0..space.dim()).map(|_| 10.0 * s.normal()).collect();
    let moved = space.translated(&offset);
    let cfg = SearchConfig {
        k: 10,
        m: 30,
        seed,
        ..SearchConfig::default()
    };
    let a = SearchContext::new(&space, &pair_query(&space, seed)?)?.search(&cfg)?;
    let b = SearchContext::new(&moved, &pair_query(&moved, seed)?)?.search(&cfg)?;
    let worst = a
        .point
        .iter()
        .zip(&b.point)
        .zip(&offset)
        .map(|((x, y), v)| (x + v - y).abs())
        .fold(0.0, f64::max);
    Ok(Invariant {
        name: "translation_equivariance",
        passed: worst <= 1e-9,
        detail: format!("max deviation {worst:.3e}"),
    })
}

pub fn run(args: &CheckArgs, ctx: &Context) -> Result<()> {
    let fault = args.fault.unwrap_or(Fault::None);
    let cases = args.cases.unwrap_or(300);
    let invariants = vec![
        knn_suite(ctx.seed, cases, fault == Fault::Knn)?,
        grad_suite(ctx.seed, fault == Fault::Grad)?,
        gap_suite(ctx.seed)?,
        degeneration_suite(ctx.seed)?,
        translation_suite(ctx.seed)?,
    ];
    for inv in &invariants {
        eprintln!("{} {}: {}", if inv.passed { "PASS" } else { "FAIL" }, inv.name, inv.detail);
    }
    let passed = invariants.iter().all(|i| i.passed);
    write_json(
        args.out.as_deref(),
        &serde_json::json!({"passed": passed, "seed": ctx.seed, "invariants": invariants}),
    )?;
    if passed {
        Ok(())
    } else {
        let failed: Vec<&str> = invariants.iter().filter(|i| !i.passed).map(|i| i.name).collect();
        Err(CliError::Verification(format!("failed: {}", failed.join(", "))))
    }
}
