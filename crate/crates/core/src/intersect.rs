//! Intersection search over an attribute space.
//!
//! Candidates start at dataset points close to every queried attribute and
//! repeatedly move to the weighted average of their per-attribute K-nearest
//! neighbor means. The candidate whose neighborhoods are most balanced wins.
//! The interpolation baseline (weighted mean of attribute centers) is the
//! `K = all` limit of the same update.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighbors::{IndexKind, SpatialIndex};
use crate::points::{distance, PointMatrix};
use crate::rng::Stream;
use crate::space::{AttributeId, AttributeSpace};

/// `k` value meaning "every point of the attribute".
pub const FULL_K: usize = usize::MAX;

/// A combination of attributes from distinct aspects, with one weight each.
/// Individual weights may be negative; their sum must be positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeQuery {
    targets: Vec<AttributeId>,
    weights: Vec<f64>,
}

impl AttributeQuery {
    pub fn new(space: &AttributeSpace, targets: Vec<AttributeId>, weights: Vec<f64>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::invalid("query has no targets"));
        }
        if targets.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} targets but {} weights",
                targets.len(),
                weights.len()
            )));
        }
        let schema = space.schema();
        for (i, t) in targets.iter().enumerate() {
            if t.aspect >= schema.num_aspects() || t.attribute >= schema.aspects()[t.aspect].attributes.len() {
                return Err(Error::invalid(format!("target {i} is not in the schema")));
            }
            if targets[..i].iter().any(|o| o.aspect == t.aspect) {
                return Err(Error::invalid(format!(
                    "aspect {:?} is targeted more than once",
                    schema.aspect_name(t.aspect)
                )));
            }
            if space.attribute_ordinals(*t).is_empty() {
                return Err(Error::invalid(format!("attribute {} has no points", schema.label(*t))));
            }
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights must be finite"));
        }
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            return Err(Error::invalid("weights sum to zero"));
        }
        if total < 0.0 {
            return Err(Error::invalid("weights sum to a negative value"));
        }
        Ok(AttributeQuery { targets, weights })
    }

    /// Resolves `(aspect, attribute)` names against the space's schema.
    pub fn from_names(space: &AttributeSpace, targets: &[(&str, &str)], weights: &[f64]) -> Result<Self> {
        let ids = targets
            .iter()
            .map(|(a, t)| {
                space
                    .schema()
                    .resolve(a, t)
                    .ok_or_else(|| Error::invalid(format!("unknown attribute {a}={t}")))
            })
            .collect::<Result<_>>()?;
        Self::new(space, ids, weights.to_vec())
    }

    pub fn targets(&self) -> &[AttributeId] {
        &self.targets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `w_t / sum(w)`, each a single rounded division, so scaling all weights
    /// by a constant that keeps them and their sum exact changes nothing.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Lowest balance score wins.
    #[default]
    Deterministic,
    /// Seeded uniform pick from the shortlist.
    Stochastic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Neighbors per attribute; [`FULL_K`] (or anything at least the
    /// attribute size) uses every point.
    pub k: usize,
    /// Number of candidates.
    pub m: usize,
    /// Maximum number of update steps per candidate.
    pub max_iters: usize,
    /// Initial pool size is `pool_factor * m`, capped by the available points.
    pub pool_factor: usize,
    /// A candidate stops once a step moves it less than this.
    pub conv_tol: f64,
    pub selection: Selection,
    pub top_c: usize,
    pub seed: u64,
    /// Keep every intermediate position, not only the first and last.
    pub keep_trajectories: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k: 200,
            m: 1000,
            max_iters: 15,
            pool_factor: 10,
            conv_tol: 1e-8,
            selection: Selection::Deterministic,
            top_c: 10,
            seed: 0,
            keep_trajectories: true,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.m == 0 {
            return Err(Error::invalid("m must be at least 1"));
        }
        if self.top_c == 0 {
            return Err(Error::invalid("top_c must be at least 1"));
        }
        if self.pool_factor == 0 {
            return Err(Error::invalid("pool_factor must be at least 1"));
        }
        if !(self.conv_tol >= 0.0) {
            return Err(Error::invalid("conv_tol must be non-negative"));
        }
        Ok(())
    }
}

fn select_scored(scores: &[f64], config: &SearchConfig) -> (usize, Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order.truncate(config.top_c);
    let chosen = match config.selection {
        Selection::Deterministic => order[0],
        Selection::Stochastic => {
            let mut s = Stream::derive(config.seed, 0, "select");
            order[s.below(order.len())]
        }
    };
    let shortlist_scores = order.iter().map(|&i| scores[i]).collect();
    (chosen, order, shortlist_scores)
}

/// Initial candidates chosen from the sampled pool.
#[derive(Clone, Debug, PartialEq)]
pub struct InitCandidates {
    pub ordinals: Vec<usize>,
    pub scores: Vec<f64>,
    pub vectors: PointMatrix,
    /// Set when the pool held fewer than `m` points.
    pub pool_short: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrace {
    /// Ordinal of the dataset point the candidate started from.
    pub start_ordinal: usize,
    pub trajectory: Vec<Vec<f64>>,
    /// Steps that moved the candidate by at least `conv_tol`.
    pub iterations: usize,
    pub converged: bool,
    pub score: f64,
}

impl CandidateTrace {
    pub fn final_position(&self) -> &[f64] {
        self.trajectory.last().expect("trajectory is never empty")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionResult {
    pub point: Vec<f64>,
    /// Index into `candidates` of the chosen candidate.
    pub selected: usize,
    pub candidates: Vec<CandidateTrace>,
    /// Largest per-candidate iteration count.
    pub iterations_run: usize,
    /// True when every candidate converged.
    pub converged: bool,
    /// Candidate indices with the lowest scores, ascending by score.
    pub shortlist: Vec<usize>,
    pub shortlist_scores: Vec<f64>,
    pub pool_short: bool,
}

struct Target {
    index: SpatialIndex,
    center: Vec<f64>,
}

/// A query bound to a space with one exact index per queried attribute.
/// Read-only and shareable across threads.
pub struct SearchContext<'a> {
    space: &'a AttributeSpace,
    query: AttributeQuery,
    weights: Vec<f64>,
    targets: Vec<Target>,
}

impl<'a> SearchContext<'a> {
    pub fn new(space: &'a AttributeSpace, query: &AttributeQuery) -> Result<Self> {
        Self::with_index_kind(space, query, IndexKind::Auto)
    }

    pub fn with_index_kind(space: &'a AttributeSpace, query: &AttributeQuery, kind: IndexKind) -> Result<Self> {
        let query = AttributeQuery::new(space, query.targets.clone(), query.weights.clone())?;
        let targets = query
            .targets
            .iter()
            .map(|&t| {
                let ords = space.attribute_ordinals(t);
                let index = SpatialIndex::build(space.points().select(ords), Some(ords.to_vec()), kind)?;
                let center = space.center(ords)?;
                Ok(Target { index, center })
            })
            .collect::<Result<_>>()?;
        Ok(SearchContext {
            space,
            weights: query.normalized_weights(),
            query,
            targets,
        })
    }

    pub fn space(&self) -> &AttributeSpace {
        self.space
    }

    pub fn query(&self) -> &AttributeQuery {
        &self.query
    }

    fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.space.dim() {
            return Err(Error::Dim {
                expected: self.space.dim(),
                found: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("point contains NaN or infinite values"));
        }
        Ok(())
    }

    fn weighted_sum<'b>(&self, parts: impl Iterator<Item = &'b [f64]>) -> Vec<f64> {
        let mut out = vec![0.0; self.space.dim()];
        for (w, part) in self.weights.iter().zip(parts) {
            for (o, x) in out.iter_mut().zip(part) {
                *o += w * x;
            }
        }
        out
    }

    fn neighbor_mean(&self, target: &Target, point: &[f64], k: usize) -> Result<Vec<f64>> {
        if k >= target.index.len() {
            return Ok(target.center.clone());
        }
        let nn = target.index.query_local(point, k)?;
        let mut mean = vec![0.0; point.len()];
        for &i in &nn.ordinals {
            for (m, x) in mean.iter_mut().zip(target.index.local_point(i)) {
                *m += x;
            }
        }
        let n = nn.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Ok(mean)
    }

    fn neighbor_means(&self, target: &Target, points: &PointMatrix, k: usize) -> Result<Vec<Vec<f64>>> {
        if k >= target.index.len() {
            return Ok(vec![target.center.clone(); points.len()]);
        }
        let dim = points.dim();
        Ok(target
            .index
            .query_batch_local(points, k)?
            .into_iter()
            .map(|nn| {
                let mut mean = vec![0.0; dim];
                for &i in &nn.ordinals {
                    for (m, x) in mean.iter_mut().zip(target.index.local_point(i)) {
                        *m += x;
                    }
                }
                let n = nn.len() as f64;
                mean.iter_mut().for_each(|m| *m /= n);
                mean
            })
            .collect())
    }

    /// [`SearchContext::step`] for every row of `points`.
    pub fn step_batch(&self, points: &PointMatrix, k: usize) -> Result<PointMatrix> {
        for p in points.rows() {
            self.check_point(p)?;
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let means = self
            .targets
            .iter()
            .map(|t| self.neighbor_means(t, points, k))
            .collect::<Result<Vec<_>>>()?;
        let mut out = PointMatrix::new(points.dim());
        for i in 0..points.len() {
            out.push(&self.weighted_sum(means.iter().map(|m| m[i].as_slice())))?;
        }
        Ok(out)
    }

    /// One update: weighted average of the per-attribute means of the `k`
    /// nearest points, normalized by the weight sum.
    pub fn step(&self, candidate: &[f64], k: usize) -> Result<Vec<f64>> {
        self.check_point(candidate)?;
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let means = self
            .targets
            .iter()
            .map(|t| self.neighbor_mean(t, candidate, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.weighted_sum(means.iter().map(Vec::as_slice)))
    }

    /// Weighted mean of the attribute centers.
    pub fn interpolation_baseline(&self) -> Vec<f64> {
        self.weighted_sum(self.targets.iter().map(|t| t.center.as_slice()))
    }

    /// Balance score: the worst, over target attributes, of the mean distance
    /// from `point` to its `k_eval` nearest points of that attribute. Lower is
    /// better.
    pub fn quality(&self, point: &[f64], k_eval: usize) -> Result<f64> {
        self.check_point(point)?;
        let mut worst = f64::NEG_INFINITY;
        for t in &self.targets {
            let nn = t.index.query_local(point, k_eval)?;
            let mean = nn.distances.iter().sum::<f64>() / nn.len() as f64;
            worst = worst.max(mean);
        }
        Ok(worst)
    }

    /// [`SearchContext::quality`] for every row of `points`.
    pub fn quality_batch(&self, points: &PointMatrix, k_eval: usize) -> Result<Vec<f64>> {
        for p in points.rows() {
            self.check_point(p)?;
        }
        let mut worst = vec![f64::NEG_INFINITY; points.len()];
        for t in &self.targets {
            for (w, nn) in worst.iter_mut().zip(t.index.query_batch_local(points, k_eval)?) {
                let mean = nn.distances.iter().sum::<f64>() / nn.len() as f64;
                *w = w.max(mean);
            }
        }
        Ok(worst)
    }

    /// Samples the pool from the targets' points and keeps the `m` points
    /// with the smallest mean distance to the nearest point of each target.
    pub fn init_candidates(&self, config: &SearchConfig) -> Result<InitCandidates> {
        config.validate()?;
        let mut union: Vec<usize> = self
            .query
            .targets
            .iter()
            .flat_map(|&t| self.space.attribute_ordinals(t).iter().copied())
            .collect();
        union.sort_unstable();
        union.dedup();
        let pool_size = config.pool_factor.saturating_mul(config.m).min(union.len());
        let mut stream = Stream::derive(config.seed, 0, "init-pool");
        let pool: Vec<usize> = stream
            .sample_without_replacement(union.len(), pool_size)
            .into_iter()
            .map(|i| union[i])
            .collect();
        // A pool point's distance to its own attribute is zero; only the
        // other targets are queried.
        let mut nearest = vec![vec![0.0; pool.len()]; self.targets.len()];
        for (ti, (t, out)) in self.targets.iter().zip(nearest.iter_mut()).enumerate() {
            let target = self.query.targets[ti];
            let outside: Vec<usize> = (0..pool.len()).filter(|&j| self.space.label(pool[j]) != target).collect();
            let ords: Vec<usize> = outside.iter().map(|&j| pool[j]).collect();
            let found = t.index.query_batch_local(&self.space.points().select(&ords), 1)?;
            for (&j, nn) in outside.iter().zip(found) {
                out[j] = nn.distances[0];
            }
        }
        let n_targets = self.targets.len() as f64;
        let mut scored: Vec<(f64, usize)> = pool
            .iter()
            .enumerate()
            .map(|(j, &o)| {
                let mut total = 0.0;
                for d in &nearest {
                    total += d[j];
                }
                (total / n_targets, o)
            })
            .collect();
        scored.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.truncate(config.m);
        let ordinals: Vec<usize> = scored.iter().map(|s| s.1).collect();
        Ok(InitCandidates {
            vectors: self.space.points().select(&ordinals),
            scores: scored.iter().map(|s| s.0).collect(),
            ordinals,
            pool_short: pool_size < config.m,
        })
    }

    /// Iterates every candidate in lockstep so that each round's neighbor
    /// queries go to the index as one batch. Candidates are independent; the
    /// result equals running each one alone.
    fn run_candidates(&self, init: &InitCandidates, config: &SearchConfig) -> Result<Vec<CandidateTrace>> {
        let mut traces: Vec<CandidateTrace> = init
            .ordinals
            .iter()
            .zip(init.vectors.rows())
            .map(|(&start_ordinal, v)| CandidateTrace {
                start_ordinal,
                trajectory: vec![v.to_vec()],
                iterations: 0,
                converged: false,
                score: f64::NAN,
            })
            .collect();
        let mut positions = init.vectors.clone();
        let mut current = init.vectors.clone();
        let mut active: Vec<usize> = (0..traces.len()).collect();
        for _ in 0..config.max_iters {
            if active.is_empty() {
                break;
            }
            let next = self.step_batch(&current, config.k)?;
            let mut still = Vec::with_capacity(active.len());
            let mut moved = PointMatrix::new(current.dim());
            for (row, &c) in active.iter().enumerate() {
                let trace = &mut traces[c];
                if distance(next.row(row), current.row(row)) < config.conv_tol {
                    trace.converged = true;
                    continue;
                }
                trace.iterations += 1;
                if config.keep_trajectories {
                    trace.trajectory.push(next.row(row).to_vec());
                }
                positions.row_mut(c).copy_from_slice(next.row(row));
                still.push(c);
                moved.push(next.row(row))?;
            }
            active = still;
            current = moved;
        }
        if !config.keep_trajectories {
            for (t, row) in traces.iter_mut().zip(positions.rows()) {
                if t.iterations > 0 {
                    t.trajectory.push(row.to_vec());
                }
            }
        }
        Ok(traces)
    }

    /// Scores final positions and picks one. Returns the chosen index and the
    /// shortlist with its scores.
    pub fn select(&self, finals: &PointMatrix, config: &SearchConfig) -> Result<(usize, Vec<usize>, Vec<f64>)> {
        if finals.is_empty() {
            return Err(Error::invalid("no candidates to select from"));
        }
        let scores = self.quality_batch(finals, config.k)?;
        Ok(select_scored(&scores, config))
    }

    /// Full search: initialize, iterate every candidate independently, select.
    pub fn search(&self, config: &SearchConfig) -> Result<IntersectionResult> {
        let init = self.init_candidates(config)?;
        let mut candidates = self.run_candidates(&init, config)?;
        let mut finals = PointMatrix::new(self.space.dim());
        for c in &candidates {
            finals.push(c.final_position())?;
        }
        if finals.is_empty() {
            return Err(Error::invalid("no candidates to select from"));
        }
        let scores = self.quality_batch(&finals, config.k)?;
        for (c, s) in candidates.iter_mut().zip(&scores) {
            c.score = *s;
        }
        let (selected, shortlist, shortlist_scores) = select_scored(&scores, config);
        Ok(IntersectionResult {
            point: finals.row(selected).to_vec(),
            selected,
            iterations_run: candidates.iter().map(|c| c.iterations).max().unwrap_or(0),
            converged: candidates.iter().all(|c| c.converged),
            candidates,
            shortlist,
            shortlist_scores,
            pool_short: init.pool_short,
        })
    }

    /// Bounding box of the targets' points, widened by `pad` on each side.
    pub fn target_bounds(&self, pad: f64) -> Vec<(f64, f64)> {
        let dim = self.space.dim();
        let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
        for t in &self.targets {
            for row in t.index.points().rows() {
                for (bj, x) in b.iter_mut().zip(row) {
                    bj.0 = bj.0.min(*x);
                    bj.1 = bj.1.max(*x);
                }
            }
        }
        b.iter().map(|&(lo, hi)| (lo - pad, hi + pad)).collect()
    }

    /// Exhaustive minimization of [`quality`](Self::quality) over a regular
    /// grid. `resolution` cells per axis; grid points are the cells' lower
    /// corners `lo + (hi - lo) * i / resolution`, so refining by an integer
    /// factor evaluates a superset of points. Ties go to the
    /// lexicographically first grid index. Only for `dim <= 3`.
    pub fn grid_oracle(&self, bounds: &[(f64, f64)], resolution: usize, k_eval: usize) -> Result<GridOptimum> {
        let dim = self.space.dim();
        if dim > 3 {
            return Err(Error::invalid(format!("grid oracle supports dim <= 3, got {dim}")));
        }
        if bounds.len() != dim {
            return Err(Error::Dim {
                expected: dim,
                found: bounds.len(),
            });
        }
        if resolution == 0 {
            return Err(Error::invalid("resolution must be at least 1"));
        }
        if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
            return Err(Error::invalid("bounds must be finite with lo <= hi"));
        }
        let total = resolution.pow(dim as u32);
        let coord = |cell: usize| -> Vec<f64> {
            let mut rest = cell;
            let mut idx = vec![0; dim];
            for j in (0..dim).rev() {
                idx[j] = rest % resolution;
                rest /= resolution;
            }
            idx.iter()
                .zip(bounds)
                .map(|(&i, &(lo, hi))| lo + (hi - lo) * (i as f64 / resolution as f64))
                .collect()
        };
        let qualities: Vec<f64> = (0..total)
            .into_par_iter()
            .map(|c| self.quality(&coord(c), k_eval))
            .collect::<Result<_>>()?;
        let mut best = 0;
        for (i, q) in qualities.iter().enumerate() {
            if *q < qualities[best] {
                best = i;
            }
        }
        Ok(GridOptimum {
            point: coord(best),
            quality: qualities[best],
            cell: bounds.iter().map(|(lo, hi)| (hi - lo) / resolution as f64).collect(),
        })
    }
}

/// Best grid point found by [`SearchContext::grid_oracle`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    pub point: Vec<f64>,
    pub quality: f64,
    /// Cell width per axis.
    pub cell: Vec<f64>,
}

impl GridOptimum {
    /// Length of a cell diagonal; [`SearchContext::quality`] is 1-Lipschitz,
    /// so moving within one cell changes quality by at most this much.
    pub fn cell_diagonal(&self) -> f64 {
        self.cell.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

pub fn init_candidates(space: &AttributeSpace, query: &AttributeQuery, config: &SearchConfig) -> Result<InitCandidates> {
    SearchContext::new(space, query)?.init_candidates(config)
}

pub fn step(space: &AttributeSpace, query: &AttributeQuery, candidate: &[f64], k: usize) -> Result<Vec<f64>> {
    SearchContext::new(space, query)?.step(candidate, k)
}

pub fn search(space: &AttributeSpace, query: &AttributeQuery, config: &SearchConfig) -> Result<IntersectionResult> {
    SearchContext::new(space, query)?.search(config)
}

pub fn select(
    space: &AttributeSpace,
    query: &AttributeQuery,
    finals: &PointMatrix,
    config: &SearchConfig,
) -> Result<(usize, Vec<usize>, Vec<f64>)> {
    SearchContext::new(space, query)?.select(finals, config)
}

pub fn interpolation_baseline(space: &AttributeSpace, query: &AttributeQuery) -> Result<Vec<f64>> {
    Ok(SearchContext::new(space, query)?.interpolation_baseline())
}

pub fn quality(space: &AttributeSpace, query: &AttributeQuery, point: &[f64], k_eval: usize) -> Result<f64> {
    SearchContext::new(space, query)?.quality(point, k_eval)
}

pub fn grid_oracle(
    space: &AttributeSpace,
    query: &AttributeQuery,
    bounds: &[(f64, f64)],
    resolution: usize,
    k_eval: usize,
) -> Result<GridOptimum> {
    SearchContext::new(space, query)?.grid_oracle(bounds, resolution, k_eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighbors::knn_brute;
    use crate::space::LabeledPoint;
    use proptest::prelude::*;

    fn space_from(groups: &[(&str, &str, Vec<Vec<f64>>)]) -> AttributeSpace {
        let mut records = Vec::new();
        for (aspect, attr, rows) in groups {
            for (i, r) in rows.iter().enumerate() {
                records.push(LabeledPoint {
                    id: format!("{aspect}/{attr}/{i}"),
                    aspect: aspect.to_string(),
                    attribute: attr.to_string(),
                    vector: r.clone(),
                });
            }
        }
        AttributeSpace::from_points(None, records).unwrap()
    }

    fn random_space(seed: u64, dim: usize, n_a: usize, n_b: usize) -> AttributeSpace {
        let mut s = Stream::derive(seed, 0, "test-space");
        let mut rows = |n: usize, shift: f64| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..dim).map(|j| s.normal() + if j == 0 { shift } else { 0.0 }).collect())
                .collect()
        };
        let a = rows(n_a, -1.0);
        let b = rows(n_b, 1.0);
        space_from(&[("sentiment", "positive", a), ("topic", "sports", b)])
    }

    fn pair_query(space: &AttributeSpace, w: [f64; 2]) -> AttributeQuery {
        AttributeQuery::from_names(space, &[("sentiment", "positive"), ("topic", "sports")], &w).unwrap()
    }

    #[test]
    fn batched_calls_match_single_calls() {
        for dim in [3, 40] {
            let space = random_space(9, dim, 120, 90);
            let ctx = SearchContext::new(&space, &pair_query(&space, [1.0, 2.0])).unwrap();
            let pts = space.points().select(&[0, 5, 130, 200, 7]);
            for k in [1, 10, 500] {
                let stepped = ctx.step_batch(&pts, k).unwrap();
                let quality = ctx.quality_batch(&pts, k).unwrap();
                for (i, p) in pts.rows().enumerate() {
                    assert_eq!(stepped.row(i), ctx.step(p, k).unwrap().as_slice());
                    assert_eq!(quality[i].to_bits(), ctx.quality(p, k).unwrap().to_bits());
                }
            }
        }
    }

    // Independent step: brute-force neighbors per attribute, plain means,
    // weights normalized afterwards.
    fn oracle_step(space: &AttributeSpace, query: &AttributeQuery, x: &[f64], k: usize) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        let total: f64 = query.weights().iter().sum();
        for (t, w) in query.targets().iter().zip(query.weights()) {
            let ords = space.attribute_ordinals(*t);
            let pts = space.points().select(ords);
            let nn = knn_brute(&pts, x, k).unwrap();
            for j in 0..x.len() {
                let m = nn.ordinals.iter().map(|&i| pts.row(i)[j]).sum::<f64>() / nn.len() as f64;
                out[j] += w * m / total;
            }
        }
        out
    }

    #[test]
    fn step_hand_example() {
        let space = space_from(&[
            ("sentiment", "positive", vec![vec![0.0], vec![1.0], vec![10.0]]),
            ("topic", "sports", vec![vec![4.0], vec![6.0], vec![-20.0]]),
        ]);
        let q = pair_query(&space, [1.0, 3.0]);
        // Nearest two to 2.0: {1, 0} -> 0.5 and {4, 6} -> 5.0.
        let next = step(&space, &q, &[2.0], 2).unwrap();
        assert!((next[0] - (0.25 * 0.5 + 0.75 * 5.0)).abs() < 1e-15);
    }

    #[test]
    fn step_matches_brute_oracle() {
        for seed in 0..5 {
            let space = random_space(seed, 3, 150, 90);
            let q = pair_query(&space, [2.0, 0.5]);
            let ctx = SearchContext::new(&space, &q).unwrap();
            let mut s = Stream::derive(seed, 1, "queries");
            for k in [1, 7, 40, 89, 90, 500] {
                let x: Vec<f64> = (0..3).map(|_| 2.0 * s.normal()).collect();
                let got = ctx.step(&x, k).unwrap();
                let want = oracle_step(&space, &q, &x, k);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < 1e-12, "k={k}: {g} vs {w}");
                }
            }
        }
    }

    #[test]
    fn full_k_step_is_the_baseline() {
        let space = random_space(3, 4, 60, 80);
        let q = pair_query(&space, [0.3, 0.7]);
        let ctx = SearchContext::new(&space, &q).unwrap();
        let base = ctx.interpolation_baseline();
        assert_eq!(ctx.step(&[5.0, 0.0, -1.0, 2.0], FULL_K).unwrap(), base);
        assert_eq!(ctx.step(&[0.0; 4], 80).unwrap(), base);
        let r = ctx
            .search(&SearchConfig {
                k: FULL_K,
                m: 20,
                ..SearchConfig::default()
            })
            .unwrap();
        assert_eq!(r.point, base);
        assert_eq!(r.iterations_run, 1);
        assert!(r.converged);
    }

    #[test]
    fn baseline_oracle() {
        let space = random_space(9, 2, 30, 50);
        let q = pair_query(&space, [1.0, 4.0]);
        let base = interpolation_baseline(&space, &q).unwrap();
        let mean = |attr: &str, asp: &str| {
            let o = space.subset_ordinals(asp, attr).unwrap();
            (0..2)
                .map(|j| o.iter().map(|&i| space.vector(i)[j]).sum::<f64>() / o.len() as f64)
                .collect::<Vec<_>>()
        };
        let (a, b) = (mean("positive", "sentiment"), mean("sports", "topic"));
        for j in 0..2 {
            assert!((base[j] - (0.2 * a[j] + 0.8 * b[j])).abs() < 1e-13);
        }
    }

    #[test]
    fn quality_oracle() {
        let space = space_from(&[
            ("sentiment", "positive", vec![vec![0.0, 0.0], vec![3.0, 4.0]]),
            ("topic", "sports", vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![9.0, 9.0]]),
        ]);
        let q = pair_query(&space, [1.0, 1.0]);
        // From the origin: positive {0, 5} -> 2.5, sports {1, 2} -> 1.5.
        assert_eq!(quality(&space, &q, &[0.0, 0.0], 2).unwrap(), 2.5);
        // k larger than an attribute uses all of it.
        assert_eq!(quality(&space, &q, &[0.0, 0.0], 1).unwrap(), 1.0);
    }

    #[test]
    fn query_validation() {
        let space = random_space(0, 2, 5, 5);
        let ids = vec![
            space.schema().resolve("sentiment", "positive").unwrap(),
            space.schema().resolve("topic", "sports").unwrap(),
        ];
        assert!(AttributeQuery::new(&space, ids.clone(), vec![1.0, -1.0]).is_err());
        assert!(AttributeQuery::new(&space, ids.clone(), vec![1.0, -2.0]).is_err());
        assert!(AttributeQuery::new(&space, ids.clone(), vec![1.0]).is_err());
        assert!(AttributeQuery::new(&space, ids.clone(), vec![3.0, -1.0]).is_ok());
        assert!(AttributeQuery::new(&space, vec![ids[0], ids[0]], vec![1.0, 1.0]).is_err());
        assert!(AttributeQuery::new(&space, vec![], vec![]).is_err());
        assert!(AttributeQuery::from_names(&space, &[("topic", "cooking")], &[1.0]).is_err());
    }

    #[test]
    fn negative_weight_extrapolates() {
        let space = space_from(&[
            ("sentiment", "positive", vec![vec![0.0]]),
            ("topic", "sports", vec![vec![1.0]]),
        ]);
        let q = pair_query(&space, [-1.0, 2.0]);
        assert_eq!(interpolation_baseline(&space, &q).unwrap(), vec![2.0]);
    }

    #[test]
    fn init_prefers_points_near_both_attributes() {
        let space = space_from(&[
            ("sentiment", "positive", vec![vec![0.0], vec![5.0], vec![-9.0]]),
            ("topic", "sports", vec![vec![5.5], vec![20.0]]),
        ]);
        let q = pair_query(&space, [1.0, 1.0]);
        let cfg = SearchConfig {
            m: 2,
            ..SearchConfig::default()
        };
        let init = init_candidates(&space, &q, &cfg).unwrap();
        // Pool is every point (5 < 20). Scores: 5.0 -> 0.25, 5.5 -> 0.25,
        // 0.0 -> 2.75; the tie is broken by ordinal.
        assert_eq!(init.ordinals, vec![1, 3]);
        assert_eq!(init.scores, vec![0.25, 0.25]);
        assert!(!init.pool_short);
        let short = init_candidates(&space, &q, &SearchConfig { m: 10, ..cfg }).unwrap();
        assert!(short.pool_short);
        assert_eq!(short.ordinals.len(), 5);
    }

    #[test]
    fn zero_iterations_select_an_initial_point() {
        let space = random_space(4, 2, 100, 100);
        let q = pair_query(&space, [1.0, 1.0]);
        let cfg = SearchConfig {
            m: 30,
            max_iters: 0,
            k: 10,
            ..SearchConfig::default()
        };
        let r = search(&space, &q, &cfg).unwrap();
        assert_eq!(r.iterations_run, 0);
        let start = r.candidates[r.selected].start_ordinal;
        assert_eq!(r.point, space.vector(start));
    }

    #[test]
    fn search_is_reproducible_and_selection_consistent() {
        let space = random_space(5, 3, 300, 200);
        let q = pair_query(&space, [1.0, 2.0]);
        let cfg = SearchConfig {
            m: 50,
            k: 20,
            ..SearchConfig::default()
        };
        let a = search(&space, &q, &cfg).unwrap();
        let b = search(&space, &q, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.selected, a.shortlist[0]);
        assert_eq!(a.shortlist.len(), 10);
        assert!(a.shortlist_scores.windows(2).all(|w| w[0] <= w[1]));
        let best = a.candidates.iter().map(|c| c.score).fold(f64::INFINITY, f64::min);
        assert_eq!(a.shortlist_scores[0], best);
        assert_eq!(a.point, a.candidates[a.selected].final_position());

        let st = SearchConfig {
            selection: Selection::Stochastic,
            seed: 11,
            ..cfg.clone()
        };
        let s1 = search(&space, &q, &st).unwrap();
        assert!(s1.shortlist.contains(&s1.selected));
        assert_eq!(s1, search(&space, &q, &st).unwrap());

        let short = search(
            &space,
            &q,
            &SearchConfig {
                keep_trajectories: false,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(short.point, a.point);
        assert!(short.candidates.iter().all(|c| c.trajectory.len() <= 2));
    }

    #[test]
    fn weight_scaling_is_invariant() {
        let space = random_space(6, 2, 120, 120);
        let cfg = SearchConfig {
            m: 40,
            k: 15,
            ..SearchConfig::default()
        };
        let a = search(&space, &pair_query(&space, [1.0, 3.0]), &cfg).unwrap();
        let b = search(&space, &pair_query(&space, [4.0, 12.0]), &cfg).unwrap();
        assert_eq!(a.point, b.point);
    }

    #[test]
    fn translation_equivariance() {
        let space = random_space(7, 3, 200, 150);
        let offset = [10.0, -3.5, 0.25];
        let moved = space.translated(&offset);
        let cfg = SearchConfig {
            m: 40,
            k: 12,
            ..SearchConfig::default()
        };
        let a = search(&space, &pair_query(&space, [1.0, 1.0]), &cfg).unwrap();
        let b = search(&moved, &pair_query(&moved, [1.0, 1.0]), &cfg).unwrap();
        for j in 0..3 {
            assert!((a.point[j] + offset[j] - b.point[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_oracle_is_exhaustive_minimum() {
        let space = random_space(8, 2, 60, 60);
        let q = pair_query(&space, [1.0, 1.0]);
        let ctx = SearchContext::new(&space, &q).unwrap();
        let bounds = ctx.target_bounds(0.5);
        let g = ctx.grid_oracle(&bounds, 17, 5).unwrap();
        for i in 0..17 {
            for j in 0..17 {
                let p = [
                    bounds[0].0 + (bounds[0].1 - bounds[0].0) * (i as f64 / 17.0),
                    bounds[1].0 + (bounds[1].1 - bounds[1].0) * (j as f64 / 17.0),
                ];
                assert!(ctx.quality(&p, 5).unwrap() >= g.quality);
            }
        }
        assert_eq!(ctx.quality(&g.point, 5).unwrap(), g.quality);
        let wide = random_space(0, 4, 5, 5);
        let wq = pair_query(&wide, [1.0, 1.0]);
        assert!(grid_oracle(&wide, &wq, &[(0.0, 1.0); 4], 3, 1).is_err());
    }

    #[test]
    fn config_validation() {
        let space = random_space(0, 2, 5, 5);
        let q = pair_query(&space, [1.0, 1.0]);
        for cfg in [
            SearchConfig { k: 0, ..SearchConfig::default() },
            SearchConfig { m: 0, ..SearchConfig::default() },
            SearchConfig { top_c: 0, ..SearchConfig::default() },
        ] {
            assert!(search(&space, &q, &cfg).is_err());
        }
        assert!(step(&space, &q, &[0.0], 1).is_err());
        assert!(quality(&space, &q, &[f64::NAN, 0.0], 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn nonnegative_step_stays_in_bounding_box(
            seed in 0u64..1000,
            k in 1usize..40,
            w0 in 0.0f64..5.0,
            w1 in 0.01f64..5.0,
            x in -5.0f64..5.0,
            y in -5.0f64..5.0,
        ) {
            let space = random_space(seed, 2, 25, 30);
            let q = pair_query(&space, [w0, w1]);
            let ctx = SearchContext::new(&space, &q).unwrap();
            let next = ctx.step(&[x, y], k).unwrap();
            let b = ctx.target_bounds(1e-12);
            for j in 0..2 {
                prop_assert!(next[j] >= b[j].0 && next[j] <= b[j].1);
            }
            let want = oracle_step(&space, &q, &[x, y], k);
            for j in 0..2 {
                prop_assert!((next[j] - want[j]).abs() < 1e-12);
            }
        }
    }
}
