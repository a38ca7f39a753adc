//! Exact K-nearest-neighbor search under Euclidean distance.
//!
//! [`knn_brute`] is the reference: it computes every squared distance with
//! [`squared_distance`](crate::points::squared_distance), sorts by
//! `(distance, ordinal)` and keeps the first `k`. [`SpatialIndex`] answers the
//! same queries faster (a kd-tree up to 32 dimensions, a blocked scan beyond)
//! and returns identical results, ordinal for ordinal and bit for bit.

mod blocked;
mod heap;
mod kdtree;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::points::{squared_distance, PointMatrix};

pub use blocked::BlockedScan;
pub use kdtree::KdTree;

use heap::Candidate;

/// Dimension above which the index switches from the kd-tree to the blocked scan.
pub const KD_TREE_MAX_DIM: usize = 32;

/// The `k` nearest points of a query, closest first. Ties in distance are
/// ordered by ascending ordinal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeighborResult {
    pub ordinals: Vec<usize>,
    pub distances: Vec<f64>,
}

impl NeighborResult {
    pub fn len(&self) -> usize {
        self.ordinals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordinals.is_empty()
    }

    fn from_sorted(cands: Vec<Candidate>, ordinal_map: Option<&[usize]>) -> Self {
        let mut ordinals = Vec::with_capacity(cands.len());
        let mut distances = Vec::with_capacity(cands.len());
        for c in cands {
            ordinals.push(ordinal_map.map_or(c.index, |m| m[c.index]));
            distances.push(c.dist_sq.sqrt());
        }
        NeighborResult { ordinals, distances }
    }
}

fn validate(points: &PointMatrix, query: &[f64], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if points.is_empty() {
        return Err(Error::invalid("point set is empty"));
    }
    if query.len() != points.dim() {
        return Err(Error::Dim {
            expected: points.dim(),
            found: query.len(),
        });
    }
    if query.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("query contains NaN or infinite values"));
    }
    Ok(())
}

/// Reference K-nearest-neighbor search by exhaustive scan and full sort.
///
/// `k > n` returns all `n` points.
pub fn knn_brute(points: &PointMatrix, query: &[f64], k: usize) -> Result<NeighborResult> {
    validate(points, query, k)?;
    let mut all: Vec<Candidate> = points
        .rows()
        .enumerate()
        .map(|(index, row)| Candidate {
            dist_sq: squared_distance(row, query),
            index,
        })
        .collect();
    all.sort_unstable();
    all.truncate(k);
    Ok(NeighborResult::from_sorted(all, None))
}

/// Which exact search structure backs a [`SpatialIndex`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexKind {
    /// kd-tree for `dim <= 32`, blocked scan otherwise.
    Auto,
    KdTree,
    Blocked,
}

#[derive(Clone, Debug)]
enum Backend {
    KdTree(KdTree),
    Blocked(BlockedScan),
}

/// Static exact nearest-neighbor index.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    backend: Backend,
    points: PointMatrix,
    ordinals: Option<Vec<usize>>,
}

/// Builds an index with [`IndexKind::Auto`].
pub fn build_index(points: &PointMatrix) -> Result<SpatialIndex> {
    SpatialIndex::build(points.clone(), None, IndexKind::Auto)
}

/// Queries an index; same contract as [`knn_brute`].
pub fn knn_index(index: &SpatialIndex, query: &[f64], k: usize) -> Result<NeighborResult> {
    index.query(query, k)
}

impl SpatialIndex {
    /// Builds an index over `points`. When `ordinals` is given, results report
    /// `ordinals[i]` for local row `i`; it must be strictly increasing so that
    /// local and reported tie orders agree.
    pub fn build(points: PointMatrix, ordinals: Option<Vec<usize>>, kind: IndexKind) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("cannot index an empty point set"));
        }
        if points.as_flat().iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("points contain NaN or infinite values"));
        }
        if let Some(o) = &ordinals {
            if o.len() != points.len() {
                return Err(Error::invalid("ordinal map length differs from point count"));
            }
            if !o.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::invalid("ordinal map must be strictly increasing"));
            }
        }
        let use_tree = match kind {
            IndexKind::Auto => points.dim() <= KD_TREE_MAX_DIM,
            IndexKind::KdTree => true,
            IndexKind::Blocked => false,
        };
        let backend = if use_tree {
            Backend::KdTree(KdTree::build(&points))
        } else {
            Backend::Blocked(BlockedScan::build(&points))
        };
        Ok(SpatialIndex {
            backend,
            points,
            ordinals,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn is_kd_tree(&self) -> bool {
        matches!(self.backend, Backend::KdTree(_))
    }

    /// Row by local position.
    pub fn local_point(&self, local: usize) -> &[f64] {
        self.points.row(local)
    }

    pub fn points(&self) -> &PointMatrix {
        &self.points
    }

    /// Query returning local positions instead of mapped ordinals.
    pub fn query_local(&self, query: &[f64], k: usize) -> Result<NeighborResult> {
        validate(&self.points, query, k)?;
        let cands = self.raw(query, k);
        Ok(NeighborResult::from_sorted(cands, None))
    }

    fn raw(&self, query: &[f64], k: usize) -> Vec<Candidate> {
        let k = k.min(self.points.len());
        match &self.backend {
            Backend::KdTree(t) => t.search(&self.points, query, k),
            Backend::Blocked(b) => b.search(query, k),
        }
    }

    pub fn query(&self, query: &[f64], k: usize) -> Result<NeighborResult> {
        validate(&self.points, query, k)?;
        Ok(NeighborResult::from_sorted(self.raw(query, k), self.ordinals.as_deref()))
    }

    /// Answers many queries; parallel over queries with per-query outputs
    /// identical to [`SpatialIndex::query`].
    pub fn query_batch(&self, queries: &PointMatrix, k: usize) -> Result<Vec<NeighborResult>> {
        Ok(self
            .raw_batch(queries, k)?
            .into_iter()
            .map(|c| NeighborResult::from_sorted(c, self.ordinals.as_deref()))
            .collect())
    }

    /// [`SpatialIndex::query_batch`] reporting local positions.
    pub fn query_batch_local(&self, queries: &PointMatrix, k: usize) -> Result<Vec<NeighborResult>> {
        Ok(self
            .raw_batch(queries, k)?
            .into_iter()
            .map(|c| NeighborResult::from_sorted(c, None))
            .collect())
    }

    fn raw_batch(&self, queries: &PointMatrix, k: usize) -> Result<Vec<Vec<Candidate>>> {
        for q in queries.rows() {
            validate(&self.points, q, k)?;
        }
        let k = k.min(self.points.len());
        Ok(match &self.backend {
            Backend::KdTree(t) => (0..queries.len())
                .into_par_iter()
                .map(|i| t.search(&self.points, queries.row(i), k))
                .collect(),
            Backend::Blocked(b) => b.search_batch(queries, k),
        })
    }
}
