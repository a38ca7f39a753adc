use rayon::prelude::*;

use crate::points::{combine_lanes, PointMatrix};

use super::heap::{Candidate, TopK};

const LANES: usize = 8;
/// Coordinates summed between early-exit checks.
const CHECK_EVERY: usize = 64;
/// Queries sharing one register tile of the dot-product kernel.
const QUERY_TILE: usize = 4;
/// Points sharing one register tile of the dot-product kernel.
const POINT_TILE: usize = 2;
/// Points per cache block; every query of a group visits a block before the
/// scan moves on.
const BLOCK_POINTS: usize = 128;
/// Queries handled together by one worker.
const QUERY_GROUP: usize = 64;

/// Exact scan over a zero-padded, contiguous copy of the points.
///
/// Distances follow the same lane order as
/// [`squared_distance`](crate::points::squared_distance); padding with zeros
/// does not change any lane. Partial sums only grow as coordinates are added,
/// so a point whose partial sum already exceeds the current k-th best can be
/// dropped without changing the result.
///
/// Batch queries first bound each distance from below through
/// `|p|^2 + |q|^2 - 2 p.q`, with the dot products from a register-tiled
/// kernel. A point is dropped when that bound, less its worst-case rounding
/// error, still exceeds the current k-th best; every other point gets the
/// exact distance.
#[derive(Clone, Debug)]
pub struct BlockedScan {
    data: Vec<f64>,
    norms: Vec<f64>,
    stride: usize,
    len: usize,
    /// Rounding allowance per unit of `|p|^2 + |q|^2`.
    slack: f64,
}

impl BlockedScan {
    pub fn build(points: &PointMatrix) -> Self {
        let stride = points.dim().div_ceil(LANES) * LANES;
        let mut data = vec![0.0; stride * points.len()];
        for (i, row) in points.rows().enumerate() {
            data[i * stride..i * stride + row.len()].copy_from_slice(row);
        }
        BlockedScan {
            data,
            norms: points.rows().map(norm_sq).collect(),
            stride,
            len: points.len(),
            slack: 4.0 * (stride as f64 + 8.0) * f64::EPSILON,
        }
    }

    fn pad(&self, query: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.stride];
        q[..query.len()].copy_from_slice(query);
        q
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.stride..(i + 1) * self.stride]
    }

    pub(crate) fn search(&self, query: &[f64], k: usize) -> Vec<Candidate> {
        let q = self.pad(query);
        let mut top = TopK::new(k);
        for i in 0..self.len {
            scan_point(self.row(i), &q, i, &mut top);
        }
        top.into_sorted()
    }

    pub(crate) fn search_batch(&self, queries: &PointMatrix, k: usize) -> Vec<Vec<Candidate>> {
        let padded: Vec<Vec<f64>> = queries.rows().map(|q| self.pad(q)).collect();
        padded
            .par_chunks(QUERY_GROUP)
            .flat_map_iter(|group| {
                let mut tops: Vec<TopK> = group.iter().map(|_| TopK::new(k)).collect();
                self.scan_group(group, &mut tops);
                tops.into_iter().map(TopK::into_sorted)
            })
            .collect()
    }

    fn scan_group(&self, group: &[Vec<f64>], tops: &mut [TopK]) {
        #[cfg(target_arch = "x86_64")]
        if std::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected on this CPU just above.
            return unsafe { self.scan_group_avx512(group, tops) };
        }
        #[cfg(target_arch = "x86_64")]
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: both features were detected on this CPU just above.
            return unsafe { self.scan_group_fma(group, tops) };
        }
        self.scan_group_generic::<false, 4>(group, tops)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn scan_group_avx512(&self, group: &[Vec<f64>], tops: &mut [TopK]) {
        self.scan_group_generic::<true, 8>(group, tops)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn scan_group_fma(&self, group: &[Vec<f64>], tops: &mut [TopK]) {
        self.scan_group_generic::<true, 4>(group, tops)
    }

    #[inline(always)]
    fn scan_group_generic<const FMA: bool, const W: usize>(&self, group: &[Vec<f64>], tops: &mut [TopK]) {
        let qnorms: Vec<f64> = group.iter().map(|q| norm_sq(q)).collect();
        let mut start = 0;
        while start < self.len {
            let end = (start + BLOCK_POINTS).min(self.len);
            let tiles = tops.chunks_mut(QUERY_TILE).zip(group.chunks(QUERY_TILE));
            for (t0, (tile_tops, tile)) in tiles.enumerate() {
                // Short tiles repeat their last query; the extra columns are ignored.
                let refs: [&[f64]; QUERY_TILE] = std::array::from_fn(|t| tile[t.min(tile.len() - 1)].as_slice());
                let qn = &qnorms[t0 * QUERY_TILE..t0 * QUERY_TILE + tile.len()];
                self.scan_block::<FMA, W>(start, end, &refs, qn, tile_tops);
            }
            start = end;
        }
    }

    #[inline(always)]
    fn scan_block<const FMA: bool, const W: usize>(
        &self,
        start: usize,
        end: usize,
        queries: &[&[f64]; QUERY_TILE],
        qnorms: &[f64],
        tops: &mut [TopK],
    ) {
        let mut i = start;
        while i < end {
            let rows: [&[f64]; POINT_TILE] = std::array::from_fn(|r| self.row((i + r).min(end - 1)));
            let dots = dot_tile::<FMA, W>(&rows, queries);
            for (r, row_dots) in dots.iter().enumerate().take(end - i) {
                let index = i + r;
                let pn = self.norms[index];
                for (t, top) in tops.iter_mut().enumerate() {
                    let scale = pn + qnorms[t];
                    let bound = (scale - 2.0 * row_dots[t]) - self.slack * scale;
                    if bound > top.worst() {
                        continue;
                    }
                    scan_point(rows[r], queries[t], index, top);
                }
            }
            i += POINT_TILE;
        }
    }
}

fn norm_sq(row: &[f64]) -> f64 {
    row.iter().map(|x| x * x).sum()
}

/// Dot product of every row with every query, `W` partial sums per pair.
/// `W` divides the row stride.
#[inline(always)]
fn dot_tile<const FMA: bool, const W: usize>(
    rows: &[&[f64]; POINT_TILE],
    queries: &[&[f64]; QUERY_TILE],
) -> [[f64; QUERY_TILE]; POINT_TILE] {
    let mut acc = [[[0.0f64; W]; QUERY_TILE]; POINT_TILE];
    let mut x = 0;
    while x < rows[0].len() {
        let qc: [&[f64; W]; QUERY_TILE] =
            std::array::from_fn(|t| queries[t][x..x + W].try_into().expect("queries are padded to whole lanes"));
        for (a, row) in acc.iter_mut().zip(rows) {
            let pc: &[f64; W] = row[x..x + W].try_into().expect("rows are padded to whole lanes");
            for (s, q) in a.iter_mut().zip(&qc) {
                for l in 0..W {
                    s[l] = if FMA { pc[l].mul_add(q[l], s[l]) } else { s[l] + pc[l] * q[l] };
                }
            }
        }
        x += W;
    }
    acc.map(|a| a.map(|s| s.iter().sum()))
}

/// Offers `p` with its exact squared distance, unless a partial sum already
/// exceeds the current bound.
#[inline(always)]
fn scan_point(p: &[f64], q: &[f64], index: usize, top: &mut TopK) {
    let worst = top.worst();
    let mut acc = [0.0f64; LANES];
    for (bp, bq) in p.chunks(CHECK_EVERY).zip(q.chunks(CHECK_EVERY)) {
        for (x, y) in bp.chunks_exact(LANES).zip(bq.chunks_exact(LANES)) {
            for j in 0..LANES {
                let t = x[j] - y[j];
                acc[j] += t * t;
            }
        }
        if combine_lanes(&acc) > worst {
            return;
        }
    }
    top.offer(Candidate {
        dist_sq: combine_lanes(&acc),
        index,
    });
}
