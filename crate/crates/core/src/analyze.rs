//! Geometric analysis of attribute spaces: PCA projections to 2D, Gaussian
//! kernel density grids, center reports, and exportable bundles that overlay
//! searched points on per-attribute scatters.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{distance, mean_of, pairwise_distance_sum, PointMatrix};
use crate::rng::Stream;
use crate::space::{AttributeId, AttributeSpace};

/// Largest dimension solved with the dense Jacobi eigensolver.
pub const JACOBI_MAX_DIM: usize = 128;
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;
/// Eigenvalues below this fraction of the total variance count as zero.
const RANK_TOL: f64 = 1e-12;
pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

/// Affine map to the top principal components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    /// Set when fewer than `components.len()` directions carry variance; the
    /// missing components are zero vectors.
    pub rank_deficient: bool,
}

impl Projection {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Dim {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect())
    }

    /// `mean + sum_i coords[i] * components[i]`.
    pub fn unproject(&self, coords: &[f64]) -> Result<Vec<f64>> {
        if coords.len() != self.components.len() {
            return Err(Error::Dim {
                expected: self.components.len(),
                found: coords.len(),
            });
        }
        let mut x = self.mean.clone();
        for (c, a) in self.components.iter().zip(coords) {
            for (xj, cj) in x.iter_mut().zip(c) {
                *xj += a * cj;
            }
        }
        Ok(x)
    }
}

/// Cyclic Jacobi eigen-decomposition of a symmetric `n x n` row-major matrix.
/// Returns eigenvalues and eigenvectors (as rows), in no particular order.
fn jacobi_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut v = vec![0.0; n * n];
    (0..n).for_each(|i| v[i * n + i] = 1.0);
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum();
        if off.sqrt() <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    let vectors = (0..n).map(|j| (0..n).map(|i| v[i * n + j]).collect()).collect();
    (values, vectors)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// `C v` with `C = Xc^T Xc / (n - 1)`, without forming `C`.
fn covariance_apply(centered: &PointMatrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for row in centered.rows() {
        let a = dot(row, v);
        for (o, r) in out.iter_mut().zip(row) {
            *o += a * r;
        }
    }
    let denom = (centered.len() - 1) as f64;
    out.iter_mut().for_each(|o| *o /= denom);
    out
}

/// Top eigenpairs by power iteration with deflation against the components
/// already found.
fn power_eigen(centered: &PointMatrix, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = centered.dim();
    let mut values = Vec::new();
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    let deflate = |w: &mut Vec<f64>, found: &[Vec<f64>]| {
        for u in found {
            let a = dot(w, u);
            w.iter_mut().zip(u).for_each(|(x, u)| *x -= a * u);
        }
    };
    for i in 0..k {
        let mut s = Stream::derive(0, i as u64, "pca-power");
        let mut v: Vec<f64> = (0..d).map(|_| s.normal()).collect();
        deflate(&mut v, &vectors);
        normalize(&mut v);
        for _ in 0..POWER_MAX_ITERS {
            let mut w = covariance_apply(centered, &v);
            deflate(&mut w, &vectors);
            if normalize(&mut w) == 0.0 {
                v = w;
                break;
            }
            let diff = w.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            v = w;
            if diff < POWER_TOL {
                break;
            }
        }
        let value = dot(&v, &covariance_apply(centered, &v));
        values.push(value);
        vectors.push(v);
    }
    (values, vectors)
}

/// Principal component projection onto `out_dims` directions, fitted on the
/// sample covariance (divisor `n - 1`). Each component's largest-magnitude
/// coordinate is positive.
pub fn pca_fit(points: &PointMatrix, out_dims: usize) -> Result<Projection> {
    if points.len() < 2 {
        return Err(Error::invalid("PCA needs at least two points"));
    }
    if out_dims == 0 {
        return Err(Error::invalid("PCA needs at least one output dimension"));
    }
    let d = points.dim();
    let mean = mean_of(d, points.rows()).expect("non-empty");
    let mut centered = points.clone();
    for i in 0..centered.len() {
        centered.row_mut(i).iter_mut().zip(&mean).for_each(|(x, m)| *x -= m);
    }
    let total_var: f64 =
        centered.rows().map(|r| dot(r, r)).sum::<f64>() / (centered.len() - 1) as f64;

    let (values, vectors) = if d <= JACOBI_MAX_DIM {
        let mut cov = vec![0.0; d * d];
        for row in centered.rows() {
            for i in 0..d {
                for j in i..d {
                    cov[i * d + j] += row[i] * row[j];
                }
            }
        }
        let denom = (centered.len() - 1) as f64;
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] /= denom;
                cov[j * d + i] = cov[i * d + j];
            }
        }
        let (vals, vecs) = jacobi_eigen(cov, d);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
        order.truncate(out_dims);
        (
            order.iter().map(|&i| vals[i]).collect::<Vec<_>>(),
            order.iter().map(|&i| vecs[i].clone()).collect::<Vec<_>>(),
        )
    } else {
        power_eigen(&centered, out_dims.min(d))
    };

    let mut components = Vec::with_capacity(out_dims);
    let mut explained = Vec::with_capacity(out_dims);
    let mut deficient = false;
    for i in 0..out_dims {
        match (values.get(i), vectors.get(i)) {
            (Some(&val), Some(vec)) if total_var > 0.0 && val > RANK_TOL * total_var => {
                let mut c = vec.clone();
                normalize(&mut c);
                let mut big = 0;
                for (j, x) in c.iter().enumerate() {
                    if x.abs() > c[big].abs() {
                        big = j;
                    }
                }
                if c[big] < 0.0 {
                    c.iter_mut().for_each(|x| *x = -*x);
                }
                components.push(c);
                explained.push(val);
            }
            _ => {
                deficient = true;
                components.push(vec![0.0; d]);
                explained.push(0.0);
            }
        }
    }
    if deficient {
        log::warn!("data has rank below {out_dims}; missing components are zero");
    }
    Ok(Projection {
        mean,
        components,
        explained_variance: explained,
        rank_deficient: deficient,
    })
}

pub fn pca_project(projection: &Projection, points: &PointMatrix) -> Result<PointMatrix> {
    let mut out = PointMatrix::new(projection.components.len());
    for row in points.rows() {
        out.push(&projection.project(row)?)?;
    }
    Ok(out)
}

pub fn pca_unproject(projection: &Projection, coords: &[f64]) -> Result<Vec<f64>> {
    projection.unproject(coords)
}

/// Sum of squared distances between points and their reconstruction from
/// the projection.
pub fn residual(projection: &Projection, points: &PointMatrix) -> Result<f64> {
    let mut total = 0.0;
    for row in points.rows() {
        let back = projection.unproject(&projection.project(row)?)?;
        total += back.iter().zip(row).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    /// `h_j = sigma_j * n^(-1/6)`.
    #[default]
    Scott,
    Fixed(f64),
}

/// Kernel density values at the centers of a regular 2D grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub bounds: [(f64, f64); 2],
    pub resolution: [usize; 2],
    pub bandwidth: [f64; 2],
    /// Row-major over `y`, then `x`: `density[iy * resolution[0] + ix]`.
    pub density: Vec<f64>,
    /// Set when an axis had zero variance and a minimum bandwidth was used.
    pub degenerate: bool,
}

impl DensityGrid {
    pub fn cell_size(&self) -> [f64; 2] {
        [0, 1].map(|j| (self.bounds[j].1 - self.bounds[j].0) / self.resolution[j] as f64)
    }

    pub fn cell_area(&self) -> f64 {
        let [a, b] = self.cell_size();
        a * b
    }

    /// Riemann sum of the density over the grid.
    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.cell_area()
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        let s = self.cell_size();
        [
            self.bounds[0].0 + (ix as f64 + 0.5) * s[0],
            self.bounds[1].0 + (iy as f64 + 0.5) * s[1],
        ]
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.density[iy * self.resolution[0] + ix]
    }

    /// `(ix, iy)` of the largest density; ties go to the first in row order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.density.iter().enumerate() {
            if *v > self.density[best] {
                best = i;
            }
        }
        (best % self.resolution[0], best / self.resolution[0])
    }

    /// Cell containing `p`, if inside the bounds.
    pub fn cell_of(&self, p: &[f64]) -> Option<(usize, usize)> {
        let s = self.cell_size();
        let idx = |j: usize| -> Option<usize> {
            let f = ((p[j] - self.bounds[j].0) / s[j]).floor();
            (f >= 0.0 && f < self.resolution[j] as f64).then_some(f as usize)
        };
        Some((idx(0)?, idx(1)?))
    }
}

fn gaussian_row(centers: &[f64], mu: f64, h: f64) -> Vec<f64> {
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    centers.iter().map(|c| norm * (-0.5 * ((c - mu) / h).powi(2)).exp()).collect()
}

/// Product-Gaussian kernel density estimate of 2D points on a
/// `resolution x resolution` grid spanning the data padded by four
/// bandwidths on each side.
pub fn kde2d(points: &PointMatrix, resolution: usize, bandwidth: Bandwidth) -> Result<DensityGrid> {
    if points.dim() != 2 {
        return Err(Error::Dim {
            expected: 2,
            found: points.dim(),
        });
    }
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid("density estimation needs at least two points"));
    }
    if resolution == 0 {
        return Err(Error::invalid("resolution must be at least 1"));
    }
    let mean = mean_of(2, points.rows()).expect("non-empty");
    let mut degenerate = false;
    let mut h = [0.0; 2];
    let mut bounds = [(0.0, 0.0); 2];
    for j in 0..2 {
        let col = || points.rows().map(move |r| r[j]);
        let lo = col().fold(f64::INFINITY, f64::min);
        let hi = col().fold(f64::NEG_INFINITY, f64::max);
        let var = col().map(|x| (x - mean[j]).powi(2)).sum::<f64>() / (n - 1) as f64;
        h[j] = match bandwidth {
            Bandwidth::Fixed(v) => {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::invalid("bandwidth must be positive"));
                }
                v
            }
            Bandwidth::Scott if var > 0.0 => var.sqrt() * (n as f64).powf(-1.0 / 6.0),
            Bandwidth::Scott => {
                degenerate = true;
                let range = hi - lo;
                1e-6 * if range > 0.0 { range } else { mean[j].abs().max(1.0) }
            }
        };
        bounds[j] = (lo - 4.0 * h[j], hi + 4.0 * h[j]);
    }
    if degenerate {
        log::warn!("zero-variance axis; using a minimum bandwidth");
    }
    let centers: [Vec<f64>; 2] = [0, 1].map(|j| {
        let s = (bounds[j].1 - bounds[j].0) / resolution as f64;
        (0..resolution).map(|i| bounds[j].0 + (i as f64 + 0.5) * s).collect()
    });
    let kx: Vec<Vec<f64>> = points.rows().map(|r| gaussian_row(&centers[0], r[0], h[0])).collect();
    let ky: Vec<Vec<f64>> = points.rows().map(|r| gaussian_row(&centers[1], r[1], h[1])).collect();
    let nf = n as f64;
    let density: Vec<f64> = (0..resolution)
        .into_par_iter()
        .flat_map_iter(|iy| {
            let mut row = vec![0.0; resolution];
            for (kxi, kyi) in kx.iter().zip(&ky) {
                let w = kyi[iy];
                if w == 0.0 {
                    continue;
                }
                row.iter_mut().zip(kxi).for_each(|(r, k)| *r += w * k);
            }
            row.into_iter().map(move |v| v / nf)
        })
        .collect();
    Ok(DensityGrid {
        bounds,
        resolution: [resolution; 2],
        bandwidth: h,
        density,
        degenerate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeCenter {
    pub aspect: String,
    pub attribute: String,
    pub count: usize,
    /// `None` for attributes without points.
    pub center: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AspectCenter {
    pub aspect: String,
    pub count: usize,
    pub center: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentersReport {
    pub attributes: Vec<AttributeCenter>,
    pub aspects: Vec<AspectCenter>,
    /// Symmetric matrix of distances between aspect centers.
    pub distances: Vec<Vec<f64>>,
    /// Sum of the distances over pairs `i < j`.
    pub pair_sum: f64,
}

/// Attribute and aspect centers with pairwise aspect-center distances. Every
/// aspect must have points.
pub fn centers_report(space: &AttributeSpace) -> Result<CentersReport> {
    let schema = space.schema();
    let attributes = schema
        .attribute_ids()
        .map(|id| {
            let ords = space.attribute_ordinals(id);
            AttributeCenter {
                aspect: schema.aspect_name(id.aspect).to_string(),
                attribute: schema.attribute_name(id).to_string(),
                count: ords.len(),
                center: space.center(ords).ok(),
            }
        })
        .collect();
    let centers = space.aspect_centers()?;
    let distances = centers
        .iter()
        .map(|a| centers.iter().map(|b| distance(a, b)).collect())
        .collect();
    let aspects = centers
        .iter()
        .enumerate()
        .map(|(a, c)| AspectCenter {
            aspect: schema.aspect_name(a).to_string(),
            count: space.aspect_ordinals(a).len(),
            center: c.clone(),
        })
        .collect();
    Ok(CentersReport {
        attributes,
        aspects,
        distances,
        pair_sum: pairwise_distance_sum(&centers),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMode {
    /// One projection per attribute, fitted on that attribute alone.
    #[default]
    Independent,
    /// One projection fitted on all selected attributes together.
    Joint,
}

/// A named point, such as a searched intersection, to draw on every panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub name: String,
    pub vector: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeOptions {
    pub resolution: usize,
    pub bandwidth: Bandwidth,
}

impl Default for KdeOptions {
    fn default() -> Self {
        KdeOptions {
            resolution: 200,
            bandwidth: Bandwidth::Scott,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scatter {
    pub label: String,
    pub points: Vec<[f64; 2]>,
    pub density: Option<DensityGrid>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectedOverlay {
    pub name: String,
    pub point: [f64; 2],
    /// Grid cell in each scatter's density grid, parallel to `scatters`.
    pub cells: Vec<Option<[usize; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub projection: Projection,
    pub scatters: Vec<Scatter>,
    pub overlays: Vec<ProjectedOverlay>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisBundle {
    pub schema_version: u32,
    pub mode: ProjectionMode,
    pub panels: Vec<Panel>,
}

fn to_pair(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}

/// Projects the selected attributes to 2D, optionally with density grids,
/// and places the overlays in every panel.
pub fn build_analysis(
    space: &AttributeSpace,
    attributes: &[AttributeId],
    mode: ProjectionMode,
    kde: Option<KdeOptions>,
    overlays: &[Overlay],
) -> Result<AnalysisBundle> {
    if attributes.is_empty() {
        return Err(Error::invalid("no attributes selected"));
    }
    for o in overlays {
        if o.vector.len() != space.dim() {
            return Err(Error::Dim {
                expected: space.dim(),
                found: o.vector.len(),
            });
        }
    }
    let groups: Vec<Vec<AttributeId>> = match mode {
        ProjectionMode::Independent => attributes.iter().map(|&a| vec![a]).collect(),
        ProjectionMode::Joint => vec![attributes.to_vec()],
    };
    let panels = groups
        .iter()
        .map(|group| {
            let mut fit_ords: Vec<usize> = group
                .iter()
                .flat_map(|&a| space.attribute_ordinals(a).iter().copied())
                .collect();
            fit_ords.sort_unstable();
            let projection = pca_fit(&space.points().select(&fit_ords), 2)?;
            let scatters = group
                .iter()
                .map(|&a| {
                    let pts = pca_project(&projection, &space.points().select(space.attribute_ordinals(a)))?;
                    let density = kde.map(|k| kde2d(&pts, k.resolution, k.bandwidth)).transpose()?;
                    Ok(Scatter {
                        label: space.schema().label(a),
                        points: pts.rows().map(to_pair).collect(),
                        density,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let overlays = overlays
                .iter()
                .map(|o| {
                    let point = to_pair(&projection.project(&o.vector)?);
                    let cells = scatters
                        .iter()
                        .map(|s| s.density.as_ref().and_then(|g| g.cell_of(&point)).map(|(x, y)| [x, y]))
                        .collect();
                    Ok(ProjectedOverlay {
                        name: o.name.clone(),
                        point,
                        cells,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Panel {
                projection,
                scatters,
                overlays,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AnalysisBundle {
        schema_version: BUNDLE_SCHEMA_VERSION,
        mode,
        panels,
    })
}

pub fn write_analysis<W: Write>(bundle: &AnalysisBundle, w: &mut W) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, bundle)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_analysis<R: Read>(r: R) -> Result<AnalysisBundle> {
    let bundle: AnalysisBundle = serde_json::from_reader(r)?;
    if bundle.schema_version != BUNDLE_SCHEMA_VERSION {
        return Err(Error::invalid(format!(
            "unsupported analysis schema version {}",
            bundle.schema_version
        )));
    }
    Ok(bundle)
}

/// Writes the bundle as one JSON file.
pub fn export_analysis(bundle: &AnalysisBundle, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_analysis(bundle, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_analysis(path: &Path) -> Result<AnalysisBundle> {
    read_analysis(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::LabeledPoint;
    use crate::trainer::loss_gap_exact;

    fn gaussian(seed: u64, n: usize, d: usize, scales: &[f64]) -> PointMatrix {
        let mut s = Stream::derive(seed, 0, "analyze-test");
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|j| scales[j % scales.len()] * s.normal()).collect())
            .collect();
        PointMatrix::from_rows(&rows).unwrap()
    }

    fn random_rotation(seed: u64, d: usize) -> Vec<Vec<f64>> {
        let mut s = Stream::derive(seed, 1, "rotation");
        let mut basis: Vec<Vec<f64>> = Vec::new();
        while basis.len() < d {
            let mut v: Vec<f64> = (0..d).map(|_| s.normal()).collect();
            for u in &basis {
                let a = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(x, u)| *x -= a * u);
            }
            normalize(&mut v);
            basis.push(v);
        }
        basis
    }

    #[test]
    fn jacobi_matches_eigen_equation() {
        let d = 6;
        let x = gaussian(0, 50, d, &[1.0, 2.0, 0.5]);
        let mut a = vec![0.0; d * d];
        for r in x.rows() {
            for i in 0..d {
                for j in 0..d {
                    a[i * d + j] += r[i] * r[j];
                }
            }
        }
        let (vals, vecs) = jacobi_eigen(a.clone(), d);
        for (l, v) in vals.iter().zip(&vecs) {
            for i in 0..d {
                let av: f64 = (0..d).map(|j| a[i * d + j] * v[j]).sum();
                assert!((av - l * v[i]).abs() < 1e-9 * vals.iter().fold(0.0f64, |m, x| m.max(x.abs())));
            }
        }
    }

    #[test]
    fn line_in_3d() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| {
            let t = i as f64 - 7.0;
            vec![1.0 + 2.0 * t, -1.0 + t, 3.0 - 2.0 * t]
        }).collect();
        let p = pca_fit(&PointMatrix::from_rows(&rows).unwrap(), 2).unwrap();
        let dir = [2.0 / 3.0, 1.0 / 3.0, -2.0 / 3.0];
        assert!(dot(&p.components[0], &dir).abs() >= 1.0 - 1e-9);
        assert_eq!(p.explained_variance[1], 0.0);
        assert!(p.rank_deficient);
        assert_eq!(p.components[1], vec![0.0; 3]);
    }

    #[test]
    fn isotropic_variances_are_close() {
        let p = pca_fit(&gaussian(1, 10_000, 5, &[1.0]), 2).unwrap();
        let (a, b) = (p.explained_variance[0], p.explained_variance[1]);
        assert!(a >= b && (a - b) / a < 0.1);
    }

    #[test]
    fn projected_variance_equals_eigenvalue() {
        let x = gaussian(2, 3000, 4, &[3.0, 1.0, 0.5, 2.0]);
        let p = pca_fit(&x, 2).unwrap();
        let proj = pca_project(&p, &x).unwrap();
        for k in 0..2 {
            let var = proj.rows().map(|r| r[k] * r[k]).sum::<f64>() / (x.len() - 1) as f64;
            assert!((var - p.explained_variance[k]).abs() < 1e-8);
            let c = &p.components[k];
            let big = (0..4).max_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs())).unwrap();
            assert!(c[big] > 0.0);
        }
        assert!((dot(&p.components[0], &p.components[1])).abs() < 1e-9);
        assert!((dot(&p.components[0], &p.components[0]) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn power_iteration_agrees_with_jacobi() {
        let x = gaussian(3, 400, 10, &[5.0, 3.0, 1.0, 0.5]);
        let mut centered = x.clone();
        let mean = x.mean().unwrap();
        for i in 0..centered.len() {
            centered.row_mut(i).iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
        }
        let (pv, pc) = power_eigen(&centered, 2);
        let p = pca_fit(&x, 2).unwrap();
        for k in 0..2 {
            assert!((pv[k] - p.explained_variance[k]).abs() < 1e-8 * pv[0]);
            assert!(dot(&pc[k], &p.components[k]).abs() > 1.0 - 1e-8);
        }
    }

    #[test]
    fn high_dimensional_fit_uses_power_iteration() {
        let d = JACOBI_MAX_DIM + 2;
        let mut scales = vec![0.1; d];
        scales[3] = 4.0;
        scales[70] = 2.0;
        let x = gaussian(4, 500, d, &scales);
        let p = pca_fit(&x, 2).unwrap();
        assert!(p.components[0][3].abs() > 0.99);
        assert!(p.components[1][70].abs() > 0.99);
    }

    #[test]
    fn project_and_unproject() {
        let x = gaussian(5, 200, 4, &[2.0, 1.0, 0.3]);
        let p = pca_fit(&x, 2).unwrap();
        assert_eq!(p.project(&p.mean).unwrap(), vec![0.0, 0.0]);
        let e1: Vec<f64> = p.mean.iter().zip(&p.components[0]).map(|(m, c)| m + c).collect();
        let q = p.project(&e1).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-12 && q[1].abs() < 1e-12);
        let inside = p.unproject(&[0.7, -2.5]).unwrap();
        let back = p.unproject(&p.project(&inside).unwrap()).unwrap();
        assert!(inside.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-9));
        let other = p.unproject(&[-3.0, 1.25]).unwrap();
        let d_in = distance(&inside, &other);
        let d_out = distance(&p.project(&inside).unwrap(), &p.project(&other).unwrap());
        assert!((d_in - d_out).abs() < 1e-9);
        assert!(p.project(&[1.0]).is_err());
    }

    #[test]
    fn pca_beats_random_bases() {
        let d = 6;
        let x = gaussian(6, 500, d, &[3.0, 0.2, 1.5, 0.7, 2.2, 0.1]);
        let p = pca_fit(&x, 2).unwrap();
        let best = residual(&p, &x).unwrap();
        for seed in 0..100 {
            let basis = random_rotation(seed, d);
            let q = Projection {
                mean: p.mean.clone(),
                components: basis[..2].to_vec(),
                explained_variance: vec![0.0; 2],
                rank_deficient: false,
            };
            assert!(best <= residual(&q, &x).unwrap());
        }
    }

    #[test]
    fn kde_mass_and_argmax() {
        let x = gaussian(7, 2000, 2, &[1.0, 3.0]);
        let g = kde2d(&x, 200, Bandwidth::Scott).unwrap();
        let m = g.mass();
        assert!((0.98..=1.0 + 1e-9).contains(&m), "mass {m}");
        assert!(g.density.iter().all(|v| *v >= 0.0 && v.is_finite()));

        let twin = PointMatrix::from_rows(&[vec![2.0, -1.0], vec![2.0, -1.0]]).unwrap();
        let g = kde2d(&twin, 201, Bandwidth::Scott).unwrap();
        assert!(g.degenerate);
        assert_eq!(g.argmax(), g.cell_of(&[2.0, -1.0]).unwrap());
    }

    #[test]
    fn kde_ring_peak_is_on_the_ring() {
        let mut s = Stream::derive(8, 0, "ring");
        let rows: Vec<Vec<f64>> = (0..3000)
            .map(|_| {
                let a = 2.0 * std::f64::consts::PI * s.uniform();
                let r = 3.0 + 0.1 * s.normal();
                vec![r * a.cos(), r * a.sin()]
            })
            .collect();
        let g = kde2d(&PointMatrix::from_rows(&rows).unwrap(), 200, Bandwidth::Scott).unwrap();
        let (ix, iy) = g.argmax();
        let c = g.cell_center(ix, iy);
        let r = (c[0] * c[0] + c[1] * c[1]).sqrt();
        assert!((r - 3.0).abs() < 0.5, "peak radius {r}");
        let center = g.cell_of(&[0.0, 0.0]).unwrap();
        assert!(g.at(center.0, center.1) < 0.1 * g.at(ix, iy));
    }

    fn labeled(rows: Vec<(&str, &str, Vec<f64>)>) -> AttributeSpace {
        let records = rows
            .into_iter()
            .enumerate()
            .map(|(i, (a, t, v))| LabeledPoint {
                id: i.to_string(),
                aspect: a.into(),
                attribute: t.into(),
                vector: v,
            })
            .collect();
        AttributeSpace::from_points(None, records).unwrap()
    }

    #[test]
    fn centers_report_examples() {
        let s = labeled(vec![
            ("a", "x", vec![1.0, 1.0]),
            ("a", "y", vec![-1.0, -1.0]),
            ("b", "z", vec![1.0, 1.0]),
            ("b", "z", vec![-1.0, -1.0]),
        ]);
        let r = centers_report(&s).unwrap();
        assert_eq!(r.distances, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        let s = labeled(vec![("a", "x", vec![0.0, 0.0]), ("b", "z", vec![0.0, 3.0])]);
        let r = centers_report(&s).unwrap();
        assert_eq!(r.distances[0][1], 3.0);
        assert_eq!(r.pair_sum, loss_gap_exact(&s).unwrap());
    }

    #[test]
    fn bundle_round_trip() {
        let mut rows = Vec::new();
        let mut s = Stream::derive(9, 0, "bundle");
        for i in 0..60 {
            let (a, t) = if i % 2 == 0 { ("sentiment", "positive") } else { ("topic", "sports") };
            rows.push((a, t, (0..3).map(|_| s.normal() / 3.0).collect()));
        }
        let space = labeled(rows);
        let ids: Vec<AttributeId> = space.schema().attribute_ids().collect();
        let bare = build_analysis(&space, &ids, ProjectionMode::Joint, None, &[]).unwrap();
        assert_eq!(bare.panels.len(), 1);
        assert!(bare.panels[0].overlays.is_empty());
        let overlays = vec![Overlay {
            name: "searched".into(),
            vector: vec![0.1, 1.0 / 3.0, -0.2],
        }];
        let kde = Some(KdeOptions {
            resolution: 20,
            bandwidth: Bandwidth::Scott,
        });
        let b = build_analysis(&space, &ids, ProjectionMode::Independent, kde, &overlays).unwrap();
        assert_eq!(b.panels.len(), 2);
        let mut buf = Vec::new();
        write_analysis(&b, &mut buf).unwrap();
        assert_eq!(read_analysis(buf.as_slice()).unwrap(), b);
    }
}
