//! Seeded synthetic attribute spaces.
//!
//! Every attribute draws from its own stream keyed by `(seed, attribute
//! ordinal, "attribute")`, so adding an attribute never changes the points of
//! the others, and per-attribute sampling can run in parallel with a
//! thread-count-independent result. Points are emitted attribute-major.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointMatrix;
use crate::rng::Stream;
use crate::space::{Aspect, AttributeId, AttributeSchema, AttributeSpace};

/// Covariance given as `σ²·I`, a diagonal, or a full symmetric matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Covariance {
    Isotropic(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl Covariance {
    fn to_dense(&self, dim: usize) -> Result<DMatrix<f64>> {
        match self {
            Covariance::Isotropic(v) => Ok(DMatrix::from_diagonal_element(dim, dim, *v)),
            Covariance::Diagonal(d) => {
                if d.len() != dim {
                    return Err(Error::Dim {
                        expected: dim,
                        found: d.len(),
                    });
                }
                Ok(DMatrix::from_fn(dim, dim, |i, j| if i == j { d[i] } else { 0.0 }))
            }
            Covariance::Full(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::invalid(format!("covariance must be {dim}x{dim}")));
                }
                Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
            }
        }
    }
}

/// One mixture component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub sampler: SamplerSpec,
}

/// Distribution of one attribute's points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerSpec {
    Gaussian {
        mean: Vec<f64>,
        covariance: Covariance,
    },
    /// Gaussian with a heavy tail along `direction`; see [`sample_skewed`].
    Skewed {
        mean: Vec<f64>,
        scale: f64,
        direction: Vec<f64>,
        strength: f64,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub count: usize,
    pub sampler: SamplerSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AspectSpec {
    pub name: String,
    pub attributes: Vec<AttributeSpec>,
}

/// Named scenario families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    SymmetricOverlap,
    SkewedTails,
    NoiseContaminated,
    ThreeAspect,
    Custom,
}

impl ScenarioName {
    pub const PRESETS: [&'static str; 4] = [
        "symmetric-overlap",
        "skewed-tails",
        "noise-contaminated",
        "three-aspect",
    ];
}

/// Full description of a synthetic space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: ScenarioName,
    pub dim: usize,
    pub aspects: Vec<AspectSpec>,
    /// Fraction of points relabeled to a uniformly random attribute.
    #[serde(default)]
    pub noise: f64,
    pub seed: u64,
}

/// A scenario's space plus the ordinals whose labels were resampled.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub space: AttributeSpace,
    pub relabeled: Vec<usize>,
}

/// Distance between the two attribute means in the two-attribute presets.
pub const PRESET_SCALE: f64 = 1.0;

fn skewed(mean: [f64; 2], direction: [f64; 2], strength: f64) -> SamplerSpec {
    SamplerSpec::Skewed {
        mean: mean.to_vec(),
        scale: PRESET_SCALE,
        direction: direction.to_vec(),
        strength,
    }
}

fn two_aspect(name: ScenarioName, a: SamplerSpec, b: SamplerSpec, count: usize, noise: f64, seed: u64) -> Scenario {
    Scenario {
        name,
        dim: 2,
        aspects: vec![
            AspectSpec {
                name: "sentiment".into(),
                attributes: vec![AttributeSpec {
                    name: "positive".into(),
                    count,
                    sampler: a,
                }],
            },
            AspectSpec {
                name: "topic".into(),
                attributes: vec![AttributeSpec {
                    name: "sports".into(),
                    count,
                    sampler: b,
                }],
            },
        ],
        noise,
        seed,
    }
}

// Skewed-tails geometry: both clusters sit on the x axis and send their heavy
// tails upward and inward, so the tails cross well above the midpoint of the
// two means while the bulks stay apart.
const SKEW_OFFSET: f64 = 5.0;
const SKEW_TILT: f64 = 0.6;
const SKEW_STRENGTH: f64 = 1.3;
const SKEW_COUNT: usize = 2000;

impl Scenario {
    /// Builds a named preset. `three-aspect` uses dimension 8.
    pub fn preset(name: &str, seed: u64) -> Result<Scenario> {
        match name {
            "symmetric-overlap" => Ok(two_aspect(
                ScenarioName::SymmetricOverlap,
                SamplerSpec::Gaussian {
                    mean: vec![-1.5 * PRESET_SCALE, 0.0],
                    covariance: Covariance::Isotropic(PRESET_SCALE * PRESET_SCALE),
                },
                SamplerSpec::Gaussian {
                    mean: vec![1.5 * PRESET_SCALE, 0.0],
                    covariance: Covariance::Isotropic(PRESET_SCALE * PRESET_SCALE),
                },
                1000,
                0.0,
                seed,
            )),
            "skewed-tails" | "noise-contaminated" => {
                let (s, c) = (SKEW_TILT.sin(), SKEW_TILT.cos());
                let (kind, noise) = if name == "skewed-tails" {
                    (ScenarioName::SkewedTails, 0.0)
                } else {
                    (ScenarioName::NoiseContaminated, 0.05)
                };
                Ok(two_aspect(
                    kind,
                    skewed([-SKEW_OFFSET * PRESET_SCALE, 0.0], [s, c], SKEW_STRENGTH),
                    skewed([SKEW_OFFSET * PRESET_SCALE, 0.0], [-s, c], SKEW_STRENGTH),
                    SKEW_COUNT,
                    noise,
                    seed,
                ))
            }
            "three-aspect" => Ok(Scenario::three_aspect(8, seed)),
            other => Err(Error::invalid(format!(
                "unknown scenario {other:?}; valid presets: {}",
                ScenarioName::PRESETS.join(", ")
            ))),
        }
    }

    /// Sentiment (2 attributes) x topic (4) x detoxification (1), 10k points
    /// per aspect. Attributes are separated along the first three axes and
    /// each aspect is shifted along its own axis (3, 4 or 5), modelling the
    /// domain gap between data sources. Requires `dim >= 8`.
    pub fn three_aspect(dim: usize, seed: u64) -> Scenario {
        assert!(dim >= 8, "three-aspect needs at least 8 dimensions");
        let gaussian = |entries: &[(usize, f64)]| {
            let mut mean = vec![0.0; dim];
            for &(i, v) in entries {
                mean[i] = v;
            }
            SamplerSpec::Gaussian {
                mean,
                covariance: Covariance::Isotropic(1.0),
            }
        };
        let attr = |name: &str, count: usize, sampler: SamplerSpec| AttributeSpec {
            name: name.into(),
            count,
            sampler,
        };
        const GAP: f64 = 2.5;
        Scenario {
            name: ScenarioName::ThreeAspect,
            dim,
            aspects: vec![
                AspectSpec {
                    name: "sentiment".into(),
                    attributes: vec![
                        attr("positive", 5000, gaussian(&[(0, 3.0), (3, GAP)])),
                        attr("negative", 5000, gaussian(&[(0, -3.0), (3, GAP)])),
                    ],
                },
                AspectSpec {
                    name: "topic".into(),
                    attributes: vec![
                        attr("world", 2500, gaussian(&[(1, 4.0), (4, GAP)])),
                        attr("sports", 2500, gaussian(&[(1, -4.0), (4, GAP)])),
                        attr("business", 2500, gaussian(&[(2, 4.0), (4, GAP)])),
                        attr("scitech", 2500, gaussian(&[(2, -4.0), (4, GAP)])),
                    ],
                },
                AspectSpec {
                    name: "detoxification".into(),
                    attributes: vec![attr("nontoxic", 10000, gaussian(&[(5, GAP)]))],
                },
            ],
            noise: 0.0,
            seed,
        }
    }

    pub fn schema(&self) -> Result<AttributeSchema> {
        AttributeSchema::new(
            self.aspects
                .iter()
                .map(|a| Aspect {
                    name: a.name.clone(),
                    attributes: a.attributes.iter().map(|t| t.name.clone()).collect(),
                })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::invalid(format!("noise fraction {} must lie in [0, 1)", self.noise)));
        }
        self.schema()?;
        for a in &self.aspects {
            for t in &a.attributes {
                if t.count == 0 {
                    return Err(Error::invalid(format!("attribute {:?} has count 0", t.name)));
                }
                Sampler::compile(&t.sampler, self.dim)?;
            }
        }
        Ok(())
    }
}

/// Compiled sampler ready to draw points.
#[derive(Clone, Debug)]
enum Sampler {
    Gaussian {
        mean: Vec<f64>,
        /// Nonzero entries of each Cholesky row: `(column, value)`.
        chol: Vec<Vec<(usize, f64)>>,
    },
    Skewed {
        mean: Vec<f64>,
        scale: f64,
        direction: Vec<f64>,
        strength: f64,
    },
    Mixture {
        cumulative: Vec<f64>,
        parts: Vec<Sampler>,
    },
}

fn cholesky(cov: DMatrix<f64>) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = cov.nrows();
    for i in 0..n {
        for j in 0..i {
            if cov[(i, j)] != cov[(j, i)] {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    let l = cov.cholesky().ok_or(Error::NotPositiveDefinite)?.unpack();
    Ok((0..n)
        .map(|i| {
            (0..=i)
                .filter_map(|j| {
                    let v = l[(i, j)];
                    (v != 0.0).then_some((j, v))
                })
                .collect()
        })
        .collect())
}

impl Sampler {
    fn compile(spec: &SamplerSpec, dim: usize) -> Result<Sampler> {
        let check_dim = |v: &[f64]| {
            if v.len() != dim {
                Err(Error::Dim {
                    expected: dim,
                    found: v.len(),
                })
            } else {
                Ok(())
            }
        };
        match spec {
            SamplerSpec::Gaussian { mean, covariance } => {
                check_dim(mean)?;
                Ok(Sampler::Gaussian {
                    mean: mean.clone(),
                    chol: cholesky(covariance.to_dense(dim)?)?,
                })
            }
            SamplerSpec::Skewed {
                mean,
                scale,
                direction,
                strength,
            } => {
                check_dim(mean)?;
                check_dim(direction)?;
                check_skew_params(*scale, direction, *strength)?;
                if *strength == 0.0 {
                    return Sampler::compile(
                        &SamplerSpec::Gaussian {
                            mean: mean.clone(),
                            covariance: Covariance::Isotropic(scale * scale),
                        },
                        dim,
                    );
                }
                Ok(Sampler::Skewed {
                    mean: mean.clone(),
                    scale: *scale,
                    direction: direction.clone(),
                    strength: *strength,
                })
            }
            SamplerSpec::Mixture { components } => {
                if components.is_empty() {
                    return Err(Error::invalid("mixture has no components"));
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if components.iter().any(|c| !(c.weight >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "mixture weights must be non-negative and sum to 1 (sum {total})"
                    )));
                }
                let mut acc = 0.0;
                let cumulative = components
                    .iter()
                    .map(|c| {
                        acc += c.weight / total;
                        acc
                    })
                    .collect();
                let parts = components
                    .iter()
                    .map(|c| Sampler::compile(&c.sampler, dim))
                    .collect::<Result<_>>()?;
                Ok(Sampler::Mixture { cumulative, parts })
            }
        }
    }

    fn draw(&self, stream: &mut Stream, out: &mut Vec<f64>) {
        match self {
            Sampler::Gaussian { mean, chol } => {
                let z: Vec<f64> = (0..mean.len()).map(|_| stream.normal()).collect();
                for (m, row) in mean.iter().zip(chol) {
                    let mut acc = 0.0;
                    for &(j, l) in row {
                        acc += l * z[j];
                    }
                    out.push(m + acc);
                }
            }
            Sampler::Skewed {
                mean,
                scale,
                direction,
                strength,
            } => {
                let g: Vec<f64> = (0..mean.len()).map(|_| stream.normal()).collect();
                let along: f64 = g.iter().zip(direction).map(|(a, b)| a * b).sum();
                let tail = ((strength * along).exp() - (0.5 * strength * strength).exp()) / strength;
                for ((m, gi), u) in mean.iter().zip(&g).zip(direction) {
                    let perp = gi - along * u;
                    out.push(m + scale * (perp + u * tail));
                }
            }
            Sampler::Mixture { cumulative, parts } => {
                let u = stream.uniform();
                let idx = cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(parts.len() - 1);
                parts[idx].draw(stream, out);
            }
        }
    }

    fn sample(&self, n: usize, stream: &mut Stream) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let mut v = Vec::new();
                self.draw(stream, &mut v);
                v
            })
            .collect()
    }
}

fn check_skew_params(scale: f64, direction: &[f64], strength: f64) -> Result<()> {
    if !(strength >= 0.0) || !strength.is_finite() {
        return Err(Error::invalid(format!("skew strength must be >= 0, got {strength}")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::invalid(format!("scale must be positive, got {scale}")));
    }
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("skew direction must be a unit vector (norm {norm})")));
    }
    Ok(())
}

/// `n` draws from `N(mean, covariance)`.
pub fn sample_gaussian(n: usize, mean: &[f64], covariance: &Covariance, stream: &mut Stream) -> Result<Vec<Vec<f64>>> {
    let s = Sampler::compile(
        &SamplerSpec::Gaussian {
            mean: mean.to_vec(),
            covariance: covariance.clone(),
        },
        mean.len(),
    )?;
    Ok(s.sample(n, stream))
}

/// `n` draws of `mean + scale * (g_perp + u * (exp(k g_u) - exp(k^2/2)) / k)`
/// with `g ~ N(0, I)`, `g_u = g . u` and `g_perp = g - g_u u`.
///
/// The tail term has mean zero, so `mean` is the distribution mean, and it
/// tends to `g_u` as `k -> 0`; at `k = 0` the draw is exactly
/// `sample_gaussian(n, mean, scale^2 I)` on the same stream.
pub fn sample_skewed(
    n: usize,
    mean: &[f64],
    scale: f64,
    direction: &[f64],
    strength: f64,
    stream: &mut Stream,
) -> Result<Vec<Vec<f64>>> {
    let s = Sampler::compile(
        &SamplerSpec::Skewed {
            mean: mean.to_vec(),
            scale,
            direction: direction.to_vec(),
            strength,
        },
        mean.len(),
    )?;
    Ok(s.sample(n, stream))
}

pub fn build_scenario(scenario: &Scenario) -> Result<AttributeSpace> {
    Ok(build_scenario_detailed(scenario)?.space)
}

/// Builds the space and reports which ordinals were relabeled.
pub fn build_scenario_detailed(scenario: &Scenario) -> Result<SynthOutput> {
    scenario.validate()?;
    let schema = scenario.schema()?;
    let mut jobs = Vec::new();
    for (ai, a) in scenario.aspects.iter().enumerate() {
        for (ti, t) in a.attributes.iter().enumerate() {
            jobs.push((
                AttributeId {
                    aspect: ai,
                    attribute: ti,
                },
                t,
            ));
        }
    }
    let samples: Vec<Vec<Vec<f64>>> = jobs
        .par_iter()
        .enumerate()
        .map(|(ordinal, (_, spec))| {
            let sampler = Sampler::compile(&spec.sampler, scenario.dim)?;
            let mut stream = Stream::derive(scenario.seed, ordinal as u64, "attribute");
            Ok(sampler.sample(spec.count, &mut stream))
        })
        .collect::<Result<_>>()?;

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut points = PointMatrix::new(scenario.dim);
    for ((id, spec), pts) in jobs.iter().zip(samples) {
        for (i, p) in pts.iter().enumerate() {
            ids.push(format!("{}/{}/{i}", scenario.aspects[id.aspect].name, spec.name));
            labels.push(*id);
            points.push(p)?;
        }
    }

    let n = labels.len();
    let n_noisy = (scenario.noise * n as f64).floor() as usize;
    let mut noise_stream = Stream::derive(scenario.seed, 0, "label-noise");
    let relabeled = noise_stream.sample_without_replacement(n, n_noisy);
    let all_ids: Vec<AttributeId> = schema.attribute_ids().collect();
    for &o in &relabeled {
        labels[o] = all_ids[noise_stream.below(all_ids.len())];
    }
    let space = AttributeSpace::from_parts(schema, ids, labels, points)?;
    Ok(SynthOutput { space, relabeled })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skewness(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
        m3 / m2.powf(1.5)
    }

    #[test]
    fn gaussian_sample_mean_bound() {
        let mut s = Stream::derive(0, 0, "g");
        let pts = sample_gaussian(1000, &[0.0, 0.0], &Covariance::Isotropic(1.0), &mut s).unwrap();
        let m = PointMatrix::from_rows(&pts).unwrap().mean().unwrap();
        // 3 sigma / sqrt(n) per coordinate, combined over two coordinates.
        let bound = 3.0 / (1000f64).sqrt() * 2f64.sqrt();
        assert!(bound < 0.15);
        assert!((m[0] * m[0] + m[1] * m[1]).sqrt() <= 0.15);
    }

    #[test]
    fn non_spd_covariance_rejected() {
        let mut s = Stream::derive(0, 0, "g");
        let cov = Covariance::Full(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(
            sample_gaussian(10, &[0.0, 0.0], &cov, &mut s),
            Err(Error::NotPositiveDefinite)
        ));
        let asym = Covariance::Full(vec![vec![1.0, 0.1], vec![0.0, 1.0]]);
        assert!(sample_gaussian(10, &[0.0, 0.0], &asym, &mut s).is_err());
    }

    #[test]
    fn gaussian_is_deterministic_per_stream() {
        let cov = Covariance::Full(vec![vec![2.0, 0.3], vec![0.3, 1.0]]);
        let a = sample_gaussian(50, &[1.0, 2.0], &cov, &mut Stream::derive(5, 1, "x")).unwrap();
        let b = sample_gaussian(50, &[1.0, 2.0], &cov, &mut Stream::derive(5, 1, "x")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn skewed_with_zero_strength_is_gaussian() {
        let dir = [0.6, 0.8];
        let a = sample_skewed(200, &[1.0, -1.0], 0.7, &dir, 0.0, &mut Stream::derive(9, 0, "s")).unwrap();
        let b = sample_gaussian(200, &[1.0, -1.0], &Covariance::Isotropic(0.49), &mut Stream::derive(9, 0, "s"))
            .unwrap();
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn skewed_errors_and_empty() {
        let mut s = Stream::derive(0, 0, "s");
        assert!(sample_skewed(5, &[0.0, 0.0], 1.0, &[1.0, 0.0], -0.5, &mut s).is_err());
        assert!(sample_skewed(5, &[0.0, 0.0], 1.0, &[1.0, 1.0], 1.0, &mut s).is_err());
        assert!(sample_skewed(0, &[0.0, 0.0], 1.0, &[1.0, 0.0], 1.0, &mut s).unwrap().is_empty());
    }

    #[test]
    fn skewed_moments() {
        let dir = [0.6, 0.8];
        let perp = [-0.8, 0.6];
        let proj = |pts: &[Vec<f64>], u: &[f64; 2]| -> Vec<f64> {
            pts.iter().map(|p| p[0] * u[0] + p[1] * u[1]).collect()
        };
        // Monte-Carlo oracle of the transform's third standardized moment.
        let mut os = Stream::derive(1234, 0, "oracle");
        let oracle: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let g = os.normal();
                g.exp() - 0.5f64.exp()
            })
            .collect();
        let oracle_skew = skewness(&oracle);
        assert!(oracle_skew > 3.0, "oracle skewness {oracle_skew}");

        let pts = sample_skewed(2000, &[0.0, 0.0], 1.0, &dir, 1.0, &mut Stream::derive(0, 0, "k1")).unwrap();
        let along = skewness(&proj(&pts, &dir));
        let across = skewness(&proj(&pts, &perp));
        assert!(along > 1.0, "along {along}");
        assert!(across.abs() < 0.2, "across {across}");
    }

    #[test]
    fn presets_build_deterministically() {
        for name in ScenarioName::PRESETS {
            let sc = Scenario::preset(name, 0).unwrap();
            let a = build_scenario_detailed(&sc).unwrap();
            let b = build_scenario_detailed(&sc).unwrap();
            assert_eq!(a.space, b.space, "{name}");
            let expected = (sc.noise * a.space.len() as f64).floor() as usize;
            assert_eq!(a.relabeled.len(), expected);
        }
        assert!(Scenario::preset("bogus", 0).unwrap_err().to_string().contains("skewed-tails"));
    }

    #[test]
    fn relabeling_keeps_vectors() {
        let clean = build_scenario(&Scenario::preset("skewed-tails", 0).unwrap()).unwrap();
        let noisy = build_scenario_detailed(&Scenario::preset("noise-contaminated", 0).unwrap()).unwrap();
        assert_eq!(clean.points(), noisy.space.points());
        assert_eq!(noisy.relabeled.len(), 200);
        assert!(build_scenario_detailed(&Scenario::preset("skewed-tails", 0).unwrap())
            .unwrap()
            .relabeled
            .is_empty());
    }

    #[test]
    fn adding_an_attribute_leaves_others_untouched() {
        let base = Scenario::preset("symmetric-overlap", 3).unwrap();
        let mut extended = base.clone();
        extended.aspects[1].attributes.push(AttributeSpec {
            name: "world".into(),
            count: 10,
            sampler: SamplerSpec::Gaussian {
                mean: vec![0.0, 5.0],
                covariance: Covariance::Isotropic(1.0),
            },
        });
        let a = build_scenario(&base).unwrap();
        let b = build_scenario(&extended).unwrap();
        for o in 0..a.len() {
            assert_eq!(a.vector(o), b.vector(o));
        }
    }

    #[test]
    fn mixture_and_json_round_trip() {
        let sc = Scenario {
            name: ScenarioName::Custom,
            dim: 2,
            aspects: vec![AspectSpec {
                name: "a".into(),
                attributes: vec![AttributeSpec {
                    name: "x".into(),
                    count: 500,
                    sampler: SamplerSpec::Mixture {
                        components: vec![
                            MixtureComponent {
                                weight: 0.5,
                                sampler: SamplerSpec::Gaussian {
                                    mean: vec![-10.0, 0.0],
                                    covariance: Covariance::Diagonal(vec![1.0, 1.0]),
                                },
                            },
                            MixtureComponent {
                                weight: 0.5,
                                sampler: SamplerSpec::Gaussian {
                                    mean: vec![10.0, 0.0],
                                    covariance: Covariance::Isotropic(1.0),
                                },
                            },
                        ],
                    },
                }],
            }],
            noise: 0.0,
            seed: 1,
        };
        let text = serde_json::to_string(&sc).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sc);
        let space = build_scenario(&sc).unwrap();
        let left = space.points().rows().filter(|r| r[0] < 0.0).count();
        assert!((200..300).contains(&left), "{left}");

        let mut bad = sc.clone();
        bad.noise = 1.0;
        assert!(bad.validate().is_err());
    }
}
