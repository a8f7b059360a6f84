//! Synthetic two-feature classification problems.
//!
//! Four protocols: boundaries sampled from the search grammar (with and
//! without coordinate noise), boundaries from the grammar extended with
//! cubic and quartic terms, and mixtures of six Gaussian clusters.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::EncodedDataset;
use crate::expr::{Equation, GrammarConfig, SummandShape};

/// Consecutive rejected draws before a generator gives up.
pub const MAX_REJECTIONS: usize = 50;
/// Accepted range of the positive-class fraction.
pub const BALANCE_RANGE: (f64, f64) = (0.05, 0.95);
/// Sampled constants are redrawn while their magnitude is below this.
pub const MIN_ABS_CONSTANT: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("no admissible summand structure left")]
    NoStructure,
    #[error("class balance {0:.3} outside the accepted range")]
    Degenerate(f64),
    #[error("gave up after {0} consecutive rejected draws")]
    GenerationFailed(usize),
    #[error("boundary equation uses {0} features; generators are two-dimensional")]
    Dimension(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_points: usize,
    /// Sampling interval for each feature.
    pub domain: Vec<(f64, f64)>,
    pub noise_sigma: f64,
    /// Generating constants are drawn from `Uniform(-constant_range, constant_range)`.
    pub constant_range: f64,
    /// Summand counts for sampled boundary equations.
    pub depth_range: (usize, usize),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_points: 2000,
            domain: vec![(-10.0, 10.0), (-10.0, 10.0)],
            noise_sigma: 2.0,
            constant_range: 3.0,
            depth_range: (1, 3),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn noise_free(mut self) -> Self {
        self.noise_sigma = 0.0;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Labelled points in raw coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    /// Row-major `n x 2`.
    pub points: Vec<f64>,
    pub labels: Vec<bool>,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positive_fraction(&self) -> f64 {
        self.labels.iter().filter(|&&y| y).count() as f64 / self.len().max(1) as f64
    }

    pub fn feature_names() -> Vec<String> {
        vec!["x1".into(), "x2".into()]
    }

    /// Min-max normalized copy, ready for search.
    pub fn to_dataset(&self) -> EncodedDataset {
        EncodedDataset::from_raw(
            self.points.clone(),
            2,
            self.labels.clone(),
            Self::feature_names(),
        )
        .expect("generated points are finite and rectangular")
    }
}

/// A dataset labelled by a known boundary, with its pre-noise copy.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDataset {
    pub equation: Equation,
    pub noisy: PointSet,
    /// Points before noise; labels match `noisy`.
    pub clean: PointSet,
}

fn sample_constant<R: Rng>(rng: &mut R, range: f64) -> f64 {
    loop {
        let c = rng.random_range(-range..range);
        if c.abs() >= MIN_ABS_CONSTANT.min(range / 2.0) {
            return c;
        }
    }
}

/// Random equation: summand count uniform in `depth_range`, each summand
/// uniform over the structures not yet used, constants uniform in
/// `±constant_range` with magnitude at least [`MIN_ABS_CONSTANT`].
pub fn sample_equation<R: Rng>(
    grammar: &GrammarConfig,
    rng: &mut R,
    depth_range: (usize, usize),
    constant_range: f64,
) -> Result<Equation, SynthError> {
    let (lo, hi) = depth_range;
    let depth = rng.random_range(lo..=hi.max(lo));
    let mut shapes: Vec<SummandShape> = Vec::with_capacity(depth);
    let all = grammar.shapes();
    for _ in 0..depth {
        let open: Vec<SummandShape> = all.iter().copied().filter(|s| !shapes.contains(s)).collect();
        let pick = *open.choose(rng).ok_or(SynthError::NoStructure)?;
        shapes.push(pick);
    }
    let intercept = sample_constant(rng, constant_range);
    let summands = shapes
        .into_iter()
        .map(|shape| {
            let c: Vec<f64> = (0..shape.constant_count())
                .map(|_| sample_constant(rng, constant_range))
                .collect();
            shape.with_constants(&c)
        })
        .collect();
    Ok(Equation::new(intercept, summands).expect("distinct shapes"))
}

fn uniform_points<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.n_points * cfg.domain.len());
    for _ in 0..cfg.n_points {
        for &(lo, hi) in &cfg.domain {
            out.push(rng.random_range(lo..=hi));
        }
    }
    out
}

fn add_noise<R: Rng>(points: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return points.to_vec();
    }
    points
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(rng);
            v + sigma * z
        })
        .collect()
}

fn balanced(labels: &[bool]) -> Result<(), SynthError> {
    let frac = labels.iter().filter(|&&y| y).count() as f64 / labels.len().max(1) as f64;
    if frac < BALANCE_RANGE.0 || frac > BALANCE_RANGE.1 {
        Err(SynthError::Degenerate(frac))
    } else {
        Ok(())
    }
}

/// Draws points uniformly over the domain, labels each `eq(x) >= 0`, then
/// perturbs the coordinates (never the labels) with `N(0, σ²)` noise.
///
/// Fails with [`SynthError::Degenerate`] when the class balance falls
/// outside [`BALANCE_RANGE`].
pub fn gen_boundary_dataset<R: Rng>(
    eq: &Equation,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<BoundaryDataset, SynthError> {
    if eq.required_features() > cfg.domain.len() {
        return Err(SynthError::Dimension(eq.required_features()));
    }
    let points = uniform_points(cfg, rng);
    let width = cfg.domain.len();
    let labels: Vec<bool> = points
        .chunks_exact(width)
        .map(|x| eq.evaluate(x).expect("finite points in range") >= 0.0)
        .collect();
    balanced(&labels)?;
    let noisy = add_noise(&points, cfg.noise_sigma, rng);
    Ok(BoundaryDataset {
        equation: eq.clone(),
        noisy: PointSet {
            points: noisy,
            labels: labels.clone(),
        },
        clean: PointSet { points, labels },
    })
}

fn gen_with_rejection<R: Rng>(
    grammar: &GrammarConfig,
    cfg: &SynthConfig,
    rng: &mut R,
    accept: impl Fn(&Equation) -> bool,
) -> Result<BoundaryDataset, SynthError> {
    let mut rejections = 0;
    loop {
        let eq = sample_equation(grammar, rng, cfg.depth_range, cfg.constant_range)?;
        if accept(&eq) {
            match gen_boundary_dataset(&eq, cfg, rng) {
                Ok(ds) => return Ok(ds),
                Err(SynthError::Degenerate(_)) => {}
                Err(e) => return Err(e),
            }
        }
        rejections += 1;
        if rejections >= MAX_REJECTIONS {
            return Err(SynthError::GenerationFailed(rejections));
        }
    }
}

/// Boundary sampled from the two-feature search grammar.
pub fn gen_within_dataset(cfg: &SynthConfig) -> Result<BoundaryDataset, SynthError> {
    let grammar = GrammarConfig::search(2, cfg.depth_range.1);
    gen_with_rejection(&grammar, cfg, &mut cfg.rng(), |_| true)
}

/// Boundary sampled from the extended grammar; only equations with at least
/// one power summand are kept.
pub fn gen_beyond_dataset(cfg: &SynthConfig) -> Result<BoundaryDataset, SynthError> {
    let grammar = GrammarConfig::extended(2, cfg.depth_range.1);
    gen_with_rejection(&grammar, cfg, &mut cfg.rng(), Equation::has_power)
}

/// One Gaussian component of a cluster mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub mean: [f64; 2],
    /// Row-major 2x2 covariance.
    pub covariance: [[f64; 2]; 2],
    pub positive: bool,
    pub weight: f64,
    /// Rotation angle and standard deviations the covariance was built from.
    pub angle: f64,
    pub scales: [f64; 2],
}

impl ClusterSpec {
    /// Builds `R diag(s1², s2²) Rᵀ` for rotation angle `angle`.
    pub fn new(mean: [f64; 2], angle: f64, scales: [f64; 2], positive: bool, weight: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let (a, b) = (scales[0] * scales[0], scales[1] * scales[1]);
        let covariance = [
            [c * c * a + s * s * b, c * s * (a - b)],
            [c * s * (a - b), s * s * a + c * c * b],
        ];
        Self {
            mean,
            covariance,
            positive,
            weight,
            angle,
            scales,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        let (s, c) = self.angle.sin_cos();
        let (u, v) = (self.scales[0] * z0, self.scales[1] * z1);
        [self.mean[0] + c * u - s * v, self.mean[1] + s * u + c * v]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDataset {
    pub clusters: Vec<ClusterSpec>,
    pub data: PointSet,
}

/// Scale bounds for cluster standard deviations.
pub const CLUSTER_SCALE_RANGE: (f64, f64) = (0.5, 2.5);

/// Draws points for each cluster; sizes differ by at most one, earlier
/// clusters taking the remainder.
pub fn sample_clusters<R: Rng>(clusters: &[ClusterSpec], n_points: usize, rng: &mut R) -> PointSet {
    let k = clusters.len();
    let mut points = Vec::with_capacity(2 * n_points);
    let mut labels = Vec::with_capacity(n_points);
    for (i, spec) in clusters.iter().enumerate() {
        let size = n_points / k + usize::from(i < n_points % k);
        for _ in 0..size {
            points.extend(spec.sample(rng));
            labels.push(spec.positive);
        }
    }
    PointSet { points, labels }
}

/// Six clusters with uniform means over the domain, random orientation and
/// scales; two uniformly chosen clusters are positive.
pub fn gen_gaussian_clusters(cfg: &SynthConfig) -> ClusterDataset {
    let mut rng = cfg.rng();
    let mut classes = [true, true, false, false, false, false];
    classes.shuffle(&mut rng);
    let clusters: Vec<ClusterSpec> = classes
        .iter()
        .map(|&positive| {
            let mean = [
                rng.random_range(cfg.domain[0].0..=cfg.domain[0].1),
                rng.random_range(cfg.domain[1].0..=cfg.domain[1].1),
            ];
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let scales = [
                rng.random_range(CLUSTER_SCALE_RANGE.0..=CLUSTER_SCALE_RANGE.1),
                rng.random_range(CLUSTER_SCALE_RANGE.0..=CLUSTER_SCALE_RANGE.1),
            ];
            ClusterSpec::new(mean, angle, scales, positive, 1.0 / 6.0)
        })
        .collect();
    let data = sample_clusters(&clusters, cfg.n_points, &mut rng);
    ClusterDataset { clusters, data }
}

/// Four isotropic clusters at `(±offset, ±offset)`, positive where the
/// coordinates share a sign.
pub fn gen_xor_clusters(cfg: &SynthConfig, offset: f64, scale: f64) -> ClusterDataset {
    let mut rng = cfg.rng();
    let clusters: Vec<ClusterSpec> = [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)]
        .iter()
        .map(|&(a, b)| ClusterSpec::new([a * offset, b * offset], 0.0, [scale, scale], a * b > 0.0, 0.25))
        .collect();
    let data = sample_clusters(&clusters, cfg.n_points, &mut rng);
    ClusterDataset { clusters, data }
}
