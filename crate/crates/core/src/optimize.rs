//! Constant fitting for a fixed equation structure.
//!
//! Equations without an `exp` summand are fitted by minibatch SGD on the
//! mean log loss. Equations with one go to a budgeted multi-start hill
//! climber: a fraction `f` of the `n` loss evaluations is spent on random
//! samples, the best `k` of which seed coordinate-wise `±α` steepest descent.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::EncodedDataset;
use crate::eval::{point_log_loss, sigmoid, SIGMOID_CLAMP};
use crate::expr::{Equation, ExprError, Summand, EXP_ARG_LIMIT};

/// SGD runs restarted with a halved learning rate before giving up.
pub const MAX_DIVERGENCE_RESTARTS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("optimizer diverged after {0} learning-rate halvings")]
    Diverged(usize),
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("cannot fit on an empty dataset")]
    EmptyData,
    #[error("equation uses feature {needed} but the dataset has {available}")]
    FeatureMismatch { needed: usize, available: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            epochs: 200,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillConfig {
    /// Total loss evaluations `n`.
    pub budget: usize,
    /// Fraction `f` of the budget spent on random samples.
    pub random_fraction: f64,
    /// Number `k` of random samples used as climbing starts.
    pub top_k: usize,
    /// Coordinate step `α`.
    pub step_size: f64,
}

impl Default for HillConfig {
    fn default() -> Self {
        Self {
            budget: 2000,
            random_fraction: 0.2,
            top_k: 5,
            step_size: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub sgd: SgdConfig,
    pub hill: HillConfig,
    /// Initial constants are drawn from `Uniform(-init_range, init_range)`.
    pub init_range: f64,
    /// Use SGD even for equations with `exp` summands.
    pub force_sgd: bool,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            sgd: SgdConfig::default(),
            hill: HillConfig::default(),
            init_range: 1.0,
            force_sgd: false,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |m: &str| Err(OptimizeError::Config(m.to_string()));
        let h = &self.hill;
        if !(self.sgd.learning_rate > 0.0) || self.sgd.epochs == 0 || self.sgd.batch_size == 0 {
            return bad("sgd needs learning_rate > 0, epochs >= 1, batch_size >= 1");
        }
        if !(h.random_fraction > 0.0 && h.random_fraction < 1.0) {
            return bad("hill random_fraction must be in (0, 1)");
        }
        if h.top_k == 0 || h.budget == 0 || !(h.step_size > 0.0) {
            return bad("hill needs budget >= 1, top_k >= 1, step_size > 0");
        }
        if random_sample_count(h.budget, h.random_fraction) < h.top_k {
            return bad("hill budget * random_fraction must be at least top_k");
        }
        if !(self.init_range > 0.0) {
            return bad("init_range must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sgd,
    HillClimb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub equation: Equation,
    /// Mean training log loss of `equation`.
    pub final_loss: f64,
    /// Full-dataset loss evaluations (SGD: one per epoch plus the start).
    pub evaluations_used: usize,
    pub method: Method,
    /// Hill climbing only: the per-start budget was too small for one step.
    pub budget_exhausted: bool,
    /// Hill climbing only: accepted moves across all starts.
    pub moves: usize,
}

/// `⌊n·f⌋`, the number of random samples.
pub fn random_sample_count(budget: usize, random_fraction: f64) -> usize {
    (budget as f64 * random_fraction + 1e-9).floor() as usize
}

/// `⌊n·(1 − f) / (2·k·p)⌋`, the climbing iterations granted to each start.
pub fn per_start_budget(budget: usize, random_fraction: f64, top_k: usize, n_constants: usize) -> usize {
    let denom = (2 * top_k * n_constants) as f64;
    (budget as f64 * (1.0 - random_fraction) / denom + 1e-9).floor() as usize
}

/// Mean log loss of `eq` on `data`, via the equation's own evaluation path.
pub fn mean_log_loss(eq: &Equation, data: &EncodedDataset) -> f64 {
    let mut overflow = false;
    let total: f64 = data
        .rows()
        .zip(data.labels())
        .map(|(x, &y)| point_log_loss(eq.value_unchecked(x, &mut overflow), y))
        .sum();
    total / data.len() as f64
}

/// Fits the constants of `eq`, choosing SGD or hill climbing by structure.
pub fn optimize_constants(
    eq: &Equation,
    data: &EncodedDataset,
    cfg: &OptimizerConfig,
) -> Result<FitResult, OptimizeError> {
    optimize_constants_from(eq, data, cfg, None)
}

/// Like [`optimize_constants`], but seeded with a known starting point:
/// SGD starts there instead of at a random vector, and the hill climber
/// uses it in place of its first random sample.
pub fn optimize_constants_from(
    eq: &Equation,
    data: &EncodedDataset,
    cfg: &OptimizerConfig,
    start: Option<&[f64]>,
) -> Result<FitResult, OptimizeError> {
    if let Some(s) = start {
        if s.len() != eq.constant_count() || s.iter().any(|v| !v.is_finite()) {
            return Err(OptimizeError::Config(
                "start point must hold one finite value per constant".into(),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if eq.has_exp() && !cfg.force_sgd {
        hill_climb_from(eq, data, cfg, start, &mut rng)
    } else {
        sgd_fit_from(eq, data, cfg, start, &mut rng)
    }
}

fn check_inputs(eq: &Equation, data: &EncodedDataset, cfg: &OptimizerConfig) -> Result<(), OptimizeError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(OptimizeError::EmptyData);
    }
    if eq.required_features() > data.n_features() {
        return Err(OptimizeError::FeatureMismatch {
            needed: eq.required_features(),
            available: data.n_features(),
        });
    }
    Ok(())
}

fn random_constants<R: Rng>(p: usize, range: f64, rng: &mut R) -> Vec<f64> {
    (0..p).map(|_| rng.random_range(-range..range)).collect()
}

/// Minibatch SGD from a random start; returns the best constants seen at
/// any epoch boundary.
pub fn sgd_fit<R: Rng>(
    eq: &Equation,
    data: &EncodedDataset,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<FitResult, OptimizeError> {
    sgd_fit_from(eq, data, cfg, None, rng)
}

fn sgd_fit_from<R: Rng>(
    eq: &Equation,
    data: &EncodedDataset,
    cfg: &OptimizerConfig,
    start: Option<&[f64]>,
    rng: &mut R,
) -> Result<FitResult, OptimizeError> {
    check_inputs(eq, data, cfg)?;
    let kernel = LossKernel::new(eq, data);
    let start = match start {
        Some(s) => s.to_vec(),
        None => random_constants(eq.constant_count(), cfg.init_range, rng),
    };
    let mut lr = cfg.sgd.learning_rate;
    for halvings in 0..=MAX_DIVERGENCE_RESTARTS {
        if let Some((best, evals)) = sgd_run(&kernel, &start, lr, &cfg.sgd, rng) {
            let equation = eq.with_constants(&best)?;
            let final_loss = mean_log_loss(&equation, data);
            return Ok(FitResult {
                equation,
                final_loss,
                evaluations_used: evals,
                method: Method::Sgd,
                budget_exhausted: false,
                moves: 0,
            });
        }
        if halvings == MAX_DIVERGENCE_RESTARTS {
            break;
        }
        lr /= 2.0;
    }
    Err(OptimizeError::Diverged(MAX_DIVERGENCE_RESTARTS))
}

/// Returns `None` when the run diverges.
fn sgd_run<R: Rng>(
    kernel: &LossKernel,
    start: &[f64],
    lr: f64,
    sgd: &SgdConfig,
    rng: &mut R,
) -> Option<(Vec<f64>, usize)> {
    let n = kernel.len();
    let p = start.len();
    let mut c = start.to_vec();
    let mut best = c.clone();
    let mut best_loss = kernel.loss(&c);
    let mut evals = 1;
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; p];
    let mut point_grad = vec![0.0; p];
    for _ in 0..sgd.epochs {
        order.shuffle(rng);
        for batch in order.chunks(sgd.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let z = kernel.value(&c, i);
                let residual = sigmoid(z) - f64::from(u8::from(kernel.labels[i]));
                kernel.gradient(&c, i, &mut point_grad);
                for (g, d) in grad.iter_mut().zip(&point_grad) {
                    *g += residual * d;
                }
            }
            let scale = lr / batch.len() as f64;
            for (ci, g) in c.iter_mut().zip(&grad) {
                *ci -= scale * g;
            }
        }
        let loss = kernel.loss(&c);
        evals += 1;
        if !loss.is_finite() || c.iter().any(|v| !v.is_finite()) {
            return None;
        }
        if loss < best_loss {
            best_loss = loss;
            best.copy_from_slice(&c);
        }
    }
    Some((best, evals))
}

/// Budgeted multi-start hill climbing.
pub fn hill_climb<R: Rng>(
    eq: &Equation,
    data: &EncodedDataset,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<FitResult, OptimizeError> {
    hill_climb_from(eq, data, cfg, None, rng)
}

fn hill_climb_from<R: Rng>(
    eq: &Equation,
    data: &EncodedDataset,
    cfg: &OptimizerConfig,
    start: Option<&[f64]>,
    rng: &mut R,
) -> Result<FitResult, OptimizeError> {
    check_inputs(eq, data, cfg)?;
    let kernel = LossKernel::new(eq, data);
    let p = eq.constant_count();
    let n_samples = random_sample_count(cfg.hill.budget, cfg.hill.random_fraction);
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(n_samples);
    if let Some(s) = start.filter(|_| n_samples > 0) {
        samples.push(s.to_vec());
    }
    while samples.len() < n_samples {
        samples.push(random_constants(p, cfg.init_range, rng));
    }
    let outcome = climb(&kernel, samples, &cfg.hill);
    let equation = eq.with_constants(&outcome.best)?;
    let final_loss = mean_log_loss(&equation, data);
    Ok(FitResult {
        equation,
        final_loss,
        evaluations_used: outcome.evaluations,
        method: Method::HillClimb,
        budget_exhausted: outcome.budget_exhausted,
        moves: outcome.moves,
    })
}

/// Anything the hill climber can minimize.
pub trait Objective {
    fn dim(&self) -> usize;
    fn loss(&self, point: &[f64]) -> f64;

    /// Loss at `point` with coordinate `index` replaced by `value`.
    /// `state` caches whatever [`Objective::prepare`] computed for `point`.
    fn loss_with(&self, point: &[f64], _state: &Self::State, index: usize, value: f64) -> f64 {
        let mut moved = point.to_vec();
        moved[index] = value;
        self.loss(&moved)
    }

    type State;
    fn prepare(&self, point: &[f64]) -> Self::State;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClimbOutcome {
    pub best: Vec<f64>,
    pub best_loss: f64,
    pub evaluations: usize,
    pub moves: usize,
    pub budget_exhausted: bool,
    /// Iterations granted to each start.
    pub per_start_budget: usize,
}

/// Runs both phases given the random samples already drawn.
pub fn climb<O: Objective>(objective: &O, samples: Vec<Vec<f64>>, hill: &HillConfig) -> ClimbOutcome {
    let p = objective.dim();
    let mut evaluations = 0;
    let mut scored: Vec<(f64, usize)> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            evaluations += 1;
            (objective.loss(s), i)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let iterations = per_start_budget(hill.budget, hill.random_fraction, hill.top_k, p);
    let (mut best_loss, best_idx) = scored[0];
    let mut best = samples[best_idx].clone();
    let mut moves = 0;
    if iterations == 0 {
        return ClimbOutcome {
            best,
            best_loss,
            evaluations,
            moves,
            budget_exhausted: true,
            per_start_budget: 0,
        };
    }
    let alpha = hill.step_size;
    for &(start_loss, idx) in scored.iter().take(hill.top_k) {
        let mut current = samples[idx].clone();
        let mut current_loss = start_loss;
        for _ in 0..iterations {
            let state = objective.prepare(&current);
            let mut step: Option<(usize, f64, f64)> = None;
            for j in 0..p {
                for value in [current[j] + alpha, current[j] - alpha] {
                    let loss = objective.loss_with(&current, &state, j, value);
                    evaluations += 1;
                    let target = step.map_or(current_loss, |s| s.2);
                    if loss < target {
                        step = Some((j, value, loss));
                    }
                }
            }
            match step {
                Some((j, value, loss)) => {
                    current[j] = value;
                    current_loss = loss;
                    moves += 1;
                }
                None => break,
            }
        }
        if current_loss < best_loss {
            best_loss = current_loss;
            best = current;
        }
    }
    ClimbOutcome {
        best,
        best_loss,
        evaluations,
        moves,
        budget_exhausted: false,
        per_start_budget: iterations,
    }
}

#[derive(Debug, Clone, Copy)]
enum Term {
    Linear,
    Exp,
}

/// Mean log loss of a fixed structure as a function of its constants, with
/// each summand's feature expression precomputed per row.
pub(crate) struct LossKernel<'a> {
    labels: &'a [bool],
    /// Per summand: (kind, index of first constant, basis values per row).
    terms: Vec<(Term, usize, Vec<f64>)>,
    p: usize,
}

impl<'a> LossKernel<'a> {
    pub(crate) fn new(eq: &Equation, data: &'a EncodedDataset) -> Self {
        let mut pos = 1;
        let terms = eq
            .summands()
            .iter()
            .map(|s| {
                let (term, basis): (Term, Vec<f64>) = match *s {
                    Summand::Linear { feature, .. } => {
                        (Term::Linear, data.rows().map(|x| x[feature.0]).collect())
                    }
                    Summand::Product { left, right, .. } => (
                        Term::Linear,
                        data.rows().map(|x| x[left.0] * x[right.0]).collect(),
                    ),
                    Summand::Exp { feature, .. } => {
                        (Term::Exp, data.rows().map(|x| x[feature.0]).collect())
                    }
                    Summand::Power {
                        feature, degree, ..
                    } => (
                        Term::Linear,
                        data.rows()
                            .map(|x| x[feature.0].powi(i32::from(degree)))
                            .collect(),
                    ),
                };
                let first = pos;
                pos += match term {
                    Term::Linear => 1,
                    Term::Exp => 2,
                };
                (term, first, basis)
            })
            .collect();
        Self {
            labels: data.labels(),
            terms,
            p: pos,
        }
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    fn term_value(term: Term, c: &[f64], first: usize, b: f64) -> f64 {
        match term {
            Term::Linear => c[first] * b,
            Term::Exp => c[first] * exp_clamped(c[first + 1] * b),
        }
    }

    #[inline]
    fn value(&self, c: &[f64], i: usize) -> f64 {
        let mut z = c[0];
        for (term, first, basis) in &self.terms {
            z += Self::term_value(*term, c, *first, basis[i]);
        }
        z
    }

    #[inline]
    fn gradient(&self, c: &[f64], i: usize, out: &mut [f64]) {
        out[0] = 1.0;
        for (term, first, basis) in &self.terms {
            let b = basis[i];
            match term {
                Term::Linear => out[*first] = b,
                Term::Exp => {
                    let e = exp_clamped(c[first + 1] * b);
                    out[*first] = e;
                    out[first + 1] = c[*first] * b * e;
                }
            }
        }
    }

    fn mean_loss(&self, z: impl Iterator<Item = f64>) -> f64 {
        let total: f64 = z
            .zip(self.labels)
            .map(|(z, &y)| point_log_loss(z, y))
            .sum();
        total / self.len() as f64
    }

    pub(crate) fn loss(&self, c: &[f64]) -> f64 {
        self.mean_loss((0..self.len()).map(|i| self.value(c, i)))
    }
}

#[inline]
fn exp_clamped(arg: f64) -> f64 {
    arg.clamp(-EXP_ARG_LIMIT, EXP_ARG_LIMIT).exp()
}

/// Cached pre-activations and per-summand contributions at one point.
pub(crate) struct KernelState {
    total: Vec<f64>,
    contrib: Vec<Vec<f64>>,
}

impl Objective for LossKernel<'_> {
    type State = KernelState;

    fn dim(&self) -> usize {
        self.p
    }

    fn loss(&self, point: &[f64]) -> f64 {
        LossKernel::loss(self, point)
    }

    fn prepare(&self, c: &[f64]) -> KernelState {
        let n = self.len();
        let contrib: Vec<Vec<f64>> = self
            .terms
            .iter()
            .map(|(term, first, basis)| {
                basis
                    .iter()
                    .map(|&b| Self::term_value(*term, c, *first, b))
                    .collect()
            })
            .collect();
        let total = (0..n)
            .map(|i| c[0] + contrib.iter().map(|v| v[i]).sum::<f64>())
            .collect();
        KernelState { total, contrib }
    }

    fn loss_with(&self, c: &[f64], state: &KernelState, index: usize, value: f64) -> f64 {
        if index == 0 {
            let delta = value - c[0];
            return self.mean_loss(state.total.iter().map(|t| t + delta));
        }
        let (s, (term, first, basis)) = self
            .terms
            .iter()
            .enumerate()
            .find(|(_, (term, first, _))| {
                let width = match term {
                    Term::Linear => 1,
                    Term::Exp => 2,
                };
                (*first..first + width).contains(&index)
            })
            .expect("constant index belongs to a summand");
        let mut moved = [c[*first], c.get(first + 1).copied().unwrap_or(0.0)];
        moved[index - first] = value;
        let old = &state.contrib[s];
        self.mean_loss((0..self.len()).map(|i| {
            let new = match term {
                Term::Linear => moved[0] * basis[i],
                Term::Exp => moved[0] * exp_clamped(moved[1] * basis[i]),
            };
            state.total[i] - old[i] + new
        }))
    }
}

/// Log-odds of the positive rate, the optimum of a constant-only model.
pub fn base_rate_log_odds(data: &EncodedDataset) -> f64 {
    let rate = data.positives() as f64 / data.len() as f64;
    let rate = rate.clamp(sigmoid(-SIGMOID_CLAMP), sigmoid(SIGMOID_CLAMP));
    (rate / (1.0 - rate)).ln()
}
