//! Training loops: full-batch steepest descent on the margin objective, the
//! stochastic projected variant with squared-norm regularization and the
//! one-shot data-driven rescale, and the Pegasos baseline.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{scale_from_quantile, scale_from_variance, MarginSample};
use crate::harness::{margin_stats, misclassification_error, MarginStats};
use crate::loss::{objective, objective_gradient, psi, LinearModel, ScaledLoss};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Batch,
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    MarginPursuit,
    Pegasos,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::MarginPursuit => "margin_pursuit",
            Algorithm::Pegasos => "pegasos",
        }
    }
}

/// Step-size rule: a fixed step for batch descent, or the decaying
/// regularized schedule `alpha_t = 1 / (s sqrt(lambda) (1 + t))` for
/// stochastic runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Fixed(f64),
    RegularizedDecay,
}

/// Weight initialization: random uniform on `[-1/sqrt(d), 1/sqrt(d)]` drawn
/// from the run seed, zeros, or an explicit vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    RandomUniform,
    Zeros,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Initial scale and margin level; the scale may be updated by the
    /// batch scaling rule or the one-shot rescale.
    pub loss: ScaledLoss,
    /// Bias fraction `k` in the variance scaling rule.
    pub k_bias: f64,
    pub step: StepRule,
    /// Squared-norm regularization coefficient.
    pub lambda: f64,
    /// Iteration budget (gradient steps).
    pub iters: usize,
    pub seed: u64,
    pub mode: Mode,
    pub algorithm: Algorithm,
    /// Step index at which to apply the one-shot quantile rescale.
    pub rescale_at: Option<usize>,
    /// Confidence parameter for the scale formulas.
    pub delta: f64,
    /// Inflation factor applied to the plug-in variance estimate.
    pub variance_inflation: f64,
    pub init: Init,
}

impl TrainConfig {
    pub fn new(loss: ScaledLoss) -> Self {
        TrainConfig {
            loss,
            k_bias: 10.0,
            step: StepRule::RegularizedDecay,
            lambda: 1e-3,
            iters: 1,
            seed: 0,
            mode: Mode::Stochastic,
            algorithm: Algorithm::MarginPursuit,
            rescale_at: None,
            delta: 0.05,
            variance_inflation: 1.5,
            init: Init::RandomUniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::Config("iteration budget must be at least 1".into()));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if let StepRule::Fixed(a) = self.step {
            if a.is_nan() || a < 0.0 || !a.is_finite() {
                return Err(Error::Config(format!(
                    "fixed step must be non-negative, got {a}"
                )));
            }
        }
        if self.k_bias.is_nan() || self.k_bias <= 0.0 {
            return Err(Error::Config(format!(
                "k must be positive, got {}",
                self.k_bias
            )));
        }
        if self.delta.is_nan() || self.delta <= 0.0 || self.delta >= 1.0 {
            return Err(Error::Config(format!(
                "delta must be in (0,1), got {}",
                self.delta
            )));
        }
        if self.mode == Mode::Stochastic
            && self.step == StepRule::RegularizedDecay
            && self.lambda <= 0.0
        {
            return Err(Error::Config(
                "the decaying regularized schedule requires lambda > 0".into(),
            ));
        }
        if self.algorithm == Algorithm::Pegasos && self.lambda <= 0.0 {
            return Err(Error::Config("the baseline requires lambda > 0".into()));
        }
        Ok(())
    }
}

/// One recorded point along a training run. `cost` counts single-point
/// gradient evaluations; margin statistics are over the training margins at
/// the scale in force when the record was taken.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub cost: u64,
    pub scale: f64,
    pub objective: f64,
    pub train_error: f64,
    /// NaN when the run has no evaluation set.
    pub test_error: f64,
    pub margins: MarginStats,
}

#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub checkpoints: Vec<Checkpoint>,
}

fn record(
    trace: &mut TrainTrace,
    w: &LinearModel,
    data: &Dataset,
    eval: Option<&Dataset>,
    loss: &ScaledLoss,
    cost: u64,
) -> Result<()> {
    let test_error = match eval {
        Some(ds) => misclassification_error(w, ds)?,
        None => f64::NAN,
    };
    trace.checkpoints.push(Checkpoint {
        cost,
        scale: loss.s,
        objective: objective(w, data, loss)?,
        train_error: misclassification_error(w, data)?,
        test_error,
        margins: margin_stats(w, data, loss)?,
    });
    Ok(())
}

fn init_weights(cfg: &TrainConfig, dim: usize, rng: &mut ChaCha8Rng) -> Result<LinearModel> {
    match &cfg.init {
        Init::Zeros => Ok(LinearModel::zeros(dim)),
        Init::Explicit(w) => {
            if w.len() != dim {
                return Err(Error::Config(format!(
                    "explicit init has dimension {}, dataset has {dim}",
                    w.len()
                )));
            }
            Ok(LinearModel::from_weights(w.clone()))
        }
        Init::RandomUniform => {
            let bound = 1.0 / (dim as f64).sqrt();
            Ok(LinearModel::from_weights(
                (0..dim).map(|_| rng.random_range(-bound..bound)).collect(),
            ))
        }
    }
}

/// Scale the model into the radius-`r` ball if it lies outside.
pub fn project_ball(w: &LinearModel, r: f64) -> LinearModel {
    let mut out = w.clone();
    project_in_place(&mut out, r);
    out
}

fn project_in_place(w: &mut LinearModel, r: f64) {
    // rescaling can land an ulp outside the ball; repeat until inside, and
    // stop on a rounding fixed point, so projection is exactly idempotent
    loop {
        let norm = w.norm();
        if norm <= r || norm.is_nan() {
            return;
        }
        let mut changed = false;
        for v in &mut w.weights {
            let scaled = *v * r / norm;
            if scaled != *v {
                changed = true;
            }
            *v = scaled;
        }
        if !changed {
            return;
        }
    }
}

/// One full-batch steepest-descent step `w - alpha * gradient` with the
/// configured fixed step and loss.
pub fn gd_step(w: &LinearModel, data: &Dataset, cfg: &TrainConfig) -> Result<LinearModel> {
    let alpha = match cfg.step {
        StepRule::Fixed(a) => a,
        StepRule::RegularizedDecay => {
            return Err(Error::Config(
                "batch descent needs a fixed step size".into(),
            ))
        }
    };
    let grad = objective_gradient(w, data, &cfg.loss)?;
    Ok(LinearModel::from_weights(
        w.weights
            .iter()
            .zip(&grad)
            .map(|(wj, gj)| wj - alpha * gj)
            .collect(),
    ))
}

/// Full-batch descent for `iters` steps. The scale is set once up front
/// from the variance rule applied to the initial margins (inflated plug-in
/// estimate), floored at the configured initial scale.
pub fn train_batch(
    data: &Dataset,
    cfg: &TrainConfig,
    eval: Option<&Dataset>,
) -> Result<(LinearModel, TrainTrace)> {
    cfg.validate()?;
    if cfg.mode != Mode::Batch {
        return Err(Error::Config("train_batch requires batch mode".into()));
    }
    if data.n() == 0 {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = init_weights(cfg, data.dim(), &mut rng)?;

    let mut eff = cfg.clone();
    if cfg.loss.gamma > 0.0 {
        let margins = data.margins(&w);
        let mean = margins.iter().sum::<f64>() / margins.len() as f64;
        let var =
            margins.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / margins.len() as f64;
        let floor = scale_from_variance(var * cfg.variance_inflation, cfg.k_bias, cfg.loss.gamma)?;
        eff.loss.s = cfg.loss.s.max(floor);
    }

    let n = data.n() as u64;
    let mut trace = TrainTrace::default();
    let mut cost = 0u64;
    for _ in 0..cfg.iters {
        w = gd_step(&w, data, &eff)?;
        cost += n;
        record(&mut trace, &w, data, eval, &eff.loss, cost)?;
    }
    Ok((w, trace))
}

/// Stochastic projected descent on the regularized margin objective:
/// single-point gradients, steps `1/(s sqrt(lambda) (1+t))`, projection to
/// the `1/sqrt(lambda)` ball, and an optional one-shot rescale of `s` from
/// the quantile rule at a pre-fixed step.
pub fn train_stochastic(
    data: &Dataset,
    cfg: &TrainConfig,
    eval: Option<&Dataset>,
) -> Result<(LinearModel, TrainTrace)> {
    cfg.validate()?;
    if cfg.mode != Mode::Stochastic {
        return Err(Error::Config(
            "train_stochastic requires stochastic mode".into(),
        ));
    }
    if cfg.algorithm != Algorithm::MarginPursuit {
        return Err(Error::Config(
            "train_stochastic runs the margin-pursuit update".into(),
        ));
    }
    if data.n() == 0 {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    let n = data.n();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = init_weights(cfg, data.dim(), &mut rng)?;
    let mut loss = cfg.loss;
    let radius = if cfg.lambda > 0.0 {
        Some(1.0 / cfg.lambda.sqrt())
    } else {
        None
    };

    let mut trace = TrainTrace::default();
    for t in 0..cfg.iters {
        if cfg.rescale_at == Some(t) {
            let sample = MarginSample::new(data.margins(&w))?;
            let s_new = scale_from_quantile(&sample, cfg.lambda, cfg.delta, 0.75)?;
            if s_new > 0.0 {
                loss.s = s_new;
            } // all-zero margins: keep the previous scale
        }
        let i = rng.random_range(0..n);
        let m = data.margin(&w, i);
        let coef = loss.s * psi((loss.gamma - m) / loss.s);
        let alpha = match cfg.step {
            StepRule::Fixed(a) => a,
            StepRule::RegularizedDecay => 1.0 / (loss.s * cfg.lambda.sqrt() * (1.0 + t as f64)),
        };
        // w <- w - alpha (lambda w + g_i) with g_i = -coef * y_i x_i
        let shrink = 1.0 - alpha * cfg.lambda;
        for v in &mut w.weights {
            *v *= shrink;
        }
        data.add_row_scaled(i, alpha * coef * data.label(i), &mut w.weights);
        if let Some(r) = radius {
            project_in_place(&mut w, r);
        }
        let cost = (t + 1) as u64;
        if (cost.is_multiple_of(n as u64) || t + 1 == cfg.iters)
            && trace.checkpoints.last().is_none_or(|c| c.cost != cost)
        {
            record(&mut trace, &w, data, eval, &loss, cost)?;
        }
    }
    Ok((w, trace))
}

/// The Pegasos baseline: single-sample subgradient steps on the hinge loss
/// with `eta_t = 1/(lambda (1+t))` and projection to the `1/sqrt(lambda)`
/// ball. The trace is recorded on the same cadence and with the same
/// metrics as the stochastic margin run for cost-for-cost comparison.
pub fn pegasos_train(
    data: &Dataset,
    cfg: &TrainConfig,
    eval: Option<&Dataset>,
) -> Result<(LinearModel, TrainTrace)> {
    cfg.validate()?;
    if cfg.algorithm != Algorithm::Pegasos {
        return Err(Error::Config(
            "pegasos_train requires the pegasos algorithm".into(),
        ));
    }
    if cfg.lambda <= 0.0 {
        return Err(Error::Config("the baseline requires lambda > 0".into()));
    }
    if data.n() == 0 {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    let n = data.n();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = init_weights(cfg, data.dim(), &mut rng)?;
    let radius = 1.0 / cfg.lambda.sqrt();

    let mut trace = TrainTrace::default();
    for t in 0..cfg.iters {
        let i = rng.random_range(0..n);
        let eta = 1.0 / (cfg.lambda * (1.0 + t as f64));
        let shrink = 1.0 - eta * cfg.lambda;
        let active = data.margin(&w, i) < 1.0;
        for v in &mut w.weights {
            *v *= shrink;
        }
        if active {
            data.add_row_scaled(i, eta * data.label(i), &mut w.weights);
        }
        project_in_place(&mut w, radius);
        let cost = (t + 1) as u64;
        if (cost.is_multiple_of(n as u64) || t + 1 == cfg.iters)
            && trace.checkpoints.last().is_none_or(|c| c.cost != cost)
        {
            record(&mut trace, &w, data, eval, &cfg.loss, cost)?;
        }
    }
    Ok((w, trace))
}

/// Dispatch on algorithm and mode.
pub fn train(
    data: &Dataset,
    cfg: &TrainConfig,
    eval: Option<&Dataset>,
) -> Result<(LinearModel, TrainTrace)> {
    match (cfg.algorithm, cfg.mode) {
        (Algorithm::Pegasos, _) => pegasos_train(data, cfg, eval),
        (Algorithm::MarginPursuit, Mode::Batch) => train_batch(data, cfg, eval),
        (Algorithm::MarginPursuit, Mode::Stochastic) => train_stochastic(data, cfg, eval),
    }
}
