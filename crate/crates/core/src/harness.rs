//! Experiment runner: margin-distribution statistics, error metrics,
//! multi-trial sweep loops over algorithms and regularization values, and
//! CSV emission of cost-indexed traces.

use crate::data::{
    balanced_subsample, fmt_f64, gaussian_fixture, min_max_scale, parse_csv, parse_libsvm, Dataset,
    SplitSpec,
};
use crate::error::{Error, Result};
use crate::estimator::{catoni_estimate, nearest_rank_quantile, MarginSample};
use crate::loss::{LinearModel, ScaledLoss};
use crate::trainer::{train, Algorithm, Init, Mode, StepRule, TrainConfig, TrainTrace};

use rayon::prelude::*;

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

/// Summary statistics of the empirical margin distribution. Quantiles use
/// the lower nearest-rank convention; the variance is the population form.
#[derive(Debug, Clone, Copy)]
pub struct MarginStats {
    pub mean: f64,
    pub variance: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
    /// Robust location of the margins at the current scale.
    pub catoni_location: f64,
}

pub fn margin_stats(w: &LinearModel, data: &Dataset, loss: &ScaledLoss) -> Result<MarginStats> {
    if data.n() == 0 {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    let margins = data.margins(w);
    let n = margins.len() as f64;
    let mean = margins.iter().sum::<f64>() / n;
    let variance = margins.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n;
    let mut sorted = margins.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let catoni = catoni_estimate(&MarginSample::new(margins)?, loss.s, 1e-10)?;
    Ok(MarginStats {
        mean,
        variance,
        median: nearest_rank_quantile(&sorted, 0.5),
        q25: nearest_rank_quantile(&sorted, 0.25),
        q75: nearest_rank_quantile(&sorted, 0.75),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        catoni_location: catoni.value,
    })
}

/// Fraction of points with margin at or below zero (a zero score counts as
/// a misclassification).
pub fn misclassification_error(w: &LinearModel, data: &Dataset) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    let wrong = (0..data.n()).filter(|&i| data.margin(w, i) <= 0.0).count();
    Ok(wrong as f64 / data.n() as f64)
}

/// Where the experiment data comes from.
#[derive(Debug, Clone)]
pub enum DatasetSpec {
    Libsvm { path: PathBuf, positive_label: f64 },
    Csv { path: PathBuf, positive_label: f64 },
    Synthetic { n: usize, d: usize, separation: f64 },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub n_train: usize,
    pub balance: f64,
    pub size_cap_ratio: f64,
    pub normalize: bool,
    pub algorithms: Vec<Algorithm>,
    pub lambdas: Vec<f64>,
    pub gamma: f64,
    pub s0: f64,
    pub k_bias: f64,
    /// Cost budget in epoch-equivalents (one epoch = `n_train` gradients).
    pub epochs: usize,
    pub trials: usize,
    pub seed: u64,
    pub rescale_at_epoch: Option<usize>,
    pub delta: f64,
    pub outdir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("need at least one trial".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("need at least one epoch".into()));
        }
        if self.algorithms.is_empty() || self.lambdas.is_empty() {
            return Err(Error::Config(
                "need at least one algorithm and one lambda".into(),
            ));
        }
        Ok(())
    }
}

/// Default regularization sweep `{1, 1e-1, ..., 1e-6}`.
pub fn default_lambda_sweep() -> Vec<f64> {
    (0..=6).map(|k| 10f64.powi(-k)).collect()
}

/// Parse a plain `key = value` config file. `seed` comes from the caller
/// (the CLI makes it mandatory), not from the file.
pub fn parse_experiment_config(
    text: &str,
    seed: u64,
    outdir: Option<PathBuf>,
) -> Result<ExperimentConfig> {
    let mut kv: HashMap<String, String> = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: lineno + 1,
            message: format!("expected key = value, got `{line}`"),
        })?;
        kv.insert(key.trim().to_string(), value.trim().to_string());
    }

    let get = |key: &str| kv.get(key).map(String::as_str);
    let parse_f64 = |key: &str, default: f64| -> Result<f64> {
        match get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("bad value for {key}: `{v}`"))),
            None => Ok(default),
        }
    };
    let parse_usize = |key: &str, default: usize| -> Result<usize> {
        match get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("bad value for {key}: `{v}`"))),
            None => Ok(default),
        }
    };

    let positive_label = parse_f64("positive_label", 1.0)?;
    let dataset = match get("dataset") {
        None => return Err(Error::Config("config must set `dataset`".into())),
        Some("synth") => DatasetSpec::Synthetic {
            n: parse_usize("synth_n", 1200)?,
            d: parse_usize("synth_d", 5)?,
            separation: parse_f64("synth_separation", 3.0)?,
        },
        Some(path) => {
            let is_csv = match get("format") {
                Some("csv") => true,
                Some("libsvm") => false,
                Some(other) => return Err(Error::Config(format!("unknown format `{other}`"))),
                None => path.ends_with(".csv"),
            };
            let path = PathBuf::from(path);
            if is_csv {
                DatasetSpec::Csv {
                    path,
                    positive_label,
                }
            } else {
                DatasetSpec::Libsvm {
                    path,
                    positive_label,
                }
            }
        }
    };

    let algorithms = match get("algorithms") {
        None => vec![Algorithm::MarginPursuit, Algorithm::Pegasos],
        Some(list) => list
            .split(',')
            .map(|name| match name.trim() {
                "margin_pursuit" => Ok(Algorithm::MarginPursuit),
                "pegasos" => Ok(Algorithm::Pegasos),
                other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?,
    };

    let lambdas = match get("lambdas") {
        None => default_lambda_sweep(),
        Some(list) => list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad lambda `{v}`")))
            })
            .collect::<Result<Vec<_>>>()?,
    };

    let rescale_at_epoch = match get("rescale_at_epoch") {
        None => None,
        Some(v) => Some(
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("bad rescale_at_epoch `{v}`")))?,
        ),
    };

    Ok(ExperimentConfig {
        dataset,
        n_train: parse_usize("n_train", 200)?,
        balance: parse_f64("balance", 0.5)?,
        size_cap_ratio: parse_f64("size_cap_ratio", 10.0)?,
        normalize: get("normalize")
            .map(|v| v == "true" || v == "1")
            .unwrap_or(false),
        algorithms,
        lambdas,
        gamma: parse_f64("gamma", 1.0)?,
        s0: parse_f64("s0", 1.0)?,
        k_bias: parse_f64("k_bias", 10.0)?,
        epochs: parse_usize("epochs", 50)?,
        trials: parse_usize("trials", 25)?,
        seed,
        rescale_at_epoch,
        delta: parse_f64("delta", 0.05)?,
        outdir: outdir
            .or_else(|| get("outdir").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("experiment_out")),
    })
}

/// Splitmix-style seed derivation so trial seeds are decorrelated while
/// remaining identical across algorithms and lambdas.
fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub const PER_RUN_HEADER: &str =
    "cost,s,objective,train_err,test_err,mean,var,median,q25,q75,min,max,catoni";

fn trace_to_csv(trace: &TrainTrace) -> String {
    let mut out = String::with_capacity(128 * (trace.checkpoints.len() + 1));
    out.push_str(PER_RUN_HEADER);
    out.push('\n');
    for c in &trace.checkpoints {
        let m = &c.margins;
        let fields = [
            c.scale,
            c.objective,
            c.train_error,
            c.test_error,
            m.mean,
            m.variance,
            m.median,
            m.q25,
            m.q75,
            m.min,
            m.max,
            m.catoni_location,
        ];
        out.push_str(&c.cost.to_string());
        for f in fields {
            out.push(',');
            out.push_str(&fmt_f64(f));
        }
        out.push('\n');
    }
    out
}

fn aggregate_to_csv(traces: &[TrainTrace]) -> Result<String> {
    let len = traces[0].checkpoints.len();
    for t in traces {
        if t.checkpoints.len() != len {
            return Err(Error::Internal(
                "trial traces have mismatched checkpoint counts".into(),
            ));
        }
    }
    let mut out = String::new();
    out.push_str(PER_RUN_HEADER);
    out.push('\n');
    let n = traces.len() as f64;
    for k in 0..len {
        let cost = traces[0].checkpoints[k].cost;
        for t in traces {
            if t.checkpoints[k].cost != cost {
                return Err(Error::Internal(
                    "trial traces have mismatched cost axes".into(),
                ));
            }
        }
        let mean_of = |f: &dyn Fn(&TrainTrace) -> f64| traces.iter().map(f).sum::<f64>() / n;
        let fields = [
            mean_of(&|t| t.checkpoints[k].scale),
            mean_of(&|t| t.checkpoints[k].objective),
            mean_of(&|t| t.checkpoints[k].train_error),
            mean_of(&|t| t.checkpoints[k].test_error),
            mean_of(&|t| t.checkpoints[k].margins.mean),
            mean_of(&|t| t.checkpoints[k].margins.variance),
            mean_of(&|t| t.checkpoints[k].margins.median),
            mean_of(&|t| t.checkpoints[k].margins.q25),
            mean_of(&|t| t.checkpoints[k].margins.q75),
            mean_of(&|t| t.checkpoints[k].margins.min),
            mean_of(&|t| t.checkpoints[k].margins.max),
            mean_of(&|t| t.checkpoints[k].margins.catoni_location),
        ];
        out.push_str(&cost.to_string());
        for f in fields {
            out.push(',');
            out.push_str(&fmt_f64(f));
        }
        out.push('\n');
    }
    Ok(out)
}

fn lambda_tag(lambda: f64) -> String {
    format!("{lambda:.2e}")
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    match spec {
        DatasetSpec::Libsvm {
            path,
            positive_label,
        } => {
            let text = fs::read_to_string(path)?;
            let positive = *positive_label;
            parse_libsvm(&text, move |l| l == positive)
        }
        DatasetSpec::Csv {
            path,
            positive_label,
        } => {
            let text = fs::read_to_string(path)?;
            let positive = *positive_label;
            parse_csv(&text, move |l| l == positive)
        }
        DatasetSpec::Synthetic { n, d, separation } => {
            gaussian_fixture(*n, *d, *separation, 0xfeed)
        }
    }
}

/// Run the full sweep: for every `(algorithm, lambda, trial)` train on a
/// fresh balanced split, write one CSV per run, per-(algorithm, lambda)
/// aggregates of trial means, a best-lambda trace per algorithm selected by
/// the lowest aggregate test error over all checkpoints, and a summary
/// table. Returns the written paths.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let full = load_dataset(&cfg.dataset)?;
    if full.n() == 0 {
        return Err(Error::InvalidInput("experiment dataset is empty".into()));
    }
    let full = if cfg.normalize {
        min_max_scale(&full)?
    } else {
        full
    };
    fs::create_dir_all(&cfg.outdir)?;
    let mut written: Vec<PathBuf> = Vec::new();

    // per-trial splits and train seeds are shared across algorithms and lambdas
    let splits: Vec<(Dataset, Dataset, u64)> = (0..cfg.trials)
        .map(|trial| {
            let split_seed = derive_seed(cfg.seed, 2 * trial as u64);
            let train_seed = derive_seed(cfg.seed, 2 * trial as u64 + 1);
            let spec = SplitSpec {
                n_train: cfg.n_train,
                balance: cfg.balance,
                seed: split_seed,
                size_cap_ratio: cfg.size_cap_ratio,
            };
            let (train, test) = balanced_subsample(&full, &spec)
                .map_err(|e| Error::Config(format!("trial {trial}: {e}")))?;
            Ok((train, test, train_seed))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best_per_algorithm: Vec<(Algorithm, f64, f64, String)> = Vec::new();
    for &algorithm in &cfg.algorithms {
        let mut best: Option<(f64, f64, String)> = None;
        for &lambda in &cfg.lambdas {
            let traces: Vec<TrainTrace> = (0..cfg.trials)
                .into_par_iter()
                .map(|trial| {
                    let (train_ds, test_ds, train_seed) = &splits[trial];
                    let n_train = train_ds.n();
                    let mut tc = TrainConfig::new(ScaledLoss::new(cfg.s0, cfg.gamma)?);
                    tc.lambda = lambda;
                    tc.iters = cfg.epochs * n_train;
                    tc.seed = *train_seed;
                    tc.mode = Mode::Stochastic;
                    tc.algorithm = algorithm;
                    tc.step = StepRule::RegularizedDecay;
                    tc.k_bias = cfg.k_bias;
                    tc.delta = cfg.delta;
                    tc.rescale_at = cfg.rescale_at_epoch.map(|e| e * n_train);
                    tc.init = Init::RandomUniform;
                    let (_, trace) = train(train_ds, &tc, Some(test_ds))
                        .map_err(|e| Error::Internal(format!("trial {trial} failed: {e}")))?;
                    Ok(trace)
                })
                .collect::<Result<Vec<_>>>()?;

            for (trial, trace) in traces.iter().enumerate() {
                let path = cfg.outdir.join(format!(
                    "run_{}_lam{}_trial{:02}.csv",
                    algorithm.name(),
                    lambda_tag(lambda),
                    trial
                ));
                fs::write(&path, trace_to_csv(trace))?;
                written.push(path);
            }

            let agg = aggregate_to_csv(&traces)?;
            let agg_path = cfg.outdir.join(format!(
                "agg_{}_lam{}.csv",
                algorithm.name(),
                lambda_tag(lambda)
            ));
            fs::write(&agg_path, &agg)?;
            written.push(agg_path);

            // lowest aggregate mean test error over all checkpoints
            let min_test = (0..traces[0].checkpoints.len())
                .map(|k| {
                    traces
                        .iter()
                        .map(|t| t.checkpoints[k].test_error)
                        .sum::<f64>()
                        / traces.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|(b, _, _)| min_test < *b) {
                best = Some((min_test, lambda, agg));
            }
        }
        let (err, lambda, agg) = best.unwrap();
        let best_path = cfg.outdir.join(format!("best_{}.csv", algorithm.name()));
        fs::write(&best_path, &agg)?;
        written.push(best_path);
        best_per_algorithm.push((algorithm, lambda, err, agg));
    }

    let mut summary = String::from("algorithm,lambda,min_mean_test_err\n");
    for (algorithm, lambda, err, _) in &best_per_algorithm {
        summary.push_str(&format!(
            "{},{},{}\n",
            algorithm.name(),
            fmt_f64(*lambda),
            fmt_f64(*err)
        ));
    }
    let summary_path = cfg.outdir.join("summary.csv");
    fs::write(&summary_path, summary)?;
    written.push(summary_path);

    Ok(written)
}

/// Config for a single CLI training run (no sweep).
#[derive(Debug, Clone)]
pub struct SingleRunOutput {
    pub weights: Vec<f64>,
    pub trace_csv: String,
}

pub fn run_single(
    train_ds: &Dataset,
    test_ds: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<SingleRunOutput> {
    let (model, trace) = train(train_ds, cfg, test_ds)?;
    Ok(SingleRunOutput {
        weights: model.weights,
        trace_csv: trace_to_csv(&trace),
    })
}
