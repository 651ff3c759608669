//! Dataset ingestion and splitting: sparse LIBSVM and dense CSV parsing,
//! label binarization, balanced subsampling, and a synthetic Gaussian
//! fixture for desk-scale runs.

use crate::error::{Error, Result};
use crate::loss::LinearModel;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use std::fmt::Write as _;

/// Feature storage: dense row-major, or per-row sparse `(index, value)`
/// pairs with strictly ascending 0-based indices.
#[derive(Debug, Clone)]
pub enum Features {
    Dense {
        values: Vec<f64>,
        dim: usize,
    },
    Sparse {
        rows: Vec<Vec<(u32, f64)>>,
        dim: usize,
    },
}

/// Feature matrix plus `+/-1` labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Features,
    labels: Vec<f64>,
}

fn check_label(label: f64) -> Result<()> {
    if label != 1.0 && label != -1.0 {
        return Err(Error::InvalidInput(format!(
            "labels must be +1 or -1, got {label}"
        )));
    }
    Ok(())
}

impl Dataset {
    /// Build a dense dataset from row-major `values` of shape `n x dim`.
    pub fn dense(values: Vec<f64>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 && !labels.is_empty() {
            return Err(Error::InvalidInput(
                "dense dataset must have dim >= 1".into(),
            ));
        }
        if labels.len() * dim != values.len() {
            return Err(Error::InvalidInput(format!(
                "value count {} does not match {} rows of dimension {dim}",
                values.len(),
                labels.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        for &l in &labels {
            check_label(l)?;
        }
        Ok(Dataset {
            features: Features::Dense { values, dim },
            labels,
        })
    }

    /// Build a sparse dataset; row indices must be strictly ascending and `< dim`.
    pub fn sparse(rows: Vec<Vec<(u32, f64)>>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidInput("row/label count mismatch".into()));
        }
        for row in &rows {
            let mut prev: Option<u32> = None;
            for &(idx, val) in row {
                if idx as usize >= dim {
                    return Err(Error::InvalidInput(format!(
                        "feature index {idx} out of range {dim}"
                    )));
                }
                if let Some(p) = prev {
                    if idx <= p {
                        return Err(Error::InvalidInput(
                            "feature indices must be strictly ascending".into(),
                        ));
                    }
                }
                if !val.is_finite() {
                    return Err(Error::InvalidInput("non-finite feature value".into()));
                }
                prev = Some(idx);
            }
        }
        for &l in &labels {
            check_label(l)?;
        }
        Ok(Dataset {
            features: Features::Sparse { rows, dim },
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        match &self.features {
            Features::Dense { dim, .. } | Features::Sparse { dim, .. } => *dim,
        }
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Score `<w, x_i>`.
    pub fn score(&self, w: &LinearModel, i: usize) -> f64 {
        match &self.features {
            Features::Dense { values, dim } => {
                let row = &values[i * dim..(i + 1) * dim];
                row.iter().zip(&w.weights).map(|(x, wj)| x * wj).sum()
            }
            Features::Sparse { rows, .. } => rows[i]
                .iter()
                .map(|&(idx, val)| val * w.weights[idx as usize])
                .sum(),
        }
    }

    /// Margin `y_i <w, x_i>`.
    pub fn margin(&self, w: &LinearModel, i: usize) -> f64 {
        self.labels[i] * self.score(w, i)
    }

    pub fn margins(&self, w: &LinearModel) -> Vec<f64> {
        (0..self.n()).map(|i| self.margin(w, i)).collect()
    }

    /// `out += coef * x_i`.
    pub fn add_row_scaled(&self, i: usize, coef: f64, out: &mut [f64]) {
        match &self.features {
            Features::Dense { values, dim } => {
                let row = &values[i * dim..(i + 1) * dim];
                for (o, x) in out.iter_mut().zip(row) {
                    *o += coef * x;
                }
            }
            Features::Sparse { rows, .. } => {
                for &(idx, val) in &rows[i] {
                    out[idx as usize] += coef * val;
                }
            }
        }
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        match &self.features {
            Features::Dense { values, dim } => {
                values[i * dim..(i + 1) * dim].iter().map(|x| x * x).sum()
            }
            Features::Sparse { rows, .. } => rows[i].iter().map(|&(_, v)| v * v).sum(),
        }
    }

    /// Empirical mean of `||x_i||^2`; smoothness coefficient of the objective.
    pub fn mean_row_norm_sq(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        (0..self.n()).map(|i| self.row_norm_sq(i)).sum::<f64>() / self.n() as f64
    }

    /// Dense copy of row `i`.
    pub fn row_dense(&self, i: usize) -> Vec<f64> {
        match &self.features {
            Features::Dense { values, dim } => values[i * dim..(i + 1) * dim].to_vec(),
            Features::Sparse { rows, dim } => {
                let mut out = vec![0.0; *dim];
                for &(idx, val) in &rows[i] {
                    out[idx as usize] = val;
                }
                out
            }
        }
    }

    /// New dataset holding the given rows (in order), preserving storage kind.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        match &self.features {
            Features::Dense { values, dim } => {
                let mut out = Vec::with_capacity(indices.len() * dim);
                for &i in indices {
                    out.extend_from_slice(&values[i * dim..(i + 1) * dim]);
                }
                Dataset::dense(out, labels, *dim)
            }
            Features::Sparse { rows, dim } => {
                let out = indices.iter().map(|&i| rows[i].clone()).collect();
                Dataset::sparse(out, labels, *dim)
            }
        }
    }

    pub fn count_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l > 0.0).count()
    }
}

impl PartialEq for Dataset {
    /// Logical equality: same shape, labels, and feature values regardless
    /// of storage kind.
    fn eq(&self, other: &Self) -> bool {
        if self.n() != other.n() || self.dim() != other.dim() || self.labels != other.labels {
            return false;
        }
        (0..self.n()).all(|i| self.row_dense(i) == other.row_dense(i))
    }
}

/// Balanced train/test split parameters.
#[derive(Debug, Clone)]
pub struct SplitSpec {
    pub n_train: usize,
    /// Target positive fraction of each split.
    pub balance: f64,
    pub seed: u64,
    /// Cap on `n_train / dim`; `0` disables the cap.
    pub size_cap_ratio: f64,
}

impl SplitSpec {
    pub fn new(n_train: usize, seed: u64) -> Self {
        SplitSpec {
            n_train,
            balance: 0.5,
            seed,
            size_cap_ratio: 10.0,
        }
    }
}

/// Parse LIBSVM text: `<label> <idx>:<val> ...` per line, 1-based strictly
/// ascending indices. Labels are mapped to `+/-1` by `is_positive`; `#`
/// starts a comment. The dimension is the maximum index seen.
pub fn parse_libsvm<F: Fn(f64) -> bool>(text: &str, is_positive: F) -> Result<Dataset> {
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut dim = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap();
        let label_val: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad label `{label_tok}`"),
        })?;
        labels.push(if is_positive(label_val) { 1.0 } else { -1.0 });

        let mut row: Vec<(u32, f64)> = Vec::new();
        let mut prev = 0u32;
        for tok in tokens {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected idx:value, got `{tok}`"),
            })?;
            let idx: u32 = idx_s.parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad feature index `{idx_s}`"),
            })?;
            let val: f64 = val_s.parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad feature value `{val_s}`"),
            })?;
            if idx == 0 || idx <= prev {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "indices must be 1-based and strictly ascending, got {idx} after {prev}"
                    ),
                });
            }
            if !val.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value `{val_s}`"),
                });
            }
            prev = idx;
            dim = dim.max(idx as usize);
            row.push((idx - 1, val));
        }
        rows.push(row);
    }
    Dataset::sparse(rows, labels, dim)
}

/// Parse dense CSV rows `label,f1,...,fd`. A header row is skipped when the
/// first field of the first line is not numeric.
pub fn parse_csv<F: Fn(f64) -> bool>(text: &str, is_positive: F) -> Result<Dataset> {
    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut first_content_line = true;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        if first_content_line {
            first_content_line = false;
            if fields[0].parse::<f64>().is_err() {
                continue; // header
            }
        }
        if fields.len() < 2 {
            return Err(Error::Parse {
                line,
                message: "need a label and at least one feature".into(),
            });
        }
        let d = fields.len() - 1;
        match dim {
            None => dim = Some(d),
            Some(expect) if expect != d => {
                return Err(Error::Parse {
                    line,
                    message: format!("row has {d} features, expected {expect}"),
                })
            }
            _ => {}
        }
        let label_val: f64 = fields[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad label `{}`", fields[0]),
        })?;
        labels.push(if is_positive(label_val) { 1.0 } else { -1.0 });
        for f in &fields[1..] {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad feature value `{f}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value `{f}`"),
                });
            }
            values.push(v);
        }
    }
    Dataset::dense(values, labels, dim.unwrap_or(0))
}

/// Serialize to LIBSVM text. Sparse rows are written exactly as stored;
/// dense rows skip zero entries.
pub fn write_libsvm(data: &Dataset) -> String {
    let mut out = String::new();
    for i in 0..data.n() {
        let label = if data.label(i) > 0.0 { "1" } else { "-1" };
        out.push_str(label);
        match &data.features {
            Features::Sparse { rows, .. } => {
                for &(idx, val) in &rows[i] {
                    let _ = write!(out, " {}:{}", idx + 1, fmt_f64(val));
                }
            }
            Features::Dense { values, dim } => {
                for (j, &val) in values[i * dim..(i + 1) * dim].iter().enumerate() {
                    if val != 0.0 {
                        let _ = write!(out, " {}:{}", j + 1, fmt_f64(val));
                    }
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Format a float with 17 significant digits (round-trips exactly).
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // normalize -0.0
        return format!("{:.16e}", 0.0);
    }
    format!("{x:.16e}")
}

/// Balanced subsample per the experiment protocol: `n_train` points drawn
/// without replacement at the target balance, the rest forming the largest
/// balanced test set possible. Deterministic given `spec.seed`.
pub fn balanced_subsample(full: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.balance > 0.0 && spec.balance < 1.0) {
        return Err(Error::InvalidInput(format!(
            "balance must be in (0,1), got {}",
            spec.balance
        )));
    }
    if spec.n_train == 0 {
        return Err(Error::InvalidInput("n_train must be at least 1".into()));
    }
    let mut n_train = spec.n_train;
    if spec.size_cap_ratio > 0.0 {
        let cap = (spec.size_cap_ratio * full.dim() as f64).floor() as usize;
        n_train = n_train.min(cap.max(1));
    }

    let mut pos: Vec<usize> = Vec::new();
    let mut neg: Vec<usize> = Vec::new();
    for i in 0..full.n() {
        if full.label(i) > 0.0 {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }

    let n_pos_train = (spec.balance * n_train as f64).round() as usize;
    let n_neg_train = n_train - n_pos_train;
    if pos.len() < n_pos_train {
        return Err(Error::InvalidInput(format!(
            "positive class has {} points, need {n_pos_train} for training",
            pos.len()
        )));
    }
    if neg.len() < n_neg_train {
        return Err(Error::InvalidInput(format!(
            "negative class has {} points, need {n_neg_train} for training",
            neg.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let mut train_idx: Vec<usize> = Vec::with_capacity(n_train);
    train_idx.extend_from_slice(&pos[..n_pos_train]);
    train_idx.extend_from_slice(&neg[..n_neg_train]);
    train_idx.shuffle(&mut rng);

    let rem_pos = &pos[n_pos_train..];
    let rem_neg = &neg[n_neg_train..];

    // Largest test size whose per-class allocation fits the remaining
    // supply: t = min(floor(|rem_pos| / b), floor(|rem_neg| / (1 - b))).
    let t = ((rem_pos.len() as f64 / spec.balance).floor() as usize)
        .min((rem_neg.len() as f64 / (1.0 - spec.balance)).floor() as usize);
    let test_pos = (spec.balance * t as f64).round() as usize;
    let test_neg = t - test_pos;
    debug_assert!(test_pos <= rem_pos.len() && test_neg <= rem_neg.len());
    let mut test_idx: Vec<usize> = Vec::with_capacity(test_pos + test_neg);
    test_idx.extend_from_slice(&rem_pos[..test_pos]);
    test_idx.extend_from_slice(&rem_neg[..test_neg]);
    test_idx.shuffle(&mut rng);

    Ok((full.subset(&train_idx)?, full.subset(&test_idx)?))
}

/// Optional per-feature min-max scaling to `[0, 1]`; constant features map to 0.
pub fn min_max_scale(data: &Dataset) -> Result<Dataset> {
    let n = data.n();
    let d = data.dim();
    if n == 0 {
        return Err(Error::InvalidInput("cannot scale an empty dataset".into()));
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for i in 0..n {
        let row = data.row_dense(i);
        for j in 0..d {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        let row = data.row_dense(i);
        for j in 0..d {
            let span = hi[j] - lo[j];
            values.push(if span > 0.0 {
                (row[j] - lo[j]) / span
            } else {
                0.0
            });
        }
    }
    Dataset::dense(values, data.labels.clone(), d)
}

/// Two-Gaussian fixture: positives `N(+mu, I)`, negatives `N(-mu, I)` with
/// `mu = (separation / sqrt(d)) * (1, ..., 1)`, shuffled. Deterministic
/// given `seed`.
pub fn gaussian_fixture(n: usize, d: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidInput(
            "fixture needs n >= 1 and d >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = separation / (d as f64).sqrt();
    let n_pos = n / 2;
    let mut order: Vec<f64> = Vec::with_capacity(n);
    order.extend(std::iter::repeat_n(1.0, n_pos));
    order.extend(std::iter::repeat_n(-1.0, n - n_pos));
    order.shuffle(&mut rng);

    let mut values = Vec::with_capacity(n * d);
    for &label in &order {
        for _ in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            values.push(label * mu + z);
        }
    }
    Dataset::dense(values, order, d)
}
