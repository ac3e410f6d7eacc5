//! Logit-based classifier core.
//!
//! Two fixed architectures with hand-derived gradients:
//!
//! * `SoftmaxLinear`: logits = x W + b
//! * `Mlp1`: logits = relu(x W1 + b1) W2 + b2
//!
//! Parameters live in one flat vector; the layout (per-tensor offsets) is a
//! function of the architecture. The loss is mean softmax cross-entropy.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::rng;

/// Architecture descriptor: dimensions only, no parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchSpec {
    SoftmaxLinear {
        input_dim: usize,
        classes: usize,
    },
    Mlp1 {
        input_dim: usize,
        hidden: usize,
        classes: usize,
    },
}

impl ArchSpec {
    pub fn input_dim(&self) -> usize {
        match *self {
            ArchSpec::SoftmaxLinear { input_dim, .. } => input_dim,
            ArchSpec::Mlp1 { input_dim, .. } => input_dim,
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            ArchSpec::SoftmaxLinear { classes, .. } => classes,
            ArchSpec::Mlp1 { classes, .. } => classes,
        }
    }

    pub fn hidden(&self) -> Option<usize> {
        match *self {
            ArchSpec::SoftmaxLinear { .. } => None,
            ArchSpec::Mlp1 { hidden, .. } => Some(hidden),
        }
    }

    /// Total parameter count: d*k + k, or d*h + h + h*k + k.
    pub fn param_count(&self) -> usize {
        match *self {
            ArchSpec::SoftmaxLinear { input_dim, classes } => input_dim * classes + classes,
            ArchSpec::Mlp1 {
                input_dim,
                hidden,
                classes,
            } => input_dim * hidden + hidden + hidden * classes + classes,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ArchSpec::SoftmaxLinear { input_dim, classes } => input_dim >= 1 && classes >= 2,
            ArchSpec::Mlp1 {
                input_dim,
                hidden,
                classes,
            } => input_dim >= 1 && hidden >= 1 && classes >= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid_argument(format!(
                "architecture dimensions must be positive (classes >= 2): {self:?}"
            )))
        }
    }
}

/// A classifier: architecture plus flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub arch: ArchSpec,
    pub params: Vec<f64>,
}

/// Flat gradient congruent with `ClassifierModel::params`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub values: Vec<f64>,
}

/// A mini-batch of rows with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Consistency(format!(
                "batch rows ({}) != label count ({})",
                features.nrows(),
                labels.len()
            )));
        }
        Ok(Batch { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Gather the rows of `dataset` at `indices`.
    pub fn gather(dataset: &crate::data::Dataset, indices: &[usize]) -> Result<Self> {
        for &i in indices {
            if i >= dataset.len() {
                return Err(Error::invalid_argument(format!(
                    "batch index {i} out of range for n={}",
                    dataset.len()
                )));
            }
        }
        let features = dataset.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| dataset.labels[i]).collect();
        Ok(Batch { features, labels })
    }
}

/// Seeded uniform "fan" init: each weight tensor is drawn from
/// [-s, +s] with s = sqrt(6 / (fan_in + fan_out)); biases start at zero.
pub fn init_model(arch: ArchSpec, seed: u64) -> Result<ClassifierModel> {
    arch.validate()?;
    let mut rng = rng::rng_from_seed(seed);
    let mut params = vec![0.0; arch.param_count()];

    let mut fill_weights = |slice: &mut [f64], fan_in: usize, fan_out: usize| {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in slice.iter_mut() {
            *w = (rng::uniform01(&mut rng) * 2.0 - 1.0) * s;
        }
    };

    match arch {
        ArchSpec::SoftmaxLinear { input_dim, classes } => {
            fill_weights(&mut params[..input_dim * classes], input_dim, classes);
            // bias tail stays zero
        }
        ArchSpec::Mlp1 {
            input_dim,
            hidden,
            classes,
        } => {
            let w1 = input_dim * hidden;
            fill_weights(&mut params[..w1], input_dim, hidden);
            let w2_start = w1 + hidden;
            fill_weights(&mut params[w2_start..w2_start + hidden * classes], hidden, classes);
        }
    }

    Ok(ClassifierModel { arch, params })
}

impl ClassifierModel {
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_features(&self, features: &Array2<f64>) -> Result<()> {
        if features.ncols() != self.arch.input_dim() {
            return Err(Error::invalid_argument(format!(
                "feature width {} does not match model input dim {}",
                features.ncols(),
                self.arch.input_dim()
            )));
        }
        Ok(())
    }
}

struct SoftmaxLinearViews<'a> {
    w: ArrayView2<'a, f64>,
    b: &'a [f64],
}

struct Mlp1Views<'a> {
    w1: ArrayView2<'a, f64>,
    b1: &'a [f64],
    w2: ArrayView2<'a, f64>,
    b2: &'a [f64],
}

fn softmax_linear_views(params: &[f64], d: usize, k: usize) -> SoftmaxLinearViews<'_> {
    SoftmaxLinearViews {
        w: ArrayView2::from_shape((d, k), &params[..d * k]).expect("layout"),
        b: &params[d * k..],
    }
}

fn mlp1_views(params: &[f64], d: usize, h: usize, k: usize) -> Mlp1Views<'_> {
    let w1_end = d * h;
    let b1_end = w1_end + h;
    let w2_end = b1_end + h * k;
    Mlp1Views {
        w1: ArrayView2::from_shape((d, h), &params[..w1_end]).expect("layout"),
        b1: &params[w1_end..b1_end],
        w2: ArrayView2::from_shape((h, k), &params[b1_end..w2_end]).expect("layout"),
        b2: &params[w2_end..],
    }
}

fn add_row_bias(mut matrix: Array2<f64>, bias: &[f64]) -> Array2<f64> {
    for mut row in matrix.outer_iter_mut() {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    matrix
}

/// Raw class scores for a batch of rows.
pub fn forward_logits(model: &ClassifierModel, features: &Array2<f64>) -> Result<Array2<f64>> {
    model.check_features(features)?;
    let logits = match model.arch {
        ArchSpec::SoftmaxLinear { input_dim, classes } => {
            let v = softmax_linear_views(&model.params, input_dim, classes);
            add_row_bias(features.dot(&v.w), v.b)
        }
        ArchSpec::Mlp1 {
            input_dim,
            hidden,
            classes,
        } => {
            let v = mlp1_views(&model.params, input_dim, hidden, classes);
            let mut a1 = add_row_bias(features.dot(&v.w1), v.b1);
            a1.mapv_inplace(|z| z.max(0.0));
            add_row_bias(a1.dot(&v.w2), v.b2)
        }
    };
    Ok(logits)
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax(logits: &Array2<f64>) -> Result<Array2<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("softmax input contains non-finite values"));
    }
    let mut out = logits.clone();
    for mut row in out.outer_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Mean cross-entropy loss and its exact analytic gradient.
///
/// With P = softmax(logits) and one-hot targets Y, the logit gradient is
/// (P - Y) / b; weight and bias gradients follow by the chain rule through
/// the affine layers (and the ReLU mask for `Mlp1`).
pub fn loss_and_grad(model: &ClassifierModel, batch: &Batch) -> Result<(f64, GradientVector)> {
    model.check_features(&batch.features)?;
    if batch.is_empty() {
        return Err(Error::invalid_argument("empty batch".to_string()));
    }
    let k = model.arch.classes();
    if let Some(&bad) = batch.labels.iter().find(|&&l| l >= k) {
        return Err(Error::invalid_argument(format!(
            "label {bad} out of range for {k} classes"
        )));
    }

    let mut grad = vec![0.0; model.param_count()];

    let loss = match model.arch {
        ArchSpec::SoftmaxLinear { input_dim, classes } => {
            let v = softmax_linear_views(&model.params, input_dim, classes);
            let logits = add_row_bias(batch.features.dot(&v.w), v.b);
            let (loss, dlogits) = softmax_xent_backward(&logits, &batch.labels)?;

            let dw = batch.features.t().dot(&dlogits);
            let db = dlogits.sum_axis(Axis(0));
            grad[..input_dim * classes].copy_from_slice(dw.as_slice().expect("contiguous"));
            grad[input_dim * classes..].copy_from_slice(db.as_slice().expect("contiguous"));
            loss
        }
        ArchSpec::Mlp1 {
            input_dim,
            hidden,
            classes,
        } => {
            let v = mlp1_views(&model.params, input_dim, hidden, classes);
            let z1 = add_row_bias(batch.features.dot(&v.w1), v.b1);
            let a1 = z1.mapv(|z| z.max(0.0));
            let logits = add_row_bias(a1.dot(&v.w2), v.b2);
            let (loss, dlogits) = softmax_xent_backward(&logits, &batch.labels)?;

            let dw2 = a1.t().dot(&dlogits);
            let db2 = dlogits.sum_axis(Axis(0));
            let mut dz1 = dlogits.dot(&v.w2.t());
            // ReLU mask; the subgradient at exactly zero is taken as zero.
            ndarray::Zip::from(&mut dz1).and(&z1).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            let dw1 = batch.features.t().dot(&dz1);
            let db1 = dz1.sum_axis(Axis(0));

            let w1_end = input_dim * hidden;
            let b1_end = w1_end + hidden;
            let w2_end = b1_end + hidden * classes;
            grad[..w1_end].copy_from_slice(dw1.as_slice().expect("contiguous"));
            grad[w1_end..b1_end].copy_from_slice(db1.as_slice().expect("contiguous"));
            grad[b1_end..w2_end].copy_from_slice(dw2.as_slice().expect("contiguous"));
            grad[w2_end..].copy_from_slice(db2.as_slice().expect("contiguous"));
            loss
        }
    };

    if !loss.is_finite() {
        return Err(Error::numeric(format!("non-finite loss {loss}")));
    }
    Ok((loss, GradientVector { values: grad }))
}

/// Stable mean cross-entropy and logit gradient (P - Y)/b in one pass.
fn softmax_xent_backward(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite logits".to_string()));
    }
    let b = labels.len() as f64;
    let mut dlogits = logits.clone();
    let mut loss = 0.0;
    for (mut row, &label) in dlogits.outer_iter_mut().zip(labels) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter() {
            sum += (*v - max).exp();
        }
        let log_sum = sum.ln();
        // -log p_y = log-sum-exp(z - max) - (z_y - max)
        loss += log_sum - (row[label] - max);
        for v in row.iter_mut() {
            *v = ((*v - max).exp() / sum) / b;
        }
        row[label] -= 1.0 / b;
    }
    Ok((loss / b, dlogits))
}

/// Argmax class per row, ties broken toward the smaller index.
pub fn predict(model: &ClassifierModel, features: &Array2<f64>) -> Result<Vec<usize>> {
    let logits = forward_logits(model, features)?;
    Ok(logits
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_value = row[0];
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > best_value {
                    best = i;
                    best_value = v;
                }
            }
            best
        })
        .collect())
}

/// Fraction of rows whose predicted class matches the label.
pub fn accuracy(model: &ClassifierModel, dataset: &crate::data::Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid_argument(
            "accuracy over an empty dataset is undefined".to_string(),
        ));
    }
    let predictions = predict(model, &dataset.features)?;
    let correct = predictions
        .iter()
        .zip(&dataset.labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / dataset.len() as f64)
}

/// Per-sample cross-entropy losses (used by the membership-inference probe).
pub fn per_sample_losses(model: &ClassifierModel, dataset: &crate::data::Dataset) -> Result<Vec<f64>> {
    let logits = forward_logits(model, &dataset.features)?;
    let mut losses = Vec::with_capacity(dataset.len());
    for (row, &label) in logits.outer_iter().zip(&dataset.labels) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (*v - max).exp()).sum();
        losses.push(sum.ln() - (row[label] - max));
    }
    Ok(losses)
}

pub mod gradcheck {
    //! Finite-difference gradient oracle, independent of the analytic
    //! gradient path. Test support; also used by the acceptance suite.

    use super::*;

    /// Loss only, via the forward pass (recomputed from scratch).
    pub fn loss_only(model: &ClassifierModel, batch: &Batch) -> f64 {
        let logits = forward_logits(model, &batch.features).unwrap();
        let mut loss = 0.0;
        for (row, &label) in logits.outer_iter().zip(&batch.labels) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (*v - max).exp()).sum();
            loss += sum.ln() - (row[label] - max);
        }
        loss / batch.len() as f64
    }

    /// Central finite differences with the given step.
    pub fn finite_difference_grad(model: &ClassifierModel, batch: &Batch, step: f64) -> Vec<f64> {
        let mut grad = vec![0.0; model.param_count()];
        let mut probe = model.clone();
        for i in 0..model.param_count() {
            let original = probe.params[i];
            probe.params[i] = original + step;
            let plus = loss_only(&probe, batch);
            probe.params[i] = original - step;
            let minus = loss_only(&probe, batch);
            probe.params[i] = original;
            grad[i] = (plus - minus) / (2.0 * step);
        }
        grad
    }

    /// max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-3). The floor keeps
    /// coordinates with near-zero true gradient (where the central
    /// difference is pure roundoff) from dominating the comparison.
    pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
            .fold(0.0, f64::max)
    }

    /// Random model with parameters in [-1, 1] and a random batch.
    pub fn random_model_and_batch(arch: ArchSpec, seed: u64, rows: usize) -> (ClassifierModel, Batch) {
        let mut rng = crate::rng::rng_from_seed(seed);
        let mut model = init_model(arch, seed).unwrap();
        for p in model.params.iter_mut() {
            *p = crate::rng::uniform01(&mut rng) * 2.0 - 1.0;
        }
        let d = arch.input_dim();
        let k = arch.classes();
        let mut features = Array2::zeros((rows, d));
        for v in features.iter_mut() {
            *v = crate::rng::uniform01(&mut rng) * 2.0 - 1.0;
        }
        let labels = (0..rows)
            .map(|_| crate::rng::uniform_index(&mut rng, k))
            .collect();
        (model, Batch { features, labels })
    }
}
