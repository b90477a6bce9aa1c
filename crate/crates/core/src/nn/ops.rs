//! Differentiable dense operations with explicit backward rules.
//!
//! Each forward function has a matching `*_backward` that takes the upstream
//! gradient and whatever the forward pass needs to keep.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Lower bound applied to the true-class probability inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// `x · w + b` with `b` broadcast over rows.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if b.shape() != (1, w.cols()) {
        return Err(Error::Shape {
            op: "linear bias",
            left: w.shape(),
            right: b.shape(),
        });
    }
    let mut out = x.matmul(w)?;
    out.add_row_broadcast(b)?;
    Ok(out)
}

pub struct LinearGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

pub fn linear_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<LinearGrads> {
    Ok(LinearGrads {
        dx: dy.matmul_nt(w)?,
        dw: x.matmul_tn(dy)?,
        db: dy.sum_rows(),
    })
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Gradient of relu given its *input*.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    dy.ensure_shape("relu_backward", x.shape())?;
    let mut out = dy.clone();
    for (g, &v) in out.data_mut().iter_mut().zip(x.data()) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(out)
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    if x.cols() == 0 {
        return Err(Error::InvalidArgument("softmax over an empty row".into()));
    }
    let mut out = x.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Gradient of softmax given its *output* `y`.
pub fn softmax_rows_backward(y: &Tensor, dy: &Tensor) -> Result<Tensor> {
    dy.ensure_shape("softmax_backward", y.shape())?;
    let mut out = Tensor::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let yr = y.row(r);
        let gr = dy.row(r);
        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for ((o, &yv), &gv) in out.row_mut(r).iter_mut().zip(yr).zip(gr) {
            *o = yv * (gv - inner);
        }
    }
    Ok(out)
}

/// Inverted dropout mask: surviving entries carry `1/(1-p)`, dropped ones 0.
pub fn dropout_mask<R: Rng>(rows: usize, cols: usize, p: f64, rng: &mut R) -> Result<Tensor> {
    check_dropout_rate(p)?;
    if p == 0.0 {
        return Ok(Tensor::full(rows, cols, 1.0));
    }
    let keep = 1.0 / (1.0 - p);
    let mut mask = Tensor::zeros(rows, cols);
    for v in mask.data_mut() {
        if rng.gen::<f64>() >= p {
            *v = keep;
        }
    }
    Ok(mask)
}

pub fn check_dropout_rate(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must be in [0, 1), got {p}"
        )));
    }
    Ok(())
}

/// Applies dropout. In eval mode (or with `p == 0`) this is the identity and
/// no mask is returned.
pub fn dropout<R: Rng>(
    x: &Tensor,
    p: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, Option<Tensor>)> {
    check_dropout_rate(p)?;
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let mask = dropout_mask(x.rows(), x.cols(), p, rng)?;
    Ok((x.hadamard(&mask)?, Some(mask)))
}

pub fn dropout_backward(mask: Option<&Tensor>, dy: &Tensor) -> Result<Tensor> {
    match mask {
        Some(m) => dy.hadamard(m),
        None => Ok(dy.clone()),
    }
}

/// Running statistics of a batch-norm layer. The learnable scale and shift
/// live in the parameter store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(features: usize) -> Self {
        Self {
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    /// Folds batch statistics into the running estimates. The variance uses
    /// the unbiased estimator.
    pub fn update(&mut self, stats: &BatchStats) {
        let n = stats.count as f64;
        let correction = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        let m = self.momentum;
        for k in 0..self.running_mean.len() {
            self.running_mean[k] = (1.0 - m) * self.running_mean[k] + m * stats.mean[k];
            self.running_var[k] = (1.0 - m) * self.running_var[k] + m * stats.var[k] * correction;
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance of the batch.
    pub var: Vec<f64>,
    pub count: usize,
}

/// Forward-pass residue needed by [`batch_norm_backward`].
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub x_hat: Tensor,
    pub inv_std: Vec<f64>,
    pub mode: Mode,
    pub stats: Option<BatchStats>,
}

pub fn batch_norm(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    state: &BatchNormState,
    mode: Mode,
) -> Result<(Tensor, BatchNormCache)> {
    let d = x.cols();
    gamma.ensure_shape("batch_norm gamma", (1, d))?;
    beta.ensure_shape("batch_norm beta", (1, d))?;
    if state.running_mean.len() != d || state.eps <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "batch norm state for {} features (eps {}) applied to {d} columns",
            state.running_mean.len(),
            state.eps
        )));
    }
    let n = x.rows();
    let (mean, var, stats) = match mode {
        Mode::Train => {
            if n == 0 {
                return Err(Error::InvalidArgument(
                    "batch norm on an empty batch".into(),
                ));
            }
            let mut mean = vec![0.0; d];
            for r in 0..n {
                for (m, v) in mean.iter_mut().zip(x.row(r)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            let mut var = vec![0.0; d];
            for r in 0..n {
                for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= n as f64);
            let stats = BatchStats {
                mean: mean.clone(),
                var: var.clone(),
                count: n,
            };
            (mean, var, Some(stats))
        }
        Mode::Eval => (state.running_mean.clone(), state.running_var.clone(), None),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + state.eps).sqrt()).collect();
    let mut x_hat = Tensor::zeros(n, d);
    let mut y = Tensor::zeros(n, d);
    for r in 0..n {
        for k in 0..d {
            let h = (x.get(r, k) - mean[k]) * inv_std[k];
            x_hat.set(r, k, h);
            y.set(r, k, gamma.get(0, k) * h + beta.get(0, k));
        }
    }
    Ok((
        y,
        BatchNormCache {
            x_hat,
            inv_std,
            mode,
            stats,
        },
    ))
}

pub struct BatchNormGrads {
    pub dx: Tensor,
    pub dgamma: Tensor,
    pub dbeta: Tensor,
}

pub fn batch_norm_backward(
    cache: &BatchNormCache,
    gamma: &Tensor,
    dy: &Tensor,
) -> Result<BatchNormGrads> {
    let (n, d) = cache.x_hat.shape();
    dy.ensure_shape("batch_norm_backward", (n, d))?;
    let mut dgamma = Tensor::zeros(1, d);
    let mut dbeta = Tensor::zeros(1, d);
    for r in 0..n {
        for k in 0..d {
            let g = dy.get(r, k);
            dgamma.data_mut()[k] += g * cache.x_hat.get(r, k);
            dbeta.data_mut()[k] += g;
        }
    }
    let mut dx = Tensor::zeros(n, d);
    match cache.mode {
        Mode::Eval => {
            for r in 0..n {
                for k in 0..d {
                    dx.set(r, k, dy.get(r, k) * gamma.get(0, k) * cache.inv_std[k]);
                }
            }
        }
        Mode::Train => {
            // dx = γ/σ · (dy − mean(dy) − x̂ · mean(dy ⊙ x̂))
            let nf = n as f64;
            for r in 0..n {
                for k in 0..d {
                    let v = dy.get(r, k)
                        - dbeta.get(0, k) / nf
                        - cache.x_hat.get(r, k) * dgamma.get(0, k) / nf;
                    dx.set(r, k, gamma.get(0, k) * cache.inv_std[k] * v);
                }
            }
        }
    }
    Ok(BatchNormGrads { dx, dgamma, dbeta })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

/// Cross-entropy of probability rows against `(row, class)` targets.
pub fn cross_entropy(
    probs: &Tensor,
    targets: &[(usize, usize)],
    reduction: Reduction,
) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument(
            "cross entropy over no targets".into(),
        ));
    }
    let mut total = 0.0;
    let mut clamped = 0usize;
    for &(row, class) in targets {
        if row >= probs.rows() || class >= probs.cols() {
            return Err(Error::InvalidArgument(format!(
                "target ({row}, {class}) outside probabilities {:?}",
                probs.shape()
            )));
        }
        let s: f64 = probs.row(row).iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "probability row {row} sums to {s}"
            )));
        }
        let p = probs.get(row, class);
        if p < PROB_FLOOR {
            clamped += 1;
        }
        total -= p.max(PROB_FLOOR).ln();
    }
    if clamped > 0 {
        log::warn!("cross entropy: {clamped} true-class probabilities clamped to {PROB_FLOOR}");
    }
    Ok(match reduction {
        Reduction::Mean => total / targets.len() as f64,
        Reduction::Sum => total,
    })
}

/// Gradient of `cross_entropy(softmax(logits))` with respect to the logits.
pub fn softmax_cross_entropy_backward(
    probs: &Tensor,
    targets: &[(usize, usize)],
    reduction: Reduction,
) -> Tensor {
    let scale = match reduction {
        Reduction::Mean => 1.0 / targets.len().max(1) as f64,
        Reduction::Sum => 1.0,
    };
    let mut grad = Tensor::zeros(probs.rows(), probs.cols());
    for &(row, class) in targets {
        for (g, p) in grad.row_mut(row).iter_mut().zip(probs.row(row)) {
            *g += scale * p;
        }
        let g = grad.get(row, class);
        grad.set(row, class, g - scale);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_identity_and_hand_multiply() {
        let w = Tensor::from_rows(&[[0.3, -1.0], [2.0, 0.5]]);
        let out = linear(&Tensor::identity(2), &w, &Tensor::zeros(1, 2)).unwrap();
        assert_eq!(out, w);

        let out = linear(
            &Tensor::from_rows(&[[1.0, 2.0]]),
            &Tensor::from_rows(&[[1.0], [1.0]]),
            &Tensor::from_rows(&[[1.0]]),
        )
        .unwrap();
        assert_eq!(out, Tensor::from_rows(&[[4.0]]));
    }

    #[test]
    fn linear_shape_mismatch_names_shapes() {
        let err = linear(
            &Tensor::zeros(2, 3),
            &Tensor::zeros(2, 2),
            &Tensor::zeros(1, 2),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("(2, 3)") && err.contains("(2, 2)"), "{err}");
    }

    #[test]
    fn relu_and_softmax_basics() {
        let r = relu(&Tensor::from_rows(&[[-1.0, 2.0]]));
        assert_eq!(r, Tensor::from_rows(&[[0.0, 2.0]]));
        let s = softmax_rows(&Tensor::zeros(1, 3)).unwrap();
        for &v in s.data() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert!(softmax_rows(&Tensor::zeros(2, 0)).is_err());
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_rows(&[[1.0, -2.0, 3.0]]);
        for mode in [Mode::Train, Mode::Eval] {
            let (y, _) = dropout(&x, 0.0, mode, &mut rng).unwrap();
            assert_eq!(y, x);
        }
        let (y, mask) = dropout(&x, 0.5, Mode::Eval, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
        assert!(dropout(&x, 1.0, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_scales_survivors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::full(20, 20, 1.0);
        let (y, _) = dropout(&x, 0.25, Mode::Train, &mut rng).unwrap();
        for &v in y.data() {
            assert!(v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let onehot = Tensor::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(
            cross_entropy(&onehot, &[(0, 0), (1, 1)], Reduction::Mean).unwrap(),
            0.0
        );
        let uniform = Tensor::full(4, 3, 1.0 / 3.0);
        let t = [(0, 0), (1, 1), (2, 2), (3, 0)];
        assert_abs_diff_eq!(
            cross_entropy(&uniform, &t, Reduction::Mean).unwrap(),
            3f64.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            cross_entropy(&uniform, &t, Reduction::Sum).unwrap(),
            4.0 * 3f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn cross_entropy_clamps_zero_probability() {
        let p = Tensor::from_rows(&[[1.0, 0.0]]);
        let loss = cross_entropy(&p, &[(0, 1)], Reduction::Mean).unwrap();
        assert_abs_diff_eq!(loss, -(PROB_FLOOR.ln()), epsilon = 1e-9);
    }

    #[test]
    fn cross_entropy_rejects_unnormalised_rows() {
        let p = Tensor::from_rows(&[[0.5, 0.2]]);
        assert!(cross_entropy(&p, &[(0, 0)], Reduction::Mean).is_err());
    }

    #[test]
    fn batch_norm_eval_is_affine() {
        let mut state = BatchNormState::new(2);
        state.running_mean = vec![1.0, -2.0];
        state.running_var = vec![4.0, 0.25];
        let gamma = Tensor::from_rows(&[[2.0, 0.5]]);
        let beta = Tensor::from_rows(&[[0.1, -0.1]]);
        let x = Tensor::from_rows(&[[3.0, -1.0], [1.0, -2.0]]);
        let (y, _) = batch_norm(&x, &gamma, &beta, &state, Mode::Eval).unwrap();
        let s0 = 2.0 / (4.0f64 + 1e-5).sqrt();
        let s1 = 0.5 / (0.25f64 + 1e-5).sqrt();
        assert_abs_diff_eq!(y.get(0, 0), s0 * 2.0 + 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(y.get(0, 1), s1 * 1.0 - 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(y.get(1, 0), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(y.get(1, 1), -0.1, epsilon = 1e-12);
    }

    #[test]
    fn batch_norm_train_normalises_columns() {
        let state = BatchNormState::new(1);
        let x = Tensor::from_rows(&[[1.0], [2.0], [3.0], [6.0]]);
        let (y, cache) = batch_norm(
            &x,
            &Tensor::full(1, 1, 1.0),
            &Tensor::zeros(1, 1),
            &state,
            Mode::Train,
        )
        .unwrap();
        assert_abs_diff_eq!(y.sum(), 0.0, epsilon = 1e-12);
        let stats = cache.stats.unwrap();
        assert_abs_diff_eq!(stats.mean[0], 3.0);
        assert_abs_diff_eq!(stats.var[0], 3.5);
    }
}
