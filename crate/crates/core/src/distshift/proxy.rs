use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::softmax_in_place;
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProxyConfig {
    pub steps: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 0.1,
            l2: 1e-4,
        }
    }
}

impl ProxyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0
            || self.lr.is_nan()
            || self.lr <= 0.0
            || self.l2.is_nan()
            || self.l2 < 0.0
        {
            return Err(Error::InvalidArgument(format!(
                "proxy needs steps > 0, lr > 0, l2 >= 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Multinomial logistic regression on standardized features, trained by
/// full-batch gradient descent from zero weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyClassifier {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
    weight: Tensor,
    bias: Tensor,
}

impl ProxyClassifier {
    /// `targets` are `(row, class)` pairs into `x`. Standardization
    /// statistics come from the target rows only.
    pub fn fit(
        x: &Tensor,
        targets: &[(usize, usize)],
        num_classes: usize,
        cfg: &ProxyConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if targets.is_empty() {
            return Err(Error::InvalidArgument(
                "proxy classifier needs labeled rows".into(),
            ));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument(
                "proxy classifier needs at least 2 classes".into(),
            ));
        }
        let d = x.cols();
        let rows: Vec<usize> = targets.iter().map(|&(r, _)| r).collect();
        if let Some(&bad) = rows.iter().find(|&&r| r >= x.rows()) {
            return Err(Error::NodeOutOfRange {
                index: bad,
                node_count: x.rows(),
            });
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &r in &rows {
            for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for &r in &rows {
            for ((s, &v), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let inv_std = var
            .iter()
            .map(|&v| if v > 1e-24 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();

        let mut model = Self {
            mean,
            inv_std,
            weight: Tensor::zeros(d, num_classes),
            bias: Tensor::zeros(1, num_classes),
        };
        let xs = model.standardize(&x.gather_rows(&rows));
        for _ in 0..cfg.steps {
            let mut g = model.logits_standardized(&xs)?;
            for (k, &(_, y)) in targets.iter().enumerate() {
                let row = g.row_mut(k);
                softmax_in_place(row);
                row[y] -= 1.0;
                for v in row.iter_mut() {
                    *v /= n;
                }
            }
            let mut dw = xs.matmul_tn(&g)?;
            dw.axpy(cfg.l2, &model.weight)?;
            let db = g.sum_rows();
            model.weight.axpy(-cfg.lr, &dw)?;
            model.bias.axpy(-cfg.lr, &db)?;
        }
        Ok(model)
    }

    fn standardize(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, &m), &s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.inv_std) {
                *v = (*v - m) * s;
            }
        }
        out
    }

    fn logits_standardized(&self, xs: &Tensor) -> Result<Tensor> {
        let mut z = xs.matmul(&self.weight)?;
        z.add_row_broadcast(&self.bias)?;
        Ok(z)
    }

    pub fn num_classes(&self) -> usize {
        self.weight.cols()
    }

    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        x.ensure_shape("proxy input", (x.rows(), self.weight.rows()))?;
        let mut p = self.logits_standardized(&self.standardize(x))?;
        for i in 0..p.rows() {
            softmax_in_place(p.row_mut(i));
        }
        Ok(p)
    }

    pub fn predict_row(&self, x: &[f64]) -> Vec<f64> {
        let c = self.num_classes();
        let mut out = self.bias.row(0).to_vec();
        for (k, &v) in x.iter().enumerate() {
            let s = (v - self.mean[k]) * self.inv_std[k];
            for (o, &w) in out.iter_mut().zip(&self.weight.row(k)[..c]) {
                *o += s * w;
            }
        }
        softmax_in_place(&mut out);
        out
    }
}
