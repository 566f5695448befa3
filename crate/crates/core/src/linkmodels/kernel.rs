use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::median;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// `exp(-|x - y|^2 / (2 bandwidth^2))`; the median pairwise distance of
    /// the training features when no bandwidth is given.
    Rbf {
        #[serde(default)]
        bandwidth: Option<f64>,
    },
    /// `x^T y`.
    Linear,
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::Rbf { bandwidth: None }
    }
}

impl Kernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Rbf { bandwidth } => {
                let h = bandwidth.expect("bandwidth resolved before evaluation");
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * h * h)).exp()
            }
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }

    fn resolve(&self, rows: &[Vec<f64>]) -> Result<Kernel> {
        match self {
            Kernel::Rbf { bandwidth: Some(h) } => {
                if !(*h > 0.0) {
                    return Err(Error::InvalidArgument(format!("RBF bandwidth must be positive, got {h}")));
                }
                Ok(self.clone())
            }
            Kernel::Rbf { bandwidth: None } => {
                let mut dists = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
                for i in 0..rows.len() {
                    for j in 0..i {
                        let d2: f64 = rows[i].iter().zip(&rows[j]).map(|(x, y)| (x - y) * (x - y)).sum();
                        dists.push(d2.sqrt());
                    }
                }
                let h = median(&mut dists);
                if !(h > 0.0) {
                    return Err(Error::InvalidArgument(
                        "median heuristic gives a zero RBF bandwidth".into(),
                    ));
                }
                Ok(Kernel::Rbf { bandwidth: Some(h) })
            }
            Kernel::Linear => Ok(Kernel::Linear),
        }
    }
}

fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn cross_gram(kernel: &Kernel, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| kernel.eval(&a[i], &b[j]))
}

/// Kernel ridge regression on fixed training features, with the Gram
/// eigensystem cached so each fit costs one `n x n` product.
#[derive(Debug, Clone)]
pub struct KernelDesign {
    features: DMatrix<f64>,
    kernel: Kernel,
    ridge: f64,
    gram: DMatrix<f64>,
    eigenvectors: DMatrix<f64>,
    eigenvalues: DVector<f64>,
}

impl KernelDesign {
    pub fn new(x: &DMatrix<f64>, kernel: &Kernel, ridge: f64) -> Result<Self> {
        if !(ridge >= 0.0) {
            return Err(Error::InvalidArgument(format!("ridge must be nonnegative, got {ridge}")));
        }
        let rows = rows_of(x);
        let kernel = kernel.resolve(&rows)?;
        let gram = cross_gram(&kernel, &rows, &rows);
        let eig = gram.clone().symmetric_eigen();
        Ok(Self {
            features: x.clone(),
            kernel,
            ridge,
            gram,
            eigenvectors: eig.eigenvectors,
            eigenvalues: eig.eigenvalues,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Dual weights `(K + (ridge / weight) I)^{-1} target`.
    pub fn fit(&self, target: &DVector<f64>, weight: f64) -> Result<KernelModel> {
        check_len("kernel target", self.len(), target.len())?;
        let shift = self.ridge / weight;
        let top = self.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let bottom = self.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v)) + shift;
        if !(bottom > 1e-12 * (top + shift)) {
            return Err(Error::NotPositiveDefinite(format!(
                "smallest eigenvalue of K + {shift:e} I is {bottom:e}"
            )));
        }
        let coords = self.eigenvectors.tr_mul(target);
        let scaled = DVector::from_fn(coords.len(), |i, _| coords[i] / (self.eigenvalues[i] + shift));
        let weights = &self.eigenvectors * scaled;
        Ok(KernelModel {
            kernel: self.kernel.clone(),
            ridge: self.ridge,
            dim: self.features.ncols(),
            training: self.features.transpose().iter().copied().collect(),
            weights: weights.iter().copied().collect(),
        })
    }
}

/// `f(x) = sum_i weights_i k(x, x_i)` over the stored training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub kernel: Kernel,
    pub ridge: f64,
    pub dim: usize,
    /// Training features, row-major.
    pub training: Vec<f64>,
    pub weights: Vec<f64>,
}

impl KernelModel {
    pub(crate) fn evaluate_raw(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let train: Vec<Vec<f64>> = self.training.chunks(self.dim.max(1)).map(|c| c.to_vec()).collect();
        let k = cross_gram(&self.kernel, &rows_of(x), &train);
        k * DVector::from_column_slice(&self.weights)
    }
}
