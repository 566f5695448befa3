//! Per-column link functions mapping features to one factor column.
//!
//! A [`LinkFitter`] caches everything that depends only on the features (QR
//! factors, spline designs and penalties, kernel Gram eigensystems) and
//! produces [`LinkModel`]s from a reduced target. Predictions handed to the
//! solver are always ramped at zero.

mod kernel;
mod linear;
mod spline;

use std::borrow::Cow;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{numerical_rank, ramp};

pub use kernel::{Kernel, KernelDesign, KernelModel};
pub use linear::LinearDesign;
pub use spline::{gcv_grid, Smoothing, SplineBasis, SplineDesign, SplineModel, SplineTerm};

/// Relative singular-value cutoff used to decide column rank of features.
pub const RANK_TOL: f64 = 1e-10;

/// Features for one side of the matrix. `Identity` encodes "no side
/// information" without storing the identity matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Identity(usize),
    Matrix(DMatrix<f64>),
}

impl Features {
    /// Requires full column rank.
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let rank = numerical_rank(&x, RANK_TOL);
        if rank < x.ncols() {
            return Err(Error::RankDeficient {
                rows: x.nrows(),
                cols: x.ncols(),
                rank,
            });
        }
        Ok(Features::Matrix(x))
    }

    pub fn identity(n: usize) -> Self {
        Features::Identity(n)
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Features::Identity(_))
    }

    /// Number of individuals (rows of the feature matrix).
    pub fn len(&self) -> usize {
        match self {
            Features::Identity(n) => *n,
            Features::Matrix(x) => x.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Features::Identity(n) => *n,
            Features::Matrix(x) => x.ncols(),
        }
    }

    pub fn matrix(&self) -> Cow<'_, DMatrix<f64>> {
        match self {
            Features::Identity(n) => Cow::Owned(DMatrix::identity(*n, *n)),
            Features::Matrix(x) => Cow::Borrowed(x),
        }
    }

    /// Rows `range` of the features; identity features become the matching
    /// rows of the identity, which is no longer an identity.
    pub fn rows(&self, start: usize, len: usize) -> Features {
        match self {
            Features::Identity(n) if start == 0 && len == *n => self.clone(),
            _ => Features::Matrix(self.matrix().rows(start, len).into_owned()),
        }
    }
}

/// Row and column features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub rows: Features,
    pub cols: Features,
}

impl FeatureSet {
    pub fn new(rows: Features, cols: Features) -> Self {
        Self { rows, cols }
    }

    /// No side information on either side.
    pub fn identity(n1: usize, n2: usize) -> Self {
        Self {
            rows: Features::Identity(n1),
            cols: Features::Identity(n2),
        }
    }
}

/// Which family to fit on one side, with its tuning options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LinkSpec {
    /// Ignore the features: each factor entry is a free parameter.
    Identity,
    Linear,
    Spline {
        #[serde(default = "default_basis_dim")]
        basis_dim: usize,
        #[serde(default)]
        smoothing: Smoothing,
    },
    KernelRidge {
        #[serde(default)]
        kernel: Kernel,
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
}

fn default_basis_dim() -> usize {
    10
}

fn default_ridge() -> f64 {
    1e-3
}

impl LinkSpec {
    pub fn spline() -> Self {
        LinkSpec::Spline {
            basis_dim: default_basis_dim(),
            smoothing: Smoothing::default(),
        }
    }

    pub fn kernel_ridge() -> Self {
        LinkSpec::KernelRidge {
            kernel: Kernel::default(),
            ridge: default_ridge(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LinkSpec::Identity => "identity",
            LinkSpec::Linear => "linear",
            LinkSpec::Spline { .. } => "spline",
            LinkSpec::KernelRidge { .. } => "kernel",
        }
    }
}

impl FromStr for LinkSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "none" => Ok(LinkSpec::Identity),
            "linear" => Ok(LinkSpec::Linear),
            "spline" | "gam" => Ok(LinkSpec::spline()),
            "kernel" | "kernel_ridge" => Ok(LinkSpec::kernel_ridge()),
            "kernel_linear" => Ok(LinkSpec::KernelRidge {
                kernel: Kernel::Linear,
                ridge: default_ridge(),
            }),
            other => Err(Error::Parse(format!("unknown link family `{other}`"))),
        }
    }
}

/// `target = R f / ||f||^2`, `weight = ||f||^2`, so that
/// `||R - g f^T||^2 = weight * ||g - target||^2 + const` for every `g`.
pub fn reduce_subproblem(r: &DMatrix<f64>, partner: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    check_len("reduce_subproblem partner", r.ncols(), partner.len())?;
    let weight = partner.norm_squared();
    if weight == 0.0 {
        return Err(Error::InvalidArgument("partner column is zero".into()));
    }
    Ok((r * partner / weight, weight))
}

/// Feature-dependent state for fitting one side's links.
#[derive(Debug, Clone)]
pub enum LinkFitter {
    Identity(usize),
    Linear(LinearDesign),
    Spline(SplineDesign),
    Kernel(KernelDesign),
}

impl LinkFitter {
    pub fn prepare(spec: &LinkSpec, features: &Features) -> Result<Self> {
        match (spec, features) {
            (LinkSpec::Identity, f) | (LinkSpec::Linear, f @ Features::Identity(_)) => {
                Ok(LinkFitter::Identity(f.len()))
            }
            (LinkSpec::Linear, Features::Matrix(x)) => Ok(LinkFitter::Linear(LinearDesign::new(x)?)),
            (LinkSpec::Spline { basis_dim, smoothing }, Features::Matrix(x)) => Ok(
                LinkFitter::Spline(SplineDesign::new(x, *basis_dim, smoothing.clone())?),
            ),
            (LinkSpec::KernelRidge { kernel, ridge }, Features::Matrix(x)) => {
                Ok(LinkFitter::Kernel(KernelDesign::new(x, kernel, *ridge)?))
            }
            (spec, Features::Identity(_)) => Err(Error::InvalidArgument(format!(
                "{} links need feature matrices",
                spec.name()
            ))),
        }
    }

    /// Number of individuals the fitter was prepared on.
    pub fn len(&self) -> usize {
        match self {
            LinkFitter::Identity(n) => *n,
            LinkFitter::Linear(d) => d.len(),
            LinkFitter::Spline(d) => d.len(),
            LinkFitter::Kernel(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Minimizer of `weight * ||target - f(X)||^2 (+ penalty)` over the family.
    pub fn fit(&self, target: &DVector<f64>, weight: f64) -> Result<LinkModel> {
        check_len("link target", self.len(), target.len())?;
        if !(weight > 0.0) {
            return Err(Error::InvalidArgument(format!("weight must be positive, got {weight}")));
        }
        match self {
            LinkFitter::Identity(_) => Ok(LinkModel::Linear {
                coefficients: target.iter().copied().collect(),
            }),
            LinkFitter::Linear(d) => Ok(LinkModel::Linear {
                coefficients: d.solve(target).iter().copied().collect(),
            }),
            LinkFitter::Spline(d) => Ok(LinkModel::Spline(d.fit(target, weight)?)),
            LinkFitter::Kernel(d) => Ok(LinkModel::KernelRidge(d.fit(target, weight)?)),
        }
    }

    /// `D^T g` where `D` maps the link parameters to fitted values on the
    /// training features (identity, `X`, the spline design, or the Gram).
    pub fn design_transpose_times(&self, g: &DVector<f64>) -> DVector<f64> {
        match self {
            LinkFitter::Identity(_) => g.clone(),
            LinkFitter::Linear(d) => d.features().tr_mul(g),
            LinkFitter::Spline(d) => d.design().tr_mul(g),
            LinkFitter::Kernel(d) => d.gram().tr_mul(g),
        }
    }

    /// In-sample ramped values of `model`.
    pub fn evaluate(&self, model: &LinkModel) -> Result<DVector<f64>> {
        match (self, model) {
            (LinkFitter::Identity(n), LinkModel::Linear { coefficients }) => {
                check_len("identity link", *n, coefficients.len())?;
                Ok(ramp(&DVector::from_column_slice(coefficients)))
            }
            (LinkFitter::Linear(d), m) => m.evaluate(d.features()),
            (LinkFitter::Spline(d), m) => m.evaluate(d.features()),
            (LinkFitter::Kernel(d), m) => m.evaluate(d.features()),
            (LinkFitter::Identity(_), _) => Err(Error::InvalidArgument(
                "identity fitter can only evaluate linear links".into(),
            )),
        }
    }
}

/// A fitted link function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LinkModel {
    Linear { coefficients: Vec<f64> },
    Spline(SplineModel),
    KernelRidge(KernelModel),
}

impl LinkModel {
    pub fn family(&self) -> &'static str {
        match self {
            LinkModel::Linear { .. } => "linear",
            LinkModel::Spline(_) => "spline",
            LinkModel::KernelRidge(_) => "kernel_ridge",
        }
    }

    /// Feature dimension expected by [`LinkModel::evaluate`].
    pub fn input_dim(&self) -> usize {
        match self {
            LinkModel::Linear { coefficients } => coefficients.len(),
            LinkModel::Spline(m) => m.terms.len(),
            LinkModel::KernelRidge(m) => m.dim,
        }
    }

    /// Unthresholded `f(X)`.
    pub fn evaluate_raw(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        check_len("link features", self.input_dim(), x.ncols())?;
        match self {
            LinkModel::Linear { coefficients } => Ok(x * DVector::from_column_slice(coefficients)),
            LinkModel::Spline(m) => Ok(m.evaluate_raw(x)),
            LinkModel::KernelRidge(m) => Ok(m.evaluate_raw(x)),
        }
    }

    /// `max(0, f(X))`.
    pub fn evaluate(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(ramp(&self.evaluate_raw(x)?))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn reduce_rank_one_is_exact() {
        let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let v = DVector::from_vec(vec![2.0, 1.0]);
        let r = &u * v.transpose();
        let (t, w) = reduce_subproblem(&r, &v).unwrap();
        assert!((t - &u).norm() < 1e-15);
        assert_eq!(w, 5.0);
    }

    #[test]
    fn reduce_unit_partner_picks_column() {
        let r = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let (t, w) = reduce_subproblem(&r, &e1).unwrap();
        assert_eq!(t.as_slice(), &[1.0, 4.0]);
        assert_eq!(w, 1.0);
    }

    #[test]
    fn reduce_expansion_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_matrix(5, 4, &mut rng);
        let fc = random_matrix(4, 1, &mut rng).column(0).into_owned();
        let (t, w) = reduce_subproblem(&r, &fc).unwrap();
        // constant term: ||R||^2 - w ||t||^2
        let c = r.norm_squared() - w * t.norm_squared();
        for _ in 0..5 {
            let f = random_matrix(5, 1, &mut rng).column(0).into_owned();
            let lhs = (&r - &f * fc.transpose()).norm_squared();
            let rhs = w * (&f - &t).norm_squared() + c;
            assert!((lhs - rhs).abs() < 1e-12 * lhs.max(1.0));
        }
    }

    #[test]
    fn zero_partner_is_rejected() {
        let r = DMatrix::zeros(2, 2);
        assert!(reduce_subproblem(&r, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn identity_evaluation_ramps_coefficients() {
        let m = LinkModel::Linear {
            coefficients: vec![1.5, -2.0, 0.0],
        };
        let y = m.evaluate(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(y.as_slice(), &[1.5, 0.0, 0.0]);
    }

    #[test]
    fn rank_deficient_features_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(Features::new(x), Err(Error::RankDeficient { rank: 1, .. })));
    }

    #[test]
    fn link_spec_parsing() {
        assert_eq!("linear".parse::<LinkSpec>().unwrap(), LinkSpec::Linear);
        assert_eq!("spline".parse::<LinkSpec>().unwrap().name(), "spline");
        assert!("cubist".parse::<LinkSpec>().is_err());
        let toml_text = "family = \"spline\"\nbasis_dim = 8\n";
        let spec: LinkSpec = toml::from_str(toml_text).unwrap();
        assert!(matches!(spec, LinkSpec::Spline { basis_dim: 8, .. }));
    }

    #[test]
    fn models_round_trip_through_json() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_matrix(30, 2, &mut rng);
        let t = DVector::from_fn(30, |i, _| (x[(i, 0)] * 2.0).sin() + x[(i, 1)]);
        let features = Features::new(x.clone()).unwrap();
        for spec in [LinkSpec::Linear, LinkSpec::spline(), LinkSpec::kernel_ridge()] {
            let fitter = LinkFitter::prepare(&spec, &features).unwrap();
            let model = fitter.fit(&t, 1.7).unwrap();
            let back = LinkModel::from_json(&model.to_json().unwrap()).unwrap();
            assert_eq!(back, model);
            assert_eq!(back.evaluate(&x).unwrap(), fitter.evaluate(&model).unwrap());
        }
    }
}
