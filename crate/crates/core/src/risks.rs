//! Generalized quadratic risks of fitted coefficients, Monte Carlo test
//! errors, and functional profiles along an equivalence path.
//!
//! A risk is `(1/nrow(A)) ‖A(β̂ − β₀) + b‖²`; the named variants fix `(A, b)`:
//!
//! | variant                 | `A`    | `b`      |
//! |-------------------------|--------|----------|
//! | coefficient estimation  | `I`    | `0`      |
//! | coefficient coordinate  | `eⱼᵀ`  | `0`      |
//! | training error          | `X`    | `−f_NL`  |
//! | in-sample prediction    | `X`    | `0`      |
//! | out-of-sample           | `X₀`   | `−ε₀`    |

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{StandardNormal, StudentT};
use rayon::prelude::*;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{fit_ensemble_on, subsample_size, EnsembleFit, EnsembleSpec, FeatureMap, KernelEnsembleFit};
use crate::extended::Extended;
use crate::linalg;
use crate::rng;
use crate::scalar::{count, Real};
use crate::spectral::{EquivalencePath, PathPoint};

/// Choice of `(A, b)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RiskSpec<T: Real> {
    CoefficientEstimation,
    CoefficientCoordinate(usize),
    TrainingError,
    InSample,
    /// Test rows `X₀` and their nonlinear residuals `ε₀ = y₀ − X₀β₀`.
    OutOfSample {
        x0: DMatrix<T>,
        eps0: DVector<T>,
    },
    Custom {
        a: DMatrix<T>,
        b: DVector<T>,
    },
}

impl<T: Real> RiskSpec<T> {
    /// Out-of-sample risk on a dataset drawn with known ground truth.
    pub fn out_of_sample(test: &Dataset<T>) -> Result<Self> {
        let eps0 = test
            .f_nl
            .clone()
            .ok_or_else(|| Error::Precondition("test data has no f_nl".into()))?;
        Ok(RiskSpec::OutOfSample {
            x0: test.x.clone(),
            eps0,
        })
    }

    pub fn name(&self) -> String {
        match self {
            RiskSpec::CoefficientEstimation => "estimation".into(),
            RiskSpec::CoefficientCoordinate(j) => format!("coordinate_{j}"),
            RiskSpec::TrainingError => "training".into(),
            RiskSpec::InSample => "in_sample".into(),
            RiskSpec::OutOfSample { .. } => "out_of_sample".into(),
            RiskSpec::Custom { .. } => "custom".into(),
        }
    }
}

/// Risk value with its row normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskValue<T> {
    pub value: T,
    pub nrow: usize,
    /// Standard error when the value is a Monte Carlo average.
    pub mc_se: Option<T>,
}

fn mean_square<T: Real>(r: &DVector<T>) -> T {
    r.norm_squared() / count::<T>(r.len())
}

/// `(1/nrow(A)) ‖A(β̂ − β₀) + b‖²`.
pub fn generalized_risk<T: Real>(beta_hat: &DVector<T>, spec: &RiskSpec<T>, data: &Dataset<T>) -> Result<RiskValue<T>> {
    let beta0 = data
        .beta0
        .as_ref()
        .ok_or_else(|| Error::Precondition("dataset has no beta0".into()))?;
    let p = beta0.len();
    if beta_hat.len() != p {
        return Err(Error::input(format!(
            "coefficients have length {}, beta0 has {p}",
            beta_hat.len()
        )));
    }
    let diff = beta_hat - beta0;
    let residual = match spec {
        RiskSpec::CoefficientEstimation => diff,
        RiskSpec::CoefficientCoordinate(j) => {
            if *j >= p {
                return Err(Error::param(format!("coordinate {j} out of range for p = {p}")));
            }
            DVector::from_element(1, diff[*j])
        }
        RiskSpec::TrainingError => {
            let f_nl = data
                .f_nl
                .as_ref()
                .ok_or_else(|| Error::Precondition("dataset has no f_nl".into()))?;
            &data.x * diff - f_nl
        }
        RiskSpec::InSample => &data.x * diff,
        RiskSpec::OutOfSample { x0, eps0 } => {
            if x0.ncols() != p || x0.nrows() != eps0.len() || x0.nrows() == 0 {
                return Err(Error::input("out-of-sample rows do not conform"));
            }
            x0 * diff - eps0
        }
        RiskSpec::Custom { a, b } => {
            if a.nrows() == 0 || a.ncols() != p || b.len() != a.nrows() {
                return Err(Error::input(format!(
                    "custom functional is {}x{} with offset of length {}, expected ?x{p}",
                    a.nrows(),
                    a.ncols(),
                    b.len()
                )));
            }
            linalg::ensure_finite_matrix(a, "functional matrix")?;
            linalg::ensure_finite_vector(b, "functional offset")?;
            a * diff + b
        }
    };
    Ok(RiskValue {
        value: mean_square(&residual),
        nrow: residual.len(),
        mc_se: None,
    })
}

/// Anything that maps raw test features to predictions.
pub trait Predictor<T: Real> {
    fn predict(&self, x: &DMatrix<T>) -> Result<DVector<T>>;
}

impl<T: Real> Predictor<T> for EnsembleFit<T> {
    fn predict(&self, x: &DMatrix<T>) -> Result<DVector<T>> {
        EnsembleFit::predict(self, x)
    }
}

impl<T: Real> Predictor<T> for KernelEnsembleFit<T> {
    fn predict(&self, x: &DMatrix<T>) -> Result<DVector<T>> {
        KernelEnsembleFit::predict(self, x)
    }
}

/// Linear predictor with fixed coefficients.
impl<T: Real> Predictor<T> for DVector<T> {
    fn predict(&self, x: &DMatrix<T>) -> Result<DVector<T>> {
        if x.ncols() != self.len() {
            return Err(Error::input(format!(
                "test design has {} columns, coefficients {}",
                x.ncols(),
                self.len()
            )));
        }
        Ok(x * self)
    }
}

/// Mean squared test error with its standard error.
pub fn mc_prediction_risk<T: Real>(
    fit: &impl Predictor<T>,
    test_x: &DMatrix<T>,
    test_y: &DVector<T>,
) -> Result<RiskValue<T>> {
    if test_x.nrows() == 0 {
        return Err(Error::input("empty test set"));
    }
    if test_x.nrows() != test_y.len() {
        return Err(Error::input(format!(
            "test design has {} rows, response {}",
            test_x.nrows(),
            test_y.len()
        )));
    }
    let err = fit.predict(test_x)? - test_y;
    let sq: Vec<T> = err.iter().map(|e| *e * *e).collect();
    let n = count::<T>(sq.len());
    let mean = sq.iter().fold(T::zero(), |a, b| a + *b) / n;
    let se = if sq.len() > 1 {
        let var = sq.iter().fold(T::zero(), |a, b| a + (*b - mean) * (*b - mean)) / (n - T::one());
        (var / n).sqrt()
    } else {
        T::zero()
    };
    Ok(RiskValue {
        value: mean,
        nrow: sq.len(),
        mc_se: Some(se),
    })
}

/// Quantity tracked along a path.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional<T: Real> {
    Risk(RiskSpec<T>),
    /// Mean squared error on held-out rows.
    TestError {
        x: DMatrix<T>,
        y: DVector<T>,
    },
    /// `aᵀβ̂`.
    Linear(DVector<T>),
}

impl<T: Real> Functional<T> {
    pub fn name(&self) -> String {
        match self {
            Functional::Risk(r) => r.name(),
            Functional::TestError { .. } => "test_error".into(),
            Functional::Linear(_) => "linear".into(),
        }
    }

    fn evaluate(&self, fit: &EnsembleFit<T>, data: &Dataset<T>) -> Result<RiskValue<T>> {
        match self {
            Functional::Risk(spec) => {
                if fit.feature_map != FeatureMap::Linear {
                    return Err(Error::Precondition(
                        "oracle risks need coefficients in the raw feature space".into(),
                    ));
                }
                generalized_risk(&fit.beta_bar, spec, data)
            }
            Functional::TestError { x, y } => mc_prediction_risk(fit, x, y),
            Functional::Linear(a) => {
                if a.len() != fit.beta_bar.len() {
                    return Err(Error::input(format!(
                        "functional has length {}, coefficients {}",
                        a.len(),
                        fit.beta_bar.len()
                    )));
                }
                Ok(RiskValue {
                    value: a.dot(&fit.beta_bar),
                    nrow: 1,
                    mc_se: None,
                })
            }
        }
    }
}

/// One fitted path point.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePoint<T> {
    pub point: PathPoint<T>,
    pub k: usize,
    pub seed: u64,
    /// One value per requested functional, in request order.
    pub values: Vec<RiskValue<T>>,
}

/// Functional values along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathProfile<T> {
    pub m: usize,
    pub names: Vec<String>,
    pub points: Vec<ProfilePoint<T>>,
}

impl<T: Real> PathProfile<T> {
    fn column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        self.points.iter().map(move |pt| pt.values[j].value)
    }

    /// `max − min` of functional `j` along the path.
    pub fn range(&self, j: usize) -> T {
        let lo = self.column(j).fold(T::max_value().unwrap(), |a, b| a.min(b));
        let hi = self.column(j).fold(T::min_value().unwrap(), |a, b| a.max(b));
        hi - lo
    }

    pub fn mean(&self, j: usize) -> T {
        self.column(j).fold(T::zero(), |a, b| a + b) / count::<T>(self.points.len())
    }
}

/// Fits an `M`-ensemble at every `θ` and evaluates each functional.
///
/// The subsample size at `ψ` is `⌊p/ψ⌋` with `p` the feature dimension after
/// the feature map; point `i` uses the seed derived from `(seed, i)`. An
/// infinite penalty yields the zero estimator.
pub fn path_functional_profile<T: Real>(
    data: &Dataset<T>,
    feature_map: &FeatureMap<T>,
    path: &EquivalencePath<T>,
    thetas: &[T],
    functionals: &[Functional<T>],
    m: usize,
    seed: u64,
) -> Result<PathProfile<T>> {
    if functionals.is_empty() {
        return Err(Error::param("no functionals requested"));
    }
    let z = feature_map.transform(&data.x)?;
    let (n, p) = z.shape();
    let points = path.points(thetas)?;
    let profile: Vec<ProfilePoint<T>> = points
        .into_par_iter()
        .enumerate()
        .map(|(i, point)| {
            let k = subsample_size(p, point.psi, n)?;
            let point_seed = rng::derive_seed(seed, &[i as u64]);
            let fit = match point.lambda {
                Extended::Finite(lambda) => {
                    let spec = EnsembleSpec {
                        k,
                        m,
                        lambda,
                        seed: point_seed,
                        retain_members: false,
                    };
                    fit_ensemble_on(&z, &data.y, &spec, feature_map.clone())?
                }
                Extended::Infinite => EnsembleFit {
                    beta_bar: DVector::zeros(p),
                    members: None,
                    k,
                    m,
                    lambda: T::max_value().unwrap(),
                    seed: point_seed,
                    subsets: Vec::new(),
                    feature_map: feature_map.clone(),
                },
            };
            let values = functionals
                .iter()
                .map(|f| f.evaluate(&fit, data))
                .collect::<Result<Vec<_>>>()?;
            Ok(ProfilePoint {
                point,
                k,
                seed: point_seed,
                values,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PathProfile {
        m,
        names: functionals.iter().map(Functional::name).collect(),
        points: profile,
    })
}

/// [`path_functional_profile`] restricted to risks of linear fits.
pub fn path_risk_profile<T: Real>(
    data: &Dataset<T>,
    path: &EquivalencePath<T>,
    thetas: &[T],
    risks: &[RiskSpec<T>],
    m: usize,
    seed: u64,
) -> Result<PathProfile<T>> {
    let functionals: Vec<Functional<T>> = risks.iter().cloned().map(Functional::Risk).collect();
    path_functional_profile(data, &FeatureMap::Linear, path, thetas, &functionals, m, seed)
}

/// Direction of a linear functional `aᵀβ̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    /// `a = 𝟏/√p`.
    Uniform,
    /// `aᵢ ~ N(0, 1/p)`.
    Gaussian,
    /// `aᵢ ~ t₃/√p`.
    StudentT,
}

impl ProjectionKind {
    pub fn name(self) -> &'static str {
        match self {
            ProjectionKind::Uniform => "uniform",
            ProjectionKind::Gaussian => "gaussian",
            ProjectionKind::StudentT => "student_t",
        }
    }

    fn tag(self) -> u64 {
        match self {
            ProjectionKind::Uniform => 0,
            ProjectionKind::Gaussian => 1,
            ProjectionKind::StudentT => 2,
        }
    }
}

/// Projection vector of the given kind, drawn from its own stream of `seed`.
pub fn projection_vector<T: Real>(kind: ProjectionKind, p: usize, seed: u64) -> DVector<T> {
    let scale = 1.0 / (p as f64).sqrt();
    let mut rng = rng::stream(seed, &[rng::tags::PROJECTION, kind.tag()]);
    let draw = |rng: &mut rng::Rng| -> f64 {
        match kind {
            ProjectionKind::Uniform => 1.0,
            ProjectionKind::Gaussian => rng.sample(StandardNormal),
            ProjectionKind::StudentT => rng.sample(StudentT::new(3.0).expect("valid degrees of freedom")),
        }
    };
    DVector::from_fn(p, |_, _| crate::scalar::lit::<T>(draw(&mut rng) * scale))
}

/// Ordinary least squares coefficients, used as a stand-in for `β₀` on data
/// without ground truth. This is an estimate, not the truth.
pub fn estimate_beta0_empirical<T: Real>(data: &Dataset<T>) -> Result<DVector<T>> {
    let (n, p) = data.x.shape();
    if n <= p {
        return Err(Error::Precondition(format!(
            "least squares needs n > p, got n = {n}, p = {p}"
        )));
    }
    let gram = linalg::cross_product(&data.x);
    let vals = linalg::sym_eigenvalues(&gram);
    let top = vals.first().copied().unwrap_or(T::zero());
    let bottom = vals.last().copied().unwrap_or(T::zero());
    if !(bottom > linalg::pinv_cutoff(top, n, p)) {
        return Err(Error::Precondition("design matrix is rank deficient".into()));
    }
    let rhs = data.x.transpose() * &data.y;
    linalg::spd_solve(gram, &rhs, "design gram matrix")
}
