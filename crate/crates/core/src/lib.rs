//! Subsample ensembles of ridge and ridgeless regressors, and their
//! equivalence with full-data ridge regression.
//!
//! The core objects are:
//!
//! * [`estimators`]: ridge, ridgeless, generalized-ridge, random-feature and
//!   kernel ridge fits, averaged over random subsamples.
//! * [`spectral`]: the fixed-point equation behind the equivalence, and the
//!   path of `(λ, ψ)` pairs sharing one fixed point.
//! * [`datapath`]: the same path computed from data alone.
//! * [`risks`] and [`theory`]: empirical and deterministic risks.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the precision to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod datapath;
pub mod error;
pub mod estimators;
pub mod extended;
pub mod linalg;
pub mod risks;
pub mod rng;
pub mod scalar;
pub mod spectral;
pub mod theory;

pub use datagen::{gen_m_ar1, gen_rf_model, load_csv, CovarianceSpec, CsvOptions, Dataset, NonlinearModel};
pub use datapath::{lambda_bar_data, lambda_bar_data_features, lambda_bar_data_kernel, DataLambdaBar, StieltjesPair};
pub use error::{Error, Result};
pub use estimators::{
    fit_ensemble, fit_generalized_ridge, fit_kernel_ensemble, fit_kernel_ridge, fit_ridge, sample_subsets, Activation,
    EnsembleFit, EnsembleSpec, FeatureMap, KernelKind,
};
pub use extended::Extended;
pub use risks::{generalized_risk, mc_prediction_risk, Functional, PathProfile, RiskSpec, RiskValue};
pub use scalar::Real;
pub use spectral::{lambda_bar, solve_v, EquivalencePath, PathPoint, SolverOptions, SpectralDistribution};
pub use theory::{FiniteModel, LimitSpec, RiskTerms, Weight};

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Spectrum64 = SpectralDistribution<f64>;
pub type Spectrum32 = SpectralDistribution<f32>;
pub type Path64 = EquivalencePath<f64>;
pub type Path32 = EquivalencePath<f32>;
pub type EnsembleFit64 = EnsembleFit<f64>;
pub type EnsembleFit32 = EnsembleFit<f32>;
pub type LimitSpec64 = LimitSpec<f64>;
pub type FiniteModel64 = FiniteModel<f64>;
