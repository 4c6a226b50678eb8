//! Turns the data section of a config into train/test sets.

use nalgebra::DMatrix;
use subridge::datagen::{CovarianceSpec, Shift};
use subridge::estimators::{random_feature_weights, Activation, FeatureMap};
use subridge::risks::RiskSpec;
use subridge::{load_csv, CsvOptions, Dataset, NonlinearModel};

use crate::config::{DataConfig, FeatureConfig};
use crate::error::CliError;
use crate::seeds;

pub fn parse_activation(name: &str) -> Result<Activation, CliError> {
    match name {
        "identity" => Ok(Activation::Identity),
        "sigmoid" => Ok(Activation::Sigmoid),
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        other => Err(CliError::Usage(format!(
            "features.activation: unknown activation {other:?} (identity, sigmoid, relu, tanh)"
        ))),
    }
}

/// Risks a sweep or path can report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskKind {
    Estimation,
    Training,
    InSample,
    /// Oracle prediction risk on a fresh sample from the training distribution.
    Prediction,
    /// Oracle prediction risk under AR(1) covariate shift.
    Ood,
    /// Mean squared error on held-out rows; the only kind available for CSV data.
    TestError,
}

impl RiskKind {
    pub fn parse(name: &str) -> Result<Self, String> {
        Ok(match name {
            "estimation" => RiskKind::Estimation,
            "training" => RiskKind::Training,
            "in_sample" => RiskKind::InSample,
            "prediction" => RiskKind::Prediction,
            "ood" => RiskKind::Ood,
            "test_error" => RiskKind::TestError,
            other => {
                return Err(format!(
                    "unknown risk kind {other:?} (estimation, training, in_sample, prediction, ood, test_error)"
                ))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            RiskKind::Estimation => "estimation",
            RiskKind::Training => "training",
            RiskKind::InSample => "in_sample",
            RiskKind::Prediction => "prediction",
            RiskKind::Ood => "ood",
            RiskKind::TestError => "test_error",
        }
    }

    pub fn needs_ground_truth(self) -> bool {
        self != RiskKind::TestError
    }
}

/// Loaded experiment data.
pub struct Experiment {
    pub train: Dataset<f64>,
    /// Held-out rows for test error.
    pub test: Dataset<f64>,
    /// Generating model, when the data is synthetic.
    pub model: Option<NonlinearModel<f64>>,
    pub feature_map: FeatureMap<f64>,
    /// Training design after the feature map.
    pub features: DMatrix<f64>,
}

impl Experiment {
    pub fn load(data: &DataConfig, features: &FeatureConfig, seed: u64, test_size: usize) -> Result<Self, CliError> {
        let (train, test, model) = match data {
            DataConfig::MAr1 { n, p, rho } => {
                let model = NonlinearModel::m_ar1(*p, *rho)?;
                synthetic(model, *n, seed, test_size)?
            }
            DataConfig::Isotropic { n, p } => {
                let model = NonlinearModel::isotropic_gaussian(*p, None)?;
                synthetic(model, *n, seed, test_size)?
            }
            DataConfig::Csv {
                path,
                response,
                center_response,
                center_features,
                test_fraction,
            } => {
                let opts = CsvOptions {
                    center_response: *center_response,
                    center_features: *center_features,
                };
                let all: Dataset<f64> = load_csv(path, response, &opts)?;
                let (train, test) = all.split(*test_fraction, seeds::derive(seed, seeds::SPLIT, 0))?;
                (train, test, None)
            }
        };
        let feature_map = match features {
            FeatureConfig::Linear => FeatureMap::Linear,
            FeatureConfig::Random { d, activation } => FeatureMap::Random {
                weights: random_feature_weights(*d, train.p(), seeds::derive(seed, seeds::FEATURES, 0)),
                activation: parse_activation(activation)?,
            },
        };
        let features = feature_map.transform(&train.x)?;
        Ok(Self {
            train,
            test,
            model,
            feature_map,
            features,
        })
    }

    /// Population covariance of the design the estimators see, if known.
    pub fn covariance(&self) -> Option<&DMatrix<f64>> {
        match self.feature_map {
            FeatureMap::Linear => self.model.as_ref().map(NonlinearModel::covariance),
            _ => None,
        }
    }

    pub fn phi(&self) -> f64 {
        self.features.ncols() as f64 / self.features.nrows() as f64
    }

    /// Oracle risk specification for `kind`; `None` for test error.
    pub fn risk_spec(
        &self,
        kind: RiskKind,
        ood_rho: f64,
        seed: u64,
        test_size: usize,
    ) -> Result<Option<RiskSpec<f64>>, CliError> {
        if kind.needs_ground_truth() && (self.model.is_none() || self.feature_map != FeatureMap::Linear) {
            return Err(CliError::Usage(format!(
                "risk kind {:?} needs synthetic data with linear features; use test_error",
                kind.name()
            )));
        }
        Ok(match kind {
            RiskKind::Estimation => Some(RiskSpec::CoefficientEstimation),
            RiskKind::Training => Some(RiskSpec::TrainingError),
            RiskKind::InSample => Some(RiskSpec::InSample),
            RiskKind::Prediction => Some(RiskSpec::out_of_sample(&self.test)?),
            RiskKind::Ood => {
                let model = self.model.as_ref().expect("checked above");
                let shift = Shift {
                    covariance: Some(CovarianceSpec::Ar1 { rho: ood_rho }),
                    label: None,
                };
                let shifted = model.sample_shifted(test_size, seeds::derive(seed, seeds::OOD, 0), &shift)?;
                Some(RiskSpec::out_of_sample(&shifted)?)
            }
            RiskKind::TestError => None,
        })
    }
}

type Split = (Dataset<f64>, Dataset<f64>, Option<NonlinearModel<f64>>);

fn synthetic(model: NonlinearModel<f64>, n: usize, seed: u64, test_size: usize) -> Result<Split, CliError> {
    let train = model.sample(n, seeds::derive(seed, seeds::TRAIN, 0))?;
    let test = model.sample(test_size, seeds::derive(seed, seeds::TEST, 0))?;
    Ok((train, test, Some(model)))
}
