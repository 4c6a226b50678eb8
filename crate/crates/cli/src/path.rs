//! Functionals along equivalence paths.

use std::path::{Path, PathBuf};

use subridge::datapath::{lambda_bar_data, DataLambdaBar};
use subridge::estimators::subsample_size;
use subridge::risks::{path_functional_profile, projection_vector, Functional, PathProfile, ProjectionKind};
use subridge::spectral::{spectrum_of, uniform_thetas, EquivalencePath, SolverOptions, SpectralDistribution};
use subridge::Extended;

use crate::config::{ExperimentConfig, PathConfig, PathSource};
use crate::data::{Experiment, RiskKind};
use crate::error::CliError;
use crate::output::{ext, num, opt, write_csv};
use crate::seeds;

pub const HEADER: [&str; 10] = [
    "anchor_psi_bar",
    "lambda_bar_pop",
    "lambda_bar_data",
    "theta",
    "lambda",
    "psi",
    "k",
    "functional_kind",
    "value",
    "seed",
];
pub const RANGE_HEADER: [&str; 5] = ["anchor_psi_bar", "functional_kind", "points", "mean", "range"];
pub const NORMALIZED_HEADER: [&str; 4] = ["anchor_psi_bar", "theta", "functional_kind", "normalized_value"];

const DATA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalKind {
    Projection(ProjectionKind),
    Risk(RiskKind),
}

impl FunctionalKind {
    pub fn parse(name: &str) -> Result<Self, String> {
        Ok(match name {
            "uniform" => FunctionalKind::Projection(ProjectionKind::Uniform),
            "gaussian" => FunctionalKind::Projection(ProjectionKind::Gaussian),
            "student_t" => FunctionalKind::Projection(ProjectionKind::StudentT),
            other => FunctionalKind::Risk(
                RiskKind::parse(other).map_err(|e| format!("{e}, or a projection (uniform, gaussian, student_t)"))?,
            ),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            FunctionalKind::Projection(k) => k.name(),
            FunctionalKind::Risk(r) => r.name(),
        }
    }
}

/// One evaluated path.
struct Anchor {
    path: EquivalencePath<f64>,
    lambda_bar_pop: Option<f64>,
    lambda_bar_data: Option<f64>,
    profile: PathProfile<f64>,
}

pub fn run(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let pc = cfg
        .path
        .clone()
        .ok_or_else(|| CliError::Usage("config has no [path] section".into()))?;
    let exp = Experiment::load(cfg.data()?, &cfg.features, seed, pc.test_size)?;
    let kinds: Vec<FunctionalKind> = pc
        .functionals
        .iter()
        .map(|f| FunctionalKind::parse(f).map_err(CliError::Usage))
        .collect::<Result<_, _>>()?;
    let anchors = evaluate(&exp, &pc, &kinds, cfg.m, seed)?;

    let mut rows = Vec::new();
    let mut ranges = Vec::new();
    for a in &anchors {
        let anchor = ext(a.path.psi_bar);
        for pt in &a.profile.points {
            for (kind, value) in kinds.iter().zip(&pt.values) {
                rows.push(vec![
                    anchor.clone(),
                    opt(a.lambda_bar_pop),
                    opt(a.lambda_bar_data),
                    num(pt.point.theta),
                    ext(pt.point.lambda),
                    ext(pt.point.psi),
                    pt.k.to_string(),
                    kind.name().to_string(),
                    num(value.value),
                    pt.seed.to_string(),
                ]);
            }
        }
        for (j, kind) in kinds.iter().enumerate() {
            ranges.push(vec![
                anchor.clone(),
                kind.name().to_string(),
                a.profile.points.len().to_string(),
                num(a.profile.mean(j)),
                num(a.profile.range(j)),
            ]);
        }
    }
    let mut written = vec![
        write_csv(out, "path.csv", &HEADER, &rows)?,
        write_csv(out, "path_ranges.csv", &RANGE_HEADER, &ranges)?,
    ];
    if anchors.len() >= 2 {
        written.push(write_csv(
            out,
            "path_normalized.csv",
            &NORMALIZED_HEADER,
            &normalized(&anchors, &kinds),
        )?);
    }
    Ok(written)
}

/// Values shifted by the first path's mean and scaled by the difference
/// between the last and first path means, paths taken in config order.
fn normalized(anchors: &[Anchor], kinds: &[FunctionalKind]) -> Vec<Vec<String>> {
    let first = &anchors[0].profile;
    let last = &anchors[anchors.len() - 1].profile;
    let mut rows = Vec::new();
    for a in anchors {
        for pt in &a.profile.points {
            for (j, kind) in kinds.iter().enumerate() {
                let scale = last.mean(j) - first.mean(j);
                rows.push(vec![
                    ext(a.path.psi_bar),
                    num(pt.point.theta),
                    kind.name().to_string(),
                    num((pt.values[j].value - first.mean(j)) / scale),
                ]);
            }
        }
    }
    rows
}

fn evaluate(
    exp: &Experiment,
    pc: &PathConfig,
    kinds: &[FunctionalKind],
    m: usize,
    seed: u64,
) -> Result<Vec<Anchor>, CliError> {
    let (n, p) = exp.features.shape();
    let phi = exp.phi();
    let opts = SolverOptions::default();
    let spectrum: Option<SpectralDistribution<f64>> = exp.covariance().map(spectrum_of).transpose()?;
    if pc.source == PathSource::Population && spectrum.is_none() {
        return Err(CliError::Usage(
            "path.source: population paths need a known covariance (synthetic data with linear features)".into(),
        ));
    }
    let test_features = exp.feature_map.transform(&exp.test.x)?;
    let projection_seed = seeds::derive(seed, seeds::PROJECTION, 0);
    let functionals = kinds
        .iter()
        .map(|kind| -> Result<Functional<f64>, CliError> {
            Ok(match *kind {
                FunctionalKind::Projection(k) => Functional::Linear(projection_vector(k, p, projection_seed)),
                FunctionalKind::Risk(r) => match exp.risk_spec(r, pc.ood_rho, seed, pc.test_size)? {
                    Some(spec) => Functional::Risk(spec),
                    None => Functional::TestError {
                        x: test_features.clone(),
                        y: exp.test.y.clone(),
                    },
                },
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let lb_m = pc.lambda_bar_m.unwrap_or(m);

    let data_lambda_bar = |psi_bar: Extended<f64>, idx: usize| -> Result<DataLambdaBar<f64>, CliError> {
        let k = subsample_size(p, psi_bar, n)
            .map_err(|e| CliError::Usage(format!("path anchor {idx}: infeasible subsample size ({e})")))?;
        let lb_seed = seeds::derive(seed, seeds::PATH_LAMBDA_BAR, idx as u64);
        Ok(lambda_bar_data(&exp.features, k, lb_m, lb_seed, DATA_TOL)?)
    };

    let mut anchors = Vec::new();
    let count = pc.psi_bar.len().max(pc.lambda_bar.len());
    for idx in 0..count {
        let (path, lambda_bar_pop, lambda_bar_data) = if let Some(&psi_bar) = pc.psi_bar.get(idx) {
            let k = subsample_size(p, Extended::Finite(psi_bar), n)
                .map_err(|e| CliError::Usage(format!("path.psi_bar: anchor {psi_bar} is infeasible ({e})")))?;
            let pop = spectrum
                .as_ref()
                .map(|h| EquivalencePath::through_ridgeless(phi, Extended::Finite(psi_bar), h, &opts))
                .transpose()?;
            match pc.source {
                PathSource::Population => {
                    let path = pop.expect("checked above");
                    let data = data_lambda_bar(path.psi_bar, idx)
                        .map_err(|e| log::warn!("no data-dependent λ̄ for anchor {psi_bar}: {e}"))
                        .ok()
                        .map(|d| d.lambda_bar);
                    (path, path.lambda_bar.finite(), data)
                }
                PathSource::Data => {
                    let sol = data_lambda_bar(Extended::Finite(psi_bar), idx)?;
                    let path = EquivalencePath {
                        lambda_bar: Extended::Finite(sol.lambda_bar),
                        phi,
                        psi_bar: Extended::Finite(p as f64 / k as f64),
                        v_shared: sol.full_trace,
                    };
                    (path, pop.and_then(|pp| pp.lambda_bar.finite()), Some(sol.lambda_bar))
                }
            }
        } else {
            let lambda_bar = pc.lambda_bar[idx];
            let h = spectrum
                .as_ref()
                .expect("lambda_bar anchors require a population source");
            let path = EquivalencePath::through_ridge(phi, Extended::Finite(lambda_bar), h, &opts)?;
            let data = match path.psi_bar {
                Extended::Finite(_) => data_lambda_bar(path.psi_bar, idx)
                    .map_err(|e| log::warn!("no data-dependent λ̄ for anchor λ̄ = {lambda_bar}: {e}"))
                    .ok()
                    .map(|d| d.lambda_bar),
                Extended::Infinite => None,
            };
            (path, Some(lambda_bar), data)
        };
        let thetas = if path.is_degenerate() {
            vec![0.0]
        } else {
            uniform_thetas(pc.thetas)
        };
        let fit_seed = seeds::derive(seed, seeds::PATH_FIT, idx as u64);
        let profile = path_functional_profile(&exp.train, &exp.feature_map, &path, &thetas, &functionals, m, fit_seed)?;
        log::info!(
            "path {idx}: psi_bar = {}, {} points",
            ext(path.psi_bar),
            profile.points.len()
        );
        anchors.push(Anchor {
            path,
            lambda_bar_pop,
            lambda_bar_data,
            profile,
        });
    }
    Ok(anchors)
}
