//! Heat-map sweep over a `(λ, ψ)` grid.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use subridge::estimators::{fit_ensemble_lambda_grid, subsample_size};
use subridge::risks::{generalized_risk, mc_prediction_risk, RiskValue};
use subridge::Extended;

use crate::config::{ExperimentConfig, SweepConfig};
use crate::data::{Experiment, RiskKind};
use crate::error::CliError;
use crate::output::{num, opt, write_csv};
use crate::seeds;

/// Subsample size, seed, and risks indexed by `[λ][kind]` for one ψ column.
type Column = (usize, u64, Vec<Vec<RiskValue<f64>>>);

pub const HEADER: [&str; 8] = ["lambda", "psi", "k", "M", "risk_kind", "value", "mc_se", "seed"];

fn grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    subridge::theory::logspace(lo, hi, count)
}

pub fn run(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<PathBuf, CliError> {
    let sc = cfg.sweep.clone().unwrap_or_default();
    let exp = Experiment::load(cfg.data()?, &cfg.features, seed, sc.test_size)?;
    let rows = sweep_rows(&exp, &sc, cfg.m, seed)?;
    write_csv(out, "sweep.csv", &HEADER, &rows)
}

fn sweep_rows(exp: &Experiment, sc: &SweepConfig, m: usize, seed: u64) -> Result<Vec<Vec<String>>, CliError> {
    let (n, p) = exp.features.shape();
    let phi = exp.phi();
    let psi_min = sc.psi_min.unwrap_or(phi);
    if psi_min < phi * (1.0 - 1e-12) {
        return Err(CliError::Usage(format!(
            "sweep.psi_min: {psi_min} is below p/n = {phi}"
        )));
    }
    if sc.lambda_count > 1 && sc.lambda_min <= 0.0 {
        return Err(CliError::Usage(
            "sweep.lambda_min: a log-spaced grid needs lambda_min > 0".into(),
        ));
    }
    let lambdas = grid(sc.lambda_min, sc.lambda_max, sc.lambda_count);
    let psis: Vec<f64> = grid(psi_min, sc.psi_max, sc.psi_count)
        .into_iter()
        .filter(|psi| (psi - 1.0).abs() >= sc.psi_guard)
        .collect();
    if psis.is_empty() {
        return Err(CliError::Usage(
            "sweep.psi_guard: every psi grid value falls in the guard band".into(),
        ));
    }
    if let Some(psi) = psis.iter().find(|psi| (p as f64 / **psi) < 1.0) {
        return Err(CliError::Usage(format!(
            "sweep.psi_max: psi = {psi} leaves an empty subsample (p = {p})"
        )));
    }

    let kinds: Vec<RiskKind> = sc
        .risks
        .iter()
        .map(|r| RiskKind::parse(r).map_err(CliError::Usage))
        .collect::<Result<_, _>>()?;
    let specs = kinds
        .iter()
        .map(|&k| exp.risk_spec(k, sc.ood_rho, seed, sc.test_size))
        .collect::<Result<Vec<_>, _>>()?;
    let test_features = exp.feature_map.transform(&exp.test.x)?;

    // One ensemble per ψ column, reused across the λ grid.
    let columns: Vec<Column> = psis
        .par_iter()
        .enumerate()
        .map(|(col, &psi)| -> Result<_, CliError> {
            let k = subsample_size(p, Extended::Finite(psi), n)?;
            let col_seed = seeds::derive(seed, seeds::SWEEP_COLUMN, col as u64);
            let betas = fit_ensemble_lambda_grid(&exp.features, &exp.train.y, k, m, &lambdas, col_seed)?;
            let values = betas
                .iter()
                .map(|beta| {
                    specs
                        .iter()
                        .map(|spec| match spec {
                            Some(spec) => generalized_risk(beta, spec, &exp.train),
                            None => mc_prediction_risk(beta, &test_features, &exp.test.y),
                        })
                        .collect::<subridge::Result<Vec<_>>>()
                })
                .collect::<subridge::Result<Vec<_>>>()?;
            Ok((k, col_seed, values))
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(lambdas.len() * psis.len() * kinds.len());
    for (li, &lambda) in lambdas.iter().enumerate() {
        for (&psi, (k, col_seed, values)) in psis.iter().zip(&columns) {
            for (kind, value) in kinds.iter().zip(&values[li]) {
                rows.push(vec![
                    num(lambda),
                    num(psi),
                    k.to_string(),
                    m.to_string(),
                    kind.name().to_string(),
                    num(value.value),
                    opt(value.mc_se),
                    col_seed.to_string(),
                ]);
            }
        }
    }
    Ok(rows)
}
