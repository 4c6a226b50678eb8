//! Invariant suite behind `subridge check`.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use subridge::datagen::{ar1_covariance, gaussian_matrix};
use subridge::datapath::{check_mv_identity, lambda_bar_data};
use subridge::estimators::fit_ridge;
use subridge::spectral::{lambda_bar, solve_v, spectrum_of, uniform_thetas, EquivalencePath, SolverOptions};
use subridge::theory::{monotonicity_scan, LimitSpec, MonotonicityScan};
use subridge::{rng, Extended, NonlinearModel, SpectralDistribution};

use crate::config::CheckConfig;
use crate::error::CliError;
use crate::output::{num, write_csv};
use crate::seeds;

pub const HEADER: [&str; 4] = ["invariant", "passed", "residual", "threshold"];
pub const MONOTONICITY_HEADER: [&str; 4] = ["phi", "psi_star", "lambda_star", "min_risk"];

/// Deliberate corruption used to confirm that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Flip the sign of every computed `λ̄`.
    NegateLambdaBar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub invariant: &'static str,
    pub residual: f64,
    pub threshold: f64,
}

impl Outcome {
    fn new(invariant: &'static str, residual: f64, threshold: f64) -> Self {
        Self {
            invariant,
            residual,
            threshold,
        }
    }

    /// NaN residuals fail.
    pub fn passed(&self) -> bool {
        self.residual <= self.threshold
    }
}

fn two_atom() -> subridge::Result<SpectralDistribution<f64>> {
    SpectralDistribution::new([(1.0 / 3.0, 0.5), (3.0, 0.5)])
}

fn fixed_point_residual() -> subridge::Result<f64> {
    let opts = SolverOptions::default();
    let spectra = [
        SpectralDistribution::point_mass(1.0)?,
        two_atom()?,
        spectrum_of(&ar1_covariance(200, 0.5)?)?,
    ];
    let mut worst: f64 = 0.0;
    for h in &spectra {
        for lambda in [1e-3, 0.1, 1.0, 10.0] {
            for psi in [0.5, 2.0, 10.0] {
                let v = solve_v(lambda, Extended::Finite(psi), h, &opts)?.v.unwrap_finite();
                let rhs = lambda + psi * h.integrate(|r| r / (1.0 + v * r));
                worst = worst.max((1.0 / v - rhs).abs() / (1.0 / v));
            }
        }
    }
    Ok(worst)
}

fn isotropic_lambda_bar(fault: Option<Fault>) -> subridge::Result<f64> {
    let h = SpectralDistribution::point_mass(1.0)?;
    let (lb, _) = lambda_bar(0.1, Extended::Finite(2.0), &h, &SolverOptions::default())?;
    Ok((apply(fault, lb.unwrap_finite()) - 0.95).abs())
}

fn mv_identity(count: usize, seed: u64) -> subridge::Result<f64> {
    let mut r = rng::stream(seed, &[0]);
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let n = 5 + (i * 7) % 40;
        let p = match i % 3 {
            0 => n / 2 + 1,
            1 => n,
            _ => 2 * n + 3,
        };
        let x: DMatrix<f64> = gaussian_matrix(n, p, 1.0, &mut r);
        let lambda = 10f64.powi((i % 7) as i32 - 3);
        worst = worst.max(check_mv_identity(&x, lambda)?);
    }
    Ok(worst)
}

/// `fit_ridge` against a direct solve of the primal normal equations.
fn primal_dual(seed: u64) -> subridge::Result<f64> {
    let mut r = rng::stream(seed, &[1]);
    let mut worst: f64 = 0.0;
    for (n, p) in [(40, 15), (15, 40), (30, 30)] {
        let x: DMatrix<f64> = gaussian_matrix(n, p, 1.0, &mut r);
        let y: DVector<f64> = gaussian_matrix(n, 1, 1.0, &mut r).column(0).into_owned();
        let lambda = 0.3;
        let fitted = fit_ridge(&x, &y, lambda)?;
        let gram = x.transpose() * &x / n as f64 + DMatrix::identity(p, p) * lambda;
        let direct = gram
            .lu()
            .solve(&(x.transpose() * &y / n as f64))
            .expect("positive definite");
        worst = worst.max((fitted - &direct).norm() / direct.norm());
    }
    Ok(worst)
}

/// The limiting full-ensemble risk is constant along a population path.
fn path_invariance() -> subridge::Result<f64> {
    let h = two_atom()?;
    let lim = LimitSpec::new(h.clone(), h.clone(), 1.0, 1.0)?;
    let opts = SolverOptions::default();
    let mut worst: f64 = 0.0;
    for psi_bar in [0.5, 2.0, 4.0] {
        let path = EquivalencePath::through_ridgeless(0.1, Extended::Finite(psi_bar), &h, &opts)?;
        let risks = path
            .points(&uniform_thetas(5))?
            .into_iter()
            .map(|pt| lim.risk(pt.lambda.unwrap_finite(), 0.1, pt.psi, &opts))
            .collect::<subridge::Result<Vec<f64>>>()?;
        let hi = risks.iter().cloned().fold(f64::MIN, f64::max);
        let lo = risks.iter().cloned().fold(f64::MAX, f64::min);
        worst = worst.max((hi - lo) / hi);
    }
    Ok(worst)
}

fn monotonicity() -> subridge::Result<(f64, MonotonicityScan<f64>)> {
    let phis: Vec<f64> = (1..=10).map(|i| 0.1 * i as f64).collect();
    let h = SpectralDistribution::point_mass(1.0)?;
    let scan = monotonicity_scan(&phis, &LimitSpec::new(h.clone(), h, 1.0, 1.0)?, 200)?;
    let residual = if scan.is_nondecreasing(0.0) {
        scan.max_mismatch()
    } else {
        f64::INFINITY
    };
    Ok((residual, scan))
}

/// Population and data-dependent `λ̄` agree, and the population `λ̄`
/// reproduces the ridgeless fixed point at its own endpoint.
fn lambda_bar_equivalence(cc: &CheckConfig, seed: u64, fault: Option<Fault>) -> subridge::Result<f64> {
    let (n, p) = (cc.n, cc.p);
    let phi = p as f64 / n as f64;
    let h = SpectralDistribution::point_mass(1.0)?;
    let opts = SolverOptions::default();
    let (lb, v_ridgeless) = lambda_bar(phi, Extended::Finite(2.0), &h, &opts)?;
    let lb_pop = apply(fault, lb.unwrap_finite());
    let endpoint = match solve_v(lb_pop, Extended::Finite(phi), &h, &opts) {
        Ok(sol) => (sol.v.unwrap_finite() - v_ridgeless.unwrap_finite()).abs() / v_ridgeless.unwrap_finite(),
        Err(_) => f64::INFINITY,
    };
    let data = NonlinearModel::isotropic_gaussian(p, None)?.sample(n, seed)?;
    let lb_data = apply(fault, lambda_bar_data(&data.x, p / 2, 20, seed, 1e-10)?.lambda_bar);
    Ok(endpoint.max((lb_data - lb_pop).abs() / lb_pop.abs()))
}

fn apply(fault: Option<Fault>, lambda_bar: f64) -> f64 {
    match fault {
        Some(Fault::NegateLambdaBar) => -lambda_bar,
        None => lambda_bar,
    }
}

/// Runs every invariant; numerical errors inside an invariant count as a failure.
pub fn evaluate(cc: &CheckConfig, seed: u64, fault: Option<Fault>) -> (Vec<Outcome>, Option<MonotonicityScan<f64>>) {
    let or_nan = |r: subridge::Result<f64>, name: &str| {
        r.unwrap_or_else(|e| {
            log::error!("{name}: {e}");
            f64::NAN
        })
    };
    let check_seed = seeds::derive(seed, seeds::CHECK, 0);
    let (mono, scan) = match monotonicity() {
        Ok((r, s)) => (r, Some(s)),
        Err(e) => {
            log::error!("monotonicity: {e}");
            (f64::NAN, None)
        }
    };
    let outcomes = vec![
        Outcome::new(
            "fixed_point_residual",
            or_nan(fixed_point_residual(), "fixed_point_residual"),
            1e-9,
        ),
        Outcome::new(
            "isotropic_lambda_bar",
            or_nan(isotropic_lambda_bar(fault), "isotropic_lambda_bar"),
            1e-10,
        ),
        Outcome::new(
            "mv_identity",
            or_nan(mv_identity(cc.random_matrices, check_seed), "mv_identity"),
            1e-10,
        ),
        Outcome::new("primal_dual", or_nan(primal_dual(check_seed), "primal_dual"), 1e-8),
        Outcome::new("path_invariance", or_nan(path_invariance(), "path_invariance"), 1e-6),
        Outcome::new("monotonicity", mono, 1e-3),
        Outcome::new(
            "lambda_bar_equivalence",
            or_nan(lambda_bar_equivalence(cc, check_seed, fault), "lambda_bar_equivalence"),
            0.05,
        ),
    ];
    (outcomes, scan)
}

pub fn run(cc: &CheckConfig, seed: u64, fault: Option<Fault>, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let (outcomes, scan) = evaluate(cc, seed, fault);
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            vec![
                o.invariant.to_string(),
                o.passed().to_string(),
                num(o.residual),
                num(o.threshold),
            ]
        })
        .collect();
    let mut written = vec![write_csv(out, "check.csv", &HEADER, &rows)?];
    if let Some(scan) = scan {
        let rows: Vec<Vec<String>> = scan
            .rows
            .iter()
            .map(|r| {
                vec![
                    num(r.phi),
                    num(r.ridgeless.argmin),
                    num(r.ridge.argmin),
                    num(r.ridgeless.value),
                ]
            })
            .collect();
        written.push(write_csv(out, "monotonicity.csv", &MONOTONICITY_HEADER, &rows)?);
    }
    for o in &outcomes {
        println!(
            "{} {}: residual {:e} (threshold {:e})",
            if o.passed() { "PASS" } else { "FAIL" },
            o.invariant,
            o.residual,
            o.threshold
        );
    }
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed())
        .map(|o| o.invariant.to_string())
        .collect();
    if failed.is_empty() {
        Ok(written)
    } else {
        Err(CliError::CheckFailed(failed))
    }
}
