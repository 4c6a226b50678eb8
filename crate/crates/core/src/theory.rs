//! Deterministic risk equivalents of full ensembles and the optimal-risk scan.
//!
//! At finite `p`, with `v = v(−λ; ψ)` the fixed point for the spectrum of
//! `Σ = W diag(r) Wᵀ` and a weight matrix `C`,
//!
//! ```text
//!   tv = φ tr[CΣ(vΣ + I)⁻²]/p / (v⁻² − φ ∫ r²/(1+vr)² dH)
//!   tc = β₀ᵀ (vΣ + I)⁻¹ (tv Σ + C) (vΣ + I)⁻¹ β₀
//!   R  = tc + σ² tv
//! ```
//!
//! `C = I/p` gives coefficient estimation risk and `C = Σ` the excess
//! prediction risk. The limiting profile replaces `β₀` by its projection
//! distribution `G` and energy `ρ²`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::linalg;
use crate::scalar::{count, lit, Real};
use crate::spectral::{solve_v, SolverOptions, SpectralDistribution};

/// Eigendecomposition of a covariance matrix with its spectral distribution.
#[derive(Debug, Clone)]
pub struct CovarianceEigen<T: Real> {
    pub values: DVector<T>,
    pub vectors: DMatrix<T>,
    pub spectrum: SpectralDistribution<T>,
}

impl<T: Real> CovarianceEigen<T> {
    pub fn new(sigma: &DMatrix<T>) -> Result<Self> {
        linalg::ensure_symmetric(sigma, "covariance matrix")?;
        linalg::ensure_finite_matrix(sigma, "covariance matrix")?;
        let (vals, vectors) = linalg::sym_eigen(sigma);
        let top = vals.iter().copied().fold(T::zero(), |a, b| a.max(b.abs()));
        let tol = lit::<T>(1e3) * T::default_epsilon() * top.max(T::one());
        if let Some(bad) = vals.iter().find(|r| **r < -tol) {
            return Err(Error::input(format!("covariance has negative eigenvalue {bad}")));
        }
        let values = vals.map(|r| r.max(T::zero()));
        let spectrum = SpectralDistribution::from_eigenvalues(values.as_slice())?;
        Ok(Self {
            values,
            vectors,
            spectrum,
        })
    }

    pub fn p(&self) -> usize {
        self.values.len()
    }
}

/// Weight matrix `C` of a generalized risk.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight<T> {
    /// `C = I/p`.
    Estimation,
    /// `C = Σ`.
    Prediction,
    Matrix(DMatrix<T>),
}

/// Components of a deterministic risk at one `(λ, ψ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskTerms<T> {
    pub v: Extended<T>,
    pub tv: T,
    pub tc: T,
    /// `1 − φ ∫ vr/(1+vr) dH`, the factor multiplying in-sample quantities.
    pub in_sample_factor: T,
}

/// `v²r/(1+vr)²`, with its `v = ∞` limit.
fn variance_weight<T: Real>(v: Extended<T>, r: T) -> T {
    match v {
        Extended::Infinite if r > T::zero() => T::one() / r,
        Extended::Infinite => T::zero(),
        Extended::Finite(v) => {
            let d = T::one() + v * r;
            v * v * r / (d * d)
        }
    }
}

/// `1/(1+vr)`, with its `v = ∞` limit.
fn shrinkage<T: Real>(v: Extended<T>, r: T) -> T {
    match v {
        Extended::Infinite if r > T::zero() => T::zero(),
        Extended::Infinite => T::one(),
        Extended::Finite(v) => T::one() / (T::one() + v * r),
    }
}

fn check_ratios<T: Real>(phi: T, psi: Extended<T>) -> Result<()> {
    if !(phi > T::zero()) || !phi.is_finite() {
        return Err(Error::param(format!("data aspect ratio must be positive, got {phi}")));
    }
    if psi < Extended::Finite(phi) {
        return Err(Error::param(format!("psi = {psi} is below phi = {phi}")));
    }
    Ok(())
}

/// `1 − φ ∫ (vr/(1+vr))² dH`, required to be positive.
fn variance_denominator<T: Real>(phi: T, v: Extended<T>, h: &SpectralDistribution<T>) -> Result<T> {
    let den = T::one() - phi * h.scaled_second(v);
    if den > T::zero() {
        Ok(den)
    } else {
        Err(Error::Domain(format!(
            "variance denominator {den} is not positive at phi = {phi}, v = {v}"
        )))
    }
}

/// Covariance, coefficients and nonlinear energy of a finite-`p` model.
#[derive(Debug, Clone)]
pub struct FiniteModel<T: Real> {
    cov: CovarianceEigen<T>,
    /// `Wᵀβ₀`.
    beta0_rot: DVector<T>,
    sigma_nl_sq: T,
    opts: SolverOptions<T>,
}

impl<T: Real> FiniteModel<T> {
    pub fn new(sigma: &DMatrix<T>, beta0: &DVector<T>, sigma_nl_sq: T) -> Result<Self> {
        let cov = CovarianceEigen::new(sigma)?;
        if beta0.len() != cov.p() {
            return Err(Error::param(format!(
                "beta0 has length {}, covariance is {}x{0}",
                beta0.len(),
                cov.p()
            )));
        }
        if !(sigma_nl_sq >= T::zero()) || !sigma_nl_sq.is_finite() {
            return Err(Error::param(format!(
                "nonlinear energy must be finite and nonnegative, got {sigma_nl_sq}"
            )));
        }
        let beta0_rot = cov.vectors.transpose() * beta0;
        ensure_spd_like(&cov)?;
        Ok(Self {
            cov,
            beta0_rot,
            sigma_nl_sq,
            opts: SolverOptions::default(),
        })
    }

    pub fn with_options(mut self, opts: SolverOptions<T>) -> Self {
        self.opts = opts;
        self
    }

    pub fn covariance(&self) -> &CovarianceEigen<T> {
        &self.cov
    }

    pub fn sigma_nl_sq(&self) -> T {
        self.sigma_nl_sq
    }

    /// `tv` and `tc` for weight `C`.
    pub fn terms(&self, lambda: T, phi: T, psi: Extended<T>, weight: &Weight<T>) -> Result<RiskTerms<T>> {
        check_ratios(phi, psi)?;
        let h = &self.cov.spectrum;
        let v = solve_v(lambda, psi, h, &self.opts)?.v;
        let den = variance_denominator(phi, v, h)?;
        let p = self.cov.p();
        let r = &self.cov.values;
        let rotated = match weight {
            Weight::Matrix(c) => {
                if c.nrows() != p || c.ncols() != p {
                    return Err(Error::param(format!(
                        "weight matrix is {}x{}, expected {p}x{p}",
                        c.nrows(),
                        c.ncols()
                    )));
                }
                linalg::ensure_finite_matrix(c, "weight matrix")?;
                Some(self.cov.vectors.transpose() * c * &self.cov.vectors)
            }
            _ => None,
        };
        let c_diag = |i: usize| match weight {
            Weight::Estimation => T::one() / count::<T>(p),
            Weight::Prediction => r[i],
            Weight::Matrix(_) => rotated.as_ref().map(|m| m[(i, i)]).unwrap_or(T::zero()),
        };
        let numerator = (0..p).fold(T::zero(), |acc, i| acc + c_diag(i) * variance_weight(v, r[i]));
        let tv = phi * numerator / count::<T>(p) / den;

        let w = DVector::from_fn(p, |i, _| shrinkage(v, r[i]) * self.beta0_rot[i]);
        let signal = (0..p).fold(T::zero(), |acc, i| acc + r[i] * w[i] * w[i]);
        let weighted = match (weight, &rotated) {
            (_, Some(m)) => w.dot(&(m * &w)),
            _ => (0..p).fold(T::zero(), |acc, i| acc + c_diag(i) * w[i] * w[i]),
        };
        let tc = tv * signal + weighted;
        let in_sample_factor = T::one() - phi * h.scaled_first(v);
        Ok(RiskTerms {
            v,
            tv,
            tc,
            in_sample_factor,
        })
    }

    /// `R = tc + σ² tv`.
    pub fn risk(&self, lambda: T, phi: T, psi: Extended<T>, weight: &Weight<T>) -> Result<T> {
        let t = self.terms(lambda, phi, psi, weight)?;
        Ok(t.tc + self.sigma_nl_sq * t.tv)
    }

    /// Training error `(1/n)‖y − Xβ̂‖²`:
    /// `D² (tc(Σ) + σ² (1 + tv(Σ)))` with `D = 1 − φ∫vr/(1+vr)dH`.
    pub fn training_error(&self, lambda: T, phi: T, psi: Extended<T>) -> Result<T> {
        let t = self.terms(lambda, phi, psi, &Weight::Prediction)?;
        let d2 = t.in_sample_factor * t.in_sample_factor;
        Ok(d2 * (t.tc + self.sigma_nl_sq * (T::one() + t.tv)))
    }

    /// In-sample error `(1/n)‖X(β̂ − β₀)‖²`:
    /// `D² tc(Σ) + σ² (D²(1 + tv(Σ)) + 1 − 2D)`.
    pub fn in_sample(&self, lambda: T, phi: T, psi: Extended<T>) -> Result<T> {
        let t = self.terms(lambda, phi, psi, &Weight::Prediction)?;
        let d = t.in_sample_factor;
        let var = d * d * (T::one() + t.tv) + T::one() - lit::<T>(2.0) * d;
        Ok(d * d * t.tc + self.sigma_nl_sq * var)
    }
}

fn ensure_spd_like<T: Real>(cov: &CovarianceEigen<T>) -> Result<()> {
    if cov.values.iter().all(|r| *r == T::zero()) {
        return Err(Error::param("covariance is zero"));
    }
    Ok(())
}

/// `tv` at finite `p`.
pub fn tv_general<T: Real>(
    lambda: T,
    phi: T,
    psi: Extended<T>,
    model: &FiniteModel<T>,
    weight: &Weight<T>,
) -> Result<T> {
    Ok(model.terms(lambda, phi, psi, weight)?.tv)
}

/// `tc` at finite `p`.
pub fn tc_general<T: Real>(
    lambda: T,
    phi: T,
    psi: Extended<T>,
    model: &FiniteModel<T>,
    weight: &Weight<T>,
) -> Result<T> {
    Ok(model.terms(lambda, phi, psi, weight)?.tc)
}

/// `R_p = tc + σ² tv` at finite `p`.
pub fn risk_profile_rp<T: Real>(
    lambda: T,
    phi: T,
    psi: Extended<T>,
    model: &FiniteModel<T>,
    weight: &Weight<T>,
) -> Result<T> {
    model.risk(lambda, phi, psi, weight)
}

/// Limiting spectrum, signal distribution and energies.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSpec<T> {
    pub h: SpectralDistribution<T>,
    pub g: SpectralDistribution<T>,
    pub rho_sq: T,
    pub sigma_sq: T,
}

impl<T: Real> LimitSpec<T> {
    pub fn new(h: SpectralDistribution<T>, g: SpectralDistribution<T>, rho_sq: T, sigma_sq: T) -> Result<Self> {
        for (name, x) in [("rho_sq", rho_sq), ("sigma_sq", sigma_sq)] {
            if !(x >= T::zero()) || !x.is_finite() {
                return Err(Error::param(format!("{name} must be finite and nonnegative, got {x}")));
            }
        }
        Ok(Self { h, g, rho_sq, sigma_sq })
    }

    /// `tv = φ s₂/(1 − φ s₂)` with `s₂ = ∫(vr/(1+vr))² dH`, and
    /// `tc = (tv + 1) ρ² ∫ r/(1+vr)² dG`.
    pub fn terms(&self, lambda: T, phi: T, psi: Extended<T>, opts: &SolverOptions<T>) -> Result<RiskTerms<T>> {
        check_ratios(phi, psi)?;
        let v = solve_v(lambda, psi, &self.h, opts)?.v;
        let den = variance_denominator(phi, v, &self.h)?;
        let tv = T::one() / den - T::one();
        let signal = match v {
            Extended::Infinite => T::zero(),
            Extended::Finite(v) => self.g.moment(v, 1, 2),
        };
        let tc = (tv + T::one()) * self.rho_sq * signal;
        let in_sample_factor = T::one() - phi * self.h.scaled_first(v);
        Ok(RiskTerms {
            v,
            tv,
            tc,
            in_sample_factor,
        })
    }

    pub fn risk(&self, lambda: T, phi: T, psi: Extended<T>, opts: &SolverOptions<T>) -> Result<T> {
        let t = self.terms(lambda, phi, psi, opts)?;
        Ok(t.tc + self.sigma_sq * t.tv)
    }
}

/// `ℛ(λ; φ, ψ) = ρ² tc + σ² tv` in the proportional limit.
pub fn risk_profile_limit<T: Real>(lambda: T, phi: T, psi: Extended<T>, lim: &LimitSpec<T>) -> Result<T> {
    lim.risk(lambda, phi, psi, &SolverOptions::default())
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn logspace<T: Real>(lo: T, hi: T, count_: usize) -> Vec<T> {
    match count_ {
        0 => Vec::new(),
        1 => vec![lo],
        c => {
            let (a, b) = (lo.ln(), hi.ln());
            let mut grid: Vec<T> = (0..c)
                .map(|i| (a + (b - a) * count::<T>(i) / count::<T>(c - 1)).exp())
                .collect();
            grid[0] = lo;
            grid[c - 1] = hi;
            grid
        }
    }
}

/// Ridgeless aspect-ratio grid: `max(φ, 1)` followed by `count − 1` points
/// `max(φ, 1) + δ`, `δ` log-spaced over `[1e−3, 1e3]`. For `φ < 1` the first
/// point stands for the whole interval `[φ, 1]`, where `v = ∞`.
pub fn default_psi_grid<T: Real>(phi: T, count_: usize) -> Vec<T> {
    let base = phi.max(T::one());
    let mut grid = vec![base];
    grid.extend(
        logspace(lit::<T>(1e-3), lit::<T>(1e3), count_.saturating_sub(1))
            .into_iter()
            .map(|d| base + d),
    );
    grid
}

/// Penalty grid `{0} ∪ logspace(1e−4, 1e3, count − 1)`.
pub fn default_lambda_grid<T: Real>(count_: usize) -> Vec<T> {
    let mut grid = vec![T::zero()];
    grid.extend(logspace(lit::<T>(1e-4), lit::<T>(1e3), count_.saturating_sub(1)));
    grid
}

/// Minimizer over a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptimum<T> {
    pub argmin: T,
    pub value: T,
    /// The minimizing cell has `v = ∞`.
    pub at_infinite_v: bool,
    /// Cells skipped because the profile is undefined there.
    pub skipped: usize,
}

fn grid_minimum<T: Real>(
    grid: &[T],
    eval: impl Fn(T) -> Result<RiskTerms<T>> + Sync,
    sigma_sq: T,
) -> Result<GridOptimum<T>> {
    if grid.is_empty() {
        return Err(Error::param("empty grid"));
    }
    let cells: Vec<Result<RiskTerms<T>>> = grid.par_iter().map(|&x| eval(x)).collect();
    let mut best: Option<GridOptimum<T>> = None;
    let mut skipped = 0;
    for (&x, cell) in grid.iter().zip(cells) {
        let t = match cell {
            Ok(t) => t,
            Err(Error::Domain(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let value = t.tc + sigma_sq * t.tv;
        if best.is_none_or(|b| value < b.value) {
            best = Some(GridOptimum {
                argmin: x,
                value,
                at_infinite_v: t.v.is_infinite(),
                skipped: 0,
            });
        }
    }
    best.map(|b| GridOptimum { skipped, ..b })
        .ok_or_else(|| Error::NoSolution("the profile is undefined on every grid cell".into()))
}

/// `min_ψ ℛ(0; φ, ψ)` over a grid of `ψ ≥ φ`.
pub fn optimal_ridgeless_risk<T: Real>(phi: T, lim: &LimitSpec<T>, psi_grid: &[T]) -> Result<GridOptimum<T>> {
    let opts = SolverOptions::default();
    grid_minimum(
        psi_grid,
        |psi| lim.terms(T::zero(), phi, Extended::Finite(psi), &opts),
        lim.sigma_sq,
    )
}

/// `min_λ ℛ(λ; φ, φ)` over a grid of `λ ≥ 0`.
pub fn optimal_ridge_risk<T: Real>(phi: T, lim: &LimitSpec<T>, lambda_grid: &[T]) -> Result<GridOptimum<T>> {
    let opts = SolverOptions::default();
    grid_minimum(
        lambda_grid,
        |l| lim.terms(l, phi, Extended::Finite(phi), &opts),
        lim.sigma_sq,
    )
}

/// Optimal ridgeless and ridge risks at one `φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityRow<T> {
    pub phi: T,
    pub ridgeless: GridOptimum<T>,
    pub ridge: GridOptimum<T>,
}

impl<T: Real> MonotonicityRow<T> {
    /// `|min_λ ℛ(λ; φ, φ) − min_ψ ℛ(0; φ, ψ)|`.
    pub fn mismatch(&self) -> T {
        (self.ridge.value - self.ridgeless.value).abs()
    }
}

/// Optimal risks along a `φ` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityScan<T> {
    pub rows: Vec<MonotonicityRow<T>>,
}

impl<T: Real> MonotonicityScan<T> {
    /// The optimal ridgeless risks never decrease by more than `slack`.
    pub fn is_nondecreasing(&self, slack: T) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].ridgeless.value >= w[0].ridgeless.value - slack)
    }

    pub fn max_mismatch(&self) -> T {
        self.rows.iter().fold(T::zero(), |m, r| m.max(r.mismatch()))
    }
}

/// Optimal risks at every `φ` of an increasing grid, with `grid_size`-point
/// default grids in `ψ` and `λ`.
pub fn monotonicity_scan<T: Real>(phi_grid: &[T], lim: &LimitSpec<T>, grid_size: usize) -> Result<MonotonicityScan<T>> {
    if phi_grid.is_empty() {
        return Err(Error::param("empty phi grid"));
    }
    if phi_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("phi grid must be strictly increasing"));
    }
    let lambdas = default_lambda_grid(grid_size);
    let rows = phi_grid
        .iter()
        .map(|&phi| {
            Ok(MonotonicityRow {
                phi,
                ridgeless: optimal_ridgeless_risk(phi, lim, &default_psi_grid(phi, grid_size))?,
                ridge: optimal_ridge_risk(phi, lim, &lambdas)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(MonotonicityScan { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::EquivalencePath;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn delta_one() -> SpectralDistribution<f64> {
        SpectralDistribution::point_mass(1.0).unwrap()
    }

    fn isotropic_limit() -> LimitSpec<f64> {
        LimitSpec::new(delta_one(), delta_one(), 1.0, 1.0).unwrap()
    }

    fn opts() -> SolverOptions<f64> {
        SolverOptions::default()
    }

    /// Stieltjes transform `∫ 1/(s + λ) dμ(s)` of the Marchenko–Pastur law with
    /// ratio `γ ≤ 1`.
    fn mp_stieltjes(gamma: f64, lambda: f64) -> f64 {
        let b = 1.0 - gamma + lambda;
        (-b + (b * b + 4.0 * gamma * lambda).sqrt()) / (2.0 * gamma * lambda)
    }

    #[test]
    fn isotropic_worked_values() {
        let t = isotropic_limit()
            .terms(0.0, 0.1, Extended::Finite(2.0), &opts())
            .unwrap();
        assert_relative_eq!(t.v.unwrap_finite(), 1.0, max_relative = 1e-10);
        assert_relative_eq!(t.tv, 0.025 / 0.975, max_relative = 1e-10);
        let r = risk_profile_limit(0.0, 0.1, Extended::Finite(2.0), &isotropic_limit()).unwrap();
        assert_relative_eq!(r, 0.25 / 0.975 + 0.025 / 0.975, max_relative = 1e-10);
        assert_relative_eq!(r, 0.282_051_282_051, max_relative = 1e-9);
    }

    #[test]
    fn finite_isotropic_matches_limit() {
        let p = 4;
        let eye = DMatrix::<f64>::identity(p, p);
        let beta0 = DVector::from_element(p, 0.5);
        let model = FiniteModel::new(&eye, &beta0, 1.0).unwrap();
        let t = model
            .terms(0.0, 0.1, Extended::Finite(2.0), &Weight::Estimation)
            .unwrap();
        // C = I/p scales tv by 1/p relative to C = Σ = I.
        assert_relative_eq!(t.tv, 0.025 / 0.975 / 4.0, max_relative = 1e-10);
        let pred = model
            .risk(0.0, 0.1, Extended::Finite(2.0), &Weight::Prediction)
            .unwrap();
        let lim = risk_profile_limit(0.0, 0.1, Extended::Finite(2.0), &isotropic_limit()).unwrap();
        assert_relative_eq!(pred, lim, max_relative = 1e-10);
        let explicit = model
            .risk(0.0, 0.1, Extended::Finite(2.0), &Weight::Matrix(eye.clone()))
            .unwrap();
        assert_relative_eq!(pred, explicit, max_relative = 1e-10);
    }

    #[test]
    fn zero_weight_and_zero_signal_vanish() {
        let sigma = crate::datagen::ar1_covariance::<f64>(5, 0.5).unwrap();
        let model = FiniteModel::new(&sigma, &DVector::zeros(5), 0.0).unwrap();
        let zero = Weight::Matrix(DMatrix::zeros(5, 5));
        let t = model.terms(0.3, 0.5, Extended::Finite(1.5), &zero).unwrap();
        assert_eq!(t.tv, 0.0);
        assert_eq!(t.tc, 0.0);
        assert_eq!(
            model
                .risk(0.0, 0.5, Extended::Finite(2.0), &Weight::Estimation)
                .unwrap(),
            0.0
        );
        assert_eq!(
            risk_profile_limit(
                0.2,
                0.5,
                Extended::Finite(0.5),
                &LimitSpec::new(delta_one(), delta_one(), 0.0, 0.0).unwrap()
            )
            .unwrap(),
            0.0
        );
    }

    #[test]
    fn heavy_penalty_gives_null_risk() {
        let sigma = crate::datagen::ar1_covariance::<f64>(6, 0.5).unwrap();
        let beta0 = DVector::from_fn(6, |i, _| (i as f64 + 1.0) / 10.0);
        let model = FiniteModel::new(&sigma, &beta0, 1.0).unwrap();
        let t = model
            .terms(1e9, 0.5, Extended::Finite(2.0), &Weight::Prediction)
            .unwrap();
        assert!(t.tv < 1e-12);
        assert_relative_eq!(t.tc, beta0.dot(&(&sigma * &beta0)), max_relative = 1e-6);
        let two_atom = SpectralDistribution::new([(1.0 / 3.0, 0.5), (3.0, 0.5)]).unwrap();
        let lim = LimitSpec::new(two_atom.clone(), two_atom, 2.0, 1.0).unwrap();
        let r = risk_profile_limit(1e9, 0.5, Extended::Finite(0.5), &lim).unwrap();
        assert_relative_eq!(r, 2.0 * (1.0 / 6.0 + 1.5), max_relative = 1e-6);
    }

    #[test]
    fn underparameterized_ridgeless_uses_infinite_limit() {
        // v = ∞: tv = φ/(1 − φ) for Σ = I, and tc = 0.
        let t = isotropic_limit()
            .terms(0.0, 0.2, Extended::Finite(0.5), &opts())
            .unwrap();
        assert!(t.v.is_infinite());
        assert_relative_eq!(t.tv, 0.25, max_relative = 1e-12);
        assert_eq!(t.tc, 0.0);
        let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 2.0, 4.0]));
        let model = FiniteModel::new(&sigma, &DVector::from_element(3, 1.0), 1.0).unwrap();
        let t = model
            .terms(0.0, 0.2, Extended::Finite(0.5), &Weight::Estimation)
            .unwrap();
        let expected = 0.2 * (1.0 + 0.5 + 0.25) / 3.0 / 3.0 / 0.8;
        assert_relative_eq!(t.tv, expected, max_relative = 1e-12);
        assert_eq!(t.tc, 0.0);
    }

    #[test]
    fn interpolation_threshold_is_a_domain_error() {
        let err = isotropic_limit()
            .terms(0.0, 1.0, Extended::Finite(1.0), &opts())
            .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn psi_below_phi_is_rejected() {
        assert!(isotropic_limit()
            .terms(0.1, 0.5, Extended::Finite(0.4), &opts())
            .is_err());
    }

    #[test]
    fn full_data_ridge_matches_isotropic_closed_form() {
        // Excess prediction risk of ridge on isotropic features with ‖β₀‖² = ρ²:
        // ρ²λ² m'(−λ) + σ² φ (m(−λ) − λ m'(−λ)), m the Marchenko–Pastur transform.
        let lim = isotropic_limit();
        for &(phi, lambda) in &[(0.1, 0.1), (0.5, 0.3), (0.9, 2.0), (0.3, 0.01)] {
            let m = mp_stieltjes(phi, lambda);
            let h = 1e-5;
            let dm = (mp_stieltjes(phi, lambda - h) - mp_stieltjes(phi, lambda + h)) / (2.0 * h);
            let expected = lambda * lambda * dm + phi * (m - lambda * dm);
            let got = lim.risk(lambda, phi, Extended::Finite(phi), &opts()).unwrap();
            assert_relative_eq!(got, expected, max_relative = 1e-7);
        }
    }

    #[test]
    fn optimal_ridge_matches_isotropic_optimum() {
        // λ* = φσ²/ρ² and the optimum equals σ²φ m(−λ*).
        let lim = isotropic_limit();
        let phi = 0.1;
        let best = optimal_ridge_risk(phi, &lim, &default_lambda_grid(2000)).unwrap();
        let expected = phi * mp_stieltjes(phi, phi);
        assert!((best.value - expected).abs() < 1e-6, "{} vs {expected}", best.value);
        assert_relative_eq!(best.argmin, 0.1, max_relative = 0.01);
    }

    #[test]
    fn optimal_ridgeless_matches_optimal_ridge() {
        let lim = isotropic_limit();
        let ridgeless = optimal_ridgeless_risk(0.1, &lim, &default_psi_grid(0.1, 2000)).unwrap();
        let ridge = optimal_ridge_risk(0.1, &lim, &default_lambda_grid(2000)).unwrap();
        assert!((ridgeless.value - ridge.value).abs() <= 1e-3);
    }

    #[test]
    fn single_point_grid() {
        let lim = isotropic_limit();
        let best = optimal_ridgeless_risk(0.1, &lim, &[3.0]).unwrap();
        assert_eq!(best.argmin, 3.0);
        assert_relative_eq!(best.value, lim.risk(0.0, 0.1, Extended::Finite(3.0), &opts()).unwrap());
        assert!(optimal_ridgeless_risk(0.1, &lim, &[]).is_err());
    }

    #[test]
    fn scan_is_nondecreasing_for_isotropic_model() {
        let phis: Vec<f64> = (1..=15).map(|i| i as f64 / 10.0).collect();
        let scan = monotonicity_scan(&phis, &isotropic_limit(), 200).unwrap();
        assert!(scan.is_nondecreasing(0.0));
        assert!(scan.max_mismatch() <= 1e-3, "mismatch {}", scan.max_mismatch());
        // φ = 1: the λ = 0 cell of the ridge grid is undefined and skipped.
        assert_eq!(scan.rows[9].ridge.skipped, 1);
    }

    #[test]
    fn grids_have_requested_shape() {
        let g = default_psi_grid(0.5, 200);
        assert_eq!(g.len(), 200);
        assert_eq!(g[0], 1.0);
        assert_relative_eq!(g[1], 1.001);
        assert_relative_eq!(g[199], 1001.0, max_relative = 1e-12);
        let g = default_psi_grid(2.0, 5);
        assert_eq!(g[0], 2.0);
        let l = default_lambda_grid::<f64>(200);
        assert_eq!((l.len(), l[0]), (200, 0.0));
        assert_relative_eq!(l[1], 1e-4);
        assert_relative_eq!(l[199], 1e3, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn limit_risk_is_constant_along_paths(psi_bar in 1.2f64..20.0, theta in 0.0f64..1.0, phi in 0.05f64..1.0) {
            let h = SpectralDistribution::new([(1.0 / 3.0, 0.5), (3.0, 0.5)]).unwrap();
            let lim = LimitSpec::new(h.clone(), h.clone(), 1.0, 1.0).unwrap();
            let o = opts();
            let path = EquivalencePath::through_ridgeless(phi, Extended::Finite(psi_bar.max(phi)), &h, &o).unwrap();
            let end = lim.risk(0.0, phi, path.psi_bar, &o).unwrap();
            let pt = path.point(theta).unwrap();
            let mid = lim.risk(pt.lambda.unwrap_finite(), phi, pt.psi, &o).unwrap();
            prop_assert!((mid - end).abs() <= 1e-8 * end.max(1.0), "{} vs {}", mid, end);
        }

        #[test]
        fn variance_denominator_stays_positive(lambda in 1e-4f64..1e3, phi in 0.05f64..5.0, extra in 0.0f64..10.0) {
            let h = SpectralDistribution::new([(0.5, 0.3), (2.0, 0.7)]).unwrap();
            let lim = LimitSpec::new(h.clone(), h, 1.0, 1.0).unwrap();
            let t = lim.terms(lambda, phi, Extended::Finite(phi + extra), &opts()).unwrap();
            prop_assert!(t.tv >= 0.0 && t.tc >= 0.0);
        }
    }

    #[test]
    fn training_and_in_sample_reduce_for_heavy_penalty() {
        // v → 0: D → 1, so training → tc + σ²(1 + tv) → β₀ᵀΣβ₀ + σ², in-sample → β₀ᵀΣβ₀.
        let sigma = crate::datagen::ar1_covariance::<f64>(4, 0.5).unwrap();
        let beta0 = DVector::from_element(4, 0.5);
        let model = FiniteModel::new(&sigma, &beta0, 0.7).unwrap();
        let signal = beta0.dot(&(&sigma * &beta0));
        let train = model.training_error(1e9, 0.5, Extended::Finite(1.0)).unwrap();
        let ins = model.in_sample(1e9, 0.5, Extended::Finite(1.0)).unwrap();
        assert_relative_eq!(train, signal + 0.7, max_relative = 1e-6);
        assert_relative_eq!(ins, signal, max_relative = 1e-6);
    }
}
