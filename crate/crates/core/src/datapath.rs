//! Empirical Stieltjes transforms and the data-dependent equivalence path.
//!
//! With `φₙ = p/n`, the resolvent traces
//!
//! ```text
//!   m̂(−λ) = (1/p) tr[(XᵀX/n + λI)⁻¹],   v̂(−λ) = (1/n) tr[(XXᵀ/n + λI)⁻¹]
//! ```
//!
//! are evaluated from the squared singular values of `X`. The data path is
//! anchored at `λ̄ₙ`, the penalty whose full-data trace `v̂(−λ̄ₙ)` matches the
//! averaged pseudo-trace of the subsampled ridgeless gram matrices.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{apply_random_features, sample_subsets, Activation};
use crate::extended::Extended;
use crate::linalg;
use crate::scalar::{count, lit, Real};
use crate::spectral::EquivalencePath;

/// `m̂` and `v̂` at `z = −λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StieltjesPair<T> {
    pub lambda: T,
    pub m_hat: T,
    pub v_hat: T,
    pub phi_n: T,
}

impl<T: Real> StieltjesPair<T> {
    /// `|φₙ z m̂ + φₙ − 1 − z v̂|` at `z = −λ`.
    pub fn identity_residual(&self) -> T {
        let z = -self.lambda;
        (self.phi_n * z * self.m_hat + self.phi_n - T::one() - z * self.v_hat).abs()
    }
}

fn ensure_positive<T: Real>(lambda: T) -> Result<()> {
    if lambda > T::zero() && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("lambda must be positive, got {lambda}")))
    }
}

/// Sum of `1/(s/n + λ)` over the squared singular values.
fn resolvent_sum<T: Real>(sq: &[T], n: usize, lambda: T) -> T {
    let n_t = count::<T>(n);
    sq.iter().fold(T::zero(), |acc, s| acc + T::one() / (*s / n_t + lambda))
}

/// Both transforms from precomputed squared singular values of an `n × p` design.
pub fn stieltjes_from_singular<T: Real>(sq: &[T], n: usize, p: usize, lambda: T) -> Result<StieltjesPair<T>> {
    ensure_positive(lambda)?;
    let q = sq.len();
    let base = resolvent_sum(sq, n, lambda);
    let v_hat = (base + count::<T>(n - q) / lambda) / count::<T>(n);
    let m_hat = (base + count::<T>(p - q) / lambda) / count::<T>(p);
    Ok(StieltjesPair {
        lambda,
        m_hat,
        v_hat,
        phi_n: count::<T>(p) / count::<T>(n),
    })
}

/// `m̂` and `v̂` of `X` at `z = −λ`.
pub fn stieltjes_pair<T: Real>(x: &DMatrix<T>, lambda: T) -> Result<StieltjesPair<T>> {
    linalg::ensure_finite_matrix(x, "design matrix")?;
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::input("empty design matrix"));
    }
    let sq = linalg::squared_singular_values(x);
    stieltjes_from_singular(&sq, x.nrows(), x.ncols(), lambda)
}

/// `(1/n) tr[(XXᵀ/n + λI)⁻¹]`.
pub fn empirical_v_hat<T: Real>(x: &DMatrix<T>, lambda: T) -> Result<T> {
    Ok(stieltjes_pair(x, lambda)?.v_hat)
}

/// `(1/p) tr[(XᵀX/n + λI)⁻¹]`.
pub fn empirical_m_hat<T: Real>(x: &DMatrix<T>, lambda: T) -> Result<T> {
    Ok(stieltjes_pair(x, lambda)?.m_hat)
}

/// Residual of the algebraic identity linking `m̂` and `v̂`.
pub fn check_mv_identity<T: Real>(x: &DMatrix<T>, lambda: T) -> Result<T> {
    Ok(stieltjes_pair(x, lambda)?.identity_residual())
}

/// Decreasing trace `a·[Σ 1/(μ + bλ) + z/(bλ)]` over positive eigenvalues `μ`
/// and `z` null directions.
#[derive(Debug, Clone)]
struct TraceCurve<T> {
    positive: Vec<T>,
    nulls: usize,
    outer: T,
    inner: T,
}

impl<T: Real> TraceCurve<T> {
    fn new(eigenvalues: &[T], cutoff: T, outer: T, inner: T) -> Self {
        let positive: Vec<T> = eigenvalues.iter().copied().filter(|s| *s > cutoff).collect();
        let nulls = eigenvalues.len() - positive.len();
        Self {
            positive,
            nulls,
            outer,
            inner,
        }
    }

    fn at(&self, lambda: T) -> Extended<T> {
        let shift = self.inner * lambda;
        if shift == T::zero() && self.nulls > 0 {
            return Extended::Infinite;
        }
        let mut total = self
            .positive
            .iter()
            .fold(T::zero(), |acc, mu| acc + T::one() / (*mu + shift));
        if self.nulls > 0 {
            total += count::<T>(self.nulls) / shift;
        }
        Extended::Finite(self.outer * total)
    }
}

/// Sum of reciprocal eigenvalues above the pseudoinverse cutoff.
fn pseudo_trace<T: Real>(eigenvalues: &[T], k: usize, p: usize) -> T {
    let top = eigenvalues.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let cutoff = linalg::pinv_cutoff(top, k, p);
    eigenvalues
        .iter()
        .filter(|s| **s > cutoff)
        .fold(T::zero(), |acc, s| acc + T::one() / *s)
}

/// Solves `rhs(λ) = target` for a strictly decreasing `rhs` by geometric
/// bisection, starting from `[1e−10, 1e6]` and widening upward.
fn solve_trace_equation<T: Real>(curve: &TraceCurve<T>, target: T, tol: T) -> Result<(T, usize)> {
    if !(target > T::zero()) || !target.is_finite() {
        return Err(Error::NoSolution(format!(
            "subsample pseudo-trace {target} is not a positive finite number"
        )));
    }
    if !(tol > T::zero()) {
        return Err(Error::param(format!("solver tolerance must be positive, got {tol}")));
    }
    let above = |l: T| match curve.at(l) {
        Extended::Infinite => true,
        Extended::Finite(v) => v > target,
    };
    let mut lo = lit::<T>(1e-10);
    let mut hi = lit::<T>(1e6);
    if !above(lo) {
        let at_zero = curve.at(T::zero());
        let slack = T::one() + tol.max(lit(1e-9));
        return match at_zero {
            Extended::Finite(v0) if target <= v0 * slack => Ok((T::zero(), 0)),
            Extended::Finite(v0) => Err(Error::NoSolution(format!(
                "subsample pseudo-trace {target} exceeds the full-data trace {v0} at zero penalty; \
                 the subsample gram matrices are nearly singular"
            ))),
            Extended::Infinite => Ok((T::zero(), 0)),
        };
    }
    let limit = lit::<T>(1e300);
    while above(hi) {
        lo = hi;
        hi *= lit::<T>(1e3);
        if hi > limit {
            return Err(Error::NoSolution(format!(
                "trace stays above {target} for every penalty"
            )));
        }
    }
    let mut iterations = 0;
    while hi / lo - T::one() > tol {
        iterations += 1;
        if iterations > 500 {
            return Err(Error::Convergence {
                residual: (hi / lo - T::one()).to_f64_lossy(),
                iterations,
            });
        }
        let mid = (lo * hi).sqrt();
        if above(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(((lo * hi).sqrt(), iterations))
}

/// Solution of the data-path equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataLambdaBar<T> {
    pub lambda_bar: T,
    /// Averaged subsample pseudo-trace; infinite when `k > p`.
    pub subsample_trace: Extended<T>,
    /// `v̂(−λ̄ₙ)` for linear features; the matched trace for kernels.
    pub full_trace: Extended<T>,
    pub iterations: usize,
}

fn check_sizes(n: usize, p: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::param(format!("subsample size {k} must lie in [1, {n}]")));
    }
    if (k as f64 - p as f64).abs() <= 0.02 * p as f64 && k != n {
        return Err(Error::param(format!(
            "subsample size {k} is within 2% of p = {p}; the ridgeless subsample gram is nearly singular"
        )));
    }
    Ok(())
}

/// Penalty `λ̄ₙ` of the full-data ridge matched to the `M`-ensemble of
/// ridgeless fits on subsamples of size `k`.
pub fn lambda_bar_data<T: Real>(x: &DMatrix<T>, k: usize, m: usize, seed: u64, tol: T) -> Result<DataLambdaBar<T>> {
    let subsets = sample_subsets(x.nrows(), k, m, seed)?;
    lambda_bar_data_with_subsets(x, &subsets, tol)
}

/// [`lambda_bar_data`] with explicit subsets, all of one size.
pub fn lambda_bar_data_with_subsets<T: Real>(
    x: &DMatrix<T>,
    subsets: &[Vec<usize>],
    tol: T,
) -> Result<DataLambdaBar<T>> {
    linalg::ensure_finite_matrix(x, "design matrix")?;
    let (n, p) = x.shape();
    let k = subsets
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::param("no subsets"))?;
    if subsets.iter().any(|s| s.len() != k) {
        return Err(Error::param("subsets have different sizes"));
    }
    if let Some(bad) = subsets.iter().flatten().find(|i| **i >= n) {
        return Err(Error::param(format!("subset index {bad} out of range for {n} rows")));
    }
    check_sizes(n, p, k)?;
    if k > p {
        // Subsample grams of rank p < k: the ridgeless fixed point is v = ∞
        // for every ψ̄ < 1 and the matched penalty is zero.
        return Ok(DataLambdaBar {
            lambda_bar: T::zero(),
            subsample_trace: Extended::Infinite,
            full_trace: Extended::Infinite,
            iterations: 0,
        });
    }
    let full_sq = linalg::squared_singular_values(x);
    let traces: Vec<T> = if k == n {
        vec![pseudo_trace(&full_sq, n, p)]
    } else {
        subsets
            .par_iter()
            .map(|idx| pseudo_trace(&linalg::squared_singular_values(&linalg::select_rows(x, idx)), k, p))
            .collect()
    };
    let target = traces.iter().fold(T::zero(), |a, b| a + *b) / count::<T>(traces.len());
    // v̂ in terms of μ = s/n, padded with the n − min(n, p) null directions.
    let n_t = count::<T>(n);
    let mut mu: Vec<T> = full_sq.iter().map(|s| *s / n_t).collect();
    mu.resize(n, T::zero());
    let top = mu.first().copied().unwrap_or(T::zero());
    let curve = TraceCurve::new(&mu, linalg::pinv_cutoff(top, n, p), T::one() / n_t, T::one());
    let (lambda_bar, iterations) = solve_trace_equation(&curve, target, tol)?;
    Ok(DataLambdaBar {
        lambda_bar,
        subsample_trace: Extended::Finite(target),
        full_trace: curve.at(lambda_bar),
        iterations,
    })
}

/// Data path for the transformed features `φ(XFᵀ)`.
pub fn lambda_bar_data_features<T: Real>(
    x: &DMatrix<T>,
    weights: &DMatrix<T>,
    activation: Activation,
    k: usize,
    m: usize,
    seed: u64,
    tol: T,
) -> Result<DataLambdaBar<T>> {
    let phi = apply_random_features(x, weights, activation)?;
    lambda_bar_data(&phi, k, m, seed, tol)
}

/// Solves `(1/M) Σ tr[K_I⁺] = tr[(K + (n/p)λ̄ₙ I)⁻¹]` for a kernel matrix,
/// where `p` is the nominal feature dimension.
pub fn lambda_bar_data_kernel<T: Real>(
    kmat: &DMatrix<T>,
    p_nominal: usize,
    k: usize,
    m: usize,
    seed: u64,
    tol: T,
) -> Result<DataLambdaBar<T>> {
    linalg::ensure_symmetric(kmat, "kernel matrix")?;
    linalg::ensure_finite_matrix(kmat, "kernel matrix")?;
    if p_nominal == 0 {
        return Err(Error::param("nominal dimension must be positive"));
    }
    let n = kmat.nrows();
    let subsets = sample_subsets(n, k, m, seed)?;
    let eig = |mat: &DMatrix<T>| -> Vec<T> {
        linalg::sym_eigenvalues(mat)
            .into_iter()
            .map(|s| s.max(T::zero()))
            .collect()
    };
    let full = eig(kmat);
    let traces: Vec<T> = if k == n {
        vec![pseudo_trace(&full, n, n)]
    } else {
        subsets
            .par_iter()
            .map(|idx| pseudo_trace(&eig(&linalg::principal_submatrix(kmat, idx)), k, k))
            .collect()
    };
    let target = traces.iter().fold(T::zero(), |a, b| a + *b) / count::<T>(traces.len());
    let top = full.first().copied().unwrap_or(T::zero());
    let scale = count::<T>(n) / count::<T>(p_nominal);
    let curve = TraceCurve::new(&full, linalg::pinv_cutoff(top, n, n), T::one(), scale);
    let (lambda_bar, iterations) = solve_trace_equation(&curve, target, tol)?;
    Ok(DataLambdaBar {
        lambda_bar,
        subsample_trace: Extended::Finite(target),
        full_trace: curve.at(lambda_bar),
        iterations,
    })
}

/// Data-dependent path between `(λ̄ₙ, φₙ)` and `(0, p/k)`.
pub fn data_path<T: Real>(
    x: &DMatrix<T>,
    k: usize,
    m: usize,
    seed: u64,
    tol: T,
) -> Result<(EquivalencePath<T>, DataLambdaBar<T>)> {
    let sol = lambda_bar_data(x, k, m, seed, tol)?;
    let (n, p) = x.shape();
    let path = EquivalencePath {
        lambda_bar: Extended::Finite(sol.lambda_bar),
        phi: count::<T>(p) / count::<T>(n),
        psi_bar: Extended::Finite(count::<T>(p) / count::<T>(k)),
        v_shared: sol.full_trace,
    };
    Ok((path, sol))
}
