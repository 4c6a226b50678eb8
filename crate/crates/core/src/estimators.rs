//! Ridge, ridgeless, generalized-ridge, random-feature and kernel ridge base
//! estimators, and their subsample ensembles.
//!
//! The ridge estimator fitted on rows `I` (with `k = |I|`) is
//!
//! ```text
//!   β̂ = (XᵢᵀXᵢ/k + λI)⁻¹ Xᵢᵀyᵢ/k,
//! ```
//!
//! and the ridgeless estimator replaces the inverse by the Moore–Penrose
//! pseudoinverse. An `M`-ensemble averages `M` such fits over independently
//! drawn subsets of size `k`.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rayon::prelude::*;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::linalg;
use crate::rng::{self, tags};
use crate::scalar::{count, lit, Real};

fn validate_design<T: Real>(x: &DMatrix<T>, y: &DVector<T>, lambda: T) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::input("empty design matrix"));
    }
    if x.nrows() != y.len() {
        return Err(Error::input(format!(
            "design has {} rows but response has {}",
            x.nrows(),
            y.len()
        )));
    }
    if !lambda.is_finite() || lambda < T::zero() {
        return Err(Error::input(format!(
            "ridge penalty must be a nonnegative real, got {lambda}"
        )));
    }
    linalg::ensure_finite_matrix(x, "design matrix")?;
    linalg::ensure_finite_vector(y, "response")
}

/// Ridge (`λ > 0`) or ridgeless (`λ = 0`) coefficients on the given rows.
///
/// For `λ > 0` the regularized normal equations are solved with a Cholesky
/// factorization, in the primal form when `p ≤ k` and in the dual (gram)
/// form otherwise. For `λ = 0` the minimum-norm least squares solution is
/// computed from the eigendecomposition of the smaller gram matrix.
pub fn fit_ridge<T: Real>(x: &DMatrix<T>, y: &DVector<T>, lambda: T) -> Result<DVector<T>> {
    validate_design(x, y, lambda)?;
    if lambda == T::zero() {
        return Ok(RidgeSpectrum::new(x, y)?.coef(T::zero()));
    }
    let (k, p) = x.shape();
    let k_t = count::<T>(k);
    if p <= k {
        let mut a = linalg::cross_product(x) / k_t;
        for i in 0..p {
            a[(i, i)] += lambda;
        }
        let b = x.transpose() * y / k_t;
        linalg::spd_solve(a, &b, "regularized gram matrix")
    } else {
        let mut g = linalg::outer_product(x) / k_t;
        for i in 0..k {
            g[(i, i)] += lambda;
        }
        let alpha = linalg::spd_solve(g, y, "regularized gram matrix")? / k_t;
        Ok(x.transpose() * alpha)
    }
}

/// Eigendecomposition of one subsample's gram matrix, from which the ridge
/// coefficients for any `λ ≥ 0` follow in `O(p·r)`.
#[derive(Debug, Clone)]
pub struct RidgeSpectrum<T: Real> {
    /// Gram eigenvalues (of `XᵀX/k` or `XXᵀ/k`), decreasing.
    eigenvalues: DVector<T>,
    /// Columns mapping the spectral coordinates back to coefficients:
    /// `V` in the primal form, `XᵀU/k` in the dual form.
    basis: DMatrix<T>,
    /// Response projected on the eigenvectors: `VᵀXᵀy/k` or `Uᵀy`.
    projection: DVector<T>,
    cutoff: T,
}

impl<T: Real> RidgeSpectrum<T> {
    pub fn new(x: &DMatrix<T>, y: &DVector<T>) -> Result<Self> {
        validate_design(x, y, T::zero())?;
        let (k, p) = x.shape();
        let k_t = count::<T>(k);
        let (eigenvalues, basis, projection) = if p <= k {
            let (vals, vecs) = linalg::sym_eigen(&(linalg::cross_product(x) / k_t));
            let proj = vecs.transpose() * (x.transpose() * y / k_t);
            (vals, vecs, proj)
        } else {
            let (vals, vecs) = linalg::sym_eigen(&(linalg::outer_product(x) / k_t));
            let proj = vecs.transpose() * y;
            (vals, x.transpose() * vecs / k_t, proj)
        };
        let top = eigenvalues.iter().copied().fold(T::zero(), |a, b| a.max(b));
        let cutoff = linalg::pinv_cutoff(top, k, p);
        Ok(Self {
            eigenvalues,
            basis,
            projection,
            cutoff,
        })
    }

    /// Coefficients at penalty `λ`; eigenvalues below the rank cutoff are
    /// dropped when `λ = 0`.
    pub fn coef(&self, lambda: T) -> DVector<T> {
        let weights = DVector::from_fn(self.eigenvalues.len(), |i, _| {
            let s = self.eigenvalues[i];
            if lambda == T::zero() {
                if s > self.cutoff {
                    self.projection[i] / s
                } else {
                    T::zero()
                }
            } else {
                self.projection[i] / (s.max(T::zero()) + lambda)
            }
        });
        &self.basis * weights
    }

    /// Numerical rank of the gram matrix.
    pub fn rank(&self) -> usize {
        self.eigenvalues.iter().filter(|s| **s > self.cutoff).count()
    }
}

/// Draws `m` independent uniform subsets of `k` distinct indices out of `0..n`.
///
/// Member `ℓ` uses its own stream derived from `(seed, ℓ)`, so the subsets
/// do not depend on how many members are drawn or in which order. Indices
/// within a subset are sorted.
pub fn sample_subsets(n: usize, k: usize, m: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::param(format!("subsample size {k} must lie in [1, {n}]")));
    }
    if m == 0 {
        return Err(Error::param("ensemble size must be positive"));
    }
    Ok((0..m)
        .map(|l| {
            let mut rng = rng::stream(seed, &[tags::SUBSETS, l as u64]);
            let mut idx = index::sample(&mut rng, n, k).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect())
}

/// Subsample size `⌊p/ψ⌋` for aspect ratio `ψ`, checked against `n`.
pub fn subsample_size<T: Real>(p: usize, psi: Extended<T>, n: usize) -> Result<usize> {
    let psi = match psi {
        Extended::Infinite => return Err(Error::param("psi = inf gives an empty subsample")),
        Extended::Finite(x) => x.to_f64_lossy(),
    };
    if !(psi > 0.0) {
        return Err(Error::param(format!("psi must be positive, got {psi}")));
    }
    let raw = p as f64 / psi;
    let k = (raw * (1.0 + 1e-12)).floor() as usize;
    if k == 0 {
        return Err(Error::param(format!("psi = {psi} gives an empty subsample (p = {p})")));
    }
    if k > n {
        return Err(Error::param(format!("psi = {psi} needs {k} > n = {n} rows")));
    }
    Ok(k)
}

/// Elementwise activation for random features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Sigmoid,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
        }
    }
}

/// Positive semidefinite kernels. Defaults follow the usual convention
/// `γ = 1/p`, polynomial degree 3 with offset 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind<T> {
    /// `(γ⟨x, x'⟩ + c₀)^d`
    Polynomial { degree: u32, gamma: T, coef0: T },
    /// `exp(−γ‖x − x'‖²)`
    Gaussian { gamma: T },
    /// `exp(−γ‖x − x'‖₁)`
    Laplacian { gamma: T },
}

impl<T: Real> KernelKind<T> {
    fn validate(&self) -> Result<()> {
        let gamma = match *self {
            KernelKind::Polynomial { degree, gamma, .. } => {
                if degree == 0 {
                    return Err(Error::param("polynomial kernel degree must be at least 1"));
                }
                gamma
            }
            KernelKind::Gaussian { gamma } | KernelKind::Laplacian { gamma } => gamma,
        };
        if !(gamma > T::zero()) || !gamma.is_finite() {
            return Err(Error::param(format!("kernel gamma must be positive, got {gamma}")));
        }
        Ok(())
    }

    /// Kernel matrix between the rows of `a` and the rows of `b`.
    pub fn matrix(&self, a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.validate()?;
        if a.ncols() != b.ncols() {
            return Err(Error::input(format!(
                "kernel arguments have {} and {} columns",
                a.ncols(),
                b.ncols()
            )));
        }
        Ok(match *self {
            KernelKind::Polynomial { degree, gamma, coef0 } => {
                let mut g = a * b.transpose();
                g.apply(|v| *v = (gamma * *v + coef0).powi(degree as i32));
                g
            }
            KernelKind::Gaussian { gamma } => {
                let na: Vec<T> = a.row_iter().map(|r| r.norm_squared()).collect();
                let nb: Vec<T> = b.row_iter().map(|r| r.norm_squared()).collect();
                let mut g = a * b.transpose();
                for j in 0..g.ncols() {
                    for i in 0..g.nrows() {
                        let d2 = (na[i] + nb[j] - lit::<T>(2.0) * g[(i, j)]).max(T::zero());
                        g[(i, j)] = (-gamma * d2).exp();
                    }
                }
                g
            }
            KernelKind::Laplacian { gamma } => DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
                let l1 = a
                    .row(i)
                    .iter()
                    .zip(b.row(j).iter())
                    .fold(T::zero(), |acc, (u, v)| acc + (*u - *v).abs());
                (-gamma * l1).exp()
            }),
        })
    }
}

/// Map applied to the raw features before fitting.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap<T> {
    Linear,
    /// `φ(XFᵀ)` with `F` of shape `d × p`.
    Random {
        weights: DMatrix<T>,
        activation: Activation,
    },
    /// Coefficients live in the dual; see [`fit_kernel_ensemble`].
    Kernel(KernelKind<T>),
}

impl<T: Real> FeatureMap<T> {
    /// Transformed design matrix for primal feature maps.
    pub fn transform(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        match self {
            FeatureMap::Linear => Ok(x.clone()),
            FeatureMap::Random { weights, activation } => apply_random_features(x, weights, *activation),
            FeatureMap::Kernel(_) => Err(Error::param(
                "kernel feature maps have no primal transform; use fit_kernel_ensemble",
            )),
        }
    }
}

/// Random features `φ(XFᵀ)`, applied entrywise.
pub fn apply_random_features<T: Real>(x: &DMatrix<T>, f: &DMatrix<T>, activation: Activation) -> Result<DMatrix<T>> {
    if f.ncols() != x.ncols() {
        return Err(Error::input(format!(
            "feature weights have {} columns, design has {}",
            f.ncols(),
            x.ncols()
        )));
    }
    linalg::ensure_finite_matrix(f, "feature weights")?;
    let mut z = x * f.transpose();
    z.apply(|v| *v = activation.apply(*v));
    Ok(z)
}

/// Random feature weights with i.i.d. `N(0, 1/p)` entries.
pub fn random_feature_weights<T: Real>(d: usize, p: usize, seed: u64) -> DMatrix<T> {
    let mut rng = rng::stream(seed, &[tags::WEIGHTS]);
    crate::datagen::gaussian_matrix(d, p, 1.0 / p as f64, &mut rng)
}

/// Size and seeding of a subsample ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec<T> {
    /// Subsample size.
    pub k: usize,
    /// Number of members.
    pub m: usize,
    pub lambda: T,
    pub seed: u64,
    /// Keep the per-member coefficients in the fit.
    pub retain_members: bool,
}

/// Averaged subsample fit.
#[derive(Debug, Clone)]
pub struct EnsembleFit<T: Real> {
    pub beta_bar: DVector<T>,
    pub members: Option<Vec<DVector<T>>>,
    pub k: usize,
    pub m: usize,
    pub lambda: T,
    pub seed: u64,
    pub subsets: Vec<Vec<usize>>,
    pub feature_map: FeatureMap<T>,
}

impl<T: Real> EnsembleFit<T> {
    /// Predictions `φ(X)β̄` for raw test features.
    pub fn predict(&self, x: &DMatrix<T>) -> Result<DVector<T>> {
        let z = self.feature_map.transform(x)?;
        if z.ncols() != self.beta_bar.len() {
            return Err(Error::input(format!(
                "test design has {} features, fit has {}",
                z.ncols(),
                self.beta_bar.len()
            )));
        }
        Ok(z * &self.beta_bar)
    }

    /// The ensemble made of the first `m` members, when members are retained.
    pub fn prefix(&self, m: usize) -> Option<Self> {
        let members = self.members.as_ref()?;
        if m == 0 || m > members.len() {
            return None;
        }
        let head = members[..m].to_vec();
        Some(Self {
            beta_bar: mean_of(&head),
            members: Some(head),
            k: self.k,
            m,
            lambda: self.lambda,
            seed: self.seed,
            subsets: self.subsets[..m].to_vec(),
            feature_map: self.feature_map.clone(),
        })
    }
}

fn mean_of<T: Real>(vs: &[DVector<T>]) -> DVector<T> {
    let mut acc = DVector::zeros(vs[0].len());
    for v in vs {
        acc += v;
    }
    acc / count::<T>(vs.len())
}

/// Fits the base estimator on every subset of an already transformed design.
fn fit_members<T: Real>(z: &DMatrix<T>, y: &DVector<T>, subsets: &[Vec<usize>], lambda: T) -> Result<Vec<DVector<T>>> {
    let n = z.nrows();
    // With k = n every subset is the full index set.
    if subsets.iter().all(|s| s.len() == n) {
        let beta = fit_ridge(z, y, lambda)?;
        return Ok(vec![beta; subsets.len()]);
    }
    subsets
        .par_iter()
        .map(|idx| {
            let zi = linalg::select_rows(z, idx);
            let yi = linalg::select_entries(y, idx);
            fit_ridge(&zi, &yi, lambda)
        })
        .collect()
}

/// `M`-ensemble of ridge fits on independent size-`k` subsamples.
pub fn fit_ensemble<T: Real>(
    data: &Dataset<T>,
    spec: &EnsembleSpec<T>,
    feature_map: &FeatureMap<T>,
) -> Result<EnsembleFit<T>> {
    let z = feature_map.transform(&data.x)?;
    fit_ensemble_on(&z, &data.y, spec, feature_map.clone())
}

/// Ensemble fit on a design that is already in feature space.
pub fn fit_ensemble_on<T: Real>(
    z: &DMatrix<T>,
    y: &DVector<T>,
    spec: &EnsembleSpec<T>,
    feature_map: FeatureMap<T>,
) -> Result<EnsembleFit<T>> {
    validate_design(z, y, spec.lambda)?;
    let subsets = sample_subsets(z.nrows(), spec.k, spec.m, spec.seed)?;
    let members = fit_members(z, y, &subsets, spec.lambda)?;
    Ok(EnsembleFit {
        beta_bar: mean_of(&members),
        members: spec.retain_members.then_some(members),
        k: spec.k,
        m: spec.m,
        lambda: spec.lambda,
        seed: spec.seed,
        subsets,
        feature_map,
    })
}

/// Ensemble whose members share the subsets of one seed but are evaluated at
/// many penalties; every member's gram matrix is decomposed once.
pub fn fit_ensemble_lambda_grid<T: Real>(
    z: &DMatrix<T>,
    y: &DVector<T>,
    k: usize,
    m: usize,
    lambdas: &[T],
    seed: u64,
) -> Result<Vec<DVector<T>>> {
    validate_design(z, y, T::zero())?;
    if let Some(bad) = lambdas.iter().find(|l| !(**l >= T::zero()) || !l.is_finite()) {
        return Err(Error::input(format!(
            "ridge penalty must be a nonnegative real, got {bad}"
        )));
    }
    let subsets = sample_subsets(z.nrows(), k, m, seed)?;
    let n = z.nrows();
    let spectra: Vec<RidgeSpectrum<T>> = if k == n {
        vec![RidgeSpectrum::new(z, y)?]
    } else {
        subsets
            .par_iter()
            .map(|idx| RidgeSpectrum::new(&linalg::select_rows(z, idx), &linalg::select_entries(y, idx)))
            .collect::<Result<_>>()?
    };
    Ok(lambdas
        .iter()
        .map(|&l| {
            let coefs: Vec<DVector<T>> = spectra.iter().map(|s| s.coef(l)).collect();
            mean_of(&coefs)
        })
        .collect())
}

/// Generalized ridge with penalty `λ‖G^{1/2}β‖²`:
/// `β̂ = G^{−1/2} · ridge(XG^{−1/2}, y, λ)`, the solution of
/// `(XᵀX/k + λG)β = Xᵀy/k`.
pub fn fit_generalized_ridge<T: Real>(x: &DMatrix<T>, y: &DVector<T>, lambda: T, g: &DMatrix<T>) -> Result<DVector<T>> {
    let inv_sqrt = generalized_transform(g, x.ncols())?;
    let beta = fit_ridge(&(x * &inv_sqrt), y, lambda)?;
    Ok(inv_sqrt * beta)
}

/// `G^{−1/2}` after checking that `G` is symmetric positive definite.
pub fn generalized_transform<T: Real>(g: &DMatrix<T>, p: usize) -> Result<DMatrix<T>> {
    if g.nrows() != p || g.ncols() != p {
        return Err(Error::param(format!(
            "penalty matrix is {}x{}, expected {p}x{p}",
            g.nrows(),
            g.ncols()
        )));
    }
    linalg::ensure_spd(g, "penalty matrix")?;
    Ok(linalg::sym_apply(g, |s| T::one() / s.sqrt()))
}

/// Generalized-ridge ensemble, reported in the original coordinates.
pub fn fit_generalized_ensemble<T: Real>(
    data: &Dataset<T>,
    spec: &EnsembleSpec<T>,
    g: &DMatrix<T>,
) -> Result<EnsembleFit<T>> {
    let inv_sqrt = generalized_transform(g, data.p())?;
    let z = &data.x * &inv_sqrt;
    let mut fit = fit_ensemble_on(&z, &data.y, spec, FeatureMap::Linear)?;
    fit.beta_bar = &inv_sqrt * &fit.beta_bar;
    if let Some(members) = fit.members.as_mut() {
        for b in members.iter_mut() {
            *b = &inv_sqrt * &*b;
        }
    }
    Ok(fit)
}

/// Kernel ridge in the dual: `α = (K + k·λₛ·I)⁻¹ y` with `k = dim K`.
/// `λₛ = 0` uses the pseudoinverse of `K`.
pub fn fit_kernel_ridge<T: Real>(kmat: &DMatrix<T>, y: &DVector<T>, lambda_scaled: T) -> Result<DVector<T>> {
    linalg::ensure_symmetric(kmat, "kernel matrix")?;
    if kmat.nrows() != y.len() {
        return Err(Error::input(format!(
            "kernel matrix is {}x{} but response has {} entries",
            kmat.nrows(),
            kmat.ncols(),
            y.len()
        )));
    }
    if !lambda_scaled.is_finite() || lambda_scaled < T::zero() {
        return Err(Error::input(format!(
            "ridge penalty must be a nonnegative real, got {lambda_scaled}"
        )));
    }
    let k = kmat.nrows();
    if lambda_scaled > T::zero() {
        let mut a = kmat.clone();
        let shift = count::<T>(k) * lambda_scaled;
        for i in 0..k {
            a[(i, i)] += shift;
        }
        if let Some(c) = a.clone().cholesky() {
            return Ok(c.solve(y));
        }
    }
    let (vals, vecs) = linalg::sym_eigen(kmat);
    let shift = count::<T>(k) * lambda_scaled;
    let cutoff = linalg::pinv_cutoff(vals.iter().copied().fold(T::zero(), |a, b| a.max(b.abs())), k, k);
    let proj = vecs.transpose() * y;
    let w = DVector::from_fn(k, |i, _| {
        let s = vals[i] + shift;
        if s > cutoff {
            proj[i] / s
        } else {
            T::zero()
        }
    });
    Ok(vecs * w)
}

/// `K(X_*, X_I) α`.
pub fn predict_kernel<T: Real>(alpha: &DVector<T>, k_star: &DMatrix<T>) -> Result<DVector<T>> {
    if k_star.ncols() != alpha.len() {
        return Err(Error::input(format!(
            "cross-kernel has {} columns, dual vector has {}",
            k_star.ncols(),
            alpha.len()
        )));
    }
    Ok(k_star * alpha)
}

/// Kernel ridge ensemble; each member keeps its dual vector and subset.
#[derive(Debug, Clone)]
pub struct KernelEnsembleFit<T: Real> {
    pub kind: KernelKind<T>,
    pub alphas: Vec<DVector<T>>,
    pub subsets: Vec<Vec<usize>>,
    pub lambda: T,
    pub k: usize,
    train_x: DMatrix<T>,
}

impl<T: Real> KernelEnsembleFit<T> {
    pub fn predict(&self, x: &DMatrix<T>) -> Result<DVector<T>> {
        let cross = self.kind.matrix(x, &self.train_x)?;
        let mut acc = DVector::zeros(x.nrows());
        for (alpha, idx) in self.alphas.iter().zip(&self.subsets) {
            let cols = DMatrix::from_fn(x.nrows(), idx.len(), |i, j| cross[(i, idx[j])]);
            acc += predict_kernel(alpha, &cols)?;
        }
        Ok(acc / count::<T>(self.alphas.len()))
    }
}

/// Kernel ridge ensemble with the penalty scaled so that each member solves
/// `(K_I + (k/p)·λ·I) α = y_I`, `p` being the nominal feature dimension.
pub fn fit_kernel_ensemble<T: Real>(
    data: &Dataset<T>,
    kind: KernelKind<T>,
    spec: &EnsembleSpec<T>,
    p_nominal: usize,
) -> Result<KernelEnsembleFit<T>> {
    validate_design(&data.x, &data.y, spec.lambda)?;
    if p_nominal == 0 {
        return Err(Error::param("nominal dimension must be positive"));
    }
    let subsets = sample_subsets(data.n(), spec.k, spec.m, spec.seed)?;
    let full = kind.matrix(&data.x, &data.x)?;
    let lambda_scaled = spec.lambda / count::<T>(p_nominal);
    let n = data.n();
    let alphas: Vec<DVector<T>> = if spec.k == n {
        let alpha = fit_kernel_ridge(&full, &data.y, lambda_scaled)?;
        vec![alpha; spec.m]
    } else {
        subsets
            .par_iter()
            .map(|idx| {
                fit_kernel_ridge(
                    &linalg::principal_submatrix(&full, idx),
                    &linalg::select_entries(&data.y, idx),
                    lambda_scaled,
                )
            })
            .collect::<Result<_>>()?
    };
    Ok(KernelEnsembleFit {
        kind,
        alphas,
        subsets,
        lambda: spec.lambda,
        k: spec.k,
        train_x: data.x.clone(),
    })
}

/// Writes `beta_bar` as a one-column CSV with header `beta`.
pub fn write_coefficients<T: Real>(fit: &EnsembleFit<T>, path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::from("beta\n");
    for b in fit.beta_bar.iter() {
        out.push_str(&format!("{b}\n"));
    }
    std::fs::write(path, out).map_err(io)
}
