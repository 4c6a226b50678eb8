//! Fixed-point equations over a spectral distribution and the population
//! equivalence paths built from them.
//!
//! For a spectrum `H`, ridge penalty `λ ≥ 0` and aspect ratio `ψ`, the value
//! `v(−λ; ψ)` is the unique nonnegative solution of
//!
//! ```text
//!   1/v = λ + ψ ∫ r / (1 + v r) dH(r).
//! ```
//!
//! The solver works with the equivalent form `f(v) = 1 − λv − ψ ∫ vr/(1+vr) dH`,
//! which is strictly decreasing in `v`, and bisects geometrically.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::linalg;
use crate::scalar::{count, lit, Real};

/// One eigenvalue `r` with probability mass `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom<T> {
    pub r: T,
    pub w: T,
}

/// Discrete spectral distribution `H = Σ wᵢ δ_{rᵢ}` with `Σ wᵢ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDistribution<T> {
    atoms: Vec<Atom<T>>,
}

impl<T: Real> SpectralDistribution<T> {
    /// Builds a distribution from `(r, w)` pairs. Weights must sum to one.
    pub fn new(atoms: impl IntoIterator<Item = (T, T)>) -> Result<Self> {
        let atoms: Vec<Atom<T>> = atoms.into_iter().map(|(r, w)| Atom { r, w }).collect();
        if atoms.is_empty() {
            return Err(Error::param("spectral distribution needs at least one atom"));
        }
        let mut total = T::zero();
        for a in &atoms {
            if !a.r.is_finite() || a.r < T::zero() {
                return Err(Error::param(format!("atom location {} is not a nonnegative real", a.r)));
            }
            if !a.w.is_finite() || a.w < T::zero() {
                return Err(Error::param(format!("atom weight {} is not a nonnegative real", a.w)));
            }
            total += a.w;
        }
        let tol = lit::<T>(1e-12).max(lit::<T>(16.0) * count::<T>(atoms.len()) * T::default_epsilon());
        if (total - T::one()).abs() > tol {
            return Err(Error::param(format!("atom weights sum to {total}, not 1")));
        }
        Ok(Self { atoms })
    }

    /// `δ_r`.
    pub fn point_mass(r: T) -> Result<Self> {
        Self::new([(r, T::one())])
    }

    /// Empirical distribution of the given eigenvalues, each with weight `1/p`.
    /// Exactly repeated values are merged into a single atom.
    pub fn from_eigenvalues(values: &[T]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("no eigenvalues given"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let w = T::one() / count::<T>(values.len());
        let mut atoms: Vec<(T, T)> = Vec::new();
        for r in sorted {
            match atoms.last_mut() {
                Some(last) if last.0 == r => last.1 += w,
                _ => atoms.push((r, w)),
            }
        }
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    /// `∫ g(r) dH(r)`.
    pub fn integrate(&self, g: impl Fn(T) -> T) -> T {
        self.atoms.iter().fold(T::zero(), |acc, a| acc + a.w * g(a.r))
    }

    /// `∫ rᵃ / (1 + v r)ᵇ dH(r)` for finite `v ≥ 0`.
    pub fn moment(&self, v: T, a: i32, b: i32) -> T {
        self.integrate(|r| r.powi(a) / (T::one() + v * r).powi(b))
    }

    /// Mass of the strictly positive atoms.
    pub fn positive_mass(&self) -> T {
        self.integrate(|r| if r > T::zero() { T::one() } else { T::zero() })
    }

    pub fn mean(&self) -> T {
        self.integrate(|r| r)
    }

    /// `∫ vr/(1+vr) dH`, with the limit `H(r > 0)` at `v = ∞`.
    pub fn scaled_first(&self, v: Extended<T>) -> T {
        match v {
            Extended::Infinite => self.positive_mass(),
            Extended::Finite(v) => self.integrate(|r| {
                let t = v * r;
                t / (T::one() + t)
            }),
        }
    }

    /// `∫ (vr/(1+vr))² dH`, with the limit `H(r > 0)` at `v = ∞`.
    pub fn scaled_second(&self, v: Extended<T>) -> T {
        match v {
            Extended::Infinite => self.positive_mass(),
            Extended::Finite(v) => self.integrate(|r| {
                let t = v * r;
                let q = t / (T::one() + t);
                q * q
            }),
        }
    }
}

/// Spectrum of a symmetric positive semidefinite matrix: its `p` eigenvalues
/// with weight `1/p` each.
pub fn spectrum_of<T: Real>(sigma: &DMatrix<T>) -> Result<SpectralDistribution<T>> {
    linalg::ensure_symmetric(sigma, "covariance matrix")?;
    let vals = linalg::sym_eigenvalues(sigma);
    let top = vals.first().copied().unwrap_or(T::zero()).abs();
    let tol = lit::<T>(1e3) * T::default_epsilon() * top.max(T::one());
    let mut clamped = Vec::with_capacity(vals.len());
    for r in vals {
        if r < -tol {
            return Err(Error::input(format!(
                "matrix has negative eigenvalue {r}; a covariance must be positive semidefinite"
            )));
        }
        clamped.push(r.max(T::zero()));
    }
    SpectralDistribution::from_eigenvalues(&clamped)
}

/// Spectrum of the sample covariance `XᵀX/n` of a design matrix.
pub fn sample_spectrum<T: Real>(x: &DMatrix<T>) -> Result<SpectralDistribution<T>> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(Error::input("empty design matrix"));
    }
    linalg::ensure_finite_matrix(x, "design matrix")?;
    let n_t = count::<T>(n);
    let mut vals: Vec<T> = linalg::squared_singular_values(x)
        .into_iter()
        .map(|s| s / n_t)
        .collect();
    vals.resize(p, T::zero());
    SpectralDistribution::from_eigenvalues(&vals)
}

/// Bisection settings shared by the fixed-point and path solvers.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T> {
    /// Relative residual tolerance.
    pub tol: T,
    pub max_iter: usize,
    /// Initial bracket; expanded automatically when it does not straddle the root.
    pub bracket: (T, T),
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::default_tol(),
            max_iter: 200,
            bracket: (lit(1e-12), lit(1e12)),
        }
    }
}

/// Solution of the fixed-point equation with solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointSolution<T> {
    pub v: Extended<T>,
    /// `|1/v − λ − ψ∫r/(1+vr)dH| / (1/v + λ)`; zero on the analytic `v = ∞` branch.
    pub residual: T,
    pub iterations: usize,
}

/// Solves `1/v = λ + ψ ∫ r/(1+vr) dH(r)` for `v ∈ [0, ∞]`.
///
/// Returns `v = +∞` exactly when `λ = 0` and `ψ · H(r > 0) ≤ 1`, the
/// underparameterized ridgeless regime.
pub fn solve_v<T: Real>(
    lambda: T,
    psi: Extended<T>,
    h: &SpectralDistribution<T>,
    opts: &SolverOptions<T>,
) -> Result<FixedPointSolution<T>> {
    if !lambda.is_finite() || lambda < T::zero() {
        return Err(Error::param(format!(
            "ridge penalty must be a nonnegative real, got {lambda}"
        )));
    }
    let mass = h.positive_mass();
    let psi = match psi {
        Extended::Infinite => {
            // 1/v = λ + ∞·∫ r/(1+vr): only v = 0 balances unless H has no positive atoms.
            let v = if mass > T::zero() {
                Extended::Finite(T::zero())
            } else {
                Extended::Finite(lambda).recip()
            };
            return Ok(FixedPointSolution {
                v,
                residual: T::zero(),
                iterations: 0,
            });
        }
        Extended::Finite(psi) => psi,
    };
    if !psi.is_finite() || psi < T::zero() {
        return Err(Error::param(format!("aspect ratio must be nonnegative, got {psi}")));
    }
    if lambda == T::zero() && psi == T::zero() {
        return Err(Error::param("lambda and psi cannot both be zero"));
    }
    if lambda == T::zero() && psi * mass <= T::one() {
        return Ok(FixedPointSolution {
            v: Extended::Infinite,
            residual: T::zero(),
            iterations: 0,
        });
    }

    let f = |v: T| T::one() - lambda * v - psi * h.scaled_first(Extended::Finite(v));
    let rel_residual = |v: T| f(v).abs() / (T::one() + lambda * v);

    let (mut lo, mut hi) = opts.bracket;
    let expand = lit::<T>(1e6);
    let mut iterations = 0;
    while f(lo) <= T::zero() {
        lo /= expand;
        iterations += 1;
        if lo == T::zero() || iterations > opts.max_iter {
            return Err(Error::Convergence {
                residual: rel_residual(lo).to_f64_lossy(),
                iterations,
            });
        }
    }
    while f(hi) >= T::zero() {
        hi *= expand;
        iterations += 1;
        if !hi.is_finite() || iterations > opts.max_iter {
            return Err(Error::Convergence {
                residual: rel_residual(lo).to_f64_lossy(),
                iterations,
            });
        }
    }

    let width_tol = opts.tol * lit(1e-3);
    loop {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi || (hi - lo) <= width_tol * mid {
            break;
        }
        if iterations >= opts.max_iter {
            let v = (lo * hi).sqrt();
            return Err(Error::Convergence {
                residual: rel_residual(v).to_f64_lossy(),
                iterations,
            });
        }
        iterations += 1;
        if f(mid) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v = if rel_residual(lo) <= rel_residual(hi) { lo } else { hi };
    let residual = rel_residual(v);
    if residual > opts.tol {
        return Err(Error::Convergence {
            residual: residual.to_f64_lossy(),
            iterations,
        });
    }
    Ok(FixedPointSolution {
        v: Extended::Finite(v),
        residual,
        iterations,
    })
}

/// Ridge penalty `λ̄` equivalent to the ridgeless full ensemble at aspect
/// ratio `ψ̄`, together with the shared fixed point `v`.
///
/// Solves `1/v = λ̄ + φ∫r/(1+vr)dH` and `1/v = ψ̄∫r/(1+vr)dH`, giving
/// `v = v(0; ψ̄)` and `λ̄ = (1 − φ/ψ̄)/v`.
pub fn lambda_bar<T: Real>(
    phi: T,
    psi_bar: Extended<T>,
    h: &SpectralDistribution<T>,
    opts: &SolverOptions<T>,
) -> Result<(Extended<T>, Extended<T>)> {
    if !(phi > T::zero()) || !phi.is_finite() {
        return Err(Error::param(format!("data aspect ratio must be positive, got {phi}")));
    }
    if psi_bar < Extended::Finite(phi) {
        return Err(Error::param(format!("psi_bar = {psi_bar} is below phi = {phi}")));
    }
    let psi_bar = match psi_bar {
        Extended::Infinite => return Ok((Extended::Infinite, Extended::Finite(T::zero()))),
        Extended::Finite(x) => x,
    };
    let sol = solve_v(T::zero(), Extended::Finite(psi_bar), h, opts)?;
    match sol.v {
        Extended::Infinite => Ok((Extended::Finite(T::zero()), Extended::Infinite)),
        Extended::Finite(v) => {
            let lam = ((T::one() - phi / psi_bar) / v).max(T::zero());
            Ok((Extended::Finite(lam), sol.v))
        }
    }
}

/// Inverse of [`lambda_bar`]: the unique `ψ̄ ∈ [φ ∨ 1, ∞]` whose ridgeless
/// fixed point matches `v(−λ̄; φ)`.
///
/// The second equation of the pair is explicit in `ψ̄` once `v` is known,
/// `ψ̄ = 1 / (v ∫ r/(1+vr) dH)`, so only one bisection (for `v`) is needed.
pub fn psi_bar_from_lambda<T: Real>(
    phi: T,
    lambda_bar: Extended<T>,
    h: &SpectralDistribution<T>,
    opts: &SolverOptions<T>,
) -> Result<Extended<T>> {
    if !(phi > T::zero()) || !phi.is_finite() {
        return Err(Error::param(format!("data aspect ratio must be positive, got {phi}")));
    }
    let lambda_bar = match lambda_bar {
        Extended::Infinite => return Ok(Extended::Infinite),
        Extended::Finite(l) => l,
    };
    let sol = solve_v(lambda_bar, Extended::Finite(phi), h, opts)?;
    match sol.v {
        // Every ψ in [φ, 1/H(r>0)] has v(0; ψ) = ∞; the right end is the unique representative.
        Extended::Infinite => Ok(Extended::Finite(phi.max(T::one() / h.positive_mass()))),
        Extended::Finite(v) if v == T::zero() => Ok(Extended::Infinite),
        Extended::Finite(v) => {
            let s = h.scaled_first(Extended::Finite(v));
            if s <= T::zero() {
                return Ok(Extended::Infinite);
            }
            Ok(Extended::Finite((T::one() / s).max(phi)))
        }
    }
}

/// A sampled point `(λ, ψ)` of an equivalence path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint<T> {
    pub theta: T,
    pub lambda: Extended<T>,
    pub psi: Extended<T>,
}

/// Segment joining `(λ̄, φ)` (full-data ridge) and `(0, ψ̄)` (subsampled
/// ridgeless ensemble) along which the fixed point stays at `v_shared`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalencePath<T> {
    pub lambda_bar: Extended<T>,
    pub phi: T,
    pub psi_bar: Extended<T>,
    pub v_shared: Extended<T>,
}

impl<T: Real> EquivalencePath<T> {
    /// Population path through the ridgeless endpoint `(0, ψ̄)`.
    pub fn through_ridgeless(
        phi: T,
        psi_bar: Extended<T>,
        h: &SpectralDistribution<T>,
        opts: &SolverOptions<T>,
    ) -> Result<Self> {
        let (lambda_bar, v_shared) = lambda_bar(phi, psi_bar, h, opts)?;
        Ok(Self {
            lambda_bar,
            phi,
            psi_bar,
            v_shared,
        })
    }

    /// Population path through the full-data ridge endpoint `(λ̄, φ)`.
    pub fn through_ridge(
        phi: T,
        lambda_bar: Extended<T>,
        h: &SpectralDistribution<T>,
        opts: &SolverOptions<T>,
    ) -> Result<Self> {
        let psi_bar = psi_bar_from_lambda(phi, lambda_bar, h, opts)?;
        let v_shared = match lambda_bar {
            Extended::Infinite => Extended::Finite(T::zero()),
            Extended::Finite(l) => solve_v(l, Extended::Finite(phi), h, opts)?.v,
        };
        Ok(Self {
            lambda_bar,
            phi,
            psi_bar,
            v_shared,
        })
    }

    /// Both endpoints coincide (`ψ̄ = φ`, `λ̄ = 0`).
    pub fn is_degenerate(&self) -> bool {
        self.psi_bar == Extended::Finite(self.phi) && self.lambda_bar == Extended::Finite(T::zero())
    }

    /// The point `(1−θ)(λ̄, φ) + θ(0, ψ̄)`. With an infinite `ψ̄` the
    /// interpolation is carried out in the `1/ψ` coordinate.
    pub fn point(&self, theta: T) -> Result<PathPoint<T>> {
        if !(theta >= T::zero() && theta <= T::one()) {
            return Err(Error::param(format!("theta = {theta} is outside [0, 1]")));
        }
        let keep = T::one() - theta;
        let lambda = match self.lambda_bar {
            Extended::Finite(l) => Extended::Finite(keep * l),
            Extended::Infinite if keep > T::zero() => Extended::Infinite,
            Extended::Infinite => Extended::Finite(T::zero()),
        };
        let psi = match self.psi_bar {
            Extended::Finite(pb) => Extended::Finite(keep * self.phi + theta * pb),
            Extended::Infinite => Extended::Finite(keep / self.phi).recip(),
        };
        Ok(PathPoint { theta, lambda, psi })
    }

    pub fn points(&self, thetas: &[T]) -> Result<Vec<PathPoint<T>>> {
        thetas.iter().map(|&t| self.point(t)).collect()
    }
}

/// `count` equally spaced values of `θ` in `[0, 1]`.
pub fn uniform_thetas<T: Real>(count_: usize) -> Vec<T> {
    match count_ {
        0 => Vec::new(),
        1 => vec![T::zero()],
        c => (0..c).map(|i| count::<T>(i) / count::<T>(c - 1)).collect(),
    }
}
