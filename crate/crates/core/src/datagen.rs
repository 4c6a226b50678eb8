//! Synthetic data models with known ground truth, and CSV ingestion.
//!
//! Both synthetic models have the form
//!
//! ```text
//!   y = xᵀβ₀ + (‖x‖² − tr Σ)/p + ε,    x = Σ^{1/2} z,
//! ```
//!
//! where the quadratic term and the noise make up the nonlinear component
//! `f_NL`. Because the third moments of `z` vanish, `f_NL` is uncorrelated
//! with `x` and `β₀` is the best linear predictor.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, tags, Rng};
use crate::scalar::{count, lit, Real};

/// Design matrix and response, with the ground truth when it is known.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    pub x: DMatrix<T>,
    pub y: DVector<T>,
    /// Best linear coefficient `β₀`.
    pub beta0: Option<DVector<T>>,
    /// Per-row nonlinear component `f_NL(xᵢ) = yᵢ − xᵢᵀβ₀`.
    pub f_nl: Option<DVector<T>>,
    /// Population value of `‖f_NL‖²_{L2}`.
    pub sigma_nl_sq: Option<T>,
}

impl<T: Real> Dataset<T> {
    pub fn new(x: DMatrix<T>, y: DVector<T>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::input("dataset needs at least one row and one column"));
        }
        if x.nrows() != y.len() {
            return Err(Error::input(format!(
                "design has {} rows but response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        linalg::ensure_finite_matrix(&x, "design matrix")?;
        linalg::ensure_finite_vector(&y, "response")?;
        Ok(Self {
            x,
            y,
            beta0: None,
            f_nl: None,
            sigma_nl_sq: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Data aspect ratio `φ = p/n`.
    pub fn phi(&self) -> T {
        count::<T>(self.p()) / count::<T>(self.n())
    }

    /// Restricts the dataset to the given rows, keeping the ground truth.
    pub fn rows(&self, idx: &[usize]) -> Self {
        Self {
            x: linalg::select_rows(&self.x, idx),
            y: linalg::select_entries(&self.y, idx),
            beta0: self.beta0.clone(),
            f_nl: self.f_nl.as_ref().map(|f| linalg::select_entries(f, idx)),
            sigma_nl_sq: self.sigma_nl_sq,
        }
    }

    /// Random train/test split; `test_fraction` of the rows go to the second part.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::param(format!("test fraction {test_fraction} is outside (0, 1)")));
        }
        let n = self.n();
        let n_test = ((n as f64) * test_fraction).round() as usize;
        if n_test == 0 || n_test == n {
            return Err(Error::param(format!(
                "a {test_fraction} split of {n} rows leaves one side empty"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::stream(seed, &[tags::TEST]));
        let (test, train) = idx.split_at(n_test);
        let mut train = train.to_vec();
        let mut test = test.to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok((self.rows(&train), self.rows(&test)))
    }
}

/// Feature covariance.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceSpec<T> {
    Identity,
    /// `Σᵢⱼ = ρ^{|i−j|}`, `ρ ∈ (0, 1)`.
    Ar1 {
        rho: T,
    },
    Explicit(DMatrix<T>),
}

impl<T: Real> CovarianceSpec<T> {
    /// Materializes the `p × p` matrix, validating positive definiteness.
    pub fn matrix(&self, p: usize) -> Result<DMatrix<T>> {
        match self {
            CovarianceSpec::Identity => Ok(DMatrix::identity(p, p)),
            CovarianceSpec::Ar1 { rho } => ar1_covariance(p, *rho),
            CovarianceSpec::Explicit(m) => {
                if m.nrows() != p {
                    return Err(Error::param(format!(
                        "explicit covariance is {}x{}, expected {p}x{p}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                linalg::ensure_spd(m, "explicit covariance")?;
                Ok(m.clone())
            }
        }
    }
}

/// AR(1) covariance `Σᵢⱼ = ρ^{|i−j|}`.
pub fn ar1_covariance<T: Real>(p: usize, rho: T) -> Result<DMatrix<T>> {
    if p == 0 {
        return Err(Error::param("dimension must be positive"));
    }
    if !(rho > T::zero() && rho < T::one()) {
        return Err(Error::param(format!("AR(1) correlation {rho} is outside (0, 1)")));
    }
    let powers: Vec<T> = std::iter::successors(Some(T::one()), |x| Some(*x * rho))
        .take(p)
        .collect();
    Ok(DMatrix::from_fn(p, p, |i, j| powers[i.abs_diff(j)]))
}

/// Distribution of the standardized innovations `zᵢⱼ` and `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Innovation {
    /// `t₅/σ₅` with `σ₅ = √(5/3)`: unit variance, fourth moment 9.
    StudentT5,
    Gaussian,
}

impl Innovation {
    fn fourth_moment(self) -> f64 {
        match self {
            Innovation::StudentT5 => 9.0,
            Innovation::Gaussian => 3.0,
        }
    }

    fn fill(self, rng: &mut Rng, out: &mut [f64]) {
        match self {
            Innovation::StudentT5 => {
                let t5 = StudentT::new(5.0).expect("valid degrees of freedom");
                let scale = (5.0f64 / 3.0).sqrt().recip();
                out.iter_mut().for_each(|x| *x = t5.sample(rng) * scale);
            }
            Innovation::Gaussian => {
                out.iter_mut().for_each(|x| *x = StandardNormal.sample(rng));
            }
        }
    }
}

/// Test-time departures from the training distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Shift<T> {
    /// Covariate shift: draw test features from this covariance instead.
    pub covariance: Option<CovarianceSpec<T>>,
    /// Label shift: replace the noise `ε` by `offset + scale · ε'`.
    pub label: Option<LabelShift<T>>,
}

impl<T> Default for Shift<T> {
    fn default() -> Self {
        Self {
            covariance: None,
            label: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelShift<T> {
    pub offset: T,
    pub noise_scale: T,
}

/// Nonlinear response model with exactly known `β₀` and `‖f_NL‖²`.
#[derive(Debug, Clone)]
pub struct NonlinearModel<T: Real> {
    cov: DMatrix<T>,
    /// `Σ^{1/2}`, `None` for the identity.
    sqrt_cov: Option<DMatrix<T>>,
    trace: T,
    beta0: DVector<T>,
    innovation: Innovation,
    sigma_nl_sq: T,
}

impl<T: Real> NonlinearModel<T> {
    /// Anisotropic model with AR(1) covariance, `t₅` innovations and
    /// `β₀ = (1/5) Σⱼ₌₁⁵ wⱼ` over the top eigenvectors of `Σ`.
    pub fn m_ar1(p: usize, rho: T) -> Result<Self> {
        let cov = ar1_covariance(p, rho)?;
        let (_, vecs) = linalg::sym_eigen(&cov);
        let mut beta0 = DVector::zeros(p);
        for j in 0..p.min(5) {
            let mut w = vecs.column(j).into_owned();
            // Eigenvectors are defined up to sign; fix it by the first clearly nonzero entry.
            let scale = w.amax();
            if let Some(first) = w.iter().find(|x| x.abs() > scale * lit(1e-6)) {
                if *first < T::zero() {
                    w.neg_mut();
                }
            }
            beta0 += w;
        }
        beta0 /= lit::<T>(5.0);
        Self::with_covariance(cov, beta0, Innovation::StudentT5)
    }

    /// Isotropic Gaussian model. `β₀` defaults to the first basis vector.
    pub fn isotropic_gaussian(p: usize, beta0: Option<DVector<T>>) -> Result<Self> {
        if p == 0 {
            return Err(Error::param("dimension must be positive"));
        }
        let beta0 = beta0.unwrap_or_else(|| {
            let mut e = DVector::zeros(p);
            e[0] = T::one();
            e
        });
        Self::with_covariance(DMatrix::identity(p, p), beta0, Innovation::Gaussian)
    }

    pub fn with_covariance(cov: DMatrix<T>, beta0: DVector<T>, innovation: Innovation) -> Result<Self> {
        let p = cov.nrows();
        if beta0.len() != p {
            return Err(Error::param(format!("beta0 has length {}, expected {p}", beta0.len())));
        }
        linalg::ensure_spd(&cov, "covariance")?;
        let is_identity = cov == DMatrix::identity(p, p);
        let sqrt_cov = (!is_identity).then(|| linalg::sym_apply(&cov, |r| r.max(T::zero()).sqrt()));
        let trace = cov.trace();
        // Var(zᵀΣz) = 2 tr Σ² + (μ₄ − 3) Σᵢ Σᵢᵢ²; the noise contributes 1.
        let tr_sq = cov.iter().fold(T::zero(), |acc, x| acc + *x * *x);
        let diag_sq = cov.diagonal().iter().fold(T::zero(), |acc, x| acc + *x * *x);
        let p_t = count::<T>(p);
        let quad_var = (lit::<T>(2.0) * tr_sq + lit::<T>(innovation.fourth_moment() - 3.0) * diag_sq) / (p_t * p_t);
        Ok(Self {
            cov,
            sqrt_cov,
            trace,
            beta0,
            innovation,
            sigma_nl_sq: T::one() + quad_var,
        })
    }

    pub fn p(&self) -> usize {
        self.cov.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<T> {
        &self.cov
    }

    pub fn beta0(&self) -> &DVector<T> {
        &self.beta0
    }

    /// Population `‖f_NL‖²_{L2}` under the training distribution.
    pub fn sigma_nl_sq(&self) -> T {
        self.sigma_nl_sq
    }

    /// Draws `n` training rows.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset<T>> {
        self.sample_shifted(n, seed, &Shift::default())
    }

    /// Draws `n` rows, optionally under covariate and/or label shift.
    pub fn sample_shifted(&self, n: usize, seed: u64, shift: &Shift<T>) -> Result<Dataset<T>> {
        if n == 0 {
            return Err(Error::param("sample size must be positive"));
        }
        let p = self.p();
        let mut z = vec![0.0f64; n * p];
        self.innovation.fill(&mut rng::stream(seed, &[tags::FEATURES]), &mut z);
        // Row-major draw order, so row i only depends on the first (i+1)·p draws.
        let z = DMatrix::from_fn(n, p, |i, j| lit::<T>(z[i * p + j]));
        let x = match &shift.covariance {
            Some(spec) => {
                let cov = spec.matrix(p)?;
                &z * linalg::sym_apply(&cov, |r| r.max(T::zero()).sqrt())
            }
            None => match &self.sqrt_cov {
                Some(s) => &z * s,
                None => z,
            },
        };

        let mut eps = vec![0.0f64; n];
        self.innovation.fill(&mut rng::stream(seed, &[tags::NOISE]), &mut eps);
        let (offset, scale) = shift
            .label
            .map(|l| (l.offset, l.noise_scale))
            .unwrap_or((T::zero(), T::one()));

        let p_t = count::<T>(p);
        let f_nl = DVector::from_fn(n, |i, _| {
            let sq = x.row(i).norm_squared();
            (sq - self.trace) / p_t + offset + scale * lit::<T>(eps[i])
        });
        let y = &x * &self.beta0 + &f_nl;
        Ok(Dataset {
            x,
            y,
            beta0: Some(self.beta0.clone()),
            f_nl: Some(f_nl),
            sigma_nl_sq: Some(self.sigma_nl_sq),
        })
    }
}

/// Anisotropic nonlinear model with AR(1) covariance and `t₅` innovations.
pub fn gen_m_ar1<T: Real>(n: usize, p: usize, rho: T, seed: u64) -> Result<Dataset<T>> {
    NonlinearModel::m_ar1(p, rho)?.sample(n, seed)
}

/// Isotropic Gaussian model used for the random-feature experiments.
pub fn gen_rf_model<T: Real>(n: usize, p: usize, seed: u64, beta0: Option<DVector<T>>) -> Result<Dataset<T>> {
    NonlinearModel::isotropic_gaussian(p, beta0)?.sample(n, seed)
}

/// Gaussian matrix with i.i.d. `N(0, variance)` entries.
pub fn gaussian_matrix<T: Real>(rows: usize, cols: usize, variance: f64, rng: &mut Rng) -> DMatrix<T> {
    let sd = variance.sqrt();
    let mut vals = vec![0.0f64; rows * cols];
    vals.iter_mut()
        .for_each(|v| *v = sd * rng.sample::<f64, _>(StandardNormal));
    DMatrix::from_fn(rows, cols, |i, j| lit(vals[i * cols + j]))
}

/// Options for [`load_csv`].
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Subtract the sample mean of the response.
    pub center_response: bool,
    /// Subtract each feature column's sample mean.
    pub center_features: bool,
}

/// Reads a headed, comma-separated numeric table. The column named
/// `response` becomes `y`; every other column is a feature.
pub fn load_csv<T: Real>(path: impl AsRef<Path>, response: &str, opts: &CsvOptions) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Csv {
            path: path.to_path_buf(),
            row: 0,
            column: String::new(),
            message: format!("{other:?}"),
        },
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(io_err)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(io_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.len() < 2 {
        return Err(Error::input(format!(
            "{}: need at least two columns, found {}",
            path.display(),
            headers.len()
        )));
    }
    let resp = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::input(format!("{}: no column named '{response}'", path.display())))?;

    let mut feats: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        // Line numbers count the header as line 1.
        let line = r + 2;
        let record = record.map_err(io_err)?;
        if record.len() != headers.len() {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                row: line,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                path: path.to_path_buf(),
                row: line,
                column: headers[c].clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Csv {
                    path: path.to_path_buf(),
                    row: line,
                    column: headers[c].clone(),
                    message: format!("'{cell}' is not finite"),
                });
            }
            if c == resp {
                ys.push(value);
            } else {
                feats.push(value);
            }
        }
    }
    let n = ys.len();
    let p = headers.len() - 1;
    if n == 0 {
        return Err(Error::input(format!("{}: no data rows", path.display())));
    }
    let mut x = DMatrix::from_fn(n, p, |i, j| lit::<T>(feats[i * p + j]));
    let mut y = DVector::from_iterator(n, ys.iter().map(|v| lit::<T>(*v)));
    if opts.center_response {
        let mean = y.mean();
        y.add_scalar_mut(-mean);
        if y.amax() <= lit::<T>(1e-12) * mean.abs().max(T::one()) {
            log::warn!("{}: response is constant after centering", path.display());
        }
    }
    if opts.center_features {
        for mut col in x.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
    }
    Dataset::new(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::io::Write;

    #[test]
    fn ar1_small_cases() {
        let s = ar1_covariance::<f64>(2, 0.5).unwrap();
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        let s = ar1_covariance::<f64>(3, 0.5).unwrap();
        assert_relative_eq!(s[(0, 2)], 0.25);
        assert_relative_eq!(s[(2, 0)], 0.25);
    }

    #[test]
    fn ar1_rejects_bad_rho() {
        assert!(matches!(ar1_covariance::<f64>(3, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(ar1_covariance::<f64>(3, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(ar1_covariance::<f64>(3, -0.2), Err(Error::Parameter(_))));
    }

    #[test]
    fn ar1_is_positive_definite() {
        for p in [1, 10, 200, 2000] {
            let s = ar1_covariance::<f64>(p, 0.5).unwrap();
            assert!(s.cholesky().is_some(), "p = {p}");
        }
    }

    #[test]
    fn m_ar1_reconstructs_response() {
        let d = gen_m_ar1::<f64>(200, 40, 0.5, 3).unwrap();
        let recon = &d.x * d.beta0.as_ref().unwrap() + d.f_nl.as_ref().unwrap();
        assert!((recon - &d.y).norm() <= 1e-10 * d.y.norm());
    }

    #[test]
    fn m_ar1_is_deterministic() {
        let a = gen_m_ar1::<f64>(50, 10, 0.5, 11).unwrap();
        let b = gen_m_ar1::<f64>(50, 10, 0.5, 11).unwrap();
        let c = gen_m_ar1::<f64>(50, 10, 0.5, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn m_ar1_signal_norm_at_most_one() {
        let model = NonlinearModel::<f64>::m_ar1(500, 0.5).unwrap();
        // Orthonormal eigenvectors: ‖Σⱼwⱼ‖ = √5, so ‖β₀‖ = 1/√5.
        assert_relative_eq!(model.beta0().norm(), 1.0 / 5f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn rf_model_defaults_to_first_basis_vector() {
        let d = gen_rf_model::<f64>(20, 5, 1, None).unwrap();
        let b = d.beta0.unwrap();
        assert_eq!(b[0], 1.0);
        assert_eq!(b.iter().filter(|x| **x != 0.0).count(), 1);
        assert_relative_eq!(d.sigma_nl_sq.unwrap(), 1.0 + 2.0 / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn split_partitions_rows() {
        let d = gen_rf_model::<f64>(30, 3, 1, None).unwrap();
        let (train, test) = d.split(0.2, 9).unwrap();
        assert_eq!(train.n() + test.n(), 30);
        assert_eq!(test.n(), 6);
        assert!(d.split(1.0, 9).is_err());
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_basic_load() {
        let f = write_tmp("a,b,y\n1,2,3\n4,5,6\n7,8,10\n");
        let d: Dataset<f64> = load_csv(f.path(), "y", &CsvOptions::default()).unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.y[2], 10.0);
        assert_eq!(d.x[(1, 1)], 5.0);
        assert!(d.beta0.is_none() && d.f_nl.is_none());
    }

    #[test]
    fn csv_centering() {
        let f = write_tmp("a,y,b\n1,2,3\n4,5,6\n7,9,10\n");
        let opts = CsvOptions {
            center_response: true,
            center_features: false,
        };
        let d: Dataset<f64> = load_csv(f.path(), "y", &opts).unwrap();
        assert!(d.y.mean().abs() < 1e-14);
        assert_eq!(d.x[(0, 1)], 3.0);
    }

    #[test]
    fn csv_reports_bad_cell() {
        let f = write_tmp("a,b,y\n1,2,3\n4,oops,6\n");
        let err = load_csv::<f64>(f.path(), "y", &CsvOptions::default()).unwrap_err();
        match err {
            Error::Csv { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_needs_two_columns_and_response() {
        let f = write_tmp("y\n1\n2\n");
        assert!(load_csv::<f64>(f.path(), "y", &CsvOptions::default()).is_err());
        let f = write_tmp("a,b\n1,2\n");
        assert!(load_csv::<f64>(f.path(), "y", &CsvOptions::default()).is_err());
    }
}
