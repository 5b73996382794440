//! Bootstrap Wald tests of slope equality across quantile levels.
//!
//! Rows of `(X, y)` are resampled with replacement (pairs bootstrap) and the
//! quantile regression is refit at every level on the same resample, so the
//! bootstrap covariance captures the dependence between the estimates at
//! different levels. Replication `b` draws its indices from a generator seeded
//! with `derive_seed(cfg.seed, b)`, which makes the statistics independent of
//! the order in which replications run.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classical::{qr_fit, qr_fit_with, QrOptions};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{QuantileLevel, TestResult};
use crate::stats;

/// Label used for pairwise tests in reports.
pub const SLOPE_TEST_NAME: &str = "slope-equality (bootstrap Wald)";
pub const JOINT_TEST_NAME: &str = "joint slope-equality (bootstrap Wald)";

/// Bootstrap variances below this are treated as degenerate.
pub const MIN_BOOTSTRAP_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub seed: u64,
}

impl BootstrapConfig {
    pub const MIN_REPLICATIONS: usize = 100;

    pub fn new(replications: usize, seed: u64) -> Result<Self> {
        if replications < Self::MIN_REPLICATIONS {
            return Err(Error::InvalidArgument(format!(
                "at least {} bootstrap replications required, got {replications}",
                Self::MIN_REPLICATIONS
            )));
        }
        Ok(BootstrapConfig { replications, seed })
    }
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replications: 200,
            seed: 0,
        }
    }
}

/// Full-sample and bootstrap coefficient vectors at each quantile level.
#[derive(Debug, Clone)]
pub struct QuantileBootstrap {
    pub taus: Vec<QuantileLevel>,
    /// `point[j]` is the full-sample fit at `taus[j]`.
    pub point: Vec<DVector<f64>>,
    /// `draws[b][j]` is replication `b` at `taus[j]`.
    pub draws: Vec<Vec<DVector<f64>>>,
}

const MAX_RESAMPLE_ATTEMPTS: usize = 20;

/// Pairs bootstrap of quantile regression coefficients, sharing the resample
/// indices across all levels within a replication.
pub fn bootstrap_quantile_coefficients(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    taus: &[QuantileLevel],
    cfg: &BootstrapConfig,
) -> Result<QuantileBootstrap> {
    if cfg.replications < BootstrapConfig::MIN_REPLICATIONS {
        return Err(Error::InvalidArgument(format!(
            "at least {} bootstrap replications required",
            BootstrapConfig::MIN_REPLICATIONS
        )));
    }
    let (n, p) = x.shape();
    let point = taus
        .iter()
        .map(|&t| qr_fit(x, y, t).map(|f| f.coefficients))
        .collect::<Result<Vec<_>>>()?;

    let mut xb = DMatrix::zeros(n, p);
    let mut yb = DVector::zeros(n);
    let mut draws = Vec::with_capacity(cfg.replications);
    for b in 0..cfg.replications {
        let mut rng = ChaCha8Rng::seed_from_u64(stats::derive_seed(cfg.seed, b as u64));
        let mut attempt = 0;
        let fits = loop {
            for r in 0..n {
                let i = rng.random_range(0..n);
                xb.row_mut(r).copy_from(&x.row(i));
                yb[r] = y[i];
            }
            match fit_all(&xb, &yb, taus, &point) {
                Ok(f) => break f,
                Err(Error::SingularDesign(_)) if attempt + 1 < MAX_RESAMPLE_ATTEMPTS => attempt += 1,
                Err(e) => return Err(e.context(format!("bootstrap replication {b}"))),
            }
        };
        draws.push(fits);
    }
    Ok(QuantileBootstrap {
        taus: taus.to_vec(),
        point,
        draws,
    })
}

fn fit_all(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    taus: &[QuantileLevel],
    starts: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    taus.iter()
        .zip(starts)
        .map(|(&t, start)| {
            let opts = QrOptions {
                start: Some(start.clone()),
                ..QrOptions::default()
            };
            qr_fit_with(x, y, t, &opts).map(|f| f.coefficients)
        })
        .collect()
}

impl QuantileBootstrap {
    /// Restricts to the levels at `indices`, keeping the shared resamples.
    pub fn select(&self, indices: &[usize]) -> QuantileBootstrap {
        QuantileBootstrap {
            taus: indices.iter().map(|&j| self.taus[j]).collect(),
            point: indices.iter().map(|&j| self.point[j].clone()).collect(),
            draws: self
                .draws
                .iter()
                .map(|d| indices.iter().map(|&j| d[j].clone()).collect())
                .collect(),
        }
    }

    /// Bootstrap standard deviation of coefficient `k` at level `taus[j]`.
    pub fn std_error(&self, j: usize, k: usize) -> f64 {
        let xs: Vec<f64> = self.draws.iter().map(|d| d[j][k]).collect();
        stats::variance(&xs).sqrt()
    }

    /// Wald statistic for equality of coefficient `k` across all levels,
    /// using consecutive differences and a pseudo-inverse of their bootstrap
    /// covariance. Degrees of freedom equal the covariance's numerical rank.
    pub fn equality_wald(&self, k: usize, name: &str) -> Result<TestResult> {
        let m = self.taus.len();
        if m < 2 {
            return Err(Error::Precondition("need at least two quantile levels".into()));
        }
        if k >= self.point[0].len() {
            return Err(Error::InvalidArgument(format!("coefficient index {k} out of range")));
        }
        let diffs = |v: &[DVector<f64>]| DVector::from_iterator(m - 1, (1..m).map(|j| v[j][k] - v[j - 1][k]));
        let d_hat = diffs(&self.point);
        let reps: Vec<DVector<f64>> = self.draws.iter().map(|d| diffs(d)).collect();
        let b = reps.len() as f64;
        let mean = reps.iter().fold(DVector::zeros(m - 1), |acc, r| acc + r) / b;
        let cov = reps.iter().fold(DMatrix::zeros(m - 1, m - 1), |acc, r| {
            let c = r - &mean;
            acc + &c * c.transpose()
        }) / (b - 1.0);

        if m == 2 {
            let var = cov[(0, 0)];
            if !(var >= MIN_BOOTSTRAP_VARIANCE) {
                return Err(Error::DegenerateVariance(var));
            }
            let w = d_hat[0] * d_hat[0] / var;
            return Ok(TestResult::new(name, w, 1, stats::chi2_sf(w, 1)));
        }
        let (pinv, rank) = linalg::symmetric_pinv(&cov);
        if rank == 0 || cov.trace() < MIN_BOOTSTRAP_VARIANCE {
            return Err(Error::DegenerateVariance(cov.trace()));
        }
        let w = d_hat.dot(&(&pinv * &d_hat)).max(0.0);
        Ok(TestResult::new(name, w, rank, stats::chi2_sf(w, rank)))
    }
}

/// Tests `beta_k(tau_low) = beta_k(tau_high)` with a bootstrap Wald statistic
/// referred to chi-squared(1).
pub fn slope_equality_test(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    tau_low: QuantileLevel,
    tau_high: QuantileLevel,
    coefficient_index: usize,
    cfg: &BootstrapConfig,
) -> Result<TestResult> {
    if !(tau_low < tau_high) {
        return Err(Error::Precondition(format!(
            "tau_low ({tau_low}) must be below tau_high ({tau_high})"
        )));
    }
    if coefficient_index >= x.ncols() {
        return Err(Error::InvalidArgument(format!(
            "coefficient index {coefficient_index} out of range"
        )));
    }
    bootstrap_quantile_coefficients(x, y, &[tau_low, tau_high], cfg)?.equality_wald(coefficient_index, SLOPE_TEST_NAME)
}

/// Tests equality of coefficient `k` across every level in `taus`.
pub fn joint_slope_test(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    taus: &[QuantileLevel],
    coefficient_index: usize,
    cfg: &BootstrapConfig,
) -> Result<TestResult> {
    if taus.len() < 2 {
        return Err(Error::Precondition("joint test needs at least two quantile levels".into()));
    }
    if taus.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Precondition("quantile grid must be strictly increasing".into()));
    }
    if coefficient_index >= x.ncols() {
        return Err(Error::InvalidArgument(format!(
            "coefficient index {coefficient_index} out of range"
        )));
    }
    let name = if taus.len() == 2 { SLOPE_TEST_NAME } else { JOINT_TEST_NAME };
    bootstrap_quantile_coefficients(x, y, taus, cfg)?.equality_wald(coefficient_index, name)
}
