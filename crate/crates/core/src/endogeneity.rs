//! Two-stage least squares for a single endogenous regressor.
//!
//! The endogenous column is projected on the instrument matrix `Z`
//! (intercept, the exogenous regressors, the lagged response and any extra
//! instruments); its fitted values replace it in the second-stage design.
//! The same substituted design feeds the Bayesian sampler in [`bqr_2sls`].

use nalgebra::{DMatrix, DVector};

use crate::bayes::{bqr_fit_named, BqrPrior, McmcConfig};
use crate::classical::{ols_fit, OlsResult};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Dataset, Design, ModelSpec, PosteriorChain, QuantileLevel, TestResult, INTERCEPT};
use crate::stats;

/// Stock-Yogo critical value for one endogenous regressor and one excluded
/// instrument at 10% maximal IV size.
pub const STOCK_YOGO_CRITICAL: f64 = 16.38;

/// A design together with its aligned instrument matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct IvDesign {
    pub design: Design,
    pub z: DMatrix<f64>,
    pub z_names: Vec<String>,
    /// Column of `design.x` holding the endogenous regressor.
    pub endogenous_index: usize,
    /// Columns of `z` that are excluded from the structural equation.
    pub excluded: Vec<usize>,
}

/// Builds `Z = [intercept] + exogenous regressors + lag-1 response + extra
/// instruments`, trimming the leading row lost to the lag from both `Z` and
/// the design.
pub fn build_instruments(dataset: &Dataset, spec: &ModelSpec) -> Result<IvDesign> {
    spec.validate()?;
    let block = spec
        .instrument_block
        .as_ref()
        .ok_or_else(|| Error::Precondition("model has no instrument block".into()))?;
    for inst in &block.instruments {
        if spec.regressors.contains(inst) || *inst == spec.response {
            return Err(Error::InvalidArgument(format!(
                "instrument `{inst}` already appears in the structural equation"
            )));
        }
    }

    let response_name = spec.resolved_name(&spec.response);
    let response = dataset.column(&response_name)?;
    let regressors = spec
        .regressors
        .iter()
        .map(|r| dataset.column(&spec.resolved_name(r)))
        .collect::<Result<Vec<_>>>()?;
    let endogenous_pos = spec
        .regressors
        .iter()
        .position(|r| *r == block.endogenous)
        .expect("validated: endogenous variable is a regressor");

    let n_all = dataset.n();
    let lagged: Vec<f64> = (0..n_all)
        .map(|i| if i == 0 { f64::NAN } else { response[i - 1] })
        .collect();

    let mut z_cols: Vec<&[f64]> = Vec::new();
    let mut z_names = Vec::new();
    for (k, r) in spec.regressors.iter().enumerate() {
        if k != endogenous_pos {
            z_cols.push(regressors[k]);
            z_names.push(spec.resolved_name(r));
        }
    }
    let mut excluded_names = Vec::new();
    if block.lagged_response {
        z_cols.push(&lagged);
        excluded_names.push(format!("lag1({response_name})"));
    }
    for inst in &block.instruments {
        z_cols.push(dataset.column(&spec.resolved_name(inst))?);
        excluded_names.push(spec.resolved_name(inst));
    }

    let rows: Vec<usize> = (0..n_all)
        .filter(|&i| {
            response[i].is_finite()
                && regressors.iter().all(|c| c[i].is_finite())
                && z_cols.iter().all(|c| c[i].is_finite())
        })
        .collect();

    let offset = usize::from(spec.intercept);
    let exogenous = spec.regressors.len() - 1;
    let q = offset + z_cols.len();
    if rows.len() <= q {
        return Err(Error::UndersizedSample { n: rows.len(), needed: q });
    }

    let z = DMatrix::from_fn(rows.len(), q, |r, c| {
        if c < offset {
            1.0
        } else {
            z_cols[c - offset][rows[r]]
        }
    });
    let p = offset + regressors.len();
    let x = DMatrix::from_fn(rows.len(), p, |r, c| {
        if c < offset {
            1.0
        } else {
            regressors[c - offset][rows[r]]
        }
    });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| response[i]));

    let mut names = Vec::with_capacity(q);
    if spec.intercept {
        names.push(INTERCEPT.to_string());
    }
    names.extend(z_names);
    names.extend(excluded_names);

    Ok(IvDesign {
        design: Design {
            x,
            y,
            names: spec.design_names(),
            dates: rows.iter().map(|&i| dataset.dates()[i]).collect(),
        },
        z,
        z_names: names,
        endogenous_index: offset + endogenous_pos,
        excluded: (offset + exogenous..q).collect(),
    })
}

/// First-stage F statistic for the excluded instruments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakIdentification {
    pub f_stat: f64,
    pub critical_value: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TslsResult {
    pub coefficients: DVector<f64>,
    /// Second-stage least squares on the substituted design. Its standard
    /// errors ignore first-stage estimation error.
    pub second_stage: OlsResult,
    pub first_stage: OlsResult,
    pub fitted_endogenous: DVector<f64>,
    /// `y - X b` with the actual endogenous column.
    pub structural_residuals: DVector<f64>,
    /// `s^2 (Xhat'Xhat)^{-1}` with `s^2` from the structural residuals.
    pub covariance: DMatrix<f64>,
    pub sargan: TestResult,
    /// Absent when every instrument also appears in `X`.
    pub weak_id: Option<WeakIdentification>,
}

/// Columns of `z` that do not appear verbatim in `x`.
pub fn excluded_columns(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Vec<usize> {
    (0..z.ncols())
        .filter(|&j| !x.column_iter().any(|c| c == z.column(j)))
        .collect()
}

/// Stage one: least squares of the endogenous column on `z`. When `z`
/// already contains that column the fitted values are the column itself.
fn first_stage(x: &DMatrix<f64>, endogenous_index: usize, z: &DMatrix<f64>) -> Result<(OlsResult, DVector<f64>)> {
    let target = x.column(endogenous_index).into_owned();
    let stage = ols_fit(z, &target).map_err(|e| e.context("first stage"))?;
    let fitted = if z.column_iter().any(|c| c == target.column(0)) {
        target
    } else {
        stage.fitted.clone()
    };
    Ok((stage, fitted))
}

fn substituted(x: &DMatrix<f64>, endogenous_index: usize, fitted: &DVector<f64>) -> DMatrix<f64> {
    let mut xs = x.clone();
    xs.set_column(endogenous_index, fitted);
    xs
}

pub fn tsls_fit(x: &DMatrix<f64>, y: &DVector<f64>, endogenous_index: usize, z: &DMatrix<f64>) -> Result<TslsResult> {
    let (n, p) = x.shape();
    if endogenous_index >= p {
        return Err(Error::InvalidArgument(format!(
            "endogenous index {endogenous_index} out of range for {p} columns"
        )));
    }
    if z.nrows() != n || y.len() != n {
        return Err(Error::InvalidArgument("X, y and Z must have the same rows".into()));
    }
    if z.ncols() < p {
        return Err(Error::InvalidArgument(format!(
            "under-identified: {} instruments for {p} coefficients",
            z.ncols()
        )));
    }
    linalg::ensure_full_rank(z).map_err(|e| e.context("instrument matrix"))?;

    let (first, fitted) = first_stage(x, endogenous_index, z)?;
    let xs = substituted(x, endogenous_index, &fitted);
    let second = ols_fit(&xs, y).map_err(|e| e.context("second stage"))?;
    let structural_residuals = y - x * &second.coefficients;
    let (_, xtx_inv) = linalg::least_squares(&xs, y)?;
    let covariance = xtx_inv * (structural_residuals.norm_squared() / second.df_resid as f64);
    let sargan = sargan_test(&structural_residuals, z, p)?;
    let excluded = excluded_columns(x, z);
    let weak_id = if excluded.is_empty() {
        None
    } else {
        Some(weak_id_f(&first, &excluded)?)
    };

    Ok(TslsResult {
        coefficients: second.coefficients.clone(),
        second_stage: second,
        first_stage: first,
        fitted_endogenous: fitted,
        structural_residuals,
        covariance,
        sargan,
        weak_id,
    })
}

/// Over-identification statistic `n R^2` from regressing the structural
/// residuals on `z`, referred to chi-squared with `q - p` degrees of freedom.
pub fn sargan_test(residuals: &DVector<f64>, z: &DMatrix<f64>, regressor_count: usize) -> Result<TestResult> {
    let (n, q) = z.shape();
    if residuals.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} residuals for {n} instrument rows",
            residuals.len()
        )));
    }
    if q < regressor_count {
        return Err(Error::InvalidArgument(format!(
            "{q} instruments cannot identify {regressor_count} coefficients"
        )));
    }
    let df = q - regressor_count;
    if df == 0 {
        return Ok(TestResult::new("Sargan-Hansen", 0.0, 0, 1.0));
    }
    let (coef, _) = linalg::least_squares(z, residuals)?;
    let rss = (residuals - z * coef).norm_squared();
    let has_constant = z.column_iter().any(|c| c.iter().all(|&v| v == c[0]) && c[0] != 0.0);
    let tss = if has_constant {
        let m = residuals.mean();
        residuals.iter().map(|r| (r - m).powi(2)).sum::<f64>()
    } else {
        residuals.norm_squared()
    };
    let r2 = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 0.0 };
    let statistic = n as f64 * r2;
    Ok(TestResult::new("Sargan-Hansen", statistic, df, stats::chi2_sf(statistic, df)))
}

/// Joint F statistic of the excluded instruments in the first stage,
/// `b_e' Cov(b_e)^{-1} b_e / k`, flagged against [`STOCK_YOGO_CRITICAL`].
pub fn weak_id_f(first_stage: &OlsResult, excluded: &[usize]) -> Result<WeakIdentification> {
    if excluded.is_empty() {
        return Err(Error::Precondition("weak-identification F needs an excluded instrument".into()));
    }
    let q = first_stage.coefficients.len();
    if let Some(&bad) = excluded.iter().find(|&&j| j >= q) {
        return Err(Error::InvalidArgument(format!("instrument index {bad} out of range")));
    }
    let k = excluded.len();
    let b = DVector::from_iterator(k, excluded.iter().map(|&j| first_stage.coefficients[j]));
    let cov = DMatrix::from_fn(k, k, |r, c| first_stage.covariance[(excluded[r], excluded[c])]);
    let f_stat = match cov.clone().cholesky() {
        Some(chol) => b.dot(&chol.solve(&b)) / k as f64,
        // Exact first-stage fit: infinitely strong unless the coefficients vanish.
        None if b.iter().all(|&v| v == 0.0) => 0.0,
        None => f64::INFINITY,
    };
    Ok(WeakIdentification {
        f_stat,
        critical_value: STOCK_YOGO_CRITICAL,
        passes: f_stat > STOCK_YOGO_CRITICAL,
    })
}

/// Bayesian quantile regression on the design whose endogenous column has
/// been replaced by its first-stage fitted values.
#[allow(clippy::too_many_arguments)]
pub fn bqr_2sls_design(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    endogenous_index: usize,
    z: &DMatrix<f64>,
    names: Vec<String>,
    tau: QuantileLevel,
    prior: &BqrPrior,
    cfg: &McmcConfig,
) -> Result<PosteriorChain> {
    if endogenous_index >= x.ncols() || z.nrows() != x.nrows() {
        return Err(Error::InvalidArgument("inconsistent 2SLS inputs".into()));
    }
    let (_, fitted) = first_stage(x, endogenous_index, z)?;
    let xs = substituted(x, endogenous_index, &fitted);
    bqr_fit_named(&xs, y, tau, prior, cfg, names)
}

/// [`bqr_2sls_design`] on the instruments built from `spec`.
pub fn bqr_2sls(
    dataset: &Dataset,
    spec: &ModelSpec,
    tau: QuantileLevel,
    prior: &BqrPrior,
    cfg: &McmcConfig,
) -> Result<PosteriorChain> {
    let iv = build_instruments(dataset, spec)?;
    bqr_2sls_design(
        &iv.design.x,
        &iv.design.y,
        iv.endogenous_index,
        &iv.z,
        iv.design.names.clone(),
        tau,
        prior,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::bqr_fit_named;
    use crate::model::InstrumentBlock;
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;
    use indexmap::IndexMap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn dataset(n: usize, names: &[&str], seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
        let dates = (0..n).map(|i| start + chrono::Days::new(i as u64)).collect();
        let cols: IndexMap<String, Vec<f64>> = names
            .iter()
            .map(|k| (k.to_string(), (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()))
            .collect();
        Dataset::new(dates, cols).unwrap()
    }

    #[test]
    fn instrument_counting_matches_lagged_response_design() {
        let regs: Vec<String> = (1..=9).map(|k| format!("x{k}")).collect();
        let mut names = vec!["y"];
        names.extend(regs.iter().map(String::as_str));
        let ds = dataset(10 + 30, &names, 1);
        let spec = ModelSpec::new("y", regs.clone(), true)
            .unwrap()
            .with_instruments(InstrumentBlock::lagged_response("x2"))
            .unwrap();
        let iv = build_instruments(&ds, &spec).unwrap();
        assert_eq!(iv.z.ncols(), 10);
        assert_eq!(iv.design.x.ncols(), 10);
        assert_eq!(iv.z.nrows(), 39);
        assert_eq!(iv.design.n(), 39);
        assert_eq!(iv.endogenous_index, 2);
        assert_eq!(iv.excluded, vec![9]);
        assert_eq!(iv.z_names.last().unwrap(), "lag1(y)");
        // Lagged response column really is y shifted by one row.
        assert_eq!(iv.z[(5, 9)], ds.column("y").unwrap()[5]);
    }

    #[test]
    fn lag_trims_one_row() {
        let ds = dataset(10, &["y", "a", "b"], 2);
        let spec = ModelSpec::new("y", vec!["a".into(), "b".into()], true)
            .unwrap()
            .with_instruments(InstrumentBlock::lagged_response("a"))
            .unwrap();
        let iv = build_instruments(&ds, &spec).unwrap();
        assert_eq!(iv.z.nrows(), 9);
        assert_eq!(iv.design.dates[0], ds.dates()[1]);
    }

    #[test]
    fn missing_block_and_small_samples_are_errors() {
        let ds = dataset(10, &["y", "a", "b"], 3);
        let spec = ModelSpec::new("y", vec!["a".into(), "b".into()], true).unwrap();
        assert!(matches!(build_instruments(&ds, &spec), Err(Error::Precondition(_))));
        let tiny = dataset(4, &["y", "a", "b"], 3);
        let spec = spec.with_instruments(InstrumentBlock::lagged_response("a")).unwrap();
        assert!(matches!(
            build_instruments(&tiny, &spec),
            Err(Error::UndersizedSample { n: 3, needed: 3 })
        ));
    }

    fn random_problem(n: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 3, |_, c| if c == 0 { 1.0 } else { rng.sample(StandardNormal) });
        let y = DVector::from_fn(n, |i, _| 1.0 + x[(i, 1)] - 0.5 * x[(i, 2)] + rng.sample::<f64, _>(StandardNormal));
        (x, y)
    }

    #[test]
    fn self_instrumented_equals_ols() {
        let (x, y) = random_problem(50, 4);
        let iv = tsls_fit(&x, &y, 1, &x).unwrap();
        let ols = ols_fit(&x, &y).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(iv.coefficients[k], ols.coefficients[k], epsilon = 1e-10);
        }
        assert_eq!(iv.sargan.df, 0);
        assert_eq!(iv.sargan.statistic, 0.0);
        assert_eq!(iv.sargan.p_value, 1.0);
        assert!(iv.weak_id.is_none());
        assert_eq!(iv.fitted_endogenous, x.column(1).into_owned());
    }

    #[test]
    fn exactly_identified_matches_closed_form() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, 2.0, 1.0, -1.0]);
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 3.0, 1.0, -2.0]);
        let y = DVector::from_vec(vec![2.0, 1.0, 4.0]);
        let iv = tsls_fit(&x, &y, 1, &z).unwrap();
        let oracle = (z.transpose() * &x).try_inverse().unwrap() * z.transpose() * &y;
        for k in 0..2 {
            assert_abs_diff_eq!(iv.coefficients[k], oracle[k], epsilon = 1e-8);
        }
        assert_eq!(iv.sargan.df, 0);
    }

    #[test]
    fn overidentified_sargan_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 200;
        let z = DMatrix::from_fn(n, 3, |_, c| if c == 0 { 1.0 } else { rng.sample(StandardNormal) });
        let x = DMatrix::from_fn(n, 2, |i, c| {
            if c == 0 {
                1.0
            } else {
                z[(i, 1)] + z[(i, 2)] + rng.sample::<f64, _>(StandardNormal)
            }
        });
        let y = DVector::from_fn(n, |i, _| x[(i, 1)] + rng.sample::<f64, _>(StandardNormal));
        let iv = tsls_fit(&x, &y, 1, &z).unwrap();
        assert_eq!(iv.sargan.df, 1);
        assert!(iv.sargan.statistic >= 0.0);
        assert!((0.0..=1.0).contains(&iv.sargan.p_value));
        let weak = iv.weak_id.unwrap();
        assert!(weak.passes && weak.f_stat > STOCK_YOGO_CRITICAL);
    }

    #[test]
    fn weak_f_matches_restricted_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 120;
        let z = DMatrix::from_fn(n, 4, |_, c| if c == 0 { 1.0 } else { rng.sample(StandardNormal) });
        let target = DVector::from_fn(n, |i, _| 0.3 * z[(i, 2)] + 0.2 * z[(i, 3)] + rng.sample::<f64, _>(StandardNormal));
        let full = ols_fit(&z, &target).unwrap();
        let restricted = ols_fit(&z.columns(0, 2).into_owned(), &target).unwrap();
        let k = 2.0;
        let oracle = ((restricted.rss() - full.rss()) / k) / (full.rss() / (n as f64 - 4.0));
        let f = weak_id_f(&full, &[2, 3]).unwrap();
        assert_abs_diff_eq!(f.f_stat, oracle, epsilon = 1e-8 * oracle.max(1.0));
        assert!(weak_id_f(&full, &[]).is_err());
    }

    #[test]
    fn bqr_2sls_with_self_instruments_is_plain_bqr() {
        let (x, y) = random_problem(80, 5);
        let names: Vec<String> = vec!["C".into(), "a".into(), "b".into()];
        let prior = BqrPrior::weakly_informative(3);
        let cfg = McmcConfig::new(200, 50, 1, 17).unwrap();
        let tau = QuantileLevel::new(0.5).unwrap();
        let iv = bqr_2sls_design(&x, &y, 1, &x, names.clone(), tau, &prior, &cfg).unwrap();
        let plain = bqr_fit_named(&x, &y, tau, &prior, &cfg, names).unwrap();
        assert_eq!(iv, plain);
    }

    #[test]
    fn bqr_2sls_is_seed_deterministic() {
        let ds = dataset(60, &["y", "a", "b"], 6);
        let spec = ModelSpec::new("y", vec!["a".into(), "b".into()], true)
            .unwrap()
            .with_instruments(InstrumentBlock::lagged_response("a"))
            .unwrap();
        let prior = BqrPrior::weakly_informative(3);
        let cfg = McmcConfig::new(150, 50, 1, 23).unwrap();
        let tau = QuantileLevel::new(0.5).unwrap();
        let a = bqr_2sls(&ds, &spec, tau, &prior, &cfg).unwrap();
        let b = bqr_2sls(&ds, &spec, tau, &prior, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.regressor_names, vec!["C", "a", "b"]);
    }
}
