//! Domain types shared by every estimator.
//!
//! A [`Dataset`] holds date-indexed numeric columns; a [`ModelSpec`] names the
//! response, regressors and optional instrument block; [`build_design`] turns
//! the two into the matrices the estimators consume.

use std::fmt;

use chrono::NaiveDate;
use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Name used for the leading ones-column of a design matrix.
pub const INTERCEPT: &str = "C";

/// A quantile level strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    /// Lowest level the estimators accept.
    pub const MIN_ESTIMABLE: f64 = 0.01;
    /// Highest level the estimators accept.
    pub const MAX_ESTIMABLE: f64 = 0.99;

    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(QuantileLevel(tau))
        } else {
            Err(Error::InvalidArgument(format!(
                "quantile level must lie in (0, 1), got {tau}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The mirrored level `1 - tau`.
    pub fn mirror(self) -> Self {
        QuantileLevel(1.0 - self.0)
    }

    /// Rejects levels outside `[0.01, 0.99]`, where fits at a few hundred
    /// observations are dominated by a handful of extreme points.
    pub fn ensure_estimable(self) -> Result<Self> {
        if (Self::MIN_ESTIMABLE..=Self::MAX_ESTIMABLE).contains(&self.0) {
            Ok(self)
        } else {
            Err(Error::InvalidArgument(format!(
                "quantile level {} outside the estimable range [{}, {}]",
                self.0,
                Self::MIN_ESTIMABLE,
                Self::MAX_ESTIMABLE
            )))
        }
    }

    /// The grid 0.1, 0.2, ..., 0.9.
    pub fn decile_grid() -> Vec<QuantileLevel> {
        (1..=9).map(|k| QuantileLevel(k as f64 / 10.0)).collect()
    }
}

impl fmt::Display for QuantileLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}", self.0)
    }
}

/// Date-indexed named numeric columns of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dates: Vec<NaiveDate>,
    columns: IndexMap<String, Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset, checking lengths, date ordering and finiteness.
    pub fn new(dates: Vec<NaiveDate>, columns: IndexMap<String, Vec<f64>>) -> Result<Self> {
        let ds = Self::with_undefined(dates, columns)?;
        for (name, col) in &ds.columns {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "column `{name}` has a non-finite value at row {row}"
                )));
            }
        }
        Ok(ds)
    }

    /// Like [`Dataset::new`] but tolerates NaN cells, which lag and difference
    /// transforms leave at the head of a series.
    pub(crate) fn with_undefined(
        dates: Vec<NaiveDate>,
        columns: IndexMap<String, Vec<f64>>,
    ) -> Result<Self> {
        let n = dates.len();
        if n == 0 {
            return Err(Error::DegenerateSample("dataset has no rows".into()));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Domain(format!(
                "dates must be strictly increasing ({} followed by {})",
                w[0], w[1]
            )));
        }
        for (name, col) in &columns {
            if col.len() != n {
                return Err(Error::Domain(format!(
                    "column `{name}` has {} entries, expected {n}",
                    col.len()
                )));
            }
        }
        Ok(Dataset { dates, columns })
    }

    pub fn n(&self) -> usize {
        self.dates.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn columns(&self) -> &IndexMap<String, Vec<f64>> {
        &self.columns
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }
}

/// A per-column transform applied before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Log,
    Lag(usize),
    Diff,
}

impl Transform {
    /// Annotated column name after applying this transform.
    pub fn label(self, name: &str) -> String {
        match self {
            Transform::Log => format!("log({name})"),
            Transform::Lag(k) => format!("lag{k}({name})"),
            Transform::Diff => format!("diff({name})"),
        }
    }
}

impl std::str::FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "log" => return Ok(Transform::Log),
            "diff" => return Ok(Transform::Diff),
            _ => {}
        }
        let lag = s
            .strip_prefix("lag(")
            .and_then(|rest| rest.strip_suffix(')'))
            .and_then(|k| k.trim().parse::<usize>().ok())
            .filter(|&k| k >= 1);
        lag.map(Transform::Lag)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown transform `{s}`")))
    }
}

/// The endogenous regressor and the instruments used to project it.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentBlock {
    pub endogenous: String,
    /// Extra excluded instruments beyond the exogenous regressors.
    pub instruments: Vec<String>,
    /// Whether the one-period lag of the response joins the instrument set.
    pub lagged_response: bool,
}

impl InstrumentBlock {
    /// Instruments the endogenous variable with the exogenous regressors and
    /// the lagged response only.
    pub fn lagged_response(endogenous: impl Into<String>) -> Self {
        InstrumentBlock {
            endogenous: endogenous.into(),
            instruments: Vec::new(),
            lagged_response: true,
        }
    }

    pub fn excluded_count(&self) -> usize {
        self.instruments.len() + usize::from(self.lagged_response)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub response: String,
    pub regressors: Vec<String>,
    pub intercept: bool,
    pub transforms: IndexMap<String, Vec<Transform>>,
    pub instrument_block: Option<InstrumentBlock>,
}

impl ModelSpec {
    pub fn new(response: impl Into<String>, regressors: Vec<String>, intercept: bool) -> Result<Self> {
        let spec = ModelSpec {
            response: response.into(),
            regressors,
            intercept,
            transforms: IndexMap::new(),
            instrument_block: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_transform(mut self, column: &str, transform: Transform) -> Self {
        self.transforms
            .entry(column.to_string())
            .or_default()
            .push(transform);
        self
    }

    pub fn with_instruments(mut self, block: InstrumentBlock) -> Result<Self> {
        self.instrument_block = Some(block);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.regressors.is_empty() && !self.intercept {
            return Err(Error::InvalidArgument("model has no regressors".into()));
        }
        if self.regressors.contains(&self.response) {
            return Err(Error::InvalidArgument(format!(
                "response `{}` also listed as a regressor",
                self.response
            )));
        }
        for (i, r) in self.regressors.iter().enumerate() {
            if self.regressors[..i].contains(r) {
                return Err(Error::InvalidArgument(format!("regressor `{r}` listed twice")));
            }
        }
        if let Some(block) = &self.instrument_block {
            if !self.regressors.contains(&block.endogenous) {
                return Err(Error::InvalidArgument(format!(
                    "endogenous variable `{}` is not a regressor",
                    block.endogenous
                )));
            }
            if block.excluded_count() == 0 {
                return Err(Error::InvalidArgument(
                    "instrument block needs at least one excluded instrument".into(),
                ));
            }
        }
        Ok(())
    }

    /// Column name of `column` after its transforms have been applied.
    pub fn resolved_name(&self, column: &str) -> String {
        self.transforms
            .get(column)
            .map(|ts| ts.iter().fold(column.to_string(), |acc, t| t.label(&acc)))
            .unwrap_or_else(|| column.to_string())
    }

    /// Design column names: the intercept (if any) followed by the regressors
    /// under their transformed names.
    pub fn design_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.regressors.len() + 1);
        if self.intercept {
            names.push(INTERCEPT.to_string());
        }
        names.extend(self.regressors.iter().map(|r| self.resolved_name(r)));
        names
    }
}

/// Materialized regression inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub names: Vec<String>,
    pub dates: Vec<NaiveDate>,
}

impl Design {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Builds `X` (intercept column first, then regressors in spec order) and `y`,
/// dropping rows where any used column is undefined.
pub fn build_design(dataset: &Dataset, spec: &ModelSpec) -> Result<Design> {
    spec.validate()?;
    let response = dataset.column(&spec.resolved_name(&spec.response))?;
    let regressors = spec
        .regressors
        .iter()
        .map(|r| dataset.column(&spec.resolved_name(r)))
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<usize> = (0..dataset.n())
        .filter(|&i| response[i].is_finite() && regressors.iter().all(|c| c[i].is_finite()))
        .collect();
    if rows.is_empty() {
        return Err(Error::DegenerateSample(
            "no complete rows remain after dropping undefined values".into(),
        ));
    }

    let offset = usize::from(spec.intercept);
    let p = regressors.len() + offset;
    let x = DMatrix::from_fn(rows.len(), p, |r, c| {
        if c < offset {
            1.0
        } else {
            regressors[c - offset][rows[r]]
        }
    });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| response[i]));
    Ok(Design {
        x,
        y,
        names: spec.design_names(),
        dates: rows.iter().map(|&i| dataset.dates()[i]).collect(),
    })
}

/// Seeded MCMC output for one quantile level.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    pub tau: QuantileLevel,
    /// One row per retained draw, one column per design column.
    pub beta_draws: DMatrix<f64>,
    pub sigma_draws: Vec<f64>,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub regressor_names: Vec<String>,
}

impl PosteriorChain {
    pub fn len(&self) -> usize {
        self.sigma_draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma_draws.is_empty()
    }

    pub fn coefficient_draws(&self, k: usize) -> Vec<f64> {
        self.beta_draws.column(k).iter().copied().collect()
    }

    /// Writes one CSV row per draw with the coefficient names and `sigma` as header.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.regressor_names.clone();
        header.push("sigma".into());
        w.write_record(&header)?;
        for (s, sigma) in self.sigma_draws.iter().enumerate() {
            let mut rec: Vec<String> = self.beta_draws.row(s).iter().map(|v| v.to_string()).collect();
            rec.push(sigma.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Which estimator produced a table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    Ols,
    Tsls,
    Qr,
    Bqr,
    Bqr2sls,
}

impl Block {
    pub const ALL: [Block; 5] = [Block::Ols, Block::Tsls, Block::Qr, Block::Bqr, Block::Bqr2sls];

    pub fn key(self) -> &'static str {
        match self {
            Block::Ols => "ols",
            Block::Tsls => "2sls",
            Block::Qr => "qr",
            Block::Bqr => "bqr",
            Block::Bqr2sls => "bqr_2sls",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Block::Ols => "OLS Results",
            Block::Tsls => "2SLS Results",
            Block::Qr => "Quantile regression (check loss)",
            Block::Bqr => "Bayesian quantile regression",
            Block::Bqr2sls => "BQR-based 2SLS",
        }
    }

    /// Mean-regression blocks carry no quantile level.
    pub fn is_mean_block(self) -> bool {
        matches!(self, Block::Ols | Block::Tsls)
    }

    pub fn from_key(key: &str) -> Option<Block> {
        Block::ALL.into_iter().find(|b| b.key() == key)
    }
}

/// Star count for a tail probability: `<0.01` three, `<0.05` two, `<0.10` one.
pub fn significance_stars(prob: f64) -> u8 {
    if prob < 0.01 {
        3
    } else if prob < 0.05 {
        2
    } else if prob < 0.10 {
        1
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefRow {
    pub block: Block,
    pub regressor: String,
    pub tau: Option<QuantileLevel>,
    pub estimate: f64,
    pub interval_lo: f64,
    pub interval_hi: f64,
    pub prob: f64,
    pub stars: u8,
}

impl CoefRow {
    pub fn new(
        block: Block,
        regressor: impl Into<String>,
        tau: Option<QuantileLevel>,
        estimate: f64,
        interval: (f64, f64),
        prob: f64,
    ) -> Self {
        let prob = prob.clamp(0.0, 1.0);
        CoefRow {
            block,
            regressor: regressor.into(),
            tau,
            estimate,
            interval_lo: interval.0,
            interval_hi: interval.1,
            prob,
            stars: significance_stars(prob),
        }
    }
}

/// Coefficient summaries per (estimator, regressor, quantile).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoefficientTable {
    pub rows: Vec<CoefRow>,
}

impl CoefficientTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = CoefRow>) {
        self.rows.extend(rows);
    }

    pub fn block(&self, block: Block) -> impl Iterator<Item = &CoefRow> {
        self.rows.iter().filter(move |r| r.block == block)
    }

    pub fn get(&self, block: Block, regressor: &str, tau: Option<f64>) -> Option<&CoefRow> {
        self.rows.iter().find(|r| {
            r.block == block
                && r.regressor == regressor
                && match (r.tau, tau) {
                    (None, None) => true,
                    (Some(a), Some(b)) => (a.value() - b).abs() < 1e-12,
                    _ => false,
                }
        })
    }
}

/// A named test statistic with its reference-distribution p-value.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

impl TestResult {
    pub fn new(name: impl Into<String>, statistic: f64, df: usize, p_value: f64) -> Self {
        TestResult {
            name: name.into(),
            statistic,
            df,
            p_value: p_value.clamp(0.0, 1.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
        (0..n).map(|i| start + chrono::Days::new(i as u64)).collect()
    }

    fn dataset(cols: &[(&str, Vec<f64>)]) -> Dataset {
        let n = cols[0].1.len();
        let columns = cols.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        Dataset::new(dates(n), columns).unwrap()
    }

    #[test]
    fn intercept_is_leading_ones_column() {
        let ds = dataset(&[("y", vec![1.0, 2.0, 3.0]), ("x", vec![4.0, 5.0, 6.0])]);
        let spec = ModelSpec::new("y", vec!["x".into()], true).unwrap();
        let d = build_design(&ds, &spec).unwrap();
        assert_eq!(d.x.shape(), (3, 2));
        assert!(d.x.column(0).iter().all(|&v| v == 1.0));
        assert_eq!(d.x.column(1).as_slice(), &[4.0, 5.0, 6.0]);
        assert_eq!(d.names, vec!["C", "x"]);
    }

    #[test]
    fn missing_column_is_named() {
        let ds = dataset(&[("y", vec![1.0, 2.0]), ("x", vec![4.0, 5.0])]);
        let spec = ModelSpec::new("y", vec!["Z".into()], true).unwrap();
        match build_design(&ds, &spec) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "Z"),
            other => panic!("expected missing column, got {other:?}"),
        }
    }

    #[test]
    fn undefined_head_rows_are_dropped() {
        let mut x = vec![f64::NAN];
        x.extend((1..10).map(|v| v as f64));
        let y: Vec<f64> = (0..10).map(|v| v as f64 * 2.0).collect();
        let columns = [("y".to_string(), y), ("x".to_string(), x)].into_iter().collect();
        let ds = Dataset::with_undefined(dates(10), columns).unwrap();
        let spec = ModelSpec::new("y", vec!["x".into()], true).unwrap();
        let d = build_design(&ds, &spec).unwrap();
        assert_eq!(d.n(), 9);
        assert_eq!(d.dates[0], dates(10)[1]);
    }

    #[test]
    fn all_rows_undefined_is_degenerate() {
        let columns = [("y".to_string(), vec![1.0]), ("x".to_string(), vec![f64::NAN])]
            .into_iter()
            .collect();
        let ds = Dataset::with_undefined(dates(1), columns).unwrap();
        let spec = ModelSpec::new("y", vec!["x".into()], true).unwrap();
        assert!(matches!(build_design(&ds, &spec), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn dataset_invariants() {
        let mut d = dates(2);
        d.swap(0, 1);
        let cols: IndexMap<_, _> = [("a".to_string(), vec![1.0, 2.0])].into_iter().collect();
        assert!(Dataset::new(d, cols.clone()).is_err());
        assert!(Dataset::new(dates(3), cols.clone()).is_err());
        let bad: IndexMap<_, _> = [("a".to_string(), vec![1.0, f64::INFINITY])].into_iter().collect();
        assert!(Dataset::new(dates(2), bad).is_err());
        assert!(Dataset::new(vec![], IndexMap::new()).is_err());
    }

    #[test]
    fn spec_invariants() {
        assert!(ModelSpec::new("y", vec!["y".into()], true).is_err());
        let spec = ModelSpec::new("y", vec!["a".into(), "b".into()], true).unwrap();
        assert!(spec
            .clone()
            .with_instruments(InstrumentBlock::lagged_response("c"))
            .is_err());
        let none = InstrumentBlock {
            endogenous: "a".into(),
            instruments: vec![],
            lagged_response: false,
        };
        assert!(spec.clone().with_instruments(none).is_err());
        assert!(spec.with_instruments(InstrumentBlock::lagged_response("a")).is_ok());
    }

    #[test]
    fn quantile_levels() {
        assert!(QuantileLevel::new(0.0).is_err());
        assert!(QuantileLevel::new(1.0).is_err());
        assert!(QuantileLevel::new(f64::NAN).is_err());
        assert!(QuantileLevel::new(0.005).unwrap().ensure_estimable().is_err());
        assert!(QuantileLevel::new(0.99).unwrap().ensure_estimable().is_ok());
        let grid = QuantileLevel::decile_grid();
        assert_eq!(grid.len(), 9);
        assert_eq!(grid[4].value(), 0.5);
    }

    #[test]
    fn transform_parsing_and_labels() {
        assert_eq!("log".parse::<Transform>().unwrap(), Transform::Log);
        assert_eq!("lag(2)".parse::<Transform>().unwrap(), Transform::Lag(2));
        assert_eq!(" diff ".parse::<Transform>().unwrap(), Transform::Diff);
        assert!("lag(0)".parse::<Transform>().is_err());
        assert!("sqrt".parse::<Transform>().is_err());
        let spec = ModelSpec::new("y", vec!["x".into()], true)
            .unwrap()
            .with_transform("x", Transform::Log)
            .with_transform("x", Transform::Lag(1));
        assert_eq!(spec.resolved_name("x"), "lag1(log(x))");
        assert_eq!(spec.resolved_name("y"), "y");
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(significance_stars(0.0), 3);
        assert_eq!(significance_stars(0.0024), 3);
        assert_eq!(significance_stars(0.01), 2);
        assert_eq!(significance_stars(0.0426), 2);
        assert_eq!(significance_stars(0.0735), 1);
        assert_eq!(significance_stars(0.10), 0);
        assert_eq!(significance_stars(1.0), 0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn permuting_regressors_permutes_columns(
                data in proptest::collection::vec(-100.0f64..100.0, 12),
                perm in Just(vec![2usize, 0, 1]).prop_shuffle(),
            ) {
                let names = ["a", "b", "c"];
                let mut cols: IndexMap<String, Vec<f64>> = IndexMap::new();
                cols.insert("y".into(), data[0..3].to_vec());
                for (k, name) in names.iter().enumerate() {
                    cols.insert(name.to_string(), data[3 + 3 * k..6 + 3 * k].to_vec());
                }
                let ds = Dataset::new(dates(3), cols).unwrap();
                let base = ModelSpec::new("y", names.iter().map(|s| s.to_string()).collect(), true).unwrap();
                let permuted = ModelSpec::new("y", perm.iter().map(|&i| names[i].to_string()).collect(), true).unwrap();
                let d0 = build_design(&ds, &base).unwrap();
                let d1 = build_design(&ds, &permuted).unwrap();
                prop_assert_eq!(&d0.y, &d1.y);
                prop_assert_eq!(d0.n(), ds.n());
                for (j, &src) in perm.iter().enumerate() {
                    prop_assert_eq!(d1.x.column(j + 1), d0.x.column(src + 1));
                }
            }
        }
    }
}
