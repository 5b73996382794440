//! Runs every requested estimator over a quantile grid and collects the
//! results into one coefficient table and test list.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal};

use crate::bayes::{bqr_fit_named, summarize_chain, BqrPrior, McmcConfig};
use crate::classical::ols_fit;
use crate::endogeneity::{bqr_2sls_design, build_instruments, tsls_fit, IvDesign};
use crate::error::{Error, Result, ResultExt};
use crate::inference::{bootstrap_quantile_coefficients, BootstrapConfig, QuantileBootstrap, SLOPE_TEST_NAME};
use crate::model::{
    build_design, Block, CoefRow, CoefficientTable, Dataset, Design, ModelSpec, PosteriorChain, QuantileLevel,
    TestResult,
};
use crate::pipeline::data::apply_transforms;
use crate::stats::derive_seed;

/// Streams used to derive per-task seeds from the base seeds.
const BQR_STREAM: u64 = 0;
const BQR_2SLS_STREAM: u64 = 1 << 32;

/// Which estimators a study runs, in table order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstimatorSet(Vec<Block>);

impl EstimatorSet {
    pub fn new(blocks: impl IntoIterator<Item = Block>) -> Result<Self> {
        let mut v: Vec<Block> = blocks.into_iter().collect();
        v.sort();
        v.dedup();
        if v.is_empty() {
            return Err(Error::InvalidArgument("no estimators requested".into()));
        }
        Ok(EstimatorSet(v))
    }

    pub fn contains(&self, block: Block) -> bool {
        self.0.contains(&block)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.0
    }

    pub fn needs_instruments(&self) -> bool {
        self.contains(Block::Tsls) || self.contains(Block::Bqr2sls)
    }
}

impl std::str::FromStr for EstimatorSet {
    type Err = Error;

    /// Comma-separated estimator keys, e.g. `ols,bqr`.
    fn from_str(s: &str) -> Result<Self> {
        let blocks = s
            .split(',')
            .map(str::trim)
            .filter(|k| !k.is_empty())
            .map(|k| {
                Block::from_key(&k.replace('-', "_"))
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator `{k}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        EstimatorSet::new(blocks)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub mcmc: McmcConfig,
    /// Defaults to the weakly informative prior for the design width.
    pub prior: Option<BqrPrior>,
    pub bootstrap: BootstrapConfig,
    /// Quantile pairs `(low, high)` whose slopes are compared for every
    /// non-intercept regressor.
    pub slope_pairs: Vec<(QuantileLevel, QuantileLevel)>,
    /// Probability mass of the reported intervals.
    pub interval_mass: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            mcmc: McmcConfig::default(),
            prior: None,
            bootstrap: BootstrapConfig::default(),
            slope_pairs: Vec::new(),
            interval_mass: 0.95,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub table: CoefficientTable,
    pub tests: Vec<TestResult>,
    /// Posterior chains in table order, tagged with their block.
    pub chains: Vec<(Block, PosteriorChain)>,
    /// Rows of the estimation sample.
    pub n: usize,
}

pub fn run_study(
    dataset: &Dataset,
    spec: &ModelSpec,
    taus: &[QuantileLevel],
    estimators: &EstimatorSet,
    cfg: &StudyConfig,
) -> Result<StudyReport> {
    spec.validate()?;
    if !(cfg.interval_mass > 0.0 && cfg.interval_mass < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "interval mass {} must lie in (0, 1)",
            cfg.interval_mass
        )));
    }
    let needs_taus = estimators.blocks().iter().any(|b| !b.is_mean_block());
    if needs_taus && taus.is_empty() {
        return Err(Error::InvalidArgument("quantile grid is empty".into()));
    }
    for &t in taus {
        t.ensure_estimable()?;
    }
    if taus.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("quantile grid must be strictly increasing".into()));
    }
    for &(lo, hi) in &cfg.slope_pairs {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!("slope pair {lo}:{hi} is not increasing")));
        }
    }
    if estimators.contains(Block::Bqr) || estimators.contains(Block::Bqr2sls) {
        cfg.mcmc.validate()?;
    }

    let data = apply_transforms(dataset, spec)?;
    let iv = if estimators.needs_instruments() {
        Some(build_instruments(&data, spec)?)
    } else {
        None
    };
    // With instruments the structural sample loses the lag-1 row, and every
    // estimator uses that common sample so the blocks stay comparable.
    let design = match &iv {
        Some(iv) => iv.design.clone(),
        None => build_design(&data, spec)?,
    };
    let prior = cfg
        .prior
        .clone()
        .unwrap_or_else(|| BqrPrior::weakly_informative(design.p()));

    let mut table = CoefficientTable::default();
    let mut tests = Vec::new();
    let mut chains = Vec::new();

    for &block in estimators.blocks() {
        match block {
            Block::Ols => table.extend(ols_rows(&design, cfg.interval_mass).context_with(|| "ols".into())?),
            Block::Tsls => {
                let iv = iv.as_ref().expect("instruments built for 2sls");
                let (rows, mut t) = tsls_rows(iv, cfg.interval_mass).context_with(|| "2sls".into())?;
                table.extend(rows);
                tests.append(&mut t);
            }
            Block::Qr => {
                let boot = bootstrap_quantile_coefficients(&design.x, &design.y, taus, &cfg.bootstrap)
                    .context_with(|| "qr bootstrap".into())?;
                table.extend(qr_rows(&design.names, &boot, cfg.interval_mass));
            }
            Block::Bqr | Block::Bqr2sls => {
                for (j, &tau) in taus.iter().enumerate() {
                    let (stream, label) = if block == Block::Bqr {
                        (BQR_STREAM, "bqr")
                    } else {
                        (BQR_2SLS_STREAM, "bqr_2sls")
                    };
                    let mcmc = cfg.mcmc.with_seed(derive_seed(cfg.mcmc.seed, stream + j as u64));
                    let chain = if block == Block::Bqr {
                        bqr_fit_named(&design.x, &design.y, tau, &prior, &mcmc, design.names.clone())
                    } else {
                        let iv = iv.as_ref().expect("instruments built for bqr_2sls");
                        bqr_2sls_design(
                            &iv.design.x,
                            &iv.design.y,
                            iv.endogenous_index,
                            &iv.z,
                            iv.design.names.clone(),
                            tau,
                            &prior,
                            &mcmc,
                        )
                    }
                    .and_then(|c| summarize_chain(&c, cfg.interval_mass).map(|rows| (c, rows)))
                    .context_with(|| format!("{label} at tau {tau}"))?;
                    let (chain, rows) = chain;
                    table.extend(rows.into_iter().map(|r| CoefRow { block, ..r }));
                    chains.push((block, chain));
                }
            }
        }
    }

    if !cfg.slope_pairs.is_empty() {
        tests.extend(slope_tests(&design, &cfg.slope_pairs, &cfg.bootstrap)?);
    }

    Ok(StudyReport {
        table,
        tests,
        chains,
        n: design.n(),
    })
}

fn ols_rows(design: &Design, mass: f64) -> Result<Vec<CoefRow>> {
    let fit = ols_fit(&design.x, &design.y)?;
    Ok(design
        .names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            CoefRow::new(
                Block::Ols,
                name,
                None,
                fit.coefficients[k],
                fit.confidence_interval(k, mass),
                fit.p_values[k],
            )
        })
        .collect())
}

/// Normal-theory rows for a coefficient vector and its covariance.
fn wald_rows(block: Block, names: &[String], b: &DVector<f64>, cov: &DMatrix<f64>, mass: f64) -> Vec<CoefRow> {
    let normal = Normal::standard();
    let z = normal.inverse_cdf(0.5 + mass / 2.0);
    names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let se = cov[(k, k)].max(0.0).sqrt();
            let prob = two_sided(b[k], se);
            CoefRow::new(block, name, None, b[k], (b[k] - z * se, b[k] + z * se), prob)
        })
        .collect()
}

fn two_sided(estimate: f64, se: f64) -> f64 {
    if se > 0.0 {
        2.0 * Normal::standard().sf((estimate / se).abs())
    } else if estimate == 0.0 {
        1.0
    } else {
        0.0
    }
}

pub const WEAK_ID_TEST_NAME: &str = "weak identification F (Stock-Yogo 10% critical value 16.38)";

fn tsls_rows(iv: &IvDesign, mass: f64) -> Result<(Vec<CoefRow>, Vec<TestResult>)> {
    let fit = tsls_fit(&iv.design.x, &iv.design.y, iv.endogenous_index, &iv.z)?;
    let rows = wald_rows(Block::Tsls, &iv.design.names, &fit.coefficients, &fit.covariance, mass);
    let mut tests = vec![fit.sargan.clone()];
    if let Some(w) = fit.weak_id {
        let k = iv.excluded.len();
        let df2 = fit.first_stage.df_resid;
        let p = FisherSnedecor::new(k as f64, df2 as f64)
            .map(|f| if w.f_stat.is_finite() { f.sf(w.f_stat) } else { 0.0 })
            .map_err(|e| Error::InvalidArgument(format!("F distribution: {e}")))?;
        tests.push(TestResult::new(WEAK_ID_TEST_NAME, w.f_stat, k, p));
    }
    Ok((rows, tests))
}

/// Check-loss fits with bootstrap standard errors and normal intervals.
fn qr_rows(names: &[String], boot: &QuantileBootstrap, mass: f64) -> Vec<CoefRow> {
    let z = Normal::standard().inverse_cdf(0.5 + mass / 2.0);
    let mut rows = Vec::with_capacity(names.len() * boot.taus.len());
    for (j, &tau) in boot.taus.iter().enumerate() {
        for (k, name) in names.iter().enumerate() {
            let b = boot.point[j][k];
            let se = boot.std_error(j, k);
            rows.push(CoefRow::new(Block::Qr, name, Some(tau), b, (b - z * se, b + z * se), two_sided(b, se)));
        }
    }
    rows
}

/// One bootstrap over every level in the requested pairs, then a Wald test
/// per (pair, slope).
fn slope_tests(design: &Design, pairs: &[(QuantileLevel, QuantileLevel)], cfg: &BootstrapConfig) -> Result<Vec<TestResult>> {
    let mut levels: Vec<QuantileLevel> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    levels.sort_by(|a, b| a.value().total_cmp(&b.value()));
    levels.dedup();
    let boot = bootstrap_quantile_coefficients(&design.x, &design.y, &levels, cfg)
        .context_with(|| "slope-test bootstrap".into())?;
    let index = |t: QuantileLevel| levels.iter().position(|&l| l == t).expect("level present");
    let first_slope = usize::from(design.names.first().map(String::as_str) == Some(crate::model::INTERCEPT));
    let mut out = Vec::new();
    for &(lo, hi) in pairs {
        let pair = boot.select(&[index(lo), index(hi)]);
        for (k, name) in design.names.iter().enumerate().skip(first_slope) {
            let label = format!("{SLOPE_TEST_NAME}: {name}, tau {lo} vs {hi}");
            out.push(
                pair.equality_wald(k, &label)
                    .context_with(|| format!("slope test for {name} at {lo} vs {hi}"))?,
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::dgp::{simulate_dgp, true_spec, DgpConfig, Noise};

    fn tau(t: f64) -> QuantileLevel {
        QuantileLevel::new(t).unwrap()
    }

    #[test]
    fn estimator_set_parsing() {
        let s: EstimatorSet = "bqr, ols".parse().unwrap();
        assert_eq!(s.blocks(), &[Block::Ols, Block::Bqr]);
        let s: EstimatorSet = "bqr-2sls,2sls".parse().unwrap();
        assert!(s.needs_instruments());
        assert!("ols,lasso".parse::<EstimatorSet>().is_err());
        assert!("".parse::<EstimatorSet>().is_err());
    }

    #[test]
    fn ols_only_has_p_rows_and_no_chains() {
        let cfg = DgpConfig::location_scale(80, vec![1.0, 2.0, 3.0], vec![1.0, 0.0, 0.0], Noise::Normal, 1);
        let (ds, _) = simulate_dgp(&cfg).unwrap();
        let spec = true_spec(&cfg).unwrap();
        let est: EstimatorSet = "ols".parse().unwrap();
        let r = run_study(&ds, &spec, &QuantileLevel::decile_grid(), &est, &StudyConfig::default()).unwrap();
        assert_eq!(r.table.len(), 3);
        assert!(r.chains.is_empty() && r.tests.is_empty());
        assert_eq!(r.n, 80);
    }

    #[test]
    fn bqr_rows_per_quantile_and_regressor() {
        let cfg = DgpConfig::location_scale(100, vec![1.0, 2.0], vec![1.0, 0.2], Noise::Normal, 2);
        let (ds, _) = simulate_dgp(&cfg).unwrap();
        let spec = true_spec(&cfg).unwrap();
        let study = StudyConfig {
            mcmc: McmcConfig::new(300, 100, 1, 5).unwrap(),
            slope_pairs: vec![(tau(0.25), tau(0.75))],
            ..StudyConfig::default()
        };
        let taus = [tau(0.25), tau(0.5), tau(0.75)];
        let est: EstimatorSet = "ols,bqr".parse().unwrap();
        let r = run_study(&ds, &spec, &taus, &est, &study).unwrap();
        assert_eq!(r.table.block(Block::Ols).count(), 2);
        assert_eq!(r.table.block(Block::Bqr).count(), 6);
        assert_eq!(r.chains.len(), 3);
        assert_eq!(r.tests.len(), 1);
        assert!(r.tests[0].name.contains("x1"));
        // Distinct derived seeds per quantile.
        assert_ne!(r.chains[0].1.seed, r.chains[1].1.seed);
    }

    #[test]
    fn instrumented_blocks_share_the_sample() {
        let cfg = DgpConfig::simultaneous(150, vec![1.0, 1.0], 0.5, 3);
        let (ds, _) = simulate_dgp(&cfg).unwrap();
        let spec = true_spec(&cfg).unwrap();
        let study = StudyConfig {
            mcmc: McmcConfig::new(300, 100, 1, 5).unwrap(),
            ..StudyConfig::default()
        };
        let est: EstimatorSet = "ols,2sls,bqr_2sls".parse().unwrap();
        let r = run_study(&ds, &spec, &[tau(0.5)], &est, &study).unwrap();
        assert_eq!(r.table.block(Block::Tsls).count(), 2);
        assert_eq!(r.table.block(Block::Bqr2sls).count(), 2);
        let names: Vec<_> = r.tests.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, vec!["Sargan-Hansen", WEAK_ID_TEST_NAME]);
        // One excluded instrument for one endogenous regressor: just identified.
        assert_eq!(r.tests[0].df, 0);
        assert!(r.tests[1].statistic > 16.38);
    }

    #[test]
    fn errors_name_the_estimator_and_quantile() {
        let cfg = DgpConfig::location_scale(60, vec![1.0, 2.0], vec![1.0, 0.0], Noise::Normal, 4);
        let (ds, _) = simulate_dgp(&cfg).unwrap();
        let mut cols = ds.columns().clone();
        cols.insert("x2".into(), ds.column("x1").unwrap().to_vec());
        let ds = Dataset::new(ds.dates().to_vec(), cols).unwrap();
        let spec = ModelSpec::new("y", vec!["x1".into(), "x2".into()], true).unwrap();
        let study = StudyConfig {
            mcmc: McmcConfig::new(200, 100, 1, 5).unwrap(),
            ..StudyConfig::default()
        };
        let est: EstimatorSet = "bqr".parse().unwrap();
        let err = run_study(&ds, &spec, &[tau(0.3)], &est, &study).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bqr at tau 0.300"), "{msg}");
    }
}
