//! Synthetic data with known quantile coefficients.
//!
//! Two designs are available. The location-scale design draws regressors
//! uniformly on `[0, 2]` and sets `y = x'beta + (x'gamma) e`, where `x`
//! includes the leading one, so the conditional `tau`-quantile of `y` is
//! `x'(beta + gamma F^{-1}(tau))`. The first entry of `gamma` is the base
//! scale; the remaining entries are scale slopes.
//!
//! The simultaneous design has one endogenous regressor `x1 = pi sum_j z_j + v`
//! driven by excluded instruments `z_j ~ N(0, 1)`, optional exogenous
//! regressors `x2, ...`, and a structural error `u = rho v + sqrt(1 - rho^2) e`
//! with `v, e ~ N(0, 1)`. Least squares on `x1` is then biased by
//! `rho / (m pi^2 + 1)` for `m` instruments.

use chrono::NaiveDate;
use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{Dataset, InstrumentBlock, ModelSpec, QuantileLevel};

pub const MIN_OBSERVATIONS: usize = 50;
const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgpKind {
    LocationScale,
    Simultaneous,
}

impl std::str::FromStr for DgpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "location_scale" | "location-scale" => Ok(DgpKind::LocationScale),
            "simultaneous" => Ok(DgpKind::Simultaneous),
            _ => Err(Error::InvalidArgument(format!("unknown DGP kind `{s}`"))),
        }
    }
}

/// Error distribution, in its standard form: N(0, 1), or Laplace with scale 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Normal,
    Laplace,
}

impl Noise {
    pub fn quantile(self, tau: QuantileLevel) -> f64 {
        let t = tau.value();
        match self {
            Noise::Normal => Normal::standard().inverse_cdf(t),
            Noise::Laplace if t < 0.5 => (2.0 * t).ln(),
            Noise::Laplace => -(2.0 * (1.0 - t)).ln(),
        }
    }

    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Noise::Normal => rng.sample(StandardNormal),
            Noise::Laplace => {
                let u: f64 = rng.random::<f64>() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }
}

impl std::str::FromStr for Noise {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Noise::Normal),
            "laplace" => Ok(Noise::Laplace),
            _ => Err(Error::InvalidArgument(format!("unknown noise `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub kind: DgpKind,
    pub n: usize,
    /// Intercept first.
    pub beta: Vec<f64>,
    /// Base scale first, then scale slopes. Must be zero for the
    /// simultaneous design.
    pub gamma: Vec<f64>,
    pub noise: Noise,
    pub rho: f64,
    /// Excluded instruments in the simultaneous design.
    pub instruments: usize,
    /// First-stage coefficient on each instrument.
    pub pi: f64,
    pub seed: u64,
}

impl DgpConfig {
    pub fn location_scale(n: usize, beta: Vec<f64>, gamma: Vec<f64>, noise: Noise, seed: u64) -> Self {
        DgpConfig {
            kind: DgpKind::LocationScale,
            n,
            beta,
            gamma,
            noise,
            rho: 0.0,
            instruments: 0,
            pi: 0.0,
            seed,
        }
    }

    pub fn simultaneous(n: usize, beta: Vec<f64>, rho: f64, seed: u64) -> Self {
        let p = beta.len();
        DgpConfig {
            kind: DgpKind::Simultaneous,
            n,
            beta,
            gamma: vec![0.0; p],
            noise: Noise::Normal,
            rho,
            instruments: 1,
            pi: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n < MIN_OBSERVATIONS {
            return bad(format!("n = {} is below the minimum of {MIN_OBSERVATIONS}", self.n));
        }
        if self.beta.is_empty() || self.beta.iter().any(|b| !b.is_finite()) {
            return bad("beta must be a non-empty finite vector".into());
        }
        if self.gamma.len() != self.beta.len() || self.gamma.iter().any(|g| !g.is_finite()) {
            return bad(format!("gamma must have {} finite entries", self.beta.len()));
        }
        if self.kind == DgpKind::Simultaneous {
            if !(self.rho.abs() < 1.0) {
                return bad(format!("rho = {} must lie in (-1, 1)", self.rho));
            }
            if self.beta.len() < 2 {
                return bad("the simultaneous design needs an endogenous regressor".into());
            }
            if self.instruments == 0 {
                return bad("the simultaneous design needs at least one instrument".into());
            }
            if self.gamma.iter().any(|&g| g != 0.0) {
                return bad("the simultaneous design has no scale effects; gamma must be zero".into());
            }
            if self.noise != Noise::Normal {
                return bad("the simultaneous design supports normal noise only".into());
            }
            if !self.pi.is_finite() {
                return bad("pi must be finite".into());
            }
        }
        Ok(())
    }
}

/// The population quantities behind a simulated sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    LocationScale {
        beta: Vec<f64>,
        gamma: Vec<f64>,
        noise: Noise,
    },
    Simultaneous {
        beta: Vec<f64>,
        rho: f64,
        pi: f64,
        instruments: usize,
        /// Realized structural errors `u`, row-aligned with the dataset.
        structural_errors: Vec<f64>,
    },
}

impl Truth {
    /// Quantile coefficients (intercept first). In the simultaneous design
    /// these are structural: only the intercept moves with `tau`.
    pub fn quantile_coefficients(&self, tau: QuantileLevel) -> Vec<f64> {
        match self {
            Truth::LocationScale { beta, gamma, noise } => {
                let q = noise.quantile(tau);
                beta.iter().zip(gamma).map(|(b, g)| b + g * q).collect()
            }
            Truth::Simultaneous { beta, .. } => {
                let mut out = beta.clone();
                out[0] += Noise::Normal.quantile(tau);
                out
            }
        }
    }

    /// Probability limit of the least squares slope bias on `x1`.
    pub fn ols_bias(&self) -> Option<f64> {
        match self {
            Truth::Simultaneous { rho, pi, instruments, .. } => {
                Some(rho / (*instruments as f64 * pi * pi + 1.0))
            }
            Truth::LocationScale { .. } => None,
        }
    }
}

/// Regressor column names for `p` coefficients: `x1, ..., x{p-1}`.
pub fn regressor_names(p: usize) -> Vec<String> {
    (1..p).map(|k| format!("x{k}")).collect()
}

pub fn instrument_names(m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("z{j}")).collect()
}

/// The model the simulated data were generated from, with an intercept.
pub fn true_spec(cfg: &DgpConfig) -> Result<ModelSpec> {
    let spec = ModelSpec::new("y", regressor_names(cfg.beta.len()), true)?;
    match cfg.kind {
        DgpKind::LocationScale => Ok(spec),
        DgpKind::Simultaneous => spec.with_instruments(InstrumentBlock {
            endogenous: "x1".into(),
            instruments: instrument_names(cfg.instruments),
            lagged_response: false,
        }),
    }
}

fn calendar(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date");
    (0..n).map(|i| start + chrono::Days::new(i as u64)).collect()
}

pub fn simulate_dgp(cfg: &DgpConfig) -> Result<(Dataset, Truth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match cfg.kind {
        DgpKind::LocationScale => location_scale(cfg, &mut rng),
        DgpKind::Simultaneous => simultaneous(cfg, &mut rng),
    }
}

fn location_scale(cfg: &DgpConfig, rng: &mut ChaCha8Rng) -> Result<(Dataset, Truth)> {
    let (n, p) = (cfg.n, cfg.beta.len());
    let names = regressor_names(p);
    for _ in 0..MAX_ATTEMPTS {
        let xs: Vec<Vec<f64>> = (1..p).map(|_| (0..n).map(|_| 2.0 * rng.random::<f64>()).collect()).collect();
        let scale: Vec<f64> = (0..n)
            .map(|i| cfg.gamma[0] + (1..p).map(|k| cfg.gamma[k] * xs[k - 1][i]).sum::<f64>())
            .collect();
        if scale.iter().any(|&s| !(s > 0.0)) {
            continue;
        }
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let loc = cfg.beta[0] + (1..p).map(|k| cfg.beta[k] * xs[k - 1][i]).sum::<f64>();
                loc + scale[i] * cfg.noise.sample(rng)
            })
            .collect();
        let mut columns = IndexMap::with_capacity(p);
        columns.insert("y".to_string(), y);
        for (name, col) in names.iter().zip(xs) {
            columns.insert(name.clone(), col);
        }
        let truth = Truth::LocationScale {
            beta: cfg.beta.clone(),
            gamma: cfg.gamma.clone(),
            noise: cfg.noise,
        };
        return Ok((Dataset::new(calendar(n), columns)?, truth));
    }
    Err(Error::InvalidArgument(format!(
        "scale x'gamma was non-positive in {MAX_ATTEMPTS} consecutive samples"
    )))
}

fn simultaneous(cfg: &DgpConfig, rng: &mut ChaCha8Rng) -> Result<(Dataset, Truth)> {
    let (n, p, m) = (cfg.n, cfg.beta.len(), cfg.instruments);
    let root = (1.0 - cfg.rho * cfg.rho).sqrt();
    let mut z = vec![vec![0.0; n]; m];
    let mut xs = vec![vec![0.0; n]; p - 1];
    let mut u = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        for zj in z.iter_mut() {
            zj[i] = rng.sample(StandardNormal);
        }
        let v: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        u[i] = cfg.rho * v + root * e;
        xs[0][i] = cfg.pi * z.iter().map(|zj| zj[i]).sum::<f64>() + v;
        for x in xs.iter_mut().skip(1) {
            x[i] = rng.sample(StandardNormal);
        }
        y[i] = cfg.beta[0] + (1..p).map(|k| cfg.beta[k] * xs[k - 1][i]).sum::<f64>() + u[i];
    }
    let mut columns = IndexMap::with_capacity(p + m);
    columns.insert("y".to_string(), y);
    for (name, col) in regressor_names(p).into_iter().zip(xs) {
        columns.insert(name, col);
    }
    for (name, col) in instrument_names(m).into_iter().zip(z) {
        columns.insert(name, col);
    }
    let truth = Truth::Simultaneous {
        beta: cfg.beta.clone(),
        rho: cfg.rho,
        pi: cfg.pi,
        instruments: m,
        structural_errors: u,
    };
    Ok((Dataset::new(calendar(n), columns)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tau(t: f64) -> QuantileLevel {
        QuantileLevel::new(t).unwrap()
    }

    #[test]
    fn zero_scale_slopes_keep_slopes_fixed() {
        let truth = Truth::LocationScale {
            beta: vec![1.0, 2.0, -1.0],
            gamma: vec![1.0, 0.0, 0.0],
            noise: Noise::Normal,
        };
        for t in [0.1, 0.3, 0.9] {
            let b = truth.quantile_coefficients(tau(t));
            assert_eq!(&b[1..], &[2.0, -1.0]);
        }
    }

    #[test]
    fn median_truth_is_beta_for_symmetric_noise() {
        for noise in [Noise::Normal, Noise::Laplace] {
            let truth = Truth::LocationScale {
                beta: vec![1.0, 2.0],
                gamma: vec![0.5, 0.7],
                noise,
            };
            let b = truth.quantile_coefficients(tau(0.5));
            assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn laplace_quantiles_match_cdf() {
        // F(q) = 0.5 exp(q) for q < 0, 1 - 0.5 exp(-q) otherwise.
        for t in [0.05, 0.3, 0.5, 0.8, 0.99] {
            let q = Noise::Laplace.quantile(tau(t));
            let f = if q < 0.0 { 0.5 * q.exp() } else { 1.0 - 0.5 * (-q).exp() };
            assert!((f - t).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = DgpConfig::location_scale(100, vec![1.0, 2.0], vec![1.0, 0.5], Noise::Laplace, 7);
        assert_eq!(simulate_dgp(&cfg).unwrap(), simulate_dgp(&cfg).unwrap());
        let other = DgpConfig { seed: 8, ..cfg.clone() };
        assert_ne!(simulate_dgp(&cfg).unwrap().0, simulate_dgp(&other).unwrap().0);
    }

    #[test]
    fn validation() {
        let ok = DgpConfig::location_scale(50, vec![1.0, 2.0], vec![1.0, 0.0], Noise::Normal, 0);
        assert!(ok.validate().is_ok());
        assert!(DgpConfig { n: 49, ..ok.clone() }.validate().is_err());
        assert!(DgpConfig { gamma: vec![1.0], ..ok.clone() }.validate().is_err());
        let sim = DgpConfig::simultaneous(100, vec![0.0, 1.0], 0.6, 0);
        assert!(sim.validate().is_ok());
        assert!(DgpConfig { rho: 1.0, ..sim.clone() }.validate().is_err());
        assert!(DgpConfig { rho: -1.2, ..sim.clone() }.validate().is_err());
        assert!(DgpConfig { gamma: vec![0.0, 1.0], ..sim }.validate().is_err());
    }

    #[test]
    fn rejection_gives_up_on_impossible_scale() {
        let cfg = DgpConfig::location_scale(60, vec![1.0, 2.0], vec![-1.0, 0.0], Noise::Normal, 0);
        assert!(matches!(simulate_dgp(&cfg), Err(Error::InvalidArgument(_))));
        // Negative slope, positive on most of the support: some attempt succeeds.
        let cfg = DgpConfig::location_scale(60, vec![1.0, 2.0], vec![1.0, -0.48], Noise::Normal, 0);
        let (ds, _) = simulate_dgp(&cfg).unwrap();
        assert_eq!(ds.n(), 60);
    }

    #[test]
    fn simultaneous_shapes_and_bias() {
        let mut cfg = DgpConfig::simultaneous(200, vec![1.0, 2.0, -1.0], 0.6, 3);
        cfg.instruments = 2;
        let (ds, truth) = simulate_dgp(&cfg).unwrap();
        let names: Vec<_> = ds.column_names().collect();
        assert_eq!(names, vec!["y", "x1", "x2", "z1", "z2"]);
        assert!((truth.ols_bias().unwrap() - 0.6 / 3.0).abs() < 1e-12);
        let Truth::Simultaneous { structural_errors, .. } = &truth else { panic!() };
        let y = ds.column("y").unwrap();
        let x1 = ds.column("x1").unwrap();
        let x2 = ds.column("x2").unwrap();
        for i in 0..ds.n() {
            let fit = 1.0 + 2.0 * x1[i] - x2[i] + structural_errors[i];
            assert!((y[i] - fit).abs() < 1e-12);
        }
        let spec = true_spec(&cfg).unwrap();
        assert_eq!(spec.instrument_block.unwrap().instruments, vec!["z1", "z2"]);
    }
}
