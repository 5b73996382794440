//! Bayesian quantile regression with an asymmetric-Laplace working likelihood.
//!
//! The error density at level `tau` with scale `sigma` is
//!
//! ```text
//! p(u) = tau (1 - tau) / sigma * exp(-rho_tau(u) / sigma)
//! ```
//!
//! and it is a location-scale mixture of normals: with latent
//! `v_i ~ Exponential(mean sigma)`,
//!
//! ```text
//! y_i | v_i ~ N(x_i'b + theta v_i, psi2 sigma v_i)
//! theta = (1 - 2 tau) / (tau (1 - tau)),   psi2 = 2 / (tau (1 - tau))
//! ```
//!
//! Conditioning on the latents makes every block conjugate, giving the Gibbs
//! cycle implemented by [`bqr_fit`]:
//!
//! 1. `v_i | b, sigma ~ GIG(1/2, chi_i, psi)` with
//!    `chi_i = (y_i - x_i'b)^2 / (psi2 sigma)`, `psi = theta^2 / (psi2 sigma) + 2 / sigma`;
//! 2. `b | v, sigma ~ N(m, P^{-1})`, `P = X' D X + I / V0`, `D = diag(1 / (psi2 sigma v_i))`;
//! 3. `sigma | b, v ~ InvGamma(a + 3n/2, c + sum (r_i - theta v_i)^2 / (2 psi2 v_i) + sum v_i)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::classical::check_loss;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Block, CoefRow, PosteriorChain, QuantileLevel};
use crate::stats;

/// Log of the asymmetric-Laplace density at residual `u`.
pub fn asl_log_density(u: f64, tau: QuantileLevel, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("scale must be positive, got {sigma}")));
    }
    let t = tau.value();
    Ok((t * (1.0 - t) / sigma).ln() - check_loss(tau, u) / sigma)
}

/// Location (`theta`) and variance (`psi2`) multipliers of the normal mixture.
pub fn mixture_constants(tau: QuantileLevel) -> (f64, f64) {
    let t = tau.value();
    let tt = t * (1.0 - t);
    ((1.0 - 2.0 * t) / tt, 2.0 / tt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BqrPrior {
    pub beta_mean: DVector<f64>,
    /// Isotropic prior variance of each coefficient.
    pub beta_variance: f64,
    pub sigma_shape: f64,
    pub sigma_rate: f64,
}

impl BqrPrior {
    /// `b ~ N(0, 100^2 I)`, `sigma ~ InvGamma(0.01, 0.01)`.
    pub fn weakly_informative(p: usize) -> Self {
        BqrPrior {
            beta_mean: DVector::zeros(p),
            beta_variance: 1e4,
            sigma_shape: 0.01,
            sigma_rate: 0.01,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.beta_mean.len() != p {
            return Err(Error::InvalidArgument(format!(
                "prior mean has length {}, design has {p} columns",
                self.beta_mean.len()
            )));
        }
        let positive = [self.beta_variance, self.sigma_shape, self.sigma_rate];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(
                "prior variance, shape and rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Gibbs run length. `draws` counts every iteration including burn-in; the
/// chain keeps every `thin`-th iteration after the first `burn_in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McmcConfig {
    pub draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            draws: 11_000,
            burn_in: 1_000,
            thin: 1,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn new(draws: usize, burn_in: usize, thin: usize, seed: u64) -> Result<Self> {
        let cfg = McmcConfig {
            draws,
            burn_in,
            thin,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seed(self, seed: u64) -> Self {
        McmcConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 || self.thin == 0 || self.burn_in >= self.draws {
            return Err(Error::InvalidArgument(format!(
                "need draws > burn_in >= 0 and thin >= 1 (draws {}, burn_in {}, thin {})",
                self.draws, self.burn_in, self.thin
            )));
        }
        Ok(())
    }

    /// Number of draws the chain retains.
    pub fn retained(&self) -> usize {
        (self.draws - self.burn_in).div_ceil(self.thin)
    }
}

/// Draws from the reciprocal of an inverse-Gaussian variate with mean `mu`
/// and shape `lambda` (Michael-Schucany-Haas transformation).
fn sample_inverse_gaussian<R: Rng + ?Sized>(rng: &mut R, mu: f64, lambda: f64) -> f64 {
    let nu: f64 = rng.sample(StandardNormal);
    let y = nu * nu;
    let my = mu * y;
    // mu - mu/(2 lambda) (sqrt(4 mu lambda y + (mu y)^2) - mu y), rearranged to avoid cancellation.
    let x = mu - 2.0 * mu * my / (my + (my * my + 4.0 * mu * lambda * y).sqrt());
    let u: f64 = rng.random();
    if u <= mu / (mu + x) {
        x
    } else {
        mu * mu / x
    }
}

/// Draws from GIG(1/2, chi, psi), density proportional to
/// `v^{-1/2} exp(-(chi / v + psi v) / 2)`.
///
/// The reciprocal of such a variate is inverse Gaussian with mean
/// `sqrt(psi / chi)` and shape `psi`; at `chi = 0` it reduces to
/// Gamma(1/2, rate psi / 2).
pub(crate) fn sample_gig_half<R: Rng + ?Sized>(rng: &mut R, chi: f64, psi: f64) -> f64 {
    if chi <= 1e-300 {
        let g = Gamma::new(0.5, 2.0 / psi).expect("gamma parameters are positive");
        return g.sample(rng);
    }
    1.0 / sample_inverse_gaussian(rng, (psi / chi).sqrt(), psi)
}

/// Runs the Gibbs sampler for quantile level `tau`.
pub fn bqr_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: QuantileLevel,
    prior: &BqrPrior,
    cfg: &McmcConfig,
) -> Result<PosteriorChain> {
    let names = (0..x.ncols()).map(|k| format!("b{k}")).collect();
    bqr_fit_named(x, y, tau, prior, cfg, names)
}

pub fn bqr_fit_named(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: QuantileLevel,
    prior: &BqrPrior,
    cfg: &McmcConfig,
    regressor_names: Vec<String>,
) -> Result<PosteriorChain> {
    let tau = tau.ensure_estimable()?;
    cfg.validate()?;
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::InvalidArgument(format!("y has {} rows, X has {n}", y.len())));
    }
    if n <= p {
        return Err(Error::SingularDesign(format!("need n > p, got n = {n}, p = {p}")));
    }
    if regressor_names.len() != p {
        return Err(Error::InvalidArgument(format!(
            "{} regressor names for {p} design columns",
            regressor_names.len()
        )));
    }
    prior.validate(p)?;

    let (mut beta, _) = linalg::least_squares(x, y)?;
    let (theta, psi2) = mixture_constants(tau);
    let prior_precision = 1.0 / prior.beta_variance;
    let prior_shift = &prior.beta_mean * prior_precision;

    // Row-major copy for the per-observation loops.
    let rows: Vec<f64> = (0..n).flat_map(|i| x.row(i).iter().copied().collect::<Vec<_>>()).collect();
    let mut resid: Vec<f64> = (0..n).map(|i| y[i] - dot(&rows[i * p..(i + 1) * p], beta.as_slice())).collect();
    let mut sigma = (resid.iter().map(|&r| check_loss(tau, r)).sum::<f64>() / n as f64).max(1e-8);
    let mut latent = vec![sigma; n];

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let retained = cfg.retained();
    let mut beta_draws = DMatrix::zeros(retained, p);
    let mut sigma_draws = Vec::with_capacity(retained);
    let mut precision = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    let mut noise = DVector::zeros(p);
    let sigma_shape = prior.sigma_shape + 1.5 * n as f64;

    for iter in 0..cfg.draws {
        // Latent scales.
        let psi = theta * theta / (psi2 * sigma) + 2.0 / sigma;
        let floor = 1e-10 * sigma;
        for (v, &r) in latent.iter_mut().zip(&resid) {
            *v = sample_gig_half(&mut rng, r * r / (psi2 * sigma), psi).max(floor);
        }

        // Coefficients.
        precision.fill(0.0);
        for k in 0..p {
            precision[(k, k)] = prior_precision;
        }
        rhs.copy_from(&prior_shift);
        for i in 0..n {
            let w = 1.0 / (psi2 * sigma * latent[i]);
            let target = w * (y[i] - theta * latent[i]);
            let row = &rows[i * p..(i + 1) * p];
            for a in 0..p {
                let wa = w * row[a];
                rhs[a] += row[a] * target;
                for b in a..p {
                    precision[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                precision[(a, b)] = precision[(b, a)];
            }
        }
        let chol = precision.clone().cholesky().ok_or_else(|| Error::SamplerDivergence {
            iteration: iter,
            what: "coefficient precision matrix lost positive definiteness".into(),
        })?;
        let mean = chol.solve(&rhs);
        for z in noise.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        let shift = chol
            .l()
            .transpose()
            .solve_upper_triangular(&noise)
            .ok_or_else(|| Error::SamplerDivergence {
                iteration: iter,
                what: "triangular solve failed".into(),
            })?;
        beta = mean + shift;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::SamplerDivergence {
                iteration: iter,
                what: "non-finite coefficient draw".into(),
            });
        }

        // Scale.
        let mut rate = prior.sigma_rate;
        for i in 0..n {
            let r = y[i] - dot(&rows[i * p..(i + 1) * p], beta.as_slice());
            resid[i] = r;
            let e = r - theta * latent[i];
            rate += e * e / (2.0 * psi2 * latent[i]) + latent[i];
        }
        let g = Gamma::new(sigma_shape, 1.0 / rate).map_err(|e| Error::SamplerDivergence {
            iteration: iter,
            what: format!("scale update: {e}"),
        })?;
        sigma = 1.0 / g.sample(&mut rng);
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::SamplerDivergence {
                iteration: iter,
                what: format!("scale draw {sigma}"),
            });
        }

        if iter >= cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0 {
            let s = sigma_draws.len();
            beta_draws.row_mut(s).copy_from(&beta.transpose());
            sigma_draws.push(sigma);
        }
    }

    Ok(PosteriorChain {
        tau,
        beta_draws,
        sigma_draws,
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        seed: cfg.seed,
        regressor_names,
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Posterior mean, equal-tailed interval and two-sided sign probability per
/// coefficient, tagged as [`Block::Bqr`] rows.
pub fn summarize_chain(chain: &PosteriorChain, interval_mass: f64) -> Result<Vec<CoefRow>> {
    if chain.is_empty() {
        return Err(Error::InvalidArgument("cannot summarize an empty chain".into()));
    }
    if !(interval_mass > 0.0 && interval_mass < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "interval mass must lie in (0, 1), got {interval_mass}"
        )));
    }
    let tail = (1.0 - interval_mass) / 2.0;
    let s = chain.len() as f64;
    let rows = chain
        .regressor_names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut draws = chain.coefficient_draws(k);
            let estimate = stats::mean(&draws);
            draws.sort_by(f64::total_cmp);
            let lo = stats::quantile_sorted(&draws, tail).min(estimate);
            let hi = stats::quantile_sorted(&draws, 1.0 - tail).max(estimate);
            let above = draws.iter().filter(|&&d| d > 0.0).count() as f64 / s;
            let below = draws.iter().filter(|&&d| d < 0.0).count() as f64 / s;
            let prob = (2.0 * above.min(below)).min(1.0);
            CoefRow::new(Block::Bqr, name.clone(), Some(chain.tau), estimate, (lo, hi), prob)
        })
        .collect();
    Ok(rows)
}

/// Posterior median of each coefficient.
pub fn posterior_medians(chain: &PosteriorChain) -> DVector<f64> {
    DVector::from_iterator(
        chain.beta_draws.ncols(),
        (0..chain.beta_draws.ncols()).map(|k| stats::median(&chain.coefficient_draws(k))),
    )
}

/// Minimum retained draws per chain for [`chain_diagnostics`].
pub const MIN_DIAGNOSTIC_DRAWS: usize = 100;

/// Potential scale reduction factor per coefficient. With `split`, each chain
/// is halved first so within-chain drift also inflates the statistic.
pub fn chain_diagnostics(chains: &[PosteriorChain], split: bool) -> Result<Vec<f64>> {
    let first = chains
        .first()
        .ok_or(Error::InsufficientDraws { got: 0, needed: MIN_DIAGNOSTIC_DRAWS })?;
    let p = first.beta_draws.ncols();
    for c in chains {
        if c.len() < MIN_DIAGNOSTIC_DRAWS {
            return Err(Error::InsufficientDraws {
                got: c.len(),
                needed: MIN_DIAGNOSTIC_DRAWS,
            });
        }
        if c.beta_draws.ncols() != p || c.tau != first.tau {
            return Err(Error::InvalidArgument(
                "chains must share the quantile level and coefficient layout".into(),
            ));
        }
    }
    let len = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let (segments, seg_len) = if split {
        (2, len / 2)
    } else {
        (1, len)
    };

    let rhat = (0..p)
        .map(|k| {
            let pieces: Vec<Vec<f64>> = chains
                .iter()
                .flat_map(|c| {
                    let draws = c.coefficient_draws(k);
                    (0..segments)
                        .map(move |s| draws[s * seg_len..(s + 1) * seg_len].to_vec())
                        .collect::<Vec<_>>()
                })
                .collect();
            gelman_rubin(&pieces)
        })
        .collect();
    Ok(rhat)
}

fn gelman_rubin(pieces: &[Vec<f64>]) -> f64 {
    let m = pieces.len() as f64;
    let n = pieces[0].len() as f64;
    let means: Vec<f64> = pieces.iter().map(|c| stats::mean(c)).collect();
    let within = pieces.iter().map(|c| stats::variance(c)).sum::<f64>() / m;
    let between_over_n = if pieces.len() > 1 { stats::variance(&means) } else { 0.0 };
    if within <= 0.0 {
        return if between_over_n <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let pooled = (n - 1.0) / n * within + between_over_n;
    (pooled / within).sqrt()
}
