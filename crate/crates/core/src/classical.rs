//! Least squares and check-loss quantile regression.
//!
//! [`qr_fit`] minimizes `sum_i rho_tau(y_i - x_i'b)` in two phases:
//!
//! 1. Majorize-minimize on the smoothed loss
//!    `rho_tau(r) - (eps/2) ln(eps + |r|)`, where each step is the weighted
//!    least squares problem `X'WX b = X'Wy + (2 tau - 1) X'1` with
//!    `w_i = 1 / (eps + |r_i|)`. `eps` starts at `1e-2` and is divided by ten
//!    after each stage converges, down to `1e-6` (both scaled by the mean
//!    absolute starting residual).
//! 2. A vertex polish: the `p` observations with the smallest residuals
//!    define an interpolating basis, and simplex-style edge descent moves
//!    between adjacent bases until no edge direction lowers the objective.
//!    The check-loss minimum is attained at such a vertex, so this lands on
//!    an exact minimizer rather than an `eps`-neighbourhood of one.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::QuantileLevel;

/// Check (pinball) loss `u (tau - 1{u < 0})`.
#[inline]
pub fn check_loss(tau: QuantileLevel, u: f64) -> f64 {
    let t = tau.value();
    if u < 0.0 {
        u * (t - 1.0)
    } else {
        u * t
    }
}

/// Sum of check losses of `y - X beta`.
pub fn check_objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, tau: QuantileLevel) -> f64 {
    let fitted = x * beta;
    y.iter()
        .zip(fitted.iter())
        .map(|(yi, fi)| check_loss(tau, yi - fi))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsResult {
    pub coefficients: DVector<f64>,
    pub std_errors: DVector<f64>,
    pub t_stats: DVector<f64>,
    pub p_values: DVector<f64>,
    pub residuals: DVector<f64>,
    pub fitted: DVector<f64>,
    /// `RSS / (n - p)`; zero for an exact fit.
    pub sigma2_hat: f64,
    /// `sigma2_hat (X'X)^{-1}`.
    pub covariance: DMatrix<f64>,
    pub df_resid: usize,
}

impl OlsResult {
    pub fn rss(&self) -> f64 {
        self.residuals.norm_squared()
    }

    /// Two-sided interval `estimate +/- t_{df, (1+mass)/2} se` per coefficient.
    pub fn confidence_interval(&self, k: usize, mass: f64) -> (f64, f64) {
        let half = student_quantile(self.df_resid, 0.5 + mass / 2.0) * self.std_errors[k];
        let b = self.coefficients[k];
        (b - half, b + half)
    }
}

fn student_quantile(df: usize, p: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .map(|t| t.inverse_cdf(p))
        .unwrap_or(f64::NAN)
}

/// Ordinary least squares with classical standard errors and t-based p-values.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsResult> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::InvalidArgument(format!("y has {} rows, X has {n}", y.len())));
    }
    if n <= p {
        return Err(Error::SingularDesign(format!("need n > p, got n = {n}, p = {p}")));
    }
    let (coefficients, xtx_inv) = linalg::least_squares(x, y)?;
    let fitted = x * &coefficients;
    let residuals = y - &fitted;
    let df_resid = n - p;
    let sigma2_hat = residuals.norm_squared() / df_resid as f64;
    let covariance = &xtx_inv * sigma2_hat;
    let std_errors = DVector::from_iterator(p, (0..p).map(|k| covariance[(k, k)].max(0.0).sqrt()));
    let tdist = StudentsT::new(0.0, 1.0, df_resid as f64)
        .map_err(|e| Error::InvalidArgument(format!("t distribution: {e}")))?;
    let mut t_stats = DVector::zeros(p);
    let mut p_values = DVector::zeros(p);
    for k in 0..p {
        let (t, pv) = if std_errors[k] > 0.0 {
            let t = coefficients[k] / std_errors[k];
            (t, (2.0 * tdist.sf(t.abs())).min(1.0))
        } else if coefficients[k] == 0.0 {
            (0.0, 1.0)
        } else {
            (coefficients[k].signum() * f64::INFINITY, 0.0)
        };
        t_stats[k] = t;
        p_values[k] = pv;
    }
    Ok(OlsResult {
        coefficients,
        std_errors,
        t_stats,
        p_values,
        residuals,
        fitted,
        sigma2_hat,
        covariance,
        df_resid,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QrResult {
    pub tau: QuantileLevel,
    pub coefficients: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct QrOptions {
    /// Cap on majorize-minimize iterations across all smoothing stages.
    pub max_iter: usize,
    /// Relative objective improvement below which a stage has converged.
    pub tol: f64,
    /// Starting coefficients; least squares when absent.
    pub start: Option<DVector<f64>>,
}

impl Default for QrOptions {
    fn default() -> Self {
        QrOptions {
            max_iter: 10_000,
            tol: 1e-10,
            start: None,
        }
    }
}

const EPS_START: f64 = 1e-2;
const EPS_END: f64 = 1e-6;

/// Quantile regression at level `tau` by minimizing the check loss.
pub fn qr_fit(x: &DMatrix<f64>, y: &DVector<f64>, tau: QuantileLevel) -> Result<QrResult> {
    qr_fit_with(x, y, tau, &QrOptions::default())
}

pub fn qr_fit_with(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: QuantileLevel,
    opts: &QrOptions,
) -> Result<QrResult> {
    let tau = tau.ensure_estimable()?;
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::InvalidArgument(format!("y has {} rows, X has {n}", y.len())));
    }
    if n <= p {
        return Err(Error::SingularDesign(format!("need n > p, got n = {n}, p = {p}")));
    }

    let mut beta = match &opts.start {
        Some(b) if b.len() == p => {
            linalg::ensure_full_rank(x)?;
            b.clone()
        }
        Some(b) => {
            return Err(Error::InvalidArgument(format!(
                "start vector has length {}, expected {p}",
                b.len()
            )))
        }
        None => linalg::least_squares(x, y)?.0,
    };

    let mut best = beta.clone();
    let mut best_obj = check_objective(x, y, &beta, tau);
    let mut pivots = 0;
    let mut certified = false;
    let consider = |candidate: &DVector<f64>, best: &mut DVector<f64>, best_obj: &mut f64| {
        let obj = check_objective(x, y, candidate, tau);
        if obj <= *best_obj {
            best.copy_from(candidate);
            *best_obj = obj;
        }
    };

    let mut mm = MajorizeMinimize::new(x, y, tau, &beta, opts.tol);
    let mut iterations = 0;
    let mut converged = false;
    let mut capped = false;
    while !certified {
        let done = mm.run_stage(&mut beta, &mut iterations, opts.max_iter)?;
        consider(&beta, &mut best, &mut best_obj);
        let polish = vertex_polish(x, y, tau, &beta);
        pivots += polish.pivots;
        if let Some(v) = &polish.vertex {
            consider(v, &mut best, &mut best_obj);
        }
        certified = polish.certified;
        match done {
            StageEnd::Converged if mm.final_stage() => {
                converged = true;
                break;
            }
            StageEnd::Converged => mm.tighten(),
            StageEnd::IterationCap => {
                capped = true;
                break;
            }
        }
    }
    if certified && !capped {
        converged = true;
    }

    Ok(QrResult {
        tau,
        coefficients: best,
        objective: best_obj,
        iterations: iterations + pivots,
        converged,
    })
}

enum StageEnd {
    Converged,
    IterationCap,
}

/// Iteratively reweighted least squares on the smoothed check loss.
struct MajorizeMinimize<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    tau: QuantileLevel,
    tol: f64,
    scale: f64,
    eps_rel: f64,
    resid: DVector<f64>,
    /// `X'1`, fixed across iterations.
    x_sum: DVector<f64>,
    xtwx: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl<'a> MajorizeMinimize<'a> {
    fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>, tau: QuantileLevel, beta: &DVector<f64>, tol: f64) -> Self {
        let (n, p) = x.shape();
        let resid = y - x * beta;
        let scale = resid.iter().map(|r| r.abs()).sum::<f64>() / n as f64;
        MajorizeMinimize {
            x,
            y,
            tau,
            tol,
            scale,
            eps_rel: EPS_START,
            resid,
            x_sum: DVector::from_iterator(p, x.column_iter().map(|c| c.sum())),
            xtwx: DMatrix::zeros(p, p),
            rhs: DVector::zeros(p),
        }
    }

    fn final_stage(&self) -> bool {
        self.eps_rel <= EPS_END * (1.0 + 1e-9)
    }

    fn tighten(&mut self) {
        self.eps_rel /= 10.0;
    }

    fn smoothed(&self, r: &DVector<f64>, eps: f64) -> f64 {
        r.iter()
            .map(|&ri| check_loss(self.tau, ri) - 0.5 * eps * (eps + ri.abs()).ln())
            .sum()
    }

    /// Iterates at the current smoothing level until the relative decrease of
    /// the smoothed objective drops below `max(tol, eps_rel / 1000)`.
    fn run_stage(&mut self, beta: &mut DVector<f64>, iterations: &mut usize, max_iter: usize) -> Result<StageEnd> {
        if self.scale == 0.0 {
            return Ok(StageEnd::Converged);
        }
        let (x, y) = (self.x, self.y);
        let (n, p) = x.shape();
        let t = self.tau.value();
        let eps = self.eps_rel * self.scale;
        let stage_tol = self.tol.max(self.eps_rel * 1e-3);
        let mut current = self.smoothed(&self.resid, eps);
        loop {
            if *iterations >= max_iter {
                return Ok(StageEnd::IterationCap);
            }
            *iterations += 1;

            self.xtwx.fill(0.0);
            self.rhs.copy_from(&self.x_sum);
            self.rhs *= 2.0 * t - 1.0;
            for i in 0..n {
                let w = 1.0 / (eps + self.resid[i].abs());
                let wy = w * y[i];
                for a in 0..p {
                    let xa = x[(i, a)];
                    self.rhs[a] += xa * wy;
                    let wxa = w * xa;
                    for b in a..p {
                        self.xtwx[(a, b)] += wxa * x[(i, b)];
                    }
                }
            }
            for a in 0..p {
                for b in 0..a {
                    self.xtwx[(a, b)] = self.xtwx[(b, a)];
                }
            }
            let chol = self.xtwx.clone().cholesky().ok_or_else(|| {
                Error::SingularDesign("weighted normal equations not positive definite".into())
            })?;
            let candidate = chol.solve(&self.rhs);
            let cand_resid = y - x * &candidate;
            let next = self.smoothed(&cand_resid, eps);
            if !next.is_finite() {
                return Err(Error::SingularDesign("non-finite iterate in weighted least squares".into()));
            }
            let improvement = current - next;
            if next <= current {
                beta.copy_from(&candidate);
                self.resid = cand_resid;
                current = next;
            }
            if improvement <= stage_tol * current.abs().max(f64::MIN_POSITIVE) {
                return Ok(StageEnd::Converged);
            }
        }
    }
}

/// Picks `p` linearly independent rows, preferring small `|r_i|`.
fn initial_basis(x: &DMatrix<f64>, resid: &DVector<f64>) -> Option<Vec<usize>> {
    let (n, p) = x.shape();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| resid[a].abs().total_cmp(&resid[b].abs()).then(a.cmp(&b)));
    let mut basis = Vec::with_capacity(p);
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(p);
    for i in order {
        let v = x.row(i).transpose();
        let norm = v.norm();
        if norm == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for q in &ortho {
            let c = q.dot(&w);
            w -= q * c;
        }
        let wn = w.norm();
        if wn > 1e-8 * norm {
            ortho.push(w / wn);
            basis.push(i);
            if basis.len() == p {
                return Some(basis);
            }
        }
    }
    None
}

struct Polish {
    vertex: Option<DVector<f64>>,
    pivots: usize,
    /// No edge descends from a nondegenerate vertex, which proves global
    /// optimality.
    certified: bool,
}

/// Collapses exact duplicate observations into weighted rows.
fn collapse_duplicates(x: &DMatrix<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, Vec<f64>) {
    let (n, p) = x.shape();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(n);
    let mut rows: Vec<usize> = Vec::with_capacity(n);
    let mut weights: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        let key: Vec<u64> = std::iter::once(y[i].to_bits())
            .chain(x.row(i).iter().map(|v| v.to_bits()))
            .collect();
        match index.entry(key) {
            Entry::Occupied(e) => weights[*e.get()] += 1.0,
            Entry::Vacant(e) => {
                e.insert(rows.len());
                rows.push(i);
                weights.push(1.0);
            }
        }
    }
    if rows.len() == n {
        return (x.clone(), y.clone(), weights);
    }
    let m = rows.len();
    (
        DMatrix::from_fn(m, p, |r, c| x[(rows[r], c)]),
        DVector::from_fn(m, |r, _| y[rows[r]]),
        weights,
    )
}

/// Simplex-style edge descent over interpolating bases, starting from the
/// basis formed by the smallest residuals at `beta`.
fn vertex_polish(x: &DMatrix<f64>, y: &DVector<f64>, tau: QuantileLevel, beta: &DVector<f64>) -> Polish {
    let (x, y, w) = collapse_duplicates(x, y);
    let (n, p) = x.shape();
    let t = tau.value();
    let resid = &y - &x * beta;
    let zero_tol = 1e-12 * y.amax().max(1.0);
    let Some(mut basis) = initial_basis(&x, &resid) else {
        return Polish {
            vertex: None,
            pivots: 0,
            certified: false,
        };
    };
    let mut in_basis = vec![false; n];
    for &b in &basis {
        in_basis[b] = true;
    }

    let max_pivots = 50 * (n + p);
    let mut pivots = 0;
    let mut stalled = 0;
    let mut last_obj = f64::INFINITY;
    let mut vertex: Option<DVector<f64>> = None;
    loop {
        let xb = DMatrix::from_fn(p, p, |r, c| x[(basis[r], c)]);
        let Some(a) = xb.try_inverse() else {
            return Polish { vertex, pivots, certified: false };
        };
        let yb = DVector::from_iterator(p, basis.iter().map(|&i| y[i]));
        let b_vertex = &a * yb;
        let mut resid = &y - &x * &b_vertex;
        for &i in &basis {
            resid[i] = 0.0;
        }
        let obj: f64 = resid.iter().zip(&w).map(|(&r, &wi)| wi * check_loss(tau, r)).sum();
        vertex = Some(b_vertex);
        if obj < last_obj * (1.0 - 1e-15) {
            stalled = 0;
        } else {
            stalled += 1;
        }
        last_obj = last_obj.min(obj);
        if pivots >= max_pivots || stalled > 2 * p + 10 {
            return Polish { vertex, pivots, certified: false };
        }

        // Column j of G is X times the edge direction freeing basis row j.
        let g = &x * &a;
        let mut degenerate = false;
        let mut best_dir: Option<(usize, f64, f64)> = None;
        for j in 0..p {
            for s in [1.0, -1.0] {
                let wb = w[basis[j]];
                let mut deriv = wb * if s > 0.0 { 1.0 - t } else { t };
                let mut mag = wb;
                for i in 0..n {
                    if in_basis[i] {
                        continue;
                    }
                    let gi = s * g[(i, j)] * w[i];
                    mag += gi.abs();
                    let r = resid[i];
                    deriv += if r > zero_tol {
                        -t * gi
                    } else if r < -zero_tol {
                        (1.0 - t) * gi
                    } else {
                        degenerate = true;
                        (-t * gi).max((1.0 - t) * gi)
                    };
                }
                if deriv < -1e-12 * mag && best_dir.is_none_or(|(_, _, d)| deriv < d) {
                    best_dir = Some((j, s, deriv));
                }
            }
        }
        let Some((j, s, deriv)) = best_dir else {
            return Polish {
                vertex,
                pivots,
                certified: !degenerate,
            };
        };

        // Exact line search on the piecewise-linear restriction.
        let mut breaks: Vec<(f64, f64, usize)> = (0..n)
            .filter(|&i| !in_basis[i] && resid[i].abs() > zero_tol)
            .filter_map(|i| {
                let gi = s * g[(i, j)];
                if gi.abs() <= 1e-12 {
                    return None;
                }
                let step = resid[i] / gi;
                (step > 0.0).then_some((step, w[i] * gi.abs(), i))
            })
            .collect();
        breaks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let mut slope = deriv;
        let mut entering = None;
        for (_, gabs, i) in breaks {
            slope += gabs;
            if slope >= 0.0 {
                entering = Some(i);
                break;
            }
        }
        let Some(enter) = entering else {
            return Polish { vertex, pivots, certified: false };
        };
        in_basis[basis[j]] = false;
        in_basis[enter] = true;
        basis[j] = enter;
        pivots += 1;
    }
}
