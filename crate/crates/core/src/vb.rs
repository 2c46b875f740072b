//! Mean-field variational Bayes for Poisson-gamma NMF.
//!
//! The variational family is q(U) q(V) q(S) with entrywise gamma factors and
//! multinomial allocations of each count over the H components. Coordinate
//! updates are closed form; the free energy is evaluated at the optimal
//! allocations for the current gamma factors, so it is the minimum of the
//! functional over q(S) and decreases monotonically under the updates.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::matrix_serde;
use crate::model::{CountDataset, CountSummary, Hyperparameters, ModelDims};
use crate::rng;

/// Gamma shape/rate parameters for every entry of U and V.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalPosterior {
    #[serde(with = "matrix_serde")]
    pub u_shape: Array2<f64>,
    #[serde(with = "matrix_serde")]
    pub u_rate: Array2<f64>,
    #[serde(with = "matrix_serde")]
    pub v_shape: Array2<f64>,
    #[serde(with = "matrix_serde")]
    pub v_rate: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VBConfig {
    pub max_iters: usize,
    /// Stop once one pass lowers the free energy by less than tol·(1 + |F|).
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for VBConfig {
    fn default() -> Self {
        VBConfig { max_iters: 10_000, tol: 1e-8, restarts: 5, seed: 0 }
    }
}

impl VBConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iters == 0 || self.restarts == 0 {
            return Err(Error::config("VB needs tol > 0, max_iters >= 1 and restarts >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VBFit {
    pub posterior: VariationalPosterior,
    pub free_energy: f64,
    /// Free energy at initialization followed by one value per pass.
    pub trajectory: Vec<f64>,
    pub converged: bool,
    /// Restart that produced this fit.
    pub restart: usize,
}

/// Expectations E[x] and E[log x] of entrywise gamma factors.
struct Moments {
    mean: Array2<f64>,
    log_mean: Array2<f64>,
}

fn moments(shape: &Array2<f64>, rate: &Array2<f64>) -> Result<Moments> {
    let mut mean = Array2::zeros(shape.dim());
    let mut log_mean = Array2::zeros(shape.dim());
    for ((idx, &a), &b) in shape.indexed_iter().zip(rate.iter()) {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::numeric(format!("gamma factor out of domain: shape={a}, rate={b}")));
        }
        mean[idx] = a / b;
        log_mean[idx] = digamma(a) - b.ln();
    }
    Ok(Moments { mean, log_mean })
}

fn gamma_kl(shape: f64, rate: f64, prior_shape: f64, prior_rate: f64) -> f64 {
    (shape - prior_shape) * digamma(shape) - ln_gamma(shape) + ln_gamma(prior_shape)
        + prior_shape * (rate.ln() - prior_rate.ln())
        + shape * (prior_rate - rate) / rate
}

/// Softmax over k of E[log u_ik] + E[log v_kj], written into `out`.
/// Returns the log normalizer.
fn responsibilities(lu: &Array2<f64>, lv: &Array2<f64>, i: usize, j: usize, out: &mut [f64]) -> f64 {
    let h = out.len();
    let mut max = f64::NEG_INFINITY;
    for k in 0..h {
        out[k] = lu[[i, k]] + lv[[k, j]];
        max = max.max(out[k]);
    }
    let mut total = 0.0;
    for w in out.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in out.iter_mut() {
        *w /= total;
    }
    max + total.ln()
}

fn check_shapes(post: &VariationalPosterior, data: &CountSummary) -> Result<()> {
    let (m, h) = post.u_shape.dim();
    let n = post.v_shape.ncols();
    if post.u_rate.dim() != (m, h)
        || post.v_shape.dim() != (h, n)
        || post.v_rate.dim() != (h, n)
        || data.shape() != (m, n)
    {
        return Err(Error::domain("variational posterior does not match data shape"));
    }
    Ok(())
}

/// One full coordinate pass: allocations, q(U), allocations again, q(V).
pub fn vb_update_step(
    post: &VariationalPosterior,
    data: &CountSummary,
    hyper: &Hyperparameters,
) -> Result<VariationalPosterior> {
    check_shapes(post, data)?;
    let (m, h) = post.u_shape.dim();
    let n_cols = post.v_shape.ncols();
    let nf = data.n as f64;
    let mut r = vec![0.0; h];

    let mu = moments(&post.u_shape, &post.u_rate)?;
    let mv = moments(&post.v_shape, &post.v_rate)?;
    let mut u_shape = Array2::from_elem((m, h), hyper.phi_u);
    for i in 0..m {
        for j in 0..n_cols {
            let x = data.totals[[i, j]];
            if x == 0 {
                continue;
            }
            responsibilities(&mu.log_mean, &mv.log_mean, i, j, &mut r);
            for k in 0..h {
                u_shape[[i, k]] += x as f64 * r[k];
            }
        }
    }
    let v_row_sums: Vec<f64> = (0..h).map(|k| mv.mean.row(k).sum()).collect();
    let u_rate = Array2::from_shape_fn((m, h), |(_, k)| hyper.theta_u + nf * v_row_sums[k]);

    let mu = moments(&u_shape, &u_rate)?;
    let mut v_shape = Array2::from_elem((h, n_cols), hyper.phi_v);
    for i in 0..m {
        for j in 0..n_cols {
            let x = data.totals[[i, j]];
            if x == 0 {
                continue;
            }
            responsibilities(&mu.log_mean, &mv.log_mean, i, j, &mut r);
            for k in 0..h {
                v_shape[[k, j]] += x as f64 * r[k];
            }
        }
    }
    let u_col_sums: Vec<f64> = (0..h).map(|k| mu.mean.column(k).sum()).collect();
    let v_rate = Array2::from_shape_fn((h, n_cols), |(k, _)| hyper.theta_v + nf * u_col_sums[k]);

    Ok(VariationalPosterior { u_shape, u_rate, v_shape, v_rate })
}

/// Closed-form free energy: KL(q(U)‖prior) + KL(q(V)‖prior) plus the
/// expected negative augmented log-likelihood at the optimal allocations.
pub fn variational_free_energy(
    post: &VariationalPosterior,
    data: &CountSummary,
    hyper: &Hyperparameters,
) -> Result<f64> {
    check_shapes(post, data)?;
    let (m, h) = post.u_shape.dim();
    let n_cols = post.v_shape.ncols();
    let mu = moments(&post.u_shape, &post.u_rate)?;
    let mv = moments(&post.v_shape, &post.v_rate)?;

    let mut kl = 0.0;
    for (&a, &b) in post.u_shape.iter().zip(post.u_rate.iter()) {
        kl += gamma_kl(a, b, hyper.phi_u, hyper.theta_u);
    }
    for (&a, &b) in post.v_shape.iter().zip(post.v_rate.iter()) {
        kl += gamma_kl(a, b, hyper.phi_v, hyper.theta_v);
    }

    let nf = data.n as f64;
    let mut r = vec![0.0; h];
    let mut data_term = data.log_factorial_sum;
    if data.n > 0 {
        data_term += nf * mu.mean.dot(&mv.mean).sum();
    }
    for i in 0..m {
        for j in 0..n_cols {
            let x = data.totals[[i, j]];
            if x > 0 {
                data_term -= x as f64 * responsibilities(&mu.log_mean, &mv.log_mean, i, j, &mut r);
            }
        }
    }
    let total = kl + data_term;
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::numeric("variational free energy is not finite"))
    }
}

/// Random starting point near the fixed point's scale.
pub fn initial_posterior<R: Rng + ?Sized>(
    dims: &ModelDims,
    data: &CountSummary,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> VariationalPosterior {
    let nf = data.n as f64;
    let u_shape = Array2::from_shape_fn((dims.m, dims.h), |_| hyper.phi_u + rng.gen::<f64>());
    let v_shape = Array2::from_shape_fn((dims.h, dims.n), |_| hyper.phi_v + rng.gen::<f64>());
    let u_rate = Array2::from_elem(
        (dims.m, dims.h),
        hyper.theta_u + nf * dims.n as f64 * hyper.phi_v / hyper.theta_v,
    );
    let v_rate = Array2::from_elem(
        (dims.h, dims.n),
        hyper.theta_v + nf * dims.m as f64 * hyper.phi_u / hyper.theta_u,
    );
    VariationalPosterior { u_shape, u_rate, v_shape, v_rate }
}

/// Iterates coordinate passes from `init` until the stopping rule fires.
pub fn fit_from(
    init: VariationalPosterior,
    data: &CountSummary,
    hyper: &Hyperparameters,
    cfg: &VBConfig,
) -> Result<VBFit> {
    let mut post = init;
    let mut current = variational_free_energy(&post, data, hyper)?;
    let mut trajectory = vec![current];
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        post = vb_update_step(&post, data, hyper)?;
        let next = variational_free_energy(&post, data, hyper)?;
        trajectory.push(next);
        let change = (current - next).abs();
        current = next;
        if change < cfg.tol * (1.0 + next.abs()) {
            converged = true;
            break;
        }
    }
    Ok(VBFit { posterior: post, free_energy: current, trajectory, converged, restart: 0 })
}

const INIT_RETRIES: u64 = 3;

/// Best of `cfg.restarts` random restarts, by lowest free energy.
pub fn fit_summary(
    data: &CountSummary,
    hyper: &Hyperparameters,
    dims: &ModelDims,
    cfg: &VBConfig,
) -> Result<VBFit> {
    cfg.validate()?;
    dims.validate()?;
    hyper.validate()?;
    if data.shape() != (dims.m, dims.n) {
        return Err(Error::config("data shape does not match dims"));
    }
    let mut best: Option<VBFit> = None;
    for restart in 0..cfg.restarts {
        let mut outcome = None;
        let mut last_err = None;
        for attempt in 0..=INIT_RETRIES {
            let mut r = rng::stream(rng::derive_seed(cfg.seed, &[restart as u64, attempt]));
            let init = initial_posterior(dims, data, hyper, &mut r);
            match fit_from(init, data, hyper, cfg) {
                Ok(f) => {
                    outcome = Some(f);
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        let mut fitted = match outcome {
            Some(f) => f,
            None => return Err(last_err.unwrap_or_else(|| Error::numeric("VB failed"))),
        };
        fitted.restart = restart;
        if best.as_ref().map_or(true, |b| fitted.free_energy < b.free_energy) {
            best = Some(fitted);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub fn fit(
    data: &CountDataset,
    hyper: &Hyperparameters,
    dims: &ModelDims,
    cfg: &VBConfig,
) -> Result<VBFit> {
    fit_summary(&data.summary(), hyper, dims, cfg)
}

impl VariationalPosterior {
    pub fn mean_u(&self) -> Array2<f64> {
        &self.u_shape / &self.u_rate
    }

    pub fn mean_v(&self) -> Array2<f64> {
        &self.v_shape / &self.v_rate
    }

    /// Prior as a variational posterior (q = prior).
    pub fn prior(dims: &ModelDims, hyper: &Hyperparameters) -> Self {
        VariationalPosterior {
            u_shape: Array2::from_elem((dims.m, dims.h), hyper.phi_u),
            u_rate: Array2::from_elem((dims.m, dims.h), hyper.theta_u),
            v_shape: Array2::from_elem((dims.h, dims.n), hyper.phi_v),
            v_rate: Array2::from_elem((dims.h, dims.n), hyper.theta_v),
        }
    }
}
