//! Gibbs sampler for the Poisson-gamma NMF posterior.
//!
//! Each count is split into latent sources s_ijk ~ Poisson(u_ik v_kj) so that
//! both factor matrices have gamma full conditionals. A sweep draws the
//! sources, then U given V, then V given the new U.
//!
//! Allocation probabilities depend only on (i, j), so summing the per-
//! observation multinomials gives a single multinomial over the total count.
//! The chain therefore draws sources once per entry of the summed matrix,
//! which has the same distribution as drawing per observation and summing.

use ndarray::{Array2, Array3, ArrayView2};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CountDataset, CountSummary, FactorPair, Hyperparameters, ModelDims};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    pub burn_in: usize,
    pub thin: usize,
    /// Number of retained draws K.
    pub draws: usize,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig { burn_in: 20_000, thin: 20, draws: 1000, seed: 0 }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 || self.thin == 0 {
            return Err(Error::config("Gibbs draws and thin must be at least 1"));
        }
        Ok(())
    }

    pub fn total_sweeps(&self) -> usize {
        self.burn_in + self.thin * self.draws
    }
}

/// Retained posterior samples in chain order.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub draws: Vec<FactorPair>,
    pub dims: ModelDims,
}

impl PosteriorDraws {
    pub fn new(draws: Vec<FactorPair>, dims: ModelDims) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::domain("posterior draws must be non-empty"));
        }
        for d in &draws {
            d.check_model_dims(&dims)?;
        }
        Ok(PosteriorDraws { draws, dims })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Posterior mean of the rate matrix UV.
    pub fn mean_rates(&self) -> Array2<f64> {
        let mut acc = Array2::zeros((self.dims.m, self.dims.n));
        for d in &self.draws {
            acc += &d.rates();
        }
        acc / self.draws.len() as f64
    }
}

/// Latent allocations s[i, j, k] of one count matrix over the H components.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSources {
    pub s: Array3<u64>,
}

impl LatentSources {
    /// Σ_j s_ijk as an M×H matrix.
    pub fn row_sums(&self) -> Array2<u64> {
        let (m, _, h) = self.s.dim();
        Array2::from_shape_fn((m, h), |(i, k)| self.s.slice(ndarray::s![i, .., k]).sum())
    }

    /// Σ_i s_ijk as an H×N matrix.
    pub fn col_sums(&self) -> Array2<u64> {
        let (_, n, h) = self.s.dim();
        Array2::from_shape_fn((h, n), |(k, j)| self.s.slice(ndarray::s![.., j, k]).sum())
    }

    /// Σ_k s_ijk, which must reproduce the counts.
    pub fn allocated_counts(&self) -> Array2<u64> {
        self.s.sum_axis(ndarray::Axis(2))
    }
}

/// Gamma(shape, rate) draw. Shapes below one go through the boosted
/// Gamma(shape + 1) · U^(1/shape) construction inside `rand_distr`.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(Error::numeric(format!("invalid gamma conditional: shape={shape}, rate={rate}")));
    }
    let dist = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::numeric(e.to_string()))?;
    // An exact zero would leave an allocation with no support.
    Ok(dist.sample(rng).max(f64::MIN_POSITIVE))
}

/// Draws U and V independently from the prior.
pub fn sample_prior<R: Rng + ?Sized>(
    dims: &ModelDims,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<FactorPair> {
    let mut u = Array2::zeros((dims.m, dims.h));
    for x in u.iter_mut() {
        *x = sample_gamma(hyper.phi_u, hyper.theta_u, rng)?;
    }
    let mut v = Array2::zeros((dims.h, dims.n));
    for x in v.iter_mut() {
        *x = sample_gamma(hyper.phi_v, hyper.theta_v, rng)?;
    }
    Ok(FactorPair { u, v })
}

/// Splits every count x_ij into H sources, multinomially with
/// probabilities proportional to u_ik v_kj.
pub fn sample_latent_sources<R: Rng + ?Sized>(
    x: ArrayView2<u64>,
    params: &FactorPair,
    rng: &mut R,
) -> Result<LatentSources> {
    let (m, n) = x.dim();
    let h = params.inner();
    if params.rows() != m || params.cols() != n {
        return Err(Error::domain("count matrix and factors disagree in shape"));
    }
    let mut s = Array3::<u64>::zeros((m, n, h));
    let mut weights = vec![0.0; h];
    for i in 0..m {
        for j in 0..n {
            let count = x[[i, j]];
            if count == 0 {
                continue;
            }
            for (k, w) in weights.iter_mut().enumerate() {
                *w = params.u[[i, k]] * params.v[[k, j]];
            }
            let mut mass: f64 = weights.iter().sum();
            if !(mass > 0.0 && mass.is_finite()) {
                return Err(Error::numeric(format!(
                    "allocation weights vanish at ({i}, {j}) with count {count}"
                )));
            }
            let mut remaining = count;
            for k in 0..h {
                if remaining == 0 {
                    break;
                }
                let take = if k + 1 == h {
                    remaining
                } else {
                    let p = (weights[k] / mass).clamp(0.0, 1.0);
                    let b = Binomial::new(remaining, p).map_err(|e| Error::numeric(e.to_string()))?;
                    b.sample(rng)
                };
                s[[i, j, k]] = take;
                remaining -= take;
                mass -= weights[k];
                if mass <= 0.0 {
                    // Floating cancellation; the rest goes to the last positive weight.
                    mass = weights[k + 1..].iter().sum();
                }
            }
        }
    }
    Ok(LatentSources { s })
}

/// Draws U | S, V and then V | S, U from their gamma conditionals.
///
/// `sources` carries the allocations summed over all `n` observations.
pub fn update_factors<R: Rng + ?Sized>(
    sources: &LatentSources,
    current: &FactorPair,
    n: usize,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<FactorPair> {
    let nf = n as f64;
    let row = sources.row_sums();
    let col = sources.col_sums();
    let (m, h) = current.u.dim();
    let n_cols = current.v.ncols();

    let mut u = Array2::zeros((m, h));
    let v_sums: Vec<f64> = (0..h).map(|k| current.v.row(k).sum()).collect();
    for i in 0..m {
        for k in 0..h {
            let shape = hyper.phi_u + row[[i, k]] as f64;
            let rate = hyper.theta_u + nf * v_sums[k];
            u[[i, k]] = sample_gamma(shape, rate, rng)?;
        }
    }

    let mut v = Array2::zeros((h, n_cols));
    let u_sums: Vec<f64> = (0..h).map(|k| u.column(k).sum()).collect();
    for k in 0..h {
        for j in 0..n_cols {
            let shape = hyper.phi_v + col[[k, j]] as f64;
            let rate = hyper.theta_v + nf * u_sums[k];
            v[[k, j]] = sample_gamma(shape, rate, rng)?;
        }
    }
    Ok(FactorPair { u, v })
}

/// Runs the chain from a prior draw and calls `visit(k, state)` for every
/// retained state, k = 0..K. State k is the one after sweep burn_in + thin·(k+1).
pub fn run_chain_with<F>(
    summary: &CountSummary,
    hyper: &Hyperparameters,
    dims: &ModelDims,
    cfg: &GibbsConfig,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, &FactorPair),
{
    cfg.validate()?;
    dims.validate()?;
    hyper.validate()?;
    if summary.shape() != (dims.m, dims.n) {
        return Err(Error::config(format!(
            "data shape {:?} does not match M={}, N={}",
            summary.shape(),
            dims.m,
            dims.n
        )));
    }
    let mut rng = rng::stream(cfg.seed);
    let mut state = sample_prior(dims, hyper, &mut rng)?;
    let mut retained = 0;
    for sweep in 1..=cfg.total_sweeps() {
        let sources = sample_latent_sources(summary.totals.view(), &state, &mut rng)?;
        state = update_factors(&sources, &state, summary.n, hyper, &mut rng)?;
        if sweep > cfg.burn_in && (sweep - cfg.burn_in) % cfg.thin == 0 {
            visit(retained, &state);
            retained += 1;
        }
    }
    Ok(())
}

/// Runs the chain and keeps every retained state.
pub fn run_chain(
    data: &CountDataset,
    hyper: &Hyperparameters,
    dims: &ModelDims,
    cfg: &GibbsConfig,
) -> Result<PosteriorDraws> {
    run_chain_summary(&data.summary(), hyper, dims, cfg)
}

pub fn run_chain_summary(
    summary: &CountSummary,
    hyper: &Hyperparameters,
    dims: &ModelDims,
    cfg: &GibbsConfig,
) -> Result<PosteriorDraws> {
    let mut draws = Vec::with_capacity(cfg.draws);
    run_chain_with(summary, hyper, dims, cfg, |_, s| draws.push(s.clone()))?;
    PosteriorDraws::new(draws, *dims)
}
