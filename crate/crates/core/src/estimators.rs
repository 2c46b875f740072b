//! Posterior-sample estimators: empirical loss T_n, functional variance V_n,
//! WAIC W_n = T_n + V_n/n, the test-set generalization error G_n, and the
//! per-replicate learning-coefficient estimate n(G_n + W_n − S_n)/2.
//!
//! Predictive averages E_w[p(X|w)] are taken in log space with a
//! max-shifted log-sum-exp. Sums over observations use a fixed pairwise
//! reduction so results do not depend on thread scheduling.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::PosteriorDraws;
use crate::model::{log_factorial, log_likelihood, CountDataset, FactorPair};

const CHUNK: usize = 2048;

/// Pairwise (tree) summation in a fixed order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// log((1/K) Σ_k exp(values_k)).
pub fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || values.is_empty() {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + (sum / values.len() as f64).ln()
}

/// Log rates of every draw laid out for repeated likelihood evaluation.
pub struct DrawTable {
    log_rates: Vec<f64>,
    rate_sums: Vec<f64>,
    cells: usize,
    shape: (usize, usize),
}

impl DrawTable {
    pub fn new(draws: &[FactorPair]) -> Result<Self> {
        let first = draws.first().ok_or_else(|| Error::domain("no posterior draws"))?;
        let shape = (first.rows(), first.cols());
        let cells = shape.0 * shape.1;
        let mut log_rates = Vec::with_capacity(draws.len() * cells);
        let mut rate_sums = Vec::with_capacity(draws.len());
        for d in draws {
            if (d.rows(), d.cols()) != shape {
                return Err(Error::domain("posterior draws have inconsistent shapes"));
            }
            let rates = d.rates();
            log_rates.extend(rates.iter().map(|r| r.ln()));
            rate_sums.push(rates.sum());
        }
        Ok(DrawTable { log_rates, rate_sums, cells, shape })
    }

    pub fn len(&self) -> usize {
        self.rate_sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rate_sums.is_empty()
    }

    /// log p(x | w_k) for every draw k, written into `out`.
    pub fn log_likelihoods(&self, x: &Array2<u64>, out: &mut [f64]) -> Result<()> {
        if x.dim() != self.shape {
            return Err(Error::domain(format!(
                "observation shape {:?} does not match draws {:?}",
                x.dim(),
                self.shape
            )));
        }
        let mut nonzero = Vec::new();
        let mut log_fact = 0.0;
        for (e, &c) in x.iter().enumerate() {
            if c > 0 {
                nonzero.push((e, c as f64));
                log_fact += log_factorial(c);
            }
        }
        for (k, slot) in out.iter_mut().enumerate() {
            let row = &self.log_rates[k * self.cells..(k + 1) * self.cells];
            let mut acc = -self.rate_sums[k] - log_fact;
            for &(e, c) in &nonzero {
                acc += c * row[e];
            }
            *slot = acc;
        }
        Ok(())
    }

    /// log E_w[p(x | w)] over the draws.
    pub fn log_predictive(&self, x: &Array2<u64>, scratch: &mut Vec<f64>) -> Result<f64> {
        scratch.resize(self.len(), 0.0);
        self.log_likelihoods(x, scratch)?;
        Ok(log_mean_exp(scratch))
    }
}

/// Per-observation, per-draw log-likelihoods ℓ_ik as an n×K matrix.
pub fn log_likelihood_matrix(data: &CountDataset, draws: &PosteriorDraws) -> Result<Array2<f64>> {
    let table = DrawTable::new(&draws.draws)?;
    let k = table.len();
    let mut out = Array2::zeros((data.len(), k));
    for (x, mut row) in data.observations().iter().zip(out.rows_mut()) {
        let slice = row.as_slice_mut().expect("row-major rows are contiguous");
        table.log_likelihoods(x, slice)?;
    }
    Ok(out)
}

fn empirical_loss_from(ll: &Array2<f64>) -> Result<f64> {
    let terms: Vec<f64> = ll
        .rows()
        .into_iter()
        .map(|r| log_mean_exp(r.as_slice().expect("contiguous")))
        .collect();
    if let Some(i) = terms.iter().position(|t| !t.is_finite()) {
        return Err(Error::Estimator(format!(
            "observation {i} has zero likelihood under every posterior draw"
        )));
    }
    Ok(-pairwise_sum(&terms) / ll.nrows() as f64)
}

fn functional_variance_from(ll: &Array2<f64>) -> f64 {
    let k = ll.ncols() as f64;
    let terms: Vec<f64> = ll
        .rows()
        .into_iter()
        .map(|r| {
            let mean = r.sum() / k;
            r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k
        })
        .collect();
    pairwise_sum(&terms)
}

/// T_n = −(1/n) Σᵢ log E_w[p(Xᵢ | w)].
pub fn empirical_loss(data: &CountDataset, draws: &PosteriorDraws) -> Result<f64> {
    empirical_loss_from(&log_likelihood_matrix(data, draws)?)
}

/// V_n = Σᵢ V_w[log p(Xᵢ | w)] with the population (1/K) variance.
pub fn functional_variance(data: &CountDataset, draws: &PosteriorDraws) -> Result<f64> {
    Ok(functional_variance_from(&log_likelihood_matrix(data, draws)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaicParts {
    pub empirical_loss: f64,
    pub functional_variance: f64,
    pub waic: f64,
}

pub fn waic_parts(data: &CountDataset, draws: &PosteriorDraws) -> Result<WaicParts> {
    let ll = log_likelihood_matrix(data, draws)?;
    let t_n = empirical_loss_from(&ll)?;
    let v_n = functional_variance_from(&ll);
    Ok(WaicParts { empirical_loss: t_n, functional_variance: v_n, waic: t_n + v_n / data.len() as f64 })
}

/// W_n = T_n + V_n / n.
pub fn waic(data: &CountDataset, draws: &PosteriorDraws) -> Result<f64> {
    Ok(waic_parts(data, draws)?.waic)
}

/// G_n ≈ (1/n_T) Σ_t [log q(X*_t) − log E_w p(X*_t | w)].
pub fn generalization_error(
    test: &CountDataset,
    draws: &PosteriorDraws,
    truth: &FactorPair,
) -> Result<f64> {
    let table = DrawTable::new(&draws.draws)?;
    let truth_table = DrawTable::new(std::slice::from_ref(truth))?;
    let chunks: Vec<Result<Vec<f64>>> = test
        .observations()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut scratch = Vec::new();
            let mut truth_ll = [0.0];
            chunk
                .iter()
                .map(|x| {
                    let pred = table.log_predictive(x, &mut scratch)?;
                    truth_table.log_likelihoods(x, &mut truth_ll)?;
                    if !pred.is_finite() {
                        return Err(Error::Estimator(
                            "test observation has zero predictive likelihood".into(),
                        ));
                    }
                    Ok(truth_ll[0] - pred)
                })
                .collect()
        })
        .collect();
    let mut terms = Vec::with_capacity(test.len());
    for c in chunks {
        terms.extend(c?);
    }
    Ok(pairwise_sum(&terms) / test.len() as f64)
}

/// n(G_n + W_n − S_n)/2.
pub fn rlct_point(g_n: f64, w_n: f64, s_n: f64, n: usize) -> f64 {
    n as f64 * (g_n + w_n - s_n) / 2.0
}

/// Everything one replicate of the RLCT experiment measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateEstimates {
    pub empirical_loss: f64,
    pub functional_variance: f64,
    pub waic: f64,
    pub generalization_error: f64,
    pub empirical_entropy: f64,
    pub lambda_point: f64,
}

impl ReplicateEstimates {
    pub fn compute(
        train: &CountDataset,
        test: &CountDataset,
        draws: &PosteriorDraws,
        truth: &FactorPair,
    ) -> Result<Self> {
        let parts = waic_parts(train, draws)?;
        let g_n = generalization_error(test, draws, truth)?;
        let mut neg_ll = Vec::with_capacity(train.len());
        for x in train.observations() {
            neg_ll.push(-log_likelihood(x.view(), truth)?);
        }
        let s_n = pairwise_sum(&neg_ll) / train.len() as f64;
        Ok(ReplicateEstimates {
            empirical_loss: parts.empirical_loss,
            functional_variance: parts.functional_variance,
            waic: parts.waic,
            generalization_error: g_n,
            empirical_entropy: s_n,
            lambda_point: rlct_point(g_n, parts.waic, s_n, train.len()),
        })
    }
}
