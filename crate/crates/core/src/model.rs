//! Poisson-gamma NMF model: dimensions, hyperparameters, factor matrices,
//! count data, and the densities shared by every inference routine.

use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::matrix_serde;
use crate::rng;

/// Shape of the factorization problem.
///
/// `h` is the inner dimension of the fitted model, `h0` the non-negative
/// rank of the true rate matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub m: usize,
    pub n: usize,
    pub h: usize,
    pub h0: usize,
}

impl ModelDims {
    pub fn new(m: usize, n: usize, h: usize, h0: usize) -> Result<Self> {
        let dims = ModelDims { m, n, h, h0 };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.h == 0 {
            return Err(Error::domain(format!(
                "M, N, H must be positive (got M={}, N={}, H={})",
                self.m, self.n, self.h
            )));
        }
        if self.h0 > self.h {
            return Err(Error::domain(format!("H0={} exceeds H={}", self.h0, self.h)));
        }
        Ok(())
    }

    /// Same dimensions with a different true rank.
    pub fn with_h0(&self, h0: usize) -> Self {
        ModelDims { h0, ..*self }
    }

    /// Parameter count H(M+N).
    pub fn parameter_count(&self) -> usize {
        self.h * (self.m + self.n)
    }
}

/// Gamma prior constants: shape `phi_*` and rate `theta_*` for U and V.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub phi_u: f64,
    pub theta_u: f64,
    pub phi_v: f64,
    pub theta_v: f64,
}

impl Hyperparameters {
    pub fn new(phi_u: f64, theta_u: f64, phi_v: f64, theta_v: f64) -> Result<Self> {
        let hyper = Hyperparameters { phi_u, theta_u, phi_v, theta_v };
        hyper.validate()?;
        Ok(hyper)
    }

    /// Equal shapes for both factors, unit rates.
    pub fn symmetric(phi: f64) -> Result<Self> {
        Self::new(phi, 1.0, phi, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.phi_u, self.theta_u, self.phi_v, self.theta_v];
        if all.iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(())
        } else {
            Err(Error::domain(format!("hyperparameters must be strictly positive: {self:?}")))
        }
    }
}

/// Non-negative factor matrices U (M×H) and V (H×N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPair {
    #[serde(with = "matrix_serde")]
    pub u: Array2<f64>,
    #[serde(with = "matrix_serde")]
    pub v: Array2<f64>,
}

impl FactorPair {
    pub fn new(u: Array2<f64>, v: Array2<f64>) -> Result<Self> {
        let pair = FactorPair { u, v };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if self.u.ncols() != self.v.nrows() {
            return Err(Error::domain(format!(
                "inner dimensions disagree: U is {:?}, V is {:?}",
                self.u.dim(),
                self.v.dim()
            )));
        }
        if self.u.iter().chain(self.v.iter()).any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::domain("factor entries must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v.ncols()
    }

    pub fn inner(&self) -> usize {
        self.u.ncols()
    }

    /// Poisson rate matrix UV.
    pub fn rates(&self) -> Array2<f64> {
        self.u.dot(&self.v)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|x| *x > 0.0)
    }

    /// Checks shapes against `dims` with the fitted inner dimension `dims.h`.
    pub fn check_model_dims(&self, dims: &ModelDims) -> Result<()> {
        if self.u.dim() != (dims.m, dims.h) || self.v.dim() != (dims.h, dims.n) {
            return Err(Error::config(format!(
                "factor shapes {:?}/{:?} do not match M={}, N={}, H={}",
                self.u.dim(),
                self.v.dim(),
                dims.m,
                dims.n,
                dims.h
            )));
        }
        Ok(())
    }
}

/// `n` observed M×N count matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDataset {
    observations: Vec<Array2<u64>>,
}

impl CountDataset {
    pub fn new(observations: Vec<Array2<u64>>) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::domain("a dataset needs at least one observation"))?;
        let shape = first.dim();
        if observations.iter().any(|x| x.dim() != shape) {
            return Err(Error::domain("observations have inconsistent shapes"));
        }
        Ok(CountDataset { observations })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.observations[0].dim()
    }

    pub fn observations(&self) -> &[Array2<u64>] {
        &self.observations
    }

    pub fn into_observations(self) -> Vec<Array2<u64>> {
        self.observations
    }

    pub fn summary(&self) -> CountSummary {
        CountSummary::from_dataset(self)
    }
}

/// Sufficient statistics of a dataset for the conjugate updates: the entrywise
/// count totals, the sample size, and Σ log x! (which only shifts free
/// energies by a constant).
#[derive(Debug, Clone, PartialEq)]
pub struct CountSummary {
    pub totals: Array2<u64>,
    pub n: usize,
    pub log_factorial_sum: f64,
}

impl CountSummary {
    pub fn from_dataset(data: &CountDataset) -> Self {
        let (m, n_cols) = data.shape();
        let mut totals = Array2::<u64>::zeros((m, n_cols));
        let mut log_factorial_sum = 0.0;
        for x in data.observations() {
            totals += x;
            log_factorial_sum += x.iter().map(|&c| log_factorial(c)).sum::<f64>();
        }
        CountSummary { totals, n: data.len(), log_factorial_sum }
    }

    /// Summary of zero observations; the posterior equals the prior.
    pub fn empty(m: usize, n_cols: usize) -> Self {
        CountSummary { totals: Array2::zeros((m, n_cols)), n: 0, log_factorial_sum: 0.0 }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.totals.dim()
    }
}

pub(crate) fn log_factorial(x: u64) -> f64 {
    if x < 2 {
        0.0
    } else {
        ln_gamma(x as f64 + 1.0)
    }
}

/// log of the Poisson pmf, `x log(rate) − rate − log x!`.
pub fn poisson_log_pmf(x: u64, rate: f64) -> Result<f64> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::domain(format!("Poisson rate must be positive, got {rate}")));
    }
    Ok(x as f64 * rate.ln() - rate - log_factorial(x))
}

/// Shape–rate gamma log density at `x > 0`.
pub fn gamma_log_density(x: f64, shape: f64, rate: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain(format!("gamma density evaluated at non-positive {x}")));
    }
    if !(shape > 0.0 && rate > 0.0) {
        return Err(Error::domain("gamma shape and rate must be positive"));
    }
    Ok(shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x)
}

/// log p(X | U, V) for one count matrix.
///
/// Entries with zero rate and zero count contribute 0. A zero rate under a
/// positive count makes the matrix impossible and the result is
/// `f64::NEG_INFINITY`.
pub fn log_likelihood(x: ArrayView2<u64>, params: &FactorPair) -> Result<f64> {
    let rates = params.rates();
    if rates.dim() != x.dim() {
        return Err(Error::domain(format!(
            "count matrix {:?} does not match rate matrix {:?}",
            x.dim(),
            rates.dim()
        )));
    }
    let mut total = 0.0;
    for (&c, &r) in x.iter().zip(rates.iter()) {
        if r > 0.0 {
            total += c as f64 * r.ln() - r - log_factorial(c);
        } else if c > 0 {
            return Ok(f64::NEG_INFINITY);
        }
    }
    Ok(total)
}

/// log φ(U, V) under independent entrywise gamma priors.
pub fn log_prior(params: &FactorPair, hyper: &Hyperparameters) -> Result<f64> {
    let mut total = 0.0;
    for &u in params.u.iter() {
        total += gamma_log_density(u, hyper.phi_u, hyper.theta_u)?;
    }
    for &v in params.v.iter() {
        total += gamma_log_density(v, hyper.phi_v, hyper.theta_v)?;
    }
    Ok(total)
}

/// Draws `n` i.i.d. count matrices with entries Poisson((U₀V₀)ᵢⱼ).
pub fn generate_dataset(truth: &FactorPair, n: usize, seed: u64) -> Result<CountDataset> {
    let mut rng = rng::stream(seed);
    generate_with(truth, n, &mut rng)
}

pub(crate) fn generate_with<R: rand::Rng + ?Sized>(
    truth: &FactorPair,
    n: usize,
    rng: &mut R,
) -> Result<CountDataset> {
    if n == 0 {
        return Err(Error::domain("sample size must be positive"));
    }
    let rates = truth.rates();
    let samplers = rates
        .iter()
        .map(|&r| {
            if r > 0.0 && r.is_finite() {
                Poisson::new(r).map_err(|e| Error::domain(e.to_string()))
            } else {
                Err(Error::domain(format!(
                    "true rate matrix must be strictly positive, found {r}"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let observations = (0..n)
        .map(|_| {
            let flat: Vec<u64> = samplers.iter().map(|p| p.sample(rng) as u64).collect();
            Array2::from_shape_vec(rates.dim(), flat).expect("shape matches rate matrix")
        })
        .collect();
    CountDataset::new(observations)
}

/// Empirical entropy S_n = −(1/n) Σᵢ log q(Xᵢ) under the true factors.
pub fn empirical_entropy(data: &CountDataset, truth: &FactorPair) -> Result<f64> {
    let mut total = 0.0;
    for x in data.observations() {
        total += log_likelihood(x.view(), truth)?;
    }
    Ok(-total / data.len() as f64)
}
