//! Monte Carlo experiment harness.
//!
//! `run_experiment` repeats (generate training data → Gibbs posterior →
//! fresh test data → estimators) for D replicates and averages the per-
//! replicate estimates n(G_n + W_n − S_n)/2 into λ̂. Each replicate draws
//! from streams derived from (master_seed, replicate index), and results are
//! gathered in index order, so the outcome does not depend on scheduling.
//!
//! `vb_slope_experiment` regresses F̄_n − nS_n on log n to measure the
//! variational coefficient empirically.

use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{lambda_upper, lambda_vb, to_f64, PriorShapes};
use crate::error::{Error, Result};
use crate::estimators::ReplicateEstimates;
use crate::gibbs::{run_chain_summary, GibbsConfig};
use crate::model::{empirical_entropy, generate_dataset, CountDataset, FactorPair, Hyperparameters, ModelDims};
use crate::rng::{self, purpose};
use crate::vb::{fit, VBConfig};

/// How the true factors U₀ (M×H0) and V₀ (H0×N) are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthSpec {
    Explicit { factors: FactorPair },
    /// Entries i.i.d. uniform on [low, high).
    Uniform { low: f64, high: f64, seed: u64 },
}

impl Default for TruthSpec {
    fn default() -> Self {
        TruthSpec::Uniform { low: 0.5, high: 1.5, seed: 1 }
    }
}

impl TruthSpec {
    pub fn resolve(&self, dims: &ModelDims) -> Result<FactorPair> {
        let truth = match self {
            TruthSpec::Explicit { factors } => factors.clone(),
            TruthSpec::Uniform { low, high, seed } => {
                if !(*low > 0.0 && high > low) {
                    return Err(Error::config(format!("uniform truth needs 0 < low < high, got [{low}, {high})")));
                }
                let mut r = rng::stream(rng::derive_seed(*seed, &[purpose::TRUTH]));
                let u = Array2::from_shape_fn((dims.m, dims.h0), |_| r.gen_range(*low..*high));
                let v = Array2::from_shape_fn((dims.h0, dims.n), |_| r.gen_range(*low..*high));
                FactorPair::new(u, v)?
            }
        };
        if truth.u.dim() != (dims.m, dims.h0) || truth.v.dim() != (dims.h0, dims.n) {
            return Err(Error::config(format!(
                "true factors {:?}/{:?} do not match M={}, N={}, H0={}",
                truth.u.dim(),
                truth.v.dim(),
                dims.m,
                dims.n,
                dims.h0
            )));
        }
        if !truth.rates().iter().all(|r| *r > 0.0) {
            return Err(Error::config("true rate matrix must be strictly positive"));
        }
        Ok(truth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dims: ModelDims,
    pub hyper: Hyperparameters,
    #[serde(default)]
    pub truth: TruthSpec,
    /// Training sample size.
    pub n: usize,
    /// Test sample size n_T.
    pub n_test: usize,
    /// Replicate count D.
    pub replicates: usize,
    /// Chain settings; the seed field is replaced per replicate.
    pub gibbs: GibbsConfig,
    pub master_seed: u64,
}

impl ExperimentConfig {
    /// Settings of the reference experiment for one shape value and n ∈ {500, 1000}:
    /// M = N = 4, H = 2, H0 = 1, unit rates, K = 2n, burn-in 20000, thin 20,
    /// D = 20, n_T = 100n.
    pub fn table1(phi: f64, n: usize) -> Result<Self> {
        Ok(ExperimentConfig {
            dims: ModelDims::new(4, 4, 2, 1)?,
            hyper: Hyperparameters::symmetric(phi)?,
            truth: TruthSpec::default(),
            n,
            n_test: 100 * n,
            replicates: 20,
            gibbs: GibbsConfig { burn_in: 20_000, thin: 20, draws: 2 * n, seed: 0 },
            master_seed: 2020,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.hyper.validate()?;
        self.gibbs.validate()?;
        if self.n == 0 || self.n_test == 0 || self.replicates == 0 {
            return Err(Error::config("n, n_test and replicates must be positive"));
        }
        Ok(())
    }

    fn replicate_seed(&self, index: usize, stream: u64) -> u64 {
        rng::derive_seed(self.master_seed, &[index as u64, stream])
    }
}

/// One generate → sample → estimate cycle.
pub fn run_replicate(cfg: &ExperimentConfig, truth: &FactorPair, index: usize) -> Result<ReplicateEstimates> {
    let train = generate_dataset(truth, cfg.n, cfg.replicate_seed(index, purpose::TRAIN))?;
    let chain = GibbsConfig { seed: cfg.replicate_seed(index, purpose::CHAIN), ..cfg.gibbs };
    let draws = run_chain_summary(&train.summary(), &cfg.hyper, &cfg.dims, &chain)?;
    let test = generate_dataset(truth, cfg.n_test, cfg.replicate_seed(index, purpose::TEST))?;
    ReplicateEstimates::compute(&train, &test, &draws, truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub estimates: ReplicateEstimates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedReplicate {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub truth: FactorPair,
    pub lambda_hat: f64,
    /// Sample standard deviation over √D; zero when D = 1.
    pub stderr: f64,
    pub lambda_vb: f64,
    pub lambda_upper: f64,
    pub replicates: Vec<ReplicateRecord>,
    pub failed: Vec<FailedReplicate>,
    /// Seconds per replicate in index order. Kept out of `result.json` so
    /// repeated runs produce identical files.
    #[serde(skip)]
    pub wall_clock: Vec<f64>,
}

/// Mean and standard error of the mean.
pub fn aggregate(values: &[f64]) -> (f64, f64) {
    let d = values.len() as f64;
    let mean = values.iter().sum::<f64>() / d;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d - 1.0);
    (mean, (var / d).sqrt())
}

/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

impl ExperimentResult {
    /// Aggregates replicate records (in any order) into a result.
    pub fn from_records(
        config: ExperimentConfig,
        truth: FactorPair,
        mut replicates: Vec<ReplicateRecord>,
        mut failed: Vec<FailedReplicate>,
    ) -> Result<Self> {
        replicates.sort_by_key(|r| r.index);
        failed.sort_by_key(|f| f.index);
        let attempted = replicates.len() + failed.len();
        if replicates.is_empty() || failed.len() as f64 > MAX_FAILURE_FRACTION * attempted as f64 {
            return Err(Error::numeric(format!(
                "{} of {attempted} replicates failed; first: {}",
                failed.len(),
                failed.first().map_or("-", |f| f.reason.as_str())
            )));
        }
        let points: Vec<f64> = replicates.iter().map(|r| r.estimates.lambda_point).collect();
        let (lambda_hat, stderr) = aggregate(&points);
        let shapes = PriorShapes::try_from(&config.hyper)?;
        Ok(ExperimentResult {
            lambda_vb: to_f64(lambda_vb(&config.dims, &shapes)?),
            lambda_upper: to_f64(lambda_upper(&config.dims, &shapes)?),
            config,
            truth,
            lambda_hat,
            stderr,
            replicates,
            failed,
            wall_clock: Vec::new(),
        })
    }

    /// λ̄ − λ̂.
    pub fn margin(&self) -> f64 {
        self.lambda_upper - self.lambda_hat
    }
}

/// Runs `indices` of the experiment (in parallel) and aggregates.
pub fn run_replicates(cfg: &ExperimentConfig, indices: &[usize]) -> Result<ExperimentResult> {
    cfg.validate()?;
    let truth = cfg.truth.resolve(&cfg.dims)?;
    let outcomes: Vec<(usize, Result<ReplicateEstimates>, f64)> = indices
        .par_iter()
        .map(|&index| {
            let start = Instant::now();
            let out = run_replicate(cfg, &truth, index);
            (index, out, start.elapsed().as_secs_f64())
        })
        .collect();
    let mut records = Vec::new();
    let mut failed = Vec::new();
    let mut timing = Vec::new();
    for (index, out, secs) in outcomes {
        timing.push((index, secs));
        match out {
            Ok(estimates) => records.push(ReplicateRecord { index, estimates }),
            Err(e) => {
                log::warn!("replicate {index} failed and is excluded: {e}");
                failed.push(FailedReplicate { index, reason: e.to_string() });
            }
        }
    }
    let mut result = ExperimentResult::from_records(cfg.clone(), truth, records, failed)?;
    timing.sort_by_key(|t| t.0);
    result.wall_clock = timing.into_iter().map(|t| t.1).collect();
    Ok(result)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let indices: Vec<usize> = (0..cfg.replicates).collect();
    run_replicates(cfg, &indices)
}

/// Least-squares fit of y = a·log n + b.
pub fn fit_log_linear(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::numeric("need at least two points for a regression"));
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0.ln()).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0.ln() - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0.ln() - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::numeric("regression needs at least two distinct sample sizes"));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopePoint {
    pub n: usize,
    /// Mean of F̄_n − nS_n over the surviving seeds.
    pub excess: f64,
    pub seeds_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: Vec<SlopePoint>,
}

/// Measures the log n coefficient of F̄_n − nS_n across `n_grid`, averaging
/// over seeds. Each seed draws one sample of size max(n_grid) and every grid
/// point uses its first n observations.
pub fn vb_slope_experiment(
    dims: &ModelDims,
    hyper: &Hyperparameters,
    truth: &FactorPair,
    n_grid: &[usize],
    seeds: &[u64],
    vb: &VBConfig,
) -> Result<SlopeFit> {
    if n_grid.len() < 3 {
        return Err(Error::config("the slope experiment needs at least three sample sizes"));
    }
    if seeds.is_empty() {
        return Err(Error::config("the slope experiment needs at least one seed"));
    }
    let n_max = *n_grid.iter().max().expect("grid is non-empty");
    let pools: Vec<Vec<Array2<u64>>> = seeds
        .iter()
        .map(|&seed| Ok(generate_dataset(truth, n_max, rng::derive_seed(seed, &[purpose::TRAIN]))?.into_observations()))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize, u64)> = n_grid
        .iter()
        .flat_map(|&n| seeds.iter().enumerate().map(move |(k, &s)| (n, k, s)))
        .collect();
    let values: Vec<(usize, Option<f64>)> = jobs
        .par_iter()
        .map(|&(n, k, seed)| {
            let run = || -> Result<f64> {
                let data = CountDataset::new(pools[k][..n].to_vec())?;
                let s_n = empirical_entropy(&data, truth)?;
                let cfg = VBConfig { seed: rng::derive_seed(seed, &[n as u64, purpose::VB]), ..*vb };
                Ok(fit(&data, hyper, dims, &cfg)?.free_energy - n as f64 * s_n)
            };
            match run() {
                Ok(v) => (n, Some(v)),
                Err(e) => {
                    log::warn!("VB fit at n={n}, seed={seed} dropped: {e}");
                    (n, None)
                }
            }
        })
        .collect();
    let mut points = Vec::new();
    for &n in n_grid {
        let ok: Vec<f64> = values.iter().filter(|(m, _)| *m == n).filter_map(|(_, v)| *v).collect();
        if !ok.is_empty() {
            points.push(SlopePoint { n, excess: ok.iter().sum::<f64>() / ok.len() as f64, seeds_used: ok.len() });
        }
    }
    if points.len() < 3 {
        return Err(Error::numeric(format!("only {} grid points survived", points.len())));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, p.excess)).collect();
    let (slope, intercept) = fit_log_linear(&xy)?;
    Ok(SlopeFit { slope, intercept, points })
}
