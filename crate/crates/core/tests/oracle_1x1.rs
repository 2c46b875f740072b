//! The single-entry, single-component model against grid quadrature.

mod common;

use common::{batch_means, poisson_counts, quadrature_1x1};
use ndarray::Array2;
use nmf_rlct::gibbs::{run_chain, sample_latent_sources, update_factors};
use nmf_rlct::model::log_likelihood;
use nmf_rlct::rng;
use nmf_rlct::vb::fit;
use nmf_rlct::{CountDataset, FactorPair, GibbsConfig, Hyperparameters, ModelDims, VBConfig};
use statrs::function::gamma::ln_gamma;

fn dataset(counts: &[u64]) -> CountDataset {
    CountDataset::new(counts.iter().map(|&c| Array2::from_elem((1, 1), c)).collect()).unwrap()
}

/// u integrated out in closed form, then a fine 1-D trapezoid over log v.
fn semi_analytic_free_energy(counts: &[u64], pu: f64, tu: f64, pv: f64, tv: f64) -> f64 {
    let n = counts.len() as f64;
    let t: f64 = counts.iter().sum::<u64>() as f64;
    let log_fact: f64 = counts.iter().map(|&x| ln_gamma(x as f64 + 1.0)).sum();
    let k = 200_001;
    let (lo, hi) = (-60.0, 40.0);
    let h = (hi - lo) / (k - 1) as f64;
    let vals: Vec<f64> = (0..k)
        .map(|i| {
            let b = lo + i as f64 * h;
            (t + pv) * b - tv * b.exp() - (t + pu) * (tu + n * b.exp()).ln()
        })
        .collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = vals
        .iter()
        .enumerate()
        .map(|(i, v)| if i == 0 || i == k - 1 { 0.5 } else { 1.0 } * (v - max).exp())
        .sum();
    let log_z = pu * tu.ln() - ln_gamma(pu) + pv * tv.ln() - ln_gamma(pv) + ln_gamma(t + pu) + max + (sum * h).ln()
        - log_fact;
    -log_z
}

#[test]
fn quadrature_oracle_agrees_with_semi_analytic_integral() {
    for (phi, seed) in [(0.25, 1), (1.0, 2), (2.0, 3), (0.7, 4)] {
        let counts = poisson_counts(2.0, 50, seed);
        let q = quadrature_1x1(&counts, phi, 1.0, phi, 1.5);
        let s = semi_analytic_free_energy(&counts, phi, 1.0, phi, 1.5);
        assert!((q.free_energy - s).abs() < 1e-8 * s.abs(), "phi={phi}: {} vs {s}", q.free_energy);
    }
}

fn chain_products(counts: &[u64], phi: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let dims = ModelDims::new(1, 1, 1, 1).unwrap();
    let hyper = Hyperparameters::symmetric(phi).unwrap();
    let cfg = GibbsConfig { burn_in: 2_000, thin: 5, draws: 40_000, seed };
    let draws = run_chain(&dataset(counts), &hyper, &dims, &cfg).unwrap();
    let uv = draws.draws.iter().map(|d| d.u[[0, 0]] * d.v[[0, 0]]).collect();
    let u = draws.draws.iter().map(|d| d.u[[0, 0]]).collect();
    (uv, u)
}

#[test]
fn gibbs_posterior_means_match_quadrature() {
    for (k, phi) in [0.25, 1.0, 2.0].into_iter().enumerate() {
        let counts = poisson_counts(2.0, 50, 10 + k as u64);
        let q = quadrature_1x1(&counts, phi, 1.0, phi, 1.0);
        let (uv, u) = chain_products(&counts, phi, 100 + k as u64);
        let (m_uv, se_uv) = batch_means(&uv, 50);
        assert!((m_uv - q.mean_uv).abs() < 3.0 * se_uv, "phi={phi}: uv {m_uv} ± {se_uv} vs {}", q.mean_uv);
        let (m_u, se_u) = batch_means(&u, 50);
        assert!((m_u - q.mean_u).abs() < 3.0 * se_u, "phi={phi}: u {m_u} ± {se_u} vs {}", q.mean_u);
    }
}

#[test]
fn variational_free_energy_dominates_and_tracks_posterior_mean() {
    for (k, phi) in [0.25, 0.5, 1.0, 2.0].into_iter().enumerate() {
        for n in [5usize, 50] {
            let counts = poisson_counts(1.5, n, 40 + k as u64);
            if counts.iter().all(|&c| c == 0) {
                continue;
            }
            let q = quadrature_1x1(&counts, phi, 1.0, phi, 1.0);
            let dims = ModelDims::new(1, 1, 1, 1).unwrap();
            let hyper = Hyperparameters::symmetric(phi).unwrap();
            let f = fit(&dataset(&counts), &hyper, &dims, &VBConfig::default()).unwrap();
            assert!(f.free_energy >= q.free_energy, "phi={phi} n={n}: {} < {}", f.free_energy, q.free_energy);
            let vb_mean = f.posterior.mean_u()[[0, 0]] * f.posterior.mean_v()[[0, 0]];
            assert!(
                (vb_mean - q.mean_uv).abs() < 0.1 * q.mean_uv,
                "phi={phi} n={n}: {vb_mean} vs {}",
                q.mean_uv
            );
        }
    }
}

#[test]
fn half_chains_agree_on_log_likelihood() {
    let dims = ModelDims::new(3, 4, 2, 1).unwrap();
    let hyper = Hyperparameters::symmetric(0.5).unwrap();
    let truth = FactorPair::new(Array2::from_elem((3, 1), 1.2), Array2::from_elem((1, 4), 0.9)).unwrap();
    let data = nmf_rlct::model::generate_dataset(&truth, 200, 5).unwrap();
    let summary = data.summary();
    let cfg = GibbsConfig { burn_in: 2_000, thin: 5, draws: 8_000, seed: 9 };
    let draws = run_chain(&data, &hyper, &dims, &cfg).unwrap();
    let ll: Vec<f64> = draws.draws.iter().map(|d| log_likelihood(summary.totals.view(), d).unwrap()).collect();
    let (first, second) = ll.split_at(ll.len() / 2);
    let (m1, s1) = batch_means(first, 20);
    let (m2, s2) = batch_means(second, 20);
    assert!((m1 - m2).abs() < 4.0 * (s1 * s1 + s2 * s2).sqrt(), "{m1} ± {s1} vs {m2} ± {s2}");
}

/// Runs the chain from a given state.
fn chain_from(init: FactorPair, data: &CountDataset, hyper: &Hyperparameters, sweeps: usize, seed: u64) -> Vec<Array2<f64>> {
    let summary = data.summary();
    let mut r = rng::stream(seed);
    let mut state = init;
    let mut out = Vec::new();
    for sweep in 0..sweeps {
        let s = sample_latent_sources(summary.totals.view(), &state, &mut r).unwrap();
        state = update_factors(&s, &state, summary.n, hyper, &mut r).unwrap();
        if sweep >= 1_000 && sweep % 5 == 0 {
            out.push(state.rates());
        }
    }
    out
}

#[test]
fn permuted_initialization_leaves_rate_distribution_unchanged() {
    let hyper = Hyperparameters::symmetric(1.0).unwrap();
    let truth = FactorPair::new(Array2::from_elem((2, 1), 1.0), Array2::from_elem((1, 3), 2.0)).unwrap();
    let data = nmf_rlct::model::generate_dataset(&truth, 100, 3).unwrap();
    let u = ndarray::array![[0.3, 2.0], [1.5, 0.1]];
    let v = ndarray::array![[0.2, 1.0, 3.0], [2.0, 0.5, 0.1]];
    let a = FactorPair::new(u.clone(), v.clone()).unwrap();
    let swapped_u = ndarray::array![[u[[0, 1]], u[[0, 0]]], [u[[1, 1]], u[[1, 0]]]];
    let swapped_v = ndarray::stack![ndarray::Axis(0), v.row(1), v.row(0)];
    let b = FactorPair::new(swapped_u, swapped_v).unwrap();
    assert!((&a.rates() - &b.rates()).iter().all(|d| d.abs() < 1e-12));
    let ra = chain_from(a, &data, &hyper, 41_000, 21);
    let rb = chain_from(b, &data, &hyper, 41_000, 22);
    for (i, j) in [(0, 0), (1, 2), (0, 1)] {
        let xa: Vec<f64> = ra.iter().map(|m| m[[i, j]]).collect();
        let xb: Vec<f64> = rb.iter().map(|m| m[[i, j]]).collect();
        let (ma, sa) = batch_means(&xa, 40);
        let (mb, sb) = batch_means(&xb, 40);
        assert!((ma - mb).abs() < 4.0 * (sa * sa + sb * sb).sqrt(), "({i},{j}): {ma} ± {sa} vs {mb} ± {sb}");
    }
}
