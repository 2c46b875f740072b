//! Test-only oracles that share no code with the library.

#![allow(dead_code)]

use statrs::function::gamma::ln_gamma;

/// Posterior summaries of the M = N = H = 1 model computed on a grid.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    /// −log p(x₁..xₙ)
    pub free_energy: f64,
    pub mean_uv: f64,
    pub mean_u: f64,
}

/// Integrates the 1×1 posterior in rotated log coordinates s = log u + log v,
/// d = log u − log v. The likelihood depends only on s, so the s-grid is
/// centred on the likelihood peak log(T/n) and the d-grid is wide enough that
/// both gamma tails have collapsed.
pub fn quadrature_1x1(counts: &[u64], phi_u: f64, theta_u: f64, phi_v: f64, theta_v: f64) -> Quadrature {
    let n = counts.len() as f64;
    let total: u64 = counts.iter().sum();
    assert!(total > 0, "oracle needs at least one positive count");
    let t = total as f64;
    let log_fact: f64 = counts.iter().map(|&x| ln_gamma(x as f64 + 1.0)).sum();
    let s_peak = (t / n).ln();
    let width = 12.0 / t.sqrt() + 2.0;
    let (s_lo, s_hi) = (s_peak - 4.0 * width, s_peak + width);
    let (ns, nd) = (3001usize, 6001usize);
    let ds = (s_hi - s_lo) / (ns - 1) as f64;
    let (d_lo, d_hi) = (-60.0 - s_peak.abs(), 60.0 + s_peak.abs());
    let dd = (d_hi - d_lo) / (nd - 1) as f64;
    let prior_const =
        phi_u * theta_u.ln() - ln_gamma(phi_u) + phi_v * theta_v.ln() - ln_gamma(phi_v);

    let mut logs = Vec::with_capacity(ns * nd);
    let mut max = f64::NEG_INFINITY;
    for i in 0..ns {
        let s = s_lo + i as f64 * ds;
        let ll = t * s - n * s.exp();
        let ws: f64 = if i == 0 || i == ns - 1 { 0.5 } else { 1.0 };
        for j in 0..nd {
            let d = d_lo + j as f64 * dd;
            let a = 0.5 * (s + d);
            let b = 0.5 * (s - d);
            let wd = if j == 0 || j == nd - 1 { 0.5 } else { 1.0 };
            // log of prior density in (a, b) including the e^a e^b Jacobian.
            let lp = phi_u * a - theta_u * a.exp() + phi_v * b - theta_v * b.exp();
            let v = ll + lp + (ws * wd).ln();
            max = max.max(v);
            logs.push(v);
        }
    }
    let (mut z, mut zuv, mut zu) = (0.0, 0.0, 0.0);
    for i in 0..ns {
        let s = s_lo + i as f64 * ds;
        for j in 0..nd {
            let d = d_lo + j as f64 * dd;
            let w = (logs[i * nd + j] - max).exp();
            z += w;
            zuv += w * s.exp();
            zu += w * (0.5 * (s + d)).exp();
        }
    }
    // ds·dd·½ is the area element of (a, b) in (s, d).
    let log_z = max + z.ln() + (ds * dd * 0.5).ln() + prior_const - log_fact;
    Quadrature { free_energy: -log_z, mean_uv: zuv / z, mean_u: zu / z }
}

/// Mean and batch-means standard error.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let size = xs.len() / batches;
    let means: Vec<f64> =
        (0..batches).map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// Observations of a 1×1 model at a fixed rate, drawn with the inverse-CDF method.
pub fn poisson_counts(rate: f64, n: usize, seed: u64) -> Vec<u64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let mut k = 0u64;
            let mut p = (-rate).exp();
            let mut cdf = p;
            while u > cdf {
                k += 1;
                p *= rate / k as f64;
                cdf += p;
            }
            k
        })
        .collect()
}
