//! Numerical check of the PPCA posterior derivation: for random (w, m)
//! pairs, log p(w|m) evaluated from the closed-form Gaussian posterior must
//! equal log p(w) + log p(m|w) - log p(m).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::tvm::linear::{marginal_log_likelihood, LinearExtractor, NoiseModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppendixReport {
    pub trials: usize,
    pub max_abs_discrepancy: f64,
}

fn log_gauss_iso(x: &DVector<f64>, mean: &DVector<f64>, var: f64) -> f64 {
    let n = x.len() as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    -0.5 * (n * (two_pi * var).ln() + (x - mean).norm_squared() / var)
}

fn log_gauss_full(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = x.len() as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    let chol = nalgebra::Cholesky::new(cov.clone()).expect("posterior covariance not PD");
    let logdet = 2.0 * chol.l().diagonal().iter().map(|&v| v.ln()).sum::<f64>();
    let diff = x - mean;
    let quad = diff.dot(&chol.solve(&diff));
    -0.5 * (n * two_pi.ln() + logdet + quad)
}

/// Draw `trials` random (w, m) pairs under the PPCA model and report the
/// largest absolute violation of the Bayes identity.
pub fn verify_posterior_appendix(
    v: &DMatrix<f64>,
    sigma2: f64,
    trials: usize,
    seed: u64,
) -> AppendixReport {
    let h = v.nrows();
    let d = v.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extractor = LinearExtractor::for_ppca(v, sigma2);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let w = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let noise = DVector::from_fn(h, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sigma2.sqrt()
        });
        let m = v * &w + noise;

        let post = extractor.extract(&m);
        let lp_posterior = log_gauss_full(&w, &post.mu, &post.sigma);
        let lp_prior = log_gauss_iso(&w, &DVector::zeros(d), 1.0);
        let lp_likelihood = log_gauss_iso(&m, &(v * &w), sigma2);
        let lp_marginal = marginal_log_likelihood(
            v,
            NoiseModel::Isotropic(sigma2),
            &DMatrix::from_rows(&[m.transpose()]),
        );
        let discrepancy = (lp_posterior - (lp_prior + lp_likelihood - lp_marginal)).abs();
        worst = worst.max(discrepancy);
    }
    AppendixReport {
        trials,
        max_abs_discrepancy: worst,
    }
}
