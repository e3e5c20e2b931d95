//! Front-end factor analysis over Baum-Welch statistics. The posterior
//! i-vector covariance is utterance-dependent here, which is what the
//! supervector compression methods avoid.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gmm::{DiagonalGmm, SufficientStats};
use crate::parallel::chunked_fold_with;
use crate::tvm::{IVectorPosterior, MaxPrinciple, TvModel, TvTrainReport, TvmConfig};

const ACC_RIDGE: f64 = 1e-8;

/// Per-iteration precomputation shared by all utterances:
/// `t_c = V_c' Sigma_c^-1` (d x F per component) and
/// `w_c = V_c' Sigma_c^-1 V_c` (d x d per component).
pub struct FefaExtractor {
    t: Vec<DMatrix<f64>>,
    w: Vec<DMatrix<f64>>,
    means: DMatrix<f64>,
    d: usize,
}

impl FefaExtractor {
    pub fn new(ubm: &DiagonalGmm, v: &DMatrix<f64>) -> Self {
        let c = ubm.num_components();
        let f = ubm.dim();
        let d = v.ncols();
        let mut t = Vec::with_capacity(c);
        let mut w = Vec::with_capacity(c);
        for ci in 0..c {
            let vc = v.rows(ci * f, f); // F x d
            let mut tc = DMatrix::zeros(d, f);
            for j in 0..f {
                let inv = 1.0 / ubm.variances[(ci, j)];
                for k in 0..d {
                    tc[(k, j)] = vc[(j, k)] * inv;
                }
            }
            w.push(&tc * vc);
            t.push(tc);
        }
        Self {
            t,
            w,
            means: ubm.means.clone(),
            d,
        }
    }

    /// Posterior i-vector distribution for one utterance:
    /// Sigma(u) = (I + sum_c n_c W_c)^-1,
    /// mu(u) = Sigma(u) sum_c T_c (f_c - n_c mu_c).
    /// The mean is obtained with a symmetric solve; the covariance from the
    /// same Cholesky factor.
    pub fn extract(&self, stats: &SufficientStats) -> Result<IVectorPosterior> {
        let (chol, rhs) = self.posterior_terms(stats)?;
        Ok(IVectorPosterior {
            mu: chol.solve(&rhs),
            sigma: chol.inverse(),
        })
    }

    fn posterior_terms(
        &self,
        stats: &SufficientStats,
    ) -> Result<(Cholesky<f64, nalgebra::Dyn>, DVector<f64>)> {
        let c = self.t.len();
        let f = self.means.ncols();
        let mut p = DMatrix::identity(self.d, self.d);
        let mut rhs = DVector::zeros(self.d);
        let mut fc = DVector::zeros(f);
        for ci in 0..c {
            let n = stats.n[ci];
            if n > 0.0 {
                p += &self.w[ci] * n;
            }
            for j in 0..f {
                fc[j] = stats.f[(ci, j)] - n * self.means[(ci, j)];
            }
            rhs.gemv(1.0, &self.t[ci], &fc, 1.0);
        }
        let chol = Cholesky::new(p).ok_or(Error::SingularPrecision)?;
        Ok((chol, rhs))
    }
}

/// One-shot FEFA extraction; for batch work build a [`FefaExtractor`] once
/// per model.
pub fn fefa_extract(
    stats: &SufficientStats,
    v: &DMatrix<f64>,
    ubm: &DiagonalGmm,
) -> Result<IVectorPosterior> {
    FefaExtractor::new(ubm, v).extract(stats)
}

struct FefaAccumulator {
    /// sum_u (f~(u)) mu(u)', stacked over components, h x d.
    num: DMatrix<f64>,
    /// sum_u n_c(u) E_mumu(u) per component.
    den: Vec<DMatrix<f64>>,
    /// EM auxiliary up to an additive constant.
    objective: f64,
}

impl FefaAccumulator {
    fn new(h: usize, c: usize, d: usize) -> Self {
        Self {
            num: DMatrix::zeros(h, d),
            den: vec![DMatrix::zeros(d, d); c],
            objective: 0.0,
        }
    }
}

/// Iterative estimation of the total variability matrix from sufficient
/// statistics. Uses centered first-order statistics f_c - n_c mu_c in both
/// the E- and M-steps.
pub fn fefa_train(
    stats_list: &[SufficientStats],
    ubm: &DiagonalGmm,
    cfg: &TvmConfig,
) -> Result<(TvModel, TvTrainReport)> {
    let c = ubm.num_components();
    let f = ubm.dim();
    let h = c * f;
    let d = cfg.d;
    if d < 1 || d >= h {
        return Err(Error::ConfigInconsistent {
            stage: "train-tvm".into(),
            reason: format!("require 1 <= d < h, got d={d}, h={h}"),
        });
    }
    if stats_list.len() < d {
        return Err(Error::ConfigInconsistent {
            stage: "train-tvm".into(),
            reason: format!(
                "need at least d={d} training utterances, got {}",
                stats_list.len()
            ),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sd = 1.0 / (d as f64).sqrt();
    let mut v = DMatrix::zeros(h, d);
    for i in 0..h {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            v[(i, j)] = sd * z;
        }
    }

    let principle = cfg.max_principle;
    let mut report = TvTrainReport::default();

    for _ in 0..cfg.iterations {
        let t0 = Instant::now();
        let extractor = FefaExtractor::new(ubm, &v);

        let acc = chunked_fold_with(
            stats_list,
            256,
            || FefaAccumulator::new(h, c, d),
            |acc, stats| {
                let (chol, rhs) = extractor
                    .posterior_terms(stats)
                    .expect("posterior precision not positive definite");
                let mu = chol.solve(&rhs);
                let mu_rhs = mu.dot(&rhs);
                let mu_mu = mu.dot(&mu);
                // Auxiliary: mu'rhs - 0.5 tr((P - I) E_mumu), expanded with
                // P mu = rhs and tr(P Sigma) = d so P is never rebuilt.
                let e_mumu = match principle {
                    MaxPrinciple::One => {
                        let sigma = chol.inverse();
                        acc.objective +=
                            mu_rhs - 0.5 * (d as f64 + mu_rhs - sigma.trace() - mu_mu);
                        sigma + &mu * mu.transpose()
                    }
                    MaxPrinciple::Two => {
                        acc.objective += 0.5 * (mu_rhs + mu_mu);
                        &mu * mu.transpose()
                    }
                };
                // Rank-1 numerator update with centered statistics.
                let mut ftilde = DVector::zeros(h);
                for ci in 0..c {
                    for j in 0..f {
                        ftilde[ci * f + j] = stats.f[(ci, j)] - stats.n[ci] * extractor.means[(ci, j)];
                    }
                }
                acc.num.ger(1.0, &ftilde, &mu, 1.0);
                for ci in 0..c {
                    if stats.n[ci] > 0.0 {
                        acc.den[ci] += &e_mumu * stats.n[ci];
                    }
                }
            },
            |a, b| {
                a.num += &b.num;
                for (x, y) in a.den.iter_mut().zip(b.den.into_iter()) {
                    *x += y;
                }
                a.objective += b.objective;
            },
        );
        report.objective.push(acc.objective);

        // M-step: V_c = Num_c Den_c^-1 per component.
        let mut ridged = false;
        for ci in 0..c {
            let den = &acc.den[ci];
            let chol = match Cholesky::new(den.clone()) {
                Some(ch) => ch,
                None => {
                    ridged = true;
                    Cholesky::new(den + DMatrix::identity(d, d) * ACC_RIDGE)
                        .ok_or(Error::SingularPrecision)?
                }
            };
            let num_c = acc.num.rows(ci * f, f); // F x d
            let vc = chol.solve(&num_c.transpose()).transpose();
            v.rows_mut(ci * f, f).copy_from(&vc);
        }
        if ridged {
            report
                .warnings
                .push("per-component accumulator singular; ridge added (SingularAccumulator)".into());
        }
        report.iter_seconds.push(t0.elapsed().as_secs_f64());
    }

    Ok((
        TvModel::Fefa {
            v,
            ubm: ubm.clone(),
        },
        report,
    ))
}
