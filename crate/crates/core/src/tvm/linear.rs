//! Shared machinery for the linear-Gaussian supervector compression models
//! (PPCA, FA, PPLS, SPPCA). The V update is the same for all of them; the
//! models differ only in the noise term and the optional supervision block.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::supervector::SupervectorSet;
use crate::tvm::{IVectorPosterior, MaxPrinciple, SupervisionTargets, TvModel, TvTrainReport, TvmConfig};

const VARIANCE_CLAMP: f64 = 1e-12;
const PSI_FLOOR: f64 = 1e-10;
const RIDGE: f64 = 1e-10;

/// Noise covariance of the supervector model.
#[derive(Debug, Clone, Copy)]
pub enum NoiseModel<'a> {
    Isotropic(f64),
    Diagonal(&'a DVector<f64>),
}

/// Cached posterior parameters for the shared-covariance methods. The
/// posterior covariance does not depend on the utterance, so it is computed
/// once per model; extraction is a single matrix-vector product.
#[derive(Debug, Clone)]
pub struct LinearExtractor {
    /// `d x h`; mu(u) = proj * m(u).
    pub proj: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl LinearExtractor {
    /// PPCA: Sigma = (I + V'V / sigma2)^-1, mu = Sigma V' m / sigma2.
    pub fn for_ppca(v: &DMatrix<f64>, sigma2: f64) -> Self {
        let d = v.ncols();
        let p = DMatrix::identity(d, d) + v.tr_mul(v) / sigma2;
        let chol = spd_cholesky(p);
        let proj = chol.solve(&v.transpose()) / sigma2;
        Self {
            proj,
            sigma: chol.inverse(),
        }
    }

    /// FA: Sigma = (I + V' Psi^-1 V)^-1, mu = Sigma V' Psi^-1 m.
    pub fn for_fa(v: &DMatrix<f64>, psi: &DVector<f64>) -> Self {
        let d = v.ncols();
        let vp = scale_rows(v, psi);
        let p = DMatrix::identity(d, d) + v.tr_mul(&vp);
        let chol = spd_cholesky(p);
        let proj = chol.solve(&vp.transpose());
        Self {
            proj,
            sigma: chol.inverse(),
        }
    }

    pub fn extract(&self, m: &DVector<f64>) -> IVectorPosterior {
        IVectorPosterior {
            mu: &self.proj * m,
            sigma: self.sigma.clone(),
        }
    }
}

/// Train-side extractor for PPLS/SPPCA, with the weighted supervision block
/// (beta / rho2) Q'Q in the precision.
#[derive(Debug, Clone)]
pub struct SupervisedExtractor {
    pub proj_m: DMatrix<f64>,
    pub proj_y: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl SupervisedExtractor {
    pub fn new(v: &DMatrix<f64>, q: &DMatrix<f64>, sigma2: f64, rho2: f64, beta: f64) -> Self {
        let d = v.ncols();
        let p = DMatrix::identity(d, d) + v.tr_mul(v) / sigma2 + q.tr_mul(q) * (beta / rho2);
        let chol = spd_cholesky(p);
        let proj_m = chol.solve(&v.transpose()) / sigma2;
        let proj_y = chol.solve(&q.transpose()) * (beta / rho2);
        Self {
            proj_m,
            proj_y,
            sigma: chol.inverse(),
        }
    }

    pub fn extract(&self, m: &DVector<f64>, y: &DVector<f64>) -> IVectorPosterior {
        IVectorPosterior {
            mu: &self.proj_m * m + &self.proj_y * y,
            sigma: self.sigma.clone(),
        }
    }
}

/// Posterior of the PPCA model for a single centered supervector.
pub fn ppca_extract(v: &DMatrix<f64>, sigma2: f64, m: &DVector<f64>) -> IVectorPosterior {
    LinearExtractor::for_ppca(v, sigma2).extract(m)
}

/// Posterior of the FA model for a single centered supervector.
pub fn fa_extract(v: &DMatrix<f64>, psi: &DVector<f64>, m: &DVector<f64>) -> IVectorPosterior {
    LinearExtractor::for_fa(v, psi).extract(m)
}

/// Train-side PPLS/SPPCA extraction with a known (centered) supervision
/// target.
pub fn ppls_extract_trainside(model: &TvModel, m: &DVector<f64>, y: &DVector<f64>) -> Result<IVectorPosterior> {
    match model {
        TvModel::Ppls { v, q, sigma2, rho2, beta, .. }
        | TvModel::Sppca { v, q, sigma2, rho2, beta, .. } => {
            Ok(SupervisedExtractor::new(v, q, *sigma2, *rho2, *beta).extract(m, y))
        }
        _ => Err(Error::MissingSupervision),
    }
}

/// Test-side PPLS/SPPCA extraction: the PPCA-form posterior under the
/// supervised-trained V and sigma2.
pub fn ppls_extract_testside(model: &TvModel, m: &DVector<f64>) -> Result<IVectorPosterior> {
    match model {
        TvModel::Ppls { v, sigma2, .. } | TvModel::Sppca { v, sigma2, .. } => {
            Ok(ppca_extract(v, *sigma2, m))
        }
        _ => Err(Error::MissingSupervision),
    }
}

/// The alternative test-side scheme: predict the missing supervision target
/// as the posterior mean y_hat = Q mu0 (with mu0 the PPCA-form posterior
/// mean), then run train-side extraction with y = y_hat. Extracts the same
/// i-vector as [`ppls_extract_testside`]; kept as the independent route for
/// the equivalence check.
pub fn ppls_extract_label_prediction(model: &TvModel, m: &DVector<f64>) -> Result<IVectorPosterior> {
    match model {
        TvModel::Ppls { v, q, sigma2, rho2, beta, .. }
        | TvModel::Sppca { v, q, sigma2, rho2, beta, .. } => {
            let mu0 = ppca_extract(v, *sigma2, m).mu;
            let y_hat = q * &mu0;
            Ok(SupervisedExtractor::new(v, q, *sigma2, *rho2, *beta).extract(m, &y_hat))
        }
        _ => Err(Error::MissingSupervision),
    }
}

/// Sum over utterances of log N(m(u); 0, V V' + noise), evaluated with the
/// d x d Woodbury identity (no h x h matrices are formed).
pub fn marginal_log_likelihood(v: &DMatrix<f64>, noise: NoiseModel<'_>, data: &DMatrix<f64>) -> f64 {
    let (u, h) = (data.nrows(), data.ncols());
    let d = v.ncols();
    let two_pi = 2.0 * std::f64::consts::PI;
    match noise {
        NoiseModel::Isotropic(sigma2) => {
            let a = DMatrix::identity(d, d) + v.tr_mul(v) / sigma2;
            let chol = spd_cholesky(a);
            let logdet = h as f64 * sigma2.ln() + chol_logdet(&chol);
            let w = data * v; // U x d
            let z = chol.solve(&w.transpose()); // d x U
            let mut total = 0.0;
            for i in 0..u {
                let mm: f64 = data.row(i).iter().map(|&x| x * x).sum();
                let wz: f64 = (0..d).map(|j| w[(i, j)] * z[(j, i)]).sum();
                let quad = (mm - wz / sigma2) / sigma2;
                total += -0.5 * (h as f64 * two_pi.ln() + logdet + quad);
            }
            total
        }
        NoiseModel::Diagonal(psi) => {
            let vp = scale_rows(v, psi);
            let a = DMatrix::identity(d, d) + v.tr_mul(&vp);
            let chol = spd_cholesky(a);
            let logdet = psi.iter().map(|&p| p.ln()).sum::<f64>() + chol_logdet(&chol);
            let w = data * vp; // U x d, rows = (V' Psi^-1 m)'
            let z = chol.solve(&w.transpose());
            let mut total = 0.0;
            for i in 0..u {
                let mm: f64 = data
                    .row(i)
                    .iter()
                    .enumerate()
                    .map(|(j, &x)| x * x / psi[j])
                    .sum();
                let wz: f64 = (0..d).map(|j| w[(i, j)] * z[(j, i)]).sum();
                total += -0.5 * (h as f64 * two_pi.ln() + logdet + (mm - wz));
            }
            total
        }
    }
}

pub fn ppca_train(set: &SupervectorSet, cfg: &TvmConfig) -> Result<(TvModel, TvTrainReport)> {
    let (params, report) = train_linear(set, None, false, cfg)?;
    Ok((
        TvModel::Ppca {
            v: params.v,
            sigma2: params.sigma2,
        },
        report,
    ))
}

pub fn fa_train(set: &SupervectorSet, cfg: &TvmConfig) -> Result<(TvModel, TvTrainReport)> {
    let (params, report) = train_linear(set, None, true, cfg)?;
    Ok((
        TvModel::Fa {
            v: params.v,
            psi: params.psi.expect("diagonal noise"),
        },
        report,
    ))
}

pub fn ppls_train(
    set: &SupervectorSet,
    targets: &SupervisionTargets,
    cfg: &TvmConfig,
) -> Result<(TvModel, TvTrainReport)> {
    let (params, report) = train_linear(set, Some(targets), false, cfg)?;
    Ok((
        TvModel::Ppls {
            v: params.v,
            q: params.q.expect("supervised"),
            sigma2: params.sigma2,
            rho2: params.rho2,
            beta: cfg.beta,
            label_mean: targets.mean.clone(),
        },
        report,
    ))
}

pub fn sppca_train(
    set: &SupervectorSet,
    targets: &SupervisionTargets,
    cfg: &TvmConfig,
) -> Result<(TvModel, TvTrainReport)> {
    let (params, report) = train_linear(set, Some(targets), false, cfg)?;
    Ok((
        TvModel::Sppca {
            v: params.v,
            q: params.q.expect("supervised"),
            sigma2: params.sigma2,
            rho2: params.rho2,
            beta: cfg.beta,
            target_mean: targets.mean.clone(),
        },
        report,
    ))
}

struct LinearParams {
    v: DMatrix<f64>,
    sigma2: f64,
    psi: Option<DVector<f64>>,
    q: Option<DMatrix<f64>>,
    rho2: f64,
}

fn train_linear(
    set: &SupervectorSet,
    targets: Option<&SupervisionTargets>,
    diagonal_noise: bool,
    cfg: &TvmConfig,
) -> Result<(LinearParams, TvTrainReport)> {
    let u = set.num_vectors();
    let h = set.dim();
    let d = cfg.d;
    if d < 1 || d >= h {
        return Err(Error::ConfigInconsistent {
            stage: "train-tvm".into(),
            reason: format!("require 1 <= d < h, got d={d}, h={h}"),
        });
    }
    if u < d {
        return Err(Error::ConfigInconsistent {
            stage: "train-tvm".into(),
            reason: format!("need at least d={d} training supervectors, got {u}"),
        });
    }
    if let Some(t) = targets {
        if t.matrix.nrows() != u {
            return Err(Error::MissingSupervision);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sd = 1.0 / (d as f64).sqrt();
    // V is always drawn first so that a beta = 0 supervised run shares its
    // initialization with plain PPCA under the same seed.
    let mut v = random_matrix(h, d, sd, &mut rng);
    let mut q = targets.map(|t| random_matrix(t.matrix.ncols(), d, sd, &mut rng));
    let mut sigma2 = 1.0;
    let mut rho2 = 1.0;
    let mut psi = if diagonal_noise {
        Some(DVector::from_element(h, 1.0))
    } else {
        None
    };

    let sum_mm: f64 = set.matrix.iter().map(|&x| x * x).sum();
    let col_sq: DVector<f64> = DVector::from_fn(h, |j, _| {
        set.matrix.column(j).iter().map(|&x| x * x).sum()
    });
    let sum_yy: f64 = targets
        .map(|t| t.matrix.iter().map(|&x| x * x).sum())
        .unwrap_or(0.0);
    let beta = cfg.beta;

    let mut report = TvTrainReport::default();
    report
        .objective
        .push(current_objective(&v, sigma2, psi.as_ref(), set));

    for _ in 0..cfg.iterations {
        let t0 = Instant::now();

        // E-step: posterior means for all utterances and the shared
        // posterior covariance.
        let (mu_t, sigma_post) = match (&psi, &q) {
            (Some(p), None) => {
                let ex = LinearExtractor::for_fa(&v, p);
                ((&set.matrix * scale_rows(&v, p)) * &ex.sigma, ex.sigma)
            }
            (None, None) => {
                let ex = LinearExtractor::for_ppca(&v, sigma2);
                ((&set.matrix * &v) * (&ex.sigma / sigma2), ex.sigma)
            }
            (None, Some(qm)) => {
                let t = targets.unwrap();
                let ex = SupervisedExtractor::new(&v, qm, sigma2, rho2, beta);
                let pre = (&set.matrix * &v) / sigma2 + (&t.matrix * qm) * (beta / rho2);
                (pre * &ex.sigma, ex.sigma)
            }
            (Some(_), Some(_)) => unreachable!("diagonal noise is never supervised"),
        };

        let a_m = set.matrix.tr_mul(&mu_t); // h x d
        let mut b = mu_t.tr_mul(&mu_t); // d x d
        if cfg.max_principle == MaxPrinciple::One {
            b += sigma_post * u as f64;
        }
        let chol = match Cholesky::new(b.clone()) {
            Some(c) => c,
            None => {
                report
                    .warnings
                    .push("moment accumulator not positive definite; ridge added".into());
                b += DMatrix::identity(d, d) * (RIDGE * u as f64);
                Cholesky::new(b.clone()).ok_or(Error::SingularPrecision)?
            }
        };

        v = chol.solve(&a_m.transpose()).transpose();

        if diagonal_noise {
            // psi_j = (sum_u m_j^2 - (V B V')_jj) / U, diagonal only.
            let vb = &v * &b; // h x d
            let p = psi.as_mut().unwrap();
            let mut floored = false;
            for j in 0..h {
                let quad: f64 = (0..d).map(|k| vb[(j, k)] * v[(j, k)]).sum();
                let val = (col_sq[j] - quad) / u as f64;
                if val < PSI_FLOOR {
                    p[j] = PSI_FLOOR;
                    floored = true;
                } else {
                    p[j] = val;
                }
            }
            if floored {
                report.warnings.push("psi entry floored (PsiCollapse)".into());
            }
        } else {
            sigma2 = (sum_mm - v.dot(&a_m)) / (h as f64 * u as f64);
            if sigma2 < VARIANCE_CLAMP {
                sigma2 = VARIANCE_CLAMP;
                report.warnings.push("sigma2 clamped (SigmaCollapse)".into());
            }
        }

        if let Some(qm) = q.as_mut() {
            let t = targets.unwrap();
            let a_y = t.matrix.tr_mul(&mu_t); // k x d
            *qm = chol.solve(&a_y.transpose()).transpose();
            let k = t.matrix.ncols();
            rho2 = (sum_yy - qm.dot(&a_y)) / (k as f64 * u as f64);
            if rho2 < VARIANCE_CLAMP {
                rho2 = VARIANCE_CLAMP;
                report.warnings.push("rho2 clamped (RhoCollapse)".into());
            }
        }

        report.iter_seconds.push(t0.elapsed().as_secs_f64());
        report
            .objective
            .push(current_objective(&v, sigma2, psi.as_ref(), set));
    }

    Ok((
        LinearParams {
            v,
            sigma2,
            psi,
            q,
            rho2,
        },
        report,
    ))
}

fn current_objective(
    v: &DMatrix<f64>,
    sigma2: f64,
    psi: Option<&DVector<f64>>,
    set: &SupervectorSet,
) -> f64 {
    match psi {
        Some(p) => marginal_log_likelihood(v, NoiseModel::Diagonal(p), &set.matrix),
        None => marginal_log_likelihood(v, NoiseModel::Isotropic(sigma2), &set.matrix),
    }
}

fn random_matrix(rows: usize, cols: usize, sd: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    // Row-major fill so the draw order is independent of the storage layout.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let z: f64 = StandardNormal.sample(rng);
            m[(i, j)] = sd * z;
        }
    }
    m
}

fn scale_rows(v: &DMatrix<f64>, psi: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] / psi[i])
}

fn spd_cholesky(p: DMatrix<f64>) -> Cholesky<f64, Dyn> {
    let d = p.nrows();
    match Cholesky::new(p.clone()) {
        Some(c) => c,
        // Ridge only on factorization failure.
        None => Cholesky::new(p + DMatrix::identity(d, d) * RIDGE)
            .expect("precision matrix not positive definite even after ridge"),
    }
}

fn chol_logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l().diagonal().iter().map(|&x| x.ln()).sum::<f64>()
}
