//! I-vector post-processing (centering, whitening, length normalization)
//! and the simplified PLDA back-end (two-covariance model with a rank-
//! constrained between-speaker covariance).

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pipeline order: subtract the training mean, multiply by the inverse
/// Cholesky factor of the training covariance, scale to unit norm.
#[derive(Debug, Clone)]
pub struct PostProcessor {
    pub mean: DVector<f64>,
    /// Inverse of the lower Cholesky factor of the training covariance.
    pub whitener: DMatrix<f64>,
    /// True when a ridge had to be added to the covariance.
    pub degenerate_covariance: bool,
}

impl PostProcessor {
    /// Fit mean and whitening transform on training i-vectors (rows of
    /// `data`). With fewer than d+1 vectors, or a singular covariance, a
    /// ridge of 1e-6 I is added (DegenerateCovariance).
    pub fn fit(data: &DMatrix<f64>) -> Result<Self> {
        let u = data.nrows();
        let d = data.ncols();
        if u == 0 {
            return Err(Error::EmptySet);
        }
        let mut mean = DVector::zeros(d);
        for i in 0..u {
            mean += data.row(i).transpose();
        }
        mean /= u as f64;
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..u {
            let x = data.row(i).transpose() - &mean;
            cov.ger(1.0 / (u as f64 - 1.0).max(1.0), &x, &x, 1.0);
        }
        let mut degenerate = u < d + 1;
        let chol = match Cholesky::new(cov.clone()) {
            Some(c) if !degenerate => c,
            _ => {
                degenerate = true;
                Cholesky::new(cov + DMatrix::identity(d, d) * 1e-6)
                    .ok_or(Error::SingularPrecision)?
            }
        };
        // whitener = L^-1, so that W C W' = I.
        let whitener = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or(Error::SingularPrecision)?;
        Ok(Self {
            mean,
            whitener,
            degenerate_covariance: degenerate,
        })
    }

    /// Center, whiten, length-normalize. A vector that is zero after
    /// centering (e.g. the training mean itself) has no direction; the zero
    /// vector is returned for it.
    pub fn apply(&self, iv: &DVector<f64>) -> DVector<f64> {
        let w = &self.whitener * (iv - &self.mean);
        let n = w.norm();
        if n <= f64::MIN_POSITIVE {
            return DVector::zeros(w.len());
        }
        w / n
    }
}

/// Two-covariance PLDA: x = mean + F z + e with z in R^q standard normal
/// and e ~ N(0, W). Between-speaker covariance FF' has rank at most q.
#[derive(Debug, Clone)]
pub struct PldaModel {
    pub mean: DVector<f64>,
    /// d x q between-speaker factor loading.
    pub f: DMatrix<f64>,
    /// d x d within-speaker covariance (positive definite).
    pub within: DMatrix<f64>,
}

impl PldaModel {
    pub fn rank(&self) -> usize {
        self.f.ncols()
    }

    pub fn between(&self) -> DMatrix<f64> {
        &self.f * self.f.transpose()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PldaTrainReport {
    pub log_likelihood: Vec<f64>,
}

/// EM training of the two-covariance model. `labels[i]` is the speaker
/// index of row i. Log-likelihood of the training data is recorded per
/// iteration and is non-decreasing.
pub fn plda_train(
    data: &DMatrix<f64>,
    labels: &[usize],
    q: usize,
    iterations: usize,
    seed: u64,
) -> Result<(PldaModel, PldaTrainReport)> {
    let n = data.nrows();
    let d = data.ncols();
    if q > d {
        return Err(Error::RankTooLarge { q, d });
    }
    let num_speakers = labels.iter().copied().max().map_or(0, |m| m + 1);
    if num_speakers < 2 {
        return Err(Error::SingleSpeaker);
    }
    let mut by_speaker: Vec<Vec<usize>> = vec![Vec::new(); num_speakers];
    for (i, &s) in labels.iter().enumerate() {
        by_speaker[s].push(i);
    }
    if by_speaker.iter().any(|v| v.is_empty()) {
        let s = by_speaker.iter().position(|v| v.is_empty()).unwrap();
        return Err(Error::SpeakerWithNoUtterances(s.to_string()));
    }
    if !by_speaker.iter().any(|v| v.len() >= 2) {
        return Err(Error::ConfigInconsistent {
            stage: "train-backend".into(),
            reason: "no speaker has two or more utterances".into(),
        });
    }

    // Global mean (held fixed during EM).
    let mut mean = DVector::zeros(d);
    for i in 0..n {
        mean += data.row(i).transpose();
    }
    mean /= n as f64;

    // Total covariance for initialization scaling.
    let mut total_cov = DMatrix::zeros(d, d);
    for i in 0..n {
        let x = data.row(i).transpose() - &mean;
        total_cov.ger(1.0 / n as f64, &x, &x, 1.0);
    }
    let scale = (total_cov.trace() / d as f64).sqrt().max(1e-6);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f_mat = DMatrix::from_fn(d, q, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        0.5 * scale * z / (q as f64).sqrt()
    });
    let mut within = total_cov.clone() * 0.5 + DMatrix::identity(d, d) * (1e-6 * scale * scale);

    // Per-speaker sums, centered.
    let centered: Vec<DVector<f64>> = (0..n).map(|i| data.row(i).transpose() - &mean).collect();
    let speaker_sums: Vec<DVector<f64>> = by_speaker
        .iter()
        .map(|utts| {
            let mut s = DVector::zeros(d);
            for &i in utts {
                s += &centered[i];
            }
            s
        })
        .collect();

    let mut report = PldaTrainReport::default();

    for _ in 0..iterations {
        report
            .log_likelihood
            .push(plda_data_log_likelihood(&f_mat, &within, &by_speaker, &speaker_sums, &centered));

        let w_chol = Cholesky::new(within.clone()).ok_or(Error::SingularPrecision)?;
        let winv_f = w_chol.solve(&f_mat); // d x q
        let ft_winv_f = f_mat.tr_mul(&winv_f); // q x q

        // E-step.
        let mut sum_xh = DMatrix::zeros(d, q); // sum over utterances of x h'
        let mut sum_n_ehh = DMatrix::zeros(q, q); // sum over speakers of n_s E[hh']
        let mut e_h: Vec<DVector<f64>> = Vec::with_capacity(num_speakers);
        let mut e_hh: Vec<DMatrix<f64>> = Vec::with_capacity(num_speakers);
        for (s, utts) in by_speaker.iter().enumerate() {
            let ns = utts.len() as f64;
            let l = DMatrix::identity(q, q) + &ft_winv_f * ns;
            let l_chol = Cholesky::new(l).ok_or(Error::SingularPrecision)?;
            let b = winv_f.tr_mul(&speaker_sums[s]); // q
            let h_mean = l_chol.solve(&b);
            let h_cov = l_chol.inverse();
            let ehh = &h_cov + &h_mean * h_mean.transpose();
            sum_xh.ger(1.0, &speaker_sums[s], &h_mean, 1.0);
            sum_n_ehh += &ehh * ns;
            e_h.push(h_mean);
            e_hh.push(ehh);
        }

        // M-step: F, then W given the new F.
        let acc_chol = Cholesky::new(sum_n_ehh.clone()).unwrap_or_else(|| {
            Cholesky::new(sum_n_ehh.clone() + DMatrix::identity(q, q) * 1e-10)
                .expect("moment accumulator not positive definite")
        });
        f_mat = acc_chol.solve(&sum_xh.transpose()).transpose();

        let mut w_new = DMatrix::zeros(d, d);
        for (s, utts) in by_speaker.iter().enumerate() {
            let ns = utts.len() as f64;
            let fh = &f_mat * &e_h[s];
            for &i in utts {
                let r = &centered[i] - &fh;
                w_new.ger(1.0, &r, &r, 1.0);
            }
            // F (E[hh'] - h h') F' accounts for the posterior uncertainty.
            let extra = &f_mat * (&e_hh[s] - &e_h[s] * e_h[s].transpose()) * f_mat.transpose();
            w_new += extra * ns;
        }
        w_new /= n as f64;
        // Keep W symmetric against accumulation round-off.
        within = (&w_new + w_new.transpose()) * 0.5;

        // Minimum-divergence step: fold the average posterior second moment
        // of the speaker factor back into F so the latent prior stays N(0, I).
        // Without this, a poorly scaled initialization decays only slowly.
        let mut hh_avg = DMatrix::zeros(q, q);
        for ehh in &e_hh {
            hh_avg += ehh;
        }
        hh_avg /= num_speakers as f64;
        if let Some(chol) = Cholesky::new((&hh_avg + hh_avg.transpose()) * 0.5) {
            f_mat *= chol.l();
        }
    }
    report
        .log_likelihood
        .push(plda_data_log_likelihood(&f_mat, &within, &by_speaker, &speaker_sums, &centered));

    Ok((
        PldaModel {
            mean,
            f: f_mat,
            within,
        },
        report,
    ))
}

/// Marginal log-likelihood of the training data under the current model,
/// integrating the speaker factors out per speaker.
fn plda_data_log_likelihood(
    f_mat: &DMatrix<f64>,
    within: &DMatrix<f64>,
    by_speaker: &[Vec<usize>],
    speaker_sums: &[DVector<f64>],
    centered: &[DVector<f64>],
) -> f64 {
    let d = within.nrows();
    let q = f_mat.ncols();
    let two_pi = 2.0 * std::f64::consts::PI;
    let w_chol = Cholesky::new(within.clone()).expect("within covariance not PD");
    let logdet_w = 2.0 * w_chol.l().diagonal().iter().map(|&x| x.ln()).sum::<f64>();
    let winv_f = w_chol.solve(f_mat);
    let ft_winv_f = f_mat.tr_mul(&winv_f);

    let mut total = 0.0;
    for (s, utts) in by_speaker.iter().enumerate() {
        let ns = utts.len() as f64;
        let l = DMatrix::identity(q, q) + &ft_winv_f * ns;
        let l_chol = Cholesky::new(l).expect("posterior precision not PD");
        let logdet_l = 2.0 * l_chol.l().diagonal().iter().map(|&x| x.ln()).sum::<f64>();
        let b = winv_f.tr_mul(&speaker_sums[s]);
        let quad_reduction = b.dot(&l_chol.solve(&b));
        let mut quad = 0.0;
        for &i in utts {
            quad += centered[i].dot(&w_chol.solve(&centered[i]));
        }
        total += -0.5
            * (ns * d as f64 * two_pi.ln() + ns * logdet_w + logdet_l + quad - quad_reduction);
    }
    total
}

/// Precomputed trial scorer: the log-likelihood ratio is a pair of
/// quadratic forms plus one bilinear term, two matrix-vector products per
/// trial.
#[derive(Debug, Clone)]
pub struct PldaScorer {
    mean: DVector<f64>,
    /// Coefficient of each marginal quadratic term.
    g: DMatrix<f64>,
    /// Coefficient of the cross term.
    h: DMatrix<f64>,
    constant: f64,
}

impl PldaScorer {
    pub fn new(model: &PldaModel) -> Result<Self> {
        let b = model.between();
        let a = &b + &model.within; // total covariance
        let a_chol = Cholesky::new(a.clone()).ok_or(Error::SingularPrecision)?;
        let a_inv = a_chol.inverse();
        // Schur complement of the same-speaker joint covariance [[A, B],[B, A]].
        let schur = &a - &b * &a_inv * &b;
        let schur_chol = Cholesky::new(schur.clone()).ok_or(Error::SingularPrecision)?;
        let m1 = schur_chol.inverse();
        let m2 = -&a_inv * &b * &m1;
        let g = (&a_inv - &m1) * 0.5;
        let h = -m2;
        let logdet_a = 2.0 * a_chol.l().diagonal().iter().map(|&x| x.ln()).sum::<f64>();
        let logdet_schur = 2.0
            * schur_chol
                .l()
                .diagonal()
                .iter()
                .map(|&x| x.ln())
                .sum::<f64>();
        // log|Sigma_diff| - log|Sigma_same| over 2, with
        // |Sigma_same| = |A| |A - B A^-1 B|.
        let constant = 0.5 * (logdet_a - logdet_schur);
        Ok(Self {
            mean: model.mean.clone(),
            g,
            h,
            constant,
        })
    }

    /// log p(enroll, test | same speaker) - log p(enroll, test | different
    /// speakers). Symmetric in its arguments.
    pub fn score(&self, enroll: &DVector<f64>, test: &DVector<f64>) -> f64 {
        let x = enroll - &self.mean;
        let y = test - &self.mean;
        x.dot(&(&self.g * &x)) + y.dot(&(&self.g * &y)) + x.dot(&(&self.h * &y)) + self.constant
    }
}

/// One-shot scoring; for trial lists build a [`PldaScorer`] once.
pub fn plda_score(model: &PldaModel, enroll: &DVector<f64>, test: &DVector<f64>) -> Result<f64> {
    Ok(PldaScorer::new(model)?.score(enroll, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_data(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn postprocessor_whitens_and_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 4;
        let n = 5000;
        // Correlated data.
        let mix = DMatrix::from_fn(d, d, |i, j| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if i == j { 1.0 + z.abs() } else { 0.3 * z }
        });
        let raw = random_data(n, d, 4) * mix.transpose();
        let pp = PostProcessor::fit(&raw).unwrap();
        assert!(!pp.degenerate_covariance);

        // Whitened (pre-normalization) sample covariance is the identity.
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..n {
            let x = &pp.whitener * (raw.row(i).transpose() - &pp.mean);
            cov.ger(1.0 / (n as f64 - 1.0), &x, &x, 1.0);
        }
        for i in 0..d {
            for j in 0..d {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((cov[(i, j)] - expect).abs() < 1e-6);
            }
        }

        // Output norm is exactly 1 for nonzero inputs.
        let out = pp.apply(&DVector::from_vec(vec![0.3, -2.0, 1.0, 0.5]));
        assert_abs_diff_eq!(out.norm(), 1.0, epsilon = 1e-12);

        // The training mean has no direction after centering.
        let at_mean = pp.apply(&pp.mean.clone());
        assert_eq!(at_mean.norm(), 0.0);
    }

    #[test]
    fn isotropic_data_gives_identity_whitener() {
        let raw = random_data(5000, 3, 8);
        let pp = PostProcessor::fit(&raw).unwrap();
        // Whitener proportional to the identity within 5%.
        let w = &pp.whitener;
        let diag_mean = (0..3).map(|i| w[(i, i)]).sum::<f64>() / 3.0;
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    assert!((w[(i, i)] / diag_mean - 1.0).abs() < 0.05);
                } else {
                    assert!((w[(i, j)] / diag_mean).abs() < 0.05);
                }
            }
        }
    }

    #[test]
    fn ridge_applied_with_too_few_vectors() {
        let raw = random_data(3, 5, 9);
        let pp = PostProcessor::fit(&raw).unwrap();
        assert!(pp.degenerate_covariance);
    }

    fn synthetic_plda_corpus(
        speakers: usize,
        utts: usize,
        d: usize,
        q: usize,
        seed: u64,
    ) -> (DMatrix<f64>, Vec<usize>, DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f_true = DMatrix::from_fn(d, q, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z / (q as f64).sqrt() * 2.0
        });
        // Within covariance: diagonal with moderate spread.
        let w_diag: Vec<f64> = (0..d).map(|j| 0.5 + 0.1 * j as f64).collect();
        let n = speakers * utts;
        let mut data = DMatrix::zeros(n, d);
        let mut labels = Vec::with_capacity(n);
        for s in 0..speakers {
            let z = DVector::from_fn(q, |_, _| StandardNormal.sample(&mut rng));
            let center = &f_true * z;
            for u in 0..utts {
                for j in 0..d {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    data[(s * utts + u, j)] = center[j] + e * w_diag[j].sqrt();
                }
                labels.push(s);
            }
        }
        let between = &f_true * f_true.transpose();
        let within = DMatrix::from_diagonal(&DVector::from_vec(w_diag));
        (data, labels, between, within)
    }

    #[test]
    fn plda_loglik_monotone() {
        let (data, labels, _, _) = synthetic_plda_corpus(30, 6, 8, 4, 11);
        let (_, report) = plda_train(&data, &labels, 4, 20, 1).unwrap();
        for w in report.log_likelihood.windows(2) {
            let tol = 1e-8 * w[0].abs().max(1.0);
            assert!(w[1] >= w[0] - tol, "loglik decreased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn plda_recovers_generator_covariances() {
        let (data, labels, between_true, within_true) = synthetic_plda_corpus(200, 20, 20, 10, 21);
        let (model, _) = plda_train(&data, &labels, 10, 30, 2).unwrap();
        let rel_b = (model.between() - &between_true).norm() / between_true.norm();
        let rel_w = (&model.within - &within_true).norm() / within_true.norm();
        // Truth recovery is limited by the 200-speaker sample; the estimate
        // should nearly coincide with the bias-corrected empirical scatter.
        assert!(rel_b < 0.30, "between relative error {rel_b}");
        assert!(rel_w < 0.15, "within relative error {rel_w}");

        let (n, d, utts) = (data.nrows(), data.ncols(), 20);
        let mean = data.row_mean().transpose();
        let mut scatter = DMatrix::zeros(d, d);
        for s in 0..200 {
            let mut m = DVector::zeros(d);
            for u in 0..utts {
                m += data.row(s * utts + u).transpose();
            }
            m = m / utts as f64 - &mean;
            scatter.ger(1.0 / 200.0, &m, &m, 1.0);
        }
        assert_eq!(n, 200 * utts);
        let empirical = &scatter - &model.within / utts as f64;
        let rel_emp = (model.between() - &empirical).norm() / empirical.norm();
        assert!(rel_emp < 0.02, "gap to empirical scatter {rel_emp}");
    }

    #[test]
    fn score_symmetric_and_orders_pairs() {
        let (data, labels, _, _) = synthetic_plda_corpus(40, 5, 6, 3, 31);
        let (model, _) = plda_train(&data, &labels, 3, 15, 3).unwrap();
        let scorer = PldaScorer::new(&model).unwrap();
        let a = DVector::from_vec(vec![1.0, 0.2, -0.5, 0.8, 0.0, -1.0]);
        let b = DVector::from_vec(vec![-0.3, 1.0, 0.4, -0.2, 0.6, 0.1]);
        assert_abs_diff_eq!(scorer.score(&a, &b), scorer.score(&b, &a), epsilon = 1e-10);

        // Identical vectors score higher than orthogonal ones of equal norm.
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]) + &model.mean;
        let e2 = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]) + &model.mean;
        assert!(scorer.score(&e1, &e1) > scorer.score(&e1, &e2));
    }

    #[test]
    fn score_matches_dense_joint_gaussian_oracle() {
        // Small d=2 model checked against direct evaluation of the two 4x4
        // joint Gaussian densities.
        let model = PldaModel {
            mean: DVector::from_vec(vec![0.1, -0.2]),
            f: DMatrix::from_row_slice(2, 1, &[1.2, -0.4]),
            within: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]),
        };
        let scorer = PldaScorer::new(&model).unwrap();
        let x1 = DVector::from_vec(vec![0.7, 0.3]);
        let x2 = DVector::from_vec(vec![-0.5, 0.9]);

        let b = model.between();
        let a = &b + &model.within;
        let mut same = DMatrix::zeros(4, 4);
        same.view_mut((0, 0), (2, 2)).copy_from(&a);
        same.view_mut((2, 2), (2, 2)).copy_from(&a);
        same.view_mut((0, 2), (2, 2)).copy_from(&b);
        same.view_mut((2, 0), (2, 2)).copy_from(&b);
        let mut diff = DMatrix::zeros(4, 4);
        diff.view_mut((0, 0), (2, 2)).copy_from(&a);
        diff.view_mut((2, 2), (2, 2)).copy_from(&a);

        let stacked = DVector::from_vec(vec![
            x1[0] - model.mean[0],
            x1[1] - model.mean[1],
            x2[0] - model.mean[0],
            x2[1] - model.mean[1],
        ]);
        let log_density = |cov: &DMatrix<f64>| -> f64 {
            let chol = Cholesky::new(cov.clone()).unwrap();
            let logdet = 2.0 * chol.l().diagonal().iter().map(|&x| x.ln()).sum::<f64>();
            let quad = stacked.dot(&chol.solve(&stacked));
            -0.5 * (4.0 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
        };
        let oracle = log_density(&same) - log_density(&diff);
        assert_abs_diff_eq!(scorer.score(&x1, &x2), oracle, epsilon = 1e-9);
    }

    #[test]
    fn score_invariant_under_joint_rotation() {
        let (data, labels, _, _) = synthetic_plda_corpus(30, 5, 4, 2, 41);
        let (model, _) = plda_train(&data, &labels, 2, 10, 5).unwrap();
        // A random orthogonal matrix from QR.
        let r = random_data(4, 4, 42);
        let qr = r.qr();
        let rot = qr.q();
        let rotated = PldaModel {
            mean: &rot * &model.mean,
            f: &rot * &model.f,
            within: &rot * &model.within * rot.transpose(),
        };
        let s1 = PldaScorer::new(&model).unwrap();
        let s2 = PldaScorer::new(&rotated).unwrap();
        let a = DVector::from_vec(vec![0.3, -0.8, 0.5, 1.1]);
        let b = DVector::from_vec(vec![-0.6, 0.2, 0.9, -0.4]);
        assert_abs_diff_eq!(
            s1.score(&a, &b),
            s2.score(&(&rot * a.clone()), &(&rot * b.clone())),
            epsilon = 1e-9
        );
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let data = random_data(10, 3, 51);
        let labels = vec![0; 10];
        assert!(matches!(
            plda_train(&data, &labels, 2, 5, 1),
            Err(Error::SingleSpeaker)
        ));
        let labels2: Vec<usize> = (0..10).map(|i| i % 2).collect();
        assert!(matches!(
            plda_train(&data, &labels2, 5, 5, 1),
            Err(Error::RankTooLarge { .. })
        ));
    }
}
