//! Diagonal-covariance GMM (UBM) training, frame posteriors, and
//! zeroth/first-order sufficient statistics.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::{chunked_fold, ordered_map};

/// Frames of one utterance, `T x F`, one row per frame.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub utterance_id: String,
    pub frames: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

/// Diagonal-covariance Gaussian mixture model. Means and variances are
/// `C x F`, one row per component.
#[derive(Debug, Clone)]
pub struct DiagonalGmm {
    pub weights: DVector<f64>,
    pub means: DMatrix<f64>,
    pub variances: DMatrix<f64>,
}

impl DiagonalGmm {
    /// Build a model from its parameters, validating shape agreement.
    pub fn new(
        weights: DVector<f64>,
        means: DMatrix<f64>,
        variances: DMatrix<f64>,
    ) -> Result<Self> {
        if weights.len() != means.nrows() || means.shape() != variances.shape() {
            return Err(Error::DimensionMismatch {
                expected: means.nrows(),
                got: weights.len(),
            });
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    pub fn num_components(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    /// Supervector dimension h = C * F.
    pub fn supervector_dim(&self) -> usize {
        self.num_components() * self.dim()
    }

    fn densities(&self) -> GmmDensities {
        GmmDensities::new(self)
    }
}

/// Per-utterance Baum-Welch statistics: occupancies `n` (C) and weighted
/// feature sums `f` (C x F).
#[derive(Debug, Clone)]
pub struct SufficientStats {
    pub utterance_id: String,
    pub n: DVector<f64>,
    pub f: DMatrix<f64>,
}

impl SufficientStats {
    pub fn zeros(utterance_id: String, c: usize, f: usize) -> Self {
        Self {
            utterance_id,
            n: DVector::zeros(c),
            f: DMatrix::zeros(c, f),
        }
    }

    /// Pool statistics from several utterances (e.g. all utterances of one
    /// speaker).
    pub fn pooled(id: String, parts: &[&SufficientStats]) -> Self {
        let mut out = Self::zeros(id, parts[0].n.len(), parts[0].f.ncols());
        for p in parts {
            out.n += &p.n;
            out.f += &p.f;
        }
        out
    }
}

/// Precomputed log-density terms: log-weights, per-component normalization
/// constants, and inverse variances.
struct GmmDensities {
    log_weights: DVector<f64>,
    log_norm: DVector<f64>,
    inv_var: DMatrix<f64>,
    means: DMatrix<f64>,
}

impl GmmDensities {
    fn new(gmm: &DiagonalGmm) -> Self {
        let c = gmm.num_components();
        let mut log_norm = DVector::zeros(c);
        let mut inv_var = gmm.variances.clone();
        for ci in 0..c {
            let mut s = 0.0;
            for j in 0..gmm.dim() {
                s += (2.0 * std::f64::consts::PI * gmm.variances[(ci, j)]).ln();
                inv_var[(ci, j)] = 1.0 / gmm.variances[(ci, j)];
            }
            log_norm[ci] = -0.5 * s;
        }
        Self {
            log_weights: gmm.weights.map(|w| w.ln()),
            log_norm,
            inv_var,
            means: gmm.means.clone(),
        }
    }

    /// log(w_c) + log N(x; mu_c, Sigma_c) for every component.
    fn weighted_log_densities(&self, x: &[f64], out: &mut DVector<f64>) {
        let (c, f) = (self.means.nrows(), self.means.ncols());
        for ci in 0..c {
            let mut q = 0.0;
            for j in 0..f {
                let d = x[j] - self.means[(ci, j)];
                q += d * d * self.inv_var[(ci, j)];
            }
            out[ci] = self.log_weights[ci] + self.log_norm[ci] - 0.5 * q;
        }
    }
}

fn log_sum_exp(v: &DVector<f64>) -> f64 {
    let m = v.max();
    if m.is_infinite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Posterior probabilities p(c | x), computed in the log domain with
/// max-subtraction.
pub fn frame_posteriors(gmm: &DiagonalGmm, x: &DVector<f64>) -> DVector<f64> {
    let dens = gmm.densities();
    let mut log_p = DVector::zeros(gmm.num_components());
    dens.weighted_log_densities(x.as_slice(), &mut log_p);
    let lse = log_sum_exp(&log_p);
    log_p.map(|lp| (lp - lse).exp())
}

/// Accumulate zeroth and first order statistics of one utterance against
/// the UBM.
pub fn accumulate_stats(gmm: &DiagonalGmm, utt: &FeatureMatrix) -> Result<SufficientStats> {
    if utt.dim() != gmm.dim() {
        return Err(Error::DimensionMismatch {
            expected: gmm.dim(),
            got: utt.dim(),
        });
    }
    let dens = gmm.densities();
    Ok(accumulate_with(&dens, gmm.num_components(), utt).0)
}

/// Statistics for a whole corpus, utterance-parallel with deterministic
/// output order.
pub fn accumulate_corpus(gmm: &DiagonalGmm, corpus: &[FeatureMatrix]) -> Result<Vec<SufficientStats>> {
    for utt in corpus {
        if utt.dim() != gmm.dim() {
            return Err(Error::DimensionMismatch {
                expected: gmm.dim(),
                got: utt.dim(),
            });
        }
    }
    let dens = gmm.densities();
    let c = gmm.num_components();
    Ok(ordered_map(corpus, |utt| accumulate_with(&dens, c, utt).0))
}

/// Returns (stats, total log-likelihood of the utterance).
fn accumulate_with(dens: &GmmDensities, c: usize, utt: &FeatureMatrix) -> (SufficientStats, f64) {
    let f = utt.dim();
    let mut stats = SufficientStats::zeros(utt.utterance_id.clone(), c, f);
    let mut log_p = DVector::zeros(c);
    let mut loglik = 0.0;
    for t in 0..utt.num_frames() {
        let row: Vec<f64> = (0..f).map(|j| utt.frames[(t, j)]).collect();
        dens.weighted_log_densities(&row, &mut log_p);
        let lse = log_sum_exp(&log_p);
        loglik += lse;
        for ci in 0..c {
            let p = (log_p[ci] - lse).exp();
            stats.n[ci] += p;
            for j in 0..f {
                stats.f[(ci, j)] += p * row[j];
            }
        }
    }
    (stats, loglik)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UbmTrainReport {
    /// Corpus log-likelihood at the start of each EM iteration.
    pub log_likelihood: Vec<f64>,
    /// Number of component re-spread events (occupancy below one frame).
    pub collapse_events: usize,
}

struct EmAccumulator {
    n: DVector<f64>,
    f: DMatrix<f64>,
    s2: DMatrix<f64>,
    loglik: f64,
}

impl EmAccumulator {
    fn new(c: usize, f: usize) -> Self {
        Self {
            n: DVector::zeros(c),
            f: DMatrix::zeros(c, f),
            s2: DMatrix::zeros(c, f),
            loglik: 0.0,
        }
    }
}

/// Train a diagonal-covariance UBM with seeded k-means++ initialization
/// followed by EM. Deterministic given the seed and independent of the
/// rayon thread count.
pub fn train_ubm(
    corpus: &[FeatureMatrix],
    num_components: usize,
    iterations: usize,
    seed: u64,
) -> Result<(DiagonalGmm, UbmTrainReport)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let dim = corpus[0].dim();
    let total_frames: usize = corpus.iter().map(|u| u.num_frames()).sum();
    if total_frames < 10 * num_components {
        return Err(Error::ConfigInconsistent {
            stage: "train-ubm".into(),
            reason: format!(
                "need at least {} frames for {} components, got {}",
                10 * num_components,
                num_components,
                total_frames
            ),
        });
    }

    let (_global_mean, global_var) = global_moments(corpus, dim, total_frames);
    // Variance floor: max(1e-4, 1e-3 * global per-dimension variance).
    let floor: DVector<f64> = global_var.map(|v| (1e-3 * v).max(1e-4));

    let sample = subsample_frames(corpus, dim, 100_000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = kmeans_pp(&sample, num_components, &mut rng);

    let mut gmm = DiagonalGmm {
        weights: DVector::from_element(num_components, 1.0 / num_components as f64),
        means,
        variances: DMatrix::from_fn(num_components, dim, |_, j| global_var[j].max(floor[j])),
    };

    let mut report = UbmTrainReport {
        log_likelihood: Vec::with_capacity(iterations),
        collapse_events: 0,
    };

    for _ in 0..iterations {
        let dens = gmm.densities();
        let c = num_components;
        let acc = chunked_fold(
            corpus,
            || EmAccumulator::new(c, dim),
            |acc, utt| {
                let dens_ref = &dens;
                fold_utterance(acc, dens_ref, c, utt);
            },
            |a, b| {
                a.n += &b.n;
                a.f += &b.f;
                a.s2 += &b.s2;
                a.loglik += b.loglik;
            },
        );
        report.log_likelihood.push(acc.loglik);

        let mut n = acc.n;
        let mut fsum = acc.f;
        let mut s2 = acc.s2;

        // Re-spread collapsed components from the most populated one.
        let mut respreads = 0;
        while respreads < c {
            let Some(dead) = (0..c).find(|&ci| n[ci] < 1.0) else {
                break;
            };
            respreads += 1;
            report.collapse_events += 1;
            let best = (0..c)
                .max_by(|&a, &b| n[a].partial_cmp(&n[b]).unwrap())
                .unwrap();
            n[dead] = n[best] / 2.0;
            n[best] /= 2.0;
            for j in 0..dim {
                let mean_b = fsum[(best, j)] / (2.0 * n[best]).max(f64::MIN_POSITIVE);
                let var_b = (s2[(best, j)] / (2.0 * n[best]).max(f64::MIN_POSITIVE)
                    - mean_b * mean_b)
                    .max(floor[j]);
                let jitter: f64 = rng.sample(rand_distr::StandardNormal);
                let mean_d = mean_b + 0.1 * var_b.sqrt() * jitter;
                fsum[(dead, j)] = mean_d * n[dead];
                s2[(dead, j)] = (var_b + mean_d * mean_d) * n[dead];
                fsum[(best, j)] /= 2.0;
                s2[(best, j)] /= 2.0;
            }
        }

        let total: f64 = n.sum();
        for ci in 0..c {
            gmm.weights[ci] = n[ci] / total;
            for j in 0..dim {
                let mean = fsum[(ci, j)] / n[ci];
                gmm.means[(ci, j)] = mean;
                gmm.variances[(ci, j)] = (s2[(ci, j)] / n[ci] - mean * mean).max(floor[j]);
            }
        }
        let wsum: f64 = gmm.weights.sum();
        gmm.weights /= wsum;
    }

    Ok((gmm, report))
}

fn fold_utterance(acc: &mut EmAccumulator, dens: &GmmDensities, c: usize, utt: &FeatureMatrix) {
    let f = utt.dim();
    let mut log_p = DVector::zeros(c);
    for t in 0..utt.num_frames() {
        let row: Vec<f64> = (0..f).map(|j| utt.frames[(t, j)]).collect();
        dens.weighted_log_densities(&row, &mut log_p);
        let lse = log_sum_exp(&log_p);
        acc.loglik += lse;
        for ci in 0..c {
            let p = (log_p[ci] - lse).exp();
            acc.n[ci] += p;
            for j in 0..f {
                acc.f[(ci, j)] += p * row[j];
                acc.s2[(ci, j)] += p * row[j] * row[j];
            }
        }
    }
}

/// Corpus log-likelihood under a fixed model.
pub fn corpus_log_likelihood(gmm: &DiagonalGmm, corpus: &[FeatureMatrix]) -> f64 {
    let dens = gmm.densities();
    let c = gmm.num_components();
    ordered_map(corpus, |utt| accumulate_with(&dens, c, utt).1)
        .into_iter()
        .sum()
}

fn global_moments(
    corpus: &[FeatureMatrix],
    dim: usize,
    total_frames: usize,
) -> (DVector<f64>, DVector<f64>) {
    let mut mean: DVector<f64> = DVector::zeros(dim);
    let mut sq: DVector<f64> = DVector::zeros(dim);
    for utt in corpus {
        for t in 0..utt.num_frames() {
            for j in 0..dim {
                let x = utt.frames[(t, j)];
                mean[j] += x;
                sq[j] += x * x;
            }
        }
    }
    mean /= total_frames as f64;
    let var = DVector::from_fn(dim, |j, _| (sq[j] / total_frames as f64 - mean[j] * mean[j]).max(0.0));
    (mean, var)
}

/// Pool at most `max` frames, taking every k-th frame in utterance order.
fn subsample_frames(corpus: &[FeatureMatrix], dim: usize, max: usize) -> DMatrix<f64> {
    let total: usize = corpus.iter().map(|u| u.num_frames()).sum();
    let stride = total.div_ceil(max).max(1);
    let n = total.div_ceil(stride);
    let mut out = DMatrix::zeros(n, dim);
    let mut global = 0usize;
    let mut row = 0usize;
    for utt in corpus {
        for t in 0..utt.num_frames() {
            if global % stride == 0 && row < n {
                for j in 0..dim {
                    out[(row, j)] = utt.frames[(t, j)];
                }
                row += 1;
            }
            global += 1;
        }
    }
    out.rows(0, row).into_owned()
}

/// Seeded k-means++ center selection (no Lloyd refinement; EM follows).
fn kmeans_pp(frames: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = frames.nrows();
    let dim = frames.ncols();
    let mut centers = DMatrix::zeros(k, dim);
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from(&frames.row(first));
    let mut dist2: Vec<f64> = (0..n)
        .map(|i| row_dist2(frames, i, &centers, 0))
        .collect();
    for ci in 1..k {
        let total: f64 = dist2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &d) in dist2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(ci).copy_from(&frames.row(pick));
        for i in 0..n {
            let d = row_dist2(frames, i, &centers, ci);
            if d < dist2[i] {
                dist2[i] = d;
            }
        }
    }
    centers
}

fn row_dist2(frames: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..frames.ncols() {
        let d = frames[(i, j)] - centers[(c, j)];
        s += d * d;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::Distribution;

    fn gaussian_utt(id: &str, n: usize, mean: &[f64], sd: f64, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::Normal::new(0.0, sd).unwrap();
        let f = mean.len();
        let frames = DMatrix::from_fn(n, f, |_, j| mean[j] + normal.sample(&mut rng));
        FeatureMatrix {
            utterance_id: id.into(),
            frames,
        }
    }

    #[test]
    fn single_component_closed_form() {
        let utt = gaussian_utt("u0", 5000, &[1.0, -2.0, 0.5], 1.3, 7);
        let (gmm, _) = train_ubm(std::slice::from_ref(&utt), 1, 5, 1).unwrap();
        let t = utt.num_frames() as f64;
        for j in 0..3 {
            let col_mean: f64 = (0..utt.num_frames()).map(|i| utt.frames[(i, j)]).sum::<f64>() / t;
            let col_var: f64 = (0..utt.num_frames())
                .map(|i| (utt.frames[(i, j)] - col_mean).powi(2))
                .sum::<f64>()
                / t;
            assert_abs_diff_eq!(gmm.means[(0, j)], col_mean, epsilon = 1e-9);
            assert_abs_diff_eq!(gmm.variances[(0, j)], col_var, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(gmm.weights[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_separated_clusters_recovered() {
        // Clusters at +/-5 with unit variance; oracle = per-label sample means.
        let a = gaussian_utt("a", 4000, &[5.0, 5.0], 1.0, 11);
        let b = gaussian_utt("b", 4000, &[-5.0, -5.0], 1.0, 12);
        let corpus = vec![a.clone(), b.clone()];
        let (gmm, _) = train_ubm(&corpus, 2, 15, 3).unwrap();
        let sample_mean = |u: &FeatureMatrix, j: usize| -> f64 {
            (0..u.num_frames()).map(|i| u.frames[(i, j)]).sum::<f64>() / u.num_frames() as f64
        };
        // Match components to clusters by sign.
        let (pos, neg) = if gmm.means[(0, 0)] > 0.0 { (0, 1) } else { (1, 0) };
        for j in 0..2 {
            assert!((gmm.means[(pos, j)] - sample_mean(&a, j)).abs() < 0.1);
            assert!((gmm.means[(neg, j)] - sample_mean(&b, j)).abs() < 0.1);
        }
    }

    #[test]
    fn em_loglik_monotone() {
        let corpus = vec![
            gaussian_utt("a", 1500, &[2.0, 0.0], 1.0, 21),
            gaussian_utt("b", 1500, &[-2.0, 1.0], 1.5, 22),
            gaussian_utt("c", 1500, &[0.0, -2.0], 0.7, 23),
        ];
        let (_, report) = train_ubm(&corpus, 4, 10, 5).unwrap();
        for w in report.log_likelihood.windows(2) {
            let tol = 1e-9 * w[0].abs().max(1.0);
            assert!(w[1] >= w[0] - tol, "loglik decreased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn posteriors_basics() {
        let gmm = DiagonalGmm {
            weights: DVector::from_vec(vec![1.0]),
            means: DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
            variances: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        };
        let p = frame_posteriors(&gmm, &DVector::from_vec(vec![3.0, -1.0]));
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-15);

        // Two identical components with equal weights.
        let gmm2 = DiagonalGmm {
            weights: DVector::from_vec(vec![0.5, 0.5]),
            means: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            variances: DMatrix::from_row_slice(2, 1, &[2.0, 2.0]),
        };
        let p2 = frame_posteriors(&gmm2, &DVector::from_vec(vec![0.3]));
        assert_abs_diff_eq!(p2[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p2[1], 0.5, epsilon = 1e-12);

        // Midpoint symmetry: means 0 and 4, x = 2.
        let gmm3 = DiagonalGmm {
            weights: DVector::from_vec(vec![0.5, 0.5]),
            means: DMatrix::from_row_slice(2, 1, &[0.0, 4.0]),
            variances: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
        };
        let p3 = frame_posteriors(&gmm3, &DVector::from_vec(vec![2.0]));
        assert_abs_diff_eq!(p3[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p3[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn posteriors_invariant_under_weight_scaling() {
        let gmm = DiagonalGmm {
            weights: DVector::from_vec(vec![0.2, 0.3, 0.5]),
            means: DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, -1.0, -2.0, 3.0]),
            variances: DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 2.0, 1.0, 0.3, 0.8]),
        };
        // Scale weights by a positive constant before renormalization.
        let mut scaled = gmm.clone();
        scaled.weights *= 7.5;
        let s: f64 = scaled.weights.sum();
        scaled.weights /= s;
        let x = DVector::from_vec(vec![0.4, -0.7]);
        let p = frame_posteriors(&gmm, &x);
        let q = frame_posteriors(&scaled, &x);
        for i in 0..3 {
            assert_abs_diff_eq!(p[i], q[i], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn stats_single_component_and_occupancy() {
        let utt = gaussian_utt("u", 500, &[1.0, 2.0], 1.0, 31);
        let gmm = DiagonalGmm {
            weights: DVector::from_vec(vec![1.0]),
            means: DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
            variances: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        };
        let stats = accumulate_stats(&gmm, &utt).unwrap();
        let t = utt.num_frames() as f64;
        assert_abs_diff_eq!(stats.n[0], t, epsilon = 1e-8 * t);
        for j in 0..2 {
            let col: f64 = (0..utt.num_frames()).map(|i| utt.frames[(i, j)]).sum();
            assert_abs_diff_eq!(stats.f[(0, j)], col, epsilon = 1e-8);
        }
    }

    #[test]
    fn stats_match_per_frame_bayes_oracle() {
        // 2-component 1-D GMM, weights 0.5/0.5, means 0/4, unit variance,
        // frames {0, 4}. Oracle = hand-evaluated Gaussian posteriors.
        let gmm = DiagonalGmm {
            weights: DVector::from_vec(vec![0.5, 0.5]),
            means: DMatrix::from_row_slice(2, 1, &[0.0, 4.0]),
            variances: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
        };
        let utt = FeatureMatrix {
            utterance_id: "u".into(),
            frames: DMatrix::from_row_slice(2, 1, &[0.0, 4.0]),
        };
        let stats = accumulate_stats(&gmm, &utt).unwrap();
        // At x=0: densities exp(0) vs exp(-8); p1 = 1/(1+e^-8).
        let p_near = 1.0 / (1.0 + (-8.0f64).exp());
        let p_far = 1.0 - p_near;
        assert_abs_diff_eq!(stats.n[0], p_near + p_far, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.n[1], p_far + p_near, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.f[(0, 0)], p_near * 0.0 + p_far * 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.f[(1, 0)], p_far * 0.0 + p_near * 4.0, epsilon = 1e-12);
    }

    #[test]
    fn stats_additive_over_concatenation() {
        let gmm = DiagonalGmm {
            weights: DVector::from_vec(vec![0.4, 0.6]),
            means: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, -3.0]),
            variances: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, 1.0]),
        };
        let a = gaussian_utt("a", 200, &[0.5, -0.5], 1.0, 41);
        let b = gaussian_utt("b", 300, &[2.0, -2.0], 1.0, 42);
        let mut cat_rows = DMatrix::zeros(500, 2);
        cat_rows.rows_mut(0, 200).copy_from(&a.frames);
        cat_rows.rows_mut(200, 300).copy_from(&b.frames);
        let cat = FeatureMatrix {
            utterance_id: "cat".into(),
            frames: cat_rows,
        };
        let sa = accumulate_stats(&gmm, &a).unwrap();
        let sb = accumulate_stats(&gmm, &b).unwrap();
        let sc = accumulate_stats(&gmm, &cat).unwrap();
        for ci in 0..2 {
            assert_abs_diff_eq!(sc.n[ci], sa.n[ci] + sb.n[ci], epsilon = 1e-10 * 500.0);
            for j in 0..2 {
                assert_abs_diff_eq!(sc.f[(ci, j)], sa.f[(ci, j)] + sb.f[(ci, j)], epsilon = 1e-8);
            }
        }
        let t = 500.0;
        assert_abs_diff_eq!(sc.n.sum(), t, epsilon = 1e-8 * t);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let gmm = DiagonalGmm {
            weights: DVector::from_vec(vec![1.0]),
            means: DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
            variances: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        };
        let utt = FeatureMatrix {
            utterance_id: "u".into(),
            frames: DMatrix::zeros(3, 3),
        };
        assert!(matches!(
            accumulate_stats(&gmm, &utt),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn train_ubm_deterministic() {
        let corpus = vec![
            gaussian_utt("a", 800, &[1.0, 0.0], 1.0, 51),
            gaussian_utt("b", 800, &[-1.0, 2.0], 1.0, 52),
        ];
        let (g1, _) = train_ubm(&corpus, 3, 5, 99).unwrap();
        let (g2, _) = train_ubm(&corpus, 3, 5, 99).unwrap();
        assert_eq!(g1.means, g2.means);
        assert_eq!(g1.variances, g2.variances);
        assert_eq!(g1.weights, g2.weights);
    }
}
