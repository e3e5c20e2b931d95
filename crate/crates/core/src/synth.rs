//! Synthetic speech-feature corpus with known speaker and channel structure.
//!
//! Frames are drawn from a per-utterance GMM whose component means are a
//! shared base shifted by a speaker offset (constant across a speaker's
//! utterances) plus a channel offset (fresh per utterance). Both offsets
//! live in low-dimensional subspaces, so the corpus has genuine
//! total-variability structure for the extractors to find.

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::FeatureMatrix;
use crate::parallel::ordered_map;

/// Corpus generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_speakers: usize,
    pub utterances_per_speaker: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub feature_dim: usize,
    /// Components of the true generating mixture.
    pub num_components: usize,
    /// Dimension of the speaker-offset subspace.
    pub speaker_dim: usize,
    /// Dimension of the channel-offset subspace.
    pub channel_dim: usize,
    pub speaker_scale: f64,
    pub channel_scale: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_speakers: 200,
            utterances_per_speaker: 20,
            min_frames: 200,
            max_frames: 400,
            feature_dim: 20,
            num_components: 32,
            speaker_dim: 10,
            channel_dim: 10,
            speaker_scale: 1.0,
            channel_scale: 0.5,
            noise_scale: 1.0,
            seed: 42,
        }
    }
}

/// Ground truth retained alongside a generated corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthTruth {
    /// Speaker index of each utterance, parallel to the corpus.
    pub speaker_of: Vec<usize>,
    pub num_speakers: usize,
    /// True speaker subspace in supervector space, (C_true * F) x d_true,
    /// orthonormal columns (before speaker_scale).
    pub v_star: DMatrix<f64>,
    /// True speaker latent vectors, one row per speaker (num_speakers x
    /// d_true), drawn standard normal.
    pub w_star: DMatrix<f64>,
    /// The generating mixture: weights, base component means (C_true x F)
    /// and the shared diagonal variance noise_scale^2.
    pub generator_weights: Vec<f64>,
    pub generator_means: DMatrix<f64>,
    pub noise_scale: f64,
    /// Verification trial list, filled in by [`make_trials`].
    #[serde(default)]
    pub trials: Vec<Trial>,
}

/// Splitmix-style hash used to derive independent per-utterance seeds from
/// the corpus seed, so generation order does not affect any utterance.
fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn standard_normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Orthonormal basis (rows x cols, cols <= rows) via QR of a Gaussian draw.
fn random_orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let q = standard_normal_matrix(rng, rows, cols).qr().q();
    q.columns(0, cols).into_owned()
}

struct Generator {
    /// Base component means, stacked component-major (C*F).
    base: DVector<f64>,
    /// Speaker subspace, (C*F) x speaker_dim, orthonormal columns.
    speaker_basis: DMatrix<f64>,
    /// Channel subspace, (C*F) x channel_dim, orthonormal columns.
    channel_basis: DMatrix<f64>,
    weights: Vec<f64>,
}

impl Generator {
    fn new(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Generator {
        let dim = cfg.num_components * cfg.feature_dim;
        let base = DVector::from_fn(dim, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            3.0 * z
        });
        let joint = random_orthonormal(rng, dim, cfg.speaker_dim + cfg.channel_dim);
        let speaker_basis = joint.columns(0, cfg.speaker_dim).into_owned();
        let channel_basis = joint
            .columns(cfg.speaker_dim, cfg.channel_dim)
            .into_owned();
        let raw: Vec<f64> = (0..cfg.num_components)
            .map(|_| rng.random::<f64>() + 0.5)
            .collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.into_iter().map(|w| w / total).collect();
        Generator {
            base,
            speaker_basis,
            channel_basis,
            weights,
        }
    }

    fn utterance(
        &self,
        cfg: &SynthConfig,
        speaker_offset: &DVector<f64>,
        id: String,
        seed: u64,
    ) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DVector::from_fn(cfg.channel_dim, |_, _| StandardNormal.sample(&mut rng));
        let means = &self.base + speaker_offset + &self.channel_basis * x * cfg.channel_scale;
        let frames = rng.random_range(cfg.min_frames..=cfg.max_frames);
        let mut data = DMatrix::zeros(frames, cfg.feature_dim);
        for t in 0..frames {
            let c = sample_component(&self.weights, rng.random());
            for j in 0..cfg.feature_dim {
                let noise: f64 = StandardNormal.sample(&mut rng);
                data[(t, j)] = means[c * cfg.feature_dim + j] + cfg.noise_scale * noise;
            }
        }
        FeatureMatrix {
            utterance_id: id,
            frames: data,
        }
    }
}

fn sample_component(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (c, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return c;
        }
    }
    weights.len() - 1
}

/// Generate the full corpus deterministically from `cfg.seed`.
pub fn generate(cfg: &SynthConfig) -> Result<(Vec<FeatureMatrix>, SynthTruth)> {
    if cfg.num_speakers == 0 || cfg.utterances_per_speaker == 0 {
        return Err(Error::EmptyCorpus);
    }
    if cfg.min_frames == 0 || cfg.min_frames > cfg.max_frames {
        return Err(Error::ConfigInconsistent {
            stage: "synth".into(),
            reason: "need 1 <= min_frames <= max_frames".into(),
        });
    }
    let dim = cfg.num_components * cfg.feature_dim;
    if cfg.speaker_dim + cfg.channel_dim > dim {
        return Err(Error::ConfigInconsistent {
            stage: "synth".into(),
            reason: "speaker_dim + channel_dim exceeds supervector dimension".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let generator = Generator::new(cfg, &mut rng);
    let w_star = DMatrix::from_fn(cfg.num_speakers, cfg.speaker_dim, |_, _| {
        StandardNormal.sample(&mut rng)
    });
    let offsets: Vec<DVector<f64>> = (0..cfg.num_speakers)
        .map(|s| &generator.speaker_basis * w_star.row(s).transpose() * cfg.speaker_scale)
        .collect();

    let jobs: Vec<(usize, usize)> = (0..cfg.num_speakers)
        .flat_map(|s| (0..cfg.utterances_per_speaker).map(move |u| (s, u)))
        .collect();
    let corpus = ordered_map(&jobs, |&(s, u)| {
        let index = (s * cfg.utterances_per_speaker + u) as u64;
        generator.utterance(
            cfg,
            &offsets[s],
            format!("spk{s:04}-utt{u:03}"),
            derive_seed(cfg.seed, index),
        )
    });
    let speaker_of = jobs.iter().map(|&(s, _)| s).collect();
    let generator_means = DMatrix::from_fn(cfg.num_components, cfg.feature_dim, |c, j| {
        generator.base[c * cfg.feature_dim + j]
    });
    Ok((
        corpus,
        SynthTruth {
            speaker_of,
            num_speakers: cfg.num_speakers,
            v_star: generator.speaker_basis.clone(),
            w_star,
            generator_weights: generator.weights.clone(),
            generator_means,
            noise_scale: cfg.noise_scale,
            trials: Vec::new(),
        },
    ))
}

/// One verification trial between two utterances of the corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trial {
    pub enroll: usize,
    pub test: usize,
    pub target: bool,
}

/// Draw a trial list: `n_target` same-speaker pairs (distinct utterances)
/// and `n_nontarget` cross-speaker pairs. No trial enrolls an utterance
/// against itself.
pub fn make_trials(
    truth: &SynthTruth,
    n_target: usize,
    n_nontarget: usize,
    seed: u64,
) -> Result<Vec<Trial>> {
    let n = truth.speaker_of.len();
    if n < 2 {
        return Err(Error::InsufficientUtterances);
    }
    let mut by_speaker: Vec<Vec<usize>> = vec![Vec::new(); truth.num_speakers];
    for (utt, &spk) in truth.speaker_of.iter().enumerate() {
        by_speaker[spk].push(utt);
    }
    let multi: Vec<usize> = (0..truth.num_speakers)
        .filter(|&s| by_speaker[s].len() >= 2)
        .collect();
    if multi.is_empty() || truth.num_speakers < 2 {
        return Err(Error::InsufficientUtterances);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(n_target + n_nontarget);
    for _ in 0..n_target {
        let s = *multi.choose(&mut rng).unwrap();
        let pair: Vec<usize> = by_speaker[s].choose_multiple(&mut rng, 2).copied().collect();
        trials.push(Trial {
            enroll: pair[0],
            test: pair[1],
            target: true,
        });
    }
    for _ in 0..n_nontarget {
        loop {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if truth.speaker_of[a] != truth.speaker_of[b] {
                trials.push(Trial {
                    enroll: a,
                    test: b,
                    target: false,
                });
                break;
            }
        }
    }
    Ok(trials)
}
