//! Training-time benchmark harness.
//!
//! Compares per-iteration TVM training time across methods on a synthetic
//! problem of configurable size. Sufficient statistics and supervectors are
//! generated up front and excluded from the timings: the timers live inside
//! the trainers and bracket only the E/M loop.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gmm::{DiagonalGmm, SufficientStats};
use crate::supervector::{map_adapt, SupervectorSet};
use crate::tvm::{
    fa_train, fefa_train, pca_train, ppca_train, ppls_train, sppca_train, SupervisionTargets,
    TvmConfig, TvmMethod,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    /// Training utterances.
    pub u: usize,
    /// UBM components.
    pub c: usize,
    /// Feature dimension.
    pub f: usize,
    /// i-vector dimension.
    pub d: usize,
    pub iterations: usize,
    /// Independent timed runs; per-iteration times are medians across all
    /// iterations of all repetitions.
    pub repetitions: usize,
    pub seed: u64,
    /// Worker threads (1 = fully single-threaded comparison).
    pub threads: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            u: 2000,
            c: 256,
            f: 20,
            d: 100,
            iterations: 3,
            repetitions: 1,
            seed: 17,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: TvmMethod,
    /// Median wall-clock seconds per training iteration.
    pub seconds_per_iteration: f64,
    pub total_seconds: f64,
    /// Raw per-iteration times, concatenated across repetitions.
    pub iter_seconds: Vec<f64>,
    /// Objective values of the last repetition, for audit.
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub u: usize,
    pub c: usize,
    pub f: usize,
    pub d: usize,
    /// Supervector dimension h = c * f.
    pub h: usize,
    pub threads: usize,
    pub iterations: usize,
    pub repetitions: usize,
    pub methods: Vec<MethodTiming>,
}

impl BenchmarkReport {
    pub fn timing(&self, method: TvmMethod) -> Option<&MethodTiming> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Per-iteration speedup of `fast` over `slow` (> 1 means faster).
    pub fn speedup(&self, slow: TvmMethod, fast: TvmMethod) -> Option<f64> {
        let s = self.timing(slow)?.seconds_per_iteration;
        let f = self.timing(fast)?.seconds_per_iteration;
        Some(s / f)
    }
}

/// Synthetic benchmark inputs: a random UBM, plausible per-utterance
/// Baum-Welch statistics, and the centered MAP supervectors derived from
/// them.
pub struct BenchmarkData {
    pub ubm: DiagonalGmm,
    pub stats: Vec<SufficientStats>,
    pub set: SupervectorSet,
    pub speaker_of: Vec<usize>,
    pub num_speakers: usize,
}

pub fn generate_data(cfg: &BenchmarkConfig) -> Result<BenchmarkData> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights = DVector::from_element(cfg.c, 1.0 / cfg.c as f64);
    let means = DMatrix::from_fn(cfg.c, cfg.f, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        2.0 * z
    });
    let variances = DMatrix::from_fn(cfg.c, cfg.f, |_, _| 0.5 + rng.random::<f64>());
    let ubm = DiagonalGmm::new(weights, means, variances)?;

    // Roughly 300 frames spread over the components, slightly uneven.
    let stats: Vec<SufficientStats> = (0..cfg.u)
        .map(|i| {
            let n = DVector::from_fn(cfg.c, |_, _| {
                (0.5 + rng.random::<f64>()) * 300.0 / cfg.c as f64
            });
            let f = DMatrix::from_fn(cfg.c, cfg.f, |c, j| {
                let z: f64 = StandardNormal.sample(&mut rng);
                n[c] * (ubm.means[(c, j)] + 0.3 * z)
            });
            SufficientStats {
                utterance_id: format!("bench-{i:05}"),
                n,
                f,
            }
        })
        .collect();

    let h = ubm.supervector_dim();
    let mut matrix = DMatrix::zeros(cfg.u, h);
    let mut ids = Vec::with_capacity(cfg.u);
    for (i, s) in stats.iter().enumerate() {
        let sv = map_adapt(&ubm, s, 1.0)?;
        matrix.row_mut(i).copy_from(&sv.values.transpose());
        ids.push(sv.utterance_id);
    }
    let mean = matrix.row_mean().transpose();
    for i in 0..cfg.u {
        let centered = matrix.row(i) - mean.transpose();
        matrix.row_mut(i).copy_from(&centered);
    }
    // Synthetic speaker labels for the supervised methods: 10 utterances
    // per pseudo-speaker.
    let per = 10usize.min(cfg.u.max(1));
    let speaker_of: Vec<usize> = (0..cfg.u).map(|i| i / per).collect();
    let num_speakers = cfg.u.div_ceil(per);
    Ok(BenchmarkData {
        ubm,
        stats,
        set: SupervectorSet {
            ids,
            matrix,
            mean,
            centered: true,
        },
        speaker_of,
        num_speakers,
    })
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn time_method(
    method: TvmMethod,
    data: &BenchmarkData,
    cfg: &BenchmarkConfig,
) -> Result<MethodTiming> {
    let mut iter_seconds = Vec::new();
    let mut objective = Vec::new();
    for rep in 0..cfg.repetitions.max(1) {
        let tvm_cfg = TvmConfig {
            iterations: cfg.iterations,
            seed: cfg.seed + rep as u64,
            ..TvmConfig::new(method, cfg.d)
        };
        let report = match method {
            TvmMethod::Fefa => fefa_train(&data.stats, &data.ubm, &tvm_cfg)?.1,
            TvmMethod::Pca => pca_train(&data.set, cfg.d)?.1,
            TvmMethod::Ppca => ppca_train(&data.set, &tvm_cfg)?.1,
            TvmMethod::Fa => fa_train(&data.set, &tvm_cfg)?.1,
            TvmMethod::Ppls => {
                let targets = SupervisionTargets::one_hot(&data.speaker_of, data.num_speakers);
                ppls_train(&data.set, &targets, &tvm_cfg)?.1
            }
            TvmMethod::Sppca => {
                let per_speaker: Vec<DVector<f64>> = (0..data.num_speakers)
                    .map(|s| {
                        let parts: Vec<&SufficientStats> = data
                            .speaker_of
                            .iter()
                            .enumerate()
                            .filter(|(_, &sp)| sp == s)
                            .map(|(i, _)| &data.stats[i])
                            .collect();
                        let pooled = SufficientStats::pooled(format!("speaker-{s}"), &parts);
                        Ok(map_adapt(&data.ubm, &pooled, 1.0)?.values)
                    })
                    .collect::<Result<_>>()?;
                let targets =
                    SupervisionTargets::speaker_supervectors(&data.speaker_of, &per_speaker);
                sppca_train(&data.set, &targets, &tvm_cfg)?.1
            }
        };
        iter_seconds.extend(report.iter_seconds.iter().copied());
        objective = report.objective;
    }
    Ok(MethodTiming {
        method,
        seconds_per_iteration: median(iter_seconds.clone()),
        total_seconds: iter_seconds.iter().sum(),
        iter_seconds,
        objective,
    })
}

/// Run the benchmark for the given methods. Data generation happens before
/// any timer starts.
pub fn benchmark(methods: &[TvmMethod], cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    let run = || -> Result<BenchmarkReport> {
        let data = generate_data(cfg)?;
        let mut timings = Vec::with_capacity(methods.len());
        for &m in methods {
            timings.push(time_method(m, &data, cfg)?);
        }
        Ok(BenchmarkReport {
            u: cfg.u,
            c: cfg.c,
            f: cfg.f,
            d: cfg.d,
            h: cfg.c * cfg.f,
            threads: cfg.threads,
            iterations: cfg.iterations,
            repetitions: cfg.repetitions,
            methods: timings,
        })
    };
    if cfg.threads == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .expect("worker pool")
            .install(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BenchmarkConfig {
        BenchmarkConfig {
            u: 40,
            c: 8,
            f: 5,
            d: 6,
            iterations: 2,
            repetitions: 2,
            seed: 3,
            threads: 1,
        }
    }

    #[test]
    fn report_shape_and_positive_times() {
        let cfg = tiny();
        let report = benchmark(&[TvmMethod::Ppca, TvmMethod::Fa, TvmMethod::Fefa], &cfg).unwrap();
        assert_eq!((report.u, report.c, report.f, report.d, report.h), (40, 8, 5, 6, 40));
        assert_eq!(report.threads, 1);
        assert_eq!(report.methods.len(), 3);
        for m in &report.methods {
            assert_eq!(m.iter_seconds.len(), cfg.iterations * cfg.repetitions);
            assert!(m.seconds_per_iteration > 0.0);
            assert!(m.total_seconds >= m.seconds_per_iteration);
        }
        assert!(report.speedup(TvmMethod::Fefa, TvmMethod::Ppca).unwrap() > 0.0);
        assert!(report.timing(TvmMethod::Pca).is_none());
    }

    #[test]
    fn median_helper() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(vec![]), 0.0);
    }

    #[test]
    fn doubling_u_roughly_doubles_ppca_time() {
        // Desk-scale timing is noisy; use a size big enough to dominate
        // constant overheads and accept a wide band.
        let base = BenchmarkConfig {
            u: 600,
            c: 32,
            f: 10,
            d: 24,
            iterations: 3,
            repetitions: 3,
            seed: 5,
            threads: 1,
        };
        let double = BenchmarkConfig { u: 1200, ..base.clone() };
        let r1 = benchmark(&[TvmMethod::Ppca], &base).unwrap();
        let r2 = benchmark(&[TvmMethod::Ppca], &double).unwrap();
        let ratio = r2.timing(TvmMethod::Ppca).unwrap().seconds_per_iteration
            / r1.timing(TvmMethod::Ppca).unwrap().seconds_per_iteration;
        assert!((1.4..=3.0).contains(&ratio), "scaling ratio {ratio}");
    }
}
