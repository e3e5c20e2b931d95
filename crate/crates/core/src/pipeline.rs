//! End-to-end pipeline orchestration.
//!
//! Nine stages connect the modules through files in a working directory:
//! `synth` → `train-ubm` → `stats` → `supervectors` → `train-tvm` →
//! `extract` → `train-backend` → `score` → `evaluate`. Every stage is a
//! pure function of its input files, the configuration, and the seeds, and
//! writes a manifest recording the configuration and the SHA-256 of each
//! input it consumed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::{plda_train, PldaScorer, PostProcessor};
use crate::error::{Error, Result};
use crate::eval::{det_curve, eer, eer_confidence_interval, min_dcf_sre10, probit, TrialSet};
use crate::gmm::{accumulate_corpus, train_ubm};
use crate::io;
use crate::supervector::{map_adapt, SupervectorSet};
use crate::synth::{generate, make_trials, SynthConfig, SynthTruth};
use crate::tvm::{
    fa_train, fefa_train, pca_extract, pca_train, ppca_train, ppls_extract_testside, ppls_train,
    sppca_train, FefaExtractor, LinearExtractor, SupervisionTargets, TvModel, TvmConfig,
    TvmMethod,
};

/// Full pipeline configuration. Field names double as CLI flag names.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub synth: SynthConfig,
    /// Speakers (the last ones by index) held out of all training stages;
    /// trials are drawn among their utterances only.
    pub eval_speakers: usize,
    pub n_target_trials: usize,
    pub n_nontarget_trials: usize,
    pub trial_seed: u64,
    pub ubm_components: usize,
    pub ubm_iterations: usize,
    pub relevance_factor: f64,
    pub tvm: TvmConfig,
    pub plda_rank: usize,
    pub plda_iterations: usize,
    pub seed: u64,
    /// Worker threads for the parallel stages; 0 keeps the global default.
    pub threads: usize,
    pub reproducible: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            synth: SynthConfig::default(),
            eval_speakers: 50,
            n_target_trials: 2000,
            n_nontarget_trials: 2000,
            trial_seed: 1000,
            ubm_components: 32,
            ubm_iterations: 5,
            relevance_factor: 1.0,
            tvm: TvmConfig::new(TvmMethod::Ppca, 40),
            plda_rank: 20,
            plda_iterations: 10,
            seed: 42,
            threads: 0,
            reproducible: true,
        }
    }
}

impl PipelineConfig {
    /// Cross-stage dimensional consistency, checked before any compute.
    pub fn validate(&self, stage: &str) -> Result<()> {
        let h = self.ubm_components * self.synth.feature_dim;
        if self.tvm.d >= h || self.tvm.d == 0 {
            return Err(Error::ConfigInconsistent {
                stage: stage.into(),
                reason: format!("tvm.d must satisfy 1 <= d < h = C*F = {h}, got {}", self.tvm.d),
            });
        }
        if self.plda_rank > self.tvm.d || self.plda_rank == 0 {
            return Err(Error::ConfigInconsistent {
                stage: stage.into(),
                reason: format!(
                    "plda_rank must satisfy 1 <= q <= d = {}, got {}",
                    self.tvm.d, self.plda_rank
                ),
            });
        }
        if self.eval_speakers + 2 > self.synth.num_speakers {
            return Err(Error::ConfigInconsistent {
                stage: stage.into(),
                reason: "eval_speakers must leave at least two training speakers".into(),
            });
        }
        if self.eval_speakers < 2 {
            return Err(Error::ConfigInconsistent {
                stage: stage.into(),
                reason: "need at least two evaluation speakers for nontarget trials".into(),
            });
        }
        Ok(())
    }

    /// First held-out speaker index.
    pub fn eval_start(&self) -> usize {
        self.synth.num_speakers - self.eval_speakers
    }
}

/// Stage names in execution order.
pub const STAGES: [&str; 9] = [
    "synth",
    "train-ubm",
    "stats",
    "supervectors",
    "train-tvm",
    "extract",
    "train-backend",
    "score",
    "evaluate",
];

/// Canonical artifact paths inside a working directory.
pub struct Paths {
    pub dir: PathBuf,
}

impl Paths {
    pub fn new(dir: &Path) -> Self {
        Paths { dir: dir.into() }
    }
    pub fn features(&self) -> PathBuf {
        self.dir.join("features.bin")
    }
    pub fn truth(&self) -> PathBuf {
        self.dir.join("truth.json")
    }
    pub fn ubm(&self) -> PathBuf {
        self.dir.join("ubm.bin")
    }
    pub fn stats(&self) -> PathBuf {
        self.dir.join("stats.bin")
    }
    pub fn supervectors(&self) -> PathBuf {
        self.dir.join("supervectors.bin")
    }
    pub fn tvm(&self) -> PathBuf {
        self.dir.join("tvm.bin")
    }
    pub fn ivectors(&self) -> PathBuf {
        self.dir.join("ivectors.bin")
    }
    pub fn backend(&self) -> PathBuf {
        self.dir.join("backend.bin")
    }
    pub fn scores(&self) -> PathBuf {
        self.dir.join("scores.txt")
    }
    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics.json")
    }
    pub fn det(&self) -> PathBuf {
        self.dir.join("det.csv")
    }
    pub fn manifest(&self, stage: &str) -> PathBuf {
        self.dir.join(format!("{stage}.manifest.json"))
    }
}

fn require(stage: &str, path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingUpstream {
            stage: stage.into(),
            path: path.display().to_string(),
        });
    }
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}

fn write_manifest(
    paths: &Paths,
    stage: &str,
    config: &PipelineConfig,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<()> {
    let mut input_hashes = serde_json::Map::new();
    for p in inputs {
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        input_hashes.insert(name, Value::String(io::file_sha256(p)?));
    }
    let manifest = json!({
        "schema": io::CONTAINER_SCHEMA,
        "stage": stage,
        "config": serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?,
        "inputs": input_hashes,
        "outputs": outputs
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().to_string())
            .collect::<Vec<_>>(),
    });
    write_json(&paths.manifest(stage), &manifest)
}

fn load_truth(stage: &str, paths: &Paths) -> Result<SynthTruth> {
    require(stage, &paths.truth())?;
    let f = File::open(paths.truth())?;
    serde_json::from_reader(f).map_err(|e| Error::Format(e.to_string()))
}

/// Indices of utterances whose speaker is in the training split.
fn train_rows(config: &PipelineConfig, truth: &SynthTruth) -> Vec<usize> {
    let start = config.eval_start();
    (0..truth.speaker_of.len())
        .filter(|&u| truth.speaker_of[u] < start)
        .collect()
}

fn run_in_pool<T: Send>(threads: usize, body: impl FnOnce() -> T + Send) -> T {
    if threads == 0 {
        body()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("worker pool")
            .install(body)
    }
}

/// Execute one pipeline stage inside `dir`.
pub fn run_stage(name: &str, config: &PipelineConfig, dir: &Path) -> Result<()> {
    config.validate(name)?;
    let paths = Paths::new(dir);
    std::fs::create_dir_all(dir)?;
    run_in_pool(config.threads, || match name {
        "synth" => stage_synth(config, &paths),
        "train-ubm" => stage_train_ubm(config, &paths),
        "stats" => stage_stats(config, &paths),
        "supervectors" => stage_supervectors(config, &paths),
        "train-tvm" => stage_train_tvm(config, &paths),
        "extract" => stage_extract(config, &paths),
        "train-backend" => stage_train_backend(config, &paths),
        "score" => stage_score(config, &paths),
        "evaluate" => stage_evaluate(config, &paths),
        other => Err(Error::ConfigInconsistent {
            stage: other.into(),
            reason: format!("unknown stage; expected one of {STAGES:?}"),
        }),
    })
}

/// Run every stage in order.
pub fn run_all(config: &PipelineConfig, dir: &Path) -> Result<()> {
    for stage in STAGES {
        run_stage(stage, config, dir)?;
    }
    Ok(())
}

fn stage_synth(config: &PipelineConfig, paths: &Paths) -> Result<()> {
    let (corpus, mut truth) = generate(&config.synth)?;
    // Restrict trials to the held-out speakers, then map indices back to
    // the full corpus.
    let start = config.eval_start();
    let eval_rows: Vec<usize> = (0..truth.speaker_of.len())
        .filter(|&u| truth.speaker_of[u] >= start)
        .collect();
    let eval_view = SynthTruth {
        speaker_of: eval_rows.iter().map(|&u| truth.speaker_of[u] - start).collect(),
        num_speakers: config.eval_speakers,
        ..truth.clone()
    };
    let mut trials = make_trials(
        &eval_view,
        config.n_target_trials,
        config.n_nontarget_trials,
        config.trial_seed,
    )?;
    for t in &mut trials {
        t.enroll = eval_rows[t.enroll];
        t.test = eval_rows[t.test];
    }
    truth.trials = trials;
    io::save_feature_corpus(&paths.features(), &corpus)?;
    write_json(
        &paths.truth(),
        &serde_json::to_value(&truth).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    write_manifest(paths, "synth", config, &[], &[&paths.features(), &paths.truth()])
}

fn stage_train_ubm(config: &PipelineConfig, paths: &Paths) -> Result<()> {
    require("train-ubm", &paths.features())?;
    let corpus = io::load_feature_corpus(&paths.features())?;
    let truth = load_truth("train-ubm", paths)?;
    let rows = train_rows(config, &truth);
    let train: Vec<_> = rows.iter().map(|&u| corpus[u].clone()).collect();
    let (ubm, report) = train_ubm(
        &train,
        config.ubm_components,
        config.ubm_iterations,
        config.seed,
    )?;
    io::save_ubm(
        &paths.ubm(),
        &ubm,
        json!({
            "log_likelihood": report.log_likelihood,
            "collapse_events": report.collapse_events,
            "seed": config.seed,
        }),
    )?;
    write_manifest(
        paths,
        "train-ubm",
        config,
        &[&paths.features(), &paths.truth()],
        &[&paths.ubm()],
    )
}

fn stage_stats(config: &PipelineConfig, paths: &Paths) -> Result<()> {
    require("stats", &paths.features())?;
    require("stats", &paths.ubm())?;
    let corpus = io::load_feature_corpus(&paths.features())?;
    let ubm = io::load_ubm(&paths.ubm())?;
    let stats = accumulate_corpus(&ubm, &corpus)?;
    io::save_stats(&paths.stats(), &stats, Value::Null)?;
    write_manifest(
        paths,
        "stats",
        config,
        &[&paths.features(), &paths.ubm()],
        &[&paths.stats()],
    )
}

fn stage_supervectors(config: &PipelineConfig, paths: &Paths) -> Result<()> {
    require("supervectors", &paths.stats())?;
    require("supervectors", &paths.ubm())?;
    let stats = io::load_stats(&paths.stats())?;
    let ubm = io::load_ubm(&paths.ubm())?;
    let truth = load_truth("supervectors", paths)?;
    let svs = crate::parallel::ordered_map(&stats, |s| {
        map_adapt(&ubm, s, config.relevance_factor)
    });
    let mut ids = Vec::with_capacity(svs.len());
    let mut matrix = DMatrix::zeros(svs.len(), ubm.supervector_dim());
    for (i, sv) in svs.into_iter().enumerate() {
        let sv = sv?;
        matrix.row_mut(i).copy_from(&sv.values.transpose());
        ids.push(sv.utterance_id);
    }
    // Center with the training-split mean only; held-out vectors get the
    // same shift.
    let rows = train_rows(config, &truth);
    let mut mean = DVector::zeros(matrix.ncols());
    for &u in &rows {
        mean += matrix.row(u).transpose() / rows.len() as f64;
    }
    for i in 0..matrix.nrows() {
        let centered = matrix.row(i) - mean.transpose();
        matrix.row_mut(i).copy_from(&centered);
    }
    let set = SupervectorSet {
        ids,
        matrix,
        mean,
        centered: true,
    };
    io::save_supervector_set(
        &paths.supervectors(),
        &set,
        json!({ "relevance_factor": config.relevance_factor }),
    )?;
    write_manifest(
        paths,
        "supervectors",
        config,
        &[&paths.stats(), &paths.ubm(), &paths.truth()],
        &[&paths.supervectors()],
    )
}

fn subset_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), m.ncols());
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).copy_from(&m.row(r));
    }
    out
}

fn stage_train_tvm(config: &PipelineConfig, paths: &Paths) -> Result<()> {
    let truth = load_truth("train-tvm", paths)?;
    let rows = train_rows(config, &truth);
    let cfg = TvmConfig {
        seed: config.seed,
        ..config.tvm
    };
    let (model, report) = match cfg.method {
        TvmMethod::Fefa => {
            require("train-tvm", &paths.stats())?;
            require("train-tvm", &paths.ubm())?;
            let stats = io::load_stats(&paths.stats())?;
            let ubm = io::load_ubm(&paths.ubm())?;
            let train: Vec<_> = rows.iter().map(|&u| stats[u].clone()).collect();
            fefa_train(&train, &ubm, &cfg)?
        }
        _ => {
            require("train-tvm", &paths.supervectors())?;
            let set = io::load_supervector_set(&paths.supervectors())?;
            let train_set = SupervectorSet {
                ids: rows.iter().map(|&u| set.ids[u].clone()).collect(),
                matrix: subset_rows(&set.matrix, &rows),
                mean: set.mean.clone(),
                centered: true,
            };
            let speaker_of: Vec<usize> = rows.iter().map(|&u| truth.speaker_of[u]).collect();
            match cfg.method {
                TvmMethod::Pca => pca_train(&train_set, cfg.d)?,
                TvmMethod::Ppca => ppca_train(&train_set, &cfg)?,
                TvmMethod::Fa => fa_train(&train_set, &cfg)?,
                TvmMethod::Ppls => {
                    let targets =
                        SupervisionTargets::one_hot(&speaker_of, config.eval_start());
                    ppls_train(&train_set, &targets, &cfg)?
                }
                TvmMethod::Sppca => {
                    // Speaker-dependent supervectors: MAP adaptation on the
                    // statistics pooled over each speaker's utterances, with
                    // the same relevance factor as the utterance vectors.
                    require("train-tvm", &paths.stats())?;
                    require("train-tvm", &paths.ubm())?;
                    let stats = io::load_stats(&paths.stats())?;
                    let ubm = io::load_ubm(&paths.ubm())?;
                    let per_speaker = speaker_pooled_supervectors(
                        &stats,
                        &rows,
                        &speaker_of,
                        config.eval_start(),
                        &ubm,
                        config.relevance_factor,
                    )?;
                    let targets =
                        SupervisionTargets::speaker_supervectors(&speaker_of, &per_speaker);
                    sppca_train(&train_set, &targets, &cfg)?
                }
                TvmMethod::Fefa => unreachable!(),
            }
        }
    };
    io::save_tvm(
        &paths.tvm(),
        &model,
        &io::TvmAudit {
            iterations: cfg.iterations,
            max_principle: cfg.max_principle,
            seed: cfg.seed,
            objective: report.objective,
            warnings: report.warnings,
        },
    )?;
    let inputs: Vec<PathBuf> = if cfg.method == TvmMethod::Fefa {
        vec![paths.stats(), paths.ubm(), paths.truth()]
    } else {
        vec![paths.supervectors(), paths.truth()]
    };
    let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    write_manifest(paths, "train-tvm", config, &input_refs, &[&paths.tvm()])
}

/// One MAP supervector per speaker from the speaker's pooled statistics.
fn speaker_pooled_supervectors(
    stats: &[crate::gmm::SufficientStats],
    rows: &[usize],
    speaker_of: &[usize],
    num_speakers: usize,
    ubm: &crate::gmm::DiagonalGmm,
    relevance_factor: f64,
) -> Result<Vec<DVector<f64>>> {
    let mut by_speaker: Vec<Vec<&crate::gmm::SufficientStats>> = vec![Vec::new(); num_speakers];
    for (i, &u) in rows.iter().enumerate() {
        by_speaker[speaker_of[i]].push(&stats[u]);
    }
    by_speaker
        .into_iter()
        .enumerate()
        .map(|(s, parts)| {
            if parts.is_empty() {
                return Err(Error::SpeakerWithNoUtterances(s.to_string()));
            }
            let pooled =
                crate::gmm::SufficientStats::pooled(format!("speaker-{s}"), &parts);
            Ok(map_adapt(ubm, &pooled, relevance_factor)?.values)
        })
        .collect()
}

fn stage_extract(config: &PipelineConfig, paths: &Paths) -> Result<()> {
    require("extract", &paths.tvm())?;
    let (model, _) = io::load_tvm(&paths.tvm())?;
    let (ids, ivectors): (Vec<String>, Vec<DVector<f64>>) = match &model {
        TvModel::Fefa { v, ubm } => {
            require("extract", &paths.stats())?;
            let stats = io::load_stats(&paths.stats())?;
            let extractor = FefaExtractor::new(ubm, v);
            let ivs = crate::parallel::ordered_map(&stats, |s| extractor.extract(s));
            let mut ids = Vec::with_capacity(stats.len());
            let mut out = Vec::with_capacity(stats.len());
            for (s, iv) in stats.iter().zip(ivs) {
                ids.push(s.utterance_id.clone());
                out.push(iv?.mu);
            }
            (ids, out)
        }
        _ => {
            require("extract", &paths.supervectors())?;
            let set = io::load_supervector_set(&paths.supervectors())?;
            let rows: Vec<usize> = (0..set.matrix.nrows()).collect();
            let out = crate::parallel::ordered_map(&rows, |&u| {
                let m = set.matrix.row(u).transpose();
                match &model {
                    TvModel::Pca { v, .. } => Ok(pca_extract(v, &m)),
                    TvModel::Ppca { v, sigma2 } => {
                        Ok(LinearExtractor::for_ppca(v, *sigma2).extract(&m).mu)
                    }
                    TvModel::Fa { v, psi } => {
                        Ok(LinearExtractor::for_fa(v, psi).extract(&m).mu)
                    }
                    TvModel::Ppls { .. } | TvModel::Sppca { .. } => {
                        ppls_extract_testside(&model, &m).map(|p| p.mu)
                    }
                    TvModel::Fefa { .. } => unreachable!(),
                }
            });
            let out: Result<Vec<DVector<f64>>> = out.into_iter().collect();
            (set.ids.clone(), out?)
        }
    };
    let d = model.ivector_dim();
    let mut matrix = DMatrix::zeros(ivectors.len(), d);
    for (i, iv) in ivectors.iter().enumerate() {
        matrix.row_mut(i).copy_from(&iv.transpose());
    }
    io::save_vector_set(
        &paths.ivectors(),
        "ivectors",
        &ids,
        &matrix,
        &DVector::zeros(d),
        json!({ "method": model.method().name() }),
    )?;
    let inputs: Vec<PathBuf> = if matches!(model, TvModel::Fefa { .. }) {
        vec![paths.tvm(), paths.stats()]
    } else {
        vec![paths.tvm(), paths.supervectors()]
    };
    let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    write_manifest(paths, "extract", config, &input_refs, &[&paths.ivectors()])
}

fn stage_train_backend(config: &PipelineConfig, paths: &Paths) -> Result<()> {
    require("train-backend", &paths.ivectors())?;
    let set = io::load_vector_set(&paths.ivectors(), "ivectors")?;
    let truth = load_truth("train-backend", paths)?;
    let rows = train_rows(config, &truth);
    let train = subset_rows(&set.matrix, &rows);
    let post = PostProcessor::fit(&train)?;
    let mut processed = DMatrix::zeros(rows.len(), train.ncols());
    for i in 0..rows.len() {
        processed
            .row_mut(i)
            .copy_from(&post.apply(&train.row(i).transpose()).transpose());
    }
    let labels: Vec<usize> = rows.iter().map(|&u| truth.speaker_of[u]).collect();
    let (plda, report) = plda_train(
        &processed,
        &labels,
        config.plda_rank,
        config.plda_iterations,
        config.seed,
    )?;
    io::save_backend(
        &paths.backend(),
        &post,
        &plda,
        json!({ "log_likelihood": report.log_likelihood, "seed": config.seed }),
    )?;
    write_manifest(
        paths,
        "train-backend",
        config,
        &[&paths.ivectors(), &paths.truth()],
        &[&paths.backend()],
    )
}

fn stage_score(config: &PipelineConfig, paths: &Paths) -> Result<()> {
    require("score", &paths.ivectors())?;
    require("score", &paths.backend())?;
    let set = io::load_vector_set(&paths.ivectors(), "ivectors")?;
    let (post, plda) = io::load_backend(&paths.backend())?;
    let truth = load_truth("score", paths)?;
    let scorer = PldaScorer::new(&plda)?;
    let processed: Vec<DVector<f64>> = (0..set.matrix.nrows())
        .map(|i| post.apply(&set.matrix.row(i).transpose()))
        .collect();
    let mut w = BufWriter::new(File::create(paths.scores())?);
    for t in &truth.trials {
        let s = scorer.score(&processed[t.enroll], &processed[t.test]);
        writeln!(
            w,
            "{} {} {:.12e} {}",
            set.ids[t.enroll],
            set.ids[t.test],
            s,
            if t.target { "target" } else { "nontarget" }
        )?;
    }
    drop(w);
    write_manifest(
        paths,
        "score",
        config,
        &[&paths.ivectors(), &paths.backend(), &paths.truth()],
        &[&paths.scores()],
    )
}

/// Parse a scores file back into a trial set.
pub fn read_scores(path: &Path) -> Result<TrialSet> {
    let text = std::fs::read_to_string(path)?;
    let mut trials = TrialSet::default();
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!(
                "scores line {}: expected 'enroll test score label'",
                lineno + 1
            )));
        }
        let score: f64 = fields[2]
            .parse()
            .map_err(|_| Error::Format(format!("scores line {}: bad score", lineno + 1)))?;
        let target = match fields[3] {
            "target" => true,
            "nontarget" => false,
            other => {
                return Err(Error::Format(format!(
                    "scores line {}: unknown label '{other}'",
                    lineno + 1
                )))
            }
        };
        trials.push(score, target);
    }
    Ok(trials)
}

fn stage_evaluate(config: &PipelineConfig, paths: &Paths) -> Result<()> {
    require("evaluate", &paths.scores())?;
    let trials = read_scores(&paths.scores())?;
    let eer_value = eer(&trials)?;
    let dcf = min_dcf_sre10(&trials)?;
    let ci = if eer_value > 0.0 && eer_value < 1.0 {
        Some(eer_confidence_interval(eer_value, trials.len(), 0.95)?)
    } else {
        None
    };
    // Rates are reported in percent (x100).
    let metrics = json!({
        "schema": io::CONTAINER_SCHEMA,
        "method": config.tvm.method.name(),
        "max_principle": config.tvm.max_principle.index(),
        "n_trials": trials.len(),
        "eer_percent": 100.0 * eer_value,
        "min_dcf_percent": 100.0 * dcf,
        "eer_ci95_percent": ci.map(|c| 100.0 * c),
    });
    write_json(&paths.metrics(), &metrics)?;

    let curve = det_curve(&trials)?;
    let mut w = BufWriter::new(File::create(paths.det())?);
    writeln!(w, "threshold,p_miss,p_fa,probit_p_miss,probit_p_fa")?;
    for p in &curve.points {
        writeln!(
            w,
            "{:.12e},{:.12},{:.12},{:.12},{:.12}",
            p.threshold,
            p.p_miss,
            p.p_fa,
            probit(p.p_miss),
            probit(p.p_fa)
        )?;
    }
    drop(w);
    write_manifest(
        paths,
        "evaluate",
        config,
        &[&paths.scores()],
        &[&paths.metrics(), &paths.det()],
    )
}

/// Metrics produced by the `evaluate` stage, reparsed. Rates in percent.
#[derive(Debug, Deserialize)]
pub struct Metrics {
    pub method: String,
    pub max_principle: u8,
    pub n_trials: usize,
    pub eer_percent: f64,
    pub min_dcf_percent: f64,
    pub eer_ci95_percent: Option<f64>,
}

pub fn read_metrics(dir: &Path) -> Result<Metrics> {
    let f = File::open(Paths::new(dir).metrics())?;
    serde_json::from_reader(f).map_err(|e| Error::Format(e.to_string()))
}
