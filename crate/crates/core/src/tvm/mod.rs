//! Total-variability models: FEFA over Baum-Welch statistics, and five
//! supervector-compression methods (PCA, PPCA, FA, PPLS, SPPCA) under two
//! maximization principles.

mod appendix;
mod fefa;
mod linear;
mod pca;

pub use appendix::{verify_posterior_appendix, AppendixReport};
pub use fefa::{fefa_extract, fefa_train, FefaExtractor};
pub use linear::{
    fa_extract, fa_train, marginal_log_likelihood, ppca_extract, ppca_train,
    ppls_extract_label_prediction, ppls_extract_testside, ppls_extract_trainside, ppls_train,
    sppca_train, LinearExtractor,
    NoiseModel, SupervisedExtractor,
};
pub use pca::{pca_extract, pca_train};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::gmm::DiagonalGmm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvmMethod {
    Fefa,
    Pca,
    Ppca,
    Fa,
    Ppls,
    Sppca,
}

impl TvmMethod {
    pub fn name(&self) -> &'static str {
        match self {
            TvmMethod::Fefa => "fefa",
            TvmMethod::Pca => "pca",
            TvmMethod::Ppca => "ppca",
            TvmMethod::Fa => "fa",
            TvmMethod::Ppls => "ppls",
            TvmMethod::Sppca => "sppca",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fefa" => Some(TvmMethod::Fefa),
            "pca" => Some(TvmMethod::Pca),
            "ppca" => Some(TvmMethod::Ppca),
            "fa" => Some(TvmMethod::Fa),
            "ppls" => Some(TvmMethod::Ppls),
            "sppca" => Some(TvmMethod::Sppca),
            _ => None,
        }
    }
}

/// M-step second-moment convention: principle 1 uses the full posterior
/// moment E[ww'] = Sigma + mu mu'; principle 2 uses the point estimate
/// mu mu'.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxPrinciple {
    One,
    Two,
}

impl MaxPrinciple {
    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            1 => Some(MaxPrinciple::One),
            2 => Some(MaxPrinciple::Two),
            _ => None,
        }
    }

    pub fn index(&self) -> u8 {
        match self {
            MaxPrinciple::One => 1,
            MaxPrinciple::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TvmConfig {
    /// i-vector dimension.
    pub d: usize,
    pub iterations: usize,
    pub max_principle: MaxPrinciple,
    pub seed: u64,
    pub method: TvmMethod,
    /// Supervision weight for PPLS/SPPCA.
    pub beta: f64,
}

impl TvmConfig {
    pub fn new(method: TvmMethod, d: usize) -> Self {
        Self {
            d,
            iterations: 5,
            max_principle: MaxPrinciple::One,
            seed: 0,
            method,
            beta: 1.0,
        }
    }
}

/// Trained total-variability model.
#[derive(Debug, Clone)]
pub enum TvModel {
    Fefa {
        v: DMatrix<f64>,
        ubm: DiagonalGmm,
    },
    Pca {
        /// Orthonormal columns.
        v: DMatrix<f64>,
        mean: DVector<f64>,
    },
    Ppca {
        v: DMatrix<f64>,
        sigma2: f64,
    },
    Fa {
        v: DMatrix<f64>,
        psi: DVector<f64>,
    },
    Ppls {
        v: DMatrix<f64>,
        q: DMatrix<f64>,
        sigma2: f64,
        rho2: f64,
        beta: f64,
        label_mean: DVector<f64>,
    },
    Sppca {
        v: DMatrix<f64>,
        q: DMatrix<f64>,
        sigma2: f64,
        rho2: f64,
        beta: f64,
        target_mean: DVector<f64>,
    },
}

impl TvModel {
    pub fn method(&self) -> TvmMethod {
        match self {
            TvModel::Fefa { .. } => TvmMethod::Fefa,
            TvModel::Pca { .. } => TvmMethod::Pca,
            TvModel::Ppca { .. } => TvmMethod::Ppca,
            TvModel::Fa { .. } => TvmMethod::Fa,
            TvModel::Ppls { .. } => TvmMethod::Ppls,
            TvModel::Sppca { .. } => TvmMethod::Sppca,
        }
    }

    pub fn v(&self) -> &DMatrix<f64> {
        match self {
            TvModel::Fefa { v, .. }
            | TvModel::Pca { v, .. }
            | TvModel::Ppca { v, .. }
            | TvModel::Fa { v, .. }
            | TvModel::Ppls { v, .. }
            | TvModel::Sppca { v, .. } => v,
        }
    }

    pub fn ivector_dim(&self) -> usize {
        self.v().ncols()
    }
}

/// Posterior i-vector distribution: mean (the i-vector) and covariance.
/// The covariance is utterance-dependent only for FEFA.
#[derive(Debug, Clone)]
pub struct IVectorPosterior {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

/// Per-training-run audit record.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TvTrainReport {
    /// Objective value per iteration (marginal log-likelihood for the
    /// supervector-compression methods, the EM auxiliary up to an additive
    /// constant for FEFA). Entry 0 is the value before the first update.
    pub objective: Vec<f64>,
    /// Wall-clock seconds per training iteration (E-step plus M-step only).
    pub iter_seconds: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Supervision data for PPLS (centered one-hot speaker labels) or SPPCA
/// (centered speaker-dependent supervectors). `matrix` is `U x k`, one row
/// per training utterance.
#[derive(Debug, Clone)]
pub struct SupervisionTargets {
    pub matrix: DMatrix<f64>,
    pub mean: DVector<f64>,
}

impl SupervisionTargets {
    /// Encode speaker indices as centered one-hot vectors (PPLS).
    pub fn one_hot(speaker_of: &[usize], num_speakers: usize) -> Self {
        let u = speaker_of.len();
        let mut mean = DVector::zeros(num_speakers);
        for &s in speaker_of {
            mean[s] += 1.0 / u as f64;
        }
        let mut matrix = DMatrix::zeros(u, num_speakers);
        for (i, &s) in speaker_of.iter().enumerate() {
            for j in 0..num_speakers {
                matrix[(i, j)] = if j == s { 1.0 } else { 0.0 } - mean[j];
            }
        }
        Self { matrix, mean }
    }

    /// Assign each utterance its speaker's supervector and center over
    /// utterances (SPPCA).
    pub fn speaker_supervectors(speaker_of: &[usize], per_speaker: &[DVector<f64>]) -> Self {
        let u = speaker_of.len();
        let h = per_speaker[0].len();
        let mut mean = DVector::zeros(h);
        for &s in speaker_of {
            mean += &per_speaker[s] / u as f64;
        }
        let mut matrix = DMatrix::zeros(u, h);
        for (i, &s) in speaker_of.iter().enumerate() {
            for j in 0..h {
                matrix[(i, j)] = per_speaker[s][j] - mean[j];
            }
        }
        Self { matrix, mean }
    }
}
