//! Relevance-MAP adaptation of UBM means and supervector centering.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gmm::{DiagonalGmm, SufficientStats};

/// Concatenated MAP-adapted component means, component-major:
/// component c occupies values[c*F .. (c+1)*F].
#[derive(Debug, Clone)]
pub struct Supervector {
    pub utterance_id: String,
    pub values: DVector<f64>,
}

/// A set of supervectors stacked as a `U x h` matrix, together with the
/// training mean used for centering.
#[derive(Debug, Clone)]
pub struct SupervectorSet {
    pub ids: Vec<String>,
    pub matrix: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub centered: bool,
}

impl SupervectorSet {
    pub fn num_vectors(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// The u-th (centered) supervector as a column vector.
    pub fn vector(&self, u: usize) -> DVector<f64> {
        self.matrix.row(u).transpose()
    }
}

/// Relevance-MAP adaptation of the UBM means for one utterance:
/// mu_hat_c = alpha_c * (f_c / n_c) + (1 - alpha_c) * mu_c with
/// alpha_c = n_c / (n_c + r). Components with n_c = 0 keep the UBM mean.
pub fn map_adapt(
    ubm: &DiagonalGmm,
    stats: &SufficientStats,
    relevance_factor: f64,
) -> Result<Supervector> {
    if relevance_factor < 0.0 {
        return Err(Error::NegativeRelevanceFactor(relevance_factor));
    }
    let c = ubm.num_components();
    let f = ubm.dim();
    if stats.n.len() != c || stats.f.ncols() != f {
        return Err(Error::DimensionMismatch {
            expected: c * f,
            got: stats.n.len() * stats.f.ncols(),
        });
    }
    let mut values = DVector::zeros(c * f);
    for ci in 0..c {
        let n = stats.n[ci];
        for j in 0..f {
            let mu = ubm.means[(ci, j)];
            values[ci * f + j] = if n > 0.0 {
                let alpha = if relevance_factor == 0.0 {
                    1.0
                } else {
                    n / (n + relevance_factor)
                };
                alpha * (stats.f[(ci, j)] / n) + (1.0 - alpha) * mu
            } else {
                mu
            };
        }
    }
    Ok(Supervector {
        utterance_id: stats.utterance_id.clone(),
        values,
    })
}

/// Center a training set of supervectors with its own mean.
pub fn center_set(vectors: &[Supervector]) -> Result<SupervectorSet> {
    if vectors.is_empty() {
        return Err(Error::EmptySet);
    }
    let h = vectors[0].values.len();
    let u = vectors.len();
    let mut mean = DVector::zeros(h);
    for v in vectors {
        mean += &v.values;
    }
    mean /= u as f64;
    let mut matrix = DMatrix::zeros(u, h);
    for (i, v) in vectors.iter().enumerate() {
        for j in 0..h {
            matrix[(i, j)] = v.values[j] - mean[j];
        }
    }
    Ok(SupervectorSet {
        ids: vectors.iter().map(|v| v.utterance_id.clone()).collect(),
        matrix,
        mean,
        centered: true,
    })
}

/// Center a (test) supervector with a stored training mean.
pub fn apply_centering(mean: &DVector<f64>, sv: &Supervector) -> Supervector {
    Supervector {
        utterance_id: sv.utterance_id.clone(),
        values: &sv.values - mean,
    }
}

/// Undo centering given the stored training mean.
pub fn apply_centering_inverse(mean: &DVector<f64>, sv: &Supervector) -> Supervector {
    Supervector {
        utterance_id: sv.utterance_id.clone(),
        values: &sv.values + mean,
    }
}
