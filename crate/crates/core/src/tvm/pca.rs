//! Non-iterative PCA baseline for supervector compression.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::supervector::SupervectorSet;
use crate::tvm::{TvModel, TvTrainReport};

/// PCA of a centered supervector set. The projection columns are the top-d
/// right singular vectors of the `U x h` data matrix, obtained from the
/// eigendecomposition of the h x h Gram matrix. If fewer than `d` nonzero
/// singular values exist, the available rank is returned and a warning is
/// recorded (RankDeficient).
pub fn pca_train(set: &SupervectorSet, d: usize) -> Result<(TvModel, TvTrainReport)> {
    let u = set.num_vectors();
    let h = set.dim();
    if d < 1 || d >= h {
        return Err(Error::ConfigInconsistent {
            stage: "train-tvm".into(),
            reason: format!("require 1 <= d < h, got d={d}, h={h}"),
        });
    }
    if u < d {
        return Err(Error::ConfigInconsistent {
            stage: "train-tvm".into(),
            reason: format!("need at least d={d} supervectors, got {u}"),
        });
    }

    let gram = set.matrix.tr_mul(&set.matrix); // h x h
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..h).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let max_eig = eig.eigenvalues[order[0]].max(0.0);
    let tol = max_eig * 1e-12;
    let rank = order
        .iter()
        .take_while(|&&i| eig.eigenvalues[i] > tol)
        .count();

    let keep = d.min(rank);
    let mut v = DMatrix::zeros(h, keep);
    for (col, &i) in order.iter().take(keep).enumerate() {
        v.column_mut(col).copy_from(&eig.eigenvectors.column(i));
    }

    let mut report = TvTrainReport::default();
    // Singular values of the data matrix, for audit.
    report.objective = order
        .iter()
        .take(keep)
        .map(|&i| eig.eigenvalues[i].max(0.0).sqrt())
        .collect();
    if keep < d {
        report.warnings.push(format!(
            "rank deficient: requested d={d}, only {keep} nonzero singular values (RankDeficient)"
        ));
    }

    Ok((
        TvModel::Pca {
            v,
            mean: set.mean.clone(),
        },
        report,
    ))
}

/// Project a centered supervector: w = V' m.
pub fn pca_extract(v: &DMatrix<f64>, m: &DVector<f64>) -> DVector<f64> {
    v.tr_mul(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::supervector::{center_set, Supervector};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn set_from_rows(rows: Vec<DVector<f64>>) -> SupervectorSet {
        let svs: Vec<Supervector> = rows
            .into_iter()
            .enumerate()
            .map(|(i, values)| Supervector {
                utterance_id: format!("u{i}"),
                values,
            })
            .collect();
        center_set(&svs).unwrap()
    }

    #[test]
    fn exact_planar_data_reconstructed() {
        // Data lying exactly in a known 2-D plane of a 5-D space.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b1 = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0, 1.0]).normalize();
        let b2 = DVector::from_vec(vec![0.0, 1.0, -1.0, 1.0, 0.0]).normalize();
        let rows: Vec<DVector<f64>> = (0..40)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                &b1 * (2.0 * a) + &b2 * b
            })
            .collect();
        let set = set_from_rows(rows);
        let (model, _) = pca_train(&set, 2).unwrap();
        let v = model.v();
        for i in 0..set.num_vectors() {
            let m = set.vector(i);
            let recon = v * pca_extract(v, &m);
            assert!((recon - m).norm() < 1e-8);
        }
    }

    #[test]
    fn leading_direction_matches_eigenvector_oracle() {
        // 2-D correlated Gaussian cloud; oracle = eigendecomposition of the
        // 2x2 sample covariance.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<DVector<f64>> = (0..5000)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                DVector::from_vec(vec![3.0 * a + 0.5 * b, 1.5 * a + b])
            })
            .collect();
        let set = set_from_rows(rows);
        let (model, _) = pca_train(&set, 1).unwrap();
        let v = model.v().column(0).into_owned();

        let u = set.num_vectors() as f64;
        let cov = set.matrix.tr_mul(&set.matrix) / u;
        let eig = cov.symmetric_eigen();
        let lead = if eig.eigenvalues[0] > eig.eigenvalues[1] { 0 } else { 1 };
        let e = eig.eigenvectors.column(lead).into_owned();
        let cosine = v.dot(&e).abs().min(1.0);
        assert!(cosine.acos() < 1e-6, "angle {} too large", cosine.acos());
    }

    #[test]
    fn training_mean_projects_to_zero() {
        let rows: Vec<DVector<f64>> = vec![
            DVector::from_vec(vec![1.0, 2.0, 3.0]),
            DVector::from_vec(vec![-1.0, 0.0, 1.0]),
            DVector::from_vec(vec![0.5, -1.0, 2.0]),
        ];
        let set = set_from_rows(rows);
        let (model, _) = pca_train(&set, 2).unwrap();
        let TvModel::Pca { v, mean } = &model else { unreachable!() };
        // The training mean, centered, is the zero vector.
        let centered_mean = mean - mean;
        let w = pca_extract(v, &centered_mean);
        assert_eq!(w.norm(), 0.0);
    }

    #[test]
    fn columns_orthonormal_and_variances_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rows: Vec<DVector<f64>> = (0..200)
            .map(|_| DVector::from_fn(6, |j, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * (1.0 + j as f64)
            }))
            .collect();
        let set = set_from_rows(rows);
        let (model, _) = pca_train(&set, 3).unwrap();
        let v = model.v();
        let vtv = v.tr_mul(v);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((vtv[(i, j)] - expect).abs() < 1e-8);
            }
        }
        // Per-coordinate empirical variances of projected training data are
        // non-increasing.
        let proj = &set.matrix * v; // U x 3
        let u = proj.nrows() as f64;
        let vars: Vec<f64> = (0..3)
            .map(|j| proj.column(j).iter().map(|&x| x * x).sum::<f64>() / u)
            .collect();
        assert!(vars[0] >= vars[1] && vars[1] >= vars[2]);
    }

    #[test]
    fn rank_deficiency_signaled() {
        // Three points in a 1-D affine subspace of R^4 -> rank 1 after centering.
        let base = DVector::from_vec(vec![1.0, -1.0, 2.0, 0.0]);
        let rows: Vec<DVector<f64>> = (0..3).map(|i| &base * (i as f64)).collect();
        let set = set_from_rows(rows);
        let (model, report) = pca_train(&set, 3).unwrap();
        assert_eq!(model.v().ncols(), 1);
        assert!(!report.warnings.is_empty());
    }
}
