//! Persistence formats.
//!
//! Numeric arrays use the SVMX binary matrix format: magic bytes `SVMX`,
//! format version (u16 LE), element type tag (u8, 1 = f64 little-endian),
//! rank (u8), dimensions as u64 LE list, then the row-major payload.
//! Model files are containers holding a JSON header (length-prefixed with a
//! u64 LE) followed by the SVMX blobs the header references in order.
//! Both formats are bit-exact: writing the same data twice produces
//! identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gmm::{DiagonalGmm, SufficientStats};
use crate::supervector::SupervectorSet;
use crate::tvm::{MaxPrinciple, TvmMethod, TvModel};

pub const SVMX_MAGIC: &[u8; 4] = b"SVMX";
pub const SVMX_VERSION: u16 = 1;
pub const ELEM_F64_LE: u8 = 1;
/// Version field stamped into every JSON container header.
pub const CONTAINER_SCHEMA: u32 = 1;

// ---------------------------------------------------------------------------
// SVMX arrays
// ---------------------------------------------------------------------------

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_svmx<W: Write>(w: &mut W, dims: &[u64], data: &[f64]) -> Result<()> {
    let expected: u64 = dims.iter().product();
    if expected != data.len() as u64 {
        return Err(format_err(format!(
            "svmx payload length {} does not match dims {:?}",
            data.len(),
            dims
        )));
    }
    w.write_all(SVMX_MAGIC)?;
    w.write_all(&SVMX_VERSION.to_le_bytes())?;
    w.write_all(&[ELEM_F64_LE, dims.len() as u8])?;
    for &d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    for &x in data {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_svmx<R: Read>(r: &mut R) -> Result<(Vec<u64>, Vec<f64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SVMX_MAGIC {
        return Err(format_err("bad magic bytes, not an SVMX array"));
    }
    let mut buf2 = [0u8; 2];
    r.read_exact(&mut buf2)?;
    let version = u16::from_le_bytes(buf2);
    if version != SVMX_VERSION {
        return Err(format_err(format!("unsupported svmx version {version}")));
    }
    r.read_exact(&mut buf2)?;
    let [elem, rank] = buf2;
    if elem != ELEM_F64_LE {
        return Err(format_err(format!("unsupported element type tag {elem}")));
    }
    let mut dims = Vec::with_capacity(rank as usize);
    let mut buf8 = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut buf8)?;
        dims.push(u64::from_le_bytes(buf8));
    }
    let count: u64 = dims.iter().product();
    if count > (1 << 33) {
        return Err(format_err("svmx array implausibly large"));
    }
    let mut data = Vec::with_capacity(count as usize);
    for _ in 0..count {
        r.read_exact(&mut buf8)?;
        data.push(f64::from_le_bytes(buf8));
    }
    Ok((dims, data))
}

/// Write a matrix as a rank-2 SVMX array (row-major).
pub fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    let mut data = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            data.push(m[(i, j)]);
        }
    }
    write_svmx(w, &[m.nrows() as u64, m.ncols() as u64], &data)
}

pub fn read_matrix<R: Read>(r: &mut R) -> Result<DMatrix<f64>> {
    let (dims, data) = read_svmx(r)?;
    if dims.len() != 2 {
        return Err(format_err(format!("expected rank-2 array, got rank {}", dims.len())));
    }
    Ok(DMatrix::from_row_slice(dims[0] as usize, dims[1] as usize, &data))
}

/// Write a vector as a rank-1 SVMX array.
pub fn write_vector<W: Write>(w: &mut W, v: &DVector<f64>) -> Result<()> {
    write_svmx(w, &[v.len() as u64], v.as_slice())
}

pub fn read_vector<R: Read>(r: &mut R) -> Result<DVector<f64>> {
    let (dims, data) = read_svmx(r)?;
    if dims.len() != 1 {
        return Err(format_err(format!("expected rank-1 array, got rank {}", dims.len())));
    }
    Ok(DVector::from_vec(data))
}

// ---------------------------------------------------------------------------
// Containers: u64 LE header length, JSON header, SVMX blobs in header order
// ---------------------------------------------------------------------------

pub fn write_container<W: Write, H: Serialize>(
    w: &mut W,
    header: &H,
    blobs: &[Vec<u8>],
) -> Result<()> {
    let json = serde_json::to_vec(header).map_err(|e| format_err(e.to_string()))?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for b in blobs {
        w.write_all(b)?;
    }
    Ok(())
}

pub fn read_container_header<R: Read, H: DeserializeOwned>(r: &mut R) -> Result<H> {
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let len = u64::from_le_bytes(buf8);
    if len > (1 << 24) {
        return Err(format_err("container header implausibly large"));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)?;
    serde_json::from_slice(&json).map_err(|e| format_err(e.to_string()))
}

fn svmx_matrix_bytes(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::new();
    write_matrix(&mut out, m).expect("in-memory write cannot fail");
    out
}

fn svmx_vector_bytes(v: &DVector<f64>) -> Vec<u8> {
    let mut out = Vec::new();
    write_vector(&mut out, v).expect("in-memory write cannot fail");
    out
}

fn check_kind(header: &ContainerHeader, kind: &str) -> Result<()> {
    if header.schema != CONTAINER_SCHEMA {
        return Err(format_err(format!("unsupported container schema {}", header.schema)));
    }
    if header.kind != kind {
        return Err(format_err(format!(
            "container holds a '{}', expected a '{kind}'",
            header.kind
        )));
    }
    Ok(())
}

/// Common JSON header of every model container. `arrays` names the SVMX
/// blobs following the header, in file order; `meta` holds kind-specific
/// scalars and audit data such as per-iteration objective values.
#[derive(Debug, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub schema: u32,
    pub kind: String,
    pub arrays: Vec<String>,
    #[serde(default)]
    pub meta: Value,
}

// -- UBM --------------------------------------------------------------------

pub fn save_ubm(path: &Path, ubm: &DiagonalGmm, meta: Value) -> Result<()> {
    let header = ContainerHeader {
        schema: CONTAINER_SCHEMA,
        kind: "ubm".into(),
        arrays: vec!["weights".into(), "means".into(), "variances".into()],
        meta,
    };
    let blobs = vec![
        svmx_vector_bytes(&ubm.weights),
        svmx_matrix_bytes(&ubm.means),
        svmx_matrix_bytes(&ubm.variances),
    ];
    let mut w = BufWriter::new(File::create(path)?);
    write_container(&mut w, &header, &blobs)
}

pub fn load_ubm(path: &Path) -> Result<DiagonalGmm> {
    let mut r = BufReader::new(File::open(path)?);
    let header: ContainerHeader = read_container_header(&mut r)?;
    check_kind(&header, "ubm")?;
    let weights = read_vector(&mut r)?;
    let means = read_matrix(&mut r)?;
    let variances = read_matrix(&mut r)?;
    DiagonalGmm::new(weights, means, variances)
}

// -- sufficient statistics ---------------------------------------------------

pub fn save_stats(path: &Path, stats: &[SufficientStats], meta: Value) -> Result<()> {
    let ids: Vec<&str> = stats.iter().map(|s| s.utterance_id.as_str()).collect();
    let header = ContainerHeader {
        schema: CONTAINER_SCHEMA,
        kind: "stats".into(),
        arrays: stats
            .iter()
            .flat_map(|s| vec![format!("{}/n", s.utterance_id), format!("{}/f", s.utterance_id)])
            .collect(),
        meta: serde_json::json!({ "utterances": ids, "extra": meta }),
    };
    let mut blobs = Vec::with_capacity(2 * stats.len());
    for s in stats {
        blobs.push(svmx_vector_bytes(&s.n));
        blobs.push(svmx_matrix_bytes(&s.f));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_container(&mut w, &header, &blobs)
}

pub fn load_stats(path: &Path) -> Result<Vec<SufficientStats>> {
    let mut r = BufReader::new(File::open(path)?);
    let header: ContainerHeader = read_container_header(&mut r)?;
    check_kind(&header, "stats")?;
    let ids: Vec<String> = serde_json::from_value(header.meta["utterances"].clone())
        .map_err(|e| format_err(e.to_string()))?;
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let n = read_vector(&mut r)?;
        let f = read_matrix(&mut r)?;
        out.push(SufficientStats {
            utterance_id: id,
            n,
            f,
        });
    }
    Ok(out)
}

// -- supervector / i-vector sets ----------------------------------------------

/// A labeled set of row vectors (supervectors or i-vectors) with the mean
/// recorded at save time.
pub struct VectorSetFile {
    pub ids: Vec<String>,
    pub matrix: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub meta: Value,
}

pub fn save_vector_set(
    path: &Path,
    kind: &str,
    ids: &[String],
    matrix: &DMatrix<f64>,
    mean: &DVector<f64>,
    meta: Value,
) -> Result<()> {
    if ids.len() != matrix.nrows() {
        return Err(format_err("id list length does not match row count"));
    }
    let header = ContainerHeader {
        schema: CONTAINER_SCHEMA,
        kind: kind.into(),
        arrays: vec!["matrix".into(), "mean".into()],
        meta: serde_json::json!({ "ids": ids, "extra": meta }),
    };
    let blobs = vec![svmx_matrix_bytes(matrix), svmx_vector_bytes(mean)];
    let mut w = BufWriter::new(File::create(path)?);
    write_container(&mut w, &header, &blobs)
}

pub fn load_vector_set(path: &Path, kind: &str) -> Result<VectorSetFile> {
    let mut r = BufReader::new(File::open(path)?);
    let header: ContainerHeader = read_container_header(&mut r)?;
    check_kind(&header, kind)?;
    let ids: Vec<String> = serde_json::from_value(header.meta["ids"].clone())
        .map_err(|e| format_err(e.to_string()))?;
    let matrix = read_matrix(&mut r)?;
    let mean = read_vector(&mut r)?;
    if ids.len() != matrix.nrows() {
        return Err(format_err("id list length does not match row count"));
    }
    Ok(VectorSetFile {
        ids,
        matrix,
        mean,
        meta: header.meta["extra"].clone(),
    })
}

pub fn save_supervector_set(path: &Path, set: &SupervectorSet, meta: Value) -> Result<()> {
    let meta = serde_json::json!({ "centered": set.centered, "extra": meta });
    save_vector_set(path, "supervectors", &set.ids, &set.matrix, &set.mean, meta)
}

pub fn load_supervector_set(path: &Path) -> Result<SupervectorSet> {
    let f = load_vector_set(path, "supervectors")?;
    let centered = f.meta["centered"].as_bool().unwrap_or(false);
    Ok(SupervectorSet {
        ids: f.ids,
        matrix: f.matrix,
        mean: f.mean,
        centered,
    })
}

// -- TVM models ---------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct TvmMeta {
    method: TvmMethod,
    d: usize,
    h: usize,
    iterations: usize,
    max_principle: usize,
    seed: u64,
    beta: Option<f64>,
    objective: Vec<f64>,
    #[serde(default)]
    warnings: Vec<String>,
}

/// Training context persisted next to a TVM for audit.
pub struct TvmAudit {
    pub iterations: usize,
    pub max_principle: MaxPrinciple,
    pub seed: u64,
    pub objective: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn save_tvm(path: &Path, model: &TvModel, audit: &TvmAudit) -> Result<()> {
    let (arrays, blobs, beta): (Vec<String>, Vec<Vec<u8>>, Option<f64>) = match model {
        TvModel::Fefa { v, ubm } => (
            vec![
                "v".into(),
                "ubm_weights".into(),
                "ubm_means".into(),
                "ubm_variances".into(),
            ],
            vec![
                svmx_matrix_bytes(v),
                svmx_vector_bytes(&ubm.weights),
                svmx_matrix_bytes(&ubm.means),
                svmx_matrix_bytes(&ubm.variances),
            ],
            None,
        ),
        TvModel::Pca { v, mean } => (
            vec!["v".into(), "mean".into()],
            vec![svmx_matrix_bytes(v), svmx_vector_bytes(mean)],
            None,
        ),
        TvModel::Ppca { v, sigma2 } => (
            vec!["v".into(), "sigma2".into()],
            vec![
                svmx_matrix_bytes(v),
                svmx_vector_bytes(&DVector::from_element(1, *sigma2)),
            ],
            None,
        ),
        TvModel::Fa { v, psi } => (
            vec!["v".into(), "psi".into()],
            vec![svmx_matrix_bytes(v), svmx_vector_bytes(psi)],
            None,
        ),
        TvModel::Ppls {
            v,
            q,
            sigma2,
            rho2,
            beta,
            label_mean,
        } => (
            vec!["v".into(), "q".into(), "scalars".into(), "label_mean".into()],
            vec![
                svmx_matrix_bytes(v),
                svmx_matrix_bytes(q),
                svmx_vector_bytes(&DVector::from_vec(vec![*sigma2, *rho2])),
                svmx_vector_bytes(label_mean),
            ],
            Some(*beta),
        ),
        TvModel::Sppca {
            v,
            q,
            sigma2,
            rho2,
            beta,
            target_mean,
        } => (
            vec!["v".into(), "q".into(), "scalars".into(), "target_mean".into()],
            vec![
                svmx_matrix_bytes(v),
                svmx_matrix_bytes(q),
                svmx_vector_bytes(&DVector::from_vec(vec![*sigma2, *rho2])),
                svmx_vector_bytes(target_mean),
            ],
            Some(*beta),
        ),
    };
    let meta = TvmMeta {
        method: model.method(),
        d: model.ivector_dim(),
        h: model.v().nrows(),
        iterations: audit.iterations,
        max_principle: audit.max_principle.index() as usize,
        seed: audit.seed,
        beta,
        objective: audit.objective.clone(),
        warnings: audit.warnings.clone(),
    };
    let header = ContainerHeader {
        schema: CONTAINER_SCHEMA,
        kind: "tvm".into(),
        arrays,
        meta: serde_json::to_value(&meta).map_err(|e| format_err(e.to_string()))?,
    };
    let mut w = BufWriter::new(File::create(path)?);
    write_container(&mut w, &header, &blobs)
}

pub fn load_tvm(path: &Path) -> Result<(TvModel, TvmAudit)> {
    let mut r = BufReader::new(File::open(path)?);
    let header: ContainerHeader = read_container_header(&mut r)?;
    check_kind(&header, "tvm")?;
    let meta: TvmMeta =
        serde_json::from_value(header.meta.clone()).map_err(|e| format_err(e.to_string()))?;
    let model = match meta.method {
        TvmMethod::Fefa => {
            let v = read_matrix(&mut r)?;
            let weights = read_vector(&mut r)?;
            let means = read_matrix(&mut r)?;
            let variances = read_matrix(&mut r)?;
            TvModel::Fefa {
                v,
                ubm: DiagonalGmm::new(weights, means, variances)?,
            }
        }
        TvmMethod::Pca => TvModel::Pca {
            v: read_matrix(&mut r)?,
            mean: read_vector(&mut r)?,
        },
        TvmMethod::Ppca => {
            let v = read_matrix(&mut r)?;
            let sigma2 = read_vector(&mut r)?[0];
            TvModel::Ppca { v, sigma2 }
        }
        TvmMethod::Fa => TvModel::Fa {
            v: read_matrix(&mut r)?,
            psi: read_vector(&mut r)?,
        },
        TvmMethod::Ppls | TvmMethod::Sppca => {
            let v = read_matrix(&mut r)?;
            let q = read_matrix(&mut r)?;
            let scalars = read_vector(&mut r)?;
            let mean = read_vector(&mut r)?;
            let beta = meta.beta.unwrap_or(1.0);
            if meta.method == TvmMethod::Ppls {
                TvModel::Ppls {
                    v,
                    q,
                    sigma2: scalars[0],
                    rho2: scalars[1],
                    beta,
                    label_mean: mean,
                }
            } else {
                TvModel::Sppca {
                    v,
                    q,
                    sigma2: scalars[0],
                    rho2: scalars[1],
                    beta,
                    target_mean: mean,
                }
            }
        }
    };
    let audit = TvmAudit {
        iterations: meta.iterations,
        max_principle: MaxPrinciple::from_index(meta.max_principle as u8)
            .ok_or_else(|| format_err("max_principle must be 1 or 2"))?,
        seed: meta.seed,
        objective: meta.objective,
        warnings: meta.warnings,
    };
    Ok((model, audit))
}

// -- backend (post-processor + PLDA) ------------------------------------------

pub fn save_backend(
    path: &Path,
    post: &crate::backend::PostProcessor,
    plda: &crate::backend::PldaModel,
    meta: Value,
) -> Result<()> {
    let header = ContainerHeader {
        schema: CONTAINER_SCHEMA,
        kind: "backend".into(),
        arrays: vec![
            "post_mean".into(),
            "whitener".into(),
            "plda_mean".into(),
            "f".into(),
            "within".into(),
        ],
        meta: serde_json::json!({
            "degenerate_covariance": post.degenerate_covariance,
            "extra": meta,
        }),
    };
    let blobs = vec![
        svmx_vector_bytes(&post.mean),
        svmx_matrix_bytes(&post.whitener),
        svmx_vector_bytes(&plda.mean),
        svmx_matrix_bytes(&plda.f),
        svmx_matrix_bytes(&plda.within),
    ];
    let mut w = BufWriter::new(File::create(path)?);
    write_container(&mut w, &header, &blobs)
}

pub fn load_backend(
    path: &Path,
) -> Result<(crate::backend::PostProcessor, crate::backend::PldaModel)> {
    let mut r = BufReader::new(File::open(path)?);
    let header: ContainerHeader = read_container_header(&mut r)?;
    check_kind(&header, "backend")?;
    let post = crate::backend::PostProcessor {
        mean: read_vector(&mut r)?,
        whitener: read_matrix(&mut r)?,
        degenerate_covariance: header.meta["degenerate_covariance"].as_bool().unwrap_or(false),
    };
    let plda = crate::backend::PldaModel {
        mean: read_vector(&mut r)?,
        f: read_matrix(&mut r)?,
        within: read_matrix(&mut r)?,
    };
    Ok((post, plda))
}

// -- generic labeled matrices (corpus features) -------------------------------

pub fn save_feature_corpus(path: &Path, corpus: &[crate::gmm::FeatureMatrix]) -> Result<()> {
    let ids: Vec<&str> = corpus.iter().map(|u| u.utterance_id.as_str()).collect();
    let header = ContainerHeader {
        schema: CONTAINER_SCHEMA,
        kind: "features".into(),
        arrays: ids.iter().map(|s| s.to_string()).collect(),
        meta: serde_json::json!({ "utterances": ids }),
    };
    let blobs: Vec<Vec<u8>> = corpus.iter().map(|u| svmx_matrix_bytes(&u.frames)).collect();
    let mut w = BufWriter::new(File::create(path)?);
    write_container(&mut w, &header, &blobs)
}

pub fn load_feature_corpus(path: &Path) -> Result<Vec<crate::gmm::FeatureMatrix>> {
    let mut r = BufReader::new(File::open(path)?);
    let header: ContainerHeader = read_container_header(&mut r)?;
    check_kind(&header, "features")?;
    let ids: Vec<String> = serde_json::from_value(header.meta["utterances"].clone())
        .map_err(|e| format_err(e.to_string()))?;
    ids.into_iter()
        .map(|id| {
            Ok(crate::gmm::FeatureMatrix {
                utterance_id: id,
                frames: read_matrix(&mut r)?,
            })
        })
        .collect()
}

// -- hashing -------------------------------------------------------------------

/// SHA-256 of a file, hex-encoded; used in stage manifests.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut f = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tvm::{MaxPrinciple, TvModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn random_matrix(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(r, c, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn svmx_round_trip_and_layout() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut bytes = Vec::new();
        write_matrix(&mut bytes, &m).unwrap();
        // 4 magic + 2 version + 1 elem + 1 rank + 2*8 dims + 6*8 payload.
        assert_eq!(bytes.len(), 4 + 2 + 1 + 1 + 16 + 48);
        assert_eq!(&bytes[..4], b"SVMX");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), SVMX_VERSION);
        assert_eq!(bytes[6], ELEM_F64_LE);
        assert_eq!(bytes[7], 2);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        // Row-major payload: first element of row 0 then the rest in order.
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 1.0);
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), 2.0);

        let back = read_matrix(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn svmx_bit_exact_for_special_values() {
        let v = DVector::from_vec(vec![
            0.0,
            -0.0,
            f64::MIN_POSITIVE,
            1.0 + f64::EPSILON,
            1e308,
            -1e-308,
        ]);
        let mut bytes = Vec::new();
        write_vector(&mut bytes, &v).unwrap();
        let back = read_vector(&mut bytes.as_slice()).unwrap();
        for (a, b) in v.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn svmx_rejects_corruption() {
        let mut bytes = Vec::new();
        write_vector(&mut bytes, &DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(read_vector(&mut bad_magic.as_slice()).is_err());
        let mut bad_version = bytes.clone();
        bad_version[4] = 99;
        assert!(read_vector(&mut bad_version.as_slice()).is_err());
        let truncated = &bytes[..bytes.len() - 3];
        assert!(read_vector(&mut &truncated[..]).is_err());
    }

    #[test]
    fn ubm_container_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ubm.bin");
        let ubm = DiagonalGmm::new(
            DVector::from_vec(vec![0.25, 0.75]),
            random_matrix(2, 3, 1),
            random_matrix(2, 3, 2).map(|x| x.abs() + 0.1),
        )
        .unwrap();
        save_ubm(&path, &ubm, serde_json::json!({"iterations": 5})).unwrap();
        let back = load_ubm(&path).unwrap();
        assert_eq!(back.weights, ubm.weights);
        assert_eq!(back.means, ubm.means);
        assert_eq!(back.variances, ubm.variances);
    }

    #[test]
    fn stats_container_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("stats.bin");
        let stats = vec![
            SufficientStats {
                utterance_id: "a".into(),
                n: DVector::from_vec(vec![1.5, 2.5]),
                f: random_matrix(2, 3, 3),
            },
            SufficientStats {
                utterance_id: "b".into(),
                n: DVector::from_vec(vec![0.5, 3.5]),
                f: random_matrix(2, 3, 4),
            },
        ];
        save_stats(&path, &stats, Value::Null).unwrap();
        let back = load_stats(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (x, y) in stats.iter().zip(&back) {
            assert_eq!(x.utterance_id, y.utterance_id);
            assert_eq!(x.n, y.n);
            assert_eq!(x.f, y.f);
        }
    }

    #[test]
    fn tvm_containers_round_trip_every_variant() {
        let dir = tempdir().unwrap();
        let audit = TvmAudit {
            iterations: 3,
            max_principle: MaxPrinciple::Two,
            seed: 9,
            objective: vec![-10.0, -8.0, -7.5],
            warnings: vec!["ridge".into()],
        };
        let ubm = DiagonalGmm::new(
            DVector::from_vec(vec![1.0]),
            random_matrix(1, 4, 5),
            random_matrix(1, 4, 6).map(|x| x.abs() + 0.1),
        )
        .unwrap();
        let models = vec![
            TvModel::Fefa {
                v: random_matrix(4, 2, 7),
                ubm,
            },
            TvModel::Pca {
                v: random_matrix(4, 2, 8),
                mean: DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]),
            },
            TvModel::Ppca {
                v: random_matrix(4, 2, 9),
                sigma2: 0.37,
            },
            TvModel::Fa {
                v: random_matrix(4, 2, 10),
                psi: DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]),
            },
            TvModel::Ppls {
                v: random_matrix(4, 2, 11),
                q: random_matrix(3, 2, 12),
                sigma2: 0.5,
                rho2: 0.25,
                beta: 2.0,
                label_mean: DVector::from_vec(vec![0.1, 0.2, 0.3]),
            },
            TvModel::Sppca {
                v: random_matrix(4, 2, 13),
                q: random_matrix(4, 2, 14),
                sigma2: 0.5,
                rho2: 0.25,
                beta: 0.5,
                target_mean: DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]),
            },
        ];
        for (i, model) in models.iter().enumerate() {
            let path = dir.path().join(format!("tvm{i}.bin"));
            save_tvm(&path, model, &audit).unwrap();
            let (back, audit_back) = load_tvm(&path).unwrap();
            assert_eq!(back.method(), model.method());
            assert_eq!(back.v(), model.v());
            assert_eq!(audit_back.objective, audit.objective);
            assert_eq!(audit_back.seed, 9);
            assert_eq!(audit_back.max_principle, MaxPrinciple::Two);
            // Mismatched kind is rejected.
            assert!(load_ubm(&path).is_err());
        }
    }

    #[test]
    fn vector_set_and_features_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("set.bin");
        let ids = vec!["u1".to_string(), "u2".to_string()];
        let m = random_matrix(2, 5, 20);
        let mean = DVector::from_vec(vec![1.0; 5]);
        save_vector_set(&path, "ivectors", &ids, &m, &mean, Value::Null).unwrap();
        let back = load_vector_set(&path, "ivectors").unwrap();
        assert_eq!(back.ids, ids);
        assert_eq!(back.matrix, m);
        assert_eq!(back.mean, mean);
        assert!(load_vector_set(&path, "supervectors").is_err());

        let corpus = vec![crate::gmm::FeatureMatrix {
            utterance_id: "utt".into(),
            frames: random_matrix(7, 3, 21),
        }];
        let fpath = dir.path().join("features.bin");
        save_feature_corpus(&fpath, &corpus).unwrap();
        let back = load_feature_corpus(&fpath).unwrap();
        assert_eq!(back[0].frames, corpus[0].frames);
    }

    #[test]
    fn writes_are_byte_identical() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("a.bin");
        let p2 = dir.path().join("b.bin");
        let ubm = DiagonalGmm::new(
            DVector::from_vec(vec![0.5, 0.5]),
            random_matrix(2, 4, 30),
            random_matrix(2, 4, 31).map(|x| x.abs() + 0.1),
        )
        .unwrap();
        save_ubm(&p1, &ubm, serde_json::json!({"seed": 1})).unwrap();
        save_ubm(&p2, &ubm, serde_json::json!({"seed": 1})).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(file_sha256(&p1).unwrap(), file_sha256(&p2).unwrap());
        assert_eq!(file_sha256(&p1).unwrap().len(), 64);
    }
}
