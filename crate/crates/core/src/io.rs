//! On-disk formats: matrix dumps, skeleton files, model directories, reports.
//!
//! Binary matrices are `CDMX` followed by little-endian `u64` rows and
//! columns and the row-major `f64` values. Every writer is deterministic:
//! identical inputs give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::reservoir::{Reservoir, ReservoirSpec, State};
use crate::skeleton::Skeleton;
use crate::training::{compose_closed_loop, RunTrace, TrainedModel, TrainingConfig};

const MATRIX_MAGIC: &[u8; 4] = b"CDMX";

pub fn matrix_to_bytes(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * m.as_slice().len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn matrix_from_bytes(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 20 || &bytes[..4] != MATRIX_MAGIC {
        return Err(Error::Format("not a matrix dump (bad magic)".into()));
    }
    let rows = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("matrix dump header overflows".into()))?;
    if body.len() != expected {
        return Err(Error::Format(format!(
            "matrix dump of {rows}x{cols} should hold {expected} value bytes, found {}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write_bytes(path, &matrix_to_bytes(m))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    matrix_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Comma-separated rows with full round-trip precision.
pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut s = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Skeleton samples as CSV, one row per step, no header.
pub fn skeleton_to_csv(sk: &Skeleton) -> String {
    let mut s = String::new();
    for row in sk.samples() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Metadata written next to a skeleton CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSidecar {
    pub label: String,
    pub dim: usize,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_steps: Option<usize>,
    /// How the samples were produced (generator name and parameters).
    pub source: serde_json::Value,
    /// SHA-256 of the CSV bytes.
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `<stem>.csv` and `<stem>.json`; returns both paths.
pub fn write_skeleton(dir: &Path, stem: &str, sk: &Skeleton, source: serde_json::Value) -> Result<(PathBuf, PathBuf)> {
    let csv = skeleton_to_csv(sk);
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    write_text(&csv_path, &csv)?;
    let sidecar = SkeletonSidecar {
        label: sk.label().to_string(),
        dim: sk.dim(),
        steps: sk.len(),
        period_steps: sk.period_steps(),
        source,
        sha256: sha256_hex(csv.as_bytes()),
    };
    write_json(&json_path, &sidecar)?;
    Ok((csv_path, json_path))
}

/// Reads a skeleton CSV, taking label and period from a sidecar when present.
pub fn read_skeleton(csv_path: &Path) -> Result<Skeleton> {
    let text = fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let name = csv_path.display().to_string();
    let points = crate::skeleton::parse_csv_points(&text, &name)?;
    let sidecar_path = csv_path.with_extension("json");
    let (period, label) = if sidecar_path.exists() {
        let meta: SkeletonSidecar = read_json(&sidecar_path)?;
        (meta.period_steps, meta.label)
    } else {
        let stem = csv_path.file_stem().map_or("skeleton".into(), |s| s.to_string_lossy().into_owned());
        (None, stem)
    };
    Skeleton::new(points, period, label)
}

/// Contents of `model.json` in a model directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub reservoir: ReservoirSpec,
    pub training: TrainingConfig,
    pub skeleton_label: String,
    pub skeleton_sha256: String,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Writes a trained model: the recurrent and input matrices, readout,
/// closed-loop start state, skeleton, and a manifest.
pub fn save_model(dir: &Path, model: &TrainedModel, sk: &Skeleton) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let res = &model.reservoir;
    write_matrix(&dir.join("w.bin"), res.w())?;
    write_matrix(&dir.join("w_in.bin"), res.w_in())?;
    write_matrix(&dir.join("w_out.bin"), &model.w_out)?;
    let x = Matrix::from_vec(1, model.n(), model.x_start.to_vec())?;
    write_matrix(&dir.join("x_start.bin"), &x)?;
    let (csv, _) = write_skeleton(dir, "skeleton", sk, serde_json::json!({ "saved-with-model": true }))?;
    let csv_bytes = fs::read(&csv).map_err(|e| Error::io(&csv, e))?;
    let manifest = ModelManifest {
        format_version: MODEL_FORMAT_VERSION,
        reservoir: *res.spec(),
        training: model.config.clone(),
        skeleton_label: sk.label().to_string(),
        skeleton_sha256: sha256_hex(&csv_bytes),
    };
    write_json(&dir.join("model.json"), &manifest)
}

/// Loads a model directory written by [`save_model`] together with its skeleton.
pub fn load_model(dir: &Path) -> Result<(TrainedModel, Skeleton)> {
    let manifest: ModelManifest = read_json(&dir.join("model.json"))?;
    if manifest.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported model format version {}",
            manifest.format_version
        )));
    }
    let csv_path = dir.join("skeleton.csv");
    let csv_bytes = fs::read(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    if sha256_hex(&csv_bytes) != manifest.skeleton_sha256 {
        return Err(Error::Format("skeleton.csv does not match the manifest checksum".into()));
    }
    let sk = read_skeleton(&csv_path)?;
    let res = Reservoir::from_parts(manifest.reservoir, read_matrix(&dir.join("w.bin"))?, read_matrix(&dir.join("w_in.bin"))?)?;
    let w_out = read_matrix(&dir.join("w_out.bin"))?;
    let x = read_matrix(&dir.join("x_start.bin"))?;
    let model = compose_closed_loop(&res, w_out, State::from_vec(x.into_vec()), manifest.training)?;
    Ok((model, sk))
}

/// Trace CSV: `step,z_0..z_{D-1}` plus optional extra columns.
pub fn trace_to_csv(trace: &RunTrace, extra: &[(&str, &[Vec<f64>])]) -> String {
    let d = trace.dim();
    let mut header = vec!["step".to_string()];
    header.extend((0..d).map(|c| format!("z_{c}")));
    for (name, cols) in extra {
        let width = cols.first().map_or(0, Vec::len);
        if width == 1 {
            header.push(name.to_string());
        } else {
            header.extend((1..=width).map(|j| format!("{name}{j}")));
        }
    }
    let mut s = header.join(",");
    s.push('\n');
    for (k, z) in trace.outputs.iter().enumerate() {
        let mut cells = vec![(trace.start_index + k).to_string()];
        cells.extend(z.iter().map(|v| format!("{v}")));
        for (_, cols) in extra {
            if let Some(row) = cols.get(k) {
                cells.extend(row.iter().map(|v| format!("{v}")));
            }
        }
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::build_reservoir;
    use crate::skeleton::lissajous;
    use crate::training::train;

    #[test]
    fn matrix_bytes_round_trip() {
        let m = Matrix::from_fn(3, 2, |i, j| (i as f64 - j as f64) / 3.0);
        assert_eq!(matrix_from_bytes(&matrix_to_bytes(&m)).unwrap(), m);
        let mut bad = matrix_to_bytes(&m);
        bad.pop();
        assert!(matches!(matrix_from_bytes(&bad), Err(Error::Format(_))));
        assert!(matches!(matrix_from_bytes(b"nope"), Err(Error::Format(_))));
    }

    #[test]
    fn model_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let res = build_reservoir(ReservoirSpec::new(15, 2, 0.5, 1.0, 0.2, 8)).unwrap();
        let sk = lissajous(100);
        let cfg = TrainingConfig {
            t_init: 20,
            t_train: 100,
            ..TrainingConfig::default()
        };
        let model = train(&res, &sk, &cfg).unwrap();
        save_model(dir.path(), &model, &sk).unwrap();
        let (back, sk2) = load_model(dir.path()).unwrap();
        assert_eq!(back.w_hat, model.w_hat);
        assert_eq!(back.x_start, model.x_start);
        assert_eq!(sk2.samples(), sk.samples());
        assert_eq!(sk2.period_steps(), Some(100));
        assert!(sk2.has_q_form());
    }

    #[test]
    fn tampered_skeleton_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let res = build_reservoir(ReservoirSpec::new(10, 2, 0.5, 1.0, 0.2, 8)).unwrap();
        let sk = lissajous(100);
        let cfg = TrainingConfig {
            t_init: 0,
            t_train: 50,
            ..TrainingConfig::default()
        };
        save_model(dir.path(), &train(&res, &sk, &cfg).unwrap(), &sk).unwrap();
        fs::write(dir.path().join("skeleton.csv"), "0,0\n1,1\n2,2\n").unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn trace_csv_header() {
        let trace = RunTrace {
            mode: crate::training::RunMode::ClosedLoop,
            start_index: 0,
            outputs: vec![vec![1.0, 0.0], vec![0.5, 0.25]],
            node_means: vec![0.0; 2],
            states: Vec::new(),
            node_series: Vec::new(),
        };
        let pcs = vec![vec![0.1, 0.2], vec![0.3, 0.4]];
        let csv = trace_to_csv(&trace, &[("pc", &pcs)]);
        assert_eq!(csv.lines().next().unwrap(), "step,z_0,z_1,pc1,pc2");
        assert_eq!(csv.lines().nth(2).unwrap(), "1,0.5,0.25,0.3,0.4");
    }
}
