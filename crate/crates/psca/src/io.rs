//! Bit-exact file formats.
//!
//! Tensor files are binary: magic `PSCA`, format version (u32 LE), rank
//! (u32, 2 or 4), dims (rank x u32), dtype tag (u32, 1 = IEEE-754 binary64
//! LE), then the payload in row-major order of the declared index order
//! (matrices `[row, col]`, order-4 tensors `[i,j,k,l]`), and a CRC32 of the
//! payload as the footer. Estimates are a JSON manifest referencing one
//! tensor file per factor. CSV matrices are accepted as a convenience import.

use crate::cov4::DenseCov4;
use crate::error::{PscaError, Result};
use crate::fit::{FitDiagnostics, ScdEstimate, SepComponent};
use crate::linalg::{mat_from_row_major, vec_row_major, Mat};
use crate::operator::RSepOperator;
use crate::pip::SampleSet;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const MAGIC: &[u8; 4] = b"PSCA";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F64_LE: u32 = 1;
pub const SIGN_RULE_VERSION: u32 = 1;

fn format_err(msg: impl Into<String>) -> PscaError {
    PscaError::Format(msg.into())
}

/// Write a tensor file.
pub fn write_tensor(path: &Path, dims: &[usize], payload: &[f64]) -> Result<()> {
    if dims.len() != 2 && dims.len() != 4 {
        return Err(format_err("tensor rank must be 2 or 4"));
    }
    let expected: usize = dims.iter().product();
    if expected != payload.len() {
        return Err(format_err(format!(
            "payload length {} does not match dims {:?}",
            payload.len(),
            dims
        )));
    }
    let mut bytes = Vec::with_capacity(4 + 4 + 4 + 4 * dims.len() + 4 + 8 * payload.len() + 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        bytes.extend_from_slice(&(d as u32).to_le_bytes());
    }
    bytes.extend_from_slice(&DTYPE_F64_LE.to_le_bytes());
    let payload_start = bytes.len();
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&bytes[payload_start..]);
    bytes.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Read a tensor file, checking magic, version, dtype and CRC.
pub fn read_tensor(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut file = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(format_err("truncated tensor file"));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let magic = take(&mut pos, 4)?;
    if magic != MAGIC {
        return Err(format_err("bad magic; not a PSCA tensor file"));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported format version {version}")));
    }
    let rank = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    if rank != 2 && rank != 4 {
        return Err(format_err(format!("unsupported rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
    }
    let dtype = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if dtype != DTYPE_F64_LE {
        return Err(format_err(format!("unsupported dtype tag {dtype}")));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(format_err("zero-sized dimension"));
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| format_err("dimension product overflows"))?;
    let payload_bytes = take(&mut pos, count)?.to_vec();
    let crc_stored = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if pos != bytes.len() {
        return Err(format_err("trailing bytes after footer"));
    }
    let crc = crc32fast::hash(&payload_bytes);
    if crc != crc_stored {
        return Err(format_err(format!(
            "CRC mismatch: stored {crc_stored:08x}, computed {crc:08x}"
        )));
    }
    let payload: Vec<f64> = payload_bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims, payload))
}

pub fn write_matrix(path: &Path, m: &Mat) -> Result<()> {
    write_tensor(path, &[m.nrows(), m.ncols()], &vec_row_major(m))
}

pub fn read_matrix(path: &Path) -> Result<Mat> {
    let (dims, payload) = read_tensor(path)?;
    if dims.len() != 2 {
        return Err(format_err(format!(
            "expected a rank-2 tensor, got rank {}",
            dims.len()
        )));
    }
    Ok(mat_from_row_major(dims[0], dims[1], &payload))
}

pub fn write_cov4(path: &Path, c: &DenseCov4) -> Result<()> {
    write_tensor(
        path,
        &[c.k1(), c.k2(), c.k1(), c.k2()],
        c.entries(),
    )
}

pub fn read_cov4(path: &Path) -> Result<DenseCov4> {
    let (dims, payload) = read_tensor(path)?;
    if dims.len() != 4 {
        return Err(format_err("expected a rank-4 tensor"));
    }
    if dims[0] != dims[2] || dims[1] != dims[3] {
        return Err(format_err("rank-4 dims must be [k1, k2, k1, k2]"));
    }
    DenseCov4::from_entries(dims[0], dims[1], payload)
}

/// Plain CSV matrix (one row per line), accepted as a sample import format.
pub fn read_csv_matrix(path: &Path) -> Result<Mat> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format_err(format!("csv: {e}")))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| format_err(format!("csv: {e}")))?;
        if record.is_empty() {
            continue;
        }
        let row: Vec<f64> = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| format_err(format!("csv: bad number {f:?}")))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(format_err("csv: ragged rows"));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format_err("csv: empty matrix"));
    }
    let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
    Ok(mat_from_row_major(rows.len(), rows[0].len(), &flat))
}

/// Read a sample (binary tensor or `.csv`) by extension.
pub fn read_sample_file(path: &Path) -> Result<Mat> {
    if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        read_csv_matrix(path)
    } else {
        read_matrix(path)
    }
}

/// Read a sample set from explicit file paths (order preserved).
pub fn read_samples(paths: &[PathBuf], center: bool) -> Result<SampleSet> {
    if paths.is_empty() {
        return Err(format_err("no sample files given"));
    }
    let samples: Vec<Mat> = paths.iter().map(|p| read_sample_file(p)).collect::<Result<_>>()?;
    SampleSet::new(samples, center)
}

/// Collect sample files from a directory: if `listing.csv` exists its first
/// column names the files in order, otherwise all `.psca` and `.csv` files
/// are taken in lexicographic order.
pub fn collect_sample_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let listing = dir.join("listing.csv");
    if listing.is_file() {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(&listing)
            .map_err(|e| format_err(format!("csv: {e}")))?;
        let mut out = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| format_err(format!("csv: {e}")))?;
            if let Some(name) = record.get(0) {
                if !name.is_empty() {
                    out.push(dir.join(name));
                }
            }
        }
        return Ok(out);
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("psca") | Some("csv")
            )
        })
        .collect();
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestComponent {
    pub score: f64,
    pub left_file: String,
    pub right_file: String,
}

/// JSON manifest describing a stored estimate; factor payloads live in
/// sibling tensor files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateManifest {
    pub format_version: u32,
    pub library_version: String,
    pub sign_rule_version: u32,
    pub created: String,
    pub k1: usize,
    pub k2: usize,
    pub ridge: f64,
    pub component_count: usize,
    pub scores: Vec<f64>,
    pub components: Vec<ManifestComponent>,
    pub diagnostics: FitDiagnostics,
}

/// Write an estimate as a JSON manifest at `path` plus one tensor file per
/// factor alongside it. With `deterministic`, the creation timestamp is a
/// fixed placeholder so outputs are byte-identical across runs.
pub fn write_estimate(
    est: &ScdEstimate,
    ridge: f64,
    path: &Path,
    deterministic: bool,
) -> Result<()> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| format_err("estimate path needs a file name"))?
        .to_string();
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut components = Vec::with_capacity(est.components.len());
    for (i, comp) in est.components.iter().enumerate() {
        let left_file = format!("{}_A{}.psca", stem, i + 1);
        let right_file = format!("{}_B{}.psca", stem, i + 1);
        write_matrix(&dir.join(&left_file), &comp.left)?;
        write_matrix(&dir.join(&right_file), &comp.right)?;
        components.push(ManifestComponent {
            score: comp.score,
            left_file,
            right_file,
        });
    }
    let created = if deterministic {
        "deterministic".to_string()
    } else {
        // Seconds since the epoch; avoids a clock-formatting dependency.
        format!(
            "{}",
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        )
    };
    let manifest = EstimateManifest {
        format_version: FORMAT_VERSION,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        sign_rule_version: SIGN_RULE_VERSION,
        created,
        k1: est.k1,
        k2: est.k2,
        ridge,
        component_count: est.components.len(),
        scores: est.scores(),
        components,
        diagnostics: est.diagnostics.clone(),
    };
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, &manifest)?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Read an estimate manifest back as an operator (plus diagnostics).
pub fn read_estimate(path: &Path) -> Result<(RSepOperator, FitDiagnostics)> {
    let bytes = std::fs::read(path)?;
    let manifest: EstimateManifest = serde_json::from_slice(&bytes)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(format_err(format!(
            "unsupported manifest version {}",
            manifest.format_version
        )));
    }
    if manifest.components.len() != manifest.component_count
        || manifest.scores.len() != manifest.component_count
    {
        return Err(format_err("manifest component counts disagree"));
    }
    let mut sorted = manifest.scores.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted != manifest.scores {
        return Err(format_err("manifest scores are not non-increasing"));
    }
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut components = Vec::with_capacity(manifest.components.len());
    for mc in &manifest.components {
        let left = read_matrix(&dir.join(&mc.left_file))?;
        let right = read_matrix(&dir.join(&mc.right_file))?;
        if left.shape() != (manifest.k1, manifest.k1)
            || right.shape() != (manifest.k2, manifest.k2)
        {
            return Err(format_err("factor file dims disagree with manifest"));
        }
        components.push(SepComponent {
            score: mc.score,
            left,
            right,
        });
    }
    let op = RSepOperator::new(components, manifest.ridge, manifest.k1, manifest.k2)?;
    Ok((op, manifest.diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn tensor_roundtrip_bit_exact() {
        let dir = std::env::temp_dir().join(format!("psca-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let m = crate::testutil::random_matrix(3, 5, &mut rng);
        let path = dir.join("m.psca");
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(
            crate::linalg::vec_row_major(&m)
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            crate::linalg::vec_row_major(&back)
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        );
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn corruption_detected() {
        let dir = std::env::temp_dir().join(format!("psca-io-crc-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.psca");
        write_matrix(&path, &Mat::identity(3, 3)).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_matrix(&path), Err(PscaError::Format(_))));
        // Truncation is also caught.
        write_matrix(&path, &Mat::identity(3, 3)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 6]).unwrap();
        assert!(matches!(read_matrix(&path), Err(PscaError::Format(_))));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = std::env::temp_dir().join(format!("psca-io-magic-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.psca");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(read_matrix(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn csv_matrix_import() {
        let dir = std::env::temp_dir().join(format!("psca-io-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        std::fs::write(&path, "1.0, 2.0\n3.5, -4.0\n").unwrap();
        let m = read_csv_matrix(&path).unwrap();
        assert_eq!(m, Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.5, -4.0]));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn estimate_roundtrip_preserves_scores_exactly() {
        let dir = std::env::temp_dir().join(format!("psca-io-est-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let c = crate::testutil::random_self_adjoint_psd(4, 4, &mut rng);
        let est = crate::fit::fit(
            &crate::pip::CovView::dense(&c),
            &crate::fit::FitOptions::new(3),
        )
        .unwrap();
        let path = dir.join("est.json");
        write_estimate(&est, 0.25, &path, true).unwrap();
        let (op, _) = read_estimate(&path).unwrap();
        assert_eq!(op.ridge(), 0.25);
        for (a, b) in op.components().iter().zip(&est.components) {
            assert_eq!(a.score.to_bits(), b.score.to_bits());
            assert_eq!(a.left, b.left);
            assert_eq!(a.right, b.right);
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
