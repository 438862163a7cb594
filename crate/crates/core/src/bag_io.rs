//! Feature-bag and manifest files.
//!
//! A bag file ("MILB") is a fixed little-endian layout:
//!
//! ```text
//! bytes 0..4    magic "MILB"
//! bytes 4..8    u32 version, always 1
//! bytes 8..12   u32 S, instance count (>= 1)
//! bytes 12..16  u32 d, feature dimension (>= 1)
//! bytes 16..    S*d f32 values, row-major
//! ```
//!
//! The file size is exactly `16 + 4*S*d` bytes. Labels never live in bag
//! files; they live in the manifest, a text file with header
//! `bag_id,label,path` and one `id,0|1,relative/path` row per bag, paths
//! relative to the manifest's directory. A path ending in `.csv` is read
//! as a plain-text bag instead (one instance per line, comma-separated
//! floats) so test fixtures can be written by hand.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::tensor::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"MILB";
const VERSION: u32 = 1;

/// One patient: an S×d feature matrix plus a binary label.
#[derive(Clone, Debug)]
pub struct FeatureBag {
    pub bag_id: String,
    pub label: u8,
    pub features: Tensor<f32>,
}

impl FeatureBag {
    pub fn instances(&self) -> usize {
        self.features.rows
    }

    pub fn dim(&self) -> usize {
        self.features.cols
    }
}

/// One manifest row; `path` is kept exactly as written (relative).
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub bag_id: String,
    pub label: u8,
    pub path: String,
}

/// A named list of bags. `base_dir` is the directory the manifest was
/// read from (or will be written to); entry paths resolve against it.
#[derive(Clone, Debug)]
pub struct Manifest {
    pub split_name: String,
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Load every bag listed, in manifest order, attaching labels and
    /// enforcing a shared feature dimension.
    pub fn load_bags(&self) -> Result<Vec<FeatureBag>> {
        let mut bags = Vec::with_capacity(self.entries.len());
        let mut expected_d: Option<usize> = None;
        for entry in &self.entries {
            let path = self.base_dir.join(&entry.path);
            let features = read_bag(&path, expected_d)?;
            expected_d = Some(features.cols);
            bags.push(FeatureBag {
                bag_id: entry.bag_id.clone(),
                label: entry.label,
                features,
            });
        }
        Ok(bags)
    }
}

/// Parse a manifest file. Order is preserved; blank lines are skipped.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let display = path.display().to_string();
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => break (i, l),
            None => {
                return Err(Error::BadManifest {
                    path: display,
                    line: 1,
                    reason: "missing header `bag_id,label,path`".into(),
                })
            }
        }
    };
    if header.1.trim_end() != "bag_id,label,path" {
        return Err(Error::BadManifest {
            path: display,
            line: header.0 + 1,
            reason: format!(
                "missing header `bag_id,label,path`, found `{}`",
                header.1.trim_end()
            ),
        });
    }

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        let parts: Vec<&str> = trimmed.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::BadManifest {
                path: display,
                line: line_no,
                reason: format!("expected 3 comma-separated fields, found {}", parts.len()),
            });
        }
        let bag_id = parts[0].to_string();
        if bag_id.is_empty() {
            return Err(Error::BadManifest {
                path: display,
                line: line_no,
                reason: "empty bag_id".into(),
            });
        }
        if !seen.insert(bag_id.clone()) {
            return Err(Error::BadManifest {
                path: display,
                line: line_no,
                reason: format!("duplicate bag_id `{}`", bag_id),
            });
        }
        let label = match parts[1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::BadManifest {
                    path: display,
                    line: line_no,
                    reason: format!("label must be 0 or 1, got `{}`", other),
                })
            }
        };
        if parts[2].is_empty() {
            return Err(Error::BadManifest {
                path: display,
                line: line_no,
                reason: "empty path".into(),
            });
        }
        entries.push(ManifestEntry {
            bag_id,
            label,
            path: parts[2].to_string(),
        });
    }

    let split_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "manifest".into());
    let base_dir = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    Ok(Manifest {
        split_name,
        base_dir,
        entries,
    })
}

/// Write a manifest; entries are written verbatim, in order.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = String::from("bag_id,label,path\n");
    for e in entries {
        out.push_str(&format!("{},{},{}\n", e.bag_id, e.label, e.path));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a bag's feature matrix. `.csv` paths use the plain-text form; all
/// other paths are parsed as MILB. `expected_d` enforces a dataset-wide
/// dimension when given.
pub fn read_bag(path: &Path, expected_d: Option<usize>) -> Result<Tensor<f32>> {
    let is_csv = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    let features = if is_csv {
        read_bag_csv(path)?
    } else {
        read_bag_milb(path)?
    };
    if let Some(d) = expected_d {
        if features.cols != d {
            return Err(Error::BadBagFile {
                path: path.display().to_string(),
                reason: format!(
                    "feature dimension {} does not match dataset dimension {}",
                    features.cols, d
                ),
            });
        }
    }
    Ok(features)
}

fn bad(path: &Path, reason: String) -> Error {
    Error::BadBagFile {
        path: path.display().to_string(),
        reason,
    }
}

fn read_bag_milb(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 {
        return Err(bad(
            path,
            format!("file too short for header: {} bytes", bytes.len()),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad(
            path,
            format!("bad magic {:?}, expected \"MILB\"", &bytes[0..4]),
        ));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(
            path,
            format!("unsupported version {}, expected {}", version, VERSION),
        ));
    }
    let s = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if s == 0 || d == 0 {
        return Err(bad(
            path,
            format!("invalid shape {}x{}: S and d must be >= 1", s, d),
        ));
    }
    let expected_len = 16 + 4 * s * d;
    if bytes.len() != expected_len {
        return Err(bad(
            path,
            format!(
                "truncated or oversized payload: {} bytes, expected {} for {}x{}",
                bytes.len(),
                expected_len,
                s,
                d
            ),
        ));
    }
    let mut data = Vec::with_capacity(s * d);
    for i in 0..s * d {
        let off = 16 + 4 * i;
        let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        if !v.is_finite() {
            return Err(bad(
                path,
                format!("non-finite value {} at row {} col {}", v, i / d, i % d),
            ));
        }
        data.push(v);
    }
    Ok(Tensor::new(s, d, data))
}

fn read_bag_csv(path: &Path) -> Result<Tensor<f32>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in trimmed.split(',') {
            let v: f32 = field.trim().parse().map_err(|_| {
                bad(
                    path,
                    format!("line {}: cannot parse `{}` as a float", idx + 1, field),
                )
            })?;
            if !v.is_finite() {
                return Err(bad(
                    path,
                    format!("line {}: non-finite value {}", idx + 1, v),
                ));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(bad(
                    path,
                    format!(
                        "line {}: {} fields, expected {}",
                        idx + 1,
                        row.len(),
                        first.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(bad(path, "empty bag: S must be >= 1".into()));
    }
    let d = rows[0].len();
    let s = rows.len();
    Ok(Tensor::new(s, d, rows.into_iter().flatten().collect()))
}

/// Serialize a feature matrix to MILB bytes.
pub fn encode_bag(features: &Tensor<f32>) -> Vec<u8> {
    assert!(
        features.rows >= 1,
        "bag must contain at least one instance (S >= 1)"
    );
    assert!(features.cols >= 1, "bag dimension must be >= 1");
    for &v in &features.data {
        assert!(v.is_finite(), "bag contains a non-finite value {}", v);
    }
    let mut bytes = Vec::with_capacity(16 + 4 * features.data.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(features.rows as u32).to_le_bytes());
    bytes.extend_from_slice(&(features.cols as u32).to_le_bytes());
    for v in &features.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Write a bag file. The encoding is deterministic, so two writes of the
/// same bag are byte-identical.
pub fn write_bag(features: &Tensor<f32>, path: &Path) -> Result<()> {
    let bytes = encode_bag(features);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
