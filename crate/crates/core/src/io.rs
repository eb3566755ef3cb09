//! Field files, atomic writes and run manifests.
//!
//! A field file is one line of JSON header followed by the raw little-endian
//! samples:
//!
//! ```text
//! {"version":1,"kind":"radial","grid":{...},"dtype":"f64-le","count":2048,"sha256":"..."}\n<blob>
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Field, Geometry, PlaneGrid, RadialGrid, Scalar};

pub const FIELD_FORMAT_VERSION: u32 = 1;

/// Write through a temporary sibling and rename, so readers never observe a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Grid parameters as stored in a field header.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    Radial { r_max: f64, n: usize },
    Plane { box_size: f64, n: usize },
}

/// Grids that can describe themselves in a field header.
pub trait StoredGrid: Geometry {
    fn spec(&self) -> GridSpec;
}

impl StoredGrid for RadialGrid {
    fn spec(&self) -> GridSpec {
        GridSpec::Radial {
            r_max: self.r_max(),
            n: self.len(),
        }
    }
}

impl StoredGrid for PlaneGrid {
    fn spec(&self) -> GridSpec {
        GridSpec::Plane {
            box_size: self.box_size(),
            n: self.n_per_side(),
        }
    }
}

impl GridSpec {
    pub fn radial_grid(&self) -> Result<Arc<RadialGrid>> {
        match *self {
            GridSpec::Radial { r_max, n } => RadialGrid::new(r_max, n),
            GridSpec::Plane { .. } => Err(Error::GridMismatch),
        }
    }

    pub fn plane_grid(&self) -> Result<Arc<PlaneGrid>> {
        match *self {
            GridSpec::Plane { box_size, n } => PlaneGrid::new(box_size, n),
            GridSpec::Radial { .. } => Err(Error::GridMismatch),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub version: u32,
    pub grid: GridSpec,
    pub dtype: String,
    pub count: usize,
    pub sha256: String,
}

/// Little-endian byte encoding of the sample types.
pub trait Encode: Scalar {
    fn write_le(&self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    const BYTES: usize;
}

impl Encode for f64 {
    const BYTES: usize = 8;
    fn write_le(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

impl Encode for Complex64 {
    const BYTES: usize = 16;
    fn write_le(&self, out: &mut Vec<u8>) {
        self.re.write_le(out);
        self.im.write_le(out);
    }
    fn read_le(bytes: &[u8]) -> Self {
        Complex64::new(f64::read_le(&bytes[..8]), f64::read_le(&bytes[8..16]))
    }
}

pub fn encode_field<G: StoredGrid, T: Encode>(field: &Field<G, T>) -> Result<Vec<u8>> {
    let mut blob = Vec::with_capacity(field.values().len() * T::BYTES);
    for v in field.values() {
        v.write_le(&mut blob);
    }
    let header = FieldHeader {
        version: FIELD_FORMAT_VERSION,
        grid: field.grid().spec(),
        dtype: T::DTYPE.to_string(),
        count: field.values().len(),
        sha256: sha256_hex(&blob),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.extend_from_slice(&blob);
    Ok(out)
}

pub fn save_field<G: StoredGrid, T: Encode>(path: &Path, field: &Field<G, T>) -> Result<()> {
    write_atomic(path, &encode_field(field)?)
}

/// Split a field file into its validated header and blob.
pub fn decode_header(bytes: &[u8]) -> Result<(FieldHeader, &[u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::CorruptFile("missing header line".into()))?;
    let raw: serde_json::Value =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::CorruptFile(format!("header: {e}")))?;
    let version = raw.get("version").and_then(|v| v.as_u64());
    if version != Some(FIELD_FORMAT_VERSION as u64) {
        return Err(Error::VersionError(format!(
            "expected version {FIELD_FORMAT_VERSION}, found {}",
            raw.get("version").map(|v| v.to_string()).unwrap_or_else(|| "none".into())
        )));
    }
    let header: FieldHeader = serde_json::from_value(raw).map_err(|e| Error::CorruptFile(format!("header: {e}")))?;
    Ok((header, &bytes[nl + 1..]))
}

pub fn read_header(path: &Path) -> Result<FieldHeader> {
    Ok(decode_header(&fs::read(path)?)?.0)
}

pub fn decode_field<G: StoredGrid, T: Encode>(bytes: &[u8], grid: &Arc<G>) -> Result<Field<G, T>> {
    let (header, blob) = decode_header(bytes)?;
    if header.dtype != T::DTYPE {
        return Err(Error::CorruptFile(format!("dtype {} where {} was requested", header.dtype, T::DTYPE)));
    }
    if blob.len() != header.count * T::BYTES {
        return Err(Error::CorruptFile(format!(
            "blob has {} bytes, header promises {}",
            blob.len(),
            header.count * T::BYTES
        )));
    }
    if sha256_hex(blob) != header.sha256 {
        return Err(Error::CorruptFile("checksum mismatch".into()));
    }
    if header.grid != grid.spec() || header.count != grid.len() {
        return Err(Error::GridMismatch);
    }
    let values = blob.chunks_exact(T::BYTES).map(T::read_le).collect();
    Field::new(Arc::clone(grid), values)
}

pub fn load_field<G: StoredGrid, T: Encode>(path: &Path, grid: &Arc<G>) -> Result<Field<G, T>> {
    decode_field(&fs::read(path)?, grid)
}

// ---------------------------------------------------------------------------
// Manifests

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the run directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Ok,
    Failed,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskStatus {
    pub name: String,
    pub state: TaskState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    pub code_version: String,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    pub tasks: Vec<TaskStatus>,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Every regular file under `dir` except the manifest, sorted by path.
pub fn inventory(dir: &Path) -> Result<Vec<FileEntry>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<FileEntry>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let path = entry.path();
            let name = entry.file_name().to_string_lossy().to_string();
            if name.starts_with('.') {
                continue;
            }
            if path.is_dir() {
                walk(root, &path, out)?;
            } else if !(dir == root && name == MANIFEST_NAME) {
                let bytes = fs::read(&path)?;
                let rel: PathBuf = path.strip_prefix(root).unwrap_or(&path).to_path_buf();
                out.push(FileEntry {
                    path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
                    bytes: bytes.len() as u64,
                    sha256: sha256_hex(&bytes),
                });
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

impl RunManifest {
    /// Inventory `dir` and write the manifest into it atomically.
    pub fn finalize(mut self, dir: &Path) -> Result<Self> {
        self.files = inventory(dir)?;
        self.finished = unix_now();
        write_atomic(&dir.join(MANIFEST_NAME), &serde_json::to_vec_pretty(&self)?)?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field2D, RadialField};

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let g = RadialGrid::new(10.0, 64).unwrap();
        let f = RadialField::from_fn(&g, |r| (-r).exp() * 1.000000000000001);
        let path = dir.path().join("f.field");
        save_field(&path, &f).unwrap();
        let back: RadialField = load_field(&path, &g).unwrap();
        assert!(f.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));

        let p = PlaneGrid::new(8.0, 16).unwrap();
        let u = Field2D::from_fn(&p, |x, y| Complex64::new(x.sin(), y.cos()));
        let path = dir.path().join("u.field");
        save_field(&path, &u).unwrap();
        let back: Field2D = load_field(&path, &p).unwrap();
        assert_eq!(back.values(), u.values());
        assert_eq!(read_header(&path).unwrap().dtype, "c128-le");
    }

    #[test]
    fn damaged_files_are_rejected() {
        let g = RadialGrid::new(10.0, 64).unwrap();
        let f = RadialField::from_fn(&g, |r| (-r).exp());
        let bytes = encode_field(&f).unwrap();
        let truncated = &bytes[..bytes.len() - 5];
        assert!(matches!(decode_field::<_, f64>(truncated, &g), Err(Error::CorruptFile(_))));
        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 1;
        assert!(matches!(decode_field::<_, f64>(&flipped, &g), Err(Error::CorruptFile(_))));
        let text = String::from_utf8_lossy(&bytes).replacen("\"version\":1", "\"version\":2", 1);
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let mut v2 = text.as_bytes()[..text.find('\n').unwrap() + 1].to_vec();
        v2.extend_from_slice(&bytes[nl + 1..]);
        assert!(matches!(decode_field::<_, f64>(&v2, &g), Err(Error::VersionError(_))));
    }

    #[test]
    fn cross_grid_load_fails() {
        let g = RadialGrid::new(10.0, 64).unwrap();
        let other = RadialGrid::new(10.0, 128).unwrap();
        let bytes = encode_field(&RadialField::from_fn(&g, |r| r)).unwrap();
        assert!(matches!(decode_field::<_, f64>(&bytes, &other), Err(Error::GridMismatch)));
        assert!(matches!(decode_field::<_, Complex64>(&bytes, &g), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn manifest_inventories_files() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(&dir.path().join("a/b.txt"), b"hello").unwrap();
        write_atomic(&dir.path().join("c.csv"), b"x\n1\n").unwrap();
        let m = RunManifest {
            config: serde_json::json!({"k": 1}),
            code_version: "test".into(),
            started: 0.0,
            finished: 0.0,
            tasks: vec![],
            files: vec![],
        }
        .finalize(dir.path())
        .unwrap();
        let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(names, vec!["a/b.txt", "c.csv"]);
        assert_eq!(m.files[0].sha256, sha256_hex(b"hello"));
        assert!(dir.path().join(MANIFEST_NAME).exists());
    }
}
