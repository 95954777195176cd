//! FSET (feature set) and FRMX (frame matrix) binary files.
//!
//! Both are little-endian. FSET:
//!
//! ```text
//! "FSET" u32 version  u32 len + set name  u32 D  u64 N
//! N x ( u32 len + id  D x f32 )
//! ```
//!
//! with feature names in a JSON sidecar `<path>.names.json`. FRMX:
//!
//! ```text
//! "FRMX" u32 version  u32 D  u32 frame period (ms)  u64 T  u32 len + id
//! T x D f32, row-major
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{FeatureMatrix, FrameMatrix};

pub const FSET_MAGIC: &[u8; 4] = b"FSET";
pub const FRMX_MAGIC: &[u8; 4] = b"FRMX";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: bad magic (expected {expected:?})")]
    BadMagic { path: PathBuf, expected: &'static str },
    #[error("{path}: version mismatch (found {found}, supported {FORMAT_VERSION})")]
    Version { path: PathBuf, found: u32 },
    #[error("{path}: truncated payload while reading {what}")]
    Truncated { path: PathBuf, what: &'static str },
    #[error("{path}: dimension overflow ({what})")]
    DimensionOverflow { path: PathBuf, what: String },
    #[error("{path}: invalid UTF-8 in {what}")]
    Utf8 { path: PathBuf, what: &'static str },
    #[error("{path}: {trailing} trailing bytes after payload")]
    Trailing { path: PathBuf, trailing: usize },
    #[error("{path}: refusing to write non-finite value in {id}")]
    NonFinite { path: PathBuf, id: String },
    #[error("{path}: feature name sidecar: {message}")]
    Names { path: PathBuf, message: String },
    #[error("{path}: invalid content: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl FormatError {
    pub fn is_data_error(&self) -> bool {
        !matches!(self, FormatError::Io { .. })
    }
}

fn names_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".names.json");
    PathBuf::from(s)
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

fn put_f32s(buf: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    fs::write(path, bytes).map_err(|source| FormatError::Io { path: path.into(), source })
}

pub fn write_fset(path: impl AsRef<Path>, m: &FeatureMatrix) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(32 + m.len() * (16 + 4 * m.width()));
    buf.extend_from_slice(FSET_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_str(&mut buf, &m.set_name);
    buf.extend_from_slice(&(m.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.len() as u64).to_le_bytes());
    for (id, row) in m.rows() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite { path: path.into(), id: id.into() });
        }
        put_str(&mut buf, id);
        put_f32s(&mut buf, row);
    }
    write_file(path, &buf)?;
    let names = serde_json::to_string(&m.feature_names).expect("names serialize");
    write_file(&names_path(path), names.as_bytes())
}

pub fn write_frmx(path: impl AsRef<Path>, fm: &FrameMatrix) -> Result<(), FormatError> {
    let path = path.as_ref();
    if fm.data.iter().any(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite { path: path.into(), id: fm.id.clone() });
    }
    let mut buf = Vec::with_capacity(32 + fm.id.len() + 4 * fm.data.len());
    buf.extend_from_slice(FRMX_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(fm.dim as u32).to_le_bytes());
    buf.extend_from_slice(&fm.frame_period_ms.to_le_bytes());
    buf.extend_from_slice(&(fm.frames() as u64).to_le_bytes());
    put_str(&mut buf, &fm.id);
    put_f32s(&mut buf, &fm.data);
    write_file(path, &buf)
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(
            FormatError::Truncated { path: self.path.into(), what },
        )?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &'static str) -> Result<String, FormatError> {
        let len = self.u32(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| FormatError::Utf8 { path: self.path.into(), what })
    }

    fn f32s(&mut self, count: usize, what: &'static str) -> Result<Vec<f32>, FormatError> {
        let nbytes = count.checked_mul(4).ok_or_else(|| FormatError::DimensionOverflow {
            path: self.path.into(),
            what: format!("{count} values"),
        })?;
        let raw = self.take(nbytes, what)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn header(&mut self, magic: &'static [u8; 4], name: &'static str) -> Result<(), FormatError> {
        if self.bytes.len() < 4 || &self.bytes[..4] != magic {
            return Err(FormatError::BadMagic { path: self.path.into(), expected: name });
        }
        self.pos = 4;
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(FormatError::Version { path: self.path.into(), found: version });
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), FormatError> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            trailing => Err(FormatError::Trailing { path: self.path.into(), trailing }),
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|source| FormatError::Io { path: path.into(), source })
}

pub fn read_fset(path: impl AsRef<Path>) -> Result<FeatureMatrix, FormatError> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let mut r = Reader { path, bytes: &bytes, pos: 0 };
    r.header(FSET_MAGIC, "FSET")?;
    let set_name = r.string("set name")?;
    let dim = r.u32("dimension")? as usize;
    let n = r.u64("row count")?;
    // Every record needs at least a 4-byte id length and 4*D bytes of values.
    let min_record = 4 + 4 * dim as u64;
    let needed = n.checked_mul(min_record).ok_or_else(|| FormatError::DimensionOverflow {
        path: path.into(),
        what: format!("{n} rows x {dim} features"),
    })?;
    if needed > (bytes.len() - r.pos) as u64 {
        return Err(FormatError::Truncated { path: path.into(), what: "rows" });
    }

    let names_file = names_path(path);
    let feature_names: Vec<String> = match fs::read(&names_file) {
        Ok(raw) => serde_json::from_slice(&raw)
            .map_err(|e| FormatError::Names { path: names_file.clone(), message: e.to_string() })?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            log::warn!("{}: no feature name sidecar, using positional names", path.display());
            (0..dim).map(|i| format!("f{i}")).collect()
        }
        Err(source) => return Err(FormatError::Io { path: names_file, source }),
    };
    if feature_names.len() != dim {
        return Err(FormatError::Names {
            path: names_file,
            message: format!("{} names for dimension {dim}", feature_names.len()),
        });
    }

    let mut m = FeatureMatrix::new(set_name, feature_names);
    for _ in 0..n {
        let id = r.string("row id")?;
        let row = r.f32s(dim, "row values")?;
        m.push_row(id, row)
            .map_err(|e| FormatError::Invalid { path: path.into(), message: e.to_string() })?;
    }
    r.finish()?;
    Ok(m)
}

pub fn read_frmx(path: impl AsRef<Path>) -> Result<FrameMatrix, FormatError> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let mut r = Reader { path, bytes: &bytes, pos: 0 };
    r.header(FRMX_MAGIC, "FRMX")?;
    let dim = r.u32("dimension")? as usize;
    let period = r.u32("frame period")?;
    let frames = r.u64("frame count")?;
    let id = r.string("id")?;
    let count = usize::try_from(frames)
        .ok()
        .and_then(|t| t.checked_mul(dim))
        .ok_or_else(|| FormatError::DimensionOverflow {
            path: path.into(),
            what: format!("{frames} frames x {dim} dims"),
        })?;
    let data = r.f32s(count, "frames")?;
    r.finish()?;
    FrameMatrix::new(id, dim, period, data)
        .map_err(|e| FormatError::Invalid { path: path.into(), message: e.to_string() })
}
