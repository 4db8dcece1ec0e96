//! `.svt` tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic       8 bytes   "SVTENSR1"
//! header_len  u32
//! header      header_len bytes of UTF-8 JSON
//! payload     concatenated f32 data
//! ```
//!
//! The header maps each tensor name to `{"dtype":"f32","length":..,"offset":..,"shape":[..]}`
//! where `offset` is relative to the payload start. An optional
//! `"__metadata__"` entry maps string keys to string values (`grid`, `source`,
//! ...). The header is minimal JSON with every object's keys sorted, and
//! regions are laid out back to back in key order, so a given tensor map has
//! exactly one valid encoding. The reader enforces that.
//!
//! Unless the header is the empty object `{}`, it also carries
//! `"__checksum__":"sha256:<hex>"`, the SHA-256 of the canonical header with
//! that entry removed. Without it a flipped byte inside a tensor name would
//! still decode, just to the wrong tensor map. Names starting with `__` are
//! reserved.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fsutil::write_atomic;

pub const MAGIC: &[u8; 8] = b"SVTENSR1";
pub const METADATA_KEY: &str = "__metadata__";
pub const CHECKSUM_KEY: &str = "__checksum__";
const PREFIX_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad magic: not an .svt tensor file")]
    BadMagic,
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("tensor {name}: region {offset}+{length} lies outside the {payload_len}-byte payload")]
    BoundsError { name: String, offset: u64, length: u64, payload_len: u64 },
    #[error("tensor {name}: unsupported dtype {dtype:?}")]
    DtypeError { name: String, dtype: String },
    #[error("invalid tensor content: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::Invalid(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, TensorError> {
        Self::new(vec![rows, cols], data)
    }

    pub fn vector(data: Vec<f32>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    /// Bitwise equality, so NaN payloads compare equal to themselves.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Named tensors plus free-form string metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorFile {
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: BTreeMap<String, String>,
}

impl TensorFile {
    pub fn bit_eq(&self, other: &TensorFile) -> bool {
        self.metadata == other.metadata
            && self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|((ka, a), (kb, b))| ka == kb && a.bit_eq(b))
    }
}

pub fn encode(file: &TensorFile) -> Result<Vec<u8>, TensorError> {
    let mut header = Map::new();
    let mut offset = 0u64;
    for (name, tensor) in &file.tensors {
        if name.starts_with("__") {
            return Err(TensorError::Invalid(format!("tensor name {name} is reserved")));
        }
        let expected: usize = tensor.shape.iter().product();
        if expected != tensor.data.len() {
            return Err(TensorError::Invalid(format!("tensor {name}: shape does not match data length")));
        }
        let length = 4 * tensor.data.len() as u64;
        let mut entry = Map::new();
        entry.insert("dtype".into(), Value::from("f32"));
        entry.insert("length".into(), Value::from(length));
        entry.insert("offset".into(), Value::from(offset));
        entry.insert("shape".into(), Value::from(tensor.shape.clone()));
        header.insert(name.clone(), Value::Object(entry));
        offset += length;
    }
    if !file.metadata.is_empty() {
        let meta: Map<String, Value> = file.metadata.iter().map(|(k, v)| (k.clone(), Value::from(v.clone()))).collect();
        header.insert(METADATA_KEY.into(), Value::Object(meta));
    }
    if !header.is_empty() {
        let digest = header_checksum(&header);
        header.insert(CHECKSUM_KEY.into(), Value::from(digest));
    }
    let header = serde_json::to_vec(&Value::Object(header)).expect("header serialization is infallible");
    let header_len = u32::try_from(header.len()).map_err(|_| TensorError::Invalid("header exceeds 4 GiB".into()))?;

    let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header);
    for tensor in file.tensors.values() {
        for v in &tensor.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// `sha256:<hex>` over the canonical header without its checksum entry.
pub fn header_checksum(header: &Map<String, Value>) -> String {
    let mut body = header.clone();
    body.remove(CHECKSUM_KEY);
    let bytes = serde_json::to_vec(&Value::Object(body)).expect("header serialization is infallible");
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

fn corrupt(msg: impl Into<String>) -> TensorError {
    TensorError::CorruptHeader(msg.into())
}

fn as_u64(entry: &Map<String, Value>, key: &str, name: &str) -> Result<u64, TensorError> {
    entry
        .get(key)
        .and_then(Value::as_u64)
        .ok_or_else(|| corrupt(format!("tensor {name}: missing or non-integer {key}")))
}

pub fn decode(bytes: &[u8]) -> Result<TensorFile, TensorError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(TensorError::BadMagic);
    }
    if bytes.len() < PREFIX_LEN {
        return Err(corrupt("truncated before header length"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4-byte slice")) as usize;
    let header_end = PREFIX_LEN
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| corrupt(format!("header length {header_len} exceeds file size")))?;
    let header_bytes = &bytes[PREFIX_LEN..header_end];
    let header_text = std::str::from_utf8(header_bytes).map_err(|_| corrupt("header is not UTF-8"))?;
    let header: Value = serde_json::from_str(header_text).map_err(|e| corrupt(format!("header JSON: {e}")))?;
    if serde_json::to_vec(&header).expect("re-serialization is infallible") != header_bytes {
        return Err(corrupt("header is not in canonical form"));
    }
    let Value::Object(entries) = header else {
        return Err(corrupt("header is not a JSON object"));
    };
    if !entries.is_empty() {
        match entries.get(CHECKSUM_KEY).and_then(Value::as_str) {
            Some(stored) if stored == header_checksum(&entries) => {}
            Some(_) => return Err(corrupt("header checksum mismatch")),
            None => return Err(corrupt(format!("missing {CHECKSUM_KEY}"))),
        }
    }

    let payload = &bytes[header_end..];
    let payload_len = payload.len() as u64;
    let mut file = TensorFile::default();
    let mut cursor = 0u64;
    for (name, value) in &entries {
        if name == CHECKSUM_KEY {
            continue;
        }
        if name == METADATA_KEY {
            let Value::Object(meta) = value else {
                return Err(corrupt("metadata is not an object"));
            };
            for (k, v) in meta {
                let v = v.as_str().ok_or_else(|| corrupt(format!("metadata {k} is not a string")))?;
                file.metadata.insert(k.clone(), v.to_string());
            }
            continue;
        }
        if name.starts_with("__") {
            return Err(corrupt(format!("unknown reserved entry {name}")));
        }
        let Value::Object(entry) = value else {
            return Err(corrupt(format!("tensor {name}: entry is not an object")));
        };
        if entry.len() != 4 {
            return Err(corrupt(format!("tensor {name}: expected dtype, length, offset and shape")));
        }
        let dtype = entry
            .get("dtype")
            .and_then(Value::as_str)
            .ok_or_else(|| corrupt(format!("tensor {name}: missing dtype")))?;
        if dtype != "f32" {
            return Err(TensorError::DtypeError { name: name.clone(), dtype: dtype.to_string() });
        }
        let offset = as_u64(entry, "offset", name)?;
        let length = as_u64(entry, "length", name)?;
        let shape: Vec<usize> = entry
            .get("shape")
            .and_then(Value::as_array)
            .ok_or_else(|| corrupt(format!("tensor {name}: missing shape")))?
            .iter()
            .map(|d| d.as_u64().and_then(|d| usize::try_from(d).ok()))
            .collect::<Option<_>>()
            .ok_or_else(|| corrupt(format!("tensor {name}: shape must hold non-negative integers")))?;

        if offset.checked_add(length).is_none_or(|end| end > payload_len) {
            return Err(TensorError::BoundsError { name: name.clone(), offset, length, payload_len });
        }
        if offset != cursor {
            return Err(corrupt(format!("tensor {name}: offset {offset} breaks contiguous layout (expected {cursor})")));
        }
        let count = shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| corrupt(format!("tensor {name}: shape overflows")))?;
        if count.checked_mul(4) != Some(length) {
            return Err(corrupt(format!("tensor {name}: length {length} does not match shape {shape:?}")));
        }
        let region = &payload[offset as usize..(offset + length) as usize];
        let data = region.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk"))).collect();
        file.tensors.insert(name.clone(), Tensor { shape, data });
        cursor = offset + length;
    }
    if cursor != payload_len {
        return Err(corrupt(format!("{} trailing payload bytes", payload_len - cursor)));
    }
    Ok(file)
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<TensorFile, TensorError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| TensorError::Io { path: path.to_path_buf(), source })?;
    decode(&bytes)
}

pub fn write_tensor_file(path: impl AsRef<Path>, file: &TensorFile) -> Result<(), TensorError> {
    let path = path.as_ref();
    let bytes = encode(file)?;
    write_atomic(path, &bytes).map_err(|source| TensorError::Io { path: path.to_path_buf(), source })
}

/// Row-major f32 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, TensorError> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(TensorError::Invalid(format!("{rows}x{cols} matrix needs {} values", rows * cols)));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(TensorError::Invalid("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn from_tensor(name: &str, tensor: &Tensor) -> Result<Self, TensorError> {
        match tensor.shape.as_slice() {
            &[rows, cols] => Self::new(rows, cols, tensor.data.clone()),
            other => Err(TensorError::Invalid(format!("{name} must be rank 2, got shape {other:?}"))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor { shape: vec![self.rows, self.cols], data: self.data.clone() }
    }
}

/// Vision-encoder tokens in patch-grid row-major order, with optional
/// attention (queries x tokens) and hidden-content mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingSet {
    pub tokens: Matrix,
    pub grid: (usize, usize),
    pub attention: Option<Matrix>,
    pub mask: Option<Vec<bool>>,
    pub source: Option<String>,
}

impl TokenEmbeddingSet {
    pub fn new(tokens: Matrix, grid: Option<(usize, usize)>) -> Result<Self, TensorError> {
        let set = Self {
            grid: grid.unwrap_or((1, tokens.rows())),
            tokens,
            attention: None,
            mask: None,
            source: None,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        let (len, dim) = (self.tokens.rows(), self.tokens.cols());
        if len == 0 || dim == 0 {
            return Err(TensorError::Invalid(format!("token matrix must be non-empty, got {len}x{dim}")));
        }
        if self.tokens.data().iter().any(|v| !v.is_finite()) {
            return Err(TensorError::Invalid("token matrix contains NaN or Inf".into()));
        }
        if self.grid.0 * self.grid.1 != len {
            return Err(TensorError::Invalid(format!("grid {:?} does not cover {len} tokens", self.grid)));
        }
        if let Some(att) = &self.attention {
            if att.cols() != len {
                return Err(TensorError::Invalid(format!("attention has {} columns for {len} tokens", att.cols())));
            }
            if att.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(TensorError::Invalid("attention must be finite and non-negative".into()));
            }
        }
        if let Some(mask) = &self.mask {
            if mask.len() != len {
                return Err(TensorError::Invalid(format!("mask has {} entries for {len} tokens", mask.len())));
            }
            if mask.iter().all(|&m| m) || mask.iter().all(|&m| !m) {
                return Err(TensorError::Invalid("mask needs at least one hidden and one background token".into()));
            }
        }
        Ok(())
    }

    pub fn from_file(file: &TensorFile) -> Result<Self, TensorError> {
        let tokens = file
            .tensors
            .get("tokens")
            .ok_or_else(|| TensorError::Invalid("no tensor named \"tokens\"".into()))?;
        let tokens = Matrix::from_tensor("tokens", tokens)?;
        let grid = match file.metadata.get("grid") {
            Some(g) => Some(parse_grid(g)?),
            None => None,
        };
        let attention = file.tensors.get("attention").map(|t| Matrix::from_tensor("attention", t)).transpose()?;
        let mask = match file.tensors.get("mask") {
            Some(t) if t.shape.len() == 1 => Some(
                t.data
                    .iter()
                    .map(|&v| match v {
                        0.0 => Ok(false),
                        1.0 => Ok(true),
                        other => Err(TensorError::Invalid(format!("mask value {other} is not 0 or 1"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            Some(t) => return Err(TensorError::Invalid(format!("mask must be rank 1, got shape {:?}", t.shape))),
            None => None,
        };
        let set = Self {
            grid: grid.unwrap_or((1, tokens.rows())),
            tokens,
            attention,
            mask,
            source: file.metadata.get("source").cloned(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn to_file(&self) -> TensorFile {
        let mut file = TensorFile::default();
        file.tensors.insert("tokens".into(), self.tokens.to_tensor());
        if let Some(att) = &self.attention {
            file.tensors.insert("attention".into(), att.to_tensor());
        }
        if let Some(mask) = &self.mask {
            file.tensors.insert("mask".into(), Tensor::vector(mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()));
        }
        file.metadata.insert("grid".into(), format!("{}x{}", self.grid.0, self.grid.1));
        if let Some(source) = &self.source {
            file.metadata.insert("source".into(), source.clone());
        }
        file
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TensorError> {
        Self::from_file(&read_tensor_file(path)?)
    }
}

fn parse_grid(text: &str) -> Result<(usize, usize), TensorError> {
    let bad = || TensorError::Invalid(format!("grid metadata {text:?} is not ROWSxCOLS"));
    let (r, c) = text.split_once('x').ok_or_else(bad)?;
    Ok((r.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?))
}
