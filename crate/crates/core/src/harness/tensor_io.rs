//! Binary tensor files and flat key=value manifests.
//!
//! Layout: the 4-byte magic `AMIT`, a version byte, a dtype byte
//! (1 = f64, 2 = complex128 as interleaved re/im f64, 3 = i64), a byte with
//! the number of dimensions, each dimension as a little-endian u64, then the
//! row-major payload in little-endian order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{ParamStore, RealTensor};

pub const MAGIC: &[u8; 4] = b"AMIT";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F64(Vec<f64>),
    C128(Vec<Complex64>),
    I64(Vec<i64>),
}

impl TensorData {
    fn code(&self) -> u8 {
        match self {
            TensorData::F64(_) => 1,
            TensorData::C128(_) => 2,
            TensorData::I64(_) => 3,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F64(v) => v.len(),
            TensorData::C128(v) => v.len(),
            TensorData::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl TensorFile {
    pub fn new(dims: &[usize], data: TensorData) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::domain(format!(
                "dims {dims:?} do not match {} values",
                data.len()
            )));
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::domain("too many dimensions"));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn from_real(t: &RealTensor) -> Self {
        Self {
            dims: t.shape.clone(),
            data: TensorData::F64(t.data.clone()),
        }
    }

    pub fn to_real(&self) -> Result<RealTensor> {
        match &self.data {
            TensorData::F64(v) => RealTensor::from_vec(&self.dims, v.clone()),
            _ => Err(Error::domain("expected an f64 tensor")),
        }
    }

    pub fn into_i64(self) -> Result<Vec<i64>> {
        match self.data {
            TensorData::I64(v) => Ok(v),
            _ => Err(Error::domain("expected an i64 tensor")),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(7 + 8 * self.dims.len() + 16 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.data.code());
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::C128(v) => v.iter().for_each(|z| {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }),
            TensorData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    /// Parses a tensor; `origin` only labels errors.
    pub fn decode(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |msg: String| Error::format(origin, msg);
        if bytes.len() < 7 || &bytes[..4] != MAGIC {
            return Err(bad("missing AMIT magic".into()));
        }
        if bytes[4] != VERSION {
            return Err(bad(format!("unsupported version {}", bytes[4])));
        }
        let code = bytes[5];
        let ndim = bytes[6] as usize;
        let header = 7 + 8 * ndim;
        if bytes.len() < header {
            return Err(bad("truncated header".into()));
        }
        let dims: Vec<usize> = (0..ndim)
            .map(|i| u64::from_le_bytes(bytes[7 + 8 * i..15 + 8 * i].try_into().expect("8 bytes")) as usize)
            .collect();
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| bad("dimension product overflows".into()))?;
        let width = match code {
            1 | 3 => 8,
            2 => 16,
            other => return Err(bad(format!("unknown dtype code {other}"))),
        };
        let payload = &bytes[header..];
        if Some(payload.len()) != count.checked_mul(width) {
            return Err(bad(format!(
                "payload of {} bytes, expected {count} values of {width} bytes",
                payload.len()
            )));
        }
        let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8 bytes"));
        let data = match code {
            1 => TensorData::F64(payload.chunks_exact(8).map(f).collect()),
            2 => TensorData::C128(
                payload
                    .chunks_exact(16)
                    .map(|c| Complex64::new(f(&c[..8]), f(&c[8..])))
                    .collect(),
            ),
            _ => TensorData::I64(
                payload
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
        };
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }
}

/// Ordered flat `key = value` text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Parsed value of a required key; `origin` labels errors.
    pub fn parse<T: std::str::FromStr>(&self, key: &str, origin: &Path) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::format(origin, format!("missing key `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::format(origin, format!("bad value `{raw}` for `{key}`")))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut m = Self::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(origin, format!("line {}: expected key = value", no + 1)))?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

/// Writes a parameter store as `<stem>.bin`, all tensors concatenated in
/// registration order into one f64 vector, and `<stem>.manifest` with each
/// tensor's name, shape and offset.
pub fn save_checkpoint(stem: &Path, store: &ParamStore) -> Result<()> {
    let mut manifest = Manifest::new();
    manifest.set("init_seed", store.init_seed());
    manifest.set("num_tensors", store.len());
    let mut flat = Vec::with_capacity(store.num_scalars());
    for (i, (name, value)) in store.named_values().enumerate() {
        let shape: Vec<String> = value.shape.iter().map(usize::to_string).collect();
        manifest.set(&format!("tensor.{i:03}.name"), name);
        manifest.set(&format!("tensor.{i:03}.shape"), shape.join("x"));
        manifest.set(&format!("tensor.{i:03}.offset"), flat.len());
        flat.extend_from_slice(&value.data);
    }
    let n = flat.len();
    TensorFile::new(&[n], TensorData::F64(flat))?.write(&with_ext(stem, "bin"))?;
    manifest.write(&with_ext(stem, "manifest"))
}

/// Reads a checkpoint written by [`save_checkpoint`] as `(name, tensor)` pairs.
pub fn load_checkpoint(stem: &Path) -> Result<Vec<(String, RealTensor)>> {
    let mpath = with_ext(stem, "manifest");
    let manifest = Manifest::read(&mpath)?;
    let bpath = with_ext(stem, "bin");
    let flat = match TensorFile::read(&bpath)?.data {
        TensorData::F64(v) => v,
        _ => return Err(Error::format(&bpath, "checkpoint payload must be f64")),
    };
    let n: usize = manifest.parse("num_tensors", &mpath)?;
    (0..n)
        .map(|i| {
            let name: String = manifest.parse(&format!("tensor.{i:03}.name"), &mpath)?;
            let shape_text: String = manifest.parse(&format!("tensor.{i:03}.shape"), &mpath)?;
            let offset: usize = manifest.parse(&format!("tensor.{i:03}.offset"), &mpath)?;
            let shape = shape_text
                .split('x')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::format(&mpath, format!("bad shape `{shape_text}`")))?;
            let len: usize = shape.iter().product();
            let values = flat
                .get(offset..offset + len)
                .ok_or_else(|| Error::format(&bpath, format!("tensor {name} exceeds payload")))?;
            Ok((name, RealTensor::from_vec(&shape, values.to_vec())?))
        })
        .collect()
}

/// `stem` with `.ext` appended (the stem may itself contain dots).
pub fn with_ext(stem: &Path, ext: &str) -> std::path::PathBuf {
    let mut s = stem.as_os_str().to_os_string();
    s.push(".");
    s.push(ext);
    s.into()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}
