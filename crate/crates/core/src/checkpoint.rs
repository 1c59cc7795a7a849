//! Binary checkpoint container.
//!
//! ```text
//! magic "D2CCKPT\0" | u32 version | u32 len, config text | u32 count | tensors
//! tensor: u32 len, name | u8 dtype (0 = f32, 1 = f64) | u32 rows | u32 cols | data
//! ```
//! All integers and floats are little-endian. Model weights are stored as f32.
//! Training state (full-precision weights and optimizer moments) goes into
//! f64 tensors so a resumed run continues bit-exactly.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::model::{Model, ModelConfig};
use crate::nn::tape::Mat;

const MAGIC: &[u8; 8] = b"D2CCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

/// Prefix of the full-precision copies of the model weights.
pub const MASTER_PREFIX: &str = "master/";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn tag(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            _ => Err(Error::Checkpoint(format!("unknown dtype tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dtype: DType,
    pub value: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Extra `key = value` entries (training state, provenance).
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    /// Weights only, as f32.
    pub fn from_model(model: &Model) -> Self {
        let tensors = model
            .params
            .names
            .iter()
            .zip(&model.params.values)
            .map(|(n, v)| Tensor { name: n.clone(), dtype: DType::F32, value: v.clone() })
            .collect();
        Checkpoint { config: model.config.clone(), meta: BTreeMap::new(), tensors }
    }

    /// Adds f64 tensors `prefix + name` for each parameter-aligned matrix.
    pub fn add_f64(&mut self, prefix: &str, names: &[String], values: &[Mat]) {
        for (n, v) in names.iter().zip(values) {
            self.tensors.push(Tensor { name: format!("{prefix}{n}"), dtype: DType::F64, value: v.clone() });
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// f64 tensors `prefix + name` in parameter order, if all are present.
    pub fn f64_group(&self, prefix: &str, names: &[String]) -> Option<Vec<Mat>> {
        names
            .iter()
            .map(|n| self.tensor(&format!("{prefix}{n}")).filter(|t| t.dtype == DType::F64).map(|t| t.value.clone()))
            .collect()
    }

    /// Rebuilds the model, preferring full-precision weights when present.
    /// Shapes are validated against the stored config.
    pub fn model(&self) -> Result<Model> {
        let skeleton = Model::new(self.config.clone(), 0)?;
        let names = &skeleton.params.names;
        let values = match self.f64_group(MASTER_PREFIX, names) {
            Some(v) => v,
            None => names
                .iter()
                .map(|n| {
                    self.tensor(n)
                        .map(|t| t.value.clone())
                        .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{n}'")))
                })
                .collect::<Result<_>>()?,
        };
        for t in &self.tensors {
            if t.dtype == DType::F32 && skeleton.params.index_of(&t.name).is_none() {
                return Err(Error::Checkpoint(format!("unexpected tensor '{}'", t.name)));
            }
        }
        Model::from_named(self.config.clone(), names.iter().cloned().zip(values).collect())
    }

    fn config_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.config.to_pairs() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for (k, v) in &self.meta {
            out.push_str(&format!("meta.{k} = {v}\n"));
        }
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_bytes(&mut buf, self.config_text().as_bytes())?;
        put_len(&mut buf, self.tensors.len())?;
        for t in &self.tensors {
            put_bytes(&mut buf, t.name.as_bytes())?;
            buf.push(t.dtype.tag());
            let (r, c) = t.value.dim();
            put_len(&mut buf, r)?;
            put_len(&mut buf, c)?;
            for &x in t.value.iter() {
                match t.dtype {
                    DType::F32 => buf.extend_from_slice(&(x as f32).to_le_bytes()),
                    DType::F64 => buf.extend_from_slice(&x.to_le_bytes()),
                }
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        let mut cur = Cursor { data: &data, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let text = cur.string()?;
        let mut config = ModelConfig::full();
        let mut meta = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Checkpoint(format!("config line {}: '{line}'", i + 1)))?;
            match k.strip_prefix("meta.") {
                Some(m) => {
                    meta.insert(m.to_string(), v.to_string());
                }
                None => {
                    if !config.set(k, v)? {
                        return Err(Error::Checkpoint(format!("unknown config key '{k}'")));
                    }
                }
            }
        }
        config.validate()?;
        let count = cur.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name = cur.string()?;
            let dtype = DType::from_tag(cur.take(1)?[0])?;
            let rows = cur.u32()? as usize;
            let cols = cur.u32()? as usize;
            let n = rows.checked_mul(cols).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?;
            let width = if dtype == DType::F32 { 4 } else { 8 };
            let raw = cur.take(n.checked_mul(width).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
            let vals: Vec<f64> = match dtype {
                DType::F32 => raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64).collect(),
                DType::F64 => raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect(),
            };
            let value = Mat::from_shape_vec((rows, cols), vals).map_err(|e| Error::Checkpoint(e.to_string()))?;
            tensors.push(Tensor { name, dtype, value });
        }
        if cur.pos != data.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", data.len() - cur.pos)));
        }
        Ok(Checkpoint { config, meta, tensors })
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            self.write_to(&mut f)?;
            f.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path)
            .map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", path.display())))?;
        Self::read_from(&mut f)
    }
}

fn put_len(buf: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::Checkpoint(format!("length {n} exceeds u32")))?;
    buf.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

fn put_bytes(buf: &mut Vec<u8>, b: &[u8]) -> Result<()> {
    put_len(buf, b.len())?;
    buf.extend_from_slice(b);
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.data.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid utf-8".into()))
    }
}
