//! Checkpoint container: a line-oriented text header followed by a payload
//! of little-endian `f32` values.
//!
//! ```text
//! SPANFORGE1
//! meta	<key>	<value>
//! tensor	<name>	<d0,d1,...>	<byte offset>	<element count>
//! end
//! <payload>
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::{ModelConfig, ModelError, ParameterStore, Precision};
use crate::autograd::Tensor;

pub const MAGIC: &str = "SPANFORGE1";

/// Named tensors plus string metadata. Also used for embedding files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorFile {
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor>,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String, ModelError> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => {
                return Err(ModelError::MalformedHeader(format!(
                    "bad escape sequence \\{}",
                    other.map(String::from).unwrap_or_default()
                )))
            }
        }
    }
    Ok(out)
}

fn shape_str(shape: &[usize]) -> String {
    if shape.is_empty() {
        return "-".into();
    }
    shape.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_shape(s: &str) -> Result<Vec<usize>, ModelError> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|d| {
            d.parse()
                .map_err(|_| ModelError::MalformedHeader(format!("bad shape {s:?}")))
        })
        .collect()
}

impl TensorFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = format!("{MAGIC}\n");
        for (k, v) in &self.meta {
            header.push_str(&format!("meta\t{}\t{}\n", escape(k), escape(v)));
        }
        let mut offset = 0usize;
        for (name, t) in &self.tensors {
            header.push_str(&format!(
                "tensor\t{}\t{}\t{}\t{}\n",
                escape(name),
                shape_str(t.shape()),
                offset,
                t.len()
            ));
            offset += 4 * t.len();
        }
        header.push_str("end\n");
        let mut out = header.into_bytes();
        out.reserve(offset);
        for t in self.tensors.values() {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut pos = 0usize;
        let mut next_line = || -> Option<&[u8]> {
            let rest = &bytes[pos..];
            let end = rest.iter().position(|&b| b == b'\n')?;
            pos += end + 1;
            Some(&rest[..end])
        };
        let first = next_line().unwrap_or(bytes);
        if first != MAGIC.as_bytes() {
            let shown = String::from_utf8_lossy(&first[..first.len().min(32)]).into_owned();
            return Err(ModelError::VersionMismatch(shown));
        }
        let mut meta = BTreeMap::new();
        let mut manifest = Vec::new();
        loop {
            let line = next_line()
                .ok_or_else(|| ModelError::MalformedHeader("missing end marker".into()))?;
            let line = std::str::from_utf8(line)
                .map_err(|_| ModelError::MalformedHeader("header is not UTF-8".into()))?;
            if line == "end" {
                break;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["meta", k, v] => {
                    meta.insert(unescape(k)?, unescape(v)?);
                }
                ["tensor", name, shape, offset, count] => {
                    let num = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|_| ModelError::MalformedHeader(format!("bad number {s:?}")))
                    };
                    manifest.push((unescape(name)?, parse_shape(shape)?, num(offset)?, num(count)?));
                }
                _ => return Err(ModelError::MalformedHeader(format!("unrecognized line {line:?}"))),
            }
        }
        let payload = &bytes[pos..];
        let mut expected = 0usize;
        let mut tensors = BTreeMap::new();
        for (name, shape, offset, count) in manifest {
            if shape.iter().product::<usize>() != count {
                return Err(ModelError::CorruptPayload(format!(
                    "{name}: shape {shape:?} does not hold {count} values"
                )));
            }
            let end = offset
                .checked_add(count.saturating_mul(4))
                .filter(|&e| offset == expected && e <= payload.len())
                .ok_or_else(|| {
                    ModelError::CorruptPayload(format!(
                        "{name}: bytes {offset}..+{} outside payload of {} bytes",
                        4 * count,
                        payload.len()
                    ))
                })?;
            let data = payload[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            tensors.insert(name, Tensor::new(shape, data));
            expected = end;
        }
        if expected != payload.len() {
            return Err(ModelError::CorruptPayload(format!(
                "manifest covers {expected} bytes, payload has {}",
                payload.len()
            )));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    config: &ModelConfig,
    params: &ParameterStore,
) -> Result<(), ModelError> {
    let file = TensorFile {
        meta: config.to_kv(),
        tensors: params.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
    };
    file.save(path)
}

/// Loads a checkpoint; parameters come back in single precision.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelConfig, ParameterStore), ModelError> {
    let file = TensorFile::load(path)?;
    let config = ModelConfig::from_kv(&file.meta)?;
    let params = ParameterStore::from_tensors(&config, file.tensors, Precision::Single)?;
    Ok((config, params))
}
