//! Checkpoint archive: a UTF-8 manifest followed by raw little-endian blocks.
//!
//! ```text
//! XLNBT-CHECKPOINT
//! format_version 1
//! meta <key> <value>
//! entry <name> f64 <d0>x<d1>... <trainable:0|1> <offset> <count>
//! end
//! <f64 LE values, entries concatenated in manifest order>
//! ```
//!
//! Meta and entries are written in sorted key order, so load followed by save
//! reproduces the input bytes exactly.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::{ParameterSet, Tensor};

pub const MAGIC: &str = "XLNBT-CHECKPOINT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub params: ParameterSet,
}

impl Checkpoint {
    pub fn new(params: ParameterSet) -> Self {
        Checkpoint {
            meta: BTreeMap::new(),
            params,
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.insert(key.into(), value.to_string());
        self
    }

    pub fn meta_str(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64> {
        let raw = self
            .meta
            .get(key)
            .ok_or_else(|| Error::InvalidArgument(format!("checkpoint meta `{key}` missing")))?;
        raw.parse()
            .map_err(|_| Error::InvalidArgument(format!("checkpoint meta `{key}`=`{raw}` is not a number")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut manifest = format!("{MAGIC}\nformat_version {FORMAT_VERSION}\n");
        for (k, v) in &self.meta {
            if k.is_empty() || k.contains(char::is_whitespace) || v.contains('\n') {
                return Err(Error::InvalidArgument(format!("unserializable meta entry `{k}`")));
            }
            manifest.push_str(&format!("meta {k} {v}\n"));
        }
        let mut offset = 0usize;
        let mut blob = Vec::new();
        for (name, p) in self.params.iter() {
            if name.contains(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!("parameter name `{name}` has whitespace")));
            }
            let dims: Vec<String> = p.tensor.shape().iter().map(usize::to_string).collect();
            let count = p.tensor.len();
            manifest.push_str(&format!(
                "entry {name} f64 {} {} {offset} {count}\n",
                if dims.is_empty() { "scalar".to_string() } else { dims.join("x") },
                p.trainable as u8
            ));
            for v in p.tensor.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            offset += count;
        }
        manifest.push_str("end\n");
        let mut out = manifest.into_bytes();
        out.extend_from_slice(&blob);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |msg: String| Error::format(origin, msg);
        let mut pos = 0usize;
        let next_line = |pos: &mut usize| -> Result<String> {
            let rest = &bytes[*pos..];
            let nl = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("truncated manifest".into()))?;
            let line = std::str::from_utf8(&rest[..nl])
                .map_err(|_| bad("manifest is not UTF-8".into()))?
                .to_string();
            *pos += nl + 1;
            Ok(line)
        };
        if next_line(&mut pos)? != MAGIC {
            return Err(bad("missing checkpoint magic".into()));
        }
        let version_line = next_line(&mut pos)?;
        match version_line.strip_prefix("format_version ") {
            Some(v) if v == FORMAT_VERSION.to_string() => {}
            _ => return Err(bad(format!("unsupported version line `{version_line}`"))),
        }
        let mut meta = BTreeMap::new();
        let mut entries = Vec::new();
        loop {
            let line = next_line(&mut pos)?;
            if line == "end" {
                break;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("entry ") {
                let f: Vec<&str> = rest.split(' ').collect();
                if f.len() != 6 || f[1] != "f64" {
                    return Err(bad(format!("malformed entry line `{line}`")));
                }
                let shape: Vec<usize> = if f[2] == "scalar" {
                    vec![]
                } else {
                    f[2].split('x')
                        .map(|d| d.parse().map_err(|_| bad(format!("bad shape `{}`", f[2]))))
                        .collect::<Result<_>>()?
                };
                let trainable = match f[3] {
                    "0" => false,
                    "1" => true,
                    other => return Err(bad(format!("bad trainable flag `{other}`"))),
                };
                let offset: usize = f[4].parse().map_err(|_| bad("bad offset".into()))?;
                let count: usize = f[5].parse().map_err(|_| bad("bad count".into()))?;
                entries.push((f[0].to_string(), shape, trainable, offset, count));
            } else {
                return Err(bad(format!("unexpected manifest line `{line}`")));
            }
        }
        let blob = &bytes[pos..];
        let mut params = ParameterSet::new();
        let mut expected_offset = 0;
        for (name, shape, trainable, offset, count) in entries {
            if offset != expected_offset {
                return Err(bad(format!("entry `{name}` has non-contiguous offset")));
            }
            let start = offset * 8;
            let end = start + count * 8;
            if end > blob.len() {
                return Err(bad(format!("entry `{name}` runs past end of data")));
            }
            let data: Vec<f64> = blob[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let tensor = Tensor::new(shape, data).map_err(|e| bad(format!("entry `{name}`: {e}")))?;
            params.insert(name, tensor, trainable)?;
            expected_offset += count;
        }
        if expected_offset * 8 != blob.len() {
            return Err(bad("trailing bytes after value blocks".into()));
        }
        Ok(Checkpoint { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes, path)
    }
}
