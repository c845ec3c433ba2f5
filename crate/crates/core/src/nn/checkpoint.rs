//! Checkpoint container.
//!
//! A plain-text header followed by raw little-endian `f32` payloads:
//!
//! ```text
//! seed 7
//! step 20000
//! config_hash 9c1e...
//! algo hybrid-iql
//! actor.0.weight 25x256 f32 0
//! actor.0.bias 1x256 f32 25600
//! ...
//!
//! <payload bytes>
//! ```
//!
//! Two-token lines are key/value metadata; four-token lines describe an
//! array as `name shape dtype offset`, with `offset` in bytes from the start
//! of the payload. The header ends at the first empty line.

use std::collections::BTreeMap;
use std::path::Path;

use super::{Linear, Matrix, Mlp};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub step: u64,
    pub config_hash: String,
    pub meta: BTreeMap<String, String>,
    arrays: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn new(seed: u64, step: u64, config_hash: impl Into<String>) -> Self {
        Checkpoint {
            seed,
            step,
            config_hash: config_hash.into(),
            meta: BTreeMap::new(),
            arrays: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn push(&mut self, name: impl Into<String>, array: &Matrix) {
        self.arrays.push((name.into(), array.clone()));
    }

    pub fn push_mlp(&mut self, prefix: &str, net: &Mlp) {
        for (i, layer) in net.layers().iter().enumerate() {
            self.push(format!("{prefix}.{i}.weight"), &layer.weight);
            self.push(format!("{prefix}.{i}.bias"), &layer.bias);
        }
    }

    pub fn arrays(&self) -> &[(String, Matrix)] {
        &self.arrays
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::parse("checkpoint", format!("missing array `{name}`")))
    }

    pub fn mlp(&self, prefix: &str) -> Result<Mlp> {
        let mut layers = Vec::new();
        loop {
            let w = format!("{prefix}.{}.weight", layers.len());
            if !self.arrays.iter().any(|(n, _)| *n == w) {
                break;
            }
            let b = format!("{prefix}.{}.bias", layers.len());
            layers.push(Linear {
                weight: self.get(&w)?.clone(),
                bias: self.get(&b)?.clone(),
            });
        }
        Mlp::from_layers(layers)
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::new();
        header.push_str(&format!("seed {}\n", self.seed));
        header.push_str(&format!("step {}\n", self.step));
        header.push_str(&format!("config_hash {}\n", self.config_hash));
        for (k, v) in &self.meta {
            header.push_str(&format!("{k} {v}\n"));
        }
        let mut offset = 0usize;
        for (name, m) in &self.arrays {
            header.push_str(&format!("{name} {}x{} f32 {offset}\n", m.rows(), m.cols()));
            offset += m.data().len() * 4;
        }
        header.push('\n');
        let mut out = header.into_bytes();
        out.reserve(offset);
        for (_, m) in &self.arrays {
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let end = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| Error::parse("checkpoint", "header not terminated by a blank line"))?;
        let header = std::str::from_utf8(&bytes[..end])
            .map_err(|e| Error::parse("checkpoint header", e))?;
        let payload = &bytes[end + 2..];
        let mut seed = None;
        let mut step = None;
        let mut config_hash = None;
        let mut meta = BTreeMap::new();
        let mut arrays = Vec::new();
        for (lineno, line) in header.lines().enumerate() {
            let loc = || format!("checkpoint header line {}", lineno + 1);
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens.as_slice() {
                ["seed", v] => seed = Some(v.parse().map_err(|e| Error::parse(loc(), e))?),
                ["step", v] => step = Some(v.parse().map_err(|e| Error::parse(loc(), e))?),
                ["config_hash", v] => config_hash = Some(v.to_string()),
                [k, v] => {
                    meta.insert(k.to_string(), v.to_string());
                }
                [name, shape, dtype, offset] => {
                    if *dtype != "f32" {
                        return Err(Error::parse(loc(), format!("unsupported dtype {dtype}")));
                    }
                    let (r, c) = shape
                        .split_once('x')
                        .ok_or_else(|| Error::parse(loc(), format!("bad shape {shape}")))?;
                    let rows: usize = r.parse().map_err(|e| Error::parse(loc(), e))?;
                    let cols: usize = c.parse().map_err(|e| Error::parse(loc(), e))?;
                    let offset: usize = offset.parse().map_err(|e| Error::parse(loc(), e))?;
                    let len = rows * cols * 4;
                    let raw = payload.get(offset..offset + len).ok_or_else(|| {
                        Error::parse(loc(), format!("array `{name}` exceeds payload"))
                    })?;
                    let data = raw
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                        .collect();
                    arrays.push((name.to_string(), Matrix::from_vec(rows, cols, data)?));
                }
                _ => return Err(Error::parse(loc(), format!("unrecognised line `{line}`"))),
            }
        }
        Ok(Checkpoint {
            seed: seed.ok_or_else(|| Error::parse("checkpoint", "missing seed"))?,
            step: step.ok_or_else(|| Error::parse("checkpoint", "missing step"))?,
            config_hash: config_hash
                .ok_or_else(|| Error::parse("checkpoint", "missing config_hash"))?,
            meta,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
