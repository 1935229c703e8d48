//! Plain-text checkpoint format, version 1:
//!
//! ```text
//! realnessgan-checkpoint 1
//! kind <generator|discriminator>
//! meta <key> <value>          (zero or more)
//! tensor <name> <d0,d1,...>   (shape; "-" for a scalar)
//! <space-separated values>
//! ...
//! end
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a write/read
//! cycle is bit-exact.

use std::io::{BufRead, Write};

use super::NnError;
use crate::diffcore::Tensor;

pub const CHECKPOINT_MAGIC: &str = "realnessgan-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(kind: &str) -> Self {
        Self { kind: kind.into(), meta: Vec::new(), tensors: Vec::new() }
    }

    pub fn meta_value(&self, key: &str) -> Result<&str, NnError> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| NnError::Checkpoint(format!("missing meta key {key}")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, NnError> {
        self.meta_value(key)?
            .parse()
            .map_err(|_| NnError::Checkpoint(format!("bad value for meta key {key}")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor, NnError> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| NnError::Checkpoint(format!("missing tensor {name}")))
    }
}

pub fn write_checkpoint(w: &mut impl Write, ck: &Checkpoint) -> Result<(), NnError> {
    writeln!(w, "{CHECKPOINT_MAGIC} {VERSION}")?;
    writeln!(w, "kind {}", ck.kind)?;
    for (k, v) in &ck.meta {
        writeln!(w, "meta {k} {v}")?;
    }
    for (name, t) in &ck.tensors {
        let shape = if t.shape().is_empty() {
            "-".to_string()
        } else {
            t.shape().iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        };
        writeln!(w, "tensor {name} {shape}")?;
        let values: Vec<String> = t.data().iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", values.join(" "))?;
    }
    writeln!(w, "end")?;
    Ok(())
}

pub fn read_checkpoint(r: impl BufRead) -> Result<Checkpoint, NnError> {
    let bad = |msg: String| NnError::Checkpoint(msg);
    let mut lines = r.lines();
    let mut next = || -> Result<String, NnError> { lines.next().ok_or_else(|| bad("unexpected end of file".into()))?.map_err(NnError::from) };

    let header = next()?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(CHECKPOINT_MAGIC) {
        return Err(bad("not a checkpoint file".into()));
    }
    let version: u32 = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("missing version".into()))?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let kind_line = next()?;
    let kind = kind_line.strip_prefix("kind ").ok_or_else(|| bad("missing kind line".into()))?.trim().to_string();
    let mut ck = Checkpoint::new(&kind);
    loop {
        let line = next()?;
        if line == "end" {
            return Ok(ck);
        }
        if let Some(rest) = line.strip_prefix("meta ") {
            let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
            ck.meta.push((k.to_string(), v.to_string()));
        } else if let Some(rest) = line.strip_prefix("tensor ") {
            let (name, shape) = rest.split_once(' ').ok_or_else(|| bad(format!("bad tensor line: {line}")))?;
            let shape: Vec<usize> = if shape == "-" {
                Vec::new()
            } else {
                shape
                    .split(',')
                    .map(|d| d.parse().map_err(|_| bad(format!("bad shape for {name}"))))
                    .collect::<Result<_, _>>()?
            };
            let values: Vec<f64> = next()?
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad(format!("bad value in {name}"))))
                .collect::<Result<_, _>>()?;
            let t = Tensor::new(shape, values).map_err(|e| bad(format!("{name}: {e}")))?;
            ck.tensors.push((name.to_string(), t));
        } else {
            return Err(bad(format!("unexpected line: {line}")));
        }
    }
}
