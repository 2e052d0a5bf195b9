//! Text checkpoints.
//!
//! ```text
//! # architecture = dcgan-generator
//! # seed = 0
//! conv1.kernel 4 8 1 3 3 1.2345678901234567e-1 ...
//! ```
//!
//! Header lines are `# key = value`. Every other non-empty line holds one
//! parameter: name, rank, dimensions, then the values with 17 significant
//! digits, which reads back bit-exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{AutogradError, ParamSet, Result, Tensor};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub header: BTreeMap<String, String>,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn header_value(&self, key: &str) -> Result<&str> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| AutogradError::Checkpoint(format!("missing header key {key:?}")))
    }
}

pub fn write_checkpoint<W: Write>(mut out: W, header: &BTreeMap<String, String>, params: &ParamSet) -> Result<()> {
    for (k, v) in header {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(AutogradError::Checkpoint(format!("header entry {k:?} cannot be stored")));
        }
        writeln!(out, "# {k} = {v}")?;
    }
    for (name, t) in params.iter() {
        if name.contains(char::is_whitespace) || name.is_empty() {
            return Err(AutogradError::Checkpoint(format!("parameter name {name:?} cannot be stored")));
        }
        write!(out, "{name} {}", t.shape.len())?;
        for d in &t.shape {
            write!(out, " {d}")?;
        }
        for v in &t.data {
            write!(out, " {v:.16e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Checkpoint> {
    let mut ck = Checkpoint::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let bad = |msg: &str| AutogradError::Checkpoint(format!("line {}: {msg}", i + 1));
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(h) = trimmed.strip_prefix('#') {
            let (k, v) = h.split_once('=').ok_or_else(|| bad("header without '='"))?;
            ck.header.insert(k.trim().to_string(), v.trim().to_string());
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let name = fields.next().ok_or_else(|| bad("empty record"))?.to_string();
        let rank: usize = fields.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad rank"))?;
        let shape: Vec<usize> = (0..rank)
            .map(|_| fields.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad dimension")))
            .collect::<Result<_>>()?;
        let data: Vec<f64> = fields.map(|s| s.parse().map_err(|_| bad("bad value"))).collect::<Result<_>>()?;
        let t = Tensor::new(shape, data).map_err(|e| bad(&e.to_string()))?;
        ck.params.push((name, t));
    }
    Ok(ck)
}

pub fn save_checkpoint(path: &Path, header: &BTreeMap<String, String>, params: &ParamSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, header, params)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
