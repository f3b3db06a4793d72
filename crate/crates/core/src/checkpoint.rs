//! Single-file checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "HADAPTCK" | u32 format version | u64 header length | JSON header
//! u32 array count | repeated { u32 name length | name | u64 value count | f64 values }
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a write/read cycle is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossReport;
use crate::networks::{ArchConfig, ModelBundle};
use crate::nn::Parameterized;
use crate::training::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"HADAPTCK";
/// Number of most recent loss records kept inside a checkpoint.
pub const LOG_TAIL: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub bundle: ModelBundle,
    /// Optimizer steps taken in the stage that produced this checkpoint.
    pub step: u64,
    pub log_tail: Vec<LossReport>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: TrainConfig,
    arch: ArchConfig,
    step: u64,
    log_tail: Vec<String>,
    has_target: bool,
    has_discriminator: bool,
    has_siamese_head: bool,
}

fn collect_arrays(bundle: &ModelBundle) -> Vec<(String, Vec<f64>)> {
    fn push<P: Parameterized>(out: &mut Vec<(String, Vec<f64>)>, prefix: &str, p: &P) {
        for (n, v) in p.named_params() {
            out.push((format!("{prefix}.{n}"), v.value.clone()));
        }
        for (n, b) in p.named_buffers() {
            out.push((format!("{prefix}.{n}"), b.clone()));
        }
    }
    let mut out = Vec::new();
    push(&mut out, "source", &bundle.source);
    if let Some(t) = &bundle.target {
        push(&mut out, "target", t);
    }
    if let Some(d) = &bundle.discriminator {
        push(&mut out, "discriminator", d);
    }
    if let Some(h) = &bundle.siamese_head {
        push(&mut out, "siamese_head", h);
    }
    out
}

fn assign<P: Parameterized>(prefix: &str, p: &mut P, arrays: &mut BTreeMap<String, Vec<f64>>) -> Result<()> {
    let names: Vec<String> = p.named_params().into_iter().map(|(n, _)| n).collect();
    for (name, param) in names.iter().zip(p.params_mut()) {
        let key = format!("{prefix}.{name}");
        let v = arrays
            .remove(&key)
            .ok_or_else(|| Error::Checkpoint(format!("missing array `{key}`")))?;
        if v.len() != param.value.len() {
            return Err(Error::Checkpoint(format!(
                "array `{key}` has {} values, expected {}",
                v.len(),
                param.value.len()
            )));
        }
        param.value = v;
        param.zero_grad();
    }
    let names: Vec<String> = p.named_buffers().into_iter().map(|(n, _)| n).collect();
    for (name, buf) in names.iter().zip(p.buffers_mut()) {
        let key = format!("{prefix}.{name}");
        let v = arrays
            .remove(&key)
            .ok_or_else(|| Error::Checkpoint(format!("missing array `{key}`")))?;
        if v.len() != buf.len() {
            return Err(Error::Checkpoint(format!("buffer `{key}` has wrong length")));
        }
        *buf = v;
    }
    Ok(())
}

impl Checkpoint {
    pub fn new(config: TrainConfig, bundle: ModelBundle, step: u64, log: &[LossReport]) -> Self {
        let tail = log[log.len().saturating_sub(LOG_TAIL)..].to_vec();
        Checkpoint {
            config,
            bundle,
            step,
            log_tail: tail,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            arch: self.bundle.arch.clone(),
            step: self.step,
            log_tail: self.log_tail.iter().map(LossReport::to_log_line).collect(),
            has_target: self.bundle.target.is_some(),
            has_discriminator: self.bundle.discriminator.is_some(),
            has_siamese_head: self.bundle.siamese_head.is_some(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let arrays = collect_arrays(&self.bundle);
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
        for (name, values) in arrays {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let hlen = r.u64()? as usize;
        let header: Header =
            serde_json::from_slice(r.take(hlen)?).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let count = r.u32()?;
        let mut arrays = BTreeMap::new();
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))?;
            let len = r.u64()? as usize;
            let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Checkpoint("overflow".into()))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            arrays.insert(name, values);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }

        let mut bundle = ModelBundle::new_source(header.arch.clone(), 0)?;
        if header.has_target || header.has_discriminator || header.has_siamese_head {
            bundle.init_adaptation(0);
        }
        assign("source", &mut bundle.source, &mut arrays)?;
        if header.has_target {
            assign("target", bundle.target.as_mut().expect("initialized"), &mut arrays)?;
        } else {
            bundle.target = None;
        }
        if header.has_discriminator {
            assign("discriminator", bundle.discriminator.as_mut().expect("initialized"), &mut arrays)?;
        } else {
            bundle.discriminator = None;
        }
        if header.has_siamese_head {
            assign("siamese_head", bundle.siamese_head.as_mut().expect("initialized"), &mut arrays)?;
        } else {
            bundle.siamese_head = None;
        }
        if let Some(extra) = arrays.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected array `{extra}`")));
        }
        let log_tail = header
            .log_tail
            .iter()
            .enumerate()
            .map(|(i, l)| LossReport::parse_log_line(l, i + 1))
            .collect::<Result<_>>()?;
        Ok(Checkpoint {
            config: header.config,
            bundle,
            step: header.step,
            log_tail,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::data(path, format!("cannot read checkpoint: {e}")))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle() -> (TrainConfig, ModelBundle) {
        let cfg = TrainConfig::desk();
        let mut b = ModelBundle::new_source(cfg.arch.clone(), 11).unwrap();
        b.init_adaptation(12);
        // Make buffers non-trivial.
        for buf in b.target.as_mut().unwrap().buffers_mut() {
            buf.iter_mut().enumerate().for_each(|(i, v)| *v += 0.1 * i as f64 + 1e-17);
        }
        (cfg, b)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (cfg, b) = bundle();
        let log = vec![LossReport {
            step: 3,
            l_c: Some(0.1 + 0.2),
            ..Default::default()
        }];
        let ck = Checkpoint::new(cfg, b, 3, &log);
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn source_only_checkpoint_has_no_stage_two_sets() {
        let cfg = TrainConfig::desk();
        let b = ModelBundle::new_source(cfg.arch.clone(), 1).unwrap();
        let back = Checkpoint::from_bytes(&Checkpoint::new(cfg, b, 0, &[]).to_bytes().unwrap()).unwrap();
        assert!(back.bundle.target.is_none());
        assert!(back.bundle.discriminator.is_none());
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let (cfg, b) = bundle();
        let bytes = Checkpoint::new(cfg, b, 0, &[]).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
