//! Binary checkpoint format for denoiser models.
//!
//! Self-describing and bit-exact:
//!
//! ```text
//! magic    8 bytes  "AGLCKPT1"
//! seed     u64 le
//! echo     u32 le length + utf-8 config echo
//! schedule u32 le step count + f64 le betas
//! arch     u32 le x4: input_dim, embed_dim, time_dim, hidden count
//!          u32 le per hidden width
//! params   u64 le count + f64 le values
//! digest   32 bytes, sha-256 of everything before it
//! ```
//!
//! Truncated or corrupted files fail with a format error carrying the
//! byte offset at which reading stopped.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::diffusion::{DenoiserModel, ModelArch, NoiseSchedule};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"AGLCKPT1";

/// Checkpoint payload besides the model itself.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub config_echo: String,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(self.fail(format!(
                "truncated: wanted {n} bytes, {} remain",
                self.data.len() - self.pos
            )));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.bytes(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Serializes a model checkpoint to bytes.
pub fn checkpoint_bytes(model: &DenoiserModel, seed: u64, config_echo: &str) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u64(seed);
    w.u32(config_echo.len() as u32);
    w.buf.extend_from_slice(config_echo.as_bytes());
    let schedule = model.schedule();
    w.u32(schedule.len() as u32);
    w.f64s(schedule.beta());
    let arch = model.arch();
    w.u32(arch.input_dim as u32);
    w.u32(arch.embed_dim as u32);
    w.u32(arch.time_dim as u32);
    w.u32(arch.hidden.len() as u32);
    for &h in &arch.hidden {
        w.u32(h as u32);
    }
    w.u64(model.params().len() as u64);
    w.f64s(model.params());
    let digest = Sha256::digest(&w.buf);
    w.buf.extend_from_slice(&digest);
    w.buf
}

/// Parses a checkpoint from bytes.
pub fn checkpoint_from_bytes(data: &[u8], path: &Path) -> Result<(DenoiserModel, CheckpointMeta)> {
    let mut r = Reader { data, pos: 0, path };
    if data.len() < MAGIC.len() + 32 {
        return Err(r.fail("file too short for a checkpoint"));
    }
    let body_len = data.len() - 32;
    let stored = &data[body_len..];
    let computed = Sha256::digest(&data[..body_len]);
    if stored != computed.as_slice() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: body_len as u64,
            message: "digest mismatch: checkpoint is corrupt".into(),
        });
    }
    let magic = r.bytes(8)?;
    if magic != MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: "bad magic: not a checkpoint file".into(),
        });
    }
    let seed = r.u64()?;
    let echo_len = r.u32()? as usize;
    let echo_raw = r.bytes(echo_len)?;
    let config_echo = std::str::from_utf8(echo_raw)
        .map_err(|_| r.fail("config echo is not valid utf-8"))?
        .to_string();
    let steps = r.u32()? as usize;
    let beta = r.f64s(steps)?;
    let schedule = NoiseSchedule::from_beta(beta)?;
    let input_dim = r.u32()? as usize;
    let embed_dim = r.u32()? as usize;
    let time_dim = r.u32()? as usize;
    let hidden_count = r.u32()? as usize;
    let mut hidden = Vec::with_capacity(hidden_count);
    for _ in 0..hidden_count {
        hidden.push(r.u32()? as usize);
    }
    let arch = ModelArch {
        input_dim,
        embed_dim,
        time_dim,
        hidden,
    };
    let count = r.u64()? as usize;
    if count != arch.param_count() {
        return Err(r.fail(format!(
            "parameter count {count} does not match the architecture ({})",
            arch.param_count()
        )));
    }
    let params = r.f64s(count)?;
    if r.pos != body_len {
        return Err(r.fail("trailing bytes before digest"));
    }
    let model = DenoiserModel::from_parts(arch, schedule, params)?;
    Ok((model, CheckpointMeta { seed, config_echo }))
}

pub fn save_checkpoint(
    model: &DenoiserModel,
    seed: u64,
    config_echo: &str,
    path: &Path,
) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(model, seed, config_echo))
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(DenoiserModel, CheckpointMeta)> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&data, path)
}

/// Save-then-load; the result is bit-exactly the input model.
pub fn checkpoint_roundtrip(
    model: &DenoiserModel,
    seed: u64,
    config_echo: &str,
    path: &Path,
) -> Result<DenoiserModel> {
    save_checkpoint(model, seed, config_echo, path)?;
    let (loaded, _) = load_checkpoint(path)?;
    Ok(loaded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::make_schedule;

    fn model() -> DenoiserModel {
        let arch = ModelArch {
            input_dim: 2,
            embed_dim: 4,
            time_dim: 4,
            hidden: vec![8],
        };
        DenoiserModel::init(arch, make_schedule(10, 1e-4, 0.02).unwrap(), 33).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model();
        let restored = checkpoint_roundtrip(&m, 42, "steps = 5", &path).unwrap();
        assert_eq!(m, restored);
        let (_, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(meta.seed, 42);
        assert_eq!(meta.config_echo, "steps = 5");
    }

    #[test]
    fn truncated_file_is_a_format_error_without_a_model() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model();
        let bytes = checkpoint_bytes(&m, 1, "");
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Format { .. }) => {}
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_payload_is_detected_by_the_digest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model();
        let mut bytes = checkpoint_bytes(&m, 1, "");
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Format { message, .. }) => assert!(message.contains("digest")),
            other => panic!("expected a format error, got {other:?}"),
        }
    }
}
