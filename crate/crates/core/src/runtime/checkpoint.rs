//! Checkpoint files.
//!
//! ```text
//! header  b"ALCK" | u32 version | u32 crc32(body) | u32 reserved | f64 saved_at
//! body    u64 learner_steps | u64 snapshot version | f64 learner walltime
//!         | u64 actor_steps | u64 replay inserts | u64 replay samples
//!         | u32 n_settings | n x (str key, str value)
//!         | u32 n_tensors | n x (str name | u32 rank | rank x u64 dim | f64 data)
//! str     u32 byte length | UTF-8 bytes
//! ```
//!
//! All integers and floats are little-endian. Files are written to a
//! temporary sibling and renamed into place.

use std::io::Write;
use std::path::Path;

use crate::agents::LearnerState;
use crate::error::{Error, Result};
use crate::interfaces::NamedTensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ALCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

/// Learner state plus the run counters needed to resume a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub learner: LearnerState,
    pub actor_steps: u64,
    pub replay_inserts: u64,
    pub replay_samples: u64,
    pub settings: Vec<(String, String)>,
    /// Seconds since the Unix epoch when the file was written.
    pub saved_at: f64,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        let l = &self.learner;
        for v in [l.learner_steps, l.version] {
            body.extend_from_slice(&v.to_le_bytes());
        }
        body.extend_from_slice(&l.walltime_s.to_le_bytes());
        for v in [self.actor_steps, self.replay_inserts, self.replay_samples] {
            body.extend_from_slice(&v.to_le_bytes());
        }
        put_u32(&mut body, self.settings.len());
        for (k, v) in &self.settings {
            put_str(&mut body, k);
            put_str(&mut body, v);
        }
        put_u32(&mut body, l.tensors.len());
        for t in &l.tensors {
            put_str(&mut body, &t.name);
            put_u32(&mut body, t.shape.len());
            for d in &t.shape {
                body.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for x in &t.data {
                body.extend_from_slice(&x.to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(HEADER_LEN + body.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&self.saved_at.to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Corrupt("not a checkpoint file".into()));
        }
        let mut header = Cursor { bytes: &bytes[4..HEADER_LEN], pos: 0 };
        let version = header.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Corrupt(format!("unsupported checkpoint version {version}")));
        }
        let crc = header.u32()?;
        header.u32()?;
        let saved_at = header.f64()?;
        let body = &bytes[HEADER_LEN..];
        if crc32fast::hash(body) != crc {
            return Err(Error::Corrupt("checkpoint checksum mismatch".into()));
        }
        let mut r = Cursor { bytes: body, pos: 0 };
        let learner_steps = r.u64()?;
        let snapshot_version = r.u64()?;
        let walltime_s = r.f64()?;
        let actor_steps = r.u64()?;
        let replay_inserts = r.u64()?;
        let replay_samples = r.u64()?;
        let mut settings = Vec::new();
        for _ in 0..r.u32()? {
            settings.push((r.str()?, r.str()?));
        }
        let mut tensors = Vec::new();
        for _ in 0..r.u32()? {
            let name = r.str()?;
            let rank = r.u32()?;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |acc, d| acc.checked_mul(*d));
            let n = n.filter(|n| *n <= r.remaining() / 8).ok_or_else(|| Error::Corrupt(format!("tensor '{name}' truncated")))?;
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.remaining() != 0 {
            return Err(Error::Corrupt(format!("{} trailing bytes in checkpoint", r.remaining())));
        }
        Ok(Self {
            learner: LearnerState { learner_steps, version: snapshot_version, walltime_s, tensors },
            actor_steps,
            replay_inserts,
            replay_samples,
            settings,
            saved_at,
        })
    }

    /// Writes atomically: a temporary sibling file is synced, then renamed.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.encode())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len());
    buf.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.remaining() < N {
            return Err(Error::Corrupt("checkpoint truncated".into()));
        }
        let out = self.bytes[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        self.take().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.take().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.take().map(f64::from_le_bytes)
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        if self.remaining() < n {
            return Err(Error::Corrupt("checkpoint truncated".into()));
        }
        let s = std::str::from_utf8(&self.bytes[self.pos..self.pos + n]).map_err(|_| Error::Corrupt("invalid UTF-8 in checkpoint".into()))?;
        self.pos += n;
        Ok(s.to_string())
    }
}
