//! U2CK checkpoint container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "U2CK"
//! 4       4     version (u32 LE, 1)
//! 8       1     scalar type (0 = f32, 1 = f64)
//! 9       4     header length L (u32 LE)
//! 13      L     UTF-8 JSON header {"model": <config>, "meta": <any>}
//! ...     1     PRNG flag; when 1: 32-byte seed, u64 stream, u128 word position
//! ...     4     tensor count (u32 LE)
//! ...           per tensor: u16 name length, name, u8 rank, rank × u32 dims,
//!               product(dims) little-endian scalars
//! ```
//!
//! All integers are little-endian. The last tensor must end at end of file.

use std::collections::HashMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{layout, ModelConfig, ModelError, ParamStore};
use crate::data::fcube::write_atomic;
use crate::tensor::{DType, Real};

pub const MAGIC: &[u8; 4] = b"U2CK";
pub const VERSION: u32 = 1;

/// Exact position of a ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: ModelConfig,
    /// Caller-defined state, e.g. training progress.
    pub meta: serde_json::Value,
    pub rng: Option<RngState>,
    pub tensors: Vec<NamedTensor<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    meta: serde_json::Value,
}

fn dtype_code(d: DType) -> u8 {
    match d {
        DType::F32 => 0,
        DType::F64 => 1,
    }
}

impl<T: Real> Checkpoint<T> {
    /// Parameters under their layout names, followed by `extra` tensors.
    pub fn new(
        model: ModelConfig,
        params: &ParamStore<T>,
        extra: Vec<NamedTensor<T>>,
        meta: serde_json::Value,
        rng: Option<RngState>,
    ) -> Self {
        let mut tensors: Vec<NamedTensor<T>> = params
            .tensors()
            .iter()
            .map(|t| NamedTensor {
                name: t.spec.name.clone(),
                shape: t.spec.shape.clone(),
                data: t.data.clone(),
            })
            .collect();
        tensors.extend(extra);
        Checkpoint {
            model,
            meta,
            rng,
            tensors,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Reassembles the parameter store, ignoring non-parameter tensors.
    pub fn params(&self) -> Result<ParamStore<T>, ModelError> {
        let names: std::collections::HashSet<String> =
            layout(&self.model).into_iter().map(|s| s.name).collect();
        let named: HashMap<String, (Vec<usize>, Vec<T>)> = self
            .tensors
            .iter()
            .filter(|t| names.contains(&t.name))
            .map(|t| (t.name.clone(), (t.shape.clone(), t.data.clone())))
            .collect();
        ParamStore::from_named(&self.model, named)
    }

    pub fn encode(&self) -> Result<Vec<u8>, ModelError> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(dtype_code(T::DTYPE));
        let header = serde_json::to_vec(&Header {
            model: self.model.clone(),
            meta: self.meta.clone(),
        })
        .map_err(|e| ModelError::Config(format!("checkpoint header: {e}")))?;
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        match &self.rng {
            None => out.push(0),
            Some(r) => {
                out.push(1);
                out.extend_from_slice(&r.seed);
                out.extend_from_slice(&r.stream.to_le_bytes());
                out.extend_from_slice(&r.word_pos.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            let name_len = u16::try_from(t.name.len())
                .map_err(|_| ModelError::Config(format!("tensor name too long: {}", t.name)))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.data {
                v.to_le_bytes_into(&mut out);
            }
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(r.err(0, "bad magic"));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(r.err(4, format!("unsupported version {version}")));
        }
        let code = r.take(1, "scalar type")?[0];
        if code != dtype_code(T::DTYPE) {
            return Err(r.err(
                8,
                format!("scalar type {code} does not match the requested precision"),
            ));
        }
        let len = r.u32("header length")? as usize;
        let at = r.pos;
        let header: Header = serde_json::from_slice(r.take(len, "header")?)
            .map_err(|e| r.err(at, format!("header: {e}")))?;
        header
            .model
            .validate()
            .map_err(|e| r.err(at, e.to_string()))?;
        let rng = match r.take(1, "rng flag")?[0] {
            0 => None,
            1 => {
                let seed: [u8; 32] = r.take(32, "rng seed")?.try_into().expect("32 bytes");
                let stream =
                    u64::from_le_bytes(r.take(8, "rng stream")?.try_into().expect("8 bytes"));
                let word_pos =
                    u128::from_le_bytes(r.take(16, "rng position")?.try_into().expect("16 bytes"));
                Some(RngState {
                    seed,
                    stream,
                    word_pos,
                })
            }
            f => return Err(r.err(r.pos - 1, format!("bad rng flag {f}"))),
        };
        let count = r.u32("tensor count")? as usize;
        let size = T::DTYPE.size_of();
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len =
                u16::from_le_bytes(r.take(2, "name length")?.try_into().expect("2 bytes")) as usize;
            let at = r.pos;
            let name = String::from_utf8(r.take(name_len, "name")?.to_vec())
                .map_err(|_| r.err(at, "name is not UTF-8"))?;
            let rank = r.take(1, "rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("dimension")? as usize);
            }
            let n: usize = shape.iter().product();
            let bytes = r.take(n * size, "tensor data")?;
            let data = bytes.chunks_exact(size).map(T::from_le_slice).collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != buf.len() {
            return Err(r.err(r.pos, format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Checkpoint {
            model: header.model,
            meta: header.meta,
            rng,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        write_atomic(path.as_ref(), &self.encode()?).map_err(|e| match e {
            crate::data::DataError::Io(io) => ModelError::Io(io),
            other => ModelError::Data(other),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::decode(&std::fs::read(path)?)
    }
}

/// Scalar type stored in a checkpoint file.
pub fn peek_dtype(path: impl AsRef<Path>) -> Result<DType, ModelError> {
    let buf = std::fs::read(path)?;
    if buf.len() < 9 || &buf[..4] != MAGIC {
        return Err(ModelError::Format {
            offset: 0,
            detail: "not a U2CK checkpoint".into(),
        });
    }
    match buf[8] {
        0 => Ok(DType::F32),
        1 => Ok(DType::F64),
        c => Err(ModelError::Format {
            offset: 8,
            detail: format!("unknown scalar type {c}"),
        }),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ModelError> {
        if self.buf.len() - self.pos < n {
            return Err(ModelError::Format {
                offset: self.buf.len() as u64,
                detail: format!("truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn err(&self, offset: usize, detail: impl Into<String>) -> ModelError {
        ModelError::Format {
            offset: offset as u64,
            detail: detail.into(),
        }
    }
}
