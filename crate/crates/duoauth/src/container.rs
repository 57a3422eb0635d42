//! `BGM1` model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "BGM1"
//! 4       1     format version (1)
//! 5       1     model kind (0 = speaker, 1 = face)
//! 6       4     manifest length M (u32)
//! 10      M     manifest, UTF-8 `key=value` lines
//! ...           tensor records, back to back, until the checksum:
//!                 2    name length N (u16)
//!                 N    name, UTF-8
//!                 1    dtype (0 = f64, 1 = f32)
//!                 1    rank R
//!                 4·R  extents (u32 each)
//!                 ...  values, row-major, 8 or 4 bytes each
//! end-8   8     CRC-64/XZ of every preceding byte (u64)
//! ```
//!
//! Writers always emit f64. Readers widen f32 records to f64, so re-saving an
//! f32 file produces the canonical f64 encoding rather than the original bytes.

use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use duoauth_core::face::FaceNet;
use duoauth_core::model::ParamSet;
use duoauth_core::speaker::{SpeakerNet, SpeakerNetSpec};
use duoauth_core::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BGM1";
pub const VERSION: u8 = 1;
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Speaker = 0,
    Face = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Speaker(SpeakerNet),
    Face(FaceNet),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Speaker(_) => ModelKind::Speaker,
            Model::Face(_) => ModelKind::Face,
        }
    }

    pub fn fingerprint(&self) -> u64 {
        match self {
            Model::Speaker(m) => m.fingerprint(),
            Model::Face(m) => m.fingerprint(),
        }
    }
}

/// Raw container contents before the model is reconstructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: ModelKind,
    pub manifest: String,
    pub params: ParamSet,
}

impl Container {
    pub fn from_model(model: &Model) -> Self {
        match model {
            Model::Speaker(m) => Container { kind: ModelKind::Speaker, manifest: m.manifest(), params: m.params().clone() },
            Model::Face(m) => Container { kind: ModelKind::Face, manifest: m.manifest(), params: m.params().clone() },
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = MAGIC.to_vec();
        out.push(VERSION);
        out.push(self.kind as u8);
        out.extend_from_slice(&len_u32(self.manifest.len(), "manifest")?.to_le_bytes());
        out.extend_from_slice(self.manifest.as_bytes());
        for (name, t) in self.params.iter() {
            let n = u16::try_from(name.len()).map_err(|_| Error::Format(format!("tensor name `{name}` too long")))?;
            out.extend_from_slice(&n.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(0);
            out.push(u8::try_from(t.rank()).map_err(|_| Error::Format(format!("tensor `{name}` rank too high")))?);
            for &d in t.shape() {
                out.extend_from_slice(&len_u32(d, "extent")?.to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = CRC64.checksum(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a BGM1 model container".into()));
        }
        if bytes.len() < 18 {
            return Err(Error::Integrity("container truncated".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if CRC64.checksum(body) != stored {
            return Err(Error::Integrity("container checksum mismatch (corrupt or truncated)".into()));
        }
        if body[4] != VERSION {
            return Err(Error::Version { found: body[4] as u32, expected: VERSION as u32 });
        }
        let kind = match body[5] {
            0 => ModelKind::Speaker,
            1 => ModelKind::Face,
            k => return Err(Error::Format(format!("unknown model kind {k}"))),
        };
        let mut r = Reader { b: body, pos: 6 };
        let m = r.u32()? as usize;
        let manifest = String::from_utf8(r.take(m)?.to_vec()).map_err(|_| Error::Format("manifest is not UTF-8".into()))?;
        let mut params = ParamSet::new();
        while r.pos < body.len() {
            let n = r.u16()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let dtype = r.take(1)?[0];
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let count = count.ok_or_else(|| Error::Format(format!("tensor `{name}` is too large")))?;
            let data: Vec<f64> = match dtype {
                0 => r.take(count.saturating_mul(8))?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
                1 => r.take(count.saturating_mul(4))?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
                d => return Err(Error::Unsupported(format!("tensor dtype {d}"))),
            };
            let t = Tensor::new(&shape, data).map_err(|e| Error::Format(format!("tensor `{name}`: {e}")))?;
            params.push(name, t);
        }
        Ok(Container { kind, manifest, params })
    }

    pub fn into_model(self) -> Result<Model> {
        Ok(match self.kind {
            ModelKind::Speaker => Model::Speaker(SpeakerNet::from_params(SpeakerNetSpec::from_manifest(&self.manifest)?, self.params)?),
            ModelKind::Face => {
                let (spec, labels) = FaceNet::parse_manifest(&self.manifest)?;
                Model::Face(FaceNet::from_params(spec, self.params, labels)?)
            }
        })
    }
}

fn len_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("{what} does not fit in 32 bits")))
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.b.len());
        let end = end.ok_or_else(|| Error::Format(format!("record at byte {} runs past the end", self.pos)))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn encode_model(model: &Model) -> Result<Vec<u8>> {
    Container::from_model(model).encode()
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    Container::decode(bytes)?.into_model()
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    decode_model(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn load_speaker(path: &Path) -> Result<SpeakerNet> {
    match load_model(path)? {
        Model::Speaker(m) => Ok(m),
        Model::Face(_) => Err(Error::Usage(format!("{} holds a face model, expected a speaker model", path.display()))),
    }
}

pub fn load_face(path: &Path) -> Result<FaceNet> {
    match load_model(path)? {
        Model::Face(m) => Ok(m),
        Model::Speaker(_) => Err(Error::Usage(format!("{} holds a speaker model, expected a face model", path.display()))),
    }
}
