//! Enrollment store file.
//!
//! A UTF-8 header, then the voice templates as raw little-endian f64 values
//! (one block of `dim` values per user, in header order), then a CRC-64/XZ of
//! every preceding byte as a little-endian u64:
//!
//! ```text
//! duoauth-store 1
//! face_fingerprint 0123456789abcdef      (or `none`)
//! voice_fingerprint fedcba9876543210     (or `none`)
//! dim 64
//! users 2
//! user alice 0 1700000000 3 2            (id, face class, enrolled_at, #faces, #clips)
//! user bob 1 1700000100 1 1
//! end
//! <2 × 64 × 8 bytes of templates><8-byte checksum>
//! ```

use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use duoauth_core::auth::{EnrollmentRecord, EnrollmentStore};
use duoauth_core::speaker::Embedding;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "duoauth-store";
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

fn fp(v: Option<u64>) -> String {
    v.map_or_else(|| "none".to_string(), |f| format!("{f:016x}"))
}

pub fn encode_store(store: &EnrollmentStore) -> Vec<u8> {
    let records = store.records();
    let dim = records.first().map_or(0, |r| r.voice_template.dim());
    let mut header = format!(
        "{MAGIC} {FORMAT_VERSION}\nface_fingerprint {}\nvoice_fingerprint {}\ndim {dim}\nusers {}\n",
        fp(store.face_fingerprint()),
        fp(store.voice_fingerprint()),
        records.len()
    );
    for r in records {
        header.push_str(&format!(
            "user {} {} {} {} {}\n",
            r.user_id, r.face_class, r.enrolled_at, r.sample_counts.0, r.sample_counts.1
        ));
    }
    header.push_str("end\n");
    let mut out = header.into_bytes();
    for r in records {
        for v in r.voice_template.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = CRC64.checksum(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn parse<T: std::str::FromStr>(s: Option<&str>, what: &str) -> Result<T> {
    s.and_then(|v| v.parse().ok()).ok_or_else(|| bad(format!("store header: bad {what}")))
}

fn parse_fp(s: Option<&str>) -> Result<Option<u64>> {
    match s {
        Some("none") => Ok(None),
        Some(h) => u64::from_str_radix(h, 16).map(Some).map_err(|_| bad("store header: bad fingerprint")),
        None => Err(bad("store header: missing fingerprint")),
    }
}

pub fn decode_store(bytes: &[u8]) -> Result<EnrollmentStore> {
    let first_line = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    let first = std::str::from_utf8(first_line).map_err(|_| bad("not a duoauth store"))?;
    let version = match first.split_once(' ') {
        Some((MAGIC, v)) => v.parse::<u32>().map_err(|_| bad("store header: bad version"))?,
        _ => return Err(bad("not a duoauth store")),
    };
    if version != FORMAT_VERSION {
        return Err(Error::Version { found: version, expected: FORMAT_VERSION });
    }
    if bytes.len() < 8 {
        return Err(Error::Integrity("store truncated".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if CRC64.checksum(body) != u64::from_le_bytes(tail.try_into().expect("8 bytes")) {
        return Err(Error::Integrity("store checksum mismatch (corrupt or truncated)".into()));
    }
    let header_end = body.windows(5).position(|w| w == b"\nend\n").ok_or_else(|| bad("store header has no `end`"))? + 5;
    let header = std::str::from_utf8(&body[..header_end]).map_err(|_| bad("store header is not UTF-8"))?;
    let mut lines = header.lines().skip(1);
    let mut field = |key: &str| -> Result<Vec<String>> {
        let line = lines.next().ok_or_else(|| bad(format!("store header: missing `{key}`")))?;
        let mut parts = line.split(' ');
        if parts.next() != Some(key) {
            return Err(bad(format!("store header: expected `{key}`, got {line:?}")));
        }
        Ok(parts.map(str::to_string).collect())
    };
    let face_fp = parse_fp(field("face_fingerprint")?.first().map(String::as_str))?;
    let voice_fp = parse_fp(field("voice_fingerprint")?.first().map(String::as_str))?;
    let dim: usize = parse(field("dim")?.first().map(String::as_str), "dim")?;
    let n: usize = parse(field("users")?.first().map(String::as_str), "user count")?;
    let blob = &body[header_end..];
    if n.checked_mul(dim).and_then(|v| v.checked_mul(8)) != Some(blob.len()) {
        return Err(bad(format!("{} template bytes for {n} users of dimension {dim}", blob.len())));
    }
    let mut records = Vec::with_capacity(n);
    for (i, chunk) in blob.chunks_exact(dim.max(1) * 8).take(n).enumerate() {
        let f = field("user")?;
        let get = |k: usize| f.get(k).map(String::as_str);
        if f.len() != 5 {
            return Err(bad(format!("store header: user line {i} has {} fields", f.len())));
        }
        let values = chunk.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        records.push(EnrollmentRecord {
            user_id: f[0].clone(),
            face_class: parse(get(1), "face class")?,
            enrolled_at: parse(get(2), "timestamp")?,
            sample_counts: (parse(get(3), "face count")?, parse(get(4), "clip count")?),
            voice_template: Embedding::from_unit(values)?,
        });
    }
    if records.len() != n || field("end").is_err() {
        return Err(bad("store header: user table does not match the user count"));
    }
    Ok(EnrollmentStore::from_parts(face_fp, voice_fp, records)?)
}

pub fn save_store(store: &EnrollmentStore, path: &Path) -> Result<()> {
    std::fs::write(path, encode_store(store)).map_err(|e| Error::io(path, e))
}

pub fn load_store(path: &Path) -> Result<EnrollmentStore> {
    decode_store(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// The store at `path`, or an empty one if the file does not exist.
pub fn load_or_new(path: &Path) -> Result<EnrollmentStore> {
    if path.exists() {
        load_store(path)
    } else {
        Ok(EnrollmentStore::new())
    }
}
