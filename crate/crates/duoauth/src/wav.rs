//! RIFF/WAVE PCM16 mono reader and writer.

use duoauth_core::audio::AudioClip;

use crate::error::{Error, Result};

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

struct Format {
    sample_rate: u32,
}

fn parse_fmt(body: &[u8]) -> Result<Format> {
    if body.len() < 16 {
        return Err(Error::Format(format!("fmt chunk is {} bytes, need 16", body.len())));
    }
    let (tag, channels, rate, bits) = (u16_at(body, 0), u16_at(body, 2), u32_at(body, 4), u16_at(body, 14));
    if tag != 1 {
        return Err(Error::Unsupported(format!("WAVE format tag {tag:#06x}; only PCM (1) is accepted")));
    }
    if channels != 1 {
        return Err(Error::Unsupported(format!("{channels} channels; only mono is accepted")));
    }
    if bits != 16 {
        return Err(Error::Unsupported(format!("{bits}-bit samples; only 16-bit is accepted")));
    }
    if rate == 0 {
        return Err(Error::Format("sample rate is zero".into()));
    }
    Ok(Format { sample_rate: rate })
}

/// Decodes a PCM16 mono WAVE file. Samples are scaled by 1/32768.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("not a RIFF/WAVE file".into()));
    }
    let mut format = None;
    let mut pos = 12;
    while pos < bytes.len() {
        if bytes.len() - pos < 8 {
            return Err(Error::Format(format!("truncated chunk header at byte {pos}")));
        }
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body = bytes
            .get(body_start..body_start.saturating_add(size))
            .ok_or_else(|| Error::Format(format!("chunk {:?} runs past the end of the file", String::from_utf8_lossy(id))))?;
        match id {
            b"fmt " => format = Some(parse_fmt(body)?),
            b"data" => {
                let fmt = format.ok_or_else(|| Error::Format("data chunk before fmt chunk".into()))?;
                if size % 2 != 0 {
                    return Err(Error::Format(format!("data chunk of {size} bytes is not whole samples")));
                }
                let samples = body.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0).collect();
                return Ok(AudioClip::new(samples, fmt.sample_rate)?);
            }
            _ => {}
        }
        pos = body_start + size + (size & 1);
    }
    Err(Error::Format("no data chunk".into()))
}

/// Encodes `clip` as PCM16 mono, rounding and saturating at full scale.
pub fn write_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.len() as u32 * 2;
    let rate = clip.sample_rate();
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in clip.samples() {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declared_data_size_sets_sample_count() {
        let clip = AudioClip::new(vec![0.0; 16_000], 16_000).unwrap();
        let bytes = write_wav(&clip);
        assert_eq!(u32_at(&bytes, 40), 32_000);
        let back = parse_wav(&bytes).unwrap();
        assert_eq!((back.len(), back.sample_rate()), (16_000, 16_000));
    }

    #[test]
    fn most_negative_sample_is_minus_one() {
        let clip = AudioClip::new(vec![-1.0, 0.5], 8000).unwrap();
        let back = parse_wav(&write_wav(&clip)).unwrap();
        assert_eq!(back.samples(), &[-1.0, 0.5]);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = write_wav(&AudioClip::new(vec![0.0; 4], 8000).unwrap());
        bytes[0] = b'X';
        assert!(matches!(parse_wav(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn stereo_is_unsupported() {
        let mut bytes = write_wav(&AudioClip::new(vec![0.0; 4], 8000).unwrap());
        bytes[22] = 2;
        assert!(matches!(parse_wav(&bytes), Err(Error::Unsupported(_))));
    }

    #[test]
    fn truncated_data_is_malformed() {
        let bytes = write_wav(&AudioClip::new(vec![0.0; 4], 8000).unwrap());
        assert!(matches!(parse_wav(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let bytes = write_wav(&AudioClip::new(vec![0.25; 3], 8000).unwrap());
        let mut with_list = bytes[..36].to_vec();
        with_list.extend_from_slice(b"LIST\x03\x00\x00\x00abc\x00");
        with_list.extend_from_slice(&bytes[36..]);
        assert_eq!(parse_wav(&with_list).unwrap().samples(), &[0.25; 3]);
    }
}
