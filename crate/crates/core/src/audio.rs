//! 16-bit mono PCM WAV reading and writing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::UnsupportedFormat("sample rate 0".into()));
        }
        if let Some(s) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::UnsupportedFormat(format!("sample {s} outside [-1, 1]")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Parses a RIFF/WAVE byte buffer holding 16-bit mono PCM.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioSignal> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        let n = bytes.len().min(4);
        return Err(Error::BadMagic {
            expected: "RIFF/WAVE".into(),
            found: String::from_utf8_lossy(&bytes[..n]).into_owned(),
        });
    }
    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::UnsupportedFormat(format!(
                    "chunk {:?} overruns the file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::UnsupportedFormat("short fmt chunk".into()));
                }
                format = Some((
                    u16_at(body, 0),
                    u16_at(body, 2),
                    u32_at(body, 4),
                    u16_at(body, 14),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are padded to even length
        pos = body_end + (size & 1);
    }
    let (tag, channels, sample_rate, bits) =
        format.ok_or_else(|| Error::UnsupportedFormat("missing fmt chunk".into()))?;
    if tag != 1 {
        return Err(Error::UnsupportedFormat(format!("format tag {tag} is not PCM")));
    }
    if channels != 1 {
        return Err(Error::UnsupportedFormat(format!("{channels} channels, expected mono")));
    }
    if bits != 16 {
        return Err(Error::UnsupportedFormat(format!("{bits}-bit samples, expected 16")));
    }
    let data = data.ok_or_else(|| Error::UnsupportedFormat("missing data chunk".into()))?;
    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
        .collect();
    AudioSignal::new(samples, sample_rate)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    parse_wav(&fs::read(path)?)
}

/// Encodes a signal as 16-bit mono PCM, clamping to the i16 range.
pub fn encode_wav(signal: &AudioSignal) -> Vec<u8> {
    let data_len = signal.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&signal.sample_rate.to_le_bytes());
    out.extend_from_slice(&(signal.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &signal.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_wav(signal: &AudioSignal, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_wav(signal))?;
    Ok(())
}
