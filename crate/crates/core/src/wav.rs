//! Minimal RIFF/WAVE PCM support: mono 16- or 24-bit readers at the capture
//! rate, and a 16-bit writer for the synthetic corpus.
//!
//! Samples map to [-1, 1] by dividing by 2^15 (16-bit) or 2^23 (24-bit).
//! The writer rounds `x * 32768` into i16 with clamping, so any signal read
//! back from a written file round-trips exactly at 16-bit resolution.

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::dsp::{AudioSignal, DspError, RAW_RATE};

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error("not a RIFF file")]
    NotRiff,
    #[error("RIFF form type is not WAVE")]
    NotWave,
    #[error("missing {0} chunk")]
    MissingChunk(&'static str),
    #[error("unsupported WAV encoding tag {0} (PCM required)")]
    NotPcm(u16),
    #[error("{0} channels unsupported (mono required)")]
    NotMono(u16),
    #[error("unsupported bit depth {0} (16 or 24 required)")]
    UnsupportedDepth(u16),
    #[error("expected sample rate {expected} Hz, got {got} Hz")]
    WrongRate { expected: u32, got: u32 },
    #[error("truncated WAV data: {0}")]
    TruncatedData(&'static str),
    #[error(transparent)]
    Signal(#[from] DspError),
    #[error("WAV I/O: {0}")]
    Io(#[from] std::io::Error),
}

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Walks the chunk list and returns (fmt, data) chunk payloads.
fn find_chunks(bytes: &[u8]) -> Result<(&[u8], &[u8]), WavError> {
    if bytes.len() < 12 {
        return Err(WavError::NotRiff);
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(WavError::NotRiff);
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(WavError::NotWave);
    }
    let mut fmt: Option<&[u8]> = None;
    let mut data: Option<&[u8]> = None;
    let mut off = 12;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = u32_at(bytes, off + 4) as usize;
        let body_start = off + 8;
        if body_start + size > bytes.len() {
            return Err(WavError::TruncatedData("chunk overruns file"));
        }
        let body = &bytes[body_start..body_start + size];
        match id {
            b"fmt " => fmt = Some(body),
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word-aligned; odd sizes carry a pad byte
        off = body_start + size + (size & 1);
    }
    let fmt = fmt.ok_or(WavError::MissingChunk("fmt "))?;
    let data = data.ok_or(WavError::MissingChunk("data"))?;
    Ok((fmt, data))
}

/// Loads a mono PCM WAV at the 20 kHz capture rate, scaling 16-bit samples
/// by 2^-15 and 24-bit samples by 2^-23.
pub fn load_wav(path: &Path) -> Result<AudioSignal, WavError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    wav_from_bytes(&bytes)
}

/// [`load_wav`] over an in-memory buffer.
pub fn wav_from_bytes(bytes: &[u8]) -> Result<AudioSignal, WavError> {
    let (fmt, data) = find_chunks(bytes)?;
    if fmt.len() < 16 {
        return Err(WavError::TruncatedData("fmt chunk too short"));
    }
    let format_tag = u16_at(fmt, 0);
    if format_tag != 1 {
        return Err(WavError::NotPcm(format_tag));
    }
    let channels = u16_at(fmt, 2);
    if channels != 1 {
        return Err(WavError::NotMono(channels));
    }
    let rate = u32_at(fmt, 4);
    if rate != RAW_RATE {
        return Err(WavError::WrongRate {
            expected: RAW_RATE,
            got: rate,
        });
    }
    let depth = u16_at(fmt, 14);
    let samples = match depth {
        16 => {
            if data.len() % 2 != 0 {
                return Err(WavError::TruncatedData("16-bit data length odd"));
            }
            data.chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                .collect()
        }
        24 => {
            if data.len() % 3 != 0 {
                return Err(WavError::TruncatedData("24-bit data length not a multiple of 3"));
            }
            data.chunks_exact(3)
                .map(|c| {
                    // sign-extend the 24-bit little-endian sample
                    let v = ((c[2] as i32) << 16 | (c[1] as i32) << 8 | c[0] as i32) << 8 >> 8;
                    v as f64 / 8_388_608.0
                })
                .collect()
        }
        other => return Err(WavError::UnsupportedDepth(other)),
    };
    Ok(AudioSignal::new(samples, RAW_RATE)?)
}

/// Serializes a signal as mono 16-bit PCM. Samples are rounded half away
/// from zero and clamped to the i16 range.
pub fn wav_to_bytes_16bit(signal: &AudioSignal) -> Vec<u8> {
    let n = signal.len();
    let data_len = n * 2;
    let mut buf = Vec::with_capacity(44 + data_len);
    let rate = signal.rate();
    buf.extend_from_slice(b"RIFF");
    buf.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    buf.extend_from_slice(b"WAVE");
    buf.extend_from_slice(b"fmt ");
    buf.extend_from_slice(&16u32.to_le_bytes());
    buf.extend_from_slice(&1u16.to_le_bytes()); // PCM
    buf.extend_from_slice(&1u16.to_le_bytes()); // mono
    buf.extend_from_slice(&rate.to_le_bytes());
    buf.extend_from_slice(&(rate * 2).to_le_bytes()); // byte rate
    buf.extend_from_slice(&2u16.to_le_bytes()); // block align
    buf.extend_from_slice(&16u16.to_le_bytes());
    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in signal.samples() {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

/// Writes a mono 16-bit PCM WAV file.
pub fn write_wav_16bit(path: &Path, signal: &AudioSignal) -> Result<(), WavError> {
    fs::write(path, wav_to_bytes_16bit(signal))?;
    Ok(())
}
