//! 16-bit PCM mono WAV read/write (little-endian RIFF).

use super::Waveform;
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let n = w.len() as u32;
    let rate = w.sample_rate_hz();
    let byte_rate = rate * 2;
    let data_len = n * 2;

    let mut buf = Vec::with_capacity(44 + data_len as usize);
    buf.extend_from_slice(b"RIFF");
    buf.extend_from_slice(&(36 + data_len).to_le_bytes());
    buf.extend_from_slice(b"WAVE");
    buf.extend_from_slice(b"fmt ");
    buf.extend_from_slice(&16u32.to_le_bytes());
    buf.extend_from_slice(&1u16.to_le_bytes()); // PCM
    buf.extend_from_slice(&1u16.to_le_bytes()); // mono
    buf.extend_from_slice(&rate.to_le_bytes());
    buf.extend_from_slice(&byte_rate.to_le_bytes());
    buf.extend_from_slice(&2u16.to_le_bytes()); // block align
    buf.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&data_len.to_le_bytes());
    for &s in w.samples() {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        buf.extend_from_slice(&q.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 44 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::format("not a RIFF/WAVE file".to_string()));
    }

    let mut pos = 12;
    let mut rate = 0u32;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = (pos + 8 + size).min(bytes.len());
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::format("truncated fmt chunk".to_string()));
                }
                let audio_format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                if audio_format != 1 || channels != 1 || bits != 16 {
                    return Err(Error::format(format!(
                        "expected 16-bit PCM mono, got format={audio_format} channels={channels} bits={bits}"
                    )));
                }
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos += 8 + size + (size & 1);
    }
    let data = data.ok_or_else(|| Error::format("missing data chunk".to_string()))?;
    if rate == 0 {
        return Err(Error::format("missing fmt chunk".to_string()));
    }
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    Waveform::new(samples, rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_within_quantization() {
        let dir = std::env::temp_dir().join("bmtse_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tone.wav");
        let samples: Vec<f64> = (0..800)
            .map(|n| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 8000.0).sin())
            .collect();
        let w = Waveform::new(samples, 8000).unwrap();
        write_wav(&path, &w).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate_hz(), 8000);
        assert_eq!(back.len(), w.len());
        for (a, b) in w.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn read_rejects_garbage() {
        let dir = std::env::temp_dir().join("bmtse_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("garbage.wav");
        std::fs::write(&path, b"definitely not audio").unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Format(_))));
        std::fs::remove_file(&path).ok();
    }
}
