//! Mel-spectrogram export: CSV (one row per frame) and 8-bit PGM with a
//! JSON sidecar recording the affine mapping.

use super::MelSpectrogram;
use crate::error::Result;
use std::io::Write;
use std::path::Path;

pub fn write_mel_csv(path: &Path, mel: &MelSpectrogram) -> Result<()> {
    let mut out = String::new();
    for row in mel.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.9}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Grayscale P5 image; rows = mel bands (low band at the bottom),
/// columns = frames. Log energies map affinely onto 0..=255 and the
/// min/max of that mapping land in `<path>.json`.
pub fn write_mel_pgm(path: &Path, mel: &MelSpectrogram) -> Result<()> {
    let (lo, hi) = mel.min_max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (w, h) = (mel.frames(), mel.n_mels());
    let mut buf = Vec::with_capacity(64 + w * h);
    buf.extend_from_slice(format!("P5\n{w} {h}\n255\n").as_bytes());
    for band_row in 0..h {
        let band = h - 1 - band_row;
        for frame in 0..w {
            let v = (mel.at(frame, band) - lo) / span;
            buf.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;

    let sidecar = serde_json::json!({
        "min_log_energy": lo,
        "max_log_energy": hi,
        "frames": w,
        "bands": h,
        "mel_lo_hz": mel.mel_lo_hz,
        "mel_hi_hz": mel.mel_hi_hz,
    });
    let json_path = path.with_extension("pgm.json");
    std::fs::write(json_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{mel_spectrogram, Waveform};

    #[test]
    fn silence_exports_uniform_pgm() {
        let dir = std::env::temp_dir().join("bmtse_export_test");
        std::fs::create_dir_all(&dir).unwrap();
        let w = Waveform::new(vec![0.0; 8000], 8000).unwrap();
        let mel = mel_spectrogram(&w, 256, 128, 40).unwrap();
        let path = dir.join("silence.pgm");
        write_mel_pgm(&path, &mel).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_end = bytes
            .windows(4)
            .position(|w| w == b"255\n")
            .map(|p| p + 4)
            .unwrap();
        let pixels = &bytes[header_end..];
        assert!(pixels.iter().all(|&p| p == pixels[0]), "non-uniform pixels");
        assert!(path.with_extension("pgm.json").exists());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn csv_has_one_row_per_frame() {
        let dir = std::env::temp_dir().join("bmtse_export_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let w = Waveform::new(vec![0.1; 2048], 8000).unwrap();
        let mel = mel_spectrogram(&w, 256, 128, 8).unwrap();
        let path = dir.join("mel.csv");
        write_mel_csv(&path, &mel).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), mel.frames());
        assert_eq!(text.lines().next().unwrap().split(',').count(), 8);
        std::fs::remove_dir_all(&dir).ok();
    }
}
