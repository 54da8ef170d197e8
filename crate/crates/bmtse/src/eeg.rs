//! EEG batches and their on-disk forms: raw little-endian f32 binaries
//! with a JSON sidecar, and CSV (one row per channel) for small fixtures.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// B x C x T block of EEG, standardized per trial and channel.
#[derive(Clone, Debug, PartialEq)]
pub struct EegBatch {
    data: Vec<f64>,
    batch: usize,
    channels: usize,
    samples: usize,
    sample_rate_hz: u32,
}

impl EegBatch {
    /// Build a batch from raw data, standardizing each (trial, channel)
    /// row to zero mean, unit variance.
    pub fn standardized(
        raw: Vec<f64>,
        batch: usize,
        channels: usize,
        samples: usize,
        sample_rate_hz: u32,
    ) -> Result<Self> {
        if batch == 0 || channels == 0 || samples == 0 {
            return Err(Error::config("empty EEG batch".to_string()));
        }
        if raw.len() != batch * channels * samples {
            return Err(Error::shape(format!(
                "EEG data length {} does not match {batch}x{channels}x{samples}",
                raw.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite EEG sample".to_string()));
        }
        let mut data = raw;
        for row in data.chunks_mut(samples) {
            let mean = row.iter().sum::<f64>() / samples as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / samples as f64;
            let std = var.sqrt().max(1e-12);
            for v in row.iter_mut() {
                *v = (*v - mean) / std;
            }
        }
        Ok(EegBatch {
            data,
            batch,
            channels,
            samples,
            sample_rate_hz,
        })
    }

    /// Assemble a batch from already-standardized trials.
    pub fn from_trials(trials: &[&EegBatch]) -> Result<Self> {
        let first = trials.first().ok_or_else(|| Error::config("empty batch".to_string()))?;
        let mut data = Vec::with_capacity(trials.len() * first.channels * first.samples);
        for t in trials {
            if t.channels != first.channels
                || t.samples != first.samples
                || t.sample_rate_hz != first.sample_rate_hz
            {
                return Err(Error::shape("mixed EEG geometries in one batch".to_string()));
            }
            data.extend_from_slice(&t.data);
        }
        Ok(EegBatch {
            data,
            batch: trials.len(),
            channels: first.channels,
            samples: first.samples,
            sample_rate_hz: first.sample_rate_hz,
        })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn batch(&self) -> usize {
        self.batch
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn samples(&self) -> usize {
        self.samples
    }
    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn channel(&self, trial: usize, ch: usize) -> &[f64] {
        let base = (trial * self.channels + ch) * self.samples;
        &self.data[base..base + self.samples]
    }

    /// Standardization residual: max |row mean| and max |row std - 1|.
    pub fn standardization_error(&self) -> (f64, f64) {
        let mut worst_mean = 0.0f64;
        let mut worst_std = 0.0f64;
        for row in self.data.chunks(self.samples) {
            let mean = row.iter().sum::<f64>() / self.samples as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.samples as f64;
            worst_mean = worst_mean.max(mean.abs());
            worst_std = worst_std.max((var.sqrt() - 1.0).abs());
        }
        (worst_mean, worst_std)
    }
}

#[derive(Serialize, Deserialize)]
struct EegSidecar {
    channels: usize,
    samples: usize,
    rate_hz: u32,
}

/// Write a single trial (C, T) as little-endian f32 plus a JSON sidecar.
pub fn write_eeg_bin(path: &Path, trial: &EegBatch) -> Result<()> {
    if trial.batch != 1 {
        return Err(Error::shape("EEG binary files hold a single trial".to_string()));
    }
    let mut buf = Vec::with_capacity(trial.data.len() * 4);
    for &v in &trial.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    let sidecar = EegSidecar {
        channels: trial.channels,
        samples: trial.samples,
        rate_hz: trial.sample_rate_hz,
    };
    std::fs::write(
        path.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

/// Read a single trial written by [`write_eeg_bin`].
pub fn read_eeg_bin(path: &Path) -> Result<EegBatch> {
    let sidecar: EegSidecar =
        serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let expect = sidecar.channels * sidecar.samples * 4;
    if bytes.len() != expect {
        return Err(Error::format(format!(
            "EEG binary is {} bytes, sidecar expects {expect}",
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    EegBatch::standardized(data, 1, sidecar.channels, sidecar.samples, sidecar.rate_hz)
}

/// CSV fixture format: one row per channel.
pub fn write_eeg_csv(path: &Path, trial: &EegBatch) -> Result<()> {
    if trial.batch != 1 {
        return Err(Error::shape("EEG CSV files hold a single trial".to_string()));
    }
    let mut out = String::new();
    for ch in 0..trial.channels {
        let row: Vec<String> = trial.channel(0, ch).iter().map(|v| format!("{v:.9}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_eeg_csv(path: &Path, sample_rate_hz: u32) -> Result<EegBatch> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::format(format!("bad CSV value: {e}")))?);
    }
    let channels = rows.len();
    let samples = rows.first().map(|r| r.len()).unwrap_or(0);
    if channels == 0 || samples == 0 {
        return Err(Error::format("empty EEG CSV".to_string()));
    }
    if rows.iter().any(|r| r.len() != samples) {
        return Err(Error::format("ragged EEG CSV rows".to_string()));
    }
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    EegBatch::standardized(data, 1, channels, samples, sample_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_trial() -> EegBatch {
        let raw: Vec<f64> = (0..4 * 32).map(|i| (i as f64 * 0.37).sin() * 3.0 + 1.5).collect();
        EegBatch::standardized(raw, 1, 4, 32, 128).unwrap()
    }

    #[test]
    fn standardization_meets_the_invariant() {
        let t = toy_trial();
        let (mean_err, std_err) = t.standardization_error();
        assert!(mean_err < 1e-5, "mean error {mean_err}");
        assert!(std_err < 1e-3, "std error {std_err}");
    }

    #[test]
    fn binary_round_trip_preserves_geometry() {
        let dir = std::env::temp_dir().join("bmtse_eeg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trial.eeg");
        let t = toy_trial();
        write_eeg_bin(&path, &t).unwrap();
        let back = read_eeg_bin(&path).unwrap();
        assert_eq!(back.channels(), 4);
        assert_eq!(back.samples(), 32);
        assert_eq!(back.sample_rate_hz(), 128);
        // f32 storage: values agree to f32 precision after restandardizing
        for (a, b) in t.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-5);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join("bmtse_eeg_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trial.csv");
        let t = toy_trial();
        write_eeg_csv(&path, &t).unwrap();
        let back = read_eeg_csv(&path, 128).unwrap();
        assert_eq!(back.channels(), t.channels());
        for (a, b) in t.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(EegBatch::standardized(vec![0.0; 10], 1, 4, 32, 128).is_err());
        assert!(EegBatch::standardized(vec![f64::NAN; 8], 1, 2, 4, 128).is_err());
    }
}
