//! Evaluation metrics: SI-SDR, SI-SDR improvement, STOI, and ESTOI.
//!
//! STOI/ESTOI use the canonical published constants: 10 kHz analysis
//! rate, 256-sample frames with 50 % overlap and a 512-point FFT, 15
//! one-third-octave bands starting at 150 Hz, 384 ms (30-frame)
//! segments, and a -15 dB clipping bound for STOI. Callers hand in
//! waveforms at their native rate; the metrics resample internally.

use crate::dsp::{resample, Waveform};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Epsilon that caps SI-SDR near 80 dB for unit-power signals and keeps
/// the ratio total and differentiable.
pub const SI_SDR_EPS: f64 = 1e-8;

const STOI_RATE_HZ: u32 = 10_000;
const STOI_FRAME: usize = 256;
const STOI_HOP: usize = 128;
const STOI_FFT: usize = 512;
const STOI_BANDS: usize = 15;
const STOI_FIRST_CENTER_HZ: f64 = 150.0;
const STOI_SEG_FRAMES: usize = 30;
const STOI_CLIP_DB: f64 = -15.0;

/// Flat report of the four evaluation metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub si_sdr_db: f64,
    pub si_sdri_db: f64,
    pub stoi: f64,
    pub estoi: f64,
}

fn check_pair(est: &Waveform, reference: &Waveform) -> Result<()> {
    if est.len() != reference.len() {
        return Err(Error::shape(format!(
            "length mismatch: est {} vs ref {}",
            est.len(),
            reference.len()
        )));
    }
    if est.len() < 16 {
        return Err(Error::length(format!(
            "need at least 16 samples, got {}",
            est.len()
        )));
    }
    if reference.samples().iter().all(|&s| s == 0.0) {
        return Err(Error::domain("reference signal is identically zero".to_string()));
    }
    Ok(())
}

/// Scale-invariant signal-to-distortion ratio in dB.
///
/// Projects `est` onto `reference`, `s_t = (<est,ref>/||ref||^2) ref`,
/// and returns `10 log10((||s_t||^2 + eps)/(||est - s_t||^2 + eps))`.
pub fn si_sdr(est: &Waveform, reference: &Waveform) -> Result<f64> {
    check_pair(est, reference)?;
    Ok(si_sdr_samples(est.samples(), reference.samples()))
}

pub(crate) fn si_sdr_samples(est: &[f64], reference: &[f64]) -> f64 {
    let dot: f64 = est.iter().zip(reference).map(|(e, r)| e * r).sum();
    let ref_energy: f64 = reference.iter().map(|r| r * r).sum();
    let scale = dot / ref_energy;
    let mut target_energy = 0.0;
    let mut error_energy = 0.0;
    for (e, r) in est.iter().zip(reference) {
        let t = scale * r;
        target_energy += t * t;
        let d = e - t;
        error_energy += d * d;
    }
    10.0 * ((target_energy + SI_SDR_EPS) / (error_energy + SI_SDR_EPS)).log10()
}

/// SI-SDR improvement over the unprocessed mixture:
/// `si_sdr(est, ref) - si_sdr(mix, ref)`.
pub fn si_sdri(est: &Waveform, reference: &Waveform, mix: &Waveform) -> Result<f64> {
    if mix.len() != reference.len() {
        return Err(Error::shape(format!(
            "length mismatch: mix {} vs ref {}",
            mix.len(),
            reference.len()
        )));
    }
    Ok(si_sdr(est, reference)? - si_sdr(mix, reference)?)
}

/// One-third-octave band energies: rows = bands, columns = frames.
fn third_octave_envelopes(w: &Waveform) -> Result<Vec<Vec<f64>>> {
    let at_10k = resample(w, STOI_RATE_HZ)?;
    if at_10k.len() < STOI_FRAME + (STOI_SEG_FRAMES - 1) * STOI_HOP {
        return Err(Error::length(format!(
            "need at least 384 ms of signal after resampling, got {} samples",
            at_10k.len()
        )));
    }
    // zero-pad each 256-sample frame to the 512-point FFT by analysing a
    // padded copy of the signal per frame
    let frames = 1 + (at_10k.len() - STOI_FRAME) / STOI_HOP;
    let window = crate::dsp::hann_window(STOI_FRAME);
    let bin_hz = STOI_RATE_HZ as f64 / STOI_FFT as f64;
    let bands = band_bins(bin_hz);

    let mut env = vec![vec![0.0; frames]; STOI_BANDS];
    let mut re = vec![0.0; STOI_FFT];
    let mut im = vec![0.0; STOI_FFT];
    for f in 0..frames {
        let start = f * STOI_HOP;
        for n in 0..STOI_FFT {
            re[n] = if n < STOI_FRAME {
                at_10k.samples()[start + n] * window[n]
            } else {
                0.0
            };
            im[n] = 0.0;
        }
        crate::dsp::fft_in_place(&mut re, &mut im, false);
        for (b, bins) in bands.iter().enumerate() {
            let mut acc = 0.0;
            for &k in bins {
                acc += re[k] * re[k] + im[k] * im[k];
            }
            env[b][f] = acc.sqrt();
        }
    }
    Ok(env)
}

fn band_bins(bin_hz: f64) -> Vec<Vec<usize>> {
    (0..STOI_BANDS)
        .map(|b| {
            let center = STOI_FIRST_CENTER_HZ * 2f64.powf(b as f64 / 3.0);
            let lo = center * 2f64.powf(-1.0 / 6.0);
            let hi = center * 2f64.powf(1.0 / 6.0);
            (0..STOI_FFT / 2 + 1)
                .filter(|&k| {
                    let f = k as f64 * bin_hz;
                    f >= lo && f < hi
                })
                .collect()
        })
        .collect()
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in x.iter().zip(y) {
        num += (a - mx) * (b - my);
        dx += (a - mx) * (a - mx);
        dy += (b - my) * (b - my);
    }
    let den = (dx * dy).sqrt();
    if den < 1e-14 {
        0.0
    } else {
        num / den
    }
}

/// Short-time objective intelligibility of `est` against clean `reference`.
pub fn stoi(est: &Waveform, reference: &Waveform) -> Result<f64> {
    check_pair(est, reference)?;
    let clean = third_octave_envelopes(reference)?;
    let degraded = third_octave_envelopes(est)?;
    let frames = clean[0].len();
    let clip = 10f64.powf(-STOI_CLIP_DB / 20.0); // 1 + 10^(-beta/20) applied below

    let mut total = 0.0;
    let mut count = 0usize;
    for seg_end in STOI_SEG_FRAMES..=frames {
        let lo = seg_end - STOI_SEG_FRAMES;
        for b in 0..STOI_BANDS {
            let x = &clean[b][lo..seg_end];
            let y = &degraded[b][lo..seg_end];
            let xe: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ye: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let alpha = if ye < 1e-14 { 0.0 } else { xe / ye };
            // normalize the degraded envelope to the clean energy, then
            // clip at -15 dB SDR relative to clean
            let clipped: Vec<f64> = x
                .iter()
                .zip(y)
                .map(|(&xv, &yv)| (alpha * yv).min(xv * (1.0 + 1.0 / clip)))
                .collect();
            total += correlation(x, &clipped);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Extended STOI: row- and column-normalized envelope correlation,
/// without clipping.
pub fn estoi(est: &Waveform, reference: &Waveform) -> Result<f64> {
    check_pair(est, reference)?;
    let clean = third_octave_envelopes(reference)?;
    let degraded = third_octave_envelopes(est)?;
    let frames = clean[0].len();

    let mut total = 0.0;
    let mut segments = 0usize;
    for seg_end in STOI_SEG_FRAMES..=frames {
        let lo = seg_end - STOI_SEG_FRAMES;
        let x = normalize_rows_then_cols(&clean, lo);
        let y = normalize_rows_then_cols(&degraded, lo);
        let mut seg = 0.0;
        for n in 0..STOI_SEG_FRAMES {
            let mut dot = 0.0;
            for b in 0..STOI_BANDS {
                dot += x[b][n] * y[b][n];
            }
            seg += dot;
        }
        total += seg / STOI_SEG_FRAMES as f64;
        segments += 1;
    }
    Ok(total / segments as f64)
}

/// Mean/variance-normalize each band row over the segment, then each
/// time column; zero-variance rows or columns stay zero so their
/// contribution is 0.
fn normalize_rows_then_cols(env: &[Vec<f64>], lo: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; STOI_SEG_FRAMES]; STOI_BANDS];
    for b in 0..STOI_BANDS {
        let row = &env[b][lo..lo + STOI_SEG_FRAMES];
        let mean = row.iter().sum::<f64>() / STOI_SEG_FRAMES as f64;
        let norm = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt();
        if norm > 1e-14 {
            for n in 0..STOI_SEG_FRAMES {
                m[b][n] = (row[n] - mean) / norm;
            }
        }
    }
    for n in 0..STOI_SEG_FRAMES {
        let mean = (0..STOI_BANDS).map(|b| m[b][n]).sum::<f64>() / STOI_BANDS as f64;
        let norm = (0..STOI_BANDS)
            .map(|b| (m[b][n] - mean) * (m[b][n] - mean))
            .sum::<f64>()
            .sqrt();
        for b in 0..STOI_BANDS {
            m[b][n] = if norm > 1e-14 { (m[b][n] - mean) / norm } else { 0.0 };
        }
    }
    m
}

/// All four metrics for one (estimate, reference, mixture) triple.
pub fn report(est: &Waveform, reference: &Waveform, mix: &Waveform) -> Result<MetricsReport> {
    Ok(MetricsReport {
        si_sdr_db: si_sdr(est, reference)?,
        si_sdri_db: si_sdri(est, reference, mix)?,
        stoi: stoi(est, reference)?,
        estoi: estoi(est, reference)?,
    })
}
