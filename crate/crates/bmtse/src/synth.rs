//! Synthetic cocktail-party generator: two amplitude-modulated harmonic
//! complexes mixed at 0 dB, plus surrogate EEG built by pushing the
//! attended envelope through a modulation-band filterbank and mixing
//! the band signals through a per-subject fingerprint.
//!
//! Side 0 carries a low-register source (fundamental near 110 Hz) with
//! a slow amplitude modulation; side 1 a high-register source (near
//! 1.1 kHz) with a faster modulation. The spectral gap makes the
//! extraction task solvable by a compact separator; the modulation
//! split makes the attended side decodable from the EEG alone; and
//! because a trial's modulation rate activates specific fingerprint
//! columns, every subject shows a stable spatial pattern per rate,
//! which is what makes identification learnable.

use crate::dsp::{resample_samples, Waveform};
use crate::eeg::EegBatch;
use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub channels: usize,
    pub trials_per_subject: usize,
    pub seed: u64,
    pub audio_rate_hz: u32,
    pub eeg_rate_hz: u32,
    pub duration_secs: f64,
    /// Number of envelope features (modulation bands) per fingerprint.
    pub fingerprint_features: usize,
    /// Weight of the unattended envelope in the EEG.
    pub distractor_leak: f64,
    /// Base noise level. Each subject gets a stable personal level
    /// spread around this value, one of the person-specific traits the
    /// identification head can latch onto.
    pub eeg_noise_std: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 4,
            channels: 16,
            trials_per_subject: 32,
            seed: 0,
            audio_rate_hz: 8000,
            eeg_rate_hz: 128,
            duration_secs: 2.0,
            fingerprint_features: 8,
            distractor_leak: 0.2,
            eeg_noise_std: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 2 {
            return Err(Error::config(format!(
                "need at least 2 subjects, got {}",
                self.n_subjects
            )));
        }
        if self.trials_per_subject < 8 {
            return Err(Error::config(format!(
                "need at least 8 trials per subject for split coverage, got {}",
                self.trials_per_subject
            )));
        }
        if self.channels == 0 || self.fingerprint_features == 0 {
            return Err(Error::config("empty fingerprint geometry".to_string()));
        }
        if self.eeg_rate_hz < 2 * MOD_BAND_TOP_HZ as u32 {
            return Err(Error::config("EEG rate too low for the modulation filterbank".to_string()));
        }
        Ok(())
    }

    pub fn audio_samples(&self) -> usize {
        (self.duration_secs * self.audio_rate_hz as f64).round() as usize
    }

    pub fn eeg_samples(&self) -> usize {
        (self.duration_secs * self.eeg_rate_hz as f64).round() as usize
    }
}

/// Per-subject EEG fingerprint: `channels x features` mixing matrix
/// with unit-norm rows, fixed across that subject's trials.
#[derive(Clone, Debug)]
pub struct SubjectProfile {
    pub subject_id: usize,
    pub fingerprint: Vec<f64>,
    pub channels: usize,
    pub features: usize,
    pub eeg_noise_std: f64,
}

impl SubjectProfile {
    pub fn row(&self, c: usize) -> &[f64] {
        &self.fingerprint[c * self.features..(c + 1) * self.features]
    }
}

/// One synthetic trial: `mixture = target + interferer` sample-exactly,
/// with EEG that tracks the attended source's envelope.
#[derive(Clone, Debug)]
pub struct TrialExample {
    pub mixture: Waveform,
    pub target: Waveform,
    pub interferer: Waveform,
    pub eeg: EegBatch,
    pub subject_id: usize,
    pub attended_side: usize,
}

#[derive(Clone, Debug, Default)]
pub struct DatasetSplit {
    pub train: Vec<TrialExample>,
    pub val: Vec<TrialExample>,
    pub test: Vec<TrialExample>,
}

pub const SPLIT_RATIOS: (f64, f64, f64) = (0.75, 0.125, 0.125);

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(1e-12..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Cosine similarity between two flattened fingerprints.
pub fn fingerprint_correlation(a: &SubjectProfile, b: &SubjectProfile) -> f64 {
    let dot: f64 = a.fingerprint.iter().zip(&b.fingerprint).map(|(x, y)| x * y).sum();
    let na: f64 = a.fingerprint.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.fingerprint.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).abs()
}

const FINGERPRINT_CORR_LIMIT: f64 = 0.5;

/// Deterministic subject set; fingerprints are re-drawn while any pair
/// correlates at 0.5 or above.
pub fn make_subjects(cfg: &SynthConfig) -> Result<Vec<SubjectProfile>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1));
    let mut subjects: Vec<SubjectProfile> = Vec::with_capacity(cfg.n_subjects);
    for subject_id in 0..cfg.n_subjects {
        for attempt in 0.. {
            if attempt > 1000 {
                return Err(Error::config(
                    "could not draw sufficiently distinct fingerprints".to_string(),
                ));
            }
            let mut fingerprint = vec![0.0; cfg.channels * cfg.fingerprint_features];
            for row in fingerprint.chunks_mut(cfg.fingerprint_features) {
                loop {
                    for v in row.iter_mut() {
                        *v = gaussian(&mut rng);
                    }
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 1e-6 {
                        for v in row.iter_mut() {
                            *v /= norm;
                        }
                        break;
                    }
                }
            }
            // personal noise level: spread over [0.7, 1.3] x base
            let spread = if cfg.n_subjects > 1 {
                0.7 + 0.6 * subject_id as f64 / (cfg.n_subjects - 1) as f64
            } else {
                1.0
            };
            let candidate = SubjectProfile {
                subject_id,
                fingerprint,
                channels: cfg.channels,
                features: cfg.fingerprint_features,
                eeg_noise_std: cfg.eeg_noise_std * spread,
            };
            if subjects
                .iter()
                .all(|s| fingerprint_correlation(s, &candidate) < FINGERPRINT_CORR_LIMIT)
            {
                subjects.push(candidate);
                break;
            }
        }
    }
    Ok(subjects)
}

/// Source registers per attention side: (fundamental range, harmonic
/// count, modulation-rate range). The envelope bandwidth stays below
/// 8 Hz on both sides.
const SIDE_BANDS: [((f64, f64), usize, (f64, f64)); 2] = [
    ((95.0, 125.0), 6, (1.5, 3.5)),
    ((950.0, 1250.0), 3, (4.5, 7.5)),
];
const SOURCE_RMS: f64 = 0.12;

struct Source {
    samples: Vec<f64>,
    envelope: Vec<f64>,
}

fn synth_source(cfg: &SynthConfig, side: usize, rng: &mut ChaCha8Rng) -> Source {
    let ((f_lo, f_hi), harmonics, (m_lo, m_hi)) = SIDE_BANDS[side];
    let f0 = rng.random_range(f_lo..f_hi);
    let mod_rate = rng.random_range(m_lo..m_hi);
    let mod_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let phases: Vec<f64> = (0..harmonics)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();

    let n = cfg.audio_samples();
    let rate = cfg.audio_rate_hz as f64;
    let mut samples = vec![0.0; n];
    let mut envelope = vec![0.0; n];
    for (i, (s, e)) in samples.iter_mut().zip(envelope.iter_mut()).enumerate() {
        let t = i as f64 / rate;
        let env = 0.55 + 0.45 * (std::f64::consts::TAU * mod_rate * t + mod_phase).sin();
        let mut carrier = 0.0;
        for (h, phase) in phases.iter().enumerate() {
            let f = f0 * (h + 1) as f64;
            carrier += (std::f64::consts::TAU * f * t + phase).sin() / (h + 1) as f64;
        }
        *s = env * carrier;
        *e = env;
    }
    let rms = (samples.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
    let gain = SOURCE_RMS / rms.max(1e-9);
    for s in &mut samples {
        *s *= gain;
    }
    Source { samples, envelope }
}

const MOD_BAND_BOTTOM_HZ: f64 = 0.75;
const MOD_BAND_TOP_HZ: f64 = 7.5;

/// Modulation-band decomposition of an envelope at the EEG rate: one
/// octave-ish bandpass per fingerprint feature, centers spanning
/// 0.75 to 7.5 Hz.
fn envelope_features(cfg: &SynthConfig, env_audio_rate: &[f64]) -> Vec<Vec<f64>> {
    let env = resample_samples(env_audio_rate, cfg.audio_rate_hz, cfg.eeg_rate_hz);
    let k = cfg.fingerprint_features;
    (0..k)
        .map(|i| {
            let center = if k == 1 {
                (MOD_BAND_BOTTOM_HZ + MOD_BAND_TOP_HZ) / 2.0
            } else {
                MOD_BAND_BOTTOM_HZ
                    + (MOD_BAND_TOP_HZ - MOD_BAND_BOTTOM_HZ) * i as f64 / (k - 1) as f64
            };
            crate::dsp::biquad_filter_samples(
                &env,
                cfg.eeg_rate_hz as f64,
                crate::dsp::BiquadKind::Bandpass {
                    lo_hz: center / 1.5,
                    hi_hz: center * 1.5,
                },
            )
            .expect("modulation band inside Nyquist")
        })
        .collect()
}

/// Envelope features mixed through the subject fingerprint.
fn envelope_to_eeg(
    cfg: &SynthConfig,
    subject: &SubjectProfile,
    attended_env: &[f64],
    unattended_env: &[f64],
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let t_len = cfg.eeg_samples();
    let att = envelope_features(cfg, attended_env);
    let unatt = envelope_features(cfg, unattended_env);

    // the bands are narrow; rescale so the signal part keeps a usable
    // footprint against the noise term
    let band_gain = 4.0;
    let mut eeg = vec![0.0; cfg.channels * t_len];
    for c in 0..cfg.channels {
        let row = subject.row(c);
        for t in 0..t_len {
            let mut v = 0.0;
            for (k, &w) in row.iter().enumerate() {
                v += w * band_gain * att[k][t];
                v += cfg.distractor_leak * w * band_gain * unatt[k][t];
            }
            eeg[c * t_len + t] = v + subject.eeg_noise_std * gaussian(rng);
        }
    }
    eeg
}

/// One deterministic trial for `(subject, attended_side, seed)`.
pub fn synth_trial(
    cfg: &SynthConfig,
    subject: &SubjectProfile,
    attended_side: usize,
    seed: u64,
) -> Result<TrialExample> {
    assert!(attended_side < 2, "attention label must be 0 or 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side0 = synth_source(cfg, 0, &mut rng);
    let side1 = synth_source(cfg, 1, &mut rng);

    let mixture: Vec<f64> = side0
        .samples
        .iter()
        .zip(&side1.samples)
        .map(|(a, b)| a + b)
        .collect();
    let (target_src, interferer_src) = if attended_side == 0 {
        (&side0, &side1)
    } else {
        (&side1, &side0)
    };

    let eeg_raw = envelope_to_eeg(
        cfg,
        subject,
        &target_src.envelope,
        &interferer_src.envelope,
        &mut rng,
    );
    let eeg = EegBatch::standardized(
        eeg_raw,
        1,
        cfg.channels,
        cfg.eeg_samples(),
        cfg.eeg_rate_hz,
    )?;

    Ok(TrialExample {
        mixture: Waveform::new(mixture, cfg.audio_rate_hz)?,
        target: Waveform::new(target_src.samples.clone(), cfg.audio_rate_hz)?,
        interferer: Waveform::new(interferer_src.samples.clone(), cfg.audio_rate_hz)?,
        eeg,
        subject_id: subject.subject_id,
        attended_side,
    })
}

/// All trials for one subject: alternating attention labels, one
/// deterministic sub-seed per trial.
fn subject_trials(
    cfg: &SynthConfig,
    subject: &SubjectProfile,
    master: &mut ChaCha8Rng,
) -> Result<Vec<TrialExample>> {
    (0..cfg.trials_per_subject)
        .map(|i| {
            let seed = master.random::<u64>();
            synth_trial(cfg, subject, i % 2, seed)
        })
        .collect()
}

/// Stratified 75/12.5/12.5 split: each (subject, label) group is split
/// proportionally, so every subject and both labels appear in every
/// partition.
pub fn make_split(cfg: &SynthConfig) -> Result<DatasetSplit> {
    cfg.validate()?;
    let subjects = make_subjects(cfg)?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut split = DatasetSplit::default();
    for subject in &subjects {
        let trials = subject_trials(cfg, subject, &mut master)?;
        for side in 0..2 {
            let mut group: Vec<TrialExample> = trials
                .iter()
                .filter(|t| t.attended_side == side)
                .cloned()
                .collect();
            // shuffle within the group
            for i in (1..group.len()).rev() {
                let j = master.random_range(0..=i);
                group.swap(i, j);
            }
            let n = group.len();
            let n_val = ((n as f64 * SPLIT_RATIOS.1).round() as usize).max(1);
            let n_test = ((n as f64 * SPLIT_RATIOS.2).round() as usize).max(1);
            if n_val + n_test >= n {
                return Err(Error::config(format!(
                    "too few trials per (subject, label) group ({n}) to cover all partitions"
                )));
            }
            for (i, t) in group.into_iter().enumerate() {
                if i < n_val {
                    split.val.push(t);
                } else if i < n_val + n_test {
                    split.test.push(t);
                } else {
                    split.train.push(t);
                }
            }
        }
    }
    // deterministic cross-subject shuffle of each partition
    for part in [&mut split.train, &mut split.val, &mut split.test] {
        for i in (1..part.len()).rev() {
            let j = master.random_range(0..=i);
            part.swap(i, j);
        }
    }
    Ok(split)
}
