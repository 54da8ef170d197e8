//! Zero-phase biquad filtering: second-order sections run forward then
//! backward so preprocessing cannot introduce phase skew.

use super::Waveform;
use crate::error::{Error, Result};

/// Filter selection for [`biquad_filter`].
#[derive(Clone, Copy, Debug)]
pub enum BiquadKind {
    /// Butterworth high-pass at `lo_hz` cascaded with low-pass at `hi_hz`.
    Bandpass { lo_hz: f64, hi_hz: f64 },
    /// Single notch at `center_hz` with quality factor `q`.
    Notch { center_hz: f64, q: f64 },
}

/// Normalized second-order section (a0 = 1).
#[derive(Clone, Copy, Debug)]
struct Sos {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Sos {
    /// Steady-state filter state for a unit-step input (transposed
    /// direct form II), scaled by the caller to the first sample.
    fn steady_state(&self) -> (f64, f64) {
        let dc_gain = (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2);
        let z2 = self.b2 - self.a2 * dc_gain;
        let z1 = self.b1 - self.a1 * dc_gain + z2;
        (z1, z2)
    }

    fn run(&self, x: &[f64]) -> Vec<f64> {
        let (mut z1, mut z2) = self.steady_state();
        let x0 = x.first().copied().unwrap_or(0.0);
        z1 *= x0;
        z2 *= x0;
        let mut out = Vec::with_capacity(x.len());
        for &xi in x {
            let y = self.b0 * xi + z1;
            z1 = self.b1 * xi - self.a1 * y + z2;
            z2 = self.b2 * xi - self.a2 * y;
            out.push(y);
        }
        out
    }
}

const BUTTERWORTH_Q: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn lowpass(fc: f64, rate: f64) -> Sos {
    let w0 = 2.0 * std::f64::consts::PI * fc / rate;
    let alpha = w0.sin() / (2.0 * BUTTERWORTH_Q);
    let cosw = w0.cos();
    let a0 = 1.0 + alpha;
    Sos {
        b0: (1.0 - cosw) / 2.0 / a0,
        b1: (1.0 - cosw) / a0,
        b2: (1.0 - cosw) / 2.0 / a0,
        a1: -2.0 * cosw / a0,
        a2: (1.0 - alpha) / a0,
    }
}

fn highpass(fc: f64, rate: f64) -> Sos {
    let w0 = 2.0 * std::f64::consts::PI * fc / rate;
    let alpha = w0.sin() / (2.0 * BUTTERWORTH_Q);
    let cosw = w0.cos();
    let a0 = 1.0 + alpha;
    Sos {
        b0: (1.0 + cosw) / 2.0 / a0,
        b1: -(1.0 + cosw) / a0,
        b2: (1.0 + cosw) / 2.0 / a0,
        a1: -2.0 * cosw / a0,
        a2: (1.0 - alpha) / a0,
    }
}

fn notch(fc: f64, q: f64, rate: f64) -> Sos {
    let w0 = 2.0 * std::f64::consts::PI * fc / rate;
    let alpha = w0.sin() / (2.0 * q);
    let cosw = w0.cos();
    let a0 = 1.0 + alpha;
    Sos {
        b0: 1.0 / a0,
        b1: -2.0 * cosw / a0,
        b2: 1.0 / a0,
        a1: -2.0 * cosw / a0,
        a2: (1.0 - alpha) / a0,
    }
}

/// Forward-backward run of one section with odd-reflection padding so
/// edge transients settle outside the kept region.
fn filtfilt(sos: &Sos, x: &[f64]) -> Vec<f64> {
    let pad = (x.len().saturating_sub(1)).min(1024);
    let n = x.len();
    let mut padded = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        padded.push(2.0 * x[0] - x[i]);
    }
    padded.extend_from_slice(x);
    for i in 1..=pad {
        padded.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }

    let mut y = sos.run(&padded);
    y.reverse();
    let mut y = sos.run(&y);
    y.reverse();
    y[pad..pad + n].to_vec()
}

/// Zero-phase band-pass or notch filtering.
pub fn biquad_filter(w: &Waveform, kind: BiquadKind) -> Result<Waveform> {
    let nyquist = w.sample_rate_hz() as f64 / 2.0;
    let sections: Vec<Sos> = match kind {
        BiquadKind::Bandpass { lo_hz, hi_hz } => {
            if !(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < nyquist) {
                return Err(Error::config(format!(
                    "bandpass edges ({lo_hz}, {hi_hz}) must satisfy 0 < lo < hi < {nyquist}"
                )));
            }
            vec![
                highpass(lo_hz, w.sample_rate_hz() as f64),
                lowpass(hi_hz, w.sample_rate_hz() as f64),
            ]
        }
        BiquadKind::Notch { center_hz, q } => {
            if !(center_hz > 0.0 && center_hz < nyquist) {
                return Err(Error::config(format!(
                    "notch center {center_hz} outside (0, {nyquist})"
                )));
            }
            if q <= 0.0 {
                return Err(Error::config(format!("notch q must be positive, got {q}")));
            }
            vec![notch(center_hz, q, w.sample_rate_hz() as f64)]
        }
    };
    let mut out = w.samples().to_vec();
    for sos in &sections {
        out = filtfilt(sos, &out);
    }
    Waveform::new(out, w.sample_rate_hz())
}

/// The same primitive on a raw buffer, used by the EEG synthesis path
/// where rates sit below the audio floor.
pub fn biquad_filter_samples(x: &[f64], rate_hz: f64, kind: BiquadKind) -> Result<Vec<f64>> {
    let nyquist = rate_hz / 2.0;
    let sections: Vec<Sos> = match kind {
        BiquadKind::Bandpass { lo_hz, hi_hz } => {
            if !(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < nyquist) {
                return Err(Error::config("bandpass edges outside Nyquist".to_string()));
            }
            vec![highpass(lo_hz, rate_hz), lowpass(hi_hz, rate_hz)]
        }
        BiquadKind::Notch { center_hz, q } => {
            if !(center_hz > 0.0 && center_hz < nyquist && q > 0.0) {
                return Err(Error::config("notch parameters outside Nyquist".to_string()));
            }
            vec![notch(center_hz, q, rate_hz)]
        }
    };
    let mut out = x.to_vec();
    for sos in &sections {
        out = filtfilt(sos, &out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: u32, secs: f64) -> Waveform {
        let len = (secs * rate as f64) as usize;
        let w = 2.0 * std::f64::consts::PI * freq / rate as f64;
        Waveform::new((0..len).map(|n| (w * n as f64).sin()).collect(), rate).unwrap()
    }

    #[test]
    fn bandpass_rejects_dc_offset() {
        let rate = 1000u32;
        let offset = 2.0;
        let w = Waveform::new(vec![offset; 2000], rate).unwrap();
        let out = biquad_filter(&w, BiquadKind::Bandpass { lo_hz: 0.1, hi_hz: 45.0 }).unwrap();
        let mean = out.samples().iter().sum::<f64>() / out.len() as f64;
        assert!(
            mean.abs() < 0.01 * offset,
            "residual DC {mean} vs offset {offset}"
        );
    }

    #[test]
    fn bandpass_at_eeg_rate_rejects_offset_under_a_rider() {
        // 128 Hz path goes through the raw-buffer variant
        let rate = 128.0;
        let offset = 2.0;
        let x: Vec<f64> = (0..2048)
            .map(|n| offset + 0.3 * (2.0 * std::f64::consts::PI * 10.0 * n as f64 / rate).sin())
            .collect();
        let out =
            biquad_filter_samples(&x, rate, BiquadKind::Bandpass { lo_hz: 0.1, hi_hz: 45.0 })
                .unwrap();
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        assert!(mean.abs() < 0.05 * offset, "residual DC {mean}");
    }

    #[test]
    fn notch_kills_its_center_tone() {
        // long tone: the residual is onset/offset spectral splatter, so
        // the RMS ratio improves with duration
        let w = tone(50.0, 1000, 30.0);
        let out = biquad_filter(&w, BiquadKind::Notch { center_hz: 50.0, q: 30.0 }).unwrap();
        let drop_db = 20.0 * (out.rms() / w.rms()).log10();
        assert!(drop_db <= -30.0, "notch attenuation only {drop_db:.1} dB");
    }

    #[test]
    fn notch_passes_distant_tone() {
        let w = tone(10.0, 1000, 4.0);
        let out = biquad_filter(&w, BiquadKind::Notch { center_hz: 50.0, q: 30.0 }).unwrap();
        let change_db = 20.0 * (out.rms() / w.rms()).log10();
        assert!(change_db.abs() <= 1.0, "passband ripple {change_db:.2} dB");
    }

    #[test]
    fn band_edges_outside_nyquist_are_config_errors() {
        let w = tone(10.0, 1000, 0.5);
        assert!(matches!(
            biquad_filter(&w, BiquadKind::Bandpass { lo_hz: 100.0, hi_hz: 600.0 }),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            biquad_filter(&w, BiquadKind::Notch { center_hz: 700.0, q: 5.0 }),
            Err(Error::Config(_))
        ));
    }
}
