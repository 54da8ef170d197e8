//! Deterministic signal-processing primitives: STFT/iSTFT, mel
//! spectrograms, resampling, and zero-phase biquad filtering. Shared by
//! the metrics, the STFT loss, the data generator, and the exporters.
//!
//! Defaults used throughout the crate: Hann analysis window with 50 %
//! overlap, `win_len = 256`, `hop = 128` at 8 kHz.

mod biquad;
mod export;
mod wav;

pub use biquad::{biquad_filter, biquad_filter_samples, BiquadKind};
pub use export::{write_mel_csv, write_mel_pgm};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

/// Floor for log operations so gradients and logs stay finite.
pub const LOG_FLOOR_EPS: f64 = 1e-10;

/// Mono audio buffer. Samples are dimensionless amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz < 1000 {
            return Err(Error::config(format!(
                "audio sample rate must be >= 1000 Hz, got {sample_rate_hz}"
            )));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite()) {
            return Err(Error::domain(format!("non-finite sample {bad}")));
        }
        Ok(Waveform {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }
}

/// One-sided complex STFT, `frames x bins` with `bins = win_len/2 + 1`.
#[derive(Clone, Debug)]
pub struct ComplexSpectrogram {
    re: Vec<f64>,
    im: Vec<f64>,
    frames: usize,
    bins: usize,
    win_len: usize,
    hop: usize,
    window: &'static str,
}

impl ComplexSpectrogram {
    pub fn frames(&self) -> usize {
        self.frames
    }
    pub fn bins(&self) -> usize {
        self.bins
    }
    pub fn win_len(&self) -> usize {
        self.win_len
    }
    pub fn hop(&self) -> usize {
        self.hop
    }
    pub fn window(&self) -> &'static str {
        self.window
    }
    pub fn re(&self, frame: usize, bin: usize) -> f64 {
        self.re[frame * self.bins + bin]
    }
    pub fn im(&self, frame: usize, bin: usize) -> f64 {
        self.im[frame * self.bins + bin]
    }
    pub fn magnitude(&self, frame: usize, bin: usize) -> f64 {
        self.re(frame, bin).hypot(self.im(frame, bin))
    }
    pub fn power(&self, frame: usize, bin: usize) -> f64 {
        let (re, im) = (self.re(frame, bin), self.im(frame, bin));
        re * re + im * im
    }
}

/// Log-energy mel spectrogram, `frames x n_mels`.
#[derive(Clone, Debug)]
pub struct MelSpectrogram {
    data: Vec<f64>,
    frames: usize,
    n_mels: usize,
    pub mel_lo_hz: f64,
    pub mel_hi_hz: f64,
}

impl MelSpectrogram {
    pub fn frames(&self) -> usize {
        self.frames
    }
    pub fn n_mels(&self) -> usize {
        self.n_mels
    }
    pub fn at(&self, frame: usize, band: usize) -> f64 {
        self.data[frame * self.n_mels + band]
    }
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_mels)
    }
    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Periodic Hann window: exact constant overlap-add for any hop that
/// divides the window length (hop < win_len).
pub fn hann_window(win_len: usize) -> Vec<f64> {
    (0..win_len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win_len as f64).cos())
        .collect()
}

/// Iterative radix-2 complex FFT (in place). `re`/`im` length must be a
/// power of two.
pub(crate) fn fft_in_place(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    assert_eq!(n, im.len());
    assert!(n.is_power_of_two(), "fft length must be a power of two");
    // bit reversal
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let (mut cr, mut ci) = (1.0, 0.0);
            for k in 0..len / 2 {
                let (ur, ui) = (re[i + k], im[i + k]);
                let (vr, vi) = (
                    re[i + k + len / 2] * cr - im[i + k + len / 2] * ci,
                    re[i + k + len / 2] * ci + im[i + k + len / 2] * cr,
                );
                re[i + k] = ur + vr;
                im[i + k] = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                let ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
            i += len;
        }
        len <<= 1;
    }
    if inverse {
        let inv = 1.0 / n as f64;
        for v in re.iter_mut() {
            *v *= inv;
        }
        for v in im.iter_mut() {
            *v *= inv;
        }
    }
}

/// Hann-windowed short-time Fourier transform.
///
/// `F = 1 + (len - win_len)/hop` complete frames, `K = win_len/2 + 1`
/// one-sided bins.
pub fn stft(w: &Waveform, win_len: usize, hop: usize) -> Result<ComplexSpectrogram> {
    if !win_len.is_power_of_two() {
        return Err(Error::config(format!(
            "win_len must be a power of two, got {win_len}"
        )));
    }
    if hop == 0 || hop > win_len {
        return Err(Error::config(format!("hop {hop} outside (0, win_len]")));
    }
    if w.len() < win_len {
        return Err(Error::length(format!(
            "signal of {} samples shorter than one window ({win_len})",
            w.len()
        )));
    }
    let frames = 1 + (w.len() - win_len) / hop;
    let bins = win_len / 2 + 1;
    let window = hann_window(win_len);
    let mut re = vec![0.0; frames * bins];
    let mut im = vec![0.0; frames * bins];
    let mut buf_re = vec![0.0; win_len];
    let mut buf_im = vec![0.0; win_len];
    for f in 0..frames {
        let start = f * hop;
        for n in 0..win_len {
            buf_re[n] = w.samples[start + n] * window[n];
            buf_im[n] = 0.0;
        }
        fft_in_place(&mut buf_re, &mut buf_im, false);
        re[f * bins..(f + 1) * bins].copy_from_slice(&buf_re[..bins]);
        im[f * bins..(f + 1) * bins].copy_from_slice(&buf_im[..bins]);
    }
    Ok(ComplexSpectrogram {
        re,
        im,
        frames,
        bins,
        win_len,
        hop,
        window: "hann",
    })
}

/// Inverse STFT by overlap-add, dividing by the exact constant
/// overlap-add gain of the periodic Hann window. Interior samples of
/// `istft(stft(w))` reconstruct `w` to < 1e-6.
pub fn istft(spec: &ComplexSpectrogram, out_len: usize, sample_rate_hz: u32) -> Result<Waveform> {
    let win_len = spec.win_len;
    let hop = spec.hop;
    if hop >= win_len || win_len % hop != 0 {
        return Err(Error::config(format!(
            "hop {hop} must divide win_len {win_len} for constant overlap-add"
        )));
    }
    let cola_gain = win_len as f64 / (2.0 * hop as f64);
    let mut out = vec![0.0; out_len];
    let mut buf_re = vec![0.0; win_len];
    let mut buf_im = vec![0.0; win_len];
    for f in 0..spec.frames {
        // rebuild the full spectrum from the one-sided half
        for k in 0..spec.bins {
            buf_re[k] = spec.re(f, k);
            buf_im[k] = spec.im(f, k);
        }
        for k in spec.bins..win_len {
            buf_re[k] = spec.re(f, win_len - k);
            buf_im[k] = -spec.im(f, win_len - k);
        }
        fft_in_place(&mut buf_re, &mut buf_im, true);
        let start = f * hop;
        for n in 0..win_len {
            if start + n < out_len {
                out[start + n] += buf_re[n] / cola_gain;
            }
        }
    }
    Waveform::new(out, sample_rate_hz)
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank applied to the STFT power spectrum, then a
/// floored log. Bands span 0 Hz to Nyquist.
pub fn mel_spectrogram(
    w: &Waveform,
    win_len: usize,
    hop: usize,
    n_mels: usize,
) -> Result<MelSpectrogram> {
    if n_mels < 4 {
        return Err(Error::config(format!("n_mels must be >= 4, got {n_mels}")));
    }
    let spec = stft(w, win_len, hop)?;
    let nyquist = w.sample_rate_hz as f64 / 2.0;
    let (mel_lo, mel_hi) = (0.0, nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| {
            mel_to_hz(
                hz_to_mel(mel_lo)
                    + (hz_to_mel(mel_hi) - hz_to_mel(mel_lo)) * i as f64 / (n_mels + 1) as f64,
            )
        })
        .collect();
    let bin_hz = w.sample_rate_hz as f64 / win_len as f64;

    let mut data = vec![0.0; spec.frames * n_mels];
    for f in 0..spec.frames {
        for m in 0..n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut acc = 0.0;
            for k in 0..spec.bins {
                let fk = k as f64 * bin_hz;
                let weight = if fk >= lo && fk <= mid && mid > lo {
                    (fk - lo) / (mid - lo)
                } else if fk > mid && fk <= hi && hi > mid {
                    (hi - fk) / (hi - mid)
                } else {
                    0.0
                };
                if weight > 0.0 {
                    acc += weight * spec.power(f, k);
                }
            }
            data[f * n_mels + m] = acc.max(LOG_FLOOR_EPS).ln();
        }
    }
    Ok(MelSpectrogram {
        data,
        frames: spec.frames,
        n_mels,
        mel_lo_hz: mel_lo,
        mel_hi_hz: mel_hi,
    })
}

fn bessel_i0(x: f64) -> f64 {
    // power series; converges quickly for the argument range we use
    let mut sum = 1.0;
    let mut term = 1.0;
    let half_sq = x * x / 4.0;
    for k in 1..40 {
        term *= half_sq / (k * k) as f64;
        sum += term;
        if term < 1e-16 * sum {
            break;
        }
    }
    sum
}

const RESAMPLE_TAPS_PER_SIDE: usize = 16;
const RESAMPLE_KAISER_BETA: f64 = 8.6;

/// Kaiser-windowed sinc interpolation of a raw sample buffer. Taps are
/// normalized per output sample, so constants pass through exactly.
pub fn resample_samples(x: &[f64], src_hz: u32, dst_hz: u32) -> Vec<f64> {
    if src_hz == dst_hz {
        return x.to_vec();
    }
    let out_len = ((x.len() as f64) * dst_hz as f64 / src_hz as f64).round() as usize;
    let ratio = src_hz as f64 / dst_hz as f64;
    // anti-aliasing cutoff relative to the source Nyquist
    let fc = (dst_hz as f64 / src_hz as f64).min(1.0);
    let taps = RESAMPLE_TAPS_PER_SIDE as f64;
    let i0_beta = bessel_i0(RESAMPLE_KAISER_BETA);

    let mut out = vec![0.0; out_len];
    for (j, o) in out.iter_mut().enumerate() {
        let pos = j as f64 * ratio;
        let lo = (pos - taps).ceil() as i64;
        let hi = (pos + taps).floor() as i64;
        let mut acc = 0.0;
        let mut norm = 0.0;
        for i in lo..=hi {
            if i < 0 || i as usize >= x.len() {
                continue;
            }
            let u = i as f64 - pos;
            let sinc = if u.abs() < 1e-12 {
                1.0
            } else {
                (std::f64::consts::PI * fc * u).sin() / (std::f64::consts::PI * fc * u)
            };
            let t = u / taps;
            let kaiser = bessel_i0(RESAMPLE_KAISER_BETA * (1.0 - t * t).max(0.0).sqrt()) / i0_beta;
            let w = sinc * kaiser;
            // normalize over in-range taps only: constants pass through
            // exactly, including at the edges
            norm += w;
            acc += w * x[i as usize];
        }
        *o = if norm.abs() > 1e-12 { acc / norm } else { 0.0 };
    }
    out
}

/// Resample a waveform to `target_hz`.
pub fn resample(w: &Waveform, target_hz: u32) -> Result<Waveform> {
    if target_hz == 0 {
        return Err(Error::config("resample target rate must be positive".to_string()));
    }
    if target_hz == w.sample_rate_hz {
        return Ok(w.clone());
    }
    Waveform::new(
        resample_samples(&w.samples, w.sample_rate_hz, target_hz),
        target_hz,
    )
}
