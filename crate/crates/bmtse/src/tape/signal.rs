//! STFT magnitude as a differentiable op, for the frequency-domain
//! loss term. Forward uses the radix-2 FFT; backward walks the DFT
//! directly (same asymptotics as the rest of the backward pass).

use super::{Tape, Var};
use crate::tensor::{lit, Scalar, Tensor};

impl<T: Scalar> Tape<T> {
    /// Hann-windowed STFT magnitudes `sqrt(re^2 + im^2 + eps)`;
    /// `x: [B, S] -> [B, F, K]` with `K = win/2 + 1`.
    pub fn stft_mag(&mut self, x: Var, win: usize, hop: usize, eps: T) -> Var {
        assert!(win.is_power_of_two(), "stft win must be a power of two");
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 2, "stft_mag input must be [B, S]");
        let (bsz, s) = (xs[0], xs[1]);
        assert!(s >= win, "signal shorter than one stft window");
        let frames = (s - win) / hop + 1;
        let bins = win / 2 + 1;
        let window: Vec<T> = crate::dsp::hann_window(win).iter().map(|&w| lit(w)).collect();

        let xd = self.value(x).data();
        let mut mags = vec![T::zero(); bsz * frames * bins];
        let mut res = vec![T::zero(); bsz * frames * bins];
        let mut ims = vec![T::zero(); bsz * frames * bins];
        let mut buf_re = vec![0.0f64; win];
        let mut buf_im = vec![0.0f64; win];
        for b in 0..bsz {
            for fr in 0..frames {
                let start = b * s + fr * hop;
                for n in 0..win {
                    buf_re[n] = (xd[start + n] * window[n]).to_f64().unwrap();
                    buf_im[n] = 0.0;
                }
                crate::dsp::fft_in_place(&mut buf_re, &mut buf_im, false);
                let base = (b * frames + fr) * bins;
                for k in 0..bins {
                    let re: T = lit(buf_re[k]);
                    let im: T = lit(buf_im[k]);
                    res[base + k] = re;
                    ims[base + k] = im;
                    mags[base + k] = (re * re + im * im + eps).sqrt();
                }
            }
        }

        let out = Tensor::from_vec(&[bsz, frames, bins], mags);
        let res_t = res;
        let ims_t = ims;
        self.push(
            out,
            vec![x],
            Box::new(move |g, ins, outv| {
                let gd = g.data();
                let od = outv.data();
                let mut dx = Tensor::zeros(ins[0].shape());
                let dxd = dx.data_mut();
                let two_pi = lit::<T>(std::f64::consts::TAU);
                for b in 0..bsz {
                    for fr in 0..frames {
                        let base = (b * frames + fr) * bins;
                        let start = b * s + fr * hop;
                        for n in 0..win {
                            let mut acc = T::zero();
                            for k in 0..bins {
                                let gmag = gd[base + k] / od[base + k];
                                let theta = two_pi * lit::<T>((k * n) as f64)
                                    / lit::<T>(win as f64);
                                // d mag/d x[n] = (re*cos - im*(-sin)) ... with
                                // X[k] = sum x[n] w[n] e^{-i theta}
                                acc += gmag
                                    * (res_t[base + k] * theta.cos()
                                        - ims_t[base + k] * theta.sin());
                            }
                            dxd[start + n] += acc * window[n];
                        }
                    }
                }
                vec![dx]
            }),
        )
    }
}
