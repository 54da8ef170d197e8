//! Shape manipulation, broadcasting helpers, interpolation, and the
//! framing/segmentation ops used by the STFT loss and the separator.

use super::{Tape, Var};
use crate::tensor::{lit, Scalar, Tensor};

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn permute_raw<T: Scalar>(x: &Tensor<T>, perm: &[usize]) -> Tensor<T> {
    let shape = x.shape();
    assert_eq!(perm.len(), shape.len(), "permute rank mismatch");
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = strides(shape);
    let out_strides = strides(&out_shape);
    let mut out = vec![T::zero(); x.len()];
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    for (oi, slot) in out.iter_mut().enumerate() {
        // decode output index, map through perm to the input offset
        let mut rem = oi;
        for d in 0..rank {
            idx[d] = rem / out_strides[d];
            rem %= out_strides[d];
        }
        let mut src = 0;
        for d in 0..rank {
            src += idx[d] * in_strides[perm[d]];
        }
        *slot = x.data()[src];
    }
    Tensor::from_vec(&out_shape, out)
}

impl<T: Scalar> Tape<T> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let old = self.shape(x).to_vec();
        let v = self.value(x).clone().reshaped(shape);
        self.push(
            v,
            vec![x],
            Box::new(move |g, _, _| vec![g.clone().reshaped(&old)]),
        )
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Var {
        let v = permute_raw(self.value(x), perm);
        let mut inverse = vec![0usize; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        self.push(
            v,
            vec![x],
            Box::new(move |g, _, _| vec![permute_raw(g, &inverse)]),
        )
    }

    /// Concatenate along `axis`. All other dims must match.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Var {
        assert!(!xs.is_empty(), "concat of nothing");
        let first = self.shape(xs[0]).to_vec();
        let rank = first.len();
        assert!(axis < rank, "concat axis out of range");
        let mut axis_sizes = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            assert_eq!(s.len(), rank, "concat rank mismatch");
            for d in 0..rank {
                if d != axis {
                    assert_eq!(s[d], first[d], "concat dim {d} mismatch");
                }
            }
            axis_sizes.push(s[axis]);
        }
        let total_axis: usize = axis_sizes.iter().sum();
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();

        let mut out_shape = first.clone();
        out_shape[axis] = total_axis;
        let mut out = vec![T::zero(); outer * total_axis * inner];
        let mut offset = 0;
        for (&x, &asz) in xs.iter().zip(&axis_sizes) {
            let xd = self.value(x).data();
            for o in 0..outer {
                let src = &xd[o * asz * inner..(o + 1) * asz * inner];
                let dst_start = (o * total_axis + offset) * inner;
                out[dst_start..dst_start + asz * inner].copy_from_slice(src);
            }
            offset += asz;
        }
        let sizes = axis_sizes.clone();
        self.push(
            Tensor::from_vec(&out_shape, out),
            xs.to_vec(),
            Box::new(move |g, ins, _| {
                let gd = g.data();
                let mut grads = Vec::with_capacity(ins.len());
                let mut offset = 0;
                for (pi, &asz) in sizes.iter().enumerate() {
                    let mut d = Tensor::zeros(ins[pi].shape());
                    for o in 0..outer {
                        let src_start = (o * total_axis + offset) * inner;
                        d.data_mut()[o * asz * inner..(o + 1) * asz * inner]
                            .copy_from_slice(&gd[src_start..src_start + asz * inner]);
                    }
                    grads.push(d);
                    offset += asz;
                }
                grads
            }),
        )
    }

    /// Take `len` entries starting at `start` along `axis`.
    pub fn slice_axis(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let shape = self.shape(x).to_vec();
        assert!(axis < shape.len(), "slice axis out of range");
        assert!(start + len <= shape[axis], "slice out of bounds");
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let asz = shape[axis];

        let xd = self.value(x).data();
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let mut out = vec![T::zero(); outer * len * inner];
        for o in 0..outer {
            let src_start = (o * asz + start) * inner;
            out[o * len * inner..(o + 1) * len * inner]
                .copy_from_slice(&xd[src_start..src_start + len * inner]);
        }
        self.push(
            Tensor::from_vec(&out_shape, out),
            vec![x],
            Box::new(move |g, ins, _| {
                let mut d = Tensor::zeros(ins[0].shape());
                for o in 0..outer {
                    let dst_start = (o * asz + start) * inner;
                    d.data_mut()[dst_start..dst_start + len * inner]
                        .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                vec![d]
            }),
        )
    }

    /// `x: [B, ...rest] + p: [...rest]`, broadcasting `p` over the batch.
    pub fn add_broadcast_batch(&mut self, x: Var, p: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let ps = self.shape(p).to_vec();
        assert_eq!(&xs[1..], &ps[..], "broadcast shape mismatch");
        let bsz = xs[0];
        let rest: usize = ps.iter().product();
        let xd = self.value(x).data();
        let pd = self.value(p).data();
        let mut out = vec![T::zero(); xd.len()];
        for bi in 0..bsz {
            for i in 0..rest {
                out[bi * rest + i] = xd[bi * rest + i] + pd[i];
            }
        }
        self.push(
            Tensor::from_vec(&xs, out),
            vec![x, p],
            Box::new(move |g, ins, _| {
                let mut dp = Tensor::zeros(ins[1].shape());
                for bi in 0..bsz {
                    for (i, d) in dp.data_mut().iter_mut().enumerate() {
                        *d += g.data()[bi * rest + i];
                    }
                }
                vec![g.clone(), dp]
            }),
        )
    }

    /// Per-feature scale of `x: [B, F, P]` by `s: [F]`.
    pub fn mul_feature(&mut self, x: Var, s: Var) -> Var {
        self.feature_affine(x, s, true)
    }

    /// Per-feature shift of `x: [B, F, P]` by `b: [F]`.
    pub fn add_feature(&mut self, x: Var, b: Var) -> Var {
        self.feature_affine(x, b, false)
    }

    fn feature_affine(&mut self, x: Var, s: Var, multiply: bool) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 3, "feature op input must be [B, F, P]");
        let (bsz, f, p) = (xs[0], xs[1], xs[2]);
        assert_eq!(self.shape(s), &[f], "feature vector length");
        let xd = self.value(x).data();
        let sd = self.value(s).data();
        let mut out = vec![T::zero(); xd.len()];
        for bi in 0..bsz {
            for fi in 0..f {
                let base = (bi * f + fi) * p;
                let sv = sd[fi];
                for i in base..base + p {
                    out[i] = if multiply { xd[i] * sv } else { xd[i] + sv };
                }
            }
        }
        self.push(
            Tensor::from_vec(&xs, out),
            vec![x, s],
            Box::new(move |g, ins, _| {
                let gd = g.data();
                let mut ds = vec![T::zero(); f];
                let dx = if multiply {
                    let mut dx = Tensor::zeros(ins[0].shape());
                    for bi in 0..bsz {
                        for fi in 0..f {
                            let base = (bi * f + fi) * p;
                            let sv = ins[1].data()[fi];
                            for i in base..base + p {
                                dx.data_mut()[i] = gd[i] * sv;
                                ds[fi] += gd[i] * ins[0].data()[i];
                            }
                        }
                    }
                    dx
                } else {
                    for bi in 0..bsz {
                        for fi in 0..f {
                            let base = (bi * f + fi) * p;
                            for i in base..base + p {
                                ds[fi] += gd[i];
                            }
                        }
                    }
                    g.clone()
                };
                vec![dx, Tensor::from_vec(&[f], ds)]
            }),
        )
    }

    /// Linear interpolation of the last axis to `out_len`. Endpoints map
    /// exactly onto endpoints.
    pub fn linear_interp_last(&mut self, x: Var, out_len: usize) -> Var {
        let xs = self.shape(x).to_vec();
        let l_in = *xs.last().expect("interp needs rank >= 1");
        assert!(l_in >= 1 && out_len >= 1, "interp with empty axis");
        let rows: usize = xs[..xs.len() - 1].iter().product();

        // (left index, right index, right weight) per output sample
        let taps: Vec<(usize, usize, T)> = (0..out_len)
            .map(|j| {
                if out_len == 1 || l_in == 1 {
                    return (0, 0, T::zero());
                }
                let pos = lit::<T>(j as f64) * lit::<T>((l_in - 1) as f64)
                    / lit::<T>((out_len - 1) as f64);
                let left = pos.floor().to_f64().unwrap() as usize;
                let left = left.min(l_in - 2);
                let w = pos - lit(left as f64);
                (left, left + 1, w)
            })
            .collect();

        let xd = self.value(x).data();
        let mut out = vec![T::zero(); rows * out_len];
        for r in 0..rows {
            let xrow = &xd[r * l_in..(r + 1) * l_in];
            for (j, &(li, ri, w)) in taps.iter().enumerate() {
                out[r * out_len + j] = xrow[li] * (T::one() - w) + xrow[ri] * w;
            }
        }
        let mut out_shape = xs[..xs.len() - 1].to_vec();
        out_shape.push(out_len);
        self.push(
            Tensor::from_vec(&out_shape, out),
            vec![x],
            Box::new(move |g, ins, _| {
                let mut dx = Tensor::zeros(ins[0].shape());
                let dxd = dx.data_mut();
                for r in 0..rows {
                    for (j, &(li, ri, w)) in taps.iter().enumerate() {
                        let gv = g.data()[r * out_len + j];
                        dxd[r * l_in + li] += gv * (T::one() - w);
                        dxd[r * l_in + ri] += gv * w;
                    }
                }
                vec![dx]
            }),
        )
    }

    /// Slice `x: [B, L]` into overlapping frames `[B, F, win]` with hop
    /// `hop`; F = (L - win)/hop + 1 (only complete frames).
    pub fn frame_signal(&mut self, x: Var, win: usize, hop: usize) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 2, "frame_signal input must be [B, L]");
        let (bsz, l) = (xs[0], xs[1]);
        assert!(l >= win, "signal shorter than one frame");
        let frames = (l - win) / hop + 1;
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); bsz * frames * win];
        for bi in 0..bsz {
            for fi in 0..frames {
                let src = bi * l + fi * hop;
                let dst = (bi * frames + fi) * win;
                out[dst..dst + win].copy_from_slice(&xd[src..src + win]);
            }
        }
        self.push(
            Tensor::from_vec(&[bsz, frames, win], out),
            vec![x],
            Box::new(move |g, ins, _| {
                let mut dx = Tensor::zeros(ins[0].shape());
                let dxd = dx.data_mut();
                for bi in 0..bsz {
                    for fi in 0..frames {
                        let dst = bi * l + fi * hop;
                        let src = (bi * frames + fi) * win;
                        for k in 0..win {
                            dxd[dst + k] += g.data()[src + k];
                        }
                    }
                }
                vec![dx]
            }),
        )
    }

    /// Split `x: [B, F, L]` into 50 %-style overlapped segments
    /// `[B, F, S, P]` with hop `hop`, zero padding the tail.
    pub fn segment(&mut self, x: Var, seg_len: usize, hop: usize) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 3, "segment input must be [B, F, L]");
        let (bsz, f, l) = (xs[0], xs[1], xs[2]);
        assert!(l >= seg_len, "segment length exceeds axis");
        let segs = 1 + (l - seg_len).div_ceil(hop);
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); bsz * f * segs * seg_len];
        for bi in 0..bsz {
            for fi in 0..f {
                let xrow = &xd[(bi * f + fi) * l..(bi * f + fi + 1) * l];
                for si in 0..segs {
                    let start = si * hop;
                    let dst = ((bi * f + fi) * segs + si) * seg_len;
                    for k in 0..seg_len {
                        if start + k < l {
                            out[dst + k] = xrow[start + k];
                        }
                    }
                }
            }
        }
        self.push(
            Tensor::from_vec(&[bsz, f, segs, seg_len], out),
            vec![x],
            Box::new(move |g, ins, _| {
                let mut dx = Tensor::zeros(ins[0].shape());
                let dxd = dx.data_mut();
                for bi in 0..bsz {
                    for fi in 0..f {
                        for si in 0..segs {
                            let start = si * hop;
                            let src = ((bi * f + fi) * segs + si) * seg_len;
                            for k in 0..seg_len {
                                if start + k < l {
                                    dxd[(bi * f + fi) * l + start + k] += g.data()[src + k];
                                }
                            }
                        }
                    }
                }
                vec![dx]
            }),
        )
    }

    /// Overlap-add of segments `[B, F, S, P]` back to `[B, F, out_len]`,
    /// dividing by the per-position overlap count so that
    /// `overlap_add_mean(segment(x)) == x`.
    pub fn overlap_add_mean(&mut self, y: Var, hop: usize, out_len: usize) -> Var {
        let ys = self.shape(y).to_vec();
        assert_eq!(ys.len(), 4, "overlap_add input must be [B, F, S, P]");
        let (bsz, f, segs, p) = (ys[0], ys[1], ys[2], ys[3]);
        let mut counts = vec![T::zero(); out_len];
        for si in 0..segs {
            for k in 0..p {
                let pos = si * hop + k;
                if pos < out_len {
                    counts[pos] += T::one();
                }
            }
        }
        for c in &mut counts {
            assert!(*c > T::zero(), "overlap_add leaves a gap; bad hop/out_len");
        }

        let yd = self.value(y).data();
        let mut out = vec![T::zero(); bsz * f * out_len];
        for bi in 0..bsz {
            for fi in 0..f {
                let orow = &mut out[(bi * f + fi) * out_len..(bi * f + fi + 1) * out_len];
                for si in 0..segs {
                    let src = ((bi * f + fi) * segs + si) * p;
                    for k in 0..p {
                        let pos = si * hop + k;
                        if pos < out_len {
                            orow[pos] += yd[src + k];
                        }
                    }
                }
                for (o, c) in orow.iter_mut().zip(&counts) {
                    *o = *o / *c;
                }
            }
        }
        let counts_back = counts.clone();
        self.push(
            Tensor::from_vec(&[bsz, f, out_len], out),
            vec![y],
            Box::new(move |g, ins, _| {
                let mut dy = Tensor::zeros(ins[0].shape());
                let dyd = dy.data_mut();
                for bi in 0..bsz {
                    for fi in 0..f {
                        let grow = &g.data()[(bi * f + fi) * out_len..(bi * f + fi + 1) * out_len];
                        for si in 0..segs {
                            let dst = ((bi * f + fi) * segs + si) * p;
                            for k in 0..p {
                                let pos = si * hop + k;
                                if pos < out_len {
                                    dyd[dst + k] = grow[pos] / counts_back[pos];
                                }
                            }
                        }
                    }
                }
                vec![dy]
            }),
        )
    }

    /// Average-pool the segment axis of `[B, F, S, P]` by `factor`
    /// (last bin may be shorter).
    pub fn segment_pool(&mut self, x: Var, factor: usize) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 4, "segment_pool input must be [B, F, S, P]");
        let (bsz, f, segs, p) = (xs[0], xs[1], xs[2], xs[3]);
        assert!(factor >= 1);
        if factor == 1 {
            // still a node so callers can treat it uniformly
            let v = self.value(x).clone();
            return self.push(v, vec![x], Box::new(|g, _, _| vec![g.clone()]));
        }
        let s_out = segs.div_ceil(factor);
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); bsz * f * s_out * p];
        for bi in 0..bsz {
            for fi in 0..f {
                for so in 0..s_out {
                    let lo = so * factor;
                    let hi = (lo + factor).min(segs);
                    let dst = ((bi * f + fi) * s_out + so) * p;
                    let inv: T = T::one() / lit((hi - lo) as f64);
                    for si in lo..hi {
                        let src = ((bi * f + fi) * segs + si) * p;
                        for k in 0..p {
                            out[dst + k] += xd[src + k];
                        }
                    }
                    for o in &mut out[dst..dst + p] {
                        *o = *o * inv;
                    }
                }
            }
        }
        self.push(
            Tensor::from_vec(&[bsz, f, s_out, p], out),
            vec![x],
            Box::new(move |g, ins, _| {
                let mut dx = Tensor::zeros(ins[0].shape());
                let dxd = dx.data_mut();
                for bi in 0..bsz {
                    for fi in 0..f {
                        for so in 0..s_out {
                            let lo = so * factor;
                            let hi = (lo + factor).min(segs);
                            let src = ((bi * f + fi) * s_out + so) * p;
                            let inv: T = T::one() / lit((hi - lo) as f64);
                            for si in lo..hi {
                                let dst = ((bi * f + fi) * segs + si) * p;
                                for k in 0..p {
                                    dxd[dst + k] += g.data()[src + k] * inv;
                                }
                            }
                        }
                    }
                }
                vec![dx]
            }),
        )
    }

    /// Append a broadcast axis of length `p`: `[..] -> [.., p]`.
    pub fn broadcast_last(&mut self, x: Var, p: usize) -> Var {
        let xs = self.shape(x).to_vec();
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(xd.len() * p);
        for &v in xd {
            out.extend(std::iter::repeat_n(v, p));
        }
        let mut out_shape = xs;
        out_shape.push(p);
        self.push(
            Tensor::from_vec(&out_shape, out),
            vec![x],
            Box::new(move |g, ins, _| {
                let mut dx = Tensor::zeros(ins[0].shape());
                for (i, d) in dx.data_mut().iter_mut().enumerate() {
                    let mut acc = T::zero();
                    for &gv in &g.data()[i * p..(i + 1) * p] {
                        acc += gv;
                    }
                    *d = acc;
                }
                vec![dx]
            }),
        )
    }

    /// Nearest-neighbour upsampling of the segment axis back to `out_s`.
    pub fn segment_upsample(&mut self, x: Var, factor: usize, out_s: usize) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 4, "segment_upsample input must be [B, F, S', P]");
        let (bsz, f, s_in, p) = (xs[0], xs[1], xs[2], xs[3]);
        assert!(s_in * factor >= out_s, "upsample target too long");
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); bsz * f * out_s * p];
        for bi in 0..bsz {
            for fi in 0..f {
                for so in 0..out_s {
                    let si = (so / factor).min(s_in - 1);
                    let src = ((bi * f + fi) * s_in + si) * p;
                    let dst = ((bi * f + fi) * out_s + so) * p;
                    out[dst..dst + p].copy_from_slice(&xd[src..src + p]);
                }
            }
        }
        self.push(
            Tensor::from_vec(&[bsz, f, out_s, p], out),
            vec![x],
            Box::new(move |g, ins, _| {
                let mut dx = Tensor::zeros(ins[0].shape());
                let dxd = dx.data_mut();
                for bi in 0..bsz {
                    for fi in 0..f {
                        for so in 0..out_s {
                            let si = (so / factor).min(s_in - 1);
                            let dst = ((bi * f + fi) * s_in + si) * p;
                            let src = ((bi * f + fi) * out_s + so) * p;
                            for k in 0..p {
                                dxd[dst + k] += g.data()[src + k];
                            }
                        }
                    }
                }
                vec![dx]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::super::fdcheck::check_grads;
    use super::*;

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * 0.61).sin() + 0.2).collect()
    }

    #[test]
    fn permute_round_trip_is_identity() {
        let x = Tensor::from_vec(&[2, 3, 4], ramp(24));
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(x.clone());
        let p = tape.permute(xv, &[2, 0, 1]);
        let q = tape.permute(p, &[1, 2, 0]);
        assert_eq!(tape.value(q), &x);
    }

    #[test]
    fn shape_ops_backprop() {
        let x = Tensor::from_vec(&[2, 3, 4], ramp(24));
        check_grads(
            &[x],
            |tape, vars| {
                let p = tape.permute(vars[0], &[0, 2, 1]);
                let r = tape.reshape(p, &[2, 12]);
                let s = tape.slice_axis(r, 1, 3, 6);
                let sq = tape.square(s);
                tape.sum_all(sq)
            },
            1e-6,
        );
    }

    #[test]
    fn concat_splits_gradients() {
        let a = Tensor::from_vec(&[2, 2, 3], ramp(12));
        let b = Tensor::from_vec(&[2, 1, 3], ramp(6));
        check_grads(
            &[a, b],
            |tape, vars| {
                let c = tape.concat(&[vars[0], vars[1]], 1);
                assert_eq!(tape.shape(c), &[2, 3, 3]);
                let sq = tape.square(c);
                tape.sum_all(sq)
            },
            1e-6,
        );
    }

    #[test]
    fn broadcast_and_feature_ops_backprop() {
        let x = Tensor::from_vec(&[2, 3, 4], ramp(24));
        let p = Tensor::from_vec(&[3, 4], ramp(12));
        let s = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]);
        check_grads(
            &[x.clone(), p],
            |tape, vars| {
                let y = tape.add_broadcast_batch(vars[0], vars[1]);
                let sq = tape.square(y);
                tape.sum_all(sq)
            },
            1e-6,
        );
        check_grads(
            &[x.clone(), s.clone()],
            |tape, vars| {
                let y = tape.mul_feature(vars[0], vars[1]);
                let sq = tape.square(y);
                tape.sum_all(sq)
            },
            1e-6,
        );
        check_grads(
            &[x, s],
            |tape, vars| {
                let y = tape.add_feature(vars[0], vars[1]);
                let sq = tape.square(y);
                tape.sum_all(sq)
            },
            1e-6,
        );
    }

    #[test]
    fn interp_endpoints_are_exact() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_vec(&[1, 1, 4], vec![1.0, 5.0, -2.0, 3.0]));
        let y = tape.linear_interp_last(x, 7);
        let yd = tape.value(y).data();
        assert_eq!(yd[0], 1.0);
        assert_eq!(yd[6], 3.0);
        // midpoint between first two input samples
        assert!((yd[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn interp_backprops() {
        let x = Tensor::from_vec(&[2, 2, 5], ramp(20));
        check_grads(
            &[x],
            |tape, vars| {
                let up = tape.linear_interp_last(vars[0], 9);
                let down = tape.linear_interp_last(up, 3);
                let sq = tape.square(down);
                tape.sum_all(sq)
            },
            1e-6,
        );
    }

    #[test]
    fn frame_and_segment_ops_backprop() {
        let x = Tensor::from_vec(&[2, 10], ramp(20));
        check_grads(
            &[x],
            |tape, vars| {
                let f = tape.frame_signal(vars[0], 4, 2);
                assert_eq!(tape.shape(f), &[2, 4, 4]);
                let sq = tape.square(f);
                tape.sum_all(sq)
            },
            1e-6,
        );
        let x = Tensor::from_vec(&[1, 2, 10], ramp(20));
        check_grads(
            &[x],
            |tape, vars| {
                let seg = tape.segment(vars[0], 4, 2);
                let pooled = tape.segment_pool(seg, 2);
                let segs = tape.shape(seg)[2];
                let up = tape.segment_upsample(pooled, 2, segs);
                let back = tape.overlap_add_mean(up, 2, 10);
                let sq = tape.square(back);
                tape.sum_all(sq)
            },
            1e-6,
        );
    }

    #[test]
    fn overlap_add_mean_inverts_segment() {
        let x = Tensor::from_vec(&[1, 2, 11], ramp(22));
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(x.clone());
        let seg = tape.segment(xv, 4, 2);
        let back = tape.overlap_add_mean(seg, 2, 11);
        for (a, b) in tape.value(back).data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
