//! Convolutions, pooling, normalization, softmax, and cross-entropy.

use super::{Tape, Var};
use crate::tensor::{lit, Scalar, Tensor};

impl<T: Scalar> Tape<T> {
    /// 1-D convolution (cross-correlation) over the last axis.
    /// `x: [B, Cin, T]`, `w: [Cout, Cin, K]`, zero padding on both sides.
    /// Output `[B, Cout, (T + 2*pad - K)/stride + 1]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(xs.len(), 3, "conv1d input must be [B, Cin, T]");
        assert_eq!(ws.len(), 3, "conv1d weight must be [Cout, Cin, K]");
        let (bsz, cin, t) = (xs[0], xs[1], xs[2]);
        let (cout, wcin, k) = (ws[0], ws[1], ws[2]);
        assert_eq!(cin, wcin, "conv1d channel mismatch");
        assert!(t + 2 * pad >= k, "conv1d: input shorter than kernel");
        let tout = (t + 2 * pad - k) / stride + 1;

        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let mut out = vec![T::zero(); bsz * cout * tout];
        if let Some(bv) = b {
            let bd = self.value(bv).data();
            for bi in 0..bsz {
                for co in 0..cout {
                    let orow = &mut out[(bi * cout + co) * tout..(bi * cout + co + 1) * tout];
                    for o in orow.iter_mut() {
                        *o = bd[co];
                    }
                }
            }
        }
        for bi in 0..bsz {
            for co in 0..cout {
                let orow = &mut out[(bi * cout + co) * tout..(bi * cout + co + 1) * tout];
                for ci in 0..cin {
                    let xrow = &xd[(bi * cin + ci) * t..(bi * cin + ci + 1) * t];
                    let wrow = &wd[(co * cin + ci) * k..(co * cin + ci + 1) * k];
                    for (ti, o) in orow.iter_mut().enumerate() {
                        let start = ti * stride;
                        let mut acc = T::zero();
                        for (ki, &wv) in wrow.iter().enumerate() {
                            let pos = start + ki;
                            if pos >= pad && pos - pad < t {
                                acc += wv * xrow[pos - pad];
                            }
                        }
                        *o += acc;
                    }
                }
            }
        }

        let mut parents = vec![x, w];
        if let Some(bv) = b {
            parents.push(bv);
        }
        let has_bias = b.is_some();
        self.push(
            Tensor::from_vec(&[bsz, cout, tout], out),
            parents,
            Box::new(move |g, ins, _| {
                let xv = ins[0];
                let wv = ins[1];
                let gd = g.data();
                let mut dx = Tensor::zeros(xv.shape());
                let mut dw = Tensor::zeros(wv.shape());
                {
                    let dxd = dx.data_mut();
                    let dwd = dw.data_mut();
                    for bi in 0..bsz {
                        for co in 0..cout {
                            let grow = &gd[(bi * cout + co) * tout..(bi * cout + co + 1) * tout];
                            for ci in 0..cin {
                                let xrow = &xv.data()[(bi * cin + ci) * t..(bi * cin + ci + 1) * t];
                                let wrow = &wv.data()[(co * cin + ci) * k..(co * cin + ci + 1) * k];
                                let dxrow = &mut dxd[(bi * cin + ci) * t..(bi * cin + ci + 1) * t];
                                let dwrow = &mut dwd[(co * cin + ci) * k..(co * cin + ci + 1) * k];
                                for (ti, &gv) in grow.iter().enumerate() {
                                    let start = ti * stride;
                                    for ki in 0..k {
                                        let pos = start + ki;
                                        if pos >= pad && pos - pad < t {
                                            dxrow[pos - pad] += wrow[ki] * gv;
                                            dwrow[ki] += xrow[pos - pad] * gv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                let mut grads = vec![dx, dw];
                if has_bias {
                    let mut db = vec![T::zero(); cout];
                    for bi in 0..bsz {
                        for (co, d) in db.iter_mut().enumerate() {
                            for &gv in &gd[(bi * cout + co) * tout..(bi * cout + co + 1) * tout] {
                                *d += gv;
                            }
                        }
                    }
                    grads.push(Tensor::from_vec(&[cout], db));
                }
                grads
            }),
        )
    }

    /// Transposed 1-D convolution (overlap-add synthesis).
    /// `x: [B, Cin, L]`, `w: [Cin, Cout, K]`; output `[B, Cout, (L-1)*stride + K]`.
    pub fn conv1d_transpose(&mut self, x: Var, w: Var, stride: usize) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(xs.len(), 3, "conv1d_transpose input must be [B, Cin, L]");
        assert_eq!(ws.len(), 3, "conv1d_transpose weight must be [Cin, Cout, K]");
        let (bsz, cin, l) = (xs[0], xs[1], xs[2]);
        let (wcin, cout, k) = (ws[0], ws[1], ws[2]);
        assert_eq!(cin, wcin, "conv1d_transpose channel mismatch");
        let tout = (l - 1) * stride + k;

        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let mut out = vec![T::zero(); bsz * cout * tout];
        for bi in 0..bsz {
            for ci in 0..cin {
                let xrow = &xd[(bi * cin + ci) * l..(bi * cin + ci + 1) * l];
                for co in 0..cout {
                    let wrow = &wd[(ci * cout + co) * k..(ci * cout + co + 1) * k];
                    let orow = &mut out[(bi * cout + co) * tout..(bi * cout + co + 1) * tout];
                    for (li, &xv) in xrow.iter().enumerate() {
                        let start = li * stride;
                        for (ki, &wv) in wrow.iter().enumerate() {
                            orow[start + ki] += xv * wv;
                        }
                    }
                }
            }
        }

        self.push(
            Tensor::from_vec(&[bsz, cout, tout], out),
            vec![x, w],
            Box::new(move |g, ins, _| {
                let xv = ins[0];
                let wv = ins[1];
                let gd = g.data();
                let mut dx = Tensor::zeros(xv.shape());
                let mut dw = Tensor::zeros(wv.shape());
                {
                    let dxd = dx.data_mut();
                    let dwd = dw.data_mut();
                    for bi in 0..bsz {
                        for ci in 0..cin {
                            let xrow = &xv.data()[(bi * cin + ci) * l..(bi * cin + ci + 1) * l];
                            let dxrow = &mut dxd[(bi * cin + ci) * l..(bi * cin + ci + 1) * l];
                            for co in 0..cout {
                                let wrow = &wv.data()[(ci * cout + co) * k..(ci * cout + co + 1) * k];
                                let dwrow =
                                    &mut dwd[(ci * cout + co) * k..(ci * cout + co + 1) * k];
                                let grow =
                                    &gd[(bi * cout + co) * tout..(bi * cout + co + 1) * tout];
                                for li in 0..l {
                                    let start = li * stride;
                                    let mut acc = T::zero();
                                    for ki in 0..k {
                                        acc += wrow[ki] * grow[start + ki];
                                        dwrow[ki] += xrow[li] * grow[start + ki];
                                    }
                                    dxrow[li] += acc;
                                }
                            }
                        }
                    }
                }
                vec![dx, dw]
            }),
        )
    }

    /// Non-overlapping / strided average pooling over the last axis.
    /// Requires `(T - window)` divisible by `stride`.
    pub fn avg_pool1d(&mut self, x: Var, window: usize, stride: usize) -> Var {
        let xs = self.shape(x).to_vec();
        let t = *xs.last().expect("avg_pool1d needs rank >= 1");
        assert!(t >= window, "avg_pool1d: window larger than axis");
        assert_eq!((t - window) % stride, 0, "avg_pool1d: stride does not tile axis");
        let tout = (t - window) / stride + 1;
        let rows: usize = xs[..xs.len() - 1].iter().product();
        let inv: T = T::one() / lit(window as f64);

        let xd = self.value(x).data();
        let mut out = vec![T::zero(); rows * tout];
        for r in 0..rows {
            let xrow = &xd[r * t..(r + 1) * t];
            for ti in 0..tout {
                let mut acc = T::zero();
                for &v in &xrow[ti * stride..ti * stride + window] {
                    acc += v;
                }
                out[r * tout + ti] = acc * inv;
            }
        }
        let mut out_shape = xs[..xs.len() - 1].to_vec();
        out_shape.push(tout);
        self.push(
            Tensor::from_vec(&out_shape, out),
            vec![x],
            Box::new(move |g, ins, _| {
                let mut dx = Tensor::zeros(ins[0].shape());
                let dxd = dx.data_mut();
                for r in 0..rows {
                    for ti in 0..tout {
                        let gv = g.data()[r * tout + ti] * inv;
                        for d in &mut dxd[r * t + ti * stride..r * t + ti * stride + window] {
                            *d += gv;
                        }
                    }
                }
                vec![dx]
            }),
        )
    }

    /// Stride-1 same-length average pooling over the last axis; window is
    /// centred and edge means divide by the number of in-range taps, so a
    /// constant input stays constant.
    pub fn avg_pool1d_same(&mut self, x: Var, window: usize) -> Var {
        assert!(window % 2 == 1, "avg_pool1d_same needs an odd window");
        let xs = self.shape(x).to_vec();
        let t = *xs.last().expect("avg_pool1d_same needs rank >= 1");
        let rows: usize = xs[..xs.len() - 1].iter().product();
        let half = window / 2;

        let xd = self.value(x).data();
        let mut out = vec![T::zero(); rows * t];
        for r in 0..rows {
            let xrow = &xd[r * t..(r + 1) * t];
            for ti in 0..t {
                let lo = ti.saturating_sub(half);
                let hi = (ti + half + 1).min(t);
                let mut acc = T::zero();
                for &v in &xrow[lo..hi] {
                    acc += v;
                }
                out[r * t + ti] = acc / lit((hi - lo) as f64);
            }
        }
        self.push(
            Tensor::from_vec(&xs, out),
            vec![x],
            Box::new(move |g, ins, _| {
                let mut dx = Tensor::zeros(ins[0].shape());
                let dxd = dx.data_mut();
                for r in 0..rows {
                    for ti in 0..t {
                        let lo = ti.saturating_sub(half);
                        let hi = (ti + half + 1).min(t);
                        let gv = g.data()[r * t + ti] / lit((hi - lo) as f64);
                        for d in &mut dxd[r * t + lo..r * t + hi] {
                            *d += gv;
                        }
                    }
                }
                vec![dx]
            }),
        )
    }

    /// Adaptive average pooling of the last axis to `out_len` bins
    /// (bin i spans [floor(i*T/out), ceil((i+1)*T/out))).
    pub fn adaptive_avg_pool1d(&mut self, x: Var, out_len: usize) -> Var {
        let xs = self.shape(x).to_vec();
        let t = *xs.last().expect("adaptive_avg_pool1d needs rank >= 1");
        assert!(out_len >= 1 && out_len <= t, "adaptive pool target out of range");
        let rows: usize = xs[..xs.len() - 1].iter().product();
        let bins: Vec<(usize, usize)> = (0..out_len)
            .map(|i| {
                let lo = i * t / out_len;
                let hi = ((i + 1) * t).div_ceil(out_len);
                (lo, hi)
            })
            .collect();

        let xd = self.value(x).data();
        let mut out = vec![T::zero(); rows * out_len];
        for r in 0..rows {
            let xrow = &xd[r * t..(r + 1) * t];
            for (i, &(lo, hi)) in bins.iter().enumerate() {
                let mut acc = T::zero();
                for &v in &xrow[lo..hi] {
                    acc += v;
                }
                out[r * out_len + i] = acc / lit((hi - lo) as f64);
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
                    for (i, &(lo, hi)) in bins.iter().enumerate() {
                        let gv = g.data()[r * out_len + i] / lit((hi - lo) as f64);
                        for d in &mut dxd[r * t + lo..r * t + hi] {
                            *d += gv;
                        }
                    }
                }
                vec![dx]
            }),
        )
    }

    /// Group normalization over `[B, F, P]` with `groups` dividing F.
    /// No affine part; gating layers provide scale/shift where needed.
    pub fn group_norm(&mut self, x: Var, groups: usize, eps: T) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 3, "group_norm input must be [B, F, P]");
        let (bsz, f, p) = (xs[0], xs[1], xs[2]);
        assert!(groups >= 1 && f % groups == 0, "group count must divide features");
        let gsize = (f / groups) * p;
        let inv_n: T = T::one() / lit(gsize as f64);

        let xd = self.value(x).data();
        let mut out = vec![T::zero(); xd.len()];
        let mut inv_stds = vec![T::zero(); bsz * groups];
        for bi in 0..bsz {
            for gi in 0..groups {
                let base = bi * f * p + gi * gsize;
                let chunk = &xd[base..base + gsize];
                let mut mean = T::zero();
                for &v in chunk {
                    mean += v;
                }
                mean = mean * inv_n;
                let mut var = T::zero();
                for &v in chunk {
                    let d = v - mean;
                    var += d * d;
                }
                var = var * inv_n;
                let inv_std = T::one() / (var + eps).sqrt();
                inv_stds[bi * groups + gi] = inv_std;
                for (o, &v) in out[base..base + gsize].iter_mut().zip(chunk) {
                    *o = (v - mean) * inv_std;
                }
            }
        }
        self.push(
            Tensor::from_vec(&xs, out),
            vec![x],
            Box::new(move |g, ins, outv| {
                let mut dx = Tensor::zeros(ins[0].shape());
                let dxd = dx.data_mut();
                let gd = g.data();
                let od = outv.data();
                for bi in 0..bsz {
                    for gi in 0..groups {
                        let base = bi * f * p + gi * gsize;
                        let inv_std = inv_stds[bi * groups + gi];
                        let mut gsum = T::zero();
                        let mut gxsum = T::zero();
                        for i in base..base + gsize {
                            gsum += gd[i];
                            gxsum += gd[i] * od[i];
                        }
                        let gmean = gsum * inv_n;
                        let gxmean = gxsum * inv_n;
                        for i in base..base + gsize {
                            dxd[i] = (gd[i] - gmean - od[i] * gxmean) * inv_std;
                        }
                    }
                }
                vec![dx]
            }),
        )
    }

    /// Layer normalization over the last axis with learnable scale/shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Var {
        let xs = self.shape(x).to_vec();
        let d = *xs.last().expect("layer_norm needs rank >= 1");
        assert_eq!(self.shape(gamma), &[d], "layer_norm gamma shape");
        assert_eq!(self.shape(beta), &[d], "layer_norm beta shape");
        let rows: usize = xs[..xs.len() - 1].iter().product();
        let inv_n: T = T::one() / lit(d as f64);

        let xd = self.value(x).data();
        let gad = self.value(gamma).data();
        let bed = self.value(beta).data();
        let mut out = vec![T::zero(); xd.len()];
        let mut hats = vec![T::zero(); xd.len()];
        let mut inv_stds = vec![T::zero(); rows];
        for r in 0..rows {
            let xrow = &xd[r * d..(r + 1) * d];
            let mut mean = T::zero();
            for &v in xrow {
                mean += v;
            }
            mean = mean * inv_n;
            let mut var = T::zero();
            for &v in xrow {
                let dv = v - mean;
                var += dv * dv;
            }
            var = var * inv_n;
            let inv_std = T::one() / (var + eps).sqrt();
            inv_stds[r] = inv_std;
            for i in 0..d {
                let h = (xrow[i] - mean) * inv_std;
                hats[r * d + i] = h;
                out[r * d + i] = h * gad[i] + bed[i];
            }
        }
        self.push(
            Tensor::from_vec(&xs, out),
            vec![x, gamma, beta],
            Box::new(move |g, ins, _| {
                let gd = g.data();
                let gav = ins[1];
                let mut dx = Tensor::zeros(ins[0].shape());
                let mut dgamma = vec![T::zero(); d];
                let mut dbeta = vec![T::zero(); d];
                let dxd = dx.data_mut();
                for r in 0..rows {
                    let inv_std = inv_stds[r];
                    let mut m1 = T::zero(); // mean of gamma*g
                    let mut m2 = T::zero(); // mean of gamma*g*hat
                    for i in 0..d {
                        let gg = gav.data()[i] * gd[r * d + i];
                        m1 += gg;
                        m2 += gg * hats[r * d + i];
                        dgamma[i] += gd[r * d + i] * hats[r * d + i];
                        dbeta[i] += gd[r * d + i];
                    }
                    m1 = m1 * inv_n;
                    m2 = m2 * inv_n;
                    for i in 0..d {
                        let gg = gav.data()[i] * gd[r * d + i];
                        dxd[r * d + i] = (gg - m1 - hats[r * d + i] * m2) * inv_std;
                    }
                }
                vec![
                    dx,
                    Tensor::from_vec(&[d], dgamma),
                    Tensor::from_vec(&[d], dbeta),
                ]
            }),
        )
    }

    /// Row-stable softmax over the last axis.
    pub fn softmax_last(&mut self, x: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let d = *xs.last().expect("softmax needs rank >= 1");
        let rows: usize = xs[..xs.len() - 1].iter().product();
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); xd.len()];
        for r in 0..rows {
            let xrow = &xd[r * d..(r + 1) * d];
            let mut m = xrow[0];
            for &v in xrow {
                m = m.max(v);
            }
            let mut z = T::zero();
            for (o, &v) in out[r * d..(r + 1) * d].iter_mut().zip(xrow) {
                *o = (v - m).exp();
                z += *o;
            }
            for o in &mut out[r * d..(r + 1) * d] {
                *o = *o / z;
            }
        }
        self.push(
            Tensor::from_vec(&xs, out),
            vec![x],
            Box::new(move |g, ins, outv| {
                let gd = g.data();
                let od = outv.data();
                let mut dx = Tensor::zeros(ins[0].shape());
                let dxd = dx.data_mut();
                for r in 0..rows {
                    let mut dot = T::zero();
                    for i in r * d..(r + 1) * d {
                        dot += gd[i] * od[i];
                    }
                    for i in r * d..(r + 1) * d {
                        dxd[i] = od[i] * (gd[i] - dot);
                    }
                }
                vec![dx]
            }),
        )
    }

    /// Mean cross-entropy of `logits: [B, C]` against integer labels,
    /// computed with the log-sum-exp stabilization.
    pub fn cross_entropy_mean(&mut self, logits: Var, labels: &[usize]) -> Var {
        let xs = self.shape(logits).to_vec();
        assert_eq!(xs.len(), 2, "cross_entropy logits must be [B, C]");
        let (bsz, c) = (xs[0], xs[1]);
        assert_eq!(labels.len(), bsz, "one label per batch row");
        for &lb in labels {
            assert!(lb < c, "label {lb} out of range for {c} classes");
        }
        let xd = self.value(logits).data();
        let mut total = T::zero();
        for (r, &lb) in labels.iter().enumerate() {
            let row = &xd[r * c..(r + 1) * c];
            let mut m = row[0];
            for &v in row {
                m = m.max(v);
            }
            let mut z = T::zero();
            for &v in row {
                z += (v - m).exp();
            }
            total += m + z.ln() - row[lb];
        }
        let inv_b: T = T::one() / lit(bsz as f64);
        let labels = labels.to_vec();
        self.push(
            Tensor::scalar(total * inv_b),
            vec![logits],
            Box::new(move |g, ins, _| {
                let gv = g.item() * inv_b;
                let xv = ins[0];
                let mut dx = Tensor::zeros(xv.shape());
                let dxd = dx.data_mut();
                for (r, &lb) in labels.iter().enumerate() {
                    let row = &xv.data()[r * c..(r + 1) * c];
                    let mut m = row[0];
                    for &v in row {
                        m = m.max(v);
                    }
                    let mut z = T::zero();
                    for &v in row {
                        z += (v - m).exp();
                    }
                    for i in 0..c {
                        let p = (row[i] - m).exp() / z;
                        let ind = if i == lb { T::one() } else { T::zero() };
                        dxd[r * c + i] = gv * (p - ind);
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

    fn wave(n: usize, f: f64) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * f).sin() * 0.7 + 0.1).collect()
    }

    #[test]
    fn conv1d_shape_and_grads() {
        let x = Tensor::from_vec(&[2, 2, 8], wave(32, 0.9));
        let w = Tensor::from_vec(&[3, 2, 3], wave(18, 0.4));
        let b = Tensor::from_vec(&[3], vec![0.1, -0.2, 0.05]);
        check_grads(
            &[x, w, b],
            |tape, vars| {
                let y = tape.conv1d(vars[0], vars[1], Some(vars[2]), 2, 1);
                assert_eq!(tape.shape(y), &[2, 3, 4]);
                let s = tape.square(y);
                tape.sum_all(s)
            },
            1e-6,
        );
    }

    #[test]
    fn conv1d_identity_kernel_passes_signal_through() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_vec(&[1, 1, 5], vec![1.0, 2.0, 3.0, 4.0, 5.0]));
        let w = tape.constant(Tensor::from_vec(&[1, 1, 1], vec![1.0]));
        let y = tape.conv1d(x, w, None, 1, 0);
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn conv1d_transpose_shape_and_grads() {
        let x = Tensor::from_vec(&[1, 2, 5], wave(10, 0.8));
        let w = Tensor::from_vec(&[2, 1, 4], wave(8, 0.3));
        check_grads(
            &[x, w],
            |tape, vars| {
                let y = tape.conv1d_transpose(vars[0], vars[1], 2);
                assert_eq!(tape.shape(y), &[1, 1, 12]);
                let s = tape.square(y);
                tape.sum_all(s)
            },
            1e-6,
        );
    }

    #[test]
    fn pooling_grads_match_finite_differences() {
        let x = Tensor::from_vec(&[2, 3, 8], wave(48, 0.7));
        check_grads(
            &[x.clone()],
            |tape, vars| {
                let y = tape.avg_pool1d(vars[0], 4, 4);
                assert_eq!(tape.shape(y), &[2, 3, 2]);
                let s = tape.square(y);
                tape.sum_all(s)
            },
            1e-6,
        );
        check_grads(
            &[x.clone()],
            |tape, vars| {
                let y = tape.avg_pool1d_same(vars[0], 3);
                assert_eq!(tape.shape(y), &[2, 3, 8]);
                let s = tape.square(y);
                tape.sum_all(s)
            },
            1e-6,
        );
        check_grads(
            &[x],
            |tape, vars| {
                let y = tape.adaptive_avg_pool1d(vars[0], 3);
                assert_eq!(tape.shape(y), &[2, 3, 3]);
                let s = tape.square(y);
                tape.sum_all(s)
            },
            1e-6,
        );
    }

    #[test]
    fn same_pooling_keeps_constants_constant() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::filled(&[1, 1, 7], 3.25));
        let y = tape.avg_pool1d_same(x, 5);
        for &v in tape.value(y).data() {
            assert!((v - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn group_norm_normalizes_and_backprops() {
        let x = Tensor::from_vec(&[2, 4, 3], wave(24, 1.1));
        check_grads(
            &[x.clone()],
            |tape, vars| {
                let y = tape.group_norm(vars[0], 2, 1e-6);
                let w = tape.gelu(y);
                let s = tape.square(w);
                tape.sum_all(s)
            },
            2e-5,
        );
        // each (batch, group) block is zero-mean unit-ish variance
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(x);
        let y = tape.group_norm(xv, 2, 1e-9);
        let yd = tape.value(y).data();
        let mean: f64 = yd[0..6].iter().sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-9);
        let var: f64 = yd[0..6].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0;
        assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn layer_norm_grads_match_finite_differences() {
        let x = Tensor::from_vec(&[3, 4], wave(12, 0.9));
        let gamma = Tensor::from_vec(&[4], vec![1.1, 0.9, 1.3, 0.7]);
        let beta = Tensor::from_vec(&[4], vec![0.1, -0.1, 0.0, 0.2]);
        check_grads(
            &[x, gamma, beta],
            |tape, vars| {
                let y = tape.layer_norm(vars[0], vars[1], vars[2], 1e-6);
                let s = tape.square(y);
                tape.sum_all(s)
            },
            2e-5,
        );
    }

    #[test]
    fn softmax_rows_sum_to_one_and_backprop() {
        let x = Tensor::from_vec(&[2, 3], vec![0.2, 1.4, -0.8, 2.0, 0.0, -1.0]);
        let mut tape = Tape::<f64>::new();
        let xv = tape.leaf(x.clone());
        let y = tape.softmax_last(xv);
        for r in 0..2 {
            let s: f64 = tape.value(y).data()[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        check_grads(
            &[x],
            |tape, vars| {
                let y = tape.softmax_last(vars[0]);
                let sq = tape.square(y);
                tape.sum_all(sq)
            },
            1e-6,
        );
    }

    #[test]
    fn cross_entropy_uniform_logits_equals_log_class_count() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.leaf(Tensor::zeros(&[1, 4]));
        let ce = tape.cross_entropy_mean(logits, &[2]);
        assert!((tape.value(ce).item() - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_grads_match_finite_differences() {
        let logits = Tensor::from_vec(&[3, 4], wave(12, 1.3));
        check_grads(
            &[logits],
            |tape, vars| tape.cross_entropy_mean(vars[0], &[0, 3, 1]),
            1e-6,
        );
    }
}
