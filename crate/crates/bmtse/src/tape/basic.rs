//! Elementwise ops, scalar ops, activations, and reductions.

use super::{Tape, Var};
use crate::tensor::{lit, zip_map, Scalar, Tensor};

impl<T: Scalar> Tape<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(v, vec![a, b], Box::new(|g, _, _| vec![g.clone(), g.clone()]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.push(
            v,
            vec![a, b],
            Box::new(|g, _, _| vec![g.clone(), g.map(|x| -x)]),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(
            v,
            vec![a, b],
            Box::new(|g, ins, _| {
                vec![zip_map(g, ins[1], |gi, y| gi * y), zip_map(g, ins[0], |gi, x| gi * x)]
            }),
        )
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = zip_map(self.value(a), self.value(b), |x, y| x / y);
        self.push(
            v,
            vec![a, b],
            Box::new(|g, ins, out| {
                let da = zip_map(g, ins[1], |gi, y| gi / y);
                // d(a/b)/db = -a/b^2 = -out/b
                let mut db = zip_map(out, ins[1], |o, y| -o / y);
                for (d, gi) in db.data_mut().iter_mut().zip(g.data()) {
                    *d = *d * *gi;
                }
                vec![da, db]
            }),
        )
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        self.push(v, vec![a], Box::new(|g, _, _| vec![g.map(|x| -x)]))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, vec![a], Box::new(|g, _, _| vec![g.clone()]))
    }

    pub fn mul_scalar(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, vec![a], Box::new(move |g, _, _| vec![g.map(|x| x * c)]))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(
            v,
            vec![a],
            Box::new(|g, ins, _| vec![zip_map(g, ins[0], |gi, x| gi * x * lit(2.0))]),
        )
    }

    /// Elementwise square root. Inputs must stay strictly positive.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.sqrt());
        self.push(
            v,
            vec![a],
            Box::new(|g, _, out| vec![zip_map(g, out, |gi, s| gi / (s * lit(2.0)))]),
        )
    }

    /// Natural log; inputs must be strictly positive.
    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.ln());
        self.push(
            v,
            vec![a],
            Box::new(|g, ins, _| vec![zip_map(g, ins[0], |gi, x| gi / x)]),
        )
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.exp());
        self.push(
            v,
            vec![a],
            Box::new(|g, _, out| vec![zip_map(g, out, |gi, e| gi * e)]),
        )
    }

    /// |x| with sign subgradient (0 at the kink).
    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.abs());
        self.push(
            v,
            vec![a],
            Box::new(|g, ins, _| {
                vec![zip_map(g, ins[0], |gi, x| {
                    if x > T::zero() {
                        gi
                    } else if x < T::zero() {
                        -gi
                    } else {
                        T::zero()
                    }
                })]
            }),
        )
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(T::zero()));
        self.push(
            v,
            vec![a],
            Box::new(|g, ins, _| {
                vec![zip_map(g, ins[0], |gi, x| if x > T::zero() { gi } else { T::zero() })]
            }),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid_scalar);
        self.push(
            v,
            vec![a],
            Box::new(|g, _, out| vec![zip_map(g, out, |gi, s| gi * s * (T::one() - s))]),
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu_scalar);
        self.push(
            v,
            vec![a],
            Box::new(|g, ins, _| vec![zip_map(g, ins[0], |gi, x| gi * gelu_grad_scalar(x))]),
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let mut acc = T::zero();
        for &x in self.value(a).data() {
            acc += x;
        }
        self.push(
            Tensor::scalar(acc),
            vec![a],
            Box::new(|g, ins, _| {
                let gi = g.item();
                vec![Tensor::filled(ins[0].shape(), gi)]
            }),
        )
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let s = self.sum_all(a);
        self.mul_scalar(s, T::one() / lit(n as f64))
    }

    /// Sum over the last axis: `[.., L] -> [..]`.
    pub fn sum_last(&mut self, a: Var) -> Var {
        let shape = self.shape(a).to_vec();
        assert!(!shape.is_empty(), "sum_last needs rank >= 1");
        let l = *shape.last().unwrap();
        let out_shape: Vec<usize> = shape[..shape.len() - 1].to_vec();
        let rows: usize = out_shape.iter().product();
        let mut out = vec![T::zero(); rows];
        let data = self.value(a).data();
        for (r, slot) in out.iter_mut().enumerate() {
            let row = &data[r * l..(r + 1) * l];
            let mut acc = T::zero();
            for &x in row {
                acc += x;
            }
            *slot = acc;
        }
        self.push(
            Tensor::from_vec(&out_shape, out),
            vec![a],
            Box::new(move |g, ins, _| {
                let mut d = Tensor::zeros(ins[0].shape());
                for (r, &gi) in g.data().iter().enumerate() {
                    for slot in &mut d.data_mut()[r * l..(r + 1) * l] {
                        *slot = gi;
                    }
                }
                vec![d]
            }),
        )
    }

    /// Mean over the last axis.
    pub fn mean_last(&mut self, a: Var) -> Var {
        let l = *self.shape(a).last().expect("mean_last needs rank >= 1");
        let s = self.sum_last(a);
        self.mul_scalar(s, T::one() / lit(l as f64))
    }

    /// Multiply each length-L row of `x: [.., L]` by the matching scalar
    /// from `s: [..]`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let ss = self.shape(s).to_vec();
        assert_eq!(&xs[..xs.len() - 1], &ss[..], "scale_rows shape mismatch");
        let l = *xs.last().unwrap();
        let xd = self.value(x).data();
        let sd = self.value(s).data();
        let mut out = vec![T::zero(); xd.len()];
        for r in 0..sd.len() {
            let sc = sd[r];
            for (o, &xi) in out[r * l..(r + 1) * l].iter_mut().zip(&xd[r * l..(r + 1) * l]) {
                *o = xi * sc;
            }
        }
        self.push(
            Tensor::from_vec(&xs, out),
            vec![x, s],
            Box::new(move |g, ins, _| {
                let xv = ins[0];
                let sv = ins[1];
                let mut dx = Tensor::zeros(xv.shape());
                let mut ds = Tensor::zeros(sv.shape());
                for r in 0..sv.len() {
                    let sc = sv.data()[r];
                    let mut acc = T::zero();
                    for i in r * l..(r + 1) * l {
                        dx.data_mut()[i] = g.data()[i] * sc;
                        acc += g.data()[i] * xv.data()[i];
                    }
                    ds.data_mut()[r] = acc;
                }
                vec![dx, ds]
            }),
        )
    }
}

pub(crate) fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub(crate) fn gelu_scalar<T: Scalar>(x: T) -> T {
    let c: T = lit(0.7978845608028654); // sqrt(2/pi)
    let a: T = lit(0.044715);
    let u = c * (x + a * x * x * x);
    lit::<T>(0.5) * x * (T::one() + u.tanh())
}

pub(crate) fn gelu_grad_scalar<T: Scalar>(x: T) -> T {
    let c: T = lit(0.7978845608028654);
    let a: T = lit(0.044715);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + lit::<T>(3.0) * a * x * x);
    lit::<T>(0.5) * (T::one() + t) + lit::<T>(0.5) * x * (T::one() - t * t) * du
}

#[cfg(test)]
mod tests {
    use super::super::fdcheck::check_grads;
    use super::*;
    use crate::tensor::Tensor;

    fn t(v: Vec<f64>) -> Tensor<f64> {
        let n = v.len();
        Tensor::from_vec(&[n], v)
    }

    #[test]
    fn elementwise_grads_match_finite_differences() {
        let a = t(vec![0.5, -1.2, 2.0, 0.3]);
        let b = t(vec![1.5, 0.7, -0.4, 2.2]);
        check_grads(
            &[a, b],
            |tape, vars| {
                let m = tape.mul(vars[0], vars[1]);
                let d = tape.div(m, vars[1]);
                let s = tape.sub(d, vars[0]);
                let q = tape.add(s, m);
                tape.sum_all(q)
            },
            1e-6,
        );
    }

    #[test]
    fn activation_grads_match_finite_differences() {
        let a = t(vec![0.5, -1.2, 2.0, 0.3, -0.8]);
        check_grads(
            &[a],
            |tape, vars| {
                let g = tape.gelu(vars[0]);
                let s = tape.sigmoid(g);
                let e = tape.exp(s);
                let sq = tape.square(e);
                let sh = tape.add_scalar(sq, 2.5);
                let ln = tape.ln(sh);
                let r = tape.sqrt(ln);
                tape.mean_all(r)
            },
            1e-5,
        );
    }

    #[test]
    fn rowwise_grads_match_finite_differences() {
        let x = Tensor::from_vec(&[2, 3], vec![0.5, -1.2, 2.0, 0.3, 1.1, -0.7]);
        let s = Tensor::from_vec(&[2], vec![1.3, -0.4]);
        check_grads(
            &[x, s],
            |tape, vars| {
                let scaled = tape.scale_rows(vars[0], vars[1]);
                let sums = tape.sum_last(scaled);
                let sq = tape.square(sums);
                tape.sum_all(sq)
            },
            1e-6,
        );
    }

    #[test]
    fn gelu_is_zero_at_zero() {
        assert_eq!(gelu_scalar(0.0f64), 0.0);
    }

    #[test]
    fn relu_and_abs_grads_away_from_kink() {
        let a = t(vec![0.5, -1.2, 2.0]);
        check_grads(
            &[a.clone()],
            |tape, vars| {
                let r = tape.relu(vars[0]);
                tape.sum_all(r)
            },
            1e-6,
        );
        check_grads(
            &[a],
            |tape, vars| {
                let r = tape.abs(vars[0]);
                tape.sum_all(r)
            },
            1e-6,
        );
    }
}
