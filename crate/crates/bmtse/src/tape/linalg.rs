//! Dense linear maps and batched matrix products.

use super::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// C[g] = op(A[g]) * op(B[g]) for every batch index g, where `ta`/`tb`
/// transpose the per-batch matrices.
fn bmm_raw<T: Scalar>(
    a: &Tensor<T>,
    ta: bool,
    b: &Tensor<T>,
    tb: bool,
) -> Tensor<T> {
    assert_eq!(a.rank(), 3, "bmm lhs must be rank 3");
    assert_eq!(b.rank(), 3, "bmm rhs must be rank 3");
    let g = a.dim(0);
    assert_eq!(g, b.dim(0), "bmm batch mismatch");
    let (m, ka) = if ta { (a.dim(2), a.dim(1)) } else { (a.dim(1), a.dim(2)) };
    let (kb, n) = if tb { (b.dim(2), b.dim(1)) } else { (b.dim(1), b.dim(2)) };
    assert_eq!(ka, kb, "bmm inner dim mismatch: {ka} vs {kb}");
    let k = ka;

    let (ar, ac) = (a.dim(1), a.dim(2));
    let (br, bc) = (b.dim(1), b.dim(2));
    let mut out = vec![T::zero(); g * m * n];
    let ad = a.data();
    let bd = b.data();
    for gi in 0..g {
        let ab = &ad[gi * ar * ac..(gi + 1) * ar * ac];
        let bb = &bd[gi * br * bc..(gi + 1) * br * bc];
        let ob = &mut out[gi * m * n..(gi + 1) * m * n];
        match (ta, tb) {
            (false, false) => {
                for mi in 0..m {
                    let arow = &ab[mi * k..(mi + 1) * k];
                    let orow = &mut ob[mi * n..(mi + 1) * n];
                    for (ki, &av) in arow.iter().enumerate() {
                        let brow = &bb[ki * n..(ki + 1) * n];
                        for (o, &bv) in orow.iter_mut().zip(brow) {
                            *o += av * bv;
                        }
                    }
                }
            }
            (false, true) => {
                for mi in 0..m {
                    let arow = &ab[mi * k..(mi + 1) * k];
                    let orow = &mut ob[mi * n..(mi + 1) * n];
                    for (ni, o) in orow.iter_mut().enumerate() {
                        let brow = &bb[ni * k..(ni + 1) * k];
                        let mut acc = T::zero();
                        for (&av, &bv) in arow.iter().zip(brow) {
                            acc += av * bv;
                        }
                        *o = acc;
                    }
                }
            }
            (true, false) => {
                for ki in 0..k {
                    let arow = &ab[ki * m..(ki + 1) * m];
                    let brow = &bb[ki * n..(ki + 1) * n];
                    for (mi, &av) in arow.iter().enumerate() {
                        let orow = &mut ob[mi * n..(mi + 1) * n];
                        for (o, &bv) in orow.iter_mut().zip(brow) {
                            *o += av * bv;
                        }
                    }
                }
            }
            (true, true) => {
                for mi in 0..m {
                    for ni in 0..n {
                        let mut acc = T::zero();
                        for ki in 0..k {
                            acc += ab[ki * m + mi] * bb[ni * k + ki];
                        }
                        ob[mi * n + ni] = acc;
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[g, m, n], out)
}

impl<T: Scalar> Tape<T> {
    /// Batched matrix product with optional per-matrix transposes.
    pub fn bmm(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let v = bmm_raw(self.value(a), ta, self.value(b), tb);
        self.push(
            v,
            vec![a, b],
            Box::new(move |g, ins, _| {
                let (av, bv) = (ins[0], ins[1]);
                let da = if ta {
                    bmm_raw(bv, tb, g, true)
                } else {
                    bmm_raw(g, false, bv, !tb)
                };
                let db = if tb {
                    bmm_raw(g, true, av, ta)
                } else {
                    bmm_raw(av, !ta, g, false)
                };
                vec![da, db]
            }),
        )
    }

    /// Affine map over the last axis: `[.., K] x [K, N] (+ [N]) -> [.., N]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(ws.len(), 2, "linear weight must be rank 2");
        let k = *xs.last().expect("linear input needs rank >= 1");
        assert_eq!(k, ws[0], "linear: input width {} vs weight rows {}", k, ws[0]);
        let n = ws[1];
        let rows: usize = xs[..xs.len() - 1].iter().product();

        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let mut out = vec![T::zero(); rows * n];
        if let Some(bv) = b {
            let bd = self.value(bv).data();
            assert_eq!(bd.len(), n, "linear bias length");
            for r in 0..rows {
                out[r * n..(r + 1) * n].copy_from_slice(bd);
            }
        }
        for r in 0..rows {
            let xrow = &xd[r * k..(r + 1) * k];
            let orow = &mut out[r * n..(r + 1) * n];
            for (ki, &xv) in xrow.iter().enumerate() {
                let wrow = &wd[ki * n..(ki + 1) * n];
                for (o, &wv) in orow.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
        let mut out_shape = xs[..xs.len() - 1].to_vec();
        out_shape.push(n);

        let mut parents = vec![x, w];
        if let Some(bv) = b {
            parents.push(bv);
        }
        let has_bias = b.is_some();
        self.push(
            Tensor::from_vec(&out_shape, out),
            parents,
            Box::new(move |g, ins, _| {
                let xv = ins[0];
                let wv = ins[1];
                let gd = g.data();
                let mut dx = Tensor::zeros(xv.shape());
                let mut dw = Tensor::zeros(wv.shape());
                {
                    let dxd = dx.data_mut();
                    for r in 0..rows {
                        let grow = &gd[r * n..(r + 1) * n];
                        let xrow = &xv.data()[r * k..(r + 1) * k];
                        let dxrow = &mut dxd[r * k..(r + 1) * k];
                        for ki in 0..k {
                            let wrow = &wv.data()[ki * n..(ki + 1) * n];
                            let mut acc = T::zero();
                            for (&gv, &wvv) in grow.iter().zip(wrow) {
                                acc += gv * wvv;
                            }
                            dxrow[ki] = acc;
                        }
                        let dwd = dw.data_mut();
                        for (ki, &xvv) in xrow.iter().enumerate() {
                            let dwrow = &mut dwd[ki * n..(ki + 1) * n];
                            for (d, &gv) in dwrow.iter_mut().zip(grow) {
                                *d += xvv * gv;
                            }
                        }
                    }
                }
                let mut grads = vec![dx, dw];
                if has_bias {
                    let mut db = vec![T::zero(); n];
                    for r in 0..rows {
                        for (d, &gv) in db.iter_mut().zip(&gd[r * n..(r + 1) * n]) {
                            *d += gv;
                        }
                    }
                    grads.push(Tensor::from_vec(&[n], db));
                }
                grads
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::super::fdcheck::check_grads;
    use super::*;

    #[test]
    fn linear_matches_hand_result() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(&[1, 2], vec![1.0, 2.0]));
        let w = tape.leaf(Tensor::from_vec(&[2, 3], vec![1.0, 0.0, 2.0, 0.0, 1.0, 3.0]));
        let b = tape.leaf(Tensor::from_vec(&[3], vec![0.5, -0.5, 0.0]));
        let y = tape.linear(x, w, Some(b));
        assert_eq!(tape.value(y).data(), &[1.5, 1.5, 8.0]);
    }

    #[test]
    fn linear_grads_match_finite_differences() {
        let x = Tensor::from_vec(&[2, 3], vec![0.5, -1.0, 0.3, 1.2, 0.1, -0.7]);
        let w = Tensor::from_vec(&[3, 2], vec![0.2, -0.4, 1.0, 0.8, -0.6, 0.1]);
        let b = Tensor::from_vec(&[2], vec![0.1, -0.2]);
        check_grads(
            &[x, w, b],
            |tape, vars| {
                let y = tape.linear(vars[0], vars[1], Some(vars[2]));
                let s = tape.square(y);
                tape.sum_all(s)
            },
            1e-6,
        );
    }

    #[test]
    fn bmm_all_flag_combinations_match_finite_differences() {
        for &(ta, tb) in &[(false, false), (false, true), (true, false), (true, true)] {
            let ashape = if ta { [2, 4, 3] } else { [2, 3, 4] };
            let bshape = if tb { [2, 5, 4] } else { [2, 4, 5] };
            let a = Tensor::from_vec(
                &ashape,
                (0..24).map(|i| (i as f64 * 0.37).sin()).collect(),
            );
            let b = Tensor::from_vec(
                &bshape,
                (0..40).map(|i| (i as f64 * 0.21).cos()).collect(),
            );
            check_grads(
                &[a, b],
                move |tape, vars| {
                    let c = tape.bmm(vars[0], vars[1], ta, tb);
                    let s = tape.square(c);
                    tape.sum_all(s)
                },
                1e-6,
            );
        }
    }

    #[test]
    fn bmm_nt_is_row_dot_products() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let b = tape.leaf(Tensor::from_vec(&[1, 2, 2], vec![1.0, 1.0, 0.0, 2.0]));
        let c = tape.bmm(a, b, false, true);
        // rows of a dotted with rows of b
        assert_eq!(tape.value(c).data(), &[3.0, 4.0, 7.0, 8.0]);
    }
}
