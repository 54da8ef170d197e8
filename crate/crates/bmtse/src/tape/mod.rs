//! Reverse-mode autodiff tape.
//!
//! Every forward pass builds a fresh [`Tape`]; nodes are appended in
//! topological order, so the backward sweep is a single reverse walk.
//! Each op records a closure that maps the output gradient (plus the
//! parent and output values) to per-parent gradients. Parameters enter
//! as [`Tape::leaf`], fixed data as [`Tape::constant`].

mod basic;
mod linalg;
mod nn;
mod shape;
mod signal;

#[cfg(test)]
pub(crate) use basic::gelu_scalar;

use crate::tensor::{Scalar, Tensor};

/// Handle to a node on a tape. Only valid for the tape that produced it.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) type BackFn<T> =
    Box<dyn Fn(&Tensor<T>, &[&Tensor<T>], &Tensor<T>) -> Vec<Tensor<T>>>;

struct Node<T: Scalar> {
    value: Tensor<T>,
    parents: Vec<Var>,
    backward: Option<BackFn<T>>,
    needs_grad: bool,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Trainable input: gradients are accumulated and kept for the caller.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Fixed input: no gradient is ever computed for it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, parents: Vec<Var>, backward: BackFn<T>) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value,
            parents,
            backward: Some(backward),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar root. Returns gradients for leaves
    /// (and for any node whose gradient was still pending when reached).
    pub fn backward(&self, root: Var) -> Gradients<T> {
        assert_eq!(
            self.nodes[root.0].value.len(),
            1,
            "backward root must be scalar, got shape {:?}",
            self.nodes[root.0].value.shape()
        );
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[root.0].needs_grad {
            return Gradients { grads };
        }
        grads[root.0] = Some(Tensor::filled(self.nodes[root.0].value.shape(), T::one()));

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if node.backward.is_none() {
                continue; // leaf or constant: keep accumulated gradient
            }
            let Some(grad_out) = grads[i].take() else {
                continue;
            };
            let back = node.backward.as_ref().unwrap();
            let parent_vals: Vec<&Tensor<T>> =
                node.parents.iter().map(|p| &self.nodes[p.0].value).collect();
            let parent_grads = back(&grad_out, &parent_vals, &node.value);
            assert_eq!(
                parent_grads.len(),
                node.parents.len(),
                "backward fn returned {} grads for {} parents",
                parent_grads.len(),
                node.parents.len()
            );
            for (p, pg) in node.parents.iter().zip(parent_grads) {
                if !self.nodes[p.0].needs_grad {
                    continue;
                }
                debug_assert_eq!(
                    pg.shape(),
                    self.nodes[p.0].value.shape(),
                    "gradient shape mismatch for node {}",
                    p.0
                );
                match &mut grads[p.0] {
                    Some(acc) => {
                        for (a, g) in acc.data_mut().iter_mut().zip(pg.data()) {
                            *a += *g;
                        }
                    }
                    slot => *slot = Some(pg),
                }
            }
        }
        Gradients { grads }
    }
}

pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn backward_through_shared_node_accumulates() {
        // f = sum(x * x) has grad 2x; the same var is used twice.
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]));
        let sq = tape.mul(x, x);
        let s = tape.sum_all(sq);
        let grads = tape.backward(s);
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]));
        let c = tape.constant(Tensor::from_vec(&[2], vec![3.0, 4.0]));
        let y = tape.mul(x, c);
        let s = tape.sum_all(y);
        let grads = tape.backward(s);
        assert_eq!(grads.get(x).unwrap().data(), &[3.0, 4.0]);
        assert!(grads.get(c).is_none());
    }

    #[test]
    #[should_panic]
    fn backward_requires_scalar_root() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]));
        let _ = tape.backward(x);
    }
}
