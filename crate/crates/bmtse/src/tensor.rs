//! Dense row-major tensors over `f32`/`f64`.
//!
//! Training runs in `f32`; the finite-difference gradient oracle runs the
//! same code in `f64`. Everything numeric is therefore generic over
//! [`Scalar`].

use num_traits::{Float, FromPrimitive, NumAssign};
use std::fmt::Debug;

pub trait Scalar: Float + FromPrimitive + NumAssign + Debug + Default + Send + Sync + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an `f64` literal into the active scalar type.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("scalar literal out of range")
}

/// Contiguous row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        let expect: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            expect,
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::filled(shape, T::zero())
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Value of a rank-0 or single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Self {
        let expect: usize = shape.iter().product();
        assert_eq!(self.len(), expect, "reshape {:?} -> {:?}", self.shape, shape);
        self.shape = shape.to_vec();
        self
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn to_f64(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| x.to_f64().unwrap()).collect(),
        }
    }

    pub fn from_f64(t: &Tensor<f64>) -> Self {
        Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&x| lit::<T>(x)).collect(),
        }
    }
}

/// Elementwise combination of two same-shape tensors.
pub fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    assert_eq!(
        a.shape(),
        b.shape(),
        "elementwise op on mismatched shapes {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
    let data = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::from_vec(a.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        let t = Tensor::from_vec(&[2, 3], vec![1.0f64; 6]);
        assert_eq!(t.shape(), &[2, 3]);
        assert_eq!(t.len(), 6);
    }

    #[test]
    #[should_panic]
    fn from_vec_rejects_bad_length() {
        let _ = Tensor::from_vec(&[2, 3], vec![1.0f64; 5]);
    }

    #[test]
    fn zip_map_applies_elementwise() {
        let a = Tensor::from_vec(&[3], vec![1.0f64, 2.0, 3.0]);
        let b = Tensor::from_vec(&[3], vec![10.0f64, 20.0, 30.0]);
        let c = zip_map(&a, &b, |x, y| x + y);
        assert_eq!(c.data(), &[11.0, 22.0, 33.0]);
    }

    #[test]
    fn f32_f64_round_trip_is_exact_for_f32_values() {
        let a = Tensor::from_vec(&[2], vec![0.1f32, -3.5]);
        let up = a.to_f64();
        let down = Tensor::<f32>::from_f64(&up);
        assert_eq!(a, down);
    }
}
