//! Dense `[batch][channel][time][freq]` tensors.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Floating-point type the network runs in.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shape in `(batch, channels, time, freq)` order.
pub type Shape = [usize; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "tensor of shape {shape:?} needs {} values, got {}",
                shape.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn frames(&self) -> usize {
        self.shape[2]
    }

    pub fn bins(&self) -> usize {
        self.shape[3]
    }

    /// Elements in one `(n, c)` plane.
    pub fn plane(&self) -> usize {
        self.shape[2] * self.shape[3]
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

    #[inline]
    pub fn index(&self, n: usize, c: usize, t: usize, f: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + t) * self.shape[3] + f
    }

    pub fn get(&self, n: usize, c: usize, t: usize, f: usize) -> T {
        self.data[self.index(n, c, t, f)]
    }

    /// The `(n, c)` plane as a `time × freq` slice.
    pub fn plane_slice(&self, n: usize, c: usize) -> &[T] {
        let p = self.plane();
        let start = (n * self.shape[1] + c) * p;
        &self.data[start..start + p]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| U::of(v.to_f64().expect("finite")))
                .collect(),
        }
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        if a.shape[0] != b.shape[0] || a.shape[2..] != b.shape[2..] {
            return Err(Error::Shape(format!(
                "cannot concatenate {:?} and {:?}",
                a.shape, b.shape
            )));
        }
        let [n, ca, t, f] = a.shape;
        let cb = b.shape[1];
        let p = t * f;
        let mut data = Vec::with_capacity(n * (ca + cb) * p);
        for i in 0..n {
            data.extend_from_slice(&a.data[i * ca * p..(i + 1) * ca * p]);
            data.extend_from_slice(&b.data[i * cb * p..(i + 1) * cb * p]);
        }
        Ok(Tensor {
            shape: [n, ca + cb, t, f],
            data,
        })
    }

    /// Splits along the channel axis after `first` channels.
    pub fn split_channels(&self, first: usize) -> (Tensor<T>, Tensor<T>) {
        let [n, c, t, f] = self.shape;
        let p = t * f;
        let mut a = Vec::with_capacity(n * first * p);
        let mut b = Vec::with_capacity(n * (c - first) * p);
        for i in 0..n {
            let base = i * c * p;
            a.extend_from_slice(&self.data[base..base + first * p]);
            b.extend_from_slice(&self.data[base + first * p..base + c * p]);
        }
        (
            Tensor {
                shape: [n, first, t, f],
                data: a,
            },
            Tensor {
                shape: [n, c - first, t, f],
                data: b,
            },
        )
    }

    /// Stacks single-sample tensors into a batch.
    pub fn stack(items: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("cannot stack zero tensors".into()))?;
        let [_, c, t, f] = first.shape;
        let mut n = 0;
        let mut data = Vec::with_capacity(items.len() * first.data.len());
        for it in items {
            if it.shape[1..] != first.shape[1..] {
                return Err(Error::Shape(format!(
                    "cannot stack {:?} with {:?}",
                    it.shape, first.shape
                )));
            }
            n += it.shape[0];
            data.extend_from_slice(&it.data);
        }
        Ok(Tensor {
            shape: [n, c, t, f],
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_split_round_trip() {
        let a = Tensor::from_vec([2, 1, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        let b = Tensor::from_vec([2, 2, 2, 2], (100..116).map(f64::from).collect()).unwrap();
        let c = Tensor::concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), [2, 3, 2, 2]);
        assert_eq!(c.get(1, 0, 1, 1), 7.0);
        assert_eq!(c.get(1, 1, 0, 0), 108.0);
        let (x, y) = c.split_channels(1);
        assert_eq!(x, a);
        assert_eq!(y, b);
    }

    #[test]
    fn shape_errors() {
        assert!(Tensor::<f32>::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
        let a = Tensor::<f32>::zeros([1, 1, 2, 2]);
        let b = Tensor::<f32>::zeros([1, 1, 2, 3]);
        assert!(Tensor::concat_channels(&a, &b).is_err());
        assert!(Tensor::stack(&[a, b]).is_err());
    }
}
