//! Dense row-major tensors over a generic real scalar.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar type usable by the differentiation engine.
///
/// Training runs in `f32`; gradient checks run in `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("scalar conversion")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar conversion")
    }

    /// `C ← A·B + beta·C` for an `m×k` by `k×n` product over strided views
    /// (row stride, column stride) of the given buffers.
    fn gemm(m: usize, k: usize, n: usize, a: Mat<Self>, b: Mat<Self>, beta: Self, c: MatMut<Self>);
}

/// Read-only strided matrix view: `(data, row stride, column stride)`.
pub type Mat<'a, T> = (&'a [T], usize, usize);
/// Writable strided matrix view.
pub type MatMut<'a, T> = (&'a mut [T], usize, usize);

fn check_view(len: usize, rows: usize, cols: usize, rs: usize, cs: usize) {
    if rows > 0 && cols > 0 {
        assert!((rows - 1) * rs + (cols - 1) * cs < len, "matrix view exceeds its buffer");
    }
}

macro_rules! gemm_impl {
    ($t:ty, $f:path) => {
        impl Scalar for $t {
            fn gemm(m: usize, k: usize, n: usize, a: Mat<Self>, b: Mat<Self>, beta: Self, c: MatMut<Self>) {
                check_view(a.0.len(), m, k, a.1, a.2);
                check_view(b.0.len(), k, n, b.1, b.2);
                check_view(c.0.len(), m, n, c.1, c.2);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: all three views were bounds-checked above and `c`
                // is exclusively borrowed.
                unsafe {
                    $f(
                        m, k, n, 1.0,
                        a.0.as_ptr(), a.1 as isize, a.2 as isize,
                        b.0.as_ptr(), b.1 as isize, b.2 as isize,
                        beta,
                        c.0.as_mut_ptr(), c.1 as isize, c.2 as isize,
                    );
                }
            }
        }
    };
}

gemm_impl!(f32, matrixmultiply::sgemm);
gemm_impl!(f64, matrixmultiply::dgemm);

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor shape {shape:?} does not match data length {}",
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor { shape, data: vec![T::zero(); len] }
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let len = shape.iter().product();
        Tensor { shape, data: vec![value; len] }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> T) -> Self {
        let len: usize = shape.iter().product();
        let data = (0..len).map(&mut f).collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn reshaped(mut self, shape: Vec<usize>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len(), "reshape to {shape:?}");
        self.shape = shape;
        self
    }

    /// Row-major linear offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len());
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            assert!(i < n, "index {index:?} out of bounds for {:?}", self.shape);
            acc * n + i
        })
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::of(x.as_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> T {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_row_major() {
        let t = Tensor::<f32>::from_fn(vec![2, 3, 4], |i| i as f32);
        assert_eq!(t.get(&[1, 2, 3]), 23.0);
        assert_eq!(t.offset(&[0, 1, 0]), 4);
    }

    #[test]
    #[should_panic]
    fn mismatched_shape_panics() {
        let _ = Tensor::<f64>::new(vec![2, 2], vec![0.0; 3]);
    }
}
