use crate::error::{Error, Result};
use crate::Scalar;

/// A named, row-major matrix. Vectors are stored as `n x 1` tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Tensor {
            name: name.into(),
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(name: impl Into<String>, rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                context: "Tensor::from_vec",
                expected: format!("{}", rows * cols),
                got: format!("{}", data.len()),
            });
        }
        Ok(Tensor {
            name: name.into(),
            rows,
            cols,
            data,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut T {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    /// `y = self * x`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&w, &v)| acc + w * v)
            })
            .collect()
    }

    /// `out += self * x`.
    pub fn matvec_add(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o += self
                .row(r)
                .iter()
                .zip(x)
                .fold(T::zero(), |acc, (&w, &v)| acc + w * v);
        }
    }

    /// `out += self^T * y`.
    pub fn matvec_t_add(&self, y: &[T], out: &mut [T]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr == T::zero() {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
    }

    /// `self += a b^T`.
    pub fn add_outer(&mut self, a: &[T], b: &[T]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        let cols = self.cols;
        for (r, &ar) in a.iter().enumerate() {
            if ar == T::zero() {
                continue;
            }
            for (x, &bc) in self.data[r * cols..(r + 1) * cols].iter_mut().zip(b) {
                *x += ar * bc;
            }
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Tensor<T>) {
        debug_assert_eq!(self.shape(), other.shape());
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x += alpha * y;
        }
    }

    pub fn add_vec(&mut self, v: &[T]) {
        debug_assert_eq!(v.len(), self.data.len());
        for (x, &y) in self.data.iter_mut().zip(v) {
            *x += y;
        }
    }

    pub fn scale(&mut self, alpha: T) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().map(|&x| x * x).sum()
    }
}

/// Zero tensors with the same names and shapes as `params`.
pub fn zeros_like<T: Scalar>(params: &[Tensor<T>]) -> Vec<Tensor<T>> {
    params
        .iter()
        .map(|p| Tensor::zeros(p.name.clone(), p.rows, p.cols))
        .collect()
}

pub fn global_norm<T: Scalar>(tensors: &[Tensor<T>]) -> T {
    tensors.iter().map(Tensor::sum_squares).sum::<T>().sqrt()
}

pub fn scale_all<T: Scalar>(tensors: &mut [Tensor<T>], alpha: T) {
    tensors.iter_mut().for_each(|t| t.scale(alpha));
}
