use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::element::Element;
use crate::error::{AutogradError, Result};

/// NCHW extent of a tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const SCALAR: Shape = Shape { n: 1, c: 1, h: 1, w: 1 };

    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Elements in one (n, c) plane.
    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Dense row-major NCHW tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(AutogradError::InvalidArgument {
                op: "Tensor::from_vec",
                reason: format!("shape {shape} needs {} values, got {}", shape.numel(), data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor { shape, data: vec![T::zero(); shape.numel()] }
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Tensor { shape, data: vec![value; shape.numel()] }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: Shape::SCALAR, data: vec![value] }
    }

    /// Samples every entry from N(mean, std²).
    pub fn randn<R: Rng + ?Sized>(shape: Shape, mean: f64, std: f64, rng: &mut R) -> Self {
        let data = (0..shape.numel())
            .map(|_| T::from_f64(mean + std * standard_normal(rng)))
            .collect();
        Tensor { shape, data }
    }

    /// Uniform entries in `[lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(shape: Shape, lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..shape.numel())
            .map(|_| T::from_f64(lo + (hi - lo) * rng.random::<f64>()))
            .collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
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

    /// Single value of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {}", self.shape);
        self.data[0]
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        let s = self.shape;
        self.data[((n * s.c + c) * s.h + h) * s.w + w]
    }

    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Tensor::from_vec(shape, self.data)
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Splits the batch dimension into one tensor per sample.
    pub fn unbatch(&self) -> Vec<Tensor<T>> {
        let per = self.shape.numel() / self.shape.n.max(1);
        let one = Shape::new(1, self.shape.c, self.shape.h, self.shape.w);
        self.data
            .chunks(per.max(1))
            .take(self.shape.n)
            .map(|c| Tensor { shape: one, data: c.to_vec() })
            .collect()
    }

    /// Stacks same-shaped single-sample tensors along the batch dimension.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self> {
        let first = items.first().ok_or(AutogradError::InvalidArgument {
            op: "Tensor::stack",
            reason: "no tensors to stack".into(),
        })?;
        let s = first.shape;
        let mut data = Vec::with_capacity(s.numel() * items.len());
        for t in items {
            if t.shape != s {
                return Err(AutogradError::ShapeMismatch { op: "Tensor::stack", expected: s, got: t.shape });
            }
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor { shape: Shape::new(s.n * items.len(), s.c, s.h, s.w), data })
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn dot(&self, other: &Tensor<T>) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.as_f64() * b.as_f64()).sum()
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
