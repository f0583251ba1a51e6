use crate::blob::Record;
use crate::element::Element;
use crate::error::{AutogradError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// An ordered, named collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Element> Params<T> {
    pub fn new() -> Self {
        Params { names: Vec::new(), tensors: Vec::new() }
    }

    /// Appends a tensor and returns its position.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> usize {
        self.names.push(name.into());
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records every tensor on `tape` as a gradient-carrying leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Records every tensor as a constant; nothing flows back into them.
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.constant(t.clone())).collect()
    }

    /// Collects the gradients of vars produced by [`bind`](Params::bind).
    pub fn grads(&self, tape: &Tape<T>, vars: &[Var]) -> Vec<Tensor<T>> {
        self.tensors
            .iter()
            .zip(vars)
            .map(|(t, &v)| tape.grad(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    }

    /// FNV-1a over names, shapes and value bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (name, t) in self.names.iter().zip(&self.tensors) {
            eat(name.as_bytes());
            for d in t.shape().dims() {
                eat(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                eat(&v.as_f64().to_bits().to_le_bytes());
            }
        }
        h
    }

    pub fn to_records(&self, prefix: &str) -> Vec<Record> {
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(n, t)| (format!("{prefix}{n}"), t.cast()))
            .collect()
    }

    /// Overwrites values from records named `prefix + name`. Every
    /// parameter must be present with a matching shape.
    pub fn load_records(&mut self, prefix: &str, records: &[Record]) -> Result<()> {
        for (name, slot) in self.names.iter().zip(self.tensors.iter_mut()) {
            let key = format!("{prefix}{name}");
            let (_, t) = records
                .iter()
                .find(|(n, _)| *n == key)
                .ok_or_else(|| AutogradError::Blob(format!("missing tensor {key:?}")))?;
            if t.shape() != slot.shape() {
                return Err(AutogradError::ShapeMismatch { op: "load_records", expected: slot.shape(), got: t.shape() });
            }
            *slot = t.cast();
        }
        Ok(())
    }
}
