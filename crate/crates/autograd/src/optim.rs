use crate::blob::Record;
use crate::element::Element;
use crate::error::{AutogradError, Result};
use crate::params::Params;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. Moments are stored per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Element> Adam<T> {
    pub fn new(config: AdamConfig, params: &Params<T>) -> Self {
        let zeros = || params.tensors().iter().map(|t| vec![T::zero(); t.len()]).collect();
        Adam { config, step: 0, m: zeros(), v: zeros() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut Params<T>, grads: &[Tensor<T>]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(AutogradError::InvalidArgument {
                op: "adam_step",
                reason: format!("{} params, {} grads, {} moment slots", params.len(), grads.len(), self.m.len()),
            });
        }
        for (p, g) in params.tensors().iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(AutogradError::ShapeMismatch { op: "adam_step", expected: p.shape(), got: g.shape() });
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = T::from_f64(c.beta1);
        let b2 = T::from_f64(c.beta2);
        let one_b1 = T::from_f64(1.0 - c.beta1);
        let one_b2 = T::from_f64(1.0 - c.beta2);
        let corr1 = T::from_f64(1.0 - c.beta1.powi(t));
        let corr2 = T::from_f64(1.0 - c.beta2.powi(t));
        let lr = T::from_f64(c.lr);
        let eps = T::from_f64(c.eps);
        for ((p, g), (m, v)) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((w, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = b1 * *mv + one_b1 * gv;
                *vv = b2 * *vv + one_b2 * gv * gv;
                let mhat = *mv / corr1;
                let vhat = *vv / corr2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn to_records(&self, prefix: &str) -> Vec<Record> {
        let mut out = vec![(format!("{prefix}step"), Tensor::scalar(self.step as f32))];
        for (i, (m, v)) in self.m.iter().zip(&self.v).enumerate() {
            let shape = Shape::new(1, 1, 1, m.len());
            let cast = |xs: &[T]| xs.iter().map(|x| x.as_f64() as f32).collect::<Vec<f32>>();
            out.push((format!("{prefix}m/{i}"), Tensor::from_vec(shape, cast(m)).expect("moment shape")));
            out.push((format!("{prefix}v/{i}"), Tensor::from_vec(shape, cast(v)).expect("moment shape")));
        }
        out
    }

    pub fn load_records(&mut self, prefix: &str, records: &[Record]) -> Result<()> {
        let find = |key: String| {
            records
                .iter()
                .find(|(n, _)| *n == key)
                .map(|(_, t)| t)
                .ok_or(AutogradError::Blob(format!("missing optimizer tensor {key:?}")))
        };
        let step = find(format!("{prefix}step"))?.data().first().copied().unwrap_or(0.0);
        for i in 0..self.m.len() {
            for (slot, kind) in [(&mut self.m[i], "m"), (&mut self.v[i], "v")] {
                let t = find(format!("{prefix}{kind}/{i}"))?;
                if t.len() != slot.len() {
                    return Err(AutogradError::Blob(format!("optimizer slot {kind}/{i} has {} values, want {}", t.len(), slot.len())));
                }
                for (d, s) in slot.iter_mut().zip(t.data()) {
                    *d = T::from_f64(*s as f64);
                }
            }
        }
        self.step = step as u64;
        Ok(())
    }
}
