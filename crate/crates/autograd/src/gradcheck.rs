//! Central finite-difference verification of tape gradients.
//!
//! Used by the test suites in both precisions: `f32` for the training
//! path and `f64` as the tighter verification mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::element::Element;
use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::{Shape, Tensor};

/// Step size and denominator floor for one precision.
#[derive(Clone, Copy, Debug)]
pub struct Settings {
    pub step: f64,
    /// Lower bound on the relative-error denominator, so gradients that are
    /// zero up to rounding do not divide by noise.
    pub floor: f64,
}

impl Settings {
    pub const F32: Settings = Settings { step: 1e-2, floor: 1e-1 };
    pub const F64: Settings = Settings { step: 1e-5, floor: 1e-6 };

    pub fn for_element<T: Element>() -> Settings {
        if T::NAME == "f64" {
            Settings::F64
        } else {
            Settings::F32
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Report {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// (input, element) of the worst entry.
    pub worst: (usize, usize),
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares reverse-mode gradients of the scalar `f(inputs)` with respect
/// to every entry of every input against central differences.
///
/// `f` must be deterministic: it is re-run twice per checked entry.
pub fn check<T, F>(inputs: &[Tensor<T>], settings: Settings, f: F) -> Result<Report>
where
    T: Element,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor<T>> = inputs
        .iter()
        .zip(&vars)
        .map(|(t, &v)| tape.grad(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |values: &[Tensor<T>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).item().as_f64())
    };

    let mut report = Report::default();
    let mut work: Vec<Tensor<T>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let orig = input.data()[j];
            work[i].data_mut()[j] = T::from_f64(orig.as_f64() + settings.step);
            let up = eval(&work)?;
            work[i].data_mut()[j] = T::from_f64(orig.as_f64() - settings.step);
            let down = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * settings.step);
            let a = analytic[i].data()[j].as_f64();
            let rel = relative_error(a, numeric, settings.floor);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (i, j);
            }
        }
    }
    Ok(report)
}

/// Worst relative error of one operator over several random points.
#[derive(Clone, Debug)]
pub struct OpResult {
    pub name: &'static str,
    pub points: usize,
    pub max_rel_error: f64,
}

fn randn<T: Element>(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor<T> {
    Tensor::randn(shape, 0.0, 1.0, rng)
}

/// Pushes entries at least `margin` away from zero so kinks (relu, |x|)
/// are not straddled by the finite difference.
fn off_kink<T: Element>(mut t: Tensor<T>, margin: f64) -> Tensor<T> {
    for v in t.data_mut() {
        let x = v.as_f64();
        if x.abs() < margin {
            *v = T::from_f64(if x < 0.0 { x - margin } else { x + margin });
        }
    }
    t
}

/// `sum(y * r) / sqrt(len)` for a fixed random `r`, reducing any tensor to
/// an O(1) scalar whose gradient exercises every output entry.
fn project<T: Element>(tape: &mut Tape<T>, y: Var, r: &Tensor<T>) -> Result<Var> {
    let k = T::from_f64(1.0 / (r.len() as f64).sqrt());
    let scaled = Tensor::from_vec(r.shape(), r.data().iter().map(|&v| v * k).collect())?;
    let rv = tape.constant(scaled);
    let prod = tape.mul(y, rv)?;
    Ok(tape.sum(prod))
}

type Case<T> = (Vec<Tensor<T>>, Box<dyn Fn(&mut Tape<T>, &[Var]) -> Result<Var>>);

fn case<T: Element>(name: &str, rng: &mut ChaCha8Rng) -> Case<T> {
    let s = |n, c, h, w| Shape::new(n, c, h, w);
    let margin = 3.0 * Settings::for_element::<T>().step;
    match name {
        "conv2d" => {
            let ins = vec![randn(rng, s(2, 2, 5, 5)), randn(rng, s(3, 2, 3, 3)), randn(rng, s(1, 3, 1, 1))];
            let r = randn::<T>(rng, s(2, 3, 3, 3));
            (ins, Box::new(move |t, v| {
                let y = t.conv2d(v[0], v[1], Some(v[2]), 2, 1)?;
                project(t, y, &r)
            }))
        }
        "conv2d_transpose" => {
            let ins = vec![randn(rng, s(2, 3, 3, 3)), randn(rng, s(3, 2, 4, 4)), randn(rng, s(1, 2, 1, 1))];
            let r = randn::<T>(rng, s(2, 2, 6, 6));
            (ins, Box::new(move |t, v| {
                let y = t.conv2d_transpose(v[0], v[1], Some(v[2]), 2, 1)?;
                project(t, y, &r)
            }))
        }
        "instance_norm" => {
            let ins = vec![randn(rng, s(2, 2, 3, 3)), randn(rng, s(1, 2, 1, 1)), randn(rng, s(1, 2, 1, 1))];
            let r = randn::<T>(rng, s(2, 2, 3, 3));
            (ins, Box::new(move |t, v| {
                let y = t.instance_norm(v[0], v[1], v[2], 1e-5)?;
                project(t, y, &r)
            }))
        }
        "leaky_relu" | "relu" | "tanh" | "sigmoid" | "scale" | "dropout" => {
            let x = off_kink(randn::<T>(rng, s(1, 2, 3, 3)), margin);
            let r = randn::<T>(rng, s(1, 2, 3, 3));
            let which = name.to_owned();
            let seed = rng.random::<u64>();
            (vec![x], Box::new(move |t, v| {
                let y = match which.as_str() {
                    "leaky_relu" => t.leaky_relu(v[0], 0.2),
                    "relu" => t.relu(v[0]),
                    "tanh" => t.tanh(v[0]),
                    "sigmoid" => t.sigmoid(v[0]),
                    "scale" => t.scale(v[0], -1.7),
                    _ => t.dropout(v[0], 0.5, true, &mut ChaCha8Rng::seed_from_u64(seed))?,
                };
                project(t, y, &r)
            }))
        }
        "concat_channels" | "add" | "mul" => {
            let shape_b = if name == "concat_channels" { s(1, 1, 2, 3) } else { s(1, 2, 2, 3) };
            let ins = vec![randn(rng, s(1, 2, 2, 3)), randn(rng, shape_b)];
            let out = if name == "concat_channels" { s(1, 3, 2, 3) } else { s(1, 2, 2, 3) };
            let r = randn::<T>(rng, out);
            let which = name.to_owned();
            (ins, Box::new(move |t, v| {
                let y = match which.as_str() {
                    "concat_channels" => t.concat_channels(v[0], v[1])?,
                    "add" => t.add(v[0], v[1])?,
                    _ => t.mul(v[0], v[1])?,
                };
                project(t, y, &r)
            }))
        }
        "max_pool2" => {
            // distinct, well-separated values so the argmax is stable
            let mut vals: Vec<f64> = (0..2 * 4 * 5).map(|i| i as f64 * 0.1).collect();
            for i in (1..vals.len()).rev() {
                vals.swap(i, rng.random_range(0..=i));
            }
            let x = Tensor::from_vec(s(1, 2, 4, 5), vals.into_iter().map(T::from_f64).collect()).expect("shape");
            let r = randn::<T>(rng, s(1, 2, 2, 2));
            (vec![x], Box::new(move |t, v| {
                let y = t.max_pool2(v[0])?;
                project(t, y, &r)
            }))
        }
        "global_avg_pool" => {
            let r = randn::<T>(rng, s(2, 3, 1, 1));
            (vec![randn(rng, s(2, 3, 2, 2))], Box::new(move |t, v| {
                let y = t.global_avg_pool(v[0]);
                project(t, y, &r)
            }))
        }
        "sum" => (vec![randn(rng, s(1, 2, 2, 2))], Box::new(|t, v| Ok(t.sum(v[0])))),
        "l1_loss" => {
            let a = randn::<T>(rng, s(1, 2, 3, 3));
            let b = randn::<T>(rng, s(1, 2, 3, 3));
            // keep |a - b| away from the kink
            let d = off_kink(
                Tensor::from_vec(a.shape(), a.data().iter().zip(b.data()).map(|(&x, &y)| x - y).collect()).expect("shape"),
                margin,
            );
            let a = Tensor::from_vec(a.shape(), b.data().iter().zip(d.data()).map(|(&y, &e)| y + e).collect()).expect("shape");
            (vec![a, b], Box::new(|t, v| t.l1_loss(v[0], v[1])))
        }
        "mse_loss" => (
            vec![randn(rng, s(1, 2, 3, 3)), randn(rng, s(1, 2, 3, 3))],
            Box::new(|t, v| t.mse_loss(v[0], v[1])),
        ),
        "bce_with_logits" => {
            let logits = randn::<T>(rng, s(1, 1, 3, 3)).cast::<f64>();
            let l = Tensor::from_vec(logits.shape(), logits.data().iter().map(|v| T::from_f64(3.0 * v)).collect()).expect("shape");
            let targets = Tensor::uniform(s(1, 1, 3, 3), 0.0, 1.0, rng);
            (vec![l, targets], Box::new(|t, v| t.bce_with_logits(v[0], v[1])))
        }
        "composite_3layer" => {
            // resample until no leaky_relu input sits within the stencil of its kink
            let ins = loop {
                let ins: Vec<Tensor<T>> = vec![
                    randn(rng, s(1, 3, 8, 8)),
                    Tensor::randn(s(4, 3, 4, 4), 0.0, 0.3, rng),
                    randn(rng, s(1, 4, 1, 1)),
                    Tensor::randn(s(1, 4, 1, 1), 1.0, 0.1, rng),
                    randn(rng, s(1, 4, 1, 1)),
                    Tensor::randn(s(4, 3, 4, 4), 0.0, 0.3, rng),
                    randn(rng, s(1, 3, 1, 1)),
                    Tensor::randn(s(1, 6, 3, 3), 0.0, 0.3, rng),
                ];
                let mut t = Tape::new();
                let v: Vec<Var> = ins.iter().map(|x| t.constant(x.clone())).collect();
                let h = t.conv2d(v[0], v[1], Some(v[2]), 2, 1).expect("fixed shapes");
                let h = t.instance_norm(h, v[3], v[4], 1e-5).expect("fixed shapes");
                if t.value(h).data().iter().all(|z| z.as_f64().abs() > margin) {
                    break ins;
                }
            };
            let target = Tensor::uniform(s(1, 1, 8, 8), 0.0, 1.0, rng);
            (ins, Box::new(move |t, v| {
                // down, up, then a conditional head over (input, output)
                let h = t.conv2d(v[0], v[1], Some(v[2]), 2, 1)?;
                let h = t.instance_norm(h, v[3], v[4], 1e-5)?;
                let h = t.leaky_relu(h, 0.2);
                let u = t.conv2d_transpose(h, v[5], Some(v[6]), 2, 1)?;
                let u = t.tanh(u);
                let pair = t.concat_channels(v[0], u)?;
                let logit = t.conv2d(pair, v[7], None, 1, 1)?;
                let tv = t.constant(target.clone());
                let adv = t.bce_with_logits(logit, tv)?;
                let rec = t.mse_loss(u, v[0])?;
                let rec = t.scale(rec, 0.5);
                t.add(adv, rec)
            }))
        }
        other => panic!("unknown gradient-check case {other}"),
    }
}

/// Every differentiable operator, plus a small three-layer network.
pub const OPS: &[&str] = &[
    "conv2d",
    "conv2d_transpose",
    "instance_norm",
    "leaky_relu",
    "relu",
    "tanh",
    "sigmoid",
    "dropout",
    "scale",
    "concat_channels",
    "add",
    "mul",
    "sum",
    "max_pool2",
    "global_avg_pool",
    "l1_loss",
    "mse_loss",
    "bce_with_logits",
    "composite_3layer",
];

/// Runs [`check`] on every entry of [`OPS`] at `points` random inputs.
pub fn op_suite<T: Element>(points: usize, seed: u64) -> Result<Vec<OpResult>> {
    let settings = Settings::for_element::<T>();
    OPS.iter()
        .enumerate()
        .map(|(k, &name)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64 * 0x9e37_79b9));
            let mut worst = 0.0f64;
            for _ in 0..points {
                let (inputs, f) = case::<T>(name, &mut rng);
                worst = worst.max(check(&inputs, settings, f)?.max_rel_error);
            }
            Ok(OpResult { name, points, max_rel_error: worst })
        })
        .collect()
}
