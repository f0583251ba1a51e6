//! Encoder–decoder generator with skip connections and a patch
//! discriminator.

use cartogan_autograd::{Element, Params, Result, Shape, Tape, Tensor, Var};
use rand::Rng;

pub const INIT_STD: f64 = 0.02;
pub const LEAK: f64 = 0.2;
pub const IN_EPS: f64 = 1e-5;
pub const DROPOUT: f64 = 0.5;
/// Decoder blocks (from the bottleneck outward) that apply dropout.
pub const DROPOUT_BLOCKS: usize = 2;

fn conv_weight<T: Element, R: Rng + ?Sized>(co: usize, ci: usize, k: usize, rng: &mut R) -> Tensor<T> {
    Tensor::randn(Shape::new(co, ci, k, k), 0.0, INIT_STD, rng)
}

fn channel_vec<T: Element>(c: usize, v: f64) -> Tensor<T> {
    Tensor::full(Shape::new(1, c, 1, 1), T::from_f64(v))
}

/// Hands out bound parameter vars in creation order.
struct Cursor<'a> {
    vars: &'a [Var],
    next: usize,
}

impl Cursor<'_> {
    fn take(&mut self) -> Var {
        let v = self.vars[self.next];
        self.next += 1;
        v
    }
}

/// Depth for a square input: downsample until the bottleneck is 4×4.
pub fn generator_depth(size: u32) -> Result<usize> {
    if size < 16 || !size.is_power_of_two() {
        return Err(cartogan_autograd::AutogradError::InvalidArgument {
            op: "generator",
            reason: format!("image size {size} must be a power of two ≥ 16"),
        });
    }
    Ok(size.trailing_zeros() as usize - 2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T: Element> {
    pub params: Params<T>,
    size: u32,
    depth: usize,
    ngf: usize,
}

impl<T: Element> Generator<T> {
    pub fn new<R: Rng + ?Sized>(size: u32, ngf: usize, rng: &mut R) -> Result<Self> {
        let depth = generator_depth(size)?;
        let ch = |i: usize| ngf << i.min(3);
        let mut p = Params::new();
        let mut cin = 3;
        for i in 0..depth {
            p.push(format!("down{i}.w"), conv_weight(ch(i), cin, 4, rng));
            p.push(format!("down{i}.gain"), channel_vec(ch(i), 1.0));
            p.push(format!("down{i}.bias"), channel_vec(ch(i), 0.0));
            cin = ch(i);
        }
        for j in 0..depth {
            let last = j + 1 == depth;
            let cout = if last { 3 } else { ch(depth - 2 - j) };
            // ConvT weights are (c_in, c_out, k, k).
            p.push(format!("up{j}.w"), conv_weight(cin, cout, 4, rng));
            if last {
                p.push(format!("up{j}.b"), channel_vec(cout, 0.0));
            } else {
                p.push(format!("up{j}.gain"), channel_vec(cout, 1.0));
                p.push(format!("up{j}.bias"), channel_vec(cout, 0.0));
                cin = 2 * cout;
            }
        }
        Ok(Generator { params: p, size, depth, ngf })
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn ngf(&self) -> usize {
        self.ngf
    }

    /// `x` is (n, 3, size, size) in `[-1, 1]`. Dropout draws from `rng` only
    /// when `training`.
    pub fn forward<R: Rng + ?Sized>(&self, tape: &mut Tape<T>, vars: &[Var], x: Var, training: bool, rng: &mut R) -> Result<Var> {
        let want = Shape::new(tape.shape(x).n, 3, self.size as usize, self.size as usize);
        if tape.shape(x) != want {
            return Err(cartogan_autograd::AutogradError::ShapeMismatch { op: "generator", expected: want, got: tape.shape(x) });
        }
        let mut c = Cursor { vars, next: 0 };
        let mut skips = Vec::with_capacity(self.depth);
        let mut h = x;
        for _ in 0..self.depth {
            let (w, g, b) = (c.take(), c.take(), c.take());
            h = tape.conv2d(h, w, None, 2, 1)?;
            h = tape.instance_norm(h, g, b, IN_EPS)?;
            h = tape.leaky_relu(h, LEAK);
            skips.push(h);
        }
        skips.pop();
        for j in 0..self.depth {
            let w = c.take();
            if j + 1 == self.depth {
                let b = c.take();
                h = tape.conv2d_transpose(h, w, Some(b), 2, 1)?;
                return Ok(tape.tanh(h));
            }
            let (g, b) = (c.take(), c.take());
            h = tape.conv2d_transpose(h, w, None, 2, 1)?;
            h = tape.instance_norm(h, g, b, IN_EPS)?;
            h = tape.relu(h);
            if j < DROPOUT_BLOCKS {
                h = tape.dropout(h, DROPOUT, training, rng)?;
            }
            let skip = skips.pop().expect("one skip per inner decoder block");
            h = tape.concat_channels(h, skip)?;
        }
        unreachable!("the last decoder block returns")
    }

    /// Inference without dropout on a fresh tape.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let y = self.forward(&mut tape, &vars, xv, false, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0))?;
        Ok(tape.value(y).clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T: Element> {
    pub params: Params<T>,
    in_channels: usize,
}

impl<T: Element> Discriminator<T> {
    /// `in_channels` is 6 for conditional (input ‖ candidate) use, 3 otherwise.
    pub fn new<R: Rng + ?Sized>(in_channels: usize, ndf: usize, rng: &mut R) -> Self {
        let mut p = Params::new();
        let ch = [ndf, 2 * ndf, 4 * ndf];
        let mut cin = in_channels;
        for (i, &co) in ch.iter().enumerate() {
            p.push(format!("block{i}.w"), conv_weight(co, cin, 4, rng));
            if i == 0 {
                p.push(format!("block{i}.b"), channel_vec(co, 0.0));
            } else {
                p.push(format!("block{i}.gain"), channel_vec(co, 1.0));
                p.push(format!("block{i}.bias"), channel_vec(co, 0.0));
            }
            cin = co;
        }
        p.push("head.w", conv_weight(1, cin, 4, rng));
        p.push("head.b", channel_vec(1, 0.0));
        Discriminator { params: p, in_channels }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    /// Logit map (n, 1, h', w').
    pub fn forward(&self, tape: &mut Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        if tape.shape(x).c != self.in_channels {
            let got = tape.shape(x);
            let expected = Shape::new(got.n, self.in_channels, got.h, got.w);
            return Err(cartogan_autograd::AutogradError::ShapeMismatch { op: "discriminator", expected, got });
        }
        let mut c = Cursor { vars, next: 0 };
        let mut h = x;
        for i in 0..3 {
            let w = c.take();
            if i == 0 {
                let b = c.take();
                h = tape.conv2d(h, w, Some(b), 2, 1)?;
            } else {
                let (g, b) = (c.take(), c.take());
                h = tape.conv2d(h, w, None, 2, 1)?;
                h = tape.instance_norm(h, g, b, IN_EPS)?;
            }
            h = tape.leaky_relu(h, LEAK);
        }
        let (w, b) = (c.take(), c.take());
        tape.conv2d(h, w, Some(b), 1, 1)
    }
}
