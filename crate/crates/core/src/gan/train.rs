use std::path::{Path, PathBuf};

use cartogan_autograd::blob::{self, Record};
use cartogan_autograd::{Adam, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{cycle_generator_objective, cycle_images, domain_d_loss, pix2pix_d_loss, pix2pix_g_loss};
use super::nets::{Discriminator, Generator};
use super::{ModelKind, TrainConfig};
use crate::error::{Error, Result};
use crate::rng::{derive, tag};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    /// 1-based.
    pub epoch: usize,
    pub loss_g: f64,
    pub loss_d: f64,
    /// Mean of the two reconstruction L1 terms; unpaired models only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss_cyc: Option<f64>,
}

/// Training images as (1, 3, S, S) tensors in `[-1, 1]`.
#[derive(Clone, Debug)]
pub enum TrainData {
    /// `x[i]` pairs with `y[i]`.
    Paired { x: Vec<Tensor<f32>>, y: Vec<Tensor<f32>> },
    /// One epoch walks `x`; `y` is drawn uniformly with replacement.
    Unpaired { x: Vec<Tensor<f32>>, y: Vec<Tensor<f32>> },
}

impl TrainData {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainData::Paired { .. } => ModelKind::Pix2Pix,
            TrainData::Unpaired { .. } => ModelKind::CycleGan,
        }
    }

    fn sides(&self) -> (&[Tensor<f32>], &[Tensor<f32>]) {
        match self {
            TrainData::Paired { x, y } | TrainData::Unpaired { x, y } => (x, y),
        }
    }

    fn check(&self, size: u32) -> Result<()> {
        let (x, y) = self.sides();
        if x.is_empty() || y.is_empty() {
            return Err(Error::Dataset("empty training set".into()));
        }
        if let TrainData::Paired { .. } = self {
            if x.len() != y.len() {
                return Err(Error::Dataset(format!("{} inputs but {} targets", x.len(), y.len())));
            }
        }
        let want = cartogan_autograd::Shape::new(1, 3, size as usize, size as usize);
        if let Some(t) = x.iter().chain(y).find(|t| t.shape() != want) {
            return Err(Error::Dataset(format!("training image has shape {}, expected {want}", t.shape())));
        }
        Ok(())
    }
}

/// Networks, optimizers and bookkeeping of one training run.
///
/// Pix2Pix uses `g` and the conditional `d`. CycleGAN uses `g: X→Y`,
/// `f: Y→X`, `d` judging domain Y and `d_x` judging domain X.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainer {
    pub kind: ModelKind,
    pub cfg: TrainConfig,
    pub g: Generator<f32>,
    pub d: Discriminator<f32>,
    pub f: Option<Generator<f32>>,
    pub d_x: Option<Discriminator<f32>>,
    opt_g: Adam<f32>,
    opt_d: Adam<f32>,
    opt_f: Option<Adam<f32>>,
    opt_d_x: Option<Adam<f32>>,
    epoch: usize,
    history: Vec<EpochLosses>,
}

impl Trainer {
    pub fn new(kind: ModelKind, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let net_rng = |i: u64| derive(cfg.seed, &[tag::INIT, i]);
        let g = Generator::new(cfg.image_size, cfg.ngf, &mut net_rng(0))?;
        let (d, f, d_x) = match kind {
            ModelKind::Pix2Pix => (Discriminator::new(6, cfg.ndf, &mut net_rng(1)), None, None),
            ModelKind::CycleGan => (
                Discriminator::new(3, cfg.ndf, &mut net_rng(1)),
                Some(Generator::new(cfg.image_size, cfg.ngf, &mut net_rng(2))?),
                Some(Discriminator::new(3, cfg.ndf, &mut net_rng(3))),
            ),
        };
        let adam = cfg.adam();
        Ok(Trainer {
            kind,
            opt_g: Adam::new(adam, &g.params),
            opt_d: Adam::new(adam, &d.params),
            opt_f: f.as_ref().map(|f| Adam::new(adam, &f.params)),
            opt_d_x: d_x.as_ref().map(|d| Adam::new(adam, &d.params)),
            g,
            d,
            f,
            d_x,
            cfg,
            epoch: 0,
            history: Vec::new(),
        })
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn history(&self) -> &[EpochLosses] {
        &self.history
    }

    /// Optimizer steps taken by the generator and discriminator sides.
    pub fn optimizer_steps(&self) -> (u64, u64) {
        (self.opt_g.steps(), self.opt_d.steps())
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.cfg.epochs
    }

    /// One pass over the inputs in a seeded order. Every step updates the
    /// discriminator(s) on detached fakes, then the generator(s) against the
    /// updated, frozen discriminator(s). All randomness is derived from
    /// (seed, epoch, step), so runs resumed at an epoch boundary match
    /// uninterrupted ones bitwise.
    pub fn run_epoch(&mut self, data: &TrainData) -> Result<EpochLosses> {
        if data.kind() != self.kind {
            return Err(Error::Dataset(format!("{} trainer given {} data", self.kind.name(), data.kind().name())));
        }
        data.check(self.cfg.image_size)?;
        let (xs, ys) = data.sides();
        let e = self.epoch as u64;
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.shuffle(&mut derive(self.cfg.seed, &[tag::SHUFFLE, e]));
        let (mut sum_g, mut sum_d, mut sum_c) = (0.0, 0.0, 0.0);
        for (s, &i) in order.iter().enumerate() {
            let mut rng = derive(self.cfg.seed, &[tag::STEP, e, s as u64]);
            let (lg, ld, lc) = match self.kind {
                ModelKind::Pix2Pix => {
                    let (lg, ld) = self.pix2pix_step(&xs[i], &ys[i], &mut rng)?;
                    (lg, ld, 0.0)
                }
                ModelKind::CycleGan => {
                    let j = rng.random_range(0..ys.len());
                    self.cycle_step(&xs[i], &ys[j], &mut rng)?
                }
            };
            if !(lg.is_finite() && ld.is_finite() && lc.is_finite()) {
                return Err(Error::Dataset(format!("non-finite loss at epoch {} step {s}", self.epoch + 1)));
            }
            sum_g += lg;
            sum_d += ld;
            sum_c += lc;
        }
        let n = order.len() as f64;
        self.epoch += 1;
        let rec = EpochLosses {
            epoch: self.epoch,
            loss_g: sum_g / n,
            loss_d: sum_d / n,
            loss_cyc: (self.kind == ModelKind::CycleGan).then_some(sum_c / n),
        };
        self.history.push(rec);
        Ok(rec)
    }

    fn pix2pix_step<R: Rng>(&mut self, x: &Tensor<f32>, y: &Tensor<f32>, rng: &mut R) -> Result<(f64, f64)> {
        let mut tape = Tape::new();
        let gv = self.g.params.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let fake = self.g.forward(&mut tape, &gv, xv, true, rng)?;

        let dv = self.d.params.bind(&mut tape);
        let ld = pix2pix_d_loss(&mut tape, &self.d, &dv, xv, yv, fake)?;
        tape.backward(ld)?;
        let grads = self.d.params.grads(&tape, &dv);
        self.opt_d.step(&mut self.d.params, &grads)?;

        let frozen = self.d.params.bind_frozen(&mut tape);
        let lg = pix2pix_g_loss(&mut tape, &self.d, &frozen, xv, yv, fake, self.cfg.lambda_l1)?;
        tape.backward(lg.total)?;
        let grads = self.g.params.grads(&tape, &gv);
        self.opt_g.step(&mut self.g.params, &grads)?;
        Ok((tape.value(lg.total).item() as f64, tape.value(ld).item() as f64))
    }

    fn cycle_step<R: Rng>(&mut self, x: &Tensor<f32>, y: &Tensor<f32>, rng: &mut R) -> Result<(f64, f64, f64)> {
        let f = self.f.as_mut().expect("cyclegan trainer has F");
        let d_x = self.d_x.as_mut().expect("cyclegan trainer has D_X");
        let mut tape = Tape::new();
        let gv = self.g.params.bind(&mut tape);
        let fv = f.params.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let imgs = cycle_images(&mut tape, (&self.g, &gv), (&*f, &fv), xv, yv, true, rng)?;

        let dxv = d_x.params.bind(&mut tape);
        let dyv = self.d.params.bind(&mut tape);
        let ldx = domain_d_loss(&mut tape, (&*d_x, &dxv), xv, imgs.fake_x)?;
        let ldy = domain_d_loss(&mut tape, (&self.d, &dyv), yv, imgs.fake_y)?;
        let ld = tape.add(ldx, ldy)?;
        tape.backward(ld)?;
        let grads = d_x.params.grads(&tape, &dxv);
        self.opt_d_x.as_mut().expect("optimizer").step(&mut d_x.params, &grads)?;
        let grads = self.d.params.grads(&tape, &dyv);
        self.opt_d.step(&mut self.d.params, &grads)?;

        let dxf = d_x.params.bind_frozen(&mut tape);
        let dyf = self.d.params.bind_frozen(&mut tape);
        let logits_y = self.d.forward(&mut tape, &dyf, imgs.fake_y)?;
        let logits_x = d_x.forward(&mut tape, &dxf, imgs.fake_x)?;
        let terms = cycle_generator_objective(&mut tape, logits_y, logits_x, &imgs, xv, yv, self.cfg.lambda_cyc)?;
        tape.backward(terms.g_total)?;
        let grads = self.g.params.grads(&tape, &gv);
        self.opt_g.step(&mut self.g.params, &grads)?;
        let grads = f.params.grads(&tape, &fv);
        self.opt_f.as_mut().expect("optimizer").step(&mut f.params, &grads)?;

        let item = |v| tape.value(v).item() as f64;
        let cyc = 0.5 * (item(terms.cyc_x) + item(terms.cyc_y));
        Ok((item(terms.g_total), 0.5 * item(ld), cyc))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut records = self.g.params.to_records("G/");
        records.extend(self.d.params.to_records("D/"));
        records.extend(self.opt_g.to_records("optG/"));
        records.extend(self.opt_d.to_records("optD/"));
        if let (Some(f), Some(dx), Some(of), Some(odx)) = (&self.f, &self.d_x, &self.opt_f, &self.opt_d_x) {
            records.extend(f.params.to_records("F/"));
            records.extend(dx.params.to_records("DX/"));
            records.extend(of.to_records("optF/"));
            records.extend(odx.to_records("optDX/"));
        }
        Checkpoint {
            meta: CheckpointMeta {
                format: CHECKPOINT_FORMAT.into(),
                kind: self.kind,
                epoch: self.epoch,
                config_hash: self.cfg.hash(),
                config: self.cfg.clone(),
                history: self.history.clone(),
            },
            records,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.meta.check()?;
        let mut t = Trainer::new(ckpt.meta.kind, ckpt.meta.config.clone())?;
        let r = &ckpt.records;
        t.g.params.load_records("G/", r)?;
        t.d.params.load_records("D/", r)?;
        t.opt_g.load_records("optG/", r)?;
        t.opt_d.load_records("optD/", r)?;
        if let (Some(f), Some(dx), Some(of), Some(odx)) = (&mut t.f, &mut t.d_x, &mut t.opt_f, &mut t.opt_d_x) {
            f.params.load_records("F/", r)?;
            dx.params.load_records("DX/", r)?;
            of.load_records("optF/", r)?;
            odx.load_records("optDX/", r)?;
        }
        t.epoch = ckpt.meta.epoch;
        t.history = ckpt.meta.history.clone();
        Ok(t)
    }

    /// `epoch,loss_g,loss_d[,loss_cyc]` with a header row.
    pub fn history_csv(&self) -> String {
        history_csv(self.kind, &self.history)
    }
}

pub fn history_csv(kind: ModelKind, history: &[EpochLosses]) -> String {
    let cyc = kind == ModelKind::CycleGan;
    let mut out = String::from(if cyc { "epoch,loss_g,loss_d,loss_cyc\n" } else { "epoch,loss_g,loss_d\n" });
    for h in history {
        out.push_str(&format!("{},{:.6},{:.6}", h.epoch, h.loss_g, h.loss_d));
        if cyc {
            out.push_str(&format!(",{:.6}", h.loss_cyc.unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out
}

pub const CHECKPOINT_FORMAT: &str = "cartogan-gan-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format: String,
    pub kind: ModelKind,
    /// Completed epochs.
    pub epoch: usize,
    pub config_hash: String,
    pub config: TrainConfig,
    pub history: Vec<EpochLosses>,
}

impl CheckpointMeta {
    fn check(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("format {:?}, expected {CHECKPOINT_FORMAT:?}", self.format)));
        }
        if self.config_hash != self.config.hash() {
            return Err(Error::Checkpoint("config hash does not match the stored config".into()));
        }
        Ok(())
    }
}

/// Tensor blob plus JSON sidecar (`<blob>.json`).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub records: Vec<Record>,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        }
        std::fs::write(path, blob::encode(&self.records)).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        let meta = serde_json::to_string_pretty(&self.meta)?;
        let side = sidecar(path);
        std::fs::write(&side, meta + "\n").map_err(|e| Error::io(format!("writing {}", side.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file_err = |p: &Path, reason: String| Error::File { path: p.to_path_buf(), reason };
        let bytes = std::fs::read(path).map_err(|e| file_err(path, format!("cannot read checkpoint: {e}")))?;
        let records = blob::decode(&bytes).map_err(|e| file_err(path, e.to_string()))?;
        let side = sidecar(path);
        let text = std::fs::read_to_string(&side).map_err(|e| file_err(&side, format!("cannot read checkpoint sidecar: {e}")))?;
        let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| file_err(&side, e.to_string()))?;
        meta.check().map_err(|e| file_err(&side, e.to_string()))?;
        Ok(Checkpoint { meta, records })
    }
}

/// The `X→Y` generator of a checkpoint, ready for inference.
pub fn load_generator(ckpt: &Checkpoint) -> Result<Generator<f32>> {
    ckpt.meta.check()?;
    let cfg = &ckpt.meta.config;
    let mut g = Generator::new(cfg.image_size, cfg.ngf, &mut derive(0, &[]))?;
    g.params.load_records("G/", &ckpt.records)?;
    Ok(g)
}
