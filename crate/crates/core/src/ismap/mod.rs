//! Binary map / non-map classifier and its evaluation.

pub mod metrics;
pub mod nonmap;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cartogan_autograd::{blob, Adam, AdamConfig, Params, Shape, Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::gan::tile_to_tensor;
use crate::render::RasterTile;
use crate::rng::{derive, tag};

pub use metrics::{f1_score, format_table, metrics, ConfusionCounts, EvalReport};
pub use nonmap::{nonmap_set, texture, TextureKind};

/// Probabilities at or above this are labelled map; ties go to map.
pub const THRESHOLD: f64 = 0.5;
const WIDTHS: [usize; 4] = [3, 16, 32, 64];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsMapConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Fraction of each class held out for validation.
    pub holdout: f64,
    pub image_size: u32,
}

impl Default for IsMapConfig {
    fn default() -> Self {
        IsMapConfig { epochs: 5, lr: 1e-3, seed: 0, holdout: 0.1, image_size: 64 }
    }
}

impl IsMapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Params("ismap epochs and lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(Error::Params(format!("holdout {} must be in [0, 1)", self.holdout)));
        }
        if self.image_size < 8 || self.image_size % 8 != 0 {
            return Err(Error::Params(format!("ismap image size {} must be a multiple of 8", self.image_size)));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Three conv/relu/pool stages, global average pool and a linear logit.
#[derive(Clone, Debug, PartialEq)]
pub struct IsMapNet {
    pub params: Params<f32>,
}

impl IsMapNet {
    pub fn new(seed: u64) -> Self {
        let mut rng = derive(seed, &[tag::ISMAP, tag::INIT]);
        let mut p = Params::new();
        for (i, w) in WIDTHS.windows(2).enumerate() {
            // He initialization for relu stages.
            let std = (2.0 / (9 * w[0]) as f64).sqrt();
            p.push(format!("conv{i}.w"), Tensor::randn(Shape::new(w[1], w[0], 3, 3), 0.0, std, &mut rng));
            p.push(format!("conv{i}.b"), Tensor::zeros(Shape::new(1, w[1], 1, 1)));
        }
        let c = WIDTHS[3];
        p.push("fc.w", Tensor::randn(Shape::new(1, c, 1, 1), 0.0, (1.0 / c as f64).sqrt(), &mut rng));
        p.push("fc.b", Tensor::zeros(Shape::new(1, 1, 1, 1)));
        IsMapNet { params: p }
    }

    /// (n, 1, 1, 1) logits from vars bound in parameter order.
    pub fn forward(tape: &mut Tape<f32>, vars: &[Var], x: Var) -> cartogan_autograd::Result<Var> {
        let mut h = x;
        for stage in vars[..6].chunks_exact(2) {
            h = tape.conv2d(h, stage[0], Some(stage[1]), 1, 1)?;
            h = tape.relu(h);
            h = tape.max_pool2(h)?;
        }
        let pooled = tape.global_avg_pool(h);
        tape.conv2d(pooled, vars[6], Some(vars[7]), 1, 0)
    }

    pub fn logit(&self, x: &Tensor<f32>) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let out = Self::forward(&mut tape, &vars, xv)?;
        Ok(tape.value(out).item() as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub probability: f64,
    pub is_map: bool,
}

impl Classification {
    pub fn from_logit(logit: f64) -> Self {
        let probability = 1.0 / (1.0 + (-logit).exp());
        Classification { probability, is_map: probability >= THRESHOLD }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoldoutReport {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsMapClassifier {
    pub net: IsMapNet,
    pub config: IsMapConfig,
    pub steps: u64,
    pub epoch_losses: Vec<f64>,
    pub holdout: HoldoutReport,
}

impl IsMapClassifier {
    pub fn classify(&self, tile: &RasterTile) -> Result<Classification> {
        if tile.size() != self.config.image_size {
            return Err(Error::Tile(format!(
                "classifier expects {0}×{0} tiles, got {1}×{1}",
                self.config.image_size,
                tile.size()
            )));
        }
        Ok(Classification::from_logit(self.net.logit(&tile_to_tensor(tile))?))
    }

    /// Positives are expected maps, negatives expected non-maps.
    pub fn evaluate(&self, positives: &[RasterTile], negatives: &[RasterTile]) -> Result<EvalReport> {
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::Dataset("evaluation needs at least one positive and one negative".into()));
        }
        let labels = |set: &[RasterTile]| -> Result<Vec<bool>> { set.iter().map(|t| Ok(self.classify(t)?.is_map)).collect() };
        Ok(metrics(ConfusionCounts::tally(&labels(positives)?, &labels(negatives)?)))
    }
}

/// Stratified split: the last `round(holdout·n)` of each shuffled class
/// are held out, keeping at least one item of each class for training.
fn split(n: usize, frac: f64, rng: &mut impl rand::Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let k = ((frac * n as f64).round() as usize).min(n - 1);
    let test = idx.split_off(n - k);
    (idx, test)
}

pub fn train_ismap(maps: &[RasterTile], nonmaps: &[RasterTile], cfg: &IsMapConfig) -> Result<IsMapClassifier> {
    cfg.validate()?;
    if maps.is_empty() || nonmaps.is_empty() {
        return Err(Error::Dataset(format!(
            "classifier training needs both classes (got {} maps, {} non-maps)",
            maps.len(),
            nonmaps.len()
        )));
    }
    let mut items: Vec<(Tensor<f32>, f32)> = Vec::with_capacity(maps.len() + nonmaps.len());
    for (set, label) in [(maps, 1.0), (nonmaps, 0.0)] {
        for t in set {
            if t.size() != cfg.image_size {
                return Err(Error::Tile(format!("training tile is {}px, config says {}px", t.size(), cfg.image_size)));
            }
            items.push((tile_to_tensor(t), label));
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, (offset, n)) in [(0, maps.len()), (maps.len(), nonmaps.len())].into_iter().enumerate() {
        let (tr, te) = split(n, cfg.holdout, &mut derive(cfg.seed, &[tag::ISMAP, tag::SPLIT, class as u64]));
        train.extend(tr.into_iter().map(|i| i + offset));
        test.extend(te.into_iter().map(|i| i + offset));
    }
    train.sort_unstable();

    let mut params = IsMapNet::new(cfg.seed).params;
    let mut opt = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, &params);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for e in 0..cfg.epochs {
        let mut order = train.clone();
        order.shuffle(&mut derive(cfg.seed, &[tag::ISMAP, tag::SHUFFLE, e as u64]));
        let mut sum = 0.0;
        for &i in &order {
            let (x, label) = &items[i];
            let mut tape = Tape::new();
            let vars = params.bind(&mut tape);
            let xv = tape.constant(x.clone());
            let logit = IsMapNet::forward(&mut tape, &vars, xv)?;
            let loss = tape.bce_with_logits_const(logit, *label as f64)?;
            let l = tape.value(loss).item() as f64;
            if !l.is_finite() {
                return Err(Error::Dataset(format!("non-finite classifier loss in epoch {}", e + 1)));
            }
            sum += l;
            tape.backward(loss)?;
            let grads = params.grads(&tape, &vars);
            opt.step(&mut params, &grads)?;
        }
        epoch_losses.push(sum / order.len() as f64);
    }
    let net = IsMapNet { params };
    let mut correct = 0;
    for &i in &test {
        let (x, label) = &items[i];
        if Classification::from_logit(net.logit(x)?).is_map == (*label == 1.0) {
            correct += 1;
        }
    }
    let accuracy = if test.is_empty() { 0.0 } else { correct as f64 / test.len() as f64 };
    Ok(IsMapClassifier {
        net,
        config: cfg.clone(),
        steps: opt.steps(),
        epoch_losses,
        holdout: HoldoutReport { count: test.len(), correct, accuracy },
    })
}

pub const CLASSIFIER_FORMAT: &str = "cartogan-ismap-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifierMeta {
    format: String,
    config_hash: String,
    config: IsMapConfig,
    steps: u64,
    epoch_losses: Vec<f64>,
    holdout: HoldoutReport,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl IsMapClassifier {
    /// Parameter blob at `path`, metadata at `<path>.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        }
        let records = self.net.params.to_records("ismap/");
        std::fs::write(path, blob::encode(&records)).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        let meta = ClassifierMeta {
            format: CLASSIFIER_FORMAT.into(),
            config_hash: self.config.hash(),
            config: self.config.clone(),
            steps: self.steps,
            epoch_losses: self.epoch_losses.clone(),
            holdout: self.holdout.clone(),
        };
        let side = sidecar(path);
        let text = serde_json::to_string_pretty(&meta)? + "\n";
        std::fs::write(&side, text).map_err(|e| Error::io(format!("writing {}", side.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file_err = |p: &Path, reason: String| Error::File { path: p.to_path_buf(), reason };
        let bytes = std::fs::read(path).map_err(|e| file_err(path, format!("cannot read classifier: {e}")))?;
        let records = blob::decode(&bytes).map_err(|e| file_err(path, e.to_string()))?;
        let side = sidecar(path);
        let text = std::fs::read_to_string(&side).map_err(|e| file_err(&side, format!("cannot read classifier sidecar: {e}")))?;
        let meta: ClassifierMeta = serde_json::from_str(&text).map_err(|e| file_err(&side, e.to_string()))?;
        if meta.format != CLASSIFIER_FORMAT {
            return Err(file_err(&side, format!("format {:?}, expected {CLASSIFIER_FORMAT:?}", meta.format)));
        }
        if meta.config_hash != meta.config.hash() {
            return Err(file_err(&side, "config hash does not match config".into()));
        }
        meta.config.validate()?;
        let mut net = IsMapNet::new(0);
        net.params.load_records("ismap/", &records).map_err(|e| file_err(path, e.to_string()))?;
        Ok(IsMapClassifier {
            net,
            config: meta.config,
            steps: meta.steps,
            epoch_losses: meta.epoch_losses,
            holdout: meta.holdout,
        })
    }
}
