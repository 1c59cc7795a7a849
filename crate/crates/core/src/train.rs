//! Training loop, run configuration, dataset splitting and the run manifest.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::checkpoint::{Checkpoint, MASTER_PREFIX};
use crate::error::{contract, Error, Result};
use crate::loss::{DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_TOLERANCE};
use crate::nn::model::{Dropout, Model, ModelConfig, Sample};
use crate::nn::tape::Mat;
use crate::pipeline::evaluate;
use crate::record::{write_records, Record};
use crate::seed::derive_seed;

/// Environment variable that overrides every seed.
pub const SEED_ENV: &str = "D2C_SEED";

const TAG_INIT: u64 = 1;
const TAG_ORDER: u64 = 2;
const TAG_DROPOUT: u64 = 3;
const TAG_EVAL: u64 = 4;

const ADAM_M: &str = "adam_m/";
const ADAM_V: &str = "adam_v/";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub warmup_steps: u64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Weight of the argument loss.
    pub arg_weight: f64,
    pub soft_alpha: f64,
    /// Soft-target window half-width; 0 gives hard one-hot targets.
    pub tolerance: u16,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Save a checkpoint every this many epochs; 0 saves only the final one.
    pub checkpoint_every: usize,
    /// Stop after this many optimizer steps; 0 means no limit.
    pub max_steps: u64,
    /// Points per shape for validation Chamfer distance.
    pub eval_points: usize,
}

impl TrainConfig {
    pub fn full() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            warmup_steps: 2000,
            clip_norm: 1.0,
            batch_size: 256,
            epochs: 200,
            seed: 0,
            arg_weight: DEFAULT_BETA,
            soft_alpha: DEFAULT_ALPHA,
            tolerance: DEFAULT_TOLERANCE,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            checkpoint_every: 10,
            max_steps: 0,
            eval_points: 2000,
        }
    }

    pub fn desk() -> Self {
        TrainConfig { batch_size: 32, warmup_steps: 200, epochs: 1500, checkpoint_every: 0, eval_points: 500, ..Self::full() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.clip_norm > 0.0
            && self.batch_size > 0
            && self.epochs > 0
            && self.arg_weight >= 0.0
            && self.soft_alpha > 0.0
            && (0.0..1.0).contains(&self.adam_beta1)
            && (0.0..1.0).contains(&self.adam_beta2)
            && self.adam_eps > 0.0
            && self.eval_points > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training config {self:?}")))
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value '{v}' for {k}")))
        }
        match key {
            "learning_rate" => self.learning_rate = num(key, value)?,
            "warmup_steps" => self.warmup_steps = num(key, value)?,
            "clip_norm" => self.clip_norm = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "arg_weight" => self.arg_weight = num(key, value)?,
            "soft_alpha" => self.soft_alpha = num(key, value)?,
            "tolerance" => self.tolerance = num(key, value)?,
            "adam_beta1" => self.adam_beta1 = num(key, value)?,
            "adam_beta2" => self.adam_beta2 = num(key, value)?,
            "adam_eps" => self.adam_eps = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "max_steps" => self.max_steps = num(key, value)?,
            "eval_points" => self.eval_points = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("warmup_steps", self.warmup_steps.to_string()),
            ("clip_norm", format!("{:?}", self.clip_norm)),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("arg_weight", format!("{:?}", self.arg_weight)),
            ("soft_alpha", format!("{:?}", self.soft_alpha)),
            ("tolerance", self.tolerance.to_string()),
            ("adam_beta1", format!("{:?}", self.adam_beta1)),
            ("adam_beta2", format!("{:?}", self.adam_beta2)),
            ("adam_eps", format!("{:?}", self.adam_eps)),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("max_steps", self.max_steps.to_string()),
            ("eval_points", self.eval_points.to_string()),
        ]
    }
}

/// Model and training settings read from a flat `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(RunConfig { model: ModelConfig::desk(), train: TrainConfig::desk() }),
            "full" => Ok(RunConfig { model: ModelConfig::full(), train: TrainConfig::full() }),
            _ => Err(Error::Config(format!("unknown profile '{name}' (expected desk or full)"))),
        }
    }

    /// Sets a model or training key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.model.set(key, value)? || self.train.set(key, value)? {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown key '{key}'")))
        }
    }

    /// Parses a config file. An optional `profile` key picks the base values
    /// (default `desk`); other keys are applied in file order.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: "expected key = value".into() })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let profile = pairs.iter().rev().find(|(k, _)| k == "profile").map_or("desk", |(_, v)| v.as_str());
        let mut cfg = RunConfig::profile(profile)?;
        for (k, v) in pairs.iter().filter(|(k, _)| k != "profile") {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.model.to_pairs().into_iter().chain(self.train.to_pairs()) {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// Seed from the environment override, if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Error::Config(format!("{SEED_ENV}='{v}' is not an integer"))),
        Err(_) => Ok(None),
    }
}

/// Learning rate after linear warmup, for the 1-based `step`.
pub fn lr_at(cfg: &TrainConfig, step: u64) -> f64 {
    if cfg.warmup_steps == 0 {
        return cfg.learning_rate;
    }
    cfg.learning_rate * (step as f64 / cfg.warmup_steps as f64).min(1.0)
}

/// Seeded shuffle followed by contiguous slicing into train, val and test.
pub fn split_dataset<T: Clone>(records: &[T], ratios: (f64, f64, f64), seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if records.is_empty() {
        return Err(contract("cannot split an empty dataset"));
    }
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !(0.0..=1.0).contains(r)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(contract(format!("split ratios {ratios:?} must be in [0, 1] and sum to 1")));
    }
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = records.len();
    let n_train = ((a * n as f64).round() as usize).min(n);
    let n_val = ((b * n as f64).round() as usize).min(n - n_train);
    let n_val = if c == 0.0 { n - n_train } else { n_val };
    let take = |r: std::ops::Range<usize>| idx[r].iter().map(|&i| records[i].clone()).collect();
    Ok((take(0..n_train), take(n_train..n_train + n_val), take(n_train + n_val..n)))
}

/// Hex SHA-256 of the records' serialized form.
pub fn dataset_fingerprint(records: &[Record]) -> Result<String> {
    let mut buf = Vec::new();
    write_records(&mut buf, records)?;
    Ok(Sha256::digest(&buf).iter().map(|b| format!("{b:02x}")).collect())
}

/// Append-only JSON-lines log of a run.
#[derive(Debug, Clone)]
pub struct RunManifest {
    path: PathBuf,
}

impl RunManifest {
    pub fn open(path: &Path) -> Self {
        RunManifest { path: path.to_path_buf() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: Value) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        serde_json::to_writer(&mut f, &entry)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn entries(&self) -> Result<Vec<Value>> {
        let text = std::fs::read_to_string(&self.path)?;
        text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// 1-based index of the step just taken.
    pub step: u64,
    pub lr: f64,
    /// Mean loss over the batch.
    pub loss: f64,
    pub grad_norm: f64,
    /// Global gradient norm after clipping.
    pub clipped_norm: f64,
}

/// Adam optimizer state over a model and a prepared training set.
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    samples: Vec<Sample>,
    m: Vec<Mat>,
    v: Vec<Mat>,
    step: u64,
    last_good: Option<PathBuf>,
}

impl Trainer {
    /// Fresh model initialized from the training seed.
    pub fn new(model_config: ModelConfig, config: TrainConfig, records: &[Record]) -> Result<Self> {
        let model = Model::new(model_config, derive_seed(config.seed, &[TAG_INIT]))?;
        Self::with_model(model, config, records)
    }

    pub fn with_model(model: Model, config: TrainConfig, records: &[Record]) -> Result<Self> {
        config.validate()?;
        if records.is_empty() {
            return Err(contract("training set is empty"));
        }
        if config.batch_size > records.len() {
            return Err(contract(format!(
                "batch size {} exceeds training set of {} (incomplete batches are dropped)",
                config.batch_size,
                records.len()
            )));
        }
        let views = model.config.view_mode.views();
        let samples = records
            .iter()
            .map(|r| Sample::new(&model, &r.views_in_order(views)?, &r.cad, config.soft_alpha, config.tolerance))
            .collect::<Result<Vec<_>>>()?;
        let m = model.params.zeros_like();
        let v = model.params.zeros_like();
        Ok(Trainer { model, config, samples, m, v, step: 0, last_good: None })
    }

    /// Restores weights, optimizer moments and step count from a checkpoint
    /// written by [`Trainer::checkpoint`].
    pub fn resume(ck: &Checkpoint, config: TrainConfig, records: &[Record]) -> Result<Self> {
        let model = ck.model()?;
        let names = model.params.names.clone();
        if ck.f64_group(MASTER_PREFIX, &names).is_none() {
            return Err(Error::Checkpoint("checkpoint has no full-precision training state".into()));
        }
        let m = ck.f64_group(ADAM_M, &names).ok_or_else(|| Error::Checkpoint("missing optimizer moments".into()))?;
        let v = ck.f64_group(ADAM_V, &names).ok_or_else(|| Error::Checkpoint("missing optimizer moments".into()))?;
        let step = ck
            .meta
            .get("step")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Checkpoint("missing step counter".into()))?;
        let mut t = Self::with_model(model, config, records)?;
        for (a, b) in m.iter().chain(&v).zip(t.m.iter().chain(&t.v)) {
            if a.dim() != b.dim() {
                return Err(Error::Checkpoint("optimizer state shape mismatch".into()));
            }
        }
        t.m = m;
        t.v = v;
        t.step = step;
        Ok(t)
    }

    /// Training config stored in a checkpoint, if any.
    pub fn stored_config(ck: &Checkpoint) -> Result<Option<TrainConfig>> {
        let mut cfg = TrainConfig::full();
        let mut any = false;
        for (k, v) in &ck.meta {
            if let Some(key) = k.strip_prefix("train.") {
                if !cfg.set(key, v)? {
                    return Err(Error::Checkpoint(format!("unknown training key '{key}'")));
                }
                any = true;
            }
        }
        Ok(any.then_some(cfg))
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn steps_per_epoch(&self) -> u64 {
        (self.samples.len() / self.config.batch_size) as u64
    }

    pub fn last_good(&self) -> Option<&Path> {
        self.last_good.as_deref()
    }

    /// Sample indices of the batch for the 0-based step `step`.
    fn batch_indices(&self, step: u64) -> Vec<usize> {
        let spe = self.steps_per_epoch();
        let (epoch, within) = (step / spe, (step % spe) as usize);
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &[TAG_ORDER, epoch])));
        let b = self.config.batch_size;
        order[within * b..(within + 1) * b].to_vec()
    }

    /// One optimizer step. Per-sample gradients are computed in parallel and
    /// summed in batch order, so results do not depend on the thread count.
    pub fn step(&mut self) -> Result<StepStats> {
        let batch = self.batch_indices(self.step);
        let step = self.step + 1;
        let p = self.model.config.dropout;
        let beta = self.config.arg_weight;
        let seed = self.config.seed;
        let mut total_loss = 0.0;
        let mut grads = self.model.params.zeros_like();
        let chunk = rayon::current_num_threads().max(1);
        for part in batch.chunks(chunk) {
            let results = part
                .par_iter()
                .map(|&i| {
                    let mut drop = Dropout::train(p, derive_seed(seed, &[TAG_DROPOUT, step, i as u64]));
                    self.model.loss_and_grads(&self.samples[i], beta, &mut drop)
                })
                .collect::<Result<Vec<_>>>()?;
            for (loss, g) in results {
                total_loss += loss;
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    *acc += gi;
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        let loss = total_loss * scale;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                last_good: self.last_good.as_ref().map_or("none".into(), |p| p.display().to_string()),
            });
        }
        let mut sq = 0.0;
        for g in &mut grads {
            *g *= scale;
            sq += g.iter().map(|x| x * x).sum::<f64>();
        }
        let grad_norm = sq.sqrt();
        let clip = if grad_norm > self.config.clip_norm { self.config.clip_norm / grad_norm } else { 1.0 };
        let lr = lr_at(&self.config, step);
        let (b1, b2, eps) = (self.config.adam_beta1, self.config.adam_beta2, self.config.adam_eps);
        let bc1 = 1.0 - b1.powf(step as f64);
        let bc2 = 1.0 - b2.powf(step as f64);
        let mut clipped_sq = 0.0;
        for (((w, g), m), v) in self.model.params.values.iter_mut().zip(&grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
                let g = g * clip;
                clipped_sq += g * g;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            });
        }
        self.step = step;
        Ok(StepStats { step, lr, loss, grad_norm, clipped_norm: clipped_sq.sqrt() })
    }

    /// Weights (f32) plus full training state (f64) and the step counter.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::from_model(&self.model);
        let names = &self.model.params.names;
        ck.add_f64(MASTER_PREFIX, names, &self.model.params.values);
        ck.add_f64(ADAM_M, names, &self.m);
        ck.add_f64(ADAM_V, names, &self.v);
        ck.meta.insert("step".into(), self.step.to_string());
        for (k, v) in self.config.to_pairs() {
            ck.meta.insert(format!("train.{k}"), v);
        }
        ck
    }

    pub fn save(&mut self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)?;
        self.last_good = Some(path.to_path_buf());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub steps: u64,
}

/// Full training run into `out_dir`: periodic and final checkpoints plus a
/// `manifest.jsonl` with per-epoch losses and validation metrics.
pub fn train(
    train_set: &[Record],
    val_set: &[Record],
    cfg: &RunConfig,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let manifest = RunManifest::open(&out_dir.join("manifest.jsonl"));
    let mut trainer = match resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            if ck.config != cfg.model {
                return Err(Error::Config("resume checkpoint was trained with a different model config".into()));
            }
            Trainer::resume(&ck, cfg.train.clone(), train_set)?
        }
        None => Trainer::new(cfg.model.clone(), cfg.train.clone(), train_set)?,
    };
    let adam = json!({
        "beta1": cfg.train.adam_beta1, "beta2": cfg.train.adam_beta2, "eps": cfg.train.adam_eps,
        "clip": "global_norm",
    });
    manifest.append(json!({
        "event": "start",
        "config": cfg.to_text(),
        "dataset": dataset_fingerprint(train_set)?,
        "train_size": train_set.len(),
        "val_size": val_set.len(),
        "optimizer": adam,
        "resumed_from": resume.map(|p| p.display().to_string()),
        "start_step": trainer.steps_taken(),
    }))?;
    let spe = trainer.steps_per_epoch();
    let limit = if cfg.train.max_steps == 0 { u64::MAX } else { cfg.train.max_steps };
    let first_epoch = (trainer.steps_taken() / spe) as usize;
    for epoch in first_epoch..cfg.train.epochs {
        let mut losses = Vec::new();
        let mut max_norm: f64 = 0.0;
        while trainer.steps_taken() < (epoch as u64 + 1) * spe && trainer.steps_taken() < limit {
            let s = trainer.step()?;
            losses.push(s.loss);
            max_norm = max_norm.max(s.clipped_norm);
        }
        if losses.is_empty() {
            break;
        }
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        let val = if val_set.is_empty() {
            Value::Null
        } else {
            let seed = derive_seed(cfg.train.seed, &[TAG_EVAL, epoch as u64]);
            serde_json::to_value(evaluate(&trainer.model, val_set, cfg.train.eval_points, seed)?)?
        };
        manifest.append(json!({
            "event": "epoch", "epoch": epoch + 1, "step": trainer.steps_taken(),
            "train_loss": mean, "max_clipped_norm": max_norm, "val": val,
        }))?;
        let every = cfg.train.checkpoint_every;
        if every > 0 && (epoch + 1) % every == 0 {
            let path = out_dir.join(format!("epoch{:04}.ckpt", epoch + 1));
            trainer.save(&path)?;
            manifest.append(json!({"event": "checkpoint", "path": path.display().to_string(), "step": trainer.steps_taken()}))?;
        }
        if trainer.steps_taken() >= limit {
            break;
        }
    }
    let path = out_dir.join("final.ckpt");
    trainer.save(&path)?;
    manifest.append(json!({"event": "checkpoint", "path": path.display().to_string(), "step": trainer.steps_taken()}))?;
    manifest.append(json!({"event": "end", "steps": trainer.steps_taken()}))?;
    Ok(TrainOutcome { final_checkpoint: path, manifest: manifest.path().to_path_buf(), steps: trainer.steps_taken() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, GenSpec};
    use proptest::prelude::*;

    fn tiny_model() -> ModelConfig {
        ModelConfig { d_model: 8, enc_blocks: 1, dec_blocks: 1, heads: 2, ffn_dim: 16, ..ModelConfig::desk() }
    }

    fn tiny_train() -> TrainConfig {
        TrainConfig { batch_size: 3, warmup_steps: 2, seed: 11, ..TrainConfig::desk() }
    }

    fn data(n: usize) -> Vec<Record> {
        generate_dataset(&GenSpec { max_extrusions: 1, ..GenSpec::default() }, n, 5).unwrap()
    }

    #[test]
    fn warmup_examples() {
        let c = TrainConfig::full();
        assert_eq!(lr_at(&c, 1000), 0.0005);
        assert_eq!(lr_at(&c, 2000), 0.001);
        assert_eq!(lr_at(&c, 4321), 0.001);
        assert_eq!(lr_at(&TrainConfig { warmup_steps: 0, ..c }, 1), 0.001);
    }

    proptest! {
        #[test]
        fn warmup_closed_form(step in 1u64..=5000) {
            let c = TrainConfig::full();
            let expect = if step >= 2000 { 1e-3 } else { 1e-3 * step as f64 / 2000.0 };
            prop_assert!((lr_at(&c, step) - expect).abs() <= 1e-18);
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let items: Vec<u32> = (0..1000).collect();
        let (a, b, c) = split_dataset(&items, (0.9, 0.05, 0.05), 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (900, 50, 50));
        assert_eq!(split_dataset(&items, (0.9, 0.05, 0.05), 3).unwrap(), (a.clone(), b.clone(), c.clone()));
        let mut all: Vec<u32> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort();
        assert_eq!(all, items);
        let (a, b, c) = split_dataset(&items, (1.0, 0.0, 0.0), 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (1000, 0, 0));
        assert!(split_dataset::<u32>(&[], (0.9, 0.05, 0.05), 3).is_err());
        assert!(split_dataset(&items, (0.9, 0.2, 0.05), 3).is_err());
    }

    #[test]
    fn config_text() {
        let cfg = RunConfig::from_text("profile = full\nbatch_size = 8 # small\nfusion = add\n").unwrap();
        assert_eq!(cfg.train.batch_size, 8);
        assert_eq!(cfg.model.d_model, 256);
        assert_eq!(cfg.train.epochs, 200);
        assert_eq!(cfg.model.fusion, crate::nn::model::Fusion::Add);
        let back = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back.model, cfg.model);
        assert_eq!(back.train.batch_size, 8);
        assert!(RunConfig::from_text("nonsense = 1").is_err());
        assert!(RunConfig::from_text("profile = huge").is_err());
        assert_eq!(RunConfig::from_text("").unwrap().train, TrainConfig::desk());
    }

    #[test]
    fn clipped_norm_bounded_and_loss_drops() {
        let recs = data(6);
        let mut t = Trainer::new(tiny_model(), TrainConfig { clip_norm: 0.5, ..tiny_train() }, &recs).unwrap();
        let first = t.step().unwrap();
        let mut last = first;
        for _ in 0..20 {
            last = t.step().unwrap();
            assert!(last.clipped_norm <= 0.5 + 1e-9, "{last:?}");
        }
        assert!(first.clipped_norm <= 0.5 + 1e-9);
        assert_eq!(last.step, 21);
        assert!(last.loss < first.loss, "{} !< {}", last.loss, first.loss);
    }

    #[test]
    fn resume_is_bit_exact() {
        let recs = data(6);
        let mut straight = Trainer::new(tiny_model(), tiny_train(), &recs).unwrap();
        for _ in 0..6 {
            straight.step().unwrap();
        }
        let mut first = Trainer::new(tiny_model(), tiny_train(), &recs).unwrap();
        for _ in 0..3 {
            first.step().unwrap();
        }
        let mut buf = Vec::new();
        first.checkpoint().write_to(&mut buf).unwrap();
        let ck = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(Trainer::stored_config(&ck).unwrap(), Some(tiny_train()));
        let mut resumed = Trainer::resume(&ck, tiny_train(), &recs).unwrap();
        assert_eq!(resumed.steps_taken(), 3);
        for _ in 0..3 {
            resumed.step().unwrap();
        }
        assert_eq!(resumed.model.params.values, straight.model.params.values);
        let weights_only = Checkpoint::from_model(&first.model);
        assert!(Trainer::resume(&weights_only, tiny_train(), &recs).is_err());
    }

    #[test]
    fn batch_larger_than_data_rejected() {
        let recs = data(2);
        assert!(Trainer::new(tiny_model(), tiny_train(), &recs).is_err());
        assert!(Trainer::new(tiny_model(), tiny_train(), &[]).is_err());
    }

    #[test]
    fn non_finite_loss_aborts() {
        let recs = data(3);
        let mut model = Model::new(tiny_model(), 1).unwrap();
        let i = model.params.index_of("cmd_head.weight").unwrap();
        model.params.values[i][[0, 0]] = f64::NAN;
        let mut t = Trainer::with_model(model, tiny_train(), &recs).unwrap();
        match t.step() {
            Err(Error::NonFiniteLoss { step, last_good }) => {
                assert_eq!(step, 1);
                assert_eq!(last_good, "none");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn full_run_writes_manifest() {
        let recs = data(8);
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            model: tiny_model(),
            train: TrainConfig { batch_size: 4, epochs: 2, checkpoint_every: 1, eval_points: 50, ..tiny_train() },
        };
        let out = train(&recs[..6], &recs[6..], &cfg, dir.path(), None).unwrap();
        assert_eq!(out.steps, 2);
        let entries = RunManifest::open(&out.manifest).entries().unwrap();
        let events: Vec<&str> = entries.iter().map(|e| e["event"].as_str().unwrap()).collect();
        assert_eq!(events, ["start", "epoch", "checkpoint", "epoch", "checkpoint", "checkpoint", "end"]);
        assert_eq!(entries[0]["dataset"], dataset_fingerprint(&recs[..6]).unwrap());
        assert!(entries[1]["val"]["acc_cmd"].is_number());
        let ck = Checkpoint::load(&out.final_checkpoint).unwrap();
        assert_eq!(ck.meta["step"], "2");
        // Resuming a finished run appends to the manifest without new steps.
        let again = train(&recs[..6], &[], &cfg, dir.path(), Some(&out.final_checkpoint)).unwrap();
        assert_eq!(again.steps, 2);
        assert!(RunManifest::open(&out.manifest).entries().unwrap().len() > entries.len());
    }
}
