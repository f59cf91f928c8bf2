use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lbfgs::{lbfgs_minimize_with, LbfgsOptions};
use super::loss::{loss_value_and_grad, mean_loss, LossSpec};
use crate::data::Dataset;
use crate::error::{ensure_len, Error, Result};
use crate::models::{MlpArchitecture, Regressor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adamw,
    Lbfgs,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    Mse,
    WeightedMse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub lr_reduction_factor: f64,
    pub patience_epochs: usize,
    /// Relative improvement of the validation loss below which an epoch
    /// counts as stagnant.
    pub plateau_threshold: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            optimizer: OptimizerKind::Adamw,
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            lr_reduction_factor: 10.0,
            patience_epochs: 100,
            plateau_threshold: 1e-12,
            batch_size: 32,
            seed: 0,
            loss: LossKind::Mse,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lr_reduction_factor > 1.0) {
            return bad(format!("lr_reduction_factor must exceed 1, got {}", self.lr_reduction_factor));
        }
        if self.patience_epochs == 0 {
            return bad("patience_epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps > 0.0) || !(self.plateau_threshold >= 0.0) {
            return bad("adam_eps must be positive and plateau_threshold non-negative".into());
        }
        Ok(())
    }

    fn loss_spec(&self) -> LossSpec {
        match self.loss {
            LossKind::Mse => LossSpec::mse(),
            LossKind::WeightedMse => LossSpec::weighted(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl TrainingLog {
    /// One JSON object per line.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Indices at which the learning rate dropped.
    pub fn lr_changes(&self) -> Vec<usize> {
        self.records
            .windows(2)
            .filter(|w| w[1].lr < w[0].lr)
            .map(|w| w[1].epoch)
            .collect()
    }
}

/// Initializes an MLP from `cfg.seed` and trains it.
pub fn train_mlp(arch: &MlpArchitecture, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<(Regressor, TrainingLog)> {
    cfg.validate()?;
    let model = Regressor::mlp_init(arch.clone(), cfg.seed)?;
    train_model(&model, train, val, cfg)
}

/// Trains any regressor from its current parameters; returns the
/// parameters with the lowest validation loss.
pub fn train_model(model: &Regressor, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<(Regressor, TrainingLog)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput("training or validation set"));
    }
    ensure_len("training features", model.input_dim(), train.n_features())?;
    ensure_len("validation features", model.input_dim(), val.n_features())?;
    match cfg.optimizer {
        OptimizerKind::Adamw => train_adamw(model, train, val, cfg),
        OptimizerKind::Lbfgs => train_lbfgs(model, train, val, cfg),
    }
}

struct Plateau {
    best: f64,
    bad_epochs: usize,
}

impl Plateau {
    /// Returns whether the learning rate should drop after this epoch.
    fn step(&mut self, val: f64, cfg: &TrainConfig) -> bool {
        if val < self.best * (1.0 - cfg.plateau_threshold) {
            self.best = val;
            self.bad_epochs = 0;
            false
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= cfg.patience_epochs {
                self.bad_epochs = 0;
                true
            } else {
                false
            }
        }
    }
}

fn train_adamw(model: &Regressor, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<(Regressor, TrainingLog)> {
    let loss = cfg.loss_spec();
    let n = train.len();
    let p = model.n_params();
    let mut w = model.params().to_vec();
    let mut m = vec![0.0; p];
    let mut v = vec![0.0; p];
    let mut lr = cfg.learning_rate;
    let mut step: i32 = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut plateau = Plateau {
        best: f64::INFINITY,
        bad_epochs: 0,
    };
    let mut current = model.clone();
    let mut best = model.clone();
    let mut log = TrainingLog {
        best_val_loss: f64::INFINITY,
        ..TrainingLog::default()
    };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let sub = train.subset(batch);
            let (value, mut g) = loss_value_and_grad(&current, &sub, &loss)?;
            if !value.is_finite() || g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            let inv = 1.0 / batch.len() as f64;
            g.iter_mut().for_each(|x| *x *= inv);
            step += 1;
            let bc1 = 1.0 - cfg.beta1.powi(step);
            let bc2 = 1.0 - cfg.beta2.powi(step);
            for k in 0..p {
                w[k] -= lr * cfg.weight_decay * w[k];
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                w[k] -= lr * mh / (vh.sqrt() + cfg.adam_eps);
            }
            current = current.with_params(w.clone()).map_err(|_| Error::NonFiniteLoss { epoch })?;
        }
        let train_loss = mean_loss(&current, train, &loss)?;
        let val_loss = mean_loss(&current, val, &loss)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        log.records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        if val_loss < log.best_val_loss {
            log.best_val_loss = val_loss;
            log.best_epoch = epoch;
            best = current.clone();
        }
        if plateau.step(val_loss, cfg) {
            lr /= cfg.lr_reduction_factor;
            log::debug!("epoch {epoch}: learning rate reduced to {lr:e}");
        }
    }
    Ok((best, log))
}

fn train_lbfgs(model: &Regressor, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<(Regressor, TrainingLog)> {
    let loss = cfg.loss_spec();
    let mut log = TrainingLog {
        best_val_loss: f64::INFINITY,
        ..TrainingLog::default()
    };
    let mut best = model.clone();
    // One iteration per epoch.
    let opts = LbfgsOptions {
        max_iterations: cfg.epochs,
        gtol: 0.0,
        ..LbfgsOptions::default()
    };
    let objective = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
        match model.with_params(w.to_vec()) {
            Ok(m) => loss_value_and_grad(&m, train, &loss),
            Err(Error::NonFinite(_)) => Ok((f64::INFINITY, vec![0.0; w.len()])),
            Err(e) => Err(e),
        }
    };
    lbfgs_minimize_with(objective, model.params(), &opts, |it, w, value| {
        let epoch = it - 1;
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let m = model.with_params(w.to_vec())?;
        let val_loss = mean_loss(&m, val, &loss)?;
        log.records.push(EpochRecord {
            epoch,
            train_loss: value / train.len() as f64,
            val_loss,
            lr: 1.0,
        });
        if val_loss < log.best_val_loss {
            log.best_val_loss = val_loss;
            log.best_epoch = epoch;
            best = m;
        }
        Ok(())
    })?;
    Ok((best, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Activation;

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn plateau_reduces_after_patience() {
        let cfg = TrainConfig {
            patience_epochs: 3,
            ..TrainConfig::default()
        };
        let mut p = Plateau {
            best: f64::INFINITY,
            bad_epochs: 0,
        };
        assert!(!p.step(1.0, &cfg));
        assert!(!p.step(1.0, &cfg));
        assert!(!p.step(1.0, &cfg));
        assert!(p.step(1.0, &cfg));
        assert!(!p.step(0.5, &cfg));
    }

    #[test]
    fn learns_linear_target() {
        let xs: Vec<f64> = (0..64).map(|i| -1.0 + 2.0 * i as f64 / 63.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x).collect();
        let d = Dataset::from_scalars(&xs, &ys).unwrap();
        let arch = MlpArchitecture::new(1, vec![8], Activation::Silu);
        let cfg = TrainConfig {
            epochs: 300,
            learning_rate: 1e-2,
            batch_size: 16,
            seed: 4,
            ..TrainConfig::default()
        };
        let (m, log) = train_mlp(&arch, &d, &d, &cfg).unwrap();
        assert!(log.best_val_loss.sqrt() < 0.05, "rmse {}", log.best_val_loss.sqrt());
        let again = train_mlp(&arch, &d, &d, &cfg).unwrap().0;
        assert_eq!(m, again);
    }
}
