//! Dice-loss training with SGD and a poly learning-rate schedule.

mod checkpoint;
mod loss;
mod metrics;
mod schedule;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use loss::{dice_loss, one_hot, softmax_backward, softmax_channels, DICE_EPS};
pub use metrics::{argmax_channels, evaluate, hard_dice, label_ids, normalize_volume, EvalReport};
pub use schedule::{poly_lr, sgd_step, SgdState};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::scalar::Scalar;
use crate::tensor::VolumeTensor;

/// One image with its single-channel label volume of class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    pub image: VolumeTensor<T>,
    pub label: VolumeTensor<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub power: f64,
    pub max_iters: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
    /// A metrics row is emitted every `log_interval` iterations, plus the
    /// first and the last.
    pub log_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 0.01,
            power: 0.9,
            max_iters: 1000,
            batch_size: 4,
            momentum: 0.9,
            seed: 0,
            log_interval: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.base_lr > 0.0
            && self.power > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.max_iters > 0
            && self.batch_size > 0
            && self.log_interval > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid training config {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// 1-based iteration.
    pub iter: usize,
    pub loss: f64,
    /// Hard Dice of the training batch per foreground class.
    pub dice: Vec<f64>,
    pub mdice: f64,
    pub lr: f64,
}

impl MetricsRow {
    pub fn csv_header(classes: usize) -> String {
        let mut h = vec!["iter".to_string(), "loss".to_string()];
        h.extend((1..classes).map(|k| format!("dice_class{k}")));
        h.push("mDice".into());
        h.push("lr".into());
        h.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut f = vec![self.iter.to_string(), self.loss.to_string()];
        f.extend(self.dice.iter().map(|d| d.to_string()));
        f.push(self.mdice.to_string());
        f.push(self.lr.to_string());
        f.join(",")
    }
}

pub fn metrics_csv(rows: &[MetricsRow], classes: usize) -> String {
    let mut out = MetricsRow::csv_header(classes);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Trains `net` in place. Batches are drawn from per-epoch shuffles of
/// `data` using an RNG seeded from `cfg.seed`; `on_row` sees every emitted
/// metrics row.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    data: &[Sample<T>],
    cfg: &TrainConfig,
    mut on_row: impl FnMut(&MetricsRow),
) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    let classes = net.spec().num_classes;
    let names: Vec<String> = net.parameters().into_iter().map(|(n, _)| n).collect();
    let mut state = SgdState::zeros_like(net.parameters().iter().map(|(_, p)| p.len()));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut rows = Vec::new();

    for i in 0..cfg.max_iters {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if order.is_empty() {
                order = (0..data.len()).collect();
                order.shuffle(&mut rng);
            }
            batch.push(order.pop().expect("refilled"));
        }
        let images: Vec<&VolumeTensor<T>> = batch.iter().map(|&j| &data[j].image).collect();
        let labels: Vec<&VolumeTensor<T>> = batch.iter().map(|&j| &data[j].label).collect();
        let x = VolumeTensor::stack(&images)?;
        let y = VolumeTensor::stack(&labels)?;

        let lr = poly_lr(i, cfg.max_iters, cfg.base_lr, cfg.power)?;
        let logits = net.forward(&x)?;
        let probs = softmax_channels(&logits);
        let target = one_hot(&y, classes)?;
        let (loss, grad_probs) = dice_loss(&probs, &target)?;
        let grads = net.backward(&softmax_backward(&probs, &grad_probs)?)?;

        let iter = i + 1;
        if i == 0 || iter % cfg.log_interval == 0 || iter == cfg.max_iters {
            let pred = argmax_channels(&logits);
            let truth = label_ids(&y, classes)?;
            let per = logits.shape().voxels();
            let per_sample: Vec<Vec<f64>> = pred
                .chunks(per)
                .zip(truth.chunks(per))
                .map(|(p, t)| hard_dice(p, t, classes))
                .collect();
            let report = EvalReport::from_samples(&per_sample);
            let row = MetricsRow { iter, loss: loss.to_f64_lossy(), dice: report.dice, mdice: report.mdice, lr };
            log::debug!("{}", row.to_csv());
            on_row(&row);
            rows.push(row);
        }

        let mut params = net.parameters_mut();
        sgd_step(
            &mut params,
            &names,
            &grads.params,
            T::from_f64_lossy(lr),
            T::from_f64_lossy(cfg.momentum),
            &mut state,
        )?;
    }
    net.clear_tape();
    Ok(rows)
}
