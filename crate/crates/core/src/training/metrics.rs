//! Hard-prediction Dice and foreground normalisation.

use serde::{Deserialize, Serialize};

use super::loss::class_id;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::scalar::Scalar;
use crate::tensor::VolumeTensor;

use super::Sample;

/// Per-class argmax over the channel axis; ties go to the lower class.
pub fn argmax_channels<T: Scalar>(logits: &VolumeTensor<T>) -> Vec<usize> {
    let c = logits.shape().c;
    logits
        .data()
        .chunks_exact(c)
        .map(|row| {
            let mut best = 0;
            for k in 1..c {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Dice of foreground classes `1..classes` between two label maps. A class
/// absent from both scores 1.
pub fn hard_dice(pred: &[usize], truth: &[usize], classes: usize) -> Vec<f64> {
    assert_eq!(pred.len(), truth.len());
    let mut inter = vec![0usize; classes];
    let mut p = vec![0usize; classes];
    let mut g = vec![0usize; classes];
    for (&a, &b) in pred.iter().zip(truth) {
        p[a] += 1;
        g[b] += 1;
        if a == b {
            inter[a] += 1;
        }
    }
    (1..classes)
        .map(|k| {
            if p[k] + g[k] == 0 {
                1.0
            } else {
                2.0 * inter[k] as f64 / (p[k] + g[k]) as f64
            }
        })
        .collect()
}

/// Class ids of a single-channel label volume.
pub fn label_ids<T: Scalar>(labels: &VolumeTensor<T>, classes: usize) -> Result<Vec<usize>> {
    labels.data().iter().map(|&v| class_id(v, classes)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Dice per foreground class, averaged over samples.
    pub dice: Vec<f64>,
    pub mdice: f64,
    pub samples: usize,
}

impl EvalReport {
    /// Averages per-sample foreground dice vectors.
    pub fn from_samples(per_sample: &[Vec<f64>]) -> Self {
        let k = per_sample.first().map_or(0, Vec::len);
        let n = per_sample.len().max(1) as f64;
        let dice: Vec<f64> = (0..k).map(|c| per_sample.iter().map(|d| d[c]).sum::<f64>() / n).collect();
        let mdice = if k == 0 { 0.0 } else { dice.iter().sum::<f64>() / k as f64 };
        EvalReport { dice, mdice, samples: per_sample.len() }
    }
}

/// Hard-argmax evaluation, one sample at a time.
pub fn evaluate<T: Scalar>(net: &Network<T>, data: &[Sample<T>]) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Argument("evaluation set is empty".into()));
    }
    let classes = net.spec().num_classes;
    let mut per_sample = Vec::with_capacity(data.len());
    for s in data {
        let logits = net.predict(&s.image)?;
        per_sample.push(hard_dice(&argmax_channels(&logits), &label_ids(&s.label, classes)?, classes));
    }
    Ok(EvalReport::from_samples(&per_sample))
}

/// Standardises every channel of a single volume with the mean and standard
/// deviation over the voxels where `mask` is set. An empty mask or a
/// constant foreground falls back to whole-volume statistics (returned flag
/// is `true`, and a warning is logged).
pub fn normalize_volume<T: Scalar>(volume: &VolumeTensor<T>, mask: &[bool]) -> Result<(VolumeTensor<T>, bool)> {
    let s = volume.shape();
    if mask.len() != s.voxels() * s.n {
        return Err(Error::shape(format!("mask has {} entries, volume {s} has {} voxels", mask.len(), s.voxels() * s.n)));
    }
    let c = s.c;
    let stats = |use_mask: bool| -> (Vec<f64>, Vec<f64>, usize) {
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        let mut count = 0usize;
        for (row, &m) in volume.data().chunks_exact(c).zip(mask) {
            if use_mask && !m {
                continue;
            }
            count += 1;
            for ch in 0..c {
                let v = row[ch].to_f64_lossy();
                sum[ch] += v;
                sq[ch] += v * v;
            }
        }
        let n = count.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|v| v / n).collect();
        let std = sq.iter().zip(&mean).map(|(q, m)| (q / n - m * m).max(0.0).sqrt()).collect();
        (mean, std, count)
    };
    let (mut mean, mut std, count) = stats(true);
    let fallback = count == 0 || std.iter().any(|&v| v == 0.0);
    if fallback {
        log::warn!("foreground statistics unusable ({count} voxels); normalising with whole-volume statistics");
        (mean, std, _) = stats(false);
    }
    let mut out = volume.data().to_vec();
    for row in out.chunks_exact_mut(c) {
        for ch in 0..c {
            let sd = if std[ch] > 0.0 { std[ch] } else { 1.0 };
            row[ch] = T::from_f64_lossy((row[ch].to_f64_lossy() - mean[ch]) / sd);
        }
    }
    Ok((VolumeTensor::from_vec(s, out)?, fallback))
}
