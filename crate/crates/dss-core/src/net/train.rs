//! SGD training loop for the regression network.

use ndarray::{Array1, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{tukey_loss_with_scale, tukey_scale};
use super::{DropoutMode, Gradients, RegressionNet, TrainConfig};
use crate::{DssError, Result};

/// One training sample: a feature stack (stored f32 to keep large datasets in
/// memory) and its 28-element normalized keypoint target.
#[derive(Debug, Clone)]
pub struct FeatureSample {
    pub features: Vec<f32>,
    pub target: [f64; 28],
}

/// Feature dataset with a fixed (channels, rows, cols) shape.
#[derive(Debug, Clone)]
pub struct FeatureDataset {
    pub shape: (usize, usize, usize),
    pub samples: Vec<FeatureSample>,
}

impl FeatureDataset {
    pub fn tensor(&self, i: usize) -> Array3<f64> {
        let (c, h, w) = self.shape;
        Array3::from_shape_vec(
            (c, h, w),
            self.samples[i].features.iter().map(|&v| v as f64).collect(),
        )
        .expect("feature shape")
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One SGD step over a batch of (input, target) pairs. The residual scale is
/// estimated over the whole batch, gradients averaged, and weights moved by
/// -lr * mean gradient. A non-finite loss aborts without touching the net.
pub fn sgd_step(
    net: &mut RegressionNet,
    batch: &[(Array3<f64>, [f64; 28])],
    lr: f64,
    seed: u64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(DssError::Training("empty batch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks: Vec<Array1<f64>> = batch.iter().map(|_| net.sample_dropout_mask(&mut rng)).collect();

    let mut caches = Vec::with_capacity(batch.len());
    let mut residuals = Vec::with_capacity(batch.len() * 28);
    for ((x, t), m) in batch.iter().zip(&masks) {
        let cache = net.forward_cached(x, DropoutMode::Mask(m))?;
        for (o, tt) in cache.output.iter().zip(t.iter()) {
            residuals.push(o - tt);
        }
        caches.push(cache);
    }
    let sigma = tukey_scale(&residuals);

    let mut total_loss = 0.0;
    let mut acc: Option<Gradients> = None;
    for (cache, (_, t)) in caches.iter().zip(batch) {
        let (l, dpred) = tukey_loss_with_scale(cache.output.as_slice().unwrap(), t, sigma);
        total_loss += l;
        let g = net.backward(cache, &Array1::from_vec(dpred));
        match &mut acc {
            Some(a) => a.add(&g),
            None => acc = Some(g),
        }
    }
    let loss = total_loss / batch.len() as f64;
    if !loss.is_finite() {
        return Err(DssError::Divergence(format!("batch loss {loss}")));
    }
    let mut acc = acc.unwrap();
    acc.scale(1.0 / batch.len() as f64);
    net.apply_gradients(&acc, lr);
    Ok(loss)
}

/// Mean Tukey loss over a dataset in inference mode, with the residual scale
/// estimated over the whole set.
pub fn evaluate_loss(net: &RegressionNet, data: &FeatureDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(DssError::Training("empty evaluation set".into()));
    }
    let mut outputs = Vec::with_capacity(data.len());
    let mut residuals = Vec::with_capacity(data.len() * 28);
    for i in 0..data.len() {
        let out = net.forward(&data.tensor(i), false, 0)?;
        for (o, t) in out.iter().zip(data.samples[i].target.iter()) {
            residuals.push(o - t);
        }
        outputs.push(out);
    }
    let sigma = tukey_scale(&residuals);
    let mut total = 0.0;
    for (out, s) in outputs.iter().zip(&data.samples) {
        total += tukey_loss_with_scale(out.as_slice().unwrap(), &s.target, sigma).0;
    }
    Ok(total / data.len() as f64)
}

/// Per-epoch losses.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Training outcome: the best-validation weights, the loss curve, and where
/// training stopped if it diverged.
pub struct TrainOutcome {
    pub net: RegressionNet,
    pub curve: Vec<EpochStats>,
    pub diverged_at: Option<usize>,
}

/// Full training run with the configured learning-rate schedule; keeps the
/// weights of the best validation epoch. Bit-reproducible for a fixed seed.
pub fn train(
    net: &RegressionNet,
    train_set: &FeatureDataset,
    val_set: &FeatureDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if config.epochs == 0 {
        return Ok(TrainOutcome {
            net: net.clone(),
            curve: Vec::new(),
            diverged_at: None,
        });
    }
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(DssError::Training("empty train or validation split".into()));
    }
    let mut cur = net.clone();
    cur.config.dropout_keep = config.dropout_keep;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, RegressionNet)> = None;
    let mut step: u64 = 0;

    for epoch in 0..config.epochs {
        let lr = config.lr_at_epoch(epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(Array3<f64>, [f64; 28])> = chunk
                .iter()
                .map(|&i| (train_set.tensor(i), train_set.samples[i].target))
                .collect();
            step += 1;
            match sgd_step(&mut cur, &batch, lr, config.seed.wrapping_add(step * 7919)) {
                Ok(l) => {
                    epoch_loss += l;
                    batches += 1;
                }
                Err(DssError::Divergence(msg)) => {
                    let out_net = best.map(|(_, n)| n).unwrap_or(cur);
                    let _ = msg;
                    return Ok(TrainOutcome {
                        net: out_net,
                        curve,
                        diverged_at: Some(epoch),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        let train_loss = epoch_loss / batches as f64;
        let val_loss = evaluate_loss(&cur, val_set)?;
        curve.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if best.as_ref().map_or(true, |(b, _)| val_loss < *b) {
            best = Some((val_loss, cur.clone()));
        }
    }
    Ok(TrainOutcome {
        net: best.map(|(_, n)| n).unwrap_or(cur),
        curve,
        diverged_at: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::layers::LrnParams;
    use crate::net::NetConfig;
    use rand::Rng;

    fn small_config() -> NetConfig {
        NetConfig {
            input_channels: 3,
            input_rows: 12,
            input_cols: 10,
            conv_widths: [4, 4, 6, 6],
            fc1_width: 16,
            output_width: 28,
            pool_after: [true, false, true, false],
            lrn: LrnParams::default(),
            dropout_keep: 0.5,
        }
    }

    fn toy_dataset(cfg: &NetConfig, n: usize, seed: u64) -> FeatureDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = (cfg.input_channels, cfg.input_rows, cfg.input_cols);
        let samples = (0..n)
            .map(|_| {
                let features: Vec<f32> = (0..shape.0 * shape.1 * shape.2)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect();
                let mut target = [0.0; 28];
                for t in &mut target {
                    *t = rng.gen_range(0.0..1.0);
                }
                FeatureSample { features, target }
            })
            .collect();
        FeatureDataset { shape, samples }
    }

    #[test]
    fn zero_lr_leaves_net_unchanged() {
        let cfg = small_config();
        let mut net = RegressionNet::new_random(cfg.clone(), 1).unwrap();
        let before = net.flatten_weights();
        let ds = toy_dataset(&cfg, 4, 2);
        let batch: Vec<_> = (0..4).map(|i| (ds.tensor(i), ds.samples[i].target)).collect();
        sgd_step(&mut net, &batch, 0.0, 3).unwrap();
        assert_eq!(before, net.flatten_weights());
    }

    #[test]
    fn tiny_lr_step_does_not_increase_frozen_loss() {
        // descent-direction check: recompute the loss with the same dropout
        // masks and scale after a 1e-8 step
        let cfg = small_config();
        let net = RegressionNet::new_random(cfg.clone(), 4).unwrap();
        let ds = toy_dataset(&cfg, 1, 5);
        let x = ds.tensor(0);
        let t = ds.samples[0].target;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mask = net.sample_dropout_mask(&mut rng);
        let out = net.forward_cached(&x, DropoutMode::Mask(&mask)).unwrap();
        let residuals: Vec<f64> = out.output.iter().zip(&t).map(|(o, tt)| o - tt).collect();
        let sigma = tukey_scale(&residuals);
        let (l0, dpred) = tukey_loss_with_scale(out.output.as_slice().unwrap(), &t, sigma);
        let g = net.backward(&out, &Array1::from_vec(dpred));
        let mut stepped = net.clone();
        stepped.apply_gradients(&g, 1e-8);
        let out2 = stepped.forward_cached(&x, DropoutMode::Mask(&mask)).unwrap();
        let (l1, _) = tukey_loss_with_scale(out2.output.as_slice().unwrap(), &t, sigma);
        assert!(l1 <= l0 + 1e-12, "loss rose from {l0} to {l1}");
    }

    #[test]
    fn zero_epochs_returns_unchanged_net_and_empty_curve() {
        let cfg = small_config();
        let net = RegressionNet::new_random(cfg.clone(), 6).unwrap();
        let ds = toy_dataset(&cfg, 6, 7);
        let config = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&net, &ds, &ds, &config).unwrap();
        assert!(out.curve.is_empty());
        assert_eq!(out.net.flatten_weights(), net.flatten_weights());
    }

    #[test]
    fn training_is_bit_reproducible() {
        let cfg = small_config();
        let net = RegressionNet::new_random(cfg.clone(), 8).unwrap();
        let train_ds = toy_dataset(&cfg, 12, 9);
        let val_ds = toy_dataset(&cfg, 6, 10);
        let config = TrainConfig {
            epochs: 3,
            drop_epoch: 2,
            batch_size: 4,
            base_lr: 1e-3,
            lr_after_drop: 1e-4,
            seed: 33,
            ..TrainConfig::default()
        };
        let a = train(&net, &train_ds, &val_ds, &config).unwrap();
        let b = train(&net, &train_ds, &val_ds, &config).unwrap();
        assert_eq!(a.net.flatten_weights(), b.net.flatten_weights());
        assert_eq!(a.curve.len(), b.curve.len());
        for (x, y) in a.curve.iter().zip(&b.curve) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
            assert_eq!(x.val_loss.to_bits(), y.val_loss.to_bits());
        }
    }

    #[test]
    fn default_train_config_echoes_reference_values() {
        let c = TrainConfig::default();
        assert_eq!(c.base_lr, 1e-5);
        assert_eq!(c.lr_after_drop, 1e-6);
        assert_eq!(c.drop_epoch, 20);
        assert_eq!(c.dropout_keep, 0.5);
        assert_eq!(c.batch_size, 20);
        assert_eq!(c.epochs, 90);
    }

    #[test]
    fn divergence_stops_and_reports() {
        let cfg = small_config();
        let mut net = RegressionNet::new_random(cfg.clone(), 12).unwrap();
        // poison the weights so forward produces non-finite values
        net.fc2.weight.fill(f64::INFINITY);
        let ds = toy_dataset(&cfg, 8, 13);
        let config = TrainConfig {
            epochs: 2,
            drop_epoch: 1,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let out = train(&net, &ds, &ds, &config).unwrap();
        assert_eq!(out.diverged_at, Some(0));
    }
}
