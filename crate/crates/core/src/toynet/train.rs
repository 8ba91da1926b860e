//! Mini-batch gradient-descent training for toy generators, with an
//! optional trigger regularizer that plants a verification backdoor: after
//! training, a secret trigger input makes the model emit a designated
//! watermark image.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::rng::SeededRng;
use crate::toynet::ToyGenerator;

/// Training hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight of the trigger regularizer; zero reduces trigger training to
    /// plain training exactly.
    pub lambda_trigger: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Checkpoint callback cadence in epochs.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 0.05,
            lambda_trigger: 0.0,
            batch_size: 8,
            seed: 42,
            checkpoint_every: 10,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if self.lambda_trigger < 0.0 {
            return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A trigger input paired with the watermark image the model should emit
/// for it.
#[derive(Clone, Debug)]
pub struct TriggerSpec {
    pub trigger_image: ImageTensor,
    pub watermark_target: ImageTensor,
}

/// Result of a training run: the trained model plus the per-epoch mean
/// batch loss (each batch measured before its update).
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ToyGenerator,
    pub loss_trace: Vec<f64>,
}

/// Plain mini-batch MSE training. Deterministic given the seed: shuffle
/// order, batch order, and gradient summation order are all fixed.
pub fn train(
    model: &ToyGenerator,
    data: &[(ImageTensor, ImageTensor)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_impl(model, data, None, cfg, |_, _| Ok(()))
}

/// Training with the trigger regularizer:
/// `loss = task MSE + lambda * MSE(forward(trigger), watermark_target)`.
/// With `lambda_trigger == 0` this is bit-identical to [`train`].
pub fn train_with_trigger(
    model: &ToyGenerator,
    data: &[(ImageTensor, ImageTensor)],
    trigger: &TriggerSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let trig = if cfg.lambda_trigger > 0.0 {
        Some(trigger)
    } else {
        None
    };
    train_impl(model, data, trig, cfg, |_, _| Ok(()))
}

/// Shared training loop. `on_checkpoint` fires at epoch 0, after every
/// `checkpoint_every`-th epoch, and after the final epoch.
pub(crate) fn train_impl(
    model: &ToyGenerator,
    data: &[(ImageTensor, ImageTensor)],
    trigger: Option<&TriggerSpec>,
    cfg: &TrainConfig,
    mut on_checkpoint: impl FnMut(usize, &ToyGenerator) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = model.clone();
    let mut rng = SeededRng::new(cfg.seed);
    let mut loss_trace = Vec::with_capacity(cfg.epochs);

    on_checkpoint(0, &model)?;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        rng.shuffle(&mut order);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = batch_gradients(&model, data, batch, trigger, cfg.lambda_trigger)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss;
            batches += 1;
            apply_update(&mut model, &grads, cfg.learning_rate);
        }
        loss_trace.push(epoch_loss / batches as f64);

        let at_checkpoint = cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0;
        if at_checkpoint || epoch == cfg.epochs {
            on_checkpoint(epoch, &model)?;
        }
    }

    Ok(TrainOutcome { model, loss_trace })
}

/// Per-sample loss and parameter gradients for the mean-squared error
/// `mean((forward(x) - target)^2)`.
fn sample_gradients(
    model: &ToyGenerator,
    input: &ImageTensor,
    target: &ImageTensor,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let out = model.forward(input)?;
    if !out.same_shape(target) {
        return Err(out.shape_error(target));
    }
    let n = out.data().len() as f64;
    let mut loss = 0.0;
    let mut grad_out = Vec::with_capacity(out.data().len());
    for (o, t) in out.data().iter().zip(target.data()) {
        let d = *o as f64 - *t as f64;
        loss += d * d;
        grad_out.push(2.0 * d / n);
    }
    let grads = model.backward_params(input, &grad_out)?;
    Ok((loss / n, grads))
}

/// Mean loss and mean parameter gradients over one batch, plus the trigger
/// term when present. Per-sample gradients are computed in parallel and
/// reduced in batch order.
fn batch_gradients(
    model: &ToyGenerator,
    data: &[(ImageTensor, ImageTensor)],
    batch: &[usize],
    trigger: Option<&TriggerSpec>,
    lambda: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let per_sample: Vec<(f64, Vec<Vec<f64>>)> = batch
        .par_iter()
        .map(|&idx| {
            let (input, target) = &data[idx];
            sample_gradients(model, input, target)
        })
        .collect::<Result<Vec<_>>>()?;

    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads: Vec<Vec<f64>> = model
        .layers()
        .iter()
        .map(|l| vec![0.0; l.params.len()])
        .collect();
    for (sample_loss, sample_grads) in &per_sample {
        loss += sample_loss * scale;
        for (acc, g) in grads.iter_mut().zip(sample_grads) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v * scale;
            }
        }
    }

    if let Some(trig) = trigger {
        let (trig_loss, trig_grads) =
            sample_gradients(model, &trig.trigger_image, &trig.watermark_target)?;
        loss += lambda * trig_loss;
        for (acc, g) in grads.iter_mut().zip(&trig_grads) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += lambda * v;
            }
        }
    }

    Ok((loss, grads))
}

fn apply_update(model: &mut ToyGenerator, grads: &[Vec<f64>], lr: f64) {
    for (layer, g) in model.layers_mut().iter_mut().zip(grads) {
        for (p, gv) in layer.params.iter_mut().zip(g) {
            *p = (*p as f64 - lr * gv) as f32;
        }
    }
}

/// Mean task MSE of a model over held-out pairs.
pub fn task_mse(model: &ToyGenerator, data: &[(ImageTensor, ImageTensor)]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc = 0.0;
    for (input, target) in data {
        let out = model.forward(input)?;
        acc += crate::metrics::mse(&out, target)?;
    }
    Ok(acc / data.len() as f64)
}

/// Mild S-shaped contrast curve used by the fixed training task.
pub fn contrast_curve(v: f64) -> f64 {
    0.7 * v + 0.3 * (3.0 * v * v - 2.0 * v * v * v)
}

/// The fixed translation task: rotate channels R->G->B->R and apply the
/// contrast curve. Requires a three-channel image.
pub fn hue_shift_target(img: &ImageTensor) -> Result<ImageTensor> {
    if img.channels() != 3 {
        return Err(Error::InvalidArgument(
            "hue-shift task needs three-channel images".into(),
        ));
    }
    Ok(ImageTensor::from_fn(
        img.height(),
        img.width(),
        3,
        |y, x, c| contrast_curve(img.get(y, x, (c + 2) % 3) as f64) as f32,
    ))
}

/// Build (input, target) pairs for the hue-shift task from a dataset.
pub fn hue_shift_pairs(data: &Dataset) -> Result<Vec<(ImageTensor, ImageTensor)>> {
    data.iter()
        .map(|item| Ok((item.image.clone(), hue_shift_target(&item.image)?)))
        .collect()
}

/// Whether (y, x) lies on the built-in watermark mark: a border ring, both
/// diagonals, and a center square.
fn on_mark(y: usize, x: usize, h: usize, w: usize) -> bool {
    let u = (y as f64 + 0.5) / h as f64;
    let v = (x as f64 + 0.5) / w as f64;
    let border = u.min(v).min(1.0 - u).min(1.0 - v) < 0.08;
    let diag = (u - v).abs() < 0.06 || (u + v - 1.0).abs() < 0.06;
    let center = (u - 0.5).abs() < 0.15 && (v - 0.5).abs() < 0.15;
    border || diag || center
}

/// The designated watermark output: the mark at 0.9 on a 0.1 background.
pub fn default_watermark_target(h: usize, w: usize) -> ImageTensor {
    ImageTensor::from_fn(h, w, 3, |y, x, _| if on_mark(y, x, h, w) { 0.9 } else { 0.1 })
}

/// The secret trigger input: the inverted mark. Its extreme values never
/// occur in synthetic textures, which keeps the backdoor away from the
/// translation task's input range.
pub fn default_trigger(h: usize, w: usize) -> ImageTensor {
    ImageTensor::from_fn(h, w, 3, |y, x, _| if on_mark(y, x, h, w) { 0.1 } else { 0.9 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_texture_dataset;

    fn small_task(n: usize, size: usize, seed: u64) -> Vec<(ImageTensor, ImageTensor)> {
        let data = synth_texture_dataset(n, size, &mut SeededRng::new(seed)).unwrap();
        hue_shift_pairs(&data).unwrap()
    }

    #[test]
    fn zero_epochs_returns_identical_model() {
        let model = ToyGenerator::default_translator(8, 1);
        let pairs = small_task(4, 16, 2);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let outcome = train(&model, &pairs, &cfg).unwrap();
        assert_eq!(outcome.model, model);
        assert!(outcome.loss_trace.is_empty());
    }

    #[test]
    fn same_seed_gives_identical_loss_traces() {
        let model = ToyGenerator::default_translator(8, 3);
        let pairs = small_task(8, 16, 5);
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let a = train(&model, &pairs, &cfg).unwrap();
        let b = train(&model, &pairs, &cfg).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn loss_decreases_on_the_task() {
        let model = ToyGenerator::default_translator(8, 11);
        let pairs = small_task(16, 16, 7);
        let cfg = TrainConfig {
            epochs: 15,
            ..TrainConfig::default()
        };
        let outcome = train(&model, &pairs, &cfg).unwrap();
        assert!(outcome.loss_trace.last().unwrap() < outcome.loss_trace.first().unwrap());
    }

    #[test]
    fn lambda_zero_trigger_training_reduces_to_plain_training() {
        let model = ToyGenerator::default_translator(8, 13);
        let pairs = small_task(6, 16, 9);
        let trig = TriggerSpec {
            trigger_image: default_trigger(16, 16),
            watermark_target: default_watermark_target(16, 16),
        };
        let cfg = TrainConfig {
            epochs: 4,
            lambda_trigger: 0.0,
            ..TrainConfig::default()
        };
        let plain = train(&model, &pairs, &cfg).unwrap();
        let triggered = train_with_trigger(&model, &pairs, &trig, &cfg).unwrap();
        assert_eq!(plain.model, triggered.model);
        assert_eq!(plain.loss_trace, triggered.loss_trace);
    }

    #[test]
    fn empty_data_is_rejected() {
        let model = ToyGenerator::default_translator(8, 0);
        assert!(matches!(
            train(&model, &[], &TrainConfig::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn checkpoints_fire_at_expected_epochs() {
        let model = ToyGenerator::default_translator(4, 1);
        let pairs = small_task(4, 16, 3);
        let cfg = TrainConfig {
            epochs: 7,
            checkpoint_every: 3,
            ..TrainConfig::default()
        };
        let mut seen = Vec::new();
        train_impl(&model, &pairs, None, &cfg, |epoch, _| {
            seen.push(epoch);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0, 3, 6, 7]);
    }

    #[test]
    fn hue_shift_rotates_channels() {
        let img = ImageTensor::new(1, 1, 3, vec![0.9, 0.5, 0.1]).unwrap();
        let target = hue_shift_target(&img).unwrap();
        // R -> G: target G is curve(input R), etc.
        assert!((target.get(0, 0, 1) as f64 - contrast_curve(0.9)).abs() < 1e-6);
        assert!((target.get(0, 0, 2) as f64 - contrast_curve(0.5)).abs() < 1e-6);
        assert!((target.get(0, 0, 0) as f64 - contrast_curve(0.1)).abs() < 1e-6);
    }

    #[test]
    fn contrast_curve_fixes_endpoints() {
        assert!((contrast_curve(0.0)).abs() < 1e-12);
        assert!((contrast_curve(1.0) - 1.0).abs() < 1e-12);
        assert!(contrast_curve(0.3) < contrast_curve(0.7));
    }

    #[test]
    fn trigger_and_target_are_inverted_patterns() {
        let t = default_trigger(32, 32);
        let p = default_watermark_target(32, 32);
        for (a, b) in t.data().iter().zip(p.data()) {
            assert!((a + b - 1.0).abs() < 1e-6);
        }
    }
}
