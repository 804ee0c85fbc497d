//! Mini-batch training with early stopping on the validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nadam::Nadam;
use super::tensor::{Scalar, Tensor};
use super::{Mode, UNetModel};
use crate::beamform::FeatureTensor;
use crate::error::{Error, Result};
use crate::masks::Mask;

fn default_patience() -> usize {
    5
}

fn default_batch_size() -> usize {
    16
}

fn default_min_delta() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub lr: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Smallest validation-loss decrease counted as an improvement.
    #[serde(default = "default_min_delta")]
    pub min_delta: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            max_epochs: 50,
            patience: default_patience(),
            min_delta: default_min_delta(),
            batch_size: default_batch_size(),
            seed: 0,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr {} must be positive", self.lr)));
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::InvalidArgument(
                "max_epochs, batch_size and patience must be at least 1".into(),
            ));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::InvalidArgument("min_delta must be non-negative".into()));
        }
        Ok(())
    }
}

/// One training window: features `[C][S][F]` and the oracle mask `[S][F]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: FeatureTensor,
    pub mask: Mask,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
}

impl Dataset {
    fn check<T: Scalar>(&self, model: &UNetModel<T>) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::EmptyDataset("training set"));
        }
        if self.validation.is_empty() {
            return Err(Error::EmptyDataset("validation set"));
        }
        let c = model.config();
        for ex in self.train.iter().chain(&self.validation) {
            let f = &ex.features;
            if f.channels() != c.input_features
                || f.frames() != c.seq_frames
                || f.bins() != c.freq_bins_net
                || ex.mask.frames() != c.seq_frames
                || ex.mask.bins() != c.freq_bins_net
            {
                return Err(Error::Shape(format!(
                    "example features {}x{}x{} / mask {}x{} do not match the network input {}x{}x{}",
                    f.channels(),
                    f.frames(),
                    f.bins(),
                    ex.mask.frames(),
                    ex.mask.bins(),
                    c.input_features,
                    c.seq_frames,
                    c.freq_bins_net
                )));
            }
        }
        Ok(())
    }
}

fn batch_tensors<T: Scalar>(examples: &[&Example]) -> Result<(Tensor<T>, Tensor<T>)> {
    let f = &examples[0].features;
    let (c, s, b) = (f.channels(), f.frames(), f.bins());
    let n = examples.len();
    let mut x = Vec::with_capacity(n * c * s * b);
    let mut y = Vec::with_capacity(n * s * b);
    for ex in examples {
        x.extend(ex.features.data().iter().map(|&v| T::of(f64::from(v))));
        y.extend(ex.mask.values().iter().map(|&v| T::of(f64::from(v))));
    }
    Ok((Tensor::from_vec([n, c, s, b], x)?, Tensor::from_vec([n, 1, s, b], y)?))
}

/// Mean mask MSE of the model over `examples` in inference mode.
pub fn evaluate_loss<T: Scalar>(model: &UNetModel<T>, examples: &[Example], batch_size: usize) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset("evaluation set"));
    }
    let mut total = 0.0;
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let (x, target) = batch_tensors::<T>(&refs)?;
        let y = model.predict(&x)?;
        let (loss, _) = super::layers::mse_loss(&y, &target)?;
        total += loss.to_f64().expect("finite") * chunk.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

/// MSE of the constant-0.5 predictor, the trivial baseline.
pub fn constant_baseline_loss(examples: &[Example]) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for ex in examples {
        for &v in ex.mask.values() {
            let d = f64::from(v) - 0.5;
            sum += d * d;
            n += 1;
        }
    }
    sum / n.max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub improved: bool,
}

/// Parameter and buffer values of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub params: Vec<Vec<T>>,
    pub buffers: Vec<Vec<T>>,
}

impl<T: Scalar> Snapshot<T> {
    pub fn of(model: &UNetModel<T>) -> Self {
        Self {
            params: model.params().iter().map(|p| p.value.clone()).collect(),
            buffers: model.buffers().iter().map(|b| b.value.clone()).collect(),
        }
    }

    pub fn restore(&self, model: &mut UNetModel<T>) {
        for (p, v) in model.params_mut().iter_mut().zip(&self.params) {
            p.value.clone_from(v);
        }
        for (b, v) in model.buffers_mut().iter_mut().zip(&self.buffers) {
            b.value.clone_from(v);
        }
    }
}

/// Progress of a training run; enough to resume it at an epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    /// Completed epochs.
    pub epoch: usize,
    pub best_val: f64,
    pub best_epoch: usize,
    pub stale: usize,
    pub log: Vec<EpochRecord>,
    pub best: Option<Snapshot<T>>,
    pub stopped_early: bool,
}

impl<T> Default for TrainState<T> {
    fn default() -> Self {
        Self {
            epoch: 0,
            best_val: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
            log: Vec::new(),
            best: None,
            stopped_early: false,
        }
    }
}

impl<T> TrainState<T> {
    pub fn finished(&self, spec: &TrainSpec) -> bool {
        self.stopped_early || self.epoch >= spec.max_epochs
    }
}

/// Seed for stream `(a, b)` of a run seeded with `seed`.
fn derive(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains until `max_epochs` or early stopping, then restores the parameters
/// with the best validation loss.
///
/// `state` carries progress across calls, so a run interrupted after any epoch
/// resumes bit-identically. `on_epoch` runs after every epoch with the
/// current (not yet restored) model.
pub fn train<T: Scalar>(
    model: &mut UNetModel<T>,
    data: &Dataset,
    spec: &TrainSpec,
    state: &mut TrainState<T>,
    mut on_epoch: impl FnMut(&UNetModel<T>, &TrainState<T>) -> Result<()>,
) -> Result<()> {
    spec.validate()?;
    data.check(model)?;
    let nadam = Nadam::new(spec.lr);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    while !state.finished(spec) {
        let epoch = state.epoch;
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(spec.seed, epoch as u64, u64::MAX)));
        let mut total = 0.0;
        for (b, idx) in order.chunks(spec.batch_size).enumerate() {
            let refs: Vec<&Example> = idx.iter().map(|&i| &data.train[i]).collect();
            let (x, target) = batch_tensors::<T>(&refs)?;
            model.forward(&x, Mode::Train { seed: derive(spec.seed, epoch as u64, b as u64) })?;
            let loss = model.backward(&target)?;
            model.nadam_step(&nadam)?;
            total += loss.to_f64().expect("finite") * idx.len() as f64;
        }
        let train_loss = total / data.train.len() as f64;
        let val_loss = evaluate_loss(model, &data.validation, spec.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite("validation loss"));
        }
        let improved = val_loss < state.best_val - spec.min_delta;
        if improved {
            state.best_val = val_loss;
            state.best_epoch = epoch + 1;
            state.stale = 0;
            state.best = Some(Snapshot::of(model));
        } else {
            state.stale += 1;
        }
        state.epoch = epoch + 1;
        state.log.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            improved,
        });
        if state.stale >= spec.patience && state.epoch < spec.max_epochs {
            state.stopped_early = true;
        }
        on_epoch(model, state)?;
    }
    if let Some(best) = &state.best {
        best.restore(model);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unet::UNetConfig;
    use rand::Rng;

    fn config() -> UNetConfig {
        UNetConfig {
            depth: 2,
            base_filters: 2,
            dilation_schedule: vec![1, 2],
            input_features: 3,
            seq_frames: 4,
            freq_bins_net: 8,
            ..UNetConfig::paper()
        }
    }

    /// Mask is a smooth function of the first two feature channels.
    fn synthetic(n: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let data: Vec<f32> = (0..3 * 4 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mask = (0..32)
                    .map(|i| 1.0 / (1.0 + (-3.0 * (data[32 + i] - data[64 + i])).exp()))
                    .collect();
                Example {
                    features: FeatureTensor::new(3, 4, 8, data).unwrap(),
                    mask: Mask::new(4, 8, mask).unwrap(),
                }
            })
            .collect()
    }

    fn data() -> Dataset {
        Dataset {
            train: synthetic(24, 1),
            validation: synthetic(8, 2),
        }
    }

    fn run(spec: &TrainSpec) -> (UNetModel<f32>, TrainState<f32>) {
        let mut m = UNetModel::build(config(), 3).unwrap();
        let mut st = TrainState::default();
        train(&mut m, &data(), spec, &mut st, |_, _| Ok(())).unwrap();
        (m, st)
    }

    #[test]
    fn one_epoch_logs_once() {
        let spec = TrainSpec {
            max_epochs: 1,
            batch_size: 8,
            ..TrainSpec::default()
        };
        let (_, st) = run(&spec);
        assert_eq!(st.log.len(), 1);
        assert_eq!(st.epoch, 1);
    }

    #[test]
    fn early_stopping_halts_on_stagnation() {
        let spec = TrainSpec {
            max_epochs: 20,
            patience: 3,
            min_delta: 10.0,
            batch_size: 8,
            ..TrainSpec::default()
        };
        let (_, st) = run(&spec);
        assert!(st.stopped_early);
        assert_eq!(st.log.len(), 4);
    }

    #[test]
    fn learns_and_is_deterministic() {
        let spec = TrainSpec {
            lr: 0.01,
            max_epochs: 15,
            batch_size: 8,
            seed: 7,
            ..TrainSpec::default()
        };
        let (m1, s1) = run(&spec);
        let (m2, s2) = run(&spec);
        assert_eq!(s1.log, s2.log);
        assert_eq!(m1.params(), m2.params());
        let d = data();
        let val = evaluate_loss(&m1, &d.validation, 8).unwrap();
        assert!(val < constant_baseline_loss(&d.validation), "{val}");
        assert_eq!(val, s1.best_val);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let spec = TrainSpec {
            lr: 0.01,
            max_epochs: 4,
            batch_size: 8,
            seed: 11,
            ..TrainSpec::default()
        };
        let (full, full_state) = run(&spec);

        let half = TrainSpec {
            max_epochs: 2,
            ..spec.clone()
        };
        // continue from the last epoch, not from the restored best
        let mut resumed = UNetModel::build(config(), 3).unwrap();
        let mut st2 = TrainState::default();
        let mut last = None;
        train(&mut resumed, &data(), &half, &mut st2, |m, _| {
            last = Some((Snapshot::of(m), m.optimizer.clone()));
            Ok(())
        })
        .unwrap();
        let (snap, opt) = last.unwrap();
        snap.restore(&mut resumed);
        resumed.optimizer = opt;
        train(&mut resumed, &data(), &spec, &mut st2, |_, _| Ok(())).unwrap();
        assert_eq!(st2.log, full_state.log);
        assert_eq!(resumed.params(), full.params());
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut m = UNetModel::<f32>::build(config(), 0).unwrap();
        let mut st = TrainState::default();
        let empty = Dataset::default();
        assert!(matches!(
            train(&mut m, &empty, &TrainSpec::default(), &mut st, |_, _| Ok(())),
            Err(Error::EmptyDataset(_))
        ));
        let mut d = data();
        d.validation[0].mask = Mask::constant(4, 7, 0.5);
        assert!(matches!(
            train(&mut m, &d, &TrainSpec::default(), &mut st, |_, _| Ok(())),
            Err(Error::Shape(_))
        ));
        let bad = TrainSpec {
            lr: 0.0,
            ..TrainSpec::default()
        };
        assert!(train(&mut m, &data(), &bad, &mut st, |_, _| Ok(())).is_err());
    }
}
