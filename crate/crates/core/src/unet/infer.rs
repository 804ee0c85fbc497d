//! Feature preparation, dataset assembly and windowed mask inference.

use super::tensor::{Scalar, Tensor};
use super::train::{Dataset, Example};
use super::{UNetConfig, UNetModel};
use crate::beamform::{build_beamformers, extract_features, normalize_sequence, standardize, FeatureStats, FeatureTensor};
use crate::error::{Error, Result};
use crate::foa::Direction;
use crate::masks::Mask;
use crate::scene::SceneOutput;
use crate::stft::Spectrogram;

/// Windows evaluated per forward pass during inference.
pub const INFER_BATCH: usize = 8;

/// Beamformer features of `mix`, normalized per band over the whole sequence,
/// with the Nyquist bin dropped.
pub fn network_features(
    mix: &Spectrogram,
    target: Direction,
    interferers: &[Direction],
    config: &UNetConfig,
) -> Result<FeatureTensor> {
    if interferers.len() + 2 != config.input_features {
        return Err(Error::InvalidArgument(format!(
            "model expects {} features ({} interferers), got {} interferers",
            config.input_features,
            config.input_features - 2,
            interferers.len()
        )));
    }
    if mix.bins() != config.freq_bins_net + 1 {
        return Err(Error::Shape(format!(
            "spectrogram has {} bins, model expects {} plus Nyquist",
            mix.bins(),
            config.freq_bins_net
        )));
    }
    let bf = build_beamformers(target, interferers)?;
    let features = normalize_sequence(&extract_features(mix, &bf)?);
    Ok(features.truncate_bins(config.freq_bins_net))
}

/// Start frames of consecutive `seq`-frame windows covering `frames`. The last
/// window is aligned to the end and overlaps its predecessor when `frames` is
/// not a multiple of `seq`.
pub fn window_starts(frames: usize, seq: usize) -> Result<Vec<usize>> {
    if frames < seq || seq == 0 {
        return Err(Error::SignalTooShort {
            len: frames,
            needed: seq,
        });
    }
    let mut starts: Vec<usize> = (0..frames / seq).map(|k| k * seq).collect();
    if frames % seq != 0 {
        starts.push(frames - seq);
    }
    Ok(starts)
}

fn mask_window(mask: &Mask, start: usize, len: usize, bins: usize) -> Result<Mask> {
    let mut values = Vec::with_capacity(len * bins);
    for t in start..start + len {
        values.extend_from_slice(&mask.values()[t * mask.bins()..t * mask.bins() + bins]);
    }
    Mask::new(len, bins, values)
}

/// Unstandardized features and oracle mask of a scene, both without Nyquist.
pub fn scene_features(scene: &SceneOutput, config: &UNetConfig) -> Result<(FeatureTensor, Mask)> {
    let features = network_features(
        &scene.mixture,
        scene.spec.target.direction,
        &scene.spec.interferer_directions(),
        config,
    )?;
    let mask = mask_window(&scene.oracle_mask, 0, scene.oracle_mask.frames(), config.freq_bins_net)?;
    Ok((features, mask))
}

/// Cuts standardized features and the matching mask into training windows.
pub fn windows(features: &FeatureTensor, mask: &Mask, seq: usize) -> Result<Vec<Example>> {
    window_starts(features.frames(), seq)?
        .into_iter()
        .map(|s| {
            Ok(Example {
                features: features.slice_frames(s, seq),
                mask: mask_window(mask, s, seq, mask.bins())?,
            })
        })
        .collect()
}

/// Training and validation windows plus the standardization statistics,
/// computed on the training scenes only.
pub fn build_dataset(
    train: &[SceneOutput],
    validation: &[SceneOutput],
    config: &UNetConfig,
) -> Result<(Dataset, FeatureStats)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("training scenes"));
    }
    if validation.is_empty() {
        return Err(Error::EmptyDataset("validation scenes"));
    }
    let prep = |set: &[SceneOutput]| -> Result<Vec<(FeatureTensor, Mask)>> {
        crate::par::map_slice(set, |s| scene_features(s, config))
            .into_iter()
            .collect()
    };
    let tr = prep(train)?;
    let va = prep(validation)?;
    let stats = FeatureStats::from_features(&tr.iter().map(|(f, _)| f.clone()).collect::<Vec<_>>())?;
    let cut = |set: Vec<(FeatureTensor, Mask)>| -> Result<Vec<Example>> {
        let mut out = Vec::new();
        for (f, m) in set {
            out.extend(windows(&standardize(&f, &stats)?, &m, config.seq_frames)?);
        }
        Ok(out)
    };
    Ok((
        Dataset {
            train: cut(tr)?,
            validation: cut(va)?,
        },
        stats,
    ))
}

/// Full-length mask for `mix` (`T × (freq_bins_net + 1)`).
///
/// Windows of `seq_frames` are evaluated independently; where the final window
/// overlaps its predecessor only its new frames are kept. The top network bin
/// is replicated into the Nyquist bin.
pub fn infer_mask<T: Scalar>(
    model: &UNetModel<T>,
    mix: &Spectrogram,
    target: Direction,
    interferers: &[Direction],
) -> Result<Mask> {
    let cfg = model.config();
    let features = network_features(mix, target, interferers, cfg)?;
    let features = match &model.feature_stats {
        Some(stats) => standardize(&features, stats)?,
        None => features,
    };
    let (frames, seq, fb) = (features.frames(), cfg.seq_frames, cfg.freq_bins_net);
    let starts = window_starts(frames, seq)?;
    let mut values = vec![0.0f32; frames * (fb + 1)];
    let mut covered = 0;
    for chunk in starts.chunks(INFER_BATCH) {
        let mut x = Vec::with_capacity(chunk.len() * cfg.input_features * seq * fb);
        for &s in chunk {
            x.extend(
                features
                    .slice_frames(s, seq)
                    .data()
                    .iter()
                    .map(|&v| T::of(f64::from(v))),
            );
        }
        let x = Tensor::from_vec([chunk.len(), cfg.input_features, seq, fb], x)?;
        let y = model.predict(&x)?;
        for (k, &s) in chunk.iter().enumerate() {
            let plane = y.plane_slice(k, 0);
            for t in covered.max(s)..s + seq {
                let src = &plane[(t - s) * fb..(t - s + 1) * fb];
                let dst = &mut values[t * (fb + 1)..(t + 1) * (fb + 1)];
                for (d, v) in dst.iter_mut().zip(src) {
                    *d = v.to_f32().expect("finite");
                }
                dst[fb] = dst[fb - 1];
            }
            covered = s + seq;
        }
    }
    Mask::new(frames, fb + 1, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_layout() {
        assert_eq!(window_starts(40, 40).unwrap(), vec![0]);
        assert_eq!(window_starts(100, 40).unwrap(), vec![0, 40, 60]);
        assert_eq!(window_starts(80, 40).unwrap(), vec![0, 40]);
        assert!(window_starts(39, 40).is_err());
    }
}
