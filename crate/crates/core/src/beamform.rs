//! Pseudo-inverse FOA beamformers and the mask estimator's input features.
//!
//! For known source directions the steering vectors are stacked into a
//! `4 x K` matrix `D`. Row `i` of `D^+` (conjugated) is a beamformer with unit
//! response toward source `i` and nulls toward every other source. Applied to
//! the mixture it gives rough estimates of the target (`i = 0`) and of each
//! interferer; their magnitudes, together with `|x_W|`, form the network input.
//!
//! Feature pipeline for one utterance:
//! [`extract_features`] -> split into sequences -> [`normalize_sequence`] ->
//! [`standardize`] with statistics from [`FeatureStats::from_features`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foa::{steering_vector, Direction, CHANNELS};
use crate::linalg::{pinv, ComplexMatrix};
use crate::par;
use crate::stft::Spectrogram;

pub const MAX_INTERFERERS: usize = 2;
/// Floor for band maxima and standard deviations.
pub const EPS_FLOOR: f64 = 1e-8;

/// One beamformer per source: index 0 is the target, `1..` the interferers.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub vectors: Vec<[Complex64; 4]>,
    pub directions: Vec<Direction>,
    /// 2-norm condition number of the stacked steering matrix.
    pub condition: f64,
}

impl BeamformerSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn target(&self) -> &[Complex64; 4] {
        &self.vectors[0]
    }

    /// `b_i^H d`, the response of beamformer `i` to a plane wave from `dir`.
    pub fn response(&self, i: usize, dir: Direction) -> Complex64 {
        let d = steering_vector(dir).as_complex();
        self.vectors[i]
            .iter()
            .zip(&d)
            .map(|(b, x)| b.conj() * x)
            .sum()
    }

    /// `b_i^H x(t, f)` for every bin of a 4-channel spectrogram.
    pub fn apply(&self, i: usize, mix: &Spectrogram) -> Result<Spectrogram> {
        check_foa(mix)?;
        let b = self.vectors[i].map(|v| v.conj());
        let frames = mix.frames();
        let bins = mix.bins();
        let mut out = Spectrogram::zeros(1, frames, *mix.config());
        par::for_each_chunk_mut(out.data_mut(), bins, |t, row| {
            for (f, y) in row.iter_mut().enumerate() {
                let x = mix.vector4(t, f);
                *y = b[0] * x[0] + b[1] * x[1] + b[2] * x[2] + b[3] * x[3];
            }
        });
        Ok(out)
    }
}

fn check_foa(mix: &Spectrogram) -> Result<()> {
    if mix.channels() != CHANNELS {
        return Err(Error::Shape(format!(
            "expected a {CHANNELS}-channel FOA spectrogram, got {} channels",
            mix.channels()
        )));
    }
    Ok(())
}

/// Builds the target beamformer and one beamformer per interferer.
pub fn build_beamformers(target: Direction, interferers: &[Direction]) -> Result<BeamformerSet> {
    if interferers.len() > MAX_INTERFERERS {
        return Err(Error::InvalidArgument(format!(
            "at most {MAX_INTERFERERS} interferers are supported, got {}",
            interferers.len()
        )));
    }
    let directions: Vec<Direction> = std::iter::once(target)
        .chain(interferers.iter().copied())
        .map(Direction::canonical)
        .collect();
    let k = directions.len();
    let steering: Vec<[f64; 4]> = directions
        .iter()
        .map(|&d| steering_vector(d).as_array())
        .collect();
    let d = ComplexMatrix::from_fn(CHANNELS, k, |r, c| Complex64::new(steering[c][r], 0.0));
    let p = pinv(&d)?;
    let vectors = (0..k)
        .map(|i| {
            let row = p.matrix.row(i);
            std::array::from_fn(|c| row[c].conj())
        })
        .collect();
    Ok(BeamformerSet {
        vectors,
        directions,
        condition: p.condition,
    })
}

/// Real feature tensor `[channel][frame][bin]`.
///
/// Channel 0 is `|x_W|`, channel 1 `|s_hat|`, channels `2..` the interferer
/// estimates `|n_hat_i|`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    channels: usize,
    frames: usize,
    bins: usize,
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(channels: usize, frames: usize, bins: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * frames * bins {
            return Err(Error::Shape(format!(
                "feature tensor has {} values, expected {channels}x{frames}x{bins}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            frames,
            bins,
            data,
        })
    }

    pub fn zeros(channels: usize, frames: usize, bins: usize) -> Self {
        Self {
            channels,
            frames,
            bins,
            data: vec![0.0; channels * frames * bins],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, t: usize, f: usize) -> f32 {
        self.data[(c * self.frames + t) * self.bins + f]
    }

    #[inline]
    pub fn set(&mut self, c: usize, t: usize, f: usize, v: f32) {
        self.data[(c * self.frames + t) * self.bins + f] = v;
    }

    /// Frames `start..start + len` of every channel.
    pub fn slice_frames(&self, start: usize, len: usize) -> FeatureTensor {
        assert!(start + len <= self.frames);
        let mut data = Vec::with_capacity(self.channels * len * self.bins);
        for c in 0..self.channels {
            let base = (c * self.frames + start) * self.bins;
            data.extend_from_slice(&self.data[base..base + len * self.bins]);
        }
        FeatureTensor {
            channels: self.channels,
            frames: len,
            bins: self.bins,
            data,
        }
    }

    /// Keeps bins `0..bins` of every frame.
    pub fn truncate_bins(&self, bins: usize) -> FeatureTensor {
        assert!(bins <= self.bins);
        let mut data = Vec::with_capacity(self.channels * self.frames * bins);
        for row in self.data.chunks(self.bins) {
            data.extend_from_slice(&row[..bins]);
        }
        FeatureTensor {
            channels: self.channels,
            frames: self.frames,
            bins,
            data,
        }
    }
}

/// Magnitude features `[|x_W|, |b_0^H x|, |b_1^H x|, ...]`.
pub fn extract_features(mix: &Spectrogram, bf: &BeamformerSet) -> Result<FeatureTensor> {
    check_foa(mix)?;
    if bf.is_empty() || bf.len() > 1 + MAX_INTERFERERS {
        return Err(Error::InvalidArgument(format!(
            "beamformer set has {} beams, expected 1..={}",
            bf.len(),
            1 + MAX_INTERFERERS
        )));
    }
    let frames = mix.frames();
    let bins = mix.bins();
    let channels = 1 + bf.len();
    let beams: Vec<[Complex64; 4]> = bf.vectors.iter().map(|b| b.map(|v| v.conj())).collect();
    let mut out = FeatureTensor::zeros(channels, frames, bins);
    let plane = frames * bins;
    par::for_each_chunk_mut(&mut out.data, plane, |c, chan| {
        for t in 0..frames {
            for f in 0..bins {
                let v = if c == 0 {
                    mix.get(0, t, f).norm()
                } else {
                    let b = &beams[c - 1];
                    let x = mix.vector4(t, f);
                    (b[0] * x[0] + b[1] * x[1] + b[2] * x[2] + b[3] * x[3]).norm()
                };
                chan[t * bins + f] = v as f32;
            }
        }
    });
    Ok(out)
}

/// Divides every beamformed feature (channels `1..`) by its maximum over the
/// sequence in each frequency band. `|x_W|` (channel 0) is left untouched.
pub fn normalize_sequence(features: &FeatureTensor) -> FeatureTensor {
    let mut out = features.clone();
    let (frames, bins) = (features.frames, features.bins);
    for c in 1..features.channels {
        for f in 0..bins {
            let max = (0..frames)
                .map(|t| features.get(c, t, f))
                .fold(0.0f32, f32::max);
            let denom = max.max(EPS_FLOOR as f32);
            for t in 0..frames {
                out.set(c, t, f, features.get(c, t, f) / denom);
            }
        }
    }
    out
}

/// Per-feature, per-frequency mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub channels: usize,
    pub bins: usize,
    /// `[channel][bin]`.
    pub mean: Vec<f32>,
    /// `[channel][bin]`, floored at [`EPS_FLOOR`].
    pub std: Vec<f32>,
}

impl FeatureStats {
    /// Identity statistics (zero mean, unit deviation).
    pub fn identity(channels: usize, bins: usize) -> Self {
        Self {
            channels,
            bins,
            mean: vec![0.0; channels * bins],
            std: vec![1.0; channels * bins],
        }
    }

    /// Dataset statistics over every frame of every tensor.
    pub fn from_features(set: &[FeatureTensor]) -> Result<Self> {
        let first = set.first().ok_or(Error::EmptyDataset("feature statistics"))?;
        let (channels, bins) = (first.channels, first.bins);
        if let Some(bad) = set.iter().find(|x| x.channels != channels || x.bins != bins) {
            return Err(Error::Shape(format!(
                "feature tensors disagree: {}x{} vs {}x{}",
                channels, bins, bad.channels, bad.bins
            )));
        }
        let mut sum = vec![0.0f64; channels * bins];
        let mut count = 0usize;
        for x in set {
            for c in 0..channels {
                for t in 0..x.frames {
                    for f in 0..bins {
                        sum[c * bins + f] += f64::from(x.get(c, t, f));
                    }
                }
            }
            count += x.frames;
        }
        if count == 0 {
            return Err(Error::EmptyDataset("feature statistics (no frames)"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = vec![0.0f64; channels * bins];
        for x in set {
            for c in 0..channels {
                for t in 0..x.frames {
                    for f in 0..bins {
                        let d = f64::from(x.get(c, t, f)) - mean[c * bins + f];
                        var[c * bins + f] += d * d;
                    }
                }
            }
        }
        Ok(Self {
            channels,
            bins,
            mean: mean.iter().map(|&m| m as f32).collect(),
            std: var
                .iter()
                .map(|v| (v / count as f64).sqrt().max(EPS_FLOOR) as f32)
                .collect(),
        })
    }
}

/// `(x - mean) / std` per feature and frequency.
pub fn standardize(features: &FeatureTensor, stats: &FeatureStats) -> Result<FeatureTensor> {
    if features.channels != stats.channels || features.bins != stats.bins {
        return Err(Error::Shape(format!(
            "features are {}x{}, statistics are {}x{}",
            features.channels, features.bins, stats.channels, stats.bins
        )));
    }
    let mut out = features.clone();
    let bins = features.bins;
    for c in 0..features.channels {
        for t in 0..features.frames {
            for f in 0..bins {
                let k = c * bins + f;
                let std = stats.std[k].max(EPS_FLOOR as f32);
                out.set(c, t, f, (features.get(c, t, f) - stats.mean[k]) / std);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foa::encode_plane_wave;
    use crate::stft::{analyze, StftConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mono(len: usize, seed: u64, cfg: &StftConfig) -> Spectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        analyze(&[x], cfg).unwrap()
    }

    #[test]
    fn single_source_beamformer() {
        let bf = build_beamformers(Direction::new(0.0, 0.0), &[]).unwrap();
        let s3 = 3f64.sqrt();
        let expected = [0.25, s3 / 4.0, 0.0, 0.0];
        for (b, e) in bf.target().iter().zip(expected) {
            assert!((b - Complex64::new(e, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn orthogonal_pair_constraints() {
        let t = Direction::new(0.0, 0.0);
        let n = Direction::new(std::f64::consts::FRAC_PI_2, 0.0);
        let bf = build_beamformers(t, &[n]).unwrap();
        assert!(bf.response(0, n).norm() < 1e-10);
        assert!((bf.response(0, t) - 1.0).norm() < 1e-10);
        assert!((bf.response(1, n) - 1.0).norm() < 1e-10);
    }

    #[test]
    fn close_sources_still_constrained() {
        let t = Direction::from_degrees(10.0, 5.0);
        let n = Direction::from_degrees(35.0, 5.0);
        let bf = build_beamformers(t, &[n]).unwrap();
        assert!(bf.condition.is_finite() && bf.condition > 1.0);
        assert!((bf.response(0, t) - 1.0).norm() < 1e-8);
        assert!(bf.response(0, n).norm() < 1e-8);
        assert!(bf.response(1, t).norm() < 1e-8);
    }

    #[test]
    fn coincident_sources_rejected() {
        let t = Direction::from_degrees(10.0, 5.0);
        assert!(matches!(
            build_beamformers(t, &[t]),
            Err(Error::IllConditioned { .. })
        ));
        assert!(build_beamformers(t, &[t, t, t]).is_err());
    }

    #[test]
    fn features_of_a_pure_target() {
        let cfg = StftConfig::with_frame_len(64, 16_000);
        let m = mono(1024, 2, &cfg);
        let t = Direction::from_degrees(30.0, 10.0);
        let n = Direction::from_degrees(120.0, -20.0);
        let mix = encode_plane_wave(&m, t).unwrap();
        let bf = build_beamformers(t, &[n]).unwrap();
        let feats = extract_features(&mix, &bf).unwrap();
        assert_eq!(feats.channels(), 3);
        for tt in 0..m.frames() {
            for f in 0..m.bins() {
                let mag = m.get(0, tt, f).norm() as f32;
                assert!((feats.get(1, tt, f) - mag).abs() <= 1e-6 * (1.0 + mag));
                assert!(feats.get(2, tt, f).abs() < 1e-6 * (1.0 + mag));
                assert_eq!(feats.get(0, tt, f), mag);
            }
        }
        let zero = Spectrogram::zeros(4, 3, cfg);
        let zf = extract_features(&zero, &bf).unwrap();
        assert!(zf.data().iter().all(|&v| v == 0.0));
        assert!(extract_features(&m, &bf).is_err());
    }

    #[test]
    fn normalization_properties() {
        let mut x = FeatureTensor::zeros(3, 4, 2);
        for t in 0..4 {
            x.set(0, t, 0, 5.0);
            x.set(1, t, 0, 7.0); // constant band
            x.set(2, t, 0, t as f32);
            // band 1 of channels 1..2 stays silent
        }
        let y = normalize_sequence(&x);
        for t in 0..4 {
            assert_eq!(y.get(0, t, 0), 5.0);
            assert_eq!(y.get(1, t, 0), 1.0);
            assert_eq!(y.get(1, t, 1), 0.0);
            assert_eq!(y.get(2, t, 1), 0.0);
        }
        assert_eq!(y.get(2, 3, 0), 1.0);
        assert_eq!(normalize_sequence(&y), y);
    }

    #[test]
    fn standardization() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let set: Vec<FeatureTensor> = (0..5)
            .map(|_| {
                let mut x = FeatureTensor::zeros(2, 6, 3);
                for v in x.data_mut() {
                    *v = rng.random_range(0.0..4.0);
                }
                // silent bin: channel 1, bin 2
                for t in 0..6 {
                    x.set(1, t, 2, 0.0);
                }
                x
            })
            .collect();
        let stats = FeatureStats::from_features(&set).unwrap();
        let std_set: Vec<_> = set.iter().map(|x| standardize(x, &stats).unwrap()).collect();
        let again = FeatureStats::from_features(&std_set).unwrap();
        for k in 0..6 {
            assert!(again.mean[k].abs() < 1e-6);
            if k != 5 {
                assert!((again.std[k] - 1.0).abs() < 1e-6);
            }
        }
        assert!(std_set
            .iter()
            .all(|x| (0..6).all(|t| x.get(1, t, 2) == 0.0)));

        // a feature equal to the mean standardizes to zero
        let mut m = FeatureTensor::zeros(2, 1, 3);
        for c in 0..2 {
            for f in 0..3 {
                m.set(c, 0, f, stats.mean[c * 3 + f]);
            }
        }
        assert!(standardize(&m, &stats).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(FeatureStats::from_features(&[]).is_err());
    }
}
