//! Real-valued time-frequency ratio masks.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stft::Spectrogram;

/// Value assigned where both target and noise are silent.
pub const ZERO_ENERGY_VALUE: f32 = 0.5;

/// `frames x bins` matrix of values in `[0, 1]`, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    frames: usize,
    bins: usize,
    values: Vec<f32>,
}

impl Mask {
    pub fn new(frames: usize, bins: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != frames * bins {
            return Err(Error::Shape(format!(
                "mask has {} values, expected {frames}x{bins}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "mask value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            frames,
            bins,
            values,
        })
    }

    pub fn constant(frames: usize, bins: usize, value: f32) -> Self {
        assert!((0.0..=1.0).contains(&value));
        Self {
            frames,
            bins,
            values: vec![value; frames * bins],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, t: usize, f: usize) -> f32 {
        self.values[t * self.bins + f]
    }

    /// `1 - M`.
    pub fn complement(&self) -> Mask {
        Mask {
            frames: self.frames,
            bins: self.bins,
            values: self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }

    pub fn same_shape(&self, other: &Mask) -> bool {
        self.frames == other.frames && self.bins == other.bins
    }
}

/// Instantaneous energy ratio `|s|^2 / (|s|^2 + |n|^2)` from single-channel
/// (omnidirectional) target and noise spectrograms.
pub fn ideal_mask(target_w: &Spectrogram, noise_w: &Spectrogram) -> Result<Mask> {
    if target_w.channels() != 1 || noise_w.channels() != 1 || !target_w.same_shape(noise_w) {
        return Err(Error::Shape(format!(
            "ideal mask needs two mono spectrograms of equal shape, got {}x{}x{} and {}x{}x{}",
            target_w.channels(),
            target_w.frames(),
            target_w.bins(),
            noise_w.channels(),
            noise_w.frames(),
            noise_w.bins()
        )));
    }
    let values = target_w
        .data()
        .iter()
        .zip(noise_w.data())
        .map(|(s, n)| ratio(s, n))
        .collect();
    Ok(Mask {
        frames: target_w.frames(),
        bins: target_w.bins(),
        values,
    })
}

fn ratio(s: &Complex64, n: &Complex64) -> f32 {
    let es = s.norm_sqr();
    let en = n.norm_sqr();
    let total = es + en;
    if total == 0.0 {
        ZERO_ENERGY_VALUE
    } else {
        ((es / total) as f32).clamp(0.0, 1.0)
    }
}

/// Scales every channel of `spec` by the mask.
pub fn apply_mask(spec: &Spectrogram, mask: &Mask) -> Result<Spectrogram> {
    if spec.frames() != mask.frames || spec.bins() != mask.bins {
        return Err(Error::Shape(format!(
            "mask is {}x{}, spectrogram is {}x{}",
            mask.frames,
            mask.bins,
            spec.frames(),
            spec.bins()
        )));
    }
    let plane = mask.values.len();
    let data = spec
        .data()
        .iter()
        .enumerate()
        .map(|(i, z)| z * f64::from(mask.values[i % plane]))
        .collect();
    Ok(spec.with_data(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::StftConfig;
    use proptest::prelude::*;

    fn cfg() -> StftConfig {
        StftConfig::with_frame_len(8, 16_000)
    }

    fn mono(values: &[(f64, f64)]) -> Spectrogram {
        let c = cfg();
        let frames = values.len() / c.bins();
        let data = values.iter().map(|&(r, i)| Complex64::new(r, i)).collect();
        Spectrogram::from_data(1, frames, c, data).unwrap()
    }

    #[test]
    fn symmetric_and_degenerate_cases() {
        let s = mono(&[(1.0, 2.0); 10]);
        let n = mono(&[(2.0, -1.0); 10]);
        let m = ideal_mask(&s, &n).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.5));

        let z = mono(&[(0.0, 0.0); 10]);
        assert!(ideal_mask(&s, &z).unwrap().values().iter().all(|&v| v == 1.0));
        assert!(ideal_mask(&z, &s).unwrap().values().iter().all(|&v| v == 0.0));
        let both = ideal_mask(&z, &z).unwrap();
        assert!(both.values().iter().all(|&v| v == ZERO_ENERGY_VALUE));
    }

    #[test]
    fn shape_mismatch() {
        let a = mono(&[(1.0, 0.0); 10]);
        let b = mono(&[(1.0, 0.0); 5]);
        assert!(matches!(ideal_mask(&a, &b), Err(Error::Shape(_))));
        let m = Mask::constant(1, 5, 1.0);
        assert!(apply_mask(&a, &m).is_err());
    }

    #[test]
    fn apply_identity_and_zero() {
        let s = mono(&[(1.0, -3.0); 10]);
        let ones = Mask::constant(2, 5, 1.0);
        assert_eq!(apply_mask(&s, &ones).unwrap(), s);
        let zeros = Mask::constant(2, 5, 0.0);
        assert!(apply_mask(&s, &zeros)
            .unwrap()
            .data()
            .iter()
            .all(|z| z.norm() == 0.0));
    }

    #[test]
    fn constructor_validates() {
        assert!(Mask::new(1, 2, vec![0.0, 1.5]).is_err());
        assert!(Mask::new(1, 2, vec![0.0, f32::NAN]).is_err());
        assert!(Mask::new(1, 3, vec![0.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn mask_invariants(
            pairs in proptest::collection::vec(
                ((-1e3f64..1e3, -1e3f64..1e3), (-1e3f64..1e3, -1e3f64..1e3)), 5..=5),
            zero_mask in proptest::collection::vec(any::<bool>(), 5..=5),
        ) {
            let s: Vec<_> = pairs.iter().zip(&zero_mask)
                .map(|(p, &z)| if z { (0.0, 0.0) } else { p.0 })
                .collect();
            let n: Vec<_> = pairs.iter().zip(&zero_mask)
                .map(|(p, &z)| if z { (0.0, 0.0) } else { p.1 })
                .collect();
            let sw = mono(&s);
            let nw = mono(&n);
            let m = ideal_mask(&sw, &nw).unwrap();
            let comp = m.complement();
            for (a, b) in m.values().iter().zip(comp.values()) {
                prop_assert!(a.is_finite() && (0.0..=1.0).contains(a));
                prop_assert_eq!(a + b, 1.0f32);
            }
            let x = sw.add(&nw).unwrap();
            let y = apply_mask(&x, &m).unwrap();
            for (a, b) in y.data().iter().zip(x.data()) {
                prop_assert!(a.norm_sqr() <= b.norm_sqr());
            }
        }
    }
}
