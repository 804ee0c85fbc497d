//! Stochastic FOA reverberation.
//!
//! The room response is a unit direct path from the source direction plus a
//! diffuse tail of exponentially decaying Gaussian noise. The tail is the sum of
//! independent decaying noise responses arriving from Fibonacci-lattice
//! directions, so it is spatially isotropic. Its amplitude envelope is
//! `exp(-3 ln(10) t / rt60)`, i.e. the energy decays by 60 dB after `rt60`
//! seconds, and its W-channel energy is set by the direct-to-reverberant
//! ratio.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::foa::{self, fibonacci_sphere, steering_vector, Direction};
use crate::stft::{self, Spectrogram, StftConfig};

pub const RT60_RANGE: (f64, f64) = (0.2, 0.8);
/// Directions used to build the diffuse tail.
pub const TAIL_DIRECTIONS: usize = 32;
/// Gap between the direct path and the onset of the tail, seconds.
pub const PREDELAY: f64 = 0.004;
/// Tail length as a multiple of rt60 (90 dB of decay).
const TAIL_SPAN: f64 = 1.5;

fn check_rt60(rt60: f64) -> Result<()> {
    if !(RT60_RANGE.0..=RT60_RANGE.1).contains(&rt60) {
        return Err(Error::InvalidArgument(format!(
            "rt60 {rt60} s outside [{}, {}]",
            RT60_RANGE.0, RT60_RANGE.1
        )));
    }
    Ok(())
}

/// Exponentially decaying noise, unit energy. Index 0 is the tail onset.
pub fn decaying_noise(rt60: f64, sample_rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fs = f64::from(sample_rate);
    let len = (TAIL_SPAN * rt60 * fs).ceil() as usize;
    let decay = 3.0 * std::f64::consts::LN_10 / (rt60 * fs);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut h: Vec<f64> = (0..len)
        .map(|n| normal.sample(rng) * (-decay * n as f64).exp())
        .collect();
    let e: f64 = h.iter().map(|v| v * v).sum();
    h.iter_mut().for_each(|v| *v /= e.sqrt());
    h
}

/// Four-channel room response: direct path at `dir` plus diffuse tail.
pub fn foa_room_response(
    rt60: f64,
    direct_to_reverb_db: f64,
    dir: Direction,
    seed: u64,
    sample_rate: u32,
) -> Result<[Vec<f64>; 4]> {
    check_rt60(rt60)?;
    if direct_to_reverb_db.is_nan() || direct_to_reverb_db == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(format!(
            "direct-to-reverberant ratio {direct_to_reverb_db} dB"
        )));
    }
    let fs = f64::from(sample_rate);
    let onset = (PREDELAY * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = fibonacci_sphere(TAIL_DIRECTIONS);
    let mut tail: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::new());
    for d in &dirs {
        let g = steering_vector(*d).as_array();
        let h = decaying_noise(rt60, sample_rate, &mut rng);
        for (c, ch) in tail.iter_mut().enumerate() {
            if ch.is_empty() {
                ch.resize(h.len(), 0.0);
            }
            for (o, v) in ch.iter_mut().zip(&h) {
                *o += g[c] * v;
            }
        }
    }
    let tail_w: f64 = tail[0].iter().map(|v| v * v).sum();
    let tail_gain = if direct_to_reverb_db.is_infinite() {
        0.0
    } else {
        (10f64.powf(-direct_to_reverb_db / 10.0) / tail_w).sqrt()
    };
    let direct = steering_vector(dir).as_array();
    let len = onset + tail[0].len();
    Ok(std::array::from_fn(|c| {
        let mut ir = vec![0.0; len];
        ir[0] = direct[c];
        for (o, v) in ir[onset..].iter_mut().zip(&tail[c]) {
            *o = v * tail_gain;
        }
        ir
    }))
}

/// Linear convolution truncated to `x.len()` samples.
pub fn convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; x.len()];
    }
    let n = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(n, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    a[..x.len()].iter().map(|z| z.re * scale).collect()
}

/// Reverberant FOA image of `dry` as four waveforms of the same length.
///
/// An infinite direct-to-reverberant ratio returns the anechoic plane-wave
/// encoding unchanged.
pub fn reverberate(
    dry: &[f64],
    rt60: f64,
    direct_to_reverb_db: f64,
    dir: Direction,
    seed: u64,
    sample_rate: u32,
) -> Result<[Vec<f64>; 4]> {
    check_rt60(rt60)?;
    if direct_to_reverb_db == f64::INFINITY {
        return Ok(foa::encode_waveform(dry, dir));
    }
    let ir = foa_room_response(rt60, direct_to_reverb_db, dir, seed, sample_rate)?;
    Ok(std::array::from_fn(|c| convolve_truncated(dry, &ir[c])))
}

/// Spectrogram of [`reverberate`].
pub fn apply_reverb(
    dry: &[f64],
    rt60: f64,
    direct_to_reverb_db: f64,
    dir: Direction,
    seed: u64,
    stft_config: &StftConfig,
) -> Result<Spectrogram> {
    let wave = reverberate(
        dry,
        rt60,
        direct_to_reverb_db,
        dir,
        seed,
        stft_config.sample_rate,
    )?;
    stft::analyze(&wave, stft_config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foa::encode_plane_wave;
    use crate::scene::synth::synthetic_speech;

    /// Schroeder backward integration, in dB relative to the total.
    fn energy_decay_db(h: &[f64]) -> Vec<f64> {
        let mut acc = 0.0;
        let mut edc: Vec<f64> = h
            .iter()
            .rev()
            .map(|v| {
                acc += v * v;
                acc
            })
            .collect();
        edc.reverse();
        let total = edc[0];
        edc.iter().map(|e| 10.0 * (e / total).log10()).collect()
    }

    #[test]
    fn tail_reaches_minus_60_db_at_rt60() {
        let fs = 16_000;
        for (rt60, seed) in [(0.5, 1), (0.5, 2), (0.3, 3), (0.8, 4)] {
            let ir = foa_room_response(rt60, 0.0, Direction::new(0.3, 0.1), seed, fs).unwrap();
            let onset = (PREDELAY * f64::from(fs)).round() as usize;
            let edc = energy_decay_db(&ir[0][onset..]);
            let idx = edc.iter().position(|&v| v <= -60.0).unwrap();
            let t60 = idx as f64 / f64::from(fs);
            assert!((t60 / rt60 - 1.0).abs() < 0.1, "rt60 {rt60}: measured {t60}");
        }
    }

    #[test]
    fn direct_to_reverberant_ratio() {
        let ir = foa_room_response(0.4, 6.0, Direction::new(1.0, 0.0), 9, 16_000).unwrap();
        let tail: f64 = ir[0][1..].iter().map(|v| v * v).sum();
        assert!((10.0 * (1.0 / tail).log10() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn infinite_ratio_is_anechoic() {
        let cfg = StftConfig::default();
        let dry = synthetic_speech(1, 1.0, 16_000);
        let dir = Direction::new(-0.4, 0.2);
        let rev = apply_reverb(&dry, 0.5, f64::INFINITY, dir, 3, &cfg).unwrap();
        let mono = stft::analyze(&[dry], &cfg).unwrap();
        let enc = encode_plane_wave(&mono, dir).unwrap();
        let peak = enc.data().iter().fold(0.0f64, |m, z| m.max(z.norm()));
        for (a, b) in rev.data().iter().zip(enc.data()) {
            assert!((a - b).norm() <= 1e-12 * peak);
        }
    }

    #[test]
    fn seeded_and_range_checked() {
        let cfg = StftConfig::default();
        let dry = synthetic_speech(2, 1.0, 16_000);
        let dir = Direction::new(0.0, 0.0);
        let a = apply_reverb(&dry, 0.5, 3.0, dir, 5, &cfg).unwrap();
        let b = apply_reverb(&dry, 0.5, 3.0, dir, 5, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(apply_reverb(&dry, 0.1, 3.0, dir, 5, &cfg).is_err());
        assert!(apply_reverb(&dry, 0.9, 3.0, dir, 5, &cfg).is_err());
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let x = [1.0, 2.0, -1.0, 0.5, 3.0];
        let h = [0.5, -1.0, 0.25];
        let y = convolve_truncated(&x, &h);
        for n in 0..x.len() {
            let direct: f64 = (0..h.len())
                .filter(|&k| k <= n)
                .map(|k| h[k] * x[n - k])
                .sum();
            assert!((y[n] - direct).abs() < 1e-12);
        }
    }
}
