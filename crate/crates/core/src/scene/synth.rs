//! Seeded speech-like test signals.
//!
//! No speech corpus ships with the crate, so desk-scale experiments use a
//! crude articulatory stand-in: voiced syllables made of harmonics of a gliding
//! pitch, shaped by three random formant resonances and a raised-cosine
//! envelope, separated by short pauses, with occasional unvoiced noise bursts.
//! The result is sparse in time-frequency and has harmonic striations, which is
//! what the masks and the mask estimator care about.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Pitch range of a synthetic speaker, Hz.
pub const F0_RANGE: (f64, f64) = (90.0, 230.0);

#[derive(Debug, Clone, Copy)]
struct Formant {
    freq: f64,
    bandwidth: f64,
}

fn formant_gain(formants: &[Formant; 3], f: f64) -> f64 {
    formants
        .iter()
        .map(|fm| {
            let x = (f - fm.freq) / (fm.bandwidth / 2.0);
            1.0 / (1.0 + x * x)
        })
        .sum::<f64>()
        + 0.02
}

/// `seconds` of speech-like signal at `sample_rate`, peak-normalized to 0.5.
pub fn synthetic_speech(seed: u64, seconds: f64, sample_rate: u32) -> Vec<f64> {
    let fs = f64::from(sample_rate);
    let len = (seconds * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len];
    let base_f0 = rng.random_range(F0_RANGE.0..F0_RANGE.1);
    let nyquist = fs / 2.0;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut pos = (rng.random_range(0.0..0.15) * fs) as usize;
    while pos < len {
        let voiced_len = (rng.random_range(0.12..0.32) * fs) as usize;
        let end = (pos + voiced_len).min(len);
        let f0_start = base_f0 * rng.random_range(0.85..1.2);
        let f0_end = f0_start * rng.random_range(0.88..1.12);
        let formants = [
            Formant {
                freq: rng.random_range(300.0..850.0),
                bandwidth: rng.random_range(60.0..120.0),
            },
            Formant {
                freq: rng.random_range(900.0..2300.0),
                bandwidth: rng.random_range(80.0..160.0),
            },
            Formant {
                freq: rng.random_range(2400.0..3400.0),
                bandwidth: rng.random_range(120.0..220.0),
            },
        ];
        let loudness = rng.random_range(0.5..1.0);
        let n = end - pos;
        let max_harmonic = (nyquist * 0.9 / f0_start.min(f0_end)).floor() as usize;
        let mut phases: Vec<f64> = (0..max_harmonic).map(|_| rng.random_range(0.0..TAU)).collect();
        for i in 0..n {
            let frac = i as f64 / n.max(1) as f64;
            let f0 = f0_start + (f0_end - f0_start) * frac;
            let env = (PI * frac).sin().powf(0.6) * loudness;
            let mut s = 0.0;
            for (k, ph) in phases.iter_mut().enumerate() {
                let fk = f0 * (k + 1) as f64;
                *ph += TAU * fk / fs;
                if fk < nyquist * 0.9 {
                    let tilt = 1.0 / ((k + 1) as f64).sqrt();
                    s += tilt * formant_gain(&formants, fk) * ph.sin();
                }
            }
            out[pos + i] += env * s;
        }
        pos = end;

        if rng.random_bool(0.3) && pos < len {
            // fricative: high-passed noise burst
            let burst = ((rng.random_range(0.04..0.1) * fs) as usize).min(len - pos);
            let gain = rng.random_range(0.1..0.3);
            let mut prev = 0.0;
            for i in 0..burst {
                let w: f64 = normal.sample(&mut rng);
                let env = (PI * i as f64 / burst as f64).sin();
                out[pos + i] += gain * env * (w - prev);
                prev = w;
            }
            pos += burst;
        }
        let pause = if rng.random_bool(0.15) {
            rng.random_range(0.2..0.4)
        } else {
            rng.random_range(0.03..0.12)
        };
        pos += (pause * fs) as usize;
    }

    let peak = out.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    out
}

/// Seeded white Gaussian noise, unit variance.
pub fn white_noise(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}
