//! First-order Ambisonics encoding.
//!
//! Channel order is W, X, Y, Z with N3D-style gains: a plane wave from
//! azimuth `theta`, elevation `phi` is recorded as
//! `[1, sqrt3 cos(theta) cos(phi), sqrt3 sin(theta) cos(phi), sqrt3 sin(phi)] p`.
//! Under this scaling the steering vector has squared norm 4 in every
//! direction and an isotropic field has covariance `sigma^2 I`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::{self, Spectrogram, StftConfig};

pub const CHANNELS: usize = 4;

/// Direction of arrival in radians. Azimuth in `[-pi, pi)`, elevation in
/// `[-pi/2, pi/2]` once canonicalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Direction {
    /// Wraps azimuth into `[-pi, pi)` and clamps elevation.
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self { azimuth, elevation }.canonical()
    }

    pub fn from_degrees(azimuth: f64, elevation: f64) -> Self {
        Self::new(azimuth.to_radians(), elevation.to_radians())
    }

    pub fn canonical(self) -> Self {
        let mut az = (self.azimuth + PI).rem_euclid(TAU) - PI;
        if az >= PI {
            az -= TAU;
        }
        Self {
            azimuth: az,
            elevation: self.elevation.clamp(-FRAC_PI_2, FRAC_PI_2),
        }
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let d = self.canonical();
        let (sa, ca) = d.azimuth.sin_cos();
        let (se, ce) = d.elevation.sin_cos();
        [ca * ce, sa * ce, se]
    }

    /// Great-circle distance in radians.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        let a = self.unit_vector();
        let b = other.unit_vector();
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        dot.clamp(-1.0, 1.0).acos()
    }
}

/// FOA gains of a plane wave: `w == 1`, `x^2 + y^2 + z^2 == 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringVector {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SteeringVector {
    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn as_complex(&self) -> [Complex64; 4] {
        self.as_array().map(|v| Complex64::new(v, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.as_array().iter().map(|v| v * v).sum()
    }
}

pub fn steering_vector(dir: Direction) -> SteeringVector {
    let s3 = 3f64.sqrt();
    let [ux, uy, uz] = dir.unit_vector();
    SteeringVector {
        w: 1.0,
        x: s3 * ux,
        y: s3 * uy,
        z: s3 * uz,
    }
}

/// Encodes a single-channel spectrogram as a plane wave from `dir`.
pub fn encode_plane_wave(mono: &Spectrogram, dir: Direction) -> Result<Spectrogram> {
    if mono.channels() != 1 {
        return Err(Error::Shape(format!(
            "plane-wave encoding needs a mono spectrogram, got {} channels",
            mono.channels()
        )));
    }
    let d = steering_vector(dir).as_array();
    let src = mono.data();
    let mut out = Spectrogram::zeros(CHANNELS, mono.frames(), *mono.config());
    let n = src.len();
    for (c, gain) in d.iter().enumerate() {
        for (o, s) in out.data_mut()[c * n..(c + 1) * n].iter_mut().zip(src) {
            *o = s * gain;
        }
    }
    Ok(out)
}

/// Time-domain plane-wave encoding: four scaled copies of `mono`.
pub fn encode_waveform(mono: &[f64], dir: Direction) -> [Vec<f64>; 4] {
    let d = steering_vector(dir).as_array();
    d.map(|g| mono.iter().map(|s| s * g).collect())
}

/// `n` quasi-uniform directions on the sphere (Fibonacci lattice).
pub fn fibonacci_sphere(n: usize) -> Vec<Direction> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let az = golden * i as f64;
            Direction::new(az, z.clamp(-1.0, 1.0).asin())
        })
        .collect()
}

/// Minimum number of directions accepted by [`diffuse_noise`].
pub const MIN_DIFFUSE_DIRECTIONS: usize = 8;

/// Four-channel diffuse field built from circularly shifted copies of
/// `template`, one per Fibonacci-lattice direction. The result is scaled so the
/// W channel has the template's mean power.
pub fn diffuse_noise_waveform(
    template: &[f64],
    num_directions: usize,
    seed: u64,
) -> Result<[Vec<f64>; 4]> {
    if num_directions < MIN_DIFFUSE_DIRECTIONS {
        return Err(Error::InvalidArgument(format!(
            "diffuse noise needs at least {MIN_DIFFUSE_DIRECTIONS} directions, got {num_directions}"
        )));
    }
    if template.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("noise template"));
    }
    let len = template.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; len]);
    if len == 0 {
        return Ok(out);
    }
    for dir in fibonacci_sphere(num_directions) {
        let d = steering_vector(dir).as_array();
        let shift = rng.random_range(0..len);
        for (c, ch) in out.iter_mut().enumerate() {
            let g = d[c];
            for (n, o) in ch.iter_mut().enumerate() {
                *o += g * template[(n + shift) % len];
            }
        }
    }
    let target = mean_power(template);
    let got = mean_power(&out[0]);
    if got > 0.0 {
        let g = (target / got).sqrt();
        for ch in out.iter_mut() {
            ch.iter_mut().for_each(|v| *v *= g);
        }
    }
    Ok(out)
}

/// Spectrogram of [`diffuse_noise_waveform`].
pub fn diffuse_noise(
    template: &[f64],
    num_directions: usize,
    seed: u64,
    stft_config: &StftConfig,
) -> Result<Spectrogram> {
    if template.len() < stft_config.frame_len {
        return Err(Error::SignalTooShort {
            len: template.len(),
            needed: stft_config.frame_len,
        });
    }
    let field = diffuse_noise_waveform(template, num_directions, seed)?;
    stft::analyze(&field, stft_config)
}

pub(crate) fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }
}
