//! Short-time Fourier transform with a sinusoidal window at 50% overlap.
//!
//! The window `w[n] = sin(pi (n + 0.5) / N)` is applied at both analysis and
//! synthesis. With a hop of `N / 2`, shifted copies of `w^2` sum to exactly one,
//! so plain overlap-add of the windowed inverse frames reconstructs the input
//! wherever two frames overlap. Only frames lying fully inside the signal are
//! produced; the first and last half-frame are therefore covered by a single
//! window and are not reconstructed.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Sinusoidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    #[serde(default)]
    pub window: Window,
    pub sample_rate: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_len: 1024,
            hop: 512,
            window: Window::Sinusoidal,
            sample_rate: 16_000,
        }
    }
}

impl StftConfig {
    /// A 50%-overlap configuration with the given frame length.
    pub fn with_frame_len(frame_len: usize, sample_rate: u32) -> Self {
        Self {
            frame_len,
            hop: frame_len / 2,
            window: Window::Sinusoidal,
            sample_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 4 || self.frame_len % 2 != 0 {
            return Err(Error::StftConfig(format!(
                "frame_len must be even and >= 4, got {}",
                self.frame_len
            )));
        }
        if self.hop * 2 != self.frame_len {
            return Err(Error::StftConfig(format!(
                "hop must be frame_len / 2 = {}, got {}",
                self.frame_len / 2,
                self.hop
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::StftConfig("sample_rate must be positive".into()));
        }
        Ok(())
    }

    /// Number of one-sided bins, `frame_len / 2 + 1`.
    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Number of frames fully inside a signal of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            (len - self.frame_len) / self.hop + 1
        }
    }

    /// Length of the waveform produced by [`synthesize`] for `frames` frames.
    pub fn signal_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.frame_len
        }
    }

    pub fn window(&self) -> Vec<f64> {
        let n = self.frame_len as f64;
        (0..self.frame_len)
            .map(|i| (PI * (i as f64 + 0.5) / n).sin())
            .collect()
    }
}

/// Complex time-frequency tensor laid out as `[channel][frame][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    channels: usize,
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
    config: StftConfig,
}

impl Spectrogram {
    pub fn zeros(channels: usize, frames: usize, config: StftConfig) -> Self {
        let bins = config.bins();
        Self {
            channels,
            frames,
            bins,
            data: vec![Complex64::new(0.0, 0.0); channels * frames * bins],
            config,
        }
    }

    pub fn from_data(
        channels: usize,
        frames: usize,
        config: StftConfig,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        let bins = config.bins();
        if data.len() != channels * frames * bins {
            return Err(Error::Shape(format!(
                "spectrogram data has {} values, expected {channels}x{frames}x{bins}",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("spectrogram"));
        }
        Ok(Self {
            channels,
            frames,
            bins,
            data,
            config,
        })
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

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, c: usize, t: usize, f: usize) -> usize {
        (c * self.frames + t) * self.bins + f
    }

    #[inline]
    pub fn get(&self, c: usize, t: usize, f: usize) -> Complex64 {
        self.data[self.index(c, t, f)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, t: usize, f: usize, v: Complex64) {
        let i = self.index(c, t, f);
        self.data[i] = v;
    }

    /// All frames of one channel, `frames * bins` values.
    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.frames * self.bins;
        &self.data[c * n..(c + 1) * n]
    }

    /// Copies one channel out as a single-channel spectrogram.
    pub fn extract_channel(&self, c: usize) -> Spectrogram {
        Spectrogram {
            channels: 1,
            frames: self.frames,
            bins: self.bins,
            data: self.channel(c).to_vec(),
            config: self.config,
        }
    }

    /// The 4-vector `x(t, f)` across channels.
    #[inline]
    pub fn vector4(&self, t: usize, f: usize) -> [Complex64; 4] {
        debug_assert_eq!(self.channels, 4);
        let stride = self.frames * self.bins;
        let i = t * self.bins + f;
        [
            self.data[i],
            self.data[stride + i],
            self.data[2 * stride + i],
            self.data[3 * stride + i],
        ]
    }

    pub fn same_shape(&self, other: &Spectrogram) -> bool {
        self.channels == other.channels && self.frames == other.frames && self.bins == other.bins
    }

    /// Element-wise sum. Shapes must agree.
    pub fn add(&self, other: &Spectrogram) -> Result<Spectrogram> {
        if !self.same_shape(other) {
            return Err(Error::Shape(format!(
                "cannot add {}x{}x{} and {}x{}x{} spectrograms",
                self.channels, self.frames, self.bins, other.channels, other.frames, other.bins
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(self.with_data(data))
    }

    pub fn scale(&self, gain: f64) -> Spectrogram {
        self.with_data(self.data.iter().map(|z| z * gain).collect())
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Same shape and config, new payload. `data.len()` must match.
    pub(crate) fn with_data(&self, data: Vec<Complex64>) -> Spectrogram {
        debug_assert_eq!(data.len(), self.data.len());
        Spectrogram {
            channels: self.channels,
            frames: self.frames,
            bins: self.bins,
            data,
            config: self.config,
        }
    }
}

fn planner_fft(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

/// Forward STFT of every channel. All channels must share one length.
pub fn analyze<S: AsRef<[f64]> + Sync>(signal: &[S], config: &StftConfig) -> Result<Spectrogram> {
    config.validate()?;
    let channels = signal.len();
    if channels == 0 {
        return Err(Error::InvalidArgument("signal has no channels".into()));
    }
    let len = signal[0].as_ref().len();
    for (c, ch) in signal.iter().enumerate() {
        let ch = ch.as_ref();
        if ch.len() != len {
            return Err(Error::ChannelLength {
                channel: c,
                len: ch.len(),
                expected: len,
            });
        }
        if ch.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("input signal"));
        }
    }
    if len < config.frame_len {
        return Err(Error::SignalTooShort {
            len,
            needed: config.frame_len,
        });
    }

    let n = config.frame_len;
    let frames = config.frames_for(len);
    let bins = config.bins();
    let window = config.window();
    let fft = planner_fft(n, false);
    let mut spec = Spectrogram::zeros(channels, frames, *config);

    par::for_each_chunk_mut(&mut spec.data, bins, |idx, out| {
        let c = idx / frames;
        let t = idx % frames;
        let x = &signal[c].as_ref()[t * config.hop..t * config.hop + n];
        let mut buf: Vec<Complex64> = x
            .iter()
            .zip(&window)
            .map(|(s, w)| Complex64::new(s * w, 0.0))
            .collect();
        fft.process(&mut buf);
        out.copy_from_slice(&buf[..bins]);
    });
    Ok(spec)
}

/// Weighted overlap-add inverse of [`analyze`].
///
/// The DC and Nyquist bins are taken as real and the negative-frequency half is
/// rebuilt as the conjugate mirror, so the output is real even for a modified
/// spectrogram.
pub fn synthesize(spec: &Spectrogram) -> Result<Vec<Vec<f64>>> {
    let config = spec.config;
    config.validate()?;
    if spec.bins != config.bins() {
        return Err(Error::StftConfig(format!(
            "spectrogram has {} bins, config implies {}",
            spec.bins,
            config.bins()
        )));
    }
    let n = config.frame_len;
    let len = config.signal_len(spec.frames);
    let window = config.window();
    let ifft = planner_fft(n, true);
    let scale = 1.0 / n as f64;

    let out = par::map_range(spec.channels, |c| {
        let mut y = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..spec.frames {
            let frame = &spec.data[spec.index(c, t, 0)..spec.index(c, t, 0) + spec.bins];
            buf[0] = Complex64::new(frame[0].re, 0.0);
            buf[n / 2] = Complex64::new(frame[n / 2].re, 0.0);
            for k in 1..n / 2 {
                buf[k] = frame[k];
                buf[n - k] = frame[k].conj();
            }
            ifft.process(&mut buf);
            let start = t * config.hop;
            for (i, (z, w)) in buf.iter().zip(&window).enumerate() {
                y[start + i] += z.re * scale * w;
            }
        }
        y
    });
    Ok(out)
}

/// Interior sample range that a round trip reconstructs: the first and last
/// `frame_len` samples are excluded.
pub fn interior(config: &StftConfig, len: usize) -> std::ops::Range<usize> {
    let lo = config.frame_len.min(len);
    let hi = len.saturating_sub(config.frame_len).max(lo);
    lo..hi
}
