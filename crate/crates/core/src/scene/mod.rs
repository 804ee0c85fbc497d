//! Mixture synthesis: `x = s + n`.
//!
//! A scene places a target talker and up to two interferers at fixed
//! directions, optionally reverberates each of them, adds a diffuse noise
//! field, and returns the FOA spectrograms of the mixture and of its two stems
//! together with the oracle ratio mask.
//!
//! Levels are calibrated on the omnidirectional W channel over the whole
//! utterance: the target image is normalized to [`SceneSpec::target_rms`],
//! each interferer sits `sir_db` below the target and the diffuse noise
//! `snr_db` below it. Because every stem is normalized, rescaling any input
//! waveform leaves the scene unchanged.

pub mod reverb;
pub mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foa::{self, Direction};
use crate::masks::{ideal_mask, Mask};
use crate::stft::{self, Spectrogram, StftConfig};

pub use reverb::{apply_reverb, reverberate};

/// Four waveforms in W, X, Y, Z order.
pub type FoaWave = [Vec<f64>; 4];

fn default_min_separation() -> f64 {
    25.0
}

fn default_diffuse_directions() -> usize {
    32
}

fn default_target_rms() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcePlacement {
    pub id: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReverbSpec {
    pub rt60: f64,
    pub direct_to_reverb_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub target: SourcePlacement,
    #[serde(default)]
    pub interferers: Vec<SourcePlacement>,
    /// Target-to-each-interferer ratio on W, dB.
    #[serde(default)]
    pub sir_db: f64,
    /// Target-to-diffuse-noise ratio on W, dB. `inf` disables the noise.
    pub snr_db: f64,
    #[serde(default)]
    pub reverb: Option<ReverbSpec>,
    /// Source id of the diffuse-noise template; seeded white noise if absent.
    #[serde(default)]
    pub noise: Option<String>,
    #[serde(default = "default_min_separation")]
    pub min_separation_deg: f64,
    #[serde(default = "default_diffuse_directions")]
    pub diffuse_directions: usize,
    #[serde(default = "default_target_rms")]
    pub target_rms: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// A new spec with default floor, noise field and level.
    pub fn new(target: SourcePlacement, snr_db: f64, seed: u64) -> Self {
        Self {
            target,
            interferers: Vec::new(),
            sir_db: 0.0,
            snr_db,
            reverb: None,
            noise: None,
            min_separation_deg: default_min_separation(),
            diffuse_directions: default_diffuse_directions(),
            target_rms: default_target_rms(),
            seed,
        }
    }

    pub fn interferer_directions(&self) -> Vec<Direction> {
        self.interferers.iter().map(|s| s.direction).collect()
    }

    pub fn directions(&self) -> Vec<Direction> {
        std::iter::once(self.target.direction)
            .chain(self.interferer_directions())
            .collect()
    }

    /// Smallest angle between the target and an interferer, degrees.
    pub fn target_separation_deg(&self) -> Option<f64> {
        self.interferers
            .iter()
            .map(|s| self.target.direction.angle_to(&s.direction).to_degrees())
            .min_by(f64::total_cmp)
    }

    pub fn speaker_count(&self) -> usize {
        1 + self.interferers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.interferers.len() > 2 {
            return Err(Error::InvalidArgument(format!(
                "at most 2 interferers, got {}",
                self.interferers.len()
            )));
        }
        if !self.sir_db.is_finite() {
            return Err(Error::InvalidArgument("sir_db must be finite".into()));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!("snr_db {}", self.snr_db)));
        }
        if !(self.target_rms > 0.0 && self.target_rms.is_finite()) {
            return Err(Error::InvalidArgument("target_rms must be positive".into()));
        }
        if self.diffuse_directions < foa::MIN_DIFFUSE_DIRECTIONS {
            return Err(Error::InvalidArgument(format!(
                "diffuse_directions must be at least {}",
                foa::MIN_DIFFUSE_DIRECTIONS
            )));
        }
        if let Some(r) = &self.reverb {
            if !(reverb::RT60_RANGE.0..=reverb::RT60_RANGE.1).contains(&r.rt60) {
                return Err(Error::InvalidArgument(format!(
                    "rt60 {} outside [{}, {}]",
                    r.rt60,
                    reverb::RT60_RANGE.0,
                    reverb::RT60_RANGE.1
                )));
            }
            if r.direct_to_reverb_db.is_nan() || r.direct_to_reverb_db == f64::NEG_INFINITY {
                return Err(Error::InvalidArgument("direct_to_reverb_db".into()));
            }
        }
        let dirs = self.directions();
        for a in 0..dirs.len() {
            for b in a + 1..dirs.len() {
                let deg = dirs[a].angle_to(&dirs[b]).to_degrees();
                // tolerate round-off in configured angles
                if deg < self.min_separation_deg - 1e-9 {
                    return Err(Error::AngularFloor {
                        a,
                        b,
                        degrees: deg,
                        floor: self.min_separation_deg,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Linear gains applied to each rendered stem, recorded for the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGains {
    pub target: f64,
    pub interferers: Vec<f64>,
    pub diffuse: f64,
}

/// Time-domain stems of a scene, all of the target's length.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneStems {
    pub target: FoaWave,
    pub interferers: Vec<FoaWave>,
    pub diffuse: Option<FoaWave>,
}

impl SceneStems {
    /// Interferers plus diffuse noise.
    pub fn noise(&self) -> FoaWave {
        let len = self.target[0].len();
        let mut n: FoaWave = std::array::from_fn(|_| vec![0.0; len]);
        for stem in self.interferers.iter().chain(self.diffuse.iter()) {
            for (acc, ch) in n.iter_mut().zip(stem) {
                for (a, v) in acc.iter_mut().zip(ch) {
                    *a += v;
                }
            }
        }
        n
    }

    pub fn mixture(&self) -> FoaWave {
        let mut mix = self.target.clone();
        for stem in self.interferers.iter().chain(self.diffuse.iter()) {
            for (acc, ch) in mix.iter_mut().zip(stem) {
                for (a, v) in acc.iter_mut().zip(ch) {
                    *a += v;
                }
            }
        }
        mix
    }
}

#[derive(Debug, Clone)]
pub struct SceneOutput {
    pub mixture: Spectrogram,
    pub target_image: Spectrogram,
    pub noise_image: Spectrogram,
    pub oracle_mask: Mask,
    pub spec: SceneSpec,
    pub stems: SceneStems,
    pub gains: SceneGains,
}

/// Energy of the W channel.
pub fn w_energy(wave: &FoaWave) -> f64 {
    wave[0].iter().map(|v| v * v).sum()
}

fn scaled(wave: FoaWave, g: f64) -> FoaWave {
    wave.map(|ch| ch.into_iter().map(|v| v * g).collect())
}

fn fit_length(x: &[f64], len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = x.iter().take(len).copied().collect();
    v.resize(len, 0.0);
    v
}

/// Repeats `x` cyclically to `len` samples.
fn tile(x: &[f64], len: usize) -> Vec<f64> {
    x.iter().copied().cycle().take(len).collect()
}

/// Seed for an independent stream derived from the scene seed.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lookup<'a>(sources: &'a BTreeMap<String, Vec<f64>>, id: &str) -> Result<&'a [f64]> {
    let x = sources
        .get(id)
        .ok_or_else(|| Error::MissingSource(id.to_string()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("source waveform"));
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroEnergy(id.to_string()));
    }
    Ok(x)
}

fn render(
    dry: &[f64],
    dir: Direction,
    spec: &SceneSpec,
    stream: u64,
    sample_rate: u32,
) -> Result<FoaWave> {
    match &spec.reverb {
        None => Ok(foa::encode_waveform(dry, dir)),
        Some(r) => reverberate(
            dry,
            r.rt60,
            r.direct_to_reverb_db,
            dir,
            derive_seed(spec.seed, stream),
            sample_rate,
        ),
    }
}

/// Renders a scene from mono source waveforms keyed by id.
pub fn synthesize_scene(
    spec: &SceneSpec,
    sources: &BTreeMap<String, Vec<f64>>,
    stft_config: &StftConfig,
) -> Result<SceneOutput> {
    spec.validate()?;
    stft_config.validate()?;
    let fs = stft_config.sample_rate;
    let dry_target = lookup(sources, &spec.target.id)?;
    let len = dry_target.len();
    if len < fs as usize {
        return Err(Error::SignalTooShort {
            len,
            needed: fs as usize,
        });
    }

    let target = render(dry_target, spec.target.direction, spec, 1, fs)?;
    let e_target = w_energy(&target);
    if e_target == 0.0 {
        return Err(Error::ZeroEnergy(spec.target.id.clone()));
    }
    let g_target = spec.target_rms * (len as f64 / e_target).sqrt();
    let target = scaled(target, g_target);
    let e_target = w_energy(&target);

    let sir = 10f64.powf(spec.sir_db / 10.0);
    let mut interferers = Vec::with_capacity(spec.interferers.len());
    let mut interferer_gains = Vec::with_capacity(spec.interferers.len());
    for (i, placement) in spec.interferers.iter().enumerate() {
        let dry = lookup(sources, &placement.id)?;
        if dry.len() < fs as usize {
            return Err(Error::SignalTooShort {
                len: dry.len(),
                needed: fs as usize,
            });
        }
        let dry = fit_length(dry, len);
        let img = render(&dry, placement.direction, spec, 2 + i as u64, fs)?;
        let e = w_energy(&img);
        if e == 0.0 {
            return Err(Error::ZeroEnergy(placement.id.clone()));
        }
        let g = (e_target / (sir * e)).sqrt();
        interferer_gains.push(g);
        interferers.push(scaled(img, g));
    }

    let (diffuse, g_diffuse) = if spec.snr_db.is_finite() {
        let template = match &spec.noise {
            Some(id) => tile(lookup(sources, id)?, len),
            None => synth::white_noise(derive_seed(spec.seed, 100), len),
        };
        let field =
            foa::diffuse_noise_waveform(&template, spec.diffuse_directions, derive_seed(spec.seed, 101))?;
        let e = w_energy(&field);
        if e == 0.0 {
            return Err(Error::ZeroEnergy("diffuse noise".into()));
        }
        let g = (e_target / (10f64.powf(spec.snr_db / 10.0) * e)).sqrt();
        (Some(scaled(field, g)), g)
    } else {
        (None, 0.0)
    };

    let stems = SceneStems {
        target,
        interferers,
        diffuse,
    };
    let gains = SceneGains {
        target: g_target,
        interferers: interferer_gains,
        diffuse: g_diffuse,
    };
    assemble_scene(spec.clone(), stems, gains, stft_config)
}

/// Spectrograms and oracle mask of already rendered stems.
pub fn assemble_scene(
    spec: SceneSpec,
    stems: SceneStems,
    gains: SceneGains,
    stft_config: &StftConfig,
) -> Result<SceneOutput> {
    if stems.interferers.len() != spec.interferers.len() {
        return Err(Error::Shape(format!(
            "{} interferer stems for {} interferers",
            stems.interferers.len(),
            spec.interferers.len()
        )));
    }
    let len = stems.target[0].len();
    let lengths = stems.interferers.iter().chain(stems.diffuse.iter()).chain([&stems.target]);
    for (i, ch) in lengths.flat_map(|w| w.iter()).enumerate() {
        if ch.len() != len {
            return Err(Error::ChannelLength {
                channel: i,
                len: ch.len(),
                expected: len,
            });
        }
    }
    let target_image = stft::analyze(&stems.target, stft_config)?;
    let noise_image = stft::analyze(&stems.noise(), stft_config)?;
    let mixture = target_image.add(&noise_image)?;
    let oracle_mask = ideal_mask(&target_image.extract_channel(0), &noise_image.extract_channel(0))?;
    Ok(SceneOutput {
        mixture,
        target_image,
        noise_image,
        oracle_mask,
        spec,
        stems,
        gains,
    })
}

/// Source layout of a [`SceneRecipe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Interferers at this target angle in degrees, alternating on either side
    /// of the target at its elevation.
    Fixed(f64),
    /// Uniform random azimuths, elevations within `±max_elevation_deg`,
    /// redrawn until the angular floor holds.
    Random { max_elevation_deg: f64 },
}

/// Elevation range of generated targets, degrees.
pub const RECIPE_ELEVATION_DEG: f64 = 20.0;

/// Generator for seeded desk-scale scenes built from [`synth`] sources.
#[derive(Debug, Clone)]
pub struct SceneRecipe {
    pub interferers: usize,
    pub layout: Layout,
    pub sir_db: f64,
    pub snr_db: f64,
    pub reverb: Option<ReverbSpec>,
    pub seconds: f64,
}

impl SceneRecipe {
    /// The spec and dry sources of scene number `seed`.
    pub fn build(&self, seed: u64, sample_rate: u32) -> (SceneSpec, BTreeMap<String, Vec<f64>>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, 7));
        let el_max = match self.layout {
            Layout::Fixed(_) => RECIPE_ELEVATION_DEG,
            Layout::Random { max_elevation_deg } => max_elevation_deg,
        };
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let az = rng.random_range(-180.0..180.0);
            let el = if el_max > 0.0 {
                rng.random_range(-el_max..el_max)
            } else {
                0.0
            };
            (az, el)
        };
        let (az, el) = draw(&mut rng);
        let target_dir = Direction::from_degrees(az, el);
        let mut sources = BTreeMap::new();
        sources.insert(
            "target".to_string(),
            synth::synthetic_speech(derive_seed(seed, 10), self.seconds, sample_rate),
        );
        let mut spec = SceneSpec::new(
            SourcePlacement {
                id: "target".into(),
                direction: target_dir,
            },
            self.snr_db,
            seed,
        );
        spec.sir_db = self.sir_db;
        spec.reverb = self.reverb;

        let mut placed = vec![target_dir];
        for i in 0..self.interferers {
            let direction = match self.layout {
                Layout::Fixed(sep) => {
                    // azimuth offset giving the requested great-circle angle at this elevation
                    let (s, c) = el.to_radians().sin_cos();
                    let cos_daz = ((sep.to_radians().cos() - s * s) / (c * c)).clamp(-1.0, 1.0);
                    let side = if i % 2 == 0 { 1.0 } else { -1.0 };
                    Direction::from_degrees(az + side * cos_daz.acos().to_degrees(), el)
                }
                Layout::Random { .. } => loop {
                    let (a, e) = draw(&mut rng);
                    let d = Direction::from_degrees(a, e);
                    if placed
                        .iter()
                        .all(|p| p.angle_to(&d).to_degrees() >= spec.min_separation_deg)
                    {
                        break d;
                    }
                },
            };
            placed.push(direction);
            let id = format!("interferer{}", i + 1);
            sources.insert(
                id.clone(),
                synth::synthetic_speech(derive_seed(seed, 11 + i as u64), self.seconds, sample_rate),
            );
            spec.interferers.push(SourcePlacement { id, direction });
        }
        (spec, sources)
    }
}
