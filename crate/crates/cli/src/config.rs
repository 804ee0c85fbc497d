//! TOML run configurations. Unknown keys are rejected and every value is
//! range-checked before any work starts. Relative paths resolve against the
//! directory of the configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use foa_enhance::scene::ReverbSpec;
use foa_enhance::unet::UNetConfig;
use foa_enhance::StftConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

fn config_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {msg}", path.display()))
}

/// Parses `path` and resolves relative paths against its directory.
pub fn load<T: for<'de> Deserialize<'de> + Resolve>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| config_err(path, e))?;
    let mut cfg: T = toml::from_str(&text).map_err(|e| config_err(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    cfg.resolve(base);
    cfg.validate().map_err(|e| config_err(path, e))?;
    Ok(cfg)
}

pub trait Resolve {
    fn resolve(&mut self, base: &Path);
    fn validate(&self) -> std::result::Result<(), String>;
}

fn join(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub source: PathBuf,
    pub azimuth_deg: f64,
    #[serde(default)]
    pub elevation_deg: f64,
}

/// One explicitly described scene built from mono WAV sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub target: SourceEntry,
    #[serde(default)]
    pub interferers: Vec<SourceEntry>,
    #[serde(default)]
    pub sir_db: f64,
    pub snr_db: f64,
    pub reverb: Option<ReverbSpec>,
    /// Mono WAV used as the diffuse-noise template.
    pub noise: Option<PathBuf>,
    pub min_separation_deg: Option<f64>,
    pub diffuse_directions: Option<usize>,
}

/// A seeded set of scenes built from synthetic talkers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub count: usize,
    pub interferers: usize,
    /// Target-interferer angles, cycled over the scenes. Empty for random
    /// layouts.
    #[serde(default)]
    pub separations_deg: Vec<f64>,
    #[serde(default = "default_max_elevation")]
    pub max_elevation_deg: f64,
    #[serde(default)]
    pub sir_db: f64,
    pub snr_db: f64,
    pub seconds: f64,
    pub reverb: Option<ReverbSpec>,
}

fn default_max_elevation() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub stft: StftConfig,
    pub scene: Option<SceneSection>,
    pub generate: Option<GenerateSection>,
}

impl Resolve for SimulateConfig {
    fn resolve(&mut self, base: &Path) {
        join(base, &mut self.out_dir);
        if let Some(s) = &mut self.scene {
            join(base, &mut s.target.source);
            for i in &mut s.interferers {
                join(base, &mut i.source);
            }
            if let Some(n) = &mut s.noise {
                join(base, n);
            }
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        self.stft.validate().map_err(|e| e.to_string())?;
        match (&self.scene, &self.generate) {
            (Some(_), None) => Ok(()),
            (None, Some(g)) => {
                if g.count == 0 {
                    return Err("generate.count must be positive".into());
                }
                if g.interferers > 2 {
                    return Err("generate.interferers must be 0, 1 or 2".into());
                }
                if !(g.seconds >= 1.0 && g.seconds.is_finite()) {
                    return Err("generate.seconds must be at least 1".into());
                }
                if g.separations_deg.iter().any(|s| !(0.0..=180.0).contains(s)) {
                    return Err("generate.separations_deg must lie in [0, 180]".into());
                }
                if !(0.0..=90.0).contains(&g.max_elevation_deg) {
                    return Err("generate.max_elevation_deg must lie in [0, 90]".into());
                }
                Ok(())
            }
            _ => Err("exactly one of [scene] and [generate] is required".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Toy,
    Paper,
}

/// Network geometry: a preset plus overrides. Input features and frequency
/// bins follow from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub preset: Preset,
    pub depth: Option<usize>,
    pub base_filters: Option<usize>,
    pub dilated: Option<bool>,
    pub seq_frames: Option<usize>,
    pub dropout: Option<f64>,
}

impl NetworkSection {
    pub fn resolve(&self, input_features: usize, freq_bins_net: usize) -> UNetConfig {
        let mut c = match self.preset {
            Preset::Toy => UNetConfig::toy(),
            Preset::Paper => UNetConfig::paper(),
        };
        if let Some(d) = self.depth {
            c.depth = d;
            c.dilation_schedule = (0..d).map(|i| 1 << i).collect();
        }
        c.base_filters = self.base_filters.unwrap_or(c.base_filters);
        c.dilated = self.dilated.unwrap_or(c.dilated);
        c.seq_frames = self.seq_frames.unwrap_or(c.seq_frames);
        c.dropout = self.dropout.unwrap_or(c.dropout);
        c.input_features = input_features;
        c.freq_bins_net = freq_bins_net;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub min_delta: Option<f64>,
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub train_dir: PathBuf,
    pub validation_dir: PathBuf,
    pub out_dir: PathBuf,
    pub network: NetworkSection,
    pub train: TrainSection,
}

impl TrainConfig {
    pub fn spec(&self) -> foa_enhance::unet::train::TrainSpec {
        let d = foa_enhance::unet::train::TrainSpec::default();
        let t = &self.train;
        foa_enhance::unet::train::TrainSpec {
            lr: t.lr.unwrap_or(d.lr),
            max_epochs: t.max_epochs.unwrap_or(d.max_epochs),
            patience: t.patience.unwrap_or(d.patience),
            min_delta: t.min_delta.unwrap_or(d.min_delta),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            seed: self.seed,
        }
    }
}

impl Resolve for TrainConfig {
    fn resolve(&mut self, base: &Path) {
        join(base, &mut self.train_dir);
        join(base, &mut self.validation_dir);
        join(base, &mut self.out_dir);
    }

    fn validate(&self) -> std::result::Result<(), String> {
        self.spec().validate().map_err(|e| e.to_string())?;
        if let Some(p) = self.network.dropout {
            if !(0.0..1.0).contains(&p) {
                return Err(format!("network.dropout {p} outside [0, 1)"));
            }
        }
        // placeholder sizes; the data fixes the real ones
        self.network.resolve(3, 512).validate().map_err(|e| e.to_string())
    }
}
