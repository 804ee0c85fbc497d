//! Scene directories: one WAV per stem, the oracle mask and a manifest.
//!
//! ```text
//! scene.toml      manifest (written last)
//! mixture.wav     4-channel W, X, Y, Z mixture
//! target.wav      4-channel target image
//! interfererN.wav 4-channel image of interferer N (1-based)
//! diffuse.wav     4-channel diffuse noise (absent when snr_db = inf)
//! oracle.mask     oracle ratio mask
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use foa_enhance::scene::{assemble_scene, w_energy, SceneGains, SceneOutput, SceneSpec, SceneStems};
use foa_enhance::StftConfig;
use serde::{Deserialize, Serialize};

use crate::error::{at, CliError, Result};
use crate::io;

pub const MANIFEST: &str = "scene.toml";
pub const FORMAT: u32 = 1;

/// Stem levels re-measured on W after rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Levels {
    pub sir_db: Vec<f64>,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Files {
    pub mixture: String,
    pub target: String,
    pub interferers: Vec<String>,
    pub diffuse: Option<String>,
    pub oracle_mask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: u32,
    /// Source directions in degrees, `[azimuth, elevation]`, target first.
    pub directions_deg: Vec<[f64; 2]>,
    pub levels: Levels,
    pub files: Files,
    pub stft: StftConfig,
    pub spec: SceneSpec,
    pub gains: SceneGains,
}

fn db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

impl Manifest {
    pub fn of(scene: &SceneOutput, stft: &StftConfig) -> Self {
        let st = &scene.stems;
        let e_target = w_energy(&st.target);
        let levels = Levels {
            sir_db: st.interferers.iter().map(|i| db(e_target / w_energy(i))).collect(),
            snr_db: st.diffuse.as_ref().map_or(f64::INFINITY, |d| db(e_target / w_energy(d))),
        };
        let deg = |d: foa_enhance::Direction| [d.azimuth.to_degrees(), d.elevation.to_degrees()];
        Manifest {
            format: FORMAT,
            directions_deg: scene.spec.directions().into_iter().map(deg).collect(),
            levels,
            files: Files {
                mixture: "mixture.wav".into(),
                target: "target.wav".into(),
                interferers: (1..=st.interferers.len()).map(|i| format!("interferer{i}.wav")).collect(),
                diffuse: st.diffuse.as_ref().map(|_| "diffuse.wav".into()),
                oracle_mask: "oracle.mask".into(),
            },
            stft: *stft,
            spec: scene.spec.clone(),
            gains: scene.gains.clone(),
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(CliError::from).map_err(at(&path))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if m.format != FORMAT {
            return Err(CliError::Data(format!("{}: unsupported format {}", path.display(), m.format)));
        }
        Ok(m)
    }
}

/// Writes every file of a scene; the manifest goes last.
pub fn write_scene(dir: &Path, scene: &SceneOutput, stft: &StftConfig) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(CliError::from).map_err(at(dir))?;
    let m = Manifest::of(scene, stft);
    let sr = stft.sample_rate;
    let st = &scene.stems;
    io::write_wav(&dir.join(&m.files.mixture), &st.mixture(), sr)?;
    io::write_wav(&dir.join(&m.files.target), &st.target, sr)?;
    for (name, stem) in m.files.interferers.iter().zip(&st.interferers) {
        io::write_wav(&dir.join(name), stem, sr)?;
    }
    if let (Some(name), Some(stem)) = (&m.files.diffuse, &st.diffuse) {
        io::write_wav(&dir.join(name), stem, sr)?;
    }
    io::write_mask(&dir.join(&m.files.oracle_mask), &scene.oracle_mask)?;
    let text = toml::to_string(&m).map_err(|e| CliError::Data(format!("manifest: {e}")))?;
    io::write_bytes(&dir.join(MANIFEST), text.as_bytes())?;
    Ok(m)
}

/// Rebuilds a scene from its directory, spectrograms recomputed from the
/// stems.
pub fn load_scene(dir: &Path) -> Result<(Manifest, SceneOutput)> {
    let m = Manifest::read(dir)?;
    let sr = m.stft.sample_rate;
    if m.files.interferers.len() != m.spec.interferers.len() {
        return Err(CliError::Data(format!("{}: stem list does not match the scene spec", dir.display())));
    }
    let stems = SceneStems {
        target: io::read_foa(&dir.join(&m.files.target), sr)?,
        interferers: m
            .files
            .interferers
            .iter()
            .map(|f| io::read_foa(&dir.join(f), sr))
            .collect::<Result<_>>()?,
        diffuse: m.files.diffuse.as_ref().map(|f| io::read_foa(&dir.join(f), sr)).transpose()?,
    };
    let scene = assemble_scene(m.spec.clone(), stems, m.gains.clone(), &m.stft).map_err(CliError::from).map_err(at(dir))?;
    Ok((m, scene))
}

/// `dir` itself when it holds a manifest, otherwise its scene
/// subdirectories in name order.
pub fn scene_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(MANIFEST).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let entries = fs::read_dir(dir).map_err(CliError::from).map_err(at(dir))?;
    let mut dirs = Vec::new();
    for e in entries {
        let p = e.map_err(CliError::from)?.path();
        if p.join(MANIFEST).is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Data(format!("{}: no scenes found", dir.display())));
    }
    Ok(dirs)
}

pub fn load_all(dir: &Path) -> Result<Vec<SceneOutput>> {
    let dirs = scene_dirs(dir)?;
    foa_enhance::par::map_slice(&dirs, |d| load_scene(d).map(|(_, s)| s))
        .into_iter()
        .collect()
}
