use std::collections::BTreeMap;
use std::path::PathBuf;

use foa_enhance::scene::{synthesize_scene, Layout, SceneRecipe, SceneSpec, SourcePlacement};
use foa_enhance::Direction;

use crate::config::{SceneSection, SimulateConfig};
use crate::error::Result;
use crate::{io, scenes};

fn explicit(s: &SceneSection, cfg: &SimulateConfig) -> Result<(SceneSpec, BTreeMap<String, Vec<f64>>)> {
    let sr = cfg.stft.sample_rate;
    let mut sources = BTreeMap::new();
    let mut place = |id: String, e: &crate::config::SourceEntry| -> Result<SourcePlacement> {
        sources.insert(id.clone(), io::read_mono(&e.source, sr)?);
        Ok(SourcePlacement {
            id,
            direction: Direction::from_degrees(e.azimuth_deg, e.elevation_deg),
        })
    };
    let target = place("target".into(), &s.target)?;
    let interferers = s
        .interferers
        .iter()
        .enumerate()
        .map(|(i, e)| place(format!("interferer{}", i + 1), e))
        .collect::<Result<Vec<_>>>()?;
    let mut spec = SceneSpec::new(target, s.snr_db, cfg.seed);
    spec.interferers = interferers;
    spec.sir_db = s.sir_db;
    spec.reverb = s.reverb;
    if let Some(f) = s.min_separation_deg {
        spec.min_separation_deg = f;
    }
    if let Some(n) = s.diffuse_directions {
        spec.diffuse_directions = n;
    }
    if let Some(path) = &s.noise {
        sources.insert("noise".into(), io::read_mono(path, sr)?);
        spec.noise = Some("noise".into());
    }
    Ok((spec, sources))
}

/// Renders the configured scene or scene set; returns the written
/// directories.
pub fn run(cfg: &SimulateConfig) -> Result<Vec<PathBuf>> {
    if let Some(s) = &cfg.scene {
        let (spec, sources) = explicit(s, cfg)?;
        spec.validate()?;
        let scene = synthesize_scene(&spec, &sources, &cfg.stft)?;
        scenes::write_scene(&cfg.out_dir, &scene, &cfg.stft)?;
        return Ok(vec![cfg.out_dir.clone()]);
    }
    let g = cfg.generate.as_ref().expect("validated");
    let jobs: Vec<u64> = (0..g.count as u64).collect();
    let results = foa_enhance::par::map_slice(&jobs, |&i| -> Result<PathBuf> {
        let layout = if g.separations_deg.is_empty() {
            Layout::Random {
                max_elevation_deg: g.max_elevation_deg,
            }
        } else {
            Layout::Fixed(g.separations_deg[i as usize % g.separations_deg.len()])
        };
        let recipe = SceneRecipe {
            interferers: g.interferers,
            layout,
            sir_db: g.sir_db,
            snr_db: g.snr_db,
            reverb: g.reverb,
            seconds: g.seconds,
        };
        let (spec, sources) = recipe.build(cfg.seed.wrapping_add(i), cfg.stft.sample_rate);
        let scene = synthesize_scene(&spec, &sources, &cfg.stft)?;
        let dir = cfg.out_dir.join(format!("scene_{i:04}"));
        scenes::write_scene(&dir, &scene, &cfg.stft)?;
        Ok(dir)
    });
    results.into_iter().collect()
}
