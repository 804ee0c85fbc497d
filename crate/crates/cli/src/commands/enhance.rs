use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use foa_enhance::beamform::build_beamformers;
use foa_enhance::masks::apply_mask;
use foa_enhance::metrics::si_sdr;
use foa_enhance::mwf::FilterVariant;
use foa_enhance::pipeline::filter_from_mask;
use foa_enhance::stft::{self, analyze, Spectrogram};
use foa_enhance::unet::infer::infer_mask;
use foa_enhance::{Direction, Mask, StftConfig};

use super::load_model;
use crate::error::{CliError, Result};
use crate::scenes::{self, Manifest};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Multichannel Wiener filter driven by the mask.
    Filter,
    /// Mask applied to the W channel.
    MaskOnly,
    /// Target beamformer output, no mask.
    Beamformer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Gevd,
    Full,
}

impl From<Variant> for FilterVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Gevd => FilterVariant::GevdRank1,
            Variant::Full => FilterVariant::FullMwf,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EnhanceArgs {
    /// Simulated scene directory: supplies the mixture, the directions and
    /// the oracle mask, and enables SI-SDR reporting.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// 4-channel FOA mixture WAV (overrides the scene's mixture).
    #[arg(long)]
    pub mixture: Option<PathBuf>,
    /// Scene manifest to read directions from.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Target direction as `azimuth,elevation` in degrees.
    #[arg(long, value_parser = parse_direction, allow_hyphen_values = true)]
    pub target: Option<Direction>,
    /// Interferer direction as `azimuth,elevation` in degrees; repeatable.
    #[arg(long = "interferer", value_parser = parse_direction, allow_hyphen_values = true)]
    pub interferers: Vec<Direction>,
    #[arg(long, value_enum, default_value = "filter")]
    pub mode: Mode,
    #[arg(long, value_enum, default_value = "gevd")]
    pub filter: Variant,
    /// Mask file to use instead of the scene's oracle mask.
    #[arg(long, conflicts_with = "checkpoint")]
    pub mask: Option<PathBuf>,
    /// Trained network; its predicted mask drives the filter.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the mask used.
    #[arg(long)]
    pub dump_mask: Option<PathBuf>,
}

pub fn parse_direction(s: &str) -> std::result::Result<Direction, String> {
    let (az, el) = s.split_once(',').ok_or("expected azimuth,elevation in degrees")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    let (az, el) = (p(az)?, p(el)?);
    if !az.is_finite() || !(-90.0..=90.0).contains(&el) {
        return Err(format!("direction {az},{el} out of range"));
    }
    Ok(Direction::from_degrees(az, el))
}

/// What an enhance run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceReport {
    pub samples: usize,
    /// Mixture and output SI-SDR against the target W stem, when known.
    pub si_sdr_db: Option<(f64, f64)>,
}

struct Inputs {
    mixture: [Vec<f64>; 4],
    stft: StftConfig,
    target: Direction,
    interferers: Vec<Direction>,
    scene_dir: Option<PathBuf>,
    manifest: Option<Manifest>,
}

fn usage(msg: &str) -> CliError {
    CliError::Usage(msg.into())
}

fn gather(a: &EnhanceArgs) -> Result<Inputs> {
    let manifest = match (&a.scene, &a.manifest) {
        (Some(d), None) => Some(Manifest::read(d)?),
        (None, Some(p)) => Some(Manifest::read(p.parent().unwrap_or(Path::new(".")))?),
        (None, None) => None,
        (Some(_), Some(_)) => return Err(usage("--scene and --manifest are exclusive")),
    };
    let (target, interferers) = match (&manifest, a.target) {
        (_, Some(t)) => (t, a.interferers.clone()),
        (Some(m), None) if a.interferers.is_empty() => (m.spec.target.direction, m.spec.interferer_directions()),
        (Some(_), None) => return Err(usage("--interferer needs --target")),
        (None, None) => return Err(usage("directions missing: pass --scene, --manifest or --target")),
    };
    let mut stft = manifest.as_ref().map_or_else(StftConfig::default, |m| m.stft);
    if let Some(ck) = &a.checkpoint {
        let model = load_model(ck)?;
        let fl = 2 * model.config().freq_bins_net;
        if manifest.is_some() && stft.frame_len != fl {
            return Err(CliError::Config(format!(
                "checkpoint expects {fl}-sample frames, the scene uses {}",
                stft.frame_len
            )));
        }
        stft = StftConfig::with_frame_len(fl, stft.sample_rate);
    }
    let mix_path = match (&a.mixture, &a.scene) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => d.join(&manifest.as_ref().expect("read").files.mixture),
        (None, None) => return Err(usage("--mixture or --scene is required")),
    };
    Ok(Inputs {
        mixture: io::read_foa(&mix_path, stft.sample_rate)?,
        stft,
        target,
        interferers,
        scene_dir: a.scene.clone(),
        manifest,
    })
}

fn mask_for(a: &EnhanceArgs, inp: &Inputs, mix: &Spectrogram) -> Result<Mask> {
    let mask = if let Some(ck) = &a.checkpoint {
        let model = load_model(ck)?;
        infer_mask(&model, mix, inp.target, &inp.interferers)?
    } else if let Some(p) = &a.mask {
        io::read_mask(p)?
    } else if let (Some(d), Some(m)) = (&inp.scene_dir, &inp.manifest) {
        io::read_mask(&d.join(&m.files.oracle_mask))?
    } else {
        return Err(usage("no mask: pass --mask, --checkpoint or --scene"));
    };
    if mask.frames() != mix.frames() || mask.bins() != mix.bins() {
        return Err(CliError::Data(format!(
            "mask is {}x{}, mixture spectrogram is {}x{}",
            mask.frames(),
            mask.bins(),
            mix.frames(),
            mix.bins()
        )));
    }
    Ok(mask)
}

pub fn run(a: &EnhanceArgs) -> Result<EnhanceReport> {
    let inp = gather(a)?;
    let mix = analyze(&inp.mixture, &inp.stft)?;
    let (estimate, mask) = match a.mode {
        Mode::Beamformer => {
            if a.mask.is_some() || a.checkpoint.is_some() {
                return Err(usage("beamformer mode takes no mask"));
            }
            let bf = build_beamformers(inp.target, &inp.interferers)?;
            (bf.apply(0, &mix)?, None)
        }
        Mode::MaskOnly => {
            let m = mask_for(a, &inp, &mix)?;
            (apply_mask(&mix.extract_channel(0), &m)?, Some(m))
        }
        Mode::Filter => {
            let m = mask_for(a, &inp, &mix)?;
            (filter_from_mask(&mix, &m, a.filter.into())?.0, Some(m))
        }
    };
    let len = inp.mixture[0].len();
    let mut y = stft::synthesize(&estimate)?.swap_remove(0);
    y.resize(len, 0.0);
    if y.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Numerical("non-finite output samples".into()));
    }
    io::write_wav(&a.out, &[&y], inp.stft.sample_rate)?;
    if let (Some(path), Some(m)) = (&a.dump_mask, &mask) {
        io::write_mask(path, m)?;
    }
    let si_sdr_db = match &inp.scene_dir {
        Some(d) => {
            let (_, scene) = scenes::load_scene(d)?;
            let reference = &scene.stems.target[0];
            let range = stft::interior(&inp.stft, len.min(reference.len()));
            let before = si_sdr(&inp.mixture[0][range.clone()], &reference[range.clone()])?;
            let after = si_sdr(&y[range.clone()], &reference[range])?;
            Some((before, after))
        }
        None => None,
    };
    Ok(EnhanceReport { samples: len, si_sdr_db })
}
