use std::path::PathBuf;

use clap::Args;
use foa_enhance::unet::infer::infer_mask;
use foa_enhance::Mask;

use super::load_model;
use crate::error::{CliError, Result};
use crate::{io, scenes};

#[derive(Debug, Clone, Args)]
pub struct DumpMaskArgs {
    /// Mask file to render.
    #[arg(long, conflicts_with_all = ["checkpoint", "scene"])]
    pub mask: Option<PathBuf>,
    /// Scene whose oracle mask (or, with --checkpoint, predicted mask) is
    /// rendered.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, requires = "scene")]
    pub checkpoint: Option<PathBuf>,
    /// Output prefix; writes PREFIX.pgm and PREFIX.mask.
    #[arg(long)]
    pub out: PathBuf,
}

fn with_ext(p: &std::path::Path, ext: &str) -> PathBuf {
    let mut s = p.as_os_str().to_os_string();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn run(a: &DumpMaskArgs) -> Result<Mask> {
    let mask = match (&a.mask, &a.scene, &a.checkpoint) {
        (Some(p), _, _) => io::read_mask(p)?,
        (None, Some(d), None) => {
            let m = scenes::Manifest::read(d)?;
            io::read_mask(&d.join(m.files.oracle_mask))?
        }
        (None, Some(d), Some(ck)) => {
            let model = load_model(ck)?;
            let (_, scene) = scenes::load_scene(d)?;
            infer_mask(&model, &scene.mixture, scene.spec.target.direction, &scene.spec.interferer_directions())?
        }
        (None, None, _) => return Err(CliError::Usage("pass --mask or --scene".into())),
    };
    io::write_bytes(&with_ext(&a.out, "pgm"), &io::mask_pgm(&mask))?;
    io::write_mask(&with_ext(&a.out, "mask"), &mask)?;
    Ok(mask)
}
