use std::path::PathBuf;

use clap::Args;
use foa_enhance::metrics::{evaluate_pipeline, EvalReport};
use foa_enhance::pipeline::{
    Enhancer, FilterFromIdealMask, IdealMaskOnW, LearnedFilter, LearnedMask, Mixture, RawBeamformer,
};

use super::enhance::Variant;
use super::load_model;
use crate::error::{CliError, Result};
use crate::{io, scenes};

pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Scene directory, or a directory of scene directories.
    #[arg(long)]
    pub scenes: PathBuf,
    /// Adds the learned-mask and learned-filter rows.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gevd")]
    pub filter: Variant,
    /// Output directory for report.txt and report.json.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(a: &EvalArgs) -> Result<EvalReport> {
    let sc = scenes::load_all(&a.scenes)?;
    let model = a.checkpoint.as_deref().map(load_model).transpose()?;
    let variant = a.filter.into();
    let ideal = FilterFromIdealMask { variant };
    let mut systems: Vec<Box<dyn Enhancer + '_>> = vec![
        Box::new(Mixture),
        Box::new(RawBeamformer),
        Box::new(IdealMaskOnW),
        Box::new(ideal),
    ];
    if let Some(m) = &model {
        systems.push(Box::new(LearnedMask { model: m }));
        systems.push(Box::new(LearnedFilter { model: m, variant }));
    }
    let refs: Vec<&dyn Enhancer> = systems.iter().map(|b| b.as_ref()).collect();
    let report = evaluate_pipeline(&sc, &refs)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?;
    io::write_bytes(&a.out.join(REPORT_JSON), json.as_bytes())?;
    io::write_bytes(&a.out.join(REPORT_TXT), report.to_string().as_bytes())?;
    Ok(report)
}
