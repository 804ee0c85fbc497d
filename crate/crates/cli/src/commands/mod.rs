pub mod dump_mask;
pub mod enhance;
pub mod eval;
pub mod simulate;
pub mod train;

use std::path::Path;

use foa_enhance::unet::checkpoint;
use foa_enhance::unet::UNetModel;

use crate::error::{at, CliError, Result};

pub(crate) fn load_model(path: &Path) -> Result<UNetModel<f32>> {
    let (model, _) = checkpoint::load(path).map_err(CliError::from).map_err(at(path))?;
    if model.feature_stats.is_none() {
        return Err(CliError::Data(format!("{}: checkpoint has no feature statistics", path.display())));
    }
    Ok(model)
}
