//! Enhancement systems compared by [`crate::metrics::evaluate_pipeline`].
//!
//! Each system turns a scene into a single-channel estimate of the target's
//! W image. Oracle systems read the scene's ground-truth mask; the others use
//! only the mixture and the source directions.

use crate::beamform::build_beamformers;
use crate::error::Result;
use crate::masks::{apply_mask, Mask};
use crate::mwf::{self, FilterVariant, FilterWeights};
use crate::scene::SceneOutput;
use crate::stft::Spectrogram;
use crate::unet::infer::infer_mask;
use crate::unet::UNetModel;

/// Output of an enhancement system.
#[derive(Debug, Clone)]
pub struct Enhanced {
    pub estimate: Spectrogram,
    /// Mask the system used, if any.
    pub mask: Option<Mask>,
}

pub trait Enhancer: Sync {
    fn name(&self) -> &str;
    fn enhance(&self, scene: &SceneOutput) -> Result<Enhanced>;
}

/// Multichannel filter computed from `mask` and applied to `mix`.
pub fn filter_from_mask(
    mix: &Spectrogram,
    mask: &Mask,
    variant: FilterVariant,
) -> Result<(Spectrogram, FilterWeights)> {
    let cov = mwf::masked_covariances(mix, mask)?;
    let w = match variant {
        FilterVariant::FullMwf => mwf::mwf_filter(&cov)?,
        FilterVariant::GevdRank1 => mwf::gevd_rank1_filter(&cov)?,
    };
    let y = mwf::apply_filter(mix, &w)?;
    Ok((y, w))
}

/// The unprocessed W channel.
#[derive(Debug, Clone, Copy, Default)]
pub struct Mixture;

impl Enhancer for Mixture {
    fn name(&self) -> &str {
        "mixture"
    }

    fn enhance(&self, scene: &SceneOutput) -> Result<Enhanced> {
        Ok(Enhanced {
            estimate: scene.mixture.extract_channel(0),
            mask: None,
        })
    }
}

/// Oracle mask applied to the W channel.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdealMaskOnW;

impl Enhancer for IdealMaskOnW {
    fn name(&self) -> &str {
        "ideal mask"
    }

    fn enhance(&self, scene: &SceneOutput) -> Result<Enhanced> {
        let w = scene.mixture.extract_channel(0);
        Ok(Enhanced {
            estimate: apply_mask(&w, &scene.oracle_mask)?,
            mask: Some(scene.oracle_mask.clone()),
        })
    }
}

/// Multichannel Wiener filter estimated with the oracle mask.
#[derive(Debug, Clone, Copy)]
pub struct FilterFromIdealMask {
    pub variant: FilterVariant,
}

impl Default for FilterFromIdealMask {
    fn default() -> Self {
        Self {
            variant: FilterVariant::GevdRank1,
        }
    }
}

impl Enhancer for FilterFromIdealMask {
    fn name(&self) -> &str {
        match self.variant {
            FilterVariant::GevdRank1 => "filter from ideal mask",
            FilterVariant::FullMwf => "full MWF from ideal mask",
        }
    }

    fn enhance(&self, scene: &SceneOutput) -> Result<Enhanced> {
        let (estimate, _) = filter_from_mask(&scene.mixture, &scene.oracle_mask, self.variant)?;
        Ok(Enhanced {
            estimate,
            mask: Some(scene.oracle_mask.clone()),
        })
    }
}

/// Pseudo-inverse beamformer steered at the target with nulls on the
/// interferers.
#[derive(Debug, Clone, Copy, Default)]
pub struct RawBeamformer;

impl Enhancer for RawBeamformer {
    fn name(&self) -> &str {
        "beamformer"
    }

    fn enhance(&self, scene: &SceneOutput) -> Result<Enhanced> {
        let bf = build_beamformers(scene.spec.target.direction, &scene.spec.interferer_directions())?;
        Ok(Enhanced {
            estimate: bf.apply(0, &scene.mixture)?,
            mask: None,
        })
    }
}

/// Mask predicted by a trained network, applied to W.
pub struct LearnedMask<'a> {
    pub model: &'a UNetModel<f32>,
}

impl Enhancer for LearnedMask<'_> {
    fn name(&self) -> &str {
        "learned mask"
    }

    fn enhance(&self, scene: &SceneOutput) -> Result<Enhanced> {
        let mask = predicted(self.model, scene)?;
        let w = scene.mixture.extract_channel(0);
        Ok(Enhanced {
            estimate: apply_mask(&w, &mask)?,
            mask: Some(mask),
        })
    }
}

/// Multichannel filter estimated with the predicted mask.
pub struct LearnedFilter<'a> {
    pub model: &'a UNetModel<f32>,
    pub variant: FilterVariant,
}

impl Enhancer for LearnedFilter<'_> {
    fn name(&self) -> &str {
        match self.variant {
            FilterVariant::GevdRank1 => "filter from learned mask",
            FilterVariant::FullMwf => "full MWF from learned mask",
        }
    }

    fn enhance(&self, scene: &SceneOutput) -> Result<Enhanced> {
        let mask = predicted(self.model, scene)?;
        let (estimate, _) = filter_from_mask(&scene.mixture, &mask, self.variant)?;
        Ok(Enhanced {
            estimate,
            mask: Some(mask),
        })
    }
}

fn predicted(model: &UNetModel<f32>, scene: &SceneOutput) -> Result<Mask> {
    infer_mask(
        model,
        &scene.mixture,
        scene.spec.target.direction,
        &scene.spec.interferer_directions(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::evaluate_pipeline;
    use crate::scene::{synthesize_scene, Layout, SceneRecipe};
    use crate::stft::StftConfig;

    fn scenes(n: u64, separation_deg: f64) -> Vec<SceneOutput> {
        let recipe = SceneRecipe {
            interferers: 1,
            layout: Layout::Fixed(separation_deg),
            sir_db: 0.0,
            snr_db: 20.0,
            reverb: None,
            seconds: 1.5,
        };
        let cfg = StftConfig::default();
        (0..n)
            .map(|s| {
                let (spec, src) = recipe.build(s, cfg.sample_rate);
                synthesize_scene(&spec, &src, &cfg).unwrap()
            })
            .collect()
    }

    #[test]
    fn mixture_improvement_is_zero() {
        let sc = scenes(2, 90.0);
        let report = evaluate_pipeline(&sc, &[&Mixture]).unwrap();
        for s in &report.systems[0].scenes {
            assert_eq!(s.si_sdr_improvement_db, 0.0);
        }
    }

    #[test]
    fn oracle_filter_improves_anechoic_scene() {
        let sc = scenes(3, 90.0);
        let systems: [&dyn Enhancer; 3] = [&FilterFromIdealMask::default(), &IdealMaskOnW, &RawBeamformer];
        let report = evaluate_pipeline(&sc, &systems).unwrap();
        let filt = report.system("filter from ideal mask").unwrap();
        assert!(filt.overall.si_sdr_improvement_db >= 10.0, "{report}");
        assert_eq!(filt.overall.mask_mse, Some(0.0));
        let again = evaluate_pipeline(&sc, &systems).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn gevd_is_not_worse_than_full_mwf() {
        let sc = scenes(3, 45.0);
        let full = FilterFromIdealMask {
            variant: FilterVariant::FullMwf,
        };
        let systems: [&dyn Enhancer; 2] = [&FilterFromIdealMask::default(), &full];
        let report = evaluate_pipeline(&sc, &systems).unwrap();
        let g = report.systems[0].overall.si_sdr_improvement_db;
        let f = report.systems[1].overall.si_sdr_improvement_db;
        assert!(g >= f - 0.5, "gevd {g} full {f}");
    }

    #[test]
    fn empty_scene_list_is_an_error() {
        assert!(evaluate_pipeline(&[], &[&Mixture]).is_err());
    }
}
