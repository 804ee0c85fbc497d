//! Signal-quality evaluation.
//!
//! Every system is scored by SI-SDR of its W-channel estimate against the
//! reverberant target image, measured in the time domain over the interior
//! region of the STFT round trip.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masks::Mask;
use crate::par;
use crate::pipeline::Enhancer;
use crate::scene::SceneOutput;
use crate::stft::{self, Spectrogram};

/// Cap applied to SI-SDR values, dB.
pub const SI_SDR_CAP_DB: f64 = 60.0;

/// Nominal separation classes, degrees.
pub const SEPARATION_CLASSES: [f64; 3] = [25.0, 45.0, 90.0];

/// Largest distance from a nominal class still assigned to it, degrees.
pub const CLASS_TOLERANCE_DEG: f64 = 5.0;

/// Scale-invariant SDR in dB, clamped to `±SI_SDR_CAP_DB`.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::Shape(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    if estimate.iter().chain(reference).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("si_sdr input"));
    }
    let rr: f64 = reference.iter().map(|r| r * r).sum();
    if rr == 0.0 {
        return Err(Error::ZeroEnergy("si_sdr reference".into()));
    }
    let er: f64 = estimate.iter().zip(reference).map(|(e, r)| e * r).sum();
    let alpha = er / rr;
    let mut target = 0.0;
    let mut residual = 0.0;
    for (e, r) in estimate.iter().zip(reference) {
        let p = alpha * r;
        target += p * p;
        residual += (e - p) * (e - p);
    }
    let db = if target == 0.0 {
        -SI_SDR_CAP_DB
    } else if residual == 0.0 {
        SI_SDR_CAP_DB
    } else {
        10.0 * (target / residual).log10()
    };
    Ok(db.clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// Mean squared difference between two masks.
pub fn mask_mse(predicted: &Mask, oracle: &Mask) -> Result<f64> {
    if !predicted.same_shape(oracle) {
        return Err(Error::Shape(format!(
            "mask {}x{} vs oracle {}x{}",
            predicted.frames(),
            predicted.bins(),
            oracle.frames(),
            oracle.bins()
        )));
    }
    let n = oracle.values().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = predicted
        .values()
        .iter()
        .zip(oracle.values())
        .map(|(&p, &o)| {
            let d = f64::from(p) - f64::from(o);
            d * d
        })
        .sum();
    Ok(sum / n as f64)
}

/// SI-SDR of a single-channel spectrogram against the scene's target W image.
pub fn spectrogram_si_sdr(estimate: &Spectrogram, scene: &SceneOutput) -> Result<f64> {
    if estimate.channels() != 1 {
        return Err(Error::Shape(format!(
            "expected a single-channel estimate, got {} channels",
            estimate.channels()
        )));
    }
    let est = stft::synthesize(estimate)?.swap_remove(0);
    let reference = &scene.stems.target[0];
    let len = est.len().min(reference.len());
    let range = stft::interior(estimate.config(), len);
    si_sdr(&est[range.clone()], &reference[range])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SeparationClass {
    Deg25,
    Deg45,
    Deg90,
    Other,
    /// Single-talker scenes.
    None,
}

impl SeparationClass {
    pub fn of(separation_deg: Option<f64>) -> Self {
        let Some(s) = separation_deg else {
            return SeparationClass::None;
        };
        let classes = [
            SeparationClass::Deg25,
            SeparationClass::Deg45,
            SeparationClass::Deg90,
        ];
        for (c, nominal) in classes.into_iter().zip(SEPARATION_CLASSES) {
            if (s - nominal).abs() <= CLASS_TOLERANCE_DEG {
                return c;
            }
        }
        SeparationClass::Other
    }

    pub fn label(&self) -> &'static str {
        match self {
            SeparationClass::Deg25 => "25°",
            SeparationClass::Deg45 => "45°",
            SeparationClass::Deg90 => "90°",
            SeparationClass::Other => "other",
            SeparationClass::None => "-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScore {
    pub scene: usize,
    pub seed: u64,
    pub speakers: usize,
    pub separation_deg: Option<f64>,
    pub class: SeparationClass,
    pub mixture_si_sdr_db: f64,
    pub si_sdr_db: f64,
    pub si_sdr_improvement_db: f64,
    pub mask_mse: Option<f64>,
}

/// Means over a set of scene scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenes: usize,
    pub si_sdr_db: f64,
    pub si_sdr_improvement_db: f64,
    pub mask_mse: Option<f64>,
}

impl Summary {
    fn of<'a>(scores: impl IntoIterator<Item = &'a SceneScore>) -> Summary {
        let mut n = 0usize;
        let (mut sdr, mut imp) = (0.0, 0.0);
        let (mut mse, mut mse_n) = (0.0, 0usize);
        for s in scores {
            n += 1;
            sdr += s.si_sdr_db;
            imp += s.si_sdr_improvement_db;
            if let Some(m) = s.mask_mse {
                mse += m;
                mse_n += 1;
            }
        }
        let n_f = n.max(1) as f64;
        Summary {
            scenes: n,
            si_sdr_db: sdr / n_f,
            si_sdr_improvement_db: imp / n_f,
            mask_mse: (mse_n > 0).then(|| mse / mse_n as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub speakers: usize,
    pub class: SeparationClass,
    #[serde(flatten)]
    pub summary: Summary,
}

/// One row of the report: a system scored on every scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub system: String,
    pub overall: Summary,
    pub groups: Vec<GroupSummary>,
    pub scenes: Vec<SceneScore>,
}

impl SystemReport {
    pub fn group(&self, speakers: usize, class: SeparationClass) -> Option<&Summary> {
        self.groups
            .iter()
            .find(|g| g.speakers == speakers && g.class == class)
            .map(|g| &g.summary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub systems: Vec<SystemReport>,
}

impl EvalReport {
    pub fn system(&self, name: &str) -> Option<&SystemReport> {
        self.systems.iter().find(|s| s.system == name)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut columns: Vec<(usize, SeparationClass)> = self
            .systems
            .iter()
            .flat_map(|s| s.groups.iter().map(|g| (g.speakers, g.class)))
            .collect();
        columns.sort();
        columns.dedup();

        write!(f, "{:<24}{:>10}{:>10}", "system", "SI-SDR", "ΔSI-SDR")?;
        for (spk, class) in &columns {
            write!(f, "{:>12}", format!("{spk}spk {}", class.label()))?;
        }
        writeln!(f, "{:>10}", "mask MSE")?;
        for s in &self.systems {
            write!(
                f,
                "{:<24}{:>10.2}{:>10.2}",
                s.system, s.overall.si_sdr_db, s.overall.si_sdr_improvement_db
            )?;
            for (spk, class) in &columns {
                match s.group(*spk, *class) {
                    Some(g) => write!(f, "{:>12.2}", g.si_sdr_improvement_db)?,
                    None => write!(f, "{:>12}", "")?,
                }
            }
            match s.overall.mask_mse {
                Some(m) => writeln!(f, "{m:>10.4}")?,
                None => writeln!(f, "{:>10}", "-")?,
            }
        }
        Ok(())
    }
}

/// Scores every system on every scene.
///
/// Grouped columns report the mean SI-SDR improvement per speaker count and
/// separation class.
pub fn evaluate_pipeline(scenes: &[SceneOutput], systems: &[&dyn Enhancer]) -> Result<EvalReport> {
    if scenes.is_empty() {
        return Err(Error::EmptyDataset("evaluation scenes"));
    }
    if systems.is_empty() {
        return Err(Error::InvalidArgument("no systems to evaluate".into()));
    }
    let baselines = par::map_slice(scenes, |scene| spectrogram_si_sdr(&scene.mixture.extract_channel(0), scene))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;

    let mut reports = Vec::with_capacity(systems.len());
    for system in systems {
        let scores = par::map_range(scenes.len(), |i| {
            let scene = &scenes[i];
            let out = system.enhance(scene)?;
            let si_sdr_db = spectrogram_si_sdr(&out.estimate, scene)?;
            let mask_mse = out
                .mask
                .as_ref()
                .map(|m| mask_mse(m, &scene.oracle_mask))
                .transpose()?;
            let separation_deg = scene.spec.target_separation_deg();
            Ok(SceneScore {
                scene: i,
                seed: scene.spec.seed,
                speakers: scene.spec.speaker_count(),
                separation_deg,
                class: SeparationClass::of(separation_deg),
                mixture_si_sdr_db: baselines[i],
                si_sdr_db,
                si_sdr_improvement_db: si_sdr_db - baselines[i],
                mask_mse,
            })
        })
        .into_iter()
        .collect::<Result<Vec<SceneScore>>>()?;

        let mut grouped: BTreeMap<(usize, SeparationClass), Vec<&SceneScore>> = BTreeMap::new();
        for s in &scores {
            grouped.entry((s.speakers, s.class)).or_default().push(s);
        }
        let groups = grouped
            .into_iter()
            .map(|((speakers, class), v)| GroupSummary {
                speakers,
                class,
                summary: Summary::of(v),
            })
            .collect();
        reports.push(SystemReport {
            system: system.name().to_string(),
            overall: Summary::of(&scores),
            groups,
            scenes: scores,
        });
    }
    Ok(EvalReport { systems: reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn si_sdr_caps_and_scale() {
        let r = noise(1, 4000);
        assert_eq!(si_sdr(&r, &r).unwrap(), SI_SDR_CAP_DB);
        let doubled: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        assert_eq!(si_sdr(&doubled, &r).unwrap(), SI_SDR_CAP_DB);
        let zero = vec![0.0; r.len()];
        assert_eq!(si_sdr(&zero, &r).unwrap(), -SI_SDR_CAP_DB);
        let mut ortho = vec![0.0; 4];
        ortho[1] = 1.0;
        assert_eq!(si_sdr(&ortho, &[1.0, 0.0, 0.0, 0.0]).unwrap(), -SI_SDR_CAP_DB);
        assert!(si_sdr(&r, &zero).is_err());
        assert!(si_sdr(&r[1..], &r).is_err());
    }

    #[test]
    fn si_sdr_known_ratio() {
        // independent residual at a fixed power ratio
        let r = noise(2, 20_000);
        let e = noise(3, 20_000);
        let pr: f64 = r.iter().map(|v| v * v).sum();
        let rr: f64 = r.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / pr;
        let e_perp: Vec<f64> = e.iter().zip(&r).map(|(a, b)| a - rr * b).collect();
        let pe: f64 = e_perp.iter().map(|v| v * v).sum();
        let g = (pr / pe / 10.0).sqrt();
        let est: Vec<f64> = r.iter().zip(&e_perp).map(|(a, b)| 0.7 * (a + g * b)).collect();
        assert!((si_sdr(&est, &r).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn mask_mse_examples() {
        let a = Mask::constant(3, 5, 0.0);
        let b = Mask::constant(3, 5, 1.0);
        assert_eq!(mask_mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mask_mse(&a, &b).unwrap(), 1.0);
        assert!(mask_mse(&a, &Mask::constant(3, 4, 0.0)).is_err());
    }

    #[test]
    fn separation_classes() {
        assert_eq!(SeparationClass::of(Some(24.0)), SeparationClass::Deg25);
        assert_eq!(SeparationClass::of(Some(47.0)), SeparationClass::Deg45);
        assert_eq!(SeparationClass::of(Some(90.0)), SeparationClass::Deg90);
        assert_eq!(SeparationClass::of(Some(60.0)), SeparationClass::Other);
        assert_eq!(SeparationClass::of(None), SeparationClass::None);
    }
}
