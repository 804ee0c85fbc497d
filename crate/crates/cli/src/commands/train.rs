use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use foa_enhance::scene::SceneOutput;
use foa_enhance::unet::checkpoint::{self, TrainProgress};
use foa_enhance::unet::infer::build_dataset;
use foa_enhance::unet::train::{train, EpochRecord, Snapshot, TrainState};
use foa_enhance::unet::UNetModel;

use crate::config::TrainConfig;
use crate::error::{at, CliError, Result};
use crate::{io, scenes};

pub const LAST: &str = "last.ckpt";
pub const BEST: &str = "best.ckpt";
pub const LOG: &str = "train_log.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub out_dir: PathBuf,
}

/// Interferer count and frequency bins shared by every scene.
fn geometry(sets: &[&[SceneOutput]]) -> Result<(usize, usize)> {
    let mut all = sets.iter().flat_map(|s| s.iter());
    let first = all.next().ok_or_else(|| CliError::Data("empty dataset".into()))?;
    let key = |s: &SceneOutput| (s.spec.interferers.len(), s.mixture.bins(), *s.mixture.config());
    let k = key(first);
    if let Some(bad) = all.find(|s| key(s) != k) {
        let b = key(bad);
        return Err(CliError::Data(format!(
            "inconsistent scenes: {} interferers / {} bins vs {} interferers / {} bins",
            k.0, k.1, b.0, b.1
        )));
    }
    Ok((k.0, k.1))
}

fn log_csv(log: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,improved\n");
    for r in log {
        let _ = writeln!(s, "{},{:.9e},{:.9e},{}", r.epoch, r.train_loss, r.val_loss, r.improved);
    }
    s
}

fn load_ckpt(path: &Path) -> Result<(UNetModel<f32>, Option<TrainProgress>)> {
    checkpoint::load(path).map_err(CliError::from).map_err(at(path))
}

fn save_ckpt(path: &Path, m: &UNetModel<f32>, p: &TrainProgress) -> Result<()> {
    checkpoint::save(path, m, Some(p)).map_err(CliError::from).map_err(at(path))
}

pub fn run(cfg: &TrainConfig, resume: bool) -> Result<TrainOutcome> {
    let train_set = scenes::load_all(&cfg.train_dir)?;
    let val_set = scenes::load_all(&cfg.validation_dir)?;
    let (interferers, bins) = geometry(&[&train_set, &val_set])?;
    let net = cfg.network.resolve(interferers + 2, bins - 1);
    net.validate().map_err(|e| CliError::Config(format!("network for this data: {e}")))?;
    let spec = cfg.spec();
    let (data, stats) = build_dataset(&train_set, &val_set, &net)?;

    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(CliError::from).map_err(at(out))?;
    let (last, best) = (out.join(LAST), out.join(BEST));
    let (mut model, mut state) = if resume && last.is_file() {
        let (m, progress) = load_ckpt(&last)?;
        if m.config() != &net {
            return Err(CliError::Config(format!("{} was trained with a different network", last.display())));
        }
        let progress = progress.ok_or_else(|| CliError::Data(format!("{}: no training progress", last.display())))?;
        let snapshot = if best.is_file() {
            Some(Snapshot::of(&load_ckpt(&best)?.0))
        } else {
            None
        };
        (m, progress.into_state(snapshot))
    } else {
        let mut m = UNetModel::<f32>::build(net, cfg.seed)?;
        m.feature_stats = Some(stats);
        (m, TrainState::default())
    };

    let mut failure = None;
    let result = train(&mut model, &data, &spec, &mut state, |m, st| {
        let progress = TrainProgress::of(st);
        let step = save_ckpt(&last, m, &progress)
            .and_then(|_| match st.log.last() {
                Some(r) if r.improved => save_ckpt(&best, m, &progress),
                _ => Ok(()),
            })
            .and_then(|_| io::write_bytes(&out.join(LOG), log_csv(&st.log).as_bytes()));
        step.map_err(|e| {
            let msg = e.to_string();
            failure = Some(e);
            foa_enhance::Error::InvalidArgument(msg)
        })
    });
    if let Some(e) = failure {
        return Err(e);
    }
    result?;
    Ok(TrainOutcome {
        log: state.log.clone(),
        best_epoch: state.best_epoch,
        best_val: state.best_val,
        out_dir: out.clone(),
    })
}
