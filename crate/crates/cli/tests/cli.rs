use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use foa_enhance::beamform::build_beamformers;
use foa_enhance::metrics::EvalReport;
use foa_enhance::scene::synth::synthetic_speech;
use foa_enhance::stft::{analyze, synthesize};
use foa_enhance::Mask;
use foa_enhance_cli::io::{decode_mask, encode_mask, read_wav, write_wav};
use foa_enhance_cli::scenes::{load_scene, Manifest};
use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_foa-enhance"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?}: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    bin(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Two mono talkers and a scene config referencing them.
fn explicit_setup(dir: &Path, extra: &str) -> PathBuf {
    write_wav(&dir.join("a.wav"), &[synthetic_speech(1, 1.5, 16_000)], 16_000).unwrap();
    write_wav(&dir.join("b.wav"), &[synthetic_speech(2, 1.5, 16_000)], 16_000).unwrap();
    write(
        dir,
        "sim.toml",
        &format!(
            "seed = 7\nout_dir = \"scene\"\n[scene]\nsir_db = 0\nsnr_db = 20\n{extra}\
             target = {{ source = \"a.wav\", azimuth_deg = 0, elevation_deg = 0 }}\n\
             interferers = [{{ source = \"b.wav\", azimuth_deg = 90, elevation_deg = 0 }}]\n"
        ),
    )
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let t = TempDir::new().unwrap();
    let cfg = explicit_setup(t.path(), "");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&t.path().join("one"))]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&t.path().join("two"))]);
    let (a, b) = (files(&t.path().join("one")), files(&t.path().join("two")));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["diffuse.wav", "interferer1.wav", "mixture.wav", "oracle.mask", "scene.toml", "target.wav"]);
    assert_eq!(a, b);
}

#[test]
fn clean_single_talker_mixture_equals_target() {
    let t = TempDir::new().unwrap();
    write_wav(&t.path().join("a.wav"), &[synthetic_speech(1, 1.2, 16_000)], 16_000).unwrap();
    let cfg = write(
        t.path(),
        "sim.toml",
        "seed = 7\nout_dir = \"scene\"\n[scene]\nsnr_db = inf\ntarget = { source = \"a.wav\", azimuth_deg = 30 }\n",
    );
    ok(&["simulate", "--config", s(&cfg)]);
    let d = t.path().join("scene");
    assert_eq!(fs::read(d.join("mixture.wav")).unwrap(), fs::read(d.join("target.wav")).unwrap());
    assert!(!d.join("diffuse.wav").exists());
}

#[test]
fn manifest_levels_match_remeasured_stems() {
    let t = TempDir::new().unwrap();
    let cfg = explicit_setup(t.path(), "");
    ok(&["simulate", "--config", s(&cfg)]);
    let d = t.path().join("scene");
    let m = Manifest::read(&d).unwrap();
    let energy = |f: &str| -> f64 { read_wav(&d.join(f)).unwrap().0[0].iter().map(|v| v * v).sum() };
    let e_t = energy("target.wav");
    let sir = 10.0 * (e_t / energy("interferer1.wav")).log10();
    let snr = 10.0 * (e_t / energy("diffuse.wav")).log10();
    assert!((sir - m.spec.sir_db).abs() < 0.01, "{sir}");
    assert!((snr - m.spec.snr_db).abs() < 0.01, "{snr}");
    assert!((m.levels.sir_db[0] - m.spec.sir_db).abs() < 1e-9);
    assert_eq!(m.directions_deg[1][0].round(), 90.0);
}

#[test]
fn exit_codes() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["--help"]), 0);

    let cfg = explicit_setup(t.path(), "");
    let text = fs::read_to_string(&cfg).unwrap();
    let unknown = write(t.path(), "unknown.toml", &text.replace("seed = 7", "seed = 7\nflavour = 1"));
    assert_eq!(code(&["simulate", "--config", s(&unknown)]), 1);
    let close = write(t.path(), "close.toml", &text.replace("azimuth_deg = 90", "azimuth_deg = 10"));
    assert_eq!(code(&["simulate", "--config", s(&close)]), 1);
    write_wav(&t.path().join("b.wav"), &[vec![0.1; 20_000], vec![0.1; 20_000]], 16_000).unwrap();
    assert_eq!(code(&["simulate", "--config", s(&cfg)]), 2);
    let missing = write(t.path(), "missing.toml", &text.replace("a.wav", "nope.wav"));
    assert_eq!(code(&["simulate", "--config", s(&missing)]), 2);

    let stereo = t.path().join("stereo.wav");
    write_wav(&stereo, &[vec![0.0; 4000], vec![0.0; 4000]], 16_000).unwrap();
    let out = t.path().join("y.wav");
    assert_eq!(code(&["enhance", "--mixture", s(&stereo), "--target", "0,0", "--mode", "beamformer", "--out", s(&out)]), 2);
    assert_eq!(code(&["enhance", "--mixture", s(&stereo), "--mode", "beamformer", "--out", s(&out)]), 1);
}

fn simulated(t: &TempDir, sep_az: f64) -> PathBuf {
    write_wav(&t.path().join("a.wav"), &[synthetic_speech(1, 3.0, 16_000)], 16_000).unwrap();
    write_wav(&t.path().join("b.wav"), &[synthetic_speech(2, 3.0, 16_000)], 16_000).unwrap();
    let cfg = write(
        t.path(),
        "sim.toml",
        &format!(
            "seed = 3\nout_dir = \"scene\"\n[scene]\nsir_db = 0\nsnr_db = 20\n\
             target = {{ source = \"a.wav\", azimuth_deg = 0 }}\n\
             interferers = [{{ source = \"b.wav\", azimuth_deg = {sep_az} }}]\n"
        ),
    );
    ok(&["simulate", "--config", s(&cfg)]);
    t.path().join("scene")
}

fn improvement(stdout: &str) -> f64 {
    let tail = stdout.split("improvement ").nth(1).expect("SI-SDR line");
    tail.split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn enhance_modes() {
    let t = TempDir::new().unwrap();
    let scene = simulated(&t, 90.0);
    let out = t.path().join("filtered.wav");
    let dump = t.path().join("used.mask");
    let stdout = ok(&["enhance", "--scene", s(&scene), "--out", s(&out), "--dump-mask", s(&dump)]);
    assert!(improvement(&stdout) >= 10.0, "{stdout}");
    assert_eq!(fs::read(&dump).unwrap(), fs::read(scene.join("oracle.mask")).unwrap());
    assert_eq!(ok(&["enhance", "--scene", s(&scene), "--out", s(&t.path().join("again.wav"))]), stdout.replace("filtered", "again"));
    assert_eq!(fs::read(&out).unwrap(), fs::read(t.path().join("again.wav")).unwrap());

    let masked = ok(&["enhance", "--scene", s(&scene), "--mode", "mask-only", "--out", s(&t.path().join("m.wav"))]);
    assert!(improvement(&masked) > 0.0);

    let bf_out = t.path().join("bf.wav");
    ok(&[
        "enhance",
        "--mixture",
        s(&scene.join("mixture.wav")),
        "--manifest",
        s(&scene.join("scene.toml")),
        "--mode",
        "beamformer",
        "--out",
        s(&bf_out),
    ]);
    let m = Manifest::read(&scene).unwrap();
    let (mix, _) = read_wav(&scene.join("mixture.wav")).unwrap();
    let spec = analyze(&mix, &m.stft).unwrap();
    let bf = build_beamformers(m.spec.target.direction, &m.spec.interferer_directions()).unwrap();
    let s_hat = synthesize(&bf.apply(0, &spec).unwrap()).unwrap().swap_remove(0);
    let (y, _) = read_wav(&bf_out).unwrap();
    let err = y[0].iter().zip(&s_hat).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
    assert!(err < 1e-6, "{err}");
}

fn dataset(t: &TempDir) -> PathBuf {
    let gen = |name: &str, seed: u64, count: usize| {
        let cfg = write(
            t.path(),
            &format!("{name}.toml"),
            &format!(
                "seed = {seed}\nout_dir = \"{name}\"\n[stft]\nframe_len = 128\nhop = 64\nsample_rate = 16000\n\
                 [generate]\ncount = {count}\ninterferers = 1\nseparations_deg = [25, 45, 90]\nsnr_db = 20\nseconds = 1.2\n"
            ),
        );
        ok(&["simulate", "--config", s(&cfg)]);
    };
    gen("train", 0, 6);
    gen("val", 100, 2);
    gen("test", 200, 3);
    write(
        t.path(),
        "train_cfg.toml",
        "seed = 5\ntrain_dir = \"train\"\nvalidation_dir = \"val\"\nout_dir = \"run\"\n\
         [network]\npreset = \"toy\"\n[train]\nmax_epochs = 3\nbatch_size = 8\n",
    )
}

#[test]
fn train_resume_eval_and_dump() {
    let t = TempDir::new().unwrap();
    let cfg = dataset(&t);
    let full = t.path().join("full");
    let split = t.path().join("split");
    ok(&["train", "--config", s(&cfg), "--out", s(&full)]);
    ok(&["train", "--config", s(&cfg), "--out", s(&split), "--max-epochs", "1"]);
    ok(&["train", "--config", s(&cfg), "--out", s(&split), "--resume"]);
    for f in ["train_log.csv", "best.ckpt", "last.ckpt"] {
        assert_eq!(fs::read(full.join(f)).unwrap(), fs::read(split.join(f)).unwrap(), "{f}");
    }
    let log = fs::read_to_string(full.join("train_log.csv")).unwrap();
    let rows: Vec<Vec<&str>> = log.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0].parse::<usize>().unwrap(), i + 1);
        assert!(r[1].parse::<f64>().unwrap().is_finite() && r[2].parse::<f64>().unwrap().is_finite());
    }

    let ck = full.join("best.ckpt");
    let report_dir = t.path().join("report");
    let test = t.path().join("test");
    ok(&["eval", "--scenes", s(&test), "--checkpoint", s(&ck), "--out", s(&report_dir)]);
    let json = fs::read_to_string(report_dir.join("report.json")).unwrap();
    let txt = fs::read_to_string(report_dir.join("report.txt")).unwrap();
    let report: EvalReport = serde_json::from_str(&json).unwrap();
    let names: Vec<&str> = report.systems.iter().map(|r| r.system.as_str()).collect();
    assert_eq!(
        names,
        ["mixture", "beamformer", "ideal mask", "filter from ideal mask", "learned mask", "filter from learned mask"]
    );
    assert_eq!(report.system("mixture").unwrap().overall.si_sdr_improvement_db, 0.0);
    assert_eq!(report.to_string(), txt);
    for (sys, line) in report.systems.iter().zip(txt.lines().skip(1)) {
        assert!(line.starts_with(&sys.system));
        let cells: Vec<&str> = line[24..].split_whitespace().collect();
        assert_eq!(cells[0], format!("{:.2}", sys.overall.si_sdr_db));
        assert_eq!(cells[1], format!("{:.2}", sys.overall.si_sdr_improvement_db));
        for (g, cell) in sys.groups.iter().zip(&cells[2..]) {
            assert_eq!(*cell, format!("{:.2}", g.summary.si_sdr_improvement_db));
        }
    }
    let again = t.path().join("report2");
    ok(&["eval", "--scenes", s(&test), "--checkpoint", s(&ck), "--out", s(&again)]);
    assert_eq!(fs::read(again.join("report.json")).unwrap(), json.as_bytes());

    let scene = test.join("scene_0000");
    let prefix = t.path().join("pred");
    ok(&["dump-mask", "--scene", s(&scene), "--checkpoint", s(&ck), "--out", s(&prefix)]);
    let mask = decode_mask(&fs::read(t.path().join("pred.mask")).unwrap()).unwrap();
    let (_, sc) = load_scene(&scene).unwrap();
    assert_eq!((mask.frames(), mask.bins()), (sc.mixture.frames(), 65));

    let two = t.path().join("two");
    let cfg2 = write(
        t.path(),
        "two.toml",
        "seed = 1\nout_dir = \"two\"\n[stft]\nframe_len = 128\nhop = 64\nsample_rate = 16000\n\
         [generate]\ncount = 1\ninterferers = 2\nsnr_db = 20\nseconds = 1.2\n",
    );
    ok(&["simulate", "--config", s(&cfg2)]);
    let out = t.path().join("x.wav");
    let two_scene = two.join("scene_0000");
    let bad = ["enhance", "--scene", s(&two_scene), "--checkpoint", s(&ck), "--out", s(&out)];
    assert_ne!(code(&bad), 0);
}

#[test]
fn dump_mask_images() {
    let t = TempDir::new().unwrap();
    let ones = t.path().join("ones.mask");
    fs::write(&ones, encode_mask(&Mask::constant(7, 5, 1.0))).unwrap();
    let prefix = t.path().join("ones_img");
    ok(&["dump-mask", "--mask", s(&ones), "--out", s(&prefix)]);
    let pgm = fs::read(t.path().join("ones_img.pgm")).unwrap();
    let header = b"P5\n7 5\n255\n";
    assert!(pgm.starts_with(header));
    assert!(pgm[header.len()..].iter().all(|&p| p == 255));
    assert_eq!(pgm.len(), header.len() + 35);
    assert_eq!(fs::read(t.path().join("ones_img.mask")).unwrap(), fs::read(&ones).unwrap());
}

/// Mean normalized autocorrelation along frequency of the mask columns in
/// voiced frames, at `lag` bins.
fn column_autocorrelation(mask: &Mask, lag: usize, bins: std::ops::Range<usize>) -> f64 {
    let mut acc = 0.0;
    let mut n = 0;
    for t in 0..mask.frames() {
        let col: Vec<f64> = bins.clone().map(|f| f64::from(mask.get(t, f))).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let c: Vec<f64> = col.iter().map(|v| v - mean).collect();
        let var: f64 = c.iter().map(|v| v * v).sum();
        if var < 1e-3 {
            continue;
        }
        acc += c.iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / var;
        n += 1;
    }
    acc / n.max(1) as f64
}

#[test]
fn oracle_mask_shows_harmonic_striations() {
    let t = TempDir::new().unwrap();
    let sr = 16_000.0;
    let f0 = 250.0;
    let voiced: Vec<f64> = (0..32_000)
        .map(|i| {
            let x = i as f64 / sr;
            (1..=24).map(|h| (2.0 * std::f64::consts::PI * f0 * h as f64 * x).sin() / h as f64).sum()
        })
        .collect();
    write_wav(&t.path().join("v.wav"), &[voiced], 16_000).unwrap();
    let cfg = write(
        t.path(),
        "sim.toml",
        "seed = 2\nout_dir = \"scene\"\n[scene]\nsnr_db = 0\ntarget = { source = \"v.wav\", azimuth_deg = 0 }\n",
    );
    ok(&["simulate", "--config", s(&cfg)]);
    let prefix = t.path().join("oracle");
    ok(&["dump-mask", "--scene", s(&t.path().join("scene")), "--out", s(&prefix)]);
    let mask = decode_mask(&fs::read(t.path().join("oracle.mask")).unwrap()).unwrap();
    // 1024-point frames: 15.625 Hz bins, so the harmonics repeat every 16 bins
    let period = 16;
    let band = 8..8 + 16 * 20;
    let at_period = column_autocorrelation(&mask, period, band.clone());
    let at_half = column_autocorrelation(&mask, period / 2, band);
    assert!(at_period > 0.3 && at_period > at_half, "{at_period} vs {at_half}");
}
