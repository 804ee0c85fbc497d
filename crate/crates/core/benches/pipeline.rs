//! Single-thread pool vs the global rayon pool on the hot paths.
//!
//! Build with `--no-default-features` to bench the sequential fallback; the
//! "1 thread" and "global" rows then coincide.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use foa_enhance::metrics::evaluate_pipeline;
use foa_enhance::mwf::{gevd_rank1_filter, masked_covariances};
use foa_enhance::pipeline::{Enhancer, FilterFromIdealMask, IdealMaskOnW, Mixture};
use foa_enhance::scene::{synthesize_scene, Layout, SceneOutput, SceneRecipe};
use foa_enhance::stft::{analyze, StftConfig};
use foa_enhance::unet::{Tensor, UNetConfig, UNetModel};
use rayon::ThreadPool;

fn pools() -> Vec<(&'static str, Option<ThreadPool>)> {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    vec![("1 thread", Some(single)), ("global", None)]
}

fn run<R: Send>(pool: &Option<ThreadPool>, f: impl FnOnce() -> R + Send) -> R {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

fn scenes(n: u64) -> Vec<SceneOutput> {
    let recipe = SceneRecipe {
        interferers: 1,
        layout: Layout::Fixed(45.0),
        sir_db: 0.0,
        snr_db: 20.0,
        reverb: None,
        seconds: 2.0,
    };
    let cfg = StftConfig::default();
    (0..n)
        .map(|s| {
            let (spec, src) = recipe.build(s, cfg.sample_rate);
            synthesize_scene(&spec, &src, &cfg).unwrap()
        })
        .collect()
}

fn benches(c: &mut Criterion) {
    let pools = pools();
    let sc = scenes(8);
    let cfg = StftConfig::default();
    let signal: Vec<Vec<f64>> = sc[0].stems.target.iter().cloned().collect();
    let model = UNetModel::<f32>::build(UNetConfig::toy(), 0).unwrap();
    let x = Tensor::<f32>::zeros([8, 3, 16, 64]);

    let mut g = c.benchmark_group("stft analyze 4ch 2s");
    for (name, pool) in &pools {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run(pool, || analyze(&signal, &cfg).unwrap())));
    }
    g.finish();

    let mut g = c.benchmark_group("covariances + GEVD filter");
    for (name, pool) in &pools {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                run(pool, || {
                    let cov = masked_covariances(&sc[0].mixture, &sc[0].oracle_mask).unwrap();
                    gevd_rank1_filter(&cov).unwrap()
                })
            })
        });
    }
    g.finish();

    let mut g = c.benchmark_group("toy U-net forward, batch 8");
    for (name, pool) in &pools {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run(pool, || model.predict(&x).unwrap())));
    }
    g.finish();

    let filter = FilterFromIdealMask::default();
    let systems: [&dyn Enhancer; 3] = [&Mixture, &IdealMaskOnW, &filter];
    let mut g = c.benchmark_group("evaluate 8 scenes");
    g.sample_size(10);
    for (name, pool) in &pools {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run(pool, || evaluate_pipeline(&sc, &systems).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
