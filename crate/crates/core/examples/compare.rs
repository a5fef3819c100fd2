//! Trains all eight variants on a synthetic panel and prints the test table.
//!
//! `cargo run --release --example compare -- [seed] [backend]`

use retail_forecast::evaluation::{compare_models, DEFAULT_PS};
use retail_forecast::model::{Backend, ModelConfig};
use retail_forecast::pipeline::{build_features, PipelineConfig};
use retail_forecast::synthetic::{generate, SynthConfig};
use std::time::Instant;

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let backends: Vec<Backend> = match args.get(2) {
        Some(b) => vec![b.parse()?],
        None => Backend::ALL.to_vec(),
    };
    let t0 = Instant::now();
    let (panel, _) = generate(&SynthConfig { seed, ..Default::default() })?;
    let cfg = PipelineConfig::default();
    let out = build_features(&panel, &cfg, seed)?;
    let split = out.split(&cfg)?;
    eprintln!(
        "features: {} rows ({} train) in {:.1?}",
        out.features.len(),
        split.train.len(),
        t0.elapsed()
    );
    let t1 = Instant::now();
    let mut mcfg = ModelConfig::default();
    if let Ok(lr) = std::env::var("NN_LR") {
        mcfg.mlp.learning_rate = lr.parse()?;
    }
    let table = compare_models(&split, &backends, &mcfg, seed, &DEFAULT_PS)?;
    eprintln!("models in {:.1?}", t1.elapsed());
    print!("{}", table.render());
    for (a, b, r) in table.improvements(0.1) {
        println!("{a} vs {b}: {:+.1}%", 100.0 * r);
    }
    Ok(())
}
