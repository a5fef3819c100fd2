//! Validation RP@p across the Tweedie power grid.
//!
//! `cargo run --release --example sweep -- [seed] [backend]`

use retail_forecast::evaluation::{default_rho_grid, rho_sweep, unimodality_violations};
use retail_forecast::model::{Backend, ModelConfig};
use retail_forecast::pipeline::{build_features, PipelineConfig};
use retail_forecast::synthetic::{generate, SynthConfig};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let backend: Backend = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(Backend::Gbdt);
    let (panel, _) = generate(&SynthConfig { seed, ..Default::default() })?;
    let cfg = PipelineConfig::default();
    let split = build_features(&panel, &cfg, seed)?.split(&cfg)?;
    let mut mcfg = ModelConfig::default();
    mcfg.mlp.learning_rate = 1e-3;
    let res = rho_sweep(&split.train, &split.valid, &default_rho_grid(), backend, &mcfg, seed)?;
    for pt in &res.points {
        let at = |p| pt.report.at(p).unwrap_or(f64::NAN);
        println!("{:.1} {:.4} {:.4} {:.4}", pt.rho, at(0.1), at(0.2), at(0.3));
    }
    let curve: Vec<f64> = res.curve(0.1).into_iter().map(|(_, v)| v).collect();
    println!("best rho {} violations {}", res.best_rho, unimodality_violations(&curve));
    Ok(())
}
