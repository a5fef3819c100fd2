//! RP@p of the true-mean forecaster on the synthetic test window.

use retail_forecast::evaluation::rp_at_p;
use retail_forecast::features::inverse_transform;
use retail_forecast::synthetic::{generate, SynthConfig};

fn main() -> anyhow::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let (panel, truth) = generate(&SynthConfig { seed, ..Default::default() })?;
    let (mut y, mut yhat) = (Vec::new(), Vec::new());
    for r in panel.records.iter().filter(|r| r.month > 19) {
        y.push(r.sales);
        yhat.push(inverse_transform(truth.mu_at(r.retailer, r.month).unwrap()));
    }
    for p in [0.1, 0.2, 0.3] {
        println!("oracle RP@{p} = {:.4}", rp_at_p(&y, &yhat, p)?.value);
    }
    Ok(())
}
