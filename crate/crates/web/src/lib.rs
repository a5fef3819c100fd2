use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use retail_forecast::evaluation::rp_at_p;
use retail_forecast::seasonality::{eval_profile, fit_fourier};
use retail_forecast::tweedie::{self, TweedieParams};
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// `n` density values on an even grid over `(0, y_max]`, followed by the
/// point mass at zero as the last element.
#[wasm_bindgen]
pub fn tweedie_curve(mu: f64, phi: f64, rho: f64, y_max: f64, n: usize) -> Result<Vec<f64>, JsError> {
    let p = TweedieParams::new(mu, phi, rho).map_err(js)?;
    let mut out = Vec::with_capacity(n + 1);
    for i in 1..=n {
        let y = y_max * i as f64 / n as f64;
        out.push(tweedie::log_density(y, &p).map_err(js)?.exp());
    }
    out.push(tweedie::prob_zero(p));
    Ok(out)
}

/// Planted two-harmonic cycle over `months`, with Gaussian noise. Fits the
/// first `fit_months` at `order` and returns `[observed..., fitted...]`.
#[wasm_bindgen]
pub fn fourier_forecast(seed: u64, months: usize, fit_months: usize, order: usize, noise: f64) -> Result<Vec<f64>, JsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(0.0)).map_err(js)?;
    let observed: Vec<f64> = (1..=months)
        .map(|t| {
            let w = 2.0 * std::f64::consts::PI * t as f64 / 12.0;
            5.0 + 1.5 * w.cos() - 0.8 * w.sin() + 0.6 * (2.0 * w).cos() + normal.sample(&mut rng)
        })
        .collect();
    let window = &observed[..fit_months.min(months)];
    let profile = fit_fourier(window, 1, order, 12).map_err(js)?;
    let fitted = (1..=months as i32).map(|t| eval_profile(&profile, t));
    Ok(observed.iter().copied().chain(fitted).collect())
}

/// RP@p for p = 0.01, 0.02, ..., 1.00 of the forecast `scale * mu` against
/// `n` draws from Tw(mu, phi, rho).
#[wasm_bindgen]
pub fn rp_curve(mu: f64, phi: f64, rho: f64, scale: f64, n: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    let p = TweedieParams::new(mu, phi, rho).map_err(js)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..n).map(|_| tweedie::sample(p, &mut rng)).collect();
    let yhat = vec![scale * mu; n];
    (1..=100).map(|k| rp_at_p(&y, &yhat, k as f64 / 100.0).map(|r| r.value).map_err(js)).collect()
}
