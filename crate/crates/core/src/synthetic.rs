//! Synthetic retailer panel with planted ground truth.
//!
//! Each retailer belongs to one of `n_groups` groups with its own annual
//! cycle. The mean of the transformed target follows
//!
//! ```text
//! mu[i,t] = exp(baseline[i] + season[g(i)](t) + ad_effect * ad[i,t-1])
//! ```
//!
//! and `z[i,t] ~ Tw(mu[i,t], phi, rho)`; recorded sales are `exp(z) - 1`.
//! Basic features carry the group (four category-signature columns), the
//! retailer's scale (buyers, rating, reviews), the ad-spend driver and pure
//! noise, so clustering can recover groups and models have real signal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::features::{Panel, PanelRecord, RetailerId};
use crate::seasonality::SeasonalProfile;
use crate::tweedie::{self, TweedieParams};

const N_SIGNATURE: usize = 4;
const N_NOISE: usize = 4;
const PLANTED_ORDER: usize = 2;
const PERIOD: u32 = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_retailers: usize,
    pub n_months: usize,
    pub n_groups: usize,
    pub rho_true: f64,
    pub phi_true: f64,
    /// Range of each planted harmonic coefficient magnitude (log-mean scale).
    pub amplitude_range: (f64, f64),
    /// Range of `log(mu)` baselines, drawn uniformly.
    pub baseline_range: (f64, f64),
    /// Spread of group category signatures around zero.
    pub signature_spread: f64,
    /// Per-retailer and per-month noise on category signatures.
    pub signature_noise: (f64, f64),
    /// Noise on the buyer-count feature.
    pub buyers_noise: f64,
    /// Effect of last month's ad spend on `log(mu)`.
    pub ad_effect: f64,
    /// When false, retailer-months close (exact zero sales) with
    /// probability `churn_rate` on top of the Tweedie point mass.
    pub churn_free: bool,
    pub churn_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_retailers: 5000,
            n_months: 24,
            n_groups: 5,
            rho_true: 1.3,
            phi_true: 0.5,
            amplitude_range: (0.2, 0.4),
            baseline_range: (0.3f64.ln(), 9f64.ln()),
            signature_spread: 2.0,
            signature_noise: (0.4, 0.2),
            buyers_noise: 0.3,
            ad_effect: 0.15,
            churn_free: true,
            churn_rate: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_retailers == 0 || self.n_months == 0 || self.n_groups == 0 {
            return Err(Error::Config("retailer, month and group counts must be positive".into()));
        }
        if !(self.rho_true > 1.0 && self.rho_true < 2.0) {
            return Err(Error::Config(format!("rho_true must lie in (1, 2), got {}", self.rho_true)));
        }
        if !(self.phi_true > 0.0) {
            return Err(Error::Config("phi_true must be positive".into()));
        }
        let (lo, hi) = self.amplitude_range;
        if !(0.0 <= lo && lo <= hi) {
            return Err(Error::Config("amplitude_range must satisfy 0 <= lo <= hi".into()));
        }
        if !(self.baseline_range.0 <= self.baseline_range.1) {
            return Err(Error::Config("baseline_range must satisfy lo <= hi".into()));
        }
        if !(0.0..=1.0).contains(&self.churn_rate) {
            return Err(Error::Config("churn_rate must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn basic_names() -> Vec<String> {
        let mut names: Vec<String> = (0..N_SIGNATURE).map(|k| format!("category_{k}")).collect();
        names.extend(["ad_spend", "buyers", "rating", "reviews"].map(String::from));
        names.extend((0..N_NOISE).map(|k| format!("noise_{k}")));
        names
    }
}

/// Everything the generator planted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub groups: BTreeMap<RetailerId, usize>,
    /// Planted seasonal profiles on the `log(mu)` scale, one per group.
    pub profiles: Vec<SeasonalProfile>,
    pub baselines: BTreeMap<RetailerId, f64>,
    /// First month of the panel; column `j` of `mu` is month `first_month + j`.
    pub first_month: i32,
    /// `mu[i][j]` for retailer `i` (in id order) at month `first_month + j`.
    pub mu: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn mu_at(&self, retailer: RetailerId, month: i32) -> Option<f64> {
        let row = self.groups.keys().position(|&r| r == retailer)?;
        let col = usize::try_from(month - self.first_month).ok()?;
        self.mu.get(row)?.get(col).copied()
    }
}

fn planted_profiles(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<SeasonalProfile> {
    let (lo, hi) = cfg.amplitude_range;
    (0..cfg.n_groups)
        .map(|g| {
            let mut coef = || {
                let mag = if hi > lo { rng.random_range(lo..hi) } else { lo };
                if rng.random::<bool>() { mag } else { -mag }
            };
            let a: Vec<f64> = (0..PLANTED_ORDER).map(|_| coef()).collect();
            let b: Vec<f64> = (0..PLANTED_ORDER).map(|_| coef()).collect();
            SeasonalProfile {
                group: g,
                period: PERIOD,
                order: PLANTED_ORDER,
                a0: 0.0,
                a,
                b,
                fit_window: (1, 0),
            }
        })
        .collect()
}

/// Generates the panel (months `1..=n_months`) and its ground truth.
pub fn generate(cfg: &SynthConfig) -> Result<(Panel, GroundTruth)> {
    cfg.validate()?;
    let mut shared = ChaCha8Rng::seed_from_u64(cfg.seed);
    let profiles = planted_profiles(cfg, &mut shared);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let signatures: Vec<Vec<f64>> = (0..cfg.n_groups)
        .map(|_| (0..N_SIGNATURE).map(|_| cfg.signature_spread * unit.sample(&mut shared)).collect())
        .collect();

    let n_months = cfg.n_months as i32;
    let mut records = Vec::with_capacity(cfg.n_retailers * cfg.n_months);
    let mut truth = GroundTruth {
        groups: BTreeMap::new(),
        profiles: profiles.clone(),
        baselines: BTreeMap::new(),
        first_month: 1,
        mu: Vec::with_capacity(cfg.n_retailers),
    };

    for i in 0..cfg.n_retailers {
        let id = RetailerId(i as u32);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64 + 1);

        let group = rng.random_range(0..cfg.n_groups);
        let (blo, bhi) = cfg.baseline_range;
        let baseline = if bhi > blo { rng.random_range(blo..bhi) } else { blo };
        let retailer_sig: Vec<f64> = signatures[group]
            .iter()
            .map(|c| c + cfg.signature_noise.0 * unit.sample(&mut rng))
            .collect();
        let rating = 4.0 + 0.3 * (baseline - 1.0).tanh();
        let mut ad = unit.sample(&mut rng);
        let mut mu_row = Vec::with_capacity(cfg.n_months);

        for t in 1..=n_months {
            let season = profiles[group].eval(f64::from(t));
            let log_mu = baseline + season + cfg.ad_effect * ad;
            let mu = log_mu.exp();
            mu_row.push(mu);
            let params = TweedieParams::new(mu, cfg.phi_true, cfg.rho_true)?;
            let mut z = tweedie::sample(params, &mut rng);
            if !cfg.churn_free && rng.random::<f64>() < cfg.churn_rate {
                z = 0.0;
            }
            let ad_now = 0.6 * ad + 0.8 * unit.sample(&mut rng);

            let mut basic = Vec::with_capacity(N_SIGNATURE + 4 + N_NOISE);
            basic.extend(retailer_sig.iter().map(|s| s + cfg.signature_noise.1 * unit.sample(&mut rng)));
            basic.push(5.0 + 2.0 * ad_now);
            basic.push(2.0 * baseline + cfg.buyers_noise * unit.sample(&mut rng));
            basic.push(rating + 0.1 * unit.sample(&mut rng));
            basic.push(baseline + 0.5 * unit.sample(&mut rng));
            basic.extend((0..N_NOISE).map(|_| unit.sample(&mut rng)));

            records.push(PanelRecord { retailer: id, month: t, sales: z.exp_m1(), basic });
            ad = ad_now;
        }
        truth.groups.insert(id, group);
        truth.baselines.insert(id, baseline);
        truth.mu.push(mu_row);
    }

    Ok((Panel::new(SynthConfig::basic_names(), records)?, truth))
}
