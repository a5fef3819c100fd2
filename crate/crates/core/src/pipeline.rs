//! End-to-end feature construction: cap filter, clustering, group profiles
//! fitted on the training window, and row assembly.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::features::{self, FeatureSet, Panel, RetailerId, Split};
use crate::seasonality::{self, GroupAssignment, GroupSeries, SeasonalProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Retailer-months with sales at or above the cap are dropped.
    pub cap: f64,
    pub k: usize,
    pub order: usize,
    pub period: u32,
    pub train_end: i32,
    pub valid_end: i32,
    pub log_sales_features: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cap: 300_000.0,
            k: 20,
            order: seasonality::DEFAULT_ORDER,
            period: seasonality::DEFAULT_PERIOD,
            train_end: 12,
            valid_end: 18,
            log_sales_features: true,
        }
    }
}

/// Per-retailer clustering vector: mean over training-window months of the
/// basic features and of `log(1 + sales)`. Retailers with no training-window
/// months are summarised over all their months.
pub fn clustering_vectors(panel: &Panel, train_end: i32) -> BTreeMap<RetailerId, Vec<f64>> {
    let dim = panel.basic_names.len() + 1;
    panel
        .by_retailer()
        .into_iter()
        .map(|(id, history)| {
            let in_window: Vec<_> = history.range(..=train_end).map(|(_, r)| *r).collect();
            let used = if in_window.is_empty() {
                history.values().copied().collect()
            } else {
                in_window
            };
            let mut v = vec![0.0; dim];
            for r in &used {
                for (acc, x) in v.iter_mut().zip(&r.basic) {
                    *acc += x;
                }
                v[dim - 1] += r.sales.ln_1p();
            }
            v.iter_mut().for_each(|x| *x /= used.len() as f64);
            (id, v)
        })
        .collect()
}

/// Fits one profile per group to its mean log-sales over months
/// `..=train_end` in which the group has members. Groups without enough
/// observations get a constant profile at their mean (zero when empty).
pub fn fit_group_profiles(
    series: &GroupSeries,
    train_end: i32,
    order: usize,
    period: u32,
) -> Result<BTreeMap<usize, SeasonalProfile>> {
    let mut out = BTreeMap::new();
    for (&group, values) in &series.series {
        let counts = &series.counts[&group];
        let points: Vec<(i32, f64)> = values
            .iter()
            .zip(counts)
            .enumerate()
            .map(|(i, (&v, &c))| (series.start_month + i as i32, v, c))
            .filter(|&(m, _, c)| m <= train_end && c > 0)
            .map(|(m, v, _)| (m, v))
            .collect();
        let mut profile = if points.len() >= 2 * order + 1 {
            seasonality::fit_fourier_points(&points, order, period)?
        } else {
            let mean = if points.is_empty() {
                0.0
            } else {
                points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64
            };
            log::warn!("group {group}: {} training months, using a constant profile", points.len());
            SeasonalProfile { period, ..SeasonalProfile::constant(group, mean) }
        };
        profile.group = group;
        out.insert(group, profile);
    }
    Ok(out)
}

/// Clusters retailers and fits group profiles on the training window.
pub fn build_seasonality(
    panel: &Panel,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(GroupAssignment, BTreeMap<usize, SeasonalProfile>)> {
    if panel.is_empty() {
        return Err(Error::Data("panel is empty".into()));
    }
    let vectors = clustering_vectors(panel, cfg.train_end);
    let k = cfg.k.min(vectors.len());
    let assignment = seasonality::cluster_retailers(&vectors, k, seed)?;
    let series = seasonality::group_mean_log_sales(panel, &assignment);
    let profiles = fit_group_profiles(&series, cfg.train_end, cfg.order, cfg.period)?;
    Ok((assignment, profiles))
}

/// Output of [`build_features`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub panel: Panel,
    pub assignment: GroupAssignment,
    pub profiles: BTreeMap<usize, SeasonalProfile>,
    pub features: FeatureSet,
}

impl PipelineOutput {
    pub fn split(&self, cfg: &PipelineConfig) -> Result<Split<FeatureSet>> {
        features::time_split(&self.features, cfg.train_end, cfg.valid_end)
    }
}

/// Cap filter, seasonality and assembly in one pass.
pub fn build_features(panel: &Panel, cfg: &PipelineConfig, seed: u64) -> Result<PipelineOutput> {
    let panel = features::filter_cap(panel, cfg.cap);
    let (assignment, profiles) = build_seasonality(&panel, cfg, seed)?;
    let set = features::assemble(&panel, &profiles, &assignment, cfg.log_sales_features)?;
    Ok(PipelineOutput { panel, assignment, profiles, features: set })
}
