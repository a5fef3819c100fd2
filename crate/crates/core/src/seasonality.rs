//! Group seasonality.
//!
//! Retailers are clustered on standardised summary features, each group's
//! monthly series is fitted with a truncated Fourier series
//!
//! ```text
//! y(t) = a0 + sum_{n=1..order} a_n cos(2 pi n t / period) + b_n sin(2 pi n t / period)
//! ```
//!
//! and the fitted profile is read at months around `t` to produce eight
//! features. Profiles are periodic, so reading them beyond the fit window
//! never touches realised sales.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::features::{Panel, RetailerId};

const KMEANS_MAX_ITER: usize = 300;
const FOURIER_RIDGE: f64 = 1e-10;

pub const DEFAULT_PERIOD: u32 = 12;
pub const DEFAULT_ORDER: usize = 4;

pub const SEASONAL_FEATURE_NAMES: [&str; 8] = [
    "season_next",
    "season_next2",
    "season_prev",
    "season_window_mean",
    "season_delta_next",
    "season_delta_yoy",
    "season_window_range",
    "season_window_trend",
];

/// Retailer-to-group map produced by k-means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub k: usize,
    pub assignment: BTreeMap<RetailerId, usize>,
    /// Centroids in the standardised space of `used_dims`.
    pub centroids: Vec<Vec<f64>>,
    /// Input dimensions with nonzero variance.
    pub used_dims: Vec<usize>,
    /// Objective after each Lloyd update.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl GroupAssignment {
    /// Every retailer in one group.
    pub fn single(retailers: impl IntoIterator<Item = RetailerId>) -> Self {
        Self {
            k: 1,
            assignment: retailers.into_iter().map(|r| (r, 0)).collect(),
            centroids: vec![vec![]],
            used_dims: vec![],
            objective_trace: vec![0.0],
            converged: true,
        }
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &g in self.assignment.values() {
            sizes[g] += 1;
        }
        sizes
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lowest-index nearest centroid.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Per-dimension standardisation; zero-variance dimensions are dropped.
fn standardize(points: &[&Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = points.len() as f64;
    let dim = points[0].len();
    let mut used = Vec::new();
    let mut stats = Vec::new();
    for d in 0..dim {
        let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n;
        if var.sqrt() > 1e-12 * mean.abs().max(1.0) {
            used.push(d);
            stats.push((mean, var.sqrt()));
        }
    }
    let out = points
        .iter()
        .map(|p| used.iter().zip(&stats).map(|(&d, &(m, s))| (p[d] - m) / s).collect())
        .collect();
    (out, used)
}

fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            if d2[pick] == 0.0 {
                // Rounding walked past the last positive weight.
                pick = d2.iter().rposition(|&w| w > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // All remaining points coincide with a centroid.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// k-means with k-means++ seeding on standardised vectors.
///
/// Iterates until the assignment is a fixpoint or 300 Lloyd rounds pass.
/// Deterministic for a given seed.
pub fn cluster_retailers(
    vectors: &BTreeMap<RetailerId, Vec<f64>>,
    k: usize,
    seed: u64,
) -> Result<GroupAssignment> {
    if vectors.is_empty() {
        return Err(Error::Argument("no retailers to cluster".into()));
    }
    if k == 0 || k > vectors.len() {
        return Err(Error::Argument(format!(
            "k = {k} must lie in 1..={} (retailer count)",
            vectors.len()
        )));
    }
    let ids: Vec<RetailerId> = vectors.keys().copied().collect();
    let raw: Vec<&Vec<f64>> = vectors.values().collect();
    let dim = raw[0].len();
    if let Some((id, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
        return Err(Error::Argument(format!(
            "retailer {id} has {} features, expected {dim}",
            v.len()
        )));
    }
    if raw.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::Argument("clustering features must be finite".into()));
    }

    let (points, used_dims) = standardize(&raw);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(&points, k, &mut rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..KMEANS_MAX_ITER {
        let mut sums = vec![vec![0.0; used_dims.len()]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            // An empty cluster keeps its previous centroid.
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        trace.push(
            points
                .iter()
                .zip(&labels)
                .map(|(p, &l)| sq_dist(p, &centroids[l]))
                .sum(),
        );
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }

    Ok(GroupAssignment {
        k,
        assignment: ids.into_iter().zip(labels).collect(),
        centroids,
        used_dims,
        objective_trace: trace,
        converged,
    })
}

/// Monthly per-group series starting at `start_month`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSeries {
    pub start_month: i32,
    pub series: BTreeMap<usize, Vec<f64>>,
    /// Members observed per group and month.
    pub counts: BTreeMap<usize, Vec<usize>>,
}

impl GroupSeries {
    pub fn months(&self) -> impl Iterator<Item = i32> + '_ {
        let len = self.series.values().next().map_or(0, Vec::len);
        (0..len as i32).map(move |i| self.start_month + i)
    }
}

fn group_sums(
    panel: &Panel,
    g: &GroupAssignment,
    value: impl Fn(f64) -> f64,
) -> (i32, BTreeMap<usize, Vec<f64>>, BTreeMap<usize, Vec<usize>>) {
    let (first, last) = panel.month_range().unwrap_or((0, -1));
    let len = (last - first + 1).max(0) as usize;
    let mut sums: BTreeMap<usize, Vec<f64>> = (0..g.k).map(|c| (c, vec![0.0; len])).collect();
    let mut counts: BTreeMap<usize, Vec<usize>> = (0..g.k).map(|c| (c, vec![0; len])).collect();
    for r in &panel.records {
        let Some(&group) = g.assignment.get(&r.retailer) else {
            continue;
        };
        let idx = (r.month - first) as usize;
        sums.get_mut(&group).unwrap()[idx] += value(r.sales);
        counts.get_mut(&group).unwrap()[idx] += 1;
    }
    (first, sums, counts)
}

/// Total member sales per group and month. Months without members are 0;
/// retailers absent from the assignment are ignored.
pub fn aggregate_group_series(panel: &Panel, g: &GroupAssignment) -> GroupSeries {
    let (start_month, series, counts) = group_sums(panel, g, |s| s);
    GroupSeries { start_month, series, counts }
}

/// Mean of `log(1 + sales)` over members observed in each month; months
/// without members are 0.
pub fn group_mean_log_sales(panel: &Panel, g: &GroupAssignment) -> GroupSeries {
    let (start_month, mut series, counts) = group_sums(panel, g, f64::ln_1p);
    for (group, values) in series.iter_mut() {
        for (v, &c) in values.iter_mut().zip(&counts[group]) {
            if c > 0 {
                *v /= c as f64;
            }
        }
    }
    GroupSeries { start_month, series, counts }
}

/// Fourier coefficients of one group's seasonal profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalProfile {
    pub group: usize,
    pub period: u32,
    pub order: usize,
    pub a0: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Inclusive month range the coefficients were fitted on.
    pub fit_window: (i32, i32),
}

impl SeasonalProfile {
    pub fn constant(group: usize, a0: f64) -> Self {
        Self {
            group,
            period: DEFAULT_PERIOD,
            order: 0,
            a0,
            a: vec![],
            b: vec![],
            fit_window: (0, 0),
        }
    }

    /// Profile value at a (possibly fractional) month.
    pub fn eval(&self, t: f64) -> f64 {
        let period = f64::from(self.period);
        let phase = 2.0 * PI * t.rem_euclid(period) / period;
        let mut v = self.a0;
        for (n, (a, b)) in self.a.iter().zip(&self.b).enumerate() {
            let w = (n + 1) as f64 * phase;
            v += a * w.cos() + b * w.sin();
        }
        v
    }
}

/// Design row `[1, cos(w t), sin(w t), ..., cos(order w t), sin(order w t)]`.
pub fn fourier_design_row(t: f64, order: usize, period: u32) -> Vec<f64> {
    let period = f64::from(period);
    let phase = 2.0 * PI * t.rem_euclid(period) / period;
    let mut row = Vec::with_capacity(2 * order + 1);
    row.push(1.0);
    for n in 1..=order {
        let w = n as f64 * phase;
        row.push(w.cos());
        row.push(w.sin());
    }
    row
}

/// Solves the symmetric positive-definite system `a x = b` by Cholesky.
fn cholesky_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if !(d > 0.0) {
            return Err(Error::Numeric("normal equations are not positive definite".into()));
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i][k] * b[k];
        }
        b[i] = s / a[i][i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k][i] * b[k];
        }
        b[i] = s / a[i][i];
    }
    Ok(b)
}

/// Least-squares Fourier fit of `series`, whose first value sits at month
/// `first_month`.
pub fn fit_fourier(series: &[f64], first_month: i32, order: usize, period: u32) -> Result<SeasonalProfile> {
    let points: Vec<(i32, f64)> = series
        .iter()
        .enumerate()
        .map(|(i, &y)| (first_month + i as i32, y))
        .collect();
    fit_fourier_points(&points, order, period)
}

/// Least-squares Fourier fit of `(month, value)` observations, which need
/// not be contiguous. Solved through the normal equations with a `1e-10`
/// ridge.
pub fn fit_fourier_points(points: &[(i32, f64)], order: usize, period: u32) -> Result<SeasonalProfile> {
    if period == 0 {
        return Err(Error::Argument("period must be positive".into()));
    }
    if points.len() < 2 * order + 1 {
        return Err(Error::Argument(format!(
            "series of length {} is too short for order {order} (needs {})",
            points.len(),
            2 * order + 1
        )));
    }
    if points.iter().any(|(_, v)| !v.is_finite()) {
        return Err(Error::Argument("series contains non-finite values".into()));
    }
    let p = 2 * order + 1;
    let mut gram = vec![vec![0.0; p]; p];
    let mut rhs = vec![0.0; p];
    for &(t, y) in points {
        let row = fourier_design_row(f64::from(t), order, period);
        for r in 0..p {
            rhs[r] += row[r] * y;
            for c in 0..p {
                gram[r][c] += row[r] * row[c];
            }
        }
    }
    for (r, g) in gram.iter_mut().enumerate() {
        g[r] += FOURIER_RIDGE;
    }
    let coef = cholesky_solve(gram, rhs)?;
    let first = points.iter().map(|p| p.0).min().unwrap_or(0);
    let last = points.iter().map(|p| p.0).max().unwrap_or(-1);
    Ok(SeasonalProfile {
        group: 0,
        period,
        order,
        a0: coef[0],
        a: (0..order).map(|n| coef[1 + 2 * n]).collect(),
        b: (0..order).map(|n| coef[2 + 2 * n]).collect(),
        fit_window: (first, last),
    })
}

pub fn eval_profile(p: &SeasonalProfile, t: i32) -> f64 {
    p.eval(f64::from(t))
}

/// The eight seasonal features at month `t`.
///
/// Levels: `v(t+1)`, `v(t+2)`, `v(t-1)`, mean over `t-5..=t+6`.
/// Variations: `v(t+1) - v(t)`, `v(t+1) - v(t-11)`, window max - min,
/// `v(t+6) - v(t-5)`.
pub fn seasonal_features(p: &SeasonalProfile, t: i32) -> [f64; 8] {
    let v = |dt: i32| eval_profile(p, t + dt);
    let window: Vec<f64> = (-5..=6).map(v).collect();
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    let max = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = window.iter().copied().fold(f64::INFINITY, f64::min);
    [
        v(1),
        v(2),
        v(-1),
        mean,
        v(1) - v(0),
        v(1) - v(-11),
        max - min,
        v(6) - v(-5),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vecs(points: &[&[f64]]) -> BTreeMap<RetailerId, Vec<f64>> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| (RetailerId(i as u32), p.to_vec()))
            .collect()
    }

    #[test]
    fn identical_points_single_group() {
        let g = cluster_retailers(&vecs(&[&[1.0, 2.0], &[1.0, 2.0]]), 1, 7).unwrap();
        assert!(g.assignment.values().all(|&c| c == 0));
        assert!(g.used_dims.is_empty());
    }

    #[test]
    fn identical_points_more_groups_than_distinct() {
        let g = cluster_retailers(&vecs(&[&[1.0], &[1.0], &[1.0]]), 2, 7).unwrap();
        assert_eq!(g.assignment.len(), 3);
        assert!(g.assignment.values().all(|&c| c < 2));
    }

    #[test]
    fn two_tight_pairs() {
        let pts = vecs(&[&[0.0, 0.0], &[0.1, 0.1], &[10.0, 10.0], &[10.1, 10.1]]);
        for seed in 0..20 {
            let g = cluster_retailers(&pts, 2, seed).unwrap();
            let a = &g.assignment;
            assert_eq!(a[&RetailerId(0)], a[&RetailerId(1)]);
            assert_eq!(a[&RetailerId(2)], a[&RetailerId(3)]);
            assert_ne!(a[&RetailerId(0)], a[&RetailerId(2)]);
        }
    }

    #[test]
    fn cluster_argument_errors() {
        assert!(cluster_retailers(&BTreeMap::new(), 1, 0).is_err());
        assert!(cluster_retailers(&vecs(&[&[1.0]]), 2, 0).is_err());
        assert!(cluster_retailers(&vecs(&[&[1.0]]), 0, 0).is_err());
        assert!(cluster_retailers(&vecs(&[&[1.0], &[1.0, 2.0]]), 1, 0).is_err());
    }

    #[test]
    fn constant_series_fit() {
        let p = fit_fourier(&[5.0; 12], 0, 2, 12).unwrap();
        assert!((p.a0 - 5.0).abs() < 1e-9);
        assert!(p.a.iter().chain(&p.b).all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn cosine_series_fit() {
        let s: Vec<f64> = (0..24).map(|t| 3.0 * (2.0 * PI * t as f64 / 12.0).cos()).collect();
        let p = fit_fourier(&s, 0, 2, 12).unwrap();
        assert!((p.a[0] - 3.0).abs() < 1e-9);
        assert!(p.a0.abs() < 1e-9 && p.a[1].abs() < 1e-9);
        assert!(p.b.iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn short_series_rejected() {
        assert!(fit_fourier(&[1.0; 8], 0, 4, 12).is_err());
        assert!(fit_fourier(&[1.0; 9], 0, 4, 12).is_ok());
    }

    #[test]
    fn zero_order_profile_is_constant() {
        let p = fit_fourier(&[1.0, 2.0, 3.0], 0, 0, 12).unwrap();
        assert!((p.a0 - 2.0).abs() < 1e-9);
        for t in -30..30 {
            assert_eq!(eval_profile(&p, t), p.a0);
        }
    }

    #[test]
    fn profile_is_periodic() {
        let p = SeasonalProfile {
            group: 0,
            period: 12,
            order: 2,
            a0: 1.0,
            a: vec![0.3, -0.2],
            b: vec![0.7, 0.1],
            fit_window: (0, 11),
        };
        for t in -40..40 {
            assert_eq!(eval_profile(&p, t), eval_profile(&p, t + 12));
        }
    }

    #[test]
    fn constant_profile_features() {
        let f = seasonal_features(&SeasonalProfile::constant(0, 4.5), 3);
        assert_eq!(&f[..4], &[4.5; 4]);
        assert_eq!(&f[4..], &[0.0; 4]);
    }

    #[test]
    fn cosine_year_over_year_is_zero() {
        let p = SeasonalProfile {
            group: 0,
            period: 12,
            order: 1,
            a0: 0.0,
            a: vec![1.0],
            b: vec![0.0],
            fit_window: (0, 11),
        };
        assert_eq!(seasonal_features(&p, 0)[5], 0.0);
    }

    #[test]
    fn aggregation_single_member() {
        use crate::features::PanelRecord;
        let records = (1..=4)
            .map(|m| PanelRecord { retailer: RetailerId(9), month: m, sales: m as f64 * 2.0, basic: vec![] })
            .collect();
        let panel = Panel::new(vec![], records).unwrap();
        let mut g = GroupAssignment::single([RetailerId(9)]);
        g.k = 2;
        g.centroids.push(vec![]);
        let s = aggregate_group_series(&panel, &g);
        assert_eq!(s.start_month, 1);
        assert_eq!(s.series[&0], vec![2.0, 4.0, 6.0, 8.0]);
        assert_eq!(s.series[&1], vec![0.0; 4]);
    }
}
