//! Relative precision and model comparison.
//!
//! `RP@p` is the share of rows whose forecast lands within a relative error
//! `p` of the realised sales:
//!
//! ```text
//! RP@p = #{ i : |y_i - y_hat_i| / y_i < p } / N
//! ```
//!
//! Rows with `y_i = 0` have no relative error; they are left out of `N` and
//! counted separately.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::features::{FeatureSet, Split};
use crate::model::{model_tag, train_variant, Backend, ModelConfig, TrainedModel, Variant};

pub const DEFAULT_PS: [f64; 3] = [0.1, 0.2, 0.3];

/// Result of one RP computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpValue {
    pub value: f64,
    pub evaluated: usize,
    pub excluded_zero: usize,
}

/// Fraction of rows with `|y - yhat| / y < p`, over rows with `y > 0`.
pub fn rp_at_p(y: &[f64], yhat: &[f64], p: f64) -> Result<RpValue> {
    if y.len() != yhat.len() {
        return Err(Error::Evaluation(format!(
            "{} actuals but {} forecasts",
            y.len(),
            yhat.len()
        )));
    }
    let mut hits = 0usize;
    let mut evaluated = 0usize;
    for (&a, &f) in y.iter().zip(yhat) {
        if a == 0.0 {
            continue;
        }
        evaluated += 1;
        if (a - f).abs() / a < p {
            hits += 1;
        }
    }
    if evaluated == 0 {
        return Err(Error::Evaluation("no rows with positive sales to evaluate".into()));
    }
    Ok(RpValue {
        value: hits as f64 / evaluated as f64,
        evaluated,
        excluded_zero: y.len() - evaluated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpPoint {
    pub p: f64,
    pub value: f64,
}

/// RP values of one model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpReport {
    pub model: String,
    pub split: String,
    pub n: usize,
    pub excluded_zero: usize,
    pub rp: Vec<RpPoint>,
}

impl RpReport {
    pub fn compute(model: &str, split: &str, y: &[f64], yhat: &[f64], ps: &[f64]) -> Result<Self> {
        let mut rp = Vec::with_capacity(ps.len());
        let mut n = 0;
        let mut excluded_zero = 0;
        for &p in ps {
            let v = rp_at_p(y, yhat, p)?;
            n = v.evaluated;
            excluded_zero = v.excluded_zero;
            rp.push(RpPoint { p, value: v.value });
        }
        Ok(Self { model: model.into(), split: split.into(), n, excluded_zero, rp })
    }

    pub fn at(&self, p: f64) -> Option<f64> {
        self.rp.iter().find(|pt| (pt.p - p).abs() < 1e-12).map(|pt| pt.value)
    }
}

/// `(a - b) / b`.
pub fn relative_improvement(a: f64, b: f64) -> f64 {
    (a - b) / b
}

/// Evaluates `model` on a feature set at the given tolerances.
pub fn evaluate(model: &TrainedModel, split: &str, set: &FeatureSet, ps: &[f64]) -> Result<RpReport> {
    let yhat = model.predict_sales(set)?;
    RpReport::compute(&model.tag(), split, &set.y(), &yhat, ps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub backend: Backend,
    pub variant: Variant,
    pub valid: RpReport,
    pub test: RpReport,
}

/// Every backend-variant cell evaluated on validation and test rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub cells: Vec<ComparisonCell>,
}

impl ComparisonTable {
    pub fn cell(&self, backend: Backend, variant: Variant) -> Option<&ComparisonCell> {
        self.cells.iter().find(|c| c.backend == backend && c.variant == variant)
    }

    pub fn test_rp(&self, backend: Backend, variant: Variant, p: f64) -> Option<f64> {
        self.cell(backend, variant)?.test.at(p)
    }

    /// Element-wise mean over tables with identical cell layouts.
    pub fn average(tables: &[ComparisonTable]) -> Result<ComparisonTable> {
        let first = tables
            .first()
            .ok_or_else(|| Error::Evaluation("no tables to average".into()))?;
        let mut out = first.clone();
        for (i, cell) in out.cells.iter_mut().enumerate() {
            for report in [&mut cell.valid, &mut cell.test] {
                report.n = 0;
                report.excluded_zero = 0;
                report.rp.iter_mut().for_each(|pt| pt.value = 0.0);
            }
            for t in tables {
                let other = t.cells.get(i).filter(|c| c.backend == cell.backend && c.variant == cell.variant);
                let other = other.ok_or_else(|| Error::Evaluation("tables differ in layout".into()))?;
                for (mine, theirs) in [(&mut cell.valid, &other.valid), (&mut cell.test, &other.test)] {
                    mine.n += theirs.n;
                    mine.excluded_zero += theirs.excluded_zero;
                    for (a, b) in mine.rp.iter_mut().zip(&theirs.rp) {
                        a.value += b.value / tables.len() as f64;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Test-split RP table in the layout of one column per model.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<8}", "Model");
        for c in &self.cells {
            let _ = write!(out, " {:>8}", model_tag(c.backend, c.variant));
        }
        out.push('\n');
        let ps: Vec<f64> = self.cells.first().map(|c| c.test.rp.iter().map(|pt| pt.p).collect()).unwrap_or_default();
        for p in ps {
            let _ = write!(out, "{:<8}", format!("RP@{p}"));
            for c in &self.cells {
                let _ = write!(out, " {:>8.4}", c.test.at(p).unwrap_or(f64::NAN));
            }
            out.push('\n');
        }
        out
    }

    /// Relative RP@p improvements of the seasonal and Tweedie mechanisms.
    pub fn improvements(&self, p: f64) -> Vec<(String, String, f64)> {
        let mut out = Vec::new();
        for backend in Backend::ALL {
            let pairs = [
                (Variant::S, Variant::Base),
                (Variant::St, Variant::T),
                (Variant::T, Variant::Base),
                (Variant::St, Variant::S),
                (Variant::St, Variant::Base),
            ];
            for (a, b) in pairs {
                if let (Some(ra), Some(rb)) = (self.test_rp(backend, a, p), self.test_rp(backend, b, p)) {
                    out.push((model_tag(backend, a), model_tag(backend, b), relative_improvement(ra, rb)));
                }
            }
        }
        out
    }
}

/// Trains every variant of each backend on `data.train` and evaluates it on
/// validation and test rows.
pub fn compare_models(
    data: &Split<FeatureSet>,
    backends: &[Backend],
    cfg: &ModelConfig,
    seed: u64,
    ps: &[f64],
) -> Result<ComparisonTable> {
    let hash = data.train.schema.hash();
    if data.valid.schema.hash() != hash || data.test.schema.hash() != hash {
        return Err(Error::Config("train, valid and test schemas differ".into()));
    }
    let mut cells = Vec::new();
    for &backend in backends {
        for variant in Variant::ALL {
            let model = train_variant(&data.train, backend, variant, cfg, seed)?;
            log::info!("trained {}", model.tag());
            cells.push(ComparisonCell {
                backend,
                variant,
                valid: evaluate(&model, "valid", &data.valid, ps)?,
                test: evaluate(&model, "test", &data.test, ps)?,
            });
        }
    }
    Ok(ComparisonTable { cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rho: f64,
    pub report: RpReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Ordered by increasing `rho`.
    pub points: Vec<SweepPoint>,
    pub best_rho: f64,
}

impl SweepResult {
    pub fn curve(&self, p: f64) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|pt| (pt.rho, pt.report.at(p).unwrap_or(f64::NAN)))
            .collect()
    }
}

/// `1.1, 1.2, ..., 1.9`.
pub fn default_rho_grid() -> Vec<f64> {
    (1..=9).map(|i| 1.0 + i as f64 / 10.0).collect()
}

/// Trains one Tweedie model per grid value (seasonal features included) and
/// picks the best validation RP@0.1, breaking ties toward smaller `rho`.
pub fn rho_sweep(
    train: &FeatureSet,
    valid: &FeatureSet,
    grid: &[f64],
    backend: Backend,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Argument("empty rho grid".into()));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    for &rho in &grid {
        crate::tweedie::check_fit_rho(rho)?;
    }
    let points: Vec<SweepPoint> = grid
        .par_iter()
        .map(|&rho| {
            let c = ModelConfig { rho, ..cfg.clone() };
            let model = train_variant(train, backend, Variant::St, &c, seed)?;
            let tag = format!("{}(rho={rho})", model.tag());
            let report = evaluate(&model, "valid", valid, &DEFAULT_PS)?;
            Ok(SweepPoint { rho, report: RpReport { model: tag, ..report } })
        })
        .collect::<Result<_>>()?;
    let mut best = &points[0];
    for pt in &points[1..] {
        if pt.report.at(0.1) > best.report.at(0.1) {
            best = pt;
        }
    }
    Ok(SweepResult { best_rho: best.rho, points })
}

/// Number of interior local minima of a sequence: a unimodal (single-peaked)
/// curve has none.
pub fn unimodality_violations(values: &[f64]) -> usize {
    // Collapse runs of equal values so plateaus count once.
    let mut v: Vec<f64> = Vec::with_capacity(values.len());
    for &x in values {
        if v.last() != Some(&x) {
            v.push(x);
        }
    }
    v.windows(3).filter(|w| w[1] < w[0] && w[1] < w[2]).count()
}
