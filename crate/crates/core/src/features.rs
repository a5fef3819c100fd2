//! Panel data and supervised example assembly.
//!
//! A row pairs the features of retailer `i` known at month `t` with the
//! sales at `t + 1`. Features come in three blocks: the basic features as
//! observed at `t`, high-level features (level, velocity, acceleration and a
//! trailing mean of every signal), and the eight seasonal features of the
//! retailer's group profile.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::seasonality::{self, GroupAssignment, SeasonalProfile, SEASONAL_FEATURE_NAMES};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct RetailerId(pub u32);

impl fmt::Display for RetailerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One retailer-month observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRecord {
    pub retailer: RetailerId,
    pub month: i32,
    pub sales: f64,
    pub basic: Vec<f64>,
}

/// A collection of retailer-month records sharing one basic-feature layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    pub basic_names: Vec<String>,
    pub records: Vec<PanelRecord>,
}

pub type RetailerHistory<'a> = BTreeMap<i32, &'a PanelRecord>;

impl Panel {
    pub fn new(basic_names: Vec<String>, records: Vec<PanelRecord>) -> Result<Self> {
        let panel = Self { basic_names, records };
        panel.validate()?;
        Ok(panel)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.records {
            if !(r.sales >= 0.0) || !r.sales.is_finite() {
                return Err(Error::Data(format!(
                    "retailer {} month {}: sales must be finite and >= 0, got {}",
                    r.retailer, r.month, r.sales
                )));
            }
            if r.basic.len() != self.basic_names.len() {
                return Err(Error::Data(format!(
                    "retailer {} month {}: expected {} basic features, got {}",
                    r.retailer,
                    r.month,
                    self.basic_names.len(),
                    r.basic.len()
                )));
            }
            if let Some(v) = r.basic.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "retailer {} month {}: non-finite basic feature {v}",
                    r.retailer, r.month
                )));
            }
            if !seen.insert((r.retailer, r.month)) {
                return Err(Error::Data(format!(
                    "duplicate record for retailer {} month {}",
                    r.retailer, r.month
                )));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Inclusive `(first, last)` month, `None` for an empty panel.
    pub fn month_range(&self) -> Option<(i32, i32)> {
        let first = self.records.iter().map(|r| r.month).min()?;
        let last = self.records.iter().map(|r| r.month).max()?;
        Some((first, last))
    }

    /// Records grouped per retailer and indexed by month.
    pub fn by_retailer(&self) -> BTreeMap<RetailerId, RetailerHistory<'_>> {
        let mut out: BTreeMap<RetailerId, RetailerHistory<'_>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.retailer).or_default().insert(r.month, r);
        }
        out
    }

    pub fn retailers(&self) -> Vec<RetailerId> {
        self.by_retailer().into_keys().collect()
    }
}

/// `log(1 + y)`.
pub fn log_transform(y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("sales must be >= 0, got {y}")));
    }
    Ok(y.ln_1p())
}

/// `max(0, exp(z) - 1)`.
pub fn inverse_transform(z: f64) -> f64 {
    z.exp_m1().max(0.0)
}

/// Drops retailer-months whose sales reach `cap`.
pub fn filter_cap(panel: &Panel, cap: f64) -> Panel {
    Panel {
        basic_names: panel.basic_names.clone(),
        records: panel.records.iter().filter(|r| r.sales < cap).cloned().collect(),
    }
}

/// Level, velocity, acceleration and trailing 3-month mean of one signal,
/// given its values at `t`, `t-1` and `t-2`. Missing lags contribute 0.
pub fn signal_features(now: f64, lag1: Option<f64>, lag2: Option<f64>) -> [f64; 4] {
    let velocity = lag1.map_or(0.0, |p| now - p);
    let acceleration = match (lag1, lag2) {
        (Some(p1), Some(p2)) => (now - p1) - (p1 - p2),
        _ => 0.0,
    };
    let present: Vec<f64> = [Some(now), lag1, lag2].into_iter().flatten().collect();
    let mean3 = present.iter().sum::<f64>() / present.len() as f64;
    [now, velocity, acceleration, mean3]
}

const SIGNAL_SUFFIXES: [&str; 4] = ["level", "vel", "acc", "mean3"];

/// Names of the high-level block for the given basic features.
pub fn high_level_names(basic_names: &[String]) -> Vec<String> {
    let mut names = Vec::with_capacity(4 * (basic_names.len() + 1) + 2);
    for signal in std::iter::once("sales").chain(basic_names.iter().map(String::as_str)) {
        for suffix in SIGNAL_SUFFIXES {
            names.push(format!("{signal}_{suffix}"));
        }
    }
    names.push("has_lag1".into());
    names.push("has_lag2".into());
    names
}

/// High-level features of one retailer at month `t`, computed from months
/// `t-2..=t` of its history only.
///
/// Layout: for sales and then each basic feature, `[level, velocity,
/// acceleration, mean3]`; then two presence flags for the `t-1` and `t-2`
/// records. With `log_sales`, the sales signal is `log(1 + sales)`.
pub fn high_level_features(history: &RetailerHistory<'_>, t: i32, log_sales: bool) -> Result<Vec<f64>> {
    let now = history.get(&t).ok_or_else(|| {
        Error::Data(format!("no record at month {t} for high-level features"))
    })?;
    let lag1 = history.get(&(t - 1)).copied();
    let lag2 = history.get(&(t - 2)).copied();
    let sales = |r: &PanelRecord| if log_sales { r.sales.ln_1p() } else { r.sales };

    let n_basic = now.basic.len();
    let mut out = Vec::with_capacity(4 * (n_basic + 1) + 2);
    out.extend(signal_features(sales(now), lag1.map(sales), lag2.map(sales)));
    for j in 0..n_basic {
        out.extend(signal_features(
            now.basic[j],
            lag1.map(|r| r.basic[j]),
            lag2.map(|r| r.basic[j]),
        ));
    }
    out.push(if lag1.is_some() { 1.0 } else { 0.0 });
    out.push(if lag2.is_some() { 1.0 } else { 0.0 });
    Ok(out)
}

/// Contiguous range of columns belonging to one feature family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

pub const BLOCK_BASIC: &str = "basic";
pub const BLOCK_HIGH_LEVEL: &str = "high_level";
pub const BLOCK_SEASONAL: &str = "seasonal";

/// Ordered feature names with block boundaries and target-transform metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub names: Vec<String>,
    pub blocks: Vec<Block>,
    pub target_transform: String,
    pub log_sales_features: bool,
}

impl FeatureSchema {
    pub fn new(basic_names: &[String], log_sales_features: bool) -> Self {
        let high = high_level_names(basic_names);
        let mut names: Vec<String> = basic_names.to_vec();
        let basic_end = names.len();
        names.extend(high);
        let high_end = names.len();
        names.extend(SEASONAL_FEATURE_NAMES.iter().map(|s| s.to_string()));
        let blocks = vec![
            Block { name: BLOCK_BASIC.into(), start: 0, end: basic_end },
            Block { name: BLOCK_HIGH_LEVEL.into(), start: basic_end, end: high_end },
            Block { name: BLOCK_SEASONAL.into(), start: high_end, end: names.len() },
        ];
        Self {
            names,
            blocks,
            target_transform: "log1p".into(),
            log_sales_features,
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Column indices outside the named blocks, in schema order.
    pub fn columns_excluding(&self, excluded: &[&str]) -> Vec<usize> {
        (0..self.dim())
            .filter(|&c| {
                !self
                    .blocks
                    .iter()
                    .any(|b| excluded.contains(&b.name.as_str()) && (b.start..b.end).contains(&c))
            })
            .collect()
    }

    /// Schema restricted to `columns`; blocks are clipped accordingly.
    pub fn select(&self, columns: &[usize]) -> Self {
        let names = columns.iter().map(|&c| self.names[c].clone()).collect();
        let mut blocks = Vec::new();
        for b in &self.blocks {
            let inside: Vec<usize> = columns
                .iter()
                .enumerate()
                .filter(|(_, &c)| (b.start..b.end).contains(&c))
                .map(|(i, _)| i)
                .collect();
            if let (Some(&s), Some(&e)) = (inside.first(), inside.last()) {
                blocks.push(Block { name: b.name.clone(), start: s, end: e + 1 });
            }
        }
        Self {
            names,
            blocks,
            target_transform: self.target_transform.clone(),
            log_sales_features: self.log_sales_features,
        }
    }

    /// Hex SHA-256 prefix over the ordered names.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for n in &self.names {
            h.update(n.as_bytes());
            h.update([0u8]);
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// One supervised example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub retailer: RetailerId,
    pub month: i32,
    pub x: Vec<f64>,
    pub y_next: f64,
    pub z_next: f64,
}

/// Assembled rows with their schema.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub schema: FeatureSchema,
    pub rows: Vec<FeatureRow>,
}

impl FeatureSet {
    pub fn x(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.x.clone()).collect()
    }

    pub fn z(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.z_next).collect()
    }

    pub fn y(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y_next).collect()
    }

    /// Projection onto `columns` (see [`FeatureSchema::columns_excluding`]).
    pub fn select(&self, columns: &[usize]) -> Self {
        Self {
            schema: self.schema.select(columns),
            rows: self
                .rows
                .iter()
                .map(|r| FeatureRow {
                    x: columns.iter().map(|&c| r.x[c]).collect(),
                    ..r.clone()
                })
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }
}

/// Builds one row per retailer-month `t` whose month `t + 1` is observed.
///
/// Rows are ordered by `(retailer, month)` regardless of record order.
pub fn assemble(
    panel: &Panel,
    profiles: &BTreeMap<usize, SeasonalProfile>,
    assignment: &GroupAssignment,
    log_sales_features: bool,
) -> Result<FeatureSet> {
    let schema = FeatureSchema::new(&panel.basic_names, log_sales_features);
    let mut rows = Vec::new();
    for (retailer, history) in panel.by_retailer() {
        let group = *assignment.assignment.get(&retailer).ok_or_else(|| {
            Error::Data(format!("retailer {retailer} has no group assignment"))
        })?;
        let profile = profiles.get(&group).ok_or_else(|| {
            Error::Data(format!("group {group} (retailer {retailer}) has no seasonal profile"))
        })?;
        for (&t, record) in &history {
            let Some(next) = history.get(&(t + 1)) else {
                continue;
            };
            let mut x = Vec::with_capacity(schema.dim());
            x.extend_from_slice(&record.basic);
            x.extend(high_level_features(&history, t, log_sales_features)?);
            x.extend(seasonality::seasonal_features(profile, t));
            debug_assert_eq!(x.len(), schema.dim());
            rows.push(FeatureRow {
                retailer,
                month: t,
                x,
                y_next: next.sales,
                z_next: log_transform(next.sales)?,
            });
        }
    }
    Ok(FeatureSet { schema, rows })
}

/// Train / validation / test partition by row month.
#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: T,
    pub valid: T,
    pub test: T,
}

/// Which partition a row month falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Valid,
    Test,
}

impl SplitTag {
    pub fn of(month: i32, train_end: i32, valid_end: i32) -> Self {
        if month <= train_end {
            SplitTag::Train
        } else if month <= valid_end {
            SplitTag::Valid
        } else {
            SplitTag::Test
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Valid => "valid",
            SplitTag::Test => "test",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `t <= train_end` trains, `train_end < t <= valid_end` validates, the rest
/// tests. Every partition must be non-empty.
pub fn time_split(set: &FeatureSet, train_end: i32, valid_end: i32) -> Result<Split<FeatureSet>> {
    if train_end >= valid_end {
        return Err(Error::Config(format!(
            "train_end ({train_end}) must precede valid_end ({valid_end})"
        )));
    }
    let mut parts = [Vec::new(), Vec::new(), Vec::new()];
    for r in &set.rows {
        let idx = match SplitTag::of(r.month, train_end, valid_end) {
            SplitTag::Train => 0,
            SplitTag::Valid => 1,
            SplitTag::Test => 2,
        };
        parts[idx].push(r.clone());
    }
    for (rows, tag) in parts.iter().zip(["train", "valid", "test"]) {
        if rows.is_empty() {
            return Err(Error::Config(format!(
                "{tag} partition is empty (train_end={train_end}, valid_end={valid_end})"
            )));
        }
    }
    let [train, valid, test] = parts;
    let wrap = |rows| FeatureSet { schema: set.schema.clone(), rows };
    Ok(Split {
        train: wrap(train),
        valid: wrap(valid),
        test: wrap(test),
    })
}
