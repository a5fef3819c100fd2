//! File formats.
//!
//! CSV artifacts open with a `# seed=<u64> config_hash=<hex>` line; readers
//! skip lines starting with `#`. JSON artifacts carry the same pair in a
//! top-level `meta` object.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluation::{RpReport, SweepResult};
use crate::features::{FeatureRow, FeatureSchema, FeatureSet, Panel, PanelRecord, RetailerId};
use crate::seasonality::{GroupAssignment, SeasonalProfile};
use crate::synthetic::GroundTruth;

/// Provenance stamped on every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub seed: u64,
    pub config_hash: String,
}

impl Meta {
    pub fn new(seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Self { seed, config_hash: config_hash(config)? })
    }

    fn csv_line(&self) -> String {
        format!("# seed={} config_hash={}\n", self.seed, self.config_hash)
    }
}

/// Hex SHA-256 prefix of the compact JSON encoding.
pub fn config_hash(config: &impl Serialize) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(&Sha256::digest(&bytes)[..8]))
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| data_err(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| data_err(path, e))?))
}

fn csv_writer(path: &Path, meta: &Meta) -> Result<csv::Writer<BufWriter<File>>> {
    let mut w = create(path)?;
    w.write_all(meta.csv_line().as_bytes())?;
    Ok(csv::Writer::from_writer(w))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| data_err(path, e))
}

/// Reads the `#` provenance line of a CSV artifact, if present.
pub fn read_csv_meta(path: &Path) -> Result<Option<Meta>> {
    use std::io::BufRead;
    let mut first = String::new();
    BufReader::new(File::open(path).map_err(|e| data_err(path, e))?).read_line(&mut first)?;
    let Some(rest) = first.trim_end().strip_prefix("# ") else {
        return Ok(None);
    };
    let mut seed = None;
    let mut hash = None;
    for kv in rest.split_whitespace() {
        match kv.split_once('=') {
            Some(("seed", v)) => seed = v.parse().ok(),
            Some(("config_hash", v)) => hash = Some(v.to_string()),
            _ => {}
        }
    }
    Ok(seed.zip(hash).map(|(seed, config_hash)| Meta { seed, config_hash }))
}

/// Writes `body` (a struct) with a `meta` field prepended.
pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, body: &T) -> Result<()> {
    let serde_json::Value::Object(fields) = serde_json::to_value(body)? else {
        return Err(Error::Argument("JSON artifact bodies must be objects".into()));
    };
    let mut doc = serde_json::Map::new();
    doc.insert("meta".into(), serde_json::to_value(meta)?);
    doc.extend(fields);
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<(Meta, T)> {
    let r = BufReader::new(File::open(path).map_err(|e| data_err(path, e))?);
    let mut doc: serde_json::Map<String, serde_json::Value> =
        serde_json::from_reader(r).map_err(|e| data_err(path, e))?;
    let meta = doc.remove("meta").ok_or_else(|| data_err(path, "missing 'meta' object"))?;
    let meta = serde_json::from_value(meta).map_err(|e| data_err(path, e))?;
    let body = serde_json::from_value(doc.into()).map_err(|e| data_err(path, e))?;
    Ok((meta, body))
}

fn parse_f64(path: &Path, line: u64, col: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Data(format!("{}: line {line}: column '{col}': not a number: '{s}'", path.display())))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Header `retailer_id,month,sales,<basic feature names...>`.
pub fn write_panel(path: &Path, panel: &Panel, meta: &Meta) -> Result<()> {
    let mut w = csv_writer(path, meta)?;
    let mut header = vec!["retailer_id".to_string(), "month".into(), "sales".into()];
    header.extend(panel.basic_names.iter().cloned());
    w.write_record(&header)?;
    for r in &panel.records {
        let mut row = vec![r.retailer.to_string(), r.month.to_string(), r.sales.to_string()];
        row.extend(r.basic.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_panel(path: &Path) -> Result<Panel> {
    let mut rd = csv_reader(path)?;
    let header = rd.headers().map_err(|e| data_err(path, e))?.clone();
    let expected = ["retailer_id", "month", "sales"];
    if header.len() < 3 || header.iter().take(3).ne(expected) {
        return Err(data_err(path, "header must start with retailer_id,month,sales"));
    }
    let basic_names: Vec<String> = header.iter().skip(3).map(String::from).collect();
    let mut records = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| data_err(path, e))?;
        let line = line_of(&rec);
        let retailer = rec[0]
            .trim()
            .parse()
            .map_err(|_| data_err(path, format!("line {line}: bad retailer_id '{}'", &rec[0])))?;
        let month = rec[1]
            .trim()
            .parse()
            .map_err(|_| data_err(path, format!("line {line}: bad month '{}'", &rec[1])))?;
        let sales = parse_f64(path, line, "sales", &rec[2])?;
        let basic = basic_names
            .iter()
            .zip(rec.iter().skip(3))
            .map(|(name, s)| parse_f64(path, line, name, s))
            .collect::<Result<_>>()?;
        records.push(PanelRecord { retailer: RetailerId(retailer), month, sales, basic });
    }
    Panel::new(basic_names, records).map_err(|e| data_err(path, e))
}

/// Header `retailer_id,group_id`.
pub fn write_groups(path: &Path, g: &GroupAssignment, meta: &Meta) -> Result<()> {
    let mut w = csv_writer(path, meta)?;
    w.write_record(["retailer_id", "group_id"])?;
    for (r, c) in &g.assignment {
        w.write_record([r.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_groups(path: &Path) -> Result<BTreeMap<RetailerId, usize>> {
    let mut rd = csv_reader(path)?;
    let mut out = BTreeMap::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| data_err(path, e))?;
        let line = line_of(&rec);
        let parse = |i: usize| {
            rec.get(i)
                .and_then(|s| s.trim().parse::<u64>().ok())
                .ok_or_else(|| data_err(path, format!("line {line}: expected two integer columns")))
        };
        out.insert(RetailerId(parse(0)? as u32), parse(1)? as usize);
    }
    Ok(out)
}

/// Clustering result and fitted profiles, as written by the `season` stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonArtifact {
    pub assignment: GroupAssignment,
    pub profiles: Vec<SeasonalProfile>,
}

impl SeasonArtifact {
    pub fn profile_map(&self) -> BTreeMap<usize, SeasonalProfile> {
        self.profiles.iter().map(|p| (p.group, p.clone())).collect()
    }
}

/// One row of the profile-versus-actual export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonFitRow {
    pub group_id: usize,
    pub month: i32,
    pub members: usize,
    pub actual: f64,
    pub fitted: f64,
    pub in_fit_window: bool,
}

fn write_rows<T: Serialize>(path: &Path, meta: &Meta, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path, meta)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    csv_reader(path)?
        .deserialize()
        .map(|r| r.map_err(|e| data_err(path, e)))
        .collect()
}

pub fn write_season_fit(path: &Path, rows: &[SeasonFitRow], meta: &Meta) -> Result<()> {
    write_rows(path, meta, rows)
}

/// Sidecar describing a feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaArtifact {
    pub schema: FeatureSchema,
    pub schema_hash: String,
    pub train_end: i32,
    pub valid_end: i32,
}

/// Header `retailer_id,month,<feature names...>,y_next,z_next`.
pub fn write_features(path: &Path, set: &FeatureSet, meta: &Meta) -> Result<()> {
    let mut w = csv_writer(path, meta)?;
    let mut header = vec!["retailer_id".to_string(), "month".into()];
    header.extend(set.schema.names.iter().cloned());
    header.extend(["y_next".to_string(), "z_next".into()]);
    w.write_record(&header)?;
    for r in &set.rows {
        let mut row = vec![r.retailer.to_string(), r.month.to_string()];
        row.extend(r.x.iter().map(f64::to_string));
        row.extend([r.y_next.to_string(), r.z_next.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path, schema: &FeatureSchema) -> Result<FeatureSet> {
    let mut rd = csv_reader(path)?;
    let header = rd.headers().map_err(|e| data_err(path, e))?.clone();
    let d = schema.dim();
    let names_match = header.len() == d + 4
        && header.iter().skip(2).take(d).eq(schema.names.iter().map(String::as_str));
    if !names_match {
        return Err(data_err(path, "columns do not match the schema sidecar"));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| data_err(path, e))?;
        let line = line_of(&rec);
        let retailer = rec[0]
            .trim()
            .parse()
            .map_err(|_| data_err(path, format!("line {line}: bad retailer_id '{}'", &rec[0])))?;
        let month = rec[1]
            .trim()
            .parse()
            .map_err(|_| data_err(path, format!("line {line}: bad month '{}'", &rec[1])))?;
        let x = (0..d)
            .map(|j| parse_f64(path, line, &schema.names[j], &rec[j + 2]))
            .collect::<Result<_>>()?;
        rows.push(FeatureRow {
            retailer: RetailerId(retailer),
            month,
            x,
            y_next: parse_f64(path, line, "y_next", &rec[d + 2])?,
            z_next: parse_f64(path, line, "z_next", &rec[d + 3])?,
        });
    }
    Ok(FeatureSet { schema: schema.clone(), rows })
}

/// One forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub model: String,
    pub retailer_id: u32,
    pub month: i32,
    pub split: String,
    pub y: f64,
    pub yhat: f64,
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow], meta: &Meta) -> Result<()> {
    write_rows(path, meta, rows)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReportRow {
    model: String,
    split: String,
    p: f64,
    value: f64,
}

/// Long format `model,split,p,value`.
pub fn write_reports(path: &Path, reports: &[RpReport], meta: &Meta) -> Result<()> {
    let rows: Vec<ReportRow> = reports
        .iter()
        .flat_map(|r| {
            r.rp.iter().map(|pt| ReportRow {
                model: r.model.clone(),
                split: r.split.clone(),
                p: pt.p,
                value: pt.value,
            })
        })
        .collect();
    write_rows(path, meta, &rows)
}

/// `rho,rp01,rp02,rp03`.
pub fn write_sweep(path: &Path, sweep: &SweepResult, meta: &Meta) -> Result<()> {
    let mut w = csv_writer(path, meta)?;
    w.write_record(["rho", "rp01", "rp02", "rp03"])?;
    for pt in &sweep.points {
        let at = |p| pt.report.at(p).map_or(String::new(), |v| v.to_string());
        w.write_record([pt.rho.to_string(), at(0.1), at(0.2), at(0.3)])?;
    }
    w.flush()?;
    Ok(())
}

/// Truth document; the μ matrix lives in a separate CSV named by `mu_path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthArtifact {
    pub groups: BTreeMap<RetailerId, usize>,
    pub profiles: Vec<SeasonalProfile>,
    pub baselines: BTreeMap<RetailerId, f64>,
    pub mu_path: String,
}

/// Writes `truth.json` and `truth_mu.csv` (`retailer_id,month,mu`) into `dir`.
pub fn write_truth(dir: &Path, truth: &GroundTruth, meta: &Meta) -> Result<()> {
    let mu_name = "truth_mu.csv";
    let mut w = csv_writer(&dir.join(mu_name), meta)?;
    w.write_record(["retailer_id", "month", "mu"])?;
    for (id, row) in truth.groups.keys().zip(&truth.mu) {
        for (j, mu) in row.iter().enumerate() {
            let month = truth.first_month + j as i32;
            w.write_record([id.to_string(), month.to_string(), mu.to_string()])?;
        }
    }
    w.flush()?;
    let doc = TruthArtifact {
        groups: truth.groups.clone(),
        profiles: truth.profiles.clone(),
        baselines: truth.baselines.clone(),
        mu_path: mu_name.into(),
    };
    write_json(&dir.join("truth.json"), meta, &doc)
}
