//! Backend-agnostic trained models and the eight model variants.
//!
//! A variant is a backend (boosted trees or network) combined with two
//! switches: whether the seasonal feature block is used and whether the
//! Tweedie loss replaces squared loss. Every variant learns
//! `log(1 + sales)` at `t + 1`; forecasts are mapped back to sales with
//! [`inverse_transform`].

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::{inverse_transform, FeatureSchema, FeatureSet, BLOCK_SEASONAL};
use crate::gbdt::{self, Ensemble, TrainConfig};
use crate::loss::Loss;
use crate::mlp::{self, MlpConfig, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Gbdt,
    Mlp,
}

impl Backend {
    pub const ALL: [Backend; 2] = [Backend::Mlp, Backend::Gbdt];

    pub fn label(&self) -> &'static str {
        match self {
            Backend::Gbdt => "GBDT",
            Backend::Mlp => "NN",
        }
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gbdt" => Ok(Backend::Gbdt),
            "mlp" | "nn" => Ok(Backend::Mlp),
            other => Err(Error::Argument(format!("unknown backend '{other}' (gbdt|mlp)"))),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Gbdt => "gbdt",
            Backend::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Base,
    S,
    T,
    St,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Base, Variant::S, Variant::T, Variant::St];

    pub fn seasonal(&self) -> bool {
        matches!(self, Variant::S | Variant::St)
    }

    pub fn tweedie(&self) -> bool {
        matches!(self, Variant::T | Variant::St)
    }

    pub fn suffix(&self) -> &'static str {
        match self {
            Variant::Base => "",
            Variant::S => "-S",
            Variant::T => "-T",
            Variant::St => "-ST",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Variant::Base),
            "s" => Ok(Variant::S),
            "t" => Ok(Variant::T),
            "st" => Ok(Variant::St),
            other => Err(Error::Argument(format!("unknown variant '{other}' (base|s|t|st)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::S => "s",
            Variant::T => "t",
            Variant::St => "st",
        })
    }
}

/// Display tag such as `GBDT-ST` or `NN`.
pub fn model_tag(backend: Backend, variant: Variant) -> String {
    format!("{}{}", backend.label(), variant.suffix())
}

/// Columns a variant trains on.
pub fn variant_columns(schema: &FeatureSchema, variant: Variant) -> Vec<usize> {
    if variant.seasonal() {
        (0..schema.dim()).collect()
    } else {
        schema.columns_excluding(&[BLOCK_SEASONAL])
    }
}

/// Hyperparameters for both backends plus the Tweedie power of T-variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub gbdt: TrainConfig,
    pub mlp: MlpConfig,
    pub rho: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            gbdt: TrainConfig::default(),
            mlp: MlpConfig::default(),
            rho: 1.3,
        }
    }
}

impl ModelConfig {
    pub fn loss_for(&self, variant: Variant) -> Result<Loss> {
        if variant.tweedie() {
            Loss::tweedie(self.rho)
        } else {
            Ok(Loss::Squared)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum Model {
    Gbdt(Ensemble),
    Mlp(Network),
}

/// A trained model together with the variant and column projection it
/// was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub variant: Variant,
    pub columns: Vec<usize>,
    /// Hash of the full feature schema the columns index into.
    pub source_schema_hash: String,
    pub model: Model,
}

impl TrainedModel {
    pub fn backend(&self) -> Backend {
        match self.model {
            Model::Gbdt(_) => Backend::Gbdt,
            Model::Mlp(_) => Backend::Mlp,
        }
    }

    pub fn tag(&self) -> String {
        model_tag(self.backend(), self.variant)
    }

    /// Predicted mean of `log(1 + sales)` for rows of the full schema.
    pub fn predict_z(&self, set: &FeatureSet) -> Result<Vec<f64>> {
        if set.schema.hash() != self.source_schema_hash {
            return Err(Error::Config(format!(
                "feature schema {} does not match the model's schema {}",
                set.schema.hash(),
                self.source_schema_hash
            )));
        }
        let x: Vec<Vec<f64>> = set
            .rows
            .iter()
            .map(|r| self.columns.iter().map(|&c| r.x[c]).collect())
            .collect();
        match &self.model {
            Model::Gbdt(e) => Ok(gbdt::predict_batch(e, &x)?.into_iter().map(|p| p.mean).collect()),
            Model::Mlp(n) => mlp::predict_batch(n, &x),
        }
    }

    /// Sales forecasts `max(0, exp(z_hat) - 1)`.
    pub fn predict_sales(&self, set: &FeatureSet) -> Result<Vec<f64>> {
        Ok(self.predict_z(set)?.into_iter().map(inverse_transform).collect())
    }
}

/// Trains one variant on `train` with the given seed.
pub fn train_variant(
    train: &FeatureSet,
    backend: Backend,
    variant: Variant,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<TrainedModel> {
    if train.is_empty() {
        return Err(Error::Argument("empty training set".into()));
    }
    let columns = variant_columns(&train.schema, variant);
    let sub = train.select(&columns);
    let x = sub.x();
    let z = sub.z();
    let loss = cfg.loss_for(variant)?;
    let model = match backend {
        Backend::Gbdt => {
            let c = TrainConfig { loss, seed, ..cfg.gbdt.clone() };
            Model::Gbdt(gbdt::train(&x, &z, &c)?.with_schema(&sub.schema)?)
        }
        Backend::Mlp => {
            let c = MlpConfig { loss, seed, ..cfg.mlp.clone() };
            Model::Mlp(mlp::train(&x, &z, &c)?.with_schema(&sub.schema)?)
        }
    };
    Ok(TrainedModel {
        variant,
        columns,
        source_schema_hash: train.schema.hash(),
        model,
    })
}
