//! Monthly retailer sales forecasting.
//!
//! Two mechanisms sit at the centre of this crate:
//!
//! * group seasonality: retailers are clustered, each group's monthly sales
//!   are summarised by a truncated Fourier series, and the fitted profile is
//!   turned into eight extra features ([`seasonality`]);
//! * Tweedie regression on `log(1 + sales)`: the compound Poisson-Gamma
//!   distribution supplies the training loss for both backends
//!   ([`tweedie`], [`gbdt`], [`mlp`]).
//!
//! The rest is the pipeline around them: a synthetic panel with planted
//! ground truth ([`synthetic`]), feature assembly and time splits
//! ([`features`]), the RP@p metric and model comparison harness
//! ([`evaluation`]), and file formats shared with the CLI ([`io`]).

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod gbdt;
pub mod io;
pub mod loss;
pub mod mlp;
pub mod model;
pub mod pipeline;
pub mod seasonality;
pub mod synthetic;
pub mod tweedie;

pub use error::{Error, Result};
pub use features::{FeatureRow, FeatureSchema, Panel, PanelRecord, RetailerId};
pub use loss::Loss;
pub use tweedie::{CompoundParams, TweedieParams};
