//! Seasonal-gated nowcasting of weekly rates from a corpus of candidate series.
//!
//! Target and candidates are decomposed in logit space into trend, seasonal
//! and irregular factors. Candidates are ranked by how well their trend and
//! irregular track the target's, gated by seasonal agreement, then chosen by
//! cross-validated forward selection for two ridge models whose outputs are
//! recombined with the target's seasonal pattern.

pub mod cli;
pub mod data;
pub mod decompose;
pub mod error;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod rank;
pub mod regress;
pub mod select;
pub mod series;

pub use data::{CandidateSource, Corpus, PlantedCorpus, PlantedSpec};
pub use decompose::{decompose, Decomposition, SeasonalPattern};
pub use error::{Error, Result};
pub use eval::{EvalReport, Selections};
pub use model::{FittedModel, Prediction};
pub use pipeline::{PipelineConfig, PipelineRun};
pub use rank::{Component, RankedList, TargetComponents, TermScore};
pub use regress::RidgeModel;
pub use select::{SelectionResult, StopReason};
pub use series::{LogitSeries, RateSeries};
