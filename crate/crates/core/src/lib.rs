//! Local attribution for black-box scalar models.
//!
//! A model is probed on coalition-masked copies of an instance. The resulting
//! coalition value table is shared by OCC-1, exact SHAP, WeightedSHAP,
//! TaylorPODA and the AUP/discrepancy metrics; LIME samples the model directly.

pub mod allocation;
pub mod attribution;
pub mod data;
pub mod dividends;
pub mod error;
pub mod masking;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod reference;
pub mod report;

pub use allocation::{generate_candidates, optimize_xi, CandidateConfig, XiAllocation};
pub use attribution::{Attribution, LimeConfig, Method, WeightFamily};
pub use error::{Error, Result};
pub use masking::{build_table, BackgroundSet, CoalitionKey, CoalitionValueTable, Sigma};
pub use oracle::{load_model, FeatureVector, ModelSpec};

pub const ENGINE_NAME: &str = "taylor-attr";
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
