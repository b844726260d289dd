//! Bayesian location-scale regression with spike-and-slab selection on both
//! the mean and the log-variance.
//!
//! ```no_run
//! use locscale_core::{parse_model_formula, DataTable, FitRequest, PriorStrings, RunConfig};
//!
//! let spec = parse_model_formula(r#"y ~ sm(u, k = 20, bs = "rd") | sm(u, k = 20, bs = "rd")"#)?;
//! let data = DataTable::read_csv("m1.csv", &[])?;
//! let request = FitRequest {
//!     spec: &spec,
//!     data: &data,
//!     priors: &PriorStrings::default(),
//!     config: RunConfig::new(10_000, 5_000, 2, 1),
//!     data_path: Some("m1.csv".into()),
//!     categorical: vec![],
//! };
//! let manifest = request.run("store".as_ref())?;
//! println!("{} retained sweeps", manifest.retained);
//! # Ok::<(), locscale_core::Error>(())
//! ```

pub mod basis;
pub mod data;
pub mod error;
pub mod formula;
pub mod linalg;
pub mod predict;
pub mod priors;
pub mod sampler;
pub mod simulate;
pub mod store;
pub mod summarize;

pub use basis::{build_design, eval_basis, place_knots, BasisKind, DesignMatrices, DesignRecipe, KnotSet, Side};
pub use data::{DataTable, Fingerprint};
pub use error::{Error, Result};
pub use formula::{parse_model_formula, parse_prior_string, ModelSpec, PriorSpec, Term, TermKind};
pub use predict::{predict_mean, predict_response, term_grid, CurveSide, GridOptions, PredictionTable, TermGrid};
pub use priors::{PriorConfig, PriorStrings};
pub use sampler::{
    log_marginal_likelihood, run_chain, BlockSizes, ChainState, FitRequest, RunConfig, RunManifest, Sampler,
};
pub use simulate::{simulate, Mechanism, SimData};
pub use store::{chain_summary, read_parameter, ChainSummary, Posterior, Samples};
pub use summarize::{deviances, marginal_inclusion, top_models, ModelTable};

/// Rebuild the training design of a finished run from its data table.
pub fn design_for(manifest: &RunManifest, data: &DataTable) -> Result<DesignMatrices> {
    DesignMatrices::from_recipe(manifest.recipe.clone(), data)
}
