//! Variable selection for linear models by iterated partial-correlation
//! screening (the PC-simple algorithm), with a population-exact mode, a
//! brute-force verification oracle, a Gaussian simulation harness, and
//! ROC-style evaluation over replicates.

pub mod error;
pub mod eval;
pub mod io;
pub mod oracle;
pub mod pc;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use eval::{confusion, mse_measures, ols_refit, roc_sweep, Confusion, RocTable, SimConfig};
pub use oracle::{check_partial_faithfulness, verify_corollary1, FaithfulnessReport};
pub use pc::{
    correlation_screening, joint_covariance, pc_simple_population, pc_simple_select, ActiveSet,
    SelectionResult,
};
pub use sim::{build_sigma, draw_coefficients, fixture, simulate_dataset, Dataset, ModelSpec};
pub use stats::{
    alpha_for_consistency, correlation_matrix, fisher_z, partial_correlation,
    partial_correlation_recursive, standard_normal_quantile, test_zero_partial_correlation,
    SufficientStats, TestDecision,
};
