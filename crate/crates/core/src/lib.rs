//! Claims reserving on run-off triangles with a classical log-Poisson GLM and
//! a hybrid fuzzy least-squares extension.
//!
//! The usual pipeline is: parse a [`RunOffTriangle`], fit the classical model,
//! fuzzify the observations with its adjusted Pearson residuals, fit the
//! hybrid model and sum the fuzzy predictions of the unobserved cells.

pub mod classical;
pub mod error;
pub mod fuzzy;
pub mod hybrid;
pub mod linalg;
pub mod report;
pub mod triangle;

pub use classical::{
    classical_r_squared, classical_reserve, dispersion_test, fit, fit_least_squares, fit_mle,
    fit_mle_with, residuals, ClassicalFit, DispersionTest, Estimator, IrlsOptions,
    RSquaredDefinition, ResidualSet,
};
pub use error::{ErrorCategory, ReserveError, Result};
pub use fuzzy::{
    expected_value, h_level, membership, sum_tfn, HLevelInterval, SpreadTfn, TriangularFuzzyNumber,
};
pub use hybrid::{
    fit_hybrid, fit_log_channels, fuzzify, goodness_of_fit, orthogonality_residuals, predict_fuzzy,
    total_reserve, ConvergenceOptions, FuzzyPrediction, FuzzyReserve, FuzzyTriangle, GoodnessOfFit,
    HybridFit, HybridParams, LogChannels, PredictedCell,
};
pub use report::{
    build_report, run_hybrid, Command, HybridRun, Metadata, OutputFormat, Report, RunConfig,
    Verdict,
};
pub use triangle::{
    build_design_matrix, cell_order, coefficient_labels, parse_triangle, CellIndex, DesignMatrix,
    RunOffTriangle,
};
