//! End-to-end pipelines and the serializable report they produce.
//!
//! Reports hold plain data only. Rendering to text or CSV and anything that
//! touches the filesystem lives in the command-line crate.

use serde::{Deserialize, Serialize};

use crate::classical::{
    classical_r_squared, classical_reserve, dispersion_test, fit, fit_mle, residuals, ClassicalFit,
    DispersionTest, Estimator, RSquaredDefinition, ResidualSet,
};
use crate::error::{ErrorCategory, ReserveError, Result};
use crate::fuzzy::TriangularFuzzyNumber;
use crate::hybrid::{
    fit_hybrid, fuzzify, predict_fuzzy, total_reserve, ConvergenceOptions, FuzzyReserve,
    FuzzyTriangle, HybridFit, PredictedCell,
};
use crate::triangle::{build_design_matrix, coefficient_labels, RunOffTriangle};

/// Two indices closer than this are reported as a tie.
pub const TIE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input_path: String,
    pub pi: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub output_format: OutputFormat,
    pub estimator: Estimator,
    pub emit_intermediates: bool,
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input_path: String::new(),
            pi: 1.0,
            tol: 1e-12,
            max_iter: 200_000,
            output_format: OutputFormat::Json,
            estimator: Estimator::Mle,
            emit_intermediates: false,
            strict: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(ReserveError::PiOutOfRange(self.pi));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(ReserveError::InvalidConfig(format!(
                "tolerance must be positive and finite, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(ReserveError::InvalidConfig(
                "max-iter must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn convergence(&self) -> ConvergenceOptions {
        ConvergenceOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    FitClassical,
    FitHybrid,
    Compare,
}

/// Provenance block. Deliberately free of wall-clock time so that identical
/// inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub input_sha256: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub label: String,
    pub estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_stat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RSquaredValues {
    pub poisson_likelihood_ratio: f64,
    pub original_scale_sse: f64,
    pub log_scale_sse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicalSection {
    pub estimator: Estimator,
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub r_squared_definition: RSquaredDefinition,
    /// The same fit scored under every supported definition.
    pub r_squared_all: RSquaredValues,
    pub total_reserve: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl ClassicalSection {
    fn new(t: &RunOffTriangle, f: &ClassicalFit) -> Self {
        let labels = coefficient_labels(t.k());
        let coefficients = labels
            .into_iter()
            .enumerate()
            .map(|(i, label)| Coefficient {
                label,
                estimate: f.beta_hat[i],
                std_error: f.std_errors.as_ref().map(|v| v[i]),
                z_stat: f.z_stats.as_ref().map(|v| v[i]),
                p_value: f.p_values.as_ref().map(|v| v[i]),
            })
            .collect();
        Self {
            estimator: f.method,
            coefficients,
            r_squared: f.r_squared,
            r_squared_definition: f.r_squared_definition,
            r_squared_all: RSquaredValues {
                poisson_likelihood_ratio: classical_r_squared(
                    t,
                    f,
                    RSquaredDefinition::PoissonLikelihoodRatio,
                ),
                original_scale_sse: classical_r_squared(t, f, RSquaredDefinition::OriginalScaleSse),
                log_scale_sse: classical_r_squared(t, f, RSquaredDefinition::LogScaleSse),
            },
            total_reserve: classical_reserve(t, f),
            converged: f.converged,
            iterations: f.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionSection {
    #[serde(flatten)]
    pub test: Option<DispersionTest>,
    /// Why the test could not be evaluated, when it could not.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unavailable: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelledValue {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedRow {
    pub origin: usize,
    pub dev: usize,
    pub log_left: f64,
    pub log_center: f64,
    pub log_right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HybridSection {
    pub beta: Vec<LabelledValue>,
    pub theta: f64,
    pub lambda: f64,
    pub delta: f64,
    pub mu: f64,
    pub r2_fuzzy: f64,
    pub fsst: f64,
    pub fssr: f64,
    pub fsse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: Option<f64>,
    /// Fitted log channels, ordered by origin then development year.
    pub fitted: Vec<FittedRow>,
}

impl HybridSection {
    fn new(k: usize, fit: &HybridFit) -> Self {
        let beta = coefficient_labels(k)
            .into_iter()
            .zip(&fit.params.beta)
            .map(|(label, &value)| LabelledValue { label, value })
            .collect();
        let mut fitted: Vec<FittedRow> = fit
            .cells
            .iter()
            .enumerate()
            .map(|(i, c)| FittedRow {
                origin: c.origin,
                dev: c.dev,
                log_left: fit.fitted_logs.left[i],
                log_center: fit.fitted_logs.center[i],
                log_right: fit.fitted_logs.right[i],
            })
            .collect();
        fitted.sort_by_key(|r| (r.origin, r.dev));
        Self {
            beta,
            theta: fit.params.theta,
            lambda: fit.params.lambda,
            delta: fit.params.delta,
            mu: fit.params.mu,
            r2_fuzzy: fit.goodness.r2_fuzzy,
            fsst: fit.goodness.fsst,
            fssr: fit.goodness.fssr,
            fsse: fit.goodness.fsse,
            iterations: fit.iterations,
            converged: fit.converged,
            final_objective: fit.objective_trace.last().copied(),
            fitted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReserveSection {
    pub cells: Vec<PredictedCell>,
    pub total: TriangularFuzzyNumber,
    pub pi: f64,
    pub crisp_value: f64,
}

impl From<FuzzyReserve> for ReserveSection {
    fn from(r: FuzzyReserve) -> Self {
        Self {
            cells: r.cells,
            total: r.total,
            pi: r.pi,
            crisp_value: r.crisp_value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "hybrid preferred")]
    HybridPreferred,
    #[serde(rename = "classical preferred")]
    ClassicalPreferred,
    #[serde(rename = "tie")]
    Tie,
}

impl Verdict {
    pub fn from_indices(classical: f64, hybrid: f64) -> Self {
        if (hybrid - classical).abs() <= TIE_TOLERANCE {
            Verdict::Tie
        } else if hybrid > classical {
            Verdict::HybridPreferred
        } else {
            Verdict::ClassicalPreferred
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::HybridPreferred => "hybrid preferred",
            Verdict::ClassicalPreferred => "classical preferred",
            Verdict::Tie => "tie",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSection {
    pub classical_r_squared: f64,
    pub classical_r_squared_definition: RSquaredDefinition,
    pub hybrid_r2_fuzzy: f64,
    pub classical_reserve: f64,
    pub hybrid_crisp_reserve: f64,
    pub pi: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzyInputRow {
    pub origin: usize,
    pub dev: usize,
    pub value: TriangularFuzzyNumber,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Intermediates {
    /// Canonical cell order: development-major.
    pub residuals: ResidualSet,
    pub fuzzy_input: Vec<FuzzyInputRow>,
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub metadata: Metadata,
    pub origin_labels: Option<Vec<String>>,
    pub classical: ClassicalSection,
    pub dispersion: DispersionSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hybrid: Option<HybridSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reserves: Option<ReserveSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intermediates: Option<Intermediates>,
}

impl Report {
    /// False only when the hybrid stage ran and hit its iteration cap.
    pub fn converged(&self) -> bool {
        self.hybrid.as_ref().is_none_or(|h| h.converged) && self.classical.converged
    }
}

fn dispersion_section(t: &RunOffTriangle, mle: Option<&ClassicalFit>) -> Result<DispersionSection> {
    let Some(mle) = mle else {
        return Ok(DispersionSection {
            test: None,
            unavailable: Some(ReserveError::RequiresMle.to_string()),
        });
    };
    match dispersion_test(t, mle) {
        Ok(test) => Ok(DispersionSection {
            test: Some(test),
            unavailable: None,
        }),
        Err(e) if e.category() == ErrorCategory::Numerical => Ok(DispersionSection {
            test: None,
            unavailable: Some(e.to_string()),
        }),
        Err(e) => Err(e),
    }
}

/// Everything the hybrid pipeline computes, before it is shaped into a report.
#[derive(Debug, Clone)]
pub struct HybridRun {
    pub mle: ClassicalFit,
    pub residuals: ResidualSet,
    pub fuzzy: FuzzyTriangle,
    pub fit: HybridFit,
    pub reserve: FuzzyReserve,
}

/// MLE fit, fuzzification by adjusted residuals, fuzzy least squares,
/// prediction and total.
pub fn run_hybrid(t: &RunOffTriangle, opts: ConvergenceOptions, pi: f64) -> Result<HybridRun> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(ReserveError::PiOutOfRange(pi));
    }
    let mle = fit_mle(t)?;
    let residuals = residuals(t, &mle)?;
    let fuzzy = fuzzify(t, &residuals)?;
    let fit = fit_hybrid(&fuzzy, &build_design_matrix(t), opts)?;
    let reserve = total_reserve(&predict_fuzzy(&fit, t)?, pi)?;
    Ok(HybridRun {
        mle,
        residuals,
        fuzzy,
        fit,
        reserve,
    })
}

/// Build the report for `command`. `metadata` is echoed verbatim.
pub fn build_report(t: &RunOffTriangle, metadata: Metadata) -> Result<Report> {
    let cfg = &metadata.config;
    cfg.validate()?;
    let command = metadata.command;

    let hybrid_run = match command {
        Command::FitClassical => None,
        Command::FitHybrid | Command::Compare => Some(run_hybrid(t, cfg.convergence(), cfg.pi)?),
    };
    let classical_fit = match (&hybrid_run, cfg.estimator) {
        (Some(run), Estimator::Mle) => run.mle.clone(),
        _ => fit(t, cfg.estimator)?,
    };
    let mle = match (&hybrid_run, cfg.estimator) {
        (Some(run), _) => Some(&run.mle),
        (None, Estimator::Mle) => Some(&classical_fit),
        (None, Estimator::LeastSquares) => None,
    };
    let dispersion = dispersion_section(t, mle)?;
    let classical = ClassicalSection::new(t, &classical_fit);

    let mut report = Report {
        metadata: metadata.clone(),
        origin_labels: t.labels().map(<[String]>::to_vec),
        classical,
        dispersion,
        hybrid: None,
        reserves: None,
        comparison: None,
        intermediates: None,
    };

    if let Some(run) = hybrid_run {
        let hybrid = HybridSection::new(t.k(), &run.fit);
        if command == Command::Compare {
            report.comparison = Some(ComparisonSection {
                classical_r_squared: report.classical.r_squared,
                classical_r_squared_definition: report.classical.r_squared_definition,
                hybrid_r2_fuzzy: hybrid.r2_fuzzy,
                classical_reserve: report.classical.total_reserve,
                hybrid_crisp_reserve: run.reserve.crisp_value,
                pi: run.reserve.pi,
                verdict: Verdict::from_indices(report.classical.r_squared, hybrid.r2_fuzzy),
            });
        }
        if cfg.emit_intermediates {
            report.intermediates = Some(Intermediates {
                fuzzy_input: run
                    .fuzzy
                    .cells()
                    .iter()
                    .zip(run.fuzzy.values())
                    .map(|(c, v)| FuzzyInputRow {
                        origin: c.origin,
                        dev: c.dev,
                        value: *v,
                    })
                    .collect(),
                residuals: run.residuals,
                objective_trace: run.fit.objective_trace.clone(),
            });
        }
        report.hybrid = Some(hybrid);
        report.reserves = Some(run.reserve.into());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzzy::expected_value;
    use crate::triangle::parse_triangle;

    fn table() -> RunOffTriangle {
        parse_triangle(
            "1120,2090,2610,2920,3130\n1030,1920,2370,2710\n1090,2140,2610\n1300,2650\n1420\n",
        )
        .unwrap()
    }

    fn meta(command: Command, cfg: RunConfig) -> Metadata {
        Metadata {
            tool: "reserve".into(),
            version: "test".into(),
            command,
            input_sha256: String::new(),
            config: cfg,
        }
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad_pi = RunConfig {
            pi: 1.5,
            ..Default::default()
        };
        assert_eq!(bad_pi.validate(), Err(ReserveError::PiOutOfRange(1.5)));
        let bad_tol = RunConfig {
            tol: 0.0,
            ..Default::default()
        };
        assert_eq!(
            bad_tol.validate().unwrap_err().category(),
            ErrorCategory::Usage
        );
        let bad_iter = RunConfig {
            max_iter: 0,
            ..Default::default()
        };
        assert!(bad_iter.validate().is_err());
    }

    #[test]
    fn classical_report_has_no_hybrid_parts() {
        let r = build_report(&table(), meta(Command::FitClassical, RunConfig::default())).unwrap();
        assert!(r.hybrid.is_none() && r.reserves.is_none() && r.comparison.is_none());
        assert!((r.classical.coefficients[0].estimate - 6.99639).abs() < 5e-5);
        assert!((r.classical.total_reserve - 33634.89).abs() < 0.05);
        assert!(r.dispersion.test.is_some());

        let ls = RunConfig {
            estimator: Estimator::LeastSquares,
            ..Default::default()
        };
        let r = build_report(&table(), meta(Command::FitClassical, ls)).unwrap();
        assert!(r.dispersion.test.is_none() && r.dispersion.unavailable.is_some());
        assert!(r.classical.coefficients[0].p_value.is_none());
    }

    #[test]
    fn compare_report_on_example() {
        let cfg = RunConfig {
            pi: 0.5,
            emit_intermediates: true,
            ..Default::default()
        };
        let r = build_report(&table(), meta(Command::Compare, cfg)).unwrap();
        let cmp = r.comparison.as_ref().unwrap();
        assert_eq!(cmp.verdict, Verdict::HybridPreferred);
        let reserves = r.reserves.as_ref().unwrap();
        assert_eq!(
            reserves.crisp_value,
            expected_value(&reserves.total, 0.5).unwrap()
        );
        let inter = r.intermediates.as_ref().unwrap();
        assert_eq!(inter.fuzzy_input.len(), 15);
        assert_eq!(
            inter.objective_trace.len(),
            r.hybrid.as_ref().unwrap().iterations
        );
        let fitted = &r.hybrid.as_ref().unwrap().fitted;
        assert_eq!((fitted[0].origin, fitted[0].dev), (1, 1));
        assert_eq!((fitted[5].origin, fitted[5].dev), (2, 1));
    }

    #[test]
    fn json_round_trips_every_real_exactly() {
        let r = build_report(&table(), meta(Command::FitHybrid, RunConfig::default())).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let h = r.hybrid.as_ref().unwrap();
        for (b, j) in h.beta.iter().zip(v["hybrid"]["beta"].as_array().unwrap()) {
            assert_eq!(j["value"].as_f64().unwrap(), b.value);
        }
        assert_eq!(v["hybrid"]["lambda"].as_f64().unwrap(), h.lambda);
        assert_eq!(v["hybrid"]["fsse"].as_f64().unwrap(), h.fsse);
        let res = r.reserves.as_ref().unwrap();
        assert_eq!(
            v["reserves"]["crisp_value"].as_f64().unwrap(),
            res.crisp_value
        );
        assert_eq!(
            v["reserves"]["total"]["left"].as_f64().unwrap(),
            res.total.left
        );
        let c = &r.classical;
        assert_eq!(v["classical"]["r_squared"].as_f64().unwrap(), c.r_squared);
        assert_eq!(
            v["classical"]["coefficients"][8]["p_value"]
                .as_f64()
                .unwrap(),
            c.coefficients[8].p_value.unwrap()
        );
    }

    #[test]
    fn verdict_thresholds() {
        assert_eq!(Verdict::from_indices(0.9, 0.95), Verdict::HybridPreferred);
        assert_eq!(
            Verdict::from_indices(0.95, 0.9),
            Verdict::ClassicalPreferred
        );
        assert_eq!(Verdict::from_indices(1.0, 1.0 - 5e-9), Verdict::Tie);
    }
}
