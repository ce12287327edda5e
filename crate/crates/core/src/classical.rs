//! Classical log-Poisson reserving model `Y_ij ~ Poisson(exp(tau + alpha_i + gamma_j))`.
//!
//! Two estimators are provided: Poisson maximum likelihood by iteratively
//! reweighted least squares ([`fit_mle`]), and ordinary least squares on the
//! log payments ([`fit_least_squares`]). The MLE fit is the one that feeds
//! the residual-based fuzzification of the hybrid model.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{ReserveError, Result};
use crate::linalg::{weighted_gram, RankRevealingInverse};
use crate::triangle::{build_design_matrix, DesignMatrix, RunOffTriangle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    #[serde(rename = "mle")]
    Mle,
    LeastSquares,
}

/// Which coefficient of determination to report for a classical fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RSquaredDefinition {
    /// `1 - loglik(fit) / loglik(grand mean)` for the Poisson likelihood
    /// (McFadden). This is the headline index for MLE fits.
    PoissonLikelihoodRatio,
    /// `1 - SSE / SST` on the payments themselves.
    OriginalScaleSse,
    /// `1 - SSE / SST` on log payments. Headline index for least-squares fits.
    LogScaleSse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// Result of a classical fit. Vectors over cells follow canonical cell order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicalFit {
    pub method: Estimator,
    /// `(tau, alpha_2..alpha_k, gamma_2..gamma_k)`.
    pub beta_hat: Vec<f64>,
    pub fitted_means: Vec<f64>,
    /// Wald standard errors, MLE only.
    pub std_errors: Option<Vec<f64>>,
    pub z_stats: Option<Vec<f64>>,
    /// Two-sided normal p-values, MLE only.
    pub p_values: Option<Vec<f64>>,
    pub r_squared: f64,
    pub r_squared_definition: RSquaredDefinition,
    pub converged: bool,
    pub iterations: usize,
}

impl ClassicalFit {
    /// `exp(x' beta)` for any cell of the full grid.
    pub fn predict(&self, origin: usize, dev: usize, k: usize) -> f64 {
        let row = DesignMatrix::row(origin, dev, k);
        row.dot(&DVector::from_column_slice(&self.beta_hat)).exp()
    }
}

fn require_k(t: &RunOffTriangle, min: usize) -> Result<()> {
    if t.k() < min {
        return Err(ReserveError::TriangleTooSmall { k: t.k(), min });
    }
    Ok(())
}

fn require_dof(n: usize, p: usize) -> Result<()> {
    if n <= p {
        return Err(ReserveError::DegreesOfFreedomExhausted { n, p });
    }
    Ok(())
}

fn log_scale_ols(x: &DesignMatrix, y: &DVector<f64>) -> Result<DVector<f64>> {
    let xm = x.matrix();
    let gram = RankRevealingInverse::new(&(xm.transpose() * xm))?;
    Ok(gram.solve(&(xm.transpose() * y.map(f64::ln))))
}

/// Least-squares estimate on the log scale, `beta = (X'X)^-1 X' ln Y`.
pub fn fit_least_squares(t: &RunOffTriangle) -> Result<ClassicalFit> {
    require_k(t, 2)?;
    let x = build_design_matrix(t);
    let y = t.observed();
    let beta = log_scale_ols(&x, &y)?;
    let fitted = (x.matrix() * &beta).map(f64::exp);
    let mut fit = ClassicalFit {
        method: Estimator::LeastSquares,
        beta_hat: beta.as_slice().to_vec(),
        fitted_means: fitted.as_slice().to_vec(),
        std_errors: None,
        z_stats: None,
        p_values: None,
        r_squared: 0.0,
        r_squared_definition: RSquaredDefinition::LogScaleSse,
        converged: true,
        iterations: 1,
    };
    fit.r_squared = classical_r_squared(t, &fit, RSquaredDefinition::LogScaleSse);
    Ok(fit)
}

pub fn fit_mle(t: &RunOffTriangle) -> Result<ClassicalFit> {
    fit_mle_with(t, IrlsOptions::default())
}

/// Poisson maximum likelihood by IRLS, started from the log-scale OLS fit.
pub fn fit_mle_with(t: &RunOffTriangle, opts: IrlsOptions) -> Result<ClassicalFit> {
    require_k(t, 2)?;
    require_dof(t.n(), t.p())?;
    let x = build_design_matrix(t);
    let xm = x.matrix();
    let y = t.observed();

    let mut beta = log_scale_ols(&x, &y)?;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let eta = xm * &beta;
        let mu = eta.map(f64::exp);
        let z = DVector::from_iterator(
            eta.len(),
            eta.iter()
                .zip(y.iter().zip(mu.iter()))
                .map(|(e, (yi, mi))| e + (yi - mi) / mi),
        );
        let info = RankRevealingInverse::new(&weighted_gram(xm, &mu))?;
        let next = info.solve(&(xm.transpose() * z.component_mul(&mu)));
        let step = (&next - &beta).amax();
        beta = next;
        if !step.is_finite() {
            return Err(ReserveError::NotConverged { iterations });
        }
        if step < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(ReserveError::NotConverged { iterations });
    }

    let mu = (xm * &beta).map(f64::exp);
    let cov = RankRevealingInverse::new(&weighted_gram(xm, &mu))?;
    let std_errors: Vec<f64> = cov.inverse().diagonal().iter().map(|v| v.sqrt()).collect();
    let z_stats: Vec<f64> = beta.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    let p_values = z_stats
        .iter()
        .map(|z| erfc(z.abs() / std::f64::consts::SQRT_2))
        .collect();

    let mut fit = ClassicalFit {
        method: Estimator::Mle,
        beta_hat: beta.as_slice().to_vec(),
        fitted_means: mu.as_slice().to_vec(),
        std_errors: Some(std_errors),
        z_stats: Some(z_stats),
        p_values: Some(p_values),
        r_squared: 0.0,
        r_squared_definition: RSquaredDefinition::PoissonLikelihoodRatio,
        converged,
        iterations,
    };
    fit.r_squared = classical_r_squared(t, &fit, RSquaredDefinition::PoissonLikelihoodRatio);
    Ok(fit)
}

pub fn fit(t: &RunOffTriangle, estimator: Estimator) -> Result<ClassicalFit> {
    match estimator {
        Estimator::Mle => fit_mle(t),
        Estimator::LeastSquares => fit_least_squares(t),
    }
}

/// Pearson and degrees-of-freedom adjusted Pearson residuals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSet {
    pub pearson: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub n: usize,
    pub p: usize,
}

impl ResidualSet {
    /// `sqrt(n / (n - p))`.
    pub fn scale(&self) -> f64 {
        (self.n as f64 / (self.n - self.p) as f64).sqrt()
    }
}

pub fn residuals(t: &RunOffTriangle, fit: &ClassicalFit) -> Result<ResidualSet> {
    let (n, p) = (t.n(), t.p());
    require_dof(n, p)?;
    if fit.fitted_means.len() != n {
        return Err(ReserveError::DimensionMismatch(format!(
            "fit has {} fitted means, triangle has {n} cells",
            fit.fitted_means.len()
        )));
    }
    let scale = (n as f64 / (n - p) as f64).sqrt();
    let pearson: Vec<f64> = t
        .observed()
        .iter()
        .zip(&fit.fitted_means)
        .map(|(y, m)| (y - m) / m.sqrt())
        .collect();
    let adjusted = pearson.iter().map(|r| scale * r).collect();
    Ok(ResidualSet {
        pearson,
        adjusted,
        n,
        p,
    })
}

/// One-sided score test of equidispersion against `Var = psi * mean`, `psi > 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionTest {
    pub z_stat: f64,
    pub p_value: f64,
    pub alternative: &'static str,
}

/// Regression-based overdispersion test with a linear alternative: the
/// t-statistic of the intercept in an auxiliary regression of
/// `((Y - mu)^2 - Y) / mu` on a constant.
pub fn dispersion_test(t: &RunOffTriangle, fit: &ClassicalFit) -> Result<DispersionTest> {
    if fit.method != Estimator::Mle {
        return Err(ReserveError::RequiresMle);
    }
    let d: Vec<f64> = t
        .observed()
        .iter()
        .zip(&fit.fitted_means)
        .map(|(y, m)| ((y - m).powi(2) - y) / m)
        .collect();
    let n = d.len() as f64;
    if d.len() < 2 {
        return Err(ReserveError::ZeroVariance);
    }
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        return Err(ReserveError::ZeroVariance);
    }
    let z = n.sqrt() * mean / sd;
    Ok(DispersionTest {
        z_stat: z,
        p_value: 0.5 * erfc(z / std::f64::consts::SQRT_2),
        alternative: "greater",
    })
}

/// Sum of fitted means over the unobserved lower-right triangle.
pub fn classical_reserve(t: &RunOffTriangle, fit: &ClassicalFit) -> f64 {
    t.unobserved_cells()
        .iter()
        .map(|c| fit.predict(c.origin, c.dev, t.k()))
        .sum()
}

fn poisson_loglik(y: &DVector<f64>, mu: impl Iterator<Item = f64>) -> f64 {
    y.iter()
        .zip(mu)
        .map(|(&yi, mi)| yi * mi.ln() - mi - ln_gamma(yi + 1.0))
        .sum()
}

fn sse_r_squared(obs: &[f64], fitted: &[f64]) -> f64 {
    let mean = obs.iter().sum::<f64>() / obs.len() as f64;
    let sse: f64 = obs.iter().zip(fitted).map(|(o, f)| (o - f).powi(2)).sum();
    let sst: f64 = obs.iter().map(|o| (o - mean).powi(2)).sum();
    if sst == 0.0 {
        let scale: f64 = obs.iter().map(|o| o * o).sum();
        return if sse <= 1e-20 * scale.max(1.0) {
            1.0
        } else {
            0.0
        };
    }
    1.0 - sse / sst
}

pub fn classical_r_squared(
    t: &RunOffTriangle,
    fit: &ClassicalFit,
    definition: RSquaredDefinition,
) -> f64 {
    let y = t.observed();
    match definition {
        RSquaredDefinition::OriginalScaleSse => sse_r_squared(y.as_slice(), &fit.fitted_means),
        RSquaredDefinition::LogScaleSse => {
            let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
            let lf: Vec<f64> = fit.fitted_means.iter().map(|v| v.ln()).collect();
            sse_r_squared(&ly, &lf)
        }
        RSquaredDefinition::PoissonLikelihoodRatio => {
            let mean = y.mean();
            let full = poisson_loglik(&y, fit.fitted_means.iter().copied());
            let null = poisson_loglik(&y, std::iter::repeat(mean));
            if null == 0.0 {
                return 1.0;
            }
            1.0 - full / null
        }
    }
}
