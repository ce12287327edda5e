//! Hybrid (fuzzy + random) log-Poisson regression fitted by fuzzy least squares.
//!
//! Each observed payment becomes a triangular fuzzy number `(Y^L, Y^c, Y^R)`.
//! On the log scale the three channels are modelled as
//!
//! ```text
//! ln Y^c = X beta                  + error
//! ln Y^L = (X beta) theta + lambda + error
//! ln Y^R = (X beta) delta + mu     + error
//! ```
//!
//! and `(beta, theta, lambda, delta, mu)` minimise the summed squared errors
//! of all three channels. The minimiser is found by cycling the exact block
//! minimisers of each parameter until the parameters stop moving.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::classical::ResidualSet;
use crate::error::{ReserveError, Result};
use crate::fuzzy::{expected_value, sum_tfn, TriangularFuzzyNumber};
use crate::linalg::RankRevealingInverse;
use crate::triangle::{cell_order, CellIndex, DesignMatrix, RunOffTriangle};

/// Log-scale channel vectors in canonical cell order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogChannels {
    pub left: Vec<f64>,
    pub center: Vec<f64>,
    pub right: Vec<f64>,
}

impl LogChannels {
    pub fn len(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center.is_empty()
    }

    /// Same data with the left and right channels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            left: self.right.clone(),
            center: self.center.clone(),
            right: self.left.clone(),
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.left.len() != n || self.center.len() != n || self.right.len() != n {
            return Err(ReserveError::DimensionMismatch(format!(
                "channels have lengths ({}, {}, {}), design has {n} rows",
                self.left.len(),
                self.center.len(),
                self.right.len()
            )));
        }
        Ok(())
    }
}

/// Fuzzified run-off triangle: one endpoint-encoded number per observed cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzyTriangle {
    cells: Vec<CellIndex>,
    values: Vec<TriangularFuzzyNumber>,
    logs: LogChannels,
}

impl FuzzyTriangle {
    pub fn new(cells: Vec<CellIndex>, values: Vec<TriangularFuzzyNumber>) -> Result<Self> {
        if cells.len() != values.len() {
            return Err(ReserveError::DimensionMismatch(format!(
                "{} cells but {} fuzzy values",
                cells.len(),
                values.len()
            )));
        }
        for (cell, v) in cells.iter().zip(&values) {
            TriangularFuzzyNumber::new(v.left, v.center, v.right)?;
            if v.left <= 0.0 {
                return Err(ReserveError::NonPositiveLeftChannel {
                    origin: cell.origin,
                    dev: cell.dev,
                });
            }
        }
        let logs = LogChannels {
            left: values.iter().map(|v| v.left.ln()).collect(),
            center: values.iter().map(|v| v.center.ln()).collect(),
            right: values.iter().map(|v| v.right.ln()).collect(),
        };
        Ok(Self {
            cells,
            values,
            logs,
        })
    }

    /// Every cell as a crisp number `(Y, Y, Y)`.
    pub fn crisp(t: &RunOffTriangle) -> Self {
        let cells = cell_order(t);
        let values = t
            .observed()
            .iter()
            .map(|&y| TriangularFuzzyNumber::crisp(y))
            .collect();
        Self::new(cells, values).expect("triangle payments are positive")
    }

    pub fn cells(&self) -> &[CellIndex] {
        &self.cells
    }

    pub fn values(&self) -> &[TriangularFuzzyNumber] {
        &self.values
    }

    pub fn log_channels(&self) -> &LogChannels {
        &self.logs
    }
}

/// `Y^c = Y`, `Y^L = Y - |r'|/2`, `Y^R = Y + |r'|/2` with `r'` the adjusted
/// Pearson residual of the cell.
pub fn fuzzify(t: &RunOffTriangle, res: &ResidualSet) -> Result<FuzzyTriangle> {
    let cells = cell_order(t);
    if res.adjusted.len() != cells.len() {
        return Err(ReserveError::DimensionMismatch(format!(
            "{} residuals for {} cells",
            res.adjusted.len(),
            cells.len()
        )));
    }
    let mut values = Vec::with_capacity(cells.len());
    for ((cell, y), r) in cells.iter().zip(t.observed().iter()).zip(&res.adjusted) {
        let half = r.abs() / 2.0;
        if y - half <= 0.0 {
            return Err(ReserveError::NonPositiveLeftChannel {
                origin: cell.origin,
                dev: cell.dev,
            });
        }
        values.push(TriangularFuzzyNumber {
            left: y - half,
            center: *y,
            right: y + half,
        });
    }
    FuzzyTriangle::new(cells, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HybridParams {
    /// `(tau, alpha_2..alpha_k, gamma_2..gamma_k)`.
    pub beta: Vec<f64>,
    pub theta: f64,
    pub lambda: f64,
    pub delta: f64,
    pub mu: f64,
}

impl HybridParams {
    fn max_abs_diff(&self, other: &Self) -> f64 {
        self.beta
            .iter()
            .zip(&other.beta)
            .map(|(a, b)| (a - b).abs())
            .chain([
                (self.theta - other.theta).abs(),
                (self.lambda - other.lambda).abs(),
                (self.delta - other.delta).abs(),
                (self.mu - other.mu).abs(),
            ])
            .fold(0.0, f64::max)
    }

    /// `(x' beta, x' beta theta + lambda, x' beta delta + mu)` for a design row.
    pub fn predict_logs(&self, row: &DVector<f64>) -> (f64, f64, f64) {
        let c = row.iter().zip(&self.beta).map(|(x, b)| x * b).sum::<f64>();
        (c * self.theta + self.lambda, c, c * self.delta + self.mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoodnessOfFit {
    pub fsst: f64,
    pub fssr: f64,
    pub fsse: f64,
    pub r2_fuzzy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HybridFit {
    pub params: HybridParams,
    pub cells: Vec<CellIndex>,
    /// `(Y^L*, Y^c*, Y^R*)` per observed cell, log scale.
    pub fitted_logs: LogChannels,
    #[serde(flatten)]
    pub goodness: GoodnessOfFit,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

fn objective(ch: &LogChannels, f: &DVector<f64>, p: &HybridParams) -> f64 {
    let mut s = 0.0;
    for i in 0..f.len() {
        let fi = f[i];
        s += (ch.center[i] - fi).powi(2);
        s += (ch.left[i] - fi * p.theta - p.lambda).powi(2);
        s += (ch.right[i] - fi * p.delta - p.mu).powi(2);
    }
    s
}

fn fitted_logs(f: &DVector<f64>, p: &HybridParams) -> LogChannels {
    LogChannels {
        left: f.iter().map(|v| v * p.theta + p.lambda).collect(),
        center: f.iter().copied().collect(),
        right: f.iter().map(|v| v * p.delta + p.mu).collect(),
    }
}

pub fn fit_hybrid(
    ft: &FuzzyTriangle,
    x: &DesignMatrix,
    opts: ConvergenceOptions,
) -> Result<HybridFit> {
    let mut fit = fit_log_channels(ft.log_channels(), x.matrix(), opts)?;
    fit.cells = ft.cells().to_vec();
    Ok(fit)
}

/// Fuzzy least squares on raw log channels against an arbitrary full-rank
/// design. Parameters start at `beta = OLS(center)`, `theta = delta = 1`,
/// `lambda = mu = 0` and are updated in the order beta, theta, lambda, delta,
/// mu. Hitting `max_iter` returns the last iterate with `converged = false`.
pub fn fit_log_channels(
    ch: &LogChannels,
    x: &DMatrix<f64>,
    opts: ConvergenceOptions,
) -> Result<HybridFit> {
    let (n, p) = (x.nrows(), x.ncols());
    ch.check_len(n)?;
    if n < p {
        return Err(ReserveError::DegreesOfFreedomExhausted { n, p });
    }
    let xt = x.transpose();
    let gram_inv = RankRevealingInverse::new(&(&xt * x))?;

    let center = DVector::from_column_slice(&ch.center);
    let left = DVector::from_column_slice(&ch.left);
    let right = DVector::from_column_slice(&ch.right);
    let xt_c = &xt * &center;
    let xt_l = &xt * &left;
    let xt_r = &xt * &right;
    let xt_1 = &xt * DVector::from_element(n, 1.0);
    let sum_l = left.sum();
    let sum_r = right.sum();
    let nf = n as f64;
    let guard = 1e-12 * center.norm_squared();

    let mut params = HybridParams {
        beta: gram_inv.solve(&xt_c).as_slice().to_vec(),
        theta: 1.0,
        lambda: 0.0,
        delta: 1.0,
        mu: 0.0,
    };
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut f = x * DVector::from_column_slice(&params.beta);

    while iterations < opts.max_iter {
        iterations += 1;
        let prev = params.clone();
        let HybridParams {
            theta,
            lambda,
            delta,
            mu,
            ..
        } = prev;

        let rhs = &xt_c + (&xt_l - &xt_1 * lambda) * theta + (&xt_r - &xt_1 * mu) * delta;
        let beta = gram_inv.solve(&rhs) / (1.0 + theta * theta + delta * delta);
        f = x * &beta;
        let q = f.norm_squared();
        if q <= guard || q == 0.0 {
            return Err(ReserveError::Singular { rank: 0, dim: 1 });
        }
        let sf = f.sum();

        params.beta = beta.as_slice().to_vec();
        params.theta = (f.dot(&left) - lambda * sf) / q;
        params.lambda = (sum_l - sf * params.theta) / nf;
        params.delta = (f.dot(&right) - mu * sf) / q;
        params.mu = (sum_r - sf * params.delta) / nf;

        trace.push(objective(ch, &f, &params));
        let change = params.max_abs_diff(&prev);
        if !change.is_finite() {
            return Err(ReserveError::NotConverged { iterations });
        }
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    let fitted = fitted_logs(&f, &params);
    let goodness = goodness_of_channels(ch, &fitted)?;
    Ok(HybridFit {
        params,
        cells: Vec::new(),
        fitted_logs: fitted,
        goodness,
        iterations,
        converged,
        objective_trace: trace,
    })
}

fn centered_ss(obs: &[f64], fitted: &[f64], mean: f64) -> (f64, f64, f64) {
    let mut tot = 0.0;
    let mut reg = 0.0;
    let mut err = 0.0;
    for (o, f) in obs.iter().zip(fitted) {
        tot += (o - mean).powi(2);
        reg += (f - mean).powi(2);
        err += (o - f).powi(2);
    }
    (tot, reg, err)
}

fn goodness_of_channels(obs: &LogChannels, fitted: &LogChannels) -> Result<GoodnessOfFit> {
    let n = obs.len() as f64;
    let mut fsst = 0.0;
    let mut fssr = 0.0;
    let mut fsse = 0.0;
    for (o, f) in [
        (&obs.center, &fitted.center),
        (&obs.left, &fitted.left),
        (&obs.right, &fitted.right),
    ] {
        let mean = o.iter().sum::<f64>() / n;
        let (t, r, e) = centered_ss(o, f, mean);
        fsst += t;
        fssr += r;
        fsse += e;
    }
    if fsst == 0.0 {
        return Err(ReserveError::DegenerateVariance);
    }
    Ok(GoodnessOfFit {
        fsst,
        fssr,
        fsse,
        r2_fuzzy: 1.0 - fsse / fsst,
    })
}

/// Fuzzy total, regression and error sums of squares against the log-scale
/// channel means of the observations, and `R^2_F = 1 - FSSE / FSST`.
pub fn goodness_of_fit(ft: &FuzzyTriangle, fit: &HybridFit) -> Result<GoodnessOfFit> {
    fit.fitted_logs.check_len(ft.log_channels().len())?;
    goodness_of_channels(ft.log_channels(), &fit.fitted_logs)
}

/// Norm-scaled residuals of the six first-order orthogonality relations,
/// in the order `c*.(c' - c*)`, `1.(c' - c*)`, `1.(L' - L*)`, `1.(R' - R*)`,
/// `(L' - L*).L*`, `(R' - R*).R*`. Each is `|a.b| / (|a| |b|)`, taken as 0
/// when either factor vanishes.
pub fn orthogonality_residuals(obs: &LogChannels, fitted: &LogChannels) -> [f64; 6] {
    let diff = |o: &[f64], f: &[f64]| -> Vec<f64> { o.iter().zip(f).map(|(a, b)| a - b).collect() };
    let ones = vec![1.0; obs.len()];
    let scaled = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot.abs() / (na * nb)
        }
    };
    let ec = diff(&obs.center, &fitted.center);
    let el = diff(&obs.left, &fitted.left);
    let er = diff(&obs.right, &fitted.right);
    [
        scaled(&fitted.center, &ec),
        scaled(&ones, &ec),
        scaled(&ones, &el),
        scaled(&ones, &er),
        scaled(&el, &fitted.left),
        scaled(&er, &fitted.right),
    ]
}

/// Prediction for one future cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictedCell {
    pub origin: usize,
    pub dev: usize,
    /// Ordered fuzzy prediction: `left = min` and `right = max` of the three
    /// back-transformed channels, `center = exp(x' beta)`.
    pub value: TriangularFuzzyNumber,
    /// `exp(x' beta theta + lambda)` before ordering.
    pub left_channel: f64,
    /// `exp(x' beta delta + mu)` before ordering.
    pub right_channel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzyPrediction {
    pub cells: Vec<PredictedCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzyReserve {
    pub cells: Vec<PredictedCell>,
    pub total: TriangularFuzzyNumber,
    pub pi: f64,
    pub crisp_value: f64,
}

/// Fuzzy predictions for every unobserved cell, ordered by origin then
/// development year.
pub fn predict_fuzzy(fit: &HybridFit, t: &RunOffTriangle) -> Result<FuzzyPrediction> {
    let k = t.k();
    if fit.params.beta.len() != 2 * k - 1 {
        return Err(ReserveError::DimensionMismatch(format!(
            "fit has {} coefficients, triangle needs {}",
            fit.params.beta.len(),
            2 * k - 1
        )));
    }
    let future = t.unobserved_cells();
    if future.is_empty() {
        return Err(ReserveError::NothingToPredict);
    }
    let cells = future
        .iter()
        .map(|c| {
            let (l, m, r) = fit
                .params
                .predict_logs(&DesignMatrix::row(c.origin, c.dev, k));
            let (el, em, er) = (l.exp(), m.exp(), r.exp());
            PredictedCell {
                origin: c.origin,
                dev: c.dev,
                value: TriangularFuzzyNumber {
                    left: el.min(er).min(em),
                    center: em,
                    right: el.max(er).max(em),
                },
                left_channel: el,
                right_channel: er,
            }
        })
        .collect();
    Ok(FuzzyPrediction { cells })
}

/// Component-wise total of the predicted cells and its expected value at `pi`.
pub fn total_reserve(pred: &FuzzyPrediction, pi: f64) -> Result<FuzzyReserve> {
    let values: Vec<_> = pred.cells.iter().map(|c| c.value).collect();
    let total = sum_tfn(&values)?;
    let crisp_value = expected_value(&total, pi)?;
    Ok(FuzzyReserve {
        cells: pred.cells.clone(),
        total,
        pi,
        crisp_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{fit_mle, residuals};
    use crate::triangle::{build_design_matrix, parse_triangle};

    fn table() -> RunOffTriangle {
        parse_triangle(
            "1120,2090,2610,2920,3130\n1030,1920,2370,2710\n1090,2140,2610\n1300,2650\n1420\n",
        )
        .unwrap()
    }

    fn pipeline(t: &RunOffTriangle) -> (FuzzyTriangle, HybridFit) {
        let res = residuals(t, &fit_mle(t).unwrap()).unwrap();
        let ft = fuzzify(t, &res).unwrap();
        let fit = fit_hybrid(&ft, &build_design_matrix(t), ConvergenceOptions::default()).unwrap();
        (ft, fit)
    }

    #[test]
    fn fuzzify_examples() {
        let t = RunOffTriangle::new(vec![
            vec![1120.0, 100.0, 50.0],
            vec![80.0, 60.0],
            vec![70.0],
        ])
        .unwrap();
        let res = ResidualSet {
            pearson: vec![0.0; 6],
            adjusted: vec![0.0, 1.0, -3.0, -4.0, 2.0, 0.5],
            n: 6,
            p: 5,
        };
        let ft = fuzzify(&t, &res).unwrap();
        // canonical order: (1,1), (2,1), (3,1), (1,2), (2,2), (1,3)
        assert_eq!(ft.values()[0], TriangularFuzzyNumber::crisp(1120.0));
        assert_eq!(
            ft.values()[3],
            TriangularFuzzyNumber {
                left: 98.0,
                center: 100.0,
                right: 102.0
            }
        );
        assert_eq!(
            ft.values()[2],
            TriangularFuzzyNumber {
                left: 68.5,
                center: 70.0,
                right: 71.5
            }
        );
        assert!((ft.log_channels().left[3] - 98f64.ln()).abs() < 1e-15);

        let bad = ResidualSet {
            adjusted: vec![0.0, 0.0, 0.0, 0.0, 0.0, 200.0],
            ..res
        };
        assert_eq!(
            fuzzify(&t, &bad),
            Err(ReserveError::NonPositiveLeftChannel { origin: 1, dev: 3 })
        );
    }

    #[test]
    fn table_fit_converges_with_decomposition() {
        let (ft, fit) = pipeline(&table());
        assert!(fit.converged, "iterations = {}", fit.iterations);
        let g = goodness_of_fit(&ft, &fit).unwrap();
        assert_eq!(g, fit.goodness);
        assert!((g.fsst - g.fssr - g.fsse).abs() <= 1e-8 * g.fsst);
        assert!((g.r2_fuzzy - 0.9986105).abs() < 1e-4);
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
        assert!(orthogonality_residuals(ft.log_channels(), &fit.fitted_logs)
            .iter()
            .all(|r| *r < 1e-8));
    }

    #[test]
    fn crisp_input_gives_coinciding_side_models() {
        let t = table();
        let ft = FuzzyTriangle::crisp(&t);
        let fit = fit_hybrid(&ft, &build_design_matrix(&t), ConvergenceOptions::default()).unwrap();
        let p = &fit.params;
        assert_eq!(p.theta, p.delta);
        assert_eq!(p.lambda, p.mu);
        assert_eq!(fit.fitted_logs.left, fit.fitted_logs.right);
        let pred = predict_fuzzy(&fit, &t).unwrap();
        assert!(pred.cells.iter().all(|c| c.left_channel == c.right_channel));
        assert!(pred
            .cells
            .iter()
            .all(|c| c.value.left == c.value.right || c.value.left <= c.value.center));
    }

    #[test]
    fn perfect_fit_has_zero_error() {
        let t = table();
        let x = build_design_matrix(&t);
        let beta = DVector::from_vec(vec![6.0, 0.1, -0.2, 0.3, 0.05, 0.7, 0.9, 1.0, 1.1]);
        let f = x.matrix() * beta;
        let ch = LogChannels {
            center: f.iter().copied().collect(),
            left: f.iter().map(|v| v * 0.998 - 0.01).collect(),
            right: f.iter().map(|v| v * 1.001 + 0.02).collect(),
        };
        let fit = fit_log_channels(&ch, x.matrix(), ConvergenceOptions::default()).unwrap();
        assert!(fit.goodness.fsse < 1e-18);
        assert!((fit.goodness.r2_fuzzy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_dimension_errors() {
        let t = RunOffTriangle::new(vec![vec![5.0; 3], vec![5.0; 2], vec![5.0]]).unwrap();
        let ft = FuzzyTriangle::crisp(&t);
        assert_eq!(
            fit_hybrid(&ft, &build_design_matrix(&t), ConvergenceOptions::default()),
            Err(ReserveError::DegenerateVariance)
        );
        let ones = RunOffTriangle::new(vec![vec![1.0; 3], vec![1.0; 2], vec![1.0]]).unwrap();
        assert!(matches!(
            fit_hybrid(
                &FuzzyTriangle::crisp(&ones),
                &build_design_matrix(&ones),
                ConvergenceOptions::default()
            ),
            Err(ReserveError::Singular { .. })
        ));
        let short = LogChannels {
            left: vec![1.0],
            center: vec![1.0],
            right: vec![1.0],
        };
        assert!(matches!(
            fit_log_channels(
                &short,
                build_design_matrix(&table()).matrix(),
                ConvergenceOptions::default()
            ),
            Err(ReserveError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn iteration_cap_returns_unconverged_fit() {
        let t = table();
        let res = residuals(&t, &fit_mle(&t).unwrap()).unwrap();
        let ft = fuzzify(&t, &res).unwrap();
        let opts = ConvergenceOptions {
            tol: 1e-12,
            max_iter: 10,
        };
        let fit = fit_hybrid(&ft, &build_design_matrix(&t), opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 10);
        assert_eq!(fit.objective_trace.len(), 10);
    }

    #[test]
    fn predictions_and_totals() {
        let t = table();
        let (_, fit) = pipeline(&t);
        let pred = predict_fuzzy(&fit, &t).unwrap();
        assert_eq!(pred.cells.len(), 10);
        assert_eq!((pred.cells[0].origin, pred.cells[0].dev), (2, 5));
        for c in &pred.cells {
            assert!(c.value.left <= c.value.center && c.value.center <= c.value.right);
        }
        let reserve = total_reserve(&pred, 1.0).unwrap();
        let expected = (reserve.total.center + reserve.total.right) / 2.0;
        assert!((reserve.crisp_value - expected).abs() < 1e-9);
        let zero = total_reserve(&pred, 0.0).unwrap();
        assert!((zero.crisp_value - (zero.total.center - zero.total.left) / 2.0).abs() < 1e-9);
        assert_eq!(
            total_reserve(&pred, 2.0),
            Err(ReserveError::PiOutOfRange(2.0))
        );

        let single = FuzzyPrediction {
            cells: vec![PredictedCell {
                value: TriangularFuzzyNumber {
                    left: 1.0,
                    center: 2.0,
                    right: 5.0,
                },
                ..pred.cells[0]
            }],
        };
        assert_eq!(total_reserve(&single, 1.0).unwrap().crisp_value, 3.5);

        let one = parse_triangle("7").unwrap();
        let fit1 = HybridFit {
            params: HybridParams {
                beta: vec![7f64.ln()],
                theta: 1.0,
                lambda: 0.0,
                delta: 1.0,
                mu: 0.0,
            },
            ..fit
        };
        assert_eq!(
            predict_fuzzy(&fit1, &one),
            Err(ReserveError::NothingToPredict)
        );
    }
}
