//! Run-off triangles of incremental payments and the log-Poisson design matrix.
//!
//! Origin years and development years are both indexed from 1. The observed
//! cells of a triangle with `k` origin years are exactly those with
//! `origin + dev <= k + 1`.
//!
//! Vectors over observed cells always follow the canonical *development-major*
//! order returned by [`cell_order`]: every cell of development year 1 by
//! ascending origin, then development year 2, and so on. Design-matrix columns
//! are ordered `(tau, alpha_2..alpha_k, gamma_2..gamma_k)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{ReserveError, Result};

/// Position of a cell in a `k x k` development grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct CellIndex {
    pub origin: usize,
    pub dev: usize,
    pub observed: bool,
}

impl CellIndex {
    pub fn new(origin: usize, dev: usize, k: usize) -> Self {
        Self {
            origin,
            dev,
            observed: origin + dev <= k + 1,
        }
    }
}

/// Incremental payments on the upper-left triangle of a `k x k` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOffTriangle {
    k: usize,
    // rows[i - 1][j - 1] = payment for origin i, development j
    rows: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
}

impl RunOffTriangle {
    /// Builds a triangle from origin rows, where row `i` (1-based) must hold
    /// exactly `k - i + 1` strictly positive payments.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(ReserveError::EmptyInput);
        }
        for (idx, row) in rows.iter().enumerate() {
            let origin = idx + 1;
            let expected = k - idx;
            if row.len() != expected {
                return Err(ReserveError::RaggedShape(format!(
                    "origin {origin} has {} observed cells, expected {expected}",
                    row.len()
                )));
            }
            for (jdx, &value) in row.iter().enumerate() {
                if !value.is_finite() {
                    return Err(ReserveError::NonNumericCell {
                        row: origin,
                        column: jdx + 1,
                        value: value.to_string(),
                    });
                }
                if value <= 0.0 {
                    return Err(ReserveError::NonPositivePayment {
                        origin,
                        dev: jdx + 1,
                        value,
                    });
                }
            }
        }
        Ok(Self {
            k,
            rows,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.k {
            return Err(ReserveError::LabelCount {
                got: labels.len(),
                k: self.k,
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Parses the triangle CSV format. See [`parse_triangle`].
    pub fn from_csv(source: &str) -> Result<Self> {
        parse_triangle(source)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of observed cells, `k(k+1)/2`.
    pub fn n(&self) -> usize {
        self.k * (self.k + 1) / 2
    }

    /// Number of model coefficients, `2k - 1`.
    pub fn p(&self) -> usize {
        2 * self.k - 1
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Payment for `(origin, dev)`, or `None` when the cell is not observed.
    pub fn get(&self, origin: usize, dev: usize) -> Option<f64> {
        if origin == 0 || dev == 0 {
            return None;
        }
        self.rows.get(origin - 1)?.get(dev - 1).copied()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Observed payments in canonical cell order.
    pub fn observed(&self) -> DVector<f64> {
        let cells = cell_order(self);
        DVector::from_iterator(
            cells.len(),
            cells.iter().map(|c| self.rows[c.origin - 1][c.dev - 1]),
        )
    }

    /// Future cells `origin + dev > k + 1`, ordered by origin then development.
    pub fn unobserved_cells(&self) -> Vec<CellIndex> {
        let k = self.k;
        (1..=k)
            .flat_map(|i| (1..=k).map(move |j| CellIndex::new(i, j, k)))
            .filter(|c| !c.observed)
            .collect()
    }
}

fn is_blank(field: &str) -> bool {
    field.trim().is_empty()
}

fn parse_number(field: &str) -> Option<f64> {
    field.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses a triangle from CSV text.
///
/// * An optional header row is recognised when its first field is empty or
///   non-numeric. If the header's first field is empty or starts with
///   `origin` (case-insensitive), the first column of every data row is read
///   as an origin-year label.
/// * Each data row is one origin year. Observed payments come first; trailing
///   empty fields (or a shorter row) mark unobserved cells.
/// * Decimal point only, no thousands separators. Blank lines are ignored.
pub fn parse_triangle(source: &str) -> Result<RunOffTriangle> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source.as_bytes());

    let mut records: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| ReserveError::RaggedShape(e.to_string()))?;
        let fields: Vec<String> = record.iter().map(str::to_owned).collect();
        if fields.iter().all(|f| is_blank(f)) {
            continue;
        }
        records.push(fields);
    }
    if records.is_empty() {
        return Err(ReserveError::EmptyInput);
    }

    let has_header = records[0]
        .first()
        .is_some_and(|f| is_blank(f) || parse_number(f).is_none());
    let label_column = has_header && {
        let first = records[0][0].trim().to_ascii_lowercase();
        first.is_empty() || first.starts_with("origin")
    };
    let data = if has_header {
        &records[1..]
    } else {
        &records[..]
    };
    if data.is_empty() {
        return Err(ReserveError::EmptyInput);
    }

    let k = data.len();
    let value_offset = usize::from(label_column);
    let mut rows = Vec::with_capacity(k);
    let mut labels = Vec::with_capacity(k);
    for (idx, record) in data.iter().enumerate() {
        let origin = idx + 1;
        // CSV row number as seen in the file (1-based, header included)
        let line = origin + usize::from(has_header);
        if label_column {
            labels.push(record.first().cloned().unwrap_or_default());
        }
        let fields = record.get(value_offset..).unwrap_or(&[]);

        let mut values = Vec::new();
        let mut gap_at = None;
        for (jdx, field) in fields.iter().enumerate() {
            if is_blank(field) {
                gap_at.get_or_insert(jdx);
                continue;
            }
            let value = parse_number(field).ok_or_else(|| ReserveError::NonNumericCell {
                row: line,
                column: jdx + 1 + value_offset,
                value: field.clone(),
            })?;
            if let Some(gap) = gap_at {
                return Err(ReserveError::RaggedShape(format!(
                    "origin {origin} has an empty cell at development {} before an observed one",
                    gap + 1
                )));
            }
            values.push(value);
        }
        rows.push(values);
    }

    let triangle = RunOffTriangle::new(rows)?;
    if label_column {
        triangle.with_labels(labels)
    } else {
        Ok(triangle)
    }
}

/// Observed cells in canonical development-major order.
pub fn cell_order(t: &RunOffTriangle) -> Vec<CellIndex> {
    let k = t.k();
    (1..=k)
        .flat_map(|j| (1..=k - j + 1).map(move |i| CellIndex::new(i, j, k)))
        .collect()
}

/// Coefficient names in column order: `tau, alpha_2.., gamma_2..`.
pub fn coefficient_labels(k: usize) -> Vec<String> {
    std::iter::once("tau".to_string())
        .chain((2..=k).map(|i| format!("alpha_{i}")))
        .chain((2..=k).map(|j| format!("gamma_{j}")))
        .collect()
}

/// Indicator design matrix of the log-Poisson model `ln E(Y_ij) = tau + alpha_i + gamma_j`
/// with `alpha_1 = gamma_1 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    k: usize,
    cells: Vec<CellIndex>,
    matrix: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(t: &RunOffTriangle) -> Self {
        let k = t.k();
        let cells = cell_order(t);
        let p = 2 * k - 1;
        let mut matrix = DMatrix::zeros(cells.len(), p);
        for (r, cell) in cells.iter().enumerate() {
            for (c, v) in Self::row(cell.origin, cell.dev, k).iter().enumerate() {
                matrix[(r, c)] = *v;
            }
        }
        Self { k, cells, matrix }
    }

    /// Design row for any cell of the full grid, observed or not.
    pub fn row(origin: usize, dev: usize, k: usize) -> DVector<f64> {
        let mut row = DVector::zeros(2 * k - 1);
        row[0] = 1.0;
        if origin >= 2 {
            row[origin - 1] = 1.0;
        }
        if dev >= 2 {
            row[k - 1 + dev - 1] = 1.0;
        }
        row
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cells(&self) -> &[CellIndex] {
        &self.cells
    }

    pub fn labels(&self) -> Vec<String> {
        coefficient_labels(self.k)
    }
}

pub fn build_design_matrix(t: &RunOffTriangle) -> DesignMatrix {
    DesignMatrix::new(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TABLE: &str =
        "1120,2090,2610,2920,3130\n1030,1920,2370,2710\n1090,2140,2610\n1300,2650\n1420\n";

    #[test]
    fn parses_headerless_rows() {
        let t = parse_triangle(TABLE).unwrap();
        assert_eq!(t.k(), 5);
        assert_eq!(t.n(), 15);
        assert_eq!(t.p(), 9);
        assert_eq!(t.get(1, 1), Some(1120.0));
        assert_eq!(t.get(5, 1), Some(1420.0));
        assert_eq!(t.get(5, 2), None);
        assert!(t.labels().is_none());
    }

    #[test]
    fn header_and_label_column() {
        let src = "origin,0,1,2\n2019,10,20,30\n2020,11,21,\n2021,12,,\n";
        let t = parse_triangle(src).unwrap();
        assert_eq!(t.k(), 3);
        assert_eq!(t.get(2, 2), Some(21.0));
        assert_eq!(t.labels().unwrap(), ["2019", "2020", "2021"]);

        let no_labels = "d0,d1\n5,6\n7\n";
        let t = parse_triangle(no_labels).unwrap();
        assert_eq!(t.k(), 2);
        assert!(t.labels().is_none());
    }

    #[test]
    fn single_cell_triangle() {
        let t = parse_triangle("7.0").unwrap();
        assert_eq!((t.k(), t.n()), (1, 1));
        assert_eq!(t.get(1, 1), Some(7.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(parse_triangle(""), Err(ReserveError::EmptyInput));
        assert_eq!(parse_triangle("\n  \n"), Err(ReserveError::EmptyInput));
        assert!(matches!(
            parse_triangle("1,0\n3\n"),
            Err(ReserveError::NonPositivePayment {
                origin: 1,
                dev: 2,
                ..
            })
        ));
        assert!(matches!(
            parse_triangle("1,x\n3\n"),
            Err(ReserveError::NonNumericCell {
                row: 1,
                column: 2,
                ..
            })
        ));
        assert!(matches!(
            parse_triangle("1,2\n3,4\n"),
            Err(ReserveError::RaggedShape(_))
        ));
        assert!(matches!(
            parse_triangle("1,,2\n3,4\n5\n"),
            Err(ReserveError::RaggedShape(_))
        ));
        assert!(matches!(
            parse_triangle("1,2,3\n3\n5\n"),
            Err(ReserveError::RaggedShape(_))
        ));
    }

    #[test]
    fn cell_order_small_cases() {
        let t2 = parse_triangle("1,2\n3\n").unwrap();
        let order: Vec<_> = cell_order(&t2).iter().map(|c| (c.origin, c.dev)).collect();
        assert_eq!(order, [(1, 1), (2, 1), (1, 2)]);

        let t1 = parse_triangle("4").unwrap();
        assert_eq!(cell_order(&t1), [CellIndex::new(1, 1, 1)]);
    }

    // Independent enumeration: walk the whole grid dev-major, keep i + j <= k + 1.
    fn enumerate_oracle(k: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 1..=k {
            for i in 1..=k {
                if i + j <= k + 1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn constant_triangle(k: usize, c: f64) -> RunOffTriangle {
        RunOffTriangle::new((0..k).map(|i| vec![c; k - i]).collect()).unwrap()
    }

    #[test]
    fn cell_order_matches_enumeration() {
        for k in 1..=8 {
            let t = constant_triangle(k, 1.0);
            let got: Vec<_> = cell_order(&t).iter().map(|c| (c.origin, c.dev)).collect();
            assert_eq!(got, enumerate_oracle(k));
            assert!(cell_order(&t).iter().all(|c| c.observed));
        }
        let t3 = constant_triangle(3, 1.0);
        let first: Vec<_> = cell_order(&t3)[..3]
            .iter()
            .map(|c| (c.origin, c.dev))
            .collect();
        assert_eq!(first, [(1, 1), (2, 1), (3, 1)]);
    }

    #[test]
    fn design_matrix_three_by_three_matches_worked_example() {
        let x = build_design_matrix(&constant_triangle(3, 2.0));
        assert_eq!((x.nrows(), x.ncols()), (6, 5));
        // Columns here are (tau, a2, a3, g2, g3); the worked example uses (tau, a2, g2, a3, g3).
        let perm = [0, 1, 3, 2, 4];
        let mut got: Vec<Vec<u8>> = (0..6)
            .map(|r| perm.iter().map(|&c| x.matrix()[(r, c)] as u8).collect())
            .collect();
        let mut expected = vec![
            vec![1, 0, 0, 0, 0],
            vec![1, 1, 0, 0, 0],
            vec![1, 0, 0, 1, 0],
            vec![1, 0, 1, 0, 0],
            vec![1, 1, 1, 0, 0],
            vec![1, 0, 0, 0, 1],
        ];
        // Row order also matches the example (Y11, Y21, Y31, Y12, Y22, Y13).
        assert_eq!(got, expected);
        got.sort();
        expected.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn design_matrix_k1_and_k5() {
        let x1 = build_design_matrix(&constant_triangle(1, 3.0));
        assert_eq!(x1.matrix(), &DMatrix::from_element(1, 1, 1.0));

        let t = parse_triangle(TABLE).unwrap();
        let x = build_design_matrix(&t);
        assert_eq!((x.nrows(), x.ncols()), (15, 9));
        // brute-force count of observed cells per origin year 2..5
        let counts: Vec<f64> = (2..=5)
            .map(|i| cell_order(&t).iter().filter(|c| c.origin == i).count() as f64)
            .collect();
        let sums: Vec<f64> = (1..=4).map(|c| x.matrix().column(c).sum()).collect();
        assert_eq!(sums, counts);
        assert_eq!(sums, [4.0, 3.0, 2.0, 1.0]);
        assert_eq!(x.matrix().row(0).iter().sum::<f64>(), 1.0);
        assert_eq!(
            x.labels(),
            [
                "tau", "alpha_2", "alpha_3", "alpha_4", "alpha_5", "gamma_2", "gamma_3", "gamma_4",
                "gamma_5"
            ]
        );
    }

    #[test]
    fn unobserved_cells_are_complement() {
        let t = parse_triangle(TABLE).unwrap();
        let future: Vec<_> = t
            .unobserved_cells()
            .iter()
            .map(|c| (c.origin, c.dev))
            .collect();
        assert_eq!(future.len(), 10);
        assert_eq!(future[0], (2, 5));
        assert_eq!(future[9], (5, 5));
        assert!(parse_triangle("3").unwrap().unobserved_cells().is_empty());
    }

    proptest! {
        #[test]
        fn design_rows_expand_to_additive_effects(
            k in 2usize..9,
            effects in proptest::collection::vec(-3.0f64..3.0, 17),
        ) {
            let t = constant_triangle(k, 1.0);
            let x = build_design_matrix(&t);
            prop_assert_eq!(x.nrows(), k * (k + 1) / 2);
            prop_assert_eq!(x.ncols(), 2 * k - 1);
            let beta = DVector::from_iterator(2 * k - 1, effects.iter().copied().take(2 * k - 1));
            let tau = beta[0];
            let alpha = |i: usize| if i >= 2 { beta[i - 1] } else { 0.0 };
            let gamma = |j: usize| if j >= 2 { beta[k - 1 + j - 1] } else { 0.0 };
            let eta = x.matrix() * &beta;
            for (r, cell) in x.cells().iter().enumerate() {
                let expected = tau + alpha(cell.origin) + gamma(cell.dev);
                prop_assert!((eta[r] - expected).abs() < 1e-12);
                let row_sum: f64 = x.matrix().row(r).iter().sum();
                prop_assert!((1.0..=3.0).contains(&row_sum));
            }
            let rank = x.matrix().clone().svd(false, false).rank(1e-10);
            prop_assert_eq!(rank, 2 * k - 1);
        }

        #[test]
        fn parse_then_build_is_deterministic(k in 1usize..7, seed in 1.0f64..1000.0) {
            let src: String = (0..k)
                .map(|i| (0..k - i).map(|j| format!("{}", seed + (i * 7 + j) as f64)).collect::<Vec<_>>().join(",") + "\n")
                .collect();
            let a = build_design_matrix(&parse_triangle(&src).unwrap());
            let b = build_design_matrix(&parse_triangle(&src).unwrap());
            prop_assert_eq!(a, b);
        }
    }
}
