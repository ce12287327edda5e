//! Fixtures shared by the criterion benches.

use reserving_core::{parse_triangle, RunOffTriangle};

pub const EXAMPLE_CSV: &str = include_str!("../../../data/example_triangle.csv");

pub fn example_triangle() -> RunOffTriangle {
    parse_triangle(EXAMPLE_CSV).expect("bundled example parses")
}

/// Deterministic synthetic triangle of side `k` with a smooth multiplicative
/// shape, used to see how the fits scale.
pub fn synthetic_triangle(k: usize) -> RunOffTriangle {
    let rows = (0..k)
        .map(|i| {
            (0..k - i)
                .map(|j| {
                    let origin = 1.0 + 0.03 * i as f64;
                    let dev = (-(j as f64) * 0.35).exp();
                    let wiggle = 1.0 + 0.05 * ((i * 7 + j * 3) % 5) as f64;
                    1000.0 * origin * dev * wiggle
                })
                .collect()
        })
        .collect();
    RunOffTriangle::new(rows).expect("synthetic payments are positive")
}
