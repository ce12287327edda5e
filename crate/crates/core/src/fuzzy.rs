//! Triangular fuzzy numbers.
//!
//! Two encodings are in use and are kept apart by type:
//!
//! * [`TriangularFuzzyNumber`] stores endpoint *values* `(left, center, right)`
//!   with `left <= center <= right`. This is the form carried through the
//!   reserving pipeline, where the fuzzified payments and predicted reserves
//!   live.
//! * [`SpreadTfn`] stores `(left_spread, center, right_spread)` with
//!   non-negative spreads. Membership and h-levels are defined on this form.

use serde::{Deserialize, Serialize};

use crate::error::{ReserveError, Result};

/// Triangular fuzzy number in endpoint encoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangularFuzzyNumber {
    pub left: f64,
    pub center: f64,
    pub right: f64,
}

impl TriangularFuzzyNumber {
    pub fn new(left: f64, center: f64, right: f64) -> Result<Self> {
        let invalid = |reason| ReserveError::InvalidFuzzyNumber {
            left,
            center,
            right,
            reason,
        };
        if !(left.is_finite() && center.is_finite() && right.is_finite()) {
            return Err(invalid("components must be finite"));
        }
        if !(left <= center && center <= right) {
            return Err(invalid("endpoints must satisfy left <= center <= right"));
        }
        Ok(Self {
            left,
            center,
            right,
        })
    }

    pub fn crisp(value: f64) -> Self {
        Self {
            left: value,
            center: value,
            right: value,
        }
    }

    /// Risk-aversion expected value, see [`expected_value`].
    pub fn expected_value(&self, pi: f64) -> Result<f64> {
        expected_value(self, pi)
    }

    /// Spread form `(center - left, center, right - center)`.
    pub fn to_spreads(&self) -> SpreadTfn {
        SpreadTfn {
            left_spread: self.center - self.left,
            center: self.center,
            right_spread: self.right - self.center,
        }
    }
}

/// Triangular fuzzy number in spread encoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadTfn {
    pub left_spread: f64,
    pub center: f64,
    pub right_spread: f64,
}

impl SpreadTfn {
    pub fn new(left_spread: f64, center: f64, right_spread: f64) -> Result<Self> {
        let invalid = |reason| ReserveError::InvalidFuzzyNumber {
            left: left_spread,
            center,
            right: right_spread,
            reason,
        };
        if !(left_spread.is_finite() && center.is_finite() && right_spread.is_finite()) {
            return Err(invalid("components must be finite"));
        }
        if left_spread < 0.0 || right_spread < 0.0 {
            return Err(invalid("spreads must be non-negative"));
        }
        Ok(Self {
            left_spread,
            center,
            right_spread,
        })
    }

    pub fn to_endpoints(&self) -> TriangularFuzzyNumber {
        TriangularFuzzyNumber {
            left: self.center - self.left_spread,
            center: self.center,
            right: self.center + self.right_spread,
        }
    }

    pub fn membership(&self, x: f64) -> Result<f64> {
        membership(self, x)
    }

    pub fn h_level(&self, h: f64) -> Result<HLevelInterval> {
        h_level(self, h)
    }
}

/// Closed interval of points whose membership is at least `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HLevelInterval {
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
}

impl HLevelInterval {
    pub fn contains(&self, other: &HLevelInterval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

/// Piecewise-linear membership. The support is `(c - l, c + r]` and the
/// membership is 1 at the center. A zero spread on the queried side cannot
/// be evaluated off-center and is reported as [`ReserveError::ZeroSpreadQuery`].
pub fn membership(t: &SpreadTfn, x: f64) -> Result<f64> {
    let c = t.center;
    if x == c {
        return Ok(1.0);
    }
    if x < c {
        if t.left_spread == 0.0 {
            return Err(ReserveError::ZeroSpreadQuery { x });
        }
        if x > c - t.left_spread {
            return Ok(1.0 - (c - x) / t.left_spread);
        }
    } else {
        if t.right_spread == 0.0 {
            return Err(ReserveError::ZeroSpreadQuery { x });
        }
        if x <= c + t.right_spread {
            return Ok(1.0 - (x - c) / t.right_spread);
        }
    }
    Ok(0.0)
}

/// `[c - l(1 - h), c + r(1 - h)]`.
pub fn h_level(t: &SpreadTfn, h: f64) -> Result<HLevelInterval> {
    if !(0.0..=1.0).contains(&h) {
        return Err(ReserveError::HOutOfRange(h));
    }
    Ok(HLevelInterval {
        lo: t.center - t.left_spread * (1.0 - h),
        hi: t.center + t.right_spread * (1.0 - h),
        h,
    })
}

/// Component-wise sum of endpoint-encoded numbers.
pub fn sum_tfn(ts: &[TriangularFuzzyNumber]) -> Result<TriangularFuzzyNumber> {
    if ts.is_empty() {
        return Err(ReserveError::EmptySequence);
    }
    Ok(ts.iter().fold(TriangularFuzzyNumber::crisp(0.0), |acc, t| {
        TriangularFuzzyNumber {
            left: acc.left + t.left,
            center: acc.center + t.center,
            right: acc.right + t.right,
        }
    }))
}

/// Expected value with risk-aversion parameter `pi` in `[0, 1]`:
///
/// `(1 - pi) (c - l) / 2 + pi (c + r) / 2`
///
/// This is the closed form of integrating the lower bound
/// `h c - (1 - h) l` and the upper bound `h c + (1 - h) r` over `h` in
/// `[0, 1]`, mixed by `pi`. Note the lower bound enters with `-l`, so with an
/// endpoint-encoded number the `pi = 0` value sits near zero rather than near
/// `l`. The formula is applied as stated.
pub fn expected_value(t: &TriangularFuzzyNumber, pi: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(ReserveError::PiOutOfRange(pi));
    }
    Ok((1.0 - pi) * (t.center - t.left) / 2.0 + pi * (t.center + t.right) / 2.0)
}
