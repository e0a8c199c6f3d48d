//! The 2-party, 2-setting, 2-outcome conditional probability table `P(a,b|x,y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A setting or outcome label, always 0 or 1.
pub type Bit = u8;

/// Tolerance on Σ_ab P(a,b|x,y) = 1.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Tolerance on marginal independence from the remote setting.
pub const NO_SIGNALING_TOL: f64 = 1e-9;
/// Entries this far outside [0,1] are rounding noise and get clamped.
const ROUNDING_SLACK: f64 = 1e-12;

pub(crate) fn check_bit(name: &str, bit: Bit) -> Result<()> {
    if bit <= 1 {
        Ok(())
    } else {
        Err(Error::validation(format!("{name} must be 0 or 1, got {bit}")))
    }
}

/// All sixteen `(a, b, x, y)` index tuples in lexicographic order.
pub fn indices() -> impl Iterator<Item = (usize, usize, usize, usize)> {
    (0..16).map(|i| ((i >> 3) & 1, (i >> 2) & 1, (i >> 1) & 1, i & 1))
}

/// Conditional probabilities stored as `p[a][b][x][y]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct BehaviorTable {
    p: [[[[f64; 2]; 2]; 2]; 2],
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    p: [[[[f64; 2]; 2]; 2]; 2],
}

impl TryFrom<RawTable> for BehaviorTable {
    type Error = Error;

    fn try_from(raw: RawTable) -> Result<Self> {
        BehaviorTable::new(raw.p)
    }
}

impl From<BehaviorTable> for RawTable {
    fn from(t: BehaviorTable) -> Self {
        RawTable { p: t.p }
    }
}

impl BehaviorTable {
    /// Validates finiteness, range and per-setting normalization. No-signaling is
    /// checked separately since finite-sample estimates violate it by noise.
    pub fn new(mut p: [[[[f64; 2]; 2]; 2]; 2]) -> Result<Self> {
        for (a, b, x, y) in indices() {
            let v = p[a][b][x][y];
            if !v.is_finite() {
                return Err(Error::validation(format!(
                    "behavior entry p[{a}][{b}][{x}][{y}] is not finite ({v})"
                )));
            }
            if !(-ROUNDING_SLACK..=1.0 + ROUNDING_SLACK).contains(&v) {
                return Err(Error::validation(format!(
                    "behavior entry p[{a}][{b}][{x}][{y}] = {v} lies outside [0, 1]"
                )));
            }
            p[a][b][x][y] = v.clamp(0.0, 1.0);
        }
        for x in 0..2 {
            for y in 0..2 {
                let total: f64 = (0..4).map(|k| p[k >> 1][k & 1][x][y]).sum();
                if (total - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::validation(format!(
                        "behavior for settings (x={x}, y={y}) sums to {total}, not 1"
                    )));
                }
            }
        }
        Ok(BehaviorTable { p })
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut p = [[[[0.0; 2]; 2]; 2]; 2];
        for (a, b, x, y) in indices() {
            p[a][b][x][y] = f(a, b, x, y);
        }
        Self::new(p)
    }

    pub fn uniform() -> Self {
        BehaviorTable {
            p: [[[[0.25; 2]; 2]; 2]; 2],
        }
    }

    /// The PR box: `P(a,b|x,y) = 1/2` iff `a ⊕ b = x·y`.
    pub fn pr_box() -> Self {
        Self::from_fn(|a, b, x, y| if (a ^ b) == (x & y) { 0.5 } else { 0.0 }).expect("PR box is normalized")
    }

    pub fn get(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.p[a][b][x][y]
    }

    pub fn raw(&self) -> &[[[[f64; 2]; 2]; 2]; 2] {
        &self.p
    }

    /// Outcome distribution at settings `(x, y)`, ordered `(0,0), (0,1), (1,0), (1,1)`.
    pub fn cell(&self, x: usize, y: usize) -> [f64; 4] {
        [
            self.p[0][0][x][y],
            self.p[0][1][x][y],
            self.p[1][0][x][y],
            self.p[1][1][x][y],
        ]
    }

    /// `E(x,y) = Σ_ab (-1)^(a⊕b) P(a,b|x,y)`.
    pub fn correlator(&self, x: usize, y: usize) -> f64 {
        let [p00, p01, p10, p11] = self.cell(x, y);
        p00 - p01 - p10 + p11
    }

    pub fn alice_marginal(&self, a: usize, x: usize, y: usize) -> f64 {
        self.p[a][0][x][y] + self.p[a][1][x][y]
    }

    pub fn bob_marginal(&self, b: usize, x: usize, y: usize) -> f64 {
        self.p[0][b][x][y] + self.p[1][b][x][y]
    }

    /// Largest dependence of either party's marginal on the other party's setting.
    pub fn signaling_gap(&self) -> f64 {
        let mut gap: f64 = 0.0;
        for o in 0..2 {
            for s in 0..2 {
                gap = gap.max((self.alice_marginal(o, s, 0) - self.alice_marginal(o, s, 1)).abs());
                gap = gap.max((self.bob_marginal(o, 0, s) - self.bob_marginal(o, 1, s)).abs());
            }
        }
        gap
    }

    pub fn check_no_signaling(&self, tol: f64) -> Result<()> {
        let gap = self.signaling_gap();
        if gap <= tol {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "behavior is signaling: marginal gap {gap:.3e} exceeds {tol:.1e}"
            )))
        }
    }

    pub fn max_abs_diff(&self, other: &BehaviorTable) -> f64 {
        indices()
            .map(|(a, b, x, y)| (self.p[a][b][x][y] - other.p[a][b][x][y]).abs())
            .fold(0.0, f64::max)
    }

    /// Entries flattened in [`indices`] order.
    pub fn to_vec(&self) -> Vec<f64> {
        indices().map(|(a, b, x, y)| self.p[a][b][x][y]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_valid_and_nonsignaling() {
        let t = BehaviorTable::uniform();
        assert!(BehaviorTable::new(*t.raw()).is_ok());
        assert_eq!(t.signaling_gap(), 0.0);
        assert_eq!(t.correlator(1, 0), 0.0);
    }

    #[test]
    fn rejects_non_finite_and_out_of_range() {
        let mut p = *BehaviorTable::uniform().raw();
        p[0][0][0][0] = f64::NAN;
        assert!(BehaviorTable::new(p).is_err());
        p[0][0][0][0] = f64::INFINITY;
        assert!(BehaviorTable::new(p).is_err());
        p[0][0][0][0] = -0.25;
        p[1][1][0][0] = 0.75;
        assert!(BehaviorTable::new(p).is_err());
    }

    #[test]
    fn rejects_unnormalized_cell() {
        let mut p = *BehaviorTable::uniform().raw();
        p[1][0][1][1] = 0.3;
        let err = BehaviorTable::new(p).unwrap_err().to_string();
        assert!(err.contains("x=1, y=1"), "{err}");
    }

    #[test]
    fn pr_box_is_nonsignaling_and_extremal() {
        let pr = BehaviorTable::pr_box();
        pr.check_no_signaling(NO_SIGNALING_TOL).unwrap();
        assert_eq!(pr.correlator(0, 0), 1.0);
        assert_eq!(pr.correlator(1, 1), -1.0);
    }

    #[test]
    fn signaling_table_is_flagged() {
        // Alice's outcome copies Bob's setting.
        let t = BehaviorTable::from_fn(|a, b, _x, y| if a == y && b == 0 { 1.0 } else { 0.0 }).unwrap();
        assert!(t.check_no_signaling(1e-9).is_err());
        assert_eq!(t.signaling_gap(), 1.0);
    }

    #[test]
    fn json_parse_validates() {
        let bad =
            r#"{"p":[[[[1.0,1.0],[1.0,1.0]],[[0.0,0.0],[0.0,0.0]]],[[[0.5,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0]]]]}"#;
        assert!(serde_json::from_str::<BehaviorTable>(bad).is_err());
        let good = serde_json::to_string(&BehaviorTable::pr_box()).unwrap();
        assert_eq!(
            serde_json::from_str::<BehaviorTable>(&good).unwrap(),
            BehaviorTable::pr_box()
        );
    }
}
