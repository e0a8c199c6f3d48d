//! The 2-2-2 local polytope: deterministic vertices, the CHSH functional, and
//! membership certificates from a max-norm fitting LP over the 16 vertices.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::behavior::{indices, BehaviorTable, Bit};
use crate::error::{Error, Result};
use crate::lhv::{behavior_from_lhv, LhvModel};
use crate::simplex::{Constraint, LinearProgram, Relation};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const VERTEX_COUNT: usize = 16;

/// Outcome tables `a = alice[x]`, `b = bob[y]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    pub alice: [Bit; 2],
    pub bob: [Bit; 2],
}

impl DeterministicStrategy {
    /// Index bits: `alice[0]`, `alice[1]`, `bob[0]`, `bob[1]` from least significant.
    pub fn from_index(k: usize) -> Self {
        let bit = |i: usize| ((k >> i) & 1) as Bit;
        DeterministicStrategy {
            alice: [bit(0), bit(1)],
            bob: [bit(2), bit(3)],
        }
    }

    pub fn index(&self) -> usize {
        self.alice[0] as usize
            | (self.alice[1] as usize) << 1
            | (self.bob[0] as usize) << 2
            | (self.bob[1] as usize) << 3
    }

    pub fn all() -> impl Iterator<Item = DeterministicStrategy> {
        (0..VERTEX_COUNT).map(Self::from_index)
    }

    pub fn model(&self) -> LhvModel {
        LhvModel::deterministic(self.alice, self.bob).expect("bits are 0 or 1")
    }
}

/// The 16 vertex behaviors in strategy-index order.
pub fn enumerate_deterministic_vertices() -> Vec<BehaviorTable> {
    DeterministicStrategy::all()
        .map(|s| behavior_from_lhv(&s.model()).expect("deterministic models are valid"))
        .collect()
}

fn vertices() -> &'static [BehaviorTable] {
    static VERTICES: OnceLock<Vec<BehaviorTable>> = OnceLock::new();
    VERTICES.get_or_init(enumerate_deterministic_vertices)
}

/// `S = E(0,0) + E(0,1) + E(1,0) − E(1,1)`.
pub fn chsh_value(behavior: &BehaviorTable) -> f64 {
    behavior.correlator(0, 0) + behavior.correlator(0, 1) + behavior.correlator(1, 0) - behavior.correlator(1, 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Local,
    Nonlocal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalityCertificate {
    pub verdict: Verdict,
    /// Mixture weights over the vertices, present iff local.
    pub weights: Option<Vec<f64>>,
    /// Smallest achievable max-norm gap between a local mixture and the behavior.
    pub distance: f64,
    pub chsh_value: f64,
    pub tolerance: f64,
}

impl LocalityCertificate {
    pub fn is_local(&self) -> bool {
        self.verdict == Verdict::Local
    }
}

/// Solves `min t` s.t. `|Σ_k w_k V_k − P|_∞ ≤ t`, `w ≥ 0`, `Σ w = 1`.
pub fn local_membership(behavior: &BehaviorTable, tol: f64) -> Result<LocalityCertificate> {
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::validation(format!(
            "membership tolerance must be finite and non-negative, got {tol}"
        )));
    }
    let verts = vertices();
    let target = behavior.to_vec();
    let columns: Vec<Vec<f64>> = verts.iter().map(|v| v.to_vec()).collect();

    let n = VERTEX_COUNT + 1;
    let mut objective = vec![0.0; n];
    objective[VERTEX_COUNT] = 1.0;

    let mut constraints = Vec::with_capacity(2 * target.len() + 1);
    for (i, &p) in target.iter().enumerate() {
        let mut upper: Vec<f64> = columns.iter().map(|c| c[i]).collect();
        let mut lower = upper.clone();
        upper.push(-1.0);
        lower.push(1.0);
        constraints.push(Constraint {
            coeffs: upper,
            relation: Relation::Le,
            rhs: p,
        });
        constraints.push(Constraint {
            coeffs: lower,
            relation: Relation::Ge,
            rhs: p,
        });
    }
    let mut simplex_row = vec![1.0; VERTEX_COUNT];
    simplex_row.push(0.0);
    constraints.push(Constraint {
        coeffs: simplex_row,
        relation: Relation::Eq,
        rhs: 1.0,
    });

    let solution = LinearProgram { objective, constraints }.solve()?;

    let mut weights: Vec<f64> = solution.x[..VERTEX_COUNT].iter().map(|w| w.max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Solver(crate::simplex::LpError::Malformed(
            "LP returned zero total weight".into(),
        )));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    let distance = reconstruction_error(&weights, behavior);

    let verdict = if distance <= tol {
        Verdict::Local
    } else {
        Verdict::Nonlocal
    };
    Ok(LocalityCertificate {
        verdict,
        weights: (verdict == Verdict::Local).then_some(weights),
        distance,
        chsh_value: chsh_value(behavior),
        tolerance: tol,
    })
}

/// Max-norm gap between the vertex mixture and `behavior`.
pub fn reconstruction_error(weights: &[f64], behavior: &BehaviorTable) -> f64 {
    let verts = vertices();
    indices()
        .map(|(a, b, x, y)| {
            let mix: f64 = weights.iter().zip(verts).map(|(w, v)| w * v.get(a, b, x, y)).sum();
            (mix - behavior.get(a, b, x, y)).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lhv::random;
    use crate::quantum::{behavior_from_state, MeasurementSettings, TwoQubitState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn sixteen_distinct_nonsignaling_vertices() {
        let v = enumerate_deterministic_vertices();
        assert_eq!(v.len(), 16);
        let distinct: HashSet<Vec<u64>> = v
            .iter()
            .map(|t| t.to_vec().iter().map(|x| x.to_bits()).collect())
            .collect();
        assert_eq!(distinct.len(), 16);
        for t in &v {
            assert!(t.to_vec().iter().all(|&p| p == 0.0 || p == 1.0));
            t.check_no_signaling(0.0).unwrap();
        }
    }

    #[test]
    fn vertex_chsh_multiset() {
        // Enumerated: eight strategies at +2 and eight at −2.
        let values: Vec<f64> = enumerate_deterministic_vertices().iter().map(chsh_value).collect();
        assert_eq!(values.iter().filter(|&&s| s == 2.0).count(), 8);
        assert_eq!(values.iter().filter(|&&s| s == -2.0).count(), 8);
        assert_eq!(values.iter().cloned().fold(f64::MIN, f64::max), 2.0);
    }

    #[test]
    fn strategy_index_roundtrip() {
        for k in 0..16 {
            assert_eq!(DeterministicStrategy::from_index(k).index(), k);
        }
        let s = DeterministicStrategy {
            alice: [1, 0],
            bob: [0, 1],
        };
        let t = &enumerate_deterministic_vertices()[s.index()];
        assert_eq!(t.get(1, 0, 0, 0), 1.0);
        assert_eq!(t.get(0, 1, 1, 1), 1.0);
    }

    #[test]
    fn chsh_reference_values() {
        assert_eq!(chsh_value(&BehaviorTable::uniform()), 0.0);
        // Hand evaluation: E00 = E01 = E10 = 1 and E11 = −1.
        assert_eq!(chsh_value(&BehaviorTable::pr_box()), 4.0);
        let singlet = behavior_from_state(&TwoQubitState::singlet(), &MeasurementSettings::default()).unwrap();
        assert!((chsh_value(&singlet).abs() - 2.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn uniform_is_local() {
        let c = local_membership(&BehaviorTable::uniform(), DEFAULT_TOL).unwrap();
        assert!(c.is_local());
        assert!(c.distance < 1e-12);
        let w = c.weights.unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn vertices_certify_themselves() {
        for (k, v) in enumerate_deterministic_vertices().iter().enumerate() {
            let c = local_membership(v, DEFAULT_TOL).unwrap();
            assert!(c.is_local());
            let w = c.weights.unwrap();
            assert!((w[k] - 1.0).abs() < 1e-9, "vertex {k}: {w:?}");
        }
    }

    #[test]
    fn singlet_and_pr_box_are_nonlocal() {
        let singlet = behavior_from_state(&TwoQubitState::singlet(), &MeasurementSettings::default()).unwrap();
        let c = local_membership(&singlet, DEFAULT_TOL).unwrap();
        assert_eq!(c.verdict, Verdict::Nonlocal);
        assert!(c.weights.is_none());
        // Each cell moves S by at most 1 per unit, and 16 cells contribute.
        assert!(c.distance >= (2.0 * 2f64.sqrt() - 2.0) / 16.0 - 1e-12);
        assert!(chsh_value(&singlet).abs() > 2.0 + DEFAULT_TOL);

        let pr = local_membership(&BehaviorTable::pr_box(), DEFAULT_TOL).unwrap();
        assert_eq!(pr.verdict, Verdict::Nonlocal);
        assert!(pr.distance >= 2.0 / 16.0 - 1e-12);
    }

    #[test]
    fn random_lhv_behaviors_are_certified() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let (na, nb) = (rng.random_range(1..=5), rng.random_range(1..=5));
            let t = behavior_from_lhv(&random::lhv_model(&mut rng, na, nb)).unwrap();
            let c = local_membership(&t, DEFAULT_TOL).unwrap();
            assert!(c.is_local() && c.distance < 1e-9, "{c:?}");
            assert!(reconstruction_error(c.weights.as_ref().unwrap(), &t) < DEFAULT_TOL);
            assert!(chsh_value(&t).abs() <= 2.0 + 1e-9);
        }
    }

    #[test]
    fn werner_threshold_agreement() {
        // CHSH violation implies non-membership across the Werner family.
        for v in [0.5, 0.6, 0.7, 0.71, 0.72, 0.8, 1.0] {
            let t = behavior_from_state(&TwoQubitState::werner(v).unwrap(), &MeasurementSettings::default()).unwrap();
            let c = local_membership(&t, DEFAULT_TOL).unwrap();
            if chsh_value(&t).abs() > 2.0 + 1e-6 {
                assert_eq!(c.verdict, Verdict::Nonlocal, "v = {v}");
            }
            if v <= 0.7 {
                assert!(c.is_local(), "v = {v}: {c:?}");
            }
        }
    }

    #[test]
    fn bad_tolerance_rejected() {
        assert!(local_membership(&BehaviorTable::uniform(), -1.0).is_err());
        assert!(local_membership(&BehaviorTable::uniform(), f64::NAN).is_err());
    }
}
