//! Finite local hidden-variable models.
//!
//! Two model classes are represented:
//!
//! * [`LhvModel`]: response functions `F_x^a(ξ)`, `G_y^b(η)` averaged over a fixed
//!   joint distribution `ρ(ξ,η)`.
//! * [`ApparatusModel`]: the setting choice first acts on each party's hidden
//!   variable through a local probability [`Kernel`], so the distribution seen
//!   by the responses is `μ_{x,y} = (T_x ⊗ T_y) μ`.
//!
//! [`reduce_apparatus_model`] folds the kernels into the responses and returns an
//! ordinary [`LhvModel`] over the original distribution with the same behavior.
//!
//! Hidden spaces are finite; kernels are square and stored `t[out][in]`, each
//! column a probability vector.

use serde::{Deserialize, Serialize};

use crate::behavior::{check_bit, BehaviorTable, Bit};
use crate::error::{check_dim, Error, Result};

/// Tolerance for algebraic identities (normalization, mass conservation).
pub const IDENTITY_TOL: f64 = 1e-12;

fn check_probability(context: &str, v: f64) -> Result<f64> {
    if !v.is_finite() || !(-IDENTITY_TOL..=1.0 + IDENTITY_TOL).contains(&v) {
        return Err(Error::validation(format!("{context}: value {v} is not a probability")));
    }
    Ok(v.clamp(0.0, 1.0))
}

/// Number of discrete hidden states on one side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct HiddenSpace(usize);

impl HiddenSpace {
    pub fn new(cardinality: usize) -> Result<Self> {
        if cardinality == 0 {
            return Err(Error::validation("hidden space must have at least one state"));
        }
        Ok(HiddenSpace(cardinality))
    }

    pub fn cardinality(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for HiddenSpace {
    type Error = Error;
    fn try_from(n: usize) -> Result<Self> {
        HiddenSpace::new(n)
    }
}

impl From<HiddenSpace> for usize {
    fn from(h: HiddenSpace) -> usize {
        h.0
    }
}

/// Outcome probabilities `values[outcome][setting][state]` for one party.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawResponse", into = "RawResponse")]
pub struct ResponseFunction {
    values: [[Vec<f64>; 2]; 2],
}

#[derive(Serialize, Deserialize)]
struct RawResponse {
    values: [[Vec<f64>; 2]; 2],
}

impl TryFrom<RawResponse> for ResponseFunction {
    type Error = Error;
    fn try_from(r: RawResponse) -> Result<Self> {
        ResponseFunction::new(r.values)
    }
}

impl From<ResponseFunction> for RawResponse {
    fn from(r: ResponseFunction) -> Self {
        RawResponse { values: r.values }
    }
}

impl ResponseFunction {
    pub fn new(mut values: [[Vec<f64>; 2]; 2]) -> Result<Self> {
        let n = values[0][0].len();
        if n == 0 {
            return Err(Error::validation("response function over an empty hidden space"));
        }
        for a in 0..2 {
            for x in 0..2 {
                check_dim("response function states", n, values[a][x].len())?;
                for (s, v) in values[a][x].iter_mut().enumerate() {
                    *v = check_probability(&format!("response[a={a}][x={x}][state {s}]"), *v)?;
                }
            }
        }
        for x in 0..2 {
            for s in 0..n {
                let total = values[0][x][s] + values[1][x][s];
                if (total - 1.0).abs() > IDENTITY_TOL {
                    return Err(Error::validation(format!(
                        "response for setting {x} at state {s} sums to {total}, not 1"
                    )));
                }
            }
        }
        Ok(ResponseFunction { values })
    }

    /// Outcome 0 with probability `p0[x][s]`.
    pub fn from_outcome_zero(p0: [Vec<f64>; 2]) -> Result<Self> {
        let p1 = [
            p0[0].iter().map(|v| 1.0 - v).collect(),
            p0[1].iter().map(|v| 1.0 - v).collect(),
        ];
        Self::new([p0, p1])
    }

    /// Indicator response: state `s` always yields `map[x][s]` under setting `x`.
    pub fn deterministic(map: [Vec<Bit>; 2]) -> Result<Self> {
        let p0 = [
            map[0].iter().map(|&o| if o == 0 { 1.0 } else { 0.0 }).collect(),
            map[1].iter().map(|&o| if o == 0 { 1.0 } else { 0.0 }).collect(),
        ];
        for &o in map.iter().flatten() {
            check_bit("deterministic outcome", o)?;
        }
        Self::from_outcome_zero(p0)
    }

    pub fn states(&self) -> usize {
        self.values[0][0].len()
    }

    pub fn value(&self, outcome: usize, setting: usize, state: usize) -> f64 {
        self.values[outcome][setting][state]
    }

    pub fn values(&self) -> &[[Vec<f64>; 2]; 2] {
        &self.values
    }

    pub fn max_abs_diff(&self, other: &ResponseFunction) -> f64 {
        let mut d: f64 = 0.0;
        for a in 0..2 {
            for x in 0..2 {
                for (u, v) in self.values[a][x].iter().zip(&other.values[a][x]) {
                    d = d.max((u - v).abs());
                }
            }
        }
        d
    }
}

/// Probability mass `rho[ξ][η]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJoint", into = "RawJoint")]
pub struct JointDistribution {
    rho: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawJoint {
    rho: Vec<Vec<f64>>,
}

impl TryFrom<RawJoint> for JointDistribution {
    type Error = Error;
    fn try_from(r: RawJoint) -> Result<Self> {
        JointDistribution::new(r.rho)
    }
}

impl From<JointDistribution> for RawJoint {
    fn from(j: JointDistribution) -> Self {
        RawJoint { rho: j.rho }
    }
}

impl JointDistribution {
    pub fn new(rho: Vec<Vec<f64>>) -> Result<Self> {
        if rho.is_empty() || rho[0].is_empty() {
            return Err(Error::validation("joint distribution must be non-empty"));
        }
        let cols = rho[0].len();
        let mut total = 0.0;
        for row in &rho {
            check_dim("joint distribution row", cols, row.len())?;
            for &v in row {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::validation(format!(
                        "joint distribution entry {v} is negative or not finite"
                    )));
                }
                total += v;
            }
        }
        if (total - 1.0).abs() > IDENTITY_TOL {
            return Err(Error::validation(format!("joint distribution mass is {total}, not 1")));
        }
        Ok(JointDistribution { rho })
    }

    /// `ρ(ξ,η) = p(ξ) q(η)`.
    pub fn product(alice: &[f64], bob: &[f64]) -> Result<Self> {
        Self::new(alice.iter().map(|a| bob.iter().map(|b| a * b).collect()).collect())
    }

    pub fn point_mass(alice_states: usize, bob_states: usize, at: (usize, usize)) -> Result<Self> {
        let mut rho = vec![vec![0.0; bob_states]; alice_states];
        *rho.get_mut(at.0)
            .and_then(|r| r.get_mut(at.1))
            .ok_or_else(|| Error::validation("point mass outside the hidden spaces"))? = 1.0;
        Self::new(rho)
    }

    pub fn alice_states(&self) -> usize {
        self.rho.len()
    }

    pub fn bob_states(&self) -> usize {
        self.rho[0].len()
    }

    pub fn get(&self, xi: usize, eta: usize) -> f64 {
        self.rho[xi][eta]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rho
    }

    pub fn alice_marginal(&self) -> Vec<f64> {
        self.rho.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn bob_marginal(&self) -> Vec<f64> {
        (0..self.bob_states())
            .map(|j| self.rho.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &JointDistribution) -> f64 {
        self.rho
            .iter()
            .flatten()
            .zip(other.rho.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Column-stochastic transition matrix `t[out][in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel", into = "RawKernel")]
pub struct Kernel {
    t: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawKernel {
    t: Vec<Vec<f64>>,
}

impl TryFrom<RawKernel> for Kernel {
    type Error = Error;
    fn try_from(r: RawKernel) -> Result<Self> {
        Kernel::new(r.t)
    }
}

impl From<Kernel> for RawKernel {
    fn from(k: Kernel) -> Self {
        RawKernel { t: k.t }
    }
}

impl Kernel {
    pub fn new(mut t: Vec<Vec<f64>>) -> Result<Self> {
        let n = t.len();
        if n == 0 {
            return Err(Error::validation("kernel must be non-empty"));
        }
        for (o, row) in t.iter_mut().enumerate() {
            check_dim("kernel row (kernels are square)", n, row.len())?;
            for (i, v) in row.iter_mut().enumerate() {
                *v = check_probability(&format!("kernel[{o}][{i}]"), *v)?;
            }
        }
        for i in 0..n {
            let col: f64 = t.iter().map(|row| row[i]).sum();
            if (col - 1.0).abs() > IDENTITY_TOL {
                return Err(Error::validation(format!("kernel column {i} sums to {col}, not 1")));
            }
        }
        Ok(Kernel { t })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|o| (0..n).map(|i| if o == i { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    /// Sends every state to `target`.
    pub fn absorbing(n: usize, target: usize) -> Result<Self> {
        if target >= n {
            return Err(Error::validation(format!(
                "absorbing state {target} outside a {n}-state space"
            )));
        }
        Self::new((0..n).map(|o| vec![if o == target { 1.0 } else { 0.0 }; n]).collect())
    }

    /// Deterministic map sending input state `i` to `perm[i]`.
    pub fn from_map(perm: &[usize]) -> Result<Self> {
        let n = perm.len();
        let mut t = vec![vec![0.0; n]; n];
        for (i, &o) in perm.iter().enumerate() {
            if o >= n {
                return Err(Error::validation(format!("map target {o} outside a {n}-state space")));
            }
            t[o][i] = 1.0;
        }
        Self::new(t)
    }

    pub fn states(&self) -> usize {
        self.t.len()
    }

    pub fn get(&self, out: usize, input: usize) -> f64 {
        self.t[out][input]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LhvModel {
    pub alice_space: HiddenSpace,
    pub bob_space: HiddenSpace,
    pub alice_response: ResponseFunction,
    pub bob_response: ResponseFunction,
    pub joint: JointDistribution,
}

impl LhvModel {
    pub fn new(
        alice_response: ResponseFunction,
        bob_response: ResponseFunction,
        joint: JointDistribution,
    ) -> Result<Self> {
        let model = LhvModel {
            alice_space: HiddenSpace::new(alice_response.states())?,
            bob_space: HiddenSpace::new(bob_response.states())?,
            alice_response,
            bob_response,
            joint,
        };
        model.validate()?;
        Ok(model)
    }

    /// One hidden state per side with indicator responses: the deterministic
    /// strategy `a = alice[x]`, `b = bob[y]`.
    pub fn deterministic(alice: [Bit; 2], bob: [Bit; 2]) -> Result<Self> {
        Self::new(
            ResponseFunction::deterministic([vec![alice[0]], vec![alice[1]]])?,
            ResponseFunction::deterministic([vec![bob[0]], vec![bob[1]]])?,
            JointDistribution::point_mass(1, 1, (0, 0))?,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let (na, nb) = (self.alice_space.cardinality(), self.bob_space.cardinality());
        check_dim("alice response states", na, self.alice_response.states())?;
        check_dim("bob response states", nb, self.bob_response.states())?;
        check_dim("joint distribution rows (alice states)", na, self.joint.alice_states())?;
        check_dim("joint distribution columns (bob states)", nb, self.joint.bob_states())?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApparatusModel {
    /// Responses act on the post-kernel states; `base.joint` is the
    /// pre-operation distribution `μ`.
    pub base: LhvModel,
    pub alice_kernels: [Kernel; 2],
    pub bob_kernels: [Kernel; 2],
}

impl ApparatusModel {
    pub fn new(base: LhvModel, alice_kernels: [Kernel; 2], bob_kernels: [Kernel; 2]) -> Result<Self> {
        let model = ApparatusModel {
            base,
            alice_kernels,
            bob_kernels,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        for k in &self.alice_kernels {
            check_dim("alice kernel states", self.base.alice_space.cardinality(), k.states())?;
        }
        for k in &self.bob_kernels {
            check_dim("bob kernel states", self.base.bob_space.cardinality(), k.states())?;
        }
        Ok(())
    }

    /// `μ_{x,y}`, the distribution after both parties' setting operations.
    pub fn setting_distribution(&self, x: usize, y: usize) -> Result<JointDistribution> {
        product_kernel_joint(&self.alice_kernels[x], &self.bob_kernels[y], &self.base.joint)
    }
}

/// `P(a,b|x,y) = Σ_{ξ,η} ρ(ξ,η) F_x^a(ξ) G_y^b(η)`.
pub fn behavior_from_lhv(model: &LhvModel) -> Result<BehaviorTable> {
    model.validate()?;
    Ok(factorized_behavior(
        &model.alice_response,
        &model.bob_response,
        |_, _| &model.joint,
    ))
}

fn factorized_behavior<'a>(
    alice: &ResponseFunction,
    bob: &ResponseFunction,
    joint_for: impl Fn(usize, usize) -> &'a JointDistribution,
) -> BehaviorTable {
    let mut p = [[[[0.0; 2]; 2]; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            let joint = joint_for(x, y);
            for b in 0..2 {
                let g = &bob.values[b][y];
                // (ρ G)(ξ) = Σ_η ρ(ξ,η) G(η)
                let rho_g: Vec<f64> = joint
                    .rho
                    .iter()
                    .map(|row| row.iter().zip(g).map(|(r, gv)| r * gv).sum())
                    .collect();
                for a in 0..2 {
                    p[a][b][x][y] = alice.values[a][x].iter().zip(&rho_g).map(|(f, h)| f * h).sum();
                }
            }
        }
    }
    BehaviorTable::new(p).expect("a convex combination of product distributions is a valid behavior")
}

/// `out[ξ] = Σ_ξ' t[ξ][ξ'] dist[ξ']`.
pub fn apply_kernel(kernel: &Kernel, dist: &[f64]) -> Result<Vec<f64>> {
    check_dim("apply_kernel distribution", kernel.states(), dist.len())?;
    if dist.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation(
            "apply_kernel: distribution has negative or non-finite mass",
        ));
    }
    let mass: f64 = dist.iter().sum();
    if (mass - 1.0).abs() > IDENTITY_TOL {
        return Err(Error::validation(format!(
            "apply_kernel: distribution mass is {mass}, not 1"
        )));
    }
    Ok(kernel
        .t
        .iter()
        .map(|row| row.iter().zip(dist).map(|(t, d)| t * d).sum())
        .collect())
}

/// `μ'(ξ,η) = Σ_{ξ',η'} T_A(ξ,ξ') T_B(η,η') μ(ξ',η')`, computed as `T_A μ T_Bᵀ`.
pub fn product_kernel_joint(t_alice: &Kernel, t_bob: &Kernel, joint: &JointDistribution) -> Result<JointDistribution> {
    check_dim(
        "product_kernel_joint alice states",
        t_alice.states(),
        joint.alice_states(),
    )?;
    check_dim("product_kernel_joint bob states", t_bob.states(), joint.bob_states())?;
    let nb = joint.bob_states();
    // μ T_Bᵀ
    let right: Vec<Vec<f64>> = joint
        .rho
        .iter()
        .map(|row| {
            (0..nb)
                .map(|eta| t_bob.t[eta].iter().zip(row).map(|(t, m)| t * m).sum())
                .collect()
        })
        .collect();
    let rho = t_alice
        .t
        .iter()
        .map(|trow| {
            (0..nb)
                .map(|eta| trow.iter().zip(&right).map(|(t, r)| t * r[eta]).sum())
                .collect()
        })
        .collect();
    JointDistribution::new(rho)
}

/// `f̃_x^a(ξ') = Σ_ξ f_x^a(ξ) T_x(ξ,ξ')`.
pub fn tilded_response(response: &ResponseFunction, kernels: &[Kernel; 2]) -> Result<ResponseFunction> {
    let n = response.states();
    for k in kernels {
        check_dim("tilded_response kernel states", n, k.states())?;
    }
    let mut values: [[Vec<f64>; 2]; 2] = Default::default();
    for a in 0..2 {
        for x in 0..2 {
            let f = &response.values[a][x];
            values[a][x] = (0..n)
                .map(|input| f.iter().zip(&kernels[x].t).map(|(fv, row)| fv * row[input]).sum())
                .collect();
        }
    }
    ResponseFunction::new(values)
}

/// `P(a,b|x,y) = Σ_{ξ,η} μ_{x,y}(ξ,η) f_x^a(ξ) g_y^b(η)`.
pub fn apparatus_behavior_direct(model: &ApparatusModel) -> Result<BehaviorTable> {
    model.validate()?;
    let mus = [
        [model.setting_distribution(0, 0)?, model.setting_distribution(0, 1)?],
        [model.setting_distribution(1, 0)?, model.setting_distribution(1, 1)?],
    ];
    Ok(factorized_behavior(
        &model.base.alice_response,
        &model.base.bob_response,
        |x, y| &mus[x][y],
    ))
}

/// The standard-form model over `μ` with kernel-composed responses.
pub fn reduce_apparatus_model(model: &ApparatusModel) -> Result<LhvModel> {
    model.validate()?;
    LhvModel::new(
        tilded_response(&model.base.alice_response, &model.alice_kernels)?,
        tilded_response(&model.base.bob_response, &model.bob_kernels)?,
        model.base.joint.clone(),
    )
}

/// Random model generation for property sweeps.
pub mod random {
    use rand::Rng;
    use rand_distr::{Distribution, Exp1};

    use super::*;

    /// A point drawn uniformly from the probability simplex of dimension `n`.
    pub fn simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
        let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        draws.into_iter().map(|d: f64| d / total).collect()
    }

    pub fn response<R: Rng + ?Sized>(rng: &mut R, states: usize) -> ResponseFunction {
        let p0 = [
            (0..states).map(|_| rng.random::<f64>()).collect(),
            (0..states).map(|_| rng.random::<f64>()).collect(),
        ];
        ResponseFunction::from_outcome_zero(p0).expect("uniform draws are probabilities")
    }

    pub fn joint<R: Rng + ?Sized>(rng: &mut R, alice_states: usize, bob_states: usize) -> JointDistribution {
        let flat = simplex(rng, alice_states * bob_states);
        JointDistribution::new(flat.chunks(bob_states).map(|c| c.to_vec()).collect())
            .expect("simplex draw is a distribution")
    }

    pub fn kernel<R: Rng + ?Sized>(rng: &mut R, states: usize) -> Kernel {
        let cols: Vec<Vec<f64>> = (0..states).map(|_| simplex(rng, states)).collect();
        Kernel::new((0..states).map(|o| cols.iter().map(|c| c[o]).collect()).collect())
            .expect("simplex columns are stochastic")
    }

    pub fn lhv_model<R: Rng + ?Sized>(rng: &mut R, alice_states: usize, bob_states: usize) -> LhvModel {
        LhvModel::new(
            response(rng, alice_states),
            response(rng, bob_states),
            joint(rng, alice_states, bob_states),
        )
        .expect("generated dimensions agree")
    }

    pub fn apparatus_model<R: Rng + ?Sized>(rng: &mut R, alice_states: usize, bob_states: usize) -> ApparatusModel {
        let base = lhv_model(rng, alice_states, bob_states);
        let alice_kernels = [kernel(rng, alice_states), kernel(rng, alice_states)];
        let bob_kernels = [kernel(rng, bob_states), kernel(rng, bob_states)];
        ApparatusModel::new(base, alice_kernels, bob_kernels).expect("generated dimensions agree")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::{indices, NO_SIGNALING_TOL};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Oracles: literal transcriptions of the defining sums, kept separate from the
    // matrix-product production path.

    fn lhv_oracle(m: &LhvModel) -> [[[[f64; 2]; 2]; 2]; 2] {
        let mut p = [[[[0.0; 2]; 2]; 2]; 2];
        for (a, b, x, y) in indices() {
            for xi in 0..m.alice_space.cardinality() {
                for eta in 0..m.bob_space.cardinality() {
                    p[a][b][x][y] +=
                        m.joint.get(xi, eta) * m.alice_response.value(a, x, xi) * m.bob_response.value(b, y, eta);
                }
            }
        }
        p
    }

    fn product_oracle(ta: &Kernel, tb: &Kernel, mu: &JointDistribution) -> Vec<Vec<f64>> {
        let (na, nb) = (mu.alice_states(), mu.bob_states());
        let mut out = vec![vec![0.0; nb]; na];
        for xi in 0..na {
            for eta in 0..nb {
                for xi_in in 0..na {
                    for eta_in in 0..nb {
                        out[xi][eta] += ta.get(xi, xi_in) * tb.get(eta, eta_in) * mu.get(xi_in, eta_in);
                    }
                }
            }
        }
        out
    }

    fn apparatus_oracle(m: &ApparatusModel) -> [[[[f64; 2]; 2]; 2]; 2] {
        let (na, nb) = (m.base.alice_space.cardinality(), m.base.bob_space.cardinality());
        let mut p = [[[[0.0; 2]; 2]; 2]; 2];
        for (a, b, x, y) in indices() {
            for xi in 0..na {
                for eta in 0..nb {
                    for xi_in in 0..na {
                        for eta_in in 0..nb {
                            p[a][b][x][y] += m.alice_kernels[x].get(xi, xi_in)
                                * m.bob_kernels[y].get(eta, eta_in)
                                * m.base.joint.get(xi_in, eta_in)
                                * m.base.alice_response.value(a, x, xi)
                                * m.base.bob_response.value(b, y, eta);
                        }
                    }
                }
            }
        }
        p
    }

    fn max_diff(t: &BehaviorTable, p: &[[[[f64; 2]; 2]; 2]; 2]) -> f64 {
        indices()
            .map(|(a, b, x, y)| (t.get(a, b, x, y) - p[a][b][x][y]).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn deterministic_model_reproduces_strategy() {
        let m = LhvModel::deterministic([0, 1], [1, 1]).unwrap();
        let t = behavior_from_lhv(&m).unwrap();
        for (a, b, x, y) in indices() {
            let expected = if a == [0, 1][x] && b == 1 { 1.0 } else { 0.0 };
            assert_eq!(t.get(a, b, x, y), expected);
        }
    }

    #[test]
    fn half_responses_give_uniform() {
        let half = ResponseFunction::from_outcome_zero([vec![0.5; 3], vec![0.5; 3]]).unwrap();
        let bob = ResponseFunction::from_outcome_zero([vec![0.5; 2], vec![0.5; 2]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = LhvModel::new(half, bob, random::joint(&mut rng, 3, 2)).unwrap();
        assert!(behavior_from_lhv(&m).unwrap().max_abs_diff(&BehaviorTable::uniform()) < 1e-15);
    }

    #[test]
    fn lhv_behavior_matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = random::lhv_model(&mut rng, 3, 2);
            let t = behavior_from_lhv(&m).unwrap();
            assert!(max_diff(&t, &lhv_oracle(&m)) < 1e-15);
            t.check_no_signaling(NO_SIGNALING_TOL).unwrap();
        }
    }

    #[test]
    fn kernel_identity_and_absorbing() {
        let dist = vec![0.1, 0.2, 0.3, 0.4];
        assert_eq!(apply_kernel(&Kernel::identity(4).unwrap(), &dist).unwrap(), dist);
        let out = apply_kernel(&Kernel::absorbing(4, 2).unwrap(), &dist).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn kernel_matches_matrix_vector_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = random::kernel(&mut rng, 4);
        let dist = random::simplex(&mut rng, 4);
        let out = apply_kernel(&k, &dist).unwrap();
        for o in 0..4 {
            let mut oracle = 0.0;
            for i in 0..4 {
                oracle += k.get(o, i) * dist[i];
            }
            assert!((out[o] - oracle).abs() < 1e-15);
        }
        assert!((out.iter().sum::<f64>() - 1.0).abs() < IDENTITY_TOL);
    }

    #[test]
    fn kernel_validation() {
        assert!(Kernel::new(vec![vec![0.5, 0.5], vec![0.4, 0.5]]).is_err());
        assert!(Kernel::new(vec![vec![1.0, 0.0]]).is_err());
        assert!(Kernel::new(vec![vec![1.5, 0.0], vec![-0.5, 1.0]]).is_err());
        assert!(Kernel::absorbing(3, 3).is_err());
        let k = Kernel::identity(3).unwrap();
        assert!(matches!(
            apply_kernel(&k, &[0.5, 0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn product_kernel_identity_and_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mu = random::joint(&mut rng, 2, 3);
        let id = product_kernel_joint(&Kernel::identity(2).unwrap(), &Kernel::identity(3).unwrap(), &mu).unwrap();
        assert!(id.max_abs_diff(&mu) < 1e-16);

        let (p, q) = (random::simplex(&mut rng, 2), random::simplex(&mut rng, 3));
        let (ka, kb) = (random::kernel(&mut rng, 2), random::kernel(&mut rng, 3));
        let out = product_kernel_joint(&ka, &kb, &JointDistribution::product(&p, &q).unwrap()).unwrap();
        let expected =
            JointDistribution::product(&apply_kernel(&ka, &p).unwrap(), &apply_kernel(&kb, &q).unwrap()).unwrap();
        assert!(out.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn product_kernel_matches_quadruple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mu = random::joint(&mut rng, 2, 3);
        let (ka, kb) = (random::kernel(&mut rng, 2), random::kernel(&mut rng, 3));
        let out = product_kernel_joint(&ka, &kb, &mu).unwrap();
        let oracle = product_oracle(&ka, &kb, &mu);
        for xi in 0..2 {
            for eta in 0..3 {
                assert!((out.get(xi, eta) - oracle[xi][eta]).abs() < 1e-15);
            }
        }
        assert!(product_kernel_joint(&kb, &ka, &mu).is_err());
    }

    #[test]
    fn tilded_identity_and_absorbing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random::response(&mut rng, 3);
        let id = [Kernel::identity(3).unwrap(), Kernel::identity(3).unwrap()];
        assert_eq!(tilded_response(&f, &id).unwrap(), f);

        let k = [Kernel::absorbing(3, 0).unwrap(), Kernel::absorbing(3, 0).unwrap()];
        let t = tilded_response(&f, &k).unwrap();
        for a in 0..2 {
            for x in 0..2 {
                for s in 0..3 {
                    assert_eq!(t.value(a, x, s), f.value(a, x, 0));
                }
            }
        }
    }

    #[test]
    fn tilded_responses_stay_bounded_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for _ in 0..100 {
            let n = rng.random_range(1..=6);
            let f = random::response(&mut rng, n);
            let ks = [random::kernel(&mut rng, n), random::kernel(&mut rng, n)];
            let t = tilded_response(&f, &ks).unwrap();
            for x in 0..2 {
                for s in 0..n {
                    let (v0, v1) = (t.value(0, x, s), t.value(1, x, s));
                    assert!((0.0..=1.0).contains(&v0) && (0.0..=1.0).contains(&v1));
                    assert!((v0 + v1 - 1.0).abs() < IDENTITY_TOL);
                }
            }
        }
    }

    #[test]
    fn apparatus_identity_kernels_degenerate_to_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let base = random::lhv_model(&mut rng, 3, 4);
        let m = ApparatusModel::new(
            base.clone(),
            [Kernel::identity(3).unwrap(), Kernel::identity(3).unwrap()],
            [Kernel::identity(4).unwrap(), Kernel::identity(4).unwrap()],
        )
        .unwrap();
        let direct = apparatus_behavior_direct(&m).unwrap();
        assert!(direct.max_abs_diff(&behavior_from_lhv(&base).unwrap()) < 1e-15);
        let reduced = reduce_apparatus_model(&m).unwrap();
        assert_eq!(reduced.alice_response, base.alice_response);
        assert_eq!(reduced.bob_response, base.bob_response);
    }

    #[test]
    fn apparatus_collapsing_kernels_give_deterministic_strategy() {
        // Alice's responses: state s outputs s for setting 0 and 1 - s for setting 1.
        let f = ResponseFunction::deterministic([vec![0, 1], vec![1, 0]]).unwrap();
        let g = ResponseFunction::deterministic([vec![0, 1, 1], vec![1, 0, 0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let base = LhvModel::new(f, g, random::joint(&mut rng, 2, 3)).unwrap();
        let m = ApparatusModel::new(
            base,
            [Kernel::absorbing(2, 1).unwrap(), Kernel::absorbing(2, 0).unwrap()],
            [Kernel::absorbing(3, 2).unwrap(), Kernel::absorbing(3, 1).unwrap()],
        )
        .unwrap();
        // Alice ends in state 1 for x = 0 (outputs 1) and state 0 for x = 1 (outputs 1).
        // Bob ends in state 2 for y = 0 (outputs 1) and state 1 for y = 1 (outputs 0).
        let expected = behavior_from_lhv(&LhvModel::deterministic([1, 1], [1, 0]).unwrap()).unwrap();
        assert!(apparatus_behavior_direct(&m).unwrap().max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn apparatus_matches_sextuple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let m = random::apparatus_model(&mut rng, 3, 2);
            let t = apparatus_behavior_direct(&m).unwrap();
            assert!(max_diff(&t, &apparatus_oracle(&m)) < 1e-15);
        }
    }

    #[test]
    fn permutation_kernels_permute_indicators() {
        // f^0_x = [1, 0]: state 0 answers 0. A swap kernel makes input state ξ'
        // land on 1 − ξ', so the tilded indicator becomes [0, 1].
        let f = ResponseFunction::deterministic([vec![0, 1], vec![0, 1]]).unwrap();
        let swap = Kernel::from_map(&[1, 0]).unwrap();
        let id = Kernel::identity(2).unwrap();
        let base = LhvModel::new(
            f.clone(),
            f,
            JointDistribution::product(&[0.5, 0.5], &[0.5, 0.5]).unwrap(),
        )
        .unwrap();
        let m = ApparatusModel::new(base, [swap.clone(), id.clone()], [id, swap]).unwrap();
        let r = reduce_apparatus_model(&m).unwrap();
        assert_eq!(r.alice_response.values()[0], [vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(r.bob_response.values()[0], [vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(
            behavior_from_lhv(&r)
                .unwrap()
                .max_abs_diff(&apparatus_behavior_direct(&m).unwrap())
                < 1e-15
        );
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = random::lhv_model(&mut rng, 2, 2);
        let bad = ApparatusModel::new(
            base,
            [Kernel::identity(2).unwrap(), Kernel::identity(3).unwrap()],
            [Kernel::identity(2).unwrap(), Kernel::identity(2).unwrap()],
        );
        assert!(matches!(bad, Err(Error::DimensionMismatch { .. })));
        let r2 = random::response(&mut rng, 2);
        let r3 = random::response(&mut rng, 3);
        assert!(LhvModel::new(r2, r3, random::joint(&mut rng, 2, 2)).is_err());
    }

    #[test]
    fn model_json_roundtrip_validates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random::apparatus_model(&mut rng, 2, 3);
        let text = serde_json::to_string(&m).unwrap();
        let back: ApparatusModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let broken = text.replacen("\"t\":[[", "\"t\":[[7.0,", 1);
        assert!(serde_json::from_str::<ApparatusModel>(&broken).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn reduction_preserves_behavior(seed in any::<u64>(), na in 1usize..=6, nb in 1usize..=6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random::apparatus_model(&mut rng, na, nb);
            let direct = apparatus_behavior_direct(&m).unwrap();
            let reduced = behavior_from_lhv(&reduce_apparatus_model(&m).unwrap()).unwrap();
            prop_assert!(direct.max_abs_diff(&reduced) < IDENTITY_TOL);
        }

        #[test]
        fn kernels_conserve_mass(seed in any::<u64>(), n in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = apply_kernel(&random::kernel(&mut rng, n), &random::simplex(&mut rng, n)).unwrap();
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < IDENTITY_TOL);
        }
    }
}
