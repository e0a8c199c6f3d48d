//! Born-rule behaviors of two-qubit states under binary projective measurements in
//! the equatorial plane of the Bloch sphere.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use nalgebra::{Complex, Matrix2, Matrix4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::behavior::{check_bit, BehaviorTable, Bit};
use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const IMAG_TOL: f64 = 1e-10;

/// A validated two-qubit density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoQubitState {
    matrix: Matrix4<C64>,
}

impl TwoQubitState {
    pub fn new(matrix: Matrix4<C64>) -> Result<Self> {
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::validation("state: density matrix has non-finite entries"));
        }
        let herm_err = (matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm_err > HERMITIAN_TOL {
            return Err(Error::validation(format!(
                "state: density matrix is not Hermitian (max |rho - rho^dagger| = {herm_err:.3e})"
            )));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::validation(format!(
                "state: density matrix trace is {trace}, not 1"
            )));
        }
        let min_eig = matrix.symmetric_eigenvalues().min();
        if min_eig < -PSD_TOL {
            return Err(Error::validation(format!(
                "state: density matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(TwoQubitState { matrix })
    }

    /// `|ψ⟩⟨ψ|` for amplitudes in the basis `|00⟩, |01⟩, |10⟩, |11⟩`; normalizes `ψ`.
    pub fn from_pure(amplitudes: [C64; 4]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::validation(
                "state: pure-state amplitudes have zero or non-finite norm",
            ));
        }
        let psi = nalgebra::Vector4::from_iterator(amplitudes.iter().map(|z| z / norm));
        Self::new(psi * psi.adjoint())
    }

    /// `(|01⟩ − |10⟩)/√2`.
    pub fn singlet() -> Self {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::from_pure([C64::ZERO, h, -h, C64::ZERO]).expect("singlet is a valid state")
    }

    /// `(|00⟩ + |11⟩)/√2`.
    pub fn phi_plus() -> Self {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::from_pure([h, C64::ZERO, C64::ZERO, h]).expect("phi+ is a valid state")
    }

    pub fn maximally_mixed() -> Self {
        TwoQubitState {
            matrix: Matrix4::identity() * C64::new(0.25, 0.0),
        }
    }

    /// `v·|singlet⟩⟨singlet| + (1 − v)·I/4`, valid for `v ∈ [-1/3, 1]`.
    pub fn werner(visibility: f64) -> Result<Self> {
        let m = Self::singlet().matrix * C64::new(visibility, 0.0)
            + Self::maximally_mixed().matrix * C64::new(1.0 - visibility, 0.0);
        Self::new(m)
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.matrix
    }
}

/// Serializable description of a state, as used in experiment configs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum StateSpec {
    #[default]
    Singlet,
    PhiPlus,
    MaximallyMixed,
    Werner {
        visibility: f64,
    },
    /// Row-major real and imaginary parts of the density matrix.
    Density {
        re: [[f64; 4]; 4],
        im: [[f64; 4]; 4],
    },
}

impl StateSpec {
    pub fn build(&self) -> Result<TwoQubitState> {
        match self {
            StateSpec::Singlet => Ok(TwoQubitState::singlet()),
            StateSpec::PhiPlus => Ok(TwoQubitState::phi_plus()),
            StateSpec::MaximallyMixed => Ok(TwoQubitState::maximally_mixed()),
            StateSpec::Werner { visibility } => TwoQubitState::werner(*visibility),
            StateSpec::Density { re, im } => TwoQubitState::new(Matrix4::from_fn(|r, c| C64::new(re[r][c], im[r][c]))),
        }
    }
}

/// Equatorial measurement angles, `[setting 0, setting 1]` per party, in `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSettings", into = "RawSettings")]
pub struct MeasurementSettings {
    alice: [f64; 2],
    bob: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct RawSettings {
    alice_angles: [f64; 2],
    bob_angles: [f64; 2],
}

impl TryFrom<RawSettings> for MeasurementSettings {
    type Error = Error;
    fn try_from(r: RawSettings) -> Result<Self> {
        MeasurementSettings::new(r.alice_angles, r.bob_angles)
    }
}

impl From<MeasurementSettings> for RawSettings {
    fn from(s: MeasurementSettings) -> Self {
        RawSettings {
            alice_angles: s.alice,
            bob_angles: s.bob,
        }
    }
}

impl Default for MeasurementSettings {
    /// Alice `(0, π/2)`, Bob `(π/4, −π/4)`: maximal CHSH violation for the singlet
    /// with `S = E00 + E01 + E10 − E11`.
    fn default() -> Self {
        Self::new([0.0, FRAC_PI_2], [FRAC_PI_4, -FRAC_PI_4]).expect("default angles are finite")
    }
}

impl MeasurementSettings {
    pub fn new(alice: [f64; 2], bob: [f64; 2]) -> Result<Self> {
        let reduce = |v: [f64; 2], who: &str| -> Result<[f64; 2]> {
            if v.iter().any(|a| !a.is_finite()) {
                return Err(Error::validation(format!("{who} measurement angles must be finite")));
            }
            Ok(v.map(|a| a.rem_euclid(TAU)))
        };
        Ok(MeasurementSettings {
            alice: reduce(alice, "alice")?,
            bob: reduce(bob, "bob")?,
        })
    }

    pub fn alice(&self) -> [f64; 2] {
        self.alice
    }

    pub fn bob(&self) -> [f64; 2] {
        self.bob
    }
}

/// Projector onto outcome `o` of `cos θ σx + sin θ σy`.
fn projector(outcome: usize, angle: f64) -> Matrix2<C64> {
    let s = if outcome == 0 { 0.5 } else { -0.5 };
    let off = C64::from_polar(s, angle);
    let half = C64::new(0.5, 0.0);
    Matrix2::new(half, off.conj(), off, half)
}

/// `P(a,b|x,y) = Tr[ρ (Π_a^x ⊗ Π_b^y)]`.
pub fn behavior_from_state(state: &TwoQubitState, settings: &MeasurementSettings) -> Result<BehaviorTable> {
    let rho = state.matrix();
    let mut p = [[[[0.0; 2]; 2]; 2]; 2];
    for (a, b, x, y) in crate::behavior::indices() {
        let joint = projector(a, settings.alice[x]).kronecker(&projector(b, settings.bob[y]));
        let value = (rho * joint).trace();
        if value.im.abs() > IMAG_TOL {
            return Err(Error::validation(format!(
                "Born probability for (a={a}, b={b}, x={x}, y={y}) has imaginary part {:.3e}",
                value.im
            )));
        }
        p[a][b][x][y] = value.re;
    }
    BehaviorTable::new(p)
}

/// Draws `(a, b)` from `P(·,·|x,y)`.
pub fn sample_outcomes<R: Rng + ?Sized>(behavior: &BehaviorTable, x: Bit, y: Bit, rng: &mut R) -> Result<(Bit, Bit)> {
    check_bit("x", x)?;
    check_bit("y", y)?;
    let cell = behavior.cell(x as usize, y as usize);
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last_supported = 0;
    for (k, &p) in cell.iter().enumerate() {
        if p > 0.0 {
            last_supported = k;
        }
        cumulative += p;
        if u < cumulative {
            return Ok(((k >> 1) as Bit, (k & 1) as Bit));
        }
    }
    // u landed in the rounding gap below 1.
    Ok(((last_supported >> 1) as Bit, (last_supported & 1) as Bit))
}
