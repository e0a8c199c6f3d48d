//! Classical relay stage: a torsion balance whose large spheres are swung to one
//! of two positions by a quantum outcome bit, read out as the sign of the
//! balance's equilibrium deflection.
//!
//! Geometry (horizontal plane, torsion fibre at the origin): the small balls sit
//! at `±L(cos θ, sin θ)`, the large spheres at `±R(cos ψ, sin ψ)` with
//! `R = L + sphere_distance` and `ψ = +α` for bit 0, `−α` for bit 1. Each large
//! sphere attracts only its near small ball as a point mass. The balance obeys
//! `I θ̈ = −κ θ − γ θ̇ + τ(θ)`.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::behavior::{check_bit, Bit};
use crate::error::{Error, Result};

/// Equilibria closer to zero than this are not turned into a bit.
pub const READOUT_DEAD_BAND: f64 = 1e-9;
const SUMMARY_POINTS: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CavendishConfig {
    /// kg
    pub big_mass: f64,
    /// kg
    pub small_mass: f64,
    /// m
    pub beam_halflength: f64,
    /// rad; large-sphere swing away from the balance axis, `+` for bit 0.
    pub sphere_offset_angle: f64,
    /// m; centre-to-centre distance when sphere and ball are aligned.
    pub sphere_distance: f64,
    /// N·m/rad
    pub torsion_constant: f64,
    /// N·m·s/rad
    pub damping: f64,
    /// kg·m²
    pub moment_of_inertia: f64,
    /// m³/(kg·s²)
    pub grav_constant: f64,
    /// Probability that the readout bit is flipped.
    pub relay_noise: f64,
    /// s
    pub dt: f64,
    /// s
    pub t_max: f64,
    /// rad/s; |ω| below this over the trailing window counts as settled.
    pub settle_omega_tol: f64,
    /// s
    pub settle_window: f64,
}

pub const NEWTON_G: f64 = 6.674_30e-11;

impl Default for CavendishConfig {
    fn default() -> Self {
        Self::fast()
    }
}

impl CavendishConfig {
    /// Historical masses and geometry with a stiff, light, slightly overdamped
    /// balance so the pointer settles in well under a second of simulated time.
    pub fn fast() -> Self {
        CavendishConfig {
            big_mass: 158.0,
            small_mass: 0.73,
            beam_halflength: 0.9,
            sphere_offset_angle: 0.2,
            sphere_distance: 0.225,
            torsion_constant: 4e-3,
            damping: 1.4e-4,
            moment_of_inertia: 1e-6,
            grav_constant: NEWTON_G,
            relay_noise: 0.0,
            dt: 1e-3,
            t_max: 1.0,
            settle_omega_tol: 1e-9,
            settle_window: 0.2,
        }
    }

    /// Tabletop balance: dumbbell inertia `2 m L²`, a seven-minute free period and
    /// the same damping ratio as [`CavendishConfig::fast`].
    pub fn physical() -> Self {
        let small_mass = 0.73;
        let beam_halflength = 0.9;
        let inertia = 2.0 * small_mass * beam_halflength * beam_halflength;
        let omega0 = std::f64::consts::TAU / 420.0;
        let kappa = inertia * omega0 * omega0;
        CavendishConfig {
            small_mass,
            beam_halflength,
            moment_of_inertia: inertia,
            torsion_constant: kappa,
            damping: 2.0 * 1.107 * (kappa * inertia).sqrt(),
            dt: 0.5,
            t_max: 4000.0,
            settle_omega_tol: 1e-12,
            settle_window: 500.0,
            ..Self::fast()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("big_mass", self.big_mass),
            ("small_mass", self.small_mass),
            ("beam_halflength", self.beam_halflength),
            ("sphere_distance", self.sphere_distance),
            ("torsion_constant", self.torsion_constant),
            ("damping", self.damping),
            ("moment_of_inertia", self.moment_of_inertia),
            ("dt", self.dt),
            ("t_max", self.t_max),
            ("settle_omega_tol", self.settle_omega_tol),
            ("settle_window", self.settle_window),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!(
                    "cavendish.{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !(self.grav_constant.is_finite() && self.grav_constant >= 0.0) {
            return Err(Error::validation(format!(
                "cavendish.grav_constant must be finite and >= 0, got {}",
                self.grav_constant
            )));
        }
        if !(0.0..=0.5).contains(&self.relay_noise) {
            return Err(Error::validation(format!(
                "cavendish.relay_noise must lie in [0, 0.5], got {}",
                self.relay_noise
            )));
        }
        if !(self.sphere_offset_angle > 0.0 && self.sphere_offset_angle < FRAC_PI_2) {
            return Err(Error::validation(format!(
                "cavendish.sphere_offset_angle must lie in (0, pi/2), got {}",
                self.sphere_offset_angle
            )));
        }
        if self.t_max < self.dt {
            return Err(Error::validation("cavendish.t_max must be at least dt"));
        }
        if self.settle_window > self.t_max {
            return Err(Error::validation("cavendish.settle_window must not exceed t_max"));
        }
        Ok(())
    }

    /// Radius of the large-sphere circle.
    pub fn sphere_radius(&self) -> f64 {
        self.beam_halflength + self.sphere_distance
    }

    /// Angular position of the large spheres for an orientation bit.
    pub fn sphere_angle(&self, orientation_bit: Bit) -> f64 {
        if orientation_bit == 0 {
            self.sphere_offset_angle
        } else {
            -self.sphere_offset_angle
        }
    }

    /// `2 G M m L / d²` with `d` the closest approach distance.
    pub fn torque_bound(&self) -> f64 {
        2.0 * self.grav_constant * self.big_mass * self.small_mass * self.beam_halflength
            / (self.sphere_distance * self.sphere_distance)
    }
}

/// Gravitational torque about the fibre on the balance at deflection `theta`.
pub fn gravity_torque(config: &CavendishConfig, theta: f64, orientation_bit: Bit) -> Result<f64> {
    config.validate()?;
    check_bit("orientation_bit", orientation_bit)?;
    Ok(torque_unchecked(config, theta, orientation_bit))
}

fn torque_unchecked(config: &CavendishConfig, theta: f64, orientation_bit: Bit) -> f64 {
    TorqueGeometry::new(config, orientation_bit).torque(theta)
}

/// Fixed geometry of one orientation: the large sphere on the positive side of
/// the beam. The mirror pair contributes the same torque.
struct TorqueGeometry {
    l: f64,
    sphere: [f64; 2],
    gmm: f64,
}

impl TorqueGeometry {
    fn new(config: &CavendishConfig, orientation_bit: Bit) -> Self {
        let r = config.sphere_radius();
        let (sin_psi, cos_psi) = config.sphere_angle(orientation_bit).sin_cos();
        TorqueGeometry {
            l: config.beam_halflength,
            sphere: [r * cos_psi, r * sin_psi],
            gmm: config.grav_constant * config.big_mass * config.small_mass,
        }
    }

    fn torque(&self, theta: f64) -> f64 {
        let (sin_t, cos_t) = theta.sin_cos();
        let ball = [self.l * cos_t, self.l * sin_t];
        let sep = [self.sphere[0] - ball[0], self.sphere[1] - ball[1]];
        let d = sep[0].hypot(sep[1]);
        let scale = self.gmm / (d * d * d);
        2.0 * (ball[0] * scale * sep[1] - ball[1] * scale * sep[0])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PendulumState {
    /// rad
    pub theta: f64,
    /// rad/s
    pub omega: f64,
    /// s
    pub t: f64,
}

impl PendulumState {
    pub fn at_rest() -> Self {
        Self::default()
    }

    /// `½ I ω² + ½ κ θ²`.
    pub fn energy(&self, config: &CavendishConfig) -> f64 {
        0.5 * config.moment_of_inertia * self.omega * self.omega
            + 0.5 * config.torsion_constant * self.theta * self.theta
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `None` for trajectories driven by an external torque.
    pub orientation_bit: Option<Bit>,
    pub dt: f64,
    pub states: Vec<PendulumState>,
}

impl Trajectory {
    pub fn last(&self) -> &PendulumState {
        self.states
            .last()
            .expect("trajectories hold at least the initial state")
    }

    /// Writes `t,theta,omega` rows with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let to_err = |e: csv::Error| Error::Parse(format!("writing trajectory csv: {e}"));
        w.write_record(["t", "theta", "omega"]).map_err(to_err)?;
        for s in &self.states {
            w.serialize((s.t, s.theta, s.omega)).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io("<trajectory csv>", e))
    }
}

/// Fixed-step RK4 under the gravitational torque for `orientation_bit`.
pub fn integrate_pendulum(
    config: &CavendishConfig,
    initial: PendulumState,
    orientation_bit: Bit,
    dt: f64,
    t_max: f64,
) -> Result<Trajectory> {
    config.validate()?;
    check_bit("orientation_bit", orientation_bit)?;
    let geometry = TorqueGeometry::new(config, orientation_bit);
    let mut traj = integrate_with_torque(config, initial, dt, t_max, |theta| geometry.torque(theta))?;
    traj.orientation_bit = Some(orientation_bit);
    Ok(traj)
}

/// Fixed-step RK4 of `I θ̈ = −κθ − γθ̇ + torque(θ)` from `initial` until `t_max`.
pub fn integrate_with_torque(
    config: &CavendishConfig,
    initial: PendulumState,
    dt: f64,
    t_max: f64,
    torque: impl Fn(f64) -> f64,
) -> Result<Trajectory> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::validation(format!("dt must be finite and > 0, got {dt}")));
    }
    if !(t_max.is_finite() && t_max >= dt) {
        return Err(Error::validation(format!(
            "t_max must be finite and >= dt, got {t_max}"
        )));
    }
    if !(initial.theta.is_finite() && initial.omega.is_finite() && initial.t.is_finite()) {
        return Err(Error::validation("initial pendulum state must be finite"));
    }
    let inv_i = 1.0 / config.moment_of_inertia;
    let (kappa, gamma) = (config.torsion_constant, config.damping);
    let accel = |theta: f64, omega: f64| (-kappa * theta - gamma * omega + torque(theta)) * inv_i;

    let steps = ((t_max - initial.t) / dt + 1e-9).floor().max(0.0) as usize;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(initial);
    let (mut theta, mut omega) = (initial.theta, initial.omega);
    for k in 1..=steps {
        let k1 = (omega, accel(theta, omega));
        let k2 = (
            omega + 0.5 * dt * k1.1,
            accel(theta + 0.5 * dt * k1.0, omega + 0.5 * dt * k1.1),
        );
        let k3 = (
            omega + 0.5 * dt * k2.1,
            accel(theta + 0.5 * dt * k2.0, omega + 0.5 * dt * k2.1),
        );
        let k4 = (omega + dt * k3.1, accel(theta + dt * k3.0, omega + dt * k3.1));
        theta += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        omega += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        let t = initial.t + k as f64 * dt;
        if !theta.is_finite() || theta.abs() > FRAC_PI_2 {
            return Err(Error::Unstable {
                t,
                theta: theta.abs(),
                dt,
            });
        }
        states.push(PendulumState { theta, omega, t });
    }
    Ok(Trajectory {
        orientation_bit: None,
        dt,
        states,
    })
}

/// Outcome of relaying one bit through the balance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelayRecord {
    pub input_bit: Bit,
    pub output_bit: Bit,
    /// Whether the readout noise flipped the sign-threshold bit.
    pub flipped: bool,
    /// s; start of the final stretch with |ω| under the settle tolerance.
    pub settle_time: f64,
    /// rad
    pub equilibrium_angle: f64,
    /// Evenly subsampled `(t, θ)` pairs, always ending with the final state.
    pub trajectory_summary: Vec<(f64, f64)>,
}

/// Sign-threshold readout of a settled trajectory, then a noisy relay flip.
/// Draws exactly one uniform from `rng`.
pub fn readout<R: Rng + ?Sized>(trajectory: &Trajectory, config: &CavendishConfig, rng: &mut R) -> Result<RelayRecord> {
    let input_bit = trajectory
        .orientation_bit
        .ok_or_else(|| Error::validation("readout needs a trajectory driven by an orientation bit"))?;
    let states = &trajectory.states;
    let last = trajectory.last();
    let window_start = last.t - config.settle_window;
    if states[0].t > window_start + 1e-12 {
        return Err(Error::Inconclusive(format!(
            "trajectory spans {:.3e} s, shorter than the {:.3e} s settle window",
            last.t - states[0].t,
            config.settle_window
        )));
    }
    if let Some(s) = states
        .iter()
        .rev()
        .take_while(|s| s.t >= window_start)
        .find(|s| s.omega.abs() >= config.settle_omega_tol)
    {
        return Err(Error::Inconclusive(format!(
            "pointer not settled: |omega| = {:.3e} rad/s at t = {:.4} s exceeds {:.1e}",
            s.omega.abs(),
            s.t,
            config.settle_omega_tol
        )));
    }
    let settle_time = match states.iter().rposition(|s| s.omega.abs() >= config.settle_omega_tol) {
        Some(i) => states[(i + 1).min(states.len() - 1)].t,
        None => states[0].t,
    };

    let theta = last.theta;
    if theta.abs() <= READOUT_DEAD_BAND {
        return Err(Error::Inconclusive(format!(
            "equilibrium angle {theta:.3e} rad lies inside the {READOUT_DEAD_BAND:.0e} rad dead band"
        )));
    }
    let raw: Bit = if theta > 0.0 { 0 } else { 1 };
    let u: f64 = rng.random();
    let flipped = u < config.relay_noise;
    let output_bit = if flipped { 1 - raw } else { raw };

    let stride = (states.len() / SUMMARY_POINTS).max(1);
    let mut trajectory_summary: Vec<(f64, f64)> = states.iter().step_by(stride).map(|s| (s.t, s.theta)).collect();
    if trajectory_summary.last().map(|p| p.0) != Some(last.t) {
        trajectory_summary.push((last.t, last.theta));
    }

    Ok(RelayRecord {
        input_bit,
        output_bit,
        flipped,
        settle_time,
        equilibrium_angle: theta,
        trajectory_summary,
    })
}

/// Starts the balance at rest, integrates under `bit`, and reads the pointer.
pub fn relay<R: Rng + ?Sized>(config: &CavendishConfig, bit: Bit, rng: &mut R) -> Result<RelayRecord> {
    let traj = integrate_pendulum(config, PendulumState::at_rest(), bit, config.dt, config.t_max)?;
    readout(&traj, config, rng)
}
