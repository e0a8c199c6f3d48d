//! Locality-loophole audits over 1-D spacetime schedules.
//!
//! Strict mode requires every Alice event to be spacelike-separated from every
//! Bob event, relay and readout included. Relaxed mode only requires it for the
//! quantum stage (setting choices and quantum outcomes) and takes the autonomy of
//! the local classical dynamics as a premise.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// m/s
pub const SPEED_OF_LIGHT: f64 = 2.998e8;
/// Mean Earth–Moon distance, m.
pub const EARTH_MOON_DISTANCE: f64 = 3.84e8;

pub const RELAXED_PREMISE: &str =
    "local classical dynamics after each quantum outcome are not influenced by distant operations (assumed, not checked)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Alice,
    Bob,
    Source,
}

/// Protocol step; the declaration order is the required time order per party.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SettingChoice,
    QuantumOutcome,
    RelayStart,
    PointerReadout,
}

impl EventKind {
    fn quantum_stage(self) -> bool {
        matches!(self, EventKind::SettingChoice | EventKind::QuantumOutcome)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacetimeEvent {
    pub label: String,
    pub party: Party,
    pub kind: EventKind,
    /// s
    pub t: f64,
    /// m, along the separation axis
    pub position: f64,
}

impl SpacetimeEvent {
    pub fn new(label: impl Into<String>, party: Party, kind: EventKind, t: f64, position: f64) -> Self {
        SpacetimeEvent {
            label: label.into(),
            party,
            kind,
            t,
            position,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditMode {
    Strict,
    Relaxed,
}

impl std::str::FromStr for AuditMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(AuditMode::Strict),
            "relaxed" => Ok(AuditMode::Relaxed),
            other => Err(Error::validation(format!(
                "unknown audit mode {other:?} (expected strict or relaxed)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolatingPair {
    pub alice: SpacetimeEvent,
    pub bob: SpacetimeEvent,
    /// `|Δt| − |Δx|/c`, s; non-negative for a violation.
    pub slack_seconds: f64,
    /// `c|Δt| − |Δx|`, m.
    pub slack_meters: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub mode: AuditMode,
    pub speed_of_light: f64,
    pub loophole_free: bool,
    pub violating_pairs: Vec<ViolatingPair>,
    /// Assumptions the verdict rests on but cannot check.
    pub premises: Vec<String>,
}

/// Distance light covers during `window`.
pub fn required_separation(window: f64, c: f64) -> Result<f64> {
    if !(window.is_finite() && window > 0.0) {
        return Err(Error::validation(format!(
            "operational window must be finite and > 0, got {window}"
        )));
    }
    check_c(c)?;
    Ok(c * window)
}

fn check_c(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "speed of light must be finite and > 0, got {c}"
        )))
    }
}

/// Checks finiteness and that, per party, each kind's events precede every
/// event of a later kind.
pub fn validate_schedule(events: &[SpacetimeEvent]) -> Result<()> {
    for e in events {
        if !(e.t.is_finite() && e.position.is_finite()) {
            return Err(Error::validation(format!(
                "event {:?} has non-finite coordinates",
                e.label
            )));
        }
    }
    for party in [Party::Alice, Party::Bob] {
        let own: Vec<&SpacetimeEvent> = events.iter().filter(|e| e.party == party).collect();
        for early in &own {
            for late in &own {
                if early.kind < late.kind && early.t > late.t {
                    return Err(Error::validation(format!(
                        "{party:?} event {:?} ({:?} at t = {}) comes after {:?} ({:?} at t = {})",
                        early.label, early.kind, early.t, late.label, late.kind, late.t
                    )));
                }
            }
        }
    }
    Ok(())
}

pub fn audit_schedule(events: &[SpacetimeEvent], mode: AuditMode, c: f64) -> Result<AuditVerdict> {
    check_c(c)?;
    validate_schedule(events)?;
    let in_scope = |e: &&SpacetimeEvent| mode == AuditMode::Strict || e.kind.quantum_stage();
    let alice: Vec<&SpacetimeEvent> = events
        .iter()
        .filter(|e| e.party == Party::Alice)
        .filter(in_scope)
        .collect();
    let bob: Vec<&SpacetimeEvent> = events
        .iter()
        .filter(|e| e.party == Party::Bob)
        .filter(in_scope)
        .collect();

    let mut violating_pairs = Vec::new();
    for a in &alice {
        for b in &bob {
            let dt = (a.t - b.t).abs();
            let dx = (a.position - b.position).abs();
            if dx <= c * dt {
                violating_pairs.push(ViolatingPair {
                    alice: (*a).clone(),
                    bob: (*b).clone(),
                    slack_seconds: dt - dx / c,
                    slack_meters: c * dt - dx,
                });
            }
        }
    }
    let premises = match mode {
        AuditMode::Strict => Vec::new(),
        AuditMode::Relaxed => vec![RELAXED_PREMISE.to_string()],
    };
    Ok(AuditVerdict {
        mode,
        speed_of_light: c,
        loophole_free: violating_pairs.is_empty(),
        violating_pairs,
        premises,
    })
}

/// Alice at `−half_separation`, Bob at `+half_separation`; both choose at t = 0,
/// obtain the quantum outcome and start the relay at `quantum_window`, and read
/// the pointer at `protocol_window`.
pub fn standard_schedule(half_separation: f64, quantum_window: f64, protocol_window: f64) -> Vec<SpacetimeEvent> {
    let mut events = Vec::with_capacity(8);
    for (party, name, x) in [
        (Party::Alice, "alice", -half_separation),
        (Party::Bob, "bob", half_separation),
    ] {
        events.push(SpacetimeEvent::new(
            format!("{name}_setting"),
            party,
            EventKind::SettingChoice,
            0.0,
            x,
        ));
        events.push(SpacetimeEvent::new(
            format!("{name}_outcome"),
            party,
            EventKind::QuantumOutcome,
            quantum_window,
            x,
        ));
        events.push(SpacetimeEvent::new(
            format!("{name}_relay"),
            party,
            EventKind::RelayStart,
            quantum_window,
            x,
        ));
        events.push(SpacetimeEvent::new(
            format!("{name}_readout"),
            party,
            EventKind::PointerReadout,
            protocol_window,
            x,
        ));
    }
    events
}

/// Reads `label,party,kind,t,position` records with a header row.
pub fn read_schedule_csv<R: Read>(reader: R) -> Result<Vec<SpacetimeEvent>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Parse(format!("schedule: {e}"))))
        .collect()
}

pub fn write_schedule_csv<W: Write>(events: &[SpacetimeEvent], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in events {
        w.serialize(e).map_err(|e| Error::Parse(format!("schedule: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("<schedule csv>", e))
}
