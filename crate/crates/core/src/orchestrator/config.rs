use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::causality::{self, AuditMode, SpacetimeEvent, EARTH_MOON_DISTANCE, SPEED_OF_LIGHT};
use crate::cavendish::CavendishConfig;
use crate::error::{Error, Result};
use crate::polytope;
use crate::quantum::{MeasurementSettings, StateSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub trials: u64,
    #[serde(default)]
    pub quantum: QuantumConfig,
    /// Shared by both parties' balances.
    #[serde(default)]
    pub cavendish: CavendishConfig,
    /// Overrides `cavendish.relay_noise` for both parties when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default)]
    pub causality: CausalityConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuantumConfig {
    #[serde(default)]
    pub state: StateSpec,
    #[serde(flatten, default)]
    pub settings: MeasurementSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleLayout {
    /// m; parties sit at ±half_separation.
    pub half_separation: f64,
    /// s; setting choice to quantum outcome.
    pub quantum_window: f64,
    /// s; setting choice to pointer readout.
    pub protocol_window: f64,
}

impl Default for ScheduleLayout {
    /// Earth–Moon baseline with a one-second protocol.
    fn default() -> Self {
        ScheduleLayout {
            half_separation: EARTH_MOON_DISTANCE / 2.0,
            quantum_window: 1e-8,
            protocol_window: 1.0,
        }
    }
}

/// Exactly one schedule source may be given; with none, the default layout is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CausalityConfig {
    pub mode: AuditMode,
    pub speed_of_light: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<ScheduleLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<SpacetimeEvent>>,
    /// CSV schedule, relative paths resolved against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule_file: Option<PathBuf>,
}

impl Default for CausalityConfig {
    fn default() -> Self {
        CausalityConfig {
            mode: AuditMode::Strict,
            speed_of_light: SPEED_OF_LIGHT,
            layout: None,
            events: None,
            schedule_file: None,
        }
    }
}

impl CausalityConfig {
    fn check_single_source(&self) -> Result<()> {
        let sources = self.layout.is_some() as u8 + self.events.is_some() as u8 + self.schedule_file.is_some() as u8;
        if sources > 1 {
            return Err(Error::validation(
                "causality: give at most one of layout, events, schedule_file",
            ));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<Vec<SpacetimeEvent>> {
        self.check_single_source()?;
        if let Some(events) = &self.events {
            return Ok(events.clone());
        }
        if let Some(path) = &self.schedule_file {
            let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
            return causality::read_schedule_csv(file);
        }
        let layout = self.layout.clone().unwrap_or_default();
        Ok(causality::standard_schedule(
            layout.half_separation,
            layout.quantum_window,
            layout.protocol_window,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Floor on the LP distance counted as local.
    pub membership_tol: f64,
    /// Estimated tables get a membership tolerance of this many max-cell stderrs.
    pub sigma_multiplier: f64,
    /// z above which the CHSH excess counts as significant.
    pub z_threshold: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            membership_tol: polytope::DEFAULT_TOL,
            sigma_multiplier: 5.0,
            z_threshold: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 0x00BE_11CA_7E57,
            trials: 100_000,
            quantum: QuantumConfig::default(),
            cavendish: CavendishConfig::default(),
            noise: None,
            causality: CausalityConfig::default(),
            tolerances: Tolerances::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Parses a TOML file; a relative `schedule_file` is resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        if let Some(file) = &config.causality.schedule_file {
            if file.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                config.causality.schedule_file = Some(base.join(file));
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::validation("trials must be at least 1"));
        }
        self.quantum.state.build()?;
        self.cavendish.validate()?;
        if let Some(noise) = self.noise {
            if !(0.0..=0.5).contains(&noise) {
                return Err(Error::validation(format!("noise must lie in [0, 0.5], got {noise}")));
            }
        }
        self.effective_cavendish().validate()?;
        let t = &self.tolerances;
        for (name, v) in [
            ("membership_tol", t.membership_tol),
            ("sigma_multiplier", t.sigma_multiplier),
            ("z_threshold", t.z_threshold),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!(
                    "tolerances.{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.causality.speed_of_light.is_finite() && self.causality.speed_of_light > 0.0) {
            return Err(Error::validation("causality.speed_of_light must be finite and > 0"));
        }
        self.causality.check_single_source()?;
        if self.causality.schedule_file.is_none() {
            causality::validate_schedule(&self.causality.schedule()?)?;
        }
        Ok(())
    }

    /// The balance configuration after applying the `noise` override.
    pub fn effective_cavendish(&self) -> CavendishConfig {
        let mut c = self.cavendish.clone();
        if let Some(noise) = self.noise {
            c.relay_noise = noise;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::from_toml_str("master_seed = 1\ntrials = 10\n").unwrap();
        assert_eq!(c.quantum.settings, MeasurementSettings::default());
        assert_eq!(c.quantum.state, StateSpec::Singlet);
        assert_eq!(c.cavendish, CavendishConfig::fast());
        assert_eq!(c.causality.schedule().unwrap().len(), 8);
    }

    #[test]
    fn full_config_parses_and_roundtrips() {
        let text = r#"
master_seed = 7
trials = 50
noise = 0.1

[quantum]
alice_angles = [0.0, 1.5707963267948966]
bob_angles = [0.7853981633974483, 2.356194490192345]
state = { kind = "werner", visibility = 0.9 }

[cavendish]
damping = 2e-4

[causality]
mode = "relaxed"
speed_of_light = 1.0
events = [
  { label = "a0", party = "alice", kind = "setting_choice", t = 0.0, position = -5.0 },
  { label = "b0", party = "bob", kind = "setting_choice", t = 0.0, position = 5.0 },
]

[tolerances]
z_threshold = 3.0
"#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.cavendish.damping, 2e-4);
        assert_eq!(c.cavendish.torsion_constant, CavendishConfig::fast().torsion_constant);
        assert_eq!(c.effective_cavendish().relay_noise, 0.1);
        assert_eq!(c.tolerances.membership_tol, polytope::DEFAULT_TOL);
        assert_eq!(c.causality.schedule().unwrap().len(), 2);
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn invalid_configs_rejected() {
        for text in [
            "master_seed = 1\ntrials = 0\n",
            "master_seed = 1\ntrials = 5\nnoise = 0.7\n",
            "master_seed = 1\ntrials = 5\n[cavendish]\nsphere_distance = 0.0\n",
            "master_seed = 1\ntrials = 5\n[quantum]\nstate = { kind = \"werner\", visibility = 2.0 }\n",
            "master_seed = 1\ntrials = 5\nbogus = 1\n",
            "master_seed = 1\ntrials = 5\n[causality]\nmode = \"strict\"\nspeed_of_light = 3e8\nschedule_file = \"x.csv\"\n[causality.layout]\nhalf_separation = 1.0\nquantum_window = 1.0\nprotocol_window = 1.0\n",
        ] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }
}
