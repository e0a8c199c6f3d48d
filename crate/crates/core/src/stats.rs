//! Finite-sample behavior estimates and a normal-approximation CHSH test.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::behavior::{check_bit, indices, BehaviorTable, Bit};
use crate::error::{Error, Result};
use crate::polytope::chsh_value;

/// The local bound on |S|.
pub const LOCAL_BOUND: f64 = 2.0;

/// One ledger row: settings, quantum outcomes and relayed pointer bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub x: Bit,
    pub y: Bit,
    pub a: Bit,
    pub b: Bit,
    pub a_macro: Bit,
    pub b_macro: Bit,
    pub seed: u64,
}

impl TrialRecord {
    pub fn validate(&self) -> Result<()> {
        for (name, bit) in [
            ("x", self.x),
            ("y", self.y),
            ("a", self.a),
            ("b", self.b),
            ("a_macro", self.a_macro),
            ("b_macro", self.b_macro),
        ] {
            check_bit(name, bit).map_err(|e| Error::validation(format!("trial {}: {e}", self.trial_id)))?;
        }
        Ok(())
    }

    pub fn outcomes(&self, layer: Layer) -> (Bit, Bit) {
        match layer {
            Layer::Quantum => (self.a, self.b),
            Layer::Macro => (self.a_macro, self.b_macro),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Quantum,
    Macro,
}

impl std::fmt::Display for Layer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Layer::Quantum => "quantum",
            Layer::Macro => "macro",
        })
    }
}

/// Outcome counts `[a][b][x][y]`; merging partial counts is associative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts(pub [[[[u64; 2]; 2]; 2]; 2]);

impl OutcomeCounts {
    pub fn from_records(records: &[TrialRecord], layer: Layer) -> Result<Self> {
        let mut c = OutcomeCounts::default();
        for r in records {
            r.validate()?;
            let (a, b) = r.outcomes(layer);
            c.0[a as usize][b as usize][r.x as usize][r.y as usize] += 1;
        }
        Ok(c)
    }

    pub fn merge(mut self, other: &OutcomeCounts) -> Self {
        for (a, b, x, y) in indices() {
            self.0[a][b][x][y] += other.0[a][b][x][y];
        }
        self
    }

    pub fn setting_total(&self, x: usize, y: usize) -> u64 {
        (0..4).map(|k| self.0[k >> 1][k & 1][x][y]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatedBehavior {
    pub table: BehaviorTable,
    pub counts: OutcomeCounts,
    /// `sqrt(p̂(1 − p̂)/n_xy)` per entry.
    pub stderr: [[[[f64; 2]; 2]; 2]; 2],
}

impl EstimatedBehavior {
    pub fn from_counts(counts: OutcomeCounts) -> Result<Self> {
        for x in 0..2 {
            for y in 0..2 {
                if counts.setting_total(x, y) == 0 {
                    return Err(Error::validation(format!("no records for setting cell (x={x}, y={y})")));
                }
            }
        }
        let mut p = [[[[0.0; 2]; 2]; 2]; 2];
        let mut stderr = [[[[0.0; 2]; 2]; 2]; 2];
        for (a, b, x, y) in indices() {
            let n = counts.setting_total(x, y) as f64;
            let phat = counts.0[a][b][x][y] as f64 / n;
            p[a][b][x][y] = phat;
            stderr[a][b][x][y] = (phat * (1.0 - phat) / n).sqrt();
        }
        Ok(EstimatedBehavior {
            table: BehaviorTable::new(p)?,
            counts,
            stderr,
        })
    }

    pub fn max_stderr(&self) -> f64 {
        indices()
            .map(|(a, b, x, y)| self.stderr[a][b][x][y])
            .fold(0.0, f64::max)
    }

    pub fn trials(&self) -> u64 {
        (0..4).map(|k| self.counts.setting_total(k >> 1, k & 1)).sum()
    }
}

pub fn estimate_behavior(records: &[TrialRecord], layer: Layer) -> Result<EstimatedBehavior> {
    EstimatedBehavior::from_counts(OutcomeCounts::from_records(records, layer)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshSignificance {
    pub s_hat: f64,
    pub sigma_s: f64,
    /// `(|Ŝ| − 2)/σ_S`; infinite when σ_S = 0 and |Ŝ| ≠ 2.
    #[serde(with = "nonfinite")]
    pub z: f64,
}

/// Propagates `Var(Ê_xy) = (1 − E_xy²)/n_xy` across the four independent setting cells.
pub fn chsh_significance(est: &EstimatedBehavior) -> Result<ChshSignificance> {
    let mut variance = 0.0;
    for x in 0..2 {
        for y in 0..2 {
            let n = est.counts.setting_total(x, y);
            if n == 0 {
                return Err(Error::validation(format!("zero-count setting cell (x={x}, y={y})")));
            }
            let e = est.table.correlator(x, y);
            variance += (1.0 - e * e).max(0.0) / n as f64;
        }
    }
    let s_hat = chsh_value(&est.table);
    let sigma_s = variance.sqrt();
    let excess = s_hat.abs() - LOCAL_BOUND;
    let z = if sigma_s > 0.0 {
        excess / sigma_s
    } else if excess.abs() <= 1e-12 {
        0.0
    } else {
        excess.signum() * f64::INFINITY
    };
    Ok(ChshSignificance { s_hat, sigma_s, z })
}

/// Writes `layer,quantity,a,b,x,y,estimate,stderr,count` rows: per-cell
/// probabilities, correlators, then `S` and `z`.
pub fn write_results_csv<W: Write>(writer: W, layers: &[(Layer, &EstimatedBehavior, &ChshSignificance)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Parse(format!("results csv: {e}"));
    w.write_record(["layer", "quantity", "a", "b", "x", "y", "estimate", "stderr", "count"])
        .map_err(err)?;
    for (layer, est, sig) in layers {
        let l = layer.to_string();
        for (a, b, x, y) in indices() {
            w.write_record([
                l.clone(),
                "p".into(),
                a.to_string(),
                b.to_string(),
                x.to_string(),
                y.to_string(),
                est.table.get(a, b, x, y).to_string(),
                est.stderr[a][b][x][y].to_string(),
                est.counts.0[a][b][x][y].to_string(),
            ])
            .map_err(err)?;
        }
        for x in 0..2 {
            for y in 0..2 {
                let e = est.table.correlator(x, y);
                let n = est.counts.setting_total(x, y);
                w.write_record([
                    l.clone(),
                    "E".into(),
                    String::new(),
                    String::new(),
                    x.to_string(),
                    y.to_string(),
                    e.to_string(),
                    ((1.0 - e * e).max(0.0) / n as f64).sqrt().to_string(),
                    n.to_string(),
                ])
                .map_err(err)?;
            }
        }
        let n = est.trials().to_string();
        let blank = String::new;
        w.write_record([
            l.clone(),
            "S".into(),
            blank(),
            blank(),
            blank(),
            blank(),
            sig.s_hat.to_string(),
            sig.sigma_s.to_string(),
            n.clone(),
        ])
        .map_err(err)?;
        w.write_record([
            l,
            "z".into(),
            blank(),
            blank(),
            blank(),
            blank(),
            sig.z.to_string(),
            String::new(),
            n,
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<results csv>", e))
}

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"` so
/// structured output stays valid JSON.
pub(crate) mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("expected a number, got {other:?}"))),
            },
        }
    }
}
