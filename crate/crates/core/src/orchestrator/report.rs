use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::behavior::BehaviorTable;
use crate::causality::AuditVerdict;
use crate::error::{Error, Result};
use crate::polytope::{LocalityCertificate, Verdict};
use crate::stats::{ChshSignificance, EstimatedBehavior, Layer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: Layer,
    pub estimate: EstimatedBehavior,
    /// Tolerance the certificate was computed with: the configured floor widened
    /// by the sampling error of the estimate.
    pub membership_tolerance: f64,
    pub certificate: LocalityCertificate,
    pub significance: ChshSignificance,
    /// `z` exceeds the configured threshold.
    pub chsh_significant: bool,
}

impl LayerReport {
    pub fn verdict(&self) -> Verdict {
        self.certificate.verdict
    }
}

/// Aggregate relay diagnostics over every trial of one party.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaySummary {
    /// Trials whose pointer bit differs from the quantum outcome.
    pub flipped: u64,
    /// s
    pub max_settle_time: f64,
    /// `[min, max]` equilibrium angle (rad) reached for input bit 0 and bit 1;
    /// `None` when the bit never occurred.
    pub equilibrium_range: [Option<[f64; 2]>; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub trials: u64,
    /// The exact Born-rule behavior that trials are sampled from.
    pub quantum_behavior: BehaviorTable,
    pub quantum_layer: LayerReport,
    pub macro_layer: LayerReport,
    pub alice_relay: RelaySummary,
    pub bob_relay: RelaySummary,
    pub audit: AuditVerdict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Structured,
}

pub fn emit_report(report: &RunReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Structured => {
            let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Parse(format!("report: {e}")))?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Text => Ok(render_text(report)),
    }
}

pub fn parse_report(text: &str) -> Result<RunReport> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("report: {e}")))
}

fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::Local => "LOCAL",
        Verdict::Nonlocal => "NONLOCAL",
    }
}

fn render_layer(out: &mut String, title: &str, l: &LayerReport) {
    let c = &l.certificate;
    let s = &l.significance;
    let _ = writeln!(out, "[{title}]");
    let _ = writeln!(out, "  verdict            {}", verdict_word(c.verdict));
    let _ = writeln!(out, "  S_hat              {:+.6}", s.s_hat);
    let _ = writeln!(out, "  sigma_S            {:.6}", s.sigma_s);
    let _ = writeln!(
        out,
        "  z                  {:.3}  (significant: {})",
        s.z, l.chsh_significant
    );
    let _ = writeln!(out, "  lp distance        {:.6e}", c.distance);
    let _ = writeln!(out, "  lp tolerance       {:.6e}", l.membership_tolerance);
    let _ = writeln!(
        out,
        "  correlators        E00 {:+.5}  E01 {:+.5}  E10 {:+.5}  E11 {:+.5}",
        l.estimate.table.correlator(0, 0),
        l.estimate.table.correlator(0, 1),
        l.estimate.table.correlator(1, 0),
        l.estimate.table.correlator(1, 1)
    );
    let _ = writeln!(out, "  signaling gap      {:.3e}", l.estimate.table.signaling_gap());
}

fn render_relay(out: &mut String, who: &str, r: &RelaySummary) {
    let range = |o: &Option<[f64; 2]>| match o {
        Some([lo, hi]) => format!("[{lo:+.9e}, {hi:+.9e}]"),
        None => "n/a".to_string(),
    };
    let _ = writeln!(
        out,
        "  {who:<6} flipped {}  max settle {:.4} s  theta*(0) {}  theta*(1) {}",
        r.flipped,
        r.max_settle_time,
        range(&r.equilibrium_range[0]),
        range(&r.equilibrium_range[1])
    );
}

fn render_text(r: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Bell -> Cavendish relay run");
    let _ = writeln!(out, "  master seed        {}", r.config.master_seed);
    let _ = writeln!(out, "  trials             {}", r.trials);
    let _ = writeln!(
        out,
        "  relay noise        {}",
        r.config.effective_cavendish().relay_noise
    );
    let _ = writeln!(
        out,
        "  ideal S            {:+.9}",
        crate::polytope::chsh_value(&r.quantum_behavior)
    );
    out.push('\n');
    render_layer(&mut out, "quantum outcomes", &r.quantum_layer);
    out.push('\n');
    render_layer(&mut out, "pointer bits", &r.macro_layer);
    out.push('\n');
    let _ = writeln!(out, "[relays]");
    render_relay(&mut out, "alice", &r.alice_relay);
    render_relay(&mut out, "bob", &r.bob_relay);
    out.push('\n');
    let a = &r.audit;
    let _ = writeln!(out, "[locality audit]");
    let _ = writeln!(out, "  mode               {:?}", a.mode);
    let _ = writeln!(out, "  loophole free      {}", a.loophole_free);
    let _ = writeln!(out, "  violating pairs    {}", a.violating_pairs.len());
    for p in a.violating_pairs.iter().take(8) {
        let _ = writeln!(
            out,
            "    {} <-> {}  slack {:.3e} s",
            p.alice.label, p.bob.label, p.slack_seconds
        );
    }
    for premise in &a.premises {
        let _ = writeln!(out, "  premise            {premise}");
    }
    out
}
