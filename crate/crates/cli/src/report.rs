use std::fmt::Write as _;

use birsym::linalg::AbGroupInvariants;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InvariantsDoc {
    pub free_rank: usize,
    pub torsion: Vec<u64>,
}

impl From<&AbGroupInvariants> for InvariantsDoc {
    fn from(g: &AbGroupInvariants) -> Self {
        InvariantsDoc { free_rank: g.free_rank, torsion: g.torsion_u64() }
    }
}

/// The structured document every command emits. Field order is fixed by the
/// struct; `params` is a sorted map.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub params: Map<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariants: Option<InvariantsDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<Value>,
    #[serde(rename = "match", skip_serializing_if = "Option::is_none")]
    pub matches: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub results: Option<Value>,
    pub timing_ms: u128,
    pub version: String,
}

impl RunReport {
    pub fn new(command: &str, params: Map<String, Value>) -> Self {
        RunReport {
            command: command.to_string(),
            params,
            basis: None,
            invariants: None,
            expected: None,
            matches: None,
            results: None,
            timing_ms: 0,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }
}

/// Plain text rendering, one `key: value` line per field, then `lines`.
pub fn text(report: &RunReport, lines: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "command: {}", report.command);
    for (k, v) in &report.params {
        let _ = writeln!(out, "  {k}: {v}");
    }
    for l in lines {
        let _ = writeln!(out, "{l}");
    }
    if let Some(m) = report.matches {
        let _ = writeln!(out, "match: {m}");
    }
    let _ = writeln!(out, "time: {} ms", report.timing_ms);
    out
}
