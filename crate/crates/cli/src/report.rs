//! Run reports: a deterministic JSON body plus a human-readable table.
//! Wall time is carried outside the body so identical runs produce
//! byte-identical bodies.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageResult {
    pub name: String,
    pub pass: bool,
    pub details: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBody {
    pub command: String,
    pub fixture: String,
    pub seed: u64,
    pub stages: Vec<StageResult>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub report: ReportBody,
    pub wall_ms: u128,
}

impl RunReport {
    pub fn new(command: &str, fixture: &str, seed: u64) -> RunReport {
        RunReport {
            report: ReportBody {
                command: command.to_string(),
                fixture: fixture.to_string(),
                seed,
                stages: Vec::new(),
                pass: true,
            },
            wall_ms: 0,
        }
    }

    pub fn stage(&mut self, name: &str, pass: bool, details: Value) {
        self.report.pass &= pass;
        self.report.stages.push(StageResult { name: name.to_string(), pass, details });
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    /// Text table, one row per stage.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "command: {}   fixture: {}   seed: {}\n",
            self.report.command, self.report.fixture, self.report.seed
        ));
        out.push_str(&format!("{:<34} {:<6} details\n", "stage", "pass"));
        out.push_str(&format!("{:-<34} {:-<6} {:-<30}\n", "", "", ""));
        for s in &self.report.stages {
            let detail = compact_value(&s.details);
            out.push_str(&format!(
                "{:<34} {:<6} {}\n",
                s.name,
                if s.pass { "ok" } else { "FAIL" },
                detail
            ));
        }
        out.push_str(&format!(
            "overall: {}   ({} ms)\n",
            if self.report.pass { "PASS" } else { "FAIL" },
            self.wall_ms
        ));
        out
    }
}

fn compact_value(v: &Value) -> String {
    let s = serde_json::to_string(v).unwrap_or_default();
    if s.len() > 120 {
        format!("{}…", &s[..119])
    } else {
        s
    }
}
