//! Check records and verification reports.

use std::collections::BTreeMap;

use serde::Serialize;

/// One check of one scenario. Maps are ordered so the JSON is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub id: String,
    pub scenario: String,
    pub pass: bool,
    pub measured: BTreeMap<String, f64>,
    pub thresholds: BTreeMap<String, f64>,
    pub fitted: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn new(id: &str, scenario: &str) -> Self {
        Self {
            id: id.into(),
            scenario: scenario.into(),
            pass: false,
            measured: BTreeMap::new(),
            thresholds: BTreeMap::new(),
            fitted: BTreeMap::new(),
            note: None,
        }
    }

    pub fn measured(mut self, key: &str, v: f64) -> Self {
        self.measured.insert(key.into(), v);
        self
    }

    pub fn threshold(mut self, key: &str, v: f64) -> Self {
        self.thresholds.insert(key.into(), v);
        self
    }

    pub fn fitted(mut self, key: &str, v: f64) -> Self {
        self.fitted.insert(key.into(), v);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn pass(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub suite: String,
    pub checks: Vec<CheckRecord>,
    pub summary: Summary,
    pub pass: bool,
}

impl VerificationReport {
    pub fn new(suite: &str, checks: Vec<CheckRecord>) -> Self {
        let passed = checks.iter().filter(|c| c.pass).count();
        let summary = Summary { total: checks.len(), passed, failed: checks.len() - passed };
        Self { suite: suite.into(), pass: summary.failed == 0, checks, summary }
    }

    pub fn merge(suite: &str, reports: impl IntoIterator<Item = VerificationReport>) -> Self {
        Self::new(suite, reports.into_iter().flat_map(|r| r.checks).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize") + "\n"
    }

    /// One `PASS`/`FAIL` line per check.
    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                let measured: Vec<String> = c.measured.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
                format!("[{}] {}/{} {}", if c.pass { "PASS" } else { "FAIL" }, c.scenario, c.id, measured.join(" "))
            })
            .collect()
    }
}
