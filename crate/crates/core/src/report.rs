//! Check records and scenario reports.

use serde::Serialize;

/// Outcome of one verification step.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub anchor: String,
    pub max_residual: f64,
    pub dims: Vec<usize>,
    pub passed: bool,
    pub detail: String,
}

impl CheckRecord {
    /// Passes iff `residual < tol`.
    pub fn residual(name: &str, anchor: &str, residual: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            max_residual: residual,
            dims: Vec::new(),
            passed: residual < tol,
            detail: String::new(),
        }
    }

    /// Passes iff `got == want` entrywise.
    pub fn dims(name: &str, anchor: &str, got: Vec<usize>, want: &[usize]) -> Self {
        let passed = got == want;
        let detail = if passed { String::new() } else { format!("expected {want:?}") };
        Self {
            name: name.into(),
            anchor: anchor.into(),
            max_residual: 0.0,
            dims: got,
            passed,
            detail,
        }
    }

    pub fn flag(name: &str, anchor: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            max_residual: 0.0,
            dims: Vec::new(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn with_dims(mut self, dims: Vec<usize>) -> Self {
        self.dims = dims;
        self
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn with_residual(mut self, residual: f64) -> Self {
        self.max_residual = residual;
        self
    }

    /// Same record, required to fail (negative controls).
    pub fn expect_failure(mut self) -> Self {
        self.passed = !self.passed;
        self.name = format!("{} [must fail]", self.name);
        self
    }
}

pub fn all_passed(records: &[CheckRecord]) -> bool {
    records.iter().all(|r| r.passed)
}

pub fn max_residual(records: &[CheckRecord]) -> f64 {
    records.iter().map(|r| r.max_residual).fold(0.0, f64::max)
}

/// Full output of a scenario run.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub tolerance: f64,
    pub notes: Vec<String>,
    pub records: Vec<CheckRecord>,
    pub passed: bool,
}

impl Report {
    pub fn new(scenario: &str, seed: u64, tolerance: f64) -> Self {
        Self {
            scenario: scenario.into(),
            seed,
            tolerance,
            notes: Vec::new(),
            records: Vec::new(),
            passed: true,
        }
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = CheckRecord>) {
        for r in records {
            self.passed &= r.passed;
            self.records.push(r);
        }
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "scenario {} (seed {}, tol {:e})\n",
            self.scenario, self.seed, self.tolerance
        );
        for n in &self.notes {
            out.push_str(&format!("  note: {n}\n"));
        }
        for r in &self.records {
            out.push_str(&format!(
                "  [{}] {} ({}) residual {:.3e}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.anchor,
                r.max_residual
            ));
            if !r.dims.is_empty() {
                out.push_str(&format!(" dims {:?}", r.dims));
            }
            if !r.detail.is_empty() {
                out.push_str(&format!(" - {}", r.detail));
            }
            out.push('\n');
        }
        let failed = self.records.iter().filter(|r| !r.passed).count();
        out.push_str(&format!(
            "{}: {} checks, {} failed\n",
            if self.passed { "PASS" } else { "FAIL" },
            self.records.len(),
            failed
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_threshold() {
        assert!(CheckRecord::residual("a", "x", 1e-12, 1e-9).passed);
        assert!(!CheckRecord::residual("a", "x", 1e-3, 1e-9).passed);
        let neg = CheckRecord::residual("a", "x", 1e-3, 1e-9).expect_failure();
        assert!(neg.passed);
    }

    #[test]
    fn report_tracks_failures() {
        let mut rep = Report::new("t", 1, 1e-9);
        rep.extend([CheckRecord::dims("d", "x", vec![1, 2], &[1, 2])]);
        assert!(rep.passed);
        rep.extend([CheckRecord::dims("d", "x", vec![1], &[2])]);
        assert!(!rep.passed);
        assert!(rep.to_text().contains("FAIL"));
        assert!(rep.to_json().contains("\"seed\": 1"));
    }
}
