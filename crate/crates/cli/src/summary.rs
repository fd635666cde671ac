use std::fmt::Write as _;

use crate::output::{num, OutputFile};

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryLine {
    pub name: String,
    pub value: f64,
    pub conservative: bool,
}

/// Outcome of one experiment cell (a point of a parameter grid).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellSummary {
    pub label: String,
    /// Empirical rate per replication, in replication order.
    pub empirical: Vec<f64>,
    /// Theoretical rates of the first replication's instance.
    pub theory: Vec<TheoryLine>,
    /// Further per-cell quantities, in insertion order.
    pub values: Vec<(String, f64)>,
    pub notes: Vec<(String, String)>,
}

impl CellSummary {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            ..Self::default()
        }
    }

    pub fn theory(&mut self, name: &str, value: f64, conservative: bool) {
        self.theory.push(TheoryLine {
            name: name.to_string(),
            value,
            conservative,
        });
    }

    pub fn value(&mut self, name: &str, v: f64) {
        self.values.push((name.to_string(), v));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values
            .iter()
            .find(|(k, _)| k == name)
            .map(|&(_, v)| v)
            .or_else(|| self.theory.iter().find(|t| t.name == name).map(|t| t.value))
    }

    /// Mean of the per-replication empirical rates, summed in order.
    pub fn mean_empirical(&self) -> f64 {
        self.empirical.iter().sum::<f64>() / self.empirical.len().max(1) as f64
    }
}

/// A theory-versus-measurement comparison. Informational checks are
/// reported but never affect the exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub asserted: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSummary {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub cells: Vec<CellSummary>,
    pub checks: Vec<Check>,
    pub files: Vec<OutputFile>,
}

impl RunSummary {
    pub fn new(command: &str, config: Vec<(String, String)>) -> Self {
        Self {
            command: command.to_string(),
            config,
            ..Self::default()
        }
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            asserted: true,
            detail: detail.into(),
        });
    }

    pub fn inform(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            asserted: false,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.asserted)
    }

    pub fn cell(&self, label: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.label == label)
    }

    pub fn find_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command {}", self.command);
        for (k, v) in &self.config {
            let _ = writeln!(out, "config {k}={v}");
        }
        for cell in &self.cells {
            let _ = writeln!(out, "\ncell {}", cell.label);
            for t in &cell.theory {
                let flag = if t.conservative { " (conservative)" } else { "" };
                let _ = writeln!(out, "  theory {} = {}{flag}", t.name, num(t.value));
            }
            if !cell.empirical.is_empty() {
                let _ = writeln!(out, "  empirical mean = {}", num(cell.mean_empirical()));
                let reps: Vec<String> = cell.empirical.iter().map(|v| num(*v)).collect();
                let _ = writeln!(out, "  empirical per replication = {}", reps.join(" "));
            }
            for (k, v) in &cell.values {
                let _ = writeln!(out, "  {k} = {}", num(*v));
            }
            for (k, v) in &cell.notes {
                let _ = writeln!(out, "  {k}: {v}");
            }
        }
        out.push('\n');
        for c in &self.checks {
            let status = match (c.passed, c.asserted) {
                (true, true) => "PASS",
                (false, true) => "FAIL",
                (true, false) => "info-pass",
                (false, false) => "info-fail",
            };
            let _ = writeln!(out, "{status} {}: {}", c.name, c.detail);
        }
        let _ = writeln!(out, "\nresult {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn informational_checks_do_not_fail_a_run() {
        let mut s = RunSummary::new("x", vec![]);
        s.check("a", true, "");
        s.inform("b", false, "");
        assert!(s.passed());
        s.check("c", false, "");
        assert!(!s.passed());
        let text = s.render();
        assert!(text.contains("FAIL c"));
        assert!(text.contains("info-fail b"));
        assert!(text.ends_with("result FAIL\n"));
    }

    #[test]
    fn cell_lookup() {
        let mut c = CellSummary::new("a");
        c.theory("rate", 0.5, false);
        c.value("edge", 4.0);
        c.empirical = vec![0.2, 0.4];
        assert_eq!(c.get("rate"), Some(0.5));
        assert_eq!(c.get("edge"), Some(4.0));
        assert!((c.mean_empirical() - 0.3).abs() < 1e-15);
    }
}
