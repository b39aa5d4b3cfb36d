//! Deterministic run reports in a human text form and a line-oriented
//! `key=value` machine form.
//!
//! Every numeric entry carries its radius or an exact tag. Two runs with
//! identical inputs render byte-identically except for the trailing
//! wall-clock line; floats print in Rust's shortest round-trip form so the
//! promise is checkable with a byte diff.

use crate::certified::CertifiedValue;
use crate::rates::{CriterionReport, Verdict};
use std::fmt::Write as _;
use std::time::Instant;

/// Output shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    /// Readable lines with a summary.
    Text,
    /// One `key=value` record per line.
    Machine,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "text" => Ok(Format::Text),
            "machine" => Ok(Format::Machine),
            other => Err(format!("unknown format {other:?}, expected text or machine")),
        }
    }
}

/// One report entry.
#[derive(Clone, Debug)]
enum Value {
    Certified(CertifiedValue),
    Exact(f64),
    Int(i64),
    Text(String),
    Check(bool),
}

/// Accumulated results of one command run.
#[derive(Debug)]
pub struct Report {
    command: String,
    model: String,
    entries: Vec<(String, Value)>,
    failures: usize,
    started: Instant,
}

impl Report {
    /// Starts a report; the wall clock begins here.
    pub fn new(command: &str, model: &str) -> Self {
        Report {
            command: command.to_string(),
            model: model.to_string(),
            entries: Vec::new(),
            failures: 0,
            started: Instant::now(),
        }
    }

    /// Records a value with its radius.
    pub fn certified(&mut self, key: &str, v: CertifiedValue) {
        self.entries.push((key.to_string(), Value::Certified(v)));
    }

    /// Records an exact numeric.
    pub fn exact(&mut self, key: &str, v: f64) {
        self.entries.push((key.to_string(), Value::Exact(v)));
    }

    /// Records a count.
    pub fn int(&mut self, key: &str, v: i64) {
        self.entries.push((key.to_string(), Value::Int(v)));
    }

    /// Records a string.
    pub fn text(&mut self, key: &str, v: &str) {
        self.entries.push((key.to_string(), Value::Text(v.to_string())));
    }

    /// Records a pass/fail check and counts the failure.
    pub fn check(&mut self, key: &str, pass: bool) -> bool {
        if !pass {
            self.failures += 1;
        }
        self.entries.push((key.to_string(), Value::Check(pass)));
        pass
    }

    /// Records a criterion verdict with its margin or reason.
    ///
    /// Only a certified violation counts as a failure; inconclusive and
    /// inapplicable outcomes are recorded but do not fail the run.
    pub fn criterion(&mut self, r: &CriterionReport) {
        let key = format!("criterion.{}", r.name);
        self.text(&key, r.verdict.tag());
        match &r.verdict {
            Verdict::Holds { margin } => self.exact(&format!("{key}.margin"), *margin),
            Verdict::Fails { witness } => {
                self.failures += 1;
                self.text(&format!("{key}.witness"), witness);
            }
            Verdict::Inconclusive { detail } => self.text(&format!("{key}.detail"), detail),
            Verdict::Inapplicable { reason } => self.text(&format!("{key}.reason"), reason),
        }
    }

    /// Failed checks so far.
    pub fn failures(&self) -> usize {
        self.failures
    }

    /// Process exit code: 0 when every check passed.
    pub fn exit_code(&self) -> i32 {
        if self.failures == 0 {
            0
        } else {
            1
        }
    }

    /// Renders the report.
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Machine => self.render_machine(),
            Format::Text => self.render_text(),
        }
    }

    fn render_machine(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command={}", self.command);
        let _ = writeln!(out, "model={}", self.model);
        for (key, v) in &self.entries {
            match v {
                Value::Certified(c) => {
                    let _ = writeln!(out, "{key}={}", c.value);
                    if c.radius == 0.0 {
                        let _ = writeln!(out, "{key}.exact=true");
                    } else {
                        let _ = writeln!(out, "{key}.radius={}", c.radius);
                    }
                }
                Value::Exact(x) => {
                    let _ = writeln!(out, "{key}={x}");
                    let _ = writeln!(out, "{key}.exact=true");
                }
                Value::Int(n) => {
                    let _ = writeln!(out, "{key}={n}");
                }
                Value::Text(s) => {
                    let _ = writeln!(out, "{key}={s}");
                }
                Value::Check(pass) => {
                    let _ = writeln!(out, "{key}={}", if *pass { "pass" } else { "fail" });
                }
            }
        }
        let _ = writeln!(out, "failures={}", self.failures);
        let _ = writeln!(out, "elapsed-ms={}", self.started.elapsed().as_millis());
        out
    }

    fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {} on {}", self.command, self.model);
        for (key, v) in &self.entries {
            match v {
                Value::Certified(c) => {
                    if c.radius == 0.0 {
                        let _ = writeln!(out, "  {key}: {} exact", c.value);
                    } else {
                        let _ = writeln!(out, "  {key}: {} +-{}", c.value, c.radius);
                    }
                }
                Value::Exact(x) => {
                    let _ = writeln!(out, "  {key}: {x} exact");
                }
                Value::Int(n) => {
                    let _ = writeln!(out, "  {key}: {n}");
                }
                Value::Text(s) => {
                    let _ = writeln!(out, "  {key}: {s}");
                }
                Value::Check(pass) => {
                    let _ = writeln!(out, "  {key}: {}", if *pass { "pass" } else { "FAIL" });
                }
            }
        }
        let _ = writeln!(
            out,
            "# {} checks failed, {} ms",
            self.failures,
            self.started.elapsed().as_millis()
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut r = Report::new("rates", "markov");
        r.certified("var.0", CertifiedValue::new(0.3, 1e-12, 4));
        r.certified("var.1", CertifiedValue::exact(0.0));
        r.exact("row-sum", 0.3);
        r.int("probes", 16);
        r.check("row-sum-below-one", true);
        r
    }

    #[test]
    fn machine_lines_tag_every_numeric() {
        let text = sample().render(Format::Machine);
        for line in text.lines() {
            assert!(line.contains('='), "not key=value: {line}");
        }
        assert!(text.contains("var.0=0.3\n"));
        assert!(text.contains("var.0.radius=0.000000000001"));
        assert!(text.contains("var.1.exact=true"));
        assert!(text.contains("row-sum.exact=true"));
        assert!(text.contains("row-sum-below-one=pass"));
    }

    #[test]
    fn reports_are_deterministic_except_the_clock() {
        let strip = |s: String| -> String {
            s.lines()
                .filter(|l| !l.contains("elapsed-ms") && !l.ends_with("ms"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let a = strip(sample().render(Format::Machine));
        let b = strip(sample().render(Format::Machine));
        assert_eq!(a, b);
        let ta = strip(sample().render(Format::Text));
        let tb = strip(sample().render(Format::Text));
        assert_eq!(ta, tb);
    }

    #[test]
    fn failed_checks_flip_the_exit_code() {
        let mut r = sample();
        assert_eq!(r.exit_code(), 0);
        r.check("broken", false);
        assert_eq!(r.exit_code(), 1);
        assert_eq!(r.failures(), 1);
        assert!(r.render(Format::Text).contains("FAIL"));
    }

    #[test]
    fn criterion_verdicts_map_to_entries() {
        let mut r = Report::new("criteria", "m");
        r.criterion(&CriterionReport {
            name: "harris".into(),
            verdict: Verdict::Holds { margin: 0.5 },
            trajectory: vec![],
            notes: vec![],
        });
        r.criterion(&CriterionReport {
            name: "dobrushin".into(),
            verdict: Verdict::Inconclusive {
                detail: "row sum not below one".into(),
            },
            trajectory: vec![],
            notes: vec![],
        });
        let text = r.render(Format::Machine);
        assert!(text.contains("criterion.harris=holds"));
        assert!(text.contains("criterion.harris.margin=0.5"));
        assert!(text.contains("criterion.dobrushin=inconclusive"));
        assert_eq!(r.exit_code(), 0, "inconclusive does not fail the run");
    }
}
