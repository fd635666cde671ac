//! Deterministic text artifacts: per-replication traces, averaged traces,
//! plot scripts and the run summary.

use std::fmt::Write as _;
use std::path::Path;

use cavi::engine::Trace;

use crate::error::{CliError, Result};

/// A file to be written, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub path: String,
    pub contents: String,
}

/// Seventeen significant digits.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Header lines shared by the CSV files of one cell.
#[derive(Debug, Clone, Default)]
pub struct Header {
    pub lines: Vec<(String, String)>,
}

impl Header {
    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.lines.push((key.into(), value.into()));
    }

    pub fn theory(&mut self, name: &str, value: f64, conservative: bool) {
        self.push(format!("theory.{name}"), num(value));
        self.push(format!("theory.{name}.conservative"), conservative.to_string());
    }

    fn render(&self, out: &mut String) {
        for (k, v) in &self.lines {
            let _ = writeln!(out, "# {k}={v}");
        }
    }
}

pub fn trace_csv(header: &Header, extra: &[(String, String)], trace: &Trace) -> String {
    let mut out = String::new();
    header.render(&mut out);
    for (k, v) in extra {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str("iter,w2,log_w2,ratio\n");
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.iter,
            num(r.w2),
            num(r.log_w2),
            num(r.ratio.unwrap_or(f64::NAN))
        );
    }
    out
}

/// Mean of `log W2` across replications, in replication order, each trace
/// padded at its own floor.
pub fn mean_log_w2(traces: &[Trace]) -> Vec<f64> {
    let len = traces.iter().map(|t| t.records.len()).max().unwrap_or(0);
    let mut mean = vec![0.0; len];
    for t in traces {
        let floor = t.floor.ln();
        for (k, m) in mean.iter_mut().enumerate() {
            let v = t.records.get(k).map_or(floor, |r| r.log_w2.max(floor));
            *m += v;
        }
    }
    let n = traces.len().max(1) as f64;
    mean.iter().map(|m| m / n).collect()
}

pub fn mean_csv(header: &Header, traces: &[Trace]) -> String {
    let mut out = String::new();
    header.render(&mut out);
    let _ = writeln!(out, "# replications={}", traces.len());
    out.push_str("iter,mean_log_w2\n");
    for (k, m) in mean_log_w2(traces).iter().enumerate() {
        let _ = writeln!(out, "{k},{}", num(*m));
    }
    out
}

/// Gnuplot script overlaying replications, their mean, and one line of
/// slope `log r` per theoretical rate.
pub fn plot_script(title: &str, reps: &[String], mean_start: f64, theory: &[(String, f64)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# gnuplot script; run from this directory");
    out.push_str("set datafile separator ','\nset datafile commentschars '#'\n");
    let _ = writeln!(out, "set title '{title}'");
    out.push_str("set xlabel 'iteration'\nset ylabel 'log W2'\nset key top right\n");
    let mut terms: Vec<String> = reps
        .iter()
        .map(|f| format!("'{f}' using 1:3 with lines lc rgb '#c0c0c0' notitle"))
        .collect();
    terms.push("'mean.csv' using 1:2 with lines lw 2 lc rgb '#000000' title 'mean'".to_string());
    for (name, rate) in theory {
        if *rate > 0.0 {
            terms.push(format!(
                "{} + x * {} with lines dt 2 title '{name}'",
                num(mean_start),
                num(rate.ln())
            ));
        }
    }
    let _ = writeln!(out, "plot {}", terms.join(", \\\n     "));
    out
}

pub fn write_all(dir: &Path, files: &[OutputFile]) -> Result<()> {
    for f in files {
        let path = dir.join(&f.path);
        let io = |source| CliError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        std::fs::write(&path, &f.contents).map_err(io)?;
    }
    Ok(())
}
