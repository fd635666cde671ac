//! Experiment commands. Each one resolves its parameters, runs seeded
//! replications in index order and returns a [`RunSummary`] holding every
//! artifact it wants written.

mod altmin;
mod gaussian;
mod glm;
mod gmm;
mod scaling;

use std::fmt;
use std::str::FromStr;

use cavi::engine::{estimate_rate, Trace};

use crate::config::{Params, RawConfig};
use crate::error::Result;
use crate::output::{mean_csv, plot_script, trace_csv, Header, OutputFile};
use crate::summary::{CellSummary, RunSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Gaussian,
    Gmm,
    Probit,
    Logit,
    Altmin,
    Scaling,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Gaussian,
        Command::Gmm,
        Command::Probit,
        Command::Logit,
        Command::Altmin,
        Command::Scaling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Gaussian => "gaussian",
            Command::Gmm => "gmm",
            Command::Probit => "probit",
            Command::Logit => "logit",
            Command::Altmin => "altmin",
            Command::Scaling => "scaling",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

/// Runs a command; unknown or invalid keys are reported before any work.
pub fn run(cmd: Command, raw: &RawConfig) -> Result<RunSummary> {
    let p = Params::new(raw);
    if let Some(family) = p.opt::<String>("family")? {
        if family != cmd.name() {
            return Err(crate::error::CliError::value(
                "family",
                format!("config is for `{family}`, command is `{cmd}`"),
            ));
        }
    }
    let mut summary = match cmd {
        Command::Gaussian => gaussian::run(&p)?,
        Command::Gmm => gmm::run(&p)?,
        Command::Probit => glm::run_probit(&p)?,
        Command::Logit => glm::run_logit(&p)?,
        Command::Altmin => altmin::run(&p)?,
        Command::Scaling => scaling::run(&p)?,
    };
    let text = summary.render();
    summary.files.push(OutputFile {
        path: "summary.txt".to_string(),
        contents: text,
    });
    Ok(summary)
}

/// What a random stream is used for within one replication.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Purpose {
    Data = 0,
    Responses = 1,
    Init = 2,
    Probe = 3,
}

/// Disjoint stream per (cell, replication, purpose).
pub(crate) fn stream(cell: usize, rep: usize, purpose: Purpose) -> u64 {
    ((cell as u64) << 40) | ((rep as u64) << 8) | purpose as u64
}

/// Fitted rate when the trace supports it, otherwise the largest recorded
/// ratio after burn-in, otherwise zero (immediate convergence).
pub(crate) fn empirical_rate(trace: &Trace, burn_in: usize) -> f64 {
    match estimate_rate(trace, burn_in) {
        Ok(est) => est.rate,
        Err(_) => trace.ratios_after(burn_in).fold(0.0, f64::max),
    }
}

pub(crate) fn max_ratio_after(trace: &Trace, burn_in: usize) -> f64 {
    trace.ratios_after(burn_in).fold(0.0, f64::max)
}

/// Collects one cell's traces and emits `rep_NNN.csv`, `mean.csv` and
/// `plot.gp` under the cell's directory.
pub(crate) struct CellFiles {
    pub dir: String,
    pub header: Header,
    traces: Vec<Trace>,
    files: Vec<OutputFile>,
}

impl CellFiles {
    pub fn new(command: &str, dir: &str, echo: &[(String, String)]) -> Self {
        let mut header = Header::default();
        header.push("command", command);
        header.push("cell", dir);
        for (k, v) in echo {
            header.push(format!("config.{k}"), v.clone());
        }
        Self {
            dir: dir.to_string(),
            header,
            traces: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn theory_from(&mut self, cell: &CellSummary) {
        for t in &cell.theory {
            self.header.theory(&t.name, t.value, t.conservative);
        }
    }

    /// Adds a replication trace written as `rep_NNN.csv`.
    pub fn push(&mut self, trace: Trace, extra: Vec<(String, String)>) {
        let name = format!("rep_{:03}.csv", self.traces.len());
        let mut extra = extra;
        extra.insert(0, ("replication".to_string(), self.traces.len().to_string()));
        self.extra_file(&name, trace_csv(&self.header, &extra, &trace));
        self.traces.push(trace);
    }

    pub fn extra_file(&mut self, name: &str, contents: String) {
        self.files.push(OutputFile {
            path: format!("{}/{name}", self.dir),
            contents,
        });
    }

    pub fn finish(mut self, cell: &CellSummary, summary: &mut RunSummary) {
        if !self.traces.is_empty() {
            let mean = mean_csv(&self.header, &self.traces);
            let start = crate::output::mean_log_w2(&self.traces)[0];
            let reps: Vec<String> = (0..self.traces.len()).map(|k| format!("rep_{k:03}.csv")).collect();
            let theory: Vec<(String, f64)> =
                cell.theory.iter().map(|t| (t.name.clone(), t.value)).collect();
            self.extra_file("mean.csv", mean);
            let plot = plot_script(&format!("{} {}", summary.command, cell.label), &reps, start, &theory);
            self.extra_file("plot.gp", plot);
        }
        summary.files.extend(self.files);
    }
}

/// Label-safe rendering of a grid value.
pub(crate) fn tag(v: f64) -> String {
    let s = format!("{v}");
    s.replace('-', "m").replace('.', "p")
}
