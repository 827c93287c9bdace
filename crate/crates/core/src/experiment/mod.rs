//! Declarative experiment files (TOML or JSON), presets, and run outputs.
//!
//! A spec holds exactly one of a `[ber]` sweep or a `[timing]` benchmark:
//!
//! ```toml
//! name = "small"
//! seed = 7
//!
//! [ber]
//! n = 8
//! k = 8
//! m = 4
//! snr_db = [0, 5, 10]
//!
//! [[ber.detectors]]
//! kind = "mmse"
//!
//! [[ber.detectors]]
//! kind = "add"
//! trajectories = 20
//! ```
//!
//! Seeds are limited to `i64::MAX` so that every spec can be written back as
//! TOML.

mod locate;
mod output;

pub use locate::{line_of, locate_json, locate_toml, DisplayPath, PathSeg};
pub use output::{
    ber_csv_bytes, read_ber_csv, run_experiment, timing_csv_bytes, write_atomic, BerCsvRow, DetectorNote,
    RunManifest, RunOutputs, BER_CSV_HEADER, TIMING_CSV_HEADER,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Constellation;
use crate::sim::config::{DetectorSpec, StoppingRule, SweepConfig};
use crate::sim::timing::{TimingConfig, MIN_REPS};

/// A spec that failed to parse or validate. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct SpecError {
    pub line: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecFormat {
    Toml,
    Json,
}

impl SpecFormat {
    /// By file extension, falling back to sniffing the first non-blank byte.
    pub fn detect(path: &Path, text: &str) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => SpecFormat::Json,
            Some(e) if e.eq_ignore_ascii_case("toml") => SpecFormat::Toml,
            _ if text.trim_start().starts_with('{') => SpecFormat::Json,
            _ => SpecFormat::Toml,
        }
    }
}

fn default_m() -> usize {
    4
}
fn default_min_bits() -> u64 {
    StoppingRule::default().min_bits
}
fn default_min_errors() -> u64 {
    StoppingRule::default().min_errors
}
fn default_max_frames() -> u64 {
    StoppingRule::default().max_frames
}
fn default_reps() -> usize {
    MIN_REPS
}
fn default_warmup() -> usize {
    2
}
fn default_timing_snr() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory; the CLI flag and environment override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// File stem for `<stem>.csv` and `<stem>.manifest.json`. Defaults to
    /// the experiment name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
}

impl OutputSpec {
    fn is_empty(&self) -> bool {
        self.dir.is_none() && self.stem.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BerSection {
    pub n: usize,
    pub k: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    pub snr_db: Vec<f64>,
    #[serde(default = "default_min_bits")]
    pub min_bits: u64,
    #[serde(default = "default_min_errors")]
    pub min_errors: u64,
    #[serde(default = "default_max_frames")]
    pub max_frames: u64,
    pub detectors: Vec<DetectorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSection {
    pub dims: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_timing_snr")]
    pub snr_db: f64,
    pub detectors: Vec<DetectorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    /// Worker threads for BER sweeps; 0 uses every core. Timing always runs
    /// on one thread.
    #[serde(default)]
    pub threads: usize,
    #[serde(default, skip_serializing_if = "OutputSpec::is_empty")]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ber: Option<BerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingSection>,
}

/// A validation problem and where it sits in the document.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub path: Vec<PathSeg>,
    pub message: String,
}

fn issue(path: &[PathSeg], message: impl Into<String>) -> Issue {
    Issue {
        path: path.to_vec(),
        message: message.into(),
    }
}

fn key(k: &str) -> PathSeg {
    PathSeg::Key(k.into())
}

/// Built-in experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 16×16 real 4-QAM BER curves: MMSE, MMSE-SIC, ML (K ≤ 8 only),
    /// ALS-20 and ADD-5/20/50.
    Fig3Desk,
    /// Single-trajectory runtime of ADD (T_iter = 1) and ALS (L_A = 1) for
    /// N = K ∈ {16, 32, 64, 128}.
    Fig4Desk,
}

impl Preset {
    pub const ALL: [Preset; 2] = [Preset::Fig3Desk, Preset::Fig4Desk];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Fig3Desk => "fig3-desk",
            Preset::Fig4Desk => "fig4-desk",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn spec(&self) -> ExperimentSpec {
        match self {
            Preset::Fig3Desk => ExperimentSpec {
                name: self.name().into(),
                seed: 20240601,
                threads: 0,
                output: OutputSpec::default(),
                ber: Some(BerSection {
                    n: 16,
                    k: 16,
                    m: 4,
                    snr_db: vec![4.0, 8.0, 12.0, 16.0, 20.0, 24.0, 28.0, 32.0],
                    min_bits: 100_000,
                    min_errors: 100,
                    max_frames: 12_500,
                    detectors: vec![
                        DetectorSpec::mmse(),
                        DetectorSpec::mmse_sic(),
                        DetectorSpec::ml(Some(8)),
                        DetectorSpec::als(20, 3),
                        DetectorSpec::add(5),
                        DetectorSpec::add(20),
                        DetectorSpec::add(50),
                    ],
                }),
                timing: None,
            },
            Preset::Fig4Desk => {
                let mut add = DetectorSpec::add(1).with_label("ADD");
                if let DetectorSpec::Add { t_iter, .. } = &mut add {
                    *t_iter = 1;
                }
                ExperimentSpec {
                    name: self.name().into(),
                    seed: 20240601,
                    threads: 1,
                    output: OutputSpec::default(),
                    ber: None,
                    timing: Some(TimingSection {
                        dims: vec![16, 32, 64, 128],
                        reps: 10,
                        warmup: 2,
                        m: 4,
                        snr_db: 10.0,
                        detectors: vec![add, DetectorSpec::als(1, 1).with_label("ALS")],
                    }),
                }
            }
        }
    }
}

impl ExperimentSpec {
    /// Parses and validates. Diagnostics carry the offending line when it
    /// can be recovered from the source.
    pub fn parse(text: &str, format: SpecFormat) -> std::result::Result<Self, SpecError> {
        let spec: Self = match format {
            SpecFormat::Toml => toml::from_str(text).map_err(|e| SpecError {
                line: e.span().map(|s| line_of(text, s.start)),
                message: e.message().trim_end().to_string(),
            })?,
            SpecFormat::Json => serde_json::from_str(text).map_err(|e| SpecError {
                line: (e.line() > 0).then_some(e.line()),
                message: strip_json_position(&e),
            })?,
        };
        if let Some(first) = spec.issues().into_iter().next() {
            let line = match format {
                SpecFormat::Toml => locate_toml(text, &first.path),
                SpecFormat::Json => locate_json(text, &first.path),
            };
            let message = if first.path.is_empty() {
                first.message
            } else {
                format!("{}: {}", DisplayPath(&first.path), first.message)
            };
            return Err(SpecError { line, message });
        }
        Ok(spec)
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, SpecError> {
        Self::parse(text, SpecFormat::Toml)
    }

    pub fn from_json_str(text: &str) -> std::result::Result<Self, SpecError> {
        Self::parse(text, SpecFormat::Json)
    }

    /// Reads a spec file; the format follows the extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::parse(&text, SpecFormat::detect(path, &text))?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("cannot write spec as TOML: {e}")))
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn stem(&self) -> &str {
        self.output.stem.as_deref().unwrap_or(&self.name)
    }

    /// Every validation problem, in document order.
    pub fn issues(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        if self.name.is_empty() {
            out.push(issue(&[key("name")], "must not be empty"));
        }
        if self.seed > i64::MAX as u64 {
            out.push(issue(&[key("seed")], "must not exceed 9223372036854775807"));
        }
        let stem = self.stem();
        if stem.is_empty() || stem.starts_with('.') || !stem.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            let at = if self.output.stem.is_some() {
                vec![key("output"), key("stem")]
            } else {
                vec![key("name")]
            };
            out.push(issue(
                &at,
                format!("{stem:?} is not a usable file stem (ASCII letters, digits, '-', '_', '.')"),
            ));
        }
        match (&self.ber, &self.timing) {
            (None, None) => out.push(issue(&[], "spec needs a [ber] or a [timing] section")),
            (Some(_), Some(_)) => out.push(issue(&[key("timing")], "a spec holds either [ber] or [timing], not both")),
            (Some(b), None) => ber_issues(b, &mut out),
            (None, Some(t)) => timing_issues(t, &mut out),
        }
        out
    }

    pub fn validate(&self) -> std::result::Result<(), SpecError> {
        match self.issues().into_iter().next() {
            None => Ok(()),
            Some(i) => Err(SpecError {
                line: None,
                message: if i.path.is_empty() {
                    i.message
                } else {
                    format!("{}: {}", DisplayPath(&i.path), i.message)
                },
            }),
        }
    }

    pub fn sweep_config(&self) -> Result<SweepConfig> {
        self.validate()?;
        let b = self
            .ber
            .as_ref()
            .ok_or_else(|| Error::invalid("spec has no [ber] section"))?;
        Ok(SweepConfig {
            n: b.n,
            k: b.k,
            m: b.m,
            snr_db: b.snr_db.clone(),
            detectors: b.detectors.clone(),
            stopping: StoppingRule {
                min_bits: b.min_bits,
                min_errors: b.min_errors,
                max_frames: b.max_frames,
            },
            master_seed: self.seed,
            threads: self.threads,
        })
    }

    pub fn timing_config(&self) -> Result<TimingConfig> {
        self.validate()?;
        let t = self
            .timing
            .as_ref()
            .ok_or_else(|| Error::invalid("spec has no [timing] section"))?;
        Ok(TimingConfig {
            dims: t.dims.clone(),
            reps: t.reps,
            warmup: t.warmup,
            m: t.m,
            snr_db: t.snr_db,
            detectors: t.detectors.clone(),
            master_seed: self.seed,
        })
    }
}

fn strip_json_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

fn constellation_issue(m: usize, at: &[PathSeg], out: &mut Vec<Issue>) -> Option<Constellation> {
    match Constellation::qam(m) {
        Ok(c) => Some(c),
        Err(e) => {
            out.push(issue(at, e.to_string()));
            None
        }
    }
}

fn roster_issues(
    detectors: &[DetectorSpec],
    c: Option<&Constellation>,
    base: &[PathSeg],
    sampling_only: bool,
    out: &mut Vec<Issue>,
) {
    let at = |i: usize| {
        let mut p = base.to_vec();
        p.push(PathSeg::Index(i));
        p
    };
    if detectors.is_empty() {
        out.push(issue(base, "detector roster is empty"));
    }
    for (i, d) in detectors.iter().enumerate() {
        if sampling_only && !matches!(d, DetectorSpec::Add { .. } | DetectorSpec::Als { .. }) {
            out.push(issue(&at(i), format!("{} cannot be timed; use add or als", d.label())));
            continue;
        }
        if let Some(c) = c {
            if let Err(e) = d.build(c) {
                out.push(issue(&at(i), e.to_string()));
            }
        }
        if let Some(j) = detectors[..i].iter().position(|o| o.label() == d.label()) {
            out.push(issue(&at(i), format!("label {} already used by entry {j}", d.label())));
        }
    }
}

fn ber_issues(b: &BerSection, out: &mut Vec<Issue>) {
    let base = [key("ber")];
    let at = |k: &str| [key("ber"), key(k)];
    if b.k == 0 {
        out.push(issue(&at("k"), "K must be at least 1"));
    }
    if b.n < b.k {
        out.push(issue(&at("n"), format!("N = {} is smaller than K = {}", b.n, b.k)));
    }
    let c = constellation_issue(b.m, &at("m"), out);
    if b.snr_db.is_empty() {
        out.push(issue(&at("snr_db"), "SNR grid is empty"));
    }
    for (i, s) in b.snr_db.iter().enumerate() {
        if s.is_nan() || *s == f64::NEG_INFINITY {
            out.push(issue(&[key("ber"), key("snr_db"), PathSeg::Index(i)], "SNR must be a number or +inf"));
        }
    }
    if b.max_frames == 0 {
        out.push(issue(&at("max_frames"), "must be positive"));
    }
    if b.max_frames > u32::MAX as u64 {
        out.push(issue(&at("max_frames"), "must fit in 32 bits"));
    }
    let mut roster = base.to_vec();
    roster.push(key("detectors"));
    roster_issues(&b.detectors, c.as_ref(), &roster, false, out);
}

fn timing_issues(t: &TimingSection, out: &mut Vec<Issue>) {
    let at = |k: &str| [key("timing"), key(k)];
    if t.dims.is_empty() {
        out.push(issue(&at("dims"), "dimension grid is empty"));
    }
    if t.dims.contains(&0) {
        out.push(issue(&at("dims"), "dimensions must be positive"));
    }
    if t.reps < MIN_REPS {
        out.push(issue(&at("reps"), format!("needs at least {MIN_REPS} repetitions")));
    }
    if !t.snr_db.is_finite() {
        out.push(issue(&at("snr_db"), "must be finite"));
    }
    let c = constellation_issue(t.m, &at("m"), out);
    roster_issues(&t.detectors, c.as_ref(), &at("detectors"), true, out);
}
