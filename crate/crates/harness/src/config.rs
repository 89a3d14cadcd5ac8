//! Experiment configuration and its plain-text `key = value` file form.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cox_subgroup::algos::{Method, SearchOptions};
use cox_subgroup::synth::{CounterParams, NonlinearParams, SynthKind, SynthSpec};
use cox_subgroup::Region;

use crate::HarnessError;

/// Where the rows come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Csv(PathBuf),
    Synthetic(SynthSpec),
}

impl FromStr for DatasetSource {
    type Err = String;

    /// A file path, or `synth:<counter|nonlinear>[,n=..][,d=..][,seed=..]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let Some(rest) = s.strip_prefix("synth:") else {
            return Ok(DatasetSource::Csv(PathBuf::from(s)));
        };
        let mut parts = rest.split(',').map(str::trim);
        let kind = parts.next().unwrap_or_default();
        let mut n = 4000usize;
        let mut d = 2usize;
        let mut seed = 0u64;
        for part in parts.filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value in '{part}'"))?;
            let bad = |_| format!("bad value in '{part}'");
            match k.trim() {
                "n" => n = v.trim().parse().map_err(bad)?,
                "d" => d = v.trim().parse().map_err(bad)?,
                "seed" => seed = v.trim().parse().map_err(bad)?,
                other => return Err(format!("unknown synthetic option '{other}'")),
            }
        }
        let kind = match kind {
            "counter" => SynthKind::Counter(CounterParams::default()),
            "nonlinear" => SynthKind::Nonlinear(NonlinearParams {
                d,
                ..Default::default()
            }),
            other => return Err(format!("unknown synthetic dataset '{other}'")),
        };
        Ok(DatasetSource::Synthetic(SynthSpec { kind, n, seed }))
    }
}

impl fmt::Display for DatasetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSource::Csv(p) => write!(f, "{}", p.display()),
            DatasetSource::Synthetic(spec) => match &spec.kind {
                SynthKind::Counter(_) => write!(f, "synth:counter,n={},seed={}", spec.n, spec.seed),
                SynthKind::Nonlinear(p) => {
                    write!(
                        f,
                        "synth:nonlinear,n={},d={},seed={}",
                        spec.n, p.d, spec.seed
                    )
                }
                SynthKind::PlainCox { .. } => {
                    write!(f, "synth:plain,n={},seed={}", spec.n, spec.seed)
                }
            },
        }
    }
}

/// How one subgroup is picked from a method's grid in each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    /// Lowest training EPE among regions holding at least `size_filter` of
    /// the training points.
    MinTrainEpe,
    /// Highest F1 against the known truth region.
    BestF1,
}

impl FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "min-epe" | "min-train-epe" => Ok(Selection::MinTrainEpe),
            "best-f1" => Ok(Selection::BestF1),
            other => Err(format!(
                "unknown selection rule '{other}' (min-epe, best-f1)"
            )),
        }
    }
}

/// Column roles for CSV input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub time: String,
    pub event: String,
    pub adjust: Vec<String>,
    pub subgroup: Vec<String>,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self {
            time: "time".into(),
            event: "event".into(),
            adjust: Vec::new(),
            subgroup: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub columns: ColumnSpec,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub test_fraction: f64,
    pub size_filter: f64,
    pub truth_region: Option<Region>,
    pub selection: Selection,
    pub seed: u64,
    pub output: PathBuf,
    pub workers: usize,
    pub search: SearchOptions,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSource) -> Self {
        Self {
            dataset,
            columns: ColumnSpec::default(),
            methods: Method::ALL.to_vec(),
            replicates: 10,
            test_fraction: 0.2,
            size_filter: 0.10,
            truth_region: None,
            selection: Selection::MinTrainEpe,
            seed: 0,
            output: PathBuf::from("out"),
            workers: 1,
            search: SearchOptions::desk_scale(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!(
                "test fraction {} not in (0, 1)",
                self.test_fraction
            ));
        }
        if !(self.size_filter > 0.0 && self.size_filter < 1.0) {
            return bad(format!("size filter {} not in (0, 1)", self.size_filter));
        }
        if self.replicates == 0 {
            return bad("replicates must be positive".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if self.workers == 0 {
            return bad("workers must be positive".into());
        }
        let c = &self.columns;
        if c.time == c.event {
            return bad("time and event columns must differ".into());
        }
        for name in c.adjust.iter().chain(&c.subgroup) {
            if *name == c.time || *name == c.event {
                return bad(format!(
                    "column '{name}' is both a feature and the time/event column"
                ));
            }
        }
        if let DatasetSource::Csv(_) = self.dataset {
            if c.adjust.is_empty() || c.subgroup.is_empty() {
                return bad("CSV input needs adjust and subgroup columns".into());
            }
        }
        Ok(())
    }
}

/// Parses a comma-separated list of names.
pub fn parse_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(String::from)
        .collect()
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>, String> {
    if s.trim() == "all" {
        return Ok(Method::ALL.to_vec());
    }
    parse_list(s).iter().map(|m| m.parse()).collect()
}

/// Reads `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; keys are the long CLI flag names without dashes.
pub fn read_kv_file(path: &Path) -> Result<BTreeMap<String, String>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_kv(&text).map_err(HarnessError::Config)
}

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
        map.insert(
            k.trim().trim_start_matches("--").to_string(),
            v.trim().to_string(),
        );
    }
    Ok(map)
}

/// Reads a region file: one `lower upper` pair per line, one line per
/// dimension.
pub fn read_region(path: &Path) -> Result<Region, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_region(&text).map_err(HarnessError::Config)
}

pub fn parse_region(text: &str) -> Result<Region, String> {
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [lo, hi] = fields[..] else {
            return Err(format!("line {}: expected 'lower upper'", lineno + 1));
        };
        let parse = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| format!("line {}: bad number '{v}'", lineno + 1))
        };
        lower.push(parse(lo)?);
        upper.push(parse(hi)?);
    }
    Region::new(lower, upper).map_err(|e| e.to_string())
}

pub fn format_region(region: &Region) -> String {
    region
        .lower()
        .iter()
        .zip(region.upper())
        .map(|(lo, hi)| format!("{lo} {hi}\n"))
        .collect()
}
