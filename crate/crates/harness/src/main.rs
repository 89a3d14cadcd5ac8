use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cox_subgroup::algos::{run_method, Method, MethodConfig, SearchOptions};
use cox_subgroup::metrics::region_f1;
use cox_subgroup_harness::config::{
    format_region, parse_list, parse_methods, read_kv_file, read_region, DatasetSource,
    ExperimentConfig, Selection,
};
use cox_subgroup_harness::sweep::{evaluate_region, run_sweep, RunRecord};
use cox_subgroup_harness::{ingest, load_dataset, report, HarnessError};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "coxsg",
    version,
    about = "Subgroup discovery for Cox survival models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV plus its truth-region file.
    Gen {
        /// `synth:counter|nonlinear[,n=N][,d=D][,seed=S]`
        #[arg(long)]
        dataset: String,
        /// Output directory; receives `data.csv` and `truth.txt`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one method with one hyperparameter setting on the whole dataset.
    Discover {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        method: String,
        /// Hyperparameters as `key=value;key=value`; missing keys take the
        /// first grid value.
        #[arg(long, default_value = "")]
        params: String,
    },
    /// Full protocol: replicated splits, grid sweeps, selection, reports.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Score a saved region and coefficient vector on a dataset.
    Evaluate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Region file, one `lower upper` line per subgroup feature.
        #[arg(long)]
        region: PathBuf,
        /// Coefficient file, one value per line.
        #[arg(long)]
        beta: PathBuf,
    },
}

/// Experiment settings. Each flag may also be given as `key = value` in the
/// `--config` file; the command line wins.
#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV path or `synth:counter|nonlinear[,n=N][,d=D][,seed=S]`.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    time_col: Option<String>,
    #[arg(long)]
    event_col: Option<String>,
    /// Comma-separated covariates of the Cox model.
    #[arg(long)]
    adjust_cols: Option<String>,
    /// Comma-separated features that define regions.
    #[arg(long)]
    subgroup_cols: Option<String>,
    /// Comma-separated method names, or `all`.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    #[arg(long)]
    test_frac: Option<String>,
    #[arg(long)]
    size_filter: Option<String>,
    #[arg(long)]
    truth_region: Option<PathBuf>,
    /// `min-epe` (default) or `best-f1`.
    #[arg(long)]
    selection: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<String>,
    /// Disable the desk-scale search budgets.
    #[arg(long)]
    exhaustive: bool,
}

const CONFIG_KEYS: [&str; 15] = [
    "dataset",
    "time-col",
    "event-col",
    "adjust-cols",
    "subgroup-cols",
    "methods",
    "replicates",
    "test-frac",
    "size-filter",
    "truth-region",
    "selection",
    "seed",
    "out",
    "workers",
    "exhaustive",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
    v.parse()
        .map_err(|_| HarnessError::Config(format!("bad value '{v}' for {key}")))
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let file: BTreeMap<String, String> = match &self.config {
            Some(path) => read_kv_file(path)?,
            None => BTreeMap::new(),
        };
        if let Some(k) = file.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(HarnessError::Config(format!(
                "unknown key '{k}' in config file"
            )));
        }
        let path_str = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let get = |key: &str, cli: Option<String>| cli.or_else(|| file.get(key).cloned());

        let dataset = get("dataset", self.dataset.clone())
            .ok_or_else(|| HarnessError::Config("--dataset is required".into()))?;
        let mut cfg = ExperimentConfig::new(dataset.parse().map_err(HarnessError::Config)?);
        if let Some(v) = get("time-col", self.time_col.clone()) {
            cfg.columns.time = v;
        }
        if let Some(v) = get("event-col", self.event_col.clone()) {
            cfg.columns.event = v;
        }
        if let Some(v) = get("adjust-cols", self.adjust_cols.clone()) {
            cfg.columns.adjust = parse_list(&v);
        }
        if let Some(v) = get("subgroup-cols", self.subgroup_cols.clone()) {
            cfg.columns.subgroup = parse_list(&v);
        }
        if let Some(v) = get("methods", self.methods.clone()) {
            cfg.methods = parse_methods(&v).map_err(HarnessError::Config)?;
        }
        if let Some(v) = get("replicates", self.replicates.clone()) {
            cfg.replicates = parse_num("replicates", &v)?;
        }
        if let Some(v) = get("test-frac", self.test_frac.clone()) {
            cfg.test_fraction = parse_num("test-frac", &v)?;
        }
        if let Some(v) = get("size-filter", self.size_filter.clone()) {
            cfg.size_filter = parse_num("size-filter", &v)?;
        }
        if let Some(v) = get("truth-region", path_str(&self.truth_region)) {
            cfg.truth_region = Some(read_region(Path::new(&v))?);
        }
        if let Some(v) = get("selection", self.selection.clone()) {
            cfg.selection = v.parse::<Selection>().map_err(HarnessError::Config)?;
        }
        if let Some(v) = get("seed", self.seed.clone()) {
            cfg.seed = parse_num("seed", &v)?;
        }
        if let Some(v) = get("out", path_str(&self.out)) {
            cfg.output = PathBuf::from(v);
        }
        if let Some(v) = get("workers", self.workers.clone()) {
            cfg.workers = parse_num("workers", &v)?;
        }
        let exhaustive = self.exhaustive
            || file
                .get("exhaustive")
                .map(|v| parse_num::<bool>("exhaustive", v))
                .transpose()?
                .unwrap_or(false);
        if exhaustive {
            cfg.search = SearchOptions::default();
        }
        // Synthetic data names its own columns.
        if let DatasetSource::Synthetic(spec) = &cfg.dataset {
            let d = match &spec.kind {
                cox_subgroup::synth::SynthKind::Counter(_) => 1,
                cox_subgroup::synth::SynthKind::Nonlinear(p) => p.d,
                cox_subgroup::synth::SynthKind::PlainCox { beta, .. } => beta.len(),
            };
            cfg.columns = ingest::synthetic_columns(d);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_beta(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.split_whitespace()
        .map(|v| parse_num("beta", v))
        .collect()
}

fn gen(dataset: &str, out: &Path) -> Result<(), HarnessError> {
    let DatasetSource::Synthetic(spec) = dataset.parse().map_err(HarnessError::Config)? else {
        return Err(HarnessError::Config("gen needs a synth: dataset".into()));
    };
    let (data, truth) = spec.generate()?;
    create_dir(out)?;
    ingest::write_csv(&out.join("data.csv"), &data)?;
    if let Some(t) = truth {
        write_text(&out.join("truth.txt"), &format_region(&t))?;
    }
    println!("wrote {} rows to {}", data.n(), out.display());
    Ok(())
}

fn discover(exp: &ExperimentArgs, method: &str, params: &str) -> Result<(), HarnessError> {
    let cfg = exp.resolve()?;
    let method: Method = method.parse().map_err(HarnessError::Config)?;
    let mc = MethodConfig::parse(method, params).map_err(HarnessError::Config)?;
    let (data, truth) = load_dataset(&cfg)?;
    let result = run_method(&data, mc);
    let mut rec = RunRecord::empty(method.name(), &mc.to_string(), 0);
    rec.region = result.region.clone();
    rec.beta = result.model.as_ref().map(|m| m.beta.clone());
    rec.n_train_in_region = result.n_in_region;
    rec.size_fraction = result.n_in_region as f64 / data.n() as f64;
    rec.train_epe = result.train_epe;
    rec.failed = result.failed.clone();
    if let (Some(region), Some(truth)) = (&result.region, &truth) {
        if let Ok(s) = region_f1(region, truth, &data.bounding_box()) {
            (rec.f1, rec.precision, rec.recall) = (Some(s.f1), Some(s.precision), Some(s.recall));
        }
    }
    create_dir(&cfg.output)?;
    if let Some(region) = &result.region {
        write_text(&cfg.output.join("region.txt"), &format_region(region))?;
    }
    if let Some(model) = &result.model {
        let text: String = model.beta.iter().map(|b| format!("{b}\n")).collect();
        write_text(&cfg.output.join("beta.txt"), &text)?;
    }
    let line = report::to_ndjson(std::slice::from_ref(&rec));
    write_text(&cfg.output.join("discover.ndjson"), &line)?;
    print!("{line}");
    Ok(())
}

fn sweep(exp: &ExperimentArgs) -> Result<(), HarnessError> {
    let cfg = exp.resolve()?;
    let (data, truth) = load_dataset(&cfg)?;
    let output = run_sweep(&cfg, &data, truth.as_ref())?;
    for r in output.selected.iter().filter(|r| r.region.is_none()) {
        eprintln!(
            "{} replicate {}: no eligible subgroup",
            r.method, r.replicate
        );
    }
    let summaries = report::write_reports(&cfg.output, &output, &cfg.methods)?;
    print!("{}", report::summary_table(&summaries));
    Ok(())
}

fn evaluate(exp: &ExperimentArgs, region: &Path, beta: &Path) -> Result<(), HarnessError> {
    let cfg = exp.resolve()?;
    let (data, truth) = load_dataset(&cfg)?;
    let region = read_region(region)?;
    let beta = read_beta(beta)?;
    if region.dim() != data.d_subgp() || beta.len() != data.d_adjust() {
        return Err(HarnessError::Config(format!(
            "region has {} dims and beta {} entries; data has {} subgroup and {} adjust features",
            region.dim(),
            beta.len(),
            data.d_subgp(),
            data.d_adjust()
        )));
    }
    let m = evaluate_region(&region, &beta, &data);
    let round = |x: Option<f64>| x.map(report::round_sig);
    let mut out = json!({
        "n_in_region": m.n_in_region,
        "size_fraction": report::round_sig(m.n_in_region as f64 / data.n() as f64),
        "epe": round(m.epe),
        "c_index": round(m.c_index),
        "rej10": round(m.rej10),
    });
    if let Some(truth) = &truth {
        if let Ok(s) = region_f1(&region, truth, &data.bounding_box()) {
            out["f1"] = json!(report::round_sig(s.f1));
            out["precision"] = json!(report::round_sig(s.precision));
            out["recall"] = json!(report::round_sig(s.recall));
        }
    }
    println!("{out}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen { dataset, out } => gen(dataset, out),
        Command::Discover {
            exp,
            method,
            params,
        } => discover(exp, method, params),
        Command::Sweep { exp } => sweep(exp),
        Command::Evaluate { exp, region, beta } => evaluate(exp, region, beta),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
