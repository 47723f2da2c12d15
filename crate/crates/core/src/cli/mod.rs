//! Command-line front end: `simulate`, `discover`, `estimate` and `replicate`.
//!
//! Every artifact carries the resolved run configuration. Outputs are
//! computed in memory first and then written through a temporary file and a
//! rename, so a failing run leaves no partial files behind.

mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::RunConfig;

use crate::estimators::{effect_on, EstimationError, Method};
use crate::inference::{run_sdld, InferenceError};
use crate::panel_data::{
    load_panel_csv, write_panel_csv_with_header, DataError, PanelDataset, Schema, TreatmentRegime,
};
use crate::simulation::{run_simulation_study, simulate_variant, write_replicate_log, Variant};
use crate::tree::{Tree, TreeError};

/// Environment variable read for the default worker count.
pub const THREADS_ENV: &str = "SDLD_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Estimation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Estimation(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Estimation(_) => "estimation",
        }
    }

    /// One-line JSON description written to stderr on failure.
    pub fn machine_line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EstimationError> for CliError {
    fn from(e: EstimationError) -> Self {
        match e {
            EstimationError::Data(d) => d.into(),
            EstimationError::InvalidConfig(m) => CliError::Usage(m),
            other => CliError::Estimation(other.to_string()),
        }
    }
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        match e {
            TreeError::Data(d) => d.into(),
            TreeError::InvalidConfig(m) => CliError::Usage(m),
            TreeError::Document(m) => CliError::Data(format!("tree document: {m}")),
            TreeError::Estimation(e) => e.into(),
            other => CliError::Estimation(other.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Data(d) => d.into(),
            InferenceError::Tree(t) => t.into(),
            InferenceError::Estimation(e) => e.into(),
            InferenceError::InvalidConfig(m) => CliError::Usage(m),
            other => CliError::Estimation(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sdld",
    version,
    about = "Subgroup discovery for longitudinal data"
)]
pub struct Cli {
    /// Worker threads (default: $SDLD_THREADS, else all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset from the two-period simulation design.
    Simulate(SimulateArgs),
    /// Grow, prune and select a tree, then estimate leaf effects honestly.
    Discover(DiscoverArgs),
    /// Effects at every horizon prefix, overall or per tree leaf.
    Estimate(EstimateArgs),
    /// Run the simulation study and write the per-replicate log.
    Replicate(ReplicateArgs),
}

/// Configuration file and per-key overrides.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub estimator: Option<Method>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Build, validation and estimation shares, e.g. 0.48,0.12,0.40.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub fractions: Option<Vec<f64>>,
    #[arg(long)]
    pub min_node_size: Option<usize>,
    #[arg(long)]
    pub min_regime_followers: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub cutpoint_grid: Option<usize>,
    #[arg(long)]
    pub truncation_bound: Option<f64>,
    /// Bootstrap resamples (0 disables intervals).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Treated regime as a 0/1 string, one digit per period.
    #[arg(long)]
    pub treated: Option<TreatmentRegime>,
    #[arg(long)]
    pub control: Option<TreatmentRegime>,
    #[arg(long)]
    pub variant: Option<Variant>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 12_000)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Schema file; defaults to the `.schema.toml` sidecar of the data.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every bootstrap draw.
    #[arg(long)]
    pub keep_draws: bool,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Tree document; one row per leaf in addition to the whole population.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Time-varying covariate used as the outcome of prefix horizons.
    /// Without it only the full horizon is estimated.
    #[arg(long)]
    pub interim_outcome: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub n_build: Option<usize>,
    #[arg(long)]
    pub n_validate: Option<usize>,
    #[arg(long)]
    pub eval_size: Option<usize>,
    /// Record per-replicate runtimes (makes the log nondeterministic).
    #[arg(long)]
    pub timing: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

impl ConfigArgs {
    /// File values (or defaults) with flag overrides applied, then checked.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
                RunConfig::from_toml_str(&text)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = &self.$field { c.$target = v.clone(); })*
            };
        }
        set!(estimator => estimator, lambda => lambda, min_node_size => min_node_size,
             min_regime_followers => min_regime_followers, max_depth => max_depth,
             cutpoint_grid => cutpoint_grid, truncation_bound => truncation_bound,
             bootstrap => bootstrap_samples, level => level, seed => seed, variant => variant);
        if let Some(f) = &self.fractions {
            c.fractions = [f[0], f[1], f[2]];
        }
        if self.treated.is_some() {
            c.treated = self.treated.clone();
        }
        if self.control.is_some() {
            c.control = self.control.clone();
        }
        c.check().map_err(CliError::Usage)?;
        Ok(c)
    }
}

/// Output files produced by a command, written only after all succeed.
type Artifacts = Vec<(PathBuf, Vec<u8>)>;

fn header_lines(command: &str, cfg: &RunConfig) -> Vec<String> {
    vec![
        format!("sdld {} {command}", env!("CARGO_PKG_VERSION")),
        format!("seed: {}", cfg.seed),
        format!("config: {}", cfg.fingerprint()),
    ]
}

fn comment_block(lines: &[String]) -> String {
    lines.iter().map(|l| format!("# {l}\n")).collect()
}

/// Schema sidecar path for a data file: `d.csv` -> `d.schema.toml`.
pub fn schema_sidecar(data: &Path) -> PathBuf {
    data.with_extension("schema.toml")
}

fn load_data(data: &Path, schema: Option<&Path>) -> Result<PanelDataset, CliError> {
    let schema_path = schema
        .map(Path::to_path_buf)
        .unwrap_or_else(|| schema_sidecar(data));
    let schema = Schema::load(&schema_path)
        .map_err(|e| CliError::Data(format!("schema {}: {e}", schema_path.display())))?;
    load_panel_csv(data, &schema)
        .map_err(|e| CliError::Data(format!("data {}: {e}", data.display())))
}

fn json_with_config<T: serde::Serialize>(cfg: &RunConfig, key: &str, value: &T) -> Vec<u8> {
    let mut doc = serde_json::Map::new();
    doc.insert(
        "config".into(),
        serde_json::to_value(cfg).expect("config serializes"),
    );
    doc.insert(
        key.into(),
        serde_json::to_value(value).expect("artifact serializes"),
    );
    let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(doc)).expect("json");
    text.push('\n');
    text.into_bytes()
}

fn simulate(args: &SimulateArgs) -> Result<Artifacts, CliError> {
    let cfg = args.cfg.resolve()?;
    if args.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let d = simulate_variant(args.n, cfg.seed, cfg.variant);
    let mut lines = header_lines("simulate", &cfg);
    lines.push(format!("n: {}", args.n));
    let mut csv = Vec::new();
    write_panel_csv_with_header(&d, &mut csv, &lines)?;
    let schema = format!("{}{}", comment_block(&lines), d.schema.to_toml_string());
    Ok(vec![
        (args.out.clone(), csv),
        (schema_sidecar(&args.out), schema.into_bytes()),
    ])
}

fn discover(args: &DiscoverArgs) -> Result<Artifacts, CliError> {
    let cfg = args.cfg.resolve()?;
    let d = load_data(&args.data, args.schema.as_deref())?;
    let report = run_sdld(&d, &cfg.sdld_config())?;
    let lines = header_lines("discover", &cfg);
    let dir = &args.out;

    let mut tree = serde_json::to_value(&report.tree).expect("tree serializes");
    tree.as_object_mut()
        .expect("tree document is an object")
        .insert(
            "config".into(),
            serde_json::to_value(&cfg).expect("config serializes"),
        );
    let mut tree_text = serde_json::to_string_pretty(&tree).expect("json");
    tree_text.push('\n');

    let mut csv = Vec::new();
    report.write_csv(&mut csv, &lines)?;
    let mut partition = comment_block(&lines).into_bytes();
    report.write_partition_csv(&d, &mut partition)?;
    let mut out = vec![
        (dir.join("tree.json"), tree_text.into_bytes()),
        (
            dir.join("report.json"),
            json_with_config(&cfg, "report", &report),
        ),
        (dir.join("report.csv"), csv),
        (dir.join("partition.csv"), partition),
        (
            dir.join("config.toml"),
            format!("{}{}", comment_block(&lines[..1]), cfg.to_toml_string()).into_bytes(),
        ),
    ];
    if args.keep_draws {
        let mut draws = Vec::new();
        report.write_draws_csv(&mut draws, &lines)?;
        out.push((dir.join("draws.csv"), draws));
    }
    Ok(out)
}

fn regime_prefix(
    r: &Option<TreatmentRegime>,
    k: usize,
    default: fn(usize) -> TreatmentRegime,
) -> TreatmentRegime {
    match r {
        Some(r) => r.truncated(k),
        None => default(k),
    }
}

fn estimate(args: &EstimateArgs) -> Result<Artifacts, CliError> {
    let cfg = args.cfg.resolve()?;
    let d = load_data(&args.data, args.schema.as_deref())?;
    let tree = match &args.tree {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("tree {}: {e}", path.display())))?;
            let t = Tree::from_json(&text)?;
            if t.baseline_names() != d.schema.baseline.as_slice() {
                return Err(CliError::Data(
                    "tree baseline covariates do not match the data schema".into(),
                ));
            }
            Some(t)
        }
        None => None,
    };
    let k_max = d.horizon();
    if let Some(r) = cfg.treated.iter().chain(cfg.control.iter()).next() {
        r.check(k_max)?;
    }
    let horizons: Vec<usize> = if args.interim_outcome.is_some() {
        (0..=k_max).collect()
    } else {
        vec![k_max]
    };
    let estimator = cfg.estimator_config();
    let mut csv = comment_block(&header_lines("estimate", &cfg)).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut csv);
        w.write_record([
            "horizon",
            "node",
            "subgroup",
            "n",
            "effect",
            "se",
            "mean_treated",
            "mean_control",
            "error",
        ])
        .map_err(DataError::from)?;
        for k in horizons {
            let dk = d.truncate_horizon(k, args.interim_outcome.as_deref())?;
            let treated = regime_prefix(&cfg.treated, k, TreatmentRegime::always);
            let control = regime_prefix(&cfg.control, k, TreatmentRegime::never);
            let mut groups = vec![(
                String::new(),
                "all".to_string(),
                (0..dk.len()).collect::<Vec<_>>(),
            )];
            if let Some(t) = &tree {
                for id in t.terminal_nodes() {
                    let sg = &t.node(id).subgroup;
                    groups.push((id.to_string(), t.describe(id), sg.members(&dk)));
                }
            }
            for (i, (node, label, members)) in groups.into_iter().enumerate() {
                let row = match effect_on(&dk, &members, &treated, &control, &estimator) {
                    Ok(e) => {
                        let e = e.effect;
                        [
                            e.delta.to_string(),
                            e.variance.sqrt().to_string(),
                            e.mean1.to_string(),
                            e.mean0.to_string(),
                            String::new(),
                        ]
                    }
                    // the whole-population effect is required; leaves may fail
                    Err(e) if i == 0 => return Err(e.into()),
                    Err(e) => [
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        e.to_string(),
                    ],
                };
                let mut rec = vec![k.to_string(), node, label, members.len().to_string()];
                rec.extend(row);
                w.write_record(&rec).map_err(DataError::from)?;
            }
        }
        w.flush().map_err(DataError::from)?;
    }
    Ok(vec![(args.out.clone(), csv)])
}

fn replicate(args: &ReplicateArgs) -> Result<Artifacts, CliError> {
    let mut cfg = args.cfg.resolve()?;
    if let Some(r) = args.reps {
        cfg.replicates = r;
    }
    if let Some(n) = args.n_build {
        cfg.n_build = n;
    }
    if let Some(n) = args.n_validate {
        cfg.n_validate = n;
    }
    if let Some(m) = args.eval_size {
        cfg.eval_size = m;
    }
    cfg.check().map_err(CliError::Usage)?;
    let study = cfg.study_config();
    let result = run_simulation_study(&study, &cfg.tree_config());
    let lines = header_lines("replicate", &cfg);
    let mut log = Vec::new();
    write_replicate_log(&mut log, &lines, &study, &result.outcomes, args.timing)
        .map_err(DataError::from)?;
    Ok(vec![
        (args.out.join("replicates.csv"), log),
        (
            args.out.join("metrics.json"),
            json_with_config(&cfg, "metrics", &result.metrics),
        ),
    ])
}

/// Writes through a sibling temporary file and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    let from_env = || {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
    };
    if let Some(n) = threads.or_else(from_env) {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // a second call in the same process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(_threads: Option<usize>) -> Result<(), CliError> {
    Ok(())
}

/// Runs a parsed command and writes its artifacts. Returns the written paths.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    configure_threads(cli.threads)?;
    let artifacts = match &cli.command {
        Command::Simulate(a) => simulate(a)?,
        Command::Discover(a) => discover(a)?,
        Command::Estimate(a) => estimate(a)?,
        Command::Replicate(a) => replicate(a)?,
    };
    let mut written = Vec::with_capacity(artifacts.len());
    for (path, bytes) in artifacts {
        write_atomic(&path, &bytes)
            .map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}

/// Parses `argv`, runs the command and returns the process exit code.
/// Errors go to stderr as a readable message followed by a JSON line.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let _ = e.print();
            let err = CliError::Usage(e.kind().to_string());
            eprintln!("{}", err.machine_line());
            return err.exit_code();
        }
    };
    match execute(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", e.machine_line());
            e.exit_code()
        }
    }
}
