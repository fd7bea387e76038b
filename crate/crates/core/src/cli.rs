//! Command-line front end: `simulate`, `fit`, `select` and `ari`.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use crate::basis::{BasisKind, BasisSystem};
use crate::cluster::{adjusted_rand_index, allocate, Partition};
use crate::error::{Error, Result};
use crate::gmm::{self, EmConfig, FitReport};
use crate::io::{read_dataset, read_labels, write_criterion_table, write_dataset, write_labels, ModelFile};
use crate::manifest::RunManifest;
use crate::model_select::{bic_criterion, slope_criterion, sweep, Method, SelectionTable};
use crate::projection::{project, FunctionalDataset};
use crate::simgen::{self, GeneratorConfig};

#[derive(Debug, Parser)]
#[command(name = "funcclust", version, about = "Model-based clustering of functional data")]
pub struct Cli {
    /// Worker threads (default: all available cores).
    #[arg(long, global = true, env = "FUNCCLUST_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a simulated dataset with known cluster labels.
    Simulate(SimulateArgs),
    /// Project a dataset onto a basis and fit a g-component mixture.
    Fit(FitArgs),
    /// Fit a range of g and choose the mixture order.
    Select(SelectArgs),
    /// Adjusted Rand index between two label files.
    Ari(AriArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    S1,
    S2,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, required_unless_present = "config", conflicts_with = "config")]
    pub study: Option<Study>,
    #[arg(long, requires = "study")]
    pub m: Option<usize>,
    #[arg(long, requires = "study")]
    pub n: Option<usize>,
    /// Custom generator configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed of a custom configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Accept m and n outside the reference scenario grid.
    #[arg(long)]
    pub allow_nonstandard: bool,
    /// Output prefix: writes PREFIX.csv, PREFIX_truth.csv and PREFIX_manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisArg {
    Monomial,
    Fourier,
    Bspline,
}

impl From<BasisArg> for BasisKind {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Monomial => BasisKind::Monomial,
            BasisArg::Fourier => BasisKind::Fourier,
            BasisArg::Bspline => BasisKind::Bspline,
        }
    }
}

#[derive(Debug, Args)]
pub struct ProjectionArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub basis: BasisArg,
    #[arg(long)]
    pub dim: usize,
    /// Basis domain as LO,HI (default: range of the sampling points).
    #[arg(long, value_parser = parse_domain, allow_hyphen_values = true)]
    pub domain: Option<(f64, f64)>,
}

#[derive(Debug, Args)]
pub struct EmArgs {
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0.01)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub ridge: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl EmArgs {
    fn config(&self) -> EmConfig {
        EmConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            restarts: self.restarts,
            seed: self.seed,
            ridge: self.ridge,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub projection: ProjectionArgs,
    #[arg(long)]
    pub g: usize,
    #[command(flatten)]
    pub em: EmArgs,
    /// Fitted model JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Hard labels CSV.
    #[arg(long)]
    pub labels: PathBuf,
    /// Manifest path (default: next to --out, with extension .manifest.json).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Slope,
    Bic,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub projection: ProjectionArgs,
    #[arg(long)]
    pub gmin: usize,
    #[arg(long)]
    pub gmax: usize,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Fixed slope-heuristic multiplier instead of an estimated one.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Number of largest-g rows used for the slope fit.
    #[arg(long)]
    pub fit_window: Option<usize>,
    #[command(flatten)]
    pub em: EmArgs,
    /// Criterion table CSV.
    #[arg(long)]
    pub table: PathBuf,
    /// Model JSON of the chosen g.
    #[arg(long)]
    pub out: PathBuf,
    /// Labels CSV of the chosen g.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AriArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
}

fn parse_domain(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad LO: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad HI: {e}"))?;
    if !(hi > lo) {
        return Err("HI must exceed LO".into());
    }
    Ok((lo, hi))
}

fn default_manifest(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_dataset(path: &Path) -> Result<FunctionalDataset> {
    let file = File::open(path)?;
    read_dataset(BufReader::new(file))
}

fn basis_for(args: &ProjectionArgs, data: &FunctionalDataset) -> Result<BasisSystem> {
    let (lo, hi) = args.domain.unwrap_or_else(|| data.time_range());
    BasisSystem::new(args.basis.into(), args.dim, lo, hi)
}

/// What a command produced, for callers embedding the CLI.
#[derive(Debug)]
pub struct CommandOutput {
    pub manifest: Option<RunManifest>,
    pub stdout: Option<String>,
}

pub fn simulate(args: &SimulateArgs) -> Result<CommandOutput> {
    let config: GeneratorConfig = match (&args.study, &args.config) {
        (Some(study), _) => {
            let (m, n) = match (args.m, args.n) {
                (Some(m), Some(n)) => (m, n),
                _ => return Err(Error::Config("--study needs --m and --n".into())),
            };
            let (grids, sizes): (&[usize], &[usize]) = match study {
                Study::S1 => (&simgen::S1_GRID_SIZES, &simgen::S1_SAMPLE_SIZES),
                Study::S2 => (&simgen::S2_GRID_SIZES, &simgen::S2_SAMPLE_SIZES),
            };
            if !args.allow_nonstandard && (!grids.contains(&m) || !sizes.contains(&n)) {
                return Err(Error::Config(format!(
                    "{study:?} supports m in {grids:?} and n in {sizes:?} (use --allow-nonstandard)"
                )));
            }
            let seed = args.seed.unwrap_or(0);
            match study {
                Study::S1 => simgen::s1_config(m, n, seed)?,
                Study::S2 => simgen::s2_config(m, n, seed)?,
            }
        }
        (None, Some(path)) => {
            let mut cfg: GeneratorConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            cfg
        }
        (None, None) => return Err(Error::Config("either --study or --config is required".into())),
    };

    let mut manifest = RunManifest::new(
        "simulate",
        config.seed,
        json!({ "study": args.study.map(|s| format!("{s:?}").to_lowercase()), "generator": &config }),
    );
    let sim = manifest.time("generate", || simgen::generate(&config))?;
    let data_text = write_dataset(&sim.data);
    let truth_text = write_labels(&sim.truth);
    let start = Instant::now();
    manifest.write_output(&with_suffix(&args.out, ".csv"), data_text.as_bytes())?;
    manifest.write_output(&with_suffix(&args.out, "_truth.csv"), truth_text.as_bytes())?;
    manifest.record("write", start.elapsed().as_secs_f64());
    let manifest = manifest.finish(&with_suffix(&args.out, "_manifest.json"))?;
    Ok(CommandOutput {
        manifest: Some(manifest),
        stdout: None,
    })
}

fn write_fit_outputs(
    manifest: &mut RunManifest,
    report: &FitReport,
    labels: &Partition,
    out: &Path,
    labels_path: &Path,
) -> Result<()> {
    let model = ModelFile::from_report(report).to_json()?;
    manifest.write_output(out, model.as_bytes())?;
    manifest.write_output(labels_path, write_labels(labels).as_bytes())?;
    Ok(())
}

pub fn fit(args: &FitArgs) -> Result<CommandOutput> {
    let config = args.em.config();
    let mut manifest = RunManifest::new(
        "fit",
        config.seed,
        json!({
            "input": args.projection.input.display().to_string(),
            "basis": BasisKind::from(args.projection.basis).to_string(),
            "dim": args.projection.dim,
            "domain": args.projection.domain.map(|(lo, hi)| [lo, hi]),
            "g": args.g,
            "em": &config,
        }),
    );
    let data = manifest.time("read", || load_dataset(&args.projection.input))?;
    let basis = basis_for(&args.projection, &data)?;
    let coeffs = manifest.time("project", || project(&data, &basis))?;
    let report = manifest.time("fit", || gmm::fit(coeffs.values(), args.g, &config))?;
    let labels = manifest.time("allocate", || allocate(&report.responsibilities));
    info!(
        "g = {}: loglik {:.6}, {} iterations, restart {} won",
        args.g,
        report.loglik(),
        report.iterations,
        report.restart_index
    );
    let start = Instant::now();
    write_fit_outputs(&mut manifest, &report, &labels, &args.out, &args.labels)?;
    manifest.record("write", start.elapsed().as_secs_f64());
    let manifest_path = args.manifest.clone().unwrap_or_else(|| default_manifest(&args.out));
    let manifest = manifest.finish(&manifest_path)?;
    Ok(CommandOutput {
        manifest: Some(manifest),
        stdout: None,
    })
}

pub fn select(args: &SelectArgs) -> Result<CommandOutput> {
    if args.gmin == 0 || args.gmax < args.gmin {
        return Err(Error::Config("need 1 <= gmin <= gmax".into()));
    }
    if args.kappa.is_some() && args.method != MethodArg::Slope {
        return Err(Error::Config("--kappa applies to --method slope only".into()));
    }
    let config = args.em.config();
    let mut manifest = RunManifest::new(
        "select",
        config.seed,
        json!({
            "input": args.projection.input.display().to_string(),
            "basis": BasisKind::from(args.projection.basis).to_string(),
            "dim": args.projection.dim,
            "domain": args.projection.domain.map(|(lo, hi)| [lo, hi]),
            "gmin": args.gmin,
            "gmax": args.gmax,
            "method": format!("{:?}", args.method).to_lowercase(),
            "kappa": args.kappa,
            "fit_window": args.fit_window,
            "em": &config,
        }),
    );
    let data = manifest.time("read", || load_dataset(&args.projection.input))?;
    let basis = basis_for(&args.projection, &data)?;
    let coeffs = manifest.time("project", || project(&data, &basis))?;
    let result = manifest.time("sweep", || sweep(coeffs.values(), args.gmin..=args.gmax, &config))?;
    let (n, d) = (coeffs.nrows(), coeffs.dim());
    let rows = result.table_input();
    let table: SelectionTable = match args.method {
        MethodArg::Slope => slope_criterion(&rows, d, n, args.fit_window, args.kappa)?,
        MethodArg::Bic => bic_criterion(&rows, d, n)?,
    };
    if let Method::Slope { kappa } = table.method {
        info!("slope heuristic kappa = {kappa:e}");
    }
    let chosen = result
        .fit_for(table.chosen_g)
        .expect("chosen g comes from the successful fits");
    let labels = allocate(&chosen.responsibilities);
    let start = Instant::now();
    manifest.write_output(&args.table, write_criterion_table(&table).as_bytes())?;
    write_fit_outputs(&mut manifest, chosen, &labels, &args.out, &args.labels)?;
    manifest.record("write", start.elapsed().as_secs_f64());
    let manifest_path = args.manifest.clone().unwrap_or_else(|| default_manifest(&args.out));
    let manifest = manifest.finish(&manifest_path)?;
    Ok(CommandOutput {
        manifest: Some(manifest),
        stdout: Some(format!("chosen g = {}", table.chosen_g)),
    })
}

pub fn ari(args: &AriArgs) -> Result<CommandOutput> {
    let pred = read_labels(BufReader::new(File::open(&args.pred)?))?;
    let truth = read_labels(BufReader::new(File::open(&args.truth)?))?;
    let value = adjusted_rand_index(&pred, &truth)?;
    Ok(CommandOutput {
        manifest: None,
        stdout: Some(format!("{value:.6}")),
    })
}

pub fn execute(command: &Command) -> Result<CommandOutput> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Select(a) => select(a),
        Command::Ari(a) => ari(a),
    }
}

/// Runs a parsed command line inside a thread pool of the requested size.
pub fn run(cli: &Cli) -> Result<CommandOutput> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(threads) = cli.threads {
        builder = builder.num_threads(threads);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    pool.install(|| execute(&cli.command))
}

/// Exit codes: 0 success, 1 fit or selection failure, 2 usage or data error.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match run(&cli) {
        Ok(output) => {
            if let Some(text) = output.stdout {
                println!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
