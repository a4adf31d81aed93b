use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mckm::dataset::{save_assignments, save_csv, write_atomic, write_json, Dataset, GeneratorSpec};
use mckm::harness::{fusion_csv, gamma_trace, parse_gamma_range, suite, sweep, DataSource};
use mckm::pipeline::{run, Algorithm, AlgorithmSpec};
use mckm::Error;

const EXIT_ACCEPTANCE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "mckm", version, about = "Multi-prototype convex-merging K-Means and baselines")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a labelled synthetic dataset as CSV.
    Generate {
        /// e.g. gaussian-grid:3,5,50,0.01, two-moons:400,0.05, unbalanced-gaussians:300@0,0@0.1;50@1,1@0.05
        #[arg(long)]
        spec: GeneratorSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        normalize: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run one algorithm and print its JSON report.
    Run {
        #[command(flatten)]
        algo: AlgoArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the report and per-sample assignments.
        #[arg(short, long, env = "MCKM_OUTPUT_DIR")]
        output: Option<PathBuf>,
    },
    /// Repeat a run over paired trial seeds and summarise mean ± std.
    Sweep {
        #[command(flatten)]
        algo: AlgoArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Base seed; trial t runs with splitmix64(seed + t).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long, env = "MCKM_OUTPUT_DIR")]
        output: Option<PathBuf>,
    },
    /// Emit the (gamma, k*) fusion trace as CSV.
    GammaPath {
        #[command(flatten)]
        algo: AlgoArgs,
        #[command(flatten)]
        data: DataArgs,
        /// start:end:steps
        #[arg(long)]
        gammas: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV file to write instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the bundled acceptance suite and print a pass/fail table.
    Reproduce {
        /// Criterion numbers to run (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        /// Also write the table as JSON into this directory.
        #[arg(short, long, env = "MCKM_OUTPUT_DIR")]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Headed CSV file, optional final `label` column.
    #[arg(long, conflicts_with = "generator", required_unless_present = "generator")]
    data: Option<PathBuf>,
    /// Generate the data instead (drawn with the run seed).
    #[arg(long)]
    generator: Option<GeneratorSpec>,
    /// Min-max scale every feature to [0, 1] first.
    #[arg(long)]
    normalize: bool,
}

impl DataArgs {
    fn load(&self, seed: u64) -> mckm::Result<Dataset<f64>> {
        let source = match (&self.data, &self.generator) {
            (Some(path), _) => DataSource::File(path.clone()),
            (None, Some(spec)) => DataSource::Generator(spec.clone()),
            (None, None) => return Err(Error::Usage("either --data or --generator is required".into())),
        };
        source.load(self.normalize, seed)
    }
}

#[derive(Args)]
struct AlgoArgs {
    /// kmeans, kmeanspp, smkm, cc or mckm.
    #[arg(long = "algo", alias = "algorithm")]
    algo: Algorithm,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_cycles: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    /// Fusion tolerance for cluster extraction.
    #[arg(long)]
    eta: Option<f64>,
    /// ADMM residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    /// Explicit MPS threshold, overriding --rho.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Discard the prototype that triggered the MPS stop.
    #[arg(long)]
    drop_last: bool,
}

impl AlgoArgs {
    fn map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("k", self.k.map(|x| x.to_string()));
        put("max_cycles", self.max_cycles.map(|x| x.to_string()));
        put("gamma", self.gamma.map(|x| x.to_string()));
        put("q", self.q.map(|x| x.to_string()));
        put("kappa", self.kappa.map(|x| x.to_string()));
        put("nu", self.nu.map(|x| x.to_string()));
        put("eta", self.eta.map(|x| x.to_string()));
        put("tol", self.tol.map(|x| x.to_string()));
        put("max_iter", self.max_iter.map(|x| x.to_string()));
        put("rho", self.rho.map(|x| x.to_string()));
        put("epsilon", self.epsilon.map(|x| x.to_string()));
        put("drop_last", self.drop_last.then(|| "true".to_string()));
        m
    }

    fn spec(&self, seed: u64) -> mckm::Result<AlgorithmSpec> {
        let spec = AlgorithmSpec::from_map(self.algo, &self.map(), seed)?;
        Ok(spec)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Parse { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn ensure_dir(dir: &Path) -> mckm::Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn execute(command: Command) -> mckm::Result<u8> {
    match command {
        Command::Generate { spec, seed, normalize, output } => {
            let source = DataSource::Generator(spec);
            let ds: Dataset<f64> = source.load(normalize, seed)?;
            save_csv(&output, &ds)?;
            eprintln!("wrote {} rows to {}", ds.n(), output.display());
        }
        Command::Run { algo, data, seed, output } => {
            let spec = algo.spec(seed)?;
            let ds = data.load(seed)?;
            let mut out = run(&ds, &spec)?;
            if let Some(dir) = output {
                ensure_dir(&dir)?;
                let stem = format!("{}_{}_{}", ds.name(), spec.algorithm(), seed);
                let assignments = dir.join(format!("{stem}_assignments.csv"));
                save_assignments(&assignments, &out.partition)?;
                out.report.assignments_path = Some(assignments.display().to_string());
                write_json(dir.join(format!("{stem}.json")), &out.report)?;
            }
            println!("{}", serde_json::to_string_pretty(&out.report)?);
        }
        Command::Sweep { algo, data, trials, seed, output } => {
            let spec = algo.spec(seed)?;
            let ds = data.load(seed)?;
            let summary = sweep(&ds, spec.params, trials, seed)?;
            println!("{} ({} trials on {})", summary.table_row(), summary.trials, summary.dataset);
            if let Some(dir) = output {
                ensure_dir(&dir)?;
                write_json(dir.join(format!("{}_{}_sweep.json", ds.name(), spec.algorithm())), &summary)?;
            }
        }
        Command::GammaPath { algo, data, gammas, seed, output } => {
            if !matches!(algo.algo, Algorithm::Mckm | Algorithm::Cc) {
                return Err(Error::Usage("gamma-path applies to --algo mckm or cc".into()));
            }
            let mut map = algo.map();
            map.entry("gamma".into()).or_insert_with(|| "0".into());
            let spec = AlgorithmSpec::from_map(algo.algo, &map, seed)?;
            let gammas = parse_gamma_range(&gammas)?;
            let ds = data.load(seed)?;
            let csv = fusion_csv(&gamma_trace(&ds, &spec.params, seed, &gammas)?);
            match output {
                Some(path) => write_atomic(path, csv.as_bytes())?,
                None => print!("{csv}"),
            }
        }
        Command::Reproduce { only, output } => {
            let mut reports = Vec::new();
            for (id, name, _) in suite::CRITERIA {
                if !only.is_empty() && !only.contains(&id) {
                    continue;
                }
                match suite::criterion(id) {
                    Ok(r) => {
                        println!("{r}");
                        reports.push(r);
                    }
                    Err(e) => {
                        println!("[FAIL] {id:>2}. {name:<28} error: {e}");
                        reports.push(suite::CriterionReport {
                            id,
                            name: name.into(),
                            passed: false,
                            detail: e.to_string(),
                            elapsed_seconds: 0.0,
                            budget_seconds: 0.0,
                        });
                    }
                }
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            println!("{} of {} criteria passed", reports.len() - failed, reports.len());
            if let Some(dir) = output {
                ensure_dir(&dir)?;
                write_json(dir.join("acceptance.json"), &reports)?;
            }
            if failed > 0 {
                return Ok(EXIT_ACCEPTANCE);
            }
        }
    }
    Ok(0)
}
