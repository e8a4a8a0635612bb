use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser};
use curveflow_cli::config::{read_sweep, OmegaSpec, SchemeName, WeightsSpec};
use curveflow_cli::config::Flow;
use curveflow_cli::run::{EXIT_CONFIG, EXIT_IO, EXIT_OK};
use curveflow_cli::{run, run_sweep, ConfigError, ExperimentConfig, RunRecord};

/// Evolves the benchmark curve by mean curvature, area-preserving mean
/// curvature or Hele-Shaw flow and writes CSV tables and SVG plots.
///
/// Settings come from built-in defaults, then `--config`, then flags.
#[derive(Debug, Parser)]
#[command(name = "curveflow", version)]
struct Args {
    /// `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// mcf, apmcf or heleshaw.
    #[arg(long)]
    flow: Option<Flow>,
    /// implicit, rk4, midpoint-srk or gauss2-srk.
    #[arg(long)]
    scheme: Option<SchemeName>,
    /// Number of vertices.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Upper bound of the adaptive step.
    #[arg(long)]
    tau: Option<f64>,
    /// `paper` (10 N / dt) or a constant.
    #[arg(long)]
    omega_rule: Option<OmegaSpec>,
    /// Surface tension (Hele-Shaw).
    #[arg(long)]
    sigma: Option<f64>,
    /// Newton tolerance on the max-norm residual.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Uniform step instead of the adaptive rule.
    #[arg(long)]
    dt: Option<f64>,
    /// Snapshot spacing in time.
    #[arg(long)]
    snapshots: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
    /// bisector, decomposition, edge-length or blended:<width>.
    #[arg(long)]
    weights: Option<WeightsSpec>,
    #[arg(long)]
    max_halvings: Option<usize>,
    /// Skip the uniform redistribution of the initial vertices.
    #[arg(long)]
    no_redistribute: bool,
    #[arg(long)]
    tol_u: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Random displacement of the initial vertices, as a fraction of L/N.
    #[arg(long)]
    jitter: Option<f64>,
    /// Runs every `[name]` section of this file, in parallel, under `<out>/<name>`.
    #[arg(long)]
    sweep: Option<PathBuf>,
}

impl Args {
    fn config(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut c = ExperimentConfig::default();
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    c.$field = v;
                }
            )*};
        }
        take!(flow, scheme, n, tau, sigma, tol, out, weights, max_halvings, tol_u, seed, jitter);
        if let Some(w) = self.omega_rule {
            c.omega = w;
        }
        if let Some(t) = self.t_end {
            c.t_end = t;
        }
        if self.dt.is_some() {
            c.dt = self.dt;
        }
        if self.snapshots.is_some() {
            c.snapshots = self.snapshots;
        }
        if self.svg {
            c.svg = true;
        }
        if self.no_redistribute {
            c.redistribute = false;
        }
        c.validate()?;
        Ok(c)
    }
}

fn report(record: &RunRecord, label: &str) {
    if record.exit_code == EXIT_OK {
        println!(
            "{label}t = {:.6} steps = {} L = {:.6} A = {:.6} max|dA| = {:.3e}",
            record.t_final, record.steps, record.final_length, record.final_area, record.max_step_area_change
        );
    } else {
        eprintln!("{}", record.to_json());
    }
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CURVEFLOW_LOG", "warn")).init();

    let args = match Args::command().try_get_matches().and_then(|m| Args::from_arg_matches(&m)) {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return code(EXIT_OK);
        }
        Err(e) => {
            let _ = e.print();
            eprintln!("{}", RunRecord::failure("config-error", EXIT_CONFIG, e.kind().to_string()).to_json());
            return code(EXIT_CONFIG);
        }
    };
    let config = match args.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", RunRecord::from(&e).to_json());
            return code(EXIT_CONFIG);
        }
    };

    let Some(sweep) = &args.sweep else {
        return match run(&config) {
            Ok(record) => {
                report(&record, "");
                code(record.exit_code)
            }
            Err(e) => {
                eprintln!("{}", RunRecord::failure("io-error", EXIT_IO, e.to_string()).to_json());
                code(EXIT_IO)
            }
        };
    };
    let entries = match read_sweep(sweep, &config).and_then(|entries| {
        entries.iter().try_for_each(|e| e.config.validate())?;
        Ok(entries)
    }) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("{}", RunRecord::from(&e).to_json());
            return code(EXIT_CONFIG);
        }
    };
    // the first failing run, in file order, decides the exit status
    let mut status = EXIT_OK;
    for (name, result) in run_sweep(&entries) {
        let c = match result {
            Ok(record) => {
                report(&record, &format!("[{name}] "));
                record.exit_code
            }
            Err(e) => {
                eprintln!("{}", RunRecord::failure("io-error", EXIT_IO, format!("[{name}] {e}")).to_json());
                EXIT_IO
            }
        };
        if status == EXIT_OK {
            status = c;
        }
    }
    code(status)
}
