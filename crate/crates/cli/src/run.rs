//! One experiment: initial curve, redistribution, simulation and output files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use curveflow::experiment::{initial_curve, redistribute_uniform, RedistributionParams};
use curveflow::{simulate, FlowError, NewtonOptions, OmegaRule, Point, PolygonalCurve, Scheme, SimulationParams, TimeSeries};
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig};
use crate::plot;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_REJECTED: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

/// Machine-readable summary written to `result.json`; on failure also
/// printed to stderr.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub status: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub t_final: f64,
    pub steps: usize,
    pub initial_length: f64,
    pub initial_area: f64,
    pub final_length: f64,
    pub final_area: f64,
    /// Largest `|A^{n+1} - A^n|` over the accepted steps.
    pub max_step_area_change: f64,
    pub max_newton_iters: usize,
    pub halvings: usize,
}

impl RunRecord {
    pub fn failure(status: &str, exit_code: i32, message: String) -> Self {
        Self {
            status: status.into(),
            exit_code,
            message: Some(message),
            t_final: 0.0,
            steps: 0,
            initial_length: f64::NAN,
            initial_area: f64::NAN,
            final_length: f64::NAN,
            final_area: f64::NAN,
            max_step_area_change: f64::NAN,
            max_newton_iters: 0,
            halvings: 0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Exit status and status word for a simulation failure.
pub fn classify(error: &FlowError) -> (&'static str, i32) {
    match error {
        FlowError::ExplicitBlowUp(_) => ("blow-up", EXIT_BLOW_UP),
        FlowError::InvalidParameter(_) | FlowError::NotCanonical | FlowError::TooFewVertices(_) => {
            ("config-error", EXIT_CONFIG)
        }
        FlowError::StepRejected { .. } => ("step-rejected", EXIT_REJECTED),
        _ => ("failed", EXIT_REJECTED),
    }
}

impl From<&ConfigError> for RunRecord {
    fn from(e: &ConfigError) -> Self {
        RunRecord::failure("config-error", EXIT_CONFIG, e.to_string())
    }
}

pub fn simulation_params(config: &ExperimentConfig) -> SimulationParams {
    SimulationParams {
        scheme: config.scheme.0,
        model: config.model(),
        tau: config.tau,
        omega_rule: config.omega.0,
        newton: NewtonOptions {
            tol: config.tol,
            ..Default::default()
        },
        t_end: config.t_end,
        fixed_dt: config.dt,
        weights: config.weights.0,
        max_halvings: config.max_halvings,
        snapshot_interval: config.snapshots,
        ..Default::default()
    }
}

/// The sampled benchmark curve, optionally jittered, then redistributed.
pub fn starting_curve(config: &ExperimentConfig) -> Result<PolygonalCurve, FlowError> {
    let mut curve = initial_curve(config.n)?;
    if config.jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.jitter * curve.length() / config.n as f64;
        let moved: Vec<Point> = curve
            .vertices()
            .iter()
            .map(|p| p + Point::new(rng.random_range(-h..h), rng.random_range(-h..h)))
            .collect();
        curve = PolygonalCurve::new(moved)?;
    }
    if config.redistribute {
        let params = RedistributionParams {
            tol_u: config.tol_u,
            ..Default::default()
        };
        curve = redistribute_uniform(&curve, &params)?;
    }
    Ok(curve)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_at(path: &Path) -> impl Fn(io::Error) -> io::Error + '_ {
    move |e| io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

fn write_points(path: &Path, points: &[Point]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io::Error::other)?;
    w.write_record(["x", "y"])?;
    for p in points {
        w.write_record([num(p.x), num(p.y)])?;
    }
    w.flush().map_err(io_at(path))
}

pub fn write_timeseries(path: &Path, series: &TimeSeries) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io::Error::other)?;
    w.write_record(["t", "dt", "length", "area", "newton_iters", "residual", "uniformity"])?;
    for r in &series.records {
        w.write_record([
            num(r.t),
            num(r.dt),
            num(r.length),
            num(r.area),
            r.newton_iters.to_string(),
            num(r.residual),
            num(r.uniformity),
        ])?;
    }
    w.flush().map_err(io_at(path))
}

/// `snapshots/snap_XXXX.csv` plus `snapshots/index.csv`, and the raw
/// blown-up vertices as `snapshots/diagnostic.csv` when there are any.
pub fn write_snapshots(dir: &Path, series: &TimeSeries) -> io::Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(io_at(dir))?;
    }
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let index_path = dir.join("index.csv");
    let mut index = csv::Writer::from_path(&index_path).map_err(io::Error::other)?;
    index.write_record(["snapshot", "t", "file"])?;
    for (k, s) in series.snapshots.iter().enumerate() {
        let name = format!("snap_{k:04}.csv");
        write_points(&dir.join(&name), s.curve.vertices())?;
        index.write_record([k.to_string(), num(s.t), name])?;
    }
    if let Some(points) = &series.diagnostic {
        write_points(&dir.join("diagnostic.csv"), points)?;
        index.write_record(["diagnostic".into(), "".into(), "diagnostic.csv".to_string()])?;
    }
    index.flush().map_err(io_at(&index_path))
}

fn summarize(series: &TimeSeries, error: Option<&FlowError>) -> RunRecord {
    let first = &series.records[0];
    let last = series.records.last().unwrap_or(first);
    let (status, exit_code) = error.map_or(("ok", EXIT_OK), classify);
    RunRecord {
        status: status.into(),
        exit_code,
        message: error.map(|e| e.to_string()),
        t_final: last.t,
        steps: series.records.len() - 1,
        initial_length: first.length,
        initial_area: first.area,
        final_length: last.length,
        final_area: last.area,
        max_step_area_change: series
            .records
            .windows(2)
            .map(|w| (w[1].area - w[0].area).abs())
            .fold(0.0, f64::max),
        max_newton_iters: series.records.iter().map(|r| r.newton_iters).max().unwrap_or(0),
        halvings: series.records.iter().map(|r| r.halvings).sum(),
    }
}

/// Runs one experiment and writes everything under `config.out`. Only I/O
/// problems are returned as `Err`; numerical failures end up in the record.
pub fn run(config: &ExperimentConfig) -> io::Result<RunRecord> {
    if let Err(e) = config.validate() {
        return Ok(RunRecord::from(&e));
    }
    if let (Scheme::Rk4, OmegaRule::PerStep { factor }) = (config.scheme.0, config.omega.0) {
        // the relaxation term alone has eigenvalue -omega; RK4 needs dt*omega < 2.78
        warn!(
            "rk4 with omega = {factor} N/dt has dt*omega = {}, outside the RK4 stability interval; pass a constant --omega-rule",
            factor * config.n as f64
        );
    }
    let out = &config.out;
    fs::create_dir_all(out).map_err(io_at(out))?;
    fs::write(out.join("config.txt"), config.to_text()).map_err(io_at(out))?;

    let started = std::time::Instant::now();
    let record = match starting_curve(config) {
        Err(e) => {
            let (status, code) = classify(&e);
            RunRecord::failure(status, code, format!("initial curve: {e}"))
        }
        Ok(x0) => {
            let outcome = simulate(&x0, &simulation_params(config));
            let series = &outcome.series;
            write_timeseries(&out.join("timeseries.csv"), series)?;
            write_snapshots(&out.join("snapshots"), series)?;
            if config.svg {
                let plots: [(&str, plot::PlotResult); 3] = [
                    ("curves.svg", plot::curves(&out.join("curves.svg"), &series.snapshots)),
                    ("length_area.svg", plot::length_area(&out.join("length_area.svg"), &series.records)),
                    ("dt.svg", plot::step_sizes(&out.join("dt.svg"), &series.records)),
                ];
                for (name, result) in plots {
                    if let Err(e) = result {
                        return Err(io::Error::other(format!("{}: {e}", out.join(name).display())));
                    }
                }
            }
            summarize(series, outcome.error.as_ref())
        }
    };
    info!("{} finished in {:.2?}", out.display(), started.elapsed());
    if record.exit_code != EXIT_OK {
        warn!("{}: {}", out.display(), record.message.as_deref().unwrap_or(&record.status));
    }
    let result_path: PathBuf = out.join("result.json");
    fs::write(&result_path, record.to_json() + "\n").map_err(io_at(&result_path))?;
    Ok(record)
}
