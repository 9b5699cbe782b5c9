//! Executes the engines of a scenario over its seeds and writes the results.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mpf_core::continuous_filter::{run_continuous_filter, simulate_truth_and_observations, PathBundle};
use mpf_core::discrete_filter::{run_discrete_filter, simulate_discrete_observations, FilterFailure, FilterTrajectory};
use mpf_core::dynamics::UniformGrid;
use mpf_core::oracles::{
    galerkin_discrete_filter, galerkin_ito_filter, grid_discrete_filter, grid_kushner_solve, kalman_bucy,
    kalman_discrete, particle_filter_continuous, particle_filter_discrete, GridDensity, GridTrajectory,
    MomentTrajectory, ParticleTrajectory,
};
use mpf_core::ScalarField;

use crate::config::{Engine, Mode, Scenario};
use crate::error::CliError;

/// One line of an engine CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub t: f64,
    pub engine: String,
    pub mean: f64,
    pub variance: f64,
    pub l2_residual_drift: Option<f64>,
    pub ess: Option<f64>,
    pub events: usize,
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub seed: u64,
    pub engine: String,
    pub status: String,
    pub records: usize,
    pub events: usize,
    pub final_t: Option<f64>,
    pub final_mean: Option<f64>,
    pub final_variance: Option<f64>,
    pub integrated_residual: Option<f64>,
    pub reference: String,
    pub max_mean_gap: Option<f64>,
    pub max_variance_gap: Option<f64>,
    pub final_l2_vs_mpf: Option<f64>,
    pub error: String,
}

pub enum FinalDensity {
    Mixture(ScalarField),
    Grid(GridDensity),
}

pub struct EngineRun {
    pub engine: Engine,
    pub seed: u64,
    pub rows: Vec<Row>,
    pub error: Option<String>,
    pub events: usize,
    pub integrated_residual: Option<f64>,
    pub density: Option<FinalDensity>,
    pub seconds: f64,
}

pub struct RunReport {
    pub scenario: Scenario,
    pub runs: Vec<EngineRun>,
}

impl RunReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn get(&self, engine: Engine, seed: u64) -> Option<&EngineRun> {
        self.runs.iter().find(|r| r.engine == engine && r.seed == seed)
    }
}

pub fn csv_name(engine: Engine, seed: u64) -> String {
    format!("{}-s{seed}.csv", engine.name())
}

enum Observations {
    Discrete(Vec<f64>),
    Continuous(PathBundle),
}

fn simulate(sc: &Scenario, seed: u64) -> mpf_core::Result<Observations> {
    let model = sc.diffusion_model();
    let x0 = sc.x0(seed)?;
    match sc.observation.mode {
        Mode::Discrete => {
            let obs = sc.discrete_obs()?;
            let (_, zs) = simulate_discrete_observations(&model, &obs, 0.0, x0, sc.observation.dt, seed)?;
            Ok(Observations::Discrete(zs))
        }
        Mode::Continuous => {
            let obs = sc.continuous_obs()?;
            let path = simulate_truth_and_observations(&model, &obs, sc.horizon(), sc.observation.dt, x0, seed)?;
            Ok(Observations::Continuous(path))
        }
    }
}

fn filter_rows(engine: Engine, tr: &FilterTrajectory) -> Vec<Row> {
    (0..tr.len())
        .map(|k| Row {
            t: tr.times[k],
            engine: engine.name().to_string(),
            mean: tr.means[k],
            variance: tr.variances[k],
            l2_residual_drift: tr.residuals.get(k).copied(),
            ess: None,
            events: tr.events_at(k),
        })
        .collect()
}

/// Keeps record k when k is a multiple of `every` or the last one.
fn thinned(n: usize, every: usize) -> impl Iterator<Item = usize> {
    (0..n).filter(move |k| k % every == 0 || k + 1 == n)
}

fn moment_rows(engine: Engine, m: &MomentTrajectory, every: usize) -> Vec<Row> {
    thinned(m.len(), every)
        .map(|k| Row {
            t: m.times[k],
            engine: engine.name().to_string(),
            mean: m.means[k],
            variance: m.variances[k],
            l2_residual_drift: None,
            ess: None,
            events: 0,
        })
        .collect()
}

fn particle_rows(p: &ParticleTrajectory, every: usize) -> Vec<Row> {
    thinned(p.times.len(), every)
        .map(|k| Row {
            t: p.times[k],
            engine: Engine::Particle.name().to_string(),
            mean: p.means[k],
            variance: p.variances[k],
            l2_residual_drift: None,
            ess: Some(p.ess[k]),
            events: 0,
        })
        .collect()
}

impl EngineRun {
    fn new(engine: Engine, seed: u64) -> Self {
        EngineRun {
            engine,
            seed,
            rows: Vec::new(),
            error: None,
            events: 0,
            integrated_residual: None,
            density: None,
            seconds: 0.0,
        }
    }

    fn take_filter(&mut self, res: Result<FilterTrajectory, FilterFailure>, with_density: bool) {
        let tr = match res {
            Ok(tr) => tr,
            Err(f) => {
                self.error = Some(f.error.to_string());
                f.trajectory
            }
        };
        self.rows = filter_rows(self.engine, &tr);
        self.events = tr.events.len();
        if !tr.residuals.is_empty() {
            self.integrated_residual = Some(tr.integrated_residual());
        }
        if with_density && self.error.is_none() && !tr.is_empty() {
            let (fam, hat) = tr.state(tr.len() - 1);
            self.density = Some(FinalDensity::Mixture(fam.density_hat(&hat)));
        }
    }

    fn take_grid(&mut self, g: GridTrajectory, every: usize) {
        self.rows = moment_rows(Engine::Grid, &g.moments, every);
        self.events = g.floor_events;
        self.density = g.snapshots.into_iter().last().map(|(_, d)| FinalDensity::Grid(d));
    }
}

fn run_engine(sc: &Scenario, engine: Engine, seed: u64, obs_data: &Observations) -> mpf_core::Result<EngineRun> {
    let mut out = EngineRun::new(engine, seed);
    let model = sc.diffusion_model();
    let law = sc.initial_law()?;
    let every = sc.integrator.record_every;
    let substeps = sc.integrator.substeps;
    let grid_p0 = || -> mpf_core::Result<GridDensity> {
        let g = &sc.run.grid;
        GridDensity::from_law(UniformGrid::new(g.lo, g.hi, g.nodes)?, &law)
    };
    match obs_data {
        Observations::Discrete(zs) => {
            let obs = sc.discrete_obs()?;
            match engine {
                Engine::Mpf => out.take_filter(run_discrete_filter(&sc.discrete_scenario(zs.clone())?), true),
                Engine::Galerkin => {
                    out.take_filter(galerkin_discrete_filter(&sc.discrete_scenario(zs.clone())?), false)
                }
                Engine::Particle => {
                    let p = particle_filter_discrete(
                        &model,
                        &obs,
                        zs,
                        0.0,
                        &law,
                        sc.run.particles,
                        seed,
                        sc.observation.dt,
                        substeps,
                    )?;
                    out.events = p.resamples;
                    out.rows = particle_rows(&p, 1);
                }
                Engine::Grid => {
                    let g = grid_discrete_filter(
                        &model,
                        &obs,
                        zs,
                        &grid_p0()?,
                        0.0,
                        sc.run.grid.dt,
                        sc.grid_scheme(),
                        substeps,
                    )?;
                    out.take_grid(g, 1);
                }
                Engine::Kalman => {
                    let k = kalman_discrete(&model, &obs, zs, 0.0, law.mean(), law.variance(), substeps)?;
                    out.rows = moment_rows(Engine::Kalman, &k, 1);
                }
            }
        }
        Observations::Continuous(path) => {
            let obs = sc.continuous_obs()?;
            match engine {
                Engine::Mpf => out.take_filter(run_continuous_filter(&sc.continuous_scenario(path.clone())?), true),
                Engine::Galerkin => {
                    out.take_filter(galerkin_ito_filter(&sc.family()?, &sc.theta0()?, &model, &obs, path, every), false)
                }
                Engine::Particle => {
                    let p = particle_filter_continuous(&model, &obs, path, &law, sc.run.particles, seed)?;
                    out.events = p.resamples;
                    out.rows = particle_rows(&p, every);
                }
                Engine::Grid => {
                    let fp_dt = sc.run.grid.dt.min(path.dt);
                    let g = grid_kushner_solve(&model, &obs, &grid_p0()?, path, sc.grid_scheme(), Some(fp_dt))?;
                    out.take_grid(g, every);
                }
                Engine::Kalman => {
                    let k = kalman_bucy(&model, &obs, path, law.mean(), law.variance())?;
                    out.rows = moment_rows(Engine::Kalman, &k, every);
                }
            }
        }
    }
    Ok(out)
}

/// Runs every requested engine for every seed. Engine failures are recorded
/// in the report, never propagated.
pub fn execute(sc: &Scenario) -> RunReport {
    let jobs: Vec<(u64, Engine)> =
        sc.run.seeds.iter().flat_map(|&s| sc.run.engines.iter().map(move |&e| (s, e))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(seed, engine)| {
            let start = Instant::now();
            let mut run = match simulate(sc, seed).and_then(|o| run_engine(sc, engine, seed, &o)) {
                Ok(r) => r,
                Err(e) => {
                    let mut r = EngineRun::new(engine, seed);
                    r.error = Some(e.to_string());
                    r
                }
            };
            run.seconds = start.elapsed().as_secs_f64();
            run
        })
        .collect();
    RunReport { scenario: sc.clone(), runs }
}

/// Pairs rows whose times agree to 1e-9.
pub fn align<'a>(a: &'a [Row], b: &'a [Row]) -> Vec<(&'a Row, &'a Row)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let d = a[i].t - b[j].t;
        if d.abs() <= 1e-9 {
            out.push((&a[i], &b[j]));
            i += 1;
            j += 1;
        } else if d < 0.0 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn max_gaps(a: &[Row], b: &[Row]) -> Option<(f64, f64)> {
    let pairs = align(a, b);
    if pairs.is_empty() {
        return None;
    }
    Some(pairs.iter().fold((0.0f64, 0.0f64), |(m, v), (x, y)| {
        (m.max((x.mean - y.mean).abs()), v.max((x.variance - y.variance).abs()))
    }))
}

pub fn summarize(report: &RunReport) -> Vec<SummaryRow> {
    let engines = &report.scenario.run.engines;
    let reference = if engines.contains(&Engine::Mpf) { Engine::Mpf } else { engines[0] };
    let mut out = Vec::new();
    for &seed in &report.scenario.run.seeds {
        let ref_run = report.get(reference, seed);
        let mixture = report.get(Engine::Mpf, seed).and_then(|r| match &r.density {
            Some(FinalDensity::Mixture(f)) => Some(f),
            _ => None,
        });
        for &engine in engines {
            let Some(run) = report.get(engine, seed) else { continue };
            let last = run.rows.last();
            let gaps = ref_run.and_then(|r| max_gaps(&r.rows, &run.rows));
            let l2 = match (&run.density, mixture) {
                (Some(FinalDensity::Grid(g)), Some(f)) => Some(g.l2_distance_to(|x| f.eval1(x))),
                _ => None,
            };
            out.push(SummaryRow {
                seed,
                engine: engine.name().to_string(),
                status: if run.error.is_some() { "failed" } else { "ok" }.to_string(),
                records: run.rows.len(),
                events: run.events,
                final_t: last.map(|r| r.t),
                final_mean: last.map(|r| r.mean),
                final_variance: last.map(|r| r.variance),
                integrated_residual: run.integrated_residual,
                reference: reference.name().to_string(),
                max_mean_gap: gaps.map(|g| g.0),
                max_variance_gap: gaps.map(|g| g.1),
                final_l2_vs_mpf: l2,
                error: run.error.clone().unwrap_or_default(),
            });
        }
    }
    out
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes one CSV per engine and seed, `summary.csv`, the echoed scenario and
/// (separately, since it is not deterministic) the wall-clock per engine.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for run in &report.runs {
        let path = dir.join(csv_name(run.engine, run.seed));
        if run.rows.is_empty() {
            // keep the header so every requested engine has a file
            let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
            w.write_record(["t", "engine", "mean", "variance", "l2_residual_drift", "ess", "events"])
                .map_err(|e| io_err(&path, e))?;
            w.flush().map_err(|e| io_err(&path, e))?;
        } else {
            write_csv(&path, &run.rows)?;
        }
    }
    write_csv(&dir.join("summary.csv"), &summarize(report))?;
    let echo = dir.join("scenario.toml");
    fs::write(&echo, report.scenario.to_toml()).map_err(|e| io_err(&echo, e))?;
    let timing: String =
        report.runs.iter().map(|r| format!("{} {} {:.6}\n", r.engine.name(), r.seed, r.seconds)).collect();
    let tpath = dir.join("timing.txt");
    fs::write(&tpath, timing).map_err(|e| io_err(&tpath, e))
}

/// `run` verb: execute and write; engine failures turn into exit status 3.
pub fn run(sc: &Scenario, dir: &Path) -> Result<RunReport, CliError> {
    let report = execute(sc);
    write_report(&report, dir)?;
    Ok(report)
}
