//! Closed-loop episodes and resumable experiment sweeps.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::{cumulative_cost, mean_std, settled_smoothness, smoothness, summarize, Summary};
use crate::controller::{Controller, ControllerConfig, Method, SampleSource};
use crate::envs::{CartPole, Env, Task, TaskKind, Truck};
use crate::sampling::{generate_pool, load_pool, save_pool, OptimizerConfig, SamplePool};
use crate::{Error, Result};

/// Deterministic initial state for `seed`.
pub fn sample_initial_state(task: TaskKind, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match task {
        TaskKind::Truck => {
            let half_pi = std::f64::consts::FRAC_PI_2;
            vec![
                rng.random_range(80.0..=100.0),
                rng.random_range(-50.0..=50.0),
                rng.random_range(-half_pi..=half_pi),
                rng.random_range(-half_pi..=half_pi),
            ]
        }
        TaskKind::Cartpole => vec![0.0, 0.0, std::f64::consts::PI + rng.random_range(-0.05..=0.05), 0.0],
    }
}

pub fn build_task(config: &ExperimentConfig) -> Task {
    match config.experiment.task {
        TaskKind::Cartpole => Task::CartPole(CartPole::default()),
        TaskKind::Truck => Task::Truck(Truck::new(config.truck.jackknife)),
    }
}

/// States, applied controls and stage costs of one closed-loop episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub state_names: Vec<String>,
    /// `x_0 … x_{T−1}`.
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    /// `g_k(x_k, u_k)`.
    pub stage_costs: Vec<f64>,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.stage_costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stage_costs.is_empty()
    }

    pub fn cumulative_cost(&self) -> f64 {
        cumulative_cost(&self.stage_costs)
    }

    pub fn smoothness(&self) -> f64 {
        smoothness(&self.controls)
    }

    pub fn settled_smoothness(&self) -> f64 {
        settled_smoothness(&self.controls)
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["step".to_string()];
        h.extend(self.state_names.iter().cloned());
        let du = self.controls.first().map_or(0, Vec::len);
        h.extend((0..du).map(|i| format!("u{i}")));
        h.push("stage_cost".into());
        h
    }

    /// CSV text; floats use the shortest round-trip representation.
    pub fn to_csv_string(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        for k in 0..self.len() {
            out.push_str(&k.to_string());
            for v in self.states[k].iter().chain(&self.controls[k]).chain([&self.stage_costs[k]]) {
                out.push(',');
                out.push_str(&format!("{v:?}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn read_csv(path: impl AsRef<Path>, state_dim: usize) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        if headers.len() < state_dim + 3 {
            return Err(Error::Config(format!("{}: too few columns", path.display())));
        }
        let du = headers.len() - state_dim - 2;
        let mut record = EpisodeRecord {
            state_names: headers.iter().skip(1).take(state_dim).map(str::to_string).collect(),
            states: Vec::new(),
            controls: Vec::new(),
            stage_costs: Vec::new(),
        };
        for row in reader.records() {
            let row = row.map_err(|e| Error::csv(path, e))?;
            let values: Vec<f64> = row
                .iter()
                .skip(1)
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            record.states.push(values[..state_dim].to_vec());
            record.controls.push(values[state_dim..state_dim + du].to_vec());
            record.stage_costs.push(values[state_dim + du]);
        }
        Ok(record)
    }
}

/// Runs `steps` MPC steps from `x0`; returns the record and per-step wall
/// times in seconds.
pub fn run_episode<E: Env>(
    env: &E,
    config: ControllerConfig,
    pool: Option<Arc<SamplePool>>,
    x0: &[f64],
    steps: usize,
) -> Result<(EpisodeRecord, Vec<f64>)> {
    let mut controller = Controller::new(env, config, pool)?;
    let mut record = EpisodeRecord {
        state_names: env.state_names().iter().map(|s| s.to_string()).collect(),
        states: Vec::with_capacity(steps),
        controls: Vec::with_capacity(steps),
        stage_costs: Vec::with_capacity(steps),
    };
    let mut times = Vec::with_capacity(steps);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; x.len()];
    for _ in 0..steps {
        let start = Instant::now();
        let out = controller.step(&x)?;
        times.push(start.elapsed().as_secs_f64());
        let g = env.cost().stage_cost(&x, &out.control);
        env.step(&x, &out.control, &mut next);
        record.states.push(std::mem::replace(&mut x, next.clone()));
        record.controls.push(out.control);
        record.stage_costs.push(g);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteCost {
                index: record.len(),
                value: f64::NAN,
            });
        }
    }
    Ok((record, times))
}

/// [`run_episode`] on a runtime-selected task.
pub fn run_task_episode(
    task: &Task,
    config: ControllerConfig,
    pool: Option<Arc<SamplePool>>,
    x0: &[f64],
    steps: usize,
) -> Result<(EpisodeRecord, Vec<f64>)> {
    match task {
        Task::CartPole(env) => run_episode(env, config, pool, x0, steps),
        Task::Truck(env) => run_episode(env, config, pool, x0, steps),
    }
}

/// One line of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub task: TaskKind,
    pub method: Method,
    pub sample_count: usize,
    pub seed: u64,
    pub steps: usize,
    pub cumulative_cost: f64,
    pub smoothness: f64,
    pub settled_smoothness: f64,
    pub step_time_mean_ms: f64,
    pub step_time_std_ms: f64,
}

impl RunRow {
    pub fn from_record(key: &RunKey, task: TaskKind, record: &EpisodeRecord, step_seconds: &[f64]) -> Self {
        let (mean, std) = mean_std(step_seconds);
        RunRow {
            task,
            method: key.method,
            sample_count: key.sample_count,
            seed: key.seed,
            steps: record.len(),
            cumulative_cost: record.cumulative_cost(),
            smoothness: record.smoothness(),
            settled_smoothness: record.settled_smoothness(),
            step_time_mean_ms: mean * 1e3,
            step_time_std_ms: std * 1e3,
        }
    }
}

/// One line of `summary.csv`: median and quartiles over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: TaskKind,
    pub method: Method,
    pub sample_count: usize,
    pub runs: usize,
    pub cost_median: f64,
    pub cost_q25: f64,
    pub cost_q75: f64,
    pub smoothness_median: f64,
    pub smoothness_q25: f64,
    pub smoothness_q75: f64,
    pub settled_median: f64,
    pub settled_q25: f64,
    pub settled_q75: f64,
    pub step_time_ms_median: f64,
}

pub fn summarize_rows(rows: &[RunRow]) -> Result<Vec<SummaryRow>> {
    let mut groups: BTreeMap<(TaskKind, Method, usize), Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.task, r.method, r.sample_count)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((task, method, sample_count), rs)| {
            let stat = |f: fn(&RunRow) -> f64| -> Result<Summary> {
                summarize(&rs.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            let cost = stat(|r| r.cumulative_cost)?;
            let smooth = stat(|r| r.smoothness)?;
            let settled = stat(|r| r.settled_smoothness)?;
            let time = stat(|r| r.step_time_mean_ms)?;
            Ok(SummaryRow {
                task,
                method,
                sample_count,
                runs: rs.len(),
                cost_median: cost.median,
                cost_q25: cost.q25,
                cost_q75: cost.q75,
                smoothness_median: smooth.median,
                smoothness_q25: smooth.q25,
                smoothness_q75: smooth.q75,
                settled_median: settled.median,
                settled_q25: settled.q25,
                settled_q75: settled.q75,
                step_time_ms_median: time.median,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunKey {
    pub method: Method,
    pub sample_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFailure {
    pub key: RunKey,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// Runs executed by this invocation.
    pub executed: usize,
    /// Runs whose outputs already existed.
    pub skipped: usize,
    pub failures: Vec<RunFailure>,
    pub rows: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
    pub task_dir: PathBuf,
}

pub fn task_dir(output_dir: &Path, task: TaskKind) -> PathBuf {
    output_dir.join(task.name())
}

pub fn episode_path(output_dir: &Path, task: TaskKind, key: &RunKey) -> PathBuf {
    task_dir(output_dir, task)
        .join(key.method.name())
        .join(format!("N{}", key.sample_count))
        .join(format!("seed{}.csv", key.seed))
}

fn row_path(episode: &Path) -> PathBuf {
    episode.with_extension("run.csv")
}

/// Writes through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv("<memory>", e))?;
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::csv(path, e))
}

/// Cached pool at `{output_dir}/pools`, regenerated if the optimizer
/// settings differ from the recorded provenance.
pub fn pool_for(output_dir: &Path, dim: usize, count: usize, optimizer: &OptimizerConfig) -> Result<SamplePool> {
    let path = output_dir.join("pools").join(format!("d{dim}_n{count}.pool"));
    if path.exists() {
        if let Ok(pool) = load_pool(&path) {
            let p = pool.provenance();
            if pool.dim() == dim
                && pool.count() == count
                && p.seed == optimizer.seed
                && p.kernel_width_max == optimizer.kernel_width_max
                && p.moment_correction == optimizer.moment_correction
            {
                return Ok(pool);
            }
        }
    }
    let pool = match generate_pool(dim, count, optimizer) {
        Ok(pool) => pool,
        Err(Error::NotConverged { best, .. }) => *best,
        Err(e) => return Err(e),
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension(format!("pool.tmp{}", std::process::id()));
    save_pool(&pool, &tmp)?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(pool)
}

fn pool_dim(config: &ControllerConfig, control_dim: usize) -> Option<usize> {
    match config.wiring().source {
        SampleSource::Random => None,
        SampleSource::Pool(scheme) => Some(scheme.pool_dim(config.horizon * control_dim)),
    }
}

fn control_dim(task: TaskKind) -> usize {
    match Task::new(task) {
        Task::CartPole(env) => env.control_dim(),
        Task::Truck(env) => env.control_dim(),
    }
}

fn state_dim(task: TaskKind) -> usize {
    match Task::new(task) {
        Task::CartPole(env) => env.state_dim(),
        Task::Truck(env) => env.state_dim(),
    }
}

fn execute_run(
    config: &ExperimentConfig,
    key: &RunKey,
    pools: &BTreeMap<(usize, usize), Arc<SamplePool>>,
) -> Result<RunRow> {
    let kind = config.experiment.task;
    let out = &config.experiment.output_dir;
    let episode = episode_path(out, kind, key);
    let rows = row_path(&episode);
    if episode.exists() && rows.exists() {
        if let Some(row) = read_rows::<RunRow>(&rows)?.into_iter().next() {
            return Ok(row);
        }
    }
    let ctrl = config.controller_config(key.method, key.sample_count, key.seed)?;
    let pool = pool_dim(&ctrl, control_dim(kind)).map(|d| pools[&(d, key.sample_count)].clone());
    let task = build_task(config);
    let x0 = sample_initial_state(kind, key.seed);
    let (record, times) = run_task_episode(&task, ctrl, pool, &x0, config.episode_length())?;
    let row = RunRow::from_record(key, kind, &record, &times);
    write_atomic(&episode, record.to_csv_string().as_bytes())?;
    write_atomic(&rows, &rows_to_csv(std::slice::from_ref(&row))?)?;
    Ok(row)
}

/// Runs every `(method, N, seed)` of the config, skipping runs whose
/// outputs exist, then writes `runs.csv` and `summary.csv` under
/// `{output_dir}/{task}`. Failed runs are reported, not fatal.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let e = &config.experiment;
    let kind = e.task;
    let mut keys = Vec::new();
    for &method in &e.methods {
        for &sample_count in &e.sample_counts {
            for seed in config.seeds() {
                keys.push(RunKey {
                    method,
                    sample_count,
                    seed,
                });
            }
        }
    }
    keys.sort();
    keys.dedup();

    let done = |k: &RunKey| {
        let p = episode_path(&e.output_dir, kind, k);
        p.exists() && row_path(&p).exists()
    };
    let skipped = keys.iter().filter(|k| done(k)).count();

    // Pools needed by runs that still have to execute.
    let mut needed = Vec::new();
    for k in keys.iter().filter(|k| !done(k)) {
        let ctrl = config.controller_config(k.method, k.sample_count, k.seed)?;
        if let Some(d) = pool_dim(&ctrl, control_dim(kind)) {
            needed.push((d, k.sample_count));
        }
    }
    needed.sort();
    needed.dedup();
    let pools: BTreeMap<(usize, usize), Arc<SamplePool>> = needed
        .par_iter()
        .map(|&(d, n)| pool_for(&e.output_dir, d, n, &config.pool).map(|p| ((d, n), Arc::new(p))))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();

    let run = |k: &RunKey| (*k, execute_run(config, k, &pools));
    let results: Vec<(RunKey, Result<RunRow>)> = if e.parallel {
        keys.par_iter().map(run).collect()
    } else {
        keys.iter().map(run).collect()
    };

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (key, r) in results {
        match r {
            Ok(row) => rows.push(row),
            Err(err) => failures.push(RunFailure {
                key,
                message: err.to_string(),
            }),
        }
    }
    let summary = summarize_rows(&rows)?;
    let dir = task_dir(&e.output_dir, kind);
    write_atomic(&dir.join("runs.csv"), &rows_to_csv(&rows)?)?;
    write_atomic(&dir.join("summary.csv"), &rows_to_csv(&summary)?)?;
    Ok(ExperimentReport {
        executed: keys.len() - skipped - failures.len(),
        skipped,
        failures,
        rows,
        summary,
        task_dir: dir,
    })
}

/// Rebuilds `runs.csv` and `summary.csv` of a task directory from the
/// per-run files, recomputing every metric from the episode CSVs.
pub fn summarize_dir(task_dir: &Path) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    let mut row_files = Vec::new();
    collect_row_files(task_dir, &mut row_files)?;
    row_files.sort();
    for path in row_files {
        for mut row in read_rows::<RunRow>(&path)? {
            let episode = PathBuf::from(path.to_string_lossy().trim_end_matches(".run.csv").to_string() + ".csv");
            let record = EpisodeRecord::read_csv(&episode, state_dim(row.task))?;
            row.steps = record.len();
            row.cumulative_cost = record.cumulative_cost();
            row.smoothness = record.smoothness();
            row.settled_smoothness = record.settled_smoothness();
            rows.push(row);
        }
    }
    rows.sort_by_key(|r| (r.method, r.sample_count, r.seed));
    let summary = summarize_rows(&rows)?;
    write_atomic(&task_dir.join("runs.csv"), &rows_to_csv(&rows)?)?;
    write_atomic(&task_dir.join("summary.csv"), &rows_to_csv(&summary)?)?;
    Ok(summary)
}

fn collect_row_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_row_files(&path, out)?;
        } else if path.to_string_lossy().ends_with(".run.csv") {
            out.push(path);
        }
    }
    Ok(())
}
