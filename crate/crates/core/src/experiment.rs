//! Batch trials: solve, validate, score and tabulate.
//!
//! A trial is one (target, link count, mode) triple. Trials are independent
//! and run on a worker pool; every random choice inside a trial derives from
//! the batch seed and the trial key, so results do not depend on scheduling.
//! A trial counts as done once its solution file exists, which makes
//! interrupted batches resumable.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_uniform_model, PhysicalParams, MAX_LINKS};
use crate::morphometrics::paired_t_test;
use crate::multistart::{init_point, init_strategies, solve_from, warm_point, InitStrategy};
use crate::simulate::{collocation_metrics, validate, TrialMetrics};
use crate::solver::SolverConfig;
use crate::trajgen::FourierTarget;
use crate::transcription::{Grid, Mode, NlpProblem, Solution, MAX_VARIABLE_LINKS};

/// Status written for a trial whose re-simulation drifted too far.
pub const VALIDATION_FAILED: &str = "validation_failed";
/// Status written for a trial that produced no solution.
pub const FAILED: &str = "failed";

/// Which initial guesses a trial solves from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Starts {
    /// Zeros, straight line and seeded random starts.
    All,
    /// A single start of the given kind; random seeds still derive from
    /// the trial key.
    Only(InitStrategy),
}

#[derive(Clone, Debug)]
pub struct TrialSettings {
    pub params: PhysicalParams,
    pub grid: Grid,
    pub solver: SolverConfig,
    pub seed: u64,
    pub starts: Starts,
}

impl TrialSettings {
    /// Standard grid, tail-problem solver scaling and all five starts.
    pub fn new(params: PhysicalParams, seed: u64) -> Self {
        Self { params, grid: Grid::standard(), solver: tail_solver_config(), seed, starts: Starts::All }
    }
}

/// Solver settings tuned for tail problems, whose objectives are
/// typically 1e-5 to 1e-2 rad²·s.
pub fn tail_solver_config() -> SolverConfig {
    SolverConfig { objective_scale: 1e3, max_iterations: 3000, ..SolverConfig::default() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrialKey {
    pub target_index: usize,
    pub n_links: usize,
    pub mode: Mode,
}

impl TrialKey {
    pub fn id(&self) -> String {
        format!("{}-n{}-t{:03}", self.mode, self.n_links, self.target_index)
    }

    /// Seed of this trial's random starts.
    pub fn start_seed(&self, batch_seed: u64) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(batch_seed);
        let mode = matches!(self.mode, Mode::Variable) as u64;
        rng.set_stream(((self.target_index as u64) << 8) | ((self.n_links as u64) << 1) | mode);
        rng.next_u64()
    }
}

/// Everything one trial produced.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub key: TrialKey,
    pub solution: Solution,
    pub metrics: TrialMetrics,
    /// Solver status, or [`VALIDATION_FAILED`].
    pub status: String,
    pub wall_time_s: f64,
}

impl TrialOutcome {
    pub fn validated(&self) -> bool {
        self.status != VALIDATION_FAILED
    }
}

/// Solves one trial. Variable-length trials with a `warm` solution start
/// from it, and the warm start itself stays a candidate, so they never end
/// worse than the solution they started from.
pub fn run_trial(settings: &TrialSettings, target: &FourierTarget, key: TrialKey, warm: Option<&Solution>) -> Result<TrialOutcome> {
    let clock = Instant::now();
    if key.mode == Mode::Variable && key.n_links > MAX_VARIABLE_LINKS {
        return Err(Error::invalid("links", format!("variable mode supports 1..={MAX_VARIABLE_LINKS} links")));
    }
    let model = build_uniform_model(key.n_links, &settings.params)?;
    let nlp = NlpProblem::new(&model, target, settings.grid, key.mode)?;
    let seed = key.start_seed(settings.seed);
    let mut starts = Vec::new();
    if let Some(w) = warm {
        starts.push((InitStrategy::WarmStart, warm_point(&nlp, w)?));
    }
    match settings.starts {
        Starts::All => starts.extend(init_strategies(&nlp, seed)?),
        Starts::Only(s) if warm.is_none() || s != InitStrategy::WarmStart => {
            let s = match s {
                InitStrategy::Random(_) => InitStrategy::Random(seed),
                other => other,
            };
            starts.push((s, init_point(&nlp, s)?));
        }
        Starts::Only(_) => {}
    }
    let mut solution = solve_from(&nlp, starts, &settings.solver)?.best;
    if let Some(w) = warm {
        let z = warm_point(&nlp, w)?;
        let warm_objective = nlp.eval_objective(&z)?;
        if warm_objective < solution.objective {
            info!("{}: keeping warm start ({warm_objective:.6e} < {:.6e})", key.id(), solution.objective);
            solution = nlp.unpack(&z, w.status, 0, nlp.violation(&z)?)?;
        }
    }
    let mut metrics = collocation_metrics(&solution, target, &model)?;
    let v = validate(&solution, &model)?;
    metrics.validation_rms = v.torso_rms;
    if !v.passed() {
        warn!("{}: re-simulation drifted {:.3e} rad RMS (full state {:.3e})", key.id(), v.torso_rms, v.full_rms);
    }
    let status = if v.passed() { solution.status.to_string() } else { VALIDATION_FAILED.to_string() };
    Ok(TrialOutcome { key, solution, metrics, status, wall_time_s: clock.elapsed().as_secs_f64() })
}

/// Column order of the results table.
pub const RESULT_COLUMNS: [&str; 18] = [
    "trial_id",
    "target_seed",
    "n_links",
    "mode",
    "lengths",
    "objective_rad2s",
    "tracking_error",
    "max_tip_speed_mps",
    "effort_j1",
    "effort_j2",
    "effort_j3",
    "effort_j4",
    "effort_j5",
    "effort_j6",
    "effort_saturation",
    "validation_rms_rad",
    "solver_status",
    "wall_time_s",
];

/// One line of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub trial_id: String,
    pub target_seed: u64,
    pub n_links: usize,
    pub mode: Mode,
    /// Link lengths, m, separated by `;`.
    pub lengths: String,
    pub objective_rad2s: Option<f64>,
    pub tracking_error: Option<f64>,
    pub max_tip_speed_mps: Option<f64>,
    pub effort_j1: Option<f64>,
    pub effort_j2: Option<f64>,
    pub effort_j3: Option<f64>,
    pub effort_j4: Option<f64>,
    pub effort_j5: Option<f64>,
    pub effort_j6: Option<f64>,
    pub effort_saturation: Option<f64>,
    pub validation_rms_rad: Option<f64>,
    pub solver_status: String,
    pub wall_time_s: f64,
}

impl ResultRow {
    pub fn from_outcome(o: &TrialOutcome) -> Self {
        let e = |j: usize| o.metrics.per_joint_effort.get(j).copied();
        Self {
            trial_id: o.key.id(),
            target_seed: o.key.target_index as u64,
            n_links: o.key.n_links,
            mode: o.key.mode,
            lengths: o.solution.lengths.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"),
            objective_rad2s: Some(o.solution.objective),
            tracking_error: Some(o.metrics.tracking_error),
            max_tip_speed_mps: Some(o.metrics.max_tip_speed),
            effort_j1: e(0),
            effort_j2: e(1),
            effort_j3: e(2),
            effort_j4: e(3),
            effort_j5: e(4),
            effort_j6: e(5),
            effort_saturation: Some(o.metrics.effort_saturation),
            validation_rms_rad: Some(o.metrics.validation_rms),
            solver_status: o.status.clone(),
            wall_time_s: o.wall_time_s,
        }
    }

    fn failed(key: TrialKey, wall_time_s: f64) -> Self {
        Self {
            trial_id: key.id(),
            target_seed: key.target_index as u64,
            n_links: key.n_links,
            mode: key.mode,
            lengths: String::new(),
            objective_rad2s: None,
            tracking_error: None,
            max_tip_speed_mps: None,
            effort_j1: None,
            effort_j2: None,
            effort_j3: None,
            effort_j4: None,
            effort_j5: None,
            effort_j6: None,
            effort_saturation: None,
            validation_rms_rad: None,
            solver_status: FAILED.into(),
            wall_time_s,
        }
    }

    /// Successful and validated rows enter summary statistics.
    pub fn counts(&self) -> bool {
        self.solver_status != FAILED && self.solver_status != VALIDATION_FAILED && self.objective_rad2s.is_some()
    }

    pub fn effort(&self) -> Vec<Option<f64>> {
        vec![self.effort_j1, self.effort_j2, self.effort_j3, self.effort_j4, self.effort_j5, self.effort_j6]
    }
}

pub fn write_results<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(Path::new("<results>"), e))?;
    Ok(())
}

pub fn read_results<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// A sweep over link counts and targets in one mode.
#[derive(Clone, Debug)]
pub struct BatchPlan {
    pub settings: TrialSettings,
    pub targets: Vec<FourierTarget>,
    pub links: Vec<usize>,
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub jobs: usize,
}

impl BatchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::invalid("targets", "no targets"));
        }
        if self.links.is_empty() || self.links.iter().any(|n| *n == 0 || *n > MAX_LINKS) {
            return Err(Error::invalid("links", format!("link counts must be in 1..={MAX_LINKS}")));
        }
        if self.mode == Mode::Variable && self.links.iter().any(|n| *n > MAX_VARIABLE_LINKS) {
            return Err(Error::invalid("links", format!("variable mode supports 1..={MAX_VARIABLE_LINKS} links")));
        }
        if self.jobs == 0 {
            return Err(Error::invalid("jobs", "must be at least 1"));
        }
        self.settings.solver.validate()
    }

    pub fn keys(&self) -> Vec<TrialKey> {
        let mut keys = Vec::new();
        for &n_links in &self.links {
            for target_index in 0..self.targets.len() {
                keys.push(TrialKey { target_index, n_links, mode: self.mode });
            }
        }
        keys
    }

    pub fn results_path(&self) -> PathBuf {
        self.out_dir.join("results.csv")
    }

    pub fn solution_path(&self, key: &TrialKey) -> PathBuf {
        self.out_dir.join("solutions").join(format!("{}.csv", key.id()))
    }

    fn bounds_path(&self) -> PathBuf {
        self.out_dir.join("bound_saturation.csv")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BoundRow {
    trial_id: String,
    position: f64,
    velocity: f64,
    torque: f64,
    effort: f64,
}

/// Rows of one batch plus what happened to each trial this run.
#[derive(Clone, Debug)]
pub struct BatchSummary {
    /// All rows of the batch, in plan order.
    pub rows: Vec<ResultRow>,
    pub computed: usize,
    pub resumed: usize,
    pub failed: usize,
}

impl BatchSummary {
    pub fn all_failed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.solver_status == FAILED)
    }
}

fn write_solution(path: &Path, sol: &Solution) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    sol.write_csv(std::io::BufWriter::new(file))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_solution(path: &Path) -> Result<Solution> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Solution::read_csv(BufReader::new(file))
}

struct Sink {
    results: fs::File,
    bounds: fs::File,
}

/// Runs every trial of the plan not already on disk. In variable mode
/// each trial first needs the uniform solution for the same target and
/// link count; it is read from disk or solved and stored alongside.
pub fn run_batch(plan: &BatchPlan) -> Result<BatchSummary> {
    plan.validate()?;
    fs::create_dir_all(plan.out_dir.join("solutions")).map_err(|e| Error::io(&plan.out_dir, e))?;
    let existing: BTreeMap<String, ResultRow> = match fs::File::open(plan.results_path()) {
        Ok(f) => read_results(f)?.into_iter().map(|r| (r.trial_id.clone(), r)).collect(),
        Err(_) => BTreeMap::new(),
    };
    let open = |p: PathBuf| fs::OpenOptions::new().create(true).append(true).open(&p).map_err(|e| Error::io(&p, e));
    let sink = Mutex::new(Sink { results: open(plan.results_path())?, bounds: open(plan.bounds_path())? });
    {
        let mut s = sink.lock().expect("sink");
        if s.results.metadata().map(|m| m.len() == 0).unwrap_or(false) {
            writeln!(s.results, "{}", RESULT_COLUMNS.join(",")).map_err(|e| Error::io(&plan.results_path(), e))?;
        }
        if s.bounds.metadata().map(|m| m.len() == 0).unwrap_or(false) {
            writeln!(s.bounds, "trial_id,position,velocity,torque,effort").map_err(|e| Error::io(&plan.bounds_path(), e))?;
        }
    }

    let fresh_rows = Mutex::new(Vec::new());
    let append = |outcome: &TrialOutcome| -> Result<ResultRow> {
        let row = ResultRow::from_outcome(outcome);
        fresh_rows.lock().expect("rows").push(row.clone());
        let m = &outcome.metrics;
        let mut s = sink.lock().expect("sink");
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut s.results);
        w.serialize(&row)?;
        w.flush().map_err(|e| Error::io(&plan.results_path(), e))?;
        drop(w);
        let b = BoundRow { trial_id: row.trial_id.clone(), position: m.position_saturation, velocity: m.velocity_saturation, torque: m.torque_saturation, effort: m.effort_saturation };
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut s.bounds);
        w.serialize(&b)?;
        w.flush().map_err(|e| Error::io(&plan.bounds_path(), e))?;
        Ok(row)
    };

    let solve_key = |key: TrialKey| -> Result<(ResultRow, bool)> {
        let path = plan.solution_path(&key);
        if path.exists() {
            if let Some(row) = existing.get(&key.id()) {
                return Ok((row.clone(), false));
            }
        }
        let target = &plan.targets[key.target_index];
        let warm = if key.mode == Mode::Variable {
            let ukey = TrialKey { mode: Mode::Uniform, ..key };
            let upath = plan.solution_path(&ukey);
            let uniform = if upath.exists() {
                read_solution(&upath)?
            } else {
                let o = run_trial(&plan.settings, target, ukey, None)?;
                append(&o)?;
                write_solution(&upath, &o.solution)?;
                o.solution
            };
            Some(uniform)
        } else {
            None
        };
        let o = run_trial(&plan.settings, target, key, warm.as_ref())?;
        let row = append(&o)?;
        write_solution(&path, &o.solution)?;
        Ok((row, true))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|e| Error::invalid("jobs", e.to_string()))?;
    let keys = plan.keys();
    let results: Vec<(TrialKey, std::result::Result<(ResultRow, bool), String>, f64)> = pool.install(|| {
        keys.par_iter()
            .map(|&key| {
                let clock = Instant::now();
                let r = match catch_unwind(AssertUnwindSafe(|| solve_key(key))) {
                    Ok(Ok(v)) => Ok(v),
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(p) => Err(p
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| p.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "panic".into())),
                };
                (key, r, clock.elapsed().as_secs_f64())
            })
            .collect()
    });

    let mut summary = BatchSummary { rows: Vec::new(), computed: 0, resumed: 0, failed: 0 };
    let mut by_id: BTreeMap<String, ResultRow> = existing.clone();
    for r in fresh_rows.into_inner().expect("rows") {
        by_id.insert(r.trial_id.clone(), r);
    }
    for (key, r, secs) in results {
        match r {
            Ok((row, fresh)) => {
                if fresh {
                    summary.computed += 1;
                } else {
                    summary.resumed += 1;
                }
                by_id.insert(row.trial_id.clone(), row);
            }
            Err(e) => {
                warn!("trial {} failed: {e}", key.id());
                summary.failed += 1;
                by_id.insert(key.id(), ResultRow::failed(key, secs));
            }
        }
    }
    // rows of this plan first in plan order, then any other rows already on disk
    let mut seen = BTreeSet::new();
    let mut ordered = Vec::new();
    let mut extra_keys: Vec<TrialKey> = Vec::new();
    if plan.mode == Mode::Variable {
        extra_keys = keys.iter().map(|k| TrialKey { mode: Mode::Uniform, ..*k }).collect();
    }
    for k in extra_keys.iter().chain(&keys) {
        if let Some(r) = by_id.get(&k.id()) {
            if seen.insert(k.id()) {
                ordered.push(r.clone());
            }
        }
    }
    let plan_rows: Vec<ResultRow> = keys.iter().filter_map(|k| by_id.get(&k.id()).cloned()).collect();
    for (id, r) in &by_id {
        if !seen.contains(id) {
            ordered.push(r.clone());
        }
    }
    drop(sink);
    let tmp = plan.out_dir.join("results.csv.tmp");
    write_results(&ordered, fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?)?;
    fs::rename(&tmp, plan.results_path()).map_err(|e| Error::io(&plan.results_path(), e))?;
    summary.rows = plan_rows;
    Ok(summary)
}

/// Mean and quartiles of one metric in one configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricSummary {
    pub n_links: usize,
    pub mode: Mode,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Uniform against variable on the targets both solved.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairedComparison {
    pub n_links: usize,
    pub pairs: usize,
    pub mean_uniform: f64,
    pub mean_variable: f64,
    /// Mean relative improvement of variable over uniform, percent.
    pub improvement_pct: f64,
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub p: Option<f64>,
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug)]
pub struct Report {
    pub summaries: Vec<MetricSummary>,
    pub paired: Vec<PairedComparison>,
    /// Tidy `(trial_id, n_links, mode, metric, value)` records.
    pub plot_data: Vec<(String, usize, Mode, String, f64)>,
    pub excluded: usize,
}

fn metric_values(r: &ResultRow) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let mut push = |name: &str, v: Option<f64>| {
        if let Some(v) = v {
            out.push((name.to_string(), v));
        }
    };
    push("objective_rad2s", r.objective_rad2s);
    push("tracking_error", r.tracking_error);
    push("max_tip_speed_mps", r.max_tip_speed_mps);
    push("effort_saturation", r.effort_saturation);
    push("validation_rms_rad", r.validation_rms_rad);
    for (j, e) in r.effort().into_iter().enumerate() {
        push(&format!("effort_j{}", j + 1), e);
    }
    push("wall_time_s", Some(r.wall_time_s));
    out
}

/// Summary statistics per configuration and uniform/variable pairings.
/// Failed and unvalidated trials are left out.
pub fn report(rows: &[ResultRow]) -> Result<Report> {
    if rows.is_empty() {
        return Err(Error::invalid("results", "no rows"));
    }
    let good: Vec<&ResultRow> = rows.iter().filter(|r| r.counts()).collect();
    let excluded = rows.len() - good.len();
    let mut groups: BTreeMap<(usize, String, String), Vec<f64>> = BTreeMap::new();
    let mut plot_data = Vec::new();
    for r in &good {
        for (m, v) in metric_values(r) {
            groups.entry((r.n_links, r.mode.to_string(), m.clone())).or_default().push(v);
            plot_data.push((r.trial_id.clone(), r.n_links, r.mode, m, v));
        }
    }
    let mut summaries = Vec::new();
    for ((n_links, mode, metric), mut v) in groups {
        v.sort_by(f64::total_cmp);
        summaries.push(MetricSummary {
            n_links,
            mode: mode.parse()?,
            metric,
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
        });
    }
    let mut paired = Vec::new();
    let links: BTreeSet<usize> = good.iter().map(|r| r.n_links).collect();
    for n in links {
        let pick = |m: Mode| -> BTreeMap<u64, f64> {
            good.iter().filter(|r| r.n_links == n && r.mode == m).map(|r| (r.target_seed, r.objective_rad2s.unwrap_or(f64::NAN))).collect()
        };
        let (uni, var) = (pick(Mode::Uniform), pick(Mode::Variable));
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (t, u) in &uni {
            if let Some(v) = var.get(t) {
                a.push(*u);
                b.push(*v);
            }
        }
        if a.is_empty() {
            continue;
        }
        let test = paired_t_test(&a, &b).ok();
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let rel: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 100.0 * (u - v) / u).collect();
        paired.push(PairedComparison {
            n_links: n,
            pairs: a.len(),
            mean_uniform: mean(&a),
            mean_variable: mean(&b),
            improvement_pct: mean(&rel),
            t: test.map(|t| t.t),
            df: test.map(|t| t.df),
            p: test.map(|t| t.p),
        });
    }
    Ok(Report { summaries, paired, plot_data, excluded })
}

impl Report {
    /// Writes `summary.csv`, `paired.csv` and `plot_data.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
        for s in &self.summaries {
            w.serialize(s)?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;
        let mut w = csv::Writer::from_path(dir.join("paired.csv"))?;
        for p in &self.paired {
            w.serialize(p)?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;
        let mut w = csv::Writer::from_path(dir.join("plot_data.csv"))?;
        w.write_record(["trial_id", "n_links", "mode", "metric", "value"])?;
        for (id, n, m, metric, v) in &self.plot_data {
            w.write_record([id.clone(), n.to_string(), m.to_string(), metric.clone(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;
        Ok(())
    }

    /// Plain-text table of tracking error by configuration plus pairings.
    pub fn table(&self) -> String {
        let mut s = String::from("config          count  mean        q1          median      q3\n");
        for m in self.summaries.iter().filter(|m| m.metric == "tracking_error") {
            s.push_str(&format!(
                "{:<8} n={:<4} {:<6} {:<11.4e} {:<11.4e} {:<11.4e} {:.4e}\n",
                m.mode.to_string(),
                m.n_links,
                m.count,
                m.mean,
                m.q1,
                m.median,
                m.q3
            ));
        }
        for p in &self.paired {
            s.push_str(&format!(
                "n={} uniform vs variable: {} pairs, improvement {:.2}%, p = {}\n",
                p.n_links,
                p.pairs,
                p.improvement_pct,
                p.p.map_or("n/a".to_string(), |p| format!("{p:.3e}"))
            ));
        }
        if self.excluded > 0 {
            s.push_str(&format!("{} trial(s) excluded (failed or not validated)\n", self.excluded));
        }
        s
    }
}
