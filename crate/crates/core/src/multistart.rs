//! Initial guesses and best-of-several solving.

use std::fmt;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{solve, SolveStatus, SolverConfig};
use crate::transcription::{NlpProblem, Solution};

/// Number of seeded random starts.
pub const RANDOM_STARTS: usize = 3;

/// How an initial decision vector is built. Lengths, when they are
/// variables, always start at the model's uniform lengths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    Zeros,
    StraightLine,
    /// Uniform samples inside the variable bounds.
    Random(u64),
    /// A previous solution packed into this problem.
    WarmStart,
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zeros => f.write_str("zeros"),
            Self::StraightLine => f.write_str("straight-line"),
            Self::Random(s) => write!(f, "random({s})"),
            Self::WarmStart => f.write_str("warm-start"),
        }
    }
}

/// Builds the initial point of `strategy`; a warm start needs a solution
/// and goes through [`NlpProblem::pack`] instead.
pub fn init_point(nlp: &NlpProblem, strategy: InitStrategy) -> Result<Vec<f64>> {
    let mut z = nlp.zeros();
    let l = nlp.layout();
    let g = nlp.grid();
    match strategy {
        InitStrategy::Zeros => {}
        InitStrategy::StraightLine => {
            // torso angles move linearly from rest to the target's final value
            let (theta_f, _) = nlp.target().eval(g.tf)?;
            let rate: Vec<f64> = theta_f.iter().map(|v| v / (g.tf - g.t0)).collect();
            for k in 0..=g.n {
                let s = k as f64 / g.n as f64;
                for i in 0..3 {
                    z[l.x(k) + i] = theta_f[i] * s;
                    z[l.x(k) + l.n_q + i] = rate[i];
                }
            }
        }
        InitStrategy::Random(seed) => {
            let (lb, ub) = nlp.bounds();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..l.lengths() {
                if lb[i] < ub[i] && lb[i].is_finite() && ub[i].is_finite() {
                    z[i] = rng.gen_range(lb[i]..=ub[i]);
                }
            }
        }
        InitStrategy::WarmStart => return Err(Error::invalid("strategy", "a warm start needs a solution to pack")),
    }
    clip(nlp, &mut z);
    Ok(z)
}

fn clip(nlp: &NlpProblem, z: &mut [f64]) {
    let (lb, ub) = nlp.bounds();
    for i in 0..z.len() {
        z[i] = z[i].clamp(lb[i], ub[i]);
    }
}

/// The five standard starts: zeros, straight line and three random ones
/// whose seeds derive from `seed`.
pub fn init_strategies(nlp: &NlpProblem, seed: u64) -> Result<Vec<(InitStrategy, Vec<f64>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kinds = vec![InitStrategy::Zeros, InitStrategy::StraightLine];
    kinds.extend((0..RANDOM_STARTS).map(|_| InitStrategy::Random(rng.gen())));
    kinds.into_iter().map(|k| Ok((k, init_point(nlp, k)?))).collect()
}

/// What one start produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub strategy: InitStrategy,
    pub status: SolveStatus,
    /// Objective of the returned iterate, rad²·s.
    pub objective: f64,
    pub violation: f64,
    pub iterations: usize,
    /// Set when the start ended in an error rather than a status.
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct MultistartResult {
    pub best: Solution,
    pub best_strategy: InitStrategy,
    /// One entry per start, in start order.
    pub outcomes: Vec<StartOutcome>,
}

/// Solves from the five standard starts and keeps the feasible result
/// with the lowest objective.
pub fn multistart_solve(nlp: &NlpProblem, seed: u64, config: &SolverConfig) -> Result<MultistartResult> {
    solve_from(nlp, init_strategies(nlp, seed)?, config)
}

/// As [`multistart_solve`], with `warm` packed as an additional first start.
pub fn multistart_solve_warm(nlp: &NlpProblem, seed: u64, config: &SolverConfig, warm: &Solution) -> Result<MultistartResult> {
    let mut starts = vec![(InitStrategy::WarmStart, warm_point(nlp, warm)?)];
    starts.extend(init_strategies(nlp, seed)?);
    solve_from(nlp, starts, config)
}

/// `sol` as a decision vector of `nlp`; lengths come from the solution.
pub fn warm_point(nlp: &NlpProblem, sol: &Solution) -> Result<Vec<f64>> {
    let mut z = nlp.pack(sol)?;
    clip(nlp, &mut z);
    Ok(z)
}

/// Runs every start (in parallel) and selects the best feasible one. Ties
/// go to the earlier start, so the result does not depend on scheduling.
pub fn solve_from(nlp: &NlpProblem, starts: Vec<(InitStrategy, Vec<f64>)>, config: &SolverConfig) -> Result<MultistartResult> {
    config.validate()?;
    let runs: Vec<(StartOutcome, Option<Solution>)> = starts
        .into_par_iter()
        .map(|(strategy, z0)| match solve(nlp, &z0, config).and_then(|out| Ok((nlp.solution_from_output(&out)?, out))) {
            Ok((sol, out)) => {
                info!("start {strategy}: {} f={:.6e} after {} iterations", out.status, out.objective, out.iterations);
                let o = StartOutcome {
                    strategy,
                    status: out.status,
                    objective: out.objective,
                    violation: out.violation,
                    iterations: out.iterations,
                    error: None,
                };
                (o, Some(sol))
            }
            Err(e) => {
                info!("start {strategy} failed: {e}");
                let o = StartOutcome {
                    strategy,
                    status: SolveStatus::Infeasible,
                    objective: f64::NAN,
                    violation: f64::NAN,
                    iterations: 0,
                    error: Some(e.to_string()),
                };
                (o, None)
            }
        })
        .collect();
    let mut best: Option<(usize, &Solution)> = None;
    for (i, (o, sol)) in runs.iter().enumerate() {
        if let Some(sol) = sol {
            if o.status.is_feasible() && best.map_or(true, |(_, b)| sol.objective < b.objective) {
                best = Some((i, sol));
            }
        }
    }
    match best {
        Some((i, sol)) => {
            let best = sol.clone();
            let outcomes: Vec<StartOutcome> = runs.iter().map(|r| r.0.clone()).collect();
            Ok(MultistartResult { best, best_strategy: outcomes[i].strategy, outcomes })
        }
        None => Err(Error::AllStartsFailed(
            runs.iter()
                .map(|(o, _)| match &o.error {
                    Some(e) => format!("{}: {e}", o.strategy),
                    None => format!("{}: {} (violation {:.2e})", o.strategy, o.status, o.violation),
                })
                .collect(),
        )),
    }
}
