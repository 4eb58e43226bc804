//! Forward simulation of optimized controls and per-trial metrics.
//!
//! The integrator is Dormand–Prince 5(4) with its fourth-order dense
//! output. The state is augmented with the work done by the tail torques,
//! so energy balance can be checked along any rollout.

use serde::{Deserialize, Serialize};

use crate::dynamics::TailDynamics;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::trajgen::FourierTarget;
use crate::transcription::Solution;

/// Largest RMS torso-angle deviation, rad, for a solution to validate.
pub const VALIDATION_THRESHOLD: f64 = 1.0 * std::f64::consts::PI / 180.0;

/// Share of the effort bound above which a sample counts as saturated.
pub const SATURATION_LEVEL: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest step relative to `max(|t|, 1)` before giving up.
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, min_step: 1e-14, max_steps: 2_000_000 }
    }
}

/// States sampled at the requested times.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    /// `(q, q̇)` per sample.
    pub x: Vec<Vec<f64>>,
    /// Work done by the tail torques since the start, J.
    pub work: Vec<f64>,
    pub steps: usize,
}

// Dormand–Prince tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Integrates the tail dynamics under `control` from `x0` and samples the
/// state at `samples` (ascending, starting at or after 0). Integration
/// restarts at every `breakpoint`, where the control may have a kink.
pub fn rollout<F>(
    model: &ModelSpec,
    control: F,
    x0: &[f64],
    samples: &[f64],
    breakpoints: &[f64],
    opts: &RolloutOptions,
) -> Result<Trajectory>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let dynm = TailDynamics::new(model);
    let n_q = dynm.n_q();
    if x0.len() != 2 * n_q {
        return Err(Error::Dimension { what: "initial state", expected: 2 * n_q, got: x0.len() });
    }
    if samples.windows(2).any(|w| w[1] < w[0]) || samples.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::invalid("samples", "times must be ascending and non-negative"));
    }
    let rhs = |t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let (q, qd) = (&y[..n_q], &y[n_q..2 * n_q]);
        let u = control(t)?;
        let qdd = dynm.forward_dynamics(q, qd, &u)?;
        let mut f = Vec::with_capacity(y.len());
        f.extend_from_slice(qd);
        f.extend(qdd.iter());
        f.push(u.iter().zip(&qd[3..]).map(|(u, v)| u * v).sum());
        Ok(f)
    };

    let tf = samples.last().copied().unwrap_or(0.0);
    let mut stops: Vec<f64> = breakpoints.iter().copied().filter(|b| *b > 0.0 && *b < tf).collect();
    stops.push(tf);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let mut y: Vec<f64> = x0.iter().copied().chain([0.0]).collect();
    let mut t = 0.0;
    let mut out = Trajectory { t: Vec::new(), x: Vec::new(), work: Vec::new(), steps: 0 };
    let mut next = 0;
    let record = |out: &mut Trajectory, ts: f64, ys: &[f64]| {
        out.t.push(ts);
        out.x.push(ys[..2 * n_q].to_vec());
        out.work.push(ys[2 * n_q]);
    };
    while next < samples.len() && samples[next] <= 0.0 {
        record(&mut out, samples[next], &y);
        next += 1;
    }
    let mut h = 1e-3_f64.min(tf.max(1e-12));
    for &stop in &stops {
        let mut k1 = rhs(t, &y)?;
        while t < stop {
            if out.steps >= opts.max_steps {
                return Err(Error::StepUnderflow { t, state: y[..2 * n_q].to_vec() });
            }
            let last = t + h >= stop - 1e-14 * stop.abs().max(1.0);
            let hs = if last { stop - t } else { h };
            let mut k = vec![k1.clone()];
            for s in 1..7 {
                let ys: Vec<f64> = (0..y.len()).map(|i| y[i] + hs * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>()).collect();
                k.push(rhs(t + C[s] * hs, &ys)?);
            }
            let y_new: Vec<f64> = (0..y.len()).map(|i| y[i] + hs * (0..6).map(|j| A[6][j] * k[j][i]).sum::<f64>()).collect();
            let err = ((0..y.len())
                .map(|i| {
                    let e = hs * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
                    let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                    (e / sc).powi(2)
                })
                .sum::<f64>()
                / y.len() as f64)
                .sqrt();
            if !err.is_finite() {
                return Err(Error::NonFinite { what: "rollout state", index: 0, iterate: y[..2 * n_q].to_vec() });
            }
            let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
            if err <= 1.0 {
                let t_new = if last { stop } else { t + hs };
                // dense output for the samples inside this step
                while next < samples.len() && samples[next] <= t_new {
                    let th = (samples[next] - t) / hs;
                    let ys: Vec<f64> = (0..y.len())
                        .map(|i| {
                            let dy = y_new[i] - y[i];
                            let b = hs * k[0][i] - dy;
                            let c = dy - hs * k[6][i] - b;
                            let d = hs * (0..7).map(|j| D[j] * k[j][i]).sum::<f64>();
                            y[i] + th * (dy + (1.0 - th) * (b + th * (c + (1.0 - th) * d)))
                        })
                        .collect();
                    record(&mut out, samples[next], &ys);
                    next += 1;
                }
                t = t_new;
                y = y_new;
                k1 = k.swap_remove(6);
                out.steps += 1;
                if !last {
                    h = hs * fac;
                }
            } else {
                h = hs * fac.min(1.0);
                if h < opts.min_step * t.abs().max(1.0) {
                    return Err(Error::StepUnderflow { t, state: y[..2 * n_q].to_vec() });
                }
            }
        }
    }
    Ok(out)
}

/// Outcome of re-simulating a solution.
#[derive(Clone, Debug, PartialEq)]
pub struct Validation {
    /// RMS torso-angle deviation at the knots, rad.
    pub torso_rms: f64,
    /// RMS deviation over all joint angles, logged but not gated.
    pub full_rms: f64,
    pub trajectory: Trajectory,
}

impl Validation {
    pub fn passed(&self) -> bool {
        self.torso_rms <= VALIDATION_THRESHOLD
    }
}

/// Replays the solution's interpolated controls from its initial state and
/// compares the simulated joint angles with the knot states.
pub fn validate(solution: &Solution, model: &ModelSpec) -> Result<Validation> {
    let model = model.with_lengths(&solution.lengths)?;
    let g = solution.grid;
    let knots: Vec<f64> = (0..=g.n).map(|k| g.knot(k) - g.t0).collect();
    let traj = rollout(&model, |t| solution.control(t + g.t0), &solution.x[0], &knots, &knots, &RolloutOptions::default())?;
    let n_q = solution.n_q();
    let (mut torso, mut full) = (0.0, 0.0);
    for (xs, xk) in traj.x.iter().zip(&solution.x) {
        for i in 0..n_q {
            let d2 = (xs[i] - xk[i]).powi(2);
            full += d2;
            if i < 3 {
                torso += d2;
            }
        }
    }
    let m = traj.x.len() as f64;
    Ok(Validation { torso_rms: (torso / (3.0 * m)).sqrt(), full_rms: (full / (n_q as f64 * m)).sqrt(), trajectory: traj })
}

/// Metrics of one optimized trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    /// Simpson quadrature of the squared torso-angle error, rad²·s.
    pub tracking_error: f64,
    /// Largest tail-tip speed over knots and midpoints, m/s.
    pub max_tip_speed: f64,
    /// `∫ (u_pitch² + u_yaw²) dt` per tail joint, N²·m²·s.
    pub per_joint_effort: Vec<f64>,
    /// Share of control samples with `uᵀu ≥ 0.95 E`.
    pub effort_saturation: f64,
    /// Largest per-DOF share of knots where a joint angle, joint rate or
    /// torque is within 5% of its bound, for each kind.
    pub position_saturation: f64,
    pub velocity_saturation: f64,
    pub torque_saturation: f64,
    pub validation_rms: f64,
}

/// Computes all trial metrics, including the re-simulation check.
pub fn compute_metrics(solution: &Solution, target: &FourierTarget, model: &ModelSpec) -> Result<TrialMetrics> {
    let mut m = collocation_metrics(solution, target, model)?;
    m.validation_rms = validate(solution, model)?.torso_rms;
    Ok(m)
}

/// [`compute_metrics`] without the rollout; `validation_rms` is zero.
pub fn collocation_metrics(solution: &Solution, target: &FourierTarget, model: &ModelSpec) -> Result<TrialMetrics> {
    let model = model.with_lengths(&solution.lengths)?;
    let dynm = TailDynamics::new(&model);
    let g = solution.grid;
    let dt = g.dt;
    let n_q = solution.n_q();
    let n_u = n_q - 3;

    let mut tracking = 0.0;
    let mut tip: f64 = 0.0;
    let mut effort = vec![0.0; n_u / 2];
    let mut saturated = 0usize;
    let e_sat = SATURATION_LEVEL * model.limits.effort_bound;
    let mut visit = |t: f64, x: &[f64], u: &[f64], w: f64| -> Result<()> {
        let (theta, _) = target.eval(t)?;
        tracking += w * (0..3).map(|i| (x[i] - theta[i]).powi(2)).sum::<f64>();
        let (_, v) = dynm.tip_state(&x[..n_q], &x[n_q..])?;
        tip = tip.max(v.iter().map(|c| c * c).sum::<f64>().sqrt());
        for (j, e) in effort.iter_mut().enumerate() {
            *e += w * (u[2 * j].powi(2) + u[2 * j + 1].powi(2));
        }
        if u.iter().map(|v| v * v).sum::<f64>() >= e_sat {
            saturated += 1;
        }
        Ok(())
    };
    for k in 0..=g.n {
        let w = if k == 0 || k == g.n { dt / 6.0 } else { dt / 3.0 };
        visit(g.knot(k), &solution.x[k], &solution.u[k], w)?;
        if k < g.n {
            visit(g.mid(k), &solution.mid_state(k), &solution.u_mid[k], 4.0 * dt / 6.0)?;
        }
    }

    let lim = &model.limits;
    let near = |v: f64, bound: f64| v.abs() >= SATURATION_LEVEL * bound;
    let share = |count: usize, total: usize| count as f64 / total as f64;
    let knots = g.n + 1;
    let pitch_bound = lim.torso_angle.min(crate::transcription::PITCH_LIMIT);
    let mut pos: f64 = 0.0;
    let mut vel: f64 = 0.0;
    for i in 0..n_q {
        let (qb, vb) = match i {
            1 => (pitch_bound, lim.torso_vel),
            0 | 2 => (lim.torso_angle, lim.torso_vel),
            _ => (lim.rom, lim.vel),
        };
        pos = pos.max(share(solution.x.iter().filter(|x| near(x[i], qb)).count(), knots));
        vel = vel.max(share(solution.x.iter().filter(|x| near(x[n_q + i], vb)).count(), knots));
    }
    let mut torque: f64 = 0.0;
    for j in 0..n_u {
        let count = solution.u.iter().chain(&solution.u_mid).filter(|u| near(u[j], lim.torque)).count();
        torque = torque.max(share(count, 2 * g.n + 1));
    }

    Ok(TrialMetrics {
        tracking_error: tracking,
        max_tip_speed: tip,
        per_joint_effort: effort,
        effort_saturation: share(saturated, 2 * g.n + 1),
        position_saturation: pos,
        velocity_saturation: vel,
        torque_saturation: torque,
        validation_rms: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_uniform_model, PhysicalParams};
    use crate::solver::{solve, SolveStatus, SolverConfig};
    use crate::transcription::{Grid, Mode, NlpProblem};

    #[test]
    fn zero_control_from_rest_stays_at_rest() {
        let m = build_uniform_model(2, &PhysicalParams::default()).unwrap();
        let x0 = vec![0.0; 2 * m.n_q()];
        let ts: Vec<f64> = (0..=10).map(|i| 0.05 * i as f64).collect();
        let tr = rollout(&m, |_| Ok(vec![0.0; m.n_u()]), &x0, &ts, &[], &RolloutOptions::default()).unwrap();
        assert_eq!(tr.t, ts);
        assert!(tr.x.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn dense_output_matches_step_endpoints() {
        // samples between steps agree with a run that stops exactly there
        let m = build_uniform_model(1, &PhysicalParams::default()).unwrap();
        let x0 = vec![0.0; 2 * m.n_q()];
        let u = |t: f64| Ok(vec![2.0 * (7.0 * t).sin(), -1.5 * (5.0 * t).cos()]);
        let o = RolloutOptions::default();
        let dense = rollout(&m, u, &x0, &[0.1234, 0.5], &[], &o).unwrap();
        let exact = rollout(&m, u, &x0, &[0.1234], &[0.1234], &o).unwrap();
        for (a, b) in dense.x[0].iter().zip(&exact.x[0]) {
            assert!((a - b).abs() < 1e-7, "{a} {b}");
        }
    }

    fn chirp(t: f64) -> Result<Vec<f64>> {
        Ok(vec![2.0 * (7.0 * t).sin(), -1.5 * (5.0 * t).cos(), 0.8 * (11.0 * t).sin(), 1.2 * t])
    }

    #[test]
    fn momentum_and_energy_balance() {
        let m = build_uniform_model(2, &PhysicalParams::default()).unwrap();
        let d = TailDynamics::new(&m);
        let n_q = m.n_q();
        let x0 = vec![0.0; 2 * n_q];
        let ts: Vec<f64> = (0..=20).map(|i| 0.025 * i as f64).collect();
        let tr = rollout(&m, chirp, &x0, &ts, &[], &RolloutOptions::default()).unwrap();
        for (x, w) in tr.x.iter().zip(&tr.work) {
            let h = d.angular_momentum(&x[..n_q], &x[n_q..]).unwrap();
            assert!(h.iter().all(|c| c.abs() <= 1e-6), "{h:?}");
            let ke = d.kinetic_energy(&x[..n_q], &x[n_q..]).unwrap();
            assert!((ke - w).abs() <= 1e-6 * ke.abs().max(1.0), "{ke} {w}");
        }
    }

    #[test]
    fn tolerance_refinement_agrees() {
        let m = build_uniform_model(2, &PhysicalParams::default()).unwrap();
        let x0 = vec![0.0; 2 * m.n_q()];
        let coarse = rollout(&m, chirp, &x0, &[0.5], &[], &RolloutOptions::default()).unwrap();
        let fine_opts = RolloutOptions { rtol: 1e-11, atol: 1e-13, ..Default::default() };
        let fine = rollout(&m, chirp, &x0, &[0.5], &[], &fine_opts).unwrap();
        assert!(fine.steps > coarse.steps);
        for (a, b) in coarse.x[0].iter().zip(&fine.x[0]) {
            assert!((a - b).abs() < 1e-6, "{a} {b}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = build_uniform_model(1, &PhysicalParams::default()).unwrap();
        let z = |_| Ok(vec![0.0; 2]);
        let o = RolloutOptions::default();
        assert!(matches!(rollout(&m, z, &[0.0; 3], &[0.1], &[], &o), Err(Error::Dimension { .. })));
        assert!(rollout(&m, z, &[0.0; 10], &[0.2, 0.1], &[], &o).is_err());
        let tight = RolloutOptions { max_steps: 3, ..o };
        assert!(matches!(rollout(&m, chirp2, &[0.0; 10], &[0.5], &[], &tight), Err(Error::StepUnderflow { .. })));
    }

    fn chirp2(t: f64) -> Result<Vec<f64>> {
        Ok(vec![3.0 * (40.0 * t).sin(), 2.0 * (30.0 * t).cos()])
    }

    /// A solution with constant knot values and zero derivatives.
    fn constant_solution(n_links: usize, x: Vec<f64>, u: Vec<f64>) -> Solution {
        let grid = Grid::new(0.5, 0.01).unwrap();
        let n = grid.n;
        Solution {
            n_links,
            mode: Mode::Uniform,
            grid,
            lengths: vec![1.5 / n_links as f64; n_links],
            xdot: vec![vec![0.0; x.len()]; n + 1],
            x: vec![x; n + 1],
            u_mid: vec![u.clone(); n],
            u: vec![u; n + 1],
            objective: 0.0,
            status: SolveStatus::Optimal,
            iterations: 0,
            violation: 0.0,
        }
    }

    #[test]
    fn effort_and_tracking_oracles() {
        let m = build_uniform_model(1, &PhysicalParams::default()).unwrap();
        let off = 10f64.to_radians();
        let mut x = vec![0.0; 10];
        x[0] = off;
        let sol = constant_solution(1, x, vec![1.0, 2.0]);
        let mt = collocation_metrics(&sol, &FourierTarget::zero(), &m).unwrap();
        assert!((mt.per_joint_effort[0] - 2.5).abs() < 1e-12);
        // 10° held for 0.5 s: 50 deg²·s
        let deg2s = mt.tracking_error * (180.0 / std::f64::consts::PI).powi(2);
        assert!((deg2s - 50.0).abs() < 1e-9, "{deg2s}");
        assert_eq!(mt.effort_saturation, 0.0);
        assert_eq!(mt.torque_saturation, 0.0);
    }

    #[test]
    fn saturation_shares() {
        let m = build_uniform_model(1, &PhysicalParams::default()).unwrap();
        let mut x = vec![0.0; 10];
        x[3] = m.limits.rom;
        let sol = constant_solution(1, x, vec![5.0, 5.0]);
        let mt = collocation_metrics(&sol, &FourierTarget::zero(), &m).unwrap();
        assert_eq!(mt.effort_saturation, 1.0);
        assert_eq!(mt.torque_saturation, 1.0);
        assert_eq!(mt.position_saturation, 1.0);
        assert_eq!(mt.velocity_saturation, 0.0);
    }

    #[test]
    fn tip_speed_oracle() {
        // tail yawing on a 1.5 m link, torso still
        let m = build_uniform_model(1, &PhysicalParams::default()).unwrap();
        let mut x = vec![0.0; 10];
        x[5 + 4] = 2.0 / 1.5;
        let sol = constant_solution(1, x, vec![0.0, 0.0]);
        let mt = collocation_metrics(&sol, &FourierTarget::zero(), &m).unwrap();
        assert!((mt.max_tip_speed - 2.0).abs() < 1e-12, "{}", mt.max_tip_speed);
    }

    #[test]
    fn validation_detects_control_perturbation() {
        let m = build_uniform_model(1, &PhysicalParams::default()).unwrap();
        let target = FourierTarget::sinusoid(2, 0.3, 2.0 * std::f64::consts::PI / 0.5);
        let nlp = NlpProblem::new(&m, &target, Grid::new(0.5, 0.01).unwrap(), Mode::Uniform).unwrap();
        let cfg = SolverConfig { objective_scale: 1e3, ..Default::default() };
        let z0 = crate::multistart::init_point(&nlp, crate::multistart::InitStrategy::Random(3)).unwrap();
        let out = solve(&nlp, &z0, &cfg).unwrap();
        assert!(out.status.is_feasible(), "{}", out.status);
        let sol = nlp.solution_from_output(&out).unwrap();
        let v = validate(&sol, &m).unwrap();
        assert!(v.passed(), "{}", v.torso_rms);
        let mut bumped = sol.clone();
        for u in bumped.u.iter_mut().chain(bumped.u_mid.iter_mut()) {
            u.iter_mut().for_each(|c| *c *= 1.1);
        }
        let w = validate(&bumped, &m).unwrap();
        assert!(w.torso_rms > v.torso_rms, "{} {}", w.torso_rms, v.torso_rms);
        let mt = compute_metrics(&sol, &target, &m).unwrap();
        assert!((mt.tracking_error - sol.objective).abs() <= 1e-10 * sol.objective.max(1e-12), "{} {}", mt.tracking_error, sol.objective);
    }
}
