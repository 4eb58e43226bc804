//! Hermite–Simpson direct collocation of the tail tracking problem.
//!
//! Decision vector, stage by stage:
//!
//! ```text
//! [x_0, u_0, ū_0,  x_1, u_1, ū_1,  …,  x_N, u_N,  L]
//! ```
//!
//! with `x = (q, q̇)`, knot controls `u_k`, midpoint controls `ū_k` and, in
//! variable mode, the link lengths `L`. Midpoint states are not decision
//! variables; they follow from the Hermite interpolant
//! `x̄ = (x_k + x_{k+1})/2 + dt/8 (f_k − f_{k+1})`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::collision::CollisionModel;
use crate::dynamics::TailDynamics;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, LENGTH_LOWER_BOUND};
use crate::solver::{BandedBordered, Csr, Evaluation, Jacobians, Problem, SolveOutput, SolveStatus};
use crate::trajgen::FourierTarget;

/// Variable mode is limited to this many links.
pub const MAX_VARIABLE_LINKS: usize = 4;
/// Pitch is kept clear of the Euler-angle singularity at ±90°.
pub const PITCH_LIMIT: f64 = 85.0 * std::f64::consts::PI / 180.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Uniform,
    Variable,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Uniform => "uniform",
            Mode::Variable => "variable",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Mode::Uniform),
            "variable" => Ok(Mode::Variable),
            _ => Err(Error::invalid("mode", format!("expected uniform or variable, got {s:?}"))),
        }
    }
}

/// Uniform time grid on `[t0, tf]` with `n` intervals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub t0: f64,
    pub tf: f64,
    pub n: usize,
    pub dt: f64,
}

impl Grid {
    /// Grid over `[0, duration]` with step as close to `dt` as the horizon
    /// allows: `N = duration/dt` when that is an integer (to 1e-9), otherwise
    /// rounded up so the effective step never exceeds the request.
    pub fn new(duration: f64, dt: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::invalid("grid.duration", "must be positive"));
        }
        if !(dt > 0.0 && dt <= duration) {
            return Err(Error::invalid("grid.dt", format!("must be in (0, {duration}], got {dt}")));
        }
        let ratio = duration / dt;
        let n = if (ratio - ratio.round()).abs() < 1e-9 { ratio.round() } else { ratio.ceil() } as usize;
        Ok(Self { t0: 0.0, tf: duration, n, dt: duration / n as f64 })
    }

    /// 0.5 s horizon at 4 ms.
    pub fn standard() -> Self {
        Self::new(0.5, 0.004).expect("valid grid")
    }

    pub fn knot(&self, k: usize) -> f64 {
        if k == self.n {
            self.tf
        } else {
            self.t0 + k as f64 * self.dt
        }
    }

    pub fn mid(&self, k: usize) -> f64 {
        self.t0 + (k as f64 + 0.5) * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || !((self.n as f64 * self.dt - (self.tf - self.t0)).abs() <= 1e-12 * self.tf.abs().max(1.0)) {
            return Err(Error::invalid("grid", "N·dt must equal the horizon"));
        }
        Ok(())
    }
}

/// Index arithmetic for the decision vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n_q: usize,
    pub n_x: usize,
    pub n_u: usize,
    pub n: usize,
    pub n_l: usize,
    /// Variables per full stage `(x_k, u_k, ū_k)`.
    pub stage: usize,
}

impl Layout {
    pub fn new(n_q: usize, n: usize, n_l: usize) -> Self {
        let n_x = 2 * n_q;
        let n_u = n_q - 3;
        Self { n_q, n_x, n_u, n, n_l, stage: n_x + 2 * n_u }
    }

    pub fn x(&self, k: usize) -> usize {
        k * self.stage
    }

    pub fn u(&self, k: usize) -> usize {
        k * self.stage + self.n_x
    }

    pub fn u_mid(&self, k: usize) -> usize {
        k * self.stage + self.n_x + self.n_u
    }

    pub fn lengths(&self) -> usize {
        self.n * self.stage + self.n_x + self.n_u
    }

    pub fn n_vars(&self) -> usize {
        self.lengths() + self.n_l
    }

    pub fn n_state_vars(&self) -> usize {
        (self.n + 1) * self.n_x
    }

    pub fn n_control_vars(&self) -> usize {
        (2 * self.n + 1) * self.n_u
    }

    /// Control sample `s` in time order (`2k` knot, `2k+1` midpoint).
    fn control_sample(&self, s: usize) -> usize {
        if s % 2 == 0 {
            self.u(s / 2)
        } else {
            self.u_mid(s / 2)
        }
    }
}

/// State derivative and its Jacobians at one sample.
struct SampleDyn {
    f: DVector<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    fl: DMatrix<f64>,
}

/// The transcribed problem for one model, target and grid.
#[derive(Clone, Debug)]
pub struct NlpProblem {
    model: ModelSpec,
    target: FourierTarget,
    grid: Grid,
    mode: Mode,
    layout: Layout,
    collision: CollisionModel,
    /// Target torso angles at knots and at midpoints.
    theta_knots: Vec<[f64; 3]>,
    theta_mids: Vec<[f64; 3]>,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

/// Builds the NLP; see [`NlpProblem::new`].
pub fn build_nlp(model: &ModelSpec, target: &FourierTarget, grid: Grid, mode: Mode) -> Result<NlpProblem> {
    NlpProblem::new(model, target, grid, mode)
}

impl NlpProblem {
    pub fn new(model: &ModelSpec, target: &FourierTarget, grid: Grid, mode: Mode) -> Result<Self> {
        model.validate()?;
        grid.validate()?;
        if (grid.tf - grid.t0 - target.duration).abs() > 1e-12 {
            return Err(Error::invalid("grid", format!("horizon {} s does not match target duration {} s", grid.tf - grid.t0, target.duration)));
        }
        if mode == Mode::Variable && !(1..=MAX_VARIABLE_LINKS).contains(&model.n_links) {
            return Err(Error::invalid(
                "mode",
                format!("variable mode supports 1 to {MAX_VARIABLE_LINKS} links, got {}", model.n_links),
            ));
        }
        let n_l = if mode == Mode::Variable { model.n_links } else { 0 };
        let layout = Layout::new(model.n_q(), grid.n, n_l);
        let collision = CollisionModel::new(model, model.sphere_layout())?;
        let theta_knots = (0..=grid.n).map(|k| target.eval(grid.knot(k)).map(|v| v.0)).collect::<Result<_>>()?;
        let theta_mids = (0..grid.n).map(|k| target.eval(grid.mid(k)).map(|v| v.0)).collect::<Result<_>>()?;

        let lim = &model.limits;
        let (n_q, n_u) = (layout.n_q, layout.n_u);
        let mut lb = vec![f64::NEG_INFINITY; layout.n_vars()];
        let mut ub = vec![f64::INFINITY; layout.n_vars()];
        for k in 0..=grid.n {
            let x = layout.x(k);
            for i in 0..n_q {
                let (qb, vb) = match i {
                    1 => (lim.torso_angle.min(PITCH_LIMIT), lim.torso_vel),
                    0 | 2 => (lim.torso_angle, lim.torso_vel),
                    _ => (lim.rom, lim.vel),
                };
                let (qb, vb) = if k == 0 { (0.0, 0.0) } else { (qb, vb) };
                lb[x + i] = -qb;
                ub[x + i] = qb;
                lb[x + n_q + i] = -vb;
                ub[x + n_q + i] = vb;
            }
            let mut controls = vec![layout.u(k)];
            if k < grid.n {
                controls.push(layout.u_mid(k));
            }
            for c in controls {
                for j in 0..n_u {
                    lb[c + j] = -lim.torque;
                    ub[c + j] = lim.torque;
                }
            }
        }
        Ok(Self {
            model: model.clone(),
            target: target.clone(),
            grid,
            mode,
            layout,
            collision,
            theta_knots,
            theta_mids,
            lb,
            ub,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn target(&self) -> &FourierTarget {
        &self.target
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn n_eq(&self) -> usize {
        self.grid.n * self.layout.n_x + usize::from(self.mode == Mode::Variable)
    }

    pub fn n_ineq(&self) -> usize {
        let samples = 2 * self.grid.n + 1;
        samples + 2 * (samples - 1) * self.layout.n_u + (self.grid.n + 1) * self.collision.n_g() + self.layout.n_l
    }

    fn lengths_of<'a>(&'a self, z: &'a [f64]) -> &'a [f64] {
        match self.mode {
            Mode::Uniform => &self.model.link_lengths,
            Mode::Variable => &z[self.layout.lengths()..],
        }
    }

    fn sample(&self, d: &TailDynamics, x: &[f64], u: &[f64], jac: bool) -> Result<SampleDyn> {
        let (n_q, n_x, n_u, n_l) = (self.layout.n_q, self.layout.n_x, self.layout.n_u, self.layout.n_l);
        let (q, qd) = x.split_at(n_q);
        let mut f = DVector::zeros(n_x);
        f.rows_mut(0, n_q).copy_from_slice(qd);
        if !jac {
            let qdd = d.forward_dynamics(q, qd, u)?;
            f.rows_mut(n_q, n_q).copy_from(&qdd);
            return Ok(SampleDyn { f, a: DMatrix::zeros(0, 0), b: DMatrix::zeros(0, 0), fl: DMatrix::zeros(0, 0) });
        }
        let p = if n_l > 0 { d.partials_with_lengths(q, qd, u)? } else { d.partials(q, qd, u)? };
        f.rows_mut(n_q, n_q).copy_from(&p.qdd);
        let mut a = DMatrix::zeros(n_x, n_x);
        for i in 0..n_q {
            a[(i, n_q + i)] = 1.0;
        }
        a.view_mut((n_q, 0), (n_q, n_q)).copy_from(&p.d_q);
        a.view_mut((n_q, n_q), (n_q, n_q)).copy_from(&p.d_qd);
        let mut b = DMatrix::zeros(n_x, n_u);
        b.view_mut((n_q, 0), (n_q, n_u)).copy_from(&p.d_u);
        let mut fl = DMatrix::zeros(n_x, n_l);
        if n_l > 0 {
            fl.view_mut((n_q, 0), (n_q, n_l)).copy_from(&p.d_l);
        }
        Ok(SampleDyn { f, a, b, fl })
    }

    /// Objective residuals `√w (θ − Θ)` at knots (Simpson weights dt/6·{1,2,…,2,1})
    /// and midpoints (4dt/6), so that the objective is their sum of squares.
    fn residuals(&self, z: &[f64], jac: Option<&mut Csr>) -> Vec<f64> {
        let l = &self.layout;
        let (n, dt, n_q) = (self.grid.n, self.grid.dt, l.n_q);
        let mut r = Vec::with_capacity(3 * (2 * n + 1));
        let mut jac = jac;
        for k in 0..=n {
            let w = if k == 0 || k == n { dt / 6.0 } else { dt / 3.0 };
            let sw = w.sqrt();
            for i in 0..3 {
                r.push(sw * (z[l.x(k) + i] - self.theta_knots[k][i]));
                if let Some(j) = jac.as_deref_mut() {
                    j.push(l.x(k) + i, sw);
                    j.finish_row();
                }
            }
        }
        let sw = (4.0 * dt / 6.0).sqrt();
        for k in 0..n {
            let (a, b) = (l.x(k), l.x(k + 1));
            for i in 0..3 {
                let qm = 0.5 * (z[a + i] + z[b + i]) + dt / 8.0 * (z[a + n_q + i] - z[b + n_q + i]);
                r.push(sw * (qm - self.theta_mids[k][i]));
                if let Some(j) = jac.as_deref_mut() {
                    j.push(a + i, 0.5 * sw);
                    j.push(b + i, 0.5 * sw);
                    j.push(a + n_q + i, sw * dt / 8.0);
                    j.push(b + n_q + i, -sw * dt / 8.0);
                    j.finish_row();
                }
            }
        }
        r
    }

    /// Full evaluation; see [`Problem::evaluate`].
    fn eval_impl(&self, z: &[f64], jac: bool) -> Result<Evaluation> {
        if z.len() != self.layout.n_vars() {
            return Err(Error::Dimension { what: "decision vector", expected: self.layout.n_vars(), got: z.len() });
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "decision variable", index: i, iterate: z.to_vec() });
        }
        let l = self.layout;
        let (n, dt, n_x, n_u, n_l) = (self.grid.n, self.grid.dt, l.n_x, l.n_u, l.n_l);
        let lengths = self.lengths_of(z).to_vec();
        let dynm = match self.mode {
            Mode::Uniform => TailDynamics::new(&self.model),
            Mode::Variable => TailDynamics::with_lengths_unchecked(&self.model, &lengths)?,
        };
        let nv = l.n_vars();

        let mut jr = jac.then(|| Csr::new(nv));
        let residuals = self.residuals(z, jr.as_mut());

        let knots: Vec<SampleDyn> =
            (0..=n).map(|k| self.sample(&dynm, &z[l.x(k)..l.x(k) + n_x], &z[l.u(k)..l.u(k) + n_u], jac)).collect::<Result<_>>()?;

        // defects
        let mut eq = Vec::with_capacity(self.n_eq());
        let mut je = jac.then(|| Csr::new(nv));
        let half = DMatrix::<f64>::identity(n_x, n_x) * 0.5;
        for k in 0..n {
            let xk = DVector::from_column_slice(&z[l.x(k)..l.x(k) + n_x]);
            let xk1 = DVector::from_column_slice(&z[l.x(k + 1)..l.x(k + 1) + n_x]);
            let (sk, sk1) = (&knots[k], &knots[k + 1]);
            let xm = hermite_midpoint(&xk, &xk1, &sk.f, &sk1.f, dt);
            let sm = self.sample(&dynm, xm.as_slice(), &z[l.u_mid(k)..l.u_mid(k) + n_u], jac)?;
            let defect = hermite_simpson_defect(&xk, &xk1, &sk.f, &sm.f, &sk1.f, dt);
            eq.extend(defect.iter());
            if let Some(j) = je.as_mut() {
                let c = dt / 6.0;
                let am4 = &sm.a * 4.0;
                let d_xk = -DMatrix::identity(n_x, n_x) - (&sk.a + &am4 * (&half + &sk.a * (dt / 8.0))) * c;
                let d_xk1 = DMatrix::identity(n_x, n_x) - (&sk1.a + &am4 * (&half - &sk1.a * (dt / 8.0))) * c;
                let d_uk = -(&sk.b + &am4 * &sk.b * (dt / 8.0)) * c;
                let d_uk1 = -(&sk1.b - &am4 * &sk1.b * (dt / 8.0)) * c;
                let d_um = -&sm.b * (4.0 * c);
                let d_l = if n_l > 0 {
                    -(&sk.fl + (&sm.fl + &sm.a * (&sk.fl - &sk1.fl) * (dt / 8.0)) * 4.0 + &sk1.fl) * c
                } else {
                    DMatrix::zeros(n_x, 0)
                };
                for r in 0..n_x {
                    push_row(j, l.x(k), &d_xk, r);
                    push_row(j, l.u(k), &d_uk, r);
                    push_row(j, l.u_mid(k), &d_um, r);
                    push_row(j, l.x(k + 1), &d_xk1, r);
                    push_row(j, l.u(k + 1), &d_uk1, r);
                    push_row(j, l.lengths(), &d_l, r);
                    j.finish_row();
                }
            }
        }
        if self.mode == Mode::Variable {
            eq.push(lengths.iter().sum::<f64>() - self.model.total_length);
            if let Some(j) = je.as_mut() {
                for i in 0..n_l {
                    j.push(l.lengths() + i, 1.0);
                }
                j.finish_row();
            }
        }

        let lim = &self.model.limits;
        let mut ineq = Vec::with_capacity(self.n_ineq());
        let mut ji = jac.then(|| Csr::new(nv));
        let samples = 2 * n + 1;
        // effort ball
        for s in 0..samples {
            let c = l.control_sample(s);
            let u = &z[c..c + n_u];
            ineq.push(u.iter().map(|v| v * v).sum::<f64>() - lim.effort_bound);
            if let Some(j) = ji.as_mut() {
                for (i, v) in u.iter().enumerate() {
                    j.push(c + i, 2.0 * v);
                }
                j.finish_row();
            }
        }
        // torque rate between consecutive control samples
        let max_step = lim.rate_bound * dt / 2.0;
        for s in 0..samples - 1 {
            let (a, b) = (l.control_sample(s), l.control_sample(s + 1));
            for i in 0..n_u {
                let d = z[b + i] - z[a + i];
                for sign in [1.0, -1.0] {
                    ineq.push(sign * d - max_step);
                    if let Some(j) = ji.as_mut() {
                        j.push(a + i, -sign);
                        j.push(b + i, sign);
                        j.finish_row();
                    }
                }
            }
        }
        // torso–tail separation at knots
        let len_arg = (self.mode == Mode::Variable).then_some(lengths.as_slice());
        for k in 0..=n {
            let q = &z[l.x(k)..l.x(k) + l.n_q];
            ineq.extend(self.collision.values(q, len_arg)?);
            if let Some(j) = ji.as_mut() {
                let (dq, dl) = self.collision.jacobian(q, len_arg)?;
                for r in 0..dq.nrows() {
                    push_row(j, l.x(k), &dq, r);
                    if n_l > 0 {
                        push_row(j, l.lengths(), &dl, r);
                    }
                    j.finish_row();
                }
            }
        }
        if self.mode == Mode::Variable {
            for i in 0..n_l {
                ineq.push(LENGTH_LOWER_BOUND - lengths[i]);
                if let Some(j) = ji.as_mut() {
                    j.push(l.lengths() + i, -1.0);
                    j.finish_row();
                }
            }
        }

        let jacobian = match (jr, je, ji) {
            (Some(residuals), Some(eq), Some(ineq)) => Some(Jacobians { residuals, eq, ineq }),
            _ => None,
        };
        Ok(Evaluation { residuals, eq, ineq, jacobian })
    }

    /// Tracking objective, rad²·s.
    pub fn eval_objective(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.layout.n_vars() {
            return Err(Error::Dimension { what: "decision vector", expected: self.layout.n_vars(), got: z.len() });
        }
        Ok(self.residuals(z, None).iter().map(|r| r * r).sum())
    }

    /// `(equalities, inequalities)`; feasible means `c = 0`, `g ≤ 0`.
    pub fn eval_constraints(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let e = self.eval_impl(z, false)?;
        Ok((e.eq, e.ineq))
    }

    /// Objective gradient and constraint Jacobians.
    pub fn eval_jacobians(&self, z: &[f64]) -> Result<(Vec<f64>, Csr, Csr)> {
        let e = self.eval_impl(z, true)?;
        let j = e.jacobian.expect("requested");
        let mut grad = vec![0.0; z.len()];
        for i in 0..j.residuals.n_rows() {
            let (c, v) = j.residuals.row(i);
            for (&col, &val) in c.iter().zip(v) {
                grad[col] += 2.0 * e.residuals[i] * val;
            }
        }
        Ok((grad, j.eq, j.ineq))
    }

    pub fn eval_full(&self, z: &[f64], jacobian: bool) -> Result<Evaluation> {
        self.eval_impl(z, jacobian)
    }

    /// Largest constraint violation including variable bounds.
    pub fn violation(&self, z: &[f64]) -> Result<f64> {
        let (eq, ineq) = self.eval_constraints(z)?;
        let mut v = eq.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        v = ineq.iter().fold(v, |a, g| a.max(*g));
        for i in 0..z.len() {
            v = v.max(self.lb[i] - z[i]).max(z[i] - self.ub[i]);
        }
        Ok(v)
    }

    /// Decision vector holding the trajectory and lengths of `sol`.
    pub fn pack(&self, sol: &Solution) -> Result<Vec<f64>> {
        let l = self.layout;
        if sol.x.len() != self.grid.n + 1 || sol.u_mid.len() != self.grid.n || sol.x[0].len() != l.n_x || sol.u[0].len() != l.n_u {
            return Err(Error::invalid("solution", "trajectory shape does not match this problem"));
        }
        let mut z = vec![0.0; l.n_vars()];
        for k in 0..=self.grid.n {
            z[l.x(k)..l.x(k) + l.n_x].copy_from_slice(&sol.x[k]);
            z[l.u(k)..l.u(k) + l.n_u].copy_from_slice(&sol.u[k]);
            if k < self.grid.n {
                z[l.u_mid(k)..l.u_mid(k) + l.n_u].copy_from_slice(&sol.u_mid[k]);
            }
        }
        if l.n_l > 0 {
            if sol.lengths.len() != l.n_l {
                return Err(Error::Dimension { what: "lengths", expected: l.n_l, got: sol.lengths.len() });
            }
            z[l.lengths()..].copy_from_slice(&sol.lengths);
        }
        Ok(z)
    }

    /// Unpacks `z` into a [`Solution`], recomputing the objective and the
    /// knot/midpoint state derivatives.
    pub fn unpack(&self, z: &[f64], status: SolveStatus, iterations: usize, violation: f64) -> Result<Solution> {
        let l = self.layout;
        let lengths = self.lengths_of(z).to_vec();
        let dynm = TailDynamics::with_lengths_unchecked(&self.model, &lengths)?;
        let mut x = Vec::with_capacity(self.grid.n + 1);
        let mut u = Vec::with_capacity(self.grid.n + 1);
        let mut u_mid = Vec::with_capacity(self.grid.n);
        let mut xdot = Vec::with_capacity(self.grid.n + 1);
        for k in 0..=self.grid.n {
            let xs = z[l.x(k)..l.x(k) + l.n_x].to_vec();
            let us = z[l.u(k)..l.u(k) + l.n_u].to_vec();
            xdot.push(self.sample(&dynm, &xs, &us, false)?.f.as_slice().to_vec());
            x.push(xs);
            u.push(us);
            if k < self.grid.n {
                u_mid.push(z[l.u_mid(k)..l.u_mid(k) + l.n_u].to_vec());
            }
        }
        Ok(Solution {
            n_links: self.model.n_links,
            mode: self.mode,
            grid: self.grid,
            lengths,
            x,
            xdot,
            u,
            u_mid,
            objective: self.eval_objective(z)?,
            status,
            iterations,
            violation,
        })
    }

    pub fn solution_from_output(&self, out: &SolveOutput) -> Result<Solution> {
        self.unpack(&out.z, out.status, out.iterations, out.violation)
    }

    /// Knot states of the zero-torque rest trajectory.
    pub fn zeros(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.layout.n_vars()];
        if self.layout.n_l > 0 {
            z[self.layout.lengths()..].copy_from_slice(&self.model.link_lengths);
        }
        z
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lb, &self.ub)
    }
}

impl NlpProblem {
    /// `∇²(v₂ᵀ q̈)` over `(x, u, L)` at one sample, where `v₂` weights the
    /// acceleration rows of `f`. Columns for `x` and `L` come from
    /// central differences of the analytic gradient; `q̈` is linear in `u`, so the
    /// `u`–`u` block is zero and the `u` columns follow by symmetry.
    fn weighted_hessian(&self, lengths: &[f64], x: &[f64], u: &[f64], v2: &[f64]) -> Result<DMatrix<f64>> {
        let l = self.layout;
        let (n_q, n_x, n_u, n_l) = (l.n_q, l.n_x, l.n_u, l.n_l);
        let dim = n_x + n_u + n_l;
        let v = DVector::from_column_slice(v2);
        let grad = |x: &[f64], lens: &[f64]| -> Result<DVector<f64>> {
            let d = TailDynamics::with_lengths_unchecked(&self.model, lens)?;
            let p = if n_l > 0 { d.partials_with_lengths(&x[..n_q], &x[n_q..], u)? } else { d.partials(&x[..n_q], &x[n_q..], u)? };
            let mut g = DVector::zeros(dim);
            g.rows_mut(0, n_q).copy_from(&p.d_q.tr_mul(&v));
            g.rows_mut(n_q, n_q).copy_from(&p.d_qd.tr_mul(&v));
            g.rows_mut(n_x, n_u).copy_from(&p.d_u.tr_mul(&v));
            if n_l > 0 {
                g.rows_mut(n_x + n_u, n_l).copy_from(&p.d_l.tr_mul(&v));
            }
            Ok(g)
        };
        let mut hm = DMatrix::zeros(dim, dim);
        for j in 0..n_x + n_l {
            let (mut xp, mut lp) = (x.to_vec(), lengths.to_vec());
            let (mut xm, mut lm) = (x.to_vec(), lengths.to_vec());
            let (col, step) = if j < n_x {
                let s = HESSIAN_STEP * x[j].abs().max(1.0);
                xp[j] += s;
                xm[j] -= s;
                (j, s)
            } else {
                let s = HESSIAN_STEP * lengths[j - n_x];
                lp[j - n_x] += s;
                lm[j - n_x] -= s;
                (j + n_u, s)
            };
            let gj = (grad(&xp, &lp)? - grad(&xm, &lm)?) / (2.0 * step);
            hm.set_column(col, &gj);
        }
        // u columns from the u rows of the differenced columns
        for a in n_x..n_x + n_u {
            for b in (0..n_x).chain(n_x + n_u..dim) {
                hm[(b, a)] = hm[(a, b)];
            }
        }
        Ok((&hm + hm.transpose()) * 0.5)
    }

    /// Exact curvature of the defect and effort constraints, weighted by
    /// `y_eq` and `y_ineq`. Collision curvature is left out.
    fn constraint_hessian(&self, z: &[f64], y_eq: &[f64], y_ineq: &[f64], h: &mut BandedBordered) -> Result<()> {
        let l = self.layout;
        let (n, dt, n_q, n_x, n_u, n_l) = (self.grid.n, self.grid.dt, l.n_q, l.n_x, l.n_u, l.n_l);
        let lengths = self.lengths_of(z).to_vec();
        let dynm = TailDynamics::with_lengths_unchecked(&self.model, &lengths)?;
        let knot = |k: usize| (&z[l.x(k)..l.x(k) + n_x], &z[l.u(k)..l.u(k) + n_u]);
        let knots: Vec<SampleDyn> = (0..=n).map(|k| self.sample(&dynm, knot(k).0, knot(k).1, true)).collect::<Result<_>>()?;
        let lcols: Vec<usize> = (0..n_l).map(|i| l.lengths() + i).collect();
        let mut knot_w = vec![DVector::<f64>::zeros(n_x); n + 1];

        for k in 0..n {
            let w = DVector::from_column_slice(&y_eq[k * n_x..(k + 1) * n_x]);
            if w.iter().all(|v| *v == 0.0) {
                continue;
            }
            let (sk, sk1) = (&knots[k], &knots[k + 1]);
            let xk = DVector::from_column_slice(knot(k).0);
            let xk1 = DVector::from_column_slice(knot(k + 1).0);
            let xm = hermite_midpoint(&xk, &xk1, &sk.f, &sk1.f, dt);
            let um = &z[l.u_mid(k)..l.u_mid(k) + n_u];
            let sm = self.sample(&dynm, xm.as_slice(), um, true)?;
            let vm = &w * (-4.0 * dt / 6.0);
            let p = sm.a.tr_mul(&vm);
            knot_w[k] += &w * (-dt / 6.0) + &p * (dt / 8.0);
            knot_w[k + 1] += &w * (-dt / 6.0) - &p * (dt / 8.0);

            // midpoint curvature pulled back through (x_m, u_m, L)(z)
            let hm = self.weighted_hessian(&lengths, xm.as_slice(), um, &vm.as_slice()[n_q..])?;
            let cols: Vec<usize> = (0..n_x)
                .map(|i| l.x(k) + i)
                .chain((0..n_u).map(|i| l.u(k) + i))
                .chain((0..n_u).map(|i| l.u_mid(k) + i))
                .chain((0..n_x).map(|i| l.x(k + 1) + i))
                .chain((0..n_u).map(|i| l.u(k + 1) + i))
                .chain(lcols.iter().copied())
                .collect();
            let mut g = DMatrix::zeros(n_x + n_u + n_l, cols.len());
            let half = DMatrix::<f64>::identity(n_x, n_x) * 0.5;
            let c = dt / 8.0;
            let mut off = 0;
            g.view_mut((0, off), (n_x, n_x)).copy_from(&(&half + &sk.a * c));
            off += n_x;
            g.view_mut((0, off), (n_x, n_u)).copy_from(&(&sk.b * c));
            off += n_u;
            for i in 0..n_u {
                g[(n_x + i, off + i)] = 1.0;
            }
            off += n_u;
            g.view_mut((0, off), (n_x, n_x)).copy_from(&(&half - &sk1.a * c));
            off += n_x;
            g.view_mut((0, off), (n_x, n_u)).copy_from(&(&sk1.b * -c));
            off += n_u;
            if n_l > 0 {
                g.view_mut((0, off), (n_x, n_l)).copy_from(&((&sk.fl - &sk1.fl) * c));
                for i in 0..n_l {
                    g[(n_x + n_u + i, off + i)] = 1.0;
                }
            }
            add_dense(h, &cols, &(g.transpose() * hm * &g))?;
        }
        for k in 0..=n {
            if knot_w[k].rows(n_q, n_q).iter().all(|v| *v == 0.0) {
                continue;
            }
            let (x, u) = knot(k);
            let hk = self.weighted_hessian(&lengths, x, u, &knot_w[k].as_slice()[n_q..])?;
            let cols: Vec<usize> =
                (0..n_x).map(|i| l.x(k) + i).chain((0..n_u).map(|i| l.u(k) + i)).chain(lcols.iter().copied()).collect();
            add_dense(h, &cols, &hk)?;
        }
        // effort ball: ∇²(uᵀu) = 2I
        for s in 0..2 * n + 1 {
            if y_ineq[s] != 0.0 {
                let c = l.control_sample(s);
                for i in 0..n_u {
                    h.add_diag(c + i, 2.0 * y_ineq[s]);
                }
            }
        }
        Ok(())
    }
}

const HESSIAN_STEP: f64 = 1e-5;

/// Adds the symmetric `m`, indexed by `cols`, into `h`.
fn add_dense(h: &mut BandedBordered, cols: &[usize], m: &DMatrix<f64>) -> Result<()> {
    for a in 0..cols.len() {
        for b in 0..=a {
            let v = m[(a, b)];
            if v != 0.0 {
                h.add(cols[a], cols[b], v)?;
            }
        }
    }
    Ok(())
}

/// Collocation-point state of the cubic Hermite interpolant.
pub fn hermite_midpoint(xk: &DVector<f64>, xk1: &DVector<f64>, fk: &DVector<f64>, fk1: &DVector<f64>, dt: f64) -> DVector<f64> {
    (xk + xk1) * 0.5 + (fk - fk1) * (dt / 8.0)
}

/// Simpson defect `x_{k+1} − x_k − dt/6 (f_k + 4 f_mid + f_{k+1})`.
pub fn hermite_simpson_defect(
    xk: &DVector<f64>,
    xk1: &DVector<f64>,
    fk: &DVector<f64>,
    fm: &DVector<f64>,
    fk1: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    xk1 - xk - (fk + fm * 4.0 + fk1) * (dt / 6.0)
}

fn push_row(j: &mut Csr, col0: usize, m: &DMatrix<f64>, r: usize) {
    for c in 0..m.ncols() {
        let v = m[(r, c)];
        if v != 0.0 {
            j.push(col0 + c, v);
        }
    }
}

impl Problem for NlpProblem {
    fn n_vars(&self) -> usize {
        self.layout.n_vars()
    }

    fn n_border(&self) -> usize {
        self.layout.n_l
    }

    fn half_bandwidth(&self) -> usize {
        self.layout.stage + self.layout.n_x + self.layout.n_u - 1
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lb.clone(), self.ub.clone())
    }

    fn evaluate(&self, z: &[f64], jacobian: bool) -> Result<Evaluation> {
        self.eval_impl(z, jacobian)
    }

    fn add_constraint_hessian(&self, z: &[f64], y_eq: &[f64], y_ineq: &[f64], h: &mut BandedBordered) -> Result<()> {
        self.constraint_hessian(z, y_eq, y_ineq, h)
    }
}

/// An optimized trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub n_links: usize,
    pub mode: Mode,
    pub grid: Grid,
    pub lengths: Vec<f64>,
    /// Knot states `(q, q̇)`.
    pub x: Vec<Vec<f64>>,
    /// State derivatives at the knots.
    pub xdot: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub u_mid: Vec<Vec<f64>>,
    /// Tracking objective, rad²·s.
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub violation: f64,
}

impl Solution {
    pub fn n_q(&self) -> usize {
        self.x[0].len() / 2
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let g = &self.grid;
        let eps = 1e-12;
        if !(t >= g.t0 - eps && t <= g.tf + eps) {
            return Err(Error::OutOfRange { t, t0: g.t0, tf: g.tf });
        }
        let mut s = ((t - g.t0) / g.dt).clamp(0.0, g.n as f64);
        if (s - s.round()).abs() < 1e-9 {
            s = s.round();
        }
        let k = (s.floor() as usize).min(g.n - 1);
        Ok((k, (s - k as f64).clamp(0.0, 1.0)))
    }

    /// State from the cubic Hermite interpolant and control from the
    /// quadratic through knot, midpoint and knot.
    pub fn interpolate(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (k, s) = self.locate(t)?;
        if s == 0.0 {
            return Ok((self.x[k].clone(), self.u[k].clone()));
        }
        if s == 1.0 {
            return Ok((self.x[k + 1].clone(), self.u[k + 1].clone()));
        }
        Ok((self.state_at(k, s), self.control_at(k, s)))
    }

    /// Control only; what a simulator feeds to the dynamics.
    pub fn control(&self, t: f64) -> Result<Vec<f64>> {
        let (k, s) = self.locate(t)?;
        Ok(self.control_at(k, s))
    }

    /// Control on interval `k` at fraction `s ∈ [0, 1]`.
    pub fn control_at(&self, k: usize, s: f64) -> Vec<f64> {
        let (w0, wm, w1) = ((2.0 * s - 1.0) * (s - 1.0), 4.0 * s * (1.0 - s), s * (2.0 * s - 1.0));
        (0..self.u[k].len()).map(|j| w0 * self.u[k][j] + wm * self.u_mid[k][j] + w1 * self.u[k + 1][j]).collect()
    }

    fn state_at(&self, k: usize, s: f64) -> Vec<f64> {
        let h = self.grid.dt;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        (0..self.x[k].len())
            .map(|i| h00 * self.x[k][i] + h10 * h * self.xdot[k][i] + h01 * self.x[k + 1][i] + h11 * h * self.xdot[k + 1][i])
            .collect()
    }

    /// Midpoint state of interval `k` (the collocation point).
    pub fn mid_state(&self, k: usize) -> Vec<f64> {
        self.state_at(k, 0.5)
    }

    /// Writes the solution as a `#`-prefixed header block followed by CSV
    /// rows `kind,t,q…,qdot…,u…` for knots and midpoints in time order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io(std::path::Path::new("<solution>"), e);
        let lengths: Vec<String> = self.lengths.iter().map(|v| v.to_string()).collect();
        writeln!(out, "# objective_rad2s = {}", self.objective).map_err(io)?;
        writeln!(out, "# status = {}", self.status).map_err(io)?;
        writeln!(out, "# iterations = {}", self.iterations).map_err(io)?;
        writeln!(out, "# violation = {}", self.violation).map_err(io)?;
        writeln!(out, "# n_links = {}", self.n_links).map_err(io)?;
        writeln!(out, "# mode = {}", self.mode).map_err(io)?;
        writeln!(out, "# lengths_m = {}", lengths.join(";")).map_err(io)?;
        writeln!(out, "# horizon_s = {}", self.grid.tf - self.grid.t0).map_err(io)?;
        writeln!(out, "# intervals = {}", self.grid.n).map_err(io)?;
        let n_q = self.n_q();
        let n_u = self.u[0].len();
        let mut header = vec!["kind".to_string(), "t".to_string()];
        header.extend((0..n_q).map(|i| format!("q{i}")));
        header.extend((0..n_q).map(|i| format!("qdot{i}")));
        header.extend((0..n_q).map(|i| format!("qddot{i}")));
        header.extend((0..n_u).map(|i| format!("u{i}")));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&header)?;
        let row = |kind: &str, t: f64, x: &[f64], qdd: Option<&[f64]>, u: &[f64]| {
            let mut r = vec![kind.to_string(), t.to_string()];
            r.extend(x.iter().map(|v| v.to_string()));
            match qdd {
                Some(a) => r.extend(a.iter().map(|v| v.to_string())),
                None => r.extend(std::iter::repeat(String::new()).take(n_q)),
            }
            r.extend(u.iter().map(|v| v.to_string()));
            r
        };
        for k in 0..=self.grid.n {
            w.write_record(row("knot", self.grid.knot(k), &self.x[k], Some(&self.xdot[k][n_q..]), &self.u[k]))?;
            if k < self.grid.n {
                // midpoint rows carry the interpolated state; accelerations are knot-only
                w.write_record(row("mid", self.grid.mid(k), &self.mid_state(k), None, &self.u_mid[k]))?;
            }
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut header = std::collections::HashMap::new();
        let mut body = String::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io(std::path::Path::new("<solution>"), e))?;
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| Error::Parse { line: i + 1, col: 1, msg: "expected `# key = value`".into() })?;
                header.insert(k.trim().to_string(), v.trim().to_string());
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let get = |k: &str| header.get(k).ok_or_else(|| Error::invalid("solution", format!("missing header field {k}")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::invalid("solution", format!("bad number in {k}"))) };
        let n_links: usize = get("n_links")?.parse().map_err(|_| Error::invalid("solution", "bad n_links"))?;
        let n: usize = get("intervals")?.parse().map_err(|_| Error::invalid("solution", "bad intervals"))?;
        let lengths = get("lengths_m")?
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| Error::invalid("solution", "bad lengths_m")))
            .collect::<Result<Vec<_>>>()?;
        let grid = Grid::new(num("horizon_s")?, num("horizon_s")? / n as f64)?;
        let n_q = 2 * n_links + 3;
        let n_u = 2 * n_links;
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let (mut x, mut xdot, mut u, mut u_mid) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 2 + 3 * n_q + n_u {
                return Err(Error::invalid("solution", format!("row has {} fields, expected {}", rec.len(), 2 + 3 * n_q + n_u)));
            }
            let vals: Vec<f64> = rec
                .iter()
                .skip(2)
                .map(|s| if s.is_empty() { Ok(f64::NAN) } else { s.parse::<f64>().map_err(|_| Error::invalid("solution", format!("bad number {s:?}"))) })
                .collect::<Result<_>>()?;
            match &rec[0] {
                "knot" => {
                    x.push(vals[..2 * n_q].to_vec());
                    let mut xd = vals[n_q..2 * n_q].to_vec();
                    xd.extend_from_slice(&vals[2 * n_q..3 * n_q]);
                    xdot.push(xd);
                    u.push(vals[3 * n_q..].to_vec());
                }
                "mid" => u_mid.push(vals[3 * n_q..].to_vec()),
                other => return Err(Error::invalid("solution", format!("unknown row kind {other:?}"))),
            }
        }
        if x.len() != n + 1 || u_mid.len() != n {
            return Err(Error::invalid("solution", "row count does not match the interval count"));
        }
        Ok(Self {
            n_links,
            mode: get("mode")?.parse()?,
            grid,
            lengths,
            x,
            xdot,
            u,
            u_mid,
            objective: num("objective_rad2s")?,
            status: get("status")?.parse()?,
            iterations: get("iterations")?.parse().map_err(|_| Error::invalid("solution", "bad iterations"))?,
            violation: num("violation")?,
        })
    }
}

/// See [`Solution::interpolate`].
pub fn interpolate_solution(sol: &Solution, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    sol.interpolate(t)
}
