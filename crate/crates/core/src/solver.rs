//! Primal-dual interior-point solver for collocation problems.
//!
//! Problems have the form
//!
//! ```text
//! min Σ r_i(z)²   s.t.  c(z) = 0,  g(z) ≤ 0,  lb ≤ z ≤ ub
//! ```
//!
//! Inequalities get slacks `g + s = 0`; slacks and finite bounds carry a log
//! barrier whose weight shrinks as each barrier problem is solved. Every
//! iteration solves one Newton (KKT) system with a Gauss–Newton Hessian,
//! optionally plus the problem's constraint curvature, and shifts the
//! Hessian until the matrix has the inertia of a local minimizer. Steps are
//! accepted by backtracking on an ℓ1 merit function, with second-order
//! corrections against the curvature of the constraints.
//!
//! The KKT matrix keeps the block-banded structure of a collocation problem
//! plus a few dense "border" variables (the link lengths). It is factored by
//! a banded LDLᵀ with a Schur complement for the border, which also gives
//! the inertia.

use std::fmt;

use log::{debug, trace};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse matrix in compressed-row form. Column indices within a row are
/// unique but need not be sorted.
#[derive(Clone, Debug, Default)]
pub struct Csr {
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn new(n_cols: usize) -> Self {
        Self { n_cols, row_ptr: vec![0], cols: Vec::new(), vals: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn push(&mut self, col: usize, val: f64) {
        debug_assert!(col < self.n_cols);
        self.cols.push(col);
        self.vals.push(val);
    }

    pub fn finish_row(&mut self) {
        self.row_ptr.push(self.cols.len());
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows(), self.n_cols);
        for i in 0..self.n_rows() {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                m[(i, j)] += x;
            }
        }
        m
    }

    /// `A x`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows())
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(c, v)| v * x[*c]).sum()
            })
            .collect()
    }

    /// `y += Aᵀx`.
    pub fn tr_mul_add(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n_rows() {
            if x[i] == 0.0 {
                continue;
            }
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                y[j] += a * x[i];
            }
        }
    }
}

/// Residuals and constraint values at one point, optionally with Jacobians.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub residuals: Vec<f64>,
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub jacobian: Option<Jacobians>,
}

#[derive(Clone, Debug)]
pub struct Jacobians {
    pub residuals: Csr,
    pub eq: Csr,
    pub ineq: Csr,
}

impl Evaluation {
    pub fn objective(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }

    fn check_finite(&self) -> Result<()> {
        for (what, v) in [("objective residual", &self.residuals), ("equality constraint", &self.eq), ("inequality constraint", &self.ineq)] {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { what, index: i, iterate: Vec::new() });
            }
        }
        if let Some(j) = &self.jacobian {
            for (what, m) in [("objective Jacobian", &j.residuals), ("equality Jacobian", &j.eq), ("inequality Jacobian", &j.ineq)] {
                if let Some(k) = m.vals.iter().position(|x| !x.is_finite()) {
                    let row = m.row_ptr.partition_point(|&p| p <= k) - 1;
                    return Err(Error::NonFinite { what, index: row, iterate: Vec::new() });
                }
            }
        }
        Ok(())
    }
}

/// A least-squares NLP with banded Gauss–Newton structure.
///
/// The last `n_border()` variables may couple to anything; every other pair
/// of variables sharing a residual or constraint row must be at most
/// `half_bandwidth()` apart.
pub trait Problem: Sync {
    fn n_vars(&self) -> usize;
    fn n_border(&self) -> usize {
        0
    }
    fn half_bandwidth(&self) -> usize;
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn evaluate(&self, z: &[f64], jacobian: bool) -> Result<Evaluation>;

    /// Adds `Σ y_eq,i ∇²c_i + Σ y_ineq,i ∇²g_i` to `h`. The default adds
    /// nothing, which leaves a pure Gauss–Newton model.
    fn add_constraint_hessian(&self, _z: &[f64], _y_eq: &[f64], _y_ineq: &[f64], _h: &mut BandedBordered) -> Result<()> {
        Ok(())
    }
}

/// Symmetric matrix with a banded leading block and a dense border.
#[derive(Clone, Debug)]
pub struct BandedBordered {
    n: usize,
    b: usize,
    nb: usize,
    /// Row-major lower band: `band[i*(b+1) + (i-j)] = H[i][j]`.
    band: Vec<f64>,
    /// `cross[r*n + j] = H[n+r][j]`.
    cross: Vec<f64>,
    corner: DMatrix<f64>,
}

impl BandedBordered {
    pub fn zeros(n_main: usize, half_bandwidth: usize, n_border: usize) -> Self {
        let b = half_bandwidth.min(n_main.saturating_sub(1));
        Self {
            n: n_main,
            b,
            nb: n_border,
            band: vec![0.0; n_main * (b + 1)],
            cross: vec![0.0; n_border * n_main],
            corner: DMatrix::zeros(n_border, n_border),
        }
    }

    pub fn dim(&self) -> usize {
        self.n + self.nb
    }

    /// Adds `v` to `H[i][j]` and `H[j][i]` (once if `i == j`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i >= self.n {
            if j >= self.n {
                self.corner[(i - self.n, j - self.n)] += v;
                if i != j {
                    self.corner[(j - self.n, i - self.n)] += v;
                }
            } else {
                self.cross[(i - self.n) * self.n + j] += v;
            }
        } else {
            if i - j > self.b {
                return Err(Error::Solver(format!("entry ({i}, {j}) outside half-bandwidth {}", self.b)));
            }
            self.band[i * (self.b + 1) + (i - j)] += v;
        }
        Ok(())
    }

    pub fn diag(&self, i: usize) -> f64 {
        if i < self.n {
            self.band[i * (self.b + 1)]
        } else {
            self.corner[(i - self.n, i - self.n)]
        }
    }

    pub fn add_diag(&mut self, i: usize, v: f64) {
        if i < self.n {
            self.band[i * (self.b + 1)] += v;
        } else {
            self.corner[(i - self.n, i - self.n)] += v;
        }
    }

    /// Replaces row and column `i` by the identity row (fixes variable `i`).
    pub fn pin(&mut self, i: usize) {
        if i < self.n {
            let w = self.b + 1;
            for d in 0..w.min(i + 1) {
                self.band[i * w + d] = 0.0;
            }
            for r in i + 1..(i + w).min(self.n) {
                self.band[r * w + (r - i)] = 0.0;
            }
            for r in 0..self.nb {
                self.cross[r * self.n + i] = 0.0;
            }
            self.band[i * w] = 1.0;
        } else {
            let k = i - self.n;
            for j in 0..self.n {
                self.cross[k * self.n + j] = 0.0;
            }
            for j in 0..self.nb {
                self.corner[(k, j)] = 0.0;
                self.corner[(j, k)] = 0.0;
            }
            self.corner[(k, k)] = 1.0;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        let w = self.b + 1;
        for i in 0..self.n {
            for k in 0..w.min(i + 1) {
                let v = self.band[i * w + k];
                m[(i, i - k)] = v;
                m[(i - k, i)] = v;
            }
        }
        for r in 0..self.nb {
            for j in 0..self.n {
                let v = self.cross[r * self.n + j];
                m[(self.n + r, j)] = v;
                m[(j, self.n + r)] = v;
            }
            for c in 0..self.nb {
                m[(self.n + r, self.n + c)] = self.corner[(r, c)];
            }
        }
        m
    }

    /// Calls `f(i, j, v)` for every stored entry with `i >= j`.
    pub fn for_each_lower(&self, mut f: impl FnMut(usize, usize, f64)) {
        let w = self.b + 1;
        for i in 0..self.n {
            for k in 0..w.min(i + 1) {
                let v = self.band[i * w + k];
                if v != 0.0 {
                    f(i, i - k, v);
                }
            }
        }
        for r in 0..self.nb {
            for j in 0..self.n {
                let v = self.cross[r * self.n + j];
                if v != 0.0 {
                    f(self.n + r, j, v);
                }
            }
            for c in 0..=r {
                let v = self.corner[(r, c)];
                if v != 0.0 {
                    f(self.n + r, self.n + c, v);
                }
            }
        }
    }

    /// `LDLᵀ` factorization without pivoting, so the matrix must be
    /// quasi-definite in the given order (or positive definite).
    pub fn factor(&self) -> Result<Factorization> {
        let band = BandLdl::factor(self.n, self.b, &self.band)?;
        let (n, nb) = (self.n, self.nb);
        let cols: Vec<Vec<f64>> = (0..nb).map(|r| band.solve(&self.cross[r * n..(r + 1) * n])).collect();
        let mut s = self.corner.clone();
        for r in 0..nb {
            let brow = &self.cross[r * n..(r + 1) * n];
            for c in 0..nb {
                s[(r, c)] -= dot(brow, &cols[c]);
            }
        }
        let s = (&s + s.transpose()) * 0.5;
        let mut inertia = band.inertia();
        let eigenvalues = if nb > 0 { s.clone().symmetric_eigen().eigenvalues } else { DVector::zeros(0) };
        let scale = eigenvalues.amax().max(1.0);
        for &ev in eigenvalues.iter() {
            if ev.abs() <= 1e-13 * scale {
                inertia.zero += 1;
            } else if ev > 0.0 {
                inertia.positive += 1;
            } else {
                inertia.negative += 1;
            }
        }
        let schur = s.lu();
        Ok(Factorization { band, cross: self.cross.clone(), cols, schur, nb, inertia })
    }

    /// Solves `H x = rhs` for nonsingular `H` factorable without pivoting.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let f = self.factor()?;
        if f.inertia.zero > 0 {
            return Err(Error::Solver("singular matrix".into()));
        }
        Ok(f.solve(rhs))
    }
}

/// Eigenvalue sign counts of a factored symmetric matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

pub struct Factorization {
    band: BandLdl,
    cross: Vec<f64>,
    /// `A⁻¹ B` column by column.
    cols: Vec<Vec<f64>>,
    schur: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    nb: usize,
    inertia: Inertia,
}

impl Factorization {
    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.band.n;
        let mut x = self.band.solve(&rhs[..n]);
        if self.nb == 0 {
            return x;
        }
        let mut r2 = DVector::from_column_slice(&rhs[n..]);
        for r in 0..self.nb {
            r2[r] -= dot(&self.cross[r * n..(r + 1) * n], &x);
        }
        let y = self.schur.solve(&r2).unwrap_or_else(|| DVector::from_element(self.nb, f64::NAN));
        for (c, col) in self.cols.iter().enumerate() {
            for (xi, ci) in x.iter_mut().zip(col) {
                *xi -= y[c] * ci;
            }
        }
        x.extend(y.iter());
        x
    }
}

/// Banded `L D Lᵀ` with unit lower `L` stored row-major like the band.
struct BandLdl {
    n: usize,
    b: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandLdl {
    fn factor(n: usize, b: usize, band: &[f64]) -> Result<Self> {
        let w = b + 1;
        let mut l = band.to_vec();
        let mut d = vec![0.0; n];
        // first structurally nonzero column of each row; fill stays inside this envelope
        let first: Vec<usize> = (0..n)
            .map(|i| {
                let j0 = i.saturating_sub(b);
                (j0..i).find(|&j| band[i * w + (i - j)] != 0.0).unwrap_or(i)
            })
            .collect();
        // scratch row of L[i][k]·d[k], indexed by i - k
        let mut ld = vec![0.0; w];
        let scale = (0..n).map(|i| band[i * w].abs()).fold(0.0, f64::max).max(1e-300);
        for i in 0..n {
            let j0 = first[i];
            for j in j0..i {
                let k0 = j0.max(first[j]);
                // Σ_k L[i][k] d[k] L[j][k] over k in k0..j, with t = j - k
                let s = l[i * w + (i - j)] - dot(&ld[i - j + 1..=i - k0], &l[j * w + 1..=j * w + (j - k0)]);
                ld[i - j] = s;
                l[i * w + (i - j)] = s / d[j];
            }
            let s = l[i * w] - dot(&ld[1..=i - j0], &l[i * w + 1..=i * w + (i - j0)]);
            if !s.is_finite() {
                return Err(Error::Solver(format!("non-finite pivot {i}")));
            }
            // keep exact zeros out of the division; they are counted as singular
            d[i] = if s.abs() <= 1e-300 * scale { 1e-300 * scale.max(1.0) } else { s };
            l[i * w] = 1.0;
        }
        Ok(Self { n, b, l, d })
    }

    fn inertia(&self) -> Inertia {
        let scale = self.d.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        let mut out = Inertia::default();
        for &v in &self.d {
            if v.abs() <= 1e-14 * scale {
                out.zero += 1;
            } else if v > 0.0 {
                out.positive += 1;
            } else {
                out.negative += 1;
            }
        }
        out
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, b, w) = (self.n, self.b, self.b + 1);
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(b)..i {
                s -= self.l[i * w + (i - k)] * y[k];
            }
            y[i] = s;
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for r in i + 1..(i + w).min(n) {
                s -= self.l[r * w + (r - i)] * y[r];
            }
            y[i] = s;
        }
        y
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Largest admissible constraint violation (∞-norm).
    pub feasibility_tol: f64,
    /// Tolerance on the scaled Lagrangian gradient and complementarity.
    pub optimality_tol: f64,
    pub max_iterations: usize,
    /// Sufficient-decrease fraction of the Armijo test.
    pub armijo: f64,
    /// Step reduction factor while backtracking.
    pub backtrack: f64,
    /// Smallest step, relative to the longest admissible one, tried before
    /// the line search gives up.
    pub min_step: f64,
    /// Smallest nonzero Hessian shift used to fix the inertia.
    pub regularization_floor: f64,
    /// Starting weight of the log barrier on slacks and bounds.
    pub initial_barrier: f64,
    /// Internal weight on the objective; does not change reported values.
    /// Raise it when objective values are far below one.
    pub objective_scale: f64,
    /// Include the problem's constraint curvature in the Newton matrix.
    /// Off by default: the Gauss–Newton matrix alone converged faster on
    /// the collocation problems tried here.
    pub constraint_curvature: bool,
    /// Stop as feasible-stalled once a feasible run of this many iterations
    /// lowers the objective by less than `stall_tol` relative.
    pub stall_window: usize,
    pub stall_tol: f64,
    /// Record per-iteration diagnostics in the returned solution.
    pub record_log: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-6,
            optimality_tol: 1e-6,
            max_iterations: 3000,
            armijo: 1e-4,
            backtrack: 0.5,
            min_step: 1e-10,
            regularization_floor: 1e-20,
            initial_barrier: 1e-2,
            objective_scale: 1.0,
            constraint_curvature: false,
            stall_window: 50,
            stall_tol: 1e-5,
            record_log: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("feasibility_tol", self.feasibility_tol),
            ("optimality_tol", self.optimality_tol),
            ("min_step", self.min_step),
            ("regularization_floor", self.regularization_floor),
            ("objective_scale", self.objective_scale),
            ("initial_barrier", self.initial_barrier),
            ("stall_tol", self.stall_tol),
        ];
        for (f, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(f, "must be positive and finite"));
            }
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return Err(Error::invalid("armijo", "must lie in (0, 0.5)"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::invalid("backtrack", "must lie in (0, 1)"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    FeasibleStalled,
    Infeasible,
    IterationLimit,
}

impl SolveStatus {
    pub fn is_feasible(self) -> bool {
        matches!(self, Self::Optimal | Self::FeasibleStalled)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::FeasibleStalled => "feasible-stalled",
            Self::Infeasible => "infeasible",
            Self::IterationLimit => "iteration-limit",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SolveStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "optimal" => Self::Optimal,
            "feasible-stalled" => Self::FeasibleStalled,
            "infeasible" => Self::Infeasible,
            "iteration-limit" => Self::IterationLimit,
            _ => return Err(Error::invalid("status", format!("unknown solver status {s:?}"))),
        })
    }
}

/// One accepted (or final) inner iteration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub outer: usize,
    pub objective: f64,
    pub feasibility: f64,
    pub step_length: f64,
    pub merit: f64,
    pub penalty: f64,
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    /// Best feasible iterate, or the last iterate if none was feasible.
    pub z: Vec<f64>,
    pub objective: f64,
    pub violation: f64,
    pub kkt_residual: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub log: Vec<IterRecord>,
    /// Where the iteration stopped, which may differ from `z`.
    pub last_iterate: Vec<f64>,
}

impl SolveOutput {
    /// Per-iteration diagnostics as CSV.
    pub fn log_csv(&self) -> String {
        let mut s = String::from("iter,outer,objective,feasibility,step_length,merit,penalty\n");
        for r in &self.log {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.iter, r.outer, r.objective, r.feasibility, r.step_length, r.merit, r.penalty
            ));
        }
        s
    }
}

struct Bounds {
    lb: Vec<f64>,
    ub: Vec<f64>,
    fixed: Vec<bool>,
}

impl Bounds {
    fn violation(&self, z: &[f64]) -> f64 {
        z.iter()
            .enumerate()
            .filter(|(i, _)| !self.fixed[*i])
            .map(|(i, &v)| (self.lb[i] - v).max(v - self.ub[i]).max(0.0))
            .fold(0.0, f64::max)
    }

    fn lower(&self, i: usize) -> bool {
        !self.fixed[i] && self.lb[i].is_finite()
    }

    fn upper(&self, i: usize) -> bool {
        !self.fixed[i] && self.ub[i].is_finite()
    }

    /// Moves `z` strictly inside the bounds.
    fn push_inside(&self, z: &mut [f64]) {
        for i in 0..z.len() {
            if self.fixed[i] {
                z[i] = self.lb[i];
                continue;
            }
            let (lb, ub) = (self.lb[i], self.ub[i]);
            let width = ub - lb;
            let push = |b: f64| {
                let m = BOUND_PUSH * b.abs().max(1.0);
                if width.is_finite() {
                    m.min(BOUND_PUSH * width)
                } else {
                    m
                }
            };
            if lb.is_finite() {
                z[i] = z[i].max(lb + push(lb));
            }
            if ub.is_finite() {
                z[i] = z[i].min(ub - push(ub));
            }
        }
    }
}

const BOUND_PUSH: f64 = 1e-2;
const SLACK_FLOOR: f64 = 1e-2;
/// Bound multipliers are kept within this factor of `μ / gap`.
const DUAL_SPREAD: f64 = 1e10;
/// Fraction of the ℓ1 infeasibility the penalty must buy as model decrease.
const PENALTY_MARGIN: f64 = 0.1;
const FIRST_SHIFT: f64 = 1e-4;
const MAX_SHIFT: f64 = 1e40;
const DUAL_REG: f64 = 1e-8;
const MAX_SOC: usize = 4;

fn violation(e: &Evaluation) -> f64 {
    let c = e.eq.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    e.ineq.iter().fold(c, |a, v| a.max(*v))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Primal-dual iterate. Inequalities are `g + s = 0` with `s > 0`.
#[derive(Clone)]
struct Iterate {
    z: Vec<f64>,
    s: Vec<f64>,
    y_eq: Vec<f64>,
    y_in: Vec<f64>,
    /// Slack multipliers.
    v: Vec<f64>,
    z_lo: Vec<f64>,
    z_up: Vec<f64>,
}

struct Direction {
    z: Vec<f64>,
    s: Vec<f64>,
    y_eq: Vec<f64>,
    y_in: Vec<f64>,
}

/// Right-hand sides of the Newton system.
struct Rhs {
    /// Barrier-Lagrangian gradient in `z` (zero on fixed variables).
    z: Vec<f64>,
    /// `y_in - μ/s`.
    s: Vec<f64>,
    eq: Vec<f64>,
    /// `g + s`.
    ineq: Vec<f64>,
}

/// Ordering of the condensed Newton matrix: equality multipliers are
/// interleaved after the last main variable they touch so the matrix keeps
/// its band.
struct KktLayout {
    /// Position of each variable.
    var_pos: Vec<usize>,
    /// Position of each equality multiplier.
    eq_pos: Vec<usize>,
    n_main: usize,
    n_border: usize,
    half_bandwidth: usize,
}

impl KktLayout {
    fn new(n: usize, n_border_vars: usize, hb: usize, jeq: &Csr) -> Self {
        let n_main_vars = n - n_border_vars;
        // sort keys: variables at 2i, a row at 2·(last main column)+1
        let mut main: Vec<(usize, bool, usize)> = (0..n_main_vars).map(|i| (2 * i, true, i)).collect();
        let mut border_rows = Vec::new();
        for r in 0..jeq.n_rows() {
            let (c, _) = jeq.row(r);
            match c.iter().copied().filter(|&c| c < n_main_vars).max() {
                Some(last) => main.push((2 * last + 1, false, r)),
                None => border_rows.push(r),
            }
        }
        main.sort_unstable();
        let mut var_pos = vec![0; n];
        let mut eq_pos = vec![0; jeq.n_rows()];
        for (p, &(_, is_var, id)) in main.iter().enumerate() {
            if is_var {
                var_pos[id] = p;
            } else {
                eq_pos[id] = p;
            }
        }
        let n_main = main.len();
        for (k, i) in (n_main_vars..n).enumerate() {
            var_pos[i] = n_main + k;
        }
        for (k, &r) in border_rows.iter().enumerate() {
            eq_pos[r] = n_main + n_border_vars + k;
        }
        // band: Hessian couplings within `hb` plus equality rows
        let mut band = 0;
        for i in 0..n_main_vars {
            let j = (i + hb).min(n_main_vars - 1);
            band = band.max(var_pos[j] - var_pos[i]);
        }
        for r in 0..jeq.n_rows() {
            if eq_pos[r] >= n_main {
                continue;
            }
            for &c in jeq.row(r).0 {
                if c < n_main_vars {
                    band = band.max(eq_pos[r].abs_diff(var_pos[c]));
                }
            }
        }
        Self { var_pos, eq_pos, n_main, n_border: n_border_vars + border_rows.len(), half_bandwidth: band }
    }
}

/// Quantities at the current iterate shared by direction computations.
struct Linearization<'a> {
    e: &'a Evaluation,
    sigma_z: Vec<f64>,
    /// Slack curvature `v/s` plus the Hessian shift.
    sigma_s: Vec<f64>,
    /// Condensed inequality weights.
    d_in: Vec<f64>,
    delta_c: f64,
}

struct Solver<'a, P: Problem + ?Sized> {
    p: &'a P,
    config: &'a SolverConfig,
    bounds: Bounds,
    n: usize,
}

impl<'a, P: Problem + ?Sized> Solver<'a, P> {
    fn jac<'e>(&self, e: &'e Evaluation) -> &'e Jacobians {
        e.jacobian.as_ref().expect("jacobian requested")
    }

    fn gap_lo(&self, z: &[f64], i: usize) -> f64 {
        z[i] - self.bounds.lb[i]
    }

    fn gap_up(&self, z: &[f64], i: usize) -> f64 {
        self.bounds.ub[i] - z[i]
    }

    fn objective_gradient(&self, e: &Evaluation) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        let w: Vec<f64> = e.residuals.iter().map(|r| 2.0 * self.config.objective_scale * r).collect();
        self.jac(e).residuals.tr_mul_add(&w, &mut g);
        g
    }

    /// `∇f + J_eqᵀ y_eq + J_inᵀ y_in`, zero on fixed variables.
    fn lagrangian_gradient(&self, e: &Evaluation, it: &Iterate) -> Vec<f64> {
        let j = self.jac(e);
        let mut g = self.objective_gradient(e);
        j.eq.tr_mul_add(&it.y_eq, &mut g);
        j.ineq.tr_mul_add(&it.y_in, &mut g);
        for i in 0..self.n {
            if self.bounds.fixed[i] {
                g[i] = 0.0;
            }
        }
        g
    }

    /// Barrier merit `σf - μ Σ ln(slacks, gaps) + ν ‖(c, g + s)‖₁`.
    fn merit(&self, e: &Evaluation, z: &[f64], s: &[f64], mu: f64, nu: f64) -> f64 {
        let mut v = self.config.objective_scale * e.objective();
        for &si in s {
            if si <= 0.0 {
                return f64::INFINITY;
            }
            v -= mu * si.ln();
        }
        for i in 0..self.n {
            for (on, gap) in [(self.bounds.lower(i), self.gap_lo(z, i)), (self.bounds.upper(i), self.gap_up(z, i))] {
                if on {
                    if gap <= 0.0 {
                        return f64::INFINITY;
                    }
                    v -= mu * gap.ln();
                }
            }
        }
        v + nu * constraint_l1(e, s)
    }

    /// Optimality error of the barrier problem for `mu` (`mu = 0` gives
    /// the error of the original problem), with multiplier-based scaling.
    fn kkt_error(&self, e: &Evaluation, it: &Iterate, mu: f64) -> (f64, f64, f64) {
        let mut g = self.lagrangian_gradient(e, it);
        for i in 0..self.n {
            if self.bounds.lower(i) {
                g[i] -= it.z_lo[i];
            }
            if self.bounds.upper(i) {
                g[i] += it.z_up[i];
            }
        }
        let dual = inf_norm(&g).max(it.y_in.iter().zip(&it.v).fold(0.0, |a, (y, v)| a.max((y - v).abs())));
        let primal = e.eq.iter().fold(0.0f64, |a, c| a.max(c.abs())).max(
            e.ineq.iter().zip(&it.s).fold(0.0, |a, (g, s)| a.max((g + s).abs())),
        );
        let mut compl: f64 = it.s.iter().zip(&it.v).fold(0.0, |a, (s, v)| a.max((s * v - mu).abs()));
        let mut dual_sum: f64 = it.y_eq.iter().chain(&it.y_in).map(|v| v.abs()).sum();
        let mut bound_sum: f64 = it.v.iter().sum();
        let mut m = it.y_eq.len() + it.y_in.len();
        let mut nbound = it.v.len();
        for i in 0..self.n {
            if self.bounds.lower(i) {
                compl = compl.max((self.gap_lo(&it.z, i) * it.z_lo[i] - mu).abs());
                bound_sum += it.z_lo[i];
                nbound += 1;
            }
            if self.bounds.upper(i) {
                compl = compl.max((self.gap_up(&it.z, i) * it.z_up[i] - mu).abs());
                bound_sum += it.z_up[i];
                nbound += 1;
            }
        }
        dual_sum += bound_sum;
        m += nbound;
        let s_max = 100.0;
        let s_d = if m + nbound == 0 { 1.0 } else { (dual_sum / (m as f64)).max(s_max) / s_max };
        let s_c = if nbound == 0 { 1.0 } else { (bound_sum / nbound as f64).max(s_max) / s_max };
        (dual / s_d, primal, compl / s_c)
    }

    fn rhs(&self, e: &Evaluation, it: &Iterate, mu: f64) -> Rhs {
        let mut rz = self.lagrangian_gradient(e, it);
        for i in 0..self.n {
            if self.bounds.lower(i) {
                rz[i] -= mu / self.gap_lo(&it.z, i);
            }
            if self.bounds.upper(i) {
                rz[i] += mu / self.gap_up(&it.z, i);
            }
        }
        Rhs {
            z: rz,
            s: it.y_in.iter().zip(&it.s).map(|(y, s)| y - mu / s).collect(),
            eq: e.eq.clone(),
            ineq: e.ineq.iter().zip(&it.s).map(|(g, s)| g + s).collect(),
        }
    }

    /// Hessian of the Lagrangian in the variable ordering of the problem.
    fn hessian(&self, e: &Evaluation, it: &Iterate) -> Result<BandedBordered> {
        let n = self.n;
        let mut h = BandedBordered::zeros(n - self.p.n_border(), self.p.half_bandwidth(), self.p.n_border());
        accumulate(&mut h, &self.jac(e).residuals, |_| 2.0 * self.config.objective_scale)?;
        if self.config.constraint_curvature {
            self.p.add_constraint_hessian(&it.z, &it.y_eq, &it.y_in, &mut h)?;
        }
        Ok(h)
    }

    /// Assembles and factors the condensed Newton matrix with Hessian shift
    /// `delta_w`, returning the factor and whether its inertia is right.
    fn factor(
        &self,
        layout: &KktLayout,
        hess: &BandedBordered,
        lin: &Linearization,
        delta_w: f64,
    ) -> Result<(Factorization, bool)> {
        let j = self.jac(lin.e);
        let mut k = BandedBordered::zeros(layout.n_main, layout.half_bandwidth, layout.n_border);
        let pos = &layout.var_pos;
        let fixed = &self.bounds.fixed;
        hess.for_each_lower(|a, b, v| {
            if !fixed[a] && !fixed[b] {
                k.add(pos[a], pos[b], v).expect("Hessian entry inside the band");
            }
        });
        for r in 0..j.ineq.n_rows() {
            let w = lin.d_in[r];
            let (c, v) = j.ineq.row(r);
            for a in 0..c.len() {
                if fixed[c[a]] {
                    continue;
                }
                for b in 0..=a {
                    if !fixed[c[b]] {
                        k.add(pos[c[a]], pos[c[b]], w * v[a] * v[b])?;
                    }
                }
            }
        }
        for i in 0..self.n {
            if fixed[i] {
                k.add_diag(pos[i], 1.0);
            } else {
                k.add_diag(pos[i], lin.sigma_z[i] + delta_w);
            }
        }
        for r in 0..j.eq.n_rows() {
            let (c, v) = j.eq.row(r);
            for (c, v) in c.iter().zip(v) {
                if !fixed[*c] {
                    k.add(layout.eq_pos[r], pos[*c], *v)?;
                }
            }
            k.add_diag(layout.eq_pos[r], -lin.delta_c);
        }
        let f = k.factor()?;
        let inertia = f.inertia();
        let ok = inertia.zero == 0 && inertia.negative == j.eq.n_rows();
        Ok((f, ok))
    }

    /// Solves the Newton system for the given right-hand sides.
    fn direction(&self, layout: &KktLayout, f: &Factorization, lin: &Linearization, r: &Rhs) -> Direction {
        let j = self.jac(lin.e);
        let n = self.n;
        // eliminated slack rows: Δy_in = D (J_in Δz + r_in - r_s/Σ_s)
        let shifted: Vec<f64> =
            (0..r.ineq.len()).map(|i| lin.d_in[i] * (r.ineq[i] - r.s[i] / lin.sigma_s[i])).collect();
        let mut top = r.z.clone();
        j.ineq.tr_mul_add(&shifted, &mut top);
        let mut rhs = vec![0.0; layout.n_main + layout.n_border];
        for i in 0..n {
            rhs[layout.var_pos[i]] = if self.bounds.fixed[i] { 0.0 } else { -top[i] };
        }
        for (row, c) in r.eq.iter().enumerate() {
            rhs[layout.eq_pos[row]] = -c;
        }
        let sol = f.solve(&rhs);
        let dz: Vec<f64> = (0..n).map(|i| if self.bounds.fixed[i] { 0.0 } else { sol[layout.var_pos[i]] }).collect();
        let dy_eq: Vec<f64> = (0..r.eq.len()).map(|row| sol[layout.eq_pos[row]]).collect();
        let jdz = j.ineq.mul(&dz);
        let dy_in: Vec<f64> = (0..r.ineq.len())
            .map(|i| lin.d_in[i] * (jdz[i] + r.ineq[i] - r.s[i] / lin.sigma_s[i]))
            .collect();
        let ds: Vec<f64> = (0..r.ineq.len()).map(|i| -(r.s[i] + dy_in[i]) / lin.sigma_s[i]).collect();
        Direction { z: dz, s: ds, y_eq: dy_eq, y_in: dy_in }
    }

    /// Largest step in `(0, 1]` keeping slacks and gaps above `1 - tau` of
    /// their current values.
    fn max_primal_step(&self, it: &Iterate, d: &Direction, tau: f64) -> f64 {
        let mut a = 1.0f64;
        for (s, ds) in it.s.iter().zip(&d.s) {
            if *ds < 0.0 {
                a = a.min(tau * s / -ds);
            }
        }
        for i in 0..self.n {
            if self.bounds.lower(i) && d.z[i] < 0.0 {
                a = a.min(tau * self.gap_lo(&it.z, i) / -d.z[i]);
            }
            if self.bounds.upper(i) && d.z[i] > 0.0 {
                a = a.min(tau * self.gap_up(&it.z, i) / d.z[i]);
            }
        }
        a
    }
}

fn constraint_l1(e: &Evaluation, s: &[f64]) -> f64 {
    e.eq.iter().map(|c| c.abs()).sum::<f64>() + e.ineq.iter().zip(s).map(|(g, s)| (g + s).abs()).sum::<f64>()
}

fn accumulate(h: &mut BandedBordered, j: &Csr, weight: impl Fn(usize) -> f64) -> Result<()> {
    for r in 0..j.n_rows() {
        let w = weight(r);
        if w == 0.0 {
            continue;
        }
        let (c, v) = j.row(r);
        for a in 0..c.len() {
            let wa = w * v[a];
            if wa == 0.0 {
                continue;
            }
            for b in 0..=a {
                h.add(c[a], c[b], wa * v[b])?;
            }
        }
    }
    Ok(())
}

/// Solves `p` from `init`, which is first moved strictly inside the bounds.
///
/// Primal-dual interior-point SQP: each iteration solves the Newton system
/// of the barrier KKT conditions (Hessian shifted until the inertia is
/// right), then backtracks on an ℓ1 barrier merit with one second-order
/// correction.
pub fn solve<P: Problem + ?Sized>(p: &P, init: &[f64], config: &SolverConfig) -> Result<SolveOutput> {
    config.validate()?;
    let n = p.n_vars();
    if init.len() != n {
        return Err(Error::Dimension { what: "initial point", expected: n, got: init.len() });
    }
    let (lb, ub) = p.bounds();
    let fixed: Vec<bool> = lb.iter().zip(&ub).map(|(l, u)| l == u).collect();
    let bounds = Bounds { lb, ub, fixed };
    let solver = Solver { p, config, bounds, n };
    let bounds = &solver.bounds;

    let mut z = init.to_vec();
    bounds.push_inside(&mut z);
    let mut e = p.evaluate(&z, true)?;
    e.check_finite().map_err(|err| with_iterate(err, &z))?;
    let mut mu = config.initial_barrier;
    let s: Vec<f64> = e.ineq.iter().map(|g| (-g).max(SLACK_FLOOR)).collect();
    let v: Vec<f64> = s.iter().map(|s| mu / s).collect();
    let z_lo = (0..n).map(|i| if bounds.lower(i) { mu / solver.gap_lo(&z, i) } else { 0.0 }).collect();
    let z_up = (0..n).map(|i| if bounds.upper(i) { mu / solver.gap_up(&z, i) } else { 0.0 }).collect();
    let mut it = Iterate { y_eq: vec![0.0; e.eq.len()], y_in: v.clone(), v, s, z, z_lo, z_up };

    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |best: &mut Option<(f64, Vec<f64>)>, z: &[f64], e: &Evaluation| {
        if violation(e).max(bounds.violation(z)) <= config.feasibility_tol {
            let f = e.objective();
            if best.as_ref().map_or(true, |b| f < b.0) {
                *best = Some((f, z.to_vec()));
            }
        }
    };
    consider(&mut best, &it.z, &e);

    let mu_min = config.optimality_tol.min(config.feasibility_tol) / 10.0;
    let mut nu = 0.0f64;
    let mut delta_last = 0.0f64;
    // Hessian shift kept after short steps; it acts like a trust region
    let mut delta_min = 0.0f64;
    let mut segment = 1;
    let mut iters = 0;
    let mut kkt = f64::INFINITY;
    let mut converged = false;
    let mut log = Vec::new();
    // start of the current feasible run: (iteration, objective)
    let mut run_start: Option<(usize, f64)> = None;

    while iters < config.max_iterations {
        let (dual, primal, compl) = solver.kkt_error(&e, &it, 0.0);
        kkt = dual.max(compl);
        if kkt <= config.optimality_tol && primal <= config.feasibility_tol && violation(&e) <= config.feasibility_tol {
            converged = true;
            break;
        }
        // barrier update once the barrier problem is solved well enough
        loop {
            let (d, pr, c) = solver.kkt_error(&e, &it, mu);
            if mu <= mu_min || d.max(pr).max(c) > 10.0 * mu {
                break;
            }
            mu = (0.2 * mu).min(mu.powf(1.5)).max(mu_min);
            segment += 1;
        }
        iters += 1;

        let hess = solver.hessian(&e, &it)?;
        let j = solver.jac(&e);
        let layout = KktLayout::new(n, p.n_border(), p.half_bandwidth(), &j.eq);
        let sigma_z: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = 0.0;
                if bounds.lower(i) {
                    s += it.z_lo[i] / solver.gap_lo(&it.z, i);
                }
                if bounds.upper(i) {
                    s += it.z_up[i] / solver.gap_up(&it.z, i);
                }
                s
            })
            .collect();
        let r = solver.rhs(&e, &it, mu);

        // inertia correction, starting from the adaptive floor
        let mut delta_w = delta_min;
        let mut delta_c = 0.0;
        let mut attempt = 0;
        let (fact, lin) = loop {
            let sigma_s: Vec<f64> = it.v.iter().zip(&it.s).map(|(v, s)| v / s + delta_w).collect();
            let d_in: Vec<f64> = sigma_s.iter().map(|ss| 1.0 / (1.0 / ss + delta_c)).collect();
            let lin = Linearization { e: &e, sigma_z: sigma_z.clone(), sigma_s, d_in, delta_c };
            let (f, ok) = solver.factor(&layout, &hess, &lin, delta_w)?;
            if ok {
                break (f, lin);
            }
            if f.inertia().zero > 0 && delta_c == 0.0 && f.inertia().negative + f.inertia().zero == j.eq.n_rows() {
                delta_c = DUAL_REG * mu.powf(0.25);
                continue;
            }
            attempt += 1;
            delta_w = if delta_w == 0.0 {
                if delta_last == 0.0 {
                    FIRST_SHIFT
                } else {
                    (delta_last / 3.0).max(config.regularization_floor)
                }
            } else if delta_last == 0.0 {
                delta_w * 100.0
            } else {
                delta_w * 8.0
            };
            if delta_w > MAX_SHIFT {
                return Err(Error::Solver(format!("no usable Newton matrix after {attempt} shifts")));
            }
        };
        if delta_w > 0.0 {
            delta_last = delta_w;
        }
        let d = solver.direction(&layout, &fact, &lin, &r);

        // penalty update so the step is a descent direction of the merit
        let grad_f = solver.objective_gradient(&e);
        let mut slope: f64 = (0..n)
            .filter(|&i| !bounds.fixed[i])
            .map(|i| {
                let mut g = grad_f[i];
                if bounds.lower(i) {
                    g -= mu / solver.gap_lo(&it.z, i);
                }
                if bounds.upper(i) {
                    g += mu / solver.gap_up(&it.z, i);
                }
                g * d.z[i]
            })
            .sum();
        slope -= it.s.iter().zip(&d.s).map(|(s, ds)| mu * ds / s).sum::<f64>();
        // curvature term ΔᵀHΔ from the Newton equations
        let curv = {
            let mut hz = vec![0.0; n];
            hess_mul(&hess, &d.z, &mut hz);
            let mut q: f64 = (0..n).filter(|&i| !bounds.fixed[i]).map(|i| d.z[i] * (hz[i] + (sigma_z[i] + delta_w) * d.z[i])).sum();
            q += (0..d.s.len()).map(|i| lin.sigma_s[i] * d.s[i] * d.s[i]).sum::<f64>();
            q
        };
        let infeas = constraint_l1(&e, &it.s);
        if infeas > 0.0 {
            let need = (slope + 0.5 * curv.max(0.0)) / ((1.0 - PENALTY_MARGIN) * infeas);
            if need > nu {
                nu = (need + 1.0).max(2.0 * nu);
                segment += 1;
            }
        }
        let dir_deriv = slope - nu * infeas;
        let phi0 = solver.merit(&e, &it.z, &it.s, mu, nu);

        let tau = (1.0 - mu).max(0.99);
        let alpha_max = solver.max_primal_step(&it, &d, tau);
        let mut alpha = alpha_max;
        let mut accepted: Option<(Vec<f64>, Vec<f64>, Evaluation, f64, f64, bool)> = None;
        let mut first = true;
        while alpha >= config.min_step * alpha_max.max(1e-300) {
            let zt: Vec<f64> = it.z.iter().zip(&d.z).map(|(a, b)| a + alpha * b).collect();
            let st: Vec<f64> = it.s.iter().zip(&d.s).map(|(a, b)| a + alpha * b).collect();
            let et = match p.evaluate(&zt, false) {
                Ok(et) if et.check_finite().is_ok() => Some(et),
                _ => None,
            };
            if let Some(et) = et {
                let phi = solver.merit(&et, &zt, &st, mu, nu);
                if phi <= phi0 + config.armijo * alpha * dir_deriv || (phi - phi0).abs() <= 10.0 * f64::EPSILON * phi0.abs() {
                    accepted = Some((zt, st, et, phi, alpha, false));
                    break;
                }
                if first {
                    // second-order corrections, each built on the last trial's constraint values
                    let mut c_eq: Vec<f64> = r.eq.iter().zip(&et.eq).map(|(c, ct)| alpha * c + ct).collect();
                    let mut c_in: Vec<f64> =
                        r.ineq.iter().zip(et.ineq.iter().zip(&st)).map(|(c, (g, s))| alpha * c + g + s).collect();
                    let mut theta_prev = constraint_l1(&et, &st);
                    for _ in 0..MAX_SOC {
                        let soc = Rhs { z: r.z.clone(), s: r.s.clone(), eq: c_eq.clone(), ineq: c_in.clone() };
                        let dc = solver.direction(&layout, &fact, &lin, &soc);
                        let a_soc = solver.max_primal_step(&it, &dc, tau);
                        let zc: Vec<f64> = it.z.iter().zip(&dc.z).map(|(a, b)| a + a_soc * b).collect();
                        let sc: Vec<f64> = it.s.iter().zip(&dc.s).map(|(a, b)| a + a_soc * b).collect();
                        let Some(ec) = p.evaluate(&zc, false).ok().filter(|ec| ec.check_finite().is_ok()) else {
                            break;
                        };
                        let phic = solver.merit(&ec, &zc, &sc, mu, nu);
                        if phic <= phi0 + config.armijo * alpha * dir_deriv {
                            accepted = Some((zc, sc, ec, phic, a_soc, true));
                            break;
                        }
                        let theta = constraint_l1(&ec, &sc);
                        if theta > 0.99 * theta_prev {
                            break;
                        }
                        theta_prev = theta;
                        for (c, v) in c_eq.iter_mut().zip(&ec.eq) {
                            *c = a_soc * *c + v;
                        }
                        for (c, (g, s)) in c_in.iter_mut().zip(ec.ineq.iter().zip(&sc)) {
                            *c = a_soc * *c + g + s;
                        }
                    }
                    if accepted.is_some() {
                        break;
                    }
                }
            }
            first = false;
            alpha *= config.backtrack;
        }

        let Some((zt, st, _, phi, alpha, soc)) = accepted else {
            debug!("iter {iters}: line search failed (alpha_max={alpha_max:.2e}, delta_w={delta_w:.1e})");
            // stiffen the next Newton matrix and retry from the same point
            delta_min = (delta_w * 100.0).max(FIRST_SHIFT);
            if delta_min > MAX_SHIFT.sqrt() {
                break;
            }
            continue;
        };
        if alpha < 0.25 * alpha_max && !soc {
            delta_min = (delta_w * 3.0).max(config.regularization_floor.max(FIRST_SHIFT * 1e-4));
        } else if alpha >= alpha_max {
            delta_min = if delta_min / 4.0 < config.regularization_floor.max(1e-12) { 0.0 } else { delta_min / 4.0 };
        }
        let step = if soc { inf_norm(&zt.iter().zip(&it.z).map(|(a, b)| a - b).collect::<Vec<_>>()) } else { alpha * inf_norm(&d.z) };
        // the dual step follows the primal step length
        for (y, dy) in it.y_eq.iter_mut().zip(&d.y_eq) {
            *y += alpha * dy;
        }
        for (y, dy) in it.y_in.iter_mut().zip(&d.y_in) {
            *y += alpha * dy;
        }
        // bound and slack multipliers from the primal-dual complementarity
        let dv: Vec<f64> = (0..it.s.len()).map(|i| mu / it.s[i] - it.v[i] - (it.v[i] / it.s[i]) * d.s[i]).collect();
        let dlo: Vec<f64> = (0..n)
            .map(|i| if bounds.lower(i) { mu / solver.gap_lo(&it.z, i) - it.z_lo[i] - it.z_lo[i] / solver.gap_lo(&it.z, i) * d.z[i] } else { 0.0 })
            .collect();
        let dup: Vec<f64> = (0..n)
            .map(|i| if bounds.upper(i) { mu / solver.gap_up(&it.z, i) - it.z_up[i] + it.z_up[i] / solver.gap_up(&it.z, i) * d.z[i] } else { 0.0 })
            .collect();
        let mut a_dual = 1.0f64;
        for (x, dx) in it.v.iter().chain(&it.z_lo).chain(&it.z_up).zip(dv.iter().chain(&dlo).chain(&dup)) {
            if *dx < 0.0 && *x > 0.0 {
                a_dual = a_dual.min(tau * x / -dx);
            }
        }
        it.z = zt;
        it.s = st;
        for i in 0..it.v.len() {
            let s = it.s[i];
            it.v[i] = (it.v[i] + a_dual * dv[i]).clamp(mu / (DUAL_SPREAD * s), DUAL_SPREAD * mu / s);
        }
        for i in 0..n {
            if bounds.lower(i) {
                let g = solver.gap_lo(&it.z, i);
                it.z_lo[i] = (it.z_lo[i] + a_dual * dlo[i]).clamp(mu / (DUAL_SPREAD * g), DUAL_SPREAD * mu / g);
            }
            if bounds.upper(i) {
                let g = solver.gap_up(&it.z, i);
                it.z_up[i] = (it.z_up[i] + a_dual * dup[i]).clamp(mu / (DUAL_SPREAD * g), DUAL_SPREAD * mu / g);
            }
        }
        e = p.evaluate(&it.z, true)?;
        e.check_finite().map_err(|err| with_iterate(err, &it.z))?;
        consider(&mut best, &it.z, &e);
        let viol = violation(&e).max(bounds.violation(&it.z));
        let mut stalled = false;
        if viol <= config.feasibility_tol && config.stall_window > 0 {
            let f = e.objective();
            match run_start {
                None => run_start = Some((iters, f)),
                Some((i0, f0)) if iters - i0 >= config.stall_window => {
                    stalled = f0 - f <= config.stall_tol * f0.abs().max(f64::MIN_POSITIVE);
                    run_start = Some((iters, f));
                }
                _ => {}
            }
        } else {
            run_start = None;
        }
        trace!(
            "iter {iters}: f={:.6e} viol={viol:.3e} merit={phi:.6e} alpha={alpha:.2e} soc={soc} mu={mu:.1e} nu={nu:.1e} dw={delta_w:.1e}",
            e.objective()
        );
        if config.record_log {
            log.push(IterRecord {
                iter: iters,
                outer: segment,
                objective: e.objective(),
                feasibility: viol,
                step_length: step,
                merit: phi,
                penalty: nu,
            });
        }
        if stalled {
            debug!("iter {iters}: objective stalled over {} feasible iterations", config.stall_window);
            break;
        }
    }

    let hit_limit = iters >= config.max_iterations && !converged;
    let (z_out, status) = match best {
        Some((_, bz)) => (bz, if converged { SolveStatus::Optimal } else { SolveStatus::FeasibleStalled }),
        None => (it.z.clone(), if hit_limit { SolveStatus::IterationLimit } else { SolveStatus::Infeasible }),
    };
    let ef = p.evaluate(&z_out, false)?;
    let viol = violation(&ef).max(bounds.violation(&z_out));
    debug!("solve done: status={status} f={:.6e} viol={viol:.3e} iters={iters}", ef.objective());
    Ok(SolveOutput { objective: ef.objective(), violation: viol, kkt_residual: kkt, status, iterations: iters, z: z_out, log, last_iterate: it.z })
}

/// Attaches the offending iterate to a non-finite evaluation error.
fn with_iterate(err: Error, z: &[f64]) -> Error {
    match err {
        Error::NonFinite { what, index, .. } => Error::NonFinite { what, index, iterate: z.to_vec() },
        other => other,
    }
}

/// Dot product with four running sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for t in 0..4 {
            acc[t] += x[t] * y[t];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y += H x` for a symmetric banded-bordered `H`.
fn hess_mul(h: &BandedBordered, x: &[f64], y: &mut [f64]) {
    h.for_each_lower(|i, j, v| {
        y[i] += v * x[j];
        if i != j {
            y[j] += v * x[i];
        }
    });
}
