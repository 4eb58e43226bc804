//! Rigid-body dynamics of the pinned torso + tail chain.
//!
//! The model is flattened into a serial chain of single-DOF revolute bodies:
//! two massless gimbal bodies and the torso (yaw about Z, pitch about X, roll
//! about Y, all at the torso centre), then for every tail link a massless
//! pitch body (X) and the link itself on a yaw joint (Z). Generalized
//! coordinates are ordered `[roll, pitch, yaw, pitch_1, yaw_1, ...]`.
//!
//! There is no gravity and no torque on the torso coordinates, so the
//! equations of motion read `M(q) q̈ + h(q, q̇) = [0; u]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::spatial::{Axis, Dual, Force, Inertia, Mat3, Mat6, Motion, Real, Vec3, Xform};

/// Width of the dual numbers used for derivative sweeps.
const LANES: usize = 8;
type D8 = Dual<LANES>;

/// Below this |cos(pitch)| the torso Euler angles are treated as singular.
const SINGULAR_COS: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Body<T> {
    pub axis: Axis,
    /// Index of this joint's coordinate in `q`.
    pub dof: usize,
    /// Joint origin in the parent body frame.
    pub offset: Vec3<T>,
    pub inertia: Inertia<T>,
}

/// Serial-chain view of a [`ModelSpec`] over scalar type `T`.
#[derive(Clone, Debug)]
pub struct Chain<T> {
    pub bodies: Vec<Body<T>>,
    /// Tail link lengths, proximal to distal.
    pub lengths: Vec<T>,
}

impl<T: Real> Chain<T> {
    /// Build the chain for `model` with the given tail link lengths; mass and
    /// inertia of each link follow its length through the linear density.
    pub fn with_lengths(model: &ModelSpec, lengths: &[T]) -> Self {
        let n_links = lengths.len();
        let mut bodies = Vec::with_capacity(3 + 2 * n_links);
        let massless = Inertia::zero();
        bodies.push(Body { axis: Axis::Z, dof: 2, offset: Vec3::zero(), inertia: massless });
        bodies.push(Body { axis: Axis::X, dof: 1, offset: Vec3::zero(), inertia: massless });
        let torso = model.torso_inertia();
        bodies.push(Body {
            axis: Axis::Y,
            dof: 0,
            offset: Vec3::zero(),
            inertia: Inertia::from_com(
                T::cst(torso.mass),
                Vec3::from_f64(torso.com),
                Mat3::diag([0, 1, 2].map(|i| T::cst(torso.inertia_com[i][i]))),
            ),
        });
        let rho = T::cst(model.linear_density);
        let w2 = T::cst(model.cross_section[0] * model.cross_section[0]);
        let h2 = T::cst(model.cross_section[1] * model.cross_section[1]);
        for (i, &l) in lengths.iter().enumerate() {
            let offset = if i == 0 {
                Vec3::from_f64(model.attach_offset)
            } else {
                Vec3::new(T::zero(), -lengths[i - 1], T::zero())
            };
            bodies.push(Body { axis: Axis::X, dof: 3 + 2 * i, offset, inertia: massless });
            let m = rho * l;
            let k = m / T::cst(12.0);
            let l2 = l * l;
            let i_com = Mat3::diag([k * (l2 + h2), k * (w2 + h2), k * (w2 + l2)]);
            let com = Vec3::new(T::zero(), l * -0.5, T::zero());
            bodies.push(Body { axis: Axis::Z, dof: 4 + 2 * i, offset: Vec3::zero(), inertia: Inertia::from_com(m, com, i_com) });
        }
        Chain { bodies, lengths: lengths.to_vec() }
    }

    pub fn n_q(&self) -> usize {
        self.bodies.len()
    }

    /// Parent-to-child transforms at configuration `q`.
    pub fn xforms(&self, q: &[T]) -> Vec<Xform<T>> {
        self.bodies
            .iter()
            .map(|b| Xform { rot: Mat3::rotation(b.axis, q[b.dof]), pos: b.offset })
            .collect()
    }

    /// Recursive Newton–Euler inverse dynamics: generalized forces producing
    /// `qdd` at `(q, qd)`, in coordinate order.
    pub fn rnea(&self, q: &[T], qd: &[T], qdd: &[T]) -> Vec<T> {
        let xf = self.xforms(q);
        let n = self.bodies.len();
        let mut forces = Vec::with_capacity(n);
        let mut v = Motion::zero();
        let mut a = Motion::zero();
        for (b, x) in self.bodies.iter().zip(&xf) {
            let vj = Motion::revolute(b.axis, qd[b.dof]);
            v = x.apply_motion(&v) + vj;
            a = x.apply_motion(&a) + Motion::revolute(b.axis, qdd[b.dof]) + v.cross(&vj);
            let iv = b.inertia.mul_motion(&v);
            forces.push(b.inertia.mul_motion(&a) + v.cross_force(&iv));
        }
        let mut tau = vec![T::zero(); n];
        let mut f = Force::zero();
        for i in (0..n).rev() {
            f = f + forces[i];
            let b = &self.bodies[i];
            tau[b.dof] = f.ang.0[b.axis.index()];
            f = xf[i].apply_force_inv(&f);
        }
        tau
    }

    /// World-frame (pivot frame) transform of every body.
    pub fn world_xforms(&self, q: &[T]) -> Vec<Xform<T>> {
        let mut out: Vec<Xform<T>> = Vec::with_capacity(self.bodies.len());
        for x in self.xforms(q) {
            let w = match out.last() {
                Some(p) => p.then(&x),
                None => x,
            };
            out.push(w);
        }
        out
    }

    /// Body spatial velocities in body coordinates.
    pub fn velocities(&self, q: &[T], qd: &[T]) -> Vec<Motion<T>> {
        let mut v = Motion::zero();
        self.bodies
            .iter()
            .zip(self.xforms(q))
            .map(|(b, x)| {
                v = x.apply_motion(&v) + Motion::revolute(b.axis, qd[b.dof]);
                v
            })
            .collect()
    }

    /// Positions, in the torso frame, of points on the tail given as
    /// `(link index, fraction of that link's length from its proximal joint)`.
    pub fn tail_points_fractional(&self, q: &[T], points: &[(usize, f64)]) -> Vec<Vec3<T>> {
        let xf = self.xforms(q);
        let mut link_frames = Vec::with_capacity(self.lengths.len());
        let mut cur = Xform::identity();
        for (i, x) in xf.iter().enumerate().skip(3) {
            cur = cur.then(x);
            if (i - 3) % 2 == 1 {
                link_frames.push(cur);
            }
        }
        points
            .iter()
            .map(|&(link, frac)| {
                let s = self.lengths[link] * frac;
                link_frames[link].point_to_parent(&Vec3::new(T::zero(), -s, T::zero()))
            })
            .collect()
    }
}

impl Chain<f64> {
    /// Composite-rigid-body mass matrix.
    pub fn crba(&self, q: &[f64]) -> DMatrix<f64> {
        let n = self.bodies.len();
        let xf = self.xforms(q);
        let mut ic: Vec<Inertia<f64>> = self.bodies.iter().map(|b| b.inertia).collect();
        for i in (1..n).rev() {
            let up = ic[i].to_parent(&xf[i]);
            ic[i - 1] = ic[i - 1].add(&up);
        }
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let bi = &self.bodies[i];
            let mut f = ic[i].mul_motion(&Motion::revolute(bi.axis, 1.0));
            m[(bi.dof, bi.dof)] = f.ang.0[bi.axis.index()];
            let mut j = i;
            while j > 0 {
                f = xf[j].apply_force_inv(&f);
                j -= 1;
                let bj = &self.bodies[j];
                let v = f.ang.0[bj.axis.index()];
                m[(bi.dof, bj.dof)] = v;
                m[(bj.dof, bi.dof)] = v;
            }
        }
        m
    }

    /// Articulated-body forward dynamics for generalized forces `tau`.
    pub fn aba(&self, q: &[f64], qd: &[f64], tau: &[f64]) -> Vec<f64> {
        let n = self.bodies.len();
        let xf = self.xforms(q);
        let mut v = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        let mut ia = Vec::with_capacity(n);
        let mut pa = Vec::with_capacity(n);
        let mut vp = Motion::zero();
        for (b, x) in self.bodies.iter().zip(&xf) {
            let vj = Motion::revolute(b.axis, qd[b.dof]);
            let vi = x.apply_motion(&vp) + vj;
            c.push(vi.cross(&vj));
            ia.push(Mat6::from_inertia(&b.inertia));
            pa.push(vi.cross_force(&b.inertia.mul_motion(&vi)));
            v.push(vi);
            vp = vi;
        }
        let mut u_col = vec![Force::zero(); n];
        let mut d = vec![0.0; n];
        let mut u = vec![0.0; n];
        for i in (0..n).rev() {
            let b = &self.bodies[i];
            let k = b.axis.index();
            let uc = ia[i].mul_motion(&Motion::revolute(b.axis, 1.0));
            d[i] = uc.ang.0[k];
            u[i] = tau[b.dof] - pa[i].ang.0[k];
            u_col[i] = uc;
            if i > 0 {
                let mut a6 = ia[i];
                let col = [uc.ang.0[0], uc.ang.0[1], uc.ang.0[2], uc.lin.0[0], uc.lin.0[1], uc.lin.0[2]];
                for r in 0..6 {
                    for s in 0..6 {
                        a6.0[r][s] -= col[r] * col[s] / d[i];
                    }
                }
                let pa_i = pa[i] + a6.mul_motion(&c[i]) + uc.scale(u[i] / d[i]);
                let up = a6.to_parent(&xf[i]);
                for r in 0..6 {
                    for s in 0..6 {
                        ia[i - 1].0[r][s] += up.0[r][s];
                    }
                }
                pa[i - 1] = pa[i - 1] + xf[i].apply_force_inv(&pa_i);
            }
        }
        let mut qdd = vec![0.0; n];
        let mut ap = Motion::zero();
        for i in 0..n {
            let b = &self.bodies[i];
            let a = xf[i].apply_motion(&ap) + c[i];
            let acc = (u[i] - a.dot(&u_col[i])) / d[i];
            qdd[b.dof] = acc;
            ap = a + Motion::revolute(b.axis, acc);
        }
        qdd
    }
}

/// First-order partial derivatives of the joint accelerations.
#[derive(Clone, Debug)]
pub struct Partials {
    pub qdd: DVector<f64>,
    /// ∂q̈/∂q, n_q × n_q.
    pub d_q: DMatrix<f64>,
    /// ∂q̈/∂q̇, n_q × n_q.
    pub d_qd: DMatrix<f64>,
    /// ∂q̈/∂u, n_q × n_u.
    pub d_u: DMatrix<f64>,
    /// ∂q̈/∂L, n_q × n_links (empty unless requested).
    pub d_l: DMatrix<f64>,
}

/// Dynamics of one concrete model.
#[derive(Clone, Debug)]
pub struct TailDynamics {
    model: ModelSpec,
    chain: Chain<f64>,
}

impl TailDynamics {
    pub fn new(model: &ModelSpec) -> Self {
        Self { chain: Chain::with_lengths(model, &model.link_lengths), model: model.clone() }
    }

    /// Dynamics of `model` with its tail link lengths replaced by `lengths`,
    /// which need not satisfy the model's length constraints (used while an
    /// optimizer moves the lengths).
    pub fn with_lengths_unchecked(model: &ModelSpec, lengths: &[f64]) -> Result<Self> {
        if lengths.len() != model.n_links {
            return Err(Error::Dimension { what: "lengths", expected: model.n_links, got: lengths.len() });
        }
        if lengths.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid("lengths", format!("link lengths must be positive, got {lengths:?}")));
        }
        let mut model = model.clone();
        model.link_lengths = lengths.to_vec();
        Ok(Self::new(&model))
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn chain(&self) -> &Chain<f64> {
        &self.chain
    }

    pub fn n_q(&self) -> usize {
        self.chain.n_q()
    }

    fn check(&self, what: &'static str, v: &[f64]) -> Result<()> {
        if v.len() != self.n_q() {
            return Err(Error::Dimension { what, expected: self.n_q(), got: v.len() });
        }
        Ok(())
    }

    fn check_u(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.n_q() - 3 {
            return Err(Error::Dimension { what: "u", expected: self.n_q() - 3, got: u.len() });
        }
        Ok(())
    }

    pub fn mass_matrix(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        self.check("q", q)?;
        Ok(self.chain.crba(q))
    }

    pub fn bias_forces(&self, q: &[f64], qd: &[f64]) -> Result<DVector<f64>> {
        self.check("q", q)?;
        self.check("qdot", qd)?;
        let zero = vec![0.0; q.len()];
        Ok(DVector::from_vec(self.chain.rnea(q, qd, &zero)))
    }

    pub fn inverse_dynamics(&self, q: &[f64], qd: &[f64], qdd: &[f64]) -> Result<DVector<f64>> {
        self.check("q", q)?;
        self.check("qdot", qd)?;
        self.check("qddot", qdd)?;
        Ok(DVector::from_vec(self.chain.rnea(q, qd, qdd)))
    }

    fn applied(&self, u: &[f64]) -> Vec<f64> {
        let mut tau = vec![0.0; self.n_q()];
        tau[3..].copy_from_slice(u);
        tau
    }

    fn singular_check(&self, q: &[f64]) -> Result<()> {
        if q[1].cos().abs() < SINGULAR_COS || !q.iter().all(|v| v.is_finite()) {
            return Err(Error::Singular { q: q.to_vec() });
        }
        Ok(())
    }

    fn factor(&self, q: &[f64]) -> Result<(DMatrix<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
        self.singular_check(q)?;
        let m = self.chain.crba(q);
        let chol = m.clone().cholesky().ok_or_else(|| Error::Singular { q: q.to_vec() })?;
        Ok((m, chol))
    }

    /// `q̈ = M⁻¹(-h + [0₃; u])` via the mass matrix and its Cholesky factor.
    pub fn forward_dynamics(&self, q: &[f64], qd: &[f64], u: &[f64]) -> Result<DVector<f64>> {
        self.check("q", q)?;
        self.check("qdot", qd)?;
        self.check_u(u)?;
        let (_, chol) = self.factor(q)?;
        let zero = vec![0.0; q.len()];
        let h = self.chain.rnea(q, qd, &zero);
        let rhs: Vec<f64> = self.applied(u).iter().zip(&h).map(|(t, h)| t - h).collect();
        Ok(chol.solve(&DVector::from_vec(rhs)))
    }

    /// Same quantity via the articulated-body algorithm.
    pub fn forward_dynamics_aba(&self, q: &[f64], qd: &[f64], u: &[f64]) -> Result<DVector<f64>> {
        self.check("q", q)?;
        self.check("qdot", qd)?;
        self.check_u(u)?;
        self.singular_check(q)?;
        Ok(DVector::from_vec(self.chain.aba(q, qd, &self.applied(u))))
    }

    /// Tail-tip position and velocity in the world (pivot) frame.
    pub fn tip_state(&self, q: &[f64], qd: &[f64]) -> Result<([f64; 3], [f64; 3])> {
        self.check("q", q)?;
        self.check("qdot", qd)?;
        let world = self.chain.world_xforms(q);
        let vel = self.chain.velocities(q, qd);
        let last = world.len() - 1;
        let l = *self.chain.lengths.last().expect("at least one link");
        let p_local = Vec3::new(0.0, -l, 0.0);
        let pos = world[last].point_to_parent(&p_local);
        let v_body = vel[last].lin + vel[last].ang.cross(&p_local);
        let v = world[last].rot.mul_vec(&v_body);
        Ok((pos.0, v.0))
    }

    /// Total angular momentum about the pivot, world coordinates.
    pub fn angular_momentum(&self, q: &[f64], qd: &[f64]) -> Result<[f64; 3]> {
        self.check("q", q)?;
        self.check("qdot", qd)?;
        let world = self.chain.world_xforms(q);
        let vel = self.chain.velocities(q, qd);
        let mut total = Vec3::zero();
        for ((b, w), v) in self.chain.bodies.iter().zip(&world).zip(&vel) {
            let h = b.inertia.mul_motion(v);
            total = total + w.apply_force_inv(&h).ang;
        }
        Ok(total.0)
    }

    pub fn kinetic_energy(&self, q: &[f64], qd: &[f64]) -> Result<f64> {
        self.check("q", q)?;
        self.check("qdot", qd)?;
        let vel = self.chain.velocities(q, qd);
        Ok(self.chain.bodies.iter().zip(&vel).map(|(b, v)| 0.5 * v.dot(&b.inertia.mul_motion(v))).sum())
    }

    /// Accelerations and their exact partial derivatives with respect to
    /// `q`, `q̇` and `u`.
    pub fn partials(&self, q: &[f64], qd: &[f64], u: &[f64]) -> Result<Partials> {
        self.partials_impl(q, qd, u, false)
    }

    /// As [`Self::partials`], additionally filling `d_l` with derivatives with
    /// respect to the tail link lengths (mass and inertia follow length).
    pub fn partials_with_lengths(&self, q: &[f64], qd: &[f64], u: &[f64]) -> Result<Partials> {
        self.partials_impl(q, qd, u, true)
    }

    fn partials_impl(&self, q: &[f64], qd: &[f64], u: &[f64], lengths: bool) -> Result<Partials> {
        self.check("q", q)?;
        self.check("qdot", qd)?;
        self.check_u(u)?;
        let n = self.n_q();
        let n_l = if lengths { self.model.n_links } else { 0 };
        let (_, chol) = self.factor(q)?;
        let zero = vec![0.0; n];
        let h = self.chain.rnea(q, qd, &zero);
        let rhs: Vec<f64> = self.applied(u).iter().zip(&h).map(|(t, h)| t - h).collect();
        let qdd = chol.solve(&DVector::from_vec(rhs));

        // ∂ID/∂(q, q̇, L) at fixed q̈, one dual sweep per block of LANES directions.
        let n_dir = 2 * n + n_l;
        let mut did = DMatrix::zeros(n, n_dir);
        let qdd_d: Vec<D8> = qdd.iter().map(|&v| D8::constant(v)).collect();
        let nominal: Vec<D8> = self.model.link_lengths.iter().map(|&l| D8::constant(l)).collect();
        let const_chain = Chain::<D8>::with_lengths(&self.model, &nominal);
        let mut start = 0;
        while start < n_dir {
            let lane = |dir: usize| if dir >= start && dir < start + LANES { dir - start } else { LANES };
            let qs: Vec<D8> = (0..n).map(|j| D8::variable(q[j], lane(j))).collect();
            let qds: Vec<D8> = (0..n).map(|j| D8::variable(qd[j], lane(n + j))).collect();
            let tau = if start + LANES > 2 * n && n_l > 0 {
                let ls: Vec<D8> = (0..n_l).map(|j| D8::variable(self.model.link_lengths[j], lane(2 * n + j))).collect();
                Chain::<D8>::with_lengths(&self.model, &ls).rnea(&qs, &qds, &qdd_d)
            } else {
                const_chain.rnea(&qs, &qds, &qdd_d)
            };
            for (r, t) in tau.iter().enumerate() {
                for k in 0..LANES.min(n_dir - start) {
                    did[(r, start + k)] = t.eps[k];
                }
            }
            start += LANES;
        }
        let sol = chol.solve(&did);
        let d_q = -sol.columns(0, n).into_owned();
        let d_qd = -sol.columns(n, n).into_owned();
        let d_l = -sol.columns(2 * n, n_l).into_owned();
        let mut sel = DMatrix::zeros(n, n - 3);
        for j in 0..n - 3 {
            sel[(3 + j, j)] = 1.0;
        }
        let d_u = chol.solve(&sel);
        Ok(Partials { qdd, d_q, d_qd, d_u, d_l })
    }
}

/// Mass matrix of `model` at `q`.
pub fn mass_matrix(model: &ModelSpec, q: &[f64]) -> Result<DMatrix<f64>> {
    TailDynamics::new(model).mass_matrix(q)
}

pub fn bias_forces(model: &ModelSpec, q: &[f64], qd: &[f64]) -> Result<DVector<f64>> {
    TailDynamics::new(model).bias_forces(q, qd)
}

pub fn forward_dynamics(model: &ModelSpec, q: &[f64], qd: &[f64], u: &[f64]) -> Result<DVector<f64>> {
    TailDynamics::new(model).forward_dynamics(q, qd, u)
}

pub fn inverse_dynamics(model: &ModelSpec, q: &[f64], qd: &[f64], qdd: &[f64]) -> Result<DVector<f64>> {
    TailDynamics::new(model).inverse_dynamics(q, qd, qdd)
}

pub fn tip_state(model: &ModelSpec, q: &[f64], qd: &[f64]) -> Result<([f64; 3], [f64; 3])> {
    TailDynamics::new(model).tip_state(q, qd)
}

pub fn angular_momentum_about_pivot(model: &ModelSpec, q: &[f64], qd: &[f64]) -> Result<[f64; 3]> {
    TailDynamics::new(model).angular_momentum(q, qd)
}

pub fn dynamics_partials(model: &ModelSpec, q: &[f64], qd: &[f64], u: &[f64]) -> Result<Partials> {
    TailDynamics::new(model).partials(q, qd, u)
}

/// Partials of q̈ with respect to the link lengths `lengths`, evaluated on
/// `template` rebuilt with those lengths.
pub fn dynamics_partials_lengths(
    template: &ModelSpec,
    q: &[f64],
    qd: &[f64],
    u: &[f64],
    lengths: &[f64],
) -> Result<DMatrix<f64>> {
    let model = template.with_lengths(lengths)?;
    Ok(TailDynamics::new(&model).partials_with_lengths(q, qd, u)?.d_l)
}
