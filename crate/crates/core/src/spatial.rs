//! Scalar abstraction, forward-mode dual numbers and the small fixed-size
//! 3D / spatial (6D) algebra used by the dynamics algorithms.
//!
//! Spatial vectors follow Featherstone's convention: motion vectors are
//! `(angular, linear)` and force vectors are `(moment, force)`, both
//! expressed in the coordinates of the body frame they belong to.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Scalar field used by the generic dynamics code. Implemented for `f64`
/// and for [`Dual`] so one code path yields values and exact derivatives.
pub trait Real:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + Mul<f64, Output = Self>
    + Send
    + Sync
{
    fn cst(v: f64) -> Self;
    fn re(&self) -> f64;
    fn sin_cos(self) -> (Self, Self);
    fn sqrt(self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn sin_cos(self) -> (Self, Self) {
        f64::sin_cos(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// Forward-mode dual number carrying `N` directional derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const N: usize> {
    pub re: f64,
    pub eps: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(re: f64) -> Self {
        Self { re, eps: [0.0; N] }
    }

    /// A variable seeded in direction `dir` (a no-op seed when `dir >= N`).
    pub fn variable(re: f64, dir: usize) -> Self {
        let mut eps = [0.0; N];
        if dir < N {
            eps[dir] = 1.0;
        }
        Self { re, eps }
    }

    #[inline]
    fn chain(self, value: f64, deriv: f64) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e *= deriv;
        }
        Self { re: value, eps }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.re += rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps.iter()) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.re -= rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps.iter()) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = self.eps[i] * rhs.re + self.re * rhs.eps[i];
        }
        Self { re: self.re * rhs.re, eps }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        let re = self.re * inv;
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = (self.eps[i] - re * rhs.eps[i]) * inv;
        }
        Self { re, eps }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.re, -1.0)
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.chain(self.re * rhs, rhs)
    }
}

impl<const N: usize> AddAssign for Dual<N> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const N: usize> SubAssign for Dual<N> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<const N: usize> Real for Dual<N> {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    #[inline]
    fn re(&self) -> f64 {
        self.re
    }
    #[inline]
    fn sin_cos(self) -> (Self, Self) {
        let (s, c) = self.re.sin_cos();
        (self.chain(s, c), self.chain(c, -s))
    }
    #[inline]
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        self.chain(r, 0.5 / r)
    }
}

/// Coordinate axis of a single-DOF revolute joint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn unit<T: Real>(self) -> Vec3<T> {
        let mut v = Vec3::zero();
        v.0[self.index()] = T::cst(1.0);
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<T>(pub [T; 3]);

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self([x, y, z])
    }

    pub fn zero() -> Self {
        Self([T::zero(); 3])
    }

    pub fn from_f64(v: [f64; 3]) -> Self {
        Self([T::cst(v[0]), T::cst(v[1]), T::cst(v[2])])
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    #[inline]
    pub fn cross(&self, o: &Self) -> Self {
        let [a0, a1, a2] = self.0;
        let [b0, b1, b2] = o.0;
        Self([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    }

    pub fn scale(&self, s: T) -> Self {
        Self([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn re(&self) -> [f64; 3] {
        [self.0[0].re(), self.0[1].re(), self.0[2].re()]
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self([-self.0[0], -self.0[1], -self.0[2]])
    }
}

/// Row-major 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<T>(pub [[T; 3]; 3]);

impl<T: Real> Mat3<T> {
    pub fn zero() -> Self {
        Self([[T::zero(); 3]; 3])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            m.0[i][i] = T::cst(1.0);
        }
        m
    }

    pub fn diag(d: [T; 3]) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            m.0[i][i] = d[i];
        }
        m
    }

    /// Rotation by `angle` about a coordinate axis (maps child coordinates
    /// to parent coordinates).
    pub fn rotation(axis: Axis, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let one = T::cst(1.0);
        let z = T::zero();
        match axis {
            Axis::X => Self([[one, z, z], [z, c, -s], [z, s, c]]),
            Axis::Y => Self([[c, z, s], [z, one, z], [-s, z, c]]),
            Axis::Z => Self([[c, -s, z], [s, c, z], [z, z, one]]),
        }
    }

    #[inline]
    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let m = &self.0;
        Vec3([
            m[0][0] * v.0[0] + m[0][1] * v.0[1] + m[0][2] * v.0[2],
            m[1][0] * v.0[0] + m[1][1] * v.0[1] + m[1][2] * v.0[2],
            m[2][0] * v.0[0] + m[2][1] * v.0[1] + m[2][2] * v.0[2],
        ])
    }

    #[inline]
    pub fn tr_mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let m = &self.0;
        Vec3([
            m[0][0] * v.0[0] + m[1][0] * v.0[1] + m[2][0] * v.0[2],
            m[0][1] * v.0[0] + m[1][1] * v.0[1] + m[2][1] * v.0[2],
            m[0][2] * v.0[0] + m[1][2] * v.0[1] + m[2][2] * v.0[2],
        ])
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut r = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                r.0[i][j] = self.0[i][0] * o.0[0][j] + self.0[i][1] * o.0[1][j] + self.0[i][2] * o.0[2][j];
            }
        }
        r
    }

    pub fn transpose(&self) -> Self {
        let mut r = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                r.0[i][j] = self.0[j][i];
            }
        }
        r
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = *self;
        for i in 0..3 {
            for j in 0..3 {
                r.0[i][j] += o.0[i][j];
            }
        }
        r
    }

    pub fn scale(&self, s: T) -> Self {
        let mut r = *self;
        for row in r.0.iter_mut() {
            for v in row.iter_mut() {
                *v = *v * s;
            }
        }
        r
    }

    /// `(v.v) 1 - v v^T`, the inertia of a unit point mass at `v`.
    pub fn point_inertia(v: &Vec3<T>) -> Self {
        let d = v.dot(v);
        let mut r = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                r.0[i][j] = -(v.0[i] * v.0[j]);
            }
            r.0[i][i] += d;
        }
        r
    }

    pub fn re(&self) -> [[f64; 3]; 3] {
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = self.0[i][j].re();
            }
        }
        r
    }
}

/// Spatial motion vector (angular, linear).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Motion<T> {
    pub ang: Vec3<T>,
    pub lin: Vec3<T>,
}

/// Spatial force vector (moment, force).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Force<T> {
    pub ang: Vec3<T>,
    pub lin: Vec3<T>,
}

impl<T: Real> Motion<T> {
    pub fn zero() -> Self {
        Self { ang: Vec3::zero(), lin: Vec3::zero() }
    }

    /// Motion of a revolute joint about `axis` at rate `rate`.
    pub fn revolute(axis: Axis, rate: T) -> Self {
        let mut m = Self::zero();
        m.ang.0[axis.index()] = rate;
        m
    }

    /// Motion cross product `self x m`.
    #[inline]
    pub fn cross(&self, m: &Motion<T>) -> Motion<T> {
        Motion {
            ang: self.ang.cross(&m.ang),
            lin: self.ang.cross(&m.lin) + self.lin.cross(&m.ang),
        }
    }

    /// Force cross product `self x* f`.
    #[inline]
    pub fn cross_force(&self, f: &Force<T>) -> Force<T> {
        Force {
            ang: self.ang.cross(&f.ang) + self.lin.cross(&f.lin),
            lin: self.ang.cross(&f.lin),
        }
    }

    /// Pairing `<self, f>` (power).
    pub fn dot(&self, f: &Force<T>) -> T {
        self.ang.dot(&f.ang) + self.lin.dot(&f.lin)
    }
}

impl<T: Real> Add for Motion<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self { ang: self.ang + o.ang, lin: self.lin + o.lin }
    }
}

impl<T: Real> Sub for Motion<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self { ang: self.ang - o.ang, lin: self.lin - o.lin }
    }
}

impl<T: Real> Force<T> {
    pub fn zero() -> Self {
        Self { ang: Vec3::zero(), lin: Vec3::zero() }
    }

    pub fn scale(&self, s: T) -> Self {
        Self { ang: self.ang.scale(s), lin: self.lin.scale(s) }
    }
}

impl<T: Real> Add for Force<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self { ang: self.ang + o.ang, lin: self.lin + o.lin }
    }
}

impl<T: Real> Sub for Force<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self { ang: self.ang - o.ang, lin: self.lin - o.lin }
    }
}

/// Plücker transform from a parent frame to a child frame.
///
/// `rot` maps child coordinates to parent coordinates and `pos` is the child
/// origin expressed in parent coordinates.
#[derive(Clone, Copy, Debug)]
pub struct Xform<T> {
    pub rot: Mat3<T>,
    pub pos: Vec3<T>,
}

impl<T: Real> Xform<T> {
    pub fn identity() -> Self {
        Self { rot: Mat3::identity(), pos: Vec3::zero() }
    }

    /// Parent motion expressed in child coordinates.
    #[inline]
    pub fn apply_motion(&self, m: &Motion<T>) -> Motion<T> {
        let lin = m.lin - self.pos.cross(&m.ang);
        Motion { ang: self.rot.tr_mul_vec(&m.ang), lin: self.rot.tr_mul_vec(&lin) }
    }

    /// Child force expressed in parent coordinates (transpose action).
    #[inline]
    pub fn apply_force_inv(&self, f: &Force<T>) -> Force<T> {
        let lin = self.rot.mul_vec(&f.lin);
        let ang = self.rot.mul_vec(&f.ang) + self.pos.cross(&lin);
        Force { ang, lin }
    }

    /// Child motion expressed in parent coordinates.
    #[inline]
    pub fn apply_motion_inv(&self, m: &Motion<T>) -> Motion<T> {
        let ang = self.rot.mul_vec(&m.ang);
        let lin = self.rot.mul_vec(&m.lin) + self.pos.cross(&ang);
        Motion { ang, lin }
    }

    /// Composition: `self` maps a->b and `next` maps b->c; result maps a->c.
    pub fn then(&self, next: &Xform<T>) -> Xform<T> {
        Xform { rot: self.rot.mul_mat(&next.rot), pos: self.pos + self.rot.mul_vec(&next.pos) }
    }

    /// A point given in child coordinates expressed in parent coordinates.
    pub fn point_to_parent(&self, p: &Vec3<T>) -> Vec3<T> {
        self.pos + self.rot.mul_vec(p)
    }
}

/// Rigid-body spatial inertia about a frame origin: mass `m`, first moment
/// `h = m c` and rotational inertia `ibar` about the origin.
#[derive(Clone, Copy, Debug)]
pub struct Inertia<T> {
    pub mass: T,
    pub h: Vec3<T>,
    pub ibar: Mat3<T>,
}

impl<T: Real> Inertia<T> {
    pub fn zero() -> Self {
        Self { mass: T::zero(), h: Vec3::zero(), ibar: Mat3::zero() }
    }

    /// From mass, centre of mass and rotational inertia about the centre of mass.
    pub fn from_com(mass: T, com: Vec3<T>, i_com: Mat3<T>) -> Self {
        Self {
            mass,
            h: com.scale(mass),
            ibar: i_com.add(&Mat3::point_inertia(&com).scale(mass)),
        }
    }

    #[inline]
    pub fn mul_motion(&self, v: &Motion<T>) -> Force<T> {
        Force {
            ang: self.ibar.mul_vec(&v.ang) + self.h.cross(&v.lin),
            lin: v.lin.scale(self.mass) - self.h.cross(&v.ang),
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self { mass: self.mass + o.mass, h: self.h + o.h, ibar: self.ibar.add(&o.ibar) }
    }

    /// This child inertia expressed about the parent origin in parent
    /// coordinates (`X^T I X`).
    pub fn to_parent(&self, x: &Xform<T>) -> Self {
        let h_rot = x.rot.mul_vec(&self.h);
        let i_rot = x.rot.mul_mat(&self.ibar).mul_mat(&x.rot.transpose());
        let r = x.pos;
        let rh = r.dot(&h_rot);
        let mut ibar = i_rot.add(&Mat3::point_inertia(&r).scale(self.mass));
        for i in 0..3 {
            for j in 0..3 {
                ibar.0[i][j] -= r.0[i] * h_rot.0[j] + h_rot.0[i] * r.0[j];
            }
            ibar.0[i][i] += rh * 2.0;
        }
        Self { mass: self.mass, h: h_rot + r.scale(self.mass), ibar }
    }
}

/// Dense symmetric 6x6 matrix used by the articulated-body algorithm.
#[derive(Clone, Copy, Debug)]
pub struct Mat6<T>(pub [[T; 6]; 6]);

impl<T: Real> Mat6<T> {
    pub fn from_inertia(i: &Inertia<T>) -> Self {
        let mut m = [[T::zero(); 6]; 6];
        let h = i.h.0;
        let z = T::zero();
        // [Ibar  hx ; -hx  m1] in (angular, linear) ordering
        let hx = [[z, -h[2], h[1]], [h[2], z, -h[0]], [-h[1], h[0], z]];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] = i.ibar.0[r][c];
                m[r][c + 3] = hx[r][c];
                m[r + 3][c] = -hx[r][c];
            }
            m[r + 3][r + 3] = i.mass;
        }
        Self(m)
    }

    pub fn mul_motion(&self, v: &Motion<T>) -> Force<T> {
        let x = [v.ang.0[0], v.ang.0[1], v.ang.0[2], v.lin.0[0], v.lin.0[1], v.lin.0[2]];
        let mut y = [T::zero(); 6];
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for c in 0..6 {
                acc += self.0[r][c] * x[c];
            }
            *yr = acc;
        }
        Force { ang: Vec3([y[0], y[1], y[2]]), lin: Vec3([y[3], y[4], y[5]]) }
    }

    /// `X^T A X` for a child articulated inertia expressed in the parent.
    pub fn to_parent(&self, x: &Xform<T>) -> Self {
        // Columns of the child->parent motion transform applied blockwise:
        // X = [E^T, 0; -E^T r~, E^T] maps parent motion to child motion.
        let e = x.rot;
        let r = x.pos.0;
        let z = T::zero();
        let rx = [[z, -r[2], r[1]], [r[2], z, -r[0]], [-r[1], r[0], z]];
        let et = e.transpose().0;
        let mut xm = [[T::zero(); 6]; 6];
        for i in 0..3 {
            for j in 0..3 {
                xm[i][j] = et[i][j];
                xm[i + 3][j + 3] = et[i][j];
                let mut acc = T::zero();
                for k in 0..3 {
                    acc += et[i][k] * rx[k][j];
                }
                xm[i + 3][j] = -acc;
            }
        }
        // A X
        let mut ax = [[T::zero(); 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                let mut acc = T::zero();
                for k in 0..6 {
                    acc += self.0[i][k] * xm[k][j];
                }
                ax[i][j] = acc;
            }
        }
        let mut out = [[T::zero(); 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                let mut acc = T::zero();
                for k in 0..6 {
                    acc += xm[k][i] * ax[k][j];
                }
                out[i][j] = acc;
            }
        }
        Self(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_product_rule_and_trig() {
        let x = Dual::<2>::variable(0.7, 0);
        let y = Dual::<2>::variable(-1.3, 1);
        let f = x * y + x.sin_cos().0 / y;
        let (s, c) = 0.7f64.sin_cos();
        assert!((f.re - (0.7 * -1.3 + s / -1.3)).abs() < 1e-15);
        assert!((f.eps[0] - (-1.3 + c / -1.3)).abs() < 1e-14);
        assert!((f.eps[1] - (0.7 - s / (1.3 * 1.3))).abs() < 1e-14);
    }

    #[test]
    fn inertia_transform_matches_parallel_axis() {
        // Point-like body of mass 2 at child origin shifted by r in the parent.
        let i = Inertia::<f64>::from_com(2.0, Vec3::zero(), Mat3::diag([0.1, 0.2, 0.3]));
        let x = Xform { rot: Mat3::identity(), pos: Vec3::new(0.0, -1.0, 0.0) };
        let p = i.to_parent(&x);
        let expected = Inertia::from_com(2.0, Vec3::new(0.0, -1.0, 0.0), Mat3::diag([0.1, 0.2, 0.3]));
        for r in 0..3 {
            for c in 0..3 {
                assert!((p.ibar.0[r][c] - expected.ibar.0[r][c]).abs() < 1e-14);
            }
        }
        assert!((p.h.0[1] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn mat6_transform_agrees_with_inertia_transform() {
        let i = Inertia::<f64>::from_com(1.5, Vec3::new(0.1, -0.4, 0.2), Mat3::diag([0.3, 0.05, 0.28]));
        let x = Xform { rot: Mat3::rotation(Axis::X, 0.4).mul_mat(&Mat3::rotation(Axis::Z, -0.9)), pos: Vec3::new(0.2, -0.5, 0.1) };
        let a = Mat6::from_inertia(&i.to_parent(&x));
        let b = Mat6::from_inertia(&i).to_parent(&x);
        for r in 0..6 {
            for c in 0..6 {
                assert!((a.0[r][c] - b.0[r][c]).abs() < 1e-13, "{r},{c}");
            }
        }
    }
}
