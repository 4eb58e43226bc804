//! Sphere over-approximation of torso and tail, and the torso–tail
//! separation constraints `g ≤ 0`.
//!
//! Tail spheres ride on the links; torso spheres are fixed in the torso
//! frame. All distances are evaluated in the torso frame, so torso angles
//! never enter `g`. Tail–tail pairs are not generated.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::Chain;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::spatial::{Dual, Real, Vec3};

pub const TORSO_SPHERE_RADIUS: f64 = 0.28;
pub const TORSO_SPHERE_SPACING: f64 = 0.35;
pub const TAIL_SPHERE_RADIUS: f64 = 0.08;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorsoSphere {
    /// Centre in the torso frame, m.
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSphere {
    /// Zero-based link index, proximal to distal.
    pub link: usize,
    /// Distance along the link from its proximal joint, m, for the model's
    /// own link lengths. Scales with the link when lengths vary.
    pub offset: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereLayout {
    pub torso_spheres: Vec<TorsoSphere>,
    pub tail_spheres: Vec<TailSphere>,
}

impl SphereLayout {
    /// Three torso spheres along the long axis and one tail sphere at the
    /// distal end of every link (inter-link joints and the tip).
    pub fn default_for(model: &ModelSpec) -> Self {
        let torso_spheres = [-TORSO_SPHERE_SPACING, 0.0, TORSO_SPHERE_SPACING]
            .into_iter()
            .map(|y| TorsoSphere { center: [0.0, y, 0.0], radius: TORSO_SPHERE_RADIUS })
            .collect();
        let tail_spheres = model
            .link_lengths
            .iter()
            .enumerate()
            .map(|(link, &l)| TailSphere { link, offset: l, radius: TAIL_SPHERE_RADIUS })
            .collect();
        Self { torso_spheres, tail_spheres }
    }

    pub fn validate(&self) -> Result<()> {
        if self.torso_spheres.iter().any(|s| !(s.radius > 0.0)) || self.tail_spheres.iter().any(|s| !(s.radius > 0.0)) {
            return Err(Error::invalid("collision", "sphere radii must be positive"));
        }
        if self.tail_spheres.iter().any(|s| s.offset < 0.0) {
            return Err(Error::invalid("collision", "tail sphere offsets must be non-negative"));
        }
        Ok(())
    }

    /// Number of constraints: every torso sphere against every tail sphere.
    pub fn n_pairs(&self) -> usize {
        self.torso_spheres.len() * self.tail_spheres.len()
    }

    /// `(tail sphere, torso sphere)` index for constraint `k`.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        (k / self.torso_spheres.len(), k % self.torso_spheres.len())
    }
}

/// Evaluates the separation constraints for one model template.
#[derive(Clone, Debug)]
pub struct CollisionModel {
    template: ModelSpec,
    layout: SphereLayout,
    /// `(link, fraction of link length)` of every tail sphere.
    anchors: Vec<(usize, f64)>,
}

impl CollisionModel {
    pub fn new(model: &ModelSpec, layout: SphereLayout) -> Result<Self> {
        layout.validate()?;
        let mut anchors = Vec::with_capacity(layout.tail_spheres.len());
        for s in &layout.tail_spheres {
            if s.link >= model.n_links {
                return Err(Error::invalid("collision", format!("tail sphere on link {} of {}", s.link, model.n_links)));
            }
            anchors.push((s.link, s.offset / model.link_lengths[s.link]));
        }
        Ok(Self { template: model.clone(), layout, anchors })
    }

    pub fn layout(&self) -> &SphereLayout {
        &self.layout
    }

    pub fn n_g(&self) -> usize {
        self.layout.n_pairs()
    }

    fn centers<T: Real>(&self, q: &[T], lengths: &[T]) -> Vec<Vec3<T>> {
        Chain::with_lengths(&self.template, lengths).tail_points_fractional(q, &self.anchors)
    }

    fn values_generic<T: Real>(&self, q: &[T], lengths: &[T]) -> Vec<(T, T)> {
        let tails = self.centers(q, lengths);
        let mut out = Vec::with_capacity(self.n_g());
        for (ti, tc) in tails.iter().enumerate() {
            for ts in &self.layout.torso_spheres {
                let d = (*tc - Vec3::from_f64(ts.center)).norm();
                let r = T::cst(self.layout.tail_spheres[ti].radius + ts.radius);
                out.push((r - d, d));
            }
        }
        out
    }

    fn check(&self, q: &[f64], lengths: Option<&[f64]>) -> Result<()> {
        if q.len() != self.template.n_q() {
            return Err(Error::Dimension { what: "q", expected: self.template.n_q(), got: q.len() });
        }
        if let Some(l) = lengths {
            if l.len() != self.template.n_links {
                return Err(Error::Dimension { what: "lengths", expected: self.template.n_links, got: l.len() });
            }
        }
        Ok(())
    }

    /// `g_k = (r_tail + r_torso) − distance`; `g_k ≤ 0` means separated.
    /// `lengths` overrides the template's link lengths.
    pub fn values(&self, q: &[f64], lengths: Option<&[f64]>) -> Result<Vec<f64>> {
        self.check(q, lengths)?;
        let l = lengths.unwrap_or(&self.template.link_lengths);
        Ok(self.values_generic(q, l).into_iter().map(|(g, _)| g).collect())
    }

    /// `(∂g/∂q, ∂g/∂L)`; the second block is n_g × n_links.
    pub fn jacobian(&self, q: &[f64], lengths: Option<&[f64]>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        const W: usize = 8;
        self.check(q, lengths)?;
        let l = lengths.unwrap_or(&self.template.link_lengths);
        let n = q.len();
        let n_l = l.len();
        let n_g = self.n_g();
        let mut dq = DMatrix::zeros(n_g, n);
        let mut dl = DMatrix::zeros(n_g, n_l);
        // torso angles never enter g; differentiate w.r.t. tail angles and lengths
        let dirs: Vec<usize> = (3..n).chain(n..n + n_l).collect();
        for chunk in dirs.chunks(W) {
            let lane = |d: usize| chunk.iter().position(|&c| c == d).unwrap_or(W);
            let qs: Vec<Dual<W>> = (0..n).map(|j| Dual::variable(q[j], lane(j))).collect();
            let ls: Vec<Dual<W>> = (0..n_l).map(|j| Dual::variable(l[j], lane(n + j))).collect();
            for (k, (g, d)) in self.values_generic(&qs, &ls).into_iter().enumerate() {
                if d.re < 1e-12 {
                    return Err(Error::Coincident { pair: k });
                }
                for (lane_i, &dir) in chunk.iter().enumerate() {
                    if dir < n {
                        dq[(k, dir)] = g.eps[lane_i];
                    } else {
                        dl[(k, dir - n)] = g.eps[lane_i];
                    }
                }
            }
        }
        Ok((dq, dl))
    }
}

pub fn default_layout(model: &ModelSpec) -> SphereLayout {
    SphereLayout::default_for(model)
}

pub fn collision_values(model: &ModelSpec, layout: &SphereLayout, q: &[f64], lengths: Option<&[f64]>) -> Result<Vec<f64>> {
    CollisionModel::new(model, layout.clone())?.values(q, lengths)
}

pub fn collision_jacobian(
    model: &ModelSpec,
    layout: &SphereLayout,
    q: &[f64],
    lengths: Option<&[f64]>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    CollisionModel::new(model, layout.clone())?.jacobian(q, lengths)
}
