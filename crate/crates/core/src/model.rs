//! Torso + tail rigid-body model descriptions.
//!
//! The torso is a uniformly dense cuboid pinned at its geometric centre by an
//! unactuated 3-DOF rotational joint. The tail is a serial chain of cuboid
//! links hanging off the posterior face of the torso along -Y, each joined to
//! its parent by an actuated pitch (local X) then yaw (local Z) joint.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::collision::SphereLayout;
use crate::error::{Error, Result};

/// Most tail links a model may have.
pub const MAX_LINKS: usize = 6;
/// Minimum link length for variable-length tails, m.
pub const LENGTH_LOWER_BOUND: f64 = 0.2;
const LENGTH_SUM_TOL: f64 = 1e-9;

/// Bounds on joint motion and actuation. Angles in rad, rates in rad/s.
#[derive(Clone, Debug, PartialEq)]
pub struct JointLimits {
    /// Symmetric tail joint range of motion, rad.
    pub rom: f64,
    /// Tail joint velocity bound, rad/s.
    pub vel: f64,
    /// Per-DOF torque bound, N·m.
    pub torque: f64,
    /// Bound on `u^T u`, N²·m².
    pub effort_bound: f64,
    /// Bound on the torque rate, N·m/s.
    pub rate_bound: f64,
    /// Torso angle bound, rad.
    pub torso_angle: f64,
    /// Torso angular rate bound, rad/s.
    pub torso_vel: f64,
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            rom: 60f64.to_radians(),
            vel: 360f64.to_radians(),
            torque: 5.0,
            effort_bound: 50.0,
            rate_bound: 200.0,
            torso_angle: 180f64.to_radians(),
            torso_vel: 360f64.to_radians(),
        }
    }
}

impl JointLimits {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rom", self.rom),
            ("vel", self.vel),
            ("torque", self.torque),
            ("effort_bound", self.effort_bound),
            ("rate_bound", self.rate_bound),
            ("torso_angle", self.torso_angle),
            ("torso_vel", self.torso_vel),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("limits.{name}"), format!("must be positive, got {v}")));
            }
        }
        if self.effort_bound > 2.0 * self.torque * self.torque * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "limits.effort_bound",
                format!(
                    "{} exceeds what a single 2-DOF joint can reach ({})",
                    self.effort_bound,
                    2.0 * self.torque * self.torque
                ),
            ));
        }
        Ok(())
    }
}

/// Physical parameters shared by every tail configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalParams {
    pub torso_mass: f64,
    /// Width × length × height along local X, Y, Z, m.
    pub torso_dims: [f64; 3],
    pub tail_total_length: f64,
    pub tail_total_mass: f64,
    /// Width (X) × height (Z) of every tail link, m.
    pub cross_section: [f64; 2],
    pub limits: JointLimits,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            torso_mass: 5.0,
            torso_dims: [0.3, 1.0, 0.3],
            tail_total_length: 1.5,
            tail_total_mass: 1.5,
            cross_section: [0.1, 0.1],
            limits: JointLimits::default(),
        }
    }
}

impl PhysicalParams {
    fn validate(&self) -> Result<()> {
        if !(self.torso_mass > 0.0) {
            return Err(Error::invalid("torso.mass_kg", "must be positive"));
        }
        if self.torso_dims.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::invalid("torso.dims_m", "all dimensions must be positive"));
        }
        if !(self.tail_total_length > 0.0) {
            return Err(Error::invalid("tail.total_length_m", "must be positive"));
        }
        if !(self.tail_total_mass > 0.0) {
            return Err(Error::invalid("tail.total_mass_m", "must be positive"));
        }
        if self.cross_section.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::invalid("tail.cross_section_m", "both dimensions must be positive"));
        }
        self.limits.validate()
    }
}

/// Mass properties of one rigid body in its own frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialInertia {
    pub mass: f64,
    pub com: [f64; 3],
    /// Rotational inertia about the centre of mass, kg·m².
    pub inertia_com: [[f64; 3]; 3],
}

/// Inertia of a uniform cuboid with edge lengths `dims` (X, Y, Z) whose centre
/// of mass sits at `com`.
pub fn cuboid_inertia(mass: f64, dims: [f64; 3], com: [f64; 3]) -> Result<SpatialInertia> {
    if !(mass > 0.0) || dims.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::invalid("inertia", format!("mass {mass} and dims {dims:?} must be positive")));
    }
    let [a, b, c] = dims.map(|d| d * d);
    let k = mass / 12.0;
    Ok(SpatialInertia {
        mass,
        com,
        inertia_com: [[k * (b + c), 0.0, 0.0], [0.0, k * (a + c), 0.0], [0.0, 0.0, k * (a + b)]],
    })
}

/// Inertia of a tail link of `length` along -Y from its proximal joint.
pub fn link_inertia(length: f64, cross_section: [f64; 2], mass: f64) -> Result<SpatialInertia> {
    cuboid_inertia(mass, [cross_section[0], length, cross_section[1]], [0.0, -0.5 * length, 0.0])
}

/// Complete physical description of a torso + n-link tail.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub torso_mass: f64,
    pub torso_dims: [f64; 3],
    pub n_links: usize,
    pub link_lengths: Vec<f64>,
    pub cross_section: [f64; 2],
    pub total_length: f64,
    pub total_mass: f64,
    /// Tail mass per unit length, kg/m.
    pub linear_density: f64,
    /// Tail base joint position in the torso frame, m.
    pub attach_offset: [f64; 3],
    pub limits: JointLimits,
    /// Optional collision-sphere override; `None` uses [`SphereLayout::default_for`].
    pub collision: Option<SphereLayout>,
}

impl ModelSpec {
    /// Generalized coordinate count: 3 torso angles + 2 per tail joint.
    pub fn n_q(&self) -> usize {
        2 * self.n_links + 3
    }

    /// Actuated DOF count.
    pub fn n_u(&self) -> usize {
        2 * self.n_links
    }

    pub fn link_masses(&self) -> Vec<f64> {
        self.link_lengths.iter().map(|l| self.linear_density * l).collect()
    }

    pub fn torso_inertia(&self) -> SpatialInertia {
        cuboid_inertia(self.torso_mass, self.torso_dims, [0.0; 3]).expect("validated model")
    }

    pub fn link_inertias(&self) -> Vec<SpatialInertia> {
        self.link_lengths
            .iter()
            .map(|&l| link_inertia(l, self.cross_section, self.linear_density * l).expect("validated model"))
            .collect()
    }

    pub fn params(&self) -> PhysicalParams {
        PhysicalParams {
            torso_mass: self.torso_mass,
            torso_dims: self.torso_dims,
            tail_total_length: self.total_length,
            tail_total_mass: self.total_mass,
            cross_section: self.cross_section,
            limits: self.limits.clone(),
        }
    }

    /// Same model with different link lengths (same count, same totals).
    pub fn with_lengths(&self, lengths: &[f64]) -> Result<ModelSpec> {
        let mut m = build_variable_model(lengths, &self.params())?;
        m.attach_offset = self.attach_offset;
        m.collision = self.collision.clone();
        Ok(m)
    }

    pub fn sphere_layout(&self) -> SphereLayout {
        self.collision.clone().unwrap_or_else(|| SphereLayout::default_for(self))
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        if self.n_links < 1 || self.n_links > MAX_LINKS {
            return Err(Error::invalid("tail.n_links", format!("must be in [1, {MAX_LINKS}], got {}", self.n_links)));
        }
        if self.link_lengths.len() != self.n_links {
            return Err(Error::invalid(
                "tail.lengths_m",
                format!("{} lengths for {} links", self.link_lengths.len(), self.n_links),
            ));
        }
        if self.link_lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::invalid("tail.lengths_m", "every link length must be positive"));
        }
        let sum: f64 = self.link_lengths.iter().sum();
        if (sum - self.total_length).abs() > LENGTH_SUM_TOL * self.total_length {
            return Err(Error::invalid(
                "tail.total_length_m",
                format!("link lengths sum to {sum} m but the total tail length is {} m", self.total_length),
            ));
        }
        if !(self.linear_density > 0.0) {
            return Err(Error::invalid("tail.total_mass_m", "linear density must be positive"));
        }
        if let Some(layout) = &self.collision {
            layout.validate()?;
        }
        Ok(())
    }
}

fn assemble(lengths: Vec<f64>, params: &PhysicalParams) -> ModelSpec {
    ModelSpec {
        torso_mass: params.torso_mass,
        torso_dims: params.torso_dims,
        n_links: lengths.len(),
        link_lengths: lengths,
        cross_section: params.cross_section,
        total_length: params.tail_total_length,
        total_mass: params.tail_total_mass,
        linear_density: params.tail_total_mass / params.tail_total_length,
        attach_offset: [0.0, -0.5 * params.torso_dims[1], 0.0],
        limits: params.limits.clone(),
        collision: None,
    }
}

/// Tail of `n_links` equal links.
pub fn build_uniform_model(n_links: usize, params: &PhysicalParams) -> Result<ModelSpec> {
    params.validate()?;
    if n_links < 1 || n_links > MAX_LINKS {
        return Err(Error::invalid("tail.n_links", format!("must be in [1, {MAX_LINKS}], got {n_links}")));
    }
    let l = params.tail_total_length / n_links as f64;
    let model = assemble(vec![l; n_links], params);
    model.validate()?;
    Ok(model)
}

/// Tail with the given link lengths; each must be at least
/// [`LENGTH_LOWER_BOUND`] and they must add up to the total tail length.
pub fn build_variable_model(lengths: &[f64], params: &PhysicalParams) -> Result<ModelSpec> {
    params.validate()?;
    check_lengths(lengths, params.tail_total_length)?;
    let model = assemble(lengths.to_vec(), params);
    model.validate()?;
    Ok(model)
}

pub(crate) fn check_lengths(lengths: &[f64], total: f64) -> Result<()> {
    if lengths.is_empty() || lengths.len() > MAX_LINKS {
        return Err(Error::invalid("tail.lengths_m", format!("need 1..={MAX_LINKS} lengths, got {}", lengths.len())));
    }
    if let Some((i, l)) = lengths.iter().enumerate().find(|(_, l)| !(**l >= LENGTH_LOWER_BOUND)) {
        return Err(Error::invalid(
            "tail.lengths_m",
            format!("link {} length {l} m is below the lower bound {LENGTH_LOWER_BOUND} m", i + 1),
        ));
    }
    let sum: f64 = lengths.iter().sum();
    if (sum - total).abs() > LENGTH_SUM_TOL {
        return Err(Error::invalid(
            "tail.total_length_m",
            format!("link lengths sum to {sum} m, expected total tail length {total} m"),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Config file

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    torso: TorsoConfig,
    tail: TailConfig,
    limits: LimitsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    collision: Option<SphereLayout>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TorsoConfig {
    mass_kg: f64,
    dims_m: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TailConfig {
    n_links: usize,
    total_length_m: f64,
    #[serde(alias = "total_mass_kg")]
    total_mass_m: f64,
    cross_section_m: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lengths_m: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsConfig {
    rom_deg: f64,
    vel_deg_s: f64,
    torque_nm: f64,
    effort_bound: f64,
    rate_bound_nm_s: f64,
    torso_angle_deg: f64,
    torso_vel_deg_s: f64,
}

/// Parse a TOML model config.
pub fn load_model(text: &str) -> Result<ModelSpec> {
    let cfg: ConfigFile = toml::from_str(text).map_err(|e| {
        let (line, col) = e
            .span()
            .map(|s| line_col(text, s.start))
            .unwrap_or((0, 0));
        Error::Parse { line, col, msg: e.message().to_string() }
    })?;
    let params = PhysicalParams {
        torso_mass: cfg.torso.mass_kg,
        torso_dims: cfg.torso.dims_m,
        tail_total_length: cfg.tail.total_length_m,
        tail_total_mass: cfg.tail.total_mass_m,
        cross_section: cfg.tail.cross_section_m,
        limits: JointLimits {
            rom: cfg.limits.rom_deg.to_radians(),
            vel: cfg.limits.vel_deg_s.to_radians(),
            torque: cfg.limits.torque_nm,
            effort_bound: cfg.limits.effort_bound,
            rate_bound: cfg.limits.rate_bound_nm_s,
            torso_angle: cfg.limits.torso_angle_deg.to_radians(),
            torso_vel: cfg.limits.torso_vel_deg_s.to_radians(),
        },
    };
    let mut model = match cfg.tail.lengths_m {
        Some(lengths) => {
            if lengths.len() != cfg.tail.n_links {
                return Err(Error::invalid(
                    "tail.lengths_m",
                    format!("{} lengths given for n_links = {}", lengths.len(), cfg.tail.n_links),
                ));
            }
            params.validate()?;
            let m = assemble(lengths, &params);
            m.validate()?;
            m
        }
        None => build_uniform_model(cfg.tail.n_links, &params)?,
    };
    model.collision = cfg.collision;
    model.validate()?;
    Ok(model)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map(|p| p + 1).unwrap_or(0) + 1;
    (line, col)
}

/// Serialize a model to the TOML config format. Lengths are always written
/// explicitly so loading reproduces the model exactly.
pub fn save_model(model: &ModelSpec) -> String {
    let l = &model.limits;
    let cfg = ConfigFile {
        torso: TorsoConfig { mass_kg: model.torso_mass, dims_m: model.torso_dims },
        tail: TailConfig {
            n_links: model.n_links,
            total_length_m: model.total_length,
            total_mass_m: model.total_mass,
            cross_section_m: model.cross_section,
            lengths_m: Some(model.link_lengths.clone()),
        },
        limits: LimitsConfig {
            rom_deg: exact_degrees(l.rom),
            vel_deg_s: exact_degrees(l.vel),
            torque_nm: l.torque,
            effort_bound: l.effort_bound,
            rate_bound_nm_s: l.rate_bound,
            torso_angle_deg: exact_degrees(l.torso_angle),
            torso_vel_deg_s: exact_degrees(l.torso_vel),
        },
        collision: model.collision.clone(),
    };
    toml::to_string(&cfg).expect("model config serializes")
}

/// Degree value that converts back to exactly `rad`, preferring the
/// shortest decimal.
fn exact_degrees(rad: f64) -> f64 {
    let d = rad.to_degrees();
    for digits in 0..=12 {
        let p = 10f64.powi(digits);
        let r = (d * p).round() / p;
        if r.to_radians() == rad {
            return r;
        }
    }
    let mut lo = d;
    let mut hi = d;
    for _ in 0..64 {
        if lo.to_radians() == rad {
            return lo;
        }
        if hi.to_radians() == rad {
            return hi;
        }
        lo = lo.next_down();
        hi = hi.next_up();
    }
    d
}

pub fn load_model_file(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_model(&text)
}

/// Default config text (the standard 1-link model).
pub fn default_config_text() -> String {
    save_model(&build_uniform_model(1, &PhysicalParams::default()).expect("defaults are valid"))
}
