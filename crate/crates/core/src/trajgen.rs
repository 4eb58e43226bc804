//! Random fifth-degree Fourier-series targets for the torso orientation.
//!
//! Each axis follows `θ(t) = a0 + Σ_{j=1..5} a_j cos(jωt) + b_j sin(jωt)`
//! over a 0.5 s horizon, with `a0 = −Σ a_j` so every target starts at zero.
//! Coefficients are scaled so that `|a0| + Σ(|a_j| + |b_j|) ≤ π` and
//! `Σ jω(|a_j| + |b_j|) ≤ 2π`, which bounds the angle by 180° and the rate by
//! 360°/s at every instant.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HARMONICS: usize = 5;
pub const HORIZON: f64 = 0.5;
pub const ANGLE_BOUND: f64 = PI;
pub const RATE_BOUND: f64 = 2.0 * PI;
const OMEGA_RANGE: (f64, f64) = (PI, 4.0 * PI);
const SCALE_RANGE: (f64, f64) = (0.5, 1.0);
const MAX_RETRIES: usize = 100;

/// One axis of a target: cosine terms `a[0..=5]`, sine terms `b[0..5]`
/// (for harmonics 1..=5) and base frequency `omega`, rad/s.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisSeries {
    pub a: [f64; HARMONICS + 1],
    pub b: [f64; HARMONICS],
    pub omega: f64,
}

impl AxisSeries {
    pub fn zero() -> Self {
        Self { a: [0.0; HARMONICS + 1], b: [0.0; HARMONICS], omega: PI }
    }

    pub fn eval(&self, t: f64) -> (f64, f64) {
        let mut th = self.a[0];
        let mut thd = 0.0;
        for j in 1..=HARMONICS {
            let w = j as f64 * self.omega;
            let (s, c) = (w * t).sin_cos();
            th += self.a[j] * c + self.b[j - 1] * s;
            thd += w * (self.b[j - 1] * c - self.a[j] * s);
        }
        (th, thd)
    }

    fn l1(&self) -> f64 {
        self.a.iter().map(|v| v.abs()).sum::<f64>() + self.b.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn rate_l1(&self) -> f64 {
        (1..=HARMONICS).map(|j| j as f64 * self.omega * (self.a[j].abs() + self.b[j - 1].abs())).sum()
    }
}

/// Target torso orientation `(roll, pitch, yaw)(t)` on `[0, duration]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierTarget {
    pub axes: [AxisSeries; 3],
    pub duration: f64,
}

impl FourierTarget {
    pub fn zero() -> Self {
        Self { axes: [AxisSeries::zero(), AxisSeries::zero(), AxisSeries::zero()], duration: HORIZON }
    }

    /// Single-axis sinusoid `amplitude · sin(ωt)` on `axis`.
    pub fn sinusoid(axis: usize, amplitude: f64, omega: f64) -> Self {
        let mut t = Self::zero();
        t.axes[axis].b[0] = amplitude;
        t.axes[axis].omega = omega;
        t
    }

    /// Angles and rates at `t`, with `t` checked against the horizon.
    pub fn eval(&self, t: f64) -> Result<([f64; 3], [f64; 3])> {
        let eps = 1e-9;
        if !(t >= -eps && t <= self.duration + eps) {
            return Err(Error::OutOfRange { t, t0: 0.0, tf: self.duration });
        }
        Ok(self.eval_unchecked(t))
    }

    pub fn eval_unchecked(&self, t: f64) -> ([f64; 3], [f64; 3]) {
        let mut th = [0.0; 3];
        let mut thd = [0.0; 3];
        for (i, ax) in self.axes.iter().enumerate() {
            let (a, b) = ax.eval(t);
            th[i] = a;
            thd[i] = b;
        }
        (th, thd)
    }

    /// Largest |θ| and |θ̇| over a grid of spacing `step` seconds.
    pub fn grid_extrema(&self, step: f64) -> (f64, f64) {
        let n = (self.duration / step).round() as usize;
        let mut max_th: f64 = 0.0;
        let mut max_thd: f64 = 0.0;
        for k in 0..=n {
            let (th, thd) = self.eval_unchecked(self.duration * k as f64 / n as f64);
            for i in 0..3 {
                max_th = max_th.max(th[i].abs());
                max_thd = max_thd.max(thd[i].abs());
            }
        }
        (max_th, max_thd)
    }

    fn within_bounds(&self) -> bool {
        let coeff_ok = self.axes.iter().all(|a| a.l1() <= ANGLE_BOUND && a.rate_l1() <= RATE_BOUND);
        let (th, thd) = self.grid_extrema(1e-3);
        coeff_ok && th <= ANGLE_BOUND && thd <= RATE_BOUND
    }
}

fn sample_axis(rng: &mut ChaCha8Rng) -> AxisSeries {
    let omega = rng.gen_range(OMEGA_RANGE.0..OMEGA_RANGE.1);
    let mut a = [0.0; HARMONICS + 1];
    let mut b = [0.0; HARMONICS];
    for j in 1..=HARMONICS {
        a[j] = rng.gen_range(-1.0..1.0) / j as f64;
        b[j - 1] = rng.gen_range(-1.0..1.0) / j as f64;
    }
    a[0] = -a[1..].iter().sum::<f64>();
    let mut axis = AxisSeries { a, b, omega };
    let kappa = rng.gen_range(SCALE_RANGE.0..SCALE_RANGE.1);
    let s = kappa * (ANGLE_BOUND / axis.l1()).min(RATE_BOUND / axis.rate_l1());
    axis.a.iter_mut().for_each(|v| *v *= s);
    axis.b.iter_mut().for_each(|v| *v *= s);
    axis
}

/// Target number `index` of the stream identified by `seed`.
pub fn sample_target_indexed(seed: u64, index: u64) -> Result<FourierTarget> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    for _ in 0..MAX_RETRIES {
        let t = FourierTarget { axes: [sample_axis(&mut rng), sample_axis(&mut rng), sample_axis(&mut rng)], duration: HORIZON };
        if t.within_bounds() {
            return Ok(t);
        }
    }
    Err(Error::Degenerate(format!("no admissible target after {MAX_RETRIES} draws (seed {seed}, index {index})")))
}

pub fn sample_target(seed: u64) -> Result<FourierTarget> {
    sample_target_indexed(seed, 0)
}

pub fn eval_target(target: &FourierTarget, t: f64) -> Result<([f64; 3], [f64; 3])> {
    target.eval(t)
}

/// `count` targets; target `i` uses RNG stream `i` of `seed`.
pub fn gen_batch(seed: u64, count: usize) -> Result<Vec<FourierTarget>> {
    if count == 0 {
        return Err(Error::invalid("count", "must be at least 1"));
    }
    (0..count as u64).map(|i| sample_target_indexed(seed, i)).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct TargetRow {
    trial_id: usize,
    axis: usize,
    a0: f64,
    a1: f64,
    a2: f64,
    a3: f64,
    a4: f64,
    a5: f64,
    b1: f64,
    b2: f64,
    b3: f64,
    b4: f64,
    b5: f64,
    omega: f64,
}

/// Targets CSV: one row per (trial, axis); axes numbered 1..=3.
pub fn write_targets_csv<W: Write>(targets: &[FourierTarget], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (trial_id, t) in targets.iter().enumerate() {
        for (i, ax) in t.axes.iter().enumerate() {
            w.serialize(TargetRow {
                trial_id,
                axis: i + 1,
                a0: ax.a[0],
                a1: ax.a[1],
                a2: ax.a[2],
                a3: ax.a[3],
                a4: ax.a[4],
                a5: ax.a[5],
                b1: ax.b[0],
                b2: ax.b[1],
                b3: ax.b[2],
                b4: ax.b[3],
                b5: ax.b[4],
                omega: ax.omega,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(std::path::Path::new("<targets csv>"), e))?;
    Ok(())
}

pub fn read_targets_csv<R: Read>(input: R) -> Result<Vec<FourierTarget>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out: Vec<FourierTarget> = Vec::new();
    for row in rdr.deserialize() {
        let r: TargetRow = row?;
        if r.axis < 1 || r.axis > 3 {
            return Err(Error::invalid("axis", format!("must be 1..=3, got {}", r.axis)));
        }
        if r.trial_id == out.len() && r.axis == 1 {
            out.push(FourierTarget::zero());
        }
        let t = out
            .get_mut(r.trial_id)
            .ok_or_else(|| Error::invalid("trial_id", format!("rows must be grouped by trial, saw {}", r.trial_id)))?;
        t.axes[r.axis - 1] = AxisSeries {
            a: [r.a0, r.a1, r.a2, r.a3, r.a4, r.a5],
            b: [r.b1, r.b2, r.b3, r.b4, r.b5],
            omega: r.omega,
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(sample_target(42).unwrap(), sample_target(42).unwrap());
        assert_ne!(sample_target(42).unwrap(), sample_target(43).unwrap());
    }

    #[test]
    fn starts_at_zero_exactly() {
        for seed in 0..20 {
            let t = sample_target(seed).unwrap();
            let (th, _) = t.eval(0.0).unwrap();
            // a0 = -Σ a_j, and cos(0) = 1, so the sum cancels up to rounding
            for v in th {
                assert!(v.abs() < 1e-15, "{v}");
            }
        }
    }

    #[test]
    fn zero_target_is_zero() {
        let t = FourierTarget::zero();
        for k in 0..=10 {
            let (a, b) = t.eval(0.05 * k as f64).unwrap();
            assert_eq!(a, [0.0; 3]);
            assert_eq!(b, [0.0; 3]);
        }
    }

    #[test]
    fn twenty_degree_sinusoid() {
        let amp = 20f64.to_radians();
        let t = FourierTarget::sinusoid(0, amp, PI);
        let (th, thd) = t.eval(0.0).unwrap();
        assert_eq!(th[0], 0.0);
        assert!((thd[0] - amp * PI).abs() < 1e-15);
        let (th, _) = t.eval(0.5).unwrap();
        assert!((th[0] - amp).abs() < 1e-15);
        let (_, max_rate) = t.grid_extrema(1e-3);
        assert!((max_rate.to_degrees() - 20.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn rate_matches_finite_difference() {
        let t = sample_target(5).unwrap();
        let h = 1e-6;
        for k in 1..50 {
            let s = 0.01 * k as f64;
            let (p, _) = t.eval(s + h).unwrap();
            let (m, _) = t.eval(s - h).unwrap();
            let (_, d) = t.eval(s).unwrap();
            for i in 0..3 {
                let fd = (p[i] - m[i]) / (2.0 * h);
                assert!((fd - d[i]).abs() < 1e-8 * d[i].abs().max(1.0), "{fd} vs {}", d[i]);
            }
        }
    }

    #[test]
    fn out_of_horizon() {
        let t = sample_target(1).unwrap();
        assert!(matches!(t.eval(0.6), Err(Error::OutOfRange { .. })));
        assert!(t.eval(-0.1).is_err());
    }

    #[test]
    fn batch_and_csv_round_trip() {
        let batch = gen_batch(7, 100).unwrap();
        assert_eq!(batch.len(), 100);
        for t in &batch {
            let (th, thd) = t.grid_extrema(1e-3);
            assert!(th <= PI && thd <= 2.0 * PI);
        }
        let mut buf = Vec::new();
        write_targets_csv(&batch, &mut buf).unwrap();
        let back = read_targets_csv(&buf[..]).unwrap();
        assert_eq!(back, batch);
        let mut buf2 = Vec::new();
        write_targets_csv(&gen_batch(7, 100).unwrap(), &mut buf2).unwrap();
        assert_eq!(buf, buf2);
        assert!(gen_batch(7, 0).is_err());
    }
}
