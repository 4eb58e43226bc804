//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.
//!
//! Criteria 3 to 7 share one optimization campaign (10 targets, dt = 8 ms,
//! uniform n ∈ {1, 2, 3, 4, 6}, variable n ∈ {2, 3, 4}) that runs once per
//! test binary. It takes close to two hours on one core, so those tests are
//! ignored by default; run them with `--ignored`. Set
//! `TAILOPT_ACCEPTANCE_CACHE=1` to keep and resume the campaign directory
//! under the cargo target tmpdir between runs. Campaign time is the sum of
//! per-trial wall times, so a resumed run reports the original cost.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tailopt::dynamics::TailDynamics;
use tailopt::experiment::{read_results, read_solution, run_batch, BatchPlan, ResultRow, Starts, TrialKey, TrialSettings, VALIDATION_FAILED};
use tailopt::model::{build_uniform_model, ModelSpec, PhysicalParams, MAX_LINKS};
use tailopt::morphometrics::{max_neighbor_diff, normalize, paired_t_test, welch_t_test};
use tailopt::multistart::InitStrategy;
use tailopt::simulate::{rollout, validate, RolloutOptions, VALIDATION_THRESHOLD};
use tailopt::trajgen::{gen_batch, FourierTarget};
use tailopt::transcription::{build_nlp, hermite_midpoint, hermite_simpson_defect, Grid, Mode, NlpProblem, PITCH_LIMIT};

const TARGET_SEED: u64 = 2024;
const TARGETS: usize = 10;
const UNIFORM_LINKS: [usize; 5] = [1, 2, 3, 4, 6];
const VARIABLE_LINKS: [usize; 3] = [2, 3, 4];

fn verdict(n: usize, ok: bool, detail: &str) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
}

fn models() -> Vec<ModelSpec> {
    (1..=MAX_LINKS).map(|n| build_uniform_model(n, &PhysicalParams::default()).unwrap()).collect()
}

/// Uniform sample inside joint, rate and torque bounds.
fn in_bounds_state(m: &ModelSpec, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let lim = &m.limits;
    let n_q = m.n_q();
    let q: Vec<f64> = (0..n_q)
        .map(|i| {
            let b = match i {
                1 => PITCH_LIMIT,
                0 | 2 => lim.torso_angle,
                _ => lim.rom,
            };
            rng.gen_range(-b..b)
        })
        .collect();
    let qd = (0..n_q)
        .map(|i| {
            let b = if i < 3 { lim.torso_vel } else { lim.vel };
            rng.gen_range(-b..b)
        })
        .collect();
    let u = (0..m.n_u()).map(|_| rng.gen_range(-lim.torque..lim.torque)).collect();
    (q, qd, u)
}

#[test]
fn criterion_1_dynamics_oracles() {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-6;
    let (mut sym, mut agree, mut partial): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for m in models() {
        let d = TailDynamics::new(&m);
        let n = m.n_q();
        for _ in 0..1000 {
            let (q, qd, u) = in_bounds_state(&m, &mut rng);
            let mm = d.mass_matrix(&q).unwrap();
            sym = sym.max((&mm - mm.transpose()).amax());
            let a = d.forward_dynamics(&q, &qd, &u).unwrap();
            let b = d.forward_dynamics_aba(&q, &qd, &u).unwrap();
            agree = agree.max((&a - &b).amax() / a.amax().max(1.0));
            let p = d.partials(&q, &qd, &u).unwrap();
            let f = |q: &[f64], qd: &[f64], u: &[f64]| d.forward_dynamics(q, qd, u).unwrap();
            let mut check = |fd: DVector<f64>, an: DVector<f64>| {
                partial = partial.max((&fd - an).amax() / fd.amax().max(1.0));
            };
            for j in 0..n {
                let (mut qa, mut qb) = (q.clone(), q.clone());
                qa[j] += h;
                qb[j] -= h;
                check((f(&qa, &qd, &u) - f(&qb, &qd, &u)) / (2.0 * h), p.d_q.column(j).into_owned());
                let (mut va, mut vb) = (qd.clone(), qd.clone());
                va[j] += h;
                vb[j] -= h;
                check((f(&q, &va, &u) - f(&q, &vb, &u)) / (2.0 * h), p.d_qd.column(j).into_owned());
            }
            for j in 0..u.len() {
                let (mut ua, mut ub) = (u.clone(), u.clone());
                ua[j] += h;
                ub[j] -= h;
                check((f(&q, &qd, &ua) - f(&q, &qd, &ub)) / (2.0 * h), p.d_u.column(j).into_owned());
            }
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    let ok = sym <= 1e-12 && agree <= 1e-10 && partial <= 1e-4 && secs < 60.0;
    verdict(1, ok, &format!("(asymmetry {sym:.1e}, forward-dynamics spread {agree:.1e}, partials {partial:.1e}, {secs:.1}s)"));
    assert!(ok);
}

/// Smooth random torques: a few sinusoids per DOF inside the torque bound.
fn random_torque(m: &ModelSpec, rng: &mut ChaCha8Rng) -> impl Fn(f64) -> tailopt::Result<Vec<f64>> {
    let lim = m.limits.torque;
    let waves: Vec<Vec<(f64, f64, f64)>> = (0..m.n_u())
        .map(|_| (0..3).map(|_| (rng.gen_range(-lim..lim) / 3.0, rng.gen_range(2.0..40.0), rng.gen_range(0.0..6.3))).collect())
        .collect();
    move |t| Ok(waves.iter().map(|w| w.iter().map(|(a, om, ph)| a * (om * t + ph).sin()).sum()).collect())
}

#[test]
fn criterion_2_conservation() {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let samples: Vec<f64> = (0..=50).map(|k| 0.01 * k as f64).collect();
    let (mut mom, mut energy): (f64, f64) = (0.0, 0.0);
    let mut failures = 0;
    for m in models() {
        let d = TailDynamics::new(&m);
        let n = m.n_q();
        for _ in 0..100 {
            let u = random_torque(&m, &mut rng);
            let tr = match rollout(&m, u, &vec![0.0; 2 * n], &samples, &[], &RolloutOptions::default()) {
                Ok(tr) => tr,
                Err(_) => {
                    failures += 1;
                    continue;
                }
            };
            let mut peak: f64 = 0.0;
            let mut resid: f64 = 0.0;
            for (x, w) in tr.x.iter().zip(&tr.work) {
                let l = d.angular_momentum(&x[..n], &x[n..]).unwrap();
                mom = mom.max(l.iter().map(|c| c * c).sum::<f64>().sqrt());
                let ke = d.kinetic_energy(&x[..n], &x[n..]).unwrap();
                peak = peak.max(ke);
                resid = resid.max((ke - w).abs());
            }
            energy = energy.max(resid / peak.max(f64::MIN_POSITIVE));
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    let ok = failures == 0 && mom <= 1e-6 && energy <= 1e-6 && secs < 60.0;
    verdict(2, ok, &format!("(max |L| {mom:.1e} kg·m²/s, energy residual {energy:.1e} of peak KE, {failures} failed rollouts, {secs:.1}s)"));
    assert!(ok);
}

struct Campaign {
    rows: BTreeMap<String, ResultRow>,
    /// Bound saturation per trial: position, velocity, torque.
    bounds: BTreeMap<String, [f64; 3]>,
    dir: PathBuf,
    seconds: f64,
}

impl Campaign {
    fn row(&self, n: usize, mode: Mode, t: usize) -> &ResultRow {
        &self.rows[&TrialKey { target_index: t, n_links: n, mode }.id()]
    }
}

fn campaign() -> &'static Campaign {
    static C: OnceLock<Campaign> = OnceLock::new();
    C.get_or_init(|| {
        let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-campaign");
        if std::env::var("TAILOPT_ACCEPTANCE_CACHE").as_deref() != Ok("1") {
            let _ = fs::remove_dir_all(&dir);
        }
        let targets = gen_batch(TARGET_SEED, TARGETS).unwrap();
        let mut settings = TrialSettings::new(PhysicalParams::default(), TARGET_SEED);
        settings.grid = Grid::new(0.5, 0.008).unwrap();
        settings.starts = Starts::Only(InitStrategy::Random(0));
        let mut plan = BatchPlan { settings, targets, links: UNIFORM_LINKS.to_vec(), mode: Mode::Uniform, out_dir: dir.clone(), jobs: 1 };
        let uniform = run_batch(&plan).unwrap();
        eprintln!("uniform sweep: {} computed, {} resumed, {} failed", uniform.computed, uniform.resumed, uniform.failed);
        plan.mode = Mode::Variable;
        plan.links = VARIABLE_LINKS.to_vec();
        let variable = run_batch(&plan).unwrap();
        eprintln!("variable sweep: {} computed, {} resumed, {} failed", variable.computed, variable.resumed, variable.failed);
        let rows: BTreeMap<String, ResultRow> =
            read_results(fs::File::open(dir.join("results.csv")).unwrap()).unwrap().into_iter().map(|r| (r.trial_id.clone(), r)).collect();
        let seconds = rows.values().map(|r| r.wall_time_s).sum();
        let mut bounds = BTreeMap::new();
        let mut rdr = csv::Reader::from_path(dir.join("bound_saturation.csv")).unwrap();
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let v = |i: usize| rec[i].parse::<f64>().unwrap();
            bounds.insert(rec[0].to_string(), [v(1), v(2), v(3)]);
        }
        Campaign { rows, bounds, dir, seconds }
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
#[ignore = "optimization campaign, about two hours"]
fn criterion_3_collocation_validation() {
    let c = campaign();
    let accepted: Vec<&ResultRow> = c.rows.values().filter(|r| r.objective_rad2s.is_some()).collect();
    let mut worst: f64 = 0.0;
    let mut rejected = Vec::new();
    for r in &accepted {
        // recompute from the stored solution rather than trusting the table
        let key = TrialKey { target_index: r.target_seed as usize, n_links: r.n_links, mode: r.mode };
        let sol = read_solution(&c.dir.join("solutions").join(format!("{}.csv", key.id()))).unwrap();
        let model = build_uniform_model(r.n_links, &PhysicalParams::default()).unwrap();
        let v = validate(&sol, &model).unwrap();
        assert!((v.torso_rms - r.validation_rms_rad.unwrap()).abs() <= 1e-9);
        worst = worst.max(v.torso_rms);
        if !v.passed() || r.solver_status == VALIDATION_FAILED {
            rejected.push(r.trial_id.clone());
        }
    }
    let failed = c.rows.values().filter(|r| r.objective_rad2s.is_none()).count();
    let ok = !accepted.is_empty() && rejected.is_empty();
    verdict(
        3,
        ok,
        &format!(
            "({} solutions, worst torso RMS {:.3}° against {:.1}°, {} unsolved, rejected {:?})",
            accepted.len(),
            worst.to_degrees(),
            VALIDATION_THRESHOLD.to_degrees(),
            failed,
            rejected
        ),
    );
    assert!(ok);
}

#[test]
#[ignore = "optimization campaign, about two hours"]
fn criterion_4_link_count_trend() {
    let c = campaign();
    // unvalidated trials stay out of summary statistics
    let med = |n: usize| median((0..TARGETS).map(|t| c.row(n, Mode::Uniform, t)).filter(|r| r.counts()).filter_map(|r| r.tracking_error).collect());
    let all = |n: usize| (0..TARGETS).any(|t| c.row(n, Mode::Uniform, t).counts());
    let m: Vec<f64> = [1, 2, 3, 6].iter().map(|&n| med(n)).collect();
    let improvement = 1.0 - m[3] / m[0];
    let complete = [1, 2, 3, 6].iter().all(|&n| all(n));
    let ok = complete && m[0] > m[1] && m[1] > m[2] && improvement >= 0.4 && c.seconds <= 7200.0;
    verdict(
        4,
        ok,
        &format!(
            "(median tracking error n=1 {:.3e}, n=2 {:.3e}, n=3 {:.3e}, n=6 {:.3e} rad²·s over {:?} validated trials; n=6 improves {:.1}% on n=1; campaign {:.0}s)",
            m[0],
            m[1],
            m[2],
            m[3],
            [1, 2, 3, 6].map(|n| (0..TARGETS).filter(|&t| c.row(n, Mode::Uniform, t).counts()).count()),
            100.0 * improvement,
            c.seconds
        ),
    );
    assert!(ok);
}

#[test]
#[ignore = "optimization campaign, about two hours"]
fn criterion_5_variable_no_regression() {
    let c = campaign();
    let mut worst = f64::NEG_INFINITY;
    let mut gains = Vec::new();
    let mut missing = 0;
    for &n in &VARIABLE_LINKS {
        for t in 0..TARGETS {
            match (c.row(n, Mode::Uniform, t).objective_rad2s, c.row(n, Mode::Variable, t).objective_rad2s) {
                (Some(u), Some(v)) => {
                    worst = worst.max(v - u);
                    gains.push((u - v) / u);
                }
                _ => missing += 1,
            }
        }
    }
    let mean_gain = gains.iter().sum::<f64>() / gains.len().max(1) as f64;
    let ok = missing == 0 && worst <= 1e-6 && mean_gain > 0.0;
    verdict(5, ok, &format!("(worst variable − uniform {worst:.2e}, mean improvement {:.2}%, {missing} missing pairs)", 100.0 * mean_gain));
    assert!(ok);
}

#[test]
#[ignore = "optimization campaign, about two hours"]
fn criterion_6_first_link_shortest() {
    let c = campaign();
    let mut detail = Vec::new();
    let mut ok = true;
    for n in [3, 4] {
        let mut shortest = 0;
        let mut total = 0;
        for t in 0..TARGETS {
            let r = c.row(n, Mode::Variable, t);
            if r.objective_rad2s.is_none() {
                continue;
            }
            let l: Vec<f64> = r.lengths.split(';').map(|s| s.parse().unwrap()).collect();
            total += 1;
            if l[1..].iter().all(|v| l[0] < *v) {
                shortest += 1;
            }
        }
        let share = shortest as f64 / TARGETS as f64;
        ok &= share >= 0.7;
        detail.push(format!("n={n}: {shortest}/{TARGETS} ({total} solved)"));
    }
    verdict(6, ok, &format!("(first link shortest {})", detail.join(", ")));
    assert!(ok);
}

#[test]
#[ignore = "optimization campaign, about two hours"]
fn criterion_7_effort_ball_dominance() {
    let c = campaign();
    let rows: Vec<&ResultRow> = (0..TARGETS).map(|t| c.row(6, Mode::Uniform, t)).filter(|r| r.counts()).collect();
    let effort = median(rows.iter().map(|r| r.effort_saturation.unwrap()).collect());
    let b: Vec<[f64; 3]> = rows.iter().map(|r| c.bounds[&r.trial_id]).collect();
    let med = |i: usize| median(b.iter().map(|v| v[i]).collect());
    let (pos, vel, tq) = (med(0), med(1), med(2));
    let ok = !rows.is_empty() && effort >= 0.5 && pos < 0.5 && vel < 0.5 && tq < 0.5;
    verdict(
        7,
        ok,
        &format!(
            "(median effort saturation {effort:.2}; median bound saturation position {pos:.2}, velocity {vel:.2}, torque {tq:.2}; {} validated trials)",
            rows.len()
        ),
    );
    assert!(ok);
}

fn check_jacobians(nlp: &NlpProblem, z: &[f64]) -> f64 {
    let h = 1e-6;
    let e = nlp.eval_full(z, true).unwrap();
    let j = e.jacobian.as_ref().unwrap();
    let (jr, je, ji) = (j.residuals.to_dense(), j.eq.to_dense(), j.ineq.to_dense());
    let (grad, _, _) = nlp.eval_jacobians(z).unwrap();
    let mut worst: f64 = 0.0;
    for col in 0..z.len() {
        let (mut a, mut b) = (z.to_vec(), z.to_vec());
        a[col] += h;
        b[col] -= h;
        let ea = nlp.eval_full(&a, false).unwrap();
        let eb = nlp.eval_full(&b, false).unwrap();
        let blocks: [(&Vec<f64>, &Vec<f64>, &DMatrix<f64>); 3] = [(&ea.residuals, &eb.residuals, &jr), (&ea.eq, &eb.eq, &je), (&ea.ineq, &eb.ineq, &ji)];
        for (va, vb, dense) in blocks {
            for r in 0..va.len() {
                let fd = (va[r] - vb[r]) / (2.0 * h);
                worst = worst.max((fd - dense[(r, col)]).abs() / dense[(r, col)].abs().max(1.0));
            }
        }
        let fd = (nlp.eval_objective(&a).unwrap() - nlp.eval_objective(&b).unwrap()) / (2.0 * h);
        worst = worst.max((fd - grad[col]).abs() / grad[col].abs().max(1.0));
    }
    worst
}

#[test]
fn criterion_8_transcription() {
    let dt = 0.004;
    let mut defect: f64 = 0.0;
    // constant rate
    let c = DVector::from_vec(vec![0.3, -1.2, 2.0]);
    let x0 = DVector::from_vec(vec![0.1, 0.2, -0.3]);
    defect = defect.max(hermite_simpson_defect(&x0, &(&x0 + &c * dt), &c, &c, &c, dt).amax());
    // rate linear in time
    let (a, b, t0) = (DVector::from_vec(vec![1.0, -2.0]), DVector::from_vec(vec![30.0, 5.0]), 0.128);
    let x = |t: f64| DVector::from_vec(vec![0.5, 0.1]) + &a * t + &b * (0.5 * t * t);
    let f = |t: f64| &a + &b * t;
    defect = defect.max(hermite_simpson_defect(&x(t0), &x(t0 + dt), &f(t0), &f(t0 + dt / 2.0), &f(t0 + dt), dt).amax());
    let st = |t: f64| DVector::from_vec(vec![t * t - 0.5 * t * t * t, 2.0 * t - 1.5 * t * t]);
    let rate = |t: f64| DVector::from_vec(vec![2.0 * t - 1.5 * t * t, 2.0 - 3.0 * t]);
    defect = defect.max((hermite_midpoint(&st(t0), &st(t0 + dt), &rate(t0), &rate(t0 + dt), dt) - st(t0 + dt / 2.0)).amax());
    defect = defect.max(hermite_simpson_defect(&st(t0), &st(t0 + dt), &rate(t0), &rate(t0 + dt / 2.0), &rate(t0 + dt), dt).amax());

    // 20° sinusoid at π rad/s over 0.5 s, tracked by a body at rest: 100 deg²·s
    let p = PhysicalParams::default();
    let m1 = build_uniform_model(1, &p).unwrap();
    let sin = FourierTarget::sinusoid(0, 20f64.to_radians(), std::f64::consts::PI);
    let nlp = build_nlp(&m1, &sin, Grid::standard(), Mode::Uniform).unwrap();
    let quad = (nlp.eval_objective(&nlp.zeros()).unwrap() - 100.0 * (std::f64::consts::PI / 180.0).powi(2)).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut jac: f64 = 0.0;
    let target = gen_batch(8, 1).unwrap().remove(0);
    for (n, mode) in [(1, Mode::Uniform), (2, Mode::Uniform), (6, Mode::Uniform), (2, Mode::Variable), (4, Mode::Variable)] {
        let m = build_uniform_model(n, &p).unwrap();
        let nlp = build_nlp(&m, &target, Grid::new(0.5, 0.05).unwrap(), mode).unwrap();
        let (lb, ub) = nlp.bounds();
        let mut z: Vec<f64> = lb.iter().zip(ub).map(|(&l, &u)| if l == u { l } else { 0.5 * rng.gen_range(l.max(-1.0)..u.min(1.0)) }).collect();
        let l = nlp.layout();
        for i in 0..l.n_l {
            z[l.lengths() + i] = rng.gen_range(0.25..0.6);
        }
        jac = jac.max(check_jacobians(&nlp, &z));
    }
    let ok = defect <= 1e-12 && quad <= 1e-10 && jac <= 1e-4;
    verdict(8, ok, &format!("(max defect {defect:.1e}, quadrature error {quad:.1e} rad²·s, Jacobian mismatch {jac:.1e})"));
    assert!(ok);
}

/// Two-sided t-distribution tail through the regularized incomplete beta.
fn t_tail(t: f64, df: f64) -> f64 {
    statrs::function::beta::beta_reg(df / 2.0, 0.5, df / (df + t * t))
}

fn brute_welch(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    // two-pass moments, summed in index order
    let stats = |x: &[f64]| {
        let mut s = 0.0;
        for v in x {
            s += v;
        }
        let m = s / x.len() as f64;
        let mut ss = 0.0;
        for v in x {
            ss += (v - m) * (v - m);
        }
        (m, ss / (x.len() as f64 - 1.0), x.len() as f64)
    };
    let ((ma, va, na), (mb, vb, nb)) = (stats(a), stats(b));
    let t = (ma - mb) / (va / na + vb / nb).sqrt();
    let df = (va / na + vb / nb).powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    (t, df, t_tail(t, df))
}

#[test]
fn criterion_9_morphometrics() {
    let mut err: f64 = 0.0;
    let raw = [10.0, 15.0, 21.0, 18.0];
    let n = normalize(&raw).unwrap();
    for (i, v) in n.iter().enumerate() {
        err = err.max((v - raw[i] / raw[0]).abs());
    }
    let exact = max_neighbor_diff(&[1.0, 1.5, 2.1, 1.8]).unwrap();
    let example = (exact - 0.6).abs() <= f64::EPSILON;

    // brute-force neighbour differences on random series
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let len = rng.gen_range(2..30);
        let s: Vec<f64> = (0..len).map(|_| rng.gen_range(1.0..50.0)).collect();
        let norm = normalize(&s).unwrap();
        let mut best: f64 = 0.0;
        for i in 0..len {
            for j in 0..len {
                if j == i + 1 {
                    best = best.max((s[j] / s[0] - s[i] / s[0]).abs());
                }
            }
        }
        err = err.max((max_neighbor_diff(&norm).unwrap() - best).abs());
    }

    // Welch: reference values from an independent statistics package
    let w = welch_t_test(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
    err = err.max((w.t - -1.5491933384829668).abs()).max((w.df - 2.9411764705882346).abs()).max((w.p - 0.2208808404940958).abs());
    let (a, b) = ([0.91, 1.2, 0.75, 1.05, 0.88, 0.97], [0.41, 0.55, 0.38, 0.6, 0.47, 0.52, 0.33]);
    let w = welch_t_test(&a, &b).unwrap();
    err = err.max((w.t - 6.779016295200711).abs()).max((w.df - 8.209380348530809).abs()).max((w.p - 0.00012489239130203047).abs());
    for _ in 0..200 {
        let a: Vec<f64> = (0..rng.gen_range(2..15)).map(|_| rng.gen_range(0.0..3.0)).collect();
        let b: Vec<f64> = (0..rng.gen_range(2..15)).map(|_| rng.gen_range(0.5..2.0)).collect();
        let w = welch_t_test(&a, &b).unwrap();
        let (t, df, p) = brute_welch(&a, &b);
        err = err.max((w.t - t).abs() / t.abs().max(1.0)).max((w.df - df).abs() / df).max((w.p - p).abs());
    }

    // paired: d = [1, 1, 2], t = 4, df = 2
    let pt = paired_t_test(&[2.0, 4.0, 7.0], &[1.0, 3.0, 5.0]).unwrap();
    err = err.max((pt.t - 4.0).abs()).max((pt.df - 2.0).abs()).max((pt.p - 0.05719095841793663).abs());
    let degenerate = paired_t_test(&[2.0, 4.0, 6.0], &[1.0, 3.0, 5.0]).is_err() && paired_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).is_err();

    let ok = err <= 1e-10 && example && degenerate;
    verdict(9, ok, &format!("(max oracle deviation {err:.1e}; [1.0, 1.5, 2.1, 1.8] → {exact})"));
    assert!(ok);
}
