//! Acceptance criteria, one PASS/FAIL line each. Run with `cargo test --test acceptance`.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use patternforge::mult_synth::{connect_phase_points, simulate_plan, synthesize_multiplicative};
use patternforge::parabolic::{
    control_to_target, lambda1, solve_parabolic, stabilize_to_zero, staircase_track, ControlOptions, ControlSchedule,
    SimOptions, StaircaseOptions,
};
use patternforge::path_builder::connect_states;
use patternforge::phase_plane::{energy, flow, half_period, sample_state, InvariantRegion};
use patternforge::steady_synth::{finger_pattern, synthesize_divergence, verify_steady_state};
use patternforge::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

fn sci(xs: &[f64]) -> String {
    format!("[{}]", xs.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", "))
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Classical RK4 for `m' = m_x`, `m_x' = -f(m)/μ`, stopped when `m_x`
/// changes sign; the crossing is located by cubic Hermite interpolation.
fn rk4_return_abscissa(extremum: f64, mu: f64, h: f64) -> f64 {
    let f = |m: f64| m * (1.0 - m * m);
    let rhs = |y: [f64; 2]| [y[1], -f(y[0]) / mu];
    let mut y = [extremum, 0.0];
    let mut x = 0.0;
    // leave the start point before watching for the sign change
    let dir = -extremum.signum();
    loop {
        let k1 = rhs(y);
        let k2 = rhs([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = rhs([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = rhs([y[0] + h * k3[0], y[1] + h * k3[1]]);
        let next = [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        if x > 0.0 && next[1] * dir < 0.0 {
            // m_x along the step: Hermite cubic with derivatives -f/μ
            let (p0, p1) = (y[1], next[1]);
            let (d0, d1) = (-f(y[0]) / mu * h, -f(next[0]) / mu * h);
            let cubic = |s: f64| {
                let (s2, s3) = (s * s, s * s * s);
                (2.0 * s3 - 3.0 * s2 + 1.0) * p0
                    + (s3 - 2.0 * s2 + s) * d0
                    + (-2.0 * s3 + 3.0 * s2) * p1
                    + (s3 - s2) * d1
            };
            let (mut a, mut b) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if cubic(mid) * p0 > 0.0 {
                    a = mid
                } else {
                    b = mid
                }
            }
            return x + 0.5 * (a + b) * h;
        }
        y = next;
        x += h;
    }
}

/// `2n` alternating levels with `|λ| ∈ [0.2, 0.8]`; within each pair the
/// lengths are proportional to `1/|f(λ)|`, pair shares are random.
fn random_sstar(rng: &mut ChaCha8Rng, n: usize) -> SStarTarget {
    let nl = default_nonlinearity();
    let first = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let levels: Vec<f64> =
        (0..2 * n).map(|i| first * if i % 2 == 0 { 1.0 } else { -1.0 } * rng.gen_range(0.2..0.8)).collect();
    // equal L_i |f(λ_i)| at every junction
    let weights: Vec<f64> = levels.iter().map(|&l| 1.0 / nl.f(l).abs()).collect();
    let total: f64 = weights.iter().sum();
    let lengths: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut bps = vec![0.0];
    let mut acc = 0.0;
    for l in &lengths[..2 * n - 1] {
        acc += l;
        bps.push(acc);
    }
    bps.push(1.0);
    SStarTarget::new(levels, bps).unwrap()
}

fn c1_energy() -> Outcome {
    let nl = default_nonlinearity();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mu = rng.gen_range(0.05..2.0);
        let region = InvariantRegion::new(mu).unwrap();
        let m: f64 = rng.gen_range(-0.95..0.95);
        let mx = rng.gen_range(-0.95..0.95) * region.boundary_slope(m, &nl);
        let length = rng.gen_range(0.5..5.0);
        let profile = PiecewiseProfile::constant(0.0, length, mu).unwrap();
        let fl = flow(&nl, Kind::Divergence, &profile, 0.0, [m, mu * mx], length, &[], None, 1e-10).unwrap();
        let e0 = energy(PhasePoint::new(m, mx), mu, &nl).unwrap();
        let drift = fl
            .steps
            .iter()
            .map(|(_, s)| (energy(PhasePoint::new(s[0], s[1] / mu), mu, &nl).unwrap() - e0).abs())
            .fold(0.0, f64::max);
        worst = worst.max(drift / length);
    }
    check(worst <= 1e-8, format!("max energy drift per unit length {worst:.3e}"))
}

fn c2_standing_wave() -> Outcome {
    let nl = default_nonlinearity();
    let profile = PiecewiseProfile::constant(0.0, 3.0, 0.5).unwrap();
    let xs: Vec<f64> = (0..=300).map(|i| i as f64 * 0.01).collect();
    // m = tanh(x): m(0) = 0, μ m_x(0) = 1/2
    let fl = flow(&nl, Kind::Divergence, &profile, 0.0, [0.0, 0.5], 3.0, &xs, None, 1e-13).unwrap();
    let err = fl.samples.iter().map(|(x, s)| (s[0] - x.tanh()).abs()).fold(0.0, f64::max);
    check(err <= 1e-6 && fl.samples.len() == xs.len(), format!("sup |m - tanh| = {err:.3e}"))
}

fn c3_periods() -> Outcome {
    let nl = default_nonlinearity();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let ext = rng.gen_range(0.05..0.95) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let mu = rng.gen_range(0.01..2.0);
        let quad = half_period(ext, mu, &nl).unwrap();
        let direct = rk4_return_abscissa(ext, mu, 2e-4 * mu.sqrt());
        worst = worst.max((quad - direct).abs() / direct);
    }
    let small = half_period(1e-3, 0.3, &nl).unwrap() / (PI * 0.3f64.sqrt());
    let scaling = half_period(0.6, 0.8, &nl).unwrap() / half_period(0.6, 0.2, &nl).unwrap();
    check(
        worst <= 1e-4 && (small - 1.0).abs() <= 0.01 && (scaling - 2.0).abs() <= 1e-8,
        format!("max rel diff {worst:.2e}; small-amplitude ratio {small:.6}; √μ ratio {scaling:.12}"),
    )
}

fn c4_divergence_synthesis() -> Outcome {
    let nl = default_nonlinearity();
    let grid = Grid::unit(2049).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_ratio, mut worst_res): (f64, f64) = (0.0, 0.0);
    let mut bad = Vec::new();
    for i in 0..50 {
        let n = rng.gen_range(1..=3);
        let target = random_sstar(&mut rng, n);
        let eps = if i % 2 == 0 { 0.1 } else { 0.05 };
        match synthesize_divergence(&target, eps, &grid, &nl) {
            Ok(syn) => {
                let err = l2_distance(&grid, &syn.state.values, &target.sample(&grid)).unwrap();
                worst_ratio = worst_ratio.max(err / eps);
                worst_res = worst_res.max(syn.max_junction_residual());
                if syn.state.max_abs() > 1.0 {
                    bad.push(format!("target {i} leaves [-1, 1]"));
                }
            }
            Err(e) => bad.push(format!("target {i}: {e}")),
        }
    }
    let mut rejected = 0;
    for _ in 0..10 {
        let n = rng.gen_range(1..=3);
        let t = random_sstar(&mut rng, n);
        // stretch the first segment so the momentum restriction fails
        let mut bps = t.breakpoints.clone();
        bps[1] *= 1.5;
        let broken = SStarTarget::new(t.levels.clone(), bps).unwrap();
        let invalid = !validate_sstar(&broken, &nl).unwrap().valid;
        if invalid && synthesize_divergence(&broken, 0.1, &grid, &nl).is_err() {
            rejected += 1;
        }
    }
    check(
        bad.is_empty() && worst_ratio <= 1.0 && worst_res <= 1e-9 && rejected == 10,
        format!(
            "max error/eps {worst_ratio:.3}, max junction residual {worst_res:.2e}, rejected {rejected}/10 {bad:?}"
        ),
    )
}

fn c5_multiplicative() -> Outcome {
    let nl = default_nonlinearity();
    let grid = Grid::unit(2049).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut not_sstar = 0;
    let mut bad = Vec::new();
    for i in 0..30 {
        let p = rng.gen_range(1..=5);
        // pieces no shorter than 0.05
        let raw: Vec<f64> = (0..p).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut bps = vec![0.0];
        let mut acc = 0.0;
        for r in &raw[..p - 1] {
            acc += 0.05 + (1.0 - 0.05 * p as f64) * r / total;
            bps.push(acc);
        }
        bps.push(1.0);
        let values: Vec<f64> = (0..p).map(|_| rng.gen_range(-0.9..0.9)).collect();
        if let Ok(t) = SStarTarget::new(values.clone(), bps.clone()) {
            if !validate_sstar(&t, &nl).map(|r| r.valid).unwrap_or(false) {
                not_sstar += 1;
            }
        } else {
            not_sstar += 1;
        }
        let target = StepFunction::new(bps, values).unwrap();
        match synthesize_multiplicative(&target, 0.1, &grid, &nl) {
            Ok(syn) => worst = worst.max(l2_distance(&grid, &syn.state.values, &target.sample(&grid)).unwrap()),
            Err(e) => bad.push(format!("target {i}: {e}")),
        }
    }
    let mut plan_err: f64 = 0.0;
    let mut plan_max: f64 = 0.0;
    for i in 0..50 {
        let mut point = || loop {
            let q = PhasePoint::new(rng.gen_range(-0.9..0.9), rng.gen_range(-1.0..1.0));
            if q.m.abs() + q.mx.abs() > 0.05 {
                return q;
            }
        };
        let (a, b) = (point(), point());
        let length = rng.gen_range(0.1..2.0);
        match connect_phase_points(a, b, length, &nl).and_then(|plan| simulate_plan(&plan, &nl)) {
            Ok((end, max_abs)) => {
                plan_err = plan_err.max((end.m - b.m).abs().max((end.mx - b.mx).abs()));
                plan_max = plan_max.max(max_abs);
            }
            Err(e) => bad.push(format!("plan {i}: {e}")),
        }
    }
    check(
        bad.is_empty() && worst <= 0.1 && not_sstar > 0 && plan_err <= 1e-8 && plan_max < 1.0,
        format!(
            "max L² error {worst:.4} ({not_sstar} targets outside S*), plan endpoint error {plan_err:.2e}, plan sup|m| {plan_max:.4} {bad:?}"
        ),
    )
}

fn c6_eigenvalue() -> Outcome {
    let nl = default_nonlinearity();
    let grid = Grid::unit(4097).unwrap();
    let mut worst: f64 = 0.0;
    for mu in [1.0, 10.0] {
        let l = lambda1(&PiecewiseProfile::constant(0.0, 1.0, mu).unwrap(), &nl, &grid).unwrap();
        let exact = mu * PI * PI - 2.0;
        worst = worst.max((l - exact).abs() / exact);
    }
    let g = Grid::unit(801).unwrap();
    let m0 = g.sample(|x| 0.7 * (PI * x).sin() + 0.25 * (4.0 * PI * x).sin());
    let mut rates = Vec::new();
    for mu in [5.0, 10.0] {
        let s = stabilize_to_zero(&m0, mu, 1e-6, &g, &nl).map_err(|e| e.to_string())?;
        rates.push((s.decay_rate.unwrap_or(0.0), s.lambda1));
    }
    check(
        worst <= 1e-4 && rates.iter().all(|(r, l)| *r >= 0.9 * l),
        format!("λ₁ rel error {worst:.2e}; (rate, λ₁) {rates:.3?}"),
    )
}

fn c7_constraints() -> Outcome {
    let nl = default_nonlinearity();
    let grid = Grid::unit(201).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let mut sched = ControlSchedule::default();
        for _ in 0..rng.gen_range(1..=4) {
            let cells = rng.gen_range(1..=4);
            let mut bps: Vec<f64> = (0..cells - 1).map(|_| rng.gen_range(0.05..0.95)).collect();
            bps.sort_by(f64::total_cmp);
            bps.insert(0, 0.0);
            bps.push(1.0);
            let coeffs: Vec<f64> = (0..cells).map(|_| 10f64.powf(rng.gen_range(-3.0..1.0))).collect();
            let kind = if rng.gen_bool(0.5) { Kind::Divergence } else { Kind::Multiplicative };
            let b = |r: &mut ChaCha8Rng| {
                if r.gen_bool(0.2) {
                    if r.gen_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    r.gen_range(-1.0..1.0)
                }
            };
            let boundary = (b(&mut rng), b(&mut rng));
            sched.push(rng.gen_range(0.05..1.0), kind, PiecewiseProfile::new(bps, coeffs).unwrap(), boundary).unwrap();
        }
        let m0: Vec<f64> = (0..grid.n)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    if rng.gen_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        let opts = SimOptions { dt: rng.gen_range(1e-3..0.25), snapshot_every: 0.0 };
        let r = solve_parabolic(&m0, &sched, &grid, &opts, &nl).unwrap();
        worst = worst.max(r.constraint_violation);
    }
    check(worst <= 1e-12, format!("max (|m| - 1)+ = {worst:.2e}"))
}

fn c8_fingers() -> Outcome {
    let nl = default_nonlinearity();
    let grid = Grid::unit(513).unwrap();
    let one = finger_pattern(1, 0.8, &grid, &nl).unwrap();
    let two = finger_pattern(2, 0.8, &grid, &nl).unwrap();
    let ratio = two.mu / one.mu;
    let path = connect_states(&one.state, &two.state, 40, &nl).map_err(|e| e.to_string())?;
    let r = staircase_track(&one.state.values, &path, &StaircaseOptions::default(), &nl).map_err(|e| e.to_string())?;
    let err = l2_distance(&grid, &r.sim.final_state, &two.state.values).unwrap();
    check(
        err <= 0.1 && r.sim.constraint_violation <= 1e-12 && (ratio - 0.25).abs() <= 1e-8,
        format!(
            "final L² error {err:.3e}, violation {:.1e}, μ ratio {ratio:.12}, {} members",
            r.sim.constraint_violation,
            path.len()
        ),
    )
}

fn c9_rehearsal() -> Outcome {
    let nl = default_nonlinearity();
    let grid = Grid::unit(1025).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let target = random_sstar(&mut rng, 2);
    let syn = synthesize_divergence(&target, 0.1, &grid, &nl).unwrap();
    let mut schedules = Vec::new();
    let mut errors = Vec::new();
    for _ in 0..3 {
        let coeffs: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.6..0.6)).collect();
        let shift = rng.gen_range(-0.3..0.3);
        let m0 = grid.sample(|x| {
            let s: f64 = coeffs.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * PI * x).sin()).sum();
            (s + shift).clamp(-1.0, 1.0)
        });
        let out =
            control_to_target(&m0, &syn.state, 0.1, &ControlOptions::default(), &nl).map_err(|e| e.to_string())?;
        errors.push(l2_distance(&grid, &out.sim.final_state, &syn.state.values).unwrap());
        schedules.push(out.staircase_schedule);
    }
    let same = schedules.windows(2).all(|w| w[0] == w[1]);
    check(
        same && errors.iter().all(|e| *e <= 0.1),
        format!(
            "final errors {}, identical staircase schedules: {same}, duration {:.3}",
            sci(&errors),
            schedules[0].end_time()
        ),
    )
}

fn c10_convergence() -> Outcome {
    let nl = default_nonlinearity();
    let finger = finger_pattern(1, 0.6, &Grid::unit(33).unwrap(), &nl).unwrap();
    let mu = finger.mu;
    let profile = PiecewiseProfile::constant(0.0, 1.0, mu).unwrap();
    let p0 = finger.state.start_flux;
    let run = |n: usize| {
        let g = Grid::unit(n).unwrap();
        let eq = sample_state(&nl, Kind::Divergence, &profile, &g, 0.0, p0, 1e-12).unwrap();
        let m0: Vec<f64> = eq.values.iter().zip(g.points()).map(|(v, x)| v + 0.1 * (2.0 * PI * x).sin()).collect();
        let mut sched = ControlSchedule::default();
        sched.push(0.25, Kind::Divergence, profile.clone(), (0.0, 0.0)).unwrap();
        solve_parabolic(&m0, &sched, &g, &SimOptions { dt: 1e-3, snapshot_every: 0.0 }, &nl).unwrap().final_state
    };
    let sizes = [33usize, 65, 129];
    let reference = run(4 * (sizes[2] - 1) + 1);
    let errs: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            let stride = (reference.len() - 1) / (n - 1);
            let u = run(n);
            let d: Vec<f64> = (0..n).map(|i| u[i] - reference[i * stride]).collect();
            l2_norm(&Grid::unit(n).unwrap(), &d).unwrap()
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let res: Vec<f64> = [257usize, 513]
        .iter()
        .map(|&n| {
            let g = Grid::unit(n).unwrap();
            verify_steady_state(&sample_state(&nl, Kind::Divergence, &profile, &g, 0.0, p0, 1e-13).unwrap(), &nl)
        })
        .collect();
    let ratio = res[0] / res[1];
    check(
        orders.iter().all(|o| (1.8..=2.2).contains(o)) && (3.2..=4.8).contains(&ratio),
        format!("errors {}, observed orders {orders:.3?}, residual ratio {ratio:.3}", sci(&errs)),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome, Duration);
    let criteria: [Criterion; 10] = [
        ("1 energy conservation", c1_energy, Duration::from_secs(10)),
        ("2 standing-wave oracle", c2_standing_wave, Duration::from_secs(1)),
        ("3 period oracles", c3_periods, Duration::from_secs(30)),
        ("4 divergence synthesis", c4_divergence_synthesis, Duration::from_secs(120)),
        ("5 multiplicative density", c5_multiplicative, Duration::from_secs(120)),
        ("6 eigenvalue and decay", c6_eigenvalue, Duration::from_secs(30)),
        ("7 constraint preservation", c7_constraints, Duration::from_secs(60)),
        ("8 finger end-to-end", c8_fingers, Duration::from_secs(180)),
        ("9 control rehearsal", c9_rehearsal, Duration::from_secs(300)),
        ("10 discretization convergence", c10_convergence, Duration::from_secs(60)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let (tag, detail) = match outcome {
            Ok(d) if elapsed <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took {elapsed:.1?} over budget {budget:?}")),
            Err(d) => ("FAIL", d),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag} criterion {name}: {detail} [{elapsed:.2?}]");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
