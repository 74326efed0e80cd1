use std::path::{Path, PathBuf};

use patternforge::io::{
    self, path_bundle, read_path_archive, read_schedule, read_sstar_target, read_state, read_step_function,
    read_values, schedule_json, sim_bundle, state_bundle, verify_bundle, Bundle,
};
use patternforge::mult_synth::{pre_approximate, synthesize_multiplicative};
use patternforge::parabolic::{
    lambda1, linearized_rate, solve_parabolic, staircase_track, ControlSchedule, Dwell, SimOptions, StaircaseOptions,
    DEFAULT_DT,
};
use patternforge::path_builder::{connect_states, path_to_zero, DEFAULT_STEPS};
use patternforge::phase_plane::{integrate_orbit_kind, InvariantRegion};
use patternforge::plot;
use patternforge::steady_synth::{synthesize_divergence, verify_steady_state};
use patternforge::{
    default_nonlinearity, l2_distance, Grid, Kind, Nonlinearity, PhasePoint, PiecewiseProfile, SteadyState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::args::{
    EigenArgs, Globals, KindArg, PathArgs, PhaseArgs, SimulateArgs, StaircaseArgs, SynthDivArgs, SynthMultArgs,
    VerifyArgs,
};
use crate::CliError;

type Res = Result<Value, CliError>;

pub struct Ctx {
    pub globals: Globals,
    pub command: &'static str,
    pub nl: Nonlinearity,
}

impl Ctx {
    pub fn new(globals: Globals, command: &'static str) -> Self {
        Ctx { globals, command, nl: default_nonlinearity() }
    }

    fn out_dir(&self) -> PathBuf {
        match &self.globals.out {
            Some(d) => d.clone(),
            None => io::output_root(Path::new("patternforge-out")).join(self.command),
        }
    }

    fn write(&self, bundle: &Bundle) -> Result<PathBuf, CliError> {
        let dir = self.out_dir();
        bundle.write(&dir)?;
        Ok(dir)
    }

    fn figure(&self, dir: &Path, name: &str, svg: String) -> Result<(), CliError> {
        if self.globals.plot {
            io::write_text(&dir.join(name), &svg)?;
        }
        Ok(())
    }
}

fn required<T>(v: Option<T>, flag: &'static str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::usage(format!("missing required --{flag}"), Some(flag)))
}

fn check(ok: bool, flag: &'static str, what: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::usage(format!("--{flag} {what}"), Some(flag)))
    }
}

fn check_grid(n: usize) -> Result<(), CliError> {
    check((3..=1 << 22).contains(&n), "grid", "must lie in [3, 4194304]")
}

fn check_eps(eps: f64) -> Result<(), CliError> {
    check(eps > 0.0 && eps <= 1.0, "eps", "must lie in (0, 1]")
}

fn check_dt(dt: f64) -> Result<(), CliError> {
    check(dt > 0.0 && dt <= 0.25, "dt", "must lie in (0, 0.25]")
}

fn check_snapshots(s: f64) -> Result<(), CliError> {
    check(s >= 0.0 && s.is_finite(), "snapshots", "must be a finite cadence >= 0")
}

pub fn phase(ctx: &Ctx, a: &PhaseArgs) -> Res {
    let mu = a.mu.unwrap_or(1.0);
    let kind = a.kind.unwrap_or(KindArg::Div);
    let (m, mx) = (a.m.unwrap_or(0.5), a.mx.unwrap_or(0.0));
    let length = a.length.unwrap_or(10.0);
    let tol = a.tol.unwrap_or(1e-10);
    check(mu > 0.0 && mu.is_finite(), "mu", "must be positive")?;
    check(m.abs() <= 1.0, "m", "must lie in [-1, 1]")?;
    check(mx.is_finite(), "mx", "must be finite")?;
    check(length > 0.0 && length.is_finite(), "length", "must be positive")?;
    check(tol > 0.0 && tol < 1e-2, "tol", "must lie in (0, 1e-2)")?;

    let profile = PiecewiseProfile::constant(0.0, length, mu)?;
    let orbit = integrate_orbit_kind(PhasePoint::new(m, mx), kind.into(), &profile, (0.0, length), tol, &ctx.nl)?;
    // multiplicative orbits with ξ live in the region of μ = 1/ξ
    let region_mu = if kind == KindArg::Div { mu } else { 1.0 / mu };
    let inside = InvariantRegion::new(region_mu)?.contains(PhasePoint::new(m, mx), &ctx.nl);

    let mut csv = String::from("x,m,m_x,E\n");
    for ((x, p), e) in orbit.xs.iter().zip(&orbit.points).zip(&orbit.energies) {
        csv.push_str(&format!("{},{},{},{}\n", io::fmt_f64(*x), io::fmt_f64(p.m), io::fmt_f64(p.mx), io::fmt_f64(*e)));
    }
    let mut b = Bundle::new("phase", a)?;
    b.add("orbit.csv", csv);
    let dir = ctx.write(&b)?;
    let pts: Vec<(f64, f64)> = orbit.points.iter().map(|p| (p.m, p.mx)).collect();
    ctx.figure(&dir, "phase.svg", plot::phase_portrait(&[pts], region_mu, &ctx.nl, "phase portrait"))?;
    Ok(json!({
        "out": dir,
        "points": orbit.xs.len(),
        "energy_drift": orbit.energy_drift,
        "inside_invariant_region": inside,
    }))
}

pub fn synthesize_div(ctx: &Ctx, a: &SynthDivArgs) -> Res {
    let path = required(a.target.clone(), "target")?;
    let eps = a.eps.unwrap_or(0.1);
    let n = a.grid.unwrap_or(1025);
    check_eps(eps)?;
    check_grid(n)?;
    let target = read_sstar_target(&path)?;
    let grid = Grid::unit(n)?;
    let syn = synthesize_divergence(&target, eps, &grid, &ctx.nl)?;
    let sampled = target.sample(&grid);
    let l2_error = l2_distance(&grid, &syn.state.values, &sampled)?;
    let report = json!({
        "eps": eps,
        "l2_error": l2_error,
        "error_bound": syn.error_bound,
        "delta": syn.delta,
        "max_junction_residual": syn.max_junction_residual(),
        "junction_residuals": syn.junction_residuals,
        "junction_shifts": syn.junction_shifts,
        "mu_min": syn.state.profile.min_value(),
        "mu_max": syn.state.profile.max_value(),
        "cells": syn.state.profile.len(),
    });
    let mut b = state_bundle(&syn.state, "synthesize-div", a)?;
    b.add_json("report.json", &report)?;
    let dir = ctx.write(&b)?;
    ctx.figure(
        &dir,
        "state.svg",
        plot::states_plot(&grid, &[("m", &syn.state.values), ("target", &sampled)], "synthesized state"),
    )?;
    ctx.figure(&dir, "profile.svg", plot::profile_plot(&syn.state.profile, "diffusivity"))?;
    Ok(json!({ "out": dir, "l2_error": l2_error, "max_junction_residual": syn.max_junction_residual() }))
}

pub fn synthesize_mult(ctx: &Ctx, a: &SynthMultArgs) -> Res {
    let path = required(a.target.clone(), "target")?;
    let eps = a.eps.unwrap_or(0.1);
    check_eps(eps)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    // a sampled target is quantized within eps/2 first, the synthesis gets the rest
    let (grid, target, raw, synth_eps) = if is_json {
        let n = a.grid.unwrap_or(1025);
        check_grid(n)?;
        let target = read_step_function(&path)?;
        (Grid::new(target.lo(), target.hi(), n)?, target, None, eps)
    } else {
        let (grid, values) = read_values(&path)?;
        let target = pre_approximate(&values, &grid, eps)?;
        (grid, target, Some(values), eps / 2.0)
    };
    let syn = synthesize_multiplicative(&target, synth_eps, &grid, &ctx.nl)?;
    let raw_error = match &raw {
        Some(v) => Some(l2_distance(&grid, &syn.state.values, v)?),
        None => None,
    };
    let max_endpoint = syn.bridges.iter().map(|p| p.endpoint_error).fold(0.0, f64::max);
    let report = json!({
        "eps": eps,
        "l2_error": syn.l2_error,
        "l2_error_to_samples": raw_error,
        "pieces": target.len(),
        "delta": syn.delta,
        "boundary_xi": syn.boundary_xi,
        "bridges": syn.bridges.len(),
        "max_bridge_endpoint_error": max_endpoint,
        "xi_min": syn.state.profile.min_value(),
        "xi_max": syn.state.profile.max_value(),
    });
    let mut b = state_bundle(&syn.state, "synthesize-mult", a)?;
    b.add_json("report.json", &report)?;
    b.add_json("switch_plans.json", &syn.bridges)?;
    let dir = ctx.write(&b)?;
    let sampled = target.sample(&grid);
    ctx.figure(
        &dir,
        "state.svg",
        plot::states_plot(&grid, &[("m", &syn.state.values), ("target", &sampled)], "synthesized state"),
    )?;
    ctx.figure(&dir, "profile.svg", plot::profile_plot(&syn.state.profile, "xi"))?;
    Ok(json!({ "out": dir, "l2_error": syn.l2_error, "l2_error_to_samples": raw_error }))
}

pub fn path(ctx: &Ctx, a: &PathArgs) -> Res {
    let from = read_state(&required(a.from.clone(), "from")?)?;
    let steps = a.steps.unwrap_or(DEFAULT_STEPS);
    check((1..=100_000).contains(&steps), "steps", "must lie in [1, 100000]")?;
    let path = match &a.to {
        Some(p) => connect_states(&from, &read_state(p)?, steps, &ctx.nl)?,
        None => path_to_zero(&from, steps, &ctx.nl)?,
    };
    let b = path_bundle(&path, a)?;
    let dir = ctx.write(&b)?;
    if ctx.globals.plot {
        let stride = (path.len() / 6).max(1);
        let picks: Vec<usize> = (0..path.len()).step_by(stride).chain([path.len() - 1]).collect();
        let labels: Vec<String> = picks.iter().map(|&j| format!("s = {:.2}", path.params[j])).collect();
        let series: Vec<(&str, &[f64])> =
            picks.iter().zip(&labels).map(|(&j, l)| (l.as_str(), path.states[j].values.as_slice())).collect();
        ctx.figure(&dir, "filmstrip.svg", plot::states_plot(&from.grid, &series, "path members"))?;
    }
    Ok(json!({ "out": dir, "members": path.len(), "continuity_modulus": path.continuity_modulus() }))
}

/// Smooth random data on `grid`: a line between random boundary values plus
/// a few sine modes, clipped to `[-1, 1]`.
fn random_initial(seed: u64, grid: &Grid) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l, r) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    let amps: Vec<f64> = (1..=4).map(|k| rng.gen_range(-0.4..0.4) / k as f64).collect();
    grid.sample(|x| {
        let s = (x - grid.lo) / (grid.hi - grid.lo);
        let modes: f64 =
            amps.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::PI * s).sin()).sum();
        (l + (r - l) * s + modes).clamp(-1.0, 1.0)
    })
}

pub fn simulate(ctx: &Ctx, a: &SimulateArgs) -> Res {
    let dt = a.dt.unwrap_or(DEFAULT_DT);
    let snapshots = a.snapshots.unwrap_or(0.05);
    check_dt(dt)?;
    check_snapshots(snapshots)?;
    let sched = match (&a.schedule, &a.hold) {
        (Some(p), None) => read_schedule(p)?,
        (None, Some(p)) => {
            let duration = a.duration.unwrap_or(1.0);
            check(duration > 0.0 && duration.is_finite(), "duration", "must be positive")?;
            ControlSchedule::frozen(&read_state(p)?, duration)?
        }
        (None, None) => return Err(CliError::usage("need --schedule or --hold", Some("schedule"))),
        (Some(_), Some(_)) => return Err(CliError::usage("--schedule and --hold exclude each other", Some("hold"))),
    };
    let (grid, m0) = match &a.initial {
        Some(p) => read_values(p)?,
        None => {
            let n = a.grid.unwrap_or(257);
            check_grid(n)?;
            let grid = Grid::unit(n)?;
            (grid, random_initial(a.seed.unwrap_or(0), &grid))
        }
    };
    let sim = solve_parabolic(&m0, &sched, &grid, &SimOptions { dt, snapshot_every: snapshots }, &ctx.nl)?;
    let b = sim_bundle(&sim, Some(&sched), "simulate", a)?;
    let dir = ctx.write(&b)?;
    ctx.figure(&dir, "heatmap.svg", plot::heatmap(&grid, &sim.times, &sim.snapshots, "m(x, t)"))?;
    Ok(json!({
        "out": dir,
        "final_time": sim.final_time,
        "steps": sim.steps,
        "constraint_violation": sim.constraint_violation,
        "final_l2_norm": sim.decay_log.last().map(|d| d.1),
    }))
}

fn parse_dwell(s: Option<&str>) -> Result<Dwell, CliError> {
    match s {
        None | Some("adaptive") => Ok(Dwell::default()),
        Some(v) => match v.parse::<f64>() {
            Ok(d) if d > 0.0 && d.is_finite() => Ok(Dwell::Fixed(d)),
            _ => {
                Err(CliError::usage(format!("--dwell must be `adaptive` or a positive time, got `{v}`"), Some("dwell")))
            }
        },
    }
}

pub fn staircase(ctx: &Ctx, a: &StaircaseArgs) -> Res {
    let archive = required(a.path.clone(), "path")?;
    let dwell = parse_dwell(a.dwell.as_deref())?;
    let dt = a.dt.unwrap_or(DEFAULT_DT);
    let snapshots = a.snapshots.unwrap_or(0.5);
    check_dt(dt)?;
    check_snapshots(snapshots)?;
    let path = read_path_archive(&archive)?;
    let m0 = match &a.initial {
        Some(p) => {
            let (grid, v) = read_values(p)?;
            if grid != path.first().grid {
                return Err(patternforge::Error::GridMismatch(grid.n, path.first().grid.n).into());
            }
            v
        }
        None => path.first().values.clone(),
    };
    let mut opts = StaircaseOptions { dwell, ..StaircaseOptions::default() };
    opts.sim = SimOptions { dt, snapshot_every: snapshots };
    if a.no_feedback {
        opts.feedback = None;
    }
    let run = staircase_track(&m0, &path, &opts, &ctx.nl)?;
    let report = json!({
        "final_error": run.final_error,
        "nearest_member": run.nearest_member,
        "step_errors": run.step_errors,
        "constraint_violation": run.sim.constraint_violation,
    });
    let mut b = sim_bundle(&run.sim, Some(&run.applied), "staircase", a)?;
    b.add("nominal_schedule.json", schedule_json(&run.schedule)? + "\n");
    b.add_json("report.json", &report)?;
    let dir = ctx.write(&b)?;
    let grid = run.sim.grid;
    ctx.figure(&dir, "heatmap.svg", plot::heatmap(&grid, &run.sim.times, &run.sim.snapshots, "m(x, t)"))?;
    Ok(json!({
        "out": dir,
        "final_error": run.final_error,
        "final_time": run.sim.final_time,
        "constraint_violation": run.sim.constraint_violation,
    }))
}

pub fn eigen(ctx: &Ctx, a: &EigenArgs) -> Res {
    match (&a.state, a.mu) {
        (Some(p), _) => {
            let state = read_state(p)?;
            let rate = linearized_rate(&state, &ctx.nl)?;
            Ok(json!({ "lambda1": rate, "grid": state.grid.n, "kind": kind_name(state.kind) }))
        }
        (None, mu) => {
            let mu = mu.unwrap_or(1.0);
            let n = a.grid.unwrap_or(4096);
            check(mu > 0.0 && mu.is_finite(), "mu", "must be positive")?;
            check_grid(n)?;
            let grid = Grid::unit(n)?;
            let lam = lambda1(&PiecewiseProfile::constant(0.0, 1.0, mu)?, &ctx.nl, &grid)?;
            Ok(json!({ "lambda1": lam, "grid": n, "mu": mu }))
        }
    }
}

fn kind_name(k: Kind) -> &'static str {
    match k {
        Kind::Divergence => "div",
        Kind::Multiplicative => "mult",
    }
}

pub fn verify(ctx: &Ctx, a: &VerifyArgs) -> Res {
    if a.state.is_none() && a.bundle.is_none() {
        return Err(CliError::usage("need --state and/or --bundle", Some("state")));
    }
    let tol = a.tol.unwrap_or(1e-3);
    check(tol > 0.0, "tol", "must be positive")?;
    let mut out = json!({});
    let mut failures = Vec::new();
    if let Some(p) = &a.state {
        let state: SteadyState = read_state(p)?;
        let residual = verify_steady_state(&state, &ctx.nl);
        let valid = residual <= tol && state.max_abs() <= 1.0;
        if !valid {
            failures.push(format!("state residual {residual:.3e} exceeds tolerance {tol:.1e}"));
        }
        out["state"] = json!({ "residual": residual, "tol": tol, "max_abs": state.max_abs(), "valid": valid });
    }
    if let Some(d) = &a.bundle {
        let bad = verify_bundle(d)?;
        if !bad.is_empty() {
            failures.push(format!("checksum mismatch: {}", bad.join(", ")));
        }
        out["bundle"] = json!({ "mismatched": bad });
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(CliError::Check { message: failures.join("; "), report: out })
    }
}
