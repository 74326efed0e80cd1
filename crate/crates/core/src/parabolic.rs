//! Constrained parabolic dynamics `m_t = (μ m_x)_x + f(m)` (or
//! `m_t = m_xx + ξ f(m)`) with Dirichlet boundary controls.
//!
//! Time stepping is IMEX Euler: an explicit reaction step, sub-cycled per
//! node so that `τ b lip ≤ 1/2`, followed by an implicit diffusion step with
//! harmonic face coefficients. Both are monotone and fix `±1`, so values stay
//! in `[-1, 1]`; the fixed points of a frozen step are exactly the discrete
//! equilibria.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{l2_distance, l2_norm, Grid, Kind, PiecewiseProfile, SteadyState, SteadyStatePath};
use crate::nonlinearity::Nonlinearity;
use crate::path_builder::{path_to_zero, DEFAULT_STEPS};

/// Default time step.
pub const DEFAULT_DT: f64 = 1e-3;

/// Controls held constant on `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlInterval {
    pub start: f64,
    pub end: f64,
    pub kind: Kind,
    pub profile: PiecewiseProfile,
    pub boundary: (f64, f64),
}

/// Piecewise-constant-in-time controls `(μ(x, t) or ξ(x, t), a₋(t), a₊(t))`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    intervals: Vec<ControlInterval>,
}

impl ControlSchedule {
    pub fn new(intervals: Vec<ControlInterval>) -> Result<Self> {
        let mut s = ControlSchedule::default();
        let mut t = 0.0;
        for iv in intervals {
            if (iv.start - t).abs() > 1e-12 * t.max(1.0) {
                return Err(Error::Malformed(format!("interval starts at {} but previous ends at {t}", iv.start)));
            }
            s.push(iv.end - iv.start, iv.kind, iv.profile, iv.boundary)?;
            t = iv.end;
        }
        Ok(s)
    }

    /// Holds the controls realizing `state` for `duration`.
    pub fn frozen(state: &SteadyState, duration: f64) -> Result<Self> {
        let mut s = ControlSchedule::default();
        s.push(duration, state.kind, state.profile.clone(), state.boundary)?;
        Ok(s)
    }

    pub fn push(&mut self, duration: f64, kind: Kind, profile: PiecewiseProfile, boundary: (f64, f64)) -> Result<()> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::param("duration", format!("must be positive, got {duration}")));
        }
        if !(boundary.0.abs() <= 1.0 && boundary.1.abs() <= 1.0) {
            return Err(Error::param("boundary", format!("{boundary:?} outside [-1, 1]")));
        }
        let start = self.end_time();
        self.intervals.push(ControlInterval { start, end: start + duration, kind, profile, boundary });
        Ok(())
    }

    /// Appends `other`, shifted to start at the current end time.
    pub fn append(&mut self, other: &ControlSchedule) -> Result<()> {
        for iv in &other.intervals {
            self.push(iv.end - iv.start, iv.kind, iv.profile.clone(), iv.boundary)?;
        }
        Ok(())
    }

    pub fn intervals(&self) -> &[ControlInterval] {
        &self.intervals
    }

    pub fn end_time(&self) -> f64 {
        self.intervals.last().map_or(0.0, |iv| iv.end)
    }

    pub fn knots(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.intervals.iter().map(|iv| iv.end)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimOptions {
    /// Upper bound on the time step; each interval uses an equal split.
    pub dt: f64,
    /// Snapshot cadence; `0` keeps only the initial and final states.
    pub snapshot_every: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { dt: DEFAULT_DT, snapshot_every: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    /// Max over space-time of `(|m| - 1)₊`; never clipped away.
    pub constraint_violation: f64,
    pub final_state: Vec<f64>,
    pub final_time: f64,
    /// `(t, ‖m(t)‖_{L²})` after every step.
    pub decay_log: Vec<(f64, f64)>,
    pub steps: usize,
}

impl SimResult {
    fn start(grid: Grid, m0: &[f64]) -> Result<Self> {
        Ok(SimResult {
            grid,
            times: vec![0.0],
            snapshots: vec![m0.to_vec()],
            constraint_violation: violation(m0),
            final_state: m0.to_vec(),
            final_time: 0.0,
            decay_log: vec![(0.0, l2_norm(&grid, m0)?)],
            steps: 0,
        })
    }

    fn finish(&mut self) {
        if self.times.last() != Some(&self.final_time) {
            self.times.push(self.final_time);
            self.snapshots.push(self.final_state.clone());
        }
    }

    /// Appends a continuation run, shifting its times.
    fn extend(&mut self, next: SimResult) {
        let t0 = self.final_time;
        for (t, s) in next.times.into_iter().zip(next.snapshots).skip(1) {
            self.times.push(t0 + t);
            self.snapshots.push(s);
        }
        self.decay_log.extend(next.decay_log.into_iter().skip(1).map(|(t, n)| (t0 + t, n)));
        self.constraint_violation = self.constraint_violation.max(next.constraint_violation);
        self.final_state = next.final_state;
        self.final_time = t0 + next.final_time;
        self.steps += next.steps;
    }
}

fn violation(m: &[f64]) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs() - 1.0))
}

/// One frozen-control IMEX step, factored once per interval.
struct Stepper {
    /// Thomas factorization of `I - τA` on interior nodes.
    lower: Vec<f64>,
    upper_prime: Vec<f64>,
    denom: Vec<f64>,
    left_coupling: f64,
    right_coupling: f64,
    /// Reaction coefficient and sub-steps per interior node.
    react: Vec<(f64, usize)>,
    boundary: (f64, f64),
    tau: f64,
}

impl Stepper {
    fn new(iv: &ControlInterval, grid: &Grid, tau: f64, nl: &Nonlinearity) -> Result<Self> {
        let n = grid.n;
        if n < 3 {
            return Err(Error::param("grid", "need at least one interior node"));
        }
        let h = grid.step();
        let faces: Vec<f64> = (0..n - 1)
            .map(|i| match iv.kind {
                Kind::Divergence => iv.profile.harmonic_average(grid.x(i), grid.x(i + 1)),
                Kind::Multiplicative => 1.0,
            })
            .collect();
        let r = tau / (h * h);
        let m = n - 2;
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        for k in 0..m {
            let (wl, wr) = (faces[k], faces[k + 1]);
            lower[k] = -r * wl;
            upper[k] = -r * wr;
            diag[k] = 1.0 + r * (wl + wr);
        }
        let mut upper_prime = vec![0.0; m];
        let mut denom = vec![0.0; m];
        for k in 0..m {
            let d = diag[k] - if k > 0 { lower[k] * upper_prime[k - 1] } else { 0.0 };
            denom[k] = d;
            upper_prime[k] = upper[k] / d;
        }
        let react = (1..n - 1)
            .map(|i| {
                let b = match iv.kind {
                    Kind::Divergence => 1.0,
                    Kind::Multiplicative => {
                        iv.profile.mean((grid.x(i) - 0.5 * h).max(grid.lo), (grid.x(i) + 0.5 * h).min(grid.hi))
                    }
                };
                let sub = (2.0 * tau * b * nl.lip()).ceil().max(1.0) as usize;
                (b, sub)
            })
            .collect();
        Ok(Stepper {
            lower,
            upper_prime,
            denom,
            left_coupling: r * faces[0],
            right_coupling: r * faces[n - 2],
            react,
            boundary: iv.boundary,
            tau,
        })
    }

    fn step(&self, m: &mut [f64], rhs: &mut [f64], nl: &Nonlinearity) {
        let n = m.len();
        for (k, &(b, sub)) in self.react.iter().enumerate() {
            let s = self.tau * b / sub as f64;
            let mut v = m[k + 1];
            for _ in 0..sub {
                v += s * nl.f(v);
            }
            rhs[k] = v;
        }
        let last = n - 3;
        rhs[0] += self.left_coupling * self.boundary.0;
        rhs[last] += self.right_coupling * self.boundary.1;
        // forward sweep in place, then back substitution
        rhs[0] /= self.denom[0];
        for k in 1..=last {
            rhs[k] = (rhs[k] - self.lower[k] * rhs[k - 1]) / self.denom[k];
        }
        for k in (0..last).rev() {
            rhs[k] -= self.upper_prime[k] * rhs[k + 1];
        }
        m[0] = self.boundary.0;
        m[n - 1] = self.boundary.1;
        m[1..n - 1].copy_from_slice(&rhs[..n - 2]);
    }
}

fn check_dt(dt: f64, nl: &Nonlinearity) -> Result<()> {
    let bound = 0.5 / nl.lip().max(f64::MIN_POSITIVE);
    if !(dt > 0.0 && dt <= bound) {
        return Err(Error::param("dt", format!("{dt} violates the invariance bound dt ≤ 1/(2 lip) = {bound}")));
    }
    Ok(())
}

fn check_initial(m0: &[f64], grid: &Grid) -> Result<()> {
    if m0.len() != grid.n {
        return Err(Error::GridMismatch(m0.len(), grid.n));
    }
    if let Some(v) = m0.iter().find(|v| !(v.abs() <= 1.0)) {
        return Err(Error::param("m0", format!("value {v} outside [-1, 1]")));
    }
    Ok(())
}

type StopFn<'a> = &'a dyn Fn(f64, &[f64]) -> bool;

/// Runs the schedule from `m0`. A `stop` predicate on `(t, m)` ends the run early.
fn run(
    m0: &[f64],
    sched: &ControlSchedule,
    grid: &Grid,
    opts: &SimOptions,
    nl: &Nonlinearity,
    stop: Option<StopFn<'_>>,
) -> Result<SimResult> {
    check_dt(opts.dt, nl)?;
    check_initial(m0, grid)?;
    let mut out = SimResult::start(*grid, m0)?;
    let mut m = m0.to_vec();
    let mut rhs = vec![0.0; grid.n - 2];
    let mut next_snap = opts.snapshot_every;
    'outer: for iv in sched.intervals() {
        let span = iv.end - iv.start;
        let count = (span / opts.dt).ceil().max(1.0) as usize;
        let tau = span / count as f64;
        let stepper = Stepper::new(iv, grid, tau, nl)?;
        for k in 1..=count {
            stepper.step(&mut m, &mut rhs, nl);
            let t = if k == count { iv.end } else { iv.start + k as f64 * tau };
            out.steps += 1;
            out.constraint_violation = out.constraint_violation.max(violation(&m));
            out.decay_log.push((t, l2_norm(grid, &m)?));
            if opts.snapshot_every > 0.0 && t >= next_snap - 1e-12 {
                out.times.push(t);
                out.snapshots.push(m.clone());
                while next_snap <= t + 1e-12 {
                    next_snap += opts.snapshot_every;
                }
            }
            out.final_time = t;
            if stop.is_some_and(|s| s(t, &m)) {
                break 'outer;
            }
        }
    }
    out.final_state = m;
    out.finish();
    Ok(out)
}

/// Simulates the controlled equation from `m0` under `sched`.
pub fn solve_parabolic(
    m0: &[f64],
    sched: &ControlSchedule,
    grid: &Grid,
    opts: &SimOptions,
    nl: &Nonlinearity,
) -> Result<SimResult> {
    run(m0, sched, grid, opts, nl, None)
}

/// Smallest eigenvalue and eigenvector of the symmetric tridiagonal matrix
/// `(diag, off)`.
pub fn smallest_eigenvalue(diag: &[f64], off: &[f64]) -> (f64, Vec<f64>) {
    eigenpair(diag, off, 0)
}

/// The `k`-th smallest eigenpair (from 0) of the symmetric tridiagonal matrix
/// `(diag, off)`: Sturm bisection, then inverse iteration and a Rayleigh
/// quotient. The eigenvector has unit Euclidean norm.
pub fn eigenpair(diag: &[f64], off: &[f64], k: usize) -> (f64, Vec<f64>) {
    let n = diag.len();
    let below = |x: f64| -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..n {
            let e2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
            q = diag[i] - x - if i > 0 { e2 / q } else { 0.0 };
            if q == 0.0 {
                q = -f64::EPSILON * (diag[i].abs() + x.abs() + 1.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    let radius = |i: usize| (if i > 0 { off[i - 1].abs() } else { 0.0 }) + (if i + 1 < n { off[i].abs() } else { 0.0 });
    let mut lo = (0..n).map(|i| diag[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..n).map(|i| diag[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    let scale = lo.abs().max(hi.abs()).max(1.0);
    while hi - lo > 1e-13 * scale {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if below(mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let sigma = lo - 1e-10 * scale;
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
    let mut lambda = 0.5 * (lo + hi);
    for _ in 0..4 {
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        for i in 0..n {
            let a = if i > 0 { off[i - 1] } else { 0.0 };
            let mut den = diag[i] - sigma - if i > 0 { a * cp[i - 1] } else { 0.0 };
            if den == 0.0 {
                den = f64::EPSILON * scale;
            }
            if i + 1 < n {
                cp[i] = off[i] / den;
            }
            dp[i] = (v[i] - if i > 0 { a * dp[i - 1] } else { 0.0 }) / den;
        }
        let mut w = vec![0.0; n];
        for i in (0..n).rev() {
            w[i] = dp[i] - if i + 1 < n { cp[i] * w[i + 1] } else { 0.0 };
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.into_iter().map(|x| x / norm).collect();
        lambda = (0..n)
            .map(|i| {
                let mut y = diag[i] * v[i];
                if i > 0 {
                    y += off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    y += off[i] * v[i + 1];
                }
                v[i] * y
            })
            .sum();
    }
    (lambda, v)
}

/// Discretized `-(c v')' - q v` on interior nodes with face coefficients `c`.
fn operator(faces: &[f64], potential: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let m = potential.len();
    let diag = (0..m).map(|k| (faces[k] + faces[k + 1]) / (h * h) - potential[k]).collect();
    let off = (0..m.saturating_sub(1)).map(|k| -faces[k + 1] / (h * h)).collect();
    (diag, off)
}

/// `λ₁(μ) = min (∫ μ |v'|² - ‖f'‖∞ v²) / ∫ v²` with Dirichlet conditions,
/// a lower bound on the decay rate of `m ≡ 0` under diffusivity `μ`.
pub fn lambda1(mu: &PiecewiseProfile, nl: &Nonlinearity, grid: &Grid) -> Result<f64> {
    if grid.n < 3 {
        return Err(Error::param("grid", "need at least one interior node"));
    }
    let faces: Vec<f64> = (0..grid.n - 1).map(|i| mu.harmonic_average(grid.x(i), grid.x(i + 1))).collect();
    let (diag, off) = operator(&faces, &vec![nl.lip(); grid.n - 2], grid.step());
    Ok(smallest_eigenvalue(&diag, &off).0)
}

/// Tridiagonal linearization about `state` on interior nodes, with the face
/// coefficients it was built from.
struct Linearization {
    faces: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
    h: f64,
}

impl Linearization {
    fn new(state: &SteadyState, nl: &Nonlinearity) -> Result<Self> {
        let g = &state.grid;
        if g.n < 3 {
            return Err(Error::param("grid", "need at least one interior node"));
        }
        let h = g.step();
        let (faces, potential): (Vec<f64>, Vec<f64>) = match state.kind {
            Kind::Divergence => (
                (0..g.n - 1).map(|i| state.profile.harmonic_average(g.x(i), g.x(i + 1))).collect(),
                (1..g.n - 1).map(|i| nl.fprime(state.values[i])).collect(),
            ),
            Kind::Multiplicative => (
                vec![1.0; g.n - 1],
                (1..g.n - 1)
                    .map(|i| {
                        let xi = state.profile.mean((g.x(i) - 0.5 * h).max(g.lo), (g.x(i) + 0.5 * h).min(g.hi));
                        xi * nl.fprime(state.values[i])
                    })
                    .collect(),
            ),
        };
        let (diag, off) = operator(&faces, &potential, h);
        Ok(Linearization { faces, diag, off, h })
    }
}

/// Smallest eigenvalue of the linearization about `state`
/// (`-(μ v')' - f'(m) v`, or `-v'' - ξ f'(m) v`); negative for unstable states.
pub fn linearized_rate(state: &SteadyState, nl: &Nonlinearity) -> Result<f64> {
    let lin = Linearization::new(state, nl)?;
    Ok(smallest_eigenvalue(&lin.diag, &lin.off).0)
}

#[derive(Debug, Clone, Serialize)]
pub struct Stabilization {
    pub sim: SimResult,
    pub t_reach: f64,
    pub lambda1: f64,
    /// Least-squares slope of `-ln ‖m‖` over the steps with `‖m‖ ≤ 0.1`.
    pub decay_rate: Option<f64>,
    pub mu: f64,
}

/// Least-squares slope of `ln ‖m‖` against `t` over entries with `0 < ‖m‖ ≤ cap`.
pub fn log_slope(log: &[(f64, f64)], cap: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = log.iter().filter(|(_, n)| *n > 0.0 && *n <= cap).map(|(t, n)| (*t, n.ln())).collect();
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mt, my) = (st / k, sy / k);
    let (num, den) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mt) * (p.1 - my), a.1 + (p.0 - mt).powi(2)));
    (den > 0.0).then(|| num / den)
}

/// Holds `μ ≡ mu_big`, `a ≡ 0` until `‖m‖_{L²} ≤ eta`.
///
/// The step is `min(1/(2 lip), 0.05/λ₁)` so that implicit damping does not
/// understate the decay rate.
pub fn stabilize_to_zero(m0: &[f64], mu_big: f64, eta: f64, grid: &Grid, nl: &Nonlinearity) -> Result<Stabilization> {
    check_initial(m0, grid)?;
    if !(eta > 0.0) {
        return Err(Error::param("eta", "must be positive"));
    }
    let flat = PiecewiseProfile::constant(grid.lo, grid.hi, mu_big)?;
    let lam = lambda1(&flat, nl, grid)?;
    if !(lam > 0.0) {
        return Err(Error::param("mu_big", format!("λ₁({mu_big}) = {lam} is not positive")));
    }
    let norm0 = l2_norm(grid, m0)?;
    let opts = SimOptions { dt: (0.5 / nl.lip()).min(0.05 / lam), snapshot_every: 0.0 };
    if norm0 <= eta {
        let sim = run(m0, &ControlSchedule::default(), grid, &opts, nl, None)?;
        return Ok(Stabilization { sim, t_reach: 0.0, lambda1: lam, decay_rate: None, mu: mu_big });
    }
    let horizon = 10.0f64.max(2.0 * (norm0 / eta).ln()) / lam;
    let mut sched = ControlSchedule::default();
    sched.push(horizon, Kind::Divergence, flat, (0.0, 0.0))?;
    let stop = |_t: f64, m: &[f64]| l2_norm(grid, m).is_ok_and(|n| n <= eta);
    let sim = run(m0, &sched, grid, &opts, nl, Some(&stop))?;
    let reached = sim.decay_log.last().map_or(f64::INFINITY, |(_, n)| *n);
    if reached > eta {
        return Err(Error::NoDecay(format!("‖m‖ = {reached:.3e} > {eta:.3e} after t = {horizon:.3e} (λ₁ = {lam:.4})")));
    }
    let decay_rate = log_slope(&sim.decay_log, 0.1).map(|s| -s);
    if let Some(rate) = decay_rate {
        if rate < 0.9 * lam {
            return Err(Error::NoDecay(format!("measured rate {rate:.4} below 0.9 λ₁ = {:.4}", 0.9 * lam)));
        }
    }
    Ok(Stabilization { t_reach: sim.final_time, sim, lambda1: lam, decay_rate, mu: mu_big })
}

/// Time spent on each path member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Dwell {
    Fixed(f64),
    /// `factor / max(|rate|, floor)` per member, capped at `max`, with `rate`
    /// the member's [`linearized_rate`].
    Adaptive {
        factor: f64,
        floor: f64,
        max: f64,
    },
}

impl Default for Dwell {
    fn default() -> Self {
        Dwell::Adaptive { factor: 5.0, floor: 0.2, max: 5.0 }
    }
}

impl Dwell {
    fn for_member(&self, state: &SteadyState, nl: &Nonlinearity) -> Result<f64> {
        match *self {
            Dwell::Fixed(d) if d > 0.0 => Ok(d),
            Dwell::Fixed(d) => Err(Error::param("dwell", format!("must be positive, got {d}"))),
            Dwell::Adaptive { factor, floor, max } => {
                let rate = linearized_rate(state, nl)?.abs().max(floor);
                Ok((factor / rate).min(max))
            }
        }
    }
}

/// Sampled-data boundary feedback used while holding a member whose
/// linearization has modes with rate below `threshold`.
///
/// Every `sample` time units the deviation from the member is projected on
/// those modes and the boundary values are offset by a discrete-time LQR law
/// for the sampled modal dynamics (unit state weight, `input_weight` on the
/// two boundary inputs). Offsets are clipped so that boundary values stay in
/// `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Feedback {
    pub sample: f64,
    pub threshold: f64,
    pub input_weight: f64,
    pub max_modes: usize,
}

impl Default for Feedback {
    fn default() -> Self {
        Feedback { sample: 0.05, threshold: 0.2, input_weight: 1e-2, max_modes: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StaircaseOptions {
    pub dwell: Dwell,
    /// `None` holds every member's controls unchanged.
    pub feedback: Option<Feedback>,
    pub sim: SimOptions,
}

impl Default for StaircaseOptions {
    fn default() -> Self {
        StaircaseOptions { dwell: Dwell::default(), feedback: Some(Feedback::default()), sim: SimOptions::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Staircase {
    pub sim: SimResult,
    /// Member controls and dwells; depends on the path and options only.
    pub schedule: ControlSchedule,
    /// What was actually applied (differs from `schedule` only where feedback acted).
    pub applied: ControlSchedule,
    /// Distance to member `j` at the end of its dwell (index 0: the start).
    pub step_errors: Vec<f64>,
    pub final_error: f64,
    /// Path member closest to the final state, and its distance.
    pub nearest_member: (usize, f64),
}

/// The staircase schedule for `path` (members 1.. each held for its dwell).
pub fn staircase_schedule(path: &SteadyStatePath, dwell: Dwell, nl: &Nonlinearity) -> Result<ControlSchedule> {
    let mut sched = ControlSchedule::default();
    for member in path.states.iter().skip(1) {
        sched.push(dwell.for_member(member, nl)?, member.kind, member.profile.clone(), member.boundary)?;
    }
    Ok(sched)
}

/// Controlled modes of one member and their discrete-time LQR gain.
struct ModeControl {
    modes: Vec<Vec<f64>>,
    gain: DMatrix<f64>,
}

impl ModeControl {
    fn new(member: &SteadyState, fb: &Feedback, tau: f64, nl: &Nonlinearity) -> Result<Self> {
        let lin = Linearization::new(member, nl)?;
        let last = lin.diag.len() - 1;
        let h2 = lin.h * lin.h;
        let mut modes = Vec::new();
        let mut growth = Vec::new();
        let mut inputs = Vec::new();
        for k in 0..fb.max_modes.min(lin.diag.len()) {
            let (lambda, v) = eigenpair(&lin.diag, &lin.off, k);
            if lambda >= fb.threshold {
                break;
            }
            let sigma = -lambda;
            let e = (sigma * tau).exp();
            let g = if (sigma * tau).abs() < 1e-8 { tau } else { (e - 1.0) / sigma };
            growth.push(e);
            inputs.push([g * v[0] * lin.faces[0] / h2, g * v[last] * lin.faces[last + 1] / h2]);
            modes.push(v);
        }
        let r = modes.len();
        if r == 0 {
            return Ok(ModeControl { modes, gain: DMatrix::zeros(2, 0) });
        }
        let a = DMatrix::from_diagonal(&DVector::from_vec(growth));
        let b = DMatrix::from_fn(r, 2, |i, j| inputs[i][j]);
        let q = DMatrix::<f64>::identity(r, r);
        let rw = DMatrix::<f64>::identity(2, 2) * fb.input_weight;
        let mut p = q.clone();
        let mut gain = DMatrix::zeros(2, r);
        for _ in 0..10_000 {
            let btp = b.transpose() * &p;
            let Some(inv) = (&rw + &btp * &b).try_inverse() else {
                return Err(Error::Infeasible("feedback Riccati iteration is singular".into()));
            };
            gain = inv * &btp * &a;
            let next = &q + a.transpose() * &p * (&a - &b * &gain);
            let change = (&next - &p).amax();
            p = next;
            if change <= 1e-12 * p.amax() {
                break;
            }
        }
        Ok(ModeControl { modes, gain })
    }

    /// Boundary offset for deviation `e` on interior nodes.
    fn correction(&self, e: &[f64]) -> [f64; 2] {
        let c = DVector::from_iterator(
            self.modes.len(),
            self.modes.iter().map(|v| v.iter().zip(e).map(|(a, b)| a * b).sum()),
        );
        let u = -&self.gain * c;
        [u[0], u[1]]
    }
}

/// Quasi-static tracking: member `j`'s controls are frozen for its dwell,
/// letting the state relax toward it, with optional boundary feedback on
/// members that have slow or unstable modes. Aborts with
/// [`Error::Diverged`] when the distance to the current member more than
/// doubles over a dwell and ends above `1e-2`.
pub fn staircase_track(
    m0: &[f64],
    path: &SteadyStatePath,
    opts: &StaircaseOptions,
    nl: &Nonlinearity,
) -> Result<Staircase> {
    let grid = path.first().grid;
    check_initial(m0, &grid)?;
    if !path.is_admissible() {
        return Err(Error::param("path", "members outside [-1, 1]"));
    }
    let schedule = staircase_schedule(path, opts.dwell, nl)?;
    let mut applied = ControlSchedule::default();
    let mut sim = run(m0, &ControlSchedule::default(), &grid, &opts.sim, nl, None)?;
    let mut step_errors = vec![l2_distance(&grid, m0, &path.first().values)?];
    for (j, iv) in schedule.intervals().iter().enumerate() {
        let member = &path.states[j + 1];
        let before = l2_distance(&grid, &sim.final_state, &member.values)?;
        let dwell = iv.end - iv.start;
        let control = match &opts.feedback {
            Some(fb) => {
                let tau = dwell / (dwell / fb.sample).ceil().max(1.0);
                Some((ModeControl::new(member, fb, tau, nl)?, fb)).filter(|(c, _)| !c.modes.is_empty())
            }
            None => None,
        };
        let mut pieces = Vec::new();
        match control {
            None => pieces.push((dwell, iv.boundary)),
            Some((ctrl, fb)) => {
                let count = (dwell / fb.sample).ceil().max(1.0) as usize;
                let tau = dwell / count as f64;
                for _ in 0..count {
                    let e: Vec<f64> = sim.final_state[1..grid.n - 1]
                        .iter()
                        .zip(&member.values[1..grid.n - 1])
                        .map(|(a, b)| a - b)
                        .collect();
                    let u = ctrl.correction(&e);
                    let a = ((iv.boundary.0 + u[0]).clamp(-1.0, 1.0), (iv.boundary.1 + u[1]).clamp(-1.0, 1.0));
                    let mut one = ControlSchedule::default();
                    one.push(tau, iv.kind, iv.profile.clone(), a)?;
                    sim.extend(run(&sim.final_state, &one, &grid, &opts.sim, nl, None)?);
                    pieces.push((tau, a));
                }
            }
        }
        if pieces.len() == 1 {
            let mut one = ControlSchedule::default();
            one.push(dwell, iv.kind, iv.profile.clone(), iv.boundary)?;
            sim.extend(run(&sim.final_state, &one, &grid, &opts.sim, nl, None)?);
        }
        for (d, a) in pieces {
            applied.push(d, iv.kind, iv.profile.clone(), a)?;
        }
        let after = l2_distance(&grid, &sim.final_state, &member.values)?;
        step_errors.push(after);
        if after > 2.0 * before && after > 1e-2 {
            return Err(Error::Diverged { step: j + 1, distance: after, start: before });
        }
    }
    sim.finish();
    let final_error = *step_errors.last().unwrap();
    let nearest_member = path
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| (i, l2_distance(&grid, &sim.final_state, &s.values).unwrap_or(f64::INFINITY)))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    Ok(Staircase { sim, schedule, applied, step_errors, final_error, nearest_member })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlOptions {
    pub mu_big: f64,
    pub path_steps: usize,
    pub staircase: StaircaseOptions,
}

impl Default for ControlOptions {
    fn default() -> Self {
        ControlOptions { mu_big: 10.0, path_steps: DEFAULT_STEPS, staircase: StaircaseOptions::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlOutcome {
    /// Everything applied: the stabilization interval, then the staircase.
    pub schedule: ControlSchedule,
    pub sim: SimResult,
    pub stabilization_time: f64,
    /// Nominal staircase schedule; a function of the target and options only.
    pub staircase_schedule: ControlSchedule,
    pub final_error: f64,
    pub nearest_member: (usize, f64),
}

/// Drives `m0` to within `eps` of `target`: stabilization to a neighbourhood
/// of zero (radius half the first path step), then the staircase along the
/// path from zero to `target`.
pub fn control_to_target(
    m0: &[f64],
    target: &SteadyState,
    eps: f64,
    opts: &ControlOptions,
    nl: &Nonlinearity,
) -> Result<ControlOutcome> {
    let grid = target.grid;
    check_initial(m0, &grid)?;
    let path = path_to_zero(target, opts.path_steps, nl)?.reversed();
    let first_step = path.step_distances().into_iter().find(|d| *d > 0.0).unwrap_or(2e-3);
    let eta = 0.5 * first_step;
    let stab = stabilize_to_zero(m0, opts.mu_big, eta, &grid, nl)?;
    let stair = staircase_track(&stab.sim.final_state, &path, &opts.staircase, nl)?;
    let mut schedule = ControlSchedule::default();
    if stab.t_reach > 0.0 {
        schedule.push(
            stab.t_reach,
            Kind::Divergence,
            PiecewiseProfile::constant(grid.lo, grid.hi, opts.mu_big)?,
            (0.0, 0.0),
        )?;
    }
    schedule.append(&stair.applied)?;
    let mut sim = stab.sim;
    sim.extend(stair.sim);
    if stair.final_error > eps {
        return Err(Error::Infeasible(format!(
            "final distance {:.4e} exceeds eps = {eps} (nearest path member {} at {:.4e})",
            stair.final_error, stair.nearest_member.0, stair.nearest_member.1
        )));
    }
    Ok(ControlOutcome {
        schedule,
        sim,
        stabilization_time: stab.t_reach,
        staircase_schedule: stair.schedule,
        final_error: stair.final_error,
        nearest_member: stair.nearest_member,
    })
}
