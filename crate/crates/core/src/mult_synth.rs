//! Multiplicative-form synthesis: a positive piecewise-constant `ξ(x)` whose
//! steady state of `-m_xx = ξ f(m)` approximates any bounded target.
//!
//! Flat pieces come from small constant `ξ`; neighbouring pieces are glued
//! by exact phase-point connections with at most three switching values.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{l2_distance, Grid, Kind, PhasePoint, PiecewiseProfile, SteadyState, StepFunction};
use crate::nonlinearity::Nonlinearity;
use crate::ode::{Dopri5, EventFn, State};
use crate::phase_plane::{flow, sample_state, Orbit};
use crate::quad;
use crate::steady_synth::arc_integral;

const TOL: f64 = 1e-12;
/// Required agreement between a simulated plan and its target point.
pub const ENDPOINT_TOL: f64 = 1e-8;
const XI_MIN: f64 = 1e-6;
const XI_MAX: f64 = 1e6;

/// One constant-`ξ` stretch of a connection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Phase {
    pub xi: f64,
    pub length: f64,
    pub from: PhasePoint,
    pub to: PhasePoint,
}

/// Exact connection of two phase points over a prescribed length.
///
/// The core is three phases (to the axis with `ξ₁`, to the target with
/// `ξ₂`, `n` whole periods with `ξ₃`); an endpoint on the axis `m = 0`
/// additionally gets a short `ξ = 1` lead-in or lead-out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchPlan {
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
    pub lengths: [f64; 3],
    pub n_periods: usize,
    pub start: PhasePoint,
    pub end: PhasePoint,
    pub phases: Vec<Phase>,
    /// Distance between the simulated end point and `end`,
    /// `max(|Δm|, |Δm_x|)`.
    pub endpoint_error: f64,
}

impl SwitchPlan {
    pub fn total_length(&self) -> f64 {
        self.phases.iter().map(|p| p.length).sum()
    }

    /// `ξ(x)` on `[0, total_length]`.
    pub fn profile(&self) -> Result<PiecewiseProfile> {
        let cells: Vec<(f64, f64)> = self.phases.iter().map(|p| (p.length, p.xi)).collect();
        PiecewiseProfile::from_cells(0.0, &cells)
    }

    pub fn min_xi(&self) -> f64 {
        self.phases.iter().map(|p| p.xi).fold(f64::INFINITY, f64::min)
    }
}

/// `ξ₂` making the energies of the two phases agree at the axis crossing:
/// `ξ₂ = (q₀² - q_L²) / (2(F(m_L) - F(0))) + ξ₁ (F(m₀) - F(0)) / (F(m_L) - F(0))`.
pub fn xi2_of_xi1(m0: PhasePoint, ml: PhasePoint, xi1: f64, nl: &Nonlinearity) -> Result<f64> {
    let denom = nl.primitive_diff(ml.m, 0.0);
    if denom == 0.0 {
        return Err(Error::param("mL", "degenerate target: F(m_L) = F(0)"));
    }
    Ok((m0.mx * m0.mx - ml.mx * ml.mx) / (2.0 * denom) + xi1 * nl.primitive_diff(m0.m, 0.0) / denom)
}

fn rhs(xi: f64, nl: &Nonlinearity) -> impl Fn(f64, &State) -> State + '_ {
    move |_x, s| [s[1], -xi * nl.f(s[0])]
}

/// Short unit-`ξ` flow moving an axis point off `m = 0`, forward or backward.
fn off_axis(p: PhasePoint, budget: f64, forward: bool, nl: &Nonlinearity) -> Result<(f64, PhasePoint)> {
    let len = (budget / 10.0).min(0.25 / p.mx.abs());
    let x1 = if forward { len } else { -len };
    let sol = Dopri5::with_tol(TOL).integrate(rhs(1.0, nl), 0.0, [p.m, p.mx], x1, &[], None)?;
    let (_, s) = sol.end;
    Ok((len, PhasePoint::new(s[0], s[1])))
}

/// `n` and `ξ₃` with `n X(ξ₃) = remaining` for the orbit through `p`;
/// smallest `n` first.
fn match_periods(p: PhasePoint, remaining: f64, nl: &Nonlinearity) -> Result<(usize, f64)> {
    let threshold = if p.mx == 0.0 { 0.0 } else { p.mx * p.mx / (-2.0 * nl.primitive(p.m)) };
    let xi_lo = XI_MIN.max(threshold * (1.0 + 1e-9));
    if xi_lo >= XI_MAX {
        return Err(Error::NotBracketed(format!(
            "no closed orbit through ({}, {}) for ξ ∈ [{XI_MIN:e}, {XI_MAX:e}]",
            p.m, p.mx
        )));
    }
    let period = |xi: f64| -> f64 { Orbit::through(p, xi, nl).map(|o| o.period()).unwrap_or(f64::INFINITY) };
    let (x_max, x_min) = (period(xi_lo), period(XI_MAX));
    let n = if x_max.is_finite() { ((remaining / x_max).ceil() as usize).max(1) } else { 1 };
    if remaining / (n as f64) < x_min {
        return Err(Error::NotBracketed(format!(
            "remaining length {remaining:.3e} below the shortest period {x_min:.3e} in ξ ∈ [{xi_lo:.3e}, {XI_MAX:e}]"
        )));
    }
    let target = remaining / n as f64;
    let xi3 = quad::bisect_log(|xi| period(xi) - target, xi_lo, XI_MAX, 1e-15)?;
    Ok((n, xi3))
}

fn advance(xi: f64, p: PhasePoint, len: f64, nl: &Nonlinearity) -> Result<PhasePoint> {
    let (_, s) = Dopri5::with_tol(TOL).integrate(rhs(xi, nl), 0.0, [p.m, p.mx], len, &[], None)?.end;
    Ok(PhasePoint::new(s[0], s[1]))
}

/// First-order time shift along the flow from `e` to the nearby `target`.
fn time_mismatch(xi: f64, e: PhasePoint, target: PhasePoint, nl: &Nonlinearity) -> f64 {
    let v = [e.mx, -xi * nl.f(e.m)];
    let d = [target.m - e.m, target.mx - e.mx];
    (d[0] * v[0] + d[1] * v[1]) / (v[0] * v[0] + v[1] * v[1])
}

/// Quadrature lengths carry ~1e-9 relative error near turning points; the
/// ODE has the final word.
fn correct_length(xi: f64, from: PhasePoint, to: PhasePoint, mut len: f64, nl: &Nonlinearity) -> Result<f64> {
    for _ in 0..6 {
        let dl = time_mismatch(xi, advance(xi, from, len, nl)?, to, nl);
        len += dl;
        if dl.abs() < 1e-15 * len.max(1.0) {
            break;
        }
    }
    Ok(len)
}

/// Secant on `ξ₃` so that the simulated orbit closes exactly after `len`.
fn refine_periods(p: PhasePoint, len: f64, xi3: f64, nl: &Nonlinearity) -> Result<f64> {
    let r = |xi: f64| -> Result<f64> { Ok(time_mismatch(xi, advance(xi, p, len, nl)?, p, nl)) };
    let (mut x0, mut x1) = (xi3, xi3 * (1.0 + 1e-7));
    let (mut r0, mut r1) = (r(x0)?, r(x1)?);
    for _ in 0..12 {
        if r1.abs() < 1e-14 || r1 == r0 {
            break;
        }
        let x2 = x1 - r1 * (x1 - x0) / (r1 - r0);
        if !(x2 > 0.0) {
            break;
        }
        (x0, r0) = (x1, r1);
        x1 = x2;
        r1 = r(x1)?;
    }
    Ok(if r1.abs() <= r0.abs() { x1 } else { x0 })
}

/// Axis crossing located by the ODE itself.
fn hit_axis(xi: f64, p: PhasePoint, guess: f64, nl: &Nonlinearity) -> Result<Option<(PhasePoint, f64)>> {
    let ev = |_x: f64, s: &State| s[0];
    let ev: EventFn<'_> = &ev;
    let sol = Dopri5::with_tol(TOL).integrate(rhs(xi, nl), 0.0, [p.m, p.mx], 1.5 * guess + 1e-6, &[], Some(ev))?;
    Ok(sol.event.map(|(x, s)| (PhasePoint::new(0.0, s[1]), x)))
}

/// Re-simulates a plan with `μ = 1` and reaction `ξ f` from its start.
pub fn simulate_plan(plan: &SwitchPlan, nl: &Nonlinearity) -> Result<(PhasePoint, f64)> {
    let profile = plan.profile()?;
    let fl = flow(
        nl,
        Kind::Multiplicative,
        &profile,
        0.0,
        [plan.start.m, plan.start.mx],
        plan.total_length(),
        &[],
        None,
        TOL,
    )?;
    let max_abs = fl.steps.iter().map(|(_, s)| s[0].abs()).fold(0.0, f64::max);
    let (_, s) = fl.end;
    Ok((PhasePoint::new(s[0], s[1]), max_abs))
}

/// Drives `m0` to `ml` in exactly `length` with a positive piecewise-constant
/// `ξ`, staying in `R = {|m| < 1}`.
pub fn connect_phase_points(m0: PhasePoint, ml: PhasePoint, length: f64, nl: &Nonlinearity) -> Result<SwitchPlan> {
    for (name, p) in [("m0", m0), ("mL", ml)] {
        if !(p.is_finite() && p.in_strip()) || p == PhasePoint::ORIGIN {
            return Err(Error::param(name, format!("({}, {}) must lie in R without the origin", p.m, p.mx)));
        }
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::param("L", format!("length must be positive, got {length}")));
    }
    // x -> x / L maps the problem to unit length with slopes times L and ξ times L².
    // unit slope errors grow by 1/L on the way back; the plain bound is
    // required at unit scale and the scaled one attempted
    let tol = ENDPOINT_TOL * length.min(1.0);
    let unit = connect_unit(PhasePoint::new(m0.m, m0.mx * length), PhasePoint::new(ml.m, ml.mx * length), tol, nl)?;
    let scale = |p: PhasePoint| PhasePoint::new(p.m, p.mx / length);
    let l2 = length * length;
    let mut plan = SwitchPlan {
        xi1: unit.xi1 / l2,
        xi2: unit.xi2 / l2,
        xi3: unit.xi3 / l2,
        lengths: unit.lengths.map(|l| l * length),
        n_periods: unit.n_periods,
        start: m0,
        end: ml,
        phases: unit
            .phases
            .iter()
            .map(|p| Phase { xi: p.xi / l2, length: p.length * length, from: scale(p.from), to: scale(p.to) })
            .collect(),
        endpoint_error: f64::INFINITY,
    };
    let (reached, _) = simulate_plan(&plan, nl)?;
    plan.endpoint_error = (reached.m - ml.m).abs().max((reached.mx - ml.mx).abs());
    if (reached.m - ml.m).abs().max((reached.mx - ml.mx).abs() * length.min(1.0)) > ENDPOINT_TOL {
        return Err(Error::Infeasible(format!("endpoint error {:.3e} after rescaling", plan.endpoint_error)));
    }
    Ok(plan)
}

fn connect_unit(m0: PhasePoint, ml: PhasePoint, tol: f64, nl: &Nonlinearity) -> Result<SwitchPlan> {
    let length = 1.0;
    let mut lead = Vec::new();
    let mut tail = Vec::new();
    let mut start = m0;
    let mut finish = ml;
    let mut budget = length;
    if m0.m == 0.0 {
        let (len, p) = off_axis(m0, length, true, nl)?;
        lead.push(Phase { xi: 1.0, length: len, from: m0, to: p });
        start = p;
        budget -= len;
    }
    if ml.m == 0.0 {
        let (len, p) = off_axis(ml, length, false, nl)?;
        tail.push(Phase { xi: 1.0, length: len, from: p, to: ml });
        finish = p;
        budget -= len;
    }

    let finalize = |core: Vec<Phase>, xi: [f64; 3], lengths: [f64; 3], n: usize| -> Result<SwitchPlan> {
        let mut phases = lead.clone();
        phases.extend(core.into_iter().filter(|p| p.length > 0.0));
        phases.extend(tail.iter().copied());
        let mut plan = SwitchPlan {
            xi1: xi[0],
            xi2: xi[1],
            xi3: xi[2],
            lengths,
            n_periods: n,
            start: m0,
            end: ml,
            phases,
            endpoint_error: f64::INFINITY,
        };
        let (reached, max_abs) = simulate_plan(&plan, nl)?;
        plan.endpoint_error = (reached.m - ml.m).abs().max((reached.mx - ml.mx).abs());
        if max_abs >= 1.0 {
            return Err(Error::Infeasible(format!("plan leaves R: max|m| = {max_abs}")));
        }
        Ok(plan)
    };

    if start == finish {
        let (n, xi3) = match_periods(finish, budget, nl)?;
        let xi3 = refine_periods(finish, budget, xi3, nl)?;
        let core = vec![Phase { xi: xi3, length: budget, from: finish, to: finish }];
        return finalize(core, [xi3, xi3, xi3], [0.0, 0.0, budget], n);
    }

    // Lower bounds on ξ₁: positive ξ₂, and a closed first orbit when m0 moves
    // away from the axis.
    let f0 = nl.primitive_diff(start.m, 0.0);
    let mut xi1_lb = 0.0f64;
    let offset = start.mx * start.mx - finish.mx * finish.mx;
    if offset < 0.0 {
        xi1_lb = xi1_lb.max(-0.5 * offset / f0);
    }
    if start.m * start.mx > 0.0 {
        xi1_lb = xi1_lb.max(start.mx * start.mx / (-2.0 * nl.primitive(start.m)));
    }
    let mut xi1 = (2.0 * xi1_lb).max(1.0);
    let mut last_err = None;
    let mut best: Option<SwitchPlan> = None;
    let mut extra = 0;
    for _ in 0..80 {
        let attempt = (|| -> Result<SwitchPlan> {
            let o1 = Orbit::through(start, xi1, nl)?;
            let (axis, l1) = o1.to_axis(start, nl)?;
            let (axis, l1) = hit_axis(xi1, start, l1, nl)?.unwrap_or((axis, l1));
            let xi2 = xi2_of_xi1(start, finish, xi1, nl)?;
            if !(xi2 > 0.0) {
                return Err(Error::Infeasible(format!("ξ₂ = {xi2} not positive")));
            }
            let o2 = Orbit::through(axis, xi2, nl)?;
            let l2 = o2.travel(axis, finish, nl)?;
            let l2 = correct_length(xi2, axis, finish, l2, nl)?;
            let reach = l1 + l2;
            if !(reach < budget) {
                return Err(Error::Infeasible(format!("𝓛(ξ₁) = {reach} exceeds L = {budget}")));
            }
            let l3 = budget - reach;
            let (n, xi3) = match_periods(finish, l3, nl)?;
            let xi3 = refine_periods(finish, l3, xi3, nl)?;
            let core = vec![
                Phase { xi: xi1, length: l1, from: start, to: axis },
                Phase { xi: xi2, length: l2, from: axis, to: finish },
                Phase { xi: xi3, length: l3, from: finish, to: finish },
            ];
            let plan = finalize(core, [xi1, xi2, xi3], [l1, l2, l3], n)?;
            if plan.endpoint_error > ENDPOINT_TOL {
                return Err(Error::Infeasible(format!("endpoint error {:.3e}", plan.endpoint_error)));
            }
            Ok(plan)
        })();
        match attempt {
            Ok(plan) if plan.endpoint_error <= tol => return Ok(plan),
            Ok(plan) => {
                if best.as_ref().is_none_or(|b: &SwitchPlan| plan.endpoint_error < b.endpoint_error) {
                    best = Some(plan);
                }
            }
            Err(e) => last_err = Some(e),
        }
        // a plan within ENDPOINT_TOL exists; a few more tries for the tighter target
        if best.is_some() {
            extra += 1;
            if extra > 4 {
                break;
            }
        }
        xi1 *= 2.0;
        if xi1 > 1e12 {
            break;
        }
    }
    if let Some(plan) = best {
        return Ok(plan);
    }
    Err(Error::Infeasible(format!(
        "no switching plan from ({}, {}) to ({}, {}) over {length}: {}",
        m0.m,
        m0.mx,
        ml.m,
        ml.mx,
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// Small-`ξ` approximation of a constant level on a segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantApprox {
    pub alpha: f64,
    pub length: f64,
    pub xi: f64,
    /// A-priori bound `ξ L² sup|f|`.
    pub bound: f64,
    pub extremum: f64,
    /// `|m_x|` at both ends of the arc.
    pub slope: f64,
    /// Measured `sup |m - α|` from re-simulating the arc.
    pub deviation: f64,
}

impl ConstantApprox {
    /// Phase point at the left end (slope pointing toward the extremum).
    pub fn start(&self) -> PhasePoint {
        PhasePoint::new(self.alpha, self.alpha.signum() * self.slope)
    }

    pub fn end(&self) -> PhasePoint {
        PhasePoint::new(self.alpha, -self.alpha.signum() * self.slope)
    }
}

/// The solution of `-m'' = ξ f(m)`, `m = α` at both ends of `[0, L]`, with
/// `ξ = tol / (L² sup|f|)`, so that `‖m - α‖∞ ≤ tol`.
pub fn approximate_constant(alpha: f64, length: f64, tol: f64, nl: &Nonlinearity) -> Result<ConstantApprox> {
    if !(alpha.abs() < 1.0) {
        return Err(Error::param("alpha", format!("{alpha} not in (-1, 1)")));
    }
    if !(length > 0.0 && tol > 0.0) {
        return Err(Error::param("tol", "length and tol must be positive"));
    }
    let xi = tol / (length * length * nl.sup_abs_f());
    let bound = xi * length * length * nl.sup_abs_f();
    if alpha == 0.0 {
        return Ok(ConstantApprox { alpha, length, xi, bound, extremum: 0.0, slope: 0.0, deviation: 0.0 });
    }
    // the arc spans L when ∫_α^{ext} dm / sqrt(F(ext) - F(m)) = L sqrt(ξ/2)
    let want = length * (xi / 2.0).sqrt();
    let room = 1.0 - alpha.abs();
    let eps = quad::bisect(
        |e| arc_integral(alpha, e, nl).unwrap_or(f64::INFINITY) - want,
        room * 1e-14,
        room * (1.0 - 1e-9),
        1e-17,
    )?;
    let extremum = alpha + alpha.signum() * eps;
    let slope = (2.0 * xi * nl.primitive_diff(extremum, alpha)).sqrt();
    let mut approx = ConstantApprox { alpha, length, xi, bound, extremum, slope, deviation: 0.0 };
    let s0 = approx.start();
    let ev = |_x: f64, s: &State| s[1];
    let ev: EventFn<'_> = &ev;
    let ode = Dopri5::with_tol(TOL);
    let top = ode.integrate(rhs(xi, nl), 0.0, [s0.m, s0.mx], length, &[], Some(ev))?;
    let whole = ode.integrate(rhs(xi, nl), 0.0, [s0.m, s0.mx], length, &[], None)?;
    let peak = top.event.map_or(top.end.1[0], |(_, s)| s[0]);
    approx.deviation = whole.steps.iter().map(|(_, s)| (s[0] - alpha).abs()).fold((peak - alpha).abs(), f64::max);
    if (whole.end.1[0] - alpha).abs() > 1e-8 {
        return Err(Error::Infeasible(format!(
            "constant arc misses its end value: m(L) = {}, α = {alpha}",
            whole.end.1[0]
        )));
    }
    Ok(approx)
}

/// Output of [`synthesize_multiplicative`].
#[derive(Debug, Clone, Serialize)]
pub struct MultiplicativeSynthesis {
    pub state: SteadyState,
    pub pieces: Vec<ConstantApprox>,
    /// Interior junction connections, left to right.
    pub bridges: Vec<SwitchPlan>,
    /// Constant `ξ` of the boundary layers at `x = 0` and `x = 1`.
    pub boundary_xi: [f64; 2],
    pub delta: f64,
    pub l2_error: f64,
}

struct Chain {
    bps: Vec<f64>,
    values: Vec<f64>,
    y: State,
}

impl Chain {
    fn x(&self) -> f64 {
        *self.bps.last().unwrap()
    }

    fn push(&mut self, len: f64, xi: f64, nl: &Nonlinearity) -> Result<()> {
        if len <= 0.0 {
            return Ok(());
        }
        let (a, b) = (self.x(), self.x() + len);
        let cell = PiecewiseProfile::constant(a, b, xi)?;
        self.y = flow(nl, Kind::Multiplicative, &cell, a, self.y, b, &[], None, TOL)?.end.1;
        self.bps.push(b);
        self.values.push(xi);
        Ok(())
    }
}

/// Length of the monotone pass `0 → α` ending with slope magnitude `q` under
/// constant `ξ`.
fn boundary_pass(alpha: f64, q: f64, xi: f64, nl: &Nonlinearity) -> f64 {
    quad::integrate(|m| 1.0 / (q * q + 2.0 * xi * nl.primitive_diff(alpha, m)).sqrt(), 0.0, alpha, 1e-13).abs()
}

fn boundary_xi(alpha: f64, q: f64, width: f64, nl: &Nonlinearity) -> Result<f64> {
    let free = alpha.abs() / q;
    if width >= free {
        return Err(Error::Infeasible(format!("boundary layer of width {width} cannot reach level {alpha}")));
    }
    let c = quad::inverse_sqrt_integral(|m| 2.0 * nl.primitive_diff(alpha, m), 0.0, alpha, 1e-13).abs();
    let hi = 4.0 * (c / width).powi(2) + 1.0;
    quad::bisect_log(|xi| boundary_pass(alpha, q, xi, nl) - width, 1e-12, hi, 1e-15)
}

/// A positive `ξ` whose steady state with `m(0) = m(1) = 0` is within `eps`
/// of the piecewise-constant `target` in `L²`.
///
/// Pieces get `approximate_constant` with `tol = eps/4`; junctions of width
/// `δ = (eps / (4√J))²`, `J` counting interior junctions plus the two
/// boundary layers, are bridged by [`connect_phase_points`]. Zero-valued
/// pieces are lifted to `±eps/8` (the connection needs points off the
/// origin).
pub fn synthesize_multiplicative(
    target: &StepFunction,
    eps: f64,
    grid: &Grid,
    nl: &Nonlinearity,
) -> Result<MultiplicativeSynthesis> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    if target.lo() != grid.lo || target.hi() != grid.hi {
        return Err(Error::Malformed("target support differs from the grid".into()));
    }
    if let Some(v) = target.values().iter().find(|v| !(v.abs() < 1.0)) {
        return Err(Error::param("target", format!("value {v} not in (-1, 1)")));
    }
    let span = grid.hi - grid.lo;
    if target.values().iter().all(|v| *v == 0.0) {
        let state = SteadyState::zero(*grid, Kind::Multiplicative, 1.0)?;
        return Ok(MultiplicativeSynthesis {
            state,
            pieces: Vec::new(),
            bridges: Vec::new(),
            boundary_xi: [1.0, 1.0],
            delta: 0.0,
            l2_error: 0.0,
        });
    }
    let count = target.len();
    let junctions = (count - 1 + 2) as f64;
    let delta = (eps / (4.0 * junctions.sqrt())).powi(2) * span;
    let tol = eps / 4.0;

    // Lift zero levels, alternating with the neighbour to the left.
    let mut levels: Vec<f64> = target.values().to_vec();
    for i in 0..levels.len() {
        if levels[i] == 0.0 {
            let prev = if i > 0 { levels[i - 1] } else { -1.0 };
            levels[i] = -prev.signum() * eps / 8.0;
        }
    }

    let mut pieces = Vec::with_capacity(count);
    for (i, &alpha) in levels.iter().enumerate() {
        let (a, b) = target.cell(i);
        // interior junctions and the boundary half-layers both take δ/2 from each piece
        let (a, b) = (a + delta / 2.0, b - delta / 2.0);
        if b - a < 2.0 * grid.step() {
            return Err(Error::param("eps", format!("piece {i} shorter than the grid resolution")));
        }
        pieces.push(approximate_constant(alpha, b - a, tol, nl)?);
    }

    let half = delta / 2.0;
    let first = &pieces[0];
    let last = &pieces[count - 1];
    let xi_l = boundary_xi(first.alpha, first.slope, half, nl)?;
    let xi_r = boundary_xi(last.alpha, last.slope, half, nl)?;
    let q0 = (first.slope * first.slope + 2.0 * xi_l * nl.primitive_diff(first.alpha, 0.0)).sqrt();
    let p0 = first.alpha.signum() * q0;

    // Bridges have huge ξ and magnify entry errors, so the chain is built
    // left to right from the simulated state, cell by cell exactly as the
    // final sampling pass integrates it.
    let mut chain = Chain { bps: vec![grid.lo], values: Vec::new(), y: [0.0, p0] };
    chain.push(half, xi_l, nl)?;
    let mut bridges = Vec::with_capacity(count - 1);
    for (i, piece) in pieces.iter().enumerate() {
        chain.push(piece.length, piece.xi, nl)?;
        if let Some(next) = pieces.get(i + 1) {
            let here = PhasePoint::new(chain.y[0], chain.y[1]);
            let plan = connect_phase_points(here, next.start(), delta, nl)?;
            for ph in &plan.phases {
                chain.push(ph.length, ph.xi, nl)?;
            }
            bridges.push(plan);
        }
    }
    let entry = chain.y;
    let width = grid.hi - chain.x();
    let end_value = |xi: f64| {
        Dopri5::with_tol(TOL)
            .integrate(rhs(xi, nl), 0.0, entry, width, &[], None)
            .map_or(f64::NAN, |s| s.end.1[0] * last.alpha.signum())
    };
    let xi_r = quad::bisect_log(end_value, xi_r / 2.0, xi_r * 2.0, 1e-15)?;
    chain.bps.push(grid.hi);
    chain.values.push(xi_r);
    let profile = PiecewiseProfile::new(chain.bps, chain.values)?;
    let state = sample_state(nl, Kind::Multiplicative, &profile, grid, 0.0, p0, TOL)?;
    let l2_error = l2_distance(grid, &state.values, &grid.sample(|x| target.eval(x)))?;
    Ok(MultiplicativeSynthesis { state, pieces, bridges, boundary_xi: [xi_l, xi_r], delta, l2_error })
}

/// Cell-average quantization of `values` (sampled on `grid`) on the coarsest
/// uniform partition within `L²` distance `eps/2`; values are clipped into
/// `(-1 + 1e-6, 1 - 1e-6)`.
pub fn pre_approximate(values: &[f64], grid: &Grid, eps: f64) -> Result<StepFunction> {
    if values.len() != grid.n {
        return Err(Error::GridMismatch(values.len(), grid.n));
    }
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    let clip = 1.0 - 1e-6;
    let span = grid.hi - grid.lo;
    for pieces in 1..grid.n {
        let width = span / pieces as f64;
        let cell_of = |i: usize| (((grid.x(i) - grid.lo) / width) as usize).min(pieces - 1);
        let mut sums = vec![0.0; pieces];
        let mut counts = vec![0usize; pieces];
        for (i, v) in values.iter().enumerate() {
            sums[cell_of(i)] += v;
            counts[cell_of(i)] += 1;
        }
        if counts.contains(&0) {
            break;
        }
        let avg: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| (s / *c as f64).clamp(-clip, clip)).collect();
        let quantized: Vec<f64> = (0..grid.n).map(|i| avg[cell_of(i)]).collect();
        if l2_distance(grid, values, &quantized)? < eps / 2.0 {
            let mut bps: Vec<f64> = (0..=pieces).map(|k| grid.lo + k as f64 * width).collect();
            bps[pieces] = grid.hi;
            return StepFunction::new(bps, avg);
        }
    }
    Err(Error::Infeasible(format!("no uniform partition of the grid reaches L² distance {}", eps / 2.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::default_nonlinearity;

    #[test]
    fn xi2_examples() {
        let nl = default_nonlinearity();
        let a = PhasePoint::new(0.5, 0.3);
        let b = PhasePoint::new(-0.5, 0.3);
        assert!((xi2_of_xi1(a, b, 2.7, &nl).unwrap() - 2.7).abs() < 1e-14);
        assert!((xi2_of_xi1(a, a, 0.3, &nl).unwrap() - 0.3).abs() < 1e-14);
        // below the positivity threshold ξ₂ ≤ 0
        let m0 = PhasePoint::new(0.5, 0.1);
        let ml = PhasePoint::new(-0.4, 0.9);
        let thr = -0.5 * (m0.mx * m0.mx - ml.mx * ml.mx) / nl.primitive_diff(m0.m, 0.0);
        assert!(xi2_of_xi1(m0, ml, 0.9 * thr, &nl).unwrap() <= 0.0);
        assert!(xi2_of_xi1(m0, ml, 1.1 * thr, &nl).unwrap() > 0.0);
        assert!(xi2_of_xi1(m0, PhasePoint::new(0.0, 0.4), 1.0, &nl).is_err());
    }

    #[test]
    fn connect_examples() {
        let nl = default_nonlinearity();
        let m0 = PhasePoint::new(0.5, 0.2);
        let ml = PhasePoint::new(-0.5, 0.2);
        for &len in &[1.0, 0.5, 0.1] {
            let plan = connect_phase_points(m0, ml, len, &nl).unwrap();
            assert!(plan.endpoint_error <= ENDPOINT_TOL, "{len}: {}", plan.endpoint_error);
            assert!((plan.total_length() - len).abs() < 1e-10);
            assert!(plan.min_xi() > 0.0);
            let (_, max_abs) = simulate_plan(&plan, &nl).unwrap();
            assert!(max_abs < 1.0);
        }
        let loop_plan = connect_phase_points(m0, m0, 0.7, &nl).unwrap();
        assert!(loop_plan.endpoint_error <= ENDPOINT_TOL);
        assert_eq!(loop_plan.lengths[0], 0.0);
        assert!(connect_phase_points(PhasePoint::ORIGIN, ml, 1.0, &nl).is_err());
    }

    #[test]
    fn connect_through_axis_endpoints() {
        let nl = default_nonlinearity();
        let plan = connect_phase_points(PhasePoint::new(0.0, 0.8), PhasePoint::new(0.0, -0.3), 0.5, &nl).unwrap();
        assert!(plan.endpoint_error <= ENDPOINT_TOL, "{}", plan.endpoint_error);
        assert!((plan.total_length() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn constant_examples() {
        let nl = default_nonlinearity();
        let zero = approximate_constant(0.0, 0.4, 1e-3, &nl).unwrap();
        assert_eq!(zero.deviation, 0.0);
        let c = approximate_constant(0.5, 0.3, 1e-3, &nl).unwrap();
        assert!(c.deviation <= 1e-3);
        assert!((c.xi - 1e-3 / (0.09 * nl.sup_abs_f())).abs() < 1e-12);
        let half = approximate_constant(0.5, 0.3, 5e-4, &nl).unwrap();
        assert!(half.deviation <= 0.55 * c.deviation, "{} vs {}", half.deviation, c.deviation);
    }

    #[test]
    fn two_piece_synthesis() {
        let nl = default_nonlinearity();
        let grid = Grid::unit(2049).unwrap();
        let target = StepFunction::new(vec![0.0, 0.5, 1.0], vec![0.6, -0.3]).unwrap();
        let syn = synthesize_multiplicative(&target, 0.1, &grid, &nl).unwrap();
        assert!(syn.l2_error <= 0.1, "{}", syn.l2_error);
        assert!(syn.state.max_abs() < 1.0);
        assert!(syn.state.boundary.0 == 0.0 && syn.state.boundary.1.abs() < 1e-6, "{:?}", syn.state.boundary);
        assert!(syn.state.profile.min_value() > 0.0);
        // outside S*, still reachable in multiplicative form
        let hard = StepFunction::new(vec![0.0, 0.5, 1.0], vec![0.5, -0.9]).unwrap();
        let syn = synthesize_multiplicative(&hard, 0.1, &grid, &nl).unwrap();
        assert!(syn.l2_error <= 0.1);
        let zero = StepFunction::constant(0.0, 1.0, 0.0).unwrap();
        let syn = synthesize_multiplicative(&zero, 0.1, &grid, &nl).unwrap();
        assert!(syn.state.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pre_approximate_examples() {
        let grid = Grid::unit(1001).unwrap();
        let flat = vec![0.3; 1001];
        let p = pre_approximate(&flat, &grid, 0.1).unwrap();
        assert_eq!(p.len(), 1);
        let s = grid.sample(|x| (std::f64::consts::PI * x).sin());
        let p = pre_approximate(&s, &grid, 0.2).unwrap();
        let q = grid.sample(|x| p.eval(x));
        assert!(l2_distance(&grid, &s, &q).unwrap() < 0.1);
        let finer = pre_approximate(&s, &grid, 0.1).unwrap();
        assert!(finer.len() >= p.len());
    }
}
