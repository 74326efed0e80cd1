//! Paths of steady states: extend-and-shift families and star connectivity
//! through the trivial state `m ≡ 0`.
//!
//! Every member is re-integrated from its own phase point; nothing is
//! interpolated between members.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CellLaw, Grid, Kind, PhasePoint, PiecewiseProfile, SteadyState, SteadyStatePath};
use crate::nonlinearity::Nonlinearity;
use crate::ode::State;
use crate::phase_plane::flow;

const TOL: f64 = 1e-12;
/// Default number of steps along a path.
pub const DEFAULT_STEPS: usize = 40;

/// How the continuation past the right end was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    /// Constant continuation of the coefficient at the right end.
    Right,
    /// The mirrored state was extended (its right end is the original left end).
    Mirrored,
    /// Constant continuation with a larger coefficient, the right-end phase
    /// point being outside the region for the original one.
    Jump,
}

/// A steady state continued to twice its support.
#[derive(Debug, Clone, Serialize)]
pub struct ExtendedState {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub profile: PiecewiseProfile,
    pub kind: Kind,
    /// `(m, p)` at `grid.lo`, in the extension's orientation.
    pub start: State,
    pub origin: SteadyState,
    pub extension: Extension,
}

fn end_state(state: &SteadyState, nl: &Nonlinearity) -> Result<State> {
    let g = &state.grid;
    Ok(flow(nl, state.kind, &state.profile, g.lo, [state.boundary.0, state.start_flux], g.hi, &[], None, TOL)?.end.1)
}

fn translated(profile: &PiecewiseProfile, lo: f64) -> Result<PiecewiseProfile> {
    let shift = lo - profile.lo();
    PiecewiseProfile::new(profile.breakpoints().iter().map(|b| b + shift).collect(), profile.values().to_vec())
}

/// Mirror image `x ↦ lo + hi - x`; the momentum changes sign.
fn mirror(state: &SteadyState, end: State) -> Result<SteadyState> {
    let values = state.values.iter().rev().copied().collect();
    SteadyState::new(state.grid, values, state.profile.mirrored(), state.kind, -end[1])
}

fn inside(law: CellLaw, m: f64, p: f64, nl: &Nonlinearity) -> bool {
    m.abs() < 1.0 && law.invariant(m, p, nl) < 0.0
}

/// A constant continuation with `law` oscillates on the scale `1/√(ab)`;
/// below a few grid steps the shifted members are sampled at random phases.
fn resolved(law: CellLaw, grid: &Grid) -> bool {
    1.0 / (law.a * law.b).sqrt() >= 4.0 * grid.step()
}

/// Integrates from `y0` at `grid.lo` and samples on `grid`; also returns the end point.
fn integrate(
    nl: &Nonlinearity,
    kind: Kind,
    profile: &PiecewiseProfile,
    grid: &Grid,
    y0: State,
) -> Result<(SteadyState, State)> {
    let xs = grid.points();
    let fl = flow(nl, kind, profile, grid.lo, y0, grid.hi, &xs, None, TOL)?;
    if fl.samples.len() != xs.len() {
        return Err(Error::GridMismatch(fl.samples.len(), xs.len()));
    }
    let values = fl.samples.iter().map(|(_, s)| s[0]).collect();
    Ok((SteadyState::new(*grid, values, profile.clone(), kind, y0[1])?, fl.end.1))
}

/// Continues `state` to `(lo, hi + (hi - lo))` with a constant coefficient,
/// which keeps `-1 < m < 1` when the end phase point is strictly inside the
/// invariant region `½ a p² + b F(m) < 0`.
///
/// The right end is tried first, then the left end (by mirror symmetry),
/// preferring an end whose continuation is resolved on the grid;
/// failing both, the right end is continued with the smallest coefficient
/// jump (times 2) that puts the end point inside.
pub fn extend_state(state: &SteadyState, nl: &Nonlinearity) -> Result<ExtendedState> {
    extend_with(state, nl, true)
}

/// [`extend_state`] without the coefficient-jump fallback.
pub fn extend_state_strict(state: &SteadyState, nl: &Nonlinearity) -> Result<ExtendedState> {
    extend_with(state, nl, false)
}

fn extend_with(state: &SteadyState, nl: &Nonlinearity, allow_jump: bool) -> Result<ExtendedState> {
    let g = state.grid;
    let end = end_state(state, nl)?;
    let right_law = state.law_at(g.hi);
    let left_law = state.law_at(g.lo);
    let right = inside(right_law, end[0], end[1], nl);
    let left = inside(left_law, state.boundary.0, state.start_flux, nl);
    let right_first = right && (resolved(right_law, &g) || !(left && resolved(left_law, &g)));
    let (base, extension, coefficient) = if right_first {
        (state.clone(), Extension::Right, *state.profile.values().last().unwrap())
    } else if left {
        (mirror(state, end)?, Extension::Mirrored, state.profile.values()[0])
    } else if allow_jump && end[0].abs() < 1.0 {
        // the momentum and m are continuous across the jump
        let threshold = end[1] * end[1] / (-2.0 * nl.primitive(end[0]));
        // same threshold for μ (p = μ m_x) and ξ (p = m_x)
        (state.clone(), Extension::Jump, (2.0 * threshold).max(f64::MIN_POSITIVE))
    } else {
        return Err(Error::OutsideInvariantRegion(format!(
            "end phase points (m, p) = ({}, {}) and ({}, {}) are not strictly inside the invariant region",
            state.boundary.0, state.start_flux, end[0], end[1]
        )));
    };
    let span = g.hi - g.lo;
    let grid = Grid::new(g.lo, g.hi + span, 2 * g.n - 1)?;
    let profile = base.profile.extended(grid.hi, coefficient)?;
    let start = [base.boundary.0, base.start_flux];
    let (ext, _) = integrate(nl, state.kind, &profile, &grid, start)?;
    if let Some(v) = ext.values.iter().find(|v| !(v.abs() < 1.0)) {
        return Err(Error::OutsideInvariantRegion(format!("extension reaches m = {v}")));
    }
    Ok(ExtendedState { grid, values: ext.values, profile, kind: state.kind, start, origin: state.clone(), extension })
}

/// The family `m_s(x) = m_E(x + s)`, `s = j L / M`, each member
/// re-integrated on the original grid with the shifted coefficient.
pub fn shift_family(ext: &ExtendedState, steps: usize, nl: &Nonlinearity) -> Result<SteadyStatePath> {
    if steps == 0 {
        return Err(Error::param("M", "need at least one step"));
    }
    let grid = ext.origin.grid;
    let span = grid.hi - grid.lo;
    let shifts: Vec<f64> = (0..=steps).map(|j| grid.lo + span * j as f64 / steps as f64).collect();
    let starts = flow(nl, ext.kind, &ext.profile, grid.lo, ext.start, grid.lo + span, &shifts, None, TOL)?;
    if starts.samples.len() != shifts.len() {
        return Err(Error::GridMismatch(starts.samples.len(), shifts.len()));
    }
    let mut members = Vec::with_capacity(shifts.len());
    for (x, y) in &starts.samples {
        let s = x - grid.lo;
        let profile = translated(&ext.profile.window(grid.lo + s, grid.hi + s)?, grid.lo)?;
        let (member, end) = integrate(nl, ext.kind, &profile, &grid, *y)?;
        members.push(if ext.extension == Extension::Mirrored { mirror(&member, end)? } else { member });
    }
    SteadyStatePath::uniform(members)
}

/// Points from `p` to the origin: a straight segment if every point stays
/// strictly inside the region for `law`, otherwise slope to zero first and
/// then `m` to zero (inside for any bistable `F`).
fn contraction(p: PhasePoint, law: CellLaw, steps: usize, nl: &Nonlinearity) -> Vec<PhasePoint> {
    let straight: Vec<PhasePoint> = (1..=steps)
        .map(|k| {
            let t = 1.0 - k as f64 / steps as f64;
            PhasePoint::new(t * p.m, t * p.mx)
        })
        .collect();
    let ok = straight.iter().all(|q| *q == PhasePoint::ORIGIN || inside(law, q.m, q.mx, nl));
    if ok {
        return straight;
    }
    (1..=steps)
        .map(|k| {
            let u = 2.0 * k as f64 / steps as f64;
            if u <= 1.0 {
                PhasePoint::new(p.m, (1.0 - u) * p.mx)
            } else {
                PhasePoint::new((2.0 - u) * p.m, 0.0)
            }
        })
        .collect()
}

/// Some end phase point is inside the region and its continuation resolved.
fn has_usable_end(state: &SteadyState, nl: &Nonlinearity) -> Result<bool> {
    let g = state.grid;
    let end = end_state(state, nl)?;
    let (rl, ll) = (state.law_at(g.hi), state.law_at(g.lo));
    Ok((inside(rl, end[0], end[1], nl) && resolved(rl, &g))
        || (inside(ll, state.boundary.0, state.start_flux, nl) && resolved(ll, &g)))
}

/// Moves the coefficient of the last cell geometrically to that of its
/// neighbour, re-integrating each member; the right boundary value is left
/// free. Returns the `steps` members after the original.
///
/// Boundary layers pinning `m(1) = 0` put the end phase point on or outside
/// the region, and any constant continuation from there oscillates on the
/// layer's length scale; relaxing the layer first leaves a smooth end.
pub fn relax_right_end(state: &SteadyState, steps: usize, nl: &Nonlinearity) -> Result<Vec<SteadyState>> {
    let k = state.profile.len();
    if k < 2 {
        return Err(Error::param("state", "a single-cell profile has no neighbour to relax to"));
    }
    let from = state.profile.values()[k - 1];
    let to = state.profile.values()[k - 2];
    let start = [state.boundary.0, state.start_flux];
    (1..=steps)
        .map(|j| {
            let t = j as f64 / steps as f64;
            let mut values = state.profile.values().to_vec();
            values[k - 1] = if j == steps { to } else { from * (to / from).powf(t) };
            let profile = PiecewiseProfile::new(state.profile.breakpoints().to_vec(), values)?;
            Ok(integrate(nl, state.kind, &profile, &state.grid, start)?.0)
        })
        .collect()
}

/// A path of `M + 1` admissible steady states from `state` to `m ≡ 0`:
/// a shift family (about `M/2` steps) reaching a constant-coefficient state,
/// then a contraction of its phase point to the origin. When neither end
/// phase point is inside the invariant region with a continuation resolved
/// on the grid, the right end cell is relaxed first (about `M/4` steps, see [`relax_right_end`]).
pub fn path_to_zero(state: &SteadyState, steps: usize, nl: &Nonlinearity) -> Result<SteadyStatePath> {
    if steps < 2 {
        return Err(Error::param("M", format!("need at least 2 steps, got {steps}")));
    }
    if state.max_abs() == 0.0 && state.start_flux == 0.0 {
        return SteadyStatePath::uniform(vec![state.clone(); steps + 1]);
    }
    let mut members = vec![state.clone()];
    let mut base = state.clone();
    let mut remaining = steps;
    if !has_usable_end(state, nl)? && state.profile.len() >= 2 && steps >= 4 {
        let k = steps.div_ceil(4);
        members.extend(relax_right_end(state, k, nl)?);
        base = members.last().unwrap().clone();
        remaining -= k;
    }
    // a single-cell state is already a window of its own orbit, so shifting
    // only revisits translates; contract it directly
    let shift_steps = if base.profile.len() == 1 { 0 } else { remaining.div_ceil(2) };
    if shift_steps > 0 {
        let ext = extend_state(&base, nl)?;
        let shifted = shift_family(&ext, shift_steps, nl)?;
        members.extend(shifted.states.into_iter().skip(1));
    }
    let last = members.last().unwrap().clone();
    let grid = last.grid;
    let coefficient = last.profile.values()[0];
    let law = CellLaw::new(last.kind, coefficient);
    let flat = PiecewiseProfile::constant(grid.lo, grid.hi, coefficient)?;
    let start = PhasePoint::new(last.boundary.0, last.start_flux);
    for q in contraction(start, law, remaining - shift_steps, nl) {
        members.push(integrate(nl, last.kind, &flat, &grid, [q.m, q.mx])?.0);
    }
    let path = SteadyStatePath::uniform(members)?;
    if !path.is_admissible() {
        return Err(Error::Infeasible("path to zero leaves [-1, 1]".into()));
    }
    Ok(path)
}

/// `state1 → 0 → state2` through the trivial state.
pub fn connect_states(
    state1: &SteadyState,
    state2: &SteadyState,
    steps: usize,
    nl: &Nonlinearity,
) -> Result<SteadyStatePath> {
    if state1.grid != state2.grid {
        return Err(Error::GridMismatch(state1.grid.n, state2.grid.n));
    }
    let there = path_to_zero(state1, steps, nl)?;
    let back = path_to_zero(state2, steps, nl)?.reversed();
    there.concat(&back)
}
