//! Hamiltonian phase-plane analysis of the steady-state ODE
//! `(m, m_x)' = (m_x, -f(m)/μ)`: energy, invariant regions `Γ_μ`, periods,
//! Neumann traces, traversal lengths, and orbit integration through
//! piecewise-constant coefficients.
//!
//! Integration always runs on the momentum pair `(m, p)` (see
//! [`CellLaw`]), so the transmission condition `μ⁻ m_x⁻ = μ⁺ m_x⁺` holds at
//! every coefficient jump by construction.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CellLaw, Grid, Kind, PhasePoint, PiecewiseProfile, SteadyState};
use crate::nonlinearity::Nonlinearity;
use crate::ode::{Dopri5, EventFn, State};
use crate::quad;

const QUAD_TOL: f64 = 1e-12;

fn check_mu(mu: f64) -> Result<()> {
    if mu.is_finite() && mu > 0.0 {
        Ok(())
    } else {
        Err(Error::param("mu", format!("diffusivity must be positive, got {mu}")))
    }
}

/// `E(m, m_x) = ½ m_x² + F(m)/μ`.
pub fn energy(p: PhasePoint, mu: f64, nl: &Nonlinearity) -> Result<f64> {
    check_mu(mu)?;
    Ok(0.5 * p.mx * p.mx + nl.primitive(p.m) / mu)
}

/// The invariant region `Γ_μ = {|m| ≤ 1, m_x² ≤ -2F(m)/μ}` bounded by the
/// standing-wave heteroclinics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantRegion {
    pub mu: f64,
}

impl InvariantRegion {
    pub fn new(mu: f64) -> Result<Self> {
        check_mu(mu)?;
        Ok(InvariantRegion { mu })
    }

    /// Upper boundary `m_x = sqrt(-2F(m)/μ)`.
    pub fn boundary_slope(&self, m: f64, nl: &Nonlinearity) -> f64 {
        (-2.0 * nl.primitive(m) / self.mu).max(0.0).sqrt()
    }

    pub fn contains(&self, p: PhasePoint, nl: &Nonlinearity) -> bool {
        p.m.abs() <= 1.0 && p.mx * p.mx <= -2.0 * nl.primitive(p.m) / self.mu + 1e-12
    }

    /// Strict interior: `½ m_x² < -F(m)/μ`.
    pub fn contains_strictly(&self, p: PhasePoint, nl: &Nonlinearity) -> bool {
        p.m.abs() < 1.0 && 0.5 * p.mx * p.mx < -nl.primitive(p.m) / self.mu
    }
}

pub fn in_invariant_region(p: PhasePoint, mu: f64, nl: &Nonlinearity) -> bool {
    InvariantRegion::new(mu).map(|g| g.contains(p, nl)).unwrap_or(false)
}

/// Result of integrating the momentum system through a coefficient profile.
#[derive(Debug, Clone, Default)]
pub struct Flow {
    /// `(x, [m, p])` at requested sample points.
    pub samples: Vec<(f64, State)>,
    /// Accepted integrator steps, including cell boundaries.
    pub steps: Vec<(f64, State)>,
    pub end: (f64, State),
    pub event: Option<(f64, State)>,
    /// Max over cells of the phase-plane energy drift within the cell.
    pub energy_drift: f64,
}

/// Integrates `m' = a p`, `p' = -b f(m)` from `x0` to `x1 >= x0` with the
/// law of each profile cell; the profile's end cells extend beyond its
/// support.
#[allow(clippy::too_many_arguments)]
pub fn flow(
    nl: &Nonlinearity,
    kind: Kind,
    profile: &PiecewiseProfile,
    x0: f64,
    y0: State,
    x1: f64,
    samples: &[f64],
    event: Option<EventFn<'_>>,
    tol: f64,
) -> Result<Flow> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    if !(x1 >= x0) {
        return Err(Error::param("span", format!("empty span [{x0}, {x1}]")));
    }
    let ode = Dopri5::with_tol(tol);
    let mut out = Flow { steps: vec![(x0, y0)], end: (x0, y0), ..Default::default() };
    let mut cell = profile.cell_index(x0);
    let mut x = x0;
    let mut y = y0;
    let mut next_sample = 0usize;
    loop {
        let cell_end = if cell + 1 < profile.len() { profile.cell(cell).1.min(x1) } else { x1 };
        let law = CellLaw::new(kind, profile.values()[cell]);
        let first = next_sample;
        while next_sample < samples.len() && samples[next_sample] <= cell_end {
            // a sample exactly on an interior breakpoint belongs to the next cell,
            // but m and p are continuous there so either side gives the value
            next_sample += 1;
        }
        let rhs = |_x: f64, s: &State| [law.a * s[1], -law.b * nl.f(s[0])];
        let sol = ode.integrate(rhs, x, y, cell_end, &samples[first..next_sample], event)?;
        let e0 = law.energy(y[0], y[1], nl);
        let drift = sol.steps.iter().map(|(_, s)| (law.energy(s[0], s[1], nl) - e0).abs()).fold(0.0, f64::max);
        out.energy_drift = out.energy_drift.max(drift);
        out.samples.extend(sol.samples);
        out.steps.extend(sol.steps.into_iter().skip(1));
        out.end = sol.end;
        if sol.event.is_some() {
            out.event = sol.event;
            return Ok(out);
        }
        x = sol.end.0;
        y = sol.end.1;
        if cell_end >= x1 {
            return Ok(out);
        }
        cell += 1;
    }
}

/// Integrates from `(m0, p0)` at `grid.lo` through `profile` and samples the
/// result on `grid` as a [`SteadyState`].
pub fn sample_state(
    nl: &Nonlinearity,
    kind: Kind,
    profile: &PiecewiseProfile,
    grid: &Grid,
    m0: f64,
    p0: f64,
    tol: f64,
) -> Result<SteadyState> {
    let xs = grid.points();
    let fl = flow(nl, kind, profile, grid.lo, [m0, p0], grid.hi, &xs, None, tol)?;
    if fl.samples.len() != xs.len() {
        return Err(Error::GridMismatch(fl.samples.len(), xs.len()));
    }
    let values = fl.samples.iter().map(|(_, s)| s[0]).collect();
    SteadyState::new(*grid, values, profile.clone(), kind, p0)
}

/// A sampled trajectory of the steady-state ODE.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitSegment {
    pub xs: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub energies: Vec<f64>,
    pub profile: PiecewiseProfile,
    pub kind: Kind,
    pub energy_drift: f64,
}

/// Integrates the divergence-form steady-state ODE from `p0 = (m, m_x)` at
/// `span.0` through `mu_profile`. The output holds the accepted steps and
/// every profile breakpoint crossed.
pub fn integrate_orbit(
    p0: PhasePoint,
    mu_profile: &PiecewiseProfile,
    span: (f64, f64),
    tol: f64,
    nl: &Nonlinearity,
) -> Result<OrbitSegment> {
    integrate_orbit_kind(p0, Kind::Divergence, mu_profile, span, tol, nl)
}

pub fn integrate_orbit_kind(
    p0: PhasePoint,
    kind: Kind,
    profile: &PiecewiseProfile,
    span: (f64, f64),
    tol: f64,
    nl: &Nonlinearity,
) -> Result<OrbitSegment> {
    if !(span.1 > span.0) {
        return Err(Error::param("span", format!("empty span [{}, {}]", span.0, span.1)));
    }
    if !p0.is_finite() {
        return Err(Error::param("p0", "non-finite phase point"));
    }
    let law0 = CellLaw::new(kind, profile.eval(span.0));
    let y0 = [p0.m, law0.momentum(p0.mx)];
    let fl = flow(nl, kind, profile, span.0, y0, span.1, &[], None, tol)?;
    let mut xs = Vec::with_capacity(fl.steps.len());
    let mut points = Vec::with_capacity(fl.steps.len());
    let mut energies = Vec::with_capacity(fl.steps.len());
    for (x, s) in &fl.steps {
        let law = CellLaw::new(kind, profile.eval(*x));
        xs.push(*x);
        points.push(PhasePoint::new(s[0], law.slope(s[1])));
        energies.push(law.energy(s[0], s[1], nl));
    }
    Ok(OrbitSegment { xs, points, energies, profile: profile.clone(), kind, energy_drift: fl.energy_drift })
}

/// Half period `√μ ∫_{m_min}^{m_max} dm / sqrt(2(F(ext) - F(m)))` of the
/// closed orbit through `(extremum, 0)`.
pub fn half_period(extremum: f64, mu: f64, nl: &Nonlinearity) -> Result<f64> {
    check_mu(mu)?;
    if extremum == 0.0 {
        return Err(Error::param("extremum", "degenerate center orbit"));
    }
    if !(extremum.abs() < 1.0) {
        return Err(Error::param("extremum", "saddle or beyond: infinite period"));
    }
    let other = nl.conjugate(extremum)?;
    let (lo, hi) = if extremum < other { (extremum, other) } else { (other, extremum) };
    let integral = quad::inverse_sqrt_integral(|m| 2.0 * nl.primitive_diff(extremum, m), lo, hi, QUAD_TOL);
    Ok(mu.sqrt() * integral)
}

/// `x`-length from `m = 0` to the extremum `(extremum, 0)` along the orbit
/// through it (a quarter of the period for symmetric `f`).
pub fn zero_to_extremum_length(extremum: f64, mu: f64, nl: &Nonlinearity) -> Result<f64> {
    check_mu(mu)?;
    if extremum == 0.0 || !(extremum.abs() < 1.0) {
        return Err(Error::param("extremum", "must lie in (-1,1)\\{0}"));
    }
    let integral = quad::inverse_sqrt_integral(|m| 2.0 * nl.primitive_diff(extremum, m), 0.0, extremum, QUAD_TOL).abs();
    Ok(mu.sqrt() * integral)
}

/// `|m_x|` at level `alpha` on the orbit with extremum `alpha ± eps`, the
/// sign of the offset pushing the extremum away from 0.
pub fn neumann_trace_from_energy(alpha: f64, eps: f64, mu: f64, nl: &Nonlinearity) -> Result<f64> {
    check_mu(mu)?;
    let ext = alpha + alpha.signum() * eps;
    if !(alpha.abs() < 1.0 && ext.abs() < 1.0) {
        return Err(Error::param("alpha", "alpha and alpha±eps must lie in (-1, 1)"));
    }
    let radicand = 2.0 / mu * nl.primitive_diff(ext, alpha);
    if radicand < 0.0 {
        return Err(Error::LevelNotReached(format!("extremum {ext} does not reach level {alpha}")));
    }
    Ok(radicand.sqrt())
}

/// Largest `|m_x|` on the orbit of energy `E`, attained at `m = 0`.
pub fn max_mx_on_orbit(e: f64, mu: f64, nl: &Nonlinearity) -> Result<f64> {
    check_mu(mu)?;
    let center = nl.primitive(0.0) / mu;
    if e < center {
        return Err(Error::param("E", format!("energy {e} below the center value {center}")));
    }
    Ok((2.0 * (e - center)).sqrt())
}

/// `x`-length for the orbit through `p0` to move from level `a` to level
/// `b` along a monotone branch:
/// `∫_a^b dm / sqrt(m_x(0)² + (2/μ)(F(m(0)) - F(m)))`.
pub fn traversal_length(a: f64, b: f64, p0: PhasePoint, mu: f64, nl: &Nonlinearity) -> Result<f64> {
    check_mu(mu)?;
    if a == b {
        return Ok(0.0);
    }
    let g = |m: f64| p0.mx * p0.mx + 2.0 / mu * nl.primitive_diff(p0.m, m);
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    const PROBES: usize = 256;
    for i in 1..PROBES {
        let m = lo + (hi - lo) * i as f64 / PROBES as f64;
        if g(m) <= 0.0 {
            return Err(Error::LevelNotReached(format!(
                "branch through ({}, {}) turns at m ≈ {m} before reaching {b}",
                p0.m, p0.mx
            )));
        }
    }
    Ok(quad::inverse_sqrt_integral(g, lo, hi, QUAD_TOL))
}

/// A level set of `½ q² + k F(m)` for a constant reaction scale `k`
/// (`k = 1/μ` or `k = ξ`), traversed clockwise in the `(m, q)` plane.
#[derive(Debug, Clone, Copy)]
pub struct Orbit {
    pub k: f64,
    anchor: PhasePoint,
    turning: Option<(f64, f64)>,
    half: f64,
}

impl Orbit {
    pub fn through(p: PhasePoint, k: f64, nl: &Nonlinearity) -> Result<Orbit> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::param("k", format!("reaction scale must be positive, got {k}")));
        }
        if !p.in_strip() {
            return Err(Error::param("point", "must satisfy |m| < 1"));
        }
        let level = nl.primitive(p.m) + 0.5 * p.mx * p.mx / k;
        if level < 0.0 && p != PhasePoint::ORIGIN {
            let lo = nl.level_point(level, false)?;
            let hi = nl.level_point(level, true)?;
            let mut orbit = Orbit { k, anchor: p, turning: Some((lo, hi)), half: 0.0 };
            orbit.half = quad::inverse_sqrt_integral(|m| orbit.q2(m, nl), lo, hi, QUAD_TOL);
            Ok(orbit)
        } else {
            Ok(Orbit { k, anchor: p, turning: None, half: f64::INFINITY })
        }
    }

    /// `q²` on the level set as a function of `m`.
    pub fn q2(&self, m: f64, nl: &Nonlinearity) -> f64 {
        self.anchor.mx * self.anchor.mx + 2.0 * self.k * nl.primitive_diff(self.anchor.m, m)
    }

    pub fn energy(&self, nl: &Nonlinearity) -> f64 {
        0.5 * self.anchor.mx * self.anchor.mx + self.k * nl.primitive(self.anchor.m)
    }

    pub fn is_closed(&self) -> bool {
        self.turning.is_some()
    }

    pub fn turning_points(&self) -> Option<(f64, f64)> {
        self.turning
    }

    pub fn period(&self) -> f64 {
        2.0 * self.half
    }

    fn arc_position(&self, p: PhasePoint, nl: &Nonlinearity) -> f64 {
        let (lo, hi) = self.turning.expect("closed orbit");
        let m = p.m.clamp(lo, hi);
        let upper = p.mx > 0.0 || (p.mx == 0.0 && m - lo <= hi - m);
        if upper {
            quad::inverse_sqrt_integral(|s| self.q2(s, nl), lo, m, QUAD_TOL)
        } else {
            self.half + quad::inverse_sqrt_integral(|s| self.q2(s, nl), m, hi, QUAD_TOL)
        }
    }

    /// Length along the flow from `from` to `to` (both on this level set).
    /// Identical points give 0.
    pub fn travel(&self, from: PhasePoint, to: PhasePoint, nl: &Nonlinearity) -> Result<f64> {
        if from == to {
            return Ok(0.0);
        }
        if self.is_closed() {
            let d = self.arc_position(to, nl) - self.arc_position(from, nl);
            return Ok(d.rem_euclid(self.period()));
        }
        let forward = (to.m - from.m) * from.mx > 0.0 && from.mx * to.mx > 0.0;
        if !forward {
            return Err(Error::LevelNotReached(format!(
                "open orbit from ({}, {}) never reaches ({}, {})",
                from.m, from.mx, to.m, to.mx
            )));
        }
        Ok(quad::inverse_sqrt_integral(|s| self.q2(s, nl), from.m, to.m, QUAD_TOL).abs())
    }

    /// First point with `m = 0` reached from `from` along the flow, and the
    /// length to get there.
    pub fn to_axis(&self, from: PhasePoint, nl: &Nonlinearity) -> Result<(PhasePoint, f64)> {
        let q0 = self.q2(0.0, nl).max(0.0).sqrt();
        if from.m == 0.0 {
            return Ok((from, 0.0));
        }
        let target = if self.is_closed() {
            // clockwise: the axis is crossed upward from m < 0, downward from m > 0
            if from.m < 0.0 {
                PhasePoint::new(0.0, q0)
            } else {
                PhasePoint::new(0.0, -q0)
            }
        } else {
            if (0.0 - from.m) * from.mx <= 0.0 {
                return Err(Error::LevelNotReached("open orbit moves away from m = 0".into()));
            }
            PhasePoint::new(0.0, from.mx.signum() * q0)
        };
        let len = self.travel(from, target, nl)?;
        Ok((target, len))
    }
}
