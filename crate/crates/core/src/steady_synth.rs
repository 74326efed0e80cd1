//! Divergence-form synthesis: a piecewise-constant diffusivity `μ(x)` whose
//! steady state approximates an S* target in `L²`, plus constant-`μ`
//! multi-lobe patterns.
//!
//! Layout for a target with levels `α_1..α_n` on `[a_{i-1}, a_i]`:
//!
//! ```text
//! [0, δ]              boundary layer, m: 0 → α_1
//! [a_{i-1}+δ, a_i-δ]  segment i, arc with extremum α_i ± ε_i
//! [a_i-δ, a_i+δ]      transition, m: α_i → α_{i+1}
//! [1-δ, 1]            boundary layer, m: α_n → 0
//! ```
//!
//! Every cell has constant `μ`; along a cell `p² + 2μ F(m)` is conserved for
//! the flux `p = μ m_x`, which turns each cell into a scalar equation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{validate_sstar, Grid, Kind, PiecewiseProfile, SStarTarget, SteadyState};
use crate::nonlinearity::Nonlinearity;
use crate::phase_plane::{sample_state, zero_to_extremum_length};
use crate::quad;

const QUAD_TOL: f64 = 1e-13;
const INTEGRATION_TOL: f64 = 1e-12;
/// Required agreement of the closed-form fluxes across each junction.
pub const JUNCTION_TOL: f64 = 1e-9;

/// One constant-`μ` arc of the construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentPlan {
    pub index: usize,
    pub alpha: f64,
    pub eps: f64,
    pub extremum: f64,
    pub start: f64,
    pub end: f64,
    pub mu: f64,
    /// `μ m_x` at the left end; the right end carries the opposite sign.
    pub flux_in: f64,
    /// Signed `m_x` at the right end.
    pub neumann_out: f64,
}

impl SegmentPlan {
    pub fn new(index: usize, alpha: f64, eps: f64, start: f64, end: f64, nl: &Nonlinearity) -> Result<Self> {
        let length = end - start;
        let mu = mu_for_segment(alpha, eps, length, nl)?;
        let extremum = alpha + alpha.signum() * eps;
        let flux = (2.0 * mu * nl.primitive_diff(extremum, alpha)).sqrt();
        Ok(SegmentPlan {
            index,
            alpha,
            eps,
            extremum,
            start,
            end,
            mu,
            flux_in: alpha.signum() * flux,
            neumann_out: -alpha.signum() * flux / mu,
        })
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn flux_out(&self) -> f64 {
        self.mu * self.neumann_out
    }
}

/// `I = |∫_α^{α±ε} dm / sqrt(F(α±ε) - F(m))|`.
pub(crate) fn arc_integral(alpha: f64, eps: f64, nl: &Nonlinearity) -> Result<f64> {
    if !(alpha.abs() < 1.0 && alpha != 0.0) {
        return Err(Error::param("alpha", format!("{alpha} not in (-1,1)\\{{0}}")));
    }
    if !(eps > 0.0) {
        return Err(Error::param("eps", "empty arc: eps must be positive"));
    }
    let ext = alpha + alpha.signum() * eps;
    if !(ext.abs() < 1.0) {
        return Err(Error::param("eps", format!("extremum {ext} outside (-1, 1)")));
    }
    let i = quad::inverse_sqrt_integral(|m| nl.primitive_diff(ext, m), alpha, ext, QUAD_TOL).abs();
    if !(i.is_finite() && i > 0.0) {
        return Err(Error::Infeasible(format!("arc integral not finite for alpha={alpha}, eps={eps}")));
    }
    Ok(i)
}

/// The constant diffusivity for which the arc leaving level `alpha` with
/// extremum `alpha ± eps` (pushed away from 0) returns to `alpha` after
/// exactly `length`: `μ = L² / (2 I²)`.
pub fn mu_for_segment(alpha: f64, eps: f64, length: f64, nl: &Nonlinearity) -> Result<f64> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::param("L", format!("segment length must be positive, got {length}")));
    }
    let i = arc_integral(alpha, eps, nl)?;
    Ok(length * length / (2.0 * i * i))
}

/// `|μ m_x|` at the ends of the segment, `L sqrt(ΔF) / I`.
fn segment_flux(alpha: f64, eps: f64, length: f64, nl: &Nonlinearity) -> Result<f64> {
    let ext = alpha + alpha.signum() * eps;
    Ok(length * nl.primitive_diff(ext, alpha).sqrt() / arc_integral(alpha, eps, nl)?)
}

/// `|μ_l m_x(end⁻) - μ_r m_x(start⁺)|` for adjacent plans.
pub fn check_transmission_compatibility(left: &SegmentPlan, right: &SegmentPlan) -> f64 {
    (left.flux_out() - right.flux_in).abs()
}

/// Pairwise residuals along a chain of plans; empty for a single segment.
pub fn transmission_residuals(plans: &[SegmentPlan]) -> Vec<f64> {
    plans.windows(2).map(|w| check_transmission_compatibility(&w[0], &w[1])).collect()
}

/// A constant-`μ` cell carrying `m` monotonically between two levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionCell {
    pub start: f64,
    pub end: f64,
    pub mu: f64,
    pub m_from: f64,
    pub m_to: f64,
    pub flux_from: f64,
    pub flux_to: f64,
}

/// Width of the monotone passage `m_from → m_to` entered with `|p| = p_in`.
fn passage_width(p_in: f64, m_from: f64, m_to: f64, mu: f64, nl: &Nonlinearity) -> f64 {
    quad::integrate(
        |m| {
            let q = p_in * p_in + 2.0 * mu * nl.primitive_diff(m_from, m);
            if q > 0.0 {
                mu / q.sqrt()
            } else {
                f64::INFINITY
            }
        },
        m_from,
        m_to,
        QUAD_TOL,
    )
    .abs()
}

/// Constant `μ` for which the passage `m_from → m_to` entered with flux
/// magnitude `p_in` takes exactly `width`. Returns `(μ, |p_out|)`.
pub fn passage_mu(p_in: f64, m_from: f64, m_to: f64, width: f64, nl: &Nonlinearity) -> Result<(f64, f64)> {
    if !(p_in > 0.0 && width > 0.0) {
        return Err(Error::param("flux", "passage needs positive entry flux and width"));
    }
    let rise = nl.primitive_diff(m_to, m_from).max(0.0);
    // the flux must not vanish before m_to: 2μ (F(m_to) - F(m_from)) < p_in²
    let mu_cap = if rise > 0.0 { p_in * p_in / (2.0 * rise) } else { f64::INFINITY };
    let guess = width * p_in / (m_to - m_from).abs();
    let lo = guess * 1e-6;
    let hi = (guess * 1e6).min(mu_cap * (1.0 - 1e-12));
    let g = |mu: f64| passage_width(p_in, m_from, m_to, mu, nl) - width;
    if !(hi > lo) || g(hi) < 0.0 {
        return Err(Error::Infeasible(format!(
            "passage {m_from} → {m_to} with flux {p_in:.6e} cannot span width {width:.3e}"
        )));
    }
    let mu = quad::bisect_log(g, lo, hi, 1e-15)?;
    let p_out = (p_in * p_in + 2.0 * mu * nl.primitive_diff(m_from, m_to)).sqrt();
    Ok((mu, p_out))
}

/// Output of [`synthesize_divergence`].
#[derive(Debug, Clone, Serialize)]
pub struct DivergenceSynthesis {
    pub state: SteadyState,
    pub plans: Vec<SegmentPlan>,
    pub transitions: Vec<TransitionCell>,
    pub boundary_layers: [TransitionCell; 2],
    pub delta: f64,
    /// Per junction: `|p_out(transition) - p_in(next segment)|`.
    pub junction_residuals: Vec<f64>,
    /// Offset of each junction center from the target breakpoint.
    pub junction_shifts: Vec<f64>,
    /// A-posteriori bound on the `L²` distance to the target.
    pub error_bound: f64,
}

impl DivergenceSynthesis {
    pub fn max_junction_residual(&self) -> f64 {
        self.junction_residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Lengths and junction data of one layout attempt.
struct Chain {
    overshoots: Vec<f64>,
    lengths: Vec<f64>,
    /// `(μ_T, |p_out|)` per junction.
    junctions: Vec<(f64, f64)>,
}

struct Layout<'a> {
    levels: &'a [f64],
    delta: f64,
    nl: &'a Nonlinearity,
}

impl Layout<'_> {
    /// With overshoots fixed, the end flux is linear in the segment length:
    /// `P_i = c_i L_i`. Fixing `L_1` propagates through every transition.
    fn sweep(&self, overshoots: &[f64], rates: &[f64], first: f64) -> Result<Chain> {
        let n = self.levels.len();
        let mut lengths = vec![first];
        let mut junctions = Vec::with_capacity(n - 1);
        let mut p = rates[0] * first;
        for j in 0..n - 1 {
            let (mu_t, p_next) = passage_mu(p, self.levels[j], self.levels[j + 1], 2.0 * self.delta, self.nl)?;
            junctions.push((mu_t, p_next));
            lengths.push(p_next / rates[j + 1]);
            p = p_next;
        }
        Ok(Chain { overshoots: overshoots.to_vec(), lengths, junctions })
    }

    /// Solves `L_1` so the segments, transitions and boundary layers fill `[0, 1]`.
    fn solve(&self, overshoot: f64) -> Result<Chain> {
        let overshoots: Vec<f64> = self.levels.iter().map(|a| overshoot.min(0.999 * (1.0 - a.abs()))).collect();
        let rates: Vec<f64> = self
            .levels
            .iter()
            .zip(&overshoots)
            .map(|(&a, &e)| segment_flux(a, e, 1.0, self.nl))
            .collect::<Result<_>>()?;
        let budget = 1.0 - 2.0 * self.delta * self.levels.len() as f64;
        let excess = |first: f64| match self.sweep(&overshoots, &rates, first) {
            Ok(chain) => chain.lengths.iter().sum::<f64>() - budget,
            // a flux too weak to cross a transition: the first segment is too short
            Err(_) => -1.0,
        };
        let first = quad::bisect(excess, budget * 1e-12, budget, 1e-16)?;
        let mut chain = self.sweep(&overshoots, &rates, first)?;
        if chain.lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Infeasible("layout produced an empty segment".into()));
        }
        // absorb the bisection remainder in the last segment
        let used: f64 = chain.lengths[..chain.lengths.len() - 1].iter().sum();
        *chain.lengths.last_mut().unwrap() = budget - used;
        Ok(chain)
    }
}

/// Checks the target, then builds the approximating diffusivity and its
/// steady state on `grid`.
pub fn synthesize_divergence(
    target: &SStarTarget,
    eps: f64,
    grid: &Grid,
    nl: &Nonlinearity,
) -> Result<DivergenceSynthesis> {
    let report = validate_sstar(target, nl)?;
    if !report.valid {
        return Err(Error::Infeasible(format!("target not in S*: {}", report.diagnostics.join("; "))));
    }
    synthesize_divergence_unchecked(target, eps, grid, nl)
}

/// As [`synthesize_divergence`] without the S* membership check; sign
/// alternation is still required. Targets violating the momentum restriction
/// fail in the junction solve.
///
/// All segments share one overshoot `η`; the segment lengths are solved so
/// the fluxes match exactly across every transition, which moves each
/// junction slightly off its target breakpoint. `η` is reduced until the
/// resulting error bound is below `eps`.
pub fn synthesize_divergence_unchecked(
    target: &SStarTarget,
    eps: f64,
    grid: &Grid,
    nl: &Nonlinearity,
) -> Result<DivergenceSynthesis> {
    target.check_structure()?;
    let levels = &target.levels;
    if levels.windows(2).any(|w| w[0] * w[1] >= 0.0) {
        return Err(Error::Infeasible("levels must alternate in sign".into()));
    }
    let margin = levels.iter().map(|a| a.abs().min(1.0 - a.abs())).fold(f64::INFINITY, f64::min);
    if !(eps > 0.0 && eps < margin) {
        return Err(Error::param(
            "eps",
            format!("need 0 < eps < {margin} (distance of the levels to -1, 0, 1), got {eps}"),
        ));
    }

    // δ keeps the transition and boundary-layer contribution to the L² error
    // below eps/2: a passage of width w between levels differing by Δ
    // contributes at most w Δ².
    let jumps: f64 = levels.windows(2).map(|w| 2.0 * (w[1] - w[0]).powi(2)).sum::<f64>()
        + levels[0].powi(2)
        + levels[levels.len() - 1].powi(2);
    let delta = (eps / 4.0).powi(2).min((eps / 2.0).powi(2) / jumps);
    if target.lengths().iter().any(|w| *w <= 4.0 * delta) {
        return Err(Error::param("eps", "a target cell is too short for the transition width"));
    }
    let layout = Layout { levels, delta, nl };
    let bp = &target.breakpoints;

    // Shrink the common overshoot until the a-posteriori L² bound fits.
    let mut overshoot = eps / 4.0;
    let mut attempt = None;
    let mut worst = (0usize, 0.0f64);
    for _ in 0..16 {
        let chain = layout.solve(overshoot)?;
        let mut start = delta;
        let mut shifts = Vec::with_capacity(levels.len() - 1);
        for (j, len) in chain.lengths[..levels.len() - 1].iter().enumerate() {
            start += len + 2.0 * delta;
            shifts.push(start - delta - bp[j + 1]);
        }
        let bound = error_bound(levels, &chain.overshoots, &shifts, delta);
        if bound <= eps {
            attempt = Some((chain, shifts, bound));
            break;
        }
        worst = shifts
            .iter()
            .enumerate()
            .map(|(j, s)| (j, s.abs() * (levels[j + 1] - levels[j]).powi(2)))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        overshoot /= 4.0;
    }
    let Some((chain, junction_shifts, error_bound)) = attempt else {
        let j = worst.0;
        return Err(Error::Infeasible(format!(
            "junction solve failed at pair ({}, {}) with levels ({}, {}): flux matching moves the junction too far",
            j + 1,
            j + 2,
            levels[j],
            levels[j + 1]
        )));
    };

    let mut plans = Vec::with_capacity(levels.len());
    let mut start = delta;
    for (i, (&len, &e)) in chain.lengths.iter().zip(&chain.overshoots).enumerate() {
        let end = if i + 1 == levels.len() { 1.0 - delta } else { start + len };
        plans.push(SegmentPlan::new(i, levels[i], e, start, end, nl)?);
        start = end + 2.0 * delta;
    }

    let mut transitions = Vec::with_capacity(chain.junctions.len());
    let mut junction_residuals = Vec::with_capacity(chain.junctions.len());
    for (i, &(mu_t, p_out)) in chain.junctions.iter().enumerate() {
        let next = &plans[i + 1];
        junction_residuals.push((p_out - next.flux_in.abs()).abs());
        transitions.push(TransitionCell {
            start: plans[i].end,
            end: next.start,
            mu: mu_t,
            m_from: levels[i],
            m_to: levels[i + 1],
            flux_from: plans[i].flux_out(),
            flux_to: next.flux_in,
        });
    }

    let first = &plans[0];
    let last = plans.last().unwrap();
    let (mu_l, p0) = passage_mu(first.flux_in.abs(), first.alpha, 0.0, delta, nl)?;
    let (mu_r, p1) = passage_mu(last.flux_out().abs(), last.alpha, 0.0, delta, nl)?;
    let sign0 = first.alpha.signum();
    let boundary_layers = [
        TransitionCell {
            start: 0.0,
            end: delta,
            mu: mu_l,
            m_from: 0.0,
            m_to: first.alpha,
            flux_from: sign0 * p0,
            flux_to: first.flux_in,
        },
        TransitionCell {
            start: 1.0 - delta,
            end: 1.0,
            mu: mu_r,
            m_from: last.alpha,
            m_to: 0.0,
            flux_from: last.flux_out(),
            flux_to: last.flux_out().signum() * p1,
        },
    ];

    let mut breakpoints = vec![0.0];
    let mut values = vec![mu_l];
    for (i, plan) in plans.iter().enumerate() {
        breakpoints.push(plan.start);
        values.push(plan.mu);
        breakpoints.push(plan.end);
        values.push(transitions.get(i).map_or(mu_r, |t| t.mu));
    }
    breakpoints.push(1.0);
    let profile = PiecewiseProfile::new(breakpoints, values)?;
    let start_flux = shoot_zero_end(nl, &profile, sign0 * p0)?;
    let state = sample_state(nl, Kind::Divergence, &profile, grid, 0.0, start_flux, INTEGRATION_TOL)?;

    Ok(DivergenceSynthesis {
        state,
        plans,
        transitions,
        boundary_layers,
        delta,
        junction_residuals,
        junction_shifts,
        error_bound,
    })
}

/// `L²` bound on `m - target`: overshoots inside segments, transitions and
/// boundary layers (at most the level gap over their width), and the strips
/// between each target breakpoint and the shifted junction.
fn error_bound(levels: &[f64], overshoots: &[f64], shifts: &[f64], delta: f64) -> f64 {
    let n = levels.len();
    let max_over = overshoots.iter().copied().fold(0.0, f64::max);
    let mut sq = max_over * max_over;
    for j in 0..n - 1 {
        let gap = (levels[j + 1] - levels[j]).abs() + max_over;
        sq += (2.0 * delta + shifts[j].abs()) * gap * gap;
    }
    sq += delta * (levels[0].powi(2) + levels[n - 1].powi(2));
    sq.sqrt()
}

/// Secant refinement of the starting flux so the composite orbit ends at
/// `m(1) = 0`; the closed-form layout is exact only up to quadrature error.
fn shoot_zero_end(nl: &Nonlinearity, profile: &PiecewiseProfile, p0: f64) -> Result<f64> {
    let end = |p: f64| -> Result<f64> {
        let fl = crate::phase_plane::flow(
            nl,
            Kind::Divergence,
            profile,
            profile.lo(),
            [0.0, p],
            profile.hi(),
            &[],
            None,
            INTEGRATION_TOL,
        )?;
        Ok(fl.end.1[0])
    };
    let (mut p_a, mut m_a) = (p0, end(p0)?);
    let mut p_b = p0 * (1.0 + 1e-9);
    let Ok(mut m_b) = end(p_b) else { return Ok(p0) };
    let (mut best_p, mut best_m) = (p_a, m_a.abs());
    for _ in 0..12 {
        if m_b.abs() < best_m {
            best_p = p_b;
            best_m = m_b.abs();
        }
        if best_m < 1e-13 || m_b == m_a {
            break;
        }
        let p_c = p_b - m_b * (p_b - p_a) / (m_b - m_a);
        if !p_c.is_finite() || (p_c - p0).abs() > 1e-4 * p0.abs() {
            break;
        }
        let Ok(m_c) = end(p_c) else { break };
        (p_a, m_a, p_b, m_b) = (p_b, m_b, p_c, m_c);
    }
    Ok(best_p)
}

/// A constant-`μ` equilibrium with zero boundary data and `k` lobes.
#[derive(Debug, Clone, Serialize)]
pub struct FingerPattern {
    pub state: SteadyState,
    pub mu: f64,
    /// Location and value of each interior maximum of `|m|`, refined by
    /// parabolic interpolation.
    pub maxima: Vec<(f64, f64)>,
}

/// The steady state on `[0,1]` with constant `μ`, `m(0) = m(1) = 0`, and `k`
/// alternating lobes whose extrema all have `|m| = mbar` (for odd `f`; in
/// general the negative lobes reach the conjugate level).
///
/// Lobe lengths scale exactly with `√μ`, so `μ = 1 / Λ²` where `Λ` is the
/// total lobe length at `μ = 1`.
pub fn finger_pattern(k: usize, mbar: f64, grid: &Grid, nl: &Nonlinearity) -> Result<FingerPattern> {
    if k == 0 {
        return Err(Error::param("k", "need at least one lobe"));
    }
    if !(mbar > 0.0 && mbar < 1.0) {
        return Err(Error::param("mbar", format!("{mbar} not in (0, 1)")));
    }
    let low = nl.conjugate(mbar)?;
    let up_lobe = 2.0 * zero_to_extremum_length(mbar, 1.0, nl)?;
    let down_lobe = 2.0 * zero_to_extremum_length(low, 1.0, nl)?;
    let total: f64 = (0..k).map(|j| if j % 2 == 0 { up_lobe } else { down_lobe }).sum();
    let mu = 1.0 / (total * total);
    let span = grid.hi - grid.lo;
    let mu = mu * span * span;
    let profile = PiecewiseProfile::constant(grid.lo, grid.hi, mu)?;
    let slope0 = (2.0 * nl.primitive_diff(mbar, 0.0) / mu).sqrt();
    let state = sample_state(nl, Kind::Divergence, &profile, grid, 0.0, mu * slope0, INTEGRATION_TOL)?;
    let maxima = abs_maxima(&state);
    Ok(FingerPattern { state, mu, maxima })
}

/// Interior strict local maxima of `|m|`, refined parabolically.
pub fn abs_maxima(state: &SteadyState) -> Vec<(f64, f64)> {
    let v: Vec<f64> = state.values.iter().map(|m| m.abs()).collect();
    let h = state.grid.step();
    let mut out = Vec::new();
    for i in 1..v.len() - 1 {
        if v[i] > v[i - 1] && v[i] >= v[i + 1] && v[i] > 1e-12 {
            let (y0, y1, y2) = (v[i - 1], v[i], v[i + 1]);
            let curv = y0 - 2.0 * y1 + y2;
            let (dx, peak) = if curv < 0.0 {
                let d = 0.5 * (y0 - y2) / curv;
                (d, y1 - 0.25 * (y0 - y2) * d)
            } else {
                (0.0, y1)
            };
            out.push((state.grid.x(i) + dx * h, peak));
        }
    }
    out
}

/// Max-norm residual of the discrete equation at interior nodes whose
/// three-point stencil does not touch a coefficient breakpoint:
/// divergence form `-(k_{i+½}(m_{i+1}-m_i) - k_{i-½}(m_i-m_{i-1}))/h² - f(m_i)`
/// with harmonic-mean face diffusivities, or `-m_xx - ξ f(m)` for the
/// multiplicative form.
pub fn verify_steady_state(state: &SteadyState, nl: &Nonlinearity) -> f64 {
    let g = &state.grid;
    let h = g.step();
    let m = &state.values;
    let kinks = state.profile.interior_breakpoints();
    let slack = 1e-12 * (g.hi - g.lo);
    let mut worst = 0.0f64;
    for i in 1..g.n - 1 {
        let (xl, xc, xr) = (g.x(i - 1), g.x(i), g.x(i + 1));
        if kinks.iter().any(|&b| b >= xl - slack && b <= xr + slack) {
            continue;
        }
        let r = match state.kind {
            Kind::Divergence => {
                let kl = state.profile.harmonic_average(xl, xc);
                let kr = state.profile.harmonic_average(xc, xr);
                -(kr * (m[i + 1] - m[i]) - kl * (m[i] - m[i - 1])) / (h * h) - nl.f(m[i])
            }
            Kind::Multiplicative => -(m[i + 1] - 2.0 * m[i] + m[i - 1]) / (h * h) - state.profile.eval(xc) * nl.f(m[i]),
        };
        worst = worst.max(r.abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::l2_distance;
    use crate::nonlinearity::default_nonlinearity;
    use crate::phase_plane::{flow, neumann_trace_from_energy};

    #[test]
    fn mu_scales_with_length_squared() {
        let nl = default_nonlinearity();
        let a = mu_for_segment(0.5, 0.1, 0.3, &nl).unwrap();
        let b = mu_for_segment(0.5, 0.1, 0.6, &nl).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
        assert!(mu_for_segment(0.5, 0.0, 0.3, &nl).is_err());
        assert!(mu_for_segment(0.95, 0.1, 0.3, &nl).is_err());
        assert!(mu_for_segment(0.0, 0.1, 0.3, &nl).is_err());
    }

    #[test]
    fn segment_round_trip_through_ode() {
        let nl = default_nonlinearity();
        for &(alpha, eps, len) in &[(0.5, 0.1, 0.4), (-0.3, 0.05, 0.25), (0.7, 0.02, 0.1)] {
            let mu = mu_for_segment(alpha, eps, len, &nl).unwrap();
            let trace = neumann_trace_from_energy(alpha, eps, mu, &nl).unwrap();
            let prof = PiecewiseProfile::constant(0.0, len, mu).unwrap();
            let y0 = [alpha, mu * alpha.signum() * trace];
            let fl = flow(&nl, Kind::Divergence, &prof, 0.0, y0, len, &[], None, 1e-12).unwrap();
            let (_, y) = fl.end;
            assert!((y[0] - alpha).abs() < 1e-6, "{alpha}: {}", y[0]);
            assert!((y[1] / mu + alpha.signum() * trace).abs() < 1e-6);
        }
    }

    #[test]
    fn arc_identity_holds_as_eps_shrinks() {
        let nl = default_nonlinearity();
        let len = 0.3;
        for &e in &[1e-2, 1e-3, 1e-4] {
            let mu = mu_for_segment(0.5, e, len, &nl).unwrap();
            let i = arc_integral(0.5, e, &nl).unwrap();
            assert!((mu * i * i - len * len / 2.0).abs() < 1e-8);
        }
        // flux tends to L|f(α)|/2
        let p = segment_flux(0.5, 1e-8, len, &nl).unwrap();
        assert!((p - len * nl.f(0.5) / 2.0).abs() < 1e-6);
    }

    #[test]
    fn transmission_examples() {
        let nl = default_nonlinearity();
        let l = SegmentPlan::new(0, 0.5, 0.05, 0.0, 0.5, &nl).unwrap();
        let r = SegmentPlan::new(1, -0.5, 0.05, 0.5, 1.0, &nl).unwrap();
        assert!(check_transmission_compatibility(&l, &r) < 1e-12);
        assert!(transmission_residuals(&[l]).is_empty());
        // (0.5, -0.9): limit is L/2 | |f(0.5)| - |f(0.9)| |
        let limit = 0.25 * (nl.f(0.5).abs() - nl.f(0.9).abs()).abs();
        for &e in &[1e-2, 1e-3, 1e-4] {
            let l = SegmentPlan::new(0, 0.5, e, 0.0, 0.5, &nl).unwrap();
            let r = SegmentPlan::new(1, -0.9, e, 0.5, 1.0, &nl).unwrap();
            let res = check_transmission_compatibility(&l, &r);
            assert!(res > 0.5 * limit, "{res}");
        }
    }

    #[test]
    fn passage_mu_hits_width() {
        let nl = default_nonlinearity();
        let (mu, p_out) = passage_mu(0.1, 0.5, -0.5, 1e-3, &nl).unwrap();
        assert!((passage_width(0.1, 0.5, -0.5, mu, &nl) - 1e-3).abs() < 1e-14);
        assert!((p_out - 0.1).abs() < 1e-15);
        let prof = PiecewiseProfile::constant(0.0, 1e-3, mu).unwrap();
        let fl = flow(&nl, Kind::Divergence, &prof, 0.0, [0.5, -0.1], 1e-3, &[], None, 1e-13).unwrap();
        assert!((fl.end.1[0] + 0.5).abs() < 1e-8, "{}", fl.end.1[0]);
    }

    #[test]
    fn symmetric_pair_synthesis() {
        let nl = default_nonlinearity();
        let target = SStarTarget::new(vec![0.5, -0.5], vec![0.0, 0.5, 1.0]).unwrap();
        let grid = Grid::unit(2001).unwrap();
        let syn = synthesize_divergence(&target, 0.1, &grid, &nl).unwrap();
        let err = l2_distance(&grid, &syn.state.values, &target.sample(&grid)).unwrap();
        assert!(err <= 0.1, "{err}");
        assert!(syn.max_junction_residual() <= JUNCTION_TOL);
        let v = &syn.state.values;
        let n = v.len();
        for i in 0..n {
            assert!((v[i] + v[n - 1 - i]).abs() < 1e-6, "odd symmetry at {i}");
        }
    }

    #[test]
    fn refinement_reduces_error() {
        let nl = default_nonlinearity();
        let target = SStarTarget::new(vec![0.5, -0.5], vec![0.0, 0.5, 1.0]).unwrap();
        let grid = Grid::unit(4097).unwrap();
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&e| {
                let syn = synthesize_divergence(&target, e, &grid, &nl).unwrap();
                l2_distance(&grid, &syn.state.values, &target.sample(&grid)).unwrap()
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn rejects_target_outside_sstar_and_large_eps() {
        let nl = default_nonlinearity();
        let bad = SStarTarget::new(vec![0.5, -0.9], vec![0.0, 0.5, 1.0]).unwrap();
        let grid = Grid::unit(513).unwrap();
        assert!(synthesize_divergence(&bad, 0.05, &grid, &nl).is_err());
        let err = synthesize_divergence_unchecked(&bad, 0.05, &grid, &nl).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err}");
        let ok = SStarTarget::new(vec![0.5, -0.5], vec![0.0, 0.5, 1.0]).unwrap();
        assert!(synthesize_divergence(&ok, 0.6, &grid, &nl).is_err());
    }

    #[test]
    fn finger_examples() {
        let nl = default_nonlinearity();
        let grid = Grid::unit(4097).unwrap();
        let one = finger_pattern(1, 0.8, &grid, &nl).unwrap();
        assert_eq!(one.maxima.len(), 1);
        let (x, v) = one.maxima[0];
        assert!((x - 0.5).abs() < grid.step());
        assert!((v - 0.8).abs() < 1e-6, "{v}");
        let two = finger_pattern(2, 0.8, &grid, &nl).unwrap();
        assert!((two.mu / one.mu - 0.25).abs() < 1e-8);
        let three = finger_pattern(3, 0.8, &grid, &nl).unwrap();
        assert_eq!(three.maxima.len(), 3);
        assert!(three.maxima.iter().all(|(_, v)| (v - 0.8).abs() < 1e-6));
        assert!(three.state.boundary.1.abs() < 1e-8);
        assert!(finger_pattern(0, 0.8, &grid, &nl).is_err());
    }

    #[test]
    fn verify_trivial_states() {
        let nl = default_nonlinearity();
        let grid = Grid::unit(101).unwrap();
        let zero = SteadyState::zero(grid, Kind::Divergence, 0.7).unwrap();
        assert_eq!(verify_steady_state(&zero, &nl), 0.0);
        let prof = PiecewiseProfile::constant(0.0, 1.0, 2.0).unwrap();
        let one = SteadyState::new(grid, vec![1.0; 101], prof, Kind::Divergence, 0.0).unwrap();
        assert_eq!(verify_steady_state(&one, &nl), 0.0);
    }

    #[test]
    fn verify_tanh_second_order() {
        let nl = default_nonlinearity();
        let residual = |n: usize| {
            let grid = Grid::new(0.0, 3.0, n).unwrap();
            let prof = PiecewiseProfile::constant(0.0, 3.0, 0.5).unwrap();
            let st = SteadyState::new(grid, grid.sample(f64::tanh), prof, Kind::Divergence, 0.5).unwrap();
            verify_steady_state(&st, &nl)
        };
        let ratio = residual(301) / residual(601);
        assert!((ratio - 4.0).abs() < 0.8, "{ratio}");
    }
}
