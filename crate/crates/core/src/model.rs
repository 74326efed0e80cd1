//! Shared domain types: phase points, piecewise-constant coefficient
//! profiles, uniform grids, S* targets, steady states and paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;

/// Default number of samples on `[0, 1]` (2^12 + 1).
pub const DEFAULT_GRID: usize = 4097;

/// A point `(m, m_x)` of the steady-state phase plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub m: f64,
    pub mx: f64,
}

impl PhasePoint {
    pub const ORIGIN: PhasePoint = PhasePoint { m: 0.0, mx: 0.0 };

    pub fn new(m: f64, mx: f64) -> Self {
        PhasePoint { m, mx }
    }

    pub fn is_finite(&self) -> bool {
        self.m.is_finite() && self.mx.is_finite()
    }

    /// Membership in the strip `R = {-1 < m < 1}`.
    pub fn in_strip(&self) -> bool {
        self.m > -1.0 && self.m < 1.0
    }
}

/// Which steady-state equation a coefficient profile enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    /// `-(μ(x) m_x)_x = f(m)`, the profile holds `μ`.
    Divergence,
    /// `-m_xx = ξ(x) f(m)`, the profile holds `ξ`.
    Multiplicative,
}

/// Constant-coefficient law of one cell, written for the momentum pair
/// `(m, p)` with `m' = a p`, `p' = -b f(m)`.
///
/// For divergence form `p = μ m_x` (`a = 1/μ`, `b = 1`); for the
/// multiplicative form `p = m_x` (`a = 1`, `b = ξ`). The quantity
/// `½ a p² + b F(m)` is conserved, and the cell's phase-plane energy is
/// `a` times that.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellLaw {
    pub a: f64,
    pub b: f64,
}

impl CellLaw {
    pub fn new(kind: Kind, coefficient: f64) -> Self {
        match kind {
            Kind::Divergence => CellLaw { a: 1.0 / coefficient, b: 1.0 },
            Kind::Multiplicative => CellLaw { a: 1.0, b: coefficient },
        }
    }

    /// Conserved quantity `½ a p² + b F(m)`; negative exactly inside the
    /// invariant region (for `|m| < 1`).
    pub fn invariant(&self, m: f64, p: f64, nl: &Nonlinearity) -> f64 {
        0.5 * self.a * p * p + self.b * nl.primitive(m)
    }

    /// Phase-plane energy `½ m_x² + F(m)/μ` (resp. `½ m_x² + ξ F(m)`).
    pub fn energy(&self, m: f64, p: f64, nl: &Nonlinearity) -> f64 {
        self.a * self.invariant(m, p, nl)
    }

    pub fn slope(&self, p: f64) -> f64 {
        self.a * p
    }

    pub fn momentum(&self, mx: f64) -> f64 {
        mx / self.a
    }

    /// Effective reaction scale `b / a` (`1/μ`, resp. `ξ`).
    pub fn reaction_scale(&self) -> f64 {
        self.b / self.a
    }
}

/// Uniform grid of `n` points on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("grid", "need at least 2 points"));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::param("grid", format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Grid { lo, hi, n })
    }

    pub fn unit(n: usize) -> Result<Self> {
        Grid::new(0.0, 1.0, n)
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.n).map(|i| f(self.x(i))).collect()
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid { lo: 0.0, hi: 1.0, n: DEFAULT_GRID }
    }
}

/// Composite trapezoidal `L²` norm of `u - v` on a uniform grid.
pub fn l2_distance(grid: &Grid, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != grid.n {
        return Err(Error::GridMismatch(u.len(), grid.n));
    }
    if v.len() != grid.n {
        return Err(Error::GridMismatch(v.len(), grid.n));
    }
    let h = grid.step();
    let n = grid.n;
    let mut acc = 0.0;
    for i in 0..n {
        let d = u[i] - v[i];
        let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
        acc += w * d * d;
    }
    Ok((acc * h).sqrt())
}

/// `L²` norm of a sampled function.
pub fn l2_norm(grid: &Grid, u: &[f64]) -> Result<f64> {
    l2_distance(grid, u, &vec![0.0; u.len()])
}

/// Piecewise-constant positive coefficient with breakpoints
/// `a_0 < a_1 < … < a_K`; cell `i` is `[a_i, a_{i+1})`, the last cell is
/// closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseProfile {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return Err(Error::Malformed(format!("{} breakpoints for {} values", breakpoints.len(), values.len())));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::Malformed("non-finite breakpoint".into()));
        }
        if let Some(w) = breakpoints.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Malformed(format!("breakpoints not strictly increasing at index {}", w + 1)));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Malformed(format!("value {i} = {} is not positive", values[i])));
        }
        Ok(PiecewiseProfile { breakpoints, values })
    }

    pub fn constant(lo: f64, hi: f64, value: f64) -> Result<Self> {
        PiecewiseProfile::new(vec![lo, hi], vec![value])
    }

    /// Builds a profile from `(length, value)` cells starting at `lo`,
    /// dropping zero-length cells and merging equal neighbours.
    pub fn from_cells(lo: f64, cells: &[(f64, f64)]) -> Result<Self> {
        let mut breakpoints = vec![lo];
        let mut values: Vec<f64> = Vec::new();
        let mut x = lo;
        for &(len, v) in cells {
            if len < 0.0 {
                return Err(Error::Malformed(format!("negative cell length {len}")));
            }
            if len == 0.0 {
                continue;
            }
            x += len;
            if values.last() == Some(&v) {
                *breakpoints.last_mut().unwrap() = x;
            } else {
                values.push(v);
                breakpoints.push(x);
            }
        }
        PiecewiseProfile::new(breakpoints, values)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn hi(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Index of the half-open cell containing `x`; points outside the
    /// support map to the nearest end cell.
    pub fn cell_index(&self, x: f64) -> usize {
        let k = self.values.len();
        // number of interior breakpoints <= x
        let interior = &self.breakpoints[1..k];
        interior.partition_point(|&b| b <= x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.values[self.cell_index(x)]
    }

    /// `[start, end]` of cell `i`.
    pub fn cell(&self, i: usize) -> (f64, f64) {
        (self.breakpoints[i], self.breakpoints[i + 1])
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Restriction to `[lo, hi]` shifted so that `lo` maps to `0`.
    pub fn window(&self, lo: f64, hi: f64) -> Result<Self> {
        let mut cells = Vec::new();
        for i in 0..self.len() {
            let (a, b) = self.cell(i);
            let (a, b) = if i == 0 { (a.min(lo), b) } else { (a, b) };
            let (a, b) = if i + 1 == self.len() { (a, b.max(hi)) } else { (a, b) };
            let s = a.max(lo);
            let e = b.min(hi);
            if e > s {
                cells.push((e - s, self.values[i]));
            }
        }
        PiecewiseProfile::from_cells(0.0, &cells)
    }

    /// Continues the last cell (or a new cell of `value`) up to `hi`.
    pub fn extended(&self, hi: f64, value: f64) -> Result<Self> {
        let mut breakpoints = self.breakpoints.clone();
        let mut values = self.values.clone();
        if hi <= self.hi() {
            return Ok(self.clone());
        }
        if *values.last().unwrap() == value {
            *breakpoints.last_mut().unwrap() = hi;
        } else {
            breakpoints.push(hi);
            values.push(value);
        }
        PiecewiseProfile::new(breakpoints, values)
    }

    /// Mirror image on the same support: `x ↦ lo + hi - x`.
    pub fn mirrored(&self) -> Self {
        let (lo, hi) = (self.lo(), self.hi());
        let breakpoints = self.breakpoints.iter().rev().map(|b| lo + hi - b).collect();
        let values = self.values.iter().rev().copied().collect();
        PiecewiseProfile { breakpoints, values }
    }

    /// Harmonic average of the profile over `[x0, x1]`:
    /// `(x1 - x0) / ∫ 1/c`. Used for finite-volume face coefficients.
    pub fn harmonic_average(&self, x0: f64, x1: f64) -> f64 {
        let i0 = self.cell_index(x0);
        let i1 = self.cell_index(x1);
        if i0 == i1 {
            return self.values[i0];
        }
        let mut resistance = 0.0;
        for i in i0..=i1 {
            let (a, b) = self.cell(i);
            let s = if i == i0 { x0 } else { a };
            let e = if i == i1 { x1 } else { b };
            resistance += (e - s).max(0.0) / self.values[i];
        }
        (x1 - x0) / resistance
    }

    /// Arithmetic average over `[x0, x1]`.
    pub fn mean(&self, x0: f64, x1: f64) -> f64 {
        let i0 = self.cell_index(x0);
        let i1 = self.cell_index(x1);
        if i0 == i1 {
            return self.values[i0];
        }
        let mut acc = 0.0;
        for i in i0..=i1 {
            let (a, b) = self.cell(i);
            let s = if i == i0 { x0 } else { a };
            let e = if i == i1 { x1 } else { b };
            acc += (e - s).max(0.0) * self.values[i];
        }
        acc / (x1 - x0)
    }

    /// Interior breakpoints `a_1 … a_{K-1}`.
    pub fn interior_breakpoints(&self) -> &[f64] {
        &self.breakpoints[1..self.values.len()]
    }
}

/// A simple function `Σ λ_n χ_(a_{n-1}, a_n)` with alternating signs, the
/// divergence-form approximation target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SStarTarget {
    pub levels: Vec<f64>,
    pub breakpoints: Vec<f64>,
}

/// Outcome of [`validate_sstar`].
#[derive(Debug, Clone, PartialEq)]
pub struct SStarReport {
    pub valid: bool,
    pub diagnostics: Vec<String>,
}

/// Piecewise-constant function with arbitrary finite values; cells as in
/// [`PiecewiseProfile`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return Err(Error::Malformed(format!("{} breakpoints for {} values", breakpoints.len(), values.len())));
        }
        if breakpoints.iter().chain(&values).any(|b| !b.is_finite()) {
            return Err(Error::Malformed("non-finite breakpoint or value".into()));
        }
        if let Some(w) = breakpoints.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Malformed(format!("breakpoints not strictly increasing at index {}", w + 1)));
        }
        Ok(StepFunction { breakpoints, values })
    }

    pub fn constant(lo: f64, hi: f64, value: f64) -> Result<Self> {
        StepFunction::new(vec![lo, hi], vec![value])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn hi(&self) -> f64 {
        self.breakpoints[self.values.len()]
    }

    pub fn cell(&self, i: usize) -> (f64, f64) {
        (self.breakpoints[i], self.breakpoints[i + 1])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.values.len();
        self.values[self.breakpoints[1..k].partition_point(|&b| b <= x)]
    }

    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        grid.sample(|x| self.eval(x))
    }
}

impl From<&SStarTarget> for StepFunction {
    fn from(t: &SStarTarget) -> Self {
        StepFunction { breakpoints: t.breakpoints.clone(), values: t.levels.clone() }
    }
}

impl SStarTarget {
    pub fn new(levels: Vec<f64>, breakpoints: Vec<f64>) -> Result<Self> {
        let t = SStarTarget { levels, breakpoints };
        t.check_structure()?;
        Ok(t)
    }

    /// Structural well-formedness: even count, levels in `(-1,1)\{0}`,
    /// breakpoints strictly increasing from 0 to 1.
    pub fn check_structure(&self) -> Result<()> {
        let n = self.levels.len();
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::Malformed(format!("need an even, nonzero number of levels, got {n}")));
        }
        if self.breakpoints.len() != n + 1 {
            return Err(Error::Malformed(format!("{} breakpoints for {n} levels", self.breakpoints.len())));
        }
        if self.breakpoints[0] != 0.0 || self.breakpoints[n] != 1.0 {
            return Err(Error::Malformed("breakpoints must start at 0 and end at 1".into()));
        }
        if self.breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Malformed("breakpoints not strictly increasing".into()));
        }
        if let Some(l) = self.levels.iter().find(|l| !(l.abs() < 1.0 && **l != 0.0)) {
            return Err(Error::Malformed(format!("level {l} not in (-1,1)\\{{0}}")));
        }
        Ok(())
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.levels.len();
        let i = self.breakpoints[1..n].partition_point(|&b| b <= x);
        self.levels[i]
    }

    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        grid.sample(|x| self.eval(x))
    }
}

const SSTAR_TOL: f64 = 1e-10;

/// Checks sign alternation and the momentum restriction
/// `|a_n - a_{n-1}| |f(λ_n)| = |a_{n+1} - a_n| |f(λ_{n+1})|` at every junction.
pub fn validate_sstar(target: &SStarTarget, nl: &Nonlinearity) -> Result<SStarReport> {
    target.check_structure()?;
    let lengths = target.lengths();
    let mut diagnostics = Vec::new();
    for n in 0..target.levels.len() - 1 {
        let (l0, l1) = (target.levels[n], target.levels[n + 1]);
        if l0 * l1 >= 0.0 {
            diagnostics.push(format!("sign: levels {} and {} (λ={l0}, λ={l1}) do not alternate", n + 1, n + 2));
            continue;
        }
        let left = lengths[n] * nl.f(l0).abs();
        let right = lengths[n + 1] * nl.f(l1).abs();
        if (left - right).abs() > SSTAR_TOL {
            diagnostics.push(format!(
                "momentum: pair ({}, {}) has L|f(λ)| = {left:.12e} vs {right:.12e}",
                n + 1,
                n + 2
            ));
        }
    }
    Ok(SStarReport { valid: diagnostics.is_empty(), diagnostics })
}

/// A sampled equilibrium together with the coefficient realising it.
///
/// `start_flux` is the momentum `p(0)` (`μ m_x` or `m_x`), so the state can be
/// re-integrated from `(boundary.0, start_flux)` through `profile`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub profile: PiecewiseProfile,
    pub boundary: (f64, f64),
    pub kind: Kind,
    pub start_flux: f64,
}

impl SteadyState {
    pub fn new(grid: Grid, values: Vec<f64>, profile: PiecewiseProfile, kind: Kind, start_flux: f64) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::GridMismatch(values.len(), grid.n));
        }
        if let Some(v) = values.iter().find(|v| !(v.abs() <= 1.0 + 1e-9)) {
            return Err(Error::Infeasible(format!("state value {v} outside [-1, 1]")));
        }
        let boundary = (values[0], values[grid.n - 1]);
        Ok(SteadyState { grid, values, profile, boundary, kind, start_flux })
    }

    /// The trivial state `m ≡ 0` with a constant coefficient.
    pub fn zero(grid: Grid, kind: Kind, coefficient: f64) -> Result<Self> {
        let profile = PiecewiseProfile::constant(grid.lo, grid.hi, coefficient)?;
        SteadyState::new(grid, vec![0.0; grid.n], profile, kind, 0.0)
    }

    pub fn law_at(&self, x: f64) -> CellLaw {
        CellLaw::new(self.kind, self.profile.eval(x))
    }

    /// Phase point `(m(0), m_x(0+))`.
    pub fn start_point(&self) -> PhasePoint {
        let law = self.law_at(self.grid.lo);
        PhasePoint::new(self.boundary.0, law.slope(self.start_flux))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// A one-parameter family of steady states `s ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStatePath {
    pub params: Vec<f64>,
    pub states: Vec<SteadyState>,
}

impl SteadyStatePath {
    pub fn new(params: Vec<f64>, states: Vec<SteadyState>) -> Result<Self> {
        if params.len() != states.len() || states.is_empty() {
            return Err(Error::Malformed(format!("{} parameters for {} states", params.len(), states.len())));
        }
        if params.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Malformed("path parameters not increasing".into()));
        }
        Ok(SteadyStatePath { params, states })
    }

    /// Uniform parameters `j / M`.
    pub fn uniform(states: Vec<SteadyState>) -> Result<Self> {
        let m = states.len().saturating_sub(1).max(1) as f64;
        let params = (0..states.len()).map(|j| j as f64 / m).collect();
        SteadyStatePath::new(params, states)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> &SteadyState {
        &self.states[0]
    }

    pub fn last(&self) -> &SteadyState {
        self.states.last().unwrap()
    }

    /// Max `L²` distance between consecutive members.
    pub fn continuity_modulus(&self) -> f64 {
        self.step_distances().into_iter().fold(0.0, f64::max)
    }

    pub fn step_distances(&self) -> Vec<f64> {
        self.states
            .windows(2)
            .map(|w| l2_distance(&w[0].grid, &w[0].values, &w[1].values).unwrap_or(f64::INFINITY))
            .collect()
    }

    pub fn reversed(&self) -> Self {
        let states: Vec<_> = self.states.iter().rev().cloned().collect();
        let params = self.params.iter().rev().map(|s| 1.0 - s).collect();
        SteadyStatePath { params, states }
    }

    /// Concatenation; a duplicated junction member is dropped.
    pub fn concat(&self, other: &SteadyStatePath) -> Result<Self> {
        let mut states = self.states.clone();
        let skip = match (self.states.last(), other.states.first()) {
            (Some(a), Some(b)) if a.values == b.values && a.profile == b.profile => 1,
            _ => 0,
        };
        states.extend(other.states.iter().skip(skip).cloned());
        SteadyStatePath::uniform(states)
    }

    /// Every member within `[-1-1e-9, 1+1e-9]` with boundary data in `[-1, 1]`.
    pub fn is_admissible(&self) -> bool {
        self.states.iter().all(|s| s.max_abs() <= 1.0 + 1e-9 && s.boundary.0.abs() <= 1.0 && s.boundary.1.abs() <= 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::default_nonlinearity;
    use proptest::prelude::*;

    #[test]
    fn l2_examples() {
        let g = Grid::unit(101).unwrap();
        let u = vec![1.0; 101];
        assert_eq!(l2_distance(&g, &u, &u).unwrap(), 0.0);
        assert!((l2_distance(&g, &u, &vec![0.0; 101]).unwrap() - 1.0).abs() < 1e-14);
        let g = Grid::unit(10_001).unwrap();
        let s = g.sample(|x| (std::f64::consts::PI * x).sin());
        let d = l2_norm(&g, &s).unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-6);
        assert!(matches!(l2_distance(&g, &s, &[0.0; 3]), Err(Error::GridMismatch(..))));
    }

    #[test]
    fn profile_half_open_cells() {
        let p = PiecewiseProfile::new(vec![0.0, 0.5, 1.0], vec![2.0, 3.0]).unwrap();
        assert_eq!(p.eval(0.0), 2.0);
        assert_eq!(p.eval(0.4999), 2.0);
        assert_eq!(p.eval(0.5), 3.0);
        assert_eq!(p.eval(1.0), 3.0);
        assert_eq!(p.eval(7.0), 3.0);
        assert_eq!(p.eval(-1.0), 2.0);
        assert!(PiecewiseProfile::new(vec![0.0, 0.5, 0.5], vec![1.0, 1.0]).is_err());
        assert!(PiecewiseProfile::new(vec![0.0, 1.0], vec![0.0]).is_err());
        // harmonic average across the jump at the midpoint of [0.4, 0.6]
        let h = p.harmonic_average(0.4, 0.6);
        assert!((h - 2.0 * 2.0 * 3.0 / 5.0).abs() < 1e-14);
    }

    #[test]
    fn profile_window_and_mirror() {
        let p = PiecewiseProfile::new(vec![0.0, 0.3, 2.0], vec![1.0, 4.0]).unwrap();
        let w = p.window(0.25, 1.25).unwrap();
        assert_eq!(w.breakpoints(), &[0.0, 0.04999999999999999, 1.0]);
        assert_eq!(w.values(), &[1.0, 4.0]);
        let m = p.mirrored();
        assert_eq!(m.values(), &[4.0, 1.0]);
        assert!((m.breakpoints()[1] - 1.7).abs() < 1e-15);
    }

    #[test]
    fn sstar_examples() {
        let nl = default_nonlinearity();
        let ok = SStarTarget::new(vec![0.5, -0.5], vec![0.0, 0.5, 1.0]).unwrap();
        assert!(validate_sstar(&ok, &nl).unwrap().valid);
        let same_sign = SStarTarget::new(vec![0.5, 0.5], vec![0.0, 0.5, 1.0]).unwrap();
        let r = validate_sstar(&same_sign, &nl).unwrap();
        assert!(!r.valid && r.diagnostics[0].starts_with("sign"));
        // |f(0.5)|·0.5 = 0.1875 vs |f(-0.9)|·0.5 = 0.0855
        let lopsided = SStarTarget::new(vec![0.5, -0.9], vec![0.0, 0.5, 1.0]).unwrap();
        let r = validate_sstar(&lopsided, &nl).unwrap();
        assert!(!r.valid && r.diagnostics[0].starts_with("momentum"));
        assert!((nl.f(0.5) * 0.5 - 0.1875).abs() < 1e-15);
        assert!((nl.f(-0.9).abs() * 0.5 - 0.0855).abs() < 1e-15);
        let malformed = SStarTarget { levels: vec![0.5, -0.5], breakpoints: vec![0.0, 0.7, 0.6] };
        assert!(validate_sstar(&malformed, &nl).is_err());
    }

    proptest! {
        #[test]
        fn sstar_reflection_invariant(l0 in 0.05f64..0.95, l1 in 0.05f64..0.95, a in 0.1f64..0.9) {
            let nl = default_nonlinearity();
            let t = SStarTarget::new(vec![l0, -l1], vec![0.0, a, 1.0]).unwrap();
            let r = SStarTarget::new(vec![-l0, l1], vec![0.0, a, 1.0]).unwrap();
            prop_assert_eq!(validate_sstar(&t, &nl).unwrap().valid, validate_sstar(&r, &nl).unwrap().valid);
        }

        #[test]
        fn l2_triangle(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::unit(257).unwrap();
            let mut draw = || (0..257).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
            let (u, v, w) = (draw(), draw(), draw());
            let uv = l2_distance(&g, &u, &v).unwrap();
            let vw = l2_distance(&g, &v, &w).unwrap();
            let uw = l2_distance(&g, &u, &w).unwrap();
            prop_assert!(uw <= uv + vw + 1e-12);
        }
    }
}
