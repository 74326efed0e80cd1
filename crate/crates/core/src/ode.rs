//! Adaptive Dormand–Prince 5(4) integrator for planar systems.
//!
//! Values at requested sample abscissae and at located events are produced
//! by a fresh Runge–Kutta step from the last accepted point rather than by
//! interpolation, so they carry the same local accuracy as accepted steps.

use crate::error::{Error, Result};

pub type State = [f64; 2];

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

/// Guard on `|m|` beyond which an orbit is declared unbounded.
pub const BLOW_UP_GUARD: f64 = 10.0;

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Dopri5::with_tol(1e-10)
    }
}

/// Scalar event function `g(x, y)`; a sign change terminates integration.
pub type EventFn<'a> = &'a dyn Fn(f64, &State) -> f64;

#[derive(Debug, Clone, Default)]
pub struct Solution {
    /// `(x, y)` at each requested sample abscissa reached.
    pub samples: Vec<(f64, State)>,
    /// Accepted step endpoints, starting with the initial point.
    pub steps: Vec<(f64, State)>,
    pub end: (f64, State),
    pub event: Option<(f64, State)>,
}

impl Dopri5 {
    pub fn with_tol(tol: f64) -> Self {
        Dopri5 { rtol: tol, atol: tol, h_max: f64::INFINITY, max_steps: 2_000_000 }
    }

    fn step<F: Fn(f64, &State) -> State>(rhs: &F, x: f64, y: &State, h: f64) -> (State, State) {
        let mut k = [[0.0; 2]; 7];
        k[0] = rhs(x, y);
        for s in 1..7 {
            let mut ys = *y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    ys[0] += h * a * kj[0];
                    ys[1] += h * a * kj[1];
                }
            }
            k[s] = rhs(x + C[s] * h, &ys);
        }
        let mut y_new = *y;
        let mut err = [0.0; 2];
        for s in 0..7 {
            y_new[0] += h * B[s] * k[s][0];
            y_new[1] += h * B[s] * k[s][1];
            err[0] += h * E[s] * k[s][0];
            err[1] += h * E[s] * k[s][1];
        }
        (y_new, err)
    }

    fn error_norm(&self, y: &State, y_new: &State, err: &State) -> f64 {
        let mut acc = 0.0;
        for i in 0..2 {
            let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
            acc += (err[i] / sc).powi(2);
        }
        (acc / 2.0).sqrt()
    }

    /// Integrates `y' = rhs(x, y)` from `x0` to `x1` (either direction).
    ///
    /// `samples` must be ordered in the direction of integration and lie in
    /// `[x0, x1]`. If `event` changes sign, integration stops at the located
    /// root (bisection to `1e-13` in `x`). A starting value of exactly zero is
    /// not an event.
    pub fn integrate<F: Fn(f64, &State) -> State>(
        &self,
        rhs: F,
        x0: f64,
        y0: State,
        x1: f64,
        samples: &[f64],
        event: Option<EventFn<'_>>,
    ) -> Result<Solution> {
        let dir = if x1 >= x0 { 1.0 } else { -1.0 };
        let span = (x1 - x0).abs();
        let mut sol = Solution { steps: vec![(x0, y0)], ..Default::default() };
        let mut next_sample = 0;
        while next_sample < samples.len() && (samples[next_sample] - x0) * dir <= 0.0 {
            sol.samples.push((samples[next_sample], y0));
            next_sample += 1;
        }
        if span == 0.0 {
            sol.end = (x0, y0);
            return Ok(sol);
        }
        let mut x = x0;
        let mut y = y0;
        let mut g_prev = event.map(|g| g(x0, &y0)).filter(|v| *v != 0.0);
        let scale = y0[0].abs().max(y0[1].abs()).max(1e-3);
        let d0 = rhs(x0, &y0);
        let d_norm = d0[0].abs().max(d0[1].abs()).max(1e-12);
        let mut h = (0.01 * scale / d_norm).min(span).min(self.h_max).max(span * 1e-12) * dir;
        let mut steps = 0usize;
        loop {
            if steps > self.max_steps {
                return Err(Error::TooManySteps(self.max_steps));
            }
            steps += 1;
            let remaining = x1 - x;
            let last = (h.abs() >= remaining.abs()) || remaining.abs() <= 1e-14 * span.max(1.0);
            if last {
                h = remaining;
            }
            let (y_new, err) = Self::step(&rhs, x, &y, h);
            let en = self.error_norm(&y, &y_new, &err);
            if !en.is_finite() {
                h *= 0.25;
                continue;
            }
            if en > 1.0 {
                let factor = (0.9 * en.powf(-0.2)).max(0.2);
                h *= factor;
                continue;
            }
            let x_new = if last { x1 } else { x + h };
            // event detection on the accepted step
            if let Some(g) = event {
                let g_new = g(x_new, &y_new);
                match g_prev {
                    Some(gp) if g_new == 0.0 || gp.signum() != g_new.signum() => {
                        let (xe, ye) = self.locate(&rhs, g, x, &y, x_new - x, gp);
                        while next_sample < samples.len() && (samples[next_sample] - xe) * dir <= 0.0 {
                            let s = samples[next_sample];
                            sol.samples.push((s, Self::step(&rhs, x, &y, s - x).0));
                            next_sample += 1;
                        }
                        sol.steps.push((xe, ye));
                        sol.end = (xe, ye);
                        sol.event = Some((xe, ye));
                        return Ok(sol);
                    }
                    None if g_new != 0.0 => g_prev = Some(g_new),
                    Some(_) => g_prev = Some(g_new),
                    None => {}
                }
            }
            while next_sample < samples.len() && (samples[next_sample] - x_new) * dir <= 0.0 {
                let s = samples[next_sample];
                let ys = if s == x_new { y_new } else { Self::step(&rhs, x, &y, s - x).0 };
                sol.samples.push((s, ys));
                next_sample += 1;
            }
            x = x_new;
            y = y_new;
            if y[0].abs() > BLOW_UP_GUARD || !y[0].is_finite() {
                return Err(Error::BlowUp { x, m_abs: y[0].abs() });
            }
            sol.steps.push((x, y));
            if last {
                sol.end = (x, y);
                return Ok(sol);
            }
            let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * factor).abs().min(self.h_max) * dir;
        }
    }

    fn locate<F: Fn(f64, &State) -> State>(
        &self,
        rhs: &F,
        g: EventFn<'_>,
        x: f64,
        y: &State,
        h: f64,
        g_start: f64,
    ) -> (f64, State) {
        let mut lo = 0.0;
        let mut hi = h;
        let mut y_hi = Self::step(rhs, x, y, h).0;
        for _ in 0..200 {
            if (hi - lo).abs() <= 1e-13 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            let ym = Self::step(rhs, x, y, mid).0;
            let gm = g(x + mid, &ym);
            if gm == 0.0 {
                return (x + mid, ym);
            }
            if gm.signum() == g_start.signum() {
                lo = mid;
            } else {
                hi = mid;
                y_hi = ym;
            }
        }
        (x + hi, y_hi)
    }
}
