//! Steady-state pattern synthesis and constrained boundary control for
//! bistable reaction–diffusion equations on `[0, 1]`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod model;
pub mod mult_synth;
pub mod nonlinearity;
pub mod ode;
pub mod parabolic;
pub mod path_builder;
pub mod phase_plane;
pub mod plot;
pub mod quad;
pub mod steady_synth;

pub use error::{Error, Result};
pub use model::{
    l2_distance, l2_norm, validate_sstar, CellLaw, Grid, Kind, PhasePoint, PiecewiseProfile, SStarReport, SStarTarget,
    SteadyState, SteadyStatePath, StepFunction,
};
pub use nonlinearity::{default_nonlinearity, Nonlinearity};
