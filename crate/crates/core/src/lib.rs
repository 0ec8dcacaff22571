//! Periodic responses of periodically forced Duffing-type oscillators:
//! shooting, Floquet stability, pseudo-arclength continuation, resonance
//! tongues and brute-force attractor sweeps.

pub mod error;
pub mod ode;
pub mod orbit;
pub mod continuation;
pub mod codim2;
pub mod sweep;

pub use error::{Error, Result};
pub use ode::{natural_period, vector_field, Model, ModelParams, OscState, Param, Tolerance, Trajectory};
