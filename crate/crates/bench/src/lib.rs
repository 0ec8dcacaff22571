//! Fixed workloads shared by the benchmarks.

use nlres_core::ode::integrate;
use nlres_core::orbit::{refine_orbit, OrbitSettings, PeriodicOrbit};
use nlres_core::{ModelParams, OscState, Tolerance};

/// Forced Duffing oscillator in the period-3 isola regime.
pub fn isola_params() -> ModelParams {
    ModelParams::duffing(3.0, 0.82, 0.01)
}

/// Small-amplitude forcing above the main resonance.
pub fn main_resonance_params() -> ModelParams {
    ModelParams::duffing(0.05, 3.0, 0.01)
}

/// Attractor state after `periods` forcing periods from rest.
pub fn settled_state(p: &ModelParams, periods: f64) -> OscState {
    integrate(p, OscState::ORIGIN, 0.0, periods * p.forcing_period(), &Tolerance::default()).expect("integration from rest")
}

/// The stable period-3 orbit at [`isola_params`].
pub fn isola_orbit() -> PeriodicOrbit {
    let p = isola_params();
    refine_orbit(&p, settled_state(&p, 1020.0), 3, &OrbitSettings::default()).expect("period-3 orbit")
}
