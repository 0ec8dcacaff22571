//! Periodic orbits as fixed points of iterated stroboscopic maps.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ode::jet::{map_jet1, MapJet1, Section};
use crate::ode::{integrate, integrate_damping, sample_trajectory, Flow, Model, ModelParams, OscState, Tolerance, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stability {
    Stable,
    Unstable,
}

/// `R_{k,n}`: `k` maxima of `x` per orbit, orbit period `n` forcing periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ResonanceLabel {
    pub k: u32,
    pub n: u32,
}

impl std::fmt::Display for ResonanceLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "R{},{}", self.k, self.n)
    }
}

/// Numerical settings for shooting and orbit classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitSettings {
    pub integration: Tolerance,
    /// Accepted `|P^n(s0) - s0|`.
    pub residual: f64,
    pub max_iterations: usize,
    /// Newton step halvings per iteration.
    pub max_halvings: usize,
    pub symmetry_tol: f64,
    /// Closure tolerance when checking whether a smaller period divides `n`.
    pub minimal_period_tol: f64,
    pub samples_per_period: usize,
}

impl Default for OrbitSettings {
    fn default() -> Self {
        Self {
            integration: Tolerance::default(),
            residual: 1e-9,
            max_iterations: 25,
            max_halvings: 8,
            symmetry_tol: 1e-7,
            minimal_period_tol: 1e-8,
            samples_per_period: 64,
        }
    }
}

/// A refined periodic orbit with its Floquet data.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit {
    pub params: ModelParams,
    /// Orbit period in forcing periods.
    pub n: u32,
    /// State at forcing phase 0.
    pub s0: OscState,
    pub multipliers: [Complex64; 2],
    pub stability: Stability,
    pub symmetric: bool,
    pub winding: u32,
    pub x_max: f64,
    /// `|P^n(s0) - s0|` at acceptance.
    pub residual: f64,
}

impl PeriodicOrbit {
    pub fn label(&self) -> ResonanceLabel {
        ResonanceLabel { k: self.winding, n: self.n }
    }

    pub fn period(&self) -> f64 {
        self.n as f64 * self.params.forcing_period()
    }

    pub fn is_stable(&self) -> bool {
        self.stability == Stability::Stable
    }

    /// Product of the multipliers (determinant of the monodromy matrix).
    pub fn multiplier_product(&self) -> f64 {
        (self.multipliers[0] * self.multipliers[1]).re
    }
}

/// Eigenvalues of a 2x2 matrix from its trace and determinant.
pub fn eigenvalues2(m: &Matrix2<f64>) -> [Complex64; 2] {
    let tr = m.trace();
    let det = m.determinant();
    let half = 0.5 * tr;
    let disc = half * half - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        // larger magnitude root first, smaller from det for accuracy
        let big = if half >= 0.0 { half + r } else { half - r };
        let small = if big != 0.0 { det / big } else { half - r };
        [Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [Complex64::new(half, im), Complex64::new(half, -im)]
    }
}

fn stability_of(mults: &[Complex64; 2]) -> Stability {
    if mults.iter().all(|m| m.norm() < 1.0) {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

/// `P^n(s)`: the state after `n` forcing periods starting at phase 0.
pub fn stroboscopic_map(p: &ModelParams, s: OscState, n: u32, tol: &Tolerance) -> Result<OscState> {
    if n == 0 {
        return Err(Error::InvalidParams("period multiple must be at least 1".into()));
    }
    integrate(p, s, 0.0, n as f64 * p.forcing_period(), tol)
}

fn vec(s: OscState) -> Vector2<f64> {
    Vector2::new(s.x, s.v)
}

fn state(v: Vector2<f64>) -> OscState {
    OscState::new(v[0], v[1])
}

/// Damped Newton solve of `map(s) = s` for the given section.
pub(crate) fn newton_fixed_point(
    p: &ModelParams,
    guess: OscState,
    section: Section,
    settings: &OrbitSettings,
) -> Result<(OscState, MapJet1, f64)> {
    let tol = &settings.integration;
    let mut s = guess;
    let mut jet = map_jet1(p, s, section, None, tol)?;
    let mut r = jet.value - vec(s);
    let mut rn = r.norm();
    let target = settings.residual * 0.1;
    for _ in 0..settings.max_iterations {
        if rn <= target {
            return Ok((s, jet, rn));
        }
        let a = jet.jac - Matrix2::identity();
        let det = a.determinant();
        if det.abs() < 1e-12 * (1.0 + a.norm_squared()) {
            return Err(Error::SingularJacobian(det));
        }
        let delta = a.try_inverse().ok_or(Error::SingularJacobian(det))? * (-r);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=settings.max_halvings {
            let trial = state(vec(s) + delta * lambda);
            if let Ok(tj) = map_jet1(p, trial, section, None, tol) {
                let tr = tj.value - vec(trial);
                if tr.norm() < rn {
                    s = trial;
                    jet = tj;
                    r = tr;
                    rn = tr.norm();
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if rn <= settings.residual {
        Ok((s, jet, rn))
    } else {
        Err(Error::NoConvergence { iterations: settings.max_iterations, residual: rn })
    }
}

/// Newton shooting for a fixed point of `P^n` near `guess`, followed by
/// classification. If a proper divisor of `n` already closes the orbit the
/// returned orbit carries the minimal period.
pub fn refine_orbit(p: &ModelParams, guess: OscState, n: u32, settings: &OrbitSettings) -> Result<PeriodicOrbit> {
    if n == 0 {
        return Err(Error::InvalidParams("period multiple must be at least 1".into()));
    }
    p.validate()?;
    let (s0, _, _) = newton_fixed_point(p, guess, Section::Full(n), settings)?;
    let n_min = minimal_period(p, s0, n, settings)?;
    build_orbit(p, s0, n_min, settings)
}

/// Newton shooting on the reflected half map; converges only to symmetric
/// orbits. `n` must be odd.
pub fn refine_symmetric_orbit(p: &ModelParams, guess: OscState, n: u32, settings: &OrbitSettings) -> Result<PeriodicOrbit> {
    if n % 2 == 0 {
        return Err(Error::NotApplicable("symmetric orbits have an odd period multiple"));
    }
    p.validate()?;
    let (s0, _, _) = newton_fixed_point(p, guess, Section::Half(n), settings)?;
    build_orbit(p, s0, n, settings)
}

fn minimal_period(p: &ModelParams, s0: OscState, n: u32, settings: &OrbitSettings) -> Result<u32> {
    if n == 1 {
        return Ok(1);
    }
    let mut flow = Flow::new(*p, s0, 0.0, &settings.integration)?;
    for d in 1..n {
        let s = flow.advance_to(d as f64 * p.forcing_period())?;
        if n % d == 0 && s.dist(&s0) < settings.minimal_period_tol {
            return Ok(d);
        }
    }
    Ok(n)
}

/// Classifies a point assumed to lie on an `n`-periodic orbit.
pub(crate) fn build_orbit(p: &ModelParams, s0: OscState, n: u32, settings: &OrbitSettings) -> Result<PeriodicOrbit> {
    let jet = map_jet1(p, s0, Section::Full(n), None, &settings.integration)?;
    let residual = (jet.value - vec(s0)).norm();
    let multipliers = eigenvalues2(&jet.jac);
    let traj = sample_trajectory(p, s0, 0.0, n as f64 * p.forcing_period(), settings.samples_per_period, &settings.integration)?;
    let (winding, x_max) = match count_maxima(&traj) {
        Ok(w) => (w, peak_abs(&traj)),
        Err(Error::DegenerateOrbit) if p.a == 0.0 => (0, s0.x.abs()),
        Err(e) => return Err(e),
    };
    let symmetric = symmetric_shift(p, s0, n, settings)?.is_some();
    Ok(PeriodicOrbit {
        params: *p,
        n,
        s0,
        multipliers,
        stability: stability_of(&multipliers),
        symmetric,
        winding,
        x_max,
        residual,
    })
}

/// Classifies a converged fixed point of a section map whose value and
/// Jacobian are already known, without re-integrating the monodromy.
pub(crate) fn orbit_on_section(
    p: &ModelParams,
    s0: OscState,
    section: Section,
    value: Vector2<f64>,
    jac: &Matrix2<f64>,
    settings: &OrbitSettings,
) -> Result<PeriodicOrbit> {
    let n = section.periods();
    let monodromy = match section {
        Section::Full(_) => *jac,
        Section::Half(_) => jac * jac,
    };
    let multipliers = eigenvalues2(&monodromy);
    let traj = sample_trajectory(p, s0, 0.0, n as f64 * p.forcing_period(), settings.samples_per_period, &settings.integration)?;
    let residual = match section {
        Section::Full(_) => (value - vec(s0)).norm(),
        Section::Half(_) => {
            let once = OscState::new(value[0], value[1]);
            (map_jet1(p, once, section, None, &settings.integration)?.value - vec(s0)).norm()
        }
    };
    let winding = count_maxima(&traj).unwrap_or(0);
    let x_max = peak_abs(&traj);
    let symmetric = match section {
        Section::Half(_) => true,
        Section::Full(_) => symmetric_shift(p, s0, n, settings)?.is_some(),
    };
    Ok(PeriodicOrbit { params: *p, n, s0, multipliers, stability: stability_of(&multipliers), symmetric, winding, x_max, residual })
}

/// Returns the odd number of half periods after which the orbit maps onto its
/// own reflection, if any.
fn symmetric_shift(p: &ModelParams, s0: OscState, n: u32, settings: &OrbitSettings) -> Result<Option<u32>> {
    let half = PI / p.omega;
    let mut flow = Flow::new(*p, s0, 0.0, &settings.integration)?;
    for k in 0..n {
        let m = 2 * k + 1;
        let s = flow.advance_to(m as f64 * half)?;
        if s.mirrored().dist(&s0) < settings.symmetry_tol {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

/// True iff the orbit is invariant under `(x, v, t) -> (-x, -v, t + pi/omega)`.
pub fn classify_symmetry(o: &PeriodicOrbit, settings: &OrbitSettings) -> Result<bool> {
    Ok(symmetric_shift(&o.params, o.s0, o.n, settings)?.is_some())
}

/// Phase-0 state of the reflected orbit `-x(t + pi/omega)`.
pub fn mirror_state(p: &ModelParams, s0: OscState, tol: &Tolerance) -> Result<OscState> {
    Ok(integrate(p, s0, 0.0, PI / p.omega, tol)?.mirrored())
}

/// The mirror image of an orbit, refined as an orbit in its own right.
pub fn mirror_orbit(o: &PeriodicOrbit, settings: &OrbitSettings) -> Result<PeriodicOrbit> {
    let guess = mirror_state(&o.params, o.s0, &settings.integration)?;
    refine_orbit(&o.params, guess, o.n, settings)
}

/// Dense samples over one orbit period.
pub fn orbit_trajectory(o: &PeriodicOrbit, settings: &OrbitSettings) -> Result<Trajectory> {
    sample_trajectory(&o.params, o.s0, 0.0, o.period(), settings.samples_per_period, &settings.integration)
}

/// Number of strict local maxima of `x(t)` over one orbit period.
pub fn winding_number(o: &PeriodicOrbit, settings: &OrbitSettings) -> Result<u32> {
    count_maxima(&orbit_trajectory(o, settings)?)
}

/// Peak `|x(t)|` over one orbit period.
pub fn amplitude(o: &PeriodicOrbit, settings: &OrbitSettings) -> Result<f64> {
    let traj = orbit_trajectory(o, settings)?;
    count_maxima(&traj)?;
    Ok(peak_abs(&traj))
}

/// Cyclic count of strict local maxima over a closed trajectory whose last
/// sample repeats the first. Runs of equal samples count once.
pub(crate) fn count_maxima(traj: &Trajectory) -> Result<u32> {
    let mut xs: Vec<f64> = traj.samples.iter().map(|(_, s)| s.x).collect();
    xs.pop();
    xs.dedup();
    if xs.len() > 1 && xs.first() == xs.last() {
        xs.pop();
    }
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if xs.len() < 3 || hi - lo <= 1e-9 {
        return Err(Error::DegenerateOrbit);
    }
    let n = xs.len();
    let count = (0..n).filter(|&i| xs[i] > xs[(i + n - 1) % n] && xs[i] > xs[(i + 1) % n]).count();
    Ok(count as u32)
}

/// Largest `|x|`, refined by a parabola through the extreme sample and its neighbours.
pub(crate) fn peak_abs(traj: &Trajectory) -> f64 {
    let xs: Vec<f64> = traj.samples.iter().map(|(_, s)| s.x.abs()).collect();
    let n = xs.len();
    let (imax, _) = xs.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc });
    if imax == 0 || imax + 1 >= n {
        return xs[imax];
    }
    quad_peak(xs[imax - 1], xs[imax], xs[imax + 1])
}

/// Vertex value of the parabola through three equally spaced samples.
pub(crate) fn quad_peak(y0: f64, y1: f64, y2: f64) -> f64 {
    let curv = y0 - 2.0 * y1 + y2;
    if curv >= 0.0 {
        return y1;
    }
    y1 - (y0 - y2).powi(2) / (8.0 * curv)
}

/// Determinant of the monodromy predicted by Liouville's formula.
pub fn expected_multiplier_product(o: &PeriodicOrbit, tol: &Tolerance) -> Result<f64> {
    match o.params.model {
        Model::Duffing => Ok((-o.params.gamma * o.period()).exp()),
        Model::DuffingVanDerPol => {
            let (_, integral) = integrate_damping(&o.params, o.s0, 0.0, o.period(), tol)?;
            Ok((-integral).exp())
        }
    }
}
