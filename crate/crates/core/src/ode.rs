//! Oscillator models, adaptive integration and the natural-period quadrature.

pub(crate) mod dopri;
pub mod jet;

use std::f64::consts::PI;

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use dopri::{DenseStep, Dopri5, System};

/// Which damping law the oscillator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    /// Linear damping `gamma * v`.
    Duffing,
    /// Van der Pol type damping `(x^2 - 1) * gamma * v`, negative for small `|x|`.
    DuffingVanDerPol,
}

/// A continuation / sweep parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    Omega,
    Amplitude,
    Gamma,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::Omega => "omega",
            Param::Amplitude => "A",
            Param::Gamma => "gamma",
        }
    }
}

/// Parameters of the forced oscillator `x'' + d(x) x' + omega0^2 x + beta x^3 = A cos(omega t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub model: Model,
    pub a: f64,
    pub omega: f64,
    pub gamma: f64,
    pub beta: f64,
    pub omega0: f64,
}

impl ModelParams {
    pub fn duffing(a: f64, omega: f64, gamma: f64) -> Self {
        Self { model: Model::Duffing, a, omega, gamma, beta: 1.0, omega0: 1.0 }
    }

    pub fn duffing_vdp(a: f64, omega: f64, gamma: f64) -> Self {
        Self { model: Model::DuffingVanDerPol, a, omega, gamma, beta: 1.0, omega0: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.a.is_finite() && self.omega.is_finite() && self.gamma.is_finite()) {
            return bad("non-finite parameter");
        }
        if self.a < 0.0 {
            return bad("forcing amplitude must be non-negative");
        }
        if self.omega <= 0.0 {
            return bad("forcing frequency must be positive");
        }
        if self.beta != 1.0 || self.omega0 != 1.0 {
            return bad("beta and omega0 are normalised to 1");
        }
        match self.model {
            Model::Duffing if self.gamma < 0.0 => bad("damping must be non-negative"),
            Model::DuffingVanDerPol if self.gamma <= 0.0 => bad("Van der Pol damping must be positive"),
            _ => Ok(()),
        }
    }

    /// Forcing period `2 pi / omega`.
    pub fn forcing_period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Omega => self.omega,
            Param::Amplitude => self.a,
            Param::Gamma => self.gamma,
        }
    }

    pub fn with(mut self, p: Param, value: f64) -> Self {
        match p {
            Param::Omega => self.omega = value,
            Param::Amplitude => self.a = value,
            Param::Gamma => self.gamma = value,
        }
        self
    }

    /// State-dependent damping coefficient.
    #[inline]
    pub fn damping(&self, x: f64) -> f64 {
        match self.model {
            Model::Duffing => self.gamma,
            Model::DuffingVanDerPol => (x * x - 1.0) * self.gamma,
        }
    }

    #[inline]
    fn accel(&self, t: f64, x: f64, v: f64) -> f64 {
        -self.damping(x) * v - self.omega0 * self.omega0 * x - self.beta * x * x * x + self.a * (self.omega * t).cos()
    }

    /// Partial derivatives of the acceleration: `(d/dx, d/dv)`.
    #[inline]
    fn accel_jac(&self, x: f64, v: f64) -> (f64, f64) {
        let restoring = -self.omega0 * self.omega0 - 3.0 * self.beta * x * x;
        match self.model {
            Model::Duffing => (restoring, -self.gamma),
            Model::DuffingVanDerPol => (restoring - 2.0 * self.gamma * x * v, -(x * x - 1.0) * self.gamma),
        }
    }

    /// Second derivatives of the acceleration, `[a_xx, a_xv, a_vx(=b_x), a_vv]`
    /// where `a = d accel/dx`, `b = d accel/dv`.
    #[inline]
    fn accel_hess(&self, x: f64, v: f64) -> [f64; 4] {
        match self.model {
            Model::Duffing => [-6.0 * self.beta * x, 0.0, 0.0, 0.0],
            Model::DuffingVanDerPol => {
                let g = self.gamma;
                [-6.0 * self.beta * x - 2.0 * g * v, -2.0 * g * x, -2.0 * g * x, 0.0]
            }
        }
    }

    /// Explicit parameter derivative of the acceleration at fixed `(t, x, v)`.
    #[inline]
    fn accel_param(&self, p: Param, t: f64, x: f64, v: f64) -> f64 {
        match p {
            Param::Amplitude => (self.omega * t).cos(),
            Param::Omega => -self.a * t * (self.omega * t).sin(),
            Param::Gamma => match self.model {
                Model::Duffing => -v,
                Model::DuffingVanDerPol => -(x * x - 1.0) * v,
            },
        }
    }

    /// Explicit parameter derivative of the acceleration Jacobian `(a_p, b_p)`.
    #[inline]
    fn accel_jac_param(&self, p: Param, x: f64, v: f64) -> (f64, f64) {
        match (p, self.model) {
            (Param::Gamma, Model::Duffing) => (0.0, -1.0),
            (Param::Gamma, Model::DuffingVanDerPol) => (-2.0 * x * v, -(x * x - 1.0)),
            _ => (0.0, 0.0),
        }
    }
}

/// Phase-space point `(x, dx/dt)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OscState {
    pub x: f64,
    pub v: f64,
}

impl OscState {
    pub const ORIGIN: OscState = OscState { x: 0.0, v: 0.0 };

    pub fn new(x: f64, v: f64) -> Self {
        Self { x, v }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_finite()
    }

    pub fn mirrored(self) -> Self {
        Self { x: -self.x, v: -self.v }
    }

    pub fn dist(&self, o: &OscState) -> f64 {
        (self.x - o.x).hypot(self.v - o.v)
    }

    pub(crate) fn arr(self) -> [f64; 2] {
        [self.x, self.v]
    }
}

/// Relative / absolute local error tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rel: 1e-10, abs: 1e-12 }
    }
}

impl Tolerance {
    pub fn scaled(self, factor: f64) -> Self {
        Self { rel: self.rel * factor, abs: self.abs * factor }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rel > 0.0 && self.abs > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParams("tolerances must be positive".into()))
        }
    }

    pub(crate) fn stepper(&self, controlled: usize) -> Dopri5 {
        Dopri5::new(self.rel, self.abs, controlled)
    }
}

/// Ordered samples of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<(f64, OscState)>,
    pub params: ModelParams,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub(crate) struct Base<'a>(pub &'a ModelParams);

impl System<2> for Base<'_> {
    #[inline]
    fn rhs(&self, t: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], self.0.accel(t, y[0], y[1])]
    }
}

/// Base state plus the 2x2 fundamental matrix (column-major).
struct Variational<'a>(&'a ModelParams);

impl System<6> for Variational<'_> {
    #[inline]
    fn rhs(&self, t: f64, y: &[f64; 6]) -> [f64; 6] {
        let p = self.0;
        let (a, b) = p.accel_jac(y[0], y[1]);
        [
            y[1],
            p.accel(t, y[0], y[1]),
            y[3],
            a * y[2] + b * y[3],
            y[5],
            a * y[4] + b * y[5],
        ]
    }
}

/// Base state plus the running integral of the damping coefficient.
struct DampingIntegral<'a>(&'a ModelParams);

impl System<3> for DampingIntegral<'_> {
    fn rhs(&self, t: f64, y: &[f64; 3]) -> [f64; 3] {
        [y[1], self.0.accel(t, y[0], y[1]), self.0.damping(y[0])]
    }
}

/// Right-hand side of the forced oscillator at `(s, t)`.
pub fn vector_field(p: &ModelParams, s: OscState, t: f64) -> (f64, f64) {
    (s.v, p.accel(t, s.x, s.v))
}

fn check_span(p: &ModelParams, s0: &OscState, t0: f64, t1: f64, tol: &Tolerance) -> Result<()> {
    p.validate()?;
    tol.validate()?;
    if !s0.is_finite() {
        return Err(Error::InvalidParams("initial state must be finite".into()));
    }
    if !(t1 > t0) {
        return Err(Error::InvalidParams(format!("empty time span [{t0}, {t1}]")));
    }
    Ok(())
}

fn finite_or_err(y: &[f64], t: f64) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(t))
    }
}

/// State at `t1` starting from `s0` at `t0`.
pub fn integrate(p: &ModelParams, s0: OscState, t0: f64, t1: f64, tol: &Tolerance) -> Result<OscState> {
    check_span(p, &s0, t0, t1, tol)?;
    let (mut t, mut y, mut h) = (t0, s0.arr(), 0.0);
    tol.stepper(2).advance(&Base(p), &mut t, &mut y, t1, &mut h, |_| {})?;
    finite_or_err(&y, t)?;
    Ok(OscState::new(y[0], y[1]))
}

/// State at `t1` together with the fundamental matrix `d state(t1) / d s0`.
pub fn integrate_with_variations(
    p: &ModelParams,
    s0: OscState,
    t0: f64,
    t1: f64,
    tol: &Tolerance,
) -> Result<(OscState, Matrix2<f64>)> {
    check_span(p, &s0, t0, t1, tol)?;
    let (mut t, mut h) = (t0, 0.0);
    let mut y = [s0.x, s0.v, 1.0, 0.0, 0.0, 1.0];
    tol.stepper(6).advance(&Variational(p), &mut t, &mut y, t1, &mut h, |_| {})?;
    finite_or_err(&y, t)?;
    Ok((OscState::new(y[0], y[1]), Matrix2::new(y[2], y[4], y[3], y[5])))
}

/// State at `t1` and `\int_{t0}^{t1} d(x(t)) dt` where `d` is the damping coefficient.
pub fn integrate_damping(p: &ModelParams, s0: OscState, t0: f64, t1: f64, tol: &Tolerance) -> Result<(OscState, f64)> {
    check_span(p, &s0, t0, t1, tol)?;
    let (mut t, mut h) = (t0, 0.0);
    let mut y = [s0.x, s0.v, 0.0];
    tol.stepper(2).advance(&DampingIntegral(p), &mut t, &mut y, t1, &mut h, |_| {})?;
    finite_or_err(&y, t)?;
    Ok((OscState::new(y[0], y[1]), y[2]))
}

/// Dense samples on `[t0, t1]`. At least `per_period` samples per forcing
/// period and never fewer than `oversample` samples per accepted step.
pub fn sample_trajectory(
    p: &ModelParams,
    s0: OscState,
    t0: f64,
    t1: f64,
    per_period: usize,
    tol: &Tolerance,
) -> Result<Trajectory> {
    check_span(p, &s0, t0, t1, tol)?;
    let stepper = tol.stepper(2);
    let (mut t, mut y, mut h) = (t0, s0.arr(), 0.0);
    let mut steps: Vec<DenseStep<2>> = Vec::new();
    stepper.advance(&Base(p), &mut t, &mut y, t1, &mut h, |s| steps.push(s.clone()))?;
    finite_or_err(&y, t)?;

    const OVERSAMPLE: usize = 8;
    let span = t1 - t0;
    let periods = span / p.forcing_period();
    let count = ((per_period as f64 * periods).ceil() as usize).max(OVERSAMPLE * steps.len()).max(2);
    let dt = span / count as f64;
    let mut samples = Vec::with_capacity(count + 1);
    let mut idx = 0;
    for i in 0..=count {
        let ti = if i == count { t1 } else { t0 + dt * i as f64 };
        while idx + 1 < steps.len() && steps[idx].t1() < ti {
            idx += 1;
        }
        let yi = steps[idx].eval(ti);
        samples.push((ti, OscState::new(yi[0], yi[1])));
    }
    Ok(Trajectory { samples, params: *p })
}

/// Long-running integrator that keeps its step size between segments.
/// Used for transients and stroboscopic sampling.
#[derive(Debug, Clone)]
pub struct Flow {
    params: ModelParams,
    stepper: Dopri5,
    t: f64,
    y: [f64; 2],
    h: f64,
}

impl Flow {
    pub fn new(params: ModelParams, s0: OscState, t0: f64, tol: &Tolerance) -> Result<Self> {
        params.validate()?;
        tol.validate()?;
        Ok(Self { params, stepper: tol.stepper(2), t: t0, y: s0.arr(), h: 0.0 })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> OscState {
        OscState::new(self.y[0], self.y[1])
    }

    pub fn advance_to(&mut self, t1: f64) -> Result<OscState> {
        self.stepper.advance(&Base(&self.params), &mut self.t, &mut self.y, t1, &mut self.h, |_| {})?;
        finite_or_err(&self.y, self.t)?;
        Ok(self.state())
    }

    /// Advances to `t1` and returns the largest `|x|` seen on the way.
    pub fn advance_tracking_peak(&mut self, t1: f64) -> Result<f64> {
        let mut peak: f64 = self.y[0].abs();
        self.stepper.advance(&Base(&self.params), &mut self.t, &mut self.y, t1, &mut self.h, |s| {
            // |x| extremes sit where v = 0; sample the step densely enough to catch them
            for j in 1..=4 {
                let y = s.eval(s.t0 + s.h * j as f64 / 4.0);
                peak = peak.max(y[0].abs());
            }
            let ya = s.eval(s.t0);
            let yb = s.eval(s.t1());
            if ya[1] * yb[1] < 0.0 {
                let (mut lo, mut hi) = (s.t0, s.t1());
                let sign_lo = ya[1].signum();
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    if s.eval(mid)[1].signum() == sign_lo {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                peak = peak.max(s.eval(0.5 * (lo + hi))[0].abs());
            }
        })?;
        finite_or_err(&self.y, self.t)?;
        Ok(peak)
    }
}

/// Period of the undamped, unforced oscillation with turning point `x_max`.
///
/// Uses `T = 4 \int_0^{x_max} dx / sqrt(2 (U(x_max) - U(x)))` with
/// `U(x) = x^2/2 + x^4/4`. The substitution `x = x_max sin(theta)` removes the
/// endpoint singularity and leaves the smooth periodic integrand
/// `1 / sqrt(1 + x_max^2 (1 + sin^2 theta) / 2)` over a full turn, on which
/// the trapezoid rule converges geometrically.
pub fn natural_period(x_max: f64) -> Result<f64> {
    if !(x_max > 0.0) || !x_max.is_finite() {
        return Err(Error::Domain(format!("natural_period needs x_max > 0, got {x_max}")));
    }
    let k = 0.5 * x_max * x_max;
    let f = |theta: f64| {
        let s = theta.sin();
        1.0 / (1.0 + k * (1.0 + s * s)).sqrt()
    };
    let mut n = 16usize;
    let mut prev = f64::NAN;
    loop {
        let h = 2.0 * PI / n as f64;
        let sum: f64 = (0..n).map(|i| f(h * i as f64)).sum();
        let est = sum * h;
        if (est - prev).abs() <= 1e-15 * est || n > 1 << 20 {
            return Ok(est);
        }
        prev = est;
        n *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vector_field_examples() {
        let p = ModelParams::duffing(3.0, 0.82, 0.01);
        assert_eq!(vector_field(&p, OscState::ORIGIN, 0.0), (0.0, 3.0));

        let p = ModelParams::duffing(7.0, 0.5, 0.01);
        let t = PI / (2.0 * p.omega);
        let (dx, dv) = vector_field(&p, OscState::new(1.0, 0.0), t);
        assert_eq!(dx, 0.0);
        assert_relative_eq!(dv, -2.0, epsilon = 1e-14);

        let p = ModelParams::duffing_vdp(0.0, 1.0, 0.01);
        let (dx, dv) = vector_field(&p, OscState::new(0.0, 1.0), 0.0);
        assert_eq!(dx, 1.0);
        // small amplitudes are pumped, large ones damped
        assert_relative_eq!(dv, 0.01, epsilon = 1e-15);
        let (_, dv) = vector_field(&p, OscState::new(2.0, 1.0), 0.0);
        assert_relative_eq!(dv, -0.03 - 2.0 - 8.0, epsilon = 1e-12);
    }

    #[test]
    fn params_are_validated() {
        assert!(ModelParams::duffing(-1.0, 1.0, 0.01).validate().is_err());
        assert!(ModelParams::duffing(1.0, 0.0, 0.01).validate().is_err());
        assert!(ModelParams::duffing(1.0, 1.0, -0.1).validate().is_err());
        assert!(ModelParams::duffing(1.0, 1.0, 0.0).validate().is_ok());
        assert!(ModelParams::duffing_vdp(1.0, 1.0, 0.0).validate().is_err());
        let mut p = ModelParams::duffing(1.0, 1.0, 0.1);
        p.beta = 2.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn unforced_damped_decay() {
        let p = ModelParams::duffing(0.0, 1.0, 0.01);
        let s = integrate(&p, OscState::new(0.1, 0.0), 0.0, 200.0 * PI, &Tolerance::default()).unwrap();
        assert!(s.x.abs() < 0.1);
        assert!(s.dist(&OscState::ORIGIN) < 0.1);
    }

    #[test]
    fn empty_span_rejected() {
        let p = ModelParams::duffing(0.0, 1.0, 0.01);
        assert!(integrate(&p, OscState::ORIGIN, 1.0, 1.0, &Tolerance::default()).is_err());
    }

    #[test]
    fn linear_center_monodromy_is_identity() {
        // x'' = -x - x^3 linearised at the origin has period 2 pi
        let p = ModelParams::duffing(0.0, 1.0, 0.0);
        let (s, m) = integrate_with_variations(&p, OscState::ORIGIN, 0.0, 2.0 * PI, &Tolerance::default()).unwrap();
        assert_eq!(s, OscState::ORIGIN);
        assert!((m - Matrix2::identity()).abs().max() < 1e-9);
    }

    #[test]
    fn liouville_determinant() {
        let p = ModelParams::duffing(2.5, 0.7, 0.05);
        let tau = 13.0;
        let (_, m) = integrate_with_variations(&p, OscState::new(0.3, -1.0), 0.0, tau, &Tolerance::default()).unwrap();
        assert_relative_eq!(m.determinant(), (-p.gamma * tau).exp(), max_relative = 1e-8);
    }

    #[test]
    fn variations_agree_with_the_base_path() {
        let p = ModelParams::duffing(3.0, 0.82, 0.01);
        let tol = Tolerance::default();
        let a = integrate(&p, OscState::new(0.5, 0.1), 0.0, 20.0, &tol).unwrap();
        let (b, _) = integrate_with_variations(&p, OscState::new(0.5, 0.1), 0.0, 20.0, &tol).unwrap();
        assert!(a.dist(&b) < 1e-8);
    }

    #[test]
    fn damping_integral_of_linear_damping() {
        let p = ModelParams::duffing(1.0, 1.3, 0.02);
        let (_, d) = integrate_damping(&p, OscState::new(0.2, 0.0), 0.0, 7.5, &Tolerance::default()).unwrap();
        assert_relative_eq!(d, 0.02 * 7.5, max_relative = 1e-12);
    }

    #[test]
    fn natural_period_limits() {
        assert_relative_eq!(natural_period(1e-6).unwrap(), 2.0 * PI, max_relative = 1e-6);
        let t1 = natural_period(1.0).unwrap();
        let t2 = natural_period(2.0).unwrap();
        assert!(t2 < t1 && t1 < 2.0 * PI);
        assert!(natural_period(0.0).is_err());
        assert!(natural_period(-1.0).is_err());
        assert!(natural_period(f64::NAN).is_err());
    }

    #[test]
    fn trajectory_sampling_density() {
        let p = ModelParams::duffing(3.0, 0.5, 0.01);
        let tr = sample_trajectory(&p, OscState::ORIGIN, 0.0, p.forcing_period(), 64, &Tolerance::default()).unwrap();
        assert!(tr.len() > 64);
        assert!(tr.samples.windows(2).all(|w| w[1].0 > w[0].0));
        let end = integrate(&p, OscState::ORIGIN, 0.0, p.forcing_period(), &Tolerance::default()).unwrap();
        assert!(tr.samples.last().unwrap().1.dist(&end) < 1e-9);
    }
}
