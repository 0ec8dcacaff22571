//! First- and second-order sensitivities of the stroboscopic return maps.
//!
//! The maps are taken from forcing phase 0. A [`Section::Full`] map flows for
//! `n` forcing periods; a [`Section::Half`] map flows for `n` half periods and
//! reflects `(x, v) -> (-x, -v)`, which for odd `n` squares to the full map
//! and whose fixed points are exactly the symmetric orbits.
//!
//! Because the flow time depends on `omega`, every `omega` derivative carries
//! an extra end-time term `f(tau) * dtau/domega`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

use super::dopri::System;
use super::{check_span, finite_or_err, ModelParams, OscState, Param, Tolerance};
use crate::error::Result;

/// Which return map to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Section {
    /// `n` forcing periods.
    Full(u32),
    /// `n` half periods followed by the reflection.
    Half(u32),
}

impl Section {
    pub fn periods(self) -> u32 {
        match self {
            Section::Full(n) | Section::Half(n) => n,
        }
    }

    /// Flow time of the map.
    pub fn duration(self, omega: f64) -> f64 {
        match self {
            Section::Full(n) => 2.0 * PI * n as f64 / omega,
            Section::Half(n) => PI * n as f64 / omega,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Section::Full(_) => 1.0,
            Section::Half(_) => -1.0,
        }
    }
}

/// Map value with its state Jacobian and (optionally) one parameter derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapJet1 {
    pub value: Vector2<f64>,
    pub jac: Matrix2<f64>,
    pub dparam: Vector2<f64>,
}

/// Map value with first and second derivatives in the state and two parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapJet2 {
    pub value: Vector2<f64>,
    pub jac: Matrix2<f64>,
    pub dparam: [Vector2<f64>; 2],
    /// `d jac / d s_k` for `k = x0, v0`.
    pub djac_ds: [Matrix2<f64>; 2],
    /// `d jac / d p_i`.
    pub djac_dparam: [Matrix2<f64>; 2],
}

struct Jet1<'a> {
    p: &'a ModelParams,
    param: Option<Param>,
}

impl System<8> for Jet1<'_> {
    #[inline]
    fn rhs(&self, t: f64, y: &[f64; 8]) -> [f64; 8] {
        let p = self.p;
        let (x, v) = (y[0], y[1]);
        let (a, b) = p.accel_jac(x, v);
        let fp = self.param.map_or(0.0, |q| p.accel_param(q, t, x, v));
        [
            v,
            p.accel(t, x, v),
            y[3],
            a * y[2] + b * y[3],
            y[5],
            a * y[4] + b * y[5],
            y[7],
            a * y[6] + b * y[7] + fp,
        ]
    }
}

struct Jet2<'a> {
    p: &'a ModelParams,
    params: [Param; 2],
}

#[inline]
fn mat_rhs(out: &mut [f64], x: &[f64], a: f64, b: f64) {
    // J X for J = [[0, 1], [a, b]], X column-major
    out[0] = x[1];
    out[1] = a * x[0] + b * x[1];
    out[2] = x[3];
    out[3] = a * x[2] + b * x[3];
}

impl System<26> for Jet2<'_> {
    fn rhs(&self, t: f64, y: &[f64; 26]) -> [f64; 26] {
        let p = self.p;
        let (x, v) = (y[0], y[1]);
        let (a, b) = p.accel_jac(x, v);
        let [a_x, a_v, b_x, b_v] = p.accel_hess(x, v);
        let mut out = [0.0; 26];
        out[0] = v;
        out[1] = p.accel(t, x, v);
        let m = [y[2], y[3], y[4], y[5]];
        mat_rhs(&mut out[2..6], &m, a, b);
        for i in 0..2 {
            let o = 6 + 2 * i;
            out[o] = y[o + 1];
            out[o + 1] = a * y[o] + b * y[o + 1] + p.accel_param(self.params[i], t, x, v);
        }
        // d M / d s_k
        for k in 0..2 {
            let (yx, yv) = (m[2 * k], m[2 * k + 1]);
            let alpha = a_x * yx + a_v * yv;
            let beta = b_x * yx + b_v * yv;
            let o = 10 + 4 * k;
            mat_rhs(&mut out[o..o + 4], &y[o..o + 4], a, b);
            out[o + 1] += alpha * m[0] + beta * m[1];
            out[o + 3] += alpha * m[2] + beta * m[3];
        }
        // d M / d p_i
        for i in 0..2 {
            let (sx, sv) = (y[6 + 2 * i], y[7 + 2 * i]);
            let (ap, bp) = p.accel_jac_param(self.params[i], x, v);
            let alpha = a_x * sx + a_v * sv + ap;
            let beta = b_x * sx + b_v * sv + bp;
            let o = 18 + 4 * i;
            mat_rhs(&mut out[o..o + 4], &y[o..o + 4], a, b);
            out[o + 1] += alpha * m[0] + beta * m[1];
            out[o + 3] += alpha * m[2] + beta * m[3];
        }
        out
    }
}

#[inline]
fn mat(c: &[f64]) -> Matrix2<f64> {
    Matrix2::new(c[0], c[2], c[1], c[3])
}

/// Value and first derivatives of the return map at `s`.
pub fn map_jet1(p: &ModelParams, s: OscState, section: Section, param: Option<Param>, tol: &Tolerance) -> Result<MapJet1> {
    let tau = section.duration(p.omega);
    check_span(p, &s, 0.0, tau, tol)?;
    let mut y = [s.x, s.v, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
    let (mut t, mut h) = (0.0, 0.0);
    tol.stepper(8).advance(&Jet1 { p, param }, &mut t, &mut y, tau, &mut h, |_| {})?;
    finite_or_err(&y, t)?;
    let sg = section.sign();
    let value = Vector2::new(y[0], y[1]) * sg;
    let jac = mat(&y[2..6]) * sg;
    let mut dparam = Vector2::new(y[6], y[7]);
    if param == Some(Param::Omega) {
        let dtau = -tau / p.omega;
        dparam += Vector2::new(y[1], p.accel(tau, y[0], y[1])) * dtau;
    }
    Ok(MapJet1 { value, jac, dparam: dparam * sg })
}

/// Value, first and second derivatives of the return map at `s` with respect
/// to the state and the two parameters in `params`.
pub fn map_jet2(p: &ModelParams, s: OscState, section: Section, params: [Param; 2], tol: &Tolerance) -> Result<MapJet2> {
    let tau = section.duration(p.omega);
    check_span(p, &s, 0.0, tau, tol)?;
    let mut y = [0.0; 26];
    y[0] = s.x;
    y[1] = s.v;
    y[2] = 1.0;
    y[5] = 1.0;
    let (mut t, mut h) = (0.0, 0.0);
    tol.stepper(26).advance(&Jet2 { p, params }, &mut t, &mut y, tau, &mut h, |_| {})?;
    finite_or_err(&y, t)?;
    let sg = section.sign();
    let m = mat(&y[2..6]);
    let mut dparam = [Vector2::new(y[6], y[7]), Vector2::new(y[8], y[9])];
    let djac_ds = [mat(&y[10..14]) * sg, mat(&y[14..18]) * sg];
    let mut djac_dparam = [mat(&y[18..22]), mat(&y[22..26])];
    let dtau = -tau / p.omega;
    for i in 0..2 {
        if params[i] == Param::Omega {
            let (a, b) = p.accel_jac(y[0], y[1]);
            let jac_end = Matrix2::new(0.0, 1.0, a, b);
            dparam[i] += Vector2::new(y[1], p.accel(tau, y[0], y[1])) * dtau;
            djac_dparam[i] += jac_end * m * dtau;
        }
        dparam[i] *= sg;
        djac_dparam[i] *= sg;
    }
    Ok(MapJet2 { value: Vector2::new(y[0], y[1]) * sg, jac: m * sg, dparam, djac_ds, djac_dparam })
}
