//! Dormand–Prince 5(4) stepper over fixed-size state arrays.
//!
//! Step-size control looks at the first `controlled` components. Tangent
//! components are integrated jointly with the base state, on its steps.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Shampine's continuous extension coefficients.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const MAX_STEPS: usize = 5_000_000;

/// Right-hand side of an `N`-dimensional first-order system.
pub(crate) trait System<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N];
}

/// One accepted step with its dense-output polynomial.
#[derive(Debug, Clone)]
pub(crate) struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    r: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn eval(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let mut out = [0.0; N];
        for i in 0..N {
            let r = &self.r;
            out[i] = r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])));
        }
        out
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub controlled: usize,
    pub h_max: f64,
}

#[inline]
fn lin<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for &(c, k) in terms {
        if c != 0.0 {
            let ch = c * h;
            for i in 0..N {
                out[i] += ch * k[i];
            }
        }
    }
    out
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64, controlled: usize) -> Self {
        Self { rtol, atol, controlled, h_max: f64::INFINITY }
    }

    pub fn initial_step<const N: usize, S: System<N>>(&self, sys: &S, t: f64, y: &[f64; N], span: f64) -> f64 {
        let f0 = sys.rhs(t, y);
        let (mut d0, mut d1) = (0.0, 0.0);
        for i in 0..self.controlled {
            let sk = self.atol + self.rtol * y[i].abs();
            d0 += (y[i] / sk).powi(2);
            d1 += (f0[i] / sk).powi(2);
        }
        let n = self.controlled as f64;
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span.abs());
        let y1 = lin(y, h0, &[(1.0, &f0)]);
        let f1 = sys.rhs(t + h0, &y1);
        let mut d2 = 0.0;
        for i in 0..self.controlled {
            let sk = self.atol + self.rtol * y[i].abs();
            d2 += ((f1[i] - f0[i]) / sk).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span.abs()).min(self.h_max)
    }

    /// Advances `y` from `t` to exactly `t_end`, updating the carried step
    /// size `h` (zero means "pick one"). Every accepted step is handed to
    /// `observe`.
    pub fn advance<const N: usize, S, F>(
        &self,
        sys: &S,
        t: &mut f64,
        y: &mut [f64; N],
        t_end: f64,
        h: &mut f64,
        mut observe: F,
    ) -> Result<()>
    where
        S: System<N>,
        F: FnMut(&DenseStep<N>),
    {
        let span = t_end - *t;
        if span <= 0.0 {
            return Ok(());
        }
        if *h <= 0.0 {
            *h = self.initial_step(sys, *t, y, span);
        }
        let h_floor = 1e-14 * t_end.abs().max(1.0);
        let mut k1 = sys.rhs(*t, y);
        let mut last_rejected = false;
        let mut steps = 0usize;
        loop {
            let remaining = t_end - *t;
            if remaining <= h_floor * 0.5 {
                *t = t_end;
                return Ok(());
            }
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::TooManySteps(MAX_STEPS));
            }
            let mut hs = h.min(self.h_max);
            let last = hs >= remaining * (1.0 - 1e-12);
            if last {
                hs = remaining;
            }
            if hs < h_floor {
                return Err(Error::StepUnderflow { t: *t, h: hs });
            }
            let t0 = *t;
            let y2 = lin(y, hs, &[(A21, &k1)]);
            let k2 = sys.rhs(t0 + C2 * hs, &y2);
            let y3 = lin(y, hs, &[(A31, &k1), (A32, &k2)]);
            let k3 = sys.rhs(t0 + C3 * hs, &y3);
            let y4 = lin(y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            let k4 = sys.rhs(t0 + C4 * hs, &y4);
            let y5 = lin(y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
            let k5 = sys.rhs(t0 + C5 * hs, &y5);
            let y6 = lin(y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
            let t_new = if last { t_end } else { t0 + hs };
            let k6 = sys.rhs(t_new, &y6);
            let y_new = lin(y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = sys.rhs(t_new, &y_new);

            let mut err = 0.0;
            for i in 0..self.controlled {
                let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sk = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / sk).powi(2);
            }
            let err = (err / self.controlled as f64).sqrt();
            if !err.is_finite() {
                *h = hs * FAC_MIN;
                last_rejected = true;
                if *h < h_floor {
                    return Err(Error::NonFinite(t0));
                }
                continue;
            }
            let fac = if err == 0.0 { FAC_MAX } else { SAFETY * err.powf(-0.2) };
            if err <= 1.0 {
                let mut r = [[0.0; N]; 5];
                for i in 0..N {
                    let ydiff = y_new[i] - y[i];
                    let bspl = hs * k1[i] - ydiff;
                    r[0][i] = y[i];
                    r[1][i] = ydiff;
                    r[2][i] = bspl;
                    r[3][i] = ydiff - hs * k7[i] - bspl;
                    r[4][i] = hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                observe(&DenseStep { t0, h: t_new - t0, r });
                *t = t_new;
                *y = y_new;
                k1 = k7;
                let fac_max = if last_rejected { 1.0 } else { FAC_MAX };
                let h_next = hs * fac.clamp(FAC_MIN, fac_max);
                // keep the carried step meaningful after a clipped final step
                if !last || h_next > *h {
                    *h = h_next;
                }
                last_rejected = false;
                if last {
                    return Ok(());
                }
            } else {
                *h = hs * fac.clamp(FAC_MIN, 1.0);
                last_rejected = true;
            }
        }
    }
}
