//! Brute-force attractor classification over a grid of forcing parameters.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ode::{Flow, ModelParams, OscState, Param, Tolerance};

/// Timing and tolerances of a single-cell classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub transient_periods: u32,
    pub sample_periods: u32,
    pub n_max: u32,
    /// Strobe repetition tolerance for `PeriodN`.
    pub strobe_tol: f64,
    /// Strobe count for the quasi-periodicity test.
    pub qp_samples: u32,
    pub integration: Tolerance,
    /// Stop the transient once the strobes repeat to `early_exit_tol`.
    pub early_exit: bool,
    pub early_exit_tol: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            transient_periods: 1000,
            sample_periods: 20,
            n_max: 9,
            strobe_tol: 1e-6,
            qp_samples: 200,
            integration: Tolerance::default().scaled(100.0),
            early_exit: true,
            early_exit_tol: 1e-9,
        }
    }
}

impl Timing {
    pub fn validate(&self) -> Result<()> {
        if self.sample_periods == 0 || self.n_max == 0 {
            return Err(Error::InvalidParams("sample_periods and n_max must be at least 1".into()));
        }
        if self.transient_periods < self.sample_periods {
            return Err(Error::InvalidParams("transient_periods must be at least sample_periods".into()));
        }
        if self.sample_periods < 2 * self.n_max {
            return Err(Error::InvalidParams("sample_periods must cover two repetitions of n_max".into()));
        }
        if !(self.strobe_tol > 0.0) {
            return Err(Error::InvalidParams("strobe tolerance must be positive".into()));
        }
        self.integration.validate()
    }
}

/// Evenly spaced axis; `count = 1` yields `lo` only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Self {
        Self { lo, hi, count }
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.count <= 1 {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (self.count - 1) as f64
        }
    }

    pub fn step(&self) -> f64 {
        if self.count <= 1 {
            0.0
        } else {
            (self.hi - self.lo) / (self.count - 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    /// Model and fixed parameters; `omega` and `a` are overwritten per cell.
    pub params: ModelParams,
    pub omega: Axis,
    pub amplitude: Axis,
    pub initial: OscState,
    pub timing: Timing,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.omega.count == 0 || self.amplitude.count == 0 {
            return Err(Error::InvalidParams("grid counts must be at least 1".into()));
        }
        if !(self.omega.lo <= self.omega.hi && self.amplitude.lo <= self.amplitude.hi) {
            return Err(Error::InvalidParams("grid ranges must be ordered".into()));
        }
        if !self.initial.is_finite() {
            return Err(Error::InvalidParams("initial state must be finite".into()));
        }
        self.timing.validate()?;
        self.cell_params(0, 0).validate()?;
        self.cell_params(self.omega.count - 1, self.amplitude.count - 1).validate()
    }

    pub fn cell_params(&self, i_omega: usize, i_a: usize) -> ModelParams {
        self.params.with(Param::Omega, self.omega.value(i_omega)).with(Param::Amplitude, self.amplitude.value(i_a))
    }

    pub fn len(&self) -> usize {
        self.omega.count * self.amplitude.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Classification {
    PeriodN(u32),
    QuasiPeriodic,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub omega: f64,
    pub a: f64,
    pub class: Classification,
    /// Strobe at forcing phase 0 after the transient.
    pub strobe: OscState,
    pub x_max: f64,
    pub diagnostic: Option<String>,
}

impl CellResult {
    pub fn period(&self) -> Option<u32> {
        match self.class {
            Classification::PeriodN(n) => Some(n),
            _ => None,
        }
    }
}

/// Cells stored row by row (`A` outer, `omega` inner).
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub omega: Axis,
    pub amplitude: Axis,
    pub cells: Vec<CellResult>,
}

impl Raster {
    pub fn index(&self, i_omega: usize, i_a: usize) -> usize {
        i_a * self.omega.count + i_omega
    }

    pub fn cell(&self, i_omega: usize, i_a: usize) -> &CellResult {
        &self.cells[self.index(i_omega, i_a)]
    }

    /// `(i_omega, i_a)` of a flat cell index.
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.omega.count, index / self.omega.count)
    }
}

/// Smallest `n <= n_max` with `|s_{k+n} - s_k| < tol` over the whole window.
fn strobe_period(strobes: &[OscState], n_max: u32, tol: f64) -> Option<u32> {
    (1..=n_max).find(|&n| {
        let n = n as usize;
        strobes.len() > n && (0..strobes.len() - n).all(|k| strobes[k + n].dist(&strobes[k]) < tol)
    })
}

/// Periodicity over the last `2n` strobes of a window, for the transient exit.
fn settled(strobes: &[OscState], n_max: u32, tol: f64) -> bool {
    (1..=n_max as usize).any(|n| {
        let len = strobes.len();
        len >= 2 * n && (len - n..len).all(|k| strobes[k].dist(&strobes[k - n]) < tol)
    })
}

fn mean_nearest_neighbour(pts: &[OscState]) -> f64 {
    let mut total = 0.0;
    for (i, p) in pts.iter().enumerate() {
        let d = pts
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| p.dist(q))
            .fold(f64::INFINITY, f64::min);
        total += d;
    }
    total / pts.len() as f64
}

/// Nearest-neighbour spacing of points filling a curve falls like `1/N`; for
/// an area-filling or scattered set it falls no faster than `1/sqrt(N)`.
fn fills_curve(strobes: &[OscState]) -> bool {
    if strobes.len() < 40 {
        return false;
    }
    let quarter = &strobes[..strobes.len() / 4];
    let early = mean_nearest_neighbour(quarter);
    let late = mean_nearest_neighbour(strobes);
    early > 0.0 && late / early < 0.4
}

/// Integrates from `s0`, discards the transient and classifies the attractor
/// by its stroboscopic samples.
pub fn classify_attractor(p: &ModelParams, s0: OscState, timing: &Timing) -> CellResult {
    match classify_inner(p, s0, timing) {
        Ok(r) => r,
        Err(e) => CellResult {
            omega: p.omega,
            a: p.a,
            class: Classification::Unresolved,
            strobe: s0,
            x_max: f64::NAN,
            diagnostic: Some(e.to_string()),
        },
    }
}

fn classify_inner(p: &ModelParams, s0: OscState, timing: &Timing) -> Result<CellResult> {
    p.validate()?;
    timing.validate()?;
    let period = p.forcing_period();
    let mut flow = Flow::new(*p, s0, 0.0, &timing.integration)?;
    let window = 2 * timing.n_max as usize;
    let mut recent: Vec<OscState> = Vec::with_capacity(window + 1);
    let mut k = 0u32;
    while k < timing.transient_periods {
        k += 1;
        let s = flow.advance_to(k as f64 * period)?;
        if timing.early_exit {
            recent.push(s);
            if recent.len() > window {
                recent.remove(0);
            }
            if settled(&recent, timing.n_max, timing.early_exit_tol) {
                break;
            }
        }
    }
    let strobe = flow.state();
    let mut strobes = vec![strobe];
    let mut x_max: f64 = 0.0;
    for _ in 0..timing.sample_periods {
        k += 1;
        x_max = x_max.max(flow.advance_tracking_peak(k as f64 * period)?);
        strobes.push(flow.state());
    }
    let result = |class, x_max| CellResult { omega: p.omega, a: p.a, class, strobe, x_max, diagnostic: None };
    if let Some(n) = strobe_period(&strobes, timing.n_max, timing.strobe_tol) {
        return Ok(result(Classification::PeriodN(n), x_max));
    }
    while strobes.len() < timing.qp_samples as usize {
        k += 1;
        x_max = x_max.max(flow.advance_tracking_peak(k as f64 * period)?);
        strobes.push(flow.state());
    }
    let class = if fills_curve(&strobes) { Classification::QuasiPeriodic } else { Classification::Unresolved };
    Ok(result(class, x_max))
}

/// Classifies every cell. Results are placed by cell index, so the raster
/// does not depend on how the cells are scheduled.
pub fn scan(spec: &SweepSpec) -> Result<Raster> {
    spec.validate()?;
    let cells = (0..spec.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % spec.omega.count, idx / spec.omega.count);
            classify_attractor(&spec.cell_params(i, j), spec.initial, &spec.timing)
        })
        .collect();
    Ok(Raster { omega: spec.omega, amplitude: spec.amplitude, cells })
}

/// One seed per 4-connected group of cells matching `predicate`: the cell
/// nearest the group centroid (in grid units).
pub fn harvest_seeds<F>(raster: &Raster, predicate: F) -> Vec<crate::continuation::IsolaSeed>
where
    F: Fn(&CellResult) -> bool,
{
    let (nw, na) = (raster.omega.count, raster.amplitude.count);
    let mut seen = vec![false; raster.cells.len()];
    let mut seeds = Vec::new();
    for start in 0..raster.cells.len() {
        if seen[start] || !predicate(&raster.cells[start]) {
            continue;
        }
        let mut group = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(idx) = stack.pop() {
            group.push(idx);
            let (i, j) = raster.coords(idx);
            let mut neighbours = Vec::with_capacity(4);
            if i > 0 {
                neighbours.push(raster.index(i - 1, j));
            }
            if i + 1 < nw {
                neighbours.push(raster.index(i + 1, j));
            }
            if j > 0 {
                neighbours.push(raster.index(i, j - 1));
            }
            if j + 1 < na {
                neighbours.push(raster.index(i, j + 1));
            }
            for nb in neighbours {
                if !seen[nb] && predicate(&raster.cells[nb]) {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        let (ci, cj) = group.iter().fold((0.0, 0.0), |(a, b), &idx| {
            let (i, j) = raster.coords(idx);
            (a + i as f64, b + j as f64)
        });
        let (ci, cj) = (ci / group.len() as f64, cj / group.len() as f64);
        let rep = *group
            .iter()
            .min_by(|&&x, &&y| {
                let d = |idx: usize| {
                    let (i, j) = raster.coords(idx);
                    (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2)
                };
                d(x).total_cmp(&d(y)).then(x.cmp(&y))
            })
            .expect("non-empty group");
        let cell = &raster.cells[rep];
        seeds.push(crate::continuation::IsolaSeed { omega: cell.omega, a: cell.a, state: cell.strobe, n: cell.period().unwrap_or(1) });
    }
    seeds
}
