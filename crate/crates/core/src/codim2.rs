//! Two-parameter continuation of fold and pitchfork loci (resonance tongues).
//!
//! A fold of the section map is continued through the bordered system
//! `{map(s) - s = 0, (D map - e I) q = 0, q.q = 1}` in the unknowns
//! `(x0, v0, q1, q2, p1, p2)`. With `e = +1` this is a fold; on the reflected
//! half map `e = -1` pins the antisymmetric multiplier and traces the
//! symmetry-breaking pitchfork.

use nalgebra::{Matrix2, SMatrix, SVector, Vector2};

use crate::continuation::{null_vector, BifurcationKind, BifurcationPoint, ContinuationSettings, EndReason};
use crate::error::{Error, Result};
use crate::ode::jet::{map_jet2, MapJet2, Section};
use crate::ode::{Model, ModelParams, OscState, Param};
use crate::orbit::{self, PeriodicOrbit, ResonanceLabel};

type V5 = SVector<f64, 5>;
type V6 = SVector<f64, 6>;
type M56 = SMatrix<f64, 5, 6>;
type M6 = SMatrix<f64, 6, 6>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TongueKind {
    /// Folds of the primary (symmetric) branch.
    FoldOdd,
    /// Pitchforks of the primary branch.
    PitchforkEven,
    /// Folds of symmetry-broken branches.
    FoldBroken,
    /// Folds bounding isolated branches.
    FoldIsola,
    /// Folds bounding a synchronisation region of the self-excited model.
    FoldSync,
}

impl TongueKind {
    pub fn name(self) -> &'static str {
        match self {
            TongueKind::FoldOdd => "fold_odd",
            TongueKind::PitchforkEven => "pitchfork_even",
            TongueKind::FoldBroken => "fold_broken",
            TongueKind::FoldIsola => "fold_isola",
            TongueKind::FoldSync => "fold_sync",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Self::FoldOdd, Self::PitchforkEven, Self::FoldBroken, Self::FoldIsola, Self::FoldSync]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

/// Parameter plane of a two-parameter continuation. The first active
/// parameter is always `omega`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Plane {
    OmegaAmplitude,
    OmegaGamma,
}

impl Plane {
    pub fn params(self) -> [Param; 2] {
        match self {
            Plane::OmegaAmplitude => [Param::Omega, Param::Amplitude],
            Plane::OmegaGamma => [Param::Omega, Param::Gamma],
        }
    }

    pub fn second(self) -> Param {
        self.params()[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneRanges {
    pub omega: (f64, f64),
    pub second: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TonguePoint {
    pub omega: f64,
    /// Value of the second active parameter (`A` or `gamma`).
    pub second: f64,
    pub orbit: PeriodicOrbit,
    /// Parameter components `(d omega, d second)` of the unit curve tangent.
    pub tangent: [f64; 2],
    pub arclength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TongueCurve {
    pub kind: TongueKind,
    pub plane: Plane,
    pub points: Vec<TonguePoint>,
    pub cusps: Vec<usize>,
    pub label: ResonanceLabel,
    pub closed: bool,
    pub ends: (EndReason, EndReason),
    /// Extrapolated `(omega, 0)` tip of a synchronisation tongue.
    pub tip: Option<(f64, f64)>,
}

impl TongueCurve {
    pub fn polyline(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.omega, p.second)).collect()
    }

    /// Point with the smallest value of the second parameter.
    pub fn min_second(&self) -> Option<&TonguePoint> {
        self.points.iter().min_by(|a, b| a.second.total_cmp(&b.second))
    }

    /// Crossings of the curve with the line `second = value`, in curve order,
    /// as `(omega, i)` with the crossing between points `i` and `i + 1`
    /// (index `len - 1` is the closing segment of a closed curve).
    pub fn row_crossings(&self, value: f64) -> Vec<(f64, usize)> {
        let mut pts = self.polyline();
        if self.closed && pts.len() > 2 {
            pts.push(pts[0]);
        }
        let mut out = Vec::new();
        for (i, w) in pts.windows(2).enumerate() {
            let ((w0, a0), (w1, a1)) = (w[0], w[1]);
            if (a0 - value) * (a1 - value) <= 0.0 && a0 != a1 && a1 != value {
                out.push((w0 + (value - a0) / (a1 - a0) * (w1 - w0), i));
            }
        }
        out
    }

    /// `omega` interval between the outermost crossings of the curve with
    /// the line `second = value`.
    pub fn row_span(&self, value: f64) -> Option<(f64, f64)> {
        let c = self.row_crossings(value);
        let lo = c.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
        let hi = c.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
        (lo <= hi).then_some((lo, hi))
    }

    /// Whether `(omega, second)` lies between the outermost crossings of its row.
    pub fn contains(&self, omega: f64, second: f64) -> bool {
        self.row_span(second).is_some_and(|(lo, hi)| omega >= lo && omega <= hi)
    }

    /// Interior local minima of the second parameter.
    pub fn tips(&self) -> Vec<usize> {
        let a: Vec<f64> = self.points.iter().map(|p| p.second).collect();
        (1..a.len().saturating_sub(1)).filter(|&i| a[i] < a[i - 1] && a[i] <= a[i + 1]).collect()
    }

    /// Distinct cusp and tip indices.
    pub fn features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.cusps.iter().copied().chain(self.tips()).collect();
        f.sort_unstable();
        f.dedup_by(|a, b| a.abs_diff(*b) <= 1);
        f
    }
}

/// Indices where the `omega` component of the tangent changes sign while
/// the parameter-space direction reverses (projection cusp). The point of
/// the pair closer to the turning point is reported.
pub fn detect_cusps(t: &TongueCurve) -> Vec<usize> {
    let pts = &t.points;
    let mut out = Vec::new();
    for i in 0..pts.len().saturating_sub(1) {
        let (a, b) = (pts[i].tangent, pts[i + 1].tangent);
        if a[0] * b[0] > 0.0 || (a[0] == 0.0 && b[0] == 0.0) {
            continue;
        }
        let na = (a[0] * a[0] + a[1] * a[1]).sqrt();
        let nb = (b[0] * b[0] + b[1] * b[1]).sqrt();
        if na == 0.0 || nb == 0.0 || (a[0] * b[0] + a[1] * b[1]) / (na * nb) >= 0.0 {
            continue;
        }
        let k = if a[0].abs() / na <= b[0].abs() / nb { i } else { i + 1 };
        if k > 0 && k + 1 < pts.len() && out.last() != Some(&k) {
            out.push(k);
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Ext {
    z: V6,
    jet: MapJet2,
    res: V5,
    jac: M56,
}

#[derive(Debug, Clone, Copy)]
struct FoldProblem {
    base: ModelParams,
    params: [Param; 2],
    section: Section,
    e: f64,
}

impl FoldProblem {
    fn model_params(&self, z: &V6) -> ModelParams {
        self.base.with(self.params[0], z[4]).with(self.params[1], z[5])
    }

    fn eval(&self, z: V6, st: &ContinuationSettings) -> Result<Ext> {
        let p = self.model_params(&z);
        p.validate()?;
        let s = OscState::new(z[0], z[1]);
        let q = Vector2::new(z[2], z[3]);
        let jet = map_jet2(&p, s, self.section, self.params, &st.orbit.integration)?;
        let a = jet.jac - Matrix2::identity();
        let b = jet.jac - Matrix2::identity() * self.e;
        let f = jet.value - Vector2::new(z[0], z[1]);
        let g = b * q;
        let h = q.dot(&q) - 1.0;
        let res = V5::new(f[0], f[1], g[0], g[1], h);
        let mut jac = M56::zeros();
        for r in 0..2 {
            for c in 0..2 {
                jac[(r, c)] = a[(r, c)];
                jac[(2 + r, 2 + c)] = b[(r, c)];
            }
        }
        for k in 0..2 {
            let col = jet.djac_ds[k] * q;
            jac[(2, k)] = col[0];
            jac[(3, k)] = col[1];
            let dp = jet.dparam[k];
            jac[(0, 4 + k)] = dp[0];
            jac[(1, 4 + k)] = dp[1];
            let dq = jet.djac_dparam[k] * q;
            jac[(2, 4 + k)] = dq[0];
            jac[(3, 4 + k)] = dq[1];
        }
        jac[(4, 2)] = 2.0 * q[0];
        jac[(4, 3)] = 2.0 * q[1];
        Ok(Ext { z, jet, res, jac })
    }

    fn bordered(ext: &Ext, dir: &V6) -> M6 {
        let mut m = M6::zeros();
        m.fixed_view_mut::<5, 6>(0, 0).copy_from(&ext.jac);
        m.set_row(5, &dir.transpose());
        m
    }

    /// Newton on the extended system with `(z - anchor) . dir = sigma`.
    fn correct(&self, anchor: V6, dir: V6, sigma: f64, st: &ContinuationSettings) -> Result<Ext> {
        let mut z = anchor + dir * sigma;
        let target = st.orbit.residual * 0.1;
        let mut rn = f64::INFINITY;
        for _ in 0..st.corrector_iterations {
            let ext = self.eval(z, st)?;
            rn = ext.res.norm();
            let arc = (z - anchor).dot(&dir) - sigma;
            if rn <= target && arc.abs() <= 1e-12 {
                return Ok(ext);
            }
            let m = Self::bordered(&ext, &dir);
            let mut rhs = V6::zeros();
            rhs.fixed_rows_mut::<5>(0).copy_from(&(-ext.res));
            rhs[5] = -arc;
            let dz = m.lu().solve(&rhs).ok_or(Error::SingularJacobian(0.0))?;
            if !dz.iter().all(|x| x.is_finite()) {
                break;
            }
            z += dz;
        }
        let ext = self.eval(z, st)?;
        if ext.res.norm() <= st.orbit.residual {
            return Ok(ext);
        }
        Err(Error::NoConvergence { iterations: st.corrector_iterations, residual: rn.min(ext.res.norm()) })
    }

    /// Unit null vector of the 5x6 Jacobian, oriented along `reference`.
    fn tangent(ext: &Ext, reference: &V6) -> V6 {
        let m = Self::bordered(ext, reference);
        let mut rhs = V6::zeros();
        rhs[5] = 1.0;
        let t = match m.lu().solve(&rhs) {
            Some(t) if t.iter().all(|x| x.is_finite()) => t,
            _ => svd_null(&ext.jac),
        };
        let t = t.normalize();
        if t.dot(reference) < 0.0 {
            -t
        } else {
            t
        }
    }
}

fn svd_null(j: &M56) -> V6 {
    let mut m = M6::zeros();
    m.fixed_view_mut::<5, 6>(0, 0).copy_from(j);
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let (k, _) = svd.singular_values.iter().enumerate().fold((0, f64::INFINITY), |b, (i, &s)| if s < b.1 { (i, s) } else { b });
    vt.row(k).transpose()
}

#[derive(Debug, Clone)]
struct Node {
    ext: Ext,
    t: V6,
}

struct Run {
    nodes: Vec<Node>,
    end: EndReason,
}

fn in_ranges(z: &V6, r: &PlaneRanges) -> bool {
    z[4] >= r.omega.0 && z[4] <= r.omega.1 && z[5] >= r.second.0 && z[5] <= r.second.1
}

fn trace(problem: &FoldProblem, seed: &Node, sense: f64, ranges: &PlaneRanges, st: &ContinuationSettings) -> Run {
    let first = Node { ext: seed.ext, t: seed.t * sense };
    let mut run = Run { nodes: vec![first.clone()], end: EndReason::MaxPoints };
    let mut step = st.initial_step.clamp(st.min_step, st.max_step);
    let mut successes = 0;
    while run.nodes.len() < st.max_points {
        let prev = run.nodes.last().unwrap().clone();
        let dir = if run.nodes.len() >= 2 {
            (prev.ext.z - run.nodes[run.nodes.len() - 2].ext.z).normalize()
        } else {
            prev.t
        };
        let attempt = problem.correct(prev.ext.z, dir, step, st).and_then(|ext| {
            let t = FoldProblem::tangent(&ext, &dir);
            if t.dot(&prev.t) < st.min_tangent_cos {
                return Err(Error::StepCollapse("tangent turned too fast".into()));
            }
            Ok(Node { ext, t })
        });
        match attempt {
            Ok(node) => {
                if Vector2::new(node.ext.z[0], node.ext.z[1]).norm() > st.max_state_norm {
                    run.end = EndReason::Diverged;
                    return run;
                }
                if run.nodes.len() >= st.min_closure_steps {
                    let chord = node.ext.z - prev.ext.z;
                    let f = (first.ext.z - prev.ext.z).dot(&chord) / chord.norm_squared();
                    if (0.0..=1.0).contains(&f) {
                        let off = (first.ext.z - (prev.ext.z + chord * f)).norm();
                        if off < 0.1 * chord.norm() && chord.normalize().dot(&first.t) > 0.9 {
                            run.nodes.push(first.clone());
                            run.end = EndReason::Closed;
                            return run;
                        }
                    }
                }
                if !in_ranges(&node.ext.z, ranges) {
                    run.end = EndReason::LeftRange;
                    return run;
                }
                run.nodes.push(node);
                successes += 1;
                if successes >= st.grow_after {
                    step = (step * st.grow_factor).min(st.max_step);
                    successes = 0;
                }
            }
            Err(_) => {
                successes = 0;
                step *= 0.5;
                if step < st.min_step {
                    run.end = EndReason::StepCollapse;
                    return run;
                }
            }
        }
    }
    run
}

/// Inserts the located cusp between nodes `i` and `i + 1` (ω-tangent zero).
fn locate_cusp(problem: &FoldProblem, a: &Node, b: &Node, st: &ContinuationSettings) -> Option<Node> {
    let dir = (b.ext.z - a.ext.z).normalize();
    let len = (b.ext.z - a.ext.z).norm();
    let (mut lo, mut hi) = (0.0, len);
    let (mut glo, mut ghi) = (a.t[4], b.t[4]);
    let mut best = None;
    for _ in 0..60 {
        let mut sigma = if ghi != glo { lo - glo * (hi - lo) / (ghi - glo) } else { 0.5 * (lo + hi) };
        if !(sigma > lo && sigma < hi) {
            sigma = 0.5 * (lo + hi);
        }
        let ext = problem.correct(a.ext.z, dir, sigma, st).ok()?;
        let t = FoldProblem::tangent(&ext, &a.t);
        let g = t[4];
        best = Some(Node { ext, t });
        if g.abs() < 1e-12 || hi - lo < 1e-6 * len.max(1e-3) {
            break;
        }
        if g * glo > 0.0 {
            lo = sigma;
            glo = g;
            ghi *= 0.5;
        } else {
            hi = sigma;
            ghi = g;
            glo *= 0.5;
        }
    }
    best
}

fn parameter_reversal(a: &V6, b: &V6) -> bool {
    let (pa, pb) = (Vector2::new(a[4], a[5]), Vector2::new(b[4], b[5]));
    a[4] * b[4] <= 0.0 && pa.dot(&pb) < 0.0
}

fn with_cusps(problem: &FoldProblem, nodes: Vec<Node>, st: &ContinuationSettings) -> Vec<Node> {
    let mut out: Vec<Node> = Vec::with_capacity(nodes.len());
    for node in nodes {
        if let Some(prev) = out.last() {
            if parameter_reversal(&prev.t, &node.t) {
                if let Some(c) = locate_cusp(problem, prev, &node, st) {
                    out.push(c);
                }
            }
        }
        out.push(node);
    }
    out
}

fn kind_for(orbit: &PeriodicOrbit) -> TongueKind {
    if orbit.params.model == Model::DuffingVanDerPol {
        TongueKind::FoldSync
    } else if !orbit.symmetric {
        TongueKind::FoldBroken
    } else if orbit.n > 1 {
        TongueKind::FoldIsola
    } else {
        TongueKind::FoldOdd
    }
}

fn trace_curve(
    kind: TongueKind,
    start: &PeriodicOrbit,
    section: Section,
    e: f64,
    plane: Plane,
    ranges: &PlaneRanges,
    st: &ContinuationSettings,
) -> Result<TongueCurve> {
    let params = plane.params();
    let problem = FoldProblem { base: start.params, params, section, e };
    let p0 = start.params;
    let jet = map_jet2(&p0, start.s0, section, params, &st.orbit.integration)?;
    let q = null_vector(&(jet.jac - Matrix2::identity() * e));
    let z0 = V6::new(start.s0.x, start.s0.v, q[0], q[1], p0.get(params[0]), p0.get(params[1]));
    // pin the second parameter while converging onto the fold
    let pin = V6::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let ext = problem
        .correct(z0, pin, 0.0, st)
        .map_err(|err| Error::LostFoldCondition(match err {
            Error::NoConvergence { residual, .. } => residual,
            _ => f64::NAN,
        }))?;
    let t0 = svd_null(&ext.jac);
    let reference = if t0[5].abs() > 1e-12 { V6::new(0.0, 0.0, 0.0, 0.0, 0.0, t0[5].signum()) } else { V6::new(0.0, 0.0, 0.0, 0.0, t0[4].signum(), 0.0) };
    let seed = Node { t: FoldProblem::tangent(&ext, &reference), ext };

    let forward = trace(&problem, &seed, 1.0, ranges, st);
    let backward = (forward.end != EndReason::Closed).then(|| trace(&problem, &seed, -1.0, ranges, st));
    let closed = forward.end == EndReason::Closed;
    let back_end = backward.as_ref().map_or(EndReason::Closed, |b| b.end);

    let mut nodes: Vec<Node> = Vec::new();
    if let Some(b) = backward {
        nodes.extend(b.nodes.into_iter().skip(1).rev().map(|n| Node { t: -n.t, ext: n.ext }));
    }
    nodes.extend(forward.nodes);
    let nodes = with_cusps(&problem, nodes, st);

    let mut points = Vec::with_capacity(nodes.len());
    let mut arclength = 0.0;
    for (i, node) in nodes.iter().enumerate() {
        if i > 0 {
            arclength += (node.ext.z - nodes[i - 1].ext.z).norm();
        }
        let z = node.ext.z;
        let p = problem.model_params(&z);
        let orbit = orbit::orbit_on_section(&p, OscState::new(z[0], z[1]), section, node.ext.jet.value, &node.ext.jet.jac, &st.orbit)?;
        points.push(TonguePoint { omega: z[4], second: z[5], orbit, tangent: [node.t[4], node.t[5]], arclength });
    }
    let lowest = points.iter().min_by(|a, b| a.second.total_cmp(&b.second));
    let mut label = lowest.map_or(ResonanceLabel { k: start.winding, n: start.n }, |p| ResonanceLabel { k: p.orbit.winding, n: p.orbit.n });
    if kind == TongueKind::PitchforkEven {
        // the tongue is named after the symmetry-broken orbits born on it
        if let Some(k) = lowest.and_then(|p| broken_winding(&p.orbit, plane, st)) {
            label.k = k;
        }
    }
    let mut curve = TongueCurve { kind, plane, points, cusps: Vec::new(), label, closed, ends: (back_end, forward.end), tip: None };
    curve.cusps = detect_cusps(&curve);
    Ok(curve)
}

fn broken_winding(o: &PeriodicOrbit, plane: Plane, st: &ContinuationSettings) -> Option<u32> {
    let bp = BifurcationPoint {
        kind: BifurcationKind::Pitchfork,
        active: plane.params()[0],
        params_at: o.params,
        orbit_at: o.clone(),
        test_value_bracket: (0.0, 0.0),
        test_value: 0.0,
        arclength: 0.0,
        arclength_bracket: (0.0, 0.0),
    };
    crate::continuation::switch_branch(&bp, st).ok().map(|(a, _)| a.winding)
}

fn fold_section(o: &PeriodicOrbit) -> Section {
    if o.symmetric && o.n % 2 == 1 {
        Section::Half(o.n)
    } else {
        Section::Full(o.n)
    }
}

/// Traces the fold locus through `start` in the given parameter plane.
pub fn continue_fold_2p(start: &BifurcationPoint, plane: Plane, ranges: &PlaneRanges, st: &ContinuationSettings) -> Result<TongueCurve> {
    if start.kind != BifurcationKind::SaddleNode {
        return Err(Error::NotApplicable("fold continuation needs a saddle-node point"));
    }
    let o = &start.orbit_at;
    trace_curve(kind_for(o), o, fold_section(o), 1.0, plane, ranges, st)
}

/// Traces the symmetry-breaking pitchfork locus through `start`.
pub fn continue_pitchfork_2p(start: &BifurcationPoint, plane: Plane, ranges: &PlaneRanges, st: &ContinuationSettings) -> Result<TongueCurve> {
    let o = &start.orbit_at;
    if start.kind != BifurcationKind::Pitchfork || !o.symmetric || o.n % 2 == 0 {
        return Err(Error::NotApplicable("pitchfork continuation needs a pitchfork on a symmetric branch"));
    }
    trace_curve(TongueKind::PitchforkEven, o, Section::Half(o.n), -1.0, plane, ranges, st)
}

/// Fold point of `tongue` at `second = value`, found on the traced polyline
/// and re-converged with the second parameter pinned.
pub fn fold_point_at(tongue: &TongueCurve, value: f64, pick_low_omega: bool) -> Option<BifurcationPoint> {
    let mut hits: Vec<(f64, &TonguePoint, &TonguePoint, f64)> = Vec::new();
    for w in tongue.points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if (a.second - value) * (b.second - value) <= 0.0 && a.second != b.second {
            let f = (value - a.second) / (b.second - a.second);
            hits.push((a.omega + f * (b.omega - a.omega), a, b, f));
        }
    }
    hits.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (omega, a, b, f) = if pick_low_omega { *hits.first()? } else { *hits.last()? };
    let s0 = OscState::new(a.orbit.s0.x + f * (b.orbit.s0.x - a.orbit.s0.x), a.orbit.s0.v + f * (b.orbit.s0.v - a.orbit.s0.v));
    let params = a.orbit.params.with(Param::Omega, omega).with(tongue.plane.second(), value);
    let orbit_at = PeriodicOrbit { params, s0, ..a.orbit.clone() };
    Some(BifurcationPoint {
        kind: if tongue.kind == TongueKind::PitchforkEven { BifurcationKind::Pitchfork } else { BifurcationKind::SaddleNode },
        active: Param::Omega,
        params_at: params,
        orbit_at,
        test_value_bracket: (0.0, 0.0),
        test_value: 0.0,
        arclength: 0.0,
        arclength_bracket: (0.0, 0.0),
    })
}

/// One stage of the damping protocol: the tongue re-traced at a fixed `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaStage {
    pub gamma: f64,
    /// The fold curve in `(omega, gamma)` that carried the fold to this stage.
    pub link: TongueCurve,
    pub tongue: TongueCurve,
}

/// Carries a fold tongue in `(omega, A)` through increasing damping: a fold
/// point is continued in `(omega, gamma)` at fixed `A` to each target, and the
/// full tongue is re-traced there. If the `(omega, gamma)` curve turns back
/// before a target the carrier amplitude is moved up along the current tongue.
pub fn continue_tongue_in_gamma(
    tongue: &TongueCurve,
    targets: &[f64],
    omega_range: (f64, f64),
    a_range: (f64, f64),
    st: &ContinuationSettings,
) -> Result<Vec<GammaStage>> {
    if tongue.plane != Plane::OmegaAmplitude {
        return Err(Error::NotApplicable("damping protocol starts from an (omega, A) tongue"));
    }
    let mut current = tongue.clone();
    let mut stages = Vec::new();
    for &target in targets {
        let gamma_now = current.points[0].orbit.params.gamma;
        if target <= gamma_now {
            return Err(Error::InvalidParams(format!("damping targets must increase, got {target} after {gamma_now}")));
        }
        let min_a = current.min_second().map_or(a_range.0, |p| p.second);
        let top = current.points.iter().map(|p| p.second).fold(f64::NEG_INFINITY, f64::max);
        let mut reached = None;
        for frac in [0.15, 0.35, 0.6, 0.85] {
            let carrier = min_a + frac * (top - min_a);
            let Some(start) = fold_point_at(&current, carrier, true) else { continue };
            let ranges = PlaneRanges { omega: omega_range, second: (gamma_now.min(1e-4), target + 0.25 * (target - gamma_now)) };
            let Ok(link) = trace_curve(current.kind, &start.orbit_at, fold_section(&start.orbit_at), 1.0, Plane::OmegaGamma, &ranges, st) else {
                continue;
            };
            if let Some(pt) = pin_second(&link, target, st) {
                reached = Some((link, pt));
                break;
            }
        }
        let (link, at_target) = reached.ok_or_else(|| Error::StepCollapse(format!("fold did not reach gamma = {target}")))?;
        let ranges = PlaneRanges { omega: omega_range, second: a_range };
        let section = fold_section(&at_target);
        let e = if current.kind == TongueKind::PitchforkEven { -1.0 } else { 1.0 };
        let next = trace_curve(current.kind, &at_target, section, e, Plane::OmegaAmplitude, &ranges, st)?;
        stages.push(GammaStage { gamma: target, link, tongue: next.clone() });
        current = next;
    }
    Ok(stages)
}

/// Converged orbit on `curve` where its second parameter equals `value`.
fn pin_second(curve: &TongueCurve, value: f64, st: &ContinuationSettings) -> Option<PeriodicOrbit> {
    let bp = fold_point_at(curve, value, true)?;
    let o = bp.orbit_at;
    let section = fold_section(&o);
    let params = curve.plane.params();
    let problem = FoldProblem { base: o.params, params, section, e: 1.0 };
    let jet = map_jet2(&o.params, o.s0, section, params, &st.orbit.integration).ok()?;
    let q = null_vector(&(jet.jac - Matrix2::identity()));
    let z0 = V6::new(o.s0.x, o.s0.v, q[0], q[1], o.params.omega, value);
    let ext = problem.correct(z0, V6::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0), 0.0, st).ok()?;
    let p = problem.model_params(&ext.z);
    orbit::orbit_on_section(&p, OscState::new(ext.z[0], ext.z[1]), section, ext.jet.value, &ext.jet.jac, &st.orbit).ok()
}

/// The 1:1 synchronisation tongue of the self-excited model. `p` fixes `gamma`
/// and the amplitude at which the bounding folds are first located.
pub fn sync_tongue(p: &ModelParams, omega_range: (f64, f64), a_range: (f64, f64), st: &ContinuationSettings) -> Result<TongueCurve> {
    if p.model != Model::DuffingVanDerPol {
        return Err(Error::NotApplicable("synchronisation tongues need the Duffing-Van der Pol model"));
    }
    p.validate()?;
    let folds = sync_folds(p, omega_range, st)?;
    let ranges = PlaneRanges { omega: omega_range, second: a_range };
    let mut halves = Vec::new();
    for f in &folds {
        let c = continue_fold_2p(f, Plane::OmegaAmplitude, &ranges, st)?;
        halves.push(c);
    }
    let (mut left, mut right) = (halves.remove(0), halves.remove(0));
    if left.points[0].second < left.points.last().unwrap().second {
        left.points.reverse();
        for pt in &mut left.points {
            pt.tangent = [-pt.tangent[0], -pt.tangent[1]];
        }
    }
    if right.points[0].second > right.points.last().unwrap().second {
        right.points.reverse();
        for pt in &mut right.points {
            pt.tangent = [-pt.tangent[0], -pt.tangent[1]];
        }
    }
    let tip_omega = 0.5 * (extrapolate_to_zero(left.points.iter().rev()) + extrapolate_to_zero(right.points.iter()));
    let mut points = left.points;
    let offset = points.last().map_or(0.0, |p| p.arclength);
    let first_right = right.points.first().map_or(0.0, |p| p.arclength);
    let gap = match (points.last(), right.points.first()) {
        (Some(a), Some(b)) => ((a.omega - b.omega).powi(2) + (a.second - b.second).powi(2)).sqrt(),
        _ => 0.0,
    };
    let total = points.first().map_or(0.0, |p| p.arclength);
    for pt in &mut points {
        pt.arclength = (total - pt.arclength).abs();
    }
    let base = (offset - total).abs() + gap;
    points.extend(right.points.into_iter().map(|mut pt| {
        pt.arclength = base + (pt.arclength - first_right).abs();
        pt
    }));
    let label = ResonanceLabel { k: 1, n: 1 };
    let mut curve = TongueCurve {
        kind: TongueKind::FoldSync,
        plane: Plane::OmegaAmplitude,
        points,
        cusps: Vec::new(),
        label,
        closed: false,
        ends: (left.ends.1, right.ends.1),
        tip: Some((tip_omega, 0.0)),
    };
    curve.cusps = detect_cusps(&curve);
    Ok(curve)
}

/// Linear extrapolation to `second = 0` from the two lowest points.
fn extrapolate_to_zero<'a>(mut pts: impl Iterator<Item = &'a TonguePoint>) -> f64 {
    let a = pts.next();
    let b = pts.next();
    match (a, b) {
        (Some(a), Some(b)) if a.second != b.second => a.omega - a.second * (b.omega - a.omega) / (b.second - a.second),
        (Some(a), _) => a.omega,
        _ => f64::NAN,
    }
}

/// The two folds bounding the 1:1 locked branch at the amplitude of `p`.
fn sync_folds(p: &ModelParams, omega_range: (f64, f64), st: &ContinuationSettings) -> Result<Vec<BifurcationPoint>> {
    use crate::continuation::continue_branch;
    let (lo, hi) = omega_range;
    let tol = st.orbit.integration;
    for i in 0..=40 {
        let omega = lo + (hi - lo) * i as f64 / 40.0;
        let q = p.with(Param::Omega, omega);
        let mut flow = crate::ode::Flow::new(q, OscState::new(0.1, 0.0), 0.0, &tol)?;
        let Ok(s) = flow.advance_to(400.0 * q.forcing_period()) else { continue };
        let Ok(seed) = orbit::refine_orbit(&q, s, 1, &st.orbit) else { continue };
        if !seed.is_stable() {
            continue;
        }
        let Ok(branch) = continue_branch(&seed, Param::Omega, omega_range, st) else { continue };
        let mut folds: Vec<BifurcationPoint> =
            branch.bifurcations.into_iter().filter(|b| b.kind == BifurcationKind::SaddleNode).collect();
        if folds.len() >= 2 {
            // the locking region is bounded by the folds next to the seed
            folds.sort_by(|a, b| a.params_at.omega.total_cmp(&b.params_at.omega));
            let below = folds.iter().rposition(|f| f.params_at.omega < omega);
            let above = folds.iter().position(|f| f.params_at.omega > omega);
            if let (Some(b), Some(a)) = (below, above) {
                return Ok(vec![folds[b].clone(), folds[a].clone()]);
            }
        }
    }
    Err(Error::SeedNotConverged("no locked 1:1 orbit bounded by two folds in the omega range".into()))
}
