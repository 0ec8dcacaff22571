//! Pseudo-arclength continuation of periodic-orbit branches in one parameter.
//!
//! Symmetric orbits with an odd period multiple are continued as fixed points
//! of the reflected half map, which keeps the branch on the symmetric
//! subspace and turns symmetry-breaking pitchforks into regular points.
//! Everything else is continued on the full `n`-period map.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::ode::jet::{map_jet1, MapJet1, Section};
use crate::ode::{ModelParams, OscState, Param};
use crate::orbit::{self, OrbitSettings, PeriodicOrbit};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationSettings {
    pub orbit: OrbitSettings,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Consecutive successes before the step grows.
    pub grow_after: usize,
    pub grow_factor: f64,
    pub max_points: usize,
    pub corrector_iterations: usize,
    /// Minimum cosine between successive tangents.
    pub min_tangent_cos: f64,
    pub closure_tol: f64,
    pub min_closure_steps: usize,
    pub bisection_tol: f64,
    pub test_tol: f64,
    /// States further than this from the origin end the branch.
    pub max_state_norm: f64,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        Self {
            orbit: OrbitSettings::default(),
            initial_step: 0.01,
            min_step: 1e-6,
            max_step: 0.05,
            grow_after: 4,
            grow_factor: 1.3,
            max_points: 20_000,
            corrector_iterations: 8,
            min_tangent_cos: 0.9,
            closure_tol: 1e-7,
            min_closure_steps: 10,
            bisection_tol: 1e-9,
            test_tol: 1e-8,
            max_state_norm: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BifurcationKind {
    SaddleNode,
    Pitchfork,
    PeriodDoubling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub orbit: PeriodicOrbit,
    pub arclength: f64,
    /// Unit tangent in `(x0, v0, parameter)`.
    pub tangent: [f64; 3],
}

impl BranchPoint {
    pub fn param(&self, active: Param) -> f64 {
        self.orbit.params.get(active)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationPoint {
    pub kind: BifurcationKind,
    pub active: Param,
    pub params_at: ModelParams,
    pub orbit_at: PeriodicOrbit,
    /// Test-function values at the ends of the final bracket.
    pub test_value_bracket: (f64, f64),
    /// Test-function value at the located point.
    pub test_value: f64,
    pub arclength: f64,
    pub arclength_bracket: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndReason {
    LeftRange,
    Closed,
    StepCollapse,
    MaxPoints,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub active: Param,
    pub n: u32,
    /// Branch continued on the reflected half map (symmetric orbits only).
    pub symmetric: bool,
    pub points: Vec<BranchPoint>,
    pub bifurcations: Vec<BifurcationPoint>,
    pub closed: bool,
    pub parent: Option<Box<BifurcationPoint>>,
    /// How each end of the branch terminated: (backward, forward).
    pub ends: (EndReason, EndReason),
}

impl Branch {
    pub fn length(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.arclength)
    }

    pub fn count(&self, kind: BifurcationKind) -> usize {
        self.bifurcations.iter().filter(|b| b.kind == kind).count()
    }

    /// Points interpolated where the branch crosses `value` of the active parameter.
    pub fn crossings(&self, value: f64) -> Vec<(usize, OscState)> {
        let mut out = Vec::new();
        for (i, w) in self.points.windows(2).enumerate() {
            let (a, b) = (w[0].param(self.active), w[1].param(self.active));
            if (a - value) * (b - value) <= 0.0 && a != b {
                let f = (value - a) / (b - a);
                let (sa, sb) = (w[0].orbit.s0, w[1].orbit.s0);
                out.push((i, OscState::new(sa.x + f * (sb.x - sa.x), sa.v + f * (sb.v - sa.v))));
            }
        }
        out
    }

    /// Refined orbits of this branch at the given parameter value.
    pub fn orbits_at(&self, value: f64, settings: &OrbitSettings) -> Vec<PeriodicOrbit> {
        let p = self.points[0].orbit.params.with(self.active, value);
        let mut out: Vec<PeriodicOrbit> = Vec::new();
        for (_, guess) in self.crossings(value) {
            let refined = if self.symmetric {
                orbit::refine_symmetric_orbit(&p, guess, self.n, settings)
            } else {
                orbit::refine_orbit(&p, guess, self.n, settings)
            };
            if let Ok(o) = refined {
                if !out.iter().any(|q| q.s0.dist(&o.s0) < 1e-7) {
                    out.push(o);
                }
            }
        }
        out
    }
}

/// One point of the extended `(x0, v0, lambda)` problem.
#[derive(Debug, Clone, Copy)]
struct Eval {
    u: Vector3<f64>,
    jet: MapJet1,
    residual: Vector2<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Problem {
    base: ModelParams,
    active: Param,
    section: Section,
    n: u32,
}

impl Problem {
    fn params(&self, lambda: f64) -> ModelParams {
        self.base.with(self.active, lambda)
    }

    fn eval(&self, u: Vector3<f64>, settings: &ContinuationSettings) -> Result<Eval> {
        let p = self.params(u[2]);
        p.validate()?;
        let s = OscState::new(u[0], u[1]);
        let jet = map_jet1(&p, s, self.section, Some(self.active), &settings.orbit.integration)?;
        let residual = jet.value - Vector2::new(u[0], u[1]);
        Ok(Eval { u, jet, residual })
    }

    /// Rows of `[D map - I | d map / d lambda]`.
    fn jacobian(e: &Eval) -> nalgebra::Matrix2x3<f64> {
        let a = e.jet.jac - Matrix2::identity();
        nalgebra::Matrix2x3::new(a[(0, 0)], a[(0, 1)], e.jet.dparam[0], a[(1, 0)], a[(1, 1)], e.jet.dparam[1])
    }

    /// Null direction of the 2x3 Jacobian (unnormalised cross product).
    fn raw_tangent(e: &Eval) -> Vector3<f64> {
        let j = Self::jacobian(e);
        let r1 = Vector3::new(j[(0, 0)], j[(0, 1)], j[(0, 2)]);
        let r2 = Vector3::new(j[(1, 0)], j[(1, 1)], j[(1, 2)]);
        r1.cross(&r2)
    }

    fn monodromy(&self, e: &Eval) -> Matrix2<f64> {
        match self.section {
            Section::Full(_) => e.jet.jac,
            Section::Half(_) => e.jet.jac * e.jet.jac,
        }
    }

    /// Newton corrector on `F(u) = 0`, `(u - anchor) . dir = sigma`.
    fn correct(
        &self,
        anchor: Vector3<f64>,
        dir: Vector3<f64>,
        sigma: f64,
        settings: &ContinuationSettings,
    ) -> Result<Eval> {
        let mut u = anchor + dir * sigma;
        let target = settings.orbit.residual * 0.1;
        let mut last: Option<Eval> = None;
        for _ in 0..settings.corrector_iterations {
            let e = self.eval(u, settings)?;
            let rn = e.residual.norm();
            let arc = (u - anchor).dot(&dir) - sigma;
            if rn <= target && arc.abs() <= 1e-12 {
                return Ok(e);
            }
            let j = Self::jacobian(&e);
            let m = Matrix3::new(
                j[(0, 0)], j[(0, 1)], j[(0, 2)],
                j[(1, 0)], j[(1, 1)], j[(1, 2)],
                dir[0], dir[1], dir[2],
            );
            let rhs = Vector3::new(-e.residual[0], -e.residual[1], -arc);
            let du = m.lu().solve(&rhs).ok_or(Error::SingularJacobian(m.determinant()))?;
            if !du.iter().all(|x| x.is_finite()) {
                break;
            }
            u += du;
            if du.norm() < 1e-13 * (1.0 + u.norm()) && rn <= settings.orbit.residual {
                return Ok(e);
            }
            last = Some(e);
        }
        let e = self.eval(u, settings)?;
        if e.residual.norm() <= settings.orbit.residual {
            return Ok(e);
        }
        let rn = last.map_or(f64::NAN, |l| l.residual.norm());
        Err(Error::NoConvergence { iterations: settings.corrector_iterations, residual: rn })
    }
}

#[derive(Debug, Clone, Copy)]
struct Tests {
    fold: f64,
    pitchfork: Option<f64>,
    pd: f64,
}

fn unit(v: Vector3<f64>) -> Vector3<f64> {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

/// Tangent oriented along `reference`.
fn oriented_tangent(e: &Eval, reference: Vector3<f64>) -> Vector3<f64> {
    let t = unit(Problem::raw_tangent(e));
    if t.dot(&reference) < 0.0 {
        -t
    } else {
        t
    }
}

/// Fold test: parameter component of the oriented branch tangent.
pub fn fold_test(bp: &BranchPoint) -> f64 {
    bp.tangent[2]
}

/// Period-doubling test `det(M + I) = (1 + mu1)(1 + mu2)`.
pub fn pd_test(bp: &BranchPoint) -> f64 {
    pd_value(&bp.orbit)
}

fn pd_value(o: &PeriodicOrbit) -> f64 {
    let [a, b] = o.multipliers;
    ((a + 1.0) * (b + 1.0)).re
}

/// Symmetry-breaking test on a symmetric branch: `det(DQ + I)` where `Q` is
/// the reflected half map. `DQ` splits the monodromy `M = DQ^2` into
/// symmetric and antisymmetric eigen-directions; the antisymmetric one has
/// `DQ`-eigenvalue near `-1` and its `M`-eigenvalue crosses `+1` at the
/// pitchfork.
pub fn pitchfork_test(bp: &BranchPoint, settings: &OrbitSettings) -> Result<f64> {
    let o = &bp.orbit;
    if !o.symmetric || o.n % 2 == 0 {
        return Err(Error::NotApplicable("pitchfork test needs a symmetric orbit"));
    }
    let jet = map_jet1(&o.params, o.s0, Section::Half(o.n), None, &settings.integration)?;
    Ok((jet.jac + Matrix2::identity()).determinant())
}

fn tests_at(problem: &Problem, e: &Eval, tangent: &Vector3<f64>) -> Tests {
    let m = problem.monodromy(e);
    let pd = (m + Matrix2::identity()).determinant();
    let pitchfork = match problem.section {
        Section::Half(_) => Some((e.jet.jac + Matrix2::identity()).determinant()),
        Section::Full(_) => None,
    };
    Tests { fold: tangent[2], pitchfork, pd }
}

/// Accepted point in one direction of travel.
#[derive(Debug, Clone)]
struct Node {
    e: Eval,
    tangent: Vector3<f64>,
    tests: Tests,
}

#[derive(Debug, Clone)]
struct PendingBif {
    kind: BifurcationKind,
    /// Index of the node before the bracket (within the run).
    seg: usize,
    sigma: f64,
    seg_len: f64,
    e: Eval,
    value: f64,
    bracket: (f64, f64),
    sigma_bracket: (f64, f64),
}

struct Run {
    nodes: Vec<Node>,
    bifs: Vec<PendingBif>,
    end: EndReason,
}

fn to_orbit(problem: &Problem, e: &Eval, settings: &ContinuationSettings) -> Result<PeriodicOrbit> {
    let p = problem.params(e.u[2]);
    orbit::orbit_on_section(&p, OscState::new(e.u[0], e.u[1]), problem.section, e.jet.value, &e.jet.jac, &settings.orbit)
}

fn in_range(lambda: f64, range: (f64, f64)) -> bool {
    lambda >= range.0 && lambda <= range.1
}

/// Locates a sign change of `test` between `a` and `b` by Illinois-type regula falsi.
fn locate(
    problem: &Problem,
    a: &Node,
    b: &Node,
    kind: BifurcationKind,
    settings: &ContinuationSettings,
) -> Result<(f64, Eval, f64, (f64, f64), (f64, f64))> {
    let dir = unit(b.e.u - a.e.u);
    let len = (b.e.u - a.e.u).norm();
    let pick = |t: &Tests| -> f64 {
        match kind {
            BifurcationKind::SaddleNode => t.fold,
            BifurcationKind::Pitchfork => t.pitchfork.unwrap_or(f64::NAN),
            BifurcationKind::PeriodDoubling => t.pd,
        }
    };
    let (mut lo, mut hi) = (0.0, len);
    let (mut glo, mut ghi) = (pick(&a.tests), pick(&b.tests));
    // weighted values for the Illinois update; the true ones are reported
    let (mut wlo, mut whi) = (glo, ghi);
    let (mut at_lo, mut at_hi): (Option<Eval>, Option<Eval>) = (None, None);
    let mut hit = None;
    let mut side = 0i8;
    for _ in 0..60 {
        let mut sigma = if whi != wlo { lo - wlo * (hi - lo) / (whi - wlo) } else { 0.5 * (lo + hi) };
        if !(sigma > lo && sigma < hi) || side.abs() > 3 {
            sigma = 0.5 * (lo + hi);
        }
        let e = problem.correct(a.e.u, dir, sigma, settings)?;
        let t = oriented_tangent(&e, a.tangent);
        let g = pick(&tests_at(problem, &e, &t));
        if g.abs() < settings.test_tol * 1e-2 {
            hit = Some((sigma, e, g));
            break;
        }
        if g.signum() == glo.signum() {
            (lo, glo, wlo, at_lo) = (sigma, g, g, Some(e));
            if side < 0 {
                whi *= 0.5;
            }
            side = if side < 0 { side - 1 } else { -1 };
        } else {
            (hi, ghi, whi, at_hi) = (sigma, g, g, Some(e));
            if side > 0 {
                wlo *= 0.5;
            }
            side = if side > 0 { side + 1 } else { 1 };
        }
        let converged = glo.abs().min(ghi.abs()) < settings.test_tol;
        if hi - lo < settings.bisection_tol && converged || hi - lo < 1e-15 * len {
            break;
        }
    }
    if let Some((sigma, e, g)) = hit {
        // the test value vanished before the bracket closed; confirm the root
        // with the narrowest pair of probes straddling it
        let probe = |s: f64| -> Result<f64> {
            let e = problem.correct(a.e.u, dir, s, settings)?;
            let t = oriented_tangent(&e, a.tangent);
            Ok(pick(&tests_at(problem, &e, &t)))
        };
        let mut d = 0.25 * settings.bisection_tol;
        while sigma - d > lo && sigma + d < hi {
            if let (Ok(gl), Ok(gr)) = (probe(sigma - d), probe(sigma + d)) {
                if gl * gr < 0.0 {
                    return Ok((sigma, e, g, (gl, gr), (sigma - d, sigma + d)));
                }
            }
            d *= 8.0;
        }
        return Ok((sigma, e, g, (glo, ghi), (lo, hi)));
    }
    let (sigma, e, g) = match (at_lo, at_hi) {
        (Some(l), Some(h)) => {
            if ghi.abs() < glo.abs() {
                (hi, h, ghi)
            } else {
                (lo, l, glo)
            }
        }
        (Some(l), None) => (lo, l, glo),
        (None, Some(h)) => (hi, h, ghi),
        (None, None) => return Err(Error::StepCollapse("bifurcation localisation".into())),
    };
    Ok((sigma, e, g, (glo, ghi), (lo, hi)))
}

fn detect(problem: &Problem, run: &mut Run, settings: &ContinuationSettings) {
    let k = run.nodes.len();
    if k < 2 {
        return;
    }
    let (a, b) = (&run.nodes[k - 2], &run.nodes[k - 1]);
    let mut changed = Vec::new();
    if a.tests.fold * b.tests.fold < 0.0 {
        changed.push(BifurcationKind::SaddleNode);
    }
    if let (Some(x), Some(y)) = (a.tests.pitchfork, b.tests.pitchfork) {
        if x * y < 0.0 {
            changed.push(BifurcationKind::Pitchfork);
        }
    }
    if a.tests.pd * b.tests.pd < 0.0 {
        changed.push(BifurcationKind::PeriodDoubling);
    }
    for kind in changed {
        if let Ok((sigma, e, value, bracket, sigma_bracket)) = locate(problem, a, b, kind, settings) {
            let seg_len = (b.e.u - a.e.u).norm();
            run.bifs.push(PendingBif { kind, seg: k - 2, sigma, seg_len, e, value, bracket, sigma_bracket });
        }
    }
}

fn trace(
    problem: &Problem,
    seed: &Node,
    sense: f64,
    range: (f64, f64),
    settings: &ContinuationSettings,
) -> Run {
    let first = Node { tangent: seed.tangent * sense, tests: Tests { fold: seed.tests.fold * sense, ..seed.tests }, ..seed.clone() };
    let mut run = Run { nodes: vec![first.clone()], bifs: Vec::new(), end: EndReason::MaxPoints };
    let mut step = settings.initial_step.clamp(settings.min_step, settings.max_step);
    let mut successes = 0usize;
    let seed_u = seed.e.u;
    while run.nodes.len() < settings.max_points {
        let prev = run.nodes.last().unwrap().clone();
        let dir = if run.nodes.len() >= 2 {
            let before = &run.nodes[run.nodes.len() - 2];
            unit(prev.e.u - before.e.u)
        } else {
            prev.tangent
        };
        let attempt = problem.correct(prev.e.u, dir, step, settings).and_then(|e| {
            let t = oriented_tangent(&e, dir);
            if t.dot(&prev.tangent) < settings.min_tangent_cos {
                return Err(Error::StepCollapse("tangent turned too fast".into()));
            }
            Ok((e, t))
        });
        match attempt {
            Ok((e, t)) => {
                if Vector2::new(e.u[0], e.u[1]).norm() > settings.max_state_norm {
                    run.end = EndReason::Diverged;
                    return run;
                }
                let tests = tests_at(problem, &e, &t);
                let node = Node { e, tangent: t, tests };
                // closure: the seed lies on the chord just travelled
                if run.nodes.len() >= settings.min_closure_steps {
                    let chord = node.e.u - prev.e.u;
                    let f = (seed_u - prev.e.u).dot(&chord) / chord.norm_squared();
                    if (0.0..=1.0).contains(&f) {
                        let off = (seed_u - (prev.e.u + chord * f)).norm();
                        if off < 0.1 * chord.norm().max(settings.closure_tol) && unit(chord).dot(&(seed.tangent * sense)) > 0.9 {
                            let closing = first.clone();
                            run.nodes.push(closing);
                            detect(problem, &mut run, settings);
                            run.end = EndReason::Closed;
                            return run;
                        }
                    }
                }
                if !in_range(node.e.u[2], range) {
                    run.end = EndReason::LeftRange;
                    return run;
                }
                run.nodes.push(node);
                detect(problem, &mut run, settings);
                successes += 1;
                if successes >= settings.grow_after {
                    step = (step * settings.grow_factor).min(settings.max_step);
                    successes = 0;
                }
            }
            Err(_) => {
                successes = 0;
                step *= 0.5;
                if step < settings.min_step {
                    run.end = EndReason::StepCollapse;
                    return run;
                }
            }
        }
    }
    run
}

fn seed_node(problem: &Problem, s0: OscState, lambda: f64, settings: &ContinuationSettings) -> Result<Node> {
    let p = problem.params(lambda);
    let (s, _, _) = orbit::newton_fixed_point(&p, s0, problem.section, &settings.orbit)
        .map_err(|e| Error::SeedNotConverged(e.to_string()))?;
    let e = problem.eval(Vector3::new(s.x, s.v, lambda), settings)?;
    let raw = Problem::raw_tangent(&e);
    let reference = if raw[2].abs() > 1e-12 { Vector3::new(0.0, 0.0, raw[2].signum()) } else { Vector3::new(raw[0].signum(), 0.0, 0.0) };
    let t = oriented_tangent(&e, reference);
    let tests = tests_at(problem, &e, &t);
    Ok(Node { e, tangent: t, tests })
}

fn choose_section(seed: &PeriodicOrbit) -> Section {
    if seed.symmetric && seed.n % 2 == 1 {
        Section::Half(seed.n)
    } else {
        Section::Full(seed.n)
    }
}

/// Traces the branch through `seed` in both directions of `active` within `range`.
pub fn continue_branch(seed: &PeriodicOrbit, active: Param, range: (f64, f64), settings: &ContinuationSettings) -> Result<Branch> {
    let lambda0 = seed.params.get(active);
    if !(range.0 < range.1) {
        return Err(Error::InvalidParams(format!("empty continuation range {range:?}")));
    }
    if !in_range(lambda0, range) {
        return Err(Error::InvalidParams(format!("seed {} = {lambda0} outside {range:?}", active.name())));
    }
    let section = choose_section(seed);
    let problem = Problem { base: seed.params, active, section, n: seed.n };
    let seed_node = seed_node(&problem, seed.s0, lambda0, settings)?;

    let forward = trace(&problem, &seed_node, 1.0, range, settings);
    let backward = if forward.end == EndReason::Closed {
        None
    } else {
        Some(trace(&problem, &seed_node, -1.0, range, settings))
    };

    assemble(&problem, forward, backward, settings)
}

fn assemble(problem: &Problem, forward: Run, backward: Option<Run>, settings: &ContinuationSettings) -> Result<Branch> {
    // merged order: backward run reversed (minus its seed copy), then forward run
    let mut nodes: Vec<(Eval, Vector3<f64>)> = Vec::new();
    let mut bifs: Vec<(PendingBif, usize, f64)> = Vec::new();
    let nb = backward.as_ref().map_or(0, |b| b.nodes.len() - 1);
    if let Some(b) = &backward {
        for node in b.nodes.iter().skip(1).rev() {
            nodes.push((node.e, -node.tangent));
        }
        for pb in &b.bifs {
            // segment (seg, seg+1) of the backward run maps to merged (nb-1-seg, nb-seg)
            let start = nb - 1 - pb.seg;
            bifs.push((pb.clone(), start, pb.seg_len - pb.sigma));
        }
    }
    for node in &forward.nodes {
        nodes.push((node.e, node.tangent));
    }
    for pb in &forward.bifs {
        bifs.push((pb.clone(), nb + pb.seg, pb.sigma));
    }

    let mut cumulative = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    for i in 0..nodes.len() {
        if i > 0 {
            acc += (nodes[i].0.u - nodes[i - 1].0.u).norm();
        }
        cumulative.push(acc);
    }

    let mut points = Vec::with_capacity(nodes.len());
    for (i, (e, t)) in nodes.iter().enumerate() {
        let orbit = to_orbit(problem, e, settings)?;
        points.push(BranchPoint { orbit, arclength: cumulative[i], tangent: [t[0], t[1], t[2]] });
    }

    let mut bifurcations = Vec::new();
    for (pb, start, offset) in bifs {
        let orbit_at = to_orbit(problem, &pb.e, settings)?;
        let base = cumulative[start];
        let (b0, b1) = if pb.seg_len - pb.sigma == offset && offset != pb.sigma {
            (base + pb.seg_len - pb.sigma_bracket.1, base + pb.seg_len - pb.sigma_bracket.0)
        } else {
            (base + pb.sigma_bracket.0, base + pb.sigma_bracket.1)
        };
        bifurcations.push(BifurcationPoint {
            kind: pb.kind,
            active: problem.active,
            params_at: orbit_at.params,
            orbit_at,
            test_value_bracket: pb.bracket,
            test_value: pb.value,
            arclength: base + offset,
            arclength_bracket: (b0, b1),
        });
    }
    bifurcations.sort_by(|a, b| a.arclength.total_cmp(&b.arclength));

    let closed = forward.end == EndReason::Closed;
    let back_end = backward.map_or(EndReason::Closed, |b| b.end);
    Ok(Branch {
        active: problem.active,
        n: problem.n,
        symmetric: matches!(problem.section, Section::Half(_)),
        points,
        bifurcations,
        closed,
        parent: None,
        ends: (back_end, forward.end),
    })
}

/// Seeds on the two symmetry-broken branches born at a pitchfork.
pub fn switch_branch(pf: &BifurcationPoint, settings: &ContinuationSettings) -> Result<(PeriodicOrbit, PeriodicOrbit)> {
    if pf.kind != BifurcationKind::Pitchfork {
        return Err(Error::NotApplicable("branch switching needs a pitchfork point"));
    }
    let o = &pf.orbit_at;
    let os = &settings.orbit;
    let half = map_jet1(&o.params, o.s0, Section::Half(o.n), None, &os.integration)?;
    let anti = null_vector(&(half.jac + Matrix2::identity()));
    let problem = Problem { base: o.params, active: pf.active, section: Section::Full(o.n), n: o.n };
    let anchor = Vector3::new(o.s0.x, o.s0.v, o.params.get(pf.active));
    let dir = Vector3::new(anti[0], anti[1], 0.0);
    for delta in [1e-2, 3e-2, 1e-1] {
        for sense in [1.0, -1.0] {
            let Ok(e) = problem.correct(anchor, dir, sense * delta, settings) else { continue };
            let p = problem.params(e.u[2]);
            let Ok(o1) = orbit::refine_orbit(&p, OscState::new(e.u[0], e.u[1]), o.n, os) else { continue };
            if o1.symmetric {
                continue;
            }
            let Ok(o2) = orbit::mirror_orbit(&o1, os) else { continue };
            if !o2.symmetric && o2.s0.dist(&o1.s0) > 1e-6 {
                return Ok((o1, o2));
            }
        }
    }
    Err(Error::SwitchFailed(format!("{} = {}", pf.active.name(), pf.params_at.get(pf.active))))
}

/// Unit null vector of a (nearly) singular 2x2 matrix.
pub(crate) fn null_vector(m: &Matrix2<f64>) -> Vector2<f64> {
    // pick the row with the larger norm; its orthogonal complement is the null direction
    let r0 = Vector2::new(m[(0, 0)], m[(0, 1)]);
    let r1 = Vector2::new(m[(1, 0)], m[(1, 1)]);
    let r = if r0.norm() >= r1.norm() { r0 } else { r1 };
    let v = Vector2::new(-r[1], r[0]);
    let n = v.norm();
    if n == 0.0 {
        Vector2::new(1.0, 0.0)
    } else {
        v / n
    }
}

/// Whether `o` (in any of its `n` phase representations) lies on `branch`.
pub fn branch_contains(branch: &Branch, o: &PeriodicOrbit, settings: &OrbitSettings) -> bool {
    if branch.n != o.n || branch.points.is_empty() {
        return false;
    }
    let fixed = branch.points[0].orbit.params;
    if [Param::Omega, Param::Amplitude, Param::Gamma]
        .into_iter()
        .any(|q| q != branch.active && fixed.get(q) != o.params.get(q))
    {
        return false;
    }
    let lambda = o.params.get(branch.active);
    let mut phases = vec![o.s0];
    let mut s = o.s0;
    for _ in 1..o.n {
        match orbit::stroboscopic_map(&o.params, s, 1, &settings.integration) {
            Ok(next) => {
                s = next;
                phases.push(s);
            }
            Err(_) => return false,
        }
    }
    let p = branch.points[0].orbit.params.with(branch.active, lambda);
    for (_, guess) in branch.crossings(lambda) {
        if !phases.iter().any(|ph| ph.dist(&guess) < 0.05) {
            continue;
        }
        let refined = if branch.symmetric {
            orbit::newton_fixed_point(&p, guess, Section::Half(branch.n), settings)
        } else {
            orbit::newton_fixed_point(&p, guess, Section::Full(branch.n), settings)
        };
        if let Ok((r, _, _)) = refined {
            if phases.iter().any(|ph| ph.dist(&r) < 1e-6) {
                return true;
            }
        }
    }
    false
}

/// A seed harvested from direct integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsolaSeed {
    pub omega: f64,
    pub a: f64,
    pub state: OscState,
    pub n: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolaSearch {
    pub branches: Vec<Branch>,
    /// Seeds that failed to refine or continue, with the reason.
    pub failures: Vec<(IsolaSeed, Error)>,
    /// Seeds already covered by an earlier branch.
    pub duplicates: Vec<IsolaSeed>,
}

/// Continues every seed in `omega` at its own amplitude (the other
/// parameters come from `params`), merging seeds that land on a branch
/// already traced (here or in `known`). Seeds are processed in order of `omega`.
pub fn find_isolas(
    params: &ModelParams,
    omega_range: (f64, f64),
    seeds: &[IsolaSeed],
    known: &[Branch],
    settings: &ContinuationSettings,
) -> IsolaSearch {
    use rayon::prelude::*;
    let mut sorted = seeds.to_vec();
    sorted.sort_by(|a, b| a.omega.total_cmp(&b.omega).then(a.n.cmp(&b.n)));
    let refined: Vec<Result<PeriodicOrbit>> = sorted
        .par_iter()
        .map(|s| orbit::refine_orbit(&params.with(Param::Omega, s.omega).with(Param::Amplitude, s.a), s.state, s.n, &settings.orbit))
        .collect();
    let mut out = IsolaSearch { branches: Vec::new(), failures: Vec::new(), duplicates: Vec::new() };
    for (seed, r) in sorted.into_iter().zip(refined) {
        let o = match r {
            Ok(o) => o,
            Err(e) => {
                out.failures.push((seed, e));
                continue;
            }
        };
        if known.iter().chain(out.branches.iter()).any(|b| branch_contains(b, &o, &settings.orbit)) {
            out.duplicates.push(seed);
            continue;
        }
        match continue_branch(&o, Param::Omega, omega_range, settings) {
            Ok(b) => out.branches.push(b),
            Err(e) => out.failures.push((seed, e)),
        }
    }
    out
}

/// Smallest `(x0, v0)` distance between points of `a` and `b` at equal
/// values of the active parameter (sampled at the points of `a`).
pub fn min_distance_at_equal_parameter(a: &Branch, b: &Branch) -> f64 {
    let mut best = f64::INFINITY;
    for pt in &a.points {
        let lambda = pt.param(a.active);
        for (_, s) in b.crossings(lambda) {
            best = best.min(s.dist(&pt.orbit.s0));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_vector_of_rank_one_matrix() {
        let m = Matrix2::new(1.0, 2.0, 2.0, 4.0);
        let v = null_vector(&m);
        assert!((m * v).norm() < 1e-14);
        assert!((v.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_ranges() {
        let p = ModelParams::duffing(0.05, 0.5, 0.01);
        let o = orbit::refine_orbit(&p, OscState::ORIGIN, 1, &OrbitSettings::default()).unwrap();
        let st = ContinuationSettings::default();
        assert!(continue_branch(&o, Param::Omega, (0.6, 0.9), &st).is_err());
        assert!(continue_branch(&o, Param::Omega, (0.9, 0.1), &st).is_err());
    }

    #[test]
    fn quiet_branch_has_no_bifurcations() {
        // far below the main resonance the small response is featureless
        let p = ModelParams::duffing(0.05, 0.4, 0.01);
        let o = orbit::refine_orbit(&p, OscState::ORIGIN, 1, &OrbitSettings::default()).unwrap();
        let st = ContinuationSettings::default();
        let b = continue_branch(&o, Param::Omega, (0.35, 0.45), &st).unwrap();
        assert!(b.points.len() > 2);
        assert!(b.bifurcations.is_empty());
        assert_eq!(b.ends, (EndReason::LeftRange, EndReason::LeftRange));
        assert!(b.points.iter().all(|pt| pt.orbit.residual <= 1e-9 && pt.orbit.is_stable()));
        for w in b.points.windows(2) {
            let (t0, t1) = (w[0].tangent, w[1].tangent);
            assert!(t0[0] * t1[0] + t0[1] * t1[1] + t0[2] * t1[2] > 0.0);
            assert!(w[1].arclength > w[0].arclength);
            assert!(fold_test(&w[0]).signum() == fold_test(&w[1]).signum());
            assert!(pd_test(&w[0]) > 0.0);
        }
        let pf = pitchfork_test(&b.points[0], &st.orbit).unwrap();
        assert!(b.points.iter().all(|pt| pitchfork_test(pt, &st.orbit).unwrap().signum() == pf.signum()));
    }
}
