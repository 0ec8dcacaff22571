//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! `NLRES_ACCEPTANCE=2,5` restricts the run to the listed criteria.

use std::f64::consts::PI;
use std::time::Instant;

use nlres_core::codim2::{continue_fold_2p, continue_tongue_in_gamma, sync_tongue, Plane, PlaneRanges, TongueCurve};
use nlres_core::continuation::{continue_branch, switch_branch, BifurcationKind, Branch, ContinuationSettings};
use nlres_core::ode::jet::{map_jet1, Section};
use nlres_core::ode::{integrate, sample_trajectory, Flow};
use nlres_core::orbit::{mirror_orbit, refine_orbit, refine_symmetric_orbit, stroboscopic_map, PeriodicOrbit, Stability};
use nlres_core::sweep::{classify_attractor, harvest_seeds, scan, Axis, Classification, SweepSpec, Timing};
use nlres_core::{natural_period, ModelParams, OscState, Param, Tolerance};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn settings() -> ContinuationSettings {
    ContinuationSettings::default()
}

fn omega_of(b: &Branch, i: usize) -> f64 {
    b.points[i].param(b.active)
}

fn bifurcations(b: &Branch, kind: BifurcationKind) -> Vec<f64> {
    let mut v: Vec<f64> = b.bifurcations.iter().filter(|f| f.kind == kind).map(|f| f.params_at.get(b.active)).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Distinct `x_max` of period-1 attractors reached by direct integration
/// from a fan of initial states and from perturbed copies of `extra`.
fn attractor_amplitudes(p: &ModelParams, extra: &[OscState]) -> Vec<f64> {
    let timing = Timing::default();
    let mut found: Vec<f64> = Vec::new();
    let fan = [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (0.0, 3.0), (-2.0, 1.0), (4.0, 0.0)];
    let starts = fan.iter().map(|&(x, v)| OscState::new(x, v)).chain(extra.iter().map(|s| OscState::new(s.x + 1e-3, s.v - 1e-3)));
    for s0 in starts {
        let r = classify_attractor(p, s0, &timing);
        if r.class == Classification::PeriodN(1) && !found.iter().any(|&a| (a - r.x_max).abs() < 1e-3) {
            found.push(r.x_max);
        }
    }
    found.sort_by(f64::total_cmp);
    found
}

/// Fold count, unstable segment between two folds, and bistability by direct integration.
fn resonance_curve_checks(b: &Branch) -> (bool, String) {
    let sn: Vec<_> = b.bifurcations.iter().filter(|f| f.kind == BifurcationKind::SaddleNode).collect();
    let mut detail = format!("{} SN at {:?}", sn.len(), sn.iter().map(|f| format!("{:.4}", f.params_at.omega)).collect::<Vec<_>>());
    if sn.len() != 2 {
        return (false, detail);
    }
    let (s0, s1) = (sn[0].arclength.min(sn[1].arclength), sn[0].arclength.max(sn[1].arclength));
    let between: Vec<_> = b.points.iter().filter(|p| p.arclength > s0 && p.arclength < s1).collect();
    let unstable = !between.is_empty() && between.iter().all(|p| p.orbit.stability == Stability::Unstable);
    let (w0, w1) = (sn[0].params_at.omega.min(sn[1].params_at.omega), sn[0].params_at.omega.max(sn[1].params_at.omega));
    let mid = 0.5 * (w0 + w1);
    let stable: Vec<OscState> = b.orbits_at(mid, &settings().orbit).iter().filter(|o| o.is_stable()).map(|o| o.s0).collect();
    let amps = attractor_amplitudes(&b.points[0].orbit.params.with(Param::Omega, mid), &stable);
    let spread = amps.last().zip(amps.first()).map_or(0.0, |(hi, lo)| hi - lo);
    detail += &format!(
        ", {} interior points all unstable: {unstable}, stable x_max at omega={mid:.3}: {:?}",
        between.len(),
        amps.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>()
    );
    (unstable && amps.len() >= 2 && spread > 0.1, detail)
}

fn criterion_1() -> Outcome {
    let st = settings();
    let p = ModelParams::duffing(0.05, 0.8, 0.01);
    let seed = match refine_orbit(&p, OscState::ORIGIN, 1, &st.orbit) {
        Ok(o) => o,
        Err(e) => return Outcome::new(false, format!("seed failed: {e}")),
    };
    let b = match continue_branch(&seed, Param::Omega, (0.8, 1.6), &st) {
        Ok(b) => b,
        Err(e) => return Outcome::new(false, format!("continuation failed: {e}")),
    };
    let (pass, detail) = resonance_curve_checks(&b);
    let mut detail = format!("omega in [0.8, 1.6]: {detail}");
    // the same curve over a window that holds both folds
    let wide_seed = refine_orbit(&p.with(Param::Omega, 3.0), OscState::ORIGIN, 1, &st.orbit);
    if let Ok(b) = wide_seed.and_then(|o| continue_branch(&o, Param::Omega, (0.8, 3.0), &st)) {
        let (ok, d) = resonance_curve_checks(&b);
        detail += &format!(" | diagnostic omega in [0.8, 3.0] ({}): {d}", if ok { "holds" } else { "fails" });
    }
    Outcome::new(pass, detail)
}

/// Upward zero crossings of `x` on the unforced limit cycle, located by bisection.
fn limit_cycle_frequency(gamma: f64) -> f64 {
    let p = ModelParams::duffing_vdp(0.0, 1.0, gamma);
    let tol = Tolerance { rel: 1e-12, abs: 1e-13 };
    let mut flow = Flow::new(p, OscState::new(2.0, 0.0), 0.0, &tol).unwrap();
    flow.advance_to(3000.0).unwrap();
    let dt = 0.01;
    let mut crossings = Vec::new();
    let mut prev = flow.state();
    let mut t = flow.time();
    while crossings.len() < 12 {
        let next = flow.advance_to(t + dt).unwrap();
        if prev.x < 0.0 && next.x >= 0.0 {
            let (mut lo, mut hi) = (0.0, dt);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let s = integrate(&p, prev, 0.0, mid, &tol).unwrap();
                if s.x < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            crossings.push(t + 0.5 * (lo + hi));
        }
        prev = next;
        t += dt;
    }
    let period = (crossings[11] - crossings[1]) / 10.0;
    2.0 * PI / period
}

fn criterion_2() -> Outcome {
    let st = settings();
    let p = ModelParams::duffing(0.05, 3.0, 0.01);
    let main = refine_orbit(&p, OscState::ORIGIN, 1, &st.orbit)
        .and_then(|o| continue_branch(&o, Param::Omega, (0.8, 3.0), &st))
        .and_then(|b| {
            let sn = b.bifurcations.iter().find(|f| f.kind == BifurcationKind::SaddleNode).cloned();
            let sn = sn.ok_or(nlres_core::Error::NotApplicable("no fold on the main resonance"))?;
            continue_fold_2p(&sn, Plane::OmegaAmplitude, &PlaneRanges { omega: (0.5, 3.0), second: (0.0, 0.2) }, &st)
        });
    let main = match main {
        Ok(t) => t,
        Err(e) => return Outcome::new(false, format!("main tongue failed: {e}")),
    };
    let cusps: Vec<(f64, f64)> = main.cusps.iter().map(|&i| (main.points[i].omega, main.points[i].second)).collect();
    let cusp_ok = !cusps.is_empty() && cusps.iter().all(|c| c.1 > 0.0);

    let q = ModelParams::duffing_vdp(2.0, 1.0, 0.01);
    let sync = match sync_tongue(&q, (1.0, 6.0), (1e-4, 3.0), &st) {
        Ok(t) => t,
        Err(e) => return Outcome::new(false, format!("main cusps {cusps:?}; sync tongue failed: {e}")),
    };
    let min_a = sync.min_second().map_or(f64::INFINITY, |m| m.second);
    let tip = sync.tip.map_or(f64::NAN, |t| t.0);
    let near_tip: Vec<(f64, f64)> = sync
        .cusps
        .iter()
        .map(|&i| (sync.points[i].omega, sync.points[i].second))
        .filter(|&(w, a)| (w - tip).abs() < 0.05 && a < 0.05)
        .collect();
    let far: Vec<(f64, f64)> = sync.cusps.iter().map(|&i| (sync.points[i].omega, sync.points[i].second)).filter(|c| !near_tip.contains(c)).collect();
    let omega_lc = limit_cycle_frequency(0.01);
    let pass = cusp_ok && min_a < 0.01 && near_tip.is_empty() && (tip - omega_lc).abs() < 1e-3;
    Outcome::new(
        pass,
        format!(
            "main tongue cusps {:?}; sync min A {min_a:.2e}, cusps near tip {}, tip omega {tip:.6}, limit cycle omega {omega_lc:.6}, |diff| {:.2e}; cusps away from the tip {:?}",
            cusps.iter().map(|c| format!("({:.5}, {:.6})", c.0, c.1)).collect::<Vec<_>>(),
            near_tip.len(),
            (tip - omega_lc).abs(),
            far.iter().map(|c| format!("({:.4}, {:.5})", c.0, c.1)).collect::<Vec<_>>()
        ),
    )
}

struct PrimaryA3 {
    primary: Branch,
    broken: Vec<Branch>,
}

fn primary_a3(st: &ContinuationSettings) -> nlres_core::Result<PrimaryA3> {
    let p = ModelParams::duffing(3.0, 0.83, 0.01);
    let o = refine_orbit(&p, OscState::ORIGIN, 1, &st.orbit)?;
    let primary = continue_branch(&o, Param::Omega, (0.15, 1.2), st)?;
    let mut broken = Vec::new();
    for pf in primary.bifurcations.iter().filter(|f| f.kind == BifurcationKind::Pitchfork) {
        let (a, _) = switch_branch(pf, st)?;
        broken.push(continue_branch(&a, Param::Omega, (0.15, 1.2), st)?);
    }
    Ok(PrimaryA3 { primary, broken })
}

fn criterion_3() -> Outcome {
    let st = settings();
    let PrimaryA3 { primary, broken } = match primary_a3(&st) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("primary branch failed: {e}")),
    };
    let sn: Vec<_> = primary.bifurcations.iter().filter(|f| f.kind == BifurcationKind::SaddleNode).collect();
    let odd_sn = !sn.is_empty() && sn.len() % 2 == 0 && sn.iter().all(|f| f.orbit_at.winding % 2 == 1);
    let pf = bifurcations(&primary, BifurcationKind::Pitchfork);
    let pf_pairs = pf.len() / 2;
    let wind = |w: f64| primary.orbits_at(w, &st.orbit).iter().map(|o| o.winding).collect::<Vec<_>>();
    let (w07, w04) = (wind(0.7), wind(0.4));
    let winding_ok = !w07.is_empty() && w07.iter().all(|&k| k == 3) && !w04.is_empty() && w04.iter().all(|&k| k == 5);

    // switched branches born at the pitchfork pair around omega = 1
    let at_one: Vec<PeriodicOrbit> = broken
        .iter()
        .filter(|b| {
            let (lo, hi) = b.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.param(Param::Omega)), hi.max(p.param(Param::Omega))));
            lo < 1.0 && hi > 1.0
        })
        .flat_map(|b| b.orbits_at(1.0, &st.orbit))
        .collect();
    let mut unique: Vec<PeriodicOrbit> = Vec::new();
    for o in at_one {
        if !unique.iter().any(|u| u.s0.dist(&o.s0) < 1e-6) {
            unique.push(o);
        }
    }
    let mirror_ok = !unique.is_empty()
        && unique.iter().all(|o| {
            !o.symmetric
                && mirror_orbit(o, &st.orbit).is_ok_and(|m| m.s0.dist(&o.s0) > 1e-3 && unique.iter().any(|u| u.s0.dist(&m.s0) < 1e-6))
        });
    let pass = odd_sn && pf_pairs >= 3 && winding_ok && mirror_ok;
    Outcome::new(
        pass,
        format!(
            "{} SN (windings {:?}), {} pitchfork pairs at {:?}, windings at 0.7 {w07:?} and 0.4 {w04:?}, {} switched orbits at omega=1 form mirror pairs: {mirror_ok}",
            sn.len(),
            sn.iter().map(|f| f.orbit_at.winding).collect::<Vec<_>>(),
            pf_pairs,
            pf.iter().map(|w| format!("{w:.4}")).collect::<Vec<_>>(),
            unique.len()
        ),
    )
}

/// Smallest distance between any phase of the `n`-periodic orbits of `isola`
/// and the points of `other` at the same forcing frequency.
fn phase_distance(isola: &Branch, other: &Branch, tol: &Tolerance) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..isola.points.len() {
        let o = &isola.points[i].orbit;
        let crossings = other.crossings(omega_of(isola, i));
        if crossings.is_empty() {
            continue;
        }
        let mut s = o.s0;
        for k in 0..o.n {
            if k > 0 {
                s = match stroboscopic_map(&o.params, s, 1, tol) {
                    Ok(s) => s,
                    Err(_) => return 0.0,
                };
            }
            for (_, c) in &crossings {
                best = best.min(s.dist(c));
            }
        }
    }
    best
}

fn criterion_4() -> Outcome {
    let st = settings();
    let reference = match primary_a3(&st) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("primary branch failed: {e}")),
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for w in [0.82, 0.2988] {
        let p = ModelParams::duffing(3.0, w, 0.01);
        let cell = classify_attractor(&p, OscState::ORIGIN, &Timing::default());
        if cell.class != Classification::PeriodN(3) {
            pass = false;
            parts.push(format!("omega={w}: classified {:?}", cell.class));
            continue;
        }
        let isola = refine_orbit(&p, cell.strobe, 3, &st.orbit).and_then(|o| continue_branch(&o, Param::Omega, (0.15, 1.2), &st));
        let isola = match isola {
            Ok(b) => b,
            Err(e) => {
                pass = false;
                parts.push(format!("omega={w}: continuation failed: {e}"));
                continue;
            }
        };
        let tol = st.orbit.integration;
        let d_primary = phase_distance(&isola, &reference.primary, &tol);
        let d_broken = reference.broken.iter().map(|b| phase_distance(&isola, b, &tol)).fold(f64::INFINITY, f64::min);
        let ok = isola.closed && d_primary > 1e-3 && d_broken > 1e-3;
        pass &= ok;
        let (lo, hi) = (0..isola.points.len()).map(|i| omega_of(&isola, i)).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), w| (a.min(w), b.max(w)));
        let shown = |d: f64| if d.is_finite() { format!("{d:.3}") } else { "none at equal omega".to_string() };
        parts.push(format!(
            "omega={w}: PeriodN(3), isola closed {} over [{lo:.4}, {hi:.4}], distance to primary {}, to broken branches {}",
            isola.closed,
            shown(d_primary),
            shown(d_broken)
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let st = settings();
    let spec = SweepSpec {
        params: ModelParams::duffing(0.0, 1.0, 0.01),
        omega: Axis::new(0.15, 1.2, 200),
        amplitude: Axis::new(0.0, 6.0, 120),
        initial: OscState::ORIGIN,
        timing: Timing::default(),
    };
    let raster = match scan(&spec) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("scan failed: {e}")),
    };
    let mut seeds = harvest_seeds(&raster, |c| c.period() == Some(3));
    seeds.sort_by(|a, b| b.a.total_cmp(&a.a).then(a.omega.total_cmp(&b.omega)));
    let ranges = PlaneRanges { omega: (0.1, 1.6), second: (1e-4, 6.5) };
    let mut tongues: Vec<TongueCurve> = Vec::new();
    let mut failures = 0;
    for s in &seeds {
        if tongues.iter().any(|t| t.contains(s.omega, s.a)) {
            continue;
        }
        let p = spec.params.with(Param::Omega, s.omega).with(Param::Amplitude, s.a);
        let branch = refine_orbit(&p, s.state, s.n, &st.orbit).and_then(|o| continue_branch(&o, Param::Omega, ranges.omega, &st));
        let Ok(branch) = branch else {
            failures += 1;
            continue;
        };
        let tongue = branch
            .bifurcations
            .iter()
            .filter(|f| f.kind == BifurcationKind::SaddleNode)
            .filter_map(|sn| continue_fold_2p(sn, Plane::OmegaAmplitude, &ranges, &st).ok())
            .find(|t| t.contains(s.omega, s.a));
        match tongue {
            Some(t) => tongues.push(t),
            None => failures += 1,
        }
    }
    let (dw, da) = (spec.omega.step(), spec.amplitude.step());
    let inside_any = |w: f64, a: f64| tongues.iter().any(|t| t.contains(w, a));
    let (mut total, mut inside, mut far) = (0usize, 0usize, 0usize);
    for c in raster.cells.iter().filter(|c| c.period() == Some(3)) {
        total += 1;
        if inside_any(c.omega, c.a) {
            inside += 1;
        } else if !(-2i32..=2).any(|i| (-2i32..=2).any(|j| inside_any(c.omega + i as f64 * dw, c.a + j as f64 * da))) {
            far += 1;
        }
    }
    let frac = if total > 0 { inside as f64 / total as f64 } else { 0.0 };
    let near = |w: f64| seeds.iter().any(|s| (s.omega - w).abs() < 0.05 && (s.a - 3.0).abs() < 1.0);
    Outcome::new(
        total > 0 && frac >= 0.95 && far == 0,
        format!(
            "{total} PeriodN(3) cells in {} regions, {} isola tongues ({failures} seeds without a tongue), contained {inside} ({:.1}%), farther than 2 cells outside {far}; seeds near (0.82, 3) {} and (0.2988, 3) {}",
            seeds.len(),
            tongues.len(),
            100.0 * frac,
            near(0.82),
            near(0.2988)
        ),
    )
}

fn criterion_6() -> Outcome {
    let st = settings();
    let p = ModelParams::duffing(3.0, 0.82, 0.01);
    let cell = classify_attractor(&p, OscState::ORIGIN, &Timing::default());
    let base = refine_orbit(&p, cell.strobe, 3, &st.orbit)
        .and_then(|o| continue_branch(&o, Param::Omega, (0.15, 1.2), &st))
        .and_then(|b| {
            let sn = b.bifurcations.iter().find(|f| f.kind == BifurcationKind::SaddleNode).cloned();
            let sn = sn.ok_or(nlres_core::Error::NotApplicable("isola without folds"))?;
            continue_fold_2p(&sn, Plane::OmegaAmplitude, &PlaneRanges { omega: (0.1, 2.5), second: (1e-4, 40.0) }, &st)
        });
    let base = match base {
        Ok(t) => t,
        Err(e) => return Outcome::new(false, format!("isola tongue at gamma=0.01 failed: {e}")),
    };
    let stages = match continue_tongue_in_gamma(&base, &[0.05, 0.1, 0.15, 0.2], (0.1, 2.5), (1e-4, 40.0), &st) {
        Ok(s) => s,
        Err(e) => return Outcome::new(false, format!("damping continuation failed: {e}")),
    };
    let tongue = &stages.last().expect("four stages").tongue;
    let min0 = base.min_second().map_or(f64::NAN, |m| m.second);
    let min1 = tongue.min_second().map_or(f64::NAN, |m| m.second);
    let features = tongue.features();
    let higher = min1 > min0 && features.len() >= 2;

    // row A = 25 inside omega in [1.15, 1.7]
    let mut cross: Vec<(f64, usize)> = tongue.row_crossings(25.0).into_iter().filter(|c| c.0 >= 1.15 && c.0 <= 1.7).collect();
    cross.sort_by(|a, b| a.0.total_cmp(&b.0));
    if cross.len() < 4 || cross.len() % 2 == 1 {
        return Outcome::new(false, format!("min A {min0:.3} -> {min1:.3}, {} features; A=25 row crossings {:?}", features.len(), cross));
    }
    let left = (cross[0], cross[1]);
    let right = (cross[cross.len() - 2], cross[cross.len() - 1]);
    let component_branch = |(lo, hi): ((f64, usize), (f64, usize))| -> nlres_core::Result<Branch> {
        let w = lo.0 + 0.02 * (hi.0 - lo.0);
        let pt = &tongue.points[lo.1];
        let p = pt.orbit.params.with(Param::Omega, w).with(Param::Amplitude, 25.0);
        let o = refine_orbit(&p, pt.orbit.s0, 3, &st.orbit)?;
        continue_branch(&o, Param::Omega, (1.15, 1.7), &st)
    };
    let (lb, rb) = match (component_branch(left), component_branch(right)) {
        (Ok(l), Ok(r)) => (l, r),
        (Err(e), _) | (_, Err(e)) => return Outcome::new(false, format!("component continuation failed: {e}")),
    };
    let mut left_pd = 0;
    for pf in lb.bifurcations.iter().filter(|f| f.kind == BifurcationKind::Pitchfork) {
        if let Ok(b) = switch_branch(pf, &st).and_then(|(a, _)| continue_branch(&a, Param::Omega, (1.15, 1.7), &st)) {
            left_pd += b.count(BifurcationKind::PeriodDoubling);
        }
    }
    // primary branch at the same parameters and its symmetry-broken offspring
    let q = ModelParams::duffing(25.0, 1.15, 0.2);
    let primary = Flow::new(q, OscState::ORIGIN, 0.0, &Tolerance::default())
        .and_then(|mut f| f.advance_to(300.0 * q.forcing_period()))
        .and_then(|s| refine_symmetric_orbit(&q, s, 1, &st.orbit))
        .and_then(|o| continue_branch(&o, Param::Omega, (0.8, 2.0), &st));
    let primary = match primary {
        Ok(b) => b,
        Err(e) => return Outcome::new(false, format!("primary branch at A=25 failed: {e}")),
    };
    let primary_pf = bifurcations(&primary, BifurcationKind::Pitchfork);
    let mut primary_pd = Vec::new();
    for pf in primary.bifurcations.iter().filter(|f| f.kind == BifurcationKind::Pitchfork) {
        if let Ok(b) = switch_branch(pf, &st).and_then(|(a, _)| continue_branch(&a, Param::Omega, (0.8, 2.0), &st)) {
            primary_pd.extend(bifurcations(&b, BifurcationKind::PeriodDoubling));
        }
    }
    let within = |v: &[f64], (lo, hi): ((f64, usize), (f64, usize))| v.iter().filter(|&&w| w >= lo.0 && w <= hi.0).count();
    let left_ok = lb.count(BifurcationKind::Pitchfork) > 0 && left_pd > 0 && within(&primary_pf, left) > 0 && within(&primary_pd, left) > 0;
    let right_ok = rb.closed
        && rb.count(BifurcationKind::Pitchfork) == 0
        && rb.count(BifurcationKind::PeriodDoubling) == 0
        && within(&primary_pf, right) == 0
        && within(&primary_pd, right) == 0;
    Outcome::new(
        higher && left_ok && right_ok,
        format!(
            "min A {min0:.3} -> {min1:.3} at gamma=0.2 with {} cusp/tip features; A=25 components left [{:.4}, {:.4}] (PF {}, PD on broken period-3 {}, primary PF {:?}, primary-offspring PD {:?}) right [{:.4}, {:.4}] (closed {}, PF {}, PD {})",
            features.len(),
            left.0 .0,
            left.1 .0,
            lb.count(BifurcationKind::Pitchfork),
            left_pd,
            primary_pf.iter().map(|w| format!("{w:.4}")).collect::<Vec<_>>(),
            primary_pd.iter().map(|w| format!("{w:.4}")).collect::<Vec<_>>(),
            right.0 .0,
            right.1 .0,
            rb.closed,
            rb.count(BifurcationKind::Pitchfork),
            rb.count(BifurcationKind::PeriodDoubling)
        ),
    )
}

fn energy(s: OscState) -> f64 {
    0.5 * s.v * s.v + 0.5 * s.x * s.x + 0.25 * s.x.powi(4)
}

fn brute_force_period(x_max: f64) -> f64 {
    let p = ModelParams::duffing(0.0, 1.0, 0.0);
    let tol = Tolerance { rel: 1e-13, abs: 1e-14 };
    let s0 = OscState::new(x_max, 0.0);
    let (mut t, dt) = (0.0, 0.01);
    while integrate(&p, s0, 0.0, t + dt, &tol).unwrap().x > 0.0 {
        t += dt;
    }
    let (mut lo, mut hi) = (t, t + dt);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if integrate(&p, s0, 0.0, mid, &tol).unwrap().x > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    4.0 * 0.5 * (lo + hi)
}

/// Simpson rule of the damping along a sampled orbit.
fn damping_integral(o: &PeriodicOrbit) -> f64 {
    let per = 4000;
    let tr = sample_trajectory(&o.params, o.s0, 0.0, o.period(), per, &Tolerance { rel: 1e-12, abs: 1e-13 }).unwrap();
    let f: Vec<f64> = tr.samples.iter().map(|(_, s)| o.params.damping(s.x)).collect();
    let h = o.period() / (f.len() - 1) as f64;
    let m = f.len() - 1;
    assert!(m % 2 == 0);
    let mut sum = f[0] + f[m];
    for (i, v) in f.iter().enumerate().take(m).skip(1) {
        sum += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    sum * h / 3.0
}

fn criterion_7() -> Outcome {
    let st = settings();
    let mut parts = Vec::new();
    let mut pass = true;

    // Liouville determinant
    let mut worst_det: f64 = 0.0;
    for (a, w, n, g) in [(0.05, 1.3, 1, 0.01), (3.0, 0.7, 1, 0.01), (3.0, 0.82, 3, 0.01), (1.0, 1.5, 1, 0.1)] {
        let p = ModelParams::duffing(a, w, g);
        let guess = Flow::new(p, OscState::ORIGIN, 0.0, &Tolerance::default()).and_then(|mut f| f.advance_to(1020.0 * p.forcing_period()));
        match guess.and_then(|s| refine_orbit(&p, s, n, &st.orbit)) {
            Ok(o) => {
                let expected = (-g * n as f64 * p.forcing_period()).exp();
                worst_det = worst_det.max((o.multiplier_product() - expected).abs() / expected);
            }
            Err(_) => worst_det = f64::INFINITY,
        }
    }
    let q = ModelParams::duffing_vdp(2.0, 2.5, 0.01);
    let vdp = Flow::new(q, OscState::new(0.1, 0.0), 0.0, &Tolerance::default())
        .and_then(|mut f| f.advance_to(400.0 * q.forcing_period()))
        .and_then(|s| refine_orbit(&q, s, 1, &st.orbit));
    match vdp {
        Ok(o) => {
            let expected = (-damping_integral(&o)).exp();
            worst_det = worst_det.max((o.multiplier_product() - expected).abs() / expected);
        }
        Err(_) => worst_det = f64::INFINITY,
    }
    pass &= worst_det < 1e-6;
    parts.push(format!("determinant rel err {worst_det:.1e}"));

    // natural period against time integration
    let worst_period = [0.5, 1.0, 2.0, 5.0]
        .iter()
        .map(|&x| {
            let t = natural_period(x).unwrap();
            ((t - brute_force_period(x)) / t).abs()
        })
        .fold(0.0, f64::max);
    pass &= worst_period < 1e-8;
    parts.push(format!("natural period rel err {worst_period:.1e}"));

    // energy with A = gamma = 0
    let p0 = ModelParams::duffing(0.0, 1.0, 0.0);
    let worst_energy = [(1.0, 0.0), (0.3, -2.0), (-2.5, 1.0)]
        .iter()
        .map(|&(x, v)| {
            let s0 = OscState::new(x, v);
            let s1 = integrate(&p0, s0, 0.0, 50.0, &Tolerance::default()).unwrap();
            ((energy(s1) - energy(s0)) / energy(s0)).abs()
        })
        .fold(0.0, f64::max);
    pass &= worst_energy < 1e-7;
    parts.push(format!("energy drift {worst_energy:.1e}"));

    // mirror closure of an asymmetric orbit
    let mirror = primary_a3(&st).ok().and_then(|r| {
        let o = r.broken.iter().flat_map(|b| b.orbits_at(1.0, &st.orbit)).next()?;
        let m = mirror_orbit(&o, &st.orbit).ok()?;
        let mm = mirror_orbit(&m, &st.orbit).ok()?;
        Some((o.symmetric, m.s0.dist(&o.s0), mm.s0.dist(&o.s0), m.residual))
    });
    let mirror_ok = mirror.is_some_and(|(sym, d1, d2, r)| !sym && d1 > 1e-3 && d2 < 1e-8 && r < 1e-8);
    pass &= mirror_ok;
    parts.push(format!("mirror closure {mirror_ok}"));

    // sweep determinism across thread counts
    let spec = SweepSpec {
        params: ModelParams::duffing(0.0, 1.0, 0.01),
        omega: Axis::new(0.6, 1.2, 6),
        amplitude: Axis::new(0.5, 3.0, 4),
        initial: OscState::ORIGIN,
        timing: Timing { transient_periods: 300, ..Timing::default() },
    };
    let run = |threads: usize| rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| scan(&spec).unwrap());
    let (r1, r4) = (run(1), run(4));
    let bits = |r: &nlres_core::sweep::Raster| {
        r.cells.iter().map(|c| (c.class, c.strobe.x.to_bits(), c.strobe.v.to_bits(), c.x_max.to_bits())).collect::<Vec<_>>()
    };
    let deterministic = bits(&r1) == bits(&r4);
    pass &= deterministic;
    parts.push(format!("sweep bitwise deterministic {deterministic}"));

    // variational matrix against central differences
    let tol = Tolerance { rel: 1e-12, abs: 1e-13 };
    let mut worst_fd: f64 = 0.0;
    for (p, s, section) in [
        (ModelParams::duffing(3.0, 0.82, 0.01), OscState::new(1.0, 0.5), Section::Full(1)),
        (ModelParams::duffing(0.3, 1.2, 0.05), OscState::new(-0.4, 1.1), Section::Full(2)),
        (ModelParams::duffing_vdp(2.0, 1.5, 0.01), OscState::new(0.7, -0.3), Section::Full(1)),
    ] {
        let jet = map_jet1(&p, s, section, None, &tol).unwrap();
        let h = 1e-6;
        for (j, (dx, dv)) in [(h, 0.0), (0.0, h)].into_iter().enumerate() {
            let plus = stroboscopic_map(&p, OscState::new(s.x + dx, s.v + dv), section.periods(), &tol).unwrap();
            let minus = stroboscopic_map(&p, OscState::new(s.x - dx, s.v - dv), section.periods(), &tol).unwrap();
            let col = [(plus.x - minus.x) / (2.0 * h), (plus.v - minus.v) / (2.0 * h)];
            for (i, fd) in col.iter().enumerate() {
                worst_fd = worst_fd.max((jet.jac[(i, j)] - fd).abs() / jet.jac[(i, j)].abs().max(1.0));
            }
        }
    }
    pass &= worst_fd < 1e-5;
    parts.push(format!("variational vs finite differences {worst_fd:.1e}"));

    Outcome::new(pass, parts.join(", "))
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("NLRES_ACCEPTANCE").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 7] = [
        (1, "main resonance folds and bistability", criterion_1),
        (2, "cusp versus tip", criterion_2),
        (3, "odd/even structure at A=3", criterion_3),
        (4, "isolated resonances", criterion_4),
        (5, "isola tongues contain the period-3 raster", criterion_5),
        (6, "damping continuation of the isola tongue", criterion_6),
        (7, "property suite", criterion_7),
    ];
    let mut passed = 0;
    let mut ran = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        ran += 1;
        passed += outcome.pass as usize;
        println!(
            "criterion {id} [{}] {name} ({:.1}s): {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    println!("acceptance: {passed}/{ran} criteria passed");
}
