use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nlres_core::codim2::{continue_fold_2p, continue_pitchfork_2p, continue_tongue_in_gamma, sync_tongue, Plane, PlaneRanges, TongueCurve};
use nlres_core::continuation::{continue_branch, switch_branch, BifurcationKind, Branch, ContinuationSettings};
use nlres_core::ode::Flow;
use nlres_core::orbit::{orbit_trajectory, refine_orbit, PeriodicOrbit};
use nlres_core::sweep::{harvest_seeds, scan, Axis, SweepSpec};
use nlres_core::{natural_period, ModelParams, OscState, Param};

use crate::config::{continuation_settings, sweep_timing, Config, Section};
use crate::error::{CliError, CliResult};
use crate::formats::{self, branch_file, raster_file, tongue_file, write_text, FileKind};
use crate::plot;

/// Options shared by all subcommands.
#[derive(Debug, Clone)]
pub struct Common {
    pub out: PathBuf,
    pub tol_scale: f64,
}

/// Files written and per-item failures of one run.
#[derive(Debug, Default)]
pub struct Summary {
    pub files: Vec<PathBuf>,
    pub failures: Vec<(String, String)>,
}

impl Summary {
    fn write(&mut self, dir: &Path, name: &str, text: &str) -> CliResult<()> {
        let path = dir.join(name);
        write_text(&path, text)?;
        self.files.push(path);
        Ok(())
    }

    fn fail(&mut self, item: impl Into<String>, err: impl std::fmt::Display) {
        self.failures.push((item.into(), err.to_string()));
    }

    /// Writes `errors.csv` when any item failed.
    pub fn finish(mut self, dir: &Path) -> CliResult<Self> {
        if !self.failures.is_empty() {
            let mut text = format!("# nlres errors v{}\nitem,message\n", formats::VERSION);
            for (item, msg) in &self.failures {
                let _ = writeln!(text, "{},{}", item.replace(',', ";"), msg.replace([',', '\n'], ";"));
            }
            let failures = std::mem::take(&mut self.failures);
            self.write(dir, "errors.csv", &text)?;
            self.failures = failures;
        }
        Ok(self)
    }
}

fn prepare(common: &Common) -> CliResult<()> {
    if !(common.tol_scale > 0.0 && common.tol_scale.is_finite()) {
        return Err(CliError::config("--tol-scale must be positive"));
    }
    std::fs::create_dir_all(&common.out).map_err(|e| CliError::io(&common.out, e))
}

/// Orbit from `seed`, optionally after `transient` forcing periods of integration.
fn seed_orbit(s: &Section, p: &ModelParams, st: &ContinuationSettings) -> CliResult<PeriodicOrbit> {
    let n: u32 = s.get("n", 1)?;
    if n == 0 {
        return Err(CliError::config("n must be at least 1"));
    }
    let mut guess = s.state("seed", OscState::ORIGIN)?;
    let transient: u32 = s.get("transient", 0)?;
    if transient > 0 {
        let mut flow = Flow::new(*p, guess, 0.0, &st.orbit.integration)?;
        guess = flow.advance_to(transient as f64 * p.forcing_period())?;
    }
    Ok(refine_orbit(p, guess, n, &st.orbit)?)
}

pub fn cmd_sweep(cfg: &Config, common: &Common) -> CliResult<Summary> {
    prepare(common)?;
    let s = cfg.section("sweep");
    let params = s.model_params(0.0, 1.0)?;
    let (wl, wh, wc) = s.axis("omega", (0.15, 1.2, 50))?;
    let (al, ah, ac) = s.axis("amplitude", (0.0, 6.0, 30))?;
    let spec = SweepSpec {
        params,
        omega: Axis::new(wl, wh, wc),
        amplitude: Axis::new(al, ah, ac),
        initial: s.state("initial", OscState::ORIGIN)?,
        timing: sweep_timing(cfg, common.tol_scale)?,
    };
    spec.validate()?;
    let raster = scan(&spec)?;
    let mut summary = Summary::default();
    for c in raster.cells.iter().filter(|c| c.diagnostic.is_some()) {
        summary.fail(format!("cell omega={} A={}", c.omega, c.a), c.diagnostic.as_deref().unwrap_or(""));
    }
    let meta = vec![
        ("model".to_string(), s.raw("model").unwrap_or("duffing").to_string()),
        ("gamma".to_string(), params.gamma.to_string()),
        ("initial".to_string(), format!("{} {}", spec.initial.x, spec.initial.v)),
        ("transient_periods".to_string(), spec.timing.transient_periods.to_string()),
        ("sample_periods".to_string(), spec.timing.sample_periods.to_string()),
    ];
    let file = raster_file(&raster, meta);
    summary.write(&common.out, "raster.csv", &formats::raster_to_string(&file))?;
    if ac == 1 {
        summary.write(&common.out, "xmax.svg", &plot::xmax_scan_plot(&file, &format!("max x at A = {al}")))?;
    } else {
        summary.write(&common.out, "raster.svg", &plot::raster_plot(&file, "attracting periodic orbits"))?;
    }
    if let Some(n) = s.raw("harvest") {
        let n: u32 = n.parse().map_err(|_| CliError::config("[sweep] harvest: expected a period"))?;
        let seeds = harvest_seeds(&raster, |c| c.period() == Some(n));
        let mut text = format!("# nlres seeds v{}\nomega,A,n,x0,v0\n", formats::VERSION);
        for sd in &seeds {
            let _ = writeln!(text, "{},{},{},{},{}", sd.omega, sd.a, sd.n, sd.state.x, sd.state.v);
        }
        summary.write(&common.out, "seeds.csv", &text)?;
    }
    summary.finish(&common.out)
}

pub fn cmd_curve(cfg: &Config, common: &Common) -> CliResult<Summary> {
    prepare(common)?;
    let s = cfg.section("curve");
    let st = continuation_settings(cfg, common.tol_scale)?;
    let p = s.params(3.0, 0.83)?;
    let range = s.range("range", (0.15, 1.2))?;
    let seed = seed_orbit(&s, &p, &st)?;
    let primary = continue_branch(&seed, Param::Omega, range, &st)?;
    let mut branches = vec![primary];
    let mut summary = Summary::default();
    if s.get("switch", false)? {
        let pfs: Vec<_> = branches[0].bifurcations.iter().filter(|f| f.kind == BifurcationKind::Pitchfork).cloned().collect();
        for pf in pfs {
            let item = format!("pitchfork at omega={}", pf.params_at.omega);
            match switch_branch(&pf, &st).and_then(|(a, _)| continue_branch(&a, Param::Omega, range, &st)) {
                Ok(b) => {
                    // a pitchfork pair shares one symmetry-broken branch
                    if !branches.iter().skip(1).any(|known| same_branch(known, &b)) {
                        branches.push(b);
                    }
                }
                Err(e) => summary.fail(item, e),
            }
        }
    }
    let files: Vec<_> = branches.iter().map(branch_file).collect();
    for (k, f) in files.iter().enumerate() {
        summary.write(&common.out, &format!("branch_{k:03}.csv"), &formats::curve_to_string(f))?;
    }
    summary.write(&common.out, "curve.svg", &plot::branch_plot(&files, &format!("A = {}, gamma = {}", p.a, p.gamma)))?;
    summary.finish(&common.out)
}

fn same_branch(a: &Branch, b: &Branch) -> bool {
    b.points.iter().step_by(7).all(|pt| a.crossings(pt.param(Param::Omega)).iter().any(|(_, s)| s.dist(&pt.orbit.s0) < 1e-3))
}

fn on_tongue(t: &TongueCurve, omega: f64, second: f64) -> bool {
    t.row_crossings(second).iter().any(|(w, _)| (w - omega).abs() < 1e-4)
}

pub fn cmd_tongue(cfg: &Config, common: &Common) -> CliResult<Summary> {
    prepare(common)?;
    let s = cfg.section("tongue");
    let st = continuation_settings(cfg, common.tol_scale)?;
    let kind = s.raw("kind").unwrap_or("fold");
    let (wd, ad) = if kind == "sync" { ((1.0, 6.0), (1e-4, 3.0)) } else { ((0.1, 3.0), (1e-4, 8.0)) };
    let omega_range = s.range("omega_range", wd)?;
    let a_range = s.range("a_range", ad)?;
    let ranges = PlaneRanges { omega: omega_range, second: a_range };
    let mut summary = Summary::default();
    let mut tongues: Vec<TongueCurve> = Vec::new();
    match kind {
        "sync" => {
            let p = s.params(2.0, 1.0)?;
            tongues.push(sync_tongue(&p, omega_range, a_range, &st)?);
        }
        "fold" | "pitchfork" => {
            let p = s.params(0.05, 3.0)?;
            let seed = seed_orbit(&s, &p, &st)?;
            let branch = continue_branch(&seed, Param::Omega, s.range("range", omega_range)?, &st)?;
            let wanted = if kind == "fold" { BifurcationKind::SaddleNode } else { BifurcationKind::Pitchfork };
            for f in branch.bifurcations.iter().filter(|f| f.kind == wanted) {
                if tongues.iter().any(|t| on_tongue(t, f.params_at.omega, f.params_at.a)) {
                    continue;
                }
                let traced = if kind == "fold" {
                    continue_fold_2p(f, Plane::OmegaAmplitude, &ranges, &st)
                } else {
                    continue_pitchfork_2p(f, Plane::OmegaAmplitude, &ranges, &st)
                };
                match traced {
                    Ok(t) => tongues.push(t),
                    Err(e) => summary.fail(format!("{kind} at omega={}", f.params_at.omega), e),
                }
            }
            if tongues.is_empty() && summary.failures.is_empty() {
                summary.fail("branch", format!("no {kind} point on the seed branch"));
            }
        }
        other => return Err(CliError::config(format!("[tongue] kind = {other}: expected fold, pitchfork or sync"))),
    }
    let files: Vec<_> = tongues.iter().map(tongue_file).collect();
    for (k, f) in files.iter().enumerate() {
        summary.write(&common.out, &format!("tongue_{k:03}.csv"), &formats::curve_to_string(f))?;
    }
    summary.write(&common.out, "tongues.svg", &plot::tongue_plot(&files, None, &format!("{kind} tongues"), false))?;

    if let Some(targets) = s.list("gamma_targets")? {
        for (k, t) in tongues.iter().enumerate() {
            match continue_tongue_in_gamma(t, &targets, omega_range, a_range, &st) {
                Ok(stages) => {
                    for stage in &stages {
                        let f = tongue_file(&stage.tongue);
                        summary.write(&common.out, &format!("tongue_{k:03}_gamma_{}.csv", stage.gamma), &formats::curve_to_string(&f))?;
                    }
                    let files: Vec<_> = stages.iter().map(|g| tongue_file(&g.tongue)).collect();
                    summary.write(&common.out, &format!("tongue_{k:03}_gamma.svg"), &plot::tongue_plot(&files, None, "damping stages", false))?;
                }
                Err(e) => summary.fail(format!("tongue {k} damping continuation"), e),
            }
        }
    }
    summary.finish(&common.out)
}

pub fn orbit_report(o: &PeriodicOrbit) -> String {
    let mut r = String::new();
    let p = &o.params;
    let _ = writeln!(r, "model: {:?}", p.model);
    let _ = writeln!(r, "omega: {}", p.omega);
    let _ = writeln!(r, "A: {}", p.a);
    let _ = writeln!(r, "gamma: {}", p.gamma);
    let _ = writeln!(r, "n: {}", o.n);
    let _ = writeln!(r, "period: {}", o.period());
    let _ = writeln!(r, "x0: {}", o.s0.x);
    let _ = writeln!(r, "v0: {}", o.s0.v);
    for (i, m) in o.multipliers.iter().enumerate() {
        let _ = writeln!(r, "multiplier_{}: {} {}", i + 1, m.re, m.im);
    }
    let _ = writeln!(r, "stability: {:?}", o.stability);
    let _ = writeln!(r, "symmetric: {}", o.symmetric);
    let _ = writeln!(r, "winding: {}", o.winding);
    let _ = writeln!(r, "label: {}", o.label());
    let _ = writeln!(r, "x_max: {}", o.x_max);
    let _ = writeln!(r, "residual: {:e}", o.residual);
    r
}

pub fn cmd_orbit(cfg: &Config, common: &Common) -> CliResult<Summary> {
    prepare(common)?;
    let s = cfg.section("orbit");
    let st = continuation_settings(cfg, common.tol_scale)?;
    let p = s.params(3.0, 0.82)?;
    let o = seed_orbit(&s, &p, &st)?;
    let mut summary = Summary::default();
    summary.write(&common.out, "orbit.txt", &orbit_report(&o))?;
    let traj = orbit_trajectory(&o, &st.orbit)?;
    let mut text = format!("# nlres trajectory v{}\nt,x,v\n", formats::VERSION);
    for (t, x) in &traj.samples {
        let _ = writeln!(text, "{t},{},{}", x.x, x.v);
    }
    summary.write(&common.out, "trajectory.csv", &text)?;
    summary.finish(&common.out)
}

pub fn cmd_natfreq(cfg: &Config, common: &Common) -> CliResult<Summary> {
    prepare(common)?;
    let s = cfg.section("natfreq");
    let xs = match (s.list("x_max")?, s.raw("x_range")) {
        (Some(v), None) => v,
        (None, Some(_)) => {
            let (lo, hi, n) = s.axis("x_range", (0.1, 5.0, 50))?;
            let ax = Axis::new(lo, hi, n);
            (0..n).map(|i| ax.value(i)).collect()
        }
        (None, None) => vec![0.5, 1.0, 2.0, 5.0],
        (Some(_), Some(_)) => return Err(CliError::config("[natfreq] give either x_max or x_range")),
    };
    let mut summary = Summary::default();
    let mut text = format!("# nlres natfreq v{}\nx_max,T,omega\n", formats::VERSION);
    for x in xs {
        match natural_period(x) {
            Ok(t) => {
                let _ = writeln!(text, "{x},{t},{}", 2.0 * std::f64::consts::PI / t);
            }
            Err(e) => summary.fail(format!("x_max={x}"), e),
        }
    }
    summary.write(&common.out, "natfreq.csv", &text)?;
    summary.finish(&common.out)
}

/// Reads back a branch or tongue file written by `cmd_curve` / `cmd_tongue`.
pub fn load_curve(path: &Path) -> CliResult<formats::CurveFile> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    let kind = if name.starts_with("tongue") { FileKind::Tongue } else { FileKind::Branch };
    formats::read_curve(path, kind)
}
