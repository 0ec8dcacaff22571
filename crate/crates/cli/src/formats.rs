//! Versioned comma-separated files.
//!
//! Every file starts with `# nlres <kind> v<version>`, followed by optional
//! `# key = value` metadata lines, a column header row and one record per line.

use std::fmt::Write as _;
use std::path::Path;

use nlres_core::codim2::TongueCurve;
use nlres_core::continuation::{BifurcationKind, Branch};
use nlres_core::orbit::{PeriodicOrbit, Stability};
use nlres_core::sweep::{CellResult, Classification, Raster};

use crate::error::{CliError, CliResult};

pub const VERSION: u32 = 1;

pub const ORBIT_COLUMNS: [&str; 15] = [
    "omega", "A", "gamma", "n", "x0", "v0", "xmax", "mult_re1", "mult_im1", "mult_re2", "mult_im2", "stable", "symmetric", "winding", "flags",
];

pub const RASTER_COLUMNS: [&str; 7] = ["omega", "A", "class", "n", "strobe_x", "strobe_v", "xmax"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Branch,
    Tongue,
    Raster,
}

impl FileKind {
    pub fn name(self) -> &'static str {
        match self {
            FileKind::Branch => "branch",
            FileKind::Tongue => "tongue",
            FileKind::Raster => "raster",
        }
    }

    fn header(self) -> String {
        format!("# nlres {} v{VERSION}", self.name())
    }
}

/// One orbit record of a branch or tongue file.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitRow {
    pub omega: f64,
    pub a: f64,
    pub gamma: f64,
    pub n: u32,
    pub x0: f64,
    pub v0: f64,
    pub xmax: f64,
    pub mult: [(f64, f64); 2],
    pub stable: bool,
    pub symmetric: bool,
    pub winding: u32,
    /// `|`-separated markers such as `SN`, `PF`, `PD`, `cusp`, `tip`.
    pub flags: String,
}

impl OrbitRow {
    pub fn from_orbit(o: &PeriodicOrbit, flags: &str) -> Self {
        OrbitRow {
            omega: o.params.omega,
            a: o.params.a,
            gamma: o.params.gamma,
            n: o.n,
            x0: o.s0.x,
            v0: o.s0.v,
            xmax: o.x_max,
            mult: [(o.multipliers[0].re, o.multipliers[0].im), (o.multipliers[1].re, o.multipliers[1].im)],
            stable: o.stability == Stability::Stable,
            symmetric: o.symmetric,
            winding: o.winding,
            flags: flags.to_string(),
        }
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.split('|').any(|f| f == flag)
    }
}

/// Contents of a branch or tongue file.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFile {
    pub kind: FileKind,
    pub meta: Vec<(String, String)>,
    pub rows: Vec<OrbitRow>,
}

impl CurveFile {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn bifurcation_flag(kind: BifurcationKind) -> &'static str {
    match kind {
        BifurcationKind::SaddleNode => "SN",
        BifurcationKind::Pitchfork => "PF",
        BifurcationKind::PeriodDoubling => "PD",
    }
}

fn end_name(e: nlres_core::continuation::EndReason) -> String {
    format!("{e:?}")
}

/// Branch points in arclength order, with located bifurcations merged in.
pub fn branch_file(b: &Branch) -> CurveFile {
    let meta = vec![
        ("active".into(), b.active.name().to_string()),
        ("n".into(), b.n.to_string()),
        ("symmetric".into(), b.symmetric.to_string()),
        ("closed".into(), b.closed.to_string()),
        ("ends".into(), format!("{} {}", end_name(b.ends.0), end_name(b.ends.1))),
    ];
    let mut bifs: Vec<_> = b.bifurcations.iter().collect();
    bifs.sort_by(|x, y| x.arclength.total_cmp(&y.arclength));
    let mut rows = Vec::with_capacity(b.points.len() + bifs.len());
    let mut next = bifs.into_iter().peekable();
    for p in &b.points {
        while let Some(f) = next.next_if(|f| f.arclength <= p.arclength) {
            rows.push(OrbitRow::from_orbit(&f.orbit_at, bifurcation_flag(f.kind)));
        }
        rows.push(OrbitRow::from_orbit(&p.orbit, ""));
    }
    rows.extend(next.map(|f| OrbitRow::from_orbit(&f.orbit_at, bifurcation_flag(f.kind))));
    CurveFile { kind: FileKind::Branch, meta, rows }
}

pub fn tongue_file(t: &TongueCurve) -> CurveFile {
    let mut meta = vec![
        ("kind".into(), t.kind.name().to_string()),
        ("plane".into(), format!("omega {}", t.plane.second().name())),
        ("label".into(), t.label.to_string()),
        ("closed".into(), t.closed.to_string()),
        ("ends".into(), format!("{} {}", end_name(t.ends.0), end_name(t.ends.1))),
    ];
    if let Some((w, a)) = t.tip {
        meta.push(("tip".into(), format!("{w} {a}")));
    }
    let tips = t.tips();
    let rows = t
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut flags = Vec::new();
            if t.cusps.contains(&i) {
                flags.push("cusp");
            }
            if tips.contains(&i) {
                flags.push("tip");
            }
            OrbitRow::from_orbit(&p.orbit, &flags.join("|"))
        })
        .collect();
    CurveFile { kind: FileKind::Tongue, meta, rows }
}

fn write_preamble(out: &mut String, kind: FileKind, meta: &[(String, String)], columns: &[&str]) {
    out.push_str(&kind.header());
    out.push('\n');
    for (k, v) in meta {
        let _ = writeln!(out, "# {k} = {v}");
    }
    out.push_str(&columns.join(","));
    out.push('\n');
}

pub fn curve_to_string(f: &CurveFile) -> String {
    let mut out = String::new();
    write_preamble(&mut out, f.kind, &f.meta, &ORBIT_COLUMNS);
    for r in &f.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.omega, r.a, r.gamma, r.n, r.x0, r.v0, r.xmax, r.mult[0].0, r.mult[0].1, r.mult[1].0, r.mult[1].1, r.stable as u8, r.symmetric as u8, r.winding, r.flags
        );
    }
    out
}

struct Reader<'a> {
    path: &'a Path,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        Reader { path, lines: text.lines().enumerate().peekable() }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> CliError {
        CliError::Parse { path: self.path.to_path_buf(), line: line + 1, message: message.into() }
    }

    /// Checks the version line and collects metadata up to the column row.
    fn preamble(&mut self, kind: FileKind, columns: &[&str]) -> CliResult<Vec<(String, String)>> {
        match self.lines.next() {
            Some((_, l)) if l.trim_end() == kind.header() => {}
            Some((i, l)) => return Err(self.err(i, format!("expected {:?}, found {:?}", kind.header(), l))),
            None => return Err(self.err(0, "empty file")),
        }
        let mut meta = Vec::new();
        while let Some(&(i, l)) = self.lines.peek() {
            let Some(body) = l.strip_prefix('#') else { break };
            let (k, v) = body.split_once('=').ok_or_else(|| self.err(i, "metadata line without '='"))?;
            meta.push((k.trim().to_string(), v.trim().to_string()));
            self.lines.next();
        }
        match self.lines.next() {
            Some((_, l)) if l.trim_end() == columns.join(",") => Ok(meta),
            Some((i, l)) => Err(self.err(i, format!("unexpected column header {l:?}"))),
            None => Err(self.err(0, "missing column header")),
        }
    }

    fn records(&mut self, width: usize) -> impl Iterator<Item = CliResult<(usize, Vec<&'a str>)>> + '_ {
        let path = self.path;
        self.lines.by_ref().filter(|(_, l)| !l.trim().is_empty()).map(move |(i, l)| {
            let fields: Vec<&str> = l.split(',').collect();
            if fields.len() == width {
                Ok((i, fields))
            } else {
                Err(CliError::Parse { path: path.to_path_buf(), line: i + 1, message: format!("expected {width} fields, found {}", fields.len()) })
            }
        })
    }
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, s: &str) -> CliResult<T> {
    s.trim().parse().map_err(|_| CliError::Parse { path: path.to_path_buf(), line: line + 1, message: format!("bad {name}: {s:?}") })
}

fn flag(path: &Path, line: usize, name: &str, s: &str) -> CliResult<bool> {
    match s.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        _ => Err(CliError::Parse { path: path.to_path_buf(), line: line + 1, message: format!("bad {name}: {s:?}") }),
    }
}

pub fn parse_curve(path: &Path, text: &str, kind: FileKind) -> CliResult<CurveFile> {
    let mut r = Reader::new(path, text);
    let meta = r.preamble(kind, &ORBIT_COLUMNS)?;
    let mut rows = Vec::new();
    for rec in r.records(ORBIT_COLUMNS.len()) {
        let (i, f) = rec?;
        let num = |k: usize| field::<f64>(path, i, ORBIT_COLUMNS[k], f[k]);
        rows.push(OrbitRow {
            omega: num(0)?,
            a: num(1)?,
            gamma: num(2)?,
            n: field(path, i, "n", f[3])?,
            x0: num(4)?,
            v0: num(5)?,
            xmax: num(6)?,
            mult: [(num(7)?, num(8)?), (num(9)?, num(10)?)],
            stable: flag(path, i, "stable", f[11])?,
            symmetric: flag(path, i, "symmetric", f[12])?,
            winding: field(path, i, "winding", f[13])?,
            flags: f[14].trim().to_string(),
        });
    }
    Ok(CurveFile { kind, meta, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterClass {
    Periodic,
    QuasiPeriodic,
    Unresolved,
}

impl RasterClass {
    fn name(self) -> &'static str {
        match self {
            RasterClass::Periodic => "periodic",
            RasterClass::QuasiPeriodic => "quasi-periodic",
            RasterClass::Unresolved => "unresolved",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [RasterClass::Periodic, RasterClass::QuasiPeriodic, RasterClass::Unresolved].into_iter().find(|c| c.name() == s)
    }
}

/// One raster cell; `n` is 0 unless the cell is periodic.
#[derive(Debug, Clone, Copy)]
pub struct RasterRow {
    pub omega: f64,
    pub a: f64,
    pub class: RasterClass,
    pub n: u32,
    pub strobe_x: f64,
    pub strobe_v: f64,
    pub xmax: f64,
}

/// Floats compare bitwise so that cells with a NaN amplitude round-trip.
impl PartialEq for RasterRow {
    fn eq(&self, o: &Self) -> bool {
        let same = |a: f64, b: f64| a.to_bits() == b.to_bits();
        same(self.omega, o.omega)
            && same(self.a, o.a)
            && self.class == o.class
            && self.n == o.n
            && same(self.strobe_x, o.strobe_x)
            && same(self.strobe_v, o.strobe_v)
            && same(self.xmax, o.xmax)
    }
}

impl RasterRow {
    pub fn from_cell(c: &CellResult) -> Self {
        let (class, n) = match c.class {
            Classification::PeriodN(n) => (RasterClass::Periodic, n),
            Classification::QuasiPeriodic => (RasterClass::QuasiPeriodic, 0),
            Classification::Unresolved => (RasterClass::Unresolved, 0),
        };
        RasterRow { omega: c.omega, a: c.a, class, n, strobe_x: c.strobe.x, strobe_v: c.strobe.v, xmax: c.x_max }
    }

    pub fn classification(&self) -> Classification {
        match self.class {
            RasterClass::Periodic => Classification::PeriodN(self.n),
            RasterClass::QuasiPeriodic => Classification::QuasiPeriodic,
            RasterClass::Unresolved => Classification::Unresolved,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterFile {
    pub meta: Vec<(String, String)>,
    /// Cells with `A` outer and `omega` inner.
    pub rows: Vec<RasterRow>,
}

pub fn raster_file(r: &Raster, meta: Vec<(String, String)>) -> RasterFile {
    let mut meta = meta;
    meta.push(("omega_axis".into(), format!("{} {} {}", r.omega.lo, r.omega.hi, r.omega.count)));
    meta.push(("amplitude_axis".into(), format!("{} {} {}", r.amplitude.lo, r.amplitude.hi, r.amplitude.count)));
    RasterFile { meta, rows: r.cells.iter().map(RasterRow::from_cell).collect() }
}

pub fn raster_to_string(f: &RasterFile) -> String {
    let mut out = String::new();
    write_preamble(&mut out, FileKind::Raster, &f.meta, &RASTER_COLUMNS);
    for r in &f.rows {
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.omega, r.a, r.class.name(), r.n, r.strobe_x, r.strobe_v, r.xmax);
    }
    out
}

pub fn parse_raster(path: &Path, text: &str) -> CliResult<RasterFile> {
    let mut r = Reader::new(path, text);
    let meta = r.preamble(FileKind::Raster, &RASTER_COLUMNS)?;
    let mut rows = Vec::new();
    for rec in r.records(RASTER_COLUMNS.len()) {
        let (i, f) = rec?;
        let num = |k: usize| field::<f64>(path, i, RASTER_COLUMNS[k], f[k]);
        let class = RasterClass::parse(f[2].trim())
            .ok_or_else(|| CliError::Parse { path: path.to_path_buf(), line: i + 1, message: format!("bad class: {:?}", f[2]) })?;
        rows.push(RasterRow { omega: num(0)?, a: num(1)?, class, n: field(path, i, "n", f[3])?, strobe_x: num(4)?, strobe_v: num(5)?, xmax: num(6)? });
    }
    Ok(RasterFile { meta, rows })
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_curve(path: &Path, kind: FileKind) -> CliResult<CurveFile> {
    parse_curve(path, &read_text(path)?, kind)
}

pub fn read_raster(path: &Path) -> CliResult<RasterFile> {
    parse_raster(path, &read_text(path)?)
}
