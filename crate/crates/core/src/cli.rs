//! Command-line front end and plain-text serialization.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, ValueEnum};

use crate::catalog::{GridSpec, Surface, CATALOG};
use crate::currents::{compute_currents, stress_tensor, willmore_operator};
use crate::error::{Error, Result};
use crate::geometry::{compute_geometry, GeometryCache};
use crate::grid::{Field, Grid};
use crate::patch::ImmersionPatch;
use crate::potentials::{build_potential_set, gradient_identity_residuals, system_residuals, Overrides, PotentialSet, ResidualReport};
use crate::problems::{
    chen_problem, closed_surface_integrals, constrained_problem, helfrich_problem, willmore_flow, willmore_problem, FlowTrace,
    ProblemOutput,
};
use crate::residue::{radius_independence_scan, ResidueReport};
use crate::sampled::load_sampled_patch;

pub const GRID_MIN: usize = 17;
pub const GRID_MAX: usize = 513;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Energy,
    Geometry,
    Laws,
    Potentials,
    Willmore,
    Constrained,
    Helfrich,
    Chen,
    Flow,
    Residue,
    Surfaces,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Energy => "energy",
            Command::Geometry => "geometry",
            Command::Laws => "laws",
            Command::Potentials => "potentials",
            Command::Willmore => "willmore",
            Command::Constrained => "constrained",
            Command::Helfrich => "helfrich",
            Command::Chen => "chen",
            Command::Flow => "flow",
            Command::Residue => "residue",
            Command::Surfaces => "surfaces",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Summary,
}

/// Parsed command line.
#[derive(Clone, Debug, Parser)]
#[command(name = "wcur", about = "Willmore currents, conservative potentials and residues on surface patches")]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    /// Catalog surface `NAME[:p1,p2]`, or `sampled=PATH` for a sampled file.
    #[arg(long)]
    pub surface: Option<String>,
    /// Nodes per axis.
    #[arg(long, default_value_t = 65)]
    pub grid: usize,
    /// Chart rectangle `u0,u1,v0,v1` (catalog surfaces).
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<String>,
    /// Field dump holding q^{11}, q^{12}, q^{21}, q^{22}.
    #[arg(long)]
    pub q: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tau: f64,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Contour radii `a,b,c`.
    #[arg(long)]
    pub radii: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Summary)]
    pub format: Format,
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::InvalidParameter(format!("bad {what} entry `{p}`"))))
        .collect()
}

/// Number formatting for summaries: plain for moderate magnitudes,
/// scientific otherwise.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !(1e-3..1e6).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Sorted `key: value` lines.
#[derive(Clone, Debug, Default)]
pub struct Summary(BTreeMap<String, String>);

impl Summary {
    pub fn num(&mut self, k: impl Into<String>, v: f64) {
        self.0.insert(k.into(), fmt_num(v));
    }

    pub fn text(&mut self, k: impl Into<String>, v: impl Into<String>) {
        self.0.insert(k.into(), v.into());
    }

    pub fn get(&self, k: &str) -> Option<&str> {
        self.0.get(k).map(String::as_str)
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

pub fn write_summary(summary: &Summary, path: &Path) -> Result<()> {
    fs::write(path, summary.render()).map_err(io_err(path))
}

/// CSV `i,j,u,v,c1..ck` in storage order; invalid nodes carry `nan`.
/// Values use the shortest representation that round-trips (≤ 17
/// significant digits).
pub fn write_field_dump(field: &Field, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    let g = field.grid();
    let mut run = || -> std::io::Result<()> {
        write!(w, "i,j,u,v")?;
        for c in 1..=field.ncomp() {
            write!(w, ",c{c}")?;
        }
        writeln!(w)?;
        for k in 0..g.len() {
            let (i, j) = g.ij(k);
            let (u, v) = g.coords(k);
            write!(w, "{i},{j},{u},{v}")?;
            for x in field.at(k) {
                if field.is_valid(k) {
                    write!(w, ",{x}")?;
                } else {
                    write!(w, ",nan")?;
                }
            }
            writeln!(w)?;
        }
        w.flush()
    };
    run().map_err(io_err(path))
}

/// Reads a field dump written for `grid`; rows may come in any order but
/// every node must appear exactly once.
pub fn read_field_dump(reader: impl BufRead, grid: Grid) -> Result<Field> {
    let perr = |line: usize, msg: String| Error::Parse { line, msg };
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| perr(1, e.to_string()))?,
        None => return Err(perr(1, "empty field dump".into())),
    };
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 5 || cols[..4] != ["i", "j", "u", "v"] {
        return Err(perr(1, format!("bad header `{header}`")));
    }
    let nc = cols.len() - 4;
    let mut data = vec![0.0; grid.len() * nc];
    let mut valid = vec![true; grid.len()];
    let mut seen = vec![false; grid.len()];
    let mut rows = 0;
    for (n, line) in lines {
        let line = line.map_err(|e| perr(n + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != cols.len() {
            return Err(perr(n + 1, format!("expected {} columns, found {}", cols.len(), parts.len())));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|_| perr(n + 1, format!("bad index `{s}`")));
        let (i, j) = (idx(parts[0])?, idx(parts[1])?);
        if i >= grid.nx || j >= grid.ny {
            return Err(perr(n + 1, format!("node ({i}, {j}) outside {}×{} grid", grid.nx, grid.ny)));
        }
        let k = grid.node(i, j);
        if std::mem::replace(&mut seen[k], true) {
            return Err(perr(n + 1, format!("duplicate node ({i}, {j})")));
        }
        for (c, p) in parts[4..].iter().enumerate() {
            let x = p.parse::<f64>().map_err(|_| perr(n + 1, format!("bad value `{p}`")))?;
            if x.is_nan() {
                valid[k] = false;
            }
            data[k * nc + c] = if x.is_nan() { 0.0 } else { x };
        }
        rows += 1;
    }
    if rows != grid.len() {
        return Err(Error::RowCountMismatch { expected: grid.len(), found: rows });
    }
    Field::from_data(grid, nc, data, valid)
}

fn build_patch(cfg: &RunConfig) -> Result<ImmersionPatch> {
    let spec = cfg.surface.as_deref().ok_or_else(|| Error::InvalidParameter("missing --surface".into()))?;
    if let Some(path) = spec.strip_prefix("sampled=") {
        let path = Path::new(path);
        let f = File::open(path).map_err(io_err(path))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sampled");
        return load_sampled_patch(BufReader::new(f), name);
    }
    if !(GRID_MIN..=GRID_MAX).contains(&cfg.grid) {
        return Err(Error::InvalidParameter(format!("--grid {} outside {GRID_MIN}..={GRID_MAX}", cfg.grid)));
    }
    let surface = Surface::parse(spec)?;
    let domain = match &cfg.domain {
        Some(d) => {
            let v = parse_list(d, "domain")?;
            let arr: [f64; 4] = v.try_into().map_err(|_| Error::InvalidParameter("--domain needs u0,u1,v0,v1".into()))?;
            Some(arr)
        }
        None => None,
    };
    surface.patch(&GridSpec { nx: cfg.grid, ny: cfg.grid, domain })
}

struct Outputs {
    summary: Summary,
    fields: Vec<(String, Field)>,
    tables: Vec<(String, String)>,
    warnings: Vec<String>,
}

impl Outputs {
    fn new() -> Self {
        Outputs { summary: Summary::default(), fields: Vec::new(), tables: Vec::new(), warnings: Vec::new() }
    }

    fn field(&mut self, name: &str, f: &Field) {
        self.fields.push((name.to_string(), f.clone()));
    }
}

fn add_header(o: &mut Outputs, cfg: &RunConfig, cache: &GeometryCache) {
    let g = cache.grid();
    o.summary.text("surface", cache.patch().name());
    o.summary.text("grid", format!("{}x{}", g.nx, g.ny));
    o.summary.text("command", cfg.command.name());
}

fn add_report(o: &mut Outputs, report: &ResidualReport) {
    for e in &report.entries {
        o.summary.num(format!("{}_sup", e.name), e.sup);
        o.summary.num(format!("{}_l2", e.name), e.l2);
        o.field(&e.name, &e.field);
    }
}

fn add_potentials(o: &mut Outputs, p: &PotentialSet) {
    for (k, v) in &p.diagnostics {
        o.summary.num(k.clone(), *v);
    }
    o.summary.text("boundary_condition", p.boundary_condition);
    for (name, f) in [("l", &p.l), ("r", &p.r), ("s", &p.s), ("y", &p.y)] {
        o.field(name, f);
    }
    if let Some(v) = &p.v {
        o.field("v", v);
    }
    if let Some(x) = &p.x {
        o.field("x", x);
    }
    o.warnings.extend(p.warnings.iter().cloned());
}

fn add_problem(o: &mut Outputs, out: &ProblemOutput) {
    for (k, v) in &out.checks {
        o.summary.num(k.clone(), *v);
    }
    add_report(o, &out.report);
    o.field("operator", &out.operator);
    o.field("forcing", &out.forcing);
    o.field("residual", &out.residual);
    for (name, f) in &out.fields {
        o.field(name, f);
    }
    add_potentials(o, &out.potentials);
    // potentials' warnings are already part of the problem's
    o.warnings = out.warnings.clone();
}

fn flow_table(t: &FlowTrace) -> String {
    let mut s = String::from("step,energy,sup_W,det_g_min\n");
    for r in &t.rows {
        s.push_str(&format!("{},{},{},{}\n", r.step, r.energy, r.sup_w, r.det_g_min));
    }
    s
}

fn residue_table(r: &ResidueReport) -> String {
    let m = r.beta_res.len();
    let mut s = String::from("radius");
    for c in 1..=m {
        s.push_str(&format!(",flux_{c}"));
    }
    s.push('\n');
    for (rad, f) in &r.flux_by_radius {
        s.push_str(&rad.to_string());
        for x in f {
            s.push_str(&format!(",{x}"));
        }
        s.push('\n');
    }
    s
}

fn read_q(cfg: &RunConfig, grid: Grid) -> Result<Field> {
    let path = cfg.q.as_deref().ok_or_else(|| Error::InvalidParameter("constrained needs --q FILE".into()))?;
    let f = File::open(path).map_err(io_err(path))?;
    read_field_dump(BufReader::new(f), grid)
}

fn compute(cfg: &RunConfig) -> Result<Outputs> {
    let mut o = Outputs::new();
    let patch = build_patch(cfg)?;
    if cfg.command == Command::Flow {
        let t = willmore_flow(&patch, cfg.tau, cfg.steps)?;
        let c = compute_geometry(&t.patch)?;
        add_header(&mut o, cfg, &c);
        let first = t.rows[0].energy;
        let last = t.rows[t.rows.len() - 1].energy;
        let inc = t.rows.windows(2).map(|w| w[1].energy - w[0].energy).fold(f64::NEG_INFINITY, f64::max);
        o.summary.num("energy_initial", first);
        o.summary.num("energy_final", last);
        o.summary.num("max_energy_increment", if t.rows.len() > 1 { inc } else { 0.0 });
        o.summary.text("monotone_decreasing", if t.rows.len() > 1 && inc < 0.0 { "yes" } else { "no" });
        o.summary.text("steps", cfg.steps.to_string());
        o.summary.text("substeps", t.substeps.to_string());
        o.summary.num("tau", cfg.tau);
        o.tables.push(("energy_trace.csv".into(), flow_table(&t)));
        o.field("position", t.patch.position());
        return Ok(o);
    }
    let q = if cfg.command == Command::Constrained { Some(read_q(cfg, *patch.grid())?) } else { None };
    let cache = compute_geometry(&patch)?;
    add_header(&mut o, cfg, &cache);
    match cfg.command {
        Command::Energy => {
            o.summary.num("energy", cache.willmore_energy());
            o.summary.num("area", cache.area());
            o.summary.num("det_g_min", cache.det_min());
            o.field("mean_curvature", cache.mean_curvature());
        }
        Command::Geometry => {
            o.summary.num("energy", cache.willmore_energy());
            o.summary.num("area", cache.area());
            o.summary.num("det_g_min", cache.det_min());
            o.summary.num("mean_curvature_sup", cache.mean_curvature().sup_norm());
            o.summary.text("valid_nodes", cache.mean_curvature().valid_count().to_string());
            o.field("position", cache.position());
            o.field("metric", cache.metric());
            o.field("second_fundamental", cache.second_fundamental());
            o.field("mean_curvature", cache.mean_curvature());
            o.field("gauss_map", cache.gauss_map());
        }
        Command::Laws => {
            let c = compute_currents(&cache)?;
            for (name, n) in [("translation", c.trans), ("rotation", c.rot), ("dilation", c.dil)] {
                o.summary.num(format!("res_{name}_sup"), n.sup);
                o.summary.num(format!("res_{name}_l2"), n.l2);
            }
            o.summary.num("rotation_consistency", c.rot_consistency);
            o.summary.num("willmore_sup", c.w.sup_norm());
            o.field("w", &c.w);
            o.field("res_translation", &c.res_trans);
            o.field("res_rotation", &c.res_rot);
            o.field("res_dilation", &c.res_dil);
        }
        Command::Potentials => {
            let w = willmore_operator(&cache)?;
            let t = stress_tensor(&cache)?;
            let p = build_potential_set(&cache, &w, &t, &Overrides::default())?;
            let mut rep = system_residuals(&cache, &p);
            rep.entries.extend(gradient_identity_residuals(&cache, &p).entries);
            add_report(&mut o, &rep);
            add_potentials(&mut o, &p);
        }
        Command::Willmore => add_problem(&mut o, &willmore_problem(&cache)?),
        Command::Constrained => add_problem(&mut o, &constrained_problem(&cache, q.as_ref().expect("read above"))?),
        Command::Chen => add_problem(&mut o, &chen_problem(&cache)?),
        Command::Helfrich => {
            add_problem(&mut o, &helfrich_problem(&cache, cfg.alpha, cfg.beta, cfg.gamma)?);
            for (k, v) in [("alpha", cfg.alpha), ("beta", cfg.beta), ("gamma", cfg.gamma)] {
                o.summary.num(k, v);
            }
            match closed_surface_integrals(&cache, cfg.alpha, cfg.beta, cfg.gamma) {
                Ok(s) => {
                    o.summary.text("closed_surface", "yes");
                    o.summary.num("area", s.area);
                    o.summary.num("total_curvature", s.total_curvature);
                    o.summary.num("volume", s.volume);
                    o.summary.num("balancing_residual", s.balancing_residual);
                    o.summary.num("tail_area", s.tail_area);
                }
                Err(Error::Validation(_)) => o.summary.text("closed_surface", "no"),
                Err(e) => return Err(e),
            }
        }
        Command::Residue => {
            let radii = match &cfg.radii {
                Some(r) => parse_list(r, "radius")?,
                None => vec![0.3, 0.5, 0.7],
            };
            let w = willmore_operator(&cache)?;
            let t = stress_tensor(&cache)?;
            let p = build_potential_set(&cache, &w, &t, &Overrides::default())?;
            let rep = radius_independence_scan(&cache, &t, &p.grad_v, &radii)?;
            for (c, b) in rep.beta_res.iter().enumerate() {
                o.summary.num(format!("beta_res_{}", c + 1), *b);
            }
            o.summary.num("spread", rep.spread);
            o.summary.num("green_defect", rep.green_defect);
            let gf = |f: fn(f64, f64) -> f64, init| rep.green_flux.iter().copied().fold(init, f);
            o.summary.num("green_flux_min", gf(f64::min, f64::INFINITY));
            o.summary.num("green_flux_max", gf(f64::max, f64::NEG_INFINITY));
            o.summary.text("radii", radii.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","));
            o.tables.push(("residue.csv".into(), residue_table(&rep)));
            o.warnings.extend(p.warnings.iter().cloned());
        }
        Command::Flow | Command::Surfaces => unreachable!("handled before"),
    }
    Ok(o)
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let probe = dir.join(".wcur_probe");
        File::create(&probe).map_err(io_err(dir))?;
        let _ = fs::remove_file(probe);
    } else if cfg.format == Format::Csv {
        return Err(Error::InvalidParameter("--format csv needs --out DIR".into()));
    }
    if let Some(q) = &cfg.q {
        if !q.is_file() {
            return Err(Error::Io { path: q.clone(), source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file") });
        }
    }
    Ok(())
}

fn execute(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let werr = |e: std::io::Error| Error::Io { path: PathBuf::from("<stdout>"), source: e };
    if cfg.command == Command::Surfaces {
        for (name, desc) in CATALOG {
            writeln!(out, "{name:<24}{desc}").map_err(werr)?;
        }
        return Ok(());
    }
    prepare_out(cfg)?;
    let mut o = compute(cfg)?;
    o.summary.text("warnings", o.warnings.len().to_string());
    for w in &o.warnings {
        writeln!(err, "warning: {w}").map_err(werr)?;
    }
    write!(out, "{}", o.summary.render()).map_err(werr)?;
    if let Some(dir) = &cfg.out {
        write_summary(&o.summary, &dir.join(format!("{}.summary", cfg.command.name())))?;
        for (name, text) in &o.tables {
            let p = dir.join(name);
            fs::write(&p, text).map_err(io_err(&p))?;
        }
        if cfg.format == Format::Csv {
            for (name, f) in &o.fields {
                write_field_dump(f, &dir.join(format!("{name}.csv")))?;
            }
        }
    }
    Ok(())
}

/// Runs one command; returns the process exit status (0, 2 on validation
/// errors, 3 on solver failure).
pub fn run_with(argv: impl IntoIterator<Item = String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cfg = match RunConfig::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match execute(&cfg, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if matches!(e, Error::UnknownSurface(_)) {
                let _ = writeln!(err, "{}", RunConfig::command().render_usage());
                let _ = writeln!(err, "known surfaces: {}", CATALOG.iter().map(|c| c.0).collect::<Vec<_>>().join(", "));
            }
            e.exit_code()
        }
    }
}

pub fn run_command(argv: impl IntoIterator<Item = String>) -> i32 {
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
