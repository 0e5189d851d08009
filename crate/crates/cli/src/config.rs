//! Run configuration in a plain key-value format.
//!
//! A file is a sequence of `[section]` headers and `key = value` lines; `#`
//! starts a comment. Numbers accept products and quotients of literals and
//! `pi` (`1/64`, `2*pi`), lists are comma separated, and lists of tuples
//! separate the tuples with `;`. Every key must be consumed by the section it
//! appears in, so a misspelt or inapplicable key is an error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use perishape_core::domain::Cutter;
use perishape_core::eigen::DEFAULT_SEED;
use perishape_core::verify::SamplerParams;
use perishape_core::{BoxConstraint, FunctionalSpec, GridSpec, Objective, OptimizerConfig, Shape, SourceKind, SourceTerm};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("invalid configuration: {message}{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Invalid { line: Option<usize>, message: String },
}

type Result<T> = std::result::Result<T, ConfigError>;

fn invalid(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { line, message: message.into() }
}

const SECTIONS: [&str; 8] = ["run", "grid", "shape", "objective", "optimizer", "verify", "sweep", "report"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Verify,
    Sweep,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridLayout {
    Centered { center: [f64; 2], half_width: f64 },
    Bounds([f64; 4]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub h: f64,
    pub layout: GridLayout,
}

impl GridConfig {
    pub fn spec(&self) -> perishape_core::Result<GridSpec> {
        match self.layout {
            GridLayout::Centered { center, half_width } => GridSpec::centered(center, half_width, self.h),
            GridLayout::Bounds([x0, x1, y0, y1]) => GridSpec::covering(x0, x1, y0, y1, self.h),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeConfig {
    Disk { center: [f64; 2], radius: f64 },
    Ellipse { center: [f64; 2], a: f64, b: f64 },
    Rectangle { min: [f64; 2], max: [f64; 2] },
    Square { center: [f64; 2], side: f64 },
    Annulus { center: [f64; 2], inner: f64, outer: f64 },
    /// An LSF1 or CSV field file.
    File(PathBuf),
}

impl ShapeConfig {
    /// Analytic primitive, `None` for a file.
    pub fn analytic(&self) -> Option<Shape> {
        Some(match *self {
            ShapeConfig::Disk { center, radius } => Shape::disk(center, radius),
            ShapeConfig::Ellipse { center, a, b } => Shape::ellipse(center, a, b),
            ShapeConfig::Rectangle { min, max } => Shape::rectangle(min, max),
            ShapeConfig::Square { center, side } => Shape::square(center, side),
            ShapeConfig::Annulus { center, inner, outer } => Shape::Annulus { center, inner, outer },
            ShapeConfig::File(_) => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalConfig {
    Perimeter,
    Energy { source: SourceKind, exponent: f64 },
    Spectral(Vec<f64>),
}

impl FunctionalConfig {
    pub fn spec(&self) -> perishape_core::Result<FunctionalSpec> {
        Ok(match self {
            FunctionalConfig::Perimeter => FunctionalSpec::perimeter_only(),
            FunctionalConfig::Energy { source, exponent } => {
                FunctionalSpec::Energy(SourceTerm::new(source.clone(), *exponent)?)
            }
            FunctionalConfig::Spectral(w) => FunctionalSpec::Spectral(w.clone()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub functional: FunctionalConfig,
    pub m: f64,
    pub mu: f64,
    /// Admissible box `[xmin, xmax, ymin, ymax]`.
    pub bounds: Option<[f64; 4]>,
}

impl ObjectiveConfig {
    pub fn build(&self, grid: &GridSpec) -> perishape_core::Result<Objective> {
        let obj = Objective::new(self.functional.spec()?, self.m, self.mu)?;
        match self.bounds {
            None => Ok(obj),
            Some([x0, x1, y0, y1]) => obj.with_constraint(grid, BoxConstraint::Rectangle { min: [x0, y0], max: [x1, y1] }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Torsion,
    FaberKrahn,
    Isoperimetric,
    Supersolution,
    Cut,
    LocalOptimality,
    Deformation,
}

impl CheckKind {
    const ALL: [CheckKind; 7] = [
        CheckKind::Torsion,
        CheckKind::FaberKrahn,
        CheckKind::Isoperimetric,
        CheckKind::Supersolution,
        CheckKind::Cut,
        CheckKind::LocalOptimality,
        CheckKind::Deformation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Torsion => "torsion",
            CheckKind::FaberKrahn => "faber_krahn",
            CheckKind::Isoperimetric => "isoperimetric",
            CheckKind::Supersolution => "supersolution",
            CheckKind::Cut => "cut",
            CheckKind::LocalOptimality => "local_optimality",
            CheckKind::Deformation => "deformation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub checks: Vec<CheckKind>,
    /// Optimize from `[shape]` first and certify the result.
    pub optimize: bool,
    pub supersolution_mu: f64,
    pub cutters: Vec<Cutter>,
    pub sampler: SamplerParams,
    /// Radial bump `(x, y, radius)` for the deformation study.
    pub bump: [f64; 3],
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub center: [f64; 2],
    pub r_min: f64,
    pub r_max: f64,
    pub count: usize,
}

impl SweepConfig {
    pub fn radii(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.r_min];
        }
        (0..self.count)
            .map(|k| self.r_min + (self.r_max - self.r_min) * k as f64 / (self.count - 1) as f64)
            .collect()
    }
}

/// A fully validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    /// Write a checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
    pub out: PathBuf,
    pub grid: Option<GridConfig>,
    pub shape: ShapeConfig,
    pub objective: ObjectiveConfig,
    pub optimizer: OptimizerConfig,
    pub verify: VerifyConfig,
    pub sweep: SweepConfig,
    pub report_field: Option<PathBuf>,
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Keys of one section, with consumption tracking.
struct Table {
    name: String,
    entries: BTreeMap<String, Entry>,
}

fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let mut value = None;
    let mut op = '*';
    let mut rest = s;
    loop {
        let pos = rest.char_indices().skip(1).find(|&(_, c)| c == '*' || c == '/').map(|(i, _)| i);
        let (tok, tail) = match pos {
            Some(p) => (&rest[..p], Some(&rest[p..])),
            None => (rest, None),
        };
        let tok = tok.trim();
        let (neg, body) = match tok.strip_prefix('-') {
            Some(b) => (true, b.trim()),
            None => (false, tok),
        };
        let x = match body {
            "pi" => std::f64::consts::PI,
            "inf" => f64::INFINITY,
            _ if body.starts_with('+') || body.starts_with('-') => return None,
            _ => body.parse::<f64>().ok()?,
        };
        let x = if neg { -x } else { x };
        value = Some(match (value, op) {
            (None, _) => x,
            (Some(v), '*') => v * x,
            (Some(v), _) => v / x,
        });
        match tail {
            None => return value,
            Some(t) => {
                op = t.chars().next()?;
                rest = &t[1..];
            }
        }
    }
}

impl Table {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.line)
    }

    fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn bad(&self, line: usize, key: &str, what: &str) -> ConfigError {
        ConfigError::Syntax { line, message: format!("{}.{key}: expected {what}", self.name) }
    }

    fn str(&mut self, key: &str) -> Option<(String, usize)> {
        self.take(key)
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => parse_number(&v).map(Some).ok_or_else(|| self.bad(line, key, "a number")),
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    fn required_f64(&mut self, key: &str) -> Result<f64> {
        self.f64(key)?.ok_or_else(|| invalid(None, format!("{}.{key} is required", self.name)))
    }

    fn uint(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            None => Ok(default),
            Some((v, line)) => v.trim().parse::<u64>().map_err(|_| self.bad(line, key, "a nonnegative integer")),
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize> {
        Ok(self.uint(key, default as u64)? as usize)
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some((v, line)) => match v.trim() {
                "true" | "yes" => Ok(true),
                "false" | "no" => Ok(false),
                _ => Err(self.bad(line, key, "true or false")),
            },
        }
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(parse_number)
                .collect::<Option<Vec<f64>>>()
                .map(Some)
                .ok_or_else(|| self.bad(line, key, "a comma-separated list of numbers")),
        }
    }

    fn array<const N: usize>(&mut self, key: &str) -> Result<Option<[f64; N]>> {
        let line = self.line(key);
        match self.list(key)? {
            None => Ok(None),
            Some(v) => <[f64; N]>::try_from(v)
                .map(Some)
                .map_err(|_| self.bad(line.unwrap_or(0), key, &format!("{N} comma-separated numbers"))),
        }
    }

    fn tuples<const N: usize>(&mut self, key: &str) -> Result<Vec<[f64; N]>> {
        let Some((v, line)) = self.take(key) else { return Ok(Vec::new()) };
        v.split(';')
            .map(|t| {
                t.split(',')
                    .map(parse_number)
                    .collect::<Option<Vec<f64>>>()
                    .and_then(|x| <[f64; N]>::try_from(x).ok())
                    .ok_or_else(|| self.bad(line, key, &format!("`;`-separated tuples of {N} numbers")))
            })
            .collect()
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().filter(|(_, e)| !e.used).min_by_key(|(_, e)| e.line) {
            None => Ok(()),
            Some((key, e)) => Err(ConfigError::UnknownKey { line: e.line, section: self.name, key }),
        }
    }
}

fn split_sections(text: &str) -> Result<BTreeMap<String, (usize, Table)>> {
    let mut sections: BTreeMap<String, (usize, Table)> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax { line, message: "unterminated section header".into() })?
                .trim()
                .to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(ConfigError::Syntax { line, message: format!("unknown section [{name}]") });
            }
            if sections.contains_key(&name) {
                return Err(ConfigError::Syntax { line, message: format!("section [{name}] appears twice") });
            }
            sections.insert(name.clone(), (line, Table { name: name.clone(), entries: BTreeMap::new() }));
            current = Some(name);
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line, message: "expected `key = value`".into() })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax { line, message: "empty key or value".into() });
        }
        let section = current
            .as_ref()
            .ok_or_else(|| ConfigError::Syntax { line, message: "key outside any section".into() })?;
        let table = &mut sections.get_mut(section).expect("section exists").1;
        if let Some(prev) = table.entries.get(key) {
            return Err(ConfigError::Syntax {
                line,
                message: format!("key `{key}` repeats line {}", prev.line),
            });
        }
        table.entries.insert(key.to_string(), Entry { value: value.to_string(), line, used: false });
    }
    Ok(sections)
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn existing_file(base: &Path, raw: &str, line: usize, what: &str) -> Result<PathBuf> {
    let path = resolve(base, raw);
    if !path.is_file() {
        return Err(invalid(Some(line), format!("{what} {} does not exist", path.display())));
    }
    Ok(path)
}

/// Reads and validates a configuration file. Relative paths are resolved
/// against the directory of the file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_str(&text, &base)
}

fn empty(name: &str) -> Table {
    Table { name: name.to_string(), entries: BTreeMap::new() }
}

/// Parses configuration text; `base` anchors relative paths.
pub fn parse_str(text: &str, base: &Path) -> Result<RunConfig> {
    let mut sections = split_sections(text)?;
    let mut section = |name: &str| sections.remove(name).map(|(_, t)| t).unwrap_or_else(|| empty(name));
    let mut run = section("run");
    let mut grid_t = section("grid");
    let mut shape_t = section("shape");
    let mut obj_t = section("objective");
    let mut opt_t = section("optimizer");
    let mut ver_t = section("verify");
    let mut sweep_t = section("sweep");
    let mut rep_t = section("report");

    let command = match run.str("command") {
        None => Command::Solve,
        Some((v, line)) => match v.as_str() {
            "solve" => Command::Solve,
            "verify" => Command::Verify,
            "sweep" => Command::Sweep,
            "report" => Command::Report,
            _ => return Err(run.bad(line, "command", "one of solve, verify, sweep, report")),
        },
    };
    let seed = run.uint("seed", DEFAULT_SEED)?;
    let checkpoint_every = run.usize_or("checkpoint_every", 0)?;
    let out = run.str("out").map(|(v, _)| resolve(base, &v)).unwrap_or_else(|| base.join("perishape-out"));

    let grid = parse_grid(&mut grid_t)?;
    if grid.is_none() && command != Command::Report {
        return Err(invalid(None, "[grid] with h and half_width or bounds is required"));
    }
    let grid_spec = match &grid {
        Some(g) => Some(g.spec().map_err(|e| invalid(grid_t.line("h"), format!("grid: {e}")))?),
        None => None,
    };
    let domain_center = grid.as_ref().map(|g| match g.layout {
        GridLayout::Centered { center, .. } => center,
        GridLayout::Bounds([x0, x1, y0, y1]) => [(x0 + x1) / 2.0, (y0 + y1) / 2.0],
    });

    let objective = parse_objective(&mut obj_t)?;
    if let Some(g) = &grid_spec {
        objective.build(g).map_err(|e| invalid(None, format!("objective: {e}")))?;
    } else {
        objective.functional.spec().map_err(|e| invalid(None, format!("objective: {e}")))?;
    }
    let shape = parse_shape(&mut shape_t, base, objective.m, domain_center.unwrap_or([0.0, 0.0]))?;

    let defaults = OptimizerConfig::default();
    let optimizer = OptimizerConfig {
        max_iters: opt_t.usize_or("max_iters", defaults.max_iters)?,
        cfl: opt_t.f64_or("cfl", defaults.cfl)?,
        mu_initial: opt_t.f64_or("mu_initial", defaults.mu_initial)?,
        mu_growth: opt_t.f64_or("mu_growth", defaults.mu_growth)?,
        mu_cap: opt_t.f64_or("mu_cap", defaults.mu_cap)?,
        redistance_interval: opt_t.usize_or("redistance_interval", defaults.redistance_interval)?,
        tolerance: opt_t.f64_or("tolerance", defaults.tolerance)?,
        patience: opt_t.usize_or("patience", defaults.patience)?,
        smoothing_cells: opt_t.f64_or("smoothing_cells", defaults.smoothing_cells)?,
        seed,
    };
    optimizer.validate().map_err(|e| invalid(None, format!("optimizer: {e}")))?;

    let verify = parse_verify(&mut ver_t, &objective, seed)?;
    let sweep = parse_sweep(&mut sweep_t, domain_center.unwrap_or([0.0, 0.0]))?;
    if command == Command::Sweep {
        let g = grid_spec.expect("grid checked above");
        if !g.contains_ball(sweep.center, sweep.r_max + 2.0 * g.h) {
            return Err(invalid(sweep_t.line("r_max"), "sweep: the largest ball must fit inside the grid margin"));
        }
    }
    let report_field = match rep_t.str("field") {
        None if command == Command::Report => return Err(invalid(None, "report.field is required for command report")),
        None => None,
        Some((v, line)) => Some(existing_file(base, &v, line, "report field")?),
    };

    for t in [run, grid_t, shape_t, obj_t, opt_t, ver_t, sweep_t, rep_t] {
        t.finish()?;
    }
    Ok(RunConfig {
        command,
        seed,
        checkpoint_every,
        out,
        grid,
        shape,
        objective,
        optimizer,
        verify,
        sweep,
        report_field,
    })
}

fn parse_grid(t: &mut Table) -> Result<Option<GridConfig>> {
    let Some(h) = t.f64("h")? else {
        return if t.has("half_width") || t.has("bounds") {
            Err(invalid(None, "grid.h is required"))
        } else {
            Ok(None)
        };
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(t.line("h"), "grid.h must be positive"));
    }
    let layout = match (t.has("bounds"), t.has("half_width")) {
        (true, true) => return Err(invalid(t.line("bounds"), "grid: give either bounds or half_width, not both")),
        (true, false) => {
            let b = t.array::<4>("bounds")?.expect("present");
            if !(b[1] > b[0] && b[3] > b[2]) {
                return Err(invalid(t.line("bounds"), "grid.bounds must satisfy xmin < xmax and ymin < ymax"));
            }
            GridLayout::Bounds(b)
        }
        (false, true) => {
            let half_width = t.required_f64("half_width")?;
            if !(half_width > 0.0) {
                return Err(invalid(t.line("half_width"), "grid.half_width must be positive"));
            }
            GridLayout::Centered { center: t.array::<2>("center")?.unwrap_or([0.0, 0.0]), half_width }
        }
        (false, false) => return Err(invalid(t.line("h"), "grid needs half_width or bounds")),
    };
    Ok(Some(GridConfig { h, layout }))
}

fn parse_objective(t: &mut Table) -> Result<ObjectiveConfig> {
    let (kind, kind_line) = t.str("functional").unwrap_or_else(|| ("perimeter".to_string(), 0));
    let functional = match kind.as_str() {
        "perimeter" => FunctionalConfig::Perimeter,
        "energy" => {
            let exponent = t.f64_or("source_exponent", f64::INFINITY)?;
            let (source, line) = t.str("source").unwrap_or_else(|| ("constant".to_string(), 0));
            let source = match source.as_str() {
                "constant" => SourceKind::Constant(t.f64_or("source_value", 1.0)?),
                "gaussian" | "dipole" => {
                    let center = t.array::<2>("source_center")?.unwrap_or([0.0, 0.0]);
                    let amplitude = t.f64_or("source_amplitude", 1.0)?;
                    let width = t.f64_or("source_width", 0.5)?;
                    if source == "gaussian" {
                        SourceKind::Gaussian { center, amplitude, width }
                    } else {
                        SourceKind::Dipole { center, amplitude, width }
                    }
                }
                _ => return Err(t.bad(line, "source", "one of constant, gaussian, dipole")),
            };
            FunctionalConfig::Energy { source, exponent }
        }
        "spectral" => {
            let weights = t.list("weights")?;
            let k_line = t.line("k");
            let k = match t.take("k") {
                None => None,
                Some((v, line)) => Some(v.trim().parse::<usize>().map_err(|_| t.bad(line, "k", "a positive integer"))?),
            };
            let weights = match (weights, k) {
                (Some(w), Some(k)) if w.len() != k => {
                    return Err(invalid(k_line, format!("objective.k = {k} must equal the number of weights ({})", w.len())))
                }
                (Some(w), _) => w,
                (None, Some(k)) if k >= 1 => (1..=k).map(|i| if i == k { 1.0 } else { 0.0 }).collect(),
                (None, Some(_)) => return Err(invalid(k_line, "objective.k must be at least 1")),
                (None, None) => vec![1.0],
            };
            FunctionalConfig::Spectral(weights)
        }
        _ => return Err(t.bad(kind_line, "functional", "one of perimeter, energy, spectral")),
    };
    let m = t.required_f64("m").map_err(|_| invalid(None, "objective.m (target volume) is required"))?;
    let mu = t.f64_or("mu", 1.0)?;
    let bounds_line = t.line("box");
    let bounds = t.array::<4>("box")?;
    if let Some(b) = bounds {
        if !(b[1] > b[0] && b[3] > b[2]) {
            return Err(invalid(bounds_line, "objective.box must satisfy xmin < xmax and ymin < ymax"));
        }
    }
    Ok(ObjectiveConfig { functional, m, mu, bounds })
}

fn positive(t: &Table, key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(t.line(key), format!("{}.{key} must be positive", t.name)))
    }
}

fn parse_shape(t: &mut Table, base: &Path, m: f64, center_default: [f64; 2]) -> Result<ShapeConfig> {
    let Some((kind, line)) = t.str("kind") else {
        // Ellipse of area m with aspect ratio 1.5625.
        let s = (m / std::f64::consts::PI).sqrt();
        return Ok(ShapeConfig::Ellipse { center: center_default, a: 1.25 * s, b: 0.8 * s });
    };
    let center = |t: &mut Table| -> Result<[f64; 2]> { Ok(t.array::<2>("center")?.unwrap_or(center_default)) };
    let req = |t: &mut Table, key: &str| -> Result<f64> {
        let v = t.required_f64(key).map_err(|_| invalid(Some(line), format!("shape.{key} is required for kind {kind}")))?;
        positive(t, key, v)
    };
    Ok(match kind.as_str() {
        "disk" => ShapeConfig::Disk { center: center(t)?, radius: req(t, "radius")? },
        "ellipse" => ShapeConfig::Ellipse { center: center(t)?, a: req(t, "a")?, b: req(t, "b")? },
        "square" => ShapeConfig::Square { center: center(t)?, side: req(t, "side")? },
        "rectangle" => {
            let min = t.array::<2>("min")?;
            let max = t.array::<2>("max")?;
            match (min, max) {
                (Some(a), Some(b)) if b[0] > a[0] && b[1] > a[1] => ShapeConfig::Rectangle { min: a, max: b },
                (Some(_), Some(_)) => return Err(invalid(Some(line), "shape: rectangle needs min < max componentwise")),
                _ => return Err(invalid(Some(line), "shape.min and shape.max are required for kind rectangle")),
            }
        }
        "annulus" => {
            let c = center(t)?;
            let (inner, outer) = (req(t, "inner")?, req(t, "outer")?);
            if inner >= outer {
                return Err(invalid(t.line("inner"), "shape: annulus needs inner < outer"));
            }
            ShapeConfig::Annulus { center: c, inner, outer }
        }
        "file" => {
            let (p, pl) = t.str("path").ok_or_else(|| invalid(Some(line), "shape.path is required for kind file"))?;
            ShapeConfig::File(existing_file(base, &p, pl, "shape file")?)
        }
        _ => return Err(t.bad(line, "kind", "one of disk, ellipse, square, rectangle, annulus, file")),
    })
}

fn parse_verify(t: &mut Table, obj: &ObjectiveConfig, seed: u64) -> Result<VerifyConfig> {
    let checks = match t.take("checks") {
        None => vec![CheckKind::Torsion, CheckKind::FaberKrahn, CheckKind::Isoperimetric, CheckKind::Supersolution],
        Some((v, line)) => {
            let mut out = Vec::new();
            for name in v.split(',').map(str::trim) {
                let c = CheckKind::ALL.into_iter().find(|c| c.name() == name).ok_or_else(|| {
                    ConfigError::Syntax { line, message: format!("verify.checks: unknown check `{name}`") }
                })?;
                if !out.contains(&c) {
                    out.push(c);
                }
            }
            out
        }
    };
    let optimize = t.bool_or("optimize", false)?;
    let supersolution_mu = t.f64_or("supersolution_mu", obj.mu)?;
    let mut cutters: Vec<Cutter> =
        t.tuples::<3>("cut_balls")?.into_iter().map(|[x, y, r]| Cutter::Ball { center: [x, y], radius: r }).collect();
    cutters.extend(
        t.tuples::<3>("cut_half_spaces")?
            .into_iter()
            .map(|[nx, ny, c]| Cutter::HalfSpace { direction: [nx, ny], offset: c }),
    );
    if checks.contains(&CheckKind::Cut) && cutters.is_empty() {
        return Err(invalid(None, "verify.checks includes cut but no cut_balls or cut_half_spaces are given"));
    }
    let d = SamplerParams::default();
    let sampler = SamplerParams {
        r_max: t.f64_or("r_max", d.r_max)?,
        r_min: t.f64_or("r_min", d.r_min)?,
        radii: t.usize_or("radii", d.radii)?,
        probes: t.usize_or("probes", d.probes)?,
        perturbations: t.usize_or("perturbations", d.perturbations)?,
        seed,
    };
    if !(sampler.r_max > sampler.r_min && sampler.radii >= 2) {
        return Err(invalid(t.line("r_max"), "verify: need r_min < r_max and at least 2 radii"));
    }
    let bump = t.array::<3>("bump")?.unwrap_or([0.0, 0.0, 0.5]);
    let amplitudes = t.list("amplitudes")?.unwrap_or_else(|| (0..7).map(|k| 1e-3 * 10f64.powf(k as f64 / 3.0)).collect());
    if checks.contains(&CheckKind::Deformation) && obj.functional == FunctionalConfig::Perimeter {
        return Err(invalid(None, "verify: the deformation check needs an energy or spectral functional"));
    }
    Ok(VerifyConfig { checks, optimize, supersolution_mu, cutters, sampler, bump, amplitudes })
}

fn parse_sweep(t: &mut Table, center_default: [f64; 2]) -> Result<SweepConfig> {
    let s = SweepConfig {
        center: t.array::<2>("center")?.unwrap_or(center_default),
        r_min: t.f64_or("r_min", 0.5)?,
        r_max: t.f64_or("r_max", 2.0)?,
        count: t.usize_or("count", 16)?,
    };
    if !(s.r_min > 0.0 && s.r_max >= s.r_min && s.count >= 1) {
        return Err(invalid(t.line("r_min"), "sweep: need 0 < r_min <= r_max and count >= 1"));
    }
    Ok(s)
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    /// Canonical text of every setting, defaults included. It parses back to
    /// an equal configuration (paths become absolute); the output directory
    /// is left out so that it does not enter the configuration hash.
    pub fn effective(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "[run]\ncommand = {}\nseed = {}\ncheckpoint_every = {}", self.command.name(), self.seed, self.checkpoint_every);
        if let Some(g) = &self.grid {
            let _ = writeln!(w, "\n[grid]\nh = {}", g.h);
            match g.layout {
                GridLayout::Centered { center, half_width } => {
                    let _ = writeln!(w, "center = {}\nhalf_width = {half_width}", list(&center));
                }
                GridLayout::Bounds(b) => {
                    let _ = writeln!(w, "bounds = {}", list(&b));
                }
            }
        }
        let _ = writeln!(w, "\n[shape]");
        let _ = match &self.shape {
            ShapeConfig::Disk { center, radius } => writeln!(w, "kind = disk\ncenter = {}\nradius = {radius}", list(center)),
            ShapeConfig::Ellipse { center, a, b } => writeln!(w, "kind = ellipse\ncenter = {}\na = {a}\nb = {b}", list(center)),
            ShapeConfig::Rectangle { min, max } => writeln!(w, "kind = rectangle\nmin = {}\nmax = {}", list(min), list(max)),
            ShapeConfig::Square { center, side } => writeln!(w, "kind = square\ncenter = {}\nside = {side}", list(center)),
            ShapeConfig::Annulus { center, inner, outer } => {
                writeln!(w, "kind = annulus\ncenter = {}\ninner = {inner}\nouter = {outer}", list(center))
            }
            ShapeConfig::File(p) => writeln!(w, "kind = file\npath = {}", absolute(p).display()),
        };
        let o = &self.objective;
        let _ = writeln!(w, "\n[objective]");
        let _ = match &o.functional {
            FunctionalConfig::Perimeter => writeln!(w, "functional = perimeter"),
            FunctionalConfig::Energy { source, exponent } => {
                let _ = writeln!(w, "functional = energy\nsource_exponent = {exponent}");
                match source {
                    SourceKind::Constant(c) => writeln!(w, "source = constant\nsource_value = {c}"),
                    SourceKind::Gaussian { center, amplitude, width } => writeln!(
                        w,
                        "source = gaussian\nsource_center = {}\nsource_amplitude = {amplitude}\nsource_width = {width}",
                        list(center)
                    ),
                    SourceKind::Dipole { center, amplitude, width } => writeln!(
                        w,
                        "source = dipole\nsource_center = {}\nsource_amplitude = {amplitude}\nsource_width = {width}",
                        list(center)
                    ),
                    SourceKind::Sampled(_) => writeln!(w, "# sampled source"),
                }
            }
            FunctionalConfig::Spectral(c) => writeln!(w, "functional = spectral\nk = {}\nweights = {}", c.len(), list(c)),
        };
        let _ = writeln!(w, "m = {}\nmu = {}", o.m, o.mu);
        if let Some(b) = o.bounds {
            let _ = writeln!(w, "box = {}", list(&b));
        }
        let c = &self.optimizer;
        let _ = writeln!(
            w,
            "\n[optimizer]\nmax_iters = {}\ncfl = {}\nmu_initial = {}\nmu_growth = {}\nmu_cap = {}\nredistance_interval = {}\ntolerance = {}\npatience = {}\nsmoothing_cells = {}",
            c.max_iters, c.cfl, c.mu_initial, c.mu_growth, c.mu_cap, c.redistance_interval, c.tolerance, c.patience, c.smoothing_cells
        );
        let v = &self.verify;
        let names: Vec<&str> = v.checks.iter().map(|c| c.name()).collect();
        let _ = writeln!(
            w,
            "\n[verify]\nchecks = {}\noptimize = {}\nsupersolution_mu = {}",
            names.join(", "),
            v.optimize,
            v.supersolution_mu
        );
        let balls: Vec<String> = v
            .cutters
            .iter()
            .filter_map(|c| match c {
                Cutter::Ball { center, radius } => Some(list(&[center[0], center[1], *radius])),
                _ => None,
            })
            .collect();
        let halves: Vec<String> = v
            .cutters
            .iter()
            .filter_map(|c| match c {
                Cutter::HalfSpace { direction, offset } => Some(list(&[direction[0], direction[1], *offset])),
                _ => None,
            })
            .collect();
        if !balls.is_empty() {
            let _ = writeln!(w, "cut_balls = {}", balls.join("; "));
        }
        if !halves.is_empty() {
            let _ = writeln!(w, "cut_half_spaces = {}", halves.join("; "));
        }
        let p = &v.sampler;
        let _ = writeln!(
            w,
            "r_max = {}\nr_min = {}\nradii = {}\nprobes = {}\nperturbations = {}\nbump = {}\namplitudes = {}",
            p.r_max,
            p.r_min,
            p.radii,
            p.probes,
            p.perturbations,
            list(&v.bump),
            list(&v.amplitudes)
        );
        let sw = &self.sweep;
        let _ = writeln!(
            w,
            "\n[sweep]\ncenter = {}\nr_min = {}\nr_max = {}\ncount = {}",
            list(&sw.center),
            sw.r_min,
            sw.r_max,
            sw.count
        );
        if let Some(f) = &self.report_field {
            let _ = writeln!(w, "\n[report]\nfield = {}", absolute(f).display());
        }
        s
    }

    /// Hex SHA-256 of [`RunConfig::effective`].
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.effective().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_expressions() {
        assert_eq!(parse_number("1/64"), Some(0.015625));
        assert_eq!(parse_number("2*pi"), Some(2.0 * std::f64::consts::PI));
        assert_eq!(parse_number("-pi / 2"), Some(-std::f64::consts::FRAC_PI_2));
        assert_eq!(parse_number(" -1.5e-3 "), Some(-1.5e-3));
        assert_eq!(parse_number("inf"), Some(f64::INFINITY));
        assert_eq!(parse_number("1/"), None);
        assert_eq!(parse_number("abc"), None);
        assert_eq!(parse_number("--1"), None);
    }

    #[test]
    fn sweep_radii_are_inclusive() {
        let s = SweepConfig { center: [0.0, 0.0], r_min: 0.5, r_max: 2.0, count: 4 };
        assert_eq!(s.radii(), vec![0.5, 1.0, 1.5, 2.0]);
    }
}
