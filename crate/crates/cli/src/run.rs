//! Execution of a validated [`RunConfig`].

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use perishape_core::domain::{perimeter, volume};
use perishape_core::functionals::{evaluate_seeded, functional_value, State};
use perishape_core::optimizer::{minimize_from, Checkpoint};
use perishape_core::verify::{self, CheckReport, Job, BESSEL_J01};
use perishape_core::{
    Deformation, Evaluation, FunctionalSpec, GridSpec, LevelSetField, Objective, OptimizeResult, ScalarField, Shape,
    SourceKind,
};
use rayon::prelude::*;

use crate::config::{CheckKind, Command, FunctionalConfig, RunConfig, ShapeConfig};
use crate::output::{self, read_checkpoint, read_field, render_svg, write_checkpoint, write_field, write_text};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] perishape_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Failed(String),
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// False when a verification check failed.
    pub passed: bool,
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

struct Artifacts {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
        move |source| RunError::Io { path: path.to_path_buf(), source }
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), RunError> {
        let p = self.path(name);
        write_text(&p, &self.hash, body).map_err(Self::io(&p))?;
        self.written.push(p);
        Ok(())
    }

    fn field(&mut self, name: &str, set: &LevelSetField) -> Result<(), RunError> {
        let p = self.path(name);
        write_field(&p, &self.hash, set)?;
        self.written.push(p);
        Ok(())
    }

    fn svg(&mut self, name: &str, set: &LevelSetField, state: Option<&ScalarField>, title: &str) -> Result<(), RunError> {
        let p = self.path(name);
        output::write_atomic(&p, render_svg(&self.hash, set, state, title).as_bytes()).map_err(Self::io(&p))?;
        self.written.push(p);
        Ok(())
    }
}

/// Runs `cfg`, writing artifacts into `cfg.out`. `resume` restarts an
/// optimization from a checkpoint file.
pub fn run(cfg: &RunConfig, resume: Option<&Path>) -> Result<Outcome, RunError> {
    if resume.is_some() && !(cfg.command == Command::Solve || (cfg.command == Command::Verify && cfg.verify.optimize)) {
        return Err(RunError::Failed("--resume needs a solve run or a verify run with optimize = true".into()));
    }
    std::fs::create_dir_all(&cfg.out).map_err(Artifacts::io(&cfg.out))?;
    let mut art = Artifacts { dir: cfg.out.clone(), hash: cfg.hash(), written: Vec::new() };
    art.text("effective_config.txt", &cfg.effective())?;
    log::info!("{} run, config sha256:{}, output in {}", cfg.command.name(), art.hash, cfg.out.display());
    let (passed, summary) = match cfg.command {
        Command::Solve => solve(cfg, &mut art, resume)?,
        Command::Verify => verify_run(cfg, &mut art, resume)?,
        Command::Sweep => sweep(cfg, &mut art)?,
        Command::Report => report(cfg, &mut art)?,
    };
    art.text("summary.txt", &summary)?;
    Ok(Outcome { passed, summary, artifacts: art.written })
}

fn grid_of(cfg: &RunConfig) -> Result<GridSpec, RunError> {
    let g = cfg.grid.as_ref().ok_or_else(|| RunError::Failed("no grid configured".into()))?;
    Ok(g.spec()?)
}

fn initial_set(cfg: &RunConfig, grid: &GridSpec) -> Result<LevelSetField, RunError> {
    let set = match (&cfg.shape, cfg.shape.analytic()) {
        (_, Some(shape)) => shape.rasterize(grid)?,
        (ShapeConfig::File(p), None) => {
            let f = read_field(p)?;
            if f.grid() != grid {
                return Err(RunError::Failed(format!(
                    "{}: field grid {:?} differs from the configured grid {:?}",
                    p.display(),
                    f.grid(),
                    grid
                )));
            }
            f
        }
        _ => unreachable!("non-file shapes are analytic"),
    };
    set.check_margin()?;
    Ok(set)
}

/// The state function drawn under the contour.
fn state_field(spec: &FunctionalSpec, eval: &Evaluation) -> Option<ScalarField> {
    match (&eval.state, spec) {
        (State::Energy { w, .. }, _) => Some(w.clone()),
        (State::Spectral(e), FunctionalSpec::Spectral(c)) => {
            let k = (0..c.len()).max_by(|&a, &b| c[a].total_cmp(&c[b]))?;
            let u = e.vectors.get(k)?;
            let flip = u.values().iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m }) < 0.0;
            if flip {
                ScalarField::new(*u.grid(), u.values().iter().map(|v| -v).collect()).ok()
            } else {
                Some(u.clone())
            }
        }
        _ => None,
    }
}

fn trace_csv(result: &OptimizeResult) -> String {
    let mut s = String::new();
    let header = perishape_core::TraceRecord::CSV_HEADER;
    // Wall-clock time is left out so that reruns are bitwise identical.
    let _ = writeln!(s, "{}", header.rsplit_once(',').map_or(header, |(a, _)| a));
    for r in &result.trace {
        let row = r.csv_row();
        let _ = writeln!(s, "{}", row.rsplit_once(',').map_or(row.as_str(), |(a, _)| a));
    }
    s
}

fn optimize(
    cfg: &RunConfig,
    art: &mut Artifacts,
    obj: &Objective,
    initial: LevelSetField,
    resume: Option<&Path>,
) -> Result<OptimizeResult, RunError> {
    let start = match resume {
        Some(p) => {
            let (c, hash) = read_checkpoint(p)?;
            if c.set.grid() != initial.grid() {
                return Err(RunError::Failed(format!("{}: checkpoint grid differs from the configured grid", p.display())));
            }
            if hash.as_deref() != Some(art.hash.as_str()) {
                log::warn!("checkpoint {} was written with a different configuration", p.display());
            }
            log::info!("resuming from iteration {} (mu {})", c.iteration, c.mu);
            c
        }
        None => Checkpoint { iteration: 0, mu: cfg.optimizer.mu_initial.max(obj.penalty), step: 0.0, set: initial },
    };
    let every = cfg.checkpoint_every;
    let path = art.path("checkpoint.ckpt");
    let hash = art.hash.clone();
    let mut failure = None;
    let mut observer = |c: &Checkpoint| {
        if every > 0 && c.iteration % every == 0 && failure.is_none() {
            if let Err(e) = write_checkpoint(&path, &hash, c) {
                failure = Some(e);
            }
        }
    };
    let result = minimize_from(obj, start, &cfg.optimizer, &mut observer)?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    if every > 0 {
        art.written.push(path);
    }
    log::info!(
        "optimizer {} after {} iterations: J = {:.8}",
        if result.converged { "converged" } else { "stopped without converging" },
        result.iterations,
        result.evaluation.j
    );
    art.text("trace.csv", &trace_csv(&result))?;
    art.field("final.lsf", &result.set)?;
    let state = state_field(&obj.functional, &result.evaluation);
    art.svg("final.svg", &result.set, state.as_ref(), "final shape")?;
    Ok(result)
}

fn evaluation_lines(s: &mut String, e: &Evaluation, target: f64) {
    let _ = writeln!(
        s,
        "J = {}\nperimeter = {}\nG = {}\nvolume = {}\nvolume_error = {}\npenalty = {}",
        e.j,
        e.perimeter,
        e.g,
        e.volume,
        (e.volume - target) / target,
        e.penalty
    );
    if let State::Spectral(r) = &e.state {
        let vals: Vec<String> = r.values.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "eigenvalues = {}", vals.join(", "));
    }
}

fn solve(cfg: &RunConfig, art: &mut Artifacts, resume: Option<&Path>) -> Result<(bool, String), RunError> {
    let grid = grid_of(cfg)?;
    let obj = cfg.objective.build(&grid)?;
    let result = optimize(cfg, art, &obj, initial_set(cfg, &grid)?, resume)?;
    let mut s = format!("command = solve\nconverged = {}\niterations = {}\nmu = {}\n", result.converged, result.iterations, result.mu);
    evaluation_lines(&mut s, &result.evaluation, obj.target_volume);
    Ok((true, s))
}

fn verify_run(cfg: &RunConfig, art: &mut Artifacts, resume: Option<&Path>) -> Result<(bool, String), RunError> {
    let grid = grid_of(cfg)?;
    let obj = cfg.objective.build(&grid)?;
    let initial = initial_set(cfg, &grid)?;
    let (set, converged, cert_obj) = if cfg.verify.optimize {
        let r = optimize(cfg, art, &obj, initial, resume)?;
        let cert = obj.with_penalty(r.mu);
        (r.set, r.converged, cert)
    } else {
        (initial, true, obj.clone())
    };
    let set = Arc::new(set);
    let v = &cfg.verify;
    let mut jobs: Vec<Job> = Vec::new();
    for &check in &v.checks {
        let s = Arc::clone(&set);
        match check {
            CheckKind::Torsion => {
                let source = match obj.functional.clone() {
                    FunctionalSpec::Energy(f) if !f.is_zero() => Some(f),
                    _ => None,
                };
                jobs.push(Box::new(move || Ok(vec![verify::check_torsion_bounds(&s, source.as_ref())?])));
            }
            CheckKind::FaberKrahn => jobs.push(Box::new(move || Ok(vec![verify::check_faber_krahn(&s)?]))),
            CheckKind::Isoperimetric => jobs.push(Box::new(move || Ok(vec![verify::check_isoperimetric(&s)?]))),
            CheckKind::Supersolution => {
                let mu = v.supersolution_mu;
                jobs.push(Box::new(move || verify::check_supersolution_bounds(&s, mu)));
            }
            CheckKind::Cut => {
                for cutter in v.cutters.clone() {
                    let s = Arc::clone(&set);
                    jobs.push(Box::new(move || Ok(vec![verify::check_cut_lemmas(&s, &cutter)?])));
                }
            }
            CheckKind::LocalOptimality => {
                let o = cert_obj.clone();
                let p = v.sampler.clone();
                jobs.push(Box::new(move || Ok(verify::check_local_optimality(&s, &o, converged, &p)?.reports())));
            }
            CheckKind::Deformation => {
                let spec = obj.functional.clone();
                let [x, y, r] = v.bump;
                let field = Deformation::radial_bump(grid, [x, y], r, 0.01)?;
                let ts = v.amplitudes.clone();
                jobs.push(Box::new(move || Ok(vec![verify::check_deformation_lipschitz(&spec, &s, &field, &ts)?])));
            }
        }
    }
    log::info!("running {} verification jobs", jobs.len());
    let mut reports: Vec<CheckReport> = Vec::new();
    let mut errors = Vec::new();
    for r in verify::run_batch(&jobs) {
        match r {
            Ok(mut rs) => reports.append(&mut rs),
            Err(e) => errors.push(e.to_string()),
        }
    }
    let mut csv = Vec::new();
    verify::write_csv(&reports, &mut csv)?;
    art.text("checks.csv", &String::from_utf8_lossy(&csv))?;
    art.field("verified.lsf", &set)?;
    let eval = evaluate_seeded(&obj, &set, cfg.seed)?;
    art.svg("verified.svg", &set, state_field(&obj.functional, &eval).as_ref(), "verified shape")?;
    if !errors.is_empty() {
        return Err(RunError::Failed(format!("verification job failed: {}", errors.join("; "))));
    }
    let passed = verify::all_pass(&reports);
    Ok((passed, format!("command = verify\n{}", verify::text_summary(&reports))))
}

/// Closed-form `P + G` on balls of radius `r`, and its minimiser when one exists.
fn ball_profile(f: &FunctionalConfig) -> Option<(Box<dyn Fn(f64) -> f64>, Option<f64>)> {
    match f {
        FunctionalConfig::Perimeter => Some((Box::new(|r| 2.0 * PI * r), None)),
        FunctionalConfig::Spectral(c) if c.len() == 1 => {
            let a = c[0] * BESSEL_J01 * BESSEL_J01;
            Some((Box::new(move |r| 2.0 * PI * r + a / (r * r)), Some((a / PI).cbrt())))
        }
        FunctionalConfig::Energy { source: SourceKind::Constant(v), .. } => {
            let v = *v;
            Some((Box::new(move |r| 2.0 * PI * r - v * v * PI * r.powi(4) / 16.0), None))
        }
        _ => None,
    }
}

/// Vertex of the parabola through the discrete minimum and its neighbours.
fn refine_minimum(r: &[f64], f: &[f64]) -> Option<f64> {
    let k = (0..f.len()).min_by(|&a, &b| f[a].total_cmp(&f[b]))?;
    if k == 0 || k + 1 == f.len() {
        return None;
    }
    let d = r[k + 1] - r[k];
    let curv = f[k - 1] - 2.0 * f[k] + f[k + 1];
    Some(r[k] + d * (f[k - 1] - f[k + 1]) / (2.0 * curv))
}

fn sweep(cfg: &RunConfig, art: &mut Artifacts) -> Result<(bool, String), RunError> {
    let grid = grid_of(cfg)?;
    let spec = cfg.objective.functional.spec()?;
    let center = cfg.sweep.center;
    let radii = cfg.sweep.radii();
    log::info!("sweeping {} balls", radii.len());
    let rows: Vec<perishape_core::Result<[f64; 4]>> = radii
        .par_iter()
        .map(|&r| {
            let set = Shape::disk(center, r).rasterize(&grid)?;
            let (g, _) = functional_value(&spec, &set)?;
            Ok([r, volume(&set), perimeter(&set)?, g])
        })
        .collect();
    let rows: Vec<[f64; 4]> = rows.into_iter().collect::<perishape_core::Result<_>>()?;
    let profile = ball_profile(&cfg.objective.functional);
    let mut csv = String::from("r,volume,perimeter,g,f,profile,relative_error\n");
    let mut worst: f64 = 0.0;
    let f: Vec<f64> = rows.iter().map(|x| x[2] + x[3]).collect();
    for (x, fv) in rows.iter().zip(&f) {
        let (pv, err) = match &profile {
            Some((p, _)) => {
                let p = p(x[0]);
                let e = (fv - p) / p.abs();
                worst = worst.max(e.abs());
                (p.to_string(), e.to_string())
            }
            None => (String::new(), String::new()),
        };
        let _ = writeln!(csv, "{},{},{},{},{},{},{}", x[0], x[1], x[2], x[3], fv, pv, err);
    }
    art.text("sweep.csv", &csv)?;
    let mut s = format!("command = sweep\nballs = {}\n", rows.len());
    if profile.is_some() {
        let _ = writeln!(s, "max_profile_error = {worst}");
    }
    match refine_minimum(&radii, &f) {
        Some(r) => {
            let _ = writeln!(s, "minimiser_radius = {r}");
        }
        None => {
            let _ = writeln!(s, "minimiser_radius = none (minimum at the sweep boundary)");
        }
    }
    if let Some((_, Some(r))) = &profile {
        let _ = writeln!(s, "reference_minimiser_radius = {r}");
    }
    let k = (0..f.len()).min_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap_or(0);
    let best = Shape::disk(center, radii[k]).rasterize(&grid)?;
    let (_, state) = functional_value(&spec, &best)?;
    let eval = Evaluation { j: f[k], perimeter: rows[k][2], g: rows[k][3], volume: rows[k][1], penalty: 0.0, state };
    art.svg("sweep.svg", &best, state_field(&spec, &eval).as_ref(), "best ball of the sweep")?;
    Ok((true, s))
}

fn report(cfg: &RunConfig, art: &mut Artifacts) -> Result<(bool, String), RunError> {
    let path = cfg.report_field.as_ref().ok_or_else(|| RunError::Failed("report.field is not set".into()))?;
    let set = read_field(path)?;
    if let Some(g) = &cfg.grid {
        if &g.spec()? != set.grid() {
            return Err(RunError::Failed(format!("{}: field grid differs from the configured grid", path.display())));
        }
    }
    set.check_margin()?;
    let obj = cfg.objective.build(set.grid())?;
    let eval = evaluate_seeded(&obj, &set, cfg.seed)?;
    let mut s = format!("command = report\nfield = {}\n", path.display());
    evaluation_lines(&mut s, &eval, obj.target_volume);
    art.svg("report.svg", &set, state_field(&obj.functional, &eval).as_ref(), "reported shape")?;
    Ok((true, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_vertex() {
        let r = [0.0, 1.0, 2.0, 3.0];
        let f: Vec<f64> = r.iter().map(|x: &f64| (x - 1.3).powi(2)).collect();
        assert!((refine_minimum(&r, &f).unwrap() - 1.3).abs() < 1e-12);
        assert_eq!(refine_minimum(&r, &[0.0, 1.0, 2.0, 3.0]), None);
    }

    #[test]
    fn spectral_ball_minimiser() {
        let (p, r) = ball_profile(&FunctionalConfig::Spectral(vec![1.0])).unwrap();
        let r = r.unwrap();
        let d = (p(r + 1e-5) - p(r - 1e-5)) / 2e-5;
        assert!(d.abs() < 1e-6);
    }
}
