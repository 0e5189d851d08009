//! Level-set descent for `J(Ω) = P(Ω) + G(Ω) + μ||Ω| − m|`.
//!
//! Each iteration computes the Hadamard shape gradient on the contour, smooths
//! it along the boundary, extends it to a narrow band and transports `phi` with
//! an upwind Hamilton–Jacobi scheme. Steps are accepted by backtracking on `J`.
//!
//! Sign convention: `phi > 0` inside, so a boundary moving with outward normal
//! speed `V` solves `phi_t = V |grad phi|`.

use std::time::Instant;

use crate::contour;
use crate::distance::redistance;
use crate::domain::{representative, sample_curvature, CurvatureSample};
use crate::error::{Error, Result};
use crate::functionals::{evaluate_seeded, Evaluation, FunctionalSpec, Objective, State};
use crate::grid::{GridSpec, LevelSetField, ScalarField};

/// Largest substep fraction `dt max|V| / h` accepted by [`advect`].
pub const ADVECT_CFL_LIMIT: f64 = 0.5;
/// Half-width of the window around `m` where the penalty sign is interpolated.
pub const PENALTY_SMOOTHING: f64 = 0.002;
const BAND_CELLS: f64 = 8.0;
/// Smoothing length, in cells, applied to the shape density before it enters `V`.
const DENSITY_SMOOTHING_CELLS: f64 = 5.0;
const MAX_MOVE_CELLS: f64 = 3.0;
const MAX_BACKTRACKS: usize = 8;
const ACCEPT_SLACK: f64 = 1e-12;
const STEP_GROWTH: f64 = 1.5;
const VOLUME_TOLERANCE: f64 = 0.01;
const STAGNATION_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Substep CFL fraction, also the size of the first step.
    pub cfl: f64,
    pub mu_initial: f64,
    pub mu_growth: f64,
    pub mu_cap: f64,
    /// Accepted steps between redistancing passes.
    pub redistance_interval: usize,
    /// Stop when `|ΔJ|/|J|` stays below this for `patience` iterations.
    pub tolerance: f64,
    pub patience: usize,
    /// Smoothing length along the contour, in cells.
    pub smoothing_cells: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 400,
            cfl: 0.45,
            mu_initial: 2.0,
            mu_growth: 1.5,
            mu_cap: 1e3,
            redistance_interval: 4,
            tolerance: 1e-5,
            patience: 3,
            smoothing_cells: 4.0,
            seed: crate::eigen::DEFAULT_SEED,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Precondition(m.to_string()));
        if self.max_iters == 0 || self.redistance_interval == 0 || self.patience == 0 {
            return bad("iteration counts must be positive");
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.45) {
            return bad("cfl fraction must lie in (0, 0.45]");
        }
        if !(self.mu_initial > 0.0 && self.mu_growth >= 1.0 && self.mu_cap >= self.mu_initial) {
            return bad("penalty schedule must be positive and nondecreasing");
        }
        if !(self.tolerance > 0.0 && self.smoothing_cells >= 0.0) {
            return bad("tolerance must be positive");
        }
        Ok(())
    }
}

/// One row of the optimization trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub j: f64,
    pub perimeter: f64,
    pub g: f64,
    pub volume: f64,
    pub penalty: f64,
    pub mu: f64,
    pub step: f64,
    pub backtracks: usize,
    /// Weighted spread of `H + g` along the boundary (zero at a critical point).
    pub bc_residual: f64,
    pub elapsed: f64,
}

impl TraceRecord {
    pub const CSV_HEADER: &'static str = "iteration,j,perimeter,g,volume,penalty,mu,step,backtracks,bc_residual,elapsed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.6e},{:.6e},{},{:.6e},{:.3}",
            self.iteration,
            self.j,
            self.perimeter,
            self.g,
            self.volume,
            self.penalty,
            self.mu,
            self.step,
            self.backtracks,
            self.bc_residual,
            self.elapsed
        )
    }
}

/// Velocity on one contour segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocitySample {
    pub point: [f64; 2],
    pub normal: [f64; 2],
    pub curvature: f64,
    /// Shape-gradient density of `G`.
    pub g: f64,
    /// Outward normal speed.
    pub speed: f64,
    pub weight: f64,
    pub segment: usize,
}

/// Penalty term `μ sign(|Ω| − m)` of the velocity.
///
/// Within the smoothing window it is replaced by the multiplier estimate
/// `multiplier` plus a linear restoring term, clipped to `[−μ, μ]`. The
/// resulting velocity is a descent direction for the exact penalty whenever
/// `|multiplier| ≤ μ`.
pub fn signed_penalty(mu: f64, volume: f64, target: f64, multiplier: f64) -> f64 {
    let x = (volume - target) / (PENALTY_SMOOTHING * target);
    if x.abs() > 1.0 {
        mu * x.signum()
    } else {
        (multiplier + mu * x).clamp(-mu, mu)
    }
}

fn normal_derivative(grid: &GridSpec, u: &[f64], p: [f64; 2], n: [f64; 2]) -> f64 {
    let h = grid.h;
    let at = |s: f64| grid.interpolate(u, [p[0] - s * n[0], p[1] - s * n[1]]);
    // Sample points stay far enough inside that no bilinear stencil touches
    // an exterior node, where the discrete solution is clamped to zero.
    let (w1, w2, w3) = (at(1.5 * h), at(2.5 * h), at(3.5 * h));
    let s1 = (w2 - w1) / h;
    let s2 = (w3 - w2) / h;
    // Slopes at 2h and 3h extrapolated to the boundary.
    3.0 * s1 - 2.0 * s2
}

fn shape_density(spec: &FunctionalSpec, state: &State, grid: &GridSpec, s: &CurvatureSample) -> f64 {
    match (spec, state) {
        (FunctionalSpec::Energy(_), State::Energy { w, .. }) => {
            let d = normal_derivative(grid, w.values(), s.point, s.normal);
            -0.5 * d * d
        }
        (FunctionalSpec::Spectral(c), State::Spectral(r)) => {
            let dens: Vec<f64> = r
                .vectors
                .iter()
                .map(|u| normal_derivative(grid, u.values(), s.point, s.normal).powi(2))
                .collect();
            let mut g = 0.0;
            for (i, &ci) in c.iter().enumerate() {
                if ci == 0.0 {
                    continue;
                }
                let cl = r.cluster_of(i);
                let avg: f64 = dens[cl.clone()].iter().sum::<f64>() / cl.len() as f64;
                g -= ci * avg;
            }
            g
        }
        _ => 0.0,
    }
}

/// Unsmoothed boundary velocity `V = −(H + g + μ_s)` from a completed evaluation.
pub fn boundary_velocity_from(obj: &Objective, set: &LevelSetField, eval: &Evaluation) -> Result<Vec<VelocitySample>> {
    let samples = sample_curvature(set)?;
    let grid = set.grid();
    let mut out: Vec<VelocitySample> = samples
        .iter()
        .map(|s| {
            let g = shape_density(&obj.functional, &eval.state, grid, s);
            VelocitySample {
                point: s.point,
                normal: s.normal,
                curvature: s.curvature,
                g,
                speed: -(s.curvature + g),
                weight: s.weight,
                segment: s.segment,
            }
        })
        .collect();
    if !matches!(eval.state, State::None) {
        let mut g: Vec<f64> = out.iter().map(|s| s.g).collect();
        smooth_values(set, &out, &mut g, DENSITY_SMOOTHING_CELLS * grid.h);
        for (s, g) in out.iter_mut().zip(g) {
            s.g = g;
            s.speed = -(s.curvature + g);
        }
    }
    let wsum: f64 = out.iter().map(|s| s.weight).sum();
    let multiplier = if wsum > 0.0 { out.iter().map(|s| s.weight * s.speed).sum::<f64>() / wsum } else { 0.0 };
    let mu_s = signed_penalty(obj.penalty, eval.volume, obj.target_volume, multiplier);
    for s in &mut out {
        s.speed -= mu_s;
    }
    Ok(out)
}

/// Boundary velocity of `obj` on `set`; a degenerate gradient triggers one redistance.
pub fn boundary_velocity(obj: &Objective, set: &LevelSetField) -> Result<Vec<VelocitySample>> {
    let eval = crate::functionals::evaluate(obj, set)?;
    match boundary_velocity_from(obj, set, &eval) {
        Err(Error::DegenerateGradient { .. }) => {
            let fixed = redistance(set);
            let eval = crate::functionals::evaluate(obj, &fixed)?;
            boundary_velocity_from(obj, &fixed, &eval)
        }
        other => other,
    }
}

/// Weighted spread of `H + g` about its mean.
fn bc_residual(samples: &[VelocitySample]) -> f64 {
    let wsum: f64 = samples.iter().map(|s| s.weight).sum();
    if wsum == 0.0 {
        return 0.0;
    }
    let mean = samples.iter().map(|s| s.weight * (s.curvature + s.g)).sum::<f64>() / wsum;
    (samples.iter().map(|s| s.weight * (s.curvature + s.g - mean).powi(2)).sum::<f64>() / wsum).sqrt()
}

fn thomas(a: &[f64], b: &[f64], c: &[f64], r: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut beta = b[0];
    x[0] = r[0] / beta;
    for i in 1..n {
        cp[i] = c[i - 1] / beta;
        beta = b[i] - a[i] * cp[i];
        x[i] = (r[i] - a[i] * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        x[i] -= cp[i + 1] * x[i + 1];
    }
    x
}

/// Tridiagonal solve with corner couplings `a[0]` (row 0, col n−1) and `c[n−1]` (row n−1, col 0).
fn cyclic_thomas(a: &[f64], b: &[f64], c: &[f64], r: &[f64]) -> Vec<f64> {
    let n = b.len();
    let (beta, alpha) = (a[0], c[n - 1]);
    let gamma = -b[0];
    let mut bb = b.to_vec();
    bb[0] = b[0] - gamma;
    bb[n - 1] = b[n - 1] - alpha * beta / gamma;
    let mut x = thomas(a, &bb, c, r);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = thomas(a, &bb, c, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    for (xi, zi) in x.iter_mut().zip(&z) {
        *xi -= fact * zi;
    }
    x
}

/// Solves `(I − α ∂ss) Ṽ = V` along every contour chain.
pub fn smooth_along_contour(set: &LevelSetField, samples: &mut [VelocitySample], length: f64) {
    let mut v: Vec<f64> = samples.iter().map(|s| s.speed).collect();
    smooth_values(set, samples, &mut v, length);
    for (s, x) in samples.iter_mut().zip(v) {
        s.speed = x;
    }
}

/// Per-sample `values` smoothed with `(I − α ∂ss)^{-1}`, `α = length²`.
fn smooth_values(set: &LevelSetField, samples: &[VelocitySample], values: &mut [f64], length: f64) {
    if length <= 0.0 || samples.is_empty() {
        return;
    }
    let alpha = length * length;
    let c = contour::extract(set.grid(), set.values());
    let mut by_segment = vec![usize::MAX; c.segments.len()];
    for (k, s) in samples.iter().enumerate() {
        by_segment[s.segment] = k;
    }
    let floor = 1e-3 * set.grid().h;
    for chain in &c.chains {
        let ids: Vec<usize> = chain.segments.iter().map(|&s| by_segment[s]).filter(|&k| k != usize::MAX).collect();
        let n = ids.len();
        if n < 3 {
            continue;
        }
        let pts: Vec<[f64; 2]> = ids.iter().map(|&k| samples[k].point).collect();
        let gap = |i: usize, j: usize| ((pts[j][0] - pts[i][0]).hypot(pts[j][1] - pts[i][1])).max(floor);
        let closed = chain.closed;
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut cc = vec![0.0; n];
        let mut r = vec![0.0; n];
        for i in 0..n {
            let prev = if i > 0 { Some(i - 1) } else if closed { Some(n - 1) } else { None };
            let next = if i + 1 < n { Some(i + 1) } else if closed { Some(0) } else { None };
            let dm = prev.map(|p| gap(p, i));
            let dp = next.map(|q| gap(i, q));
            let w = 0.5 * (dm.unwrap_or(0.0) + dp.unwrap_or(0.0));
            b[i] = w;
            if let Some(d) = dm {
                a[i] = -alpha / d;
                b[i] += alpha / d;
            }
            if let Some(d) = dp {
                cc[i] = -alpha / d;
                b[i] += alpha / d;
            }
            r[i] = w * values[ids[i]];
        }
        let v = if closed { cyclic_thomas(&a, &b, &cc, &r) } else { thomas(&a, &b, &cc, &r) };
        for (i, &k) in ids.iter().enumerate() {
            values[k] = v[i];
        }
    }
}

/// Nodal speed in a band of `BAND_CELLS` cells, taken from the nearest sample.
pub fn extend_velocity(set: &LevelSetField, samples: &[VelocitySample]) -> ScalarField {
    let g = *set.grid();
    let band = BAND_CELLS * g.h;
    let cell = band;
    // Bucket samples on a coarse grid of `band`-sized cells.
    let bx = ((g.nx as f64 * g.h) / cell).ceil() as usize + 1;
    let by = ((g.ny as f64 * g.h) / cell).ceil() as usize + 1;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); bx * by];
    let key = |p: [f64; 2]| {
        let x = (((p[0] - g.origin[0]) / cell).floor().max(0.0) as usize).min(bx - 1);
        let y = (((p[1] - g.origin[1]) / cell).floor().max(0.0) as usize).min(by - 1);
        (x, y)
    };
    for (k, s) in samples.iter().enumerate() {
        let (x, y) = key(s.point);
        buckets[y * bx + x].push(k);
    }
    let mut out = vec![0.0; g.len()];
    for (idx, v) in out.iter_mut().enumerate() {
        if set.values()[idx].abs() > band {
            continue;
        }
        let (i, j) = g.ij(idx);
        let p = g.point(i, j);
        let (x, y) = key(p);
        let mut best = (f64::INFINITY, 0.0);
        for yy in y.saturating_sub(1)..=(y + 1).min(by - 1) {
            for xx in x.saturating_sub(1)..=(x + 1).min(bx - 1) {
                for &k in &buckets[yy * bx + xx] {
                    let s = &samples[k];
                    let d = (s.point[0] - p[0]).powi(2) + (s.point[1] - p[1]).powi(2);
                    if d < best.0 {
                        best = (d, s.speed);
                    }
                }
            }
        }
        if best.0.sqrt() <= band {
            *v = best.1;
        }
    }
    ScalarField::new(g, out).expect("finite speeds")
}

/// One upwind step of `phi_t = V |grad phi|` (no redistancing).
pub fn advect(set: &LevelSetField, speed: &ScalarField, dt: f64) -> Result<LevelSetField> {
    if set.grid() != speed.grid() {
        return Err(Error::GridMismatch);
    }
    let g = set.grid();
    let vmax = speed.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if vmax == 0.0 || dt == 0.0 {
        return Ok(set.clone());
    }
    let limit = ADVECT_CFL_LIMIT * g.h / vmax;
    if !(dt >= 0.0 && dt <= limit * (1.0 + 1e-12)) {
        return Err(Error::CflViolation { dt, limit });
    }
    let phi = set.values();
    let v = speed.values();
    let h = g.h;
    let mut out = phi.to_vec();
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let k = g.index(i, j);
            if v[k] == 0.0 {
                continue;
            }
            // phi_t + F |grad phi| = 0 with F = -V.
            let f = -v[k];
            let dxm = (phi[k] - phi[k - 1]) / h;
            let dxp = (phi[k + 1] - phi[k]) / h;
            let dym = (phi[k] - phi[k - g.nx]) / h;
            let dyp = (phi[k + g.nx] - phi[k]) / h;
            let grad = if f > 0.0 {
                (dxm.max(0.0).powi(2) + dxp.min(0.0).powi(2) + dym.max(0.0).powi(2) + dyp.min(0.0).powi(2)).sqrt()
            } else {
                (dxm.min(0.0).powi(2) + dxp.max(0.0).powi(2) + dym.min(0.0).powi(2) + dyp.max(0.0).powi(2)).sqrt()
            };
            out[k] = phi[k] - dt * f * grad;
        }
    }
    LevelSetField::new(*g, out)
}

/// Transports `set` with frozen nodal speed for time `tau` in CFL-limited substeps.
pub fn evolve(set: &LevelSetField, speed: &ScalarField, tau: f64, cfl: f64) -> Result<LevelSetField> {
    let h = set.grid().h;
    let vmax = speed.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if vmax == 0.0 || tau == 0.0 {
        return Ok(set.clone());
    }
    let n = (tau * vmax / (cfl * h)).ceil().max(1.0) as usize;
    let dt = tau / n as f64;
    let mut cur = set.clone();
    for _ in 0..n {
        cur = advect(&cur, speed, dt)?;
    }
    Ok(cur)
}

/// Resumable optimizer state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub iteration: usize,
    pub mu: f64,
    pub step: f64,
    pub set: LevelSetField,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub set: LevelSetField,
    pub evaluation: Evaluation,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
    pub iterations: usize,
    pub mu: f64,
}

fn apply_box(set: LevelSetField, box_field: Option<&LevelSetField>) -> Result<LevelSetField> {
    match box_field {
        None => Ok(set),
        Some(b) => {
            let v: Vec<f64> = set.values().iter().zip(b.values()).map(|(a, c)| a.min(*c)).collect();
            if v == set.values() {
                Ok(set)
            } else {
                Ok(redistance(&LevelSetField::new(*set.grid(), v)?))
            }
        }
    }
}

fn volume_error(obj: &Objective, volume: f64) -> f64 {
    (volume - obj.target_volume).abs() / obj.target_volume
}

/// Minimizes `obj` from `initial`.
pub fn minimize(obj: &Objective, initial: &LevelSetField, config: &OptimizerConfig) -> Result<OptimizeResult> {
    let start = Checkpoint { iteration: 0, mu: config.mu_initial.max(obj.penalty), step: 0.0, set: initial.clone() };
    minimize_from(obj, start, config, &mut |_| {})
}

/// Minimizes from a checkpoint, reporting the state after every accepted step.
pub fn minimize_from(
    obj: &Objective,
    start: Checkpoint,
    config: &OptimizerConfig,
    observer: &mut dyn FnMut(&Checkpoint),
) -> Result<OptimizeResult> {
    config.validate()?;
    let clock = Instant::now();
    let grid = *start.set.grid();
    let h = grid.h;
    let initial_volume = crate::domain::volume(&start.set);
    if !(initial_volume >= obj.target_volume / 4.0 && initial_volume <= obj.target_volume * 4.0) {
        return Err(Error::Precondition(format!(
            "initial volume {initial_volume} is not within a factor 4 of the target {}",
            obj.target_volume
        )));
    }
    let box_field = obj.constraint.field(&grid)?;
    let mut mu = start.mu;
    let mut current = obj.with_penalty(mu);
    let mut set = representative(&redistance(&start.set));
    let mut eval = evaluate_seeded(&current, &set, config.seed)?;
    let mut step = start.step;
    let mut trace = Vec::new();
    let mut best: Option<(LevelSetField, Evaluation)> = None;
    let mut quiet = 0usize;
    let mut converged = false;
    let mut vol_history: Vec<f64> = Vec::new();
    let mut iteration = start.iteration;

    while iteration < config.max_iters {
        iteration += 1;
        let mut samples = match boundary_velocity_from(&current, &set, &eval) {
            Err(Error::DegenerateGradient { .. }) => {
                set = redistance(&set);
                eval = evaluate_seeded(&current, &set, config.seed)?;
                boundary_velocity_from(&current, &set, &eval)?
            }
            other => other?,
        };
        let residual = bc_residual(&samples);
        smooth_along_contour(&set, &mut samples, config.smoothing_cells * h);
        let speed = extend_velocity(&set, &samples);
        let vmax = speed.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if vmax == 0.0 {
            converged = volume_error(obj, eval.volume) <= VOLUME_TOLERANCE;
            break;
        }
        if step == 0.0 {
            step = config.cfl * h / vmax;
        }
        step = step.min(MAX_MOVE_CELLS * h / vmax);

        let mut accepted = None;
        let mut backtracks = 0;
        while backtracks <= MAX_BACKTRACKS {
            let trial = evolve(&set, &speed, step, config.cfl)
                .and_then(|t| apply_box(t, box_field.as_ref()))
                .map(|t| representative(&t));
            if let Ok(t) = trial {
                if let Ok(e) = evaluate_seeded(&current, &t, config.seed) {
                    if e.j <= eval.j + ACCEPT_SLACK {
                        accepted = Some((t, e));
                        break;
                    }
                }
            }
            step *= 0.5;
            backtracks += 1;
        }
        let Some((new_set, new_eval)) = accepted else {
            log::debug!("iteration {iteration}: line search exhausted");
            converged = volume_error(obj, eval.volume) <= VOLUME_TOLERANCE;
            trace.push(record(iteration, &eval, mu, step, MAX_BACKTRACKS + 1, residual, &clock));
            break;
        };
        let change = (new_eval.j - eval.j).abs() / eval.j.abs().max(f64::MIN_POSITIVE);
        set = new_set;
        eval = new_eval;
        trace.push(record(iteration, &eval, mu, step, backtracks, residual, &clock));
        log::debug!(
            "iteration {iteration}: J = {:.8} P = {:.6} G = {:.6} |Ω| = {:.6} step = {:.3e}",
            eval.j,
            eval.perimeter,
            eval.g,
            eval.volume,
            step
        );
        let verr = volume_error(obj, eval.volume);
        if verr <= VOLUME_TOLERANCE && best.as_ref().map_or(true, |(_, b)| eval.j < b.j) {
            best = Some((set.clone(), eval.clone()));
        }
        if backtracks == 0 {
            step *= STEP_GROWTH;
        }
        // Redistancing moves the contour slightly, so it resets the baseline
        // instead of counting as a step.
        if iteration % config.redistance_interval == 0 {
            set = redistance(&set);
            eval = evaluate_seeded(&current, &set, config.seed)?;
        }

        // Penalty ramp when the volume error stagnates above tolerance.
        vol_history.push(verr);
        if verr > VOLUME_TOLERANCE && vol_history.len() > STAGNATION_WINDOW {
            let past = vol_history[vol_history.len() - 1 - STAGNATION_WINDOW];
            if verr > 0.9 * past && mu < config.mu_cap {
                mu = (mu * config.mu_growth).min(config.mu_cap);
                current = obj.with_penalty(mu);
                eval.penalty = mu * (eval.volume - obj.target_volume).abs();
                eval.j = eval.perimeter + eval.g + eval.penalty;
                best = None;
                vol_history.clear();
                quiet = 0;
                log::debug!("iteration {iteration}: penalty raised to {mu}");
            }
        }

        observer(&Checkpoint { iteration, mu, step, set: set.clone() });
        if change < config.tolerance && verr <= VOLUME_TOLERANCE {
            quiet += 1;
            if quiet >= config.patience {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    let (set, evaluation) = match best {
        Some((s, e)) if !converged && e.j < eval.j => (s, e),
        _ => (set, eval),
    };
    Ok(OptimizeResult { set, evaluation, trace, converged, iterations: iteration, mu })
}

fn record(
    iteration: usize,
    e: &Evaluation,
    mu: f64,
    step: f64,
    backtracks: usize,
    bc_residual: f64,
    clock: &Instant,
) -> TraceRecord {
    TraceRecord {
        iteration,
        j: e.j,
        perimeter: e.perimeter,
        g: e.g,
        volume: e.volume,
        penalty: e.penalty,
        mu,
        step,
        backtracks,
        bc_residual,
        elapsed: clock.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::Shape;

    #[test]
    fn cyclic_solver_matches_dense() {
        let n = 7;
        let a: Vec<f64> = (0..n).map(|i| -1.0 - 0.1 * i as f64).collect();
        let c: Vec<f64> = (0..n).map(|i| -0.5 - 0.05 * i as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| 4.0 + i as f64).collect();
        let x0: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut r = vec![0.0; n];
        for i in 0..n {
            r[i] = b[i] * x0[i] + a[i] * x0[(i + n - 1) % n] + c[i] * x0[(i + 1) % n];
        }
        let x = cyclic_thomas(&a, &b, &c, &r);
        for (p, q) in x.iter().zip(&x0) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_speed_leaves_set() {
        let g = GridSpec::centered([0.0, 0.0], 1.2, 1.0 / 32.0).unwrap();
        let s = Shape::disk([0.0, 0.0], 0.6).rasterize(&g).unwrap();
        assert_eq!(advect(&s, &ScalarField::zeros(g), 0.01).unwrap(), s);
    }

    #[test]
    fn cfl_is_enforced() {
        let g = GridSpec::centered([0.0, 0.0], 1.2, 1.0 / 32.0).unwrap();
        let s = Shape::disk([0.0, 0.0], 0.6).rasterize(&g).unwrap();
        let v = ScalarField::from_fn(g, |_| 1.0).unwrap();
        assert!(matches!(advect(&s, &v, g.h), Err(Error::CflViolation { .. })));
    }

    #[test]
    fn penalty_sign_is_interpolated() {
        assert_eq!(signed_penalty(2.0, 1.1, 1.0, 0.5), 2.0);
        assert_eq!(signed_penalty(2.0, 0.9, 1.0, 0.5), -2.0);
        assert!((signed_penalty(2.0, 1.001, 1.0, 0.0) - 1.0).abs() < 1e-9);
        assert!((signed_penalty(2.0, 1.001, 1.0, 0.5) - 1.5).abs() < 1e-9);
        assert_eq!(signed_penalty(0.0, 1.001, 1.0, 0.5), 0.0);
    }
}
