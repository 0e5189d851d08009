//! Shape functionals and the penalised objective `J = P + G + μ||Ω| − m|`.

use crate::deform::Deformation;
use crate::domain::{perimeter, volume};
use crate::eigen::{eigenpairs_seeded, EigenResult, DEFAULT_SEED, MAX_EIGENPAIRS};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, LevelSetField, ScalarField};
use crate::pde::{energy_from_state, DirichletOperator, MIN_INTERIOR_NODES};
use crate::pullback::pulled_back_functional;
use crate::shapes::Shape;

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    Constant(f64),
    /// `amplitude * exp(-|x - center|² / (2 width²))`.
    Gaussian { center: [f64; 2], amplitude: f64, width: f64 },
    /// Gaussian multiplied by `sign(x₁ − center₁)`.
    Dipole { center: [f64; 2], amplitude: f64, width: f64 },
    Sampled(ScalarField),
}

/// Source `f` together with the Lebesgue exponent used to report `‖f‖_{L^p}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTerm {
    pub kind: SourceKind,
    pub exponent: f64,
}

impl SourceTerm {
    pub fn constant(c: f64) -> Self {
        Self { kind: SourceKind::Constant(c), exponent: f64::INFINITY }
    }

    pub fn new(kind: SourceKind, exponent: f64) -> Result<Self> {
        if !(exponent > 2.0) {
            return Err(Error::Precondition(format!("source exponent must exceed 2, got {exponent}")));
        }
        match &kind {
            SourceKind::Constant(c) if !c.is_finite() => {
                return Err(Error::Precondition("source constant must be finite".into()))
            }
            SourceKind::Gaussian { width, amplitude, .. } | SourceKind::Dipole { width, amplitude, .. }
                if !(*width > 0.0 && amplitude.is_finite()) =>
            {
                return Err(Error::Precondition("gaussian width must be positive".into()))
            }
            _ => {}
        }
        Ok(Self { kind, exponent })
    }

    pub fn value(&self, p: [f64; 2]) -> f64 {
        let gauss = |c: [f64; 2], a: f64, w: f64| {
            let r2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
            a * (-r2 / (2.0 * w * w)).exp()
        };
        match &self.kind {
            SourceKind::Constant(c) => *c,
            SourceKind::Gaussian { center, amplitude, width } => gauss(*center, *amplitude, *width),
            SourceKind::Dipole { center, amplitude, width } => {
                let s = p[0] - center[0];
                if s == 0.0 {
                    0.0
                } else {
                    s.signum() * gauss(*center, *amplitude, *width)
                }
            }
            SourceKind::Sampled(f) => f.interpolate(p),
        }
    }

    /// Nodal samples on `grid`.
    pub fn sample(&self, grid: &GridSpec) -> Result<ScalarField> {
        match &self.kind {
            SourceKind::Sampled(f) if f.grid() == grid => Ok(f.clone()),
            _ => ScalarField::from_fn(*grid, |p| self.value(p)),
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            SourceKind::Constant(c) => *c == 0.0,
            SourceKind::Gaussian { amplitude, .. } | SourceKind::Dipole { amplitude, .. } => *amplitude == 0.0,
            SourceKind::Sampled(f) => f.values().iter().all(|&v| v == 0.0),
        }
    }

    /// `‖f‖_{L^p}` over the grid by nodal quadrature.
    pub fn lp_norm(&self, grid: &GridSpec) -> Result<f64> {
        let f = self.sample(grid)?;
        Ok(lp_norm(f.values(), grid.h, self.exponent))
    }
}

pub fn lp_norm(values: &[f64], h: f64, p: f64) -> f64 {
    if p.is_infinite() {
        values.iter().fold(0.0, |m, v| m.max(v.abs()))
    } else {
        (values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * h * h).powf(1.0 / p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalSpec {
    /// `G = Ẽ_f`.
    Energy(SourceTerm),
    /// `G = Σ cᵢ λᵢ`.
    Spectral(Vec<f64>),
}

impl FunctionalSpec {
    pub fn perimeter_only() -> Self {
        FunctionalSpec::Energy(SourceTerm::constant(0.0))
    }

    pub fn validate(&self) -> Result<()> {
        if let FunctionalSpec::Spectral(c) = self {
            if c.is_empty() || c.len() > MAX_EIGENPAIRS {
                return Err(Error::Precondition(format!("spectral weights: need 1..={MAX_EIGENPAIRS} entries")));
            }
            if c.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::Precondition("spectral weights must be nonnegative".into()));
            }
            if !(c[c.len() - 1] > 0.0) {
                return Err(Error::Precondition("the last spectral weight must be positive".into()));
            }
        }
        Ok(())
    }

    /// Number of eigenpairs needed.
    pub fn eigen_count(&self) -> usize {
        match self {
            FunctionalSpec::Spectral(c) => c.len(),
            FunctionalSpec::Energy(_) => 0,
        }
    }

    /// Holder exponent of Lemma-type comparison with the torsion energy.
    pub fn beta(&self) -> f64 {
        match self {
            FunctionalSpec::Energy(f) => 1.0 - 1.0 / f.exponent,
            FunctionalSpec::Spectral(_) => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoxConstraint {
    Free,
    Rectangle { min: [f64; 2], max: [f64; 2] },
    /// Admissible nodes, one flag per grid node.
    Mask(Vec<bool>),
}

impl BoxConstraint {
    pub fn admissible(&self, grid: &GridSpec) -> Result<Vec<bool>> {
        match self {
            BoxConstraint::Free => Ok(vec![true; grid.len()]),
            BoxConstraint::Rectangle { min, max } => Ok((0..grid.len())
                .map(|k| {
                    let (i, j) = grid.ij(k);
                    let p = grid.point(i, j);
                    p[0] >= min[0] && p[0] <= max[0] && p[1] >= min[1] && p[1] <= max[1]
                })
                .collect()),
            BoxConstraint::Mask(m) => {
                if m.len() != grid.len() {
                    return Err(Error::GridMismatch);
                }
                Ok(m.clone())
            }
        }
    }

    /// Area of the admissible region.
    pub fn admissible_volume(&self, grid: &GridSpec) -> Result<f64> {
        match self {
            BoxConstraint::Free => Ok(f64::INFINITY),
            BoxConstraint::Rectangle { min, max } => Ok((max[0] - min[0]).max(0.0) * (max[1] - min[1]).max(0.0)),
            BoxConstraint::Mask(_) => {
                Ok(self.admissible(grid)?.iter().filter(|&&a| a).count() as f64 * grid.h * grid.h)
            }
        }
    }

    /// Level set of the admissible region, or `None` when free.
    pub fn field(&self, grid: &GridSpec) -> Result<Option<LevelSetField>> {
        match self {
            BoxConstraint::Free => Ok(None),
            BoxConstraint::Rectangle { min, max } => Ok(Some(Shape::rectangle(*min, *max).rasterize(grid)?)),
            BoxConstraint::Mask(_) => {
                let a = self.admissible(grid)?;
                let phi = a.iter().map(|&ok| if ok { grid.h } else { -grid.h }).collect();
                Ok(Some(crate::distance::redistance(&LevelSetField::new(*grid, phi)?)))
            }
        }
    }

    /// Fails with the list of interior nodes outside the admissible region.
    pub fn check(&self, set: &LevelSetField) -> Result<()> {
        if matches!(self, BoxConstraint::Free) {
            return Ok(());
        }
        let a = self.admissible(set.grid())?;
        let bad: Vec<usize> = (0..a.len()).filter(|&k| set.inside(k) && !a[k]).collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::ConstraintViolation { nodes: bad })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub functional: FunctionalSpec,
    pub target_volume: f64,
    pub penalty: f64,
    pub constraint: BoxConstraint,
}

impl Objective {
    pub fn new(functional: FunctionalSpec, target_volume: f64, penalty: f64) -> Result<Self> {
        functional.validate()?;
        if !(target_volume > 0.0 && target_volume.is_finite()) {
            return Err(Error::Precondition(format!("target volume must be positive, got {target_volume}")));
        }
        if !(penalty >= 0.0 && penalty.is_finite()) {
            return Err(Error::Precondition(format!("penalty must be nonnegative, got {penalty}")));
        }
        Ok(Self { functional, target_volume, penalty, constraint: BoxConstraint::Free })
    }

    pub fn with_constraint(mut self, grid: &GridSpec, constraint: BoxConstraint) -> Result<Self> {
        let v = constraint.admissible_volume(grid)?;
        if !(v > self.target_volume) {
            return Err(Error::Precondition(format!(
                "admissible volume {v} does not exceed the target {}",
                self.target_volume
            )));
        }
        self.constraint = constraint;
        Ok(self)
    }

    pub fn with_penalty(&self, penalty: f64) -> Self {
        Self { penalty, ..self.clone() }
    }
}

/// PDE state behind `G`, reused for shape derivatives.
#[derive(Debug, Clone)]
pub enum State {
    None,
    Energy { source: ScalarField, w: ScalarField },
    Spectral(EigenResult),
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub j: f64,
    pub perimeter: f64,
    pub g: f64,
    pub volume: f64,
    pub penalty: f64,
    pub state: State,
}

/// The value of `G` alone.
pub fn functional_value(spec: &FunctionalSpec, set: &LevelSetField) -> Result<(f64, State)> {
    functional_value_seeded(spec, set, DEFAULT_SEED)
}

pub fn functional_value_seeded(spec: &FunctionalSpec, set: &LevelSetField, seed: u64) -> Result<(f64, State)> {
    match spec {
        FunctionalSpec::Energy(f) => {
            if f.is_zero() || set.is_empty_set() {
                return Ok((0.0, State::None));
            }
            let source = f.sample(set.grid())?;
            let op = DirichletOperator::assemble(set)?;
            let w = op.extend(&op.solve(&op.restrict(source.values()))?);
            Ok((energy_from_state(&source, &w), State::Energy { source, w }))
        }
        FunctionalSpec::Spectral(c) => {
            if set.interior_count() < MIN_INTERIOR_NODES {
                return Ok((f64::INFINITY, State::None));
            }
            let op = DirichletOperator::assemble(set)?;
            let r = eigenpairs_seeded(&op, c.len(), seed)?;
            let g = c.iter().zip(&r.values).map(|(a, b)| a * b).sum();
            Ok((g, State::Spectral(r)))
        }
    }
}

/// `J = P + G + μ||Ω| − m|` with its components.
pub fn evaluate(obj: &Objective, set: &LevelSetField) -> Result<Evaluation> {
    evaluate_seeded(obj, set, DEFAULT_SEED)
}

pub fn evaluate_seeded(obj: &Objective, set: &LevelSetField, seed: u64) -> Result<Evaluation> {
    obj.constraint.check(set)?;
    let p = perimeter(set)?;
    let vol = volume(set);
    let (g, state) = functional_value_seeded(&obj.functional, set, seed)?;
    let penalty = obj.penalty * (vol - obj.target_volume).abs();
    Ok(Evaluation { j: p + g + penalty, perimeter: p, g, volume: vol, penalty, state })
}

/// Comparison of `G` with the torsion energy on a nested pair `U ⊂ Ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderMargin {
    pub delta_g: f64,
    pub delta_e1: f64,
    pub ratio: f64,
    pub beta: f64,
}

pub fn torsion_energy(set: &LevelSetField) -> Result<f64> {
    functional_value(&FunctionalSpec::Energy(SourceTerm::constant(1.0)), set).map(|r| r.0)
}

pub fn gamma_holder_margin(obj: &Objective, omega: &LevelSetField, u: &LevelSetField) -> Result<HolderMargin> {
    if !u.is_subset_of(omega) {
        return Err(Error::Precondition("U is not contained in Ω".into()));
    }
    let (g_o, _) = functional_value(&obj.functional, omega)?;
    let (g_u, _) = functional_value(&obj.functional, u)?;
    let delta_g = g_u - g_o;
    let delta_e1 = torsion_energy(u)? - torsion_energy(omega)?;
    let beta = obj.functional.beta();
    let ratio = if delta_e1 > 0.0 { delta_g / delta_e1.powf(beta) } else { 0.0 };
    Ok(HolderMargin { delta_g, delta_e1, ratio, beta })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    pub delta_g: f64,
    pub norm: f64,
}

/// `G(Φ(Ω)) − G(Ω)` and `‖Φ − Id‖_{1,∞}`.
///
/// `G(Φ(Ω))` is computed by the change of variables `x ↦ Φ(x)` on the nodes
/// of `Ω` (see [`crate::pullback`]), so the difference varies smoothly with
/// the amplitude instead of jumping whenever a node changes sides.
pub fn deformation_sensitivity(obj: &Objective, set: &LevelSetField, d: &Deformation) -> Result<Sensitivity> {
    let (g0, _) = functional_value(&obj.functional, set)?;
    let g1 = if d.amplitude() == 0.0 { g0 } else { pulled_back_functional(&obj.functional, set, d)? };
    Ok(Sensitivity { delta_g: g1 - g0, norm: d.norm_1_inf() })
}
