//! Level-set shape optimization of `P(Ω) + G(Ω) + μ||Ω| − m|` on uniform 2-D grids.

pub mod contour;
pub mod deform;
pub mod distance;
pub mod domain;
pub mod eigen;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod optimizer;
pub mod pde;
pub mod pullback;
pub mod shapes;
pub mod verify;

pub use deform::Deformation;
pub use eigen::EigenResult;
pub use error::{Error, Result};
pub use functionals::{BoxConstraint, Evaluation, FunctionalSpec, Objective, SourceKind, SourceTerm};
pub use grid::{GridSpec, LevelSetField, ScalarField};
pub use optimizer::{OptimizeResult, OptimizerConfig, TraceRecord};
pub use pde::DirichletOperator;
pub use shapes::Shape;
