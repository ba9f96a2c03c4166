//! Mixed finite elements and method-of-lines solvers for the heat, wave
//! (velocity-stress) and semi-linear heat equations on 2D simplicial meshes,
//! with a convergence harness measuring Bochner-norm errors against
//! manufactured solutions.

pub mod analysis;
pub mod assembly;
pub mod elements;
pub mod expr;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod solvers;
pub mod study;

pub use assembly::{AssemblyError, LoadAssembler, MixedOperator};
pub use elements::{ElementError, ElementFamily, FESpace, Family, FormOrder};
pub use mesh::{MeshError, SimplicialMesh, TriangleGeometry};
pub use solvers::{NonlinearTerm, ProblemKind, SaddleSolver, Scheme, SolverError, Trajectory};
pub use analysis::{AnalysisError, BochnerError, ConvergenceReport, Eoc, ManufacturedSolution, Problem};
pub use study::{run_study, DtRule, ElementPair, LevelRange, StudyConfig, StudyError};
