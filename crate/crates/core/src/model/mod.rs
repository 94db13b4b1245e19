//! Biological inputs: fitness functions, mutation kernels and the singular set.

mod fitness;
mod kernel;
mod singular;

pub use fitness::{check_fitness_axioms, AxiomReport, DerivMode, Fitness, FitnessModel, FD_STEP};
pub use kernel::{chi_moment, kernel_moment, DensityFn, KernelKind, MutationKernel, MOMENT_TOL};
pub use singular::{
    find_singularities, AxisBox, SingularitySet, DEFAULT_MERGE_RADIUS, ROOT_RESIDUAL_TOL,
};
