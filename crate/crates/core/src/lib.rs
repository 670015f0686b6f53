//! Variable-step L1 time stepping for the time-fractional Allen-Cahn equation
//! on a doubly periodic square, together with the discrete convolution
//! kernels (L1, DOC, DCC) that drive the scheme and its energy analysis.

pub mod config;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod mesh;
pub mod model;
pub mod special;
pub mod stepper;

pub use config::{
    CoarsenConfig, ConfigFile, ConvergeConfig, ExperimentConfig, KernelsConfig, Mode, Reference,
};
pub use energy::{
    chemical_potential, dissipation_check, free_energy, variational_energy, DissipationReport,
    EnergyRecord,
};
pub use error::{Error, Result};
pub use experiments::{
    run_coarsen, run_converge, run_kernel_fuzz, CoarsenOutcome, ConvergenceStudy,
    ConvergenceTable, KernelFuzzReport, Trajectory,
};
pub use grid::{Field, Grid2D, HelmholtzSolver, LpNorm};
pub use io::{read_snapshot, write_snapshot, ConvergenceRow};
pub use kernels::{
    l1_row, DccRow, DocRow, IdentityResiduals, KernelWorkspace, L1Row, PropertyReport,
};
pub use mesh::{solvability_cap, AdaptiveConfig, AgReport, CompositeSplit, TimeMesh};
pub use model::{Forcing, ManufacturedCase, ManufacturedForcing, ModelParams};
pub use special::{gamma, omega};
pub use stepper::{
    backward_euler, history_sum_into, solve_implicit, Acceleration, CapPolicy, MonitorReport, SolveStats,
    SolverOptions, StepRecord, Stepper,
};
