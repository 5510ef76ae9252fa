//! Control allocation for rigid bodies actuated by vectorized (orientable)
//! thrusters.
//!
//! The library maps a desired body wrench to per-actuator thrust and gimbal
//! commands through a linear "extended" force representation, and offers a
//! family of allocators over it:
//!
//! * [`alloc::allocate_pinv`] — minimum-norm (Moore-Penrose) allocation;
//! * [`smooth::allocate_smooth`] — pseudo-inverse plus a null-space term that
//!   steers thrusts away from zero, keeping the force-to-angle extraction
//!   Lipschitz continuous;
//! * [`convex::ConvexAllocator`] — constrained allocation with thrust
//!   saturation and gimbal-rate cones, solved by operator splitting;
//! * [`classic::solve_classic`] — a nonconvex thrust/angle baseline solved by
//!   alternating minimization.
//!
//! [`kb::solve_kb`] finds the null-space direction the smooth allocator needs,
//! and [`sim`] runs discrete-time closed-loop scenarios through rate-limited
//! servo models.

pub mod alloc;
pub mod body;
pub mod classic;
pub mod convex;
pub mod kb;
mod numeric;
pub mod sim;
pub mod smooth;

/// Re-exported so downstream crates share one linear-algebra version.
pub use nalgebra;

#[cfg(test)]
pub(crate) mod testbodies;

pub use alloc::{
    allocate_pinv, allocate_pinv_constrained, commands_to_forces, commands_to_wrench,
    forces_to_commands, initial_commands, wrap_angle, ActuatorCommand, AllocError, EPS_THRUST,
};
pub use body::{
    actuator_block, build_mapping, skew, ActuatorSpec, Axis, BodyConfig, BodyError, MappingMatrix,
    MountKind,
};
pub use classic::{solve_classic, ClassicError, ClassicParams};
pub use convex::{
    build_rate_cone, solve_convex, ConeConstraint, ConvexAllocator, ConvexError, ConvexWeights,
    QpSolution, SolveStatus, SolverSettings,
};
pub use kb::{solve_kb, KbError, KbProblem, KbSolution, DEFAULT_SEEDS};
pub use sim::{
    power_fraction, rms_axis_error, run_scenario, tracking_metrics, write_csv, AllocatorChoice,
    ScenarioConfig, SimError, Step, TimeSeries, TrackingMetrics, WrenchSignal,
};
pub use smooth::{
    allocate_smooth, complete_basis, empirical_lipschitz, eval_b, lipschitz_bound, KernelDirection,
    SmoothDiagnostics, SmoothError, SmoothingMode, SmoothingParams,
};
