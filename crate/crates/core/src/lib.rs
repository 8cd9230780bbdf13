//! Single-switch dynamic algorithm selection for continuous black-box
//! optimization.
//!
//! The crate benchmarks a five-member optimizer portfolio (BFGS, MLSL, PSO,
//! CMA-ES, DE) on a subset of the BBOB noiseless suite, executes runs that
//! hand over from one optimizer to another once a target precision is hit,
//! and computes expected running time (ERT) tables together with the
//! theoretical and actual gains of switching.
//!
//! The modules follow the data flow of an experiment:
//!
//! - [`problems`]: test functions, instances and their transforms
//! - [`tracing`]: budgeted evaluation and hitting times on a log-spaced grid
//! - [`optimizers`]: suspendable step-wise optimizers with inspectable state
//! - [`warmstart`]: transfer of state from one optimizer to the next
//! - [`switching`]: single-switch runs and switching-point sweeps
//! - [`analysis`]: ERT, switching performance, virtual best solvers, gains
//! - [`experiment`]: batch drivers used by the `dynas` binary
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod optimizers;
pub mod problems;
pub mod seed;
pub mod switching;
pub mod tracing;
pub mod warmstart;

pub use error::{Error, Result};
pub use optimizers::{run_single, Algorithm, AnyOptimizer, Hyperparameters, Optimizer, OptimizerConfig};
pub use problems::{instantiate, Landscape, ProblemId, ProblemInstance};
pub use switching::{run_switch, sweep_tau, SwitchPlan, SwitchTrace};
pub use tracing::{BudgetedEvaluator, RunTrace, Stop, TargetGrid, TerminationReason};
pub use warmstart::{WarmStartMode, WarmStartPolicy, WarmStartState};
