//! Dual averaging over piecewise-constant densities on a box, for online learning with
//! non-convex losses under exact, noisy, biased and bandit feedback.

pub mod bandit;
pub mod baselines;
pub mod dual_averaging;
pub mod error;
pub mod grid;
pub mod loss;
pub mod regret;
pub mod regularizer;
pub mod scalar;

pub use bandit::{kernel_estimate, mixed_strategy, run_bda, BdaConfig, BdaRun, KernelModel};
pub use baselines::{run_exp3, run_uniform, Exp3State};
pub use dual_averaging::{run_da, DAState, DaRun, EnergyDiagnostics, EnergyRecord, RunOptions, Schedule, Violation};
pub use error::{Error, Result};
pub use grid::{BoxDomain, Density, Grid, GridFunction, Patch, Sampler};
pub use loss::{ChannelKind, Convention, Descriptors, FeedbackChannel, LossStream, NoiseModel, Observation, TrigTerm};
pub use regularizer::{AmbientNorm, Regularizer};
pub use regret::{
    dynamic_regret, fit_slope, geometric_checkpoints, regret_curve, regret_vs_comparator, static_regret,
    window_decomposition, RegretPoint, RegretTrace, RoundRecord, SlopeFit, WindowReport,
};
pub use scalar::Scalar;

pub type BoxDomain64 = BoxDomain<f64>;
pub type Grid64 = Grid<f64>;
pub type GridFunction64 = GridFunction<f64>;
pub type Density64 = Density<f64>;
pub type Regularizer64 = Regularizer<f64>;
pub type LossStream64 = LossStream<f64>;
pub type RegretTrace64 = RegretTrace<f64>;
pub type Schedule64 = Schedule<f64>;
