//! A laboratory for logarithmically cooled Langevin annealing.
//!
//! The crate builds test landscapes with exact gradients, measures their
//! critical depth (the largest barrier separating a local minimum from the
//! global one) on a grid, runs the discrete annealing iteration
//! `x' = x - grad f(x) eta_k + sqrt(2 tau eta_k) Z` under `tau = E/ln t`
//! cooling, and checks the predicted polynomial decay of the exceedance
//! probability `P(f(x_k) > delta)` in the cumulative step size, together
//! with the low-temperature spectral asymptotics that drive it.

pub mod analysis;
pub mod depth;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod landscape;
pub mod persist;
pub mod rng;
pub mod schedule;

pub use analysis::{
    estimate_tail, eyring_kramers_fit, fit_decay, gibbs_tail_quadrature, laplace_check,
    spectral_gap_1d, theoretical_bound_check, wilson_interval, BoundCheck, FitResult,
    GibbsMeasure1D, LaplaceFit, SpectralReport, TailCurve, TailRow,
};
pub use depth::{
    critical_depth, discretize, find_local_minima, saddle_height, DepthReport, GridField,
    GridMinimum,
};
pub use dynamics::{
    fine_euler_reference, gibbs_sample_1d, init_chain, sa_step, sa_step_with_noise, ula_step,
    ChainState, Checkpoint, InitialDistribution, Trajectory,
};
pub use error::{Error, Result};
pub use landscape::{AssumptionReport, DomainBox, Landscape};
pub use rng::StreamRng;
pub use schedule::{
    rate_exponent, validate, CoolingSchedule, ScheduleCheckReport, ScheduleTable, StepSchedule,
    Verdict,
};
