//! Interest-aware multicast scheduling of BEV feature grids.
//!
//! A roadside node holds a bird's-eye-view feature map split into grids and
//! serves ground users whose channels support different MCS rates. Each user
//! values each grid by a weight (its map of interest). The scheduler picks
//! which grids to send at which rate so that total utility is maximized
//! within a latency budget.
//!
//! * [`channel`]: MCS table, decodability, per-grid airtime.
//! * [`moi`]: per-user interest maps from confidence, entropy and RoI.
//! * [`instance`]: the problem, grid-rate selections, multicast plans.
//! * [`solvers`]: two-pass greedy, standard and lazy.
//! * [`baselines`]: broadcast, unicast, marginal utility, K-means++, DP.
//! * [`oracle`]: exact search for small instances.
//! * [`scenario`]: synthetic scenes and instances.
//! * [`experiment`]: solver registry, sweeps, timing.

pub mod baselines;
pub mod channel;
pub mod experiment;
pub mod instance;
pub mod moi;
pub mod oracle;
pub mod scenario;
pub mod solvers;

pub use channel::{McsTable, UserChannel};
pub use experiment::{run_solver, SolverConfig, SolverId};
pub use instance::{
    evaluate_plan, plan_from_selection, selection_from_plan, utility, InstanceData, Item,
    MulticastPlan, ProblemInstance, Selection,
};
pub use moi::GridMap;
pub use solvers::{accelerated_greedy, refined_greedy, SolveResult};

/// Library version, recorded in generated files.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
