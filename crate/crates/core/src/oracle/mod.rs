//! Exact solvers for small instances, used as ground truth.

mod banded;
mod mqn;
mod tiny;

pub use mqn::{
    exact_poisson_solution, optimal_average_cost, poisson_residual, write_h_csv, write_policy_csv, OptimalSolution,
    PoissonSolution, TablePolicy, TruncatedMqn, RVI_MAX_ITERATIONS, RVI_TOLERANCE,
};
pub use tiny::{
    enumerate_trajectory_distribution, exact_policy_value_episodic, simulate_tiny_episode, tiny_amp_targets,
    tiny_plain_targets, EpisodicValue, TinyMdp, TinyState, TinyTrajectory, TRAJECTORY_CAP,
};
