//! Simulation of noisy trajectories and measurements, plus reference
//! solutions used to check the estimators.

mod oracle;
mod simulate;

pub use oracle::{discretized_cost, solve_discretized_mle, spline_noise_on_grid, OracleGrid, OracleSolution};
pub use simulate::{
    finite_difference_velocity, grid_steps, sample_measurements, sample_measurements_with, simulate, Scheme,
    SimConfig, Trajectory, GRID_RTOL,
};
