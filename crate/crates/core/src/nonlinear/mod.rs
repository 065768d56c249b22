//! Solvers for optimality systems without a linear reduction.

pub mod alpha;
pub mod collocation;
pub mod fractional;
mod guess;
pub mod newton;

pub use alpha::{solve_alpha, solve_alpha_with, AlphaSolution};
pub use collocation::{
    solve_collocation, solve_collocation_fixed, solve_collocation_with, CollocationSolution, DEFAULT_NODES,
    MESH_CHANGE_TOL,
};
pub use guess::initial_guess;
pub use newton::{damped_newton, NewtonOptions, NewtonReport};
