//! Large-N mean-field treatment of the ferromagnetic p-spin model.

mod dynamics;
mod saddle;

pub use dynamics::{
    ground_state_reference_curve, initial_product_state, rabi_propagator, run_meanfield, single_spin_ground_state,
    step, MagnetizationSample, MagnetizationTrajectory, MeanFieldState,
};
pub use saddle::{saddle_branches, solve_saddle, SaddlePointQuery, SaddleSolution, SADDLE_RESIDUAL_TOL};
