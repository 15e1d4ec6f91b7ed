//! Jump-adapted Euler simulation of the jump SDE and ensemble estimators.

mod ensemble;
mod euler;
mod export;
mod grid;
mod jumps;

pub use ensemble::{estimate_sup_second_moment, estimate_transition, simulate_ensemble, EnsembleSpec, Event, PathEnsemble};
pub use euler::{check_step, simulate_path, simulate_path_with_nodes, PathRecord, COMPENSATOR_MARKS};
pub(crate) use euler::{check_start, compensator, drive, ensure_state, euler_increment, prepare, standard_normal};
pub use export::{model_hash, write_columnar};
pub use grid::TimeGrid;
pub use jumps::{sample_jump_times, JumpEvent};
