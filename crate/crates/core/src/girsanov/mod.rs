//! Irreducibility via a controlled bridge: the linear bridge and its
//! control, the controlled process with its Girsanov weight, and the
//! Chebyshev/Bihari probe.

mod bridge;
mod controlled;
mod probe;

pub use bridge::{make_bridge, BridgeControl, BridgeSpec};
pub use controlled::{
    simulate_controlled, simulate_controlled_ensemble, ControlledEnsemble, ControlledEnsembleSpec, GirsanovWeight,
    MAX_CONDITION,
};
pub use probe::{
    bihari_bound, calibrate_bihari_constant, irreducibility_probe, relative_half_width, ProbeReport, ProbeSpec,
};
