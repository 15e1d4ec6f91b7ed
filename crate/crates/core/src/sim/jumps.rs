use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::model::{JumpKernel, State};

/// One atom of the Poisson point process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: State,
}

/// Arrival times of a rate `total_rate` Poisson process on `(0, horizon]`
/// with i.i.d. marks from the normalized mark law.
pub fn sample_jump_times<R: Rng>(kernel: &JumpKernel, horizon: f64, rng: &mut R) -> Vec<JumpEvent> {
    let rate = kernel.total_rate();
    if rate <= 0.0 || horizon <= 0.0 {
        return Vec::new();
    }
    let exp = Exp::new(rate).expect("rate is positive and finite");
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t > horizon {
            break;
        }
        let mark = kernel.sample_mark(rng);
        events.push(JumpEvent { time: t, mark });
    }
    events
}
