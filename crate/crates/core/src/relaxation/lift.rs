//! Maps a physical operating point into the relaxation's variable space.

use nalgebra::DMatrix;

use super::ConicProblem;
use crate::network::NetworkCase;
use crate::recovery::{lift_ac, lift_dc, RecoveredState};

/// Block and scalar values of the rank-1 point `W = X X^T` built from `state`.
/// Every feasible operating point lifts to a feasible point of the relaxation.
pub fn lift_state(case: &NetworkCase, problem: &ConicProblem, state: &RecoveredState) -> (Vec<DMatrix<f64>>, Vec<f64>) {
    let layout = &problem.layout;
    let mut blocks: Vec<DMatrix<f64>> = problem.blocks.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect();
    if let Some(b) = layout.ac_block {
        blocks[b] = lift_ac(&state.v_ac);
    }
    if let Some(b) = layout.dc_block {
        blocks[b] = lift_dc(&state.v_dc);
    }
    let mut scalars = vec![0.0; problem.scalars.len()];
    for (&a, g) in layout.gen_cost.iter().zip(&state.generators) {
        scalars[a] = g.cost;
    }
    for (d, conv) in case.dcdc_converters.iter().enumerate() {
        let q = state.dcdc[d].q;
        scalars[layout.dcdc_q[d]] = q;
        scalars[layout.dcdc_s[d]] = conv.terminal_loss(q);
        scalars[layout.dcdc_t[d]] = q * q;
        scalars[layout.dcdc_u[d]] = q.abs();
    }
    for (k, slot) in layout.dc_injection.iter().enumerate() {
        if let Some(s) = slot {
            scalars[*s] = state.dc_injection[k];
        }
    }
    (blocks, scalars)
}
