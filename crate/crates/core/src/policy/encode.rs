use crate::domain::{AcquisitionState, SuperfeatureSchema};

/// Width of [`encode_state`] output.
pub fn state_width(schema: &SuperfeatureSchema) -> usize {
    schema.n_raw() + schema.n_super()
}

/// Appends raw values (0 where unacquired) followed by one acquired bit per
/// superfeature. Depends on the acquired set only, never on the order.
pub fn encode_state(schema: &SuperfeatureSchema, state: &AcquisitionState, out: &mut Vec<f64>) {
    out.extend(state.values().iter().map(|v| v.unwrap_or(0.0)));
    let acquired = state.acquired();
    out.extend((0..schema.n_super()).map(|j| if acquired.contains(j) { 1.0 } else { 0.0 }));
}
