//! Finite-difference gradient verification.

use super::{Graph, NetworkParams, NodeId, Tensor};
use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// Outcome of a dense central-difference check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error and the parameter element it occurred at.
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub tolerance: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Scale floor for the relative-error denominator; differences between
/// near-zero gradients are judged on this absolute scale.
const REL_SCALE_FLOOR: f64 = 1e-3;

/// Compare analytic gradients against central finite differences for every
/// parameter element. `epsilon` is the probe step, `tolerance` the pass
/// threshold on the max relative error.
pub fn grad_check(
    graph: &Graph,
    loss: NodeId,
    params: &NetworkParams,
    inputs: &BTreeMap<String, Tensor>,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let total: usize = params.values().map(|t| t.len()).sum();
    if total > 10_000 {
        return Err(Error::param(format!(
            "dense grad check limited to 1e4 parameters, got {total}"
        )));
    }

    let tape = graph.forward(params, inputs)?;
    let analytic = graph.backward(&tape, loss)?.by_param;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        tolerance,
        checked: 0,
    };

    let mut probe = params.clone();
    for (name, tensor) in params {
        for idx in 0..tensor.len() {
            let original = tensor.data()[idx];

            probe.get_mut(name).unwrap().data_mut()[idx] = original + epsilon;
            let plus = graph.forward(&probe, inputs)?.value(loss).data()[0];
            probe.get_mut(name).unwrap().data_mut()[idx] = original - epsilon;
            let minus = graph.forward(&probe, inputs)?.value(loss).data()[0];
            probe.get_mut(name).unwrap().data_mut()[idx] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let exact = analytic
                .get(name)
                .map(|g| g.data()[idx])
                .unwrap_or(0.0);
            let scale = exact.abs().max(numeric.abs()).max(REL_SCALE_FLOOR);
            let rel = (exact - numeric).abs() / scale;
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = name.clone();
                report.worst_index = idx;
            }
        }
    }
    Ok(report)
}
