//! Causal discovery from a trained model: error gains under temporal
//! perturbation (dynamic) and pooled dependency coefficients (static).

mod dynamic;
mod perturb;

pub use dynamic::{
    dynamic_graph, read_strengths, smooth_gaussian, write_edge_series, write_strengths, DynamicCausalGraph, Summary,
};
pub use perturb::{perturb_series, stream_seed, PerturbationConfig, Strategy};

use crate::error::{Result, UncleError};
use crate::graph::CausalMatrix;
use crate::model::UncleModel;

/// Default Gaussian smoothing width for plotted strength series.
pub const DEFAULT_SMOOTHING_SIGMA: f64 = 20.0;

/// RMS of the dependency coefficients over channels and lags, as a
/// `[cause][effect]` matrix.
pub fn aggregate_dependencies(model: &UncleModel) -> Result<CausalMatrix> {
    let psi = model.dependencies().ok_or_else(|| {
        UncleError::Unavailable("dependency aggregation needs dependency matrices, which this model disables".into())
    })?;
    let (c, l, n) = (psi.shape()[0], psi.shape()[1], psi.shape()[2]);
    let mut acc = vec![0.0; n * n];
    for block in psi.values().chunks_exact(n * n) {
        for (a, v) in acc.iter_mut().zip(block) {
            *a += v * v;
        }
    }
    let denom = (c * l) as f64;
    // Stored as [target][source]; transpose into [cause][effect].
    Ok(CausalMatrix::from_fn(n, |cause, effect| (acc[effect * n + cause] / denom).sqrt()))
}
