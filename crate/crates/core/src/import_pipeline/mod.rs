//! Training the software reference and importing its weights into arrays.

mod mapping;
mod probe;
mod train;
mod tuning;

pub use mapping::{
    coupling_kappa, map_weights_to_targets, tuned_quota, ArrayPlan, CellRef, DisturbModel, ImportConfig, ImportPlan,
    TuningOrder,
};
pub use probe::{hidden_output_probe, pearson, probe_correlation, probe_to_csv, ProbePoint};
pub use train::{
    loss_and_gradient, software_accuracy, train_reference, EpochStats, Gradients, HiddenTransfer, TrainConfig,
    TrainedWeights, TrainingOutcome,
};
pub use tuning::{tune_sequential, CellRecord, ImportReport};

use crate::error::Result;
use crate::network::NetworkInstance;
use crate::scalar::Scalar;

/// Maps `weights` onto an erased copy of `base` and tunes it.
pub fn import_weights<T: Scalar>(
    weights: &TrainedWeights<T>,
    base: &NetworkInstance<T>,
    cfg: &ImportConfig,
    seed: u64,
) -> Result<(NetworkInstance<T>, ImportReport)> {
    let plan = map_weights_to_targets(weights, base, cfg)?;
    tune_sequential(base, &plan, seed)
}
