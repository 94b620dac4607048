//! Weight-to-current mapping and the tuned-cell mask.

use serde::{Deserialize, Serialize};

use super::train::TrainedWeights;
use crate::crossbar::CrossbarArray;
use crate::device::{cell_current, state_for_current, BiasPoint, DevicePhysics};
use crate::error::{Error, Result};
use crate::network::NetworkInstance;
use crate::neurons::NeuronParams;
use crate::scalar::Scalar;

/// Random programming disturb of previously tuned cells sharing a row or
/// column with the cell being tuned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisturbModel {
    /// Chance that one tuning event disturbs one neighbour.
    pub probability: f64,
    /// Log-normal sigma of the current multiplier of a disturbed cell.
    pub sigma: f64,
}

impl DisturbModel {
    pub fn none() -> Self {
        DisturbModel { probability: 0.0, sigma: 0.0 }
    }

    pub fn calibrated() -> Self {
        DisturbModel { probability: 0.005, sigma: 0.4 }
    }
}

impl Default for DisturbModel {
    fn default() -> Self {
        Self::calibrated()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningOrder {
    RowMajor,
    ColumnMajor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportConfig {
    /// Relative half-width of the uniform tuning error.
    pub accuracy: f64,
    /// Fraction of each array's cells that get tuned.
    pub tuned_fraction: f64,
    pub disturb: DisturbModel,
    /// Current carried by the largest first-layer weight (A).
    pub i_hi1: f64,
    /// Current carried by the largest second-layer weight (A).
    pub i_hi2: f64,
    pub order: TuningOrder,
}

impl Default for ImportConfig {
    fn default() -> Self {
        ImportConfig {
            accuracy: 0.05,
            tuned_fraction: 0.30,
            disturb: DisturbModel::calibrated(),
            i_hi1: 1.5e-6,
            i_hi2: 3e-7,
            order: TuningOrder::RowMajor,
        }
    }
}

impl ImportConfig {
    /// Exact tuning, no disturb, every nonzero weight imported.
    pub fn ideal() -> Self {
        ImportConfig { accuracy: 0.0, tuned_fraction: 1.0, disturb: DisturbModel::none(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.accuracy) {
            return Err(Error::Param(format!("accuracy {} must be in [0, 1)", self.accuracy)));
        }
        if !(self.tuned_fraction > 0.0 && self.tuned_fraction <= 1.0) {
            return Err(Error::Param(format!("tuned_fraction {} must be in (0, 1]", self.tuned_fraction)));
        }
        if !(0.0..=1.0).contains(&self.disturb.probability) || !(self.disturb.sigma >= 0.0) {
            return Err(Error::Param("disturb probability must be in [0, 1] and sigma >= 0".into()));
        }
        if !(self.i_hi1 > 0.0 && self.i_hi2 > 0.0) {
            return Err(Error::Param("i_hi1 and i_hi2 must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRef {
    pub array: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayPlan<T> {
    /// Amperes per unit weight.
    pub scale: T,
    /// Erased-cell current at the reference bias.
    pub baseline_current: T,
    pub reference_bias: BiasPoint<T>,
    pub n_inputs: usize,
    /// Per cell, row-major. Untuned cells hold the baseline current.
    pub targets: Vec<T>,
    pub tuned: Vec<bool>,
}

impl<T: Scalar> ArrayPlan<T> {
    pub fn tuned_count(&self) -> usize {
        self.tuned.iter().filter(|&&t| t).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportPlan<T> {
    pub arrays: [ArrayPlan<T>; 2],
    pub order: Vec<CellRef>,
    pub accuracy: T,
    pub disturb: DisturbModel,
    /// Hidden activation gain that makes the trimmed hidden stage reproduce
    /// the software pre-activation.
    pub hidden_act_gain: T,
}

/// `ceil(fraction * n)` without float round-up at exact products.
pub fn tuned_quota(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

fn plan_array<T: Scalar>(
    layer: usize,
    weights: &[T],
    array: &CrossbarArray<T>,
    phys: &DevicePhysics<T>,
    i_hi: T,
    fraction: f64,
) -> Result<ArrayPlan<T>> {
    let (n_in, n_out) = (array.n_inputs(), array.n_outputs());
    let max = weights.iter().fold(T::zero(), |m, w| m.max(w.abs()));
    if !(max > T::zero()) || !max.is_finite() {
        return Err(Error::DegenerateScale { layer });
    }
    let scale = i_hi / max;
    let bias = array.reference_bias();
    let baseline_current = cell_current(phys.baseline_state(), bias, phys)?;

    let n_cells = 2 * n_out * n_in;
    let mut mags = vec![T::zero(); n_cells];
    for j in 0..n_in {
        for o in 0..n_out {
            let w = weights[j * n_out + o];
            let row = 2 * o + usize::from(w < T::zero());
            mags[row * n_in + j] = w.abs() * scale;
        }
    }
    let mut ranked: Vec<usize> = (0..n_cells).filter(|&i| mags[i] > T::zero()).collect();
    ranked.sort_by(|&a, &b| mags[b].partial_cmp(&mags[a]).unwrap().then(a.cmp(&b)));
    ranked.truncate(tuned_quota(fraction, n_cells));

    let mut targets = vec![baseline_current; n_cells];
    let mut tuned = vec![false; n_cells];
    for i in ranked {
        targets[i] = baseline_current + mags[i];
        tuned[i] = true;
    }
    Ok(ArrayPlan { scale, baseline_current, reference_bias: bias, n_inputs: n_in, targets, tuned })
}

/// Per-layer max-normalised current targets for every cell.
///
/// The largest weight of each layer maps to `i_hi` above the erased-cell
/// current; the partner cell of each differential pair stays erased.
pub fn map_weights_to_targets<T: Scalar>(
    weights: &TrainedWeights<T>,
    net: &NetworkInstance<T>,
    cfg: &ImportConfig,
) -> Result<ImportPlan<T>> {
    cfg.validate()?;
    weights.validate()?;
    if weights.topology != net.topology {
        return Err(Error::Shape("weights and network topologies differ".into()));
    }
    let a1 = plan_array(1, &weights.w1, &net.array1, &net.phys, T::lit(cfg.i_hi1), cfg.tuned_fraction)?;
    let a2 = plan_array(2, &weights.w2, &net.array2, &net.phys, T::lit(cfg.i_hi2), cfg.tuned_fraction)?;

    let mut order = Vec::with_capacity(a1.tuned_count() + a2.tuned_count());
    for (array, plan) in [&a1, &a2].into_iter().enumerate() {
        let n_in = plan.n_inputs;
        let n_rows = plan.targets.len() / n_in;
        let mut push = |row: usize, col: usize| {
            if plan.tuned[row * n_in + col] {
                order.push(CellRef { array, row, col });
            }
        };
        match cfg.order {
            TuningOrder::RowMajor => (0..n_rows).for_each(|r| (0..n_in).for_each(|c| push(r, c))),
            TuningOrder::ColumnMajor => (0..n_in).for_each(|c| (0..n_rows).for_each(|r| push(r, c))),
        }
    }

    let hidden_act_gain = trimmed_act_gain(&net.hidden, a1.scale);
    Ok(ImportPlan { arrays: [a1, a2], order, accuracy: T::lit(cfg.accuracy), disturb: cfg.disturb, hidden_act_gain })
}

fn trimmed_act_gain<T: Scalar>(p: &NeuronParams<T>, scale: T) -> T {
    let closed = p.open_loop_gain.map_or(T::one(), |a| a / (T::one() + a));
    T::one() / (p.r_f * closed * scale)
}

/// Log-slope of the gate-coupled stage as seen by the software model: the
/// beta of a second-array cell at half the top current, times the hidden
/// activation swing.
pub fn coupling_kappa<T: Scalar>(net: &NetworkInstance<T>, cfg: &ImportConfig) -> Result<f64> {
    let bias = net.array2.reference_bias();
    let state = state_for_current(T::lit(cfg.i_hi2 / 2.0), bias, &net.phys)?;
    let beta = net.phys.beta_of_v_t(state.v_t());
    Ok((beta * (net.hidden.v_out_max - net.hidden.v_out_min)).f64())
}
