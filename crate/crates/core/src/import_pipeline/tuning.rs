//! Sequential cell tuning with programming error and disturb.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mapping::ImportPlan;
use crate::device::{solve_v_t, state_for_current, CellState};
use crate::error::{Error, Result};
use crate::network::NetworkInstance;
use crate::scalar::Scalar;
use crate::seeds::{derive, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell_id: usize,
    pub array: usize,
    pub row: usize,
    pub col: usize,
    pub target: f64,
    /// Current of the final state at the reference bias.
    pub achieved: f64,
    pub disturbed: bool,
}

impl CellRecord {
    pub fn relative_error(&self) -> f64 {
        self.achieved / self.target - 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportReport {
    pub seed: u64,
    pub accuracy: f64,
    pub n_tuned: usize,
    pub n_disturbed: usize,
    pub disturb_events: usize,
    /// Fraction of tuned cells whose final current is within the accuracy band.
    pub within_band: f64,
    pub rms_relative_error: f64,
    pub max_relative_error: f64,
    pub hidden_act_gain: f64,
    pub scales: [f64; 2],
    pub records: Vec<CellRecord>,
}

impl ImportReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cell_id,array,row,col,target_A,achieved_A,disturbed\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{:e},{:e},{}\n",
                r.cell_id,
                r.array + 1,
                r.row,
                r.col,
                r.target,
                r.achieved,
                u8::from(r.disturbed)
            ));
        }
        s
    }
}

/// Tunes every planned cell of an erased copy of `base` in plan order.
///
/// Each event lands at `target * (1 + e)` with `e` uniform in
/// `[-accuracy, accuracy]`. Previously tuned cells on the same row or column
/// are then disturbed independently; a disturbed cell's current is scaled by
/// a log-normal factor and is not re-tuned.
pub fn tune_sequential<T: Scalar>(
    base: &NetworkInstance<T>,
    plan: &ImportPlan<T>,
    seed: u64,
) -> Result<(NetworkInstance<T>, ImportReport)> {
    let mut net = base.clone();
    let phys = net.phys.clone();
    let erased = phys.baseline_state();
    for a in [&mut net.array1, &mut net.array2] {
        for r in 0..a.n_rows() {
            for c in 0..a.n_inputs() {
                a.set_cell(r, c, erased);
            }
        }
    }
    net.hidden.act_gain = plan.hidden_act_gain;

    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, stream::TUNE, 0));
    let acc = plan.accuracy.f64();
    let (p, sigma) = (plan.disturb.probability, plan.disturb.sigma);
    let lo = phys.i_floor * T::lit(1.0 + 1e-9);
    let hi = phys.i_sat * T::lit(1.0 - 1e-9);

    let shapes = [(net.array1.n_rows(), net.array1.n_inputs()), (net.array2.n_rows(), net.array2.n_inputs())];
    let mut current: [Vec<T>; 2] = [vec![T::zero(); shapes[0].0 * shapes[0].1], vec![T::zero(); shapes[1].0 * shapes[1].1]];
    let mut disturbed: [Vec<bool>; 2] = [vec![false; current[0].len()], vec![false; current[1].len()]];
    let mut row_done: [Vec<Vec<usize>>; 2] = [vec![Vec::new(); shapes[0].0], vec![Vec::new(); shapes[1].0]];
    let mut col_done: [Vec<Vec<usize>>; 2] = [vec![Vec::new(); shapes[0].1], vec![Vec::new(); shapes[1].1]];
    let mut events = 0usize;

    for cref in &plan.order {
        let (a, row, col) = (cref.array, cref.row, cref.col);
        let ap = &plan.arrays[a];
        let n_in = ap.n_inputs;
        let v_gs = ap.reference_bias.v_gs;
        let target = ap.targets[row * n_in + col];
        let eps = acc * (2.0 * rng.random::<f64>() - 1.0);
        let achieved = target * T::lit(1.0 + eps);
        let state = state_for_current(achieved, ap.reference_bias, &phys).map_err(|e| Error::Programming {
            array: a + 1,
            row,
            col,
            target: target.f64(),
            reason: e.to_string(),
        })?;
        let array = if a == 0 { &mut net.array1 } else { &mut net.array2 };
        array.set_cell(row, col, state);
        current[a][row * n_in + col] = phys.current_unchecked(state.v_t(), v_gs);

        if p > 0.0 {
            let neighbours = row_done[a][row].iter().map(|&c| (row, c)).chain(col_done[a][col].iter().map(|&r| (r, col)));
            for (r2, c2) in neighbours {
                if rng.random::<f64>() >= p {
                    continue;
                }
                let z: f64 = rng.sample(StandardNormal);
                let idx = r2 * n_in + c2;
                let moved = (current[a][idx] * T::lit((sigma * z).exp())).max(lo).min(hi);
                let v_t = solve_v_t(moved, v_gs, &phys).unwrap_or(phys.v_t_max);
                let s = phys.clamp_state(CellState::new(v_t));
                array.set_cell(r2, c2, s);
                current[a][idx] = phys.current_unchecked(s.v_t(), v_gs);
                disturbed[a][idx] = true;
                events += 1;
            }
        }
        row_done[a][row].push(col);
        col_done[a][col].push(row);
    }

    let offset = current[0].len();
    let mut records = Vec::with_capacity(plan.order.len());
    for cref in &plan.order {
        let ap = &plan.arrays[cref.array];
        let idx = cref.row * ap.n_inputs + cref.col;
        records.push(CellRecord {
            cell_id: idx + if cref.array == 1 { offset } else { 0 },
            array: cref.array,
            row: cref.row,
            col: cref.col,
            target: ap.targets[idx].f64(),
            achieved: current[cref.array][idx].f64(),
            disturbed: disturbed[cref.array][idx],
        });
    }
    let n = records.len().max(1) as f64;
    let errs: Vec<f64> = records.iter().map(|r| r.relative_error()).collect();
    let report = ImportReport {
        seed,
        accuracy: acc,
        n_tuned: records.len(),
        n_disturbed: records.iter().filter(|r| r.disturbed).count(),
        disturb_events: events,
        within_band: errs.iter().filter(|e| e.abs() <= acc * (1.0 + 1e-9) + 1e-12).count() as f64 / n,
        rms_relative_error: (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        max_relative_error: errs.iter().fold(0.0, |m: f64, e| m.max(e.abs())),
        hidden_act_gain: plan.hidden_act_gain.f64(),
        scales: [plan.arrays[0].scale.f64(), plan.arrays[1].scale.f64()],
        records,
    };
    Ok((net, report))
}
