//! Floating-gate crossbar arrays computing differential vector-by-matrix
//! products.
//!
//! Cells are stored row-major in a `(2 * n_outputs) x n_inputs` grid. Row
//! `2k` is the positive half of output pair `k` and row `2k + 1` the negative
//! half. Source lines are ideal: zero wire resistance, ideal virtual ground.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::device::{BiasPoint, CellState, DevicePhysics};
use crate::error::{Error, Result};
use crate::flatbin;
use crate::scalar::Scalar;

/// Gate voltage of a 1-bit input in gate-driven mode.
pub const GATE_ON: f64 = 4.2;
pub const GATE_OFF: f64 = 0.0;
/// Legal gate range of the gate-coupled array.
pub const COUPLED_MIN: f64 = 1.1;
pub const COUPLED_MAX: f64 = 2.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VmmMode {
    /// Binary inputs switch cell gates between 0 V and 4.2 V.
    GateDriven,
    /// Analog inputs in [1.1, 2.7] V drive cell gates in subthreshold.
    GateCoupled,
}

impl VmmMode {
    /// Lowest and highest legal input voltage.
    pub fn input_range(self) -> (f64, f64) {
        match self {
            VmmMode::GateDriven => (GATE_OFF, GATE_ON),
            VmmMode::GateCoupled => (COUPLED_MIN, COUPLED_MAX),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossbarArray<T> {
    n_inputs: usize,
    n_outputs: usize,
    cells: Vec<CellState<T>>,
    pub v_drain: T,
    pub v_source: T,
    pub mode: VmmMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialCurrents<T> {
    pub i_plus: Vec<T>,
    pub i_minus: Vec<T>,
}

impl<T: Scalar> DifferentialCurrents<T> {
    pub fn difference(&self) -> Vec<T> {
        self.i_plus.iter().zip(&self.i_minus).map(|(p, m)| *p - *m).collect()
    }

    /// Total current drawn by every row of the array.
    pub fn total(&self) -> T {
        self.i_plus.iter().chain(&self.i_minus).fold(T::zero(), |a, &b| a + b)
    }
}

impl<T: Scalar> CrossbarArray<T> {
    /// Array with every cell in `state`.
    pub fn filled(
        n_inputs: usize,
        n_outputs: usize,
        state: CellState<T>,
        v_drain: T,
        v_source: T,
        mode: VmmMode,
    ) -> Self {
        CrossbarArray {
            n_inputs,
            n_outputs,
            cells: vec![state; 2 * n_outputs * n_inputs],
            v_drain,
            v_source,
            mode,
        }
    }

    pub fn from_cells(
        n_inputs: usize,
        n_outputs: usize,
        cells: Vec<CellState<T>>,
        v_drain: T,
        v_source: T,
        mode: VmmMode,
    ) -> Result<Self> {
        if cells.len() != 2 * n_outputs * n_inputs {
            return Err(Error::Shape(format!(
                "{} cells for a {}x{} grid",
                cells.len(),
                2 * n_outputs,
                n_inputs
            )));
        }
        Ok(CrossbarArray { n_inputs, n_outputs, cells, v_drain, v_source, mode })
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn n_rows(&self) -> usize {
        2 * self.n_outputs
    }

    pub fn cells(&self) -> &[CellState<T>] {
        &self.cells
    }

    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> CellState<T> {
        self.cells[row * self.n_inputs + col]
    }

    #[inline]
    pub fn set_cell(&mut self, row: usize, col: usize, s: CellState<T>) {
        self.cells[row * self.n_inputs + col] = s;
    }

    pub fn v_ds(&self) -> T {
        self.v_drain - self.v_source
    }

    /// Bias at which import targets are expressed: highest legal gate voltage.
    pub fn reference_bias(&self) -> BiasPoint<T> {
        BiasPoint::new(T::lit(self.mode.input_range().1), self.v_ds())
    }

    pub fn validate(&self, phys: &DevicePhysics<T>) -> Result<()> {
        if self.n_inputs == 0 || self.n_outputs == 0 {
            return Err(Error::Shape("array needs at least one input and one output".into()));
        }
        if self.cells.len() != self.n_rows() * self.n_inputs {
            return Err(Error::Shape("cell grid does not match dimensions".into()));
        }
        if !(self.v_ds() >= T::zero()) {
            return Err(Error::Param(format!("v_drain {} below v_source {}", self.v_drain, self.v_source)));
        }
        for (k, s) in self.cells.iter().enumerate() {
            phys.check_state(*s).map_err(|e| {
                Error::Domain(format!("cell (row {}, col {}): {e}", k / self.n_inputs, k % self.n_inputs))
            })?;
        }
        Ok(())
    }

    /// Swaps every +/- row pair, negating all weights.
    pub fn swap_pairs(&mut self) {
        let n = self.n_inputs;
        for k in 0..self.n_outputs {
            let (a, b) = self.cells[2 * k * n..(2 * k + 2) * n].split_at_mut(n);
            a.swap_with_slice(b);
        }
    }

    /// Writes the `v_t` grid as a flat binary file with a JSON header.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let header = ArrayHeader {
            kind: "crossbar".into(),
            n_inputs: self.n_inputs,
            n_outputs: self.n_outputs,
            rows: self.n_rows(),
            cols: self.n_inputs,
            mode: self.mode,
            v_drain: self.v_drain.f64(),
            v_source: self.v_source.f64(),
            layout: "row-major v_t (V); row 2k = +, row 2k+1 = -".into(),
        };
        let data: Vec<f64> = self.cells.iter().map(|s| s.0.f64()).collect();
        flatbin::write(path, &header, &data)
    }

    pub fn read_snapshot(path: &Path) -> Result<Self> {
        let (h, data): (ArrayHeader, Vec<f64>) = flatbin::read(path)?;
        if h.kind != "crossbar" || h.rows != 2 * h.n_outputs || h.cols != h.n_inputs {
            return Err(Error::Format { offset: 16, msg: "header does not describe a crossbar grid".into() });
        }
        let cells = data.into_iter().map(|v| CellState(T::lit(v))).collect();
        Self::from_cells(h.n_inputs, h.n_outputs, cells, T::lit(h.v_drain), T::lit(h.v_source), h.mode)
    }
}

#[derive(Serialize, Deserialize)]
struct ArrayHeader {
    kind: String,
    n_inputs: usize,
    n_outputs: usize,
    rows: usize,
    cols: usize,
    mode: VmmMode,
    v_drain: f64,
    v_source: f64,
    layout: String,
}

/// Per-cell perturbation applied to each current before summation.
pub(crate) trait CellNoise<T> {
    fn apply(&mut self, i: T) -> T;
}

pub(crate) struct Noiseless;

impl<T: Scalar> CellNoise<T> for Noiseless {
    #[inline]
    fn apply(&mut self, i: T) -> T {
        i
    }
}

/// One Gaussian read per cell with constant relative standard deviation.
pub(crate) struct RelativeGaussian<'a, R> {
    pub rng: &'a mut R,
    pub sigma: f64,
}

impl<T: Scalar, R: Rng> CellNoise<T> for RelativeGaussian<'_, R> {
    #[inline]
    fn apply(&mut self, i: T) -> T {
        let n: f64 = self.rng.sample(StandardNormal);
        (i * T::lit(1.0 + self.sigma * n)).max(T::zero())
    }
}

pub(crate) fn accumulate<T: Scalar>(
    array: &CrossbarArray<T>,
    phys: &DevicePhysics<T>,
    gates: &[T],
    noise: &mut impl CellNoise<T>,
) -> DifferentialCurrents<T> {
    let n = array.n_inputs;
    let mut rows = Vec::with_capacity(array.n_rows());
    for r in 0..array.n_rows() {
        let mut acc = T::zero();
        for (s, &v) in array.cells[r * n..(r + 1) * n].iter().zip(gates) {
            acc += noise.apply(phys.current_unchecked(s.0, v));
        }
        rows.push(acc);
    }
    split_rows(rows)
}

fn split_rows<T: Scalar>(rows: Vec<T>) -> DifferentialCurrents<T> {
    let (i_plus, i_minus) = rows.chunks_exact(2).map(|c| (c[0], c[1])).unzip();
    DifferentialCurrents { i_plus, i_minus }
}

fn check_mode<T>(array: &CrossbarArray<T>, want: VmmMode) -> Result<()> {
    if array.mode != want {
        return Err(Error::Param(format!("array is {:?}, operation needs {want:?}", array.mode)));
    }
    Ok(())
}

fn check_width<T>(array: &CrossbarArray<T>, got: usize) -> Result<()> {
    if got != array.n_inputs {
        return Err(Error::Shape(format!("input vector of length {got} for an array with {} inputs", array.n_inputs)));
    }
    Ok(())
}

pub(crate) fn gate_driven_voltages<T: Scalar>(inputs: &[bool]) -> Vec<T> {
    inputs.iter().map(|&b| T::lit(if b { GATE_ON } else { GATE_OFF })).collect()
}

/// Layer-1 product: binary inputs applied directly to the cell gates.
pub fn vmm_gate_driven<T: Scalar>(
    array: &CrossbarArray<T>,
    inputs: &[bool],
    phys: &DevicePhysics<T>,
) -> Result<DifferentialCurrents<T>> {
    check_mode(array, VmmMode::GateDriven)?;
    check_width(array, inputs.len())?;
    Ok(accumulate(array, phys, &gate_driven_voltages(inputs), &mut Noiseless))
}

/// Layer-2 product: analog gate voltages in [1.1, 2.7] V. The state
/// dependence of the log slope makes this only approximately a product of
/// input exponentials and weights.
pub fn vmm_gate_coupled<T: Scalar>(
    array: &CrossbarArray<T>,
    input_voltages: &[T],
    phys: &DevicePhysics<T>,
) -> Result<DifferentialCurrents<T>> {
    check_mode(array, VmmMode::GateCoupled)?;
    check_width(array, input_voltages.len())?;
    check_coupled_inputs(input_voltages)?;
    Ok(accumulate(array, phys, input_voltages, &mut Noiseless))
}

fn check_coupled_inputs<T: Scalar>(v: &[T]) -> Result<()> {
    for &x in v {
        if !(x >= T::lit(COUPLED_MIN) && x <= T::lit(COUPLED_MAX)) {
            return Err(Error::InputRange { value: x.f64(), lo: COUPLED_MIN, hi: COUPLED_MAX });
        }
    }
    Ok(())
}

pub(crate) fn vmm_gate_coupled_noisy<T: Scalar>(
    array: &CrossbarArray<T>,
    input_voltages: &[T],
    phys: &DevicePhysics<T>,
    noise: &mut impl CellNoise<T>,
) -> Result<DifferentialCurrents<T>> {
    check_mode(array, VmmMode::GateCoupled)?;
    check_width(array, input_voltages.len())?;
    check_coupled_inputs(input_voltages)?;
    Ok(accumulate(array, phys, input_voltages, noise))
}

/// Precomputed on/off currents of a gate-driven array, for batch inference.
/// Sums in the same order as [`vmm_gate_driven`], so results are identical.
#[derive(Debug, Clone)]
pub struct GateDrivenTable<T> {
    n_inputs: usize,
    n_rows: usize,
    on: Vec<T>,
    off: Vec<T>,
}

impl<T: Scalar> GateDrivenTable<T> {
    pub fn new(array: &CrossbarArray<T>, phys: &DevicePhysics<T>) -> Result<Self> {
        check_mode(array, VmmMode::GateDriven)?;
        let on_v = T::lit(GATE_ON);
        let off_v = T::lit(GATE_OFF);
        Ok(GateDrivenTable {
            n_inputs: array.n_inputs,
            n_rows: array.n_rows(),
            on: array.cells.iter().map(|s| phys.current_unchecked(s.0, on_v)).collect(),
            off: array.cells.iter().map(|s| phys.current_unchecked(s.0, off_v)).collect(),
        })
    }

    pub(crate) fn currents(&self, inputs: &[bool], noise: &mut impl CellNoise<T>) -> Result<DifferentialCurrents<T>> {
        if inputs.len() != self.n_inputs {
            return Err(Error::Shape(format!("input vector of length {} for {} inputs", inputs.len(), self.n_inputs)));
        }
        let n = self.n_inputs;
        let rows = (0..self.n_rows)
            .map(|r| {
                let (on, off) = (&self.on[r * n..(r + 1) * n], &self.off[r * n..(r + 1) * n]);
                let mut acc = T::zero();
                for j in 0..n {
                    acc += noise.apply(if inputs[j] { on[j] } else { off[j] });
                }
                acc
            })
            .collect();
        Ok(split_rows(rows))
    }
}

/// Total differential cells for a layered topology with one bias input per
/// layer: `2 * sum (n_in + 1) * n_out`.
pub fn cell_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| 2 * (w[0] + 1) * w[1]).sum()
}
