//! The assembled three-layer perceptron: gate-driven first array, hidden
//! summing amplifiers with rectified-tanh activation, gate-coupled second
//! array, output summing amplifiers.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossbar::{
    accumulate, gate_driven_voltages, vmm_gate_coupled_noisy, CellNoise, CrossbarArray, DifferentialCurrents,
    GateDrivenTable, Noiseless, RelativeGaussian, VmmMode, COUPLED_MAX,
};
use crate::device::{relative_noise_variance, DevicePhysics};
use crate::error::{Error, Result};
use crate::neurons::{rectified_tanh, summing_amp, NeuronParams};
use crate::scalar::Scalar;
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub n_inputs: usize,
    pub n_hidden: usize,
    pub n_outputs: usize,
    pub bias_nodes: bool,
}

impl Default for NetworkTopology {
    fn default() -> Self {
        NetworkTopology { n_inputs: 784, n_hidden: 64, n_outputs: 10, bias_nodes: true }
    }
}

impl NetworkTopology {
    pub fn new(n_inputs: usize, n_hidden: usize, n_outputs: usize) -> Self {
        NetworkTopology { n_inputs, n_hidden, n_outputs, bias_nodes: true }
    }

    pub fn layer1_width(&self) -> usize {
        self.n_inputs + self.bias_nodes as usize
    }

    pub fn layer2_width(&self) -> usize {
        self.n_hidden + self.bias_nodes as usize
    }

    pub fn cell_count(&self) -> usize {
        2 * (self.layer1_width() * self.n_hidden + self.layer2_width() * self.n_outputs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_inputs == 0 || self.n_hidden == 0 || self.n_outputs == 0 {
            return Err(Error::Shape("all layer sizes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Drain and source biases of the two arrays (V).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrayBiases {
    pub layer1_drain: f64,
    pub layer1_source: f64,
    pub layer2_drain: f64,
    pub layer2_source: f64,
}

impl Default for ArrayBiases {
    fn default() -> Self {
        ArrayBiases { layer1_drain: 2.7, layer1_source: 1.65, layer2_drain: 2.7, layer2_source: 1.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseMode {
    Off,
    /// Each cell current is replaced by one noisy read.
    Seeded(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct NetworkInstance<T> {
    pub topology: NetworkTopology,
    pub array1: CrossbarArray<T>,
    pub array2: CrossbarArray<T>,
    pub hidden: NeuronParams<T>,
    pub output: NeuronParams<T>,
    pub phys: DevicePhysics<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationResult<T> {
    pub output_voltages: Vec<T>,
    pub predicted_class: usize,
    /// Winner minus runner-up (V).
    pub margin: T,
}

/// Every intermediate signal of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    /// Hidden summing-amplifier outputs (V).
    pub hidden_amp: Vec<T>,
    /// Hidden activation outputs, i.e. second-array gate voltages (V).
    pub hidden_act: Vec<T>,
    pub output_voltages: Vec<T>,
    /// Sum of every cell current in the first array (A).
    pub array1_current: T,
    pub array2_current: T,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn result(&self) -> ClassificationResult<T> {
        let (predicted_class, margin) = argmax_with_margin(&self.output_voltages);
        ClassificationResult { output_voltages: self.output_voltages.clone(), predicted_class, margin }
    }
}

/// Lowest index wins ties.
pub fn argmax_with_margin<T: Scalar>(v: &[T]) -> (usize, T) {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    let runner = v
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &x)| x)
        .fold(None, |m: Option<T>, x| Some(m.map_or(x, |m| m.max(x))));
    (best, runner.map_or(T::zero(), |r| v[best] - r))
}

#[derive(Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct SnapshotMeta<T> {
    topology: NetworkTopology,
    hidden: NeuronParams<T>,
    output: NeuronParams<T>,
    device: DevicePhysics<T>,
}

impl<T: Scalar> NetworkInstance<T> {
    /// Network with every cell erased to the baseline state.
    pub fn erased(
        topology: NetworkTopology,
        phys: DevicePhysics<T>,
        hidden: NeuronParams<T>,
        output: NeuronParams<T>,
        biases: ArrayBiases,
    ) -> Result<Self> {
        topology.validate()?;
        let base = phys.baseline_state();
        let array1 = CrossbarArray::filled(
            topology.layer1_width(),
            topology.n_hidden,
            base,
            T::lit(biases.layer1_drain),
            T::lit(biases.layer1_source),
            VmmMode::GateDriven,
        );
        let array2 = CrossbarArray::filled(
            topology.layer2_width(),
            topology.n_outputs,
            base,
            T::lit(biases.layer2_drain),
            T::lit(biases.layer2_source),
            VmmMode::GateCoupled,
        );
        let net = NetworkInstance { topology, array1, array2, hidden, output, phys };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.topology;
        t.validate()?;
        self.phys.validate()?;
        self.hidden.validate()?;
        self.output.validate()?;
        if self.array1.n_inputs() != t.layer1_width() || self.array1.n_outputs() != t.n_hidden {
            return Err(Error::Shape(format!(
                "array 1 is {}x{}, topology needs {}x{}",
                self.array1.n_rows(),
                self.array1.n_inputs(),
                2 * t.n_hidden,
                t.layer1_width()
            )));
        }
        if self.array2.n_inputs() != t.layer2_width() || self.array2.n_outputs() != t.n_outputs {
            return Err(Error::Shape(format!(
                "array 2 is {}x{}, topology needs {}x{}",
                self.array2.n_rows(),
                self.array2.n_inputs(),
                2 * t.n_outputs,
                t.layer2_width()
            )));
        }
        if self.array1.mode != VmmMode::GateDriven || self.array2.mode != VmmMode::GateCoupled {
            return Err(Error::Param("array 1 must be gate-driven and array 2 gate-coupled".into()));
        }
        self.array1.validate(&self.phys)?;
        self.array2.validate(&self.phys)
    }

    fn check_pattern(&self, pattern: &[bool]) -> Result<()> {
        if pattern.len() != self.topology.n_inputs {
            return Err(Error::Shape(format!(
                "pattern of length {} for a network with {} inputs",
                pattern.len(),
                self.topology.n_inputs
            )));
        }
        Ok(())
    }

    fn layer1_inputs(&self, pattern: &[bool]) -> Vec<bool> {
        let mut x = pattern.to_vec();
        if self.topology.bias_nodes {
            x.push(true);
        }
        x
    }

    fn noise_sigma(&self) -> f64 {
        relative_noise_variance(&self.phys).f64().sqrt()
    }

    /// Reference forward pass that evaluates every cell from its state.
    pub fn forward(&self, pattern: &[bool], noise: NoiseMode) -> Result<ForwardTrace<T>> {
        self.check_pattern(pattern)?;
        let gates: Vec<T> = gate_driven_voltages(&self.layer1_inputs(pattern));
        match noise {
            NoiseMode::Off => self.propagate(&gates, &mut Noiseless),
            NoiseMode::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let sigma = self.noise_sigma();
                self.propagate(&gates, &mut RelativeGaussian { rng: &mut rng, sigma })
            }
        }
    }

    fn propagate(&self, gates: &[T], noise: &mut impl CellNoise<T>) -> Result<ForwardTrace<T>> {
        let c1 = accumulate(&self.array1, &self.phys, gates, noise);
        self.second_layer(c1, noise)
    }

    fn second_layer(
        &self,
        c1: DifferentialCurrents<T>,
        noise: &mut impl CellNoise<T>,
    ) -> Result<ForwardTrace<T>> {
        let hidden_amp: Vec<T> = c1
            .i_plus
            .iter()
            .zip(&c1.i_minus)
            .map(|(&p, &m)| summing_amp(p, m, &self.hidden))
            .collect();
        let hidden_act: Vec<T> = hidden_amp.iter().map(|&v| rectified_tanh(v, &self.hidden)).collect();
        let mut v2 = hidden_act.clone();
        if self.topology.bias_nodes {
            v2.push(T::lit(COUPLED_MAX));
        }
        let c2 = vmm_gate_coupled_noisy(&self.array2, &v2, &self.phys, noise)?;
        let output_voltages = c2
            .i_plus
            .iter()
            .zip(&c2.i_minus)
            .map(|(&p, &m)| summing_amp(p, m, &self.output))
            .collect();
        Ok(ForwardTrace {
            hidden_amp,
            hidden_act,
            output_voltages,
            array1_current: c1.total(),
            array2_current: c2.total(),
        })
    }

    pub fn classify(&self, pattern: &[bool], noise: NoiseMode) -> Result<ClassificationResult<T>> {
        Ok(self.forward(pattern, noise)?.result())
    }

    /// Precomputes first-array currents for batch inference.
    pub fn compile(&self) -> Result<CompiledNetwork<'_, T>> {
        Ok(CompiledNetwork { net: self, table1: GateDrivenTable::new(&self.array1, &self.phys)?, sigma: self.noise_sigma() })
    }

    /// Writes `network.json` plus the two array grids into `dir`.
    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = SnapshotMeta {
            topology: self.topology,
            hidden: self.hidden.clone(),
            output: self.output.clone(),
            device: self.phys.clone(),
        };
        fs::write(dir.join("network.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        self.array1.write_snapshot(&dir.join("array1.fgarr"))?;
        self.array2.write_snapshot(&dir.join("array2.fgarr"))
    }

    pub fn read_snapshot(dir: &Path) -> Result<Self> {
        let meta: SnapshotMeta<T> = serde_json::from_slice(&fs::read(dir.join("network.json"))?)?;
        let net = NetworkInstance {
            topology: meta.topology,
            array1: CrossbarArray::read_snapshot(&dir.join("array1.fgarr"))?,
            array2: CrossbarArray::read_snapshot(&dir.join("array2.fgarr"))?,
            hidden: meta.hidden,
            output: meta.output,
            phys: meta.device,
        };
        net.validate()?;
        Ok(net)
    }
}

/// A network with its first-array currents tabulated. Produces the same
/// results as [`NetworkInstance::forward`].
pub struct CompiledNetwork<'a, T> {
    net: &'a NetworkInstance<T>,
    table1: GateDrivenTable<T>,
    sigma: f64,
}

impl<T: Scalar> CompiledNetwork<'_, T> {
    pub fn network(&self) -> &NetworkInstance<T> {
        self.net
    }

    pub fn forward(&self, pattern: &[bool], noise: NoiseMode) -> Result<ForwardTrace<T>> {
        self.net.check_pattern(pattern)?;
        let x = self.net.layer1_inputs(pattern);
        match noise {
            NoiseMode::Off => {
                let c1 = self.table1.currents(&x, &mut Noiseless)?;
                self.net.second_layer(c1, &mut Noiseless)
            }
            NoiseMode::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut noise = RelativeGaussian { rng: &mut rng, sigma: self.sigma };
                let c1 = self.table1.currents(&x, &mut noise)?;
                self.net.second_layer(c1, &mut noise)
            }
        }
    }

    /// Forward passes over a batch in parallel; pattern `i` under
    /// `NoiseMode::Seeded(s)` uses a seed derived from `(s, i)`.
    pub fn forward_batch(&self, patterns: &[Vec<bool>], noise: NoiseMode) -> Result<Vec<ForwardTrace<T>>> {
        patterns
            .par_iter()
            .enumerate()
            .map(|(i, p)| self.forward(p, per_pattern(noise, i)))
            .collect()
    }
}

pub(crate) fn per_pattern(noise: NoiseMode, index: usize) -> NoiseMode {
    match noise {
        NoiseMode::Off => NoiseMode::Off,
        NoiseMode::Seeded(s) => NoiseMode::Seeded(seeds::derive(s, seeds::stream::NOISE, index as u64)),
    }
}

pub const HISTOGRAM_BINS: usize = 50;

/// Per-output-neuron voltage histograms split into own-class and other-class
/// populations, over a shared uniform binning of the observed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputHistograms {
    pub v_min: f64,
    pub v_max: f64,
    pub bins: usize,
    /// Counts are meant for log-scale display.
    pub log_scale_counts: bool,
    pub own_class: Vec<Vec<u64>>,
    pub other_class: Vec<Vec<u64>>,
}

impl OutputHistograms {
    pub fn build(outputs: &[Vec<f64>], labels: &[u8], n_outputs: usize, bins: usize) -> Self {
        let (lo, hi) = outputs
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut own = vec![vec![0u64; bins]; n_outputs];
        let mut other = vec![vec![0u64; bins]; n_outputs];
        for (vs, &label) in outputs.iter().zip(labels) {
            for (k, &v) in vs.iter().enumerate() {
                let b = (((v - lo) / width) as usize).min(bins - 1);
                if k == label as usize {
                    own[k][b] += 1;
                } else {
                    other[k][b] += 1;
                }
            }
        }
        OutputHistograms { v_min: lo, v_max: hi, bins, log_scale_counts: true, own_class: own, other_class: other }
    }

    pub fn to_csv(&self) -> String {
        let width = if self.v_max > self.v_min { (self.v_max - self.v_min) / self.bins as f64 } else { 1.0 };
        let mut s = String::from("neuron,bin,v_lo,v_hi,own_class,other_class\n");
        for k in 0..self.own_class.len() {
            for b in 0..self.bins {
                let lo = self.v_min + b as f64 * width;
                s += &format!(
                    "{k},{b},{lo:.6},{:.6},{},{}\n",
                    lo + width,
                    self.own_class[k][b],
                    self.other_class[k][b]
                );
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_patterns: usize,
    pub n_correct: usize,
    pub fidelity: f64,
    /// `confusion[label][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub mean_margin_v: f64,
    pub histograms: OutputHistograms,
}

/// Classifies every pattern and tallies fidelity and output histograms.
pub fn evaluate<T: Scalar>(
    net: &NetworkInstance<T>,
    patterns: &[Vec<bool>],
    labels: &[u8],
    noise: NoiseMode,
) -> Result<EvaluationReport> {
    if patterns.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    if patterns.len() != labels.len() {
        return Err(Error::Data(format!("{} patterns but {} labels", patterns.len(), labels.len())));
    }
    let n_out = net.topology.n_outputs;
    if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= n_out) {
        return Err(Error::Data(format!("label {l} at index {i} out of range for {n_out} outputs")));
    }
    let traces = net.compile()?.forward_batch(patterns, noise)?;
    let mut confusion = vec![vec![0usize; n_out]; n_out];
    let mut margin = 0.0;
    let mut outputs = Vec::with_capacity(traces.len());
    for (t, &l) in traces.iter().zip(labels) {
        let r = t.result();
        confusion[l as usize][r.predicted_class] += 1;
        margin += r.margin.f64();
        outputs.push(t.output_voltages.iter().map(|v| v.f64()).collect::<Vec<_>>());
    }
    let n_correct = (0..n_out).map(|k| confusion[k][k]).sum();
    Ok(EvaluationReport {
        n_patterns: patterns.len(),
        n_correct,
        fidelity: n_correct as f64 / patterns.len() as f64,
        confusion,
        mean_margin_v: margin / patterns.len() as f64,
        histograms: OutputHistograms::build(&outputs, labels, n_out, HISTOGRAM_BINS),
    })
}
