//! Time-multiplexed projection of large networks onto a technology profile.

use serde::{Deserialize, Serialize};

use super::PerfReport;
use crate::error::{Error, Result};
use crate::network::NetworkInstance;
use crate::scalar::Scalar;

/// Per-step cost model of one technology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechProfile {
    pub name: String,
    pub node: String,
    /// Sequential steps needed to cover the workload.
    pub multiplex_steps: u64,
    pub step_latency_s: f64,
    /// Average current of one active cell during a step (A).
    pub cell_current_a: f64,
    pub cell_supply_v: f64,
    /// Static power of one neuron circuit (W).
    pub neuron_power_w: f64,
    /// Multiplier on neuron power for peripheral overhead.
    pub neuron_overhead: f64,
    #[serde(default)]
    pub assumptions: Vec<String>,
}

pub const BUILTIN_PROFILES: [(&str, &str); 2] =
    [("esf1", include_str!("../../profiles/esf1.profile")), ("esf3", include_str!("../../profiles/esf3.profile"))];

pub fn builtin_profile(name: &str) -> Result<TechProfile> {
    let text = BUILTIN_PROFILES
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::Config(format!("unknown technology profile '{name}'")))?;
    TechProfile::parse(text)
}

impl TechProfile {
    pub fn parse(text: &str) -> Result<Self> {
        let p: TechProfile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.multiplex_steps == 0 {
            return Err(Error::Param("multiplex_steps must be >= 1".into()));
        }
        let nonneg = [self.step_latency_s, self.cell_current_a, self.cell_supply_v, self.neuron_power_w, self.neuron_overhead];
        if nonneg.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Param(format!("profile '{}' has a negative or non-finite field", self.name)));
        }
        Ok(())
    }

    /// Single-step profile that reproduces a simulated network's
    /// power and latency: cells share the mean array current, neurons share
    /// the static neuron power.
    pub fn from_measurement<T: Scalar>(name: &str, report: &PerfReport, net: &NetworkInstance<T>, supply_v: f64, neuron_supply_v: f64) -> Self {
        let w = Workload::mlp(net);
        let (cells, neurons) = (w.cells_per_step(), w.neurons_per_step());
        TechProfile {
            name: name.into(),
            node: "simulated".into(),
            multiplex_steps: 1,
            step_latency_s: report.latency_s,
            cell_current_a: report.mean_array_current_a / cells as f64,
            cell_supply_v: supply_v,
            neuron_power_w: report.neuron_static_current_a * neuron_supply_v / neurons as f64,
            neuron_overhead: 1.0,
            assumptions: vec!["derived from the simulated network's mean array current and latency".into()],
        }
    }

    pub fn step_power_w(&self, workload: &Workload) -> f64 {
        workload.cells_per_step() as f64 * self.cell_current_a * self.cell_supply_v
            + workload.neurons_per_step() as f64 * self.neuron_power_w * self.neuron_overhead
    }
}

/// One layer as it occupies the hardware during a single multiplex step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    /// Synaptic inputs per neuron, bias included.
    pub fan_in: u64,
    /// Neurons evaluated concurrently in one step.
    pub neurons: u64,
    /// Total neuron evaluations over all steps.
    pub evaluations: u64,
}

impl LayerShape {
    /// Convolution with one output pixel per channel per step.
    pub fn conv(name: &str, in_channels: u64, kernel: u64, out_channels: u64, out_size: u64) -> Self {
        LayerShape {
            name: name.into(),
            fan_in: kernel * kernel * in_channels + 1,
            neurons: out_channels,
            evaluations: out_channels * out_size * out_size,
        }
    }

    /// Differential pairs: two cells per weight.
    pub fn cells(&self) -> u64 {
        2 * self.fan_in * self.neurons
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub name: String,
    pub layers: Vec<LayerShape>,
}

impl Workload {
    /// The five convolutional layers of AlexNet, with the grouped fan-in of
    /// the original two-device layout for conv2, conv4 and conv5.
    pub fn alexnet_conv() -> Self {
        Workload {
            name: "alexnet-conv".into(),
            layers: vec![
                LayerShape::conv("conv1", 3, 11, 96, 55),
                LayerShape::conv("conv2", 48, 5, 256, 27),
                LayerShape::conv("conv3", 256, 3, 384, 13),
                LayerShape::conv("conv4", 192, 3, 384, 13),
                LayerShape::conv("conv5", 192, 3, 256, 13),
            ],
        }
    }

    pub fn mlp<T: Scalar>(net: &NetworkInstance<T>) -> Self {
        let t = &net.topology;
        let b = u64::from(t.bias_nodes);
        Workload {
            name: "mlp".into(),
            layers: vec![
                LayerShape {
                    name: "hidden".into(),
                    fan_in: t.n_inputs as u64 + b,
                    neurons: t.n_hidden as u64,
                    evaluations: t.n_hidden as u64,
                },
                LayerShape {
                    name: "output".into(),
                    fan_in: t.n_hidden as u64 + b,
                    neurons: t.n_outputs as u64,
                    evaluations: t.n_outputs as u64,
                },
            ],
        }
    }

    pub fn cells_per_step(&self) -> u64 {
        self.layers.iter().map(LayerShape::cells).sum()
    }

    pub fn neurons_per_step(&self) -> u64 {
        self.layers.iter().map(|l| l.neurons).sum()
    }

    pub fn total_evaluations(&self) -> u64 {
        self.layers.iter().map(|l| l.evaluations).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub tech: String,
    pub node: String,
    pub workload: String,
    pub multiplex_steps: u64,
    pub cells_per_step: u64,
    pub neurons_per_step: u64,
    pub step_power_w: f64,
    pub time_s: f64,
    pub energy_j: f64,
    pub assumptions: Vec<String>,
}

/// `time = steps * t_step`, `energy = time * step power`.
pub fn project_scaling(workload: &Workload, tech: &TechProfile) -> Result<Projection> {
    if workload.layers.is_empty() {
        return Err(Error::Param("workload has no layers".into()));
    }
    tech.validate()?;
    let step_power_w = tech.step_power_w(workload);
    let time_s = tech.multiplex_steps as f64 * tech.step_latency_s;
    Ok(Projection {
        tech: tech.name.clone(),
        node: tech.node.clone(),
        workload: workload.name.clone(),
        multiplex_steps: tech.multiplex_steps,
        cells_per_step: workload.cells_per_step(),
        neurons_per_step: workload.neurons_per_step(),
        step_power_w,
        time_s,
        energy_j: time_s * step_power_w,
        assumptions: tech.assumptions.clone(),
    })
}

/// Published figures for other platforms, listed alongside projections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferencePoint {
    pub name: &'static str,
    pub node: &'static str,
    pub time_s: f64,
    pub energy_j: f64,
}

pub const REFERENCE_POINTS: [ReferencePoint; 3] = [
    ReferencePoint { name: "GPU", node: "28 nm", time_s: 1.5e-2, energy_j: 1.5e-1 },
    ReferencePoint { name: "digital ASIC", node: "65 nm", time_s: 2.9e-2, energy_j: 0.8e-2 },
    ReferencePoint { name: "visual cortex", node: "biological", time_s: 3e-2, energy_j: 5e-8 },
];
