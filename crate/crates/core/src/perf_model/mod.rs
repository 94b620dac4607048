//! Static power, latency and energy per classification, plus analytic
//! projections of large multiplexed networks onto other technologies.

mod projection;

pub use projection::{
    builtin_profile, project_scaling, LayerShape, Projection, ReferencePoint, TechProfile, Workload,
    BUILTIN_PROFILES, REFERENCE_POINTS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkInstance, NoiseMode};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rail {
    pub voltage: f64,
    /// Static current drawn from the rail (A).
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SupplyRails(pub Vec<Rail>);

impl Default for SupplyRails {
    fn default() -> Self {
        SupplyRails(vec![Rail { voltage: 2.7, current: 5.6e-3 }, Rail { voltage: 1.05, current: 2.9e-3 }])
    }
}

impl SupplyRails {
    pub fn validate(&self) -> Result<()> {
        for r in &self.0 {
            if !(r.voltage > 0.0) || !(r.current >= 0.0) {
                return Err(Error::Param(format!("rail {} V / {} A: need V > 0 and I >= 0", r.voltage, r.current)));
            }
        }
        Ok(())
    }

    pub fn power(&self) -> f64 {
        self.0.iter().map(|r| r.voltage * r.current).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyMode {
    /// The configured upper bound.
    MeasuredBound,
    /// First-order settling of each neuron stage to 1%.
    SettlingModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerBasis {
    Rails,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerfConfig {
    pub rails: SupplyRails,
    /// Supply voltage the array currents are drawn from.
    pub array_supply_v: f64,
    /// Pattern-independent current of all neuron circuits (A).
    pub neuron_static_current: f64,
    pub neuron_supply_v: f64,
    pub latency_mode: LatencyMode,
    pub latency_bound_s: f64,
    /// Which power figure feeds the energy estimate.
    pub power_basis: PowerBasis,
}

impl Default for PerfConfig {
    fn default() -> Self {
        PerfConfig {
            rails: SupplyRails::default(),
            array_supply_v: 2.7,
            neuron_static_current: 6.16e-3,
            neuron_supply_v: 2.7,
            latency_mode: LatencyMode::MeasuredBound,
            latency_bound_s: 1e-6,
            power_basis: PowerBasis::Rails,
        }
    }
}

impl PerfConfig {
    pub fn validate(&self) -> Result<()> {
        self.rails.validate()?;
        if !(self.array_supply_v > 0.0 && self.neuron_supply_v > 0.0) {
            return Err(Error::Param("supply voltages must be > 0".into()));
        }
        if !(self.neuron_static_current >= 0.0) {
            return Err(Error::Param("neuron_static_current must be >= 0".into()));
        }
        if !(self.latency_bound_s > 0.0) {
            return Err(Error::Param("latency_bound_s must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-pattern array currents and the resulting mean power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticPower {
    /// Sum of every cell current in both arrays, per pattern (A).
    pub array_currents: Vec<f64>,
    pub mean_array_current: f64,
    pub neuron_static_current: f64,
    pub simulated_power_w: f64,
    pub rail_power_w: f64,
}

/// Noiseless total cell current of both arrays for each pattern.
pub fn array_currents<T: Scalar>(net: &NetworkInstance<T>, patterns: &[Vec<bool>]) -> Result<Vec<f64>> {
    let traces = net.compile()?.forward_batch(patterns, NoiseMode::Off)?;
    Ok(traces.iter().map(|t| (t.array1_current + t.array2_current).f64()).collect())
}

pub fn static_power<T: Scalar>(net: &NetworkInstance<T>, patterns: &[Vec<bool>], cfg: &PerfConfig) -> Result<StaticPower> {
    if patterns.is_empty() {
        return Err(Error::Data("static power needs at least one pattern".into()));
    }
    cfg.validate()?;
    let currents = array_currents(net, patterns)?;
    let mean = currents.iter().sum::<f64>() / currents.len() as f64;
    Ok(StaticPower {
        mean_array_current: mean,
        neuron_static_current: cfg.neuron_static_current,
        simulated_power_w: mean * cfg.array_supply_v + cfg.neuron_static_current * cfg.neuron_supply_v,
        rail_power_w: cfg.rails.power(),
        array_currents: currents,
    })
}

pub fn energy_per_classification(power_w: f64, latency_s: f64) -> Result<f64> {
    if !(latency_s > 0.0) {
        return Err(Error::Param(format!("latency {latency_s} s must be > 0")));
    }
    if !(power_w >= 0.0) {
        return Err(Error::Param(format!("power {power_w} W must be >= 0")));
    }
    Ok(power_w * latency_s)
}

/// Settling time of one first-order stage to 1% of its final value.
pub fn settle_to_one_percent(tau: f64) -> f64 {
    100f64.ln() * tau
}

pub fn latency_estimate<T: Scalar>(net: &NetworkInstance<T>, mode: LatencyMode, bound_s: f64) -> f64 {
    match mode {
        LatencyMode::MeasuredBound => bound_s,
        LatencyMode::SettlingModel => {
            settle_to_one_percent(net.hidden.settle_tau.f64()) + settle_to_one_percent(net.output.settle_tau.f64())
        }
    }
}

/// Uniform histogram over the observed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentHistogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl CurrentHistogram {
    pub fn build(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0u64; bins];
        for &v in values {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
        CurrentHistogram { lo, hi, counts }
    }

    pub fn to_csv(&self) -> String {
        let n = self.counts.len();
        let width = if self.hi > self.lo { (self.hi - self.lo) / n as f64 } else { 1.0 };
        let mut s = String::from("bin,i_lo_A,i_hi_A,count\n");
        for (b, c) in self.counts.iter().enumerate() {
            let lo = self.lo + b as f64 * width;
            s += &format!("{b},{lo:e},{:e},{c}\n", lo + width);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub n_patterns: usize,
    pub array_current_histogram: CurrentHistogram,
    pub mean_array_current_a: f64,
    pub min_array_current_a: f64,
    pub max_array_current_a: f64,
    pub neuron_static_current_a: f64,
    pub rail_power_w: f64,
    pub simulated_power_w: f64,
    pub power_basis: PowerBasis,
    pub avg_power_w: f64,
    pub latency_mode: LatencyMode,
    pub latency_s: f64,
    pub energy_j: f64,
}

pub const CURRENT_BINS: usize = 50;

pub fn perf_report<T: Scalar>(net: &NetworkInstance<T>, patterns: &[Vec<bool>], cfg: &PerfConfig) -> Result<PerfReport> {
    let sp = static_power(net, patterns, cfg)?;
    let avg_power_w = match cfg.power_basis {
        PowerBasis::Rails => sp.rail_power_w,
        PowerBasis::Simulated => sp.simulated_power_w,
    };
    let latency_s = latency_estimate(net, cfg.latency_mode, cfg.latency_bound_s);
    let energy_j = energy_per_classification(avg_power_w, latency_s)?;
    Ok(PerfReport {
        n_patterns: patterns.len(),
        array_current_histogram: CurrentHistogram::build(&sp.array_currents, CURRENT_BINS),
        mean_array_current_a: sp.mean_array_current,
        min_array_current_a: sp.array_currents.iter().cloned().fold(f64::INFINITY, f64::min),
        max_array_current_a: sp.array_currents.iter().cloned().fold(0.0, f64::max),
        neuron_static_current_a: sp.neuron_static_current,
        rail_power_w: sp.rail_power_w,
        simulated_power_w: sp.simulated_power_w,
        power_basis: cfg.power_basis,
        avg_power_w,
        latency_mode: cfg.latency_mode,
        latency_s,
        energy_j,
    })
}
