//! Behavioral neuron circuits: a differential summing opamp pair followed,
//! in the hidden layer, by a rectified-tanh activation stage.

use serde::{Deserialize, Serialize};

use crate::crossbar::{COUPLED_MAX, COUPLED_MIN};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Opamp supply rails (V).
pub const RAIL_LOW: f64 = 0.0;
pub const RAIL_HIGH: f64 = 2.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuronParams<T> {
    /// Feedback resistance of the summing amplifier (ohm).
    pub r_f: T,
    /// Output common-mode reference (V).
    pub v_bias: T,
    /// Small-signal gain of the activation stage (V/V).
    pub act_gain: T,
    /// Activation output range (V).
    pub v_out_min: T,
    pub v_out_max: T,
    /// First-order settling time constant (s).
    pub settle_tau: T,
    /// Input-referred opamp offset (V).
    pub offset: T,
    /// Opamp open-loop gain; `None` is ideal.
    pub open_loop_gain: Option<T>,
}

impl<T: Scalar> NeuronParams<T> {
    pub fn hidden() -> Self {
        NeuronParams {
            r_f: T::lit(16e3),
            v_bias: T::lit(1.35),
            act_gain: T::lit(50.0),
            v_out_min: T::lit(COUPLED_MIN),
            v_out_max: T::lit(COUPLED_MAX),
            settle_tau: T::lit(55e-9),
            offset: T::zero(),
            open_loop_gain: None,
        }
    }

    pub fn output() -> Self {
        NeuronParams { r_f: T::lit(128e3), ..Self::hidden() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_f > T::zero()) {
            return Err(Error::Param("r_f must be > 0".into()));
        }
        if !(self.v_out_min < self.v_out_max) {
            return Err(Error::Param("v_out_min must be below v_out_max".into()));
        }
        if !(self.settle_tau > T::zero()) {
            return Err(Error::Param("settle_tau must be > 0".into()));
        }
        if let Some(a) = self.open_loop_gain {
            if !(a > T::zero()) {
                return Err(Error::Param("open_loop_gain must be > 0".into()));
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Default for NeuronParams<T> {
    fn default() -> Self {
        Self::hidden()
    }
}

/// Differential transimpedance stage: `v_bias + r_f * (i_plus - i_minus)`,
/// clamped to the supply rails.
pub fn summing_amp<T: Scalar>(i_plus: T, i_minus: T, params: &NeuronParams<T>) -> T {
    let mut gain = params.r_f;
    if let Some(a) = params.open_loop_gain {
        gain = gain * a / (T::one() + a);
    }
    let v = params.v_bias + params.offset + gain * (i_plus - i_minus);
    v.max(T::lit(RAIL_LOW)).min(T::lit(RAIL_HIGH))
}

/// `v_out_min + (v_out_max - v_out_min) * max(0, tanh(act_gain * (v_in - v_bias)))`.
pub fn rectified_tanh<T: Scalar>(v_in: T, params: &NeuronParams<T>) -> T {
    let x = v_in - params.v_bias;
    let t = (params.act_gain * x).tanh().max(T::zero());
    params.v_out_min + (params.v_out_max - params.v_out_min) * t
}

/// First-order approach toward `v_target` over `dt` seconds.
pub fn settle<T: Scalar>(v_target: T, v_current: T, dt: T, params: &NeuronParams<T>) -> T {
    v_current + (v_target - v_current) * (T::one() - (-dt / params.settle_tau).exp())
}
