//! Simulation of a two-layer floating-gate crossbar classifier: device
//! physics, analog vector-matrix multiplication, neuron circuits, weight
//! import with programming error, and power/latency accounting.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` case.

// Negated float comparisons deliberately reject NaN parameters.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crossbar;
pub mod device;
pub mod error;
pub mod flatbin;
pub mod harness;
pub mod import_pipeline;
pub mod network;
pub mod neurons;
pub mod perf_model;
pub mod scalar;
pub mod seeds;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Physics = device::DevicePhysics<f64>;
pub type Array = crossbar::CrossbarArray<f64>;
pub type Neuron = neurons::NeuronParams<f64>;
pub type Network = network::NetworkInstance<f64>;
pub type Weights = import_pipeline::TrainedWeights<f64>;

pub type Physics32 = device::DevicePhysics<f32>;
pub type Network32 = network::NetworkInstance<f32>;
