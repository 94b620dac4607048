//! Behavioral model of a single split-gate floating-gate memory cell.
//!
//! The cell is described in subthreshold by a clamped exponential,
//!
//! ```text
//! I = clamp(i_floor, i_ref * exp(beta(v_t) * (v_gs - v_t)), i_sat)
//! beta(v_t) = beta0 + beta_state_coeff * (v_t - v_t_mid)
//! ```
//!
//! so the memory state `v_t` is the gate voltage at which the cell carries
//! `i_ref`. Drain bias is validated but otherwise ignored: the arrays always
//! run at a fixed drain bias well above the subthreshold saturation voltage.

mod noise;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use noise::{fit_power_law, periodogram, relative_noise_variance, synthesize_power_law};

/// Upper sanity bound on applied gate voltage.
pub const V_GS_MAX: f64 = 5.0;

/// Programmed analog state of one cell, expressed as its effective threshold
/// voltage in volts.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellState<T>(pub T);

impl<T: Scalar> CellState<T> {
    pub fn new(v_t: T) -> Self {
        CellState(v_t)
    }

    /// Builds a state and checks it against the programmable window.
    pub fn checked(v_t: T, phys: &DevicePhysics<T>) -> Result<Self> {
        let s = CellState(v_t);
        phys.check_state(s)?;
        Ok(s)
    }

    #[inline]
    pub fn v_t(self) -> T {
        self.0
    }
}

/// Gate-source and drain-source voltages applied to a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint<T> {
    pub v_gs: T,
    pub v_ds: T,
}

impl<T: Scalar> BiasPoint<T> {
    pub fn new(v_gs: T, v_ds: T) -> Self {
        BiasPoint { v_gs, v_ds }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_ds >= T::zero()) {
            return Err(Error::Domain(format!("v_ds = {} V must be >= 0", self.v_ds)));
        }
        if !(self.v_gs >= T::zero() && self.v_gs <= T::lit(V_GS_MAX)) {
            return Err(Error::Domain(format!(
                "v_gs = {} V outside sanity bound [0, {V_GS_MAX}] V",
                self.v_gs
            )));
        }
        Ok(())
    }
}

/// Parameters of the cell model. Serialized as the `[device]` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DevicePhysics<T> {
    /// Current at zero overdrive, `v_gs == v_t` (A).
    pub i_ref: T,
    /// Subthreshold log slope at the middle of the window (1/V).
    pub beta0: T,
    /// Linear sensitivity of the log slope to the memory state (1/V^2).
    pub beta_state_coeff: T,
    /// Upper clip current (A).
    pub i_sat: T,
    /// Leakage floor current (A).
    pub i_floor: T,
    /// Flicker-noise PSD exponent, `S(f) ~ 1/f^gamma`.
    pub noise_exponent: T,
    /// Current-noise PSD at 1 Hz for a cell carrying `i_ref` (A^2/Hz).
    /// The PSD scales with the square of the cell current.
    pub noise_amp: T,
    /// Lower edge of the band a single current read integrates noise over (Hz).
    pub noise_f_lo: T,
    /// Upper edge of that band (Hz).
    pub noise_f_hi: T,
    /// Retention drift of `v_t` per decade of elapsed time (V).
    pub drift_rate: T,
    /// Time constant of the log-time drift law (s).
    pub drift_t0: T,
    /// Programmable window, lower edge (V). Highest-conductance state.
    pub v_t_min: T,
    /// Programmable window, upper edge (V). Erased, lowest-conductance state.
    pub v_t_max: T,
}

impl<T: Scalar> Default for DevicePhysics<T> {
    fn default() -> Self {
        DevicePhysics {
            i_ref: T::lit(10e-9),
            beta0: T::lit(8.0),
            beta_state_coeff: T::lit(-0.5),
            i_sat: T::lit(2e-6),
            i_floor: T::lit(1e-12),
            noise_exponent: T::lit(1.6),
            noise_amp: T::lit(1e-22),
            noise_f_lo: T::lit(500.0 / 65536.0),
            noise_f_hi: T::lit(250.0),
            drift_rate: T::lit(4e-5),
            drift_t0: T::lit(1.0),
            v_t_min: T::lit(1.0),
            v_t_max: T::lit(4.5),
        }
    }
}

impl<T: Scalar> DevicePhysics<T> {
    #[inline]
    pub fn v_t_mid(&self) -> T {
        (self.v_t_min + self.v_t_max) * T::lit(0.5)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Param(m));
        if !(self.i_floor >= T::zero()) || !(self.i_floor < self.i_sat) {
            return bad(format!("need 0 <= i_floor ({}) < i_sat ({})", self.i_floor, self.i_sat));
        }
        if !(self.i_ref > self.i_floor && self.i_ref < self.i_sat) {
            return bad("i_ref must lie strictly between i_floor and i_sat".into());
        }
        if !(self.beta0 > T::zero()) {
            return bad(format!("beta0 = {} must be > 0", self.beta0));
        }
        if !(self.noise_exponent > T::zero()) {
            return bad("noise_exponent must be > 0".into());
        }
        if !(self.noise_amp >= T::zero()) || !(self.noise_f_lo > T::zero() && self.noise_f_hi > self.noise_f_lo) {
            return bad("noise_amp must be >= 0 and 0 < noise_f_lo < noise_f_hi".into());
        }
        if !(self.drift_rate >= T::zero() && self.drift_t0 > T::zero()) {
            return bad("drift_rate must be >= 0 and drift_t0 > 0".into());
        }
        if !(self.v_t_min < self.v_t_max) {
            return bad("v_t_min must be below v_t_max".into());
        }
        // Current must fall with v_t at every legal bias: the overdrive
        // derivative beta(v_t) - k*(v_gs - v_t) stays positive.
        let beta_lo = self.beta_of_v_t(self.v_t_min).min(self.beta_of_v_t(self.v_t_max));
        if !(beta_lo > T::zero()) {
            return bad("log slope becomes non-positive inside the window".into());
        }
        let span = self.v_t_max.max(T::lit(V_GS_MAX) - self.v_t_min);
        if !(self.beta_state_coeff.abs() * span < beta_lo) {
            return bad("beta_state_coeff too large: current no longer monotone in v_t".into());
        }
        Ok(())
    }

    pub fn check_state(&self, s: CellState<T>) -> Result<()> {
        if s.0 >= self.v_t_min && s.0 <= self.v_t_max {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "v_t = {} V outside window [{}, {}] V",
                s.0, self.v_t_min, self.v_t_max
            )))
        }
    }

    #[inline]
    pub(crate) fn beta_of_v_t(&self, v_t: T) -> T {
        self.beta0 + self.beta_state_coeff * (v_t - self.v_t_mid())
    }

    /// Closed-form current without domain checks. Used by the array kernels
    /// after the array has been validated once.
    #[inline]
    pub(crate) fn current_unchecked(&self, v_t: T, v_gs: T) -> T {
        let beta = self.beta_of_v_t(v_t);
        let i = self.i_ref * (beta * (v_gs - v_t)).exp();
        i.max(self.i_floor).min(self.i_sat)
    }

    /// Erased state: the high-`v_t` end of the window.
    pub fn baseline_state(&self) -> CellState<T> {
        CellState(self.v_t_max)
    }

    pub fn clamp_state(&self, s: CellState<T>) -> CellState<T> {
        CellState(s.0.max(self.v_t_min).min(self.v_t_max))
    }
}

/// Subthreshold log slope of a cell in the given state.
pub fn beta_of_state<T: Scalar>(state: CellState<T>, phys: &DevicePhysics<T>) -> Result<T> {
    phys.check_state(state)?;
    Ok(phys.beta_of_v_t(state.0))
}

/// Noiseless drain current of a cell.
pub fn cell_current<T: Scalar>(state: CellState<T>, bias: BiasPoint<T>, phys: &DevicePhysics<T>) -> Result<T> {
    phys.check_state(state)?;
    bias.validate()?;
    Ok(phys.current_unchecked(state.0, bias.v_gs))
}

/// Inverse of [`cell_current`]: the state that carries `target` at `bias`.
///
/// `ln(I/i_ref) = (B - k*u) * u` with overdrive `u = v_gs - v_t` and
/// `B = beta0 + k*(v_gs - v_t_mid)` is a quadratic in `u`; the root continuous
/// with `u = L/B` at `k = 0` is taken in its cancellation-free form.
pub fn state_for_current<T: Scalar>(target: T, bias: BiasPoint<T>, phys: &DevicePhysics<T>) -> Result<CellState<T>> {
    bias.validate()?;
    if !(target > phys.i_floor) {
        return Err(Error::Range {
            target: target.f64(),
            bound: "lower (i_floor)",
            limit: phys.i_floor.f64(),
        });
    }
    if !(target < phys.i_sat) {
        return Err(Error::Range {
            target: target.f64(),
            bound: "upper (i_sat)",
            limit: phys.i_sat.f64(),
        });
    }
    let state = solve_v_t(target, bias.v_gs, phys)
        .map(CellState)
        .ok_or_else(|| Error::Domain(format!("no real state carries {target} A at v_gs = {} V", bias.v_gs)))?;
    phys.check_state(state).map_err(|_| {
        Error::Domain(format!(
            "{:e} A at v_gs = {} V needs v_t = {} V, outside window [{}, {}] V",
            target.f64(),
            bias.v_gs,
            state.0,
            phys.v_t_min,
            phys.v_t_max
        ))
    })?;
    Ok(state)
}

/// Unclamped threshold voltage carrying `target` at `v_gs`, ignoring the
/// programming window.
pub(crate) fn solve_v_t<T: Scalar>(target: T, v_gs: T, phys: &DevicePhysics<T>) -> Option<T> {
    let l = (target / phys.i_ref).ln();
    let k = phys.beta_state_coeff;
    let b = phys.beta0 + k * (v_gs - phys.v_t_mid());
    let disc = b * b - T::lit(4.0) * k * l;
    if !(disc >= T::zero()) {
        return None;
    }
    Some(v_gs - T::lit(2.0) * l / (b + disc.sqrt()))
}

/// Current trace with a `1/f^gamma` fluctuation superimposed on the
/// noiseless current. The trace mean is exactly the noiseless current.
pub fn sample_noisy_current<T: Scalar>(
    state: CellState<T>,
    bias: BiasPoint<T>,
    phys: &DevicePhysics<T>,
    n_samples: usize,
    sample_rate: T,
    seed: u64,
) -> Result<Vec<T>> {
    if n_samples < 2 {
        return Err(Error::Param("n_samples must be >= 2".into()));
    }
    if !(sample_rate > T::zero()) {
        return Err(Error::Param("sample_rate must be > 0".into()));
    }
    let i0 = cell_current(state, bias, phys)?;
    if phys.noise_amp == T::zero() {
        return Ok(vec![i0; n_samples]);
    }
    let scale = (i0 / phys.i_ref).f64();
    let amp = phys.noise_amp.f64() * scale * scale;
    let fluct = synthesize_power_law(n_samples, sample_rate.f64(), amp, phys.noise_exponent.f64(), seed);
    Ok(fluct.into_iter().map(|x| i0 + T::lit(x)).collect())
}

/// Applies a log-time Gaussian perturbation of `v_t`, with standard deviation
/// `drift_rate * log10(1 + elapsed/t0)`. The result is clamped to the window.
pub fn apply_retention_drift<T: Scalar>(
    state: CellState<T>,
    elapsed_seconds: T,
    phys: &DevicePhysics<T>,
    seed: u64,
) -> Result<CellState<T>> {
    phys.check_state(state)?;
    if !(elapsed_seconds >= T::zero()) {
        return Err(Error::Param("elapsed_seconds must be >= 0".into()));
    }
    let sigma = drift_sigma(elapsed_seconds, phys);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: f64 = StandardNormal.sample(&mut rng);
    Ok(phys.clamp_state(CellState(state.0 + sigma * T::lit(n))))
}

pub(crate) fn drift_sigma<T: Scalar>(elapsed: T, phys: &DevicePhysics<T>) -> T {
    phys.drift_rate * (T::one() + elapsed / phys.drift_t0).log10()
}
