use flashnet::device::{
    apply_retention_drift, beta_of_state, cell_current, relative_noise_variance, sample_noisy_current,
    state_for_current, BiasPoint, CellState, DevicePhysics,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn current_is_monotone_in_gate(v_t in 1.0f64..4.5, v in 0.0f64..4.9, dv in 1e-3f64..0.1) {
        let p = DevicePhysics::<f64>::default();
        let s = CellState(v_t);
        let a = cell_current(s, BiasPoint::new(v, 1.0), &p).unwrap();
        let b = cell_current(s, BiasPoint::new(v + dv, 1.0), &p).unwrap();
        prop_assert!(b >= a);
        if a > p.i_floor && b < p.i_sat {
            prop_assert!(b > a);
        }
    }

    #[test]
    fn inverse_round_trips(v_t in 1.0f64..4.5, v in 1.1f64..4.2) {
        let p = DevicePhysics::<f64>::default();
        let bias = BiasPoint::new(v, 1.0);
        let i = cell_current(CellState(v_t), bias, &p).unwrap();
        prop_assume!(i > p.i_floor * 1.01 && i < p.i_sat * 0.99);
        let back = state_for_current(i, bias, &p).unwrap();
        prop_assert!((back.v_t() - v_t).abs() < 1e-9);
    }

    #[test]
    fn drift_stays_in_window(v_t in 1.0f64..4.5, t in 0.0f64..1e9, seed in any::<u64>()) {
        let p = DevicePhysics::<f64>::default();
        let s = apply_retention_drift(CellState(v_t), t, &p, seed).unwrap();
        prop_assert!((p.v_t_min..=p.v_t_max).contains(&s.v_t()));
    }
}

#[test]
fn log_slope_spread_across_window() {
    let p = DevicePhysics::<f64>::default();
    let lo = beta_of_state(CellState(p.v_t_min), &p).unwrap();
    let hi = beta_of_state(CellState(p.v_t_max), &p).unwrap();
    let spread = (lo - hi).abs() / lo.max(hi);
    assert!(spread > 0.1 && spread < 0.3, "{spread}");
}

#[test]
fn noisy_trace_is_reproducible_and_bounded() {
    let p = DevicePhysics::<f64>::default();
    let bias = BiasPoint::new(2.7, 1.6);
    let s = state_for_current(300e-9, bias, &p).unwrap();
    let a = sample_noisy_current(s, bias, &p, 4096, 1000.0, 3).unwrap();
    assert_eq!(a, sample_noisy_current(s, bias, &p, 4096, 1000.0, 3).unwrap());
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    assert!((mean / 300e-9 - 1.0).abs() < 1e-9);
    assert!(relative_noise_variance(&p).sqrt() <= 0.01);
}

#[test]
fn invalid_inputs_rejected() {
    let p = DevicePhysics::<f64>::default();
    assert!(cell_current(CellState(5.0), BiasPoint::new(1.0, 1.0), &p).is_err());
    assert!(cell_current(CellState(3.0), BiasPoint::new(1.0, -1.0), &p).is_err());
    assert!(state_for_current(1.0, BiasPoint::new(2.7, 1.0), &p).is_err());
    assert!(sample_noisy_current(CellState(3.0), BiasPoint::new(1.0, 1.0), &p, 1, 10.0, 0).is_err());
    assert!(apply_retention_drift(CellState(3.0), -1.0, &p, 0).is_err());
}
