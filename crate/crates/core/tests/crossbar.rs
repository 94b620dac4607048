use flashnet::crossbar::{vmm_gate_coupled, vmm_gate_driven, CrossbarArray, VmmMode, COUPLED_MAX, COUPLED_MIN};
use flashnet::device::{cell_current, BiasPoint, CellState, DevicePhysics};
use proptest::prelude::*;

fn array(n_in: usize, n_out: usize, states: &[f64], mode: VmmMode) -> CrossbarArray<f64> {
    let cells = states.iter().map(|&v| CellState(v)).collect();
    let (d, s) = match mode {
        VmmMode::GateDriven => (2.7, 1.65),
        VmmMode::GateCoupled => (2.7, 1.1),
    };
    CrossbarArray::from_cells(n_in, n_out, cells, d, s, mode).unwrap()
}

fn shape() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..=12, 1usize..=6).prop_flat_map(|(n_in, n_out)| {
        (Just(n_in), Just(n_out), prop::collection::vec(1.0f64..4.5, 2 * n_in * n_out))
    })
}

proptest! {
    #[test]
    fn gate_driven_is_additive_over_inputs(
        (n_in, n_out, states) in shape(),
        bits in prop::collection::vec(any::<bool>(), 12),
    ) {
        let p = DevicePhysics::default();
        let a = array(n_in, n_out, &states, VmmMode::GateDriven);
        let x = &bits[..n_in];
        let zero = vmm_gate_driven(&a, &vec![false; n_in], &p).unwrap();
        let got = vmm_gate_driven(&a, x, &p).unwrap();
        // I(x) = I(0) + sum over active inputs of (I_on - I_off)
        let mut want = zero.i_plus.clone();
        for (o, w) in want.iter_mut().enumerate() {
            for j in (0..n_in).filter(|&j| x[j]) {
                let mut single = vec![false; n_in];
                single[j] = true;
                *w += vmm_gate_driven(&a, &single, &p).unwrap().i_plus[o] - zero.i_plus[o];
            }
        }
        for (g, w) in got.i_plus.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-12 * w.abs());
        }
    }

    #[test]
    fn column_permutation_is_invisible(
        (n_in, n_out, states) in shape(),
        volts in prop::collection::vec(COUPLED_MIN..COUPLED_MAX, 12),
        rot in 0usize..12,
    ) {
        let p = DevicePhysics::default();
        let a = array(n_in, n_out, &states, VmmMode::GateCoupled);
        let v = &volts[..n_in];
        let perm: Vec<usize> = (0..n_in).map(|j| (j + rot) % n_in).collect();
        let mut permuted = Vec::with_capacity(states.len());
        for r in 0..2 * n_out {
            for &j in &perm {
                permuted.push(states[r * n_in + j]);
            }
        }
        let b = array(n_in, n_out, &permuted, VmmMode::GateCoupled);
        let pv: Vec<f64> = perm.iter().map(|&j| v[j]).collect();
        let x = vmm_gate_coupled(&a, v, &p).unwrap();
        let y = vmm_gate_coupled(&b, &pv, &p).unwrap();
        for (s, t) in x.difference().iter().zip(&y.difference()) {
            prop_assert!((s - t).abs() <= 1e-12 * x.total());
        }
    }

    #[test]
    fn gate_coupled_matches_per_cell_sum(
        (n_in, n_out, states) in shape(),
        volts in prop::collection::vec(COUPLED_MIN..COUPLED_MAX, 12),
    ) {
        let p = DevicePhysics::default();
        let a = array(n_in, n_out, &states, VmmMode::GateCoupled);
        let v = &volts[..n_in];
        let got = vmm_gate_coupled(&a, v, &p).unwrap();
        for o in 0..n_out {
            for (row, total) in [(2 * o, got.i_plus[o]), (2 * o + 1, got.i_minus[o])] {
                let want: f64 = (0..n_in)
                    .map(|j| cell_current(a.cell(row, j), BiasPoint::new(v[j], 1.6), &p).unwrap())
                    .sum();
                prop_assert!((total - want).abs() <= 1e-12 * want);
            }
        }
    }

    #[test]
    fn raising_a_gate_never_lowers_row_current(
        (n_in, n_out, states) in shape(),
        volts in prop::collection::vec(COUPLED_MIN..COUPLED_MAX, 12),
        j in 0usize..12,
        dv in 0.0f64..0.5,
    ) {
        let p = DevicePhysics::default();
        let a = array(n_in, n_out, &states, VmmMode::GateCoupled);
        let mut v = volts[..n_in].to_vec();
        let j = j % n_in;
        let lo = vmm_gate_coupled(&a, &v, &p).unwrap();
        v[j] = (v[j] + dv).min(COUPLED_MAX);
        let hi = vmm_gate_coupled(&a, &v, &p).unwrap();
        for (x, y) in lo.i_plus.iter().zip(&hi.i_plus) {
            prop_assert!(y >= x);
        }
    }
}

#[test]
fn f32_and_f64_agree() {
    let p64 = DevicePhysics::<f64>::default();
    let p32 = DevicePhysics::<f32>::default();
    let states = [2.9, 3.4, 4.0, 4.4, 3.0, 3.8];
    let a64 = array(3, 1, &states, VmmMode::GateDriven);
    let cells32 = states.iter().map(|&v| CellState(v as f32)).collect();
    let a32 = CrossbarArray::<f32>::from_cells(3, 1, cells32, 2.7, 1.65, VmmMode::GateDriven).unwrap();
    let x = [true, false, true];
    let r64 = vmm_gate_driven(&a64, &x, &p64).unwrap();
    let r32 = vmm_gate_driven(&a32, &x, &p32).unwrap();
    assert!((f64::from(r32.i_plus[0]) / r64.i_plus[0] - 1.0).abs() < 1e-5);
}
