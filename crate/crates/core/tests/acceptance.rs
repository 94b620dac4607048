//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. MNIST is read from `MNIST_DIR` or the
//! workspace `data/mnist`.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use flashnet::crossbar::{vmm_gate_coupled, vmm_gate_driven, CrossbarArray, VmmMode, COUPLED_MAX, COUPLED_MIN};
use flashnet::device::{cell_current, fit_power_law, sample_noisy_current, state_for_current, BiasPoint, CellState};
use flashnet::harness::mnist::load_mnist;
use flashnet::harness::{run_experiment, Command, ExperimentConfig};
use flashnet::import_pipeline::{
    coupling_kappa, import_weights, software_accuracy, train_reference, HiddenTransfer, ImportConfig,
};
use flashnet::network::{evaluate, NoiseMode};
use flashnet::perf_model::{
    builtin_profile, energy_per_classification, perf_report, project_scaling, LatencyMode, PerfConfig, PowerBasis,
    SupplyRails, Workload,
};
use flashnet::seeds::{derive, stream};
use flashnet::{Network, Physics, Weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn data_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

struct Shared {
    cfg: ExperimentConfig,
    base: Network,
    weights: Weights,
    train_secs: f64,
    test_x: Vec<Vec<bool>>,
    test_y: Vec<u8>,
}

fn prepare() -> Result<Shared, String> {
    let cfg = ExperimentConfig { data_dir: data_dir(), ..ExperimentConfig::default() };
    let (train, test) = load_mnist(&cfg.data_dir).map_err(|e| e.to_string())?;
    let base = Network::erased(
        cfg.topology,
        cfg.device.clone(),
        cfg.neurons.hidden.clone(),
        cfg.neurons.output.clone(),
        cfg.biases,
    )
    .map_err(|e| e.to_string())?;
    let kappa = coupling_kappa(&base, &cfg.import).map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let xs = train.binarize(cfg.threshold);
    let out = train_reference::<f64>(
        &xs,
        &train.labels,
        cfg.topology,
        HiddenTransfer::GateCoupled { kappa },
        &cfg.train,
        cfg.seed,
    )
    .map_err(|e| e.to_string())?;
    let train_secs = t0.elapsed().as_secs_f64();
    Ok(Shared { test_x: test.binarize(cfg.threshold), test_y: test.labels, cfg, base, weights: out.weights, train_secs })
}

// Software forward pass written out from the model definition.
fn oracle_accuracy(w: &Weights, xs: &[Vec<bool>], ys: &[u8]) -> f64 {
    let HiddenTransfer::GateCoupled { kappa } = w.transfer else { unreachable!() };
    let t = w.topology;
    let mut correct = 0;
    for (x, &y) in xs.iter().zip(ys) {
        let mut a = vec![0.0; t.n_hidden + 1];
        for (h, ah) in a.iter_mut().enumerate().take(t.n_hidden) {
            let mut z = w.w1[t.n_inputs * t.n_hidden + h];
            for (j, _) in x.iter().enumerate().filter(|(_, &b)| b) {
                z += w.w1[j * t.n_hidden + h];
            }
            *ah = (kappa * (z.tanh().max(0.0) - 1.0)).exp();
        }
        a[t.n_hidden] = 1.0;
        let logits: Vec<f64> =
            (0..t.n_outputs).map(|o| (0..=t.n_hidden).map(|h| a[h] * w.w2[h * t.n_outputs + o]).sum()).collect();
        let mut best = 0;
        for o in 1..t.n_outputs {
            if logits[o] > logits[best] {
                best = o;
            }
        }
        correct += usize::from(best == y as usize);
    }
    correct as f64 / xs.len() as f64
}

fn c1_software(s: &Shared) -> Outcome {
    let acc = software_accuracy(&s.weights, &s.test_x, &s.test_y);
    let oracle = oracle_accuracy(&s.weights, &s.test_x, &s.test_y);
    let msg = format!(
        "software accuracy {:.2}% (oracle {:.2}%), trained in {:.1} s",
        100.0 * acc,
        100.0 * oracle,
        s.train_secs
    );
    if (acc - 0.962).abs() <= 0.007 && acc == oracle && s.train_secs <= 900.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c2_full_pipeline(s: &Shared) -> Outcome {
    let mut fids = Vec::new();
    for &seed in &s.cfg.import_seeds {
        let (net, _) = import_weights(&s.weights, &s.base, &s.cfg.import, seed).map_err(|e| e.to_string())?;
        let noise = NoiseMode::Seeded(derive(s.cfg.noise_seed, stream::NOISE, seed));
        fids.push(evaluate(&net, &s.test_x, &s.test_y, noise).map_err(|e| e.to_string())?.fidelity);
    }
    let mean = fids.iter().sum::<f64>() / fids.len() as f64;
    let list: Vec<String> = fids.iter().map(|f| format!("{:.2}", 100.0 * f)).collect();
    let msg = format!(
        "mean fidelity {:.2}% over seeds {:?} [{}] (accuracy {}, tuned_fraction {}, disturb p={} sigma={})",
        100.0 * mean,
        s.cfg.import_seeds,
        list.join(", "),
        s.cfg.import.accuracy,
        s.cfg.import.tuned_fraction,
        s.cfg.import.disturb.probability,
        s.cfg.import.disturb.sigma
    );
    if (0.935..=0.960).contains(&mean) && s.cfg.import_seeds.len() == 5 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c3_ideal_import(s: &Shared) -> Outcome {
    let (ideal, _) = import_weights(&s.weights, &s.base, &ImportConfig::ideal(), 0).map_err(|e| e.to_string())?;
    let fid = evaluate(&ideal, &s.test_x, &s.test_y, NoiseMode::Off).map_err(|e| e.to_string())?.fidelity;
    let sw = oracle_accuracy(&s.weights, &s.test_x, &s.test_y);
    let msg = format!("ideal import {:.2}% vs software {:.2}%, gap {:.2}%", 100.0 * fid, 100.0 * sw, 100.0 * (fid - sw).abs());
    if (fid - sw).abs() <= 0.005 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// Per-cell current straight from the model equation.
fn naive_current(p: &Physics, v_t: f64, v_gs: f64) -> f64 {
    let beta = p.beta0 + p.beta_state_coeff * (v_t - 0.5 * (p.v_t_min + p.v_t_max));
    (p.i_ref * (beta * (v_gs - v_t)).exp()).clamp(p.i_floor, p.i_sat)
}

fn c4_vmm_oracle() -> Outcome {
    let p = Physics::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n_in = rng.random_range(1..=32);
        let n_out = rng.random_range(1..=16);
        let states: Vec<CellState<f64>> =
            (0..2 * n_out * n_in).map(|_| CellState(rng.random_range(p.v_t_min..=p.v_t_max))).collect();
        let bits: Vec<bool> = (0..n_in).map(|_| rng.random_bool(0.5)).collect();
        let volts: Vec<f64> = (0..n_in).map(|_| rng.random_range(COUPLED_MIN..=COUPLED_MAX)).collect();
        for mode in [VmmMode::GateDriven, VmmMode::GateCoupled] {
            let a = CrossbarArray::from_cells(n_in, n_out, states.clone(), 2.7, 1.1, mode).map_err(|e| e.to_string())?;
            let (got, gates): (_, Vec<f64>) = match mode {
                VmmMode::GateDriven => (
                    vmm_gate_driven(&a, &bits, &p),
                    bits.iter().map(|&b| if b { 4.2 } else { 0.0 }).collect(),
                ),
                VmmMode::GateCoupled => (vmm_gate_coupled(&a, &volts, &p), volts.clone()),
            };
            let got = got.map_err(|e| e.to_string())?;
            for o in 0..n_out {
                for (row, total) in [(2 * o, got.i_plus[o]), (2 * o + 1, got.i_minus[o])] {
                    let want: f64 = (0..n_in).map(|j| naive_current(&p, states[row * n_in + j].v_t(), gates[j])).sum();
                    worst = worst.max((total - want).abs() / want);
                }
            }
        }
    }
    let msg = format!("200 random arrays, both modes, worst relative deviation {worst:.2e}");
    if worst <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c5_dynamic_range() -> Outcome {
    let p = Physics::default();
    let state = CellState(p.v_t_mid());
    let step = 1e-3;
    let curve: Vec<f64> = (0..=5000)
        .map(|k| cell_current(state, BiasPoint::new(k as f64 * step, 1.0), &p).map(f64::log10))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let window = (1.5 / step).round() as usize;
    let best = curve
        .windows(window + 1)
        .map(|w| w[window] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let msg = format!("{best:.2} decades within a 1.5 V gate sweep at v_t = {:.3} V", state.v_t());
    if best >= 5.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// Averaged periodogram at bins lo..=hi by direct summation.
fn naive_psd(traces: &[Vec<f64>], fs: f64, lo: usize, hi: usize) -> (Vec<f64>, Vec<f64>) {
    let n = traces[0].len();
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|t| {
            let a = 2.0 * std::f64::consts::PI * t as f64 / n as f64;
            (a.cos(), a.sin())
        })
        .unzip();
    let norm = 2.0 / (n as f64 * fs * traces.len() as f64);
    let mut freqs = Vec::new();
    let mut psd = Vec::new();
    for k in lo..=hi {
        let mut s = 0.0;
        for x in traces {
            let (mut re, mut im) = (0.0, 0.0);
            let mut idx = 0usize;
            for &v in x {
                re += v * cos[idx];
                im -= v * sin[idx];
                idx = (idx + k) % n;
            }
            s += re * re + im * im;
        }
        freqs.push(k as f64 * fs / n as f64);
        psd.push(s * norm);
    }
    (freqs, psd)
}

fn c6_noise() -> Outcome {
    let p = Physics::default();
    let bias = BiasPoint::new(2.7, 1.6);
    let i0 = 300e-9;
    let state = state_for_current(i0, bias, &p).map_err(|e| e.to_string())?;
    let (n, fs) = (65_536, 500.0);
    let traces: Vec<Vec<f64>> = (0..4)
        .map(|seed| sample_noisy_current(state, bias, &p, n, fs, seed))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let centred: Vec<Vec<f64>> = traces.iter().map(|t| t.iter().map(|v| v - i0).collect()).collect();
    let (f_lo, f_hi) = (0.05, 5.0);
    let (lo, hi) = ((f_lo * n as f64 / fs).ceil() as usize, (f_hi * n as f64 / fs).floor() as usize);
    let (freqs, psd) = naive_psd(&centred, fs, lo, hi);
    let (gamma, _) = fit_power_law(&freqs, &psd, f_lo, f_hi);
    let rms: f64 = centred.iter().flatten().map(|d| d * d).sum::<f64>() / (4 * n) as f64;
    let rel = rms.sqrt() / i0;
    let msg = format!(
        "PSD slope {gamma:.3} over {f_lo}-{f_hi} Hz (direct DFT), relative fluctuation {:.3}% at 300 nA",
        100.0 * rel
    );
    if (gamma - 1.6).abs() <= 0.2 && rel <= 0.01 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c7_power(s: &Shared) -> Outcome {
    let rails = SupplyRails::default().power();
    let by_hand = 5.6e-3 * 2.7 + 2.9e-3 * 1.05;
    let e = energy_per_classification(rails, 1e-6).map_err(|e| e.to_string())?;
    let (net, _) =
        import_weights(&s.weights, &s.base, &s.cfg.import, s.cfg.import_seeds[0]).map_err(|e| e.to_string())?;
    let mut identity = true;
    let mut simulated = 0.0;
    for basis in [PowerBasis::Rails, PowerBasis::Simulated] {
        for mode in [LatencyMode::MeasuredBound, LatencyMode::SettlingModel] {
            let cfg = PerfConfig { power_basis: basis, latency_mode: mode, ..s.cfg.perf.clone() };
            let r = perf_report(&net, &s.test_x, &cfg).map_err(|e| e.to_string())?;
            identity &= r.energy_j == r.avg_power_w * r.latency_s;
            simulated = r.simulated_power_w;
        }
    }
    let msg = format!(
        "rails {:.3} mW (by hand {:.3} mW), {:.3} nJ at 1 us, simulated mean {:.3} mW, identity {}",
        rails * 1e3,
        by_hand * 1e3,
        e * 1e9,
        simulated * 1e3,
        if identity { "holds" } else { "broken" }
    );
    if (rails - 18.165e-3).abs() < 1e-15 && (rails - by_hand).abs() < 1e-15 && e <= 20e-9 && identity {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c8_projection() -> Outcome {
    let w = Workload::alexnet_conv();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, t_ref, e_ref) in [("esf1", 1e-4, 3e-7), ("esf3", 6e-5, 2e-7)] {
        let tech = builtin_profile(name).map_err(|e| e.to_string())?;
        let p = project_scaling(&w, &tech).map_err(|e| e.to_string())?;
        let within = |x: f64, r: f64| x / r <= 3.0 && r / x <= 3.0;
        ok &= within(p.time_s, t_ref) && within(p.energy_j, e_ref) && !p.assumptions.is_empty();
        parts.push(format!(
            "{} {:.2e} s / {:.2e} J ({} assumptions)",
            p.tech,
            p.time_s,
            p.energy_j,
            p.assumptions.len()
        ));
    }
    let msg = parts.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "json")) {
                out.push((p.clone(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn c9_reproducible() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        data_dir: data_dir(),
        out_dir: dir.path().to_path_buf(),
        train_limit: Some(6000),
        test_limit: Some(1000),
        ..ExperimentConfig::default()
    };
    let run = || -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
        run_experiment(&cfg, Command::Full).map_err(|e| e.to_string())?;
        run_experiment(&cfg, Command::Project).map_err(|e| e.to_string())?;
        Ok(snapshot(dir.path()))
    };
    let first = run()?;
    let second = run()?;
    let same = first == second;
    let msg = format!("{} CSV/JSON files from two identical runs, byte-identical: {same}", first.len());
    if same && first.len() >= 10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let t0 = Instant::now();
    let shared = prepare();
    let need = |f: fn(&Shared) -> Outcome| -> Check<'_> {
        let s = shared.as_ref();
        Box::new(move || match s {
            Ok(s) => f(s),
            Err(e) => Err(format!("setup failed: {e}")),
        })
    };
    let criteria: Vec<(&str, Check)> = vec![
        ("software reference accuracy", need(c1_software)),
        ("full pipeline fidelity", need(c2_full_pipeline)),
        ("ideal import equivalence", need(c3_ideal_import)),
        ("VMM per-cell oracle", Box::new(c4_vmm_oracle)),
        ("dynamic range", Box::new(c5_dynamic_range)),
        ("noise spectrum and amplitude", Box::new(c6_noise)),
        ("power and energy", need(c7_power)),
        ("technology projection", Box::new(c8_projection)),
        ("reproducible artifacts", Box::new(c9_reproducible)),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match r {
            Ok(m) => println!("[PASS] {} {name}: {m}", k + 1),
            Err(m) => {
                failed += 1;
                println!("[FAIL] {} {name}: {m}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed ({:.0} s)", criteria.len() - failed, t0.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

