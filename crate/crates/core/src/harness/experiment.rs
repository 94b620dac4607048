//! Command pipeline: each command reads the artifacts of earlier ones from
//! the output directory and writes its own.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::ExperimentConfig;
use super::mnist::{load_mnist, MnistSet};
use crate::error::{Error, Result};
use crate::import_pipeline::{
    coupling_kappa, hidden_output_probe, import_weights, probe_correlation, probe_to_csv, software_accuracy,
    train_reference, DisturbModel, HiddenTransfer, ImportConfig, TrainedWeights,
};
use crate::network::{evaluate, NetworkInstance, NoiseMode};
use crate::perf_model::{builtin_profile, perf_report, project_scaling, TechProfile, Workload, REFERENCE_POINTS};
use crate::seeds::{derive, stream};

type Net = NetworkInstance<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Train,
    Import,
    Evaluate,
    Power,
    Project,
    Full,
    Calibrate,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Train,
        Command::Import,
        Command::Evaluate,
        Command::Power,
        Command::Project,
        Command::Full,
        Command::Calibrate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Import => "import",
            Command::Evaluate => "evaluate",
            Command::Power => "power",
            Command::Project => "project",
            Command::Full => "full",
            Command::Calibrate => "calibrate",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command '{s}'")))
    }
}

pub const WEIGHTS_FILE: &str = "weights.fgw";
pub const NETWORKS_DIR: &str = "networks";

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub command: Command,
    pub written: Vec<PathBuf>,
    pub summary: Value,
}

/// Runs one command, on a thread pool sized by `cfg.workers`.
pub fn run_experiment(cfg: &ExperimentConfig, command: Command) -> Result<Outcome> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        let mut run = Runner { cfg, data: None, written: Vec::new() };
        fs::create_dir_all(&cfg.out_dir)?;
        let summary = run.dispatch(command)?;
        Ok(Outcome { command, written: run.written, summary })
    })
}

struct Data {
    train_x: Vec<Vec<bool>>,
    train: MnistSet,
    test_x: Vec<Vec<bool>>,
    test: MnistSet,
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    data: Option<Data>,
    written: Vec<PathBuf>,
}

fn require(path: PathBuf, command: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact { path, command })
    }
}

impl Runner<'_> {
    fn dispatch(&mut self, command: Command) -> Result<Value> {
        match command {
            Command::Train => self.train(),
            Command::Import => self.import(),
            Command::Evaluate => self.evaluate(),
            Command::Power => self.power(),
            Command::Project => self.project(),
            Command::Calibrate => self.calibrate(),
            Command::Full => self.full(),
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.out(name);
        fs::write(&p, text)?;
        self.written.push(p);
        Ok(())
    }

    /// JSON report carrying the command, the resolved config and the result.
    fn write_report(&mut self, name: &str, command: Command, result: &Value) -> Result<()> {
        let doc = json!({ "command": command, "config": self.cfg, "result": result });
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        self.write_text(name, &text)
    }

    fn data(&mut self) -> Result<&Data> {
        if self.data.is_none() {
            let dir = &self.cfg.data_dir;
            let (mut train, mut test) = load_mnist(dir).map_err(|e| match e {
                Error::Data(msg) => Error::Data(format!("{msg}; run `flashnet fetch` or set data_dir")),
                other => other,
            })?;
            if let Some(n) = self.cfg.train_limit {
                train.truncate(n);
            }
            if let Some(n) = self.cfg.test_limit {
                test.truncate(n);
            }
            if train.rows * train.cols != self.cfg.topology.n_inputs {
                return Err(Error::Shape(format!(
                    "{}x{} images for {} network inputs",
                    train.rows, train.cols, self.cfg.topology.n_inputs
                )));
            }
            let t = self.cfg.threshold;
            self.data = Some(Data { train_x: train.binarize(t), test_x: test.binarize(t), train, test });
        }
        Ok(self.data.as_ref().expect("loaded above"))
    }

    fn base_network(&self) -> Result<Net> {
        let c = self.cfg;
        Net::erased(c.topology, c.device.clone(), c.neurons.hidden.clone(), c.neurons.output.clone(), c.biases)
    }

    fn weights(&self) -> Result<TrainedWeights<f64>> {
        TrainedWeights::load(&require(self.out(WEIGHTS_FILE), "train")?)
    }

    fn network_dir(&self, tag: &str) -> PathBuf {
        self.cfg.out_dir.join(NETWORKS_DIR).join(tag)
    }

    fn load_network(&self, tag: &str) -> Result<Net> {
        Net::read_snapshot(&require(self.network_dir(tag), "import")?)
    }

    fn noise_for(&self, import_seed: u64) -> NoiseMode {
        if self.cfg.noise {
            NoiseMode::Seeded(derive(self.cfg.noise_seed, stream::NOISE, import_seed))
        } else {
            NoiseMode::Off
        }
    }

    fn train(&mut self) -> Result<Value> {
        let base = self.base_network()?;
        let kappa = coupling_kappa(&base, &self.cfg.import)?;
        let cfg = self.cfg;
        let d = self.data()?;
        let out = train_reference::<f64>(
            &d.train_x,
            &d.train.labels,
            cfg.topology,
            HiddenTransfer::GateCoupled { kappa },
            &cfg.train,
            cfg.seed,
        )?;
        let accuracy = software_accuracy(&out.weights, &d.test_x, &d.test.labels);
        let p = self.out(WEIGHTS_FILE);
        out.weights.save(&p)?;
        self.written.push(p);
        let result = json!({
            "seed": cfg.seed,
            "kappa": kappa,
            "software_accuracy": accuracy,
            "epochs": out.epochs,
        });
        self.write_report("train.json", Command::Train, &result)?;
        Ok(result)
    }

    fn import(&mut self) -> Result<Value> {
        let w = self.weights()?;
        let base = self.base_network()?;
        let (ideal, _) = import_weights(&w, &base, &ImportConfig::ideal(), 0)?;
        let dir = self.network_dir("ideal");
        ideal.write_snapshot(&dir)?;
        self.written.push(dir);

        let mut per_seed = Vec::new();
        let mut first = None;
        for &s in &self.cfg.import_seeds {
            let (net, report) = import_weights(&w, &base, &self.cfg.import, s)?;
            let dir = self.network_dir(&format!("seed_{s}"));
            net.write_snapshot(&dir)?;
            self.written.push(dir);
            self.write_text(&format!("import_report_seed_{s}.csv"), &report.to_csv())?;
            per_seed.push(json!({
                "seed": s,
                "n_tuned": report.n_tuned,
                "n_disturbed": report.n_disturbed,
                "disturb_events": report.disturb_events,
                "within_band": report.within_band,
                "rms_relative_error": report.rms_relative_error,
                "max_relative_error": report.max_relative_error,
                "hidden_act_gain": report.hidden_act_gain,
                "current_scales": report.scales,
            }));
            first.get_or_insert(net);
        }
        let first = first.expect("import_seeds is not empty");
        let n_probe = self.cfg.probe_patterns;
        let d = self.data()?;
        let probe_set = &d.test_x[..n_probe.min(d.test_x.len())];
        let points = hidden_output_probe(&ideal, &first, probe_set)?;
        let corr = probe_correlation(&points);
        self.write_text("hidden_probe.csv", &probe_to_csv(&points))?;
        let result = json!({ "imports": per_seed, "probe_points": points.len(), "probe_correlation": corr });
        self.write_report("import.json", Command::Import, &result)?;
        Ok(result)
    }

    fn evaluate(&mut self) -> Result<Value> {
        let w = self.weights()?;
        let ideal = self.load_network("ideal")?;
        let nets: Vec<(u64, Net)> = self
            .cfg
            .import_seeds
            .iter()
            .map(|&s| Ok((s, self.load_network(&format!("seed_{s}"))?)))
            .collect::<Result<_>>()?;
        let noises: Vec<NoiseMode> = nets.iter().map(|(s, _)| self.noise_for(*s)).collect();
        let d = self.data()?;
        let sw = software_accuracy(&w, &d.test_x, &d.test.labels);
        let ideal_fid = evaluate(&ideal, &d.test_x, &d.test.labels, NoiseMode::Off)?.fidelity;
        let mut per_seed = Vec::new();
        let mut hist = None;
        for ((s, net), noise) in nets.iter().zip(noises) {
            let r = evaluate(net, &d.test_x, &d.test.labels, noise)?;
            per_seed.push(json!({
                "seed": s,
                "noise": noise,
                "fidelity": r.fidelity,
                "n_correct": r.n_correct,
                "mean_margin_v": r.mean_margin_v,
                "confusion": r.confusion,
            }));
            hist.get_or_insert(r.histograms);
        }
        let fids: Vec<f64> = per_seed.iter().map(|v| v["fidelity"].as_f64().unwrap_or(0.0)).collect();
        let mean = fids.iter().sum::<f64>() / fids.len() as f64;
        let n = d.test_x.len();
        let hist = hist.expect("import_seeds is not empty");
        self.write_text("output_histograms.csv", &hist.to_csv())?;
        let result = json!({
            "n_patterns": n,
            "software_accuracy": sw,
            "ideal_fidelity": ideal_fid,
            "imports": per_seed,
            "mean_fidelity": mean,
            "min_fidelity": fids.iter().cloned().fold(f64::INFINITY, f64::min),
            "max_fidelity": fids.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            "histograms": hist,
        });
        self.write_report("evaluation.json", Command::Evaluate, &result)?;
        Ok(result)
    }

    fn power(&mut self) -> Result<Value> {
        let s = self.cfg.import_seeds[0];
        let net = self.load_network(&format!("seed_{s}"))?;
        let perf = self.cfg.perf.clone();
        let d = self.data()?;
        let report = perf_report(&net, &d.test_x, &perf)?;
        self.write_text("array_current_histogram.csv", &report.array_current_histogram.to_csv())?;
        let result = json!({ "network_seed": s, "perf": report });
        self.write_report("perf.json", Command::Power, &result)?;
        Ok(result)
    }

    fn project(&mut self) -> Result<Value> {
        let workload = Workload::alexnet_conv();
        let mut rows = Vec::new();
        let mut csv = String::from("platform,node,source,time_s,energy_j\n");
        for name in &self.cfg.techs {
            let tech = resolve_tech(name)?;
            let p = project_scaling(&workload, &tech)?;
            csv += &format!("{},{},projected,{:e},{:e}\n", p.tech, p.node, p.time_s, p.energy_j);
            rows.push(p);
        }
        for r in REFERENCE_POINTS {
            csv += &format!("{},{},reference,{:e},{:e}\n", r.name, r.node, r.time_s, r.energy_j);
        }
        self.write_text("projection.csv", &csv)?;
        let result = json!({ "workload": workload, "projections": rows, "reference_points": REFERENCE_POINTS });
        self.write_report("projection.json", Command::Project, &result)?;
        Ok(result)
    }

    fn calibrate(&mut self) -> Result<Value> {
        let w = self.weights()?;
        let base = self.base_network()?;
        let sweep = self.cfg.calibrate.clone();
        let seeds = self.cfg.import_seeds.clone();
        let noises: Vec<NoiseMode> = seeds.iter().map(|&s| self.noise_for(s)).collect();
        let import_cfg = self.cfg.import.clone();
        let d = self.data()?;
        let mut csv = String::from("probability,sigma,mean_fidelity\n");
        let mut points = Vec::new();
        for &p in &sweep.probabilities {
            for &sigma in &sweep.sigmas {
                let cfg = ImportConfig { disturb: DisturbModel { probability: p, sigma }, ..import_cfg.clone() };
                let mut total = 0.0;
                for (&s, &noise) in seeds.iter().zip(&noises) {
                    let (net, _) = import_weights(&w, &base, &cfg, s)?;
                    total += evaluate(&net, &d.test_x, &d.test.labels, noise)?.fidelity;
                }
                let mean = total / seeds.len() as f64;
                csv += &format!("{p},{sigma},{mean}\n");
                points.push(json!({ "probability": p, "sigma": sigma, "mean_fidelity": mean }));
            }
        }
        let best = points
            .iter()
            .min_by(|a, b| {
                let da = (a["mean_fidelity"].as_f64().unwrap_or(0.0) - sweep.target_fidelity).abs();
                let db = (b["mean_fidelity"].as_f64().unwrap_or(0.0) - sweep.target_fidelity).abs();
                da.total_cmp(&db)
            })
            .cloned();
        self.write_text("calibration.csv", &csv)?;
        let result = json!({ "target_fidelity": sweep.target_fidelity, "points": points, "closest": best });
        self.write_report("calibration.json", Command::Calibrate, &result)?;
        Ok(result)
    }

    fn full(&mut self) -> Result<Value> {
        let train = self.train()?;
        let import = self.import()?;
        let eval = self.evaluate()?;
        let power = self.power()?;
        let perf = &power["perf"];
        let result = json!({
            "software_accuracy": train["software_accuracy"],
            "ideal_fidelity": eval["ideal_fidelity"],
            "fidelity_per_seed": eval["imports"].as_array().map(|a| a.iter().map(|v| v["fidelity"].clone()).collect::<Vec<_>>()),
            "mean_fidelity": eval["mean_fidelity"],
            "probe_correlation": import["probe_correlation"],
            "avg_power_w": perf["avg_power_w"],
            "simulated_power_w": perf["simulated_power_w"],
            "latency_s": perf["latency_s"],
            "energy_j": perf["energy_j"],
        });
        self.write_report("summary.json", Command::Full, &result)?;
        Ok(result)
    }
}

/// A builtin profile name, or a path to a profile file.
pub fn resolve_tech(name: &str) -> Result<TechProfile> {
    let p = Path::new(name);
    if p.is_file() {
        TechProfile::parse(&fs::read_to_string(p)?)
    } else {
        builtin_profile(name)
    }
}
