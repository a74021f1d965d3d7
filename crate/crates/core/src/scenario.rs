//! JSON scenario configurations and their runners.
//!
//! A runner produces named result files (CSV text) plus one scalar metric
//! used by parameter sweeps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::des::SimTime;
use crate::net::{Network, PhotonSource, PolarizationDetector};
use crate::parallel::{map_indexed, Execution};
use crate::protocols::bb84::{point_to_point, run_bb84, Bb84Params, IntensityClass};
use crate::protocols::chsh::{chsh_network, chsh_play, Strategy};
use crate::protocols::e2e::{capacity_sweep, random_workload, run_e2e, two_repeater_chain, E2eParams};
use crate::protocols::satellite::{satellite_network, satellite_pass_run, SatelliteParams};
use crate::protocols::teleport::{rx_input, teleport, teleport_network};
use crate::protocols::ProtocolError;
use crate::rng::{indexed_seed, named_stream};

#[derive(Debug, Error)]
pub enum ScenarioError {
    /// Invalid or unreadable configuration; nothing was simulated.
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Chsh,
    Keypool,
    Bb84,
    Satellite,
    Teleport,
}

/// A duration given as seconds or as text such as `"500ms"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Duration {
    Seconds(f64),
    Text(String),
}

impl Duration {
    pub fn to_time(&self) -> Result<SimTime, ScenarioError> {
        match self {
            Duration::Seconds(s) if *s >= 0.0 && s.is_finite() => Ok(SimTime::from_secs_f64(*s)),
            Duration::Seconds(s) => Err(ScenarioError::Config(format!("invalid duration {s}"))),
            Duration::Text(t) => t.parse().map_err(|e| ScenarioError::Config(format!("{e}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub topology: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub end_time: Option<Duration>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub trace: bool,
    #[serde(default = "empty_object")]
    pub params: Value,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChshScenario {
    pub strategy: Strategy,
    pub rounds: u64,
    pub distance_km: f64,
    pub period_ns: u64,
}

impl Default for ChshScenario {
    fn default() -> Self {
        ChshScenario {
            strategy: Strategy::Quantum,
            rounds: 100_000,
            distance_km: 1.0,
            period_ns: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeypoolScenario {
    pub requests_per_node: usize,
    pub key_num: usize,
    pub key_length: usize,
    pub capacity: usize,
    /// When set, sweep these capacities instead of a single run.
    pub capacities: Option<Vec<usize>>,
    /// Run durations in seconds averaged over in sweep mode; defaults to
    /// the end time.
    pub durations: Option<Vec<f64>>,
    /// Seeds per sweep point.
    pub replications: usize,
    pub access_km: f64,
    pub core_km: f64,
    pub source_frequency: f64,
    pub mean_photon_num: f64,
    pub detector_efficiency: f64,
}

impl Default for KeypoolScenario {
    fn default() -> Self {
        let e = E2eParams::default();
        KeypoolScenario {
            requests_per_node: 1,
            key_num: 10,
            key_length: 32,
            capacity: 40,
            capacities: None,
            durations: None,
            replications: 1,
            access_km: 10.0,
            core_km: 100.0,
            source_frequency: e.source_frequency,
            mean_photon_num: e.mean_photon_num,
            detector_efficiency: e.detector_efficiency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bb84Scenario {
    pub alice: String,
    pub bob: String,
    pub pulses: u64,
    /// Fiber length of the built-in two-node network.
    pub distance_km: f64,
    pub frequency: f64,
    pub mean_photon_num: f64,
    pub efficiency: f64,
    pub dark_count_rate: f64,
    pub single_photon: bool,
    pub misalignment: f64,
    pub classes: Vec<IntensityClass>,
}

impl Default for Bb84Scenario {
    fn default() -> Self {
        Bb84Scenario {
            alice: "Alice".into(),
            bob: "Bob".into(),
            pulses: 100_000,
            distance_km: 50.0,
            frequency: 1e6,
            mean_photon_num: 0.5,
            efficiency: 1.0,
            dark_count_rate: 0.0,
            single_photon: false,
            misalignment: 0.0,
            classes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeleportScenario {
    pub trials: usize,
    pub distance_km: f64,
    pub timeout: Duration,
}

impl Default for TeleportScenario {
    fn default() -> Self {
        TeleportScenario {
            trials: 50,
            distance_km: 10.0,
            timeout: Duration::Text("1ms".into()),
        }
    }
}

fn typed<T: for<'de> Deserialize<'de>>(params: &Value) -> Result<T, ScenarioError> {
    serde_json::from_value(params.clone()).map_err(|e| ScenarioError::Config(format!("params: {e}")))
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("plain data serializes")
}

/// Outcome of one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    /// File name → contents.
    pub files: BTreeMap<String, String>,
    /// Headline number used by sweeps.
    pub metric: f64,
    pub metric_name: &'static str,
    pub log: Vec<String>,
}

impl ScenarioOutput {
    fn new(metric_name: &'static str) -> Self {
        ScenarioOutput {
            files: BTreeMap::new(),
            metric: 0.0,
            metric_name,
            log: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Config(format!("config: {e}")))
    }

    /// Reads a config file; a relative topology path is resolved against
    /// the config's directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|e| ScenarioError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(t) = &cfg.topology {
            if t.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.topology = Some(dir.join(t));
                }
            }
        }
        Ok(cfg)
    }

    pub fn end_time(&self) -> Result<Option<SimTime>, ScenarioError> {
        self.end_time.as_ref().map(Duration::to_time).transpose()
    }

    /// The config with every kind-specific parameter filled in.
    pub fn resolved(&self) -> Result<Value, ScenarioError> {
        let params = match self.kind {
            ScenarioKind::Chsh => to_value(&typed::<ChshScenario>(&self.params)?),
            ScenarioKind::Keypool => to_value(&typed::<KeypoolScenario>(&self.params)?),
            ScenarioKind::Bb84 => to_value(&typed::<Bb84Scenario>(&self.params)?),
            ScenarioKind::Satellite => to_value(&typed::<SatelliteParams>(&self.params)?),
            ScenarioKind::Teleport => to_value(&typed::<TeleportScenario>(&self.params)?),
        };
        let mut v = to_value(self);
        v["params"] = params;
        Ok(v)
    }

    /// Checks everything that can be checked without simulating.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.resolved()?;
        self.end_time()?;
        if let Some(t) = &self.topology {
            if !t.exists() {
                return Err(ScenarioError::Config(format!("topology file {} not found", t.display())));
            }
        }
        match self.kind {
            ScenarioKind::Keypool => {
                let p: KeypoolScenario = typed(&self.params)?;
                if p.replications == 0 || p.key_num == 0 || p.key_length == 0 {
                    return Err(ScenarioError::Config("replications, key_num and key_length must be positive".into()));
                }
                if p.capacity == 0 || p.capacities.iter().flatten().any(|c| *c == 0) {
                    return Err(ScenarioError::Config("pool capacities must be positive".into()));
                }
            }
            ScenarioKind::Satellite => {
                let p: SatelliteParams = typed(&self.params)?;
                if p.bins == 0 || !(p.window_s > 0.0) || !(p.frequency > 0.0) {
                    return Err(ScenarioError::Config("satellite pass needs bins, a window and a frequency".into()));
                }
            }
            ScenarioKind::Teleport => {
                let p: TeleportScenario = typed(&self.params)?;
                p.timeout.to_time()?;
            }
            ScenarioKind::Chsh | ScenarioKind::Bb84 => {}
        }
        Ok(())
    }

    fn network(&self, fallback: impl FnOnce() -> Result<Network, ProtocolError>) -> Result<Network, ScenarioError> {
        match &self.topology {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| ScenarioError::Config(format!("{}: {e}", path.display())))?;
                let mut net = Network::from_json(&text).map_err(|e| ScenarioError::Config(format!("{}: {e}", path.display())))?;
                net.compute_routes();
                Ok(net)
            }
            None => Ok(fallback()?),
        }
    }

    /// Runs the scenario with parallel execution where it applies.
    pub fn run(&self) -> Result<ScenarioOutput, ScenarioError> {
        self.run_with(Execution::default())
    }

    pub fn run_with(&self, exec: Execution) -> Result<ScenarioOutput, ScenarioError> {
        self.validate()?;
        match self.kind {
            ScenarioKind::Chsh => self.run_chsh(),
            ScenarioKind::Keypool => self.run_keypool(exec),
            ScenarioKind::Bb84 => self.run_bb84(),
            ScenarioKind::Satellite => self.run_satellite(),
            ScenarioKind::Teleport => self.run_teleport(exec),
        }
    }

    fn run_chsh(&self) -> Result<ScenarioOutput, ScenarioError> {
        let p: ChshScenario = typed(&self.params)?;
        let net = self.network(|| chsh_network(p.distance_km))?;
        let r = chsh_play(&net, p.strategy, p.rounds, SimTime::from_ns(p.period_ns), self.trace, self.seed)?;
        let mut out = ScenarioOutput::new("win_rate");
        out.metric = r.win_rate();
        let strategy = match p.strategy {
            Strategy::Classical => "classical",
            Strategy::Quantum => "quantum",
        };
        out.files.insert(
            "results.csv".into(),
            format!("strategy,rounds,wins,win_rate\n{strategy},{},{},{:.6}\n", r.records.len(), r.wins(), r.win_rate()),
        );
        out.files.insert("games.csv".into(), r.to_csv());
        if self.trace {
            out.files.insert("trace.txt".into(), r.trace);
        }
        out.log.push(format!("chsh {strategy}: {} events, win rate {:.6}", r.report.events_executed, out.metric));
        Ok(out)
    }

    fn run_keypool(&self, exec: Execution) -> Result<ScenarioOutput, ScenarioError> {
        let p: KeypoolScenario = typed(&self.params)?;
        let net = self.network(|| two_repeater_chain(p.access_km, p.core_km))?;
        let end = self.end_time()?.unwrap_or(SimTime::from_ms(500));
        let params = E2eParams {
            capacity: p.capacity,
            source_frequency: p.source_frequency,
            mean_photon_num: p.mean_photon_num,
            detector_efficiency: p.detector_efficiency,
            key_length: p.key_length,
            trace: self.trace,
        };
        let mut out = ScenarioOutput::new("processed_requests");
        if let Some(caps) = &p.capacities {
            let durations: Vec<SimTime> = match &p.durations {
                Some(d) => d.iter().map(|s| Duration::Seconds(*s).to_time()).collect::<Result<_, _>>()?,
                None => vec![end],
            };
            let seeds: Vec<u64> = (0..p.replications as u64).map(|r| replication_seed(self.seed, r)).collect();
            let points = capacity_sweep(&net, caps, &durations, &seeds, p.requests_per_node, p.key_num, &params, exec)?;
            let mut csv = String::from("capacity,processed_requests\n");
            for pt in &points {
                csv.push_str(&format!("{},{}\n", pt.capacity, pt.processed));
            }
            out.metric = points.last().map_or(0.0, |pt| pt.processed);
            out.files.insert("capacity_sweep.csv".into(), csv);
            out.log.push(format!("keypool sweep over {} capacities", caps.len()));
            return Ok(out);
        }
        let specs = random_workload(&net, p.requests_per_node, p.key_num, p.key_length, end, self.seed);
        let r = run_e2e(&net, &specs, &params, end, self.seed)?;
        out.metric = r.processed() as f64;
        out.files.insert("requests.csv".into(), r.requests_csv());
        out.files.insert("pools.csv".into(), r.pools_csv());
        if self.trace {
            out.files.insert("trace.txt".into(), r.trace.clone());
        }
        let disagree = r.requests.iter().filter(|q| q.completed.is_some() && !q.keys_agree()).count();
        out.log.push(format!("keypool: {} of {} requests processed", r.processed(), r.requests.len()));
        if disagree > 0 {
            return Err(ProtocolError::Stalled(format!("{disagree} completed requests with mismatched keys")).into());
        }
        Ok(out)
    }

    fn run_bb84(&self) -> Result<ScenarioOutput, ScenarioError> {
        let p: Bb84Scenario = typed(&self.params)?;
        let net = self.network(|| {
            point_to_point(
                p.distance_km,
                PhotonSource::new(p.frequency, p.mean_photon_num)?,
                PolarizationDetector::new(p.efficiency, p.dark_count_rate)?,
            )
        })?;
        let params = Bb84Params {
            pulses: p.pulses,
            start: SimTime::ZERO,
            classes: p.classes.clone(),
            single_photon: p.single_photon,
            misalignment: p.misalignment,
            trace: self.trace,
        };
        let r = run_bb84(&net, &p.alice, &p.bob, &params, self.seed)?;
        let mut out = ScenarioOutput::new("sifted_bits");
        out.metric = r.sifted.len() as f64;
        let qber = r.qber().map(|q| format!("{q:.6}")).unwrap_or_default();
        out.files.insert(
            "results.csv".into(),
            format!(
                "pulses,detections,sifted,errors,qber\n{},{},{},{},{}\n",
                r.pulses,
                r.detections,
                r.sifted.len(),
                r.errors(),
                qber
            ),
        );
        let mut classes = String::from("class,mu,pulses,detections,gain,sifted,errors\n");
        for c in &r.classes {
            classes.push_str(&format!(
                "{},{},{},{},{:.6e},{},{}\n",
                c.name,
                c.mu,
                c.pulses,
                c.detections,
                c.gain(),
                c.sifted,
                c.errors
            ));
        }
        out.files.insert("classes.csv".into(), classes);
        if self.trace {
            out.files.insert("trace.txt".into(), r.trace.clone());
        }
        out.log.push(format!("bb84: {} sifted bits from {} pulses", r.sifted.len(), r.pulses));
        Ok(out)
    }

    fn run_satellite(&self) -> Result<ScenarioOutput, ScenarioError> {
        let p: SatelliteParams = typed(&self.params)?;
        let net = self.network(|| satellite_network(&p))?;
        let r = satellite_pass_run(&net, &p, self.seed)?;
        let mut out = ScenarioOutput::new("sifted_bits");
        out.metric = r.run.sifted.len() as f64;
        let (chi2, dof) = r.mirror_chi2();
        out.files.insert("pass.csv".into(), r.to_csv());
        out.files.insert(
            "results.csv".into(),
            format!(
                "sifted,pearson_distance,mirror_chi2,mirror_pairs\n{},{:.6},{:.6},{}\n",
                r.run.sifted.len(),
                r.distance_correlation(),
                chi2,
                dof
            ),
        );
        out.log.push(format!("satellite: {} sifted bits over {} bins", r.run.sifted.len(), r.bins.len()));
        Ok(out)
    }

    fn run_teleport(&self, exec: Execution) -> Result<ScenarioOutput, ScenarioError> {
        let p: TeleportScenario = typed(&self.params)?;
        let net = self.network(|| teleport_network(p.distance_km))?;
        let timeout = p.timeout.to_time()?;
        let mut angles = named_stream(self.seed, "angles");
        let thetas: Vec<f64> = (0..p.trials)
            .map(|_| rand::Rng::random_range(&mut angles, 0.0..std::f64::consts::TAU))
            .collect();
        let runs = map_indexed(p.trials, exec, |i| teleport(&net, rx_input(thetas[i]), timeout, indexed_seed(self.seed, i as u64)));
        let mut csv = String::from("trial,theta,fidelity,m0,m1,completed_ps\n");
        let mut worst = f64::INFINITY;
        let mut traces = String::new();
        for (i, r) in runs.into_iter().enumerate() {
            let r = r?;
            worst = worst.min(r.fidelity);
            csv.push_str(&format!("{i},{:.12},{:.12},{},{},{}\n", thetas[i], r.fidelity, r.bits[0], r.bits[1], r.completed_at.0));
            traces.push_str(&r.trace);
        }
        let mut out = ScenarioOutput::new("min_fidelity");
        out.metric = if p.trials == 0 { 1.0 } else { worst };
        out.files.insert("results.csv".into(), csv);
        if self.trace {
            out.files.insert("trace.txt".into(), traces);
        }
        out.log.push(format!("teleport: {} trials, minimum fidelity {:.12}", p.trials, out.metric));
        Ok(out)
    }
}

/// Seed of replication `r`: the base seed itself for the first one.
pub fn replication_seed(seed: u64, r: u64) -> u64 {
    if r == 0 {
        seed
    } else {
        indexed_seed(seed, r)
    }
}

fn set_path(v: &mut Value, path: &str, value: f64) -> Result<(), ScenarioError> {
    let mut cur = v;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| ScenarioError::Config(format!("`{path}` does not name a config field")))?;
        let next = obj
            .get_mut(*part)
            .ok_or_else(|| ScenarioError::Config(format!("`{path}` does not name a config field")))?;
        if i + 1 == parts.len() {
            *next = if matches!(next, Value::Number(n) if n.is_u64()) && value.fract() == 0.0 && value >= 0.0 {
                Value::from(value as u64)
            } else {
                Value::from(value)
            };
            return Ok(());
        }
        cur = next;
    }
    unreachable!("split yields at least one part")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub replications: usize,
    pub mean: f64,
    pub std: f64,
}

/// Runs `replications` independent copies of `config` for every value of
/// the dotted `parameter` path. Rows come out in ascending value order.
pub fn sweep(config: &ScenarioConfig, parameter: &str, values: &[f64], replications: usize, exec: Execution) -> Result<Vec<SweepRow>, ScenarioError> {
    if replications == 0 {
        return Err(ScenarioError::Config("replications must be at least 1".into()));
    }
    if values.is_empty() {
        return Err(ScenarioError::Config("no sweep values".into()));
    }
    config.validate()?;
    let base = config.resolved()?;
    let mut values = values.to_vec();
    values.sort_by(f64::total_cmp);
    if parameter == "seed" {
        return Err(ScenarioError::Config("the seed is set by replication".into()));
    }
    let mut configs = Vec::new();
    for &value in &values {
        let mut v = base.clone();
        if parameter == "end_time" && v["end_time"].is_null() {
            v["end_time"] = Value::from(0.0);
        }
        set_path(&mut v, parameter, value)?;
        for r in 0..replications as u64 {
            let mut cfg: ScenarioConfig = serde_json::from_value(v.clone()).map_err(|e| ScenarioError::Config(format!("{parameter}={value}: {e}")))?;
            cfg.seed = replication_seed(config.seed, r);
            cfg.trace = false;
            cfg.validate()?;
            configs.push(cfg);
        }
    }
    // Scenario-internal parallelism stays sequential under a parallel sweep.
    let inner = Execution::Sequential;
    let metrics = crate::parallel::map_slice(&configs, exec, |cfg| cfg.run_with(inner).map(|o| o.metric));
    let mut rows = Vec::new();
    for (i, &value) in values.iter().enumerate() {
        let chunk = &metrics[i * replications..(i + 1) * replications];
        let mut xs = Vec::with_capacity(replications);
        for m in chunk {
            match m {
                Ok(x) => xs.push(*x),
                Err(e) => return Err(ScenarioError::Runtime(ProtocolError::Stalled(e.to_string()))),
            }
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        rows.push(SweepRow {
            parameter: parameter.to_string(),
            value,
            replications,
            mean,
            std,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("parameter,value,replications,mean,std\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.parameter, r.value, r.replications, r.mean, r.std));
    }
    out
}
