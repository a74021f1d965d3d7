//! Network topology, channels, photonic devices, static routing and
//! satellite mobility.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::des::{Entity, SimEnv, SimError, SimTime};

/// Propagation delay in fiber and free space: 1 km at 2×10^8 m/s.
pub const PS_PER_KM: u64 = 5_000_000;
/// Typical telecom fiber attenuation.
pub const FIBER_LOSS_DB_PER_KM: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("node `{node}` has two devices named `{device}`")]
    DuplicateDevice { node: String, device: String },
    #[error("channel {sender}->{receiver} has negative distance {distance_km} km")]
    NegativeDistance { sender: String, receiver: String, distance_km: f64 },
    #[error("channel {sender}->{receiver} does not join the link ends {a} and {b}")]
    ChannelEndpoint { sender: String, receiver: String, a: String, b: String },
    #[error("channel `{0}` needs a sender and a receiver")]
    MissingEndpoint(String),
    #[error("channel `{0}` is detached")]
    Detached(String),
    #[error("channel `{channel}` sends from `{expected}`, not `{got}`")]
    SenderMismatch { channel: String, expected: String, got: String },
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("no {kind} route from `{src}` to `{dst}`")]
    Unreachable { kind: &'static str, src: String, dst: String },
    #[error("no link at {0}: outside the visibility window")]
    NoLink(SimTime),
    #[error("invalid loss table: {0}")]
    LossTable(String),
    #[error("invalid device parameter: {0}")]
    Device(String),
    #[error("topology JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    ClassicalFiber,
    QuantumFiber,
    FreeSpace,
}

impl ChannelKind {
    pub fn is_quantum(self) -> bool {
        !matches!(self, ChannelKind::ClassicalFiber)
    }
}

/// Piecewise-linear loss (dB) as a function of distance (km).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct LossTable {
    points: Vec<(f64, f64)>,
}

impl LossTable {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self, NetError> {
        if points.is_empty() {
            return Err(NetError::LossTable("no points".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(NetError::LossTable("repeated distance".into()));
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite() || p.1 < 0.0) {
            return Err(NetError::LossTable("non-finite or negative entry".into()));
        }
        Ok(LossTable { points })
    }

    /// Default downlink table, monotone in distance.
    pub fn free_space_default() -> Self {
        LossTable::new(vec![(500.0, 22.0), (800.0, 26.0), (1000.0, 28.0), (1200.0, 30.0), (1600.0, 33.0)])
            .expect("default table is valid")
    }

    /// Loss at `km`, clamped to the end values outside the table.
    pub fn loss_db(&self, km: f64) -> f64 {
        let pts = &self.points;
        if km <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if km <= x1 {
                return y0 + (y1 - y0) * (km - x0) / (x1 - x0);
            }
        }
        pts[pts.len() - 1].1
    }
}

impl TryFrom<Vec<[f64; 2]>> for LossTable {
    type Error = NetError;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        LossTable::new(v.into_iter().map(|[a, b]| (a, b)).collect())
    }
}

impl From<LossTable> for Vec<[f64; 2]> {
    fn from(t: LossTable) -> Self {
        t.points.into_iter().map(|(a, b)| [a, b]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossModel {
    PerKm(f64),
    Table(LossTable),
}

/// Survival probability for `loss_db` decibels of attenuation.
pub fn survival_from_db(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Unidirectional channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub kind: ChannelKind,
    pub sender: String,
    pub receiver: String,
    pub distance_km: f64,
    pub loss: LossModel,
    pub attached: bool,
}

impl Channel {
    pub fn new(kind: ChannelKind, sender: &str, receiver: &str, distance_km: f64) -> Result<Self, NetError> {
        if distance_km < 0.0 || !distance_km.is_finite() {
            return Err(NetError::NegativeDistance {
                sender: sender.into(),
                receiver: receiver.into(),
                distance_km,
            });
        }
        let loss = match kind {
            ChannelKind::FreeSpace => LossModel::Table(LossTable::free_space_default()),
            _ => LossModel::PerKm(FIBER_LOSS_DB_PER_KM),
        };
        Ok(Channel {
            name: format!("{sender}->{receiver}"),
            kind,
            sender: sender.into(),
            receiver: receiver.into(),
            distance_km,
            loss,
            attached: true,
        })
    }

    pub fn with_loss(mut self, loss: LossModel) -> Self {
        self.loss = loss;
        self
    }

    pub fn delay(&self) -> SimTime {
        delay_for_km(self.distance_km)
    }

    pub fn loss_db(&self) -> f64 {
        self.loss_db_at(self.distance_km)
    }

    pub fn loss_db_at(&self, km: f64) -> f64 {
        match &self.loss {
            LossModel::PerKm(alpha) => alpha * km,
            LossModel::Table(t) => t.loss_db(km),
        }
    }

    /// Probability that a single photon survives the channel.
    pub fn survival_probability(&self) -> f64 {
        if self.kind.is_quantum() {
            survival_from_db(self.loss_db())
        } else {
            1.0
        }
    }

    fn check_send(&self, sender: &str) -> Result<(), NetError> {
        if !self.attached {
            return Err(NetError::Detached(self.name.clone()));
        }
        if sender != self.sender {
            return Err(NetError::SenderMismatch {
                channel: self.name.clone(),
                expected: self.sender.clone(),
                got: sender.into(),
            });
        }
        Ok(())
    }

    /// Arrival time of a classical message sent at `now`.
    pub fn transmit_classical(&self, sender: &str, now: SimTime) -> Result<SimTime, NetError> {
        self.check_send(sender)?;
        Ok(now + self.delay())
    }

    /// Arrival time of a photon sent at `now`, or `None` when it is lost.
    pub fn transmit_photon<R: Rng + ?Sized>(&self, sender: &str, now: SimTime, rng: &mut R) -> Result<Option<SimTime>, NetError> {
        self.check_send(sender)?;
        let survived = rng.random::<f64>() < self.survival_probability();
        Ok(survived.then(|| now + self.delay()))
    }
}

pub fn delay_for_km(km: f64) -> SimTime {
    SimTime((km * PS_PER_KM as f64).round() as u64)
}

/// Weak coherent or single-photon source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonSource {
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength: f64,
    #[serde(default = "default_mu")]
    pub mean_photon_num: f64,
}

fn default_frequency() -> f64 {
    1e6
}

fn default_wavelength() -> f64 {
    1550.0
}

fn default_mu() -> f64 {
    0.5
}

impl PhotonSource {
    pub fn new(frequency: f64, mean_photon_num: f64) -> Result<Self, NetError> {
        let s = PhotonSource {
            frequency,
            wavelength: default_wavelength(),
            mean_photon_num,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.mean_photon_num >= 0.0 && self.mean_photon_num.is_finite()) {
            return Err(NetError::Device(format!("mean photon number {}", self.mean_photon_num)));
        }
        if !(self.frequency > 0.0) {
            return Err(NetError::Device(format!("frequency {}", self.frequency)));
        }
        Ok(())
    }

    pub fn pulse_period(&self) -> SimTime {
        SimTime((1e12 / self.frequency).round().max(1.0) as u64)
    }

    /// Photon number of one pulse, Poisson with mean `mu`.
    pub fn emit_with<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u32 {
        if mu <= 0.0 {
            return 0;
        }
        Poisson::new(mu).expect("positive mean").sample(rng) as u32
    }

    pub fn emit<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        Self::emit_with(self.mean_photon_num, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectorBasis {
    Z,
    X,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationDetector {
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    #[serde(default)]
    pub dark_count_rate: f64,
    /// Coincidence window used for dark counts, in seconds.
    #[serde(default = "default_window")]
    pub window_s: f64,
    #[serde(default = "default_basis")]
    pub basis: DetectorBasis,
}

fn default_efficiency() -> f64 {
    1.0
}

fn default_window() -> f64 {
    1e-9
}

fn default_basis() -> DetectorBasis {
    DetectorBasis::Z
}

impl PolarizationDetector {
    pub fn new(efficiency: f64, dark_count_rate: f64) -> Result<Self, NetError> {
        let d = PolarizationDetector {
            efficiency,
            dark_count_rate,
            window_s: default_window(),
            basis: DetectorBasis::Z,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(NetError::Device(format!("efficiency {}", self.efficiency)));
        }
        if !(self.dark_count_rate >= 0.0) || !(self.window_s > 0.0) {
            return Err(NetError::Device("dark counts need a non-negative rate and a positive window".into()));
        }
        Ok(())
    }

    /// True when at least one of `photons` arriving photons clicks.
    pub fn detect<R: Rng + ?Sized>(&self, photons: u32, rng: &mut R) -> bool {
        (0..photons).any(|_| rng.random::<f64>() < self.efficiency)
    }

    /// Probability of a dark count in one detection window.
    pub fn dark_count_probability(&self) -> f64 {
        1.0 - (-self.dark_count_rate * self.window_s).exp()
    }
}

/// Distance profile of a pass over a ground station: linear from
/// `max_km` down to `min_km` at the window midpoint and back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mobility {
    pub window_start: SimTime,
    pub window_end: SimTime,
    pub min_km: f64,
    pub max_km: f64,
    #[serde(default = "LossTable::free_space_default")]
    pub loss_table: LossTable,
}

impl Mobility {
    pub fn new(window_start: SimTime, window_end: SimTime, min_km: f64, max_km: f64, loss_table: LossTable) -> Result<Self, NetError> {
        if window_end <= window_start {
            return Err(NetError::Device("empty visibility window".into()));
        }
        if !(0.0 <= min_km && min_km <= max_km) {
            return Err(NetError::Device(format!("distance range {min_km}..{max_km}")));
        }
        Ok(Mobility {
            window_start,
            window_end,
            min_km,
            max_km,
            loss_table,
        })
    }

    pub fn in_window(&self, t: SimTime) -> bool {
        self.window_start <= t && t <= self.window_end
    }

    pub fn closest_approach(&self) -> SimTime {
        SimTime(self.window_start.0 + (self.window_end.0 - self.window_start.0) / 2)
    }

    pub fn distance_km(&self, t: SimTime) -> Option<f64> {
        if !self.in_window(t) {
            return None;
        }
        let start = self.window_start.0 as f64;
        let half = (self.window_end.0 as f64 - start) / 2.0;
        let offset = ((t.0 as f64 - start) - half).abs() / half;
        Some(self.min_km + (self.max_km - self.min_km) * offset)
    }

    /// `(distance km, loss dB)` at `t`.
    pub fn satellite_pass(&self, t: SimTime) -> Result<(f64, f64), NetError> {
        let d = self.distance_km(t).ok_or(NetError::NoLink(t))?;
        Ok((d, self.loss_table.loss_db(d)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Device {
    PhotonSource {
        #[serde(default = "default_source_name")]
        name: String,
        #[serde(flatten)]
        source: PhotonSource,
    },
    PolarizationDetector {
        #[serde(default = "default_detector_name")]
        name: String,
        #[serde(flatten)]
        detector: PolarizationDetector,
    },
}

fn default_source_name() -> String {
    "source".into()
}

fn default_detector_name() -> String {
    "detector".into()
}

impl Device {
    pub fn name(&self) -> &str {
        match self {
            Device::PhotonSource { name, .. } | Device::PolarizationDetector { name, .. } => name,
        }
    }

    fn validate(&self) -> Result<(), NetError> {
        match self {
            Device::PhotonSource { source, .. } => source.validate(),
            Device::PolarizationDetector { detector, .. } => detector.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub kind: String,
    pub devices: Vec<Device>,
    pub location: Option<[f64; 2]>,
    pub mobility: Option<Mobility>,
}

impl Node {
    pub fn new(name: &str, kind: &str) -> Self {
        Node {
            name: name.into(),
            kind: kind.into(),
            devices: Vec::new(),
            location: None,
            mobility: None,
        }
    }

    pub fn install(&mut self, device: Device) -> Result<(), NetError> {
        device.validate()?;
        if self.devices.iter().any(|d| d.name() == device.name()) {
            return Err(NetError::DuplicateDevice {
                node: self.name.clone(),
                device: device.name().into(),
            });
        }
        self.devices.push(device);
        Ok(())
    }

    pub fn source(&self) -> Option<&PhotonSource> {
        self.devices.iter().find_map(|d| match d {
            Device::PhotonSource { source, .. } => Some(source),
            _ => None,
        })
    }

    pub fn detector(&self) -> Option<&PolarizationDetector> {
        self.devices.iter().find_map(|d| match d {
            Device::PolarizationDetector { detector, .. } => Some(detector),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub ends: [String; 2],
    /// Indices into [`Network::channels`].
    pub channels: Vec<usize>,
}

/// `(src, dst)` → next hop; `None` marks an unreachable pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoutingTable {
    next: BTreeMap<(String, String), Option<String>>,
}

impl RoutingTable {
    pub fn next_hop(&self, src: &str, dst: &str) -> Option<&str> {
        self.next
            .get(&(src.to_string(), dst.to_string()))
            .and_then(|h| h.as_deref())
    }

    pub fn is_reachable(&self, src: &str, dst: &str) -> bool {
        src == dst || self.next_hop(src, dst).is_some()
    }

    pub fn len(&self) -> usize {
        self.next.len()
    }

    pub fn is_empty(&self) -> bool {
        self.next.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Network {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub channels: Vec<Channel>,
    pub classical_routes: RoutingTable,
    pub quantum_routes: RoutingTable,
}

impl Network {
    pub fn new() -> Self {
        Network::default()
    }

    pub fn add_node(&mut self, node: Node) -> Result<(), NetError> {
        if self.node(&node.name).is_some() {
            return Err(NetError::DuplicateNode(node.name));
        }
        self.nodes.push(node);
        Ok(())
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn node_mut(&mut self, name: &str) -> Option<&mut Node> {
        self.nodes.iter_mut().find(|n| n.name == name)
    }

    pub fn node_names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }

    /// Adds a link with its channels. Every channel must run between the
    /// two ends.
    pub fn add_link(&mut self, a: &str, b: &str, channels: Vec<Channel>) -> Result<(), NetError> {
        for end in [a, b] {
            if self.node(end).is_none() {
                return Err(NetError::UnknownNode(end.into()));
            }
        }
        let mut ids = Vec::with_capacity(channels.len());
        for mut ch in channels {
            let joins = (ch.sender == a && ch.receiver == b) || (ch.sender == b && ch.receiver == a);
            if !joins {
                return Err(NetError::ChannelEndpoint {
                    sender: ch.sender,
                    receiver: ch.receiver,
                    a: a.into(),
                    b: b.into(),
                });
            }
            let base = ch.name.clone();
            let mut k = 1;
            while self.channels.iter().any(|c| c.name == ch.name) {
                ch.name = format!("{base}#{k}");
                k += 1;
            }
            ids.push(self.channels.len());
            self.channels.push(ch);
        }
        self.links.push(Link {
            ends: [a.into(), b.into()],
            channels: ids,
        });
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Result<&Channel, NetError> {
        self.channels
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| NetError::UnknownChannel(name.into()))
    }

    pub fn channel_mut(&mut self, name: &str) -> Result<&mut Channel, NetError> {
        self.channels
            .iter_mut()
            .find(|c| c.name == name)
            .ok_or_else(|| NetError::UnknownChannel(name.into()))
    }

    /// First attached channel of the given class from `sender` to `receiver`.
    pub fn find_channel(&self, sender: &str, receiver: &str, quantum: bool) -> Option<&Channel> {
        self.channels
            .iter()
            .find(|c| c.sender == sender && c.receiver == receiver && c.kind.is_quantum() == quantum && c.attached)
    }

    fn adjacency(&self, quantum: bool) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut adj: BTreeMap<&str, BTreeSet<&str>> = self.nodes.iter().map(|n| (n.name.as_str(), BTreeSet::new())).collect();
        for c in &self.channels {
            if c.kind.is_quantum() == quantum && c.attached {
                adj.entry(c.sender.as_str()).or_default().insert(c.receiver.as_str());
            }
        }
        adj
    }

    fn build_table(&self, quantum: bool) -> RoutingTable {
        let adj = self.adjacency(quantum);
        let mut reverse: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (s, outs) in &adj {
            for r in outs {
                reverse.entry(r).or_default().push(s);
            }
        }
        let mut next = BTreeMap::new();
        for dst in adj.keys() {
            // Hop distance of every node to `dst`.
            let mut dist: BTreeMap<&str, usize> = BTreeMap::from([(*dst, 0)]);
            let mut queue = VecDeque::from([*dst]);
            while let Some(v) = queue.pop_front() {
                for &u in reverse.get(v).into_iter().flatten() {
                    if !dist.contains_key(u) {
                        dist.insert(u, dist[v] + 1);
                        queue.push_back(u);
                    }
                }
            }
            for (src, outs) in &adj {
                if src == dst {
                    continue;
                }
                // Neighbours iterate in name order, so the first match is the
                // lexicographically smallest next hop.
                let hop = dist.get(src).and_then(|&d| {
                    outs.iter().find(|n| dist.get(*n) == Some(&(d - 1))).map(|n| n.to_string())
                });
                next.insert((src.to_string(), dst.to_string()), hop);
            }
        }
        RoutingTable { next }
    }

    pub fn compute_routes(&mut self) {
        self.classical_routes = self.build_table(false);
        self.quantum_routes = self.build_table(true);
    }

    fn route_in(&self, table: &RoutingTable, kind: &'static str, src: &str, dst: &str) -> Result<Vec<String>, NetError> {
        for n in [src, dst] {
            if self.node(n).is_none() {
                return Err(NetError::UnknownNode(n.into()));
            }
        }
        let mut path = vec![src.to_string()];
        let mut cur = src.to_string();
        while cur != dst {
            let hop = table.next_hop(&cur, dst).ok_or_else(|| NetError::Unreachable {
                kind,
                src: src.into(),
                dst: dst.into(),
            })?;
            cur = hop.to_string();
            path.push(cur.clone());
        }
        Ok(path)
    }

    pub fn classical_route(&self, src: &str, dst: &str) -> Result<Vec<String>, NetError> {
        self.route_in(&self.classical_routes, "classical", src, dst)
    }

    pub fn quantum_route(&self, src: &str, dst: &str) -> Result<Vec<String>, NetError> {
        self.route_in(&self.quantum_routes, "quantum", src, dst)
    }

    /// Registers nodes (with their devices) and channels as entities of `env`.
    pub fn install_into<P>(&self, env: &mut SimEnv<P>) -> Result<(), NetError> {
        for node in &self.nodes {
            let mut e = Entity::new(node.name.clone(), Some(env.id()))?;
            for d in &node.devices {
                e.install(Entity::new(format!("{}.{}", node.name, d.name()), Some(env.id()))?)?;
            }
            env.install(e)?;
        }
        for c in &self.channels {
            env.install(Entity::new(c.name.clone(), Some(env.id()))?)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let doc: TopologyJson = serde_json::from_str(text).map_err(|e| NetError::Json(e.to_string()))?;
        doc.build()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeJson {
    pub name: String,
    #[serde(rename = "type", default = "default_node_type")]
    pub kind: String,
    #[serde(default)]
    pub devices: Vec<Device>,
    #[serde(default)]
    pub location: Option<[f64; 2]>,
    #[serde(default)]
    pub mobility: Option<Mobility>,
}

fn default_node_type() -> String {
    "endnode".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKindJson {
    ClassicalFiber,
    QuantumFiber,
    FreeSpace,
    DuplexClassical,
    DuplexQuantum,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelJson {
    pub kind: ChannelKindJson,
    #[serde(default)]
    pub sender: Option<String>,
    #[serde(default)]
    pub receiver: Option<String>,
    pub distance_km: f64,
    #[serde(default)]
    pub loss_db_per_km: Option<f64>,
    #[serde(default)]
    pub loss_table: Option<LossTable>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkJson {
    pub ends: [String; 2],
    #[serde(default)]
    pub channels: Vec<ChannelJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyJson {
    pub nodes: Vec<NodeJson>,
    #[serde(default)]
    pub links: Vec<LinkJson>,
}

impl ChannelJson {
    fn expand(&self, ends: &[String; 2]) -> Result<Vec<Channel>, NetError> {
        let (kind, duplex) = match self.kind {
            ChannelKindJson::ClassicalFiber => (ChannelKind::ClassicalFiber, false),
            ChannelKindJson::QuantumFiber => (ChannelKind::QuantumFiber, false),
            ChannelKindJson::FreeSpace => (ChannelKind::FreeSpace, false),
            ChannelKindJson::DuplexClassical => (ChannelKind::ClassicalFiber, true),
            ChannelKindJson::DuplexQuantum => (ChannelKind::QuantumFiber, true),
        };
        let sender = self.sender.clone().unwrap_or_else(|| ends[0].clone());
        let receiver = self.receiver.clone().unwrap_or_else(|| {
            if sender == ends[0] {
                ends[1].clone()
            } else {
                ends[0].clone()
            }
        });
        let mut pairs = vec![(sender.clone(), receiver.clone())];
        if duplex {
            pairs.push((receiver, sender));
        }
        pairs
            .into_iter()
            .map(|(s, r)| {
                let mut ch = Channel::new(kind, &s, &r, self.distance_km)?;
                if let Some(t) = &self.loss_table {
                    ch.loss = LossModel::Table(t.clone());
                } else if let Some(a) = self.loss_db_per_km {
                    ch.loss = LossModel::PerKm(a);
                }
                Ok(ch)
            })
            .collect()
    }
}

impl TopologyJson {
    pub fn build(&self) -> Result<Network, NetError> {
        let mut net = Network::new();
        for n in &self.nodes {
            let mut node = Node::new(&n.name, &n.kind);
            node.location = n.location;
            node.mobility = n.mobility.clone();
            for d in &n.devices {
                node.install(d.clone())?;
            }
            net.add_node(node)?;
        }
        for l in &self.links {
            let mut chans = Vec::new();
            for c in &l.channels {
                chans.extend(c.expand(&l.ends)?);
            }
            net.add_link(&l.ends[0], &l.ends[1], chans)?;
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    const TWO_NODE: &str = r#"{
        "nodes": [
            {"name": "Alice", "devices": [{"kind": "photon_source", "frequency": 1e6, "mean_photon_num": 0.2}]},
            {"name": "Bob", "devices": [{"kind": "polarization_detector", "efficiency": 0.8, "dark_count_rate": 100}]}
        ],
        "links": [{"ends": ["Alice", "Bob"], "channels": [
            {"kind": "duplex_classical", "distance_km": 10},
            {"kind": "quantum_fiber", "sender": "Alice", "receiver": "Bob", "distance_km": 10, "loss_db_per_km": 0.2}
        ]}]
    }"#;

    #[test]
    fn loads_two_node_document() {
        let net = Network::from_json(TWO_NODE).unwrap();
        assert_eq!(net.nodes.len(), 2);
        assert_eq!(net.channels.len(), 3);
        assert_eq!(net.node("Alice").unwrap().source().unwrap().mean_photon_num, 0.2);
        assert_eq!(net.node("Bob").unwrap().detector().unwrap().efficiency, 0.8);
        assert!(net.find_channel("Bob", "Alice", false).is_some());
    }

    #[test]
    fn dangling_reference_names_node() {
        let doc = r#"{"nodes":[{"name":"A"}],"links":[{"ends":["A","X"],"channels":[]}]}"#;
        assert_eq!(Network::from_json(doc), Err(NetError::UnknownNode("X".into())));
    }

    #[test]
    fn load_errors() {
        let dup = r#"{"nodes":[{"name":"A"},{"name":"A"}]}"#;
        assert_eq!(Network::from_json(dup), Err(NetError::DuplicateNode("A".into())));
        let neg = r#"{"nodes":[{"name":"A"},{"name":"B"}],"links":[{"ends":["A","B"],"channels":[{"kind":"classical_fiber","distance_km":-1}]}]}"#;
        assert!(matches!(Network::from_json(neg), Err(NetError::NegativeDistance { .. })));
        let wrong = r#"{"nodes":[{"name":"A"},{"name":"B"},{"name":"C"}],"links":[{"ends":["A","B"],"channels":[{"kind":"classical_fiber","sender":"A","receiver":"C","distance_km":1}]}]}"#;
        assert!(matches!(Network::from_json(wrong), Err(NetError::ChannelEndpoint { .. })));
        let dup_dev = r#"{"nodes":[{"name":"A","devices":[{"kind":"photon_source"},{"kind":"photon_source"}]}]}"#;
        assert!(matches!(Network::from_json(dup_dev), Err(NetError::DuplicateDevice { .. })));
    }

    #[test]
    fn classical_delay_one_km() {
        let ch = Channel::new(ChannelKind::ClassicalFiber, "A", "B", 1.0).unwrap();
        assert_eq!(ch.transmit_classical("A", SimTime(7)).unwrap(), SimTime(7 + 5_000_000));
        assert_eq!(ch.survival_probability(), 1.0);
    }

    #[test]
    fn fiber_survival() {
        let zero = Channel::new(ChannelKind::QuantumFiber, "A", "B", 0.0).unwrap();
        assert_eq!(zero.survival_probability(), 1.0);
        let fifty = Channel::new(ChannelKind::QuantumFiber, "A", "B", 50.0).unwrap();
        assert_abs_diff_eq!(fifty.survival_probability(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn transmit_errors() {
        let mut ch = Channel::new(ChannelKind::QuantumFiber, "A", "B", 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(ch.transmit_photon("B", SimTime::ZERO, &mut rng), Err(NetError::SenderMismatch { .. })));
        ch.attached = false;
        assert_eq!(ch.transmit_classical("A", SimTime::ZERO), Err(NetError::Detached("A->B".into())));
    }

    fn line(names: &[&str]) -> Network {
        let mut net = Network::new();
        for n in names {
            net.add_node(Node::new(n, "endnode")).unwrap();
        }
        for w in names.windows(2) {
            add_duplex(&mut net, w[0], w[1]);
        }
        net
    }

    fn add_duplex(net: &mut Network, a: &str, b: &str) {
        net.add_link(
            a,
            b,
            vec![
                Channel::new(ChannelKind::ClassicalFiber, a, b, 1.0).unwrap(),
                Channel::new(ChannelKind::ClassicalFiber, b, a, 1.0).unwrap(),
            ],
        )
        .unwrap();
    }

    #[test]
    fn routes() {
        let mut net = line(&["A", "R", "B"]);
        net.compute_routes();
        assert_eq!(net.classical_route("A", "B").unwrap(), ["A", "R", "B"]);
        assert!(matches!(net.quantum_route("A", "B"), Err(NetError::Unreachable { .. })));

        let mut sq = line(&["A", "C", "B", "D"]);
        add_duplex(&mut sq, "D", "A");
        add_duplex(&mut sq, "A", "B");
        sq.compute_routes();
        assert_eq!(sq.classical_route("A", "B").unwrap(), ["A", "B"]);
        // C–D: via A or B, both two hops; A wins.
        assert_eq!(sq.classical_route("C", "D").unwrap(), ["C", "A", "D"]);
    }

    #[test]
    fn loss_table_interpolates() {
        let t = LossTable::new(vec![(0.0, 0.0), (10.0, 10.0)]).unwrap();
        assert_abs_diff_eq!(t.loss_db(2.5), 2.5);
        assert_abs_diff_eq!(t.loss_db(20.0), 10.0);
        assert!(LossTable::new(vec![]).is_err());
    }

    #[test]
    fn satellite_pass_symmetry() {
        let m = Mobility::new(SimTime::from_secs_f64(1.0), SimTime::from_secs_f64(3.0), 500.0, 1500.0, LossTable::free_space_default()).unwrap();
        let (d, loss) = m.satellite_pass(m.closest_approach()).unwrap();
        assert_abs_diff_eq!(d, 500.0);
        assert_abs_diff_eq!(loss, 22.0);
        let delta = SimTime::from_secs_f64(0.3);
        let a = m.satellite_pass(m.window_start + delta).unwrap();
        let b = m.satellite_pass(m.window_end - delta).unwrap();
        assert_abs_diff_eq!(a.1, b.1, epsilon = 1e-9);
        assert_eq!(m.satellite_pass(SimTime::ZERO), Err(NetError::NoLink(SimTime::ZERO)));
    }

    #[test]
    fn poisson_source_mean() {
        let src = PhotonSource::new(1e6, 0.4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let total: u64 = (0..n).map(|_| src.emit(&mut rng) as u64).sum();
        assert!((total as f64 / n as f64 - 0.4).abs() < 0.004);
        assert_eq!(PhotonSource::emit_with(0.0, &mut rng), 0);
    }

    #[test]
    fn network_entities() {
        let net = Network::from_json(TWO_NODE).unwrap();
        let mut env: SimEnv<()> = SimEnv::new("net", false);
        net.install_into(&mut env).unwrap();
        let names = env.entity_names();
        assert!(names.contains(&"Alice.source".to_string()));
        assert!(names.contains(&"Alice->Bob#1".to_string()) || names.contains(&"Alice->Bob".to_string()));
    }
}
