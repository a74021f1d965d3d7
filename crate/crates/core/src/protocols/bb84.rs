//! Prepare-and-measure key generation (BB84) with optional decoy intensities.
//!
//! Alice emits one pulse per source period. Each pulse carries a random bit
//! in a random basis and a Poisson number of photons (or exactly one in
//! single-photon mode). Photons cross the quantum channel independently;
//! survivors reach Bob, who measures in a random basis. Dark counts fire
//! with the detector's per-window probability. After the last pulse Bob
//! announces his bases over the classical channel, Alice answers with the
//! matching indices and both keep those bits.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_distr::{Binomial, Distribution, Geometric};
use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::des::{Action, Context, Event, Model, SimEnv, SimReport, SimTime};
use crate::net::{delay_for_km, survival_from_db, Channel, Mobility, Network, PhotonSource, PolarizationDetector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityClass {
    pub name: String,
    pub mu: f64,
    pub probability: f64,
}

impl IntensityClass {
    pub fn new(name: &str, mu: f64, probability: f64) -> Self {
        IntensityClass {
            name: name.into(),
            mu,
            probability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bb84Params {
    pub pulses: u64,
    /// Emission time of the first pulse.
    pub start: SimTime,
    /// Intensity mixture; empty means the source's own mean photon number.
    pub classes: Vec<IntensityClass>,
    /// Emit exactly one photon per pulse.
    pub single_photon: bool,
    /// Probability that a photon measured in the matching basis flips.
    pub misalignment: f64,
    /// Record the event trace.
    pub trace: bool,
}

impl Default for Bb84Params {
    fn default() -> Self {
        Bb84Params {
            pulses: 10_000,
            start: SimTime::ZERO,
            classes: Vec::new(),
            single_photon: false,
            misalignment: 0.0,
            trace: false,
        }
    }
}

fn validate_classes(classes: &[IntensityClass]) -> Result<(), ProtocolError> {
    let total: f64 = classes.iter().map(|c| c.probability).sum();
    if classes.iter().any(|c| !(0.0..=1.0).contains(&c.probability)) || (total - 1.0).abs() > 1e-9 {
        return Err(ProtocolError::Probabilities(format!(
            "class probabilities must lie in [0, 1] and sum to 1 (sum {total})"
        )));
    }
    if classes.iter().any(|c| !(c.mu >= 0.0 && c.mu.is_finite())) {
        return Err(ProtocolError::Probabilities("mean photon numbers must be non-negative".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiftedBit {
    pub index: u64,
    pub class: usize,
    pub alice: u8,
    pub bob: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStats {
    pub name: String,
    pub mu: f64,
    pub pulses: u64,
    pub detections: u64,
    pub sifted: u64,
    pub errors: u64,
}

impl ClassStats {
    /// Detections per pulse sent in this class.
    pub fn gain(&self) -> f64 {
        self.detections as f64 / self.pulses.max(1) as f64
    }

    pub fn qber(&self) -> Option<f64> {
        (self.sifted > 0).then(|| self.errors as f64 / self.sifted as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bb84Result {
    pub pulses: u64,
    pub period: SimTime,
    pub start: SimTime,
    pub detections: u64,
    pub sifted: Vec<SiftedBit>,
    pub classes: Vec<ClassStats>,
    pub report: SimReport,
    pub trace: String,
}

impl Bb84Result {
    pub fn alice_key(&self) -> Vec<u8> {
        self.sifted.iter().map(|s| s.alice).collect()
    }

    pub fn bob_key(&self) -> Vec<u8> {
        self.sifted.iter().map(|s| s.bob).collect()
    }

    pub fn errors(&self) -> usize {
        self.sifted.iter().filter(|s| s.alice != s.bob).count()
    }

    pub fn qber(&self) -> Result<f64, ProtocolError> {
        if self.sifted.is_empty() {
            return Err(ProtocolError::EmptyKey);
        }
        Ok(self.errors() as f64 / self.sifted.len() as f64)
    }

    pub fn detection_rate(&self) -> f64 {
        self.detections as f64 / self.pulses.max(1) as f64
    }

    pub fn sifted_fraction(&self) -> f64 {
        self.sifted.len() as f64 / self.pulses.max(1) as f64
    }

    /// Emission time of pulse `index`.
    pub fn pulse_time(&self, index: u64) -> SimTime {
        SimTime(self.start.0 + index * self.period.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bb84Msg {
    Emit(u64),
    Photon { index: u64, photons: u32, bit: u8, basis: u8 },
    Finalize,
    Bases(Vec<(u64, u8)>),
    Matches(Vec<u64>),
}

/// Quantum link as seen by the protocol: a fixed channel, or a moving
/// sender whose distance and loss follow its mobility profile.
#[derive(Debug, Clone)]
enum QuantumLink {
    Fixed(Channel),
    Moving(Mobility),
}

impl QuantumLink {
    /// `(survival probability, delay)` at `t`; `None` when there is no link.
    fn at(&self, t: SimTime) -> Option<(f64, SimTime)> {
        match self {
            QuantumLink::Fixed(ch) => Some((ch.survival_probability(), ch.delay())),
            QuantumLink::Moving(m) => m
                .satellite_pass(t)
                .ok()
                .map(|(d, loss)| (survival_from_db(loss), delay_for_km(d))),
        }
    }

    fn max_delay(&self) -> SimTime {
        match self {
            QuantumLink::Fixed(ch) => ch.delay(),
            QuantumLink::Moving(m) => delay_for_km(m.max_km),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Emitted {
    class: u8,
    bit: u8,
    basis: u8,
}

struct Bb84Model {
    alice: String,
    bob: String,
    channel_name: String,
    params: Bb84Params,
    classes: Vec<IntensityClass>,
    period: SimTime,
    link: QuantumLink,
    to_alice: SimTime,
    to_bob: SimTime,
    detector: PolarizationDetector,
    emitted: Vec<Emitted>,
    arrived: HashSet<u64>,
    /// index → (basis, bit) of Bob's clicks
    clicks: HashMap<u64, (u8, u8)>,
    matches: Option<Vec<u64>>,
}

impl Bb84Model {
    fn emit(&mut self, index: u64, ctx: &mut Context<Bb84Msg>) -> Result<(), ProtocolError> {
        let now = ctx.now();
        let (class, bit, basis, photons) = {
            let rng = ctx.rng(&self.alice);
            let class = if self.classes.len() == 1 {
                0
            } else {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = self.classes.len() - 1;
                for (i, c) in self.classes.iter().enumerate() {
                    acc += c.probability;
                    if u < acc {
                        chosen = i;
                        break;
                    }
                }
                chosen
            };
            let bit = rng.random_range(0..2u8);
            let basis = rng.random_range(0..2u8);
            let photons = if self.params.single_photon {
                1
            } else {
                PhotonSource::emit_with(self.classes[class].mu, rng)
            };
            (class, bit, basis, photons)
        };
        self.emitted.push(Emitted {
            class: class as u8,
            bit,
            basis,
        });
        if photons > 0 {
            if let Some((survival, delay)) = self.link.at(now) {
                let rng = ctx.rng(&self.channel_name);
                let survived = if survival >= 1.0 {
                    u64::from(photons)
                } else {
                    Binomial::new(u64::from(photons), survival)
                        .expect("valid binomial")
                        .sample(rng)
                };
                if survived > 0 {
                    let msg = Bb84Msg::Photon {
                        index,
                        photons: survived as u32,
                        bit,
                        basis,
                    };
                    ctx.schedule_in(delay, Action::new(self.bob.clone(), "photon", msg))?;
                }
            }
        }
        if index + 1 < self.params.pulses {
            ctx.schedule_in(self.period, Action::new(self.alice.clone(), "emit", Bb84Msg::Emit(index + 1)))?;
        } else {
            let wait = self.link.max_delay() + SimTime(1);
            ctx.schedule_in(wait, Action::new(self.bob.clone(), "finalize", Bb84Msg::Finalize))?;
        }
        Ok(())
    }

    fn photon(&mut self, index: u64, photons: u32, bit: u8, basis: u8, ctx: &mut Context<Bb84Msg>) {
        self.arrived.insert(index);
        let rng = ctx.rng(&self.bob);
        let bob_basis = rng.random_range(0..2u8);
        if self.detector.detect(photons, rng) {
            let mut out = if bob_basis == basis { bit } else { rng.random_range(0..2u8) };
            if bob_basis == basis && self.params.misalignment > 0.0 && rng.random::<f64>() < self.params.misalignment {
                out ^= 1;
            }
            self.clicks.insert(index, (bob_basis, out));
        } else if rng.random::<f64>() < self.detector.dark_count_probability() {
            self.clicks.insert(index, (bob_basis, rng.random_range(0..2u8)));
        }
    }

    /// Dark counts in pulses that no photon reached.
    fn dark_counts(&mut self, ctx: &mut Context<Bb84Msg>) {
        let p = self.detector.dark_count_probability();
        if p <= 0.0 {
            return;
        }
        let rng = ctx.rng(&self.bob);
        let gap = Geometric::new(p).expect("probability in (0, 1]");
        let mut index = gap.sample(rng);
        while index < self.params.pulses {
            if !self.arrived.contains(&index) {
                let basis = rng.random_range(0..2u8);
                let bit = rng.random_range(0..2u8);
                self.clicks.insert(index, (basis, bit));
            }
            index = index.saturating_add(1).saturating_add(gap.sample(rng));
        }
    }

    fn finalize(&mut self, ctx: &mut Context<Bb84Msg>) -> Result<(), ProtocolError> {
        self.dark_counts(ctx);
        let mut bases: Vec<(u64, u8)> = self.clicks.iter().map(|(i, (b, _))| (*i, *b)).collect();
        bases.sort_unstable();
        ctx.schedule_in(self.to_alice, Action::new(self.alice.clone(), "bases", Bb84Msg::Bases(bases)))?;
        Ok(())
    }

    fn bases(&mut self, bases: Vec<(u64, u8)>, ctx: &mut Context<Bb84Msg>) -> Result<(), ProtocolError> {
        let matches: Vec<u64> = bases
            .into_iter()
            .filter(|(i, b)| self.emitted[*i as usize].basis == *b)
            .map(|(i, _)| i)
            .collect();
        ctx.schedule_in(self.to_bob, Action::new(self.bob.clone(), "matches", Bb84Msg::Matches(matches)))?;
        Ok(())
    }

    fn result(self, report: SimReport, trace: String) -> Bb84Result {
        let mut classes: Vec<ClassStats> = self
            .classes
            .iter()
            .map(|c| ClassStats {
                name: c.name.clone(),
                mu: c.mu,
                pulses: 0,
                detections: 0,
                sifted: 0,
                errors: 0,
            })
            .collect();
        for e in &self.emitted {
            classes[e.class as usize].pulses += 1;
        }
        for i in self.clicks.keys() {
            classes[self.emitted[*i as usize].class as usize].detections += 1;
        }
        let sifted: Vec<SiftedBit> = self
            .matches
            .unwrap_or_default()
            .into_iter()
            .map(|index| {
                let e = self.emitted[index as usize];
                SiftedBit {
                    index,
                    class: e.class as usize,
                    alice: e.bit,
                    bob: self.clicks[&index].1,
                }
            })
            .collect();
        for s in &sifted {
            classes[s.class].sifted += 1;
            if s.alice != s.bob {
                classes[s.class].errors += 1;
            }
        }
        Bb84Result {
            pulses: self.emitted.len() as u64,
            period: self.period,
            start: self.params.start,
            detections: self.clicks.len() as u64,
            sifted,
            classes,
            report,
            trace,
        }
    }
}

impl Model<Bb84Msg> for Bb84Model {
    type Error = ProtocolError;

    fn handle(&mut self, event: Event<Bb84Msg>, ctx: &mut Context<Bb84Msg>) -> Result<(), ProtocolError> {
        match event.action.payload {
            Bb84Msg::Emit(i) => self.emit(i, ctx),
            Bb84Msg::Photon { index, photons, bit, basis } => {
                self.photon(index, photons, bit, basis, ctx);
                Ok(())
            }
            Bb84Msg::Finalize => self.finalize(ctx),
            Bb84Msg::Bases(b) => self.bases(b, ctx),
            Bb84Msg::Matches(m) => {
                self.matches = Some(m);
                Ok(())
            }
        }
    }
}

fn classical_delay(net: &Network, from: &str, to: &str) -> Result<SimTime, ProtocolError> {
    net.find_channel(from, to, false)
        .map(Channel::delay)
        .ok_or_else(|| ProtocolError::MissingChannel {
            kind: "classical",
            from: from.into(),
            to: to.into(),
        })
}

/// Runs BB84 (or its decoy variant when `params.classes` has several
/// entries) between `alice` and `bob` of `net`.
pub fn run_bb84(net: &Network, alice: &str, bob: &str, params: &Bb84Params, seed: u64) -> Result<Bb84Result, ProtocolError> {
    let a = net.node(alice).ok_or_else(|| crate::net::NetError::UnknownNode(alice.into()))?;
    let b = net.node(bob).ok_or_else(|| crate::net::NetError::UnknownNode(bob.into()))?;
    let source = a.source().ok_or_else(|| ProtocolError::MissingDevice {
        node: alice.into(),
        device: "photon source",
    })?;
    let detector = b.detector().ok_or_else(|| ProtocolError::MissingDevice {
        node: bob.into(),
        device: "polarization detector",
    })?;
    let channel = net.find_channel(alice, bob, true).ok_or_else(|| ProtocolError::MissingChannel {
        kind: "quantum",
        from: alice.into(),
        to: bob.into(),
    })?;
    let to_alice = classical_delay(net, bob, alice)?;
    let to_bob = classical_delay(net, alice, bob)?;
    let classes = if params.classes.is_empty() {
        vec![IntensityClass::new("signal", source.mean_photon_num, 1.0)]
    } else {
        params.classes.clone()
    };
    validate_classes(&classes)?;
    let link = match &a.mobility {
        Some(m) if channel.kind == crate::net::ChannelKind::FreeSpace => QuantumLink::Moving(m.clone()),
        _ => QuantumLink::Fixed(channel.clone()),
    };
    let mut model = Bb84Model {
        alice: alice.into(),
        bob: bob.into(),
        channel_name: channel.name.clone(),
        params: params.clone(),
        classes,
        period: source.pulse_period(),
        link,
        to_alice,
        to_bob,
        detector: detector.clone(),
        emitted: Vec::with_capacity(params.pulses.min(1 << 24) as usize),
        arrived: HashSet::new(),
        clicks: HashMap::new(),
        matches: None,
    };
    let mut env: SimEnv<Bb84Msg> = SimEnv::with_seed("bb84", false, seed);
    env.set_trace(params.trace);
    env.init(&mut model)?;
    if params.pulses > 0 {
        env.schedule_at(params.start, 0, Action::new(alice, "emit", Bb84Msg::Emit(0)))?;
    } else {
        model.matches = Some(Vec::new());
    }
    let report = env.run(&mut model, None, false)?;
    let trace = env.trace_text();
    Ok(model.result(report, trace))
}

/// Plain BB84 with the source's own intensity.
pub fn bb84_generate(net: &Network, alice: &str, bob: &str, params: &Bb84Params, seed: u64) -> Result<Bb84Result, ProtocolError> {
    let mut p = params.clone();
    p.classes.clear();
    run_bb84(net, alice, bob, &p, seed)
}

/// Decoy-state BB84 over the given intensity mixture.
pub fn decoy_bb84_generate(
    net: &Network,
    alice: &str,
    bob: &str,
    classes: &[IntensityClass],
    params: &Bb84Params,
    seed: u64,
) -> Result<Bb84Result, ProtocolError> {
    if classes.is_empty() {
        return Err(ProtocolError::Probabilities("no intensity classes".into()));
    }
    validate_classes(classes)?;
    let mut p = params.clone();
    p.classes = classes.to_vec();
    run_bb84(net, alice, bob, &p, seed)
}

/// Two-node network for key generation over a fiber of `km` kilometres.
pub fn point_to_point(km: f64, source: PhotonSource, detector: PolarizationDetector) -> Result<Network, ProtocolError> {
    use crate::net::{ChannelKind, Device, Node};
    let mut net = Network::new();
    let mut alice = Node::new("Alice", "endnode");
    alice.install(Device::PhotonSource {
        name: "source".into(),
        source,
    })?;
    let mut bob = Node::new("Bob", "endnode");
    bob.install(Device::PolarizationDetector {
        name: "detector".into(),
        detector,
    })?;
    net.add_node(alice)?;
    net.add_node(bob)?;
    net.add_link(
        "Alice",
        "Bob",
        vec![
            Channel::new(ChannelKind::QuantumFiber, "Alice", "Bob", km)?,
            Channel::new(ChannelKind::ClassicalFiber, "Alice", "Bob", km)?,
            Channel::new(ChannelKind::ClassicalFiber, "Bob", "Alice", km)?,
        ],
    )?;
    net.compute_routes();
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal(km: f64) -> Network {
        point_to_point(km, PhotonSource::new(1e6, 1.0).unwrap(), PolarizationDetector::new(1.0, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn ideal_devices_sift_half_without_errors() {
        let params = Bb84Params {
            pulses: 10_000,
            single_photon: true,
            ..Bb84Params::default()
        };
        let r = bb84_generate(&ideal(0.0), "Alice", "Bob", &params, 1).unwrap();
        assert_eq!(r.detections, 10_000);
        assert!((r.sifted_fraction() - 0.5).abs() < 0.02);
        assert_eq!(r.qber().unwrap(), 0.0);
        assert_eq!(r.alice_key(), r.bob_key());
    }

    #[test]
    fn fifty_km_detection_rate() {
        let params = Bb84Params {
            pulses: 20_000,
            single_photon: true,
            ..Bb84Params::default()
        };
        let r = bb84_generate(&ideal(50.0), "Alice", "Bob", &params, 2).unwrap();
        assert!((r.detection_rate() - 0.1).abs() < 0.01, "{}", r.detection_rate());
    }

    #[test]
    fn zero_pulses_is_empty_key() {
        let params = Bb84Params {
            pulses: 0,
            ..Bb84Params::default()
        };
        let r = bb84_generate(&ideal(1.0), "Alice", "Bob", &params, 3).unwrap();
        assert!(r.sifted.is_empty());
        assert_eq!(r.qber(), Err(ProtocolError::EmptyKey));
    }

    #[test]
    fn decoy_classes() {
        let net = point_to_point(10.0, PhotonSource::new(1e6, 0.5).unwrap(), PolarizationDetector::new(0.5, 0.0).unwrap()).unwrap();
        let classes = [
            IntensityClass::new("signal", 0.8, 0.5),
            IntensityClass::new("decoy", 0.1, 0.25),
            IntensityClass::new("vacuum", 0.0, 0.25),
        ];
        let params = Bb84Params {
            pulses: 40_000,
            ..Bb84Params::default()
        };
        let r = decoy_bb84_generate(&net, "Alice", "Bob", &classes, &params, 4).unwrap();
        assert_eq!(r.classes[2].detections, 0);
        assert!(r.classes[0].gain() > r.classes[1].gain());
        let bad = [IntensityClass::new("signal", 0.8, 0.7)];
        assert!(matches!(
            decoy_bb84_generate(&net, "Alice", "Bob", &bad, &params, 4),
            Err(ProtocolError::Probabilities(_))
        ));
    }

    #[test]
    fn single_class_matches_plain() {
        let net = point_to_point(5.0, PhotonSource::new(1e6, 0.5).unwrap(), PolarizationDetector::new(0.6, 0.0).unwrap()).unwrap();
        let params = Bb84Params {
            pulses: 5_000,
            ..Bb84Params::default()
        };
        let plain = bb84_generate(&net, "Alice", "Bob", &params, 9).unwrap();
        let decoy = decoy_bb84_generate(&net, "Alice", "Bob", &[IntensityClass::new("signal", 0.5, 1.0)], &params, 9).unwrap();
        assert_eq!(plain.sifted, decoy.sifted);
    }

    #[test]
    fn missing_devices() {
        let mut net = ideal(1.0);
        net.node_mut("Alice").unwrap().devices.clear();
        assert!(matches!(
            bb84_generate(&net, "Alice", "Bob", &Bb84Params::default(), 0),
            Err(ProtocolError::MissingDevice { .. })
        ));
    }

    #[test]
    fn dark_counts_add_errors() {
        let mut det = PolarizationDetector::new(1.0, 1e7).unwrap();
        det.window_s = 1e-8;
        let net = point_to_point(100.0, PhotonSource::new(1e6, 0.5).unwrap(), det).unwrap();
        let params = Bb84Params {
            pulses: 20_000,
            ..Bb84Params::default()
        };
        let r = bb84_generate(&net, "Alice", "Bob", &params, 5).unwrap();
        assert!(r.qber().unwrap() > 0.05);
    }
}
