//! Event-driven teleportation between Alice and Bob with an entangled pair
//! distributed by Charlie.
//!
//! Qubits 0 and 1 are the pair halves held by Alice and Bob, qubit 2 is
//! Alice's input. Bob applies `X^m0` then `Z^m2` once both bits arrived.

use serde::Serialize;

use super::ProtocolError;
use crate::des::{Action, Context, Event, LogLevel, Model, SimEnv, SimReport, SimTime};
use crate::net::{Channel, ChannelKind, Network, Node};
use crate::quantum::{Gate, StateVector, C64};

const CHARLIE: &str = "Charlie";
const ALICE: &str = "Alice";
const BOB: &str = "Bob";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TeleportResult {
    /// Fidelity of Bob's qubit with the input state.
    pub fidelity: f64,
    /// Alice's outcomes on the pair half and on the input qubit.
    pub bits: [u8; 2],
    pub completed_at: SimTime,
    #[serde(skip)]
    pub report: SimReport,
    #[serde(skip)]
    pub trace: String,
}

#[derive(Debug, Clone)]
pub enum TeleportMsg {
    Distribute,
    Qubit,
    Bits([u8; 2]),
    Timeout,
}

struct TeleportModel {
    input: [C64; 2],
    state: StateVector,
    to_alice: SimTime,
    to_bob: SimTime,
    classical: Option<SimTime>,
    timeout: SimTime,
    bob_has_qubit: bool,
    bits: Option<[u8; 2]>,
    done: Option<SimTime>,
}

impl TeleportModel {
    fn try_correct(&mut self, now: SimTime) {
        if self.done.is_some() || !self.bob_has_qubit {
            return;
        }
        let Some([m0, m2]) = self.bits else { return };
        if m0 == 1 {
            self.state.apply_single(1, &Gate::X.target_matrix(&[]).expect("x"));
        }
        if m2 == 1 {
            self.state.apply_single(1, &Gate::Z.target_matrix(&[]).expect("z"));
        }
        self.done = Some(now);
    }

    fn alice_measures(&mut self, ctx: &mut Context<TeleportMsg>) -> Result<(), ProtocolError> {
        self.state.push_qubit(self.input[0], self.input[1]);
        let x = Gate::X.target_matrix(&[]).expect("x");
        self.state.apply_controlled(2, 0, &x);
        self.state.apply_single(2, &Gate::H.target_matrix(&[]).expect("h"));
        let rng = ctx.rng(ALICE);
        let m0 = self.state.measure(0, rng)?;
        let m2 = self.state.measure(2, rng)?;
        match self.classical {
            Some(delay) => {
                ctx.schedule_in(delay, Action::new(BOB, "bits", TeleportMsg::Bits([m0, m2])))?;
            }
            None => ctx.log(LogLevel::Warn, ALICE, "no classical channel to Bob; bits dropped"),
        }
        Ok(())
    }
}

impl Model<TeleportMsg> for TeleportModel {
    type Error = ProtocolError;

    fn handle(&mut self, event: Event<TeleportMsg>, ctx: &mut Context<TeleportMsg>) -> Result<(), ProtocolError> {
        match event.action.payload {
            TeleportMsg::Distribute => {
                self.state = StateVector::new(2);
                self.state.apply_single(0, &Gate::H.target_matrix(&[]).expect("h"));
                self.state.apply_controlled(0, 1, &Gate::X.target_matrix(&[]).expect("x"));
                ctx.schedule_in(self.to_alice, Action::new(ALICE, "qubit", TeleportMsg::Qubit))?;
                ctx.schedule_in(self.to_bob, Action::new(BOB, "qubit", TeleportMsg::Qubit))?;
                ctx.schedule_in(self.timeout, Action::new(BOB, "timeout", TeleportMsg::Timeout))?;
            }
            TeleportMsg::Qubit if event.action.owner == ALICE => self.alice_measures(ctx)?,
            TeleportMsg::Qubit => {
                self.bob_has_qubit = true;
                self.try_correct(ctx.now());
            }
            TeleportMsg::Bits(bits) => {
                self.bits = Some(bits);
                self.try_correct(ctx.now());
            }
            TeleportMsg::Timeout => {
                if self.done.is_none() {
                    return Err(ProtocolError::Stalled(format!("Bob not corrected by {}", ctx.now())));
                }
            }
        }
        Ok(())
    }
}

/// Charlie between Alice and Bob, each at `km` kilometres, plus a direct
/// classical fiber from Alice to Bob of `2 * km`.
pub fn teleport_network(km: f64) -> Result<Network, ProtocolError> {
    let mut net = Network::new();
    for n in [ALICE, BOB, CHARLIE] {
        net.add_node(Node::new(n, "endnode"))?;
    }
    for p in [ALICE, BOB] {
        net.add_link(CHARLIE, p, vec![Channel::new(ChannelKind::QuantumFiber, CHARLIE, p, km)?])?;
    }
    net.add_link(ALICE, BOB, vec![Channel::new(ChannelKind::ClassicalFiber, ALICE, BOB, 2.0 * km)?])?;
    net.compute_routes();
    Ok(net)
}

/// Teleports `input` from Alice to Bob. Fails with
/// [`ProtocolError::Stalled`] when Bob is not done within `timeout` of the
/// start.
pub fn teleport(net: &Network, input: [C64; 2], timeout: SimTime, seed: u64) -> Result<TeleportResult, ProtocolError> {
    let quantum = |to: &str| {
        net.find_channel(CHARLIE, to, true)
            .map(Channel::delay)
            .ok_or_else(|| ProtocolError::MissingChannel {
                kind: "quantum",
                from: CHARLIE.into(),
                to: to.into(),
            })
    };
    let target = StateVector::from_amplitudes(input.to_vec())?;
    let mut model = TeleportModel {
        input,
        state: StateVector::new(0),
        to_alice: quantum(ALICE)?,
        to_bob: quantum(BOB)?,
        classical: net.find_channel(ALICE, BOB, false).map(Channel::delay),
        timeout,
        bob_has_qubit: false,
        bits: None,
        done: None,
    };
    let mut env: SimEnv<TeleportMsg> = SimEnv::with_seed("teleport", false, seed);
    net.install_into(&mut env)?;
    env.init(&mut model)?;
    env.schedule_at(SimTime::ZERO, 0, Action::new(CHARLIE, "distribute", TeleportMsg::Distribute))?;
    let report = env.run(&mut model, None, false)?;
    let completed_at = model
        .done
        .ok_or_else(|| ProtocolError::Stalled("simulation ended before correction".into()))?;
    let bits = model.bits.expect("bits arrive before correction");
    Ok(TeleportResult {
        fidelity: model.state.subsystem_fidelity(&[1], &target),
        bits,
        completed_at,
        report,
        trace: env.trace_text(),
    })
}

/// Amplitudes of `rx(theta)|0⟩`.
pub fn rx_input(theta: f64) -> [C64; 2] {
    [C64::new((theta / 2.0).cos(), 0.0), C64::new(0.0, -(theta / 2.0).sin())]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fidelity_for_all_outcomes() {
        let net = teleport_network(10.0).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..40 {
            let r = teleport(&net, rx_input(0.3 + seed as f64 * 0.1), SimTime::from_ms(1), seed).unwrap();
            assert!((r.fidelity - 1.0).abs() < 1e-9);
            assert_eq!(r.completed_at, SimTime(150_000_000));
            seen.insert(r.bits);
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn detached_classical_channel_stalls() {
        let mut net = teleport_network(10.0).unwrap();
        let name = net.find_channel(ALICE, BOB, false).unwrap().name.clone();
        net.channel_mut(&name).unwrap().attached = false;
        let err = teleport(&net, rx_input(1.0), SimTime::from_ms(1), 0).unwrap_err();
        assert!(matches!(err, ProtocolError::Stalled(_)));
    }

    #[test]
    fn missing_quantum_channel() {
        let mut net = teleport_network(1.0).unwrap();
        net.channels.retain(|c| c.receiver != BOB || !c.kind.is_quantum());
        assert!(matches!(
            teleport(&net, rx_input(1.0), SimTime::from_ms(1), 0),
            Err(ProtocolError::MissingChannel { .. })
        ));
    }
}
