//! The CHSH nonlocal game.
//!
//! A referee sends independent uniform bits `x` to Alice and `y` to Bob and
//! collects their answers `a`, `b`. The pair wins when `a XOR b = x AND y`.

use std::f64::consts::FRAC_PI_4;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::compiler::{compile_protocol, ProtocolInstruction};
use crate::des::{Action, Context, Event, Model, SimEnv, SimReport, SimTime};
use crate::net::{Channel, ChannelKind, Network, Node};
use crate::quantum::{exact_state, Gate, StateVector, C64};

pub fn referee(x: u8, y: u8, a: u8, b: u8) -> bool {
    (a ^ b) == (x & y)
}

/// Best average win rate over all deterministic answer tables.
pub fn classical_exhaustive() -> f64 {
    let mut best = 0.0f64;
    for table in 0u8..16 {
        let alice = |x: u8| (table >> x) & 1;
        let bob = |y: u8| (table >> (2 + y)) & 1;
        let wins = (0..4u8).filter(|q| referee(q >> 1, q & 1, alice(q >> 1), bob(q & 1))).count();
        best = best.max(wins as f64 / 4.0);
    }
    best
}

/// Bob's measurement rotation for question `y`.
pub fn bob_angle(y: u8) -> f64 {
    if y == 0 {
        -FRAC_PI_4
    } else {
        FRAC_PI_4
    }
}

/// Shared Bell pair, Alice measures Z or X, Bob measures at ±45° between
/// them, all through the protocol compiler.
pub fn chsh_script(x: u8, y: u8) -> Vec<ProtocolInstruction> {
    use ProtocolInstruction as P;
    let mut s = vec![
        P::local("Charlie", Gate::H, 0),
        P::local2("Charlie", Gate::Cnot, [0, 1]),
        P::transmit("Charlie", "Alice", 0),
        P::transmit("Charlie", "Bob", 1),
    ];
    if x == 1 {
        s.push(P::local("Alice", Gate::H, 0));
    }
    s.push(P::rotation("Bob", Gate::Ry, 0, bob_angle(y)));
    s.push(P::local("Alice", Gate::Measure, 0));
    s.push(P::local("Bob", Gate::Measure, 0));
    s
}

/// Exact win probability of the compiled quantum strategy, averaged over
/// the four questions.
pub fn chsh_exact_win() -> Result<f64, ProtocolError> {
    let mut total = 0.0;
    for x in 0..2u8 {
        for y in 0..2u8 {
            let circuit = compile_protocol(&chsh_script(x, y))?.into_circuit();
            for (key, branch) in exact_state(&circuit)? {
                let bits = key.as_bytes();
                let (a, b) = (bits[0] - b'0', bits[1] - b'0');
                if referee(x, y, a, b) {
                    total += branch.probability;
                }
            }
        }
    }
    Ok(total / 4.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Both players always answer 0.
    Classical,
    /// Each round shares a fresh Bell pair.
    Quantum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GameRecord {
    pub round: u64,
    pub x: u8,
    pub y: u8,
    pub a: u8,
    pub b: u8,
    pub win: bool,
}

#[derive(Debug, Clone)]
pub struct ChshResult {
    pub records: Vec<GameRecord>,
    pub report: SimReport,
    pub trace: String,
}

impl ChshResult {
    pub fn wins(&self) -> usize {
        self.records.iter().filter(|r| r.win).count()
    }

    pub fn win_rate(&self) -> f64 {
        self.wins() as f64 / self.records.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,x,y,a,b,win\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{},{},{}\n", r.round, r.x, r.y, r.a, r.b, u8::from(r.win)));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum ChshMsg {
    Round(u64),
    Question { round: u64, bit: u8 },
    Answer { round: u64, player: usize, bit: u8 },
}

const PLAYERS: [&str; 2] = ["Alice", "Bob"];
const REFEREE: &str = "Referee";

#[derive(Debug, Clone, Copy, Default)]
struct Pending {
    x: u8,
    y: u8,
    answers: [Option<u8>; 2],
}

struct ChshModel {
    strategy: Strategy,
    rounds: u64,
    period: SimTime,
    to_player: [SimTime; 2],
    to_referee: [SimTime; 2],
    pairs: Vec<StateVector>,
    pending: Vec<Pending>,
    records: Vec<GameRecord>,
}

impl ChshModel {
    fn answer(&mut self, round: u64, player: usize, bit: u8, ctx: &mut Context<ChshMsg>) -> u8 {
        match self.strategy {
            Strategy::Classical => 0,
            Strategy::Quantum => {
                let state = &mut self.pairs[round as usize];
                let m = if player == 0 {
                    (bit == 1).then(|| Gate::H.target_matrix(&[]).expect("h"))
                } else {
                    Gate::Ry.target_matrix(&[bob_angle(bit)])
                };
                if let Some(m) = m {
                    state.apply_single(player, &m);
                }
                state.measure(player, ctx.rng(PLAYERS[player])).expect("qubit in range")
            }
        }
    }
}

impl Model<ChshMsg> for ChshModel {
    type Error = ProtocolError;

    fn handle(&mut self, event: Event<ChshMsg>, ctx: &mut Context<ChshMsg>) -> Result<(), ProtocolError> {
        match event.action.payload {
            ChshMsg::Round(round) => {
                let rng = ctx.rng(REFEREE);
                let (x, y) = (rng.random_range(0..2u8), rng.random_range(0..2u8));
                self.pending.push(Pending { x, y, answers: [None; 2] });
                if self.strategy == Strategy::Quantum {
                    let h = std::f64::consts::FRAC_1_SQRT_2;
                    let mut amps = vec![C64::new(0.0, 0.0); 4];
                    amps[0] = C64::new(h, 0.0);
                    amps[3] = C64::new(h, 0.0);
                    self.pairs.push(StateVector::from_amplitudes(amps)?);
                }
                for (player, bit) in [x, y].into_iter().enumerate() {
                    ctx.schedule_in(
                        self.to_player[player],
                        Action::new(PLAYERS[player], "question", ChshMsg::Question { round, bit }),
                    )?;
                }
                if round + 1 < self.rounds {
                    ctx.schedule_in(self.period, Action::new(REFEREE, "round", ChshMsg::Round(round + 1)))?;
                }
            }
            ChshMsg::Question { round, bit } => {
                let player = usize::from(event.action.owner == PLAYERS[1]);
                let a = self.answer(round, player, bit, ctx);
                ctx.schedule_in(
                    self.to_referee[player],
                    Action::new(REFEREE, "answer", ChshMsg::Answer { round, player, bit: a }),
                )?;
            }
            ChshMsg::Answer { round, player, bit } => {
                let p = &mut self.pending[round as usize];
                p.answers[player] = Some(bit);
                if let [Some(a), Some(b)] = p.answers {
                    self.records.push(GameRecord {
                        round,
                        x: p.x,
                        y: p.y,
                        a,
                        b,
                        win: referee(p.x, p.y, a, b),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Referee linked to Alice and Bob by classical fibers of `km` kilometres.
pub fn chsh_network(km: f64) -> Result<Network, ProtocolError> {
    let mut net = Network::new();
    for name in [REFEREE, PLAYERS[0], PLAYERS[1]] {
        net.add_node(Node::new(name, "endnode"))?;
    }
    for p in PLAYERS {
        net.add_link(
            REFEREE,
            p,
            vec![
                Channel::new(ChannelKind::ClassicalFiber, REFEREE, p, km)?,
                Channel::new(ChannelKind::ClassicalFiber, p, REFEREE, km)?,
            ],
        )?;
    }
    net.compute_routes();
    Ok(net)
}

/// Plays `rounds` games on `net`, which must contain `Referee`, `Alice`
/// and `Bob` with classical channels both ways. With `trace` the event
/// trace is kept in the result.
pub fn chsh_play(
    net: &Network,
    strategy: Strategy,
    rounds: u64,
    period: SimTime,
    trace: bool,
    seed: u64,
) -> Result<ChshResult, ProtocolError> {
    let delay = |from: &str, to: &str| {
        net.find_channel(from, to, false)
            .map(Channel::delay)
            .ok_or_else(|| ProtocolError::MissingChannel {
                kind: "classical",
                from: from.into(),
                to: to.into(),
            })
    };
    let mut model = ChshModel {
        strategy,
        rounds,
        period,
        to_player: [delay(REFEREE, PLAYERS[0])?, delay(REFEREE, PLAYERS[1])?],
        to_referee: [delay(PLAYERS[0], REFEREE)?, delay(PLAYERS[1], REFEREE)?],
        pairs: Vec::new(),
        pending: Vec::new(),
        records: Vec::with_capacity(rounds as usize),
    };
    let mut env: SimEnv<ChshMsg> = SimEnv::with_seed("chsh", false, seed);
    env.set_trace(trace);
    env.init(&mut model)?;
    if rounds > 0 {
        env.schedule_at(SimTime::ZERO, 0, Action::new(REFEREE, "round", ChshMsg::Round(0)))?;
    }
    let report = env.run(&mut model, None, false)?;
    model.records.sort_by_key(|r| r.round);
    Ok(ChshResult {
        records: model.records,
        report,
        trace: env.trace_text(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classical_bound() {
        assert_eq!(classical_exhaustive(), 0.75);
    }

    #[test]
    fn exact_quantum_value() {
        let expect = (std::f64::consts::PI / 8.0).cos().powi(2);
        assert!((chsh_exact_win().unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn played_games() {
        let net = chsh_network(1.0).unwrap();
        let c = chsh_play(&net, Strategy::Classical, 4000, SimTime::from_ns(100), false, 1).unwrap();
        assert_eq!(c.records.len(), 4000);
        assert!(c.records.iter().all(|r| r.win == (r.x & r.y == 0)));
        let q = chsh_play(&net, Strategy::Quantum, 4000, SimTime::from_ns(100), false, 1).unwrap();
        assert!((q.win_rate() - 0.8536).abs() < 0.03, "{}", q.win_rate());
    }
}
