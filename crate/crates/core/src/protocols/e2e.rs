//! End-to-end key distribution over trusted repeaters with key pools.
//!
//! A request travels hop by hop from `src` to `dst`. Repeaters forward it
//! (or reject it when some on-path pool could never hold `key_num` keys),
//! `dst` accepts, and the acceptance travels back. Every repeater then
//! obtains the keys of its upstream and downstream segments, relays
//! `c = k_up XOR k_down` to `dst` and serves its FIFO queue in order.
//! Segments between two repeaters draw their keys from a shared key pool;
//! segments touching an end node generate keys on demand. `dst` recovers
//! the key of the first segment as `k_last XOR c_1 XOR ... XOR c_m` and
//! sends DONE back to `src`, whose key is the first segment key.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::keypool::{random_key, xor_keys, Delivery, Key, KeyPool};
use super::stack::{ProtocolStack, KEY_GENERATION, QKD_APP, QKD_RMP, QKD_ROUTING};
use super::ProtocolError;
use crate::des::{Action, Context, Event, Model, SimEnv, SimReport, SimTime};
use crate::net::{Channel, ChannelKind, Network, Node};
use crate::parallel::{map_slice, Execution};
use crate::rng::named_stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestState {
    Issued,
    Accepted,
    Queued,
    Serving,
    Done,
    Rejected,
}

impl std::fmt::Display for RequestState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RequestState::Issued => "issued",
            RequestState::Accepted => "accepted",
            RequestState::Queued => "queued",
            RequestState::Serving => "serving",
            RequestState::Done => "done",
            RequestState::Rejected => "rejected",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSpec {
    pub src: String,
    pub dst: String,
    pub time: SimTime,
    pub key_num: usize,
    pub key_length: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyRequest {
    pub id: usize,
    pub src: String,
    pub dst: String,
    pub key_num: usize,
    pub key_length: usize,
    pub state: RequestState,
    pub issued: SimTime,
    pub completed: Option<SimTime>,
    pub path: Vec<String>,
    pub src_key: Option<Vec<Key>>,
    pub dst_key: Option<Vec<Key>>,
}

impl KeyRequest {
    fn advance(&mut self, state: RequestState) {
        if self.state != RequestState::Rejected && state > self.state {
            self.state = state;
        }
    }

    pub fn keys_agree(&self) -> bool {
        matches!((&self.src_key, &self.dst_key), (Some(a), Some(b)) if a == b)
    }
}

/// Physical parameters of key generation on every segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct E2eParams {
    /// Pool capacity `V_m` in keys.
    pub capacity: usize,
    pub source_frequency: f64,
    pub mean_photon_num: f64,
    pub detector_efficiency: f64,
    /// Bits per pool key.
    pub key_length: usize,
    /// Keep the event trace.
    pub trace: bool,
}

impl Default for E2eParams {
    fn default() -> Self {
        E2eParams {
            capacity: 40,
            source_frequency: 1e6,
            mean_photon_num: 0.5,
            detector_efficiency: 0.1,
            key_length: 32,
            trace: false,
        }
    }
}

impl E2eParams {
    /// Sifted key bits per second over a segment with single-photon
    /// survival `t`.
    pub fn key_rate(&self, t: f64) -> f64 {
        0.5 * self.source_frequency * (1.0 - (-self.mean_photon_num * self.detector_efficiency * t).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolStats {
    pub node: String,
    pub peer: String,
    pub generated: u64,
    pub delivered: u64,
    pub final_vc: usize,
}

#[derive(Debug, Clone)]
pub struct E2eResult {
    pub requests: Vec<KeyRequest>,
    pub pools: Vec<PoolStats>,
    pub report: SimReport,
    pub end_time: SimTime,
    pub trace: String,
}

impl E2eResult {
    /// Requests finished within the run.
    pub fn processed(&self) -> usize {
        self.requests.iter().filter(|r| r.state == RequestState::Done).count()
    }

    pub fn requests_csv(&self) -> String {
        let mut out = String::from("id,src,dst,issued_ps,completed_ps,status\n");
        for r in &self.requests {
            let completed = r.completed.map(|t| t.0.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{},{}\n", r.id, r.src, r.dst, r.issued.0, completed, r.state));
        }
        out
    }

    pub fn pools_csv(&self) -> String {
        let mut out = String::from("node,peer,generated,delivered,final_Vc\n");
        for p in &self.pools {
            out.push_str(&format!("{},{},{},{},{}\n", p.node, p.peer, p.generated, p.delivered, p.final_vc));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum E2eMsg {
    Issue(usize),
    Request { req: usize, hop: usize },
    Reject { req: usize, hop: usize },
    Accept { req: usize, hop: usize },
    SegmentReady { req: usize, seg: usize },
    PoolKey(usize),
    Cipher { req: usize, from: usize, cipher: Vec<Key> },
    Ack { req: usize },
    Done { req: usize, hop: usize },
}

struct Segment {
    rate: Option<f64>,
    pool: Option<usize>,
}

struct PoolSlot {
    ends: [String; 2],
    pool: KeyPool,
    generating: bool,
    /// Largest request currently blocked on this pool.
    waiting: usize,
    key_time: SimTime,
}

struct E2eModel {
    /// Unordered node pair → segment description.
    segments: HashMap<(String, String), Segment>,
    pools: Vec<PoolSlot>,
    hop_delay: HashMap<(String, String), SimTime>,
    requests: Vec<KeyRequest>,
    queues: HashMap<String, VecDeque<usize>>,
    generation_started: HashSet<(usize, usize)>,
    segment_keys: HashMap<(usize, usize), Vec<Key>>,
    ciphers: HashMap<usize, Vec<(usize, Vec<Key>)>>,
    acks: u64,
}

fn pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

fn layer(protocol: &str, what: &str) -> String {
    format!("{protocol}.{what}")
}

impl E2eModel {
    fn segment(&self, req: usize, seg: usize) -> &Segment {
        let path = &self.requests[req].path;
        &self.segments[&pair(&path[seg], &path[seg + 1])]
    }

    fn delay(&self, from: &str, to: &str) -> SimTime {
        self.hop_delay[&(from.to_string(), to.to_string())]
    }

    fn send(&self, ctx: &mut Context<E2eMsg>, req: usize, from: usize, to: usize, what: &str, msg: E2eMsg) -> Result<(), ProtocolError> {
        let path = &self.requests[req].path;
        let d = self.delay(&path[from], &path[to]);
        let protocol = if matches!(what, "request" | "reject") { QKD_ROUTING } else { QKD_RMP };
        ctx.schedule_in(d, Action::new(path[to].clone(), layer(protocol, what), msg))?;
        Ok(())
    }

    fn issue(&mut self, req: usize, net: &Network, ctx: &mut Context<E2eMsg>) -> Result<(), ProtocolError> {
        let (src, dst) = (self.requests[req].src.clone(), self.requests[req].dst.clone());
        let Ok(path) = net.classical_route(&src, &dst) else {
            self.requests[req].state = RequestState::Rejected;
            return Ok(());
        };
        let usable = path.windows(2).all(|w| {
            self.segments.get(&pair(&w[0], &w[1])).is_some_and(|s| s.rate.is_some_and(|r| r > 0.0))
                && self.hop_delay.contains_key(&(w[0].clone(), w[1].clone()))
                && self.hop_delay.contains_key(&(w[1].clone(), w[0].clone()))
        });
        self.requests[req].path = path;
        if !usable {
            self.requests[req].state = RequestState::Rejected;
            return Ok(());
        }
        self.send(ctx, req, 0, 1, "request", E2eMsg::Request { req, hop: 1 })
    }

    fn request(&mut self, req: usize, hop: usize, ctx: &mut Context<E2eMsg>) -> Result<(), ProtocolError> {
        let last = self.requests[req].path.len() - 1;
        if hop < last {
            let key_num = self.requests[req].key_num;
            let too_big = (0..last)
                .filter_map(|s| self.segment(req, s).pool)
                .any(|p| key_num > self.pools[p].pool.capacity());
            if too_big {
                return self.send(ctx, req, hop, hop - 1, "reject", E2eMsg::Reject { req, hop: hop - 1 });
            }
            return self.send(ctx, req, hop, hop + 1, "request", E2eMsg::Request { req, hop: hop + 1 });
        }
        self.requests[req].advance(RequestState::Accepted);
        self.start_generation(req, last - 1, ctx)?;
        self.send(ctx, req, hop, hop - 1, "accept", E2eMsg::Accept { req, hop: hop - 1 })
    }

    fn start_generation(&mut self, req: usize, seg: usize, ctx: &mut Context<E2eMsg>) -> Result<(), ProtocolError> {
        if self.segment(req, seg).pool.is_some() || !self.generation_started.insert((req, seg)) {
            return Ok(());
        }
        let r = &self.requests[req];
        let bits = (r.key_num * r.key_length) as f64;
        let rate = self.segment(req, seg).rate.expect("checked at issue");
        let owner = r.path[seg].clone();
        ctx.schedule_in(
            SimTime::from_secs_f64(bits / rate),
            Action::new(owner.clone(), layer(KEY_GENERATION, "ready"), E2eMsg::SegmentReady { req, seg }),
        )?;
        Ok(())
    }

    fn accept(&mut self, req: usize, hop: usize, ctx: &mut Context<E2eMsg>) -> Result<(), ProtocolError> {
        if hop == 0 {
            return self.start_generation(req, 0, ctx);
        }
        self.send(ctx, req, hop, hop - 1, "accept", E2eMsg::Accept { req, hop: hop - 1 })?;
        let node = self.requests[req].path[hop].clone();
        self.requests[req].advance(RequestState::Queued);
        self.queues.entry(node.clone()).or_default().push_back(req);
        self.serve(&node, ctx)
    }

    /// Keys of segment `seg` for `req`, drawing from the pool if needed.
    /// `None` means the caller must wait.
    fn segment_keys(&mut self, req: usize, seg: usize, ctx: &mut Context<E2eMsg>) -> Result<Option<Vec<Key>>, ProtocolError> {
        if let Some(k) = self.segment_keys.get(&(req, seg)) {
            return Ok(Some(k.clone()));
        }
        let Some(p) = self.segment(req, seg).pool else {
            return Ok(None);
        };
        let key_num = self.requests[req].key_num;
        match self.pools[p].pool.deliver(key_num)? {
            Delivery::Keys(keys) => {
                self.segment_keys.insert((req, seg), keys.clone());
                Ok(Some(keys))
            }
            Delivery::Backpressure => {
                let slot = &mut self.pools[p];
                slot.waiting = slot.waiting.max(key_num);
                self.refill(p, ctx)?;
                Ok(None)
            }
        }
    }

    fn refill(&mut self, p: usize, ctx: &mut Context<E2eMsg>) -> Result<(), ProtocolError> {
        let slot = &mut self.pools[p];
        if slot.generating || !slot.pool.wants_generation(slot.waiting) {
            return Ok(());
        }
        slot.generating = true;
        let owner = slot.ends[0].clone();
        ctx.schedule_in(slot.key_time, Action::new(owner.clone(), layer(KEY_GENERATION, "pool_key"), E2eMsg::PoolKey(p)))?;
        Ok(())
    }

    /// Serves the head of `node`'s queue for as long as keys are at hand.
    fn serve(&mut self, node: &str, ctx: &mut Context<E2eMsg>) -> Result<(), ProtocolError> {
        loop {
            let Some(&req) = self.queues.get(node).and_then(VecDeque::front) else {
                return Ok(());
            };
            let hop = self.requests[req].path.iter().position(|n| n == node).expect("on path");
            let up = self.segment_keys(req, hop - 1, ctx)?;
            let down = self.segment_keys(req, hop, ctx)?;
            let (Some(up), Some(down)) = (up, down) else {
                return Ok(());
            };
            self.requests[req].advance(RequestState::Serving);
            let for_pool = |m: &Self, s: usize| m.segment(req, s).pool;
            for s in [hop - 1, hop] {
                if let Some(p) = for_pool(self, s) {
                    self.pools[p].waiting = 0;
                    self.refill(p, ctx)?;
                }
            }
            let cipher = xor_keys(&up, &down);
            let path = &self.requests[req].path;
            let last = path.len() - 1;
            let mut d = SimTime::ZERO;
            for i in hop..last {
                d = d + self.delay(&path[i], &path[i + 1]);
            }
            let dst = path[last].clone();
            ctx.schedule_in(d, Action::new(dst.clone(), layer(QKD_RMP, "cipher"), E2eMsg::Cipher { req, from: hop, cipher }))?;
            self.queues.get_mut(node).expect("queue").pop_front();
        }
    }

    fn segment_ready(&mut self, req: usize, seg: usize, ctx: &mut Context<E2eMsg>) -> Result<(), ProtocolError> {
        let r = &self.requests[req];
        let name = format!("{}-{}", r.path[seg], r.path[seg + 1]);
        let (n, len) = (r.key_num, r.key_length);
        let rng = ctx.rng(&name);
        let keys = (0..n).map(|_| random_key(len, rng)).collect();
        self.segment_keys.insert((req, seg), keys);
        let last = self.requests[req].path.len() - 1;
        for hop in [seg, seg + 1] {
            if hop > 0 && hop < last {
                let node = self.requests[req].path[hop].clone();
                self.serve(&node, ctx)?;
            }
        }
        if seg + 1 == last {
            self.try_finish(req, ctx)?;
        }
        Ok(())
    }

    fn pool_key(&mut self, p: usize, ctx: &mut Context<E2eMsg>) -> Result<(), ProtocolError> {
        let slot = &mut self.pools[p];
        slot.generating = false;
        let name = format!("{}-{}", slot.ends[0], slot.ends[1]);
        let len = slot.pool.key_length();
        let key = random_key(len, ctx.rng(&name));
        self.pools[p].pool.add_key(key);
        let ends = self.pools[p].ends.clone();
        for node in &ends {
            self.serve(node, ctx)?;
        }
        self.refill(p, ctx)
    }

    fn try_finish(&mut self, req: usize, ctx: &mut Context<E2eMsg>) -> Result<(), ProtocolError> {
        let last = self.requests[req].path.len() - 1;
        let have = self.ciphers.get(&req).map_or(0, Vec::len);
        if self.requests[req].dst_key.is_some() || have < last - 1 {
            return Ok(());
        }
        let Some(k_last) = self.segment_keys.get(&(req, last - 1)) else {
            return Ok(());
        };
        let mut key = k_last.clone();
        for (_, c) in self.ciphers.get(&req).into_iter().flatten() {
            key = xor_keys(&key, c);
        }
        self.requests[req].dst_key = Some(key);
        self.send(ctx, req, last, last - 1, "done", E2eMsg::Done { req, hop: last - 1 })
    }

    fn done(&mut self, req: usize, hop: usize, ctx: &mut Context<E2eMsg>) -> Result<(), ProtocolError> {
        if hop > 0 {
            return self.send(ctx, req, hop, hop - 1, "done", E2eMsg::Done { req, hop: hop - 1 });
        }
        let key = self.segment_keys.get(&(req, 0)).cloned();
        let r = &mut self.requests[req];
        r.src_key = key;
        r.advance(RequestState::Done);
        r.completed = Some(ctx.now());
        Ok(())
    }
}

struct Driver<'a> {
    net: &'a Network,
    model: E2eModel,
}

impl Model<E2eMsg> for Driver<'_> {
    type Error = ProtocolError;

    fn handle(&mut self, event: Event<E2eMsg>, ctx: &mut Context<E2eMsg>) -> Result<(), ProtocolError> {
        let m = &mut self.model;
        match event.action.payload {
            E2eMsg::Issue(req) => m.issue(req, self.net, ctx),
            E2eMsg::Request { req, hop } => m.request(req, hop, ctx),
            E2eMsg::Reject { req, hop } => {
                if hop == 0 {
                    m.requests[req].state = RequestState::Rejected;
                    Ok(())
                } else {
                    m.send(ctx, req, hop, hop - 1, "reject", E2eMsg::Reject { req, hop: hop - 1 })
                }
            }
            E2eMsg::Accept { req, hop } => m.accept(req, hop, ctx),
            E2eMsg::SegmentReady { req, seg } => m.segment_ready(req, seg, ctx),
            E2eMsg::PoolKey(p) => m.pool_key(p, ctx),
            E2eMsg::Cipher { req, from, cipher } => {
                m.ciphers.entry(req).or_default().push((from, cipher));
                let path = &m.requests[req].path;
                let dst = path[path.len() - 1].clone();
                let repeater = path[from].clone();
                let d = m.delay(&dst, &path[path.len() - 2]);
                ctx.schedule_in(d, Action::new(repeater.clone(), layer(QKD_RMP, "ack"), E2eMsg::Ack { req }))?;
                m.try_finish(req, ctx)
            }
            E2eMsg::Ack { .. } => {
                m.acks += 1;
                Ok(())
            }
            E2eMsg::Done { req, hop } => m.done(req, hop, ctx),
        }
    }
}

fn stack_for(node: &Node) -> ProtocolStack {
    if node.kind == "repeater" {
        ProtocolStack::repeater(&node.name)
    } else {
        ProtocolStack::endnode(&node.name)
    }
}

/// Runs the given requests on `net` until `end_time`.
pub fn run_e2e(net: &Network, specs: &[RequestSpec], params: &E2eParams, end_time: SimTime, seed: u64) -> Result<E2eResult, ProtocolError> {
    if params.capacity == 0 {
        return Err(ProtocolError::Parameter("pool capacity must be positive".into()));
    }
    let stacks: BTreeMap<String, ProtocolStack> = net.nodes.iter().map(|n| (n.name.clone(), stack_for(n))).collect();
    for spec in specs {
        for end in [&spec.src, &spec.dst] {
            let s = stacks.get(end).ok_or_else(|| crate::net::NetError::UnknownNode(end.clone()))?;
            if !s.contains(QKD_APP) {
                return Err(ProtocolError::Stack(format!("`{end}` has no application layer")));
            }
        }
        if spec.key_num == 0 || spec.key_length != params.key_length {
            return Err(ProtocolError::Parameter(format!(
                "requests need key_num > 0 and key_length {}",
                params.key_length
            )));
        }
    }
    let key_length = params.key_length;
    let mut hop_delay = HashMap::new();
    for c in net.channels.iter().filter(|c| !c.kind.is_quantum() && c.attached) {
        hop_delay.entry((c.sender.clone(), c.receiver.clone())).or_insert_with(|| c.delay());
    }
    let mut segments = HashMap::new();
    let mut pools = Vec::new();
    let mut pool_rng = named_stream(seed, "pools");
    for link in &net.links {
        let [a, b] = &link.ends;
        let rate = link
            .channels
            .iter()
            .map(|&i| &net.channels[i])
            .find(|c| c.kind.is_quantum() && c.attached)
            .map(|c| params.key_rate(c.survival_probability()));
        let repeaters = [a, b].iter().all(|n| net.node(n).is_some_and(|n| n.kind == "repeater"));
        let pool = match rate {
            Some(r) if repeaters && r > 0.0 => {
                pools.push(PoolSlot {
                    ends: [a.clone(), b.clone()],
                    pool: KeyPool::filled(params.capacity, key_length, params.capacity, &mut pool_rng)?,
                    generating: false,
                    waiting: 0,
                    key_time: SimTime::from_secs_f64(key_length as f64 / r),
                });
                Some(pools.len() - 1)
            }
            _ => None,
        };
        segments.entry(pair(a, b)).or_insert(Segment { rate, pool });
    }
    let requests = specs
        .iter()
        .enumerate()
        .map(|(id, s)| KeyRequest {
            id,
            src: s.src.clone(),
            dst: s.dst.clone(),
            key_num: s.key_num,
            key_length: s.key_length,
            state: RequestState::Issued,
            issued: s.time,
            completed: None,
            path: Vec::new(),
            src_key: None,
            dst_key: None,
        })
        .collect();
    let mut driver = Driver {
        net,
        model: E2eModel {
            segments,
            pools,
            hop_delay,
            requests,
            queues: HashMap::new(),
            generation_started: HashSet::new(),
            segment_keys: HashMap::new(),
            ciphers: HashMap::new(),
            acks: 0,
        },
    };
    let mut env: SimEnv<E2eMsg> = SimEnv::with_seed("e2e", false, seed);
    env.set_trace(params.trace);
    env.init(&mut driver)?;
    for (id, s) in specs.iter().enumerate() {
        let action = Action::new(s.src.clone(), layer(QKD_APP, "issue"), E2eMsg::Issue(id));
        env.schedule_at(s.time, 0, action)?;
    }
    let report = env.run(&mut driver, Some(end_time), false)?;
    let model = driver.model;
    let pools = model
        .pools
        .iter()
        .map(|s| PoolStats {
            node: s.ends[0].clone(),
            peer: s.ends[1].clone(),
            generated: s.pool.generated(),
            delivered: s.pool.delivered(),
            final_vc: s.pool.current(),
        })
        .collect();
    Ok(E2eResult {
        requests: model.requests,
        pools,
        report,
        end_time,
        trace: env.trace_text(),
    })
}

/// A single request from `src` to `dst`, run to completion.
pub fn e2e_key_request(net: &Network, src: &str, dst: &str, key_num: usize, key_length: usize, params: &E2eParams, seed: u64) -> Result<KeyRequest, ProtocolError> {
    net.classical_route(src, dst)?;
    let spec = RequestSpec {
        src: src.into(),
        dst: dst.into(),
        time: SimTime::ZERO,
        key_num,
        key_length,
    };
    let r = run_e2e(net, &[spec], params, SimTime(u64::MAX), seed)?;
    let req = r.requests.into_iter().next().expect("one request");
    if req.state == RequestState::Rejected {
        return Err(ProtocolError::Unsatisfiable {
            count: key_num,
            capacity: params.capacity,
        });
    }
    Ok(req)
}

/// Request workload: every end node issues `per_node` requests to uniform
/// random other end nodes at uniform random times in `[0, duration)`.
pub fn random_workload(net: &Network, per_node: usize, key_num: usize, key_length: usize, duration: SimTime, seed: u64) -> Vec<RequestSpec> {
    let ends: Vec<&str> = net.nodes.iter().filter(|n| n.kind != "repeater").map(|n| n.name.as_str()).collect();
    let mut rng = named_stream(seed, "workload");
    let mut specs = Vec::new();
    if ends.len() < 2 {
        return specs;
    }
    for src in &ends {
        for _ in 0..per_node {
            let mut j = rng.random_range(0..ends.len() - 1);
            if ends[j] == *src {
                j = ends.len() - 1;
            }
            let time = SimTime(rng.random_range(0..duration.0.max(1)));
            specs.push(RequestSpec {
                src: src.to_string(),
                dst: ends[j].to_string(),
                time,
                key_num,
                key_length,
            });
        }
    }
    specs.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.src.cmp(&b.src)));
    specs
}

/// One point of a capacity sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub capacity: usize,
    /// Mean processed requests over all durations and seeds.
    pub processed: f64,
}

/// Processed requests per pool capacity, averaged over `durations` and
/// `seeds`. Each (duration, seed) pair uses the same workload for every
/// capacity.
pub fn capacity_sweep(
    net: &Network,
    capacities: &[usize],
    durations: &[SimTime],
    seeds: &[u64],
    per_node: usize,
    key_num: usize,
    base: &E2eParams,
    exec: Execution,
) -> Result<Vec<SweepPoint>, ProtocolError> {
    let mut jobs = Vec::new();
    for (ci, &capacity) in capacities.iter().enumerate() {
        for &duration in durations {
            for &seed in seeds {
                jobs.push((ci, capacity, duration, seed));
            }
        }
    }
    let counts = map_slice(&jobs, exec, |&(_, capacity, duration, seed)| {
        let specs = random_workload(net, per_node, key_num, base.key_length, duration, seed);
        let params = E2eParams { capacity, ..base.clone() };
        run_e2e(net, &specs, &params, duration, seed).map(|r| r.processed())
    });
    let mut sums = vec![0usize; capacities.len()];
    for (job, count) in jobs.iter().zip(counts) {
        sums[job.0] += count?;
    }
    let runs = (durations.len() * seeds.len()).max(1) as f64;
    Ok(capacities
        .iter()
        .zip(sums)
        .map(|(&capacity, s)| SweepPoint {
            capacity,
            processed: s as f64 / runs,
        })
        .collect())
}

fn link(net: &mut Network, a: &str, b: &str, km: f64) -> Result<(), ProtocolError> {
    net.add_link(
        a,
        b,
        vec![
            Channel::new(ChannelKind::ClassicalFiber, a, b, km)?,
            Channel::new(ChannelKind::ClassicalFiber, b, a, km)?,
            Channel::new(ChannelKind::QuantumFiber, a, b, km)?,
        ],
    )?;
    Ok(())
}

/// Six nodes: end nodes A1, A2 on repeater R1 and B1, B2 on repeater R2,
/// with access links of `access_km` and an R1–R2 backbone of `core_km`.
pub fn two_repeater_chain(access_km: f64, core_km: f64) -> Result<Network, ProtocolError> {
    let mut net = Network::new();
    for (n, kind) in [("A1", "endnode"), ("A2", "endnode"), ("R1", "repeater"), ("R2", "repeater"), ("B1", "endnode"), ("B2", "endnode")] {
        net.add_node(Node::new(n, kind))?;
    }
    link(&mut net, "A1", "R1", access_km)?;
    link(&mut net, "A2", "R1", access_km)?;
    link(&mut net, "R1", "R2", core_km)?;
    link(&mut net, "R2", "B1", access_km)?;
    link(&mut net, "R2", "B2", access_km)?;
    net.compute_routes();
    Ok(net)
}

/// Chain `names[0] - names[1] - ...` with every inner node a repeater.
pub fn chain_network(names: &[&str], km: f64) -> Result<Network, ProtocolError> {
    let mut net = Network::new();
    for (i, n) in names.iter().enumerate() {
        let kind = if i == 0 || i + 1 == names.len() { "endnode" } else { "repeater" };
        net.add_node(Node::new(n, kind))?;
    }
    for w in names.windows(2) {
        link(&mut net, w[0], w[1], km)?;
    }
    net.compute_routes();
    Ok(net)
}
