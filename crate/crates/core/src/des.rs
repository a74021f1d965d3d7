//! Deterministic discrete-event simulation environment.
//!
//! A [`SimEnv`] owns the timeline and the future event list. The simulated
//! system itself is a [`Model`]: the environment pops events in
//! `(time, priority, seq)` order and hands each one to the model together
//! with a [`Context`] through which the model schedules further events,
//! draws randomness and writes log records.
//!
//! Entities form a tree of named components attached to exactly one
//! environment. Entities created without an explicit environment attach to
//! the thread's default environment, if one has been set.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::ops::{Add, Sub};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, StreamRng};

/// Simulation time in integer picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const PS_PER_NS: u64 = 1_000;
    pub const PS_PER_US: u64 = 1_000_000;
    pub const PS_PER_MS: u64 = 1_000_000_000;
    pub const PS_PER_S: u64 = 1_000_000_000_000;

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns * Self::PS_PER_NS)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * Self::PS_PER_MS)
    }

    /// Fractional seconds, rounded to the nearest picosecond.
    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime((secs * Self::PS_PER_S as f64).round().max(0.0) as u64)
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / Self::PS_PER_S as f64
    }

    pub fn saturating_add(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ps", self.0)
    }
}

/// Parses durations such as `0.5s`, `500ms`, `20us`, `10ns` or `5e11ps`.
/// A bare number is taken as picoseconds.
impl FromStr for SimTime {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let units: [(&str, f64); 5] = [
            ("ps", 1.0),
            ("ns", 1e3),
            ("us", 1e6),
            ("ms", 1e9),
            ("s", 1e12),
        ];
        let (number, scale) = units
            .iter()
            .find_map(|(suffix, scale)| s.strip_suffix(suffix).map(|n| (n, *scale)))
            .unwrap_or((s, 1.0));
        let value: f64 = number
            .trim()
            .parse()
            .map_err(|_| SimError::BadTime(s.to_string()))?;
        if !value.is_finite() || value < 0.0 {
            return Err(SimError::BadTime(s.to_string()));
        }
        Ok(SimTime((value * scale).round() as u64))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("cannot schedule at {at} before current time {now}")]
    PastEvent { at: SimTime, now: SimTime },
    #[error("operation `{op}` is illegal while the environment is {state:?}")]
    State { op: &'static str, state: EnvState },
    #[error("no default simulation environment has been set")]
    NoDefaultEnv,
    #[error("entity `{entity}` belongs to a different environment")]
    ForeignEntity { entity: String },
    #[error("duplicate entity name `{0}`")]
    DuplicateEntity(String),
    #[error("invalid time `{0}`")]
    BadTime(String),
    #[error("log file {path}: {message}")]
    Log { path: PathBuf, message: String },
    #[error("handler error: {0}")]
    Handler(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EnvId(u64);

static NEXT_ENV_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static DEFAULT_ENV: Cell<Option<EnvId>> = const { Cell::new(None) };
}

/// The thread's default environment, if any.
pub fn default_env() -> Option<EnvId> {
    DEFAULT_ENV.with(|d| d.get())
}

pub fn clear_default_env() {
    DEFAULT_ENV.with(|d| d.set(None));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvState {
    Created,
    Initializing,
    Initialized,
    Running,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LogLevel {
    Debug,
    Info,
    Warn,
}

impl fmt::Display for LogLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogLevel::Debug => "DEBUG",
            LogLevel::Info => "INFO",
            LogLevel::Warn => "WARN",
        })
    }
}

impl FromStr for LogLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "DEBUG" => Ok(LogLevel::Debug),
            "INFO" => Ok(LogLevel::Info),
            "WARN" | "WARNING" => Ok(LogLevel::Warn),
            other => Err(format!("unknown log level `{other}`")),
        }
    }
}

/// A handler reference: which object owns the action, the action's name and
/// its argument payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Action<P> {
    pub owner: String,
    pub name: String,
    pub payload: P,
}

impl<P> Action<P> {
    pub fn new(owner: impl Into<String>, name: impl Into<String>, payload: P) -> Self {
        Action {
            owner: owner.into(),
            name: name.into(),
            payload,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub time: SimTime,
    /// Lower is more urgent.
    pub priority: i32,
    /// Global insertion counter of the owning environment.
    pub seq: u64,
    pub action: Action<P>,
}

impl<P> Event<P> {
    fn key(&self) -> (SimTime, i32, u64) {
        (self.time, self.priority, self.seq)
    }
}

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.key() == other.0.key()
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    // BinaryHeap is a max-heap; invert so the minimal triple is on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.key().cmp(&self.0.key())
    }
}

/// Min-heap of events keyed by `(time, priority, seq)`.
pub struct FutureEventList<P> {
    heap: BinaryHeap<Queued<P>>,
}

impl<P> Default for FutureEventList<P> {
    fn default() -> Self {
        FutureEventList {
            heap: BinaryHeap::new(),
        }
    }
}

impl<P> FutureEventList<P> {
    pub fn push(&mut self, event: Event<P>) {
        self.heap.push(Queued(event));
    }

    pub fn pop(&mut self) -> Option<Event<P>> {
        self.heap.pop().map(|q| q.0)
    }

    pub fn peek(&self) -> Option<&Event<P>> {
        self.heap.peek().map(|q| &q.0)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle {
    env: EnvId,
    seq: u64,
}

impl EventHandle {
    pub fn seq(&self) -> u64 {
        self.seq
    }
}

/// One executed event, as recorded in the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub priority: i32,
    pub seq: u64,
    pub owner: String,
    pub action: String,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            self.time.0, self.priority, self.seq, self.owner, self.action
        )
    }
}

#[derive(Debug, Clone)]
struct Logger {
    path: Option<PathBuf>,
    level: LogLevel,
    lines: Vec<String>,
}

/// Everything a handler may touch while an event executes.
pub struct Context<P> {
    env: EnvId,
    now: SimTime,
    state: EnvState,
    fel: FutureEventList<P>,
    next_seq: u64,
    pending: HashSet<u64>,
    cancelled: HashSet<u64>,
    seed: u64,
    streams: HashMap<String, StreamRng>,
    logger: Logger,
    trace: Vec<TraceRecord>,
    tracing: bool,
}

impl<P> Context<P> {
    fn new(env: EnvId, seed: u64) -> Self {
        Context {
            env,
            now: SimTime::ZERO,
            state: EnvState::Created,
            fel: FutureEventList::default(),
            next_seq: 0,
            pending: HashSet::new(),
            cancelled: HashSet::new(),
            seed,
            streams: HashMap::new(),
            logger: Logger {
                path: None,
                level: LogLevel::Info,
                lines: Vec::new(),
            },
            trace: Vec::new(),
            tracing: true,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn state(&self) -> EnvState {
        self.state
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Schedules `action` at absolute time `time`.
    pub fn schedule_at(
        &mut self,
        time: SimTime,
        priority: i32,
        action: Action<P>,
    ) -> Result<EventHandle, SimError> {
        match self.state {
            EnvState::Initializing | EnvState::Initialized | EnvState::Running => {}
            state => return Err(SimError::State { op: "schedule", state }),
        }
        if time < self.now {
            return Err(SimError::PastEvent { at: time, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.insert(seq);
        self.fel.push(Event {
            time,
            priority,
            seq,
            action,
        });
        Ok(EventHandle { env: self.env, seq })
    }

    /// Schedules `action` `delay` after the current time with priority 0.
    pub fn schedule_in(&mut self, delay: SimTime, action: Action<P>) -> Result<EventHandle, SimError> {
        self.schedule_at(self.now + delay, 0, action)
    }

    /// Marks a pending event as cancelled. Returns `false` (and logs a
    /// warning) when the event already ran, was already cancelled or belongs
    /// to another environment.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.env == self.env && self.pending.remove(&handle.seq) {
            self.cancelled.insert(handle.seq);
            true
        } else {
            let msg = format!("cancel ignored for event #{}: not pending", handle.seq);
            self.log(LogLevel::Warn, "env", &msg);
            false
        }
    }

    /// The random stream belonging to `entity`; derived from the run seed
    /// and the entity name only.
    pub fn rng(&mut self, entity: &str) -> &mut StreamRng {
        let seed = self.seed;
        self.streams
            .entry(entity.to_string())
            .or_insert_with(|| rng::named_stream(seed, entity))
    }

    pub fn log(&mut self, level: LogLevel, entity: &str, message: &str) {
        if level >= self.logger.level {
            let line = format!("{}\t{}\t{}\t{}", self.now.0, level, entity, message);
            self.logger.lines.push(line);
        }
    }

    pub fn pending_events(&self) -> usize {
        self.pending.len()
    }
}

/// The simulated system driven by a [`SimEnv`].
pub trait Model<P> {
    type Error: From<SimError>;

    /// Called once per installed entity during [`SimEnv::init`], parents
    /// before their components.
    fn init_entity(&mut self, _entity: &str, _ctx: &mut Context<P>) -> Result<(), Self::Error> {
        Ok(())
    }

    fn handle(&mut self, event: Event<P>, ctx: &mut Context<P>) -> Result<(), Self::Error>;
}

/// A named simulation object and its sub-entities.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    name: String,
    env: EnvId,
    components: Vec<Entity>,
}

impl Entity {
    /// Creates an entity attached to `env`, or to the default environment
    /// when `env` is `None`.
    pub fn new(name: impl Into<String>, env: Option<EnvId>) -> Result<Self, SimError> {
        let env = env.or_else(default_env).ok_or(SimError::NoDefaultEnv)?;
        Ok(Entity {
            name: name.into(),
            env,
            components: Vec::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn env(&self) -> EnvId {
        self.env
    }

    pub fn components(&self) -> &[Entity] {
        &self.components
    }

    pub fn install(&mut self, component: Entity) -> Result<(), SimError> {
        if component.env != self.env {
            return Err(SimError::ForeignEntity {
                entity: component.name,
            });
        }
        self.components.push(component);
        Ok(())
    }

    fn walk<'a>(&'a self, out: &mut Vec<&'a str>) {
        out.push(&self.name);
        for c in &self.components {
            c.walk(out);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimReport {
    pub events_executed: u64,
    pub final_time: SimTime,
    pub pending_events: usize,
}

pub struct SimEnv<P> {
    id: EnvId,
    name: String,
    entities: Vec<Entity>,
    ctx: Context<P>,
}

impl<P> SimEnv<P> {
    /// A fresh environment at time zero. With `default = true` it becomes
    /// the thread's default environment.
    pub fn new(name: impl Into<String>, default: bool) -> Self {
        Self::with_seed(name, default, 0)
    }

    pub fn with_seed(name: impl Into<String>, default: bool, seed: u64) -> Self {
        let id = EnvId(NEXT_ENV_ID.fetch_add(1, AtomicOrdering::Relaxed));
        let env = SimEnv {
            id,
            name: name.into(),
            entities: Vec::new(),
            ctx: Context::new(id, seed),
        };
        if default {
            env.set_default();
        }
        env
    }

    pub fn set_default(&self) {
        DEFAULT_ENV.with(|d| d.set(Some(self.id)));
    }

    pub fn id(&self) -> EnvId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn now(&self) -> SimTime {
        self.ctx.now
    }

    pub fn state(&self) -> EnvState {
        self.ctx.state
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.ctx.seed = seed;
        self.ctx.streams.clear();
    }

    pub fn set_log(&mut self, path: Option<&Path>, level: LogLevel) {
        self.ctx.logger.path = path.map(Path::to_path_buf);
        self.ctx.logger.level = level;
    }

    /// Enables or disables recording of the event trace (on by default).
    /// Long runs with millions of events turn it off.
    pub fn set_trace(&mut self, enabled: bool) {
        self.ctx.tracing = enabled;
    }

    pub fn context(&self) -> &Context<P> {
        &self.ctx
    }

    pub fn context_mut(&mut self) -> &mut Context<P> {
        &mut self.ctx
    }

    pub fn install(&mut self, entity: Entity) -> Result<(), SimError> {
        if entity.env != self.id {
            return Err(SimError::ForeignEntity { entity: entity.name });
        }
        let mut names = Vec::new();
        for e in &self.entities {
            e.walk(&mut names);
        }
        let mut incoming = Vec::new();
        entity.walk(&mut incoming);
        let mut seen: HashSet<&str> = names.into_iter().collect();
        for n in incoming {
            if !seen.insert(n) {
                return Err(SimError::DuplicateEntity(n.to_string()));
            }
        }
        self.entities.push(entity);
        Ok(())
    }

    pub fn entity_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for e in &self.entities {
            e.walk(&mut names);
        }
        names.into_iter().map(str::to_string).collect()
    }

    pub fn schedule_at(
        &mut self,
        time: SimTime,
        priority: i32,
        action: Action<P>,
    ) -> Result<EventHandle, SimError> {
        self.ctx.schedule_at(time, priority, action)
    }

    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.ctx.cancel(handle)
    }

    /// Initializes every installed entity exactly once.
    pub fn init<M: Model<P>>(&mut self, model: &mut M) -> Result<(), M::Error> {
        if self.ctx.state != EnvState::Created {
            return Err(SimError::State {
                op: "init",
                state: self.ctx.state,
            }
            .into());
        }
        self.ctx.state = EnvState::Initializing;
        for name in self.entity_names() {
            model.init_entity(&name, &mut self.ctx)?;
        }
        self.ctx.state = EnvState::Initialized;
        Ok(())
    }

    /// Runs the main loop until the future event list is empty or the next
    /// event lies beyond `end_time` (`None` means no horizon). With
    /// `logging` the log is written to the path given to [`set_log`].
    ///
    /// [`set_log`]: SimEnv::set_log
    pub fn run<M: Model<P>>(
        &mut self,
        model: &mut M,
        end_time: Option<SimTime>,
        logging: bool,
    ) -> Result<SimReport, M::Error> {
        if self.ctx.state != EnvState::Initialized {
            return Err(SimError::State {
                op: "run",
                state: self.ctx.state,
            }
            .into());
        }
        self.ctx.state = EnvState::Running;
        let mut executed = 0u64;
        let outcome = loop {
            let Some(next) = self.ctx.fel.peek() else {
                break Ok(());
            };
            if end_time.is_some_and(|end| next.time > end) {
                break Ok(());
            }
            let event = self.ctx.fel.pop().expect("peeked event");
            if self.ctx.cancelled.remove(&event.seq) {
                continue;
            }
            self.ctx.pending.remove(&event.seq);
            self.ctx.now = event.time;
            if self.ctx.tracing {
                self.ctx.trace.push(TraceRecord {
                    time: event.time,
                    priority: event.priority,
                    seq: event.seq,
                    owner: event.action.owner.clone(),
                    action: event.action.name.clone(),
                });
            }
            if self.ctx.logger.level == LogLevel::Debug {
                let (owner, name) = (event.action.owner.clone(), event.action.name.clone());
                self.ctx.log(LogLevel::Debug, &owner, &name);
            }
            executed += 1;
            if let Err(e) = model.handle(event, &mut self.ctx) {
                break Err(e);
            }
        };
        self.ctx.state = EnvState::Finished;
        if logging {
            self.write_log()?;
        }
        outcome?;
        Ok(SimReport {
            events_executed: executed,
            final_time: self.ctx.now,
            pending_events: self.ctx.pending.len(),
        })
    }

    fn write_log(&self) -> Result<(), SimError> {
        let Some(path) = &self.ctx.logger.path else {
            return Ok(());
        };
        let err = |e: std::io::Error| SimError::Log {
            path: path.clone(),
            message: e.to_string(),
        };
        let mut file = fs::File::create(path).map_err(err)?;
        for line in &self.ctx.logger.lines {
            writeln!(file, "{line}").map_err(err)?;
        }
        Ok(())
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.ctx.trace
    }

    /// The trace as tab-separated text, one executed event per line.
    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for r in &self.ctx.trace {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    pub fn log_lines(&self) -> &[String] {
        &self.ctx.logger.lines
    }
}
