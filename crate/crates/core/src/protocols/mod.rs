//! Protocol stacks and the protocols built on the simulation engine.

pub mod bb84;
pub mod chsh;
pub mod e2e;
pub mod keypool;
pub mod satellite;
pub mod stack;
pub mod swap;
pub mod teleport;

use thiserror::Error;

use crate::compiler::CompileError;
use crate::des::SimError;
use crate::net::NetError;
use crate::quantum::BackendError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("key is empty; error rate undefined")]
    EmptyKey,
    #[error("invalid probabilities: {0}")]
    Probabilities(String),
    #[error("node `{node}` has no {device}")]
    MissingDevice { node: String, device: &'static str },
    #[error("no {kind} channel from `{from}` to `{to}`")]
    MissingChannel { kind: &'static str, from: String, to: String },
    #[error("request for {count} keys exceeds pool capacity {capacity}")]
    Unsatisfiable { count: usize, capacity: usize },
    #[error("protocol stalled: {0}")]
    Stalled(String),
    #[error("invalid protocol stack: {0}")]
    Stack(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}
