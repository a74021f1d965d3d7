//! Lowering of multi-party protocol scripts to circuits.
//!
//! Every node owns a [`LocalRegister`] of units. A local operation on a unit
//! with no circuit register yet allocates the next free circuit register;
//! sending a qubit moves the register index to the receiver's lowest empty
//! unit and resets the sender's unit. Measurement outcomes are tracked as
//! the circuit register they were recorded on, and classical messages copy
//! that reference to the receiving node so it can condition on it.
//!
//! [`defer_measurements`] turns the resulting dynamic circuit into a
//! standard one by replacing classical control with quantum control and
//! moving every measurement to the end.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantum::{Circuit, CircuitInstruction, Gate};

pub const DEFAULT_CAPACITY: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompileError {
    #[error("instruction {index}: {source}")]
    At {
        index: usize,
        #[source]
        source: Box<CompileError>,
    },
    #[error("address {addr} out of range for `{node}` (capacity {capacity})")]
    AddressOutOfRange { node: String, addr: usize, capacity: usize },
    #[error("unit {addr} of `{node}` has already been measured")]
    MeasuredUnit { node: String, addr: usize },
    #[error("unit {addr} of `{node}` holds no qubit")]
    EmptyUnit { node: String, addr: usize },
    #[error("register of `{0}` has no empty unit")]
    RegisterFull(String),
    #[error("two-qubit operation on identical address {0}")]
    IdenticalAddresses(usize),
    #[error("`{gate}` takes {expected} address(es)")]
    Arity { gate: Gate, expected: usize },
    #[error("`{gate}` takes {expected} parameter(s), got {got}")]
    ParamCount { gate: Gate, expected: usize, got: usize },
    #[error("measurement may not be conditioned")]
    ConditionedMeasurement,
    #[error("`{node}` cannot condition on unit {addr} of `{owner}`: no measurement outcome is known there")]
    UnknownOutcome { node: String, owner: String, addr: usize },
    #[error("`{0}` has no controlled counterpart")]
    NoControlledForm(Gate),
    #[error("node sends to itself: `{0}`")]
    SelfSend(String),
    #[error("script JSON: {0}")]
    Json(String),
}

impl CompileError {
    fn at(self, index: usize) -> Self {
        CompileError::At {
            index,
            source: Box::new(self),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegisterUnit {
    pub qubit: Option<usize>,
    pub outcome: Option<usize>,
    pub identifier: String,
    pub address: usize,
}

impl RegisterUnit {
    fn reset(&mut self, owner: &str) {
        self.qubit = None;
        self.outcome = None;
        self.identifier = owner.to_string();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LocalRegister {
    pub owner: String,
    pub units: Vec<RegisterUnit>,
}

impl LocalRegister {
    pub fn new(owner: &str, capacity: usize) -> Self {
        LocalRegister {
            owner: owner.to_string(),
            units: (0..capacity)
                .map(|address| RegisterUnit {
                    qubit: None,
                    outcome: None,
                    identifier: owner.to_string(),
                    address,
                })
                .collect(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.units.len()
    }

    pub fn unit(&self, addr: usize) -> Result<&RegisterUnit, CompileError> {
        self.units.get(addr).ok_or_else(|| self.out_of_range(addr))
    }

    fn unit_mut(&mut self, addr: usize) -> Result<&mut RegisterUnit, CompileError> {
        let err = self.out_of_range(addr);
        self.units.get_mut(addr).ok_or(err)
    }

    fn out_of_range(&self, addr: usize) -> CompileError {
        CompileError::AddressOutOfRange {
            node: self.owner.clone(),
            addr,
            capacity: self.units.len(),
        }
    }

    fn usable(&self, addr: usize) -> Result<(), CompileError> {
        if self.unit(addr)?.outcome.is_some() {
            return Err(CompileError::MeasuredUnit {
                node: self.owner.clone(),
                addr,
            });
        }
        Ok(())
    }
}

/// Next register to allocate: one past the largest index in `circuit`,
/// 0 for an empty circuit.
fn next_register(circuit: &Circuit) -> usize {
    circuit.max_register().map_or(0, |x| x + 1)
}

fn check_params(gate: Gate, params: &Option<Vec<f64>>) -> Result<(), CompileError> {
    let got = params.as_ref().map_or(0, Vec::len);
    if got != gate.param_count() {
        return Err(CompileError::ParamCount {
            gate,
            expected: gate.param_count(),
            got,
        });
    }
    Ok(())
}

/// Compiles a one-address local operation. `cond` is the already resolved
/// circuit register of the controlling outcome.
pub fn compile_single(
    name: Gate,
    addr: usize,
    params: Option<Vec<f64>>,
    cond: Option<usize>,
    reg: &mut LocalRegister,
    circuit: &mut Circuit,
) -> Result<(), CompileError> {
    if name.arity() != 1 {
        return Err(CompileError::Arity { gate: name, expected: name.arity() });
    }
    check_params(name, &params)?;
    if name == Gate::Measure && cond.is_some() {
        return Err(CompileError::ConditionedMeasurement);
    }
    reg.usable(addr)?;
    let fresh = next_register(circuit);
    let unit = reg.unit_mut(addr)?;
    let r = *unit.qubit.get_or_insert(fresh);
    circuit.push(CircuitInstruction::new(name, vec![r], params, cond));
    if name == Gate::Measure {
        unit.outcome = Some(r);
    }
    Ok(())
}

/// Compiles a two-address local operation (control first).
pub fn compile_double(
    name: Gate,
    addr: [usize; 2],
    params: Option<Vec<f64>>,
    cond: Option<usize>,
    reg: &mut LocalRegister,
    circuit: &mut Circuit,
) -> Result<(), CompileError> {
    if name.arity() != 2 {
        return Err(CompileError::Arity { gate: name, expected: name.arity() });
    }
    check_params(name, &params)?;
    let [a0, a1] = addr;
    if a0 == a1 {
        return Err(CompileError::IdenticalAddresses(a0));
    }
    reg.usable(a0)?;
    reg.usable(a1)?;
    let mut f = next_register(circuit);
    let mut regs = [0usize; 2];
    for (slot, a) in [a0, a1].into_iter().enumerate() {
        let unit = reg.unit_mut(a)?;
        regs[slot] = match unit.qubit {
            Some(q) => q,
            None => {
                unit.qubit = Some(f);
                f += 1;
                f - 1
            }
        };
    }
    circuit.push(CircuitInstruction::new(name, regs.to_vec(), params, cond));
    Ok(())
}

/// Moves the qubit at `addr` of `src` into the lowest empty unit of `dst`;
/// returns that unit's address.
pub fn compile_transmit(src: &mut LocalRegister, dst: &mut LocalRegister, addr: usize) -> Result<usize, CompileError> {
    src.usable(addr)?;
    let owner = src.owner.clone();
    let unit = src.unit_mut(addr)?;
    let qmsg = unit.qubit.ok_or_else(|| CompileError::EmptyUnit {
        node: owner.clone(),
        addr,
    })?;
    let slot = dst
        .units
        .iter_mut()
        .find(|u| u.qubit.is_none() && u.outcome.is_none())
        .ok_or_else(|| CompileError::RegisterFull(dst.owner.clone()))?;
    slot.qubit = Some(qmsg);
    slot.identifier = owner.clone();
    let arrived = slot.address;
    src.unit_mut(addr)?.reset(&owner);
    Ok(arrived)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Addr {
    One(usize),
    Two([usize; 2]),
}

/// `(node, address)` of a measured unit.
pub type OutcomeRef = (String, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProtocolInstruction {
    Local {
        node: String,
        name: Gate,
        addr: Addr,
        #[serde(default)]
        params: Option<Vec<f64>>,
        #[serde(default)]
        cond: Option<OutcomeRef>,
    },
    Transmit {
        src: String,
        dst: String,
        addr: usize,
    },
    Classical {
        src: String,
        dst: String,
        outcome: OutcomeRef,
    },
}

impl ProtocolInstruction {
    pub fn local(node: &str, name: Gate, addr: usize) -> Self {
        ProtocolInstruction::Local {
            node: node.into(),
            name,
            addr: Addr::One(addr),
            params: None,
            cond: None,
        }
    }

    pub fn local2(node: &str, name: Gate, addr: [usize; 2]) -> Self {
        ProtocolInstruction::Local {
            node: node.into(),
            name,
            addr: Addr::Two(addr),
            params: None,
            cond: None,
        }
    }

    pub fn rotation(node: &str, name: Gate, addr: usize, angle: f64) -> Self {
        ProtocolInstruction::Local {
            node: node.into(),
            name,
            addr: Addr::One(addr),
            params: Some(vec![angle]),
            cond: None,
        }
    }

    pub fn conditioned(node: &str, name: Gate, addr: usize, on: (&str, usize)) -> Self {
        ProtocolInstruction::Local {
            node: node.into(),
            name,
            addr: Addr::One(addr),
            params: None,
            cond: Some((on.0.into(), on.1)),
        }
    }

    pub fn transmit(src: &str, dst: &str, addr: usize) -> Self {
        ProtocolInstruction::Transmit {
            src: src.into(),
            dst: dst.into(),
            addr,
        }
    }

    pub fn classical(src: &str, dst: &str, outcome: (&str, usize)) -> Self {
        ProtocolInstruction::Classical {
            src: src.into(),
            dst: dst.into(),
            outcome: (outcome.0.into(), outcome.1),
        }
    }

    fn nodes(&self) -> Vec<&str> {
        match self {
            ProtocolInstruction::Local { node, .. } => vec![node],
            ProtocolInstruction::Transmit { src, dst, .. } | ProtocolInstruction::Classical { src, dst, .. } => vec![src, dst],
        }
    }
}

pub fn parse_script(text: &str) -> Result<Vec<ProtocolInstruction>, CompileError> {
    serde_json::from_str(text).map_err(|e| CompileError::Json(e.to_string()))
}

/// Compiler state: per-node registers, outcome references known at each
/// node, and the circuit built so far.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolCompiler {
    capacity: usize,
    registers: BTreeMap<String, LocalRegister>,
    known: BTreeMap<String, BTreeMap<OutcomeRef, usize>>,
    circuit: Circuit,
}

impl Default for ProtocolCompiler {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl ProtocolCompiler {
    pub fn new(capacity: usize) -> Self {
        ProtocolCompiler {
            capacity,
            registers: BTreeMap::new(),
            known: BTreeMap::new(),
            circuit: Circuit::new(),
        }
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn into_circuit(self) -> Circuit {
        self.circuit
    }

    pub fn registers(&self) -> &BTreeMap<String, LocalRegister> {
        &self.registers
    }

    pub fn register(&self, node: &str) -> Option<&LocalRegister> {
        self.registers.get(node)
    }

    fn ensure(&mut self, node: &str) {
        if !self.registers.contains_key(node) {
            self.registers.insert(node.to_string(), LocalRegister::new(node, self.capacity));
        }
    }

    /// Circuit register holding the outcome `(owner, addr)` as seen from `node`.
    fn resolve(&self, node: &str, (owner, addr): &OutcomeRef) -> Result<usize, CompileError> {
        let unknown = || CompileError::UnknownOutcome {
            node: node.into(),
            owner: owner.clone(),
            addr: *addr,
        };
        if owner == node {
            let reg = self.registers.get(node).ok_or_else(unknown)?;
            return reg.unit(*addr)?.outcome.ok_or_else(unknown);
        }
        self.known
            .get(node)
            .and_then(|k| k.get(&(owner.clone(), *addr)))
            .copied()
            .ok_or_else(unknown)
    }

    pub fn apply(&mut self, inst: &ProtocolInstruction) -> Result<(), CompileError> {
        for n in inst.nodes() {
            self.ensure(n);
        }
        match inst {
            ProtocolInstruction::Local { node, name, addr, params, cond } => {
                let cond = cond.as_ref().map(|c| self.resolve(node, c)).transpose()?;
                let reg = self.registers.get_mut(node).expect("ensured");
                match addr {
                    Addr::One(a) => compile_single(*name, *a, params.clone(), cond, reg, &mut self.circuit),
                    Addr::Two(a) => compile_double(*name, *a, params.clone(), cond, reg, &mut self.circuit),
                }
            }
            ProtocolInstruction::Transmit { src, dst, addr } => {
                if src == dst {
                    return Err(CompileError::SelfSend(src.clone()));
                }
                let mut s = self.registers.remove(src).expect("ensured");
                let result = compile_transmit(&mut s, self.registers.get_mut(dst).expect("ensured"), *addr);
                self.registers.insert(src.clone(), s);
                result.map(|_| ())
            }
            ProtocolInstruction::Classical { src, dst, outcome } => {
                if src == dst {
                    return Err(CompileError::SelfSend(src.clone()));
                }
                let r = self.resolve(src, outcome)?;
                self.known.entry(dst.clone()).or_default().insert(outcome.clone(), r);
                Ok(())
            }
        }
    }

    /// Every circuit register currently held by some unit, with its holder.
    pub fn live_registers(&self) -> Vec<(usize, String, usize)> {
        self.registers
            .values()
            .flat_map(|r| r.units.iter().filter_map(move |u| u.qubit.map(|q| (q, r.owner.clone(), u.address))))
            .collect()
    }
}

/// Folds a causally ordered script into one dynamic circuit.
pub fn compile_protocol(script: &[ProtocolInstruction]) -> Result<ProtocolCompiler, CompileError> {
    let mut c = ProtocolCompiler::default();
    for (index, inst) in script.iter().enumerate() {
        c.apply(inst).map_err(|e| e.at(index))?;
    }
    Ok(c)
}

/// Replaces each classically conditioned gate with its quantum-controlled
/// form and moves measurements to the end, preserving their order.
pub fn defer_measurements(circuit: &Circuit) -> Result<Circuit, CompileError> {
    let mut body = Vec::with_capacity(circuit.len());
    let mut measurements = Vec::new();
    for (index, inst) in circuit.instructions.iter().enumerate() {
        if inst.is_measure() {
            if inst.cond.is_some() {
                return Err(CompileError::ConditionedMeasurement.at(index));
            }
            measurements.push(inst.clone());
            continue;
        }
        match inst.cond {
            None => body.push(inst.clone()),
            Some(c) => {
                let cname = inst
                    .name
                    .controlled()
                    .ok_or(CompileError::NoControlledForm(inst.name))
                    .map_err(|e| e.at(index))?;
                let mut regs = vec![c];
                regs.extend(&inst.regs);
                body.push(CircuitInstruction::new(cname, regs, inst.params.clone(), None));
            }
        }
    }
    body.extend(measurements);
    Ok(Circuit::from_instructions(body))
}

/// Three-party teleportation: Charlie shares a Bell pair with Alice and
/// Bob, Alice sends `rx(theta)|0⟩`, Bob corrects.
pub fn teleportation_script(theta: f64) -> Vec<ProtocolInstruction> {
    use ProtocolInstruction as P;
    vec![
        P::local("Charlie", Gate::H, 0),
        P::local2("Charlie", Gate::Cnot, [0, 1]),
        P::transmit("Charlie", "Alice", 0),
        P::transmit("Charlie", "Bob", 1),
        P::rotation("Alice", Gate::Rx, 1, theta),
        P::local2("Alice", Gate::Cnot, [1, 0]),
        P::local("Alice", Gate::H, 1),
        P::local("Alice", Gate::Measure, 0),
        P::local("Alice", Gate::Measure, 1),
        P::classical("Alice", "Bob", ("Alice", 0)),
        P::classical("Alice", "Bob", ("Alice", 1)),
        P::conditioned("Bob", Gate::X, 0, ("Alice", 0)),
        P::conditioned("Bob", Gate::Z, 0, ("Alice", 1)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{branch_distribution, exact_state, StateVector};
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_allocates_from_zero() {
        let mut reg = LocalRegister::new("A", 4);
        let mut circ = Circuit::new();
        compile_single(Gate::H, 0, None, None, &mut reg, &mut circ).unwrap();
        assert_eq!(circ.instructions, [CircuitInstruction::gate(Gate::H, &[0])]);
        assert_eq!(reg.units[0].qubit, Some(0));
        compile_single(Gate::Measure, 0, None, None, &mut reg, &mut circ).unwrap();
        assert_eq!(reg.units[0].outcome, Some(0));
        compile_single(Gate::X, 1, None, Some(0), &mut reg, &mut circ).unwrap();
        assert_eq!(circ.instructions[2], CircuitInstruction::gate(Gate::X, &[1]).with_cond(0));
        assert!(matches!(
            compile_single(Gate::X, 0, None, None, &mut reg, &mut circ),
            Err(CompileError::MeasuredUnit { .. })
        ));
        assert!(matches!(
            compile_single(Gate::X, 9, None, None, &mut reg, &mut circ),
            Err(CompileError::AddressOutOfRange { .. })
        ));
    }

    #[test]
    fn double_allocates_in_order() {
        let mut reg = LocalRegister::new("A", 4);
        let mut circ = Circuit::new();
        compile_double(Gate::Cnot, [0, 1], None, None, &mut reg, &mut circ).unwrap();
        assert_eq!(circ.instructions, [CircuitInstruction::gate(Gate::Cnot, &[0, 1])]);

        let mut reg = LocalRegister::new("A", 4);
        let mut circ = Circuit::from_instructions(vec![CircuitInstruction::gate(Gate::H, &[3])]);
        reg.units[0].qubit = Some(3);
        compile_double(Gate::Cnot, [0, 1], None, None, &mut reg, &mut circ).unwrap();
        assert_eq!(reg.units[1].qubit, Some(4));
        assert_eq!(
            compile_double(Gate::Cnot, [0, 0], None, None, &mut reg, &mut circ),
            Err(CompileError::IdenticalAddresses(0))
        );
    }

    #[test]
    fn transmit_moves_ownership() {
        let mut charlie = LocalRegister::new("Charlie", 2);
        let mut alice = LocalRegister::new("Alice", 3);
        charlie.units[0].qubit = Some(0);
        assert_eq!(compile_transmit(&mut charlie, &mut alice, 0).unwrap(), 0);
        assert_eq!(alice.units[0].qubit, Some(0));
        assert_eq!(alice.units[0].identifier, "Charlie");
        assert_eq!(charlie.units[0].qubit, None);
        assert_eq!(charlie.units[0].identifier, "Charlie");
        assert!(matches!(
            compile_transmit(&mut charlie, &mut alice, 0),
            Err(CompileError::EmptyUnit { .. })
        ));

        let mut dst = LocalRegister::new("D", 3);
        dst.units[0].qubit = Some(5);
        charlie.units[1].qubit = Some(7);
        assert_eq!(compile_transmit(&mut charlie, &mut dst, 1).unwrap(), 1);

        let mut full = LocalRegister::new("F", 1);
        full.units[0].qubit = Some(1);
        charlie.units[0].qubit = Some(2);
        assert_eq!(
            compile_transmit(&mut charlie, &mut full, 0),
            Err(CompileError::RegisterFull("F".into()))
        );
    }

    #[test]
    fn teleportation_structure() {
        let c = compile_protocol(&teleportation_script(0.7)).unwrap();
        let circ = c.circuit();
        assert_eq!(circ.width(), 3);
        let measures = circ.instructions.iter().filter(|i| i.is_measure()).count();
        let conditioned = circ.instructions.iter().filter(|i| i.cond.is_some()).count();
        assert_eq!((measures, conditioned), (2, 2));
        assert!(!circ.is_standard());
        let deferred = defer_measurements(circ).unwrap();
        assert!(deferred.is_standard());
        assert!(deferred.instructions.iter().any(|i| i.name == Gate::Cnot && i.regs == [0, 1]));
        assert!(deferred.instructions.iter().any(|i| i.name == Gate::Cz && i.regs == [2, 1]));
    }

    #[test]
    fn teleportation_delivers_state() {
        let theta = 1.1;
        let mut target = StateVector::new(1);
        target.apply_single(0, &Gate::Rx.target_matrix(&[theta]).unwrap());
        let c = compile_protocol(&teleportation_script(theta)).unwrap();
        let bob = c.register("Bob").unwrap().units[0].qubit.unwrap();
        for circ in [c.circuit().clone(), defer_measurements(c.circuit()).unwrap()] {
            for branch in exact_state(&circ).unwrap().values() {
                assert_abs_diff_eq!(branch.state.subsystem_fidelity(&[bob], &target), 1.0, epsilon = 1e-10);
            }
            assert_eq!(branch_distribution(&circ).unwrap().len(), 4);
        }
    }

    #[test]
    fn condition_requires_visible_outcome() {
        let script = vec![
            ProtocolInstruction::local("A", Gate::Measure, 0),
            ProtocolInstruction::conditioned("B", Gate::X, 0, ("A", 0)),
        ];
        let err = compile_protocol(&script).unwrap_err();
        assert!(matches!(err, CompileError::At { index: 1, .. }));
        let unmeasured = vec![ProtocolInstruction::conditioned("A", Gate::X, 1, ("A", 0))];
        assert!(compile_protocol(&unmeasured).is_err());
    }

    #[test]
    fn single_node_matches_direct_circuit() {
        let script = vec![
            ProtocolInstruction::local("A", Gate::H, 0),
            ProtocolInstruction::local2("A", Gate::Cnot, [0, 1]),
            ProtocolInstruction::local("A", Gate::Measure, 0),
            ProtocolInstruction::local("A", Gate::Measure, 1),
        ];
        let direct = Circuit::from_instructions(vec![
            CircuitInstruction::gate(Gate::H, &[0]),
            CircuitInstruction::gate(Gate::Cnot, &[0, 1]),
            CircuitInstruction::measure(0),
            CircuitInstruction::measure(1),
        ]);
        assert_eq!(compile_protocol(&script).unwrap().into_circuit(), direct);
        assert_eq!(defer_measurements(&direct).unwrap(), direct);
    }

    #[test]
    fn defer_rejects_uncontrollable_gate() {
        let circ = Circuit::from_instructions(vec![
            CircuitInstruction::measure(0),
            CircuitInstruction::gate(Gate::H, &[1]).with_cond(0),
        ]);
        assert!(matches!(defer_measurements(&circ), Err(CompileError::At { index: 1, .. })));
    }

    #[test]
    fn script_json() {
        let text = r#"[
            {"kind": "local", "node": "A", "name": "h", "addr": 0},
            {"kind": "local", "node": "A", "name": "cnot", "addr": [0, 1], "params": null, "cond": null},
            {"kind": "transmit", "src": "A", "dst": "B", "addr": 1},
            {"kind": "local", "node": "A", "name": "measure", "addr": 0},
            {"kind": "classical", "src": "A", "dst": "B", "outcome": ["A", 0]},
            {"kind": "local", "node": "B", "name": "x", "addr": 0, "cond": ["A", 0]}
        ]"#;
        let script = parse_script(text).unwrap();
        assert_eq!(script.len(), 6);
        let c = compile_protocol(&script).unwrap();
        assert_eq!(c.circuit().instructions[3], CircuitInstruction::gate(Gate::X, &[1]).with_cond(0));
        assert!(parse_script(r#"[{"kind":"teleport"}]"#).is_err());
    }
}
