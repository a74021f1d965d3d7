//! State-vector circuit engine.
//!
//! Circuits are ordered lists of `[name, regs, params, cond]` instructions.
//! Amplitudes are indexed little-endian: register 0 is the least
//! significant bit of the basis-state index, so `x` on register 0 of a
//! two-qubit `|00⟩` moves all weight to index 1.
//!
//! Histogram and branch keys list the measured registers in ascending
//! register order: the first character is the lowest measured register.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::{self, Execution};
use crate::rng;

pub type C64 = Complex64;

/// 2x2 complex matrix, row-major.
pub type Mat2 = [[C64; 2]; 2];

pub const NORM_TOLERANCE: f64 = 1e-10;
/// Largest circuit accepted by [`exact_state`].
pub const MAX_EXACT_WIDTH: usize = 20;
/// Branches below this probability are dropped during enumeration.
pub const BRANCH_CUTOFF: f64 = 1e-14;

const fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("unknown gate `{0}`")]
    UnknownGate(String),
    #[error("instruction {index}: register {reg} out of range for {width} qubits")]
    RegisterOutOfRange { index: usize, reg: usize, width: usize },
    #[error("instruction {index}: `{gate}` takes {expected} register(s), got {got}")]
    Arity { index: usize, gate: Gate, expected: usize, got: usize },
    #[error("instruction {index}: `{gate}` takes {expected} parameter(s), got {got}")]
    ParamCount { index: usize, gate: Gate, expected: usize, got: usize },
    #[error("instruction {index}: two-qubit gate on identical registers {reg}")]
    RepeatedRegister { index: usize, reg: usize },
    #[error("instruction {index}: measurement may not carry a condition")]
    ConditionedMeasurement { index: usize },
    #[error("instruction {index}: condition register {reg} has not been measured")]
    ConditionNotMeasured { index: usize, reg: usize },
    #[error("instruction {index}: register {reg} measured twice")]
    DoubleMeasurement { index: usize, reg: usize },
    #[error("instruction {index}: gate on register {reg} after its measurement")]
    GateAfterMeasurement { index: usize, reg: usize },
    #[error("condition outcome for register {0} missing")]
    MissingOutcome(usize),
    #[error("measurement is not a unitary gate")]
    NotAGate,
    #[error("circuit width {width} exceeds the limit of {max}")]
    WidthTooLarge { width: usize, max: usize },
    #[error("state vector length {0} is not a power of two")]
    BadLength(usize),
    #[error("state vector has norm {0}, expected 1")]
    NotNormalized(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    H,
    X,
    Y,
    Z,
    S,
    T,
    Rx,
    Ry,
    Rz,
    Cnot,
    Cz,
    Swap,
    Cy,
    Crx,
    Cry,
    Crz,
    Measure,
}

impl Gate {
    pub const ALL: [Gate; 17] = [
        Gate::H,
        Gate::X,
        Gate::Y,
        Gate::Z,
        Gate::S,
        Gate::T,
        Gate::Rx,
        Gate::Ry,
        Gate::Rz,
        Gate::Cnot,
        Gate::Cz,
        Gate::Swap,
        Gate::Cy,
        Gate::Crx,
        Gate::Cry,
        Gate::Crz,
        Gate::Measure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Gate::H => "h",
            Gate::X => "x",
            Gate::Y => "y",
            Gate::Z => "z",
            Gate::S => "s",
            Gate::T => "t",
            Gate::Rx => "rx",
            Gate::Ry => "ry",
            Gate::Rz => "rz",
            Gate::Cnot => "cnot",
            Gate::Cz => "cz",
            Gate::Swap => "swap",
            Gate::Cy => "cy",
            Gate::Crx => "crx",
            Gate::Cry => "cry",
            Gate::Crz => "crz",
            Gate::Measure => "measure",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Gate::Cnot | Gate::Cz | Gate::Swap | Gate::Cy | Gate::Crx | Gate::Cry | Gate::Crz => 2,
            _ => 1,
        }
    }

    pub fn param_count(self) -> usize {
        match self {
            Gate::Rx | Gate::Ry | Gate::Rz | Gate::Crx | Gate::Cry | Gate::Crz => 1,
            _ => 0,
        }
    }

    /// Quantum-controlled counterpart used when deferring measurements.
    pub fn controlled(self) -> Option<Gate> {
        match self {
            Gate::X => Some(Gate::Cnot),
            Gate::Y => Some(Gate::Cy),
            Gate::Z => Some(Gate::Cz),
            Gate::Rx => Some(Gate::Crx),
            Gate::Ry => Some(Gate::Cry),
            Gate::Rz => Some(Gate::Crz),
            _ => None,
        }
    }

    /// Target matrix of a single-qubit gate, or of the controlled part of a
    /// controlled gate. `None` for swap and measure.
    pub fn target_matrix(self, params: &[f64]) -> Option<Mat2> {
        let theta = params.first().copied().unwrap_or(0.0);
        let (ch, sh) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let r = FRAC_1_SQRT_2;
        let m = match self {
            Gate::H => [[c(r, 0.0), c(r, 0.0)], [c(r, 0.0), c(-r, 0.0)]],
            Gate::X | Gate::Cnot => [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]],
            Gate::Y | Gate::Cy => [[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]],
            Gate::Z | Gate::Cz => [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]],
            Gate::S => [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 1.0)]],
            Gate::T => [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), C64::from_polar(1.0, std::f64::consts::FRAC_PI_4)]],
            Gate::Rx | Gate::Crx => [[c(ch, 0.0), c(0.0, -sh)], [c(0.0, -sh), c(ch, 0.0)]],
            Gate::Ry | Gate::Cry => [[c(ch, 0.0), c(-sh, 0.0)], [c(sh, 0.0), c(ch, 0.0)]],
            Gate::Rz | Gate::Crz => [[C64::from_polar(1.0, -theta / 2.0), c(0.0, 0.0)], [c(0.0, 0.0), C64::from_polar(1.0, theta / 2.0)]],
            Gate::Swap | Gate::Measure => return None,
        };
        Some(m)
    }

    pub fn is_controlled(self) -> bool {
        matches!(self, Gate::Cnot | Gate::Cz | Gate::Cy | Gate::Crx | Gate::Cry | Gate::Crz)
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Gate {
    type Err = BackendError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Gate::ALL
            .iter()
            .copied()
            .find(|g| g.name() == s)
            .ok_or_else(|| BackendError::UnknownGate(s.to_string()))
    }
}

/// One circuit instruction: the `[NAME, REG, PAR, COND]` quadruple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitInstruction {
    pub name: Gate,
    pub regs: Vec<usize>,
    #[serde(default)]
    pub params: Option<Vec<f64>>,
    #[serde(default)]
    pub cond: Option<usize>,
}

impl CircuitInstruction {
    pub fn new(name: Gate, regs: Vec<usize>, params: Option<Vec<f64>>, cond: Option<usize>) -> Self {
        CircuitInstruction { name, regs, params, cond }
    }

    pub fn gate(name: Gate, regs: &[usize]) -> Self {
        Self::new(name, regs.to_vec(), None, None)
    }

    pub fn rotation(name: Gate, regs: &[usize], angle: f64) -> Self {
        Self::new(name, regs.to_vec(), Some(vec![angle]), None)
    }

    pub fn measure(reg: usize) -> Self {
        Self::new(Gate::Measure, vec![reg], None, None)
    }

    pub fn with_cond(mut self, reg: usize) -> Self {
        self.cond = Some(reg);
        self
    }

    pub fn params(&self) -> &[f64] {
        self.params.as_deref().unwrap_or(&[])
    }

    pub fn is_measure(&self) -> bool {
        self.name == Gate::Measure
    }

    fn max_reg(&self) -> Option<usize> {
        self.regs.iter().copied().chain(self.cond).max()
    }
}

/// Ordered list of instructions; serialized as a bare JSON array.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Circuit {
    pub instructions: Vec<CircuitInstruction>,
}

impl Circuit {
    pub fn new() -> Self {
        Circuit::default()
    }

    pub fn from_instructions(instructions: Vec<CircuitInstruction>) -> Self {
        Circuit { instructions }
    }

    pub fn push(&mut self, inst: CircuitInstruction) {
        self.instructions.push(inst);
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Largest register index referenced (including conditions).
    pub fn max_register(&self) -> Option<usize> {
        self.instructions.iter().filter_map(CircuitInstruction::max_reg).max()
    }

    /// `1 + max register index`, 0 for an empty circuit.
    pub fn width(&self) -> usize {
        self.max_register().map_or(0, |m| m + 1)
    }

    /// Registers measured anywhere in the circuit, ascending.
    pub fn measured_registers(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .instructions
            .iter()
            .filter(|i| i.is_measure())
            .flat_map(|i| i.regs.iter().copied())
            .collect();
        set.into_iter().collect()
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let mut measured = BTreeSet::new();
        for (index, inst) in self.instructions.iter().enumerate() {
            let gate = inst.name;
            if inst.regs.len() != gate.arity() {
                return Err(BackendError::Arity {
                    index,
                    gate,
                    expected: gate.arity(),
                    got: inst.regs.len(),
                });
            }
            if inst.params().len() != gate.param_count() {
                return Err(BackendError::ParamCount {
                    index,
                    gate,
                    expected: gate.param_count(),
                    got: inst.params().len(),
                });
            }
            if inst.regs.len() == 2 && inst.regs[0] == inst.regs[1] {
                return Err(BackendError::RepeatedRegister { index, reg: inst.regs[0] });
            }
            if let Some(cond) = inst.cond {
                if gate == Gate::Measure {
                    return Err(BackendError::ConditionedMeasurement { index });
                }
                if !measured.contains(&cond) {
                    return Err(BackendError::ConditionNotMeasured { index, reg: cond });
                }
            }
            for &reg in &inst.regs {
                if measured.contains(&reg) {
                    return Err(if gate == Gate::Measure {
                        BackendError::DoubleMeasurement { index, reg }
                    } else {
                        BackendError::GateAfterMeasurement { index, reg }
                    });
                }
            }
            if gate == Gate::Measure {
                measured.insert(inst.regs[0]);
            }
        }
        Ok(())
    }

    /// True iff no gate follows a measurement and nothing is conditioned.
    pub fn is_standard(&self) -> bool {
        let mut seen_measure = false;
        for inst in &self.instructions {
            if inst.cond.is_some() {
                return false;
            }
            if inst.is_measure() {
                seen_measure = true;
            } else if seen_measure {
                return false;
            }
        }
        true
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Measured register → bit, for one shot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OutcomeRecord {
    pub shot: usize,
    pub bits: BTreeMap<usize, u8>,
}

impl OutcomeRecord {
    pub fn new(shot: usize) -> Self {
        OutcomeRecord { shot, bits: BTreeMap::new() }
    }

    pub fn get(&self, reg: usize) -> Option<u8> {
        self.bits.get(&reg).copied()
    }

    /// Bits in ascending register order, e.g. `"01"`.
    pub fn key(&self) -> String {
        self.bits.values().map(|b| if *b == 1 { '1' } else { '0' }).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// `|0…0⟩` on `n` qubits.
    pub fn new(n: usize) -> Self {
        Self::basis(n, 0)
    }

    pub fn basis(n: usize, index: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        amps[index] = C64::new(1.0, 0.0);
        StateVector { n, amps }
    }

    /// `|+⟩^{⊗n}`.
    pub fn plus(n: usize) -> Self {
        let a = (1.0 / (1u64 << n) as f64).sqrt();
        StateVector {
            n,
            amps: vec![C64::new(a, 0.0); 1 << n],
        }
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self, BackendError> {
        let len = amps.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(BackendError::BadLength(len));
        }
        let s = StateVector {
            n: len.trailing_zeros() as usize,
            amps,
        };
        let norm = s.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(BackendError::NotNormalized(norm));
        }
        Ok(s)
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn check(&self, reg: usize) -> Result<(), BackendError> {
        if reg >= self.n {
            Err(BackendError::RegisterOutOfRange {
                index: 0,
                reg,
                width: self.n,
            })
        } else {
            Ok(())
        }
    }

    pub fn apply_single(&mut self, q: usize, m: &Mat2) {
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | bit]);
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    /// Applies `m` to `target` on the subspace where `control` is 1.
    pub fn apply_controlled(&mut self, control: usize, target: usize, m: &Mat2) {
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cbit != 0 && i & tbit == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | tbit]);
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | tbit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    pub fn apply_cz(&mut self, a: usize, b: usize) {
        let mask = (1usize << a) | (1usize << b);
        for (i, amp) in self.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *amp = -*amp;
            }
        }
    }

    pub fn apply_swap(&mut self, a: usize, b: usize) {
        let (abit, bbit) = (1usize << a, 1usize << b);
        for i in 0..self.amps.len() {
            if i & abit != 0 && i & bbit == 0 {
                self.amps.swap(i, (i & !abit) | bbit);
            }
        }
    }

    /// Applies a unitary instruction, honouring its condition against
    /// `outcomes`: the gate runs only when the recorded bit is 1.
    pub fn apply(&mut self, inst: &CircuitInstruction, outcomes: &OutcomeRecord) -> Result<(), BackendError> {
        if inst.is_measure() {
            return Err(BackendError::NotAGate);
        }
        for &r in &inst.regs {
            self.check(r)?;
        }
        if let Some(cond) = inst.cond {
            match outcomes.get(cond) {
                None => return Err(BackendError::MissingOutcome(cond)),
                Some(0) => return Ok(()),
                Some(_) => {}
            }
        }
        self.apply_unconditioned(inst);
        Ok(())
    }

    fn apply_unconditioned(&mut self, inst: &CircuitInstruction) {
        let regs = &inst.regs;
        match inst.name {
            Gate::Swap => self.apply_swap(regs[0], regs[1]),
            Gate::Cz => self.apply_cz(regs[0], regs[1]),
            g if g.is_controlled() => {
                let m = g.target_matrix(inst.params()).expect("controlled gate matrix");
                self.apply_controlled(regs[0], regs[1], &m);
            }
            g => {
                let m = g.target_matrix(inst.params()).expect("single-qubit matrix");
                self.apply_single(regs[0], &m);
            }
        }
    }

    pub fn prob_one(&self, q: usize) -> f64 {
        let bit = 1usize << q;
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Projects qubit `q` onto `bit`, renormalizing. Returns the
    /// probability of that outcome; the state is left untouched when it is 0.
    pub fn project(&mut self, q: usize, bit: u8) -> f64 {
        let mask = 1usize << q;
        let want = if bit == 1 { mask } else { 0 };
        let p: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == want)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        if p > 0.0 {
            let scale = 1.0 / p.sqrt();
            for (i, a) in self.amps.iter_mut().enumerate() {
                if i & mask == want {
                    *a *= scale;
                } else {
                    *a = C64::new(0.0, 0.0);
                }
            }
        }
        p
    }

    /// Computational-basis measurement of `q` with Born-rule sampling.
    pub fn measure<R: Rng + ?Sized>(&mut self, q: usize, rng: &mut R) -> Result<u8, BackendError> {
        self.check(q)?;
        let p1 = self.prob_one(q);
        let bit = u8::from(rng.random::<f64>() < p1);
        self.project(q, bit);
        Ok(bit)
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|⟨self|other⟩|²` for states of equal size.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Reduced density matrix of `qubits` (listed order = bit order of the
    /// result, first entry least significant).
    pub fn reduced_density(&self, qubits: &[usize]) -> Vec<Vec<C64>> {
        let k = qubits.len();
        let dim = 1usize << k;
        let mut rho = vec![vec![C64::new(0.0, 0.0); dim]; dim];
        let keep_mask: usize = qubits.iter().map(|q| 1usize << q).sum();
        let local = |i: usize| -> usize {
            qubits
                .iter()
                .enumerate()
                .map(|(j, q)| ((i >> q) & 1) << j)
                .sum()
        };
        // Group amplitudes by the traced-out part of the index.
        let mut groups: BTreeMap<usize, Vec<(usize, C64)>> = BTreeMap::new();
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm_sqr() > 0.0 {
                groups.entry(i & !keep_mask).or_default().push((local(i), *a));
            }
        }
        for entries in groups.values() {
            for &(r, ar) in entries {
                for &(s, as_) in entries {
                    rho[r][s] += ar * as_.conj();
                }
            }
        }
        rho
    }

    /// Fidelity `⟨t|ρ|t⟩` of the reduced state on `qubits` with a pure
    /// target on the same number of qubits.
    pub fn subsystem_fidelity(&self, qubits: &[usize], target: &StateVector) -> f64 {
        let rho = self.reduced_density(qubits);
        let t = &target.amps;
        let mut acc = C64::new(0.0, 0.0);
        for (r, row) in rho.iter().enumerate() {
            for (s, v) in row.iter().enumerate() {
                acc += t[r].conj() * v * t[s];
            }
        }
        acc.re
    }

    /// Appends a fresh qubit in state `amp0|0⟩ + amp1|1⟩` as the new most
    /// significant register.
    pub fn push_qubit(&mut self, amp0: C64, amp1: C64) {
        let len = self.amps.len();
        let mut amps = Vec::with_capacity(2 * len);
        amps.extend(self.amps.iter().map(|a| a * amp0));
        amps.extend(self.amps.iter().map(|a| a * amp1));
        self.amps = amps;
        self.n += 1;
    }

    /// Contracts qubit `q` with `⟨v|` and removes it; returns the outcome
    /// probability. The result is renormalized when that probability is
    /// positive.
    pub fn contract_remove(&mut self, q: usize, v: [C64; 2]) -> f64 {
        let bit = 1usize << q;
        let low = bit - 1;
        let half = self.amps.len() / 2;
        let mut out = Vec::with_capacity(half);
        let (c0, c1) = (v[0].conj(), v[1].conj());
        for j in 0..half {
            let i0 = (j & low) | ((j & !low) << 1);
            out.push(c0 * self.amps[i0] + c1 * self.amps[i0 | bit]);
        }
        let p: f64 = out.iter().map(|a| a.norm_sqr()).sum();
        if p > 0.0 {
            let scale = 1.0 / p.sqrt();
            for a in &mut out {
                *a *= scale;
            }
        }
        self.amps = out;
        self.n -= 1;
        p
    }
}

fn bits_key(outcomes: &BTreeMap<usize, u8>) -> String {
    outcomes.values().map(|b| if *b == 1 { '1' } else { '0' }).collect()
}

/// Executes `circuit` once, returning the recorded outcomes and the final
/// (collapsed) state.
pub fn run_shot<R: Rng + ?Sized>(
    circuit: &Circuit,
    shot: usize,
    rng: &mut R,
) -> Result<(OutcomeRecord, StateVector), BackendError> {
    let mut state = StateVector::new(circuit.width());
    let mut record = OutcomeRecord::new(shot);
    for (index, inst) in circuit.instructions.iter().enumerate() {
        if inst.is_measure() {
            let reg = inst.regs[0];
            if record.bits.contains_key(&reg) {
                return Err(BackendError::DoubleMeasurement { index, reg });
            }
            let bit = state.measure(reg, rng)?;
            record.bits.insert(reg, bit);
        } else {
            state.apply(inst, &record)?;
        }
    }
    Ok((record, state))
}

/// Bitstring → count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Histogram {
    pub counts: BTreeMap<String, u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn count(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn frequency(&self, key: &str) -> f64 {
        self.count(key) as f64 / self.total().max(1) as f64
    }

    pub fn frequencies(&self) -> BTreeMap<String, f64> {
        let total = self.total().max(1) as f64;
        self.counts.iter().map(|(k, v)| (k.clone(), *v as f64 / total)).collect()
    }

    fn merge(&mut self, other: Histogram) {
        for (k, v) in other.counts {
            *self.counts.entry(k).or_insert(0) += v;
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bitstring,count\n");
        for (k, v) in &self.counts {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }
}

const SHOT_CHUNK: usize = 4096;

/// Samples `shots` executions of `circuit`. Shot `i` draws from its own
/// stream derived from `(seed, i)`.
pub fn run_circuit(circuit: &Circuit, shots: usize, seed: u64) -> Result<Histogram, BackendError> {
    run_circuit_with(circuit, shots, seed, Execution::default())
}

pub fn run_circuit_with(
    circuit: &Circuit,
    shots: usize,
    seed: u64,
    exec: Execution,
) -> Result<Histogram, BackendError> {
    circuit.validate()?;
    let partial = parallel::map_chunks(shots, SHOT_CHUNK, exec, |range| {
        let mut h = Histogram::default();
        for shot in range {
            let mut rng = rng::indexed_stream(seed, shot as u64);
            let (rec, _) = run_shot(circuit, shot, &mut rng)?;
            *h.counts.entry(rec.key()).or_insert(0) += 1;
        }
        Ok(h)
    });
    let mut hist = Histogram::default();
    for h in partial {
        hist.merge(h?);
    }
    Ok(hist)
}

/// One measurement branch of a circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub probability: f64,
    pub state: StateVector,
}

/// Enumerates every measurement branch with its exact probability and
/// post-measurement state. Keys follow the histogram convention.
pub fn exact_state(circuit: &Circuit) -> Result<BTreeMap<String, Branch>, BackendError> {
    let width = circuit.width();
    if width > MAX_EXACT_WIDTH {
        return Err(BackendError::WidthTooLarge {
            width,
            max: MAX_EXACT_WIDTH,
        });
    }
    circuit.validate()?;
    let mut branches = vec![(OutcomeRecord::new(0), 1.0f64, StateVector::new(width))];
    for inst in &circuit.instructions {
        if inst.is_measure() {
            let reg = inst.regs[0];
            let mut next = Vec::with_capacity(branches.len() * 2);
            for (rec, p, state) in branches {
                for bit in [0u8, 1] {
                    let mut s = state.clone();
                    let pb = s.project(reg, bit);
                    if p * pb > BRANCH_CUTOFF {
                        let mut r = rec.clone();
                        r.bits.insert(reg, bit);
                        next.push((r, p * pb, s));
                    }
                }
            }
            branches = next;
        } else {
            for (rec, _, state) in &mut branches {
                state.apply(inst, rec)?;
            }
        }
    }
    Ok(branches
        .into_iter()
        .map(|(rec, probability, state)| (bits_key(&rec.bits), Branch { probability, state }))
        .collect())
}

/// Branch probabilities only.
pub fn branch_distribution(circuit: &Circuit) -> Result<BTreeMap<String, f64>, BackendError> {
    Ok(exact_state(circuit)?
        .into_iter()
        .map(|(k, b)| (k, b.probability))
        .collect())
}

/// Total variation distance between two distributions over string keys.
pub fn total_variation(p: &BTreeMap<String, f64>, q: &BTreeMap<String, f64>) -> f64 {
    let keys: BTreeSet<&String> = p.keys().chain(q.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}
