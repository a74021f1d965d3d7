//! Entanglement swapping along a chain of Bell pairs.
//!
//! Segment `i` holds the pair on registers `2i` and `2i+1`. Each repeater
//! Bell-measures `2i+1` and `2i+2` and the far end qubit is corrected
//! immediately, conditioned on the two outcomes.

use std::collections::BTreeMap;

use rand::SeedableRng;

use super::ProtocolError;
use crate::quantum::{exact_state, run_shot, Circuit, CircuitInstruction as I, Gate, StateVector, C64};
use crate::rng::StreamRng;

/// `(|00⟩ + |11⟩)/√2`.
pub fn phi_plus() -> StateVector {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    StateVector::from_amplitudes(vec![C64::new(h, 0.0), z, z, C64::new(h, 0.0)]).expect("normalized")
}

/// Swapping circuit over `segments` pairs. Returns the circuit and the
/// registers of the two end qubits.
pub fn swap_chain(segments: usize, corrected: bool) -> Result<(Circuit, [usize; 2]), ProtocolError> {
    if segments == 0 {
        return Err(ProtocolError::Parameter("at least one segment".into()));
    }
    let last = 2 * segments - 1;
    let mut c = Circuit::new();
    for i in 0..segments {
        c.push(I::gate(Gate::H, &[2 * i]));
        c.push(I::gate(Gate::Cnot, &[2 * i, 2 * i + 1]));
    }
    for i in 0..segments - 1 {
        let (a, b) = (2 * i + 1, 2 * i + 2);
        c.push(I::gate(Gate::Cnot, &[a, b]));
        c.push(I::gate(Gate::H, &[a]));
        c.push(I::measure(a));
        c.push(I::measure(b));
        if corrected {
            c.push(I::gate(Gate::X, &[last]).with_cond(b));
            c.push(I::gate(Gate::Z, &[last]).with_cond(a));
        }
    }
    Ok((c, [0, last]))
}

/// Fidelity of the end pair with `|Φ+⟩` over `shots` sampled runs.
pub fn sampled_end_fidelity(segments: usize, corrected: bool, shots: usize, seed: u64) -> Result<Vec<f64>, ProtocolError> {
    let (circuit, ends) = swap_chain(segments, corrected)?;
    let target = phi_plus();
    let mut rng = StreamRng::seed_from_u64(seed);
    (0..shots)
        .map(|shot| {
            let (_, state) = run_shot(&circuit, shot, &mut rng)?;
            Ok(state.subsystem_fidelity(&ends, &target))
        })
        .collect()
}

/// Exact distribution of the Bell state held by the end qubits, keyed
/// `phi+`, `psi+`, `phi-`, `psi-`.
pub fn end_bell_distribution(segments: usize, corrected: bool) -> Result<BTreeMap<&'static str, f64>, ProtocolError> {
    let (mut circuit, [a, b]) = swap_chain(segments, corrected)?;
    circuit.push(I::gate(Gate::Cnot, &[a, b]));
    circuit.push(I::gate(Gate::H, &[a]));
    circuit.push(I::measure(a));
    circuit.push(I::measure(b));
    let measured = circuit.measured_registers();
    let pa = measured.iter().position(|r| *r == a).expect("measured");
    let pb = measured.iter().position(|r| *r == b).expect("measured");
    let mut out = BTreeMap::new();
    for (key, branch) in exact_state(&circuit)? {
        let bits = key.as_bytes();
        let name = match (bits[pa], bits[pb]) {
            (b'0', b'0') => "phi+",
            (b'0', _) => "psi+",
            (_, b'0') => "phi-",
            _ => "psi-",
        };
        *out.entry(name).or_insert(0.0) += branch.probability;
    }
    Ok(out)
}
