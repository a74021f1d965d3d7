#![allow(dead_code)]

use std::f64::consts::TAU;

use qnet_core::mbqc::{MeasurementSpec, Pattern, Plane, ResourceGraph};
use qnet_core::quantum::{Circuit, CircuitInstruction, Gate};
use rand::seq::SliceRandom;
use rand::Rng;

/// Dynamic circuit on at most `max_regs` registers with at most
/// `max_mid` mid-circuit measurements, some later gates conditioned on
/// their outcomes. Measured registers are never touched again; every
/// remaining register is measured at the end.
pub fn random_dynamic_circuit<R: Rng>(rng: &mut R, max_regs: usize, max_mid: usize) -> Circuit {
    let n = rng.random_range(2..=max_regs);
    let mut live: Vec<usize> = (0..n).collect();
    let mut measured: Vec<usize> = Vec::new();
    let mut c = Circuit::new();
    let mid = rng.random_range(1..=max_mid).min(n - 1);
    let steps = rng.random_range(6..=20);
    let single = [Gate::H, Gate::X, Gate::Y, Gate::Z, Gate::S, Gate::T];
    let rotations = [Gate::Rx, Gate::Ry, Gate::Rz];
    let conditional = [Gate::X, Gate::Y, Gate::Z, Gate::Rx, Gate::Ry, Gate::Rz];
    let mut remaining_mid = mid;
    for step in 0..steps {
        let q = live[rng.random_range(0..live.len())];
        match rng.random_range(0..5) {
            0 => c.push(CircuitInstruction::gate(single[rng.random_range(0..single.len())], &[q])),
            1 => c.push(CircuitInstruction::rotation(rotations[rng.random_range(0..3)], &[q], rng.random_range(0.0..TAU))),
            2 if live.len() >= 2 => {
                let mut t = live[rng.random_range(0..live.len())];
                while t == q {
                    t = live[rng.random_range(0..live.len())];
                }
                let g = [Gate::Cnot, Gate::Cz][rng.random_range(0..2)];
                c.push(CircuitInstruction::gate(g, &[q, t]));
            }
            3 if !measured.is_empty() => {
                let g = conditional[rng.random_range(0..conditional.len())];
                let on = measured[rng.random_range(0..measured.len())];
                let inst = if g.param_count() == 1 {
                    CircuitInstruction::rotation(g, &[q], rng.random_range(0.0..TAU))
                } else {
                    CircuitInstruction::gate(g, &[q])
                };
                c.push(inst.with_cond(on));
            }
            _ if remaining_mid > 0 && live.len() > 1 && step > 1 => {
                c.push(CircuitInstruction::measure(q));
                live.retain(|&r| r != q);
                measured.push(q);
                remaining_mid -= 1;
            }
            _ => c.push(CircuitInstruction::gate(Gate::H, &[q])),
        }
    }
    for q in live {
        c.push(CircuitInstruction::measure(q));
    }
    c
}

/// Random graph on `n` vertices with edge probability `p`.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, p: f64) -> ResourceGraph {
    let labels: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    ResourceGraph::new(&labels, &edges).unwrap()
}

/// Random measurement order with XY-plane angles; each vertex adapts on
/// random subsets of the vertices measured before it when `adaptive`.
pub fn random_xy_pattern<R: Rng>(rng: &mut R, graph: ResourceGraph, adaptive: bool) -> Pattern {
    let n = graph.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut specs = vec![MeasurementSpec::x(); n];
    for (i, &v) in order.iter().enumerate() {
        let mut spec = MeasurementSpec::plane(Plane::XY, rng.random_range(0.0..TAU));
        if adaptive && i > 0 {
            let before = &order[..i];
            let s = before.iter().copied().filter(|_| rng.random_bool(0.3)).collect();
            let t = before.iter().copied().filter(|_| rng.random_bool(0.3)).collect();
            spec = spec.with_domains(s, t);
        }
        specs[v] = spec;
    }
    Pattern::new(graph, order, specs).unwrap()
}

pub fn counts_to_dist(counts: &std::collections::BTreeMap<String, u64>) -> std::collections::BTreeMap<String, f64> {
    let total: u64 = counts.values().sum();
    counts.iter().map(|(k, v)| (k.clone(), *v as f64 / total as f64)).collect()
}
