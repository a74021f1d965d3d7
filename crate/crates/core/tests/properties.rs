mod common;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qnet_core::compiler::{defer_measurements, ProtocolCompiler, ProtocolInstruction};
use qnet_core::des::{Action, Context, Event, Model, SimEnv, SimError, SimTime};
use qnet_core::mbqc::{activation_trace, max_active_width, run_pattern};
use qnet_core::net::{Channel, ChannelKind, Network, Node, PhotonSource};
use qnet_core::protocols::keypool::{random_key, Delivery, KeyPool, PoolStatus};
use qnet_core::quantum::{branch_distribution, total_variation, Gate};

struct Recorder {
    seen: Vec<(SimTime, i32, u64)>,
    spawn: bool,
}

impl Model<u32> for Recorder {
    type Error = SimError;

    fn handle(&mut self, event: Event<u32>, ctx: &mut Context<u32>) -> Result<(), SimError> {
        self.seen.push((event.time, event.priority, event.seq));
        if self.spawn && event.action.payload > 0 {
            let delay = SimTime(u64::from(event.action.payload % 7));
            ctx.schedule_in(delay, Action::new("e", "child", event.action.payload / 2))?;
        }
        Ok(())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn events_run_in_time_priority_insertion_order(
        events in prop::collection::vec((0u64..50, -3i32..3, 0u32..40), 1..60),
        spawn in any::<bool>(),
    ) {
        let mut env: SimEnv<u32> = SimEnv::with_seed("order", false, 1);
        let mut model = Recorder { seen: Vec::new(), spawn };
        env.init(&mut model).unwrap();
        for (t, p, payload) in &events {
            env.schedule_at(SimTime(*t), *p, Action::new("e", "ev", *payload)).unwrap();
        }
        let report = env.run(&mut model, None, false).unwrap();
        prop_assert_eq!(report.events_executed as usize, model.seen.len());
        prop_assert!(model.seen.len() >= events.len());
        // Times never go backwards; within one instant the queue order is
        // (priority, seq) for events already present.
        for w in model.seen.windows(2) {
            prop_assert!(w[0].0 <= w[1].0);
        }
        if !spawn {
            let mut sorted = model.seen.clone();
            sorted.sort();
            prop_assert_eq!(&sorted, &model.seen);
        }
    }

    #[test]
    fn end_time_horizon_is_respected(times in prop::collection::vec(0u64..1000, 1..40), end in 0u64..1000) {
        let mut env: SimEnv<u32> = SimEnv::with_seed("h", false, 0);
        let mut model = Recorder { seen: Vec::new(), spawn: false };
        env.init(&mut model).unwrap();
        for t in &times {
            env.schedule_at(SimTime(*t), 0, Action::new("e", "ev", 0)).unwrap();
        }
        let report = env.run(&mut model, Some(SimTime(end)), false).unwrap();
        let expect = times.iter().filter(|t| **t <= end).count();
        prop_assert_eq!(model.seen.len(), expect);
        prop_assert_eq!(report.pending_events, times.len() - expect);
    }

    #[test]
    fn classical_channels_are_fifo(km in 0.0f64..500.0, mut sends in prop::collection::vec(0u64..1_000_000, 1..50)) {
        sends.sort_unstable();
        let ch = Channel::new(ChannelKind::ClassicalFiber, "A", "B", km).unwrap();
        let arrivals: Vec<SimTime> = sends.iter().map(|t| ch.transmit_classical("A", SimTime(*t)).unwrap()).collect();
        for w in arrivals.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        prop_assert!(ch.transmit_classical("B", SimTime(0)).is_err());
    }

    #[test]
    fn routes_are_shortest_with_smallest_next_hop(n in 2usize..9, edges in prop::collection::vec((0usize..9, 0usize..9), 0..20)) {
        let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        let mut net = Network::new();
        for name in &names {
            net.add_node(Node::new(name, "endnode")).unwrap();
        }
        let mut adj = vec![BTreeSet::new(); n];
        for (a, b) in edges {
            let (a, b) = (a % n, b % n);
            if a == b || adj[a].contains(&b) {
                continue;
            }
            adj[a].insert(b);
            adj[b].insert(a);
            net.add_link(&names[a], &names[b], vec![
                Channel::new(ChannelKind::ClassicalFiber, &names[a], &names[b], 1.0).unwrap(),
                Channel::new(ChannelKind::ClassicalFiber, &names[b], &names[a], 1.0).unwrap(),
            ]).unwrap();
        }
        net.compute_routes();
        // Floyd-Warshall hop distances.
        let inf = usize::MAX / 2;
        let mut d = vec![vec![inf; n]; n];
        for i in 0..n {
            d[i][i] = 0;
            for &j in &adj[i] {
                d[i][j] = 1;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
                }
            }
        }
        for s in 0..n {
            for t in 0..n {
                if s == t {
                    continue;
                }
                match net.classical_route(&names[s], &names[t]) {
                    Ok(path) => {
                        prop_assert_eq!(path.len() - 1, d[s][t]);
                        let hop = names.iter().position(|x| *x == path[1]).unwrap();
                        let best = adj[s].iter().filter(|&&j| d[j][t] + 1 == d[s][t]).map(|&j| names[j].clone()).min().unwrap();
                        prop_assert_eq!(&names[hop], &best);
                    }
                    Err(_) => prop_assert_eq!(d[s][t], inf),
                }
            }
        }
    }

    #[test]
    fn mbqc_sets_partition_and_edges_realized_once(n in 1usize..10, p in 0.0f64..1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = common::random_graph(&mut rng, n, p);
        let pattern = common::random_xy_pattern(&mut rng, graph.clone(), true);
        let trace = activation_trace(&graph, &pattern.order).unwrap();
        let mut measured_before: BTreeSet<usize> = BTreeSet::new();
        for (step, sets) in trace.iter().enumerate() {
            prop_assert!(sets.is_partition_of(n));
            let now: BTreeSet<usize> = sets.measured.iter().copied().collect();
            prop_assert!(measured_before.is_subset(&now));
            let k = pattern.order[step];
            prop_assert!(sets.active.contains(&k));
            for &j in graph.neighbors(k) {
                prop_assert!(!sets.pending.contains(&j));
            }
            measured_before = now;
            measured_before.insert(k);
        }
        let run = run_pattern(&pattern, &mut rng).unwrap();
        prop_assert_eq!(run.realized_edges, graph.edges().len());
        prop_assert_eq!(run.max_width, max_active_width(&graph, &pattern.order).unwrap());
    }

    #[test]
    fn deferral_is_standard_and_preserves_branches(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = common::random_dynamic_circuit(&mut rng, 6, 3);
        let d = defer_measurements(&c).unwrap();
        prop_assert!(d.is_standard());
        prop_assert!(d.instructions.iter().all(|i| i.cond.is_none()));
        let tv = total_variation(&branch_distribution(&c).unwrap(), &branch_distribution(&d).unwrap());
        prop_assert!(tv < 1e-10);
    }

    #[test]
    fn compiler_registers_fresh_and_never_cloned(ops in prop::collection::vec((0usize..4, 0usize..3, 0usize..3, 0usize..3), 1..40)) {
        let nodes = ["A", "B", "C"];
        let mut c = ProtocolCompiler::new(3);
        for (kind, n, m, addr) in ops {
            let inst = match kind {
                0 => ProtocolInstruction::local(nodes[n], Gate::H, addr),
                1 => ProtocolInstruction::local2(nodes[n], Gate::Cnot, [addr, (addr + 1) % 3]),
                2 => ProtocolInstruction::local(nodes[n], Gate::Measure, addr),
                _ => ProtocolInstruction::transmit(nodes[n], nodes[m], addr),
            };
            let before = c.clone();
            if c.apply(&inst).is_err() {
                // A rejected instruction leaves no trace.
                prop_assert_eq!(c.circuit(), before.circuit());
                continue;
            }
            let live = c.live_registers();
            let regs: BTreeSet<usize> = live.iter().map(|(r, _, _)| *r).collect();
            prop_assert_eq!(regs.len(), live.len());
            if let ProtocolInstruction::Transmit { src, addr, .. } = &inst {
                let moved = before.register(src).unwrap().unit(*addr).unwrap().qubit.unwrap();
                prop_assert_eq!(live.iter().filter(|(r, _, _)| *r == moved).count(), 1);
            }
        }
    }

    #[test]
    fn pool_conserves_keys_with_hysteresis(capacity in 1usize..60, ops in prop::collection::vec((any::<bool>(), 1usize..12), 1..200), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool = KeyPool::new(capacity, 16).unwrap();
        let mut mirror: VecDeque<Vec<u8>> = VecDeque::new();
        for (add, count) in ops {
            let status = pool.status();
            if add {
                let key = random_key(16, &mut rng);
                if pool.add_key(key.clone()) {
                    mirror.push_back(key);
                }
            } else {
                match pool.deliver(count) {
                    Ok(Delivery::Keys(keys)) => {
                        prop_assert_eq!(status, PoolStatus::Serving);
                        let expect: Vec<Vec<u8>> = mirror.drain(..count).collect();
                        prop_assert_eq!(keys, expect);
                    }
                    Ok(Delivery::Backpressure) => prop_assert!(status == PoolStatus::Replenishing || mirror.len() < count),
                    Err(_) => prop_assert!(count > capacity),
                }
            }
            prop_assert_eq!(pool.generated() - pool.delivered(), pool.current() as u64);
            prop_assert_eq!(pool.current(), mirror.len());
            prop_assert!(pool.current() <= capacity);
            if pool.status() != status {
                match pool.status() {
                    PoolStatus::Replenishing => prop_assert!(pool.current() < pool.interruption()),
                    PoolStatus::Serving => prop_assert!(pool.current() >= pool.recovery()),
                }
            }
        }
    }
}

#[test]
fn poisson_source_mean_matches() {
    for mu in [0.1, 0.5, 0.8, 2.0] {
        let source = PhotonSource::new(1e6, mu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let total: u64 = (0..n).map(|_| u64::from(source.emit(&mut rng))).sum();
        let mean = total as f64 / n as f64;
        // Five standard errors of a Poisson mean.
        assert!((mean - mu).abs() < 5.0 * (mu / n as f64).sqrt(), "mu {mu}: {mean}");
    }
}

#[test]
fn seeded_streams_are_independent_of_draw_order() {
    let mut a = qnet_core::rng::named_stream(9, "Alice");
    let mut b = qnet_core::rng::named_stream(9, "Bob");
    let xs: Vec<u64> = (0..5).map(|_| a.random()).collect();
    let _: u64 = b.random();
    let mut a2 = qnet_core::rng::named_stream(9, "Alice");
    let ys: Vec<u64> = (0..5).map(|_| a2.random()).collect();
    assert_eq!(xs, ys);
    let counts: BTreeMap<u64, usize> = xs.iter().map(|x| (*x, 1)).collect();
    assert_eq!(counts.len(), 5);
}
