//! Seeded random API graphs and an independent shortest-path oracle.
#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use jarvis_core::api_graph::{load_graph, ApiGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

pub const MEMBER_POOL: [&str; 10] = ["alpha", "beta", "gamma", "delta", "eps", "pin", "net", "cell", "slack", "route_length"];

/// Up to `max_types` object types named T0, T1, ...; each has 1-4 members
/// from [`MEMBER_POOL`], most returning another type.
pub fn random_graph(seed: u64, max_types: usize) -> ApiGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_types);
    let mut objects = Map::new();
    for t in 0..n {
        let mut members = Map::new();
        for _ in 0..rng.gen_range(1..=4) {
            let name = MEMBER_POOL[rng.gen_range(0..MEMBER_POOL.len())];
            let returns = if rng.gen_bool(0.75) { format!("T{}", rng.gen_range(0..n)) } else { "Float".into() };
            members.insert(name.into(), json!({ "returns": returns, "doc": format!("{name} of T{t}") }));
        }
        objects.insert(format!("T{t}"), json!({ "doc": format!("type {t}"), "members": members }));
    }
    load_graph(&Value::Object(Map::from_iter([("objects".to_string(), Value::Object(objects))])).to_string()).unwrap()
}

/// Breadth-first search over (type -> type) edges. For each reached type,
/// keeps the lexicographically smallest member sequence among shortest
/// routes. Returns `(hops, members)` to the nearest type declaring `target`.
pub fn oracle_path(graph: &ApiGraph, from: &str, target: &str) -> Option<(usize, Vec<String>)> {
    let mut best: BTreeMap<String, Vec<String>> = BTreeMap::new();
    best.insert(from.to_string(), Vec::new());
    let mut layer = vec![from.to_string()];
    let mut queue = VecDeque::new();
    queue.push_back(layer.clone());
    while let Some(current) = queue.pop_front() {
        let hits: Vec<&Vec<String>> =
            current.iter().filter(|t| graph.objects[t.as_str()].members.contains_key(target)).map(|t| &best[t]).collect();
        if let Some(min) = hits.into_iter().min() {
            return Some((min.len(), min.clone()));
        }
        let mut next: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for t in &current {
            for m in graph.objects[t.as_str()].members.values() {
                let Some(dest) = m.returns.object_name() else { continue };
                if best.contains_key(dest) {
                    continue;
                }
                let mut seq = best[t].clone();
                seq.push(m.name.clone());
                let slot = next.entry(dest.to_string()).or_insert_with(|| seq.clone());
                if seq < *slot {
                    *slot = seq;
                }
            }
        }
        layer = next.keys().cloned().collect();
        best.extend(next);
        if !layer.is_empty() {
            queue.push_back(layer.clone());
        }
    }
    None
}
