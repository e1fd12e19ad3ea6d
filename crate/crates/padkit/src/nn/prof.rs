//! Coarse internal timing counters for the tensor engine (diagnostics).

use std::collections::HashMap;
use std::sync::{LazyLock, Mutex};
use std::time::Instant;

static COUNTERS: LazyLock<Mutex<HashMap<&'static str, (u64, u64)>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));

pub struct Span {
    name: &'static str,
    start: Instant,
}

pub fn span(name: &'static str) -> Span {
    Span {
        name,
        start: Instant::now(),
    }
}

impl Drop for Span {
    fn drop(&mut self) {
        let nanos = self.start.elapsed().as_nanos() as u64;
        let mut map = COUNTERS.lock().expect("prof lock");
        let entry = map.entry(self.name).or_insert((0, 0));
        entry.0 += 1;
        entry.1 += nanos;
    }
}

pub fn reset() {
    COUNTERS.lock().expect("prof lock").clear();
}

/// Sorted (name, calls, total milliseconds), largest first.
pub fn snapshot() -> Vec<(&'static str, u64, f64)> {
    let map = COUNTERS.lock().expect("prof lock");
    let mut rows: Vec<_> = map
        .iter()
        .map(|(&k, &(calls, nanos))| (k, calls, nanos as f64 / 1e6))
        .collect();
    rows.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
    rows
}
