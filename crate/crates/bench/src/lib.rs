//! Shared data builders for the pipeline benchmarks.

use rand::Rng;

use procscore::simgen::{SimConfig, SimulatedData};
use procscore::ActionSequence;

/// A simulated dataset sized for benchmarking.
pub fn bench_dataset(n_persons: usize, n_items: usize, seed: u64) -> SimulatedData {
    procscore::simulate_dataset(&SimConfig::new(n_persons, n_items, seed))
        .expect("valid benchmark config")
}

/// Random token sequences for one item.
pub fn bench_sequences(n: usize, max_len: usize, seed: u64) -> Vec<ActionSequence> {
    let mut rng = procscore::seed::child_rng(seed, "bench-sequences");
    let vocab: Vec<String> = (0..24).map(|k| format!("A{k}")).collect();
    (0..n)
        .map(|i| {
            let len = rng.gen_range(4..=max_len);
            let actions = (0..len)
                .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
                .collect();
            ActionSequence::new(format!("p{i:05}"), "bench", actions).expect("nonempty")
        })
        .collect()
}

/// Tied integer-valued vectors for rank-correlation benchmarks.
pub fn bench_ranks(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = procscore::seed::child_rng(seed, "bench-ranks");
    let a = (0..n).map(|_| rng.gen_range(0..50) as f64).collect();
    let b = (0..n).map(|_| rng.gen_range(0..50) as f64).collect();
    (a, b)
}
