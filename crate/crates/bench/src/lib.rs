//! Fixtures shared by the criterion benches.

use ctxbound::synth::{generate, SynthConfig};
use ctxbound::{BinCounts, DatasetBundle};

/// Deterministic bin counts with varied true/false mixes.
pub fn fixture_bins(n: usize) -> Vec<BinCounts> {
    (0..n as u64)
        .map(|i| BinCounts::new(3 + (i * 5) % 7, (i * 7 + 3) % 11))
        .collect()
}

/// A mid-sized synthetic dataset with all error types and a planted context.
pub fn fixture_bundle(num_images: usize) -> DatasetBundle {
    let text = format!(
        "seed = 17
num_images = {num_images}
categories = dog, person, ball, bench
objects.dog = 0..2
objects.person = 0..3
objects.bench = 0..1
errors = 0.4, 0.2, 0.4
false_per_image = 2
plant = dog:ball:0.8
"
    );
    generate(&SynthConfig::parse(&text).expect("valid fixture config")).expect("feasible fixture")
}
