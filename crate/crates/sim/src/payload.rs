//! Deterministic synthetic resource payloads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PayloadClass;

/// Length of the record pattern that structured payloads repeat.
const MOTIF_LEN: usize = 1024;
/// Per-byte probability that a structured payload deviates from its motif.
const MUTATION_RATE: f64 = 0.09;

/// Builds a payload of `size` bytes. REPETITIVE payloads mimic structured
/// mesh data (a repeating record layout with sparse variation), RANDOM ones
/// are incompressible, MIXED alternates 4 KiB blocks of both.
pub fn synthesize(class: PayloadClass, size: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    match class {
        PayloadClass::Random => (0..size).map(|_| rng.random()).collect(),
        PayloadClass::Repetitive => structured(size, rng),
        PayloadClass::Mixed => {
            let mut out = Vec::with_capacity(size);
            let mut structured_block = true;
            while out.len() < size {
                let n = (size - out.len()).min(4096);
                if structured_block {
                    out.extend(structured(n, rng));
                } else {
                    out.extend((0..n).map(|_| rng.random::<u8>()));
                }
                structured_block = !structured_block;
            }
            out
        }
    }
}

fn structured(size: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let motif: Vec<u8> = (0..MOTIF_LEN).map(|_| rng.random()).collect();
    (0..size)
        .map(|i| {
            if rng.random_bool(MUTATION_RATE) {
                rng.random()
            } else {
                motif[i % MOTIF_LEN]
            }
        })
        .collect()
}

/// Per-resource generator derived from the scenario seed.
pub fn resource_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}
