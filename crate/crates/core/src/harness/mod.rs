//! Synthetic populations, seeded Monte-Carlo experiments and dataset
//! ingestion.

mod ingest;
mod population;
mod simulate;

pub use ingest::{ingest, ingest_reader, BoundingBox, IngestMode, IngestSpec, Ingested, PriorSource};
pub use population::{generate_population, PriorMode};
pub use simulate::{run_experiment, ExperimentConfig, PopulationSource};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for one `(master, a, b, c)` coordinate. The key
/// words fill the whole ChaCha seed, so distinct coordinates never share a
/// stream and the draw order of one trial cannot affect another.
pub fn stream(master: u64, a: u64, b: u64, c: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    for (chunk, word) in seed.chunks_exact_mut(8).zip([master, a, b, c]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
