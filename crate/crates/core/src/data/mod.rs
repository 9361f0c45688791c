//! Sample files, dataset manifests, the synthetic generator and batch assembly.

mod batch;
mod format;
mod manifest;
mod synthetic;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use batch::{batch_rng, draw_ids, full_batch, make_batch, Batch};
pub use format::{read_sample, write_sample, LoadLabel, SampleRecord, MAGIC};
pub use manifest::{
    split_dataset, Dataset, Manifest, SampleEntry, Split, FORMAT_VERSION, MANIFEST_FILE, SAMPLE_DIR,
};
pub use synthetic::{analytic_fields, generate_synthetic, synthesize_sample, GeneratorConfig, ShapeFamily};

/// Independent 64-bit seed for sub-task `stream` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}
