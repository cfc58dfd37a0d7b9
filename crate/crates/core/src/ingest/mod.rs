//! Dataset ingestion: the Elliptic CSV triplet, per-timestep fixture
//! directories, and seeded synthetic datasets.

mod elliptic;
mod fixture;
mod synth;

pub use elliptic::{load_elliptic, load_elliptic_with_stats, write_elliptic, EllipticPaths, IngestStats};
pub use fixture::{read_fixture_dir, write_fixture_dir};
pub use synth::{generate_synthetic, SynthSpec};
