//! Shared fixtures for the criterion benchmarks.

use cplab_core::harris::{HarrisConstruction, Window};
use cplab_core::kernel::Kernel;

/// A medium campaign-scale construction: 401 sites, horizon 50, rate 4.
pub fn medium_construction(seed: u64) -> HarrisConstruction {
    HarrisConstruction::sample(
        &Kernel::nearest_neighbour(),
        4.0,
        Window::new(-200, 200),
        50.0,
        seed,
    )
    .expect("bench sampling")
}
