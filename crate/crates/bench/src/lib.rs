//! Seeded inputs shared by the benchmarks in `benches/`.

use arc_objects::grid::{Color, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A square grid where each cell is non-black with probability `density`,
/// drawn from colors `1..=colors`.
pub fn random_grid(size: usize, colors: u8, density: f64, seed: u64) -> Grid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Grid::from_fn(size, size, |_, _| {
        if rng.gen_bool(density) {
            Color::new(rng.gen_range(1..=colors)).expect("color in range")
        } else {
            Color::BLACK
        }
    })
}
