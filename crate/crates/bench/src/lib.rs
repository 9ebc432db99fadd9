//! Instance generators shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wscj_core::random::{random_instance, InstanceParams};
use wscj_core::sim::{self, SimConfig};
use wscj_core::{weights, Phylogeny, WeightTable};

/// `count` random instances drawn from one seeded stream.
pub fn random_instances(params: &InstanceParams, count: usize, seed: u64) -> Vec<(Phylogeny, WeightTable)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_instance(params, &mut rng).expect("valid parameters")).collect()
}

/// A simulated phylogeny with Boltzmann weights at `kt`.
pub fn simulated(markers: u32, leaves: usize, kt: f64, seed: u64) -> (Phylogeny, WeightTable) {
    let config = SimConfig { n_markers: markers, n_leaves: leaves, seed, ..SimConfig::default() };
    let phylo = sim::evolve(&config).and_then(|r| r.phylogeny()).expect("valid simulation");
    let table = weights::boltzmann_table(&phylo, kt).expect("finite temperature");
    (phylo, table)
}
