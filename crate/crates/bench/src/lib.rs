//! Shared inputs for the benchmarks in `benches/`.

use cfclass_core::influence::pseudo_outcomes;
use nalgebra::DMatrix;
use cfclass_core::risk::{expand_basis, BasisSpec};
use cfclass_core::simulation::{generate_dgp, DgpConfig, SimulatedData};
use cfclass_core::NuisanceFit;

pub struct Fixture {
    pub sim: SimulatedData,
    /// Quadratic basis with interactions, 27 columns.
    pub basis: DMatrix<f64>,
    /// Pseudo-outcomes built from the true nuisance functions.
    pub targets: Vec<f64>,
}

pub fn fixture(n: usize, seed: u64) -> Fixture {
    let sim = generate_dgp(&DgpConfig {
        n,
        seed,
        ..Default::default()
    })
    .expect("simulated sample");
    let fit = NuisanceFit::from_oracle(sim.pi1.clone(), sim.mu0.clone(), sim.mu1.clone(), 1, 0.01).expect("oracle nuisances");
    let targets = pseudo_outcomes(&sim.dataset, &fit).expect("pseudo-outcomes").values().to_vec();
    let basis = expand_basis(&BasisSpec::default(), &sim.dataset).expect("basis");
    Fixture { sim, basis, targets }
}
