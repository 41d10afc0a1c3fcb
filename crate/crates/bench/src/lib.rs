//! Fixtures shared by the criterion benches.

use capalloc_core::cost::{AdditiveMaxCost, PnlGenerator, VarCost};
use capalloc_core::permutation::substream_rng;
use rand::Rng;

/// Components `(a, b)` drawn i.i.d. uniform(0, 1).
pub fn uniform_components(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = substream_rng(seed, n as u64);
    let a = (0..n).map(|_| rng.random()).collect();
    let b = (0..n).map(|_| rng.random()).collect();
    (a, b)
}

pub fn additive_cost(n: usize, seed: u64) -> AdditiveMaxCost {
    let (a, b) = uniform_components(n, seed);
    AdditiveMaxCost::new(a, b).expect("equal lengths")
}

pub fn var_cost(n: usize, seed: u64) -> VarCost {
    let mut rng = substream_rng(seed, n as u64);
    let pnl = PnlGenerator::default().generate(n, &mut rng).expect("valid generator");
    VarCost::new(pnl, 0.99).expect("valid level")
}
