//! Desk-scale calibration: with data simulated from the parametric model
//! itself and the full sample used every iteration, central 95% posterior
//! intervals for the trend coefficients should cover the truth in most
//! seeded replicates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sdsm_core::metrics::central_interval;
use sdsm_core::sampler::{run_composite, DesignChoice, ModelConfig};
use sdsm_core::{cholesky, Covariogram, Location, SpatialDataset};

/// Draw one dataset of n points from y = X beta + nu + eps with
/// nu ~ N(0, sigma2 H(phi)).
fn simulate_parametric(
    n: usize,
    beta: &DVector<f64>,
    tau2: f64,
    sigma2: f64,
    phi: f64,
    seed: u64,
) -> SpatialDataset {
    let mut rng = sdsm_core::rng::substream(seed, &[0xca11]);
    let locs: Vec<Location> = (0..n)
        .map(|_| Location::xy(rng.random(), rng.random()))
        .collect();
    let x = DMatrix::from_fn(n, beta.len(), |_, _| rng.random::<f64>());
    let h = Covariogram::Exponential.build_corr_matrix(&locs, phi).unwrap();
    let l = cholesky(&h).unwrap();
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nu = l.l_mul_vec(&z) * sigma2.sqrt();
    let trend = &x * beta;
    let mut values: Vec<Option<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let eps: f64 = StandardNormal.sample(&mut rng);
        values.push(Some(trend[i] + nu[i] + tau2.sqrt() * eps));
    }
    // One masked row so the sampler has a prediction target.
    values[0] = None;
    SpatialDataset::new(locs, values, x, vec![0; n]).unwrap()
}

#[test]
fn beta_intervals_cover_truth_in_most_replicates() {
    let beta_true = DVector::from_row_slice(&[2.0, 3.0]);
    let replicates = 20;
    let mut covered = 0;
    for rep in 0..replicates {
        let data = simulate_parametric(26, &beta_true, 0.25, 1.0, 3.0, 1000 + rep);
        let observed = data.observed_count();
        let config = ModelConfig::with_defaults(DesignChoice::Srs, observed, 3000, 500, 77 + rep);
        let out = run_composite(&config, &data, &[0]).unwrap();
        let mut all_in = true;
        for j in 0..2 {
            let draws: Vec<f64> = out.states[500..].iter().map(|s| s.beta[j]).collect();
            let (lo, hi) = central_interval(&draws, 0.05).unwrap();
            if !(lo <= beta_true[j] && beta_true[j] <= hi) {
                all_in = false;
            }
        }
        if all_in {
            covered += 1;
        }
    }
    assert!(
        covered * 5 >= replicates * 4,
        "covered {covered} of {replicates} replicates"
    );
}
