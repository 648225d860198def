//! Manual timing probe for the composite sampler at sweep-scale settings.
//! Ignored by default; run with `cargo test -p sdsm-core --test perf_probe
//! -- --ignored --nocapture` when tuning.

use nalgebra::DVector;
use sdsm_core::sampler::{run_composite, DesignChoice, ModelConfig, PredictionTarget};
use sdsm_core::simulator::{synthesize, CovariateSource, GridSpec, MissingBlock, SimConfig};

#[test]
#[ignore]
fn one_hundred_iterations_at_sweep_scale() {
    let sim = SimConfig {
        grid: GridSpec::unit(100, 100),
        covariogram: sdsm_core::Covariogram::Exponential,
        phi_true: 3.0,
        sigma2_true: 1.0,
        beta_true: DVector::from_row_slice(&[2.0, 3.0]),
        covariates: CovariateSource::UniformIid { p: 2 },
        snr: 3.0,
        modes: 5000,
        missing_fraction: 0.2,
        missing_block: Some(MissingBlock {
            row0: 30,
            col0: 20,
            rows: 25,
            cols: 40,
        }),
        seed: 4242,
    };
    let (data, _) = synthesize(&sim).unwrap();
    let targets = data.missing_indices();
    println!("targets: {}", targets.len());

    for &n in &[60usize, 120, 240] {
        let mut config = ModelConfig::with_defaults(DesignChoice::Srs, n, 100, 0, 7);
        config.prediction_target = PredictionTarget::Observed;
        let start = std::time::Instant::now();
        let out = run_composite(&config, &data, &targets).unwrap();
        let elapsed = start.elapsed().as_secs_f64();
        println!(
            "n = {n}: {:.2} s for 100 iterations (fit {:.2} s, predict {:.2} s) -> {:.0} s per 10k",
            elapsed,
            out.timing.fit_seconds,
            out.timing.predict_seconds,
            elapsed * 100.0
        );
    }
}
