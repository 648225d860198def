//! The composite loop must touch observed values only through the
//! per-iteration delta-indexed gather: exactly n value reads per
//! composite iteration, regardless of the inner scan count or the target
//! set.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use rand::Rng;
use sdsm_core::sampler::{run_composite, DesignChoice, ModelConfig};
use sdsm_core::{Location, SpatialData, SpatialDataset};

struct CountingData<'a> {
    inner: &'a SpatialDataset,
    value_reads: AtomicUsize,
    covariate_reads: AtomicUsize,
}

impl<'a> CountingData<'a> {
    fn new(inner: &'a SpatialDataset) -> Self {
        Self {
            inner,
            value_reads: AtomicUsize::new(0),
            covariate_reads: AtomicUsize::new(0),
        }
    }
}

impl SpatialData for CountingData<'_> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn num_covariates(&self) -> usize {
        self.inner.num_covariates()
    }

    fn value(&self, row: usize) -> Option<f64> {
        self.value_reads.fetch_add(1, Ordering::Relaxed);
        SpatialData::value(self.inner, row)
    }

    fn location(&self, row: usize) -> Location {
        SpatialData::location(self.inner, row)
    }

    fn covariates_into(&self, row: usize, out: &mut [f64]) {
        self.covariate_reads.fetch_add(1, Ordering::Relaxed);
        self.inner.covariates_into(row, out)
    }

    fn stratum(&self, row: usize) -> u32 {
        self.inner.stratum(row)
    }
}

fn build_dataset(rows: usize, masked: &[usize]) -> SpatialDataset {
    let mut rng = sdsm_core::rng::substream(77, &[1]);
    let locs: Vec<Location> = (0..rows)
        .map(|_| Location::xy(rng.random(), rng.random()))
        .collect();
    let x = DMatrix::from_fn(rows, 2, |_, _| rng.random::<f64>());
    let values: Vec<Option<f64>> = (0..rows)
        .map(|i| {
            if masked.contains(&i) {
                None
            } else {
                Some(x[(i, 0)] + rng.random::<f64>())
            }
        })
        .collect();
    SpatialDataset::new(locs, values, x, vec![0; rows]).unwrap()
}

#[test]
fn fit_reads_n_values_per_iteration() {
    let dataset = build_dataset(60, &[7, 13]);
    let counting = CountingData::new(&dataset);

    let g = 50;
    let n = 12;
    let mut config = ModelConfig::with_defaults(DesignChoice::Srs, n, g, 10, 5);
    config.inner_scans = 3;

    let out = run_composite(&config, &counting, &[7, 13]).unwrap();
    assert_eq!(out.states.len(), g);

    // One observation-scan happens up front to find the observed rows
    // (len reads, not value-bearing beyond presence); the run itself then
    // reads exactly n values per composite iteration.
    let reads = counting.value_reads.load(Ordering::Relaxed);
    let presence_scan = dataset.len();
    assert_eq!(
        reads,
        presence_scan + g * n,
        "value reads: {reads}, expected presence scan {presence_scan} + {}",
        g * n
    );
}

#[test]
fn inner_scans_do_not_reread_data() {
    let dataset = build_dataset(40, &[3]);
    let k1 = {
        let counting = CountingData::new(&dataset);
        let config = ModelConfig::with_defaults(DesignChoice::Srs, 8, 20, 4, 9);
        run_composite(&config, &counting, &[3]).unwrap();
        counting.value_reads.load(Ordering::Relaxed)
    };
    let k5 = {
        let counting = CountingData::new(&dataset);
        let mut config = ModelConfig::with_defaults(DesignChoice::Srs, 8, 20, 4, 9);
        config.inner_scans = 5;
        run_composite(&config, &counting, &[3]).unwrap();
        counting.value_reads.load(Ordering::Relaxed)
    };
    assert_eq!(k1, k5, "longer inner scans must not touch the data again");
}
