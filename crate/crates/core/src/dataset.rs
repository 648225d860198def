//! In-memory spatial dataset and the access abstraction the sampler reads
//! through.
//!
//! The sampler is generic over [`SpatialData`] so tests can interpose a
//! counting wrapper and verify that observed values are only read through
//! the per-iteration delta-indexed gather.

use nalgebra::DMatrix;

use crate::covariogram::Location;
use crate::error::{Error, Result};

/// N locations with optional observed values, p covariates, and a stratum
/// label per row.
#[derive(Debug, Clone)]
pub struct SpatialDataset {
    locations: Vec<Location>,
    values: Vec<Option<f64>>,
    covariates: DMatrix<f64>,
    strata: Vec<u32>,
}

impl SpatialDataset {
    pub fn new(
        locations: Vec<Location>,
        values: Vec<Option<f64>>,
        covariates: DMatrix<f64>,
        strata: Vec<u32>,
    ) -> Result<Self> {
        let n = locations.len();
        if values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: values.len(),
                context: "dataset values",
            });
        }
        if covariates.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: covariates.nrows(),
                context: "dataset covariate rows",
            });
        }
        if strata.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: strata.len(),
                context: "dataset stratum labels",
            });
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite observed value".into()));
        }
        Ok(Self {
            locations,
            values,
            covariates,
            strata,
        })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn num_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn strata(&self) -> &[u32] {
        &self.strata
    }

    /// Rows with an observed value, in row order.
    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.values[i].is_some()).collect()
    }

    /// Rows without an observed value, in row order.
    pub fn missing_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.values[i].is_none()).collect()
    }

    pub fn observed_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Read access to a spatial dataset. The sampler only ever touches
/// observed values through [`SpatialData::value`], which makes the
/// "n reads per composite iteration" contract checkable by a wrapper.
pub trait SpatialData {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn num_covariates(&self) -> usize;
    /// Observed value at a row, `None` when missing.
    fn value(&self, row: usize) -> Option<f64>;
    fn location(&self, row: usize) -> Location;
    /// Covariate row, written into `out` (length `num_covariates`).
    fn covariates_into(&self, row: usize, out: &mut [f64]);
    fn stratum(&self, row: usize) -> u32;
}

impl SpatialData for SpatialDataset {
    fn len(&self) -> usize {
        self.len()
    }

    fn num_covariates(&self) -> usize {
        self.num_covariates()
    }

    fn value(&self, row: usize) -> Option<f64> {
        self.values[row]
    }

    fn location(&self, row: usize) -> Location {
        self.locations[row]
    }

    fn covariates_into(&self, row: usize, out: &mut [f64]) {
        for (c, o) in self.covariates.row(row).iter().zip(out.iter_mut()) {
            *o = *c;
        }
    }

    fn stratum(&self, row: usize) -> u32 {
        self.strata[row]
    }
}

impl<T: SpatialData + ?Sized> SpatialData for &T {
    fn len(&self) -> usize {
        (**self).len()
    }

    fn num_covariates(&self) -> usize {
        (**self).num_covariates()
    }

    fn value(&self, row: usize) -> Option<f64> {
        (**self).value(row)
    }

    fn location(&self, row: usize) -> Location {
        (**self).location(row)
    }

    fn covariates_into(&self, row: usize, out: &mut [f64]) {
        (**self).covariates_into(row, out)
    }

    fn stratum(&self, row: usize) -> u32 {
        (**self).stratum(row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observed_and_missing_partition() {
        let locs = vec![Location::xy(0.0, 0.0), Location::xy(1.0, 0.0), Location::xy(0.0, 1.0)];
        let ds = SpatialDataset::new(
            locs,
            vec![Some(1.0), None, Some(3.0)],
            DMatrix::from_element(3, 2, 0.5),
            vec![0, 0, 1],
        )
        .unwrap();
        assert_eq!(ds.observed_indices(), vec![0, 2]);
        assert_eq!(ds.missing_indices(), vec![1]);
        assert_eq!(ds.observed_count() + ds.missing_indices().len(), ds.len());
    }

    #[test]
    fn rejects_ragged_inputs() {
        let locs = vec![Location::xy(0.0, 0.0)];
        assert!(SpatialDataset::new(
            locs,
            vec![Some(1.0), None],
            DMatrix::zeros(1, 1),
            vec![0],
        )
        .is_err());
    }
}
