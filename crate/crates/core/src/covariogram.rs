//! Correlation functions and correlation-matrix assembly.
//!
//! Only the exponential kind ships; the enum is the extension point for
//! other stationary kernels. Distances are Euclidean in raw coordinate
//! units.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// A spatial coordinate in 1, 2, or 3 dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    coords: [f64; 3],
    dim: u8,
}

impl Location {
    pub fn new(coords: &[f64]) -> Result<Self> {
        if coords.is_empty() || coords.len() > 3 {
            return Err(Error::InvalidParameter(format!(
                "location dimension must be 1..=3, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(
                "non-finite location coordinate".into(),
            ));
        }
        let mut c = [0.0; 3];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Self {
            coords: c,
            dim: coords.len() as u8,
        })
    }

    /// Planar location; the common case throughout.
    pub fn xy(x: f64, y: f64) -> Self {
        Self {
            coords: [x, y, 0.0],
            dim: 2,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    pub fn x(&self) -> f64 {
        self.coords[0]
    }

    pub fn y(&self) -> f64 {
        self.coords[1]
    }

    /// Euclidean distance. Mixed dimensions compare the zero-padded
    /// coordinates, which is never meaningful; callers keep dims uniform.
    pub fn distance(&self, other: &Location) -> f64 {
        let dx = self.coords[0] - other.coords[0];
        let dy = self.coords[1] - other.coords[1];
        let dz = self.coords[2] - other.coords[2];
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Correlation function family, `rho_c(d; phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Covariogram {
    /// `rho_c(d; phi) = exp(-phi * d)`.
    Exponential,
}

impl Covariogram {
    /// Correlation at a given lag norm. `phi` must be positive.
    pub fn corr(&self, lag_norm: f64, phi: f64) -> Result<f64> {
        if !(phi > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "covariogram parameter must be positive, got {phi}"
            )));
        }
        if !(lag_norm >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lag norm must be non-negative, got {lag_norm}"
            )));
        }
        Ok(self.corr_unchecked(lag_norm, phi))
    }

    /// Hot-path variant: assumes `phi > 0` and `lag_norm >= 0`.
    #[inline]
    pub fn corr_unchecked(&self, lag_norm: f64, phi: f64) -> f64 {
        match self {
            Covariogram::Exponential => (-phi * lag_norm).exp(),
        }
    }

    /// Correlation matrix `H(phi)` over one location set: unit diagonal,
    /// entry (i,j) = corr(||s_i - s_j||). Duplicate locations are allowed;
    /// the resulting rank deficiency is absorbed by the factorization
    /// jitter downstream.
    pub fn build_corr_matrix(&self, locs: &[Location], phi: f64) -> Result<SymMatrix> {
        self.corr(0.0, phi)?; // validates phi
        Ok(SymMatrix::from_fn_symmetric(locs.len(), |i, j| {
            if i == j {
                1.0
            } else {
                self.corr_unchecked(locs[i].distance(&locs[j]), phi)
            }
        }))
    }

    /// Rectangular cross-correlation matrix: entry (i,j) = corr(||rows_i - cols_j||).
    pub fn build_cross_matrix(
        &self,
        rows: &[Location],
        cols: &[Location],
        phi: f64,
    ) -> Result<DMatrix<f64>> {
        if rows.is_empty() || cols.is_empty() {
            return Err(Error::InvalidParameter(
                "cross matrix needs non-empty row and column location sets".into(),
            ));
        }
        self.corr(0.0, phi)?;
        Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.corr_unchecked(rows[i].distance(&cols[j]), phi)
        }))
    }
}
