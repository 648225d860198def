//! The Gibbs-within-composite sampler.
//!
//! Each composite iteration redraws the inclusion set, gathers the
//! subsampled data, runs a fixed number of inner Gibbs scans over the
//! process and parameter full conditionals, and draws kriging predictions
//! at the target locations. Per-iteration cost depends on the subsample
//! size and the target count only; the full dataset is touched exclusively
//! by the per-iteration delta-indexed gather.
//!
//! Index conventions within a scan follow the sampler's lagged form: the
//! process draw conditions on the previous scan's hyperparameters, the
//! trend draw on the previous noise/prior variances, and the prediction
//! step on the previous scan's range and process variance even though
//! fresher values exist by then.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::covariogram::{Covariogram, Location};
use crate::dataset::SpatialData;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, CholFactor, SymMatrix};
use crate::rng::{purpose, substream};

/// Paper-default prior shape for the variance components.
pub const DEFAULT_PRIOR_SHAPE: f64 = 1.0;
/// Paper-default prior scale for the variance components.
pub const DEFAULT_PRIOR_SCALE: f64 = 1.0;
/// Paper-default inner Gibbs length.
pub const DEFAULT_INNER_SCANS: usize = 1;

/// Paper-default support for the range parameter: `{1, 1.5, ..., 5}`.
pub fn default_phi_support() -> Vec<f64> {
    (0..9).map(|k| 1.0 + 0.5 * k as f64).collect()
}

/// What a stored prediction draw represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionTarget {
    /// The latent process `W = x'beta + nu`.
    Latent,
    /// `W` plus independent nugget noise, for scoring against held-out
    /// observations.
    Observed,
}

/// Exponent on `det H` in the range-parameter mass. `Half` is the
/// multivariate-normal density; `One` reproduces the printed form of the
/// mass for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetExponent {
    Half,
    One,
}

impl DetExponent {
    fn log_det_coefficient(self) -> f64 {
        match self {
            DetExponent::Half => -0.5,
            DetExponent::One => -1.0,
        }
    }
}

/// How the per-stratum allocations are derived from the total subsample
/// size when the design is stratified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Allocation {
    /// Equal counts per stratum (remainder round-robin).
    Equal,
    /// Proportional to stratum sizes (largest remainder).
    Proportional,
}

/// Design choice; stratum labels come from the dataset rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignChoice {
    Srs,
    Stratified { allocation: Allocation },
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub covariogram: Covariogram,
    /// Ascending positive support of the discrete-uniform range prior.
    pub phi_support: Vec<f64>,
    pub prior_shape: f64,
    pub prior_scale: f64,
    /// Subsample size n.
    pub subsample_size: usize,
    /// Composite iterations G.
    pub iterations: usize,
    /// Inner Gibbs length K.
    pub inner_scans: usize,
    /// Composite iterations discarded before predictions are stored.
    pub burn_in: usize,
    pub design: DesignChoice,
    pub seed: u64,
    pub prediction_target: PredictionTarget,
    pub det_exponent: DetExponent,
}

impl ModelConfig {
    /// Paper defaults around a given design, subsample size, and chain
    /// lengths.
    pub fn with_defaults(
        design: DesignChoice,
        subsample_size: usize,
        iterations: usize,
        burn_in: usize,
        seed: u64,
    ) -> Self {
        Self {
            covariogram: Covariogram::Exponential,
            phi_support: default_phi_support(),
            prior_shape: DEFAULT_PRIOR_SHAPE,
            prior_scale: DEFAULT_PRIOR_SCALE,
            subsample_size,
            iterations,
            inner_scans: DEFAULT_INNER_SCANS,
            burn_in,
            design,
            seed,
            prediction_target: PredictionTarget::Latent,
            det_exponent: DetExponent::Half,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("need at least one composite iteration".into()));
        }
        if self.inner_scans == 0 {
            return Err(Error::InvalidParameter("need at least one inner scan".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidParameter(format!(
                "burn-in {} must be smaller than the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if self.phi_support.is_empty() {
            return Err(Error::InvalidParameter("empty phi support".into()));
        }
        let mut prev = 0.0;
        for &p in &self.phi_support {
            if !(p > prev) {
                return Err(Error::InvalidParameter(
                    "phi support must be strictly ascending and positive".into(),
                ));
            }
            prev = p;
        }
        if !(self.prior_shape > 0.0) || !(self.prior_scale > 0.0) {
            return Err(Error::InvalidParameter("prior shape and scale must be positive".into()));
        }
        if self.subsample_size == 0 {
            return Err(Error::InsufficientData(
                "the sampler needs at least one observation per iteration".into(),
            ));
        }
        Ok(())
    }
}

/// One kept draw of the process values and parameters.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    pub nu_delta: DVector<f64>,
    pub beta: DVector<f64>,
    pub tau2: f64,
    pub sigma2: f64,
    pub sigma_beta2: f64,
    pub phi: f64,
}

/// Prediction draws at one target location.
#[derive(Debug, Clone)]
pub struct PredictionRecord {
    /// Dataset row of the target.
    pub row: usize,
    /// One draw per kept composite iteration, of the configured target
    /// quantity.
    pub draws: Vec<f64>,
    /// Mean of the latent-process draws over kept iterations.
    pub w_hat: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Timing {
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    /// Fit time of every composite iteration, for cost-profile checks.
    pub per_iteration_fit_seconds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// One state per composite iteration, at the final inner scan.
    pub states: Vec<PosteriorState>,
    pub predictions: Vec<PredictionRecord>,
    pub timing: Timing,
}

fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    // If Y ~ Gamma(shape, rate = scale_ig) then 1/Y ~ IG(shape, scale_ig);
    // the sampler below is parameterized by Gamma scale = 1/rate.
    let g = rand_distr::Gamma::new(shape, 1.0 / scale).expect("positive gamma parameters");
    1.0 / g.sample(rng)
}

/// Draw the subsampled process values from their Gaussian full
/// conditional, `N(S (y - X beta) / tau2, S)` with
/// `S = (I/tau2 + H^-1/sigma2)^-1`, via a factorization of the precision
/// matrix written in triangular form: with `H = L L'`, the precision is
/// `L^-T (L'L/tau2 + I/sigma2) L^-1`, so one Cholesky of the inner matrix
/// gives both the mean solve and the covariance square root.
pub fn fc_nu_delta<R: Rng + ?Sized>(
    y_d: &DVector<f64>,
    x_d: &DMatrix<f64>,
    beta: &DVector<f64>,
    tau2: f64,
    sigma2: f64,
    h_factor: &CholFactor,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = y_d.len();
    if x_d.nrows() != n || h_factor.order() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x_d.nrows().max(h_factor.order()),
            context: "fc_nu_delta",
        });
    }
    let b = (y_d - x_d * beta) / tau2;
    let mut inner = h_factor.lt_l();
    inner /= tau2;
    for i in 0..n {
        inner[(i, i)] += 1.0 / sigma2;
    }
    let inner_factor = cholesky(&SymMatrix::new(inner)?)?;
    // nu = L * L_M^-T (L_M^-1 (L' b) + z)
    let mut u = h_factor.lt_mul_vec(b.as_slice());
    inner_factor.solve_lower_in_place(u.as_mut_slice());
    for v in u.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v += z;
    }
    inner_factor.solve_upper_in_place(u.as_mut_slice());
    Ok(h_factor.l_mul_vec(u.as_slice()))
}

/// Draw the trend coefficients from their Gaussian full conditional with
/// precision `X'X/tau2 + I/sigma_beta2`.
pub fn fc_beta<R: Rng + ?Sized>(
    y_d: &DVector<f64>,
    x_d: &DMatrix<f64>,
    nu_d: &DVector<f64>,
    tau2: f64,
    sigma_beta2: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let p = x_d.ncols();
    let mut precision = x_d.transpose() * x_d;
    precision /= tau2;
    for i in 0..p {
        precision[(i, i)] += 1.0 / sigma_beta2;
    }
    let factor = cholesky(&SymMatrix::new(precision)?)?;
    let rhs = x_d.transpose() * (y_d - nu_d) / tau2;
    let mut mean = factor.solve_vec(&rhs)?;
    let mut z = vec![0.0; p];
    for v in z.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    factor.solve_upper_in_place(&mut z);
    for (m, dz) in mean.iter_mut().zip(&z) {
        *m += dz;
    }
    Ok(mean)
}

/// Noise variance draw: `IG(a + n/2, b + r'r/2)` for the residual
/// `r = y - X beta - nu`.
pub fn fc_tau2<R: Rng + ?Sized>(residual: &DVector<f64>, a: f64, b: f64, rng: &mut R) -> f64 {
    let shape = a + residual.len() as f64 / 2.0;
    let scale = b + 0.5 * residual.dot(residual);
    draw_inverse_gamma(shape, scale, rng)
}

/// Process variance draw: `IG(a + n/2, b + nu' H^-1 nu / 2)`, quadratic
/// form via a triangular solve.
pub fn fc_sigma2<R: Rng + ?Sized>(
    nu_d: &DVector<f64>,
    h_factor: &CholFactor,
    a: f64,
    b: f64,
    rng: &mut R,
) -> f64 {
    let shape = a + nu_d.len() as f64 / 2.0;
    let scale = b + 0.5 * h_factor.inv_quad_form(nu_d.as_slice());
    draw_inverse_gamma(shape, scale, rng)
}

/// Trend-prior variance draw: `IG(a + p/2, b + beta'beta/2)`.
pub fn fc_sigma_beta2<R: Rng + ?Sized>(beta: &DVector<f64>, a: f64, b: f64, rng: &mut R) -> f64 {
    let shape = a + beta.len() as f64 / 2.0;
    let scale = b + 0.5 * beta.dot(beta);
    draw_inverse_gamma(shape, scale, rng)
}

/// Normalized log masses of the range parameter over its support:
/// `coef * log det H(phi) - nu' H(phi)^-1 nu / (2 sigma2)`, log-sum-exp
/// normalized. `factors` must align with the support.
pub fn phi_log_masses(
    nu_d: &DVector<f64>,
    sigma2: f64,
    factors: &[CholFactor],
    det_exponent: DetExponent,
) -> Vec<f64> {
    let coef = det_exponent.log_det_coefficient();
    let mut logs: Vec<f64> = factors
        .iter()
        .map(|f| coef * f.log_det() - 0.5 * f.inv_quad_form(nu_d.as_slice()) / sigma2)
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    for l in logs.iter_mut() {
        *l -= lse;
    }
    logs
}

fn categorical_from_log_masses<R: Rng + ?Sized>(log_masses: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &lm) in log_masses.iter().enumerate() {
        acc += lm.exp();
        if u <= acc {
            return i;
        }
    }
    log_masses.len() - 1
}

/// Draw the range parameter from its discrete full conditional, building
/// the correlation factor at every support point.
pub fn fc_phi<R: Rng + ?Sized>(
    nu_d: &DVector<f64>,
    sigma2: f64,
    locs_d: &[Location],
    phi_support: &[f64],
    covariogram: Covariogram,
    det_exponent: DetExponent,
    rng: &mut R,
) -> Result<(usize, f64)> {
    if phi_support.is_empty() {
        return Err(Error::InvalidParameter("empty phi support".into()));
    }
    let mut factors = Vec::with_capacity(phi_support.len());
    for &phi in phi_support {
        let h = covariogram.build_corr_matrix(locs_d, phi)?;
        let f = cholesky(&h).map_err(|e| Error::PhiGridFailure {
            phi,
            source: Box::new(e),
        })?;
        factors.push(f);
    }
    let masses = phi_log_masses(nu_d, sigma2, &factors, det_exponent);
    let idx = categorical_from_log_masses(&masses, rng);
    Ok((idx, phi_support[idx]))
}

fn kriging_draw<R: Rng + ?Sized>(mean: f64, q: f64, sigma2: f64, rng: &mut R) -> f64 {
    let var = sigma2 * (1.0 - q).max(0.0);
    let z: f64 = StandardNormal.sample(rng);
    mean + var.sqrt() * z
}

/// One kriging draw at a target location. `h_target` holds the
/// correlations to the subsampled locations and is consumed; `z_nu` is the
/// forward-solved process vector `L^-1 nu`. The prior correlation at zero
/// lag is 1, so the conditional variance is `sigma2 * (1 - ||L^-1 h||^2)`,
/// clamped at zero against round-off.
pub fn predict_one<R: Rng + ?Sized>(
    h_target: &mut [f64],
    h_factor: &CholFactor,
    z_nu: &[f64],
    sigma2: f64,
    rng: &mut R,
) -> f64 {
    h_factor.solve_lower_in_place(h_target);
    let mut mean = 0.0;
    let mut q = 0.0;
    for (&v, &z) in h_target.iter().zip(z_nu) {
        mean += v * z;
        q += v * v;
    }
    kriging_draw(mean, q, sigma2, rng)
}

/// Kriging draw at one location from scratch: builds the cross
/// correlations and the solved process vector itself. The composite loop
/// uses [`predict_one`] with those quantities precomputed; the arithmetic
/// is identical.
#[allow(clippy::too_many_arguments)]
pub fn predict_at<R: Rng + ?Sized>(
    target: &Location,
    locs_d: &[Location],
    covariogram: Covariogram,
    phi: f64,
    h_factor: &CholFactor,
    nu_d: &DVector<f64>,
    sigma2: f64,
    rng: &mut R,
) -> Result<f64> {
    if locs_d.len() != h_factor.order() || nu_d.len() != h_factor.order() {
        return Err(Error::DimensionMismatch {
            expected: h_factor.order(),
            got: locs_d.len(),
            context: "predict_at",
        });
    }
    let mut h: Vec<f64> = locs_d
        .iter()
        .map(|s| covariogram.corr_unchecked(target.distance(s), phi))
        .collect();
    let mut z_nu = nu_d.as_slice().to_vec();
    h_factor.solve_lower_in_place(&mut z_nu);
    Ok(predict_one(&mut h, h_factor, &z_nu, sigma2, rng))
}

/// Lazily factored correlation matrices over the support grid, for one
/// inclusion set.
struct PhiFactorCache<'a> {
    covariogram: Covariogram,
    support: &'a [f64],
    locs: &'a [Location],
    factors: Vec<Option<CholFactor>>,
}

impl<'a> PhiFactorCache<'a> {
    fn new(covariogram: Covariogram, support: &'a [f64], locs: &'a [Location]) -> Self {
        Self {
            covariogram,
            support,
            locs,
            factors: vec![None; support.len()],
        }
    }

    fn get(&mut self, idx: usize) -> Result<&CholFactor> {
        if self.factors[idx].is_none() {
            let phi = self.support[idx];
            let h = self.covariogram.build_corr_matrix(self.locs, phi)?;
            let f = cholesky(&h).map_err(|e| Error::PhiGridFailure {
                phi,
                source: Box::new(e),
            })?;
            self.factors[idx] = Some(f);
        }
        Ok(self.factors[idx].as_ref().unwrap())
    }

    fn all(&mut self) -> Result<&[Option<CholFactor>]> {
        for i in 0..self.support.len() {
            self.get(i)?;
        }
        Ok(&self.factors)
    }
}

/// Run the composite sampler: G outer iterations, each with a fresh
/// inclusion draw, K inner Gibbs scans, and (past burn-in) one kriging
/// draw per target from the final scan. Deterministic for a fixed seed;
/// design, Gibbs, and per-location prediction draws use separate seed
/// substreams, so the parameter chain is unaffected by the target set.
pub fn run_composite<D: SpatialData>(
    config: &ModelConfig,
    data: &D,
    targets: &[usize],
) -> Result<ChainOutput> {
    config.validate()?;
    let p = data.num_covariates();
    if p == 0 {
        return Err(Error::InsufficientData("dataset has no covariates".into()));
    }
    if targets.is_empty() {
        return Err(Error::InsufficientData("no prediction targets".into()));
    }
    for &t in targets {
        if t >= data.len() {
            return Err(Error::InvalidParameter(format!(
                "target row {t} out of range ({} rows)",
                data.len()
            )));
        }
    }

    // Observed-row population for the design.
    let observed: Vec<usize> = (0..data.len()).filter(|&i| data.value(i).is_some()).collect();
    let n = config.subsample_size;
    if observed.len() < n {
        return Err(Error::InsufficientData(format!(
            "subsample size {n} exceeds the {} observed rows",
            observed.len()
        )));
    }
    let design = match config.design {
        DesignChoice::Srs => crate::design::DesignSpec::srs(observed.len(), n)?,
        DesignChoice::Stratified { allocation } => {
            // Dataset labels may be sparse; remap to dense ids over the
            // observed rows.
            let raw: Vec<u32> = observed.iter().map(|&i| data.stratum(i)).collect();
            let mut ids: Vec<u32> = raw.clone();
            ids.sort_unstable();
            ids.dedup();
            let dense: Vec<u32> = raw
                .iter()
                .map(|l| ids.binary_search(l).unwrap() as u32)
                .collect();
            match allocation {
                Allocation::Equal => crate::design::DesignSpec::stratified_equal(dense, n)?,
                Allocation::Proportional => {
                    crate::design::DesignSpec::stratified_proportional(dense, n)?
                }
            }
        }
    };

    // Target-side constants.
    let n_targets = targets.len();
    let target_locs: Vec<Location> = targets.iter().map(|&t| data.location(t)).collect();
    let mut target_x = DMatrix::zeros(n_targets, p);
    let mut cov_buf = vec![0.0; p];
    for (ti, &t) in targets.iter().enumerate() {
        data.covariates_into(t, &mut cov_buf);
        for (j, &c) in cov_buf.iter().enumerate() {
            target_x[(ti, j)] = c;
        }
    }

    let mut design_rng = substream(config.seed, &[purpose::DESIGN]);
    let mut gibbs_rng = substream(config.seed, &[purpose::GIBBS]);

    // Initial state: zero trend, unit variances, middle of the range grid.
    let mut beta = DVector::zeros(p);
    let mut tau2 = 1.0;
    let mut sigma2 = 1.0;
    let mut sigma_beta2 = 1.0;
    let mut phi_idx = config.phi_support.len() / 2;
    let mut nu = DVector::zeros(n);

    let kept = config.iterations - config.burn_in;
    let mut states: Vec<PosteriorState> = Vec::with_capacity(config.iterations);
    let mut pred_draws: Vec<Vec<f64>> = vec![Vec::with_capacity(kept); n_targets];
    let mut latent_sums = vec![0.0; n_targets];

    let mut timing = Timing {
        per_iteration_fit_seconds: Vec::with_capacity(config.iterations),
        ..Timing::default()
    };

    // Reusable per-iteration buffers.
    let mut y_d = DVector::zeros(n);
    let mut x_d = DMatrix::zeros(n, p);
    let mut locs_d: Vec<Location> = Vec::with_capacity(n);
    let mut h_block: Vec<f64> = Vec::new();
    let mut z_nu = vec![0.0; n];

    for g in 1..=config.iterations {
        let fit_start = Instant::now();

        let delta = design.draw(&mut design_rng);
        locs_d.clear();
        for (slot, &j) in delta.included.iter().enumerate() {
            let row = observed[j];
            y_d[slot] = data
                .value(row)
                .expect("design draws only over observed rows");
            data.covariates_into(row, &mut cov_buf);
            for (cj, &c) in cov_buf.iter().enumerate() {
                x_d[(slot, cj)] = c;
            }
            locs_d.push(data.location(row));
        }

        let mut cache = PhiFactorCache::new(config.covariogram, &config.phi_support, &locs_d);

        let mut current_scan = 0usize;
        let run_scans = (|| -> Result<f64> {
            let mut predict_secs = 0.0;
            for k in 1..=config.inner_scans {
                current_scan = k;
                let h_factor = cache.get(phi_idx)?;
                nu = fc_nu_delta(&y_d, &x_d, &beta, tau2, sigma2, h_factor, &mut gibbs_rng)?;
                beta = fc_beta(&y_d, &x_d, &nu, tau2, sigma_beta2, &mut gibbs_rng)?;
                let residual = &y_d - &x_d * &beta - &nu;
                tau2 = fc_tau2(&residual, config.prior_shape, config.prior_scale, &mut gibbs_rng);
                let sigma2_prev = sigma2;
                sigma2 = fc_sigma2(
                    &nu,
                    cache.get(phi_idx)?,
                    config.prior_shape,
                    config.prior_scale,
                    &mut gibbs_rng,
                );
                sigma_beta2 =
                    fc_sigma_beta2(&beta, config.prior_shape, config.prior_scale, &mut gibbs_rng);

                let factors = cache.all()?;
                let owned: Vec<&CholFactor> = factors.iter().map(|f| f.as_ref().unwrap()).collect();
                let masses = {
                    let coef = config.det_exponent.log_det_coefficient();
                    let mut logs: Vec<f64> = owned
                        .iter()
                        .map(|f| {
                            coef * f.log_det() - 0.5 * f.inv_quad_form(nu.as_slice()) / sigma2
                        })
                        .collect();
                    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
                    for l in logs.iter_mut() {
                        *l -= lse;
                    }
                    logs
                };
                let phi_next = categorical_from_log_masses(&masses, &mut gibbs_rng);

                // Predictions: final scan of kept iterations only. Draws
                // from other scans and from burn-in are never stored, and
                // they live on their own substreams, so skipping them
                // leaves every stored value unchanged. Targets go through
                // the interleaved solver in blocks; per-target arithmetic
                // is identical to `predict_one`.
                if k == config.inner_scans && g > config.burn_in {
                    let predict_start = Instant::now();
                    let h_factor = cache.get(phi_idx)?;
                    let phi = config.phi_support[phi_idx];
                    z_nu.copy_from_slice(nu.as_slice());
                    h_factor.solve_lower_in_place(&mut z_nu);
                    let trend = &target_x * &beta;
                    const LANES: usize = 8;
                    for (block_idx, block) in targets.chunks(LANES).enumerate() {
                        let lanes = block.len();
                        let base = block_idx * LANES;
                        h_block.resize(n * lanes, 0.0);
                        for (i, s) in locs_d.iter().enumerate() {
                            for (t, loc) in target_locs[base..base + lanes].iter().enumerate() {
                                h_block[i * lanes + t] =
                                    config.covariogram.corr_unchecked(loc.distance(s), phi);
                            }
                        }
                        h_factor.solve_lower_interleaved(&mut h_block, lanes);
                        let mut means = [0.0; LANES];
                        let mut qs = [0.0; LANES];
                        if lanes == LANES {
                            let (rows, _) = h_block.as_chunks::<LANES>();
                            for (row, &z) in rows.iter().zip(z_nu.iter()) {
                                for t in 0..LANES {
                                    means[t] += row[t] * z;
                                    qs[t] += row[t] * row[t];
                                }
                            }
                        } else {
                            for (i, &z) in z_nu.iter().enumerate() {
                                let row = &h_block[i * lanes..(i + 1) * lanes];
                                for (t, &v) in row.iter().enumerate() {
                                    means[t] += v * z;
                                    qs[t] += v * v;
                                }
                            }
                        }
                        for (t, &row) in block.iter().enumerate() {
                            let ti = base + t;
                            let mut loc_rng =
                                substream(config.seed, &[purpose::PREDICT, g as u64, row as u64]);
                            let nu_a =
                                kriging_draw(means[t], qs[t], sigma2_prev, &mut loc_rng);
                            let w = trend[ti] + nu_a;
                            latent_sums[ti] += w;
                            let stored = match config.prediction_target {
                                PredictionTarget::Latent => w,
                                PredictionTarget::Observed => {
                                    let z: f64 = StandardNormal.sample(&mut loc_rng);
                                    w + tau2.sqrt() * z
                                }
                            };
                            pred_draws[ti].push(stored);
                        }
                    }
                    predict_secs += predict_start.elapsed().as_secs_f64();
                }

                phi_idx = phi_next;
            }
            Ok(predict_secs)
        })();

        let predict_elapsed = match run_scans {
            Ok(secs) => secs,
            Err(e) => {
                return Err(Error::SamplerFailure {
                    iteration: g,
                    scan: current_scan,
                    source: Box::new(e),
                })
            }
        };

        states.push(PosteriorState {
            nu_delta: nu.clone(),
            beta: beta.clone(),
            tau2,
            sigma2,
            sigma_beta2,
            phi: config.phi_support[phi_idx],
        });

        let iter_total = fit_start.elapsed().as_secs_f64();
        let fit_secs = (iter_total - predict_elapsed).max(0.0);
        timing.fit_seconds += fit_secs;
        timing.predict_seconds += predict_elapsed;
        timing.per_iteration_fit_seconds.push(fit_secs);
    }

    let predictions = targets
        .iter()
        .zip(pred_draws)
        .zip(latent_sums)
        .map(|((&row, draws), sum)| PredictionRecord {
            row,
            draws,
            w_hat: sum / kept as f64,
        })
        .collect();

    Ok(ChainOutput {
        states,
        predictions,
        timing,
    })
}
