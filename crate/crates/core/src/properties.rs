//! Closed-form moment and spatial-property calculators, plus a brute-force
//! generative oracle used to validate them.
//!
//! The data moments under subsampling are weighted blends of a "true"
//! (unparameterized) model and the parametric spatial model, with weights
//! fixed by the sampling design. The true model is represented here by a
//! Gaussian surrogate: a mean per location, one variance, a covariance
//! function, and a nugget. The surrogate is the only way to make the blend
//! checkable, since the real data-generating law is never parameterized.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::covariogram::{Covariogram, Location};
use crate::design::{self, DesignCoefficients, DesignSpec};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, SymMatrix};

/// Parameter vector of the spatial model.
#[derive(Debug, Clone)]
pub struct Theta {
    pub beta: DVector<f64>,
    pub tau2: f64,
    pub sigma2: f64,
    pub sigma_beta2: f64,
    pub phi: f64,
}

/// True mean, per location or constant across locations.
#[derive(Debug, Clone)]
pub enum TrueMean {
    Constant(f64),
    PerLocation(Vec<f64>),
}

impl TrueMean {
    fn at(&self, i: usize) -> f64 {
        match self {
            TrueMean::Constant(v) => *v,
            TrueMean::PerLocation(v) => v[i],
        }
    }
}

/// Covariance structure of the true de-trended process.
pub enum TrueCovKind {
    /// Lag-only covariance `C(d) = (sigma2 - nugget) * rho(d; phi)` for
    /// d > 0; the variance at d = 0 is `sigma2`.
    Stationary { covariogram: Covariogram, phi: f64 },
    /// Arbitrary pair covariance; lag-based profiles are unavailable.
    NonStationary(Box<dyn Fn(&Location, &Location) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for TrueCovKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrueCovKind::Stationary { covariogram, phi } => f
                .debug_struct("Stationary")
                .field("covariogram", covariogram)
                .field("phi", phi)
                .finish(),
            TrueCovKind::NonStationary(_) => f.write_str("NonStationary(..)"),
        }
    }
}

/// Gaussian surrogate for the unparameterized true data model. One
/// variance for all locations (the mean may vary); `nugget <= sigma2`.
#[derive(Debug)]
pub struct TrueModelSpec {
    pub mean: TrueMean,
    pub sigma2: f64,
    pub nugget: f64,
    pub cov: TrueCovKind,
}

impl TrueModelSpec {
    pub fn new(mean: TrueMean, sigma2: f64, nugget: f64, cov: TrueCovKind) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "true variance must be positive, got {sigma2}"
            )));
        }
        if !(0.0..=sigma2).contains(&nugget) {
            return Err(Error::InvalidParameter(format!(
                "true nugget must lie in [0, sigma2], got {nugget}"
            )));
        }
        Ok(Self {
            mean,
            sigma2,
            nugget,
            cov,
        })
    }

    pub fn mean_at(&self, i: usize) -> f64 {
        self.mean.at(i)
    }

    /// Pair covariance between concrete locations; `sigma2` on the
    /// diagonal (`same_index`).
    pub fn cov_between(&self, a: &Location, b: &Location, same_index: bool) -> f64 {
        if same_index {
            return self.sigma2;
        }
        match &self.cov {
            TrueCovKind::Stationary { covariogram, phi } => {
                (self.sigma2 - self.nugget) * covariogram.corr_unchecked(a.distance(b), *phi)
            }
            TrueCovKind::NonStationary(f) => f(a, b),
        }
    }

    /// Lag-only covariance at a strictly positive lag; errors when the
    /// model is not stationary.
    pub fn cov_at_lag(&self, lag: f64) -> Result<f64> {
        match &self.cov {
            TrueCovKind::Stationary { covariogram, phi } => {
                Ok((self.sigma2 - self.nugget) * covariogram.corr_unchecked(lag, *phi))
            }
            TrueCovKind::NonStationary(_) => Err(Error::NonStationaryTrueModel),
        }
    }

    /// `lim_{d -> 0+} C(d) = sigma2 - nugget`.
    pub fn cov_at_zero_plus(&self) -> Result<f64> {
        match &self.cov {
            TrueCovKind::Stationary { .. } => Ok(self.sigma2 - self.nugget),
            TrueCovKind::NonStationary(_) => Err(Error::NonStationaryTrueModel),
        }
    }

    fn is_stationary(&self) -> bool {
        matches!(self.cov, TrueCovKind::Stationary { .. })
    }
}

/// Closed-form data moments under a design.
#[derive(Debug, Clone)]
pub struct MomentSummary {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Pair covariances; the diagonal holds the variances.
    pub covariance: DMatrix<f64>,
    pub design_kind: String,
}

/// Which covariance case of a design a profile refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignCase {
    Srs,
    SameStratum(usize),
    CrossStratum(usize, usize),
}

impl DesignCase {
    fn stratum_pair(self) -> (usize, usize) {
        match self {
            DesignCase::Srs => (0, 0),
            DesignCase::SameStratum(r) => (r, r),
            DesignCase::CrossStratum(r, t) => (r, t),
        }
    }

    pub fn label(self) -> String {
        match self {
            DesignCase::Srs => "srs".into(),
            DesignCase::SameStratum(r) => format!("same_stratum_{r}"),
            DesignCase::CrossStratum(r, t) => format!("cross_stratum_{r}_{t}"),
        }
    }
}

/// The effective range is infinite when the de-trended covariance never
/// reaches the requested level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EffectiveRange {
    Finite(f64),
    Infinite,
}

/// Sill, nugget, effective range, and a sampled variogram curve for one
/// design case.
#[derive(Debug, Clone)]
pub struct SpatialProfile {
    pub case: DesignCase,
    pub sill: f64,
    pub nugget: f64,
    pub effective_range: EffectiveRange,
    /// `(lag, 2 * gamma(lag))` samples.
    pub variogram: Vec<(f64, f64)>,
}

/// Moments of the data under SRS without replacement.
pub fn srs_moments(
    theta: &Theta,
    true_model: &TrueModelSpec,
    x: &DMatrix<f64>,
    locs: &[Location],
    sample: usize,
    covariogram: Covariogram,
) -> Result<MomentSummary> {
    let spec = DesignSpec::srs(locs.len(), sample)?;
    moments_under(theta, true_model, x, locs, &spec, covariogram, "srs")
}

/// Moments of the data under stratified random sampling.
pub fn strat_moments(
    theta: &Theta,
    true_model: &TrueModelSpec,
    x: &DMatrix<f64>,
    locs: &[Location],
    spec: &DesignSpec,
    covariogram: Covariogram,
) -> Result<MomentSummary> {
    moments_under(theta, true_model, x, locs, spec, covariogram, "stratified")
}

fn moments_under(
    theta: &Theta,
    true_model: &TrueModelSpec,
    x: &DMatrix<f64>,
    locs: &[Location],
    spec: &DesignSpec,
    covariogram: Covariogram,
    kind: &str,
) -> Result<MomentSummary> {
    let n_pop = locs.len();
    if x.nrows() != n_pop {
        return Err(Error::DimensionMismatch {
            expected: n_pop,
            got: x.nrows(),
            context: "covariate rows",
        });
    }
    if spec.population() != n_pop {
        return Err(Error::DimensionMismatch {
            expected: n_pop,
            got: spec.population(),
            context: "design population",
        });
    }
    let trend: Vec<f64> = (0..n_pop)
        .map(|i| x.row(i).transpose().dot(&theta.beta))
        .collect();
    let fractions = spec.stratum_fractions();
    let incl: Vec<f64> = (0..n_pop)
        .map(|i| {
            let (nr, cap) = fractions[spec.stratum_of(i)];
            nr as f64 / cap as f64
        })
        .collect();

    let mut mean = vec![0.0; n_pop];
    let mut variance = vec![0.0; n_pop];
    for i in 0..n_pop {
        let p = incl[i];
        let gap = trend[i] - true_model.mean_at(i);
        mean[i] = p * trend[i] + (1.0 - p) * true_model.mean_at(i);
        variance[i] = p * (theta.tau2 + theta.sigma2)
            + (1.0 - p) * true_model.sigma2
            + p * (1.0 - p) * gap * gap;
    }

    let mut covariance = DMatrix::zeros(n_pop, n_pop);
    for i in 0..n_pop {
        covariance[(i, i)] = variance[i];
        for j in 0..i {
            let w = design::design_coefficients(spec, i, j);
            let c_true = true_model.cov_between(&locs[i], &locs[j], false);
            let h = covariogram.corr_unchecked(locs[i].distance(&locs[j]), theta.phi);
            let gap_i = trend[i] - true_model.mean_at(i);
            let gap_j = trend[j] - true_model.mean_at(j);
            let v = w.weight_true * c_true
                + w.weight_param * theta.sigma2 * h
                + w.weight_cross * gap_i * gap_j;
            covariance[(i, j)] = v;
            covariance[(j, i)] = v;
        }
    }

    Ok(MomentSummary {
        mean,
        variance,
        covariance,
        design_kind: kind.into(),
    })
}

/// De-trended covariance from a coefficient triple:
/// `weight_true * c_true + weight_param * sigma2 * h`.
pub fn detrended_cov(coeffs: &DesignCoefficients, c_true: f64, sigma2: f64, h: f64) -> f64 {
    coeffs.weight_true * c_true + coeffs.weight_param * sigma2 * h
}

/// Mean inclusion probability over the stratum pair of a case.
fn mean_incl(spec: &DesignSpec, case: DesignCase) -> f64 {
    let fractions = spec.stratum_fractions();
    let (r, t) = case.stratum_pair();
    let (nr, capr) = fractions[r];
    let (nt, capt) = fractions[t];
    let pr = nr as f64 / capr as f64;
    let pt = nt as f64 / capt as f64;
    if r == t {
        pr
    } else {
        0.5 * (pr + pt)
    }
}

fn validate_case(spec: &DesignSpec, case: DesignCase) -> Result<()> {
    let strata = spec.num_strata();
    let ok = match (spec, case) {
        (DesignSpec::Srs { .. }, DesignCase::Srs) => true,
        (DesignSpec::Srs { .. }, _) => false,
        (DesignSpec::Stratified(_), DesignCase::SameStratum(r)) => r < strata,
        (DesignSpec::Stratified(_), DesignCase::CrossStratum(r, t)) => {
            r < strata && t < strata && r != t
        }
        (DesignSpec::Stratified(_), DesignCase::Srs) => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "design case {case:?} does not apply to this design"
        )))
    }
}

/// Variogram `2 gamma(d)` of the de-trended data on a lag grid, for one
/// design case. Requires a weakly stationary true model.
pub fn variogram(
    spec: &DesignSpec,
    case: DesignCase,
    theta: &Theta,
    true_model: &TrueModelSpec,
    covariogram: Covariogram,
    lags: &[f64],
) -> Result<Vec<(f64, f64)>> {
    validate_case(spec, case)?;
    if !true_model.is_stationary() {
        return Err(Error::NonStationaryTrueModel);
    }
    let (r, t) = case.stratum_pair();
    let w = design::case_coefficients(spec, r, t);
    let p_bar = mean_incl(spec, case);
    let sill2 = 2.0 * (p_bar * (theta.tau2 + theta.sigma2) + (1.0 - p_bar) * true_model.sigma2);
    lags.iter()
        .map(|&d| {
            if !(d >= 0.0) {
                return Err(Error::InvalidParameter(format!("negative lag {d}")));
            }
            let c_true = if d == 0.0 {
                true_model.cov_at_zero_plus()?
            } else {
                true_model.cov_at_lag(d)?
            };
            let g = detrended_cov(
                &w,
                c_true,
                theta.sigma2,
                covariogram.corr_unchecked(d, theta.phi),
            );
            Ok((d, sill2 - 2.0 * g))
        })
        .collect()
}

/// Sill, nugget, and effective range for one design case, with the
/// variogram sampled on the supplied lag grid.
///
/// The literal range (infimum where the de-trended covariance is exactly
/// zero) is infinite for strictly positive kernels, so the range reported
/// here is the smallest lag at which the covariance falls to
/// `drop_fraction` of its zero-lag limit, found by bisection to a 1e-9 lag
/// tolerance. `drop_fraction = 0` requests the literal definition.
pub fn sill_nugget_range(
    spec: &DesignSpec,
    case: DesignCase,
    theta: &Theta,
    true_model: &TrueModelSpec,
    covariogram: Covariogram,
    drop_fraction: f64,
    lags: &[f64],
) -> Result<SpatialProfile> {
    validate_case(spec, case)?;
    if !true_model.is_stationary() {
        return Err(Error::NonStationaryTrueModel);
    }
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(Error::InvalidParameter(format!(
            "drop fraction must lie in [0, 1), got {drop_fraction}"
        )));
    }
    let (r, t) = case.stratum_pair();
    let w = design::case_coefficients(spec, r, t);
    let p_bar = mean_incl(spec, case);

    let sill = p_bar * (theta.tau2 + theta.sigma2) + (1.0 - p_bar) * true_model.sigma2;
    let nugget = (p_bar * theta.tau2 + (p_bar - w.weight_param) * theta.sigma2)
        + ((1.0 - p_bar - w.weight_true) * true_model.sigma2 + w.weight_true * true_model.nugget);

    let true_corr = |d: f64| -> f64 {
        match &true_model.cov {
            TrueCovKind::Stationary { covariogram, phi } => covariogram.corr_unchecked(d, *phi),
            TrueCovKind::NonStationary(_) => unreachable!("checked stationary above"),
        }
    };
    let cov_at = |d: f64| -> f64 {
        let c_true = (true_model.sigma2 - true_model.nugget) * true_corr(d);
        detrended_cov(
            &w,
            c_true,
            theta.sigma2,
            covariogram.corr_unchecked(d, theta.phi),
        )
    };
    let g0 =
        w.weight_true * (true_model.sigma2 - true_model.nugget) + w.weight_param * theta.sigma2;

    let effective_range = if g0 <= 0.0 {
        // No spatial dependence at any lag.
        EffectiveRange::Finite(0.0)
    } else if drop_fraction == 0.0 {
        // Strictly positive kernels never reach exact zero.
        EffectiveRange::Infinite
    } else {
        let target = drop_fraction * g0;
        let mut hi = 1.0;
        let mut bracketed = false;
        for _ in 0..1100 {
            if cov_at(hi) <= target {
                bracketed = true;
                break;
            }
            hi *= 2.0;
        }
        if !bracketed {
            EffectiveRange::Infinite
        } else {
            let mut lo = 0.0;
            while hi - lo > 1e-9 {
                let mid = 0.5 * (lo + hi);
                if cov_at(mid) <= target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            EffectiveRange::Finite(0.5 * (lo + hi))
        }
    };

    let curve = variogram(spec, case, theta, true_model, covariogram, lags)?;
    Ok(SpatialProfile {
        case,
        sill,
        nugget,
        effective_range,
        variogram: curve,
    })
}

/// Empirical moments with Monte-Carlo standard errors attached.
#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub variance: Vec<f64>,
    pub variance_se: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub covariance_se: DMatrix<f64>,
    pub draws: usize,
}

/// Brute-force generative oracle: simulates the inclusion vector, then the
/// data — parametrically where included (shared process draw plus nugget
/// noise), from the Gaussian surrogate where excluded — and reports
/// empirical moments. Independent of the closed-form calculators above.
#[allow(clippy::too_many_arguments)]
pub fn mc_generative_oracle(
    spec: &DesignSpec,
    theta: &Theta,
    true_model: &TrueModelSpec,
    x: &DMatrix<f64>,
    locs: &[Location],
    covariogram: Covariogram,
    draws: usize,
    seed: u64,
) -> Result<EmpiricalMoments> {
    let n_pop = locs.len();
    if spec.population() != n_pop {
        return Err(Error::DimensionMismatch {
            expected: n_pop,
            got: spec.population(),
            context: "design population",
        });
    }
    if draws < 2 {
        return Err(Error::InvalidParameter("need at least two draws".into()));
    }

    let trend: Vec<f64> = (0..n_pop)
        .map(|i| x.row(i).transpose().dot(&theta.beta))
        .collect();
    let h = covariogram.build_corr_matrix(locs, theta.phi)?;
    let l_param = cholesky(&h)?;
    let sigma = theta.sigma2.sqrt();
    let tau = theta.tau2.sqrt();

    let true_cov = SymMatrix::from_fn_symmetric(n_pop, |i, j| {
        true_model.cov_between(&locs[i], &locs[j], i == j)
    });
    let l_true = cholesky(&true_cov)?;

    let mut rng = crate::rng::substream(seed, &[crate::rng::purpose::ORACLE]);
    let mut samples = DMatrix::zeros(draws, n_pop);
    let mut z = vec![0.0; n_pop];
    let mut included = vec![false; n_pop];
    for d in 0..draws {
        let delta = spec.draw(&mut rng);
        // Full-population process draw; only included coordinates are read,
        // which has the same law as drawing the included block directly.
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let nu = l_param.l_mul_vec(&z);
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let y_true = l_true.l_mul_vec(&z);

        included.iter_mut().for_each(|b| *b = false);
        for &i in &delta.included {
            included[i] = true;
        }
        for i in 0..n_pop {
            samples[(d, i)] = if included[i] {
                let eps: f64 = StandardNormal.sample(&mut rng);
                trend[i] + sigma * nu[i] + tau * eps
            } else {
                true_model.mean_at(i) + y_true[i]
            };
        }
    }

    let m = draws as f64;
    let mut mean = vec![0.0; n_pop];
    let mut mean_se = vec![0.0; n_pop];
    let mut variance = vec![0.0; n_pop];
    let mut variance_se = vec![0.0; n_pop];
    for i in 0..n_pop {
        let col = samples.column(i);
        let mu = col.sum() / m;
        mean[i] = mu;
        let var = col.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / (m - 1.0);
        variance[i] = var;
        mean_se[i] = (var / m).sqrt();
        // SE of the variance estimate: spread of the squared deviations.
        let var_of_sq = col
            .iter()
            .map(|&v| {
                let s = (v - mu) * (v - mu) - var;
                s * s
            })
            .sum::<f64>()
            / (m - 1.0);
        variance_se[i] = (var_of_sq / m).sqrt();
    }

    let mut covariance = DMatrix::zeros(n_pop, n_pop);
    let mut covariance_se = DMatrix::zeros(n_pop, n_pop);
    for i in 0..n_pop {
        covariance[(i, i)] = variance[i];
        covariance_se[(i, i)] = variance_se[i];
        for j in 0..i {
            let mut acc = 0.0;
            for d in 0..draws {
                acc += (samples[(d, i)] - mean[i]) * (samples[(d, j)] - mean[j]);
            }
            let cov = acc / (m - 1.0);
            let mut acc_sq = 0.0;
            for d in 0..draws {
                let s = (samples[(d, i)] - mean[i]) * (samples[(d, j)] - mean[j]) - cov;
                acc_sq += s * s;
            }
            let se = (acc_sq / (m - 1.0) / m).sqrt();
            covariance[(i, j)] = cov;
            covariance[(j, i)] = cov;
            covariance_se[(i, j)] = se;
            covariance_se[(j, i)] = se;
        }
    }

    Ok(EmpiricalMoments {
        mean,
        mean_se,
        variance,
        variance_se,
        covariance,
        covariance_se,
        draws,
    })
}
