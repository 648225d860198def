//! Forecast-evaluation scores and chain diagnostics.
//!
//! Point scores (MAE, RMSE) take truth and prediction vectors; the
//! probabilistic scores (CRPS, interval score, coverage) take predictive
//! samples or central intervals derived from them. Which prediction target
//! feeds each score is the caller's explicit choice; nothing here defaults
//! silently.

use crate::error::{Error, Result};

/// One row of forecast scores over a set of evaluation locations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreReport {
    pub mae: f64,
    pub rmse: f64,
    pub crps: f64,
    pub interval_score: f64,
    pub coverage: f64,
    pub alpha: f64,
    pub n_eval: usize,
}

fn check_same_len(a: usize, b: usize, context: &'static str) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            got: b,
            context,
        });
    }
    if a == 0 {
        return Err(Error::InsufficientData(format!("{context}: empty input")));
    }
    Ok(())
}

/// Root mean square error, `sqrt(mean((truth - pred)^2))`.
pub fn rmse(truth: &[f64], predictions: &[f64]) -> Result<f64> {
    check_same_len(truth.len(), predictions.len(), "rmse")?;
    let acc: f64 = truth
        .iter()
        .zip(predictions)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    Ok((acc / truth.len() as f64).sqrt())
}

/// Mean absolute error.
pub fn mae(truth: &[f64], predictions: &[f64]) -> Result<f64> {
    check_same_len(truth.len(), predictions.len(), "mae")?;
    let acc: f64 = truth.iter().zip(predictions).map(|(t, p)| (t - p).abs()).sum();
    Ok(acc / truth.len() as f64)
}

/// Mean absolute pairwise difference over all ordered sample pairs
/// (including self-pairs), computed exactly via the sorted-order identity
/// `sum_{i,j} |x_i - x_j| = 2 * sum_k (2k - 1 - m) x_(k)`.
fn mean_abs_pair_diff(samples: &[f64]) -> f64 {
    let m = samples.len();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut acc = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        acc += (2.0 * (k + 1) as f64 - 1.0 - m as f64) * x;
    }
    2.0 * acc / (m as f64 * m as f64)
}

/// Empirical CRPS per location, `mean|X - y| - 0.5 * mean|X - X'|`,
/// averaged over locations. Each location needs at least two samples.
pub fn crps(samples_per_location: &[Vec<f64>], truth: &[f64]) -> Result<f64> {
    check_same_len(samples_per_location.len(), truth.len(), "crps")?;
    let mut acc = 0.0;
    for (samples, &y) in samples_per_location.iter().zip(truth) {
        if samples.len() < 2 {
            return Err(Error::TooFewSamples {
                need: 2,
                got: samples.len(),
            });
        }
        let m = samples.len() as f64;
        let term1: f64 = samples.iter().map(|&x| (x - y).abs()).sum::<f64>() / m;
        acc += term1 - 0.5 * mean_abs_pair_diff(samples);
    }
    Ok(acc / truth.len() as f64)
}

/// Interval score at level alpha, averaged over locations:
/// `(u - l) + (2/alpha)(l - y) 1{y < l} + (2/alpha)(y - u) 1{y > u}`.
pub fn interval_score(lower: &[f64], upper: &[f64], truth: &[f64], alpha: f64) -> Result<f64> {
    check_same_len(lower.len(), truth.len(), "interval_score lower")?;
    check_same_len(upper.len(), truth.len(), "interval_score upper")?;
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let mut acc = 0.0;
    for ((&l, &u), &y) in lower.iter().zip(upper).zip(truth) {
        let mut s = u - l;
        if y < l {
            s += 2.0 / alpha * (l - y);
        }
        if y > u {
            s += 2.0 / alpha * (y - u);
        }
        acc += s;
    }
    Ok(acc / truth.len() as f64)
}

/// Fraction of truths inside their `[lower, upper]` interval.
pub fn coverage(lower: &[f64], upper: &[f64], truth: &[f64]) -> Result<f64> {
    check_same_len(lower.len(), truth.len(), "coverage lower")?;
    check_same_len(upper.len(), truth.len(), "coverage upper")?;
    let hits = lower
        .iter()
        .zip(upper)
        .zip(truth)
        .filter(|((&l, &u), &y)| l <= y && y <= u)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Central `(alpha/2, 1 - alpha/2)` empirical interval of a sample, with
/// linear interpolation between order statistics.
pub fn central_interval(samples: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            need: 2,
            got: samples.len(),
        });
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((
        interpolated_quantile(&sorted, alpha / 2.0),
        interpolated_quantile(&sorted, 1.0 - alpha / 2.0),
    ))
}

fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    let h = (m as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= m {
        sorted[m - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Squared gap between consecutive prediction vectors of an ascending
/// subsample-size sweep: `(w_n - w_next)' (w_n - w_next)` per adjacent
/// pair.
pub fn pairwise_prediction_gap(predictions_per_n: &[Vec<f64>]) -> Result<Vec<f64>> {
    if predictions_per_n.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least two prediction vectors for pairwise gaps".into(),
        ));
    }
    let len = predictions_per_n[0].len();
    let mut out = Vec::with_capacity(predictions_per_n.len() - 1);
    for pair in predictions_per_n.windows(2) {
        check_same_len(pair[0].len(), len, "pairwise gap")?;
        check_same_len(pair[1].len(), len, "pairwise gap")?;
        let gap: f64 = pair[0]
            .iter()
            .zip(&pair[1])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        out.push(gap);
    }
    Ok(out)
}

/// Two-sample Kolmogorov-Smirnov statistic, `sup |F1 - F2|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("ks: empty sample".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let v = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= v {
            i += 1;
        }
        while j < sb.len() && sb[j] <= v {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(sup)
}

/// Two-sample KS critical value at level `alpha`:
/// `sqrt(-ln(alpha/2)/2) * sqrt((n1 + n2) / (n1 n2))`.
pub fn ks_critical(alpha: f64, n1: usize, n2: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n1 + n2) as f64 / (n1 as f64 * n2 as f64)).sqrt()
}

/// Gaussian kernel density estimate on a fixed grid.
#[derive(Debug, Clone)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

/// Silverman-bandwidth Gaussian KDE evaluated on `points` grid nodes
/// spanning the sample range plus three bandwidths.
pub fn gaussian_kde(samples: &[f64], points: usize) -> Result<DensityCurve> {
    gaussian_kde_on(samples, None, points)
}

fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let m = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / m;
    let sd = (sorted.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)).sqrt();
    let iqr = interpolated_quantile(sorted, 0.75) - interpolated_quantile(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * m.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        // Degenerate sample; any positive width gives a point spike.
        sorted[0].abs().max(1.0) * 1e-6
    }
}

fn gaussian_kde_on(
    samples: &[f64],
    grid: Option<&[f64]>,
    points: usize,
) -> Result<DensityCurve> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            need: 2,
            got: samples.len(),
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = silverman_bandwidth(&sorted);
    let grid: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => {
            let lo = sorted[0] - 3.0 * h;
            let hi = sorted[sorted.len() - 1] + 3.0 * h;
            (0..points)
                .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
                .collect()
        }
    };
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|&g| {
            let mut acc = 0.0;
            for &x in samples {
                let z = (g - x) / h;
                acc += (-0.5 * z * z).exp();
            }
            norm * acc
        })
        .collect();
    Ok(DensityCurve { grid, density })
}

/// Kept parameter draws of one chain, tagged with its inner-scan count.
#[derive(Debug, Clone)]
pub struct ChainDraws {
    pub inner_scans: usize,
    /// `(parameter name, kept draws)`, same parameter order in every chain.
    pub params: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct KsRow {
    pub param: String,
    pub inner_scans: usize,
    pub statistic: f64,
    pub critical_1pct: f64,
}

/// Per-parameter density curves on a grid shared across chains.
#[derive(Debug, Clone)]
pub struct ParamDensities {
    pub param: String,
    pub grid: Vec<f64>,
    /// `(inner scans, density values)` per chain.
    pub curves: Vec<(usize, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct KConsistency {
    pub rows: Vec<KsRow>,
    pub densities: Vec<ParamDensities>,
}

/// Compare the single-scan chain against each longer-scan counterpart:
/// a KS statistic per (parameter, scan count), plus density curves on a
/// shared grid for plotting. The chain with `inner_scans == 1` is the
/// baseline and must be present.
pub fn k_consistency_diagnostic(chains: &[ChainDraws]) -> Result<KConsistency> {
    let baseline = chains
        .iter()
        .find(|c| c.inner_scans == 1)
        .ok_or_else(|| Error::InvalidParameter("no baseline chain with K = 1".into()))?;
    for c in chains {
        if c.params.len() != baseline.params.len() {
            return Err(Error::DimensionMismatch {
                expected: baseline.params.len(),
                got: c.params.len(),
                context: "chain parameter count",
            });
        }
    }

    let mut rows = Vec::new();
    let mut densities = Vec::new();
    for (pi, (name, base_draws)) in baseline.params.iter().enumerate() {
        // Shared density grid over the union range of all chains.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in chains {
            for &v in &c.params[pi].1 {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let pad = 0.05 * (hi - lo).max(1e-12);
        let grid: Vec<f64> = (0..256)
            .map(|k| (lo - pad) + (hi - lo + 2.0 * pad) * k as f64 / 255.0)
            .collect();

        let mut curves = Vec::new();
        for c in chains {
            let draws = &c.params[pi].1;
            let curve = gaussian_kde_on(draws, Some(&grid), 0)?;
            curves.push((c.inner_scans, curve.density));
            if c.inner_scans != 1 {
                rows.push(KsRow {
                    param: name.clone(),
                    inner_scans: c.inner_scans,
                    statistic: ks_statistic(base_draws, draws)?,
                    critical_1pct: ks_critical(0.01, base_draws.len(), draws.len()),
                });
            }
        }
        densities.push(ParamDensities {
            param: name.clone(),
            grid,
            curves,
        });
    }
    Ok(KConsistency { rows, densities })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rmse_fixtures() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(
            rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(),
            (25.0_f64 / 2.0).sqrt(),
            max_relative = 1e-15
        );
        // Accumulation-order oracle: reversed inputs give the same value
        // to within floating-point reassociation noise.
        let truth: Vec<f64> = (0..101).map(|i| (i as f64 * 0.37).sin()).collect();
        let pred: Vec<f64> = (0..101).map(|i| (i as f64 * 0.11).cos()).collect();
        let fwd = rmse(&truth, &pred).unwrap();
        let rt: Vec<f64> = truth.iter().rev().copied().collect();
        let rp: Vec<f64> = pred.iter().rev().copied().collect();
        let rev = rmse(&rt, &rp).unwrap();
        assert!((fwd - rev).abs() < 1e-12);
    }

    #[test]
    fn mae_fixtures() {
        assert_eq!(mae(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mae(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(
            mae(&[3.0, 1.0], &[2.0, 2.0]).unwrap(),
            mae(&[1.0, 3.0], &[2.0, 2.0]).unwrap()
        );
    }

    #[test]
    fn crps_fixtures() {
        // All mass at the truth.
        assert_eq!(crps(&[vec![1.0, 1.0]], &[1.0]).unwrap(), 0.0);
        // Hand enumeration: samples {0, 2}, truth 1 ->
        // mean|X-1| - 0.5 * (0+2+2+0)/4 = 1 - 0.5 = 0.5.
        assert_relative_eq!(
            crps(&[vec![0.0, 2.0]], &[1.0]).unwrap(),
            0.5,
            max_relative = 1e-15
        );
        assert!(matches!(
            crps(&[vec![1.0]], &[1.0]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn crps_bounded_by_mean_abs_error() {
        let mut rng = crate::rng::substream(3, &[77]);
        use rand::Rng;
        for _ in 0..20 {
            let samples: Vec<f64> = (0..50).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let y = rng.random::<f64>();
            let c = crps(&[samples.clone()], &[y]).unwrap();
            let m1 = samples.iter().map(|&x| (x - y).abs()).sum::<f64>() / 50.0;
            assert!(c <= m1 + 1e-12);
            assert!(c >= 0.0);
        }
    }

    #[test]
    fn crps_sorted_identity_matches_brute_force() {
        let samples: Vec<f64> = vec![0.3, -1.2, 2.5, 0.0, 1.1, -0.4, 0.9];
        let m = samples.len() as f64;
        let mut brute = 0.0;
        for &a in &samples {
            for &b in &samples {
                brute += (a - b).abs();
            }
        }
        brute /= m * m;
        assert_relative_eq!(mean_abs_pair_diff(&samples), brute, max_relative = 1e-12);
    }

    #[test]
    fn interval_score_fixtures() {
        // Inside: just the width.
        assert_eq!(
            interval_score(&[0.0], &[1.0], &[0.5], 0.05).unwrap(),
            1.0
        );
        // Unit exceedance at alpha = 0.05 costs exactly 40.
        assert_relative_eq!(
            interval_score(&[0.0], &[1.0], &[2.0], 0.05).unwrap(),
            41.0,
            max_relative = 1e-15
        );
        // Any interior point scores lower than points outside.
        let inside = interval_score(&[0.0], &[1.0], &[0.99], 0.05).unwrap();
        let outside = interval_score(&[0.0], &[1.0], &[1.01], 0.05).unwrap();
        assert!(inside < outside);
    }

    #[test]
    fn coverage_fixtures() {
        assert_eq!(coverage(&[0.0, 0.0], &[1.0, 1.0], &[0.5, 0.7]).unwrap(), 1.0);
        assert_eq!(coverage(&[0.0, 0.0], &[1.0, 1.0], &[2.0, -1.0]).unwrap(), 0.0);
        assert_eq!(
            coverage(&[0.0, 0.0], &[1.0, 1.0], &[0.5, 2.0]).unwrap(),
            0.5
        );
    }

    #[test]
    fn scores_invariant_under_common_permutation() {
        let truth = vec![0.3, 1.8, -0.2, 0.9];
        let pred = vec![0.1, 2.0, 0.0, 1.2];
        let lower = vec![-1.0, 1.0, -0.5, 0.5];
        let upper = vec![1.0, 3.0, 0.5, 1.5];
        let perm = [2usize, 0, 3, 1];
        let pt: Vec<f64> = perm.iter().map(|&i| truth[i]).collect();
        let pp: Vec<f64> = perm.iter().map(|&i| pred[i]).collect();
        let pl: Vec<f64> = perm.iter().map(|&i| lower[i]).collect();
        let pu: Vec<f64> = perm.iter().map(|&i| upper[i]).collect();
        assert_relative_eq!(
            rmse(&truth, &pred).unwrap(),
            rmse(&pt, &pp).unwrap(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            mae(&truth, &pred).unwrap(),
            mae(&pt, &pp).unwrap(),
            max_relative = 1e-14
        );
        assert_eq!(
            coverage(&lower, &upper, &truth).unwrap(),
            coverage(&pl, &pu, &pt).unwrap()
        );
        assert_relative_eq!(
            interval_score(&lower, &upper, &truth, 0.05).unwrap(),
            interval_score(&pl, &pu, &pt, 0.05).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn central_interval_linear_interpolation() {
        let samples: Vec<f64> = (1..=5).map(|v| v as f64).collect();
        let (lo, hi) = central_interval(&samples, 0.5).unwrap();
        // Quantiles 0.25 and 0.75 of {1..5}: order-statistic interpolation
        // gives 2 and 4.
        assert_eq!(lo, 2.0);
        assert_eq!(hi, 4.0);
    }

    #[test]
    fn gap_fixtures() {
        assert_eq!(
            pairwise_prediction_gap(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap(),
            vec![0.0]
        );
        assert_eq!(
            pairwise_prediction_gap(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap(),
            vec![2.0]
        );
        // Invariant under a common permutation of locations.
        let a = vec![0.3, -0.1, 2.0];
        let b = vec![0.5, 0.2, 1.5];
        let g1 = pairwise_prediction_gap(&[a.clone(), b.clone()]).unwrap();
        let pa = vec![a[2], a[0], a[1]];
        let pb = vec![b[2], b[0], b[1]];
        let g2 = pairwise_prediction_gap(&[pa, pb]).unwrap();
        assert_relative_eq!(g1[0], g2[0], max_relative = 1e-15);
    }

    #[test]
    fn ks_fixtures() {
        let a: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        assert_eq!(ks_statistic(&a, &a).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
        assert_eq!(ks_statistic(&a, &b).unwrap(), 1.0);
        // Spot-check the critical value at alpha = 0.01.
        let crit = ks_critical(0.01, 2000, 2000);
        assert_relative_eq!(
            crit,
            1.6276236307187293 * (2.0_f64 / 2000.0).sqrt(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn ks_handles_ties() {
        let a = vec![1.0, 1.0, 1.0, 2.0];
        let b = vec![1.0, 2.0, 2.0, 2.0];
        // F_a(1) = 0.75, F_b(1) = 0.25 -> sup = 0.5.
        assert_relative_eq!(ks_statistic(&a, &b).unwrap(), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut rng = crate::rng::substream(8, &[88]);
        use rand_distr::{Distribution, StandardNormal};
        let samples: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let curve = gaussian_kde(&samples, 256).unwrap();
        let mut integral = 0.0;
        for w in curve.grid.windows(2).zip(curve.density.windows(2)) {
            let (g, d) = w;
            integral += 0.5 * (d[0] + d[1]) * (g[1] - g[0]);
        }
        assert!((integral - 1.0).abs() < 0.01, "integral {integral}");
    }

    #[test]
    fn k_diagnostic_self_and_disjoint() {
        let draws: Vec<f64> = (0..500).map(|i| (i as f64 * 0.618).fract()).collect();
        let shifted: Vec<f64> = draws.iter().map(|v| v + 5.0).collect();
        let chains = vec![
            ChainDraws {
                inner_scans: 1,
                params: vec![("tau2".into(), draws.clone()), ("sigma2".into(), draws.clone())],
            },
            ChainDraws {
                inner_scans: 5,
                params: vec![("tau2".into(), draws.clone()), ("sigma2".into(), shifted)],
            },
        ];
        let diag = k_consistency_diagnostic(&chains).unwrap();
        assert_eq!(diag.rows.len(), 2);
        let tau_row = diag.rows.iter().find(|r| r.param == "tau2").unwrap();
        assert_eq!(tau_row.statistic, 0.0);
        let sig_row = diag.rows.iter().find(|r| r.param == "sigma2").unwrap();
        assert_eq!(sig_row.statistic, 1.0);
        assert_eq!(diag.densities.len(), 2);
        assert_eq!(diag.densities[0].curves.len(), 2);
    }

    #[test]
    fn k_diagnostic_requires_baseline() {
        let chains = vec![ChainDraws {
            inner_scans: 5,
            params: vec![("tau2".into(), vec![1.0, 2.0])],
        }];
        assert!(k_consistency_diagnostic(&chains).is_err());
    }
}
