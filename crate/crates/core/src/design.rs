//! Sampling designs for the inclusion vector and their closed-form moments.
//!
//! Two designs: simple random sampling without replacement over the whole
//! population, and independent SRS within each cell of a partition. Draws
//! use Floyd's subset-sampling algorithm, so cost and extra memory are
//! O(sample size) no matter how large the population is; a full-population
//! shuffle would forfeit the N-free iteration cost downstream.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

/// One realized inclusion set: the population indices where delta = 1,
/// sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaDraw {
    pub included: Vec<usize>,
}

/// Coefficient triple for the de-trended covariance of an index pair:
/// `weight_true * C_true + weight_param * sigma2 * h_ij`, with
/// `weight_cross` multiplying the mean-difference cross product in the
/// un-de-trended covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignCoefficients {
    pub weight_true: f64,
    pub weight_param: f64,
    pub weight_cross: f64,
}

/// First and second moments of the inclusion vector under a design.
/// Dense matrices: this is the test-oracle layer, used at small N.
#[derive(Debug, Clone)]
pub struct DesignMoments {
    pub incl_prob: Vec<f64>,
    pub incl_var: Vec<f64>,
    pub joint_prob: DMatrix<f64>,
    pub cov: DMatrix<f64>,
}

/// Stratified design: a dense partition label per population index plus
/// per-stratum allocations.
#[derive(Debug, Clone)]
pub struct StratifiedDesign {
    labels: Vec<u32>,
    members: Vec<Vec<u32>>,
    allocations: Vec<usize>,
}

#[derive(Debug, Clone)]
pub enum DesignSpec {
    Srs { population: usize, sample: usize },
    Stratified(StratifiedDesign),
}

impl DesignSpec {
    pub fn srs(population: usize, sample: usize) -> Result<Self> {
        if population == 0 {
            return Err(Error::InvalidAllocation("population must be non-empty".into()));
        }
        if sample > population {
            return Err(Error::InvalidAllocation(format!(
                "sample size {sample} exceeds population {population}"
            )));
        }
        Ok(DesignSpec::Srs { population, sample })
    }

    /// Stratified design from per-index labels (dense ids `0..R`, every
    /// stratum non-empty) and explicit per-stratum allocations.
    pub fn stratified(labels: Vec<u32>, allocations: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidAllocation("population must be non-empty".into()));
        }
        let r = allocations.len();
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); r];
        for (i, &lab) in labels.iter().enumerate() {
            let lab = lab as usize;
            if lab >= r {
                return Err(Error::InvalidAllocation(format!(
                    "index {i} has stratum label {lab}, but only {r} allocations given"
                )));
            }
            members[lab].push(i as u32);
        }
        for (s, (m, &a)) in members.iter().zip(&allocations).enumerate() {
            if m.is_empty() {
                return Err(Error::InvalidAllocation(format!("stratum {s} is empty")));
            }
            if a > m.len() {
                return Err(Error::InvalidAllocation(format!(
                    "stratum {s}: allocation {a} exceeds stratum size {}",
                    m.len()
                )));
            }
        }
        Ok(DesignSpec::Stratified(StratifiedDesign {
            labels,
            members,
            allocations,
        }))
    }

    /// Stratified design with the total split equally across strata
    /// (remainder round-robin from stratum 0).
    pub fn stratified_equal(labels: Vec<u32>, total: usize) -> Result<Self> {
        let r = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        if r == 0 {
            return Err(Error::InvalidAllocation("population must be non-empty".into()));
        }
        let base = total / r;
        let rem = total % r;
        let alloc: Vec<usize> = (0..r).map(|s| base + usize::from(s < rem)).collect();
        Self::stratified(labels, alloc)
    }

    /// Stratified design with allocations proportional to stratum sizes
    /// (largest-remainder rounding).
    pub fn stratified_proportional(labels: Vec<u32>, total: usize) -> Result<Self> {
        let r = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        if r == 0 {
            return Err(Error::InvalidAllocation("population must be non-empty".into()));
        }
        let n_pop = labels.len();
        let mut sizes = vec![0usize; r];
        for &l in &labels {
            sizes[l as usize] += 1;
        }
        let mut alloc: Vec<usize> = sizes
            .iter()
            .map(|&sz| total * sz / n_pop)
            .collect();
        let mut remainders: Vec<(usize, f64)> = sizes
            .iter()
            .enumerate()
            .map(|(s, &sz)| {
                let exact = total as f64 * sz as f64 / n_pop as f64;
                (s, exact - alloc[s] as f64)
            })
            .collect();
        remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut short = total - alloc.iter().sum::<usize>();
        for &(s, _) in &remainders {
            if short == 0 {
                break;
            }
            if alloc[s] < sizes[s] {
                alloc[s] += 1;
                short -= 1;
            }
        }
        Self::stratified(labels, alloc)
    }

    pub fn population(&self) -> usize {
        match self {
            DesignSpec::Srs { population, .. } => *population,
            DesignSpec::Stratified(s) => s.labels.len(),
        }
    }

    pub fn sample_size(&self) -> usize {
        match self {
            DesignSpec::Srs { sample, .. } => *sample,
            DesignSpec::Stratified(s) => s.allocations.iter().sum(),
        }
    }

    pub fn num_strata(&self) -> usize {
        match self {
            DesignSpec::Srs { .. } => 1,
            DesignSpec::Stratified(s) => s.allocations.len(),
        }
    }

    pub fn stratum_of(&self, index: usize) -> usize {
        match self {
            DesignSpec::Srs { .. } => 0,
            DesignSpec::Stratified(s) => s.labels[index] as usize,
        }
    }

    /// Per-stratum (allocation, size); a single pseudo-stratum for SRS.
    pub fn stratum_fractions(&self) -> Vec<(usize, usize)> {
        match self {
            DesignSpec::Srs { population, sample } => vec![(*sample, *population)],
            DesignSpec::Stratified(s) => s
                .allocations
                .iter()
                .zip(&s.members)
                .map(|(&a, m)| (a, m.len()))
                .collect(),
        }
    }

    /// Draw one inclusion set. Deterministic for a fixed generator state;
    /// cardinality invariants hold exactly by construction.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DeltaDraw {
        match self {
            DesignSpec::Srs { population, sample } => {
                let mut included = floyd_subset(*population, *sample, rng);
                included.sort_unstable();
                DeltaDraw { included }
            }
            DesignSpec::Stratified(s) => {
                let mut included = Vec::with_capacity(self.sample_size());
                for (members, &alloc) in s.members.iter().zip(&s.allocations) {
                    for pos in floyd_subset(members.len(), alloc, rng) {
                        included.push(members[pos] as usize);
                    }
                }
                included.sort_unstable();
                DeltaDraw { included }
            }
        }
    }
}

/// Floyd's algorithm: a uniform size-`n` subset of `0..population` using
/// exactly `n` generator calls and O(n) memory.
fn floyd_subset<R: Rng + ?Sized>(population: usize, n: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(n <= population);
    let mut chosen: HashSet<usize> = HashSet::with_capacity(n * 2);
    let mut out = Vec::with_capacity(n);
    for j in population - n..population {
        let t = rng.random_range(0..=j);
        let pick = if chosen.contains(&t) { j } else { t };
        chosen.insert(pick);
        out.push(pick);
    }
    out
}

/// Convenience wrapper: one SRS draw from its own substream.
pub fn draw_srs(population: usize, sample: usize, seed: u64) -> Result<DeltaDraw> {
    let spec = DesignSpec::srs(population, sample)?;
    let mut rng = crate::rng::substream(seed, &[crate::rng::purpose::DESIGN]);
    Ok(spec.draw(&mut rng))
}

/// Convenience wrapper: one stratified draw from its own substream.
pub fn draw_stratified(spec: &DesignSpec, seed: u64) -> Result<DeltaDraw> {
    match spec {
        DesignSpec::Stratified(_) => {
            let mut rng = crate::rng::substream(seed, &[crate::rng::purpose::DESIGN]);
            Ok(spec.draw(&mut rng))
        }
        DesignSpec::Srs { .. } => Err(Error::InvalidAllocation(
            "draw_stratified requires a stratified design".into(),
        )),
    }
}

/// Joint inclusion probability of two distinct indices drawn by SRS
/// without replacement: `(n/N) * (n-1)/(N-1)`.
fn srs_joint(n: usize, pop: usize) -> f64 {
    if pop < 2 {
        // A single-unit population has no distinct pairs; the value is
        // unused but must not be NaN when tabulated.
        return 0.0;
    }
    let p = n as f64 / pop as f64;
    p * ((n as f64 - 1.0) / (pop as f64 - 1.0))
}

fn srs_triple(n: usize, pop: usize) -> DesignCoefficients {
    let p = n as f64 / pop as f64;
    let joint = srs_joint(n, pop);
    let a = joint - 2.0 * p + 1.0;
    let b = joint - p * p;
    DesignCoefficients {
        weight_true: a,
        weight_param: b + p * p, // = joint
        weight_cross: b,
    }
}

/// Closed-form E, Var, joint and covariance of the inclusion vector.
pub fn design_moments(spec: &DesignSpec) -> DesignMoments {
    let n_pop = spec.population();
    let mut incl_prob = vec![0.0; n_pop];
    let mut incl_var = vec![0.0; n_pop];
    let fractions = spec.stratum_fractions();
    for i in 0..n_pop {
        let (nr, cap) = fractions[spec.stratum_of(i)];
        let p = nr as f64 / cap as f64;
        incl_prob[i] = p;
        incl_var[i] = p * (1.0 - p);
    }
    let mut joint_prob = DMatrix::zeros(n_pop, n_pop);
    let mut cov = DMatrix::zeros(n_pop, n_pop);
    for i in 0..n_pop {
        joint_prob[(i, i)] = incl_prob[i];
        cov[(i, i)] = incl_var[i];
        for j in 0..i {
            let ri = spec.stratum_of(i);
            let rj = spec.stratum_of(j);
            let jp = if ri == rj {
                let (nr, cap) = fractions[ri];
                srs_joint(nr, cap)
            } else {
                incl_prob[i] * incl_prob[j]
            };
            let cv = jp - incl_prob[i] * incl_prob[j];
            joint_prob[(i, j)] = jp;
            joint_prob[(j, i)] = jp;
            cov[(i, j)] = cv;
            cov[(j, i)] = cv;
        }
    }
    DesignMoments {
        incl_prob,
        incl_var,
        joint_prob,
        cov,
    }
}

/// De-trended-covariance weights for a distinct index pair.
pub fn design_coefficients(spec: &DesignSpec, i: usize, j: usize) -> DesignCoefficients {
    debug_assert_ne!(i, j, "pair coefficients are defined for distinct indices");
    match spec {
        DesignSpec::Srs { population, sample } => srs_triple(*sample, *population),
        DesignSpec::Stratified(s) => {
            let ri = s.labels[i] as usize;
            let rj = s.labels[j] as usize;
            if ri == rj {
                srs_triple(s.allocations[ri], s.members[ri].len())
            } else {
                let pr = s.allocations[ri] as f64 / s.members[ri].len() as f64;
                let pt = s.allocations[rj] as f64 / s.members[rj].len() as f64;
                DesignCoefficients {
                    weight_true: pr * pt - pr - pt + 1.0,
                    weight_param: pr * pt,
                    weight_cross: 0.0,
                }
            }
        }
    }
}

/// Coefficients by stratum pair rather than index pair: `(r, r)` for a
/// same-stratum pair, `(r, t)` for a cross-stratum pair. For SRS use
/// `(0, 0)`. This is the lag-profile counterpart of
/// [`design_coefficients`].
pub fn case_coefficients(spec: &DesignSpec, r: usize, t: usize) -> DesignCoefficients {
    let fractions = spec.stratum_fractions();
    if r == t {
        let (nr, cap) = fractions[r];
        srs_triple(nr, cap)
    } else {
        let (nr, capr) = fractions[r];
        let (nt, capt) = fractions[t];
        let pr = nr as f64 / capr as f64;
        let pt = nt as f64 / capt as f64;
        DesignCoefficients {
            weight_true: pr * pt - pr - pt + 1.0,
            weight_param: pr * pt,
            weight_cross: 0.0,
        }
    }
}
