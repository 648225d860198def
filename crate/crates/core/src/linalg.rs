//! Dense symmetric positive-definite matrix operations.
//!
//! Everything downstream (Gaussian full conditionals, kriging weights, the
//! range-parameter mass) reduces to a Cholesky factor plus triangular
//! solves, so those kernels are written by hand over the column-major
//! storage with a fixed arithmetic order: results are bit-reproducible and
//! the inner loops auto-vectorize. All Gaussian densities are computed in
//! log space via [`CholFactor::log_det`]; no raw determinant is ever formed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for accepting a matrix as symmetric.
const SYMMETRY_RTOL: f64 = 1e-12;

/// Jitter ladder, as multiples of the mean diagonal. The first attempt is
/// always jitter-free; the ladder exists because near-duplicate locations
/// and predictive-variance matrices can be numerically singular.
const JITTER_LADDER: [f64; 7] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// A dense symmetric matrix, validated on construction.
#[derive(Debug, Clone)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    /// Wrap a dense matrix, checking squareness, finiteness, and symmetry
    /// within `1e-12` relative tolerance.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::InvalidParameter(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        for j in 0..n {
            for i in j..n {
                let a = m[(i, j)];
                let b = m[(j, i)];
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "non-finite entry at ({i},{j})"
                    )));
                }
                let scale = a.abs().max(b.abs()).max(1e-300);
                if (a - b).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::InvalidParameter(format!(
                        "asymmetric entries at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { m })
    }

    /// Build a symmetric matrix from a function of the index pair; `f` is
    /// evaluated once per unordered pair, so symmetry holds by construction.
    pub fn from_fn_symmetric(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(order, order);
        for j in 0..order {
            for i in j..order {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self { m }
    }

    pub fn order(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.m
    }
}

/// Lower-triangular Cholesky factor of `m + jitter * I`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    l: DMatrix<f64>,
    jitter: f64,
}

/// Factor a symmetric matrix, escalating through the jitter ladder
/// (`1e-10` to `1e-4` of the mean diagonal) if the jitter-free attempt
/// fails. The applied jitter is recorded on the factor, never silent.
pub fn cholesky(m: &SymMatrix) -> Result<CholFactor> {
    let n = m.order();
    let mean_diag = m.as_matrix().diagonal().sum() / n as f64;
    let mut max_tried = 0.0_f64;
    for (attempt, &mult) in std::iter::once(&0.0).chain(JITTER_LADDER.iter()).enumerate() {
        let jitter = mult * mean_diag;
        if attempt > 0 && !(jitter > 0.0) {
            break; // degenerate diagonal, jitter cannot help
        }
        max_tried = jitter;
        let mut a = m.as_matrix().clone();
        if jitter > 0.0 {
            for i in 0..n {
                a[(i, i)] += jitter;
            }
        }
        if chol_in_place(&mut a) {
            return Ok(CholFactor { l: a, jitter });
        }
    }
    Err(Error::NotPositiveDefinite {
        order: n,
        max_jitter: max_tried,
    })
}

/// In-place lower Cholesky, right-looking with contiguous column updates.
/// Returns false on a non-positive pivot. The strict upper triangle is left
/// untouched; callers must only read the lower part.
fn chol_in_place(a: &mut DMatrix<f64>) -> bool {
    let n = a.nrows();
    let s = a.as_mut_slice();
    for j in 0..n {
        let d = s[j * n + j];
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let ljj = d.sqrt();
        s[j * n + j] = ljj;
        let inv = 1.0 / ljj;
        for v in &mut s[j * n + j + 1..(j + 1) * n] {
            *v *= inv;
        }
        let (head, tail) = s.split_at_mut((j + 1) * n);
        let colj = &head[j * n..];
        for k in j + 1..n {
            let mult = -colj[k];
            if mult == 0.0 {
                continue;
            }
            let colk = &mut tail[(k - j - 1) * n..(k - j) * n];
            for (x, &lj) in colk[k..].iter_mut().zip(&colj[k..]) {
                *x = lj.mul_add(mult, *x);
            }
        }
    }
    true
}

impl CholFactor {
    pub fn order(&self) -> usize {
        self.l.nrows()
    }

    /// Ridge added to the diagonal before factorization (0 when none).
    pub fn jitter_applied(&self) -> f64 {
        self.jitter
    }

    /// The lower-triangular factor; entries above the diagonal are garbage.
    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `log det (m + jitter I) = 2 * sum(log diag(L))`.
    pub fn log_det(&self) -> f64 {
        let n = self.order();
        let s = self.l.as_slice();
        let mut acc = 0.0;
        for j in 0..n {
            acc += s[j * n + j].ln();
        }
        2.0 * acc
    }

    /// Solve `(m + jitter I) x = b`.
    pub fn solve_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.order() {
            return Err(Error::DimensionMismatch {
                expected: self.order(),
                got: b.len(),
                context: "CholFactor::solve_vec",
            });
        }
        let mut x = b.clone();
        self.solve_lower_in_place(x.as_mut_slice());
        self.solve_upper_in_place(x.as_mut_slice());
        Ok(x)
    }

    /// Solve `(m + jitter I) X = B` column by column.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.order() {
            return Err(Error::DimensionMismatch {
                expected: self.order(),
                got: b.nrows(),
                context: "CholFactor::solve_mat",
            });
        }
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            let col = col.as_mut_slice();
            self.solve_lower_in_place(col);
            self.solve_upper_in_place(col);
        }
        Ok(x)
    }

    /// Forward substitution `L x = b`, in place.
    pub fn solve_lower_in_place(&self, x: &mut [f64]) {
        let n = self.order();
        assert_eq!(x.len(), n, "rhs length mismatch");
        let s = self.l.as_slice();
        for j in 0..n {
            let col = &s[j * n..(j + 1) * n];
            let t = x[j] / col[j];
            x[j] = t;
            let neg = -t;
            for (xi, &lij) in x[j + 1..].iter_mut().zip(&col[j + 1..]) {
                *xi = lij.mul_add(neg, *xi);
            }
        }
    }

    /// Forward substitution for `lanes` interleaved right-hand sides:
    /// `x[i * lanes + t]` holds rhs `t` at row `i`. Each rhs undergoes
    /// exactly the arithmetic of [`CholFactor::solve_lower_in_place`], so
    /// the results are bitwise identical to solving the lanes one at a
    /// time; the interleaving only lets the row updates vectorize across
    /// lanes and reuse each factor column. Full 8-lane blocks take a
    /// compile-time-width path.
    pub fn solve_lower_interleaved(&self, x: &mut [f64], lanes: usize) {
        match lanes {
            0 => {}
            8 => self.solve_lower_lanes::<8>(x),
            _ => self.solve_lower_lanes_dyn(x, lanes),
        }
    }

    fn solve_lower_lanes<const LANES: usize>(&self, x: &mut [f64]) {
        let n = self.order();
        assert_eq!(x.len(), n * LANES, "rhs block size mismatch");
        let (rows, rem) = x.as_chunks_mut::<LANES>();
        debug_assert!(rem.is_empty());
        let s = self.l.as_slice();

        // Single-column pass over rows j+1.., used for the panel remainder.
        let single = |rows: &mut [[f64; LANES]], j: usize| {
            let col = &s[j * n..(j + 1) * n];
            let piv = col[j];
            let (head, tail) = rows.split_at_mut(j + 1);
            let tj = &mut head[j];
            for t in tj.iter_mut() {
                *t /= piv;
            }
            let mut neg = *tj;
            for t in neg.iter_mut() {
                *t = -*t;
            }
            for (row, &lij) in tail.iter_mut().zip(&col[j + 1..]) {
                for t in 0..LANES {
                    row[t] = neg[t].mul_add(lij, row[t]);
                }
            }
        };

        // Panels of four pivot columns: the 4x4 head is eliminated in
        // exact column order, then every remaining row takes its four
        // updates in that same order, one row visit instead of four.
        let mut j = 0;
        while j + 4 <= n {
            let col = |m: usize| &s[(j + m) * n..(j + m + 1) * n];
            let mut negs = [[0.0; LANES]; 4];
            for m in 0..4 {
                let cm = col(m);
                let piv = cm[j + m];
                let (head, tail) = rows.split_at_mut(j + m + 1);
                let tm = &mut head[j + m];
                for t in tm.iter_mut() {
                    *t /= piv;
                }
                for t in 0..LANES {
                    negs[m][t] = -tm[t];
                }
                // Update the rest of the panel head only; tail rows are
                // handled in the fused pass below.
                for (i, row) in (j + m + 1..j + 4).zip(tail.iter_mut()) {
                    let lim = cm[i];
                    for t in 0..LANES {
                        row[t] = negs[m][t].mul_add(lim, row[t]);
                    }
                }
            }
            let (c0, c1, c2, c3) = (col(0), col(1), col(2), col(3));
            let tail = &mut rows[j + 4..];
            for (off, row) in tail.iter_mut().enumerate() {
                let i = j + 4 + off;
                let (l0, l1, l2, l3) = (c0[i], c1[i], c2[i], c3[i]);
                for t in 0..LANES {
                    let mut v = row[t];
                    v = negs[0][t].mul_add(l0, v);
                    v = negs[1][t].mul_add(l1, v);
                    v = negs[2][t].mul_add(l2, v);
                    v = negs[3][t].mul_add(l3, v);
                    row[t] = v;
                }
            }
            j += 4;
        }
        while j < n {
            single(rows, j);
            j += 1;
        }
    }

    fn solve_lower_lanes_dyn(&self, x: &mut [f64], lanes: usize) {
        let n = self.order();
        assert_eq!(x.len(), n * lanes, "rhs block size mismatch");
        let s = self.l.as_slice();
        for j in 0..n {
            let col = &s[j * n..(j + 1) * n];
            let piv = col[j];
            let (head, tail) = x.split_at_mut((j + 1) * lanes);
            let tj = &mut head[j * lanes..];
            for t in tj.iter_mut() {
                *t /= piv;
            }
            for (i, &lij) in (j + 1..n).zip(&col[j + 1..]) {
                let row = &mut tail[(i - j - 1) * lanes..(i - j) * lanes];
                for (xv, &tv) in row.iter_mut().zip(tj.iter()) {
                    *xv = (-tv).mul_add(lij, *xv);
                }
            }
        }
    }

    /// Backward substitution `L' x = b`, in place.
    pub fn solve_upper_in_place(&self, x: &mut [f64]) {
        let n = self.order();
        assert_eq!(x.len(), n, "rhs length mismatch");
        let s = self.l.as_slice();
        for j in (0..n).rev() {
            let col = &s[j * n..(j + 1) * n];
            let mut acc = 0.0;
            for (&lij, &xi) in col[j + 1..].iter().zip(&x[j + 1..]) {
                acc += lij * xi;
            }
            x[j] = (x[j] - acc) / col[j];
        }
    }

    /// Quadratic form `x' (m + jitter I)^-1 x = ||L^-1 x||^2`.
    pub fn inv_quad_form(&self, x: &[f64]) -> f64 {
        let mut v = x.to_vec();
        self.solve_lower_in_place(&mut v);
        v.iter().map(|&t| t * t).sum()
    }

    /// `L' L` as a full symmetric matrix.
    pub fn lt_l(&self) -> DMatrix<f64> {
        let n = self.order();
        let s = self.l.as_slice();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                // (L'L)_{ij} = sum_{k >= i} L_{k,i} L_{k,j}  (j <= i)
                let a = &s[i * n + i..(i + 1) * n];
                let b = &s[j * n + i..(j + 1) * n];
                let mut acc = 0.0;
                for (&x, &y) in a.iter().zip(b) {
                    acc += x * y;
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc;
            }
        }
        out
    }

    /// `L' b`.
    pub fn lt_mul_vec(&self, b: &[f64]) -> DVector<f64> {
        let n = self.order();
        assert_eq!(b.len(), n);
        let s = self.l.as_slice();
        let mut out = DVector::zeros(n);
        for i in 0..n {
            let col = &s[i * n + i..(i + 1) * n];
            let mut acc = 0.0;
            for (&lki, &bk) in col.iter().zip(&b[i..]) {
                acc += lki * bk;
            }
            out[i] = acc;
        }
        out
    }

    /// `L w`.
    pub fn l_mul_vec(&self, w: &[f64]) -> DVector<f64> {
        let n = self.order();
        assert_eq!(w.len(), n);
        let s = self.l.as_slice();
        let mut out = vec![0.0; n];
        for j in 0..n {
            let wj = w[j];
            if wj == 0.0 {
                continue;
            }
            let col = &s[j * n + j..(j + 1) * n];
            for (o, &lij) in out[j..].iter_mut().zip(col) {
                *o += lij * wj;
            }
        }
        DVector::from_vec(out)
    }

    /// `L L'`, for reconstruction checks.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.order();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                // sum_{k <= j} L_{i,k} L_{j,k}
                let mut acc = 0.0;
                for k in 0..=j {
                    acc += self.l[(i, k)] * self.l[(j, k)];
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_spd(n: usize, seed: u64) -> SymMatrix {
        let mut rng = crate::rng::substream(seed, &[0xabcd]);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let mut m = &b * b.transpose();
        for i in 0..n {
            m[(i, i)] += 0.5 * n as f64;
        }
        SymMatrix::new(m).unwrap()
    }

    #[test]
    fn identity_factors_without_jitter() {
        let m = SymMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let f = cholesky(&m).unwrap();
        assert_eq!(f.jitter_applied(), 0.0);
        for i in 0..3 {
            for j in 0..=i {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(f.l()[(i, j)], expect);
            }
        }
    }

    #[test]
    fn hand_cholesky_2x2() {
        // [[4,2],[2,3]] -> L = [[2,0],[1,sqrt(2)]]
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0])).unwrap();
        let f = cholesky(&m).unwrap();
        assert_relative_eq!(f.l()[(0, 0)], 2.0, max_relative = 1e-15);
        assert_relative_eq!(f.l()[(1, 0)], 1.0, max_relative = 1e-15);
        assert_relative_eq!(f.l()[(1, 1)], 2.0_f64.sqrt(), max_relative = 1e-15);
        let r = f.reconstruct();
        assert_relative_eq!(r[(0, 0)], 4.0, max_relative = 1e-12);
        assert_relative_eq!(r[(1, 0)], 2.0, max_relative = 1e-12);
    }

    #[test]
    fn rank_deficient_takes_jitter_path() {
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        // Eigen check: smallest eigenvalue is exactly 0, so the jitter-free
        // attempt cannot succeed.
        let eig = nalgebra::SymmetricEigen::new(m.as_matrix().clone());
        assert!(eig.eigenvalues.min() <= 0.0);
        let f = cholesky(&m).unwrap();
        assert!(f.jitter_applied() > 0.0);
        let r = f.reconstruct();
        let mut target = m.as_matrix().clone();
        for i in 0..2 {
            target[(i, i)] += f.jitter_applied();
        }
        let err = (&r - &target).norm() / target.norm();
        assert!(err < 1e-8, "reconstruction error {err}");
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(SymMatrix::new(m).is_err());
    }

    #[test]
    fn solve_identity() {
        let f = cholesky(&SymMatrix::new(DMatrix::identity(2, 2)).unwrap()).unwrap();
        let x = f.solve_vec(&DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(x[0], 1.0);
        assert_eq!(x[1], 2.0);
    }

    #[test]
    fn solve_2x2_analytic() {
        // [[4,2],[2,3]]^-1 (1,0)' = (3/8, -1/4)'
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0])).unwrap();
        let f = cholesky(&m).unwrap();
        let x = f.solve_vec(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_relative_eq!(x[0], 0.375, max_relative = 1e-14);
        assert_relative_eq!(x[1], -0.25, max_relative = 1e-14);
    }

    #[test]
    fn solve_round_trip_5x5() {
        let m = random_spd(5, 11);
        let f = cholesky(&m).unwrap();
        let x_true = DVector::from_vec((0..5).map(|i| i as f64 - 1.7).collect());
        let b = m.as_matrix() * &x_true;
        let x = f.solve_vec(&b).unwrap();
        assert!((&x - &x_true).norm() / x_true.norm() < 1e-8);
    }

    #[test]
    fn solve_dimension_mismatch() {
        let f = cholesky(&SymMatrix::new(DMatrix::identity(3, 3)).unwrap()).unwrap();
        let err = f.solve_vec(&DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn log_det_identity_and_diagonal() {
        let f = cholesky(&SymMatrix::new(DMatrix::identity(4, 4)).unwrap()).unwrap();
        assert_eq!(f.log_det(), 0.0);
        let d = SymMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 8.0])))
            .unwrap();
        assert_relative_eq!(cholesky(&d).unwrap().log_det(), 16.0_f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn log_det_matches_eigenvalues() {
        for &n in &[4, 16, 64] {
            let m = random_spd(n, 100 + n as u64);
            let f = cholesky(&m).unwrap();
            assert_eq!(f.jitter_applied(), 0.0);
            let eig = nalgebra::SymmetricEigen::new(m.as_matrix().clone());
            let oracle: f64 = eig.eigenvalues.iter().map(|&e| e.ln()).sum();
            assert_relative_eq!(f.log_det(), oracle, max_relative = 1e-7);
        }
    }

    #[test]
    fn round_trip_up_to_order_512() {
        for &n in &[1usize, 2, 3, 8, 33, 129, 512] {
            let m = random_spd(n, 7000 + n as u64);
            let f = cholesky(&m).unwrap();
            let mut rng = crate::rng::substream(n as u64, &[0x51]);
            let x_true = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let b = m.as_matrix() * &x_true;
            let x = f.solve_vec(&b).unwrap();
            let rel = (&x - &x_true).norm() / x_true.norm();
            assert!(rel < 1e-7, "order {n}: rel error {rel}");
        }
    }

    #[test]
    fn interleaved_solve_is_bitwise_identical_to_scalar() {
        for &(n, lanes) in &[(17usize, 8usize), (64, 8), (33, 5), (9, 1)] {
            let m = random_spd(n, 400 + n as u64);
            let f = cholesky(&m).unwrap();
            let mut rng = crate::rng::substream(n as u64, &[lanes as u64]);
            let cols: Vec<Vec<f64>> = (0..lanes)
                .map(|_| (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
                .collect();
            let mut interleaved = vec![0.0; n * lanes];
            for (t, c) in cols.iter().enumerate() {
                for (i, &v) in c.iter().enumerate() {
                    interleaved[i * lanes + t] = v;
                }
            }
            f.solve_lower_interleaved(&mut interleaved, lanes);
            for (t, c) in cols.iter().enumerate() {
                let mut solo = c.clone();
                f.solve_lower_in_place(&mut solo);
                for i in 0..n {
                    assert_eq!(
                        interleaved[i * lanes + t],
                        solo[i],
                        "n={n} lanes={lanes} lane {t} row {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn triangular_helpers_agree_with_dense_algebra() {
        let m = random_spd(9, 31);
        let f = cholesky(&m).unwrap();
        let mut rng = crate::rng::substream(31, &[9]);
        let b: Vec<f64> = (0..9).map(|_| rng.random::<f64>() - 0.5).collect();
        let bv = DVector::from_vec(b.clone());

        // Dense lower-triangular copy for the oracle.
        let mut l = DMatrix::zeros(9, 9);
        for i in 0..9 {
            for j in 0..=i {
                l[(i, j)] = f.l()[(i, j)];
            }
        }
        assert!((f.lt_mul_vec(&b) - l.transpose() * &bv).norm() < 1e-12);
        assert!((f.l_mul_vec(&b) - &l * &bv).norm() < 1e-12);
        assert!((f.lt_l() - l.transpose() * &l).norm() < 1e-12);

        let q = f.inv_quad_form(&b);
        let hx = f.solve_vec(&bv).unwrap();
        assert_relative_eq!(q, bv.dot(&hx), max_relative = 1e-10);
    }
}
