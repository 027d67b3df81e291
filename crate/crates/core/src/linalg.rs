//! Dense f64 linear algebra: Gram eigendecomposition by cyclic Jacobi,
//! numerical rank, leverage scores, column normalization and the stable
//! softmax / sigmoid used by the network.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds a matrix from row-major data, rejecting length mismatches and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix construction"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Matrix::from_vec(r, c, rows.concat())
    }

    /// Builds a `rows x cols` matrix from column-major data.
    pub fn from_col_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        let mut m = Matrix::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[i * cols + j] = data[j * rows + i];
            }
        }
        if m.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix construction"));
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Column-major copy of the entries.
    pub fn to_col_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self.get(i, j));
            }
        }
        out
    }

    /// New matrix built from the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            let src = self.row(i);
            let dst = m.row_mut(i);
            for (d, &j) in dst.iter_mut().zip(cols) {
                *d = src[j];
            }
        }
        m
    }

    /// Horizontal concatenation of matrices sharing a row count.
    pub fn hconcat(parts: &[Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if parts.iter().any(|m| m.rows != rows) {
            return Err(Error::Shape("hconcat row counts differ".into()));
        }
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for p in parts {
                out.row_mut(i)[off..off + p.cols].copy_from_slice(p.row(i));
                off += p.cols;
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), dst);
            }
        }
        Ok(out)
    }

    /// `selfᵀ * other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, b_row, &mut out.data[i * other.cols..(i + 1) * other.cols]);
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
/// Row `h` of `eigenvectors` pairs with `eigenvalues[h]`.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigendecomposition of the Gram matrix `AᵀA` by cyclic Jacobi rotations.
/// Small negative eigenvalues are rounding noise on a PSD matrix and are
/// clamped to zero.
pub fn gram_eigen(a: &Matrix) -> Result<EigenResult> {
    if a.cols() == 0 {
        return Err(Error::Empty("gram_eigen needs at least one column"));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("gram_eigen input"));
    }
    let gram = a.t_matmul(a)?;
    let mut eig = symmetric_eigen(&gram, JACOBI_MAX_SWEEPS).map_err(|e| match e {
        Error::NoConvergence { sweeps, .. } => {
            Error::NoConvergence { rows: a.rows(), cols: a.cols(), sweeps }
        }
        other => other,
    })?;
    for v in &mut eig.eigenvalues {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(eig)
}

/// Cyclic Jacobi eigensolver for a symmetric matrix.
pub fn symmetric_eigen(sym: &Matrix, max_sweeps: usize) -> Result<EigenResult> {
    let n = sym.rows();
    if n != sym.cols() {
        return Err(Error::Shape(format!("{}x{} matrix is not square", n, sym.cols())));
    }
    let mut a = sym.clone();
    // Columns of `v` accumulate the rotations; column k is eigenvector k.
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();
    // Off-diagonal entries below this are zeroed without rotating.
    let negligible = f64::EPSILON * 1e-3 * scale;
    let mut sweep = 0;
    loop {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq.abs() <= negligible {
                    a.set(p, q, 0.0);
                    a.set(q, p, 0.0);
                    continue;
                }
                if sweep == max_sweeps {
                    return Err(Error::NoConvergence { rows: n, cols: n, sweeps: max_sweeps });
                }
                rotated = true;
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
        if !rotated {
            break;
        }
        sweep += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)).then(i.cmp(&j)));
    let eigenvalues = order.iter().map(|&k| a.get(k, k)).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (h, &k) in order.iter().enumerate() {
        for j in 0..n {
            eigenvectors.set(h, j, v.get(j, k));
        }
    }
    Ok(EigenResult { eigenvalues, eigenvectors })
}

/// Tolerance used by [`numerical_rank`]: `λ_max · n · ε`.
pub fn rank_tolerance(eigenvalues: &[f64], n: usize) -> f64 {
    eigenvalues.first().copied().unwrap_or(0.0) * n as f64 * f64::EPSILON
}

/// Number of eigenvalues above `λ_max · n · ε`.
pub fn numerical_rank(eigenvalues: &[f64], n: usize) -> usize {
    numerical_rank_with_tol(eigenvalues, rank_tolerance(eigenvalues, n))
}

pub fn numerical_rank_with_tol(eigenvalues: &[f64], tol: f64) -> usize {
    eigenvalues.iter().filter(|&&l| l > tol).count()
}

/// Column leverage scores `s_j = (1/k) Σ_{h<k} V_hj²` from the top `k`
/// eigenvector rows.
pub fn leverage_scores(eig: &EigenResult, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::ZeroRank);
    }
    let v = &eig.eigenvectors;
    if k > v.rows() {
        return Err(Error::InvalidArgument(format!(
            "rank {k} exceeds {} eigenvectors",
            v.rows()
        )));
    }
    let mut scores = vec![0.0; v.cols()];
    for h in 0..k {
        for (s, x) in scores.iter_mut().zip(v.row(h)) {
            *s += x * x;
        }
    }
    let inv = 1.0 / k as f64;
    scores.iter_mut().for_each(|s| *s *= inv);
    Ok(scores)
}

pub fn l2_normalize_columns(m: &Matrix) -> Result<Matrix> {
    let norms = column_norms(m);
    if let Some(column) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroColumn { column });
    }
    let mut out = m.clone();
    let inv: Vec<f64> = norms.iter().map(|n| 1.0 / n).collect();
    for i in 0..out.rows() {
        for (x, s) in out.row_mut(i).iter_mut().zip(&inv) {
            *x *= s;
        }
    }
    Ok(out)
}

pub fn column_norms(m: &Matrix) -> Vec<f64> {
    let mut sq = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (s, x) in sq.iter_mut().zip(m.row(i)) {
            *s += x * x;
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Empty("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow; equals `-ln σ(-x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn identity_gram() {
        let eig = gram_eigen(&Matrix::identity(2)).unwrap();
        assert_eq!(eig.eigenvalues, vec![1.0, 1.0]);
        let v = &eig.eigenvectors;
        for h in 0..2 {
            let nonzero = v.row(h).iter().filter(|x| x.abs() > 1e-12).count();
            assert_eq!(nonzero, 1);
        }
    }

    #[test]
    fn proportional_columns_hand_solved() {
        // Gram [[2,4],[4,8]]: trace 10, det 0 -> eigenvalues 10 and 0,
        // top eigenvector (1,2)/sqrt(5).
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let eig = gram_eigen(&a).unwrap();
        assert_close(eig.eigenvalues[0], 10.0, 1e-12);
        assert_close(eig.eigenvalues[1], 0.0, 1e-12);
        let top = eig.eigenvectors.row(0);
        let sign = top[0].signum();
        assert_close(sign * top[0], 1.0 / 5f64.sqrt(), 1e-12);
        assert_close(sign * top[1], 2.0 / 5f64.sqrt(), 1e-12);

        let scores = leverage_scores(&eig, 1).unwrap();
        assert_close(scores[0], 0.2, 1e-12);
        assert_close(scores[1], 0.8, 1e-12);
    }

    #[test]
    fn single_column() {
        let a = Matrix::from_rows(&[vec![3.0], vec![4.0], vec![0.0]]).unwrap();
        let eig = gram_eigen(&a).unwrap();
        assert_close(eig.eigenvalues[0], 25.0, 1e-12);
        assert_close(eig.eigenvectors.get(0, 0).abs(), 1.0, 0.0);
    }

    #[test]
    fn empty_columns_rejected() {
        assert!(gram_eigen(&Matrix::zeros(3, 0)).is_err());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&[10.0, 0.0], 2), 1);
        assert_eq!(numerical_rank(&[1.0, 1.0], 2), 2);
        // tol = 5 * 2 * 2.22e-16 = 2.22e-15 > 5e-18
        assert!(rank_tolerance(&[5.0, 5e-18], 2) > 5e-18);
        assert_eq!(numerical_rank(&[5.0, 5e-18], 2), 1);
        assert_eq!(numerical_rank(&[0.0, 0.0], 2), 0);
    }

    #[test]
    fn leverage_symmetric_and_zero_rank() {
        let eig = gram_eigen(&Matrix::identity(2)).unwrap();
        assert_eq!(leverage_scores(&eig, 2).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(leverage_scores(&eig, 0), Err(Error::ZeroRank)));
    }

    #[test]
    fn normalize_examples() {
        let m = Matrix::from_rows(&[vec![3.0, 1.0], vec![4.0, 0.0]]).unwrap();
        let n = l2_normalize_columns(&m).unwrap();
        assert_close(n.get(0, 0), 0.6, 1e-15);
        assert_close(n.get(1, 0), 0.8, 1e-15);
        assert_eq!(n.column(1), vec![1.0, 0.0]);

        let z = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert!(matches!(l2_normalize_columns(&z), Err(Error::ZeroColumn { column: 1 })));
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&[0.0, 0.0, 0.0]).unwrap();
        s.iter().for_each(|&v| assert_close(v, 1.0 / 3.0, 1e-15));
        let s = softmax(&[2f64.ln(), 0.0]).unwrap();
        assert_close(s[0], 2.0 / 3.0, 1e-15);
        assert_close(s[1], 1.0 / 3.0, 1e-15);
        let s = softmax(&[1000.0, 0.0]).unwrap();
        assert_close(s[0], 1.0, 1e-15);
        assert!(s[1] >= 0.0 && s[1] < 1e-300);
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        let tiny = sigmoid(-800.0);
        assert!(tiny.is_finite() && tiny >= 0.0 && tiny < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
        for x in [-30.0, -2.5, 0.1, 7.0] {
            assert_close(sigmoid(x) + sigmoid(-x), 1.0, 1e-15);
        }
        let e = (-30f64).exp();
        assert_close(softplus(-30.0), e - e * e / 2.0, 1e-25);
        assert_close(softplus(50.0), 50.0, 1e-15);
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn eigen_invariants_on_random_gram() {
        let a = random_matrix(9, 6, 3);
        let g = a.t_matmul(&a).unwrap();
        let eig = gram_eigen(&a).unwrap();
        let v = &eig.eigenvectors;
        for h in 0..6 {
            assert_close(dot(v.row(h), v.row(h)).sqrt(), 1.0, 1e-9);
            for k in h + 1..6 {
                assert!(dot(v.row(h), v.row(k)).abs() < 1e-8);
            }
            let gv: Vec<f64> = (0..6).map(|i| dot(g.row(i), v.row(h))).collect();
            for i in 0..6 {
                let want = eig.eigenvalues[h] * v.get(h, i);
                assert!((gv[i] - want).abs() <= 1e-8 * eig.eigenvalues[0]);
            }
        }
        assert!(eig.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn leverage_scores_sum_to_one(rows in 1usize..64, cols in 1usize..96, seed in any::<u64>()) {
            let a = random_matrix(rows, cols, seed);
            let eig = gram_eigen(&a).unwrap();
            let k = numerical_rank(&eig.eigenvalues, cols.max(rows));
            let s = leverage_scores(&eig, k).unwrap();
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn gram_reconstruction(rows in 1usize..24, cols in 1usize..24, seed in any::<u64>()) {
            let a = random_matrix(rows, cols, seed);
            let g = a.t_matmul(&a).unwrap();
            let eig = gram_eigen(&a).unwrap();
            let mut rec = Matrix::zeros(cols, cols);
            for h in 0..cols {
                let v = eig.eigenvectors.row(h);
                for i in 0..cols {
                    for j in 0..cols {
                        let x = rec.get(i, j) + eig.eigenvalues[h] * v[i] * v[j];
                        rec.set(i, j, x);
                    }
                }
            }
            let mut diff = g.clone();
            diff.data_mut().iter_mut().zip(rec.data()).for_each(|(d, r)| *d -= r);
            prop_assert!(diff.frobenius_norm() <= 1e-8 * g.frobenius_norm().max(1e-300));
        }

        #[test]
        fn softmax_shift_invariant(logits in prop::collection::vec(-50.0f64..50.0, 1..40), c in -100.0f64..100.0) {
            let a = softmax(&logits).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|x| x + c).collect();
            let b = softmax(&shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn normalize_idempotent(rows in 1usize..10, cols in 1usize..10, seed in any::<u64>()) {
            let m = random_matrix(rows, cols, seed);
            if let Ok(once) = l2_normalize_columns(&m) {
                let twice = l2_normalize_columns(&once).unwrap();
                for (x, y) in once.data().iter().zip(twice.data()) {
                    prop_assert!((x - y).abs() < 1e-15);
                }
            }
        }
    }
}
