//! Small dense and banded kernels used on hot paths.

use crate::error::{Error, Result};

/// Eigenvalue clipping tolerance for semidefinite factorizations.
pub const CLIP_TOL: f64 = 1e-10;

/// Scratch space for [`pivoted_cholesky`].
#[derive(Debug, Clone)]
pub struct FactorWork {
    w: Vec<f64>,
    used: Vec<bool>,
}

impl FactorWork {
    pub fn new(d: usize) -> Self {
        Self {
            w: vec![0.0; d * d],
            used: vec![false; d],
        }
    }
}

/// Factor a symmetric positive semidefinite `d x d` matrix (row-major) as
/// `G Gᵀ` with diagonal pivoting. The column built from pivot `p` is stored
/// at column `p`, so a zero row/column of `a` yields a zero row and column
/// of `g`. Trailing pivots below the clip level are treated as zero; a
/// remainder that is negative beyond [`CLIP_TOL`] is reported as indefinite.
pub fn pivoted_cholesky(a: &[f64], d: usize, g: &mut [f64], work: &mut FactorWork) -> Result<()> {
    debug_assert_eq!(a.len(), d * d);
    if d == 1 {
        let v = a[0];
        if v < -CLIP_TOL {
            return Err(Error::FactorizationFailure { pivot: v });
        }
        g[0] = v.max(0.0).sqrt();
        return Ok(());
    }
    let w = &mut work.w;
    w.copy_from_slice(a);
    work.used.iter_mut().for_each(|u| *u = false);
    g.iter_mut().for_each(|v| *v = 0.0);
    let scale = (0..d).map(|i| a[i * d + i].abs()).fold(0.0, f64::max);
    let clip = 1e-14 * scale;
    for _ in 0..d {
        let mut p = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for r in 0..d {
            if !work.used[r] && w[r * d + r] > best {
                best = w[r * d + r];
                p = r;
            }
        }
        if best <= clip {
            // Remainder must be (numerically) zero.
            for r in 0..d {
                if work.used[r] {
                    continue;
                }
                if w[r * d + r] < -CLIP_TOL {
                    return Err(Error::FactorizationFailure { pivot: w[r * d + r] });
                }
                for s in 0..d {
                    if !work.used[s] && s != r && w[r * d + s].abs() > CLIP_TOL {
                        return Err(Error::FactorizationFailure {
                            pivot: -w[r * d + s].abs(),
                        });
                    }
                }
            }
            break;
        }
        let l = best.sqrt();
        work.used[p] = true;
        for r in 0..d {
            if r == p {
                g[r * d + p] = l;
            } else if !work.used[r] {
                g[r * d + p] = w[r * d + p] / l;
            }
        }
        for r in 0..d {
            if work.used[r] {
                continue;
            }
            let gr = g[r * d + p];
            if gr == 0.0 {
                continue;
            }
            for s in 0..d {
                if !work.used[s] {
                    w[r * d + s] -= gr * g[s * d + p];
                }
            }
        }
    }
    Ok(())
}

/// Solve a tridiagonal system in place: `lower[i] u[i-1] + diag[i] u[i] +
/// upper[i] u[i+1] = rhs[i]`. `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], scratch: &mut Vec<f64>) -> Result<()> {
    let n = diag.len();
    scratch.clear();
    scratch.resize(n, 0.0);
    let mut beta = diag[0];
    if beta == 0.0 || !beta.is_finite() {
        return Err(Error::LinearSolveFailure("zero pivot in tridiagonal solve".into()));
    }
    rhs[0] /= beta;
    for i in 1..n {
        scratch[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * scratch[i];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::LinearSolveFailure(format!("zero pivot at row {i} of tridiagonal solve")));
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
    Ok(())
}

/// Band matrix with `kl` sub- and `ku` super-diagonals, LU-factored in place
/// without pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row `i` stores columns `i-kl ..= i+ku` at offsets `0 ..= kl+ku`.
    data: Vec<f64>,
    factored: bool,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
            factored: false,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku);
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// `y = A x` (before factorization).
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert!(!self.factored);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            y[i] = (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum();
        }
    }

    pub fn factor(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let pivot = self.data[self.idx(k, k)];
            if pivot.abs() < 1e-300 || !pivot.is_finite() {
                return Err(Error::LinearSolveFailure(format!("zero pivot at row {k} of band LU")));
            }
            let rmax = (k + kl).min(n - 1);
            let cmax = (k + ku).min(n - 1);
            for i in k + 1..=rmax {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=cmax {
                    let kj = self.data[self.idx(k, j)];
                    let ij = self.idx(i, j);
                    self.data[ij] -= l * kj;
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert!(self.factored);
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let mut s = b[i];
            for j in lo..i {
                s -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + ku).min(n - 1);
            let mut s = b[i];
            for j in i + 1..=hi {
                s -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(g: &[f64], d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..d).map(|k| g[i * d + k] * g[j * d + k]).sum();
            }
        }
        out
    }

    #[test]
    fn cholesky_reconstructs_semidefinite_matrix() {
        // rank-deficient: zero first row and column
        let a = [0.0, 0.0, 0.0, 0.0, 2.0, 1.0, 0.0, 1.0, 1.0];
        let mut g = [0.0; 9];
        let mut work = FactorWork::new(3);
        pivoted_cholesky(&a, 3, &mut g, &mut work).unwrap();
        let r = reconstruct(&g, 3);
        for (x, y) in r.iter().zip(&a) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(g[0] == 0.0 && g[3] == 0.0 && g[6] == 0.0);
        assert!(g[0..3].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = [1.0, 2.0, 2.0, 1.0];
        let mut g = [0.0; 4];
        let mut work = FactorWork::new(2);
        assert!(matches!(
            pivoted_cholesky(&a, 2, &mut g, &mut work),
            Err(Error::FactorizationFailure { .. })
        ));
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let lower = [0.0, -1.0, -1.0, -1.0];
        let diag = [4.0, 4.0, 4.0, 4.0];
        let upper = [-1.0, -1.0, -1.0, 0.0];
        let x = [1.0, 2.0, -1.0, 0.5];
        let mut rhs: Vec<f64> = (0..4)
            .map(|i| {
                diag[i] * x[i]
                    + if i > 0 { lower[i] * x[i - 1] } else { 0.0 }
                    + if i < 3 { upper[i] * x[i + 1] } else { 0.0 }
            })
            .collect();
        let mut s = Vec::new();
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs, &mut s).unwrap();
        for (a, b) in rhs.iter().zip(&x) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn band_lu_solves() {
        let n = 6;
        let mut a = BandMatrix::zeros(n, 2, 1);
        for i in 0..n {
            a.add(i, i, 5.0 + i as f64);
            if i >= 1 {
                a.add(i, i - 1, -1.0);
            }
            if i >= 2 {
                a.add(i, i - 2, 0.5);
            }
            if i + 1 < n {
                a.add(i, i + 1, -2.0);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&x, &mut b);
        a.factor().unwrap();
        a.solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13);
        }
    }
}
