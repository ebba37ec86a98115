//! Small dense symmetric solves.

/// Relative pivot tolerance below which a Gram matrix is treated as singular.
pub const RANK_TOL: f64 = 1e-10;

/// Pivoted square-root-free Cholesky factor `P A P^T = L D L^T` of a symmetric
/// positive definite matrix; `L` is unit lower triangular, stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    diag: Vec<f64>,
    perm: Vec<usize>,
}

impl Cholesky {
    /// Factors the row-major `n x n` matrix `a`. Returns `None` when a pivot
    /// falls below `rel_tol` times the largest diagonal entry.
    pub fn factor(a: &[f64], n: usize, rel_tol: f64) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut w = a.to_vec();
        let mut perm = vec![0; n];
        let mut diag = vec![0.0; n];
        let mut col = vec![0.0; n];
        if !ldl_in_place(&mut w, n, &mut perm, &mut diag, &mut col, rel_tol) {
            return None;
        }
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                l[i * n + j] = w[i * n + j];
            }
            l[i * n + i] = 1.0;
        }
        Some(Cholesky { n, l, diag, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.n];
        let mut x = vec![0.0; self.n];
        ldl_solve(&self.l, self.n, &self.perm, &self.diag, b, &mut z, &mut x);
        x
    }

    /// Row-major `A^{-1}`.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let col = self.solve(&e);
            for r in 0..n {
                inv[r * n + c] = col[r];
            }
        }
        // symmetrize away rounding asymmetry
        for r in 0..n {
            for c in r + 1..n {
                let m = 0.5 * (inv[r * n + c] + inv[c * n + r]);
                inv[r * n + c] = m;
                inv[c * n + r] = m;
            }
        }
        inv
    }
}

/// In-place pivoted `L D L^T` of the row-major `n x n` matrix in `w`. On
/// success the strict lower triangle of `w` holds `L`. Returns `false` when a
/// pivot falls below `rel_tol` times the largest diagonal entry.
pub(crate) fn ldl_in_place(
    w: &mut [f64],
    n: usize,
    perm: &mut [usize],
    diag: &mut [f64],
    col: &mut [f64],
    rel_tol: f64,
) -> bool {
    for (k, p) in perm.iter_mut().enumerate().take(n) {
        *p = k;
    }
    let max_diag = (0..n).map(|i| w[i * n + i]).fold(0.0, f64::max);
    let tol = rel_tol * max_diag;
    for k in 0..n {
        let mut piv = k;
        for i in k + 1..n {
            if w[i * n + i] > w[piv * n + piv] {
                piv = i;
            }
        }
        if !(w[piv * n + piv] > tol) {
            return false;
        }
        if piv != k {
            swap_sym(w, n, k, piv);
            perm.swap(k, piv);
        }
        let dk = w[k * n + k];
        diag[k] = dk;
        for i in k + 1..n {
            col[i] = w[i * n + k];
        }
        // full symmetric Schur complement, so later swaps see current values
        for i in k + 1..n {
            let lik = col[i] / dk;
            for j in k + 1..n {
                w[i * n + j] -= lik * col[j];
            }
            w[i * n + k] = lik;
            w[k * n + i] = lik;
        }
    }
    true
}

/// Solves with a factor from [`ldl_in_place`]; only the strict lower
/// triangle of `l` is read. `z` is scratch.
pub(crate) fn ldl_solve(
    l: &[f64],
    n: usize,
    perm: &[usize],
    diag: &[f64],
    b: &[f64],
    z: &mut [f64],
    x: &mut [f64],
) {
    for i in 0..n {
        z[i] = b[perm[i]];
    }
    for i in 0..n {
        let mut s = z[i];
        for j in 0..i {
            s -= l[i * n + j] * z[j];
        }
        z[i] = s;
    }
    for i in 0..n {
        z[i] /= diag[i];
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for j in i + 1..n {
            s -= l[j * n + i] * z[j];
        }
        z[i] = s;
    }
    for (k, &p) in perm.iter().enumerate().take(n) {
        x[p] = z[k];
    }
}

fn swap_sym(w: &mut [f64], n: usize, a: usize, b: usize) {
    for j in 0..n {
        w.swap(a * n + j, b * n + j);
    }
    for i in 0..n {
        w.swap(i * n + a, i * n + b);
    }
}

/// `v^T M v` for a row-major symmetric `M`.
#[inline]
pub fn quad_form(m: &[f64], v: &[f64]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[i * n + j] * v[j];
        }
        s += v[i] * row;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spd(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n + 3, n, |_, _| rng.random::<f64>() - 0.5);
        let a = b.transpose() * b;
        (0..n * n).map(|k| a[(k / n, k % n)]).collect()
    }

    #[test]
    fn solve_matches_nalgebra() {
        for n in 1..6 {
            let a = spd(n, n as u64);
            let b: Vec<f64> = (0..n).map(|i| i as f64 - 1.5).collect();
            let x = Cholesky::factor(&a, n, RANK_TOL).unwrap().solve(&b);
            let am = DMatrix::from_row_slice(n, n, &a);
            let want = am.lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
            for i in 0..n {
                assert!((x[i] - want[i]).abs() < 1e-9 * (1.0 + want[i].abs()));
            }
        }
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let n = 4;
        let a = spd(n, 5);
        let inv = Cholesky::factor(&a, n, RANK_TOL).unwrap().inverse();
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| a[i * n + k] * inv[k * n + j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((v - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        // second column is twice the first
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(Cholesky::factor(&a, 2, RANK_TOL).is_none());
        assert!(Cholesky::factor(&[0.0], 1, RANK_TOL).is_none());
    }

    #[test]
    fn empty_matrix_factors() {
        let c = Cholesky::factor(&[], 0, RANK_TOL).unwrap();
        assert!(c.solve(&[]).is_empty());
    }
}
