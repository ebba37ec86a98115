//! Least-squares fits on region subsamples.

use crate::cells::{block_len, packed, RegionStats, SufficientStats};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::grid::{QuantileGrid, Region};
use crate::linalg::{ldl_in_place, ldl_solve, quad_form, Cholesky, RANK_TOL};

/// Residual variance floor relative to the region's response variance.
pub const S2_FLOOR: f64 = 1e-12;

/// Leverage above which the leave-one-out error is undefined.
pub const LEVERAGE_MAX: f64 = 1.0 - 1e-12;

/// Linear fit with intercept on a subset of covariates.
///
/// `beta[0]` is the intercept; `beta[k + 1]` is the slope of `subset[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub subset: Vec<usize>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    pub s2: f64,
    pub rss: f64,
    pub n: usize,
    pub df: usize,
    pub rank_ok: bool,
    x_mean: Vec<f64>,
    y_mean: f64,
    inv: Vec<f64>,
}

impl FitResult {
    /// Number of coefficients including the intercept.
    pub fn p(&self) -> usize {
        self.subset.len() + 1
    }

    fn position(&self, covariate: usize) -> Option<usize> {
        self.subset.iter().position(|&c| c == covariate)
    }

    /// Slope of `covariate`, zero when it is not in the model.
    pub fn slope(&self, covariate: usize) -> f64 {
        self.position(covariate).map_or(0.0, |k| self.beta[k + 1])
    }

    pub fn t_of(&self, covariate: usize) -> Option<f64> {
        self.position(covariate).map(|k| self.t[k + 1])
    }

    /// Fitted value at a full covariate row.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut v = self.y_mean;
        for (k, &j) in self.subset.iter().enumerate() {
            v += self.beta[k + 1] * (x[j] - self.x_mean[k]);
        }
        v
    }

    /// Leverage `1/n + (x - xbar)^T Sxx^{-1} (x - xbar)` of a full covariate row.
    pub fn leverage(&self, x: &[f64]) -> f64 {
        let dev: Vec<f64> = self
            .subset
            .iter()
            .enumerate()
            .map(|(k, &j)| x[j] - self.x_mean[k])
            .collect();
        1.0 / self.n as f64 + quad_form(&self.inv, &dev)
    }
}

/// Solves the normal equations from region moments.
///
/// All products are formed about the region means, so the slopes do not depend
/// on any global centering of the table.
pub fn fit_from_stats(s: &SufficientStats, subset: &[usize]) -> Result<FitResult> {
    let n = s.count();
    let p = subset.len() + 1;
    if n <= p {
        return Err(Error::insufficient(
            "local-fit",
            format!("{n} rows cannot support {p} coefficients"),
        ));
    }
    let d = s.d();
    let q = subset.len();
    let mut sxx = vec![0.0; q * q];
    for a in 0..q {
        for b in a..q {
            let v = s.centered_cross(subset[a], subset[b]);
            sxx[a * q + b] = v;
            sxx[b * q + a] = v;
        }
    }
    let sxy: Vec<f64> = subset.iter().map(|&j| s.centered_cross(j, d)).collect();
    let syy = s.centered_cross(d, d).max(0.0);
    let x_mean: Vec<f64> = subset.iter().map(|&j| s.mean_x(j)).collect();
    let y_mean = s.mean_y();
    let df = n - p;

    let Some(chol) = Cholesky::factor(&sxx, q, RANK_TOL) else {
        return Ok(FitResult {
            subset: subset.to_vec(),
            beta: vec![0.0; p],
            se: vec![0.0; p],
            t: vec![0.0; p],
            s2: 0.0,
            rss: 0.0,
            n,
            df,
            rank_ok: false,
            x_mean,
            y_mean,
            inv: vec![0.0; q * q],
        });
    };
    let slopes = chol.solve(&sxy);
    let inv = chol.inverse();
    let explained: f64 = slopes.iter().zip(&sxy).map(|(b, c)| b * c).sum();
    let rss = (syy - explained).max(0.0);
    let s2 = rss / df as f64;
    let floor = S2_FLOOR * syy / (n - 1) as f64;
    let s2_eff = s2.max(floor);

    let mut beta = Vec::with_capacity(p);
    beta.push(y_mean - slopes.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>());
    beta.extend_from_slice(&slopes);
    let mut se = Vec::with_capacity(p);
    se.push((s2_eff * (1.0 / n as f64 + quad_form(&inv, &x_mean))).sqrt());
    for k in 0..q {
        se.push((s2_eff * inv[k * q + k]).sqrt());
    }
    let t = beta
        .iter()
        .zip(&se)
        .map(|(&b, &e)| if b == 0.0 || e == 0.0 { 0.0 } else { b / e })
        .collect();
    Ok(FitResult {
        subset: subset.to_vec(),
        beta,
        se,
        t,
        s2,
        rss,
        n,
        df,
        rank_ok: true,
        x_mean,
        y_mean,
        inv,
    })
}

/// Fits on an explicit row set and returns the hat diagonal of each row, in
/// the order of `rows`.
pub fn fit_rows(ds: &Dataset, rows: &[usize], subset: &[usize]) -> Result<(FitResult, Vec<f64>)> {
    let stats = SufficientStats::from_rows(ds, rows, &row_means(ds, rows));
    let fit = fit_from_stats(&stats, subset)?;
    let hat = if fit.rank_ok {
        rows.iter().map(|&i| fit.leverage(ds.row(i))).collect()
    } else {
        Vec::new()
    };
    Ok((fit, hat))
}

fn row_means(ds: &Dataset, rows: &[usize]) -> Vec<f64> {
    let d = ds.d();
    let mut m = vec![0.0; d + 1];
    if rows.is_empty() {
        return m;
    }
    for &i in rows {
        for (j, v) in ds.row(i).iter().enumerate() {
            m[j] += v;
        }
        m[d] += ds.y()[i];
    }
    let n = rows.len() as f64;
    m.iter_mut().for_each(|v| *v /= n);
    m
}

/// t-statistic of the interest covariate (index 0) in a fit.
pub fn ols_t1(fit: &FitResult) -> f64 {
    fit.t_of(0).unwrap_or(0.0)
}

/// Efficacy-calibrated statistic
/// `sqrt(n(h^-1)) * beta1 * s1 / s_e`.
///
/// `beta1` comes from the full fit on `r`, `s1` is the standard deviation of
/// the interest covariate on the interest slice of `r`, and `s_e` is the
/// residual scale of the fit without the interest covariate on `r` with the
/// interest dimension unrestricted. Zero whenever the latter region holds no
/// more than `d + 1` rows.
pub fn h0_noise_t1<S: RegionStats + ?Sized>(stats: &S, grid: &QuantileGrid, r: &Region) -> f64 {
    let d = stats.d();
    let rest = stats.stats(&r.unrestricted(grid, 0));
    let n_rest = rest.count();
    if n_rest <= d + 1 {
        return 0.0;
    }
    let full_subset: Vec<usize> = (0..d).collect();
    let Ok(full) = fit_from_stats(&stats.stats(r), &full_subset) else {
        return 0.0;
    };
    if !full.rank_ok {
        return 0.0;
    }
    let beta1 = full.slope(0);

    let slice = stats.stats(&r.only(grid, 0));
    let n_slice = slice.count();
    if n_slice < 2 {
        return 0.0;
    }
    let s1 = (slice.centered_cross(0, 0).max(0.0) / (n_slice - 1) as f64).sqrt();

    let rest_subset: Vec<usize> = (1..d).collect();
    let Ok(noise) = fit_from_stats(&rest, &rest_subset) else {
        return 0.0;
    };
    if !noise.rank_ok {
        return 0.0;
    }
    let var_y = rest.centered_cross(d, d).max(0.0) / (n_rest - 1) as f64;
    // residual scale over n - d: the fit has d coefficients
    let se2 = (noise.rss / (n_rest - d) as f64).max(S2_FLOOR * var_y);
    let num = beta1 * s1;
    if num == 0.0 || se2 == 0.0 {
        return 0.0;
    }
    (n_rest as f64).sqrt() * num / se2.sqrt()
}

/// Interest-slope summary of a full-model fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct T1 {
    pub t: f64,
    pub beta1: f64,
    pub n: usize,
}

/// Reusable buffers for full-model interest t-statistics straight from a
/// packed moment block. Arithmetic follows [`fit_from_stats`] step for step,
/// so both paths give identical values.
#[derive(Debug, Clone)]
pub struct OlsScratch {
    d: usize,
    block: Vec<f64>,
    sxx: Vec<f64>,
    sxy: Vec<f64>,
    perm: Vec<usize>,
    diag: Vec<f64>,
    col: Vec<f64>,
    z: Vec<f64>,
    slopes: Vec<f64>,
    e0: Vec<f64>,
    inv0: Vec<f64>,
}

impl OlsScratch {
    pub fn new(d: usize) -> Self {
        let mut e0 = vec![0.0; d];
        e0[0] = 1.0;
        OlsScratch {
            d,
            block: vec![0.0; block_len(d)],
            sxx: vec![0.0; d * d],
            sxy: vec![0.0; d],
            perm: vec![0; d],
            diag: vec![0.0; d],
            col: vec![0.0; d],
            z: vec![0.0; d],
            slopes: vec![0.0; d],
            e0,
            inv0: vec![0.0; d],
        }
    }

    /// Buffer sized for one moment block, to be filled by
    /// [`RegionStats::block_into`] before calling [`OlsScratch::full_t1`].
    pub fn block_mut(&mut self) -> &mut [f64] {
        &mut self.block
    }

    /// Queries `r` and fits the full model; `None` when the region is too
    /// small or the Gram matrix is singular.
    pub fn region_t1<S: RegionStats + ?Sized>(&mut self, stats: &S, r: &Region) -> Option<T1> {
        stats.block_into(r, &mut self.block);
        self.full_t1()
    }

    /// Full-model fit on the block currently in the buffer.
    pub fn full_t1(&mut self) -> Option<T1> {
        let d = self.d;
        let q = d + 2;
        let b = &self.block;
        let n = b[0].round() as usize;
        if n <= d + 1 {
            return None;
        }
        let nf = b[0];
        let cc = |j: usize, k: usize| {
            let (a, c) = (j + 1, k + 1);
            b[packed(q, a.min(c), a.max(c))] - b[packed(q, 0, a)] * b[packed(q, 0, c)] / nf
        };
        for a in 0..d {
            for c in a..d {
                let v = cc(a, c);
                self.sxx[a * d + c] = v;
                self.sxx[c * d + a] = v;
            }
            self.sxy[a] = cc(a, d);
        }
        let syy = cc(d, d).max(0.0);
        if !ldl_in_place(&mut self.sxx, d, &mut self.perm, &mut self.diag, &mut self.col, RANK_TOL) {
            return None;
        }
        ldl_solve(&self.sxx, d, &self.perm, &self.diag, &self.sxy, &mut self.z, &mut self.slopes);
        ldl_solve(&self.sxx, d, &self.perm, &self.diag, &self.e0, &mut self.z, &mut self.inv0);
        let explained: f64 = self.slopes.iter().zip(&self.sxy).map(|(b, c)| b * c).sum();
        let rss = (syy - explained).max(0.0);
        let s2 = rss / (n - d - 1) as f64;
        let floor = S2_FLOOR * syy / (n - 1) as f64;
        let se = (s2.max(floor) * self.inv0[0]).sqrt();
        let beta1 = self.slopes[0];
        let t = if beta1 == 0.0 || se == 0.0 { 0.0 } else { beta1 / se };
        Some(T1 { t, beta1, n })
    }
}

/// Squared leave-one-out prediction error `(e / (1 - h))^2`; `None` when the
/// row has leverage 1.
pub fn loo_gamma_row(residual: f64, h: f64) -> Option<f64> {
    if h >= LEVERAGE_MAX {
        None
    } else {
        let e = residual / (1.0 - h);
        Some(e * e)
    }
}
