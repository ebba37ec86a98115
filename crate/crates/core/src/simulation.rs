//! Synthetic regression scenarios and population efficacy by quadrature.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::quadrature::integrate_with_breaks;
use crate::rng::{substream, DATA_STREAM};

/// Quadrature tolerance for population quantities.
pub const QUAD_TOL: f64 = 1e-9;

pub fn f1(x: f64) -> f64 {
    4.0 * x - 2.0 + 5.0 * (-64.0 * (x - 0.5) * (x - 0.5)).exp()
}

pub fn f2(x: f64) -> f64 {
    2.5 * x * (1.5 - x).exp()
}

pub fn f3(x: f64) -> f64 {
    3.2 * x + 0.4
}

fn names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("X{j}")).collect()
}

fn noise(sigma2: f64) -> Result<Normal<f64>> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::config("simulation", "sigma2 must be finite and non-negative"));
    }
    Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::config("simulation", e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimpleOptions {
    pub n: usize,
    pub sigma2: f64,
    pub seed: u64,
}

impl Default for SimpleOptions {
    fn default() -> Self {
        SimpleOptions {
            n: 1000,
            sigma2: 0.02,
            seed: 0,
        }
    }
}

/// `Y = f1(X1) + f2(X2) + f3(X3) + e` with iid uniform covariates.
pub fn gen_simple(opts: &SimpleOptions) -> Result<Dataset> {
    let eps = noise(opts.sigma2)?;
    let mut rng = substream(opts.seed, DATA_STREAM);
    let mut cols = (0..3).map(|_| Vec::with_capacity(opts.n)).collect::<Vec<Vec<f64>>>();
    let mut y = Vec::with_capacity(opts.n);
    for _ in 0..opts.n {
        let x: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        for (c, v) in cols.iter_mut().zip(x) {
            c.push(v);
        }
        y.push(f1(x[0]) + f2(x[1]) + f3(x[2]) + eps.sample(&mut rng));
    }
    Dataset::from_columns(names(3), &cols, y, "Y".into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DependentCase {
    /// `Y = f1(X1) + f2(X2) + e`
    #[serde(rename = "noY3")]
    NoY3,
    /// `Y = f2(X2) + f3(X3) + e`
    #[serde(rename = "Y3")]
    Y3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependentOptions {
    pub case: DependentCase,
    pub n: usize,
    pub sigma2: f64,
    /// mean of X1 and X3
    pub mean: f64,
    /// standard deviation of X1 and X3
    pub sd: f64,
    pub rho: f64,
    /// multiplier on the f2 term
    pub f2_scale: f64,
    pub seed: u64,
}

impl DependentOptions {
    pub fn new(case: DependentCase) -> Self {
        DependentOptions {
            case,
            n: 1000,
            sigma2: 0.02,
            mean: 0.5,
            sd: 1.0,
            rho: 0.5f64.sqrt(),
            f2_scale: 1.0,
            seed: 0,
        }
    }
}

/// `(X1, X3)` bivariate normal, `X2` uniform and independent.
pub fn gen_dependent(opts: &DependentOptions) -> Result<Dataset> {
    let eps = noise(opts.sigma2)?;
    if !(opts.sd > 0.0) || !(opts.rho.abs() <= 1.0) {
        return Err(Error::config("simulation", "sd must be positive and |rho| <= 1"));
    }
    let tail = (1.0 - opts.rho * opts.rho).sqrt();
    let mut rng = substream(opts.seed, DATA_STREAM);
    let mut cols = (0..3).map(|_| Vec::with_capacity(opts.n)).collect::<Vec<Vec<f64>>>();
    let mut y = Vec::with_capacity(opts.n);
    for _ in 0..opts.n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let x1 = opts.mean + opts.sd * z1;
        let x3 = opts.mean + opts.sd * (opts.rho * z1 + tail * z2);
        let x2: f64 = rng.random();
        let mu = match opts.case {
            DependentCase::NoY3 => f1(x1) + opts.f2_scale * f2(x2),
            DependentCase::Y3 => opts.f2_scale * f2(x2) + f3(x3),
        };
        cols[0].push(x1);
        cols[1].push(x2);
        cols[2].push(x3);
        y.push(mu + eps.sample(&mut rng));
    }
    Dataset::from_columns(names(3), &cols, y, "Y".into())
}

/// Bump shapes supported on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bump {
    /// `(1 + s)(1 - s^2)`
    #[default]
    Asymmetric,
    /// `1 - s^2`
    Symmetric,
}

impl Bump {
    pub fn eval(self, s: f64) -> f64 {
        if s.abs() > 1.0 {
            return 0.0;
        }
        match self {
            Bump::Asymmetric => (1.0 + s) * (1.0 - s * s),
            Bump::Symmetric => 1.0 - s * s,
        }
    }

    /// `integral of s^j W(s)` over `[-1, 1]`.
    pub fn moment(self, j: i32) -> Result<f64> {
        Ok(integrate_with_breaks(|s| s.powi(j) * self.eval(s), &[-1.0, 1.0], QUAD_TOL)?.value)
    }
}

/// `Y = a + sum_j gamma_j W((X_j - x0_j) / theta_j) + e` on uniform covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shrinking {
    pub a: f64,
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub x0: Vec<f64>,
    pub bump: Bump,
    pub sigma2: f64,
}

impl Shrinking {
    /// Unit bumps of width `theta` centred at `x0`, `a = 0`.
    pub fn new(theta: Vec<f64>, gamma: Vec<f64>, x0: Vec<f64>) -> Self {
        Shrinking {
            a: 0.0,
            theta,
            gamma,
            x0,
            bump: Bump::Asymmetric,
            sigma2: 0.02,
        }
    }

    pub fn d(&self) -> usize {
        self.x0.len()
    }

    fn validate(&self) -> Result<()> {
        let d = self.d();
        if d == 0 || self.theta.len() != d || self.gamma.len() != d {
            return Err(Error::config(
                "simulation",
                "theta, gamma and x0 need one entry per covariate",
            ));
        }
        if self.theta.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::config("simulation", "theta entries must be positive"));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::config("simulation", "sigma2 must be finite and non-negative"));
        }
        Ok(())
    }

    /// Messages for bumps that reach past the unit interval.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for j in 0..self.d() {
            let (lo, hi) = (self.x0[j] - self.theta[j], self.x0[j] + self.theta[j]);
            if lo < 0.0 || hi > 1.0 {
                out.push(format!(
                    "bump {} spans [{lo}, {hi}] and is truncated by the covariate support [0, 1]",
                    j + 1
                ));
            }
        }
        out
    }

    fn term(&self, j: usize, x: f64) -> f64 {
        self.gamma[j] * self.bump.eval((x - self.x0[j]) / self.theta[j])
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        self.a + (0..self.d()).map(|j| self.term(j, x[j])).sum::<f64>()
    }
}

/// Draws `n` rows; returns the dataset and any support warnings.
pub fn gen_shrinking(spec: &Shrinking, n: usize, seed: u64) -> Result<(Dataset, Vec<String>)> {
    spec.validate()?;
    let eps = noise(spec.sigma2)?;
    let d = spec.d();
    let mut rng: ChaCha8Rng = substream(seed, DATA_STREAM);
    let mut cols = (0..d).map(|_| Vec::with_capacity(n)).collect::<Vec<Vec<f64>>>();
    let mut y = Vec::with_capacity(n);
    let mut x = vec![0.0; d];
    for _ in 0..n {
        for (j, v) in x.iter_mut().enumerate() {
            *v = rng.random();
            cols[j].push(*v);
        }
        y.push(spec.mean(&x) + eps.sample(&mut rng));
    }
    let ds = Dataset::from_columns(names(d), &cols, y, "Y".into())?;
    Ok((ds, spec.warnings()))
}

/// How the probability of the non-interest box enters the noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Volume {
    /// Exact box probability under uniform covariates on `[0, 1]`.
    #[default]
    Exact,
    /// `2^(d-1) * prod h_j` over the non-interest dimensions, with each
    /// neighborhood taken as the full `[x0 - h, x0 + h]`.
    Product,
}

/// Conditional moments of `X` and `W_j(X)` for `X` uniform on `[lo, hi]`.
struct Moments {
    len: f64,
    ex: f64,
    ew: f64,
    exw: f64,
    eww: f64,
}

impl Shrinking {
    fn moments(&self, j: usize, lo: f64, hi: f64) -> Result<Moments> {
        let len = hi - lo;
        let mut breaks = vec![lo];
        for p in [self.x0[j] - self.theta[j], self.x0[j] + self.theta[j]] {
            if p > lo && p < hi {
                breaks.push(p);
            }
        }
        breaks.push(hi);
        let w = |x: f64| self.term(j, x);
        let ew = integrate_with_breaks(w, &breaks, QUAD_TOL)?.value / len;
        let exw = integrate_with_breaks(|x| x * w(x), &breaks, QUAD_TOL)?.value / len;
        let eww = integrate_with_breaks(|x| w(x) * w(x), &breaks, QUAD_TOL)?.value / len;
        Ok(Moments {
            len,
            ex: 0.5 * (lo + hi),
            ew,
            exw,
            eww,
        })
    }

    /// Population `beta1(h) / sigma1(h)` on the box `prod [x0_j - h_j, x0_j + h_j]`,
    /// with `sigma1` computed under the null that drops the interest bump.
    pub fn efficacy(&self, h: &[f64], volume: Volume) -> Result<f64> {
        self.validate()?;
        let d = self.d();
        if h.len() != d || h.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::config(
                "simulation",
                "one positive half-width per covariate is required",
            ));
        }
        let mut prob = 1.0;
        let mut lack = 0.0;
        let mut m1 = None;
        for j in 0..d {
            let (mut lo, mut hi) = (self.x0[j] - h[j], self.x0[j] + h[j]);
            if volume == Volume::Exact {
                lo = lo.max(0.0);
                hi = hi.min(1.0);
            }
            if hi <= lo {
                return Err(Error::config(
                    "simulation",
                    format!("neighborhood {} misses the covariate support", j + 1),
                ));
            }
            let m = self.moments(j, lo, hi)?;
            prob *= m.len;
            if j == 0 {
                m1 = Some(m);
            } else {
                let var_x = m.len * m.len / 12.0;
                let cov = m.exw - m.ex * m.ew;
                lack += (m.eww - m.ew * m.ew) - cov * cov / var_x;
            }
        }
        let m1 = m1.unwrap();
        let var_x1 = m1.len * m1.len / 12.0;
        let beta1 = (m1.exw - m1.ex * m1.ew) / var_x1;
        let sigma_e2 = self.sigma2 + lack.max(0.0);
        if !(sigma_e2 > 0.0) {
            return Err(Error::numeric(
                "simulation",
                "null residual variance is zero; efficacy is undefined",
            ));
        }
        let sigma1 = (sigma_e2 / (prob * var_x1)).sqrt();
        Ok(beta1 / sigma1)
    }
}

/// Efficacy at each `h1`, other half-widths fixed at `h_rest`.
pub fn population_efficacy(
    spec: &Shrinking,
    h1: &[f64],
    h_rest: &[f64],
    volume: Volume,
) -> Result<Vec<f64>> {
    h1.iter()
        .map(|&a| {
            let mut h = Vec::with_capacity(h_rest.len() + 1);
            h.push(a);
            h.extend_from_slice(h_rest);
            spec.efficacy(&h, volume)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_sd(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        (m, s)
    }

    #[test]
    fn mean_functions() {
        assert!((f1(0.5) - 5.0).abs() < 1e-15);
        assert!((f3(0.5) - 2.0).abs() < 1e-15);
        assert!((f2(1.0) - 2.5 * 0.5f64.exp()).abs() < 1e-15);
        assert!((f2(1.0) - 4.1218).abs() < 1e-4);
    }

    #[test]
    fn bump_moments() {
        assert!((Bump::Asymmetric.moment(1).unwrap() - 4.0 / 15.0).abs() < 1e-12);
        assert!((Bump::Asymmetric.moment(0).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert!((Bump::Asymmetric.moment(2).unwrap() - 4.0 / 15.0).abs() < 1e-12);
        assert!(Bump::Symmetric.moment(1).unwrap().abs() < 1e-14);
    }

    #[test]
    fn simple_is_seeded_and_uniform() {
        let a = gen_simple(&SimpleOptions { seed: 3, ..Default::default() }).unwrap();
        let b = gen_simple(&SimpleOptions { seed: 3, ..Default::default() }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 1000);
        let big = gen_simple(&SimpleOptions { n: 100_000, sigma2: 0.02, seed: 1 }).unwrap();
        let se = (1.0 / 12.0f64 / 1e5).sqrt();
        for j in 0..3 {
            let (m, s) = mean_sd(&big.column(j));
            assert!((m - 0.5).abs() < 4.0 * se);
            // SD of the sample variance of U(0,1): sqrt((1/80 - 1/144) / n)
            let se_var = ((1.0 / 80.0 - 1.0 / 144.0) / 1e5f64).sqrt();
            assert!((s * s - 1.0 / 12.0).abs() < 4.0 * se_var);
        }
        let resid: Vec<f64> = (0..big.n())
            .map(|i| {
                let r = big.row(i);
                big.y()[i] - f1(r[0]) - f2(r[1]) - f3(r[2])
            })
            .collect();
        let (m, s) = mean_sd(&resid);
        assert!(m.abs() < 4.0 * (0.02f64 / 1e5).sqrt());
        assert!((s * s - 0.02).abs() < 4.0 * 0.02 * (2.0f64 / 1e5).sqrt());
    }

    #[test]
    fn dependent_correlation() {
        let mut o = DependentOptions::new(DependentCase::NoY3);
        o.n = 100_000;
        o.seed = 5;
        let ds = gen_dependent(&o).unwrap();
        let (x1, x3) = (ds.column(0), ds.column(2));
        let (m1, s1) = mean_sd(&x1);
        let (m3, s3) = mean_sd(&x3);
        let se = 1.0 / (1e5f64).sqrt();
        assert!((m1 - 0.5).abs() < 4.0 * se && (m3 - 0.5).abs() < 4.0 * se);
        assert!((s1 - 1.0).abs() < 4.0 * se && (s3 - 1.0).abs() < 4.0 * se);
        let r = x1
            .iter()
            .zip(&x3)
            .map(|(a, b)| (a - m1) * (b - m3))
            .sum::<f64>()
            / (1e5 - 1.0)
            / (s1 * s3);
        assert!((r - 0.5f64.sqrt()).abs() < 0.01);
        let x2 = ds.column(1);
        assert!(x2.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn dependent_cases_and_overrides() {
        let mut o = DependentOptions::new(DependentCase::Y3);
        o.sigma2 = 0.0;
        o.f2_scale = 0.0;
        o.sd = 0.1;
        o.n = 500;
        let ds = gen_dependent(&o).unwrap();
        for i in 0..ds.n() {
            assert!((ds.y()[i] - f3(ds.x(i, 2))).abs() < 1e-12);
        }
        let (_, s) = mean_sd(&ds.column(0));
        assert!((s - 0.1).abs() < 0.01);
        let mut o = DependentOptions::new(DependentCase::NoY3);
        o.sigma2 = 0.0;
        let ds = gen_dependent(&o).unwrap();
        for i in 0..ds.n() {
            let r = ds.row(i);
            assert!((ds.y()[i] - f1(r[0]) - f2(r[1])).abs() < 1e-12);
        }
        o.sd = 0.0;
        assert!(gen_dependent(&o).is_err());
    }

    #[test]
    fn shrinking_support_is_exact() {
        let spec = Shrinking::new(vec![0.1, 0.2, 0.15], vec![1.0, -2.0, 0.5], vec![0.5, 0.4, 0.6]);
        let (ds, warn) = gen_shrinking(&Shrinking { sigma2: 0.0, ..spec.clone() }, 2000, 4).unwrap();
        assert!(warn.is_empty());
        for i in 0..ds.n() {
            let r = ds.row(i);
            let outside = (0..3).all(|j| (r[j] - spec.x0[j]).abs() > spec.theta[j]);
            if outside {
                assert_eq!(ds.y()[i], 0.0);
            }
            assert!((ds.y()[i] - spec.mean(r)).abs() < 1e-15);
        }
        let zero = Shrinking::new(vec![0.1; 2], vec![0.0; 2], vec![0.5; 2]);
        let (ds, _) = gen_shrinking(&zero, 20_000, 9).unwrap();
        let (m, s) = mean_sd(ds.y());
        assert!(m.abs() < 4.0 * (0.02f64 / 2e4).sqrt());
        assert!((s * s - 0.02).abs() < 4.0 * 0.02 * (2.0f64 / 2e4).sqrt());
    }

    #[test]
    fn boundary_bump_warns() {
        let spec = Shrinking::new(vec![0.3, 0.1], vec![1.0, 1.0], vec![0.1, 0.5]);
        let (_, warn) = gen_shrinking(&spec, 50, 0).unwrap();
        assert_eq!(warn.len(), 1);
        assert!(warn[0].contains("bump 1"));
        let bad = Shrinking::new(vec![0.0, 0.1], vec![1.0, 1.0], vec![0.5, 0.5]);
        assert!(gen_shrinking(&bad, 50, 0).is_err());
    }

    fn thm_spec(theta1: f64) -> Shrinking {
        Shrinking::new(vec![theta1, 0.2, 0.2], vec![1.0, 1.0, 1.0], vec![0.5, 0.5, 0.5])
    }

    #[test]
    fn efficacy_peaks_at_bump_width() {
        let spec = thm_spec(0.1);
        let h1: Vec<f64> = (0..=12).map(|k| 0.1 + 0.025 * k as f64).collect();
        let eff = population_efficacy(&spec, &h1, &[0.25, 0.25], Volume::Exact).unwrap();
        let best = (0..eff.len()).max_by(|&a, &b| eff[a].abs().total_cmp(&eff[b].abs())).unwrap();
        assert_eq!(best, 0);
        // below the bump width part of the signal is cut off
        let narrow = spec.efficacy(&[0.05, 0.25, 0.25], Volume::Exact).unwrap();
        assert!(narrow < eff[0]);
    }

    #[test]
    fn efficacy_matches_closed_form_when_bump_inside() {
        // with h1 >= theta1: cov = gamma theta^2 m1 / (2 h1)
        let spec = thm_spec(0.1);
        let h = [0.2, 0.25, 0.25];
        let eff = spec.efficacy(&h, Volume::Exact).unwrap();
        let cov = 0.01 * (4.0 / 15.0) / 0.4;
        let var1 = 0.4f64 * 0.4 / 12.0;
        // lack of linear fit of the other bumps over [0.25, 0.75]
        let mut lack = 0.0;
        for j in 1..3 {
            let m = spec.moments(j, 0.25, 0.75).unwrap();
            let c = m.exw - m.ex * m.ew;
            lack += m.eww - m.ew * m.ew - c * c / (0.25 / 12.0);
        }
        let want = cov / var1 / ((0.02 + lack) / (0.4 * 0.25 * var1)).sqrt();
        assert!((eff - want).abs() < 1e-9 * want.abs());
    }

    #[test]
    fn efficacy_scales_with_theta_squared() {
        let h = [0.3, 0.25, 0.25];
        let a = thm_spec(0.1).efficacy(&h, Volume::Exact).unwrap();
        let b = thm_spec(0.05).efficacy(&h, Volume::Exact).unwrap();
        let slope = (a / b).ln() / 2f64.ln();
        assert!((slope - 2.0).abs() < 1e-6);
    }

    #[test]
    fn symmetric_bump_has_smaller_efficacy() {
        let asym = thm_spec(0.1);
        let sym = Shrinking { bump: Bump::Symmetric, ..asym.clone() };
        let h = [0.1, 0.25, 0.25];
        let ea = asym.efficacy(&h, Volume::Exact).unwrap();
        let es = sym.efficacy(&h, Volume::Exact).unwrap();
        assert!(es.abs() < ea.abs());
        assert!(es.abs() < 1e-8);
    }

    #[test]
    fn efficacy_vanishes_as_theta_shrinks() {
        let h = [0.3, 0.25, 0.25];
        let mut prev = f64::INFINITY;
        for k in 0..6 {
            let e = thm_spec(0.2 / 2f64.powi(k)).efficacy(&h, Volume::Exact).unwrap();
            assert!(e.abs() < prev);
            prev = e.abs();
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn product_volume_agrees_for_small_boxes() {
        let spec = Shrinking::new(vec![0.02, 0.03, 0.03], vec![1.0, 0.5, 0.5], vec![0.4, 0.5, 0.6]);
        for h1 in [0.02, 0.03, 0.05] {
            for hr in [0.01, 0.03, 0.05] {
                let h = [h1, hr, hr];
                let e = spec.efficacy(&h, Volume::Exact).unwrap();
                let p = spec.efficacy(&h, Volume::Product).unwrap();
                assert!(((e - p) / e).abs() < 0.01);
            }
        }
    }

    #[test]
    fn zero_noise_null_is_an_error() {
        let spec = Shrinking { sigma2: 0.0, ..Shrinking::new(vec![0.1], vec![1.0], vec![0.5]) };
        assert_eq!(spec.efficacy(&[0.2], Volume::Exact).unwrap_err().exit_code(), 3);
    }
}
