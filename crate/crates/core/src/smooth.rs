//! Gaussian kernel smoothers over one covariate.

/// Smallest Kish effective sample size at which a smoothed value is reported.
pub const MIN_EFFECTIVE: f64 = 5.0;
/// Points along an evaluation mesh.
pub const MESH_POINTS: usize = 100;

/// Sample standard deviation (`n - 1` denominator).
pub fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Linearly interpolated sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `0.9 * min(sd, iqr / 1.34) * n^(-1/5)`; when one spread measure is zero the
/// other is used. `None` for fewer than two points or no spread at all.
pub fn silverman_bandwidth(x: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sd = sample_sd(x);
    let iqr = (quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => return None,
    };
    Some(0.9 * spread * (x.len() as f64).powf(-0.2))
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn mesh(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Gaussian kernel smoother of `(x, v)` pairs with a fixed bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoother {
    x: Vec<f64>,
    v: Vec<f64>,
    bandwidth: f64,
}

impl Smoother {
    /// Silverman bandwidth of `x`; `None` with fewer than five points.
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Option<Self> {
        if x.len() < MIN_EFFECTIVE as usize {
            return None;
        }
        let bandwidth = silverman_bandwidth(&x)?;
        Some(Smoother { x, v, bandwidth })
    }

    pub fn with_bandwidth(x: Vec<f64>, v: Vec<f64>, bandwidth: f64) -> Self {
        Smoother { x, v, bandwidth }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn weights(&self, at: f64) -> Option<Vec<f64>> {
        let w: Vec<f64> = self
            .x
            .iter()
            .map(|&xi| {
                let u = (xi - at) / self.bandwidth;
                (-0.5 * u * u).exp()
            })
            .collect();
        let sw: f64 = w.iter().sum();
        let sw2: f64 = w.iter().map(|v| v * v).sum();
        if sw2 == 0.0 || sw * sw / sw2 < MIN_EFFECTIVE {
            return None;
        }
        Some(w)
    }

    /// Nadaraya-Watson kernel average at `at`.
    pub fn nadaraya_watson(&self, at: f64) -> Option<f64> {
        let w = self.weights(at)?;
        let sw: f64 = w.iter().sum();
        Some(w.iter().zip(&self.v).map(|(w, v)| w * v).sum::<f64>() / sw)
    }

    /// Local linear kernel fit evaluated at `at`.
    pub fn local_linear(&self, at: f64) -> Option<f64> {
        let w = self.weights(at)?;
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ((wi, xi), vi) in w.iter().zip(&self.x).zip(&self.v) {
            let u = xi - at;
            s0 += wi;
            s1 += wi * u;
            s2 += wi * u * u;
            t0 += wi * vi;
            t1 += wi * u * vi;
        }
        let det = s0 * s2 - s1 * s1;
        if det <= 1e-12 * s0 * s2 {
            return Some(t0 / s0);
        }
        Some((s2 * t0 - s1 * t1) / det)
    }
}

/// Kernel-averaged values over `grid`; `None` for the whole curve with fewer
/// than five points, per point where the effective sample is too small.
pub fn smooth_gamma(x: &[f64], gamma: &[f64], grid: &[f64]) -> Option<Vec<Option<f64>>> {
    let s = Smoother::new(x.to_vec(), gamma.to_vec())?;
    Some(grid.iter().map(|&g| s.nadaraya_watson(g)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_values_give_constant_curve() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 / 40.0).collect();
        let c = smooth_gamma(&x, &[2.5; 40], &mesh(0.0, 1.0, 20)).unwrap();
        for v in c {
            assert!((v.unwrap() - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn separated_clusters_stay_local() {
        let mut x = Vec::new();
        let mut g = Vec::new();
        for i in 0..30 {
            x.push(i as f64 / 100.0);
            g.push(1.0);
            x.push(10.0 + i as f64 / 100.0);
            g.push(3.0);
        }
        let s = Smoother::with_bandwidth(x, g, 0.5);
        assert!((s.nadaraya_watson(0.15).unwrap() - 1.0).abs() < 1e-6);
        assert!((s.nadaraya_watson(10.15).unwrap() - 3.0).abs() < 1e-6);
    }

    #[test]
    fn isolated_point_has_too_small_effective_sample() {
        let mut x = vec![0.0];
        x.extend((0..20).map(|i| 10.0 + i as f64 / 50.0));
        let s = Smoother::with_bandwidth(x, vec![1.0; 21], 0.5);
        assert!(s.nadaraya_watson(0.0).is_none());
        assert!(s.nadaraya_watson(10.2).is_some());
    }

    #[test]
    fn fewer_than_five_points_is_undefined() {
        assert!(smooth_gamma(&[0.1, 0.2, 0.3, 0.4], &[1.0; 4], &[0.2]).is_none());
    }

    #[test]
    fn matches_direct_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let g: Vec<f64> = (0..200).map(|_| rng.random::<f64>() * 4.0).collect();
        let grid = mesh(0.0, 1.0, 100);
        let got = smooth_gamma(&x, &g, &grid).unwrap();
        let h = silverman_bandwidth(&x).unwrap();
        for (k, &m) in grid.iter().enumerate() {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..x.len() {
                let w = (-0.5 * ((x[i] - m) / h).powi(2)).exp();
                num += w * g[i];
                den += w;
            }
            assert!((got[k].unwrap() - num / den).abs() <= 1e-10 * (num / den).abs());
        }
    }

    #[test]
    fn silverman_rule() {
        let x: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let sd = sample_sd(&x);
        let iqr = (75.25 - 25.75) / 1.34;
        let want = 0.9 * sd.min(iqr) * 100f64.powf(-0.2);
        assert!((silverman_bandwidth(&x).unwrap() - want).abs() < 1e-12);
        // degenerate IQR falls back to the standard deviation
        let mut y = vec![1.0; 20];
        y[0] = 0.0;
        y[19] = 2.0;
        let h = silverman_bandwidth(&y).unwrap();
        assert!((h - 0.9 * sample_sd(&y) * 20f64.powf(-0.2)).abs() < 1e-12);
        assert!(silverman_bandwidth(&[3.0; 10]).is_none());
    }

    #[test]
    fn local_linear_reproduces_lines() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let v: Vec<f64> = x.iter().map(|x| 3.2 * x + 0.4).collect();
        let s = Smoother::new(x, v).unwrap();
        for m in mesh(0.05, 0.95, 19) {
            assert!((s.local_linear(m).unwrap() - (3.2 * m + 0.4)).abs() < 1e-9);
        }
    }
}
