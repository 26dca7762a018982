//! Robust estimators and small statistical tools shared by the experiments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of blocks used by median-of-means throughout the crate.
pub const MOM_BLOCKS: usize = 16;

/// Flat storage for a cloud of `dim`-dimensional points.
#[derive(Clone, Debug, PartialEq)]
pub struct Cloud {
    dim: usize,
    data: Vec<f64>,
}

impl Cloud {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("cloud dimension must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: data.len() % dim,
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(Vec::len).ok_or(Error::EmptySample)?;
        let mut data = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: p.len(),
                });
            }
            data.extend_from_slice(p);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Values of coordinate `i` across the cloud.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.points().map(|p| p[i]).collect()
    }
}

/// A point estimate with a confidence band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomEstimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl MomEstimate {
    pub fn exact(value: f64, n: usize) -> Self {
        Self {
            value,
            lo: value,
            hi: value,
            n,
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    /// Applies a monotone non-decreasing map to value and band.
    pub fn map_monotone(self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            value: f(self.value),
            lo: f(self.lo),
            hi: f(self.hi),
            n: self.n,
        }
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median-of-means over [`MOM_BLOCKS`] contiguous blocks.
///
/// The band is `value ± 2 s` with `s = 1.4826 · MAD(block means) / sqrt(k)`.
pub fn median_of_means(values: &[f64]) -> Result<MomEstimate> {
    median_of_means_blocks(values, MOM_BLOCKS)
}

pub fn median_of_means_blocks(values: &[f64], blocks: usize) -> Result<MomEstimate> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let k = blocks.clamp(1, n);
    let mut means: Vec<f64> = (0..k)
        .map(|b| {
            let lo = b * n / k;
            let hi = (b + 1) * n / k;
            let block = &values[lo..hi];
            let anchor = block[0];
            anchor + block.iter().map(|v| v - anchor).sum::<f64>() / block.len() as f64
        })
        .collect();
    let center = median(&mut means);
    let mut dev: Vec<f64> = means.iter().map(|m| (m - center).abs()).collect();
    let spread = 1.4826 * median(&mut dev) / (k as f64).sqrt();
    Ok(MomEstimate {
        value: center,
        lo: center - 2.0 * spread,
        hi: center + 2.0 * spread,
        n,
    })
}

/// Median-of-means estimate of `(E|v|^p)^{1/p}` from samples of `|v|`.
pub fn lp_norm_mom(abs_values: &[f64], p: f64) -> Result<MomEstimate> {
    let powered: Vec<f64> = abs_values.iter().map(|v| v.abs().powf(p)).collect();
    let m = median_of_means(&powered)?;
    Ok(m.map_monotone(|v| v.max(0.0).powf(1.0 / p)))
}

/// Arithmetic mean, exact for constant samples.
pub fn mean(values: &[f64]) -> f64 {
    let Some(&anchor) = values.first() else {
        return f64::NAN;
    };
    anchor + values.iter().map(|v| v - anchor).sum::<f64>() / values.len() as f64
}

pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Result of a two-sample Kolmogorov-Smirnov test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
}

impl KsResult {
    pub fn passed(&self) -> bool {
        self.statistic <= self.critical
    }
}

/// Asymptotic two-sample KS critical value at significance `level`.
pub fn ks_critical(n: usize, m: usize, level: f64) -> f64 {
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

pub fn ks_two_sample(a: &[f64], b: &[f64], level: f64) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    Ok(KsResult {
        statistic: d,
        critical: ks_critical(n, m, level),
    })
}

/// Ordinary least squares `y = slope · x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square residual.
    pub residual: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::Fit("need at least two points".into()));
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        residual: (rss / xs.len() as f64).sqrt(),
    })
}
