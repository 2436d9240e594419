//! Estimators and hypothesis tests used by the experiments.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Running mean and variance (Welford), mergeable in any order up to
/// floating-point rounding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Self::default();
        for &x in xs {
            m.push(x);
        }
        m
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64;
        Self { n, mean, m2 }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Value with its standard error and sample size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

impl Estimate {
    /// Symmetric normal-approximation interval at confidence `level`.
    pub fn interval(&self, level: f64) -> (f64, f64) {
        let z = normal_quantile(0.5 + level / 2.0);
        (self.value - z * self.std_error, self.value + z * self.std_error)
    }

    pub fn overlaps(&self, other: &Estimate, level: f64) -> bool {
        let (a0, a1) = self.interval(level);
        let (b0, b1) = other.interval(level);
        a0 <= b1 && b0 <= a1
    }
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn mean(xs: &[f64]) -> Estimate {
    let m = Moments::from_slice(xs);
    Estimate {
        value: m.mean,
        std_error: m.std_error(),
        n: xs.len(),
    }
}

/// Sample variance with the large-sample standard error `sqrt((m4 - s^4) / n)`.
pub fn variance(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let m = Moments::from_slice(xs);
    let m4 = xs.iter().map(|x| (x - m.mean).powi(4)).sum::<f64>() / n;
    let s2 = m.variance();
    Estimate {
        value: s2,
        std_error: ((m4 - s2 * s2).max(0.0) / n).sqrt(),
        n: xs.len(),
    }
}

/// Delete-one jackknife estimate of `stat` on `xs`: returns the full-sample
/// value with the jackknife standard error.
pub fn jackknife(xs: &[f64], stat: impl Fn(&[f64]) -> f64) -> Estimate {
    let n = xs.len();
    let full = stat(xs);
    let mut buf = Vec::with_capacity(n.saturating_sub(1));
    let mut leave = Vec::with_capacity(n);
    for i in 0..n {
        buf.clear();
        buf.extend_from_slice(&xs[..i]);
        buf.extend_from_slice(&xs[i + 1..]);
        leave.push(stat(&buf));
    }
    let m = leave.iter().sum::<f64>() / n as f64;
    let var = leave.iter().map(|v| (v - m).powi(2)).sum::<f64>() * (n as f64 - 1.0) / n as f64;
    Estimate {
        value: full,
        std_error: var.sqrt(),
        n,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Pearson goodness of fit of `counts` against `probs`. Cells with expected
/// count below `min_expected` are pooled into one cell.
pub fn chi_square(counts: &[u64], probs: &[f64], min_expected: f64) -> Result<ChiSquareResult> {
    if counts.len() != probs.len() {
        return Err(Error::InvalidParameter("counts and probabilities differ in length".into()));
    }
    let n: u64 = counts.iter().sum();
    let nf = n as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = p * nf;
        if e < min_expected {
            pooled.0 += c as f64;
            pooled.1 += e;
        } else {
            cells.push((c as f64, e));
        }
    }
    if pooled.1 > 0.0 || pooled.0 > 0.0 {
        cells.push(pooled);
    }
    if cells.len() < 2 {
        return Err(Error::InsufficientPoints { need: 2, got: cells.len() });
    }
    let statistic: f64 = cells
        .iter()
        .map(|(o, e)| if *e > 0.0 { (o - e).powi(2) / e } else if *o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
        bins: cells.len(),
    })
}

/// Largest gap between the empirical CDF of `xs` and `cdf`, evaluated on
/// both sides of every jump.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < v.len() {
        let x = v[i];
        let mut j = i;
        while j < v.len() && v[j] == x {
            j += 1;
        }
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max((j as f64 / n - f).abs());
        i = j;
    }
    d
}

/// Kolmogorov distance between integer samples and a continuous `cdf`, with
/// the empirical CDF at `k` compared against `cdf(k + 1/2)` (continuity
/// correction for lattice data).
pub fn ks_lattice(samples: &[i64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_unstable();
    let n = v.len() as f64;
    let (Some(&lo), Some(&hi)) = (v.first(), v.last()) else {
        return 0.0;
    };
    let mut d = cdf(lo as f64 - 0.5).max(1.0 - cdf(hi as f64 + 0.5));
    let mut idx = 0;
    for k in lo..=hi {
        while idx < v.len() && v[idx] <= k {
            idx += 1;
        }
        d = d.max((idx as f64 / n - cdf(k as f64 + 0.5)).abs());
    }
    d
}

/// Ratio of means `mean(a) / mean(b)` over paired samples, with the
/// delete-one jackknife standard error (computed in linear time).
pub fn ratio_of_means(a: &[f64], b: &[f64]) -> Result<Estimate> {
    let n = a.len();
    if n != b.len() || n < 2 {
        return Err(Error::InsufficientPoints { need: 2, got: n.min(b.len()) });
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let nm1 = (n - 1) as f64;
    let leave: Vec<f64> = a.iter().zip(b).map(|(x, y)| ((sa - x) / nm1) / ((sb - y) / nm1)).collect();
    let m = leave.iter().sum::<f64>() / n as f64;
    let var = leave.iter().map(|v| (v - m).powi(2)).sum::<f64>() * nm1 / n as f64;
    Ok(Estimate {
        value: sa / sb,
        std_error: var.sqrt(),
        n,
    })
}

/// Two-sample Kolmogorov-Smirnov distance; ties are handled by comparing
/// the two empirical CDFs after every distinct value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    y.sort_by(|p, q| p.total_cmp(q));
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < x.len() || j < y.len() {
        let v = match (x.get(i), y.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => break,
        };
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value `c(α) sqrt((n + m) / (n m))`.
pub fn ks_two_sample_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// DKW half-width `sqrt(ln(2/α) / (2n))` of a uniform band for an empirical CDF.
pub fn dkw_margin(alpha: f64, n: usize) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Outcome of checking empirical tails against a bound `P(X >= m) <= bound(m)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailCheck {
    pub pass: bool,
    pub margin: f64,
    /// Smallest `bound(m) + margin - P̂(X >= m)` over the levels checked.
    pub worst_slack: f64,
    pub worst_level: i64,
}

/// Checks `P̂(X >= m) <= bound(m) + DKW margin` for every `m >= 0` up to the sample maximum.
pub fn tail_domination(samples: &[i64], bound: impl Fn(i64) -> f64, alpha: f64) -> TailCheck {
    let n = samples.len();
    let margin = dkw_margin(alpha, n);
    let max = samples.iter().copied().max().unwrap_or(0).max(0);
    let mut counts = vec![0u64; max as usize + 2];
    for &s in samples {
        if s >= 0 {
            counts[s as usize] += 1;
        }
    }
    let mut tail = 0u64;
    let mut worst = (f64::INFINITY, 0);
    for m in (0..=max as usize + 1).rev() {
        tail += counts[m];
        let slack = bound(m as i64) + margin - tail as f64 / n as f64;
        if slack < worst.0 {
            worst = (slack, m as i64);
        }
    }
    TailCheck {
        pass: worst.0 >= 0.0,
        margin,
        worst_slack: worst.0,
        worst_level: worst.1,
    }
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// 95% interval for the slope from the t distribution with `n - 2` degrees of freedom.
    pub slope_ci: (f64, f64),
    pub points: usize,
}

/// Log-log least squares; needs at least four points spanning a decade in `x`.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<ScalingFit> {
    let n = x.len();
    if n < 4 || y.len() != n {
        return Err(Error::InsufficientPoints { need: 4, got: n.min(y.len()) });
    }
    if x.iter().chain(y).any(|v| *v <= 0.0) {
        return Err(Error::InvalidParameter("log-log fit needs positive values".into()));
    }
    let (xmin, xmax) = x.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    if xmax < 10.0 * xmin * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter("fit points must span at least one decade".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n as f64;
    let my = ly.iter().sum::<f64>() / n as f64;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = (rss / (n - 2) as f64 / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 2) as f64)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(ScalingFit {
        slope,
        intercept,
        slope_se,
        slope_ci: (slope - t * slope_se, slope + t * slope_se),
        points: n,
    })
}
