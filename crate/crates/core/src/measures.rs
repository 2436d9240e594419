//! Product-form invariant measures `μ^θ(z) ∝ e^{θz} / f(z)!`, their density
//! parametrization and the seed law used to launch a single discrepancy.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rates::RateSpec;

/// Relative tail mass allowed to be dropped when truncating an infinite support.
pub const DEFAULT_TAIL_TOL: f64 = 1e-15;

const MAX_SUPPORT: usize = 2_000_000;
const DOMINANCE_TOL: f64 = 1e-12;

/// A probability law on a contiguous integer interval `lo..lo + pmf.len()`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    lo: i64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    /// Upper bound on the relative mass discarded outside the support.
    pub tail_bound: f64,
}

impl DiscreteMeasure {
    /// Builds a measure from nonnegative weights starting at `lo`.
    pub fn from_weights(lo: i64, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        let pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for w in &pmf {
            acc += w;
            cdf.push(acc.min(1.0));
        }
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Self {
            lo,
            pmf,
            cdf,
            tail_bound: 0.0,
        })
    }

    pub fn point_mass(z: i64) -> Self {
        Self {
            lo: z,
            pmf: vec![1.0],
            cdf: vec![1.0],
            tail_bound: 0.0,
        }
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.pmf.len() as i64 - 1
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, z: i64) -> f64 {
        if z < self.lo || z > self.hi() {
            0.0
        } else {
            self.pmf[(z - self.lo) as usize]
        }
    }

    /// `P(X <= z)`.
    pub fn cdf(&self, z: i64) -> f64 {
        if z < self.lo {
            0.0
        } else if z >= self.hi() {
            1.0
        } else {
            self.cdf[(z - self.lo) as usize]
        }
    }

    pub fn support(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.pmf.iter().enumerate().map(move |(k, &w)| (self.lo + k as i64, w))
    }

    pub fn expect(&self, g: impl Fn(i64) -> f64) -> f64 {
        self.support().map(|(z, w)| w * g(z)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|z| z as f64)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|z| (z as f64 - m).powi(2))
    }

    /// Smallest `z` with `P(X <= z) > u`, for `u` in `[0, 1)`.
    #[inline]
    pub fn quantile(&self, u: f64) -> i64 {
        let k = self.cdf.partition_point(|&c| c <= u);
        self.lo + k.min(self.pmf.len() - 1) as i64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.quantile(rng.random::<f64>())
    }
}

/// Admissible density interval `(ω_min, ω_max)`.
pub fn density_range(spec: &RateSpec) -> (f64, f64) {
    (spec.space.min_f64(), spec.space.max_f64())
}

/// `μ^θ` with metadata; see [`tilted`].
pub fn tilted_measure(spec: &RateSpec, theta: f64, tol: f64) -> Result<TiltedMeasure> {
    let (tlo, thi) = spec.theta_bounds();
    if !theta.is_finite() || theta <= tlo || theta >= thi {
        return Err(Error::ThetaOutOfRange {
            theta,
            lo: tlo,
            hi: thi,
        });
    }
    // log-weights relative to z = 0
    let mut up = Vec::new(); // z = 1, 2, ...
    let mut down = Vec::new(); // z = -1, -2, ...
    let mut up_tail = 0.0;
    let mut down_tail = 0.0;

    let grow = |out: &mut Vec<f64>, step: &dyn Fn(i64) -> Option<f64>| -> Result<f64> {
        // returns bound on discarded weight relative to the weight at 0
        let mut lw = 0.0f64;
        let mut k = 0i64;
        loop {
            let Some(lr) = step(k) else { return Ok(0.0) };
            lw += lr;
            out.push(lw);
            k += 1;
            // the log-ratio sequence is nonincreasing, so the tail beyond the
            // current point is bounded by a geometric series with the next ratio
            if let Some(next) = step(k) {
                if next < 0.0 {
                    let r = next.exp();
                    let bound = lw.exp() * r / (1.0 - r);
                    if bound <= tol {
                        return Ok(bound);
                    }
                }
            } else {
                return Ok(0.0);
            }
            if out.len() > MAX_SUPPORT {
                return Err(Error::Truncation(format!(
                    "support of the tilted measure exceeds {MAX_SUPPORT} states at theta={theta}"
                )));
            }
        }
    };

    let space = spec.space;
    let step_up = |k: i64| -> Option<f64> {
        let z = k + 1;
        if space.omega_max.is_some_and(|m| z > m) {
            return None;
        }
        let fz = spec.f(z);
        if fz <= 0.0 {
            return None;
        }
        Some(theta - fz.ln())
    };
    let step_down = |k: i64| -> Option<f64> {
        let z = -k; // moving from z to z - 1
        if space.omega_min.is_some_and(|m| z - 1 < m) {
            return None;
        }
        let fz = spec.f(z);
        if fz <= 0.0 {
            return None;
        }
        Some(fz.ln() - theta)
    };
    if space.contains(1) {
        up_tail = grow(&mut up, &step_up)?;
    }
    if space.contains(-1) {
        down_tail = grow(&mut down, &step_down)?;
    }

    let lo = -(down.len() as i64);
    let mut logw: Vec<f64> = down.iter().rev().cloned().collect();
    logw.push(0.0);
    logw.extend_from_slice(&up);
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logw.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut mu = DiscreteMeasure::from_weights(lo, weights)?;
    mu.tail_bound = (up_tail + down_tail) * (-m).exp() / total;
    Ok(TiltedMeasure {
        theta,
        log_z: m + total.ln(),
        theta_lo: tlo,
        theta_hi: thi,
        measure: mu,
    })
}

/// `μ^θ` with its tilt, log partition function `log Z(θ)` (over the retained
/// support) and the admissible tilt interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TiltedMeasure {
    pub theta: f64,
    pub log_z: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub measure: DiscreteMeasure,
}

/// `μ^θ` truncated so that the discarded relative mass is at most `tol`.
pub fn tilted(spec: &RateSpec, theta: f64, tol: f64) -> Result<DiscreteMeasure> {
    Ok(tilted_measure(spec, theta, tol)?.measure)
}

/// `Cov(φ(ω), ω)` under `mu`, which equals `d/dθ E^θ φ` on the tilted family.
pub fn cov_with_omega(mu: &DiscreteMeasure, phi: impl Fn(i64) -> f64) -> f64 {
    let m = mu.mean();
    let e_phi = mu.expect(&phi);
    mu.expect(|z| (phi(z) - e_phi) * (z as f64 - m))
}

/// `ρ(θ) = E^θ ω`.
pub fn density_of_theta(spec: &RateSpec, theta: f64) -> Result<f64> {
    Ok(tilted(spec, theta, DEFAULT_TAIL_TOL)?.mean())
}

/// Inverts `θ -> ρ(θ)` by safeguarded Newton iteration (the derivative is the
/// variance). Returns `θ` together with the measure at that tilt.
pub fn theta_of_density(spec: &RateSpec, rho: f64) -> Result<(f64, DiscreteMeasure)> {
    let (rlo, rhi) = density_range(spec);
    if !rho.is_finite() || rho <= rlo || rho >= rhi {
        return Err(Error::DensityOutOfRange { rho, lo: rlo, hi: rhi });
    }
    let (tlo, thi) = spec.theta_bounds();
    // bracket [a, b] with rho(a) < rho < rho(b); infinite ends stand for the boundary
    let mut a = tlo;
    let mut b = thi;
    let mut theta = match (tlo.is_finite(), thi.is_finite()) {
        (false, false) => 0.0,
        (false, true) => thi - 1.0,
        (true, false) => tlo + 1.0,
        (true, true) => 0.5 * (tlo + thi),
    };
    let eval = |t: f64| -> Result<(f64, f64, DiscreteMeasure)> {
        let mu = tilted(spec, t, DEFAULT_TAIL_TOL)?;
        Ok((mu.mean(), mu.variance(), mu))
    };
    let tol = 4.0 * f64::EPSILON * rho.abs().max(1.0);
    for _ in 0..400 {
        let (m, v, mu) = eval(theta)?;
        let err = m - rho;
        if err.abs() <= tol {
            return Ok((theta, mu));
        }
        if err < 0.0 {
            a = theta;
        } else {
            b = theta;
        }
        let newton = theta - err / v;
        let next = if v > 0.0 && newton > a && newton < b {
            newton
        } else if a.is_finite() && b.is_finite() {
            0.5 * (a + b)
        } else if a.is_finite() {
            // b is the open upper end at infinity
            a + (a - theta).abs().max(1.0) * 2.0
        } else {
            b - (b - theta).abs().max(1.0) * 2.0
        };
        if a.is_finite() && b.is_finite() && (b - a) <= 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0) {
            return Ok((theta, mu));
        }
        if next == theta {
            return Ok((theta, mu));
        }
        theta = next;
    }
    Err(Error::Convergence(format!("theta(rho) for rho={rho}")))
}

/// `μ^ρ` in density parametrization.
pub fn stationary(spec: &RateSpec, rho: f64) -> Result<DiscreteMeasure> {
    Ok(theta_of_density(spec, rho)?.1)
}

/// Seed law `μ̂(y) = Var(ω)^{-1} Σ_{z > y} (z - ρ) μ(z)`, which makes the pair
/// `(ω^-, ω^- + 1)` at one site and `μ` elsewhere jointly stationary.
///
/// Computed with the truncated measure's own mean and variance so the result
/// is normalized exactly; `y >= ρ` uses suffix sums and `y < ρ` the negated
/// prefix sums, both sums of like-signed terms.
pub fn seed(mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    let m = mu.mean();
    let var = mu.variance();
    if var <= 0.0 {
        return Err(Error::InvalidParameter("seed law of a degenerate measure".into()));
    }
    let n = mu.pmf.len();
    if n == 1 {
        return Err(Error::InvalidParameter("seed law of a point mass".into()));
    }
    // y ranges over lo..hi-1
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        let z = mu.lo + k as i64;
        suffix[k] = suffix[k + 1] + (z as f64 - m) * mu.pmf[k];
    }
    let mut prefix = vec![0.0; n + 1];
    for k in 0..n {
        let z = mu.lo + k as i64;
        prefix[k + 1] = prefix[k] + (z as f64 - m) * mu.pmf[k];
    }
    let mut w = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let y = mu.lo + k as i64;
        let v = if y as f64 >= m { suffix[k + 1] } else { -prefix[k + 1] };
        w.push((v / var).max(0.0));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Truncation(format!("seed law mass {total} differs from one")));
    }
    let mut out = DiscreteMeasure::from_weights(mu.lo, w)?;
    out.tail_bound = mu.tail_bound;
    Ok(out)
}

/// Seed law at density `rho`.
pub fn seed_at(spec: &RateSpec, rho: f64) -> Result<DiscreteMeasure> {
    seed(&stationary(spec, rho)?)
}

/// Checks that `upper` stochastically dominates `lower`; reports the first
/// `z` where `P_lower(X <= z) < P_upper(X <= z)` beyond tolerance.
pub fn check_dominance(lower: &DiscreteMeasure, upper: &DiscreteMeasure) -> Result<()> {
    let lo = lower.lo.min(upper.lo);
    let hi = lower.hi().max(upper.hi());
    for z in lo..=hi {
        let (a, b) = (lower.cdf(z), upper.cdf(z));
        if a < b - DOMINANCE_TOL {
            return Err(Error::DominationViolated {
                at: z,
                lower_cdf: a,
                upper_cdf: b,
            });
        }
    }
    Ok(())
}

/// Draws an ordered pair `(x_lo, x_hi)` from a monotone coupling of two laws
/// with `lower ≼ upper`, using one common uniform.
#[inline]
pub fn coupled_pair(lower: &DiscreteMeasure, upper: &DiscreteMeasure, u: f64) -> (i64, i64) {
    let a = lower.quantile(u);
    let b = upper.quantile(u).max(a);
    (a, b)
}
