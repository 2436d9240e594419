//! Hydrodynamic flux `H(ρ) = E^ρ[p(ω_0, ω_1) - q(ω_0, ω_1)]`, the
//! characteristic speed `H'(ρ)`, the curvature `H''(ρ)` and chord slopes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{density_range, theta_of_density, DiscreteMeasure};
use crate::rates::RateSpec;

/// Largest tolerated truncation error in a flux evaluation.
const TRUNCATION_GUARD: f64 = 1e-10;

/// Flux and its first derivative at one density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FluxPoint {
    pub rho: f64,
    pub theta: f64,
    pub flux: f64,
    pub speed: f64,
    pub variance: f64,
}

fn guard_truncation(spec: &RateSpec, mu: &DiscreteMeasure) -> Result<()> {
    if mu.tail_bound == 0.0 {
        return Ok(());
    }
    let (lo, hi) = (mu.lo(), mu.hi());
    let edge = [spec.p(hi, lo), spec.q(lo, hi), spec.p(hi, hi), spec.q(lo, lo)]
        .into_iter()
        .fold(0.0f64, f64::max);
    let bound = spec.rate_upper_bound.unwrap_or(edge.max(1.0));
    if 2.0 * bound * mu.tail_bound > TRUNCATION_GUARD {
        return Err(Error::Truncation(format!(
            "flux truncation error bound {} exceeds {TRUNCATION_GUARD}",
            2.0 * bound * mu.tail_bound
        )));
    }
    Ok(())
}

/// `H`, `H'` and `Var` at density `rho`. The derivative uses
/// `dE^θ[g]/dθ = Cov(g, ω_0 + ω_1)` and `dρ/dθ = Var(ω)`.
pub fn flux_point(spec: &RateSpec, rho: f64) -> Result<FluxPoint> {
    let (theta, mu) = theta_of_density(spec, rho)?;
    guard_truncation(spec, &mu)?;
    let m = mu.mean();
    let var = mu.variance();
    let mut h = 0.0;
    let mut cov = 0.0;
    for (y, wy) in mu.support() {
        for (z, wz) in mu.support() {
            let g = spec.net_rate(y, z);
            if g != 0.0 {
                let w = wy * wz;
                h += w * g;
                cov += w * g * ((y as f64 - m) + (z as f64 - m));
            }
        }
    }
    Ok(FluxPoint {
        rho,
        theta,
        flux: h,
        speed: cov / var,
        variance: var,
    })
}

pub fn flux(spec: &RateSpec, rho: f64) -> Result<f64> {
    Ok(flux_point(spec, rho)?.flux)
}

/// Characteristic speed `V(ρ) = H'(ρ)`.
pub fn speed(spec: &RateSpec, rho: f64) -> Result<f64> {
    Ok(flux_point(spec, rho)?.speed)
}

/// `H''(ρ)` by Richardson-extrapolated central differences of `H'`,
/// with an estimate of the remaining error.
pub fn curvature(spec: &RateSpec, rho: f64) -> Result<(f64, f64)> {
    let h = (1e-3 * rho.abs()).max(1e-4);
    let (lo, hi) = density_range(spec);
    if rho - h <= lo || rho + h >= hi {
        return Err(Error::StepDegenerate(rho));
    }
    let d = |step: f64| -> Result<f64> { Ok((speed(spec, rho + step)? - speed(spec, rho - step)?) / (2.0 * step)) };
    let coarse = d(h)?;
    let fine = d(h / 2.0)?;
    let value = (4.0 * fine - coarse) / 3.0;
    Ok((value, (value - fine).abs()))
}

/// Chord slope `(H(ρ) - H(λ)) / (ρ - λ)`; equals `H'(ρ)` when the densities coincide.
pub fn chord_slope(spec: &RateSpec, lambda: f64, rho: f64) -> Result<f64> {
    if lambda == rho {
        return speed(spec, rho);
    }
    Ok((flux(spec, rho)? - flux(spec, lambda)?) / (rho - lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{RateProfile, RateSpec};

    #[test]
    fn asep_closed_forms() {
        for &p in &[1.0, 0.75] {
            let spec = RateSpec::asep(p).unwrap();
            let q = 1.0 - p;
            for &rho in &[0.2, 0.5, 0.7] {
                let fp = flux_point(&spec, rho).unwrap();
                assert!((fp.flux - (p - q) * rho * (1.0 - rho)).abs() < 1e-14);
                assert!((fp.speed - (p - q) * (1.0 - 2.0 * rho)).abs() < 1e-13);
                let (c, err) = curvature(&spec, rho).unwrap();
                assert!((c + 2.0 * (p - q)).abs() < 1e-7, "{c}");
                assert!(err < 1e-6);
            }
        }
    }

    #[test]
    fn constant_tazrp_closed_forms() {
        let spec = RateSpec::zero_range_constant(1.0).unwrap();
        for &rho in &[0.5, 1.0, 2.0] {
            let fp = flux_point(&spec, rho).unwrap();
            assert!((fp.flux - rho / (1.0 + rho)).abs() < 1e-13);
            assert!((fp.speed - 1.0 / (1.0 + rho).powi(2)).abs() < 1e-12);
            let (c, _) = curvature(&spec, rho).unwrap();
            assert!((c + 2.0 / (1.0 + rho).powi(3)).abs() < 1e-7);
        }
    }

    #[test]
    fn chord_between_densities() {
        let spec = RateSpec::asep(1.0).unwrap();
        let r = chord_slope(&spec, 0.2, 0.6).unwrap();
        assert!((r - (1.0 - 0.2 - 0.6)).abs() < 1e-13);
        let v = chord_slope(&spec, 0.4, 0.4).unwrap();
        assert!((v - 0.2).abs() < 1e-13);
    }

    #[test]
    fn boundary_step_is_rejected() {
        let spec = RateSpec::asep(1.0).unwrap();
        assert!(matches!(curvature(&spec, 0.00005), Err(Error::StepDegenerate(_))));
        let zrp = RateSpec::zero_range(1.0, RateProfile::saturating(1.0)).unwrap();
        assert!(curvature(&zrp, 1.0).unwrap().0 < 0.0);
    }
}
