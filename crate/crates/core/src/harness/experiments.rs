//! Monte Carlo experiments on the second class particle and the height function.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::coupling::{track_q, DiscrepancyPair, PairLaw};
use crate::error::{Error, Result};
use crate::flux;
use crate::harness::config::{ExperimentConfig, RingSize};
use crate::measures::stationary;
use crate::microconcavity::{require_concave_tazrp, run_walkers, WalkerOutcome};
use crate::replicate::{auxiliary_rng, family_rng, map_replicates, replicate_rng};
use crate::simulator::RingState;
use crate::stats::{self, Estimate, ScalingFit, TailCheck};

/// `E|Q(t) - ⌊V t⌋|^m` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub t: f64,
    pub m: u32,
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Second class particle positions, one trajectory per replicate observed
/// at every time of the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QSamples {
    pub v: f64,
    pub l: usize,
    pub t_list: Vec<f64>,
    /// `q[k][r]` is `Q(t_k)` in replicate `r`.
    pub q: Vec<Vec<i64>>,
}

impl QSamples {
    pub fn at(&self, t: f64) -> Option<&[i64]> {
        self.t_list.iter().position(|&s| s == t).map(|k| self.q[k].as_slice())
    }

    pub fn centre(&self, t: f64) -> i64 {
        (self.v * t).floor() as i64
    }
}

fn collect<T>(runs: Vec<Result<T>>) -> Result<Vec<T>> {
    runs.into_iter().collect()
}

fn transpose(rows: Vec<Vec<i64>>, width: usize) -> Vec<Vec<i64>> {
    (0..width).map(|k| rows.iter().map(|r| r[k]).collect()).collect()
}

/// Runs `config.replicates` discrepancy pairs at density `rho` and records
/// `Q(t)` on the time grid.
pub fn sample_q(config: &ExperimentConfig) -> Result<QSamples> {
    let spec = config.spec()?;
    let v = config.characteristic_speed(&spec)?;
    let dynamics = config.dynamics(&spec, config.max_index(v))?;
    let l = config.ring_size(&dynamics)?;
    let law = PairLaw::new(&spec, config.rho)?;
    let runs = map_replicates(config.replicates, config.master_seed, |_, rng| {
        let mut pair = DiscrepancyPair::new(&law, l, rng.clone())?;
        track_q(&mut pair, &dynamics, &config.t_list)
    });
    Ok(QSamples {
        v,
        l,
        t_list: config.t_list.clone(),
        q: transpose(collect(runs)?, config.t_list.len()),
    })
}

/// Moments of `|Q(t) - ⌊V t⌋|` for each time and order. The standard error of
/// a sample mean coincides with its delete-one jackknife error.
pub fn estimate_q_moments(samples: &QSamples, m_list: &[u32]) -> Vec<MomentEstimate> {
    let mut out = Vec::new();
    for (k, &t) in samples.t_list.iter().enumerate() {
        let c = samples.centre(t);
        for &m in m_list {
            let xs: Vec<f64> = samples.q[k].iter().map(|&q| ((q - c).abs() as f64).powi(m as i32)).collect();
            let e = stats::mean(&xs);
            out.push(MomentEstimate {
                t,
                m,
                value: e.value,
                std_error: e.std_error,
                n: e.n,
            });
        }
    }
    out
}

/// Log-log least squares of moment estimates of one order against time.
pub fn fit_scaling(estimates: &[MomentEstimate]) -> Result<ScalingFit> {
    if estimates.windows(2).any(|w| w[0].m != w[1].m) {
        return Err(Error::InvalidParameter("scaling fit mixes moment orders".into()));
    }
    let t: Vec<f64> = estimates.iter().map(|e| e.t).collect();
    let y: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    stats::fit_power_law(&t, &y)
}

/// `E|Q(4t) - ⌊4Vt⌋|^2 / E|Q(t) - ⌊Vt⌋|^2` for every `t` whose quadruple is
/// also on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthRatio {
    pub t: f64,
    pub ratio: Estimate,
}

pub fn second_moment_ratios(samples: &QSamples) -> Result<Vec<GrowthRatio>> {
    let mut out = Vec::new();
    for &t in &samples.t_list {
        let (Some(a), Some(b)) = (samples.at(4.0 * t), samples.at(t)) else {
            continue;
        };
        let sq = |xs: &[i64], c: i64| -> Vec<f64> { xs.iter().map(|&q| ((q - c) as f64).powi(2)).collect() };
        let ratio = stats::ratio_of_means(&sq(a, samples.centre(4.0 * t)), &sq(b, samples.centre(t)))?;
        out.push(GrowthRatio { t, ratio });
    }
    Ok(out)
}

/// One row of the law-of-large-numbers table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LlnRow {
    pub t: f64,
    /// `mean Q(t) / t`.
    pub mean_speed: Estimate,
    /// `|mean Q(t)/t - V|` in units of its standard error.
    pub z_score: f64,
    /// `E|Q(t)/t - V|`.
    pub mean_abs_deviation: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LlnReport {
    pub v: f64,
    pub rows: Vec<LlnRow>,
    /// `E|Q(t)/t - V|` strictly decreases along the grid.
    pub deviation_decreasing: bool,
    /// `|mean Q/t - V| < 4 SE` at the last time.
    pub final_within_4se: bool,
}

pub fn lln_check(samples: &QSamples) -> LlnReport {
    let v = samples.v;
    let mut rows = Vec::new();
    for (k, &t) in samples.t_list.iter().enumerate() {
        if t <= 0.0 {
            continue;
        }
        let speeds: Vec<f64> = samples.q[k].iter().map(|&q| q as f64 / t).collect();
        let mean_speed = stats::mean(&speeds);
        let dev: Vec<f64> = speeds.iter().map(|s| (s - v).abs()).collect();
        rows.push(LlnRow {
            t,
            mean_speed,
            z_score: (mean_speed.value - v).abs() / mean_speed.std_error,
            mean_abs_deviation: stats::mean(&dev),
        });
    }
    let deviation_decreasing = rows
        .windows(2)
        .all(|w| w[1].mean_abs_deviation.value < w[0].mean_abs_deviation.value);
    let final_within_4se = rows.last().is_some_and(|r| r.z_score < 4.0);
    LlnReport {
        v,
        rows,
        deviation_decreasing,
        final_within_4se,
    }
}

/// Heights `h_i(t) - h_0(0)` at `i = ⌊V t⌋` from stationary rings, one trajectory
/// per replicate observed at every time of the grid. Streams come from the
/// auxiliary family so they are independent of [`sample_q`] with the same seed.
pub fn sample_heights(config: &ExperimentConfig, v: f64) -> Result<(usize, Vec<Vec<i64>>)> {
    let spec = config.spec()?;
    let dynamics = config.dynamics(&spec, config.max_index(v))?;
    let l = config.ring_size(&dynamics)?;
    let mu = stationary(&spec, config.rho)?;
    let runs = map_replicates(config.replicates, config.master_seed, |r, _| {
        let mut ring = RingState::from_measure(&mu, l, auxiliary_rng(config.master_seed, r as u64))?;
        let mut out = Vec::with_capacity(config.t_list.len());
        for &t in &config.t_list {
            ring.run(&dynamics, t, &mut ())?;
            out.push(ring.height((v * t).floor() as i64)?);
        }
        Ok(out)
    });
    Ok((l, transpose(collect(runs)?, config.t_list.len())))
}

/// The two exact identities for the second class particle at the last time of the grid:
/// `E Q(t) = V t` and `Var h_0(t) = Var(ω) E|Q(t)|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub t: f64,
    pub v: f64,
    pub l: usize,
    pub mean_q: Estimate,
    /// `|mean Q - V t| / SE`.
    pub drift_z: f64,
    pub drift_pass: bool,
    /// `Var h_0(t)` measured directly on stationary rings.
    pub var_direct: Estimate,
    /// `Var(ω) E|Q(t)|`.
    pub var_via_q: Estimate,
    pub relative_gap: f64,
    pub intervals_overlap: bool,
    pub variance_pass: bool,
}

pub fn identities(config: &ExperimentConfig) -> Result<IdentityReport> {
    let spec = config.spec()?;
    let var_omega = stationary(&spec, config.rho)?.variance();
    let samples = sample_q(config)?;
    let (_, heights) = sample_heights(config, 0.0)?;
    let k = config.t_list.len() - 1;
    let t = config.t_list[k];
    let q: Vec<f64> = samples.q[k].iter().map(|&x| x as f64).collect();
    let mean_q = stats::mean(&q);
    let drift_z = (mean_q.value - samples.v * t).abs() / mean_q.std_error;
    let abs_q: Vec<f64> = q.iter().map(|x| x.abs()).collect();
    let e_abs = stats::mean(&abs_q);
    let var_via_q = Estimate {
        value: var_omega * e_abs.value,
        std_error: var_omega * e_abs.std_error,
        n: e_abs.n,
    };
    let h: Vec<f64> = heights[k].iter().map(|&x| x as f64).collect();
    let var_direct = stats::variance(&h);
    let relative_gap = (var_direct.value - var_via_q.value).abs() / var_via_q.value;
    let intervals_overlap = var_direct.overlaps(&var_via_q, 0.95);
    Ok(IdentityReport {
        t,
        v: samples.v,
        l: samples.l,
        mean_q,
        drift_z,
        drift_pass: drift_z < 4.0,
        var_direct,
        var_via_q,
        relative_gap,
        intervals_overlap,
        variance_pass: intervals_overlap && relative_gap < 0.05,
    })
}

/// Height fluctuations along a non-characteristic direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CltStatistics {
    /// `Var h / (D t)` with the standard error of the sample variance.
    pub variance_ratio: Estimate,
    /// Kolmogorov distance of the heights, centred at the exact mean and scaled
    /// by the sample standard deviation, to the standard normal law.
    pub ks_distance: f64,
}

/// `heights` are integer samples with exact mean `mean`; `d` the diffusivity.
pub fn clt_statistics(heights: &[i64], mean: f64, d: f64, t: f64) -> Result<CltStatistics> {
    let h: Vec<f64> = heights.iter().map(|&x| x as f64).collect();
    let var = stats::variance(&h);
    let scale = d * t;
    let sd = var.value.sqrt();
    if !(sd > 0.0) {
        return Err(Error::InvalidParameter("heights have zero spread".into()));
    }
    let normal = Normal::new(mean, sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(CltStatistics {
        variance_ratio: Estimate {
            value: var.value / scale,
            std_error: var.std_error / scale,
            n: var.n,
        },
        ks_distance: stats::ks_lattice(heights, |x| normal.cdf(x)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CltRow {
    pub t: f64,
    pub index: i64,
    pub mean: f64,
    pub stats: CltStatistics,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CltReport {
    pub v: f64,
    pub v_rho: f64,
    pub d: f64,
    pub l: usize,
    pub rows: Vec<CltRow>,
}

/// `D = Var(ω) |V^ρ - V|`; refuses the characteristic direction.
pub fn diffusivity(var_omega: f64, v_rho: f64, v: f64) -> Result<f64> {
    let gap = (v_rho - v).abs();
    if gap <= 1e-9 * v.abs().max(1.0) {
        return Err(Error::DegenerateDirection(v));
    }
    Ok(var_omega * gap)
}

pub fn clt_check(config: &ExperimentConfig) -> Result<CltReport> {
    let spec = config.spec()?;
    let v = config
        .v_override
        .ok_or_else(|| Error::Config("the CLT check needs V_override".into()))?;
    let point = flux::flux_point(&spec, config.rho)?;
    let d = diffusivity(point.variance, point.speed, v)?;
    let (l, heights) = sample_heights(config, v)?;
    let mut rows = Vec::new();
    for (k, &t) in config.t_list.iter().enumerate() {
        if t <= 0.0 {
            continue;
        }
        let index = (v * t).floor() as i64;
        let mean = point.flux * t - config.rho * index as f64;
        rows.push(CltRow {
            t,
            index,
            mean,
            stats: clt_statistics(&heights[k], mean, d, t)?,
        });
    }
    Ok(CltReport {
        v,
        v_rho: point.speed,
        d,
        l,
        rows,
    })
}

/// Empirical tails of `y` and `-z` against the geometric bound `r^m`, with a DKW margin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominationReport {
    pub r: f64,
    pub alpha: f64,
    pub n: usize,
    pub y: TailCheck,
    pub neg_z: TailCheck,
    pub pass: bool,
}

pub fn domination_test(y: &[i64], z: &[i64], r: f64, alpha: f64) -> Result<DominationReport> {
    let n = y.len().min(z.len());
    if n < 1000 {
        return Err(Error::InsufficientPoints { need: 1000, got: n });
    }
    let bound = |m: i64| r.powi(m as i32);
    let neg: Vec<i64> = z.iter().map(|v| -v).collect();
    let y = stats::tail_domination(y, bound, alpha);
    let neg_z = stats::tail_domination(&neg, bound, alpha);
    Ok(DominationReport {
        r,
        alpha,
        n,
        pass: y.pass && neg_z.pass,
        y,
        neg_z,
    })
}

/// Results of many label-walker trajectories.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MicroReport {
    pub lambda: f64,
    pub rho: f64,
    pub t: f64,
    pub l: usize,
    pub r: f64,
    pub trajectories: usize,
    /// Messages of trajectories that hit an invariant violation.
    pub failures: Vec<String>,
    pub min_middle_prob: f64,
    /// Final walker labels, one per completed trajectory.
    #[serde(skip)]
    pub y: Vec<i64>,
    #[serde(skip)]
    pub z: Vec<i64>,
    pub domination: DominationReport,
    /// Two-sample KS distance between `X_y(t)` and the direct pair's `Q(t)`.
    pub ks_distance: f64,
    pub ks_critical: f64,
    pub ks_alpha: f64,
}

impl MicroReport {
    pub fn invariants_hold(&self) -> bool {
        self.failures.is_empty() && self.min_middle_prob >= 0.0
    }

    pub fn marginal_pass(&self) -> bool {
        self.ks_distance <= self.ks_critical
    }
}

/// Label walkers over `config.replicates` trajectories of the `(η, ω)` pair at
/// densities `λ < ρ`, plus as many direct discrepancy pairs at `ρ` for the
/// marginal comparison at the last time of the grid.
pub fn microconcavity_run(config: &ExperimentConfig, ks_alpha: f64) -> Result<MicroReport> {
    let spec = config.spec()?;
    let r = require_concave_tazrp(&spec, 40)?;
    let lambda = config
        .lambda
        .ok_or_else(|| Error::Config("the microconcavity run needs lambda".into()))?;
    if !(lambda < config.rho) {
        return Err(Error::Config(format!("lambda {lambda} must be below rho {}", config.rho)));
    }
    let dynamics = config.dynamics(&spec, 0)?;
    let l = config.ring_size(&dynamics)?;
    let t = config.t_max();
    let runs: Vec<Result<WalkerOutcome>> = map_replicates(config.replicates, config.master_seed, |i, _| {
        run_walkers(
            &spec,
            &dynamics,
            lambda,
            config.rho,
            l,
            &config.t_list,
            replicate_rng(config.master_seed, i as u64),
            auxiliary_rng(config.master_seed, i as u64),
        )
    });
    let mut failures = Vec::new();
    let mut outcomes = Vec::new();
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push(format!("trajectory {i}: {e}")),
        }
    }
    let y: Vec<i64> = outcomes.iter().map(|o| o.y).collect();
    let z: Vec<i64> = outcomes.iter().map(|o| o.z).collect();
    let domination = domination_test(&y, &z, r, config.alpha)?;
    let min_middle_prob = outcomes
        .iter()
        .map(|o| o.stats.min_middle_prob)
        .fold(f64::INFINITY, f64::min);

    let law = PairLaw::new(&spec, config.rho)?;
    let direct = collect(map_replicates(config.replicates, config.master_seed, |i, _| {
        let mut pair = DiscrepancyPair::new(&law, l, family_rng(config.master_seed, 2, i as u64))?;
        pair.run_checked(&dynamics, t, &[0])
    }))?;
    let walker_q: Vec<f64> = outcomes.iter().map(|o| o.q as f64).collect();
    let direct_q: Vec<f64> = direct.iter().map(|&q| q as f64).collect();
    Ok(MicroReport {
        lambda,
        rho: config.rho,
        t,
        l,
        r,
        trajectories: config.replicates,
        failures,
        min_middle_prob,
        y,
        z,
        domination,
        ks_distance: stats::ks_two_sample(&walker_q, &direct_q),
        ks_critical: stats::ks_two_sample_critical(ks_alpha, walker_q.len(), direct_q.len()),
        ks_alpha,
    })
}

/// One estimate at the configured ring size against the rerun on a ring twice as long.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DoublingRow {
    pub t: f64,
    pub m: u32,
    pub base: MomentEstimate,
    pub doubled: MomentEstimate,
    pub overlap: bool,
}

/// Reruns the moment estimates on `2L` with fresh streams and compares 95% intervals.
pub fn ring_doubling_check(config: &ExperimentConfig, base: &QSamples) -> Result<Vec<DoublingRow>> {
    let mut doubled_cfg = config.clone();
    doubled_cfg.ring = RingSize::Fixed(2 * base.l);
    doubled_cfg.master_seed = config.master_seed.wrapping_add(1);
    let doubled = sample_q(&doubled_cfg)?;
    let a = estimate_q_moments(base, &config.moments);
    let b = estimate_q_moments(&doubled, &config.moments);
    Ok(a.into_iter()
        .zip(b)
        .map(|(x, y)| {
            let ex = Estimate { value: x.value, std_error: x.std_error, n: x.n };
            let ey = Estimate { value: y.value, std_error: y.std_error, n: y.n };
            DoublingRow {
                t: x.t,
                m: x.m,
                base: x,
                doubled: y,
                overlap: ex.overlaps(&ey, 0.95),
            }
        })
        .collect())
}
