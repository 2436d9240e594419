//! Label walkers `y(t) <= z(t)` riding on the discrepancies between two
//! ordered totally asymmetric zero range processes `η <= ω` with concave `f`.
//!
//! The walkers pick labels among the `ω - η` particles. Whenever anything
//! changes at the site of a walker's carrier, the walker re-chooses between
//! the lowest label `a` and the highest label `b` of that site; when the
//! carrier is the top label and an `ω`-only jump leaves the site, the walker
//! rides along and becomes the lowest label at the new site. Seen through
//! `ω^- = ω - δ_{X_y}` and `η^+ = η + δ_{X_z}`, the carriers are second class
//! particles at the two densities, and `X_y <= X_z` holds throughout.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coupling::{two_density_pair, CoupledEvent, CoupledObserver, CoupledState};
use crate::error::{Error, Result};
use crate::rates::{check_slope_decay, RateSpec};
use crate::simulator::{ring_site, Dynamics};

const PROB_TOL: f64 = 1e-12;

fn checked(p: f64) -> Result<f64> {
    if !(-PROB_TOL..=1.0 + PROB_TOL).contains(&p) || p.is_nan() {
        return Err(Error::NegativeProbability(p));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Probability that the lower walker refreshes to `a`.
pub fn prob_y_low(f: &dyn Fn(i64) -> f64, omega: i64, eta: i64) -> Result<f64> {
    let den = f(omega) - f(eta);
    if den <= 0.0 {
        return Ok(1.0);
    }
    checked((f(omega - 1) - f(eta)) / den)
}

/// Probability that the upper walker refreshes to `b - 1`.
pub fn prob_z_down(f: &dyn Fn(i64) -> f64, omega: i64, eta: i64) -> Result<f64> {
    let den = f(omega) - f(eta);
    if den <= 0.0 {
        return Ok(0.0);
    }
    checked((f(omega) - f(eta + 1)) / den)
}

/// Probabilities of `(a, b-1)`, `(a, b)` and `(b, b)` for the joint refresh.
pub fn joint_probs(f: &dyn Fn(i64) -> f64, omega: i64, eta: i64) -> Result<[f64; 3]> {
    let den = f(omega) - f(eta);
    if den <= 0.0 {
        return Ok([0.0, 1.0, 0.0]);
    }
    let p1 = checked((f(omega) - f(eta + 1)) / den)?;
    let p2 = checked((f(eta + 1) - f(eta) - (f(omega) - f(omega - 1))) / den)?;
    let p3 = checked((f(omega) - f(omega - 1)) / den)?;
    Ok([p1, p2, p3])
}

/// New `y` for a carrier site with occupancies `omega > eta` and label range `a..=b`.
pub fn refresh_y(f: &dyn Fn(i64) -> f64, omega: i64, eta: i64, a: i64, b: i64, u: f64) -> Result<i64> {
    Ok(if u < prob_y_low(f, omega, eta)? { a } else { b })
}

/// New `z`; `b - 1` is only reachable when the site holds at least two labels.
pub fn refresh_z(f: &dyn Fn(i64) -> f64, omega: i64, eta: i64, a: i64, b: i64, u: f64) -> Result<i64> {
    let _ = a;
    Ok(if u < prob_z_down(f, omega, eta)? { b - 1 } else { b })
}

/// Joint refresh when both walkers sit in one interval; one uniform split in
/// the order `(a, b-1)`, `(a, b)`, `(b, b)`.
pub fn refresh_joint(f: &dyn Fn(i64) -> f64, omega: i64, eta: i64, a: i64, b: i64, u: f64) -> Result<(i64, i64)> {
    let [p1, p2, _] = joint_probs(f, omega, eta)?;
    Ok(if u < p1 {
        (a, b - 1)
    } else if u < p1 + p2 {
        (a, b)
    } else {
        (b, b)
    })
}

/// Geometric law `ν(m) = (1 - r) r^m` on `m >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Geometric {
    pub r: f64,
}

impl Geometric {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidParameter(format!("geometric ratio must lie in (0, 1), got {r}")));
        }
        Ok(Self { r })
    }

    pub fn pmf(&self, m: i64) -> f64 {
        if m < 0 {
            0.0
        } else {
            (1.0 - self.r) * self.r.powi(m as i32)
        }
    }

    /// `ν{>= m}`.
    pub fn tail(&self, m: i64) -> f64 {
        if m <= 0 {
            1.0
        } else {
            self.r.powi(m as i32)
        }
    }

    pub fn cdf(&self, m: i64) -> f64 {
        1.0 - self.tail(m + 1)
    }
}

/// Counters collected while driving the walkers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct WalkerStats {
    pub events: u64,
    pub triggers: u64,
    pub joint_refreshes: u64,
    pub carrier_moves: u64,
    /// Smallest middle-branch probability of a joint refresh seen.
    pub min_middle_prob: f64,
}

/// One line of the walker trajectory dump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WalkerRecord {
    pub time: f64,
    pub y: i64,
    pub z: i64,
    pub x_y: i64,
    pub x_z: i64,
}

/// The walkers `y <= z` with lifted carrier positions, driven by a coupled
/// `(η, ω)` pair (process 0 is `η`).
#[derive(Clone, Debug)]
pub struct LabelWalkers {
    pub y: i64,
    pub z: i64,
    pub x_y: i64,
    pub x_z: i64,
    pub stats: WalkerStats,
    pub record: Option<Vec<WalkerRecord>>,
    f: Vec<f64>,
    f_lo: i64,
    rng: ChaCha8Rng,
}

impl LabelWalkers {
    /// Both walkers start on label 0 at site 0.
    pub fn new(spec: &RateSpec, dynamics: &Dynamics, rng: ChaCha8Rng) -> Self {
        let (lo, hi) = dynamics.table.window();
        Self {
            y: 0,
            z: 0,
            x_y: 0,
            x_z: 0,
            stats: WalkerStats {
                min_middle_prob: f64::INFINITY,
                ..Default::default()
            },
            record: None,
            f: (lo - 1..=hi + 1).map(|z| spec.f(z)).collect(),
            f_lo: lo - 1,
            rng,
        }
    }

    pub fn recording(mut self) -> Self {
        self.record = Some(vec![WalkerRecord { time: 0.0, y: 0, z: 0, x_y: 0, x_z: 0 }]);
        self
    }

    #[inline]
    fn site_state(&self, state: &CoupledState, x: i64) -> Result<(i64, i64, i64, i64)> {
        let s = ring_site(x, state.len());
        let (eta, omega) = (state.configs[0][s], state.configs[1][s]);
        let labels = state.labels.as_ref().expect("walkers need labels");
        let (a, b) = labels
            .interval(x)
            .ok_or_else(|| Error::Bookkeeping(format!("walker carrier site {x} holds no discrepancy")))?;
        Ok((omega, eta, a, b))
    }

    fn check(&self, state: &CoupledState) -> Result<()> {
        let l = state.len() as i64;
        for (m, x) in [(self.y, self.x_y), (self.z, self.x_z)] {
            let (_, _, a, b) = self.site_state(state, x)?;
            if m < a || m > b {
                return Err(Error::Bookkeeping(format!("label {m} outside [{a}, {b}] at site {x}")));
            }
            if 2 * x.abs() >= l - 2 {
                return Err(Error::IndexOutOfWindow { index: x, l: l as usize });
            }
        }
        if self.y > self.z || self.x_y > self.x_z {
            return Err(Error::Bookkeeping(format!(
                "walker order broken: y={} at {}, z={} at {}",
                self.y, self.x_y, self.z, self.x_z
            )));
        }
        Ok(())
    }

    /// `(η, η^+, ω^-, ω)` with the sitewise orderings checked.
    pub fn four_process_view(&self, state: &CoupledState) -> Result<[Vec<i64>; 4]> {
        let l = state.len();
        let eta = state.configs[0].clone();
        let omega = state.configs[1].clone();
        let mut eta_plus = eta.clone();
        eta_plus[ring_site(self.x_z, l)] += 1;
        let mut omega_minus = omega.clone();
        omega_minus[ring_site(self.x_y, l)] -= 1;
        for s in 0..l {
            if !(eta[s] <= eta_plus[s] && eta_plus[s] <= omega[s] && eta[s] <= omega_minus[s] && omega_minus[s] <= omega[s]) {
                return Err(Error::Bookkeeping(format!("four-process order broken at site {s}")));
            }
        }
        Ok([eta, eta_plus, omega_minus, omega])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "y", "z", "x_y", "x_z"])?;
        for r in self.record.iter().flatten() {
            w.write_record([r.time.to_string(), r.y.to_string(), r.z.to_string(), r.x_y.to_string(), r.x_z.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl CoupledObserver for LabelWalkers {
    fn on_event(&mut self, event: &CoupledEvent, state: &CoupledState) -> Result<()> {
        self.stats.events += 1;
        let l = state.len();
        let src = event.bond;
        let dst = if src + 1 == l { 0 } else { src + 1 };
        let touched = |x: i64| {
            let s = ring_site(x, l);
            s == src || s == dst
        };
        let y_trig = touched(self.x_y);
        let z_trig = touched(self.x_z);
        if !y_trig && !z_trig {
            return Ok(());
        }
        self.stats.triggers += 1;
        if let Some(d) = event.discrepancy {
            let total = state.labels.as_ref().expect("walkers need labels").total();
            let li = l as i64;
            for (m, x) in [(self.y, &mut self.x_y), (self.z, &mut self.x_z)] {
                if ring_site(*x, l) == d.from && m == d.label + total * x.div_euclid(li) {
                    *x += d.direction;
                    self.stats.carrier_moves += 1;
                }
            }
        }
        let (table, lo) = (&self.f, self.f_lo);
        let f = |z: i64| table[(z - lo) as usize];
        if self.x_y == self.x_z {
            let (omega, eta, a, b) = self.site_state(state, self.x_y)?;
            let probs = joint_probs(&f, omega, eta)?;
            self.stats.min_middle_prob = self.stats.min_middle_prob.min(probs[1]);
            let u = self.rng.random::<f64>();
            let (y, z) = refresh_joint(&f, omega, eta, a, b, u)?;
            self.y = y;
            self.z = z;
            self.stats.joint_refreshes += 1;
        } else {
            if y_trig {
                let (omega, eta, a, b) = self.site_state(state, self.x_y)?;
                let u = self.rng.random::<f64>();
                self.y = refresh_y(&f, omega, eta, a, b, u)?;
            }
            if z_trig {
                let (omega, eta, a, b) = self.site_state(state, self.x_z)?;
                let u = self.rng.random::<f64>();
                self.z = refresh_z(&f, omega, eta, a, b, u)?;
            }
        }
        self.check(state)?;
        if let Some(rec) = self.record.as_mut() {
            rec.push(WalkerRecord {
                time: event.time,
                y: self.y,
                z: self.z,
                x_y: self.x_y,
                x_z: self.x_z,
            });
        }
        Ok(())
    }
}

/// Final state of one walker trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WalkerOutcome {
    pub y: i64,
    pub z: i64,
    /// `Q(t) = X_{y(t)}(t)`.
    pub q: i64,
    /// `Q^η(t) = X_{z(t)}(t)`.
    pub q_eta: i64,
    pub stats: WalkerStats,
}

/// Checks that `spec` is a totally asymmetric zero range process whose `f`
/// has exponentially decreasing slope; returns the ratio `r`.
pub fn require_concave_tazrp(spec: &RateSpec, z_window: i64) -> Result<f64> {
    if !spec.is_tazrp() {
        return Err(Error::InvalidParameter(
            "the label-walker construction needs a totally asymmetric zero range process".into(),
        ));
    }
    let c = check_slope_decay(&|z| spec.f(z), z_window);
    if !c.holds {
        return Err(Error::InvalidParameter(format!(
            "f fails the exponentially-decreasing-slope condition at z = {:?}",
            c.witness
        )));
    }
    Ok(c.r)
}

/// Runs one trajectory: background pair at densities `lambda <= rho` on a
/// ring of `l` sites up to time `t`, walkers with their own stream, and
/// checks the four-process ordering at each of `observe` (increasing times).
pub fn run_walkers(
    spec: &RateSpec,
    dynamics: &Dynamics,
    lambda: f64,
    rho: f64,
    l: usize,
    observe: &[f64],
    background_rng: ChaCha8Rng,
    walker_rng: ChaCha8Rng,
) -> Result<WalkerOutcome> {
    let mut state = two_density_pair(spec, &vec![lambda; l], &vec![rho; l], background_rng)?;
    let mut walkers = LabelWalkers::new(spec, dynamics, walker_rng);
    walkers.four_process_view(&state)?;
    for &t in observe {
        state.run(dynamics, t, &mut walkers)?;
        walkers.four_process_view(&state)?;
    }
    Ok(WalkerOutcome {
        y: walkers.y,
        z: walkers.z,
        q: walkers.x_y,
        q_eta: walkers.x_z,
        stats: walkers.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{RateProfile, RateSpec};
    use rand::SeedableRng;

    fn sat(z: i64) -> f64 {
        if z <= 0 {
            0.0
        } else {
            1.0 - (-(z as f64)).exp()
        }
    }

    #[test]
    fn refresh_probabilities_for_saturating_rate() {
        // f(1)/f(2) = 1/(1 + e^{-1})
        let py = prob_y_low(&sat, 2, 0).unwrap();
        assert!((py - 0.731_058_578_630_004_9).abs() < 1e-15);
        let pz = prob_z_down(&sat, 2, 0).unwrap();
        assert!((pz - 0.268_941_421_369_995_1).abs() < 1e-15);
        let j = joint_probs(&sat, 2, 0).unwrap();
        assert!((j[0] - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert!((j[1] - 0.462_117_157_260_009_8).abs() < 1e-15);
        assert!((j[2] - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert!((j.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_label_sites() {
        assert_eq!(prob_z_down(&sat, 3, 2).unwrap(), 0.0);
        let j = joint_probs(&sat, 3, 2).unwrap();
        assert_eq!(j[0], 0.0);
        assert!(j[1].abs() < 1e-15);
        for k in 0..10 {
            let u = k as f64 / 10.0;
            assert_eq!(refresh_y(&sat, 3, 2, 4, 4, u).unwrap(), 4);
            assert_eq!(refresh_z(&sat, 3, 2, 4, 4, u).unwrap(), 4);
        }
    }

    #[test]
    fn flat_rate_takes_degenerate_branches() {
        let flat = |z: i64| if z > 0 { 1.0 } else { 0.0 };
        assert_eq!(refresh_y(&flat, 5, 2, -1, 1, 0.99).unwrap(), -1);
        assert_eq!(refresh_z(&flat, 5, 2, -1, 1, 0.0).unwrap(), 1);
        assert_eq!(refresh_joint(&flat, 5, 2, -1, 1, 0.5).unwrap(), (-1, 1));
    }

    #[test]
    fn convex_rate_gives_negative_middle_branch() {
        let convex = |z: i64| (z.max(0) * z.max(0)) as f64;
        assert!(matches!(joint_probs(&convex, 3, 0), Err(Error::NegativeProbability(_))));
    }

    #[test]
    fn geometric_law() {
        let g = Geometric::new(0.5).unwrap();
        assert_eq!(g.pmf(0), 0.5);
        assert_eq!(g.pmf(1), 0.25);
        assert_eq!(g.tail(3), 0.125);
        assert!(Geometric::new(1.0).is_err());
    }

    #[test]
    fn walkers_stay_ordered() {
        let spec = RateSpec::zero_range(1.0, RateProfile::saturating(1.0)).unwrap();
        let r = require_concave_tazrp(&spec, 30).unwrap();
        assert!((r - (-1.0f64).exp()).abs() < 1e-9);
        let dynamics = Dynamics::new(&spec, None).unwrap().with_guard(None);
        let times: Vec<f64> = (1..=10).map(|k| k as f64).collect();
        for seed in 0..20 {
            let out = run_walkers(
                &spec,
                &dynamics,
                0.75,
                1.0,
                100,
                &times,
                ChaCha8Rng::seed_from_u64(seed),
                ChaCha8Rng::seed_from_u64(1000 + seed),
            )
            .unwrap();
            assert!(out.y <= out.z && out.q <= out.q_eta);
            assert!(out.stats.min_middle_prob >= 0.0);
        }
    }

    #[test]
    fn walkers_refuse_two_sided_models() {
        let spec = RateSpec::zero_range(0.7, RateProfile::saturating(1.0)).unwrap();
        assert!(require_concave_tazrp(&spec, 20).is_err());
        let lin = RateSpec::zero_range(1.0, RateProfile::Linear { slope: 1.0 }).unwrap();
        assert!(require_concave_tazrp(&lin, 20).is_err());
    }
}
