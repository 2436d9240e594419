//! Basic coupling of up to four processes on one ring, labeled discrepancies
//! between a designated ordered pair, and the single-discrepancy pair whose
//! discrepancy position is the second class particle `Q(t)`.
//!
//! All processes share one clock per `(bond, move)` channel running at the
//! largest of their rates; when the channel rings, a single uniform `u` fires
//! exactly the processes with rate above `u * r_max`.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{check_dominance, seed, stationary, DiscreteMeasure};
use crate::rates::{Move, RateSpec};
use crate::simulator::{check_window, initial_height, ring_site, Dynamics};
use crate::sumtree::SumTree;

pub const MAX_PROCESSES: usize = 4;

/// Discrepancy labels between a lower and an upper configuration.
///
/// Labels on the ring are stored per site as a count `c[s]` and the first
/// label `first[s]` for sites `s` in `0..L`. A lifted position `x` (any
/// integer) carries labels `first[x mod L] + N * floor(x / L) ..` where `N`
/// is the total number of discrepancies, so labels increase with position
/// on the universal cover.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Labels {
    count: Vec<i64>,
    first: Vec<i64>,
    total: i64,
}

impl Labels {
    /// Labels the discrepancies `upper - lower` with label 0 the highest one
    /// at site 0.
    pub fn new(lower: &[i64], upper: &[i64]) -> Result<Self> {
        let l = lower.len();
        let mut count = Vec::with_capacity(l);
        for s in 0..l {
            let c = upper[s] - lower[s];
            if c < 0 {
                return Err(Error::Bookkeeping(format!("pair is not ordered at site {s}")));
            }
            count.push(c);
        }
        if count[0] == 0 {
            return Err(Error::Bookkeeping("no discrepancy at site 0 to carry label 0".into()));
        }
        let mut first = vec![0; l];
        first[0] = 1 - count[0];
        let mut next = 1;
        for s in 1..l {
            first[s] = next;
            next += count[s];
        }
        Ok(Self {
            total: count.iter().sum(),
            count,
            first,
        })
    }

    pub fn total(&self) -> i64 {
        self.total
    }

    pub fn count(&self, site: usize) -> i64 {
        self.count[site]
    }

    /// Lowest and highest label at lifted position `x`, `None` if empty.
    pub fn interval(&self, x: i64) -> Option<(i64, i64)> {
        let l = self.count.len() as i64;
        let s = x.rem_euclid(l) as usize;
        if self.count[s] == 0 {
            return None;
        }
        let a = self.first[s] + self.total * x.div_euclid(l);
        Some((a, a + self.count[s] - 1))
    }

    /// Lifted position of label `m`, by binary search over the fundamental domain.
    pub fn position(&self, m: i64) -> i64 {
        let l = self.count.len() as i64;
        let wrap = (m - self.first[0]).div_euclid(self.total.max(1));
        let local = m - wrap * self.total;
        // first[s] is nondecreasing for s >= 1; site 0 holds the labels below first[1]
        let mut s = self.first[1..].partition_point(|&f| f <= local);
        // s is the number of sites 1.. with first <= local, so the carrier is site s
        while self.count[s] == 0 || local >= self.first[s] + self.count[s] {
            s += 1;
        }
        s as i64 + wrap * l
    }

    /// Highest label at site `s` moves to `s + 1`, becoming the lowest there.
    /// Returns the moved label in the coordinates of site `s`.
    pub fn move_right(&mut self, s: usize) -> Result<i64> {
        if self.count[s] == 0 {
            return Err(Error::Bookkeeping(format!("right move from empty site {s}")));
        }
        let l = self.count.len();
        let moved = self.first[s] + self.count[s] - 1;
        let t = if s + 1 == l { 0 } else { s + 1 };
        self.count[s] -= 1;
        self.count[t] += 1;
        self.first[t] -= 1;
        Ok(moved)
    }

    /// Lowest label at site `s` moves to `s - 1`, becoming the highest there.
    pub fn move_left(&mut self, s: usize) -> Result<i64> {
        if self.count[s] == 0 {
            return Err(Error::Bookkeeping(format!("left move from empty site {s}")));
        }
        let l = self.count.len();
        let moved = self.first[s];
        let t = if s == 0 { l - 1 } else { s - 1 };
        self.count[s] -= 1;
        self.count[t] += 1;
        self.first[s] += 1;
        Ok(moved)
    }

    /// Checks that consecutive sites carry consecutive label ranges.
    pub fn check(&self) -> Result<()> {
        let l = self.count.len();
        for s in 0..l {
            let end = self.first[s] + self.count[s];
            let (next, offset) = if s + 1 == l { (0, self.total) } else { (s + 1, 0) };
            if self.first[next] + offset != end {
                return Err(Error::Bookkeeping(format!("label ranges not contiguous at site {s}")));
            }
        }
        Ok(())
    }
}

/// A discrepancy that crossed a bond.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiscrepancyMove {
    /// Source site in `0..L`.
    pub from: usize,
    pub to: usize,
    /// `+1` right, `-1` left.
    pub direction: i64,
    /// The moved label, in the coordinates of `from`.
    pub label: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoupledEvent {
    pub time: f64,
    pub bond: usize,
    pub mv: Move,
    /// Bit `k` set when process `k` executed the move.
    pub fired: u8,
    pub discrepancy: Option<DiscrepancyMove>,
}

pub trait CoupledObserver {
    fn on_event(&mut self, event: &CoupledEvent, state: &CoupledState) -> Result<()>;
}

impl CoupledObserver for () {
    #[inline]
    fn on_event(&mut self, _: &CoupledEvent, _: &CoupledState) -> Result<()> {
        Ok(())
    }
}

/// Records `time,bond,direction,fired,discrepancy_from,discrepancy_direction`.
#[derive(Clone, Debug, Default)]
pub struct CoupledLog {
    pub events: Vec<CoupledEvent>,
}

impl CoupledObserver for CoupledLog {
    fn on_event(&mut self, event: &CoupledEvent, _: &CoupledState) -> Result<()> {
        self.events.push(*event);
        Ok(())
    }
}

impl CoupledLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "bond", "direction", "fired", "discrepancy_from", "discrepancy_direction"])?;
        for e in &self.events {
            let (from, dir) = match e.discrepancy {
                Some(d) => (d.from.to_string(), d.direction.to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([
                e.time.to_string(),
                e.bond.to_string(),
                e.mv.direction().to_string(),
                e.fired.to_string(),
                from,
                dir,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Several configurations on one ring evolving in basic coupling.
#[derive(Clone, Debug)]
pub struct CoupledState {
    pub configs: Vec<Vec<i64>>,
    pub initial: Vec<Vec<i64>>,
    pub currents: Vec<Vec<i64>>,
    pub time: f64,
    pub events: u64,
    pub rng: ChaCha8Rng,
    /// Indices `(lower, upper)` of the labeled pair.
    pub pair: Option<(usize, usize)>,
    pub labels: Option<Labels>,
    /// Pairs `(i, j)` with `configs[i] <= configs[j]` sitewise, checked after every event.
    ordered: Vec<(usize, usize)>,
    tracked: Vec<(i64, i64)>,
}

impl CoupledState {
    /// `configs` must share one length. When `pair` is given the pair must be
    /// ordered with a discrepancy at site 0; every sitewise-ordered pair of
    /// configurations is recorded and re-checked after each event.
    pub fn new(configs: Vec<Vec<i64>>, pair: Option<(usize, usize)>, rng: ChaCha8Rng) -> Result<Self> {
        let n = configs.len();
        if n == 0 || n > MAX_PROCESSES {
            return Err(Error::InvalidParameter(format!("coupling supports 1..={MAX_PROCESSES} processes, got {n}")));
        }
        let l = configs[0].len();
        if l < 3 || configs.iter().any(|c| c.len() != l) {
            return Err(Error::InvalidParameter("configurations must share a ring of at least 3 sites".into()));
        }
        let labels = match pair {
            Some((lo, hi)) => Some(Labels::new(&configs[lo], &configs[hi])?),
            None => None,
        };
        let mut ordered = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && configs[i].iter().zip(&configs[j]).all(|(a, b)| a <= b) && configs[i] != configs[j] {
                    ordered.push((i, j));
                }
            }
        }
        Ok(Self {
            initial: configs.clone(),
            currents: vec![vec![0; l]; n],
            configs,
            time: 0.0,
            events: 0,
            rng,
            pair,
            labels,
            ordered,
            tracked: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.configs.len()
    }

    pub fn len(&self) -> usize {
        self.configs[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keeps the lifted position of label `m` up to date through every move.
    pub fn track(&mut self, m: i64) -> Result<()> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::Bookkeeping("no labeled pair to track".into()))?;
        let x = labels.position(m);
        self.tracked.push((m, x));
        Ok(())
    }

    /// Lifted position of a tracked label.
    pub fn tracked_position(&self, m: i64) -> Option<i64> {
        self.tracked.iter().find(|(label, _)| *label == m).map(|(_, x)| *x)
    }

    /// `h_i(t)` of process `k`.
    pub fn height(&self, k: usize, i: i64) -> Result<i64> {
        check_window(i, self.len())?;
        Ok(initial_height(&self.initial[k], i) + self.currents[k][ring_site(i, self.len())])
    }

    #[inline]
    fn channel_rate(&self, dynamics: &Dynamics, mv: Move, bond: usize) -> f64 {
        let l = self.len();
        let b1 = if bond + 1 == l { 0 } else { bond + 1 };
        let mut max = 0.0f64;
        for c in &self.configs {
            max = max.max(dynamics.table.rate(mv, c[bond], c[b1]));
        }
        max
    }

    /// Advances to `t_end`.
    pub fn run<O: CoupledObserver + ?Sized>(&mut self, dynamics: &Dynamics, t_end: f64, observer: &mut O) -> Result<()> {
        if t_end < self.time {
            return Err(Error::InvalidParameter(format!("t_end {t_end} precedes the current time {}", self.time)));
        }
        let l = self.len();
        dynamics.check_guard(l, t_end)?;
        for c in &self.configs {
            dynamics.check_config(c)?;
        }
        let moves = dynamics.table.moves();
        let nm = moves.len();
        let mut weights = Vec::with_capacity(l * nm);
        for b in 0..l {
            for &mv in moves {
                weights.push(self.channel_rate(dynamics, mv, b));
            }
        }
        let mut tree = SumTree::from_weights(&weights);
        loop {
            let total = tree.total();
            if total <= 0.0 {
                self.time = t_end;
                return Ok(());
            }
            let e: f64 = Exp1.sample(&mut self.rng);
            let next = self.time + e / total;
            if next > t_end {
                self.time = t_end;
                return Ok(());
            }
            self.time = next;
            let (leaf, offset) = tree.find(self.rng.random::<f64>() * total);
            let bond = leaf / nm;
            let mv = moves[leaf % nm];
            // the offset inside the chosen leaf is uniform on [0, r_max)
            let event = self.apply(dynamics, bond, mv, offset)?;
            let b0 = if bond == 0 { l - 1 } else { bond - 1 };
            let b1 = if bond + 1 == l { 0 } else { bond + 1 };
            let mut rates = [0.0f64; 6];
            for (j, b) in [b0, bond, b1].into_iter().enumerate() {
                for (k, &m) in moves.iter().enumerate() {
                    rates[j * nm + k] = self.channel_rate(dynamics, m, b);
                }
            }
            if b0 < b1 {
                tree.set_range(b0 * nm, &rates[..3 * nm]);
            } else {
                for (j, b) in [b0, bond, b1].into_iter().enumerate() {
                    tree.set_range(b * nm, &rates[j * nm..(j + 1) * nm]);
                }
            }
            observer.on_event(&event, self)?;
        }
    }

    /// Executes one channel firing with threshold `threshold` in `[0, r_max)`:
    /// exactly the processes with rate above the threshold move.
    pub fn apply(&mut self, dynamics: &Dynamics, bond: usize, mv: Move, threshold: f64) -> Result<CoupledEvent> {
        let l = self.len();
        let b1 = if bond + 1 == l { 0 } else { bond + 1 };
        let d = mv.direction();
        let (lo, hi) = dynamics.table.window();
        let mut fired = 0u8;
        for k in 0..self.n() {
            let c = &mut self.configs[k];
            if dynamics.table.rate(mv, c[bond], c[b1]) > threshold {
                c[bond] -= d;
                c[b1] += d;
                self.currents[k][bond] += d;
                fired |= 1 << k;
                for site in [bond, b1] {
                    let value = c[site];
                    if value < lo || value > hi {
                        return Err(Error::OccupancyCap { site, value, lo, hi });
                    }
                }
            }
        }
        self.events += 1;
        let discrepancy = match (self.pair, self.labels.as_mut()) {
            (Some((lower, upper)), Some(labels)) => {
                let fl = fired & (1 << lower) != 0;
                let fu = fired & (1 << upper) != 0;
                // upper alone moving right, or lower alone moving left, pushes a discrepancy right
                let step = match (fu, fl, mv) {
                    (true, false, Move::Deposit) => Some((bond, b1, 1)),
                    (true, false, Move::Removal) => Some((b1, bond, -1)),
                    (false, true, Move::Deposit) => Some((b1, bond, -1)),
                    (false, true, Move::Removal) => Some((bond, b1, 1)),
                    _ => None,
                };
                match step {
                    Some((from, to, direction)) => {
                        let label = if direction > 0 {
                            labels.move_right(from)?
                        } else {
                            labels.move_left(from)?
                        };
                        let total = labels.total();
                        for (m, x) in self.tracked.iter_mut() {
                            if x.rem_euclid(l as i64) as usize == from && *m == label + total * x.div_euclid(l as i64) {
                                *x += direction;
                            }
                        }
                        Some(DiscrepancyMove { from, to, direction, label })
                    }
                    None => None,
                }
            }
            _ => None,
        };
        for &(i, j) in &self.ordered {
            for site in [bond, b1] {
                if self.configs[i][site] > self.configs[j][site] {
                    return Err(Error::Bookkeeping(format!(
                        "sitewise order between processes {i} and {j} broken at site {site}"
                    )));
                }
            }
        }
        Ok(CoupledEvent {
            time: self.time,
            bond,
            mv,
            fired,
            discrepancy,
        })
    }
}

/// The pair `(ω^-, ω)` with one discrepancy at site 0: `ω^-_0 ~ μ̂^ρ`,
/// `ω_0 = ω^-_0 + 1`, all other sites i.i.d. `μ^ρ` and shared. Process 0 is
/// the lower configuration; label 0 is tracked so that `Q(t)` is
/// [`DiscrepancyPair::q`].
#[derive(Clone, Debug)]
pub struct DiscrepancyPair {
    pub state: CoupledState,
}

/// Samplers for the pair initial law at one density, reusable across replicates.
#[derive(Clone, Debug)]
pub struct PairLaw {
    pub mu: DiscreteMeasure,
    pub seed: DiscreteMeasure,
}

impl PairLaw {
    pub fn new(spec: &RateSpec, rho: f64) -> Result<Self> {
        let mu = stationary(spec, rho)?;
        let seed = seed(&mu)?;
        Ok(Self { mu, seed })
    }
}

impl DiscrepancyPair {
    pub fn new(law: &PairLaw, l: usize, mut rng: ChaCha8Rng) -> Result<Self> {
        let mut lower: Vec<i64> = Vec::with_capacity(l);
        lower.push(law.seed.sample(&mut rng));
        for _ in 1..l {
            lower.push(law.mu.sample(&mut rng));
        }
        let mut upper = lower.clone();
        upper[0] += 1;
        let mut state = CoupledState::new(vec![lower, upper], Some((0, 1)), rng)?;
        state.track(0)?;
        Ok(Self { state })
    }

    /// Position of the second class particle (lifted, so it may exceed the ring).
    pub fn q(&self) -> i64 {
        self.state.tracked_position(0).expect("label 0 is tracked")
    }

    /// Runs to `t_end` and checks `h^ω_i - h^{ω^-}_i = 1{Q > i}` on `checks`.
    pub fn run_checked(&mut self, dynamics: &Dynamics, t_end: f64, checks: &[i64]) -> Result<i64> {
        self.state.run(dynamics, t_end, &mut ())?;
        let q = self.q();
        for &i in checks {
            let diff = self.state.height(1, i)? - self.state.height(0, i)?;
            if diff != i64::from(q > i) {
                return Err(Error::Bookkeeping(format!(
                    "height difference {diff} at bond {i} disagrees with Q = {q}"
                )));
            }
        }
        Ok(q)
    }
}

/// `Q(t)` sampled at each time of `times` (increasing) from one trajectory.
pub fn track_q(pair: &mut DiscrepancyPair, dynamics: &Dynamics, times: &[f64]) -> Result<Vec<i64>> {
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        out.push(pair.run_checked(dynamics, t, &[0])?);
    }
    Ok(out)
}

/// The pair `(η, ω)` with `η` at densities `lambda[i]` and `ω` at `rho[i]`
/// (site `i` of the ring, site 0 first): weak quantile coupling away from 0
/// and the strict seed coupling `(μ̂^λ, μ̂^ρ + 1)` at site 0. Process 0 is `η`.
pub fn two_density_pair(spec: &RateSpec, lambda: &[f64], rho: &[f64], mut rng: ChaCha8Rng) -> Result<CoupledState> {
    let l = lambda.len();
    if rho.len() != l {
        return Err(Error::InvalidParameter("density profiles differ in length".into()));
    }
    let mut cache: Vec<(f64, DiscreteMeasure)> = Vec::new();
    let mut measure = |d: f64| -> Result<DiscreteMeasure> {
        if let Some((_, m)) = cache.iter().find(|(x, _)| *x == d) {
            return Ok(m.clone());
        }
        let m = stationary(spec, d)?;
        cache.push((d, m.clone()));
        Ok(m)
    };
    let mut eta = Vec::with_capacity(l);
    let mut omega = Vec::with_capacity(l);
    for i in 0..l {
        if lambda[i] > rho[i] {
            return Err(Error::InvalidParameter(format!("lambda > rho at site {i}")));
        }
        let lo = measure(lambda[i])?;
        let hi = measure(rho[i])?;
        let (a, b) = if i == 0 {
            let (sl, sr) = (seed(&lo)?, seed(&hi)?);
            check_dominance(&sl, &sr)?;
            let u = rng.random::<f64>();
            let a = sl.quantile(u);
            (a, sr.quantile(u).max(a) + 1)
        } else {
            check_dominance(&lo, &hi)?;
            crate::measures::coupled_pair(&lo, &hi, rng.random::<f64>())
        };
        eta.push(a);
        omega.push(b);
    }
    CoupledState::new(vec![eta, omega], Some((0, 1)), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{RateProfile, RateSpec};
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn label_rule() {
        // two labels at site 5 (and one at site 0 so label 0 exists)
        let lower = vec![0; 10];
        let mut upper = vec![0; 10];
        upper[0] = 1;
        upper[5] = 2;
        let mut labels = Labels::new(&lower, &upper).unwrap();
        assert_eq!(labels.interval(0), Some((0, 0)));
        assert_eq!(labels.interval(5), Some((1, 2)));
        assert_eq!(labels.move_right(5).unwrap(), 2);
        assert_eq!(labels.interval(5), Some((1, 1)));
        assert_eq!(labels.interval(6), Some((2, 2)));
        assert_eq!(labels.move_left(5).unwrap(), 1);
        assert_eq!(labels.interval(4), Some((1, 1)));
        labels.check().unwrap();
        // wrap around: label 0 moves left off site 0 onto lifted position -1
        assert_eq!(labels.move_left(0).unwrap(), 0);
        assert_eq!(labels.interval(-1), Some((0, 0)));
        assert_eq!(labels.position(0), -1);
        assert_eq!(labels.position(3), 9);
        labels.check().unwrap();
    }

    #[test]
    fn label_zero_is_highest_at_origin() {
        let lower = vec![0, 0, 0, 0, 0, 0];
        let upper = vec![3, 0, 1, 0, 0, 2];
        let labels = Labels::new(&lower, &upper).unwrap();
        assert_eq!(labels.interval(0), Some((-2, 0)));
        assert_eq!(labels.interval(2), Some((1, 1)));
        assert_eq!(labels.interval(5), Some((2, 3)));
        assert_eq!(labels.interval(-1), Some((2 - 6, 3 - 6)));
        for m in -10..10 {
            let x = labels.position(m);
            let (a, b) = labels.interval(x).unwrap();
            assert!(a <= m && m <= b, "m={m} x={x}");
        }
    }

    #[test]
    fn equal_rates_fire_together() {
        let spec = RateSpec::asep(1.0).unwrap();
        let dynamics = Dynamics::new(&spec, None).unwrap().with_guard(None);
        let c = vec![1, 0, 1, 0, 1, 0];
        let mut s = CoupledState::new(vec![c.clone(), c.clone(), c], None, rng(0)).unwrap();
        let ev = s.apply(&dynamics, 0, Move::Deposit, 0.3).unwrap();
        assert_eq!(ev.fired, 0b111);
    }

    #[test]
    fn tazrp_pair_split() {
        let spec = RateSpec::zero_range(1.0, RateProfile::saturating(1.0)).unwrap();
        let dynamics = Dynamics::new(&spec, None).unwrap().with_guard(None);
        let eta = vec![1, 0, 0, 0, 0, 0];
        let omega = vec![3, 0, 0, 0, 0, 0];
        let (fe, fo) = (spec.f(1), spec.f(3));
        let mut s = CoupledState::new(vec![eta.clone(), omega.clone()], Some((0, 1)), rng(0)).unwrap();
        // threshold below f(η): both jump
        let ev = s.apply(&dynamics, 0, Move::Deposit, 0.5 * fe).unwrap();
        assert_eq!(ev.fired, 0b11);
        assert!(ev.discrepancy.is_none());
        let mut s = CoupledState::new(vec![eta, omega], Some((0, 1)), rng(0)).unwrap();
        // threshold in (f(η), f(ω)): ω alone, its top discrepancy moves right
        let ev = s.apply(&dynamics, 0, Move::Deposit, 0.5 * (fe + fo)).unwrap();
        assert_eq!(ev.fired, 0b10);
        let d = ev.discrepancy.unwrap();
        assert_eq!((d.from, d.to, d.direction, d.label), (0, 1, 1, 0));
    }

    #[test]
    fn asep_pair_is_deterministic_at_origin() {
        let spec = RateSpec::asep(1.0).unwrap();
        let law = PairLaw::new(&spec, 0.4).unwrap();
        for seed in 0..20 {
            let p = DiscrepancyPair::new(&law, 16, rng(seed)).unwrap();
            assert_eq!(p.state.configs[0][0], 0);
            assert_eq!(p.state.configs[1][0], 1);
            assert_eq!(p.q(), 0);
        }
    }

    #[test]
    fn pair_keeps_one_discrepancy() {
        let spec = RateSpec::zero_range(1.0, RateProfile::saturating(1.0)).unwrap();
        let dynamics = Dynamics::new(&spec, None).unwrap().with_guard(None);
        let law = PairLaw::new(&spec, 1.0).unwrap();
        let mut p = DiscrepancyPair::new(&law, 64, rng(9)).unwrap();
        let qs = track_q(&mut p, &dynamics, &[1.0, 2.0, 4.0, 8.0]).unwrap();
        assert!(qs.windows(2).all(|w| w[0] <= w[1]), "TAZRP discrepancy only moves right");
        let diff: Vec<i64> = p.state.configs[1].iter().zip(&p.state.configs[0]).map(|(a, b)| a - b).collect();
        assert_eq!(diff.iter().sum::<i64>(), 1);
        assert_eq!(diff[ring_site(p.q(), 64)], 1);
    }

    #[test]
    fn two_density_pair_is_ordered() {
        let spec = RateSpec::asep(1.0).unwrap();
        let l = 2000;
        let s = two_density_pair(&spec, &vec![0.2; l], &vec![0.5; l], rng(4)).unwrap();
        assert_eq!((s.configs[0][0], s.configs[1][0]), (0, 1));
        let disc: i64 = (1..l).map(|i| s.configs[1][i] - s.configs[0][i]).sum();
        assert!(s.configs[0].iter().zip(&s.configs[1]).all(|(a, b)| a <= b));
        let frac = disc as f64 / (l - 1) as f64;
        assert!((frac - 0.3).abs() < 5.0 * (0.3f64 * 0.7 / l as f64).sqrt());
        // equal densities: only the seeded discrepancy
        let s = two_density_pair(&spec, &vec![0.4; 50], &vec![0.4; 50], rng(4)).unwrap();
        assert_eq!(s.labels.as_ref().unwrap().total(), 1);
    }

    #[test]
    fn labels_follow_many_discrepancies() {
        let spec = RateSpec::asep(0.8).unwrap();
        let dynamics = Dynamics::new(&spec, None).unwrap().with_guard(None);
        let l = 40;
        let mut s = two_density_pair(&spec, &vec![0.2; l], &vec![0.7; l], rng(21)).unwrap();
        for m in [-3, 0, 2] {
            s.track(m).unwrap();
        }
        let mass: Vec<i64> = s.configs.iter().map(|c| c.iter().sum()).collect();
        let mut t = 0.0;
        for _ in 0..50 {
            t += 0.2;
            s.run(&dynamics, t, &mut ()).unwrap();
            let labels = s.labels.as_ref().unwrap();
            labels.check().unwrap();
            for m in [-3, 0, 2] {
                assert_eq!(s.tracked_position(m).unwrap(), labels.position(m));
            }
            let now: Vec<i64> = s.configs.iter().map(|c| c.iter().sum()).collect();
            assert_eq!(now, mass);
        }
        assert!(s.tracked_position(-3).unwrap() <= s.tracked_position(0).unwrap());
    }
}
