//! Continuous-time simulation of a single process on a ring of `L` sites,
//! with per-bond current counters from which heights are recovered.
//!
//! Scheduling is the Gillespie direct method over `(bond, move)` channels held
//! in a [`SumTree`]. Bond `i` joins sites `i` and `i + 1 (mod L)`.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{stationary, DiscreteMeasure};
use crate::rates::{Move, RateSpec, RateTable};
use crate::sumtree::SumTree;

/// Default occupancy cap for models with an infinite state space.
pub const DEFAULT_OCCUPANCY_CAP: i64 = 60;
pub const DEFAULT_GUARD_FACTOR: f64 = 6.0;

/// Ring-size requirement `L >= factor * (rate_bound * horizon + max_index)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Guard {
    pub factor: f64,
    pub max_index: i64,
}

impl Default for Guard {
    fn default() -> Self {
        Self {
            factor: DEFAULT_GUARD_FACTOR,
            max_index: 0,
        }
    }
}

impl Guard {
    pub fn required(&self, rate_bound: f64, horizon: f64) -> usize {
        (self.factor * (rate_bound * horizon + self.max_index.unsigned_abs() as f64)).ceil() as usize
    }

    pub fn check(&self, l: usize, rate_bound: f64, horizon: f64) -> Result<()> {
        let required = self.required(rate_bound, horizon);
        if l < required {
            return Err(Error::WraparoundGuard { l, required });
        }
        Ok(())
    }
}

/// Tabulated rates plus the ring-size guard; shared read-only by all replicates.
#[derive(Clone, Debug)]
pub struct Dynamics {
    pub table: RateTable,
    pub guard: Option<Guard>,
}

impl Dynamics {
    /// Finite state spaces are tabulated in full; infinite ones need `cap`
    /// (defaulting to [`DEFAULT_OCCUPANCY_CAP`]), and unbounded rates are
    /// refused unless a cap is given explicitly.
    pub fn new(spec: &RateSpec, cap: Option<i64>) -> Result<Self> {
        let cap = match (spec.space.is_finite(), cap) {
            (true, c) => c,
            (false, Some(c)) => Some(c),
            (false, None) if spec.rate_upper_bound.is_some() => Some(DEFAULT_OCCUPANCY_CAP),
            (false, None) => return Err(Error::UnboundedRates),
        };
        Ok(Self {
            table: RateTable::new(spec, cap)?,
            guard: Some(Guard::default()),
        })
    }

    pub fn with_guard(mut self, guard: Option<Guard>) -> Self {
        self.guard = guard;
        self
    }

    pub(crate) fn check_guard(&self, l: usize, horizon: f64) -> Result<()> {
        match self.guard {
            Some(g) => g.check(l, self.table.bound(), horizon),
            None => Ok(()),
        }
    }

    pub(crate) fn check_config(&self, occ: &[i64]) -> Result<()> {
        let (lo, hi) = self.table.window();
        for (site, &value) in occ.iter().enumerate() {
            if value < lo || value > hi {
                return Err(Error::OccupancyCap { site, value, lo, hi });
            }
        }
        Ok(())
    }
}

/// One fired transition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub bond: usize,
    pub mv: Move,
}

pub trait Observer {
    fn on_event(&mut self, event: &Event, occ: &[i64]);
}

impl Observer for () {
    #[inline]
    fn on_event(&mut self, _: &Event, _: &[i64]) {}
}

/// Records every event; dumps as CSV `time,bond,direction`.
#[derive(Clone, Debug, Default)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl Observer for EventLog {
    fn on_event(&mut self, event: &Event, _: &[i64]) {
        self.events.push(*event);
    }
}

impl EventLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "bond", "direction"])?;
        for e in &self.events {
            w.write_record([e.time.to_string(), e.bond.to_string(), e.mv.direction().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Site index on the ring for a position relative to site 0.
#[inline]
pub fn ring_site(i: i64, l: usize) -> usize {
    i.rem_euclid(l as i64) as usize
}

/// `h_i(0)` from an initial configuration: `-Σ_{j=1..i} ω_j` for `i > 0`,
/// `Σ_{j=i+1..0} ω_j` for `i < 0`, zero at `i = 0`.
pub fn initial_height(initial: &[i64], i: i64) -> i64 {
    let l = initial.len();
    if i > 0 {
        -(1..=i).map(|j| initial[ring_site(j, l)]).sum::<i64>()
    } else {
        (i + 1..=0).map(|j| initial[ring_site(j, l)]).sum::<i64>()
    }
}

pub(crate) fn check_window(i: i64, l: usize) -> Result<()> {
    if 2 * i.unsigned_abs() as usize >= l {
        return Err(Error::IndexOutOfWindow { index: i, l });
    }
    Ok(())
}

/// A configuration on the ring, its initial copy, per-bond net currents,
/// the clock and the replicate's random stream.
#[derive(Clone, Debug)]
pub struct RingState {
    pub occ: Vec<i64>,
    pub initial: Vec<i64>,
    /// Net number of right-crossings at each bond.
    pub current: Vec<i64>,
    pub time: f64,
    pub events: u64,
    pub rng: ChaCha8Rng,
}

impl RingState {
    pub fn new(occ: Vec<i64>, rng: ChaCha8Rng) -> Result<Self> {
        if occ.len() < 3 {
            return Err(Error::InvalidParameter(format!("ring needs L >= 3, got {}", occ.len())));
        }
        let l = occ.len();
        Ok(Self {
            initial: occ.clone(),
            occ,
            current: vec![0; l],
            time: 0.0,
            events: 0,
            rng,
        })
    }

    /// Occupancies i.i.d. from `mu`.
    pub fn from_measure(mu: &DiscreteMeasure, l: usize, mut rng: ChaCha8Rng) -> Result<Self> {
        let occ = (0..l).map(|_| mu.sample(&mut rng)).collect();
        Self::new(occ, rng)
    }

    /// Occupancies i.i.d. from the stationary marginal at density `rho`.
    pub fn init_stationary(spec: &RateSpec, rho: f64, l: usize, rng: ChaCha8Rng) -> Result<Self> {
        let mu = stationary(spec, rho)?;
        Self::from_measure(&mu, l, rng)
    }

    pub fn len(&self) -> usize {
        self.occ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occ.is_empty()
    }

    pub fn total(&self) -> i64 {
        self.occ.iter().sum()
    }

    /// `h_i(t) = h_i(0) + J_i` for `|i| < L/2`.
    pub fn height(&self, i: i64) -> Result<i64> {
        check_window(i, self.len())?;
        Ok(initial_height(&self.initial, i) + self.current[ring_site(i, self.len())])
    }

    /// Occupancy at position `i` relative to site 0.
    pub fn at(&self, i: i64) -> i64 {
        self.occ[ring_site(i, self.len())]
    }

    /// Advances to `t_end`, reporting every event to `observer`.
    pub fn run<O: Observer + ?Sized>(&mut self, dynamics: &Dynamics, t_end: f64, observer: &mut O) -> Result<()> {
        if t_end < self.time {
            return Err(Error::InvalidParameter(format!("t_end {t_end} precedes the current time {}", self.time)));
        }
        let l = self.len();
        dynamics.check_guard(l, t_end)?;
        dynamics.check_config(&self.occ)?;
        let table = &dynamics.table;
        let moves = table.moves();
        let nm = moves.len();
        let mut weights = Vec::with_capacity(l * nm);
        for b in 0..l {
            let (y, z) = (self.occ[b], self.occ[(b + 1) % l]);
            for &mv in moves {
                weights.push(table.rate(mv, y, z));
            }
        }
        let mut tree = SumTree::from_weights(&weights);
        let (lo, hi) = table.window();
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
            let (leaf, _) = tree.find(self.rng.random::<f64>() * total);
            let b = leaf / nm;
            let mv = moves[leaf % nm];
            let b1 = if b + 1 == l { 0 } else { b + 1 };
            let d = mv.direction();
            self.occ[b] -= d;
            self.occ[b1] += d;
            self.current[b] += d;
            self.events += 1;
            for site in [b, b1] {
                let value = self.occ[site];
                if value < lo || value > hi {
                    return Err(Error::OccupancyCap { site, value, lo, hi });
                }
            }
            let b0 = if b == 0 { l - 1 } else { b - 1 };
            let mut rates = [0.0f64; 6];
            for (j, bond) in [b0, b, b1].into_iter().enumerate() {
                let (y, z) = (self.occ[bond], self.occ[if bond + 1 == l { 0 } else { bond + 1 }]);
                for (k, &m) in moves.iter().enumerate() {
                    rates[j * nm + k] = table.rate(m, y, z);
                }
            }
            if b0 < b1 {
                tree.set_range(b0 * nm, &rates[..3 * nm]);
            } else {
                for (j, bond) in [b0, b, b1].into_iter().enumerate() {
                    tree.set_range(bond * nm, &rates[j * nm..(j + 1) * nm]);
                }
            }
            observer.on_event(&Event { time: self.time, bond: b, mv }, &self.occ);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::RateSpec;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn empty_asep_is_absorbing() {
        let spec = RateSpec::asep(1.0).unwrap();
        let dynamics = Dynamics::new(&spec, None).unwrap().with_guard(None);
        let mut s = RingState::new(vec![0; 8], rng(1)).unwrap();
        s.run(&dynamics, 5.0, &mut ()).unwrap();
        assert_eq!(s.time, 5.0);
        assert_eq!(s.events, 0);
        assert_eq!(s.occ, vec![0; 8]);
    }

    #[test]
    fn initial_heights() {
        let s = RingState::new(vec![2, 1, 0, 3, 1, 0, 0, 4], rng(0)).unwrap();
        assert_eq!(s.height(0).unwrap(), 0);
        assert_eq!(s.height(3).unwrap(), -(1 + 0 + 3));
        assert_eq!(s.height(-2).unwrap(), 0 + 4 + 2);
        assert!(matches!(s.height(4), Err(Error::IndexOutOfWindow { .. })));
    }

    #[test]
    fn single_deposition_raises_column() {
        let spec = RateSpec::asep(1.0).unwrap();
        let dynamics = Dynamics::new(&spec, None).unwrap().with_guard(None);
        // one particle at site 0, everything else empty: the only possible move is bond 0
        let mut occ = vec![0; 10];
        occ[0] = 1;
        let mut s = RingState::new(occ, rng(3)).unwrap();
        let mut log = EventLog::default();
        while log.events.is_empty() {
            let t = s.time + 0.01;
            s.run(&dynamics, t, &mut log).unwrap();
        }
        if log.events.len() == 1 {
            assert_eq!(log.events[0].bond, 0);
            assert_eq!(s.height(0).unwrap(), 1);
        }
    }

    #[test]
    fn heights_match_occupancies_and_mass_is_conserved() {
        let spec = RateSpec::asep(0.7).unwrap();
        let dynamics = Dynamics::new(&spec, None).unwrap().with_guard(None);
        let mut s = RingState::init_stationary(&spec, 0.4, 40, rng(11)).unwrap();
        let mass = s.total();
        s.run(&dynamics, 7.5, &mut ()).unwrap();
        assert_eq!(s.total(), mass);
        for j in -18..=19 {
            assert_eq!(s.at(j), s.height(j - 1).unwrap() - s.height(j).unwrap());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = RateSpec::zero_range(1.0, crate::rates::RateProfile::saturating(1.0)).unwrap();
        let dynamics = Dynamics::new(&spec, None).unwrap().with_guard(None);
        let run = || {
            let mut s = RingState::init_stationary(&spec, 1.0, 30, rng(5)).unwrap();
            s.run(&dynamics, 3.0, &mut ()).unwrap();
            (s.occ, s.current)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn guard_refuses_small_rings() {
        let spec = RateSpec::asep(1.0).unwrap();
        let dynamics = Dynamics::new(&spec, None).unwrap();
        let mut s = RingState::init_stationary(&spec, 0.5, 50, rng(2)).unwrap();
        assert!(matches!(
            s.run(&dynamics, 10.0, &mut ()),
            Err(Error::WraparoundGuard { l: 50, required: 60 })
        ));
    }

    #[test]
    fn event_log_csv() {
        let log = EventLog {
            events: vec![Event { time: 0.5, bond: 3, mv: Move::Removal }],
        };
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "time,bond,direction\n0.5,3,-1\n");
    }
}
