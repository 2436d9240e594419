use deposition::coupling::{CoupledLog, CoupledState, DiscrepancyPair, PairLaw};
use deposition::flux;
use deposition::measures::{seed, stationary};
use deposition::oracle::{transient_law, ExactChain};
use deposition::rates::{RateProfile, RateSpec};
use deposition::replicate::{map_replicates, replicate_rng};
use deposition::simulator::{Dynamics, EventLog, RingState};
use deposition::stats;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn single_particle_walks_as_a_poisson_process() {
    let spec = RateSpec::zero_range_constant(1.0).unwrap();
    let dynamics = Dynamics::new(&spec, None).unwrap().with_guard(None);
    let t = 3.0;
    let jumps: Vec<f64> = map_replicates(4000, 11, |_, rng| {
        let mut occ = vec![0; 40];
        occ[0] = 1;
        let mut ring = RingState::new(occ, rng.clone()).unwrap();
        ring.run(&dynamics, t, &mut ()).unwrap();
        ring.events as f64
    });
    let m = stats::mean(&jumps);
    assert!((m.value - t).abs() < 4.0 * m.std_error, "{m:?}");
}

#[test]
fn single_site_law_stays_bernoulli() {
    let spec = RateSpec::asep(1.0).unwrap();
    let dynamics = Dynamics::new(&spec, None).unwrap();
    let occupied: Vec<f64> = map_replicates(10_000, 5, |_, rng| {
        let mut ring = RingState::init_stationary(&spec, 0.3, 400, rng.clone()).unwrap();
        ring.run(&dynamics, 50.0, &mut ()).unwrap();
        ring.at(17) as f64
    });
    let m = stats::mean(&occupied);
    assert!((m.value - 0.3).abs() < 4.0 * m.std_error, "{m:?}");
}

#[test]
fn mean_height_drifts_with_the_flux() {
    let spec = RateSpec::zero_range(1.0, RateProfile::saturating(1.0)).unwrap();
    let dynamics = Dynamics::new(&spec, None).unwrap();
    let rho = 1.0;
    let (t, i) = (8.0, 5i64);
    let h: Vec<f64> = map_replicates(4000, 9, |_, rng| {
        let mut ring = RingState::init_stationary(&spec, rho, 60, rng.clone()).unwrap();
        ring.run(&dynamics, t, &mut ()).unwrap();
        ring.height(i).unwrap() as f64
    });
    let m = stats::mean(&h);
    let expected = flux::flux(&spec, rho).unwrap() * t - rho * i as f64;
    assert!((m.value - expected).abs() < 4.0 * m.std_error, "{m:?} vs {expected}");
}

#[test]
fn heights_and_occupancies_stay_consistent() {
    let spec = RateSpec::asep(0.7).unwrap();
    let dynamics = Dynamics::new(&spec, None).unwrap().with_guard(None);
    let mut ring = RingState::init_stationary(&spec, 0.4, 30, ChaCha8Rng::seed_from_u64(2)).unwrap();
    for step in 1..=5 {
        ring.run(&dynamics, step as f64, &mut ()).unwrap();
        for j in -13..=14i64 {
            let diff = ring.height(j - 1).unwrap() - ring.height(j).unwrap();
            assert_eq!(diff, ring.at(j));
        }
    }
}

#[test]
fn event_log_times_increase_and_currents_move_by_one() {
    let spec = RateSpec::particle_antiparticle(0.6, 0.4, 1.0).unwrap();
    let dynamics = Dynamics::new(&spec, None).unwrap().with_guard(None);
    let mut ring = RingState::init_stationary(&spec, 0.2, 20, ChaCha8Rng::seed_from_u64(4)).unwrap();
    let mut log = EventLog::default();
    ring.run(&dynamics, 5.0, &mut log).unwrap();
    assert!(!log.events.is_empty());
    assert!(log.events.windows(2).all(|w| w[0].time < w[1].time));
    let net: i64 = ring.current.iter().map(|c| c.abs()).sum();
    assert!(net as usize <= log.events.len());
}

#[test]
fn small_ring_matches_the_exact_transient_law() {
    let spec = RateSpec::asep(0.7).unwrap();
    let dynamics = Dynamics::new(&spec, None).unwrap().with_guard(None);
    let chain = ExactChain::build(&spec, 4, (0, 1), None).unwrap();
    let start = vec![1, 1, 0, 0];
    let mut init = vec![0.0; chain.len()];
    init[chain.index_of(&start).unwrap()] = 1.0;
    let law = transient_law(&chain, &init, 0.8).unwrap();
    let mut counts = vec![0u64; chain.len()];
    for r in 0..20_000u64 {
        let mut ring = RingState::new(start.clone(), replicate_rng(8, r)).unwrap();
        ring.run(&dynamics, 0.8, &mut ()).unwrap();
        counts[chain.index_of(&ring.occ).unwrap()] += 1;
    }
    let test = stats::chi_square(&counts, &law, 5.0).unwrap();
    assert!(test.p_value > 0.001, "{test:?}");
}

#[test]
fn discrepancy_pair_keeps_one_discrepancy() {
    let spec = RateSpec::zero_range(1.0, RateProfile::saturating(0.5)).unwrap();
    let dynamics = Dynamics::new(&spec, None).unwrap().with_guard(None);
    let law = PairLaw::new(&spec, 1.5).unwrap();
    for s in 0..20 {
        let mut pair = DiscrepancyPair::new(&law, 80, ChaCha8Rng::seed_from_u64(s)).unwrap();
        let q = pair.run_checked(&dynamics, 6.0, &[-5, 0, 3, 7]).unwrap();
        let diff: Vec<usize> = (0..80)
            .filter(|&x| pair.state.configs[0][x] != pair.state.configs[1][x])
            .collect();
        assert_eq!(diff.len(), 1);
        assert_eq!(diff[0] as i64, q.rem_euclid(80));
        assert_eq!(pair.state.configs[1][diff[0]] - pair.state.configs[0][diff[0]], 1);
    }
}

#[test]
fn asep_seed_is_a_point_mass_at_zero() {
    let spec = RateSpec::asep(1.0).unwrap();
    for rho in [0.2, 0.5, 0.8] {
        let s = seed(&stationary(&spec, rho).unwrap()).unwrap();
        assert_eq!((s.lo(), s.hi()), (0, 0));
    }
}

fn ordered_configs(l: usize) -> impl Strategy<Value = (Vec<i64>, Vec<i64>)> {
    prop::collection::vec((0i64..4, 0i64..3), l).prop_map(|v| {
        let lower: Vec<i64> = v.iter().map(|(a, _)| *a).collect();
        let upper: Vec<i64> = v.iter().map(|(a, b)| a + b).collect();
        (lower, upper)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn basic_coupling_preserves_sitewise_order((lower, upper) in ordered_configs(12), seed in any::<u64>(), p in 0.0f64..=1.0) {
        let spec = RateSpec::zero_range(p, RateProfile::saturating(1.0)).unwrap();
        let dynamics = Dynamics::new(&spec, Some(40)).unwrap().with_guard(None);
        let mut state = CoupledState::new(vec![lower, upper], None, ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut log = CoupledLog::default();
        state.run(&dynamics, 3.0, &mut log).unwrap();
        for (a, b) in state.configs[0].iter().zip(&state.configs[1]) {
            prop_assert!(a <= b);
        }
        let total = |c: &Vec<i64>| c.iter().sum::<i64>();
        prop_assert_eq!(total(&state.configs[0]), total(&state.initial[0]));
        prop_assert_eq!(total(&state.configs[1]), total(&state.initial[1]));
    }

    #[test]
    fn coupled_marginals_follow_their_own_dynamics(seed in any::<u64>()) {
        // each process conserves mass bond by bond
        let spec = RateSpec::asep(0.6).unwrap();
        let dynamics = Dynamics::new(&spec, None).unwrap().with_guard(None);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = stationary(&spec, 0.4).unwrap();
        let lower: Vec<i64> = (0..16).map(|_| mu.sample(&mut rng)).collect();
        let upper: Vec<i64> = lower.iter().map(|&x| x.max(if rng.random_bool(0.3) { 1 } else { 0 })).collect();
        let mut state = CoupledState::new(vec![lower, upper], None, rng).unwrap();
        state.run(&dynamics, 4.0, &mut ()).unwrap();
        for k in 0..2 {
            for j in 0..16usize {
                let prev = if j == 0 { 15 } else { j - 1 };
                let change = state.configs[k][j] - state.initial[k][j];
                prop_assert_eq!(change, state.currents[k][prev] - state.currents[k][j]);
            }
        }
    }
}
