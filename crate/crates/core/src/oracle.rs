//! Exact computations on small rings: the generator as a sparse matrix,
//! stationarity residuals of product measures, transient laws, and the
//! brute-force dominance check of a single walker refresh.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::microconcavity::{prob_y_low, prob_z_down, Geometric};
use crate::rates::RateSpec;

pub const MAX_STATES: u128 = 1_000_000;
/// Chains up to this size use dense scaled squaring for transient laws.
pub const DENSE_LIMIT: usize = 5_000;

/// Continuous-time chain of a process on a ring of `L` sites with every
/// occupancy in `window`.
#[derive(Clone, Debug)]
pub struct ExactChain {
    pub l: usize,
    pub window: (i64, i64),
    pub states: Vec<Vec<i64>>,
    index: HashMap<Vec<i64>, usize>,
    /// Off-diagonal transitions `(target, rate)` per state, duplicates merged.
    pub transitions: Vec<Vec<(usize, f64)>>,
    /// `-Σ` of each row's off-diagonal rates.
    pub diagonal: Vec<f64>,
    /// Total rate of moves that would leave the window, per state.
    pub truncated: Vec<f64>,
}

impl ExactChain {
    /// Enumerates all configurations with occupancies in `window ∩ I`
    /// (optionally with a fixed total). Moves leaving the window are dropped
    /// and their rates recorded in `truncated`.
    pub fn build(spec: &RateSpec, l: usize, window: (i64, i64), fixed_total: Option<i64>) -> Result<Self> {
        let lo = spec.space.omega_min.map_or(window.0, |m| m.max(window.0));
        let hi = spec.space.omega_max.map_or(window.1, |m| m.min(window.1));
        if lo > hi || l < 2 {
            return Err(Error::InvalidParameter("empty occupancy window or ring".into()));
        }
        let radix = (hi - lo + 1) as u128;
        let count = radix.checked_pow(l as u32).unwrap_or(u128::MAX);
        if count > MAX_STATES {
            return Err(Error::StateSpaceTooLarge(count));
        }
        let mut states = Vec::new();
        let mut cur = vec![lo; l];
        loop {
            if fixed_total.is_none_or(|n| cur.iter().sum::<i64>() == n) {
                states.push(cur.clone());
            }
            let mut k = 0;
            while k < l && cur[k] == hi {
                cur[k] = lo;
                k += 1;
            }
            if k == l {
                break;
            }
            cur[k] += 1;
        }
        let index: HashMap<Vec<i64>, usize> = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let mut transitions = Vec::with_capacity(states.len());
        let mut diagonal = Vec::with_capacity(states.len());
        let mut truncated = Vec::with_capacity(states.len());
        for s in &states {
            let mut out: Vec<(usize, f64)> = Vec::new();
            let mut lost = 0.0;
            for b in 0..l {
                let b1 = (b + 1) % l;
                for (rate, d) in [(spec.p(s[b], s[b1]), 1i64), (spec.q(s[b], s[b1]), -1)] {
                    if rate <= 0.0 {
                        continue;
                    }
                    let mut t = s.clone();
                    t[b] -= d;
                    t[b1] += d;
                    if t[b] < lo || t[b] > hi || t[b1] < lo || t[b1] > hi {
                        lost += rate;
                        continue;
                    }
                    let j = index[&t];
                    match out.iter_mut().find(|(k, _)| *k == j) {
                        Some(e) => e.1 += rate,
                        None => out.push((j, rate)),
                    }
                }
            }
            diagonal.push(-out.iter().map(|(_, r)| r).sum::<f64>());
            transitions.push(out);
            truncated.push(lost);
        }
        Ok(Self {
            l,
            window: (lo, hi),
            states,
            index,
            transitions,
            diagonal,
            truncated,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, config: &[i64]) -> Option<usize> {
        self.index.get(config).copied()
    }

    /// `π Q` for a row vector `π`.
    pub fn left_multiply(&self, pi: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = pi.iter().zip(&self.diagonal).map(|(p, d)| p * d).collect();
        for (i, row) in self.transitions.iter().enumerate() {
            for &(j, r) in row {
                out[j] += pi[i] * r;
            }
        }
        out
    }

    /// Product measure weights `Π_i μ(x_i)` on the chain's states.
    pub fn product_law(&self, mu: &DiscreteMeasure) -> Vec<f64> {
        self.states.iter().map(|s| s.iter().map(|&z| mu.prob(z)).product()).collect()
    }

    /// Largest exit rate.
    pub fn max_exit_rate(&self) -> f64 {
        self.diagonal.iter().fold(0.0f64, |m, d| m.max(-d))
    }
}

/// Residual of a product measure together with a bound on the part of it
/// explained by truncating an infinite state space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Residual {
    pub residual: f64,
    pub truncation_bound: f64,
}

/// `max |π Q|` for the restriction of the product of `mu` to the chain window.
///
/// When the window cuts the state space, `π Q` misses the flow into window
/// states from outside and counts the flow from inside towards outside as
/// lost; both are bounded by `2 L R (μ(lo - 1) + μ(lo) + μ(hi) + μ(hi + 1))`
/// times the largest product weight, with `R` the largest single rate and
/// the edge weights taken from the untruncated measure `mu`.
pub fn stationarity_residual(chain: &ExactChain, mu: &DiscreteMeasure) -> Residual {
    let pi = chain.product_law(mu);
    let res = chain.left_multiply(&pi);
    let residual = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (lo, hi) = chain.window;
    let cut_lo = mu.lo() < lo;
    let cut_hi = mu.hi() > hi;
    let truncation_bound = if cut_lo || cut_hi {
        let rmax = chain
            .transitions
            .iter()
            .flat_map(|row| row.iter().map(|(_, r)| *r))
            .chain(chain.truncated.iter().copied())
            .fold(0.0f64, f64::max);
        let mut edge = 0.0;
        if cut_lo {
            edge += mu.prob(lo) + mu.prob(lo - 1);
        }
        if cut_hi {
            edge += mu.prob(hi) + mu.prob(hi + 1);
        }
        let pmax = pi.iter().fold(0.0f64, |m, v| m.max(*v));
        let mode = mu.pmf().iter().fold(0.0f64, |m, v| m.max(*v));
        2.0 * chain.l as f64 * rmax * edge / mode * pmax.max(f64::MIN_POSITIVE)
    } else {
        0.0
    };
    Residual {
        residual,
        truncation_bound,
    }
}

/// Exact `π Q` for asymmetric simple exclusion with rational `p` and density
/// `rho`; returns the largest absolute entry (zero certifies stationarity).
pub fn asep_rational_residual(l: usize, p: (i64, i64), rho: (i64, i64)) -> Result<BigRational> {
    let p = BigRational::new(BigInt::from(p.0), BigInt::from(p.1));
    let rho = BigRational::new(BigInt::from(rho.0), BigInt::from(rho.1));
    let one = BigRational::one();
    let q = &one - &p;
    if p.is_negative() || q.is_negative() || rho <= BigRational::zero() || rho >= one {
        return Err(Error::InvalidParameter("need 0 <= p <= 1 and 0 < rho < 1".into()));
    }
    if l > 20 {
        return Err(Error::StateSpaceTooLarge(1u128 << l));
    }
    let n = 1usize << l;
    let bit = |s: usize, i: usize| (s >> (i % l)) & 1;
    let weight = |s: usize| -> BigRational {
        let mut w = one.clone();
        for i in 0..l {
            w *= if bit(s, i) == 1 { rho.clone() } else { &one - &rho };
        }
        w
    };
    let pi: Vec<BigRational> = (0..n).map(weight).collect();
    let mut out = vec![BigRational::zero(); n];
    for s in 0..n {
        for b in 0..l {
            let b1 = (b + 1) % l;
            let (y, z) = (bit(s, b), bit(s, b1));
            let (rate, target) = if y == 1 && z == 0 {
                (p.clone(), s ^ (1 << b) ^ (1 << b1))
            } else if y == 0 && z == 1 {
                (q.clone(), s ^ (1 << b) ^ (1 << b1))
            } else {
                continue;
            };
            if rate.is_zero() {
                continue;
            }
            let flow = &pi[s] * &rate;
            out[target] += &flow;
            out[s] -= &flow;
        }
    }
    Ok(out.into_iter().map(|v| v.abs()).max().unwrap_or_else(BigRational::zero))
}

/// Law at time `t` of the chain started from `initial`.
///
/// The chain is uniformized with `Λ = 1.1 × max exit rate`, `P = I + Q/Λ`, so
/// the law is `initial · exp(Λt(P - I))`. Small chains take the dense route
/// `exp(Λt(P - I)) = (exp(Λt(P - I)/2^k))^{2^k}` with a Taylor series for the
/// scaled exponent; larger chains sum the Poisson series of sparse products.
pub fn transient_law(chain: &ExactChain, initial: &[f64], t: f64) -> Result<Vec<f64>> {
    let n = chain.len();
    if initial.len() != n {
        return Err(Error::InvalidParameter("initial law has the wrong length".into()));
    }
    if t == 0.0 {
        return Ok(initial.to_vec());
    }
    let lambda = 1.1 * chain.max_exit_rate();
    if lambda == 0.0 {
        return Ok(initial.to_vec());
    }
    let law = if n <= DENSE_LIMIT {
        dense_transient(chain, initial, t)
    } else {
        sparse_transient(chain, initial, t, lambda)
    };
    let total: f64 = law.iter().sum();
    if (total - 1.0).abs() > 1e-12 * initial.iter().sum::<f64>().max(1.0) && (initial.iter().sum::<f64>() - 1.0).abs() < 1e-12 {
        return Err(Error::Convergence(format!("transient law sums to {total}")));
    }
    Ok(law)
}

fn dense_transient(chain: &ExactChain, initial: &[f64], t: f64) -> Vec<f64> {
    let n = chain.len();
    // A = Q t, scaled by 2^-k so that its norm is below 1/2
    let norm = 2.0 * chain.max_exit_rate() * t;
    let k = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scale = t / 2f64.powi(k as i32);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = chain.diagonal[i] * scale;
        for &(j, r) in &chain.transitions[i] {
            a[i * n + j] += r * scale;
        }
    }
    // Taylor series of exp(A) to machine precision
    let mut e = vec![0.0; n * n];
    for i in 0..n {
        e[i * n + i] = 1.0;
    }
    let mut term = e.clone();
    for m in 1..30 {
        term = matmul(&term, &a, n);
        let inv = 1.0 / m as f64;
        let mut size = 0.0f64;
        for v in term.iter_mut() {
            *v *= inv;
            size = size.max(v.abs());
        }
        for (x, y) in e.iter_mut().zip(&term) {
            *x += y;
        }
        if size < 1e-18 {
            break;
        }
    }
    for _ in 0..k {
        e = matmul(&e, &e, n);
    }
    let mut out = vec![0.0; n];
    for i in 0..n {
        if initial[i] != 0.0 {
            for j in 0..n {
                out[j] += initial[i] * e[i * n + j];
            }
        }
    }
    out
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let x = a[i * n + k];
            if x == 0.0 {
                continue;
            }
            let row = &b[k * n..(k + 1) * n];
            let out = &mut c[i * n..(i + 1) * n];
            for (o, y) in out.iter_mut().zip(row) {
                *o += x * y;
            }
        }
    }
    c
}

fn sparse_transient(chain: &ExactChain, initial: &[f64], t: f64, lambda: f64) -> Vec<f64> {
    // split the horizon so each Poisson series has mean at most 50
    let pieces = ((lambda * t) / 50.0).ceil().max(1.0) as usize;
    let dt = t / pieces as f64;
    let mut law = initial.to_vec();
    for _ in 0..pieces {
        let mu = lambda * dt;
        let mut term = law.clone();
        let mut weight = (-mu).exp();
        let mut out: Vec<f64> = term.iter().map(|v| v * weight).collect();
        let mut acc = weight;
        let mut m = 0;
        while 1.0 - acc > 1e-16 && m < 10_000 {
            m += 1;
            // term <- term P
            let qterm = chain.left_multiply(&term);
            for (x, y) in term.iter_mut().zip(&qterm) {
                *x += y / lambda;
            }
            weight *= mu / m as f64;
            acc += weight;
            for (o, x) in out.iter_mut().zip(&term) {
                *o += weight * x;
            }
        }
        law = out;
    }
    law
}

/// Outcome of an exact refresh-dominance computation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominanceReport {
    pub dominated: bool,
    /// First label value at which the refreshed law's tail exceeds the bound.
    pub witness: Option<i64>,
    /// Refreshed probabilities on the labels `a..=b`.
    pub after: Vec<f64>,
}

/// Rounding error of a refresh probability `(f(u) - f(v)) / (f(ω) - f(η))`:
/// the differences cancel down to `f(ω) - f(η)` from values of size `max |f|`.
fn refresh_resolution(f: &dyn Fn(i64) -> f64, eta: i64, omega: i64) -> f64 {
    let den = f(omega) - f(eta);
    if den <= 0.0 {
        return 0.0;
    }
    let scale = [f(eta), f(eta + 1), f(omega - 1), f(omega)]
        .into_iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    8.0 * f64::EPSILON * scale / den
}

fn exceeds(lhs: f64, rhs: f64, slack: f64) -> bool {
    lhs > rhs * (1.0 + 1e-12) + slack + 1e-300
}

/// `Y ~ ν`; if `a <= Y <= b`, `Y` is redrawn as `a` or `b` by the lower-walker
/// rule, otherwise it is kept. Checks `P(Y* >= m) <= ν{>= m}` at every `m`
/// (only `m` in `[a, b]` can differ), up to the rounding of the refresh
/// probability.
pub fn brute_force_refresh_dominance_y(
    f: &dyn Fn(i64) -> f64,
    a: i64,
    b: i64,
    eta: i64,
    omega: i64,
    r: f64,
) -> Result<DominanceReport> {
    check_instance(a, b, eta, omega)?;
    let nu = Geometric::new(r)?;
    let mass: f64 = (a..=b).map(|l| nu.pmf(l)).sum();
    let slack = mass * refresh_resolution(f, eta, omega);
    let mut after = vec![0.0; (b - a + 1) as usize];
    if a == b {
        after[0] = mass;
    } else {
        let p_low = prob_y_low(f, omega, eta)?;
        after[0] = p_low * mass;
        *after.last_mut().unwrap() = (1.0 - p_low) * mass;
    }
    let mut witness = None;
    let mut tail = nu.tail(b + 1);
    for m in (a..=b).rev() {
        tail += after[(m - a) as usize];
        if exceeds(tail, nu.tail(m), slack) {
            witness = Some(m);
        }
    }
    Ok(DominanceReport { dominated: witness.is_none(), witness, after })
}

/// `Z ~ -ν`; if `a <= Z <= b`, `Z` is redrawn as `b - 1` or `b` by the
/// upper-walker rule. Checks `P(Z* <= k) <= P(Z <= k)` at every `k`, i.e.
/// `-Z*` is dominated by `ν`.
pub fn brute_force_refresh_dominance_z(
    f: &dyn Fn(i64) -> f64,
    a: i64,
    b: i64,
    eta: i64,
    omega: i64,
    r: f64,
) -> Result<DominanceReport> {
    check_instance(a, b, eta, omega)?;
    let nu = Geometric::new(r)?;
    let mass: f64 = (a..=b).map(|l| nu.pmf(-l)).sum();
    let slack = mass * refresh_resolution(f, eta, omega);
    let mut after = vec![0.0; (b - a + 1) as usize];
    if a == b {
        after[0] = mass;
    } else {
        let p_down = prob_z_down(f, omega, eta)?;
        let n = after.len();
        after[n - 2] = p_down * mass;
        after[n - 1] = (1.0 - p_down) * mass;
    }
    let mut witness = None;
    // P(Z < a) = ν{>= 1 - a}
    let mut cdf = nu.tail(1 - a);
    for k in a..=b {
        cdf += after[(k - a) as usize];
        if exceeds(cdf, nu.tail(-k), slack) {
            witness.get_or_insert(k);
        }
    }
    Ok(DominanceReport { dominated: witness.is_none(), witness, after })
}

fn check_instance(a: i64, b: i64, eta: i64, omega: i64) -> Result<()> {
    if b < a || omega - eta != b - a + 1 {
        return Err(Error::InvalidParameter(format!(
            "need a <= b and omega - eta = b - a + 1, got a={a}, b={b}, eta={eta}, omega={omega}"
        )));
    }
    Ok(())
}
