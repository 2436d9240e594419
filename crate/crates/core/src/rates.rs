//! Rate functions of the deposition family, the built-in models and the
//! structural checks (boundary vanishing, attractivity, three-cycle identity,
//! factorization through `f`).
//!
//! A move of type *deposition* at bond `(i, i+1)` sends
//! `(ω_i, ω_{i+1}) -> (ω_i - 1, ω_{i+1} + 1)` at rate `p(ω_i, ω_{i+1})`;
//! a *removal* sends `(ω_i, ω_{i+1}) -> (ω_i + 1, ω_{i+1} - 1)` at rate
//! `q(ω_i, ω_{i+1})`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type PairFn = Arc<dyn Fn(i64, i64) -> f64 + Send + Sync>;
pub type SiteFn = Arc<dyn Fn(i64) -> f64 + Send + Sync>;

/// Default half-width of the enumerated validation window.
pub const DEFAULT_CHECK_RANGE: i64 = 12;

const REL_TOL: f64 = 1e-12;

/// Single-site state space `I = {z : ω_min - 1 < z < ω_max + 1}`.
/// `None` stands for an infinite bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    pub omega_min: Option<i64>,
    pub omega_max: Option<i64>,
}

impl StateSpace {
    pub fn new(omega_min: Option<i64>, omega_max: Option<i64>) -> Result<Self> {
        if let Some(lo) = omega_min {
            if lo > 0 {
                return Err(Error::InvalidParameter(format!("omega_min = {lo} > 0")));
            }
        }
        if let Some(hi) = omega_max {
            if hi < 1 {
                return Err(Error::InvalidParameter(format!("omega_max = {hi} < 1")));
            }
        }
        Ok(Self {
            omega_min,
            omega_max,
        })
    }

    pub fn contains(&self, z: i64) -> bool {
        self.omega_min.is_none_or(|lo| z >= lo) && self.omega_max.is_none_or(|hi| z <= hi)
    }

    pub fn is_finite(&self) -> bool {
        self.omega_min.is_some() && self.omega_max.is_some()
    }

    /// Lower bound as a real number (`-inf` when unbounded).
    pub fn min_f64(&self) -> f64 {
        self.omega_min.map_or(f64::NEG_INFINITY, |v| v as f64)
    }

    pub fn max_f64(&self) -> f64 {
        self.omega_max.map_or(f64::INFINITY, |v| v as f64)
    }

    /// Intersection of `I` with `[-half_width, half_width]`.
    pub fn window(&self, half_width: i64) -> (i64, i64) {
        let lo = self.omega_min.map_or(-half_width, |v| v.max(-half_width));
        let hi = self.omega_max.map_or(half_width, |v| v.min(half_width));
        (lo, hi)
    }
}

/// Which of the two move types can ever fire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Asymmetry {
    Both,
    POnly,
    QOnly,
}

impl Asymmetry {
    fn from_weights(p: f64, q: f64) -> Self {
        match (p > 0.0, q > 0.0) {
            (true, false) => Asymmetry::POnly,
            (false, true) => Asymmetry::QOnly,
            _ => Asymmetry::Both,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Asep,
    ParticleAntiparticle,
    ZeroRange,
    Bricklayers,
    Custom,
}

/// How a tabulated `f` continues past its last entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum TailRule {
    ConstantAfter,
    GeometricIncrement { ratio: f64 },
}

/// The jump-rate function `f` of zero range and bricklayers models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateProfile {
    /// `f(z) = 1{z > 0}`
    Indicator,
    /// `f(z) = 1 - exp(-beta z^vartheta)`
    Saturating { beta: f64, vartheta: f64 },
    /// `f(z) = slope * z`
    Linear { slope: f64 },
    /// `f(z) = base^(2z - 1)`, which satisfies `f(z) f(1 - z) = 1`.
    Power { base: f64 },
    /// `values[k] = f(start + k)` with `start` fixed by the model
    /// (0 for zero range, 1 for bricklayers).
    Table { values: Vec<f64>, tail: TailRule },
}

impl RateProfile {
    pub fn saturating(beta: f64) -> Self {
        RateProfile::Saturating {
            beta,
            vartheta: 1.0,
        }
    }

    fn value(&self, z: i64, start: i64) -> f64 {
        match self {
            RateProfile::Indicator => {
                if z > 0 {
                    1.0
                } else {
                    0.0
                }
            }
            RateProfile::Saturating { beta, vartheta } => {
                if z <= 0 {
                    0.0
                } else {
                    -(-beta * (z as f64).powf(*vartheta)).exp_m1()
                }
            }
            RateProfile::Linear { slope } => slope * z.max(0) as f64,
            RateProfile::Power { base } => base.powi((2 * z - 1) as i32),
            RateProfile::Table { values, tail } => {
                let k = z - start;
                if k < 0 {
                    return 0.0;
                }
                let n = values.len() as i64;
                if k < n {
                    return values[k as usize];
                }
                let last = values[values.len() - 1];
                match tail {
                    TailRule::ConstantAfter => last,
                    TailRule::GeometricIncrement { ratio } => {
                        let d = last - values[values.len() - 2];
                        let steps = (k - n + 1) as i32;
                        last + d * ratio * (1.0 - ratio.powi(steps)) / (1.0 - ratio)
                    }
                }
            }
        }
    }

    /// `sup_z f(z)`, `None` when unbounded.
    pub fn supremum(&self) -> Option<f64> {
        match self {
            RateProfile::Indicator => Some(1.0),
            RateProfile::Saturating { .. } => Some(1.0),
            RateProfile::Linear { slope } if *slope == 0.0 => Some(0.0),
            RateProfile::Linear { .. } | RateProfile::Power { .. } => None,
            RateProfile::Table { values, tail } => {
                let last = values[values.len() - 1];
                let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                match tail {
                    TailRule::ConstantAfter => Some(max),
                    TailRule::GeometricIncrement { ratio } => {
                        let d = last - values[values.len() - 2];
                        Some(max.max(last + d * ratio / (1.0 - ratio)))
                    }
                }
            }
        }
    }

    fn check(&self, start: i64) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self {
            RateProfile::Saturating { beta, vartheta } => {
                if *beta <= 0.0 || *vartheta <= 0.0 {
                    return bad("saturating profile needs beta > 0 and vartheta > 0");
                }
            }
            RateProfile::Linear { slope } => {
                if *slope <= 0.0 {
                    return bad("linear profile needs slope > 0");
                }
            }
            RateProfile::Power { base } => {
                if *base <= 1.0 {
                    return bad("power profile needs base > 1");
                }
            }
            RateProfile::Table { values, tail } => {
                if values.len() < 2 {
                    return bad("rate table needs at least two entries");
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return bad("rate table entries must be finite and nonnegative");
                }
                if values.windows(2).any(|w| w[1] < w[0]) {
                    return bad("rate table must be nondecreasing");
                }
                if start == 0 && values[0] != 0.0 {
                    return bad("zero range rate table must start with f(0) = 0");
                }
                if let TailRule::GeometricIncrement { ratio } = tail {
                    if !(0.0..1.0).contains(ratio) {
                        return bad("geometric-increment ratio must lie in [0, 1)");
                    }
                }
            }
            RateProfile::Indicator => {}
        }
        Ok(())
    }
}

/// A member of the process family: rates `p`, `q`, the function `f` and the
/// symmetric factors `s_p`, `s_q` of `p(y,z) = s_p(y,z+1) f(y)`,
/// `q(y,z) = s_q(y+1,z) f(z)`.
#[derive(Clone)]
pub struct RateSpec {
    pub name: String,
    pub kind: ModelKind,
    pub space: StateSpace,
    pub asymmetry: Asymmetry,
    /// `sup (p + q)` over `I x I`; `None` when the rates are unbounded.
    pub rate_upper_bound: Option<f64>,
    /// The profile that generated `f`, for zero range and bricklayers models.
    pub profile: Option<RateProfile>,
    theta_bounds: (f64, f64),
    p: PairFn,
    q: PairFn,
    f: SiteFn,
    s_p: PairFn,
    s_q: PairFn,
}

impl fmt::Debug for RateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RateSpec")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("space", &self.space)
            .field("asymmetry", &self.asymmetry)
            .field("rate_upper_bound", &self.rate_upper_bound)
            .finish()
    }
}

fn check_weights(p: f64, q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) || (p + q - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= p, q <= 1 with p + q = 1, got p={p}, q={q}"
        )));
    }
    Ok(())
}

impl RateSpec {
    /// Fully custom rates. The admissible tilt interval defaults to the
    /// whole line when `I` is finite.
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        name: &str,
        space: StateSpace,
        p: PairFn,
        q: PairFn,
        f: SiteFn,
        s_p: PairFn,
        s_q: PairFn,
        theta_bounds: (f64, f64),
    ) -> Self {
        let (lo, hi) = space.window(DEFAULT_CHECK_RANGE);
        let mut bound = 0.0f64;
        let (mut any_p, mut any_q) = (false, false);
        for y in lo..=hi {
            for z in lo..=hi {
                let (a, b) = (p(y, z), q(y, z));
                any_p |= a > 0.0;
                any_q |= b > 0.0;
                bound = bound.max(a + b);
            }
        }
        let asymmetry = match (any_p, any_q) {
            (true, false) => Asymmetry::POnly,
            (false, true) => Asymmetry::QOnly,
            _ => Asymmetry::Both,
        };
        Self {
            name: name.to_string(),
            kind: ModelKind::Custom,
            space,
            asymmetry,
            rate_upper_bound: if space.is_finite() { Some(bound) } else { None },
            profile: None,
            theta_bounds,
            p,
            q,
            f,
            s_p,
            s_q,
        }
    }

    /// Asymmetric simple exclusion with right rate `p` and left rate `1 - p`.
    pub fn asep(p: f64) -> Result<Self> {
        let q = 1.0 - p;
        check_weights(p, q)?;
        let space = StateSpace::new(Some(0), Some(1))?;
        Ok(Self {
            name: format!("asep(p={p})"),
            kind: ModelKind::Asep,
            space,
            asymmetry: Asymmetry::from_weights(p, q),
            rate_upper_bound: Some(p.max(q)),
            profile: None,
            theta_bounds: (f64::NEG_INFINITY, f64::INFINITY),
            p: Arc::new(move |y, z| if y == 1 && z == 0 { p } else { 0.0 }),
            q: Arc::new(move |y, z| if y == 0 && z == 1 { q } else { 0.0 }),
            f: Arc::new(|z| if z == 1 { 1.0 } else { 0.0 }),
            s_p: Arc::new(move |y, z| if y == 1 && z == 1 { p } else { 0.0 }),
            s_q: Arc::new(move |y, z| if y == 1 && z == 1 { q } else { 0.0 }),
        })
    }

    /// Exclusion of particles and antiparticles with pair creation at
    /// rate `c` and annihilation at rate `a`, `0 < c <= a/2`.
    pub fn particle_antiparticle(p: f64, c: f64, a: f64) -> Result<Self> {
        let q = 1.0 - p;
        check_weights(p, q)?;
        if !(c > 0.0 && a > 0.0 && c <= a / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "particle-antiparticle exclusion needs 0 < c <= a/2, got c={c}, a={a}"
            )));
        }
        let space = StateSpace::new(Some(-1), Some(1))?;
        let pf = move |y: i64, z: i64| match (y, z) {
            (0, 0) => p * c,
            (0, -1) | (1, 0) => p * a / 2.0,
            (1, -1) => p * a,
            _ => 0.0,
        };
        let qf = move |y: i64, z: i64| match (y, z) {
            (0, 0) => q * c,
            (-1, 0) | (0, 1) => q * a / 2.0,
            (-1, 1) => q * a,
            _ => 0.0,
        };
        let sym = move |w: f64| {
            move |y: i64, z: i64| match (y, z) {
                (0, 1) | (1, 0) => w,
                (0, 0) => w * a / (2.0 * c),
                (1, 1) => w / 2.0,
                _ => 0.0,
            }
        };
        let mut bound = 0.0f64;
        for y in -1..=1 {
            for z in -1..=1 {
                bound = bound.max(pf(y, z) + qf(y, z));
            }
        }
        Ok(Self {
            name: format!("pap-exclusion(p={p}, c={c}, a={a})"),
            kind: ModelKind::ParticleAntiparticle,
            space,
            asymmetry: Asymmetry::from_weights(p, q),
            rate_upper_bound: Some(bound),
            profile: None,
            theta_bounds: (f64::NEG_INFINITY, f64::INFINITY),
            p: Arc::new(pf),
            q: Arc::new(qf),
            f: Arc::new(move |z| match z {
                0 => c,
                1 => a,
                _ => 0.0,
            }),
            s_p: Arc::new(sym(p)),
            s_q: Arc::new(sym(q)),
        })
    }

    /// Zero range process: a particle leaves site `i` to the right at rate
    /// `p f(ω_i)` and to the left at rate `q f(ω_i)`.
    pub fn zero_range(p: f64, profile: RateProfile) -> Result<Self> {
        let q = 1.0 - p;
        check_weights(p, q)?;
        profile.check(0)?;
        if matches!(profile, RateProfile::Power { .. }) {
            return Err(Error::InvalidParameter(
                "the power profile belongs to bricklayers; zero range needs f(0) = 0".into(),
            ));
        }
        let space = StateSpace::new(Some(0), None)?;
        let sup = profile.supremum();
        let prof = profile.clone();
        let f: SiteFn = Arc::new(move |z| if z < 0 { 0.0 } else { prof.value(z, 0) });
        let (fp, fq) = (f.clone(), f.clone());
        let theta_hi = sup.map_or(f64::INFINITY, f64::ln);
        Ok(Self {
            name: format!("zrp(p={p})"),
            kind: ModelKind::ZeroRange,
            space,
            asymmetry: Asymmetry::from_weights(p, q),
            rate_upper_bound: sup.map(|s| (p + q) * s),
            profile: Some(profile),
            theta_bounds: (f64::NEG_INFINITY, theta_hi),
            p: Arc::new(move |y, _| if y >= 0 { p * fp(y) } else { 0.0 }),
            q: Arc::new(move |_, z| if z >= 0 { q * fq(z) } else { 0.0 }),
            f,
            s_p: Arc::new(move |_, _| p),
            s_q: Arc::new(move |_, _| q),
        })
    }

    /// Constant-rate zero range, `f(z) = 1{z > 0}`.
    pub fn zero_range_constant(p: f64) -> Result<Self> {
        let mut spec = Self::zero_range(p, RateProfile::Indicator)?;
        spec.name = format!("zrp-const(p={p})");
        Ok(spec)
    }

    /// Bricklayers process: `p(y,z) = p f(y) + p f(-z)`, `q(y,z) = q f(-y) + q f(z)`
    /// with `f(z) f(1-z) = 1`. The profile fixes `f` on the positive integers.
    pub fn bricklayers(p: f64, profile: RateProfile, rate_upper_bound: Option<f64>) -> Result<Self> {
        let q = 1.0 - p;
        check_weights(p, q)?;
        profile.check(1)?;
        let prof = profile.clone();
        let f_pos = move |z: i64| prof.value(z, 1);
        if f_pos(1) < 1.0 {
            return Err(Error::InvalidParameter(
                "bricklayers needs f(1) >= 1 so that the reflected f stays nondecreasing".into(),
            ));
        }
        if f_pos(1) == 1.0 && profile.supremum() == Some(1.0) {
            return Err(Error::InvalidParameter(
                "constant bricklayers rate gives constant p and q (excluded case)".into(),
            ));
        }
        let f: SiteFn = Arc::new(move |z| if z >= 1 { f_pos(z) } else { 1.0 / f_pos(1 - z) });
        let (fp, fq) = (f.clone(), f.clone());
        let (fsp, fsq) = (f.clone(), f.clone());
        let theta_hi = profile.supremum().map_or(f64::INFINITY, f64::ln);
        Ok(Self {
            name: format!("bricklayers(p={p})"),
            kind: ModelKind::Bricklayers,
            space: StateSpace::new(None, None)?,
            asymmetry: Asymmetry::from_weights(p, q),
            rate_upper_bound,
            profile: Some(profile),
            theta_bounds: (-theta_hi, theta_hi),
            p: Arc::new(move |y, z| p * fp(y) + p * fp(-z)),
            q: Arc::new(move |y, z| q * fq(-y) + q * fq(z)),
            f,
            s_p: Arc::new(move |y, z| p + p / (fsp(y) * fsp(z))),
            s_q: Arc::new(move |y, z| q + q / (fsq(y) * fsq(z))),
        })
    }

    #[inline]
    pub fn p(&self, y: i64, z: i64) -> f64 {
        if self.space.contains(y) && self.space.contains(z) {
            (self.p)(y, z)
        } else {
            0.0
        }
    }

    #[inline]
    pub fn q(&self, y: i64, z: i64) -> f64 {
        if self.space.contains(y) && self.space.contains(z) {
            (self.q)(y, z)
        } else {
            0.0
        }
    }

    #[inline]
    pub fn f(&self, z: i64) -> f64 {
        (self.f)(z)
    }

    /// `s_p`, zero when either argument exceeds `ω_max`.
    pub fn s_p(&self, y: i64, z: i64) -> f64 {
        if self.above_max(y) || self.above_max(z) {
            0.0
        } else {
            (self.s_p)(y, z)
        }
    }

    pub fn s_q(&self, y: i64, z: i64) -> f64 {
        if self.above_max(y) || self.above_max(z) {
            0.0
        } else {
            (self.s_q)(y, z)
        }
    }

    fn above_max(&self, z: i64) -> bool {
        self.space.omega_max.is_some_and(|hi| z > hi)
    }

    /// Admissible tilt interval `(θ_lo, θ_hi)` of the product measures.
    pub fn theta_bounds(&self) -> (f64, f64) {
        self.theta_bounds
    }

    /// Net expected growth rate `p - q` of a bond in state `(y, z)`.
    pub fn net_rate(&self, y: i64, z: i64) -> f64 {
        self.p(y, z) - self.q(y, z)
    }

    /// Totally asymmetric zero range process (jumps to the right only).
    pub fn is_tazrp(&self) -> bool {
        self.kind == ModelKind::ZeroRange && self.asymmetry == Asymmetry::POnly
    }
}

/// Model identifiers for [`builtin`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinModel {
    Asep,
    Zrp,
    ZrpConst,
    Bricklayers,
    PapExclusion,
}

impl std::str::FromStr for BuiltinModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asep" => Ok(Self::Asep),
            "zrp" => Ok(Self::Zrp),
            "zrp-const" => Ok(Self::ZrpConst),
            "bricklayers" => Ok(Self::Bricklayers),
            "pap-exclusion" => Ok(Self::PapExclusion),
            other => Err(Error::InvalidParameter(format!("unknown model '{other}'"))),
        }
    }
}

/// Parameters for the built-in models. Unset fields take the defaults
/// noted on each field.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Right-jump weight; `q = 1 - p`. Default 1 (total asymmetry).
    #[serde(default)]
    pub p: Option<f64>,
    /// Creation rate (particle-antiparticle). Default 0.5.
    #[serde(default)]
    pub c: Option<f64>,
    /// Annihilation rate (particle-antiparticle). Default 1.
    #[serde(default)]
    pub a: Option<f64>,
    /// Jump-rate profile for `zrp` and `bricklayers`.
    #[serde(default)]
    pub f: Option<RateProfile>,
    #[serde(default)]
    pub rate_upper_bound: Option<f64>,
}

/// Builds one of the named models.
pub fn builtin(model: BuiltinModel, params: &ModelParams) -> Result<RateSpec> {
    let p = params.p.unwrap_or(1.0);
    match model {
        BuiltinModel::Asep => RateSpec::asep(p),
        BuiltinModel::ZrpConst => RateSpec::zero_range_constant(p),
        BuiltinModel::Zrp => {
            let f = params.f.clone().unwrap_or(RateProfile::saturating(1.0));
            RateSpec::zero_range(p, f)
        }
        BuiltinModel::Bricklayers => {
            let f = params
                .f
                .clone()
                .unwrap_or(RateProfile::Power { base: std::f64::consts::E });
            RateSpec::bricklayers(p, f, params.rate_upper_bound)
        }
        BuiltinModel::PapExclusion => {
            RateSpec::particle_antiparticle(p, params.c.unwrap_or(0.5), params.a.unwrap_or(1.0))
        }
    }
}

/// One failed structural condition, with the arguments that witness it.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "condition", rename_all = "kebab-case")]
pub enum Violation {
    /// A rate that must vanish at a finite boundary does not.
    BoundaryNonzero { rate: char, y: i64, z: i64, value: f64 },
    /// Neither `p` nor `q` vanishes identically but one is zero at an interior pair.
    Positivity { rate: char, y: i64, z: i64 },
    /// Monotonicity failure; `direction` names the inequality that broke.
    Attractivity { direction: &'static str, y: i64, z: i64, lhs: f64, rhs: f64 },
    CycleIdentity { x: i64, y: i64, z: i64, lhs: f64, rhs: f64 },
    Factorization { rate: char, y: i64, z: i64, direct: f64, factored: f64 },
    Symmetry { factor: &'static str, y: i64, z: i64 },
    JumpRate { z: i64, reason: &'static str },
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub window: (i64, i64),
    /// True when `I` is infinite and only the window was checked.
    pub window_only: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn differs(a: f64, b: f64) -> bool {
    (a - b).abs() > REL_TOL * (1.0 + a.abs().max(b.abs()))
}

/// Checks boundary vanishing, attractivity in all four directions, the
/// three-cycle identity and the factorization on `I ∩ [-check_range, check_range]`.
pub fn validate(spec: &RateSpec, check_range: i64) -> ValidationReport {
    let (lo, hi) = spec.space.window(check_range);
    let mut v = Vec::new();
    let inside = |z: i64| z >= lo && z <= hi;

    // Boundary vanishing.
    for w in lo..=hi {
        if let Some(m) = spec.space.omega_min {
            for (rate, val, y, z) in [('p', spec.p(m, w), m, w), ('q', spec.q(w, m), w, m)] {
                if val != 0.0 {
                    v.push(Violation::BoundaryNonzero { rate, y, z, value: val });
                }
            }
        }
        if let Some(m) = spec.space.omega_max {
            for (rate, val, y, z) in [('p', spec.p(w, m), w, m), ('q', spec.q(m, w), m, w)] {
                if val != 0.0 {
                    v.push(Violation::BoundaryNonzero { rate, y, z, value: val });
                }
            }
        }
    }

    // Positivity away from the boundary unless one rate vanishes identically.
    if spec.asymmetry == Asymmetry::Both {
        let at_min = |z: i64| spec.space.omega_min == Some(z);
        let at_max = |z: i64| spec.space.omega_max == Some(z);
        for y in lo..=hi {
            for z in lo..=hi {
                if !at_min(y) && !at_max(z) && spec.p(y, z) <= 0.0 {
                    v.push(Violation::Positivity { rate: 'p', y, z });
                }
                if !at_max(y) && !at_min(z) && spec.q(y, z) <= 0.0 {
                    v.push(Violation::Positivity { rate: 'q', y, z });
                }
            }
        }
    }

    // Attractivity.
    for y in lo..=hi {
        for z in lo..hi {
            let checks: [(&'static str, f64, f64); 4] = [
                ("p(z+1,y) >= p(z,y)", spec.p(z + 1, y), spec.p(z, y)),
                ("p(y,z) >= p(y,z+1)", spec.p(y, z), spec.p(y, z + 1)),
                ("q(z,y) >= q(z+1,y)", spec.q(z, y), spec.q(z + 1, y)),
                ("q(y,z+1) >= q(y,z)", spec.q(y, z + 1), spec.q(y, z)),
            ];
            for (direction, lhs, rhs) in checks {
                if lhs < rhs && differs(lhs, rhs) {
                    v.push(Violation::Attractivity { direction, y, z, lhs, rhs });
                }
            }
        }
    }

    // Three-cycle identity.
    let g = |a: i64, b: i64| spec.p(a, b) + spec.q(a, b);
    for x in lo..=hi {
        for y in lo..=hi {
            for z in lo..=hi {
                let lhs = g(x, y) + g(y, z) + g(z, x);
                let rhs = g(x, z) + g(z, y) + g(y, x);
                if differs(lhs, rhs) {
                    v.push(Violation::CycleIdentity { x, y, z, lhs, rhs });
                }
            }
        }
    }

    // Factorization and symmetry of s_p, s_q.
    for y in lo..=hi {
        for z in lo..=hi {
            let fp = spec.s_p(y, z + 1) * spec.f(y);
            if differs(spec.p(y, z), fp) {
                v.push(Violation::Factorization { rate: 'p', y, z, direct: spec.p(y, z), factored: fp });
            }
            let fq = spec.s_q(y + 1, z) * spec.f(z);
            if differs(spec.q(y, z), fq) {
                v.push(Violation::Factorization { rate: 'q', y, z, direct: spec.q(y, z), factored: fq });
            }
            if differs(spec.s_p(y, z), spec.s_p(z, y)) {
                v.push(Violation::Symmetry { factor: "s_p", y, z });
            }
            if differs(spec.s_q(y, z), spec.s_q(z, y)) {
                v.push(Violation::Symmetry { factor: "s_q", y, z });
            }
        }
    }

    // f normalization, positivity and monotonicity.
    if let Some(m) = spec.space.omega_min {
        if inside(m) && spec.f(m) != 0.0 {
            v.push(Violation::JumpRate { z: m, reason: "f(omega_min) must vanish" });
        }
    }
    for z in lo..=hi {
        if spec.space.omega_min.is_none_or(|m| z > m) && spec.f(z) <= 0.0 {
            v.push(Violation::JumpRate { z, reason: "f must be positive above omega_min" });
        }
        if z < hi && spec.f(z + 1) < spec.f(z) && differs(spec.f(z + 1), spec.f(z)) {
            v.push(Violation::JumpRate { z, reason: "f must be nondecreasing" });
        }
    }

    ValidationReport {
        window: (lo, hi),
        window_only: !spec.space.is_finite(),
        violations: v,
    }
}

/// Outcome of the exponentially-decreasing-slope check on `f`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeCheck {
    pub holds: bool,
    /// Largest increment ratio seen; any `r` in `[r, 1)` is valid when `holds`.
    /// Zero means every tested ratio was vacuous or zero.
    pub r: f64,
    /// First argument at which the check failed, if any.
    pub witness: Option<i64>,
}

/// Checks `f(0) = 0 < f(1)`, monotonicity and
/// `(f(z+1) - f(z)) / (f(z) - f(z-1)) <= r < 1` for `1 <= z <= z_window`.
/// Ratios whose denominator is lost to rounding (below `1e-6 * max(|f|, 1)`)
/// are skipped.
pub fn check_slope_decay(f: &dyn Fn(i64) -> f64, z_window: i64) -> SlopeCheck {
    let fail = |z: i64, r: f64| SlopeCheck { holds: false, r, witness: Some(z) };
    if f(0) != 0.0 || f(1) <= 0.0 {
        return fail(0, f64::NAN);
    }
    let mut r: f64 = 0.0;
    for z in 1..=z_window {
        let up = f(z + 1) - f(z);
        let down = f(z) - f(z - 1);
        if up < 0.0 {
            return fail(z, r);
        }
        if down > 1e-6 * f(z).abs().max(1.0) {
            r = r.max(up / down);
            if up / down >= 1.0 {
                return fail(z, up / down);
            }
        } else if up > down.max(0.0) + 1e-12 * f(z).abs().max(1.0) {
            // increments below rounding resolution are not compared, but
            // growth after a flat stretch is never concave
            return fail(z, f64::INFINITY);
        }
    }
    SlopeCheck { holds: true, r, witness: None }
}

/// Rates tabulated over a finite occupancy window, for O(1) reads on the
/// simulation hot path.
#[derive(Clone, Debug)]
pub struct RateTable {
    lo: i64,
    hi: i64,
    width: usize,
    deposit: Vec<f64>,
    removal: Vec<f64>,
    asymmetry: Asymmetry,
    bound: f64,
}

impl RateTable {
    /// Tabulates `p` and `q` on `I ∩ [-cap, cap]`. Infinite state spaces need
    /// a cap; the bound falls back to the table maximum when `spec` has no
    /// finite `rate_upper_bound`.
    pub fn new(spec: &RateSpec, cap: Option<i64>) -> Result<Self> {
        let (lo, hi) = match cap {
            Some(c) => spec.space.window(c),
            None if spec.space.is_finite() => (spec.space.omega_min.unwrap(), spec.space.omega_max.unwrap()),
            None => return Err(Error::UnboundedRates),
        };
        let width = (hi - lo + 1) as usize;
        let mut deposit = vec![0.0; width * width];
        let mut removal = vec![0.0; width * width];
        let mut max = 0.0f64;
        for y in lo..=hi {
            for z in lo..=hi {
                let k = (y - lo) as usize * width + (z - lo) as usize;
                deposit[k] = spec.p(y, z);
                removal[k] = spec.q(y, z);
                max = max.max(deposit[k] + removal[k]);
            }
        }
        Ok(Self {
            lo,
            hi,
            width,
            deposit,
            removal,
            asymmetry: spec.asymmetry,
            bound: spec.rate_upper_bound.unwrap_or(max),
        })
    }

    #[inline]
    fn index(&self, y: i64, z: i64) -> usize {
        (y - self.lo) as usize * self.width + (z - self.lo) as usize
    }

    #[inline]
    pub fn deposit(&self, y: i64, z: i64) -> f64 {
        self.deposit[self.index(y, z)]
    }

    #[inline]
    pub fn removal(&self, y: i64, z: i64) -> f64 {
        self.removal[self.index(y, z)]
    }

    #[inline]
    pub fn rate(&self, mv: Move, y: i64, z: i64) -> f64 {
        match mv {
            Move::Deposit => self.deposit(y, z),
            Move::Removal => self.removal(y, z),
        }
    }

    #[inline]
    pub fn contains(&self, z: i64) -> bool {
        z >= self.lo && z <= self.hi
    }

    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    /// Information-speed bound used by the wraparound guard.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Move types that can fire.
    pub fn moves(&self) -> &'static [Move] {
        match self.asymmetry {
            Asymmetry::POnly => &[Move::Deposit],
            Asymmetry::QOnly => &[Move::Removal],
            Asymmetry::Both => &[Move::Deposit, Move::Removal],
        }
    }
}

/// The two elementary moves at a bond.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Move {
    /// Brick deposited: one unit moves right across the bond.
    Deposit,
    /// Brick removed: one unit moves left across the bond.
    Removal,
}

impl Move {
    /// `+1` for a deposition, `-1` for a removal.
    pub fn direction(self) -> i64 {
        match self {
            Move::Deposit => 1,
            Move::Removal => -1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_pass_validation() {
        let specs = [
            RateSpec::asep(1.0).unwrap(),
            RateSpec::asep(0.7).unwrap(),
            RateSpec::zero_range(1.0, RateProfile::saturating(1.0)).unwrap(),
            RateSpec::zero_range(0.6, RateProfile::saturating(0.5)).unwrap(),
            RateSpec::zero_range_constant(1.0).unwrap(),
            RateSpec::bricklayers(0.8, RateProfile::Power { base: std::f64::consts::E }, None).unwrap(),
            RateSpec::particle_antiparticle(0.75, 0.4, 1.0).unwrap(),
        ];
        for spec in &specs {
            let report = validate(spec, DEFAULT_CHECK_RANGE);
            assert!(report.is_valid(), "{}: {:?}", spec.name, report.violations);
        }
    }

    #[test]
    fn asep_total_asymmetry_rates() {
        let spec = RateSpec::asep(1.0).unwrap();
        for y in 0..=1 {
            for z in 0..=1 {
                let expect = if y == 1 && z == 0 { 1.0 } else { 0.0 };
                assert_eq!(spec.p(y, z), expect);
                assert_eq!(spec.q(y, z), 0.0);
            }
        }
        assert_eq!(spec.asymmetry, Asymmetry::POnly);
    }

    #[test]
    fn constant_tazrp_rates() {
        let spec = RateSpec::zero_range_constant(1.0).unwrap();
        for z in 0..10 {
            assert_eq!(spec.f(z), if z > 0 { 1.0 } else { 0.0 });
            assert_eq!(spec.p(z, 3), spec.f(z));
            assert_eq!(spec.q(z, 3), 0.0);
        }
    }

    #[test]
    fn bricklayers_reflection() {
        let e = std::f64::consts::E;
        let spec = RateSpec::bricklayers(1.0, RateProfile::Power { base: e }, None).unwrap();
        assert!((spec.f(1) - e).abs() < 1e-15);
        assert!((spec.f(0) - 1.0 / e).abs() < 1e-15);
        for z in -5..5 {
            assert!((spec.f(z) * spec.f(1 - z) - 1.0).abs() < 1e-12);
        }
        let table = RateProfile::Table {
            values: vec![2.0, 3.0],
            tail: TailRule::ConstantAfter,
        };
        let spec = RateSpec::bricklayers(1.0, table, Some(10.0)).unwrap();
        assert_eq!(spec.f(0), 0.5);
        assert_eq!(spec.f(-1), 1.0 / 3.0);
        assert_eq!(spec.f(7), 3.0);
    }

    #[test]
    fn broken_attractivity_is_reported() {
        let space = StateSpace::new(Some(0), Some(3)).unwrap();
        // p decreasing in its first argument at y=2 -> 3
        let p: PairFn = Arc::new(|y, z| if y == 3 && z < 3 { 0.5 } else if y > 0 && z < 3 { 1.0 } else { 0.0 });
        let zero: PairFn = Arc::new(|_, _| 0.0);
        let f: SiteFn = Arc::new(|z| if z > 0 { 1.0 } else { 0.0 });
        let spec = RateSpec::custom("broken", space, p, zero.clone(), f, zero.clone(), zero, (f64::NEG_INFINITY, f64::INFINITY));
        let report = validate(&spec, DEFAULT_CHECK_RANGE);
        assert!(report.violations.iter().any(|v| matches!(
            v,
            Violation::Attractivity { direction: "p(z+1,y) >= p(z,y)", z: 2, .. }
        )));
    }

    #[test]
    fn slope_decay_examples() {
        let beta = 1.3;
        let f = move |z: i64| -(-beta * z as f64).exp_m1();
        let c = check_slope_decay(&f, 12);
        assert!(c.holds);
        assert!((c.r - (-beta).exp()).abs() < 1e-9);

        let ind = |z: i64| if z > 0 { 1.0 } else { 0.0 };
        let c = check_slope_decay(&ind, 12);
        assert!(c.holds);
        assert_eq!(c.r, 0.0);

        let lin = |z: i64| z as f64;
        let c = check_slope_decay(&lin, 12);
        assert!(!c.holds);
        assert_eq!(c.r, 1.0);
    }

    #[test]
    fn tabulated_geometric_tail() {
        let prof = RateProfile::Table {
            values: vec![0.0, 0.5, 0.75],
            tail: TailRule::GeometricIncrement { ratio: 0.5 },
        };
        let spec = RateSpec::zero_range(1.0, prof).unwrap();
        assert!((spec.f(3) - 0.875).abs() < 1e-15);
        assert!((spec.f(4) - 0.9375).abs() < 1e-15);
        assert_eq!(spec.rate_upper_bound, Some(1.0));
        assert!(validate(&spec, 12).is_valid());
    }

    #[test]
    fn invalid_parameters_are_named() {
        assert!(matches!(RateSpec::asep(1.5), Err(Error::InvalidParameter(_))));
        assert!(matches!(RateSpec::particle_antiparticle(1.0, 0.8, 1.0), Err(Error::InvalidParameter(_))));
        let decreasing = RateProfile::Table {
            values: vec![0.0, 1.0, 0.5],
            tail: TailRule::ConstantAfter,
        };
        assert!(RateSpec::zero_range(1.0, decreasing).is_err());
    }

    #[test]
    fn bounded_profiles_respect_the_rate_bound() {
        let spec = RateSpec::zero_range(1.0, RateProfile::saturating(1.0)).unwrap();
        let bound = spec.rate_upper_bound.unwrap();
        assert_eq!(bound, 1.0);
        for y in 0..200 {
            assert!(spec.p(y, 0) + spec.q(y, 0) <= bound);
        }
    }

    #[test]
    fn table_window_and_lookup() {
        let spec = RateSpec::zero_range(1.0, RateProfile::saturating(1.0)).unwrap();
        let t = RateTable::new(&spec, Some(60)).unwrap();
        assert_eq!(t.window(), (0, 60));
        assert_eq!(t.deposit(3, 7), spec.p(3, 7));
        assert_eq!(t.moves(), &[Move::Deposit]);
        assert!(matches!(RateTable::new(&spec, None), Err(Error::UnboundedRates)));
        let asep = RateSpec::asep(0.7).unwrap();
        let t = RateTable::new(&asep, None).unwrap();
        assert_eq!(t.window(), (0, 1));
        assert_eq!(t.bound(), 0.7);
    }
}
