use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use deposition::coupling::{CoupledLog, DiscrepancyPair, PairLaw};
use deposition::flux;
use deposition::harness::experiments::{ring_doubling_check, DoublingRow};
use deposition::harness::{self, ExperimentConfig, ResultRow, RingSize, Summary, TestOutcome};
use deposition::measures::{self, stationary};
use deposition::microconcavity::LabelWalkers;
use deposition::oracle::{asep_rational_residual, stationarity_residual, ExactChain};
use deposition::rates::{self, ModelParams, RateProfile, RateSpec};
use deposition::replicate::{auxiliary_rng, replicate_rng};
use deposition::simulator::{EventLog, RingState};
use deposition::{Error, Result};

#[derive(Parser)]
#[command(name = "deposition", version, about = "Simulate and check attractive deposition processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural rate conditions on an occupancy window
    Validate {
        #[command(flatten)]
        model: ModelArgs,
        /// Half-width of the occupancy window for infinite state spaces
        #[arg(long, default_value_t = rates::DEFAULT_CHECK_RANGE)]
        range: i64,
    },
    /// Tabulate H, H' and H'' over a density grid
    Flux {
        #[command(flatten)]
        model: ModelArgs,
        /// start:end:step
        #[arg(long, default_value = "0.1:0.9:0.1")]
        rho_grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact stationarity residual of the product measure on a small ring
    Stationarity {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long, default_value_t = 5)]
        l: usize,
        /// Occupancy window half-width for infinite state spaces
        #[arg(long, default_value_t = 8)]
        window: i64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        /// ASEP only: exact rational arithmetic with p and rho given as fractions
        #[arg(long)]
        rational: bool,
    },
    /// E Q(t) = V t and Var h_0(t) = Var(omega) E|Q(t)|
    Identities(RunArgs),
    /// Moments of |Q(t) - floor(V t)| and their log-log slope
    Scaling {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 0.55)]
        slope_min: f64,
        #[arg(long, default_value_t = 0.80)]
        slope_max: f64,
        #[arg(long, default_value_t = 4.5)]
        ratio_min: f64,
        /// Rerun on a ring twice as long and compare every estimate
        #[arg(long)]
        check_ring: bool,
    },
    /// Height fluctuations along a non-characteristic direction
    Clt {
        #[command(flatten)]
        run: RunArgs,
        /// Observation speed V (must differ from the characteristic speed)
        #[arg(long)]
        v: Option<f64>,
        #[arg(long, default_value_t = 0.15)]
        variance_tol: f64,
        #[arg(long, default_value_t = 0.02)]
        ks_max: f64,
    },
    /// Mean speed of the second class particle along the time grid
    Lln(RunArgs),
    /// Label walkers of the concavity coupling
    Microconcavity {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 0.01)]
        ks_alpha: f64,
    },
    /// Write one trajectory as CSV
    DumpTrajectory {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = DumpKind::Ring)]
        kind: DumpKind,
        #[arg(long)]
        lambda: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DumpKind {
    /// Single process: time, bond, direction
    Ring,
    /// Discrepancy pair: time, bond, direction, fired processes, discrepancy move
    Pair,
    /// Label walkers: time, y, z, X_y, X_z
    Walkers,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Indicator,
    GeomExp,
    Linear,
    Power,
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    /// asep | zrp | zrp-const | bricklayers | pap-exclusion
    #[arg(long)]
    model: Option<String>,
    /// Right-jump weight (q = 1 - p)
    #[arg(long)]
    p: Option<f64>,
    /// Jump-rate profile f for zrp and bricklayers
    #[arg(long, value_enum)]
    f: Option<Profile>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    vartheta: Option<f64>,
    #[arg(long)]
    slope: Option<f64>,
    #[arg(long)]
    base: Option<f64>,
    /// Creation rate (particle-antiparticle)
    #[arg(long)]
    c: Option<f64>,
    /// Annihilation rate (particle-antiparticle)
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    rate_upper_bound: Option<f64>,
    #[arg(long)]
    occupancy_cap: Option<i64>,
}

impl ModelArgs {
    fn profile(&self) -> Option<RateProfile> {
        self.f.map(|f| match f {
            Profile::Indicator => RateProfile::Indicator,
            Profile::GeomExp => RateProfile::Saturating {
                beta: self.beta.unwrap_or(1.0),
                vartheta: self.vartheta.unwrap_or(1.0),
            },
            Profile::Linear => RateProfile::Linear {
                slope: self.slope.unwrap_or(1.0),
            },
            Profile::Power => RateProfile::Power {
                base: self.base.unwrap_or(std::f64::consts::E),
            },
        })
    }

    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(m) = &self.model {
            cfg.model = m.clone();
        }
        let p = &mut cfg.params;
        p.p = self.p.or(p.p);
        p.c = self.c.or(p.c);
        p.a = self.a.or(p.a);
        p.rate_upper_bound = self.rate_upper_bound.or(p.rate_upper_bound);
        if let Some(f) = self.profile() {
            p.f = Some(f);
        }
        cfg.occupancy_cap = self.occupancy_cap.or(cfg.occupancy_cap);
    }

    fn spec(&self) -> Result<RateSpec> {
        let model = self
            .model
            .as_deref()
            .ok_or_else(|| Error::Config("--model is required".into()))?;
        let params = ModelParams {
            p: self.p,
            c: self.c,
            a: self.a,
            f: self.profile(),
            rate_upper_bound: self.rate_upper_bound,
        };
        rates::builtin(model.parse()?, &params)
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON experiment config; flags given on the command line override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    rho: Option<f64>,
    /// Comma-separated observation times
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    /// Ring size (default: smallest size the wraparound guard allows)
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Master seed; overrides the config
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    guard_factor: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Results CSV (default: the config's path, else stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON (default: the config's path, else not written)
    #[arg(long)]
    summary: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self, id: &str, model: &str, rho: f64, t: &[f64], replicates: usize) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => {
                let mut c = ExperimentConfig::new(model, rho, t.to_vec(), replicates, 1);
                c.id = id.into();
                if model == "zrp" {
                    c.params.f = Some(RateProfile::saturating(1.0));
                }
                c
            }
        };
        self.model.apply(&mut cfg);
        if let Some(rho) = self.rho {
            cfg.rho = rho;
        }
        if let Some(t) = &self.t {
            cfg.t_list = t.clone();
        }
        if let Some(l) = self.l {
            cfg.ring = RingSize::Fixed(l);
        }
        if let Some(n) = self.replicates {
            cfg.replicates = n;
        }
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(g) = self.guard_factor {
            cfg.guard_factor = g;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(p) = &self.out {
            cfg.output.csv = Some(p.clone());
        }
        if let Some(p) = &self.summary {
            cfg.output.summary = Some(p.clone());
        }
        cfg.check()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn emit_rows(rows: &[ResultRow], cfg: &ExperimentConfig) -> Result<()> {
    match &cfg.output.csv {
        Some(path) => harness::output::write_rows_to(rows, path),
        None => harness::output::write_rows(rows, std::io::stdout().lock()),
    }
}

fn finish(cfg: &ExperimentConfig, rows: &[ResultRow], tests: Vec<TestOutcome>, details: serde_json::Value) -> Result<bool> {
    emit_rows(rows, cfg)?;
    let summary = Summary::new(&cfg.id, cfg.master_seed, cfg.alpha, tests, details);
    for t in &summary.tests {
        eprintln!("{} {}: {}", if t.pass { "PASS" } else { "FAIL" }, t.name, t.detail);
    }
    if let Some(path) = &cfg.output.summary {
        summary.write_to(path)?;
    }
    Ok(summary.pass)
}

fn row(cfg: &ExperimentConfig, t: f64, observable: &str, value: f64, se: f64, n: usize) -> ResultRow {
    ResultRow::new(&cfg.id, &cfg.model, cfg.rho, t, observable).value(value, se, n)
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Validate { model, range } => {
            let spec = model.spec()?;
            let report = rates::validate(&spec, range);
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(report.is_valid())
        }
        Command::Flux { model, rho_grid, out } => flux_table(&model, &rho_grid, out),
        Command::Stationarity {
            model,
            rho,
            l,
            window,
            tol,
            rational,
        } => stationarity(&model, rho, l, window, tol, rational),
        Command::Identities(run) => {
            let cfg = run.config("identities", "zrp", 1.0, &[20.0], 2000)?;
            let r = harness::identities(&cfg)?;
            let rows = vec![
                row(&cfg, r.t, "mean_q", r.mean_q.value, r.mean_q.std_error, r.mean_q.n),
                row(&cfg, r.t, "v_t", r.v * r.t, 0.0, r.mean_q.n),
                row(&cfg, r.t, "var_h0_direct", r.var_direct.value, r.var_direct.std_error, r.var_direct.n),
                row(&cfg, r.t, "var_h0_via_q", r.var_via_q.value, r.var_via_q.std_error, r.var_via_q.n),
            ];
            let tests = vec![
                TestOutcome::new(
                    "mean_q_equals_v_t",
                    r.drift_pass,
                    format!("|mean Q - V t| = {:.3} SE", r.drift_z),
                ),
                TestOutcome::new(
                    "height_variance_identity",
                    r.variance_pass,
                    format!(
                        "direct {:.4} vs via Q {:.4}, gap {:.2}%, 95% CIs overlap: {}",
                        r.var_direct.value,
                        r.var_via_q.value,
                        100.0 * r.relative_gap,
                        r.intervals_overlap
                    ),
                ),
            ];
            finish(&cfg, &rows, tests, serde_json::to_value(r)?)
        }
        Command::Scaling {
            run,
            slope_min,
            slope_max,
            ratio_min,
            check_ring,
        } => {
            let cfg = run.config("scaling", "zrp", 1.0, &[64.0, 128.0, 256.0, 512.0, 1024.0], 2000)?;
            let samples = harness::sample_q(&cfg)?;
            let est = harness::estimate_q_moments(&samples, &cfg.moments);
            let mut rows: Vec<ResultRow> = est
                .iter()
                .map(|e| row(&cfg, e.t, &format!("abs_moment_{}", e.m), e.value, e.std_error, e.n))
                .collect();
            let mut tests = Vec::new();
            let mut details = serde_json::Map::new();
            if cfg.moments.contains(&1) {
                let first: Vec<_> = est.iter().filter(|e| e.m == 1 && e.t > 0.0).copied().collect();
                let fit = harness::fit_scaling(&first)?;
                tests.push(TestOutcome::new(
                    "first_moment_slope",
                    fit.slope >= slope_min && fit.slope <= slope_max,
                    format!(
                        "slope {:.4} (95% CI {:.4}..{:.4}) against [{slope_min}, {slope_max}]",
                        fit.slope, fit.slope_ci.0, fit.slope_ci.1
                    ),
                ));
                details.insert("fit".into(), serde_json::to_value(fit)?);
            }
            let ratios = harness::second_moment_ratios(&samples)?;
            for g in &ratios {
                rows.push(row(&cfg, g.t, "second_moment_ratio_4t", g.ratio.value, g.ratio.std_error, g.ratio.n));
                tests.push(TestOutcome::new(
                    format!("second_moment_growth_t{}", g.t),
                    g.ratio.value > ratio_min,
                    format!("ratio {:.3} ± {:.3} against > {ratio_min}", g.ratio.value, g.ratio.std_error),
                ));
            }
            details.insert("ratios".into(), serde_json::to_value(&ratios)?);
            if check_ring {
                let doubled = ring_doubling_check(&cfg, &samples)?;
                for d in &doubled {
                    rows.push(row(&cfg, d.t, &format!("abs_moment_{}_ring_2l", d.m), d.doubled.value, d.doubled.std_error, d.doubled.n));
                }
                let bad: Vec<&DoublingRow> = doubled.iter().filter(|d| !d.overlap).collect();
                tests.push(TestOutcome::new(
                    "ring_doubling",
                    bad.is_empty(),
                    format!("{} of {} estimates disagree between L={} and 2L", bad.len(), doubled.len(), samples.l),
                ));
            }
            finish(&cfg, &rows, tests, serde_json::Value::Object(details))
        }
        Command::Clt {
            run,
            v,
            variance_tol,
            ks_max,
        } => {
            let mut cfg = run.config("clt", "asep", 0.5, &[512.0], 2000)?;
            if let Some(v) = v {
                cfg.v_override = Some(v);
            }
            if cfg.v_override.is_none() {
                cfg.v_override = Some(0.5);
            }
            let r = harness::clt_check(&cfg)?;
            let mut rows = Vec::new();
            let mut tests = Vec::new();
            for c in &r.rows {
                let vr = c.stats.variance_ratio;
                rows.push(row(&cfg, c.t, "variance_ratio", vr.value, vr.std_error, vr.n));
                rows.push(row(&cfg, c.t, "ks_distance", c.stats.ks_distance, f64::NAN, vr.n));
            }
            if let Some(c) = r.rows.last() {
                let vr = c.stats.variance_ratio.value;
                tests.push(TestOutcome::new(
                    "variance_ratio",
                    (vr - 1.0).abs() <= variance_tol,
                    format!("Var h / (D t) = {vr:.4} with D = {:.4}, tolerance {variance_tol}", r.d),
                ));
                tests.push(TestOutcome::new(
                    "normal_shape",
                    c.stats.ks_distance < ks_max,
                    format!("KS distance {:.4} against < {ks_max}", c.stats.ks_distance),
                ));
            }
            finish(&cfg, &rows, tests, serde_json::to_value(&r)?)
        }
        Command::Lln(run) => {
            let cfg = run.config("lln", "zrp", 1.0, &[64.0, 128.0, 256.0, 512.0, 1024.0], 2000)?;
            let samples = harness::sample_q(&cfg)?;
            let r = harness::lln_check(&samples);
            let mut rows = Vec::new();
            for x in &r.rows {
                rows.push(row(&cfg, x.t, "mean_q_over_t", x.mean_speed.value, x.mean_speed.std_error, x.mean_speed.n));
                let d = x.mean_abs_deviation;
                rows.push(row(&cfg, x.t, "mean_abs_deviation", d.value, d.std_error, d.n));
            }
            let tests = vec![
                TestOutcome::new(
                    "final_mean_speed",
                    r.final_within_4se,
                    format!("|mean Q/t - V| = {:.3} SE at the last time", r.rows.last().map_or(f64::NAN, |x| x.z_score)),
                ),
                TestOutcome::new("deviation_decreasing", r.deviation_decreasing, "E|Q/t - V| along the grid"),
            ];
            finish(&cfg, &rows, tests, serde_json::to_value(&r)?)
        }
        Command::Microconcavity { run, lambda, ks_alpha } => {
            let mut cfg = run.config("microconcavity", "zrp", 1.0, &[2.0, 4.0, 6.0, 8.0, 10.0], 10_000)?;
            if lambda.is_some() || cfg.lambda.is_none() {
                cfg.lambda = Some(lambda.unwrap_or(0.75 * cfg.rho));
            }
            let r = harness::microconcavity_run(&cfg, ks_alpha)?;
            let rows = vec![
                row(&cfg, r.t, "failures", r.failures.len() as f64, 0.0, r.trajectories),
                row(&cfg, r.t, "ks_distance", r.ks_distance, f64::NAN, r.trajectories),
                row(&cfg, r.t, "ks_critical", r.ks_critical, f64::NAN, r.trajectories),
            ];
            let tests = vec![
                TestOutcome::new(
                    "walker_invariants",
                    r.invariants_hold(),
                    format!("{} failed trajectories, smallest middle probability {}", r.failures.len(), r.min_middle_prob),
                ),
                TestOutcome::new(
                    "geometric_domination",
                    r.domination.pass,
                    format!(
                        "worst slack y {:.4} at {}, -z {:.4} at {}",
                        r.domination.y.worst_slack,
                        r.domination.y.worst_level,
                        r.domination.neg_z.worst_slack,
                        r.domination.neg_z.worst_level
                    ),
                ),
                TestOutcome::new(
                    "marginal_law",
                    r.marginal_pass(),
                    format!("KS {:.4} against critical {:.4}", r.ks_distance, r.ks_critical),
                ),
            ];
            finish(&cfg, &rows, tests, serde_json::to_value(&r)?)
        }
        Command::DumpTrajectory { run, kind, lambda } => dump(&run, kind, lambda),
    }
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("bad grid '{text}': {e}")))?;
    let [a, b, h] = parts[..] else {
        return Err(Error::Config(format!("grid '{text}' must be start:end:step")));
    };
    if !(h > 0.0) || b < a {
        return Err(Error::Config(format!("grid '{text}' needs step > 0 and end >= start")));
    }
    let n = ((b - a) / h + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| a + k as f64 * h).collect())
}

fn flux_table(model: &ModelArgs, grid: &str, out: Option<PathBuf>) -> Result<bool> {
    let spec = model.spec()?;
    let mut text = String::from("rho,H,V,H2,H2_error\n");
    for rho in parse_grid(grid)? {
        let point = flux::flux_point(&spec, rho)?;
        let (h2, err) = flux::curvature(&spec, rho)?;
        text.push_str(&format!("{rho},{},{},{h2},{err}\n", point.flux, point.speed));
    }
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(true)
}

fn fraction(x: f64) -> (i64, i64) {
    let d = 1_000_000i64;
    ((x * d as f64).round() as i64, d)
}

fn stationarity(model: &ModelArgs, rho: f64, l: usize, window: i64, tol: f64, rational: bool) -> Result<bool> {
    let spec = model.spec()?;
    if rational {
        if model.model.as_deref() != Some("asep") {
            return Err(Error::Config("--rational is available for asep only".into()));
        }
        let r = asep_rational_residual(l, fraction(model.p.unwrap_or(1.0)), fraction(rho))?;
        println!("{}", json!({"model": spec.name, "l": l, "rho": rho, "exact_residual": r.to_string()}));
        return Ok(r.to_string() == "0");
    }
    let mu = stationary(&spec, rho)?;
    let chain = ExactChain::build(&spec, l, (-window, window), None)?;
    let r = stationarity_residual(&chain, &mu);
    println!(
        "{}",
        json!({"model": spec.name, "l": l, "rho": rho, "states": chain.len(),
               "residual": r.residual, "truncation_bound": r.truncation_bound, "tol": tol})
    );
    Ok(r.residual <= tol + r.truncation_bound)
}

fn dump(run: &RunArgs, kind: DumpKind, lambda: Option<f64>) -> Result<bool> {
    let mut cfg = run.config("dump", "zrp", 1.0, &[10.0], 2)?;
    let spec = cfg.spec()?;
    let t = cfg.t_max();
    let out: Box<dyn Write> = match &cfg.output.csv {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    match kind {
        DumpKind::Ring => {
            let dynamics = cfg.dynamics(&spec, 0)?;
            let l = cfg.ring_size(&dynamics)?;
            let mu = measures::stationary(&spec, cfg.rho)?;
            let mut ring = RingState::from_measure(&mu, l, replicate_rng(cfg.master_seed, 0))?;
            let mut log = EventLog::default();
            ring.run(&dynamics, t, &mut log)?;
            log.write_csv(out)?;
        }
        DumpKind::Pair => {
            let v = cfg.characteristic_speed(&spec)?;
            let dynamics = cfg.dynamics(&spec, cfg.max_index(v))?;
            let l = cfg.ring_size(&dynamics)?;
            let law = PairLaw::new(&spec, cfg.rho)?;
            let mut pair = DiscrepancyPair::new(&law, l, replicate_rng(cfg.master_seed, 0))?;
            let mut log = CoupledLog::default();
            pair.state.run(&dynamics, t, &mut log)?;
            log.write_csv(out)?;
        }
        DumpKind::Walkers => {
            if lambda.is_some() || cfg.lambda.is_none() {
                cfg.lambda = Some(lambda.unwrap_or(0.75 * cfg.rho));
            }
            let lambda = cfg.lambda.unwrap_or_default();
            deposition::microconcavity::require_concave_tazrp(&spec, 40)?;
            let dynamics = cfg.dynamics(&spec, 0)?;
            let l = cfg.ring_size(&dynamics)?;
            let mut state = deposition::coupling::two_density_pair(
                &spec,
                &vec![lambda; l],
                &vec![cfg.rho; l],
                replicate_rng(cfg.master_seed, 0),
            )?;
            let mut walkers = LabelWalkers::new(&spec, &dynamics, auxiliary_rng(cfg.master_seed, 0)).recording();
            state.run(&dynamics, t, &mut walkers)?;
            walkers.write_csv(out)?;
        }
    }
    Ok(true)
}
