//! Command-line front end and report writer.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::auction::{bvs_public_mc, kvs_public_revenue, kvs_public_welfare};
use crate::bvs_pool::{check_lemma6, TailPooling};
use crate::error::{param, Error, Result};
use crate::model::{self, BvsInstance, Instance, KvsInstance, ValueDistribution};
use crate::oracle;
use crate::private::{run_private_scheme, PrivateMode};
use crate::public_exact::solve_optimal_public;
use crate::public_mc::{evaluate_mc_scheme, mc_signal, McConfig};
use crate::rng::derive;
use crate::scheme::PublicScheme;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Caps the worker threads used by the parallel estimators.
pub const THREADS_ENV: &str = "SIGNALCRAFT_THREADS";

/// One experiment: command, inputs and the numbers it produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub command: String,
    /// SHA-256 of the canonical JSON of the input.
    pub instance_hash: String,
    pub seed: u64,
    pub parameters: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, f64>,
    /// Seconds; kept out of the CSV so replays compare byte-for-byte.
    pub wall_time: f64,
}

impl ExperimentRecord {
    fn new(command: &str, instance_hash: &str, seed: u64) -> Self {
        ExperimentRecord {
            command: command.to_string(),
            instance_hash: instance_hash.to_string(),
            seed,
            parameters: BTreeMap::new(),
            metrics: BTreeMap::new(),
            wall_time: 0.0,
        }
    }

    fn param(mut self, k: &str, v: impl ToString) -> Self {
        self.parameters.insert(k.to_string(), v.to_string());
        self
    }

    fn metric(mut self, k: &str, v: f64) -> Self {
        self.metrics.insert(k.to_string(), v);
        self
    }
}

/// Formats with 12 significant digits, trimming trailing zeros.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..12).contains(&e) {
        let s = format!("{:.*}", (11 - e).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.11e}")
    }
}

fn json_sibling(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` as CSV and a sibling `.json` with the full records.
/// Columns: command, instance_hash, seed, then the sorted union of
/// parameter names, then the sorted union of metric names.
pub fn emit_report(records: &[ExperimentRecord], path: &Path) -> Result<(PathBuf, PathBuf)> {
    if records.is_empty() {
        return Err(param("a report needs at least one record"));
    }
    let params: BTreeSet<&String> = records.iter().flat_map(|r| r.parameters.keys()).collect();
    let metrics: BTreeSet<&String> = records.iter().flat_map(|r| r.metrics.keys()).collect();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    let mut header = vec!["command".to_string(), "instance_hash".into(), "seed".into()];
    header.extend(params.iter().map(|s| s.to_string()));
    header.extend(metrics.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    for r in records {
        let mut row = vec![r.command.clone(), r.instance_hash.clone(), r.seed.to_string()];
        row.extend(params.iter().map(|k| r.parameters.get(*k).cloned().unwrap_or_default()));
        row.extend(metrics.iter().map(|k| r.metrics.get(*k).map(|&x| format_float(x)).unwrap_or_default()));
        w.write_record(&row).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    let json = json_sibling(path);
    fs::write(&json, serde_json::to_string_pretty(records)?)?;
    Ok((path.to_path_buf(), json))
}

pub fn hash_str(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

fn instance_hash(inst: &Instance) -> Result<String> {
    Ok(hash_str(&serde_json::to_string(inst)?))
}

#[derive(Parser, Debug)]
#[command(name = "signalcraft", version, about = "Signaling schemes for second-price auctions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Seed for every random draw of the command.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV report path; a .json with the same stem is written next to it.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal public scheme of a known-valuation instance.
    SolvePublicExact {
        #[arg(long)]
        instance: PathBuf,
        /// Where to write the scheme table as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// One signal of the sampled public scheme for a realized state.
    SignPublicMc {
        #[arg(long)]
        instance: PathBuf,
        /// Realized state id.
        #[arg(long)]
        state: String,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Sample count; defaults to the guarantee-bearing formula.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Revenue of the sampled public scheme.
    EvalPublicMc {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Tail pooling for a Bayesian-valuation instance.
    BvsPool {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Where to write the pooling scheme as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Per-branch revenue/welfare ratios of tail pooling.
    BvsCheckLemma6 {
        /// High distribution, e.g. uniform:0,1.
        #[arg(long)]
        high: ValueDistribution,
        /// Low distribution, e.g. point:0.
        #[arg(long)]
        low: ValueDistribution,
        #[arg(long)]
        n: usize,
        /// Comma-separated targeted counts.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        weights: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Private scheme with worst-equilibrium revenue.
    PrivateScheme {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// auto, lattice or support-pairing.
        #[arg(long, default_value = "auto")]
        mode: String,
        /// Where to write the plan as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Brute-force reference computations.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// Writes a generated instance as JSON.
    GenInstance {
        /// example1, example2, example3, theorem2, random-kvs or lattice.
        kind: String,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// State count for random-kvs.
        #[arg(long, default_value_t = 6)]
        states: usize,
        /// Per-bidder support for lattice, e.g. 0,0.5,1.
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
        support: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Revenue of several schemes on one instance, best first.
    Compare {
        #[arg(long)]
        instance: PathBuf,
        /// Known valuations: full, none, optimal, private, mc.
        /// Bayesian valuations: full, none, pooling.
        #[arg(long, value_delimiter = ',', default_value = "full,none,optimal,private")]
        schemes: Vec<String>,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// CSV output path; a .json with the same stem is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand, Debug)]
enum OracleCommand {
    /// Best welfare over deterministic schemes with few signals.
    PartitionWelfare {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 2)]
        max_signals: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Optimal public revenue from the independent LP.
    PublicOptimal {
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Full-information revenue on the separation instance.
    Theorem2 {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[command(flatten)]
        common: Common,
    },
    /// E[X | X >= k] for X ~ Binomial(m, p).
    Binomial {
        #[arg(long)]
        m: u64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        k: u64,
        #[command(flatten)]
        common: Common,
    },
}

fn read_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path)?;
    let inst = Instance::from_json(&text)?;
    inst.validate().into_result()?;
    Ok(inst)
}

fn read_kvs(path: &Path) -> Result<(KvsInstance, String)> {
    let inst = read_instance(path)?;
    let h = instance_hash(&inst)?;
    match inst {
        Instance::Kvs(k) => Ok((k, h)),
        Instance::Bvs(_) => Err(Error::Instance("expected a known-valuation (kvs) instance".into())),
    }
}

fn read_bvs(path: &Path) -> Result<(BvsInstance, String)> {
    let inst = read_instance(path)?;
    let h = instance_hash(&inst)?;
    match inst {
        Instance::Bvs(b) => Ok((b, h)),
        Instance::Kvs(_) => Err(Error::Instance("expected a Bayesian-valuation (bvs) instance".into())),
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn finish(mut records: Vec<ExperimentRecord>, started: Instant, report: Option<&Path>) -> Result<()> {
    let secs = started.elapsed().as_secs_f64();
    for r in &mut records {
        r.wall_time = secs;
        let fields: Vec<String> = r
            .parameters
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .chain(r.metrics.iter().map(|(k, v)| format!("{k}={}", format_float(*v))))
            .collect();
        println!("{} {}", r.command, fields.join(" "));
    }
    if let Some(p) = report {
        emit_report(&records, p)?;
    }
    Ok(())
}

fn parse_mode(s: &str) -> Result<PrivateMode> {
    match s {
        "auto" => Ok(PrivateMode::Auto),
        "lattice" => Ok(PrivateMode::Lattice),
        "support-pairing" => Ok(PrivateMode::SupportPairing),
        other => Err(param(format!("unknown mode {other:?}; expected auto, lattice or support-pairing"))),
    }
}

fn mc_config(n: usize, epsilon: f64, samples: Option<usize>, seed: u64) -> Result<McConfig> {
    let c = McConfig::new(n, epsilon, seed)?;
    match samples {
        Some(k) => c.with_k(k),
        None => Ok(c),
    }
}

fn generate(kind: &str, epsilon: f64, n: usize, states: usize, support: &[f64], seed: u64) -> Result<Instance> {
    let mut rng = derive(seed, 0);
    Ok(match kind {
        "example1" => Instance::Kvs(model::make_example1()),
        "example2" => Instance::Bvs(model::make_example2(n)?),
        "example3" => Instance::Kvs(model::make_example3(epsilon)?),
        "theorem2" => Instance::Bvs(model::make_theorem2_instance(n, epsilon)?),
        "random-kvs" => {
            if n == 0 || states == 0 {
                return Err(param("random-kvs needs n >= 1 and states >= 1"));
            }
            Instance::Kvs(model::random_kvs(n, states, &mut rng))
        }
        "lattice" => {
            if n == 0 || support.is_empty() {
                return Err(param("lattice needs n >= 1 and a nonempty support"));
            }
            Instance::Kvs(model::random_lattice(&vec![support.to_vec(); n], &mut rng))
        }
        other => return Err(param(format!("unknown instance kind {other:?}"))),
    })
}

struct Row {
    scheme: String,
    revenue: f64,
    std_error: f64,
    welfare: Option<f64>,
}

fn compare_rows(
    inst: &Instance,
    schemes: &[String],
    epsilon: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for (idx, name) in schemes.iter().enumerate() {
        let name = name.trim();
        let row = match inst {
            Instance::Kvs(k) => {
                let exact = |s: PublicScheme| -> Result<Row> {
                    Ok(Row {
                        scheme: name.to_string(),
                        revenue: kvs_public_revenue(k, &s)?,
                        std_error: 0.0,
                        welfare: Some(kvs_public_welfare(k, &s)?),
                    })
                };
                match name {
                    "full" => exact(PublicScheme::FullInformation)?,
                    "none" => exact(PublicScheme::NoInformation)?,
                    "optimal" => {
                        let (scheme, _) = solve_optimal_public(k)?;
                        exact(PublicScheme::Explicit(scheme))?
                    }
                    "private" => {
                        let r = run_private_scheme(k, epsilon, delta, seed, trials, PrivateMode::Auto)?;
                        Row { scheme: name.into(), revenue: r.plan.aggregate, std_error: 0.0, welfare: None }
                    }
                    "mc" => {
                        let e = evaluate_mc_scheme(k, &McConfig::new(k.n, epsilon, seed)?, trials)?;
                        Row { scheme: name.into(), revenue: e.revenue.mean, std_error: e.revenue.std_error, welfare: None }
                    }
                    other => return Err(param(format!("unknown scheme {other:?} for a kvs instance"))),
                }
            }
            Instance::Bvs(b) => {
                let scheme = match name {
                    "full" => PublicScheme::FullInformation,
                    "none" => PublicScheme::NoInformation,
                    "pooling" => PublicScheme::TailPooling(TailPooling::for_instance(b)),
                    other => return Err(param(format!("unknown scheme {other:?} for a bvs instance"))),
                };
                let (rev, wel) = bvs_public_mc(b, &scheme, trials, seed.wrapping_add(idx as u64))?;
                Row { scheme: name.into(), revenue: rev.mean, std_error: rev.std_error, welfare: Some(wel.mean) }
            }
        };
        rows.push(row);
    }
    // Stable: equal revenues keep the requested order.
    rows.sort_by(|a, b| b.revenue.total_cmp(&a.revenue));
    Ok(rows)
}

fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    match cli.command {
        Command::SolvePublicExact { instance, out, common } => {
            let (k, h) = read_kvs(&instance)?;
            let (scheme, revenue) = solve_optimal_public(&k)?;
            if let Some(p) = &out {
                fs::write(p, scheme.to_json()? + "\n")?;
            }
            let rec = ExperimentRecord::new("solve-public-exact", &h, common.seed)
                .metric("revenue", revenue)
                .metric("signals", scheme.signals.len() as f64);
            finish(vec![rec], started, common.report.as_deref())
        }
        Command::SignPublicMc { instance, state, epsilon, samples, out, common } => {
            let (k, h) = read_kvs(&instance)?;
            let theta = k.state_index(&state).ok_or_else(|| param(format!("no state with id {state:?}")))?;
            let config = mc_config(k.n, epsilon, samples, common.seed)?;
            let unit = k.normalized();
            let s = mc_signal(theta, &unit.sampler(), &config, &mut derive(common.seed, 0))?;
            #[derive(Serialize)]
            struct Out<'a> {
                state: &'a str,
                signal: String,
                slot: usize,
                samples: usize,
                lp_objective: f64,
            }
            write_json(
                &Out { state: &state, signal: s.signal.to_string(), slot: s.draw.slot, samples: config.k, lp_objective: s.lp_objective * k.scale },
                out.as_deref(),
            )?;
            let rec = ExperimentRecord::new("sign-public-mc", &h, common.seed)
                .param("state", &state)
                .param("signal", s.signal)
                .param("epsilon", epsilon)
                .metric("samples", config.k as f64)
                .metric("lp_objective", s.lp_objective * k.scale);
            finish(vec![rec], started, common.report.as_deref())
        }
        Command::EvalPublicMc { instance, epsilon, samples, trials, common } => {
            let (k, h) = read_kvs(&instance)?;
            let config = mc_config(k.n, epsilon, samples, common.seed)?;
            let e = evaluate_mc_scheme(&k, &config, trials)?;
            let rec = ExperimentRecord::new("eval-public-mc", &h, common.seed)
                .param("epsilon", epsilon)
                .param("trials", trials)
                .metric("samples", e.k as f64)
                .metric("revenue", e.revenue.mean)
                .metric("std_error", e.revenue.std_error)
                .metric("mean_lp_objective", e.mean_lp_objective);
            finish(vec![rec], started, common.report.as_deref())
        }
        Command::BvsPool { instance, trials, out, common } => {
            let (b, h) = read_bvs(&instance)?;
            let pooling = TailPooling::for_instance(&b);
            if let Some(p) = &out {
                write_json(&pooling, Some(p))?;
            }
            let (rev, wel) = bvs_public_mc(&b, &PublicScheme::TailPooling(pooling.clone()), trials, common.seed)?;
            let (frev, fwel) = bvs_public_mc(&b, &PublicScheme::FullInformation, trials, common.seed)?;
            let rec = ExperimentRecord::new("bvs-pool", &h, common.seed)
                .param("trials", trials)
                .param("guarantee_void", pooling.guarantee_void)
                .metric("revenue", rev.mean)
                .metric("revenue_se", rev.std_error)
                .metric("welfare", wel.mean)
                .metric("full_info_revenue", frev.mean)
                .metric("full_info_welfare", fwel.mean);
            finish(vec![rec], started, common.report.as_deref())
        }
        Command::BvsCheckLemma6 { high, low, n, weights, trials, common } => {
            let h = hash_str(&format!("{high}|{low}|{n}"));
            let mut records = Vec::new();
            for w in weights {
                let r = check_lemma6(&high, &low, n, w, trials, common.seed)?;
                let mut rec = ExperimentRecord::new("bvs-check-lemma6", &h, common.seed)
                    .param("high", high)
                    .param("low", low)
                    .param("n", n)
                    .param("weight", w)
                    .param("passes", r.passes)
                    .param("guarantee_applies", r.guarantee_applies)
                    .metric("revenue", r.revenue.mean)
                    .metric("welfare", r.welfare.mean)
                    .metric("bound", r.bound)
                    .metric("refined_bound", r.refined_bound);
                if let Some(q) = r.ratio {
                    rec = rec.metric("ratio", q.mean).metric("ratio_se", q.std_error);
                }
                records.push(rec);
            }
            finish(records, started, common.report.as_deref())
        }
        Command::PrivateScheme { instance, epsilon, delta, trials, mode, out, common } => {
            let (k, h) = read_kvs(&instance)?;
            let r = run_private_scheme(&k, epsilon, delta, common.seed, trials, parse_mode(&mode)?)?;
            if let Some(p) = &out {
                write_json(&r.plan, Some(p))?;
            }
            for w in &r.plan.theorem5.warnings {
                eprintln!("warning: {w}");
            }
            let rec = ExperimentRecord::new("private-scheme", &h, common.seed)
                .param("epsilon", epsilon)
                .param("delta", delta)
                .param("trials", trials)
                .param("mode", format!("{:?}", r.plan.mode).to_lowercase())
                .metric("revenue", r.plan.aggregate)
                .metric("simulated_revenue", r.simulated.mean)
                .metric("simulated_se", r.simulated.std_error)
                .metric("bound", r.plan.theorem5.bound)
                .metric("delta_used", r.plan.delta_used);
            finish(vec![rec], started, common.report.as_deref())
        }
        Command::Oracle { which } => match which {
            OracleCommand::PartitionWelfare { instance, max_signals, common } => {
                let (b, h) = read_bvs(&instance)?;
                let (p, welfare) = oracle::best_partition_welfare(&b, max_signals)?;
                let rec = ExperimentRecord::new("oracle partition-welfare", &h, common.seed)
                    .param("max_signals", max_signals)
                    .metric("welfare", welfare)
                    .metric("blocks", p.blocks.len() as f64);
                finish(vec![rec], started, common.report.as_deref())
            }
            OracleCommand::PublicOptimal { instance, common } => {
                let (k, h) = read_kvs(&instance)?;
                let (_, revenue) = oracle::brute_force_public_optimal(&k)?;
                let rec = ExperimentRecord::new("oracle public-optimal", &h, common.seed).metric("revenue", revenue);
                finish(vec![rec], started, common.report.as_deref())
            }
            OracleCommand::Theorem2 { n, epsilon, common } => {
                let r = oracle::theorem2_fullinfo_revenue(n, epsilon)?;
                let rec = ExperimentRecord::new("oracle theorem2", &hash_str(&format!("{n}|{epsilon}")), common.seed)
                    .param("n", n)
                    .param("epsilon", epsilon)
                    .metric("exact", r.exact)
                    .metric("lower_bound", r.lower_bound);
                finish(vec![rec], started, common.report.as_deref())
            }
            OracleCommand::Binomial { m, p, k, common } => {
                let v = oracle::binomial_cond_expectation(m, p, k)?;
                let rec = ExperimentRecord::new("oracle binomial", &hash_str(&format!("{m}|{p}|{k}")), common.seed)
                    .param("m", m)
                    .param("p", p)
                    .param("k", k)
                    .metric("conditional_mean", v)
                    .metric("twice_mean", 2.0 * m as f64 * p);
                finish(vec![rec], started, common.report.as_deref())
            }
        },
        Command::GenInstance { kind, epsilon, n, states, support, seed, out } => {
            let inst = generate(&kind, epsilon, n, states, &support, seed)?;
            let text = inst.to_json()? + "\n";
            match out {
                Some(p) => fs::write(p, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Compare { instance, schemes, epsilon, delta, trials, out, seed } => {
            let inst = read_instance(&instance)?;
            let h = instance_hash(&inst)?;
            let rows = compare_rows(&inst, &schemes, epsilon, delta, trials, seed)?;
            let records: Vec<ExperimentRecord> = rows
                .into_iter()
                .map(|r| {
                    let mut rec = ExperimentRecord::new("compare", &h, seed)
                        .param("scheme", r.scheme)
                        .metric("revenue", r.revenue)
                        .metric("std_error", r.std_error);
                    if let Some(w) = r.welfare {
                        rec = rec.metric("welfare", w);
                    }
                    rec
                })
                .collect();
            finish(records, started, out.as_deref())
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parameter(_) | Error::Instance(_) | Error::Scheme(_) | Error::Json(_) | Error::Io(_) => EXIT_VALIDATION,
        Error::Infeasible(_) | Error::Lp(_) | Error::Unsupported(_) | Error::TooLarge(_) => EXIT_SOLVER,
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.parse().ok().filter(|&n| n > 0)
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match thread_cap() {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(param(format!("cannot build a {n}-thread pool: {e}"))),
        },
        None => run(cli),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
