use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info};
use serde::{Deserialize, Serialize};

use pa_core::adversary::{attack_finite, AttackKind, AttackStrategy};
use pa_core::binning::asymptotic_key_rate;
use pa_core::finite::{
    ca_keygen, exact_leakage_audit, finite_key_rate, prover_respond, verify, ChallengeMessage, ChallengePolicy,
    KeyFile, ResponseMessage, SchemeError, Verifier, VerifierStateFile, WirePoint, DEFAULT_AUDIT_BUDGET,
};
use pa_core::info::JointSource;
use pa_core::sim::{
    run_experiment, sweep, write_jsonl, BinningConfig, EstimateReport, Experiment, FiniteConfig, Hypothesis,
    PointReport, Prover, Regime, SeedPath, SimError, SweepAxis, TrialRecord,
};
use pa_core::streams::{stream, Purpose};
use pa_core::{make_field, EvalPoint, FieldCtx};

const CACHE_FILE: &str = "challenge_cache.json";
const COLLECTOR_FILE: &str = "replay_collector.json";

/// Private authentication toolkit: key provisioning, protocol sessions,
/// simulations, exact audits and key-rate queries.
///
/// Exit codes: 0 success or ACCEPT, 1 REJECT, 2 usage or configuration error.
/// Log verbosity follows PA_LOG_LEVEL (error, warn, info, debug).
#[derive(Debug, Parser)]
#[command(name = "pa", version)]
struct Cli {
    /// Master seed for all randomness. When absent, one is drawn from the OS and printed to stderr.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for every file the command writes.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Rendering of printed reports and report files.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    Finite,
    Binning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
#[allow(clippy::enum_variant_names)]
enum FiniteAttackArg {
    FiniteUniformGuess,
    FiniteConstant,
    FiniteReplayCollector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum PolicyArg {
    Cached,
    UnsafeFresh,
}

#[derive(Debug, Args)]
struct FieldArgs {
    /// Field characteristic (a prime).
    #[arg(long)]
    q: u64,
    /// Extension degree L; the field has q^L elements.
    #[arg(long = "L", default_value_t = 1)]
    degree: u32,
    /// Number of users K.
    #[arg(long = "K")]
    k: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate verifier state and one key file per user, then print the finite key rate.
    Keygen(FieldArgs),
    /// Run one challenge, response and verification round over files.
    Session {
        /// Verifier state written by keygen.
        #[arg(long)]
        verifier_state: PathBuf,
        /// Key file of the responding user.
        #[arg(long, conflicts_with = "attack", required_unless_present = "attack")]
        key: Option<PathBuf>,
        /// Respond as an attacker instead of a user.
        #[arg(long, value_enum)]
        attack: Option<FiniteAttackArg>,
        /// Packed field element answered by finite_constant.
        #[arg(long, default_value_t = 0)]
        guess: u64,
        /// Challenge policy. cached reuses the first challenge for this verifier state.
        #[arg(long, value_enum, default_value_t = PolicyArg::Cached)]
        policy: PolicyArg,
        /// Session counter mixed into the seed, so a seeded sequence of sessions differs per session.
        #[arg(long, default_value_t = 0)]
        session_index: u64,
        /// Transcript file that receives one JSON line per session.
        #[arg(long, default_value = "transcript.jsonl")]
        transcript: PathBuf,
    },
    /// Estimate completeness error, soundness error and privacy violation by simulation.
    Simulate {
        /// Scheme to simulate.
        #[arg(long, value_enum)]
        regime: RegimeArg,
        /// JSON experiment configuration; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trials per estimate; overrides the configuration.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Exhaustive leakage audit of the finite scheme on a small field.
    Audit {
        #[command(flatten)]
        field: FieldArgs,
        /// Maximum number of enumerated configurations.
        #[arg(long, default_value_t = DEFAULT_AUDIT_BUDGET)]
        budget: u128,
    },
    /// Report key rates for either scheme.
    Rates {
        /// Scheme whose rate to report.
        #[arg(long, value_enum)]
        regime: RegimeArg,
        /// Field characteristic (finite regime).
        #[arg(long, required_if_eq("regime", "finite"))]
        q: Option<u64>,
        /// Extension degree (finite regime).
        #[arg(long = "L", default_value_t = 1)]
        degree: u32,
        /// Number of users K.
        #[arg(long = "K")]
        k: usize,
        /// Source configuration (binning regime): an experiment config or a bare joint source.
        #[arg(long, required_if_eq("regime", "binning"))]
        config: Option<PathBuf>,
    },
    /// Run one experiment point per value along an axis and write sweep.csv and sweep.json.
    Sweep {
        /// Scheme to sweep.
        #[arg(long, value_enum)]
        regime: RegimeArg,
        /// Swept parameter: n, qL, K or xi.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated, strictly monotone values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// JSON experiment configuration used as the template.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trials per estimate at each point.
        #[arg(long, default_value_t = 1000)]
        trials: u64,
    },
}

/// Error that maps to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PA_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn seed(cli: &Cli) -> u64 {
    cli.seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn run(cli: &Cli) -> Result<ExitCode> {
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    match &cli.command {
        Command::Keygen(f) => keygen(cli, f),
        Command::Session { verifier_state, key, attack, guess, policy, session_index, transcript } => {
            session(cli, verifier_state, key.as_deref(), *attack, *guess, *policy, *session_index, transcript)
        }
        Command::Simulate { regime, config, trials } => simulate(cli, *regime, config.as_deref(), *trials),
        Command::Audit { field, budget } => audit(cli, field, *budget),
        Command::Rates { regime, q, degree, k, config } => rates(cli, *regime, *q, *degree, *k, config.as_deref()),
        Command::Sweep { regime, axis, values, config, trials } => {
            sweep_cmd(cli, *regime, *axis, values, config.as_deref(), *trials)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Renders `(name, value)` pairs as a two-line CSV.
fn csv_line(pairs: &[(&str, String)]) -> String {
    let header: Vec<&str> = pairs.iter().map(|p| p.0).collect();
    let row: Vec<&str> = pairs.iter().map(|p| p.1.as_str()).collect();
    format!("{}\n{}\n", header.join(","), row.join(","))
}

fn print_report<T: Serialize>(cli: &Cli, value: &T, csv: impl FnOnce() -> String) -> Result<()> {
    let text = match cli.format {
        Format::Json => serde_json::to_string_pretty(value)? + "\n",
        Format::Csv => csv(),
    };
    io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

fn keygen(cli: &Cli, f: &FieldArgs) -> Result<ExitCode> {
    let field = make_field(f.q, f.degree).map_err(|e| UsageError(e.to_string()))?;
    let seed = seed(cli);
    let mut rng = stream(seed, Purpose::Keygen, 0);
    let ca = match ca_keygen(&field, f.k, &mut rng) {
        Ok(ca) => ca,
        Err(e @ SchemeError::FieldTooSmall { .. }) => bail!(UsageError(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    write_json(&cli.out_dir.join("verifier_state.json"), &ca.verifier_file())?;
    for kf in ca.key_files() {
        write_json(&cli.out_dir.join(format!("key_{}.json", kf.k_index)), &kf)?;
    }
    for stale in [CACHE_FILE, COLLECTOR_FILE] {
        let p = cli.out_dir.join(stale);
        if p.exists() {
            fs::remove_file(&p)?;
        }
    }
    info!("wrote verifier state and {} keys to {}", f.k, cli.out_dir.display());
    let rate = finite_key_rate(f.q, f.degree, f.k as u64)?;
    print_report(cli, &rate, || {
        csv_line(&[
            ("rate", rate.rate.to_string()),
            ("upper_bound", rate.upper_bound.to_string()),
            ("gap", rate.gap.to_string()),
        ])
    })?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize, Deserialize)]
struct ChallengeCache {
    points: Vec<WirePoint>,
}

#[derive(Serialize, Deserialize)]
struct CollectorFile {
    points: Vec<WirePoint>,
}

fn usage<T, E: std::fmt::Display>(r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| UsageError(e.to_string()).into())
}

#[allow(clippy::too_many_arguments)]
fn session(
    cli: &Cli,
    state_path: &Path,
    key_path: Option<&Path>,
    attack: Option<FiniteAttackArg>,
    guess: u64,
    policy: PolicyArg,
    session_index: u64,
    transcript: &Path,
) -> Result<ExitCode> {
    let state: VerifierStateFile = usage(read_json(state_path))?;
    let (field, v) = usage(state.decode())?;
    let cache_path = state_path.with_file_name(CACHE_FILE);
    let verifier = match policy {
        PolicyArg::UnsafeFresh => Verifier::with_policy(&field, v, ChallengePolicy::UnsafeFresh)?,
        PolicyArg::Cached if cache_path.exists() => {
            let cache: ChallengeCache = usage(read_json(&cache_path))?;
            let points = usage(cache.points.iter().map(|p| p.decode(&field)).collect::<Result<Vec<EvalPoint>, _>>())?;
            usage(Verifier::with_cached_points(&field, v, points))?
        }
        PolicyArg::Cached => Verifier::new(&field, v)?,
    };

    let seed = seed(cli);
    let mut rng = stream(seed, Purpose::Session, session_index);
    let (s, challenge) = verifier.challenge(&mut rng);
    if policy == PolicyArg::Cached && !cache_path.exists() {
        let points = challenge.points.iter().map(|p| WirePoint::encode(&field, p)).collect();
        write_json(&cache_path, &ChallengeCache { points })?;
    }
    let message = ChallengeMessage::encode(&field, &challenge);
    write_json(&cli.out_dir.join("challenge.json"), &message)?;
    let received = message.decode(&field)?;

    let (hypothesis, prover, s_hat) = match (key_path, attack) {
        (Some(p), _) => {
            let kf: KeyFile = usage(read_json(p))?;
            let (key_field, key) = usage(kf.decode())?;
            if key_field != field {
                bail!(UsageError(format!("{} belongs to a different field", p.display())));
            }
            let s_hat = prover_respond(&field, &key, &received)?;
            (Hypothesis::Legitimate, Prover::User(key.index), s_hat)
        }
        (None, Some(a)) => {
            let (kind, s_hat) = respond_as_attacker(cli, &field, a, guess, &received, &mut rng)?;
            (Hypothesis::Attacker, Prover::Attacker(kind), s_hat)
        }
        (None, None) => bail!(UsageError("either --key or --attack is required".into())),
    };
    write_json(
        &cli.out_dir.join("response.json"),
        &ResponseMessage { session_id: received.session_id.clone(), s_hat: field.coeffs(s_hat) },
    )?;

    let decision = verify(s, s_hat);
    let record = TrialRecord {
        regime: Regime::Finite,
        hypothesis,
        prover,
        decision,
        s: s.s.value(),
        s_hat: s_hat.value(),
        diag: None,
        seed_path: SeedPath { master_seed: seed, stream: Purpose::Session, trial_index: session_index },
    };
    let tpath = cli.out_dir.join(transcript);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&tpath)
        .with_context(|| format!("opening {}", tpath.display()))?;
    write_jsonl(std::slice::from_ref(&record), file)?;
    debug!("session {} decided {:?}", received.session_id, decision);

    if decision.is_accept() {
        println!("ACCEPT");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("REJECT");
        Ok(ExitCode::from(1))
    }
}

fn respond_as_attacker(
    cli: &Cli,
    field: &FieldCtx,
    attack: FiniteAttackArg,
    guess: u64,
    challenge: &pa_core::finite::Challenge,
    rng: &mut impl rand::Rng,
) -> Result<(AttackKind, pa_core::FieldElem)> {
    let mut strategy = match attack {
        FiniteAttackArg::FiniteUniformGuess => AttackStrategy::FiniteUniformGuess,
        FiniteAttackArg::FiniteConstant => AttackStrategy::FiniteConstant { guess: usage(field.element(guess))? },
        FiniteAttackArg::FiniteReplayCollector => {
            let path = cli.out_dir.join(COLLECTOR_FILE);
            let mut points = BTreeMap::new();
            if path.exists() {
                let saved: CollectorFile = usage(read_json(&path))?;
                for p in &saved.points {
                    let p = usage(p.decode(field))?;
                    points.insert(p.x, p.y);
                }
            }
            AttackStrategy::FiniteReplayCollector { points }
        }
    };
    let s_hat = attack_finite(&mut strategy, challenge, field, rng)?;
    if let AttackStrategy::FiniteReplayCollector { points } = &strategy {
        let points = points.iter().map(|(&x, &y)| WirePoint::encode(field, &EvalPoint::new(x, y))).collect();
        write_json(&cli.out_dir.join(COLLECTOR_FILE), &CollectorFile { points })?;
    }
    Ok((strategy.kind(), s_hat))
}

/// Reads a config file, substituting `--seed` for `master_seed`. The seed is
/// drawn from the OS only when neither gives one.
fn load_config<T: for<'de> Deserialize<'de>>(cli: &Cli, path: Option<&Path>, trials: Option<u64>) -> Result<T> {
    let mut value = match path {
        Some(p) => usage(read_json::<serde_json::Value>(p))?,
        None => serde_json::json!({}),
    };
    let obj = value.as_object_mut().ok_or_else(|| UsageError("configuration must be a JSON object".into()))?;
    if cli.seed.is_some() || !obj.contains_key("master_seed") {
        obj.insert("master_seed".into(), seed(cli).into());
    }
    if let Some(t) = trials {
        obj.insert("trials".into(), t.into());
    }
    usage(serde_json::from_value(value))
}

fn experiment(cli: &Cli, regime: RegimeArg, config: Option<&Path>, trials: Option<u64>) -> Result<Experiment> {
    Ok(match regime {
        RegimeArg::Finite => Experiment::Finite(load_config::<FiniteConfig>(cli, config, trials)?),
        RegimeArg::Binning => Experiment::Binning(load_config::<BinningConfig>(cli, config, trials)?),
    })
}

fn sim_error(e: SimError) -> anyhow::Error {
    match e {
        SimError::Io(_) => e.into(),
        _ => UsageError(e.to_string()).into(),
    }
}

fn estimates_csv(points: &[PointReport]) -> String {
    let mut out = String::from("n,metric,point,ci_low,ci_high,events,trials,target\n");
    for p in points {
        let n = p.n.map(|n| n.to_string()).unwrap_or_default();
        for r in [Some(&p.completeness), Some(&p.soundness), p.privacy.as_ref()].into_iter().flatten() {
            let EstimateReport { metric, point, ci_low, ci_high, events, trials, target } = r;
            let metric = serde_json::to_value(metric).expect("metric serializes");
            let target = target.map(|t| t.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{n},{},{point},{ci_low},{ci_high},{events},{trials},{target}\n",
                metric.as_str().unwrap_or_default()
            ));
        }
    }
    out
}

fn simulate(cli: &Cli, regime: RegimeArg, config: Option<&Path>, trials: Option<u64>) -> Result<ExitCode> {
    let exp = experiment(cli, regime, config, trials)?;
    info!("simulating {} trials per estimate, master seed {}", exp.trials(), exp.master_seed());
    let out = run_experiment(&exp).map_err(sim_error)?;
    let tpath = cli.out_dir.join("transcript.jsonl");
    out.write_transcript(io::BufWriter::new(fs::File::create(&tpath)?))?;
    let report = serde_json::json!({ "master_seed": exp.master_seed(), "points": out.points });
    match cli.format {
        Format::Json => write_json(&cli.out_dir.join("report.json"), &report)?,
        Format::Csv => fs::write(cli.out_dir.join("report.csv"), estimates_csv(&out.points))?,
    }
    print_report(cli, &report, || estimates_csv(&out.points))?;
    Ok(ExitCode::SUCCESS)
}

fn audit(cli: &Cli, f: &FieldArgs, budget: u128) -> Result<ExitCode> {
    let report = usage(exact_leakage_audit(f.q, f.degree, f.k, budget))?;
    print_report(cli, &report, || {
        let value = serde_json::to_value(&report).expect("report serializes");
        let mut out = String::from("key,value\n");
        flatten_csv("", &value, &mut out);
        out
    })?;
    Ok(ExitCode::SUCCESS)
}

fn flatten_csv(prefix: &str, v: &serde_json::Value, out: &mut String) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_csv(&key, v, out);
            }
        }
        serde_json::Value::Null => out.push_str(&format!("{prefix},\n")),
        other => out.push_str(&format!("{prefix},{other}\n")),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SourceFile {
    Config { joint: JointSource },
    Bare(JointSource),
}

fn rates(
    cli: &Cli,
    regime: RegimeArg,
    q: Option<u64>,
    degree: u32,
    k: usize,
    config: Option<&Path>,
) -> Result<ExitCode> {
    let (achieved, capacity, gap) = match regime {
        RegimeArg::Finite => {
            let q = q.ok_or_else(|| UsageError("--q is required for the finite regime".into()))?;
            let r = usage(finite_key_rate(q, degree, k as u64))?;
            (r.rate, r.upper_bound, r.gap)
        }
        RegimeArg::Binning => {
            let path = config.ok_or_else(|| UsageError("--config is required for the binning regime".into()))?;
            let joint = match usage(read_json::<SourceFile>(path))? {
                SourceFile::Config { joint } | SourceFile::Bare(joint) => joint,
            };
            let r = asymptotic_key_rate(&joint, k);
            (r.achieved, r.capacity, r.gap)
        }
    };
    let regime_name = match regime {
        RegimeArg::Finite => "finite",
        RegimeArg::Binning => "binning",
    };
    let report =
        serde_json::json!({ "regime": regime_name, "K": k, "achieved": achieved, "capacity": capacity, "gap": gap });
    print_report(cli, &report, || {
        csv_line(&[
            ("regime", regime_name.to_string()),
            ("K", k.to_string()),
            ("achieved", achieved.to_string()),
            ("capacity", capacity.to_string()),
            ("gap", gap.to_string()),
        ])
    })?;
    Ok(ExitCode::SUCCESS)
}

fn sweep_cmd(
    cli: &Cli,
    regime: RegimeArg,
    axis: SweepAxis,
    values: &[f64],
    config: Option<&Path>,
    trials: u64,
) -> Result<ExitCode> {
    let template = experiment(cli, regime, config, Some(trials))?;
    let report = sweep(&template, axis, values, trials, template.master_seed()).map_err(sim_error)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    fs::write(cli.out_dir.join("sweep.csv"), &csv)?;
    write_json(&cli.out_dir.join("sweep.json"), &report.to_json())?;
    write_jsonl(&report.transcript, io::BufWriter::new(fs::File::create(cli.out_dir.join("transcript.jsonl"))?))?;
    print_report(cli, &report.to_json(), || String::from_utf8_lossy(&csv).into_owned())?;
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    fn undocumented(cmd: &clap::Command, path: &str, out: &mut Vec<String>) {
        for arg in cmd.get_arguments() {
            let id = arg.get_id().as_str();
            if id == "help" || id == "version" {
                continue;
            }
            if arg.get_help().is_none_or(|h| h.to_string().trim().is_empty()) {
                out.push(format!("{path} --{id}"));
            }
        }
        for sub in cmd.get_subcommands() {
            if sub.get_about().is_none() {
                out.push(format!("{path} {}", sub.get_name()));
            }
            undocumented(sub, &format!("{path} {}", sub.get_name()), out);
        }
    }

    #[test]
    fn every_flag_has_help() {
        let cmd = Cli::command();
        cmd.clone().debug_assert();
        let mut missing = Vec::new();
        undocumented(&cmd, "pa", &mut missing);
        assert!(missing.is_empty(), "{missing:?}");
    }

    #[test]
    fn csv_line_layout() {
        assert_eq!(csv_line(&[("a", "1".into()), ("b", "x".into())]), "a,b\n1,x\n");
    }
}
