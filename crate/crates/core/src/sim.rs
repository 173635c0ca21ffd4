//! Seeded Monte Carlo estimation of completeness, soundness and privacy.
//!
//! Trial `i` of every estimator draws all its randomness from
//! `stream(master_seed, purpose, i)`, and results are collected in trial
//! order, so transcripts do not depend on the number of worker threads.

use std::io::Write;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{attack_binning, attack_finite, train_empirical_map, AttackError, AttackKind, AttackStrategy};
use crate::binning::{
    asymptotic_key_rate, ca_generate, make_codebook, BinningError, BinningParams, Codebook, DecodeDiag, Decoder,
    EncodeDiag, Encoder, DEFAULT_CAP_BITS,
};
use crate::field::{is_prime, make_field, FieldCtx, FieldError};
use crate::finite::{
    ca_keygen, finite_key_rate, prover_respond, verify, ChallengePolicy, Decision, SchemeError, Verifier,
};
use crate::info::{plugin_mi_from_table, JointSource, RateSlack, TypicalityParams};
use crate::streams::{stream, Purpose};

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959963984540054;

const LEAKAGE_CHUNK: u64 = 1 << 16;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("strategy {kind} does not apply to the {regime} regime")]
    WrongRegime { kind: AttackKind, regime: &'static str },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Binning(#[from] BinningError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Finite,
    Binning,
}

impl Regime {
    fn name(self) -> &'static str {
        match self {
            Regime::Finite => "finite",
            Regime::Binning => "binning",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Legitimate user.
    #[serde(rename = "H0")]
    Legitimate,
    /// Attacker.
    #[serde(rename = "H1")]
    Attacker,
}

/// A 1-based user index or an attacker tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prover {
    User(usize),
    Attacker(AttackKind),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPath {
    pub master_seed: u64,
    pub stream: Purpose,
    pub trial_index: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinDiag {
    pub n: usize,
    pub encode: EncodeDiag,
    pub decode: Option<DecodeDiag>,
}

/// One line of the transcript. Field order is the serialization order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub regime: Regime,
    pub hypothesis: Hypothesis,
    pub prover: Prover,
    pub decision: Decision,
    pub s: u64,
    pub s_hat: u64,
    pub diag: Option<BinDiag>,
    pub seed_path: SeedPath,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CompletenessError,
    SoundnessError,
    PrivacyViolation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub metric: Metric,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub events: u64,
    pub trials: u64,
    /// Analytic reference value, when one exists.
    pub target: Option<f64>,
}

/// 95% Wilson score interval for `events` out of `trials`.
pub fn wilson(events: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    let p = events as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

impl EstimateReport {
    pub fn new(metric: Metric, events: u64, trials: u64, target: Option<f64>) -> EstimateReport {
        assert!(trials > 0);
        let (ci_low, ci_high) = wilson(events, trials);
        EstimateReport { metric, point: events as f64 / trials as f64, ci_low, ci_high, events, trials, target }
    }
}

/// Estimate together with the transcript that produced it.
#[derive(Clone, Debug)]
pub struct Estimation {
    pub report: EstimateReport,
    pub records: Vec<TrialRecord>,
}

#[derive(Clone, Debug)]
pub struct FiniteSetting {
    pub field: FieldCtx,
    pub k: usize,
}

#[derive(Debug)]
pub struct BinningSetting {
    pub params: BinningParams,
    pub k: usize,
    pub codebook: Codebook,
}

impl BinningSetting {
    pub fn new(params: BinningParams, k: usize, codebook_seed: u64, cap_bits: u32) -> Result<BinningSetting> {
        if k == 0 {
            return Err(SimError::ConfigInvalid("K must be at least 1".into()));
        }
        let codebook = make_codebook(&params, codebook_seed, cap_bits)?;
        Ok(BinningSetting { params, k, codebook })
    }
}

#[derive(Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Setting {
    Finite(FiniteSetting),
    Binning(BinningSetting),
}

impl Setting {
    pub fn regime(&self) -> Regime {
        match self {
            Setting::Finite(_) => Regime::Finite,
            Setting::Binning(_) => Regime::Binning,
        }
    }

    fn k(&self) -> usize {
        match self {
            Setting::Finite(f) => f.k,
            Setting::Binning(b) => b.k,
        }
    }
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(SimError::ConfigInvalid("trials must be at least 1".into()));
    }
    Ok(())
}

fn decision_of(s: u64, s_hat: u64) -> Decision {
    if s == s_hat {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

fn par_trials<T, F>(trials: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..trials).into_par_iter().map(f).collect()
}

fn seed_path(master_seed: u64, purpose: Purpose, i: u64) -> SeedPath {
    SeedPath { master_seed, stream: purpose, trial_index: i }
}

/// Honest sessions, prover index uniform over `1..=K`; reports the
/// rejection frequency.
pub fn estimate_completeness(setting: &Setting, trials: u64, master_seed: u64) -> Result<Estimation> {
    check_trials(trials)?;
    let purpose = Purpose::Completeness;
    let records: Vec<TrialRecord> = match setting {
        Setting::Finite(fs) => par_trials(trials, |i| {
            let mut rng = stream(master_seed, purpose, i);
            let ca = ca_keygen(&fs.field, fs.k, &mut rng)?;
            let (s, c) = Verifier::new(&fs.field, ca.v)?.challenge(&mut rng);
            let k = rng.gen_range(0..fs.k);
            let s_hat = prover_respond(&fs.field, &ca.keys[k], &c)?;
            Ok(TrialRecord {
                regime: Regime::Finite,
                hypothesis: Hypothesis::Legitimate,
                prover: Prover::User(k + 1),
                decision: verify(s, s_hat),
                s: s.s.value(),
                s_hat: s_hat.value(),
                diag: None,
                seed_path: seed_path(master_seed, purpose, i),
            })
        })?,
        Setting::Binning(bs) => {
            let enc = Encoder::new(&bs.codebook, &bs.params.typ);
            let dec = Decoder::new(&bs.codebook, &bs.params.typ);
            par_trials(trials, |i| {
                let mut rng = stream(master_seed, purpose, i);
                let real = ca_generate(&bs.params.joint, bs.params.n, bs.k, &mut rng);
                let (m, s, ed) = enc.encode(&real.x, &mut rng)?;
                let k = rng.gen_range(0..bs.k);
                let (s_hat, dd) = dec.decode(m, &real.ys[k], &mut rng)?;
                Ok(TrialRecord {
                    regime: Regime::Binning,
                    hypothesis: Hypothesis::Legitimate,
                    prover: Prover::User(k + 1),
                    decision: decision_of(s, s_hat),
                    s,
                    s_hat,
                    diag: Some(BinDiag { n: bs.params.n, encode: ed, decode: Some(dd) }),
                    seed_path: seed_path(master_seed, purpose, i),
                })
            })?
        }
    };
    let rejections = records.iter().filter(|r| r.decision == Decision::Reject).count() as u64;
    Ok(Estimation { report: EstimateReport::new(Metric::CompletenessError, rejections, trials, Some(0.0)), records })
}

/// Attacker sessions; reports the acceptance frequency. The finite regime
/// uses a fresh CA per trial, so a replay collector never sees two
/// challenges of the same polynomial here.
pub fn estimate_soundness(
    setting: &Setting,
    strategy: &AttackStrategy,
    trials: u64,
    master_seed: u64,
) -> Result<Estimation> {
    check_trials(trials)?;
    let kind = strategy.kind();
    let regime = setting.regime();
    if kind.is_finite() != (regime == Regime::Finite) {
        return Err(SimError::WrongRegime { kind, regime: regime.name() });
    }
    let purpose = Purpose::Soundness;
    let (records, target): (Vec<TrialRecord>, Option<f64>) = match setting {
        Setting::Finite(fs) => {
            let recs = par_trials(trials, |i| {
                let mut rng = stream(master_seed, purpose, i);
                let ca = ca_keygen(&fs.field, fs.k, &mut rng)?;
                let (s, c) = Verifier::new(&fs.field, ca.v)?.challenge(&mut rng);
                let mut strat = strategy.clone();
                let s_hat = attack_finite(&mut strat, &c, &fs.field, &mut rng)?;
                Ok(TrialRecord {
                    regime: Regime::Finite,
                    hypothesis: Hypothesis::Attacker,
                    prover: Prover::Attacker(kind),
                    decision: verify(s, s_hat),
                    s: s.s.value(),
                    s_hat: s_hat.value(),
                    diag: None,
                    seed_path: seed_path(master_seed, purpose, i),
                })
            })?;
            (recs, Some(1.0 / fs.field.order() as f64))
        }
        Setting::Binning(bs) => {
            let enc = Encoder::new(&bs.codebook, &bs.params.typ);
            let recs = par_trials(trials, |i| {
                let mut rng = stream(master_seed, purpose, i);
                let x = ca_generate(&bs.params.joint, bs.params.n, 0, &mut rng).x;
                let (m, s, ed) = enc.encode(&x, &mut rng)?;
                let s_hat = attack_binning(strategy, m, &bs.codebook, &mut rng)?;
                Ok(TrialRecord {
                    regime: Regime::Binning,
                    hypothesis: Hypothesis::Attacker,
                    prover: Prover::Attacker(kind),
                    decision: decision_of(s, s_hat),
                    s,
                    s_hat,
                    diag: Some(BinDiag { n: bs.params.n, encode: ed, decode: None }),
                    seed_path: seed_path(master_seed, purpose, i),
                })
            })?;
            let target = (kind == AttackKind::BinUniformGuess).then(|| 1.0 / bs.codebook.bin_size() as f64);
            (recs, target)
        }
    };
    let accepts = records.iter().filter(|r| r.decision == Decision::Accept).count() as u64;
    Ok(Estimation { report: EstimateReport::new(Metric::SoundnessError, accepts, trials, target), records })
}

/// All `K` provers answer the same challenge; a trial is a violation when
/// some `S_hat_k` differs from `S_hat_1`. Emits `K` records per trial.
pub fn estimate_privacy(setting: &Setting, trials: u64, master_seed: u64) -> Result<Estimation> {
    check_trials(trials)?;
    if setting.k() < 2 {
        return Err(SimError::ConfigInvalid("privacy needs at least two users".into()));
    }
    let purpose = Purpose::Privacy;
    let per_trial: Vec<Vec<TrialRecord>> = match setting {
        Setting::Finite(fs) => par_trials(trials, |i| {
            let mut rng = stream(master_seed, purpose, i);
            let ca = ca_keygen(&fs.field, fs.k, &mut rng)?;
            let (s, c) = Verifier::new(&fs.field, ca.v)?.challenge(&mut rng);
            ca.keys
                .iter()
                .map(|key| {
                    let s_hat = prover_respond(&fs.field, key, &c)?;
                    Ok(TrialRecord {
                        regime: Regime::Finite,
                        hypothesis: Hypothesis::Legitimate,
                        prover: Prover::User(key.index),
                        decision: verify(s, s_hat),
                        s: s.s.value(),
                        s_hat: s_hat.value(),
                        diag: None,
                        seed_path: seed_path(master_seed, purpose, i),
                    })
                })
                .collect()
        })?,
        Setting::Binning(bs) => {
            let enc = Encoder::new(&bs.codebook, &bs.params.typ);
            let dec = Decoder::new(&bs.codebook, &bs.params.typ);
            par_trials(trials, |i| {
                let mut rng = stream(master_seed, purpose, i);
                let real = ca_generate(&bs.params.joint, bs.params.n, bs.k, &mut rng);
                let (m, s, ed) = enc.encode(&real.x, &mut rng)?;
                real.ys
                    .iter()
                    .enumerate()
                    .map(|(k, y)| {
                        let (s_hat, dd) = dec.decode(m, y, &mut rng)?;
                        Ok(TrialRecord {
                            regime: Regime::Binning,
                            hypothesis: Hypothesis::Legitimate,
                            prover: Prover::User(k + 1),
                            decision: decision_of(s, s_hat),
                            s,
                            s_hat,
                            diag: Some(BinDiag { n: bs.params.n, encode: ed, decode: Some(dd) }),
                            seed_path: seed_path(master_seed, purpose, i),
                        })
                    })
                    .collect()
            })?
        }
    };
    let violations = per_trial.iter().filter(|t| t.iter().any(|r| r.s_hat != t[0].s_hat)).count() as u64;
    let records = per_trial.into_iter().flatten().collect();
    Ok(Estimation { report: EstimateReport::new(Metric::PrivacyViolation, violations, trials, Some(0.0)), records })
}

/// Replay-collection attack against one verifier over many sessions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub policy: ChallengePolicy,
    pub experiments: u64,
    pub sessions_per_experiment: u32,
    pub sessions: u64,
    pub successes: u64,
    pub success_rate: f64,
    /// Per experiment, the 1-based session of the first success.
    pub first_success: Vec<Option<u32>>,
    /// Experiments where every session from some point on up to
    /// `sessions_per_experiment` succeeded.
    pub settled: u64,
}

impl ReplayReport {
    /// Experiments whose first success came within `limit` sessions and
    /// which kept succeeding afterwards.
    pub fn settled_within(&self, limit: u32) -> u64 {
        self.first_success.iter().filter(|f| f.is_some_and(|f| f <= limit)).count() as u64
    }
}

/// Each experiment runs one CA, one verifier under `policy` and one replay
/// collector for `sessions` consecutive sessions.
pub fn replay_experiment(
    field: &FieldCtx,
    k: usize,
    policy: ChallengePolicy,
    experiments: u64,
    sessions: u32,
    master_seed: u64,
) -> Result<ReplayReport> {
    check_trials(experiments)?;
    if sessions == 0 {
        return Err(SimError::ConfigInvalid("sessions must be at least 1".into()));
    }
    let outcomes: Vec<Vec<bool>> = par_trials(experiments, |e| {
        let mut rng = stream(master_seed, Purpose::Replay, e);
        let ca = ca_keygen(field, k, &mut rng)?;
        let ver = Verifier::with_policy(field, ca.v.clone(), policy)?;
        let mut attacker = AttackStrategy::replay_collector();
        (0..sessions)
            .map(|_| {
                let (s, c) = ver.challenge(&mut rng);
                Ok(attack_finite(&mut attacker, &c, field, &mut rng)? == s.s)
            })
            .collect()
    })?;
    let successes = outcomes.iter().flatten().filter(|&&b| b).count() as u64;
    // A success counts as settled when all later sessions also succeed.
    let first_success: Vec<Option<u32>> = outcomes
        .iter()
        .map(|o| {
            let last_fail = o.iter().rposition(|&b| !b).map_or(0, |p| p + 1);
            (last_fail < o.len()).then_some(last_fail as u32 + 1)
        })
        .collect();
    let settled = first_success.iter().filter(|f| f.is_some()).count() as u64;
    let total = experiments * sessions as u64;
    Ok(ReplayReport {
        policy,
        experiments,
        sessions_per_experiment: sessions,
        sessions: total,
        successes,
        success_rate: successes as f64 / total as f64,
        first_success,
        settled,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub n: usize,
    pub samples: u64,
    pub cells: u64,
    pub mi_bits: f64,
    pub mi_per_symbol: f64,
}

/// Plug-in `I(S;M)` from `samples` verifier encodings of fresh sources.
pub fn estimate_leakage(bs: &BinningSetting, samples: u64, master_seed: u64) -> Result<LeakageReport> {
    check_trials(samples)?;
    let cb = &bs.codebook;
    let enc = Encoder::new(cb, &bs.params.typ);
    let mut table = vec![0u32; cb.num_sequences() as usize];
    let chunks = samples.div_ceil(LEAKAGE_CHUNK);
    let batch = rayon::current_num_threads().max(1) as u64 * 4;
    let mut start = 0;
    while start < chunks {
        let end = (start + batch).min(chunks);
        let idx: Vec<Vec<u32>> = (start..end)
            .into_par_iter()
            .map(|c| {
                let mut rng = stream(master_seed, Purpose::Leakage, c);
                let len = LEAKAGE_CHUNK.min(samples - c * LEAKAGE_CHUNK);
                (0..len)
                    .map(|_| {
                        let x = ca_generate(&bs.params.joint, bs.params.n, 0, &mut rng).x;
                        let (m, s, _) = enc.encode(&x, &mut rng)?;
                        Ok(cb.flat_index(m, s) as u32)
                    })
                    .collect::<Result<Vec<u32>>>()
            })
            .collect::<Result<_>>()?;
        for i in idx.iter().flatten() {
            table[*i as usize] += 1;
        }
        start = end;
    }
    // rows m, columns s
    let mi = plugin_mi_from_table(&table, cb.num_bins() as usize, cb.bin_size() as usize);
    Ok(LeakageReport {
        n: bs.params.n,
        samples,
        cells: cb.num_sequences(),
        mi_bits: mi,
        mi_per_symbol: mi / bs.params.n as f64,
    })
}

fn d_q() -> u64 {
    101
}
fn d_one_u32() -> u32 {
    1
}
fn d_k_finite() -> usize {
    5
}
fn d_k_binning() -> usize {
    3
}
fn d_trials_finite() -> u64 {
    10_000
}
fn d_trials_binning() -> u64 {
    2_000
}
fn d_joint() -> JointSource {
    JointSource::bsc(0.5, 0.1).expect("valid source")
}
fn d_n_values() -> Vec<usize> {
    vec![8, 16]
}
fn d_xi() -> f64 {
    0.2
}
fn d_xi_prime() -> f64 {
    0.1
}
fn d_cap() -> u32 {
    DEFAULT_CAP_BITS
}
fn d_map_samples() -> u64 {
    100_000
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiniteAttacker {
    #[default]
    Uniform,
    Constant,
    Replay,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinAttacker {
    #[default]
    Uniform,
    EmpiricalMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteConfig {
    #[serde(default = "d_q")]
    pub q: u64,
    #[serde(rename = "L", default = "d_one_u32")]
    pub degree: u32,
    #[serde(rename = "K", default = "d_k_finite")]
    pub k: usize,
    #[serde(default = "d_trials_finite")]
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub attacker: FiniteAttacker,
    /// Packed field element returned by the constant attacker.
    #[serde(default)]
    pub constant_guess: u64,
}

impl Default for FiniteConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinningConfig {
    #[serde(default = "d_joint")]
    pub joint: JointSource,
    #[serde(default = "d_n_values")]
    pub n_values: Vec<usize>,
    #[serde(rename = "K", default = "d_k_binning")]
    pub k: usize,
    #[serde(default = "d_xi")]
    pub xi: f64,
    #[serde(default = "d_xi_prime")]
    pub xi_prime: f64,
    #[serde(default = "d_trials_binning")]
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub attacker: BinAttacker,
    #[serde(default)]
    pub slack: RateSlack,
    #[serde(default = "d_cap")]
    pub cap_bits: u32,
    #[serde(default = "d_map_samples")]
    pub map_samples: u64,
}

impl Default for BinningConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl BinningConfig {
    pub fn typicality(&self) -> Result<TypicalityParams> {
        TypicalityParams::new(self.xi, self.xi_prime).map_err(|e| SimError::ConfigInvalid(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Experiment {
    Finite(FiniteConfig),
    Binning(BinningConfig),
}

impl Experiment {
    pub fn trials(&self) -> u64 {
        match self {
            Experiment::Finite(c) => c.trials,
            Experiment::Binning(c) => c.trials,
        }
    }

    pub fn master_seed(&self) -> u64 {
        match self {
            Experiment::Finite(c) => c.master_seed,
            Experiment::Binning(c) => c.master_seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateColumns {
    pub achieved: f64,
    pub capacity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookDiag {
    pub n: usize,
    pub r_tilde: f64,
    pub r_prime: f64,
    pub tilde_bits: u32,
    pub prime_bits: u32,
    pub num_bins: u64,
    pub bin_size: u64,
    pub duplicates: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub regime: Regime,
    pub q: Option<u64>,
    #[serde(rename = "L")]
    pub degree: Option<u32>,
    #[serde(rename = "K")]
    pub k: usize,
    pub n: Option<usize>,
    pub xi: Option<f64>,
    pub completeness: EstimateReport,
    pub soundness: EstimateReport,
    /// Absent when `K = 1`.
    pub privacy: Option<EstimateReport>,
    pub rate: RateColumns,
    pub codebook: Option<CodebookDiag>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub points: Vec<PointReport>,
    pub transcript: Vec<TrialRecord>,
}

impl ExperimentOutput {
    pub fn write_transcript<W: Write>(&self, w: W) -> Result<()> {
        write_jsonl(&self.transcript, w)
    }
}

pub fn write_jsonl<W: Write>(records: &[TrialRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn run_setting(
    setting: &Setting,
    strategy: &AttackStrategy,
    trials: u64,
    master_seed: u64,
) -> Result<(EstimateReport, EstimateReport, Option<EstimateReport>, Vec<TrialRecord>)> {
    let c = estimate_completeness(setting, trials, master_seed)?;
    let s = estimate_soundness(setting, strategy, trials, master_seed)?;
    let p = if setting.k() >= 2 { Some(estimate_privacy(setting, trials, master_seed)?) } else { None };
    let mut records = c.records;
    records.extend(s.records);
    let privacy = p.map(|p| {
        records.extend(p.records);
        p.report
    });
    Ok((c.report, s.report, privacy, records))
}

fn finite_point(cfg: &FiniteConfig) -> Result<(PointReport, Vec<TrialRecord>)> {
    check_trials(cfg.trials)?;
    let field = make_field(cfg.q, cfg.degree)?;
    if cfg.k == 0 {
        return Err(SimError::ConfigInvalid("K must be at least 1".into()));
    }
    let strategy = match cfg.attacker {
        FiniteAttacker::Uniform => AttackStrategy::FiniteUniformGuess,
        FiniteAttacker::Constant => AttackStrategy::FiniteConstant { guess: field.element(cfg.constant_guess)? },
        FiniteAttacker::Replay => AttackStrategy::replay_collector(),
    };
    let setting = Setting::Finite(FiniteSetting { field: field.clone(), k: cfg.k });
    let (completeness, soundness, privacy, records) = run_setting(&setting, &strategy, cfg.trials, cfg.master_seed)?;
    let rate = finite_key_rate(cfg.q, cfg.degree, cfg.k as u64)?;
    Ok((
        PointReport {
            regime: Regime::Finite,
            q: Some(cfg.q),
            degree: Some(cfg.degree),
            k: cfg.k,
            n: None,
            xi: None,
            completeness,
            soundness,
            privacy,
            rate: RateColumns { achieved: rate.rate, capacity: rate.upper_bound },
            codebook: None,
        },
        records,
    ))
}

/// Seed of the codebook used at block length `n`.
pub fn codebook_seed(master_seed: u64, n: usize) -> u64 {
    stream(master_seed, Purpose::Codebook, n as u64).next_u64()
}

fn binning_point(cfg: &BinningConfig, n: usize) -> Result<(PointReport, Vec<TrialRecord>)> {
    check_trials(cfg.trials)?;
    let typ = cfg.typicality()?;
    let params = BinningParams::new(cfg.joint.clone(), n, typ, cfg.slack)?;
    let bs = BinningSetting::new(params, cfg.k, codebook_seed(cfg.master_seed, n), cfg.cap_bits)?;
    let strategy = match cfg.attacker {
        BinAttacker::Uniform => AttackStrategy::BinUniformGuess,
        BinAttacker::EmpiricalMap => {
            let seed = stream(cfg.master_seed, Purpose::Training, n as u64).next_u64();
            train_empirical_map(&bs.codebook, &cfg.joint, &typ, cfg.map_samples, seed)?
        }
    };
    let diag = CodebookDiag {
        n,
        r_tilde: bs.params.r_tilde,
        r_prime: bs.params.r_prime,
        tilde_bits: bs.codebook.tilde_bits(),
        prime_bits: bs.codebook.prime_bits(),
        num_bins: bs.codebook.num_bins(),
        bin_size: bs.codebook.bin_size(),
        duplicates: bs.codebook.collision_stats().duplicates(),
    };
    let rate = asymptotic_key_rate(&cfg.joint, cfg.k);
    let setting = Setting::Binning(bs);
    let (completeness, soundness, privacy, records) = run_setting(&setting, &strategy, cfg.trials, cfg.master_seed)?;
    Ok((
        PointReport {
            regime: Regime::Binning,
            q: None,
            degree: None,
            k: cfg.k,
            n: Some(n),
            xi: Some(cfg.xi),
            completeness,
            soundness,
            privacy,
            rate: RateColumns { achieved: rate.achieved, capacity: rate.capacity },
            codebook: Some(diag),
        },
        records,
    ))
}

/// Runs all three estimators at every configured point.
pub fn run_experiment(exp: &Experiment) -> Result<ExperimentOutput> {
    let pairs = match exp {
        Experiment::Finite(cfg) => vec![finite_point(cfg)?],
        Experiment::Binning(cfg) => {
            if cfg.n_values.is_empty() {
                return Err(SimError::ConfigInvalid("n_values is empty".into()));
            }
            cfg.n_values.iter().map(|&n| binning_point(cfg, n)).collect::<Result<_>>()?
        }
    };
    let (points, records): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(ExperimentOutput { points, transcript: records.into_iter().flatten().collect() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "n")]
    N,
    #[serde(rename = "qL")]
    QL,
    K,
    #[serde(rename = "xi")]
    Xi,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::N => "n",
            SweepAxis::QL => "qL",
            SweepAxis::K => "K",
            SweepAxis::Xi => "xi",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "n" => Ok(SweepAxis::N),
            "qL" => Ok(SweepAxis::QL),
            "K" => Ok(SweepAxis::K),
            "xi" => Ok(SweepAxis::Xi),
            _ => Err(format!("unknown axis {s:?}; expected n, qL, K or xi")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub pe1: f64,
    pub pe1_lo: f64,
    pub pe1_hi: f64,
    pub pe2: f64,
    pub pe2_lo: f64,
    pub pe2_hi: f64,
    pub pp: Option<f64>,
    pub pp_lo: Option<f64>,
    pub pp_hi: Option<f64>,
    pub rate_achieved: f64,
    pub rate_capacity: f64,
    pub trials: u64,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub points: Vec<PointReport>,
    pub transcript: Vec<TrialRecord>,
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// JSON mirror of the CSV rows plus full per-point reports.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "rows": self.rows, "points": self.points })
    }
}

/// Splits a prime power `q^L`.
pub fn prime_power(order: u64) -> Option<(u64, u32)> {
    if order < 2 {
        return None;
    }
    let p = (2..).take_while(|d| d * d <= order).find(|d| order.is_multiple_of(*d)).unwrap_or(order);
    if !is_prime(p) {
        return None;
    }
    let (mut v, mut l) = (order, 0);
    while v % p == 0 {
        v /= p;
        l += 1;
    }
    (v == 1).then_some((p, l))
}

fn int_value(axis: SweepAxis, v: f64) -> Result<u64> {
    if v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
        return Err(SimError::ConfigInvalid(format!("axis {} needs integer values, got {v}", axis.name())));
    }
    Ok(v as u64)
}

/// One experiment point per value, paired on the same master seed.
pub fn sweep(
    template: &Experiment,
    axis: SweepAxis,
    values: &[f64],
    trials: u64,
    master_seed: u64,
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(SimError::ConfigInvalid("sweep values are empty".into()));
    }
    let up = values.windows(2).all(|w| w[0] < w[1]);
    let down = values.windows(2).all(|w| w[0] > w[1]);
    if !(up || down) {
        return Err(SimError::ConfigInvalid("sweep values must be strictly monotone".into()));
    }
    let mut rows = Vec::new();
    let mut points = Vec::new();
    let mut transcript = Vec::new();
    for &v in values {
        let (point, recs) = match (template, axis) {
            (Experiment::Finite(t), SweepAxis::QL) => {
                let order = int_value(axis, v)?;
                let (q, degree) = prime_power(order)
                    .ok_or_else(|| SimError::ConfigInvalid(format!("{order} is not a prime power")))?;
                finite_point(&FiniteConfig { q, degree, trials, master_seed, ..t.clone() })?
            }
            (Experiment::Finite(t), SweepAxis::K) => {
                finite_point(&FiniteConfig { k: int_value(axis, v)? as usize, trials, master_seed, ..t.clone() })?
            }
            (Experiment::Binning(t), SweepAxis::N) => {
                binning_point(&BinningConfig { trials, master_seed, ..t.clone() }, int_value(axis, v)? as usize)?
            }
            (Experiment::Binning(t), SweepAxis::K | SweepAxis::Xi) => {
                let mut cfg = BinningConfig { trials, master_seed, ..t.clone() };
                if axis == SweepAxis::K {
                    cfg.k = int_value(axis, v)? as usize;
                } else {
                    cfg.xi = v;
                }
                let n = *cfg.n_values.first().ok_or_else(|| SimError::ConfigInvalid("n_values is empty".into()))?;
                binning_point(&cfg, n)?
            }
            (Experiment::Finite(_), _) => {
                return Err(SimError::ConfigInvalid(format!(
                    "axis {} does not apply to the finite regime",
                    axis.name()
                )))
            }
            (Experiment::Binning(_), SweepAxis::QL) => {
                return Err(SimError::ConfigInvalid("axis qL does not apply to the binning regime".into()))
            }
        };
        rows.push(SweepRow {
            axis: axis.name().to_string(),
            value: v,
            pe1: point.completeness.point,
            pe1_lo: point.completeness.ci_low,
            pe1_hi: point.completeness.ci_high,
            pe2: point.soundness.point,
            pe2_lo: point.soundness.ci_low,
            pe2_hi: point.soundness.ci_high,
            pp: point.privacy.as_ref().map(|p| p.point),
            pp_lo: point.privacy.as_ref().map(|p| p.ci_low),
            pp_hi: point.privacy.as_ref().map(|p| p.ci_high),
            rate_achieved: point.rate.achieved,
            rate_capacity: point.rate.capacity,
            trials,
        });
        points.push(point);
        transcript.extend(recs);
    }
    Ok(SweepReport { rows, points, transcript })
}
