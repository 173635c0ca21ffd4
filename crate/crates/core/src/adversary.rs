//! Attackers. Every entry point takes only what an outsider sees: the
//! challenge `M`, the public codebook, and the attacker's own state.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::{ca_generate, Codebook, Encoder};
use crate::field::{FieldCtx, FieldElem};
use crate::finite::Challenge;
use crate::info::{JointSource, TypicalityParams};
use crate::poly::{eval_at_zero_direct, EvalPoint};
use crate::streams::{stream, Purpose};

const MAP_MAGIC: &[u8; 4] = b"PAMP";
const TRAINING_CHUNK: u64 = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    FiniteUniformGuess,
    FiniteConstant,
    FiniteReplayCollector,
    BinUniformGuess,
    BinEmpiricalMap,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::FiniteUniformGuess => "finite_uniform_guess",
            AttackKind::FiniteConstant => "finite_constant",
            AttackKind::FiniteReplayCollector => "finite_replay_collector",
            AttackKind::BinUniformGuess => "bin_uniform_guess",
            AttackKind::BinEmpiricalMap => "bin_empirical_map",
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, AttackKind::FiniteUniformGuess | AttackKind::FiniteConstant | AttackKind::FiniteReplayCollector)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("strategy {kind} does not apply to the {regime} regime")]
    WrongRegime { kind: AttackKind, regime: &'static str },
    #[error("empirical MAP table has not been trained")]
    UntrainedStrategy,
    #[error("codebook mismatch: {0}")]
    CodebookMismatch(String),
    #[error("bad MAP table file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AttackError>;

/// Per-bin argmax of the empirical `P(S = s | M = m)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapTable {
    num_bins: u64,
    bin_size: u64,
    argmax: Vec<u32>,
    samples: u64,
}

impl MapTable {
    pub fn num_bins(&self) -> u64 {
        self.num_bins
    }

    pub fn bin_size(&self) -> u64 {
        self.bin_size
    }

    pub fn argmax(&self) -> &[u32] {
        &self.argmax
    }

    pub fn is_trained(&self) -> bool {
        self.samples > 0
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if !self.is_trained() {
            return Err(AttackError::UntrainedStrategy);
        }
        let mut out = Vec::with_capacity(20 + 4 * self.argmax.len());
        out.extend_from_slice(MAP_MAGIC);
        out.extend_from_slice(&self.num_bins.to_le_bytes());
        out.extend_from_slice(&self.bin_size.to_le_bytes());
        for a in &self.argmax {
            out.extend_from_slice(&a.to_le_bytes());
        }
        Ok(out)
    }

    /// A persisted table counts as trained; sample counts are not stored.
    pub fn from_bytes(bytes: &[u8]) -> Result<MapTable> {
        if bytes.len() < 20 || &bytes[..4] != MAP_MAGIC {
            return Err(AttackError::Format("missing PAMP header".into()));
        }
        let num_bins = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
        let bin_size = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let body = &bytes[20..];
        if num_bins.checked_mul(4).map(|b| b as usize) != Some(body.len()) {
            return Err(AttackError::Format("payload length does not match bin count".into()));
        }
        let argmax: Vec<u32> =
            body.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        if argmax.iter().any(|&a| a as u64 >= bin_size) {
            return Err(AttackError::Format("argmax outside bin".into()));
        }
        Ok(MapTable { num_bins, bin_size, argmax, samples: u64::MAX })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes()?)?)
    }

    pub fn load(path: &Path) -> Result<MapTable> {
        MapTable::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AttackStrategy {
    FiniteUniformGuess,
    FiniteConstant {
        guess: FieldElem,
    },
    /// Distinct challenge points seen so far, keyed by abscissa.
    FiniteReplayCollector {
        points: BTreeMap<FieldElem, FieldElem>,
    },
    BinUniformGuess,
    BinEmpiricalMap {
        table: MapTable,
    },
}

impl AttackStrategy {
    pub fn replay_collector() -> AttackStrategy {
        AttackStrategy::FiniteReplayCollector { points: BTreeMap::new() }
    }

    pub fn kind(&self) -> AttackKind {
        match self {
            AttackStrategy::FiniteUniformGuess => AttackKind::FiniteUniformGuess,
            AttackStrategy::FiniteConstant { .. } => AttackKind::FiniteConstant,
            AttackStrategy::FiniteReplayCollector { .. } => AttackKind::FiniteReplayCollector,
            AttackStrategy::BinUniformGuess => AttackKind::BinUniformGuess,
            AttackStrategy::BinEmpiricalMap { .. } => AttackKind::BinEmpiricalMap,
        }
    }

    /// Number of distinct points a replay collector holds.
    pub fn collected(&self) -> usize {
        match self {
            AttackStrategy::FiniteReplayCollector { points } => points.len(),
            _ => 0,
        }
    }
}

/// Guess of `S` from the challenge alone.
pub fn attack_finite<R: Rng + ?Sized>(
    strategy: &mut AttackStrategy,
    challenge: &Challenge,
    field: &FieldCtx,
    rng: &mut R,
) -> Result<FieldElem> {
    match strategy {
        AttackStrategy::FiniteUniformGuess => Ok(field.random(rng)),
        AttackStrategy::FiniteConstant { guess } => Ok(*guess),
        AttackStrategy::FiniteReplayCollector { points } => {
            for p in &challenge.points {
                points.insert(p.x, p.y);
            }
            let d = challenge.points.len();
            if points.len() > d {
                let pts: Vec<EvalPoint> = points.iter().take(d + 1).map(|(&x, &y)| EvalPoint::new(x, y)).collect();
                if let Ok(s) = eval_at_zero_direct(field, &pts) {
                    return Ok(s);
                }
            }
            Ok(field.random(rng))
        }
        other => Err(AttackError::WrongRegime { kind: other.kind(), regime: "finite" }),
    }
}

/// Guess of the in-bin index from the bin index and public codebook.
pub fn attack_binning<R: Rng + ?Sized>(strategy: &AttackStrategy, m: u64, cb: &Codebook, rng: &mut R) -> Result<u64> {
    match strategy {
        AttackStrategy::BinUniformGuess => Ok(rng.gen_range(0..cb.bin_size())),
        AttackStrategy::BinEmpiricalMap { table } => {
            if !table.is_trained() {
                return Err(AttackError::UntrainedStrategy);
            }
            if table.num_bins != cb.num_bins() || table.bin_size != cb.bin_size() {
                return Err(AttackError::CodebookMismatch(format!(
                    "table is {}x{}, codebook is {}x{}",
                    table.num_bins,
                    table.bin_size,
                    cb.num_bins(),
                    cb.bin_size()
                )));
            }
            let m = usize::try_from(m).ok().filter(|&m| m < table.argmax.len());
            let m = m.ok_or_else(|| AttackError::CodebookMismatch("bin index out of range".into()))?;
            Ok(table.argmax[m] as u64)
        }
        other => Err(AttackError::WrongRegime { kind: other.kind(), regime: "binning" }),
    }
}

/// Simulates `samples` verifier encodings of fresh sources and keeps, per
/// bin, the most frequent in-bin index (lowest index on ties).
pub fn train_empirical_map(
    cb: &Codebook,
    joint: &JointSource,
    typ: &TypicalityParams,
    samples: u64,
    seed: u64,
) -> Result<AttackStrategy> {
    if joint != cb.joint() {
        return Err(AttackError::CodebookMismatch("joint source differs from the codebook's".into()));
    }
    let enc = Encoder::new(cb, typ);
    let chunks = samples.div_ceil(TRAINING_CHUNK);
    let flat: Vec<Vec<u32>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, Purpose::Training, c);
            let len = TRAINING_CHUNK.min(samples - c * TRAINING_CHUNK);
            (0..len)
                .map(|_| {
                    let x = ca_generate(joint, cb.n(), 0, &mut rng).x;
                    let (m, s, _) = enc.encode(&x, &mut rng).expect("length matches codebook");
                    cb.flat_index(m, s) as u32
                })
                .collect()
        })
        .collect();
    let mut counts = vec![0u32; cb.num_sequences() as usize];
    for idx in flat.iter().flatten() {
        counts[*idx as usize] += 1;
    }
    let argmax = counts
        .chunks(cb.bin_size() as usize)
        .map(|bin| {
            let mut best = 0;
            for (s, &c) in bin.iter().enumerate() {
                if c > bin[best] {
                    best = s;
                }
            }
            best as u32
        })
        .collect();
    Ok(AttackStrategy::BinEmpiricalMap {
        table: MapTable { num_bins: cb.num_bins(), bin_size: cb.bin_size(), argmax, samples },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::{make_codebook, BinningParams, EncodeCase, DEFAULT_CAP_BITS};
    use crate::field::make_field;
    use crate::finite::{ca_keygen, ChallengeMessage, ChallengePolicy, Verifier};
    use crate::info::RateSlack;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn within_4_sigma(hits: u64, trials: u64, p: f64) -> bool {
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        (hits as f64 / trials as f64 - p).abs() <= 4.0 * sigma
    }

    #[test]
    fn finite_uniform_guess_rate() {
        let f = make_field(101, 1).unwrap();
        let mut r = rng(1);
        let mut hits = 0;
        let trials = 100_000;
        let mut strat = AttackStrategy::FiniteUniformGuess;
        for _ in 0..trials {
            let ca = ca_keygen(&f, 3, &mut r).unwrap();
            let (s, c) = Verifier::new(&f, ca.v).unwrap().challenge(&mut r);
            hits += (attack_finite(&mut strat, &c, &f, &mut r).unwrap() == s.s) as u64;
        }
        assert!(within_4_sigma(hits, trials, 1.0 / 101.0), "{hits}");
    }

    #[test]
    fn replay_collector_needs_fresh_challenges() {
        let f = make_field(101, 1).unwrap();
        let ca = ca_keygen(&f, 3, &mut rng(2)).unwrap();
        let cached = Verifier::new(&f, ca.v.clone()).unwrap();
        let mut strat = AttackStrategy::replay_collector();
        let mut r = rng(3);
        for _ in 0..50 {
            let (_, c) = cached.challenge(&mut r);
            attack_finite(&mut strat, &c, &f, &mut r).unwrap();
        }
        assert_eq!(strat.collected(), 3);

        let fresh = Verifier::with_policy(&f, ca.v, ChallengePolicy::UnsafeFresh).unwrap();
        let mut strat = AttackStrategy::replay_collector();
        let (s, c) = fresh.challenge(&mut r);
        attack_finite(&mut strat, &c, &f, &mut r).unwrap();
        let (_, c2) = fresh.challenge(&mut r);
        assert!(c2.points.iter().any(|p| !c.points.iter().any(|q| q.x == p.x)));
        assert_eq!(attack_finite(&mut strat, &c2, &f, &mut r).unwrap(), s.s);
    }

    #[test]
    fn regimes_are_enforced() {
        let f = make_field(7, 1).unwrap();
        let c = Challenge { session_id: String::new(), points: vec![] };
        assert!(matches!(
            attack_finite(&mut AttackStrategy::BinUniformGuess, &c, &f, &mut rng(0)),
            Err(AttackError::WrongRegime { kind: AttackKind::BinUniformGuess, .. })
        ));
        let p = BinningParams::new(
            JointSource::bsc(0.5, 0.1).unwrap(),
            8,
            TypicalityParams::new(0.2, 0.1).unwrap(),
            RateSlack::Zero,
        )
        .unwrap();
        let cb = make_codebook(&p, 1, DEFAULT_CAP_BITS).unwrap();
        assert!(matches!(
            attack_binning(&AttackStrategy::FiniteUniformGuess, 0, &cb, &mut rng(0)),
            Err(AttackError::WrongRegime { .. })
        ));
    }

    fn small_setup(n: usize) -> (BinningParams, Codebook) {
        let p = BinningParams::new(
            JointSource::bsc(0.5, 0.1).unwrap(),
            n,
            TypicalityParams::new(0.2, 0.1).unwrap(),
            RateSlack::Zero,
        )
        .unwrap();
        let cb = make_codebook(&p, 42, DEFAULT_CAP_BITS).unwrap();
        (p, cb)
    }

    #[test]
    fn bin_uniform_guess_rate() {
        let (_, cb) = small_setup(8);
        let mut r = rng(5);
        let trials = 100_000;
        let hits = (0..trials)
            .filter(|_| {
                let s = r.gen_range(0..cb.bin_size());
                attack_binning(&AttackStrategy::BinUniformGuess, 3, &cb, &mut r).unwrap() == s
            })
            .count() as u64;
        assert!(within_4_sigma(hits, trials, 1.0 / cb.bin_size() as f64));
    }

    #[test]
    fn map_training_contracts() {
        let (p, cb) = small_setup(8);
        let untrained = train_empirical_map(&cb, &p.joint, &p.typ, 0, 1).unwrap();
        assert!(matches!(attack_binning(&untrained, 0, &cb, &mut rng(0)), Err(AttackError::UntrainedStrategy)));
        let a = train_empirical_map(&cb, &p.joint, &p.typ, 20_000, 9).unwrap();
        let b = train_empirical_map(&cb, &p.joint, &p.typ, 20_000, 9).unwrap();
        assert_eq!(a, b);
        let other = JointSource::bsc(0.5, 0.2).unwrap();
        assert!(matches!(train_empirical_map(&cb, &other, &p.typ, 10, 1), Err(AttackError::CodebookMismatch(_))));
        let (_, bigger) = small_setup(16);
        assert!(matches!(attack_binning(&a, 0, &bigger, &mut rng(0)), Err(AttackError::CodebookMismatch(_))));

        let AttackStrategy::BinEmpiricalMap { table } = &a else { unreachable!() };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.bin");
        table.save(&path).unwrap();
        let back = MapTable::load(&path).unwrap();
        assert_eq!(back.argmax(), table.argmax());
        assert_eq!(&std::fs::read(&path).unwrap()[..4], b"PAMP");
        let AttackStrategy::BinEmpiricalMap { table: empty } = untrained else { unreachable!() };
        assert!(matches!(empty.to_bytes(), Err(AttackError::UntrainedStrategy)));
    }

    /// Exact `P(idx)` of the verifier's choice by enumerating all `2^n`
    /// source sequences for a noiseless `U = X` source.
    fn exact_index_distribution(cb: &Codebook, n: usize) -> Vec<f64> {
        let total = cb.num_sequences() as usize;
        let mut p = vec![0.0; total];
        let px = 1.0 / (1u64 << n) as f64;
        for xbits in 0..1u32 << n {
            let x: Vec<u8> = (0..n).map(|i| ((xbits >> i) & 1) as u8).collect();
            // typical at xi' = 0.1 with uniform marginals: exactly n/2 ones
            let typical = x.iter().filter(|&&b| b == 1).count() * 2 == n;
            let matches: Vec<usize> = (0..total).filter(|&i| typical && cb.sequence(i as u64) == x).collect();
            if matches.is_empty() {
                p.iter_mut().for_each(|v| *v += px / total as f64);
            } else {
                for &i in &matches {
                    p[i] += px / matches.len() as f64;
                }
            }
        }
        p
    }

    #[test]
    fn trained_map_finds_true_argmax_at_n4() {
        let n = 4;
        let joint = JointSource::bsc(0.5, 0.0).unwrap();
        let typ = TypicalityParams::new(0.2, 0.1).unwrap();
        let p = BinningParams::with_rates(joint.clone(), n, typ, 1.0, 0.5).unwrap();
        let cb = make_codebook(&p, 3, DEFAULT_CAP_BITS).unwrap();
        let exact = exact_index_distribution(&cb, n);
        let strat = train_empirical_map(&cb, &joint, &typ, 200_000, 4).unwrap();
        let AttackStrategy::BinEmpiricalMap { table } = &strat else { unreachable!() };
        let bin = cb.bin_size() as usize;
        for (m, probs) in exact.chunks(bin).enumerate() {
            let best = probs.iter().cloned().fold(0.0, f64::max);
            let chosen = table.argmax()[m] as usize;
            assert!(probs[chosen] >= best - 1e-12, "bin {m}: {probs:?} chose {chosen}");
        }
    }

    /// Everything an attacker receives, serialized, carries none of the
    /// verifier's or users' secrets.
    #[test]
    fn information_firewall() {
        let f = make_field(65521, 1).unwrap();
        let ca = ca_keygen(&f, 3, &mut rng(11)).unwrap();
        let ver = Verifier::new(&f, ca.v.clone()).unwrap();
        let (s, c) = ver.challenge(&mut rng(12));
        let mut strat = AttackStrategy::replay_collector();
        attack_finite(&mut strat, &c, &f, &mut rng(13)).unwrap();
        let visible = serde_json::to_string(&(ChallengeMessage::encode(&f, &c), format!("{strat:?}"))).unwrap();
        let secrets: Vec<u64> = std::iter::once(s.s.value())
            .chain(ca.v.key_points.iter().flat_map(|p| [p.x.value(), p.y.value()]))
            .collect();
        let tokens: std::collections::HashSet<u64> =
            visible.split(|ch: char| !ch.is_ascii_digit()).filter_map(|t| t.parse().ok()).collect();
        for v in secrets {
            assert!(!tokens.contains(&v), "{v} leaked into {visible}");
        }

        let (p, cb) = small_setup(16);
        let real = ca_generate(&p.joint, 16, 3, &mut rng(14));
        let (m, _, d) = Encoder::new(&cb, &p.typ).encode(&real.x, &mut rng(15)).unwrap();
        assert!(matches!(d.case, EncodeCase::Typical | EncodeCase::Fallback));
        // the binning attacker sees m and the sidecar of the public codebook only
        let visible = serde_json::to_string(&(m, cb.sidecar())).unwrap();
        let x_str: String = real.x.iter().map(|b| b.to_string()).collect();
        assert!(!visible.contains(&x_str));
    }
}
