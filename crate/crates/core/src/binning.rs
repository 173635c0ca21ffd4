//! Random-binning scheme at desk scale.
//!
//! A codebook of `2^⌈nR̃⌉` i.i.d. sequences `u^n` is split into `2^⌈nR'⌉`
//! equal contiguous bins. The verifier finds a codeword jointly typical with
//! `X^n`; its bin index is the public message `M` and its position inside
//! the bin is the secret `S`. A user holding `Y_k^n` searches bin `M` for a
//! codeword jointly typical with `Y_k^n`.
//!
//! Sequences are stored packed, `bits_per_symbol` bits per symbol, with no
//! symbol straddling a word boundary.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::info::{InfoError, JointDist, JointSource, RateSlack, TypicalityParams, TypicalityWindow};
use crate::streams::{stream, Purpose};

/// Largest codebook exponent accepted by default (`2^24` sequences).
pub const DEFAULT_CAP_BITS: u32 = 24;

const MAGIC: &[u8; 4] = b"PABK";
const FORMAT_VERSION: u16 = 1;
const CHUNK_BITS: u32 = 16;

#[derive(Debug, Error)]
pub enum BinningError {
    #[error("I(U;Y) = {i_uy} does not exceed phi(xi) = {phi}; no room for a secret")]
    DegenerateSource { i_uy: f64, phi: f64 },
    #[error("codebook needs 2^{bits} sequences, cap is 2^{cap}")]
    CodebookTooLarge { bits: u32, cap: u32 },
    #[error("sequence of length {got}, codebook block length is {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("bin index {m} out of range ({num_bins} bins)")]
    BinIndexOutOfRange { m: u64, num_bins: u64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("bad codebook file: {0}")]
    Format(String),
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BinningError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub r_tilde: f64,
    pub r_prime: f64,
    pub secret_rate: f64,
}

/// `R̃ = I(U;X) + φ(ξ')` and `R' = I(U;X) - I(U;Y) + φ(ξ) + φ(ξ')`.
/// The covering slack uses `H(X,U)`, the packing slack `H(U,Y)`.
pub fn rates_from_dist(joint: &JointSource, typ: TypicalityParams, slack: RateSlack) -> Result<Rates> {
    let phi_cover = slack.phi(typ.xi_prime, joint.joint_xu().entropy());
    let phi_pack = slack.phi(typ.xi, joint.joint_uy().entropy());
    let (i_ux, i_uy) = (joint.i_ux(), joint.i_uy());
    if i_uy <= phi_pack {
        return Err(BinningError::DegenerateSource { i_uy, phi: phi_pack });
    }
    let r_tilde = i_ux + phi_cover;
    // I(U;X) >= I(U;Y) by data processing; snap rounding residue to zero.
    let r_prime = clean(i_ux - i_uy + phi_pack + phi_cover);
    Ok(Rates { r_tilde, r_prime, secret_rate: r_tilde - r_prime })
}

fn clean(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else {
        x
    }
}

/// `⌈n r⌉`, ignoring float residue just above an integer.
fn ceil_bits(n: usize, r: f64) -> u32 {
    (n as f64 * r - 1e-9).ceil().max(0.0) as u32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinningParams {
    pub joint: JointSource,
    pub n: usize,
    pub typ: TypicalityParams,
    pub r_tilde: f64,
    pub r_prime: f64,
}

impl BinningParams {
    pub fn new(joint: JointSource, n: usize, typ: TypicalityParams, slack: RateSlack) -> Result<BinningParams> {
        let r = rates_from_dist(&joint, typ, slack)?;
        BinningParams::with_rates(joint, n, typ, r.r_tilde, r.r_prime)
    }

    /// Explicit rates, for experiments off the prescribed operating point.
    pub fn with_rates(
        joint: JointSource,
        n: usize,
        typ: TypicalityParams,
        r_tilde: f64,
        r_prime: f64,
    ) -> Result<BinningParams> {
        if n == 0 {
            return Err(BinningError::InvalidParams("block length must be positive".into()));
        }
        if !(r_tilde >= r_prime && r_prime >= 0.0) {
            return Err(BinningError::InvalidParams(format!("need R̃ >= R' >= 0, got {r_tilde}, {r_prime}")));
        }
        Ok(BinningParams { joint, n, typ, r_tilde, r_prime })
    }

    pub fn tilde_bits(&self) -> u32 {
        ceil_bits(self.n, self.r_tilde)
    }

    pub fn prime_bits(&self) -> u32 {
        ceil_bits(self.n, self.r_prime).min(self.tilde_bits())
    }
}

/// Inverse-CDF sampler over `u64` thresholds.
#[derive(Clone, Debug)]
pub(crate) struct Sampler {
    thresholds: Vec<u64>,
    uniform_bits: Option<u32>,
}

impl Sampler {
    pub(crate) fn new(probs: &[f64]) -> Sampler {
        let k = probs.len();
        let uniform = k.is_power_of_two() && probs.iter().all(|&p| p == 1.0 / k as f64);
        let mut acc = 0.0;
        let mut thresholds: Vec<u64> = probs
            .iter()
            .map(|&p| {
                acc += p;
                if acc >= 1.0 {
                    u64::MAX
                } else {
                    (acc * 18_446_744_073_709_551_616.0) as u64
                }
            })
            .collect();
        // The last symbol with positive mass absorbs rounding.
        if let Some(last) = probs.iter().rposition(|&p| p > 0.0) {
            thresholds[last..].iter_mut().for_each(|t| *t = u64::MAX);
        }
        Sampler { thresholds, uniform_bits: uniform.then(|| k.trailing_zeros()) }
    }

    pub(crate) fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> u8 {
        if let Some(b) = self.uniform_bits {
            return (rng.next_u64() >> (64 - b.max(1))) as u8 & ((1u16 << b) - 1) as u8;
        }
        let r = rng.next_u64();
        self.thresholds.iter().position(|&t| r < t).unwrap_or(self.thresholds.len() - 1) as u8
    }
}

/// Packing geometry shared by codebooks and query sequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layout {
    n: usize,
    bps: u32,
    per_word: usize,
    words: usize,
}

impl Layout {
    fn new(n: usize, alphabet: usize) -> Layout {
        let bps = (usize::BITS - (alphabet.max(2) - 1).leading_zeros()).max(1);
        let per_word = (64 / bps) as usize;
        Layout { n, bps, per_word, words: n.div_ceil(per_word) }
    }

    fn pack(&self, seq: &[u8], out: &mut [u64]) {
        out.iter_mut().for_each(|w| *w = 0);
        for (i, &s) in seq.iter().enumerate() {
            out[i / self.per_word] |= (s as u64) << ((i % self.per_word) as u32 * self.bps);
        }
    }

    fn symbol(&self, words: &[u64], i: usize) -> u8 {
        let mask = (1u64 << self.bps) - 1;
        ((words[i / self.per_word] >> ((i % self.per_word) as u32 * self.bps)) & mask) as u8
    }

    /// Valid-bit mask of word `w` when one bit per symbol.
    fn binary_mask(&self, w: usize) -> u64 {
        let used = (self.n - w * 64).min(64);
        if used == 64 {
            u64::MAX
        } else {
            (1u64 << used) - 1
        }
    }
}

/// Pair counts between a packed query `a` (rows) and packed codeword `b`
/// (columns), row-major.
fn pair_counts(layout: &Layout, rows: usize, cols: usize, a: &[u64], b: &[u64], out: &mut [u32]) {
    out.iter_mut().for_each(|c| *c = 0);
    if layout.bps == 1 && rows == 2 && cols == 2 {
        for w in 0..layout.words {
            let mask = layout.binary_mask(w);
            let (x, y) = (a[w], b[w]);
            out[0] += (!x & !y & mask).count_ones();
            out[1] += (!x & y & mask).count_ones();
            out[2] += (x & !y & mask).count_ones();
            out[3] += (x & y & mask).count_ones();
        }
        return;
    }
    for i in 0..layout.n {
        let (x, y) = (layout.symbol(a, i) as usize, layout.symbol(b, i) as usize);
        out[x * cols + y] += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookSidecar {
    pub format: String,
    pub version: u16,
    pub joint: JointSource,
}

const DENSE_INDEX_MAX_BITS: u32 = 26;

#[derive(Debug)]
enum ContentIndex {
    Sorted(Vec<u32>),
    /// `order[offsets[v]..offsets[v + 1]]` holds the indices whose word is `v`.
    Dense {
        offsets: Vec<u32>,
        order: Vec<u32>,
    },
}

#[derive(Debug)]
pub struct Codebook {
    n: usize,
    u_alphabet: usize,
    tilde_bits: u32,
    prime_bits: u32,
    seed: u64,
    joint: JointSource,
    layout: Layout,
    data: Vec<u64>,
    sorted: OnceLock<ContentIndex>,
}

impl PartialEq for Codebook {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.u_alphabet == other.u_alphabet
            && self.tilde_bits == other.tilde_bits
            && self.prime_bits == other.prime_bits
            && self.seed == other.seed
            && self.joint == other.joint
            && self.data == other.data
    }
}

pub fn make_codebook(params: &BinningParams, seed: u64, cap_bits: u32) -> Result<Codebook> {
    let (tilde_bits, prime_bits) = (params.tilde_bits(), params.prime_bits());
    if tilde_bits > cap_bits {
        return Err(BinningError::CodebookTooLarge { bits: tilde_bits, cap: cap_bits });
    }
    let joint = params.joint.clone();
    let u_alphabet = joint.u_alphabet();
    let layout = Layout::new(params.n, u_alphabet);
    let count = 1usize << tilde_bits;
    let mut data = vec![0u64; count * layout.words];
    let sampler = Sampler::new(joint.pu().probs());
    let fast_binary = layout.bps == 1 && sampler.uniform_bits == Some(1);
    let chunk_len = 1usize << CHUNK_BITS;
    let mut seq = vec![0u8; params.n];
    for (c, chunk) in data.chunks_mut(chunk_len * layout.words).enumerate() {
        let mut rng = stream(seed, Purpose::Codebook, c as u64);
        for row in chunk.chunks_mut(layout.words) {
            if fast_binary {
                for (w, word) in row.iter_mut().enumerate() {
                    *word = rng.next_u64() & layout.binary_mask(w);
                }
            } else {
                seq.iter_mut().for_each(|s| *s = sampler.sample(&mut rng));
                layout.pack(&seq, row);
            }
        }
    }
    Ok(Codebook { n: params.n, u_alphabet, tilde_bits, prime_bits, seed, joint, layout, data, sorted: OnceLock::new() })
}

impl Codebook {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn u_alphabet(&self) -> usize {
        self.u_alphabet
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn joint(&self) -> &JointSource {
        &self.joint
    }

    pub fn tilde_bits(&self) -> u32 {
        self.tilde_bits
    }

    pub fn prime_bits(&self) -> u32 {
        self.prime_bits
    }

    pub fn num_sequences(&self) -> u64 {
        1 << self.tilde_bits
    }

    pub fn num_bins(&self) -> u64 {
        1 << self.prime_bits
    }

    pub fn bin_size(&self) -> u64 {
        1 << (self.tilde_bits - self.prime_bits)
    }

    pub fn flat_index(&self, m: u64, s: u64) -> u64 {
        m * self.bin_size() + s
    }

    pub fn split_index(&self, idx: u64) -> (u64, u64) {
        (idx / self.bin_size(), idx % self.bin_size())
    }

    fn words(&self, idx: u64) -> &[u64] {
        let w = self.layout.words;
        &self.data[idx as usize * w..(idx as usize + 1) * w]
    }

    pub fn sequence(&self, idx: u64) -> Vec<u8> {
        let words = self.words(idx);
        (0..self.n).map(|i| self.layout.symbol(words, i)).collect()
    }

    /// Validates a query sequence and packs it in the codebook layout when
    /// its symbols fit; otherwise returns an empty vector.
    fn pack_query(&self, seq: &[u8], alphabet: usize) -> Result<Vec<u64>> {
        if seq.len() != self.n {
            return Err(BinningError::LengthMismatch { expected: self.n, got: seq.len() });
        }
        if let Some(&s) = seq.iter().find(|&&s| s as usize >= alphabet) {
            return Err(InfoError::AlphabetMismatch { symbol: s as usize, alphabet }.into());
        }
        if alphabet > 1 << self.layout.bps {
            return Ok(Vec::new());
        }
        let mut out = vec![0u64; self.layout.words];
        self.layout.pack(seq, &mut out);
        Ok(out)
    }

    /// Codeword indices ordered by content, ties by index. Single-word
    /// layouts with a small content space get a counting-sort table.
    fn content_index(&self) -> &ContentIndex {
        self.sorted.get_or_init(|| {
            let content_bits = self.n as u32 * self.layout.bps;
            if self.layout.words == 1 && content_bits <= (self.tilde_bits + 2).min(DENSE_INDEX_MAX_BITS) {
                let mut offsets = vec![0u32; (1usize << content_bits) + 1];
                for &w in &self.data {
                    offsets[w as usize + 1] += 1;
                }
                for v in 1..offsets.len() {
                    offsets[v] += offsets[v - 1];
                }
                let mut next = offsets.clone();
                let mut order = vec![0u32; self.data.len()];
                for (i, &w) in self.data.iter().enumerate() {
                    order[next[w as usize] as usize] = i as u32;
                    next[w as usize] += 1;
                }
                ContentIndex::Dense { offsets, order }
            } else {
                let mut idx: Vec<u32> = (0..self.num_sequences() as u32).collect();
                idx.sort_unstable_by(|&a, &b| self.words(a as u64).cmp(self.words(b as u64)).then(a.cmp(&b)));
                ContentIndex::Sorted(idx)
            }
        })
    }

    /// All indices holding exactly `packed`, ascending.
    fn exact_matches(&self, packed: &[u64]) -> Vec<u64> {
        match self.content_index() {
            ContentIndex::Dense { offsets, order } => {
                let v = packed[0] as usize;
                if v + 1 >= offsets.len() {
                    return Vec::new();
                }
                order[offsets[v] as usize..offsets[v + 1] as usize].iter().map(|&i| i as u64).collect()
            }
            ContentIndex::Sorted(sorted) => {
                let lo = sorted.partition_point(|&i| self.words(i as u64) < packed);
                let hi = lo + sorted[lo..].partition_point(|&i| self.words(i as u64).cmp(packed) != Ordering::Greater);
                sorted[lo..hi].iter().map(|&i| i as u64).collect()
            }
        }
    }

    pub fn collision_stats(&self) -> CollisionStats {
        let distinct = match self.content_index() {
            ContentIndex::Dense { offsets, .. } => offsets.windows(2).filter(|w| w[1] > w[0]).count(),
            ContentIndex::Sorted(sorted) => {
                1 + sorted.windows(2).filter(|w| self.words(w[0] as u64) != self.words(w[1] as u64)).count()
            }
        };
        CollisionStats { sequences: self.num_sequences(), distinct: distinct as u64 }
    }

    pub fn sidecar(&self) -> CodebookSidecar {
        CodebookSidecar { format: "PABK".into(), version: FORMAT_VERSION, joint: self.joint.clone() }
    }

    /// Header then packed words, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(34 + self.data.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.u_alphabet as u32).to_le_bytes());
        out.extend_from_slice(&self.tilde_bits.to_le_bytes());
        out.extend_from_slice(&self.prime_bits.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for w in &self.data {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], sidecar: &CodebookSidecar) -> Result<Codebook> {
        let bad = |m: &str| BinningError::Format(m.to_string());
        if bytes.len() < 30 || &bytes[..4] != MAGIC {
            return Err(bad("missing PABK header"));
        }
        let u16_at = |o: usize| u16::from_le_bytes(bytes[o..o + 2].try_into().expect("2 bytes"));
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        if u16_at(4) != FORMAT_VERSION || sidecar.version != FORMAT_VERSION {
            return Err(bad("unsupported version"));
        }
        let (n, u_alphabet, tilde_bits, prime_bits) = (u32_at(6) as usize, u32_at(10) as usize, u32_at(14), u32_at(18));
        let seed = u64::from_le_bytes(bytes[22..30].try_into().expect("8 bytes"));
        if u_alphabet != sidecar.joint.u_alphabet() || prime_bits > tilde_bits || tilde_bits > 32 || n == 0 {
            return Err(bad("header inconsistent with sidecar"));
        }
        let layout = Layout::new(n, u_alphabet);
        let body = &bytes[30..];
        if body.len() != (1usize << tilde_bits) * layout.words * 8 {
            return Err(bad("payload length does not match header"));
        }
        let data = body.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Codebook {
            n,
            u_alphabet,
            tilde_bits,
            prime_bits,
            seed,
            joint: sidecar.joint.clone(),
            layout,
            data,
            sorted: OnceLock::new(),
        })
    }

    /// Writes `path` and a JSON sidecar next to it; returns the sidecar path.
    pub fn write_files(&self, path: &Path) -> Result<PathBuf> {
        std::fs::write(path, self.to_bytes())?;
        let side = sidecar_path(path);
        std::fs::write(&side, serde_json::to_vec_pretty(&self.sidecar()).map_err(|e| bad_json(&e))?)?;
        Ok(side)
    }

    pub fn read_files(path: &Path) -> Result<Codebook> {
        let side: CodebookSidecar =
            serde_json::from_slice(&std::fs::read(sidecar_path(path))?).map_err(|e| bad_json(&e))?;
        Codebook::from_bytes(&std::fs::read(path)?, &side)
    }
}

fn bad_json(e: &serde_json::Error) -> BinningError {
    BinningError::Format(e.to_string())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionStats {
    pub sequences: u64,
    pub distinct: u64,
}

impl CollisionStats {
    pub fn duplicates(&self) -> u64 {
        self.sequences - self.distinct
    }
}

/// `V = {X^n, Y_1^n, ..., Y_K^n}`; user `k` holds `Y_k^n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRealization {
    pub x: Vec<u8>,
    pub ys: Vec<Vec<u8>>,
}

pub fn ca_generate<R: RngCore + ?Sized>(joint: &JointSource, n: usize, k: usize, rng: &mut R) -> SourceRealization {
    let px = Sampler::new(joint.px().probs());
    let channel: Vec<Sampler> = joint.py_given_x().iter().map(|row| Sampler::new(row)).collect();
    let x: Vec<u8> = (0..n).map(|_| px.sample(rng)).collect();
    let ys = (0..k).map(|_| x.iter().map(|&xi| channel[xi as usize].sample(rng)).collect()).collect();
    SourceRealization { x, ys }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodeCase {
    Typical,
    /// No codeword was jointly typical with `X^n`; one was drawn from the
    /// whole codebook.
    Fallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeDiag {
    pub case: EncodeCase,
    pub candidates: u64,
}

fn choose<R: Rng + ?Sized>(cands: &[u64], rng: &mut R) -> u64 {
    cands[rng.gen_range(0..cands.len())]
}

/// Verifier encoder with precomputed typicality windows.
#[derive(Debug)]
pub struct Encoder<'a> {
    cb: &'a Codebook,
    window: TypicalityWindow,
    xu: JointDist,
    deterministic: Option<Vec<u8>>,
}

impl<'a> Encoder<'a> {
    pub fn new(cb: &'a Codebook, typ: &TypicalityParams) -> Encoder<'a> {
        let xu = cb.joint.joint_xu();
        Encoder {
            cb,
            window: TypicalityWindow::new(&xu, cb.n, typ.xi_prime),
            xu,
            deterministic: cb.joint.deterministic_u(),
        }
    }

    fn decide<R: Rng + ?Sized>(&self, cands: Vec<u64>, rng: &mut R) -> (u64, u64, EncodeDiag) {
        let (idx, diag) = if cands.is_empty() {
            (rng.gen_range(0..self.cb.num_sequences()), EncodeDiag { case: EncodeCase::Fallback, candidates: 0 })
        } else {
            (choose(&cands, rng), EncodeDiag { case: EncodeCase::Typical, candidates: cands.len() as u64 })
        };
        let (m, s) = self.cb.split_index(idx);
        (m, s, diag)
    }

    /// Typical codeword search by a full scan of the codebook.
    pub fn encode_scan<R: Rng + ?Sized>(&self, x: &[u8], rng: &mut R) -> Result<(u64, u64, EncodeDiag)> {
        let (rows, cols) = (self.xu.rows(), self.xu.cols());
        let binary = self.cb.layout.bps == 1 && rows == 2 && cols == 2;
        let packed_x = self.cb.pack_query(x, rows)?;
        let mut counts = vec![0u32; rows * cols];
        let mut cands = Vec::new();
        if self.window.is_satisfiable() {
            for idx in 0..self.cb.num_sequences() {
                let w = self.cb.words(idx);
                if binary {
                    pair_counts(&self.cb.layout, 2, 2, &packed_x, w, &mut counts);
                } else {
                    counts.iter_mut().for_each(|c| *c = 0);
                    for (i, &xi) in x.iter().enumerate() {
                        counts[xi as usize * cols + self.cb.layout.symbol(w, i) as usize] += 1;
                    }
                }
                if self.window.accepts(&counts) {
                    cands.push(idx);
                }
            }
        }
        Ok(self.decide(cands, rng))
    }

    /// Same result as [`Encoder::encode_scan`]. When `U = g(X)` the only
    /// possible typical codeword is `g(X^n)` itself, found by binary search.
    pub fn encode<R: Rng + ?Sized>(&self, x: &[u8], rng: &mut R) -> Result<(u64, u64, EncodeDiag)> {
        let Some(g) = &self.deterministic else {
            return self.encode_scan(x, rng);
        };
        if x.len() != self.cb.n {
            return Err(BinningError::LengthMismatch { expected: self.cb.n, got: x.len() });
        }
        if let Some(&s) = x.iter().find(|&&s| s as usize >= g.len()) {
            return Err(InfoError::AlphabetMismatch { symbol: s as usize, alphabet: g.len() }.into());
        }
        let u: Vec<u8> = x.iter().map(|&xi| g[xi as usize]).collect();
        let mut counts = vec![0u32; self.xu.rows() * self.xu.cols()];
        for (&xi, &ui) in x.iter().zip(&u) {
            counts[xi as usize * self.xu.cols() + ui as usize] += 1;
        }
        let cands = if self.window.accepts(&counts) {
            self.cb.exact_matches(&self.cb.pack_query(&u, self.cb.u_alphabet)?)
        } else {
            Vec::new()
        };
        Ok(self.decide(cands, rng))
    }
}

pub fn verifier_encode<R: Rng + ?Sized>(
    cb: &Codebook,
    x: &[u8],
    typ: &TypicalityParams,
    rng: &mut R,
) -> Result<(u64, u64, EncodeDiag)> {
    Encoder::new(cb, typ).encode(x, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeCase {
    Unique,
    Multiple,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeDiag {
    pub case: DecodeCase,
    pub candidates: u64,
}

/// Prover decoder with precomputed typicality windows.
#[derive(Debug)]
pub struct Decoder<'a> {
    cb: &'a Codebook,
    window: TypicalityWindow,
    uy: JointDist,
}

impl<'a> Decoder<'a> {
    pub fn new(cb: &'a Codebook, typ: &TypicalityParams) -> Decoder<'a> {
        let uy = cb.joint.joint_uy();
        Decoder { cb, window: TypicalityWindow::new(&uy, cb.n, typ.xi), uy }
    }

    pub fn decode<R: Rng + ?Sized>(&self, m: u64, y: &[u8], rng: &mut R) -> Result<(u64, DecodeDiag)> {
        if m >= self.cb.num_bins() {
            return Err(BinningError::BinIndexOutOfRange { m, num_bins: self.cb.num_bins() });
        }
        if y.len() != self.cb.n {
            return Err(BinningError::LengthMismatch { expected: self.cb.n, got: y.len() });
        }
        let ny = self.uy.cols();
        if let Some(&s) = y.iter().find(|&&s| s as usize >= ny) {
            return Err(InfoError::AlphabetMismatch { symbol: s as usize, alphabet: ny }.into());
        }
        let bin = self.cb.bin_size();
        let mut cands = Vec::new();
        if self.window.is_satisfiable() {
            let binary = self.cb.layout.bps == 1 && self.uy.rows() == 2 && ny == 2;
            let packed_y = self.cb.pack_query(y, ny)?;
            let mut counts = vec![0u32; self.uy.rows() * ny];
            for s in 0..bin {
                let w = self.cb.words(m * bin + s);
                if binary {
                    pair_counts(&self.cb.layout, 2, 2, w, &packed_y, &mut counts);
                } else {
                    counts.iter_mut().for_each(|c| *c = 0);
                    for (i, &yi) in y.iter().enumerate() {
                        counts[self.cb.layout.symbol(w, i) as usize * ny + yi as usize] += 1;
                    }
                }
                if self.window.accepts(&counts) {
                    cands.push(s);
                }
            }
        }
        Ok(match cands.len() {
            0 => (rng.gen_range(0..bin), DecodeDiag { case: DecodeCase::None, candidates: 0 }),
            1 => (cands[0], DecodeDiag { case: DecodeCase::Unique, candidates: 1 }),
            c => (choose(&cands, rng), DecodeDiag { case: DecodeCase::Multiple, candidates: c as u64 }),
        })
    }
}

pub fn prover_decode<R: Rng + ?Sized>(
    cb: &Codebook,
    m: u64,
    y: &[u8],
    typ: &TypicalityParams,
    rng: &mut R,
) -> Result<(u64, DecodeDiag)> {
    Decoder::new(cb, typ).decode(m, y, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub achieved: f64,
    pub capacity: f64,
    pub gap: f64,
}

/// Achieved `K H(Y|X)`, converse `K H(Y)`, gap `K I(X;Y)`.
pub fn asymptotic_key_rate(joint: &JointSource, k: usize) -> RateReport {
    let k = k as f64;
    let achieved = k * joint.h_y_given_x();
    let capacity = k * joint.h_y();
    RateReport { achieved, capacity, gap: (capacity - achieved).max(0.0) }
}
