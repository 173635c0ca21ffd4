//! Discrete distributions, entropies and robust typicality.
//!
//! All logarithms are base 2.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probability vectors must sum to one within this.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Slack used when comparing empirical frequencies against typicality
/// windows, so that exact boundary hits are not lost to rounding.
const WINDOW_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    AlphabetMismatch { symbol: usize, alphabet: usize },
    #[error("sequence lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid entropy arguments: {0}")]
    InvalidEntropy(String),
}

pub type Result<T> = std::result::Result<T, InfoError>;

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Entropy of a probability vector, in bits.
pub fn entropy_bits(probs: &[f64]) -> f64 {
    -probs.iter().copied().map(plogp).sum::<f64>()
}

/// Entropy of the empirical distribution given by `counts`.
pub fn entropy_from_counts<I: IntoIterator<Item = u64>>(counts: I) -> f64 {
    let mut total = 0u64;
    let mut acc = 0.0;
    for c in counts {
        if c > 0 {
            total += c;
            acc += c as f64 * (c as f64).log2();
        }
    }
    if total == 0 {
        return 0.0;
    }
    ((total as f64).log2() - acc / total as f64).max(0.0)
}

fn validate_probs(probs: &[f64], what: &str) -> Result<()> {
    if probs.is_empty() {
        return Err(InfoError::InvalidDistribution(format!("{what} is empty")));
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(InfoError::InvalidDistribution(format!("{what} has entry {p}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(InfoError::InvalidDistribution(format!("{what} sums to {sum}")));
    }
    Ok(())
}

/// A distribution over `0..len`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Dist {
    probs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Dist {
    type Error = InfoError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Dist::new(v)
    }
}

impl From<Dist> for Vec<f64> {
    fn from(d: Dist) -> Self {
        d.probs
    }
}

impl Dist {
    pub fn new(probs: Vec<f64>) -> Result<Dist> {
        validate_probs(&probs, "distribution")?;
        Ok(Dist { probs })
    }

    pub fn uniform(size: usize) -> Dist {
        Dist { probs: vec![1.0 / size as f64; size] }
    }

    /// `P(1) = p`.
    pub fn bernoulli(p: f64) -> Result<Dist> {
        Dist::new(vec![1.0 - p, p])
    }

    pub fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.probs)
    }
}

/// A joint distribution of a pair `(A, B)`, row-major with rows indexed by `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDist {
    rows: usize,
    cols: usize,
    p: Vec<f64>,
}

impl JointDist {
    pub fn new(rows: usize, cols: usize, p: Vec<f64>) -> Result<JointDist> {
        if p.len() != rows * cols {
            return Err(InfoError::InvalidDistribution(format!("{} cells for a {rows}x{cols} table", p.len())));
        }
        validate_probs(&p, "joint distribution")?;
        Ok(JointDist { rows, cols, p })
    }

    /// `P(a, b) = P(a) P(b | a)`.
    pub fn from_channel(pa: &Dist, channel: &[Vec<f64>]) -> Result<JointDist> {
        if channel.len() != pa.alphabet_size() {
            return Err(InfoError::InvalidDistribution("channel rows do not match input".into()));
        }
        let cols = channel.first().map_or(0, Vec::len);
        let mut p = Vec::with_capacity(pa.alphabet_size() * cols);
        for (row, &pa) in channel.iter().zip(pa.probs()) {
            if row.len() != cols {
                return Err(InfoError::InvalidDistribution("ragged channel matrix".into()));
            }
            p.extend(row.iter().map(|&w| pa * w));
        }
        JointDist::new(pa.alphabet_size(), cols, p)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.p[a * self.cols + b]
    }

    pub fn cells(&self) -> &[f64] {
        &self.p
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.p.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.p.chunks(self.cols) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    pub fn transpose(&self) -> JointDist {
        let mut p = vec![0.0; self.p.len()];
        for a in 0..self.rows {
            for b in 0..self.cols {
                p[b * self.rows + a] = self.get(a, b);
            }
        }
        JointDist { rows: self.cols, cols: self.rows, p }
    }

    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.p)
    }

    /// `I(A;B) = H(A) + H(B) - H(A,B)`, clamped at 0 against rounding.
    pub fn mutual_information(&self) -> f64 {
        (entropy_bits(&self.row_marginal()) + entropy_bits(&self.col_marginal()) - self.entropy()).max(0.0)
    }

    /// `H(A | B)`.
    pub fn entropy_rows_given_cols(&self) -> f64 {
        (self.entropy() - entropy_bits(&self.col_marginal())).max(0.0)
    }

    /// `H(B | A)`.
    pub fn entropy_cols_given_rows(&self) -> f64 {
        (self.entropy() - entropy_bits(&self.row_marginal())).max(0.0)
    }
}

/// `P(u, x, y) = P(x) P(y|x) P(u|x)`, so `U -> X -> Y` by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointSourceSpec", into = "JointSourceFull")]
pub struct JointSource {
    px: Dist,
    py_given_x: Vec<Vec<f64>>,
    pu_given_x: Vec<Vec<f64>>,
}

/// Accepted config forms: the full matrices, or a binary symmetric channel
/// shorthand.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum JointSourceSpec {
    Full(JointSourceFull),
    Bsc {
        bsc: BscSpec,
        #[serde(default = "default_true")]
        u_equals_x: bool,
        #[serde(default)]
        pu_given_x: Option<Vec<Vec<f64>>>,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSourceFull {
    pub px: Vec<f64>,
    pub py_given_x: Vec<Vec<f64>>,
    pub pu_given_x: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BscSpec {
    pub p_x1: f64,
    pub epsilon: f64,
}

impl TryFrom<JointSourceSpec> for JointSource {
    type Error = InfoError;

    fn try_from(spec: JointSourceSpec) -> Result<Self> {
        match spec {
            JointSourceSpec::Full(f) => JointSource::new(Dist::new(f.px)?, f.py_given_x, f.pu_given_x),
            JointSourceSpec::Bsc { bsc, u_equals_x, pu_given_x } => {
                let base = JointSource::bsc(bsc.p_x1, bsc.epsilon)?;
                match (u_equals_x, pu_given_x) {
                    (_, Some(pu)) => JointSource::new(base.px, base.py_given_x, pu),
                    (true, None) => Ok(base),
                    (false, None) => {
                        Err(InfoError::InvalidDistribution("u_equals_x = false requires pu_given_x".into()))
                    }
                }
            }
        }
    }
}

impl From<JointSource> for JointSourceFull {
    fn from(s: JointSource) -> Self {
        JointSourceFull { px: s.px.probs, py_given_x: s.py_given_x, pu_given_x: s.pu_given_x }
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

impl JointSource {
    pub fn new(px: Dist, py_given_x: Vec<Vec<f64>>, pu_given_x: Vec<Vec<f64>>) -> Result<JointSource> {
        for (name, m) in [("py_given_x", &py_given_x), ("pu_given_x", &pu_given_x)] {
            if m.len() != px.alphabet_size() {
                return Err(InfoError::InvalidDistribution(format!(
                    "{name} has {} rows, expected {}",
                    m.len(),
                    px.alphabet_size()
                )));
            }
            let width = m[0].len();
            for row in m {
                if row.len() != width {
                    return Err(InfoError::InvalidDistribution(format!("{name} is ragged")));
                }
                validate_probs(row, name)?;
            }
            if width > 256 {
                return Err(InfoError::InvalidDistribution(format!("{name} alphabet exceeds 256")));
            }
        }
        if px.alphabet_size() > 256 {
            return Err(InfoError::InvalidDistribution("X alphabet exceeds 256".into()));
        }
        Ok(JointSource { px, py_given_x, pu_given_x })
    }

    /// `X ~ Bern(p_x1)`, `Y = X xor Bern(epsilon)`, `U = X`.
    pub fn bsc(p_x1: f64, epsilon: f64) -> Result<JointSource> {
        let px = Dist::bernoulli(p_x1)?;
        let ch = vec![vec![1.0 - epsilon, epsilon], vec![epsilon, 1.0 - epsilon]];
        JointSource::new(px, ch, identity(2))
    }

    /// Same source with `U = X`.
    pub fn with_u_equals_x(self) -> JointSource {
        let n = self.px.alphabet_size();
        JointSource { pu_given_x: identity(n), ..self }
    }

    pub fn px(&self) -> &Dist {
        &self.px
    }

    pub fn py_given_x(&self) -> &[Vec<f64>] {
        &self.py_given_x
    }

    pub fn pu_given_x(&self) -> &[Vec<f64>] {
        &self.pu_given_x
    }

    pub fn x_alphabet(&self) -> usize {
        self.px.alphabet_size()
    }

    pub fn y_alphabet(&self) -> usize {
        self.py_given_x[0].len()
    }

    pub fn u_alphabet(&self) -> usize {
        self.pu_given_x[0].len()
    }

    pub fn joint_xy(&self) -> JointDist {
        JointDist::from_channel(&self.px, &self.py_given_x).expect("validated at construction")
    }

    /// Rows `x`, columns `u`.
    pub fn joint_xu(&self) -> JointDist {
        JointDist::from_channel(&self.px, &self.pu_given_x).expect("validated at construction")
    }

    /// Rows `u`, columns `y`.
    pub fn joint_uy(&self) -> JointDist {
        let (nu, ny) = (self.u_alphabet(), self.y_alphabet());
        let mut p = vec![0.0; nu * ny];
        for (x, &px) in self.px.probs().iter().enumerate() {
            for u in 0..nu {
                for y in 0..ny {
                    p[u * ny + y] += px * self.pu_given_x[x][u] * self.py_given_x[x][y];
                }
            }
        }
        renormalized(nu, ny, p)
    }

    pub fn pu(&self) -> Dist {
        Dist { probs: self.joint_xu().col_marginal() }
    }

    pub fn py(&self) -> Dist {
        Dist { probs: self.joint_xy().col_marginal() }
    }

    pub fn i_ux(&self) -> f64 {
        self.joint_xu().mutual_information()
    }

    pub fn i_uy(&self) -> f64 {
        self.joint_uy().mutual_information()
    }

    /// `mu = I(X;Y)`.
    pub fn i_xy(&self) -> f64 {
        self.joint_xy().mutual_information()
    }

    pub fn h_y(&self) -> f64 {
        self.py().entropy()
    }

    pub fn h_y_given_x(&self) -> f64 {
        self.joint_xy().entropy_cols_given_rows()
    }

    /// `I(U;Y|X) = H(U,X) + H(X,Y) - H(U,X,Y) - H(X)`; zero for a Markov chain.
    pub fn i_uy_given_x(&self) -> f64 {
        let mut full = Vec::new();
        for (x, &px) in self.px.probs().iter().enumerate() {
            for &pu in &self.pu_given_x[x] {
                for &py in &self.py_given_x[x] {
                    full.push(px * pu * py);
                }
            }
        }
        self.joint_xu().entropy() + self.joint_xy().entropy() - entropy_bits(&full) - self.px.entropy()
    }

    /// If `U` is a deterministic function `g(X)`, returns `g` as a table.
    pub fn deterministic_u(&self) -> Option<Vec<u8>> {
        self.pu_given_x
            .iter()
            .map(|row| {
                let mut hit = None;
                for (u, &p) in row.iter().enumerate() {
                    if p == 1.0 {
                        hit = Some(u as u8);
                    } else if p != 0.0 {
                        return None;
                    }
                }
                hit
            })
            .collect()
    }
}

fn renormalized(rows: usize, cols: usize, mut p: Vec<f64>) -> JointDist {
    // Products of validated rows can drift from 1 by a few ulps.
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    JointDist { rows, cols, p }
}

/// Prover-side `xi` and verifier-side `xi_prime` tolerances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypicalityParams {
    pub xi: f64,
    pub xi_prime: f64,
}

impl TypicalityParams {
    pub fn new(xi: f64, xi_prime: f64) -> Result<TypicalityParams> {
        if !(xi > xi_prime && xi_prime > 0.0 && xi.is_finite()) {
            return Err(InfoError::InvalidDistribution(format!(
                "typicality needs xi > xi' > 0, got xi = {xi}, xi' = {xi_prime}"
            )));
        }
        Ok(TypicalityParams { xi, xi_prime })
    }
}

fn frequency_ok(count: u64, n: usize, p: f64, xi: f64) -> bool {
    if p == 0.0 {
        return count == 0;
    }
    (count as f64 / n as f64 - p).abs() <= xi * p + WINDOW_EPS
}

/// Robust typicality: `|freq(a) - p(a)| <= xi * p(a)` for every symbol.
pub fn is_typical(seq: &[u8], d: &Dist, xi: f64) -> Result<bool> {
    let mut counts = vec![0u64; d.alphabet_size()];
    for &s in seq {
        let s = s as usize;
        *counts.get_mut(s).ok_or(InfoError::AlphabetMismatch { symbol: s, alphabet: d.alphabet_size() })? += 1;
    }
    if seq.is_empty() {
        return Ok(false);
    }
    Ok(counts.iter().zip(d.probs()).all(|(&c, &p)| frequency_ok(c, seq.len(), p, xi)))
}

/// Robust typicality of the pair sequence over the product alphabet.
pub fn is_jointly_typical(a: &[u8], b: &[u8], joint: &JointDist, xi: f64) -> Result<bool> {
    if a.len() != b.len() {
        return Err(InfoError::LengthMismatch { left: a.len(), right: b.len() });
    }
    let mut counts = vec![0u64; joint.rows * joint.cols];
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as usize, y as usize);
        if x >= joint.rows {
            return Err(InfoError::AlphabetMismatch { symbol: x, alphabet: joint.rows });
        }
        if y >= joint.cols {
            return Err(InfoError::AlphabetMismatch { symbol: y, alphabet: joint.cols });
        }
        counts[x * joint.cols + y] += 1;
    }
    if a.is_empty() {
        return Ok(false);
    }
    Ok(counts.iter().zip(&joint.p).all(|(&c, &p)| frequency_ok(c, a.len(), p, xi)))
}

/// Precomputed per-cell count windows for joint typicality at a fixed
/// block length. Same predicate as [`is_jointly_typical`], but checks a
/// count table in `O(cells)`.
#[derive(Clone, Debug)]
pub struct TypicalityWindow {
    n: usize,
    cols: usize,
    lo: Vec<u32>,
    hi: Vec<u32>,
}

impl TypicalityWindow {
    pub fn new(joint: &JointDist, n: usize, xi: f64) -> TypicalityWindow {
        let mut lo = Vec::with_capacity(joint.p.len());
        let mut hi = Vec::with_capacity(joint.p.len());
        for &p in &joint.p {
            let allowed: Vec<u32> =
                (0..=n as u64).filter(|&c| n > 0 && frequency_ok(c, n, p, xi)).map(|c| c as u32).collect();
            match (allowed.first(), allowed.last()) {
                (Some(&a), Some(&b)) => {
                    lo.push(a);
                    hi.push(b);
                }
                _ => {
                    lo.push(1);
                    hi.push(0);
                }
            }
        }
        TypicalityWindow { n, cols: joint.cols, lo, hi }
    }

    pub fn block_length(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `false` when some cell admits no count at all, so nothing of this
    /// length can be typical.
    pub fn is_satisfiable(&self) -> bool {
        self.lo.iter().zip(&self.hi).all(|(l, h)| l <= h)
    }

    pub fn accepts(&self, counts: &[u32]) -> bool {
        counts.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&c, (&l, &h))| l <= c && c <= h)
    }
}

/// Lemma-style guessing bound: if `I(U;Q) < alpha` then any guess `g(Q)`
/// hits `U` with probability at most
/// `(1 + alpha + log|U| - H(U)) / log|U|`, clamped to `[0, 1]`.
pub fn fano_guess_bound(alpha: f64, log_card_u: f64, h_u: f64) -> Result<f64> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(InfoError::InvalidEntropy(format!("alpha = {alpha}")));
    }
    if !(log_card_u > 0.0 && log_card_u.is_finite()) {
        return Err(InfoError::InvalidEntropy(format!("log|U| = {log_card_u}")));
    }
    if !(h_u >= 0.0 && h_u <= log_card_u + SUM_TOLERANCE) {
        return Err(InfoError::InvalidEntropy(format!("H(U) = {h_u} with log|U| = {log_card_u}")));
    }
    Ok(((1.0 + alpha + log_card_u - h_u) / log_card_u).clamp(0.0, 1.0))
}

/// Plug-in mutual information of the empirical joint of `samples`.
pub fn plugin_mi_estimate(samples: &[(u64, u64)]) -> f64 {
    let mut joint: HashMap<(u64, u64), u64> = HashMap::new();
    let mut left: HashMap<u64, u64> = HashMap::new();
    let mut right: HashMap<u64, u64> = HashMap::new();
    for &(a, b) in samples {
        *joint.entry((a, b)).or_default() += 1;
        *left.entry(a).or_default() += 1;
        *right.entry(b).or_default() += 1;
    }
    let hl = entropy_from_counts(left.into_values());
    let hr = entropy_from_counts(right.into_values());
    let hj = entropy_from_counts(joint.into_values());
    (hl + hr - hj).max(0.0)
}

/// Plug-in mutual information with per-sample weights (weights need not
/// be normalized).
pub fn plugin_mi_weighted(samples: &[((u64, u64), f64)]) -> f64 {
    let total: f64 = samples.iter().map(|s| s.1).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut joint: HashMap<(u64, u64), f64> = HashMap::new();
    let mut left: HashMap<u64, f64> = HashMap::new();
    let mut right: HashMap<u64, f64> = HashMap::new();
    for &((a, b), w) in samples {
        *joint.entry((a, b)).or_default() += w / total;
        *left.entry(a).or_default() += w / total;
        *right.entry(b).or_default() += w / total;
    }
    fn h<K>(m: HashMap<K, f64>) -> f64 {
        entropy_bits(&m.into_values().collect::<Vec<_>>())
    }
    (h(left) + h(right) - h(joint)).max(0.0)
}

/// Plug-in mutual information of a dense `rows x cols` count table.
pub fn plugin_mi_from_table(counts: &[u32], rows: usize, cols: usize) -> f64 {
    assert_eq!(counts.len(), rows * cols);
    let mut rsum = vec![0u64; rows];
    let mut csum = vec![0u64; cols];
    for (i, row) in counts.chunks(cols).enumerate() {
        for (j, &c) in row.iter().enumerate() {
            rsum[i] += c as u64;
            csum[j] += c as u64;
        }
    }
    let hj = entropy_from_counts(counts.iter().map(|&c| c as u64));
    (entropy_from_counts(rsum) + entropy_from_counts(csum) - hj).max(0.0)
}

/// The slack function `phi(xi)` added to or subtracted from the coding
/// rates. It must vanish as `xi -> 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateSlack {
    /// `phi(xi) = xi * H(pair)`, with the pair the one being tested.
    #[default]
    ScaledEntropy,
    /// `phi = 0`: rates sit exactly on the information quantities.
    Zero,
    /// `phi(xi) = coef * xi`.
    Linear { coef: f64 },
}

impl RateSlack {
    pub fn phi(&self, xi: f64, pair_entropy: f64) -> f64 {
        match *self {
            RateSlack::ScaledEntropy => xi * pair_entropy,
            RateSlack::Zero => 0.0,
            RateSlack::Linear { coef } => coef * xi,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent binary entropy, natural logs converted at the end.
    fn h2(p: f64) -> f64 {
        -(p * p.ln() + (1.0 - p) * (1.0 - p).ln()) / std::f64::consts::LN_2
    }

    #[test]
    fn basic_entropies() {
        assert!((Dist::uniform(2).entropy() - 1.0).abs() < 1e-15);
        let indep = JointDist::new(2, 2, vec![0.25; 4]).unwrap();
        assert!(indep.mutual_information().abs() < 1e-15);
        let bsc = JointSource::bsc(0.5, 0.1).unwrap();
        assert!((bsc.i_xy() - (1.0 - h2(0.1))).abs() < 1e-12);
        assert!((bsc.i_xy() - 0.53100).abs() < 5e-6);
    }

    #[test]
    fn distribution_validation() {
        assert!(Dist::new(vec![0.5, 0.4]).is_err());
        assert!(Dist::new(vec![1.5, -0.5]).is_err());
        assert!(Dist::new(vec![]).is_err());
        assert!(JointSource::new(Dist::uniform(2), vec![vec![1.0, 0.0]], vec![vec![1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn typicality_examples() {
        let b = Dist::uniform(2);
        assert!(is_typical(&[0, 0, 1, 1], &b, 0.1).unwrap());
        assert!(!is_typical(&[0, 0, 0, 1], &b, 0.1).unwrap());
        let skewed = Dist::new(vec![1.0, 0.0]).unwrap();
        assert!(!is_typical(&[0, 0, 1], &skewed, 0.5).unwrap());
        assert!(matches!(is_typical(&[0, 3], &b, 0.1), Err(InfoError::AlphabetMismatch { symbol: 3, .. })));
    }

    #[test]
    fn joint_typicality_examples() {
        let diag = JointDist::new(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let a = [0u8, 1, 1, 0, 1, 0, 0, 1];
        assert!(is_jointly_typical(&a, &a, &diag, 0.1).unwrap());
        let comp: Vec<u8> = a.iter().map(|v| 1 - v).collect();
        assert!(!is_jointly_typical(&a, &comp, &diag, 0.1).unwrap());
        assert!(matches!(
            is_jointly_typical(&a, &a[..3], &diag, 0.1),
            Err(InfoError::LengthMismatch { left: 8, right: 3 })
        ));
    }

    #[test]
    fn window_agrees_with_direct_check() {
        let joint = JointSource::bsc(0.3, 0.1).unwrap().joint_xy();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [8usize, 17, 24, 40] {
            let w = TypicalityWindow::new(&joint, n, 0.2);
            for _ in 0..2000 {
                let a: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.3) as u8).collect();
                let b: Vec<u8> = a.iter().map(|&x| x ^ rng.gen_bool(0.1) as u8).collect();
                let mut counts = [0u32; 4];
                for (&x, &y) in a.iter().zip(&b) {
                    counts[(x * 2 + y) as usize] += 1;
                }
                assert_eq!(w.accepts(&counts), is_jointly_typical(&a, &b, &joint, 0.2).unwrap());
            }
        }
    }

    fn ln_factorial(n: u64) -> f64 {
        (1..=n).map(|k| (k as f64).ln()).sum()
    }

    fn within_window(c: u64, n: u64, p: f64, xi: f64) -> bool {
        (c as f64 / n as f64 - p).abs() <= xi * p + 1e-12
    }

    /// Exact probability that a BSC(eps) pair sequence with uniform input is
    /// jointly typical, summed over the multinomial type classes.
    fn exact_bsc_joint_typical(n: u64, eps: f64, xi: f64) -> f64 {
        let (pd, po) = ((1.0 - eps) / 2.0, eps / 2.0);
        let lf: Vec<f64> = (0..=n).map(ln_factorial).collect();
        let mut total = 0.0;
        for a in (0..=n).filter(|&a| within_window(a, n, po, xi)) {
            for b in (0..=n - a).filter(|&b| within_window(b, n, po, xi)) {
                for c in (0..=n - a - b).filter(|&c| within_window(c, n, pd, xi)) {
                    let d = n - a - b - c;
                    if within_window(d, n, pd, xi) {
                        let l = lf[n as usize] - lf[a as usize] - lf[b as usize] - lf[c as usize] - lf[d as usize]
                            + (a + b) as f64 * po.ln()
                            + (c + d) as f64 * pd.ln();
                        total += l.exp();
                    }
                }
            }
        }
        total
    }

    fn exact_bernoulli_typical(n: u64, p: f64, xi: f64) -> f64 {
        let lf: Vec<f64> = (0..=n).map(ln_factorial).collect();
        (0..=n)
            .filter(|&c| within_window(c, n, p, xi) && within_window(n - c, n, 1.0 - p, xi))
            .map(|c| {
                (lf[n as usize] - lf[c as usize] - lf[(n - c) as usize]
                    + c as f64 * p.ln()
                    + (n - c) as f64 * (1.0 - p).ln())
                .exp()
            })
            .sum()
    }

    fn assert_within_4_sigma(hits: usize, trials: usize, p: f64) {
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        let freq = hits as f64 / trials as f64;
        assert!((freq - p).abs() <= 4.0 * sigma, "{freq} vs {p}");
    }

    // At n = 1000 the off-diagonal cells only tolerate counts in [40, 60],
    // so the joint typical probability is about 0.76, not close to 1.
    #[test]
    fn bsc_joint_typicality_matches_multinomial_oracle() {
        let joint = JointSource::bsc(0.5, 0.1).unwrap().joint_xy();
        let exact = exact_bsc_joint_typical(1000, 0.1, 0.2);
        assert!((exact - 0.76252).abs() < 1e-4, "{exact}");
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (n, trials) = (1000, 10_000);
        let hits = (0..trials)
            .filter(|_| {
                let a: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.5) as u8).collect();
                let b: Vec<u8> = a.iter().map(|&x| x ^ rng.gen_bool(0.1) as u8).collect();
                is_jointly_typical(&a, &b, &joint, 0.2).unwrap()
            })
            .count();
        assert_within_4_sigma(hits, trials, exact);
    }

    #[test]
    fn bernoulli_typicality_matches_binomial_oracle() {
        let d = Dist::bernoulli(0.3).unwrap();
        let exact = exact_bernoulli_typical(1000, 0.3, 0.1);
        assert!((exact - 0.96475).abs() < 1e-4, "{exact}");
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let trials = 10_000;
        let hits = (0..trials)
            .filter(|_| {
                let s: Vec<u8> = (0..1000).map(|_| rng.gen_bool(0.3) as u8).collect();
                is_typical(&s, &d, 0.1).unwrap()
            })
            .count();
        assert_within_4_sigma(hits, trials, exact);
        // the typical set does concentrate, just more slowly at this tolerance
        assert!(exact_bernoulli_typical(10_000, 0.3, 0.1) > 0.99999);
    }

    #[test]
    fn fano_bound_examples() {
        let log_u = 8.0 * 101f64.log2();
        assert!((fano_guess_bound(0.0, log_u, log_u).unwrap() - 1.0 / log_u).abs() < 1e-15);
        assert_eq!(fano_guess_bound(log_u, log_u, log_u).unwrap(), 1.0);
        assert!(fano_guess_bound(-1.0, 1.0, 0.5).is_err());
        assert!(fano_guess_bound(0.0, 1.0, 1.5).is_err());
    }

    /// Exhaustive check of the bound over all g: Q -> U on random joints
    /// with |Q| = 3, |U| = 2.
    #[test]
    fn fano_bound_holds_against_every_guess_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let raw: Vec<f64> = (0..6).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            // rows q, columns u
            let j = JointDist::new(3, 2, raw.iter().map(|v| v / s).collect()).unwrap();
            let h_u = entropy_bits(&j.col_marginal());
            let bound = fano_guess_bound(j.mutual_information(), 1.0, h_u).unwrap();
            for g in 0..8u32 {
                let hit: f64 = (0..3).map(|q| j.get(q, ((g >> q) & 1) as usize)).sum();
                assert!(hit <= bound, "g = {g}: {hit} > {bound}");
            }
        }
    }

    #[test]
    fn plugin_mi_examples() {
        assert_eq!(plugin_mi_estimate(&[(3, 4); 50]), 0.0);
        let j = JointSource::bsc(0.3, 0.2).unwrap().joint_xy();
        let weighted: Vec<_> = (0..2u64)
            .flat_map(|a| (0..2u64).map(move |b| (a, b)))
            .map(|(a, b)| ((a, b), j.get(a as usize, b as usize)))
            .collect();
        assert!((plugin_mi_weighted(&weighted) - j.mutual_information()).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<(u64, u64)> = (0..100_000).map(|_| (rng.gen_range(0..32), rng.gen_range(0..32))).collect();
        let est = plugin_mi_estimate(&samples);
        // bias is about (32*32 - 1) / (2 N ln 2) ~ 0.0074
        assert!(est <= 0.02, "{est}");

        let mut table = vec![0u32; 32 * 32];
        for &(a, b) in &samples {
            table[(a * 32 + b) as usize] += 1;
        }
        assert!((plugin_mi_from_table(&table, 32, 32) - est).abs() < 1e-12);
    }

    #[test]
    fn joint_source_config_forms() {
        let full: JointSource =
            serde_json::from_str(r#"{"px":[0.5,0.5],"py_given_x":[[0.9,0.1],[0.1,0.9]],"pu_given_x":[[1,0],[0,1]]}"#)
                .unwrap();
        let short: JointSource =
            serde_json::from_str(r#"{"bsc":{"p_x1":0.5,"epsilon":0.1},"u_equals_x":true}"#).unwrap();
        assert_eq!(full, short);
        assert_eq!(short.deterministic_u(), Some(vec![0, 1]));
        let round: JointSource = serde_json::from_str(&serde_json::to_string(&short).unwrap()).unwrap();
        assert_eq!(round, short);
        assert!(
            serde_json::from_str::<JointSource>(r#"{"bsc":{"p_x1":0.5,"epsilon":0.1},"u_equals_x":false}"#).is_err()
        );
    }

    #[test]
    fn slack_functions() {
        assert_eq!(RateSlack::ScaledEntropy.phi(0.1, 2.0), 0.2);
        assert_eq!(RateSlack::Zero.phi(0.1, 2.0), 0.0);
        assert_eq!(RateSlack::Linear { coef: 3.0 }.phi(0.1, 2.0), 0.30000000000000004);
    }

    fn random_source(rng: &mut ChaCha8Rng) -> JointSource {
        let mut row = |n: usize| {
            let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let s: f64 = v.iter().sum();
            let mut v: Vec<f64> = v.iter().map(|x| x / s).collect();
            // force an exact unit sum
            let tail: f64 = v[..n - 1].iter().sum();
            v[n - 1] = 1.0 - tail;
            v
        };
        let (nx, ny, nu) = (3, 4, 2);
        let px = row(nx);
        let pyx = (0..nx).map(|_| row(ny)).collect();
        let pux = (0..nx).map(|_| row(nu)).collect();
        JointSource::new(Dist::new(px).unwrap(), pyx, pux).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn entropy_inequalities_and_markov(seed in any::<u64>()) {
            let src = random_source(&mut ChaCha8Rng::seed_from_u64(seed));
            let xy = src.joint_xy();
            let hx = entropy_bits(&xy.row_marginal());
            let hx_y = xy.entropy_rows_given_cols();
            prop_assert!(hx_y >= -1e-12 && hx_y <= hx + 1e-12);
            let i1 = xy.mutual_information();
            let i2 = xy.transpose().mutual_information();
            prop_assert!((i1 - i2).abs() < 1e-12);
            prop_assert!(i1 >= 0.0);
            prop_assert!(src.i_uy_given_x().abs() < 1e-12);
            prop_assert!(src.i_uy() <= src.i_ux() + 1e-12);
        }
    }
}
