//! Finite-size scheme: the secret is `a0 = f(0)` for a degree-`K`
//! polynomial `f`, each user holds one point of `f`, and the verifier
//! publishes `K` further points as the challenge.

use std::collections::HashMap;
use std::sync::OnceLock;

use num_bigint::BigUint;
use num_rational::Ratio;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldCtx, FieldDescriptor, FieldElem, FieldError};
use crate::info::{entropy_from_counts, fano_guess_bound};
use crate::poly::{eval_at_zero_direct, interpolate, EvalPoint, Poly, PolyError};

/// Default cap on the number of configurations an exact audit will visit.
pub const DEFAULT_AUDIT_BUDGET: u128 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemeError {
    #[error("field of order {order} is too small: need q^L >= {required} (q^L >= 2K+2)")]
    FieldTooSmall { order: u64, required: u64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("malformed verifier state: {0}")]
    MalformedV(String),
    #[error("enumeration needs {needed} configurations, budget is {budget}")]
    EnumerationBudgetExceeded { needed: u128, budget: u128 },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

pub type Result<T> = std::result::Result<T, SchemeError>;

/// A user key `c_k = (X_k, Y_k)`; `index` is 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyPoint {
    pub index: usize,
    pub point: EvalPoint,
}

/// What the verifier holds: `V = {a0, (X_1, Y_1), ..., (X_K, Y_K)}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifierState {
    pub a0: FieldElem,
    pub key_points: Vec<EvalPoint>,
}

impl VerifierState {
    pub fn k(&self) -> usize {
        self.key_points.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaOutput {
    pub field: FieldCtx,
    pub v: VerifierState,
    pub keys: Vec<KeyPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretS {
    pub s: FieldElem,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Challenge {
    pub session_id: String,
    pub points: Vec<EvalPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    pub fn is_accept(self) -> bool {
        self == Decision::Accept
    }
}

/// Smallest field order `ca_keygen` accepts for `k` users.
pub fn required_order(k: usize) -> u64 {
    2 * k as u64 + 2
}

pub fn ca_keygen<R: Rng + ?Sized>(field: &FieldCtx, k: usize, rng: &mut R) -> Result<CaOutput> {
    if k == 0 {
        return Err(SchemeError::InvalidParams("K must be at least 1".into()));
    }
    let required = required_order(k);
    if field.order() < required {
        return Err(SchemeError::FieldTooSmall { order: field.order(), required });
    }
    let xs = field.sample_distinct(k, &[FieldElem::ZERO], rng)?;
    let key_points: Vec<EvalPoint> = xs.into_iter().map(|x| EvalPoint::new(x, field.random(rng))).collect();
    let a0 = field.random(rng);
    let keys = key_points.iter().enumerate().map(|(i, &point)| KeyPoint { index: i + 1, point }).collect();
    Ok(CaOutput { field: field.clone(), v: VerifierState { a0, key_points }, keys })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChallengePolicy {
    /// The first challenge is stored and every later session replays it.
    #[default]
    Cached,
    /// A fresh point set per session. Leaks the polynomial to anyone who
    /// collects `K + 1` distinct points; only for demonstrating that.
    UnsafeFresh,
}

/// Verifier side of the protocol for one `V`.
#[derive(Debug)]
pub struct Verifier {
    field: FieldCtx,
    v: VerifierState,
    poly: Poly,
    policy: ChallengePolicy,
    cache: OnceLock<Vec<EvalPoint>>,
}

impl Verifier {
    pub fn new(field: &FieldCtx, v: VerifierState) -> Result<Verifier> {
        Verifier::with_policy(field, v, ChallengePolicy::Cached)
    }

    pub fn with_policy(field: &FieldCtx, v: VerifierState, policy: ChallengePolicy) -> Result<Verifier> {
        let k = v.k();
        if k == 0 {
            return Err(SchemeError::MalformedV("no key points".into()));
        }
        if field.order() < 2 * k as u64 + 1 {
            return Err(SchemeError::MalformedV(format!(
                "field of order {} cannot hold {k} keys and {k} challenge points",
                field.order()
            )));
        }
        field.check(v.a0)?;
        if v.key_points.iter().any(|p| p.x.is_zero()) {
            return Err(SchemeError::MalformedV("key abscissa 0 is reserved for the secret".into()));
        }
        let mut pts = Vec::with_capacity(k + 1);
        pts.push(EvalPoint::new(FieldElem::ZERO, v.a0));
        pts.extend_from_slice(&v.key_points);
        let poly = interpolate(field, &pts).map_err(|e| match e {
            PolyError::DuplicateAbscissa(x) => SchemeError::MalformedV(format!("repeated key abscissa {x}")),
            other => other.into(),
        })?;
        Ok(Verifier { field: field.clone(), v, poly, policy, cache: OnceLock::new() })
    }

    /// Verifier whose challenge cache is pre-filled, e.g. from an earlier
    /// process. The points must be a valid challenge for this `V`.
    pub fn with_cached_points(field: &FieldCtx, v: VerifierState, points: Vec<EvalPoint>) -> Result<Verifier> {
        let ver = Verifier::new(field, v)?;
        ver.validate_challenge_points(&points)?;
        ver.cache.set(points).expect("fresh cache");
        Ok(ver)
    }

    pub fn field(&self) -> &FieldCtx {
        &self.field
    }

    pub fn state(&self) -> &VerifierState {
        &self.v
    }

    pub fn polynomial(&self) -> &Poly {
        &self.poly
    }

    pub fn policy(&self) -> ChallengePolicy {
        self.policy
    }

    pub fn cached_points(&self) -> Option<&[EvalPoint]> {
        self.cache.get().map(Vec::as_slice)
    }

    fn validate_challenge_points(&self, points: &[EvalPoint]) -> Result<()> {
        if points.len() != self.v.k() {
            return Err(SchemeError::MalformedV(format!(
                "challenge has {} points, expected {}",
                points.len(),
                self.v.k()
            )));
        }
        let mut xs: Vec<FieldElem> = points.iter().map(|p| p.x).collect();
        xs.sort_unstable();
        xs.dedup();
        if xs.len() != points.len() {
            return Err(SchemeError::MalformedV("challenge abscissas repeat".into()));
        }
        for p in points {
            let reserved = p.x.is_zero() || self.v.key_points.iter().any(|k| k.x == p.x);
            if reserved || self.poly.eval(p.x)? != p.y {
                return Err(SchemeError::MalformedV(format!("challenge point ({}, {}) is not admissible", p.x, p.y)));
            }
        }
        Ok(())
    }

    fn fresh_points<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<EvalPoint> {
        let mut exclude = vec![FieldElem::ZERO];
        exclude.extend(self.v.key_points.iter().map(|p| p.x));
        self.field
            .sample_distinct(self.v.k(), &exclude, rng)
            .expect("order checked at construction")
            .into_iter()
            .map(|x| EvalPoint::new(x, self.poly.eval_unchecked(x)))
            .collect()
    }

    /// Issues a challenge. Under [`ChallengePolicy::Cached`] every call
    /// returns the same point set; only the session id changes.
    pub fn challenge<R: Rng + ?Sized>(&self, rng: &mut R) -> (SecretS, Challenge) {
        let points = match self.policy {
            ChallengePolicy::Cached => self.cache.get_or_init(|| self.fresh_points(rng)).clone(),
            ChallengePolicy::UnsafeFresh => self.fresh_points(rng),
        };
        let session_id = format!("{:016x}", rng.gen::<u64>());
        (SecretS { s: self.v.a0 }, Challenge { session_id, points })
    }
}

/// `S_hat = f(0)` from the challenge points plus the prover's own key.
pub fn prover_respond(field: &FieldCtx, key: &KeyPoint, challenge: &Challenge) -> Result<FieldElem> {
    let mut pts = Vec::with_capacity(challenge.points.len() + 1);
    pts.extend_from_slice(&challenge.points);
    pts.push(key.point);
    Ok(eval_at_zero_direct(field, &pts)?)
}

pub fn verify(s: SecretS, s_hat: FieldElem) -> Decision {
    if s.s == s_hat {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteRate {
    pub rate: f64,
    pub upper_bound: f64,
    pub gap: f64,
}

/// `R = K/2 + log_q C(q^L, K) / (2L)`, with an exact binomial.
pub fn finite_key_rate(q: u64, degree: u32, k: u64) -> Result<FiniteRate> {
    if q < 2 || degree == 0 || k == 0 {
        return Err(SchemeError::InvalidParams(format!("q = {q}, L = {degree}, K = {k}")));
    }
    let order = BigUint::from(q).pow(degree);
    if BigUint::from(k) > order {
        return Err(SchemeError::InvalidParams(format!("K = {k} exceeds q^L")));
    }
    let binom = binomial(&order, k);
    let log_q_binom = log2_big(&binom) / log2_big(&BigUint::from(q));
    let rate = k as f64 / 2.0 + log_q_binom / (2.0 * degree as f64);
    Ok(FiniteRate { rate, upper_bound: k as f64, gap: k as f64 - rate })
}

fn binomial(n: &BigUint, k: u64) -> BigUint {
    let mut acc = BigUint::one();
    for i in 0..k {
        // acc * (n - i) is divisible by i + 1 at every step.
        acc = acc * (n - BigUint::from(i)) / BigUint::from(i + 1);
    }
    acc
}

const LOG_FRAC_BITS: u32 = 96;
const LOG_OUT_BITS: u32 = 84;

/// Base-2 logarithm of a positive big integer, digit by digit from a
/// 96-bit mantissa.
fn log2_big(x: &BigUint) -> f64 {
    assert!(!x.is_zero());
    let bits = x.bits() as u32;
    let int_part = bits - 1;
    let shift = int_part as i64 - LOG_FRAC_BITS as i64;
    let mut m = if shift >= 0 { x >> shift as u64 } else { x << (-shift) as u64 };
    let two = BigUint::from(2u8) << LOG_FRAC_BITS;
    let mut frac = 0.0f64;
    let mut weight = 0.5f64;
    for _ in 0..LOG_OUT_BITS {
        m = (&m * &m) >> LOG_FRAC_BITS;
        if m >= two {
            m >>= 1u32;
            frac += weight;
        }
        weight /= 2.0;
    }
    int_part as f64 + frac
}

/// An information quantity with its exact rational value when one exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub exact: Option<RationalJson>,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalJson {
    pub num: u64,
    pub den: u64,
}

impl RationalJson {
    pub fn from_ratio(r: Ratio<u64>) -> Self {
        RationalJson { num: *r.numer(), den: *r.denom() }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackBound {
    #[serde(flatten)]
    pub exact: RationalJson,
    pub value: f64,
}

impl AttackBound {
    fn new(r: Ratio<u64>) -> Self {
        let exact = RationalJson::from_ratio(r);
        AttackBound { value: exact.value(), exact }
    }
}

/// Exact leakage figures of the finite scheme on a tiny field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub q: u64,
    #[serde(rename = "L")]
    pub degree: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub configurations: u64,
    /// `S` and `M` are independent, checked by exact cross-multiplication.
    pub s_m_independent: bool,
    #[serde(rename = "I_SM")]
    pub i_sm: Quantity,
    #[serde(rename = "I_MV")]
    pub i_mv: Quantity,
    /// `H(c_1 | M, c_2)`; absent when `K = 1`.
    #[serde(rename = "H_ci_given_M_ck")]
    pub h_ci_given_m_ck: Option<Quantity>,
    /// `H(c_1 | c_2)`; absent when `K = 1`.
    #[serde(rename = "H_ci_given_ck")]
    pub h_ci_given_ck: Option<Quantity>,
    /// Least and greatest success probability over every `g: M -> S`.
    pub attack_success_min: AttackBound,
    pub attack_success_max: AttackBound,
    /// `1 / q^L`, the success of a blind guess.
    pub blind_guess: AttackBound,
    /// Guessing bound of the Fano-type lemma with `alpha = 0` and
    /// `H(S) = log|S|`. Evaluates to `1 / log2(q^L)`, looser than `1 / q^L`.
    pub lemma_bound_alpha0: f64,
}

fn falling(n: u128, k: usize) -> u128 {
    (0..k as u128).map(|i| n.saturating_sub(i)).product()
}

/// Packs small field elements into one integer key.
struct Packer {
    base: u128,
}

impl Packer {
    fn key<I: IntoIterator<Item = FieldElem>>(&self, it: I) -> u128 {
        it.into_iter().fold(0u128, |acc, e| acc * self.base + e.value() as u128)
    }
}

/// Visits every ordered tuple of `k` distinct elements from `pool`.
fn for_each_arrangement<F: FnMut(&[FieldElem])>(pool: &[FieldElem], k: usize, f: &mut F) {
    fn go<F: FnMut(&[FieldElem])>(
        pool: &[FieldElem],
        used: &mut Vec<bool>,
        cur: &mut Vec<FieldElem>,
        k: usize,
        f: &mut F,
    ) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in 0..pool.len() {
            if !used[i] {
                used[i] = true;
                cur.push(pool[i]);
                go(pool, used, cur, k, f);
                cur.pop();
                used[i] = false;
            }
        }
    }
    go(pool, &mut vec![false; pool.len()], &mut Vec::with_capacity(k), k, f);
}

/// Visits every tuple in `field^k`.
fn for_each_tuple<F: FnMut(&[FieldElem])>(field: &FieldCtx, k: usize, f: &mut F) {
    let n = field.order();
    let mut idx = vec![0u64; k];
    loop {
        let tuple: Vec<FieldElem> = idx.iter().map(|&v| field.element(v).expect("in range")).collect();
        f(&tuple);
        let mut i = 0;
        loop {
            if i == k {
                return;
            }
            idx[i] += 1;
            if idx[i] < n {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Enumerates all CA and verifier randomness of the finite scheme and
/// computes the leakage quantities exactly.
///
/// Every configuration (ordered distinct nonzero `X`, `Y` tuple, `a0`,
/// ordered challenge abscissas) is equally likely. `M` is taken as the
/// sorted point set.
pub fn exact_leakage_audit(q: u64, degree: u32, k: usize, budget: u128) -> Result<AuditReport> {
    let field = crate::field::make_field(q, degree)?;
    let n = field.order();
    if k == 0 || n < 2 * k as u64 + 1 {
        return Err(SchemeError::InvalidParams(format!("GF({n}) cannot host K = {k} keys and {k} challenge points")));
    }
    let nn = n as u128;
    let needed = falling(nn - 1, k)
        .saturating_mul(nn.saturating_pow(k as u32 + 1))
        .saturating_mul(falling(nn - 1 - k as u128, k));
    if needed > budget {
        return Err(SchemeError::EnumerationBudgetExceeded { needed, budget });
    }
    // Largest packed key is (c_1, M, c_2): 2K + 4 elements.
    if (nn as f64).log2() * (2 * k + 4) as f64 >= 127.0 {
        return Err(SchemeError::InvalidParams("field too large to pack audit keys".into()));
    }
    let pk = Packer { base: nn };

    let mut s_count: HashMap<u128, u64> = HashMap::new();
    let mut m_count: HashMap<u128, u64> = HashMap::new();
    let mut sm_count: HashMap<(u128, u128), u64> = HashMap::new();
    let mut h_m_given_v = 0.0f64;
    let mut c2_count: HashMap<u128, u64> = HashMap::new();
    let mut c1c2_count: HashMap<u128, u64> = HashMap::new();
    let mut mc2_count: HashMap<u128, u64> = HashMap::new();
    let mut c1mc2_count: HashMap<u128, u64> = HashMap::new();
    let mut total = 0u64;

    let nonzero: Vec<FieldElem> = field.elements().skip(1).collect();
    let m_weight = falling(nn - 1 - k as u128, k) as u64;
    let mut err = None;

    for_each_arrangement(&nonzero, k, &mut |xs| {
        let free: Vec<FieldElem> = nonzero.iter().copied().filter(|e| !xs.contains(e)).collect();
        for_each_tuple(&field, k, &mut |ys| {
            for a0 in field.elements() {
                let mut pts = vec![EvalPoint::new(FieldElem::ZERO, a0)];
                pts.extend(xs.iter().zip(ys).map(|(&x, &y)| EvalPoint::new(x, y)));
                let f = match interpolate(&field, &pts) {
                    Ok(f) => f,
                    Err(e) => {
                        err.get_or_insert(e);
                        return;
                    }
                };
                let s_key = a0.value() as u128;
                let c1 = [pts[1].x, pts[1].y];
                let c2 = if k >= 2 { Some([pts[2].x, pts[2].y]) } else { None };
                let mut per_v: HashMap<u128, u64> = HashMap::new();
                for_each_arrangement(&free, k, &mut |ms| {
                    let mut mpts: Vec<EvalPoint> = ms.iter().map(|&x| EvalPoint::new(x, f.eval_unchecked(x))).collect();
                    mpts.sort_unstable();
                    let m_key = pk.key(mpts.iter().flat_map(|p| [p.x, p.y]));
                    total += 1;
                    *s_count.entry(s_key).or_default() += 1;
                    *m_count.entry(m_key).or_default() += 1;
                    *sm_count.entry((s_key, m_key)).or_default() += 1;
                    *per_v.entry(m_key).or_default() += 1;
                    if let Some(c2) = c2 {
                        let c2_key = pk.key(c2);
                        *c2_count.entry(c2_key).or_default() += 1;
                        *c1c2_count.entry(pk.key(c1.into_iter().chain(c2))).or_default() += 1;
                        let mc2 = pk.key(mpts.iter().flat_map(|p| [p.x, p.y]).chain(c2));
                        *mc2_count.entry(mc2).or_default() += 1;
                        let c1mc2 = pk.key(c1.into_iter().chain(mpts.iter().flat_map(|p| [p.x, p.y])).chain(c2));
                        *c1mc2_count.entry(c1mc2).or_default() += 1;
                    }
                });
                // Each V is equally likely and carries m_weight configurations.
                h_m_given_v += entropy_from_counts(per_v.into_values()) * m_weight as f64;
            }
        });
    });
    if let Some(e) = err {
        return Err(e.into());
    }
    h_m_given_v /= total as f64;

    let h = |m: &HashMap<u128, u64>| entropy_from_counts(m.values().copied());
    let h_s = h(&s_count);
    let h_m = h(&m_count);
    let h_sm = entropy_from_counts(sm_count.values().copied());

    let s_m_independent = sm_count.len() == s_count.len() * m_count.len()
        && sm_count.iter().all(|(&(s, m), &c)| c as u128 * total as u128 == s_count[&s] as u128 * m_count[&m] as u128);
    let i_sm = Quantity {
        exact: s_m_independent.then_some(RationalJson { num: 0, den: 1 }),
        value: if s_m_independent { 0.0 } else { (h_s + h_m - h_sm).max(0.0) },
    };
    let i_mv = Quantity { exact: None, value: (h_m - h_m_given_v).max(0.0) };

    let (h_ci_given_m_ck, h_ci_given_ck) = if k >= 2 {
        (
            Some(Quantity { exact: None, value: (h(&c1mc2_count) - h(&mc2_count)).max(0.0) }),
            Some(Quantity { exact: None, value: (h(&c1c2_count) - h(&c2_count)).max(0.0) }),
        )
    } else {
        (None, None)
    };

    // Success of g is sum_m P(m, g(m)), so the extremes decompose per m.
    let mut per_m: HashMap<u128, Vec<u64>> = HashMap::new();
    for (&(s, m), &c) in &sm_count {
        per_m.entry(m).or_insert_with(|| vec![0; n as usize])[s as usize] = c;
    }
    let best: u64 = per_m.values().map(|v| *v.iter().max().expect("nonempty")).sum();
    let worst: u64 = per_m.values().map(|v| *v.iter().min().expect("nonempty")).sum();

    let log_s = (n as f64).log2();
    Ok(AuditReport {
        q,
        degree,
        k,
        configurations: total,
        s_m_independent,
        i_sm,
        i_mv,
        h_ci_given_m_ck,
        h_ci_given_ck,
        attack_success_min: AttackBound::new(Ratio::new(worst, total)),
        attack_success_max: AttackBound::new(Ratio::new(best, total)),
        blind_guess: AttackBound::new(Ratio::new(1, n)),
        lemma_bound_alpha0: fano_guess_bound(0.0, log_s, h_s.min(log_s)).expect("valid entropies"),
    })
}

/// A point with coordinates as coefficient lists, constant term first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WirePoint {
    pub x: Vec<u64>,
    pub y: Vec<u64>,
}

impl WirePoint {
    pub fn encode(field: &FieldCtx, p: &EvalPoint) -> WirePoint {
        WirePoint { x: field.coeffs(p.x), y: field.coeffs(p.y) }
    }

    pub fn decode(&self, field: &FieldCtx) -> Result<EvalPoint> {
        Ok(EvalPoint::new(field.from_coeffs(&self.x)?, field.from_coeffs(&self.y)?))
    }
}

fn decode_points(field: &FieldCtx, pts: &[WirePoint]) -> Result<Vec<EvalPoint>> {
    pts.iter().map(|p| p.decode(field)).collect()
}

/// Per-user key file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyFile {
    pub field: FieldDescriptor,
    #[serde(rename = "K")]
    pub k: usize,
    pub k_index: usize,
    pub key: WirePoint,
}

impl KeyFile {
    pub fn decode(&self) -> Result<(FieldCtx, KeyPoint)> {
        let field = FieldCtx::try_from(self.field.clone())?;
        if self.k_index == 0 || self.k_index > self.k {
            return Err(SchemeError::InvalidParams(format!("key index {} outside 1..={}", self.k_index, self.k)));
        }
        let point = self.key.decode(&field)?;
        Ok((field, KeyPoint { index: self.k_index, point }))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierStateFile {
    pub field: FieldDescriptor,
    #[serde(rename = "K")]
    pub k: usize,
    pub a0: Vec<u64>,
    pub key_points: Vec<WirePoint>,
}

impl VerifierStateFile {
    pub fn decode(&self) -> Result<(FieldCtx, VerifierState)> {
        let field = FieldCtx::try_from(self.field.clone()).map_err(|e| SchemeError::MalformedV(e.to_string()))?;
        if self.key_points.len() != self.k {
            return Err(SchemeError::MalformedV(format!("{} key points for K = {}", self.key_points.len(), self.k)));
        }
        let a0 = field.from_coeffs(&self.a0).map_err(|e| SchemeError::MalformedV(e.to_string()))?;
        let key_points = decode_points(&field, &self.key_points).map_err(|e| SchemeError::MalformedV(e.to_string()))?;
        Ok((field, VerifierState { a0, key_points }))
    }
}

impl CaOutput {
    pub fn verifier_file(&self) -> VerifierStateFile {
        VerifierStateFile {
            field: self.field.descriptor(),
            k: self.v.k(),
            a0: self.field.coeffs(self.v.a0),
            key_points: self.v.key_points.iter().map(|p| WirePoint::encode(&self.field, p)).collect(),
        }
    }

    pub fn key_files(&self) -> Vec<KeyFile> {
        self.keys
            .iter()
            .map(|kp| KeyFile {
                field: self.field.descriptor(),
                k: self.v.k(),
                k_index: kp.index,
                key: WirePoint::encode(&self.field, &kp.point),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeMessage {
    pub session_id: String,
    pub points: Vec<WirePoint>,
}

impl ChallengeMessage {
    pub fn encode(field: &FieldCtx, c: &Challenge) -> ChallengeMessage {
        ChallengeMessage {
            session_id: c.session_id.clone(),
            points: c.points.iter().map(|p| WirePoint::encode(field, p)).collect(),
        }
    }

    pub fn decode(&self, field: &FieldCtx) -> Result<Challenge> {
        Ok(Challenge { session_id: self.session_id.clone(), points: decode_points(field, &self.points)? })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseMessage {
    pub session_id: String,
    pub s_hat: Vec<u64>,
}
