//! Arithmetic in GF(q^L).
//!
//! An element is stored as the integer whose base-`q` digits (least
//! significant first) are its coefficients in the polynomial basis
//! `1, x, ..., x^(L-1)`. That packing is a bijection onto `0..q^L`, so a
//! [`FieldElem`] is a plain `u64` and canonical by construction.
//!
//! Extension fields reduce modulo the lexicographically smallest monic
//! irreducible polynomial of degree `L`, where polynomials are ordered by their
//! coefficient vector read from `x^(L-1)` down to the constant term. Two builds
//! therefore always agree on the representation.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest extension degree representable: `2^63 < 2^64`.
const MAX_DIGITS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("characteristic {0} is not prime")]
    NonPrimeCharacteristic(u64),
    #[error("extension degree {degree} is out of range for q = {q} (need L >= 1 and q^L < 2^64)")]
    DegreeOutOfRange { q: u64, degree: u32 },
    #[error("value {value} is not an element of GF({order})")]
    MixedFieldContexts { value: u64, order: u64 },
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("cannot draw {requested} distinct elements, only {available} are allowed")]
    FieldExhausted { requested: usize, available: u64 },
    #[error("invalid field description: {0}")]
    InvalidDescriptor(String),
}

pub type Result<T> = std::result::Result<T, FieldError>;

/// An element of some GF(q^L), packed as base-`q` digits. Serializes as the
/// packed integer; wire formats that need coefficient lists convert through
/// [`FieldCtx::coeffs`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElem(u64);

impl FieldElem {
    pub const ZERO: FieldElem = FieldElem(0);
    pub const ONE: FieldElem = FieldElem(1);

    /// The packed integer encoding.
    pub fn value(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

/// A finite field GF(q^L). Cheap to clone and immutable.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "FieldDescriptor", into = "FieldDescriptor")]
pub struct FieldCtx {
    q: u64,
    degree: u32,
    /// Coefficients `r_0..r_{L-1}` of the monic reduction polynomial
    /// `x^L + r_{L-1} x^{L-1} + ... + r_0`. Empty for prime fields.
    reduction: Arc<[u64]>,
    order: u64,
}

impl fmt::Debug for FieldCtx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.degree == 1 {
            write!(f, "GF({})", self.q)
        } else {
            write!(f, "GF({}^{}) mod {:?}", self.q, self.degree, self.reduction_poly())
        }
    }
}

/// Wire form of a field: `{q, L, reduction}` where `reduction` lists all
/// `L + 1` coefficients of the monic modulus, constant term first, and is
/// empty for prime fields.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub q: u64,
    #[serde(rename = "L")]
    pub degree: u32,
    pub reduction: Vec<u64>,
}

impl From<FieldCtx> for FieldDescriptor {
    fn from(ctx: FieldCtx) -> Self {
        FieldDescriptor { q: ctx.q, degree: ctx.degree, reduction: ctx.reduction_poly() }
    }
}

impl TryFrom<FieldDescriptor> for FieldCtx {
    type Error = FieldError;

    fn try_from(d: FieldDescriptor) -> Result<Self> {
        FieldCtx::with_reduction(d.q, d.degree, &d.reduction)
    }
}

/// Builds GF(q^L) with the canonical reduction polynomial.
pub fn make_field(q: u64, degree: u32) -> Result<FieldCtx> {
    let order = check_params(q, degree)?;
    let reduction = if degree == 1 { Vec::new() } else { smallest_irreducible(q, degree as usize) };
    Ok(FieldCtx { q, degree, reduction: reduction.into(), order })
}

fn check_params(q: u64, degree: u32) -> Result<u64> {
    if !is_prime(q) {
        return Err(FieldError::NonPrimeCharacteristic(q));
    }
    if degree == 0 || degree as usize >= MAX_DIGITS {
        return Err(FieldError::DegreeOutOfRange { q, degree });
    }
    q.checked_pow(degree).ok_or(FieldError::DegreeOutOfRange { q, degree })
}

impl FieldCtx {
    /// Builds GF(q^L) from an explicit monic modulus (all `L + 1`
    /// coefficients, constant first). The modulus must be irreducible.
    pub fn with_reduction(q: u64, degree: u32, modulus: &[u64]) -> Result<FieldCtx> {
        let order = check_params(q, degree)?;
        if degree == 1 {
            if !modulus.is_empty() {
                return Err(FieldError::InvalidDescriptor("prime fields carry no reduction polynomial".into()));
            }
            return Ok(FieldCtx { q, degree, reduction: Arc::from(Vec::new()), order });
        }
        let l = degree as usize;
        if modulus.len() != l + 1 || modulus[l] != 1 || modulus.iter().any(|&c| c >= q) {
            return Err(FieldError::InvalidDescriptor(format!(
                "reduction must be a monic degree-{l} polynomial with coefficients below {q}"
            )));
        }
        if !is_irreducible(modulus, q) {
            return Err(FieldError::InvalidDescriptor("reduction polynomial is reducible".into()));
        }
        Ok(FieldCtx { q, degree, reduction: modulus[..l].into(), order })
    }

    pub fn characteristic(&self) -> u64 {
        self.q
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// `q^L`.
    pub fn order(&self) -> u64 {
        self.order
    }

    /// The full monic modulus, constant term first; empty for prime fields.
    pub fn reduction_poly(&self) -> Vec<u64> {
        if self.degree == 1 {
            return Vec::new();
        }
        let mut p = self.reduction.to_vec();
        p.push(1);
        p
    }

    pub fn descriptor(&self) -> FieldDescriptor {
        self.clone().into()
    }

    pub fn contains(&self, a: FieldElem) -> bool {
        a.0 < self.order
    }

    /// Validates a packed value.
    pub fn element(&self, value: u64) -> Result<FieldElem> {
        if value < self.order {
            Ok(FieldElem(value))
        } else {
            Err(FieldError::MixedFieldContexts { value, order: self.order })
        }
    }

    pub fn check(&self, a: FieldElem) -> Result<FieldElem> {
        self.element(a.0)
    }

    /// Coefficient vector of length `L`, constant term first.
    pub fn coeffs(&self, a: FieldElem) -> Vec<u64> {
        let mut v = a.0;
        (0..self.degree)
            .map(|_| {
                let d = v % self.q;
                v /= self.q;
                d
            })
            .collect()
    }

    pub fn from_coeffs(&self, coeffs: &[u64]) -> Result<FieldElem> {
        if coeffs.len() != self.degree as usize || coeffs.iter().any(|&c| c >= self.q) {
            return Err(FieldError::InvalidDescriptor(format!(
                "expected {} coefficients below {}, got {:?}",
                self.degree, self.q, coeffs
            )));
        }
        // Horner in base q; cannot overflow since the result is below q^L.
        Ok(FieldElem(coeffs.iter().rev().fold(0u64, |acc, &c| acc * self.q + c)))
    }

    /// Checked arithmetic on possibly foreign elements.
    pub fn apply(&self, op: ArithOp, a: FieldElem, b: FieldElem) -> Result<FieldElem> {
        self.check(a)?;
        self.check(b)?;
        Ok(match op {
            ArithOp::Add => self.add(a, b),
            ArithOp::Sub => self.sub(a, b),
            ArithOp::Mul => self.mul(a, b),
        })
    }

    pub fn add(&self, a: FieldElem, b: FieldElem) -> FieldElem {
        debug_assert!(self.contains(a) && self.contains(b));
        if self.degree == 1 {
            return FieldElem(((a.0 as u128 + b.0 as u128) % self.q as u128) as u64);
        }
        if self.q == 2 {
            return FieldElem(a.0 ^ b.0);
        }
        let (da, db) = (self.digits(a), self.digits(b));
        let mut out = [0u64; MAX_DIGITS];
        for i in 0..self.degree as usize {
            out[i] = (da[i] + db[i]) % self.q;
        }
        self.pack(&out)
    }

    pub fn neg(&self, a: FieldElem) -> FieldElem {
        debug_assert!(self.contains(a));
        if self.degree == 1 {
            return FieldElem((self.q - a.0) % self.q);
        }
        if self.q == 2 {
            return a;
        }
        let da = self.digits(a);
        let mut out = [0u64; MAX_DIGITS];
        for i in 0..self.degree as usize {
            out[i] = (self.q - da[i]) % self.q;
        }
        self.pack(&out)
    }

    pub fn sub(&self, a: FieldElem, b: FieldElem) -> FieldElem {
        self.add(a, self.neg(b))
    }

    pub fn mul(&self, a: FieldElem, b: FieldElem) -> FieldElem {
        debug_assert!(self.contains(a) && self.contains(b));
        if self.degree == 1 {
            return FieldElem(((a.0 as u128 * b.0 as u128) % self.q as u128) as u64);
        }
        // q^L < 2^64 with L >= 2 forces q < 2^32, so digit products fit in u64.
        let l = self.degree as usize;
        let q = self.q;
        let (da, db) = (self.digits(a), self.digits(b));
        let mut prod = [0u64; 2 * MAX_DIGITS];
        for i in 0..l {
            if da[i] == 0 {
                continue;
            }
            for j in 0..l {
                prod[i + j] = (prod[i + j] + da[i] * db[j]) % q;
            }
        }
        // x^L = -(r_0 + ... + r_{L-1} x^{L-1})
        for i in (l..2 * l - 1).rev() {
            let c = prod[i];
            if c == 0 {
                continue;
            }
            prod[i] = 0;
            for (j, &r) in self.reduction.iter().enumerate() {
                prod[i - l + j] = (prod[i - l + j] + c * ((q - r) % q)) % q;
            }
        }
        self.pack(&prod[..l])
    }

    pub fn pow(&self, a: FieldElem, mut e: u64) -> FieldElem {
        let mut base = a;
        let mut acc = FieldElem::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    pub fn inv(&self, a: FieldElem) -> Result<FieldElem> {
        self.check(a)?;
        if a.is_zero() {
            return Err(FieldError::ZeroInverse);
        }
        if self.degree == 1 {
            return Ok(FieldElem(inv_mod(a.0, self.q)));
        }
        Ok(self.pow(a, self.order - 2))
    }

    pub fn div(&self, a: FieldElem, b: FieldElem) -> Result<FieldElem> {
        Ok(self.mul(a, self.inv(b)?))
    }

    /// Uniform element. `gen_range` rejects from a raw word, so there is no
    /// modulo bias.
    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElem {
        FieldElem(rng.gen_range(0..self.order))
    }

    /// Uniform nonzero element.
    pub fn random_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElem {
        FieldElem(rng.gen_range(1..self.order))
    }

    /// Draws `k` distinct elements outside `exclude`, uniformly over all
    /// ordered k-subsets of the allowed set.
    pub fn sample_distinct<R: Rng + ?Sized>(
        &self,
        k: usize,
        exclude: &[FieldElem],
        rng: &mut R,
    ) -> Result<Vec<FieldElem>> {
        let mut excluded = HashSet::with_capacity(exclude.len());
        for &e in exclude {
            excluded.insert(self.check(e)?);
        }
        let available = self.order - excluded.len() as u64;
        if k as u64 > available {
            return Err(FieldError::FieldExhausted { requested: k, available });
        }
        if (k as u64).saturating_mul(2) > available {
            // Dense request: order <= 2k + |exclude|, so the pool is small.
            let mut pool: Vec<FieldElem> = (0..self.order).map(FieldElem).filter(|e| !excluded.contains(e)).collect();
            for i in 0..k {
                let j = rng.gen_range(i..pool.len());
                pool.swap(i, j);
            }
            pool.truncate(k);
            return Ok(pool);
        }
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let e = self.random(rng);
            if !excluded.contains(&e) && !out.contains(&e) {
                out.push(e);
            }
        }
        Ok(out)
    }

    /// All elements in packed order. Only sensible for tiny fields.
    pub fn elements(&self) -> impl Iterator<Item = FieldElem> {
        (0..self.order).map(FieldElem)
    }

    fn digits(&self, a: FieldElem) -> [u64; MAX_DIGITS] {
        let mut out = [0u64; MAX_DIGITS];
        let mut v = a.0;
        if self.q == 2 {
            for (i, d) in out.iter_mut().enumerate().take(self.degree as usize) {
                *d = (v >> i) & 1;
            }
            return out;
        }
        for d in out.iter_mut().take(self.degree as usize) {
            *d = v % self.q;
            v /= self.q;
        }
        out
    }

    fn pack(&self, digits: &[u64]) -> FieldElem {
        let l = self.degree as usize;
        if self.q == 2 {
            return FieldElem(digits[..l].iter().enumerate().fold(0, |acc, (i, &d)| acc | (d << i)));
        }
        FieldElem(digits[..l].iter().rev().fold(0u64, |acc, &d| acc * self.q + d))
    }
}

/// Deterministic Miller-Rabin, exact for all `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in SMALL {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for a in SMALL {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    acc
}

fn inv_mod(a: u64, m: u64) -> u64 {
    let (mut old_r, mut r) = (a as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let quot = old_r / r;
        (old_r, r) = (r, old_r - quot * r);
        (old_s, s) = (s, old_s - quot * s);
    }
    debug_assert_eq!(old_r, 1);
    old_s.rem_euclid(m as i128) as u64
}

// Dense polynomials over GF(q), constant term first, used only to find and
// validate reduction polynomials.

fn trim(p: &mut Vec<u64>) {
    while p.last() == Some(&0) {
        p.pop();
    }
}

fn poly_rem(a: &[u64], m: &[u64], q: u64) -> Vec<u64> {
    let mut r = a.to_vec();
    trim(&mut r);
    let dm = m.len() - 1;
    let lead_inv = inv_mod(m[dm], q);
    while r.len() > dm {
        let top = r.len() - 1;
        let c = mul_mod(r[top], lead_inv, q);
        if c != 0 {
            for (j, &mj) in m.iter().enumerate() {
                let idx = top - dm + j;
                r[idx] = (r[idx] + q - mul_mod(c, mj, q)) % q;
            }
        }
        trim(&mut r);
    }
    r
}

fn poly_mulmod(a: &[u64], b: &[u64], m: &[u64], q: u64) -> Vec<u64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut prod = vec![0u64; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            prod[i + j] = (prod[i + j] + mul_mod(ai, bj, q)) % q;
        }
    }
    poly_rem(&prod, m, q)
}

fn poly_powmod(base: &[u64], mut e: u64, m: &[u64], q: u64) -> Vec<u64> {
    let mut acc = vec![1u64];
    let mut b = poly_rem(base, m, q);
    while e > 0 {
        if e & 1 == 1 {
            acc = poly_mulmod(&acc, &b, m, q);
        }
        b = poly_mulmod(&b, &b, m, q);
        e >>= 1;
    }
    acc
}

fn poly_gcd(a: &[u64], b: &[u64], q: u64) -> Vec<u64> {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    trim(&mut a);
    trim(&mut b);
    while !b.is_empty() {
        let r = poly_rem(&a, &b, q);
        a = b;
        b = r;
    }
    a
}

/// Ben-Or: a degree-L polynomial is irreducible iff it shares no factor
/// with `x^(q^i) - x` for `i = 1..=L/2`.
fn is_irreducible(f: &[u64], q: u64) -> bool {
    let l = f.len() - 1;
    if l == 0 {
        return false;
    }
    if l == 1 {
        return true;
    }
    if f[0] == 0 {
        return false;
    }
    let x = vec![0u64, 1];
    let mut h = x.clone();
    for _ in 1..=l / 2 {
        h = poly_powmod(&h, q, f, q);
        let mut diff = h.clone();
        diff.resize(diff.len().max(2), 0);
        diff[1] = (diff[1] + q - 1) % q;
        trim(&mut diff);
        let g = poly_gcd(f, &diff, q);
        if g.len() > 1 {
            return false;
        }
    }
    true
}

fn smallest_irreducible(q: u64, l: usize) -> Vec<u64> {
    // Candidates ordered by the integer whose base-q digits, most
    // significant first, are r_{L-1}, ..., r_0.
    let mut t: u64 = 0;
    loop {
        let mut f = Vec::with_capacity(l + 1);
        let mut v = t;
        for _ in 0..l {
            f.push(v % q);
            v /= q;
        }
        f.push(1);
        if is_irreducible(&f, q) {
            f.pop();
            return f;
        }
        t += 1;
    }
}
