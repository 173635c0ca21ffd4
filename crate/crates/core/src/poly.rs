//! Polynomials over a [`FieldCtx`] and Lagrange interpolation.
//!
//! Abscissa 0 is reserved for the shared secret `f(0)`; callers never hand
//! out key or challenge points at `x = 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldCtx, FieldElem, FieldError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("no interpolation points given")]
    NoPoints,
    #[error("abscissa {0} appears more than once")]
    DuplicateAbscissa(FieldElem),
    #[error("abscissa 0 is reserved for the secret")]
    ZeroAbscissa,
    #[error(transparent)]
    Field(#[from] FieldError),
}

pub type Result<T> = std::result::Result<T, PolyError>;

/// A point `(x, f(x))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EvalPoint {
    pub x: FieldElem,
    pub y: FieldElem,
}

impl EvalPoint {
    pub fn new(x: FieldElem, y: FieldElem) -> Self {
        EvalPoint { x, y }
    }
}

/// Dense polynomial, coefficient of `x^i` at index `i`, no trailing zeros.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    ctx: FieldCtx,
    coeffs: Vec<FieldElem>,
}

impl Poly {
    pub fn new(ctx: &FieldCtx, mut coeffs: Vec<FieldElem>) -> Result<Poly> {
        for &c in &coeffs {
            ctx.check(c)?;
        }
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Ok(Poly { ctx: ctx.clone(), coeffs })
    }

    pub fn zero(ctx: &FieldCtx) -> Poly {
        Poly { ctx: ctx.clone(), coeffs: Vec::new() }
    }

    pub fn field(&self) -> &FieldCtx {
        &self.ctx
    }

    pub fn coeffs(&self) -> &[FieldElem] {
        &self.coeffs
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    /// `f(0)`.
    pub fn constant_term(&self) -> FieldElem {
        self.coeffs.first().copied().unwrap_or(FieldElem::ZERO)
    }

    /// Horner evaluation.
    pub fn eval(&self, x: FieldElem) -> Result<FieldElem> {
        self.ctx.check(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: FieldElem) -> FieldElem {
        let f = &self.ctx;
        self.coeffs.iter().rev().fold(FieldElem::ZERO, |acc, &c| f.add(f.mul(acc, x), c))
    }

    /// Coefficient lists of the serialized elements, ascending degree.
    pub fn to_wire(&self) -> Vec<Vec<u64>> {
        self.coeffs.iter().map(|&c| self.ctx.coeffs(c)).collect()
    }
}

fn check_points(ctx: &FieldCtx, points: &[EvalPoint]) -> Result<()> {
    if points.is_empty() {
        return Err(PolyError::NoPoints);
    }
    let mut xs = Vec::with_capacity(points.len());
    for p in points {
        ctx.check(p.x)?;
        ctx.check(p.y)?;
        xs.push(p.x);
    }
    xs.sort_unstable();
    if let Some(w) = xs.windows(2).find(|w| w[0] == w[1]) {
        return Err(PolyError::DuplicateAbscissa(w[0]));
    }
    Ok(())
}

/// The unique polynomial of degree `< points.len()` through all points.
pub fn interpolate(ctx: &FieldCtx, points: &[EvalPoint]) -> Result<Poly> {
    check_points(ctx, points)?;
    let f = ctx;
    let n = points.len();

    // master(x) = prod_j (x - x_j)
    let mut master = vec![FieldElem::ONE];
    for p in points {
        let mut next = vec![FieldElem::ZERO; master.len() + 1];
        for (i, &c) in master.iter().enumerate() {
            next[i + 1] = f.add(next[i + 1], c);
            next[i] = f.sub(next[i], f.mul(c, p.x));
        }
        master = next;
    }

    let mut acc = vec![FieldElem::ZERO; n];
    for (i, pi) in points.iter().enumerate() {
        // basis numerator master(x) / (x - x_i) by synthetic division
        let mut quotient = vec![FieldElem::ZERO; n];
        let mut carry = FieldElem::ZERO;
        for k in (0..n).rev() {
            carry = f.add(master[k + 1], f.mul(carry, pi.x));
            quotient[k] = carry;
        }
        let denom = points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .fold(FieldElem::ONE, |d, (_, pj)| f.mul(d, f.sub(pi.x, pj.x)));
        let scale = f.mul(pi.y, f.inv(denom)?);
        for (a, &qk) in acc.iter_mut().zip(&quotient) {
            *a = f.add(*a, f.mul(scale, qk));
        }
    }
    Poly::new(ctx, acc)
}

/// `f(0)` straight from the points, without building `f`:
/// `sum_i y_i * prod_{j != i} x_j / (x_j - x_i)`.
pub fn eval_at_zero_direct(ctx: &FieldCtx, points: &[EvalPoint]) -> Result<FieldElem> {
    check_points(ctx, points)?;
    if points.iter().any(|p| p.x.is_zero()) {
        return Err(PolyError::ZeroAbscissa);
    }
    let f = ctx;
    let mut acc = FieldElem::ZERO;
    for (i, pi) in points.iter().enumerate() {
        let (mut num, mut den) = (FieldElem::ONE, FieldElem::ONE);
        for (j, pj) in points.iter().enumerate() {
            if j != i {
                num = f.mul(num, pj.x);
                den = f.mul(den, f.sub(pj.x, pi.x));
            }
        }
        acc = f.add(acc, f.mul(pi.y, f.mul(num, f.inv(den)?)));
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_field;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt(ctx: &FieldCtx, x: u64, y: u64) -> EvalPoint {
        EvalPoint::new(ctx.element(x).unwrap(), ctx.element(y).unwrap())
    }

    #[test]
    fn two_points_over_gf7() {
        // Elimination by hand: a0 + a1 = 2, a0 + 2 a1 = 4  =>  a1 = 2, a0 = 0.
        let f = make_field(7, 1).unwrap();
        let pts = [pt(&f, 1, 2), pt(&f, 2, 4)];
        let p = interpolate(&f, &pts).unwrap();
        assert_eq!(p.coeffs(), &[FieldElem::ZERO, f.element(2).unwrap()]);
        assert_eq!(p.degree(), Some(1));
        assert_eq!(p.constant_term(), FieldElem::ZERO);
        assert_eq!(eval_at_zero_direct(&f, &pts).unwrap(), FieldElem::ZERO);
    }

    #[test]
    fn constant_and_duplicates() {
        let f = make_field(7, 1).unwrap();
        let p = interpolate(&f, &[pt(&f, 3, 5)]).unwrap();
        assert_eq!(p.coeffs(), &[f.element(5).unwrap()]);
        assert_eq!(eval_at_zero_direct(&f, &[pt(&f, 3, 5)]).unwrap(), f.element(5).unwrap());
        assert_eq!(interpolate(&f, &[pt(&f, 1, 1), pt(&f, 1, 2)]), Err(PolyError::DuplicateAbscissa(FieldElem::ONE)));
        assert_eq!(interpolate(&f, &[]), Err(PolyError::NoPoints));
        assert_eq!(eval_at_zero_direct(&f, &[pt(&f, 0, 1), pt(&f, 2, 2)]), Err(PolyError::ZeroAbscissa));
    }

    #[test]
    fn horner_examples() {
        let f = make_field(7, 1).unwrap();
        let e = |v| f.element(v).unwrap();
        let two_x = Poly::new(&f, vec![e(0), e(2)]).unwrap();
        assert_eq!(two_x.eval(e(0)).unwrap(), e(0));
        let sq_plus_one = Poly::new(&f, vec![e(1), e(0), e(1)]).unwrap();
        assert_eq!(sq_plus_one.eval(e(3)).unwrap(), e((9 + 1) % 7));
        let zero = Poly::zero(&f);
        assert_eq!(zero.degree(), None);
        for x in f.elements() {
            assert_eq!(zero.eval(x).unwrap(), FieldElem::ZERO);
        }
        assert!(two_x.eval(FieldElem::default()).is_ok());
        assert!(matches!(two_x.eval(make_field(11, 1).unwrap().element(9).unwrap()), Err(PolyError::Field(_))));
    }

    #[test]
    fn trailing_zeros_trimmed() {
        let f = make_field(7, 1).unwrap();
        let p = Poly::new(&f, vec![FieldElem::ONE, FieldElem::ZERO, FieldElem::ZERO]).unwrap();
        assert_eq!(p.degree(), Some(0));
    }

    #[test]
    fn random_cubics_over_gf11() {
        let f = make_field(11, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let coeffs: Vec<_> = (0..4).map(|_| f.random(&mut rng)).collect();
            let cubic = Poly::new(&f, coeffs.clone()).unwrap();
            let xs = f.sample_distinct(4, &[FieldElem::ZERO], &mut rng).unwrap();
            let pts: Vec<_> = xs.iter().map(|&x| EvalPoint::new(x, cubic.eval(x).unwrap())).collect();
            assert_eq!(eval_at_zero_direct(&f, &pts).unwrap(), coeffs[0]);
        }
    }

    #[test]
    fn extension_field_interpolation() {
        let f = make_field(2, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coeffs: Vec<_> = (0..5).map(|_| f.random(&mut rng)).collect();
        let p = Poly::new(&f, coeffs).unwrap();
        let xs = f.sample_distinct(5, &[FieldElem::ZERO], &mut rng).unwrap();
        let pts: Vec<_> = xs.iter().map(|&x| EvalPoint::new(x, p.eval(x).unwrap())).collect();
        assert_eq!(interpolate(&f, &pts).unwrap(), p);
        assert_eq!(eval_at_zero_direct(&f, &pts).unwrap(), p.constant_term());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn round_trip_over_gf101(seed in any::<u64>(), deg in 0usize..=6) {
            let f = make_field(101, 1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = Poly::new(&f, (0..=deg).map(|_| f.random(&mut rng)).collect()).unwrap();
            let xs = f.sample_distinct(deg + 1, &[FieldElem::ZERO], &mut rng).unwrap();
            let pts: Vec<_> = xs.iter().map(|&x| EvalPoint::new(x, p.eval(x).unwrap())).collect();
            let q = interpolate(&f, &pts).unwrap();
            prop_assert_eq!(&q, &p);
            for pt in &pts {
                prop_assert_eq!(q.eval(pt.x).unwrap(), pt.y);
            }
            prop_assert_eq!(eval_at_zero_direct(&f, &pts).unwrap(), q.eval(FieldElem::ZERO).unwrap());
        }

        #[test]
        fn any_subset_gives_same_polynomial(seed in any::<u64>(), deg in 0usize..=5, drop in 0usize..7) {
            let f = make_field(101, 1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = Poly::new(&f, (0..=deg).map(|_| f.random(&mut rng)).collect()).unwrap();
            let xs = f.sample_distinct(deg + 2, &[], &mut rng).unwrap();
            let mut pts: Vec<_> = xs.iter().map(|&x| EvalPoint::new(x, p.eval(x).unwrap())).collect();
            let full = interpolate(&f, &pts).unwrap();
            pts.remove(drop % pts.len());
            prop_assert_eq!(interpolate(&f, &pts).unwrap(), full);
        }
    }
}
