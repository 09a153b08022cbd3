//! Elliptic-curve group arithmetic over a runtime curve profile.
//!
//! A [`CurveProfile`] carries the field prime, the curve equation (short
//! Weierstrass or twisted Edwards), a generator and its order. The same code
//! serves the brute-forceable toy curve over F_17 and Ed448-Goldilocks.
//!
//! Inputs that come off the wire are untrusted: every public operation
//! re-checks the curve equation, and [`CurveProfile::validate_point`] is the
//! only way to obtain a [`ValidatedPoint`] for key agreement.

mod field;
mod ladder;
mod profile;

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::metrics;
pub use profile::{CurveForm, CurveParams, CurveProfile};

/// An affine curve point or the group identity.
///
/// On Edwards curves the identity is the affine point (0, 1); profile
/// operations always normalise it to [`EcPoint::Infinity`].
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum EcPoint {
    Infinity,
    Affine { x: BigUint, y: BigUint },
}

impl EcPoint {
    pub fn affine(x: impl Into<BigUint>, y: impl Into<BigUint>) -> Self {
        EcPoint::Affine {
            x: x.into(),
            y: y.into(),
        }
    }

    pub fn is_infinity(&self) -> bool {
        matches!(self, EcPoint::Infinity)
    }

    pub fn x(&self) -> Option<&BigUint> {
        match self {
            EcPoint::Affine { x, .. } => Some(x),
            EcPoint::Infinity => None,
        }
    }

    pub fn y(&self) -> Option<&BigUint> {
        match self {
            EcPoint::Affine { y, .. } => Some(y),
            EcPoint::Infinity => None,
        }
    }
}

impl fmt::Debug for EcPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EcPoint::Infinity => f.write_str("O"),
            EcPoint::Affine { x, y } => write!(f, "({x:#x}, {y:#x})"),
        }
    }
}

/// A point that passed [`CurveProfile::validate_point`]: on the curve, not the
/// identity, and inside the prime-order subgroup.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidatedPoint(EcPoint);

impl ValidatedPoint {
    pub fn point(&self) -> &EcPoint {
        &self.0
    }

    pub fn into_inner(self) -> EcPoint {
        self.0
    }
}

/// A secret scalar in [1, n-1].
#[derive(Clone, PartialEq, Eq)]
pub struct Scalar(BigUint);

impl Scalar {
    pub fn new(value: BigUint, curve: &CurveProfile) -> Result<Self, CurveError> {
        if value.is_zero() || &value >= curve.order() {
            return Err(CurveError::InvalidScalar);
        }
        Ok(Scalar(value))
    }

    pub fn from_u64(value: u64, curve: &CurveProfile) -> Result<Self, CurveError> {
        Self::new(BigUint::from(value), curve)
    }

    /// Uniform in [1, n-1] by rejection sampling on the order's bit length.
    pub fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R, curve: &CurveProfile) -> Self {
        let order = curve.order();
        let bits = order.bits();
        let len = bits.div_ceil(8) as usize;
        let top_mask = match bits % 8 {
            0 => 0xff,
            r => (1u8 << r) - 1,
        };
        let mut buf = vec![0u8; len];
        loop {
            rng.fill_bytes(&mut buf);
            buf[0] &= top_mask;
            let candidate = BigUint::from_bytes_be(&buf);
            if !candidate.is_zero() && &candidate < order {
                return Scalar(candidate);
            }
        }
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Scalar(..)")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CurveError {
    #[error("point is not on the curve")]
    InvalidPoint,
    #[error("scalar outside [1, n-1]")]
    InvalidScalar,
    #[error("shared secret is the identity")]
    DegenerateSecret,
    #[error("point encoding must be {expected} bytes, got {actual}")]
    BadEncoding { expected: usize, actual: usize },
    #[error("embedding-degree bound must be at least 2")]
    InvalidBound,
    #[error("invalid curve profile: {0}")]
    InvalidProfile(String),
}

/// Why an untrusted point was refused.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointRejection {
    #[error("point at infinity")]
    InfinityPoint,
    #[error("point not on curve")]
    OffCurve,
    #[error("point outside the prime-order subgroup")]
    SmallSubgroup,
}

/// Outcome of the MOV embedding-degree screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingDegree {
    Pass,
    Fail(u32),
}

impl CurveProfile {
    pub(crate) fn is_identity(&self, point: &EcPoint) -> bool {
        match point {
            EcPoint::Infinity => true,
            EcPoint::Affine { x, y } => {
                matches!(self.form(), CurveForm::Edwards { .. }) && x.is_zero() && y.is_one()
            }
        }
    }

    /// True when `point` is the identity or an in-range affine solution of
    /// the curve equation.
    pub fn is_on_curve(&self, point: &EcPoint) -> bool {
        match point {
            EcPoint::Infinity => true,
            EcPoint::Affine { x, y } => {
                x < self.prime() && y < self.prime() && self.satisfies_equation(x, y)
            }
        }
    }

    fn check_on_curve(&self, point: &EcPoint) -> Result<(), CurveError> {
        if self.is_on_curve(point) {
            Ok(())
        } else {
            Err(CurveError::InvalidPoint)
        }
    }

    pub fn negate(&self, point: &EcPoint) -> EcPoint {
        match point {
            EcPoint::Infinity => EcPoint::Infinity,
            EcPoint::Affine { x, y } => {
                let p = self.prime();
                let flip = |v: &BigUint| if v.is_zero() { BigUint::zero() } else { p - v };
                match self.form() {
                    CurveForm::Weierstrass { .. } => EcPoint::affine(x.clone(), flip(y)),
                    CurveForm::Edwards { .. } => EcPoint::affine(flip(x), y.clone()),
                }
            }
        }
    }

    /// Group addition with the affine formulas of the profile's curve form.
    pub fn point_add(&self, p: &EcPoint, q: &EcPoint) -> Result<EcPoint, CurveError> {
        self.check_on_curve(p)?;
        self.check_on_curve(q)?;
        metrics::record(|c| c.ecpa += 1);
        Ok(self.add_unchecked(p, q))
    }

    pub(crate) fn add_unchecked(&self, p: &EcPoint, q: &EcPoint) -> EcPoint {
        if self.is_identity(p) {
            return self.normalize(q.clone());
        }
        if self.is_identity(q) {
            return self.normalize(p.clone());
        }
        let (EcPoint::Affine { x: x1, y: y1 }, EcPoint::Affine { x: x2, y: y2 }) = (p, q) else {
            unreachable!("identity handled above");
        };
        let f = self.field();
        let (x1, y1, x2, y2) = (f.from_big(x1), f.from_big(y1), f.from_big(x2), f.from_big(y2));
        match self.form() {
            CurveForm::Weierstrass { .. } => {
                let lambda = if x1 == x2 {
                    if f.add(&y1, &y2) == f.zero() {
                        return EcPoint::Infinity;
                    }
                    // tangent: (3x^2 + a) / 2y
                    let three_x2 = f.mul(&f.from_u64(3), &f.square(&x1));
                    let num = f.add(&three_x2, self.coeff_a());
                    f.mul(&num, &f.invert(&f.double(&y1)))
                } else {
                    f.mul(&f.sub(&y2, &y1), &f.invert(&f.sub(&x2, &x1)))
                };
                let x3 = f.sub(&f.sub(&f.square(&lambda), &x1), &x2);
                let y3 = f.sub(&f.mul(&lambda, &f.sub(&x1, &x3)), &y1);
                EcPoint::affine(f.to_big(&x3), f.to_big(&y3))
            }
            CurveForm::Edwards { .. } => {
                let x1y2 = f.mul(&x1, &y2);
                let y1x2 = f.mul(&y1, &x2);
                let x1x2 = f.mul(&x1, &x2);
                let y1y2 = f.mul(&y1, &y2);
                let dxy = f.mul(self.coeff_d(), &f.mul(&x1x2, &y1y2));
                let x_num = f.add(&x1y2, &y1x2);
                let x_den = f.add(&f.one(), &dxy);
                let y_num = f.sub(&y1y2, &f.mul(self.coeff_a(), &x1x2));
                let y_den = f.sub(&f.one(), &dxy);
                let x3 = f.mul(&x_num, &f.invert(&x_den));
                let y3 = f.mul(&y_num, &f.invert(&y_den));
                self.normalize(EcPoint::affine(f.to_big(&x3), f.to_big(&y3)))
            }
        }
    }

    fn normalize(&self, point: EcPoint) -> EcPoint {
        if self.is_identity(&point) {
            EcPoint::Infinity
        } else {
            point
        }
    }

    /// k·P for a scalar in [1, n-1].
    pub fn scalar_mult(&self, k: &Scalar, point: &EcPoint) -> Result<EcPoint, CurveError> {
        if k.0.is_zero() || &k.0 >= self.order() {
            return Err(CurveError::InvalidScalar);
        }
        self.check_on_curve(point)?;
        metrics::record(|c| c.ecpm += 1);
        Ok(self.mul_unchecked(&k.0, point))
    }

    /// Accepts only non-identity, in-range, on-curve points of the prime-order
    /// subgroup. The subgroup test is a full multiplication by n and is
    /// skipped when the cofactor is 1.
    pub fn validate_point(&self, raw: &EcPoint) -> Result<ValidatedPoint, PointRejection> {
        if self.is_identity(raw) {
            return Err(PointRejection::InfinityPoint);
        }
        if !self.is_on_curve(raw) {
            return Err(PointRejection::OffCurve);
        }
        if !self.cofactor().is_one() {
            metrics::record(|c| c.ecpm += 1);
            if !self.mul_unchecked(self.order(), raw).is_infinity() {
                return Err(PointRejection::SmallSubgroup);
            }
        }
        Ok(ValidatedPoint(raw.clone()))
    }

    pub fn ecdh_shared_secret(
        &self,
        my_scalar: &Scalar,
        their_point: &ValidatedPoint,
    ) -> Result<EcPoint, CurveError> {
        let secret = self.scalar_mult(my_scalar, their_point.point())?;
        if secret.is_infinity() {
            return Err(CurveError::DegenerateSecret);
        }
        Ok(secret)
    }

    /// Smallest k in [2, bound] with n | p^k - 1, if any.
    pub fn embedding_degree_check(&self, bound: u32) -> Result<EmbeddingDegree, CurveError> {
        if bound < 2 {
            return Err(CurveError::InvalidBound);
        }
        let n = self.order();
        let p_mod_n = self.prime() % n;
        let mut power = p_mod_n.clone();
        for k in 2..=bound {
            power = (&power * &p_mod_n) % n;
            if power.is_one() {
                return Ok(EmbeddingDegree::Fail(k));
            }
        }
        Ok(EmbeddingDegree::Pass)
    }

    /// Fixed-width big-endian x ‖ y. The identity encodes as its affine
    /// coordinates on Edwards curves and as all zeros on Weierstrass curves.
    pub fn encode_point(&self, point: &EcPoint) -> Vec<u8> {
        let w = self.coordinate_len();
        let mut out = Vec::with_capacity(2 * w);
        match point {
            EcPoint::Infinity => match self.form() {
                CurveForm::Weierstrass { .. } => out.resize(2 * w, 0),
                CurveForm::Edwards { .. } => {
                    out.extend(self.coordinate_bytes(&BigUint::zero()));
                    out.extend(self.coordinate_bytes(&BigUint::one()));
                }
            },
            EcPoint::Affine { x, y } => {
                out.extend(self.coordinate_bytes(x));
                out.extend(self.coordinate_bytes(y));
            }
        }
        out
    }

    /// Parses the fixed-width encoding without validating the point.
    pub fn decode_point(&self, bytes: &[u8]) -> Result<EcPoint, CurveError> {
        let w = self.coordinate_len();
        if bytes.len() != 2 * w {
            return Err(CurveError::BadEncoding {
                expected: 2 * w,
                actual: bytes.len(),
            });
        }
        let x = BigUint::from_bytes_be(&bytes[..w]);
        let y = BigUint::from_bytes_be(&bytes[w..]);
        let point = EcPoint::Affine { x, y };
        Ok(match self.form() {
            CurveForm::Weierstrass { .. } if bytes.iter().all(|&b| b == 0) => EcPoint::Infinity,
            _ => self.normalize(point),
        })
    }

    /// A coordinate as `coordinate_len()` big-endian bytes. Values wider than
    /// the field width are truncated to their low-order bytes.
    pub fn coordinate_bytes(&self, value: &BigUint) -> Vec<u8> {
        let w = self.coordinate_len();
        let raw = value.to_bytes_be();
        let mut out = vec![0u8; w];
        if raw.len() >= w {
            out.copy_from_slice(&raw[raw.len() - w..]);
        } else {
            out[w - raw.len()..].copy_from_slice(&raw);
        }
        out
    }
}
