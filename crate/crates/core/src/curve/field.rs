//! Prime-field arithmetic in Montgomery form over a runtime modulus.
//!
//! Elements are stored as fixed arrays of `MAX_LIMBS` little-endian 64-bit
//! limbs; only the low `limbs` words are significant. This covers every
//! modulus up to 512 bits, which is enough for both the toy profile and Ed448.

use num_bigint::BigUint;
use num_traits::One;

pub(crate) const MAX_LIMBS: usize = 8;

type Limbs = [u64; MAX_LIMBS];

/// A field element in Montgomery representation, always fully reduced.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) struct Fe(Limbs);

#[derive(Clone, Debug)]
pub(crate) struct MontField {
    modulus: Limbs,
    limbs: usize,
    /// -p^{-1} mod 2^64
    inv: u64,
    /// R^2 mod p, used to enter Montgomery form.
    r2: Limbs,
    /// R mod p, the Montgomery form of 1.
    one: Limbs,
    /// p - 2, little-endian bits for Fermat inversion.
    inv_exponent: Vec<u64>,
    modulus_big: BigUint,
}

fn to_limbs(value: &BigUint) -> Limbs {
    let mut out = [0u64; MAX_LIMBS];
    for (slot, digit) in out.iter_mut().zip(value.iter_u64_digits()) {
        *slot = digit;
    }
    out
}

fn from_limbs(limbs: &Limbs) -> BigUint {
    let mut bytes = Vec::with_capacity(MAX_LIMBS * 8);
    for limb in limbs {
        bytes.extend_from_slice(&limb.to_le_bytes());
    }
    BigUint::from_bytes_le(&bytes)
}

#[inline(always)]
fn mac(acc: u64, a: u64, b: u64, carry: u64) -> (u64, u64) {
    let wide = acc as u128 + (a as u128) * (b as u128) + carry as u128;
    (wide as u64, (wide >> 64) as u64)
}

#[inline(always)]
fn adc(a: u64, b: u64, carry: u64) -> (u64, u64) {
    let wide = a as u128 + b as u128 + carry as u128;
    (wide as u64, (wide >> 64) as u64)
}

#[inline(always)]
fn sbb(a: u64, b: u64, borrow: u64) -> (u64, u64) {
    let wide = (a as u128).wrapping_sub(b as u128 + borrow as u128);
    (wide as u64, ((wide >> 64) as u64) & 1)
}

impl MontField {
    /// Builds the Montgomery context for an odd modulus of at most 512 bits.
    pub(crate) fn new(modulus: &BigUint) -> Option<Self> {
        if modulus.bits() > (MAX_LIMBS * 64) as u64 || modulus.bits() < 2 || !modulus.bit(0) {
            return None;
        }
        let limbs = modulus.bits().div_ceil(64) as usize;
        let p = to_limbs(modulus);

        // Newton iteration for p^{-1} mod 2^64; six rounds double the
        // correct bits from 2 up past 64.
        let mut inv: u64 = 1;
        for _ in 0..6 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(p[0].wrapping_mul(inv)));
        }
        let inv = inv.wrapping_neg();

        let r = BigUint::one() << (64 * limbs);
        let one = to_limbs(&(&r % modulus));
        let r2 = to_limbs(&((&r * &r) % modulus));
        let exponent = modulus - 2u32;

        Some(Self {
            modulus: p,
            limbs,
            inv,
            r2,
            one,
            inv_exponent: exponent.iter_u64_digits().collect(),
            modulus_big: modulus.clone(),
        })
    }

    pub(crate) fn zero(&self) -> Fe {
        Fe([0; MAX_LIMBS])
    }

    pub(crate) fn one(&self) -> Fe {
        Fe(self.one)
    }

    /// Reduces `value` modulo p and converts into Montgomery form.
    pub(crate) fn from_big(&self, value: &BigUint) -> Fe {
        let reduced = if value < &self.modulus_big {
            to_limbs(value)
        } else {
            to_limbs(&(value % &self.modulus_big))
        };
        Fe(self.mont_mul(&reduced, &self.r2))
    }

    pub(crate) fn from_u64(&self, value: u64) -> Fe {
        self.from_big(&BigUint::from(value))
    }

    pub(crate) fn to_big(&self, value: &Fe) -> BigUint {
        let mut unit = [0u64; MAX_LIMBS];
        unit[0] = 1;
        from_limbs(&self.mont_mul(&value.0, &unit))
    }

    pub(crate) fn is_zero(&self, value: &Fe) -> bool {
        value.0.iter().all(|&limb| limb == 0)
    }

    fn geq_modulus(&self, value: &Limbs) -> bool {
        for i in (0..self.limbs).rev() {
            if value[i] != self.modulus[i] {
                return value[i] > self.modulus[i];
            }
        }
        true
    }

    fn sub_modulus(&self, value: &mut Limbs) -> u64 {
        let mut borrow = 0;
        for i in 0..self.limbs {
            let (d, b) = sbb(value[i], self.modulus[i], borrow);
            value[i] = d;
            borrow = b;
        }
        borrow
    }

    pub(crate) fn add(&self, a: &Fe, b: &Fe) -> Fe {
        let mut out = [0u64; MAX_LIMBS];
        let mut carry = 0;
        for (i, slot) in out.iter_mut().enumerate().take(self.limbs) {
            let (s, c) = adc(a.0[i], b.0[i], carry);
            *slot = s;
            carry = c;
        }
        if carry != 0 || self.geq_modulus(&out) {
            self.sub_modulus(&mut out);
        }
        Fe(out)
    }

    pub(crate) fn sub(&self, a: &Fe, b: &Fe) -> Fe {
        let mut out = [0u64; MAX_LIMBS];
        let mut borrow = 0;
        for (i, slot) in out.iter_mut().enumerate().take(self.limbs) {
            let (d, bw) = sbb(a.0[i], b.0[i], borrow);
            *slot = d;
            borrow = bw;
        }
        if borrow != 0 {
            let mut carry = 0;
            for (i, slot) in out.iter_mut().enumerate().take(self.limbs) {
                let (s, c) = adc(*slot, self.modulus[i], carry);
                *slot = s;
                carry = c;
            }
        }
        Fe(out)
    }

    pub(crate) fn double(&self, a: &Fe) -> Fe {
        self.add(a, a)
    }

    pub(crate) fn mul(&self, a: &Fe, b: &Fe) -> Fe {
        Fe(self.mont_mul(&a.0, &b.0))
    }

    pub(crate) fn square(&self, a: &Fe) -> Fe {
        Fe(self.mont_mul(&a.0, &a.0))
    }

    /// Coarsely integrated operand scanning Montgomery product: a·b·R^{-1} mod p.
    fn mont_mul(&self, a: &Limbs, b: &Limbs) -> Limbs {
        let n = self.limbs;
        let mut t = [0u64; MAX_LIMBS + 2];
        for i in 0..n {
            let mut carry = 0;
            for j in 0..n {
                let (lo, hi) = mac(t[j], a[j], b[i], carry);
                t[j] = lo;
                carry = hi;
            }
            let (lo, hi) = adc(t[n], carry, 0);
            t[n] = lo;
            t[n + 1] = hi;

            let m = t[0].wrapping_mul(self.inv);
            let (_, mut carry) = mac(t[0], m, self.modulus[0], 0);
            for j in 1..n {
                let (lo, hi) = mac(t[j], m, self.modulus[j], carry);
                t[j - 1] = lo;
                carry = hi;
            }
            let (lo, hi) = adc(t[n], carry, 0);
            t[n - 1] = lo;
            t[n] = t[n + 1] + hi;
        }

        let mut out = [0u64; MAX_LIMBS];
        out[..n].copy_from_slice(&t[..n]);
        if t[n] != 0 || self.geq_modulus(&out) {
            self.sub_modulus(&mut out);
        }
        out
    }

    /// Multiplicative inverse by Fermat's little theorem; zero maps to zero.
    pub(crate) fn invert(&self, a: &Fe) -> Fe {
        let mut result = self.one();
        for limb in self.inv_exponent.iter().rev() {
            for bit in (0..64).rev() {
                result = self.square(&result);
                if (limb >> bit) & 1 == 1 {
                    result = self.mul(&result, a);
                }
            }
        }
        result
    }

    /// Euler's criterion. Zero counts as a square.
    pub(crate) fn is_square(&self, a: &Fe) -> bool {
        if self.is_zero(a) {
            return true;
        }
        let exponent: BigUint = (&self.modulus_big - 1u32) >> 1;
        let value = self.to_big(a);
        value.modpow(&exponent, &self.modulus_big).is_one()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ed448_prime() -> BigUint {
        (BigUint::one() << 448) - (BigUint::one() << 224) - 1u32
    }

    #[test]
    fn rejects_even_and_oversized_moduli() {
        assert!(MontField::new(&BigUint::from(16u32)).is_none());
        assert!(MontField::new(&(BigUint::one() << 600 | BigUint::one())).is_none());
        assert!(MontField::new(&BigUint::from(17u32)).is_some());
    }

    #[test]
    fn round_trips_small_field() {
        let f = MontField::new(&BigUint::from(17u32)).unwrap();
        for v in 0u32..40 {
            assert_eq!(f.to_big(&f.from_big(&BigUint::from(v))), BigUint::from(v % 17));
        }
    }

    #[test]
    fn inverse_in_small_field() {
        let f = MontField::new(&BigUint::from(17u32)).unwrap();
        for v in 1u64..17 {
            let x = f.from_u64(v);
            assert_eq!(f.mul(&x, &f.invert(&x)), f.one());
        }
    }

    proptest! {
        #[test]
        fn matches_biguint_reference(a in proptest::collection::vec(any::<u8>(), 56),
                                     b in proptest::collection::vec(any::<u8>(), 56)) {
            let p = ed448_prime();
            let f = MontField::new(&p).unwrap();
            let a = BigUint::from_bytes_be(&a) % &p;
            let b = BigUint::from_bytes_be(&b) % &p;
            let (fa, fb) = (f.from_big(&a), f.from_big(&b));
            prop_assert_eq!(f.to_big(&f.mul(&fa, &fb)), (&a * &b) % &p);
            prop_assert_eq!(f.to_big(&f.add(&fa, &fb)), (&a + &b) % &p);
            prop_assert_eq!(f.to_big(&f.sub(&fa, &fb)), (&a + &p - &b) % &p);
        }
    }

    #[test]
    fn ed448_inverse() {
        let p = ed448_prime();
        let f = MontField::new(&p).unwrap();
        let x = f.from_big(&(&p - 39081u32));
        assert_eq!(f.mul(&x, &f.invert(&x)), f.one());
    }
}
