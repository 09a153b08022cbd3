//! Projective scalar multiplication.
//!
//! Edwards profiles use the unified projective addition law, which is
//! complete for the profiles we accept (a square, d non-square), so the loop
//! below executes the same field operations for every scalar of a given
//! bit length. Weierstrass profiles use Jacobian coordinates with the usual
//! exceptional-case branches; they only back the toy curve.

use num_bigint::BigUint;

use super::field::{Fe, MontField};
use super::{CurveForm, CurveProfile, EcPoint};

#[derive(Clone, Copy)]
struct Proj {
    x: Fe,
    y: Fe,
    z: Fe,
}

impl CurveProfile {
    /// k·P without range or curve checks and without touching the counters.
    pub(crate) fn mul_unchecked(&self, k: &BigUint, point: &EcPoint) -> EcPoint {
        let f = self.field();
        let Some(base) = self.to_projective(point) else {
            return EcPoint::Infinity;
        };
        let bits = self.order().bits().max(k.bits());
        let mut acc = self.projective_identity();
        for i in (0..bits).rev() {
            acc = self.proj_double(&acc);
            let sum = self.proj_add(&acc, &base);
            if k.bit(i) {
                acc = sum;
            }
        }
        self.to_affine(f, &acc)
    }

    fn projective_identity(&self) -> Proj {
        let f = self.field();
        match self.form() {
            CurveForm::Weierstrass { .. } => Proj {
                x: f.one(),
                y: f.one(),
                z: f.zero(),
            },
            CurveForm::Edwards { .. } => Proj {
                x: f.zero(),
                y: f.one(),
                z: f.one(),
            },
        }
    }

    fn to_projective(&self, point: &EcPoint) -> Option<Proj> {
        if self.is_identity(point) {
            return None;
        }
        let EcPoint::Affine { x, y } = point else {
            return None;
        };
        let f = self.field();
        Some(Proj {
            x: f.from_big(x),
            y: f.from_big(y),
            z: f.one(),
        })
    }

    fn to_affine(&self, f: &MontField, p: &Proj) -> EcPoint {
        if f.is_zero(&p.z) {
            return EcPoint::Infinity;
        }
        let zinv = f.invert(&p.z);
        let (x, y) = match self.form() {
            CurveForm::Weierstrass { .. } => {
                let zinv2 = f.square(&zinv);
                let zinv3 = f.mul(&zinv2, &zinv);
                (f.mul(&p.x, &zinv2), f.mul(&p.y, &zinv3))
            }
            CurveForm::Edwards { .. } => (f.mul(&p.x, &zinv), f.mul(&p.y, &zinv)),
        };
        let point = EcPoint::affine(f.to_big(&x), f.to_big(&y));
        if self.is_identity(&point) {
            EcPoint::Infinity
        } else {
            point
        }
    }

    fn proj_double(&self, p: &Proj) -> Proj {
        match self.form() {
            CurveForm::Weierstrass { .. } => self.jacobian_double(p),
            CurveForm::Edwards { .. } => self.edwards_add(p, p),
        }
    }

    fn proj_add(&self, p: &Proj, q: &Proj) -> Proj {
        match self.form() {
            CurveForm::Weierstrass { .. } => self.jacobian_add(p, q),
            CurveForm::Edwards { .. } => self.edwards_add(p, q),
        }
    }

    fn edwards_add(&self, p: &Proj, q: &Proj) -> Proj {
        let f = self.field();
        let a = f.mul(&p.z, &q.z);
        let b = f.square(&a);
        let c = f.mul(&p.x, &q.x);
        let d = f.mul(&p.y, &q.y);
        let e = f.mul(self.coeff_d(), &f.mul(&c, &d));
        let ff = f.sub(&b, &e);
        let g = f.add(&b, &e);
        let cross = f.mul(&f.add(&p.x, &p.y), &f.add(&q.x, &q.y));
        let x3 = f.mul(&f.mul(&a, &ff), &f.sub(&f.sub(&cross, &c), &d));
        let y3 = f.mul(&f.mul(&a, &g), &f.sub(&d, &f.mul(self.coeff_a(), &c)));
        let z3 = f.mul(&ff, &g);
        Proj {
            x: x3,
            y: y3,
            z: z3,
        }
    }

    fn jacobian_double(&self, p: &Proj) -> Proj {
        let f = self.field();
        if f.is_zero(&p.z) || f.is_zero(&p.y) {
            return self.projective_identity();
        }
        let xx = f.square(&p.x);
        let yy = f.square(&p.y);
        let yyyy = f.square(&yy);
        let zz = f.square(&p.z);
        let s = f.mul(&f.from_u64(4), &f.mul(&p.x, &yy));
        let m = f.add(&f.mul(&f.from_u64(3), &xx), &f.mul(self.coeff_a(), &f.square(&zz)));
        let x3 = f.sub(&f.square(&m), &f.double(&s));
        let y3 = f.sub(&f.mul(&m, &f.sub(&s, &x3)), &f.mul(&f.from_u64(8), &yyyy));
        let z3 = f.double(&f.mul(&p.y, &p.z));
        Proj {
            x: x3,
            y: y3,
            z: z3,
        }
    }

    fn jacobian_add(&self, p: &Proj, q: &Proj) -> Proj {
        let f = self.field();
        if f.is_zero(&p.z) {
            return *q;
        }
        if f.is_zero(&q.z) {
            return *p;
        }
        let z1z1 = f.square(&p.z);
        let z2z2 = f.square(&q.z);
        let u1 = f.mul(&p.x, &z2z2);
        let u2 = f.mul(&q.x, &z1z1);
        let s1 = f.mul(&p.y, &f.mul(&q.z, &z2z2));
        let s2 = f.mul(&q.y, &f.mul(&p.z, &z1z1));
        if u1 == u2 {
            return if s1 == s2 {
                self.jacobian_double(p)
            } else {
                self.projective_identity()
            };
        }
        let h = f.sub(&u2, &u1);
        let r = f.sub(&s2, &s1);
        let hh = f.square(&h);
        let hhh = f.mul(&hh, &h);
        let u1hh = f.mul(&u1, &hh);
        let x3 = f.sub(&f.sub(&f.square(&r), &hhh), &f.double(&u1hh));
        let y3 = f.sub(&f.mul(&r, &f.sub(&u1hh, &x3)), &f.mul(&s1, &hhh));
        let z3 = f.mul(&h, &f.mul(&p.z, &q.z));
        Proj {
            x: x3,
            y: y3,
            z: z3,
        }
    }
}
