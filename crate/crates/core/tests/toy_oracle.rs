//! Exhaustive checks of the toy profile against a from-scratch affine
//! implementation over GF(17): y^2 = x^3 + 2x + 2, G = (5, 1).

use lakee_core::curve::{CurveProfile, EcPoint, PointRejection, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const P: i64 = 17;
const A: i64 = 2;
const B: i64 = 2;

type Pt = Option<(i64, i64)>;

fn md(v: i64) -> i64 {
    v.rem_euclid(P)
}

fn inv(v: i64) -> i64 {
    (1..P).find(|i| md(v * i) == 1).unwrap()
}

fn add(p: Pt, q: Pt) -> Pt {
    let (Some((x1, y1)), Some((x2, y2))) = (p, q) else {
        return p.or(q);
    };
    if x1 == x2 && md(y1 + y2) == 0 {
        return None;
    }
    let l = if (x1, y1) == (x2, y2) {
        md((3 * x1 * x1 + A) * inv(2 * y1))
    } else {
        md((y2 - y1) * inv(x2 - x1))
    };
    let x3 = md(l * l - x1 - x2);
    Some((x3, md(l * (x1 - x3) - y1)))
}

fn mul(k: u64, p: Pt) -> Pt {
    (0..k).fold(None, |acc, _| add(acc, p))
}

fn lib(p: Pt) -> EcPoint {
    match p {
        None => EcPoint::Infinity,
        Some((x, y)) => EcPoint::affine(x as u32, y as u32),
    }
}

fn all_points() -> Vec<Pt> {
    let mut pts = vec![None];
    for x in 0..P {
        for y in 0..P {
            if md(y * y - x * x * x - A * x - B) == 0 {
                pts.push(Some((x, y)));
            }
        }
    }
    pts
}

const G: Pt = Some((5, 1));

#[test]
fn group_has_order_19_and_matches_table() {
    let pts = all_points();
    assert_eq!(pts.len(), 19);
    let curve = CurveProfile::toy();
    assert_eq!(curve.order(), &19u32.into());
    assert_eq!(curve.cofactor(), &1u32.into());
    let expected = [
        (5, 1), (6, 3), (10, 6), (3, 1), (9, 16), (16, 13), (0, 6), (13, 7), (7, 6),
        (7, 11), (13, 10), (0, 11), (16, 4), (9, 1), (3, 16), (10, 11), (6, 14), (5, 16),
    ];
    for (k, want) in (1u64..).zip(expected) {
        assert_eq!(mul(k, G), Some(want), "oracle {k}G");
        let s = Scalar::from_u64(k, &curve).unwrap();
        assert_eq!(curve.scalar_mult(&s, curve.generator()).unwrap(), lib(Some(want)), "{k}G");
    }
    assert_eq!(mul(19, G), None);
}

#[test]
fn addition_agrees_on_every_pair() {
    let curve = CurveProfile::toy();
    let pts = all_points();
    for &p in &pts {
        for &q in &pts {
            assert_eq!(curve.point_add(&lib(p), &lib(q)).unwrap(), lib(add(p, q)), "{p:?} + {q:?}");
        }
        assert_eq!(lib(add(p, lib_neg(p))), EcPoint::Infinity);
        assert_eq!(curve.negate(&lib(p)), lib(lib_neg(p)));
    }
}

fn lib_neg(p: Pt) -> Pt {
    p.map(|(x, y)| (x, md(-y)))
}

#[test]
fn scalar_mult_of_every_point_matches_repeated_addition() {
    let curve = CurveProfile::toy();
    for p in all_points().into_iter().flatten() {
        for k in 1..19 {
            let s = Scalar::from_u64(k, &curve).unwrap();
            assert_eq!(curve.scalar_mult(&s, &lib(Some(p))).unwrap(), lib(mul(k, Some(p))));
        }
    }
    assert!(Scalar::from_u64(0, &curve).is_err());
    assert!(Scalar::from_u64(19, &curve).is_err());
}

#[test]
fn validation_accepts_exactly_the_group_minus_identity() {
    let curve = CurveProfile::toy();
    let group = all_points();
    for x in 0..P {
        for y in 0..P {
            let candidate = Some((x, y));
            let verdict = curve.validate_point(&lib(candidate));
            if group.contains(&candidate) {
                assert!(verdict.is_ok(), "({x}, {y})");
            } else {
                assert_eq!(verdict.unwrap_err(), PointRejection::OffCurve, "({x}, {y})");
            }
        }
    }
    assert_eq!(curve.validate_point(&EcPoint::Infinity).unwrap_err(), PointRejection::InfinityPoint);
    assert_eq!(
        curve.validate_point(&EcPoint::affine(5u32 + 17, 1u32)).unwrap_err(),
        PointRejection::OffCurve
    );
}

#[test]
fn scalar_mult_distributes() {
    let curve = CurveProfile::toy();
    let g = curve.generator();
    let m = |k: u64| curve.scalar_mult(&Scalar::from_u64(k, &curve).unwrap(), g).unwrap();
    for a in 1..19u64 {
        for b in 1..19u64 {
            let sum = curve.point_add(&m(a), &m(b)).unwrap();
            let expected = if (a + b) % 19 == 0 { EcPoint::Infinity } else { m((a + b) % 19) };
            assert_eq!(sum, expected);
            let nested = curve
                .scalar_mult(&Scalar::from_u64(a, &curve).unwrap(), &m(b))
                .unwrap();
            assert_eq!(nested, m(a * b % 19));
        }
    }
}

#[test]
fn ecdh_agrees_for_random_pairs() {
    let curve = CurveProfile::toy();
    let mut rng = ChaCha20Rng::seed_from_u64(0x70_79);
    for _ in 0..1000 {
        let a = Scalar::random(&mut rng, &curve);
        let b = Scalar::from_u64(rng.random_range(1..19), &curve).unwrap();
        let pa = curve.validate_point(&curve.scalar_mult(&a, curve.generator()).unwrap()).unwrap();
        let pb = curve.validate_point(&curve.scalar_mult(&b, curve.generator()).unwrap()).unwrap();
        let s1 = curve.ecdh_shared_secret(&a, &pb).unwrap();
        let s2 = curve.ecdh_shared_secret(&b, &pa).unwrap();
        assert_eq!(s1, s2);
        let ab = a.value() * b.value() % 19u32;
        let oracle = mul(u64::try_from(&ab).unwrap(), G);
        assert_eq!(s1, lib(oracle));
    }
}
