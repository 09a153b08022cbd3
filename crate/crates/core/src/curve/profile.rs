use std::path::Path;
use std::sync::{Arc, OnceLock};

use num_bigint::BigUint;
use num_traits::{Num, One, Zero};
use serde::Deserialize;

use super::field::{Fe, MontField};
use super::{CurveError, EcPoint, EmbeddingDegree};

/// Curve equation shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CurveForm {
    /// y^2 = x^3 + a·x + b
    Weierstrass { a: BigUint, b: BigUint },
    /// a·x^2 + y^2 = 1 + d·x^2·y^2
    Edwards { a: BigUint, d: BigUint },
}

/// Raw parameters for [`CurveProfile::new`]. All integers are reduced mod p.
#[derive(Clone, Debug)]
pub struct CurveParams {
    pub name: String,
    pub prime: BigUint,
    pub form: CurveForm,
    pub generator: (BigUint, BigUint),
    /// Order of the generator. `None` asks for brute-force enumeration, which
    /// is only available for fields below 2^24.
    pub order: Option<BigUint>,
    pub cofactor: Option<BigUint>,
    pub nominal_point_bits: u32,
}

/// A validated set of curve-domain parameters.
#[derive(Clone, Debug)]
pub struct CurveProfile {
    name: String,
    prime: BigUint,
    form: CurveForm,
    generator: EcPoint,
    double_generator: EcPoint,
    order: BigUint,
    cofactor: BigUint,
    nominal_point_bits: u32,
    test_only: bool,
    field: MontField,
    coeff_a: Fe,
    /// b for Weierstrass, d for Edwards.
    coeff_bd: Fe,
    coord_len: usize,
}

const MOV_BOUND: u32 = 100;
const ENUMERATION_LIMIT_BITS: u64 = 24;

const ED448_P: &str = "fffffffffffffffffffffffffffffffffffffffffffffffffffffffeffffffffffffffffffffffffffffffffffffffffffffffffffffffff";
const ED448_GX: &str = "4f1970c66bed0ded221d15a622bf36da9e146570470f1767ea6de324a3d3a46412ae1af72ab66511433b80e18b00938e2626a82bc70cc05e";
const ED448_GY: &str = "693f46716eb6bc248876203756c9c7624bea73736ca3984087789c1e05a0c2d73ad3ff1ce67c39c4fdbd132c4ed7c8ad9808795bf230fa14";
const ED448_N: &str = "3fffffffffffffffffffffffffffffffffffffffffffffffffffffff7cca23e9c44edb49aed63690216cc2728dc58f552378c292ab5844f3";

fn hex(s: &str) -> BigUint {
    BigUint::from_str_radix(s, 16).expect("constant is valid hex")
}

impl CurveProfile {
    pub fn new(params: CurveParams) -> Result<Self, CurveError> {
        let invalid = |msg: &str| CurveError::InvalidProfile(format!("{}: {msg}", params.name));
        let p = params.prime.clone();
        if p < BigUint::from(5u32) || !is_probable_prime(&p) {
            return Err(invalid("field modulus is not an odd prime > 3"));
        }
        let field = MontField::new(&p).ok_or_else(|| invalid("field modulus too large"))?;
        let form = match params.form {
            CurveForm::Weierstrass { a, b } => CurveForm::Weierstrass { a: a % &p, b: b % &p },
            CurveForm::Edwards { a, d } => CurveForm::Edwards { a: a % &p, d: d % &p },
        };
        let (coeff_a, coeff_bd) = match &form {
            CurveForm::Weierstrass { a, b } => {
                let (fa, fb) = (field.from_big(a), field.from_big(b));
                // 4a^3 + 27b^2 != 0
                let a3 = field.mul(&field.square(&fa), &fa);
                let disc = field.add(
                    &field.mul(&field.from_u64(4), &a3),
                    &field.mul(&field.from_u64(27), &field.square(&fb)),
                );
                if field.is_zero(&disc) {
                    return Err(invalid("singular Weierstrass curve"));
                }
                (fa, fb)
            }
            CurveForm::Edwards { a, d } => {
                let (fa, fd) = (field.from_big(a), field.from_big(d));
                if field.is_zero(&fa) || field.is_zero(&fd) || fa == fd {
                    return Err(invalid("degenerate Edwards coefficients"));
                }
                if !field.is_square(&fa) || field.is_square(&fd) {
                    return Err(invalid(
                        "Edwards curve needs square a and non-square d for a complete addition law",
                    ));
                }
                (fa, fd)
            }
        };

        let coord_len = p.bits().div_ceil(8) as usize;
        let mut profile = CurveProfile {
            name: params.name.clone(),
            prime: p.clone(),
            form,
            generator: EcPoint::Infinity,
            double_generator: EcPoint::Infinity,
            order: BigUint::one(),
            cofactor: BigUint::one(),
            nominal_point_bits: params.nominal_point_bits,
            test_only: false,
            field,
            coeff_a,
            coeff_bd,
            coord_len,
        };

        let (gx, gy) = params.generator;
        let generator = EcPoint::affine(gx, gy);
        if profile.is_identity(&generator) || !profile.is_on_curve(&generator) {
            return Err(invalid("generator does not satisfy the curve equation"));
        }
        profile.generator = generator.clone();

        let (order, cofactor) = match (params.order, params.cofactor) {
            (Some(n), cofactor) => {
                let cofactor = match cofactor {
                    Some(h) => h,
                    None if p.bits() <= ENUMERATION_LIMIT_BITS => {
                        let total = profile.count_points();
                        if &total % &n != BigUint::zero() {
                            return Err(invalid("order does not divide the group order"));
                        }
                        total / &n
                    }
                    None => return Err(invalid("cofactor required for large fields")),
                };
                (n, cofactor)
            }
            (None, _) if p.bits() <= ENUMERATION_LIMIT_BITS => {
                let total = profile.count_points();
                let n = profile.generator_order_by_addition();
                let h = &total / &n;
                (n, h)
            }
            (None, _) => return Err(invalid("order required for large fields")),
        };
        if order <= BigUint::one() || cofactor.is_zero() {
            return Err(invalid("order and cofactor must be positive"));
        }
        profile.order = order;
        profile.cofactor = cofactor;
        if !profile.mul_unchecked(&profile.order, &generator).is_infinity() {
            return Err(invalid("n·G is not the identity"));
        }
        profile.double_generator = profile.add_unchecked(&generator, &generator);
        profile.test_only = p.bits() < 128
            || profile.embedding_degree_check(MOV_BOUND)? != EmbeddingDegree::Pass;
        Ok(profile)
    }

    /// The Weierstrass curve y^2 = x^3 + 2x + 2 over F_17 with G = (5, 1).
    /// Its order is found by enumeration when the profile is built.
    pub fn toy() -> Arc<CurveProfile> {
        static TOY: OnceLock<Arc<CurveProfile>> = OnceLock::new();
        TOY.get_or_init(|| {
            Arc::new(
                CurveProfile::new(CurveParams {
                    name: "toy".into(),
                    prime: BigUint::from(17u32),
                    form: CurveForm::Weierstrass {
                        a: BigUint::from(2u32),
                        b: BigUint::from(2u32),
                    },
                    generator: (BigUint::from(5u32), BigUint::from(1u32)),
                    order: None,
                    cofactor: None,
                    nominal_point_bits: 5,
                })
                .expect("toy profile is well formed"),
            )
        })
        .clone()
    }

    /// Ed448-Goldilocks: x^2 + y^2 = 1 - 39081·x^2·y^2 over p = 2^448 - 2^224 - 1,
    /// with the standard base point and prime subgroup order.
    pub fn ed448() -> Arc<CurveProfile> {
        static ED448: OnceLock<Arc<CurveProfile>> = OnceLock::new();
        ED448
            .get_or_init(|| {
                let p = hex(ED448_P);
                let d = &p - 39081u32;
                Arc::new(
                    CurveProfile::new(CurveParams {
                        name: "ed448".into(),
                        prime: p,
                        form: CurveForm::Edwards {
                            a: BigUint::one(),
                            d,
                        },
                        generator: (hex(ED448_GX), hex(ED448_GY)),
                        order: Some(hex(ED448_N)),
                        cofactor: Some(BigUint::from(4u32)),
                        nominal_point_bits: 224,
                    })
                    .expect("ed448 profile is well formed"),
                )
            })
            .clone()
    }

    pub fn by_name(name: &str) -> Option<Arc<CurveProfile>> {
        match name {
            "toy" => Some(Self::toy()),
            "ed448" => Some(Self::ed448()),
            _ => None,
        }
    }

    /// Parses a profile from its TOML description:
    ///
    /// ```toml
    /// name = "toy"
    /// form = "weierstrass"       # or "edwards"
    /// p = "17"
    /// a = "2"
    /// b = "2"                    # "d" for edwards
    /// gx = "5"
    /// gy = "1"
    /// n = "19"                   # optional for fields below 2^24
    /// cofactor = "1"
    /// nominal_point_bits = 5
    /// ```
    ///
    /// Integers are decimal or `0x` hex strings and may be negative.
    pub fn from_config_str(text: &str) -> Result<Self, CurveError> {
        let raw: RawProfile =
            toml::from_str(text).map_err(|e| CurveError::InvalidProfile(e.to_string()))?;
        raw.into_params().and_then(CurveProfile::new)
    }

    pub fn from_config_file(path: &Path) -> Result<Self, CurveError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CurveError::InvalidProfile(format!("{}: {e}", path.display())))?;
        Self::from_config_str(&text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn prime(&self) -> &BigUint {
        &self.prime
    }

    pub fn form(&self) -> &CurveForm {
        &self.form
    }

    pub fn generator(&self) -> &EcPoint {
        &self.generator
    }

    /// 2·G, precomputed for the key-rotation branch.
    pub fn double_generator(&self) -> &EcPoint {
        &self.double_generator
    }

    pub fn order(&self) -> &BigUint {
        &self.order
    }

    pub fn cofactor(&self) -> &BigUint {
        &self.cofactor
    }

    pub fn nominal_point_bits(&self) -> u32 {
        self.nominal_point_bits
    }

    /// Set for profiles unfit for production: tiny fields or an embedding
    /// degree at most 100.
    pub fn is_test_only(&self) -> bool {
        self.test_only
    }

    /// Width in bytes of one encoded coordinate.
    pub fn coordinate_len(&self) -> usize {
        self.coord_len
    }

    pub fn point_len(&self) -> usize {
        2 * self.coord_len
    }

    pub(crate) fn field(&self) -> &MontField {
        &self.field
    }

    pub(crate) fn coeff_a(&self) -> &Fe {
        &self.coeff_a
    }

    pub(crate) fn coeff_d(&self) -> &Fe {
        &self.coeff_bd
    }

    pub(crate) fn satisfies_equation(&self, x: &BigUint, y: &BigUint) -> bool {
        let f = &self.field;
        let (x, y) = (f.from_big(x), f.from_big(y));
        let (x2, y2) = (f.square(&x), f.square(&y));
        match self.form {
            CurveForm::Weierstrass { .. } => {
                let rhs = f.add(&f.mul(&x2, &x), &f.add(&f.mul(&self.coeff_a, &x), &self.coeff_bd));
                y2 == rhs
            }
            CurveForm::Edwards { .. } => {
                let lhs = f.add(&f.mul(&self.coeff_a, &x2), &y2);
                let rhs = f.add(&f.one(), &f.mul(&self.coeff_bd, &f.mul(&x2, &y2)));
                lhs == rhs
            }
        }
    }

    /// #E(F_p) by Legendre-symbol counting; only for small fields.
    fn count_points(&self) -> BigUint {
        let p = u64::try_from(&self.prime).expect("small field");
        let legendre = |v: u64| -> i64 {
            if v == 0 {
                return 0;
            }
            if BigUint::from(v).modpow(&BigUint::from((p - 1) / 2), &self.prime).is_one() {
                1
            } else {
                -1
            }
        };
        let inv = |v: u64| BigUint::from(v).modpow(&BigUint::from(p - 2), &self.prime);
        let mut count: i64 = 0;
        match &self.form {
            CurveForm::Weierstrass { a, b } => {
                let (a, b) = (u64::try_from(a).unwrap(), u64::try_from(b).unwrap());
                count += 1; // identity
                for x in 0..p {
                    let rhs = ((x * x % p) * x % p + a * x % p + b) % p;
                    count += 1 + legendre(rhs);
                }
            }
            CurveForm::Edwards { a, d } => {
                let (a, d) = (u64::try_from(a).unwrap(), u64::try_from(d).unwrap());
                for x in 0..p {
                    let x2 = x * x % p;
                    let num = (1 + p - a * x2 % p) % p;
                    let den = (1 + p - d * x2 % p) % p;
                    if den == 0 {
                        continue;
                    }
                    let rhs = u64::try_from(&((BigUint::from(num) * inv(den)) % &self.prime))
                        .unwrap();
                    count += 1 + legendre(rhs);
                }
            }
        }
        BigUint::from(count as u64)
    }

    fn generator_order_by_addition(&self) -> BigUint {
        let mut acc = self.generator.clone();
        let mut n: u64 = 1;
        while !acc.is_infinity() {
            acc = self.add_unchecked(&acc, &self.generator);
            n += 1;
        }
        BigUint::from(n)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    name: String,
    form: String,
    p: String,
    a: String,
    b: Option<String>,
    d: Option<String>,
    gx: String,
    gy: String,
    n: Option<String>,
    cofactor: Option<String>,
    nominal_point_bits: u32,
}

fn parse_int(field: &str, text: &str, p: &BigUint) -> Result<BigUint, CurveError> {
    let bad = || CurveError::InvalidProfile(format!("field `{field}`: cannot parse {text:?}"));
    let t = text.trim();
    let (negative, digits) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let magnitude = match digits.strip_prefix("0x").or_else(|| digits.strip_prefix("0X")) {
        Some(h) => BigUint::from_str_radix(h, 16),
        None => BigUint::from_str_radix(digits, 10),
    }
    .map_err(|_| bad())?;
    if negative {
        let reduced = magnitude % p;
        Ok(if reduced.is_zero() { reduced } else { p - reduced })
    } else {
        Ok(magnitude)
    }
}

impl RawProfile {
    fn into_params(self) -> Result<CurveParams, CurveError> {
        let one = BigUint::one();
        let p = parse_int("p", &self.p, &one)?;
        let int = |name: &str, v: &str| parse_int(name, v, &p);
        let missing = |name: &str| CurveError::InvalidProfile(format!("missing field `{name}`"));
        let form = match self.form.as_str() {
            "weierstrass" => CurveForm::Weierstrass {
                a: int("a", &self.a)?,
                b: int("b", self.b.as_deref().ok_or_else(|| missing("b"))?)?,
            },
            "edwards" => CurveForm::Edwards {
                a: int("a", &self.a)?,
                d: int("d", self.d.as_deref().ok_or_else(|| missing("d"))?)?,
            },
            other => return Err(CurveError::InvalidProfile(format!("unknown form {other:?}"))),
        };
        Ok(CurveParams {
            name: self.name,
            prime: p.clone(),
            form,
            generator: (int("gx", &self.gx)?, int("gy", &self.gy)?),
            order: self.n.as_deref().map(|v| int("n", v)).transpose()?,
            cofactor: self.cofactor.as_deref().map(|v| int("cofactor", v)).transpose()?,
            nominal_point_bits: self.nominal_point_bits,
        })
    }
}

/// Miller-Rabin with the first 24 primes as witnesses.
pub(crate) fn is_probable_prime(n: &BigUint) -> bool {
    const WITNESSES: [u32; 24] = [
        2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    ];
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &w in &WITNESSES {
        let w = BigUint::from(w);
        if n == &w {
            return true;
        }
        if (n % &w).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for &w in &WITNESSES {
        let mut x = BigUint::from(w).modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_order_found_by_enumeration() {
        let toy = CurveProfile::toy();
        assert_eq!(toy.order(), &BigUint::from(19u32));
        assert_eq!(toy.cofactor(), &BigUint::one());
        assert!(toy.is_test_only());
    }

    #[test]
    fn ed448_loads_and_is_production_grade() {
        let ed = CurveProfile::ed448();
        assert_eq!(ed.cofactor(), &BigUint::from(4u32));
        assert_eq!(ed.coordinate_len(), 56);
        assert!(!ed.is_test_only());
        assert!(ed.mul_unchecked(ed.order(), ed.generator()).is_infinity());
    }

    #[test]
    fn minus_x_squared_form_is_rejected_for_ed448_prime() {
        // -1 is a non-square mod 2^448 - 2^224 - 1, so the a = -1 variant has
        // no complete addition law and the standard base point is not on it.
        let p = hex(ED448_P);
        let err = CurveProfile::new(CurveParams {
            name: "twisted".into(),
            prime: p.clone(),
            form: CurveForm::Edwards {
                a: &p - 1u32,
                d: &p - 39081u32,
            },
            generator: (hex(ED448_GX), hex(ED448_GY)),
            order: Some(hex(ED448_N)),
            cofactor: Some(BigUint::from(4u32)),
            nominal_point_bits: 224,
        });
        assert!(matches!(err, Err(CurveError::InvalidProfile(_))));
    }

    #[test]
    fn config_round_trip() {
        let text = r#"
            name = "toy-from-file"
            form = "weierstrass"
            p = "17"
            a = "2"
            b = "-15"
            gx = "5"
            gy = "1"
            nominal_point_bits = 5
        "#;
        let profile = CurveProfile::from_config_str(text).unwrap();
        assert_eq!(profile.order(), &BigUint::from(19u32));
        assert_eq!(profile.form(), CurveProfile::toy().form());
    }

    #[test]
    fn config_errors() {
        let off_curve = r#"
            name = "bad"
            form = "weierstrass"
            p = "17"
            a = "2"
            b = "2"
            gx = "0"
            gy = "0"
            nominal_point_bits = 5
        "#;
        assert!(CurveProfile::from_config_str(off_curve).is_err());
        let composite = off_curve.replace("\"17\"", "\"21\"");
        assert!(CurveProfile::from_config_str(&composite).is_err());
        assert!(CurveProfile::from_config_str("name = 1").is_err());
    }

    #[test]
    fn miller_rabin() {
        let primes = [5u64, 17, 19, 65537, 1_000_000_007];
        let composites = [9u64, 21, 561, 1105, 1_000_000_008];
        for p in primes {
            assert!(is_probable_prime(&BigUint::from(p)), "{p}");
        }
        for c in composites {
            assert!(!is_probable_prime(&BigUint::from(c)), "{c}");
        }
        assert!(is_probable_prime(&hex(ED448_P)));
        assert!(is_probable_prime(&hex(ED448_N)));
    }
}
