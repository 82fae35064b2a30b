//! Scalar abstraction shared by the dense kernels.
//!
//! Every kernel in [`crate::numerics`] is written against [`Scalar`], a complex
//! field with a square root. Two backends exist: `Complex64` and [`ExtComplex`],
//! a complex number over a binary floating-point type whose precision is fixed
//! by a [`Precision`] context at construction time. Values never change
//! precision; kernels create constants through the context of their inputs.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use dashu_base::{Abs, SquareRoot};
use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use num_complex::Complex64;

/// Complex scalar with field operations, conjugation and a principal square root.
pub trait Scalar:
    Clone
    + fmt::Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Construction context (`()` for double, the bit precision for extended).
    type Ctx: Copy + fmt::Debug + Send + Sync + PartialEq;

    fn ctx(&self) -> Self::Ctx;
    fn from_c64(z: Complex64, ctx: Self::Ctx) -> Self;
    fn to_c64(&self) -> Complex64;

    /// Unit roundoff of the context.
    fn epsilon(ctx: Self::Ctx) -> f64;

    fn conj(&self) -> Self;
    /// `|z|` as a real-valued scalar of the same precision.
    fn modulus(&self) -> Self;
    /// Principal square root (branch cut on the negative real axis).
    fn sqrt(&self) -> Self;
    fn is_zero(&self) -> bool;

    fn zero(ctx: Self::Ctx) -> Self {
        Self::from_c64(Complex64::new(0.0, 0.0), ctx)
    }

    fn one(ctx: Self::Ctx) -> Self {
        Self::from_c64(Complex64::new(1.0, 0.0), ctx)
    }

    fn from_f64(x: f64, ctx: Self::Ctx) -> Self {
        Self::from_c64(Complex64::new(x, 0.0), ctx)
    }

    /// `|z|` rounded to double, used for pivoting and thresholds.
    fn abs_f64(&self) -> f64 {
        self.to_c64().norm()
    }

    /// `|z|^2` as a real-valued scalar.
    fn norm_sqr(&self) -> Self {
        self.clone() * self.conj()
    }

    fn is_finite(&self) -> bool {
        let z = self.to_c64();
        z.re.is_finite() && z.im.is_finite()
    }
}

impl Scalar for Complex64 {
    type Ctx = ();

    fn ctx(&self) {}

    fn from_c64(z: Complex64, _ctx: ()) -> Self {
        z
    }

    fn to_c64(&self) -> Complex64 {
        *self
    }

    fn epsilon(_ctx: ()) -> f64 {
        f64::EPSILON / 2.0
    }

    fn conj(&self) -> Self {
        Complex64::conj(self)
    }

    fn modulus(&self) -> Self {
        Complex64::new(self.norm(), 0.0)
    }

    fn sqrt(&self) -> Self {
        Complex64::sqrt(*self)
    }

    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }

    fn abs_f64(&self) -> f64 {
        self.norm()
    }
}

pub type Real = FBig<HalfEven, 2>;

/// Binary precision context for [`ExtComplex`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Precision {
    bits: usize,
}

impl Precision {
    /// Guard bits added on top of the requested decimal digits.
    const GUARD_BITS: usize = 8;

    pub fn from_bits(bits: usize) -> Self {
        Self { bits: bits.max(64) }
    }

    /// Context carrying at least `digits` significant decimal digits.
    pub fn from_digits(digits: u32) -> Self {
        let bits = (f64::from(digits) * std::f64::consts::LOG2_10).ceil() as usize;
        Self::from_bits(bits + Self::GUARD_BITS)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    /// Significant decimal digits carried, excluding guard bits.
    pub fn digits(&self) -> u32 {
        ((self.bits.saturating_sub(Self::GUARD_BITS)) as f64 / std::f64::consts::LOG2_10) as u32
    }

    pub fn epsilon(&self) -> f64 {
        2f64.powi(-(self.bits as i32))
    }
}

impl Default for Precision {
    fn default() -> Self {
        Self::from_digits(40)
    }
}

/// Extended-precision complex number.
#[derive(Clone, PartialEq)]
pub struct ExtComplex {
    re: Real,
    im: Real,
}

impl ExtComplex {
    fn real_from(x: f64, prec: Precision) -> Real {
        Real::try_from(x)
            .expect("extended scalars are lifted from finite doubles")
            .with_precision(prec.bits)
            .value()
    }

    fn from_parts(re: Real, im: Real) -> Self {
        Self { re, im }
    }

    pub fn precision(&self) -> Precision {
        Precision::from_bits(self.re.precision().max(self.im.precision()))
    }

    pub fn re_f64(&self) -> f64 {
        self.re.to_f64().value()
    }

    pub fn im_f64(&self) -> f64 {
        self.im.to_f64().value()
    }

    fn real_sqrt(x: &Real) -> Real {
        if x.sign() == dashu_base::Sign::Negative || *x == Real::ZERO {
            return Real::ZERO.with_precision(x.precision()).value();
        }
        x.sqrt()
    }
}

impl fmt::Debug for ExtComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:e}{:+e}i)", self.re_f64(), self.im_f64())
    }
}

impl Add for ExtComplex {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_parts(self.re + rhs.re, self.im + rhs.im)
    }
}

impl Sub for ExtComplex {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_parts(self.re - rhs.re, self.im - rhs.im)
    }
}

impl Mul for ExtComplex {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let re = &self.re * &rhs.re - &self.im * &rhs.im;
        let im = &self.re * &rhs.im + &self.im * &rhs.re;
        Self::from_parts(re, im)
    }
}

impl Div for ExtComplex {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let den = &rhs.re * &rhs.re + &rhs.im * &rhs.im;
        assert!(den != Real::ZERO, "extended-precision division by zero");
        let re = (&self.re * &rhs.re + &self.im * &rhs.im) / &den;
        let im = (&self.im * &rhs.re - &self.re * &rhs.im) / &den;
        Self::from_parts(re, im)
    }
}

impl Neg for ExtComplex {
    type Output = Self;
    fn neg(self) -> Self {
        Self::from_parts(-self.re, -self.im)
    }
}

impl Scalar for ExtComplex {
    type Ctx = Precision;

    fn ctx(&self) -> Precision {
        self.precision()
    }

    fn from_c64(z: Complex64, ctx: Precision) -> Self {
        Self::from_parts(Self::real_from(z.re, ctx), Self::real_from(z.im, ctx))
    }

    fn to_c64(&self) -> Complex64 {
        Complex64::new(self.re_f64(), self.im_f64())
    }

    fn epsilon(ctx: Precision) -> f64 {
        ctx.epsilon()
    }

    fn conj(&self) -> Self {
        Self::from_parts(self.re.clone(), -self.im.clone())
    }

    fn modulus(&self) -> Self {
        let sq = &self.re * &self.re + &self.im * &self.im;
        let zero = Real::ZERO.with_precision(sq.precision()).value();
        Self::from_parts(Self::real_sqrt(&sq), zero)
    }

    fn sqrt(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let r = Self::real_sqrt(&(&self.re * &self.re + &self.im * &self.im));
        let two = Self::real_from(2.0, self.precision());
        if self.re.sign() != dashu_base::Sign::Negative {
            let s = Self::real_sqrt(&((&r + &self.re) / &two));
            let t = &self.im / (&s * &two);
            Self::from_parts(s, t)
        } else {
            let mut t = Self::real_sqrt(&((&r - &self.re) / &two));
            if self.im.sign() == dashu_base::Sign::Negative {
                t = -t;
            }
            let s = &self.im / (&t * &two);
            Self::from_parts(s, t)
        }
    }

    fn is_zero(&self) -> bool {
        self.re == Real::ZERO && self.im == Real::ZERO
    }

    fn abs_f64(&self) -> f64 {
        let z = self.modulus();
        z.re.abs().to_f64().value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_from_digits() {
        let p = Precision::from_digits(40);
        assert!(p.bits() >= 133);
        assert!(p.digits() >= 40);
        assert!(p.epsilon() < 1e-40);
    }

    #[test]
    fn ext_roundtrip_is_exact_for_doubles() {
        let ctx = Precision::default();
        let z = Complex64::new(0.1, -3.7e-200);
        assert_eq!(ExtComplex::from_c64(z, ctx).to_c64(), z);
    }

    #[test]
    fn ext_arithmetic_beats_double() {
        let ctx = Precision::from_digits(40);
        let one = ExtComplex::one(ctx);
        let three = ExtComplex::from_f64(3.0, ctx);
        let third = one.clone() / three.clone();
        let err = (third * three - one).abs_f64();
        assert!(err < 1e-40);
    }

    #[test]
    fn ext_sqrt_matches_principal_branch() {
        let ctx = Precision::default();
        for z in [
            Complex64::new(4.0, 0.0),
            Complex64::new(-9.0, 0.0),
            Complex64::new(0.0, 2.0),
            Complex64::new(-1.0, -1e-3),
            Complex64::new(3.0, -4.0),
        ] {
            let s = ExtComplex::from_c64(z, ctx).sqrt().to_c64();
            assert!((s - z.sqrt()).norm() < 1e-14 * (1.0 + z.norm()), "{z}");
        }
    }

    #[test]
    fn ext_modulus_and_conj() {
        let ctx = Precision::default();
        let z = ExtComplex::from_c64(Complex64::new(3.0, 4.0), ctx);
        assert_eq!(z.modulus().to_c64(), Complex64::new(5.0, 0.0));
        assert_eq!(z.conj().to_c64(), Complex64::new(3.0, -4.0));
        assert_eq!(z.norm_sqr().to_c64(), Complex64::new(25.0, 0.0));
    }
}
