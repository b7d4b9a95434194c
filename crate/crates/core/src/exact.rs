//! Exact scalars: Gaussian rationals `re + i·im` with arbitrary-precision parts.
//!
//! Real computations carry `im == 0`; multiplication short-circuits on zero
//! imaginary parts so the real case costs one rational product.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct ExactScalar {
    pub re: Rational,
    pub im: Rational,
}

impl ExactScalar {
    pub fn new(re: Rational, im: Rational) -> Self {
        ExactScalar { re, im }
    }

    pub fn real(re: Rational) -> Self {
        ExactScalar {
            re,
            im: Rational::zero(),
        }
    }

    pub fn from_int(v: i64) -> Self {
        Self::real(Rational::from_integer(BigInt::from(v)))
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        Self::real(Rational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn i() -> Self {
        ExactScalar {
            re: Rational::zero(),
            im: Rational::one(),
        }
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn to_complex64(&self) -> Complex64 {
        Complex64::new(rational_to_f64(&self.re), rational_to_f64(&self.im))
    }

    pub fn scale(&self, r: &Rational) -> Self {
        if self.im.is_zero() {
            Self::real(&self.re * r)
        } else {
            ExactScalar {
                re: &self.re * r,
                im: &self.im * r,
            }
        }
    }

    pub fn conj(&self) -> Self {
        ExactScalar {
            re: self.re.clone(),
            im: -self.im.clone(),
        }
    }
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            // exact for small parts; fall back to scaled division otherwise
            if n.abs() < 9.007_199_254_740_992e15 && d < 9.007_199_254_740_992e15 {
                return n / d;
            }
        }
    }
    let shift = r.numer().bits() as i64 - r.denom().bits() as i64;
    let num = if shift < 60 {
        r.numer() << ((60 - shift) as usize)
    } else {
        r.numer().clone()
    };
    let den = if shift >= 60 {
        r.denom() << ((shift - 60) as usize)
    } else {
        r.denom().clone()
    };
    let q = num / den;
    q.to_f64().unwrap_or(f64::NAN) * 2f64.powi((shift - 60) as i32)
}

/// Parses `"p/q"`, `"p"`, or a plain decimal such as `"-0.125"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let t = text.trim();
    if t.is_empty() {
        return Err(Error::Parse("empty rational".into()));
    }
    if let Some((n, d)) = t.split_once('/') {
        let num = BigInt::from_str(n.trim()).map_err(|_| Error::Parse(format!("bad numerator in `{t}`")))?;
        let den = BigInt::from_str(d.trim()).map_err(|_| Error::Parse(format!("bad denominator in `{t}`")))?;
        if den.is_zero() {
            return Err(Error::Parse(format!("zero denominator in `{t}`")));
        }
        return Ok(Rational::new(num, den));
    }
    if let Some((int_part, frac_part)) = t.split_once('.') {
        let negative = int_part.starts_with('-');
        let digits = format!("{}{}", int_part.trim_start_matches(['-', '+']), frac_part);
        if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(Error::Parse(format!("bad decimal `{t}`")));
        }
        let mut num = BigInt::from_str(&digits).map_err(|_| Error::Parse(format!("bad decimal `{t}`")))?;
        if negative {
            num = -num;
        }
        let den = num_traits::pow(BigInt::from(10), frac_part.len());
        return Ok(Rational::new(num, den));
    }
    BigInt::from_str(t)
        .map(Rational::from_integer)
        .map_err(|_| Error::Parse(format!("bad rational `{t}`")))
}

pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for ExactScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            write!(f, "{}", format_rational(&self.re))
        } else if self.re.is_zero() {
            write!(f, "{}i", format_rational(&self.im))
        } else {
            let sign = if self.im.is_negative() { '-' } else { '+' };
            write!(
                f,
                "{} {} {}i",
                format_rational(&self.re),
                sign,
                format_rational(&self.im.abs())
            )
        }
    }
}

impl Zero for ExactScalar {
    fn zero() -> Self {
        ExactScalar {
            re: Rational::zero(),
            im: Rational::zero(),
        }
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
}

impl One for ExactScalar {
    fn one() -> Self {
        Self::real(Rational::one())
    }
}

impl Add for ExactScalar {
    type Output = ExactScalar;
    fn add(mut self, rhs: ExactScalar) -> ExactScalar {
        self += &rhs;
        self
    }
}

impl<'a> Add<&'a ExactScalar> for &'a ExactScalar {
    type Output = ExactScalar;
    fn add(self, rhs: &ExactScalar) -> ExactScalar {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl AddAssign<&ExactScalar> for ExactScalar {
    fn add_assign(&mut self, rhs: &ExactScalar) {
        self.re += &rhs.re;
        if !rhs.im.is_zero() {
            self.im += &rhs.im;
        }
    }
}

impl Sub for ExactScalar {
    type Output = ExactScalar;
    fn sub(mut self, rhs: ExactScalar) -> ExactScalar {
        self -= &rhs;
        self
    }
}

impl<'a> Sub<&'a ExactScalar> for &'a ExactScalar {
    type Output = ExactScalar;
    fn sub(self, rhs: &ExactScalar) -> ExactScalar {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl SubAssign<&ExactScalar> for ExactScalar {
    fn sub_assign(&mut self, rhs: &ExactScalar) {
        self.re -= &rhs.re;
        if !rhs.im.is_zero() {
            self.im -= &rhs.im;
        }
    }
}

impl Neg for ExactScalar {
    type Output = ExactScalar;
    fn neg(self) -> ExactScalar {
        ExactScalar {
            re: -self.re,
            im: -self.im,
        }
    }
}

impl<'a> Mul<&'a ExactScalar> for &'a ExactScalar {
    type Output = ExactScalar;
    fn mul(self, rhs: &ExactScalar) -> ExactScalar {
        match (self.im.is_zero(), rhs.im.is_zero()) {
            (true, true) => ExactScalar::real(&self.re * &rhs.re),
            (true, false) => ExactScalar::new(&self.re * &rhs.re, &self.re * &rhs.im),
            (false, true) => ExactScalar::new(&self.re * &rhs.re, &self.im * &rhs.re),
            (false, false) => ExactScalar::new(
                &self.re * &rhs.re - &self.im * &rhs.im,
                &self.re * &rhs.im + &self.im * &rhs.re,
            ),
        }
    }
}

impl Mul for ExactScalar {
    type Output = ExactScalar;
    fn mul(self, rhs: ExactScalar) -> ExactScalar {
        &self * &rhs
    }
}

impl MulAssign<&ExactScalar> for ExactScalar {
    fn mul_assign(&mut self, rhs: &ExactScalar) {
        *self = &*self * rhs;
    }
}

impl From<i64> for ExactScalar {
    fn from(v: i64) -> Self {
        ExactScalar::from_int(v)
    }
}

impl From<Rational> for ExactScalar {
    fn from(r: Rational) -> Self {
        ExactScalar::real(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rational("2/3").unwrap(), Rational::new(2.into(), 3.into()));
        assert_eq!(parse_rational("-0.125").unwrap(), Rational::new((-1).into(), 8.into()));
        assert_eq!(parse_rational("7").unwrap(), Rational::from_integer(7.into()));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn gaussian_product() {
        let a = ExactScalar::new(parse_rational("1/2").unwrap(), parse_rational("1").unwrap());
        let b = ExactScalar::new(parse_rational("2").unwrap(), parse_rational("-1/3").unwrap());
        // (1/2 + i)(2 - i/3) = 1 + 1/3 + i(2 - 1/6)
        let p = &a * &b;
        assert_eq!(p.re, parse_rational("4/3").unwrap());
        assert_eq!(p.im, parse_rational("11/6").unwrap());
        assert_eq!(p.to_string(), "4/3 + 11/6i");
    }

    #[test]
    fn large_rationals_convert_to_f64() {
        let big = Rational::new(
            num_traits::pow(BigInt::from(3), 200) + 1,
            num_traits::pow(BigInt::from(3), 201),
        );
        assert!((rational_to_f64(&big) - 1.0 / 3.0).abs() < 1e-15);
    }
}
