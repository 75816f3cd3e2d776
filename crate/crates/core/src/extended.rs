//! Extended-range reals stored as (sign, natural log of magnitude).
//!
//! Bound formulas routinely combine `cosh^2(40)`-sized factors with sample
//! sizes near `1e70`; carrying the logarithm keeps ~15 significant digits
//! without overflow. Conversion to `f64` only happens at report time.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtReal {
    sign: i8,
    ln_abs: f64,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal {
        sign: 0,
        ln_abs: f64::NEG_INFINITY,
    };
    pub const ONE: ExtReal = ExtReal {
        sign: 1,
        ln_abs: 0.0,
    };
    pub const INFINITY: ExtReal = ExtReal {
        sign: 1,
        ln_abs: f64::INFINITY,
    };

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else if x.is_nan() {
            ExtReal {
                sign: 1,
                ln_abs: f64::NAN,
            }
        } else {
            ExtReal {
                sign: if x > 0.0 { 1 } else { -1 },
                ln_abs: x.abs().ln(),
            }
        }
    }

    /// Positive value `exp(ln_value)`.
    pub fn from_ln(ln_value: f64) -> Self {
        if ln_value == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            ExtReal {
                sign: 1,
                ln_abs: ln_value,
            }
        }
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    pub fn is_infinite(&self) -> bool {
        self.sign != 0 && self.ln_abs == f64::INFINITY
    }

    /// Natural log of the magnitude (`-inf` for zero).
    pub fn ln_abs(&self) -> f64 {
        self.ln_abs
    }

    pub fn log10_abs(&self) -> f64 {
        self.ln_abs / std::f64::consts::LN_10
    }

    /// Plain `f64`; saturates to `±inf` when the magnitude exceeds `f64::MAX`.
    pub fn to_f64(&self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            f64::from(self.sign) * self.ln_abs.exp()
        }
    }

    /// True when `to_f64` would overflow.
    pub fn overflows_f64(&self) -> bool {
        self.sign != 0 && self.ln_abs > f64::MAX.ln()
    }

    pub fn abs(&self) -> Self {
        ExtReal {
            sign: self.sign.abs(),
            ln_abs: self.ln_abs,
        }
    }

    pub fn powf(&self, p: f64) -> Self {
        assert!(self.sign >= 0, "powf of a negative extended real");
        if self.sign == 0 {
            return if p == 0.0 { Self::ONE } else { Self::ZERO };
        }
        Self::from_ln(self.ln_abs * p)
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    /// Scientific notation with `digits` significant digits, e.g. `1.20e9`.
    pub fn to_sci(&self, digits: usize) -> String {
        if self.sign == 0 {
            return "0".to_string();
        }
        if self.is_infinite() {
            return if self.sign > 0 { "inf" } else { "-inf" }.to_string();
        }
        let l10 = self.log10_abs();
        let mut exp = l10.floor();
        let mut mant = 10f64.powf(l10 - exp);
        let scale = 10f64.powi(digits.saturating_sub(1) as i32);
        if (mant * scale).round() / scale >= 10.0 {
            mant /= 10.0;
            exp += 1.0;
        }
        let sign = if self.sign < 0 { "-" } else { "" };
        format!("{sign}{:.*}e{}", digits.saturating_sub(1), mant, exp as i64)
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        Self::from_f64(x)
    }
}

impl Mul for ExtReal {
    type Output = ExtReal;
    fn mul(self, rhs: ExtReal) -> ExtReal {
        if self.sign == 0 || rhs.sign == 0 {
            return ExtReal::ZERO;
        }
        ExtReal {
            sign: self.sign * rhs.sign,
            ln_abs: self.ln_abs + rhs.ln_abs,
        }
    }
}

impl Mul<f64> for ExtReal {
    type Output = ExtReal;
    fn mul(self, rhs: f64) -> ExtReal {
        self * ExtReal::from_f64(rhs)
    }
}

impl Div for ExtReal {
    type Output = ExtReal;
    fn div(self, rhs: ExtReal) -> ExtReal {
        assert!(rhs.sign != 0, "division of an extended real by zero");
        if self.sign == 0 {
            return ExtReal::ZERO;
        }
        ExtReal {
            sign: self.sign * rhs.sign,
            ln_abs: self.ln_abs - rhs.ln_abs,
        }
    }
}

impl Div<f64> for ExtReal {
    type Output = ExtReal;
    fn div(self, rhs: f64) -> ExtReal {
        self / ExtReal::from_f64(rhs)
    }
}

impl Neg for ExtReal {
    type Output = ExtReal;
    fn neg(self) -> ExtReal {
        ExtReal {
            sign: -self.sign,
            ln_abs: self.ln_abs,
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        if self.sign == 0 {
            return rhs;
        }
        if rhs.sign == 0 {
            return self;
        }
        let (big, small) = if self.ln_abs >= rhs.ln_abs {
            (self, rhs)
        } else {
            (rhs, self)
        };
        if big.ln_abs == f64::INFINITY {
            return big;
        }
        let ratio = (small.ln_abs - big.ln_abs).exp();
        if big.sign == small.sign {
            ExtReal {
                sign: big.sign,
                ln_abs: big.ln_abs + ratio.ln_1p(),
            }
        } else if ratio == 1.0 {
            ExtReal::ZERO
        } else {
            ExtReal {
                sign: big.sign,
                ln_abs: big.ln_abs + (-ratio).ln_1p(),
            }
        }
    }
}

impl Sub for ExtReal {
    type Output = ExtReal;
    fn sub(self, rhs: ExtReal) -> ExtReal {
        self + (-rhs)
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.sign.cmp(&other.sign) {
            Ordering::Equal => match self.sign {
                0 => Some(Ordering::Equal),
                1 => self.ln_abs.partial_cmp(&other.ln_abs),
                _ => other.ln_abs.partial_cmp(&self.ln_abs),
            },
            ord => Some(ord),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sci(6))
    }
}

/// Serialized as a number when it fits in `f64`, otherwise as a string in
/// scientific notation.
impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.overflows_f64() || self.is_infinite() {
            serializer.serialize_str(&self.to_sci(10))
        } else {
            serializer.serialize_f64(self.to_f64())
        }
    }
}

/// `ln cosh(x)`, finite for any finite `x`.
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `ln sinh(x)` for `x > 0`.
pub fn ln_sinh(x: f64) -> f64 {
    assert!(x > 0.0, "ln_sinh requires a positive argument");
    if x < 1.0 {
        x.sinh().ln()
    } else {
        x + (-(-2.0 * x).exp()).ln_1p() - std::f64::consts::LN_2
    }
}

/// `asinh(y)` given `ln y`, for `y > 0` possibly far beyond `f64` range.
pub fn asinh_from_ln(ln_y: f64) -> f64 {
    if ln_y < 20.0 {
        ln_y.exp().asinh()
    } else {
        // asinh(y) = ln(2y) + ln(1/2 + sqrt(1/4 + 1/(4y^2)))  ~ ln(2y) + 1/(4y^2)
        ln_y + std::f64::consts::LN_2 + 0.25 * (-2.0 * ln_y).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn arithmetic_matches_f64_in_range() {
        let a = ExtReal::from_f64(3.5);
        let b = ExtReal::from_f64(-1.25);
        assert_relative_eq!((a + b).to_f64(), 2.25, max_relative = 1e-14);
        assert_relative_eq!((a - b).to_f64(), 4.75, max_relative = 1e-14);
        assert_relative_eq!((a * b).to_f64(), -4.375, max_relative = 1e-14);
        assert_relative_eq!((a / b).to_f64(), -2.8, max_relative = 1e-14);
        assert_relative_eq!(a.powf(3.0).to_f64(), 42.875, max_relative = 1e-14);
        assert!((a - a).is_zero());
    }

    #[test]
    fn ordering_handles_signs() {
        let vals: Vec<ExtReal> = [-5.0, -0.5, 0.0, 0.25, 7.0]
            .iter()
            .map(|&x| ExtReal::from_f64(x))
            .collect();
        for w in vals.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(ExtReal::INFINITY > ExtReal::from_ln(1e6));
    }

    #[test]
    fn huge_values_survive() {
        let c = ExtReal::from_ln(ln_cosh(800.0));
        let sq = c * c;
        assert!(sq.overflows_f64());
        assert_relative_eq!(
            sq.ln_abs(),
            2.0 * (800.0 - std::f64::consts::LN_2),
            max_relative = 1e-15
        );
        assert_eq!(ExtReal::from_f64(1.19e9).to_sci(3), "1.19e9");
        assert_eq!(ExtReal::from_f64(9.996).to_sci(3), "1.00e1");
    }

    #[test]
    fn log_domain_hyperbolics() {
        for &x in &[0.1, 0.9, 1.0, 5.0, 30.0] {
            assert_relative_eq!(ln_cosh(x), x.cosh().ln(), max_relative = 1e-13);
            assert_relative_eq!(ln_sinh(x), x.sinh().ln(), max_relative = 1e-13);
        }
        for &y in &[1e-3, 1.0, 1e5, 1e8, 1e12] {
            let y: f64 = y;
            assert_relative_eq!(asinh_from_ln(y.ln()), y.asinh(), max_relative = 1e-14);
        }
    }
}
