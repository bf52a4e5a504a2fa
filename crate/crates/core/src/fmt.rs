//! `%.17g`-style decimal formatting used by every text output.
//!
//! Seventeen significant digits round-trip any `f64`. Trailing zeros are
//! stripped and the exponent form is used when the decimal exponent is below
//! -4 or at least 17, as C's `printf("%.17g")` does.

use alloc::format;
use alloc::string::String;

pub fn g17(x: f64) -> String {
    if x.is_nan() {
        return String::from("nan");
    }
    if x.is_infinite() {
        return String::from(if x > 0.0 { "inf" } else { "-inf" });
    }
    if x == 0.0 {
        return String::from(if x.is_sign_negative() { "-0" } else { "0" });
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp) as usize;
    let fixed = format!("{:.*}", decimals, x);
    strip_zeros(&fixed)
}

fn strip_zeros(s: &str) -> String {
    if s.contains('.') {
        String::from(s.trim_end_matches('0').trim_end_matches('.'))
    } else {
        String::from(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf() {
        // Reference strings from C printf("%.17g").
        assert_eq!(g17(1.0 / 3.0), "0.33333333333333331");
        assert_eq!(g17(0.5), "0.5");
        assert_eq!(g17(1.0), "1");
        assert_eq!(g17(-2.5), "-2.5");
        assert_eq!(g17(0.1), "0.10000000000000001");
        assert_eq!(g17(core::f64::consts::LN_2), "0.69314718055994529");
        assert_eq!(g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(g17(123456.0), "123456");
        assert_eq!(g17(1e17), "1e+17");
        assert_eq!(g17(0.0), "0");
    }

    #[test]
    fn round_trips() {
        for &x in &[1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 6.02e23, -7.25e-9, 0.1 + 0.2] {
            let back: f64 = g17(x).parse().unwrap();
            assert_eq!(back, x);
        }
    }
}
