//! Fixed-precision numeric output.

/// Significant digits used for every number written to disk.
pub const SIG_DIGITS: usize = 9;

/// Rounds to `digits` significant decimal digits. Non-finite values pass
/// through.
pub fn round_sig(v: f64, digits: usize) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", digits.saturating_sub(1), v).parse().expect("scientific notation parses")
}

/// Shortest decimal string of `v` rounded to [`SIG_DIGITS`] digits.
/// Very small or very large magnitudes switch to exponent form.
pub fn fmt_sig(v: f64) -> String {
    let r = round_sig(v, SIG_DIGITS);
    let mag = r.abs();
    if r != 0.0 && mag.is_finite() && !(1e-5..1e16).contains(&mag) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_and_is_idempotent() {
        assert_eq!(round_sig(1.0 / 3.0, 9), 0.333333333);
        assert_eq!(fmt_sig(123456.7891234), "123456.789");
        assert_eq!(fmt_sig(-2.5e-12), "-2.5e-12");
        assert_eq!(fmt_sig(40.0), "40");
        assert_eq!(fmt_sig(0.0001), "0.0001");
        assert_eq!(fmt_sig(1e300), "1e300");
        for v in [std::f64::consts::PI, 1e300, -7.123456789e-5] {
            let once = round_sig(v, 9);
            assert_eq!(round_sig(once, 9), once);
            assert_eq!(fmt_sig(v).parse::<f64>().unwrap(), once);
        }
    }
}
