//! Diff-stable number formatting for CSV and JSON outputs.

/// Formats `x` as a plain decimal string rounded to nine significant digits.
///
/// No exponent notation is ever produced, trailing zeros are trimmed and
/// negative zero prints as `0`.
pub fn sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    // `{:.8e}` gives exactly nine significant digits: d.dddddddde±x
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();

    // value = 0.d1d2...d9 * 10^(exp + 1)
    let point = exp + 1;
    let mut out = String::new();
    if point <= 0 {
        out.push_str("0.");
        for _ in 0..(-point) {
            out.push('0');
        }
        out.push_str(&digits);
    } else if point as usize >= digits.len() {
        out.push_str(&digits);
        for _ in 0..(point as usize - digits.len()) {
            out.push('0');
        }
    } else {
        out.push_str(&digits[..point as usize]);
        out.push('.');
        out.push_str(&digits[point as usize..]);
    }
    if out.contains('.') {
        while out.ends_with('0') {
            out.pop();
        }
        if out.ends_with('.') {
            out.pop();
        }
    }
    if negative && out.chars().any(|c| c.is_ascii_digit() && c != '0') {
        out.insert(0, '-');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::sig9;

    #[test]
    fn plain_decimal_forms() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(-0.0), "0");
        assert_eq!(sig9(3.0), "3");
        assert_eq!(sig9(1234567890123.0), "1234567890000");
        assert_eq!(sig9(0.1), "0.1");
        assert_eq!(sig9(-2.5), "-2.5");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(1.23456789e-12), "0.00000000000123456789");
        assert_eq!(sig9(99.99999999999), "100");
    }

    #[test]
    fn round_trips_to_nine_digits() {
        for &x in &[std::f64::consts::PI, 6.02214076e23, 1.602e-19, -7.5e-3] {
            let back: f64 = sig9(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-8, "{x} -> {}", sig9(x));
        }
    }
}
