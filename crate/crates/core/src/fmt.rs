//! Number formatting for CSV outputs: `.` decimal point, 10 significant
//! digits, no locale, trailing zeros trimmed (C's `%.10g`).

pub fn sig10(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // round to 10 significant digits first; the exponent can move (9.99999999995 -> 10)
    let sci = format!("{:.9e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        let mantissa = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

#[cfg(test)]
mod tests {
    use super::sig10;

    #[test]
    fn matches_printf_g10() {
        assert_eq!(sig10(0.0), "0");
        assert_eq!(sig10(1.0), "1");
        assert_eq!(sig10(16.0 / 7.0), "2.285714286");
        assert_eq!(sig10(15.0 / 26.0), "0.5769230769");
        assert_eq!(sig10(-0.25), "-0.25");
        assert_eq!(sig10(1e-4), "0.0001");
        assert_eq!(sig10(9.0826e-6), "9.0826e-06");
        assert_eq!(sig10(12345678901.0), "1.23456789e+10");
        assert_eq!(sig10(9.99999999995), "10");
        assert_eq!(sig10(431080.0), "431080");
    }
}
