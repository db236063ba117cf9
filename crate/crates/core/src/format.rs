//! Number formatting shared by the CSV and summary writers.

/// C-style `%.12e`: `1.000000000000e+03`, `-2.500000000000e-07`.
pub fn sci(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

#[cfg(test)]
mod tests {
    use super::sci;

    #[test]
    fn matches_printf() {
        assert_eq!(sci(1000.0), "1.000000000000e+03");
        assert_eq!(sci(-2.5e-7), "-2.500000000000e-07");
        assert_eq!(sci(0.0), "0.000000000000e+00");
        assert_eq!(sci(1.5e300), "1.500000000000e+300");
        assert_eq!(sci(f64::NAN), "nan");
        assert_eq!(sci(f64::NEG_INFINITY), "-inf");
    }
}
