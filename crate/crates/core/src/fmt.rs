//! Fixed-precision float output shared by every CSV and JSON writer.

/// Rounds to 12 significant digits and prints the shortest decimal form of
/// the rounded value.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

pub fn round12(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(sig12(3f64.sqrt() / (2.0 * std::f64::consts::PI)), "0.275664447711");
        assert_eq!(sig12(0.0), "0");
        assert_eq!(sig12(-1.5), "-1.5");
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
    }
}
