//! Number formatting shared by the CSV writers.

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn full(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(full).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    #[test]
    fn round_trips() {
        for x in [0.1, 1.0 / 3.0, -7.034483825301132, 1e-300, 0.0] {
            assert_eq!(super::full(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(super::full(0.25), "2.5000000000000000e-1");
    }
}
