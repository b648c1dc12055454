//! Number formatting for CSV output.

/// Rounds to 12 significant digits (half-to-even on exact ties) and prints the shortest
/// decimal that reads back to the rounded value. Negative zero prints as `0`.
pub fn number(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("scientific notation parses");
    if rounded == 0.0 {
        return "0".into();
    }
    format!("{rounded}")
}
