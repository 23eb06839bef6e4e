/// Mean of `values` computed relative to the minimum and clamped to the
/// observed range, so a constant slice yields exactly that constant.
pub(crate) fn bounded_mean(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if lo == hi {
        return lo;
    }
    let excess: f64 = values.iter().map(|v| v - lo).sum();
    (lo + excess / values.len() as f64).clamp(lo, hi)
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        // drop the sign of negative zero
        return "0".to_string();
    }
    format!("{v}")
}
