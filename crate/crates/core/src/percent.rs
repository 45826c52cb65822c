//! Two-decimal percent rendering with half-up rounding.

/// Slack (in units of the last kept digit) under which a value is treated as
/// an exact tie. Absorbs binary representation error such as
/// `1.005 * 100 == 100.49999999999999`.
const TIE_SLACK: f64 = 1e-9;

/// Rounds half away from zero to `decimals` places.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let s = x.abs() * scale;
    let floor = s.floor();
    let rounded = if s - floor >= 0.5 - TIE_SLACK {
        floor + 1.0
    } else {
        floor
    };
    // `+ 0.0` folds negative zero.
    (rounded.copysign(x) / scale) + 0.0
}

/// `34.785` -> `"34.79%"`.
pub fn format_percent(pct: f64) -> String {
    format!("{:.2}%", round_half_up(pct, 2))
}

/// Parses `"34.79%"` or `"34.79"` into a percent value.
pub fn parse_percent(s: &str) -> Option<f64> {
    let t = s.trim();
    let t = t.strip_suffix('%').unwrap_or(t).trim();
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Renders a list the way the prompt templates expect:
/// `["34.79%", "38.58%"]`.
pub fn format_percent_list(pcts: &[f64]) -> String {
    let items: Vec<String> = pcts
        .iter()
        .map(|&p| format!("\"{}\"", format_percent(p)))
        .collect();
    format!("[{}]", items.join(", "))
}
