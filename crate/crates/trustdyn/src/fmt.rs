//! Number rendering shared by the CSV writers and the CLI.
//!
//! Machine outputs carry 17 significant digits (scientific notation), which
//! is enough for every f64 to round-trip exactly; human summaries use six
//! decimals.

/// Lossless rendering: 17 significant digits.
pub fn machine(x: f64) -> String {
    format!("{x:.16e}")
}

/// Optional value for CSV cells; absent values render as the empty field.
pub fn machine_opt(x: Option<f64>) -> String {
    x.map(machine).unwrap_or_default()
}

/// Human-readable rendering: six decimals.
pub fn human(x: f64) -> String {
    format!("{x:.6}")
}
