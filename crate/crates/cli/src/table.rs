//! CSV writing for tables that mix text and numeric columns. Numeric
//! fields use the same 17-significant-digit rendering as the library's
//! writer, so files round-trip at full double precision.

use std::path::Path;

use crate::CliError;

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn flag(b: bool) -> String {
    if b {
        "1".to_string()
    } else {
        "0".to_string()
    }
}

pub fn count(n: u64) -> String {
    n.to_string()
}

/// Writes header plus rows in one shot; nothing is created until the full
/// table has been rendered.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}
