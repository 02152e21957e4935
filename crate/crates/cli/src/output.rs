//! CSV output: `%.12g` numbers and a metadata header that reproduces the run.

use std::fmt::Write as _;

use crate::config::{RunConfig, CFG_PREFIX, CSV_MAGIC};

/// Formats `x` like C's `%.{sig}g`: fixed notation for moderate exponents,
/// scientific otherwise, trailing zeros removed.
pub fn fmt_g(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sig = sig.max(1);
    // Exponent after rounding to `sig` digits.
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if exp < -4 || exp >= sig as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Numeric cell with 12 significant digits.
pub fn num(x: f64) -> String {
    fmt_g(x, 12)
}

/// In-memory CSV with a metadata header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// `# ...` lines written after the rows.
    pub footer: Vec<String>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            footer: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Full file text: header, column row, data rows, footer.
    pub fn render(&self, command: &str, cfg: &RunConfig) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{CSV_MAGIC} {} {command}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# config_sha256 = {}", cfg.hash());
        let _ = writeln!(s, "# seed = {}", cfg.seed);
        for line in cfg.canonical().lines() {
            let _ = writeln!(s, "{CFG_PREFIX}{line}");
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        for row in &self.rows {
            let _ = writeln!(s, "{}", row.join(","));
        }
        for line in &self.footer {
            let _ = writeln!(s, "# {line}");
        }
        s
    }
}

/// Reads the numeric column `name` from CSV text, skipping `#` lines.
pub fn read_column(text: &str, name: &str) -> Result<Vec<f64>, String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines.next().ok_or("file has no header row")?;
    let idx = header
        .split(',')
        .position(|c| c.trim() == name)
        .ok_or_else(|| format!("no column named '{name}'"))?;
    lines
        .enumerate()
        .map(|(k, line)| {
            let cell = line
                .split(',')
                .nth(idx)
                .ok_or_else(|| format!("row {} is missing column '{name}'", k + 1))?;
            cell.trim()
                .parse::<f64>()
                .map_err(|_| format!("row {}: '{cell}' is not a number", k + 1))
        })
        .collect()
}
