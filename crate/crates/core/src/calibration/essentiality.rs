//! Sector-pair essentiality lookup.

use std::collections::HashMap;
use std::path::Path;

use crate::network::{Line, NetworkError, Sector};
use crate::output::write_atomic;

use super::CalibrationError;

pub const ESSENTIALITY_HEADER: [&str; 3] = ["supplier_sector", "buyer_sector", "essential"];

/// Wildcard accepted in either sector column.
pub const ANY_SECTOR: &str = "*";

/// Maps `(supplier_sector, buyer_sector)` to essential / non-essential.
///
/// Keys may be full sector codes (`C24`), division letters (`C`) or `*`.
/// Lookup tries the most specific key first:
/// exact pair, then division-level matches, then wildcards, then the default.
#[derive(Debug, Clone, PartialEq)]
pub struct EssentialityMatrix {
    rules: HashMap<(String, String), bool>,
    default: Option<bool>,
    source: String,
}

impl EssentialityMatrix {
    /// Empty matrix; `default` applies to every unmatched pair, `None` makes
    /// unmatched pairs an error.
    pub fn new(default: Option<bool>) -> Self {
        EssentialityMatrix {
            rules: HashMap::new(),
            default,
            source: "inline".into(),
        }
    }

    /// Stand-in table: mining (B), manufacturing (C) and power (D) outputs are
    /// essential to every buyer, everything else is non-essential.
    pub fn bundled_default() -> Self {
        let mut m = EssentialityMatrix::new(Some(false));
        for s in ["B", "C", "D"] {
            m.insert(s, ANY_SECTOR, true);
        }
        m.source = "bundled-default".into();
        m
    }

    pub fn all_nonessential() -> Self {
        let mut m = EssentialityMatrix::new(Some(false));
        m.source = "all-nonessential".into();
        m
    }

    pub fn insert(&mut self, supplier: &str, buyer: &str, essential: bool) {
        self.rules.insert((supplier.to_string(), buyer.to_string()), essential);
    }

    pub fn default_rule(&self) -> Option<bool> {
        self.default
    }

    pub fn set_default_rule(&mut self, default: Option<bool>) {
        self.default = default;
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn lookup(&self, supplier: &Sector, buyer: &Sector) -> Option<bool> {
        let s_keys = keys(supplier);
        let b_keys = keys(buyer);
        for s in s_keys.iter().copied().chain([ANY_SECTOR]) {
            for b in b_keys.iter().copied().chain([ANY_SECTOR]) {
                if let Some(&v) = self.rules.get(&(s.to_string(), b.to_string())) {
                    return Some(v);
                }
            }
        }
        self.default
    }

    /// Reads an `essentiality.csv`; unlisted pairs default to non-essential.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self, CalibrationError> {
        let path = path.as_ref();
        let name = path.display().to_string();
        Self::from_rows(crate::network::open_csv(path, &ESSENTIALITY_HEADER)?, name)
    }

    /// Parses in-memory `essentiality.csv` contents.
    pub fn parse(text: &str, name: &str) -> Result<Self, CalibrationError> {
        Self::from_rows(
            crate::network::read_csv(text.as_bytes(), name, &ESSENTIALITY_HEADER)?,
            name.to_string(),
        )
    }

    fn from_rows(rows: Vec<(usize, csv::StringRecord)>, name: String) -> Result<Self, CalibrationError> {
        let mut m = EssentialityMatrix::new(Some(false));
        for (line, rec) in rows {
            let essential = match &rec[2] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(NetworkError::Schema {
                        file: name.clone(),
                        line: Line(Some(line)),
                        message: format!("essential must be 0 or 1, got {other:?}"),
                    }
                    .into())
                }
            };
            if rec[0].is_empty() || rec[1].is_empty() {
                return Err(NetworkError::Schema {
                    file: name.clone(),
                    line: Line(Some(line)),
                    message: "empty sector code".into(),
                }
                .into());
            }
            m.insert(&rec[0], &rec[1], essential);
        }
        m.source = name;
        Ok(m)
    }

    pub fn to_csv(&self) -> String {
        let mut rows: Vec<_> = self.rules.iter().collect();
        rows.sort();
        let mut out = ESSENTIALITY_HEADER.join(",");
        out.push('\n');
        for ((s, b), e) in rows {
            out.push_str(&format!("{s},{b},{}\n", u8::from(*e)));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

fn keys(sector: &Sector) -> Vec<&str> {
    let full = sector.as_str();
    let div = sector.division();
    if div.is_empty() || div == full {
        vec![full]
    } else {
        vec![full, div]
    }
}
