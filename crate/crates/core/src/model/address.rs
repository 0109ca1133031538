//! A1-style cell addressing.
//!
//! Coordinates are 1-based. Row and column caps match mainstream spreadsheet
//! limits; anything larger is rejected when an address is built, though the
//! formula lexer keeps out-of-range references around so the evaluator can
//! turn them into `#REF!`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;

pub const MAX_ROWS: u32 = 1_048_576;
pub const MAX_COLS: u32 = 16_384;

/// Row/column pair inside one sheet. Orders row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellPos {
    pub row: u32,
    pub col: u32,
}

impl CellPos {
    pub fn new(row: u32, col: u32) -> Result<Self, ModelError> {
        if row == 0 || col == 0 || row > MAX_ROWS || col > MAX_COLS {
            return Err(ModelError::InvalidAddress {
                location: String::new(),
                text: format!("R{row}C{col}"),
            });
        }
        Ok(Self { row, col })
    }

    /// Parses an unqualified, non-absolute key such as `B12`.
    pub fn from_a1(text: &str) -> Result<Self, ModelError> {
        let invalid = || ModelError::InvalidAddress {
            location: String::new(),
            text: text.to_string(),
        };
        let parts = split_a1(text).ok_or_else(invalid)?;
        if parts.sheet.is_some() || parts.col_absolute || parts.row_absolute {
            return Err(invalid());
        }
        let (row, col) = parts.checked_coords().ok_or_else(invalid)?;
        Ok(Self { row, col })
    }

    pub fn a1(&self) -> String {
        format!("{}{}", column_letters(self.col), self.row)
    }

    pub fn is_within_caps(&self) -> bool {
        self.row >= 1 && self.col >= 1 && self.row <= MAX_ROWS && self.col <= MAX_COLS
    }
}

impl fmt::Display for CellPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", column_letters(self.col), self.row)
    }
}

/// A fully qualified cell location.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellAddress {
    sheet: String,
    pos: CellPos,
}

impl CellAddress {
    pub fn new(sheet: impl Into<String>, row: u32, col: u32) -> Result<Self, ModelError> {
        let sheet = sheet.into();
        if sheet.is_empty() {
            return Err(ModelError::InvalidAddress {
                location: String::new(),
                text: format!("!R{row}C{col}"),
            });
        }
        Ok(Self {
            sheet,
            pos: CellPos::new(row, col)?,
        })
    }

    pub fn at(sheet: impl Into<String>, pos: CellPos) -> Self {
        Self {
            sheet: sheet.into(),
            pos,
        }
    }

    pub fn sheet(&self) -> &str {
        &self.sheet
    }

    pub fn row(&self) -> u32 {
        self.pos.row
    }

    pub fn col(&self) -> u32 {
        self.pos.col
    }

    pub fn pos(&self) -> CellPos {
        self.pos
    }

    /// Same sheet, shifted coordinates. `None` when the result leaves the grid.
    pub fn offset(&self, d_row: i64, d_col: i64) -> Option<Self> {
        let row = i64::from(self.pos.row) + d_row;
        let col = i64::from(self.pos.col) + d_col;
        let row = u32::try_from(row).ok()?;
        let col = u32::try_from(col).ok()?;
        let pos = CellPos { row, col };
        pos.is_within_caps().then(|| Self::at(self.sheet.clone(), pos))
    }

    pub fn with_sheet(&self, sheet: &str) -> Self {
        Self::at(sheet, self.pos)
    }
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}!{}", render_sheet_name(&self.sheet), self.pos)
    }
}

/// Parses a sheet-qualified address (`Sheet1!B3`, `'My Sheet'!B3`).
impl FromStr for CellAddress {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts = split_a1(s).ok_or_else(|| invalid(s))?;
        if parts.sheet.is_none() {
            return Err(invalid(s));
        }
        Ok(parse_a1(s, "")?.address)
    }
}

impl Serialize for CellAddress {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CellAddress {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Result of parsing an A1 reference: the coordinates plus the `$` markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct A1Ref {
    pub address: CellAddress,
    pub row_absolute: bool,
    pub col_absolute: bool,
}

/// Parses `[sheet!][$]COL[$]ROW`. Unqualified references take `host` as sheet.
pub fn parse_a1(text: &str, host: &str) -> Result<A1Ref, ModelError> {
    let parts = split_a1(text).ok_or_else(|| invalid(text))?;
    let (row, col) = parts.checked_coords().ok_or_else(|| invalid(text))?;
    let sheet = parts.sheet.unwrap_or_else(|| host.to_string());
    if sheet.is_empty() {
        return Err(invalid(text));
    }
    Ok(A1Ref {
        address: CellAddress::at(sheet, CellPos { row, col }),
        row_absolute: parts.row_absolute,
        col_absolute: parts.col_absolute,
    })
}

fn invalid(text: &str) -> ModelError {
    ModelError::InvalidAddress {
        location: String::new(),
        text: text.to_string(),
    }
}

/// Syntactic pieces of an A1 reference, before any range checking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct A1Parts {
    pub sheet: Option<String>,
    pub col_absolute: bool,
    pub col: u64,
    pub row_absolute: bool,
    pub row: u64,
}

impl A1Parts {
    fn checked_coords(&self) -> Option<(u32, u32)> {
        let row = u32::try_from(self.row).ok()?;
        let col = u32::try_from(self.col).ok()?;
        CellPos { row, col }.is_within_caps().then_some((row, col))
    }
}

/// Splits a reference into qualifier, markers and raw coordinates. Column
/// letters are limited to three; rows may not have leading zeros.
pub(crate) fn split_a1(text: &str) -> Option<A1Parts> {
    let (sheet, local) = match text.rfind('!') {
        Some(idx) => (Some(parse_sheet_qualifier(&text[..idx])?), &text[idx + 1..]),
        None => (None, text),
    };
    let bytes = local.as_bytes();
    let mut i = 0;
    let col_absolute = bytes.first() == Some(&b'$');
    if col_absolute {
        i += 1;
    }
    let letters_start = i;
    while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
        i += 1;
    }
    let letters = &local[letters_start..i];
    if letters.is_empty() || letters.len() > 3 {
        return None;
    }
    let row_absolute = bytes.get(i) == Some(&b'$');
    if row_absolute {
        i += 1;
    }
    let digits = &local[i..];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0')
    {
        return None;
    }
    let row: u64 = digits.parse().ok()?;
    Some(A1Parts {
        sheet,
        col_absolute,
        col: column_index(letters)?,
        row_absolute,
        row,
    })
}

fn parse_sheet_qualifier(raw: &str) -> Option<String> {
    if let Some(inner) = raw.strip_prefix('\'') {
        let inner = inner.strip_suffix('\'')?;
        let name = inner.replace("''", "'");
        return (!name.is_empty()).then_some(name);
    }
    if raw.is_empty() || !is_plain_sheet_name(raw) {
        return None;
    }
    Some(raw.to_string())
}

pub(crate) fn is_sheet_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '.'
}

fn is_plain_sheet_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => chars.all(is_sheet_name_char),
        _ => false,
    }
}

/// Renders a sheet name for use as a qualifier, quoting when needed.
pub fn render_sheet_name(name: &str) -> String {
    if is_plain_sheet_name(name) {
        name.to_string()
    } else {
        format!("'{}'", name.replace('\'', "''"))
    }
}

/// 1 -> "A", 27 -> "AA".
pub fn column_letters(mut col: u32) -> String {
    let mut out = Vec::new();
    while col > 0 {
        let rem = (col - 1) % 26;
        out.push(b'A' + rem as u8);
        col = (col - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// "A" -> 1, case-insensitive. `None` for empty or non-alphabetic input.
pub fn column_index(letters: &str) -> Option<u64> {
    if letters.is_empty() {
        return None;
    }
    letters.bytes().try_fold(0u64, |acc, b| {
        if !b.is_ascii_alphabetic() {
            return None;
        }
        let digit = u64::from(b.to_ascii_uppercase() - b'A' + 1);
        acc.checked_mul(26)?.checked_add(digit)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_plain_reference_on_host() {
        let r = parse_a1("B3", "S").unwrap();
        assert_eq!(r.address, CellAddress::new("S", 3, 2).unwrap());
        assert!(!r.row_absolute && !r.col_absolute);
    }

    #[test]
    fn parses_absolute_markers() {
        let r = parse_a1("$A$1", "Host").unwrap();
        assert_eq!(r.address, CellAddress::new("Host", 1, 1).unwrap());
        assert!(r.row_absolute && r.col_absolute);
        let mixed = parse_a1("A$7", "Host").unwrap();
        assert!(mixed.row_absolute && !mixed.col_absolute);
    }

    #[test]
    fn parses_sheet_qualifier() {
        let r = parse_a1("Data!C10", "S").unwrap();
        assert_eq!(r.address, CellAddress::new("Data", 10, 3).unwrap());
        let quoted = parse_a1("'My ''Q'' Sheet'!A2", "S").unwrap();
        assert_eq!(quoted.address.sheet(), "My 'Q' Sheet");
    }

    #[test]
    fn rejects_bad_references() {
        for bad in ["", "A", "1", "A0", "A01", "ABCD1", "XFE1", "A1048577", "A1B", "!A1", "''!A1"] {
            assert!(parse_a1(bad, "S").is_err(), "{bad} should fail");
        }
        assert!(parse_a1("XFD1048576", "S").is_ok());
    }

    #[test]
    fn qualified_display_quotes_when_needed() {
        let a = CellAddress::new("Q1 Data", 2, 28).unwrap();
        assert_eq!(a.to_string(), "'Q1 Data'!AB2");
        assert_eq!(a.to_string().parse::<CellAddress>().unwrap(), a);
        assert!("A1".parse::<CellAddress>().is_err());
    }

    #[test]
    fn column_letters_known_values() {
        assert_eq!(column_letters(1), "A");
        assert_eq!(column_letters(26), "Z");
        assert_eq!(column_letters(27), "AA");
        assert_eq!(column_letters(16_384), "XFD");
        assert_eq!(column_index("xfd"), Some(16_384));
    }

    proptest! {
        #[test]
        fn a1_render_parse_bijection(row in 1u32..=MAX_ROWS, col in 1u32..=MAX_COLS) {
            let addr = CellAddress::new("Sheet1", row, col).unwrap();
            let text = addr.to_string();
            prop_assert_eq!(text.parse::<CellAddress>().unwrap(), addr.clone());
            prop_assert_eq!(CellPos::from_a1(&addr.pos().a1()).unwrap(), addr.pos());
        }
    }
}
