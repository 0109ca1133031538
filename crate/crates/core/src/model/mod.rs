//! Workbook data model and the canonical JSON workbook document.

mod address;
mod document;

pub use address::{
    column_index, column_letters, parse_a1, render_sheet_name, A1Ref, CellAddress, CellPos,
    MAX_COLS, MAX_ROWS,
};
pub(crate) use address::{is_sheet_name_char, split_a1};
pub(crate) use document::{cell_json, number_json};
pub use document::{parse_workbook, parse_workbook_with_diagnostics, serialize_workbook};

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("malformed document at {location}: {message}")]
    Malformed { location: String, message: String },
    #[error("invalid address `{text}` at {location}")]
    InvalidAddress { location: String, text: String },
    #[error("duplicate sheet name `{name}`")]
    DuplicateSheet { name: String },
    #[error("duplicate cell {location}")]
    DuplicateCell { location: String },
    #[error("invalid cell {location}: {message}")]
    InvalidCell { location: String, message: String },
    #[error("declared output {output} does not resolve to a cell")]
    DanglingOutput { output: String },
}

impl ModelError {
    pub(crate) fn at(self, loc: &str) -> Self {
        match self {
            ModelError::InvalidAddress { text, .. } => ModelError::InvalidAddress {
                location: loc.to_string(),
                text,
            },
            other => other,
        }
    }
}

/// How a spreadsheet program was told to display a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeclaredFormat {
    Text,
    General,
}

impl DeclaredFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DeclaredFormat::Text => "text",
            DeclaredFormat::General => "general",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellContent {
    Number(f64),
    Text(String),
    Bool(bool),
    /// Formula source including the leading `=`.
    Formula(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub content: CellContent,
    pub locked: bool,
    pub format: Option<DeclaredFormat>,
}

impl Cell {
    pub fn new(content: CellContent) -> Self {
        Self {
            content,
            locked: false,
            format: None,
        }
    }

    pub fn number(v: f64) -> Self {
        Self::new(CellContent::Number(v))
    }

    pub fn text(s: impl Into<String>) -> Self {
        Self::new(CellContent::Text(s.into()))
    }

    pub fn boolean(b: bool) -> Self {
        Self::new(CellContent::Bool(b))
    }

    pub fn formula(src: impl Into<String>) -> Self {
        Self::new(CellContent::Formula(src.into()))
    }

    pub fn locked(mut self, locked: bool) -> Self {
        self.locked = locked;
        self
    }

    pub fn with_format(mut self, format: DeclaredFormat) -> Self {
        self.format = Some(format);
        self
    }

    pub fn is_formula(&self) -> bool {
        matches!(self.content, CellContent::Formula(_))
    }

    pub fn formula_source(&self) -> Option<&str> {
        match &self.content {
            CellContent::Formula(src) => Some(src),
            _ => None,
        }
    }

    /// A number that a spreadsheet would hold as text: either a text constant
    /// whose content parses as a number, or a number declared with text format.
    pub fn numeric_text(&self) -> Option<f64> {
        match (&self.content, self.format) {
            (CellContent::Text(s), _) => parse_numeric_text(s),
            (CellContent::Number(v), Some(DeclaredFormat::Text)) => Some(*v),
            _ => None,
        }
    }

    /// A constant that behaves as a number (not stored as text).
    pub fn numeric_constant(&self) -> Option<f64> {
        match (&self.content, self.format) {
            (CellContent::Number(_), Some(DeclaredFormat::Text)) => None,
            (CellContent::Number(v), _) => Some(*v),
            _ => None,
        }
    }
}

/// Parses text the way arithmetic coercion does: surrounding whitespace is
/// ignored and the remainder must be a finite decimal number.
pub fn parse_numeric_text(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    // f64::from_str accepts "inf"/"nan"; spreadsheets don't.
    if !t
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'))
    {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sheet {
    pub name: String,
    pub cells: BTreeMap<CellPos, Cell>,
}

impl Sheet {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            cells: BTreeMap::new(),
        }
    }

    pub fn with_cell(mut self, a1: &str, cell: Cell) -> Self {
        let pos = CellPos::from_a1(a1).expect("valid A1 key");
        self.cells.insert(pos, cell);
        self
    }

    pub fn get(&self, pos: CellPos) -> Option<&Cell> {
        self.cells.get(&pos)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Meta {
    /// ISO-8601 date or date-time, kept as written.
    pub modified: String,
    pub outputs: Vec<CellAddress>,
    pub protection_enabled: bool,
}

impl Default for Meta {
    fn default() -> Self {
        Self {
            modified: "1970-01-01T00:00:00Z".to_string(),
            outputs: Vec::new(),
            protection_enabled: false,
        }
    }
}

impl Meta {
    /// Calendar date of `modified`, if it is a recognised ISO-8601 form.
    pub fn modified_date(&self) -> Option<NaiveDate> {
        parse_iso_date(&self.modified)
    }
}

pub(crate) fn parse_iso_date(s: &str) -> Option<NaiveDate> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.date_naive());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.date());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Workbook {
    pub name: String,
    pub meta: Meta,
    pub sheets: Vec<Sheet>,
}

impl Workbook {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn with_sheet(mut self, sheet: Sheet) -> Self {
        self.sheets.push(sheet);
        self
    }

    pub fn sheet(&self, name: &str) -> Option<&Sheet> {
        self.sheets.iter().find(|s| s.name == name)
    }

    pub fn sheet_mut(&mut self, name: &str) -> Option<&mut Sheet> {
        self.sheets.iter_mut().find(|s| s.name == name)
    }

    pub fn sheet_index(&self, name: &str) -> Option<usize> {
        self.sheets.iter().position(|s| s.name == name)
    }

    pub fn cell(&self, addr: &CellAddress) -> Option<&Cell> {
        self.sheet(addr.sheet())?.get(addr.pos())
    }

    /// Inserts or replaces a cell; the sheet must exist.
    pub fn set_cell(&mut self, addr: &CellAddress, cell: Cell) -> Option<Cell> {
        self.sheet_mut(addr.sheet())?.cells.insert(addr.pos(), cell)
    }

    pub fn remove_cell(&mut self, addr: &CellAddress) -> Option<Cell> {
        self.sheet_mut(addr.sheet())?.cells.remove(&addr.pos())
    }

    /// All cells in sheet order, row-major within a sheet.
    pub fn cells(&self) -> impl Iterator<Item = (CellAddress, &Cell)> + '_ {
        self.sheets.iter().flat_map(|sheet| {
            sheet
                .cells
                .iter()
                .map(move |(pos, cell)| (CellAddress::at(sheet.name.clone(), *pos), cell))
        })
    }

    pub fn formula_cells(&self) -> impl Iterator<Item = (CellAddress, &str)> + '_ {
        self.cells()
            .filter_map(|(addr, cell)| cell.formula_source().map(|src| (addr, src)))
    }

    pub fn cell_count(&self) -> usize {
        self.sheets.iter().map(|s| s.cells.len()).sum()
    }

    /// Sort key giving sheet order, then row, then column. Addresses on
    /// unknown sheets sort last.
    pub fn order_key(&self, addr: &CellAddress) -> (usize, u32, u32) {
        let idx = self.sheet_index(addr.sheet()).unwrap_or(usize::MAX);
        (idx, addr.row(), addr.col())
    }

    pub fn is_output(&self, addr: &CellAddress) -> bool {
        self.meta.outputs.iter().any(|o| o == addr)
    }

    /// Checks every structural invariant of the model.
    pub fn validate(&self) -> Result<(), ModelError> {
        if parse_iso_date(&self.meta.modified).is_none() {
            return Err(ModelError::Malformed {
                location: "meta.modified".into(),
                message: format!("`{}` is not an ISO-8601 date-time", self.meta.modified),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for sheet in &self.sheets {
            if sheet.name.is_empty() {
                return Err(ModelError::Malformed {
                    location: "sheets[].name".into(),
                    message: "sheet name is empty".into(),
                });
            }
            if !seen.insert(sheet.name.as_str()) {
                return Err(ModelError::DuplicateSheet {
                    name: sheet.name.clone(),
                });
            }
            for (pos, cell) in &sheet.cells {
                let location = CellAddress::at(sheet.name.clone(), *pos).to_string();
                if !pos.is_within_caps() {
                    return Err(ModelError::InvalidAddress {
                        location,
                        text: format!("R{}C{}", pos.row, pos.col),
                    });
                }
                validate_content(&cell.content).map_err(|message| ModelError::InvalidCell {
                    location,
                    message,
                })?;
            }
        }
        for output in &self.meta.outputs {
            if self.cell(output).is_none() {
                return Err(ModelError::DanglingOutput {
                    output: output.to_string(),
                });
            }
        }
        Ok(())
    }
}

fn validate_content(content: &CellContent) -> Result<(), String> {
    match content {
        CellContent::Number(v) if !v.is_finite() => Err("number is not finite".into()),
        CellContent::Formula(src) => match src.strip_prefix('=') {
            None => Err("formula must begin with `=`".into()),
            Some(body) if body.trim().is_empty() => Err("formula is empty".into()),
            Some(_) => Ok(()),
        },
        _ => Ok(()),
    }
}
