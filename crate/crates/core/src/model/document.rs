//! Reading and writing the canonical workbook document (UTF-8 JSON).
//!
//! ```text
//! { "version": 1, "name": "...",
//!   "meta": { "modified": "...", "outputs": ["Sheet1!B9"], "protectionEnabled": true },
//!   "sheets": [ { "name": "Sheet1", "cells": { "A1": { "v": 100 }, "B1": { "f": "=A1*2", "locked": true } } } ] }
//! ```

use serde_json::{Map, Value as Json};

use super::{Cell, CellAddress, CellContent, CellPos, DeclaredFormat, Meta, ModelError, Sheet, Workbook};

const FORMAT_VERSION: u64 = 1;

pub fn parse_workbook(bytes: &[u8]) -> Result<Workbook, ModelError> {
    let (wb, diagnostics) = parse_workbook_with_diagnostics(bytes)?;
    for d in diagnostics {
        log::warn!("{d}");
    }
    Ok(wb)
}

/// Like [`parse_workbook`] but returns the unknown-key diagnostics instead of
/// logging them.
pub fn parse_workbook_with_diagnostics(bytes: &[u8]) -> Result<(Workbook, Vec<String>), ModelError> {
    let root: Json = serde_json::from_slice(bytes).map_err(|e| ModelError::Malformed {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut diags = Vec::new();
    let root = as_object(&root, "$")?;
    check_keys(root, "$", &["version", "name", "meta", "sheets"], &mut diags);

    match root.get("version").and_then(Json::as_u64) {
        Some(FORMAT_VERSION) => {}
        _ => {
            return Err(malformed("$.version", "expected version 1"));
        }
    }
    let name = required_str(root, "name", "$")?.to_string();

    let meta_json = as_object(required(root, "meta", "$")?, "$.meta")?;
    check_keys(meta_json, "$.meta", &["modified", "outputs", "protectionEnabled"], &mut diags);
    let modified = required_str(meta_json, "modified", "$.meta")?.to_string();
    let protection_enabled = match meta_json.get("protectionEnabled") {
        None => false,
        Some(v) => v
            .as_bool()
            .ok_or_else(|| malformed("$.meta.protectionEnabled", "expected a boolean"))?,
    };
    let mut outputs = Vec::new();
    if let Some(list) = meta_json.get("outputs") {
        let list = list
            .as_array()
            .ok_or_else(|| malformed("$.meta.outputs", "expected an array"))?;
        for (i, item) in list.iter().enumerate() {
            let loc = format!("$.meta.outputs[{i}]");
            let text = item.as_str().ok_or_else(|| malformed(&loc, "expected a string"))?;
            let addr: CellAddress = text.parse().map_err(|e: ModelError| e.at(&loc))?;
            outputs.push(addr);
        }
    }

    let sheets_json = required(root, "sheets", "$")?
        .as_array()
        .ok_or_else(|| malformed("$.sheets", "expected an array"))?;
    let mut sheets = Vec::with_capacity(sheets_json.len());
    for (i, sheet_json) in sheets_json.iter().enumerate() {
        let loc = format!("$.sheets[{i}]");
        let obj = as_object(sheet_json, &loc)?;
        check_keys(obj, &loc, &["name", "cells"], &mut diags);
        let sheet_name = required_str(obj, "name", &loc)?.to_string();
        if sheets.iter().any(|s: &Sheet| s.name == sheet_name) {
            return Err(ModelError::DuplicateSheet { name: sheet_name });
        }
        let mut sheet = Sheet::new(sheet_name);
        if let Some(cells) = obj.get("cells") {
            let cells = as_object(cells, &format!("{loc}.cells"))?;
            for (key, cell_json) in cells {
                let pos = CellPos::from_a1(key).map_err(|e| e.at(&format!("{loc}.cells")))?;
                let cell_loc = CellAddress::at(sheet.name.clone(), pos).to_string();
                let cell = parse_cell(cell_json, &cell_loc, &mut diags)?;
                if sheet.cells.insert(pos, cell).is_some() {
                    return Err(ModelError::DuplicateCell { location: cell_loc });
                }
            }
        }
        sheets.push(sheet);
    }

    let wb = Workbook {
        name,
        meta: Meta {
            modified,
            outputs,
            protection_enabled,
        },
        sheets,
    };
    wb.validate()?;
    Ok((wb, diags))
}

fn parse_cell(json: &Json, loc: &str, diags: &mut Vec<String>) -> Result<Cell, ModelError> {
    let invalid = |message: &str| ModelError::InvalidCell {
        location: loc.to_string(),
        message: message.to_string(),
    };
    let obj = json
        .as_object()
        .ok_or_else(|| invalid("cell must be an object"))?;
    check_keys(obj, loc, &["v", "f", "locked", "fmt"], diags);
    let content = match (obj.get("v"), obj.get("f")) {
        (Some(_), Some(_)) => return Err(invalid("constant and formula are mutually exclusive")),
        (None, None) => return Err(invalid("cell needs either `v` or `f`")),
        (Some(v), None) => match v {
            Json::Number(n) => CellContent::Number(
                n.as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| invalid("number out of range"))?,
            ),
            Json::String(s) => CellContent::Text(s.clone()),
            Json::Bool(b) => CellContent::Bool(*b),
            _ => return Err(invalid("`v` must be a number, string or boolean")),
        },
        (None, Some(f)) => {
            let src = f.as_str().ok_or_else(|| invalid("`f` must be a string"))?;
            CellContent::Formula(src.to_string())
        }
    };
    let locked = match obj.get("locked") {
        None => false,
        Some(v) => v.as_bool().ok_or_else(|| invalid("`locked` must be a boolean"))?,
    };
    let format = match obj.get("fmt") {
        None => None,
        Some(Json::String(s)) if s == "text" => Some(DeclaredFormat::Text),
        Some(Json::String(s)) if s == "general" => Some(DeclaredFormat::General),
        Some(_) => return Err(invalid("`fmt` must be \"text\" or \"general\"")),
    };
    Ok(Cell {
        content,
        locked,
        format,
    })
}

/// Writes the canonical document: sheets in order, cells row-major, two-space
/// indentation and a trailing newline.
pub fn serialize_workbook(wb: &Workbook) -> String {
    let mut root = Map::new();
    root.insert("version".into(), Json::from(FORMAT_VERSION));
    root.insert("name".into(), Json::from(wb.name.clone()));
    let mut meta = Map::new();
    meta.insert("modified".into(), Json::from(wb.meta.modified.clone()));
    meta.insert(
        "outputs".into(),
        Json::Array(wb.meta.outputs.iter().map(|o| Json::from(o.to_string())).collect()),
    );
    meta.insert("protectionEnabled".into(), Json::from(wb.meta.protection_enabled));
    root.insert("meta".into(), Json::Object(meta));

    let sheets = wb
        .sheets
        .iter()
        .map(|sheet| {
            let mut cells = Map::new();
            for (pos, cell) in &sheet.cells {
                cells.insert(pos.a1(), cell_json(cell));
            }
            let mut obj = Map::new();
            obj.insert("name".into(), Json::from(sheet.name.clone()));
            obj.insert("cells".into(), Json::Object(cells));
            Json::Object(obj)
        })
        .collect();
    root.insert("sheets".into(), Json::Array(sheets));

    let mut out = serde_json::to_string_pretty(&Json::Object(root)).expect("json values serialize");
    out.push('\n');
    out
}

pub(crate) fn cell_json(cell: &Cell) -> Json {
    let mut obj = Map::new();
    match &cell.content {
        CellContent::Number(v) => {
            obj.insert("v".into(), number_json(*v));
        }
        CellContent::Text(s) => {
            obj.insert("v".into(), Json::from(s.clone()));
        }
        CellContent::Bool(b) => {
            obj.insert("v".into(), Json::from(*b));
        }
        CellContent::Formula(src) => {
            obj.insert("f".into(), Json::from(src.clone()));
        }
    }
    if cell.locked {
        obj.insert("locked".into(), Json::from(true));
    }
    if let Some(fmt) = cell.format {
        obj.insert("fmt".into(), Json::from(fmt.as_str()));
    }
    Json::Object(obj)
}

/// Integral values are written without a fraction so documents stay readable.
pub(crate) fn number_json(v: f64) -> Json {
    if v.fract() == 0.0 && v.abs() < 9.0e15 && !(v == 0.0 && v.is_sign_negative()) {
        Json::from(v as i64)
    } else {
        serde_json::Number::from_f64(v)
            .map(Json::Number)
            .unwrap_or(Json::Null)
    }
}

fn malformed(location: &str, message: &str) -> ModelError {
    ModelError::Malformed {
        location: location.to_string(),
        message: message.to_string(),
    }
}

fn as_object<'a>(v: &'a Json, loc: &str) -> Result<&'a Map<String, Json>, ModelError> {
    v.as_object().ok_or_else(|| malformed(loc, "expected an object"))
}

fn required<'a>(obj: &'a Map<String, Json>, key: &str, loc: &str) -> Result<&'a Json, ModelError> {
    obj.get(key)
        .ok_or_else(|| malformed(loc, &format!("missing `{key}`")))
}

fn required_str<'a>(obj: &'a Map<String, Json>, key: &str, loc: &str) -> Result<&'a str, ModelError> {
    required(obj, key, loc)?
        .as_str()
        .ok_or_else(|| malformed(&format!("{loc}.{key}"), "expected a string"))
}

fn check_keys(obj: &Map<String, Json>, loc: &str, known: &[&str], diags: &mut Vec<String>) {
    for key in obj.keys() {
        if !known.contains(&key.as_str()) {
            diags.push(format!("{loc}: ignoring unknown key `{key}`"));
        }
    }
}
