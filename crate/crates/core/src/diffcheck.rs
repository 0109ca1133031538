//! Cell-level comparison of workbook copies for change control.
//!
//! Comparison is structural: formulas compare by parsed form (so spacing
//! does not count), numbers within 1e-12, text and booleans exactly.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};
use serde_json::Value as Json;

use crate::formula::{parse_formula, to_source};
use crate::model::{cell_json, Cell, CellAddress, CellContent, Workbook};
use crate::rules::FindingClass;

pub const NUMERIC_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum DiffKind {
    Added,
    Removed,
    ValueChanged,
    FormulaChanged,
    FormulaToConstant,
    ConstantToFormula,
    LockChanged,
}

impl DiffKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiffKind::Added => "added",
            DiffKind::Removed => "removed",
            DiffKind::ValueChanged => "valueChanged",
            DiffKind::FormulaChanged => "formulaChanged",
            DiffKind::FormulaToConstant => "formulaToConstant",
            DiffKind::ConstantToFormula => "constantToFormula",
            DiffKind::LockChanged => "lockChanged",
        }
    }

    /// The kind seen when the two sides are swapped.
    pub fn mirrored(self) -> DiffKind {
        match self {
            DiffKind::Added => DiffKind::Removed,
            DiffKind::Removed => DiffKind::Added,
            DiffKind::FormulaToConstant => DiffKind::ConstantToFormula,
            DiffKind::ConstantToFormula => DiffKind::FormulaToConstant,
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffEntry {
    pub location: CellAddress,
    pub kind: DiffKind,
    pub before: Option<Cell>,
    pub after: Option<Cell>,
}

impl DiffEntry {
    /// A formula replaced by a typed value is how hardwiring gets in.
    pub fn class(&self) -> Option<FindingClass> {
        (self.kind == DiffKind::FormulaToConstant).then_some(FindingClass::FraudIndicator)
    }
}

impl Serialize for DiffEntry {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut obj = serde_json::Map::new();
        obj.insert("location".into(), Json::from(self.location.to_string()));
        obj.insert("kind".into(), Json::from(self.kind.as_str()));
        obj.insert("before".into(), self.before.as_ref().map_or(Json::Null, cell_json));
        obj.insert("after".into(), self.after.as_ref().map_or(Json::Null, cell_json));
        if let Some(class) = self.class() {
            obj.insert("class".into(), Json::from(class.as_str()));
        }
        Json::Object(obj).serialize(s)
    }
}

fn formula_key(src: &str, at: &CellAddress) -> String {
    parse_formula(src, at).map_or_else(|_| src.to_string(), |ast| to_source(&ast))
}

fn same_content(a: &CellContent, b: &CellContent, at: &CellAddress) -> bool {
    match (a, b) {
        (CellContent::Number(x), CellContent::Number(y)) => (x - y).abs() <= NUMERIC_EPSILON || x == y,
        (CellContent::Text(x), CellContent::Text(y)) => x == y,
        (CellContent::Bool(x), CellContent::Bool(y)) => x == y,
        (CellContent::Formula(x), CellContent::Formula(y)) => x == y || formula_key(x, at) == formula_key(y, at),
        _ => false,
    }
}

/// Whether two cells are the same for change-control purposes.
pub fn same_cell(a: &Cell, b: &Cell, at: &CellAddress) -> bool {
    same_content(&a.content, &b.content, at) && a.format == b.format && a.locked == b.locked
}

fn classify(at: &CellAddress, a: Option<&Cell>, b: Option<&Cell>) -> Option<DiffKind> {
    let (a, b) = match (a, b) {
        (None, None) => return None,
        (None, Some(_)) => return Some(DiffKind::Added),
        (Some(_), None) => return Some(DiffKind::Removed),
        (Some(a), Some(b)) => (a, b),
    };
    Some(match (a.is_formula(), b.is_formula()) {
        (true, false) => DiffKind::FormulaToConstant,
        (false, true) => DiffKind::ConstantToFormula,
        (true, true) if !same_content(&a.content, &b.content, at) => DiffKind::FormulaChanged,
        (false, false) if !same_content(&a.content, &b.content, at) || a.format != b.format => {
            DiffKind::ValueChanged
        }
        // a display format on a formula is still a change to what the cell shows
        (true, true) if a.format != b.format => DiffKind::ValueChanged,
        _ if a.locked != b.locked => DiffKind::LockChanged,
        _ => return None,
    })
}

/// Every location, ordered by `a`'s sheets then sheets new in `b`, row-major.
fn union_locations(a: &Workbook, b: &Workbook) -> Vec<CellAddress> {
    let mut sheets: Vec<&str> = a.sheets.iter().map(|s| s.name.as_str()).collect();
    for s in &b.sheets {
        if !sheets.contains(&s.name.as_str()) {
            sheets.push(&s.name);
        }
    }
    let mut out = Vec::new();
    for name in sheets {
        let mut positions = BTreeMap::new();
        for wb in [a, b] {
            if let Some(sheet) = wb.sheet(name) {
                positions.extend(sheet.cells.keys().map(|p| (*p, ())));
            }
        }
        out.extend(positions.into_keys().map(|p| CellAddress::at(name, p)));
    }
    out
}

/// Cell-level differences from `a` to `b`, in deterministic order.
pub fn diff(a: &Workbook, b: &Workbook) -> Vec<DiffEntry> {
    union_locations(a, b)
        .into_iter()
        .filter_map(|at| {
            let (before, after) = (a.cell(&at), b.cell(&at));
            let kind = classify(&at, before, after)?;
            Some(DiffEntry {
                kind,
                before: before.cloned(),
                after: after.cloned(),
                location: at,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Agreement {
    Agreeing,
    Conflicting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeWayEntry {
    pub location: CellAddress,
    pub status: Agreement,
    pub base: Option<Cell>,
    pub copy1: Option<Cell>,
    pub copy2: Option<Cell>,
}

impl Serialize for ThreeWayEntry {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let cell = |c: &Option<Cell>| c.as_ref().map_or(Json::Null, cell_json);
        serde_json::json!({
            "location": self.location.to_string(),
            "status": self.status,
            "base": cell(&self.base),
            "copy1": cell(&self.copy1),
            "copy2": cell(&self.copy2),
        })
        .serialize(s)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ThreeWay {
    pub agreeing: Vec<ThreeWayEntry>,
    pub conflicting: Vec<ThreeWayEntry>,
}

impl ThreeWay {
    pub fn is_consistent(&self) -> bool {
        self.conflicting.is_empty()
    }
}

/// Compares two independently edited copies against their common base.
/// A location changed in only one copy is a conflict: the control exists
/// to surface divergence, not to merge.
pub fn three_way_check(base: &Workbook, copy1: &Workbook, copy2: &Workbook) -> ThreeWay {
    let mut changed: Vec<CellAddress> = diff(base, copy1)
        .into_iter()
        .chain(diff(base, copy2))
        .map(|e| e.location)
        .collect();
    let order = |at: &CellAddress| {
        let sheet = [base, copy1, copy2]
            .iter()
            .enumerate()
            .find_map(|(k, wb)| wb.sheet_index(at.sheet()).map(|i| (k, i)))
            .unwrap_or((3, 0));
        (sheet, at.row(), at.col())
    };
    changed.sort_by_key(order);
    changed.dedup();

    let mut out = ThreeWay::default();
    for at in changed {
        let (c1, c2) = (copy1.cell(&at), copy2.cell(&at));
        let agree = match (c1, c2) {
            (None, None) => true,
            (Some(x), Some(y)) => same_cell(x, y, &at),
            _ => false,
        };
        let entry = ThreeWayEntry {
            status: if agree { Agreement::Agreeing } else { Agreement::Conflicting },
            base: base.cell(&at).cloned(),
            copy1: c1.cloned(),
            copy2: c2.cloned(),
            location: at,
        };
        if agree {
            out.agreeing.push(entry);
        } else {
            out.conflicting.push(entry);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::model::{DeclaredFormat, Sheet};
    use proptest::prelude::*;

    fn book(cells: &[(&str, Cell)]) -> Workbook {
        let mut sheet = Sheet::new("S");
        for (k, c) in cells {
            sheet = sheet.with_cell(k, c.clone());
        }
        Workbook::new("w").with_sheet(sheet)
    }

    fn kinds(d: &[DiffEntry]) -> Vec<(String, DiffKind)> {
        d.iter().map(|e| (e.location.to_string(), e.kind)).collect()
    }

    #[test]
    fn identical_is_empty() {
        let a = book(&[("A1", Cell::number(5.0)), ("B1", Cell::formula("=A1*2"))]);
        assert!(diff(&a, &a).is_empty());
    }

    #[test]
    fn formula_to_constant_is_tagged() {
        let a = book(&[("A1", Cell::number(5.0)), ("B1", Cell::formula("=A1*2"))]);
        let b = book(&[("A1", Cell::number(5.0)), ("B1", Cell::number(10.0))]);
        let d = diff(&a, &b);
        assert_eq!(kinds(&d), vec![("S!B1".into(), DiffKind::FormulaToConstant)]);
        assert_eq!(d[0].class(), Some(FindingClass::FraudIndicator));
        let json = serde_json::to_value(&d[0]).unwrap();
        assert_eq!(json["class"], "fraud-indicator");
        assert_eq!(json["before"]["f"], "=A1*2");
        assert_eq!(json["after"]["v"], 10);
    }

    #[test]
    fn every_kind() {
        let a = book(&[
            ("A1", Cell::number(1.0)),
            ("A2", Cell::number(2.0)),
            ("A3", Cell::formula("=A1+A2")),
            ("A4", Cell::number(4.0)),
            ("A5", Cell::formula("=A1")),
            ("A6", Cell::text("x")),
            ("A7", Cell::number(7.0)),
        ]);
        let b = book(&[
            ("A1", Cell::number(1.0 + 1e-13)),
            ("A2", Cell::number(2.5)),
            ("A3", Cell::formula("=A1 - A2")),
            ("A4", Cell::formula("=A1*4")),
            ("A5", Cell::formula("= A1").locked(true)),
            ("A7", Cell::number(7.0).with_format(DeclaredFormat::Text)),
            ("A8", Cell::boolean(true)),
        ]);
        assert_eq!(
            kinds(&diff(&a, &b)),
            vec![
                ("S!A2".into(), DiffKind::ValueChanged),
                ("S!A3".into(), DiffKind::FormulaChanged),
                ("S!A4".into(), DiffKind::ConstantToFormula),
                ("S!A5".into(), DiffKind::LockChanged),
                ("S!A6".into(), DiffKind::Removed),
                ("S!A7".into(), DiffKind::ValueChanged),
                ("S!A8".into(), DiffKind::Added),
            ]
        );
    }

    #[test]
    fn new_sheet_cells_are_added() {
        let a = book(&[("A1", Cell::number(1.0))]);
        let b = a.clone().with_sheet(Sheet::new("T").with_cell("C1", Cell::number(3.0)));
        assert_eq!(kinds(&diff(&a, &b)), vec![("T!C1".into(), DiffKind::Added)]);
        assert_eq!(kinds(&diff(&b, &a)), vec![("T!C1".into(), DiffKind::Removed)]);
    }

    #[test]
    fn three_way_examples() {
        let base = book(&[("A1", Cell::number(5.0)), ("A2", Cell::number(1.0))]);
        let six = book(&[("A1", Cell::number(6.0)), ("A2", Cell::number(1.0))]);
        let seven = book(&[("A1", Cell::number(7.0)), ("A2", Cell::number(1.0))]);

        let both = three_way_check(&base, &six, &six);
        assert_eq!(both.agreeing.len(), 1);
        assert!(both.is_consistent());

        let split = three_way_check(&base, &six, &seven);
        assert_eq!(split.conflicting.len(), 1);
        assert_eq!(split.conflicting[0].location.to_string(), "S!A1");

        let one_sided = three_way_check(&base, &six, &base);
        assert_eq!(one_sided.conflicting.len(), 1);
        assert!(one_sided.agreeing.is_empty());

        assert_eq!(three_way_check(&base, &base, &base), ThreeWay::default());
    }

    fn arb_cell() -> impl Strategy<Value = Cell> {
        let content = prop_oneof![
            (0i32..4).prop_map(|v| Cell::number(f64::from(v))),
            "[ab]".prop_map(Cell::text),
            any::<bool>().prop_map(Cell::boolean),
            prop_oneof![Just("=A1+1"), Just("=B2*2"), Just("=SUM(A1:A3)")].prop_map(Cell::formula),
        ];
        (content, any::<bool>()).prop_map(|(c, locked)| c.locked(locked))
    }

    fn arb_book() -> impl Strategy<Value = Workbook> {
        proptest::collection::btree_map((1u32..4, 1u32..4), arb_cell(), 0..8).prop_map(|cells| {
            let mut sheet = Sheet::new("S");
            for ((r, c), cell) in cells {
                sheet.cells.insert(crate::model::CellPos { row: r, col: c }, cell);
            }
            Workbook::new("w").with_sheet(sheet)
        })
    }

    fn locations(d: &[DiffEntry]) -> BTreeSet<String> {
        d.iter().map(|e| e.location.to_string()).collect()
    }

    proptest! {
        #[test]
        fn mirrored(a in arb_book(), b in arb_book()) {
            let ab = diff(&a, &b);
            let ba = diff(&b, &a);
            prop_assert_eq!(ab.len(), ba.len());
            for (x, y) in ab.iter().zip(&ba) {
                prop_assert_eq!(&x.location, &y.location);
                prop_assert_eq!(x.kind.mirrored(), y.kind);
                prop_assert_eq!(&x.before, &y.after);
                prop_assert_eq!(&x.after, &y.before);
            }
        }

        #[test]
        fn triangle(a in arb_book(), b in arb_book(), c in arb_book()) {
            prop_assert!(diff(&a, &a).is_empty());
            let ac = locations(&diff(&a, &c));
            let ab = locations(&diff(&a, &b));
            let bc = locations(&diff(&b, &c));
            prop_assert!(ac.len() <= ab.len() + bc.len());
            prop_assert!(ac.is_subset(&ab.union(&bc).cloned().collect()));
        }
    }
}
