//! Strategies shared by the property suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use gridaudit_core::formula::{BinaryOp, CellRef, Expr, FormulaAst, Function, RangeRef, RefCoord, UnaryOp};
use gridaudit_core::model::{Cell, CellAddress, CellContent, CellPos, DeclaredFormat, Meta, Sheet, Workbook};
use gridaudit_core::simlab::{SeedSpec, Topology};
use proptest::prelude::*;

pub const SHEETS: [&str; 3] = ["Data", "Rates", "Q1 Plan"];

pub fn arb_number() -> impl Strategy<Value = f64> {
    prop_oneof![
        (0u32..1000).prop_map(f64::from),
        (0u32..100_000).prop_map(|v| f64::from(v) / 100.0),
        (0.0f64..1e12),
        Just(0.1),
        Just(1e-7),
        Just(1.7976931348623157e308),
    ]
}

pub fn arb_coord() -> impl Strategy<Value = RefCoord> {
    (1u32..80, 1u32..30, any::<bool>(), any::<bool>()).prop_map(|(row, col, row_abs, col_abs)| RefCoord {
        row,
        col,
        row_abs,
        col_abs,
    })
}

fn arb_qualifier() -> impl Strategy<Value = Option<String>> {
    prop_oneof![
        4 => Just(None),
        1 => proptest::sample::select(&SHEETS[..]).prop_map(|s| Some(s.to_string())),
    ]
}

fn arb_leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        3 => arb_number().prop_map(Expr::Number),
        1 => "[a-z \"]{0,6}".prop_map(Expr::Text),
        1 => any::<bool>().prop_map(Expr::Bool),
        4 => (arb_qualifier(), arb_coord()).prop_map(|(sheet, coord)| Expr::Ref(CellRef { sheet, coord })),
    ]
}

fn arb_range() -> impl Strategy<Value = Expr> {
    (arb_qualifier(), arb_coord(), arb_coord()).prop_map(|(sheet, a, b)| Expr::Range(RangeRef::new(sheet, a, b)))
}

const OPS: [BinaryOp; 12] = [
    BinaryOp::Add,
    BinaryOp::Sub,
    BinaryOp::Mul,
    BinaryOp::Div,
    BinaryOp::Pow,
    BinaryOp::Concat,
    BinaryOp::Eq,
    BinaryOp::Ne,
    BinaryOp::Lt,
    BinaryOp::Le,
    BinaryOp::Gt,
    BinaryOp::Ge,
];

/// Expressions the parser can produce: no negative literals.
pub fn arb_expr() -> impl Strategy<Value = Expr> {
    arb_leaf().prop_recursive(4, 32, 4, |inner| {
        let aggregate_arg = prop_oneof![inner.clone(), arb_range()];
        prop_oneof![
            (proptest::sample::select(&OPS[..]), inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            (prop_oneof![Just(UnaryOp::Neg), Just(UnaryOp::Plus)], inner.clone())
                .prop_map(|(op, e)| Expr::unary(op, e)),
            (
                proptest::sample::select(&[Function::Sum, Function::Average, Function::Min, Function::Max, Function::Count][..]),
                proptest::collection::vec(aggregate_arg, 1..4)
            )
                .prop_map(|(f, args)| Expr::Call(f, args)),
            proptest::collection::vec(inner.clone(), 2..4).prop_map(|args| Expr::Call(Function::If, args)),
            proptest::collection::vec(inner.clone(), 1..3).prop_map(|args| Expr::Call(Function::And, args)),
            proptest::collection::vec(inner.clone(), 1..3).prop_map(|args| Expr::Call(Function::Or, args)),
            inner.clone().prop_map(|a| Expr::Call(Function::Not, vec![a])),
            inner.clone().prop_map(|a| Expr::Call(Function::Abs, vec![a])),
            (inner.clone(), inner).prop_map(|(a, b)| Expr::Call(Function::Round, vec![a, b])),
        ]
    })
}

pub fn arb_host() -> impl Strategy<Value = CellAddress> {
    (proptest::sample::select(&SHEETS[..]), 1u32..80, 1u32..30)
        .prop_map(|(s, r, c)| CellAddress::new(s, r, c).expect("in grid"))
}

pub fn arb_formula() -> impl Strategy<Value = FormulaAst> {
    (arb_host(), arb_expr()).prop_map(|(host, root)| FormulaAst { host, root })
}

fn arb_cell() -> impl Strategy<Value = Cell> {
    let content = prop_oneof![
        3 => arb_number().prop_map(CellContent::Number),
        2 => "\\PC{0,12}".prop_map(CellContent::Text),
        1 => any::<bool>().prop_map(CellContent::Bool),
        3 => arb_formula().prop_map(|f| CellContent::Formula(gridaudit_core::formula::to_source(&f))),
    ];
    let format = prop_oneof![Just(None), Just(Some(DeclaredFormat::Text)), Just(Some(DeclaredFormat::General))];
    (content, any::<bool>(), format).prop_map(|(content, locked, format)| Cell { content, locked, format })
}

/// Structurally valid workbooks over a fixed set of sheet names.
pub fn arb_workbook() -> impl Strategy<Value = Workbook> {
    let sheet = proptest::collection::btree_map((1u32..40, 1u32..12), arb_cell(), 0..25);
    (
        "[a-z_]{1,10}(_v[0-9])?",
        proptest::collection::vec(sheet, SHEETS.len()),
        any::<bool>(),
        0usize..3,
        prop_oneof![Just("2024-01-15T09:00:00Z"), Just("2023-12-31"), Just("2024-02-29T23:59:59.5")],
    )
        .prop_map(|(name, sheets, protection, n_outputs, modified)| {
            let sheets: Vec<Sheet> = SHEETS
                .iter()
                .zip(sheets)
                .map(|(name, cells)| Sheet {
                    name: name.to_string(),
                    cells: cells
                        .into_iter()
                        .map(|((row, col), cell)| (CellPos { row, col }, cell))
                        .collect::<BTreeMap<_, _>>(),
                })
                .collect();
            let outputs = sheets
                .iter()
                .flat_map(|s| s.cells.iter().filter(|(_, c)| c.is_formula()).map(|(p, _)| CellAddress::at(s.name.clone(), *p)))
                .take(n_outputs)
                .collect();
            Workbook {
                name,
                meta: Meta {
                    modified: modified.to_string(),
                    outputs,
                    protection_enabled: protection,
                },
                sheets,
            }
        })
}

pub fn arb_seed_spec() -> impl Strategy<Value = SeedSpec> {
    (
        proptest::sample::select(&Topology::ALL[..]),
        1usize..60,
        0usize..20,
        any::<u64>(),
    )
        .prop_map(|(topology, formula_count, input_count, rng_seed)| SeedSpec {
            topology,
            formula_count,
            input_count,
            rng_seed,
            ..SeedSpec::default()
        })
}
