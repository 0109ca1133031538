use serde::{Deserialize, Serialize};

use super::ast::{Expr, FormulaAst};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FormulaMetrics {
    /// Operands, operators and function names. Punctuation is not counted.
    pub token_count: usize,
    pub literal_count: usize,
    /// Largest Chebyshev distance from the host to a same-sheet reference.
    pub max_ref_distance: u64,
    /// Same-sheet references that differ from the host in both row and column.
    pub off_axis_ref_count: usize,
    pub cross_sheet_ref_count: usize,
}

pub fn token_count(e: &Expr) -> usize {
    match e {
        Expr::Number(_) | Expr::Text(_) | Expr::Bool(_) | Expr::Ref(_) | Expr::Range(_) => 1,
        Expr::Unary(_, inner) => 1 + token_count(inner),
        Expr::Binary(_, l, r) => 1 + token_count(l) + token_count(r),
        Expr::Call(_, args) => 1 + args.iter().map(token_count).sum::<usize>(),
    }
}

/// Distances use the nearest cell of a range. Cross-sheet references have no
/// spatial arc and are only counted.
pub fn metrics(ast: &FormulaAst) -> FormulaMetrics {
    let mut m = FormulaMetrics {
        token_count: token_count(&ast.root),
        literal_count: ast.root.number_literals().len(),
        ..FormulaMetrics::default()
    };
    for occ in ast.refs() {
        if occ.is_cross_sheet(&ast.host) {
            m.cross_sheet_ref_count += 1;
            continue;
        }
        let (dr, dc) = occ.nearest_offset(&ast.host);
        m.max_ref_distance = m.max_ref_distance.max(dr.unsigned_abs().max(dc.unsigned_abs()));
        if dr != 0 && dc != 0 {
            m.off_axis_ref_count += 1;
        }
    }
    m
}
