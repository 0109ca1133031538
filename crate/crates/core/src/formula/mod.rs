//! Formula parsing, normal forms and complexity metrics.

mod ast;
mod metrics;
mod parser;
mod render;

pub use ast::{BinaryOp, CellRef, Expr, FormulaAst, Function, RangeRef, RefCoord, RefOcc, UnaryOp};
pub use metrics::{metrics, token_count, FormulaMetrics};
pub use parser::parse_formula;
pub use render::{format_number, normalize, to_source, NormalizedFormula};

use std::collections::HashSet;

use thiserror::Error;

use crate::model::{CellAddress, Workbook};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("unknown name `{name}` at offset {offset} (named ranges are not supported)")]
    UnknownName { name: String, offset: usize },
}

/// A formula error tied to the cell it came from.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{cell}: {source}")]
pub struct CellFormulaError {
    pub cell: CellAddress,
    #[source]
    pub source: FormulaError,
}

/// Parses every formula in the workbook, in sheet/row-major order.
pub fn parse_all(wb: &Workbook) -> Result<Vec<FormulaAst>, CellFormulaError> {
    wb.formula_cells()
        .map(|(cell, src)| {
            parse_formula(src, &cell).map_err(|source| CellFormulaError { cell, source })
        })
        .collect()
}

/// Number of distinct (sheet, normal form) pairs.
pub fn unique_formula_count(wb: &Workbook) -> Result<usize, CellFormulaError> {
    Ok(count_unique(&parse_all(wb)?))
}

pub(crate) fn count_unique(asts: &[FormulaAst]) -> usize {
    asts.iter()
        .map(|ast| (ast.host.sheet().to_string(), normalize(ast).text))
        .collect::<HashSet<_>>()
        .len()
}
