//! Rendering ASTs back to source, either A1-style or in the relative R1C1
//! normal form used to recognise copied formulas.

use super::ast::{BinaryOp, CellRef, Expr, FormulaAst, RangeRef, RefCoord};
use super::metrics::token_count;
use crate::model::{column_letters, render_sheet_name, CellAddress};

#[derive(Clone, Copy)]
enum Style<'a> {
    A1,
    R1C1 { host: &'a CellAddress },
}

/// Canonical relative form of a formula plus the facts derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedFormula {
    /// e.g. `=R[-1]C*2`
    pub text: String,
    /// Number literals, sorted ascending.
    pub literals: Vec<f64>,
    /// Rendered references in source order.
    pub references: Vec<String>,
    pub token_count: usize,
}

/// Renders A1-style source (with the leading `=`), adding only the
/// parentheses that precedence requires.
pub fn to_source(ast: &FormulaAst) -> String {
    let mut out = String::from("=");
    write_expr(&ast.root, Style::A1, &mut out);
    out
}

pub fn normalize(ast: &FormulaAst) -> NormalizedFormula {
    let style = Style::R1C1 { host: &ast.host };
    let mut text = String::from("=");
    write_expr(&ast.root, style, &mut text);

    let mut literals = ast.root.number_literals();
    literals.sort_by(f64::total_cmp);

    let mut references = Vec::new();
    ast.root.walk(&mut |e| {
        let mut s = String::new();
        match e {
            Expr::Ref(r) => write_cell_ref(r, style, &mut s),
            Expr::Range(r) => write_range(r, style, &mut s),
            _ => return,
        }
        references.push(s);
    });

    NormalizedFormula {
        text,
        literals,
        references,
        token_count: token_count(&ast.root),
    }
}

/// Shortest decimal text that reads back to the same `f64`.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}

fn write_expr(e: &Expr, style: Style<'_>, out: &mut String) {
    match e {
        Expr::Number(v) => out.push_str(&format_number(*v)),
        Expr::Text(s) => {
            out.push('"');
            out.push_str(&s.replace('"', "\"\""));
            out.push('"');
        }
        Expr::Bool(b) => out.push_str(if *b { "TRUE" } else { "FALSE" }),
        Expr::Ref(r) => write_cell_ref(r, style, out),
        Expr::Range(r) => write_range(r, style, out),
        Expr::Unary(op, inner) => {
            out.push_str(op.symbol());
            let wrap = matches!(**inner, Expr::Binary(..));
            write_wrapped(inner, wrap, style, out);
        }
        Expr::Binary(op, lhs, rhs) => {
            write_wrapped(lhs, needs_parens(lhs, *op, false), style, out);
            out.push_str(op.symbol());
            write_wrapped(rhs, needs_parens(rhs, *op, true), style, out);
        }
        Expr::Call(func, args) => {
            out.push_str(func.name());
            out.push('(');
            for (i, arg) in args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_expr(arg, style, out);
            }
            out.push(')');
        }
    }
}

fn needs_parens(child: &Expr, parent: BinaryOp, is_right: bool) -> bool {
    match child {
        Expr::Binary(op, ..) => {
            op.precedence() < parent.precedence() || (is_right && op.precedence() == parent.precedence())
        }
        _ => false,
    }
}

fn write_wrapped(e: &Expr, wrap: bool, style: Style<'_>, out: &mut String) {
    if wrap {
        out.push('(');
    }
    write_expr(e, style, out);
    if wrap {
        out.push(')');
    }
}

fn write_qualifier(sheet: &Option<String>, style: Style<'_>, out: &mut String) {
    let shown = match style {
        Style::A1 => sheet.as_deref(),
        // Normal form: qualify only when the target really is another sheet.
        Style::R1C1 { host } => sheet.as_deref().filter(|s| *s != host.sheet()),
    };
    if let Some(name) = shown {
        out.push_str(&render_sheet_name(name));
        out.push('!');
    }
}

fn write_cell_ref(r: &CellRef, style: Style<'_>, out: &mut String) {
    write_qualifier(&r.sheet, style, out);
    write_coord(&r.coord, style, out);
}

fn write_range(r: &RangeRef, style: Style<'_>, out: &mut String) {
    write_qualifier(&r.sheet, style, out);
    match style {
        Style::A1 => {
            write_coord(&r.start, style, out);
            out.push(':');
            write_coord(&r.end, style, out);
        }
        Style::R1C1 { host } => {
            // A range is a pair of rows by a pair of columns. Copying can move a
            // relative bound past an absolute one, so each pair is ordered by a
            // host-independent key instead of by position.
            let rows = axis_pair((r.start.row, r.start.row_abs), (r.end.row, r.end.row_abs), host.row());
            let cols = axis_pair((r.start.col, r.start.col_abs), (r.end.col, r.end.col_abs), host.col());
            for (i, ((row, row_abs), (col, col_abs))) in rows.into_iter().zip(cols).enumerate() {
                if i == 1 {
                    out.push(':');
                }
                write_axis('R', row, row_abs, host.row(), out);
                write_axis('C', col, col_abs, host.col(), out);
            }
        }
    }
}

/// Relative bounds (by offset) before absolute ones (by index).
fn axis_pair(a: (u32, bool), b: (u32, bool), origin: u32) -> [(u32, bool); 2] {
    let key = |(v, abs): (u32, bool)| (abs, if abs { i64::from(v) } else { i64::from(v) - i64::from(origin) });
    if key(a) <= key(b) {
        [a, b]
    } else {
        [b, a]
    }
}

fn write_coord(c: &RefCoord, style: Style<'_>, out: &mut String) {
    match style {
        Style::A1 => {
            if c.col_abs {
                out.push('$');
            }
            out.push_str(&column_letters(c.col));
            if c.row_abs {
                out.push('$');
            }
            out.push_str(&c.row.to_string());
        }
        Style::R1C1 { host } => {
            write_axis('R', c.row, c.row_abs, host.row(), out);
            write_axis('C', c.col, c.col_abs, host.col(), out);
        }
    }
}

fn write_axis(letter: char, value: u32, absolute: bool, origin: u32, out: &mut String) {
    out.push(letter);
    if absolute {
        out.push_str(&value.to_string());
    } else {
        let delta = i64::from(value) - i64::from(origin);
        if delta != 0 {
            out.push_str(&format!("[{delta}]"));
        }
    }
}
