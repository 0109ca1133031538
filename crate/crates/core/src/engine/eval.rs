use std::cmp::Ordering;
use std::collections::HashMap;

use super::value::{ErrorCode, Value};
use crate::formula::{BinaryOp, CellRef, Expr, FormulaAst, Function, RangeRef, UnaryOp};
use crate::graph::{DepGraph, NodeKey};
use crate::model::{parse_numeric_text, CellAddress, CellPos, Workbook, MAX_COLS};

/// Computed value of every non-empty cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Values {
    map: HashMap<CellAddress, Value>,
}

static EMPTY: Value = Value::Empty;

impl Values {
    /// Value at `addr`; cells that do not exist are empty.
    pub fn get(&self, addr: &CellAddress) -> &Value {
        self.map.get(addr).unwrap_or(&EMPTY)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellAddress, &Value)> {
        self.map.iter()
    }
}

/// Evaluates in dependency order. Cells on a cycle become `#CYCLE!` and
/// errors propagate to everything downstream.
pub(crate) fn evaluate_graph(wb: &Workbook, g: &DepGraph) -> Values {
    let mut values = Values::default();
    for (addr, cell) in wb.cells() {
        if let Some(v) = Value::of_constant(cell) {
            values.map.insert(addr, v);
        }
    }
    for scc in g.components() {
        if g.is_cyclic_component(&scc) {
            for &idx in &scc {
                if let NodeKey::Cell(addr) = g.key(idx) {
                    values.map.insert(addr.clone(), Value::Error(ErrorCode::Cycle));
                }
            }
            continue;
        }
        let NodeKey::Cell(addr) = g.key(scc[0]) else {
            continue;
        };
        if let Some(ast) = g.formula(addr) {
            let v = eval_formula(wb, &values, ast);
            values.map.insert(addr.clone(), v);
        }
    }
    values
}

pub(crate) fn eval_formula(wb: &Workbook, values: &Values, ast: &FormulaAst) -> Value {
    let ctx = Ctx {
        wb,
        values,
        host: &ast.host,
    };
    match ctx.eval(&ast.root) {
        // A formula pointing at an empty cell shows 0.
        Value::Empty => Value::Number(0.0),
        v => v,
    }
}

struct Ctx<'a> {
    wb: &'a Workbook,
    values: &'a Values,
    host: &'a CellAddress,
}

fn finite(v: f64) -> Value {
    if v.is_finite() {
        Value::Number(v)
    } else {
        Value::Error(ErrorCode::Value)
    }
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(code) => return Value::Error(code),
        }
    };
}

impl Ctx<'_> {
    fn eval(&self, e: &Expr) -> Value {
        match e {
            Expr::Number(v) => Value::Number(*v),
            Expr::Text(s) => Value::Text(s.clone()),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Ref(r) => self.cell(r),
            // A bare range in scalar position.
            Expr::Range(r) if self.range_sheet_ok(r) => Value::Error(ErrorCode::Value),
            Expr::Range(_) => Value::Error(ErrorCode::Ref),
            Expr::Unary(op, inner) => {
                let v = self.eval(inner);
                match op {
                    UnaryOp::Neg => finite(-tri!(v.to_number())),
                    UnaryOp::Plus => match v {
                        Value::Empty => Value::Number(0.0),
                        v => v,
                    },
                }
            }
            Expr::Binary(op, l, r) => self.binary(*op, l, r),
            Expr::Call(f, args) => self.call(*f, args),
        }
    }

    fn cell(&self, r: &CellRef) -> Value {
        match r.address(self.host) {
            Some(addr) if self.wb.sheet(addr.sheet()).is_some() => self.values.get(&addr).clone(),
            _ => Value::Error(ErrorCode::Ref),
        }
    }

    fn range_sheet_ok(&self, r: &RangeRef) -> bool {
        r.is_valid() && self.wb.sheet(r.target_sheet(self.host)).is_some()
    }

    /// Values of the non-empty cells inside a range, row-major.
    fn range_values(&self, r: &RangeRef) -> Result<Vec<Value>, ErrorCode> {
        if !self.range_sheet_ok(r) {
            return Err(ErrorCode::Ref);
        }
        let name = r.target_sheet(self.host);
        let sheet = self.wb.sheet(name).ok_or(ErrorCode::Ref)?;
        let lo = CellPos {
            row: r.start.row,
            col: 1,
        };
        let hi = CellPos {
            row: r.end.row,
            col: MAX_COLS,
        };
        Ok(sheet
            .cells
            .range(lo..=hi)
            .filter(|(pos, _)| (r.start.col..=r.end.col).contains(&pos.col))
            .map(|(pos, _)| self.values.get(&CellAddress::at(name, *pos)).clone())
            .collect())
    }

    fn binary(&self, op: BinaryOp, l: &Expr, r: &Expr) -> Value {
        let lv = self.eval(l);
        let rv = self.eval(r);
        if op == BinaryOp::Concat {
            let a = tri!(lv.to_text());
            let b = tri!(rv.to_text());
            return Value::Text(a + &b);
        }
        if op.is_comparison() {
            let ord = tri!(lv.compare(&rv));
            return Value::Bool(match op {
                BinaryOp::Eq => ord == Ordering::Equal,
                BinaryOp::Ne => ord != Ordering::Equal,
                BinaryOp::Lt => ord == Ordering::Less,
                BinaryOp::Le => ord != Ordering::Greater,
                BinaryOp::Gt => ord == Ordering::Greater,
                _ => ord != Ordering::Less,
            });
        }
        let a = tri!(lv.to_number());
        let b = tri!(rv.to_number());
        match op {
            BinaryOp::Add => finite(a + b),
            BinaryOp::Sub => finite(a - b),
            BinaryOp::Mul => finite(a * b),
            BinaryOp::Div if b == 0.0 => Value::Error(ErrorCode::Div0),
            BinaryOp::Div => finite(a / b),
            BinaryOp::Pow if a == 0.0 && b < 0.0 => Value::Error(ErrorCode::Div0),
            BinaryOp::Pow => finite(a.powf(b)),
            _ => unreachable!("comparison and concat handled above"),
        }
    }

    /// Referenced cells contribute only their numbers; values written
    /// directly as arguments are coerced.
    fn numbers(&self, args: &[Expr]) -> Result<Vec<f64>, ErrorCode> {
        let mut out = Vec::new();
        for arg in args {
            match arg {
                Expr::Range(r) => {
                    for v in self.range_values(r)? {
                        match v {
                            Value::Number(n) => out.push(n),
                            Value::Error(e) => return Err(e),
                            _ => {}
                        }
                    }
                }
                Expr::Ref(r) => match self.cell(r) {
                    Value::Number(n) => out.push(n),
                    Value::Error(e) => return Err(e),
                    _ => {}
                },
                other => match self.eval(other) {
                    Value::Empty => {}
                    v => out.push(v.to_number()?),
                },
            }
        }
        Ok(out)
    }

    fn bools(&self, args: &[Expr]) -> Result<Vec<bool>, ErrorCode> {
        let mut out = Vec::new();
        let referenced = |v: Value, out: &mut Vec<bool>| -> Result<(), ErrorCode> {
            match v {
                Value::Bool(b) => out.push(b),
                Value::Number(n) => out.push(n != 0.0),
                Value::Error(e) => return Err(e),
                _ => {}
            }
            Ok(())
        };
        for arg in args {
            match arg {
                Expr::Range(r) => {
                    for v in self.range_values(r)? {
                        referenced(v, &mut out)?;
                    }
                }
                Expr::Ref(r) => referenced(self.cell(r), &mut out)?,
                other => out.push(self.eval(other).to_bool()?),
            }
        }
        if out.is_empty() {
            return Err(ErrorCode::Value);
        }
        Ok(out)
    }

    fn count(&self, args: &[Expr]) -> usize {
        args.iter()
            .map(|arg| match arg {
                Expr::Range(r) => self
                    .range_values(r)
                    .map(|vs| vs.iter().filter(|v| matches!(v, Value::Number(_))).count())
                    .unwrap_or(0),
                Expr::Ref(r) => usize::from(matches!(self.cell(r), Value::Number(_))),
                other => match self.eval(other) {
                    Value::Number(_) | Value::Bool(_) => 1,
                    Value::Text(t) => usize::from(parse_numeric_text(&t).is_some()),
                    _ => 0,
                },
            })
            .sum()
    }

    fn call(&self, f: Function, args: &[Expr]) -> Value {
        match f {
            Function::Sum => finite(tri!(self.numbers(args)).iter().sum()),
            Function::Average => {
                let ns = tri!(self.numbers(args));
                if ns.is_empty() {
                    Value::Error(ErrorCode::Div0)
                } else {
                    finite(ns.iter().sum::<f64>() / ns.len() as f64)
                }
            }
            Function::Min => {
                let ns = tri!(self.numbers(args));
                Value::Number(ns.into_iter().reduce(f64::min).unwrap_or(0.0))
            }
            Function::Max => {
                let ns = tri!(self.numbers(args));
                Value::Number(ns.into_iter().reduce(f64::max).unwrap_or(0.0))
            }
            Function::Count => Value::Number(self.count(args) as f64),
            Function::If => {
                let cond = tri!(self.eval(&args[0]).to_bool());
                match (cond, args.get(1), args.get(2)) {
                    (true, Some(then), _) => self.eval(then),
                    (false, _, Some(otherwise)) => self.eval(otherwise),
                    _ => Value::Bool(false),
                }
            }
            Function::And => Value::Bool(tri!(self.bools(args)).into_iter().all(|b| b)),
            Function::Or => Value::Bool(tri!(self.bools(args)).into_iter().any(|b| b)),
            Function::Not => Value::Bool(!tri!(self.eval(&args[0]).to_bool())),
            Function::Abs => finite(tri!(self.eval(&args[0]).to_number()).abs()),
            Function::Round => {
                let x = tri!(self.eval(&args[0]).to_number());
                let digits = tri!(self.eval(&args[1]).to_number()).trunc();
                finite(round_half_away(x, digits))
            }
        }
    }
}

fn round_half_away(x: f64, digits: f64) -> f64 {
    if digits > 15.0 {
        return x;
    }
    if digits < -308.0 {
        return 0.0;
    }
    let scale = 10f64.powf(digits);
    // Trim binary noise to 15 significant digits first so 2.675 rounds to
    // 2.68; f64::round itself rounds half away from zero.
    let scaled: f64 = format!("{:.14e}", x * scale).parse().unwrap_or(x * scale);
    scaled.round() / scale
}
