use crate::model::{CellAddress, CellPos};

/// The supported function set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Function {
    Sum,
    Average,
    Min,
    Max,
    Count,
    If,
    And,
    Or,
    Not,
    Round,
    Abs,
}

impl Function {
    pub const ALL: [Function; 11] = [
        Function::Sum,
        Function::Average,
        Function::Min,
        Function::Max,
        Function::Count,
        Function::If,
        Function::And,
        Function::Or,
        Function::Not,
        Function::Round,
        Function::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Function::Sum => "SUM",
            Function::Average => "AVERAGE",
            Function::Min => "MIN",
            Function::Max => "MAX",
            Function::Count => "COUNT",
            Function::If => "IF",
            Function::And => "AND",
            Function::Or => "OR",
            Function::Not => "NOT",
            Function::Round => "ROUND",
            Function::Abs => "ABS",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        let upper = name.to_ascii_uppercase();
        Self::ALL.into_iter().find(|f| f.name() == upper)
    }

    /// Aggregates skip text, booleans and empties inside ranges.
    pub fn is_aggregate(self) -> bool {
        matches!(
            self,
            Function::Sum | Function::Average | Function::Min | Function::Max | Function::Count
        )
    }

    /// Inclusive argument count bounds; `None` means unbounded.
    pub fn arity(self) -> (usize, Option<usize>) {
        match self {
            Function::If => (2, Some(3)),
            Function::Not | Function::Abs => (1, Some(1)),
            Function::Round => (2, Some(2)),
            _ => (1, None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Plus,
}

impl UnaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Plus => "+",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Concat,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Concat => "&",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
        }
    }

    /// Binding strength; higher binds tighter. All tiers are left-associative.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 1,
            BinaryOp::Concat => 2,
            BinaryOp::Add | BinaryOp::Sub => 3,
            BinaryOp::Mul | BinaryOp::Div => 4,
            BinaryOp::Pow => 5,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 1
    }
}

/// One corner of a reference. Coordinates are kept raw (possibly outside
/// the grid) so out-of-range references survive until evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RefCoord {
    pub row: u32,
    pub col: u32,
    pub row_abs: bool,
    pub col_abs: bool,
}

impl RefCoord {
    pub fn relative(row: u32, col: u32) -> Self {
        Self {
            row,
            col,
            row_abs: false,
            col_abs: false,
        }
    }

    pub fn pos(&self) -> Option<CellPos> {
        let pos = CellPos {
            row: self.row,
            col: self.col,
        };
        pos.is_within_caps().then_some(pos)
    }

    fn translated(&self, d_row: i64, d_col: i64) -> Option<Self> {
        let shift = |v: u32, abs: bool, d: i64| -> Option<u32> {
            if abs {
                Some(v)
            } else {
                u32::try_from(i64::from(v) + d).ok().filter(|&x| x >= 1)
            }
        };
        Some(Self {
            row: shift(self.row, self.row_abs, d_row)?,
            col: shift(self.col, self.col_abs, d_col)?,
            ..*self
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellRef {
    /// Qualifier as written; `None` means the host sheet.
    pub sheet: Option<String>,
    pub coord: RefCoord,
}

impl CellRef {
    pub fn target_sheet<'a>(&'a self, host: &'a CellAddress) -> &'a str {
        self.sheet.as_deref().unwrap_or(host.sheet())
    }

    pub fn is_cross_sheet(&self, host: &CellAddress) -> bool {
        self.target_sheet(host) != host.sheet()
    }

    /// Target cell, or `None` when the reference falls outside the grid.
    pub fn address(&self, host: &CellAddress) -> Option<CellAddress> {
        Some(CellAddress::at(self.target_sheet(host), self.coord.pos()?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RangeRef {
    pub sheet: Option<String>,
    /// Top-left corner after normalisation.
    pub start: RefCoord,
    /// Bottom-right corner after normalisation.
    pub end: RefCoord,
}

impl RangeRef {
    /// Builds a range with `start <= end` on both axes; each coordinate keeps
    /// its own `$` marker when corners are swapped.
    pub fn new(sheet: Option<String>, a: RefCoord, b: RefCoord) -> Self {
        let (top, bottom) = if a.row <= b.row {
            ((a.row, a.row_abs), (b.row, b.row_abs))
        } else {
            ((b.row, b.row_abs), (a.row, a.row_abs))
        };
        let (left, right) = if a.col <= b.col {
            ((a.col, a.col_abs), (b.col, b.col_abs))
        } else {
            ((b.col, b.col_abs), (a.col, a.col_abs))
        };
        Self {
            sheet,
            start: RefCoord {
                row: top.0,
                row_abs: top.1,
                col: left.0,
                col_abs: left.1,
            },
            end: RefCoord {
                row: bottom.0,
                row_abs: bottom.1,
                col: right.0,
                col_abs: right.1,
            },
        }
    }

    pub fn target_sheet<'a>(&'a self, host: &'a CellAddress) -> &'a str {
        self.sheet.as_deref().unwrap_or(host.sheet())
    }

    pub fn is_cross_sheet(&self, host: &CellAddress) -> bool {
        self.target_sheet(host) != host.sheet()
    }

    /// Whether both corners lie inside the grid.
    pub fn is_valid(&self) -> bool {
        self.start.pos().is_some() && self.end.pos().is_some()
    }

    pub fn cell_count(&self) -> u64 {
        u64::from(self.end.row - self.start.row + 1) * u64::from(self.end.col - self.start.col + 1)
    }

    pub fn contains(&self, host: &CellAddress, addr: &CellAddress) -> bool {
        addr.sheet() == self.target_sheet(host)
            && (self.start.row..=self.end.row).contains(&addr.row())
            && (self.start.col..=self.end.col).contains(&addr.col())
    }

    /// Cells of a valid range, row-major.
    pub fn cells(&self, host: &CellAddress) -> impl Iterator<Item = CellAddress> + '_ {
        let sheet = self.target_sheet(host).to_string();
        let (c0, c1) = (self.start.col, self.end.col);
        (self.start.row..=self.end.row).flat_map(move |row| {
            let sheet = sheet.clone();
            (c0..=c1).map(move |col| CellAddress::at(sheet.clone(), CellPos { row, col }))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Text(String),
    Bool(bool),
    Ref(CellRef),
    Range(RangeRef),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(Function, Vec<Expr>),
}

/// A reference occurrence inside an expression.
#[derive(Debug, Clone, Copy)]
pub enum RefOcc<'a> {
    Cell(&'a CellRef),
    Range(&'a RangeRef),
}

impl RefOcc<'_> {
    pub fn is_cross_sheet(&self, host: &CellAddress) -> bool {
        match self {
            RefOcc::Cell(r) => r.is_cross_sheet(host),
            RefOcc::Range(r) => r.is_cross_sheet(host),
        }
    }

    /// Signed row/column offset from `host` to the nearest referenced cell.
    pub fn nearest_offset(&self, host: &CellAddress) -> (i64, i64) {
        let toward = |lo: u32, hi: u32, at: u32| -> i64 {
            if at < lo {
                i64::from(lo) - i64::from(at)
            } else if at > hi {
                i64::from(hi) - i64::from(at)
            } else {
                0
            }
        };
        let (r0, r1, c0, c1) = match self {
            RefOcc::Cell(r) => (r.coord.row, r.coord.row, r.coord.col, r.coord.col),
            RefOcc::Range(r) => (r.start.row, r.end.row, r.start.col, r.end.col),
        };
        (toward(r0, r1, host.row()), toward(c0, c1, host.col()))
    }
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Number(v)
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn unary(op: UnaryOp, operand: Expr) -> Self {
        Expr::Unary(op, Box::new(operand))
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Unary(_, e) => e.walk(f),
            Expr::Binary(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.walk(f)),
            _ => {}
        }
    }

    /// Reference occurrences in source order.
    pub fn refs(&self) -> Vec<RefOcc<'_>> {
        let mut out = Vec::new();
        self.walk(&mut |e| match e {
            Expr::Ref(r) => out.push(RefOcc::Cell(r)),
            Expr::Range(r) => out.push(RefOcc::Range(r)),
            _ => {}
        });
        out
    }

    pub fn number_literals(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Number(v) = e {
                out.push(*v);
            }
        });
        out
    }

    /// Shifts every relative coordinate, as copying the formula would.
    /// `None` if a reference would leave the sheet.
    pub fn translated(&self, d_row: i64, d_col: i64) -> Option<Expr> {
        Some(match self {
            Expr::Ref(r) => Expr::Ref(CellRef {
                sheet: r.sheet.clone(),
                coord: r.coord.translated(d_row, d_col)?,
            }),
            Expr::Range(r) => Expr::Range(RangeRef {
                sheet: r.sheet.clone(),
                start: r.start.translated(d_row, d_col)?,
                end: r.end.translated(d_row, d_col)?,
            }),
            Expr::Unary(op, e) => Expr::unary(*op, e.translated(d_row, d_col)?),
            Expr::Binary(op, l, r) => Expr::binary(
                *op,
                l.translated(d_row, d_col)?,
                r.translated(d_row, d_col)?,
            ),
            Expr::Call(f, args) => Expr::Call(
                *f,
                args.iter()
                    .map(|a| a.translated(d_row, d_col))
                    .collect::<Option<Vec<_>>>()?,
            ),
            leaf => leaf.clone(),
        })
    }
}

/// A parsed formula together with the cell it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct FormulaAst {
    pub host: CellAddress,
    pub root: Expr,
}

impl FormulaAst {
    pub fn refs(&self) -> Vec<RefOcc<'_>> {
        self.root.refs()
    }
}
