//! Tokenizer and recursive-descent parser for formula source.
//!
//! Precedence, loosest first: comparisons, `&`, `+ -`, `* /`, `^`, prefix
//! `-`/`+`. Every binary tier is left-associative. Prefix minus binds tighter
//! than `^`, so `-2^2` is `(-2)^2`.

use super::ast::{BinaryOp, CellRef, Expr, FormulaAst, Function, RangeRef, RefCoord, UnaryOp};
use super::FormulaError;
use crate::model::{is_sheet_name_char, split_a1, CellAddress};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
    Text(String),
    Name { sheet: Option<String>, text: String },
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    Colon,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    /// Character offset into the full source (including the leading `=`).
    offset: usize,
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
}

impl Lexer {
    fn new(src: &str) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.chars.get(self.pos + n).copied()
    }

    fn err(&self, offset: usize, message: impl Into<String>) -> FormulaError {
        FormulaError::Syntax {
            offset,
            message: message.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<Token>, FormulaError> {
        if self.peek() != Some('=') {
            return Err(self.err(0, "formula must begin with `=`"));
        }
        self.pos = 1;
        let mut out = Vec::new();
        loop {
            while self.peek().is_some_and(char::is_whitespace) {
                self.pos += 1;
            }
            let offset = self.pos;
            let Some(c) = self.peek() else {
                out.push(Token { tok: Tok::End, offset });
                return Ok(out);
            };
            let tok = match c {
                '(' => self.single(Tok::LParen),
                ')' => self.single(Tok::RParen),
                ',' => self.single(Tok::Comma),
                ':' => self.single(Tok::Colon),
                '+' | '-' | '*' | '/' | '^' | '&' | '=' => {
                    self.pos += 1;
                    Tok::Op(match c {
                        '+' => "+",
                        '-' => "-",
                        '*' => "*",
                        '/' => "/",
                        '^' => "^",
                        '&' => "&",
                        _ => "=",
                    })
                }
                '<' => {
                    self.pos += 1;
                    match self.peek() {
                        Some('=') => {
                            self.pos += 1;
                            Tok::Op("<=")
                        }
                        Some('>') => {
                            self.pos += 1;
                            Tok::Op("<>")
                        }
                        _ => Tok::Op("<"),
                    }
                }
                '>' => {
                    self.pos += 1;
                    if self.peek() == Some('=') {
                        self.pos += 1;
                        Tok::Op(">=")
                    } else {
                        Tok::Op(">")
                    }
                }
                '"' => self.string()?,
                '\'' => self.quoted_name()?,
                c if c.is_ascii_digit() || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) => {
                    self.number()?
                }
                c if c.is_alphabetic() || c == '_' || c == '$' => self.name()?,
                other => return Err(self.err(offset, format!("unexpected character `{other}`"))),
            };
            out.push(Token { tok, offset });
        }
    }

    fn single(&mut self, tok: Tok) -> Tok {
        self.pos += 1;
        tok
    }

    fn string(&mut self) -> Result<Tok, FormulaError> {
        let start = self.pos;
        self.pos += 1;
        let mut s = String::new();
        loop {
            match self.peek() {
                None => return Err(self.err(start, "unterminated string")),
                Some('"') if self.peek_at(1) == Some('"') => {
                    s.push('"');
                    self.pos += 2;
                }
                Some('"') => {
                    self.pos += 1;
                    return Ok(Tok::Text(s));
                }
                Some(c) => {
                    s.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    fn number(&mut self) -> Result<Tok, FormulaError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek() == Some('.') {
            self.pos += 1;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let sign = usize::from(matches!(self.peek_at(1), Some('+' | '-')));
            if self.peek_at(1 + sign).is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1 + sign;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Tok::Number(v)),
            _ => Err(self.err(start, format!("invalid number `{text}`"))),
        }
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while self.peek().is_some_and(|c| is_sheet_name_char(c) || c == '$') {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn name(&mut self) -> Result<Tok, FormulaError> {
        let text = self.ident();
        if self.peek() == Some('!') {
            self.pos += 1;
            let start = self.pos;
            let local = self.ident();
            if local.is_empty() {
                return Err(self.err(start, "expected a reference after `!`"));
            }
            return Ok(Tok::Name {
                sheet: Some(text),
                text: local,
            });
        }
        Ok(Tok::Name { sheet: None, text })
    }

    fn quoted_name(&mut self) -> Result<Tok, FormulaError> {
        let start = self.pos;
        self.pos += 1;
        let mut sheet = String::new();
        loop {
            match self.peek() {
                None => return Err(self.err(start, "unterminated sheet name")),
                Some('\'') if self.peek_at(1) == Some('\'') => {
                    sheet.push('\'');
                    self.pos += 2;
                }
                Some('\'') => {
                    self.pos += 1;
                    break;
                }
                Some(c) => {
                    sheet.push(c);
                    self.pos += 1;
                }
            }
        }
        if self.peek() != Some('!') || sheet.is_empty() {
            return Err(self.err(start, "quoted sheet name must be followed by `!`"));
        }
        self.pos += 1;
        let local_start = self.pos;
        let local = self.ident();
        if local.is_empty() {
            return Err(self.err(local_start, "expected a reference after `!`"));
        }
        Ok(Tok::Name {
            sheet: Some(sheet),
            text: local,
        })
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].offset
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax(&self, message: impl Into<String>) -> FormulaError {
        FormulaError::Syntax {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn binary_op(&self, level: u8) -> Option<BinaryOp> {
        let Tok::Op(sym) = self.peek() else {
            return None;
        };
        let op = match *sym {
            "+" => BinaryOp::Add,
            "-" => BinaryOp::Sub,
            "*" => BinaryOp::Mul,
            "/" => BinaryOp::Div,
            "^" => BinaryOp::Pow,
            "&" => BinaryOp::Concat,
            "=" => BinaryOp::Eq,
            "<>" => BinaryOp::Ne,
            "<" => BinaryOp::Lt,
            "<=" => BinaryOp::Le,
            ">" => BinaryOp::Gt,
            ">=" => BinaryOp::Ge,
            _ => return None,
        };
        (op.precedence() == level).then_some(op)
    }

    fn expr(&mut self, level: u8) -> Result<Expr, FormulaError> {
        if level > BinaryOp::Pow.precedence() {
            return self.unary();
        }
        let mut lhs = self.expr(level + 1)?;
        while let Some(op) = self.binary_op(level) {
            self.bump();
            let rhs = self.expr(level + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, FormulaError> {
        match self.peek() {
            Tok::Op("-") => {
                self.bump();
                Ok(Expr::unary(UnaryOp::Neg, self.unary()?))
            }
            Tok::Op("+") => {
                self.bump();
                Ok(Expr::unary(UnaryOp::Plus, self.unary()?))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr, FormulaError> {
        let token = self.bump();
        match token.tok {
            Tok::Number(v) => Ok(Expr::Number(v)),
            Tok::Text(s) => Ok(Expr::Text(s)),
            Tok::LParen => {
                let inner = self.expr(1)?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Name { sheet, text } => self.name(sheet, text, token.offset),
            Tok::End => Err(FormulaError::Syntax {
                offset: token.offset,
                message: "unexpected end of formula".into(),
            }),
            other => Err(FormulaError::Syntax {
                offset: token.offset,
                message: format!("unexpected {}", describe(&other)),
            }),
        }
    }

    fn name(&mut self, sheet: Option<String>, text: String, offset: usize) -> Result<Expr, FormulaError> {
        if sheet.is_none() && *self.peek() == Tok::LParen {
            let func = Function::from_name(&text).ok_or(FormulaError::UnknownFunction {
                name: text.to_ascii_uppercase(),
                offset,
            })?;
            self.bump();
            return self.call(func, offset);
        }
        if sheet.is_none() {
            match text.to_ascii_uppercase().as_str() {
                "TRUE" => return Ok(Expr::Bool(true)),
                "FALSE" => return Ok(Expr::Bool(false)),
                _ => {}
            }
        }
        let coord = ref_coord(&text).ok_or_else(|| FormulaError::UnknownName {
            name: text.clone(),
            offset,
        })?;
        if *self.peek() != Tok::Colon {
            return Ok(Expr::Ref(CellRef { sheet, coord }));
        }
        self.bump();
        let end_offset = self.offset();
        let Tok::Name {
            sheet: end_sheet,
            text: end_text,
        } = self.bump().tok
        else {
            return Err(FormulaError::Syntax {
                offset: end_offset,
                message: "expected a cell reference after `:`".into(),
            });
        };
        if end_sheet.is_some() && end_sheet != sheet {
            return Err(FormulaError::Syntax {
                offset: end_offset,
                message: "range corners must be on the same sheet".into(),
            });
        }
        let end = ref_coord(&end_text).ok_or(FormulaError::Syntax {
            offset: end_offset,
            message: format!("`{end_text}` is not a cell reference"),
        })?;
        Ok(Expr::Range(RangeRef::new(sheet, coord, end)))
    }

    fn call(&mut self, func: Function, offset: usize) -> Result<Expr, FormulaError> {
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.expr(1)?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)` or `,`")?;
        let (min, max) = func.arity();
        if args.len() < min || max.is_some_and(|m| args.len() > m) {
            return Err(FormulaError::Syntax {
                offset,
                message: format!("{} takes {} argument(s), got {}", func.name(), arity_text(min, max), args.len()),
            });
        }
        Ok(Expr::Call(func, args))
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), FormulaError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.syntax(format!("expected {what}, found {}", describe(self.peek()))))
        }
    }
}

fn arity_text(min: usize, max: Option<usize>) -> String {
    match max {
        Some(m) if m == min => min.to_string(),
        Some(m) => format!("{min} to {m}"),
        None => format!("at least {min}"),
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Number(v) => format!("number {v}"),
        Tok::Text(_) => "text literal".into(),
        Tok::Name { text, .. } => format!("`{text}`"),
        Tok::Op(s) => format!("`{s}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Colon => "`:`".into(),
        Tok::End => "end of formula".into(),
    }
}

/// Cell reference syntax without range checks. Coordinates beyond `u32`
/// saturate; they evaluate to `#REF!` either way.
fn ref_coord(text: &str) -> Option<RefCoord> {
    let parts = split_a1(text)?;
    Some(RefCoord {
        row: u32::try_from(parts.row).unwrap_or(u32::MAX),
        col: u32::try_from(parts.col).unwrap_or(u32::MAX),
        row_abs: parts.row_absolute,
        col_abs: parts.col_absolute,
    })
}

pub fn parse_formula(src: &str, host: &CellAddress) -> Result<FormulaAst, FormulaError> {
    let tokens = Lexer::new(src).tokens()?;
    let mut parser = Parser { tokens, pos: 0 };
    if *parser.peek() == Tok::End {
        return Err(parser.syntax("formula is empty"));
    }
    let root = parser.expr(1)?;
    if *parser.peek() != Tok::End {
        return Err(parser.syntax(format!("unexpected {}", describe(parser.peek()))));
    }
    Ok(FormulaAst {
        host: host.clone(),
        root,
    })
}
