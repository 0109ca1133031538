use std::cmp::Ordering;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value as Json};

use crate::formula::format_number;
use crate::model::{parse_numeric_text, Cell, CellContent, DeclaredFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorCode {
    Div0,
    Value,
    Ref,
    Cycle,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Div0 => "#DIV/0!",
            ErrorCode::Value => "#VALUE!",
            ErrorCode::Ref => "#REF!",
            ErrorCode::Cycle => "#CYCLE!",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        [ErrorCode::Div0, ErrorCode::Value, ErrorCode::Ref, ErrorCode::Cycle]
            .into_iter()
            .find(|c| c.as_str() == s)
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Value {
    Number(f64),
    Text(String),
    Bool(bool),
    Error(ErrorCode),
    #[default]
    Empty,
}

impl Value {
    /// The value a constant cell contributes. Numbers declared with text
    /// format are text, as a spreadsheet would store them.
    pub fn of_constant(cell: &Cell) -> Option<Value> {
        Some(match &cell.content {
            CellContent::Number(v) if cell.format == Some(DeclaredFormat::Text) => {
                Value::Text(format_number(*v))
            }
            CellContent::Number(v) => Value::Number(*v),
            CellContent::Text(s) => Value::Text(s.clone()),
            CellContent::Bool(b) => Value::Bool(*b),
            CellContent::Formula(_) => return None,
        })
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self, Value::Error(_))
    }

    /// Arithmetic coercion: numeric-looking text becomes a number, empty is 0.
    pub(crate) fn to_number(&self) -> Result<f64, ErrorCode> {
        match self {
            Value::Number(v) => Ok(*v),
            Value::Empty => Ok(0.0),
            Value::Bool(b) => Ok(if *b { 1.0 } else { 0.0 }),
            Value::Text(s) => parse_numeric_text(s).ok_or(ErrorCode::Value),
            Value::Error(e) => Err(*e),
        }
    }

    pub(crate) fn to_text(&self) -> Result<String, ErrorCode> {
        match self {
            Value::Number(v) => Ok(format_number(*v)),
            Value::Text(s) => Ok(s.clone()),
            Value::Bool(b) => Ok(if *b { "TRUE" } else { "FALSE" }.to_string()),
            Value::Empty => Ok(String::new()),
            Value::Error(e) => Err(*e),
        }
    }

    pub(crate) fn to_bool(&self) -> Result<bool, ErrorCode> {
        match self {
            Value::Bool(b) => Ok(*b),
            Value::Number(v) => Ok(*v != 0.0),
            Value::Empty => Ok(false),
            Value::Text(s) if s.eq_ignore_ascii_case("TRUE") => Ok(true),
            Value::Text(s) if s.eq_ignore_ascii_case("FALSE") => Ok(false),
            Value::Text(_) => Err(ErrorCode::Value),
            Value::Error(e) => Err(*e),
        }
    }

    /// Spreadsheet ordering: numbers < text < booleans; text compares without
    /// case; an empty cell takes the other operand's zero value.
    pub(crate) fn compare(&self, other: &Value) -> Result<Ordering, ErrorCode> {
        fn rank(v: &Value) -> u8 {
            match v {
                Value::Number(_) => 0,
                Value::Text(_) => 1,
                Value::Bool(_) => 2,
                _ => 3,
            }
        }
        let fill = |empty_side: &Value, other: &Value| -> Value {
            match (empty_side, other) {
                (Value::Empty, Value::Text(_)) => Value::Text(String::new()),
                (Value::Empty, Value::Bool(_)) => Value::Bool(false),
                (Value::Empty, _) => Value::Number(0.0),
                (v, _) => v.clone(),
            }
        };
        if let Value::Error(e) = self {
            return Err(*e);
        }
        if let Value::Error(e) = other {
            return Err(*e);
        }
        let (a, b) = (fill(self, other), fill(other, self));
        Ok(match (&a, &b) {
            (Value::Number(x), Value::Number(y)) => x.total_cmp(y),
            (Value::Text(x), Value::Text(y)) => x.to_lowercase().cmp(&y.to_lowercase()),
            (Value::Bool(x), Value::Bool(y)) => x.cmp(y),
            _ => rank(&a).cmp(&rank(&b)),
        })
    }

    pub fn to_json(&self) -> Json {
        match self {
            Value::Number(v) => crate::model::number_json(*v),
            Value::Text(s) => Json::from(s.clone()),
            Value::Bool(b) => Json::from(*b),
            Value::Error(e) => json!({ "error": e.as_str() }),
            Value::Empty => Json::Null,
        }
    }

    pub fn from_json(j: &Json) -> Option<Value> {
        Some(match j {
            Json::Number(n) => Value::Number(n.as_f64()?),
            Json::String(s) => Value::Text(s.clone()),
            Json::Bool(b) => Value::Bool(*b),
            Json::Null => Value::Empty,
            Json::Object(obj) => Value::Error(ErrorCode::from_code(obj.get("error")?.as_str()?)?),
            Json::Array(_) => return None,
        })
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => f.write_str(&format_number(*v)),
            Value::Text(s) => write!(f, "\"{s}\""),
            Value::Bool(b) => f.write_str(if *b { "TRUE" } else { "FALSE" }),
            Value::Error(e) => f.write_str(e.as_str()),
            Value::Empty => f.write_str("(empty)"),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let j = Json::deserialize(deserializer)?;
        Value::from_json(&j).ok_or_else(|| D::Error::custom(format!("not a cell value: {j}")))
    }
}
