use chrono::NaiveDate;
use serde_json::{json, Value as Json};

use super::context::{same_sheet_extents, Context};
use super::{Finding, Location, Rule, RuleId, Severity};
use crate::engine::{evaluate_graph, Value};
use crate::model::{column_letters, Cell, CellAddress, CellContent};

pub(crate) fn registry() -> Vec<&'static dyn Rule> {
    vec![
        &NumAsText,
        &Hardwired,
        &Jammed,
        &DupLiteral,
        &LongFormula,
        &LongArc,
        &XsheetRef,
        &OrphanOutput,
        &FlowViolation,
        &UnprotectedFormula,
        &VersionName,
    ]
}

fn addresses(cells: &[CellAddress]) -> Json {
    Json::from(cells.iter().map(|a| a.to_string()).collect::<Vec<_>>())
}

struct NumAsText;

impl Rule for NumAsText {
    fn id(&self) -> RuleId {
        RuleId::NumAsText
    }

    fn check_cell(&self, ctx: &Context<'_>, addr: &CellAddress, cell: &Cell, out: &mut Vec<Finding>) {
        let Some(coerced) = cell.numeric_text() else { return };
        let mut affected: Vec<CellAddress> = ctx
            .aggregates
            .iter()
            .filter(|a| a.contains(addr))
            .map(|a| a.host.clone())
            .collect();
        affected.sort_by_key(|a| ctx.wb.order_key(a));
        affected.dedup();

        let numeric_neighbours = [(-1, 0), (1, 0), (0, -1), (0, 1)]
            .into_iter()
            .filter_map(|(dr, dc)| addr.offset(dr, dc))
            .filter(|n| ctx.wb.cell(n).and_then(Cell::numeric_constant).is_some())
            .count();
        if affected.is_empty() && numeric_neighbours < 2 {
            return;
        }

        // Understatement: the same workbook evaluated with only this cell
        // entered as a number, minus what it computes today.
        let mut per_aggregate = serde_json::Map::new();
        let mut total = 0.0;
        if !affected.is_empty() {
            let mut fixed = ctx.wb.clone();
            fixed.set_cell(addr, Cell {
                content: CellContent::Number(coerced),
                locked: cell.locked,
                format: None,
            });
            let with = evaluate_graph(&fixed, ctx.g);
            let without = ctx.baseline();
            for host in &affected {
                if let (Some(a), Some(b)) = (with.get(host).as_number(), without.get(host).as_number()) {
                    per_aggregate.insert(host.to_string(), crate::model::number_json(a - b));
                    total += a - b;
                }
            }
        }

        out.push(
            Finding::at(
                RuleId::NumAsText,
                addr,
                format!("number {coerced} is stored as text; aggregates skip it"),
            )
            .with("coercedValue", crate::model::number_json(coerced))
            .with("aggregates", addresses(&affected))
            .with("numericNeighbours", numeric_neighbours)
            .with("understatement", crate::model::number_json(total))
            .with("perAggregate", Json::Object(per_aggregate)),
        );
    }
}

struct Hardwired;

impl Hardwired {
    /// Length of the run of formulas sharing one normal form that starts
    /// next to `addr` in direction (dr, dc).
    fn run<'c>(ctx: &'c Context<'_>, addr: &CellAddress, dr: i64, dc: i64) -> Option<(&'c str, usize)> {
        let mut at = addr.offset(dr, dc)?;
        let form = ctx.normal_text.get(&at)?.as_str();
        let mut len = 0;
        loop {
            match ctx.normal_text.get(&at) {
                Some(f) if f == form => len += 1,
                _ => break,
            }
            match at.offset(dr, dc) {
                Some(next) => at = next,
                None => break,
            }
        }
        Some((form, len))
    }
}

impl Rule for Hardwired {
    fn id(&self) -> RuleId {
        RuleId::Hardwired
    }

    fn check_cell(&self, ctx: &Context<'_>, addr: &CellAddress, cell: &Cell, out: &mut Vec<Finding>) {
        if cell.is_formula() {
            return;
        }
        for (axis, dr, dc) in [("column", 1, 0), ("row", 0, 1)] {
            let (Some((before, n1)), Some((after, n2))) =
                (Self::run(ctx, addr, -dr, -dc), Self::run(ctx, addr, dr, dc))
            else {
                continue;
            };
            let length = n1 + n2 + 1;
            if before != after || length < ctx.cfg.min_run_length_for_hardwire {
                continue;
            }
            let value = Value::of_constant(cell).unwrap_or_default();
            out.push(
                Finding::at(
                    RuleId::Hardwired,
                    addr,
                    format!("constant {value} interrupts a {length}-cell {axis} run of {before}"),
                )
                .with("normalForm", before)
                .with("interruptingValue", value.to_json())
                .with("runLength", length)
                .with("axis", axis),
            );
            return;
        }
    }
}

struct Jammed;

impl Rule for Jammed {
    fn id(&self) -> RuleId {
        RuleId::Jammed
    }

    fn check_cell(&self, ctx: &Context<'_>, addr: &CellAddress, _cell: &Cell, out: &mut Vec<Finding>) {
        let Some(ast) = ctx.g.formula(addr) else { return };
        let literals = ast.root.number_literals();
        if literals.len() < 2 {
            return;
        }
        let shown: Vec<Json> = literals.iter().map(|v| crate::model::number_json(*v)).collect();
        out.push(
            Finding::at(
                RuleId::Jammed,
                addr,
                format!("formula embeds {} numbers instead of referencing input cells", literals.len()),
            )
            .with("literals", shown),
        );
    }
}

struct DupLiteral;

impl Rule for DupLiteral {
    fn id(&self) -> RuleId {
        RuleId::DupLiteral
    }

    fn check_cell(&self, ctx: &Context<'_>, addr: &CellAddress, _cell: &Cell, out: &mut Vec<Finding>) {
        let Some(dups) = ctx.dup_literals.get(addr) else { return };
        for d in dups {
            out.push(
                Finding::at(
                    RuleId::DupLiteral,
                    addr,
                    format!("{} is typed again here; reference {} instead", d.value, d.canonical),
                )
                .with("value", crate::model::number_json(d.value))
                .with("canonical", d.canonical.to_string())
                .with("occurrences", addresses(&d.occurrences)),
            );
        }
    }
}

struct LongFormula;

impl Rule for LongFormula {
    fn id(&self) -> RuleId {
        RuleId::LongFormula
    }

    fn check_cell(&self, ctx: &Context<'_>, addr: &CellAddress, _cell: &Cell, out: &mut Vec<Finding>) {
        let Some(m) = ctx.metrics.get(addr) else { return };
        if m.token_count <= ctx.cfg.long_formula_tokens {
            return;
        }
        out.push(
            Finding::at(
                RuleId::LongFormula,
                addr,
                format!(
                    "{} tokens (threshold {}); consider splitting into simpler steps",
                    m.token_count, ctx.cfg.long_formula_tokens
                ),
            )
            .with("tokenCount", m.token_count)
            .with("threshold", ctx.cfg.long_formula_tokens),
        );
    }
}

struct LongArc;

impl Rule for LongArc {
    fn id(&self) -> RuleId {
        RuleId::LongArc
    }

    fn check_cell(&self, ctx: &Context<'_>, addr: &CellAddress, _cell: &Cell, out: &mut Vec<Finding>) {
        let Some(m) = ctx.metrics.get(addr) else { return };
        let limit = ctx.cfg.long_arc_distance;
        if m.max_ref_distance <= limit {
            return;
        }
        let ast = ctx.g.formula(addr).expect("metrics exist only for formulas");
        let off_axis = ast.refs().iter().filter(|o| !o.is_cross_sheet(addr)).any(|o| {
            let (dr, dc) = o.nearest_offset(addr);
            dr.unsigned_abs().max(dc.unsigned_abs()) > limit && dr != 0 && dc != 0
        });
        let mut message = format!("references a cell {} away (threshold {limit})", m.max_ref_distance);
        if off_axis {
            message.push_str(", off both row and column axes");
        }
        out.push(
            Finding::at(RuleId::LongArc, addr, message)
                .with("distance", m.max_ref_distance)
                .with("threshold", limit)
                .with("offAxis", off_axis),
        );
    }
}

struct XsheetRef;

impl Rule for XsheetRef {
    fn id(&self) -> RuleId {
        RuleId::XsheetRef
    }

    fn check_cell(&self, ctx: &Context<'_>, addr: &CellAddress, _cell: &Cell, out: &mut Vec<Finding>) {
        let Some(ast) = ctx.g.formula(addr) else { return };
        let mut sheets: Vec<String> = ast
            .refs()
            .iter()
            .filter(|o| o.is_cross_sheet(addr))
            .map(|o| match o {
                crate::formula::RefOcc::Cell(c) => c.target_sheet(addr).to_string(),
                crate::formula::RefOcc::Range(r) => r.target_sheet(addr).to_string(),
            })
            .collect();
        if sheets.is_empty() {
            return;
        }
        let count = sheets.len();
        sheets.sort();
        sheets.dedup();
        out.push(
            Finding::at(
                RuleId::XsheetRef,
                addr,
                format!("{count} reference(s) into other sheets: {}", sheets.join(", ")),
            )
            .with("count", count)
            .with("sheets", sheets),
        );
    }
}

struct OrphanOutput;

impl Rule for OrphanOutput {
    fn id(&self) -> RuleId {
        RuleId::OrphanOutput
    }

    fn check_cell(&self, ctx: &Context<'_>, addr: &CellAddress, _cell: &Cell, out: &mut Vec<Finding>) {
        if ctx.orphans.contains(addr) {
            out.push(Finding::at(
                RuleId::OrphanOutput,
                addr,
                "nothing depends on this formula and it is not a declared output",
            ));
        }
    }
}

struct FlowViolation;

impl Rule for FlowViolation {
    fn id(&self) -> RuleId {
        RuleId::FlowViolation
    }

    fn check_cell(&self, ctx: &Context<'_>, addr: &CellAddress, _cell: &Cell, out: &mut Vec<Finding>) {
        let Some(ast) = ctx.g.formula(addr) else { return };
        let (row, col) = (addr.row(), addr.col());
        let offending: Vec<String> = same_sheet_extents(&ast.refs(), addr)
            .into_iter()
            .filter(|&((r0, r1), (_, c1))| r1 > row || ((r0..=r1).contains(&row) && c1 > col))
            .map(|((r0, r1), (c0, c1))| {
                let corner = |r: u32, c: u32| format!("{}{r}", column_letters(c));
                if (r0, c0) == (r1, c1) {
                    corner(r0, c0)
                } else {
                    format!("{}:{}", corner(r0, c0), corner(r1, c1))
                }
            })
            .collect();
        if offending.is_empty() {
            return;
        }
        out.push(
            Finding::at(
                RuleId::FlowViolation,
                addr,
                format!("reads {} below or to the right of itself", offending.join(", ")),
            )
            .with("references", offending),
        );
    }
}

struct UnprotectedFormula;

impl Rule for UnprotectedFormula {
    fn id(&self) -> RuleId {
        RuleId::UnprotectedFormula
    }

    fn check_cell(&self, ctx: &Context<'_>, addr: &CellAddress, cell: &Cell, out: &mut Vec<Finding>) {
        if !cell.is_formula() || cell.locked {
            return;
        }
        let enabled = ctx.wb.meta.protection_enabled;
        let mut f = Finding::at(RuleId::UnprotectedFormula, addr, "formula cell is not locked")
            .with("protectionEnabled", enabled);
        if !enabled {
            f.severity = Severity::Error;
            f.message.push_str(" and sheet protection is off");
        }
        out.push(f);
    }
}

struct VersionName;

/// A `v<digits>` token not glued to a preceding letter or digit.
fn has_version_token(name: &str) -> bool {
    let b = name.as_bytes();
    (0..b.len()).any(|i| {
        matches!(b[i], b'v' | b'V')
            && b.get(i + 1).is_some_and(u8::is_ascii_digit)
            && (i == 0 || !b[i - 1].is_ascii_alphanumeric())
    })
}

/// Every valid YYYY-MM-DD date embedded in the name.
fn embedded_dates(name: &str) -> Vec<NaiveDate> {
    let b = name.as_bytes();
    (0..b.len().saturating_sub(9))
        .filter(|&i| {
            let w = &b[i..i + 10];
            w.iter().enumerate().all(|(k, c)| {
                if k == 4 || k == 7 {
                    *c == b'-'
                } else {
                    c.is_ascii_digit()
                }
            }) && (i == 0 || !b[i - 1].is_ascii_digit())
                && b.get(i + 10).is_none_or(|c| !c.is_ascii_digit())
        })
        .filter_map(|i| NaiveDate::parse_from_str(&name[i..i + 10], "%Y-%m-%d").ok())
        .collect()
}

impl Rule for VersionName {
    fn id(&self) -> RuleId {
        RuleId::VersionName
    }

    fn check_cell(&self, _: &Context<'_>, _: &CellAddress, _: &Cell, _: &mut Vec<Finding>) {}

    fn check_workbook(&self, ctx: &Context<'_>, out: &mut Vec<Finding>) {
        let name = &ctx.wb.name;
        let modified = ctx.wb.meta.modified_date();
        let dates = embedded_dates(name);
        let mut problems = Vec::new();
        if !has_version_token(name) {
            problems.push("no version token (v<digits>)".to_string());
        }
        match (dates.first(), modified) {
            (None, _) => problems.push("no YYYY-MM-DD date".to_string()),
            (Some(d), Some(m)) if !dates.contains(&m) => {
                problems.push(format!("embedded date {d} differs from modification date {m}"))
            }
            _ => {}
        }
        if problems.is_empty() {
            return;
        }
        out.push(
            Finding::new(
                RuleId::VersionName,
                Location::Workbook,
                format!("workbook name `{name}`: {}", problems.join("; ")),
            )
            .with("name", name.as_str())
            .with("modified", ctx.wb.meta.modified.as_str())
            .with("problems", json!(problems)),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_tokens() {
        assert!(has_version_token("budget_v2_2024-01-15"));
        assert!(has_version_token("v10 plan"));
        assert!(!has_version_token("review2024"));
        assert!(!has_version_token("dev2"));
    }

    #[test]
    fn dates() {
        let d = |s| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        assert_eq!(embedded_dates("budget_v2_2024-01-15"), vec![d("2024-01-15")]);
        assert!(embedded_dates("x_2024-02-30").is_empty());
        assert!(embedded_dates("12024-01-15").is_empty());
    }
}
