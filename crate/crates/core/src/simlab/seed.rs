use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::generate::unversioned_name;
use super::{DefectClass, SeedSpec, SimError, RATES_SHEET};
use crate::engine::{evaluate_graph, Values};
use crate::formula::{
    metrics, normalize, parse_formula, to_source, token_count, BinaryOp, CellRef, Expr, FormulaAst, RefCoord,
};
use crate::graph::build_graph;
use crate::model::{cell_json, Cell, CellAddress, CellContent, CellPos, DeclaredFormat, Workbook, MAX_ROWS};
use crate::rules::{Location, RuleConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TruthEntry {
    pub location: Location,
    pub defect_class: DefectClass,
    /// The clean cell as a workbook-document cell object; null for cells the
    /// seeder created, the old name for workbook-level defects.
    pub original_content: Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeededWorkbook {
    pub workbook: Workbook,
    pub truth: Vec<TruthEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct TruthDocument {
    workbook: String,
    truth: Vec<TruthEntry>,
}

impl SeededWorkbook {
    /// The `.truth` document written next to a seeded workbook.
    pub fn truth_json(&self) -> String {
        let doc = TruthDocument {
            workbook: self.workbook.name.clone(),
            truth: self.truth.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("truth serializes") + "\n"
    }

    pub fn parse_truth(bytes: &[u8]) -> Result<Vec<TruthEntry>, SimError> {
        let doc: TruthDocument =
            serde_json::from_slice(bytes).map_err(|e| SimError::InvalidSpec(format!("truth document: {e}")))?;
        Ok(doc.truth)
    }
}

/// Injects defects into a clean generated workbook. Each formula cell, in
/// row-major order, is hit with probability `error_rate`; the class is drawn
/// from the mix and silently skipped when it has no foothold in that cell.
pub fn seed_defects(wb: &Workbook, spec: &SeedSpec) -> Result<SeededWorkbook, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    rng.set_stream(1);
    let classes: Vec<(DefectClass, f64)> =
        spec.defect_mix.iter().filter(|(_, w)| **w > 0.0).map(|(c, w)| (*c, *w)).collect();
    let picker = WeightedIndex::new(classes.iter().map(|(_, w)| *w))
        .map_err(|e| SimError::InvalidSpec(format!("defect mix: {e}")))?;

    let hosts: Vec<CellAddress> = wb.formula_cells().map(|(a, _)| a).collect();
    let orphan_col = wb
        .sheets
        .iter()
        .flat_map(|s| s.cells.keys().map(|p| p.col))
        .max()
        .unwrap_or(0)
        + 2;
    let mut s = Seeder {
        clean: wb,
        wb: wb.clone(),
        rng,
        cfg: RuleConfig::default(),
        clean_values: None,
        truth: Vec::new(),
        text_protected: HashSet::new(),
        renamed: false,
        orphan_col,
        spec,
    };
    for host in hosts {
        if !s.rng.gen_bool(spec.error_rate) {
            continue;
        }
        let class = classes[picker.sample(&mut s.rng)].0;
        s.apply(class, &host);
    }
    Ok(SeededWorkbook {
        workbook: s.wb,
        truth: s.truth,
    })
}

/// Same-sheet rectangle a reference reads.
#[derive(Clone, Copy)]
struct Rect {
    rows: (u32, u32),
    cols: (u32, u32),
}

impl Rect {
    fn of(e: &Expr, host: &CellAddress) -> Option<Rect> {
        match e {
            Expr::Ref(c) if !c.is_cross_sheet(host) => {
                let p = c.coord.pos()?;
                Some(Rect {
                    rows: (p.row, p.row),
                    cols: (p.col, p.col),
                })
            }
            Expr::Range(r) if !r.is_cross_sheet(host) && r.is_valid() => Some(Rect {
                rows: (r.start.row, r.end.row),
                cols: (r.start.col, r.end.col),
            }),
            _ => None,
        }
    }

    fn cells<'w>(&self, wb: &'w Workbook, sheet: &str) -> impl Iterator<Item = (CellPos, &'w Cell)> + 'w {
        let Rect { rows, cols } = *self;
        wb.sheet(sheet)
            .into_iter()
            .flat_map(move |s| s.cells.range(CellPos { row: rows.0, col: 0 }..=CellPos { row: rows.1, col: u32::MAX }))
            .filter(move |(p, _)| (cols.0..=cols.1).contains(&p.col))
            .map(|(p, c)| (*p, c))
    }

    /// Only numeric constants inside, and at least one.
    fn reads_constants(&self, wb: &Workbook, sheet: &str) -> bool {
        let mut any = false;
        for (_, c) in self.cells(wb, sheet) {
            if c.numeric_constant().is_none() {
                return false;
            }
            any = true;
        }
        any
    }

    fn has_formula(&self, wb: &Workbook, sheet: &str) -> bool {
        self.cells(wb, sheet).any(|(_, c)| c.is_formula())
    }
}

/// Offers each Ref/Range node, left to right, to `f` until it accepts.
fn rewrite_first(e: &mut Expr, f: &mut impl FnMut(&mut Expr) -> bool) -> bool {
    match e {
        Expr::Ref(_) | Expr::Range(_) => f(e),
        Expr::Unary(_, inner) => rewrite_first(inner, f),
        Expr::Binary(_, l, r) => rewrite_first(l, f) || rewrite_first(r, f),
        Expr::Call(_, args) => args.iter_mut().any(|a| rewrite_first(a, f)),
        Expr::Number(_) | Expr::Text(_) | Expr::Bool(_) => false,
    }
}

fn shift_rows(e: &mut Expr, d: i64) {
    let mv = |c: &mut RefCoord| c.row = (i64::from(c.row) + d) as u32;
    match e {
        Expr::Ref(c) => mv(&mut c.coord),
        Expr::Range(r) => {
            mv(&mut r.start);
            mv(&mut r.end);
        }
        _ => {}
    }
}

struct Seeder<'a> {
    clean: &'a Workbook,
    wb: Workbook,
    rng: ChaCha8Rng,
    cfg: RuleConfig,
    clean_values: Option<Values>,
    truth: Vec<TruthEntry>,
    /// Converted inputs and their neighbours, kept numeric so every
    /// conversion stays visible.
    text_protected: HashSet<CellAddress>,
    renamed: bool,
    orphan_col: u32,
    spec: &'a SeedSpec,
}

impl Seeder<'_> {
    fn apply(&mut self, class: DefectClass, host: &CellAddress) -> bool {
        let Some(cell) = self.wb.cell(host).cloned() else { return false };
        let Some(ast) = cell.formula_source().and_then(|src| parse_formula(src, host).ok()) else {
            return false;
        };
        let applied = match class {
            DefectClass::Jammed => {
                let root = Expr::binary(
                    BinaryOp::Mul,
                    ast.root.clone(),
                    Expr::binary(BinaryOp::Add, Expr::num(1.0), Expr::num(0.07)),
                );
                self.replace_formula(host, &cell, root)
            }
            DefectClass::LongFormula => self.long_formula(host, &cell, &ast),
            DefectClass::Omission => self.omission(host, &cell, &ast),
            DefectClass::DupLiteral => self.dup_literal(host, &cell, &ast),
            DefectClass::Hardwired => self.hardwired(host, &ast),
            DefectClass::NumAsText => return self.num_as_text(host, &ast),
            DefectClass::LongArc => self.long_arc(host, &cell, &ast),
            DefectClass::XsheetRef => self.xsheet(host, &cell, &ast),
            DefectClass::OrphanOutput => return self.orphan(host),
            DefectClass::FlowViolation => self.flow(host, &cell, &ast),
            DefectClass::UnprotectedFormula => {
                self.wb.set_cell(host, cell.clone().locked(false));
                true
            }
            DefectClass::VersionName => {
                if self.renamed {
                    return false;
                }
                self.renamed = true;
                let old = std::mem::replace(&mut self.wb.name, unversioned_name(self.spec.topology));
                self.truth.push(TruthEntry {
                    location: Location::Workbook,
                    defect_class: class,
                    original_content: Json::String(old),
                });
                return true;
            }
        };
        if applied {
            self.record(host, class);
        }
        applied
    }

    fn record(&mut self, at: &CellAddress, class: DefectClass) {
        self.truth.push(TruthEntry {
            location: Location::Cell(at.clone()),
            defect_class: class,
            original_content: self.clean.cell(at).map_or(Json::Null, cell_json),
        });
    }

    fn replace_formula(&mut self, host: &CellAddress, cell: &Cell, root: Expr) -> bool {
        let src = to_source(&FormulaAst {
            host: host.clone(),
            root,
        });
        self.wb.set_cell(host, Cell {
            content: CellContent::Formula(src),
            ..cell.clone()
        });
        true
    }

    fn long_formula(&mut self, host: &CellAddress, cell: &Cell, ast: &FormulaAst) -> bool {
        let mut first = None;
        ast.root.walk(&mut |e| {
            if first.is_none() && matches!(e, Expr::Ref(_) | Expr::Range(_)) {
                first = Some(e.clone());
            }
        });
        let Some(x) = first else { return false };
        let mut root = ast.root.clone();
        while token_count(&root) <= self.cfg.long_formula_tokens {
            // +MAX(x)-MIN(x): longer, same value
            root = Expr::binary(
                BinaryOp::Sub,
                Expr::binary(BinaryOp::Add, root, Expr::Call(crate::formula::Function::Max, vec![x.clone()])),
                Expr::Call(crate::formula::Function::Min, vec![x.clone()]),
            );
        }
        self.replace_formula(host, cell, root)
    }

    fn omission(&mut self, host: &CellAddress, cell: &Cell, ast: &FormulaAst) -> bool {
        let root = match &ast.root {
            Expr::Binary(op, lhs, _) if !op.is_comparison() => (**lhs).clone(),
            Expr::Call(func, args) if func.is_aggregate() => {
                let mut args = args.clone();
                let Some(Expr::Range(r)) = args.iter_mut().find(|a| matches!(a, Expr::Range(r) if r.cell_count() > 1))
                else {
                    return false;
                };
                if r.end.row > r.start.row {
                    r.end.row -= 1;
                } else {
                    r.end.col -= 1;
                }
                Expr::Call(*func, args)
            }
            _ => return false,
        };
        self.replace_formula(host, cell, root)
    }

    fn dup_literal(&mut self, host: &CellAddress, cell: &Cell, ast: &FormulaAst) -> bool {
        let (wb, cfg) = (&self.wb, &self.cfg);
        let candidate = |a: Option<CellAddress>| -> Option<f64> {
            let a = a?;
            let v = wb.cell(&a)?.numeric_constant()?;
            (a.sheet() == host.sheet() && cfg.is_dup_candidate(v)).then_some(v)
        };
        let mut root = ast.root.clone();
        let typed = rewrite_first(&mut root, &mut |e| {
            if let Expr::Ref(c) = e {
                if let Some(v) = candidate(c.address(host)) {
                    *e = Expr::num(v);
                    return true;
                }
            }
            false
        });
        if !typed {
            // aggregate over a line of inputs: drop the last one from the
            // range and type its value as an extra argument
            let Expr::Call(func, args) = &mut root else { return false };
            if !func.is_aggregate() {
                return false;
            }
            let Some(i) = args.iter().position(|a| match a {
                Expr::Range(r) => {
                    r.cell_count() > 1
                        && (r.start.row == r.end.row || r.start.col == r.end.col)
                        && !r.is_cross_sheet(host)
                        && candidate(r.end.pos().map(|p| CellAddress::at(host.sheet(), p))).is_some()
                }
                _ => false,
            }) else {
                return false;
            };
            let Expr::Range(r) = &mut args[i] else { unreachable!() };
            let last = CellAddress::at(host.sheet(), r.end.pos().expect("checked valid"));
            if r.end.row > r.start.row {
                r.end.row -= 1;
            } else {
                r.end.col -= 1;
            }
            let v = candidate(Some(last)).expect("checked candidate");
            args.push(Expr::num(v));
        }
        self.replace_formula(host, cell, root)
    }

    fn normal_form(&self, addr: &CellAddress) -> Option<String> {
        let src = self.wb.cell(addr)?.formula_source()?;
        Some(normalize(&parse_formula(src, addr).ok()?).text)
    }

    fn hardwired(&mut self, host: &CellAddress, ast: &FormulaAst) -> bool {
        let form = normalize(ast).text;
        let inside_run = [(1, 0), (0, 1)].into_iter().any(|(dr, dc)| {
            let side = |k: i64| host.offset(k * dr, k * dc).and_then(|n| self.normal_form(&n));
            side(-1).as_deref() == Some(form.as_str()) && side(1).as_deref() == Some(form.as_str())
        });
        if !inside_run {
            return false;
        }
        let clean = self.clean;
        let values = self.clean_values.get_or_insert_with(|| {
            build_graph(clean).map(|g| evaluate_graph(clean, &g)).unwrap_or_default()
        });
        let Some(v) = values.get(host).as_number() else { return false };
        let locked = self.wb.cell(host).is_some_and(|c| c.locked);
        self.wb.set_cell(host, Cell::number(v).locked(locked));
        true
    }

    fn num_as_text(&mut self, host: &CellAddress, ast: &FormulaAst) -> bool {
        // (target, read directly by an aggregate of this formula)
        let mut reads: Vec<(CellAddress, bool)> = Vec::new();
        collect_reads(&ast.root, host, false, &mut reads);
        let numeric_neighbours = |wb: &Workbook, a: &CellAddress| {
            [(-1, 0), (1, 0), (0, -1), (0, 1)]
                .into_iter()
                .filter_map(|(dr, dc)| a.offset(dr, dc))
                .filter(|n| wb.cell(n).and_then(Cell::numeric_constant).is_some())
                .count()
        };
        let Some(target) = reads.into_iter().find_map(|(a, aggregated)| {
            let c = self.wb.cell(&a)?;
            let eligible = a.sheet() == host.sheet()
                && matches!(c.content, CellContent::Number(_))
                && c.format.is_none()
                && !self.text_protected.contains(&a)
                && (aggregated || numeric_neighbours(&self.wb, &a) >= 2);
            eligible.then_some(a)
        }) else {
            return false;
        };
        let original = self.wb.cell(&target).expect("target exists").clone();
        let CellContent::Number(v) = original.content else { unreachable!() };
        let converted = if self.rng.gen_bool(0.5) {
            Cell::text(crate::formula::format_number(v))
        } else {
            Cell::number(v).with_format(DeclaredFormat::Text)
        };
        self.wb.set_cell(&target, converted.locked(original.locked));
        self.text_protected.insert(target.clone());
        for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            if let Some(n) = target.offset(dr, dc) {
                self.text_protected.insert(n);
            }
        }
        self.record(&target, DefectClass::NumAsText);
        true
    }

    fn long_arc(&mut self, host: &CellAddress, cell: &Cell, ast: &FormulaAst) -> bool {
        let wb = &self.wb;
        let sheet = host.sheet();
        let mut root = ast.root.clone();
        let moved = rewrite_first(&mut root, &mut |e| {
            let Some(rect) = Rect::of(e, host) else { return false };
            if !rect.reads_constants(wb, sheet) {
                return false;
            }
            let k = i64::from(30 + rect.rows.1 - rect.rows.0 + 1);
            for d in [-k, k] {
                let (top, bottom) = (i64::from(rect.rows.0) + d, i64::from(rect.rows.1) + d);
                if top < 1 || bottom > i64::from(MAX_ROWS) {
                    continue;
                }
                let shifted = Rect {
                    rows: (top as u32, bottom as u32),
                    cols: rect.cols,
                };
                if shifted.has_formula(wb, sheet) {
                    continue;
                }
                shift_rows(e, d);
                return true;
            }
            false
        });
        if !moved {
            return false;
        }
        let candidate = FormulaAst {
            host: host.clone(),
            root,
        };
        if metrics(&candidate).max_ref_distance <= self.cfg.long_arc_distance {
            return false;
        }
        self.replace_formula(host, cell, candidate.root)
    }

    fn xsheet(&mut self, host: &CellAddress, cell: &Cell, ast: &FormulaAst) -> bool {
        let k = self.rng.gen_range(1..=10);
        let wb = &self.wb;
        let mut root = ast.root.clone();
        let moved = rewrite_first(&mut root, &mut |e| {
            let Some(rect) = Rect::of(e, host) else { return false };
            if !rect.reads_constants(wb, host.sheet()) {
                return false;
            }
            *e = Expr::Ref(CellRef {
                sheet: Some(RATES_SHEET.to_string()),
                coord: RefCoord::relative(k, 1),
            });
            true
        });
        moved && wb.sheet(RATES_SHEET).is_some() && self.replace_formula(host, cell, root)
    }

    fn orphan(&mut self, host: &CellAddress) -> bool {
        let mut col = self.orphan_col.max(host.col() + 2);
        let at = loop {
            let Ok(a) = CellAddress::new(host.sheet(), host.row(), col) else { return false };
            if self.wb.cell(&a).is_none() {
                break a;
            }
            col += 1;
        };
        let src = format!("={}", host.pos().a1());
        self.wb.set_cell(&at, Cell::formula(src).locked(true));
        self.record(&at, DefectClass::OrphanOutput);
        true
    }

    fn flow(&mut self, host: &CellAddress, cell: &Cell, ast: &FormulaAst) -> bool {
        let wb = &self.wb;
        let sheet = host.sheet();
        let mut root = ast.root.clone();
        let moved = rewrite_first(&mut root, &mut |e| {
            let Some(rect) = Rect::of(e, host) else { return false };
            if rect.rows.1 > host.row() || !rect.reads_constants(wb, sheet) {
                return false;
            }
            // just far enough that the bottom edge sits below the host
            let d = host.row() + 1 - rect.rows.1;
            let shifted = Rect {
                rows: (rect.rows.0 + d, rect.rows.1 + d),
                cols: rect.cols,
            };
            if shifted.rows.1 > MAX_ROWS || shifted.has_formula(wb, sheet) {
                return false;
            }
            shift_rows(e, i64::from(d));
            true
        });
        moved && self.replace_formula(host, cell, root)
    }
}

/// Every cell read by `e`, flagged when it is a direct aggregate argument.
fn collect_reads(e: &Expr, host: &CellAddress, in_aggregate: bool, out: &mut Vec<(CellAddress, bool)>) {
    match e {
        Expr::Ref(c) => out.extend(c.address(host).map(|a| (a, in_aggregate))),
        Expr::Range(r) if r.is_valid() && r.cell_count() <= 10_000 => {
            out.extend(r.cells(host).map(|a| (a, in_aggregate)))
        }
        Expr::Range(_) | Expr::Number(_) | Expr::Text(_) | Expr::Bool(_) => {}
        Expr::Unary(_, inner) => collect_reads(inner, host, false, out),
        Expr::Binary(_, l, r) => {
            collect_reads(l, host, false, out);
            collect_reads(r, host, false, out);
        }
        Expr::Call(func, args) => {
            for a in args {
                collect_reads(a, host, func.is_aggregate(), out);
            }
        }
    }
}
