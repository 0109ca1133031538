//! Facts shared by several rules, computed once per run.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::OnceLock;

use super::RuleConfig;
use crate::engine::{evaluate_graph, Values};
use crate::formula::{metrics, normalize, Expr, FormulaMetrics, RefOcc};
use crate::graph::{orphan_formulas, DepGraph};
use crate::model::{CellAddress, Workbook};

/// A rectangle read by an aggregate function.
#[derive(Debug, Clone)]
pub(crate) struct AggregateRead {
    pub host: CellAddress,
    pub sheet: String,
    pub rows: (u32, u32),
    pub cols: (u32, u32),
}

impl AggregateRead {
    pub fn contains(&self, addr: &CellAddress) -> bool {
        addr.sheet() == self.sheet
            && (self.rows.0..=self.rows.1).contains(&addr.row())
            && (self.cols.0..=self.cols.1).contains(&addr.col())
    }
}

/// One literal value typed into more than one cell of a sheet.
#[derive(Debug, Clone)]
pub(crate) struct DupLiteral {
    pub value: f64,
    pub canonical: CellAddress,
    pub occurrences: Vec<CellAddress>,
}

pub(crate) struct Context<'a> {
    pub wb: &'a Workbook,
    pub g: &'a DepGraph,
    pub cfg: &'a RuleConfig,
    pub normal_text: HashMap<CellAddress, String>,
    pub metrics: HashMap<CellAddress, FormulaMetrics>,
    pub orphans: HashSet<CellAddress>,
    pub aggregates: Vec<AggregateRead>,
    pub dup_literals: HashMap<CellAddress, Vec<DupLiteral>>,
    baseline: OnceLock<Values>,
}

impl<'a> Context<'a> {
    pub fn new(wb: &'a Workbook, g: &'a DepGraph, cfg: &'a RuleConfig) -> Self {
        let mut normal_text = HashMap::new();
        let mut metric_map = HashMap::new();
        let mut aggregates = Vec::new();
        for ast in g.formulas() {
            normal_text.insert(ast.host.clone(), normalize(ast).text);
            metric_map.insert(ast.host.clone(), metrics(ast));
            ast.root.walk(&mut |e| {
                let Expr::Call(function, args) = e else { return };
                if !function.is_aggregate() {
                    return;
                }
                for arg in args {
                    let read = match arg {
                        Expr::Range(r) if r.is_valid() => AggregateRead {
                            host: ast.host.clone(),
                            sheet: r.target_sheet(&ast.host).to_string(),
                            rows: (r.start.row, r.end.row),
                            cols: (r.start.col, r.end.col),
                        },
                        Expr::Ref(c) => match c.address(&ast.host) {
                            Some(a) => AggregateRead {
                                host: ast.host.clone(),
                                sheet: a.sheet().to_string(),
                                rows: (a.row(), a.row()),
                                cols: (a.col(), a.col()),
                            },
                            None => continue,
                        },
                        _ => continue,
                    };
                    aggregates.push(read);
                }
            });
        }
        Context {
            wb,
            g,
            cfg,
            normal_text,
            metrics: metric_map,
            orphans: orphan_formulas(g, &wb.meta.outputs).into_iter().collect(),
            aggregates,
            dup_literals: dup_literals(wb, g, cfg),
            baseline: OnceLock::new(),
        }
    }

    /// Evaluation of the workbook as given, computed on first use.
    pub fn baseline(&self) -> &Values {
        self.baseline.get_or_init(|| evaluate_graph(self.wb, self.g))
    }

    pub fn cross_sheet_ref_count(&self) -> usize {
        self.metrics.values().map(|m| m.cross_sheet_ref_count).sum()
    }
}

/// Same-sheet cells that repeat a typed number. The first constant holding
/// the value (row-major) is where it belongs; every other cell is flagged.
fn dup_literals(wb: &Workbook, g: &DepGraph, cfg: &RuleConfig) -> HashMap<CellAddress, Vec<DupLiteral>> {
    let mut flagged: HashMap<CellAddress, Vec<DupLiteral>> = HashMap::new();
    for sheet in &wb.sheets {
        // value bits -> (cell, is_constant) in row-major order
        let mut seen: BTreeMap<u64, Vec<(CellAddress, bool)>> = BTreeMap::new();
        let key = |v: f64| if v == 0.0 { 0 } else { v.to_bits() };
        for (&pos, cell) in &sheet.cells {
            let addr = CellAddress::at(sheet.name.as_str(), pos);
            if let Some(v) = cell.numeric_constant() {
                if cfg.is_dup_candidate(v) {
                    seen.entry(key(v)).or_default().push((addr, true));
                }
            } else if let Some(ast) = g.formula(&addr) {
                let mut lits = ast.root.number_literals();
                lits.retain(|v| cfg.is_dup_candidate(*v));
                lits.sort_by(f64::total_cmp);
                lits.dedup();
                for v in lits {
                    seen.entry(key(v)).or_default().push((addr.clone(), false));
                }
            }
        }
        for (bits, cells) in seen {
            if cells.len() < 2 {
                continue;
            }
            let canonical = cells
                .iter()
                .find(|(_, constant)| *constant)
                .unwrap_or(&cells[0])
                .0
                .clone();
            let occurrences: Vec<CellAddress> = cells.iter().map(|(a, _)| a.clone()).collect();
            for (addr, _) in &cells {
                if *addr != canonical {
                    flagged.entry(addr.clone()).or_default().push(DupLiteral {
                        value: f64::from_bits(bits),
                        canonical: canonical.clone(),
                        occurrences: occurrences.clone(),
                    });
                }
            }
        }
    }
    flagged
}

/// References in `ast` that read a same-sheet cell or range, with their
/// row/column extents.
pub(crate) fn same_sheet_extents<'e>(
    refs: &[RefOcc<'e>],
    host: &CellAddress,
) -> Vec<((u32, u32), (u32, u32))> {
    refs.iter()
        .filter(|occ| !occ.is_cross_sheet(host))
        .map(|occ| match occ {
            RefOcc::Cell(c) => ((c.coord.row, c.coord.row), (c.coord.col, c.coord.col)),
            RefOcc::Range(r) => ((r.start.row, r.end.row), (r.start.col, r.end.col)),
        })
        .collect()
}
