//! Precedent/dependent graph over cells.
//!
//! Edges run from precedent to dependent. Ranges are expanded eagerly into
//! one edge per cell, guarded by an edge cap. References that fall off the
//! grid or name a missing sheet become `#REF!` nodes.

use std::collections::{BTreeSet, HashMap, HashSet};

use petgraph::algo::kosaraju_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::Direction;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{parse_all, CellFormulaError, FormulaAst, RefCoord, RefOcc};
use crate::model::{column_letters, render_sheet_name, CellAddress, Workbook};

pub const DEFAULT_EDGE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error(transparent)]
    Formula(#[from] CellFormulaError),
    #[error("range expansion would create more than {cap} edges (first exceeded at {cell})")]
    ExplosionCap { cap: usize, cell: CellAddress },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKey {
    Cell(CellAddress),
    /// A reference that cannot resolve; evaluates to `#REF!`.
    Invalid(String),
}

impl NodeKey {
    pub fn as_cell(&self) -> Option<&CellAddress> {
        match self {
            NodeKey::Cell(a) => Some(a),
            NodeKey::Invalid(_) => None,
        }
    }
}

impl std::fmt::Display for NodeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeKey::Cell(a) => write!(f, "{a}"),
            NodeKey::Invalid(text) => write!(f, "#REF!({text})"),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    key: NodeKey,
    is_formula: bool,
}

#[derive(Debug, Clone)]
pub struct DepGraph {
    graph: DiGraph<Node, ()>,
    index: HashMap<NodeKey, NodeIndex>,
    formulas: Vec<FormulaAst>,
    formula_index: HashMap<CellAddress, usize>,
    sheet_order: Vec<String>,
}

/// Read-only view of one node.
#[derive(Debug, Clone, Copy)]
pub struct NodeView<'a> {
    pub key: &'a NodeKey,
    pub is_formula: bool,
    pub precedent_count: usize,
    pub dependent_count: usize,
}

pub fn build_graph(wb: &Workbook) -> Result<DepGraph, GraphError> {
    build_graph_with_cap(wb, DEFAULT_EDGE_CAP)
}

pub fn build_graph_with_cap(wb: &Workbook, edge_cap: usize) -> Result<DepGraph, GraphError> {
    let formulas = parse_all(wb)?;
    let mut g = DepGraph {
        graph: DiGraph::new(),
        index: HashMap::new(),
        formula_index: HashMap::new(),
        sheet_order: wb.sheets.iter().map(|s| s.name.clone()).collect(),
        formulas: Vec::new(),
    };
    for (addr, cell) in wb.cells() {
        let idx = g.node(NodeKey::Cell(addr));
        g.graph[idx].is_formula = cell.is_formula();
    }

    let mut edges = 0usize;
    for ast in &formulas {
        let host = &ast.host;
        let mut precedents: BTreeSet<NodeKey> = BTreeSet::new();
        for occ in ast.refs() {
            match occ {
                RefOcc::Cell(r) => {
                    let sheet = r.target_sheet(host);
                    let key = match r.address(host) {
                        Some(a) if wb.sheet(sheet).is_some() => NodeKey::Cell(a),
                        _ => NodeKey::Invalid(invalid_text(sheet, &ref_text(occ))),
                    };
                    edges += usize::from(!precedents.contains(&key));
                    precedents.insert(key);
                }
                RefOcc::Range(r) => {
                    let sheet = r.target_sheet(host);
                    if !r.is_valid() || wb.sheet(sheet).is_none() {
                        let key = NodeKey::Invalid(invalid_text(sheet, &ref_text(occ)));
                        edges += usize::from(!precedents.contains(&key));
                        precedents.insert(key);
                        continue;
                    }
                    let size = usize::try_from(r.cell_count()).unwrap_or(usize::MAX);
                    if edges.saturating_add(size) > edge_cap {
                        return Err(GraphError::ExplosionCap {
                            cap: edge_cap,
                            cell: host.clone(),
                        });
                    }
                    for cell in r.cells(host) {
                        let key = NodeKey::Cell(cell);
                        if precedents.insert(key) {
                            edges += 1;
                        }
                    }
                }
            }
            if edges > edge_cap {
                return Err(GraphError::ExplosionCap {
                    cap: edge_cap,
                    cell: host.clone(),
                });
            }
        }
        let target = g.index[&NodeKey::Cell(host.clone())];
        for key in precedents {
            let source = g.node(key);
            g.graph.add_edge(source, target, ());
        }
    }

    for (i, ast) in formulas.iter().enumerate() {
        g.formula_index.insert(ast.host.clone(), i);
    }
    g.formulas = formulas;
    Ok(g)
}

fn ref_text(occ: RefOcc<'_>) -> String {
    let coord = |c: &RefCoord| format!("{}{}", column_letters(c.col), c.row);
    match occ {
        RefOcc::Cell(r) => coord(&r.coord),
        RefOcc::Range(r) => format!("{}:{}", coord(&r.start), coord(&r.end)),
    }
}

fn invalid_text(sheet: &str, reference: &str) -> String {
    format!("{}!{reference}", render_sheet_name(sheet))
}

impl DepGraph {
    fn node(&mut self, key: NodeKey) -> NodeIndex {
        if let Some(&idx) = self.index.get(&key) {
            return idx;
        }
        let idx = self.graph.add_node(Node {
            key: key.clone(),
            is_formula: false,
        });
        self.index.insert(key, idx);
        idx
    }

    fn cell_index(&self, addr: &CellAddress) -> Option<NodeIndex> {
        self.index.get(&NodeKey::Cell(addr.clone())).copied()
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.node_count() == 0
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeView<'_>> + '_ {
        self.graph.node_indices().map(move |idx| self.view(idx))
    }

    fn view(&self, idx: NodeIndex) -> NodeView<'_> {
        let node = &self.graph[idx];
        NodeView {
            key: &node.key,
            is_formula: node.is_formula,
            precedent_count: self.graph.neighbors_directed(idx, Direction::Incoming).count(),
            dependent_count: self.graph.neighbors_directed(idx, Direction::Outgoing).count(),
        }
    }

    pub fn node_view(&self, addr: &CellAddress) -> Option<NodeView<'_>> {
        self.cell_index(addr).map(|idx| self.view(idx))
    }

    /// Parsed formulas in sheet/row-major order.
    pub fn formulas(&self) -> &[FormulaAst] {
        &self.formulas
    }

    pub fn formula(&self, addr: &CellAddress) -> Option<&FormulaAst> {
        self.formula_index.get(addr).map(|&i| &self.formulas[i])
    }

    pub fn is_formula(&self, addr: &CellAddress) -> bool {
        self.formula_index.contains_key(addr)
    }

    pub fn precedents(&self, addr: &CellAddress) -> Vec<&NodeKey> {
        self.neighbors(addr, Direction::Incoming)
    }

    pub fn dependents(&self, addr: &CellAddress) -> Vec<&NodeKey> {
        self.neighbors(addr, Direction::Outgoing)
    }

    fn neighbors(&self, addr: &CellAddress, dir: Direction) -> Vec<&NodeKey> {
        let Some(idx) = self.cell_index(addr) else {
            return Vec::new();
        };
        let mut out: Vec<&NodeKey> = self
            .graph
            .neighbors_directed(idx, dir)
            .map(|n| &self.graph[n].key)
            .collect();
        out.sort_by_key(|k| self.key_order(k));
        out
    }

    pub fn dependent_count(&self, addr: &CellAddress) -> usize {
        self.node_view(addr).map_or(0, |v| v.dependent_count)
    }

    /// Sheet order, row, column; `#REF!` nodes last.
    pub fn order_key(&self, addr: &CellAddress) -> (usize, u32, u32) {
        let idx = self
            .sheet_order
            .iter()
            .position(|s| s == addr.sheet())
            .unwrap_or(usize::MAX);
        (idx, addr.row(), addr.col())
    }

    fn key_order(&self, key: &NodeKey) -> (usize, u32, u32, String) {
        match key {
            NodeKey::Cell(a) => {
                let (s, r, c) = self.order_key(a);
                (s, r, c, String::new())
            }
            NodeKey::Invalid(t) => (usize::MAX, u32::MAX, u32::MAX, t.clone()),
        }
    }

    /// Formula cells in the precedent closure of `addr`, including `addr`
    /// itself when it is a formula.
    pub fn formula_closure(&self, addr: &CellAddress) -> BTreeSet<CellAddress> {
        let mut out = BTreeSet::new();
        let Some(start) = self.cell_index(addr) else {
            return out;
        };
        let mut seen = HashSet::from([start]);
        let mut stack = vec![start];
        while let Some(idx) = stack.pop() {
            let node = &self.graph[idx];
            if node.is_formula {
                if let NodeKey::Cell(a) = &node.key {
                    out.insert(a.clone());
                }
            }
            for p in self.graph.neighbors_directed(idx, Direction::Incoming) {
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        out
    }

    /// Strongly connected components, precedents before dependents.
    pub(crate) fn components(&self) -> Vec<Vec<NodeIndex>> {
        let mut sccs = kosaraju_scc(&self.graph);
        // kosaraju_scc yields reverse topological order.
        sccs.reverse();
        sccs
    }

    pub(crate) fn is_cyclic_component(&self, scc: &[NodeIndex]) -> bool {
        scc.len() > 1 || self.graph.contains_edge(scc[0], scc[0])
    }

    pub(crate) fn key(&self, idx: NodeIndex) -> &NodeKey {
        &self.graph[idx].key
    }

    pub(crate) fn predecessors(&self, idx: NodeIndex) -> impl Iterator<Item = NodeIndex> + '_ {
        self.graph.neighbors_directed(idx, Direction::Incoming)
    }

    /// Cells that sit on a reference cycle, grouped per cycle.
    pub fn cycles(&self) -> Vec<Vec<CellAddress>> {
        let mut cycles: Vec<Vec<CellAddress>> = self
            .components()
            .into_iter()
            .filter(|scc| self.is_cyclic_component(scc))
            .map(|scc| {
                let mut cells: Vec<CellAddress> = scc
                    .iter()
                    .filter_map(|&i| self.graph[i].key.as_cell().cloned())
                    .collect();
                cells.sort_by_key(|a| self.order_key(a));
                cells
            })
            .collect();
        cycles.sort_by_key(|c| c.first().map(|a| self.order_key(a)));
        cycles
    }

    /// Edge list as `<from>\t<to>\n` lines in deterministic order.
    pub fn edge_list_text(&self) -> String {
        let mut edges: Vec<(&NodeKey, &NodeKey)> = self
            .graph
            .edge_indices()
            .filter_map(|e| self.graph.edge_endpoints(e))
            .map(|(a, b)| (&self.graph[a].key, &self.graph[b].key))
            .collect();
        edges.sort_by_key(|(a, b)| (self.key_order(a), self.key_order(b)));
        edges
            .into_iter()
            .map(|(a, b)| format!("{a}\t{b}\n"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OutputClosure {
    pub output: CellAddress,
    /// Formula cells in the output's precedent closure, itself included.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChainStats {
    /// Most formula cells on any precedent path.
    pub longest_chain_length: usize,
    pub closures: Vec<OutputClosure>,
    pub cycles: Vec<Vec<CellAddress>>,
}

pub fn chain_stats(g: &DepGraph, outputs: &[CellAddress]) -> ChainStats {
    let components = g.components();
    let mut component_of = vec![0usize; g.graph.node_count()];
    for (ci, scc) in components.iter().enumerate() {
        for idx in scc {
            component_of[idx.index()] = ci;
        }
    }
    // Longest path over the condensation, weighting each component by its
    // formula cells. Components are already precedent-first.
    let mut best = vec![0usize; components.len()];
    for (ci, scc) in components.iter().enumerate() {
        let weight = scc.iter().filter(|&&i| g.graph[i].is_formula).count();
        let upstream = scc
            .iter()
            .flat_map(|&i| g.predecessors(i))
            .map(|p| component_of[p.index()])
            .filter(|&pc| pc != ci)
            .map(|pc| best[pc])
            .max()
            .unwrap_or(0);
        best[ci] = weight + upstream;
    }

    ChainStats {
        longest_chain_length: best.into_iter().max().unwrap_or(0),
        closures: outputs
            .iter()
            .map(|o| OutputClosure {
                output: o.clone(),
                size: g.formula_closure(o).len(),
            })
            .collect(),
        cycles: g.cycles(),
    }
}

/// Formula cells nothing depends on that are not declared outputs,
/// in sheet/row-major order.
pub fn orphan_formulas(g: &DepGraph, outputs: &[CellAddress]) -> Vec<CellAddress> {
    let outputs: HashSet<&CellAddress> = outputs.iter().collect();
    let mut out: Vec<CellAddress> = g
        .formulas
        .iter()
        .map(|f| &f.host)
        .filter(|a| !outputs.contains(a) && g.dependent_count(a) == 0)
        .cloned()
        .collect();
    out.sort_by_key(|a| g.order_key(a));
    out
}
