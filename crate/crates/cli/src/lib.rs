//! `gridaudit`: audit, risk, inspection, change-control and simulation
//! commands over canonical workbook documents.
//!
//! Exit codes: 0 clean, 1 findings (or mismatches, conflicts, differences),
//! 2 usage or input errors.

pub mod config;
pub mod report;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gridaudit_core::diffcheck::{diff, three_way_check, DiffEntry};
use gridaudit_core::engine::{recheck_with, snapshot_at, snapshot_path, Snapshot};
use gridaudit_core::graph::{build_graph, chain_stats, DepGraph};
use gridaudit_core::inspect::{plan, reconcile, yield_report, SessionFindings};
use gridaudit_core::model::{parse_workbook, serialize_workbook, Cell, CellContent, Workbook};
use gridaudit_core::risk::{assess_with_findings, p_any_error, p_chain_correct, Inspectors};
use gridaudit_core::rules::{run_rules, Severity};
use gridaudit_core::simlab::{self, DefectClass, SeedSpec, SeededWorkbook, Topology};
use serde_json::{json, Value as Json};

use config::ToolConfig;
use report::{num, risk_lines, AuditReport, Timestamps};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Machine,
}

#[derive(Debug, Parser)]
#[command(name = "gridaudit", version, about = "Spreadsheet auditing: rules, risk, inspection and change control")]
pub struct Cli {
    /// human: line-oriented text; machine: a JSON document.
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    pub format: Format,
    /// Also write the JSON document to this file.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Use this timestamp instead of the current time (reproducible output).
    #[arg(long, global = true)]
    pub fixed_timestamp: Option<String>,
    /// Configuration document (rules, risk, plan, scoreWeights sections).
    #[arg(long, global = true, env = "GRIDAUDIT_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every rule and the risk model over a workbook.
    Audit {
        workbook: PathBuf,
        /// Lowest severity that makes the audit fail.
        #[arg(long, default_value = "error", value_parser = parse_severity)]
        fail_on: Severity,
    },
    /// Cell-error-rate risk figures.
    Risk {
        workbook: PathBuf,
        /// Base per-formula error rate.
        #[arg(long)]
        p: Option<f64>,
        /// Fraction of errors that are serious.
        #[arg(long)]
        serious_fraction: Option<f64>,
        /// Inspection team size (default: the generic yield).
        #[arg(long)]
        team_size: Option<u32>,
        #[arg(long)]
        rounds: Option<u32>,
    },
    /// Split formulas into inspection modules.
    Plan { workbook: PathBuf },
    /// Merge inspectors' session files for one module.
    Reconcile {
        workbook: PathBuf,
        #[arg(required = true)]
        sessions: Vec<PathBuf>,
        /// Seeded truth document to score the union against.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Cell-level differences between two copies.
    Diff { a: PathBuf, b: PathBuf },
    /// Compare two independently edited copies against their base.
    Threeway { base: PathBuf, copy1: PathBuf, copy2: PathBuf },
    /// Record inputs and output values next to the workbook.
    Snapshot { workbook: PathBuf },
    /// Re-evaluate and compare against a snapshot.
    Recheck {
        workbook: PathBuf,
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Generate a workbook and optionally seed defects into it.
    Seed {
        /// Seed spec document; flags below override its fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        topology: Option<Topology>,
        #[arg(long)]
        formulas: Option<usize>,
        #[arg(long)]
        inputs: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        /// CLASS=weight[,CLASS=weight...]
        #[arg(long)]
        mix: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the clean workbook only.
        #[arg(long)]
        clean: bool,
        /// File stem for the written documents.
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Monte Carlo estimate of the risk closed forms.
    Mc {
        #[arg(long, default_value_t = 0.02)]
        p: f64,
        /// Unique formulas.
        #[arg(long = "U", visible_alias = "u")]
        u: u64,
        /// Chain length (default: U).
        #[arg(long = "L", visible_alias = "l")]
        l: Option<u64>,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the precedent graph as an edge list.
    GraphDump { workbook: PathBuf },
}

fn parse_severity(s: &str) -> Result<Severity, String> {
    s.parse()
}

/// Runs a parsed command line, writing to `out`; returns the exit code.
pub fn run(cli: &Cli, out: &mut dyn Write) -> u8 {
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("gridaudit: error: {e:#}");
            2
        }
    }
}

/// What a command produced: human text, the JSON document and an exit code.
struct Outcome {
    human: String,
    machine: Json,
    code: u8,
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<u8> {
    let cfg = ToolConfig::load(cli.config.as_deref())?;
    let now = || {
        cli.fixed_timestamp
            .clone()
            .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
    };
    let outcome = match &cli.command {
        Command::Audit { workbook, fail_on } => cmd_audit(&load(workbook)?, &cfg, *fail_on, &now())?,
        Command::Risk {
            workbook,
            p,
            serious_fraction,
            team_size,
            rounds,
        } => {
            let mut params = cfg.risk.clone();
            if let Some(p) = p {
                params.p = *p;
            }
            if let Some(s) = serious_fraction {
                params.s = *s;
            }
            if let Some(k) = team_size {
                params.inspectors = Inspectors::Team(*k);
            }
            if let Some(r) = rounds {
                params.rounds = *r;
            }
            let wb = load(workbook)?;
            let g = graph(&wb)?;
            let report = assess_with_findings(&wb, &g, &params, &[], &cfg.score_weights)?;
            Outcome {
                human: risk_lines(&report),
                machine: serde_json::to_value(&report)?,
                code: 0,
            }
        }
        Command::Plan { workbook } => cmd_plan(&load(workbook)?, &cfg)?,
        Command::Reconcile {
            workbook,
            sessions,
            truth,
        } => cmd_reconcile(&load(workbook)?, sessions, truth.as_deref(), &cfg)?,
        Command::Diff { a, b } => cmd_diff(&load(a)?, &load(b)?),
        Command::Threeway { base, copy1, copy2 } => {
            let tw = three_way_check(&load(base)?, &load(copy1)?, &load(copy2)?);
            let mut human = format!("{} agreeing, {} conflicting\n", tw.agreeing.len(), tw.conflicting.len());
            for e in tw.agreeing.iter().chain(&tw.conflicting) {
                let status = if tw.conflicting.contains(e) { "conflict" } else { "agree" };
                let _ = writeln!(
                    human,
                    "  {status:<8} {}: base {} | copy1 {} | copy2 {}",
                    e.location,
                    show(e.base.as_ref()),
                    show(e.copy1.as_ref()),
                    show(e.copy2.as_ref())
                );
            }
            Outcome {
                code: u8::from(!tw.is_consistent()),
                machine: serde_json::to_value(&tw)?,
                human,
            }
        }
        Command::Snapshot { workbook } => {
            let wb = load(workbook)?;
            let snap = snapshot_at(&wb, &now())?;
            let path = snapshot_path(workbook);
            std::fs::write(&path, snap.to_json()).with_context(|| format!("cannot write {}", path.display()))?;
            Outcome {
                human: format!(
                    "snapshot of {} input(s) and {} output(s) written to {}\n",
                    snap.inputs.len(),
                    snap.outputs.len(),
                    path.display()
                ),
                machine: json!({ "path": path.display().to_string(), "snapshot": snap }),
                code: 0,
            }
        }
        Command::Recheck { workbook, snapshot } => {
            let wb = load(workbook)?;
            let path = snapshot.clone().unwrap_or_else(|| snapshot_path(workbook));
            let bytes = std::fs::read(&path).with_context(|| format!("cannot read snapshot {}", path.display()))?;
            let snap = Snapshot::from_json(&bytes)?;
            let report = recheck_with(&wb, &snap, cfg.recheck.tolerance())?;
            let mut human = format!(
                "{} output(s) match, {} mismatch(es), {} missing\n",
                report.matches.len(),
                report.mismatches.len(),
                report.missing.len()
            );
            for m in &report.mismatches {
                let _ = writeln!(human, "  MISMATCH {}: expected {} actual {}", m.cell, m.expected, m.actual);
            }
            for m in &report.missing {
                let _ = writeln!(human, "  MISSING {m}");
            }
            Outcome {
                code: u8::from(!report.is_clean()),
                machine: serde_json::to_value(&report)?,
                human,
            }
        }
        Command::Seed {
            spec,
            topology,
            formulas,
            inputs,
            p,
            mix,
            seed,
            clean,
            name,
            out_dir,
        } => {
            let mut s = match spec {
                Some(path) => SeedSpec::from_json(&std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?)?,
                None => SeedSpec::default(),
            };
            if let Some(t) = topology {
                s.topology = *t;
            }
            if let Some(f) = formulas {
                s.formula_count = *f;
            }
            if let Some(n) = inputs {
                s.input_count = *n;
            }
            if let Some(p) = p {
                s.error_rate = *p;
            }
            if let Some(m) = mix {
                s.defect_mix = parse_mix(m)?;
            }
            if let Some(seed) = seed {
                s.rng_seed = *seed;
            }
            s.validate()?;
            cmd_seed(&s, *clean, name.as_deref(), out_dir)?
        }
        Command::Mc { p, u, l, trials, seed } => {
            let params = gridaudit_core::risk::RiskParams {
                p: *p,
                ..cfg.risk.clone()
            };
            let l = l.unwrap_or(*u);
            let mc = simlab::monte_carlo(&params, *u, l, *trials, *seed)?;
            let (any, chain) = (p_any_error(mc.rate, *u), p_chain_correct(mc.rate, l));
            let human = format!(
                "monte carlo: rate={} U={u} L={l} trials={trials}\n  pAnyError     {} ± {} (closed form {})\n  pChainCorrect {} ± {} (closed form {})\n",
                num(mc.rate),
                num(mc.p_any_error_hat),
                num(mc.std_error_any),
                num(any),
                num(mc.p_chain_correct_hat),
                num(mc.std_error_chain),
                num(chain),
            );
            Outcome {
                human,
                machine: json!({ "estimate": mc, "closedForm": { "pAnyError": any, "pChainCorrect": chain } }),
                code: 0,
            }
        }
        Command::GraphDump { workbook } => {
            let wb = load(workbook)?;
            let g = graph(&wb)?;
            let text = g.edge_list_text();
            let edges: Vec<Json> = text
                .lines()
                .filter_map(|l| l.split_once('\t'))
                .map(|(a, b)| json!([a, b]))
                .collect();
            Outcome {
                machine: json!({
                    "nodes": g.node_count(),
                    "edges": edges,
                    "chainStats": chain_stats(&g, &wb.meta.outputs),
                }),
                human: text,
                code: 0,
            }
        }
    };
    emit(cli, out, &outcome)?;
    Ok(outcome.code)
}

fn emit(cli: &Cli, out: &mut dyn Write, o: &Outcome) -> Result<()> {
    let mut doc = serde_json::to_string_pretty(&o.machine)?;
    doc.push('\n');
    if let Some(path) = &cli.output {
        std::fs::write(path, &doc).with_context(|| format!("cannot write {}", path.display()))?;
    }
    if cli.format == Format::Machine && cli.output.is_none() {
        out.write_all(doc.as_bytes())?;
    } else {
        out.write_all(o.human.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Workbook> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read workbook {}", path.display()))?;
    parse_workbook(&bytes).with_context(|| format!("in workbook {}", path.display()))
}

fn graph(wb: &Workbook) -> Result<DepGraph> {
    Ok(build_graph(wb)?)
}

pub fn audit_report(wb: &Workbook, cfg: &ToolConfig, generated_at: &str) -> Result<AuditReport> {
    let g = graph(wb)?;
    let rules = run_rules(wb, &g, &cfg.rules);
    let risk = assess_with_findings(wb, &g, &cfg.risk, &rules.findings, &cfg.score_weights)?;
    Ok(AuditReport {
        tool_version: TOOL_VERSION.to_string(),
        workbook_name: wb.name.clone(),
        findings: rules.findings,
        risk_report: risk,
        chain_stats: chain_stats(&g, &wb.meta.outputs),
        coverage: rules.coverage,
        suppressed_count: rules.suppressed_count,
        timestamps: Timestamps {
            generated_at: generated_at.to_string(),
            workbook_modified: wb.meta.modified.clone(),
        },
    })
}

fn cmd_audit(wb: &Workbook, cfg: &ToolConfig, fail_on: Severity, now: &str) -> Result<Outcome> {
    let report = audit_report(wb, cfg, now)?;
    let failing = report.findings.iter().filter(|f| f.severity >= fail_on).count();
    let mut human = report.human();
    let short = report.coverage.short_rules();
    if !short.is_empty() {
        let names: Vec<&str> = short.iter().map(|r| r.as_str()).collect();
        eprintln!("gridaudit: coverage guard: {} did not examine every cell", names.join(", "));
    }
    let _ = writeln!(
        human,
        "result: {} ({failing} finding(s) at or above {})",
        if failing == 0 && short.is_empty() { "PASS" } else { "FAIL" },
        fail_on.as_str()
    );
    Ok(Outcome {
        code: u8::from(failing > 0 || !short.is_empty()),
        machine: serde_json::to_value(&report)?,
        human,
    })
}

fn cmd_plan(wb: &Workbook, cfg: &ToolConfig) -> Result<Outcome> {
    let g = graph(wb)?;
    let p = plan(&g, &cfg.plan)?;
    let mut human = format!(
        "{} module(s), team of {}, {} cells/hour, session cap {} min, {} round(s) recommended, {} min total\n",
        p.modules.len(),
        p.team_size,
        num(p.rate_cap),
        num(p.session_cap_minutes),
        p.rounds_recommended,
        num(p.total_minutes)
    );
    for m in &p.modules {
        let first = m.cells.first().map(|c| c.to_string()).unwrap_or_default();
        let last = m.cells.last().map(|c| c.pos().a1()).unwrap_or_default();
        let _ = writeln!(
            human,
            "  {} {first}..{last}: {} formula(s), {} effective cell(s), {} min{}",
            m.id,
            m.formula_count,
            num(m.effective_cells),
            num(m.estimated_minutes),
            if m.exceeds_session_cap { " (OVER SESSION CAP)" } else { "" }
        );
    }
    let over = p.modules.iter().any(|m| m.exceeds_session_cap);
    Ok(Outcome {
        code: u8::from(over),
        machine: serde_json::to_value(&p)?,
        human,
    })
}

fn cmd_reconcile(wb: &Workbook, paths: &[PathBuf], truth: Option<&Path>, cfg: &ToolConfig) -> Result<Outcome> {
    let sessions = paths
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p).with_context(|| format!("cannot read session {}", p.display()))?;
            SessionFindings::from_json(&bytes).with_context(|| format!("in session {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let g = graph(wb)?;
    let p = plan(&g, &cfg.plan)?;
    let module_id = &sessions[0].module_id;
    let module = p
        .module(module_id)
        .ok_or_else(|| anyhow!("module {module_id} is not in the plan for {}", wb.name))?;
    let rec = reconcile(&sessions, module, &cfg.plan)?;

    let mut human = format!("module {}: {} distinct item(s)\n", rec.module_id, rec.union_items.len());
    for item in &rec.union_items {
        let _ = writeln!(human, "  {} {} found by {}", item.cell, item.suspected_class, item.found_by.join(", "));
    }
    for (who, n) in &rec.per_inspector_counts {
        let _ = writeln!(human, "  inspector {who}: {n} item(s)");
    }
    for r in &rec.rate_checks {
        if r.hasty {
            let _ = writeln!(human, "  HASTY {}: {} cells/hour", r.inspector_id, num(r.implied_rate));
        }
    }
    let mut machine = json!({ "reconciliation": rec });
    if let Some(path) = truth {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read truth {}", path.display()))?;
        let truth: BTreeSet<_> = SeededWorkbook::parse_truth(&bytes)?
            .into_iter()
            .filter_map(|e| e.location.cell().cloned())
            .filter(|c| module.contains(c))
            .collect();
        let found: BTreeSet<_> = rec.union_items.iter().map(|i| i.cell.clone()).collect();
        let y = yield_report(&found, &truth)?;
        let _ = writeln!(
            human,
            "yield: {}/{} = {}",
            y.detected.len(),
            truth.len(),
            num(y.yield_fraction)
        );
        machine["yield"] = serde_json::to_value(&y)?;
    }
    let hasty = rec.rate_checks.iter().any(|r| r.hasty);
    Ok(Outcome {
        code: u8::from(hasty),
        machine,
        human,
    })
}

/// Short display of a cell for diff output.
fn show(cell: Option<&Cell>) -> String {
    let Some(c) = cell else { return "(empty)".to_string() };
    let mut s = match &c.content {
        CellContent::Number(v) => gridaudit_core::formula::format_number(*v),
        CellContent::Text(t) => format!("{t:?}"),
        CellContent::Bool(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
        CellContent::Formula(f) => f.clone(),
    };
    if let Some(fmt) = c.format {
        let _ = write!(s, " [{}]", fmt.as_str());
    }
    if c.locked {
        s.push_str(" [locked]");
    }
    s
}

fn cmd_diff(a: &Workbook, b: &Workbook) -> Outcome {
    let entries: Vec<DiffEntry> = diff(a, b);
    let mut human = format!("{} difference(s)\n", entries.len());
    for e in &entries {
        let tag = if e.class().is_some() { " [fraud-indicator]" } else { "" };
        let _ = writeln!(
            human,
            "  {:<17} {}: {} -> {}{tag}",
            e.kind.as_str(),
            e.location,
            show(e.before.as_ref()),
            show(e.after.as_ref())
        );
    }
    Outcome {
        code: u8::from(!entries.is_empty()),
        machine: json!({
            "toolVersion": TOOL_VERSION,
            "a": a.name,
            "b": b.name,
            "entries": entries,
        }),
        human,
    }
}

fn parse_mix(text: &str) -> Result<std::collections::BTreeMap<DefectClass, f64>> {
    text.split(',')
        .map(|part| {
            let (class, w) = part
                .split_once('=')
                .ok_or_else(|| anyhow!("mix entry `{part}` is not CLASS=weight"))?;
            let class: DefectClass = class.trim().parse().map_err(|e: String| anyhow!(e))?;
            let w: f64 = w.trim().parse().with_context(|| format!("weight in `{part}`"))?;
            Ok((class, w))
        })
        .collect()
}

fn cmd_seed(spec: &SeedSpec, clean_only: bool, name: Option<&str>, dir: &Path) -> Result<Outcome> {
    let stem = name.map_or_else(
        || format!("{}_{}_{}", spec.topology.as_str(), spec.formula_count, spec.rng_seed),
        str::to_string,
    );
    if stem.contains(['/', '\\']) {
        bail!("name `{stem}` must not contain path separators");
    }
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let clean = simlab::generate_clean(spec);
    let seeded = if clean_only {
        SeededWorkbook {
            workbook: clean,
            truth: Vec::new(),
        }
    } else {
        simlab::seed_defects(&clean, spec)?
    };
    let wb_path = dir.join(format!("{stem}.json"));
    std::fs::write(&wb_path, serialize_workbook(&seeded.workbook))
        .with_context(|| format!("cannot write {}", wb_path.display()))?;
    let mut machine = json!({ "workbook": wb_path.display().to_string(), "spec": spec });
    let mut human = format!(
        "wrote {} ({} formula cell(s))\n",
        wb_path.display(),
        seeded.workbook.formula_cells().count()
    );
    if !clean_only {
        let truth_path = dir.join(format!("{stem}.truth"));
        std::fs::write(&truth_path, seeded.truth_json())
            .with_context(|| format!("cannot write {}", truth_path.display()))?;
        let _ = writeln!(human, "wrote {} ({} seeded defect(s))", truth_path.display(), seeded.truth.len());
        machine["truth"] = json!(truth_path.display().to_string());
        machine["truthCount"] = json!(seeded.truth.len());
    }
    Ok(Outcome {
        human,
        machine,
        code: 0,
    })
}
