use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{SeedSpec, Topology};
use crate::model::{column_letters, Cell, CellAddress, Sheet, Workbook};

pub const MODEL_SHEET: &str = "Model";
pub const RATES_SHEET: &str = "Rates";
const RATES: u32 = 10;
const STAMP_DATE: &str = "2024-01-15";

/// Distinct two-decimal values of at least 2, so no constant repeats another
/// and none falls under the duplicate-literal exclusions.
fn distinct_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let span = 100_000usize.max(200 + 4 * n) - 200;
    sample(rng, span, n)
        .into_iter()
        .map(|k| (k + 200) as f64 / 100.0)
        .collect()
}

fn a1(col: u32, row: u32) -> String {
    format!("{}{row}", column_letters(col))
}

/// Leaves of a tree: `input_count` when it can feed every subtotal,
/// otherwise three per subtotal.
fn tree_leaves(spec: &SeedSpec) -> usize {
    let blocks = spec.formula_count.saturating_sub(1);
    if spec.input_count >= blocks.max(1) {
        spec.input_count
    } else {
        (3 * blocks).max(1)
    }
}

/// A defect-free model of the requested shape: distinct inputs, locked
/// formulas, protection on, a conforming versioned name and declared outputs.
///
/// * chain: `B1=A1`, `B<r>=B<r-1>+A<r>`; output is the last B cell.
/// * tree: block subtotals `=SUM(A<s>:A<e>)` in column B, summed by a root
///   in column C.
/// * grid: `C<r>=A<r>*B<r>` rows, totalled by `=SUM(...)` below them.
pub fn generate_clean(spec: &SeedSpec) -> Workbook {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let f = spec.formula_count as u32;
    let mut model = Sheet::new(MODEL_SHEET);
    let mut outputs = Vec::new();
    let put = |sheet: &mut Sheet, key: String, cell: Cell| {
        sheet.cells.insert(crate::model::CellPos::from_a1(&key).expect("generated key"), cell);
    };

    let input_count = match (spec.topology, f) {
        (_, 0) => spec.input_count,
        (Topology::Chain, _) => spec.formula_count,
        (Topology::Tree, _) => tree_leaves(spec),
        (Topology::Grid, 1) => 2,
        (Topology::Grid, _) => 2 * (spec.formula_count - 1),
    };
    let mut values = distinct_values(&mut rng, input_count + RATES as usize).into_iter();
    let mut next = || values.next().expect("enough values drawn");

    let output = match (spec.topology, f) {
        (_, 0) => {
            for r in 1..=input_count as u32 {
                put(&mut model, a1(1, r), Cell::number(next()));
            }
            None
        }
        (Topology::Chain, _) => {
            for r in 1..=f {
                put(&mut model, a1(1, r), Cell::number(next()));
            }
            put(&mut model, "B1".into(), Cell::formula("=A1").locked(true));
            for r in 2..=f {
                put(&mut model, a1(2, r), Cell::formula(format!("=B{}+A{r}", r - 1)).locked(true));
            }
            Some(a1(2, f))
        }
        (Topology::Tree, _) => {
            let leaves = input_count as u32;
            for r in 1..=leaves {
                put(&mut model, a1(1, r), Cell::number(next()));
            }
            if f == 1 {
                put(&mut model, a1(2, leaves), Cell::formula(format!("=SUM(A1:A{leaves})")).locked(true));
                Some(a1(2, leaves))
            } else {
                let blocks = f - 1;
                let (base, extra) = (leaves / blocks, leaves % blocks);
                let mut start = 1;
                for b in 0..blocks {
                    let end = start + base + u32::from(b < extra) - 1;
                    let src = if start == end {
                        format!("=SUM(A{end})")
                    } else {
                        format!("=SUM(A{start}:A{end})")
                    };
                    put(&mut model, a1(2, end), Cell::formula(src).locked(true));
                    start = end + 1;
                }
                put(&mut model, a1(3, leaves), Cell::formula(format!("=SUM(B1:B{leaves})")).locked(true));
                Some(a1(3, leaves))
            }
        }
        (Topology::Grid, _) => {
            let rows = f.saturating_sub(1).max(1);
            for r in 1..=rows {
                put(&mut model, a1(1, r), Cell::number(next()));
                put(&mut model, a1(2, r), Cell::number(next()));
                put(&mut model, a1(3, r), Cell::formula(format!("=A{r}*B{r}")).locked(true));
            }
            if f == 1 {
                Some("C1".to_string())
            } else {
                put(&mut model, a1(3, f), Cell::formula(format!("=SUM(C1:C{rows})")).locked(true));
                Some(a1(3, f))
            }
        }
    };

    let mut rates = Sheet::new(RATES_SHEET);
    for r in 1..=RATES {
        put(&mut rates, a1(1, r), Cell::number(next()));
    }
    if let Some(key) = output {
        outputs.push(CellAddress::at(MODEL_SHEET, crate::model::CellPos::from_a1(&key).expect("generated key")));
    }

    let mut wb = Workbook::new(format!("{}_model_v1_{STAMP_DATE}", spec.topology.as_str()))
        .with_sheet(model)
        .with_sheet(rates);
    wb.meta.modified = format!("{STAMP_DATE}T09:00:00Z");
    wb.meta.protection_enabled = true;
    wb.meta.outputs = outputs;
    wb
}

/// The name a careless save-as would produce: dated but unversioned.
pub(crate) fn unversioned_name(topology: Topology) -> String {
    format!("{}_model_{STAMP_DATE}", topology.as_str())
}
