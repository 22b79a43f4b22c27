use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use attrqa_core::data::Language;
use attrqa_core::regimes::{RegimeKind, RunDirContents};

/// Column label for runs without a budget.
pub const NO_BUDGET: &str = "n/a";

/// One F1 cell per (regime, target language, budget); later runs replace
/// earlier ones for the same cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid {
    pub cells: BTreeMap<(RegimeKind, Language), BTreeMap<Option<usize>, f64>>,
}

impl Grid {
    pub fn from_runs(runs: &[RunDirContents]) -> Self {
        let mut cells: BTreeMap<(RegimeKind, Language), BTreeMap<Option<usize>, f64>> = BTreeMap::new();
        for r in runs {
            cells
                .entry((r.spec.kind, r.spec.target_lang))
                .or_default()
                .insert(r.spec.budget, r.metrics.f1);
        }
        Grid { cells }
    }

    pub fn budgets(&self) -> Vec<Option<usize>> {
        let set: BTreeSet<Option<usize>> = self.cells.values().flat_map(|row| row.keys().copied()).collect();
        set.into_iter().collect()
    }

    pub fn filled(&self) -> usize {
        self.cells.values().map(BTreeMap::len).sum()
    }

    /// Tab-separated table: one row per regime and language, one column per
    /// budget, `-` where no run exists.
    pub fn render(&self) -> String {
        let budgets = self.budgets();
        let mut out = String::from("regime\tlang");
        for b in &budgets {
            match b {
                Some(b) => write!(out, "\t{b}").unwrap(),
                None => write!(out, "\t{NO_BUDGET}").unwrap(),
            }
        }
        out.push('\n');
        for ((kind, lang), row) in &self.cells {
            write!(out, "{kind}\t{lang}").unwrap();
            for b in &budgets {
                match row.get(b) {
                    Some(f1) => write!(out, "\t{f1:.2}").unwrap(),
                    None => out.push_str("\t-"),
                }
            }
            out.push('\n');
        }
        out
    }
}
