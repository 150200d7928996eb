//! Plot-ready CSV per inequality and a plain-text summary of a finished run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::bounds::{ConstantLedger, FitStatus};
use crate::error::{Error, Result};

use super::run::write_atomic;

/// Reads every ledger JSON under `<dir>/ledgers`, in file-name order.
pub fn load_ledgers(dir: &Path) -> Result<Vec<(String, ConstantLedger)>> {
    let ledger_dir = dir.join("ledgers");
    let mut names: Vec<PathBuf> = std::fs::read_dir(&ledger_dir)
        .map_err(|e| Error::io(&ledger_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((stem, serde_json::from_str(&text)?))
        })
        .collect()
}

/// Fixed-width table: one line per ledger.
pub fn summary_table(ledgers: &[(String, ConstantLedger)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<20} {:<36} {:>6} {:>9} {:<16} {:>6} {:>8} {:>5}",
        "family", "distribution", "n", "fitted_C", "status", "cells", "envelope", "viol"
    );
    for (_, l) in ledgers {
        let n = l.params.get("n").copied().unwrap_or(f64::NAN);
        let fitted = l.fitted_c.map(|c| format!("{c:.4}")).unwrap_or_else(|| "-".into());
        let status = match l.status {
            FitStatus::Fitted => "fitted",
            FitStatus::NoQualifyingC => "no_qualifying_C",
        };
        let env = l.cells.iter().filter(|c| c.in_envelope).count();
        let _ = writeln!(
            s,
            "{:<20} {:<36} {:>6} {:>9} {:<16} {:>6} {:>8} {:>5}",
            l.family.name(),
            l.distribution.as_deref().unwrap_or("-"),
            n,
            fitted,
            status,
            l.cells.len(),
            env,
            l.violations.len()
        );
    }
    s
}

/// Writes `<out>/plot/<family>.csv` (cells of every ledger of that family,
/// evaluated at its fitted constant) and `<out>/summary.txt`. Returns the summary.
pub fn render_report(input: &Path, out: &Path) -> Result<String> {
    let ledgers = load_ledgers(input)?;
    let plot = out.join("plot");
    std::fs::create_dir_all(&plot).map_err(|e| Error::io(&plot, e))?;
    let mut per_family: BTreeMap<&str, String> = BTreeMap::new();
    for (_, l) in &ledgers {
        let entry = per_family.entry(l.family.name()).or_insert_with(|| {
            let mut h = String::from(ConstantLedger::CSV_HEADER);
            h.push('\n');
            h
        });
        for row in l.csv_rows() {
            entry.push_str(&row);
            entry.push('\n');
        }
    }
    for (fam, csv) in &per_family {
        write_atomic(&plot.join(format!("{fam}.csv")), csv.as_bytes())?;
    }
    let summary = summary_table(&ledgers);
    write_atomic(&out.join("summary.txt"), summary.as_bytes())?;
    Ok(summary)
}
