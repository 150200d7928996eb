//! Executes an experiment: sample once per (distribution, n), measure every
//! family on that batch, fit constants, persist ledgers.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{fit_constant, ConstantLedger, FitStatus};
use crate::distributions::{sample_with_diagnostics, ChainDiagnostics, DistributionSpec};
use crate::error::{invalid, Error, Result};
use crate::isotropy::{estimate_moments, isotropy_diagnostics, whiten, IsotropyReport};
use crate::rng::{derive_seed, Domain};

use super::cells::{family_for, measure};
use super::config::ExperimentConfig;

/// Results for one (distribution, n) batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub distribution: String,
    pub n: usize,
    pub seed: u64,
    /// Diagnostics of the raw batch, before any whitening.
    pub isotropy: IsotropyReport,
    pub whitened: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainDiagnostics>,
    pub ledgers: Vec<ConstantLedger>,
    /// Ledger files relative to the output directory.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub cells: Vec<CellReport>,
}

impl RunReport {
    pub fn ledgers(&self) -> impl Iterator<Item = &ConstantLedger> {
        self.cells.iter().flat_map(|c| c.ledgers.iter())
    }

    /// Ledgers where no grid constant made the bound hold.
    pub fn failures(&self) -> Vec<&ConstantLedger> {
        self.ledgers().filter(|l| l.status == FitStatus::NoQualifyingC).collect()
    }

    pub fn is_success(&self) -> bool {
        self.failures().is_empty()
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

/// Writes `bytes` to `path` via a temporary sibling and a rename, so a reader
/// never sees a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn ledger_csv(l: &ConstantLedger) -> String {
    let mut s = String::from(ConstantLedger::CSV_HEADER);
    s.push('\n');
    for row in l.csv_rows() {
        s.push_str(&row);
        s.push('\n');
    }
    s
}

fn run_cell(config: &ExperimentConfig, hash: &str, index: usize, spec: &DistributionSpec) -> Result<CellReport> {
    let seed = derive_seed(config.seed, Domain::Cells, index as u64);
    let (raw, chain) = sample_with_diagnostics(spec, config.sample_count, seed)?;
    let isotropy = isotropy_diagnostics(&raw)?;
    let whitened = !spec.is_isotropic();
    let batch = if whitened {
        whiten(&raw, &estimate_moments(&raw)?)?
    } else {
        raw
    };
    let n = spec.dimension();
    let mut ledgers = Vec::new();
    for (fi, fc) in config.families.iter().enumerate() {
        let boot_seed = derive_seed(seed, Domain::Bootstrap, fi as u64);
        let cells = measure(fc, &batch, config.confidence, config.bootstrap_resamples, boot_seed)?;
        if cells.is_empty() {
            continue;
        }
        let fam = family_for(fc, n);
        let mut ledger = fit_constant(&fam, &cells, &config.constant_search_grid)?;
        ledger.distribution = Some(spec.label());
        ledger.config_hash = Some(hash.to_string());
        ledgers.push(ledger);
    }
    Ok(CellReport {
        distribution: spec.label(),
        n,
        seed,
        isotropy,
        whitened,
        chain,
        ledgers,
        files: Vec::new(),
    })
}

/// Runs `config` on a pool of `workers` threads and writes ledgers under the
/// output directory. Ledger bytes depend only on the config.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<RunReport> {
    config.validate()?;
    if workers == 0 {
        return Err(invalid("workers must be at least 1"));
    }
    let started = unix_now();
    let hash = config.hash();
    let specs = config.distribution_cells()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot build worker pool: {e}")))?;
    let mut cells: Vec<CellReport> = pool.install(|| {
        specs
            .par_iter()
            .enumerate()
            .map(|(i, spec)| run_cell(config, &hash, i, spec))
            .collect::<Result<Vec<_>>>()
    })?;

    let out = config.resolved_output_dir();
    let ledger_dir = out.join("ledgers");
    std::fs::create_dir_all(&ledger_dir).map_err(|e| Error::io(&ledger_dir, e))?;
    let mut iso_csv = format!("distribution_index,distribution,n,{}\n", crate::isotropy::IsotropyReport::CSV_HEADER);
    for (i, cell) in cells.iter_mut().enumerate() {
        let stem_dist = format!("d{i}-{}", sanitize(&cell.distribution));
        for l in &cell.ledgers {
            let stem = format!("{}__{}__n{}", l.family.name(), stem_dist, cell.n);
            let json = serde_json::to_vec_pretty(l)?;
            write_atomic(&ledger_dir.join(format!("{stem}.json")), &json)?;
            write_atomic(&ledger_dir.join(format!("{stem}.csv")), ledger_csv(l).as_bytes())?;
            cell.files.push(format!("ledgers/{stem}.json"));
            cell.files.push(format!("ledgers/{stem}.csv"));
        }
        for row in cell.isotropy.csv_rows() {
            iso_csv.push_str(&format!("{i},{},{},{row}\n", cell.distribution, cell.n));
        }
    }
    write_atomic(&out.join("isotropy.csv"), iso_csv.as_bytes())?;

    let report = RunReport {
        provenance: Provenance {
            config_hash: hash,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: started,
            finished_unix: unix_now(),
            workers,
        },
        cells,
    };
    // written last: its presence marks a completed run
    write_atomic(&out.join("report.json"), &serde_json::to_vec_pretty(&report)?)?;
    let log = out.join("runs.jsonl");
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log)
        .map_err(|e| Error::io(&log, e))?;
    let line = serde_json::json!({
        "config_hash": report.provenance.config_hash,
        "code_version": report.provenance.code_version,
        "started_unix": report.provenance.started_unix,
        "finished_unix": report.provenance.finished_unix,
        "ledgers": report.ledgers().count(),
        "failures": report.failures().len(),
    });
    writeln!(f, "{line}").map_err(|e| Error::io(&log, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitized_labels() {
        assert_eq!(sanitize("rotated(lp_ball_uniform(p=1))"), "rotated_lp_ball_uniform_p_1");
    }

    #[test]
    fn atomic_write_leaves_no_partial() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_atomic(&p, b"{}").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"{}");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
