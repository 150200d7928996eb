//! Experiment configuration (JSON, versioned).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::bounds::{default_search_grid, FamilyId};
use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const MIN_SAMPLE_COUNT: usize = 1000;
pub const OUTPUT_DIR_ENV: &str = "LCLAB_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "lclab-out";

/// The event A = {X_coordinate ≥ threshold} for the conditional families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub coordinate: usize,
    pub threshold: f64,
}

/// One bound family and the grids its cells range over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub family: FamilyId,
    /// Thresholds; for `paouris` and `norm_from_moments` the values s in
    /// {|X| ≥ s√n}. Ignored by the pure moment families.
    #[serde(default)]
    pub t: Vec<f64>,
    /// Order-statistic indices; defaults to 1, 2, 4, …, n/2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<f64>,
}

fn default_confidence() -> f64 {
    0.95
}

fn default_resamples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    /// Distribution templates. Entries without `n` are instantiated at every
    /// value of `n`; entries with `n` are used at that dimension only.
    pub distributions: Vec<Value>,
    #[serde(default)]
    pub n: Vec<usize>,
    pub families: Vec<FamilyConfig>,
    pub sample_count: usize,
    pub seed: u64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "default_search_grid")]
    pub constant_search_grid: Vec<f64>,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Allows sample counts below the production minimum.
    #[serde(default)]
    pub smoke: bool,
}

fn with_dimension(template: &Value, n: usize) -> Value {
    let mut v = template.clone();
    if let Value::Object(map) = &mut v {
        map.entry("n").or_insert_with(|| Value::from(n));
        if let Some(base) = map.get("base").cloned() {
            map.insert("base".into(), with_dimension(&base, n));
        }
    }
    v
}

fn grid_ok(name: &str, fam: FamilyId, g: &Option<Vec<f64>>, required: bool, errs: &mut Vec<String>) {
    match g {
        None if required => errs.push(format!("{}: `{name}` grid is required", fam.name())),
        Some(v) if v.is_empty() => errs.push(format!("{}: `{name}` grid is empty", fam.name())),
        Some(v) if v.iter().any(|x| !x.is_finite() && !(name == "r" && *x == f64::INFINITY)) => {
            errs.push(format!("{}: `{name}` grid has non-finite values", fam.name()))
        }
        _ => {}
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form, without the output directory
    /// (which does not affect results).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `output_dir`, else the environment default, else `lclab-out`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    /// Every (distribution, n) cell in canonical order.
    pub fn distribution_cells(&self) -> Result<Vec<DistributionSpec>> {
        let mut out = Vec::new();
        for (i, t) in self.distributions.iter().enumerate() {
            let explicit = t.get("n").is_some();
            let ns: Vec<usize> = if explicit { vec![0] } else { self.n.clone() };
            for n in ns {
                let v = with_dimension(t, n);
                let spec: DistributionSpec = serde_json::from_value(v)
                    .map_err(|e| Error::InvalidSpec(format!("distribution #{i}: {e}")))?;
                out.push(spec);
            }
        }
        Ok(out)
    }

    /// Checks everything and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errs.push(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.distributions.is_empty() {
            errs.push("distributions list is empty".into());
        }
        let needs_n = self.distributions.iter().any(|d| d.get("n").is_none());
        if needs_n && self.n.is_empty() {
            errs.push("`n` grid is empty but some distributions do not fix n".into());
        }
        if self.n.contains(&0) {
            errs.push("`n` grid contains 0".into());
        }
        for (i, t) in self.distributions.iter().enumerate() {
            let ns: Vec<usize> = if t.get("n").is_some() {
                vec![0]
            } else {
                self.n.iter().copied().filter(|&n| n > 0).take(1).collect()
            };
            for n in ns {
                if let Err(e) = serde_json::from_value::<DistributionSpec>(with_dimension(t, n)) {
                    errs.push(format!("distribution #{i}: {e}"));
                }
            }
        }
        if self.families.is_empty() {
            errs.push("families list is empty".into());
        }
        if !self.smoke && self.sample_count < MIN_SAMPLE_COUNT {
            errs.push(format!(
                "sample_count {} is below {MIN_SAMPLE_COUNT} (set \"smoke\": true for quick runs)",
                self.sample_count
            ));
        }
        if self.sample_count == 0 {
            errs.push("sample_count must be positive".into());
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            errs.push(format!("confidence {} must lie in (0, 1)", self.confidence));
        }
        if self.bootstrap_resamples == 0 {
            errs.push("bootstrap_resamples must be positive".into());
        }
        let g = &self.constant_search_grid;
        if g.is_empty() {
            errs.push("constant_search_grid is empty".into());
        } else if g.iter().any(|&c| !(c > 0.0) || !c.is_finite()) || g.windows(2).any(|w| !(w[0] < w[1])) {
            errs.push("constant_search_grid must be positive, finite and strictly increasing".into());
        }
        for f in &self.families {
            let id = f.family;
            let uses_t = !matches!(id, FamilyId::LrMomentSmall | FamilyId::LrMomentLarge | FamilyId::LinfMoment);
            if uses_t && f.t.is_empty() {
                errs.push(format!("{}: `t` grid is empty", id.name()));
            }
            if f.t.iter().any(|t| !t.is_finite()) {
                errs.push(format!("{}: `t` grid has non-finite values", id.name()));
            }
            if let Some(k) = &f.k {
                if k.is_empty() {
                    errs.push(format!("{}: `k` grid is empty", id.name()));
                }
                if k.contains(&0) {
                    errs.push(format!("{}: `k` grid contains 0", id.name()));
                }
            }
            let needs_p = matches!(
                id,
                FamilyId::EstNMoment | FamilyId::LrMomentSmall | FamilyId::LrMomentLarge | FamilyId::LinfMoment
            );
            let needs_r = matches!(
                id,
                FamilyId::LrTailSmall
                    | FamilyId::LrTailLarge
                    | FamilyId::EstLarger
                    | FamilyId::LrMomentSmall
                    | FamilyId::LrMomentLarge
            );
            grid_ok("p", id, &f.p, needs_p, &mut errs);
            grid_ok("r", id, &f.r, needs_r, &mut errs);
            grid_ok("u", id, &f.u, id == FamilyId::Cond2, &mut errs);
            if matches!(id, FamilyId::Cond1 | FamilyId::Cond2) && f.condition.is_none() {
                errs.push(format!("{}: `condition` is required", id.name()));
            }
            if id == FamilyId::NormFromMoments && (f.a1.is_none() || f.a2.is_none()) {
                errs.push(format!("{}: `a1` and `a2` are required", id.name()));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke() -> ExperimentConfig {
        serde_json::from_str(
            r#"{
                "schema_version": 1,
                "distributions": [{"kind": "exponential_product"}],
                "n": [8],
                "families": [{"family": "main_order_stat", "t": [1, 2, 4, 8]}],
                "sample_count": 1000,
                "seed": 7
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn smoke_config_is_valid() {
        let c = smoke();
        c.validate().unwrap();
        assert_eq!(c.distribution_cells().unwrap().len(), 1);
        assert_eq!(c.constant_search_grid, default_search_grid());
    }

    #[test]
    fn every_violation_is_listed() {
        let mut c = smoke();
        c.families[0].t.clear();
        c.sample_count = 10;
        c.constant_search_grid.clear();
        match c.validate() {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 3, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_is_mandatory() {
        let r: std::result::Result<ExperimentConfig, _> = serde_json::from_str(
            r#"{"schema_version": 1, "distributions": [], "families": [], "sample_count": 1000}"#,
        );
        assert!(r.is_err());
    }

    #[test]
    fn rotated_templates_get_dimension() {
        let mut c = smoke();
        c.distributions = vec![serde_json::json!({
            "kind": "rotated", "rotation_seed": 3, "base": {"kind": "exponential_product"}
        })];
        c.n = vec![4, 8];
        let cells = c.distribution_cells().unwrap();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[1].dimension(), 8);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(smoke().hash(), smoke().hash());
        let mut c = smoke();
        c.seed = 8;
        assert_ne!(c.hash(), smoke().hash());
        let mut d = smoke();
        d.output_dir = Some("elsewhere".into());
        assert_eq!(d.hash(), smoke().hash());
    }
}
