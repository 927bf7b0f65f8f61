//! Dataset directories: one `.cnf` file per instance plus `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use querysat_core::generators::{generate_instance, GenSpec, GeneratedInstance};
use querysat_core::{CnfFormula, FactorGraph};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dimacs::{read_dimacs, write_dimacs};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub n: usize,
    pub m: usize,
    pub task: String,
    /// Seed of the instance's own random stream.
    pub seed: u64,
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub rejected_unsat: u64,
    pub rejected_unknown: u64,
    pub rejected_disconnected: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: GenSpec,
    pub decision_budget: u64,
    pub instances: Vec<ManifestEntry>,
}

fn entry(spec: &GenSpec, inst: &GeneratedInstance) -> ManifestEntry {
    ManifestEntry {
        file: format!("{}_{:06}.cnf", spec.task.name(), inst.index),
        n: inst.formula.num_vars(),
        m: inst.formula.num_clauses(),
        task: spec.task.name().to_string(),
        seed: inst.seed,
        size: inst.size,
        k: inst.k,
        rejected_unsat: inst.rejected_unsat,
        rejected_unknown: inst.rejected_unknown,
        rejected_disconnected: inst.rejected_disconnected,
    }
}

/// Generates `spec.count` satisfiable instances in parallel. Every instance
/// has its own random stream, so the output does not depend on scheduling.
pub fn generate_instances(spec: &GenSpec, decision_budget: u64) -> Result<Vec<GeneratedInstance>> {
    spec.validate()?;
    let out: Result<Vec<_>, _> = (0..spec.count).into_par_iter().map(|i| generate_instance(spec, i, decision_budget)).collect();
    Ok(out?)
}

/// Writes a generated dataset into `out` and returns its manifest.
pub fn gen_dataset(spec: &GenSpec, decision_budget: u64, out: &Path) -> Result<Manifest> {
    let instances = generate_instances(spec, decision_budget)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut entries = Vec::with_capacity(instances.len());
    for inst in &instances {
        let e = entry(spec, inst);
        let path = out.join(&e.file);
        fs::write(&path, write_dimacs(&inst.formula)).with_context(|| format!("writing {}", path.display()))?;
        entries.push(e);
    }
    let manifest = Manifest {
        spec: spec.clone(),
        decision_budget,
        instances: entries,
    };
    let path = out.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}

/// Formulas of a dataset directory, in manifest order (or sorted file order
/// when there is no manifest), or a single `.cnf` file.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub names: Vec<String>,
    pub formulas: Vec<CnfFormula>,
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Dataset> {
        if path.is_file() {
            let f = read_dimacs(path)?;
            let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            return Ok(Dataset {
                names: vec![name],
                formulas: vec![f],
            });
        }
        let manifest_path = path.join(MANIFEST);
        let names: Vec<String> = if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?;
            let manifest: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", manifest_path.display()))?;
            manifest.instances.into_iter().map(|e| e.file).collect()
        } else {
            let mut names: Vec<String> = fs::read_dir(path)
                .with_context(|| format!("reading dataset directory {}", path.display()))?
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.ends_with(".cnf"))
                .collect();
            names.sort();
            names
        };
        if names.is_empty() {
            bail!("dataset {} contains no .cnf files", path.display());
        }
        let formulas = names
            .iter()
            .map(|n| {
                let p: PathBuf = path.join(n);
                read_dimacs(&p).with_context(|| format!("reading {}", p.display()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { names, formulas })
    }

    pub fn len(&self) -> usize {
        self.formulas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formulas.is_empty()
    }

    pub fn graphs(&self) -> Vec<FactorGraph> {
        self.formulas.iter().map(FactorGraph::new).collect()
    }
}
