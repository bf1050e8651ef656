//! Layered run configuration: built-in defaults, then a TOML file, then
//! `PARAFEM_<SECTION>_<KEY>` environment variables. Command-line flags are
//! applied by the caller on top of the result.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::adapt::AdaptConfig;
use crate::bench::ManufacturedCase;
use crate::error::{Error, Result};
use crate::fem::SolverConfig;
use crate::mesh::{GeneratorConfig, GeneratorKind};
use crate::surrogate::TrainConfig;

const ENV_PREFIX: &str = "PARAFEM_";
const SECTIONS: [&str; 5] = ["problem", "adapt", "surrogate", "solver", "mesh"];

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    /// Case name; the command line usually supplies it.
    pub case: Option<String>,
}

/// Unset values fall back to the case defaults (`etol`, `tau`) or the
/// [`AdaptConfig`] defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptSection {
    pub etol: Option<f64>,
    pub tau: Option<f64>,
    pub t_end: Option<f64>,
    pub theta_r: Option<f64>,
    pub initial_h: Option<f64>,
    pub theta_d: Option<f64>,
    pub baseline_max_iters: Option<usize>,
    pub baseline_max_vertices: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    pub generator: Option<GeneratorKind>,
    pub gmsh: Option<PathBuf>,
    pub extra_flags: Vec<String>,
    pub work_dir: Option<PathBuf>,
    pub fallback_on_missing: bool,
    pub max_vertices: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub problem: ProblemSection,
    pub adapt: AdaptSection,
    pub surrogate: TrainConfig,
    pub solver: SolverConfig,
    pub mesh: MeshSection,
}

impl Config {
    /// Reads `path` (if any) and applies overrides from `env`, usually
    /// `std::env::vars()`.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (name, value) in env {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let Some((section, key)) = rest.split_once('_') else {
                continue;
            };
            let section = section.to_ascii_lowercase();
            if !SECTIONS.contains(&section.as_str()) || key.is_empty() {
                continue;
            }
            let entry = table
                .entry(section.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let toml::Value::Table(sec) = entry else {
                return Err(Error::Config(format!("`{section}` is not a table")));
            };
            sec.insert(key.to_ascii_lowercase(), env_value(&value));
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Adapt settings for `case`, before command-line overrides.
    pub fn adapt_config(&self, case: &ManufacturedCase) -> AdaptConfig {
        let d = AdaptConfig::default();
        let a = &self.adapt;
        let m = &self.mesh;
        let gen_default = GeneratorConfig::default();
        AdaptConfig {
            etol: a.etol.unwrap_or(case.default_etol),
            tau: a.tau.unwrap_or(case.default_tau),
            t_end: a.t_end.unwrap_or(d.t_end),
            theta_r: a.theta_r.unwrap_or(d.theta_r),
            initial_h: a.initial_h.unwrap_or(d.initial_h),
            theta_d: a.theta_d.unwrap_or(d.theta_d),
            baseline_max_iters: a.baseline_max_iters.unwrap_or(d.baseline_max_iters),
            baseline_max_vertices: a.baseline_max_vertices.unwrap_or(d.baseline_max_vertices),
            generator: GeneratorConfig {
                kind: m.generator.unwrap_or(gen_default.kind),
                gmsh: m.gmsh.clone().unwrap_or(gen_default.gmsh),
                extra_flags: m.extra_flags.clone(),
                work_dir: m.work_dir.clone(),
                fallback_on_missing: m.fallback_on_missing,
                max_vertices: m.max_vertices.unwrap_or(gen_default.max_vertices),
            },
            train: self.surrogate.clone(),
            solver: self.solver,
            ..d
        }
    }
}

// Numbers, booleans and arrays are read as TOML; anything else is a string.
fn env_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
