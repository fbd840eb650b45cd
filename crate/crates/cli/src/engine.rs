//! Loads the read-only artifacts behind `annotate`, `evaluate` and `serve`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nel_core::classifier::Resources;
use nel_core::{LinearModel, Linker, PageRankVector, RecordStore, SurfaceDictionary, UnigramLm};
use serde::Serialize;

use crate::config::EngineConfig;

pub struct Engine {
    pub linker: Linker,
    pub config: EngineConfig,
    pub store_generation: u64,
    /// Artifacts built from an older store generation.
    pub stale: Vec<&'static str>,
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .with_context(|| format!("no `{key}` configured (set it in the config file, NEL_{} or on the command line)", key.to_ascii_uppercase()))
}

fn load<T>(what: &str, path: &Path, f: impl FnOnce(&Path) -> nel_core::Result<T>) -> Result<T> {
    f(path).with_context(|| format!("loading {what} from {}", path.display()))
}

/// Rejects configured hyperparameters that disagree with the model.
pub fn check_hyperparameters(cfg: &EngineConfig, model: &LinearModel) -> Result<()> {
    let p = &model.params;
    let pairs = [
        ("beta", cfg.beta, p.similarity.beta),
        ("eta", cfg.eta, p.similarity.eta),
        ("max_distance", cfg.max_distance.map(|v| v as f64), p.similarity.max_distance as f64),
        ("k", cfg.k.map(|v| v as f64), p.k as f64),
    ];
    for (key, configured, trained) in pairs {
        if let Some(v) = configured {
            if v != trained {
                bail!("configured {key} = {v} but the model was trained with {key} = {trained}");
            }
        }
    }
    Ok(())
}

impl Engine {
    pub fn load(config: EngineConfig) -> Result<Engine> {
        let store = load("record store", required(&config.store, "store")?, RecordStore::load)?;
        let dict = load("dictionary", required(&config.dict, "dict")?, SurfaceDictionary::load)?;
        let lm = load("language model", required(&config.lm, "lm")?, UnigramLm::load)?;
        let pagerank = load("pagerank table", required(&config.pagerank, "pagerank")?, PageRankVector::load)?;
        let mut model = load("model", required(&config.model, "model")?, LinearModel::load)?;
        check_hyperparameters(&config, &model)?;
        if let Some(t) = config.threshold {
            model.params.threshold = t;
        }

        let generation = store.generation();
        let stale: Vec<&'static str> = [
            ("dictionary", dict.source_generation),
            ("language model", lm.source_generation),
            ("pagerank table", pagerank.source_generation),
        ]
        .into_iter()
        .filter(|(_, g)| g.is_some_and(|g| store.is_stale(g)))
        .map(|(name, _)| name)
        .collect();
        for name in &stale {
            log::warn!("{name} was built from an older record store; rebuild it to pick up updates");
        }

        let resources = Resources {
            dict,
            lm,
            pagerank,
            records: store,
        };
        let mut linker = Linker::new(resources, model);
        linker.max_candidates = config.max_candidates;
        Ok(Engine {
            linker,
            config,
            store_generation: generation,
            stale,
        })
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok",
            version: env!("CARGO_PKG_VERSION"),
            artifacts: nel_core::artifact_versions()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            store_generation: self.store_generation,
            items: self.linker.resources.records.len(),
            surface_forms: self.linker.resources.dict.len(),
            stale: self.stale.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub version: &'static str,
    pub artifacts: std::collections::BTreeMap<String, u32>,
    pub store_generation: u64,
    pub items: usize,
    pub surface_forms: usize,
    pub stale: Vec<&'static str>,
}
