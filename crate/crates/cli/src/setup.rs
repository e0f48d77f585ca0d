//! Loading models, articles and stores from an experiment config.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use counterspeech_core::classifier::{HashedBagOfWords, RemoteEmbeddingProvider};
use counterspeech_core::experiment::ExperimentConfig;
use counterspeech_core::ingest::QuerySpec;
use counterspeech_core::responder::FewShotSet;
use counterspeech_core::{ArticleStore, EmbeddingProvider, HateModel, Responder, Store};

/// Picks the embedder a model was trained with.
pub fn embedder_for(model: &HateModel) -> Result<Box<dyn EmbeddingProvider>> {
    if model.provider.starts_with("local-hashed-bow-") {
        let local = HashedBagOfWords::with_dim(model.dim);
        if local.tag() != model.provider {
            bail!("model provider `{}` does not match dimension {}", model.provider, model.dim);
        }
        return Ok(Box::new(local));
    }
    let remote = RemoteEmbeddingProvider::from_env()?;
    if remote.tag() != model.provider || remote.dim() != model.dim {
        bail!(
            "model was trained with `{}` ({} dims) but the environment selects `{}` ({} dims)",
            model.provider,
            model.dim,
            remote.tag(),
            remote.dim()
        );
    }
    Ok(Box::new(remote))
}

pub fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| anyhow!("config is missing `{key}`"))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

pub fn load_model(path: &Path) -> Result<HateModel> {
    HateModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

/// Query text from a file, or the built-in harmful query.
pub fn load_query(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => {
            let q = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(q.trim().to_owned())
        }
        None => Ok(counterspeech_core::ingest::build_query(&QuerySpec::harmful_polish())?),
    }
}

pub fn load_responder(cfg: &ExperimentConfig, embedder: &dyn EmbeddingProvider) -> Result<Responder> {
    let path = require(&cfg.articles, "articles")?;
    let mut articles = ArticleStore::load(path)?;
    articles.embed_missing(embedder)?;
    let fewshot = cfg.fewshot.as_deref().map(FewShotSet::load).transpose()?;
    Ok(Responder::new(articles, fewshot))
}

pub fn open_store(path: &Path) -> Result<Store> {
    Store::open(path).with_context(|| format!("opening store {}", path.display()))
}
