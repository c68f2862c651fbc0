//! Strict TOML configuration: unknown keys are fatal, every numeric
//! field is range-checked, and validation reports every problem at
//! once. Referenced files (lexicons, templates, rules) are resolved
//! relative to the config file and loaded here, so the rest of the
//! crate never touches paths.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::Deserialize;
use thiserror::Error;

use crate::optimizer::TrainHyper;
use crate::pipeline::ReviewRules;
use crate::text_features::{parse_phrase_list, parse_weighted_list, FeatureConfig};
use crate::vector_index::Category;

#[derive(Debug, Clone)]
pub struct Config {
    pub feature: FeatureConfig,
    pub retrieval: RetrievalConfig,
    pub optimizer: OptimizerConfig,
    pub business: BusinessConfig,
    pub review: ReviewRules,
    pub generator: GeneratorConfig,
    pub simulate: SimulateConfig,
    pub categories: BTreeMap<Category, CategoryConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalConfig {
    pub k: usize,
    pub relevance_threshold: f64,
    pub dedup_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub lambda: f64,
    pub top_k: usize,
    pub filter_m: usize,
    pub train: TrainHyper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalSort {
    Reward,
    Business,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusinessConfig {
    pub w_rel: f64,
    pub w_margin: f64,
    pub w_urg: f64,
    pub stock_cap: u32,
    pub final_sort: FinalSort,
}

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub templates: Vec<String>,
    pub max_candidates: usize,
    /// When set, generation goes to the external service instead of the
    /// templates.
    pub http: Option<HttpConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retries: u32,
}

fn default_timeout_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpressionPolicy {
    Uniform,
    RankWeighted,
}

#[derive(Debug, Clone)]
pub struct SimulateConfig {
    pub n_sessions: u64,
    pub seed: u64,
    pub impression_policy: ImpressionPolicy,
    pub calibration_path: Option<PathBuf>,
    /// Calibration entry used by whole-catalog sweeps; per-category runs
    /// use their own entry from `categories`.
    pub sweep_calibration: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryConfig {
    pub lambda_default: f64,
    /// Key into the calibration file.
    pub calibration: String,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
}

// Raw file shape. Everything optional so a minimal file gets documented
// defaults; deny_unknown_fields turns typos into errors.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    feature: RawFeature,
    retrieval: RawRetrieval,
    optimizer: RawOptimizer,
    business: RawBusiness,
    review: RawReview,
    generator: RawGenerator,
    simulate: RawSimulate,
    categories: BTreeMap<String, RawCategory>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawFeature {
    embed_dim: Option<usize>,
    ngram_size: Option<usize>,
    cta_phrases: Option<PathBuf>,
    sentiment_lexicon: Option<PathBuf>,
    keyword_weights: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawRetrieval {
    k: Option<usize>,
    relevance_threshold: Option<f64>,
    dedup_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOptimizer {
    lambda: Option<f64>,
    top_k: Option<usize>,
    filter_m: Option<usize>,
    train: Option<TrainHyper>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawBusiness {
    w_rel: Option<f64>,
    w_margin: Option<f64>,
    w_urg: Option<f64>,
    stock_cap: Option<u32>,
    final_sort: Option<FinalSort>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawReview {
    forbidden_words: Option<PathBuf>,
    max_length: Option<usize>,
    required_patterns: Option<BTreeMap<String, Vec<Vec<String>>>>,
    brand_tone: Option<BTreeMap<String, (f64, f64)>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawGenerator {
    templates: Option<PathBuf>,
    max_candidates: Option<usize>,
    http: Option<HttpConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSimulate {
    n_sessions: Option<u64>,
    seed: Option<u64>,
    impression_policy: Option<ImpressionPolicy>,
    calibration: Option<PathBuf>,
    sweep_calibration: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawCategory {
    lambda_default: Option<f64>,
    calibration: Option<String>,
}

/// Recommended per-category lambda defaults; anything else starts at the
/// mid-range 0.6.
fn default_lambda(cat: Category) -> f64 {
    match cat {
        Category::Fmcg => 0.75,
        Category::Apparel => 0.55,
        Category::Electronics => 0.4,
        Category::Other => 0.6,
    }
}

pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = read(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Config::from_toml_str(&text, base)
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

impl Config {
    /// Parses and resolves config text; referenced files are loaded
    /// relative to `base`. Syntax problems come back as Parse, anything
    /// about the content (including unknown keys) as Validation with
    /// every problem listed.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Config, ConfigError> {
        let value: toml::Value =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let raw: RawConfig =
            value.try_into().map_err(|e| ConfigError::Validation(vec![e.to_string()]))?;
        resolve(raw, base)
    }
}

fn check_unit(problems: &mut Vec<String>, name: &str, v: f64) {
    if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
        problems.push(format!("{name} = {v}: must be in [0, 1]"));
    }
}

fn check_pos(problems: &mut Vec<String>, name: &str, v: usize) {
    if v == 0 {
        problems.push(format!("{name} = 0: must be at least 1"));
    }
}

fn load_file(
    problems: &mut Vec<String>,
    base: &Path,
    what: &str,
    p: &Option<PathBuf>,
) -> Option<String> {
    p.as_ref().and_then(|p| {
        let full = base.join(p);
        match std::fs::read_to_string(&full) {
            Ok(text) => Some(text),
            Err(e) => {
                problems.push(format!("{what}: cannot read {}: {e}", full.display()));
                None
            }
        }
    })
}

fn load_weighted(
    problems: &mut Vec<String>,
    what: &str,
    text: Option<String>,
) -> IndexMap<String, f64> {
    text.and_then(|t| match parse_weighted_list(&t) {
        Ok(pairs) => Some(pairs.into_iter().collect()),
        Err(e) => {
            problems.push(format!("{what}: {e}"));
            None
        }
    })
    .unwrap_or_default()
}

fn resolve(raw: RawConfig, base: &Path) -> Result<Config, ConfigError> {
    let mut problems: Vec<String> = Vec::new();

    let lambda = raw.optimizer.lambda.unwrap_or(0.6);
    check_unit(&mut problems, "optimizer.lambda", lambda);
    let relevance_threshold = raw.retrieval.relevance_threshold.unwrap_or(0.10);
    check_unit(&mut problems, "retrieval.relevance_threshold", relevance_threshold);
    let dedup_threshold = raw.retrieval.dedup_threshold.unwrap_or(0.95);
    check_unit(&mut problems, "retrieval.dedup_threshold", dedup_threshold);

    let k = raw.retrieval.k.unwrap_or(10);
    check_pos(&mut problems, "retrieval.k", k);
    let top_k = raw.optimizer.top_k.unwrap_or(10);
    check_pos(&mut problems, "optimizer.top_k", top_k);
    let filter_m = raw.optimizer.filter_m.unwrap_or(20);
    check_pos(&mut problems, "optimizer.filter_m", filter_m);
    let max_candidates = raw.generator.max_candidates.unwrap_or(64);
    check_pos(&mut problems, "generator.max_candidates", max_candidates);

    let train = raw.optimizer.train.unwrap_or_default();
    if !(train.learning_rate.is_finite() && train.learning_rate > 0.0) {
        problems.push(format!(
            "optimizer.train.learning_rate = {}: must be positive",
            train.learning_rate
        ));
    }
    if train.epochs == 0 {
        problems.push("optimizer.train.epochs = 0: must be at least 1".into());
    }
    if !(train.l2.is_finite() && train.l2 >= 0.0) {
        problems.push(format!("optimizer.train.l2 = {}: must be nonnegative", train.l2));
    }
    if !(train.tolerance.is_finite() && train.tolerance >= 0.0) {
        problems
            .push(format!("optimizer.train.tolerance = {}: must be nonnegative", train.tolerance));
    }

    let w_rel = raw.business.w_rel.unwrap_or(0.5);
    let w_margin = raw.business.w_margin.unwrap_or(0.3);
    let w_urg = raw.business.w_urg.unwrap_or(0.2);
    for (name, w) in [
        ("business.w_rel", w_rel),
        ("business.w_margin", w_margin),
        ("business.w_urg", w_urg),
    ] {
        if !(w.is_finite() && w >= 0.0) {
            problems.push(format!("{name} = {w}: must be finite and nonnegative"));
        }
    }
    if w_rel + w_margin + w_urg == 0.0 {
        problems.push("business weights must not all be zero".into());
    }
    let stock_cap = raw.business.stock_cap.unwrap_or(100);
    if stock_cap == 0 {
        problems.push("business.stock_cap = 0: must be at least 1".into());
    }

    let embed_dim = raw.feature.embed_dim.unwrap_or(256);
    if embed_dim < 2 {
        problems.push(format!("feature.embed_dim = {embed_dim}: must be at least 2"));
    }
    let ngram_size = raw.feature.ngram_size.unwrap_or(3);
    check_pos(&mut problems, "feature.ngram_size", ngram_size);

    let n_sessions = raw.simulate.n_sessions.unwrap_or(100_000);
    if n_sessions == 0 {
        problems.push("simulate.n_sessions = 0: must be at least 1".into());
    }

    // Referenced files; a missing or malformed file is one more problem,
    // not an early exit.
    let cta_text = load_file(&mut problems, base, "feature.cta_phrases", &raw.feature.cta_phrases);
    let sentiment_text =
        load_file(&mut problems, base, "feature.sentiment_lexicon", &raw.feature.sentiment_lexicon);
    let keyword_text =
        load_file(&mut problems, base, "feature.keyword_weights", &raw.feature.keyword_weights);
    let forbidden_text =
        load_file(&mut problems, base, "review.forbidden_words", &raw.review.forbidden_words);
    let template_text =
        load_file(&mut problems, base, "generator.templates", &raw.generator.templates);

    let sentiment_lexicon =
        load_weighted(&mut problems, "feature.sentiment_lexicon", sentiment_text);
    let keyword_weights = load_weighted(&mut problems, "feature.keyword_weights", keyword_text);

    let mut required_patterns = BTreeMap::new();
    for (name, v) in raw.review.required_patterns.unwrap_or_default() {
        match name.parse::<Category>() {
            Ok(cat) => {
                required_patterns.insert(cat, v);
            }
            Err(e) => problems.push(format!("review.required_patterns.{name}: {e}")),
        }
    }
    let mut brand_tone = BTreeMap::new();
    for (name, interval) in raw.review.brand_tone.unwrap_or_default() {
        match name.parse::<Category>() {
            Ok(cat) => {
                brand_tone.insert(cat, interval);
            }
            Err(e) => problems.push(format!("review.brand_tone.{name}: {e}")),
        }
    }
    let review = ReviewRules {
        forbidden_words: forbidden_text.as_deref().map(parse_phrase_list).unwrap_or_default(),
        max_length: raw.review.max_length,
        required_patterns,
        brand_tone,
    };
    for p in review.validate() {
        problems.push(format!("review: {p}"));
    }

    let templates: Vec<String> = template_text
        .as_deref()
        .map(|t| {
            t.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect()
        })
        .unwrap_or_default();

    let mut categories: BTreeMap<Category, CategoryConfig> = Category::ALL
        .iter()
        .map(|&cat| {
            (cat, CategoryConfig {
                lambda_default: default_lambda(cat),
                calibration: cat.as_str().to_string(),
            })
        })
        .collect();
    for (name, rc) in raw.categories {
        match name.parse::<Category>() {
            Ok(cat) => {
                let lambda_default = rc.lambda_default.unwrap_or_else(|| default_lambda(cat));
                if !(lambda_default.is_finite() && (0.0..=1.0).contains(&lambda_default)) {
                    problems.push(format!(
                        "categories.{name}.lambda_default = {lambda_default}: must be in [0, 1]"
                    ));
                }
                let calibration =
                    rc.calibration.unwrap_or_else(|| cat.as_str().to_string());
                if calibration.is_empty() {
                    problems.push(format!("categories.{name}.calibration must be nonempty"));
                }
                categories.insert(cat, CategoryConfig { lambda_default, calibration });
            }
            Err(e) => problems.push(format!("categories.{name}: {e}")),
        }
    }

    if let Some(http) = &raw.generator.http {
        if http.endpoint.is_empty() {
            problems.push("generator.http.endpoint must be nonempty".into());
        }
        if http.timeout_ms == 0 {
            problems.push("generator.http.timeout_ms = 0: must be at least 1".into());
        }
    }

    if !problems.is_empty() {
        return Err(ConfigError::Validation(problems));
    }

    Ok(Config {
        feature: FeatureConfig {
            embed_dim,
            ngram_size,
            cta_phrases: cta_text.as_deref().map(parse_phrase_list).unwrap_or_default(),
            keyword_weights,
            sentiment_lexicon,
        },
        retrieval: RetrievalConfig { k, relevance_threshold, dedup_threshold },
        optimizer: OptimizerConfig { lambda, top_k, filter_m, train },
        business: BusinessConfig {
            w_rel,
            w_margin,
            w_urg,
            stock_cap,
            final_sort: raw.business.final_sort.unwrap_or(FinalSort::Reward),
        },
        review,
        generator: GeneratorConfig {
            templates,
            max_candidates,
            http: raw.generator.http,
        },
        simulate: SimulateConfig {
            n_sessions,
            seed: raw.simulate.seed.unwrap_or(42),
            impression_policy: raw
                .simulate
                .impression_policy
                .unwrap_or(ImpressionPolicy::Uniform),
            calibration_path: raw.simulate.calibration.map(|p| base.join(p)),
            sweep_calibration: raw
                .simulate
                .sweep_calibration
                .unwrap_or_else(|| "overall".to_string()),
        },
        categories,
    })
}

impl Config {
    /// Effective lambda: the category default when one is given,
    /// otherwise the global optimizer setting.
    pub fn lambda_for(&self, category: Option<Category>) -> f64 {
        category
            .and_then(|c| self.categories.get(&c))
            .map(|c| c.lambda_default)
            .unwrap_or(self.optimizer.lambda)
    }
}

#[cfg(test)]
pub mod test_support {
    use super::*;
    use crate::optimizer::{LogisticModel, TrainingMeta};
    use indexmap::indexmap;

    /// In-memory config plus a hand-set model, enough to run the full
    /// pipeline in unit tests without touching the filesystem.
    pub fn minimal_config() -> (Config, LogisticModel) {
        let cfg = Config::from_toml_str("", Path::new(".")).unwrap();
        let mut cfg = cfg;
        cfg.generator.templates = vec!["Buy {title} now".to_string()];
        cfg.feature.sentiment_lexicon =
            indexmap! { "fresh".into() => 0.6, "awful".into() => -0.8 };
        cfg.feature.keyword_weights =
            indexmap! { "soap".into() => 1.0, "deal".into() => 0.8 };
        cfg.feature.cta_phrases = vec!["shop now".into(), "order today".into()];
        let model = LogisticModel {
            theta: indexmap! {
                "keyword_strength".into() => 0.8,
                "cta_density".into() => 1.2,
                "sentiment".into() => 0.5,
                "readability".into() => 0.01,
            },
            intercept: -3.0,
            trained_on: TrainingMeta {
                n_samples: 0,
                n_positives: 0,
                hyperparameters: TrainHyper::default(),
                final_loss: f64::NAN,
            },
        };
        (cfg, model)
    }
}
