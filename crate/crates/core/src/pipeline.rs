//! Candidate generation, relevance thresholding, business ranking, and
//! the automated review gate around the reranking core.

use std::collections::BTreeMap;
use std::io::{Read as _, Write as _};
use std::net::TcpStream;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Config, FinalSort};
use crate::optimizer::{self, CopyCandidate, LogisticModel, OptimizerError};
use crate::rng::SplitMix64;
use crate::text_features::{embed, tokenize, FeatureConfig};
use crate::vector_index::{self, cosine_sim, Category, ProductRecord};

pub const TEMPLATE_SLOTS: [&str; 7] =
    ["title", "price", "category", "persona", "stock", "query", "cta"];

#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub product: ProductRecord,
    pub persona: String,
    pub query: String,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReviewRules {
    /// Lowercase, matched per token (never substring).
    pub forbidden_words: Vec<String>,
    /// Characters, not bytes. None disables the length rule.
    pub max_length: Option<usize>,
    /// For each category, a list of phrase sets; at least one phrase of
    /// every set must appear.
    pub required_patterns: BTreeMap<Category, Vec<Vec<String>>>,
    /// Allowed sentiment interval per category, within [-1, 1].
    pub brand_tone: BTreeMap<Category, (f64, f64)>,
}

impl ReviewRules {
    /// Every problem, not just the first; empty means valid.
    pub fn validate(&self) -> Vec<String> {
        fn check_lower(problems: &mut Vec<String>, what: &str, s: &str) {
            if s != s.to_lowercase() {
                problems.push(format!("{what} {s:?} must be lowercase"));
            }
        }
        let mut problems = Vec::new();
        for w in &self.forbidden_words {
            check_lower(&mut problems, "forbidden word", w);
        }
        for (cat, sets) in &self.required_patterns {
            for set in sets {
                if set.is_empty() {
                    problems.push(format!("{cat}: empty required-pattern set"));
                }
                for p in set {
                    check_lower(&mut problems, "required pattern", p);
                }
            }
        }
        for (cat, (lo, hi)) in &self.brand_tone {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && *lo >= -1.0 && *hi <= 1.0) {
                problems.push(format!(
                    "{cat}: brand_tone interval [{lo}, {hi}] must be within [-1, 1] with lo <= hi"
                ));
            }
        }
        problems
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewVerdict {
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl ReviewVerdict {
    /// The only constructor, so passed <=> violations empty by
    /// construction.
    fn from_violations(violations: Vec<Violation>) -> Self {
        ReviewVerdict { passed: violations.is_empty(), violations }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no templates provided")]
    NoTemplates,
    #[error("template slot {0:?} is not recognized")]
    UnknownSlot(String),
    #[error("template syntax: {0}")]
    TemplateSyntax(String),
    #[error("template uses {{cta}} but the CTA phrase list is empty")]
    EmptyCtaPool,
    #[error("generation service unavailable: {0}")]
    GenerationUnavailable(String),
    #[error("business weights are all zero")]
    AllZeroWeights,
    #[error("no candidates survived dedup and relevance filtering")]
    EmptyAfterFilters,
    #[error("requested {n} candidates; config allows at most {max}")]
    RequestTooLarge { n: usize, max: usize },
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}

/// Produces raw candidate texts for a request. The deterministic
/// template generator is the default; the HTTP adapter plugs in an
/// external generation service.
pub trait CandidateGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<Vec<String>, PipelineError>;
}

pub struct TemplateGenerator<'a> {
    templates: &'a [String],
    cta_phrases: &'a [String],
}

impl<'a> TemplateGenerator<'a> {
    pub fn new(
        templates: &'a [String],
        cta_phrases: &'a [String],
    ) -> Result<Self, PipelineError> {
        if templates.is_empty() {
            return Err(PipelineError::NoTemplates);
        }
        for t in templates {
            validate_template(t)?;
            if t.contains("{cta}") && cta_phrases.is_empty() {
                return Err(PipelineError::EmptyCtaPool);
            }
        }
        Ok(TemplateGenerator { templates, cta_phrases })
    }
}

impl CandidateGenerator for TemplateGenerator<'_> {
    /// Candidate i draws from its own RNG stream keyed by (seed, i):
    /// template choice first, then every alternation group and {cta}
    /// left to right. Same request, same bytes.
    fn generate(&self, req: &GenerationRequest) -> Result<Vec<String>, PipelineError> {
        assert!(req.n >= 1, "request n must be at least 1");
        (0..req.n)
            .map(|i| {
                let mut rng = SplitMix64::stream(req.seed, i as u64);
                let template =
                    &self.templates[rng.next_below(self.templates.len() as u64) as usize];
                fill_template(template, req, self.cta_phrases, &mut rng)
            })
            .collect()
    }
}

/// Collects characters up to the terminator; None if the template ends
/// first.
fn read_until(chars: &mut std::str::Chars<'_>, end: char) -> Option<String> {
    let mut s = String::new();
    for c in chars.by_ref() {
        if c == end {
            return Some(s);
        }
        s.push(c);
    }
    None
}

/// Checks slot names and bracket structure without consuming RNG draws,
/// so bad templates fail on construction even if sampling never picks
/// them.
fn validate_template(template: &str) -> Result<(), PipelineError> {
    let mut chars = template.chars();
    while let Some(c) = chars.next() {
        match c {
            '{' => {
                let name = read_until(&mut chars, '}').ok_or_else(|| {
                    PipelineError::TemplateSyntax(format!("unclosed '{{' in {template:?}"))
                })?;
                if !TEMPLATE_SLOTS.contains(&name.as_str()) {
                    return Err(PipelineError::UnknownSlot(name));
                }
            }
            '[' => {
                let group = read_until(&mut chars, ']').ok_or_else(|| {
                    PipelineError::TemplateSyntax(format!("unclosed '[' in {template:?}"))
                })?;
                if group.split('|').any(str::is_empty) {
                    return Err(PipelineError::TemplateSyntax(format!(
                        "empty alternative in [{group}]"
                    )));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn fill_template(
    template: &str,
    req: &GenerationRequest,
    cta_phrases: &[String],
    rng: &mut SplitMix64,
) -> Result<String, PipelineError> {
    let p = &req.product;
    let mut out = String::with_capacity(template.len());
    let mut chars = template.chars();
    while let Some(c) = chars.next() {
        match c {
            '{' => {
                let name = read_until(&mut chars, '}').ok_or_else(|| {
                    PipelineError::TemplateSyntax(format!("unclosed '{{' in {template:?}"))
                })?;
                match name.as_str() {
                    "title" => out.push_str(&p.title),
                    "price" => out.push_str(&format!("{:.2}", p.price)),
                    "category" => out.push_str(p.category.as_str()),
                    "persona" => out.push_str(&req.persona),
                    "stock" => out.push_str(&p.stock.to_string()),
                    "query" => out.push_str(&req.query),
                    "cta" => {
                        if cta_phrases.is_empty() {
                            return Err(PipelineError::EmptyCtaPool);
                        }
                        let i = rng.next_below(cta_phrases.len() as u64) as usize;
                        out.push_str(&cta_phrases[i]);
                    }
                    other => return Err(PipelineError::UnknownSlot(other.to_string())),
                }
            }
            '[' => {
                let group = read_until(&mut chars, ']').ok_or_else(|| {
                    PipelineError::TemplateSyntax(format!("unclosed '[' in {template:?}"))
                })?;
                let variants: Vec<&str> = group.split('|').collect();
                let i = rng.next_below(variants.len() as u64) as usize;
                out.push_str(variants[i]);
            }
            _ => out.push(c),
        }
    }
    Ok(out)
}

/// Generates `req.n` candidates from the template pool, embedded and
/// feature-extracted, with ids `{product_id}-c{seq}`.
pub fn template_generate(
    req: &GenerationRequest,
    templates: &[String],
    cfg: &FeatureConfig,
) -> Result<Vec<CopyCandidate>, PipelineError> {
    let texts = TemplateGenerator::new(templates, &cfg.cta_phrases)?.generate(req)?;
    Ok(build_candidates(req, texts, cfg))
}

fn build_candidates(
    req: &GenerationRequest,
    texts: Vec<String>,
    cfg: &FeatureConfig,
) -> Vec<CopyCandidate> {
    texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| {
            CopyCandidate::new(format!("{}-c{i:03}", req.product.id), &req.product.id, text, cfg)
        })
        .collect()
}

/// External generation service adapter. POSTs
/// `{product, persona, query, n}` and expects `{"candidates": [...]}`.
/// Plain `http://` only; any transport or protocol problem surfaces as
/// GenerationUnavailable after the configured retries.
pub struct HttpGenerator {
    pub endpoint: String,
    pub timeout: Duration,
    pub retries: u32,
}

#[derive(Deserialize)]
struct GenerationResponse {
    candidates: Vec<String>,
}

impl CandidateGenerator for HttpGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<Vec<String>, PipelineError> {
        let body = serde_json::json!({
            "product": req.product,
            "persona": req.persona,
            "query": req.query,
            "n": req.n,
        })
        .to_string();
        let mut last_err = String::new();
        for _ in 0..=self.retries {
            match self.post_once(&body) {
                Ok(texts) => return Ok(texts),
                Err(e) => last_err = e,
            }
        }
        Err(PipelineError::GenerationUnavailable(last_err))
    }
}

impl HttpGenerator {
    fn post_once(&self, body: &str) -> Result<Vec<String>, String> {
        let rest = self
            .endpoint
            .strip_prefix("http://")
            .ok_or_else(|| format!("endpoint {:?} must start with http://", self.endpoint))?;
        let (authority, path) = match rest.find('/') {
            Some(i) => (&rest[..i], &rest[i..]),
            None => (rest, "/"),
        };
        let addr = if authority.contains(':') {
            authority.to_string()
        } else {
            format!("{authority}:80")
        };

        let mut stream = TcpStream::connect(&addr).map_err(|e| format!("connect {addr}: {e}"))?;
        stream.set_read_timeout(Some(self.timeout)).map_err(|e| e.to_string())?;
        stream.set_write_timeout(Some(self.timeout)).map_err(|e| e.to_string())?;
        let request = format!(
            "POST {path} HTTP/1.1\r\nHost: {authority}\r\nContent-Type: application/json\r\n\
             Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        stream.write_all(request.as_bytes()).map_err(|e| format!("send: {e}"))?;
        let mut raw = Vec::new();
        stream.read_to_end(&mut raw).map_err(|e| format!("recv: {e}"))?;
        let text = String::from_utf8_lossy(&raw);

        let (head, resp_body) = text
            .split_once("\r\n\r\n")
            .ok_or_else(|| "malformed response: no header terminator".to_string())?;
        let status_line = head.lines().next().unwrap_or_default();
        let code = status_line.split_whitespace().nth(1).unwrap_or_default();
        if code != "200" {
            return Err(format!("status {status_line:?}"));
        }
        if head.to_ascii_lowercase().contains("transfer-encoding: chunked") {
            return Err("chunked responses unsupported".to_string());
        }
        let parsed: GenerationResponse =
            serde_json::from_str(resp_body).map_err(|e| format!("bad response body: {e}"))?;
        Ok(parsed.candidates)
    }
}

/// Keeps candidates whose cosine similarity to the product embedding is
/// at least `threshold`; order preserved.
pub fn relevance_filter(
    candidates: Vec<CopyCandidate>,
    product: &ProductRecord,
    threshold: f64,
) -> Vec<CopyCandidate> {
    assert!((0.0..=1.0).contains(&threshold), "threshold must be in [0, 1]");
    candidates
        .into_iter()
        .filter(|c| cosine_sim(&c.embedding, &product.embedding) >= threshold)
        .collect()
}

/// 1 at zero stock, 0 at or above the cap, linear between.
pub fn urgency(stock: u32, stock_cap: u32) -> f64 {
    assert!(stock_cap > 0, "stock_cap must be positive");
    1.0 - f64::from(stock.min(stock_cap)) / f64::from(stock_cap)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusinessSignals {
    pub relevance: f64,
    pub margin: f64,
    pub urgency: f64,
}

/// Scores each item `w_rel*relevance + w_margin*margin + w_urg*urgency`
/// and sorts descending, ties to the lower candidate id.
pub fn business_rank(
    items: Vec<(CopyCandidate, BusinessSignals)>,
    w_rel: f64,
    w_margin: f64,
    w_urg: f64,
) -> Result<Vec<(CopyCandidate, f64)>, PipelineError> {
    for (name, w) in [("w_rel", w_rel), ("w_margin", w_margin), ("w_urg", w_urg)] {
        assert!(w.is_finite() && w >= 0.0, "{name} must be finite and nonnegative");
    }
    if w_rel + w_margin + w_urg == 0.0 {
        return Err(PipelineError::AllZeroWeights);
    }
    let mut scored: Vec<(CopyCandidate, f64)> = items
        .into_iter()
        .map(|(c, s)| {
            let score = w_rel * s.relevance + w_margin * s.margin + w_urg * s.urgency;
            (c, score)
        })
        .collect();
    scored.sort_by(|(ca, sa), (cb, sb)| {
        sb.partial_cmp(sa).expect("scores are finite").then_with(|| ca.id.cmp(&cb.id))
    });
    Ok(scored)
}

/// Checks every rule and reports every violation; never short-circuits.
/// One violation per broken rule (the forbidden-word rule lists all
/// matches in one reason; each required-pattern set is its own rule).
pub fn review(candidate: &CopyCandidate, rules: &ReviewRules, category: Category) -> ReviewVerdict {
    let mut violations = Vec::new();
    let tokens = tokenize(&candidate.text);

    let found: Vec<&str> = rules
        .forbidden_words
        .iter()
        .filter(|w| contains_phrase(&tokens, w))
        .map(String::as_str)
        .collect();
    if !found.is_empty() {
        violations.push(Violation {
            rule: "forbidden_word".into(),
            reason: format!("contains forbidden {}", found.join(", ")),
        });
    }

    if let Some(max) = rules.max_length {
        let len = candidate.text.chars().count();
        if len > max {
            violations.push(Violation {
                rule: "max_length".into(),
                reason: format!("{len} characters exceeds limit {max}"),
            });
        }
    }

    if let Some(sets) = rules.required_patterns.get(&category) {
        for (i, set) in sets.iter().enumerate() {
            if !set.iter().any(|p| contains_phrase(&tokens, p)) {
                violations.push(Violation {
                    rule: format!("required_pattern_{i}"),
                    reason: format!("none of [{}] present", set.join(", ")),
                });
            }
        }
    }

    if let Some(&(lo, hi)) = rules.brand_tone.get(&category) {
        let s = candidate.features.sentiment;
        if !(lo..=hi).contains(&s) {
            violations.push(Violation {
                rule: "brand_tone".into(),
                reason: format!("sentiment {s:.3} outside allowed [{lo}, {hi}]"),
            });
        }
    }

    ReviewVerdict::from_violations(violations)
}

/// Token-sequence containment; a single word is a one-token phrase.
/// "free" never matches inside "freedom".
fn contains_phrase(tokens: &[String], phrase: &str) -> bool {
    let needle = tokenize(phrase);
    if needle.is_empty() || needle.len() > tokens.len() {
        return false;
    }
    tokens.windows(needle.len()).any(|w| w == needle.as_slice())
}

/// Full flow: generate, embed, dedup, relevance-filter, rerank, review.
/// Review failures stay in the output, flagged by their verdict. The
/// generator comes from config (templates by default, HTTP if set).
pub fn run_pipeline(
    req: &GenerationRequest,
    model: &LogisticModel,
    cfg: &Config,
) -> Result<Vec<(CopyCandidate, ReviewVerdict)>, PipelineError> {
    match &cfg.generator.http {
        Some(http) => {
            let gen = HttpGenerator {
                endpoint: http.endpoint.clone(),
                timeout: Duration::from_millis(http.timeout_ms),
                retries: http.retries,
            };
            run_pipeline_with(req, &gen, model, cfg)
        }
        None => {
            let gen = TemplateGenerator::new(&cfg.generator.templates, &cfg.feature.cta_phrases)?;
            run_pipeline_with(req, &gen, model, cfg)
        }
    }
}

/// [`run_pipeline`] with an explicit generator.
pub fn run_pipeline_with(
    req: &GenerationRequest,
    generator: &dyn CandidateGenerator,
    model: &LogisticModel,
    cfg: &Config,
) -> Result<Vec<(CopyCandidate, ReviewVerdict)>, PipelineError> {
    if req.n > cfg.generator.max_candidates {
        return Err(PipelineError::RequestTooLarge {
            n: req.n,
            max: cfg.generator.max_candidates,
        });
    }
    let texts = generator.generate(req)?;
    let candidates = build_candidates(req, texts, &cfg.feature);
    let deduped = vector_index::dedup(&candidates, cfg.retrieval.dedup_threshold);
    // Relevance is always judged against a freshly embedded product
    // text, so hand-built records without a stored embedding work too.
    let mut product = req.product.clone();
    product.embedding = embed(&product.embedding_text(), &cfg.feature);
    let kept = relevance_filter(deduped, &product, cfg.retrieval.relevance_threshold);
    if kept.is_empty() {
        return Err(PipelineError::EmptyAfterFilters);
    }
    let ranked = optimizer::rerank(
        &kept,
        model,
        cfg.optimizer.lambda,
        cfg.optimizer.top_k,
        cfg.optimizer.filter_m,
    )?;
    let ordered = match cfg.business.final_sort {
        FinalSort::Reward => ranked,
        FinalSort::Business => {
            let urg = urgency(product.stock, cfg.business.stock_cap);
            let items = ranked
                .into_iter()
                .map(|c| {
                    let signals = BusinessSignals {
                        relevance: cosine_sim(&c.embedding, &product.embedding),
                        margin: product.margin,
                        urgency: urg,
                    };
                    (c, signals)
                })
                .collect();
            business_rank(items, cfg.business.w_rel, cfg.business.w_margin, cfg.business.w_urg)?
                .into_iter()
                .map(|(c, _)| c)
                .collect()
        }
    };
    Ok(ordered
        .into_iter()
        .map(|c| {
            let verdict = review(&c, &cfg.review, req.product.category);
            (c, verdict)
        })
        .collect())
}
