//! Deterministic text signals: embeddings, sentiment, readability, CTA
//! density, keyword strength. Everything here is a pure function of
//! (text, config); identical inputs give bit-identical outputs on every
//! platform.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::fnv1a_64;

/// Fixed-dimension embedding built from hashed character n-gram counts.
///
/// Nonempty text yields a unit-L2 vector with all components >= 0, so
/// pairwise cosine lands in [0, 1]. Empty or whitespace-only text is the
/// all-zeros vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector { values: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// The named feature values consumed by the conversion model.
///
/// Serialization order is fixed: the four declared fields in declaration
/// order, then `extra` keys sorted lexicographically. Training and
/// prediction both read features through [`FeatureVector::named_values`],
/// so dot products are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub keyword_strength: f64,
    pub cta_density: f64,
    pub sentiment: f64,
    pub readability: f64,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub extra: IndexMap<String, f64>,
}

/// Declared feature names in serialization order, before `extra`.
pub const BASE_FEATURES: [&str; 4] =
    ["keyword_strength", "cta_density", "sentiment", "readability"];

impl FeatureVector {
    pub fn zeros() -> Self {
        FeatureVector {
            keyword_strength: 0.0,
            cta_density: 0.0,
            sentiment: 0.0,
            readability: 0.0,
            extra: IndexMap::new(),
        }
    }

    /// (name, value) pairs in the fixed serialization order.
    pub fn named_values(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            (BASE_FEATURES[0].to_string(), self.keyword_strength),
            (BASE_FEATURES[1].to_string(), self.cta_density),
            (BASE_FEATURES[2].to_string(), self.sentiment),
            (BASE_FEATURES[3].to_string(), self.readability),
        ];
        let mut keys: Vec<&String> = self.extra.keys().collect();
        keys.sort();
        for k in keys {
            out.push((k.clone(), self.extra[k]));
        }
        out
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "keyword_strength" => Some(self.keyword_strength),
            "cta_density" => Some(self.cta_density),
            "sentiment" => Some(self.sentiment),
            "readability" => Some(self.readability),
            _ => self.extra.get(name).copied(),
        }
    }
}

/// Knobs for every extractor in this module.
#[derive(Debug, Clone)]
pub struct FeatureConfig {
    pub embed_dim: usize,
    pub ngram_size: usize,
    pub cta_phrases: Vec<String>,
    pub keyword_weights: IndexMap<String, f64>,
    pub sentiment_lexicon: IndexMap<String, f64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            embed_dim: 256,
            ngram_size: 3,
            cta_phrases: Vec::new(),
            keyword_weights: IndexMap::new(),
            sentiment_lexicon: IndexMap::new(),
        }
    }
}

/// Lowercase word tokens: split on Unicode whitespace, strip
/// non-alphanumeric characters from token edges, drop what's left empty.
/// Interior punctuation survives ("limited-edition" is one token).
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let core = raw.trim_matches(|c: char| !c.is_alphanumeric());
            if core.is_empty() {
                None
            } else {
                Some(core.to_lowercase())
            }
        })
        .collect()
}

/// Hashed character n-gram embedding.
///
/// The token stream is re-joined with single spaces, sliced into character
/// n-grams of `cfg.ngram_size`, and each gram is bucketed by
/// FNV-1a 64 modulo `cfg.embed_dim`; bucket counts are L2-normalized.
/// A stream shorter than one gram contributes itself whole, so any
/// nonempty stream still yields a unit vector.
pub fn embed(text: &str, cfg: &FeatureConfig) -> EmbeddingVector {
    assert!(cfg.embed_dim >= 2, "embed_dim must be at least 2");
    assert!(cfg.ngram_size >= 1, "ngram_size must be at least 1");
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return EmbeddingVector::zeros(cfg.embed_dim);
    }
    let stream: Vec<char> = tokens.join(" ").chars().collect();
    let mut counts = vec![0.0_f64; cfg.embed_dim];
    let mut gram = String::new();
    let mut bump = |chars: &[char], counts: &mut [f64]| {
        gram.clear();
        gram.extend(chars);
        let bucket = (fnv1a_64(gram.as_bytes()) % cfg.embed_dim as u64) as usize;
        counts[bucket] += 1.0;
    };
    if stream.len() < cfg.ngram_size {
        bump(&stream, &mut counts);
    } else {
        for w in stream.windows(cfg.ngram_size) {
            bump(w, &mut counts);
        }
    }
    let norm = counts.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut counts {
        *v /= norm;
    }
    EmbeddingVector { values: counts }
}

/// Mean lexicon valence over the tokens that appear in the lexicon;
/// 0.0 when nothing matches. Clamped to [-1, 1].
pub fn sentiment_polarity(text: &str, cfg: &FeatureConfig) -> f64 {
    let mut sum = 0.0;
    let mut matched = 0u32;
    for tok in tokenize(text) {
        if let Some(&v) = cfg.sentiment_lexicon.get(&tok) {
            sum += v;
            matched += 1;
        }
    }
    if matched == 0 {
        return 0.0;
    }
    (sum / matched as f64).clamp(-1.0, 1.0)
}

/// Flesch Reading Ease, clamped to [0, 100]. Sentences are maximal runs
/// of `.`/`!`/`?` (minimum 1); syllables are maximal aeiouy groups per
/// token (minimum 1 per word). Empty text scores 0.
pub fn readability(text: &str) -> f64 {
    let words = tokenize(text);
    if words.is_empty() {
        return 0.0;
    }
    let mut sentences = 0u32;
    let mut in_run = false;
    for c in text.chars() {
        let terminal = matches!(c, '.' | '!' | '?');
        if terminal && !in_run {
            sentences += 1;
        }
        in_run = terminal;
    }
    let sentences = sentences.max(1) as f64;
    let syllables: u32 = words.iter().map(|w| syllable_count(w)).sum();
    let n_words = words.len() as f64;
    let score =
        206.835 - 1.015 * (n_words / sentences) - 84.6 * (syllables as f64 / n_words);
    score.clamp(0.0, 100.0)
}

/// Maximal vowel-letter groups (aeiouy), minimum 1.
fn syllable_count(word: &str) -> u32 {
    let mut groups = 0u32;
    let mut in_group = false;
    for c in word.chars() {
        let vowel = matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
        if vowel && !in_group {
            groups += 1;
        }
        in_group = vowel;
    }
    groups.max(1)
}

/// Fraction of tokens covered by non-overlapping left-to-right matches of
/// the configured CTA phrases. At each position longer phrases win, so
/// "buy now" beats "buy". 0.0 for empty text.
pub fn cta_density(text: &str, cfg: &FeatureConfig) -> f64 {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return 0.0;
    }
    // Phrase token lists, longest first; ties resolved lexicographically
    // so the scan never depends on config file order.
    let mut phrases: Vec<Vec<String>> =
        cfg.cta_phrases.iter().map(|p| tokenize(p)).filter(|p| !p.is_empty()).collect();
    phrases.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    phrases.dedup();

    let mut covered = 0usize;
    let mut i = 0usize;
    while i < tokens.len() {
        let hit = phrases
            .iter()
            .find(|p| tokens[i..].len() >= p.len() && tokens[i..i + p.len()] == p[..]);
        match hit {
            Some(p) => {
                covered += p.len();
                i += p.len();
            }
            None => i += 1,
        }
    }
    covered as f64 / tokens.len() as f64
}

/// Sum of weight x (non-overlapping occurrence count) over all configured
/// keyword phrases, normalized by max(1, token count). Each phrase is
/// counted independently.
pub fn keyword_strength(text: &str, cfg: &FeatureConfig) -> f64 {
    let tokens = tokenize(text);
    let mut total = 0.0;
    for (phrase, &weight) in &cfg.keyword_weights {
        let p = tokenize(phrase);
        if p.is_empty() {
            continue;
        }
        let mut count = 0u32;
        let mut i = 0usize;
        while i + p.len() <= tokens.len() {
            if tokens[i..i + p.len()] == p[..] {
                count += 1;
                i += p.len();
            } else {
                i += 1;
            }
        }
        total += weight * count as f64;
    }
    total / tokens.len().max(1) as f64
}

/// All four scalar signals for one text. `extra` stays empty; callers add
/// their own named features when they have any.
pub fn extract_features(text: &str, cfg: &FeatureConfig) -> FeatureVector {
    FeatureVector {
        keyword_strength: keyword_strength(text, cfg),
        cta_density: cta_density(text, cfg),
        sentiment: sentiment_polarity(text, cfg),
        readability: readability(text),
        extra: IndexMap::new(),
    }
}

#[derive(Debug, Error)]
pub enum LineFileError {
    #[error("line {line}: expected `entry<TAB>value`")]
    MissingValue { line: usize },
    #[error("line {line}: {text:?} is not a number")]
    BadNumber { line: usize, text: String },
}

/// One lowercase phrase per line; blank lines and `#` comments skipped.
pub fn parse_phrase_list(content: &str) -> Vec<String> {
    content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// `entry<TAB>value` per line; blank lines and `#` comments skipped.
/// Entries are lowercased; values are left for the caller to range-check.
pub fn parse_weighted_list(content: &str) -> Result<Vec<(String, f64)>, LineFileError> {
    let mut out = Vec::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (entry, value) = line
            .split_once('\t')
            .ok_or(LineFileError::MissingValue { line: idx + 1 })?;
        let value: f64 = value.trim().parse().map_err(|_| LineFileError::BadNumber {
            line: idx + 1,
            text: value.trim().to_string(),
        })?;
        if !value.is_finite() {
            return Err(LineFileError::BadNumber { line: idx + 1, text: value.to_string() });
        }
        out.push((entry.trim().to_lowercase(), value));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> FeatureConfig {
        FeatureConfig::default()
    }

    #[test]
    fn tokenize_strips_edge_punctuation() {
        assert_eq!(
            tokenize("Buy Now \u{2014} only 10 left!"),
            vec!["buy", "now", "only", "10", "left"]
        );
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("  \t "), Vec::<String>::new());
        assert_eq!(tokenize("limited-edition!"), vec!["limited-edition"]);
    }

    #[test]
    fn embed_unit_norm_and_empty() {
        let v = embed("fresh organic coffee", &cfg());
        assert!((v.l2_norm() - 1.0).abs() < 1e-9);
        assert!(v.values.iter().all(|&x| x >= 0.0));
        assert!(embed("   ", &cfg()).is_zero());
        // Stream shorter than one gram still normalizes.
        assert!((embed("hi", &cfg()).l2_norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn embed_deterministic() {
        let a = embed("Same Text twice", &cfg());
        let b = embed("Same Text twice", &cfg());
        assert_eq!(a, b);
    }

    #[test]
    fn sentiment_is_mean_over_matched_tokens() {
        let mut c = cfg();
        c.sentiment_lexicon.insert("great".into(), 0.8);
        c.sentiment_lexicon.insert("awful".into(), -0.6);
        let got = sentiment_polarity("great great awful", &c);
        assert!((got - (0.8 + 0.8 - 0.6) / 3.0).abs() < 1e-12);
        // Unmatched tokens do not dilute the mean.
        let got = sentiment_polarity("great great awful unrelated words", &c);
        assert!((got - (0.8 + 0.8 - 0.6) / 3.0).abs() < 1e-12);
        assert_eq!(sentiment_polarity("nothing matches here", &c), 0.0);
        c.sentiment_lexicon.insert("good".into(), 1.0);
        c.sentiment_lexicon.insert("bad".into(), -1.0);
        assert_eq!(sentiment_polarity("good bad", &c), 0.0);
    }

    #[test]
    fn readability_fixtures() {
        assert_eq!(readability(""), 0.0);
        // 3 words, 1 sentence, 3 syllables: raw 119.19 clamps to 100.
        assert_eq!(readability("The cat sat."), 100.0);
        // 10 words, 2 sentences, 19 syllables by hand count.
        let got = readability(
            "The weather today is pleasant. Children playing outside enjoy sunshine.",
        );
        let want = 206.835 - 1.015 * 5.0 - 84.6 * (19.0 / 10.0);
        assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
    }

    #[test]
    fn syllable_groups() {
        assert_eq!(syllable_count("playing"), 1); // a-y-i is one group
        assert_eq!(syllable_count("outside"), 3);
        assert_eq!(syllable_count("10"), 1); // floor of one per word
    }

    #[test]
    fn cta_density_covers_tokens() {
        let mut c = cfg();
        c.cta_phrases = vec!["buy now".into()];
        assert!((cta_density("buy now today", &c) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(cta_density("nothing to see", &c), 0.0);
        assert_eq!(cta_density("", &c), 0.0);
        c.cta_phrases = vec!["add to cart".into()];
        assert_eq!(cta_density("add to cart add to cart", &c), 1.0);
        // Longest phrase wins at a shared start.
        c.cta_phrases = vec!["buy".into(), "buy now".into()];
        assert_eq!(cta_density("buy now", &c), 1.0);
    }

    #[test]
    fn keyword_strength_weighted_counts() {
        let mut c = cfg();
        c.keyword_weights.insert("limited-edition".into(), 2.0);
        let text = "a b c d e f g h i limited-edition";
        assert!((keyword_strength(text, &c) - 0.2).abs() < 1e-12);
        let mut c = cfg();
        c.keyword_weights.insert("only".into(), 1.0);
        c.keyword_weights.insert("left".into(), 1.5);
        assert!((keyword_strength("only 10 left", &c) - 2.5 / 3.0).abs() < 1e-12);
        assert_eq!(keyword_strength("no keywords", &c), 0.0);
    }

    #[test]
    fn extract_features_composes() {
        let f = extract_features("", &cfg());
        assert_eq!(f, FeatureVector::zeros());
        let mut c = cfg();
        c.cta_phrases = vec!["buy now".into()];
        c.keyword_weights.insert("sale".into(), 1.0);
        c.sentiment_lexicon.insert("great".into(), 0.5);
        let f = extract_features("Great sale. Buy now.", &c);
        assert!((f.cta_density - 0.5).abs() < 1e-12);
        assert!((f.keyword_strength - 0.25).abs() < 1e-12);
        assert!((f.sentiment - 0.5).abs() < 1e-12);
        assert_eq!(f.readability, readability("Great sale. Buy now."));
    }

    #[test]
    fn named_values_order_is_stable() {
        let mut f = FeatureVector::zeros();
        f.extra.insert("zeta".into(), 1.0);
        f.extra.insert("alpha".into(), 2.0);
        let names: Vec<String> = f.named_values().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            vec!["keyword_strength", "cta_density", "sentiment", "readability", "alpha", "zeta"]
        );
    }

    #[test]
    fn weighted_list_parses_and_rejects() {
        let got = parse_weighted_list("# lexicon\nGood\t0.5\n\nbad\t-0.5\n").unwrap();
        assert_eq!(got, vec![("good".into(), 0.5), ("bad".into(), -0.5)]);
        assert!(matches!(
            parse_weighted_list("entry-without-value\n"),
            Err(LineFileError::MissingValue { line: 1 })
        ));
        assert!(matches!(
            parse_weighted_list("word\tNaN\n"),
            Err(LineFileError::BadNumber { .. })
        ));
        assert_eq!(parse_phrase_list("Buy Now\n# skip\n\norder today\n").len(), 2);
    }

    proptest! {
        #[test]
        fn embed_norm_is_unit_or_zero(text in ".{0,80}") {
            let v = embed(&text, &cfg());
            prop_assert!(v.values.iter().all(|&x| x >= 0.0));
            let n = v.l2_norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
        }

        #[test]
        fn feature_ranges_hold(text in ".{0,120}") {
            let mut c = cfg();
            c.cta_phrases = vec!["buy now".into(), "order".into()];
            c.keyword_weights.insert("sale".into(), 2.0);
            c.sentiment_lexicon.insert("good".into(), 1.0);
            c.sentiment_lexicon.insert("bad".into(), -1.0);
            let f = extract_features(&text, &c);
            prop_assert!((0.0..=1.0).contains(&f.cta_density));
            prop_assert!(f.keyword_strength >= 0.0);
            prop_assert!((-1.0..=1.0).contains(&f.sentiment));
            prop_assert!((0.0..=100.0).contains(&f.readability));
        }

        #[test]
        fn sentiment_order_free(mut words in proptest::collection::vec("(good|bad|meh|great)", 1..12)) {
            let mut c = cfg();
            c.sentiment_lexicon.insert("good".into(), 0.7);
            c.sentiment_lexicon.insert("bad".into(), -0.7);
            c.sentiment_lexicon.insert("great".into(), 1.0);
            let forward = sentiment_polarity(&words.join(" "), &c);
            words.reverse();
            let backward = sentiment_polarity(&words.join(" "), &c);
            prop_assert!((forward - backward).abs() < 1e-12);
        }
    }
}
