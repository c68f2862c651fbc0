//! Product catalog, exact top-k cosine retrieval, and embedding-similarity
//! dedup. Retrieval is a brute-force scan: catalogs here are desk scale
//! and an exact scan keeps results bit-deterministic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::CopyCandidate;
use crate::text_features::{embed, EmbeddingVector, FeatureConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Fmcg,
    Apparel,
    Electronics,
    Other,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::Fmcg, Category::Apparel, Category::Electronics, Category::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Fmcg => "fmcg",
            Category::Apparel => "apparel",
            Category::Electronics => "electronics",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fmcg" => Ok(Category::Fmcg),
            "apparel" => Ok(Category::Apparel),
            "electronics" => Ok(Category::Electronics),
            "other" => Ok(Category::Other),
            other => Err(format!(
                "unknown category {other:?} (expected fmcg, apparel, electronics, or other)"
            )),
        }
    }
}

/// One catalog entry. The embedding is always recomputed from
/// `title + description` on load; a stored embedding field is rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductRecord {
    pub id: String,
    pub category: Category,
    pub title: String,
    pub description: String,
    pub price: f64,
    pub margin: f64,
    pub stock: u32,
    #[serde(skip)]
    pub embedding: EmbeddingVector,
}

impl ProductRecord {
    /// Text the product embedding is computed from.
    pub fn embedding_text(&self) -> String {
        format!("{} {}", self.title, self.description)
    }
}

#[derive(Debug, Error)]
pub enum VectorIndexError {
    #[error("cannot build an index from an empty catalog")]
    EmptyCatalog,
    #[error("duplicate product id {0:?}")]
    DuplicateId(String),
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("line {line}: duplicate product id {id:?}")]
    Duplicate { line: usize, id: String },
}

/// Immutable id -> embedding index. Insertion order is the tie-break
/// order for retrieval.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    entries: Vec<(String, EmbeddingVector)>,
}

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, EmbeddingVector)] {
        &self.entries
    }
}

/// Builds the retrieval index, rejecting duplicate ids and inconsistent
/// embedding dimensions.
pub fn build_index(products: &[ProductRecord]) -> Result<VectorIndex, VectorIndexError> {
    if products.is_empty() {
        return Err(VectorIndexError::EmptyCatalog);
    }
    let dim = products[0].embedding.dim();
    let mut seen = std::collections::HashSet::new();
    let mut entries = Vec::with_capacity(products.len());
    for p in products {
        if p.embedding.dim() != dim {
            return Err(VectorIndexError::DimensionMismatch {
                left: dim,
                right: p.embedding.dim(),
            });
        }
        if !seen.insert(p.id.clone()) {
            return Err(VectorIndexError::DuplicateId(p.id.clone()));
        }
        entries.push((p.id.clone(), p.embedding.clone()));
    }
    Ok(VectorIndex { entries })
}

/// Cosine similarity. An all-zeros vector is similar to nothing
/// (cosine 0, even against itself); equal nonzero vectors are exactly 1.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, VectorIndexError> {
    if a.dim() != b.dim() {
        return Err(VectorIndexError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    Ok(cosine_sim(a, b))
}

/// Same-dimension cosine. The equal-vectors short circuit keeps
/// self-similarity exact, which the diversity score's zero case relies on.
pub(crate) fn cosine_sim(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    if a.is_zero() || b.is_zero() {
        return 0.0;
    }
    if a.values == b.values {
        return 1.0;
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    // Rounding must not push the ratio past the mathematical range.
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// The `k` highest-cosine entries, descending; ties keep insertion order.
/// `k` past the index size returns everything.
pub fn top_k(
    index: &VectorIndex,
    query: &EmbeddingVector,
    k: usize,
) -> Result<Vec<(String, f64)>, VectorIndexError> {
    let mut scored = Vec::with_capacity(index.len());
    for (id, emb) in &index.entries {
        let sim = cosine(query, emb)?;
        scored.push((id.clone(), sim));
    }
    // Stable sort: equal similarities stay in insertion order.
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("similarities are finite"));
    scored.truncate(k);
    Ok(scored)
}

/// Greedy left-to-right near-duplicate removal: a candidate survives iff
/// its cosine to every already-kept candidate is below `threshold`.
/// Order-stable and idempotent.
pub fn dedup(candidates: &[CopyCandidate], threshold: f64) -> Vec<CopyCandidate> {
    let mut kept: Vec<CopyCandidate> = Vec::new();
    for cand in candidates {
        let duplicate = kept
            .iter()
            .any(|k| cosine_sim(&k.embedding, &cand.embedding) >= threshold);
        if !duplicate {
            kept.push(cand.clone());
        }
    }
    kept
}

/// Parses a JSON-Lines catalog, validates ranges, and recomputes every
/// embedding. Blank lines are allowed; anything else malformed is an
/// error carrying its line number.
pub fn load_catalog(content: &str, cfg: &FeatureConfig) -> Result<Vec<ProductRecord>, CatalogError> {
    let mut products: Vec<ProductRecord> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut product: ProductRecord =
            serde_json::from_str(raw).map_err(|source| CatalogError::Parse { line, source })?;
        let invalid = |message: String| CatalogError::Invalid { line, message };
        if product.id.is_empty() {
            return Err(invalid("product id must be nonempty".into()));
        }
        if !(product.price.is_finite() && product.price > 0.0) {
            return Err(invalid(format!("price {} must be positive", product.price)));
        }
        if !(product.margin.is_finite() && (0.0..=1.0).contains(&product.margin)) {
            return Err(invalid(format!("margin {} must be in [0, 1]", product.margin)));
        }
        if !seen.insert(product.id.clone()) {
            return Err(CatalogError::Duplicate { line, id: product.id });
        }
        product.embedding = embed(&product.embedding_text(), cfg);
        products.push(product);
    }
    Ok(products)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn unit(dim: usize, axis: usize) -> EmbeddingVector {
        let mut v = EmbeddingVector::zeros(dim);
        v.values[axis] = 1.0;
        v
    }

    fn product(id: &str, title: &str) -> ProductRecord {
        let cfg = FeatureConfig::default();
        ProductRecord {
            id: id.into(),
            category: Category::Other,
            title: title.into(),
            description: String::new(),
            price: 1.0,
            margin: 0.5,
            stock: 10,
            embedding: embed(title, &cfg),
        }
    }

    #[test]
    fn build_index_basics() {
        let ps = vec![product("a", "one"), product("b", "two"), product("c", "three")];
        assert_eq!(build_index(&ps).unwrap().len(), 3);
        let dup = vec![product("a", "one"), product("a", "two")];
        assert!(matches!(build_index(&dup), Err(VectorIndexError::DuplicateId(_))));
        let mut mixed = vec![product("a", "one"), product("b", "two")];
        mixed[1].embedding = EmbeddingVector::zeros(8);
        assert!(matches!(build_index(&mixed), Err(VectorIndexError::DimensionMismatch { .. })));
        assert!(matches!(build_index(&[]), Err(VectorIndexError::EmptyCatalog)));
    }

    #[test]
    fn cosine_contract() {
        let e0 = unit(4, 0);
        let e1 = unit(4, 1);
        assert_eq!(cosine(&e0, &e0).unwrap(), 1.0);
        assert_eq!(cosine(&e0, &e1).unwrap(), 0.0);
        let mut diag = EmbeddingVector::zeros(4);
        let inv_sqrt2 = 1.0 / f64::sqrt(2.0);
        diag.values[0] = inv_sqrt2;
        diag.values[1] = inv_sqrt2;
        assert!((cosine(&e0, &diag).unwrap() - inv_sqrt2).abs() < 1e-15);
        let zero = EmbeddingVector::zeros(4);
        assert_eq!(cosine(&zero, &e0).unwrap(), 0.0);
        assert_eq!(cosine(&zero, &zero).unwrap(), 0.0);
        assert!(matches!(
            cosine(&e0, &EmbeddingVector::zeros(5)),
            Err(VectorIndexError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn top_k_bounds() {
        let ps = vec![product("a", "red shirt"), product("b", "blue shirt"), product("c", "hat")];
        let index = build_index(&ps).unwrap();
        let q = embed("red shirt", &FeatureConfig::default());
        assert!(top_k(&index, &q, 0).unwrap().is_empty());
        let all = top_k(&index, &q, 10).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[0].0, "a");
        for w in all.windows(2) {
            assert!(w[0].1 >= w[1].1);
        }
    }

    #[test]
    fn top_k_matches_full_sort_oracle() {
        let mut rng = SplitMix64::new(7);
        for trial in 0..1000 {
            let n = 1 + (rng.next_below(200) as usize);
            let dim = 8;
            let make = |rng: &mut SplitMix64| {
                let mut v: Vec<f64> = (0..dim).map(|_| rng.next_f64()).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                EmbeddingVector { values: v }
            };
            let products: Vec<(String, EmbeddingVector)> =
                (0..n).map(|i| (format!("p{i}"), make(&mut rng))).collect();
            let index = VectorIndex { entries: products.clone() };
            let q = make(&mut rng);
            let k = (rng.next_below(n as u64 + 2)) as usize;
            let got = top_k(&index, &q, k).unwrap();

            let mut oracle: Vec<(String, f64)> = products
                .iter()
                .map(|(id, e)| (id.clone(), cosine_sim(&q, e)))
                .collect();
            oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            oracle.truncate(k);
            assert_eq!(got, oracle, "trial {trial}");
        }
    }

    #[test]
    fn dedup_greedy_and_idempotent() {
        let cfg = FeatureConfig::default();
        let mk = |id: &str, text: &str| CopyCandidate::new(id, "p1", text, &cfg);
        let cands = vec![
            mk("c1", "Fresh roast coffee beans, rich aroma"),
            mk("c2", "Fresh roast coffee beans, rich aroma"),
            mk("c3", "Waterproof hiking boots for winter"),
            mk("c4", "Bluetooth noise cancelling headphones"),
        ];
        let kept = dedup(&cands, 0.95);
        let ids: Vec<&str> = kept.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, vec!["c1", "c3", "c4"]);
        // Survivor set matches the exhaustive pairwise oracle.
        for (i, a) in kept.iter().enumerate() {
            for b in kept.iter().skip(i + 1) {
                assert!(cosine_sim(&a.embedding, &b.embedding) < 0.95);
            }
        }
        let again = dedup(&kept, 0.95);
        assert_eq!(again.len(), kept.len());
    }

    #[test]
    fn catalog_loads_and_rejects() {
        let cfg = FeatureConfig::default();
        let good = concat!(
            r#"{"id":"p1","category":"fmcg","title":"Coffee","description":"Dark roast","price":9.5,"margin":0.4,"stock":50}"#,
            "\n",
            r#"{"id":"p2","category":"apparel","title":"Jacket","description":"Rain shell","price":120.0,"margin":0.55,"stock":8}"#,
            "\n",
        );
        let ps = load_catalog(good, &cfg).unwrap();
        assert_eq!(ps.len(), 2);
        assert!((ps[0].embedding.l2_norm() - 1.0).abs() < 1e-9);
        assert_eq!(ps[1].category, Category::Apparel);

        let bad_json = "not json\n";
        assert!(matches!(load_catalog(bad_json, &cfg), Err(CatalogError::Parse { line: 1, .. })));

        let bad_margin = r#"{"id":"p1","category":"other","title":"T","description":"D","price":1.0,"margin":1.5,"stock":1}"#;
        assert!(matches!(load_catalog(bad_margin, &cfg), Err(CatalogError::Invalid { line: 1, .. })));

        let dup = concat!(
            r#"{"id":"p1","category":"other","title":"T","description":"D","price":1.0,"margin":0.5,"stock":1}"#,
            "\n",
            r#"{"id":"p1","category":"other","title":"U","description":"E","price":2.0,"margin":0.5,"stock":1}"#,
            "\n",
        );
        assert!(matches!(load_catalog(dup, &cfg), Err(CatalogError::Duplicate { line: 2, .. })));

        // A stored embedding is never trusted, so the field is rejected.
        let with_emb = r#"{"id":"p1","category":"other","title":"T","description":"D","price":1.0,"margin":0.5,"stock":1,"embedding":[1.0]}"#;
        assert!(matches!(load_catalog(with_emb, &cfg), Err(CatalogError::Parse { line: 1, .. })));
    }

    #[test]
    fn category_round_trip() {
        for c in Category::ALL {
            assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
        }
        assert!("gadgets".parse::<Category>().is_err());
    }
}
