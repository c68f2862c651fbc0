//! Seeded synthetic-user behavior model and the lambda-sweep runner.
//!
//! Each session owns a counter-derived RNG stream, so simulation output
//! is a pure function of (inputs, seed) regardless of iteration order
//! or parallelism. Funnel stages are sequential Bernoulli draws, so
//! monotonicity holds by construction.

use std::collections::BTreeMap;
use std::io;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{Config, ImpressionPolicy};
use crate::metrics::{self, Arm, FunnelCounts, SessionEvent};
use crate::optimizer::{diversity, sigmoid, CopyCandidate, LogisticModel};
use crate::pipeline::{self, GenerationRequest, PipelineError};
use crate::rng::SplitMix64;
use crate::text_features::EmbeddingVector;
use crate::vector_index::{Category, ProductRecord};

/// Stage coefficients for one user population. Click and order stages
/// see both predicted conversion and novelty (per-candidate diversity);
/// add-to-cart sees conversion only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorModel {
    pub b0_click: f64,
    pub b_conv: f64,
    pub b_nov: f64,
    pub c0_atc: f64,
    pub c_conv: f64,
    pub d0_ord: f64,
    pub d_conv: f64,
    pub d_nov: f64,
}

impl BehaviorModel {
    pub fn is_finite(&self) -> bool {
        [
            self.b0_click,
            self.b_conv,
            self.b_nov,
            self.c0_atc,
            self.c_conv,
            self.d0_ord,
            self.d_conv,
            self.d_nov,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn p_click(&self, p_conv: f64, novelty: f64) -> f64 {
        sigmoid(self.b0_click + self.b_conv * p_conv + self.b_nov * novelty)
    }

    pub fn p_atc(&self, p_conv: f64) -> f64 {
        sigmoid(self.c0_atc + self.c_conv * p_conv)
    }

    pub fn p_order(&self, p_conv: f64, novelty: f64) -> f64 {
        sigmoid(self.d0_ord + self.d_conv * p_conv + self.d_nov * novelty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationProvenance {
    /// What the coefficients were fitted against.
    pub targets: String,
    /// How the search ran (grid bounds, refinement).
    pub search: String,
    /// Sum of squared target errors per entry, from the fit.
    pub achieved_error: IndexMap<String, f64>,
}

/// Versioned, checksummed coefficient file. The checksum covers the
/// models map, so editing any coefficient by hand is detected on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub version: u32,
    pub provenance: CalibrationProvenance,
    pub models: IndexMap<String, BehaviorModel>,
    pub checksum: String,
}

fn models_checksum(models: &IndexMap<String, BehaviorModel>) -> String {
    let canonical = serde_json::to_string(models).expect("coefficient map serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Calibration {
    pub fn new(
        version: u32,
        provenance: CalibrationProvenance,
        models: IndexMap<String, BehaviorModel>,
    ) -> Self {
        let checksum = models_checksum(&models);
        Calibration { version, provenance, models, checksum }
    }

    pub fn from_json(text: &str) -> Result<Self, SimulatorError> {
        let cal: Calibration = serde_json::from_str(text)
            .map_err(|e| SimulatorError::BadCalibration(e.to_string()))?;
        let expected = models_checksum(&cal.models);
        if cal.checksum != expected {
            return Err(SimulatorError::ChecksumMismatch {
                stored: cal.checksum,
                computed: expected,
            });
        }
        for (name, m) in &cal.models {
            if !m.is_finite() {
                return Err(SimulatorError::BadCalibration(format!(
                    "entry {name:?} has non-finite coefficients"
                )));
            }
        }
        Ok(cal)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serializes")
    }

    pub fn get(&self, key: &str) -> Option<&BehaviorModel> {
        self.models.get(key)
    }
}

/// What a sweep ran over: the whole catalog or one category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SweepScope {
    Overall,
    Category(Category),
}

impl SweepScope {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepScope::Overall => "overall",
            SweepScope::Category(c) => c.as_str(),
        }
    }
}

impl std::fmt::Display for SweepScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SweepScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("overall") {
            Ok(SweepScope::Overall)
        } else {
            s.parse::<Category>().map(SweepScope::Category)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub lambda: f64,
    pub category: String,
    /// Set diversity of the served top-K, averaged over the products in
    /// scope.
    pub diversity: f64,
    pub ctr: f64,
    pub cvr: f64,
    pub atc_rate: f64,
    pub n_sessions: u64,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("served set is empty")]
    EmptyServedSet,
    #[error("served candidate {id:?} is missing score fields; rerank before simulating")]
    MissingScores { id: String },
    #[error("no calibration entry for {0:?}")]
    UnknownCategory(String),
    #[error("no products in scope {0:?}")]
    NoProducts(String),
    #[error("calibration checksum mismatch: stored {stored}, computed {computed}")]
    ChecksumMismatch { stored: String, computed: String },
    #[error("bad calibration file: {0}")]
    BadCalibration(String),
    #[error("behavior model has non-finite coefficients")]
    NonFiniteModel,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Index of the candidate shown this session. Uniform, or weighted
/// 1/(rank+1) under rank_weighted.
pub(crate) fn draw_candidate(rng: &mut SplitMix64, n: usize, policy: ImpressionPolicy) -> usize {
    debug_assert!(n > 0);
    match policy {
        ImpressionPolicy::Uniform => rng.next_below(n as u64) as usize,
        ImpressionPolicy::RankWeighted => {
            let total: f64 = (0..n).map(|r| 1.0 / (r + 1) as f64).sum();
            let u = rng.next_f64() * total;
            let mut cum = 0.0;
            for r in 0..n {
                cum += 1.0 / (r + 1) as f64;
                if u < cum {
                    return r;
                }
            }
            n - 1
        }
    }
}

/// Runs `n` sessions against the served list. Session `i` uses RNG
/// stream `(seed, i)`: one draw for the candidate, then one Bernoulli
/// per reached funnel stage. Session ids are
/// `{category}-{arm}-{index}`.
pub fn simulate_sessions(
    served: &[CopyCandidate],
    behavior: &BehaviorModel,
    category: SweepScope,
    arm: Arm,
    n: u64,
    seed: u64,
    policy: ImpressionPolicy,
) -> Result<Vec<SessionEvent>, SimulatorError> {
    simulate_session_block(served, behavior, category, arm, 0..n, seed, policy)
}

/// [`simulate_sessions`] over an explicit index range, so one logical
/// session space can be partitioned across served sets (or workers)
/// without id collisions or re-seeding; session `i` is the same event
/// no matter which block it lands in.
pub fn simulate_session_block(
    served: &[CopyCandidate],
    behavior: &BehaviorModel,
    category: SweepScope,
    arm: Arm,
    sessions: std::ops::Range<u64>,
    seed: u64,
    policy: ImpressionPolicy,
) -> Result<Vec<SessionEvent>, SimulatorError> {
    if served.is_empty() {
        return Err(SimulatorError::EmptyServedSet);
    }
    if !behavior.is_finite() {
        return Err(SimulatorError::NonFiniteModel);
    }
    let scored: Vec<(f64, f64)> = served
        .iter()
        .map(|c| match (c.p_conv, c.diversity_contribution) {
            (Some(p), Some(d)) => Ok((p, d)),
            _ => Err(SimulatorError::MissingScores { id: c.id.clone() }),
        })
        .collect::<Result<_, _>>()?;

    let mut events = Vec::with_capacity(sessions.clone().count());
    for i in sessions {
        let mut rng = SplitMix64::stream(seed, i);
        let (p_conv, novelty) = scored[draw_candidate(&mut rng, scored.len(), policy)];
        let clicked = rng.bernoulli(behavior.p_click(p_conv, novelty));
        let carted = clicked && rng.bernoulli(behavior.p_atc(p_conv));
        let ordered = carted && rng.bernoulli(behavior.p_order(p_conv, novelty));
        let event = SessionEvent {
            session_id: format!("{category}-{arm}-{i:06}"),
            arm,
            impressions: 1,
            clicks: u64::from(clicked),
            add_to_carts: u64::from(carted),
            orders: u64::from(ordered),
        };
        debug_assert!(event.check_funnel().is_ok());
        events.push(event);
    }
    Ok(events)
}

/// Served sets for every product in scope at the config's lambda, with
/// the per-product session ranges that partition `n_sessions` evenly
/// (earlier products absorb the remainder).
pub fn serve_scope(
    products: &[ProductRecord],
    model: &LogisticModel,
    scope: SweepScope,
    n_sessions: u64,
    seed: u64,
    cfg: &Config,
) -> Result<Vec<ServedProduct>, SimulatorError> {
    let in_scope: Vec<&ProductRecord> = products
        .iter()
        .filter(|p| match scope {
            SweepScope::Overall => true,
            SweepScope::Category(c) => p.category == c,
        })
        .collect();
    if in_scope.is_empty() {
        return Err(SimulatorError::NoProducts(scope.as_str().to_string()));
    }
    let total = in_scope.len() as u64;
    let base = n_sessions / total;
    let remainder = n_sessions % total;
    let mut start = 0u64;
    in_scope
        .iter()
        .enumerate()
        .map(|(p_idx, product)| {
            // Generation seed is independent of lambda: the same
            // candidate pool gets reranked differently, which is the
            // whole comparison.
            let gen_seed = SplitMix64::stream(seed, p_idx as u64).next_u64();
            let (served, diversity) = serve_product(product, model, cfg, gen_seed)?;
            let n_p = base + u64::from((p_idx as u64) < remainder);
            let sessions = start..start + n_p;
            start += n_p;
            Ok(ServedProduct { product_id: product.id.clone(), served, diversity, sessions })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ServedProduct {
    pub product_id: String,
    pub served: Vec<CopyCandidate>,
    pub diversity: f64,
    pub sessions: std::ops::Range<u64>,
}

/// Served top-K and its set diversity for one product at the
/// config's lambda. Review flags do not remove candidates from serving;
/// flagged copy goes to human review in the real flow.
fn serve_product(
    product: &ProductRecord,
    model: &LogisticModel,
    cfg: &Config,
    gen_seed: u64,
) -> Result<(Vec<CopyCandidate>, f64), SimulatorError> {
    let req = GenerationRequest {
        product: product.clone(),
        persona: "online shopper".to_string(),
        query: product.title.to_lowercase(),
        n: cfg.generator.max_candidates,
        seed: gen_seed,
    };
    let ranked = pipeline::run_pipeline(&req, model, cfg)?;
    let served: Vec<CopyCandidate> = ranked.into_iter().map(|(c, _)| c).collect();
    let embeddings: Vec<EmbeddingVector> =
        served.iter().map(|c| c.embedding.clone()).collect();
    let d = diversity(&embeddings).map_err(PipelineError::from)?;
    Ok((served, d))
}

/// One sweep point: pipeline per product at this lambda, diversity
/// averaged over products, sessions split evenly across products and
/// pooled into the funnel metrics.
fn sweep_point(
    products: &[ProductRecord],
    model: &LogisticModel,
    behavior: &BehaviorModel,
    lambda: f64,
    scope: SweepScope,
    n_sessions: u64,
    seed: u64,
    cfg: &Config,
) -> Result<TradeoffPoint, SimulatorError> {
    let mut cfg_l = cfg.clone();
    cfg_l.optimizer.lambda = lambda;

    let mut counts = FunnelCounts::default();
    let mut d_sum = 0.0;
    let servings = serve_scope(products, model, scope, n_sessions, seed, &cfg_l)?;
    let n_products = servings.len() as f64;
    for sp in servings {
        d_sum += sp.diversity;
        if sp.sessions.is_empty() {
            continue;
        }
        let events = simulate_session_block(
            &sp.served,
            behavior,
            scope,
            Arm::TreatmentA,
            sp.sessions,
            seed,
            cfg.simulate.impression_policy,
        )?;
        for e in &events {
            counts.add_event(e);
        }
    }

    Ok(TradeoffPoint {
        lambda,
        category: scope.as_str().to_string(),
        diversity: d_sum / n_products,
        ctr: metrics::ctr(&counts).unwrap_or(0.0),
        cvr: metrics::cvr(&counts).unwrap_or(0.0),
        atc_rate: metrics::add_to_cart_rate(&counts).unwrap_or(0.0),
        n_sessions,
        seed,
    })
}

/// Trade-off sweep: one TradeoffPoint per lambda over the products in
/// scope, all other inputs held fixed.
#[allow(clippy::too_many_arguments)]
pub fn lambda_sweep(
    products: &[ProductRecord],
    model: &LogisticModel,
    behavior: &BehaviorModel,
    lambdas: &[f64],
    scope: SweepScope,
    n_sessions: u64,
    seed: u64,
    cfg: &Config,
) -> Result<Vec<TradeoffPoint>, SimulatorError> {
    assert!(!lambdas.is_empty(), "lambda list must be nonempty");
    assert!(n_sessions >= 1, "n_sessions must be at least 1");
    lambdas
        .iter()
        .map(|&l| sweep_point(products, model, behavior, l, scope, n_sessions, seed, cfg))
        .collect()
}

/// Single trade-off point for one category at its calibrated
/// coefficients; lambda defaults to the mid-range 0.6 at the CLI.
#[allow(clippy::too_many_arguments)]
pub fn category_run(
    products: &[ProductRecord],
    model: &LogisticModel,
    calibration: &Calibration,
    category: Category,
    calibration_key: &str,
    lambda: f64,
    n_sessions: u64,
    seed: u64,
    cfg: &Config,
) -> Result<TradeoffPoint, SimulatorError> {
    let behavior = calibration
        .get(calibration_key)
        .ok_or_else(|| SimulatorError::UnknownCategory(calibration_key.to_string()))?;
    let points = lambda_sweep(
        products,
        model,
        behavior,
        &[lambda],
        SweepScope::Category(category),
        n_sessions,
        seed,
        cfg,
    )?;
    Ok(points.into_iter().next().expect("single-lambda sweep yields one point"))
}

/// Writes the trade-off CSV: fixed header, rows sorted by
/// (category, lambda), reals at 6 decimal places. Same points, same
/// bytes.
pub fn emit_tradeoff<W: io::Write>(
    points: &[TradeoffPoint],
    mut w: W,
) -> Result<(), SimulatorError> {
    assert!(!points.is_empty(), "no points to emit");
    let mut sorted: Vec<&TradeoffPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.category.cmp(&b.category).then_with(|| a.lambda.total_cmp(&b.lambda))
    });
    writeln!(w, "lambda,category,diversity,ctr,cvr,atc_rate,n_sessions,seed")?;
    for p in sorted {
        writeln!(
            w,
            "{:.6},{},{:.6},{:.6},{:.6},{:.6},{},{}",
            p.lambda, p.category, p.diversity, p.ctr, p.cvr, p.atc_rate, p.n_sessions, p.seed
        )?;
    }
    Ok(())
}

/// Analytic per-arm expectations for a served set: E[CTR], E[ATC|set],
/// E[CVR] as percentages. This is what the calibration search optimizes
/// against; the Monte Carlo run converges to it.
pub fn expected_rates(
    served_scores: &[(f64, f64)],
    behavior: &BehaviorModel,
) -> (f64, f64, f64) {
    assert!(!served_scores.is_empty());
    let n = served_scores.len() as f64;
    let mut click = 0.0;
    let mut atc = 0.0;
    let mut order = 0.0;
    for &(p_conv, nov) in served_scores {
        let pc = behavior.p_click(p_conv, nov);
        let pa = pc * behavior.p_atc(p_conv);
        let po = pa * behavior.p_order(p_conv, nov);
        click += pc;
        atc += pa;
        order += po;
    }
    let ctr = click / n * 100.0;
    let atc_rate = if click > 0.0 { atc / click * 100.0 } else { 0.0 };
    let cvr = order / n * 100.0;
    (ctr, atc_rate, cvr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScopeTargets {
    pub diversity: f64,
    pub ctr: f64,
    pub cvr: f64,
}

/// Reference trade-off and category operating points the shipped
/// calibration was fitted to reproduce.
pub fn reference_targets() -> BTreeMap<&'static str, Vec<(f64, ScopeTargets)>> {
    let mut t = BTreeMap::new();
    t.insert(
        "overall",
        vec![
            (0.2, ScopeTargets { diversity: 0.42, ctr: 11.3, cvr: 4.7 }),
            (0.8, ScopeTargets { diversity: 0.68, ctr: 9.1, cvr: 3.9 }),
        ],
    );
    t.insert("fmcg", vec![(0.6, ScopeTargets { diversity: 0.64, ctr: 12.1, cvr: 5.2 })]);
    t.insert("apparel", vec![(0.6, ScopeTargets { diversity: 0.59, ctr: 9.7, cvr: 4.0 })]);
    t.insert(
        "electronics",
        vec![(0.6, ScopeTargets { diversity: 0.58, ctr: 8.5, cvr: 3.5 })],
    );
    t
}
