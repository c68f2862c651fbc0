//! Funnel metrics, deterministic traffic splitting, and the two
//! significance tests used for arm comparisons. Aggregation is a plain
//! sum per arm, so results never depend on event order.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::fnv1a_64;
use crate::stats;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Control,
    TreatmentA,
    TreatmentB,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Control => "control",
            Arm::TreatmentA => "treatment_a",
            Arm::TreatmentB => "treatment_b",
        }
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "control" => Ok(Arm::Control),
            "treatment_a" => Ok(Arm::TreatmentA),
            "treatment_b" => Ok(Arm::TreatmentB),
            other => Err(format!(
                "unknown arm {other:?} (expected control, treatment_a, or treatment_b)"
            )),
        }
    }
}

/// One session's funnel counts for one arm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub session_id: String,
    pub arm: Arm,
    pub impressions: u64,
    pub clicks: u64,
    pub add_to_carts: u64,
    pub orders: u64,
}

impl SessionEvent {
    /// impressions >= clicks >= add_to_carts >= orders.
    pub fn check_funnel(&self) -> Result<(), MetricsError> {
        let ok = self.clicks <= self.impressions
            && self.add_to_carts <= self.clicks
            && self.orders <= self.add_to_carts;
        if ok {
            Ok(())
        } else {
            Err(MetricsError::InvalidEvent {
                session_id: self.session_id.clone(),
                reason: format!(
                    "funnel must be monotone: impressions {} >= clicks {} >= add_to_carts {} >= orders {}",
                    self.impressions, self.clicks, self.add_to_carts, self.orders
                ),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelCounts {
    pub impressions: u64,
    pub clicks: u64,
    pub add_to_carts: u64,
    pub orders: u64,
}

impl FunnelCounts {
    /// Associative, commutative merge; shards can be aggregated in any
    /// order or in parallel.
    pub fn merge(self, other: FunnelCounts) -> FunnelCounts {
        FunnelCounts {
            impressions: self.impressions + other.impressions,
            clicks: self.clicks + other.clicks,
            add_to_carts: self.add_to_carts + other.add_to_carts,
            orders: self.orders + other.orders,
        }
    }

    pub fn add_event(&mut self, e: &SessionEvent) {
        self.impressions += e.impressions;
        self.clicks += e.clicks;
        self.add_to_carts += e.add_to_carts;
        self.orders += e.orders;
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{metric}: denominator is zero")]
    ZeroDenominator { metric: &'static str },
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("event {session_id:?}: {reason}")]
    InvalidEvent { session_id: String, reason: String },
    #[error("no control arm present")]
    MissingControl,
    #[error("event csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Click-through rate as a percentage: clicks / impressions x 100.
pub fn ctr(c: &FunnelCounts) -> Result<f64, MetricsError> {
    if c.impressions == 0 {
        return Err(MetricsError::ZeroDenominator { metric: "ctr" });
    }
    Ok(c.clicks as f64 / c.impressions as f64 * 100.0)
}

/// Share of clicks that led to an add-to-cart, as a percentage.
pub fn add_to_cart_rate(c: &FunnelCounts) -> Result<f64, MetricsError> {
    if c.clicks == 0 {
        return Err(MetricsError::ZeroDenominator { metric: "add_to_cart_rate" });
    }
    Ok(c.add_to_carts as f64 / c.clicks as f64 * 100.0)
}

/// Conversion rate as a percentage: orders / impressions x 100.
pub fn cvr(c: &FunnelCounts) -> Result<f64, MetricsError> {
    if c.impressions == 0 {
        return Err(MetricsError::ZeroDenominator { metric: "cvr" });
    }
    Ok(c.orders as f64 / c.impressions as f64 * 100.0)
}

/// Stateless hash split: FNV-1a over the session id bytes followed by the
/// 8-byte little-endian seed, mapped to [0, 1), then to the arm whose
/// cumulative weight interval contains it. Same inputs, same arm, on any
/// platform.
pub fn assign_arm(session_id: &str, seed: u64, arms: &[(Arm, f64)]) -> Arm {
    assert!(!arms.is_empty(), "arm list must be nonempty");
    let total: f64 = arms
        .iter()
        .map(|(_, w)| {
            assert!(w.is_finite() && *w > 0.0, "arm weights must be positive");
            w
        })
        .sum();
    let mut bytes = session_id.as_bytes().to_vec();
    bytes.extend_from_slice(&seed.to_le_bytes());
    let u = fnv1a_64(&bytes) as f64 / 18446744073709551616.0; // / 2^64
    let mut cum = 0.0;
    for (arm, w) in arms {
        cum += w / total;
        if u < cum {
            return *arm;
        }
    }
    arms[arms.len() - 1].0
}

/// Pooled two-proportion Z-test. Returns (z, two-sided p). A pooled rate
/// of exactly 0 or 1 has no variance to test against: (0, 1) by
/// convention.
pub fn two_proportion_z(
    s1: u64,
    n1: u64,
    s2: u64,
    n2: u64,
) -> Result<(f64, f64), MetricsError> {
    if n1 == 0 || n2 == 0 {
        return Err(MetricsError::InvalidCounts("sample sizes must be positive".into()));
    }
    if s1 > n1 || s2 > n2 {
        return Err(MetricsError::InvalidCounts(format!(
            "successes exceed trials: {s1}/{n1}, {s2}/{n2}"
        )));
    }
    let pooled = (s1 + s2) as f64 / (n1 + n2) as f64;
    if pooled == 0.0 || pooled == 1.0 {
        return Ok((0.0, 1.0));
    }
    let p1 = s1 as f64 / n1 as f64;
    let p2 = s2 as f64 / n2 as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let z = (p1 - p2) / se;
    Ok((z, stats::normal_two_sided_p(z)))
}

/// Pearson chi-square on a 2x2 table, no continuity correction, so
/// chi2 = z^2 for the matching proportions. Returns (chi2, p). A zero
/// column marginal means no information: (0, 1) by convention.
pub fn chi_square_2x2(s1: u64, f1: u64, s2: u64, f2: u64) -> Result<(f64, f64), MetricsError> {
    chi_square_impl(s1, f1, s2, f2, false)
}

/// Chi-square with the Yates continuity correction. The correction
/// breaks the z^2 identity; it exists for comparison runs only.
pub fn chi_square_2x2_yates(
    s1: u64,
    f1: u64,
    s2: u64,
    f2: u64,
) -> Result<(f64, f64), MetricsError> {
    chi_square_impl(s1, f1, s2, f2, true)
}

fn chi_square_impl(
    s1: u64,
    f1: u64,
    s2: u64,
    f2: u64,
    yates: bool,
) -> Result<(f64, f64), MetricsError> {
    if s1 + f1 == 0 || s2 + f2 == 0 {
        return Err(MetricsError::InvalidCounts("row totals must be positive".into()));
    }
    let (a, b, c, d) = (s1 as f64, f1 as f64, s2 as f64, f2 as f64);
    let n = a + b + c + d;
    let (r1, r2, c1, c2) = (a + b, c + d, a + c, b + d);
    if c1 == 0.0 || c2 == 0.0 {
        return Ok((0.0, 1.0));
    }
    let mut numer = (a * d - b * c).abs();
    if yates {
        numer = (numer - n / 2.0).max(0.0);
    }
    let chi2 = n * numer * numer / (r1 * r2 * c1 * c2);
    Ok((chi2, stats::chi2_1_sf(chi2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Ctr,
    AtcRate,
    Cvr,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Ctr, MetricKind::AtcRate, MetricKind::Cvr];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Ctr => "ctr",
            MetricKind::AtcRate => "atc_rate",
            MetricKind::Cvr => "cvr",
        }
    }

    /// (successes, trials) for this metric's test.
    fn counts(self, c: &FunnelCounts) -> (u64, u64) {
        match self {
            MetricKind::Ctr => (c.clicks, c.impressions),
            MetricKind::AtcRate => (c.add_to_carts, c.clicks),
            MetricKind::Cvr => (c.orders, c.impressions),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub counts: FunnelCounts,
    /// None when the denominator is zero (reported, not fatal).
    pub ctr: Option<f64>,
    pub atc_rate: Option<f64>,
    pub cvr: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub treatment: Arm,
    pub control: Arm,
    pub metric: MetricKind,
    /// Relative lift (treatment - control) / control; None when the
    /// control rate is zero.
    pub lift: Option<f64>,
    pub z: f64,
    pub p_z: f64,
    pub chi2: f64,
    pub p_chi2: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AbReport {
    pub alpha: f64,
    pub arms: Vec<ArmSummary>,
    pub comparisons: Vec<Comparison>,
    /// Metric/arm combinations skipped for zero denominators.
    pub warnings: Vec<String>,
}

/// Aggregates events per arm, computes the funnel rates, and tests every
/// treatment against control on each metric. Significance is judged on
/// the Z-test p-value.
pub fn evaluate_experiment(events: &[SessionEvent], alpha: f64) -> Result<AbReport, MetricsError> {
    evaluate_experiment_with(events, alpha, false)
}

/// [`evaluate_experiment`] with the chi-square continuity correction
/// toggleable.
pub fn evaluate_experiment_with(
    events: &[SessionEvent],
    alpha: f64,
    yates: bool,
) -> Result<AbReport, MetricsError> {
    let mut per_arm: BTreeMap<Arm, FunnelCounts> = BTreeMap::new();
    for e in events {
        e.check_funnel()?;
        per_arm.entry(e.arm).or_default().add_event(e);
    }
    if !per_arm.contains_key(&Arm::Control) {
        return Err(MetricsError::MissingControl);
    }
    let mut warnings = Vec::new();
    let arms: Vec<ArmSummary> = per_arm
        .iter()
        .map(|(&arm, counts)| {
            let mut rate = |name: &str, r: Result<f64, MetricsError>| match r {
                Ok(v) => Some(v),
                Err(_) => {
                    warnings.push(format!("{arm}: {name} undefined (zero denominator)"));
                    None
                }
            };
            ArmSummary {
                arm,
                counts: *counts,
                ctr: rate("ctr", ctr(counts)),
                atc_rate: rate("atc_rate", add_to_cart_rate(counts)),
                cvr: rate("cvr", cvr(counts)),
            }
        })
        .collect();

    let control = per_arm[&Arm::Control];
    let mut comparisons = Vec::new();
    for (&arm, counts) in per_arm.iter().filter(|(&a, _)| a != Arm::Control) {
        for metric in MetricKind::ALL {
            let (s_t, n_t) = metric.counts(counts);
            let (s_c, n_c) = metric.counts(&control);
            if n_t == 0 || n_c == 0 {
                warnings.push(format!(
                    "{} vs control: {} skipped (zero denominator)",
                    arm,
                    metric.as_str()
                ));
                continue;
            }
            let (z, p_z) = two_proportion_z(s_t, n_t, s_c, n_c)?;
            let (chi2, p_chi2) = chi_square_impl(s_t, n_t - s_t, s_c, n_c - s_c, yates)?;
            let rate_t = s_t as f64 / n_t as f64;
            let rate_c = s_c as f64 / n_c as f64;
            let lift = (rate_c > 0.0).then(|| (rate_t - rate_c) / rate_c);
            comparisons.push(Comparison {
                treatment: arm,
                control: Arm::Control,
                metric,
                lift,
                z,
                p_z,
                chi2,
                p_chi2,
                significant: p_z < alpha,
            });
        }
    }
    Ok(AbReport { alpha, arms, comparisons, warnings })
}

pub const EVENT_CSV_HEADER: &str = "session_id,arm,impressions,clicks,add_to_carts,orders";

/// Reads the event log CSV, rejecting unknown arms and funnel violations
/// with their line numbers.
pub fn read_events_csv<R: io::Read>(reader: R) -> Result<Vec<SessionEvent>, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = rdr.headers().map_err(|e| MetricsError::Csv {
            line: 1,
            message: e.to_string(),
        })?;
        let expected: Vec<&str> = EVENT_CSV_HEADER.split(',').collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(MetricsError::Csv {
                line: 1,
                message: format!("expected header {EVENT_CSV_HEADER:?}"),
            });
        }
    }
    let mut events = Vec::new();
    for (idx, row) in rdr.deserialize::<SessionEvent>().enumerate() {
        let line = idx + 2; // header is line 1
        let event = row.map_err(|e| MetricsError::Csv { line, message: e.to_string() })?;
        event.check_funnel().map_err(|e| MetricsError::Csv { line, message: e.to_string() })?;
        events.push(event);
    }
    Ok(events)
}

/// Writes the event log CSV with the fixed header, one row per event.
pub fn write_events_csv<W: io::Write>(
    writer: W,
    events: &[SessionEvent],
) -> Result<(), MetricsError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for e in events {
        wtr.serialize(e).map_err(|e| MetricsError::Csv { line: 0, message: e.to_string() })?;
    }
    wtr.flush()?;
    Ok(())
}
