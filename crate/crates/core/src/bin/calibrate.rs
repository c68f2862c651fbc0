//! Offline calibration for the shipped fixture set. Run from the repo
//! root after changing templates, the catalog, or the lexicons:
//!
//! ```text
//! cargo run --release --bin calibrate -- --data crates/core/data
//! ```
//!
//! The tool regenerates training.csv and model.json, prints the served-set
//! landscape (diversity, mean predicted conversion, mean novelty) for
//! every scope and lambda, fits one behavior-model entry per scope so the
//! analytic session expectations hit the reference operating points, and
//! replays the finite simulation to confirm everything lands inside the
//! tolerances the acceptance suite checks.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use indexmap::IndexMap;

use copyrank::config::{self, Config};
use copyrank::optimizer::{sigmoid, train_logistic, LogisticModel};
use copyrank::rng::SplitMix64;
use copyrank::simulator::{
    category_run, lambda_sweep, reference_targets, serve_scope, BehaviorModel, Calibration,
    CalibrationProvenance, ScopeTargets, SweepScope,
};
use copyrank::text_features::FeatureVector;
use copyrank::vector_index::{load_catalog, Category, ProductRecord};

const TRAIN_ROWS: usize = 2500;
const TRAIN_SEED: u64 = 0x636f_7079;
const SWEEP_LAMBDAS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
// Tolerances the acceptance suite enforces on the replayed simulation.
const TOL_DIVERSITY: f64 = 0.03;
const TOL_CTR: f64 = 0.5;
const TOL_CVR: f64 = 0.3;
// Add-to-cart share of clicks pinned at the low-lambda operating point;
// the references constrain only CTR and CVR, so the split between the
// cart and order stages needs one more anchor.
const ATC_ANCHOR: f64 = 62.0;

#[derive(Parser)]
#[command(about = "Fit the shipped behavior calibration against the reference operating points")]
struct Opts {
    /// Fixture directory holding config.toml and catalog.jsonl.
    #[arg(long, default_value = "crates/core/data")]
    data: PathBuf,
    /// Print the served-set landscape and exit without fitting.
    #[arg(long)]
    report: bool,
    /// Dump per-family pool structure for one product per category.
    #[arg(long)]
    pool: bool,
    /// Skip the finite-simulation confirmation pass.
    #[arg(long)]
    no_verify: bool,
}

fn main() -> ExitCode {
    match run(Opts::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(opts: Opts) -> Result<(), String> {
    let cfg = config::load_config(&opts.data.join("config.toml")).map_err(|e| e.to_string())?;

    let (csv, samples) = synth_training(TRAIN_ROWS, TRAIN_SEED);
    let csv_path = opts.data.join("training.csv");
    fs::write(&csv_path, csv).map_err(|e| format!("write {}: {e}", csv_path.display()))?;
    let model = train_logistic(&samples, &cfg.optimizer.train).map_err(|e| e.to_string())?;
    let model_path = opts.data.join("model.json");
    fs::write(&model_path, model.to_json())
        .map_err(|e| format!("write {}: {e}", model_path.display()))?;
    println!(
        "trained conversion model: {} rows, {} positive, final loss {:.6}",
        model.trained_on.n_samples, model.trained_on.n_positives, model.trained_on.final_loss
    );
    print_theta(&model);

    let catalog_path = opts.data.join("catalog.jsonl");
    let text = fs::read_to_string(&catalog_path)
        .map_err(|e| format!("read {}: {e}", catalog_path.display()))?;
    let products = load_catalog(&text, &cfg.feature).map_err(|e| e.to_string())?;

    if opts.pool {
        return pool_dump(&products, &model, &cfg);
    }

    let scopes = [
        SweepScope::Overall,
        SweepScope::Category(Category::Fmcg),
        SweepScope::Category(Category::Apparel),
        SweepScope::Category(Category::Electronics),
    ];

    println!("\nserved-set landscape ({} products, uniform impressions):", products.len());
    println!("{:<12} {:>6} {:>7} {:>8} {:>8} {:>9}", "scope", "lambda", "D", "mean_p", "mean_nov", "served");
    let mut serves: IndexMap<(String, u64), ScopeServe> = IndexMap::new();
    for &scope in &scopes {
        for &lambda in &SWEEP_LAMBDAS {
            let s = serve_landscape(&products, &model, &cfg, scope, lambda)?;
            println!(
                "{:<12} {:>6.1} {:>7.4} {:>8.4} {:>8.4} {:>6}..{}",
                scope.as_str(),
                lambda,
                s.mean_diversity,
                s.mean_p,
                s.mean_nov,
                s.min_served,
                s.max_served,
            );
            serves.insert((scope.as_str().to_string(), key(lambda)), s);
        }
        println!();
    }
    if opts.report {
        return Ok(());
    }

    let targets = reference_targets();
    let overall02 = &serves[&("overall".to_string(), key(0.2))];
    let overall08 = &serves[&("overall".to_string(), key(0.8))];
    let [t02, t08] = overall_pair(&targets)?;

    let overall = fit_overall(overall02, overall08, t02, t08)?;
    let mut models: IndexMap<String, BehaviorModel> = IndexMap::new();
    let mut achieved: IndexMap<String, f64> = IndexMap::new();
    let e = fit_error(&[(overall02, t02), (overall08, t08)], &overall);
    println!("fitted overall entry, squared target error {e:.3e}");
    print_expected_curve(&serves, &overall);
    models.insert("overall".to_string(), overall);
    achieved.insert("overall".to_string(), e);

    for name in ["fmcg", "apparel", "electronics"] {
        let serve = &serves[&(name.to_string(), key(0.6))];
        let t = single_target(&targets, name)?;
        let fitted = fit_category(serve, t, &overall)?;
        let e = fit_error(&[(serve, t)], &fitted);
        println!("fitted {name} entry, squared target error {e:.3e}");
        models.insert(name.to_string(), fitted);
        achieved.insert(name.to_string(), e);
    }

    let provenance = CalibrationProvenance {
        targets: "reference operating points: overall CTR/CVR at lambda 0.2 and 0.8, \
                  per-category CTR/CVR at lambda 0.6"
            .to_string(),
        search: format!(
            "nested bisection on analytic expected rates over the served sets; \
             fixed shape coefficients b_nov=-1.4, c_conv=0, d_conv=0, \
             add-to-cart share anchored at {ATC_ANCHOR}% of clicks at the \
             low-lambda point; category entries reuse the overall slopes and \
             refit both intercepts"
        ),
        achieved_error: achieved,
    };
    let calibration = Calibration::new(1, provenance, models);
    let cal_path = opts.data.join("calibration.json");
    fs::write(&cal_path, calibration.to_json())
        .map_err(|e| format!("write {}: {e}", cal_path.display()))?;
    println!("\nwrote {}, {} and {}", cal_path.display(), model_path.display(), csv_path.display());

    if opts.no_verify {
        return Ok(());
    }
    verify(&products, &model, &calibration, &cfg, &targets)
}

fn key(lambda: f64) -> u64 {
    lambda.to_bits()
}

fn print_theta(model: &LogisticModel) {
    let terms: Vec<String> =
        model.theta.iter().map(|(name, v)| format!("{name}={v:.4}")).collect();
    println!("  theta: {} intercept={:.4}", terms.join(" "), model.intercept);
}

// ---------------------------------------------------------------------
// Synthetic training corpus.

/// Rounds to the 6 decimal places the CSV stores, so training on the
/// in-memory values and re-training on the parsed file give identical
/// models.
fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Features drawn uniformly over the ranges real candidate copy lands
/// in; labels are Bernoulli draws from a fixed logistic surface over
/// those features.
fn synth_training(rows: usize, seed: u64) -> (String, Vec<(FeatureVector, bool)>) {
    let mut rng = SplitMix64::new(seed);
    let mut csv = String::from("keyword_strength,cta_density,sentiment,readability,label\n");
    let mut samples = Vec::with_capacity(rows);
    for _ in 0..rows {
        let kw = round6(1.3 * rng.next_f64());
        let cta = round6(0.5 * rng.next_f64());
        let sent = round6(-0.1 + 0.5 * rng.next_f64());
        let read = round6(55.0 + 35.0 * rng.next_f64());
        let z = -2.6 + 2.2 * kw + 3.0 * cta + 0.8 * sent + 0.005 * read;
        let label = rng.bernoulli(sigmoid(z));
        csv.push_str(&format!("{kw:.6},{cta:.6},{sent:.6},{read:.6},{}\n", u8::from(label)));
        let features = FeatureVector {
            keyword_strength: kw,
            cta_density: cta,
            sentiment: sent,
            readability: read,
            extra: IndexMap::new(),
        };
        samples.push((features, label));
    }
    (csv, samples)
}

// ---------------------------------------------------------------------
// Pool diagnostics.

fn cos(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Prints the generated pool's family structure for the first product of
/// each category: candidate counts, conversion levels, and the mean
/// cosine within and across the conversion/creative split (classified by
/// keyword strength).
fn pool_dump(
    products: &[ProductRecord],
    model: &LogisticModel,
    cfg: &Config,
) -> Result<(), String> {
    use copyrank::optimizer::predict_conversion;
    use copyrank::pipeline::{template_generate, GenerationRequest};

    for cat in [Category::Fmcg, Category::Apparel, Category::Electronics] {
        let product = products
            .iter()
            .find(|p| p.category == cat)
            .ok_or_else(|| format!("no {cat} product"))?;
        let gen_seed = SplitMix64::stream(cfg.simulate.seed, 0).next_u64();
        let req = GenerationRequest {
            product: product.clone(),
            persona: "online shopper".to_string(),
            query: product.title.to_lowercase(),
            n: cfg.generator.max_candidates,
            seed: gen_seed,
        };
        let pool =
            template_generate(&req, &cfg.generator.templates, &cfg.feature).map_err(|e| e.to_string())?;
        let conv: Vec<usize> = (0..pool.len())
            .filter(|&i| pool[i].features.keyword_strength > 0.15)
            .collect();
        let crea: Vec<usize> =
            (0..pool.len()).filter(|&i| pool[i].features.keyword_strength <= 0.15).collect();
        let p_of = |idx: &[usize]| -> f64 {
            let sum: f64 = idx
                .iter()
                .map(|&i| predict_conversion(model, &pool[i].features).unwrap_or(f64::NAN))
                .sum();
            sum / idx.len().max(1) as f64
        };
        let pair_cos = |a: &[usize], b: &[usize], same: bool| -> f64 {
            let (mut sum, mut n) = (0.0, 0u32);
            for &i in a {
                for &j in b {
                    if same && j <= i {
                        continue;
                    }
                    sum += cos(&pool[i].embedding.values, &pool[j].embedding.values);
                    n += 1;
                }
            }
            if n == 0 { f64::NAN } else { sum / n as f64 }
        };
        println!(
            "{} ({}): pool {} = {} conv + {} creative",
            product.id,
            product.title,
            pool.len(),
            conv.len(),
            crea.len()
        );
        println!(
            "  mean p: conv {:.3}, creative {:.3};  cos: conv-conv {:.3}, crea-crea {:.3}, cross {:.3}",
            p_of(&conv),
            p_of(&crea),
            pair_cos(&conv, &conv, true),
            pair_cos(&crea, &crea, true),
            pair_cos(&conv, &crea, false),
        );
    }

    println!("\nserved conv count per product (lambda 0.2 / 0.3 / 0.4 / 0.5 / 0.6 / 0.8):");
    let lambdas = [0.2, 0.3, 0.4, 0.5, 0.6, 0.8];
    let mut table: IndexMap<String, Vec<(usize, f64)>> = IndexMap::new();
    for &lambda in &lambdas {
        let mut run_cfg = cfg.clone();
        run_cfg.optimizer.lambda = lambda;
        let served = copyrank::simulator::serve_scope(
            products,
            model,
            copyrank::simulator::SweepScope::Overall,
            100,
            cfg.simulate.seed,
            &run_cfg,
        )
        .map_err(|e| e.to_string())?;
        for sp in &served {
            let convs: Vec<f64> = sp
                .served
                .iter()
                .filter(|c| c.features.keyword_strength > 0.15)
                .filter_map(|c| c.p_conv)
                .collect();
            let mean_p = sp.served.iter().filter_map(|c| c.p_conv).sum::<f64>()
                / sp.served.len().max(1) as f64;
            table.entry(sp.product_id.clone()).or_default().push((convs.len(), mean_p));
        }
    }
    for (id, row) in &table {
        let cells: Vec<String> =
            row.iter().map(|(k, p)| format!("{k:2} {p:.3}")).collect();
        println!("  {id:10} {}", cells.join(" | "));
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Served-set landscape.

/// Per-product served scores plus session weights for one (scope,
/// lambda) cell. Weights follow the even session split the simulator
/// uses, so pooled expectations match what it converges to.
struct ScopeServe {
    scores: Vec<Vec<(f64, f64)>>,
    weights: Vec<f64>,
    mean_diversity: f64,
    mean_p: f64,
    mean_nov: f64,
    min_served: usize,
    max_served: usize,
}

fn serve_landscape(
    products: &[ProductRecord],
    model: &LogisticModel,
    cfg: &Config,
    scope: SweepScope,
    lambda: f64,
) -> Result<ScopeServe, String> {
    let mut cfg_l = cfg.clone();
    cfg_l.optimizer.lambda = lambda;
    let servings = serve_scope(
        products,
        model,
        scope,
        cfg.simulate.n_sessions,
        cfg.simulate.seed,
        &cfg_l,
    )
    .map_err(|e| e.to_string())?;

    let total: u64 = servings.iter().map(|s| s.sessions.end - s.sessions.start).sum();
    let mut scores = Vec::new();
    let mut weights = Vec::new();
    let mut d_sum = 0.0;
    let (mut p_sum, mut nov_sum, mut n_cand) = (0.0, 0.0, 0usize);
    let (mut min_served, mut max_served) = (usize::MAX, 0usize);
    for sp in &servings {
        let set: Vec<(f64, f64)> = sp
            .served
            .iter()
            .map(|c| {
                let p = c.p_conv.expect("pipeline scored p_conv");
                let nov = c.diversity_contribution.expect("pipeline scored novelty");
                (p, nov)
            })
            .collect();
        min_served = min_served.min(set.len());
        max_served = max_served.max(set.len());
        for &(p, nov) in &set {
            p_sum += p;
            nov_sum += nov;
            n_cand += 1;
        }
        d_sum += sp.diversity;
        weights.push((sp.sessions.end - sp.sessions.start) as f64 / total as f64);
        scores.push(set);
    }
    let n_products = servings.len() as f64;
    Ok(ScopeServe {
        scores,
        weights,
        mean_diversity: d_sum / n_products,
        mean_p: p_sum / n_cand as f64,
        mean_nov: nov_sum / n_cand as f64,
        min_served,
        max_served,
    })
}

/// Session-weighted analytic funnel expectations, in percent. Mirrors
/// the uniform impression draw of the simulator.
fn pooled(s: &ScopeServe, b: &BehaviorModel) -> (f64, f64, f64) {
    let (mut click, mut atc, mut order) = (0.0, 0.0, 0.0);
    for (set, w) in s.scores.iter().zip(&s.weights) {
        let n = set.len() as f64;
        for &(p, nov) in set {
            let pc = b.p_click(p, nov);
            let pa = pc * b.p_atc(p);
            let po = pa * b.p_order(p, nov);
            click += w * pc / n;
            atc += w * pa / n;
            order += w * po / n;
        }
    }
    let ctr = click * 100.0;
    let atc_rate = if click > 0.0 { atc / click * 100.0 } else { 0.0 };
    let cvr = order * 100.0;
    (ctr, atc_rate, cvr)
}

// ---------------------------------------------------------------------
// Coefficient search.

/// Bisection to full float precision. `f` must be monotone over the
/// bracket; a missing sign change reports the achieved endpoints so the
/// fixtures can be retuned.
fn bisect(
    what: &str,
    mut lo: f64,
    mut hi: f64,
    target: f64,
    mut f: impl FnMut(f64) -> f64,
) -> Result<f64, String> {
    let flo = f(lo) - target;
    let fhi = f(hi) - target;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(format!(
            "{what}: target {target:.4} unreachable in [{lo}, {hi}] \
             (achieves {:.4}..{:.4})",
            flo + target,
            fhi + target
        ));
    }
    let rising = fhi > flo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid) - target;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn overall_pair(
    targets: &std::collections::BTreeMap<&'static str, Vec<(f64, ScopeTargets)>>,
) -> Result<[ScopeTargets; 2], String> {
    let pts = targets.get("overall").ok_or("no overall reference targets")?;
    let lo = pts.iter().find(|(l, _)| *l == 0.2).ok_or("no overall target at 0.2")?;
    let hi = pts.iter().find(|(l, _)| *l == 0.8).ok_or("no overall target at 0.8")?;
    Ok([lo.1, hi.1])
}

fn single_target(
    targets: &std::collections::BTreeMap<&'static str, Vec<(f64, ScopeTargets)>>,
    name: &str,
) -> Result<ScopeTargets, String> {
    targets
        .get(name)
        .and_then(|pts| pts.iter().find(|(l, _)| *l == 0.6))
        .map(|(_, t)| *t)
        .ok_or_else(|| format!("no {name} reference target at 0.6"))
}

/// Fits the overall entry: intercepts pin the low-lambda point, slopes
/// pin the spread to the high-lambda point.
fn fit_overall(
    s02: &ScopeServe,
    s08: &ScopeServe,
    t02: ScopeTargets,
    t08: ScopeTargets,
) -> Result<BehaviorModel, String> {
    let base = BehaviorModel {
        b0_click: 0.0,
        b_conv: 0.0,
        b_nov: -1.4,
        c0_atc: 0.0,
        c_conv: 0.0,
        d0_ord: 0.0,
        d_conv: 0.0,
        d_nov: 0.0,
    };

    // Click stage: inner bisection pins CTR at lambda 0.2 through the
    // intercept, outer bisection moves the conversion slope until the
    // lambda 0.8 point lands.
    let solve_b0 = |b_conv: f64| -> Result<f64, String> {
        bisect("b0_click", -40.0, 10.0, t02.ctr, |b0| {
            pooled(s02, &BehaviorModel { b0_click: b0, b_conv, ..base }).0
        })
    };
    let b_conv = bisect("b_conv", 0.0, 30.0, t08.ctr, |bc| {
        let b0 = solve_b0(bc).unwrap_or(f64::NAN);
        pooled(s08, &BehaviorModel { b0_click: b0, b_conv: bc, ..base }).0
    })?;
    let b0_click = solve_b0(b_conv)?;
    let clicked = BehaviorModel { b0_click, b_conv, ..base };

    // Cart stage: one anchor, one intercept.
    let c0_atc = bisect("c0_atc", -10.0, 8.0, ATC_ANCHOR, |c0| {
        pooled(s02, &BehaviorModel { c0_atc: c0, ..clicked }).1
    })?;
    let carted = BehaviorModel { c0_atc, ..clicked };

    // Order stage: the reference CVR/CTR ratio rises slightly with
    // lambda, so the spread carrier is novelty, not predicted
    // conversion. Inner bisection pins CVR at lambda 0.2 through the
    // intercept, outer moves the novelty slope until 0.8 lands.
    let solve_d0 = |d_nov: f64| -> Result<f64, String> {
        bisect("d0_ord", -40.0, 10.0, t02.cvr, |d0| {
            pooled(s02, &BehaviorModel { d0_ord: d0, d_nov, ..carted }).2
        })
    };
    let d_nov = bisect("d_nov", -4.0, 8.0, t08.cvr, |dn| {
        let d0 = solve_d0(dn).unwrap_or(f64::NAN);
        pooled(s08, &BehaviorModel { d0_ord: d0, d_nov: dn, ..carted }).2
    })?;
    let d0_ord = solve_d0(d_nov)?;
    Ok(BehaviorModel { d0_ord, d_nov, ..carted })
}

/// Category entries keep the overall slopes and refit the click and
/// order intercepts against the category's single operating point.
fn fit_category(
    serve: &ScopeServe,
    t: ScopeTargets,
    overall: &BehaviorModel,
) -> Result<BehaviorModel, String> {
    let b0_click = bisect("b0_click", -40.0, 10.0, t.ctr, |b0| {
        pooled(serve, &BehaviorModel { b0_click: b0, ..*overall }).0
    })?;
    let clicked = BehaviorModel { b0_click, ..*overall };
    let d0_ord = bisect("d0_ord", -40.0, 10.0, t.cvr, |d0| {
        pooled(serve, &BehaviorModel { d0_ord: d0, ..clicked }).2
    })?;
    Ok(BehaviorModel { d0_ord, ..clicked })
}

fn fit_error(cells: &[(&ScopeServe, ScopeTargets)], b: &BehaviorModel) -> f64 {
    cells
        .iter()
        .map(|(s, t)| {
            let (ctr, _, cvr) = pooled(s, b);
            (ctr - t.ctr).powi(2) + (cvr - t.cvr).powi(2)
        })
        .sum()
}

fn print_expected_curve(serves: &IndexMap<(String, u64), ScopeServe>, b: &BehaviorModel) {
    println!("  expected overall curve:");
    for &lambda in &SWEEP_LAMBDAS {
        let s = &serves[&("overall".to_string(), key(lambda))];
        let (ctr, atc, cvr) = pooled(s, b);
        println!(
            "    lambda {lambda:.1}: D {:.4}  CTR {ctr:.3}%  ATC {atc:.2}%  CVR {cvr:.3}%",
            s.mean_diversity
        );
    }
}

// ---------------------------------------------------------------------
// Finite-simulation confirmation.

fn check_line(name: &str, what: &str, got: f64, want: f64, tol: f64) -> bool {
    let ok = (got - want).abs() <= tol;
    println!(
        "  {:<24} {:>8.4} target {:>7.3} +-{tol:<5} {}",
        format!("{name}/{what}"),
        got,
        want,
        if ok { "ok" } else { "MISS" }
    );
    ok
}

fn check_trend(name: &str, values: [f64; 4], increasing: bool) -> bool {
    let ok = values.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] });
    println!("  {:<24} {:?} {}", name, values, if ok { "ok" } else { "NOT MONOTONE" });
    ok
}

fn verify(
    products: &[ProductRecord],
    model: &LogisticModel,
    calibration: &Calibration,
    cfg: &Config,
    targets: &std::collections::BTreeMap<&'static str, Vec<(f64, ScopeTargets)>>,
) -> Result<(), String> {
    let mut failures = 0usize;
    let check = |name: &str, what: &str, got: f64, want: f64, tol: f64| -> usize {
        usize::from(!check_line(name, what, got, want, tol))
    };

    println!("\nfinite replay at seed {}, {} sessions per point:", cfg.simulate.seed, cfg.simulate.n_sessions);
    let behavior = calibration.get("overall").ok_or("calibration lost overall entry")?;
    let points = lambda_sweep(
        products,
        model,
        behavior,
        &SWEEP_LAMBDAS,
        SweepScope::Overall,
        cfg.simulate.n_sessions,
        cfg.simulate.seed,
        cfg,
    )
    .map_err(|e| e.to_string())?;
    let [t02, t08] = overall_pair(targets)?;
    for (p, t) in [(&points[0], t02), (&points[3], t08)] {
        let name = format!("overall@{:.1}", p.lambda);
        failures += check(&name, "D", p.diversity, t.diversity, TOL_DIVERSITY);
        failures += check(&name, "ctr", p.ctr, t.ctr, TOL_CTR);
        failures += check(&name, "cvr", p.cvr, t.cvr, TOL_CVR);
    }
    let d_ok = check_trend("D increasing", [points[0].diversity, points[1].diversity, points[2].diversity, points[3].diversity], true);
    let ctr_ok = check_trend("CTR decreasing", [points[0].ctr, points[1].ctr, points[2].ctr, points[3].ctr], false);
    let cvr_ok = check_trend("CVR decreasing", [points[0].cvr, points[1].cvr, points[2].cvr, points[3].cvr], false);
    failures += [d_ok, ctr_ok, cvr_ok].iter().filter(|ok| !**ok).count();

    for (cat, name) in [
        (Category::Fmcg, "fmcg"),
        (Category::Apparel, "apparel"),
        (Category::Electronics, "electronics"),
    ] {
        let t = single_target(targets, name)?;
        let p = category_run(
            products,
            model,
            calibration,
            cat,
            name,
            0.6,
            cfg.simulate.n_sessions,
            cfg.simulate.seed,
            cfg,
        )
        .map_err(|e| e.to_string())?;
        failures += check(name, "D", p.diversity, t.diversity, TOL_DIVERSITY);
        failures += check(name, "ctr", p.ctr, t.ctr, TOL_CTR);
        failures += check(name, "cvr", p.cvr, t.cvr, TOL_CVR);
    }
    let fmcg = category_run(
        products,
        model,
        calibration,
        Category::Fmcg,
        "fmcg",
        0.6,
        cfg.simulate.n_sessions,
        cfg.simulate.seed,
        cfg,
    )
    .map_err(|e| e.to_string())?;
    let lift = (fmcg.ctr - 8.9) / 8.9 * 100.0;
    let lift_ok = lift >= 30.0;
    if !lift_ok {
        failures += 1;
    }
    println!("  {:<24} {:>8.2}% (need >= 30%) {}", "fmcg ctr lift", lift, if lift_ok { "ok" } else { "MISS" });

    if failures > 0 {
        return Err(format!("{failures} confirmation check(s) missed"));
    }
    println!("all confirmation checks passed");
    Ok(())
}
