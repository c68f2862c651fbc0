//! copyrank CLI: thin wrappers over the library operations. Every
//! command is deterministic; commands that sample take an explicit
//! --seed and nothing ever reads the clock.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use copyrank::config::{self, Config};
use copyrank::metrics::{self, AbReport, Arm};
use copyrank::optimizer::{train_logistic, CopyCandidate, LogisticModel};
use copyrank::pipeline::{self, GenerationRequest, ReviewVerdict};
use copyrank::simulator::{self, Calibration, SweepScope};
use copyrank::text_features::FeatureVector;
use copyrank::vector_index::{load_catalog, Category, ProductRecord};

#[derive(Parser)]
#[command(
    name = "copyrank",
    version,
    about = "Score, rerank, and evaluate marketing copy balancing diversity against conversion"
)]
struct Cli {
    /// Config file; referenced data files resolve relative to it.
    #[arg(short, long, global = true, default_value = "config.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProductArgs {
    /// Product catalog, JSON-Lines.
    #[arg(long)]
    catalog: PathBuf,
    /// Product id within the catalog.
    #[arg(long)]
    product: String,
    #[arg(long, default_value = "online shopper")]
    persona: String,
    /// Search query context; defaults to the product title.
    #[arg(long)]
    query: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate copy candidates from the configured templates (JSONL).
    Generate {
        #[command(flatten)]
        product: ProductArgs,
        /// Candidates to generate.
        #[arg(short, default_value_t = 8)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline and emit ranked, reviewed candidates
    /// (JSONL).
    Rank {
        #[command(flatten)]
        product: ProductArgs,
        /// Trained model JSON.
        #[arg(long)]
        model: PathBuf,
        /// Reward weight on diversity; overrides config and --category.
        #[arg(long)]
        lambda: Option<f64>,
        /// Serve this many candidates.
        #[arg(long)]
        k: Option<usize>,
        /// Use this category's recommended lambda.
        #[arg(long)]
        category: Option<Category>,
        /// Candidates to generate before filtering.
        #[arg(short)]
        n: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the conversion model from a labeled CSV and write model
    /// JSON.
    Train {
        /// CSV: keyword_strength,cta_density,sentiment,readability,label
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate an experiment event log: report JSON plus a summary
    /// table.
    Abtest {
        /// Event CSV: session_id,arm,impressions,clicks,add_to_carts,orders
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Apply the chi-square continuity correction.
        #[arg(long)]
        yates: bool,
        /// Write the JSON report here; the table always prints.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate user sessions over the served candidates (event CSV).
    Simulate {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Scope: a category or "overall".
        #[arg(long, default_value = "overall")]
        category: SweepScope,
        /// Overrides the scope's recommended lambda.
        #[arg(long)]
        lambda: Option<f64>,
        /// Arm recorded on the generated events.
        #[arg(long, default_value = "treatment_a")]
        arm: Arm,
        /// Behavior calibration entry; defaults to the scope's.
        #[arg(long)]
        behavior: Option<String>,
        #[arg(long)]
        sessions: Option<u64>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lambda trade-off sweep (CSV: diversity, CTR, CVR per lambda).
    Sweep {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated lambda values.
        #[arg(long, default_value = "0.2,0.4,0.6,0.8")]
        lambdas: String,
        /// Scope: a category or "overall".
        #[arg(long, default_value = "overall")]
        category: SweepScope,
        #[arg(long)]
        sessions: Option<u64>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Review candidates from a JSONL file against the configured
    /// rules.
    Review {
        /// JSONL with {id, product_id, text} per line.
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        category: Category,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn fail(e: impl Display) -> String {
    e.to_string()
}

fn load_cfg(path: &Path) -> Result<Config, String> {
    config::load_config(path).map_err(fail)
}

fn read_catalog(path: &Path, cfg: &Config) -> Result<Vec<ProductRecord>, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read catalog {}: {e}", path.display()))?;
    load_catalog(&text, &cfg.feature).map_err(fail)
}

fn find_product(products: &[ProductRecord], id: &str) -> Result<ProductRecord, String> {
    products
        .iter()
        .find(|p| p.id == id)
        .cloned()
        .ok_or_else(|| format!("product {id:?} not in catalog"))
}

fn read_model(path: &Path) -> Result<LogisticModel, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read model {}: {e}", path.display()))?;
    LogisticModel::from_json(&text).map_err(|e| format!("bad model file: {e}"))
}

fn read_calibration(cfg: &Config) -> Result<Calibration, String> {
    let path = cfg
        .simulate
        .calibration_path
        .as_ref()
        .ok_or("no calibration file configured (simulate.calibration)")?;
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read calibration {}: {e}", path.display()))?;
    Calibration::from_json(&text).map_err(fail)
}

/// Writes to the path, or stdout when none is given.
fn emit(out: Option<&Path>, content: &str) -> Result<(), String> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{content}");
            std::io::stdout().flush().map_err(fail)
        }
    }
}

/// Calibration entry name for a scope: the category's configured key,
/// or the sweep key for overall runs.
fn scope_calibration_key(cfg: &Config, scope: SweepScope) -> String {
    match scope {
        SweepScope::Overall => cfg.simulate.sweep_calibration.clone(),
        SweepScope::Category(c) => cfg
            .categories
            .get(&c)
            .map(|cc| cc.calibration.clone())
            .unwrap_or_else(|| c.as_str().to_string()),
    }
}

fn scope_lambda(cfg: &Config, scope: SweepScope, flag: Option<f64>) -> f64 {
    flag.unwrap_or_else(|| match scope {
        SweepScope::Overall => cfg.optimizer.lambda,
        SweepScope::Category(c) => cfg.lambda_for(Some(c)),
    })
}

#[derive(Serialize)]
struct RankedLine<'a> {
    rank: usize,
    #[serde(flatten)]
    candidate: &'a CopyCandidate,
    verdict: &'a ReviewVerdict,
}

#[derive(Deserialize)]
struct CandidateLine {
    id: String,
    product_id: String,
    text: String,
}

fn run(cli: Cli) -> Result<(), String> {
    let cfg = load_cfg(&cli.config)?;
    match cli.command {
        Command::Generate { product, n, seed, out } => {
            let products = read_catalog(&product.catalog, &cfg)?;
            let record = find_product(&products, &product.product)?;
            let query = product.query.unwrap_or_else(|| record.title.to_lowercase());
            let req = GenerationRequest {
                product: record,
                persona: product.persona,
                query,
                n,
                seed,
            };
            let candidates =
                pipeline::template_generate(&req, &cfg.generator.templates, &cfg.feature)
                    .map_err(fail)?;
            let mut buf = String::new();
            for c in &candidates {
                buf.push_str(&serde_json::to_string(c).map_err(fail)?);
                buf.push('\n');
            }
            emit(out.as_deref(), &buf)
        }
        Command::Rank { product, model, lambda, k, category, n, seed, out } => {
            let mut cfg = cfg;
            let products = read_catalog(&product.catalog, &cfg)?;
            let record = find_product(&products, &product.product)?;
            let model = read_model(&model)?;
            cfg.optimizer.lambda = lambda.unwrap_or_else(|| cfg.lambda_for(category));
            if let Some(k) = k {
                cfg.optimizer.top_k = k;
            }
            let query = product.query.unwrap_or_else(|| record.title.to_lowercase());
            let req = GenerationRequest {
                product: record,
                persona: product.persona,
                query,
                n: n.unwrap_or(cfg.generator.max_candidates),
                seed,
            };
            let ranked = pipeline::run_pipeline(&req, &model, &cfg).map_err(fail)?;
            let mut buf = String::new();
            for (rank, (candidate, verdict)) in ranked.iter().enumerate() {
                let line = RankedLine { rank: rank + 1, candidate, verdict };
                buf.push_str(&serde_json::to_string(&line).map_err(fail)?);
                buf.push('\n');
            }
            emit(out.as_deref(), &buf)
        }
        Command::Train { data, out } => {
            let samples = read_training_csv(&data)?;
            let model = train_logistic(&samples, &cfg.optimizer.train).map_err(fail)?;
            fs::write(&out, model.to_json())
                .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
            println!(
                "trained on {} samples ({} positive), final loss {:.6}, wrote {}",
                model.trained_on.n_samples,
                model.trained_on.n_positives,
                model.trained_on.final_loss,
                out.display()
            );
            Ok(())
        }
        Command::Abtest { events, alpha, yates, out } => {
            let file = fs::File::open(&events)
                .map_err(|e| format!("cannot read events {}: {e}", events.display()))?;
            let events = metrics::read_events_csv(file).map_err(fail)?;
            let report =
                metrics::evaluate_experiment_with(&events, alpha, yates).map_err(fail)?;
            print_report_table(&report);
            if let Some(path) = out {
                let json = serde_json::to_string_pretty(&report).map_err(fail)?;
                fs::write(&path, json)
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            }
            Ok(())
        }
        Command::Simulate { catalog, model, category, lambda, arm, behavior, sessions, seed, out } => {
            let mut cfg = cfg;
            let products = read_catalog(&catalog, &cfg)?;
            let model = read_model(&model)?;
            let calibration = read_calibration(&cfg)?;
            let key = behavior.unwrap_or_else(|| scope_calibration_key(&cfg, category));
            let coeffs = *calibration
                .get(&key)
                .ok_or_else(|| format!("no calibration entry {key:?}"))?;
            cfg.optimizer.lambda = scope_lambda(&cfg, category, lambda);
            let n_sessions = sessions.unwrap_or(cfg.simulate.n_sessions);
            let servings =
                simulator::serve_scope(&products, &model, category, n_sessions, seed, &cfg)
                    .map_err(fail)?;
            let mut events = Vec::new();
            for sp in servings {
                events.extend(
                    simulator::simulate_session_block(
                        &sp.served,
                        &coeffs,
                        category,
                        arm,
                        sp.sessions,
                        seed,
                        cfg.simulate.impression_policy,
                    )
                    .map_err(fail)?,
                );
            }
            let mut buf = Vec::new();
            metrics::write_events_csv(&mut buf, &events).map_err(fail)?;
            emit(out.as_deref(), &String::from_utf8(buf).map_err(fail)?)
        }
        Command::Sweep { catalog, model, lambdas, category, sessions, seed, out } => {
            let products = read_catalog(&catalog, &cfg)?;
            let model = read_model(&model)?;
            let calibration = read_calibration(&cfg)?;
            let key = scope_calibration_key(&cfg, category);
            let coeffs = calibration
                .get(&key)
                .ok_or_else(|| format!("no calibration entry {key:?}"))?;
            let lambdas = parse_lambdas(&lambdas)?;
            let n_sessions = sessions.unwrap_or(cfg.simulate.n_sessions);
            let points = simulator::lambda_sweep(
                &products,
                &model,
                coeffs,
                &lambdas,
                category,
                n_sessions,
                seed,
                &cfg,
            )
            .map_err(fail)?;
            let mut buf = Vec::new();
            simulator::emit_tradeoff(&points, &mut buf).map_err(fail)?;
            emit(out.as_deref(), &String::from_utf8(buf).map_err(fail)?)
        }
        Command::Review { candidates, category, out } => {
            let text = fs::read_to_string(&candidates)
                .map_err(|e| format!("cannot read {}: {e}", candidates.display()))?;
            let mut buf = String::new();
            for (idx, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: CandidateLine = serde_json::from_str(line)
                    .map_err(|e| format!("line {}: {e}", idx + 1))?;
                let candidate =
                    CopyCandidate::new(parsed.id, parsed.product_id, parsed.text, &cfg.feature);
                let verdict = pipeline::review(&candidate, &cfg.review, category);
                let obj = serde_json::json!({
                    "id": candidate.id,
                    "passed": verdict.passed,
                    "violations": verdict.violations,
                });
                buf.push_str(&obj.to_string());
                buf.push('\n');
            }
            emit(out.as_deref(), &buf)
        }
    }
}

fn parse_lambdas(s: &str) -> Result<Vec<f64>, String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad lambda {part:?}: {e}"))
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err("no lambda values given".into());
    }
    for &v in &values {
        if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
            return Err(format!("lambda {v} outside [0, 1]"));
        }
    }
    Ok(values)
}

fn read_training_csv(path: &Path) -> Result<Vec<(FeatureVector, bool)>, String> {
    const HEADER: [&str; 5] =
        ["keyword_strength", "cta_density", "sentiment", "readability", "label"];
    let file = fs::File::open(path)
        .map_err(|e| format!("cannot read training data {}: {e}", path.display()))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers().map_err(fail)?;
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(format!("training csv must have header {}", HEADER.join(",")));
    }
    let mut samples = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| format!("line {line}: {e}"))?;
        let num = |i: usize| -> Result<f64, String> {
            row[i].trim()
                .parse::<f64>()
                .map_err(|e| format!("line {line}, column {}: {e}", HEADER[i]))
        };
        let label = match row[4].trim() {
            "0" => false,
            "1" => true,
            other => return Err(format!("line {line}: label must be 0 or 1, got {other:?}")),
        };
        let features = FeatureVector {
            keyword_strength: num(0)?,
            cta_density: num(1)?,
            sentiment: num(2)?,
            readability: num(3)?,
            extra: Default::default(),
        };
        samples.push((features, label));
    }
    Ok(samples)
}

fn print_report_table(report: &AbReport) {
    println!("arm          impressions   clicks  add_to_carts  orders     ctr%    atc%    cvr%");
    for arm in &report.arms {
        let rate = |v: Option<f64>| match v {
            Some(v) => format!("{v:7.3}"),
            None => "      -".to_string(),
        };
        println!(
            "{:<12} {:>11} {:>8} {:>13} {:>7} {} {} {}",
            arm.arm.as_str(),
            arm.counts.impressions,
            arm.counts.clicks,
            arm.counts.add_to_carts,
            arm.counts.orders,
            rate(arm.ctr),
            rate(arm.atc_rate),
            rate(arm.cvr),
        );
    }
    if !report.comparisons.is_empty() {
        println!();
        println!("comparison                  metric     lift%        z   p(z)      chi2  p(chi2)  significant");
        for c in &report.comparisons {
            let lift = match c.lift {
                Some(l) => format!("{:8.2}", l * 100.0),
                None => "       -".to_string(),
            };
            println!(
                "{:<12}vs control     {:<9} {} {:>8.3} {:>6.4} {:>9.3} {:>8.4}  {}",
                c.treatment.as_str(),
                c.metric.as_str(),
                lift,
                c.z,
                c.p_z,
                c.chi2,
                c.p_chi2,
                if c.significant { "yes" } else { "no" },
            );
        }
    }
    for w in &report.warnings {
        println!("note: {w}");
    }
}
