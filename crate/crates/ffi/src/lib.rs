//! C ABI over the copyrank engine: opaque handles, integer status codes,
//! JSON strings for structured results.
//!
//! Contract: every fallible entry point returns a [`CrStatus`]; on
//! anything but `Ok` the thread-local message from [`cr_last_error`]
//! explains what happened. Strings the library hands out are UTF-8 and
//! NUL-terminated; release them with [`cr_string_free`]. Handles are not
//! synchronized, so share them across threads only behind a lock. No
//! entry point unwinds across the boundary; a caught panic reports
//! `Internal`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use copyrank::config::{load_config, Config};
use copyrank::optimizer::{diversity, predict_conversion, LogisticModel};
use copyrank::pipeline::run_pipeline;
use copyrank::pipeline::GenerationRequest;
use copyrank::text_features::{embed, EmbeddingVector, FeatureVector};
use copyrank::vector_index::{load_catalog, ProductRecord};

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An input string was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The config file failed to load or validate.
    BadConfig = 3,
    /// The model file or JSON failed to parse.
    BadModel = 4,
    /// The catalog failed to load, or the product id is not in it.
    UnknownProduct = 5,
    /// Generation, filtering, or reranking failed.
    PipelineFailed = 6,
    /// A numeric argument was out of its documented range.
    InvalidArgument = 7,
    /// A panic was caught at the boundary; state may be stale.
    Internal = 8,
}

/// Loaded configuration plus an optional product catalog.
pub struct CrEngine {
    cfg: Config,
    products: Vec<ProductRecord>,
}

/// Trained conversion model handle.
pub struct CrModel {
    model: LogisticModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl std::fmt::Display) {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(text).expect("NULs stripped");
    });
}

fn fail(status: CrStatus, msg: impl std::fmt::Display) -> CrStatus {
    set_error(msg);
    status
}

/// Guards an entry point body: clears the error slot, catches panics.
fn entry(body: impl FnOnce() -> CrStatus) -> CrStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic of unknown type".to_string());
            fail(CrStatus::Internal, format!("internal panic: {msg}"))
        }
    }
}

/// # Safety
/// `p` must be null or point to a NUL-terminated string.
unsafe fn utf8_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, CrStatus> {
    if p.is_null() {
        return Err(fail(CrStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CrStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn out_string(s: String, out: *mut *mut c_char) -> CrStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            CrStatus::Ok
        }
        Err(_) => fail(CrStatus::Internal, "result contained an interior NUL"),
    }
}

/// Library version as a static string; never freed.
#[no_mangle]
pub extern "C" fn cr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the last failure on this thread. The pointer stays valid
/// until the next library call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn cr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates an engine from a config file. The catalog starts empty; load
/// one with [`cr_engine_load_catalog`] before ranking.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must be a valid
/// pointer. On `Ok`, `*out` owns the engine until [`cr_engine_free`].
#[no_mangle]
pub unsafe extern "C" fn cr_engine_new(
    config_path: *const c_char,
    out: *mut *mut CrEngine,
) -> CrStatus {
    entry(|| {
        if out.is_null() {
            return fail(CrStatus::NullArgument, "out is null");
        }
        let path = match utf8_arg(config_path, "config_path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_config(Path::new(path)) {
            Ok(cfg) => {
                let engine = Box::new(CrEngine { cfg, products: Vec::new() });
                *out = Box::into_raw(engine);
                CrStatus::Ok
            }
            Err(e) => fail(CrStatus::BadConfig, e),
        }
    })
}

/// Replaces the engine's catalog with the JSON-Lines file at `path`.
///
/// # Safety
/// `engine` must come from [`cr_engine_new`] and not be freed;
/// `catalog_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cr_engine_load_catalog(
    engine: *mut CrEngine,
    catalog_path: *const c_char,
) -> CrStatus {
    entry(|| {
        let Some(engine) = engine.as_mut() else {
            return fail(CrStatus::NullArgument, "engine is null");
        };
        let path = match utf8_arg(catalog_path, "catalog_path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(CrStatus::UnknownProduct, format!("cannot read {path}: {e}")),
        };
        match load_catalog(&text, &engine.cfg.feature) {
            Ok(products) => {
                engine.products = products;
                CrStatus::Ok
            }
            Err(e) => fail(CrStatus::UnknownProduct, e),
        }
    })
}

/// Number of products in the loaded catalog.
///
/// # Safety
/// `engine` must be a live engine handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cr_engine_product_count(
    engine: *const CrEngine,
    out: *mut usize,
) -> CrStatus {
    entry(|| {
        let Some(engine) = engine.as_ref() else {
            return fail(CrStatus::NullArgument, "engine is null");
        };
        if out.is_null() {
            return fail(CrStatus::NullArgument, "out is null");
        }
        *out = engine.products.len();
        CrStatus::Ok
    })
}

/// Frees an engine; null is a no-op.
///
/// # Safety
/// `engine` must come from [`cr_engine_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cr_engine_free(engine: *mut CrEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Loads a trained model from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid. On `Ok`,
/// `*out` owns the model until [`cr_model_free`].
#[no_mangle]
pub unsafe extern "C" fn cr_model_load_file(
    path: *const c_char,
    out: *mut *mut CrModel,
) -> CrStatus {
    entry(|| {
        if out.is_null() {
            return fail(CrStatus::NullArgument, "out is null");
        }
        let path = match utf8_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(CrStatus::BadModel, format!("cannot read {path}: {e}")),
        };
        parse_model(&text, out)
    })
}

/// Parses a trained model from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid. On `Ok`,
/// `*out` owns the model until [`cr_model_free`].
#[no_mangle]
pub unsafe extern "C" fn cr_model_parse_json(
    json: *const c_char,
    out: *mut *mut CrModel,
) -> CrStatus {
    entry(|| {
        if out.is_null() {
            return fail(CrStatus::NullArgument, "out is null");
        }
        let json = match utf8_arg(json, "json") {
            Ok(p) => p,
            Err(s) => return s,
        };
        parse_model(json, out)
    })
}

fn parse_model(text: &str, out: *mut *mut CrModel) -> CrStatus {
    match LogisticModel::from_json(text) {
        Ok(model) => {
            unsafe { *out = Box::into_raw(Box::new(CrModel { model })) };
            CrStatus::Ok
        }
        Err(e) => fail(CrStatus::BadModel, e),
    }
}

/// Frees a model; null is a no-op.
///
/// # Safety
/// `model` must come from a load call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cr_model_free(model: *mut CrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicted conversion probability for one candidate's features.
///
/// # Safety
/// `model` must be a live model handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cr_model_predict(
    model: *const CrModel,
    keyword_strength: f64,
    cta_density: f64,
    sentiment: f64,
    readability: f64,
    out: *mut f64,
) -> CrStatus {
    entry(|| {
        let Some(model) = model.as_ref() else {
            return fail(CrStatus::NullArgument, "model is null");
        };
        if out.is_null() {
            return fail(CrStatus::NullArgument, "out is null");
        }
        let features = FeatureVector {
            keyword_strength,
            cta_density,
            sentiment,
            readability,
            ..FeatureVector::zeros()
        };
        match predict_conversion(&model.model, &features) {
            Ok(p) => {
                *out = p;
                CrStatus::Ok
            }
            Err(e) => fail(CrStatus::InvalidArgument, e),
        }
    })
}

/// Runs the full pipeline for one product and returns a JSON array of
/// `{rank, candidate, verdict}` objects, ordered as served. `lambda`
/// must be in [0, 1], or exactly -1.0 to use the configured default.
///
/// # Safety
/// `engine` and `model` must be live handles; `product_id` must be a
/// NUL-terminated string; `out_json` must be valid. On `Ok`, `*out_json`
/// is owned by the caller; free it with [`cr_string_free`].
#[no_mangle]
pub unsafe extern "C" fn cr_engine_rank_json(
    engine: *const CrEngine,
    model: *const CrModel,
    product_id: *const c_char,
    lambda: f64,
    seed: u64,
    out_json: *mut *mut c_char,
) -> CrStatus {
    entry(|| {
        let Some(engine) = engine.as_ref() else {
            return fail(CrStatus::NullArgument, "engine is null");
        };
        let Some(model) = model.as_ref() else {
            return fail(CrStatus::NullArgument, "model is null");
        };
        if out_json.is_null() {
            return fail(CrStatus::NullArgument, "out_json is null");
        }
        let id = match utf8_arg(product_id, "product_id") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let mut cfg = engine.cfg.clone();
        if lambda != -1.0 {
            if !(lambda.is_finite() && (0.0..=1.0).contains(&lambda)) {
                return fail(
                    CrStatus::InvalidArgument,
                    format!("lambda {lambda} not in [0, 1] and not the -1 sentinel"),
                );
            }
            cfg.optimizer.lambda = lambda;
        }
        let Some(product) = engine.products.iter().find(|p| p.id == id) else {
            return fail(
                CrStatus::UnknownProduct,
                format!("product {id:?} not in the loaded catalog ({})", engine.products.len()),
            );
        };
        let req = GenerationRequest {
            product: product.clone(),
            persona: "online shopper".to_string(),
            query: product.title.to_lowercase(),
            n: cfg.generator.max_candidates,
            seed,
        };
        match run_pipeline(&req, &model.model, &cfg) {
            Ok(ranked) => {
                let rows: Vec<serde_json::Value> = ranked
                    .iter()
                    .enumerate()
                    .map(|(i, (candidate, verdict))| {
                        serde_json::json!({
                            "rank": i + 1,
                            "candidate": candidate,
                            "verdict": verdict,
                        })
                    })
                    .collect();
                let text = serde_json::to_string(&rows).expect("rows serialize");
                out_string(text, out_json)
            }
            Err(e) => fail(CrStatus::PipelineFailed, e),
        }
    })
}

/// Set diversity of `n_texts` copy texts embedded with the engine's
/// feature configuration. Needs at least one text.
///
/// # Safety
/// `engine` must be a live handle; `texts` must point to `n_texts`
/// NUL-terminated strings; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cr_engine_set_diversity(
    engine: *const CrEngine,
    texts: *const *const c_char,
    n_texts: usize,
    out: *mut f64,
) -> CrStatus {
    entry(|| {
        let Some(engine) = engine.as_ref() else {
            return fail(CrStatus::NullArgument, "engine is null");
        };
        if texts.is_null() || out.is_null() {
            return fail(CrStatus::NullArgument, "texts or out is null");
        }
        if n_texts == 0 {
            return fail(CrStatus::InvalidArgument, "n_texts must be at least 1");
        }
        let mut embeddings: Vec<EmbeddingVector> = Vec::with_capacity(n_texts);
        for i in 0..n_texts {
            let text = match utf8_arg(*texts.add(i), "text") {
                Ok(t) => t,
                Err(s) => return s,
            };
            embeddings.push(embed(text, &engine.cfg.feature));
        }
        match diversity(&embeddings) {
            Ok(d) => {
                *out = d;
                CrStatus::Ok
            }
            Err(e) => fail(CrStatus::InvalidArgument, e),
        }
    })
}

/// Frees a string returned by this library; null is a no-op.
///
/// # Safety
/// `s` must come from a `cr_` function documented to transfer ownership,
/// and must not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
