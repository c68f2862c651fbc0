//! Exercises the C entry points the way a foreign caller would: through
//! raw pointers and status codes, never through the Rust API.

use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use copyrank_ffi::*;

fn data(file: &str) -> CString {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(file);
    CString::new(path.to_str().unwrap()).unwrap()
}

unsafe fn last_error() -> String {
    CStr::from_ptr(cr_last_error()).to_string_lossy().into_owned()
}

unsafe fn engine_with_catalog() -> *mut CrEngine {
    let mut engine: *mut CrEngine = ptr::null_mut();
    assert_eq!(cr_engine_new(data("config.toml").as_ptr(), &mut engine), CrStatus::Ok);
    assert!(!engine.is_null());
    assert_eq!(cr_engine_load_catalog(engine, data("catalog.jsonl").as_ptr()), CrStatus::Ok);
    engine
}

unsafe fn shipped_model() -> *mut CrModel {
    let mut model: *mut CrModel = ptr::null_mut();
    assert_eq!(cr_model_load_file(data("model.json").as_ptr(), &mut model), CrStatus::Ok);
    assert!(!model.is_null());
    model
}

#[test]
fn version_is_static_and_nonempty() {
    let v = unsafe { CStr::from_ptr(cr_version()) };
    assert!(!v.to_bytes().is_empty());
}

#[test]
fn null_arguments_are_rejected_with_messages() {
    unsafe {
        let mut engine: *mut CrEngine = ptr::null_mut();
        assert_eq!(cr_engine_new(ptr::null(), &mut engine), CrStatus::NullArgument);
        assert!(last_error().contains("config_path"));
        assert!(engine.is_null());

        let good = data("config.toml");
        assert_eq!(cr_engine_new(good.as_ptr(), ptr::null_mut()), CrStatus::NullArgument);

        assert_eq!(cr_engine_load_catalog(ptr::null_mut(), good.as_ptr()), CrStatus::NullArgument);
        let mut count = 7usize;
        assert_eq!(cr_engine_product_count(ptr::null(), &mut count), CrStatus::NullArgument);
        assert_eq!(count, 7, "out must stay untouched on failure");

        let mut p = 0.0f64;
        assert_eq!(
            cr_model_predict(ptr::null(), 0.1, 0.1, 0.0, 0.5, &mut p),
            CrStatus::NullArgument
        );

        // Free functions tolerate null.
        cr_engine_free(ptr::null_mut());
        cr_model_free(ptr::null_mut());
        cr_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_utf8_is_reported() {
    unsafe {
        let bogus = [0xffu8, 0xfe, 0x00];
        let mut engine: *mut CrEngine = ptr::null_mut();
        let status = cr_engine_new(bogus.as_ptr() as *const c_char, &mut engine);
        assert_eq!(status, CrStatus::InvalidUtf8);
        assert!(last_error().contains("UTF-8"));
    }
}

#[test]
fn bad_config_and_model_paths_fail_cleanly() {
    unsafe {
        let missing = CString::new("/nonexistent/config.toml").unwrap();
        let mut engine: *mut CrEngine = ptr::null_mut();
        assert_eq!(cr_engine_new(missing.as_ptr(), &mut engine), CrStatus::BadConfig);
        assert!(engine.is_null());

        let mut model: *mut CrModel = ptr::null_mut();
        let missing = CString::new("/nonexistent/model.json").unwrap();
        assert_eq!(cr_model_load_file(missing.as_ptr(), &mut model), CrStatus::BadModel);

        let junk = CString::new("{\"not\": \"a model\"}").unwrap();
        assert_eq!(cr_model_parse_json(junk.as_ptr(), &mut model), CrStatus::BadModel);
        assert!(!last_error().is_empty());
    }
}

#[test]
fn catalog_load_and_count() {
    unsafe {
        let engine = engine_with_catalog();
        let mut count = 0usize;
        assert_eq!(cr_engine_product_count(engine, &mut count), CrStatus::Ok);
        assert_eq!(count, 18);
        cr_engine_free(engine);
    }
}

#[test]
fn predict_matches_direct_evaluation() {
    unsafe {
        let model = shipped_model();
        let mut p = -1.0f64;
        assert_eq!(cr_model_predict(model, 0.4, 0.2, 0.1, 0.6, &mut p), CrStatus::Ok);
        assert!(p.is_finite() && (0.0..=1.0).contains(&p), "p {p}");

        // Monotone in keyword strength under a positive coefficient.
        let mut p_hi = -1.0f64;
        assert_eq!(cr_model_predict(model, 0.9, 0.2, 0.1, 0.6, &mut p_hi), CrStatus::Ok);
        assert!(p_hi > p);
        cr_model_free(model);
    }
}

#[test]
fn rank_returns_ordered_reviewed_json() {
    unsafe {
        let engine = engine_with_catalog();
        let model = shipped_model();
        let id = CString::new("fmcg-001").unwrap();
        let mut out: *mut c_char = ptr::null_mut();
        assert_eq!(
            cr_engine_rank_json(engine, model, id.as_ptr(), 0.6, 7, &mut out),
            CrStatus::Ok
        );
        let text = CStr::from_ptr(out).to_str().unwrap().to_string();
        let rows: serde_json::Value = serde_json::from_str(&text).unwrap();
        let rows = rows.as_array().unwrap();
        assert_eq!(rows.len(), 10);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row["rank"], i as u64 + 1);
            let c = &row["candidate"];
            assert_eq!(c["product_id"], "fmcg-001");
            assert!(c["p_conv"].as_f64().unwrap() > 0.0);
            assert!(c["reward"].as_f64().is_some());
            assert!(row["verdict"]["passed"].is_boolean());
        }
        // Rewards arrive sorted when the config serves by reward.
        let rewards: Vec<f64> =
            rows.iter().map(|r| r["candidate"]["reward"].as_f64().unwrap()).collect();
        assert!(rewards.windows(2).all(|w| w[0] >= w[1]));

        // Same inputs, same bytes.
        let mut again: *mut c_char = ptr::null_mut();
        assert_eq!(
            cr_engine_rank_json(engine, model, id.as_ptr(), 0.6, 7, &mut again),
            CrStatus::Ok
        );
        assert_eq!(text, CStr::from_ptr(again).to_str().unwrap());

        cr_string_free(out);
        cr_string_free(again);
        cr_model_free(model);
        cr_engine_free(engine);
    }
}

#[test]
fn rank_validates_lambda_and_product() {
    unsafe {
        let engine = engine_with_catalog();
        let model = shipped_model();
        let id = CString::new("fmcg-001").unwrap();
        let mut out: *mut c_char = ptr::null_mut();

        assert_eq!(
            cr_engine_rank_json(engine, model, id.as_ptr(), 1.5, 7, &mut out),
            CrStatus::InvalidArgument
        );
        assert!(last_error().contains("lambda"));

        // The -1 sentinel picks the configured default.
        assert_eq!(
            cr_engine_rank_json(engine, model, id.as_ptr(), -1.0, 7, &mut out),
            CrStatus::Ok
        );
        cr_string_free(out);

        let ghost = CString::new("sku-404").unwrap();
        let mut out: *mut c_char = ptr::null_mut();
        assert_eq!(
            cr_engine_rank_json(engine, model, ghost.as_ptr(), 0.5, 7, &mut out),
            CrStatus::UnknownProduct
        );
        assert!(last_error().contains("sku-404"));

        cr_model_free(model);
        cr_engine_free(engine);
    }
}

#[test]
fn set_diversity_bounds_and_degenerate_cases() {
    unsafe {
        let engine = engine_with_catalog();
        let texts = [
            CString::new("fresh roasted coffee delivered weekly").unwrap(),
            CString::new("waterproof hiking jacket with sealed seams").unwrap(),
            CString::new("noise cancelling wireless earbuds").unwrap(),
        ];
        let ptrs: Vec<*const c_char> = texts.iter().map(|t| t.as_ptr()).collect();
        let mut d = -1.0f64;
        assert_eq!(
            cr_engine_set_diversity(engine, ptrs.as_ptr(), ptrs.len(), &mut d),
            CrStatus::Ok
        );
        assert!(d > 0.0 && d < 1.0, "diversity {d}");

        let same = [texts[0].as_ptr(), texts[0].as_ptr()];
        assert_eq!(cr_engine_set_diversity(engine, same.as_ptr(), 2, &mut d), CrStatus::Ok);
        assert!(d.abs() < 1e-12, "identical texts must score 0, got {d}");

        assert_eq!(
            cr_engine_set_diversity(engine, ptrs.as_ptr(), 0, &mut d),
            CrStatus::InvalidArgument
        );
        cr_engine_free(engine);
    }
}

#[test]
fn generated_header_covers_the_surface() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/copyrank.h");
    let text = std::fs::read_to_string(header).expect("header generated at build time");
    for symbol in [
        "CrStatus",
        "CrEngine",
        "CrModel",
        "cr_version",
        "cr_last_error",
        "cr_engine_new",
        "cr_engine_load_catalog",
        "cr_engine_product_count",
        "cr_engine_rank_json",
        "cr_engine_set_diversity",
        "cr_engine_free",
        "cr_model_load_file",
        "cr_model_parse_json",
        "cr_model_predict",
        "cr_model_free",
        "cr_string_free",
    ] {
        assert!(text.contains(symbol), "{symbol} missing from copyrank.h");
    }
    // Status constants are part of the ABI; a rename breaks C callers.
    for (constant, value) in [
        ("CR_STATUS_OK = 0", CrStatus::Ok as i32),
        ("CR_STATUS_NULL_ARGUMENT = 1", CrStatus::NullArgument as i32),
        ("CR_STATUS_INTERNAL = 8", CrStatus::Internal as i32),
    ] {
        assert!(text.contains(constant), "{constant} missing from copyrank.h");
        let declared: i32 = constant.rsplit(' ').next().unwrap().parse().unwrap();
        assert_eq!(declared, value);
    }
}
