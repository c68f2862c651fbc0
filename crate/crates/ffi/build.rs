use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include/copyrank.h");
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("COPYRANK_H".to_string()),
        cpp_compat: true,
        documentation_style: cbindgen::DocumentationStyle::C99,
        header: Some(
            "/* C interface to the copyrank scoring and reranking engine.\n\
             \x20* Generated by cbindgen; do not edit by hand. */"
                .to_string(),
        ),
        usize_is_size_t: true,
        enumeration: cbindgen::EnumConfig {
            prefix_with_name: true,
            rename_variants: cbindgen::RenameRule::ScreamingSnakeCase,
            ..cbindgen::EnumConfig::default()
        },
        ..cbindgen::Config::default()
    };
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("bindings generate")
        .write_to_file(header);
    println!("cargo:rerun-if-changed=src/lib.rs");
}
