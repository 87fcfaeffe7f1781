//! Regenerates the C header from the extern "C" surface on every build.

use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("netforecast.h");
    cbindgen::generate(&crate_dir)
        .expect("cbindgen failed to parse the FFI surface")
        .write_to_file(header);
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
