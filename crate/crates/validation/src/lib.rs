//! Test-only package holding the `acceptance` target.
//!
//! It lives in its own package so that `cargo test --workspace` runs it after
//! every unit and integration suite of the library crates.
