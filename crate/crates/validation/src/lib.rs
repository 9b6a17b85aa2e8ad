//! Hosts the `acceptance` test target, which runs every criterion in
//! [`ctflow::validation`] and prints one PASS/FAIL line per criterion.
//!
//! It lives in its own package so that `cargo test --workspace` runs it after the
//! library and command-line suites.
