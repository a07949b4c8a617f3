//! Holds the acceptance gate in `tests/acceptance.rs`; no library code.
