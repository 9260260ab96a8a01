//! Acceptance suite for `curvlab`; see `tests/acceptance.rs`.
