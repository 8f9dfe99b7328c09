//! Test-only oracles, written independently of the library code paths they check.
#![allow(dead_code)]

pub mod oracles;
