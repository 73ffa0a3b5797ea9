//! Shared fixtures: the bundled case-study configurations and sampling
//! oracles used by several test targets.

#![allow(dead_code)]

use std::path::PathBuf;

use dtcbf::cli::{parse_spec, ProblemSpec};
use dtcbf::poly::Polynomial;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn load(name: &str) -> ProblemSpec {
    parse_spec(&config_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Up to `count` uniform samples of `{h >= 0}` inside `bounds`.
pub fn samples_of(h: &Polynomial, bounds: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..1000 * count {
        if out.len() == count {
            break;
        }
        let x: Vec<f64> = bounds.iter().map(|&(a, b)| rng.gen_range(a..b)).collect();
        if h.eval(&x) >= 0.0 {
            out.push(x);
        }
    }
    out
}

/// Box `[-r, r]^n`.
pub fn cube(n: usize, r: f64) -> Vec<(f64, f64)> {
    vec![(-r, r); n]
}
