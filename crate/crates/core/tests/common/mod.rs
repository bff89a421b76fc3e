//! Seeded random instances and well-conditioned sample points shared by the
//! integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use hspace::funcjet::ScalarFunction;
use hspace::hspace2211::{roots_at, HSpaceParams, HSpaceSpec, Point6, Sign};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// (epsilon, epsilon_tilde) for the i-th random instance; every combination
/// occurs among the first four.
const EPSILONS: [(u8, u8); 5] = [(1, 1), (0, 1), (1, 0), (0, 0), (1, 1)];

fn random_sign(rng: &mut ChaCha8Rng) -> Sign {
    if rng.random_bool(0.5) {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

/// Polynomial, sine or exponential with moderate coefficients.
fn random_function(rng: &mut ChaCha8Rng) -> ScalarFunction {
    match rng.random_range(0..3) {
        0 => ScalarFunction::polynomial((0..4).map(|_| rng.random_range(-1.0..1.0)).collect()),
        1 => ScalarFunction::sine(
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..2.0),
            rng.random_range(0.0..std::f64::consts::PI),
        ),
        _ => ScalarFunction::exponential(rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0)),
    }
}

pub fn random_instance(index: usize, seed: u64) -> HSpaceParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(index as u64));
    let (epsilon, epsilon_tilde) = EPSILONS[index % EPSILONS.len()];
    let a = if epsilon_tilde == 0 {
        rng.random_range(1.0..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
    } else {
        rng.random_range(-2.0..2.0)
    };
    HSpaceSpec {
        epsilon,
        epsilon_tilde,
        a,
        c: rng.random_range(-2.0..2.0),
        e2: random_sign(&mut rng),
        e4: random_sign(&mut rng),
        e5: random_sign(&mut rng),
        e6: random_sign(&mut rng),
        theta: random_function(&mut rng),
        omega: random_function(&mut rng),
        f5: random_function(&mut rng),
        f6: random_function(&mut rng),
    }
    .build()
    .expect("generated instances are valid")
}

/// A point is kept when it is valid and no root gap or A factor is small
/// relative to the root scale (near-collision points are valid but
/// arbitrarily ill-conditioned).
pub fn well_conditioned(params: &HSpaceParams, pt: &Point6) -> bool {
    let Ok(r) = roots_at(params, pt) else {
        return false;
    };
    let roots = [r.f2.value, r.f4.value, r.f5.value, r.f6.value];
    let scale = roots.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..4 {
        for j in i + 1..4 {
            if (roots[i] - roots[j]).abs() < 0.1 * scale {
                return false;
            }
        }
    }
    r.a.value.abs() >= 0.1 && r.a_tilde.value.abs() >= 0.1
}

/// `count` well-conditioned points drawn from [-2, 2]^6.
pub fn sample_points(params: &HSpaceParams, count: usize, seed: u64) -> Vec<Point6> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        assert!(attempts < 1_000_000, "cannot find valid sample points");
        let x: [f64; 6] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let pt = Point6::new(x).unwrap();
        if well_conditioned(params, &pt) {
            out.push(pt);
        }
    }
    out
}
