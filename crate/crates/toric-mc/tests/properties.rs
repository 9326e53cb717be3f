//! Randomized property suites over the public API: parity and homology
//! invariants of the lattice, decoder closure, 2d/3d agreement at q = 0,
//! octahedral volumes against brute-force enumeration, and monotonicity of
//! the bracket chain-length bound.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use toric_mc::analysis::{l_ss, octa_volume};
use toric_mc::decoder2d::decode;
use toric_mc::decoder3d::{star_distance, MemorySimulation, StarMetricParams};
use toric_mc::lattice::{
    homology_class, sample_errors, syndrome_of, ErrorConfig, TorusLattice,
};

fn random_errors(k: usize, p: f64, seed: u64) -> (TorusLattice, ErrorConfig) {
    let lat = TorusLattice::new(k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = sample_errors(lat.num_edges(), p, &mut rng).unwrap();
    (lat, cfg)
}

/// errors + applied recovery: closed by construction when decode succeeds
/// at clearing the syndrome.
fn closed_config(k: usize, p: f64, seed: u64) -> (TorusLattice, ErrorConfig) {
    let (lat, cfg) = random_errors(k, p, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let out = decode(&lat, &cfg, &mut rng);
    let mut closed = cfg;
    closed.xor_assign(&out.recovery);
    (lat, closed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn syndrome_has_even_defect_count(k in 4usize..16, p in 0.0f64..0.3, seed in any::<u64>()) {
        let (lat, cfg) = random_errors(k, p, seed);
        prop_assert_eq!(syndrome_of(&lat, &cfg).defects.len() % 2, 0);
    }

    #[test]
    fn homology_is_a_homomorphism(k in 4usize..12, seed_a in any::<u64>(), seed_b in any::<u64>()) {
        let (lat, a) = closed_config(k, 0.08, seed_a);
        let (_, b) = closed_config(k, 0.08, seed_b);
        let ca = homology_class(&lat, &a).unwrap();
        let cb = homology_class(&lat, &b).unwrap();
        let mut ab = a;
        ab.xor_assign(&b);
        prop_assert_eq!(homology_class(&lat, &ab).unwrap(), ca.xor(&cb));
    }

    #[test]
    fn residual_after_decode_is_closed(k in 4usize..16, p in 0.0f64..0.15, seed in any::<u64>()) {
        let (lat, closed) = closed_config(k, p, seed);
        prop_assert!(syndrome_of(&lat, &closed).defects.is_empty());
        // closed configurations always carry a well-defined homology class
        prop_assert!(homology_class(&lat, &closed).is_ok());
    }

    #[test]
    fn star_distance_is_symmetric_and_dominates_space(l in 0.0f64..50.0, dt in -40i64..40) {
        let params = StarMetricParams::default();
        let d = star_distance(l, dt, &params);
        prop_assert_eq!(d, star_distance(l, -dt, &params));
        prop_assert!(d >= l);
    }
}

/// At q = 0 with injection disabled, the 3d decoder must reach exactly the
/// 2d homology outcome on every fixture (spec'd as a 100-fixture check).
#[test]
fn q0_three_d_matches_two_d_on_100_fixtures() {
    let k = 12;
    let lat = TorusLattice::new(k);
    let params = StarMetricParams::default();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pattern = sample_errors(lat.num_edges(), 0.04, &mut rng).unwrap();
        let out2d = decode(&lat, &pattern, &mut rng);

        let mut rng3 = ChaCha8Rng::seed_from_u64(seed);
        let _ = sample_errors(lat.num_edges(), 0.04, &mut rng3).unwrap();
        let mut sim = MemorySimulation::new(k, 0.04, 0.0, params, 5, seed);
        sim.inject = false;
        sim.set_rng(rng3);
        sim.inject_pattern(&pattern);
        let mut failed = false;
        for _ in 0..6 * k {
            if sim.step().failed {
                failed = true;
                break;
            }
            if sim.particles().is_empty() {
                break;
            }
        }
        let failed3d = failed || {
            assert!(sim.particles().is_empty(), "seed {seed}: did not settle");
            !homology_class(&lat, sim.residual()).unwrap().is_trivial()
        };
        assert_eq!(failed3d, !out2d.success, "seed {seed}: 3d and 2d outcomes differ");
    }
}

/// Octahedron volume formula against a brute-force count of spacetime
/// lattice points with l + alpha |dt| <= l*.
#[test]
fn octa_volume_matches_enumeration_to_lstar_12() {
    for alpha in [2.0f64, 2.4, 3.0] {
        let params = StarMetricParams { alpha, ..StarMetricParams::default() };
        let mut l_star = 1.0f64;
        while l_star <= 12.0 {
            let mut count = 0u64;
            let r = l_star.ceil() as i64;
            for t in -r..=r {
                let budget = l_star - alpha * t.unsigned_abs() as f64;
                if budget < 0.0 {
                    continue;
                }
                let b = budget.floor() as i64;
                for x in -b..=b {
                    count += (b - x.abs()) as u64 * 2 + 1;
                }
            }
            assert_eq!(
                octa_volume(l_star, &params),
                count,
                "alpha {alpha}, l* {l_star}"
            );
            l_star += 0.5;
        }
    }
}

/// The bracket bound (2/m)[(n-m) n^(1/beta) - n (n-m)^(1/beta)] on chain
/// length, defined for splits 1 <= m <= n/2, is strictly decreasing in the
/// split point m at fixed n.
#[test]
fn l_ss_is_strictly_monotone_in_split() {
    for n in [8.0f64, 16.0, 64.0, 256.0, 1024.0] {
        let mut prev = f64::INFINITY;
        let mut m = 1.0;
        while 2.0 * m <= n {
            let v = l_ss(m, n);
            assert!(v < prev, "n {n}, m {m}: {v} >= {prev}");
            prev = v;
            m += 1.0;
        }
    }
}
