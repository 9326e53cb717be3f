//! The quasi-local "expanding diamonds" pairing decoder with perfect syndrome
//! measurements, its 1d ring specialization, and the exhaustive maximal-chain
//! search used to cross-check the Cantor-chain length formula.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lattice::{
    homology_class_unchecked, ring_syndrome_of, sample_errors, syndrome_of, ErrorConfig,
    HomologyClass, RingLattice, Syndrome, TorusLattice, Vertex,
};

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("malformed syndrome: odd defect count {0}")]
    OddDefectCount(usize),
    #[error("internal invariant violated: particles left unpaired after t = {0}")]
    UnpairedParticles(usize),
}

/// A perfect matching on the defect set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairing {
    pub pairs: Vec<(Vertex, Vertex)>,
}

#[derive(Debug, Clone)]
pub struct DecodeOutcome {
    pub success: bool,
    pub residual_class: HomologyClass,
    pub recovery: ErrorConfig,
    pub pairing: Pairing,
}

/// Greedy staged matching over candidate pair groups of ascending level.
/// Within each group, pairs whose members are both still unpaired are
/// collected in canonical order, shuffled with the trial stream, and accepted
/// greedily skipping pairs with an already-claimed member. Pairs claimed in
/// an earlier group never re-enter.
pub(crate) fn staged_greedy<R: Rng, G: Iterator<Item = Vec<(usize, usize)>>>(
    claimed: &mut [bool],
    groups: G,
    rng: &mut R,
    mut on_pair: impl FnMut(usize, usize),
) {
    let mut scratch: Vec<(usize, usize)> = Vec::new();
    for group in groups {
        scratch.clear();
        scratch.extend(group.into_iter().filter(|&(i, j)| !claimed[i] && !claimed[j]));
        scratch.shuffle(rng);
        for &(i, j) in scratch.iter() {
            if !claimed[i] && !claimed[j] {
                claimed[i] = true;
                claimed[j] = true;
                on_pair(i, j);
            }
        }
    }
}

/// Expanding diamonds: iterate t = 1, 2, ... pairing particles at mutual
/// distance exactly t, contested pairings resolved uniformly at random.
pub fn expand_and_pair<R: Rng>(
    lat: &TorusLattice,
    syn: &Syndrome,
    rng: &mut R,
) -> Result<Pairing, DecodeError> {
    let defects = &syn.defects;
    if defects.len() % 2 != 0 {
        return Err(DecodeError::OddDefectCount(defects.len()));
    }
    let k = lat.k();
    // bucket all defect pairs by distance once, then sweep t ascending
    let mut buckets: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k + 1];
    for i in 0..defects.len() {
        for j in (i + 1)..defects.len() {
            let d = lat.vertex_distance(defects[i], defects[j]);
            buckets[d].push((i, j));
        }
    }
    let mut claimed = vec![false; defects.len()];
    let mut pairs = Vec::with_capacity(defects.len() / 2);
    staged_greedy(&mut claimed, buckets.into_iter().skip(1), rng, |i, j| {
        pairs.push((defects[i], defects[j]));
    });
    if claimed.iter().any(|&c| !c) {
        return Err(DecodeError::UnpairedParticles(k));
    }
    Ok(Pairing { pairs })
}

/// Pair the syndrome, apply geodesic recovery chains, and classify the
/// residual loops. The residual is always closed.
pub fn decode<R: Rng>(lat: &TorusLattice, cfg: &ErrorConfig, rng: &mut R) -> DecodeOutcome {
    let syn = syndrome_of(lat, cfg);
    let pairing = expand_and_pair(lat, &syn, rng).expect("even defect count on the torus");
    let mut recovery = ErrorConfig::for_torus(lat);
    for &(u, v) in &pairing.pairs {
        for e in lat.shortest_path(u, v) {
            recovery.flip(e);
        }
    }
    let mut residual = cfg.clone();
    residual.xor_assign(&recovery);
    debug_assert!(syndrome_of(lat, &residual).defects.is_empty());
    let residual_class = homology_class_unchecked(lat, &residual);
    DecodeOutcome { success: residual_class.is_trivial(), residual_class, recovery, pairing }
}

/// One Monte Carlo trial: sample errors at rate p and decode. Returns the
/// failure indicator; fully determined by (k, p, seed).
pub fn run_trial(k: usize, p: f64, seed: u64) -> bool {
    let lat = TorusLattice::new(k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = sample_errors(lat.num_edges(), p, &mut rng).expect("p in [0,1]");
    !decode(&lat, &cfg, &mut rng).success
}

/// 1d specialization of the staged decoder on the ring, with random
/// contested-pairing resolution.
pub fn ring_decode<R: Rng>(lat: &RingLattice, cfg: &ErrorConfig, rng: &mut R) -> ErrorConfig {
    let defects = ring_syndrome_of(lat, cfg);
    let k = lat.k();
    let mut buckets: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k / 2 + 1];
    for i in 0..defects.len() {
        for j in (i + 1)..defects.len() {
            buckets[lat.vertex_distance(defects[i], defects[j])].push((i, j));
        }
    }
    let mut claimed = vec![false; defects.len()];
    let mut residual = cfg.clone();
    staged_greedy(&mut claimed, buckets.into_iter().skip(1), rng, |i, j| {
        for e in lat.shortest_path(defects[i], defects[j]) {
            residual.flip(e);
        }
    });
    residual
}

// --- exhaustive maximal-chain search -------------------------------------

/// All maximal matchings of the candidate pair list over particles `avail`.
/// Every outcome of the random greedy resolution is a maximal matching, and
/// every maximal matching is reachable by some resolution order.
fn maximal_matchings(pairs: &[(usize, usize)], avail: &mut Vec<bool>, out: &mut Vec<Vec<(usize, usize)>>, acc: &mut Vec<(usize, usize)>) {
    // first particle that could still be matched
    let pick = pairs
        .iter()
        .filter(|&&(i, j)| avail[i] && avail[j])
        .map(|&(i, j)| i.min(j))
        .min();
    let Some(v) = pick else {
        out.push(acc.clone());
        return;
    };
    // branch: match v with each available partner
    let cands: Vec<(usize, usize)> = pairs
        .iter()
        .copied()
        .filter(|&(i, j)| (i == v || j == v) && avail[i] && avail[j])
        .collect();
    for (i, j) in cands {
        avail[i] = false;
        avail[j] = false;
        acc.push((i.min(j), i.max(j)));
        maximal_matchings(pairs, avail, out, acc);
        acc.pop();
        avail[i] = true;
        avail[j] = true;
    }
    // branch: v stays unmatched; only maximal if all its partners end up
    // claimed by others, which the recursion checks by excluding v
    let saved = avail[v];
    avail[v] = false;
    let before = out.len();
    maximal_matchings(pairs, avail, out, acc);
    avail[v] = saved;
    // filter non-maximal results where v could still have been matched
    let mut kept = 0;
    for idx in before..out.len() {
        let used: Vec<usize> = out[idx].iter().flat_map(|&(a, b)| [a, b]).collect();
        let v_matchable = pairs
            .iter()
            .any(|&(i, j)| (i == v || j == v) && !used.contains(&i) && !used.contains(&j));
        if !v_matchable {
            out.swap(before + kept, idx);
            kept += 1;
        }
    }
    out.truncate(before + kept);
    // dedup: the unmatched branch can reproduce matchings already found
    let mut seen: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut kept = 0;
    for idx in 0..out.len() {
        let mut m = out[idx].clone();
        m.sort_unstable();
        if !seen.contains(&m) {
            seen.push(m);
            out.swap(kept, idx);
            kept += 1;
        }
    }
    out.truncate(kept);
}

/// Explore every tie-break resolution of the staged 1d decoder on the given
/// error placement; report each resulting connected chain (its error count
/// and covered extent) to `report`.
fn explore_ring_resolutions(
    ring: &RingLattice,
    errors_mask: u64,
    defects: &[usize],
    union_mask: u64,
    t: usize,
    report: &mut impl FnMut(u64, u64),
) {
    if defects.is_empty() {
        report(errors_mask, union_mask);
        return;
    }
    if t > ring.k() / 2 {
        return;
    }
    let pairs: Vec<(usize, usize)> = (0..defects.len())
        .flat_map(|i| ((i + 1)..defects.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| ring.vertex_distance(defects[i], defects[j]) == t)
        .collect();
    if pairs.is_empty() {
        explore_ring_resolutions(ring, errors_mask, defects, union_mask, t + 1, report);
        return;
    }
    let mut matchings = Vec::new();
    maximal_matchings(&pairs, &mut vec![true; defects.len()], &mut matchings, &mut Vec::new());
    for m in matchings {
        let mut mask = union_mask;
        let mut used = vec![false; defects.len()];
        for &(i, j) in &m {
            used[i] = true;
            used[j] = true;
            for e in ring.shortest_path(defects[i], defects[j]) {
                mask |= 1 << e;
            }
        }
        let rest: Vec<usize> =
            defects.iter().enumerate().filter(|&(i, _)| !used[i]).map(|(_, &d)| d).collect();
        explore_ring_resolutions(ring, errors_mask, &rest, mask, t + 1, report);
    }
}

/// Maximum, over all placements of n errors and all tie-break resolutions,
/// of the covered extent (errors plus applied recovery chains) of a single
/// connected chain produced by the 1d staged decoder. Exhaustive; intended
/// for n <= 8. `k_search` must exceed three times the chain-length estimate
/// so wraparound never interferes.
pub fn ring_max_chain_search(n: usize, k_search: usize) -> usize {
    assert!(n >= 1 && n <= 8, "exhaustive regime is n <= 8");
    let beta_inv = 1.0 / crate::BETA;
    let window = (n as f64).powf(beta_inv).floor() as usize; // l(n) <= n^(1/beta)
    assert!(k_search > 3 * window, "ring too small for window {window}");
    let ring = RingLattice::new(k_search);

    let mut best = 0usize;
    // first error fixed at edge 0 (translation invariance); the rest in the
    // window, since a single chain of extent <= window contains all errors
    let mut positions = vec![0usize; n];
    enumerate_placements(&mut positions, 1, window, &mut |placement| {
        let mut errors_mask = 0u64;
        let mut cfg = ErrorConfig::for_ring(&ring);
        for &e in placement.iter() {
            errors_mask |= 1 << e;
            cfg.flip(e);
        }
        let defects = ring_syndrome_of(&ring, &cfg);
        explore_ring_resolutions(&ring, errors_mask, &defects, errors_mask, 1, &mut |errs, mask| {
            // connected runs on the (non-wrapping) window
            let mut run_len = 0usize;
            let mut run_errs = 0u32;
            for e in 0..=window + 1 {
                if e <= window && mask >> e & 1 == 1 {
                    run_len += 1;
                    run_errs += (errs >> e & 1) as u32;
                } else {
                    if run_errs as usize == n && run_len > best {
                        best = run_len;
                    }
                    run_len = 0;
                    run_errs = 0;
                }
            }
        });
    });
    best
}

fn enumerate_placements(
    positions: &mut Vec<usize>,
    idx: usize,
    window: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if idx == positions.len() {
        visit(positions);
        return;
    }
    let lo = positions[idx - 1] + 1;
    for p in lo..window {
        positions[idx] = p;
        enumerate_placements(positions, idx + 1, window, visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{plaquette_boundary, EdgeCoord, Orientation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_syndrome_empty_pairing() {
        let lat = TorusLattice::new(6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pairing = expand_and_pair(&lat, &Syndrome { defects: vec![] }, &mut rng).unwrap();
        assert!(pairing.pairs.is_empty());
    }

    #[test]
    fn adjacent_defects_paired_at_t1() {
        let lat = TorusLattice::new(6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let syn = Syndrome { defects: vec![Vertex::new(2, 2), Vertex::new(3, 2)] };
        let pairing = expand_and_pair(&lat, &syn, &mut rng).unwrap();
        assert_eq!(pairing.pairs.len(), 1);
    }

    #[test]
    fn odd_defect_count_rejected() {
        let lat = TorusLattice::new(6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let syn = Syndrome { defects: vec![Vertex::new(0, 0)] };
        assert_eq!(expand_and_pair(&lat, &syn, &mut rng), Err(DecodeError::OddDefectCount(1)));
    }

    #[test]
    fn decode_empty_and_nc_row() {
        let lat = TorusLattice::new(5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let empty = ErrorConfig::for_torus(&lat);
        let out = decode(&lat, &empty, &mut rng);
        assert!(out.success && out.recovery.is_empty());

        // a full row is a closed NC loop: the decoder sees an empty syndrome
        // and applies nothing, so the trial fails with class (1,0)
        let mut row = ErrorConfig::for_torus(&lat);
        for x in 0..5 {
            row.flip(lat.edge_index(EdgeCoord { x, y: 1, orientation: Orientation::Horizontal }));
        }
        let out = decode(&lat, &row, &mut rng);
        assert!(!out.success);
        assert!(out.residual_class.wrap_h && !out.residual_class.wrap_v);
    }

    #[test]
    fn decode_residual_always_closed() {
        let lat = TorusLattice::new(8);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let cfg = sample_errors(lat.num_edges(), 0.08, &mut rng).unwrap();
            let out = decode(&lat, &cfg, &mut rng);
            let mut residual = cfg.clone();
            residual.xor_assign(&out.recovery);
            assert!(syndrome_of(&lat, &residual).defects.is_empty());
        }
    }

    #[test]
    fn plaquette_loops_never_fail() {
        let lat = TorusLattice::new(6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cfg = ErrorConfig::for_torus(&lat);
        for v in [Vertex::new(1, 1), Vertex::new(3, 2), Vertex::new(4, 4)] {
            cfg.xor_assign(&plaquette_boundary(&lat, v));
        }
        assert!(decode(&lat, &cfg, &mut rng).success);
    }

    #[test]
    fn trial_p0_always_succeeds() {
        for seed in 0..20 {
            assert!(!run_trial(8, 0.0, seed));
        }
    }

    #[test]
    fn trial_p1_odd_k_regression() {
        // p=1 on odd k is geometry-determined up to tie resolution; pin the
        // outcome for one seed as a regression snapshot
        assert!(run_trial(5, 1.0, 42));
    }

    #[test]
    fn ring_three_errors_two_complementary_patterns() {
        // ring k=8, errors at edges {1,2,6}: every random resolution yields
        // one of the two complementary residuals (empty or full circle)
        let ring = RingLattice::new(8);
        let mut cfg = ErrorConfig::for_ring(&ring);
        for e in [1, 2, 6] {
            cfg.flip(e);
        }
        assert_eq!(ring_syndrome_of(&ring, &cfg).len(), 4);
        let mut seen_empty = false;
        let mut seen_full = false;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let residual = ring_decode(&ring, &cfg, &mut rng);
            match residual.count_ones() {
                0 => seen_empty = true,
                8 => seen_full = true,
                other => panic!("residual with {other} edges is not closed on the ring"),
            }
        }
        assert!(seen_empty || seen_full);
    }

    #[test]
    fn max_chain_small_cases() {
        assert_eq!(ring_max_chain_search(1, 16), 1);
        assert_eq!(ring_max_chain_search(2, 16), 3);
        assert_eq!(ring_max_chain_search(3, 32), 5);
        assert_eq!(ring_max_chain_search(4, 32), 9);
    }
}
