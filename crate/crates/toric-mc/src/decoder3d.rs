//! Recovery with faulty syndrome measurements: repeated noisy measurement
//! rounds, particle world lines with ages, *-metric octahedral pairing with a
//! variable length cut-off, age inheritance for eclipsed particles, and
//! long-run failure-rate estimation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decoder2d::staged_greedy;
use crate::fitting::FailureSample;
use crate::lattice::{sample_errors, ErrorConfig, Orientation, TorusLattice, Vertex};

/// ln 2 / ln 3, the chain-scaling exponent.
pub const BETA: f64 = 0.630929753571457_f64;

#[derive(Debug, Clone, Copy)]
pub struct StarMetricParams {
    /// Time weight in the *-metric. Must satisfy (1+2a)^beta > 3^beta + 1 so
    /// that a newborn cannot immediately join a particle of age 3 or more.
    pub alpha: f64,
    pub beta: f64,
}

impl Default for StarMetricParams {
    fn default() -> Self {
        StarMetricParams { alpha: 2.4, beta: BETA }
    }
}

/// l* = l + alpha * |dT|.
pub fn star_distance(l: f64, dt: i64, params: &StarMetricParams) -> f64 {
    l + params.alpha * dt.unsigned_abs() as f64
}

/// Apply a recovery chain between an engaged pair of particles only when
/// l*^beta < T_r^beta + T_s^beta.
pub fn pairing_cutoff_check(age_r: u64, age_s: u64, l_star: f64, params: &StarMetricParams) -> bool {
    // exact-equality cases (such as 3^beta = 1 + 1) must fail the strict
    // inequality despite rounding in powf
    l_star.powf(params.beta) + 1e-9
        < (age_r as f64).powf(params.beta) + (age_s as f64).powf(params.beta)
}

/// A defect world-line endpoint.
#[derive(Debug, Clone, Copy)]
pub struct SpacetimeParticle {
    pub site: Vertex,
    pub birth_round: u64,
    /// Engaged to a partner by the octahedra stage; the joining chain is
    /// applied once the cut-off passes.
    pub paired: bool,
    /// Consecutive manual syndrome adjustments keeping this particle alive.
    pub reinstatements: u8,
    id: u64,
}

impl SpacetimeParticle {
    pub fn age(&self, round: u64) -> u64 {
        round - self.birth_round + 1
    }
}

/// Flip each vertex's syndrome membership independently with probability q.
pub fn measure_syndrome_noisy<R: Rng>(
    lat: &TorusLattice,
    true_defects: &[bool],
    q: f64,
    rng: &mut R,
) -> Vec<bool> {
    debug_assert_eq!(true_defects.len(), lat.num_vertices());
    if q == 0.0 {
        return true_defects.to_vec();
    }
    true_defects.iter().map(|&d| if rng.gen::<f64>() < q { !d } else { d }).collect()
}

/// Expanding octahedra pairing over the unpaired particles: pairs become
/// available as scaled octahedra of growing l* radius reach each other's
/// sites. Radii are incremented in `radius_steps` coarse steps spanning
/// (0, k(1+alpha)]; within a step candidates are taken in increasing l*,
/// ties shuffled with the trial stream. Returns index pairs into
/// `particles`.
pub fn pair_octahedra<R: Rng>(
    lat: &TorusLattice,
    particles: &[SpacetimeParticle],
    params: &StarMetricParams,
    radius_steps: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let cap = lat.k() as f64 * (1.0 + params.alpha);
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..particles.len() {
        if particles[i].paired {
            continue;
        }
        for j in (i + 1)..particles.len() {
            if particles[j].paired {
                continue;
            }
            let l = lat.vertex_distance(particles[i].site, particles[j].site) as f64;
            let dt = particles[i].birth_round as i64 - particles[j].birth_round as i64;
            let ls = star_distance(l, dt, params);
            if ls <= cap {
                cands.push((ls, i, j));
            }
        }
    }
    cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut claimed: Vec<bool> = particles.iter().map(|p| p.paired).collect();
    let mut pairs = Vec::new();
    let steps = radius_steps.max(1);
    let step = cap / steps as f64;
    let mut lo = 0usize;
    for s in 1..=steps {
        let radius = step * s as f64;
        // tie groups of equal l* within this coarse step
        let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
        while lo < cands.len() && (cands[lo].0 <= radius || s == steps) {
            let level = cands[lo].0;
            let mut group = Vec::new();
            while lo < cands.len() && cands[lo].0 == level {
                group.push((cands[lo].1, cands[lo].2));
                lo += 1;
            }
            groups.push(group);
        }
        staged_greedy(&mut claimed, groups.into_iter(), rng, |i, j| pairs.push((i, j)));
    }
    pairs
}

/// Search expanding diamonds around an eclipsed particle for an unclaimed
/// observed defect that is not itself a tracked particle; the nearest such
/// vertex (lowest canonical index on ties) inherits the lost age.
pub fn age_inheritance_probe(
    lat: &TorusLattice,
    eclipsed: Vertex,
    observed_free: &[bool],
    tracked: &[bool],
    r_g: usize,
) -> Option<Vertex> {
    for r in 1..=r_g {
        for v in lat.diamond(eclipsed, r) {
            let idx = lat.vertex_index(v);
            if observed_free[idx] && !tracked[idx] {
                return Some(v);
            }
        }
    }
    None
}

/// Full state of one memory simulation: accumulated residual (true errors
/// XOR applied recoveries, the open chains carried over between rounds),
/// live particle records, engagements awaiting the cut-off, and the trial
/// stream.
pub struct MemorySimulation {
    lat: TorusLattice,
    params: StarMetricParams,
    p: f64,
    q: f64,
    radius_steps: usize,
    rng: ChaCha8Rng,
    residual: ErrorConfig,
    particles: Vec<SpacetimeParticle>,
    /// Engaged pairs by particle id, in formation order.
    engagements: Vec<(u64, u64)>,
    next_id: u64,
    round: u64,
    /// fresh-error injection switch (disabled by the q=0 equivalence probes)
    pub inject: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundReport {
    pub failed: bool,
    pub chains_applied: usize,
}

impl MemorySimulation {
    pub fn new(k: usize, p: f64, q: f64, params: StarMetricParams, radius_steps: usize, seed: u64) -> Self {
        assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q));
        let lat = TorusLattice::new(k);
        let residual = ErrorConfig::for_torus(&lat);
        MemorySimulation {
            lat,
            params,
            p,
            q,
            radius_steps,
            rng: ChaCha8Rng::seed_from_u64(seed),
            residual,
            particles: Vec::new(),
            engagements: Vec::new(),
            next_id: 0,
            round: 0,
            inject: true,
        }
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lat
    }

    pub fn residual(&self) -> &ErrorConfig {
        &self.residual
    }

    pub fn particles(&self) -> &[SpacetimeParticle] {
        &self.particles
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Replace the trial stream (fixture interface for equivalence probes).
    pub fn set_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    /// Inject a fixed error pattern (fixture interface).
    pub fn inject_pattern(&mut self, pattern: &ErrorConfig) {
        self.residual.xor_assign(pattern);
    }

    /// Smallest probe radius at which a real-error eclipse within the radius
    /// is at least as likely as a ghost eclipse.
    fn ghost_probe_radius(&self) -> usize {
        if self.q == 0.0 || self.p == 0.0 {
            return 1;
        }
        let r = (self.q / (4.0 * self.p)).ceil() as usize;
        r.clamp(1, self.lat.k() / 2)
    }

    fn index_of(&self, id: u64) -> Option<usize> {
        self.particles.iter().position(|p| p.id == id)
    }

    /// One round: inject fresh errors, measure the syndrome noisily,
    /// reconcile world lines, re-check engaged pairs against the cut-off,
    /// pair newly available particles, then check for failure. On failure
    /// the lattice is reset to an error-free state.
    pub fn step(&mut self) -> RoundReport {
        self.round += 1;
        if self.inject && self.p > 0.0 {
            let fresh = sample_errors(self.lat.num_edges(), self.p, &mut self.rng).unwrap();
            self.residual.xor_assign(&fresh);
        }

        let mut true_defects = vec![false; self.lat.num_vertices()];
        for e in self.residual.iter_edges() {
            let (u, v) = self.lat.edge_endpoints(e);
            true_defects[self.lat.vertex_index(u)] ^= true;
            true_defects[self.lat.vertex_index(v)] ^= true;
        }
        let observed = measure_syndrome_noisy(&self.lat, &true_defects, self.q, &mut self.rng);

        self.reconcile(&observed);
        let mut chains = self.recheck_engagements();
        chains += self.pair_and_apply();

        let failed = self.residual_failure();
        if failed {
            self.residual.clear();
            self.particles.clear();
            self.engagements.clear();
        }
        RoundReport { failed, chains_applied: chains }
    }

    /// Track world lines against this round's observed syndrome: surviving
    /// particles keep their age, eclipsed ones probe for an heir or are
    /// manually reinstated (at most 3 consecutive times), and unclaimed
    /// observed defects become newborns.
    fn reconcile(&mut self, observed: &[bool]) {
        let lat = self.lat;
        let mut observed_free = observed.to_vec();
        let mut tracked = vec![false; lat.num_vertices()];
        for part in &self.particles {
            tracked[lat.vertex_index(part.site)] = true;
        }

        let r_g = self.ghost_probe_radius();
        let mut survivors: Vec<SpacetimeParticle> = Vec::with_capacity(self.particles.len());
        let mut dropped: Vec<u64> = Vec::new();
        let particles = std::mem::take(&mut self.particles);
        for mut part in particles {
            let idx = lat.vertex_index(part.site);
            if observed_free[idx] {
                observed_free[idx] = false;
                part.reinstatements = 0;
                survivors.push(part);
            } else if let Some(heir) = age_inheritance_probe(&lat, part.site, &observed_free, &tracked, r_g) {
                tracked[idx] = false;
                tracked[lat.vertex_index(heir)] = true;
                observed_free[lat.vertex_index(heir)] = false;
                part.site = heir;
                part.reinstatements = 0;
                survivors.push(part);
            } else {
                // adjust the syndrome record by hand, conserving age
                part.reinstatements += 1;
                if part.reinstatements <= 3 {
                    survivors.push(part);
                } else {
                    tracked[idx] = false;
                    dropped.push(part.id);
                }
            }
        }
        for (idx, free) in observed_free.iter().enumerate() {
            if *free {
                survivors.push(SpacetimeParticle {
                    site: lat.vertex_at(idx),
                    birth_round: self.round,
                    paired: false,
                    reinstatements: 0,
                    id: self.next_id,
                });
                self.next_id += 1;
            }
        }
        self.particles = survivors;
        // widowed partners of dropped particles return to the pool
        if !dropped.is_empty() {
            let mut widowed: Vec<u64> = Vec::new();
            self.engagements.retain(|&(a, b)| {
                let gone = dropped.contains(&a) || dropped.contains(&b);
                if gone {
                    widowed.push(a);
                    widowed.push(b);
                }
                !gone
            });
            for part in &mut self.particles {
                if widowed.contains(&part.id) {
                    part.paired = false;
                }
            }
        }
    }

    /// Re-check engaged pairs (formation order) against the cut-off with
    /// current ages and sites; apply the joining chain when it passes.
    fn recheck_engagements(&mut self) -> usize {
        let mut applied = 0usize;
        let engagements = std::mem::take(&mut self.engagements);
        for (ida, idb) in engagements {
            let (ia, ib) = match (self.index_of(ida), self.index_of(idb)) {
                (Some(a), Some(b)) => (a, b),
                _ => unreachable!("engagement with missing particle"),
            };
            if self.try_apply(ia, ib) {
                applied += 1;
                self.particles.retain(|p| p.id != ida && p.id != idb);
            } else {
                self.engagements.push((ida, idb));
            }
        }
        applied
    }

    /// Cut-off check for a candidate pair; applies the chain when it passes.
    fn try_apply(&mut self, i: usize, j: usize) -> bool {
        let (a, b) = (self.particles[i], self.particles[j]);
        let l = self.lat.vertex_distance(a.site, b.site) as f64;
        let dt = a.birth_round as i64 - b.birth_round as i64;
        let ls = star_distance(l, dt, &self.params);
        if pairing_cutoff_check(a.age(self.round), b.age(self.round), ls, &self.params) {
            for e in self.lat.shortest_path(a.site, b.site) {
                self.residual.flip(e);
            }
            true
        } else {
            false
        }
    }

    fn pair_and_apply(&mut self) -> usize {
        let pairs = pair_octahedra(&self.lat, &self.particles, &self.params, self.radius_steps, &mut self.rng);
        let mut applied = 0usize;
        let mut remove: Vec<u64> = Vec::new();
        for (i, j) in pairs {
            if self.try_apply(i, j) {
                applied += 1;
                remove.push(self.particles[i].id);
                remove.push(self.particles[j].id);
            } else {
                // engaged: wait for the ages to clear the cut-off
                let (ida, idb) = (self.particles[i].id, self.particles[j].id);
                self.particles[i].paired = true;
                self.particles[j].paired = true;
                self.engagements.push((ida, idb));
            }
        }
        self.particles.retain(|p| !remove.contains(&p.id));
        applied
    }

    /// Failure if the residual contains a non-contractible loop or an open
    /// chain whose endpoints are spatially separated by k or more, detected
    /// by lifting each connected component to universal-cover coordinates.
    pub fn residual_failure(&self) -> bool {
        residual_failure(&self.lat, &self.residual)
    }
}

/// Universal-cover failure test shared by the simulation and its tests.
pub fn residual_failure(lat: &TorusLattice, residual: &ErrorConfig) -> bool {
    let k = lat.k() as i64;
    let nv = lat.num_vertices();
    let mut adj: Vec<Vec<(usize, i64, i64)>> = vec![Vec::new(); nv];
    let mut degree = vec![0u32; nv];
    let mut touched = Vec::new();
    for e in residual.iter_edges() {
        let (u, v) = lat.edge_endpoints(e);
        let (ui, vi) = (lat.vertex_index(u), lat.vertex_index(v));
        let (dx, dy) = match lat.edge_at(e).orientation {
            Orientation::Horizontal => (1i64, 0i64),
            Orientation::Vertical => (0i64, 1i64),
        };
        adj[ui].push((vi, dx, dy));
        adj[vi].push((ui, -dx, -dy));
        degree[ui] += 1;
        degree[vi] += 1;
        touched.push(ui);
        touched.push(vi);
    }
    let mut lift: Vec<Option<(i64, i64)>> = vec![None; nv];
    let mut queue = Vec::new();
    for &start in &touched {
        if lift[start].is_some() {
            continue;
        }
        lift[start] = Some((0, 0));
        queue.clear();
        queue.push(start);
        let mut endpoints: Vec<(i64, i64)> = Vec::new();
        while let Some(u) = queue.pop() {
            let (ux, uy) = lift[u].unwrap();
            if degree[u] % 2 == 1 {
                endpoints.push((ux, uy));
            }
            for &(v, dx, dy) in &adj[u] {
                let cand = (ux + dx, uy + dy);
                match lift[v] {
                    None => {
                        lift[v] = Some(cand);
                        queue.push(v);
                    }
                    Some(existing) => {
                        if existing != cand {
                            return true; // inconsistent lift: NC loop
                        }
                    }
                }
            }
        }
        // an endpoint may be noted more than once through parallel paths
        endpoints.sort_unstable();
        endpoints.dedup();
        for i in 0..endpoints.len() {
            for j in (i + 1)..endpoints.len() {
                let sep = (endpoints[i].0 - endpoints[j].0).abs()
                    + (endpoints[i].1 - endpoints[j].1).abs();
                if sep >= k {
                    return true;
                }
            }
        }
    }
    false
}

/// Rounds excluded from statistics after every reset (and at start).
pub const WARMUP_ROUNDS: u64 = 20;

/// Long-run memory simulation: the failure rate is the number of reset
/// events divided by the number of counted (post-warm-up) rounds.
pub fn run_memory_simulation(k: usize, p: f64, q: f64, n_rounds: u64, seed: u64) -> FailureSample {
    run_memory_simulation_with(k, p, q, n_rounds, seed, StarMetricParams::default(), 5)
}

pub fn run_memory_simulation_with(
    k: usize,
    p: f64,
    q: f64,
    n_rounds: u64,
    seed: u64,
    params: StarMetricParams,
    radius_steps: usize,
) -> FailureSample {
    assert!(n_rounds >= 1);
    let mut sim = MemorySimulation::new(k, p, q, params, radius_steps, seed);
    let mut since_reset = 0u64;
    let mut counted = 0u64;
    let mut failures = 0u64;
    for _ in 0..n_rounds {
        since_reset += 1;
        let in_stats = since_reset > WARMUP_ROUNDS;
        let report = sim.step();
        if in_stats {
            counted += 1;
            if report.failed {
                failures += 1;
            }
        }
        if report.failed {
            since_reset = 0;
        }
    }
    FailureSample { k, p, q, trials: counted, failures }
}
