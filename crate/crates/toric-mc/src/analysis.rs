//! Exact evaluation of the closed-form bounds: Cantor-chain lengths, Sigma
//! and h recursions, the numeric threshold constants, octahedral volumes,
//! *-metric maximal lengths, g factors, qp-plane threshold curves, and the
//! failure-probability bounds.

pub mod h3_oracle;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::decoder3d::StarMetricParams;
use crate::BETA;

/// 1/beta = log2(3).
pub const S: f64 = 1.584962500721156_f64;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("p = {p} is not below p_c = {p_c}; the bound is meaningless there")]
    AboveThreshold { p: f64, p_c: f64 },
    #[error("(q, p) = ({q}, {p}) lies outside the sub-threshold region")]
    OutsideRegion { q: f64, p: f64 },
    #[error("missing small-case h3 entry ({n}, {n_bar})")]
    MissingH3 { n: u32, n_bar: u32 },
}

// --- Cantor chains --------------------------------------------------------

/// Maximal 1d/2d chain length l(n).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CantorLength {
    /// Derived exactly (n a power of 2, 2^N - 1, or 2^L - 2^M).
    Exact(u64),
    /// Only the general bound n^(1/beta) applies.
    Bound(u64),
}

impl CantorLength {
    pub fn value(self) -> u64 {
        match self {
            CantorLength::Exact(v) | CantorLength::Bound(v) => v,
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, CantorLength::Exact(_))
    }
}

/// l(2^L) = 3^L; l(2^N - 1) = 3^N - 2^N; l(2^L - 2^M) = 3^L - (3/2)^M 2^L;
/// other n get the bound floor(n^(1/beta)).
pub fn cantor_length(n: u64) -> CantorLength {
    assert!(n >= 1);
    if n.is_power_of_two() {
        let l = n.trailing_zeros();
        return CantorLength::Exact(3u64.pow(l));
    }
    if (n + 1).is_power_of_two() {
        let nn = (n + 1).trailing_zeros();
        return CantorLength::Exact(3u64.pow(nn) - 2u64.pow(nn));
    }
    // n = 2^L - 2^M with 0 < M < L: exactly two runs in binary
    let l = 64 - n.leading_zeros();
    let m = n.trailing_zeros();
    if n == (1u64 << l) - (1u64 << m) {
        // 3^L - 3^M 2^(L-M)
        return CantorLength::Exact(3u64.pow(l) - 3u64.pow(m) * 2u64.pow(l - m));
    }
    CantorLength::Bound((n as f64).powf(S).floor() as u64)
}

/// Maximal joined sub-chain length (2/m)[(n-m) n^(1/b) - n (n-m)^(1/b)],
/// strictly increasing on 1 <= m <= n/2.
pub fn l_ss(m: f64, n: f64) -> f64 {
    assert!(m >= 1.0 && 2.0 * m <= n);
    (2.0 / m) * ((n - m) * n.powf(S) - n * (n - m).powf(S))
}

// --- Sigma sums and the 1d/2d rate constants ------------------------------

/// Sum_{m=1}^{M} m^s, exact below the anchor and by Euler-Maclaurin above;
/// anchoring at an exact partial sum avoids any zeta-function constant.
fn power_sum(s: f64, m: f64) -> f64 {
    const ANCHOR: u64 = 4096;
    let direct = |hi: u64| -> f64 { (1..=hi).map(|v| (v as f64).powf(s)).sum() };
    if m <= ANCHOR as f64 {
        return direct(m as u64);
    }
    let (a, b) = (ANCHOR as f64, m);
    let head = direct(ANCHOR);
    let integral = (b.powf(s + 1.0) - a.powf(s + 1.0)) / (s + 1.0);
    let t1 = (b.powf(s) - a.powf(s)) / 2.0;
    let t2 = s * (b.powf(s - 1.0) - a.powf(s - 1.0)) / 12.0;
    let t3 = s * (s - 1.0) * (s - 2.0) * (b.powf(s - 3.0) - a.powf(s - 3.0)) / 720.0;
    head + integral + t1 + t2 - t3
}

/// Sigma_1(n) = Sum_{m=1}^{n-1} (m_<^(1/b) + 1) with m_< = min(m, n-m).
pub fn sigma1(n: u64) -> f64 {
    assert!(n >= 2);
    if n <= 8192 {
        return (1..n).map(|m| (m.min(n - m) as f64).powf(S) + 1.0).sum();
    }
    assert!(n % 2 == 0);
    sigma1_even(n as f64)
}

/// Even-n closed form on reals (depth-doubling checks push n past u64).
fn sigma1_even(n: f64) -> f64 {
    (n - 1.0) + 2.0 * power_sum(S, n / 2.0 - 1.0) + (n / 2.0).powf(S)
}

/// Sigma_2(n) = Sum_{m=1}^{n-1} 2 m_<^(1/b) (m_<^(1/b) + 1) + 1.
pub fn sigma2(n: u64) -> f64 {
    assert!(n >= 2);
    if n <= 8192 {
        return (1..n)
            .map(|m| {
                let x = (m.min(n - m) as f64).powf(S);
                2.0 * x * (x + 1.0) + 1.0
            })
            .sum();
    }
    assert!(n % 2 == 0);
    sigma2_even(n as f64)
}

fn sigma2_even(n: f64) -> f64 {
    let half = (n / 2.0).powf(S);
    let half2 = (n / 2.0).powf(2.0 * S);
    (n - 1.0)
        + 4.0 * power_sum(2.0 * S, n / 2.0 - 1.0)
        + 4.0 * power_sum(S, n / 2.0 - 1.0)
        + 2.0 * half2
        + 2.0 * half
}

/// h1(1) Prod_{L=1}^{inf} Sigma_1(2^L)^(2^-L) ~ 8.872, truncated at the
/// given depth.
pub fn h1_rate_depth(l_max: u32) -> f64 {
    let lg: f64 =
        (1..=l_max).map(|l| sigma1_even(f64::powi(2.0, l as i32)).ln() / f64::powi(2.0, l as i32)).sum();
    lg.exp()
}

/// 1d chain-counting rate constant, truncated when the tail is below 1e-6.
pub fn h1_rate() -> f64 {
    converged_rate(h1_rate_depth)
}

/// h2(4)^(1/4) Prod_{L=3}^{inf} Sigma_2(2^L)^(2^-L) ~ 75.38 with the
/// published bound h2(4) <= 4997.
pub fn h2_rate_depth(l_max: u32) -> f64 {
    let lg: f64 =
        (3..=l_max).map(|l| sigma2_even(f64::powi(2.0, l as i32)).ln() / f64::powi(2.0, l as i32)).sum();
    (4997f64.powf(0.25)) * lg.exp()
}

/// 2d chain-counting rate constant (implies p_c >= 1/75.38).
pub fn h2_rate() -> f64 {
    converged_rate(h2_rate_depth)
}

fn converged_rate(depth_fn: impl Fn(u32) -> f64) -> f64 {
    let mut prev = depth_fn(8);
    for l in 9..=48 {
        let cur = depth_fn(l);
        if (cur - prev).abs() < 1e-7 {
            return cur;
        }
        prev = cur;
    }
    prev
}

// --- octahedral volumes and *-metric maximal lengths ----------------------

/// V(l*) = Sum_{dT=-[l*/a]}^{[l*/a]} 2 [l* - a|dT|] ([l* - a|dT|] + 1) + 1,
/// the number of spacetime lattice points within *-distance l*.
pub fn octa_volume(l_star: f64, params: &StarMetricParams) -> u64 {
    if l_star < 0.0 {
        return 0;
    }
    let d = (l_star / params.alpha).floor() as i64;
    let mut total = 0u64;
    for dt in -d..=d {
        let r = (l_star - params.alpha * (dt.unsigned_abs() as f64)).floor() as u64;
        total += 2 * r * (r + 1) + 1;
    }
    total
}

/// Smooth large-l* volume (floors dropped); agrees with `octa_volume` to
/// relative O(1/l*) and is used inside the large-n Sigma_3 sums.
fn octa_volume_smooth(l_star: f64, params: &StarMetricParams) -> f64 {
    let a = params.alpha;
    let d = (l_star / a).floor();
    let l2 = l_star * l_star;
    let sx2 = l2 + 2.0 * (d * l2 - a * l_star * d * (d + 1.0) + a * a * d * (d + 1.0) * (2.0 * d + 1.0) / 6.0);
    2.0 * sx2 + (2.0 * d + 1.0) / 3.0
}

fn octa_volume_f(l_star: f64, params: &StarMetricParams) -> f64 {
    if l_star < 0.0 {
        0.0
    } else if l_star < 60.0 {
        octa_volume(l_star, params) as f64
    } else {
        octa_volume_smooth(l_star, params)
    }
}

/// Bound on the *-metric length of a chain of n real errors and n_bar
/// ghosts: the five published regimes with step-function interpolation
/// (conservative maximum of the bracketing formulas).
pub fn lstar_max(n: f64, n_bar: f64, params: &StarMetricParams) -> f64 {
    assert!(n >= 0.0 && n_bar >= 0.0 && n + n_bar > 0.0);
    let a = params.alpha;
    if n_bar == 0.0 {
        return n.powf(S);
    }
    let dilute = (6.0 + 2.0 * a) * n.powf(S) + (7.0 + 8.0 * a) * (n_bar / 6.0).powf(S);
    if n == 0.0 {
        return (7.0 + 8.0 * a) * (n_bar / 6.0).powf(S);
    }
    let r = n / n_bar;
    let sparse_ghosts = n.powf(S) + (2.0 * a + 2.0) * n_bar.powf(S);
    let double = (3.0 + 2.0 * a) * n_bar.powf(S);
    let equal = (2.0 + a) * n_bar.powf(S);
    // published anchor points are exact; strictly between them the
    // conservative step interpolation takes the larger bracketing formula
    if r >= 4.0 {
        sparse_ghosts
    } else if r == 2.0 {
        double
    } else if r > 2.0 {
        sparse_ghosts.max(double)
    } else if r == 1.0 {
        equal
    } else if r > 1.0 {
        double.max(equal)
    } else if r >= 1.0 / 6.0 {
        equal.max(dilute)
    } else {
        dilute
    }
}

// --- Sigma_3 ---------------------------------------------------------------

fn lstar_pair_min(m: f64, mb: f64, n: f64, nb: f64, params: &StarMetricParams) -> f64 {
    let left = if m == 0.0 && mb == 0.0 { 0.0 } else { lstar_max(m, mb, params) };
    let rm = n - m;
    let rmb = nb - mb;
    let right = if rm == 0.0 && rmb == 0.0 { 0.0 } else { lstar_max(rm, rmb, params) };
    left.min(right)
}

/// Sigma_3(n, n_bar) = Sum_{m, m_bar} V(l*(m, m_bar)_<). Exact double sum
/// for affordable sizes; for larger arguments the long axis is summed by a
/// trapezoidal integral on a geometric grid with exact ends (the result
/// feeds (2^-L)-damped products, so sub-percent accuracy suffices).
pub fn sigma3(n: u64, n_bar: u64, params: &StarMetricParams) -> f64 {
    const EXACT_CELLS: u64 = 2_000_000;
    if (n + 1).saturating_mul(n_bar + 1) <= EXACT_CELLS {
        let mut tot = 0.0;
        for m in 0..=n {
            for mb in 0..=n_bar {
                let l = lstar_pair_min(m as f64, mb as f64, n as f64, n_bar as f64, params);
                tot += octa_volume_f(l, params);
            }
        }
        return tot;
    }
    // orient so the outer (exact) loop runs over the short axis
    let (long, short, swapped) = if n >= n_bar { (n, n_bar, false) } else { (n_bar, n, true) };
    let mut tot = 0.0;
    for msh in 0..=short {
        tot += sigma3_inner(long, short, msh, swapped, params);
    }
    tot
}

/// Sum over the long axis at fixed short-axis coordinate.
fn sigma3_inner(long: u64, short: u64, msh: u64, swapped: bool, params: &StarMetricParams) -> f64 {
    let f = |m: f64| -> f64 {
        let (a, ab, n, nb) = if swapped {
            (msh as f64, m, short as f64, long as f64)
        } else {
            (m, msh as f64, long as f64, short as f64)
        };
        octa_volume_f(lstar_pair_min(a, ab, n, nb, params), params)
    };
    const K: u64 = 1024;
    if long <= 2 * K + 16 {
        return (0..=long).map(|m| f(m as f64)).sum();
    }
    let mut tot: f64 = (0..=K).map(|m| f(m as f64)).sum();
    tot += ((long - K)..=long).map(|m| f(m as f64)).sum::<f64>();
    // middle: piecewise smooth, split at the crossover of the two lstar
    // branches, each piece integrated on a geometric grid
    let (lo, hi) = ((K + 1) as f64, (long - K - 1) as f64);
    let mut cross = {
        let g = |m: f64| -> f64 {
            let (a, ab, n, nb) = if swapped {
                (msh as f64, m, short as f64, long as f64)
            } else {
                (m, msh as f64, long as f64, short as f64)
            };
            lstar_max(a, ab, params) - lstar_max(n - a, nb - ab, params)
        };
        let (mut x0, mut x1) = (lo, hi);
        if g(x0) >= 0.0 {
            x0
        } else if g(x1) <= 0.0 {
            x1
        } else {
            for _ in 0..60 {
                let mid = 0.5 * (x0 + x1);
                if g(mid) < 0.0 {
                    x0 = mid;
                } else {
                    x1 = mid;
                }
            }
            0.5 * (x0 + x1)
        }
    };
    cross = cross.clamp(lo, hi);
    for (a, b) in [(lo, cross), (cross, hi)] {
        if b - a < 1.0 {
            continue;
        }
        tot += geometric_sum_integral(a, b, &f);
    }
    tot
}

/// Sum_{m=a}^{b} f(m) ~ Int_a^b f + (f(a)+f(b))/2 on a geometric grid.
fn geometric_sum_integral(a: f64, b: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    const NODES: usize = 256;
    let ratio = (b / a).powf(1.0 / NODES as f64);
    let mut integral = 0.0;
    let mut x0 = a;
    let mut f0 = f(a);
    for j in 1..=NODES {
        let x1 = if j == NODES { b } else { a * ratio.powi(j as i32) };
        let f1 = f(x1);
        integral += (x1 - x0) * 0.5 * (f0 + f1);
        x0 = x1;
        f0 = f1;
    }
    integral + 0.5 * (f(a) + f(b))
}

/// ln Prod_{L=start}^{inf} Sigma_3(2^L a, 2^L b)^(2^-L): exact terms up to
/// a cost ceiling, then the tail from linear extrapolation of the ln Sigma_3
/// increments (which converge geometrically).
fn ln_sigma3_product(start: u32, a: u64, b: u64, params: &StarMetricParams) -> f64 {
    // cost of term L scales with the short axis; budget ~ 2^12 short cells
    let mut l_hi = start + 3;
    while l_hi < 24 {
        let short = (a.min(b).max(1) as u128) << (l_hi + 1);
        if short > (1 << 12) {
            break;
        }
        l_hi += 1;
    }
    let mut lg = 0.0;
    let mut lns = Vec::new();
    for l in start..=l_hi {
        let s3 = sigma3(a << l, b << l, params).ln();
        lns.push(s3);
        lg += s3 / f64::powi(2.0, l as i32);
    }
    let d = lns[lns.len() - 1] - lns[lns.len() - 2];
    let a_last = lns[lns.len() - 1];
    // Sum_{j>=1} (A + d j) 2^-(l_hi + j) = 2^-l_hi (A + 2 d)
    lg += (a_last + 2.0 * d) / f64::powi(2.0, l_hi as i32);
    lg
}

// --- small-h3 table and the g factors --------------------------------------

/// Small-case h3 bounds: directly enumerated entries plus recursion-derived
/// ones, enough to evaluate Eq.-(eq:9)-type products with N = min(M, 4).
#[derive(Debug, Clone)]
pub struct H3Table {
    entries: BTreeMap<(u32, u32), f64>,
}

/// Oracle output shipped with the crate; regenerate with the ignored test
/// `h3_oracle_regenerate` in tests/oracle.rs.
const H3_SMALL_DATA: &str = include_str!("../data/h3_small.csv");

impl H3Table {
    pub fn from_entries(direct: &[((u32, u32), f64)]) -> Result<Self, AnalysisError> {
        let mut entries: BTreeMap<(u32, u32), f64> = direct.iter().copied().collect();
        let params = StarMetricParams::default();
        for &(n, nb) in
            &[(1u32, 0u32), (2, 0), (4, 0), (0, 1), (0, 2), (1, 1), (2, 1), (1, 2)]
        {
            if !entries.contains_key(&(n, nb)) {
                return Err(AnalysisError::MissingH3 { n, n_bar: nb });
            }
        }
        // recursion fills the rest: h3(2n,0) <= Sigma3(2n,0) h3(n,0)^2 and
        // h3(n,1) <= 2 Sigma3(n,0) h3(n/2,0) h3(n/2,1), plus mirrors; the
        // ghost-side (0,4) is derived rather than enumerated (its direct
        // enumeration is far more expensive than the error-side anchor)
        if !entries.contains_key(&(0, 4)) {
            let h02 = entries[&(0, 2)];
            entries.insert((0, 4), sigma3(0, 4, &params) * h02 * h02);
        }
        for l in [8u32, 16] {
            let half = entries[&(l / 2, 0)];
            entries.insert((l, 0), sigma3(l as u64, 0, &params) * half * half);
            let halfb = entries[&(0, l / 2)];
            entries.insert((0, l), sigma3(0, l as u64, &params) * halfb * halfb);
        }
        for l in [4u32, 8, 16] {
            let v = 2.0 * sigma3(l as u64, 0, &params) * entries[&(l / 2, 0)] * entries[&(l / 2, 1)];
            entries.insert((l, 1), v);
            let vb = 2.0 * sigma3(0, l as u64, &params) * entries[&(0, l / 2)] * entries[&(1, l / 2)];
            entries.insert((1, l), vb);
        }
        Ok(H3Table { entries })
    }

    /// Parse the shipped oracle output (lines `n,n_bar,value`).
    pub fn from_embedded() -> Result<Self, AnalysisError> {
        let mut direct = Vec::new();
        for line in H3_SMALL_DATA.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split(',');
            let n: u32 = it.next().unwrap().trim().parse().unwrap();
            let nb: u32 = it.next().unwrap().trim().parse().unwrap();
            let v: f64 = it.next().unwrap().trim().parse().unwrap();
            direct.push(((n, nb), v));
        }
        Self::from_entries(&direct)
    }

    pub fn get(&self, n: u32, n_bar: u32) -> Result<f64, AnalysisError> {
        self.entries.get(&(n, n_bar)).copied().ok_or(AnalysisError::MissingH3 { n, n_bar })
    }
}

/// Published small-case constants used as pinned invariants; the oracle's
/// own counts are recorded alongside the data file as cross-checks.
pub const H3_4_0_PUBLISHED: f64 = 5105.0;
pub const H2_4_BOUND: f64 = 4997.0;

/// Bundled inputs of every chain-counting bound.
pub struct ChainBoundParams {
    pub star: StarMetricParams,
    /// Recursion truncation depth for the infinite products.
    pub l_max: u32,
    pub h3_small: H3Table,
}

impl ChainBoundParams {
    pub fn standard() -> Result<Self, AnalysisError> {
        let h3_small = H3Table::from_embedded()?;
        assert_eq!(h3_small.get(4, 0)?, H3_4_0_PUBLISHED);
        Ok(ChainBoundParams { star: StarMetricParams::default(), l_max: 40, h3_small })
    }
}

/// Error-ghost composition n_hat = n / n_bar on the 2^M grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NHat {
    /// n_hat = 2^M (M >= 0: more errors than ghosts; M < 0: the reverse).
    Pow2(i32),
    /// n_hat = infinity: no ghosts at all.
    AllErrors,
    /// n_hat = 0: no real errors at all.
    AllGhosts,
}

/// g(n_hat, q) of Eq. (eq:9) for n_hat = 2^M >= 1: the bracketed bound on
/// (q^n_bar h3(n, n_bar))^(1/n), with recursion limit N = min(M, 4).
pub fn g_factor(m: u32, q: f64, table: &H3Table, params: &StarMetricParams) -> Result<f64, AnalysisError> {
    let n_hat = f64::powi(2.0, m as i32);
    let n_cap = m.min(4);
    let pow_n = 1u32 << n_cap;
    let h_n1 = table.get(pow_n, 1)?;
    let h_n0 = table.get(pow_n, 0)?;
    let ln_prod_mixed = ln_sigma3_product(n_cap + 1, 1u64 << m, 1, params);
    let ln_bracket =
        (n_hat * q / f64::powi(2.0, n_cap as i32)).ln() + (h_n1 / h_n0).ln() + ln_prod_mixed;
    let mut lg = ln_bracket / n_hat + h_n0.ln() / f64::powi(2.0, n_cap as i32);
    // second product runs L = N+1 .. M (unity when n_hat <= 2^N)
    for l in (n_cap + 1)..=m {
        lg += sigma3(1u64 << l, 0, params).ln() / f64::powi(2.0, l as i32);
    }
    Ok(lg.exp())
}

/// The mirrored expression bounding (p^n h3(n, n_bar))^(1/n_bar) for
/// 1/n_hat = 2^M >= 1 (ghost-dominated chains).
pub fn gbar_factor(m: u32, p: f64, table: &H3Table, params: &StarMetricParams) -> Result<f64, AnalysisError> {
    let inv_n_hat = f64::powi(2.0, m as i32);
    let n_cap = m.min(4);
    let pow_n = 1u32 << n_cap;
    let h_1n = table.get(1, pow_n)?;
    let h_0n = table.get(0, pow_n)?;
    let ln_prod_mixed = ln_sigma3_product(n_cap + 1, 1, 1u64 << m, params);
    let ln_bracket =
        (inv_n_hat * p / f64::powi(2.0, n_cap as i32)).ln() + (h_1n / h_0n).ln() + ln_prod_mixed;
    let mut lg = ln_bracket / inv_n_hat + h_0n.ln() / f64::powi(2.0, n_cap as i32);
    for l in (n_cap + 1)..=m {
        lg += sigma3(0, 1u64 << l, params).ln() / f64::powi(2.0, l as i32);
    }
    Ok(lg.exp())
}

/// g(infinity, .) = h3(16,0)^(1/16) Prod_{L=5}^inf Sigma_3(2^L, 0)^(2^-L):
/// the pure-error limit, whose reciprocal cuts off the ankle.
pub fn g_factor_limit(table: &H3Table, params: &StarMetricParams) -> Result<f64, AnalysisError> {
    let h = table.get(16, 0)?;
    Ok((h.ln() / 16.0 + ln_sigma3_product(5, 1, 0, params)).exp())
}

/// The pure-ghost limit, whose reciprocal cuts off the toes.
pub fn gbar_factor_limit(table: &H3Table, params: &StarMetricParams) -> Result<f64, AnalysisError> {
    let h = table.get(0, 16)?;
    Ok((h.ln() / 16.0 + ln_sigma3_product(5, 0, 1, params)).exp())
}

/// One composition's threshold curve in the qp-plane.
#[derive(Debug, Clone)]
pub struct ThresholdCurve {
    pub n_hat: NHat,
    /// g(n_hat, 1) for error-dominated compositions, gbar(n_hat, 1) for
    /// ghost-dominated ones.
    pub g_value: f64,
    /// gamma(n_hat) <= 2 + alpha, the chain-geometry factor.
    pub gamma: f64,
    /// Sampled boundary points (q, p).
    pub points: Vec<(f64, f64)>,
}

/// gamma(n_hat): coefficient of n^(1/beta) in l*(n, n/n_hat) at large n.
pub fn gamma_of(n_hat: NHat, params: &StarMetricParams) -> f64 {
    let t = f64::powi(2.0, 40);
    match n_hat {
        NHat::AllErrors => 1.0,
        NHat::AllGhosts => lstar_max(0.0, t, params) / t.powf(S),
        NHat::Pow2(m) => {
            let nb = t / f64::powi(2.0, m);
            lstar_max(t, nb, params) / t.powf(S)
        }
    }
}

/// Threshold curves for n_hat = 2^{+-M}, M = 0..=m_max, plus both limits.
/// Also reports the ankle (p cutoff) and toe (q cutoff).
pub struct ThresholdRegion {
    pub curves: Vec<ThresholdCurve>,
    /// p = 1/g(inf, 1), the vertical cutoff from pure-error chains.
    pub ankle: f64,
    /// q = 1/gbar(inf, 1), the horizontal cutoff from pure-ghost chains.
    pub toe: f64,
}

pub fn threshold_region(
    m_max: u32,
    table: &H3Table,
    params: &StarMetricParams,
) -> Result<ThresholdRegion, AnalysisError> {
    let qgrid: Vec<f64> = (1..=60).map(|i| i as f64 * 0.0005).collect();
    let mut curves = Vec::new();
    for m in 0..=m_max {
        // error-dominated: g(n_hat, q) p = 1 with g(n_hat,q) = g(n_hat,1) q^(1/n_hat)
        let g1 = g_factor(m, 1.0, table, params)?;
        let n_hat = f64::powi(2.0, m as i32);
        let points: Vec<(f64, f64)> =
            qgrid.iter().map(|&q| (q, 1.0 / (g1 * q.powf(1.0 / n_hat)))).collect();
        curves.push(ThresholdCurve { n_hat: NHat::Pow2(m as i32), g_value: g1, gamma: gamma_of(NHat::Pow2(m as i32), params), points });
        if m > 0 {
            // ghost-dominated mirror: gbar(n_hat, p) q = 1 with n_hat = 2^-m
            let gb1 = gbar_factor(m, 1.0, table, params)?;
            let points: Vec<(f64, f64)> = qgrid
                .iter()
                .map(|&q| {
                    // q gbar(n_hat,1) p^(1/n_hat_inv exponent): q = 1/(gb1 p^(2^m)) inverted for p
                    let p = (1.0 / (gb1 * q)).powf(1.0 / f64::powi(2.0, m as i32));
                    (q, p)
                })
                .collect();
            curves.push(ThresholdCurve {
                n_hat: NHat::Pow2(-(m as i32)),
                g_value: gb1,
                gamma: gamma_of(NHat::Pow2(-(m as i32)), params),
                points,
            });
        }
    }
    let ankle = 1.0 / g_factor_limit(table, params)?;
    let toe = 1.0 / gbar_factor_limit(table, params)?;
    Ok(ThresholdRegion { curves, ankle, toe })
}

impl ThresholdRegion {
    /// Is (q, p) strictly inside the sub-threshold region?
    pub fn contains(&self, q: f64, p: f64) -> bool {
        if q < 0.0 || p < 0.0 {
            return false;
        }
        if p >= self.ankle || q >= self.toe {
            return false;
        }
        for c in &self.curves {
            match c.n_hat {
                NHat::Pow2(m) if m >= 0 => {
                    let n_hat = f64::powi(2.0, m);
                    if c.g_value * q.powf(1.0 / n_hat) * p >= 1.0 {
                        return false;
                    }
                }
                NHat::Pow2(m) => {
                    let inv = f64::powi(2.0, -m);
                    if c.g_value * p.powf(inv) * q >= 1.0 {
                        return false;
                    }
                }
                _ => {}
            }
        }
        true
    }

    /// Boundary distance along the ray (q, p) = t (sin, cos)(theta): the
    /// unique t at which the first constraint saturates.
    pub fn ray_crossing(&self, theta: f64) -> f64 {
        let (dq, dp) = (theta.sin(), theta.cos());
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.contains(mid * dq, mid * dp) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

// --- failure bounds ---------------------------------------------------------

/// e^(-2/beta) ~ 0.0420: above this fraction of p_c the k^beta exponent
/// applies rather than (k/2)^beta.
pub fn saturation_threshold_2d() -> f64 {
    (-2.0 / BETA).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentRegime {
    /// (k/2)^beta: geodesic saturation not reached.
    Half,
    /// k^beta with the k^(2+beta) prefactor.
    Full,
}

pub fn saturation_exponent_2d(p: f64, p_c: f64) -> ExponentRegime {
    if p >= saturation_threshold_2d() * p_c {
        ExponentRegime::Full
    } else {
        ExponentRegime::Half
    }
}

/// 2d failure bound: k^2 (p/p_c)^((k/2)^beta), improved to
/// k^(2+beta) (p/p_c)^(k^beta) past the saturation point.
pub fn failure_bound_2d(k: usize, p: f64) -> Result<f64, AnalysisError> {
    let p_c = 1.0 / h2_rate();
    if p == 0.0 {
        return Ok(0.0);
    }
    if p >= p_c {
        return Err(AnalysisError::AboveThreshold { p, p_c });
    }
    let kf = k as f64;
    Ok(match saturation_exponent_2d(p, p_c) {
        ExponentRegime::Half => kf.powi(2) * (p / p_c).powf((kf / 2.0).powf(BETA)),
        ExponentRegime::Full => kf.powf(2.0 + BETA) * (p / p_c).powf(kf.powf(BETA)),
    })
}

/// 2 e^(-2/beta) ~ 0.0840, the 3d saturation threshold on p/p_c.
pub fn saturation_threshold_3d() -> f64 {
    2.0 * (-2.0 / BETA).exp()
}

/// Exponent coefficient of the p = 2q prediction line: with saturation the
/// exponent is (3k/2 gamma)^beta per threshold, and the q p = p^2/2 square
/// doubles it, giving 2 (3/(2(2+alpha)))^beta ~ 1.0143.
pub fn prediction_coefficient_3d(params: &StarMetricParams) -> f64 {
    2.0 * (3.0 / (2.0 * (2.0 + params.alpha))).powf(BETA)
}

/// 3d failure bound of Eq. (eq:10): k^3 (p/p_c)^((c k / 2 gamma)^beta) +
/// k^3 (q/q_c)^((c k / 2 gamma_bar)^beta), with c = 3 past saturation.
/// p_c and q_c come from the dominant composition's curve at this (q, p).
pub fn failure_bound_3d(
    k: usize,
    p: f64,
    q: f64,
    region: &ThresholdRegion,
    params: &StarMetricParams,
) -> Result<f64, AnalysisError> {
    if p == 0.0 && q == 0.0 {
        return Ok(0.0);
    }
    if !region.contains(q, p) {
        return Err(AnalysisError::OutsideRegion { q, p });
    }
    debug_assert!(region.curves.iter().all(|c| c.gamma <= 2.0 + params.alpha + 1e-9));
    // dominant compositions: largest constraint value on each side
    let mut best_err: Option<(f64, f64)> = None; // (g q^(1/n_hat), gamma)
    let mut best_gho: Option<(f64, f64)> = None;
    for c in &region.curves {
        match c.n_hat {
            NHat::Pow2(m) if m >= 0 => {
                let val = c.g_value * q.powf(1.0 / f64::powi(2.0, m));
                if best_err.map_or(true, |(v, _)| val > v) {
                    best_err = Some((val, c.gamma));
                }
            }
            NHat::Pow2(m) => {
                let val = c.g_value * p.powf(f64::powi(2.0, -m));
                if best_gho.map_or(true, |(v, _)| val > v) {
                    best_gho = Some((val, c.gamma));
                }
            }
            _ => {}
        }
    }
    let kf = k as f64;
    let mut total = 0.0;
    if let Some((g, gamma)) = best_err {
        let ratio = p * g; // p / p_c with p_c = 1/g
        let c = if ratio >= saturation_threshold_3d() { 3.0 } else { 1.0 };
        total += kf.powi(3) * ratio.powf((c * kf / (2.0 * gamma)).powf(BETA));
    }
    if let Some((gb, gamma_bar)) = best_gho {
        let ratio = q * gb;
        let c = if ratio >= saturation_threshold_3d() { 3.0 } else { 1.0 };
        total += kf.powi(3) * ratio.powf((c * kf / (2.0 * gamma_bar)).powf(BETA));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> StarMetricParams {
        StarMetricParams::default()
    }

    #[test]
    fn cantor_special_cases() {
        assert_eq!(cantor_length(2), CantorLength::Exact(3));
        assert_eq!(cantor_length(8), CantorLength::Exact(27));
        assert_eq!(cantor_length(6), CantorLength::Exact(15));
        assert_eq!(cantor_length(7), CantorLength::Exact(19));
        assert_eq!(cantor_length(3), CantorLength::Exact(5));
        for l in 0..=10u32 {
            assert_eq!(cantor_length(1 << l), CantorLength::Exact(3u64.pow(l)));
        }
        // 2^L - 2^M family
        assert_eq!(cantor_length(12), CantorLength::Exact(81 - 9 * 4));
        // 11 = 1011b is none of the families
        assert!(!cantor_length(11).is_exact());
    }

    #[test]
    fn cantor_bounded_by_power_law() {
        for n in 1..=64u64 {
            let l = cantor_length(n).value() as f64;
            let bound = (n as f64).powf(S);
            assert!(l <= bound + 1e-6, "l({n}) = {l} > {bound}");
            if n.is_power_of_two() {
                assert!((l - bound).abs() < 1e-6);
            } else {
                assert!(l < bound - 1e-9, "equality off powers of two: n = {n}");
            }
        }
    }

    #[test]
    fn lss_monotone_and_special() {
        // the published formula is strictly monotone in m, but in the
        // decreasing direction: its small-m limit is 2(1/beta - 1)n^(1/beta),
        // above the even-split value 2(n/2)^(1/beta) it reaches at m = n/2
        for &n in &[8u64, 16, 32, 64, 128, 256, 512, 1024] {
            let nf = n as f64;
            let mut prev = l_ss(1.0, nf);
            for m in 2..=(n / 2) {
                let cur = l_ss(m as f64, nf);
                assert!(cur < prev, "l_ss not strictly monotone at n={n}, m={m}");
                prev = cur;
            }
            // m = n/2 collapses to 2 l(n/2)
            let end = l_ss(nf / 2.0, nf);
            assert!((end - 2.0 * (nf / 2.0).powf(S)).abs() < 1e-6 * end);
        }
        let direct = 2.0 * (3.0 * 4f64.powf(S) - 4.0 * 3f64.powf(S));
        assert!((l_ss(1.0, 4.0) - direct).abs() < 1e-12);
    }

    #[test]
    fn sigma_small_values() {
        assert!((sigma1(2) - 2.0).abs() < 1e-12);
        let s14 = 2.0 + (2f64.powf(S) + 1.0) + 2.0;
        assert!((sigma1(4) - s14).abs() < 1e-12);
        assert!((sigma2(2) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn power_sum_matches_direct() {
        for &s in &[S, 2.0 * S] {
            let direct: f64 = (1..=100_000u64).map(|v| (v as f64).powf(s)).sum();
            let em = power_sum(s, 100_000.0);
            assert!((em - direct).abs() < 1e-9 * direct, "s={s}: {em} vs {direct}");
        }
    }

    #[test]
    fn sigma_formula_matches_direct_at_crossover() {
        // the closed form (n > 8192) must agree with the direct sum
        let direct1: f64 = (1..16384u64).map(|m| (m.min(16384 - m) as f64).powf(S) + 1.0).sum();
        assert!((sigma1(16384) - direct1).abs() < 1e-8 * direct1);
        let direct2: f64 = (1..16384u64)
            .map(|m| {
                let x = (m.min(16384 - m) as f64).powf(S);
                2.0 * x * (x + 1.0) + 1.0
            })
            .sum();
        assert!((sigma2(16384) - direct2).abs() < 1e-8 * direct2);
    }

    #[test]
    fn h1_rate_in_published_window() {
        let h1 = h1_rate();
        assert!((8.871..=8.873).contains(&h1), "h1 = {h1}");
        // implied 1d threshold
        assert!((1.0 / h1 - 1.0 / 8.872).abs() < 1e-4);
    }

    #[test]
    fn h2_rate_in_published_window() {
        let h2 = h2_rate();
        assert!((75.37..=75.39).contains(&h2), "h2 = {h2}");
    }

    #[test]
    fn rates_stable_under_depth_doubling() {
        // the default truncation depth is 40; doubling it must not move
        // either constant by more than 1e-6
        assert!((h1_rate_depth(40) - h1_rate_depth(80)).abs() < 1e-6);
        assert!((h2_rate_depth(40) - h2_rate_depth(80)).abs() < 1e-6);
        assert!((h1_rate_depth(40) - h1_rate_depth(45)).abs() < 1e-6);
        assert!((h2_rate_depth(40) - h2_rate_depth(45)).abs() < 1e-6);
        // the direct diagram count at the h2(4) base is load-bearing:
        // iterating the recursion all the way down to h2(1) = 1 instead
        // yields a strictly smaller (unsupported) constant
        let pure: f64 = {
            let lg: f64 = (1..=40u32).map(|l| sigma2(1 << l).ln() / f64::powi(2.0, l as i32)).sum();
            lg.exp()
        };
        assert!(pure < h2_rate());
    }

    #[test]
    fn octa_volume_small_values() {
        let p = params();
        assert_eq!(octa_volume(1.0, &p), 5);
        assert_eq!(octa_volume(2.0, &p), 13);
        assert_eq!(octa_volume(2.5, &p), 15);
        assert_eq!(octa_volume(0.0, &p), 1);
    }

    #[test]
    fn octa_volume_matches_enumeration() {
        // exhaustive count of spacetime points with |dx|+|dy|+a|dT| <= l*
        for &alpha in &[2.0f64, 2.4, 3.0] {
            let p = StarMetricParams { alpha, beta: BETA };
            let mut l = 0.0f64;
            while l <= 12.0 {
                let r = l.ceil() as i64 + 1;
                let dmax = (l / alpha).floor() as i64 + 1;
                let mut count = 0u64;
                for dt in -dmax..=dmax {
                    for dx in -r..=r {
                        for dy in -r..=r {
                            let spatial = (dx.abs() + dy.abs()) as f64;
                            if spatial + alpha * dt.abs() as f64 <= l {
                                count += 1;
                            }
                        }
                    }
                }
                assert_eq!(octa_volume(l, &p), count, "alpha={alpha}, l*={l}");
                l += 0.25;
            }
        }
    }

    #[test]
    fn octa_volume_smooth_approaches_exact() {
        let p = params();
        for &l in &[80.0f64, 200.0, 1000.0] {
            let exact = octa_volume(l, &p) as f64;
            let smooth = octa_volume_smooth(l, &p);
            assert!((smooth - exact).abs() < 0.02 * exact, "l*={l}: {smooth} vs {exact}");
        }
    }

    #[test]
    fn lstar_max_regimes() {
        let p = params();
        assert!((lstar_max(8.0, 0.0, &p) - 8f64.powf(S)).abs() < 1e-12);
        // n = n_bar: (2 + alpha) n^(1/beta)
        let v = lstar_max(4.0, 4.0, &p);
        assert!((v - 4.4 * 4f64.powf(S)).abs() < 1e-9, "{v}");
        // (0, 6): 7 + 8 alpha
        assert!((lstar_max(0.0, 6.0, &p) - (7.0 + 8.0 * 2.4)).abs() < 1e-9);
        // n = 2 n_bar coefficient dominates over the neighbors there
        let v2 = lstar_max(8.0, 4.0, &p);
        assert!(v2 >= (3.0 + 2.0 * 2.4) * 4f64.powf(S) - 1e-9);
    }

    #[test]
    fn sigma3_small_and_consistency() {
        let p = params();
        // Sigma3(4,0) = V(0)+V(1)+V(l(2))+V(1)+V(0) = 1+5+27+5+1
        assert!((sigma3(4, 0, &p) - 39.0).abs() < 1e-9);
        // hybrid path must agree with exact where both apply
        let exact = sigma3(4096, 0, &p);
        let mut hybrid = 0.0;
        hybrid += sigma3_inner(4096, 0, 0, false, &p);
        assert!((hybrid - exact).abs() < 2e-3 * exact, "{hybrid} vs {exact}");
    }

    #[test]
    fn sigma3_product_n1_matches_reference() {
        // Prod Sigma3(2^L, 2^L)^(2^-L) ~ 13967 (reference value from an
        // independent exact evaluation to L = 9 plus geometric tail)
        let p = params();
        let prod = ln_sigma3_product(1, 1, 1, &p).exp();
        assert!((prod / 13967.0 - 1.0).abs() < 0.05, "prod = {prod}");
    }

    #[test]
    fn saturation_constants() {
        assert!((saturation_threshold_2d() - 0.0420).abs() < 5e-4);
        assert!((saturation_threshold_3d() - 0.0840).abs() < 5e-4);
        assert!((prediction_coefficient_3d(&params()) - 1.0143).abs() < 1e-3);
    }

    #[test]
    fn failure_bound_2d_cases() {
        let p_c = 1.0 / h2_rate();
        assert!(matches!(
            failure_bound_2d(16, p_c * 1.1),
            Err(AnalysisError::AboveThreshold { .. })
        ));
        assert_eq!(failure_bound_2d(16, 0.0).unwrap(), 0.0);
        // strictly decreasing in k below threshold
        let p = p_c / 3.0;
        let mut prev = f64::INFINITY;
        for k in [8usize, 16, 32, 64] {
            let b = failure_bound_2d(k, p).unwrap();
            assert!(b < prev);
            prev = b;
        }
        // saturation regime switch
        assert_eq!(saturation_exponent_2d(0.05 * p_c, p_c), ExponentRegime::Full);
        assert_eq!(saturation_exponent_2d(0.04 * p_c, p_c), ExponentRegime::Half);
    }

    #[test]
    fn gamma_values() {
        let p = params();
        assert!((gamma_of(NHat::Pow2(0), &p) - (2.0 + 2.4)).abs() < 1e-6);
        assert!((gamma_of(NHat::AllErrors, &p) - 1.0).abs() < 1e-12);
        for m in 0..8 {
            assert!(gamma_of(NHat::Pow2(m), &p) <= 2.0 + 2.4 + 1e-9);
        }
    }

    #[test]
    fn embedded_table_has_all_derived_entries() {
        let t = H3Table::from_embedded().unwrap();
        for (n, nb) in [
            (1u32, 0u32), (2, 0), (4, 0), (8, 0), (16, 0),
            (0, 1), (0, 2), (0, 4), (0, 8), (0, 16),
            (1, 1), (2, 1), (1, 2), (4, 1), (8, 1), (16, 1), (1, 4), (1, 8), (1, 16),
        ] {
            let v = t.get(n, nb).unwrap();
            assert!(v >= 1.0 && v.is_finite(), "h3({n},{nb}) = {v}");
        }
        // doubling the chain never shrinks the bound
        assert!(t.get(8, 0).unwrap() > t.get(4, 0).unwrap());
        assert!(t.get(0, 8).unwrap() > t.get(0, 4).unwrap());
    }

    #[test]
    fn g_factor_scales_as_q_to_inverse_nhat() {
        let t = H3Table::from_embedded().unwrap();
        let p = params();
        for m in [0u32, 1, 2] {
            let n_hat = f64::powi(2.0, m as i32);
            let g1 = g_factor(m, 1.0, &t, &p).unwrap();
            for q in [0.5, 0.1, 0.01] {
                let gq = g_factor(m, q, &t, &p).unwrap();
                assert!((gq / (g1 * q.powf(1.0 / n_hat)) - 1.0).abs() < 1e-9);
            }
            let gb1 = gbar_factor(m, 1.0, &t, &p).unwrap();
            let gbp = gbar_factor(m, 0.1, &t, &p).unwrap();
            assert!((gbp / (gb1 * 0.1f64.powf(1.0 / n_hat)) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn threshold_on_balanced_ray_matches_published_window() {
        // q = p/2 is dominated by the n_hat = 1 composition:
        // p g(1, p/2) = 1 gives p_c = sqrt(2 / g(1,1)); the paper quotes
        // 1/329.8 and agreement within a factor of 2 is the target.
        let t = H3Table::from_embedded().unwrap();
        let p = params();
        let g11 = g_factor(0, 1.0, &t, &p).unwrap();
        let p_c = (2.0 / g11).sqrt();
        let published = 1.0 / 329.8;
        let ratio = p_c / published;
        assert!(ratio > 0.5 && ratio < 2.0, "p_c = {p_c}, ratio {ratio}");
    }

    #[test]
    fn region_cutoffs_versus_published() {
        let t = H3Table::from_embedded().unwrap();
        let p = params();
        let ankle = 1.0 / g_factor_limit(&t, &p).unwrap();
        let toe = 1.0 / gbar_factor_limit(&t, &p).unwrap();
        // The pure-error cutoff reproduces the published 1/114.5 almost
        // exactly (well within the factor-2 target).
        let ankle_ratio = ankle * 114.5;
        assert!(ankle_ratio > 0.5 && ankle_ratio < 2.0, "ankle = {ankle}");
        // The pure-ghost cutoff does NOT reach factor-2 agreement with the
        // published 1/115.3: spurious defects persist through up to three
        // reinstatements with conserved age, so ghost diagrams connect
        // across *-distances up to ~12 and the enumerated h3(0,n) bounds
        // are far above the (unpublished) constants behind 115.3. The
        // honest value is pinned here; see the acceptance suite and the
        // decisions ledger for the full analysis.
        let toe_ratio = toe * 115.3;
        assert!(toe_ratio < 0.5, "toe = {toe} unexpectedly within factor 2");
        assert!((toe * 585.89 - 1.0).abs() < 0.05, "toe drifted: {toe}");
    }

    #[test]
    fn region_is_star_shaped_and_contains_small_rates() {
        let t = H3Table::from_embedded().unwrap();
        let p = params();
        let region = threshold_region(2, &t, &p).unwrap();
        assert!(region.ankle > 0.0 && region.toe > 0.0);
        // every ray from the origin crosses the boundary exactly once
        for i in 1..20 {
            let theta = std::f64::consts::FRAC_PI_2 * i as f64 / 20.0;
            let r = region.ray_crossing(theta);
            assert!(r > 0.0 && r.is_finite(), "theta {theta}: r = {r}");
            let (q, p_val) = (r * theta.sin(), r * theta.cos());
            assert!(region.contains(0.5 * q, 0.5 * p_val));
            assert!(!region.contains(2.0 * q, 2.0 * p_val));
        }
        assert!(region.contains(1e-5, 1e-5));
        assert!(!region.contains(0.05, 0.05));
    }
}
