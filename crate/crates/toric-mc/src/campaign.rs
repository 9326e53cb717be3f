//! Campaign orchestration: flat key=value configuration, counter-based
//! seed derivation, (optionally parallel) trial execution, an append-only
//! newline-delimited JSON result store for crash-safe resumption, and
//! CSV/JSON/TSV export with pinned float formatting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder2d::run_trial;
use crate::decoder3d::{run_memory_simulation_with, StarMetricParams};
use crate::fitting::FailureSample;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("store parse error: {0}")]
    Store(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::TwoD => "2d",
            Mode::ThreeD => "3d",
        }
    }
}

/// Rule producing the measurement-error rate q for a given p.
#[derive(Debug, Clone, PartialEq)]
pub enum QRule {
    /// Perfect measurement (the 2d campaign).
    Zero,
    /// q = ratio * p.
    Ratio(f64),
    /// Explicit list parallel to the p list.
    List(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub mode: Mode,
    pub ks: Vec<usize>,
    pub ps: Vec<f64>,
    pub q_rule: QRule,
    /// Trials per cell (2d) or rounds per cell (3d).
    pub trials: u64,
    pub master_seed: u64,
    /// 0 means the library default.
    pub threads: usize,
    pub alpha: f64,
    pub radius_steps: usize,
}

/// Eight p values evenly spaced over the published scan window.
pub fn default_p_values() -> Vec<f64> {
    (0..8).map(|i| 0.01 + 0.06 * i as f64 / 7.0).collect()
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            mode: Mode::TwoD,
            ks: vec![12, 18, 27],
            ps: default_p_values(),
            q_rule: QRule::Zero,
            trials: 10_000,
            master_seed: 1,
            threads: 0,
            alpha: StarMetricParams::default().alpha,
            radius_steps: 5,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), CampaignError> {
        let err = |m: String| Err(CampaignError::Config(m));
        if self.trials < 1 {
            return err("trials must be at least 1".into());
        }
        for &k in &self.ks {
            if k < 4 {
                return err(format!("k = {k} is below the minimum lattice size 4"));
            }
        }
        for &p in &self.ps {
            if !(p > 0.0 && p < 1.0) {
                return err(format!("p = {p} is not in (0, 1)"));
            }
        }
        match &self.q_rule {
            QRule::Zero => {}
            QRule::Ratio(r) => {
                if !(*r > 0.0) {
                    return err(format!("q ratio {r} must be positive"));
                }
                for &p in &self.ps {
                    if r * p >= 1.0 {
                        return err(format!("q = {} is not in (0, 1)", r * p));
                    }
                }
            }
            QRule::List(qs) => {
                if qs.len() != self.ps.len() {
                    return err("q list length must match p list length".into());
                }
                for &q in qs {
                    if !(q > 0.0 && q < 1.0) {
                        return err(format!("q = {q} is not in (0, 1)"));
                    }
                }
            }
        }
        if self.mode == Mode::TwoD && self.q_rule != QRule::Zero {
            return err("2d mode has perfect measurement; q must be absent".into());
        }
        Ok(())
    }

    pub fn q_for(&self, p_index: usize) -> f64 {
        match &self.q_rule {
            QRule::Zero => 0.0,
            QRule::Ratio(r) => r * self.ps[p_index],
            QRule::List(qs) => qs[p_index],
        }
    }

    /// All (k, p_index) cells in deterministic order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &k in &self.ks {
            for pi in 0..self.ps.len() {
                out.push((k, pi));
            }
        }
        out
    }

    /// Parse flat `key = value` lines; `#` starts a comment. Unknown keys
    /// are rejected so that typos fail loudly.
    pub fn from_key_values(text: &str) -> Result<Self, CampaignError> {
        let mut cfg = CampaignConfig::default();
        let mut saw_q = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CampaignError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.apply_key(key.trim(), value.trim(), &mut saw_q)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_key(&mut self, key: &str, value: &str, saw_q: &mut bool) -> Result<(), CampaignError> {
        let bad = |k: &str, v: &str| CampaignError::Config(format!("bad value for {k}: {v}"));
        match key {
            "mode" => {
                self.mode = match value {
                    "2d" => Mode::TwoD,
                    "3d" => Mode::ThreeD,
                    _ => return Err(bad(key, value)),
                };
                if self.mode == Mode::ThreeD && !*saw_q {
                    self.q_rule = QRule::Ratio(0.5);
                }
            }
            "k" => {
                self.ks = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad(key, value))?;
            }
            "p" => {
                self.ps = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad(key, value))?;
            }
            "q" => {
                *saw_q = true;
                self.q_rule = if value == "0" || value == "none" {
                    QRule::Zero
                } else if let Some(ratio) = value.strip_prefix("p/") {
                    let d: f64 = ratio.parse().map_err(|_| bad(key, value))?;
                    QRule::Ratio(1.0 / d)
                } else if let Some(ratio) = value.strip_suffix("*p").or_else(|| value.strip_suffix("p")) {
                    QRule::Ratio(ratio.trim().parse().map_err(|_| bad(key, value))?)
                } else {
                    let qs = value
                        .split(',')
                        .map(|s| s.trim().parse())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad(key, value))?;
                    QRule::List(qs)
                };
            }
            "trials" | "rounds" => self.trials = value.parse().map_err(|_| bad(key, value))?,
            "seed" => self.master_seed = value.parse().map_err(|_| bad(key, value))?,
            "threads" => self.threads = value.parse().map_err(|_| bad(key, value))?,
            "alpha" => self.alpha = value.parse().map_err(|_| bad(key, value))?,
            "radius_steps" => self.radius_steps = value.parse().map_err(|_| bad(key, value))?,
            _ => return Err(CampaignError::Config(format!("unknown key: {key}"))),
        }
        Ok(())
    }

    /// Round-trippable key=value rendering, written next to the store so
    /// that `resume` can re-derive the exact cell plan.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let join =
            |xs: &[String]| xs.join(", ");
        let _ = writeln!(s, "k = {}", join(&self.ks.iter().map(|k| k.to_string()).collect::<Vec<_>>()));
        let _ = writeln!(s, "p = {}", join(&self.ps.iter().map(|p| fmt_float(*p)).collect::<Vec<_>>()));
        match &self.q_rule {
            QRule::Zero => {}
            QRule::Ratio(r) => {
                let _ = writeln!(s, "q = {}*p", fmt_float(*r));
            }
            QRule::List(qs) => {
                let _ = writeln!(s, "q = {}", join(&qs.iter().map(|q| fmt_float(*q)).collect::<Vec<_>>()));
            }
        }
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "seed = {}", self.master_seed);
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s, "alpha = {}", fmt_float(self.alpha));
        let _ = writeln!(s, "radius_steps = {}", self.radius_steps);
        s
    }
}

/// Pinned float format for every emitted file: 9 significant digits,
/// lowercase scientific. Identical on all platforms.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

// --- seed derivation -------------------------------------------------------

/// SplitMix64 finalizer: a bijective 64-bit mix.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based stream seed for one trial: the tuple (master, mode, k,
/// p_index, trial_index) is folded through the SplitMix64 mix one field at
/// a time. Bijectivity of each round makes collisions across the campaign
/// grid astronomically unlikely, and the value depends on nothing but the
/// tuple, so any thread may run any trial.
pub fn derive_seed(master_seed: u64, mode: Mode, k: usize, p_index: usize, trial_index: u64) -> u64 {
    let mut h = splitmix64(master_seed);
    h = splitmix64(h ^ match mode {
        Mode::TwoD => 2,
        Mode::ThreeD => 3,
    });
    h = splitmix64(h ^ k as u64);
    h = splitmix64(h ^ p_index as u64);
    splitmix64(h ^ trial_index)
}

// --- result store ----------------------------------------------------------

/// One completed cell, as persisted in the append-only store.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrialRecord {
    pub mode: Mode,
    pub k: usize,
    pub p: f64,
    pub q: f64,
    pub trials: u64,
    pub failures: u64,
    /// Base seed of the cell (trial_index 0).
    pub seed: u64,
}

impl TrialRecord {
    pub fn sample(&self) -> FailureSample {
        FailureSample { k: self.k, p: self.p, q: self.q, trials: self.trials, failures: self.failures }
    }

    fn key(&self) -> (Mode, usize, u64, u64) {
        (self.mode, self.k, self.p.to_bits(), self.q.to_bits())
    }
}

/// Completed cells keyed by (mode, k, p, q). Backed by a newline-delimited
/// JSON file: one record appended per completed cell, so a crash loses at
/// most the cell in flight.
#[derive(Debug, Default)]
pub struct ResultStore {
    records: BTreeMap<(Mode, usize, u64, u64), TrialRecord>,
    path: Option<PathBuf>,
}

impl ResultStore {
    pub fn in_memory() -> Self {
        ResultStore::default()
    }

    /// Open (or create) the store file, replaying existing records. A
    /// trailing partial line from a crashed append is ignored.
    pub fn open(path: &Path) -> Result<Self, CampaignError> {
        let mut store = ResultStore { records: BTreeMap::new(), path: Some(path.to_path_buf()) };
        if path.exists() {
            let text = fs::read_to_string(path)?;
            for line in text.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<TrialRecord>(line) {
                    Ok(rec) => {
                        store.records.insert(rec.key(), rec);
                    }
                    Err(_) if Some(line) == text.lines().last() => break,
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, mode: Mode, k: usize, p: f64, q: f64) -> Option<&TrialRecord> {
        self.records.get(&(mode, k, p.to_bits(), q.to_bits()))
    }

    /// Records in key order (independent of completion order).
    pub fn records(&self) -> impl Iterator<Item = &TrialRecord> {
        self.records.values()
    }

    pub fn samples(&self) -> Vec<FailureSample> {
        self.records().map(TrialRecord::sample).collect()
    }

    /// Insert a completed cell and append it to the backing file. Re-inserting
    /// an identical record is a no-op; totals never decrease.
    pub fn insert(&mut self, rec: TrialRecord) -> Result<(), CampaignError> {
        if let Some(existing) = self.records.get(&rec.key()) {
            assert!(
                existing.trials >= rec.trials,
                "store regression: completed cell re-run with fewer trials"
            );
            return Ok(());
        }
        if let Some(path) = &self.path {
            let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
            let mut line = serde_json::to_string(&rec)?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.records.insert(rec.key(), rec);
        Ok(())
    }

    /// Rewrite the backing file with one line per live record in key order,
    /// dropping superseded duplicates from old appends.
    pub fn compact(&self) -> Result<(), CampaignError> {
        let Some(path) = &self.path else { return Ok(()) };
        let tmp = path.with_extension("ndjson.tmp");
        let mut out = String::new();
        for rec in self.records.values() {
            out.push_str(&serde_json::to_string(rec)?);
            out.push('\n');
        }
        fs::write(&tmp, out)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

// --- execution ---------------------------------------------------------------

/// Count failures for one 2d cell. Each trial owns the stream seeded by its
/// own tuple, so the sum is independent of execution order and thread count.
fn run_cell_2d(cfg: &CampaignConfig, k: usize, p_index: usize) -> u64 {
    let p = cfg.ps[p_index];
    let trial = |t: u64| -> u64 {
        run_trial(k, p, derive_seed(cfg.master_seed, Mode::TwoD, k, p_index, t)) as u64
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..cfg.trials).into_par_iter().map(trial).sum()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..cfg.trials).map(trial).sum()
    }
}

/// One 3d cell: a single long-run simulation whose rounds are inherently
/// sequential; parallelism comes from running cells concurrently.
fn run_cell_3d(cfg: &CampaignConfig, k: usize, p_index: usize) -> FailureSample {
    let params = StarMetricParams { alpha: cfg.alpha, ..StarMetricParams::default() };
    run_memory_simulation_with(
        k,
        cfg.ps[p_index],
        cfg.q_for(p_index),
        cfg.trials,
        derive_seed(cfg.master_seed, Mode::ThreeD, k, p_index, 0),
        params,
        cfg.radius_steps,
    )
}

fn record_for_cell(cfg: &CampaignConfig, k: usize, p_index: usize) -> TrialRecord {
    match cfg.mode {
        Mode::TwoD => {
            let failures = run_cell_2d(cfg, k, p_index);
            TrialRecord {
                mode: Mode::TwoD,
                k,
                p: cfg.ps[p_index],
                q: 0.0,
                trials: cfg.trials,
                failures,
                seed: derive_seed(cfg.master_seed, Mode::TwoD, k, p_index, 0),
            }
        }
        Mode::ThreeD => {
            let s = run_cell_3d(cfg, k, p_index);
            TrialRecord {
                mode: Mode::ThreeD,
                k,
                p: s.p,
                q: s.q,
                trials: s.trials,
                failures: s.failures,
                seed: derive_seed(cfg.master_seed, Mode::ThreeD, k, p_index, 0),
            }
        }
    }
}

/// Execute every cell not yet present in the store, appending each result
/// as it completes. Totals are determined by (config, master seed) alone.
pub fn run_campaign(cfg: &CampaignConfig, store: &mut ResultStore) -> Result<(), CampaignError> {
    cfg.validate()?;
    let pending: Vec<(usize, usize)> = cfg
        .cells()
        .into_iter()
        .filter(|&(k, pi)| {
            let q = if cfg.mode == Mode::TwoD { 0.0 } else { cfg.q_for(pi) };
            store.get(cfg.mode, k, cfg.ps[pi], q).is_none()
        })
        .collect();

    #[cfg(feature = "parallel")]
    {
        use std::sync::mpsc;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| CampaignError::Config(e.to_string()))?;
        let (tx, rx) = mpsc::channel::<TrialRecord>();
        pool.in_place_scope(|scope| -> Result<(), CampaignError> {
            match cfg.mode {
                // 2d cells parallelize internally over trials; run them in
                // sequence so the pool is saturated by one cell at a time.
                Mode::TwoD => {
                    drop(tx);
                    for &(k, pi) in &pending {
                        let rec = pool.install(|| record_for_cell(cfg, k, pi));
                        store.insert(rec)?;
                    }
                }
                // 3d cells are sequential streams; run cells concurrently
                // and serialize appends through the channel.
                Mode::ThreeD => {
                    for &(k, pi) in &pending {
                        let tx = tx.clone();
                        scope.spawn(move |_| {
                            let _ = tx.send(record_for_cell(cfg, k, pi));
                        });
                    }
                    drop(tx);
                    for rec in rx {
                        store.insert(rec)?;
                    }
                }
            }
            Ok(())
        })?;
    }
    #[cfg(not(feature = "parallel"))]
    {
        for &(k, pi) in &pending {
            store.insert(record_for_cell(cfg, k, pi))?;
        }
    }
    Ok(())
}

// --- export --------------------------------------------------------------------

pub const CSV_HEADER: &str = "mode,k,p,q,trials,failures,rate,stderr,seed";

/// The result CSV, rows in store key order: byte-identical for identical
/// (config, master seed) regardless of thread count or completion order.
pub fn to_csv(store: &ResultStore) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for rec in store.records() {
        let s = rec.sample();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            rec.mode.as_str(),
            rec.k,
            fmt_float(rec.p),
            fmt_float(rec.q),
            rec.trials,
            rec.failures,
            fmt_float(s.rate()),
            fmt_float(s.stderr()),
            rec.seed,
        );
    }
    out
}

/// JSON summary: config echo plus per-cell statistics.
pub fn to_summary_json(cfg: &CampaignConfig, store: &ResultStore) -> String {
    #[derive(Serialize)]
    struct CellStats<'a> {
        #[serde(flatten)]
        rec: &'a TrialRecord,
        rate: f64,
        stderr: f64,
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        mode: &'a str,
        k: &'a [usize],
        p: &'a [f64],
        trials: u64,
        master_seed: u64,
        alpha: f64,
        radius_steps: usize,
        cells: Vec<CellStats<'a>>,
    }
    let cells = store
        .records()
        .map(|rec| {
            let s = rec.sample();
            CellStats { rec, rate: s.rate(), stderr: s.stderr() }
        })
        .collect();
    let summary = Summary {
        mode: cfg.mode.as_str(),
        k: &cfg.ks,
        p: &cfg.ps,
        trials: cfg.trials,
        master_seed: cfg.master_seed,
        alpha: cfg.alpha,
        radius_steps: cfg.radius_steps,
        cells,
    };
    serde_json::to_string_pretty(&summary).expect("summary serializes")
}

/// Per-k plot data: tab-separated (p, rate) pairs for the log-log failure
/// plots, one file per lattice size. Zero-failure cells are kept; plotting
/// tools drop them on log axes.
pub fn to_plot_tsv(store: &ResultStore, k: usize) -> String {
    let mut out = String::new();
    for rec in store.records().filter(|r| r.k == k) {
        let _ = writeln!(out, "{}\t{}", fmt_float(rec.p), fmt_float(rec.sample().rate()));
    }
    out
}

/// Write results.csv, summary.json, and plot_k*.tsv into `dir`.
pub fn emit(cfg: &CampaignConfig, store: &ResultStore, dir: &Path) -> Result<(), CampaignError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.csv"), to_csv(store))?;
    fs::write(dir.join("summary.json"), to_summary_json(cfg, store))?;
    for &k in &cfg.ks {
        fs::write(dir.join(format!("plot_k{k}.tsv")), to_plot_tsv(store, k))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_deterministic_and_tuple_sensitive() {
        let a = derive_seed(7, Mode::TwoD, 12, 3, 100);
        assert_eq!(a, derive_seed(7, Mode::TwoD, 12, 3, 100));
        assert_ne!(a, derive_seed(7, Mode::TwoD, 12, 3, 101));
        assert_ne!(a, derive_seed(7, Mode::TwoD, 12, 4, 100));
        assert_ne!(a, derive_seed(7, Mode::TwoD, 13, 3, 100));
        assert_ne!(a, derive_seed(7, Mode::ThreeD, 12, 3, 100));
        assert_ne!(a, derive_seed(8, Mode::TwoD, 12, 3, 100));
    }

    #[test]
    fn seeds_have_no_collisions_on_test_range() {
        let mut seen = std::collections::HashSet::new();
        for k in [4usize, 8, 12, 18, 27, 36] {
            for pi in 0..8 {
                for t in 0..200u64 {
                    assert!(seen.insert(derive_seed(42, Mode::TwoD, k, pi, t)));
                }
            }
        }
    }

    #[test]
    fn config_parses_and_round_trips() {
        let text = "\
            mode = 3d\n\
            k = 10, 14\n\
            p = 0.02, 0.04   # scan\n\
            q = p/2\n\
            trials = 500\n\
            seed = 99\n";
        let cfg = CampaignConfig::from_key_values(text).unwrap();
        assert_eq!(cfg.mode, Mode::ThreeD);
        assert_eq!(cfg.ks, vec![10, 14]);
        assert_eq!(cfg.q_rule, QRule::Ratio(0.5));
        assert_eq!(cfg.q_for(1), 0.02);
        assert_eq!(cfg.master_seed, 99);
        let echoed = CampaignConfig::from_key_values(&cfg.to_key_values()).unwrap();
        assert_eq!(echoed.ks, cfg.ks);
        assert_eq!(echoed.ps, cfg.ps);
        assert_eq!(echoed.q_rule, cfg.q_rule);
        assert_eq!(echoed.trials, cfg.trials);
    }

    #[test]
    fn config_rejects_bad_values() {
        assert!(CampaignConfig::from_key_values("k = 3").is_err());
        assert!(CampaignConfig::from_key_values("p = 1.5").is_err());
        assert!(CampaignConfig::from_key_values("trials = 0").is_err());
        assert!(CampaignConfig::from_key_values("mystery = 1").is_err());
        assert!(CampaignConfig::from_key_values("mode = 2d\nq = p/2").is_err());
        assert!(CampaignConfig::from_key_values("mode = 3d\np = 0.01, 0.02\nq = 0.01").is_err());
    }

    #[test]
    fn default_p_list_spans_published_window() {
        let ps = default_p_values();
        assert_eq!(ps.len(), 8);
        assert_eq!(ps[0], 0.01);
        assert!((ps[7] - 0.07).abs() < 1e-12);
    }

    #[test]
    fn empty_k_list_gives_empty_store() {
        let cfg = CampaignConfig { ks: vec![], trials: 10, ..CampaignConfig::default() };
        let mut store = ResultStore::in_memory();
        run_campaign(&cfg, &mut store).unwrap();
        assert!(store.is_empty());
        assert_eq!(to_csv(&store), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn float_format_is_pinned() {
        assert_eq!(fmt_float(0.03), "3.00000000e-2");
        assert_eq!(fmt_float(1.0 / 3.0), "3.33333333e-1");
        assert_eq!(fmt_float(0.0), "0.00000000e0");
    }

    #[test]
    fn store_roundtrip_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.ndjson");
        let cfg = CampaignConfig {
            ks: vec![6, 8],
            ps: vec![0.02, 0.05],
            trials: 50,
            master_seed: 5,
            ..CampaignConfig::default()
        };
        let mut store = ResultStore::open(&path).unwrap();
        run_campaign(&cfg, &mut store).unwrap();
        assert_eq!(store.len(), 4);
        let csv_full = to_csv(&store);

        // Drop the last persisted line to fake a mid-campaign kill, then
        // resume: only the missing cell is recomputed and totals agree.
        let text = fs::read_to_string(&path).unwrap();
        let kept: Vec<&str> = text.lines().collect();
        fs::write(&path, format!("{}\n", kept[..3].join("\n"))).unwrap();
        let mut resumed = ResultStore::open(&path).unwrap();
        assert_eq!(resumed.len(), 3);
        run_campaign(&cfg, &mut resumed).unwrap();
        assert_eq!(to_csv(&resumed), csv_full);

        // A torn final line (partial append) is tolerated on open.
        fs::write(&path, format!("{}\n{{\"mode\":\"2d\",\"k\"", kept.join("\n"))).unwrap();
        let torn = ResultStore::open(&path).unwrap();
        assert_eq!(torn.len(), 4);
        torn.compact().unwrap();
        let compacted = ResultStore::open(&path).unwrap();
        assert_eq!(to_csv(&compacted), csv_full);
    }

    #[test]
    fn rerunning_completed_cells_is_noop() {
        let cfg = CampaignConfig { ks: vec![6], ps: vec![0.03], trials: 40, ..CampaignConfig::default() };
        let mut store = ResultStore::in_memory();
        run_campaign(&cfg, &mut store).unwrap();
        let first = to_csv(&store);
        run_campaign(&cfg, &mut store).unwrap();
        assert_eq!(to_csv(&store), first);
    }

    #[test]
    fn csv_columns_match_definitions() {
        let cfg = CampaignConfig { ks: vec![6], ps: vec![0.04], trials: 100, ..CampaignConfig::default() };
        let mut store = ResultStore::in_memory();
        run_campaign(&cfg, &mut store).unwrap();
        let csv = to_csv(&store);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        let trials: f64 = row[4].parse().unwrap();
        let failures: f64 = row[5].parse().unwrap();
        let rate: f64 = row[6].parse().unwrap();
        let se: f64 = row[7].parse().unwrap();
        assert!((rate - failures / trials).abs() < 1e-9);
        assert!((se - (rate * (1.0 - rate) / trials).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn three_d_cells_record_rounds_and_q() {
        let cfg = CampaignConfig {
            mode: Mode::ThreeD,
            ks: vec![6],
            ps: vec![0.02],
            q_rule: QRule::Ratio(0.5),
            trials: 200,
            master_seed: 11,
            ..CampaignConfig::default()
        };
        let mut store = ResultStore::in_memory();
        run_campaign(&cfg, &mut store).unwrap();
        let rec = store.get(Mode::ThreeD, 6, 0.02, 0.01).unwrap();
        assert!(rec.trials > 0 && rec.trials <= 200);
        assert!(rec.failures <= rec.trials);
    }
}
