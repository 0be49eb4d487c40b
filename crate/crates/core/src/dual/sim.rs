//! Exact simulation of the dual process and aggregation into tables.
//!
//! A path starts in the `+` state at a fixed population, runs the direct
//! Gillespie method up to the dual horizon, flips its sign on every toggling
//! reaction and accrues `int V(n(s)) ds`. A [`DualTable`] keeps, per terminal
//! `(population, sign)`, the sum of path weights `exp(int V)`, the sum of
//! squared weights, and the path count. Any moment
//! `E[x1(tau)^n1 x2(tau)^n2]` of the original SDE with `tau = r_ts * tau_tilde`
//! is then a signed weighted sum over table entries.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::derive::DualProcess;
use crate::error::{config_err, Error, Result};
use crate::io::ser_f64_17;
use crate::moments::{GaussianBelief, RawMoments, DEFAULT_ORDER_CAP};
use crate::rng::{stream_rng, SimRng};
use crate::sde::powu;

/// Paths per independent random stream.
pub const BLOCK_PATHS: u64 = 1 << 14;
pub const DEFAULT_TRUNCATION_THRESHOLD: f64 = 1e-3;
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

impl Serialize for Sign {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.value() as i8)
    }
}

impl<'de> Deserialize<'de> for Sign {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match i8::deserialize(d)? {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(serde::de::Error::custom(format!(
                "sign must be +1 or -1, got {other}"
            ))),
        }
    }
}

/// Per-path limits. The population cap applies to the non-time species.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub max_population: u32,
    pub max_events: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            max_population: 60,
            max_events: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualPathOutcome {
    pub final_n: Vec<u32>,
    pub final_sign: Sign,
    pub fk_integral: f64,
    pub truncated: bool,
    pub events: u64,
    pub toggles: u64,
}

impl DualPathOutcome {
    pub fn weight(&self) -> f64 {
        self.fk_integral.exp()
    }
}

fn check_population(process: &DualProcess, n: &[u32]) -> Result<()> {
    if n.len() != process.species_count {
        return Err(Error::DimensionMismatch {
            expected: process.species_count,
            found: n.len(),
        });
    }
    Ok(())
}

/// Simulate one dual path on `[0, tau_tilde]`.
pub fn gillespie_path(
    process: &DualProcess,
    initial_n: &[u32],
    tau_tilde: f64,
    caps: &Caps,
    rng: &mut SimRng,
) -> Result<DualPathOutcome> {
    check_population(process, initial_n)?;
    if !(tau_tilde >= 0.0) {
        return Err(config_err(format!(
            "dual horizon must be >= 0, got {tau_tilde}"
        )));
    }
    let mut n = initial_n.to_vec();
    let mut props = vec![0.0; process.reactions.len()];
    Ok(run_path(process, &mut n, &mut props, tau_tilde, caps, rng))
}

fn run_path(
    process: &DualProcess,
    n: &mut [u32],
    props: &mut [f64],
    tau_tilde: f64,
    caps: &Caps,
    rng: &mut SimRng,
) -> DualPathOutcome {
    let mut t = 0.0;
    let mut sign = Sign::Plus;
    let mut fk = 0.0;
    let mut events = 0u64;
    let mut toggles = 0u64;
    let mut truncated = false;
    loop {
        let v = process.feynman_kac.eval(n);
        let mut total = 0.0;
        for (p, r) in props.iter_mut().zip(&process.reactions) {
            *p = r.propensity(n);
            total += *p;
        }
        if total <= 0.0 {
            fk += v * (tau_tilde - t);
            break;
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
        if t + wait >= tau_tilde {
            fk += v * (tau_tilde - t);
            break;
        }
        fk += v * wait;
        t += wait;

        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = props.len() - 1;
        for (k, p) in props.iter().enumerate() {
            acc += p;
            if target < acc {
                chosen = k;
                break;
            }
        }
        // guard against rounding landing on a zero-propensity tail entry
        while props[chosen] == 0.0 {
            chosen -= 1;
        }
        let r = &process.reactions[chosen];
        for (ni, d) in n.iter_mut().zip(&r.delta) {
            *ni = (i64::from(*ni) + d) as u32;
        }
        if r.sign_toggle {
            sign = sign.flip();
            toggles += 1;
        }
        events += 1;
        let population: u64 = n[1..].iter().map(|&x| u64::from(x)).sum();
        if population > u64::from(caps.max_population) || events >= caps.max_events {
            truncated = true;
            break;
        }
    }
    DualPathOutcome {
        final_n: n.to_vec(),
        final_sign: sign,
        fk_integral: fk,
        truncated,
        events,
        toggles,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TableKey {
    pub n: Vec<u32>,
    pub sign: Sign,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TableEntry {
    pub weight_sum: f64,
    pub weight_sq_sum: f64,
    pub count: u64,
}

impl TableEntry {
    fn add(&mut self, w: f64) {
        self.weight_sum += w;
        self.weight_sq_sum += w * w;
        self.count += 1;
    }

    fn merge(&mut self, other: &TableEntry) {
        self.weight_sum += other.weight_sum;
        self.weight_sq_sum += other.weight_sq_sum;
        self.count += other.count;
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub std_error: f64,
    /// `(sum |c|)^2 / sum c^2` over per-path contributions `c`.
    pub effective_sample_size: f64,
}

/// Aggregated terminal distribution of weighted dual paths.
#[derive(Clone, Debug, PartialEq)]
pub struct DualTable {
    pub process: DualProcess,
    pub model_hash: String,
    pub tau_tilde: f64,
    pub initial_n: Vec<u32>,
    pub n_paths: u64,
    pub truncated_paths: u64,
    /// Sum of `exp(int V)` accrued by truncated paths up to truncation.
    pub truncated_weight_sum: f64,
    pub caps: Caps,
    pub seed: u64,
    pub entries: BTreeMap<TableKey, TableEntry>,
}

/// Settings for [`build_dual_table`].
#[derive(Clone, Debug)]
pub struct TableBuild {
    pub tau_tilde: f64,
    pub n_paths: u64,
    pub caps: Caps,
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl DualTable {
    pub fn empty(
        process: &DualProcess,
        initial_n: &[u32],
        tau_tilde: f64,
        caps: Caps,
        seed: u64,
    ) -> Self {
        Self {
            model_hash: process.model_hash(),
            process: process.clone(),
            tau_tilde,
            initial_n: initial_n.to_vec(),
            n_paths: 0,
            truncated_paths: 0,
            truncated_weight_sum: 0.0,
            caps,
            seed,
            entries: BTreeMap::new(),
        }
    }

    pub fn truncated_fraction(&self) -> f64 {
        if self.n_paths == 0 {
            0.0
        } else {
            self.truncated_paths as f64 / self.n_paths as f64
        }
    }

    /// Share of total path weight carried by truncated paths.
    pub fn truncated_weight_fraction(&self) -> f64 {
        let kept: f64 = self.entries.values().map(|e| e.weight_sum).sum();
        let total = kept + self.truncated_weight_sum;
        if total > 0.0 {
            self.truncated_weight_sum / total
        } else {
            0.0
        }
    }

    /// Error when the truncated fraction exceeds `threshold`.
    pub fn check_truncation(&self, threshold: f64) -> Result<()> {
        let fraction = self.truncated_fraction();
        if fraction > threshold {
            return Err(Error::Truncation {
                fraction,
                threshold,
            });
        }
        Ok(())
    }

    pub fn max_order(&self) -> u32 {
        self.entries
            .keys()
            .map(|k| k.n[1..].iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    fn check_r_ts(&self, r_ts: f64) -> Result<()> {
        if !(r_ts > 0.0 && r_ts <= 1.0 + 1e-12) {
            return Err(config_err(format!(
                "time-scaling factor must lie in (0, 1], got {r_ts}"
            )));
        }
        Ok(())
    }

    /// Signed weighted sum with a per-entry factor `f(populations)`; the
    /// per-path contribution is `sign * w * r_ts^n0 * f`.
    fn estimate(
        &self,
        r_ts: f64,
        mut factor: impl FnMut(&[u32]) -> Result<f64>,
    ) -> Result<MomentEstimate> {
        if self.n_paths == 0 || self.entries.is_empty() {
            return Err(Error::NoUsablePaths);
        }
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut sabs = 0.0;
        for (key, e) in &self.entries {
            let f = key.sign.value() * r_ts.powi(key.n[0] as i32) * factor(&key.n[1..])?;
            s1 += f * e.weight_sum;
            s2 += f * f * e.weight_sq_sum;
            sabs += f.abs() * e.weight_sum;
        }
        let n = self.n_paths as f64;
        let mean = s1 / n;
        let std_error = if self.n_paths > 1 {
            (((s2 - n * mean * mean) / (n - 1.0)).max(0.0) / n).sqrt()
        } else {
            f64::INFINITY
        };
        let effective_sample_size = if s2 > 0.0 { sabs * sabs / s2 } else { n };
        Ok(MomentEstimate {
            value: mean,
            std_error,
            effective_sample_size,
        })
    }

    /// `E[prod_i x_i(tau)^initial_n[i]]` for a deterministic start `x0`,
    /// with `tau = r_ts * tau_tilde`.
    pub fn delta_moment(&self, x0: &[f64], r_ts: f64) -> Result<MomentEstimate> {
        self.check_r_ts(r_ts)?;
        if x0.len() + 1 != self.process.species_count {
            return Err(Error::DimensionMismatch {
                expected: self.process.species_count - 1,
                found: x0.len(),
            });
        }
        self.estimate(r_ts, |n| {
            Ok(n.iter().zip(x0).map(|(&k, &x)| powu(x, k)).product())
        })
    }

    /// As [`delta_moment`](Self::delta_moment) for a Gaussian initial state.
    pub fn gaussian_moment(&self, belief: &GaussianBelief, r_ts: f64) -> Result<MomentEstimate> {
        let mut ctx = RawMoments::new(*belief);
        self.gaussian_moment_with(&mut ctx, r_ts)
    }

    /// Gaussian moment reusing a caller-owned evaluation context.
    pub fn gaussian_moment_with(&self, ctx: &mut RawMoments, r_ts: f64) -> Result<MomentEstimate> {
        self.check_r_ts(r_ts)?;
        if self.process.species_count != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                found: self.process.species_count,
            });
        }
        self.estimate(r_ts, |n| ctx.get(n[0], n[1]))
    }

    pub fn is_compatible(&self, other: &DualTable) -> Result<()> {
        let mismatch = |what: &str| Err(Error::IncompatibleTables(format!("{what} differs")));
        if self.model_hash != other.model_hash {
            return mismatch("model hash");
        }
        if self.initial_n != other.initial_n {
            return mismatch("initial population");
        }
        if self.tau_tilde != other.tau_tilde {
            return mismatch("dual horizon");
        }
        if self.caps != other.caps {
            return mismatch("caps");
        }
        Ok(())
    }

    fn absorb(&mut self, other: &DualTable) {
        self.n_paths += other.n_paths;
        self.truncated_paths += other.truncated_paths;
        self.truncated_weight_sum += other.truncated_weight_sum;
        for (k, e) in &other.entries {
            match self.entries.get_mut(k) {
                Some(mine) => mine.merge(e),
                None => {
                    self.entries.insert(k.clone(), *e);
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TableDoc {
            format_version: FORMAT_VERSION,
            model_hash: self.model_hash.clone(),
            tau_tilde: self.tau_tilde,
            initial_n: self.initial_n.clone(),
            n_paths: self.n_paths,
            truncated_paths: self.truncated_paths,
            truncated_weight_sum: self.truncated_weight_sum,
            caps: self.caps,
            seed: self.seed,
            network: self.process.clone(),
            entries: self
                .entries
                .iter()
                .map(|(k, e)| EntryDoc {
                    n: k.n.clone(),
                    sign: k.sign,
                    weight_sum: e.weight_sum,
                    weight_sq_sum: e.weight_sq_sum,
                    count: e.count,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    /// Load and check internal consistency, including that the embedded
    /// network hashes to the recorded model hash.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::TableLoad(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Load and additionally require the table to belong to `process`.
    pub fn load_for(path: &Path, process: &DualProcess) -> Result<Self> {
        let t = Self::load(path)?;
        let expected = process.model_hash();
        if t.model_hash != expected {
            return Err(Error::TableLoad(format!(
                "{}: model hash {} does not match expected {expected}",
                path.display(),
                t.model_hash
            )));
        }
        Ok(t)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::TableLoad(msg);
        let doc: TableDoc = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if doc.format_version != FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        if doc.network.model_hash() != doc.model_hash {
            return Err(bad("model hash does not match embedded network".into()));
        }
        let species = doc.network.species_count;
        if doc.initial_n.len() != species {
            return Err(bad("initial population has wrong length".into()));
        }
        let mut entries = BTreeMap::new();
        let mut counted = 0u64;
        for e in doc.entries {
            if e.n.len() != species {
                return Err(bad("entry population has wrong length".into()));
            }
            counted += e.count;
            let key = TableKey {
                n: e.n,
                sign: e.sign,
            };
            let entry = TableEntry {
                weight_sum: e.weight_sum,
                weight_sq_sum: e.weight_sq_sum,
                count: e.count,
            };
            if entries.insert(key, entry).is_some() {
                return Err(bad("duplicate entry key".into()));
            }
        }
        if counted + doc.truncated_paths != doc.n_paths {
            return Err(bad(format!(
                "path counts inconsistent: {counted} kept + {} truncated != {}",
                doc.truncated_paths, doc.n_paths
            )));
        }
        Ok(Self {
            process: doc.network,
            model_hash: doc.model_hash,
            tau_tilde: doc.tau_tilde,
            initial_n: doc.initial_n,
            n_paths: doc.n_paths,
            truncated_paths: doc.truncated_paths,
            truncated_weight_sum: doc.truncated_weight_sum,
            caps: doc.caps,
            seed: doc.seed,
            entries,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct EntryDoc {
    n: Vec<u32>,
    sign: Sign,
    #[serde(serialize_with = "ser_f64_17")]
    weight_sum: f64,
    #[serde(serialize_with = "ser_f64_17")]
    weight_sq_sum: f64,
    count: u64,
}

#[derive(Serialize, Deserialize)]
struct TableDoc {
    format_version: u32,
    model_hash: String,
    #[serde(serialize_with = "ser_f64_17")]
    tau_tilde: f64,
    initial_n: Vec<u32>,
    n_paths: u64,
    truncated_paths: u64,
    #[serde(serialize_with = "ser_f64_17")]
    truncated_weight_sum: f64,
    caps: Caps,
    seed: u64,
    network: DualProcess,
    entries: Vec<EntryDoc>,
}

/// Entry-wise sum of two compatible tables. The result keeps the smaller
/// seed; a table with zero paths is an identity element.
pub fn merge_tables(a: &DualTable, b: &DualTable) -> Result<DualTable> {
    a.is_compatible(b)?;
    if b.n_paths == 0 && b.entries.is_empty() {
        return Ok(a.clone());
    }
    if a.n_paths == 0 && a.entries.is_empty() {
        return Ok(b.clone());
    }
    let mut out = a.clone();
    out.absorb(b);
    out.seed = a.seed.min(b.seed);
    Ok(out)
}

/// Simulate one block of paths with its own random stream.
fn simulate_block(
    process: &DualProcess,
    initial_n: &[u32],
    cfg: &TableBuild,
    block: u64,
) -> (HashMap<TableKey, TableEntry>, u64, f64, u64) {
    let start = block * BLOCK_PATHS;
    let count = BLOCK_PATHS.min(cfg.n_paths - start);
    let mut rng = stream_rng(cfg.seed, block);
    let mut entries: HashMap<TableKey, TableEntry> = HashMap::new();
    let mut truncated = 0u64;
    let mut truncated_weight = 0.0;
    let mut n = initial_n.to_vec();
    let mut props = vec![0.0; process.reactions.len()];
    for _ in 0..count {
        n.copy_from_slice(initial_n);
        let out = run_path(
            process,
            &mut n,
            &mut props,
            cfg.tau_tilde,
            &cfg.caps,
            &mut rng,
        );
        let w = out.weight();
        if out.truncated {
            truncated += 1;
            truncated_weight += w;
            continue;
        }
        entries
            .entry(TableKey {
                n: out.final_n,
                sign: out.final_sign,
            })
            .or_default()
            .add(w);
    }
    (entries, truncated, truncated_weight, count)
}

/// Aggregate `cfg.n_paths` independent dual paths. Paths are grouped into
/// fixed-size blocks, each with its own stream of `cfg.seed`, and block
/// results are folded in block order, so the table does not depend on the
/// number of workers.
pub fn build_dual_table(
    process: &DualProcess,
    initial_n: &[u32],
    cfg: &TableBuild,
) -> Result<DualTable> {
    check_population(process, initial_n)?;
    if cfg.n_paths == 0 {
        return Err(config_err("n_paths must be at least 1"));
    }
    if !(cfg.tau_tilde >= 0.0) || !cfg.tau_tilde.is_finite() {
        return Err(config_err(format!(
            "dual horizon must be >= 0, got {}",
            cfg.tau_tilde
        )));
    }
    let blocks = cfg.n_paths.div_ceil(BLOCK_PATHS);
    let run = || -> Vec<_> {
        (0..blocks)
            .into_par_iter()
            .map(|b| simulate_block(process, initial_n, cfg, b))
            .collect()
    };
    let parts = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| config_err(format!("cannot start worker pool: {e}")))?
            .install(run),
        None => run(),
    };
    let mut table = DualTable::empty(process, initial_n, cfg.tau_tilde, cfg.caps, cfg.seed);
    for (entries, truncated, truncated_weight, count) in parts {
        table.n_paths += count;
        table.truncated_paths += truncated;
        table.truncated_weight_sum += truncated_weight;
        let mut sorted: Vec<_> = entries.into_iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        for (k, e) in sorted {
            table.entries.entry(k).or_default().merge(&e);
        }
    }
    Ok(table)
}

/// The five tables needed for a Gaussian forecast: first moments of x1
/// and x2, second moments of x1 and x2, and the cross moment.
pub const FORECAST_EXPONENTS: [[u32; 2]; 5] = [[1, 0], [0, 1], [2, 0], [0, 2], [1, 1]];

#[derive(Clone, Debug)]
pub struct DualTableSet {
    tables: [DualTable; 5],
}

impl DualTableSet {
    /// Tables must be given in [`FORECAST_EXPONENTS`] order and share the
    /// model and dual horizon.
    pub fn new(tables: [DualTable; 5]) -> Result<Self> {
        for (t, exp) in tables.iter().zip(FORECAST_EXPONENTS) {
            if t.initial_n != [0, exp[0], exp[1]] {
                return Err(Error::IncompatibleTables(format!(
                    "expected initial population [0, {}, {}], found {:?}",
                    exp[0], exp[1], t.initial_n
                )));
            }
        }
        let first = &tables[0];
        for t in &tables[1..] {
            if t.model_hash != first.model_hash {
                return Err(Error::IncompatibleTables("model hash differs".into()));
            }
            if t.tau_tilde != first.tau_tilde {
                return Err(Error::IncompatibleTables("dual horizon differs".into()));
            }
        }
        if tables.iter().any(|t| t.max_order() > DEFAULT_ORDER_CAP) {
            return Err(Error::OrderOverflow {
                order: tables.iter().map(DualTable::max_order).max().unwrap_or(0),
                cap: DEFAULT_ORDER_CAP,
            });
        }
        Ok(Self { tables })
    }

    pub fn build(process: &DualProcess, cfg: &TableBuild) -> Result<Self> {
        let mut out = Vec::with_capacity(5);
        for exp in FORECAST_EXPONENTS {
            out.push(build_dual_table(process, &[0, exp[0], exp[1]], cfg)?);
        }
        Self::new(out.try_into().expect("five tables"))
    }

    pub fn tau_tilde(&self) -> f64 {
        self.tables[0].tau_tilde
    }

    pub fn model_hash(&self) -> &str {
        &self.tables[0].model_hash
    }

    pub fn tables(&self) -> &[DualTable; 5] {
        &self.tables
    }
}
