//! Experiment orchestration: parameter sweeps, per-trial QNC and PF runs,
//! trial averaging, block-length envelopes and CSV output.
//!
//! Seeds: every trial of a cell `(edges, k/n, eps_k ratio)` draws its
//! deployment from `derive(seed, [DEPLOYMENT, edges, trial])`, its injection
//! coefficients from `derive(seed, [COEFFICIENTS, edges, trial])` and its
//! messages from `derive(seed, [MESSAGES, edges, k, eps_k bits, trial])`.
//! None of them depend on the block length, so all `L` values of a trial
//! share one network, one message vector and one coefficient schedule.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::{build_psi_tot, design_coefficients, eps_rec_profile, run_qnc};
use crate::decoder::{l1_decode, DecoderOptions};
use crate::error::{QncError, Result};
use crate::forwarding::{completion_time, run_pf};
use crate::network::{generate_deployment, Deployment};
use crate::quantizer::{QuantizerSpec, MAX_BITS_PER_BLOCK};
use crate::seed::{self, stream};
use crate::source::{error_db, generate_messages, MessageEnsemble};

/// Sweep configuration. Field names double as JSON keys and CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub edge_counts: Vec<usize>,
    #[serde(rename = "L_values", alias = "l_values")]
    pub l_values: Vec<u32>,
    /// `k / n` values; `k` is rounded to the nearest integer, at least 1.
    pub sparsity_factors: Vec<f64>,
    pub eps_k_ratios: Vec<f64>,
    pub q_max: f64,
    pub trials: usize,
    /// Last time index; `None` picks [`auto_t_max`] per deployment.
    pub t_max: Option<usize>,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    pub alpha_variance: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 100,
            edge_counts: vec![1100, 1400, 1800],
            l_values: (1..=40).collect(),
            sparsity_factors: vec![0.05, 0.15, 0.25],
            eps_k_ratios: vec![0.0, 0.002, 0.02, 0.2],
            q_max: 10.0,
            trials: 20,
            t_max: None,
            seed: 1,
            output_path: None,
            alpha_variance: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(QncError::InvalidParameters(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.edge_counts.is_empty()
            || self.l_values.is_empty()
            || self.sparsity_factors.is_empty()
            || self.eps_k_ratios.is_empty()
        {
            return bad("edge_counts, L_values, sparsity_factors and eps_k_ratios must be non-empty".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        let max_edges = self.n * (self.n - 1);
        if let Some(e) = self.edge_counts.iter().find(|&&e| e == 0 || e > max_edges) {
            return bad(format!("edge count {e} outside 1..={max_edges}"));
        }
        if let Some(l) = self.l_values.iter().find(|&&l| l == 0 || l > MAX_BITS_PER_BLOCK) {
            return bad(format!("block length {l} outside 1..={MAX_BITS_PER_BLOCK}"));
        }
        if let Some(f) = self.sparsity_factors.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return bad(format!("sparsity factor {f} outside (0, 1]"));
        }
        if let Some(r) = self.eps_k_ratios.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return bad(format!("eps_k ratio {r} must be finite and >= 0"));
        }
        if !(self.q_max > 0.0 && self.q_max.is_finite()) {
            return bad(format!("q_max must be positive, got {}", self.q_max));
        }
        if !(self.alpha_variance > 0.0 && self.alpha_variance.is_finite()) {
            return bad(format!("alpha_variance must be positive, got {}", self.alpha_variance));
        }
        if let Some(t) = self.t_max {
            if t < 2 {
                return bad(format!("t_max must be at least 2, got {t}"));
            }
        }
        Ok(())
    }

    pub fn sparsity(&self, k_over_n: f64) -> usize {
        ((k_over_n * self.n as f64).round() as usize).clamp(1, self.n)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let r = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(r)?)
    }
}

/// Horizon large enough for `1.5 n` QNC measurements and for the forwarding
/// baseline to deliver every packet.
pub fn auto_t_max(d: &Deployment) -> Result<usize> {
    let per_step = d.measurements_per_step();
    let qnc = (3 * d.num_nodes()).div_ceil(2 * per_step) + 1;
    Ok(qnc.max(completion_time(d)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Qnc,
    Pf,
}

/// One CSV row. For PF rows `m` is the number of packets delivered so far
/// and `eps_rec` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub scenario: Scenario,
    pub n: usize,
    pub edges: usize,
    #[serde(rename = "L")]
    pub l: u32,
    pub k_over_n: f64,
    pub eps_k_ratio: f64,
    pub trial: usize,
    pub t: usize,
    pub delay: u64,
    pub m: usize,
    pub err_db: f64,
    pub eps_rec: Option<f64>,
}

impl ExperimentRecord {
    fn sort_key(&self, other: &Self) -> Ordering {
        self.scenario
            .cmp(&other.scenario)
            .then(self.edges.cmp(&other.edges))
            .then(self.k_over_n.total_cmp(&other.k_over_n))
            .then(self.eps_k_ratio.total_cmp(&other.eps_k_ratio))
            .then(self.l.cmp(&other.l))
            .then(self.trial.cmp(&other.trial))
            .then(self.t.cmp(&other.t))
    }
}

pub fn delay(t: usize, l: u32) -> u64 {
    (t as u64 - 1) * l as u64
}

/// Seeds of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub deployment: u64,
    pub messages: u64,
    pub coefficients: u64,
}

impl TrialSeeds {
    pub fn new(root: u64, edges: usize, k: usize, eps_k_ratio: f64, trial: usize) -> Self {
        let (e, t) = (edges as u64, trial as u64);
        TrialSeeds {
            deployment: seed::derive(root, &[stream::DEPLOYMENT, e, t]),
            messages: seed::derive(root, &[stream::MESSAGES, e, k as u64, eps_k_ratio.to_bits(), t]),
            coefficients: seed::derive(root, &[stream::COEFFICIENTS, e, t]),
        }
    }
}

/// Everything that stays fixed across block lengths within one trial.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub deployment: Deployment,
    pub messages: MessageEnsemble,
    pub schedule: crate::coding::CoefficientSchedule,
    pub t_max: usize,
    /// `Psi_tot(t_max)`; `Psi_tot(t)` is its first `(t - 1) |In(v0)|` rows.
    pub psi_full: DMatrix<f64>,
}

impl TrialSetup {
    pub fn new(cfg: &ExperimentConfig, edges: usize, k_over_n: f64, eps_k_ratio: f64, trial: usize) -> Result<Self> {
        Self::build(cfg, None, edges, k_over_n, eps_k_ratio, trial, cfg.t_max)
    }

    /// Like [`TrialSetup::new`] but on a given network instead of a sampled one.
    pub fn on_deployment(
        cfg: &ExperimentConfig,
        deployment: &Deployment,
        k_over_n: f64,
        eps_k_ratio: f64,
        trial: usize,
    ) -> Result<Self> {
        Self::build(cfg, Some(deployment), deployment.num_edges(), k_over_n, eps_k_ratio, trial, cfg.t_max)
    }

    fn build(
        cfg: &ExperimentConfig,
        fixed: Option<&Deployment>,
        edges: usize,
        k_over_n: f64,
        eps_k_ratio: f64,
        trial: usize,
        t_max: Option<usize>,
    ) -> Result<Self> {
        let k = cfg.sparsity(k_over_n);
        let seeds = TrialSeeds::new(cfg.seed, edges, k, eps_k_ratio, trial);
        let deployment = match fixed {
            Some(d) => d.clone(),
            None => generate_deployment(cfg.n, edges, seeds.deployment)?,
        };
        let messages = generate_messages(cfg.n, k, eps_k_ratio, cfg.q_max, seeds.messages)?;
        let schedule = design_coefficients(&deployment, seeds.coefficients, cfg.alpha_variance)?;
        let t_max = match t_max {
            Some(t) => t,
            None => auto_t_max(&deployment)?,
        };
        let psi_full = build_psi_tot(&deployment, &schedule, t_max);
        Ok(TrialSetup {
            deployment,
            messages,
            schedule,
            t_max,
            psi_full,
        })
    }

    /// QNC and PF records for block length `l`.
    pub fn run(&self, l: u32, label: &CellLabel, opts: &DecoderOptions) -> Result<Vec<ExperimentRecord>> {
        let d = &self.deployment;
        let x = self.messages.x.as_slice();
        let q = QuantizerSpec::new(d, l, self.messages.q_max)?;
        let per_step = d.measurements_per_step();
        let record = |scenario, t, m, err_db, eps_rec| ExperimentRecord {
            scenario,
            n: d.num_nodes(),
            edges: d.num_edges(),
            l,
            k_over_n: label.k_over_n,
            eps_k_ratio: label.eps_k_ratio,
            trial: label.trial,
            t,
            delay: delay(t, l),
            m,
            err_db,
            eps_rec,
        };

        let mut out = Vec::with_capacity(2 * self.t_max);
        let run = run_qnc(d, &self.schedule, &q, x, self.t_max, false)?;
        let eps = eps_rec_profile(d, &self.schedule, &q, self.t_max);
        for t in 2..=self.t_max {
            let m = (t - 1) * per_step;
            let psi = self.psi_full.rows(0, m).into_owned();
            let dec = l1_decode(&psi, &self.messages.phi, &run.z_tot(t), eps[t - 2], opts)?;
            out.push(record(Scenario::Qnc, t, m, error_db(x, dec.x_hat.as_slice()), Some(eps[t - 2])));
        }
        let pf = run_pf(d, x, &q, self.t_max)?;
        for t in 1..=self.t_max {
            out.push(record(Scenario::Pf, t, pf.delivered[t - 1], error_db(x, &pf.estimates[t - 1]), None));
        }
        Ok(out)
    }
}

/// Cell coordinates copied into each record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellLabel {
    pub k_over_n: f64,
    pub eps_k_ratio: f64,
    pub trial: usize,
}

/// Runs every `(edges, k/n, eps_k, trial)` job in parallel, each over all
/// block lengths, and returns the records in canonical order.
///
/// Without an explicit `t_max`, all trials of one edge count share the
/// largest [`auto_t_max`] among their deployments, so every trial
/// contributes to every time index of the averaged curves.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    run_sweep_with(cfg, &DecoderOptions::default())
}

pub fn run_sweep_with(cfg: &ExperimentConfig, opts: &DecoderOptions) -> Result<Vec<ExperimentRecord>> {
    sweep(cfg, None, opts)
}

/// Sweep on one fixed network; `cfg.n` and `cfg.edge_counts` are taken from it.
pub fn run_sweep_on(cfg: &ExperimentConfig, d: &Deployment, opts: &DecoderOptions) -> Result<Vec<ExperimentRecord>> {
    let cfg = ExperimentConfig {
        n: d.num_nodes(),
        edge_counts: vec![d.num_edges()],
        ..cfg.clone()
    };
    sweep(&cfg, Some(d), opts)
}

fn sweep(cfg: &ExperimentConfig, fixed: Option<&Deployment>, opts: &DecoderOptions) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &edges in &cfg.edge_counts {
        for &k_over_n in &cfg.sparsity_factors {
            for &eps_k_ratio in &cfg.eps_k_ratios {
                for trial in 0..cfg.trials {
                    jobs.push((edges, k_over_n, eps_k_ratio, trial));
                }
            }
        }
    }
    let mut horizon: BTreeMap<usize, usize> = BTreeMap::new();
    for &edges in &cfg.edge_counts {
        let t = match (cfg.t_max, fixed) {
            (Some(t), _) => t,
            (None, Some(d)) => auto_t_max(d)?,
            (None, None) => (0..cfg.trials)
                .into_par_iter()
                .map(|trial| {
                    let seeds = TrialSeeds::new(cfg.seed, edges, 1, 0.0, trial);
                    auto_t_max(&generate_deployment(cfg.n, edges, seeds.deployment)?)
                })
                .try_reduce(|| 2, |a, b| Ok(a.max(b)))
                .map_err(|e| e.with_context(format!("edges={edges}")))?,
        };
        horizon.insert(edges, t);
    }
    let chunks = jobs
        .par_iter()
        .map(|&(edges, k_over_n, eps_k_ratio, trial)| {
            let context = || format!("edges={edges} k/n={k_over_n} eps_k={eps_k_ratio} trial={trial}");
            let setup = TrialSetup::build(cfg, fixed, edges, k_over_n, eps_k_ratio, trial, Some(horizon[&edges]))
                .map_err(|e| e.with_context(context()))?;
            let label = CellLabel {
                k_over_n,
                eps_k_ratio,
                trial,
            };
            let mut recs = Vec::new();
            for &l in &cfg.l_values {
                recs.extend(
                    setup
                        .run(l, &label, opts)
                        .map_err(|e| e.with_context(format!("{} L={l}", context())))?,
                );
            }
            Ok(recs)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut records: Vec<ExperimentRecord> = chunks.into_iter().flatten().collect();
    records.sort_by(|a, b| a.sort_key(b));
    Ok(records)
}

/// Trial-averaged curve point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: Scenario,
    pub n: usize,
    pub edges: usize,
    #[serde(rename = "L")]
    pub l: u32,
    pub k_over_n: f64,
    pub eps_k_ratio: f64,
    pub t: usize,
    pub delay: u64,
    pub trials: usize,
    pub mean_err_db: f64,
    /// `20 log10` of the mean linear-domain error.
    pub mean_err_linear_db: f64,
    pub mean_m: f64,
}

type CellKey = (Scenario, usize, usize, u64, u64, u32, usize);

fn cell_key(r: &ExperimentRecord) -> CellKey {
    (r.scenario, r.n, r.edges, r.k_over_n.to_bits(), r.eps_k_ratio.to_bits(), r.l, r.t)
}

/// Mean `err_db` over trials per `(scenario, cell, L, t)`.
pub fn aggregate(records: &[ExperimentRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<CellKey, Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(cell_key(r)).or_default().push(r);
    }
    let mut rows: Vec<AggregateRow> = groups
        .into_values()
        .map(|g| {
            let c = g.len() as f64;
            let first = g[0];
            let mean_lin = g.iter().map(|r| 10f64.powf(r.err_db / 20.0)).sum::<f64>() / c;
            AggregateRow {
                scenario: first.scenario,
                n: first.n,
                edges: first.edges,
                l: first.l,
                k_over_n: first.k_over_n,
                eps_k_ratio: first.eps_k_ratio,
                t: first.t,
                delay: first.delay,
                trials: g.len(),
                mean_err_db: g.iter().map(|r| r.err_db).sum::<f64>() / c,
                mean_err_linear_db: 20.0 * mean_lin.log10(),
                mean_m: g.iter().map(|r| r.m as f64).sum::<f64>() / c,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.scenario
            .cmp(&b.scenario)
            .then(a.edges.cmp(&b.edges))
            .then(a.k_over_n.total_cmp(&b.k_over_n))
            .then(a.eps_k_ratio.total_cmp(&b.eps_k_ratio))
            .then(a.l.cmp(&b.l))
            .then(a.t.cmp(&b.t))
    });
    rows
}

/// Minimal delay over block lengths reaching one target quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub scenario: Scenario,
    pub edges: usize,
    pub k_over_n: f64,
    pub eps_k_ratio: f64,
    pub target_err_db: f64,
    /// `None` when no block length reaches the target.
    pub min_delay: Option<u64>,
    #[serde(rename = "best_L")]
    pub best_l: Option<u32>,
}

type EnvelopeKey = (Scenario, usize, u64, u64);

fn envelope_groups(rows: &[AggregateRow]) -> BTreeMap<EnvelopeKey, Vec<&AggregateRow>> {
    let mut groups: BTreeMap<EnvelopeKey, Vec<&AggregateRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.scenario, r.edges, r.k_over_n.to_bits(), r.eps_k_ratio.to_bits()))
            .or_default()
            .push(r);
    }
    groups
}

/// For each target level, the smallest delay at which some block length's
/// averaged curve first reaches `mean_err_db <= target`.
pub fn l_optimized_envelope(rows: &[AggregateRow], levels: &[f64]) -> Result<Vec<EnvelopePoint>> {
    if rows.is_empty() {
        return Err(QncError::EmptyInput("no aggregated records".into()));
    }
    if levels.is_empty() {
        return Err(QncError::EmptyInput("no target levels".into()));
    }
    let mut out = Vec::new();
    for ((scenario, edges, k_bits, eps_bits), group) in envelope_groups(rows) {
        for &target in levels {
            let best = group
                .iter()
                .filter(|r| r.mean_err_db <= target)
                .min_by_key(|r| (r.delay, r.l));
            out.push(EnvelopePoint {
                scenario,
                edges,
                k_over_n: f64::from_bits(k_bits),
                eps_k_ratio: f64::from_bits(eps_bits),
                target_err_db: target,
                min_delay: best.map(|r| r.delay),
                best_l: best.map(|r| r.l),
            });
        }
    }
    Ok(out)
}

/// Best averaged error reachable within a delay budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayPoint {
    pub scenario: Scenario,
    pub edges: usize,
    pub k_over_n: f64,
    pub eps_k_ratio: f64,
    pub delay: u64,
    pub err_db: f64,
    #[serde(rename = "L")]
    pub l: u32,
    pub t: usize,
}

/// Lower envelope in the delay domain: at every delay that occurs in the
/// group, the minimum `mean_err_db` over all `(L, t)` with delay at most it.
pub fn delay_envelope(rows: &[AggregateRow]) -> Result<Vec<DelayPoint>> {
    if rows.is_empty() {
        return Err(QncError::EmptyInput("no aggregated records".into()));
    }
    let mut out = Vec::new();
    for ((scenario, edges, k_bits, eps_bits), mut group) in envelope_groups(rows) {
        group.sort_by(|a, b| a.delay.cmp(&b.delay).then(a.mean_err_db.total_cmp(&b.mean_err_db)));
        let mut best: Option<&AggregateRow> = None;
        let mut i = 0;
        while i < group.len() {
            let d = group[i].delay;
            while i < group.len() && group[i].delay == d {
                if best.map_or(true, |b| group[i].mean_err_db < b.mean_err_db) {
                    best = Some(group[i]);
                }
                i += 1;
            }
            let b = best.expect("group is non-empty");
            out.push(DelayPoint {
                scenario,
                edges,
                k_over_n: f64::from_bits(k_bits),
                eps_k_ratio: f64::from_bits(eps_bits),
                delay: d,
                err_db: b.mean_err_db,
                l: b.l,
                t: b.t,
            });
        }
    }
    Ok(out)
}

/// Target grid from `hi` down to `lo` in `step` dB decrements.
pub fn level_grid(hi: f64, lo: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0 && hi >= lo, "level grid needs step > 0 and hi >= lo");
    let count = ((hi - lo) / step).floor() as usize;
    (0..=count).map(|i| hi - i as f64 * step).collect()
}

pub fn write_csv<T: Serialize, W: std::io::Write>(rows: &[T], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<()> {
    write_csv(rows, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn read_records<R: std::io::Read>(r: R) -> Result<Vec<ExperimentRecord>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(QncError::from))
        .collect()
}

pub fn read_records_file(path: impl AsRef<Path>) -> Result<Vec<ExperimentRecord>> {
    read_records(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            n: 12,
            edge_counts: vec![50],
            l_values: vec![6, 12],
            sparsity_factors: vec![0.2],
            eps_k_ratios: vec![0.0],
            trials: 2,
            t_max: Some(5),
            seed: 3,
            ..ExperimentConfig::default()
        }
    }

    fn rec(scenario: Scenario, l: u32, trial: usize, t: usize, err_db: f64) -> ExperimentRecord {
        ExperimentRecord {
            scenario,
            n: 4,
            edges: 6,
            l,
            k_over_n: 0.25,
            eps_k_ratio: 0.0,
            trial,
            t,
            delay: delay(t, l),
            m: t,
            err_db,
            eps_rec: None,
        }
    }

    #[test]
    fn defaults_are_valid() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.l_values.len(), 40);
        assert_eq!(cfg.sparsity(0.05), 5);
    }

    #[test]
    fn validation_rejects() {
        let mut cfg = small_cfg();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg();
        cfg.l_values.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg();
        cfg.edge_counts = vec![200];
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg();
        cfg.t_max = Some(1);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_keys() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"n": 20, "L_values": [3], "trials": 2}"#).unwrap();
        assert_eq!((cfg.n, cfg.l_values.clone(), cfg.trials), (20, vec![3], 2));
        assert_eq!(cfg.edge_counts, vec![1100, 1400, 1800]);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn record_counts_and_invariants() {
        let mut cfg = small_cfg();
        cfg.trials = 1;
        cfg.l_values = vec![8];
        let recs = run_sweep(&cfg).unwrap();
        let qnc = recs.iter().filter(|r| r.scenario == Scenario::Qnc).count();
        let pf = recs.iter().filter(|r| r.scenario == Scenario::Pf).count();
        assert_eq!((qnc, pf), (4, 5));
        for r in &recs {
            assert_eq!(r.delay, (r.t as u64 - 1) * r.l as u64);
            assert_eq!(r.eps_rec.is_some(), r.scenario == Scenario::Qnc);
        }
    }

    #[test]
    fn sweep_is_reproducible_and_round_trips() {
        let cfg = small_cfg();
        let a = run_sweep(&cfg).unwrap();
        let b = run_sweep(&cfg).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_csv(&a, &mut ca).unwrap();
        write_csv(&b, &mut cb).unwrap();
        assert_eq!(ca, cb);
        let header = String::from_utf8(ca.clone()).unwrap();
        assert!(header.starts_with("scenario,n,edges,L,k_over_n,eps_k_ratio,trial,t,delay,m,err_db,eps_rec\n"));
        let back = read_records(ca.as_slice()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn shared_trial_across_block_lengths() {
        let cfg = small_cfg();
        let recs = run_sweep(&cfg).unwrap();
        // PF delivery counts depend on the network only, so they match across L
        let pf_m = |l: u32| -> Vec<usize> {
            recs.iter()
                .filter(|r| r.scenario == Scenario::Pf && r.l == l && r.trial == 0)
                .map(|r| r.m)
                .collect()
        };
        assert_eq!(pf_m(6), pf_m(12));
    }

    #[test]
    fn aggregate_means() {
        let recs = vec![
            rec(Scenario::Qnc, 2, 0, 2, -10.0),
            rec(Scenario::Qnc, 2, 1, 2, -30.0),
            rec(Scenario::Qnc, 2, 0, 3, -5.0),
        ];
        let rows = aggregate(&recs);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mean_err_db, -20.0);
        assert_eq!(rows[0].trials, 2);
        let lin = 20.0 * ((0.1f64.sqrt() + 0.001f64.sqrt()) / 2.0).log10();
        assert!((rows[0].mean_err_linear_db - lin).abs() < 1e-12);
        assert_eq!(rows[1].mean_err_db, -5.0);
    }

    #[test]
    fn envelope_single_and_dominated() {
        // L=2 reaches -10 at t=3 (delay 4); L=4 reaches it at t=2 (delay 4) and -20 at t=3 (delay 8)
        let recs = vec![
            rec(Scenario::Qnc, 2, 0, 2, 0.0),
            rec(Scenario::Qnc, 2, 0, 3, -10.0),
            rec(Scenario::Qnc, 4, 0, 2, -10.0),
            rec(Scenario::Qnc, 4, 0, 3, -20.0),
        ];
        let rows = aggregate(&recs);
        let env = l_optimized_envelope(&rows, &[-5.0, -15.0, -30.0]).unwrap();
        assert_eq!(env[0].min_delay, Some(4));
        assert_eq!(env[0].best_l, Some(2));
        assert_eq!((env[1].min_delay, env[1].best_l), (Some(8), Some(4)));
        assert_eq!(env[2].min_delay, None);

        let single = aggregate(&recs[..2]);
        let env = l_optimized_envelope(&single, &[0.0, -10.0]).unwrap();
        assert_eq!(env[0].min_delay, Some(2));
        assert_eq!(env[1].min_delay, Some(4));
        assert!(matches!(l_optimized_envelope(&[], &[0.0]), Err(QncError::EmptyInput(_))));
    }

    #[test]
    fn delay_envelope_is_monotone() {
        let recs = vec![
            rec(Scenario::Qnc, 2, 0, 2, 0.0),
            rec(Scenario::Qnc, 2, 0, 3, -10.0),
            rec(Scenario::Qnc, 2, 0, 4, -8.0),
            rec(Scenario::Qnc, 5, 0, 2, -12.0),
        ];
        let env = delay_envelope(&aggregate(&recs)).unwrap();
        let delays: Vec<u64> = env.iter().map(|p| p.delay).collect();
        assert_eq!(delays, vec![2, 4, 5, 6]);
        let errs: Vec<f64> = env.iter().map(|p| p.err_db).collect();
        assert_eq!(errs, vec![0.0, -10.0, -12.0, -12.0]);
    }

    #[test]
    fn grid() {
        assert_eq!(level_grid(0.0, -2.0, 1.0), vec![0.0, -1.0, -2.0]);
    }
}
