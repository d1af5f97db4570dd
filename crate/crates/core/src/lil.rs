//! Iterated-logarithm functionals, the scaling sequences, and ensemble reports.
//!
//! The asymptotic `limsup` / `liminf` are proxied by the max / min of the
//! normalized path functionals over geometric checkpoints, optionally
//! restricted to a tail window `n >= n_tail`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::{extract_cluster, Environment};
use crate::error::{Error, Result};
use crate::rng::WalkKey;
use crate::stats::{median, quantile_sorted, relative_mad};
use crate::walk::{PathSummary, Walker, WalkMetric};

/// `Phi(q) = q^{1/beta} (log log q)^{1 - 1/beta}`, defined for `q > e`.
pub fn phi(q: f64, beta: f64) -> Result<f64> {
    if !(q > std::f64::consts::E) {
        return Err(Error::Domain(q));
    }
    Ok(q.powf(1.0 / beta) * q.ln().ln().powf(1.0 - 1.0 / beta))
}

/// `psi(n) = n^{1/beta} (log log n)^{-1/beta}`, defined for `n > e`.
pub fn psi(n: f64, beta: f64) -> Result<f64> {
    if !(n > std::f64::consts::E) {
        return Err(Error::Domain(n));
    }
    Ok(n.powf(1.0 / beta) * n.ln().ln().powf(-1.0 / beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub c5: f64,
    pub c6: f64,
}

impl ScalingParams {
    /// Exponents from the catalog with `epsilon = 0.1`, `c5 = c6 = 1`.
    pub fn new(alpha: f64, beta: f64) -> Self {
        ScalingParams {
            alpha,
            beta,
            epsilon: 0.1,
            c5: 1.0,
            c6: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 1.0) {
            return Err(Error::param("alpha", "must be at least 1"));
        }
        if !(self.beta > 1.0) {
            return Err(Error::param("beta", "must exceed 1"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon + 1.0 < self.beta) {
            return Err(Error::param("epsilon", "need 0 <= epsilon and epsilon + 1 < beta"));
        }
        if !(self.c5 > 0.0 && self.c6 > 0.0) {
            return Err(Error::param("c5", "c5 and c6 must be positive"));
        }
        Ok(())
    }
}

/// `a_k^beta = e^{k^2}`, `b_k^beta = e^k`, `lambda_k = log(c5 (1+k)^{2/3}) / c6`,
/// `u_k = lambda_k a_k^beta`, `sigma_k = sum_{i<k} u_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceTable {
    pub k: Vec<usize>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub lambda: Vec<f64>,
    pub u: Vec<f64>,
    pub sigma: Vec<f64>,
}

pub fn sequence_table(k_max: usize, params: &ScalingParams) -> Result<SequenceTable> {
    params.validate()?;
    if k_max < 1 {
        return Err(Error::param("k_max", "must be at least 1"));
    }
    let beta = params.beta;
    let ks: Vec<usize> = (1..=k_max).collect();
    let lambda: Vec<f64> = ks
        .iter()
        .map(|&k| (params.c5 * (1.0 + k as f64).powf(2.0 / 3.0)).ln() / params.c6)
        .collect();
    let bad: Vec<usize> = ks.iter().zip(&lambda).filter(|(_, l)| **l <= 0.0).map(|(k, _)| *k).collect();
    if !bad.is_empty() {
        return Err(Error::NonpositiveLambda(bad));
    }
    let a: Vec<f64> = ks.iter().map(|&k| ((k * k) as f64 / beta).exp()).collect();
    let b: Vec<f64> = ks.iter().map(|&k| (k as f64 / beta).exp()).collect();
    let u: Vec<f64> = ks.iter().zip(&lambda).map(|(&k, l)| l * ((k * k) as f64).exp()).collect();
    let mut sigma = Vec::with_capacity(k_max);
    let mut acc = 0.0;
    for ui in &u {
        sigma.push(acc);
        acc += ui;
    }
    Ok(SequenceTable {
        k: ks,
        a,
        b,
        lambda,
        u,
        sigma,
    })
}

/// Corollary target `(1 + k)^{-2/3}`.
pub fn confinement_target(k: usize) -> f64 {
    (1.0 + k as f64).powf(-2.0 / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LilOptions {
    /// First checkpoint of the tail window; must exceed e.
    pub n_tail: u64,
    /// Tail-window `C1_sup_hat` above this marks a path as non-diffusive.
    pub diffusive_ceiling: f64,
}

impl LilOptions {
    /// Tail window over the last decade of `n_steps`.
    pub fn last_decade(n_steps: u64) -> Self {
        LilOptions {
            n_tail: (n_steps / 10).max(3),
            diffusive_ceiling: 10.0,
        }
    }
}

/// Normalized statistics of one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkStatistics {
    pub env_id: u64,
    pub walk_id: u64,
    /// `max_n d(X_0, X_n) / Phi(n)`.
    pub c1_hat: f64,
    /// `max_n running_max(n) / Phi(n)`.
    pub c1_sup_hat: f64,
    /// `min_n running_max(n) / psi(n)`.
    pub c2_hat: f64,
    pub tail_c1_hat: f64,
    pub tail_c1_sup_hat: f64,
    pub tail_c2_hat: f64,
    /// Largest checkpoint in the tail window.
    pub tail_last_n: u64,
    pub non_diffusive: bool,
}

/// Ensemble order statistics of one per-walk statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderStats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl OrderStats {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.collect();
        v.sort_by(f64::total_cmp);
        OrderStats {
            min: v[0],
            median: quantile_sorted(&v, 0.5),
            max: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LilReport {
    pub beta: f64,
    pub options: LilOptions,
    /// Sorted by `(env_id, walk_id)`.
    pub walks: Vec<WalkStatistics>,
    pub c1: OrderStats,
    pub c1_sup: OrderStats,
    pub c2: OrderStats,
    pub tail_c1: OrderStats,
    pub tail_c1_sup: OrderStats,
    pub tail_c2: OrderStats,
    pub non_diffusive: usize,
    pub used: usize,
    pub discarded: usize,
}

/// Per-walk statistics followed by ensemble order statistics; flagged paths are excluded and counted.
pub fn lil_report(summaries: &[PathSummary], beta: f64, options: LilOptions) -> Result<LilReport> {
    if !(beta > 1.0) {
        return Err(Error::param("beta", "must exceed 1"));
    }
    if !(options.n_tail as f64 > std::f64::consts::E) {
        return Err(Error::param("n_tail", "must exceed e"));
    }
    let discarded = summaries.iter().filter(|s| s.boundary_hit).count();
    let mut walks = Vec::with_capacity(summaries.len() - discarded);
    for s in summaries.iter().filter(|s| !s.boundary_hit) {
        walks.push(walk_statistics(s, beta, options)?);
    }
    if walks.is_empty() {
        return Err(Error::AllDiscarded(discarded));
    }
    walks.sort_by_key(|w| (w.env_id, w.walk_id));
    let non_diffusive = walks.iter().filter(|w| w.non_diffusive).count();
    Ok(LilReport {
        beta,
        options,
        c1: OrderStats::of(walks.iter().map(|w| w.c1_hat)),
        c1_sup: OrderStats::of(walks.iter().map(|w| w.c1_sup_hat)),
        c2: OrderStats::of(walks.iter().map(|w| w.c2_hat)),
        tail_c1: OrderStats::of(walks.iter().map(|w| w.tail_c1_hat)),
        tail_c1_sup: OrderStats::of(walks.iter().map(|w| w.tail_c1_sup_hat)),
        tail_c2: OrderStats::of(walks.iter().map(|w| w.tail_c2_hat)),
        non_diffusive,
        used: walks.len(),
        discarded,
        walks,
    })
}

fn walk_statistics(s: &PathSummary, beta: f64, options: LilOptions) -> Result<WalkStatistics> {
    let mut all = Extremes::default();
    let mut tail = Extremes::default();
    let mut tail_last_n = 0;
    for i in 0..s.checkpoints.len() {
        let n = s.checkpoints[i];
        if n < 3 {
            continue;
        }
        let nf = n as f64;
        let (phi_n, psi_n) = (phi(nf, beta)?, psi(nf, beta)?);
        let point = (
            s.displacement[i] as f64 / phi_n,
            s.running_max[i] as f64 / phi_n,
            s.running_max[i] as f64 / psi_n,
        );
        all.push(point);
        if n >= options.n_tail {
            tail.push(point);
            tail_last_n = n;
        }
    }
    if all.count == 0 {
        return Err(Error::Insufficient(format!(
            "walk {} has no checkpoint above e",
            s.walk_id
        )));
    }
    if tail.count == 0 {
        return Err(Error::Insufficient(format!(
            "walk {} has no checkpoint in the tail window n >= {}",
            s.walk_id, options.n_tail
        )));
    }
    Ok(WalkStatistics {
        env_id: s.env_id,
        walk_id: s.walk_id,
        c1_hat: all.c1,
        c1_sup_hat: all.c1_sup,
        c2_hat: all.c2,
        tail_c1_hat: tail.c1,
        tail_c1_sup_hat: tail.c1_sup,
        tail_c2_hat: tail.c2,
        tail_last_n,
        non_diffusive: tail.c1_sup > options.diffusive_ceiling,
    })
}

#[derive(Debug, Clone, Copy)]
struct Extremes {
    c1: f64,
    c1_sup: f64,
    c2: f64,
    count: usize,
}

impl Default for Extremes {
    fn default() -> Self {
        Extremes {
            c1: 0.0,
            c1_sup: 0.0,
            c2: f64::INFINITY,
            count: 0,
        }
    }
}

impl Extremes {
    fn push(&mut self, (c1, c1_sup, c2): (f64, f64, f64)) {
        self.c1 = self.c1.max(c1);
        self.c1_sup = self.c1_sup.max(c1_sup);
        self.c2 = self.c2.min(c2);
        self.count += 1;
    }
}

/// Which normalized functional a plot CSV carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LilStatistic {
    /// `d(X_0, X_n) / Phi(n)`
    Displacement,
    /// `running_max(n) / Phi(n)`
    RunningMaxOverPhi,
    /// `running_max(n) / psi(n)`
    RunningMaxOverPsi,
}

impl LilStatistic {
    pub fn file_stem(self) -> &'static str {
        match self {
            LilStatistic::Displacement => "lil_c1",
            LilStatistic::RunningMaxOverPhi => "lil_c1_sup",
            LilStatistic::RunningMaxOverPsi => "lil_c2",
        }
    }
}

/// Plot-ready CSV `n,Phi_n,psi_n,stat_value,walk_id,env_id` over unflagged paths.
pub fn write_lil_csv<W: Write>(summaries: &[PathSummary], beta: f64, stat: LilStatistic, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "Phi_n", "psi_n", "stat_value", "walk_id", "env_id"])?;
    for s in summaries.iter().filter(|s| !s.boundary_hit) {
        for i in 0..s.checkpoints.len() {
            let n = s.checkpoints[i];
            if n < 3 {
                continue;
            }
            let (phi_n, psi_n) = (phi(n as f64, beta)?, psi(n as f64, beta)?);
            let value = match stat {
                LilStatistic::Displacement => s.displacement[i] as f64 / phi_n,
                LilStatistic::RunningMaxOverPhi => s.running_max[i] as f64 / phi_n,
                LilStatistic::RunningMaxOverPsi => s.running_max[i] as f64 / psi_n,
            };
            w.write_record([
                n.to_string(),
                format!("{phi_n:?}"),
                format!("{psi_n:?}"),
                format!("{value:?}"),
                s.walk_id.to_string(),
                s.env_id.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<lil csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusSummary {
    pub radius: usize,
    /// `r^beta log log r^beta`.
    pub normalizer: f64,
    pub exits: usize,
    pub censored: usize,
    pub max: f64,
    pub mean: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
    /// Median of `tau / r^beta`.
    pub median_over_r_beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitScalingReport {
    pub beta: f64,
    pub radii: Vec<RadiusSummary>,
    /// `(min, max)` over radii of the per-radius maximum of the normalized exit time.
    pub band: (f64, f64),
}

/// Normalized exit times `tau / (r^beta log log r^beta)` per radius; censored records are counted, not used.
pub fn exit_scaling_report(records: &[crate::walk::ExitRecord], beta: f64) -> Result<ExitScalingReport> {
    if !(beta > 1.0) {
        return Err(Error::param("beta", "must exceed 1"));
    }
    let mut by_radius: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        let slot = by_radius.entry(r.radius).or_default();
        if r.censored {
            slot.1 += 1;
        } else {
            slot.0.push(r.tau as f64);
        }
    }
    let mut radii = Vec::new();
    for (radius, (mut taus, censored)) in by_radius {
        let r_beta = (radius as f64).powf(beta);
        if !(r_beta > std::f64::consts::E) {
            return Err(Error::param(
                "radius",
                format!("r^beta must exceed e, got r = {radius}"),
            ));
        }
        if taus.is_empty() {
            continue;
        }
        let normalizer = r_beta * r_beta.ln().ln();
        taus.sort_by(f64::total_cmp);
        let normalized: Vec<f64> = taus.iter().map(|t| t / normalizer).collect();
        radii.push(RadiusSummary {
            radius,
            normalizer,
            exits: taus.len(),
            censored,
            max: normalized[normalized.len() - 1],
            mean: normalized.iter().sum::<f64>() / normalized.len() as f64,
            q10: quantile_sorted(&normalized, 0.1),
            median: quantile_sorted(&normalized, 0.5),
            q90: quantile_sorted(&normalized, 0.9),
            median_over_r_beta: quantile_sorted(&taus, 0.5) / r_beta,
        });
    }
    if radii.len() < 3 {
        return Err(Error::Insufficient(format!(
            "exit scaling needs uncensored records at >= 3 radii, got {}",
            radii.len()
        )));
    }
    let maxima = radii.iter().map(|r| r.max);
    let band = (
        maxima.clone().fold(f64::INFINITY, f64::min),
        maxima.fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(ExitScalingReport { beta, radii, band })
}

impl ExitScalingReport {
    /// CSV `r,normalizer,q10,median,q90,max`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "normalizer", "q10", "median", "q90", "max"])?;
        for r in &self.radii {
            w.write_record([
                r.radius.to_string(),
                format!("{:?}", r.normalizer),
                format!("{:?}", r.q10),
                format!("{:?}", r.median),
                format!("{:?}", r.q90),
                format!("{:?}", r.max),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<exit scaling csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryRow {
    pub k: usize,
    pub env_id: u64,
    pub radius: usize,
    pub horizon: u64,
    pub estimate: f64,
    pub interval: (f64, f64),
    pub target: f64,
    pub meets_target: bool,
}

/// Confinement at radius `ceil(a_k)` up to `ceil(u_k)` from each environment's base point,
/// next to the target `(1+k)^{-2/3}`. Rows are reported, never asserted.
pub fn confinement_vs_corollary(
    envs: &[Environment],
    params: &ScalingParams,
    ks: std::ops::RangeInclusive<usize>,
    trials: u64,
    max_horizon: u64,
    master_seed: u64,
) -> Result<Vec<CorollaryRow>> {
    let k_max = *ks.end();
    let table = sequence_table(k_max, params)?;
    let mut rows = Vec::new();
    for env in envs {
        let cluster = extract_cluster(env);
        let base = env.graph().base_point();
        for k in ks.clone() {
            let radius = table.a[k - 1].ceil() as usize;
            let horizon = table.u[k - 1].ceil();
            if horizon > max_horizon as f64 {
                return Err(Error::param(
                    "k",
                    format!("u_{k} = {horizon:.3e} exceeds the simulable horizon {max_horizon}"),
                ));
            }
            let horizon = horizon as u64;
            env.graph().require_interior("corollary ball", base, radius + 1)?;
            let walker = Walker::new(env, &cluster, base, WalkMetric::Graph, 0)?;
            let est = walker.confinement(radius, horizon, trials, WalkKey::new(master_seed, env.env_id(), (k as u64) << 40))?;
            let target = confinement_target(k);
            rows.push(CorollaryRow {
                k,
                env_id: env.env_id(),
                radius,
                horizon,
                estimate: est.estimate,
                interval: est.interval,
                target,
                meets_target: est.estimate >= target,
            });
        }
    }
    Ok(rows)
}

/// One LIL report tagged with its environment and start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedReport {
    pub env_id: u64,
    pub start: usize,
    pub report: LilReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionSummary {
    pub environments: usize,
    pub starts_per_env: usize,
    /// Relative MAD across environments of the per-environment median (over starts)
    /// of the ensemble-median tail-window statistic.
    pub cross_env_c1_sup: f64,
    pub cross_env_c2: f64,
    /// Median over environments of the relative MAD across starts.
    pub cross_start_c1_sup: f64,
    pub cross_start_c2: f64,
    pub cross_start_c1_sup_max: f64,
    pub cross_start_c2_max: f64,
}

pub fn dispersion_report(reports: &[TaggedReport]) -> Result<DispersionSummary> {
    let mut by_env: BTreeMap<u64, Vec<&TaggedReport>> = BTreeMap::new();
    for r in reports {
        by_env.entry(r.env_id).or_default().push(r);
    }
    let min_starts = by_env.values().map(|v| v.len()).min().unwrap_or(0);
    if by_env.len() < 5 || min_starts < 2 {
        return Err(Error::Insufficient(format!(
            "dispersion needs >= 5 environments with >= 2 starts each, got {} environments, min {} starts",
            by_env.len(),
            min_starts
        )));
    }
    let mut env_c1 = Vec::new();
    let mut env_c2 = Vec::new();
    let mut start_c1 = Vec::new();
    let mut start_c2 = Vec::new();
    for entries in by_env.values() {
        let c1: Vec<f64> = entries.iter().map(|r| r.report.tail_c1_sup.median).collect();
        let c2: Vec<f64> = entries.iter().map(|r| r.report.tail_c2.median).collect();
        env_c1.push(median(&c1));
        env_c2.push(median(&c2));
        start_c1.push(relative_mad(&c1));
        start_c2.push(relative_mad(&c2));
    }
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(DispersionSummary {
        environments: by_env.len(),
        starts_per_env: min_starts,
        cross_env_c1_sup: relative_mad(&env_c1),
        cross_env_c2: relative_mad(&env_c2),
        cross_start_c1_sup: median(&start_c1),
        cross_start_c2: median(&start_c2),
        cross_start_c1_sup_max: max(&start_c1),
        cross_start_c2_max: max(&start_c2),
    })
}
