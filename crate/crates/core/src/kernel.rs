//! Exact n-step transition probabilities by repeated sparse application of
//! the transition operator, and sub-Gaussian envelope checks on them.
//!
//! Rows live on the ball `B(x, N + 1)` intersected with the cluster. Vertices
//! are ordered by hop distance from `x`, so the support of row `n` is a prefix
//! of that order and each row is stored only up to its support.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::{ClusterView, Environment};
use crate::error::{Error, Result};
use crate::graph::Exponents;
use crate::stats::{linear_fit, CompensatedSum};

/// Default limit on `N * |B(x, N + 1)|`.
pub const DEFAULT_KERNEL_BUDGET: u128 = 1 << 36;

/// Entries below this are flushed to zero.
pub const UNDERFLOW: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RowRetention {
    /// Keep every row.
    #[default]
    All,
    /// Keep only `P_n(x, x)` and the row masses; for long horizons on big balls.
    DiagonalOnly,
}

#[derive(Debug, Clone)]
pub struct HeatKernelTable {
    source: usize,
    horizon: usize,
    vertices: Vec<usize>,
    distance: Vec<u32>,
    weight: Vec<f64>,
    /// `prefix[n]`: number of ball vertices within distance `n`.
    prefix: Vec<usize>,
    local: HashMap<usize, usize>,
    rows: Vec<Vec<f64>>,
    diagonal: Vec<f64>,
    mass: Vec<f64>,
}

/// `P_n(x, .)` for `n = 0..=horizon` on `B(x, horizon + 1)`.
pub fn heat_kernel_table(env: &Environment, cluster: &ClusterView, x: usize, horizon: usize) -> Result<HeatKernelTable> {
    heat_kernel_table_with(env, cluster, x, horizon, RowRetention::All, DEFAULT_KERNEL_BUDGET)
}

pub fn heat_kernel_table_with(
    env: &Environment,
    cluster: &ClusterView,
    x: usize,
    horizon: usize,
    retention: RowRetention,
    budget: u128,
) -> Result<HeatKernelTable> {
    let graph = env.graph();
    graph.check_vertex(x)?;
    cluster.require(x)?;
    let radius = horizon + 1;
    graph.require_interior("heat kernel ball", x, radius)?;

    let ball: Vec<(usize, u32)> = graph
        .bounded_bfs(x, radius, false)
        .into_iter()
        .filter(|&(v, _)| cluster.contains(v))
        .collect();
    let requested = horizon as u128 * ball.len() as u128;
    if requested > budget {
        return Err(Error::BudgetExceeded {
            what: "heat kernel work N * |B|",
            requested,
            limit: budget,
        });
    }
    let vertices: Vec<usize> = ball.iter().map(|b| b.0).collect();
    let distance: Vec<u32> = ball.iter().map(|b| b.1).collect();
    let local: HashMap<usize, usize> = vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let weight: Vec<f64> = vertices.iter().map(|&v| graph.vertex_weight(v)).collect();
    let mut prefix = vec![0usize; radius + 1];
    for &d in &distance {
        prefix[d as usize] += 1;
    }
    for n in 1..=radius {
        prefix[n] += prefix[n - 1];
    }

    // Incoming transitions: for each y, (z, P(z, y)).
    let mut in_offsets = Vec::with_capacity(vertices.len() + 1);
    let mut in_edges: Vec<(u32, f64)> = Vec::new();
    in_offsets.push(0);
    for &y in &vertices {
        let start = in_edges.len();
        graph.for_each_neighbor(y, |z, e| {
            let w = graph.conductance(e);
            if w > 0.0 {
                if let Some(&zl) = local.get(&z) {
                    in_edges.push((zl as u32, w / weight[zl]));
                }
            }
        });
        in_edges[start..].sort_by_key(|p| p.0);
        in_offsets.push(in_edges.len());
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut diagonal = Vec::with_capacity(horizon + 1);
    let mut mass = Vec::with_capacity(horizon + 1);
    let mut current = vec![1.0];
    diagonal.push(1.0);
    mass.push(1.0);
    for n in 1..=horizon {
        let len = prefix[n];
        let mut next = vec![0.0; len];
        for (y, slot) in next.iter_mut().enumerate() {
            let mut acc = CompensatedSum::default();
            for &(z, p) in &in_edges[in_offsets[y]..in_offsets[y + 1]] {
                if let Some(&mass_z) = current.get(z as usize) {
                    acc.add(mass_z * p);
                }
            }
            let value = acc.value();
            *slot = if value < UNDERFLOW { 0.0 } else { value };
        }
        let mut total = CompensatedSum::default();
        next.iter().for_each(|&v| total.add(v));
        mass.push(total.value());
        diagonal.push(next[0]);
        let previous = std::mem::replace(&mut current, next);
        if retention == RowRetention::All {
            rows.push(previous);
        }
    }
    if retention == RowRetention::All {
        rows.push(current);
    }

    Ok(HeatKernelTable {
        source: x,
        horizon,
        vertices,
        distance,
        weight,
        prefix,
        local,
        rows,
        diagonal,
        mass,
    })
}

impl HeatKernelTable {
    pub fn source(&self) -> usize {
        self.source
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn support_radius(&self) -> usize {
        self.horizon + 1
    }

    pub fn retains_rows(&self) -> bool {
        !self.rows.is_empty()
    }

    /// Ball vertices (global ids) ordered by distance from the source.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn distance_of(&self, y: usize) -> Option<u32> {
        self.local.get(&y).map(|&i| self.distance[i])
    }

    /// `sum_y P_n(x, y)`.
    pub fn row_mass(&self, n: usize) -> f64 {
        self.mass[n]
    }

    /// `P_n(x, x)` for every `n`, available under any retention.
    pub fn return_probability(&self, n: usize) -> f64 {
        self.diagonal[n]
    }

    /// `p_n(x, x) = P_n(x, x) / mu(x)`.
    pub fn diagonal_kernel(&self, n: usize) -> f64 {
        self.diagonal[n] / self.weight[0]
    }

    /// `P_n(x, y)`; zero outside the ball. `None` if the row was not retained.
    pub fn transition(&self, n: usize, y: usize) -> Option<f64> {
        if n > self.horizon {
            return None;
        }
        if y == self.source {
            return Some(self.diagonal[n]);
        }
        let row = self.rows.get(n)?;
        Some(match self.local.get(&y) {
            Some(&i) => row.get(i).copied().unwrap_or(0.0),
            None => 0.0,
        })
    }

    /// `p_n(x, y) = P_n(x, y) / mu(y)`.
    pub fn kernel(&self, n: usize, y: usize) -> Option<f64> {
        let p = self.transition(n, y)?;
        Some(match self.local.get(&y) {
            Some(&i) => p / self.weight[i],
            None => 0.0,
        })
    }

    /// Local view of a retained row: `(vertex, distance, P_n, mu)` for the support of row `n`.
    fn row_entries(&self, n: usize) -> Option<impl Iterator<Item = (usize, u32, f64, f64)> + '_> {
        let row = self.rows.get(n)?;
        Some(row.iter().enumerate().map(move |(i, &p)| (self.vertices[i], self.distance[i], p, self.weight[i])))
    }

    /// CSV with columns `n,vertex_id,distance_from_x,P_n,p_n`; nonzero entries of retained rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "vertex_id", "distance_from_x", "P_n", "p_n"])?;
        for n in 0..=self.horizon {
            let Some(entries) = self.row_entries(n) else {
                continue;
            };
            for (v, d, p, mu) in entries {
                if p > 0.0 {
                    w.write_record([
                        n.to_string(),
                        v.to_string(),
                        d.to_string(),
                        format!("{p:e}"),
                        format!("{:e}", p / mu),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<kernel csv>", e))?;
        Ok(())
    }

    fn prefix_len(&self, n: usize) -> usize {
        self.prefix[n.min(self.prefix.len() - 1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeSide {
    /// `p_n(x,y) <= A n^{-alpha/beta} exp(-c (d/n^{1/beta})^{beta/(beta-1)})`
    /// for `d(x,y) v N_hat <= n`.
    Upper,
    /// `p_n(x,y) + p_{n+1}(x,y) >= A n^{-alpha/beta} exp(-c (...))`
    /// for `d(x,y)^{1+eps} v N_hat <= n`.
    Lower,
}

/// Side conditions selecting the `(n, y)` pairs an envelope must cover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainRule {
    pub n_hat: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    /// Upper end of the `c_exp` search interval.
    pub c_exp_max: f64,
    pub grid_points: usize,
    pub refine_iterations: usize,
    pub worst_pairs: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            c_exp_max: 16.0,
            grid_points: 129,
            refine_iterations: 100,
            worst_pairs: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConstants {
    pub c_amp: f64,
    pub c_exp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRatio {
    pub n: usize,
    pub vertex: usize,
    pub distance: u32,
    /// Data over envelope (upper side) or envelope over data (lower side); `<= 1` when the bound holds.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub side: EnvelopeSide,
    pub exponents: Exponents,
    pub domain: DomainRule,
    pub constants: EnvelopeConstants,
    pub fitted: bool,
    pub pairs: usize,
    pub violation_count: usize,
    /// Pairs closest to (or furthest past) the envelope.
    pub worst: Vec<PairRatio>,
}

/// One in-domain pair in log coordinates: the envelope holds iff
/// `log_a - c * z >= y` (upper) or `<= y` (lower).
#[derive(Debug, Clone, Copy)]
struct LogPair {
    n: usize,
    vertex: usize,
    distance: u32,
    z: f64,
    y: f64,
}

fn collect_pairs(
    table: &HeatKernelTable,
    side: EnvelopeSide,
    exponents: Exponents,
    domain: DomainRule,
) -> Result<Vec<LogPair>> {
    let Exponents { alpha, beta } = exponents;
    if !(beta > 1.0) {
        return Err(Error::param("beta", format!("must exceed 1, got {beta}")));
    }
    if side == EnvelopeSide::Lower && !(domain.epsilon >= 0.0 && domain.epsilon + 1.0 < beta) {
        return Err(Error::param(
            "epsilon",
            format!("need 0 <= epsilon and epsilon + 1 < beta, got epsilon = {}", domain.epsilon),
        ));
    }
    if !table.retains_rows() {
        return Err(Error::DegenerateTable("envelope fits need retained rows".into()));
    }
    let last_n = match side {
        EnvelopeSide::Upper => table.horizon,
        EnvelopeSide::Lower => table.horizon.saturating_sub(1),
    };
    let shape_power = beta / (beta - 1.0);
    let mut pairs = Vec::new();
    for n in domain.n_hat.max(1)..=last_n {
        let nf = n as f64;
        let len = match side {
            EnvelopeSide::Upper => table.prefix_len(n),
            EnvelopeSide::Lower => table.prefix_len(n + 1),
        };
        let current = &table.rows[n];
        for i in 0..len {
            let d = table.distance[i] as f64;
            let in_domain = match side {
                EnvelopeSide::Upper => d <= nf,
                EnvelopeSide::Lower => d.powf(1.0 + domain.epsilon) <= nf,
            };
            if !in_domain {
                continue;
            }
            let p_now = current.get(i).copied().unwrap_or(0.0);
            let value = match side {
                EnvelopeSide::Upper => p_now,
                EnvelopeSide::Lower => p_now + table.rows[n + 1].get(i).copied().unwrap_or(0.0),
            } / table.weight[i];
            if value < UNDERFLOW {
                if side == EnvelopeSide::Lower {
                    return Err(Error::DegenerateTable(format!(
                        "p_n + p_(n+1) vanishes at n = {n}, vertex {}",
                        table.vertices[i]
                    )));
                }
                continue;
            }
            pairs.push(LogPair {
                n,
                vertex: table.vertices[i],
                distance: table.distance[i],
                z: (d / nf.powf(1.0 / beta)).powf(shape_power),
                y: value.ln() + (alpha / beta) * nf.ln(),
            });
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyDomain(format!(
            "no (n, y) pairs satisfy the {side:?} side conditions"
        )));
    }
    Ok(pairs)
}

/// Tightest log-amplitude at fixed `c_exp`.
fn log_amplitude(pairs: &[LogPair], side: EnvelopeSide, c_exp: f64) -> f64 {
    let values = pairs.iter().map(|p| p.y + c_exp * p.z);
    match side {
        EnvelopeSide::Upper => values.fold(f64::NEG_INFINITY, f64::max),
        EnvelopeSide::Lower => values.fold(f64::INFINITY, f64::min),
    }
}

/// Smallest admissible upper-side amplitude at a fixed `c_exp`.
pub fn upper_amplitude_at(
    table: &HeatKernelTable,
    exponents: Exponents,
    domain: DomainRule,
    c_exp: f64,
) -> Result<f64> {
    let pairs = collect_pairs(table, EnvelopeSide::Upper, exponents, domain)?;
    Ok(log_amplitude(&pairs, EnvelopeSide::Upper, c_exp).exp())
}

/// Fits `(c_amp, c_exp)` for one side. Among envelopes valid on every
/// in-domain pair, picks the one with the smallest mean log-gap to the data:
/// a grid over `c_exp` in `[0, c_exp_max]`, then golden-section refinement,
/// with `c_amp` in closed form at each `c_exp`.
pub fn fit_envelope(
    table: &HeatKernelTable,
    side: EnvelopeSide,
    exponents: Exponents,
    domain: DomainRule,
    settings: FitSettings,
) -> Result<EnvelopeFit> {
    let pairs = collect_pairs(table, side, exponents, domain)?;
    let mean_z = pairs.iter().map(|p| p.z).sum::<f64>() / pairs.len() as f64;
    // Mean gap between the log-envelope and the data, up to a constant.
    let gap = |c: f64| {
        let log_a = log_amplitude(&pairs, side, c);
        match side {
            EnvelopeSide::Upper => log_a - c * mean_z,
            EnvelopeSide::Lower => c * mean_z - log_a,
        }
    };
    let grid = settings.grid_points.max(2);
    let step = settings.c_exp_max / (grid - 1) as f64;
    let (best, _) = (0..grid)
        .map(|i| (i, gap(i as f64 * step)))
        .fold((0, f64::INFINITY), |acc, (i, g)| if g < acc.1 { (i, g) } else { acc });
    let mut lo = (best as f64 - 1.0).max(0.0) * step;
    let mut hi = ((best + 1) as f64 * step).min(settings.c_exp_max);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..settings.refine_iterations {
        let a = hi - ratio * (hi - lo);
        let b = lo + ratio * (hi - lo);
        if gap(a) <= gap(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let c_exp = [0.5 * (lo + hi), best as f64 * step]
        .into_iter()
        .min_by(|a, b| gap(*a).total_cmp(&gap(*b)))
        .unwrap_or(0.0);
    let c_amp = log_amplitude(&pairs, side, c_exp).exp();
    if !(c_amp.is_finite() && c_amp > 0.0) {
        return Err(Error::DegenerateTable(format!("fitted amplitude {c_amp} is not finite and positive")));
    }
    let constants = EnvelopeConstants { c_amp, c_exp };
    Ok(summarize(&pairs, side, exponents, domain, constants, true, settings.worst_pairs))
}

/// Counts pairs violating supplied constants.
pub fn check_envelope(
    table: &HeatKernelTable,
    side: EnvelopeSide,
    exponents: Exponents,
    domain: DomainRule,
    constants: EnvelopeConstants,
) -> Result<EnvelopeFit> {
    let pairs = collect_pairs(table, side, exponents, domain)?;
    Ok(summarize(&pairs, side, exponents, domain, constants, false, FitSettings::default().worst_pairs))
}

fn summarize(
    pairs: &[LogPair],
    side: EnvelopeSide,
    exponents: Exponents,
    domain: DomainRule,
    constants: EnvelopeConstants,
    fitted: bool,
    keep: usize,
) -> EnvelopeFit {
    let log_a = constants.c_amp.ln();
    let mut ratios: Vec<PairRatio> = pairs
        .iter()
        .map(|p| {
            let log_env = log_a - constants.c_exp * p.z;
            let log_ratio = match side {
                EnvelopeSide::Upper => p.y - log_env,
                EnvelopeSide::Lower => log_env - p.y,
            };
            PairRatio {
                n: p.n,
                vertex: p.vertex,
                distance: p.distance,
                ratio: log_ratio.exp(),
            }
        })
        .collect();
    // Fitted envelopes touch the data exactly; allow rounding in the log domain.
    let tolerance = if fitted { 1.0 + 1e-9 } else { 1.0 };
    let violation_count = ratios.iter().filter(|r| r.ratio > tolerance).count();
    ratios.sort_by(|a, b| b.ratio.total_cmp(&a.ratio).then(a.n.cmp(&b.n)).then(a.vertex.cmp(&b.vertex)));
    ratios.truncate(keep);
    EnvelopeFit {
        side,
        exponents,
        domain,
        constants,
        fitted,
        pairs: pairs.len(),
        violation_count,
        worst: ratios,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagonalExponent {
    pub exponent_hat: f64,
    pub residual: f64,
    pub n_min: usize,
    pub n_max: usize,
}

/// Negated log-log slope of `p_n(x,x) + p_{n+1}(x,x)` over `n in [n_min, n_max]`.
pub fn on_diagonal_exponent(table: &HeatKernelTable, n_min: usize, n_max: usize) -> Result<DiagonalExponent> {
    if n_min < 2 || n_min >= n_max {
        return Err(Error::param("n_min", "need 2 <= n_min < n_max"));
    }
    if n_max + 1 > table.horizon {
        return Err(Error::param(
            "n_max",
            format!("needs horizon >= n_max + 1 = {}, table has {}", n_max + 1, table.horizon),
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for n in n_min..=n_max {
        let value = table.diagonal_kernel(n) + table.diagonal_kernel(n + 1);
        if value >= UNDERFLOW {
            xs.push((n as f64).ln());
            ys.push(value.ln());
        }
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok(DiagonalExponent {
        exponent_hat: -fit.slope,
        residual: fit.max_abs_residual,
        n_min,
        n_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{extract_cluster, sample_environment, ConductanceModel};
    use crate::graph::lattice_box;

    fn constant_env(dim: usize, half: usize) -> Environment {
        sample_environment(&lattice_box(dim, half).unwrap(), ConductanceModel::Constant, 0, 0).unwrap()
    }

    #[test]
    fn point_mass_and_two_step_return() {
        let env = constant_env(1, 4);
        let cluster = extract_cluster(&env);
        let o = env.graph().base_point();
        let t = heat_kernel_table(&env, &cluster, o, 2).unwrap();
        assert_eq!(t.transition(0, o), Some(1.0));
        assert_eq!(t.transition(0, o + 1), Some(0.0));
        // P_2(0,0) = 1/2, mu(0) = 2.
        assert!((t.kernel(2, o).unwrap() - 0.25).abs() < 1e-15);
        assert!((t.row_mass(2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parity_zeros_are_exact() {
        let env = constant_env(2, 12);
        let cluster = extract_cluster(&env);
        let g = env.graph();
        let o = g.base_point();
        let t = heat_kernel_table(&env, &cluster, o, 10).unwrap();
        for n in 0..=10 {
            for &y in t.vertices() {
                let d = g.graph_distance(o, y, false).unwrap().unwrap();
                if (n + d) % 2 == 1 || d > n {
                    assert_eq!(t.transition(n, y), Some(0.0));
                }
            }
        }
    }

    #[test]
    fn kernel_refuses_boundary_and_budget() {
        let env = constant_env(2, 6);
        let cluster = extract_cluster(&env);
        let o = env.graph().base_point();
        assert!(matches!(
            heat_kernel_table(&env, &cluster, o, 5),
            Err(Error::BoundaryContact { .. })
        ));
        assert!(matches!(
            heat_kernel_table_with(&env, &cluster, o, 4, RowRetention::All, 10),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn diagonal_only_keeps_the_diagonal() {
        let env = constant_env(2, 20);
        let cluster = extract_cluster(&env);
        let o = env.graph().base_point();
        let full = heat_kernel_table(&env, &cluster, o, 16).unwrap();
        let slim = heat_kernel_table_with(&env, &cluster, o, 16, RowRetention::DiagonalOnly, DEFAULT_KERNEL_BUDGET).unwrap();
        for n in 0..=16 {
            assert_eq!(full.return_probability(n), slim.return_probability(n));
            assert_eq!(full.row_mass(n), slim.row_mass(n));
        }
        assert_eq!(slim.transition(3, o + 1), None);
        let up = DomainRule { n_hat: 1, epsilon: 0.1 };
        assert!(fit_envelope(&slim, EnvelopeSide::Upper, Exponents::lattice(2), up, FitSettings::default()).is_err());
    }

    #[test]
    fn envelope_preconditions() {
        let env = constant_env(2, 20);
        let cluster = extract_cluster(&env);
        let o = env.graph().base_point();
        let t = heat_kernel_table(&env, &cluster, o, 16).unwrap();
        let ex = Exponents::lattice(2);
        let bad = DomainRule { n_hat: 1, epsilon: 1.0 };
        assert!(matches!(
            fit_envelope(&t, EnvelopeSide::Lower, ex, bad, FitSettings::default()),
            Err(Error::InvalidParameter { .. })
        ));
        let empty = DomainRule { n_hat: 100, epsilon: 0.1 };
        assert!(matches!(
            fit_envelope(&t, EnvelopeSide::Upper, ex, empty, FitSettings::default()),
            Err(Error::EmptyDomain(_))
        ));
        let vacuous = EnvelopeConstants { c_amp: 1e300, c_exp: 0.0 };
        let ok = DomainRule { n_hat: 1, epsilon: 0.1 };
        let report = check_envelope(&t, EnvelopeSide::Upper, ex, ok, vacuous).unwrap();
        assert_eq!(report.violation_count, 0);
        let tiny = EnvelopeConstants { c_amp: 1e-6, c_exp: 0.0 };
        assert!(check_envelope(&t, EnvelopeSide::Upper, ex, ok, tiny).unwrap().violation_count > 0);
    }

    #[test]
    fn fitted_envelopes_hold_everywhere() {
        let env = constant_env(2, 40);
        let cluster = extract_cluster(&env);
        let o = env.graph().base_point();
        let t = heat_kernel_table(&env, &cluster, o, 32).unwrap();
        let ex = Exponents::lattice(2);
        let rule = DomainRule { n_hat: 1, epsilon: 0.1 };
        for side in [EnvelopeSide::Upper, EnvelopeSide::Lower] {
            let fit = fit_envelope(&t, side, ex, rule, FitSettings::default()).unwrap();
            assert_eq!(fit.violation_count, 0, "{side:?}");
            assert!(fit.constants.c_amp > 0.0 && fit.constants.c_amp.is_finite());
            let recheck = check_envelope(&t, side, ex, rule, EnvelopeConstants {
                c_amp: fit.constants.c_amp * (1.0 + 1e-9f64).powi(if side == EnvelopeSide::Upper { 1 } else { -1 }),
                c_exp: fit.constants.c_exp,
            })
            .unwrap();
            assert_eq!(recheck.violation_count, 0, "{side:?}");
        }
    }

    #[test]
    fn diagonal_exponent_arguments() {
        let env = constant_env(1, 40);
        let cluster = extract_cluster(&env);
        let t = heat_kernel_table(&env, &cluster, env.graph().base_point(), 32).unwrap();
        assert!(on_diagonal_exponent(&t, 1, 10).is_err());
        assert!(on_diagonal_exponent(&t, 4, 32).is_err());
        let fit = on_diagonal_exponent(&t, 8, 31).unwrap();
        assert!((fit.exponent_hat - 0.5).abs() < 0.1);
    }

    #[test]
    fn csv_rows_sum_to_one() {
        let env = constant_env(1, 8);
        let cluster = extract_cluster(&env);
        let t = heat_kernel_table(&env, &cluster, env.graph().base_point(), 6).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let mut sums = vec![0.0; 7];
        let mut reader = csv::Reader::from_reader(buf.as_slice());
        for rec in reader.records() {
            let rec = rec.unwrap();
            let n: usize = rec[0].parse().unwrap();
            sums[n] += rec[3].parse::<f64>().unwrap();
        }
        assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-10));
    }
}
