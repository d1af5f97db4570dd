//! The discrete-time walk `P(x, y) = w_xy / mu(x)` on the base-point cluster
//! and the trajectory functionals recorded from it.
//!
//! A [`Walker`] is built once per (environment, start vertex); it owns the
//! distance field from the start and hands out independent trajectories keyed
//! by [`WalkKey`]. Only functionals are recorded, never full paths.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{ClusterView, Environment};
use crate::error::{Error, Result};
use crate::graph::{Conductances, LatticeShape, Topology, WeightedGraph, MAX_DIM, UNREACHABLE};
use crate::rng::{WalkKey, WalkStream};
use crate::stats::wilson_interval;

/// Default geometric checkpoint ratio.
pub const DEFAULT_CHECKPOINT_RATIO: f64 = 1.5;

/// Which hop distance the trajectory functionals use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkMetric {
    /// Hop distance of the underlying graph, ignoring conductances.
    #[default]
    Graph,
    /// Hop distance inside the cluster (zero-conductance edges impassable).
    Cluster,
}

/// One-step law from `x`: neighbors with their transition probabilities.
/// Zero-conductance edges are omitted.
pub fn step_distribution(env: &Environment, x: usize) -> Result<Vec<(usize, f64)>> {
    let graph = env.graph();
    graph.check_vertex(x)?;
    let mu = graph.vertex_weight(x);
    if mu <= 0.0 {
        return Err(Error::IsolatedVertex(x));
    }
    let mut out = Vec::new();
    graph.for_each_neighbor(x, |y, e| {
        let w = graph.conductance(e);
        if w > 0.0 {
            out.push((y, w / mu));
        }
    });
    Ok(out)
}

/// `floor(q^k)` for `k = 0, 1, ...`, deduplicated, up to `n_steps`.
pub fn checkpoint_times(q: f64, n_steps: u64) -> Result<Vec<u64>> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::param("q", format!("checkpoint ratio must exceed 1, got {q}")));
    }
    let mut out: Vec<u64> = Vec::new();
    let mut k = 0i32;
    loop {
        let t = q.powi(k).floor();
        if t > n_steps as f64 {
            break;
        }
        let t = t as u64;
        if out.last() != Some(&t) {
            out.push(t);
        }
        k += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub start: usize,
    pub n_steps: u64,
    pub checkpoint_ratio: f64,
    pub boundary_margin: usize,
    pub metric: WalkMetric,
}

impl WalkConfig {
    pub fn new(start: usize, n_steps: u64) -> Self {
        WalkConfig {
            start,
            n_steps,
            checkpoint_ratio: DEFAULT_CHECKPOINT_RATIO,
            boundary_margin: 0,
            metric: WalkMetric::Graph,
        }
    }
}

/// Functionals of one trajectory at the geometric checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub env_id: u64,
    pub walk_id: u64,
    pub checkpoints: Vec<u64>,
    /// `d(X_0, X_n)` at each checkpoint.
    pub displacement: Vec<u32>,
    /// `max_{l <= n} d(X_0, X_l)` at each checkpoint.
    pub running_max: Vec<u32>,
    pub final_position: usize,
    pub final_displacement: u32,
    pub final_running_max: u32,
    /// The trajectory left the safe region; its checkpoints stop at the hit.
    pub boundary_hit: bool,
}

impl PathSummary {
    /// Writes one CSV row per checkpoint: `env_id,walk_id,checkpoint_n,displacement,running_max,boundary_hit`.
    pub fn write_csv<W: Write>(summaries: &[PathSummary], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["env_id", "walk_id", "checkpoint_n", "displacement", "running_max", "boundary_hit"])?;
        for s in summaries {
            for i in 0..s.checkpoints.len() {
                w.write_record([
                    s.env_id.to_string(),
                    s.walk_id.to_string(),
                    s.checkpoints[i].to_string(),
                    s.displacement[i].to_string(),
                    s.running_max[i].to_string(),
                    s.boundary_hit.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<path csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub env_id: u64,
    pub walk_id: u64,
    pub center: usize,
    pub radius: usize,
    /// Exit step, or the cap when censored.
    pub tau: u64,
    pub censored: bool,
}

impl ExitRecord {
    pub fn write_csv<W: Write>(records: &[ExitRecord], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["env_id", "walk_id", "r", "tau", "censored"])?;
        for r in records {
            w.write_record([
                r.env_id.to_string(),
                r.walk_id.to_string(),
                r.radius.to_string(),
                r.tau.to_string(),
                r.censored.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<exit csv>", e))?;
        Ok(())
    }
}

/// Monte Carlo estimate of `P_x(max_{s <= t} d(X_0, X_s) <= r)` and its complement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfinementEstimate {
    pub radius: usize,
    pub horizon: u64,
    pub trials: u64,
    pub confined: u64,
    pub estimate: f64,
    /// Wilson 95% interval.
    pub interval: (f64, f64),
    pub escape: f64,
    pub escape_interval: (f64, f64),
}

impl ConfinementEstimate {
    fn from_counts(radius: usize, horizon: u64, trials: u64, confined: u64) -> Self {
        let interval = wilson_interval(confined, trials, 1.96);
        let estimate = confined as f64 / trials as f64;
        ConfinementEstimate {
            radius,
            horizon,
            trials,
            confined,
            estimate,
            interval,
            escape: 1.0 - estimate,
            escape_interval: (1.0 - interval.1, 1.0 - interval.0),
        }
    }
}

#[inline]
fn pick_uniform(bits: u64, k: usize) -> usize {
    ((bits as u128 * k as u128) >> 64) as usize
}

#[inline]
fn pick_weighted(u: f64, weights: &[f64], total: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if target < acc {
                return i;
            }
        }
    }
    last
}

/// One Markov chain step plus distance bookkeeping.
trait Chain: Sync {
    type State: Copy;
    fn initial(&self) -> Self::State;
    fn step(&self, state: &mut Self::State, rng: &mut WalkStream);
    /// Distance from the start in the walk metric.
    fn distance(&self, state: &Self::State) -> u32;
    /// Graph hop distance from the start, used against the truncation boundary.
    fn guard_distance(&self, state: &Self::State) -> u32;
    fn vertex(&self, state: &Self::State) -> usize;
}

struct LatticeChain<'a> {
    graph: &'a WeightedGraph,
    shape: LatticeShape,
    start: usize,
    start_digits: [usize; MAX_DIM],
    uniform: bool,
    /// Cluster-metric field when it differs from the l1 distance.
    field: Option<Vec<u32>>,
}

#[derive(Clone, Copy)]
struct LatticeState {
    index: usize,
    digits: [usize; MAX_DIM],
}

impl<'a> LatticeChain<'a> {
    #[inline]
    fn l1(&self, digits: &[usize; MAX_DIM]) -> u32 {
        (0..self.shape.dim)
            .map(|i| digits[i].abs_diff(self.start_digits[i]))
            .sum::<usize>() as u32
    }
}

impl<'a> Chain for LatticeChain<'a> {
    type State = LatticeState;

    fn initial(&self) -> LatticeState {
        LatticeState {
            index: self.start,
            digits: self.start_digits,
        }
    }

    #[inline]
    fn step(&self, state: &mut LatticeState, rng: &mut WalkStream) {
        let shape = &self.shape;
        let top = 2 * shape.half;
        // Move encoding: axis * 2 + (0 = down, 1 = up).
        let mut moves = [0u8; 2 * MAX_DIM];
        let mut weights = [0f64; 2 * MAX_DIM];
        let mut k = 0;
        let mut total = 0.0;
        for axis in 0..shape.dim {
            let digit = state.digits[axis];
            if digit > 0 {
                moves[k] = (axis * 2) as u8;
                if !self.uniform {
                    let mut lower = state.digits;
                    lower[axis] -= 1;
                    weights[k] = self.graph.conductance(shape.edge_id_pub(&lower, axis));
                    total += weights[k];
                }
                k += 1;
            }
            if digit < top {
                moves[k] = (axis * 2 + 1) as u8;
                if !self.uniform {
                    weights[k] = self.graph.conductance(shape.edge_id_pub(&state.digits, axis));
                    total += weights[k];
                }
                k += 1;
            }
        }
        let bits = rng.next_u64();
        let choice = if self.uniform {
            pick_uniform(bits, k)
        } else {
            pick_weighted(crate::rng::unit_f64(bits), &weights[..k], total)
        };
        let mv = moves[choice] as usize;
        let axis = mv / 2;
        let stride = shape.stride(axis);
        if mv % 2 == 1 {
            state.digits[axis] += 1;
            state.index += stride;
        } else {
            state.digits[axis] -= 1;
            state.index -= stride;
        }
    }

    #[inline]
    fn distance(&self, state: &LatticeState) -> u32 {
        match &self.field {
            Some(field) => field[state.index],
            None => self.l1(&state.digits),
        }
    }

    #[inline]
    fn guard_distance(&self, state: &LatticeState) -> u32 {
        self.l1(&state.digits)
    }

    fn vertex(&self, state: &LatticeState) -> usize {
        state.index
    }
}

struct TableChain<'a> {
    graph: &'a WeightedGraph,
    start: usize,
    field: Vec<u32>,
    guard: Option<Vec<u32>>,
}

impl<'a> Chain for TableChain<'a> {
    type State = usize;

    fn initial(&self) -> usize {
        self.start
    }

    #[inline]
    fn step(&self, state: &mut usize, rng: &mut WalkStream) {
        let mut targets = [0usize; 2 * MAX_DIM];
        let mut weights = [0f64; 2 * MAX_DIM];
        let mut k = 0;
        let mut total = 0.0;
        self.graph.for_each_neighbor(*state, |y, e| {
            if k < targets.len() {
                targets[k] = y;
                weights[k] = self.graph.conductance(e);
                total += weights[k];
                k += 1;
            }
        });
        let u = crate::rng::unit_f64(rng.next_u64());
        *state = targets[pick_weighted(u, &weights[..k], total)];
    }

    #[inline]
    fn distance(&self, state: &usize) -> u32 {
        self.field[*state]
    }

    #[inline]
    fn guard_distance(&self, state: &usize) -> u32 {
        match &self.guard {
            Some(g) => g[*state],
            None => self.field[*state],
        }
    }

    fn vertex(&self, state: &usize) -> usize {
        *state
    }
}

enum Engine<'a> {
    Lattice(LatticeChain<'a>),
    Table(TableChain<'a>),
}

/// Simulator bound to one environment and start vertex.
pub struct Walker<'a> {
    env: &'a Environment,
    start: usize,
    /// Trajectories reaching this graph distance from the start are flagged.
    safe_limit: u32,
    engine: Engine<'a>,
}

impl<'a> Walker<'a> {
    pub fn new(
        env: &'a Environment,
        cluster: &ClusterView,
        start: usize,
        metric: WalkMetric,
        boundary_margin: usize,
    ) -> Result<Self> {
        let graph = env.graph();
        graph.check_vertex(start)?;
        cluster.require(start)?;
        if graph.vertex_weight(start) <= 0.0 {
            return Err(Error::IsolatedVertex(start));
        }
        let safe_limit = match graph.boundary_distance(start) {
            None => u32::MAX,
            Some(b) if b <= boundary_margin => {
                return Err(Error::BoundaryContact {
                    what: "walk start",
                    center: start,
                    radius: boundary_margin,
                })
            }
            Some(b) => (b - boundary_margin) as u32,
        };
        let uniform = matches!(graph.conductances(), Conductances::Uniform(c) if *c > 0.0);
        let engine = match graph.topology() {
            Topology::Lattice(shape) => {
                let field = (metric == WalkMetric::Cluster && !uniform)
                    .then(|| graph.distance_field(start, true));
                Engine::Lattice(LatticeChain {
                    graph,
                    shape: *shape,
                    start,
                    start_digits: shape.digits(start),
                    uniform,
                    field,
                })
            }
            Topology::Explicit(_) => {
                let positive = metric == WalkMetric::Cluster && !uniform;
                let field = graph.distance_field(start, positive);
                let guard = positive.then(|| graph.distance_field(start, false));
                Engine::Table(TableChain {
                    graph,
                    start,
                    field,
                    guard,
                })
            }
        };
        Ok(Walker {
            env,
            start,
            safe_limit,
            engine,
        })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// Graph distance from the start at which trajectories are flagged.
    pub fn safe_limit(&self) -> u32 {
        self.safe_limit
    }

    /// Walk distance from the start to `v` (unreachable vertices report `u32::MAX`).
    pub fn distance_to(&self, v: usize) -> u32 {
        match &self.engine {
            Engine::Lattice(c) => match &c.field {
                Some(f) => f[v],
                None => c.l1(&c.shape.digits(v)),
            },
            Engine::Table(c) => c.field[v],
        }
    }

    pub fn simulate(&self, n_steps: u64, checkpoints: &[u64], key: WalkKey) -> PathSummary {
        match &self.engine {
            Engine::Lattice(c) => self.run_path(c, n_steps, checkpoints, key),
            Engine::Table(c) => self.run_path(c, n_steps, checkpoints, key),
        }
    }

    /// First step at which `d(center, X_n) > radius`, censored at `cap`.
    pub fn exit_time(&self, radius: usize, cap: u64, key: WalkKey) -> ExitRecord {
        let (tau, censored) = match &self.engine {
            Engine::Lattice(c) => run_exit(c, radius as u32, cap, key),
            Engine::Table(c) => run_exit(c, radius as u32, cap, key),
        };
        ExitRecord {
            env_id: key.env_id,
            walk_id: key.walk_id,
            center: self.start,
            radius,
            tau,
            censored,
        }
    }

    fn run_path<C: Chain>(&self, chain: &C, n_steps: u64, checkpoints: &[u64], key: WalkKey) -> PathSummary {
        let mut rng = key.stream();
        let mut state = chain.initial();
        let mut running_max = 0u32;
        let mut current = 0u32;
        let mut summary = PathSummary {
            env_id: key.env_id,
            walk_id: key.walk_id,
            checkpoints: Vec::with_capacity(checkpoints.len()),
            displacement: Vec::with_capacity(checkpoints.len()),
            running_max: Vec::with_capacity(checkpoints.len()),
            final_position: self.start,
            final_displacement: 0,
            final_running_max: 0,
            boundary_hit: false,
        };
        let mut next = checkpoints.iter().peekable();
        while next.peek() == Some(&&0) {
            summary.checkpoints.push(0);
            summary.displacement.push(0);
            summary.running_max.push(0);
            next.next();
        }
        for n in 1..=n_steps {
            chain.step(&mut state, &mut rng);
            if chain.guard_distance(&state) >= self.safe_limit {
                summary.boundary_hit = true;
                break;
            }
            current = chain.distance(&state);
            running_max = running_max.max(current);
            if next.peek() == Some(&&n) {
                summary.checkpoints.push(n);
                summary.displacement.push(current);
                summary.running_max.push(running_max);
                next.next();
            }
        }
        summary.final_position = chain.vertex(&state);
        summary.final_displacement = current;
        summary.final_running_max = running_max;
        summary
    }

    /// Independent trajectories for `walk_ids`, in the order given.
    pub fn ensemble(&self, n_steps: u64, checkpoints: &[u64], base: WalkKey, walk_ids: std::ops::Range<u64>) -> Vec<PathSummary> {
        walk_ids
            .into_par_iter()
            .map(|id| self.simulate(n_steps, checkpoints, base.with_walk(id)))
            .collect()
    }

    /// Confinement estimate from `trials` walks with ids `base.walk_id..base.walk_id + trials`.
    pub fn confinement(&self, radius: usize, horizon: u64, trials: u64, base: WalkKey) -> Result<ConfinementEstimate> {
        if trials == 0 {
            return Err(Error::param("trials", "must be at least 1"));
        }
        if horizon == 0 || radius as u64 >= horizon {
            return Ok(ConfinementEstimate::from_counts(radius, horizon, trials, trials));
        }
        let confined: u64 = (base.walk_id..base.walk_id + trials)
            .into_par_iter()
            .map(|id| {
                // tau > horizon iff the path stays within the ball up to the horizon.
                let record = self.exit_time(radius, horizon + 1, base.with_walk(id));
                u64::from(record.tau > horizon)
            })
            .sum();
        Ok(ConfinementEstimate::from_counts(radius, horizon, trials, confined))
    }

    pub fn environment(&self) -> &Environment {
        self.env
    }
}

fn run_exit<C: Chain>(chain: &C, radius: u32, cap: u64, key: WalkKey) -> (u64, bool) {
    let mut rng = key.stream();
    let mut state = chain.initial();
    for n in 1..=cap {
        chain.step(&mut state, &mut rng);
        if chain.distance(&state) > radius {
            return (n, false);
        }
    }
    (cap, true)
}

/// Builds a walker for `config` and runs one trajectory.
pub fn simulate_walk(env: &Environment, cluster: &ClusterView, config: &WalkConfig, key: WalkKey) -> Result<PathSummary> {
    let walker = Walker::new(env, cluster, config.start, config.metric, config.boundary_margin)?;
    let checkpoints = checkpoint_times(config.checkpoint_ratio, config.n_steps)?;
    Ok(walker.simulate(config.n_steps, &checkpoints, key))
}

/// Exit time from `B(center, r)`; requires `B(center, r + 1)` to avoid the truncation boundary.
pub fn exit_time(
    env: &Environment,
    cluster: &ClusterView,
    center: usize,
    radius: usize,
    cap: u64,
    key: WalkKey,
) -> Result<ExitRecord> {
    env.graph().require_interior("exit ball", center, radius + 1)?;
    let walker = Walker::new(env, cluster, center, WalkMetric::Graph, 0)?;
    Ok(walker.exit_time(radius, cap, key))
}

/// Exit records for `walks` independent walks from `center` at each radius.
pub fn exit_ensemble(
    env: &Environment,
    cluster: &ClusterView,
    center: usize,
    radii: &[usize],
    cap: u64,
    walks: u64,
    base: WalkKey,
) -> Result<Vec<ExitRecord>> {
    let max_r = radii.iter().copied().max().unwrap_or(0);
    env.graph().require_interior("exit ball", center, max_r + 1)?;
    let walker = Walker::new(env, cluster, center, WalkMetric::Graph, 0)?;
    let mut out = Vec::with_capacity(radii.len() * walks as usize);
    for &r in radii {
        let records: Vec<ExitRecord> = (0..walks)
            .into_par_iter()
            .map(|id| walker.exit_time(r, cap, base.with_walk(id)))
            .collect();
        out.extend(records);
    }
    Ok(out)
}

pub fn confinement_probability(
    env: &Environment,
    cluster: &ClusterView,
    x: usize,
    radius: usize,
    horizon: u64,
    trials: u64,
    base: WalkKey,
) -> Result<ConfinementEstimate> {
    env.graph().require_interior("confinement ball", x, radius + 1)?;
    let walker = Walker::new(env, cluster, x, WalkMetric::Graph, 0)?;
    walker.confinement(radius, horizon, trials, base)
}

/// Fraction of flagged paths.
pub fn discard_fraction(summaries: &[PathSummary]) -> f64 {
    if summaries.is_empty() {
        return 0.0;
    }
    summaries.iter().filter(|s| s.boundary_hit).count() as f64 / summaries.len() as f64
}

/// Unreachable marker re-exported for callers inspecting distance fields.
pub const NO_PATH: u32 = UNREACHABLE;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{extract_cluster, sample_environment, ConductanceModel};
    use crate::graph::{gasket_graph, lattice_box};
    use std::sync::Arc;

    fn constant(g: &WeightedGraph) -> Environment {
        sample_environment(g, ConductanceModel::Constant, 0, 0).unwrap()
    }

    fn with_values(g: &WeightedGraph, values: Vec<f64>) -> Environment {
        let g = g.with_conductances(Conductances::PerEdge(Arc::new(values))).unwrap();
        Environment::from_parts(g, ConductanceModel::Constant, 0, 0)
    }

    #[test]
    fn step_law_examples() {
        let g = lattice_box(1, 2).unwrap();
        let o = g.base_point();
        let env = with_values(&g, vec![1.0, 1.0, 3.0, 1.0]);
        // Origin sits between edges 1 (weight 1) and 2 (weight 3).
        let law = step_distribution(&env, o).unwrap();
        assert_eq!(law, vec![(o - 1, 0.25), (o + 1, 0.75)]);

        let g2 = lattice_box(2, 2).unwrap();
        let law = step_distribution(&constant(&g2), g2.base_point()).unwrap();
        assert_eq!(law.len(), 4);
        assert!(law.iter().all(|&(_, p)| p == 0.25));

        let g3 = lattice_box(1, 3).unwrap();
        let o3 = g3.base_point();
        let mut values = vec![1.0; g3.edge_count()];
        values[o3 - 1] = 2.0;
        values[o3] = 2.0;
        let law = step_distribution(&with_values(&g3, values.clone()), o3).unwrap();
        assert_eq!(law, vec![(o3 - 1, 0.5), (o3 + 1, 0.5)]);
        values[o3] = 0.0;
        let law = step_distribution(&with_values(&g3, values), o3).unwrap();
        assert_eq!(law, vec![(o3 - 1, 1.0)]);

        let dead = with_values(&g3, vec![0.0; g3.edge_count()]);
        assert!(matches!(step_distribution(&dead, o3), Err(Error::IsolatedVertex(_))));
    }

    #[test]
    fn gasket_step_law_sums_to_one() {
        let g = gasket_graph(3).unwrap();
        let env = sample_environment(&g, ConductanceModel::UniformElliptic { low: 0.5, high: 2.0 }, 3, 1).unwrap();
        for v in 0..g.vertex_count() {
            let total: f64 = step_distribution(&env, v).unwrap().iter().map(|p| p.1).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoints_are_deduplicated() {
        assert_eq!(checkpoint_times(1.5, 10).unwrap(), vec![1, 2, 3, 5, 7]);
        assert_eq!(checkpoint_times(2.0, 8).unwrap(), vec![1, 2, 4, 8]);
        assert!(checkpoint_times(2.0, 0).unwrap().is_empty());
        assert!(checkpoint_times(1.0, 10).is_err());
    }

    #[test]
    fn zero_steps_and_first_step() {
        let g = lattice_box(1, 1).unwrap().into_closed();
        let env = constant(&g);
        let cluster = extract_cluster(&env);
        let mut config = WalkConfig::new(g.base_point(), 0);
        let s = simulate_walk(&env, &cluster, &config, WalkKey::new(0, 0, 0)).unwrap();
        assert_eq!((s.final_displacement, s.final_running_max), (0, 0));
        assert_eq!(s.final_position, g.base_point());
        config.n_steps = 1;
        for id in 0..50 {
            let s = simulate_walk(&env, &cluster, &config, WalkKey::new(0, 0, id)).unwrap();
            assert_eq!(s.running_max, vec![1]);
        }
    }

    #[test]
    fn walk_start_errors() {
        let g = lattice_box(2, 4).unwrap();
        let env = sample_environment(&g, ConductanceModel::Bernoulli { p: 0.0 }, 0, 0).unwrap();
        let cluster = extract_cluster(&env);
        let other = g.neighbors(g.base_point())[0].0;
        assert!(matches!(
            Walker::new(&env, &cluster, other, WalkMetric::Graph, 0),
            Err(Error::NotInCluster(_))
        ));
        assert!(matches!(
            Walker::new(&env, &cluster, g.base_point(), WalkMetric::Graph, 0),
            Err(Error::IsolatedVertex(_))
        ));
        let env = constant(&g);
        let cluster = extract_cluster(&env);
        assert!(matches!(
            Walker::new(&env, &cluster, g.base_point(), WalkMetric::Graph, 4),
            Err(Error::BoundaryContact { .. })
        ));
    }

    #[test]
    fn boundary_hits_are_flagged() {
        let g = lattice_box(1, 3).unwrap();
        let env = constant(&g);
        let cluster = extract_cluster(&env);
        let walker = Walker::new(&env, &cluster, g.base_point(), WalkMetric::Graph, 0).unwrap();
        let cps = checkpoint_times(1.5, 400).unwrap();
        let s = walker.simulate(400, &cps, WalkKey::new(1, 0, 0));
        assert!(s.boundary_hit);
        assert!(s.checkpoints.len() < cps.len());
    }

    #[test]
    fn exit_examples() {
        let g = lattice_box(1, 4).unwrap();
        let env = constant(&g);
        let cluster = extract_cluster(&env);
        let o = g.base_point();
        let r0 = exit_time(&env, &cluster, o, 0, 10, WalkKey::new(0, 0, 0)).unwrap();
        assert_eq!((r0.tau, r0.censored), (1, false));
        let capped = exit_time(&env, &cluster, o, 1, 1, WalkKey::new(0, 0, 0)).unwrap();
        assert!(capped.censored);
        assert!(matches!(
            exit_time(&env, &cluster, o, 3, 10, WalkKey::new(0, 0, 0)),
            Err(Error::BoundaryContact { .. })
        ));
    }

    #[test]
    fn trivial_confinement() {
        let g = lattice_box(2, 8).unwrap();
        let env = constant(&g);
        let cluster = extract_cluster(&env);
        let o = g.base_point();
        let key = WalkKey::new(0, 0, 0);
        assert_eq!(confinement_probability(&env, &cluster, o, 2, 0, 10, key).unwrap().estimate, 1.0);
        assert_eq!(confinement_probability(&env, &cluster, o, 5, 5, 10, key).unwrap().estimate, 1.0);
        assert!(confinement_probability(&env, &cluster, o, 2, 5, 0, key).is_err());
    }

    #[test]
    fn cluster_metric_matches_bfs_field() {
        let g = lattice_box(2, 12).unwrap();
        let env = sample_environment(&g, ConductanceModel::Bernoulli { p: 0.7 }, 5, 2).unwrap();
        let cluster = extract_cluster(&env);
        let o = g.base_point();
        if step_distribution(&env, o).is_err() {
            return;
        }
        let walker = Walker::new(&env, &cluster, o, WalkMetric::Cluster, 0).unwrap();
        let field = g.distance_field(o, false);
        let chem = env.graph().distance_field(o, true);
        for v in 0..g.vertex_count() {
            assert_eq!(walker.distance_to(v), chem[v]);
            if chem[v] != UNREACHABLE {
                assert!(chem[v] >= field[v]);
            }
        }
        let graph_walker = Walker::new(&env, &cluster, o, WalkMetric::Graph, 0).unwrap();
        for v in 0..g.vertex_count() {
            assert_eq!(graph_walker.distance_to(v), field[v]);
        }
    }
}
