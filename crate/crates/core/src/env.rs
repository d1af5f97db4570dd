//! Random conductance environments, the base-point cluster, and the
//! volume-regularity scale `N_hat`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Conductances, GraphSpec, WeightedGraph};
use crate::rng::EdgeStream;

const SAMPLE_CHUNK: usize = 1 << 14;

/// Law of a single edge conductance; edges are i.i.d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ConductanceModel {
    /// Edge open (conductance 1) with probability `p`, closed (0) otherwise.
    /// Supercriticality (`p > p_c`, 1/2 on Z^2) is the caller's business.
    Bernoulli { p: f64 },
    /// Conductance uniform on `[low, high]`.
    UniformElliptic { low: f64, high: f64 },
    Constant,
}

impl ConductanceModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ConductanceModel::Bernoulli { p } if !(0.0..=1.0).contains(&p) => {
                Err(Error::param("p", format!("must lie in [0, 1], got {p}")))
            }
            ConductanceModel::UniformElliptic { low, high }
                if !(low > 0.0 && low <= high && high.is_finite()) =>
            {
                Err(Error::param(
                    "c_low",
                    format!("need 0 < c_low <= c_high < inf, got [{low}, {high}]"),
                ))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    fn draw(&self, u: f64) -> f64 {
        match *self {
            ConductanceModel::Bernoulli { p } => {
                if u < p {
                    1.0
                } else {
                    0.0
                }
            }
            ConductanceModel::UniformElliptic { low, high } => low + (high - low) * u,
            ConductanceModel::Constant => 1.0,
        }
    }
}

/// A graph whose conductances were drawn from a model under a seed key.
#[derive(Debug, Clone)]
pub struct Environment {
    graph: WeightedGraph,
    model: ConductanceModel,
    master_seed: u64,
    env_id: u64,
}

/// Draws every edge conductance from the stream keyed by `(master_seed, env_id, edge_id)`.
pub fn sample_environment(
    graph: &WeightedGraph,
    model: ConductanceModel,
    master_seed: u64,
    env_id: u64,
) -> Result<Environment> {
    model.validate()?;
    let conductance = match model {
        ConductanceModel::Constant => Conductances::Uniform(1.0),
        _ => {
            let mut values = vec![0.0; graph.edge_count()];
            values
                .par_chunks_mut(SAMPLE_CHUNK)
                .enumerate()
                .for_each(|(chunk, slot)| {
                    let mut stream = EdgeStream::new(master_seed, env_id);
                    stream.fill(chunk * SAMPLE_CHUNK, slot);
                    for value in slot.iter_mut() {
                        *value = model.draw(*value);
                    }
                });
            Conductances::PerEdge(Arc::new(values))
        }
    };
    Ok(Environment {
        graph: graph.with_conductances(conductance)?,
        model,
        master_seed,
        env_id,
    })
}

impl Environment {
    /// Wraps a graph whose conductances came from elsewhere (e.g. an imported CSV).
    pub fn from_parts(graph: WeightedGraph, model: ConductanceModel, master_seed: u64, env_id: u64) -> Self {
        Environment {
            graph,
            model,
            master_seed,
            env_id,
        }
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn model(&self) -> ConductanceModel {
        self.model
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn env_id(&self) -> u64 {
        self.env_id
    }

    pub fn sidecar(&self, graph: GraphSpec) -> EnvironmentSidecar {
        EnvironmentSidecar {
            graph,
            model: self.model,
            master_seed: self.master_seed,
            env_id: self.env_id,
        }
    }
}

/// JSON sidecar sufficient to regenerate an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSidecar {
    pub graph: GraphSpec,
    #[serde(flatten)]
    pub model: ConductanceModel,
    pub master_seed: u64,
    pub env_id: u64,
}

impl EnvironmentSidecar {
    pub fn regenerate(&self) -> Result<Environment> {
        sample_environment(&self.graph.build()?, self.model, self.master_seed, self.env_id)
    }
}

/// Vertices joined to the base point by positive-conductance paths.
#[derive(Debug, Clone)]
pub struct ClusterView {
    member: Vec<bool>,
    size: usize,
    base: usize,
}

pub fn extract_cluster(env: &Environment) -> ClusterView {
    let graph = env.graph();
    let member = graph.positive_component(graph.base_point());
    let size = member.iter().filter(|&&m| m).count();
    ClusterView {
        member,
        size,
        base: graph.base_point(),
    }
}

impl ClusterView {
    #[inline]
    pub fn contains(&self, v: usize) -> bool {
        self.member.get(v).copied().unwrap_or(false)
    }

    pub fn membership(&self) -> &[bool] {
        &self.member
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn base_point(&self) -> usize {
        self.base
    }

    /// Always true: the base point reaches itself by the empty path.
    pub fn contains_base(&self) -> bool {
        true
    }

    pub fn density(&self) -> f64 {
        self.size as f64 / self.member.len() as f64
    }

    pub fn require(&self, v: usize) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::NotInCluster(v))
        }
    }
}

/// Sandwich constants for `c_low r^alpha <= V(x, r) <= c_high r^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeConstants {
    pub c_low: f64,
    pub c_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityEstimate {
    pub x: usize,
    /// Carried for bookkeeping; the volume criterion does not use it.
    pub epsilon: f64,
    /// `None` when no `r0 <= r_max` works.
    pub n_hat: Option<usize>,
    pub constants_used: VolumeConstants,
    pub r_max: usize,
}

/// Smallest `r0 >= 1` such that the volume sandwich holds on every integer
/// `r` in `[r0, r_max]`, with `alpha` taken from the graph's catalog.
pub fn estimate_regularity_scale(
    env: &Environment,
    cluster: &ClusterView,
    x: usize,
    constants: VolumeConstants,
    r_max: usize,
    epsilon: f64,
) -> Result<RegularityEstimate> {
    let graph = env.graph();
    graph.check_vertex(x)?;
    cluster.require(x)?;
    if r_max < 1 {
        return Err(Error::param("r_max", "must be at least 1"));
    }
    graph.require_interior("regularity ball", x, r_max)?;
    let alpha = graph.catalog_exponents().alpha;
    let profile = graph.volume_profile(x, r_max, cluster.membership());
    let holds = |r: usize| {
        let scale = (r as f64).powf(alpha);
        constants.c_low * scale <= profile[r] && profile[r] <= constants.c_high * scale
    };
    let mut r0 = r_max + 1;
    while r0 > 1 && holds(r0 - 1) {
        r0 -= 1;
    }
    Ok(RegularityEstimate {
        x,
        epsilon,
        n_hat: (r0 <= r_max).then_some(r0),
        constants_used: constants,
        r_max,
    })
}

/// Empirical survival function `n -> P(N_hat >= n)` at the base point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityTail {
    /// `(n, fraction of environments with N_hat >= n)` for `n = 1..=r_max + 1`.
    pub survival: Vec<(usize, f64)>,
    /// Per-seed estimates, in input order.
    pub n_hats: Vec<Option<usize>>,
    /// Seeds whose estimate was not found; they count as exceeding every `n`.
    pub not_found: Vec<u64>,
}

/// Runs [`estimate_regularity_scale`] at the base point of one environment per seed
/// (the seed is the master seed, `env_id = 0`).
pub fn regularity_tail(
    graph: &WeightedGraph,
    model: ConductanceModel,
    constants: VolumeConstants,
    r_max: usize,
    seeds: &[u64],
) -> Result<RegularityTail> {
    if seeds.len() < 10 {
        return Err(Error::Insufficient(format!(
            "regularity tail needs at least 10 seeds, got {}",
            seeds.len()
        )));
    }
    let n_hats = seeds
        .par_iter()
        .map(|&seed| {
            let env = sample_environment(graph, model, seed, 0)?;
            let cluster = extract_cluster(&env);
            estimate_regularity_scale(&env, &cluster, graph.base_point(), constants, r_max, 0.0)
                .map(|est| est.n_hat)
        })
        .collect::<Result<Vec<_>>>()?;

    let total = n_hats.len() as f64;
    let survival = (1..=r_max + 1)
        .map(|n| {
            let exceeding = n_hats.iter().filter(|h| h.is_none_or(|h| h >= n)).count();
            (n, exceeding as f64 / total)
        })
        .collect();
    let not_found = seeds
        .iter()
        .zip(&n_hats)
        .filter(|(_, n)| n.is_none())
        .map(|(&s, _)| s)
        .collect();
    Ok(RegularityTail {
        survival,
        n_hats,
        not_found,
    })
}
