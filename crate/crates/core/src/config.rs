//! Flat `key = value` experiment configuration.
//!
//! ```text
//! schema_version = 1
//! graph.kind = lattice        # lattice | gasket
//! graph.dim = 2
//! graph.half_width = 256
//! model.kind = bernoulli      # constant | bernoulli | uniform-elliptic
//! model.p = 0.9
//! seed = 7
//! environments = 10
//! walk.n_walks = 200
//! walk.n_steps = 100000
//! walk.starts = base, @8:0
//! stages = env, walk, lil
//! ```
//!
//! Blank lines and `#` comments are ignored; unknown or repeated keys are errors.
//! Every key has a default except `schema_version`, `graph.kind` and the graph
//! size keys. [`ExperimentConfig::canonical_text`] prints all keys in a fixed
//! order and is what gets hashed into the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{ConductanceModel, VolumeConstants};
use crate::error::{Error, Result};
use crate::graph::{Exponents, GraphSpec, WeightedGraph, DEFAULT_VERTEX_BUDGET};
use crate::kernel::{RowRetention, DEFAULT_KERNEL_BUDGET};
use crate::lil::{LilOptions, ScalingParams};
use crate::walk::{WalkMetric, DEFAULT_CHECKPOINT_RATIO};

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance when comparing configured exponents against the catalog.
const EXPONENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Env,
    Walk,
    Lil,
    Hk,
    Exit,
    Corollary,
    Regularity,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Env,
        Stage::Walk,
        Stage::Lil,
        Stage::Hk,
        Stage::Exit,
        Stage::Corollary,
        Stage::Regularity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Env => "env",
            Stage::Walk => "walk",
            Stage::Lil => "lil",
            Stage::Hk => "hk",
            Stage::Exit => "exit",
            Stage::Corollary => "corollary",
            Stage::Regularity => "regularity",
        }
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|stage| stage.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// A vertex named relative to the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartSpec {
    /// The base point shifted by a vertex-index offset.
    Base(i64),
    Vertex(usize),
    /// Lattice offsets from the base point, or gasket coordinates.
    Coords(Vec<i64>),
}

impl StartSpec {
    pub fn resolve(&self, graph: &WeightedGraph) -> Result<usize> {
        match self {
            StartSpec::Base(offset) => {
                let v = graph.base_point() as i64 + offset;
                if v < 0 || v as usize >= graph.vertex_count() {
                    return Err(Error::param("start", format!("base{offset:+} is outside the graph")));
                }
                Ok(v as usize)
            }
            StartSpec::Vertex(v) => {
                graph.check_vertex(*v)?;
                Ok(*v)
            }
            StartSpec::Coords(c) => {
                let coords: Vec<i64> = match graph.model_tag() {
                    crate::graph::ModelTag::LatticeBox => {
                        let base = graph.coordinates(graph.base_point());
                        if c.len() != base.len() {
                            return Err(Error::param("start", format!("expected {} coordinates", base.len())));
                        }
                        base.iter().zip(c).map(|(b, o)| b + o).collect()
                    }
                    crate::graph::ModelTag::GasketLevel => c.clone(),
                };
                graph
                    .vertex_at(&coords)
                    .ok_or_else(|| Error::param("start", format!("no vertex at {c:?}")))
            }
        }
    }
}

impl std::fmt::Display for StartSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StartSpec::Base(0) => write!(f, "base"),
            StartSpec::Base(o) => write!(f, "base{o:+}"),
            StartSpec::Vertex(v) => write!(f, "{v}"),
            StartSpec::Coords(c) => {
                let parts: Vec<String> = c.iter().map(|x| x.to_string()).collect();
                write!(f, "@{}", parts.join(":"))
            }
        }
    }
}

impl FromStr for StartSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "base" {
            return Ok(StartSpec::Base(0));
        }
        if let Some(rest) = s.strip_prefix("base") {
            return rest
                .parse::<i64>()
                .map(StartSpec::Base)
                .map_err(|_| format!("bad start offset `{s}`"));
        }
        if let Some(rest) = s.strip_prefix('@') {
            return rest
                .split(':')
                .map(|x| x.trim().parse::<i64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(StartSpec::Coords)
                .map_err(|_| format!("bad coordinates `{s}`"));
        }
        s.parse::<usize>()
            .map(StartSpec::Vertex)
            .map_err(|_| format!("bad start `{s}` (use base, base+K, @x:y or a vertex index)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkSpec {
    pub n_walks: u64,
    pub n_steps: u64,
    pub checkpoint_ratio: f64,
    pub starts: Vec<StartSpec>,
    pub metric: WalkMetric,
    pub boundary_margin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub start: StartSpec,
    pub horizon: usize,
    pub retention: RowRetention,
    pub n_hat: usize,
    pub fit: bool,
    pub diag_min: usize,
    pub diag_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitSpec {
    pub start: StartSpec,
    pub radii: Vec<usize>,
    pub walks: u64,
    pub cap: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollarySpec {
    pub k_min: usize,
    pub k_max: usize,
    pub trials: u64,
    pub max_horizon: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularitySpec {
    pub r_max: usize,
    pub constants: VolumeConstants,
    pub seeds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub model: ConductanceModel,
    pub params: ScalingParams,
    pub override_exponents: bool,
    pub seed: u64,
    /// Environment ids are `first_env .. first_env + environments`.
    pub first_env: u64,
    pub environments: u64,
    pub walk: WalkSpec,
    pub lil: LilOptions,
    pub hk: KernelSpec,
    pub exit: ExitSpec,
    pub corollary: CorollarySpec,
    pub regularity: RegularitySpec,
    pub stages: Vec<Stage>,
    pub vertex_budget: usize,
    pub kernel_budget: u128,
    /// Not part of the canonical text.
    pub out: Option<String>,
    /// Not part of the canonical text.
    pub jobs: usize,
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigSyntax {
                line: line_no,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::ConfigSyntax {
                    line: line_no,
                    reason: "empty key".into(),
                });
            }
            if let Some((first, _)) = map.insert(key.clone(), (line_no, value.trim().to_string())) {
                return Err(Error::ConfigSyntax {
                    line: line_no,
                    reason: format!("`{key}` already set on line {first}"),
                });
            }
        }
        Ok(Entries { map })
    }

    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((line, value)) => value.parse::<T>().map(Some).map_err(|e| Error::ConfigSyntax {
                line,
                reason: format!("`{key}`: cannot parse `{value}`: {e}"),
            }),
        }
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| Error::param(key, "is required"))
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((line, value)) => value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<T>().map_err(|e| Error::ConfigSyntax {
                        line,
                        reason: format!("`{key}`: cannot parse `{s}`: {e}"),
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.into_iter().min_by_key(|(_, (line, _))| *line) {
            None => Ok(()),
            Some((key, (line, _))) => Err(Error::ConfigSyntax {
                line,
                reason: format!("unknown key `{key}`"),
            }),
        }
    }
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got `{s}`")),
    }
}

impl ExperimentConfig {
    /// Parses and validates config text.
    pub fn parse(text: &str) -> Result<Self> {
        let config = Self::parse_unvalidated(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Parses config text without the semantic checks of [`Self::validate`],
    /// so command-line overrides can be applied first.
    pub fn parse_unvalidated(text: &str) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let version: u32 = e.required("schema_version")?;
        if version != SCHEMA_VERSION {
            return Err(Error::param(
                "schema_version",
                format!("unsupported version {version}, expected {SCHEMA_VERSION}"),
            ));
        }

        let kind: String = e.required("graph.kind")?;
        let graph = match kind.as_str() {
            "lattice" => GraphSpec::Lattice {
                dim: e.required("graph.dim")?,
                half_width: e.required("graph.half_width")?,
            },
            "gasket" => GraphSpec::Gasket {
                level: e.required("graph.level")?,
            },
            other => return Err(Error::param("graph.kind", format!("unknown graph `{other}`"))),
        };

        let model_kind: String = e.or("model.kind", "constant".to_string())?;
        let model = match model_kind.as_str() {
            "constant" => ConductanceModel::Constant,
            "bernoulli" => ConductanceModel::Bernoulli {
                p: e.required("model.p")?,
            },
            "uniform-elliptic" => ConductanceModel::UniformElliptic {
                low: e.required("model.low")?,
                high: e.required("model.high")?,
            },
            other => return Err(Error::param("model.kind", format!("unknown model `{other}`"))),
        };

        let catalog = graph.exponents();
        let params = ScalingParams {
            alpha: e.or("params.alpha", catalog.alpha)?,
            beta: e.or("params.beta", catalog.beta)?,
            epsilon: e.or("params.epsilon", 0.1)?,
            c5: e.or("params.c5", 1.0)?,
            c6: e.or("params.c6", 1.0)?,
        };
        let override_exponents = e
            .raw("override_exponents")
            .map(|(line, v)| parse_bool(&v).map_err(|reason| Error::ConfigSyntax { line, reason }))
            .transpose()?
            .unwrap_or(false);

        let n_steps: u64 = e.or("walk.n_steps", 10_000)?;
        let walk = WalkSpec {
            n_walks: e.or("walk.n_walks", 100)?,
            n_steps,
            checkpoint_ratio: e.or("walk.checkpoint_ratio", DEFAULT_CHECKPOINT_RATIO)?,
            starts: e.list("walk.starts")?.unwrap_or_else(|| vec![StartSpec::Base(0)]),
            metric: match e.or("walk.metric", "graph".to_string())?.as_str() {
                "graph" => WalkMetric::Graph,
                "cluster" => WalkMetric::Cluster,
                other => return Err(Error::param("walk.metric", format!("unknown metric `{other}`"))),
            },
            boundary_margin: e.or("walk.boundary_margin", 0)?,
        };
        let default_lil = LilOptions::last_decade(n_steps);
        let lil = LilOptions {
            n_tail: e.or("lil.n_tail", default_lil.n_tail)?,
            diffusive_ceiling: e.or("lil.diffusive_ceiling", default_lil.diffusive_ceiling)?,
        };

        let horizon: usize = e.or("hk.horizon", 64)?;
        let hk = KernelSpec {
            start: e.or("hk.start", StartSpec::Base(0))?,
            horizon,
            retention: match e.or("hk.retention", "all".to_string())?.as_str() {
                "all" => RowRetention::All,
                "diagonal" => RowRetention::DiagonalOnly,
                other => return Err(Error::param("hk.retention", format!("unknown retention `{other}`"))),
            },
            n_hat: e.or("hk.n_hat", 1)?,
            fit: e
                .raw("hk.fit")
                .map(|(line, v)| parse_bool(&v).map_err(|reason| Error::ConfigSyntax { line, reason }))
                .transpose()?
                .unwrap_or(true),
            diag_min: e.or("hk.diag_min", (horizon / 8).max(2))?,
            diag_max: e.or("hk.diag_max", horizon.saturating_sub(1))?,
        };

        let exit = ExitSpec {
            start: e.or("exit.start", StartSpec::Base(0))?,
            radii: e.list("exit.radii")?.unwrap_or_else(|| vec![8, 16, 32]),
            walks: e.or("exit.walks", 1000)?,
            cap: e.or("exit.cap", 10_000_000)?,
        };
        let corollary = CorollarySpec {
            k_min: e.or("corollary.k_min", 1)?,
            k_max: e.or("corollary.k_max", 2)?,
            trials: e.or("corollary.trials", 1000)?,
            max_horizon: e.or("corollary.max_horizon", 100_000_000)?,
        };
        let regularity = RegularitySpec {
            r_max: e.or("regularity.r_max", 32)?,
            constants: VolumeConstants {
                c_low: e.or("regularity.c_low", 2.0)?,
                c_high: e.or("regularity.c_high", 12.0)?,
            },
            seeds: e.or("regularity.seeds", 20)?,
        };

        let mut stages: Vec<Stage> = e
            .list("stages")?
            .unwrap_or_else(|| vec![Stage::Env, Stage::Walk, Stage::Lil]);
        stages.sort();
        stages.dedup();

        let config = ExperimentConfig {
            graph,
            model,
            params,
            override_exponents,
            seed: e.or("seed", 0)?,
            first_env: e.or("first_env", 0)?,
            environments: e.or("environments", 1)?,
            walk,
            lil,
            hk,
            exit,
            corollary,
            regularity,
            stages,
            vertex_budget: e.or("budget.vertices", DEFAULT_VERTEX_BUDGET)?,
            kernel_budget: e.or("budget.kernel", DEFAULT_KERNEL_BUDGET)?,
            out: e.get("out")?,
            jobs: e.or("jobs", 1)?,
        };
        e.finish()?;
        Ok(config)
    }

    pub fn catalog(&self) -> Exponents {
        self.graph.exponents()
    }

    pub fn exponents(&self) -> Exponents {
        Exponents {
            alpha: self.params.alpha,
            beta: self.params.beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.model {
            ConductanceModel::Bernoulli { p } if !(0.0..=1.0).contains(&p) => {
                return Err(Error::param("model.p", format!("must lie in [0, 1], got {p}")));
            }
            ConductanceModel::UniformElliptic { low, high } if !(low > 0.0 && low <= high && high.is_finite()) => {
                return Err(Error::param(
                    "model.low",
                    format!("need 0 < model.low <= model.high < inf, got [{low}, {high}]"),
                ));
            }
            _ => {}
        }
        let catalog = self.catalog();
        if !self.override_exponents {
            for (field, configured, pinned) in [
                ("params.alpha", self.params.alpha, catalog.alpha),
                ("params.beta", self.params.beta, catalog.beta),
            ] {
                if (configured - pinned).abs() > EXPONENT_TOLERANCE {
                    return Err(Error::param(
                        field,
                        format!("{configured} differs from the catalog value {pinned}; set override_exponents = true to use it"),
                    ));
                }
            }
        }
        self.params.validate().map_err(|e| prefix_field(e, "params."))?;
        if self.environments == 0 {
            return Err(Error::param("environments", "must be at least 1"));
        }
        if self.walk.n_walks == 0 {
            return Err(Error::param("walk.n_walks", "must be at least 1"));
        }
        if !(self.walk.checkpoint_ratio > 1.0 && self.walk.checkpoint_ratio.is_finite()) {
            return Err(Error::param("walk.checkpoint_ratio", "must exceed 1"));
        }
        if self.walk.starts.is_empty() {
            return Err(Error::param("walk.starts", "needs at least one start"));
        }
        if self.stages.contains(&Stage::Lil) && !(self.lil.n_tail >= 3 && self.lil.n_tail <= self.walk.n_steps) {
            return Err(Error::param("lil.n_tail", "must lie in [3, walk.n_steps]"));
        }
        if self.hk.horizon == 0 {
            return Err(Error::param("hk.horizon", "must be at least 1"));
        }
        if self.exit.radii.is_empty() || self.exit.walks == 0 || self.exit.cap == 0 {
            return Err(Error::param("exit.radii", "need radii, walks and cap all nonzero"));
        }
        if self.corollary.k_min < 1 || self.corollary.k_min > self.corollary.k_max {
            return Err(Error::param("corollary.k_min", "need 1 <= k_min <= k_max"));
        }
        if self.corollary.trials == 0 {
            return Err(Error::param("corollary.trials", "must be at least 1"));
        }
        if self.jobs == 0 {
            return Err(Error::param("jobs", "must be at least 1"));
        }
        Ok(())
    }

    /// All experiment keys in a fixed order, with defaults filled in.
    /// Excludes `out` and `jobs`, which do not change any statistic.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("schema_version", SCHEMA_VERSION.to_string());
        match self.graph {
            GraphSpec::Lattice { dim, half_width } => {
                kv("graph.kind", "lattice".into());
                kv("graph.dim", dim.to_string());
                kv("graph.half_width", half_width.to_string());
            }
            GraphSpec::Gasket { level } => {
                kv("graph.kind", "gasket".into());
                kv("graph.level", level.to_string());
            }
        }
        match self.model {
            ConductanceModel::Constant => kv("model.kind", "constant".into()),
            ConductanceModel::Bernoulli { p } => {
                kv("model.kind", "bernoulli".into());
                kv("model.p", format!("{p:?}"));
            }
            ConductanceModel::UniformElliptic { low, high } => {
                kv("model.kind", "uniform-elliptic".into());
                kv("model.low", format!("{low:?}"));
                kv("model.high", format!("{high:?}"));
            }
        }
        kv("params.alpha", format!("{:?}", self.params.alpha));
        kv("params.beta", format!("{:?}", self.params.beta));
        kv("params.epsilon", format!("{:?}", self.params.epsilon));
        kv("params.c5", format!("{:?}", self.params.c5));
        kv("params.c6", format!("{:?}", self.params.c6));
        kv("override_exponents", self.override_exponents.to_string());
        kv("seed", self.seed.to_string());
        kv("first_env", self.first_env.to_string());
        kv("environments", self.environments.to_string());
        kv("walk.n_walks", self.walk.n_walks.to_string());
        kv("walk.n_steps", self.walk.n_steps.to_string());
        kv("walk.checkpoint_ratio", format!("{:?}", self.walk.checkpoint_ratio));
        kv("walk.starts", join(&self.walk.starts));
        kv(
            "walk.metric",
            match self.walk.metric {
                WalkMetric::Graph => "graph",
                WalkMetric::Cluster => "cluster",
            }
            .into(),
        );
        kv("walk.boundary_margin", self.walk.boundary_margin.to_string());
        kv("lil.n_tail", self.lil.n_tail.to_string());
        kv("lil.diffusive_ceiling", format!("{:?}", self.lil.diffusive_ceiling));
        kv("hk.start", self.hk.start.to_string());
        kv("hk.horizon", self.hk.horizon.to_string());
        kv(
            "hk.retention",
            match self.hk.retention {
                RowRetention::All => "all",
                RowRetention::DiagonalOnly => "diagonal",
            }
            .into(),
        );
        kv("hk.n_hat", self.hk.n_hat.to_string());
        kv("hk.fit", self.hk.fit.to_string());
        kv("hk.diag_min", self.hk.diag_min.to_string());
        kv("hk.diag_max", self.hk.diag_max.to_string());
        kv("exit.start", self.exit.start.to_string());
        kv("exit.radii", join(&self.exit.radii));
        kv("exit.walks", self.exit.walks.to_string());
        kv("exit.cap", self.exit.cap.to_string());
        kv("corollary.k_min", self.corollary.k_min.to_string());
        kv("corollary.k_max", self.corollary.k_max.to_string());
        kv("corollary.trials", self.corollary.trials.to_string());
        kv("corollary.max_horizon", self.corollary.max_horizon.to_string());
        kv("regularity.r_max", self.regularity.r_max.to_string());
        kv("regularity.c_low", format!("{:?}", self.regularity.constants.c_low));
        kv("regularity.c_high", format!("{:?}", self.regularity.constants.c_high));
        kv("regularity.seeds", self.regularity.seeds.to_string());
        kv("stages", join(&self.stages.iter().map(|s| s.as_str()).collect::<Vec<_>>()));
        kv("budget.vertices", self.vertex_budget.to_string());
        kv("budget.kernel", self.kernel_budget.to_string());
        s
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn prefix_field(e: Error, prefix: &str) -> Error {
    match e {
        Error::InvalidParameter { field, reason } => Error::InvalidParameter {
            field: format!("{prefix}{field}"),
            reason,
        },
        other => other,
    }
}
