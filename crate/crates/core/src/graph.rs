//! Finite graphs that host the environments: boxes of Z^d and levels of the
//! pre-Sierpinski gasket, with hop distance, balls and volumes.
//!
//! Lattice boxes keep their topology implicit (neighbors are computed from the
//! vertex index) so that boxes with tens of millions of vertices stay cheap.
//! Gasket levels store an explicit adjacency list.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::linear_fit;

/// Default cap on the number of vertices a single graph may hold.
pub const DEFAULT_VERTEX_BUDGET: usize = 1 << 27;

/// Largest lattice dimension supported.
pub const MAX_DIM: usize = 4;

/// Marker used by distance fields for unreachable vertices.
pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelTag {
    LatticeBox,
    GasketLevel,
}

/// Volume-growth and walk-dimension exponents of a graph family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub alpha: f64,
    pub beta: f64,
}

impl Exponents {
    pub fn lattice(dim: usize) -> Self {
        Exponents {
            alpha: dim as f64,
            beta: 2.0,
        }
    }

    pub fn gasket() -> Self {
        Exponents {
            alpha: 3f64.ln() / 2f64.ln(),
            beta: 5f64.ln() / 2f64.ln(),
        }
    }

    /// On-diagonal heat kernel decay exponent `alpha / beta`.
    pub fn spectral_ratio(&self) -> f64 {
        self.alpha / self.beta
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LatticeShape {
    pub dim: usize,
    pub half: usize,
    pub side: usize,
    strides: [usize; MAX_DIM],
    edge_strides: [[usize; MAX_DIM]; MAX_DIM],
    per_axis_edges: usize,
}

impl LatticeShape {
    fn new(dim: usize, half: usize) -> Self {
        let side = 2 * half + 1;
        let mut strides = [0usize; MAX_DIM];
        let mut acc = 1usize;
        for i in (0..dim).rev() {
            strides[i] = acc;
            acc *= side;
        }
        let mut edge_strides = [[0usize; MAX_DIM]; MAX_DIM];
        for (axis, row) in edge_strides.iter_mut().enumerate().take(dim) {
            let mut acc = 1usize;
            for j in (0..dim).rev() {
                row[j] = acc;
                acc *= if j == axis { 2 * half } else { side };
            }
        }
        let per_axis_edges = 2 * half * side.pow(dim as u32 - 1);
        LatticeShape {
            dim,
            half,
            side,
            strides,
            edge_strides,
            per_axis_edges,
        }
    }

    fn vertex_count(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    #[inline]
    pub fn digits(&self, v: usize) -> [usize; MAX_DIM] {
        let mut out = [0usize; MAX_DIM];
        let mut rest = v;
        for i in 0..self.dim {
            out[i] = rest / self.strides[i];
            rest %= self.strides[i];
        }
        out
    }

    fn index_of_digits(&self, digits: &[usize; MAX_DIM]) -> usize {
        (0..self.dim).map(|i| digits[i] * self.strides[i]).sum()
    }

    #[inline]
    fn edge_id(&self, lower: &[usize; MAX_DIM], axis: usize) -> usize {
        let row = &self.edge_strides[axis];
        axis * self.per_axis_edges + (0..self.dim).map(|j| lower[j] * row[j]).sum::<usize>()
    }

    fn edge_endpoints(&self, edge: usize) -> (usize, usize) {
        let axis = edge / self.per_axis_edges;
        let mut rest = edge % self.per_axis_edges;
        let mut digits = [0usize; MAX_DIM];
        for (j, digit) in digits.iter_mut().enumerate().take(self.dim) {
            let stride = self.edge_strides[axis][j];
            *digit = rest / stride;
            rest %= stride;
        }
        let lower = self.index_of_digits(&digits);
        (lower, lower + self.strides[axis])
    }

    #[inline]
    fn for_each_neighbor(&self, v: usize, mut f: impl FnMut(usize, usize)) {
        let digits = self.digits(v);
        for axis in 0..self.dim {
            let stride = self.strides[axis];
            if digits[axis] > 0 {
                let mut lower = digits;
                lower[axis] -= 1;
                f(v - stride, self.edge_id(&lower, axis));
            }
            if digits[axis] < 2 * self.half {
                f(v + stride, self.edge_id(&digits, axis));
            }
        }
    }

    #[inline]
    pub(crate) fn edge_id_pub(&self, lower: &[usize; MAX_DIM], axis: usize) -> usize {
        self.edge_id(lower, axis)
    }

    #[inline]
    pub(crate) fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    #[inline]
    pub fn l1_distance(&self, u: usize, v: usize) -> usize {
        let a = self.digits(u);
        let b = self.digits(v);
        (0..self.dim).map(|i| a[i].abs_diff(b[i])).sum()
    }

    fn boundary_distance(&self, v: usize) -> usize {
        let digits = self.digits(v);
        (0..self.dim)
            .map(|i| digits[i].min(2 * self.half - digits[i]))
            .min()
            .unwrap_or(0)
    }
}

#[derive(Debug)]
pub(crate) struct ExplicitTopology {
    offsets: Vec<usize>,
    adjacency: Vec<(u32, u32)>,
    coords: Vec<[i64; 2]>,
    endpoints: Vec<(u32, u32)>,
    boundary: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) enum Topology {
    Lattice(LatticeShape),
    Explicit(Arc<ExplicitTopology>),
}

/// Edge conductances. A single shared value stands for the constant environment.
#[derive(Debug, Clone, PartialEq)]
pub enum Conductances {
    Uniform(f64),
    PerEdge(Arc<Vec<f64>>),
}

/// Finite graph with symmetric nonnegative conductances and a base point.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    topology: Topology,
    conductance: Conductances,
    base: usize,
    tag: ModelTag,
    truncated: bool,
}

/// Center and radius of a hop-distance ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: usize,
    pub radius: usize,
}

/// Integer points of `[-half, half]^dim` with nearest-neighbor edges and unit conductances.
pub fn lattice_box(dim: usize, half: usize) -> Result<WeightedGraph> {
    lattice_box_with_budget(dim, half, DEFAULT_VERTEX_BUDGET)
}

pub fn lattice_box_with_budget(dim: usize, half: usize, budget: usize) -> Result<WeightedGraph> {
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(Error::param("d", format!("must be in 1..={MAX_DIM}, got {dim}")));
    }
    if half == 0 {
        return Err(Error::param("L", "must be at least 1"));
    }
    let requested = (2 * half as u128 + 1).pow(dim as u32);
    if requested > budget as u128 {
        return Err(Error::BudgetExceeded {
            what: "lattice box vertices",
            requested,
            limit: budget as u128,
        });
    }
    let shape = LatticeShape::new(dim, half);
    let origin = shape.index_of_digits(&[half; MAX_DIM]);
    Ok(WeightedGraph {
        topology: Topology::Lattice(shape),
        conductance: Conductances::Uniform(1.0),
        base: origin,
        tag: ModelTag::LatticeBox,
        truncated: true,
    })
}

/// Vertex count of the level-`level` pre-gasket triangle.
pub fn gasket_vertex_count(level: u32) -> u128 {
    (3u128.pow(level + 1) + 3) / 2
}

/// One level-`level` triangle of the pre-Sierpinski gasket, side `2^level`,
/// with the base point at the corner `(0, 0)`.
///
/// Coordinates are stored as `(2x, 2y/sqrt(3))`, which are integers for every
/// vertex, so overlapping corners deduplicate exactly.
pub fn gasket_graph(level: u32) -> Result<WeightedGraph> {
    gasket_graph_with_budget(level, DEFAULT_VERTEX_BUDGET)
}

pub fn gasket_graph_with_budget(level: u32, budget: usize) -> Result<WeightedGraph> {
    if level == 0 {
        return Err(Error::param("level", "must be at least 1"));
    }
    if level > 30 || gasket_vertex_count(level) > budget as u128 {
        return Err(Error::BudgetExceeded {
            what: "gasket vertices",
            requested: gasket_vertex_count(level.min(60)),
            limit: budget as u128,
        });
    }

    // Bottom-left corners of the unit triangles.
    let mut corners: Vec<(i64, i64)> = vec![(0, 0)];
    for k in 1..=level {
        let h = 1i64 << (k - 1);
        let mut next = Vec::with_capacity(corners.len() * 3);
        for &shift in &[(0, 0), (2 * h, 0), (h, h)] {
            next.extend(corners.iter().map(|&(x, y)| (x + shift.0, y + shift.1)));
        }
        corners = next;
    }

    let mut points = BTreeSet::new();
    for &(x, y) in &corners {
        points.insert((x, y));
        points.insert((x + 2, y));
        points.insert((x + 1, y + 1));
    }
    let index: BTreeMap<(i64, i64), u32> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i as u32))
        .collect();

    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(corners.len() * 3);
    for &(x, y) in &corners {
        let a = index[&(x, y)];
        let b = index[&(x + 2, y)];
        let c = index[&(x + 1, y + 1)];
        for (u, v) in [(a, b), (a, c), (b, c)] {
            edges.push((u.min(v), u.max(v)));
        }
    }
    edges.sort_unstable();
    edges.dedup();

    let n = points.len();
    let mut degree = vec![0usize; n];
    for &(u, v) in &edges {
        degree[u as usize] += 1;
        degree[v as usize] += 1;
    }
    let mut offsets = vec![0usize; n + 1];
    for i in 0..n {
        offsets[i + 1] = offsets[i] + degree[i];
    }
    let mut fill = offsets.clone();
    let mut adjacency = vec![(0u32, 0u32); offsets[n]];
    for (e, &(u, v)) in edges.iter().enumerate() {
        adjacency[fill[u as usize]] = (v, e as u32);
        fill[u as usize] += 1;
        adjacency[fill[v as usize]] = (u, e as u32);
        fill[v as usize] += 1;
    }
    for i in 0..n {
        adjacency[offsets[i]..offsets[i + 1]].sort_unstable();
    }

    let side = 1i64 << level;
    let boundary = vec![
        index[&(2 * side, 0)] as usize,
        index[&(side, side)] as usize,
    ];
    let topology = ExplicitTopology {
        offsets,
        adjacency,
        coords: points.into_iter().map(|(x, y)| [x, y]).collect(),
        endpoints: edges,
        boundary,
    };
    Ok(WeightedGraph {
        topology: Topology::Explicit(Arc::new(topology)),
        conductance: Conductances::Uniform(1.0),
        base: index[&(0, 0)] as usize,
        tag: ModelTag::GasketLevel,
        truncated: true,
    })
}

impl WeightedGraph {
    pub fn vertex_count(&self) -> usize {
        match &self.topology {
            Topology::Lattice(s) => s.vertex_count(),
            Topology::Explicit(t) => t.coords.len(),
        }
    }

    pub fn edge_count(&self) -> usize {
        match &self.topology {
            Topology::Lattice(s) => s.per_axis_edges * s.dim,
            Topology::Explicit(t) => t.endpoints.len(),
        }
    }

    pub fn base_point(&self) -> usize {
        self.base
    }

    pub fn model_tag(&self) -> ModelTag {
        self.tag
    }

    /// Lattice dimension, or 2 for the gasket.
    pub fn dimension(&self) -> usize {
        match &self.topology {
            Topology::Lattice(s) => s.dim,
            Topology::Explicit(_) => 2,
        }
    }

    /// Exponents of the graph family (`alpha = d, beta = 2` or the gasket pair).
    pub fn catalog_exponents(&self) -> Exponents {
        match self.tag {
            ModelTag::LatticeBox => Exponents::lattice(self.dimension()),
            ModelTag::GasketLevel => Exponents::gasket(),
        }
    }

    pub(crate) fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn conductances(&self) -> &Conductances {
        &self.conductance
    }

    /// Same topology with new conductances.
    pub fn with_conductances(&self, conductance: Conductances) -> Result<Self> {
        match &conductance {
            Conductances::Uniform(c) if !(c.is_finite() && *c >= 0.0) => {
                return Err(Error::param("conductance", "must be finite and nonnegative"))
            }
            Conductances::PerEdge(values) => {
                if values.len() != self.edge_count() {
                    return Err(Error::param(
                        "conductance",
                        format!("expected {} values, got {}", self.edge_count(), values.len()),
                    ));
                }
                if values.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
                    return Err(Error::param("conductance", "must be finite and nonnegative"));
                }
            }
            _ => {}
        }
        Ok(WeightedGraph {
            conductance,
            ..self.clone()
        })
    }

    /// Treat the graph as a finite graph in its own right: nothing counts as
    /// truncation boundary, and walks reflect off the ends.
    pub fn into_closed(mut self) -> Self {
        self.truncated = false;
        self
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    /// Relocate the base point (must be a valid vertex).
    pub fn with_base_point(mut self, base: usize) -> Result<Self> {
        self.check_vertex(base)?;
        self.base = base;
        Ok(self)
    }

    pub fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.vertex_count() {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange(v))
        }
    }

    #[inline]
    pub fn conductance(&self, edge: usize) -> f64 {
        match &self.conductance {
            Conductances::Uniform(c) => *c,
            Conductances::PerEdge(values) => values[edge],
        }
    }

    /// Calls `f(neighbor, edge)` for every graph neighbor of `v`, regardless of conductance.
    #[inline]
    pub fn for_each_neighbor(&self, v: usize, mut f: impl FnMut(usize, usize)) {
        match &self.topology {
            Topology::Lattice(s) => s.for_each_neighbor(v, f),
            Topology::Explicit(t) => {
                for &(u, e) in &t.adjacency[t.offsets[v]..t.offsets[v + 1]] {
                    f(u as usize, e as usize);
                }
            }
        }
    }

    pub fn neighbors(&self, v: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(2 * MAX_DIM);
        self.for_each_neighbor(v, |u, e| out.push((u, e)));
        out
    }

    pub fn degree(&self, v: usize) -> usize {
        let mut n = 0;
        self.for_each_neighbor(v, |_, _| n += 1);
        n
    }

    /// `mu(x)`: the sum of conductances of edges incident to `x`.
    pub fn vertex_weight(&self, v: usize) -> f64 {
        let mut total = 0.0;
        self.for_each_neighbor(v, |_, e| total += self.conductance(e));
        total
    }

    pub fn edge_endpoints(&self, edge: usize) -> (usize, usize) {
        match &self.topology {
            Topology::Lattice(s) => s.edge_endpoints(edge),
            Topology::Explicit(t) => {
                let (u, v) = t.endpoints[edge];
                (u as usize, v as usize)
            }
        }
    }

    /// Integer coordinates: lattice points, or `(2x, 2y/sqrt(3))` on the gasket.
    pub fn coordinates(&self, v: usize) -> Vec<i64> {
        match &self.topology {
            Topology::Lattice(s) => {
                let digits = s.digits(v);
                (0..s.dim)
                    .map(|i| digits[i] as i64 - s.half as i64)
                    .collect()
            }
            Topology::Explicit(t) => t.coords[v].to_vec(),
        }
    }

    /// Vertex at the given coordinates, if any.
    pub fn vertex_at(&self, coords: &[i64]) -> Option<usize> {
        match &self.topology {
            Topology::Lattice(s) => {
                if coords.len() != s.dim {
                    return None;
                }
                let mut digits = [0usize; MAX_DIM];
                for (i, &c) in coords.iter().enumerate() {
                    let shifted = c + s.half as i64;
                    if shifted < 0 || shifted >= s.side as i64 {
                        return None;
                    }
                    digits[i] = shifted as usize;
                }
                Some(s.index_of_digits(&digits))
            }
            Topology::Explicit(t) => {
                if coords.len() != 2 {
                    return None;
                }
                t.coords
                    .binary_search(&[coords[0], coords[1]])
                    .ok()
            }
        }
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        if !self.truncated {
            return false;
        }
        match &self.topology {
            Topology::Lattice(s) => s.boundary_distance(v) == 0,
            Topology::Explicit(t) => t.boundary.contains(&v),
        }
    }

    /// Hop distance from `v` to the nearest truncation-boundary vertex;
    /// `None` for closed graphs.
    pub fn boundary_distance(&self, v: usize) -> Option<usize> {
        if !self.truncated {
            return None;
        }
        match &self.topology {
            Topology::Lattice(s) => Some(s.boundary_distance(v)),
            Topology::Explicit(t) => {
                let field = self.distance_field(v, false);
                t.boundary
                    .iter()
                    .map(|&b| field[b])
                    .filter(|&d| d != UNREACHABLE)
                    .map(|d| d as usize)
                    .min()
            }
        }
    }

    /// Errors unless `ball(center, radius)` avoids every boundary vertex.
    pub fn require_interior(&self, what: &'static str, center: usize, radius: usize) -> Result<()> {
        self.check_vertex(center)?;
        match self.boundary_distance(center) {
            Some(d) if d <= radius => Err(Error::BoundaryContact {
                what,
                center,
                radius,
            }),
            _ => Ok(()),
        }
    }

    /// Full BFS field from `source`. With `positive_only`, zero-conductance edges are impassable.
    pub fn distance_field(&self, source: usize, positive_only: bool) -> Vec<u32> {
        let mut dist = vec![UNREACHABLE; self.vertex_count()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            let next = dist[v] + 1;
            self.for_each_neighbor(v, |u, e| {
                if dist[u] == UNREACHABLE && (!positive_only || self.conductance(e) > 0.0) {
                    dist[u] = next;
                    queue.push_back(u);
                }
            });
        }
        dist
    }

    /// Vertices within `radius` hops of `center` in BFS order, with their distances.
    pub fn bounded_bfs(&self, center: usize, radius: usize, positive_only: bool) -> Vec<(usize, u32)> {
        let mut seen: HashMap<usize, u32> = HashMap::new();
        let mut order = vec![(center, 0u32)];
        seen.insert(center, 0);
        let mut head = 0;
        while head < order.len() {
            let (v, d) = order[head];
            head += 1;
            if d as usize == radius {
                continue;
            }
            self.for_each_neighbor(v, |u, e| {
                if (!positive_only || self.conductance(e) > 0.0) && !seen.contains_key(&u) {
                    seen.insert(u, d + 1);
                    order.push((u, d + 1));
                }
            });
        }
        order
    }

    /// Membership of the component reachable from `root` through positive-conductance edges.
    pub fn positive_component(&self, root: usize) -> Vec<bool> {
        let n = self.vertex_count();
        if let Conductances::Uniform(c) = self.conductance {
            if c > 0.0 {
                return vec![true; n];
            }
        }
        let mut member = vec![false; n];
        let mut stack = vec![root];
        member[root] = true;
        while let Some(v) = stack.pop() {
            self.for_each_neighbor(v, |u, e| {
                if !member[u] && self.conductance(e) > 0.0 {
                    member[u] = true;
                    stack.push(u);
                }
            });
        }
        member
    }

    /// Hop distance between `x` and `y`; `None` when no admissible path exists.
    pub fn graph_distance(&self, x: usize, y: usize, positive_only: bool) -> Result<Option<usize>> {
        self.check_vertex(x)?;
        self.check_vertex(y)?;
        if x == y {
            return Ok(Some(0));
        }
        if let (Topology::Lattice(s), false) = (&self.topology, positive_only) {
            return Ok(Some(s.l1_distance(x, y)));
        }
        let d = self.distance_field(x, positive_only)[y];
        Ok((d != UNREACHABLE).then_some(d as usize))
    }

    /// `B(x, r)` under the hop distance of the graph. With `positive_only`, the
    /// ball is intersected with the base-point cluster. Sorted ascending.
    pub fn ball(&self, spec: BallSpec, positive_only: bool) -> Result<Vec<usize>> {
        self.check_vertex(spec.center)?;
        let member = positive_only.then(|| self.positive_component(self.base));
        let mut out: Vec<usize> = self
            .bounded_bfs(spec.center, spec.radius, false)
            .into_iter()
            .map(|(v, _)| v)
            .filter(|&v| member.as_ref().is_none_or(|m| m[v]))
            .collect();
        out.sort_unstable();
        Ok(out)
    }

    /// `V(A)`: sum of `mu` over the vertices of `A` in the base-point cluster,
    /// accumulated in ascending vertex order.
    pub fn volume(&self, vertices: &[usize]) -> Result<f64> {
        let member = self.positive_component(self.base);
        self.volume_within(vertices, &member)
    }

    pub fn volume_within(&self, vertices: &[usize], member: &[bool]) -> Result<f64> {
        let mut sorted = vertices.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut total = 0.0;
        for v in sorted {
            self.check_vertex(v)?;
            if member[v] {
                total += self.vertex_weight(v);
            }
        }
        Ok(total)
    }

    /// `V(x, r)` for every `r` in `0..=r_max`, using one BFS.
    pub fn volume_profile(&self, center: usize, r_max: usize, member: &[bool]) -> Vec<f64> {
        let mut per_shell = vec![Vec::new(); r_max + 1];
        for (v, d) in self.bounded_bfs(center, r_max, false) {
            if member[v] {
                per_shell[d as usize].push(v);
            }
        }
        let mut out = Vec::with_capacity(r_max + 1);
        let mut acc = Vec::new();
        for shell in per_shell {
            acc.extend(shell);
            acc.sort_unstable();
            out.push(acc.iter().map(|&v| self.vertex_weight(v)).sum());
        }
        out
    }

    /// Least-squares exponent of `r -> V(x, r)` on a log-log scale.
    pub fn volume_growth_fit(&self, center: usize, r_min: usize, r_max: usize) -> Result<VolumeFit> {
        if r_min < 1 || r_min >= r_max {
            return Err(Error::param("r_min", "need 1 <= r_min < r_max"));
        }
        self.require_interior("volume ball", center, r_max + 1)?;
        let member = self.positive_component(self.base);
        let profile = self.volume_profile(center, r_max, &member);
        let table: Vec<(usize, f64)> = (r_min..=r_max).map(|r| (r, profile[r])).collect();
        if table.iter().any(|&(_, v)| v <= 0.0) {
            return Err(Error::DegenerateTable("zero volume in fit range".into()));
        }
        let xs: Vec<f64> = table.iter().map(|&(r, _)| (r as f64).ln()).collect();
        let ys: Vec<f64> = table.iter().map(|&(_, v)| v.ln()).collect();
        let fit = linear_fit(&xs, &ys)?;
        Ok(VolumeFit {
            alpha_hat: fit.slope,
            residual: fit.max_abs_residual,
            table,
        })
    }

    /// Adjacency CSV: `edge_id,u,v,conductance`.
    pub fn write_edges_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["edge_id", "u", "v", "conductance"])?;
        for e in 0..self.edge_count() {
            let (u, v) = self.edge_endpoints(e);
            w.write_record([
                e.to_string(),
                u.to_string(),
                v.to_string(),
                format!("{:?}", self.conductance(e)),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<edges csv>", e))?;
        Ok(())
    }

    /// Vertex CSV: `vertex_id,x0,x1,...`.
    pub fn write_vertices_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.dimension();
        let mut header = vec!["vertex_id".to_string()];
        header.extend((0..dim).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for v in 0..self.vertex_count() {
            let mut row = vec![v.to_string()];
            row.extend(self.coordinates(v).iter().map(|c| c.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<vertices csv>", e))?;
        Ok(())
    }

    /// Reads conductances from an adjacency CSV written for this topology.
    pub fn read_conductances_csv<R: Read>(&self, input: R) -> Result<Conductances> {
        let mut reader = csv::Reader::from_reader(input);
        let mut values = vec![f64::NAN; self.edge_count()];
        for record in reader.deserialize::<EdgeRow>() {
            let row = record?;
            if row.edge_id >= values.len() || self.edge_endpoints(row.edge_id) != (row.u, row.v) {
                return Err(Error::param(
                    "edge_id",
                    format!("edge {} does not match this graph", row.edge_id),
                ));
            }
            values[row.edge_id] = row.conductance;
        }
        if values.iter().any(|c| c.is_nan()) {
            return Err(Error::param("conductance", "adjacency CSV is missing edges"));
        }
        Ok(Conductances::PerEdge(Arc::new(values)))
    }
}

#[derive(Debug, Deserialize)]
struct EdgeRow {
    edge_id: usize,
    u: usize,
    v: usize,
    conductance: f64,
}

/// Serializable recipe for one of the supported graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphSpec {
    Lattice { dim: usize, half_width: usize },
    Gasket { level: u32 },
}

impl GraphSpec {
    pub fn build(&self) -> Result<WeightedGraph> {
        self.build_with_budget(DEFAULT_VERTEX_BUDGET)
    }

    pub fn build_with_budget(&self, budget: usize) -> Result<WeightedGraph> {
        match *self {
            GraphSpec::Lattice { dim, half_width } => lattice_box_with_budget(dim, half_width, budget),
            GraphSpec::Gasket { level } => gasket_graph_with_budget(level, budget),
        }
    }

    pub fn exponents(&self) -> Exponents {
        match *self {
            GraphSpec::Lattice { dim, .. } => Exponents::lattice(dim),
            GraphSpec::Gasket { .. } => Exponents::gasket(),
        }
    }
}

/// Output of [`WeightedGraph::volume_growth_fit`].
#[derive(Debug, Clone, Serialize)]
pub struct VolumeFit {
    pub alpha_hat: f64,
    pub residual: f64,
    pub table: Vec<(usize, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_edges_by_enumeration(half: i64) -> usize {
        let mut n = 0;
        for x in -half..=half {
            for y in -half..=half {
                if x < half {
                    n += 1;
                }
                if y < half {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn smallest_boxes() {
        let g = lattice_box(1, 1).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (3, 2));
        let g = lattice_box(2, 1).unwrap();
        assert_eq!(g.vertex_count(), 9);
        assert_eq!(g.edge_count(), grid_edges_by_enumeration(1));
        assert_eq!(g.edge_count(), 12);
        assert_eq!(lattice_box(2, 64).unwrap().vertex_count(), 16641);
        assert_eq!(g.coordinates(g.base_point()), vec![0, 0]);
    }

    #[test]
    fn budget_and_parameter_errors() {
        assert!(matches!(
            lattice_box_with_budget(3, 10, 1000),
            Err(Error::BudgetExceeded { .. })
        ));
        assert!(matches!(lattice_box(5, 1), Err(Error::InvalidParameter { .. })));
        assert!(matches!(lattice_box(2, 0), Err(Error::InvalidParameter { .. })));
        assert!(matches!(
            gasket_graph_with_budget(6, 100),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn lattice_numbering_is_lexicographic_and_edges_decode() {
        let g = lattice_box(3, 2).unwrap();
        let mut prev: Option<Vec<i64>> = None;
        for v in 0..g.vertex_count() {
            let c = g.coordinates(v);
            if let Some(p) = prev {
                assert!(p < c);
            }
            assert_eq!(g.vertex_at(&c), Some(v));
            prev = Some(c);
        }
        let mut seen = BTreeSet::new();
        for v in 0..g.vertex_count() {
            for (u, e) in g.neighbors(v) {
                let (a, b) = g.edge_endpoints(e);
                assert_eq!((a.min(b), a.max(b)), (u.min(v), u.max(v)));
                assert!(g.neighbors(u).contains(&(v, e)));
                seen.insert(e);
            }
        }
        assert_eq!(seen.len(), g.edge_count());
        assert_eq!(*seen.iter().last().unwrap(), g.edge_count() - 1);
    }

    #[test]
    fn gasket_small_levels() {
        let g = gasket_graph(1).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (6, 9));
        assert_eq!(g.degree(g.base_point()), 2);
        assert_eq!(g.coordinates(g.base_point()), vec![0, 0]);
        let g = gasket_graph(2).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (15, 27));
        for level in 1..=6 {
            let g = gasket_graph(level).unwrap();
            assert_eq!(g.vertex_count() as u128, gasket_vertex_count(level));
            assert_eq!(g.edge_count(), 3usize.pow(level + 1));
            let corners = (0..g.vertex_count()).filter(|&v| g.degree(v) == 2).count();
            assert_eq!(corners, 3);
            assert!((0..g.vertex_count()).all(|v| g.degree(v) <= 4));
            assert_eq!(g.boundary_distance(g.base_point()), Some(1 << level));
        }
    }

    #[test]
    fn distances() {
        let g = lattice_box(1, 1).unwrap();
        let ends = (g.vertex_at(&[-1]).unwrap(), g.vertex_at(&[1]).unwrap());
        assert_eq!(g.graph_distance(ends.0, ends.1, false).unwrap(), Some(2));
        assert_eq!(g.graph_distance(1, 1, true).unwrap(), Some(0));
        assert!(g.graph_distance(0, 9, false).is_err());

        // 3x3 box with the edge origin--(1,0) closed.
        let g = lattice_box(2, 1).unwrap();
        let o = g.base_point();
        let east = g.vertex_at(&[1, 0]).unwrap();
        let closed = g.neighbors(o).into_iter().find(|&(u, _)| u == east).unwrap().1;
        let mut values = vec![1.0; g.edge_count()];
        values[closed] = 0.0;
        let g = g.with_conductances(Conductances::PerEdge(Arc::new(values))).unwrap();
        assert_eq!(g.graph_distance(o, east, true).unwrap(), Some(3));
        assert_eq!(g.graph_distance(o, east, false).unwrap(), Some(1));
    }

    #[test]
    fn unreachable_is_none() {
        let g = lattice_box(1, 2).unwrap();
        let g = g.with_conductances(Conductances::Uniform(0.0)).unwrap();
        assert_eq!(g.graph_distance(0, 4, true).unwrap(), None);
    }

    #[test]
    fn balls_and_volumes() {
        let g = lattice_box(2, 5).unwrap();
        let o = g.base_point();
        assert_eq!(g.ball(BallSpec { center: o, radius: 0 }, false).unwrap(), vec![o]);
        let b1 = g.ball(BallSpec { center: o, radius: 1 }, false).unwrap();
        assert_eq!(b1.len(), 5);
        assert_eq!(g.ball(BallSpec { center: o, radius: 2 }, true).unwrap().len(), 13);
        assert_eq!(g.volume(&[]).unwrap(), 0.0);
        assert_eq!(g.volume(&b1).unwrap(), 20.0);

        let isolated = g.with_conductances(Conductances::Uniform(0.0)).unwrap();
        assert_eq!(isolated.volume(&[o]).unwrap(), 0.0);
    }

    #[test]
    fn l1_ball_fit_is_quadratic() {
        // Least-squares slopes of ln(4(2r^2 + 2r + 1)) on ln r, from an
        // independent numpy evaluation: [4, 32] -> 1.91134768858468,
        // [16, 128] -> 1.97848062552844. The 2r term biases short ranges low.
        let g = lattice_box(2, 140).unwrap();
        let fit = g.volume_growth_fit(g.base_point(), 4, 32).unwrap();
        assert!((fit.alpha_hat - 1.91134768858468).abs() < 1e-9, "{}", fit.alpha_hat);
        let wide = g.volume_growth_fit(g.base_point(), 16, 128).unwrap();
        assert!((wide.alpha_hat - 1.97848062552844).abs() < 1e-9);
        assert!((wide.alpha_hat - 2.0).abs() < 0.05);
        assert_eq!(fit.table.len(), 29);
        // #B(x, r) = 2r^2 + 2r + 1 interior points of degree 4.
        for &(r, v) in &fit.table {
            assert_eq!(v, 4.0 * (2 * r * r + 2 * r + 1) as f64);
        }
    }

    #[test]
    fn volume_fit_rejects_boundary_contact() {
        let g = lattice_box(2, 20).unwrap();
        assert!(matches!(
            g.volume_growth_fit(g.base_point(), 4, 32),
            Err(Error::BoundaryContact { .. })
        ));
        assert!(g.volume_growth_fit(g.base_point(), 5, 5).is_err());
    }

    #[test]
    fn closed_graph_has_no_boundary() {
        let g = lattice_box(1, 2).unwrap().into_closed();
        assert_eq!(g.boundary_distance(0), None);
        assert!(!g.is_boundary(0));
        assert!(g.require_interior("test", 0, 100).is_ok());
    }

    #[test]
    fn csv_round_trip_restores_conductances() {
        let g = gasket_graph(2).unwrap();
        let values: Vec<f64> = (0..g.edge_count()).map(|e| 0.5 + e as f64 / 7.0).collect();
        let g = g.with_conductances(Conductances::PerEdge(Arc::new(values))).unwrap();
        let mut buf = Vec::new();
        g.write_edges_csv(&mut buf).unwrap();
        let restored = g.read_conductances_csv(buf.as_slice()).unwrap();
        assert_eq!(&restored, g.conductances());

        let mut buf = Vec::new();
        g.write_vertices_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("vertex_id,x0,x1\n0,0,0\n"));
    }
}
