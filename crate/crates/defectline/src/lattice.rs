//! Finite boxes of the hypercubic lattice with a distinguished axis line, bond
//! configurations on them, and exact connectivity queries.
//!
//! A box with parameters `(d, n, w)` has vertices `(x, t)` with `x in 0..=n`
//! longitudinal and each of the `d-1` transverse coordinates `t_j in -w..=w`.
//! Edges join nearest neighbours inside the box (free boundary). The *axis line*
//! is the set of longitudinal edges whose endpoints both have all transverse
//! coordinates zero; those edges carry probability `p_line`, all others `p`.

use crate::estimate::HitAccumulator;
use crate::rng::CounterRng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(u32),
    #[error("bulk probability must lie in [0, 1), got {0}")]
    BulkProbabilityOutOfRange(f64),
    #[error("line probability must lie in [0, 1], got {0}")]
    LineProbabilityOutOfRange(f64),
    #[error("box must have positive length, got n = {0}")]
    EmptyBox(u32),
    #[error("vertex count {0} overflows the u32 index type")]
    BoxTooLarge(u128),
    #[error("vertex {0} out of range (box has {1} vertices)")]
    VertexOutOfRange(u32, u32),
}

/// Advisory bulk percolation thresholds (approximate for d >= 3; literature
/// numerics). Used only to warn when a nominally subcritical computation is
/// configured at or above the bulk critical point.
pub fn bulk_threshold(d: u32) -> Option<f64> {
    match d {
        2 => Some(0.5),
        3 => Some(0.248_812_6),
        4 => Some(0.160_131_2),
        5 => Some(0.118_171_8),
        6 => Some(0.094_201_9),
        _ => None,
    }
}

/// Model parameters: dimension and the two bond probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PercParams {
    pub d: u32,
    /// Bulk bond probability, in [0, 1).
    pub p: f64,
    /// Axis-line bond probability, in [0, 1].
    pub p_line: f64,
}

impl PercParams {
    pub fn new(d: u32, p: f64, p_line: f64) -> Result<Self, LatticeError> {
        if d < 2 {
            return Err(LatticeError::DimensionTooSmall(d));
        }
        if !(0.0..1.0).contains(&p) {
            return Err(LatticeError::BulkProbabilityOutOfRange(p));
        }
        if !(0.0..=1.0).contains(&p_line) {
            return Err(LatticeError::LineProbabilityOutOfRange(p_line));
        }
        Ok(PercParams { d, p, p_line })
    }

    /// Log-ratio of the line and bulk probabilities, `ln(p_line / p)`.
    pub fn epsilon(&self) -> f64 {
        (self.p_line / self.p).ln()
    }

    /// Warning text when `p` is at or above the advisory bulk threshold.
    pub fn supercritical_warning(&self) -> Option<String> {
        let pc = bulk_threshold(self.d)?;
        if self.p >= pc {
            Some(format!(
                "bulk probability p = {} is at or above the advisory d = {} threshold {}; \
                 decay-rate estimates assume subcritical bulk",
                self.p, self.d, pc
            ))
        } else {
            None
        }
    }

    pub fn with_p_line(&self, p_line: f64) -> Result<Self, LatticeError> {
        PercParams::new(self.d, self.p, p_line)
    }
}

/// Default transverse half-width for a box of length `n`.
pub fn default_half_width(n: u32) -> u32 {
    (n / 2).max(10)
}

/// A finite box of Z^d with canonical vertex and edge indexing.
#[derive(Debug, Clone)]
pub struct LatticeBox {
    d: u32,
    n: u32,
    w: u32,
    width: u32,
    /// width^j for j in 0..d (transverse strides then longitudinal stride at d-1).
    strides: Vec<u32>,
    vertex_count: u32,
    /// Edge tails and directions, in canonical order: vertices by id, and for
    /// each vertex the longitudinal direction first, then transverse directions.
    edge_tail: Vec<u32>,
    edge_dir: Vec<u8>,
    /// (vertex * d + dir) -> edge id + 1, or 0 when that edge leaves the box.
    edge_lookup: Vec<u32>,
    /// Axis edge ids in increasing longitudinal order (exactly n of them).
    axis_edges: Vec<u32>,
    axis_flag: Vec<bool>,
    /// CSR adjacency: for each vertex, (incident edge id, other endpoint).
    adj_row: Vec<u32>,
    adj: Vec<(u32, u32)>,
}

impl LatticeBox {
    pub fn new(d: u32, n: u32, w: u32) -> Result<Self, LatticeError> {
        if d < 2 {
            return Err(LatticeError::DimensionTooSmall(d));
        }
        if n == 0 {
            return Err(LatticeError::EmptyBox(n));
        }
        let width = 2u128 * w as u128 + 1;
        let mut count: u128 = n as u128 + 1;
        let mut strides_u128 = vec![1u128; d as usize];
        for j in 1..d as usize {
            strides_u128[j] = strides_u128[j - 1] * width;
        }
        count *= strides_u128[d as usize - 1];
        if count > u32::MAX as u128 {
            return Err(LatticeError::BoxTooLarge(count));
        }
        let vertex_count = count as u32;
        let width = width as u32;
        let strides: Vec<u32> = strides_u128.iter().map(|&s| s as u32).collect();

        // Edge enumeration (canonical order) and reverse lookup.
        let mut edge_tail = Vec::new();
        let mut edge_dir = Vec::new();
        let mut edge_lookup = vec![0u32; vertex_count as usize * d as usize];
        for v in 0..vertex_count {
            for dir in 0..d {
                let in_box = if dir == 0 {
                    Self::x_of_raw(v, strides[d as usize - 1]) < n
                } else {
                    Self::t_of_raw(v, strides[dir as usize - 1], width, w) < w as i64
                };
                if in_box {
                    let id = edge_tail.len() as u32;
                    edge_tail.push(v);
                    edge_dir.push(dir as u8);
                    edge_lookup[v as usize * d as usize + dir as usize] = id + 1;
                }
            }
        }

        // Axis edges: longitudinal edges with all transverse coordinates zero.
        let mut axis_edges = Vec::with_capacity(n as usize);
        let mut axis_flag = vec![false; edge_tail.len()];
        let transverse_origin: u32 = (0..d as usize - 1)
            .map(|j| w * strides[j])
            .sum();
        for x in 0..n {
            let v = x * strides[d as usize - 1] + transverse_origin;
            let id = edge_lookup[v as usize * d as usize] - 1;
            axis_edges.push(id);
            axis_flag[id as usize] = true;
        }

        // CSR adjacency.
        let mut deg = vec![0u32; vertex_count as usize];
        for (e, &tail) in edge_tail.iter().enumerate() {
            let head = tail + Self::offset(&strides, d, edge_dir[e]);
            deg[tail as usize] += 1;
            deg[head as usize] += 1;
        }
        let mut adj_row = vec![0u32; vertex_count as usize + 1];
        for v in 0..vertex_count as usize {
            adj_row[v + 1] = adj_row[v] + deg[v];
        }
        let mut fill = adj_row.clone();
        let mut adj = vec![(0u32, 0u32); edge_tail.len() * 2];
        for (e, &tail) in edge_tail.iter().enumerate() {
            let head = tail + Self::offset(&strides, d, edge_dir[e]);
            adj[fill[tail as usize] as usize] = (e as u32, head);
            fill[tail as usize] += 1;
            adj[fill[head as usize] as usize] = (e as u32, tail);
            fill[head as usize] += 1;
        }

        Ok(LatticeBox {
            d,
            n,
            w,
            width,
            strides,
            vertex_count,
            edge_tail,
            edge_dir,
            edge_lookup,
            axis_edges,
            axis_flag,
            adj_row,
            adj,
        })
    }

    #[inline]
    fn offset(strides: &[u32], d: u32, dir: u8) -> u32 {
        if dir == 0 {
            strides[d as usize - 1]
        } else {
            strides[dir as usize - 1]
        }
    }

    #[inline]
    fn x_of_raw(v: u32, long_stride: u32) -> u32 {
        v / long_stride
    }

    #[inline]
    fn t_of_raw(v: u32, stride: u32, width: u32, w: u32) -> i64 {
        ((v / stride) % width) as i64 - w as i64
    }

    pub fn d(&self) -> u32 {
        self.d
    }
    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn w(&self) -> u32 {
        self.w
    }
    pub fn vertex_count(&self) -> u32 {
        self.vertex_count
    }
    pub fn edge_count(&self) -> u32 {
        self.edge_tail.len() as u32
    }

    /// Longitudinal coordinate of a vertex.
    #[inline]
    pub fn x_of(&self, v: u32) -> u32 {
        v / self.strides[self.d as usize - 1]
    }

    /// Transverse coordinate `j` (0-based among the d-1 transverse axes).
    #[inline]
    pub fn transverse_of(&self, v: u32, j: u32) -> i64 {
        Self::t_of_raw(v, self.strides[j as usize], self.width, self.w)
    }

    /// Sup-norm of the transverse part of a vertex.
    #[inline]
    pub fn transverse_sup(&self, v: u32) -> i64 {
        (0..self.d - 1)
            .map(|j| self.transverse_of(v, j).abs())
            .max()
            .unwrap_or(0)
    }

    /// Vertex id from coordinates; errors when out of range.
    pub fn vertex_id(&self, x: u32, t: &[i64]) -> Result<u32, LatticeError> {
        if x > self.n || t.len() != self.d as usize - 1 {
            return Err(LatticeError::VertexOutOfRange(u32::MAX, self.vertex_count));
        }
        let mut v = x * self.strides[self.d as usize - 1];
        for (j, &tj) in t.iter().enumerate() {
            if tj.abs() > self.w as i64 {
                return Err(LatticeError::VertexOutOfRange(u32::MAX, self.vertex_count));
            }
            v += (tj + self.w as i64) as u32 * self.strides[j];
        }
        Ok(v)
    }

    /// Vertex on the axis line at longitudinal coordinate `x`.
    pub fn axis_vertex(&self, x: u32) -> u32 {
        let transverse_origin: u32 = (0..self.d as usize - 1)
            .map(|j| self.w * self.strides[j])
            .sum();
        x * self.strides[self.d as usize - 1] + transverse_origin
    }

    /// Endpoints (tail, head) of an edge; head = tail + unit step.
    #[inline]
    pub fn endpoints(&self, e: u32) -> (u32, u32) {
        let tail = self.edge_tail[e as usize];
        let head = tail + Self::offset(&self.strides, self.d, self.edge_dir[e as usize]);
        (tail, head)
    }

    /// Direction of an edge: 0 = longitudinal, j >= 1 = transverse axis j-1.
    #[inline]
    pub fn direction(&self, e: u32) -> u8 {
        self.edge_dir[e as usize]
    }

    /// Edge id for (vertex, direction), when the far endpoint lies in the box.
    #[inline]
    pub fn edge_id(&self, v: u32, dir: u32) -> Option<u32> {
        let raw = self.edge_lookup[v as usize * self.d as usize + dir as usize];
        if raw == 0 {
            None
        } else {
            Some(raw - 1)
        }
    }

    #[inline]
    pub fn is_axis_edge(&self, e: u32) -> bool {
        self.axis_flag[e as usize]
    }

    /// Axis edge ids in increasing longitudinal order (length n).
    pub fn axis_edges(&self) -> &[u32] {
        &self.axis_edges
    }

    /// Incident (edge, other endpoint) pairs of a vertex.
    #[inline]
    pub fn incident(&self, v: u32) -> &[(u32, u32)] {
        &self.adj[self.adj_row[v as usize] as usize..self.adj_row[v as usize + 1] as usize]
    }

    /// Probability carried by an edge under the given parameters.
    #[inline]
    pub fn edge_probability(&self, params: &PercParams, e: u32) -> f64 {
        if self.is_axis_edge(e) {
            params.p_line
        } else {
            params.p
        }
    }
}

/// A sampled bond configuration: a bitset over edge ids plus provenance.
#[derive(Debug, Clone)]
pub struct EdgeConfig<'a> {
    bbox: &'a LatticeBox,
    bits: Vec<u64>,
    pub seed: u64,
}

impl<'a> EdgeConfig<'a> {
    pub fn closed(bbox: &'a LatticeBox, seed: u64) -> Self {
        let words = (bbox.edge_count() as usize + 63) / 64;
        EdgeConfig {
            bbox,
            bits: vec![0; words],
            seed,
        }
    }

    pub fn bbox(&self) -> &'a LatticeBox {
        self.bbox
    }

    #[inline]
    pub fn is_open(&self, e: u32) -> bool {
        self.bits[e as usize / 64] >> (e % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, e: u32, open: bool) {
        let (w, b) = (e as usize / 64, e % 64);
        if open {
            self.bits[w] |= 1 << b;
        } else {
            self.bits[w] &= !(1 << b);
        }
    }

    pub fn open_count(&self) -> u32 {
        self.bits.iter().map(|w| w.count_ones()).sum()
    }
}

/// Sample a configuration: edge `e` is open iff the `e`-th uniform of the seed's
/// stream falls below that edge's probability. One uniform per edge, indexed by
/// edge id, so configurations with the same seed at `p_line_1 <= p_line_2` agree
/// off the axis and satisfy `omega_1 <= omega_2` on it (monotone coupling).
pub fn sample_config<'a>(
    bbox: &'a LatticeBox,
    params: &PercParams,
    seed: u64,
) -> EdgeConfig<'a> {
    let stream = CounterRng::new(seed);
    let mut cfg = EdgeConfig::closed(bbox, seed);
    for e in 0..bbox.edge_count() {
        if stream.uniform_at(e as u64) < bbox.edge_probability(params, e) {
            cfg.set(e, true);
        }
    }
    cfg
}

/// Union-find with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: u32) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n as usize],
        }
    }

    pub fn reset(&mut self) {
        for (i, p) in self.parent.iter_mut().enumerate() {
            *p = i as u32;
        }
        self.size.fill(1);
    }

    #[inline]
    pub fn find(&mut self, mut v: u32) -> u32 {
        while self.parent[v as usize] != v {
            let gp = self.parent[self.parent[v as usize] as usize];
            self.parent[v as usize] = gp;
            v = gp;
        }
        v
    }

    #[inline]
    pub fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }

    pub fn same(&mut self, a: u32, b: u32) -> bool {
        self.find(a) == self.find(b)
    }
}

/// Connectivity of two vertices in a configuration, via union-find over the
/// open edges.
pub fn connected(cfg: &EdgeConfig, x: u32, y: u32) -> bool {
    let bbox = cfg.bbox();
    let mut uf = UnionFind::new(bbox.vertex_count());
    for e in 0..bbox.edge_count() {
        if cfg.is_open(e) {
            let (a, b) = bbox.endpoints(e);
            uf.union(a, b);
        }
    }
    uf.same(x, y)
}

/// Reference implementation of connectivity by breadth-first search. Slower;
/// kept as the oracle that `connected` and the lazy explorer are tested against.
pub fn connected_bfs(cfg: &EdgeConfig, x: u32, y: u32) -> bool {
    let bbox = cfg.bbox();
    if x == y {
        return true;
    }
    let mut visited = vec![false; bbox.vertex_count() as usize];
    let mut queue = std::collections::VecDeque::new();
    visited[x as usize] = true;
    queue.push_back(x);
    while let Some(v) = queue.pop_front() {
        for &(e, u) in bbox.incident(v) {
            if cfg.is_open(e) && !visited[u as usize] {
                if u == y {
                    return true;
                }
                visited[u as usize] = true;
                queue.push_back(u);
            }
        }
    }
    false
}

/// Vertex set and open-edge set of one cluster, both sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub vertices: Vec<u32>,
    pub edges: Vec<u32>,
}

impl Cluster {
    pub fn contains_vertex(&self, v: u32) -> bool {
        self.vertices.binary_search(&v).is_ok()
    }

    pub fn contains_edge(&self, e: u32) -> bool {
        self.edges.binary_search(&e).is_ok()
    }
}

/// The cluster containing `x`: all vertices reachable through open edges, plus
/// every open edge with both endpoints in that set.
pub fn cluster_of(cfg: &EdgeConfig, x: u32) -> Cluster {
    let bbox = cfg.bbox();
    let mut explorer = Explorer::new(bbox);
    explorer.cluster_with(bbox, x, |e| cfg.is_open(e))
}

/// Reusable scratch space for cluster exploration with on-demand edge state.
/// The edge predicate is consulted at most once per incidence; with the
/// counter-based RNG this gives the same verdict as materializing the full
/// configuration first.
#[derive(Debug)]
pub struct Explorer {
    stamp: u32,
    visited: Vec<u32>,
    queue: Vec<u32>,
}

impl Explorer {
    pub fn new(bbox: &LatticeBox) -> Self {
        Explorer {
            stamp: 0,
            visited: vec![0; bbox.vertex_count() as usize],
            queue: Vec::new(),
        }
    }

    fn begin(&mut self, bbox: &LatticeBox) {
        if self.visited.len() < bbox.vertex_count() as usize {
            self.visited.resize(bbox.vertex_count() as usize, 0);
        }
        if self.stamp == u32::MAX {
            self.visited.fill(0);
            self.stamp = 0;
        }
        self.stamp += 1;
        self.queue.clear();
    }

    /// Whether `x` and `y` are joined by open edges, exploring only the cluster
    /// of `x` and stopping as soon as `y` is reached.
    pub fn connected_with<F: FnMut(u32) -> bool>(
        &mut self,
        bbox: &LatticeBox,
        x: u32,
        y: u32,
        mut edge_open: F,
    ) -> bool {
        if x == y {
            return true;
        }
        self.begin(bbox);
        self.visited[x as usize] = self.stamp;
        self.queue.push(x);
        let mut head = 0;
        while head < self.queue.len() {
            let v = self.queue[head];
            head += 1;
            for &(e, u) in bbox.incident(v) {
                if self.visited[u as usize] != self.stamp && edge_open(e) {
                    if u == y {
                        return true;
                    }
                    self.visited[u as usize] = self.stamp;
                    self.queue.push(u);
                }
            }
        }
        false
    }

    /// Full cluster of `x` under the edge predicate.
    pub fn cluster_with<F: FnMut(u32) -> bool>(
        &mut self,
        bbox: &LatticeBox,
        x: u32,
        mut edge_open: F,
    ) -> Cluster {
        self.begin(bbox);
        self.visited[x as usize] = self.stamp;
        self.queue.push(x);
        let mut head = 0;
        // Record open state per incidence to collect edges without re-querying.
        let mut open_edges = Vec::new();
        while head < self.queue.len() {
            let v = self.queue[head];
            head += 1;
            for &(e, u) in bbox.incident(v) {
                if edge_open(e) {
                    // Each open edge inside the cluster is seen from both
                    // endpoints; keep it when seen from its tail to dedupe.
                    if bbox.endpoints(e).0 == v {
                        open_edges.push(e);
                    }
                    if self.visited[u as usize] != self.stamp {
                        self.visited[u as usize] = self.stamp;
                        self.queue.push(u);
                    }
                }
            }
        }
        let mut vertices = self.queue.clone();
        vertices.sort_unstable();
        open_edges.sort_unstable();
        open_edges.dedup();
        Cluster {
            vertices,
            edges: open_edges,
        }
    }
}

/// Indicator of the axis-endpoint connection {0 <-> n e1} for one replica,
/// evaluated lazily from the replica's stream (edge `e` open iff its uniform
/// falls below the edge probability).
pub fn axis_connection_indicator(
    bbox: &LatticeBox,
    params: &PercParams,
    explorer: &mut Explorer,
    stream: &CounterRng,
) -> bool {
    let src = bbox.axis_vertex(0);
    let dst = bbox.axis_vertex(bbox.n());
    explorer.connected_with(bbox, src, dst, |e| {
        stream.uniform_at(e as u64) < bbox.edge_probability(params, e)
    })
}

/// Empirical open frequency of a fixed edge over many replicas (diagnostic for
/// the per-edge uniform contract).
pub fn edge_open_frequency(
    bbox: &LatticeBox,
    params: &PercParams,
    edge: u32,
    replicas: u64,
    seed: u64,
) -> HitAccumulator {
    let root = CounterRng::new(seed);
    let prob = bbox.edge_probability(params, edge);
    let mut acc = HitAccumulator::new();
    for r in 0..replicas {
        let stream = root.substream(r);
        acc.push(stream.uniform_at(edge as u64) < prob);
    }
    acc
}
