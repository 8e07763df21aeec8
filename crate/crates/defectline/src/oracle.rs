//! Exact computations on small boxes and planar strips.
//!
//! Two independent engines: exhaustive enumeration over all bond configurations
//! (boxes of at most 24 edges), and a transfer sweep over column connectivity
//! states for two-dimensional strips. They overlap on small strips and are
//! required to agree there; on top of the enumeration engine sit identity
//! checks relating the defect-line measure to the homogeneous one (weighted
//! cluster tilt, derivative-vs-pivotal-sum, and the exponentiated pivotal
//! integral for probability ratios).

use crate::lattice::{LatticeBox, PercParams};
use crate::numeric::{adaptive_simpson, Neumaier};
use std::collections::BTreeMap;
use thiserror::Error;

/// Hard cap for exhaustive enumeration: 2^24 configurations.
pub const ENUM_EDGE_CAP: u32 = 24;
/// Strip transfer is limited to column height 2w+1 <= 9.
pub const STRIP_MAX_HALF_WIDTH: u32 = 4;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("box has {0} edges, above the exhaustive-enumeration cap of {cap}", cap = ENUM_EDGE_CAP)]
    TooManyEdges(u32),
    #[error("box has {0} vertices, above the 64-vertex enumeration limit")]
    TooManyVertices(u32),
    #[error("vertex {0} outside the box")]
    VertexOutOfRange(u32),
    #[error("strip evaluator needs half-width w <= {max}, got {0}", max = STRIP_MAX_HALF_WIDTH)]
    StripTooWide(u32),
    #[error("strip evaluator needs a probability in [0, 1], got {0}")]
    BadProbability(f64),
    #[error("identity check needs bulk probability p in (0, 1), got {0}")]
    DegenerateBulk(f64),
    #[error("probability interval endpoints must lie in (0, 1] with p1 <= p2, got ({0}, {1})")]
    BadInterval(f64, f64),
}

/// Precomputed per-box context for exhaustive enumeration.
struct EnumCtx {
    /// For each vertex: (edge bit, neighbor) incidences.
    adj: Vec<Vec<(u32, u32)>>,
    /// Bitmask of axis edge ids.
    axis_mask: u32,
    axis_edges: Vec<u32>,
}

impl EnumCtx {
    fn new(bbox: &LatticeBox) -> Result<Self, OracleError> {
        let ec = bbox.edge_count();
        if ec > ENUM_EDGE_CAP {
            return Err(OracleError::TooManyEdges(ec));
        }
        if bbox.vertex_count() > 64 {
            return Err(OracleError::TooManyVertices(bbox.vertex_count()));
        }
        let mut adj = vec![Vec::new(); bbox.vertex_count() as usize];
        for e in 0..ec {
            let (u, v) = bbox.endpoints(e);
            adj[u as usize].push((e, v));
            adj[v as usize].push((e, u));
        }
        let mut axis_mask = 0u32;
        for &e in bbox.axis_edges() {
            axis_mask |= 1 << e;
        }
        Ok(EnumCtx {
            adj,
            axis_mask,
            axis_edges: bbox.axis_edges().to_vec(),
        })
    }

    /// Vertex mask of the component of `start` under the open-edge mask.
    #[inline]
    fn component_mask(&self, open: u32, start: u32) -> u64 {
        let mut visited: u64 = 1 << start;
        let mut stack = [0u32; 64];
        let mut top = 0usize;
        stack[top] = start;
        top += 1;
        while top > 0 {
            top -= 1;
            let v = stack[top];
            for &(e, u) in &self.adj[v as usize] {
                if open >> e & 1 == 1 && visited >> u & 1 == 0 {
                    visited |= 1u64 << u;
                    stack[top] = u;
                    top += 1;
                }
            }
        }
        visited
    }

    #[inline]
    fn connected(&self, open: u32, x: u32, y: u32) -> bool {
        x == y || self.component_mask(open, x) >> y & 1 == 1
    }

    /// Number of axis edges pivotal for {x <-> y} in the configuration
    /// (state-independent definition: the indicator differs between the edge
    /// forced open and forced closed).
    fn axis_pivotal_count(&self, open: u32, x: u32, y: u32) -> u32 {
        let mut count = 0;
        for &e in &self.axis_edges {
            let with = self.connected(open | 1 << e, x, y);
            let without = self.connected(open & !(1 << e), x, y);
            count += (with != without) as u32;
        }
        count
    }
}

/// Per-byte product tables: weight of a configuration as a product of three
/// table lookups, avoiding per-edge multiplication error accumulation.
struct WeightTables {
    tables: Vec<[f64; 256]>,
}

impl WeightTables {
    /// `factor(e, open)` gives the multiplicative factor of edge `e`.
    fn build<F: Fn(u32, bool) -> f64>(edge_count: u32, factor: F) -> Self {
        let groups = (edge_count as usize + 7) / 8;
        let mut tables = vec![[1.0f64; 256]; groups];
        for (g, table) in tables.iter_mut().enumerate() {
            let lo = (g * 8) as u32;
            let hi = (lo + 8).min(edge_count);
            for (byte, slot) in table.iter_mut().enumerate() {
                let mut w = 1.0;
                for e in lo..hi {
                    w *= factor(e, byte >> (e - lo) & 1 == 1);
                }
                *slot = w;
            }
        }
        WeightTables { tables }
    }

    #[inline]
    fn weight(&self, mask: u32) -> f64 {
        let mut w = 1.0;
        for (g, table) in self.tables.iter().enumerate() {
            w *= table[(mask >> (g * 8) & 255) as usize];
        }
        w
    }
}

fn check_vertices(bbox: &LatticeBox, x: u32, y: u32) -> Result<(), OracleError> {
    for v in [x, y] {
        if v >= bbox.vertex_count() {
            return Err(OracleError::VertexOutOfRange(v));
        }
    }
    Ok(())
}

/// Exact connection probability P{x <-> y} by exhaustive enumeration over all
/// 2^(edge count) configurations, with compensated summation.
pub fn enumerate_connectivity(
    bbox: &LatticeBox,
    params: &PercParams,
    x: u32,
    y: u32,
) -> Result<f64, OracleError> {
    check_vertices(bbox, x, y)?;
    let ctx = EnumCtx::new(bbox)?;
    let tables = WeightTables::build(bbox.edge_count(), |e, open| {
        let p = bbox.edge_probability(params, e);
        if open {
            p
        } else {
            1.0 - p
        }
    });
    let mut acc = Neumaier::new();
    for mask in 0..1u64 << bbox.edge_count() {
        let mask = mask as u32;
        if ctx.connected(mask, x, y) {
            acc.add(tables.weight(mask));
        }
    }
    Ok(acc.total())
}

/// Connectivity and pivotal-count statistics grouped by the number of open
/// axis edges, under bulk-only weights. Evaluating the grouped polynomials in
/// the line probability reproduces exact expectations for any `p_line`,
/// turning repeated enumerations (derivative checks, quadrature nodes) into
/// O(axis length) evaluations.
pub struct AxisProfile {
    /// Sum of bulk weights of configurations with `a` open axis edges that
    /// connect x to y.
    pub connect: Vec<f64>,
    /// Same, weighted by the number of pivotal axis edges (unconditioned).
    pub pivotal: Vec<f64>,
    /// Same, weighted by pivotal count and restricted to connecting configs.
    pub pivotal_connected: Vec<f64>,
}

impl AxisProfile {
    fn bernstein(coeff: &[f64], s: f64) -> f64 {
        let m = coeff.len() - 1;
        let mut acc = Neumaier::new();
        let mut so = 1.0; // s^a
        for (a, &c) in coeff.iter().enumerate() {
            let sc = (1.0 - s).powi((m - a) as i32);
            acc.add(c * so * sc);
            so *= s;
        }
        acc.total()
    }

    /// P{x <-> y} at line probability `s`.
    pub fn probability(&self, s: f64) -> f64 {
        Self::bernstein(&self.connect, s)
    }

    /// Expected number of pivotal axis edges at line probability `s`.
    pub fn pivotal_sum(&self, s: f64) -> f64 {
        Self::bernstein(&self.pivotal, s)
    }

    /// E[#pivotal axis edges | x <-> y] at line probability `s`.
    pub fn conditional_pivotal(&self, s: f64) -> f64 {
        Self::bernstein(&self.pivotal_connected, s) / Self::bernstein(&self.connect, s)
    }
}

/// Build the axis-grouped profile for {x <-> y} at bulk probability `params.p`.
pub fn axis_profile(
    bbox: &LatticeBox,
    params: &PercParams,
    x: u32,
    y: u32,
) -> Result<AxisProfile, OracleError> {
    check_vertices(bbox, x, y)?;
    let ctx = EnumCtx::new(bbox)?;
    let tables = WeightTables::build(bbox.edge_count(), |e, open| {
        if bbox.is_axis_edge(e) {
            1.0
        } else if open {
            params.p
        } else {
            1.0 - params.p
        }
    });
    let m = bbox.axis_edges().len();
    let mut connect = vec![Neumaier::new(); m + 1];
    let mut pivotal = vec![Neumaier::new(); m + 1];
    let mut pivotal_connected = vec![Neumaier::new(); m + 1];
    for mask in 0..1u64 << bbox.edge_count() {
        let mask = mask as u32;
        let w = tables.weight(mask);
        let a = (mask & ctx.axis_mask).count_ones() as usize;
        let conn = ctx.connected(mask, x, y);
        let piv = ctx.axis_pivotal_count(mask, x, y);
        if conn {
            connect[a].add(w);
            if piv > 0 {
                pivotal_connected[a].add(w * piv as f64);
            }
        }
        if piv > 0 {
            pivotal[a].add(w * piv as f64);
        }
    }
    Ok(AxisProfile {
        connect: connect.iter().map(Neumaier::total).collect(),
        pivotal: pivotal.iter().map(Neumaier::total).collect(),
        pivotal_connected: pivotal_connected.iter().map(Neumaier::total).collect(),
    })
}

/// Both sides of the cluster-tilt identity: the connection probability under
/// the defect measure equals the homogeneous expectation of
/// `exp(I(C))` over connecting configurations, where `I(C)` weighs the open
/// axis edges of the cluster and the closed axis edges adjacent to it.
#[derive(Debug, Clone, Copy)]
pub struct ChangeOfMeasureCheck {
    /// P_{p, p_line}{x <-> y} by direct enumeration.
    pub defect_probability: f64,
    /// E_p[exp(I(C_{x,y})); x <-> y] by enumeration under the homogeneous measure.
    pub tilted_expectation: f64,
}

impl ChangeOfMeasureCheck {
    pub fn abs_err(&self) -> f64 {
        (self.defect_probability - self.tilted_expectation).abs()
    }
}

pub fn change_of_measure_check(
    bbox: &LatticeBox,
    params: &PercParams,
    x: u32,
    y: u32,
) -> Result<ChangeOfMeasureCheck, OracleError> {
    check_vertices(bbox, x, y)?;
    if params.p <= 0.0 || params.p >= 1.0 {
        return Err(OracleError::DegenerateBulk(params.p));
    }
    let defect_probability = enumerate_connectivity(bbox, params, x, y)?;

    let ctx = EnumCtx::new(bbox)?;
    // Homogeneous weights: every edge at bulk probability p.
    let tables = WeightTables::build(bbox.edge_count(), |_, open| {
        if open {
            params.p
        } else {
            1.0 - params.p
        }
    });
    let m = bbox.axis_edges().len();
    // exp(I) factor split by (open axis edges in C, closed axis edges adjacent
    // to C): (p'/p)^open * ((1-p')/(1-p))^closed.
    let mut open_ratio = vec![1.0f64; m + 1];
    let mut closed_ratio = vec![1.0f64; m + 1];
    for k in 1..=m {
        open_ratio[k] = open_ratio[k - 1] * (params.p_line / params.p);
        closed_ratio[k] = closed_ratio[k - 1] * ((1.0 - params.p_line) / (1.0 - params.p));
    }

    let mut acc = Neumaier::new();
    for mask in 0..1u64 << bbox.edge_count() {
        let mask = mask as u32;
        let comp = ctx.component_mask(mask, x);
        if comp >> y & 1 == 0 && x != y {
            continue;
        }
        let mut open_in_cluster = 0usize;
        let mut closed_adjacent = 0usize;
        for &e in &ctx.axis_edges {
            let (u, v) = bbox.endpoints(e);
            let touches = comp >> u & 1 == 1 || comp >> v & 1 == 1;
            if mask >> e & 1 == 1 {
                // An open edge touching the cluster lies inside it.
                if touches {
                    open_in_cluster += 1;
                }
            } else if touches {
                closed_adjacent += 1;
            }
        }
        acc.add(tables.weight(mask) * open_ratio[open_in_cluster] * closed_ratio[closed_adjacent]);
    }
    Ok(ChangeOfMeasureCheck {
        defect_probability,
        tilted_expectation: acc.total(),
    })
}

/// Derivative-in-`p_line` check: symmetric finite difference of the exact
/// connection probability against the exact expected number of pivotal axis
/// edges, at two step sizes for a Richardson consistency ratio.
#[derive(Debug, Clone, Copy)]
pub struct RussoCheck {
    pub fd: f64,
    pub fd_refined: f64,
    pub pivotal_sum: f64,
    pub err: f64,
    pub err_refined: f64,
    /// err / err_refined, present only when the refined error is large enough
    /// to be meaningful against roundoff (otherwise both differences already
    /// agree to near machine precision and the ratio is noise).
    pub richardson: Option<f64>,
}

pub fn russo_derivative_check(
    bbox: &LatticeBox,
    params: &PercParams,
    x: u32,
    y: u32,
    h: f64,
) -> Result<RussoCheck, OracleError> {
    check_vertices(bbox, x, y)?;
    let profile = axis_profile(bbox, params, x, y)?;
    let s = params.p_line;
    let fd = (profile.probability(s + h) - profile.probability(s - h)) / (2.0 * h);
    let fd_refined =
        (profile.probability(s + 0.5 * h) - profile.probability(s - 0.5 * h)) / h;
    let pivotal_sum = profile.pivotal_sum(s);
    let err = (fd - pivotal_sum).abs();
    let err_refined = (fd_refined - pivotal_sum).abs();
    let floor = 1e-11 * pivotal_sum.abs().max(1.0);
    let richardson = if err_refined > floor {
        Some(err / err_refined)
    } else {
        None
    };
    Ok(RussoCheck {
        fd,
        fd_refined,
        pivotal_sum,
        err,
        err_refined,
        richardson,
    })
}

/// Ratio identity check: P at line probability `p2` over P at `p1` against the
/// exponential of the integral over s of E[#pivotal axis edges | connected] / s.
#[derive(Debug, Clone, Copy)]
pub struct RatioCheck {
    pub direct: f64,
    pub integrated: f64,
    pub quadrature_error: f64,
}

impl RatioCheck {
    pub fn rel_err(&self) -> f64 {
        (self.direct - self.integrated).abs() / self.direct.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn lemma_ratio_check(
    bbox: &LatticeBox,
    params: &PercParams,
    x: u32,
    y: u32,
    p1: f64,
    p2: f64,
) -> Result<RatioCheck, OracleError> {
    check_vertices(bbox, x, y)?;
    if !(0.0 < p1 && p1 <= p2 && p2 <= 1.0) {
        return Err(OracleError::BadInterval(p1, p2));
    }
    let at = |p_line: f64| PercParams {
        p_line,
        ..*params
    };
    let direct = enumerate_connectivity(bbox, &at(p2), x, y)?
        / enumerate_connectivity(bbox, &at(p1), x, y)?;
    let profile = axis_profile(bbox, params, x, y)?;
    let mut integrand = |s: f64| profile.conditional_pivotal(s) / s;
    let (integral, quadrature_error) = adaptive_simpson(&mut integrand, p1, p2, 1e-12);
    Ok(RatioCheck {
        direct,
        integrated: integral.exp(),
        quadrature_error,
    })
}

// ---------------------------------------------------------------------------
// Planar strip transfer evaluator.
// ---------------------------------------------------------------------------

/// Connectivity state of one strip column: a set partition of the 2w+1 column
/// vertices into blocks induced by the processed subgraph, each block flagged
/// if it is connected to the source vertex. Exactly one block can carry the
/// flag (all flagged vertices are mutually connected through the past), so the
/// state stores the flagged block's label; states whose source component no
/// longer touches the column are dropped (they can never reach the sink).
///
/// Encoding: labels by first appearance (top to bottom), 4 bits per slot,
/// flag label in the top nibble.
#[derive(Debug, Clone)]
struct StripStates {
    len: usize,
    states: BTreeMap<u64, f64>,
}

fn pack(labels: &[u8], flag: u8) -> u64 {
    let mut key = 0u64;
    for (i, &l) in labels.iter().enumerate() {
        key |= (l as u64) << (4 * i);
    }
    key | (flag as u64) << 60
}

fn unpack(key: u64, len: usize, labels: &mut Vec<u8>) -> u8 {
    labels.clear();
    for i in 0..len {
        labels.push((key >> (4 * i) & 15) as u8);
    }
    (key >> 60 & 15) as u8
}

/// Relabel by first appearance; returns remapped flag. A flag with no slot is
/// reported as `None` (the source component detached).
fn canonicalize(labels: &mut [u8], flag: u8) -> Option<u8> {
    let mut map = [u8::MAX; 16];
    let mut next = 0u8;
    for l in labels.iter_mut() {
        if map[*l as usize] == u8::MAX {
            map[*l as usize] = next;
            next += 1;
        }
        *l = map[*l as usize];
    }
    if map[flag as usize] == u8::MAX {
        None
    } else {
        Some(map[flag as usize])
    }
}

impl StripStates {
    /// Apply one edge between slots `i` and `j`, open with probability `prob`.
    fn apply_edge(&mut self, i: usize, j: usize, prob: f64) {
        let mut next = BTreeMap::new();
        let mut labels = Vec::with_capacity(self.len);
        for (&key, &weight) in &self.states {
            let flag = unpack(key, self.len, &mut labels);
            // Closed branch: state unchanged.
            *next.entry(key).or_insert(0.0) += weight * (1.0 - prob);
            // Open branch: merge the blocks of i and j.
            let (a, b) = (labels[i], labels[j]);
            if a == b {
                *next.entry(key).or_insert(0.0) += weight * prob;
            } else {
                let mut merged = labels.clone();
                for l in merged.iter_mut() {
                    if *l == b {
                        *l = a;
                    }
                }
                let mflag = if flag == b { a } else { flag };
                let nf = canonicalize(&mut merged, mflag).expect("flag block kept a slot");
                *next.entry(pack(&merged, nf)).or_insert(0.0) += weight * prob;
            }
        }
        self.states = next;
    }

    /// Append a fresh singleton slot at the end.
    fn push_singleton(&mut self) {
        let mut next = BTreeMap::new();
        let mut labels = Vec::with_capacity(self.len + 1);
        for (&key, &weight) in &self.states {
            let flag = unpack(key, self.len, &mut labels);
            let fresh = labels.iter().copied().max().map_or(0, |m| m + 1);
            labels.push(fresh);
            *next.entry(pack(&labels, flag)).or_insert(0.0) += weight;
        }
        self.len += 1;
        self.states = next;
    }

    /// Remove the first slot; drop states whose flagged block vanishes.
    fn retire_front(&mut self) {
        let mut next = BTreeMap::new();
        let mut labels = Vec::with_capacity(self.len);
        for (&key, &weight) in &self.states {
            let flag = unpack(key, self.len, &mut labels);
            let mut rest: Vec<u8> = labels[1..].to_vec();
            match canonicalize(&mut rest, flag) {
                Some(nf) => {
                    *next.entry(pack(&rest, nf)).or_insert(0.0) += weight;
                }
                None => {
                    // Source component detached from the column: absorbed.
                }
            }
        }
        self.len -= 1;
        self.states = next;
    }

    /// Probability that the flagged block contains the slot at `center`.
    fn sink_probability(&self, center: usize) -> f64 {
        let mut acc = Neumaier::new();
        let mut labels = Vec::with_capacity(self.len);
        for (&key, &weight) in &self.states {
            let flag = unpack(key, self.len, &mut labels);
            if labels[center] == flag {
                acc.add(weight);
            }
        }
        acc.total()
    }
}

/// Exact P{(0, 0) <-> (n, 0)} on the strip [0, n] x [-w, w] (d = 2) for every
/// n in 0..=n_max, by a transfer sweep over column connectivity states.
///
/// The sweep interleaves each column's transverse edges with the longitudinal
/// edges joining it to the previous column (one row at a time). All edge
/// operators act on disjoint randomness, so they commute: the interleaved
/// order gives the same distribution as processing all transverse edges first,
/// while keeping the active state on at most 2w+2 slots.
pub fn strip_connectivity_series(
    p: f64,
    p_line: f64,
    w: u32,
    n_max: u32,
) -> Result<Vec<f64>, OracleError> {
    if w > STRIP_MAX_HALF_WIDTH {
        return Err(OracleError::StripTooWide(w));
    }
    for q in [p, p_line] {
        if !(0.0..=1.0).contains(&q) {
            return Err(OracleError::BadProbability(q));
        }
    }
    let width = (2 * w + 1) as usize;
    let center = w as usize;

    // Column 0: singletons, flag on the center row, then its transverse edges.
    let labels: Vec<u8> = (0..width as u8).collect();
    let flag = labels[center];
    let mut states = StripStates {
        len: width,
        states: BTreeMap::from([(pack(&labels, flag), 1.0)]),
    };
    for r in 1..width {
        states.apply_edge(r - 1, r, p);
    }

    let mut series = Vec::with_capacity(n_max as usize + 1);
    series.push(1.0);
    for _column in 1..=n_max {
        for r in 0..width {
            states.push_singleton(); // slot index = width (old rows r.. then new rows)
            if r > 0 {
                states.apply_edge(width - 1, width, p); // transverse edge in the new column
            }
            let prob = if r == center { p_line } else { p };
            states.apply_edge(0, width, prob); // longitudinal edge on row r
            states.retire_front();
        }
        series.push(states.sink_probability(center));
        let _ = labels; // labels only used for initialization
    }
    Ok(series)
}

/// Exact P{(0,0) <-> (n,0)} on the strip of half-width w.
pub fn strip_transfer_connectivity(
    p: f64,
    p_line: f64,
    w: u32,
    n: u32,
) -> Result<f64, OracleError> {
    Ok(strip_connectivity_series(p, p_line, w, n)?[n as usize])
}
