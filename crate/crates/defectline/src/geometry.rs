//! Geometric analysis of connection clusters: cone-points, their restriction
//! to the axis line, slab decomposition into irreducible components,
//! line-interaction counts, pivotal axis edges, and diamond overlaps.
//!
//! The cone used throughout is the 45-degree cone in the sup-norm: `u` lies
//! in the (two-sided) cone at `z` when the transverse distance is at most the
//! longitudinal one, `|u_perp - z_perp|_inf <= |u_1 - z_1|`. All membership
//! tests are exact integer comparisons.

use thiserror::Error;

use crate::estimate::HitAccumulator;
use crate::lattice::{
    Cluster, EdgeConfig, Explorer, LatticeBox, PercParams, sample_config,
};
use crate::rng::CounterRng;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("cluster does not contain required endpoint vertex {0}")]
    EndpointMissing(u32),
    #[error("vertex {0} is not a valid renewal marker for this cluster")]
    InvalidRenewal(u32),
    #[error("target point is not in the forward cone of the source")]
    NotInForwardCone,
    #[error("coordinate vectors must share a length of at least 2")]
    BadCoordinates,
    #[error("conditioning event too rare: {accepted} acceptances in {attempts} attempts")]
    AcceptanceTooLow { accepted: usize, attempts: u64 },
}

/// Whether `u` lies in the union of the forward and backward 45-degree cones
/// anchored at `z` (sup-norm transverse distance at most the longitudinal
/// distance; equality allowed, so `u = z` qualifies).
pub fn in_two_sided_cone(bbox: &LatticeBox, z: u32, u: u32) -> bool {
    let dx = (bbox.x_of(u) as i64 - bbox.x_of(z) as i64).abs();
    for j in 0..bbox.d() - 1 {
        if (bbox.transverse_of(u, j) - bbox.transverse_of(z, j)).abs() > dx {
            return false;
        }
    }
    true
}

/// All cone-points of a spanning cluster, in increasing longitudinal order.
///
/// A cone-point is a cluster vertex `z`, strictly between the axis endpoints
/// in first coordinate, such that every cluster vertex lies in the two-sided
/// cone at `z`. Computed in O(|C| d) with per-column prefix/suffix extrema of
/// `t_j ± x` (the cone inequalities split into one-sided comparisons against
/// those four families), exactly in integer arithmetic.
pub fn cone_points(bbox: &LatticeBox, cluster: &Cluster) -> Result<Vec<u32>, GeometryError> {
    let n = bbox.n() as usize;
    for endpoint in [bbox.axis_vertex(0), bbox.axis_vertex(bbox.n())] {
        if !cluster.contains_vertex(endpoint) {
            return Err(GeometryError::EndpointMissing(endpoint));
        }
    }
    let t = bbox.d() as usize - 1;
    const NEG: i64 = i64::MIN;

    // Per-column maxima of the four linear forms, then sweeps:
    //   forward  (u_1 > z_1): max(t_j - x) <= z_j - z_1, max(-t_j - x) <= -z_j - z_1
    //   backward (u_1 < z_1): max(t_j + x) <= z_j + z_1, max(x - t_j)  <= z_1 - z_j
    let mut col_count = vec![0u32; n + 1];
    let mut fwd_a = vec![NEG; (n + 1) * t]; // t_j - x
    let mut fwd_b = vec![NEG; (n + 1) * t]; // -t_j - x
    let mut bwd_a = vec![NEG; (n + 1) * t]; // t_j + x
    let mut bwd_b = vec![NEG; (n + 1) * t]; // x - t_j
    for &v in &cluster.vertices {
        let x = bbox.x_of(v) as usize;
        col_count[x] += 1;
        for j in 0..t {
            let tj = bbox.transverse_of(v, j as u32);
            let xi = x as i64;
            let idx = x * t + j;
            fwd_a[idx] = fwd_a[idx].max(tj - xi);
            fwd_b[idx] = fwd_b[idx].max(-tj - xi);
            bwd_a[idx] = bwd_a[idx].max(tj + xi);
            bwd_b[idx] = bwd_b[idx].max(xi - tj);
        }
    }
    // Suffix maxima for the forward families, prefix for the backward ones.
    for x in (0..n).rev() {
        for j in 0..t {
            fwd_a[x * t + j] = fwd_a[x * t + j].max(fwd_a[(x + 1) * t + j]);
            fwd_b[x * t + j] = fwd_b[x * t + j].max(fwd_b[(x + 1) * t + j]);
        }
    }
    for x in 1..=n {
        for j in 0..t {
            bwd_a[x * t + j] = bwd_a[x * t + j].max(bwd_a[(x - 1) * t + j]);
            bwd_b[x * t + j] = bwd_b[x * t + j].max(bwd_b[(x - 1) * t + j]);
        }
    }

    let mut out: Vec<u32> = Vec::new();
    'cand: for &z in &cluster.vertices {
        let x = bbox.x_of(z) as usize;
        if x == 0 || x == n || col_count[x] != 1 {
            continue;
        }
        let xi = x as i64;
        for j in 0..t {
            let zj = bbox.transverse_of(z, j as u32);
            if fwd_a[(x + 1) * t + j] > zj - xi
                || fwd_b[(x + 1) * t + j] > -zj - xi
                || bwd_a[(x - 1) * t + j] > zj + xi
                || bwd_b[(x - 1) * t + j] > xi - zj
            {
                continue 'cand;
            }
        }
        out.push(z);
    }
    out.sort_by_key(|&z| bbox.x_of(z));
    Ok(out)
}

/// Cone-points with zero transverse part: the renewal markers on the line.
pub fn cone_renewals_on_line(
    bbox: &LatticeBox,
    cluster: &Cluster,
) -> Result<Vec<u32>, GeometryError> {
    Ok(cone_points(bbox, cluster)?
        .into_iter()
        .filter(|&z| bbox.transverse_sup(z) == 0)
        .collect())
}

/// Slab decomposition of a spanning cluster at its renewal markers: a
/// backward piece, the irreducible components between consecutive markers,
/// and a forward piece. Vertex sets of adjacent pieces share exactly the
/// marker that separates them; edges are partitioned disjointly (assigned by
/// the smaller longitudinal endpoint), so concatenation reproduces the
/// cluster exactly.
#[derive(Debug, Clone)]
pub struct ClusterDecomposition {
    pub backward: Cluster,
    pub components: Vec<Cluster>,
    pub forward: Cluster,
    /// The renewal markers, in increasing longitudinal order.
    pub renewals: Vec<u32>,
    /// True when no markers were given: the whole cluster sits in the
    /// backward piece and the decomposition carries no components.
    pub degenerate: bool,
}

impl ClusterDecomposition {
    /// Displacement vectors between consecutive renewal markers
    /// (first coordinate, then the transverse ones).
    pub fn displacements(&self, bbox: &LatticeBox) -> Vec<Vec<i64>> {
        self.renewals
            .windows(2)
            .map(|w| {
                let mut v = Vec::with_capacity(bbox.d() as usize);
                v.push(bbox.x_of(w[1]) as i64 - bbox.x_of(w[0]) as i64);
                for j in 0..bbox.d() - 1 {
                    v.push(bbox.transverse_of(w[1], j) - bbox.transverse_of(w[0], j));
                }
                v
            })
            .collect()
    }

    /// Union of all pieces: vertex sets merged (markers deduplicated), edge
    /// sets concatenated. Equals the decomposed cluster exactly.
    pub fn concatenate(&self) -> Cluster {
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        for piece in std::iter::once(&self.backward)
            .chain(self.components.iter())
            .chain(std::iter::once(&self.forward))
        {
            vertices.extend_from_slice(&piece.vertices);
            edges.extend_from_slice(&piece.edges);
        }
        vertices.sort_unstable();
        vertices.dedup();
        edges.sort_unstable();
        Cluster { vertices, edges }
    }
}

/// Splits `cluster` at the given renewal markers. Markers must be cone-points
/// of the cluster in strictly increasing longitudinal order; an empty list
/// yields the flagged degenerate decomposition.
pub fn irreducible_decomposition(
    bbox: &LatticeBox,
    cluster: &Cluster,
    renewals: &[u32],
) -> Result<ClusterDecomposition, GeometryError> {
    let cones = cone_points(bbox, cluster)?;
    for w in renewals.windows(2) {
        if bbox.x_of(w[1]) <= bbox.x_of(w[0]) {
            return Err(GeometryError::InvalidRenewal(w[1]));
        }
    }
    for &z in renewals {
        if !cones.contains(&z) {
            return Err(GeometryError::InvalidRenewal(z));
        }
    }

    if renewals.is_empty() {
        return Ok(ClusterDecomposition {
            backward: cluster.clone(),
            components: Vec::new(),
            forward: Cluster {
                vertices: Vec::new(),
                edges: Vec::new(),
            },
            renewals: Vec::new(),
            degenerate: true,
        });
    }

    let cuts: Vec<u32> = renewals.iter().map(|&z| bbox.x_of(z)).collect();
    // Piece k spans columns [lo_k, hi_k]; vertices filter by closed range
    // (markers land in two pieces), edges by half-open range on the smaller
    // endpoint (a cone-point's column holds no other cluster vertex, so every
    // edge lands in exactly one piece).
    let piece_count = cuts.len() + 1;
    let lo = |k: usize| if k == 0 { 0 } else { cuts[k - 1] };
    let hi = |k: usize| {
        if k == piece_count - 1 {
            bbox.n()
        } else {
            cuts[k]
        }
    };
    let mut pieces: Vec<Cluster> = (0..piece_count)
        .map(|_| Cluster {
            vertices: Vec::new(),
            edges: Vec::new(),
        })
        .collect();
    for &v in &cluster.vertices {
        let x = bbox.x_of(v);
        for k in 0..piece_count {
            if lo(k) <= x && x <= hi(k) {
                pieces[k].vertices.push(v);
            }
        }
    }
    for &e in &cluster.edges {
        let (u, v) = bbox.endpoints(e);
        let x = bbox.x_of(u).min(bbox.x_of(v));
        // Half-open: piece k owns edge keys in [lo_k, hi_k), the last piece
        // also owns keys at its upper column.
        let k = match cuts.iter().position(|&c| x < c) {
            Some(k) => k,
            None => piece_count - 1,
        };
        pieces[k].edges.push(e);
    }
    for piece in &mut pieces {
        piece.vertices.sort_unstable();
        piece.edges.sort_unstable();
    }

    let forward = pieces.pop().unwrap();
    let backward = pieces.remove(0);
    Ok(ClusterDecomposition {
        backward,
        components: pieces,
        forward,
        renewals: renewals.to_vec(),
        degenerate: false,
    })
}

/// Line-interaction statistics of a cluster inside its box: open axis edges
/// belonging to the cluster, closed axis edges touching it, the induced
/// change-of-measure exponent, and the longitudinal span of the cluster's
/// line sites.
#[derive(Debug, Clone, PartialEq)]
pub struct LineStats {
    pub edges_on_line: u32,
    pub closed_boundary_on_line: u32,
    /// `edges_on_line * ln(p_line/p) + closed_boundary_on_line *
    /// ln((1-p_line)/(1-p))`; zero counts contribute zero even at extreme
    /// probabilities.
    pub interaction: f64,
    /// Leftmost and rightmost longitudinal coordinates of the cluster's line
    /// sites, when it touches the line at all.
    pub span: Option<(u32, u32)>,
}

pub fn line_interaction_stats(
    cluster: &Cluster,
    config: &EdgeConfig,
    params: &PercParams,
) -> LineStats {
    let bbox = config.bbox();
    let mut edges_on_line = 0u32;
    let mut closed_boundary = 0u32;
    for &e in bbox.axis_edges() {
        if config.is_open(e) {
            if cluster.contains_edge(e) {
                edges_on_line += 1;
            }
        } else {
            let (u, v) = bbox.endpoints(e);
            if cluster.contains_vertex(u) || cluster.contains_vertex(v) {
                closed_boundary += 1;
            }
        }
    }
    let mut span: Option<(u32, u32)> = None;
    for &v in &cluster.vertices {
        if bbox.transverse_sup(v) == 0 {
            let x = bbox.x_of(v);
            span = Some(match span {
                None => (x, x),
                Some((a, b)) => (a.min(x), b.max(x)),
            });
        }
    }
    let attract = if edges_on_line == 0 {
        0.0
    } else {
        edges_on_line as f64 * (params.p_line / params.p).ln()
    };
    let repel = if closed_boundary == 0 {
        0.0
    } else {
        closed_boundary as f64 * ((1.0 - params.p_line) / (1.0 - params.p)).ln()
    };
    LineStats {
        edges_on_line,
        closed_boundary_on_line: closed_boundary,
        interaction: attract + repel,
        span,
    }
}

/// Axis edges whose single flip changes the event {x <-> y}, by
/// flip-and-requery: each candidate is forced open and forced closed and the
/// two connectivity verdicts compared.
pub fn pivotal_edges_on_line(config: &EdgeConfig, x: u32, y: u32) -> Vec<u32> {
    let bbox = config.bbox();
    let mut explorer = Explorer::new(bbox);
    let mut out = Vec::new();
    for &e in bbox.axis_edges() {
        let opened = explorer.connected_with(bbox, x, y, |f| f == e || config.is_open(f));
        let closed = explorer.connected_with(bbox, x, y, |f| f != e && config.is_open(f));
        if opened != closed {
            out.push(e);
        }
    }
    out
}

/// Number of axis edges inside the diamond spanned by `z` (forward cone) and
/// `z2` (backward cone). Closed form: the line sites inside the diamond are
/// exactly `z_1 + |z_perp|_inf <= k <= z2_1 - |z2_perp|_inf`.
///
/// Errors unless `z2 - z` lies in the forward cone.
pub fn diamond_line_overlap(z: &[i64], z2: &[i64]) -> Result<u64, GeometryError> {
    if z.len() < 2 || z.len() != z2.len() {
        return Err(GeometryError::BadCoordinates);
    }
    let gap = z2[0] - z[0];
    let sup = |v: &[i64]| v[1..].iter().map(|c| c.abs()).max().unwrap();
    if gap < sup(&z2.iter().zip(z).map(|(a, b)| a - b).collect::<Vec<i64>>()) {
        return Err(GeometryError::NotInForwardCone);
    }
    let lo = z[0] + sup(z);
    let hi = z2[0] - sup(z2);
    Ok((hi - lo).max(0) as u64)
}

/// One accepted sample of the conditioned cluster measure: the replica index
/// that produced it, the seed that regenerates its full configuration, and
/// the cluster of the left axis endpoint.
#[derive(Debug, Clone)]
pub struct ConditionedSample {
    pub replica: u64,
    pub config_seed: u64,
    pub cluster: Cluster,
}

impl ConditionedSample {
    /// Rebuilds the full edge configuration this sample was drawn from.
    pub fn config<'a>(&self, bbox: &'a LatticeBox, params: &PercParams) -> EdgeConfig<'a> {
        sample_config(bbox, params, self.config_seed)
    }
}

/// Outcome of conditioned rejection sampling, including the acceptance tally
/// for rate diagnostics.
#[derive(Debug)]
pub struct ConditionedBatch {
    pub samples: Vec<ConditionedSample>,
    pub acceptance: HitAccumulator,
}

/// Draws clusters conditioned on {0 <-> n e1} by rejection: replicas are
/// tested lazily in index order and accepted ones materialized. Deterministic
/// given the seed. Errors when `max_attempts` replicas do not yield `count`
/// acceptances.
pub fn conditioned_cluster_samples(
    bbox: &LatticeBox,
    params: &PercParams,
    count: usize,
    seed: u64,
    max_attempts: u64,
) -> Result<ConditionedBatch, GeometryError> {
    let root = CounterRng::new(seed);
    let src = bbox.axis_vertex(0);
    let dst = bbox.axis_vertex(bbox.n());
    let mut explorer = Explorer::new(bbox);
    let mut samples = Vec::with_capacity(count);
    let mut acceptance = HitAccumulator::new();
    let mut attempts = 0u64;
    while samples.len() < count && attempts < max_attempts {
        let stream = root.substream(attempts);
        let hit = explorer.connected_with(bbox, src, dst, |e| {
            stream.uniform_at(e as u64) < bbox.edge_probability(params, e)
        });
        acceptance.push(hit);
        if hit {
            let cluster = explorer.cluster_with(bbox, src, |e| {
                stream.uniform_at(e as u64) < bbox.edge_probability(params, e)
            });
            samples.push(ConditionedSample {
                replica: attempts,
                config_seed: root.value_at(attempts),
                cluster,
            });
        }
        attempts += 1;
    }
    if samples.len() < count {
        return Err(GeometryError::AcceptanceTooLow {
            accepted: samples.len(),
            attempts,
        });
    }
    Ok(ConditionedBatch {
        samples,
        acceptance,
    })
}

/// Least-squares slope of the empirical log-survival function of positive
/// integer observations: fits `ln P(X >= t)` against `t` over the observed
/// support. `None` with fewer than two usable levels.
pub fn log_survival_slope(values: &[u64]) -> Option<f64> {
    let max = *values.iter().max()?;
    if max == 0 {
        return None;
    }
    let n = values.len() as f64;
    let mut pts = Vec::new();
    for t in 1..=max {
        let surv = values.iter().filter(|&&v| v >= t).count() as f64 / n;
        if surv > 0.0 {
            pts.push((t as f64, surv.ln()));
        }
    }
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{cluster_of, connected, default_half_width, LatticeBox};
    use crate::numeric::Neumaier;
    use crate::oracle::enumerate_connectivity;
    use crate::renewal::renewal_limit_check;

    /// Direct double-loop reference for the cone-point set.
    fn cone_points_brute(bbox: &LatticeBox, cluster: &Cluster) -> Vec<u32> {
        let n = bbox.n();
        let mut out: Vec<u32> = cluster
            .vertices
            .iter()
            .copied()
            .filter(|&z| {
                let x = bbox.x_of(z);
                x > 0
                    && x < n
                    && cluster
                        .vertices
                        .iter()
                        .all(|&u| in_two_sided_cone(bbox, z, u))
            })
            .collect();
        out.sort_by_key(|&z| bbox.x_of(z));
        out
    }

    /// Open exactly the listed edges on a fresh config.
    fn config_with_open<'a>(bbox: &'a LatticeBox, open: &[u32]) -> EdgeConfig<'a> {
        let mut cfg = EdgeConfig::closed(bbox, 0);
        for &e in open {
            cfg.set(e, true);
        }
        cfg
    }

    fn axis_path_edges(bbox: &LatticeBox) -> Vec<u32> {
        bbox.axis_edges().to_vec()
    }

    #[test]
    fn straight_segment_has_all_interior_cone_points() {
        let bbox = LatticeBox::new(2, 6, 2).unwrap();
        let cfg = config_with_open(&bbox, &axis_path_edges(&bbox));
        let cluster = cluster_of(&cfg, bbox.axis_vertex(0));
        let cones = cone_points(&bbox, &cluster).unwrap();
        let expect: Vec<u32> = (1..6).map(|x| bbox.axis_vertex(x)).collect();
        assert_eq!(cones, expect);
        assert_eq!(cone_renewals_on_line(&bbox, &cluster).unwrap(), expect);
    }

    #[test]
    fn transverse_arm_shades_its_column() {
        // Axis segment plus one open transverse edge at column 3: the
        // off-axis vertex breaks the cone property exactly at column 3.
        let bbox = LatticeBox::new(2, 6, 2).unwrap();
        let mut open = axis_path_edges(&bbox);
        let arm = bbox.edge_id(bbox.axis_vertex(3), 1).unwrap();
        open.push(arm);
        let cfg = config_with_open(&bbox, &open);
        let cluster = cluster_of(&cfg, bbox.axis_vertex(0));
        assert_eq!(cluster.vertices.len(), 8);
        let cones = cone_points(&bbox, &cluster).unwrap();
        let expect: Vec<u32> = (1..6)
            .filter(|&x| x != 3)
            .map(|x| bbox.axis_vertex(x))
            .collect();
        assert_eq!(cones, expect);
        assert_eq!(cones, cone_points_brute(&bbox, &cluster));
    }

    #[test]
    fn cone_points_match_brute_force_on_sampled_clusters() {
        for (d, n, w, p, pl, seeds) in [
            (2u32, 6u32, 3u32, 0.55f64, 0.8f64, 60u64),
            (2, 8, 4, 0.5, 0.9, 60),
            (3, 4, 2, 0.35, 0.8, 60),
        ] {
            let bbox = LatticeBox::new(d, n, w).unwrap();
            let params = PercParams::new(d, p, pl).unwrap();
            let mut checked = 0;
            for seed in 0..seeds {
                let cfg = sample_config(&bbox, &params, 0xC0FFEE + seed);
                if !connected(&cfg, bbox.axis_vertex(0), bbox.axis_vertex(n)) {
                    continue;
                }
                let cluster = cluster_of(&cfg, bbox.axis_vertex(0));
                let fast = cone_points(&bbox, &cluster).unwrap();
                assert_eq!(fast, cone_points_brute(&bbox, &cluster));
                checked += 1;
            }
            assert!(checked >= 10, "too few spanning samples at d={d}");
        }
    }

    #[test]
    fn cone_points_require_spanning_endpoints() {
        let bbox = LatticeBox::new(2, 4, 1).unwrap();
        let cfg = config_with_open(&bbox, &bbox.axis_edges()[..2]);
        let cluster = cluster_of(&cfg, bbox.axis_vertex(0));
        assert!(matches!(
            cone_points(&bbox, &cluster),
            Err(GeometryError::EndpointMissing(_))
        ));
    }

    #[test]
    fn straight_segment_decomposes_into_single_edges() {
        let bbox = LatticeBox::new(2, 6, 1).unwrap();
        let cfg = config_with_open(&bbox, &axis_path_edges(&bbox));
        let cluster = cluster_of(&cfg, bbox.axis_vertex(0));
        let renewals = cone_renewals_on_line(&bbox, &cluster).unwrap();
        let dec = irreducible_decomposition(&bbox, &cluster, &renewals).unwrap();
        assert!(!dec.degenerate);
        assert_eq!(dec.backward.edges.len(), 1);
        assert_eq!(dec.forward.edges.len(), 1);
        assert_eq!(dec.components.len(), 4);
        for c in &dec.components {
            assert_eq!(c.edges.len(), 1);
            assert_eq!(c.vertices.len(), 2);
        }
        for v in dec.displacements(&bbox) {
            assert_eq!(v, vec![1, 0]);
        }
        let back = dec.concatenate();
        assert_eq!(back.vertices, cluster.vertices);
        assert_eq!(back.edges, cluster.edges);
    }

    #[test]
    fn empty_renewal_list_gives_flagged_degenerate_decomposition() {
        let bbox = LatticeBox::new(2, 4, 1).unwrap();
        let cfg = config_with_open(&bbox, &axis_path_edges(&bbox));
        let cluster = cluster_of(&cfg, bbox.axis_vertex(0));
        let dec = irreducible_decomposition(&bbox, &cluster, &[]).unwrap();
        assert!(dec.degenerate);
        assert!(dec.components.is_empty());
        assert!(dec.forward.vertices.is_empty());
        assert_eq!(dec.backward.vertices, cluster.vertices);
        assert_eq!(dec.concatenate().edges, cluster.edges);
    }

    #[test]
    fn decomposition_rejects_bad_markers() {
        let bbox = LatticeBox::new(2, 6, 2).unwrap();
        let mut open = axis_path_edges(&bbox);
        let arm = bbox.edge_id(bbox.axis_vertex(3), 1).unwrap();
        open.push(arm);
        let cfg = config_with_open(&bbox, &open);
        let cluster = cluster_of(&cfg, bbox.axis_vertex(0));
        // Column 3 is shaded, so its line vertex is not a cone-point.
        let bad = bbox.axis_vertex(3);
        assert_eq!(
            irreducible_decomposition(&bbox, &cluster, &[bad]).unwrap_err(),
            GeometryError::InvalidRenewal(bad)
        );
        // Decreasing order is rejected too.
        let good: Vec<u32> = [bbox.axis_vertex(2), bbox.axis_vertex(1)].to_vec();
        assert_eq!(
            irreducible_decomposition(&bbox, &cluster, &good).unwrap_err(),
            GeometryError::InvalidRenewal(bbox.axis_vertex(1))
        );
    }

    #[test]
    fn decomposition_round_trips_on_sampled_clusters() {
        let bbox = LatticeBox::new(2, 8, 4).unwrap();
        let params = PercParams::new(2, 0.55, 0.85).unwrap();
        let mut checked = 0;
        for seed in 0..80u64 {
            let cfg = sample_config(&bbox, &params, 7_000 + seed);
            if !connected(&cfg, bbox.axis_vertex(0), bbox.axis_vertex(8)) {
                continue;
            }
            let cluster = cluster_of(&cfg, bbox.axis_vertex(0));
            let renewals = cone_renewals_on_line(&bbox, &cluster).unwrap();
            let dec = irreducible_decomposition(&bbox, &cluster, &renewals).unwrap();
            let back = dec.concatenate();
            assert_eq!(back.vertices, cluster.vertices);
            assert_eq!(back.edges, cluster.edges);
            // Edge sets across pieces are disjoint.
            let total: usize = std::iter::once(&dec.backward)
                .chain(dec.components.iter())
                .chain(std::iter::once(&dec.forward))
                .map(|piece| piece.edges.len())
                .sum();
            assert_eq!(total, cluster.edges.len());
            checked += 1;
        }
        assert!(checked >= 15);
    }

    #[test]
    fn renewals_are_cone_points_with_zero_transverse_part() {
        let bbox = LatticeBox::new(2, 8, 4).unwrap();
        let params = PercParams::new(2, 0.5, 0.9).unwrap();
        for seed in 0..40u64 {
            let cfg = sample_config(&bbox, &params, 90_000 + seed);
            if !connected(&cfg, bbox.axis_vertex(0), bbox.axis_vertex(8)) {
                continue;
            }
            let cluster = cluster_of(&cfg, bbox.axis_vertex(0));
            let cones = cone_points(&bbox, &cluster).unwrap();
            let renewals = cone_renewals_on_line(&bbox, &cluster).unwrap();
            let mut it = cones.iter();
            for z in &renewals {
                assert!(bbox.transverse_sup(*z) == 0);
                assert!(it.any(|c| c == z), "renewal missing from cone list");
            }
        }
    }

    #[test]
    fn single_line_edge_interaction() {
        let bbox = LatticeBox::new(2, 1, 0).unwrap();
        let params = PercParams::new(2, 0.4, 0.7).unwrap();
        let cfg = config_with_open(&bbox, &[bbox.axis_edges()[0]]);
        let cluster = cluster_of(&cfg, bbox.axis_vertex(0));
        let stats = line_interaction_stats(&cluster, &cfg, &params);
        assert_eq!(stats.edges_on_line, 1);
        assert_eq!(stats.closed_boundary_on_line, 0);
        assert!((stats.interaction - (0.7f64 / 0.4).ln()).abs() <= 1e-15);
        assert_eq!(stats.span, Some((0, 1)));
    }

    #[test]
    fn equal_probabilities_give_zero_interaction() {
        let bbox = LatticeBox::new(2, 3, 1).unwrap();
        let params = PercParams::new(2, 0.45, 0.45).unwrap();
        for seed in 0..20u64 {
            let cfg = sample_config(&bbox, &params, seed);
            let cluster = cluster_of(&cfg, bbox.axis_vertex(0));
            let stats = line_interaction_stats(&cluster, &cfg, &params);
            assert_eq!(stats.interaction, 0.0);
        }
    }

    #[test]
    fn interaction_reweighting_reproduces_defect_connectivity() {
        // Sum over all configurations under the homogeneous measure, each
        // weighted by exp(interaction): must reproduce the exactly enumerated
        // defect-line connectivity.
        let bbox = LatticeBox::new(2, 2, 1).unwrap();
        let bulk = PercParams::new(2, 0.4, 0.4).unwrap();
        let defect = PercParams::new(2, 0.4, 0.7).unwrap();
        let (x, y) = (bbox.axis_vertex(0), bbox.axis_vertex(2));
        let m = bbox.edge_count();
        let mut total = Neumaier::new();
        for mask in 0u32..(1 << m) {
            let mut cfg = EdgeConfig::closed(&bbox, 0);
            let mut weight = 1.0f64;
            for e in 0..m {
                let open = mask >> e & 1 == 1;
                cfg.set(e, open);
                weight *= if open { bulk.p } else { 1.0 - bulk.p };
            }
            if !connected(&cfg, x, y) {
                continue;
            }
            let cluster = cluster_of(&cfg, x);
            let stats = line_interaction_stats(&cluster, &cfg, &defect);
            total.add(weight * stats.interaction.exp());
        }
        let exact = enumerate_connectivity(&bbox, &defect, x, y).unwrap();
        assert!(
            (total.total() - exact).abs() <= 1e-12,
            "{} vs {exact}",
            total.total()
        );
    }

    #[test]
    fn open_chain_is_entirely_pivotal() {
        let bbox = LatticeBox::new(2, 5, 1).unwrap();
        let cfg = config_with_open(&bbox, &axis_path_edges(&bbox));
        let piv = pivotal_edges_on_line(&cfg, bbox.axis_vertex(0), bbox.axis_vertex(5));
        assert_eq!(piv, bbox.axis_edges().to_vec());
    }

    #[test]
    fn bypass_removes_pivotality() {
        // Open the axis chain and a parallel dodge around edge (2,3): up at
        // column 2, across at height 1, down at column 3.
        let bbox = LatticeBox::new(2, 5, 1).unwrap();
        let mut open = axis_path_edges(&bbox);
        let up = bbox.edge_id(bbox.axis_vertex(2), 1).unwrap();
        let off2 = bbox.vertex_id(2, &[1]).unwrap();
        let across = bbox.edge_id(off2, 0).unwrap();
        let off3 = bbox.vertex_id(3, &[1]).unwrap();
        let down = bbox.edge_id(bbox.axis_vertex(3), 1).unwrap();
        assert_eq!(bbox.endpoints(across).1, off3);
        open.extend([up, across, down]);
        let cfg = config_with_open(&bbox, &open);
        let piv = pivotal_edges_on_line(&cfg, bbox.axis_vertex(0), bbox.axis_vertex(5));
        let dodged = bbox.axis_edges()[2];
        assert!(!piv.contains(&dodged), "bypassed edge still pivotal");
        for &e in &bbox.axis_edges()[..2] {
            assert!(piv.contains(&e));
        }
    }

    #[test]
    fn cone_renewals_have_open_pivotal_incident_line_edges() {
        // At a cone renewal the whole cluster pinches to one vertex, so both
        // incident axis edges must be open and each must be pivotal.
        let bbox = LatticeBox::new(2, 6, 3).unwrap();
        let params = PercParams::new(2, 0.35, 0.9).unwrap();
        let (x, y) = (bbox.axis_vertex(0), bbox.axis_vertex(6));
        let mut checked = 0;
        for seed in 0..200u64 {
            let cfg = sample_config(&bbox, &params, 31_000 + seed);
            if !connected(&cfg, x, y) {
                continue;
            }
            let cluster = cluster_of(&cfg, x);
            let renewals = cone_renewals_on_line(&bbox, &cluster).unwrap();
            if renewals.is_empty() {
                continue;
            }
            let piv = pivotal_edges_on_line(&cfg, x, y);
            for &z in &renewals {
                let k = bbox.x_of(z);
                let left = bbox.axis_edges()[k as usize - 1];
                let right = bbox.axis_edges()[k as usize];
                assert!(cfg.is_open(left) && cfg.is_open(right));
                assert!(piv.contains(&left) && piv.contains(&right));
            }
            checked += 1;
        }
        assert!(checked >= 10);
    }

    #[test]
    fn diamond_overlap_on_line_counts_gap_edges() {
        assert_eq!(diamond_line_overlap(&[0, 0], &[7, 0]).unwrap(), 7);
        assert_eq!(diamond_line_overlap(&[3, 0, 0], &[3, 0, 0]).unwrap(), 0);
    }

    #[test]
    fn tall_anchor_misses_the_line() {
        // Both anchors hang high: their cones only meet above the line, so
        // the diamond contains no axis edge despite a wide longitudinal gap.
        assert_eq!(diamond_line_overlap(&[0, 5], &[8, 4]).unwrap(), 0);
    }

    #[test]
    fn diamond_overlap_matches_lattice_scan_and_bound() {
        let rng = CounterRng::new(0xD1A);
        let mut k = 0u64;
        let mut draw = |lo: i64, hi: i64| {
            let span = (hi - lo + 1) as u64;
            let v = lo + (rng.value_at(k) % span) as i64;
            k += 1;
            v
        };
        for _ in 0..200 {
            let z = [draw(-5, 5), draw(-6, 6), draw(-6, 6)];
            let gap = draw(0, 12);
            // Pick z2 inside the forward cone of z.
            let z2 = [
                z[0] + gap,
                z[1] + draw(-gap, gap),
                z[2] + draw(-gap, gap),
            ];
            let count = diamond_line_overlap(&z, &z2).unwrap();

            // Brute scan: line sites k with both cone memberships, edges
            // between consecutive ones.
            let zsup = z[1].abs().max(z[2].abs());
            let z2sup = z2[1].abs().max(z2[2].abs());
            let mut sites = 0u64;
            for site in (z[0] - 1)..=(z2[0] + 1) {
                let fwd = site - z[0] >= zsup;
                let bwd = z2[0] - site >= z2sup;
                if fwd && bwd {
                    sites += 1;
                }
            }
            assert_eq!(count, sites.saturating_sub(1), "z={z:?} z2={z2:?}");

            // Tail bound: never more than the gap, and zero when the source
            // hangs outside its own forward reach.
            assert!(count <= gap as u64);
            if zsup > gap {
                assert_eq!(count, 0);
            }
        }
    }

    #[test]
    fn diamond_rejects_out_of_cone_targets() {
        assert_eq!(
            diamond_line_overlap(&[0, 0], &[2, 5]),
            Err(GeometryError::NotInForwardCone)
        );
        assert_eq!(
            diamond_line_overlap(&[0, 0], &[2]),
            Err(GeometryError::BadCoordinates)
        );
    }

    #[test]
    fn conditioned_sampler_is_deterministic_and_conditioned() {
        let bbox = LatticeBox::new(2, 10, default_half_width(10)).unwrap();
        let params = PercParams::new(2, 0.45, 0.9).unwrap();
        let batch = conditioned_cluster_samples(&bbox, &params, 50, 0xFEED, 2_000_000).unwrap();
        assert_eq!(batch.samples.len(), 50);
        assert_eq!(batch.acceptance.hits, 50);
        let (src, dst) = (bbox.axis_vertex(0), bbox.axis_vertex(10));
        for s in &batch.samples {
            assert!(s.cluster.contains_vertex(src) && s.cluster.contains_vertex(dst));
        }
        // Replica indices strictly increase and the config seed reproduces
        // the cluster exactly.
        for w in batch.samples.windows(2) {
            assert!(w[0].replica < w[1].replica);
        }
        let probe = &batch.samples[13];
        let cfg = probe.config(&bbox, &params);
        let again = cluster_of(&cfg, src);
        assert_eq!(again.vertices, probe.cluster.vertices);
        assert_eq!(again.edges, probe.cluster.edges);

        let rerun = conditioned_cluster_samples(&bbox, &params, 50, 0xFEED, 2_000_000).unwrap();
        assert_eq!(rerun.samples[13].replica, probe.replica);
    }

    #[test]
    fn conditioned_sampler_reports_rare_events() {
        let bbox = LatticeBox::new(2, 10, 5).unwrap();
        let params = PercParams::new(2, 0.05, 0.05).unwrap();
        let err = conditioned_cluster_samples(&bbox, &params, 100, 3, 500).unwrap_err();
        assert!(matches!(err, GeometryError::AcceptanceTooLow { attempts: 500, .. }));
    }

    #[test]
    fn pinned_samples_have_decaying_increments_and_renewal_consistency() {
        // Conditioned on spanning at a strong line bias, renewal markers are
        // dense (deeply subcritical bulk keeps side branches short), the gap
        // law has an exponentially decaying tail, and the normalized
        // empirical gap law is a healthy renewal kernel: its generating
        // function hits one at radius one and the associated renewal
        // sequence flattens to the reciprocal mean.
        let bbox = LatticeBox::new(2, 24, 12).unwrap();
        let params = PercParams::new(2, 0.3, 0.9).unwrap();
        let batch = conditioned_cluster_samples(&bbox, &params, 900, 0xACE, 5_000_000).unwrap();
        let mut gaps: Vec<u64> = Vec::new();
        for s in &batch.samples {
            let renewals = cone_renewals_on_line(&bbox, &s.cluster).unwrap();
            for w in renewals.windows(2) {
                gaps.push((bbox.x_of(w[1]) - bbox.x_of(w[0])) as u64);
            }
        }
        assert!(gaps.len() > 1_000, "only {} gaps", gaps.len());
        let mean = gaps.iter().sum::<u64>() as f64 / gaps.len() as f64;
        assert!(mean > 1.0 && mean < 8.0, "implausible mean gap {mean}");

        let slope = log_survival_slope(&gaps).unwrap();
        assert!(slope <= -0.2, "survival slope {slope} too shallow");

        // The conditioned increment law is itself the properly normalized
        // (tilted) kernel of the renewal picture, so it feeds the limit
        // check directly.
        let max_gap = *gaps.iter().max().unwrap() as usize;
        let mut hist = vec![0.0f64; max_gap];
        for &g in &gaps {
            hist[g as usize - 1] += 1.0;
        }
        let total: f64 = hist.iter().sum();
        let kernel: Vec<f64> = hist.iter().map(|c| c / total).collect();
        let check = renewal_limit_check(&kernel, 2_000).unwrap();
        assert!(
            (check.root.r - 1.0).abs() <= 1e-9,
            "empirical kernel root {} far from 1",
            check.root.r
        );
        assert!(check.deviation() <= 1e-6);
        assert!((check.limit - 1.0 / mean).abs() <= 1e-6 / mean);
    }
}
