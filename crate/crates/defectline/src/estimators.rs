//! Monte Carlo estimation of the axis two-point function and extraction of
//! the inverse correlation length.
//!
//! The estimators here are direct-frequency only: each replica evaluates the
//! connection indicator from its own counter-based stream, so estimates are
//! unbiased, reproducible from the seed alone, and independent of the worker
//! count (replica tallies are exact integers, merged commutatively). Decay
//! rates come from a weighted least-squares fit of `-log phat_n` against the
//! three-parameter model `xi * n + kappa * log n + c`, which keeps the
//! polynomial-correction exponent `kappa` an output of the fit rather than an
//! assumption.

use rayon::prelude::*;
use thiserror::Error;

use crate::estimate::{Estimate, HitAccumulator};
use crate::lattice::{
    default_half_width, Explorer, LatticeBox, LatticeError, PercParams,
};
use crate::numeric::Neumaier;
use crate::rng::CounterRng;

/// Replicas per scheduling chunk. Tallies are exact integers, so the pooled
/// result is identical for any chunk assignment; the fixed size only bounds
/// per-task latency.
const REPLICA_CHUNK: u64 = 65_536;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("need at least {need} distinct lengths with positive estimates, found {found}")]
    TooFewPoints { need: usize, found: usize },
    #[error("estimate must be positive to take logarithms, got {0}")]
    NonPositiveValue(f64),
    #[error("compared lengths must differ")]
    EmptyGap,
    #[error("singular design matrix in the decay fit")]
    SingularFit,
    #[error("gap-curve grid value {0} is not above the bulk probability")]
    GridNotAboveBulk(f64),
}

/// Connection indicator for one replica, evaluated lazily: only edges on the
/// frontier of the source cluster consume a uniform, and the verdict per
/// (replica, edge) equals what full-configuration sampling would produce.
pub fn replica_indicator(
    bbox: &LatticeBox,
    params: &PercParams,
    explorer: &mut Explorer,
    stream: &CounterRng,
    x: u32,
    y: u32,
) -> bool {
    explorer.connected_with(bbox, x, y, |e| {
        stream.uniform_at(e as u64) < bbox.edge_probability(params, e)
    })
}

/// Raw hit tally for the connection event {x <-> y} over `replicas`
/// independent replicas. Replica `r` draws its edge uniforms from the
/// substream at index `r` of the stream seeded by `seed`, so any partition of
/// the replica range across workers yields the same integers.
pub fn mc_connectivity_counts(
    bbox: &LatticeBox,
    params: &PercParams,
    x: u32,
    y: u32,
    replicas: u64,
    seed: u64,
) -> HitAccumulator {
    assert!(
        x < bbox.vertex_count() && y < bbox.vertex_count(),
        "endpoint outside the box"
    );
    let root = CounterRng::new(seed);
    let chunks = replicas.div_ceil(REPLICA_CHUNK) as usize;
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c as u64 * REPLICA_CHUNK;
            let hi = replicas.min(lo + REPLICA_CHUNK);
            let mut explorer = Explorer::new(bbox);
            let mut local = HitAccumulator::new();
            for r in lo..hi {
                let stream = root.substream(r);
                local.push(replica_indicator(bbox, params, &mut explorer, &stream, x, y));
            }
            local
        })
        .reduce(HitAccumulator::new, |mut a, b| {
            a.merge(&b);
            a
        })
}

/// Frequency estimate of P(x <-> y) with binomial standard error.
pub fn mc_connectivity(
    bbox: &LatticeBox,
    params: &PercParams,
    x: u32,
    y: u32,
    replicas: u64,
    seed: u64,
) -> Estimate {
    mc_connectivity_counts(bbox, params, x, y, replicas, seed).estimate(seed)
}

/// One length on a connectivity decay curve: raw counts plus the derived
/// frequency estimate.
#[derive(Debug, Clone)]
pub struct SeriesPoint {
    pub n: u32,
    pub hits: u64,
    pub replicas: u64,
    pub estimate: Estimate,
}

/// Scan configuration shared by the decay-curve estimators. The per-length
/// seed is derived from `seed` and `n` only, never from the probabilities, so
/// runs at different line probabilities reuse the same uniforms (common
/// random numbers) and coupled indicators are pointwise monotone.
#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub d: u32,
    pub p: f64,
    pub n_values: Vec<u32>,
    /// Transverse half-width; `None` applies the default rule per length.
    pub half_width: Option<u32>,
    pub replicas: u64,
    pub seed: u64,
}

impl ScanConfig {
    fn width_for(&self, n: u32) -> u32 {
        self.half_width.unwrap_or_else(|| default_half_width(n))
    }

    /// Seed for the length-`n` replica family (shared across probabilities).
    pub fn seed_for(&self, n: u32) -> u64 {
        CounterRng::new(self.seed).value_at(n as u64)
    }
}

/// Axis two-point estimates P(0 <-> n e1) for every length in the
/// configuration, at line probability `p_line`.
pub fn connectivity_series(
    cfg: &ScanConfig,
    p_line: f64,
) -> Result<Vec<SeriesPoint>, EstimatorError> {
    let params = PercParams::new(cfg.d, cfg.p, p_line)?;
    let mut out = Vec::with_capacity(cfg.n_values.len());
    for &n in &cfg.n_values {
        let bbox = LatticeBox::new(cfg.d, n, cfg.width_for(n))?;
        let seed = cfg.seed_for(n);
        let counts = mc_connectivity_counts(
            &bbox,
            &params,
            bbox.axis_vertex(0),
            bbox.axis_vertex(n),
            cfg.replicas,
            seed,
        );
        out.push(SeriesPoint {
            n,
            hits: counts.hits,
            replicas: counts.trials,
            estimate: counts.estimate(seed),
        });
    }
    Ok(out)
}

/// Result of the three-parameter decay fit `-log phat_n ~ xi n + kappa log n + c`.
#[derive(Debug, Clone)]
pub struct XiFit {
    pub xi_hat: f64,
    pub kappa_hat: f64,
    pub intercept: f64,
    pub xi_se: f64,
    pub kappa_se: f64,
    /// Covariance of (xi, kappa, intercept), from the weighted normal
    /// equations with the stated per-point variances.
    pub covariance: [[f64; 3]; 3],
    /// Smallest and largest length used.
    pub n_range: (u32, u32),
    /// Points that entered the fit, sorted by length.
    pub points: Vec<(u32, Estimate)>,
    /// Lengths censored because their estimate was zero (a warning for the
    /// caller to surface; zero counts are never log-transformed).
    pub dropped: Vec<u32>,
    /// Weighted sum of squared residuals and its degrees of freedom.
    pub chi2: f64,
    pub dof: u32,
}

/// Weighted least squares of `-log phat_n` on `[n, log n, 1]`.
///
/// Weights are the delta-method variances of `log phat`: `(stderr/phat)^2`.
/// A series of exact values (all stderr zero) falls back to unit weights; an
/// exact point inside a noisy series gets a variance floor tied to the
/// smallest observed noise so its influence stays finite. Zero estimates are
/// dropped (recorded in `dropped`), and at least four distinct surviving
/// lengths are required.
pub fn fit_xi(series: &[(u32, Estimate)]) -> Result<XiFit, EstimatorError> {
    let mut dropped = Vec::new();
    let mut pts: Vec<(u32, Estimate)> = Vec::new();
    for (n, est) in series {
        if est.value > 0.0 {
            pts.push((*n, est.clone()));
        } else {
            dropped.push(*n);
        }
    }
    pts.sort_by_key(|&(n, _)| n);
    let mut distinct = 0usize;
    for i in 0..pts.len() {
        if i == 0 || pts[i].0 != pts[i - 1].0 {
            distinct += 1;
        }
    }
    if distinct < 4 {
        return Err(EstimatorError::TooFewPoints {
            need: 4,
            found: distinct,
        });
    }

    let all_exact = pts.iter().all(|(_, e)| e.stderr == 0.0);
    let min_pos_var = pts
        .iter()
        .filter(|(_, e)| e.stderr > 0.0)
        .map(|(_, e)| (e.stderr / e.value).powi(2))
        .fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = pts
        .iter()
        .map(|(_, e)| {
            if all_exact {
                1.0
            } else if e.stderr > 0.0 {
                (e.value / e.stderr).powi(2)
            } else {
                1.0 / (min_pos_var * 1e-12)
            }
        })
        .collect();

    let ys: Vec<f64> = pts.iter().map(|(_, e)| -e.value.ln()).collect();
    let x1: Vec<f64> = pts.iter().map(|&(n, _)| n as f64).collect();
    let x2: Vec<f64> = pts.iter().map(|&(n, _)| (n as f64).ln()).collect();

    // Weighted means; centering the regressors makes the constant column
    // orthogonal, so the slopes come from a well-conditioned 2x2 system.
    let mut wsum = Neumaier::new();
    let mut m1 = Neumaier::new();
    let mut m2 = Neumaier::new();
    let mut my = Neumaier::new();
    for i in 0..pts.len() {
        wsum.add(weights[i]);
        m1.add(weights[i] * x1[i]);
        m2.add(weights[i] * x2[i]);
        my.add(weights[i] * ys[i]);
    }
    let wtot = wsum.total();
    let (xb1, xb2, yb) = (m1.total() / wtot, m2.total() / wtot, my.total() / wtot);

    let mut s11 = Neumaier::new();
    let mut s12 = Neumaier::new();
    let mut s22 = Neumaier::new();
    let mut b1 = Neumaier::new();
    let mut b2 = Neumaier::new();
    for i in 0..pts.len() {
        let (u1, u2, v) = (x1[i] - xb1, x2[i] - xb2, ys[i] - yb);
        s11.add(weights[i] * u1 * u1);
        s12.add(weights[i] * u1 * u2);
        s22.add(weights[i] * u2 * u2);
        b1.add(weights[i] * u1 * v);
        b2.add(weights[i] * u2 * v);
    }
    let (s11, s12, s22) = (s11.total(), s12.total(), s22.total());
    let det = s11 * s22 - s12 * s12;
    if !(det > 0.0) || det <= 1e-14 * s11 * s22 {
        return Err(EstimatorError::SingularFit);
    }
    let xi_hat = (s22 * b1.total() - s12 * b2.total()) / det;
    let kappa_hat = (s11 * b2.total() - s12 * b1.total()) / det;
    let intercept = yb - xi_hat * xb1 - kappa_hat * xb2;

    // Covariance of the slopes is the inverse 2x2 normal matrix; the
    // intercept terms follow from c = yb - xi xb1 - kappa xb2 with the
    // weighted mean independent of the centered slopes.
    let v11 = s22 / det;
    let v22 = s11 / det;
    let v12 = -s12 / det;
    let vc = 1.0 / wtot + xb1 * xb1 * v11 + xb2 * xb2 * v22 + 2.0 * xb1 * xb2 * v12;
    let v1c = -xb1 * v11 - xb2 * v12;
    let v2c = -xb1 * v12 - xb2 * v22;
    let covariance = [[v11, v12, v1c], [v12, v22, v2c], [v1c, v2c, vc]];

    let mut chi2 = Neumaier::new();
    for i in 0..pts.len() {
        let fitted = xi_hat * x1[i] + kappa_hat * x2[i] + intercept;
        let r = ys[i] - fitted;
        chi2.add(weights[i] * r * r);
    }

    Ok(XiFit {
        xi_hat,
        kappa_hat,
        intercept,
        xi_se: v11.max(0.0).sqrt(),
        kappa_se: v22.max(0.0).sqrt(),
        covariance,
        n_range: (pts.first().unwrap().0, pts.last().unwrap().0),
        points: pts,
        dropped,
        chi2: chi2.total(),
        dof: series.len().saturating_sub(3) as u32,
    })
}

/// Two-point decay-rate estimate from a single pair of lengths:
/// `(log p_n - log p_m) / (m - n)` with the delta-method standard error,
/// treating the two estimates as independent.
pub fn local_xi(p_n: &Estimate, p_m: &Estimate, gap: u32) -> Result<Estimate, EstimatorError> {
    if gap == 0 {
        return Err(EstimatorError::EmptyGap);
    }
    for e in [p_n, p_m] {
        if !(e.value > 0.0) {
            return Err(EstimatorError::NonPositiveValue(e.value));
        }
    }
    let g = gap as f64;
    let value = (p_n.value.ln() - p_m.value.ln()) / g;
    let rn = p_n.stderr / p_n.value;
    let rm = p_m.stderr / p_m.value;
    Ok(Estimate {
        value,
        stderr: (rn * rn + rm * rm).sqrt() / g,
        n_samples: p_n.n_samples.min(p_m.n_samples),
        seed: p_n.seed,
    })
}

/// One grid point of a line-probability scan.
#[derive(Debug)]
pub struct ScanRow {
    pub p_line: f64,
    pub points: Vec<SeriesPoint>,
    /// Per-point failures are recorded here and the scan continues.
    pub fit: Result<XiFit, EstimatorError>,
}

/// Decay-rate scan across a grid of line probabilities under common random
/// numbers: every grid point reuses the same per-(length, replica) uniforms,
/// so the estimated connectivities are pointwise non-increasing as the line
/// probability decreases — exactly, not statistically.
pub fn xi_scan(cfg: &ScanConfig, grid: &[f64]) -> Vec<ScanRow> {
    grid.iter()
        .map(|&p_line| match connectivity_series(cfg, p_line) {
            Ok(points) => {
                let series: Vec<(u32, Estimate)> =
                    points.iter().map(|p| (p.n, p.estimate.clone())).collect();
                ScanRow {
                    p_line,
                    points,
                    fit: fit_xi(&series),
                }
            }
            Err(e) => ScanRow {
                p_line,
                points: Vec::new(),
                fit: Err(e),
            },
        })
        .collect()
}

/// One row of a decay-gap curve at line probability above the bulk value.
#[derive(Debug, Clone)]
pub struct GapRow {
    pub p_line: f64,
    /// Excess of the line probability over the bulk one.
    pub delta: f64,
    /// Homogeneous rate minus the defect rate.
    pub gap: f64,
    pub joint_se: f64,
    /// Gaps statistically indistinguishable from zero are censored: reported,
    /// but excluded from the slope fit.
    pub censored: bool,
}

#[derive(Debug)]
pub struct GapCurve {
    /// Fit at the homogeneous point (line probability equal to bulk).
    pub base: XiFit,
    pub rows: Vec<GapRow>,
    /// Least-squares slope over uncensored rows: log(gap) against log(delta)
    /// in d = 2, against 1/delta in d >= 3. `None` with fewer than two
    /// uncensored rows.
    pub slope: Option<f64>,
}

/// How the decay-rate gap opens as the line probability rises above the bulk
/// value, under common random numbers with the homogeneous baseline.
pub fn gap_curve(cfg: &ScanConfig, grid_above: &[f64]) -> Result<GapCurve, EstimatorError> {
    for &p_line in grid_above {
        if p_line <= cfg.p {
            return Err(EstimatorError::GridNotAboveBulk(p_line));
        }
    }
    let base_points = connectivity_series(cfg, cfg.p)?;
    let base_series: Vec<(u32, Estimate)> = base_points
        .iter()
        .map(|p| (p.n, p.estimate.clone()))
        .collect();
    let base = fit_xi(&base_series)?;

    let mut rows = Vec::with_capacity(grid_above.len());
    for &p_line in grid_above {
        let points = connectivity_series(cfg, p_line)?;
        let series: Vec<(u32, Estimate)> =
            points.iter().map(|p| (p.n, p.estimate.clone())).collect();
        let fit = fit_xi(&series)?;
        let gap = base.xi_hat - fit.xi_hat;
        let joint_se = (base.xi_se * base.xi_se + fit.xi_se * fit.xi_se).sqrt();
        rows.push(GapRow {
            p_line,
            delta: p_line - cfg.p,
            gap,
            joint_se,
            censored: gap <= 2.0 * joint_se,
        });
    }

    let open: Vec<&GapRow> = rows.iter().filter(|r| !r.censored).collect();
    let slope = if open.len() >= 2 {
        let xs: Vec<f64> = open
            .iter()
            .map(|r| {
                if cfg.d == 2 {
                    r.delta.ln()
                } else {
                    1.0 / r.delta
                }
            })
            .collect();
        let ys: Vec<f64> = open.iter().map(|r| r.gap.ln()).collect();
        let xm = xs.iter().sum::<f64>() / xs.len() as f64;
        let ym = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
        let sxy: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum();
        if sxx > 0.0 {
            Some(sxy / sxx)
        } else {
            None
        }
    } else {
        None
    };

    Ok(GapCurve { base, rows, slope })
}

/// Isolated polynomial-correction exponent with a 95% confidence interval.
#[derive(Debug)]
pub struct PrefactorReport {
    pub kappa_hat: f64,
    pub kappa_se: f64,
    /// Normal-approximation 95% interval.
    pub ci: (f64, f64),
    pub fit: XiFit,
}

/// Discriminates polynomial-corrected from purely exponential decay: runs the
/// decay fit at one line probability and reports the log-length coefficient
/// with its confidence interval. Requires at least six distinct lengths.
pub fn prefactor_exponent(
    cfg: &ScanConfig,
    p_line: f64,
) -> Result<PrefactorReport, EstimatorError> {
    let mut distinct = cfg.n_values.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 6 {
        return Err(EstimatorError::TooFewPoints {
            need: 6,
            found: distinct.len(),
        });
    }
    let points = connectivity_series(cfg, p_line)?;
    let series: Vec<(u32, Estimate)> = points.iter().map(|p| (p.n, p.estimate.clone())).collect();
    let fit = fit_xi(&series)?;
    let half = 1.96 * fit.kappa_se;
    Ok(PrefactorReport {
        kappa_hat: fit.kappa_hat,
        kappa_se: fit.kappa_se,
        ci: (fit.kappa_hat - half, fit.kappa_hat + half),
        fit,
    })
}
