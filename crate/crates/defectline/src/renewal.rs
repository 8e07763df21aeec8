//! Renewal sequences, random-walk pinning, and the defect free-energy bound.
//!
//! Deterministic numerics: the renewal convolution and its tilted normal
//! form, exact simple-random-walk return laws, the pinned-walk partition
//! function and free energy, local-time statistics (exact recursions plus
//! Monte Carlo probes), and the polylogarithm root giving the defect bound
//! φ(ε).

use crate::estimate::Estimate;
use crate::numeric::{chunked_dot, Neumaier};
use crate::rng::CounterRng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RenewalError {
    #[error("weight b[{index}] = {value} is negative or not finite")]
    BadWeight { index: usize, value: f64 },
    #[error("all weights are zero; the generating function never reaches 1")]
    NoRoot,
    #[error("generating function stays below 1 up to s = {tried}; value there {value}")]
    RootNotBracketed { tried: f64, value: f64 },
    #[error("support indices of the positive weights share the factor {0}; the limit theorem needs an aperiodic support")]
    PeriodicSupport(u64),
    #[error("walk dimension must be 1 or 2, got {0}")]
    BadWalkDimension(u32),
    #[error("bound dimension must be 2 or 3, got {0}")]
    BadBoundDimension(u32),
    #[error("horizon {n} exceeds the return law horizon {horizon}")]
    HorizonExceeded { n: usize, horizon: usize },
    #[error("pinning parameter must be finite and >= 0, got {0}")]
    BadPinning(f64),
    #[error("epsilon must be finite and > 0, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("prefactor constant must be finite and > 0, got {0}")]
    BadConstant(f64),
    #[error("local-time fraction must lie in [0, 1), got {0}")]
    BadFraction(f64),
    #[error("partition function vanishes at horizon {0}; no path is compatible")]
    ZeroPartition(usize),
    #[error("root not certified at the truncation; the tilted law is undefined")]
    UncertifiedRoot,
    #[error("series for the bound did not converge within the term budget at s = {0}")]
    SeriesBudgetExceeded(f64),
}

fn validate_weights(b: &[f64]) -> Result<(), RenewalError> {
    for (index, &value) in b.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(RenewalError::BadWeight { index, value });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Renewal sequences and the limit theorem.
// ---------------------------------------------------------------------------

/// A renewal pair: part weights `b` (entry `k-1` weighs part size `k`) and the
/// solution of `a_n = sum_{j>=1} b_j a_{n-j}` with `a_0 = 1`.
#[derive(Debug, Clone)]
pub struct RenewalSequence {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

/// Solve the renewal recursion up to horizon `n` with compensated summation.
pub fn renewal_sequence(b: &[f64], n: usize) -> Result<RenewalSequence, RenewalError> {
    validate_weights(b)?;
    let mut a = Vec::with_capacity(n + 1);
    a.push(1.0);
    for m in 1..=n {
        let mut acc = Neumaier::new();
        for j in 1..=m.min(b.len()) {
            acc.add(b[j - 1] * a[m - j]);
        }
        a.push(acc.total());
    }
    Ok(RenewalSequence { b: b.to_vec(), a })
}

/// Root of the weight generating function: `r` with `B(r) = sum b_k r^k = 1`,
/// the tilted probability law `q_k = b_k r^k`, and its mean.
#[derive(Debug, Clone)]
pub struct RadiusRoot {
    pub r: f64,
    /// |B(r) - 1| at the returned point.
    pub residual: f64,
    /// `q[k-1] = b_k r^k`; sums to 1 up to the residual and any truncation.
    pub q: Vec<f64>,
    /// Mean part size under q.
    pub mean: f64,
}

/// Evaluate `B(s) = sum_k b_k s^k` (Horner form; monotone in s >= 0, and an
/// overflow saturates to +inf which still compares correctly against 1).
fn weight_generating_function(b: &[f64], s: f64) -> f64 {
    let mut acc = 0.0;
    for &w in b.iter().rev() {
        acc = acc * s + w;
    }
    acc * s
}

/// Find `r` with `B(r) = 1` by doubling then bisection to floating-point
/// resolution; of the final bracket endpoints, the one with the smaller
/// residual |B - 1| is returned (this lands exactly on representable roots).
pub fn radius_root(b: &[f64]) -> Result<RadiusRoot, RenewalError> {
    validate_weights(b)?;
    if b.iter().all(|&w| w == 0.0) {
        return Err(RenewalError::NoRoot);
    }
    let eval = |s: f64| weight_generating_function(b, s);
    let mut hi = 1.0f64;
    while eval(hi) < 1.0 {
        hi *= 2.0;
        if hi > 1e30 {
            return Err(RenewalError::RootNotBracketed {
                tried: hi,
                value: eval(hi),
            });
        }
    }
    let mut lo = 0.0f64;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eval(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (rl, rh) = ((eval(lo) - 1.0).abs(), (eval(hi) - 1.0).abs());
    let (r, residual) = if rl <= rh { (lo, rl) } else { (hi, rh) };

    let mut q = Vec::with_capacity(b.len());
    let mut rpow = 1.0f64; // r^k, resynced periodically against drift
    for (i, &w) in b.iter().enumerate() {
        let k = i + 1;
        rpow *= r;
        if k % 512 == 0 {
            rpow = r.powi(k as i32);
        }
        q.push(if w == 0.0 { 0.0 } else { w * rpow });
    }
    let mut mean = Neumaier::new();
    for (i, &qk) in q.iter().enumerate() {
        mean.add((i + 1) as f64 * qk);
    }
    Ok(RadiusRoot {
        r,
        residual,
        q,
        mean: mean.total(),
    })
}

/// The renewal limit theorem, checked constructively: the scaled sequence
/// `r^n a_n` (computed directly in tilted form, which stays bounded) against
/// its predicted limit `1 / sum_k k q_k`.
#[derive(Debug, Clone)]
pub struct RenewalLimitCheck {
    pub root: RadiusRoot,
    /// `scaled[n] = r^n a_n`, computed as the renewal sequence of q.
    pub scaled: Vec<f64>,
    pub limit: f64,
}

impl RenewalLimitCheck {
    /// Deviation from the limit at the horizon.
    pub fn deviation(&self) -> f64 {
        (self.scaled[self.scaled.len() - 1] - self.limit).abs()
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn renewal_limit_check(b: &[f64], n: usize) -> Result<RenewalLimitCheck, RenewalError> {
    let root = radius_root(b)?;
    let mut g = 0u64;
    for (i, &w) in b.iter().enumerate() {
        if w > 0.0 {
            g = gcd(g, (i + 1) as u64);
        }
    }
    if g > 1 {
        return Err(RenewalError::PeriodicSupport(g));
    }
    // Tilting can underflow the deep tail of q to zero; the recursion only
    // needs the positive support.
    let support = root.q.iter().rposition(|&x| x > 0.0).map_or(0, |i| i + 1);
    let mut scaled = Vec::with_capacity(n + 1);
    scaled.push(1.0);
    for m in 1..=n {
        let mut acc = Neumaier::new();
        for j in 1..=m.min(support) {
            acc.add(root.q[j - 1] * scaled[m - j]);
        }
        scaled.push(acc.total());
    }
    let limit = 1.0 / root.mean;
    Ok(RenewalLimitCheck {
        root,
        scaled,
        limit,
    })
}

// ---------------------------------------------------------------------------
// Simple-random-walk return laws.
// ---------------------------------------------------------------------------

/// First-return law of the simple random walk: `f[k]` is the probability the
/// first return to the origin happens at time k (zero for odd k), up to the
/// truncation horizon, with the remaining mass in `tail_mass`.
#[derive(Debug, Clone)]
pub struct ReturnLaw {
    pub d: u32,
    pub f: Vec<f64>,
    pub tail_mass: f64,
}

impl ReturnLaw {
    pub fn horizon(&self) -> usize {
        self.f.len() - 1
    }
}

/// Return probabilities `u_{2m} = P(X_{2m} = 0)` for m = 0..=half, exactly:
/// d=1 uses the central binomial ratio recurrence, d=2 its square (the two
/// diagonal coordinates of the planar walk are independent one-dimensional
/// walks).
fn return_probabilities(d: u32, half: usize) -> Vec<f64> {
    let mut u = Vec::with_capacity(half + 1);
    let mut c = 1.0f64; // 2^{-2m} C(2m, m)
    for m in 0..=half {
        if m > 0 {
            let k = (m - 1) as f64;
            c *= (2.0 * k + 1.0) / (2.0 * k + 2.0);
        }
        u.push(if d == 1 { c } else { c * c });
    }
    u
}

/// Build the first-return law by inverting the return-probability convolution
/// `u_n = sum_k f_k u_{n-k}` on the even sublattice.
pub fn first_return_law(d: u32, n_max: usize) -> Result<ReturnLaw, RenewalError> {
    if d != 1 && d != 2 {
        return Err(RenewalError::BadWalkDimension(d));
    }
    let half = n_max / 2;
    let u = return_probabilities(d, half);
    // urev[i] = u[half - i]; the convolution then reads both arrays forward.
    let urev: Vec<f64> = u.iter().rev().copied().collect();
    let mut fe = vec![0.0f64; half + 1]; // fe[m] = f_{2m}
    for m in 1..=half {
        let conv = chunked_dot(&fe[1..m], &urev[half - m + 1..half]);
        fe[m] = u[m] - conv;
    }
    let mut f = vec![0.0f64; n_max + 1];
    for m in 1..=half {
        f[2 * m] = fe[m];
    }
    let mut total = Neumaier::new();
    for &x in &fe[1..] {
        total.add(x);
    }
    Ok(ReturnLaw {
        d,
        f,
        tail_mass: (1.0 - total.total()).max(0.0),
    })
}

// ---------------------------------------------------------------------------
// Pinning: partition function, free energy, local time.
// ---------------------------------------------------------------------------

fn validate_pinning(eps: f64) -> Result<(), RenewalError> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(RenewalError::BadPinning(eps));
    }
    Ok(())
}

/// log(e^a + e^b) with -inf treated as an absent term.
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn log_weights(eps: f64, law: &ReturnLaw, n: usize) -> Result<Vec<f64>, RenewalError> {
    validate_pinning(eps)?;
    if n > law.horizon() {
        return Err(RenewalError::HorizonExceeded {
            n,
            horizon: law.horizon(),
        });
    }
    Ok(law.f[..=n]
        .iter()
        .map(|&fk| if fk > 0.0 { eps + fk.ln() } else { f64::NEG_INFINITY })
        .collect())
}

/// Logarithms `ln Z_0 .. ln Z_n` of the pinned partition function
/// `Z_m = sum_{k=1}^{m} e^eps f_k Z_{m-k}`, `Z_0 = 1`. Horizons no
/// renewal composition reaches carry `-inf`.
pub fn log_partition_function(
    eps: f64,
    law: &ReturnLaw,
    n: usize,
) -> Result<Vec<f64>, RenewalError> {
    let lw = log_weights(eps, law, n)?;
    let mut logz = Vec::with_capacity(n + 1);
    logz.push(0.0f64);
    for m in 1..=n {
        let mut max = f64::NEG_INFINITY;
        for k in 1..=m {
            let t = lw[k] + logz[m - k];
            if t > max {
                max = t;
            }
        }
        if max == f64::NEG_INFINITY {
            logz.push(f64::NEG_INFINITY);
            continue;
        }
        let mut acc = Neumaier::new();
        for k in 1..=m {
            let t = lw[k] + logz[m - k];
            if t > f64::NEG_INFINITY {
                acc.add((t - max).exp());
            }
        }
        logz.push(max + acc.total().ln());
    }
    Ok(logz)
}

/// Exact mean local time (number of returns) of the pinned walk at horizon
/// `n`, via the paired recursion `W_m = sum_k e^eps f_k (W_{m-k} + Z_{m-k})`
/// carried in logarithms; returns `W_n / Z_n`.
pub fn local_time_mean(eps: f64, law: &ReturnLaw, n: usize) -> Result<f64, RenewalError> {
    let lw = log_weights(eps, law, n)?;
    let logz = log_partition_function(eps, law, n)?;
    if logz[n] == f64::NEG_INFINITY {
        return Err(RenewalError::ZeroPartition(n));
    }
    let mut logw = Vec::with_capacity(n + 1);
    logw.push(f64::NEG_INFINITY);
    for m in 1..=n {
        let mut max = f64::NEG_INFINITY;
        for k in 1..=m {
            let t = lw[k] + log_add_exp(logw[m - k], logz[m - k]);
            if t > max {
                max = t;
            }
        }
        if max == f64::NEG_INFINITY {
            logw.push(f64::NEG_INFINITY);
            continue;
        }
        let mut acc = Neumaier::new();
        for k in 1..=m {
            let t = lw[k] + log_add_exp(logw[m - k], logz[m - k]);
            if t > f64::NEG_INFINITY {
                acc.add((t - max).exp());
            }
        }
        logw.push(max + acc.total().ln());
    }
    Ok((logw[n] - logz[n]).exp())
}

/// Free energy of the pinned walk at parameter `eps`: the root `f` of
/// `e^eps sum_k f_k e^{-f k} = 1`, from a truncated law.
#[derive(Debug, Clone, Copy)]
pub struct FreeEnergyResult {
    pub epsilon: f64,
    /// Root of the truncated equation (a lower bound for the true free
    /// energy); 0 when no positive root is certified at this truncation.
    pub f_value: f64,
    /// Final bisection bracket around `f_value`.
    pub bracket: (f64, f64),
    pub tolerance: f64,
    pub n_max: usize,
    /// Distance to the root of the tail-completed upper equation: the true
    /// free energy lies within `[f_value, f_value + tail_error]`.
    pub tail_error: f64,
    /// Whether the truncated law alone certifies a positive root. False means
    /// f_value = 0 with the truncation unable to distinguish a transient law
    /// from an undersampled recurrent one.
    pub certified: bool,
}

const FREE_ENERGY_TOL: f64 = 1e-13;

/// Tilted-series value `e^eps * sum_{k <= n_max} f_k e^{-f k} + e^eps *
/// extra * e^{-f (n_max + 1)}`; `extra = tail_mass` gives the upper
/// (tail-completed) variant, `extra = 0` the plain truncated one.
fn pinned_series(eps: f64, law: &ReturnLaw, f: f64, extra: f64) -> f64 {
    let mut acc = Neumaier::new();
    for (k, &fk) in law.f.iter().enumerate() {
        if fk > 0.0 {
            let e = f * k as f64;
            if e > 745.0 {
                break; // e^{-e} underflows; later terms vanish too
            }
            acc.add(fk * (-e).exp());
        }
    }
    if extra > 0.0 {
        let e = f * (law.horizon() + 1) as f64;
        if e <= 745.0 {
            acc.add(extra * (-e).exp());
        }
    }
    eps.exp() * acc.total()
}

fn bisect_pinned_root(eps: f64, law: &ReturnLaw, extra: f64) -> (f64, (f64, f64)) {
    let (mut lo, mut hi) = (0.0f64, eps + 1.0);
    while hi - lo > FREE_ENERGY_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pinned_series(eps, law, mid, extra) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi), (lo, hi))
}

pub fn pinning_free_energy(eps: f64, law: &ReturnLaw) -> Result<FreeEnergyResult, RenewalError> {
    validate_pinning(eps)?;
    let certified = pinned_series(eps, law, 0.0, 0.0) > 1.0;
    let (f_value, bracket) = if certified {
        bisect_pinned_root(eps, law, 0.0)
    } else {
        (0.0, (0.0, 0.0))
    };
    let f_hi = if pinned_series(eps, law, 0.0, law.tail_mass) > 1.0 {
        bisect_pinned_root(eps, law, law.tail_mass).0
    } else {
        0.0
    };
    Ok(FreeEnergyResult {
        epsilon: eps,
        f_value,
        bracket,
        tolerance: FREE_ENERGY_TOL,
        n_max: law.horizon(),
        tail_error: (f_hi - f_value).max(0.0),
        certified,
    })
}

/// The return law reweighted by the pinning: `q_k proportional to e^eps f_k
/// e^{-f(eps) k}`, normalized on its effective support. A probability law with
/// exponential tail whenever the free-energy root is certified.
#[derive(Debug, Clone)]
pub struct TiltedReturnLaw {
    pub epsilon: f64,
    pub f_value: f64,
    /// `q[k]`, k = 0..support (q[0] = 0).
    pub q: Vec<f64>,
    pub mean: f64,
}

pub fn tilted_return_law(eps: f64, law: &ReturnLaw) -> Result<TiltedReturnLaw, RenewalError> {
    let fe = pinning_free_energy(eps, law)?;
    if !fe.certified {
        return Err(RenewalError::UncertifiedRoot);
    }
    let scale = eps.exp();
    let mut q = vec![0.0f64];
    let mut cum = Neumaier::new();
    for (k, &fk) in law.f.iter().enumerate().skip(1) {
        let e = fe.f_value * k as f64;
        let w = if fk > 0.0 && e <= 745.0 {
            scale * fk * (-e).exp()
        } else {
            0.0
        };
        q.push(w);
        cum.add(w);
        if 1.0 - cum.total() < 1e-14 {
            break;
        }
    }
    let total = cum.total();
    for w in q.iter_mut() {
        *w /= total;
    }
    let mut mean = Neumaier::new();
    for (k, &w) in q.iter().enumerate() {
        mean.add(k as f64 * w);
    }
    Ok(TiltedReturnLaw {
        epsilon: eps,
        f_value: fe.f_value,
        q,
        mean: mean.total(),
    })
}

// ---------------------------------------------------------------------------
// Monte Carlo probes.
// ---------------------------------------------------------------------------

const PROBE_CHUNK: u64 = 4096;

/// Law-of-large-numbers probe for the renewal count under the tilted law:
/// simulates i.i.d. part sizes from `q`, counts renewals `L` up to horizon
/// `n`, and measures how often `L/n` strays from the predicted density
/// `1/mean` by at least `eta`.
#[derive(Debug, Clone)]
pub struct RenewalDensityProbe {
    /// Predicted long-run renewal density 1/mean.
    pub target: f64,
    /// Frequency of `|L/n - target| >= eta`.
    pub exceedance: Estimate,
}

pub fn tilted_renewal_density_probe(
    tilted: &TiltedReturnLaw,
    n: usize,
    eta: f64,
    replicas: u64,
    seed: u64,
) -> RenewalDensityProbe {
    let mut cdf = Vec::with_capacity(tilted.q.len());
    let mut acc = Neumaier::new();
    for &w in &tilted.q {
        acc.add(w);
        cdf.push(acc.total());
    }
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    let target = 1.0 / tilted.mean;
    let base = CounterRng::new(seed);
    let chunks = replicas.div_ceil(PROBE_CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * PROBE_CHUNK;
            let hi = (lo + PROBE_CHUNK).min(replicas);
            let mut local = 0u64;
            for replica in lo..hi {
                let mut rng = base.substream(replica).sequence();
                let mut elapsed = 0usize;
                let mut count = 0u64;
                loop {
                    let u = rng.next_uniform();
                    let k = cdf.partition_point(|&c| c <= u);
                    if k >= cdf.len() || elapsed + k > n {
                        break;
                    }
                    elapsed += k;
                    count += 1;
                }
                let density = count as f64 / n as f64;
                if (density - target).abs() >= eta {
                    local += 1;
                }
            }
            local
        })
        .sum();
    RenewalDensityProbe {
        target,
        exceedance: crate::estimate::HitAccumulator {
            hits,
            trials: replicas,
        }
        .estimate(seed),
    }
}

/// Monte Carlo probe of the local-time deviation event for the unpinned walk:
/// the joint event {L(n) >= ceil(delta n), X_n = 0}.
#[derive(Debug, Clone)]
pub struct LocalTimeTailProbe {
    pub delta: f64,
    pub n: usize,
    /// Joint frequency of the deviation event together with the return
    /// conditioning X_n = 0.
    pub joint: Estimate,
    pub event_hits: u64,
    pub return_hits: u64,
    /// Frequency of the deviation event among returning paths.
    pub conditional: f64,
    /// Decay rate -(1/n) log(conditional); absent when no event was observed
    /// (censored) or no path returned.
    pub rate: Option<f64>,
}

pub fn local_time_tail_probe(
    d: u32,
    delta: f64,
    n: usize,
    replicas: u64,
    seed: u64,
) -> Result<LocalTimeTailProbe, RenewalError> {
    if d != 1 && d != 2 {
        return Err(RenewalError::BadWalkDimension(d));
    }
    if !delta.is_finite() || !(0.0..1.0).contains(&delta) {
        return Err(RenewalError::BadFraction(delta));
    }
    let threshold = (delta * n as f64).ceil() as u64;
    let base = CounterRng::new(seed);
    let chunks = replicas.div_ceil(PROBE_CHUNK);
    let (event_hits, return_hits) = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * PROBE_CHUNK;
            let hi = (lo + PROBE_CHUNK).min(replicas);
            let (mut events, mut returns) = (0u64, 0u64);
            for replica in lo..hi {
                let mut rng = base.substream(replica).sequence();
                let (returned, visits) = if d == 1 {
                    walk_line(&mut rng, n)
                } else {
                    walk_plane(&mut rng, n)
                };
                if returned {
                    returns += 1;
                    if visits >= threshold {
                        events += 1;
                    }
                }
            }
            (events, returns)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    let conditional = if return_hits > 0 {
        event_hits as f64 / return_hits as f64
    } else {
        0.0
    };
    let rate = if event_hits > 0 && return_hits > 0 {
        Some(-conditional.ln() / n as f64)
    } else {
        None
    };
    Ok(LocalTimeTailProbe {
        delta,
        n,
        joint: crate::estimate::HitAccumulator {
            hits: event_hits,
            trials: replicas,
        }
        .estimate(seed),
        event_hits,
        return_hits,
        conditional,
        rate,
    })
}

/// One simple-random-walk path on the integers: returns (X_n == 0, number of
/// visits to the origin in 1..=n). One random bit per step.
fn walk_line(rng: &mut crate::rng::SeqRng, n: usize) -> (bool, u64) {
    let mut pos = 0i64;
    let mut visits = 0u64;
    let mut word = 0u64;
    for step in 0..n {
        if step % 64 == 0 {
            word = rng.next_u64();
        }
        pos += if word >> (step % 64) & 1 == 1 { 1 } else { -1 };
        if pos == 0 {
            visits += 1;
        }
    }
    (pos == 0, visits)
}

/// One simple-random-walk path on the square lattice: two random bits per
/// step select among the four unit moves.
fn walk_plane(rng: &mut crate::rng::SeqRng, n: usize) -> (bool, u64) {
    let (mut x, mut y) = (0i64, 0i64);
    let mut visits = 0u64;
    let mut word = 0u64;
    for step in 0..n {
        if step % 32 == 0 {
            word = rng.next_u64();
        }
        match word >> (2 * (step % 32)) & 3 {
            0 => x += 1,
            1 => x -= 1,
            2 => y += 1,
            _ => y -= 1,
        }
        if x == 0 && y == 0 {
            visits += 1;
        }
    }
    (x == 0 && y == 0, visits)
}

// ---------------------------------------------------------------------------
// Defect free-energy bound φ(ε).
// ---------------------------------------------------------------------------

/// The root φ of `c (e^eps - 1) sum_l l^{-(d-1)/2} e^{-φ l} = 1` together
/// with its small-eps diagnostic: `φ/ε²` for d = 2, `ε·ln φ` for d = 3.
#[derive(Debug, Clone, Copy)]
pub struct DefectBound {
    pub epsilon: f64,
    pub d: u32,
    pub c: f64,
    pub phi: f64,
    pub diagnostic: f64,
}

/// `sum_{l>=1} s^l / l^alpha` for s in (0, 1), by direct summation with a
/// certified geometric tail cutoff at relative 10^-13. Terms are produced in
/// blocks: a tight inner loop with a running power (specialized to the square
/// root for alpha = 1/2, the case the bound actually exercises), then a
/// resynchronization of the power against drift and the tail check.
fn polylog_sum(alpha: f64, s: f64) -> Result<f64, RenewalError> {
    const BUDGET: u64 = 400_000_000;
    const BLOCK: u64 = 256;
    let mut acc = Neumaier::new();
    let mut l: u64 = 0;
    let mut spow = 1.0f64; // s^l
    loop {
        let mut partial = 0.0;
        if alpha == 0.5 {
            for _ in 0..BLOCK {
                l += 1;
                spow *= s;
                partial += spow / (l as f64).sqrt();
            }
        } else if alpha == 1.0 {
            for _ in 0..BLOCK {
                l += 1;
                spow *= s;
                partial += spow / l as f64;
            }
        } else {
            for _ in 0..BLOCK {
                l += 1;
                spow *= s;
                partial += spow / (l as f64).powf(alpha);
            }
        }
        acc.add(partial);
        spow = s.powi(l as i32); // l stays far below i32::MAX (budget-capped)
        // Tail bound: sum_{j>l} s^j j^-alpha <= s^{l+1} (l+1)^-alpha / (1-s).
        let tail = spow * s / ((l + 1) as f64).powf(alpha) / (1.0 - s);
        if tail <= 1e-13 * acc.total() {
            return Ok(acc.total());
        }
        if l >= BUDGET {
            return Err(RenewalError::SeriesBudgetExceeded(s));
        }
    }
}

pub fn defect_bound_phi(eps: f64, d: u32, c: f64) -> Result<DefectBound, RenewalError> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(RenewalError::NonPositiveEpsilon(eps));
    }
    if !c.is_finite() || c <= 0.0 {
        return Err(RenewalError::BadConstant(c));
    }
    let target = 1.0 / (c * eps.exp_m1());
    let phi = match d {
        3 => {
            // alpha = 1: the series is exactly -ln(1 - s), so the root is in
            // closed form: phi = -ln(1 - e^{-target}).
            -(-(-target).exp()).ln_1p()
        }
        2 => {
            // alpha = 1/2: direct summation; bracket around the leading-order
            // scale pi/target^2, then bisect on phi.
            let series = |phi: f64| polylog_sum(0.5, (-phi).exp());
            let guess = std::f64::consts::PI / (target * target);
            let mut lo = guess / 16.0;
            while series(lo)? < target {
                lo /= 16.0;
                if lo < 1e-9 {
                    return Err(RenewalError::SeriesBudgetExceeded((-lo).exp()));
                }
            }
            let mut hi = guess * 16.0;
            while series(hi)? > target {
                hi *= 16.0;
            }
            while hi - lo > 1e-12 * lo {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if series(mid)? >= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
        other => return Err(RenewalError::BadBoundDimension(other)),
    };
    let diagnostic = if d == 2 {
        phi / (eps * eps)
    } else {
        eps * phi.ln()
    };
    Ok(DefectBound {
        epsilon: eps,
        d,
        c,
        phi,
        diagnostic,
    })
}
