//! Small numeric utilities shared across modules: compensated summation,
//! bisection, and adaptive quadrature.

/// Neumaier-compensated accumulator (Kahan summation with the improved
/// correction term). Errors stay at a few ulps of the true total regardless of
/// the number of terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sum of a slice with Neumaier compensation, in index order.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    let mut acc = Neumaier::new();
    for &x in xs {
        acc.add(x);
    }
    acc.total()
}

/// Dot product of two equal-length slices, organized for speed without giving
/// up determinism: eight independent lanes inside fixed 4096-element chunks
/// (throughput-bound instead of add-latency-bound), chunk subtotals combined
/// with Neumaier compensation. The summation tree is fixed by the input
/// length alone, so results are bit-identical across runs and thread counts.
pub fn chunked_dot(a: &[f64], b: &[f64]) -> f64 {
    const CHUNK: usize = 4096;
    const LANES: usize = 8;
    assert_eq!(a.len(), b.len());
    let mut acc = Neumaier::new();
    for (ca, cb) in a.chunks(CHUNK).zip(b.chunks(CHUNK)) {
        let mut lanes = [0.0f64; LANES];
        let mut ia = ca.chunks_exact(LANES);
        let mut ib = cb.chunks_exact(LANES);
        for (ga, gb) in ia.by_ref().zip(ib.by_ref()) {
            for l in 0..LANES {
                lanes[l] += ga[l] * gb[l];
            }
        }
        let mut tail = 0.0;
        for (&x, &y) in ia.remainder().iter().zip(ib.remainder()) {
            tail += x * y;
        }
        let quads = [
            (lanes[0] + lanes[4]) + (lanes[2] + lanes[6]),
            (lanes[1] + lanes[5]) + (lanes[3] + lanes[7]),
        ];
        acc.add((quads[0] + quads[1]) + tail);
    }
    acc.total()
}

/// Plain bisection for a root of `f` on `[lo, hi]`, where `f(lo)` and `f(hi)`
/// have opposite signs. Runs until the bracket is narrower than `tol` (absolute)
/// or 200 iterations. Returns the final bracket.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let flo = f(lo);
    debug_assert!(flo * f(hi) <= 0.0, "bisect requires a sign change");
    let lo_negative = flo < 0.0;
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // bracket at floating-point resolution
        }
        let fm = f(mid);
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`. Returns `(integral, error_bound)` where the bound is the accumulated
/// Richardson error estimate.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: FnMut(f64) -> f64>(
        f: &mut F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
        err: &mut f64,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            *err += delta.abs() / 15.0;
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, err)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, err)
    }

    if a == b {
        return (0.0, 0.0);
    }
    let fa = f(a);
    let fm = f(0.5 * (a + b));
    let fb = f(b);
    let whole = simpson(fa, fm, fb, a, b);
    let mut err = 0.0;
    let value = recurse(f, a, b, fa, fm, fb, whole, tol, 40, &mut err);
    (value, err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_handles_mixed_magnitudes() {
        let mut acc = Neumaier::new();
        acc.add(1.0);
        for _ in 0..1000 {
            acc.add(1e-18);
        }
        assert_eq!(acc.total(), 1.0 + 1000.0 * 1e-18);
    }

    #[test]
    fn chunked_dot_matches_plain_dot() {
        // Lengths straddling the lane and chunk boundaries.
        for len in [0usize, 1, 7, 8, 9, 4095, 4096, 4097, 10_000] {
            let a: Vec<f64> = (0..len).map(|i| ((i * 37 + 11) % 101) as f64 / 101.0).collect();
            let b: Vec<f64> = (0..len).map(|i| ((i * 53 + 5) % 97) as f64 / 97.0).collect();
            let mut exact = Neumaier::new();
            for i in 0..len {
                exact.add(a[i] * b[i]);
            }
            let got = chunked_dot(&a, &b);
            assert!(
                (got - exact.total()).abs() <= 1e-12 * exact.total().abs().max(1.0),
                "len {len}: {got} vs {}",
                exact.total()
            );
        }
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let (lo, hi) = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        let mid = 0.5 * (lo + hi);
        assert!((mid - 2.0f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn simpson_integrates_inverse() {
        // Integral of 1/x over [1, e] is exactly 1.
        let (v, err) = adaptive_simpson(&mut |x: f64| 1.0 / x, 1.0, std::f64::consts::E, 1e-12);
        assert!((v - 1.0).abs() < 5e-12, "v = {v}, err = {err}");
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let (v, _) = adaptive_simpson(&mut |x: f64| x * x * x - 2.0 * x, 0.0, 2.0, 1e-13);
        assert!((v - 0.0).abs() < 1e-13);
    }
}
