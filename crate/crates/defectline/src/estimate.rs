//! Point estimates and mergeable accumulators.
//!
//! Monte Carlo work is sharded into chunks that each produce an accumulator;
//! accumulators merge associatively and commutatively (on sums, sums of squares,
//! and counts — integer hit counts for frequency estimates), so pooled results do
//! not depend on worker count or merge order.

/// A point estimate together with its uncertainty and provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
    /// Seed of the run that produced this estimate.
    pub seed: u64,
}

/// Accumulator for a Bernoulli frequency: exact integer hits over trials.
/// Merging is exact (integer addition), hence bit-identical for any merge order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HitAccumulator {
    pub hits: u64,
    pub trials: u64,
}

impl HitAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, hit: bool) {
        self.hits += hit as u64;
        self.trials += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.hits += other.hits;
        self.trials += other.trials;
    }

    pub fn frequency(&self) -> f64 {
        if self.trials == 0 {
            return f64::NAN;
        }
        self.hits as f64 / self.trials as f64
    }

    /// Binomial standard error sqrt(p(1-p)/n).
    pub fn stderr(&self) -> f64 {
        if self.trials == 0 {
            return f64::NAN;
        }
        let p = self.frequency();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    pub fn estimate(&self, seed: u64) -> Estimate {
        Estimate {
            value: self.frequency(),
            stderr: self.stderr(),
            n_samples: self.trials,
            seed,
        }
    }
}

/// Accumulator for a mean of real-valued samples: (sum, sum of squares, count).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanAccumulator {
    pub sum: f64,
    pub sumsq: f64,
    pub count: u64,
}

impl MeanAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.sumsq += x * x;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.sum += other.sum;
        self.sumsq += other.sumsq;
        self.count += other.count;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.sum / self.count as f64
    }

    /// Standard error of the mean, from the unbiased sample variance.
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n = self.count as f64;
        let mean = self.mean();
        let var = ((self.sumsq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }

    pub fn estimate(&self, seed: u64) -> Estimate {
        Estimate {
            value: self.mean(),
            stderr: self.stderr(),
            n_samples: self.count,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn hit_merge_is_exact_and_order_free() {
        let r = CounterRng::new(11);
        let flags: Vec<bool> = (0..10_000).map(|k| r.uniform_at(k) < 0.37).collect();

        let mut whole = HitAccumulator::new();
        for &f in &flags {
            whole.push(f);
        }

        // Merge chunks in forward and reverse order: identical integers.
        let chunk_accs: Vec<HitAccumulator> = flags
            .chunks(997)
            .map(|c| {
                let mut a = HitAccumulator::new();
                for &f in c {
                    a.push(f);
                }
                a
            })
            .collect();
        let mut fwd = HitAccumulator::new();
        for a in &chunk_accs {
            fwd.merge(a);
        }
        let mut rev = HitAccumulator::new();
        for a in chunk_accs.iter().rev() {
            rev.merge(a);
        }
        assert_eq!(whole, fwd);
        assert_eq!(whole, rev);
    }

    #[test]
    fn mean_merge_matches_whole_to_relative_1e13() {
        let r = CounterRng::new(5);
        let xs: Vec<f64> = (0..5000).map(|k| r.uniform_at(k) * 3.0 - 1.0).collect();
        let mut whole = MeanAccumulator::new();
        for &x in &xs {
            whole.push(x);
        }
        let mut merged = MeanAccumulator::new();
        for c in xs.chunks(313) {
            let mut a = MeanAccumulator::new();
            for &x in c {
                a.push(x);
            }
            merged.merge(&a);
        }
        assert_eq!(whole.count, merged.count);
        assert!((whole.sum - merged.sum).abs() <= 1e-13 * whole.sum.abs().max(1.0));
        assert!((whole.sumsq - merged.sumsq).abs() <= 1e-13 * whole.sumsq.abs().max(1.0));
        assert!((whole.mean() - merged.mean()).abs() <= 1e-13);
        assert!((whole.stderr() - merged.stderr()).abs() <= 1e-13);
    }

    #[test]
    fn binomial_stderr_formula() {
        let mut a = HitAccumulator::new();
        for i in 0..100 {
            a.push(i < 25);
        }
        let e = a.estimate(99);
        assert_eq!(e.value, 0.25);
        assert_eq!(e.n_samples, 100);
        assert_eq!(e.seed, 99);
        assert!((e.stderr - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mean_accumulator_known_values() {
        let mut a = MeanAccumulator::new();
        for x in [1.0, 2.0, 3.0, 4.0] {
            a.push(x);
        }
        assert_eq!(a.mean(), 2.5);
        // Sample variance of {1,2,3,4} is 5/3; se = sqrt(5/3/4).
        assert!((a.stderr() - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
