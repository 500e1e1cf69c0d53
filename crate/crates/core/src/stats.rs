//! Streaming moment accumulators and deterministic chunked Monte Carlo.

use rayon::prelude::*;

use crate::rng::{Rng, RngStream};

/// Running mean and variance (Welford), mergeable in a fixed order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    /// z-score of the mean against `target`. Differences within rounding
    /// (1e-12 relative to the target's scale) score 0, so estimators that are
    /// constant up to round-off do not produce spurious large scores.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = self.mean - target;
        if diff.abs() <= 1e-12 * (1.0 + target.abs()) {
            return 0.0;
        }
        let se = self.se();
        if se > 0.0 {
            diff / se
        } else {
            f64::INFINITY.copysign(diff)
        }
    }
}

/// A fixed-length bank of [`Moments`].
#[derive(Clone, Debug, PartialEq)]
pub struct MomentsVec(pub Vec<Moments>);

impl MomentsVec {
    pub fn new(len: usize) -> Self {
        MomentsVec(vec![Moments::new(); len])
    }

    pub fn push(&mut self, xs: &[f64]) {
        for (m, &x) in self.0.iter_mut().zip(xs) {
            m.push(x);
        }
    }

    pub fn merge(&mut self, other: &MomentsVec) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.merge(b);
        }
    }
}

/// Draw budget per chunk in [`chunked`].
pub const DEFAULT_CHUNK: usize = 4096;

/// Splits `total` draws into chunks of `chunk` and evaluates `work(rng, count)`
/// for each chunk on the rayon pool. Chunk `c` always uses `stream.child(c)`
/// and results are returned in chunk order, so the output does not depend on
/// the number of worker threads.
pub fn chunked<T, F>(stream: RngStream, total: usize, chunk: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Rng, usize) -> T + Sync + Send,
{
    chunked_range(stream, total, chunk, |rng, _, count| work(rng, count))
}

/// As [`chunked`], also passing the index of the chunk's first draw.
pub fn chunked_range<T, F>(stream: RngStream, total: usize, chunk: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Rng, usize, usize) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = total.div_ceil(chunk);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * chunk;
            let count = chunk.min(total - start);
            let mut rng = stream.child(c as u64).rng();
            work(&mut rng, start, count)
        })
        .collect()
}

/// Runs `f` on a dedicated pool with `workers` threads (0 means rayon's
/// default). Results of the crate's runners do not depend on this value.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool construction");
    pool.install(f)
}

/// Worker count from `ISOSPEC_THREADS`, 0 (rayon default) when unset.
pub fn workers_from_env() -> usize {
    std::env::var("ISOSPEC_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, -2.0, 7.5, 0.25, 3.0];
        let mut m = Moments::new();
        xs.iter().for_each(|&x| m.push(x));
        let mean = xs.iter().sum::<f64>() / 6.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert!((m.mean() - mean).abs() < 1e-14);
        assert!((m.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn merge_equals_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin() * 10.0).collect();
        let mut all = Moments::new();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Moments::new();
        let mut b = Moments::new();
        xs[..37].iter().for_each(|&x| a.push(x));
        xs[37..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean() - all.mean()).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-10);
        assert_eq!(a.count(), 100);
    }

    #[test]
    fn chunked_is_worker_independent() {
        let run = || {
            chunked(RngStream::new(1, 2), 10_000, 333, |rng, count| {
                (0..count).map(|_| rng.random::<f64>()).sum::<f64>()
            })
        };
        let one = with_workers(1, run);
        let four = with_workers(4, run);
        assert_eq!(one, four);
        assert_eq!(one.len(), 31);
    }
}
