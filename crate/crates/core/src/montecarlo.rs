use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Paths per work unit. Fixed so that results do not depend on the thread count.
pub const BATCH_SIZE: u64 = 1024;

/// Counter-based random stream: one independent ChaCha8 stream per path index.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { rng }
    }

    /// Standard normal variate.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform variate on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    #[inline]
    pub fn bernoulli(&mut self, prob: f64) -> bool {
        self.uniform() < prob
    }
}

/// Derives a sub-seed for an independent experiment component.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ label.rotate_left(17));
    rng.set_stream(label);
    rng.random()
}

/// Accumulators that can be combined.
pub trait Merge {
    fn merge(&mut self, other: Self);
}

/// Running mean and variance (Welford), mergeable (Chan et al.).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStat {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStat {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
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

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    /// Two-sided interval `mean +- z * stderr`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        let h = z * self.stderr();
        (self.mean - h, self.mean + h)
    }
}

impl Merge for RunningStat {
    fn merge(&mut self, other: Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other;
            return;
        }
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let n = n1 + n2;
        let delta = other.mean - self.mean;
        self.mean += delta * n2 / n;
        self.m2 += other.m2 + delta * delta * n1 * n2 / n;
        self.count += other.count;
    }
}

impl FromIterator<f64> for RunningStat {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStat::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

impl<T: Merge> Merge for Vec<T> {
    /// Element-wise merge; `other` must have the same length unless `self` is empty.
    fn merge(&mut self, other: Self) {
        if self.is_empty() {
            *self = other;
            return;
        }
        assert_eq!(self.len(), other.len(), "merging accumulators of different shapes");
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

impl Merge for u64 {
    fn merge(&mut self, other: Self) {
        *self += other;
    }
}

impl Merge for f64 {
    fn merge(&mut self, other: Self) {
        *self += other;
    }
}

impl<A: Merge, B: Merge> Merge for (A, B) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
    }
}

impl<A: Merge, B: Merge, C: Merge> Merge for (A, B, C) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
        self.2.merge(other.2);
    }
}

/// Ordered sample collection; merging concatenates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Samples(pub Vec<f64>);

impl Merge for Samples {
    fn merge(&mut self, other: Self) {
        self.0.extend(other.0);
    }
}

impl Samples {
    /// Kolmogorov-Smirnov distance between the empirical law and `cdf`.
    pub fn ks_distance<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        let mut xs = self.0.clone();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
            let f = cdf(x);
            d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
    }
}

/// Runs `n_paths` independent paths in parallel and merges their accumulators.
///
/// Path `i` always receives stream `i` of `seed`; batches are merged in index
/// order, so the result is bit-identical for any number of threads.
pub fn run_paths<A, I, F>(n_paths: u64, seed: u64, init: I, path: F) -> A
where
    A: Merge + Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &mut RngStream, u64) + Sync,
{
    let n_batches = n_paths.div_ceil(BATCH_SIZE);
    let partials: Vec<A> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut acc = init();
            let start = b * BATCH_SIZE;
            let end = (start + BATCH_SIZE).min(n_paths);
            for i in start..end {
                let mut rng = RngStream::new(seed, i);
                path(&mut acc, &mut rng, i);
            }
            acc
        })
        .collect();
    let mut total = init();
    for part in partials {
        total.merge(part);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ks_distance_of_uniform_grid() {
        let s = Samples((0..100).map(|i| (i as f64 + 0.5) / 100.0).collect());
        assert!((s.ks_distance(|x| x.clamp(0.0, 1.0)) - 0.005).abs() < 1e-12);
        let shifted = Samples(vec![0.9; 10]);
        assert!((shifted.ks_distance(|x| x.clamp(0.0, 1.0)) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<f64> = (0..4).map(|_| RngStream::new(7, 3).uniform()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut s1 = RngStream::new(7, 3);
        let mut s2 = RngStream::new(7, 4);
        assert_ne!(s1.uniform(), s2.uniform());
    }

    #[test]
    fn normal_moments() {
        let stat: RunningStat = {
            let mut rng = RngStream::new(1, 0);
            (0..200_000).map(|_| rng.normal()).collect()
        };
        assert!(stat.mean().abs() < 0.01);
        assert!((stat.variance() - 1.0).abs() < 0.01);
    }

    #[test]
    fn run_paths_is_thread_count_invariant() {
        let job = || {
            run_paths(5_000, 42, RunningStat::new, |acc, rng, _| {
                acc.push(rng.normal() + rng.uniform());
            })
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(job);
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(job);
        assert_eq!(one, four);
        assert_eq!(one.count(), 5_000);
    }

    fn two_pass(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    proptest! {
        #[test]
        fn merge_matches_two_pass(
            a in proptest::collection::vec(-1e3f64..1e3, 1..50),
            b in proptest::collection::vec(-1e3f64..1e3, 1..50),
            c in proptest::collection::vec(-1e3f64..1e3, 1..50),
        ) {
            let sa: RunningStat = a.iter().copied().collect();
            let sb: RunningStat = b.iter().copied().collect();
            let sc: RunningStat = c.iter().copied().collect();
            let mut left = sa;
            left.merge(sb);
            left.merge(sc);
            let mut bc = sb;
            bc.merge(sc);
            let mut right = sa;
            right.merge(bc);
            let all: Vec<f64> = a.iter().chain(&b).chain(&c).copied().collect();
            let (mean, var) = two_pass(&all);
            let scale = all.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            prop_assert_eq!(left.count(), all.len() as u64);
            prop_assert!((left.mean() - right.mean()).abs() <= 1e-12 * scale);
            prop_assert!((left.variance() - right.variance()).abs() <= 1e-12 * scale * scale);
            prop_assert!((left.mean() - mean).abs() <= 1e-12 * scale);
            prop_assert!((left.variance() - var).abs() <= 1e-12 * scale * scale);
        }
    }
}
