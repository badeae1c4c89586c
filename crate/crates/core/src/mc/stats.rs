use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

use crate::error::{Error, Result};

/// Replications per independent substream.
pub const CHUNK: usize = 4096;

/// Running mean and variance (Welford), mergeable (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (n - 1 denominator).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl Serialize for RunningStats {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = serializer.serialize_struct("RunningStats", 3)?;
        st.serialize_field("count", &self.count())?;
        st.serialize_field("mean", &self.mean())?;
        st.serialize_field("std_dev", &self.std_dev())?;
        st.end()
    }
}

/// A Monte Carlo point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub reps: u64,
    pub seed: u64,
}

impl McEstimate {
    /// Whether `value` lies within `k` standard errors.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.estimate - value).abs() <= k * self.std_error
    }
}

/// Independent generator for chunk `index` of a run seeded with `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Averages `reps` draws of `sample`, split into fixed chunks that run in
/// parallel on their own substreams and merge in chunk order, so the result
/// depends only on `seed`.
pub fn replicate<F>(reps: usize, seed: u64, sample: F) -> McEstimate
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks = reps.div_ceil(CHUNK);
    let partial: Vec<RunningStats> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64);
            let mut stats = RunningStats::default();
            let len = CHUNK.min(reps - c * CHUNK);
            for _ in 0..len {
                stats.push(sample(&mut rng));
            }
            stats
        })
        .collect();
    let mut total = RunningStats::default();
    for p in &partial {
        total.merge(p);
    }
    McEstimate { estimate: total.mean(), std_error: total.std_error(), reps: reps as u64, seed }
}

/// Result of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
    pub samples: usize,
}

impl ChiSquareTest {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Tests whether integer samples follow Poisson(`mean`). Adjacent bins are
/// merged until every expected count is at least 5; the last bin collects
/// the upper tail.
pub fn poisson_chi_square(samples: &[u32], mean: f64) -> Result<ChiSquareTest> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::HorizonTooShort { samples: 0, required: 1 });
    }
    let max = samples.iter().copied().max().unwrap_or(0) as usize;
    let mut observed = vec![0usize; max + 1];
    for &k in samples {
        observed[k as usize] += 1;
    }
    let pmf = |k: usize| -> f64 {
        if mean == 0.0 {
            if k == 0 { 1.0 } else { 0.0 }
        } else {
            Poisson::new(mean).map(|d| d.pmf(k as u64)).unwrap_or(0.0)
        }
    };

    // (observed, expected) per merged bin
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp, mut cum) = (0.0, 0.0, 0.0);
    let mut k = 0usize;
    loop {
        let p = pmf(k);
        obs += observed.get(k).copied().unwrap_or(0) as f64;
        exp += n as f64 * p;
        cum += p;
        k += 1;
        let tail = (1.0 - cum).max(0.0) * n as f64;
        if exp >= 5.0 && tail >= 5.0 {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
        if tail < 5.0 {
            // everything from k on joins the current bin
            obs += observed.iter().skip(k).sum::<usize>() as f64;
            exp += tail;
            if exp >= 5.0 || bins.is_empty() {
                bins.push((obs, exp));
            } else {
                let last = bins.last_mut().unwrap();
                last.0 += obs;
                last.1 += exp;
            }
            break;
        }
    }
    let statistic: f64 = bins
        .iter()
        .filter(|(_, e)| *e > 0.0)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = bins.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).map(|d| d.cdf(statistic)).unwrap_or(0.0)
    };
    Ok(ChiSquareTest { statistic, dof, p_value, bins: bins.len(), samples: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::Distribution;

    #[test]
    fn merged_stats_match_sequential() {
        let data: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut all = RunningStats::default();
        data.iter().for_each(|x| all.push(*x));
        let mut a = RunningStats::default();
        let mut b = RunningStats::default();
        data[..300].iter().for_each(|x| a.push(*x));
        data[300..].iter().for_each(|x| b.push(*x));
        a.merge(&b);
        assert!((a.mean() - all.mean()).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-10);
        let mean = data.iter().sum::<f64>() / 1000.0;
        let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0;
        assert!((all.variance() - var).abs() < 1e-10);
    }

    #[test]
    fn replicate_is_deterministic() {
        let f = |rng: &mut ChaCha8Rng| rng.random::<f64>();
        let a = replicate(10_000, 7, f);
        let b = replicate(10_000, 7, f);
        assert_eq!(a, b);
        assert!(a.covers(0.5, 4.0));
        assert_ne!(replicate(10_000, 8, f).estimate, a.estimate);
    }

    #[test]
    fn chi_square_accepts_poisson_and_rejects_shifted() {
        let mut rng = substream(11, 0);
        let d = rand_distr::Poisson::new(4.0).unwrap();
        let samples: Vec<u32> = (0..5000).map(|_| d.sample(&mut rng) as u32).collect();
        let ok = poisson_chi_square(&samples, 4.0).unwrap();
        assert!(ok.passes(0.01), "{ok:?}");
        let bad = poisson_chi_square(&samples, 4.5).unwrap();
        assert!(!bad.passes(0.01), "{bad:?}");
        let doubled: Vec<u32> = samples.iter().map(|k| k * 2).collect();
        assert!(!poisson_chi_square(&doubled, 8.0).unwrap().passes(0.01));
    }

    #[test]
    fn chi_square_zero_mean() {
        let t = poisson_chi_square(&[0; 50], 0.0).unwrap();
        assert_eq!(t.dof, 0);
        assert!(t.passes(0.01));
    }
}
